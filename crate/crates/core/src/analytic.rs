//! Closed-form correlation algebra for the two-variant local source.
//!
//! Everything here is a pure function of angles (radians). The source is
//! encoded as two anti-correlated Jones vectors per variant, each side passes
//! through a polarizing beam splitter modelled by a 2×2 rotation, and the
//! correlation is the ratio of two fourth-order field sums.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use crate::error::AnalyticError;

/// Measurement station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "L",
            Side::Right => "R",
        })
    }
}

/// Which of the two anti-correlated source configurations a pulse pair
/// carries. `Zero` sends vertical left / horizontal right, `One` the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Zero,
    One,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Zero, Variant::One];

    pub fn bit(self) -> u8 {
        match self {
            Variant::Zero => 0,
            Variant::One => 1,
        }
    }

    pub fn flipped(self) -> Variant {
        match self {
            Variant::Zero => Variant::One,
            Variant::One => Variant::Zero,
        }
    }
}

impl TryFrom<u8> for Variant {
    type Error = AnalyticError;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            0 => Ok(Variant::Zero),
            1 => Ok(Variant::One),
            other => Err(AnalyticError::InvalidVariant(other)),
        }
    }
}

/// Real two-component field; component 1 is the horizontal axis (first PBS
/// port), component 2 the vertical axis (second PBS port).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jones2 {
    pub c1: f64,
    pub c2: f64,
}

impl Jones2 {
    pub fn new(c1: f64, c2: f64) -> Self {
        Jones2 { c1, c2 }
    }

    /// Component by 1-based index, matching the PBS port numbering.
    pub fn component(&self, i: usize) -> f64 {
        match i {
            1 => self.c1,
            2 => self.c2,
            _ => panic!("Jones2 component index must be 1 or 2, got {i}"),
        }
    }

    pub fn dot(&self, other: &Jones2) -> f64 {
        self.c1 * other.c1 + self.c2 * other.c2
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }
}

/// 2×2 real matrix, row-major.
///
/// The beam-splitter operator is usually called a projector in the
/// literature this follows, but it is an orthogonal rotation (det 1), not an
/// idempotent projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot2 {
    pub m: [[f64; 2]; 2],
}

impl Rot2 {
    pub fn identity() -> Self {
        Rot2 {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn mul(&self, rhs: &Rot2) -> Rot2 {
        let a = &self.m;
        let b = &rhs.m;
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Rot2 { m: out }
    }

    pub fn apply(&self, v: &Jones2) -> Jones2 {
        Jones2 {
            c1: self.m[0][0] * v.c1 + self.m[0][1] * v.c2,
            c2: self.m[1][0] * v.c1 + self.m[1][1] * v.c2,
        }
    }

    pub fn transpose(&self) -> Rot2 {
        Rot2 {
            m: [[self.m[0][0], self.m[1][0]], [self.m[0][1], self.m[1][1]]],
        }
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn max_abs_diff(&self, other: &Rot2) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        worst
    }
}

/// Beam-splitter operator at orientation `z`: `[[cos z, sin z], [-sin z, cos z]]`.
pub fn projector(z: f64) -> Rot2 {
    let (s, c) = z.sin_cos();
    Rot2 {
        m: [[c, s], [-s, c]],
    }
}

/// Left source vector `(n, 1 - n)`.
pub fn source_left(n: Variant) -> Jones2 {
    match n {
        Variant::Zero => Jones2::new(0.0, 1.0),
        Variant::One => Jones2::new(1.0, 0.0),
    }
}

/// Right source vector `(1 - n, n)`, the component-wise swap of the left one.
pub fn source_right(n: Variant) -> Jones2 {
    match n {
        Variant::Zero => Jones2::new(1.0, 0.0),
        Variant::One => Jones2::new(0.0, 1.0),
    }
}

/// PBS output amplitudes on one side: `projector(z) · source(n)`.
pub fn field(side: Side, z: f64, n: Variant) -> Jones2 {
    let source = match side {
        Side::Left => source_left(n),
        Side::Right => source_right(n),
    };
    projector(z).apply(&source)
}

// Both sums follow the executed listing: the summand is evaluated at
// (i, j, i, j) while k and l still run over {1, 2}, so every (i, j) term is
// counted four times.
fn fourth_order_sum(zl: f64, zr: f64, sign: f64, shift: f64) -> f64 {
    let mut total = 0.0;
    for c in 0..2 {
        let weight = sign.powi(c);
        let zr_c = zr + shift * f64::from(c) * FRAC_PI_2;
        for n in Variant::BOTH {
            let el = field(Side::Left, zl, n);
            let er = field(Side::Right, zr_c, n);
            for _l in 1..=2 {
                for _k in 1..=2 {
                    for j in 1..=2 {
                        for i in 1..=2 {
                            total += weight
                                * el.component(i)
                                * er.component(j)
                                * er.component(i)
                                * el.component(j);
                        }
                    }
                }
            }
        }
    }
    total
}

/// Numerator sum; equals `-8 cos(2 zl - 2 zr)`.
pub fn correlation_numerator(zl: f64, zr: f64) -> f64 {
    fourth_order_sum(zl, zr, -1.0, 1.0)
}

/// Denominator sum (`(+1)^c`, right angle shifted by `-c·π/2`); equals 8.
pub fn correlation_denominator(zl: f64, zr: f64) -> f64 {
    fourth_order_sum(zl, zr, 1.0, -1.0)
}

/// Ideal correlation `-cos(2 (zl - zr))`, computed as numerator over denominator.
pub fn correlation(zl: f64, zr: f64) -> f64 {
    correlation_numerator(zl, zr) / correlation_denominator(zl, zr)
}

/// Split of the expanded numerator square into its photoelectric terms and
/// the four-field cross term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTermSplit {
    /// `cos²zl·sin²zr + cos²zr·sin²zl`
    pub standard_terms: f64,
    /// `-2·cos zl·sin zr·cos zr·sin zl`
    pub cross_term: f64,
}

pub fn cross_term_decomposition(zl: f64, zr: f64) -> CrossTermSplit {
    let (sl, cl) = zl.sin_cos();
    let (sr, cr) = zr.sin_cos();
    CrossTermSplit {
        standard_terms: cl * cl * sr * sr + cr * cr * sl * sl,
        cross_term: -2.0 * cl * sr * cr * sl,
    }
}

/// Ratio of legitimate coincidences to the ideal-window count; 1 is ideal.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExcessFactor(f64);

impl ExcessFactor {
    pub const IDEAL: ExcessFactor = ExcessFactor(1.0);

    /// Rejects non-finite and non-positive values. Values in (0, 1) are
    /// accepted but not physical; see [`ExcessFactor::is_physical`].
    pub fn new(y: f64) -> Result<Self, AnalyticError> {
        if !y.is_finite() || y <= 0.0 {
            return Err(AnalyticError::InvalidExcessFactor(y));
        }
        Ok(ExcessFactor(y))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_physical(self) -> bool {
        self.0 >= 1.0
    }
}

/// Correlation with the cross term weakened by the excess factor `y`.
///
/// Five-term form: `-cos²zl cos²zr + cos²zl sin²zr - 4 cos zl cos zr sin zl sin zr / y
/// + cos²zr sin²zl - sin²zl sin²zr`, i.e. `-cos2zl cos2zr - sin2zl sin2zr / y`.
pub fn cor(zl: f64, zr: f64, y: ExcessFactor) -> f64 {
    let (sl, cl) = zl.sin_cos();
    let (sr, cr) = zr.sin_cos();
    let (cl2, sl2, cr2, sr2) = (cl * cl, sl * sl, cr * cr, sr * sr);
    -cl2 * cr2 + cl2 * sr2 - 4.0 * cl * cr * sl * sr / y.0 + cr2 * sl2 - sl2 * sr2
}

/// CHSH combination `cor(x,z) - cor(x,zz) + cor(xx,z) + cor(xx,zz)`.
pub fn chsh_s(x: f64, xx: f64, z: f64, zz: f64, y: ExcessFactor) -> f64 {
    cor(x, z, y) - cor(x, zz, y) + cor(xx, z, y) + cor(xx, zz, y)
}

/// CHSH value on the one-parameter family `(w, w+2v, w+v, w+3v)`.
pub fn chsh_ss(w: f64, v: f64, y: ExcessFactor) -> f64 {
    chsh_s(w, w + 2.0 * v, w + v, w + 3.0 * v, y)
}

/// Row-major `SS(w_i, v_j, y)`.
pub fn ss_surface(w_grid: &[f64], v_grid: &[f64], y: ExcessFactor) -> Vec<Vec<f64>> {
    w_grid
        .iter()
        .map(|&w| v_grid.iter().map(|&v| chsh_ss(w, v, y)).collect())
        .collect()
}

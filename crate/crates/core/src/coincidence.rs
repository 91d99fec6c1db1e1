//! Coincidence-window pairing of left/right detection streams and the
//! statistics built on top of it: correlation, CHSH, fringe visibility.

use rayon::prelude::*;

use crate::error::CoincidenceError;
use crate::sim::{derive_seed, run_experiment, Channel, DetectionEvent, SourceConfig, Streams};

/// Coincidence window: a left and a right event may pair when `|t_L - t_R| <= tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    tau: f64,
}

impl WindowConfig {
    pub fn new(tau: f64) -> Result<Self, CoincidenceError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(CoincidenceError::InvalidWindow(tau));
        }
        Ok(WindowConfig { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidencePair {
    pub left: DetectionEvent,
    pub right: DetectionEvent,
    /// `t_L - t_R`
    pub dt: f64,
    /// Both events stem from the same emitted pulse pair. Set after matching.
    pub legitimate: bool,
}

/// The four analyzer orientations of a CHSH measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshSetting {
    pub x: f64,
    pub xx: f64,
    pub z: f64,
    pub zz: f64,
}

impl ChshSetting {
    /// The `(w, w+2v, w+v, w+3v)` family.
    pub fn from_wv(w: f64, v: f64) -> Self {
        ChshSetting {
            x: w,
            xx: w + 2.0 * v,
            z: w + v,
            zz: w + 3.0 * v,
        }
    }

    /// `(left, right)` angles in CHSH order: `(x,z), (x,zz), (xx,z), (xx,zz)`.
    pub fn runs(&self) -> [(f64, f64); 4] {
        [
            (self.x, self.z),
            (self.x, self.zz),
            (self.xx, self.z),
            (self.xx, self.zz),
        ]
    }
}

fn check_sorted(events: &[DetectionEvent], side: &'static str) -> Result<(), CoincidenceError> {
    match events.windows(2).position(|w| w[1].time < w[0].time) {
        Some(i) => Err(CoincidenceError::Unsorted { side, index: i + 1 }),
        None => Ok(()),
    }
}

/// Greedy closest-first matching.
///
/// Candidate edges are collected by one chronological sweep over both
/// streams, then accepted in order of increasing `|dt|`; on equal `|dt|` the
/// edge whose earlier event comes first wins. Each event is used at most once.
/// Because widening the window only appends edges to the end of that order,
/// the pairs found at a narrow window are a subset of those at a wider one.
///
/// Pulse ids are copied into the output but never consulted for matching.
pub fn pair_events(
    left: &[DetectionEvent],
    right: &[DetectionEvent],
    window: WindowConfig,
) -> Result<Vec<CoincidencePair>, CoincidenceError> {
    check_sorted(left, "left")?;
    check_sorted(right, "right")?;
    let tau = window.tau;

    let mut edges: Vec<(f64, f64, usize, usize)> = Vec::new();
    let mut lo = 0;
    for (i, l) in left.iter().enumerate() {
        while lo < right.len() && right[lo].time < l.time - tau {
            lo += 1;
        }
        for (j, r) in right.iter().enumerate().skip(lo) {
            let dt = l.time - r.time;
            if -dt > tau {
                break;
            }
            if dt.abs() <= tau {
                edges.push((dt.abs(), l.time.min(r.time), i, j));
            }
        }
    }
    edges.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });

    let mut left_partner: Vec<Option<usize>> = vec![None; left.len()];
    let mut right_used = vec![false; right.len()];
    for &(_, _, i, j) in &edges {
        if left_partner[i].is_none() && !right_used[j] {
            left_partner[i] = Some(j);
            right_used[j] = true;
        }
    }

    Ok(left_partner
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|j| (i, j)))
        .map(|(i, j)| {
            let (l, r) = (left[i], right[j]);
            CoincidencePair {
                left: l,
                right: r,
                dt: l.time - r.time,
                legitimate: l.pulse_id == r.pulse_id,
            }
        })
        .collect())
}

/// Coincidence counts per channel combination.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowedStats {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    pub n_total: u64,
    /// `(N++ + N-- - N+- - N-+) / n_total`; `None` when there are no pairs.
    pub e: Option<f64>,
}

impl WindowedStats {
    pub fn from_counts(n_pp: u64, n_pm: u64, n_mp: u64, n_mm: u64) -> Self {
        let n_total = n_pp + n_pm + n_mp + n_mm;
        let e = (n_total > 0)
            .then(|| (n_pp as f64 + n_mm as f64 - n_pm as f64 - n_mp as f64) / n_total as f64);
        WindowedStats {
            n_pp,
            n_pm,
            n_mp,
            n_mm,
            n_total,
            e,
        }
    }

    /// Binomial standard error of `e`: `sqrt((1 - E²) / n)`.
    pub fn std_error(&self) -> Option<f64> {
        self.e
            .map(|e| ((1.0 - e * e).max(0.0) / self.n_total as f64).sqrt())
    }
}

pub fn counts(pairs: &[CoincidencePair]) -> WindowedStats {
    let (mut pp, mut pm, mut mp, mut mm) = (0, 0, 0, 0);
    for p in pairs {
        match (p.left.channel, p.right.channel) {
            (Channel::Plus, Channel::Plus) => pp += 1,
            (Channel::Plus, Channel::Minus) => pm += 1,
            (Channel::Minus, Channel::Plus) => mp += 1,
            (Channel::Minus, Channel::Minus) => mm += 1,
        }
    }
    WindowedStats::from_counts(pp, pm, mp, mm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshEstimate {
    /// `E1 - E2 + E3 + E4`, not clamped.
    pub s: f64,
    pub s_err: f64,
    pub e: [f64; 4],
    pub e_err: [f64; 4],
}

/// Empirical CHSH from four runs in [`ChshSetting::runs`] order.
pub fn chsh_estimate(runs: &[WindowedStats; 4]) -> Result<ChshEstimate, CoincidenceError> {
    let mut e = [0.0; 4];
    let mut e_err = [0.0; 4];
    for (k, run) in runs.iter().enumerate() {
        e[k] = run.e.ok_or(CoincidenceError::EmptyRun { run: k })?;
        e_err[k] = run.std_error().unwrap_or(0.0);
    }
    Ok(ChshEstimate {
        s: e[0] - e[1] + e[2] + e[3],
        s_err: e_err.iter().map(|s| s * s).sum::<f64>().sqrt(),
        e,
        e_err,
    })
}

/// Fringe contrast `(max - min) / (max + min)` of coincidence counts.
pub fn visibility(rates: &[(f64, u64)]) -> Result<f64, CoincidenceError> {
    if rates.len() < 2 {
        return Err(CoincidenceError::TooFewSamples(rates.len()));
    }
    let max = rates.iter().map(|r| r.1).max().unwrap_or(0);
    let min = rates.iter().map(|r| r.1).min().unwrap_or(0);
    if max == 0 {
        return Err(CoincidenceError::AllZeroRates);
    }
    Ok((max - min) as f64 / (max + min) as f64)
}

/// Uniform grid of `n` points on `[0, span)`.
pub fn uniform_grid(n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * span / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityPoint {
    pub w0: f64,
    pub visibility: f64,
    pub n_min: u64,
    pub n_max: u64,
}

fn plus_plus(pairs: &[CoincidencePair]) -> u64 {
    pairs
        .iter()
        .filter(|p| p.left.channel == Channel::Plus && p.right.channel == Channel::Plus)
        .count() as u64
}

/// Visibility versus absolute orientation for several windows at once.
///
/// For every `w0` and relative angle `d` one run is simulated with the left
/// analyzer at `w0` and the right at `w0 + d`; the fringe is the `(+,+)`
/// coincidence count. Each run's seed is derived from the master seed and the
/// run's position in the `(w0, d)` grid, and the same streams are re-paired
/// for every window. Result is indexed `[window][w0]`.
pub fn visibility_scan_windows(
    source: &SourceConfig,
    absolute: &[f64],
    relative: &[f64],
    windows: &[WindowConfig],
) -> Result<Vec<Vec<VisibilityPoint>>, CoincidenceError> {
    if absolute.is_empty() || relative.len() < 2 {
        return Err(CoincidenceError::EmptyGrid);
    }
    if windows.is_empty() {
        return Err(CoincidenceError::BadWindowList);
    }
    source.validate()?;
    let points: Vec<(usize, usize)> = (0..absolute.len())
        .flat_map(|a| (0..relative.len()).map(move |d| (a, d)))
        .collect();
    // fringe[point][window]
    let fringe: Vec<Vec<u64>> = points
        .par_iter()
        .map(|&(a, d)| {
            let index = (a * relative.len() + d) as u64;
            let cfg = source.with_seed(derive_seed(source.seed, index));
            let w0 = absolute[a];
            let streams = run_experiment(&cfg, w0, w0 + relative[d])?;
            windows
                .iter()
                .map(|&w| Ok(plus_plus(&pair_events(&streams.left, &streams.right, w)?)))
                .collect()
        })
        .collect::<Result<_, CoincidenceError>>()?;

    windows
        .iter()
        .enumerate()
        .map(|(k, _)| {
            absolute
                .iter()
                .enumerate()
                .map(|(a, &w0)| {
                    let rates: Vec<(f64, u64)> = relative
                        .iter()
                        .enumerate()
                        .map(|(d, &delta)| (delta, fringe[a * relative.len() + d][k]))
                        .collect();
                    Ok(VisibilityPoint {
                        w0,
                        visibility: visibility(&rates)?,
                        n_min: rates.iter().map(|r| r.1).min().unwrap_or(0),
                        n_max: rates.iter().map(|r| r.1).max().unwrap_or(0),
                    })
                })
                .collect()
        })
        .collect()
}

pub fn visibility_scan(
    source: &SourceConfig,
    absolute: &[f64],
    relative: &[f64],
    window: WindowConfig,
) -> Result<Vec<VisibilityPoint>, CoincidenceError> {
    let mut all = visibility_scan_windows(source, absolute, relative, &[window])?;
    Ok(all.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    pub s_emp: f64,
    pub s_err: f64,
    /// Pairs summed over the four CHSH runs.
    pub n_pairs: u64,
    pub n_illegitimate: u64,
    pub frac_illegitimate: f64,
}

/// Streams for the four CHSH runs, each with its own seed derived from the
/// master seed and the run index.
pub fn chsh_streams(
    source: &SourceConfig,
    settings: &ChshSetting,
) -> Result<Vec<Streams>, CoincidenceError> {
    source.validate()?;
    settings
        .runs()
        .par_iter()
        .enumerate()
        .map(|(k, &(zl, zr))| {
            let cfg = source.with_seed(derive_seed(source.seed, k as u64));
            Ok(run_experiment(&cfg, zl, zr)?)
        })
        .collect()
}

/// Empirical CHSH and illegitimate-pair bookkeeping per window width.
pub fn window_sweep(
    source: &SourceConfig,
    settings: &ChshSetting,
    taus: &[f64],
) -> Result<Vec<SweepPoint>, CoincidenceError> {
    if taus.is_empty() || taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(CoincidenceError::BadWindowList);
    }
    let windows: Vec<WindowConfig> = taus
        .iter()
        .map(|&t| WindowConfig::new(t))
        .collect::<Result<_, _>>()?;
    let streams = chsh_streams(source, settings)?;
    windows
        .par_iter()
        .map(|&window| {
            let mut stats = [WindowedStats::default(); 4];
            let mut n_illegitimate = 0u64;
            for (k, s) in streams.iter().enumerate() {
                let pairs = pair_events(&s.left, &s.right, window)?;
                n_illegitimate += pairs.iter().filter(|p| !p.legitimate).count() as u64;
                stats[k] = counts(&pairs);
            }
            let est = chsh_estimate(&stats)?;
            let n_pairs: u64 = stats.iter().map(|s| s.n_total).sum();
            Ok(SweepPoint {
                tau: window.tau,
                s_emp: est.s,
                s_err: est.s_err,
                n_pairs,
                n_illegitimate,
                frac_illegitimate: n_illegitimate as f64 / n_pairs as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Side;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};

    fn ev(side: Side, time: f64, id: u64) -> DetectionEvent {
        DetectionEvent {
            side,
            channel: Channel::Plus,
            time,
            pulse_id: id,
        }
    }

    fn stream(side: Side, times: &[f64]) -> Vec<DetectionEvent> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| ev(side, t, i as u64))
            .collect()
    }

    fn win(tau: f64) -> WindowConfig {
        WindowConfig::new(tau).unwrap()
    }

    fn times(pairs: &[CoincidencePair]) -> Vec<(f64, f64)> {
        pairs.iter().map(|p| (p.left.time, p.right.time)).collect()
    }

    #[test]
    fn pairing_examples() {
        let l = stream(Side::Left, &[0.0, 1.0]);
        let r = stream(Side::Right, &[0.05, 2.0]);
        let pairs = pair_events(&l, &r, win(0.1)).unwrap();
        assert_eq!(times(&pairs), vec![(0.0, 0.05)]);
        assert!((pairs[0].dt + 0.05).abs() < 1e-15);

        let l = stream(Side::Left, &[0.0]);
        let r = stream(Side::Right, &[0.2]);
        assert!(pair_events(&l, &r, win(0.1)).unwrap().is_empty());

        let r = stream(Side::Right, &[-0.04, 0.03]);
        assert_eq!(
            times(&pair_events(&l, &r, win(0.1)).unwrap()),
            vec![(0.0, 0.03)]
        );
    }

    #[test]
    fn equal_distance_prefers_earlier_partner() {
        let l = stream(Side::Left, &[0.0]);
        let r = stream(Side::Right, &[-0.05, 0.05]);
        assert_eq!(
            times(&pair_events(&l, &r, win(0.1)).unwrap()),
            vec![(0.0, -0.05)]
        );
    }

    #[test]
    fn window_validation_and_unsorted_input() {
        assert!(WindowConfig::new(0.0).is_err());
        assert!(WindowConfig::new(f64::INFINITY).is_err());
        let l = stream(Side::Left, &[1.0, 0.5]);
        let r = stream(Side::Right, &[0.0]);
        assert_eq!(
            pair_events(&l, &r, win(1.0)).unwrap_err(),
            CoincidenceError::Unsorted {
                side: "left",
                index: 1
            }
        );
    }

    #[test]
    fn legitimacy_is_post_hoc() {
        let l = vec![ev(Side::Left, 0.0, 3)];
        let r = vec![ev(Side::Right, 0.01, 3), ev(Side::Right, 0.5, 4)];
        let p = pair_events(&l, &r, win(0.1)).unwrap();
        assert!(p[0].legitimate);
        let r = vec![ev(Side::Right, 0.01, 9)];
        assert!(!pair_events(&l, &r, win(0.1)).unwrap()[0].legitimate);
    }

    fn with_channels(pattern: &[(Channel, Channel, usize)]) -> Vec<CoincidencePair> {
        let mut out = Vec::new();
        for &(a, b, n) in pattern {
            for _ in 0..n {
                let mut l = ev(Side::Left, 0.0, 0);
                let mut r = ev(Side::Right, 0.0, 0);
                l.channel = a;
                r.channel = b;
                out.push(CoincidencePair {
                    left: l,
                    right: r,
                    dt: 0.0,
                    legitimate: true,
                });
            }
        }
        out
    }

    #[test]
    fn counts_examples() {
        use Channel::{Minus as M, Plus as P};
        let s = counts(&with_channels(&[(P, P, 50), (M, M, 50)]));
        assert_eq!(s.e, Some(1.0));
        assert_eq!(s.n_total, 100);
        let s = counts(&with_channels(&[
            (P, P, 7),
            (P, M, 7),
            (M, P, 7),
            (M, M, 7),
        ]));
        assert_eq!(s.e, Some(0.0));
        let s = counts(&with_channels(&[(P, M, 75), (M, P, 25)]));
        assert_eq!(s.e, Some(-1.0));
        assert_eq!((s.n_pm, s.n_mp), (75, 25));
        let empty = counts(&[]);
        assert_eq!(empty.e, None);
        assert_eq!(empty.std_error(), None);
    }

    fn stats_with_e(e: f64) -> WindowedStats {
        // 1000 pairs split to realise the requested correlation.
        let same = ((1.0 + e) / 2.0 * 1000.0).round() as u64;
        WindowedStats::from_counts(
            same / 2,
            (1000 - same) / 2,
            1000 - same - (1000 - same) / 2,
            same - same / 2,
        )
    }

    #[test]
    fn chsh_examples() {
        let h = SQRT_2 / 2.0;
        let runs = [
            WindowedStats {
                e: Some(h),
                ..stats_with_e(h)
            },
            WindowedStats {
                e: Some(-h),
                ..stats_with_e(-h)
            },
            WindowedStats {
                e: Some(h),
                ..stats_with_e(h)
            },
            WindowedStats {
                e: Some(h),
                ..stats_with_e(h)
            },
        ];
        let est = chsh_estimate(&runs).unwrap();
        assert!((est.s - 2.0 * SQRT_2).abs() < 1e-12);
        assert!(est.s_err > 0.0);

        let zero = [stats_with_e(0.0); 4];
        assert_eq!(chsh_estimate(&zero).unwrap().s, 0.0);

        let extreme = [
            stats_with_e(1.0),
            stats_with_e(-1.0),
            stats_with_e(1.0),
            stats_with_e(1.0),
        ];
        let est = chsh_estimate(&extreme).unwrap();
        assert_eq!(est.s, 4.0);
        assert_eq!(est.s_err, 0.0);

        let mut broken = zero;
        broken[2] = WindowedStats::default();
        assert_eq!(
            chsh_estimate(&broken).unwrap_err(),
            CoincidenceError::EmptyRun { run: 2 }
        );
    }

    #[test]
    fn visibility_examples() {
        assert_eq!(visibility(&[(0.0, 100), (1.0, 0), (2.0, 40)]).unwrap(), 1.0);
        assert_eq!(visibility(&[(0.0, 75), (1.0, 25)]).unwrap(), 0.5);
        assert_eq!(visibility(&[(0.0, 30), (1.0, 30), (2.0, 30)]).unwrap(), 0.0);
        assert_eq!(
            visibility(&[(0.0, 0), (1.0, 0)]).unwrap_err(),
            CoincidenceError::AllZeroRates
        );
        assert!(visibility(&[(0.0, 3)]).is_err());
    }

    #[test]
    fn setting_family() {
        let s = ChshSetting::from_wv(0.1, 3.0 * FRAC_PI_8);
        assert_eq!(s.x, 0.1);
        assert!((s.zz - (0.1 + 9.0 * FRAC_PI_8)).abs() < 1e-15);
        assert_eq!(s.runs()[1], (s.x, s.zz));
    }

    #[test]
    fn sweep_rejects_bad_taus() {
        let src = SourceConfig::default();
        let set = ChshSetting::from_wv(0.0, FRAC_PI_4);
        assert!(window_sweep(&src, &set, &[]).is_err());
        assert!(window_sweep(&src, &set, &[2e-6, 1e-6]).is_err());
        assert!(window_sweep(&src, &set, &[-1.0]).is_err());
    }

    #[test]
    fn grid_is_half_open() {
        let g = uniform_grid(16, PI);
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], 0.0);
        assert!((g[4] - FRAC_PI_4).abs() < 1e-15);
        assert!(*g.last().unwrap() < PI);
    }
}

//! Event-based source and detector model.
//!
//! Pulse pairs are emitted as a homogeneous Poisson process; each pair
//! carries one of the two anti-correlated polarization variants. At each
//! station the pulse passes a polarizing beam splitter and releases at most one
//! photoelectron, routed to the `+` port with Malus probability and delayed
//! uniformly over the pulse length.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

pub use crate::analytic::{Side, Variant};
use crate::error::SimError;
use crate::fmt_num;

/// RNG stream carrying emission times and variants.
const EMISSION_STREAM: u64 = 0;
/// RNG stream carrying per-pulse detector draws.
const DETECTION_STREAM: u64 = 1;
/// 32-bit words reserved per pulse on the detection stream (6 f64 draws use 12).
const WORDS_PER_PULSE: u128 = 16;

/// How variants are assigned to emitted pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantMode {
    /// i.i.d. Bernoulli(1/2).
    Mixed,
    /// Every pair carries the same variant.
    Fixed(Variant),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    /// Pair emissions per unit time.
    pub rate: f64,
    /// Pulse (coherence) length `l`, in the same time unit.
    pub pulse_length: f64,
    pub duration: f64,
    /// Probability that a pulse releases a photoelectron at all.
    pub efficiency: f64,
    pub seed: u64,
    pub variants: VariantMode,
}

impl Default for SourceConfig {
    /// Overlap density `rate · pulse_length = 0.01`. These are artifact
    /// defaults, not measured crystal values.
    fn default() -> Self {
        SourceConfig {
            rate: 1.0e4,
            pulse_length: 1.0e-6,
            duration: 10.0,
            efficiency: 1.0,
            seed: 0x5EED_0EB2,
            variants: VariantMode::Mixed,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(SimError::InvalidRate(self.rate));
        }
        if !(self.pulse_length.is_finite() && self.pulse_length > 0.0) {
            return Err(SimError::InvalidPulseLength(self.pulse_length));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(SimError::InvalidDuration(self.duration));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(SimError::InvalidEfficiency(self.efficiency));
        }
        Ok(())
    }

    /// Mean number of other emissions starting within one pulse length.
    pub fn overlap_density(&self) -> f64 {
        self.rate * self.pulse_length
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One source emission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePair {
    pub id: u64,
    pub t_emit: f64,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Plus,
    Minus,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Plus => "+",
            Channel::Minus => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub side: Side,
    pub channel: Channel,
    pub time: f64,
    /// Originating pulse. Diagnostic only; pairing never reads it.
    pub pulse_id: u64,
}

/// A single released photoelectron before it is attached to a station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photoelectron {
    pub channel: Channel,
    pub time: f64,
}

/// Time-sorted detection streams of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Streams {
    pub left: Vec<DetectionEvent>,
    pub right: Vec<DetectionEvent>,
}

/// Poisson emission stream; see [`generate_emissions`].
#[derive(Debug, Clone)]
pub struct Emissions {
    rng: ChaCha8Rng,
    gaps: Exp<f64>,
    t: f64,
    duration: f64,
    next_id: u64,
    variants: VariantMode,
}

impl Iterator for Emissions {
    type Item = PulsePair;

    fn next(&mut self) -> Option<PulsePair> {
        self.t += self.gaps.sample(&mut self.rng);
        if self.t > self.duration {
            self.duration = f64::NEG_INFINITY;
            return None;
        }
        let variant = match self.variants {
            VariantMode::Mixed => {
                if self.rng.gen::<bool>() {
                    Variant::One
                } else {
                    Variant::Zero
                }
            }
            VariantMode::Fixed(v) => v,
        };
        let id = self.next_id;
        self.next_id += 1;
        Some(PulsePair {
            id,
            t_emit: self.t,
            variant,
        })
    }
}

/// Emission times on `[0, duration]` at the configured rate, deterministic in the seed.
pub fn generate_emissions(config: &SourceConfig) -> Result<Emissions, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(EMISSION_STREAM);
    Ok(Emissions {
        rng,
        gaps: Exp::new(config.rate).expect("rate validated"),
        t: 0.0,
        duration: config.duration,
        next_id: 0,
        variants: config.variants,
    })
}

/// Polarization angle of the pulse sent to `side`; horizontal is 0, vertical π/2.
pub fn pulse_polarization(side: Side, variant: Variant) -> f64 {
    match (side, variant) {
        (Side::Left, Variant::Zero) | (Side::Right, Variant::One) => FRAC_PI_2,
        (Side::Left, Variant::One) | (Side::Right, Variant::Zero) => 0.0,
    }
}

/// Probability of the `+` port for polarization `pol` behind an analyzer at `analyzer`.
pub fn plus_probability(pol: f64, analyzer: f64) -> f64 {
    let c = (pol - analyzer).cos();
    c * c
}

/// Photoelectric response of one detector station to one pulse.
///
/// Always consumes three uniforms so the draw count per pulse is fixed.
pub fn detect<R: Rng + ?Sized>(
    pol: f64,
    analyzer: f64,
    t_arrive: f64,
    pulse_length: f64,
    efficiency: f64,
    rng: &mut R,
) -> Option<Photoelectron> {
    let fire: f64 = rng.gen();
    let port: f64 = rng.gen();
    let delay: f64 = rng.gen();
    if fire >= efficiency {
        return None;
    }
    let channel = if port < plus_probability(pol, analyzer) {
        Channel::Plus
    } else {
        Channel::Minus
    };
    Some(Photoelectron {
        channel,
        time: t_arrive + delay * pulse_length,
    })
}

/// Random source positioned at the start of `pulse_id`'s detector draws.
///
/// Each pulse owns a fixed block of the detection stream, so any subset of
/// pulses can be simulated in any order with identical results.
pub fn pulse_rng(seed: u64, pulse_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DETECTION_STREAM);
    rng.set_word_pos(u128::from(pulse_id) * WORDS_PER_PULSE);
    rng
}

fn detect_pair(
    config: &SourceConfig,
    pulse: &PulsePair,
    zl: f64,
    zr: f64,
    rng: &mut ChaCha8Rng,
) -> (Option<DetectionEvent>, Option<DetectionEvent>) {
    rng.set_word_pos(u128::from(pulse.id) * WORDS_PER_PULSE);
    let mut station = |side: Side, analyzer: f64| {
        detect(
            pulse_polarization(side, pulse.variant),
            analyzer,
            pulse.t_emit,
            config.pulse_length,
            config.efficiency,
            rng,
        )
        .map(|pe| DetectionEvent {
            side,
            channel: pe.channel,
            time: pe.time,
            pulse_id: pulse.id,
        })
    };
    let left = station(Side::Left, zl);
    let right = station(Side::Right, zr);
    (left, right)
}

fn sort_stream(events: &mut [DetectionEvent]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.pulse_id.cmp(&b.pulse_id)));
}

/// Full run with the left analyzer at `zl` and the right one at `zr`.
///
/// Propagation delays are zero on both sides, so a pulse arrives at its
/// emission time.
pub fn run_experiment(config: &SourceConfig, zl: f64, zr: f64) -> Result<Streams, SimError> {
    let emissions = generate_emissions(config)?;
    let mut rng = pulse_rng(config.seed, 0);
    let mut streams = Streams::default();
    for pulse in emissions {
        let (l, r) = detect_pair(config, &pulse, zl, zr, &mut rng);
        streams.left.extend(l);
        streams.right.extend(r);
    }
    sort_stream(&mut streams.left);
    sort_stream(&mut streams.right);
    Ok(streams)
}

/// SplitMix64 finalizer; derives independent per-point seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const EVENTS_CSV_HEADER: &str = "side,channel,time,pulse_id";

/// Raw dump, one row per event in global time order (left first on ties).
pub fn write_events_csv<W: Write + ?Sized>(out: &mut W, streams: &Streams) -> io::Result<()> {
    writeln!(out, "{EVENTS_CSV_HEADER}")?;
    let (mut i, mut j) = (0, 0);
    let (l, r) = (&streams.left, &streams.right);
    while i < l.len() || j < r.len() {
        let take_left = j >= r.len() || (i < l.len() && l[i].time <= r[j].time);
        let ev = if take_left {
            i += 1;
            &l[i - 1]
        } else {
            j += 1;
            &r[j - 1]
        };
        writeln!(
            out,
            "{},{},{},{}",
            ev.side,
            ev.channel,
            fmt_num(ev.time),
            ev.pulse_id
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn cfg(rate: f64, duration: f64, seed: u64) -> SourceConfig {
        SourceConfig {
            rate,
            duration,
            seed,
            ..SourceConfig::default()
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert_eq!(
            generate_emissions(&cfg(0.0, 1.0, 1)).unwrap_err(),
            SimError::InvalidRate(0.0)
        );
        assert!(generate_emissions(&cfg(1.0, -1.0, 1)).is_err());
        let mut c = cfg(1.0, 1.0, 1);
        c.efficiency = 0.0;
        assert!(c.validate().is_err());
        c.efficiency = 1.0;
        c.pulse_length = -2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn poisson_count_and_variant_balance() {
        let pulses: Vec<_> = generate_emissions(&cfg(1000.0, 10.0, 42))
            .unwrap()
            .collect();
        let n = pulses.len() as f64;
        assert!((n - 10_000.0).abs() <= 300.0, "count {n}");
        let ones = pulses.iter().filter(|p| p.variant == Variant::One).count() as f64;
        let sigma = (n * 0.25).sqrt();
        assert!((ones - n / 2.0).abs() <= 3.0 * sigma);
        assert!(pulses
            .windows(2)
            .all(|w| w[0].t_emit <= w[1].t_emit && w[0].id + 1 == w[1].id));
        assert!(pulses.iter().all(|p| p.t_emit >= 0.0 && p.t_emit <= 10.0));
    }

    #[test]
    fn emissions_deterministic() {
        let a: Vec<_> = generate_emissions(&cfg(500.0, 2.0, 9)).unwrap().collect();
        let b: Vec<_> = generate_emissions(&cfg(500.0, 2.0, 9)).unwrap().collect();
        let c: Vec<_> = generate_emissions(&cfg(500.0, 2.0, 10)).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_duration_is_empty() {
        assert_eq!(generate_emissions(&cfg(1e4, 0.0, 1)).unwrap().count(), 0);
        let s = run_experiment(&cfg(1e4, 0.0, 1), 0.0, 0.0).unwrap();
        assert!(s.left.is_empty() && s.right.is_empty());
    }

    #[test]
    fn polarizations_are_orthogonal() {
        assert_eq!(pulse_polarization(Side::Left, Variant::Zero), FRAC_PI_2);
        assert_eq!(pulse_polarization(Side::Right, Variant::Zero), 0.0);
        for v in Variant::BOTH {
            let d = pulse_polarization(Side::Left, v) - pulse_polarization(Side::Right, v);
            assert_eq!(d.abs(), FRAC_PI_2);
        }
    }

    #[test]
    fn malus_probability_matches_field_amplitude() {
        use crate::analytic::field;
        for k in 0..32 {
            let z = k as f64 * 0.2;
            for side in [Side::Left, Side::Right] {
                for v in Variant::BOTH {
                    let amp = field(side, z, v).c1;
                    let p = plus_probability(pulse_polarization(side, v), z);
                    assert!((amp * amp - p).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn aligned_and_crossed_analyzers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let pe = detect(0.3, 0.3, 0.0, 1.0, 1.0, &mut rng).unwrap();
            assert_eq!(pe.channel, Channel::Plus);
            let pe = detect(0.3 + FRAC_PI_2, 0.3, 0.0, 1.0, 1.0, &mut rng).unwrap();
            assert_eq!(pe.channel, Channel::Minus);
        }
    }

    #[test]
    fn diagonal_analyzer_splits_evenly_with_uniform_delay() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let l = 2.5;
        let mut plus = 0usize;
        let mut delays = Vec::with_capacity(n);
        for _ in 0..n {
            let pe = detect(FRAC_PI_4, 0.0, 10.0, l, 1.0, &mut rng).unwrap();
            plus += usize::from(pe.channel == Channel::Plus);
            delays.push((pe.time - 10.0) / l);
        }
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((plus as f64 - n as f64 / 2.0).abs() <= 3.0 * sigma);
        delays.sort_by(f64::total_cmp);
        let d = delays
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = x - i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64 - x;
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        // Kolmogorov-Smirnov critical value at alpha = 0.01.
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn efficiency_thins_detections() {
        let mut c = cfg(1e4, 5.0, 17);
        c.efficiency = 0.6;
        let pairs = generate_emissions(&c).unwrap().count() as f64;
        let s = run_experiment(&c, 0.0, 0.4).unwrap();
        let sigma = (pairs * 0.6 * 0.4).sqrt();
        for side in [&s.left, &s.right] {
            assert!((side.len() as f64 - 0.6 * pairs).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn streams_respect_pulse_support_and_exclusivity() {
        let mut c = cfg(2e4, 1.0, 23);
        c.pulse_length = 1e-4;
        let pulses: Vec<_> = generate_emissions(&c).unwrap().collect();
        let s = run_experiment(&c, 0.2, 1.0).unwrap();
        for events in [&s.left, &s.right] {
            assert!(events.windows(2).all(|w| w[0].time <= w[1].time));
            let mut ids: Vec<u64> = events.iter().map(|e| e.pulse_id).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), events.len());
            for e in events.iter() {
                let p = &pulses[e.pulse_id as usize];
                assert!(e.time >= p.t_emit && e.time <= p.t_emit + c.pulse_length);
            }
        }
        assert_eq!(s, run_experiment(&c, 0.2, 1.0).unwrap());
    }

    #[test]
    fn pulse_rng_is_position_addressed() {
        let mut seq = pulse_rng(77, 0);
        seq.set_word_pos(5 * WORDS_PER_PULSE);
        let a: f64 = seq.gen();
        let b: f64 = pulse_rng(77, 5).gen();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_dump_is_time_ordered() {
        let mut c = cfg(1e3, 0.01, 4);
        c.pulse_length = 1e-3;
        let s = run_experiment(&c, 0.0, 0.0).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(EVENTS_CSV_HEADER));
        let times: Vec<f64> = lines
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert_eq!(times.len(), s.left.len() + s.right.len());
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }
}

//! Configuration, orchestration and CSV output for the four run modes.

use std::f64::consts::{FRAC_PI_8, PI};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analytic::{ss_surface, ExcessFactor, Variant};
use crate::coincidence::{
    counts, pair_events, uniform_grid, visibility_scan_windows, window_sweep, ChshSetting,
    WindowConfig,
};
use crate::error::ExperimentError;
use crate::fmt_num;
use crate::sim::{run_experiment, write_events_csv, SourceConfig, VariantMode};

/// Environment variable naming the directory used when no output path is given.
pub const OUT_DIR_ENV: &str = "EPRB_OUT_DIR";

pub const SURFACE_HEADER: &str = "w,v,SS";
pub const SWEEP_HEADER: &str = "tau,S_emp,S_err,n_pairs,frac_illegitimate";
pub const VISIBILITY_HEADER: &str = "w0,visibility,n_min,n_max";
pub const SUMMARY_HEADER: &str = "zl,zr,tau,N_pp,N_pm,N_mp,N_mm,E";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AnalyticSurface,
    Simulate,
    WindowSweep,
    VisibilityScan,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::AnalyticSurface => "analytic-surface",
            Mode::Simulate => "simulate",
            Mode::WindowSweep => "window-sweep",
            Mode::VisibilityScan => "visibility-scan",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic-surface" => Ok(Mode::AnalyticSurface),
            "simulate" => Ok(Mode::Simulate),
            "window-sweep" => Ok(Mode::WindowSweep),
            "visibility-scan" => Ok(Mode::VisibilityScan),
            other => Err(ExperimentError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub source: SourceConfig,
    /// Window widths. `None` selects the mode default: one window of one
    /// pulse length for `simulate`, a log grid otherwise.
    pub taus: Option<Vec<f64>>,
    /// Analyzer angles for `simulate`.
    pub zl: f64,
    pub zr: f64,
    /// CHSH family `(w, w+2v, w+v, w+3v)` for `window-sweep`.
    pub w: f64,
    pub v: f64,
    /// Surface grid sizes, uniform on `[0, π)`.
    pub grid_w: usize,
    pub grid_v: usize,
    /// Visibility grids: absolute orientations and relative sweep, uniform on `[0, π)`.
    pub grid_abs: usize,
    pub grid_rel: usize,
    pub y: f64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::AnalyticSurface,
            source: SourceConfig::default(),
            taus: None,
            zl: 0.0,
            zr: 0.0,
            w: 0.0,
            v: 3.0 * FRAC_PI_8,
            grid_w: 64,
            grid_v: 64,
            grid_abs: 16,
            grid_rel: 16,
            y: 1.0,
            output: PathBuf::from("eprb.csv"),
        }
    }
}

/// Half-decade logarithmic grid over `[1e-2·l, 1e2·l]`.
pub fn default_taus(pulse_length: f64) -> Vec<f64> {
    (0..=8)
        .map(|k| pulse_length * 10f64.powf(-2.0 + 0.5 * f64::from(k)))
        .collect()
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ExperimentError> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| ExperimentError::Config(format!("{key}: '{value}' is not a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ExperimentError> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| ExperimentError::Config(format!("{key}: '{value}' is not a count")))
}

pub fn parse_tau_list(value: &str) -> Result<Vec<f64>, ExperimentError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_f64("tau", s))
        .collect()
}

fn variant_name(mode: VariantMode) -> &'static str {
    match mode {
        VariantMode::Mixed => "mixed",
        VariantMode::Fixed(Variant::Zero) => "0",
        VariantMode::Fixed(Variant::One) => "1",
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting; shared by the config file and CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse()?,
            "rate" => self.source.rate = parse_f64(key, v)?,
            "pulse_length" => self.source.pulse_length = parse_f64(key, v)?,
            "duration" => self.source.duration = parse_f64(key, v)?,
            "efficiency" => self.source.efficiency = parse_f64(key, v)?,
            "seed" => {
                self.source.seed = v
                    .parse()
                    .map_err(|_| ExperimentError::Config(format!("seed: '{v}' is not a u64")))?
            }
            "variant" => {
                self.source.variants = match v {
                    "mixed" => VariantMode::Mixed,
                    "0" => VariantMode::Fixed(Variant::Zero),
                    "1" => VariantMode::Fixed(Variant::One),
                    _ => {
                        return Err(ExperimentError::Config(format!(
                            "variant: expected mixed, 0 or 1, got '{v}'"
                        )))
                    }
                }
            }
            "tau" => {
                self.taus = if v.is_empty() {
                    None
                } else {
                    Some(parse_tau_list(v)?)
                }
            }
            "zl" => self.zl = parse_f64(key, v)?,
            "zr" => self.zr = parse_f64(key, v)?,
            "w" => self.w = parse_f64(key, v)?,
            "v" => self.v = parse_f64(key, v)?,
            "grid_w" => self.grid_w = parse_usize(key, v)?,
            "grid_v" => self.grid_v = parse_usize(key, v)?,
            "grid_abs" => self.grid_abs = parse_usize(key, v)?,
            "grid_rel" => self.grid_rel = parse_usize(key, v)?,
            "y" => self.y = parse_f64(key, v)?,
            "out" => self.output = PathBuf::from(v),
            other => return Err(ExperimentError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses the plain-text format: one `key = value` per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ExperimentError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Inverse of [`ExperimentConfig::parse`]; floats are written exactly.
    pub fn serialize(&self) -> String {
        let s = &self.source;
        let taus = self
            .taus
            .as_ref()
            .map(|t| t.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(","))
            .unwrap_or_default();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("mode", self.mode.to_string());
        kv("rate", fmt_num(s.rate));
        kv("pulse_length", fmt_num(s.pulse_length));
        kv("duration", fmt_num(s.duration));
        kv("efficiency", fmt_num(s.efficiency));
        kv("seed", s.seed.to_string());
        kv("variant", variant_name(s.variants).to_string());
        kv("tau", taus);
        kv("zl", fmt_num(self.zl));
        kv("zr", fmt_num(self.zr));
        kv("w", fmt_num(self.w));
        kv("v", fmt_num(self.v));
        kv("grid_w", self.grid_w.to_string());
        kv("grid_v", self.grid_v.to_string());
        kv("grid_abs", self.grid_abs.to_string());
        kv("grid_rel", self.grid_rel.to_string());
        kv("y", fmt_num(self.y));
        kv("out", self.output.display().to_string());
        out
    }

    pub fn effective_taus(&self) -> Vec<f64> {
        match (&self.taus, self.mode) {
            (Some(t), _) => t.clone(),
            (None, Mode::Simulate) => vec![self.source.pulse_length],
            (None, _) => default_taus(self.source.pulse_length),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        let angles = [self.zl, self.zr, self.w, self.v];
        if angles.iter().any(|a| !a.is_finite()) {
            return bad("angles must be finite".into());
        }
        ExcessFactor::new(self.y)?;
        match self.mode {
            Mode::AnalyticSurface => {
                if self.grid_w == 0 || self.grid_v == 0 {
                    return bad("grid_w and grid_v must be positive".into());
                }
            }
            Mode::Simulate => {
                self.source.validate()?;
                if self.effective_taus().len() != 1 {
                    return bad("simulate takes exactly one tau".into());
                }
            }
            Mode::WindowSweep | Mode::VisibilityScan => {
                self.source.validate()?;
                if self.source.duration <= 0.0 {
                    return bad("sweeps need a positive duration".into());
                }
                let taus = self.effective_taus();
                if taus.is_empty() || taus.windows(2).any(|w| w[1] < w[0]) {
                    return bad("tau list must be non-empty and ascending".into());
                }
                if self.mode == Mode::VisibilityScan && (self.grid_abs == 0 || self.grid_rel < 16) {
                    return bad("visibility scan needs grid_abs >= 1 and grid_rel >= 16".into());
                }
            }
        }
        for &t in &self.effective_taus() {
            WindowConfig::new(t)?;
        }
        Ok(())
    }
}

/// What a run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Human-readable summary lines for stdout.
    pub notes: Vec<String>,
}

/// Writes `body` through a `.partial` sibling and renames on success, so a
/// failed run never leaves a truncated file at `path`.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), ExperimentError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let io_err = |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    let result = File::create(&partial).and_then(|f| {
        let mut w = BufWriter::new(f);
        body(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    });
    match result.and_then(|_| fs::rename(&partial, path)) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&partial);
            Err(io_err(e))
        }
    }
}

/// `dir/stem{suffix}.csv` next to `base`.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "eprb".into());
    base.with_file_name(format!("{stem}{suffix}.csv"))
}

pub fn cmd_analytic_surface(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let y = ExcessFactor::new(cfg.y)?;
    let w_grid = uniform_grid(cfg.grid_w, PI);
    let v_grid = uniform_grid(cfg.grid_v, PI);
    let surface = ss_surface(&w_grid, &v_grid, y);
    write_atomic(&cfg.output, |out| {
        writeln!(out, "{SURFACE_HEADER}")?;
        for (row, &w) in surface.iter().zip(&w_grid) {
            for (ss, &v) in row.iter().zip(&v_grid) {
                writeln!(out, "{},{},{}", fmt_num(w), fmt_num(v), fmt_num(*ss))?;
            }
        }
        Ok(())
    })?;
    let max = surface.iter().flatten().cloned().fold(f64::MIN, f64::max);
    Ok(RunReport {
        files: vec![cfg.output.clone()],
        notes: vec![format!("y={} max SS={}", cfg.y, fmt_num(max))],
    })
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let tau = cfg.effective_taus()[0];
    let window = WindowConfig::new(tau)?;
    let streams = run_experiment(&cfg.source, cfg.zl, cfg.zr)?;
    let stats = counts(&pair_events(&streams.left, &streams.right, window)?);

    write_atomic(&cfg.output, |out| write_events_csv(out, &streams))?;
    let summary_path = sibling(&cfg.output, "_summary");
    let e = stats.e.map(fmt_num).unwrap_or_else(|| "NA".into());
    let line = format!(
        "{},{},{},{},{},{},{},{}",
        fmt_num(cfg.zl),
        fmt_num(cfg.zr),
        fmt_num(tau),
        stats.n_pp,
        stats.n_pm,
        stats.n_mp,
        stats.n_mm,
        e
    );
    write_atomic(&summary_path, |out| {
        writeln!(out, "{SUMMARY_HEADER}")?;
        writeln!(out, "{line}")
    })?;

    let mut notes = vec![line];
    match (stats.e, stats.std_error()) {
        (Some(e), Some(err)) => {
            notes.push(format!("E = {e:.6} +/- {err:.6} ({} pairs)", stats.n_total))
        }
        _ => notes.push("n_total = 0: correlation undefined".into()),
    }
    Ok(RunReport {
        files: vec![cfg.output.clone(), summary_path],
        notes,
    })
}

pub fn cmd_window_sweep(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let settings = ChshSetting::from_wv(cfg.w, cfg.v);
    let points = window_sweep(&cfg.source, &settings, &cfg.effective_taus())?;
    write_atomic(&cfg.output, |out| {
        writeln!(out, "{SWEEP_HEADER}")?;
        for p in &points {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_num(p.tau),
                fmt_num(p.s_emp),
                fmt_num(p.s_err),
                p.n_pairs,
                fmt_num(p.frac_illegitimate)
            )?;
        }
        Ok(())
    })?;
    let notes = points
        .iter()
        .map(|p| {
            format!(
                "tau={:.3e} S={:.4}+/-{:.4} pairs={} illegitimate={:.4}",
                p.tau, p.s_emp, p.s_err, p.n_pairs, p.frac_illegitimate
            )
        })
        .collect();
    Ok(RunReport {
        files: vec![cfg.output.clone()],
        notes,
    })
}

pub fn cmd_visibility_scan(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let taus = cfg.effective_taus();
    let windows: Vec<WindowConfig> = taus
        .iter()
        .map(|&t| WindowConfig::new(t))
        .collect::<Result<_, _>>()?;
    let absolute = uniform_grid(cfg.grid_abs, PI);
    let relative = uniform_grid(cfg.grid_rel, PI);
    let curves = visibility_scan_windows(&cfg.source, &absolute, &relative, &windows)?;

    let mut report = RunReport {
        files: Vec::new(),
        notes: Vec::new(),
    };
    for (k, (curve, tau)) in curves.iter().zip(&taus).enumerate() {
        let path = sibling(&cfg.output, &format!("_tau{k:02}"));
        write_atomic(&path, |out| {
            writeln!(out, "{VISIBILITY_HEADER}")?;
            for p in curve {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_num(p.w0),
                    fmt_num(p.visibility),
                    p.n_min,
                    p.n_max
                )?;
            }
            Ok(())
        })?;
        let (lo, hi) = curve.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
            (lo.min(p.visibility), hi.max(p.visibility))
        });
        report.notes.push(format!(
            "{}: tau={:.3e} V in [{lo:.4}, {hi:.4}]",
            path.display(),
            tau
        ));
        report.files.push(path);
    }
    Ok(report)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    cfg.validate()?;
    match cfg.mode {
        Mode::AnalyticSurface => cmd_analytic_surface(cfg),
        Mode::Simulate => cmd_simulate(cfg),
        Mode::WindowSweep => cmd_window_sweep(cfg),
        Mode::VisibilityScan => cmd_visibility_scan(cfg),
    }
}

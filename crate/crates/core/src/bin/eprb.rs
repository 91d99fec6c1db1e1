use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use eprb::analytic::ExcessFactor;
use eprb::experiments::{self, parse_tau_list, ExperimentConfig, Mode, OUT_DIR_ENV};
use eprb::ExperimentError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    AnalyticSurface,
    Simulate,
    WindowSweep,
    VisibilityScan,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::AnalyticSurface => Mode::AnalyticSurface,
            ModeArg::Simulate => Mode::Simulate,
            ModeArg::WindowSweep => Mode::WindowSweep,
            ModeArg::VisibilityScan => Mode::VisibilityScan,
        }
    }
}

/// EPR-B coincidence-window experiments with a local two-variant source.
///
/// Settings come from `--config` (key = value lines) and are then overridden
/// by flags. Without `--out`, output goes to `$EPRB_OUT_DIR/<mode>.csv`.
#[derive(Debug, Parser)]
#[command(name = "eprb", version, allow_negative_numbers = true)]
struct Cli {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// One window, or a comma-separated ascending list for sweeps.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    y: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    pulse_length: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    grid_w: Option<usize>,
    #[arg(long)]
    grid_v: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = cli.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = cli.seed {
        cfg.source.seed = s;
    }
    if let Some(t) = &cli.tau {
        cfg.taus = Some(parse_tau_list(t)?);
    }
    if let Some(y) = cli.y {
        cfg.y = y;
    }
    if let Some(r) = cli.rate {
        cfg.source.rate = r;
    }
    if let Some(l) = cli.pulse_length {
        cfg.source.pulse_length = l;
    }
    if let Some(d) = cli.duration {
        cfg.source.duration = d;
    }
    if let Some(g) = cli.grid_w {
        cfg.grid_w = g;
    }
    if let Some(g) = cli.grid_v {
        cfg.grid_v = g;
    }
    match &cli.out {
        Some(p) => cfg.output = p.clone(),
        None if cli.config.is_none() => {
            let dir = std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_default();
            cfg.output = dir.join(format!("{}.csv", cfg.mode));
        }
        None => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|cfg| {
        if cli.print_config {
            print!("{}", cfg.serialize());
            return Ok(());
        }
        if ExcessFactor::new(cfg.y).is_ok_and(|y| !y.is_physical()) {
            eprintln!("warning: y = {} < 1 has no physical meaning", cfg.y);
        }
        let report = experiments::run(&cfg)?;
        for note in &report.notes {
            println!("{note}");
        }
        for f in &report.files {
            println!("wrote {}", f.display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", e.kind(), msg);
            ExitCode::from(2)
        }
    }
}

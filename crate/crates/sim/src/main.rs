use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use sdrsma::Error;
use sdrsma_sim::{emit_outputs, run_experiment, CsiMode, ExperimentConfig, Scheme};

#[derive(Debug, Parser)]
#[command(version, about = "Sum-rate sweeps for SD MIMO rate-splitting precoding")]
struct Args {
    /// TOML experiment description.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV and plot files; names come from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of sd-rsma-exclusion, sd-rsma-full, bd-baseline.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    /// Comma-separated transmit powers in dBm.
    #[arg(long = "pt-dbm", value_delimiter = ',', allow_hyphen_values = true)]
    pt_dbm: Option<Vec<f64>>,
    /// Comma-separated subset of perfect, imperfect.
    #[arg(long, value_delimiter = ',')]
    csi: Option<Vec<CsiMode>>,
    #[arg(long = "max-trials")]
    max_trials: Option<usize>,
    /// Target confidence-interval half-width in bits per channel use.
    #[arg(long = "ci-bpcu")]
    ci_bpcu: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn apply(args: &Args, cfg: &mut ExperimentConfig) {
    let s = &mut cfg.sweep;
    if let Some(v) = args.seed {
        s.seed = v;
    }
    if let Some(v) = &args.schemes {
        s.schemes = v.clone();
    }
    if let Some(v) = &args.pt_dbm {
        s.pt_dbm = v.clone();
    }
    if let Some(v) = &args.csi {
        s.csi_modes = v.clone();
    }
    if let Some(v) = args.max_trials {
        s.max_trials = v;
        s.min_trials = s.min_trials.min(v);
    }
    if let Some(v) = args.ci_bpcu {
        s.ci_halfwidth = v;
    }
    if let Some(v) = args.threads {
        s.threads = v;
    }
    if let Some(dir) = &args.out {
        for p in [&mut cfg.output.csv, &mut cfg.output.plot] {
            let name = p.file_name().map(PathBuf::from).unwrap_or_default();
            *p = dir.join(name);
        }
    }
}

fn variant(e: &Error) -> String {
    let debug = format!("{e:?}");
    debug
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_string()
}

fn run(args: &Args) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    apply(args, &mut cfg);
    cfg.validate()?;
    let start = Instant::now();
    let result = run_experiment(&cfg)?;
    emit_outputs(&result, cfg.sweep.confidence, &cfg.output.csv, &cfg.output.plot)?;
    eprintln!(
        "{} cells, {} trials in {:.1} s; wrote {} and {}",
        result.cells.len(),
        result.cells.iter().map(|c| c.trials()).max().unwrap_or(0),
        start.elapsed().as_secs_f64(),
        cfg.output.csv.display(),
        cfg.output.plot.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "level": "error",
                "kind": variant(&e),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}

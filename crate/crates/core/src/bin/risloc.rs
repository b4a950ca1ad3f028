//! Command-line front end: Monte-Carlo sweeps, single trials, complexity
//! accounting, and error-bound evaluation.
//!
//! Configuration precedence, lowest to highest: desk defaults, then the
//! `--config` file, then the `--profile` bundle (array/waveform scale,
//! SNR grid, trial count), then individual flags.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime/numerical
//! error, 3 I/O error.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

use risloc_core::error::Result;
use risloc_core::harness::{
    aggregate_csv, complexity_report, position_bound_at, run_sweep, run_trial, trace_csv,
    trials_csv, write_sweep_outputs, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "risloc",
    version,
    about = "Dual-path radar positioning: simulate, estimate, and bound"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Small arrays and short sweeps for quick runs.
    Desk,
    /// Full-scale arrays and long sweeps.
    Paper,
}

#[derive(Parser)]
struct CommonOpts {
    /// Flat `key = value` config file applied over desk defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scale bundle applied after the config file.
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials-per-SNR override.
    #[arg(long)]
    trials: Option<usize>,
    /// Methods override, e.g. `coarse,proposed` (coarse always runs).
    #[arg(long)]
    methods: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the SNR x trials grid and write aggregate.csv / trials.csv /
    /// report.json.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Output directory (falls back to the config's `output_dir`,
        /// then `results`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a single (SNR, index) trial and print its record; optionally
    /// write solver traces.
    Trial {
        #[command(flatten)]
        common: CommonOpts,
        /// SNR in dB for this trial.
        #[arg(long)]
        snr: f64,
        /// Trial index (selects the per-trial RNG stream).
        #[arg(long)]
        index: usize,
        /// Directory for traces.csv and trial.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print modeled per-run operation counts and the rebuild/speedup
    /// ratios at the configured dimensions.
    Complexity {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate the position error bound at the configured target.
    Bound {
        #[command(flatten)]
        common: CommonOpts,
        /// SNR in dB used to calibrate the noise level.
        #[arg(long)]
        snr: f64,
    },
}

fn resolve_config(common: &CommonOpts) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::desk();
    if let Some(path) = &common.config {
        cfg = ExperimentConfig::from_file(path)?;
    }
    if let Some(profile) = common.profile {
        let bundle = match profile {
            Profile::Desk => ExperimentConfig::desk(),
            Profile::Paper => ExperimentConfig::paper(),
        };
        cfg.apply_profile(&bundle);
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(methods) = &common.methods {
        cfg.apply_config_text(&format!("methods = {methods}\n"))?;
    }
    Ok(cfg)
}

fn cmd_sweep(common: &CommonOpts, out: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(common)?;
    let dir: PathBuf = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    println!(
        "sweep: {} SNR points x {} trials (seed {}, config {})",
        cfg.snr_db_list.len(),
        cfg.trials,
        cfg.master_seed,
        cfg.config_hash()
    );
    let outcome = run_sweep(&cfg);
    print!("{}", aggregate_csv(&outcome.rows));
    write_sweep_outputs(&cfg, &outcome, &dir)?;
    println!("wrote {}", dir.join("aggregate.csv").display());
    println!("wrote {}", dir.join("trials.csv").display());
    println!("wrote {}", dir.join("report.json").display());
    Ok(())
}

fn cmd_trial(common: &CommonOpts, snr: f64, index: usize, out: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(common)?;
    let output = run_trial(&cfg, snr, index);
    let r = &output.record;
    println!("trial {index} @ {snr} dB (seed {})", r.seed);
    println!("  target: ({}, {})", r.target.x, r.target.y);
    match &r.failure {
        Some(msg) => println!("  status: failed ({msg})"),
        None => println!("  status: ok"),
    }
    println!(
        "  coarse: theta_bt {} rad (true {}), theta_rt {} rad (true {})",
        r.theta_bt_coarse, r.theta_bt_true, r.theta_rt_coarse, r.theta_rt_true
    );
    println!(
        "  ranges: d_bt {} m (true {}), d_rt {} m (true {})",
        r.d_bt_coarse, r.d_bt_true, r.d_rt_coarse, r.d_rt_true
    );
    println!("  position error, coarse:   {} m", r.pos_err_coarse_m);
    println!("  position error, proposed: {} m", r.pos_err_proposed_m);
    println!("  position error, cdgd:     {} m", r.pos_err_cdgd_m);
    println!("  error bound: {} m", r.peb_m);
    println!(
        "  rebuilds: proposed {}, cdgd {}",
        r.rebuilds_proposed, r.rebuilds_cdgd
    );

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut traced: Vec<(&str, &risloc_core::refine::RefinementResult)> = Vec::new();
        if let Some(res) = &output.proposed {
            traced.push(("proposed", res));
        }
        if let Some(res) = &output.cdgd {
            traced.push(("cdgd", res));
        }
        std::fs::write(dir.join("traces.csv"), trace_csv(&traced, r.target))?;
        std::fs::write(dir.join("trial.csv"), trials_csv(std::slice::from_ref(r)))?;
        println!("wrote {}", dir.join("traces.csv").display());
        println!("wrote {}", dir.join("trial.csv").display());
    }
    Ok(())
}

fn cmd_complexity(common: &CommonOpts) -> Result<()> {
    let cfg = resolve_config(common)?;
    let rep = complexity_report(&cfg);
    println!("atom-rebuild cost (entries): {}", rep.c_build);
    println!("stacked length per step:     {}", rep.l_stack);
    println!(
        "rebuilds: proposed {}, baseline {}",
        rep.rebuilds_proposed, rep.rebuilds_baseline
    );
    println!("modeled ops: proposed {}, baseline {}", rep.proposed_ops, rep.baseline_ops);
    println!("modeled speedup: {}", rep.modeled_speedup);
    Ok(())
}

fn cmd_bound(common: &CommonOpts, snr: f64) -> Result<()> {
    let cfg = resolve_config(common)?;
    let target = cfg.representative_target();
    let bound = position_bound_at(&cfg, snr, target)?;
    println!("target: ({}, {})", target.x, target.y);
    println!("snr: {snr} dB");
    println!("position error bound:          {} m", bound.peb_m);
    println!("bound with gains known:        {} m", bound.peb_known_gains_m);
    println!("singular: {}", bound.singular);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Sweep { common, out } => cmd_sweep(common, out.as_deref()),
        Command::Trial {
            common,
            snr,
            index,
            out,
        } => cmd_trial(common, *snr, *index, out.as_deref()),
        Command::Complexity { common } => cmd_complexity(common),
        Command::Bound { common, snr } => cmd_bound(common, *snr),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

//! `lidlab`: command-line driver for the latent-difficulty scaling
//! laboratory.
//!
//! Each subcommand loads one TOML config (file, preset, or built-in
//! defaults), runs an experiment family, and writes plot-ready CSV
//! artifacts plus a JSON manifest into a directory named by the config
//! hash.  Reruns with the same config and seed produce byte-identical
//! CSVs regardless of `--threads`.
//!
//! Exit codes: 0 success, 2 bad config or input, 3 numerical failure.

use clap::{Parser, Subcommand};
use lidlab_core::config::{ExperimentConfig, PRESET_NAMES};
use lidlab_core::{csvio, experiment, parallel, passk, Error};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod runner;

use runner::RunContext;

#[derive(Parser)]
#[command(
    name = "lidlab",
    version,
    about = "Synthetic scaling-law laboratory: training curves, pass@k failure curves, exponent extraction, and compute allocation"
)]
struct Cli {
    /// TOML config file (default: built-in baseline).
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Named baseline config; see `--preset help` for the list.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Override the config's master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output root (fallback: $LIDLAB_OUT, then ./runs).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses every core.  Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep training-set size and record the exact generalization loss.
    TrainScaling,
    /// Measure failure-vs-attempts curves across training sizes, with the
    /// bias-free quadrature curve alongside.
    InferenceScaling,
    /// Extract window exponents per training size (default and
    /// half-decade-shifted windows) and fit the saturation law.
    BetaEff,
    /// Solve the train/inference budget split over a grid of budgets and
    /// error weights, against a constant-exponent baseline.
    Allocate,
    /// Run the raw-unit instance-table pipeline.
    External {
        /// Instance table CSV; omitted, the table is synthesized per the
        /// config's external section.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// Also rerun under each configured unit factor and record the
        /// worst disagreement.
        #[arg(long)]
        check_invariance: bool,
    },
    /// Tabulate the exact and asymptotic failure oracles on the k grid.
    Oracle,
}

impl Command {
    fn slug(&self) -> &'static str {
        match self {
            Command::TrainScaling => "train-scaling",
            Command::InferenceScaling => "inference-scaling",
            Command::BetaEff => "beta-eff",
            Command::Allocate => "allocate",
            Command::External { .. } => "external",
            Command::Oracle => "oracle",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = if let Some(name) = &cli.preset {
        if name == "help" {
            return Err(Error::Config(format!("presets: {}", PRESET_NAMES.join(", "))));
        }
        ExperimentConfig::preset(name)?
    } else if let Some(path) = &cli.config {
        ExperimentConfig::load(path)?
    } else {
        ExperimentConfig::default()
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_root(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("LIDLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let run_dir = output_root(cli).join(format!("{}-{}", cli.command.slug(), cfg.short_hash()));
    std::fs::create_dir_all(&run_dir)?;
    let mut ctx = RunContext::new(run_dir, cli.command.slug(), &cfg, cli.threads);
    ctx.write_config_echo()?;

    parallel::install(cli.threads, || match &cli.command {
        Command::TrainScaling => cmd_train_scaling(&cfg, &mut ctx),
        Command::InferenceScaling => cmd_inference_scaling(&cfg, &mut ctx),
        Command::BetaEff => cmd_beta_eff(&cfg, &mut ctx),
        Command::Allocate => cmd_allocate(&cfg, &mut ctx),
        Command::External { input, check_invariance } => {
            cmd_external(&cfg, &mut ctx, input.as_deref(), *check_invariance)
        }
        Command::Oracle => cmd_oracle(&cfg, &mut ctx),
    })?;

    ctx.finish()
}

fn cmd_train_scaling(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<(), Error> {
    let rows = experiment::run_training(cfg)?;
    csvio::save_training_curve(ctx.path("training.csv"), &rows)?;
    ctx.record("training.csv")
}

fn cmd_inference_scaling(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<(), Error> {
    let run = experiment::run_inference(cfg)?;

    // Combined long-format file: reference curve (N = 0) first, then the
    // measured curves in grid order.
    let mut all = vec![run.reference.clone()];
    all.extend(run.curves.iter().cloned());
    csvio::save_passk_curves(ctx.path("passk.csv"), &all)?;
    ctx.record("passk.csv")?;

    for curve in &run.curves {
        let name = format!("passk_n{}.csv", curve.n_train);
        csvio::save_passk_curves(ctx.path(&name), std::slice::from_ref(curve))?;
        ctx.record(&name)?;
    }
    csvio::save_passk_curves(ctx.path("passk_reference.csv"), &[run.reference])?;
    ctx.record("passk_reference.csv")
}

fn cmd_beta_eff(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<(), Error> {
    let run = experiment::run_beta_windows(cfg)?;
    csvio::save_beta_eff(ctx.path("beta_eff.csv"), &run.inference.beta_points)?;
    ctx.record("beta_eff.csv")?;
    csvio::save_beta_eff(ctx.path("beta_eff_shifted.csv"), &run.shifted_points)?;
    ctx.record("beta_eff_shifted.csv")?;

    let summary = serde_json::json!({
        "window": run.window,
        "shifted_window": run.shifted_window,
        "fit": run.saturation,
        "shifted_fit": run.shifted_saturation,
    });
    ctx.write_json("saturation.json", &summary)
}

fn cmd_allocate(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<(), Error> {
    let rows = experiment::run_allocation(cfg)?;
    csvio::save_surface(ctx.path("surface.csv"), &rows)?;
    ctx.record("surface.csv")?;

    // Baseline: identical problem with the exponent frozen at its ceiling.
    let mut frozen = cfg.clone();
    frozen.allocation.saturation_delta = 0.0;
    let baseline = experiment::run_allocation(&frozen)?;
    csvio::save_surface(ctx.path("surface_constant.csv"), &baseline)?;
    ctx.record("surface_constant.csv")
}

fn cmd_external(
    cfg: &ExperimentConfig,
    ctx: &mut RunContext,
    input: Option<&Path>,
    check_invariance: bool,
) -> Result<(), Error> {
    // Either way the pipeline consumes a file: synthesized tables are
    // written out and read back, so the CSV round trip is exercised on
    // every run.
    let data = match input {
        Some(path) => csvio::load_external(path)?,
        None => {
            let data = experiment::external_input(cfg)?;
            csvio::save_external(ctx.path("input.csv"), &data)?;
            ctx.record("input.csv")?;
            csvio::load_external(ctx.path("input.csv"))?
        }
    };

    let result = experiment::run_external(cfg, &data)?;
    csvio::save_passk_curves(ctx.path("passk.csv"), std::slice::from_ref(&result.curve))?;
    ctx.record("passk.csv")?;

    let s = cfg.external.scale;
    let summary = serde_json::json!({
        "n_train": result.n_train,
        "n_test": result.n_test,
        "scale": s,
        "gen_loss_scaled": result.gen_loss_scaled,
        "gen_loss_raw": result.gen_loss_scaled * s * s,
    });
    ctx.write_json("external_summary.json", &summary)?;

    if check_invariance {
        let report = experiment::check_external_invariance(cfg, &data)?;
        let json = serde_json::json!({
            "scales": cfg.external.check_scales,
            "max_curve_diff": report.max_curve_diff,
            "max_loss_rel_diff": report.max_loss_rel_diff,
        });
        ctx.write_json("invariance.json", &json)?;
    }
    Ok(())
}

fn cmd_oracle(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<(), Error> {
    let (beta, sigma_eta) = (cfg.difficulty.beta, cfg.difficulty.sigma_eta);
    let delta = cfg.tolerance.delta;
    let prefactor = passk::asymptotic_prefactor(beta, delta, sigma_eta)?;

    type OracleRow = (u64, f64, f64, f64);
    let rows = parallel::ordered_map(&cfg.inference.k_grid, |&k| -> Result<OracleRow, Error> {
        let exact = passk::exact_failure_oracle(k, beta, delta, sigma_eta)?;
        let asym = passk::asymptotic_failure_oracle(k, beta, delta, sigma_eta)?;
        let power = prefactor * (k as f64).powf(-beta);
        Ok((k, exact, asym, power))
    })
    .into_iter()
    .collect::<Result<Vec<OracleRow>, Error>>()?;

    let mut text = String::from("k,exact,asymptotic,power_law\n");
    for (k, exact, asym, power) in rows {
        text.push_str(&format!("{k},{exact},{asym},{power}\n"));
    }
    std::fs::write(ctx.path("oracle.csv"), text)?;
    ctx.record("oracle.csv")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code_for(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use icepinn::data::ScenarioConfig;
use icepinn::run::{self, Overrides, RunConfig};
use icepinn::train::{EvalReport, ResultRow};
use icepinn::Error;

/// Physics-informed sea-ice drift and concentration forecasting.
#[derive(Debug, Parser)]
#[command(name = "icepinn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario and write it as a dataset.
    Synth(SynthArgs),
    /// Train one model and write checkpoint, loss log and frozen config.
    Train(TrainArgs),
    /// Write drift and concentration grids for chosen target dates.
    Predict(PredictArgs),
    /// Score a trained run and write metric tables and RMSE maps.
    Evaluate(EvaluateArgs),
    /// Train PINN and No-Phy over ratios, loss weights and seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Run TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Fraction of training windows kept.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    lambda_sat: Option<f64>,
    #[arg(long)]
    lambda_therm: Option<f64>,
    /// Data loss only and no SIC sigmoid.
    #[arg(long)]
    no_phy: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Dataset to predict from; the run's own dataset when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Target date (YYYY-MM-DD); repeatable.
    #[arg(long = "date", required = true)]
    dates: Vec<NaiveDate>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// First target date; the run's test range when omitted.
    #[arg(long, requires = "to")]
    from: Option<NaiveDate>,
    #[arg(long, requires = "from")]
    to: Option<NaiveDate>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the sweep's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

fn load_run_config(path: Option<&PathBuf>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn synth(a: SynthArgs) -> Result<(), Error> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(h) = a.height {
        cfg.height = h;
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(d) = a.days {
        cfg.days = d;
    }
    let s = run::cmd_synth(&cfg, &a.out)?;
    println!("dataset     {}", s.out.display());
    println!("grid        {}x{} cells of {} km", s.height, s.width, cfg.cell_size_km);
    println!("days        {} ({} .. {})", s.days, s.first_date, s.last_date);
    println!("land        {:.1}%", 100.0 * s.land_fraction);
    println!("mean SIC    {:.1}%", 100.0 * s.mean_sic);
    println!("Courant     {:.3}", s.courant);
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let mut cfg = load_run_config(a.config.as_ref())?;
    cfg.apply(&Overrides {
        dataset: a.dataset,
        out: a.out,
        seed: a.seed,
        ratio: a.ratio,
        lambda_sat: a.lambda_sat,
        lambda_therm: a.lambda_therm,
        no_phy: a.no_phy,
        epochs: a.epochs,
        learning_rate: a.lr,
    });
    let r = run::cmd_train(&cfg)?;
    let last = r.log.last().expect("at least one epoch");
    println!("run         {}", r.dir.display());
    println!("windows     {} train, {} test", r.train_windows, r.test_windows);
    println!(
        "last epoch  data {:.6}  sat {:.6}  therm {:.6}  total {:.6}",
        last.data, last.sat, last.therm, last.total
    );
    Ok(())
}

fn print_report(r: &EvalReport) {
    println!("days        {}", r.days.len());
    println!("pixels      {}", r.valid_pixels);
    for (name, units, m) in [
        ("SIV", "km/day", r.pooled.siv),
        ("SIC", "%", r.pooled.sic.scaled(100.0)),
    ] {
        let acc = m.acc.map_or("undefined".to_string(), |a| format!("{a:.4}"));
        println!("{name:<4} RMSE {:.4} {units}  MAE {:.4} {units}  ACC {acc}", m.rmse, m.mae);
    }
    println!("violations  {:.4}", r.violation_rate);
}

fn print_rows(rows: &[ResultRow]) {
    println!("{:<32} {:<4} {:>10} {:>10} {:>8} {:>10}", "run", "var", "rmse", "mae", "acc", "p");
    for r in rows {
        let acc = r.acc.map_or("-".into(), |a| format!("{a:.4}"));
        let p = r.p.map_or("-".into(), |p| format!("{p:.4}"));
        println!("{:<32} {:<4} {:>10.4} {:>10.4} {:>8} {:>10}", r.run_id, r.variable, r.rmse, r.mae, acc, p);
    }
}

fn run_command(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => {
            let files = run::cmd_predict(&a.run, a.dataset.as_deref(), &a.dates, &a.out)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let range = a.from.zip(a.to);
            let r = run::cmd_evaluate(&a.run, a.dataset.as_deref(), range, &a.out)?;
            print_report(&r);
            Ok(())
        }
        Command::Sweep(a) => {
            let mut cfg = load_run_config(a.config.as_ref())?;
            cfg.apply(&Overrides {
                dataset: a.dataset,
                out: a.out,
                epochs: a.epochs,
                ..Overrides::default()
            });
            if let Some(s) = a.seed {
                cfg.sweep.seeds = vec![s];
            }
            if let Some(w) = a.workers {
                cfg.sweep.workers = w;
            }
            let rows = run::cmd_sweep(&cfg)?;
            print_rows(&rows);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run_command(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                log::error!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Command-line front end. Every subcommand resolves its options as
//! defaults, then the `--config` JSON file, then explicit flags, and the
//! process exits 0 on success, 1 when a scenario or skill fails, 2 on usage
//! errors, and 3 on internal errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tacsim_cli::assembly::{replay_report, run_assembly, AssemblyCfg};
use tacsim_cli::learncmd::{eval, gen_dataset, train, EvalCfg, GenDatasetCfg, TrainCfg};
use tacsim_cli::logio::{save_bytes, write_csv, write_json};
use tacsim_cli::plotdata::render_view;
use tacsim_cli::runs::{run_scenario, RunCfg};
use tacsim_cli::simcmd::{run_simulate, SimulateCfg};
use tacsim_cli::{load_config, CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "tacsim",
    version,
    about = "Simulated tactile skin, feedback skills, and an assembly rig"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Open-loop sensor episode with full per-marker dumps.
    Simulate {
        /// Scenario name: static-hold, press.
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Logged frames; 0 keeps the scenario default.
        #[arg(long)]
        frames: Option<usize>,
        /// Marker position noise, px; negative keeps the scenario default.
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// JSON config applied before flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-loop scenario driven by a feedback skill.
    Run {
        /// Scenario name: followme-pull-x, followme-pull-y, followme-pull-z,
        /// stuck-pen, handover, handover-adversarial, column-align.
        scenario: Option<String>,
        /// Skill name: force-track, object-track, in-hand-rot,
        /// handover-trigger, arm-rot; empty picks the scenario default.
        #[arg(long)]
        skill: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Logged frames; 0 keeps the scenario default.
        #[arg(long)]
        frames: Option<usize>,
        /// Marker position noise, px; negative keeps the scenario default.
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// JSON config applied before flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sample a labelled dataset from the rig.
    GenDataset {
        /// Dataset name: press, stir.
        dataset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON config applied before flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit a model on a generated dataset.
    Train {
        /// Model name: krr, mlp.
        model: Option<String>,
        /// Dataset directory (gen-dataset output).
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// KRR kernel width; negative cross-validates.
        #[arg(long)]
        gamma: Option<f64>,
        /// KRR ridge strength; negative cross-validates.
        #[arg(long)]
        lambda: Option<f64>,
        /// MLP epochs; 0 keeps the trainer default.
        #[arg(long)]
        epochs: Option<usize>,
        /// MLP learning rate; 0 keeps the trainer default.
        #[arg(long)]
        lr: Option<f64>,
        /// JSON config applied before flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a trained model on a dataset's test split.
    Eval {
        /// Model name: krr, mlp.
        #[arg(value_name = "MODEL")]
        model_kind: Option<String>,
        /// Trained model JSON.
        #[arg(long = "model", value_name = "PATH")]
        model_path: Option<String>,
        /// Dataset directory (gen-dataset output).
        #[arg(long)]
        data: Option<String>,
        /// JSON config applied before flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Scripted locate-scan-grasp-align-place pipeline.
    Assembly {
        /// Variant: default, stuck-column, no-object.
        variant: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Marker position noise, px; negative keeps the variant default.
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// JSON config applied before flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Flatten a log into a plot-ready CSV table.
    Plotdata {
        /// Source log (episode or eval predictions JSONL).
        log: PathBuf,
        /// View name: fig3, fig5, fig6, fig8, fig9.
        #[arg(long)]
        view: String,
        /// Output CSV path.
        #[arg(long, default_value = "plot.csv")]
        out: PathBuf,
    },
}

macro_rules! override_with {
    ($cfg:expr; $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $field { $cfg.$field = v; } )+
    };
}

fn dispatch(cmd: Cmd) -> CliResult<bool> {
    match cmd {
        Cmd::Simulate { scenario, seed, frames, noise_sigma, config, out } => {
            let mut cfg: SimulateCfg = load_config(config.as_deref())?;
            override_with!(cfg; scenario, seed, frames, noise_sigma);
            let outcome = run_simulate(&cfg)?;
            save_bytes(&out.join("episode.jsonl"), &outcome.log)?;
            write_csv(&out.join("markers.csv"), &outcome.marker_rows)?;
            println!(
                "simulate {} seed {}: {} marker rows -> {}",
                cfg.scenario,
                cfg.seed,
                outcome.marker_rows.len(),
                out.display()
            );
            Ok(true)
        }
        Cmd::Run { scenario, skill, seed, frames, noise_sigma, config, out } => {
            let mut cfg: RunCfg = load_config(config.as_deref())?;
            override_with!(cfg; scenario, skill, seed, frames, noise_sigma);
            let outcome = run_scenario(&cfg)?;
            save_bytes(&out.join("episode.jsonl"), &outcome.log)?;
            write_json(&out.join("summary.json"), &outcome.summary)?;
            let s = &outcome.summary;
            println!(
                "run {} + {} seed {}: {} -> {}",
                s.scenario,
                s.skill,
                s.seed,
                if s.success { "success" } else { "failure" },
                out.display()
            );
            Ok(outcome.success)
        }
        Cmd::GenDataset { dataset, seed, config, out } => {
            let mut cfg: GenDatasetCfg = load_config(config.as_deref())?;
            override_with!(cfg; dataset, seed);
            let meta = gen_dataset(&cfg.dataset, cfg.seed, &out)?;
            println!(
                "dataset {}: {} train + {} test samples, {} features -> {}",
                meta.dataset,
                meta.n_train,
                meta.n_test,
                meta.feature_dim,
                out.display()
            );
            Ok(true)
        }
        Cmd::Train { model, data, seed, gamma, lambda, epochs, lr, config, out } => {
            let mut cfg: TrainCfg = load_config(config.as_deref())?;
            override_with!(cfg; model, data, seed, gamma, lambda, epochs, lr);
            let line = train(&cfg, &out)?;
            println!("{line}");
            Ok(true)
        }
        Cmd::Eval { model_kind, model_path, data, config, out } => {
            let mut cfg: EvalCfg = load_config(config.as_deref())?;
            if let Some(v) = model_kind {
                cfg.model = v;
            }
            override_with!(cfg; model_path, data);
            let line = eval(&cfg.model, Path::new(&cfg.model_path), Path::new(&cfg.data), &out)?;
            println!("{line}");
            Ok(true)
        }
        Cmd::Assembly { variant, seed, noise_sigma, config, out } => {
            let mut cfg: AssemblyCfg = load_config(config.as_deref())?;
            override_with!(cfg; variant, seed, noise_sigma);
            let (report, log) = run_assembly(&cfg)?;
            if report.success {
                replay_report(&log, &report, &cfg)
                    .map_err(|e| CliError::Internal(format!("replay check failed: {e}")))?;
            }
            save_bytes(&out.join("episode.jsonl"), &log)?;
            write_json(&out.join("report.json"), &report)?;
            match report.phases.iter().find(|p| !p.success) {
                None => println!(
                    "assembly {} seed {}: success, {} phases -> {}",
                    report.variant,
                    report.seed,
                    report.phases.len(),
                    out.display()
                ),
                Some(p) => println!(
                    "assembly {} seed {}: failed at {} ({}) -> {}",
                    report.variant,
                    report.seed,
                    p.name,
                    p.error.as_deref().unwrap_or("no detail"),
                    out.display()
                ),
            }
            Ok(report.success)
        }
        Cmd::Plotdata { log, view, out } => {
            let bytes = render_view(&log, &view)?;
            save_bytes(&out, &bytes)?;
            println!("view {view} -> {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

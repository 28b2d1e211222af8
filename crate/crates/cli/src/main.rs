use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gazemap_cli::commands::{self, EvaluateArgs, MapPaths, TrainOptions};
use gazemap_cli::server;
use gazemap_core::classify::Family;
use gazemap_core::config::SessionConfig;
use gazemap_core::eval::Averaging;

#[derive(Parser)]
#[command(name = "gazemap", version, about = "Map teacher gaze onto student identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Weighted,
    Macro,
}

#[derive(Subcommand)]
enum Command {
    /// Detect faces in every frame and write the detections cache.
    Detect {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the annotation API.
    AnnotateServe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Grid-search, refit and save classifiers from labeled crops.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// rf, svm, knn, gb, dt or all.
        #[arg(long, default_value = "all")]
        classifier: String,
        /// `default` or a grid TOML file; overrides the config.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Attribute each frame's gaze to a student.
    Map {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gaze: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_distance: Option<f64>,
    },
    /// Score attention records against annotated truth.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = AveragingArg::Weighted)]
        averaging: AveragingArg,
        /// Second annotation pass; writes Cohen's kappa next to the report.
        #[arg(long)]
        truth2: Option<PathBuf>,
    },
    /// Generate a synthetic classroom session.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also detect faces and write scripted identity labels.
        #[arg(long)]
        label: bool,
    },
    /// Combine evaluation reports into one results table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf) -> Result<SessionConfig> {
    if !path.is_file() {
        return Err(commands::MissingInput {
            what: "session config",
            path: path.clone(),
        }
        .into());
    }
    SessionConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn parse_families(s: &str) -> Result<Vec<Family>> {
    if s == "all" {
        return Ok(Family::ALL.to_vec());
    }
    s.split(',').map(|f| Ok(f.trim().parse::<Family>()?)).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect { config } => {
            let cfg = load_config(&config)?;
            let faces = commands::cmd_detect(&cfg)?;
            println!("{} faces -> {}", faces.len(), cfg.paths.detections.display());
        }
        Command::AnnotateServe { config, port, host } => {
            let cfg = load_config(&config)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad host or port")?;
            tokio::runtime::Runtime::new()?.block_on(server::serve(&cfg, addr))?;
        }
        Command::Train {
            config,
            classifier,
            grid,
            folds,
            seed,
        } => {
            let cfg = load_config(&config)?;
            let mut opts = TrainOptions::from_config(&cfg, parse_families(&classifier)?);
            if let Some(g) = grid {
                opts.grid = g;
            }
            if let Some(k) = folds {
                opts.folds = k;
            }
            if let Some(s) = seed {
                opts.seed = s;
            }
            for (family, _) in commands::cmd_train(&cfg, &opts)? {
                println!("{family} -> {}", commands::model_path(&cfg, family).display());
            }
        }
        Command::Map {
            config,
            model,
            gaze,
            detections,
            out,
            max_distance,
        } => {
            let cfg = load_config(&config)?;
            let mut paths = MapPaths::defaults(&cfg, Family::Knn);
            let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            paths.out = out.unwrap_or_else(|| cfg.paths.reports.join(format!("attention_{stem}.jsonl")));
            paths.summary = paths.out.with_extension("summary.json");
            paths.model = model;
            if let Some(g) = gaze {
                paths.gaze = g;
            }
            if let Some(d) = detections {
                paths.detections = d;
            }
            let summary = commands::cmd_map(&cfg, &paths, max_distance)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Evaluate {
            config,
            pred,
            model,
            truth,
            out,
            averaging,
            truth2,
        } => {
            let cfg = load_config(&config)?;
            let args = EvaluateArgs {
                pred,
                truth: truth.unwrap_or_else(|| cfg.paths.truth.clone()),
                model,
                out,
                averaging: match averaging {
                    AveragingArg::Weighted => Averaging::Weighted,
                    AveragingArg::Macro => Averaging::Macro,
                },
                truth2,
            };
            let report = commands::cmd_evaluate(&cfg, &args)?;
            print!("{}", report.render(gazemap_core::eval::ReportFormat::Markdown)?);
        }
        Command::Synth { spec, out, label } => {
            commands::cmd_synth(&spec, &out, label)?;
            println!("session -> {}", out.join(gazemap_core::synth::SESSION_FILE).display());
        }
        Command::Report { reports, out } => {
            let table = commands::cmd_report(&reports)?;
            match out {
                Some(p) => std::fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(gazemap_cli::exit_code(&e) as u8)
        }
    }
}

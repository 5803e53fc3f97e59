use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mlec::config::{LoadedConfig, RunConfig};
use mlec::corpus::EmotionLabelSet;
use mlec::error::{Error, ErrorKind, Result};
use mlec::loss::LossMode;
use mlec::metrics::EvaluationReport;
use mlec::pipeline::{self, RunManifest};
use mlec::preprocess::PreprocessConfig;

/// Multi-label emotion classification over stacked token embeddings.
#[derive(Parser)]
#[command(name = "mlec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean the Tweet column of a labelled TSV.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Run config whose `[preprocess]` section and labels to use.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Extract, stack and train; writes checkpoint, report and manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override `loss.mode`.
        #[arg(long, value_parser = parse_mode, conflicts_with = "sweep")]
        mode: Option<LossMode>,
        /// Train all five loss modes into `<output_dir>/<mode>/`.
        #[arg(long)]
        sweep: bool,
    },
    /// Score a checkpoint on a labelled TSV.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Build inputs with this config's preprocessing and backends.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report directory; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict label sets for an `ID`/`Tweet` TSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print reports or compare run manifests.
    Report {
        /// Manifest or report files, or run directories.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<LossMode, String> {
    LossMode::parse(s).ok_or_else(|| {
        let all: Vec<&str> = LossMode::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown loss mode `{s}` (expected one of {})", all.join(", "))
    })
}

fn load_config(path: &Path) -> Result<LoadedConfig> {
    RunConfig::load(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { input, output, config } => {
            let (pre, schema) = match config {
                Some(c) => {
                    let loaded = load_config(&c)?;
                    (loaded.preprocess_config()?, loaded.config.schema()?)
                }
                None => (PreprocessConfig::default(), EmotionLabelSet::default()),
            };
            let s = pipeline::cmd_preprocess(&input, &output, &pre, &schema)?;
            println!(
                "{} rows in, {} rows out, {} empty (listed in {})",
                s.rows_in,
                s.rows_out,
                s.empty_ids.len(),
                s.log_path.display()
            );
        }
        Command::Train { config, mode, sweep } => {
            let loaded = load_config(&config)?;
            let outcomes = if sweep {
                pipeline::cmd_sweep(&loaded)?
            } else {
                vec![pipeline::cmd_train(&loaded, mode)?]
            };
            for o in &outcomes {
                let r = &o.manifest.report;
                println!(
                    "{}: micro-F1 {:.4}, Jaccard {:.4}, Hamming {:.4} ({} split) -> {}",
                    o.manifest.mode,
                    r.f1_micro,
                    r.jaccard_accuracy,
                    r.hamming_loss,
                    o.manifest.evaluated_on,
                    o.output_dir.display()
                );
            }
            if outcomes.len() > 1 {
                let manifests: Vec<RunManifest> = outcomes.into_iter().map(|o| o.manifest).collect();
                print!("{}", pipeline::render_comparison(&manifests));
            }
        }
        Command::Evaluate {
            checkpoint,
            data,
            config,
            out,
        } => {
            let loaded = config.as_deref().map(load_config).transpose()?;
            let out = out.unwrap_or_else(|| checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
            let report = pipeline::cmd_evaluate(&checkpoint, &data, loaded.as_ref(), &out)?;
            print!("{}", report.render_text());
        }
        Command::Predict {
            checkpoint,
            input,
            output,
            threshold,
        } => {
            let pred = pipeline::cmd_predict(&checkpoint, &input, threshold, &output)?;
            println!("{} rows -> {}", pred.rows(), output.display());
        }
        Command::Report { paths } => {
            let mut manifests = Vec::new();
            for p in paths {
                let p = if p.is_dir() { p.join(pipeline::MANIFEST_FILE) } else { p };
                match RunManifest::load(&p) {
                    Ok(m) => manifests.push(m),
                    Err(manifest_err) => {
                        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                        match serde_json::from_str::<EvaluationReport>(&text) {
                            Ok(r) => print!("{}", r.render_text()),
                            Err(_) => return Err(manifest_err),
                        }
                    }
                }
            }
            if !manifests.is_empty() {
                print!("{}", pipeline::render_comparison(&manifests));
            }
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Runtime => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MLEC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {detail}", kind.code());
            ExitCode::from(exit_code(kind))
        }
    }
}

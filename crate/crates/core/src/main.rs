use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use veritext::artifact;
use veritext::config::{ExperimentConfig, SEED_ENV};
use veritext::corpus::{corpus_stats, load_dataset, load_unlabeled, DataFormat, Label, Pipeline};
use veritext::eval::{confusion, metrics, run_experiment};
use veritext::gradcheck::{run_gradcheck, GradcheckOptions};
use veritext::pipeline::{FeatureKind, ModelKind, TextClassifier};
use veritext::{Error, Result};

const GRADCHECK_FAILED: u8 = 6;

#[derive(Parser)]
#[command(name = "veritext", version, about = "Fake-news text classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print post counts and word statistics of a dataset file.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "raw")]
        pipeline: Pipeline,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
    },
    /// Fit a model on a labeled file and write a model file.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long, value_enum)]
        features: FeatureKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
    },
    /// Score a model file on a labeled file.
    Evaluate {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
    },
    /// Label every row of an input file; writes `id<TAB>label`.
    Predict {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
    },
    /// Run the configured grid and write the results CSV and text table.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Perturb the analytic gradient of this block (negative control).
        #[arg(long, hide = true)]
        corrupt_block: Option<String>,
    },
}

fn format_for(path: &Path, format: Option<DataFormat>) -> DataFormat {
    format.unwrap_or_else(|| DataFormat::from_path(path))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = config.apply_env_seed()? {
        eprintln!("using seed {seed} from {SEED_ENV}");
    }
    Ok(config)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Stats { data, pipeline, format } => {
            let corpus = load_dataset(&data, format_for(&data, format))?;
            println!("{}", corpus_stats(&corpus, pipeline)?);
        }
        Command::Train {
            model,
            features,
            data,
            config,
            out,
            format,
        } => {
            veritext::pipeline::check_pair(model, features)?;
            let config = load_config(config.as_deref())?;
            let corpus = load_dataset(&data, format_for(&data, format))?;
            let texts: Vec<&str> = corpus.texts().collect();
            let start = Instant::now();
            let (clf, log) = TextClassifier::fit(&config, model, features, &texts, &corpus.labels())?;
            let elapsed = start.elapsed().as_secs_f64();
            artifact::save(&out, &clf, &config)?;
            match log.final_objective() {
                Some(obj) => println!("final objective {obj:.6} after {} epochs", log.epochs()),
                None => println!("final objective n/a"),
            }
            println!("trained in {elapsed:.2}s; wrote {}", out.display());
        }
        Command::Evaluate {
            model_file,
            data,
            csv,
            format,
        } => {
            let (clf, header) = artifact::load(&model_file)?;
            let corpus = load_dataset(&data, format_for(&data, format))?;
            let texts: Vec<&str> = corpus.texts().collect();
            let pred: Vec<Label> = clf.predict(&texts)?.iter().map(|p| p.label).collect();
            let report = metrics(&confusion(&pred, &corpus.labels())?);
            println!(
                "model\t{}({})",
                header.kind.method_name(),
                header.features.display_name()
            );
            println!("{report}");
            if let Some(path) = csv {
                let c = report.confusion;
                let body = format!(
                    "model,features,accuracy,f1_weighted,f1_positive,precision,recall,tp,fp,fn,tn\n{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}\n",
                    header.kind.as_str(),
                    header.features.as_str(),
                    report.accuracy,
                    report.f1_weighted,
                    report.f1_positive,
                    report.precision,
                    report.recall,
                    c.tp,
                    c.fp,
                    c.fn_,
                    c.tn
                );
                write_file(&path, body.as_bytes())?;
            }
        }
        Command::Predict {
            model_file,
            input,
            output,
            format,
        } => {
            let (clf, _) = artifact::load(&model_file)?;
            let posts = load_unlabeled(&input, format_for(&input, format))?;
            let texts: Vec<&str> = posts.iter().map(|p| p.text.as_str()).collect();
            let preds = clf.predict(&texts)?;
            let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::Artifact(format!("writing predictions: {e}"));
            w.write_record(["id", "label"]).map_err(csv_err)?;
            for (post, p) in posts.iter().zip(&preds) {
                w.write_record([post.id.as_str(), p.label.as_str()]).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Artifact(e.to_string()))?;
            write_file(&output, &bytes)?;
        }
        Command::Experiment { config, csv, table } => {
            let config = load_config(Some(&config))?;
            let results = run_experiment(&config)?;
            let csv_path = csv.unwrap_or_else(|| config.output.csv.clone());
            let table_path = table.unwrap_or_else(|| config.output.table.clone());
            write_file(&csv_path, results.to_csv().as_bytes())?;
            write_file(&table_path, results.to_text().as_bytes())?;
            print!("{}", results.summary());
            println!("wrote {} and {}", csv_path.display(), table_path.display());
        }
        Command::Gradcheck { corrupt_block } => {
            let report = run_gradcheck(&GradcheckOptions { corrupt: corrupt_block })?;
            print!("{report}");
            if !report.passed() {
                for b in report.failures() {
                    eprintln!(
                        "error: gradient check failed for block {} (max relative error {:.3e} >= {:.0e})",
                        b.block, b.max_relative_error, b.threshold
                    );
                }
                return Ok(GRADCHECK_FAILED);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("veritext=info")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! The `btd` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::clustering::{DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::heads::HeadConfig;
use crate::imageio::{generate_synthetic, read_pgm_file, write_pgm_file, DatasetManifest, ManifestEntry};
use crate::nn::{preset_grad_check, EpochRecord, NnError};
use crate::pipeline::{
    compare_reports, evaluate, fit_head, load_dataset, manifest_dataset, prepare_for_model, preprocess_image,
    run_experiment, run_in_memory, synthetic_split, ExperimentConfig, MetricSnapshot, ModelArtifact, PipelineError,
    Preprocessing, Report, SyntheticSource, MODEL_FILE, REPORT_FILE,
};

#[derive(Debug, Parser)]
#[command(
    name = "btd",
    version,
    about = "Brain-tumor MRI detection: clustering, CNN and classifier heads"
)]
struct Cli {
    /// Global seed; overrides the `seed` of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic PGM corpus and its manifest.
    Synth {
        #[arg(long)]
        n_per_class: usize,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        /// Images of each label held out for testing [default: n-per-class / 5]
        #[arg(long)]
        test_per_class: Option<usize>,
    },
    /// Quantize a PGM file, or every PGM in a directory, to k intensity levels.
    Preprocess {
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Train the CNN with its SoftMax head and write the model.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classifier-head operations.
    Head {
        #[command(subcommand)]
        command: HeadCommand,
    },
    /// Evaluate a model on the test split of a manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment: preprocess, train, fit head, evaluate.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classify one PGM image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Finite-difference check of the network gradients (exit 0 iff it passes).
    Gradcheck {
        #[arg(long, default_value = "tiny-32")]
        preset: String,
    },
    /// Report operations.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HeadKind {
    Softmax,
    Rbf,
    Dt,
}

#[derive(Debug, Subcommand)]
enum HeadCommand {
    /// Fit a head on a trained model's penultimate features.
    Train(HeadTrainArgs),
}

#[derive(Debug, Args)]
struct HeadTrainArgs {
    #[arg(long, value_enum)]
    kind: HeadKind,
    #[arg(long)]
    model: PathBuf,
    /// Experiment config naming the data; its `head` supplies hyperparameters when the kind matches.
    #[arg(long)]
    config: PathBuf,
    /// Where to write the new model [default: overwrite --model]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Tabulate the methods of several reports.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Emit CSV instead of JSON.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage or validation error, 2 runtime error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn make_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn progress(err: &mut dyn Write) -> impl FnMut(&EpochRecord) + '_ {
    move |r: &EpochRecord| {
        let _ = writeln!(
            err,
            "epoch {:>3}  loss {:.6}  train acc {:.4}",
            r.epoch, r.mean_loss, r.train_accuracy
        );
    }
}

fn print_methods(out: &mut dyn Write, report: &Report) {
    for m in &report.methods {
        let _ = writeln!(
            out,
            "{}: accuracy {} specificity {} sensitivity {} precision {} ({} misclassified)",
            m.name,
            m.metrics.accuracy,
            m.metrics.specificity,
            m.metrics.sensitivity,
            m.metrics.precision,
            m.misclassified.len()
        );
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, PipelineError> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth {
            n_per_class,
            size,
            out: dir,
            test_per_class,
        } => {
            let src = SyntheticSource {
                seed: seed.unwrap_or(0),
                n_per_class,
                size,
                test_per_class,
            };
            let test = src.test_count();
            if n_per_class < 2 || size < 16 || test == 0 || test >= n_per_class {
                return Err(PipelineError::Config(format!(
                    "need n-per-class >= 2, size >= 16 and 1 <= test-per-class < n-per-class (got {n_per_class}, {size}, {test})"
                )));
            }
            make_dir(&dir)?;
            let mut entries = Vec::new();
            for (i, (img, label)) in generate_synthetic(src.seed, n_per_class, size).into_iter().enumerate() {
                let name = PathBuf::from(format!("{}_{i:04}.pgm", label.as_str()));
                let path = dir.join(&name);
                write_pgm_file(&path, &img).map_err(|source| PipelineError::Image {
                    id: path.display().to_string(),
                    source,
                })?;
                entries.push(ManifestEntry {
                    path: name,
                    label,
                    split: synthetic_split(n_per_class, test, i),
                });
            }
            let manifest = DatasetManifest::new(entries)?;
            write_file(&dir.join("manifest.json"), &manifest.to_json())?;
            let c = manifest.counts();
            let _ = writeln!(
                out,
                "wrote {} images to {} ({} train, {} test)",
                2 * n_per_class,
                dir.display(),
                c.train_total(),
                c.test_total()
            );
            Ok(0)
        }
        Command::Preprocess {
            k,
            input,
            out: dest,
            max_iter,
            tol,
        } => {
            if k == 0 || max_iter == 0 || !(tol >= 0.0 && tol.is_finite()) {
                return Err(PipelineError::Config(
                    "need k >= 1, max-iter >= 1 and a finite tol >= 0".into(),
                ));
            }
            let pre = Preprocessing::Cluster { k, max_iter, tol };
            let global = seed.unwrap_or(0);
            let quantize = |from: &Path, to: &Path| -> Result<(), PipelineError> {
                let id = from.display().to_string();
                let img = read_pgm_file(from).map_err(|source| PipelineError::Image { id: id.clone(), source })?;
                let q =
                    preprocess_image(&img, &pre, global).map_err(|source| PipelineError::Preprocess { id, source })?;
                write_pgm_file(to, &q).map_err(|source| PipelineError::Image {
                    id: to.display().to_string(),
                    source,
                })
            };
            if input.is_dir() {
                make_dir(&dest)?;
                let listing = std::fs::read_dir(&input).map_err(|e| PipelineError::Io {
                    path: input.clone(),
                    source: e,
                })?;
                let mut files: Vec<PathBuf> = listing.filter_map(|e| e.ok().map(|e| e.path())).collect();
                files.sort();
                let mut count = 0;
                for f in &files {
                    let name = f.file_name().expect("directory entries have names");
                    if f.extension().is_some_and(|e| e == "pgm") {
                        quantize(f, &dest.join(name))?;
                        count += 1;
                    } else if name == "manifest.json" {
                        std::fs::copy(f, dest.join(name)).map_err(|e| PipelineError::Io {
                            path: f.clone(),
                            source: e,
                        })?;
                    }
                }
                let _ = writeln!(out, "quantized {count} images into {}", dest.display());
            } else {
                quantize(&input, &dest)?;
                let _ = writeln!(out, "wrote {}", dest.display());
            }
            Ok(0)
        }
        Command::Train { config } => {
            let mut cfg = load_config(&config, seed)?;
            cfg.head = HeadConfig::Softmax;
            let result = run_in_memory(&cfg, progress(err))?;
            make_dir(&cfg.output_dir)?;
            let model_path = cfg.output_dir.join(MODEL_FILE);
            result.model.save(&model_path)?;
            write_file(&cfg.output_dir.join(REPORT_FILE), &result.report.to_json())?;
            print_methods(out, &result.report);
            let _ = writeln!(out, "model written to {}", model_path.display());
            Ok(0)
        }
        Command::Head {
            command: HeadCommand::Train(args),
        } => {
            let cfg = load_config(&args.config, seed)?;
            let mut model = ModelArtifact::load(&args.model)?;
            let head_cfg = match (args.kind, cfg.head) {
                (HeadKind::Softmax, _) => HeadConfig::Softmax,
                (HeadKind::Rbf, h @ HeadConfig::Rbf { .. }) | (HeadKind::Dt, h @ HeadConfig::Dt { .. }) => h,
                (HeadKind::Rbf, _) => HeadConfig::rbf_default(),
                (HeadKind::Dt, _) => HeadConfig::dt_default(),
            };
            let data = load_dataset(&cfg)?;
            let train_set = prepare_for_model(&data.train, &model)?;
            model.head = fit_head(&head_cfg, &model.network, &model.params, &train_set, model.seed)?;
            model.metrics = None;
            if !data.test.is_empty() {
                let result = evaluate(&model, &data.test, &model.method_name())?;
                model.metrics = Some(MetricSnapshot {
                    method: result.name.clone(),
                    confusion: result.confusion,
                    metrics: result.metrics,
                });
                print_methods(
                    out,
                    &Report {
                        config: serde_json::Value::Null,
                        methods: vec![result],
                        history: Vec::new(),
                        timings_ms: Default::default(),
                    },
                );
            }
            let dest = args.out.unwrap_or(args.model);
            model.save(&dest)?;
            let _ = writeln!(out, "{} head written to {}", model.head.kind(), dest.display());
            Ok(0)
        }
        Command::Eval {
            model,
            manifest,
            out: report_path,
        } => {
            let artifact = ModelArtifact::load(&model)?;
            let data = manifest_dataset(&manifest)?;
            if data.test.is_empty() {
                return Err(PipelineError::Config(format!(
                    "{} has no test entries",
                    manifest.display()
                )));
            }
            let result = evaluate(&artifact, &data.test, &artifact.method_name())?;
            let report = Report {
                config: json!({ "model": model, "manifest": manifest }),
                methods: vec![result],
                history: Vec::new(),
                timings_ms: Default::default(),
            };
            write_file(&report_path, &report.to_json())?;
            print_methods(out, &report);
            Ok(0)
        }
        Command::Run { config } => {
            let cfg = load_config(&config, seed)?;
            let report = run_experiment(&cfg, progress(err))?;
            print_methods(out, &report);
            let _ = writeln!(out, "report written to {}", cfg.output_dir.join(REPORT_FILE).display());
            Ok(0)
        }
        Command::Predict { model, image } => {
            let artifact = ModelArtifact::load(&model)?;
            let img = read_pgm_file(&image).map_err(|source| PipelineError::Image {
                id: image.display().to_string(),
                source,
            })?;
            let p = artifact.predict_image(&img)?;
            let _ = writeln!(out, "{}", serde_json::to_string(&p).expect("prediction serializes"));
            Ok(0)
        }
        Command::Gradcheck { preset } => {
            let seed = seed.unwrap_or(0);
            let report = preset_grad_check(&preset, seed).map_err(|e| match e {
                NnError::UnknownPreset(_) => PipelineError::Config(e.to_string()),
                other => PipelineError::Train(other),
            })?;
            for l in &report.layers {
                let _ = writeln!(
                    out,
                    "layer {:>2} {:<16} checked {:>4}  kinks {:>3}  max rel err {:.3e}",
                    l.layer, l.kind, l.checked, l.skipped_kinks, l.max_rel_error
                );
            }
            let verdict = if report.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{verdict}: max relative error {:.3e} (tolerance {:.0e})",
                report.max_rel_error(),
                report.tolerance
            );
            Ok(if report.passed { 0 } else { 2 })
        }
        Command::Report {
            command: ReportCommand::Compare { files, csv, out: dest },
        } => {
            let reports: Vec<Report> = files.iter().map(|f| Report::load(f)).collect::<Result<_, _>>()?;
            let table = compare_reports(&reports)?;
            let text = if csv { table.to_csv() } else { table.to_json() + "\n" };
            match dest {
                Some(p) => write_file(&p, &text)?,
                None => {
                    let _ = out.write_all(text.as_bytes());
                }
            }
            Ok(0)
        }
    }
}

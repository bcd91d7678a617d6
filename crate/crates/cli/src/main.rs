//! `ausc`: scan → split → train → evaluate → classify / serve.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 model, 4 I/O.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ausc_core::train::{stratified_split, Control, EpochRecord};
use ausc_core::{
    load_manifest, metrics_from_confusion, render_table, save_manifest, scan_dataset, train, AudioClip, Classifier32, ErrorKind, FeaturePipeline,
    Layout, ModelConfig, Organ, ParameterSet32, Split, TableStyle, TrainConfig,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ausc", version, about = "Heart and lung sound classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrganArg {
    Heart,
    Lung,
    Auto,
}

impl OrganArg {
    fn organ(self) -> Option<Organ> {
        match self {
            OrganArg::Heart => Some(Organ::Heart),
            OrganArg::Lung => Some(Organ::Lung),
            OrganArg::Auto => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Index a dataset directory into a manifest CSV.
    Scan {
        #[arg(long)]
        root: PathBuf,
        /// yaseen, icbhi or flat
        #[arg(long)]
        layout: Layout,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/val/test splits per class, rewriting the manifest in place.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().val_fraction)]
        val: f64,
        #[arg(long, default_value_t = TrainConfig::default().test_fraction)]
        test: f64,
    },
    /// Train on the manifest's train split, selecting on its val split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Best-epoch model artifact.
        #[arg(long)]
        out: PathBuf,
        /// Training record; defaults to `<out>.run.txt`.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().batch_size)]
        batch: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = TrainConfig::default().early_stop_patience)]
        patience: usize,
        /// Skip oversampling of minority classes.
        #[arg(long)]
        no_balance: bool,
        /// Use a much smaller network (for quick experiments).
        #[arg(long)]
        small: bool,
    },
    /// Per-class metric tables and the confusion matrix for one split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Write the confusion matrix CSV here instead of standard output.
        #[arg(long)]
        confusion: Option<PathBuf>,
        /// Emit the tables as CSV.
        #[arg(long)]
        csv: bool,
        /// Name printed in the Model column.
        #[arg(long, default_value = "CNN-GRU")]
        name: String,
    },
    /// Classify one WAV file; prints a single JSON line.
    Classify {
        #[arg(long)]
        model: PathBuf,
        file: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        organ: OrganArg,
    },
    /// Log-mel spectrograms before and after filtering, as CSV and PGM.
    Spectrogram {
        file: PathBuf,
        /// Output prefix: writes `<out>_raw.{csv,pgm}` and `<out>_filtered.{csv,pgm}`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service. Other settings come from AUSC_* and SMTP_* variables.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] ausc_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Service(#[from] ausc_service::StartupError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } => 4,
            CliError::Service(_) => 4,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Model => 3,
                ErrorKind::Io => 4,
            },
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Model errors for anything that goes wrong while loading an artifact, so
/// a missing file is distinguishable from bad data further on.
fn load_classifier(path: &Path) -> CliResult<Classifier32> {
    Classifier32::load(path).map_err(|e| match e {
        ausc_core::Error::Io { .. } => e.into(),
        other if other.kind() == ErrorKind::Model => other.into(),
        other => ausc_core::Error::Corrupt(other.to_string()).into(),
    })
}

fn run(cli: Cli) -> CliResult {
    let mut stdout = std::io::stdout().lock();
    let out_err = |source| CliError::Io { path: "<stdout>".into(), source };
    match cli.command {
        Command::Scan { root, layout, out } => {
            let m = scan_dataset(&root, layout)?;
            save_manifest(&m, &out)?;
            let counts = m.class_counts(None);
            writeln!(stdout, "{} recordings", m.len()).map_err(out_err)?;
            for c in ausc_core::ClassLabel::ALL.iter().filter(|c| counts[c.index()] > 0) {
                writeln!(stdout, "{c},{}", counts[c.index()]).map_err(out_err)?;
            }
        }
        Command::Split { manifest, seed, val, test } => {
            let m = load_manifest(&manifest)?;
            let split = stratified_split(&m, val, test, seed)?;
            save_manifest(&split, &manifest)?;
            writeln!(stdout, "class,train,val,test").map_err(out_err)?;
            let per = [Split::Train, Split::Val, Split::Test].map(|s| split.class_counts(Some(s)));
            for c in ausc_core::ClassLabel::ALL {
                let row = per.map(|p| p[c.index()]);
                if row.iter().any(|&n| n > 0) {
                    writeln!(stdout, "{c},{},{},{}", row[0], row[1], row[2]).map_err(out_err)?;
                }
            }
        }
        Command::Train { manifest, out, run, seed, epochs, batch, lr, patience, no_balance, small } => {
            let m = load_manifest(&manifest)?;
            let cfg = TrainConfig {
                learning_rate: lr,
                batch_size: batch,
                max_epochs: epochs,
                early_stop_patience: patience,
                seed,
                balance: !no_balance,
                ..TrainConfig::default()
            };
            cfg.validate()?;
            let model_cfg = if small { ModelConfig { input_len: 52, ..ModelConfig::reduced() } } else { ModelConfig::default() };
            writeln!(stdout, "epoch,train_loss,train_accuracy,val_loss,val_accuracy,improved").map_err(out_err)?;
            let mut observer = |r: &EpochRecord, _: &ParameterSet32| {
                let mut o = std::io::stdout().lock();
                let _ = writeln!(o, "{},{:.6},{:.4},{:.6},{:.4},{}", r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.improved);
                let _ = o.flush();
                Control::Continue
            };
            drop(stdout);
            let outcome = train::<f32>(&m, &cfg, &model_cfg, Some(&out), &mut observer)?;
            let run_path = run.unwrap_or_else(|| with_suffix(&out, ".run.txt"));
            outcome.run.save(&run_path)?;
            eprintln!(
                "best epoch {} (val accuracy {:.4}), stopped: {:?}; model {}, record {}",
                outcome.run.best_epoch,
                outcome.run.best_val_accuracy,
                outcome.run.stop_reason,
                out.display(),
                run_path.display()
            );
            return Ok(());
        }
        Command::Evaluate { manifest, model, split, confusion, csv, name } => {
            let m = load_manifest(&manifest)?;
            let classifier = load_classifier(&model)?;
            let cm = classifier.evaluate(&m, split)?;
            for (organ, style) in [(Organ::Heart, TableStyle::Heart), (Organ::Lung, TableStyle::Lung)] {
                let sub = cm.restrict(organ);
                if sub.total() == 0 {
                    continue;
                }
                let report = metrics_from_confusion(&sub)?;
                let style = if csv { TableStyle::Csv } else { style };
                write!(stdout, "{}", render_table(&report, style, &name)).map_err(out_err)?;
                writeln!(stdout).map_err(out_err)?;
            }
            let all = metrics_from_confusion(&cm)?;
            writeln!(stdout, "overall accuracy {:.4} ({} recordings)", all.overall_accuracy, all.total).map_err(out_err)?;
            match confusion {
                Some(path) => write_file(&path, cm.to_csv().as_bytes())?,
                None => write!(stdout, "\n{}", cm.to_csv()).map_err(out_err)?,
            }
        }
        Command::Classify { model, file, organ } => {
            let classifier = load_classifier(&model)?;
            let clip = ausc_core::read_wav::<f32>(&file)?;
            let result = classifier.classify_clip(&clip, organ.organ())?;
            let line = serde_json::to_string(&result).map_err(|e| CliError::Usage(e.to_string()))?;
            writeln!(stdout, "{line}").map_err(out_err)?;
        }
        Command::Spectrogram { file, out } => {
            let clip: AudioClip<f64> = ausc_core::read_wav(&file)?;
            let (raw, filtered) = FeaturePipeline::<f64>::default().spectrograms(&clip)?;
            for (tag, spec) in [("raw", &raw), ("filtered", &filtered)] {
                for (ext, bytes) in [("csv", spec.to_csv().into_bytes()), ("pgm", spec.to_pgm())] {
                    let path = with_suffix(&out, &format!("_{tag}.{ext}"));
                    write_file(&path, &bytes)?;
                    writeln!(stdout, "{}", path.display()).map_err(out_err)?;
                }
            }
        }
        Command::Serve { model, bind, data_dir } => {
            let mut cfg = ausc_service::ServiceConfig::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
            cfg.model_path = model.or(cfg.model_path);
            cfg.bind_addr = bind.unwrap_or(cfg.bind_addr);
            cfg.data_dir = data_dir.unwrap_or(cfg.data_dir);
            drop(stdout);
            let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: "<runtime>".into(), source })?;
            rt.block_on(ausc_service::serve(cfg))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! Command-line front end. `run` parses arguments, dispatches, and maps every
//! outcome to an exit code: 0 success, 1 data/runtime error, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::augment::RobustnessSpec;
use crate::config::{load_config, RunConfig, SNAPSHOT_FILE};
use crate::dataset::{self, DatasetManifest, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{self, EvaluationReport};
use crate::model::{backbone, build_classifier, BackboneWeights, Network};
use crate::preprocess::PreprocessConfig;
use crate::report;
use crate::train::{self, load_checkpoint, RunOutput, TrainConfig, TrainSession, TrainingHistory};

#[derive(Debug, Parser)]
#[command(name = "actionid", version, about = "Bowling-action identification pipeline")]
pub struct Cli {
    /// Run configuration (JSON). Missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the seeds of the command it is given to.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub overwrite: bool,
    /// Single-threaded, reproducible mode.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a directory-per-class image tree into a manifest.
    Scan {
        root: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Assign train/val/test splits with fixed per-class counts.
    Split(SplitArgs),
    /// Generate a synthetic directory-per-class dataset.
    Synth(SynthArgs),
    /// Train the classifier.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of a manifest.
    Eval(EvalArgs),
    /// Accuracy under input perturbations.
    Robust(RobustArgs),
    /// Classify images; prints the top-3 classes per image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Render charts from a history CSV and/or an evaluation report.
    Plot {
        #[arg(long, required_unless_present = "report")]
        history: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Backbone weight archives.
    #[command(subcommand)]
    Weights(WeightsCommand),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub train: usize,
    #[arg(long)]
    pub val: usize,
    /// Per-class test count; ignored with --test-dir.
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    /// A separate directory-per-class tree used as the test split.
    #[arg(long)]
    pub test_dir: Option<PathBuf>,
    /// Output manifest; defaults to rewriting the input.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 18)]
    pub classes: usize,
    #[arg(long, default_value_t = 85)]
    pub per_class: usize,
    /// HEIGHTxWIDTH
    #[arg(long, default_value = "100x200")]
    pub size: String,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub backbone_weights: Option<PathBuf>,
    /// Expected SHA-256 of the backbone archive.
    #[arg(long)]
    pub backbone_hash: Option<String>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Which split to evaluate.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write confusion.png next to the report.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct RobustArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// JSON list of perturbation specs.
    #[arg(long, conflicts_with = "perturb")]
    pub suite: Option<PathBuf>,
    /// `kind[:key=value,...]`; repeatable.
    #[arg(long)]
    pub perturb: Vec<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum WeightsCommand {
    /// Write seeded stand-in weights (no pretrained features).
    Init {
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Convert torchvision VGG16 weights saved as safetensors.
    Import {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the content hash of an archive after checking it loads.
    Hash { input: PathBuf },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Normal output goes to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn std::io::Write) -> Result<i32> {
    match &cli.command {
        Command::Scan { root, output } => {
            check_writable(output, cli.overwrite)?;
            let m = dataset::scan_dataset(root)?;
            m.save(output)?;
            say(out, format!("{} classes, {} images, {} skipped", m.n_classes(), m.records.len(), m.skipped_files))?;
        }
        Command::Split(a) => split(cli, a, out)?,
        Command::Synth(a) => {
            let (h, w) = parse_size(&a.size)?;
            let m = dataset::generate_synthetic_dataset(a.classes, a.per_class, h, w, cli.seed.unwrap_or(0), &a.output)?;
            say(out, format!("wrote {} images to {}", m.records.len(), a.output.display()))?;
        }
        Command::Train(a) => train_cmd(cli, a, out)?,
        Command::Eval(a) => {
            check_writable(&a.output, cli.overwrite)?;
            let (net, classes) = open_checkpoint(&a.checkpoint)?;
            let pp = preprocess_for(cli, &net)?;
            let records = split_records(&a.manifest, &a.split, &classes)?;
            let rep = eval::evaluate(&net, &records, &pp, &classes)?;
            rep.write(&a.output)?;
            if a.plot {
                report::plot_confusion(&rep, &parent_dir(&a.output))?;
            }
            say(
                out,
                format!(
                    "accuracy {} ({} images), macro precision {:.3}, recall {:.3}, F1 {:.3}",
                    eval::format_percent(rep.confusion.iter().enumerate().map(|(i, r)| r[i]).sum(), rep.n_samples),
                    rep.n_samples,
                    rep.macro_precision,
                    rep.macro_recall,
                    rep.macro_f1
                ),
            )?;
        }
        Command::Robust(a) => {
            check_writable(&a.output, cli.overwrite)?;
            let seed = cli.seed.unwrap_or(0);
            let specs = if let Some(p) = &a.suite {
                eval::load_suite(p)?
            } else if !a.perturb.is_empty() {
                a.perturb
                    .iter()
                    .enumerate()
                    .map(|(i, t)| RobustnessSpec::parse_cli(t, seed.wrapping_add(i as u64)))
                    .collect::<Result<_>>()?
            } else {
                RobustnessSpec::default_suite(seed)
            };
            let (net, classes) = open_checkpoint(&a.checkpoint)?;
            let pp = preprocess_for(cli, &net)?;
            let records = split_records(&a.manifest, &a.split, &classes)?;
            let rep = eval::run_robustness_suite(&net, &records, &pp, &specs)?;
            rep.write(&a.output)?;
            out.write_all(rep.render_table().as_bytes()).map_err(stdout_err)?;
        }
        Command::Predict { checkpoint, images } => return predict(cli, checkpoint, images, out),
        Command::Plot { history, report: rep, output } => {
            if let Some(h) = history {
                let mut hist = TrainingHistory::new(TrainConfig::default());
                for m in TrainingHistory::read_csv(h)? {
                    hist.push(m);
                }
                let (a, l) = report::plot_history(&hist, output)?;
                say(out, format!("{}\n{}", a.display(), l.display()))?;
            }
            if let Some(r) = rep {
                let p = report::plot_confusion(&EvaluationReport::read(r)?, output)?;
                say(out, p.display().to_string())?;
            }
        }
        Command::Weights(w) => weights(cli, w, out)?,
    }
    Ok(0)
}

fn say(out: &mut dyn std::io::Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(stdout_err)
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn check_writable(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(Error::config(
            "output",
            format!("{} exists; pass --overwrite to replace it", path.display()),
        ));
    }
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn parse_size(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::config("size", format!("expected HEIGHTxWIDTH, got `{text}`"));
    let (h, w) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
}

fn parse_split(text: &str) -> Result<Split> {
    Split::ASSIGNED
        .into_iter()
        .find(|s| s.as_str() == text)
        .ok_or_else(|| Error::config("split", format!("`{text}` is not one of train, val, test")))
}

fn split(cli: &Cli, a: &SplitArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let output = a.output.clone().unwrap_or_else(|| a.manifest.clone());
    if output != a.manifest {
        check_writable(&output, cli.overwrite)?;
    }
    let base = DatasetManifest::load(&a.manifest)?;
    let spec = SplitSpec {
        train_per_class: a.train,
        val_per_class: a.val,
        test_per_class: if a.test_dir.is_some() { 0 } else { a.test },
        seed: cli.seed.unwrap_or(0),
    };
    let mut m = dataset::split_manifest(&base, &spec)?;
    if let Some(dir) = &a.test_dir {
        m = dataset::merge_test_manifest(&m, &dataset::scan_dataset(dir)?)?;
    }
    m.save(&output)?;
    let counts = m.split_counts();
    let total = |s: Split| counts.iter().filter(|((_, sp), _)| *sp == s).map(|(_, n)| n).sum::<usize>();
    say(
        out,
        format!(
            "train {} val {} test {} unassigned {}",
            total(Split::Train),
            total(Split::Val),
            total(Split::Test),
            total(Split::Unassigned)
        ),
    )
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_backbone(explicit: Option<&Path>, hash: Option<&str>) -> Result<BackboneWeights> {
    let path = backbone::resolve_weights_path(explicit)?;
    let w = BackboneWeights::load(&path, hash)?;
    log::info!("backbone {} ({})", path.display(), w.content_hash);
    Ok(w)
}

fn train_cmd(cli: &Cli, a: &TrainArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let mut cfg = run_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if cli.deterministic {
        cfg.train.deterministic = true;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(m) = &a.manifest {
        cfg.paths.manifest = Some(m.clone());
    }
    if let Some(o) = &a.out {
        cfg.paths.out_dir = Some(o.clone());
    }
    if let Some(w) = &a.backbone_weights {
        cfg.paths.backbone_weights = Some(w.clone());
    }
    cfg.validate()?;
    let manifest_path = cfg
        .paths
        .manifest
        .clone()
        .ok_or_else(|| Error::config("paths.manifest", "no manifest given"))?;
    let out_dir = cfg
        .paths
        .out_dir
        .clone()
        .ok_or_else(|| Error::config("paths.out_dir", "no output directory given"))?;

    let occupied = std::fs::read_dir(&out_dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && a.resume.is_none() {
        if !cli.overwrite {
            return Err(Error::config(
                "paths.out_dir",
                format!("{} is not empty; pass --overwrite or --resume", out_dir.display()),
            ));
        }
        clear_run_artifacts(&out_dir)?;
    }

    let manifest = DatasetManifest::load(&manifest_path)?;
    let classes = manifest.class_names();
    if classes.len() != cfg.model.n_classes {
        return Err(Error::config(
            "model.n_classes",
            format!("{} differs from the manifest's {} classes", cfg.model.n_classes, classes.len()),
        ));
    }

    let mut session = match &a.resume {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            if ckpt.network.config() != &cfg.model {
                return Err(Error::config("model", "differs from the model stored in the checkpoint"));
            }
            if ckpt.class_names != classes {
                return Err(Error::config("resume", "checkpoint classes differ from the manifest"));
            }
            TrainSession::resume(ckpt)
        }
        None => {
            let weights = load_backbone(cfg.paths.backbone_weights.as_deref(), a.backbone_hash.as_deref())?;
            TrainSession::new(build_classifier(&cfg.model, &weights)?, classes, &cfg.train)
        }
    };

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    cfg.save(&out_dir.join(SNAPSHOT_FILE))?;

    let history = train::train(
        &mut session,
        &manifest.records_in(Split::Train),
        &manifest.records_in(Split::Val),
        &cfg.preprocess,
        &cfg.augment,
        &cfg.train,
        &RunOutput { dir: Some(out_dir.clone()) },
    )?;
    if !history.is_empty() {
        report::plot_history(&history, &out_dir)?;
    }
    if let Some(last) = history.last() {
        say(
            out,
            format!(
                "epoch {}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}; best epoch {}",
                last.epoch,
                last.train_loss,
                last.train_accuracy,
                last.val_loss,
                last.val_accuracy,
                history.best_epoch.map_or("-".into(), |e| e.to_string())
            ),
        )?;
    }
    Ok(())
}

/// Removes files an earlier run left in `dir` so a rerun yields the same
/// directory contents.
fn clear_run_artifacts(dir: &Path) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let ours = (name.starts_with("ckpt_") && name.ends_with(".bin"))
            || [SNAPSHOT_FILE, train::HISTORY_FILE, report::ACCURACY_PLOT, report::LOSS_PLOT].contains(&name);
        if ours {
            std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn open_checkpoint(path: &Path) -> Result<(Network<f32>, Vec<String>)> {
    let c = load_checkpoint(path)?;
    Ok((c.network, c.class_names))
}

/// Preprocessing for inference: the run config's when given, otherwise the
/// defaults resized to the checkpoint's input.
fn preprocess_for(cli: &Cli, net: &Network<f32>) -> Result<PreprocessConfig> {
    let m = net.config();
    let pp = match &cli.config {
        Some(_) => run_config(cli)?.preprocess,
        None => PreprocessConfig {
            target_height: m.input_height,
            target_width: m.input_width,
            ..PreprocessConfig::default()
        },
    };
    if (pp.target_height, pp.target_width) != (m.input_height, m.input_width) {
        return Err(Error::config(
            "preprocess.target_height",
            format!(
                "{}x{} differs from the checkpoint input {}x{}",
                pp.target_height, pp.target_width, m.input_height, m.input_width
            ),
        ));
    }
    Ok(pp)
}

fn split_records(manifest: &Path, split: &str, classes: &[String]) -> Result<Vec<dataset::ImageRecord>> {
    let m = DatasetManifest::load(manifest)?;
    if m.class_names() != classes {
        return Err(Error::config("manifest", "classes differ from the checkpoint's"));
    }
    let records = m.records_in(parse_split(split)?);
    if records.is_empty() {
        return Err(Error::config("split", format!("the manifest has no `{split}` records")));
    }
    Ok(records)
}

fn predict(cli: &Cli, checkpoint: &Path, images: &[PathBuf], out: &mut dyn std::io::Write) -> Result<i32> {
    let (net, classes) = open_checkpoint(checkpoint)?;
    let pp = preprocess_for(cli, &net)?;
    let records: Vec<dataset::ImageRecord> = images
        .iter()
        .map(|p| dataset::ImageRecord {
            path: p.clone(),
            label_index: 0,
            split: Split::Unassigned,
            byte_size: 0,
        })
        .collect();
    let mut failed = false;
    for (path, pred) in images.iter().zip(eval::predict_batch(&net, &records, &pp)?) {
        let line = match pred {
            Ok(p) => {
                let cols: Vec<String> = p.top(3).iter().map(|&(i, pr)| format!("{}\t{pr:.4}", classes[i])).collect();
                format!("{}\t{}", path.display(), cols.join("\t"))
            }
            Err(e) => {
                failed = true;
                format!("{}\tERROR\t{e}", path.display())
            }
        };
        say(out, line)?;
    }
    Ok(if failed { 1 } else { 0 })
}

fn weights(cli: &Cli, cmd: &WeightsCommand, out: &mut dyn std::io::Write) -> Result<()> {
    let (w, output) = match cmd {
        WeightsCommand::Init { output } => (BackboneWeights::standin(cli.seed.unwrap_or(0)), output),
        WeightsCommand::Import { input, output } => (BackboneWeights::import_safetensors(input)?, output),
        WeightsCommand::Hash { input } => {
            let w = BackboneWeights::load(input, None)?;
            return say(out, w.content_hash);
        }
    };
    check_writable(output, cli.overwrite)?;
    let hash = w.save(output)?;
    say(out, format!("{hash}  {}", output.display()))
}

//! The `multires` command line.
//!
//! Every subcommand that takes `--out` writes the resolved configuration to
//! `<out>/run_config.txt` next to its artifacts.

use crate::data::{
    generate_synthetic_corpus, labels_of, parse_manifest, ManifestEntry, RunConfig, SynthSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    compute_eer, fuse_scores, operating_points, read_labels, read_scores, search_fusion_weights,
    write_operating_points, write_scores, LabelTable,
};
use crate::model::{count_parameters, load_checkpoint, set_input_channels, Arch, Model, ModelSpec};
use crate::pipeline::{
    extract_to_dir, load_features, score_utterances, train_with_selection, training_samples,
    utterance_segments,
};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "multires", version, about = "Multi-resolution spectrogram anti-spoofing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags shared by the feature and model subcommands.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window lengths in ms, e.g. 18,25,30.
    #[arg(long)]
    windows: Option<String>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut c = base;
                c.apply_text(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                c
            }
            None => base,
        };
        if let Some(w) = &self.windows {
            cfg.set("windows_ms", w)?;
        }
        if let Some(a) = &self.arch {
            cfg.set("arch", a)?;
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic 10-class corpus with train/dev/eval manifests.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        utts_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract multi-resolution feature caches for every manifest entry.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train with per-epoch development-set selection.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dev_manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Feature-cache directory from `extract`; features are computed when absent.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Must equal the number of windows when given.
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score every manifest utterance with a checkpoint.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Equal error rate of a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        truth: Truth,
        /// Directory for the operating-point dump.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted fusion of several score files.
    Fuse {
        #[arg(long = "scores", required = true, num_args = 1)]
        scores: Vec<PathBuf>,
        #[arg(long, conflicts_with = "search")]
        weights: Option<String>,
        /// Grid-search weights on the labelled utterances.
        #[arg(long)]
        search: bool,
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        #[command(flatten)]
        truth: Truth,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the number of trainable parameters.
    CountParams {
        #[arg(long)]
        arch: String,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        /// Print the per-layer table as well.
        #[arg(long)]
        verbose: bool,
    },
}

/// Ground truth from a label TSV or a manifest.
#[derive(Args, Debug)]
struct Truth {
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl Truth {
    fn load(&self) -> Result<LabelTable> {
        match (&self.labels, &self.manifest) {
            (Some(l), _) => read_labels(l),
            (None, Some(m)) => labels_of(&parse_manifest(m)?),
            (None, None) => Err(Error::Config("labels required: pass --labels or --manifest".into())),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<()> {
    create_dir(dir)?;
    cfg.save(&dir.join("run_config.txt"))
}

fn segments_for(
    entries: &[ManifestEntry],
    cfg: &RunConfig,
    features: Option<&Path>,
) -> Result<Vec<(String, Vec<crate::dsp::MultiResStack>)>> {
    let feats = load_features(entries, cfg, features)?;
    utterance_segments(entries, &feats, cfg)
}

fn parse_weights(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("weight '{p}' is not a number")))
        })
        .collect()
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, line: String| -> Result<()> {
        writeln!(out, "{line}").map_err(|e| Error::Data(format!("cannot write output: {e}")))
    };
    match command {
        Command::Synth {
            out: dir,
            utts_per_class,
            seed,
        } => {
            let spec = SynthSpec {
                utts_per_class,
                seed,
                ..SynthSpec::default()
            };
            let corpus = generate_synthetic_corpus(&spec, &dir)?;
            write_resolved(&dir, &RunConfig::desk_scale())?;
            for p in [&corpus.train, &corpus.dev, &corpus.eval] {
                say(out, p.display().to_string())?;
            }
        }
        Command::Extract {
            manifest,
            out: dir,
            cfg,
        } => {
            let cfg = cfg.resolve(RunConfig::desk_scale())?;
            let entries = parse_manifest(&manifest)?;
            let paths = extract_to_dir(&entries, &cfg, &dir)?;
            write_resolved(&dir, &cfg)?;
            say(out, format!("wrote {} feature files to {}", paths.len(), dir.display()))?;
        }
        Command::Train {
            manifest,
            dev_manifest,
            out: dir,
            features,
            channels,
            epochs,
            cfg,
        } => {
            let mut cfg = cfg.resolve(RunConfig::desk_scale())?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(c) = channels {
                if c != cfg.n_input_channels() {
                    return Err(Error::Config(format!(
                        "--channels {c} does not match {} windows {:?}",
                        cfg.n_input_channels(),
                        cfg.windows_ms
                    )));
                }
            }
            write_resolved(&dir, &cfg)?;
            let train_entries = parse_manifest(&manifest)?;
            let dev_entries = parse_manifest(&dev_manifest)?;
            let train_segs = segments_for(&train_entries, &cfg, features.as_deref())?;
            let samples = training_samples(&train_entries, &train_segs)?;
            let dev_segs = segments_for(&dev_entries, &cfg, features.as_deref())?;
            let outcome = train_with_selection(&cfg, &samples, &dev_segs, &labels_of(&dev_entries)?, Some(&dir))?;
            for (i, eer) in outcome.dev_eers.iter().enumerate() {
                say(out, format!("epoch {}\tdev EER {:.4}", i + 1, eer))?;
            }
            say(
                out,
                format!("best epoch {} -> {}", outcome.best_epoch, dir.join("best.ckpt").display()),
            )?;
        }
        Command::Score {
            manifest,
            checkpoint,
            out: dir,
            features,
            cfg,
        } => {
            // Prefer the configuration saved next to the checkpoint.
            let beside = checkpoint.with_file_name("run_config.txt");
            let base = if cfg.config.is_none() && beside.exists() {
                RunConfig::load(&beside)?
            } else {
                RunConfig::desk_scale()
            };
            let cfg = cfg.resolve(base)?;
            let ck = load_checkpoint(&checkpoint)?;
            let spec = ck.model.spec();
            if spec.n_input_channels != cfg.n_input_channels() || spec.arch != cfg.arch {
                return Err(Error::Config(format!(
                    "{} holds a {} with {} input maps but the configuration gives {} with windows {:?}",
                    checkpoint.display(),
                    spec.arch,
                    spec.n_input_channels,
                    cfg.arch,
                    cfg.windows_ms
                )));
            }
            let entries = parse_manifest(&manifest)?;
            let segs = segments_for(&entries, &cfg, features.as_deref())?;
            let scores = score_utterances(&ck.model, &segs)?;
            write_resolved(&dir, &cfg)?;
            let path = dir.join("scores.tsv");
            write_scores(&path, &scores)?;
            say(out, format!("scored {} utterances -> {}", scores.len(), path.display()))?;
        }
        Command::Evaluate { scores, truth, out: dir } => {
            let table = read_scores(&scores)?;
            let labels = truth.load()?;
            let r = compute_eer(&table, &labels)?;
            if let Some(d) = dir {
                create_dir(&d)?;
                write_operating_points(&d.join("operating_points.tsv"), &operating_points(&table, &labels)?)?;
            }
            say(out, format!("EER {:.4}", r.eer))?;
        }
        Command::Fuse {
            scores,
            weights,
            search,
            grid_step,
            truth,
            out: dir,
        } => {
            if scores.len() < 2 {
                return Err(Error::Config("fuse needs at least two --scores files".into()));
            }
            let tables = scores.iter().map(|p| read_scores(p)).collect::<Result<Vec<_>>>()?;
            let w = match (weights, search) {
                (Some(w), false) => parse_weights(&w)?,
                (None, true) => {
                    let r = search_fusion_weights(&tables, &truth.load()?, grid_step)?;
                    say(out, format!("searched {} weight vectors, dev EER {:.4}", r.evaluated, r.dev_eer))?;
                    r.weights
                }
                _ => return Err(Error::Config("pass either --weights or --search".into())),
            };
            let fused = fuse_scores(&tables, &w)?;
            create_dir(&dir)?;
            let path = dir.join("fused_scores.tsv");
            write_scores(&path, &fused)?;
            let ws: Vec<String> = w.iter().map(|v| format!("{v}")).collect();
            std::fs::write(dir.join("fusion_weights.txt"), ws.join(",") + "\n")
                .map_err(|e| Error::io(dir.join("fusion_weights.txt"), e))?;
            say(out, format!("weights {} -> {}", ws.join(","), path.display()))?;
        }
        Command::CountParams {
            arch,
            channels,
            verbose,
        } => {
            let arch: Arch = arch.parse()?;
            let spec = set_input_channels(&ModelSpec::new(arch, 1), channels)?;
            let report = count_parameters(&Model::build(&spec, 0)?)?;
            if verbose {
                for (layer, n) in &report.per_layer {
                    say(out, format!("{layer}\t{n}"))?;
                }
                say(out, format!("delta_vs_single_channel\t{}", report.delta_vs_single_channel))?;
            }
            say(out, report.total.to_string())?;
        }
    }
    Ok(())
}

/// Run the command line; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = writeln!(stderr, "{}", text.lines().next().unwrap_or("invalid arguments"));
            }
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

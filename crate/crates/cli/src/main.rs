//! Command-line front end: train, index, query, classify, synthesize,
//! evaluate, export, and serve.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Progress goes to
//! standard error; machine-readable results go to standard output.

mod archive;
mod serve;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use motioncloud_core::classifier::{classify_cloud, AlphaVariant, MetricParams};
use motioncloud_core::eigenspace::DEFAULT_K;
use motioncloud_core::indexer::{
    index_timeline, load_index, query_similarity, save_index, IndexerConfig,
};
use motioncloud_core::pipeline::{
    clip_signature, train_action_model, ActionModel, PipelineConfig, TrainKind,
};
use motioncloud_core::synth_eval::{
    compare_classifiers, generate_clips, load_dataset, ActionKind, SynthSpec,
};
use motioncloud_core::templates::{load_sequence, CANONICAL_SIZE};

#[derive(Parser)]
#[command(
    name = "motioncloud",
    version,
    about = "Action recognition and content-based video retrieval over motion templates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Linear,
    Poly,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaArg {
    Peaked,
    Literal,
}

/// `auto` or a fixed polynomial exponent.
#[derive(Clone, Copy)]
enum DegreeArg {
    Auto,
    Fixed(u32),
}

impl FromStr for DegreeArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(DegreeArg::Auto);
        }
        s.parse::<u32>()
            .map(DegreeArg::Fixed)
            .map_err(|_| format!("expected 'auto' or a positive integer, got {s:?}"))
    }
}

#[derive(Args, Clone)]
struct KernelFlags {
    /// Eigenspace flavor.
    #[arg(long, value_enum, default_value = "linear")]
    kernel: KernelArg,
    /// Polynomial kernel exponent, or `auto` to tune by class separation.
    #[arg(long, default_value = "auto")]
    degree: DegreeArg,
    /// Additive constant of the polynomial kernel.
    #[arg(long, default_value_t = 1.0)]
    kernel_offset: f64,
    /// Retained eigenspace dimensions.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
}

impl KernelFlags {
    fn train_kind(&self) -> TrainKind {
        match self.kernel {
            KernelArg::Linear => TrainKind::Linear,
            KernelArg::Poly => TrainKind::Polynomial {
                degree: match self.degree {
                    DegreeArg::Auto => None,
                    DegreeArg::Fixed(d) => Some(d),
                },
                offset: self.kernel_offset,
            },
        }
    }
}

#[derive(Args, Clone)]
struct MetricFlags {
    /// Plane-angle modulation variant.
    #[arg(long, value_enum, default_value = "peaked")]
    alpha_variant: AlphaArg,
    /// Near-origin steepness of the modulation.
    #[arg(long, default_value_t = 2.5)]
    lambda1: f64,
    /// Tail rate of the modulation.
    #[arg(long, default_value_t = 25.0)]
    lambda2: f64,
    /// Weight of the fuzzy membership penalty.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Neighbor count for the fuzzy penalty and the KNN baseline.
    #[arg(long, default_value_t = 7)]
    knn_k: usize,
}

impl MetricFlags {
    fn metric(&self) -> MetricParams {
        let mut m = MetricParams::default();
        m.alpha.variant = match self.alpha_variant {
            AlphaArg::Peaked => AlphaVariant::Peaked,
            AlphaArg::Literal => AlphaVariant::Literal,
        };
        m.alpha.lambda1 = self.lambda1;
        m.alpha.lambda2 = self.lambda2;
        m.rho = self.rho;
        m.fuzzy.k_neighbors = self.knn_k;
        m
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an eigenspace and cloud model from a labeled dataset.
    Train {
        /// Dataset root containing `data/<class>/<clip_id>/` frame folders.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        kernel: KernelFlags,
        /// Output model directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Index a long frame sequence with a sliding window.
    Index {
        /// Trained model directory.
        #[arg(long)]
        model: PathBuf,
        /// Directory of frames to index.
        #[arg(long)]
        clip_dir: PathBuf,
        /// Window size in frames.
        #[arg(long, default_value_t = 250)]
        window: usize,
        /// Window stride in frames.
        #[arg(long, default_value_t = 50)]
        stride: usize,
        /// Output index file (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank indexed windows by similarity to a query clip.
    Query {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Directory of query clip frames.
        #[arg(long)]
        clip_dir: PathBuf,
        /// Maximum number of results.
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[command(flatten)]
        metric: MetricFlags,
    },
    /// Classify a single clip against the trained clouds.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        clip_dir: PathBuf,
        #[command(flatten)]
        metric: MetricFlags,
    },
    /// Generate the deterministic synthetic dataset.
    Synth {
        /// Master seed; fully determines the dataset.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Clips per class.
        #[arg(long, default_value_t = 12)]
        clips: usize,
        /// Frames per clip.
        #[arg(long, default_value_t = 64)]
        frames: usize,
        /// Square frame size in pixels.
        #[arg(long, default_value_t = CANONICAL_SIZE)]
        size: usize,
        /// Output dataset root.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate the cloud classifier against the KNN baseline.
    Eval {
        /// Dataset root; generated in memory from --seed when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Seed for the in-memory dataset.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Clips per class for the in-memory dataset.
        #[arg(long, default_value_t = 6)]
        clips: usize,
        /// Frames per clip for the in-memory dataset.
        #[arg(long, default_value_t = 24)]
        frames: usize,
        /// Frame size for the in-memory dataset.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[command(flatten)]
        kernel: KernelFlags,
        #[command(flatten)]
        metric: MetricFlags,
    },
    /// Export an index as plain JSON or CSV.
    Export {
        #[arg(long)]
        index: PathBuf,
        /// Output file; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the model and index over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        metric: MetricFlags,
    },
}

/// Advisory write lock: fails fast when another process is writing the same
/// artifact.
struct WriteLock {
    path: PathBuf,
}

impl WriteLock {
    fn acquire(target: &Path) -> Result<Self> {
        let path = target.with_extension("lock");
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).ok();
            }
        }
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(WriteLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!(
                    "another writer holds {} (remove it if stale)",
                    path.display()
                )
            }
            Err(e) => Err(e).with_context(|| format!("creating lock {}", path.display())),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        fs::remove_file(&self.path).ok();
    }
}

fn pipeline_cfg(metric: MetricParams, k: usize, target_size: usize) -> PipelineConfig {
    PipelineConfig {
        target_size,
        k,
        metric,
        ..PipelineConfig::default()
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { data, kernel, out } => {
            let _lock = WriteLock::acquire(&out)?;
            eprintln!("loading dataset from {}", data.display());
            let clips = load_dataset(&data, CANONICAL_SIZE)?;
            eprintln!("training on {} clips", clips.len());
            let cfg = pipeline_cfg(MetricParams::default(), kernel.k, CANONICAL_SIZE);
            let model = train_action_model(&clips, &cfg, kernel.train_kind())?;
            model.save(&out)?;
            eprintln!("model written to {}", out.display());
            print_json(&serde_json::json!({
                "model": out,
                "clips": clips.len(),
                "k": model.eigen.k,
                "classes": model.labels(),
                "d0": model.d0,
            }))
        }
        Cmd::Index {
            model,
            clip_dir,
            window,
            stride,
            out,
        } => {
            let _lock = WriteLock::acquire(&out)?;
            let model = ActionModel::load(&model)?;
            let video = load_sequence(&clip_dir, CANONICAL_SIZE)?;
            let video_id = clip_dir
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or("video")
                .to_string();
            let icfg = IndexerConfig {
                window,
                stride,
                ..IndexerConfig::default()
            };
            let pcfg = pipeline_cfg(MetricParams::default(), model.eigen.k, CANONICAL_SIZE);
            eprintln!("indexing {} frames of {video_id}", video.len());
            let records = index_timeline(&video, &model, &icfg, &pcfg, &video_id)?;
            save_index(&records, &out, model.eigen.k)?;
            eprintln!("{} windows written to {}", records.len(), out.display());
            print_json(&serde_json::json!({
                "index": out,
                "video_id": video_id,
                "windows": records.len(),
            }))
        }
        Cmd::Query {
            model,
            index,
            clip_dir,
            top,
            metric,
        } => {
            let started = Instant::now();
            let model = ActionModel::load(&model)?;
            let (records, _) = load_index(&index)?;
            let clip = load_sequence(&clip_dir, CANONICAL_SIZE)?;
            let pcfg = pipeline_cfg(metric.metric(), model.eigen.k, CANONICAL_SIZE);
            let icfg = IndexerConfig::default();
            let result = query_similarity(&clip, &model, &records, top, &icfg, &pcfg)?;
            print_json(&serde_json::json!({
                "results": result.results,
                "null_query": result.null_query,
                "timing_ms": started.elapsed().as_millis() as u64,
            }))
        }
        Cmd::Classify {
            model,
            clip_dir,
            metric,
        } => {
            let model = ActionModel::load(&model)?;
            let clip = load_sequence(&clip_dir, CANONICAL_SIZE)?;
            let pcfg = pipeline_cfg(metric.metric(), model.eigen.k, CANONICAL_SIZE);
            let (sig, _) = clip_signature(&model.eigen, &clip, &pcfg)?;
            let (class, scores) = classify_cloud(&sig, &model.clouds, &pcfg.metric)?;
            print_json(&serde_json::json!({
                "class": class,
                "scores": scores,
            }))
        }
        Cmd::Synth {
            seed,
            clips,
            frames,
            size,
            out,
        } => {
            let _lock = WriteLock::acquire(&out)?;
            let spec = SynthSpec {
                classes: ActionKind::ALL.to_vec(),
                clips_per_class: clips,
                frames_per_clip: frames,
                frame_size: size,
                seed,
            };
            let generated = generate_clips(&spec, &out)?;
            eprintln!("{} clips written under {}", generated.len(), out.display());
            print_json(&serde_json::json!({
                "dataset": out,
                "clips": generated.len(),
                "spec": spec,
            }))
        }
        Cmd::Eval {
            data,
            seed,
            clips,
            frames,
            size,
            kernel,
            metric,
        } => {
            let (dataset, target) = match data {
                Some(root) => {
                    let clips = load_dataset(&root, CANONICAL_SIZE)?;
                    (clips, CANONICAL_SIZE)
                }
                None => {
                    let spec = SynthSpec {
                        classes: ActionKind::ALL.to_vec(),
                        clips_per_class: clips,
                        frames_per_clip: frames,
                        frame_size: size,
                        seed,
                    };
                    eprintln!("generating in-memory dataset (seed {seed})");
                    (
                        motioncloud_core::synth_eval::generate_clips_memory(&spec)?,
                        size,
                    )
                }
            };
            let cfg = pipeline_cfg(metric.metric(), kernel.k, target);
            eprintln!(
                "cross-validating {} clips, leave-one-clip-per-class-out",
                dataset.len()
            );
            let report = compare_classifiers(&dataset, &cfg, kernel.train_kind(), metric.knn_k)?;
            print_json(&report)
        }
        Cmd::Export { index, out } => {
            let (records, k) = load_index(&index)?;
            let csv = out.extension().is_some_and(|e| e == "csv");
            if csv {
                let mut text =
                    String::from("video_id,start_frame,end_frame,predicted,null,best_score\n");
                for r in &records {
                    let best = r
                        .scores
                        .values()
                        .fold(None::<f64>, |acc, &v| Some(acc.map_or(v, |a| a.min(v))));
                    text.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        r.video_id,
                        r.start_frame,
                        r.end_frame,
                        r.predicted.as_deref().unwrap_or(""),
                        r.null_flag,
                        best.map(|b| format!("{b:.6}")).unwrap_or_default(),
                    ));
                }
                fs::write(&out, text)?;
            } else {
                fs::write(
                    &out,
                    serde_json::to_vec_pretty(&serde_json::json!({
                        "K": k,
                        "records": records,
                    }))?,
                )?;
            }
            eprintln!("{} records exported to {}", records.len(), out.display());
            Ok(())
        }
        Cmd::Serve {
            model,
            index,
            port,
            metric,
        } => {
            let model = ActionModel::load(&model)?;
            let (records, _) = load_index(&index)?;
            serve::serve(model, records, metric.metric(), port)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            e.print().ok();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

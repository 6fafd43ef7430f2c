//! Deterministic synthetic action clips and classifier evaluation.
//!
//! Four classes with distinct velocity signatures stand in for a recorded
//! action dataset: a horizontally oscillating block (wave), a vertically
//! bouncing block (bounce), a slow walker with counter-swinging sub-blocks
//! (walk), and the same walker at more than three times the speed (run).
//! Everything is derived from a single seed, so clips are byte-identical
//! across runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{baseline_knn, classify_cloud};
use crate::eigenspace::{EigenModel, TrainingSet};
use crate::error::{Error, Result};
use crate::pipeline::{
    prepare_clip, train_action_model_prepared, Clip, PipelineConfig, PreparedClip, TrainKind,
};
use crate::templates::{dense_flow, load_sequence, write_pgm, FlowConfig, Frame, FrameSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Wave,
    Bounce,
    Walk,
    Run,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::Wave,
        ActionKind::Bounce,
        ActionKind::Walk,
        ActionKind::Run,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Wave => "wave",
            ActionKind::Bounce => "bounce",
            ActionKind::Walk => "walk",
            ActionKind::Run => "run",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<ActionKind>,
    pub clips_per_class: usize,
    pub frames_per_clip: usize,
    pub frame_size: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: ActionKind::ALL.to_vec(),
            clips_per_class: 12,
            frames_per_clip: 64,
            frame_size: 256,
            seed: 7,
        }
    }
}

/// Deterministic texture value for a block-local pixel.
fn noise_at(x: i64, y: i64, seed: u64) -> u8 {
    let mut h = (x.wrapping_mul(73856093) ^ y.wrapping_mul(19349663)) as u64 ^ seed;
    h ^= h >> 13;
    h = h.wrapping_mul(0x2545F4914F6CDD1D);
    (h >> 32) as u8
}

/// A textured square at a subpixel position.
struct Block {
    x: f64,
    y: f64,
    side: usize,
    texture_seed: u64,
}

/// Draw blocks with bilinear subpixel sampling over a plain background.
fn render_frame(size: usize, blocks: &[Block]) -> Frame {
    let mut pixels = vec![96u8; size * size];
    for b in blocks {
        let x0 = b.x.floor() as i64;
        let y0 = b.y.floor() as i64;
        for py in y0..=(y0 + b.side as i64) {
            for px in x0..=(x0 + b.side as i64) {
                if px < 0 || py < 0 || px as usize >= size || py as usize >= size {
                    continue;
                }
                // block-local sample position
                let lx = px as f64 - b.x;
                let ly = py as f64 - b.y;
                if lx < 0.0 || ly < 0.0 || lx > (b.side - 1) as f64 || ly > (b.side - 1) as f64 {
                    continue;
                }
                let ix = lx.floor() as i64;
                let iy = ly.floor() as i64;
                let fx = lx - ix as f64;
                let fy = ly - iy as f64;
                let sample = |dx: i64, dy: i64| -> f64 {
                    noise_at(ix + dx, iy + dy, b.texture_seed) as f64
                };
                let v = sample(0, 0) * (1.0 - fx) * (1.0 - fy)
                    + sample(1, 0) * fx * (1.0 - fy)
                    + sample(0, 1) * (1.0 - fx) * fy
                    + sample(1, 1) * fx * fy;
                pixels[py as usize * size + px as usize] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Frame::new(size, size, pixels).expect("non-empty frame")
}

/// Triangle wave over [lo, hi] starting at lo, advancing by `speed` per unit.
fn ping_pong(t: f64, lo: f64, hi: f64, speed: f64) -> f64 {
    let span = hi - lo;
    let phase = (t * speed).rem_euclid(2.0 * span);
    if phase <= span {
        lo + phase
    } else {
        lo + 2.0 * span - phase
    }
}

/// Per-clip kinematic parameters, jittered by the clip's RNG.
struct ClipParams {
    amplitude: f64,
    period: f64,
    speed: f64,
    texture_seed: u64,
}

fn synth_frame(kind: ActionKind, size: usize, f: usize, p: &ClipParams) -> Frame {
    let s = size as f64;
    let side = (size / 5).max(8);
    let t = f as f64;
    let cx = s * 0.5 - side as f64 * 0.5;
    let cy = s * 0.5 - side as f64 * 0.5;
    let blocks = match kind {
        ActionKind::Wave => {
            let x = cx + p.amplitude * (std::f64::consts::TAU * t / p.period).sin();
            vec![Block {
                x,
                y: cy,
                side,
                texture_seed: p.texture_seed,
            }]
        }
        ActionKind::Bounce => {
            // parabolic free-fall arcs between bounces
            let phase = (t / p.period).fract();
            let h = p.amplitude * (1.0 - (2.0 * phase - 1.0) * (2.0 * phase - 1.0));
            vec![Block {
                x: cx,
                y: cy - h,
                side,
                texture_seed: p.texture_seed,
            }]
        }
        ActionKind::Walk | ActionKind::Run => {
            let margin = s * 0.05;
            let x = ping_pong(t, margin, s - margin - side as f64, p.speed);
            let sub = (side / 2).max(4);
            let swing = (std::f64::consts::TAU * t / p.period).sin() * side as f64 * 0.25;
            vec![
                Block {
                    x,
                    y: cy - side as f64 * 0.6,
                    side,
                    texture_seed: p.texture_seed,
                },
                // counter-oscillating sub-blocks (legs)
                Block {
                    x: x + swing,
                    y: cy + side as f64 * 0.55,
                    side: sub,
                    texture_seed: p.texture_seed ^ 0xA5A5,
                },
                Block {
                    x: x + side as f64 - sub as f64 - swing,
                    y: cy + side as f64 * 0.55,
                    side: sub,
                    texture_seed: p.texture_seed ^ 0x5A5A,
                },
            ]
        }
    };
    render_frame(size, &blocks)
}

fn clip_params(kind: ActionKind, size: usize, rng: &mut ChaCha8Rng) -> ClipParams {
    let s = size as f64;
    let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(0.8..=1.2);
    // keep the slowest jittered walk above the template magnitude floor
    let walk_speed = (s / 128.0).max(1.0);
    match kind {
        ActionKind::Wave => ClipParams {
            amplitude: s * 0.12 * jitter(rng),
            period: 22.0 * jitter(rng),
            speed: 0.0,
            texture_seed: rng.gen(),
        },
        ActionKind::Bounce => ClipParams {
            amplitude: s * 0.2 * jitter(rng),
            period: 16.0 * jitter(rng),
            speed: 0.0,
            texture_seed: rng.gen(),
        },
        ActionKind::Walk => ClipParams {
            amplitude: 0.0,
            period: 12.0 * jitter(rng),
            speed: walk_speed * jitter(rng),
            texture_seed: rng.gen(),
        },
        ActionKind::Run => ClipParams {
            amplitude: 0.0,
            period: 6.0 * jitter(rng),
            // >= 3x walk even at opposite jitter extremes
            speed: walk_speed * 6.0 * jitter(rng),
            texture_seed: rng.gen(),
        },
    }
}

fn clip_rng(spec: &SynthSpec, class_idx: usize, clip_idx: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        spec.seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add((class_idx as u64) << 32 | clip_idx as u64),
    )
}

/// Generate all clips in memory.
pub fn generate_clips_memory(spec: &SynthSpec) -> Result<Vec<Clip>> {
    if spec.classes.is_empty() || spec.clips_per_class == 0 || spec.frames_per_clip < 2 {
        return Err(Error::InvalidConfig(
            "synth spec needs classes, clips and >= 2 frames".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..spec.classes.len())
        .flat_map(|c| (0..spec.clips_per_class).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(c, i)| {
            let kind = spec.classes[c];
            let mut rng = clip_rng(spec, c, i);
            let params = clip_params(kind, spec.frame_size, &mut rng);
            let frames: Vec<Frame> = (0..spec.frames_per_clip)
                .map(|f| synth_frame(kind, spec.frame_size, f, &params))
                .collect();
            Ok(Clip {
                label: kind.as_str().to_string(),
                clip_id: format!("{}_{i:03}", kind.as_str()),
                seq: FrameSequence::new(frames, 25.0)?,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    spec: SynthSpec,
    clips: Vec<ClipEntry>,
}

#[derive(Serialize, Deserialize)]
struct ClipEntry {
    class: String,
    clip_id: String,
}

/// Generate clips and write them as `data/<class>/<clip_id>/frame_%05d.pgm`
/// plus a `manifest.json` echoing the spec.
pub fn generate_clips(spec: &SynthSpec, out_dir: &Path) -> Result<Vec<Clip>> {
    let clips = generate_clips_memory(spec)?;
    let mut entries = Vec::new();
    for clip in &clips {
        let dir = out_dir.join("data").join(&clip.label).join(&clip.clip_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (f, frame) in clip.seq.frames.iter().enumerate() {
            let path = dir.join(format!("frame_{f:05}.pgm"));
            fs::write(&path, write_pgm(frame)).map_err(|e| Error::io(&path, e))?;
        }
        entries.push(ClipEntry {
            class: clip.label.clone(),
            clip_id: clip.clip_id.clone(),
        });
    }
    let manifest = DatasetManifest {
        spec: spec.clone(),
        clips: entries,
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(clips)
}

/// Load a dataset written by `generate_clips` (or hand-assembled in the same
/// layout), resizing frames to `target`.
pub fn load_dataset(root: &Path, target: usize) -> Result<Vec<Clip>> {
    let data = root.join("data");
    let list_dirs = |p: &Path| -> Result<Vec<std::path::PathBuf>> {
        let mut dirs: Vec<_> = fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        Ok(dirs)
    };
    let mut clips = Vec::new();
    for class_dir in list_dirs(&data)? {
        let label = class_dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        for clip_dir in list_dirs(&class_dir)? {
            let clip_id = clip_dir
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            clips.push(Clip {
                label: label.clone(),
                clip_id,
                seq: load_sequence(&clip_dir, target)?,
            });
        }
    }
    if clips.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(clips)
}

/// Mean flow-vector magnitude over all consecutive frame pairs and grid
/// nodes of a clip.
pub fn mean_flow_magnitude(seq: &FrameSequence, cfg: &FlowConfig) -> Result<(f64, f64, f64)> {
    let mut sum = 0.0;
    let mut sum_u = 0.0;
    let mut sum_v = 0.0;
    let mut count = 0usize;
    for pair in seq.frames.windows(2) {
        let flow = dense_flow(&pair[0], &pair[1], cfg)?;
        for &(u, v) in &flow.vectors {
            sum += (u * u + v * v).sqrt();
            sum_u += u.abs();
            sum_v += v.abs();
            count += 1;
        }
    }
    let n = count.max(1) as f64;
    Ok((sum / n, sum_u / n, sum_v / n))
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// Row-normalized percentages: `rows[i][j]` is the share of true class
    /// `i` predicted as class `j`.
    pub rows: Vec<Vec<f64>>,
    /// True instances per class.
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    /// Overall accuracy from the diagonal, weighted by class counts.
    pub fn accuracy(&self) -> f64 {
        let total: usize = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let correct: f64 = self
            .rows
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(i, (row, &c))| row[i] / 100.0 * c as f64)
            .sum();
        correct / total as f64
    }
}

/// Row-normalized confusion matrix over the given class list.
pub fn confusion_matrix(
    predictions: &[String],
    truths: &[String],
    classes: &[String],
) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidConfig(
            "prediction/truth length mismatch".into(),
        ));
    }
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let n = classes.len();
    let mut counts = vec![vec![0usize; n]; n];
    for (p, t) in predictions.iter().zip(truths) {
        let ti = *index
            .get(t.as_str())
            .ok_or_else(|| Error::UnknownLabel(t.clone()))?;
        let pi = *index
            .get(p.as_str())
            .ok_or_else(|| Error::UnknownLabel(p.clone()))?;
        counts[ti][pi] += 1;
    }
    let mut rows = Vec::with_capacity(n);
    let mut row_counts = Vec::with_capacity(n);
    for (i, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            return Err(Error::InvalidConfig(format!(
                "class {:?} has no true instances",
                classes[i]
            )));
        }
        rows.push(
            row.iter()
                .map(|&c| 100.0 * c as f64 / total as f64)
                .collect(),
        );
        row_counts.push(total);
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        rows,
        counts: row_counts,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tpc_accuracy: f64,
    pub knn_accuracy: f64,
    pub tpc_confusion: ConfusionMatrix,
    pub knn_confusion: ConfusionMatrix,
}

/// Classify `test` clips with a model trained on `train` clips, with both
/// the cloud metric (TPC) and the per-point KNN baseline.
pub fn evaluate_split(
    train: &[Clip],
    test: &[Clip],
    cfg: &PipelineConfig,
    kind: TrainKind,
    knn_k: usize,
) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let prep = |clips: &[Clip]| -> Result<Vec<PreparedClip>> {
        clips.iter().map(|c| prepare_clip(c, cfg)).collect()
    };
    evaluate_split_prepared(&prep(train)?, &prep(test)?, cfg, kind, knn_k)
}

/// `evaluate_split` over clips whose template vectors are precomputed.
pub fn evaluate_split_prepared(
    train: &[PreparedClip],
    test: &[PreparedClip],
    cfg: &PipelineConfig,
    kind: TrainKind,
    knn_k: usize,
) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let model = train_action_model_prepared(train, cfg, kind)?;
    // projected labeled training points for the baseline
    let mut knn_training: Vec<(Vec<f64>, String)> = Vec::new();
    for clip in train {
        let traj = model
            .eigen
            .project_sequence(clip.vectors.iter().map(|v| v.as_slice()))?;
        for p in traj.points {
            knn_training.push((p, clip.label.clone()));
        }
    }
    let k = knn_k.min(knn_training.len());
    let mut truths = Vec::new();
    let mut tpc = Vec::new();
    let mut knn = Vec::new();
    for clip in test {
        let traj = model
            .eigen
            .project_sequence(clip.vectors.iter().map(|v| v.as_slice()))?;
        let sig = crate::geometry::cloud_signature(&traj, &cfg.geometry)?;
        let (tpc_class, _) = classify_cloud(&sig, &model.clouds, &cfg.metric)?;
        let (knn_class, _) = baseline_knn(&traj.points, &knn_training, k)?;
        truths.push(clip.label.clone());
        tpc.push(tpc_class);
        knn.push(knn_class);
    }
    Ok((truths, tpc, knn))
}

/// Leave-one-clip-per-class-out cross-validation comparing TPC against the
/// KNN baseline on identical splits.
pub fn compare_classifiers(
    clips: &[Clip],
    cfg: &PipelineConfig,
    kind: TrainKind,
    knn_k: usize,
) -> Result<ComparisonReport> {
    // run the template stage once per clip; folds only reshuffle vectors
    let prepared: Vec<PreparedClip> = clips
        .par_iter()
        .map(|c| prepare_clip(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut by_class: BTreeMap<&str, Vec<&PreparedClip>> = BTreeMap::new();
    for clip in &prepared {
        by_class.entry(clip.label.as_str()).or_default().push(clip);
    }
    if by_class.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let folds = by_class.values().map(|v| v.len()).min().unwrap();
    if folds < 2 {
        return Err(Error::InvalidConfig(
            "cross-validation needs >= 2 clips per class".into(),
        ));
    }
    let classes: Vec<String> = by_class.keys().map(|s| s.to_string()).collect();
    let fold_results: Vec<(Vec<String>, Vec<String>, Vec<String>)> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for members in by_class.values() {
                for (i, clip) in members.iter().enumerate() {
                    if i == fold {
                        test.push((*clip).clone());
                    } else {
                        train.push((*clip).clone());
                    }
                }
            }
            evaluate_split_prepared(&train, &test, cfg, kind, knn_k)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut truths = Vec::new();
    let mut tpc = Vec::new();
    let mut knn = Vec::new();
    for (t, a, b) in fold_results {
        truths.extend(t);
        tpc.extend(a);
        knn.extend(b);
    }
    let tpc_confusion = confusion_matrix(&tpc, &truths, &classes)?;
    let knn_confusion = confusion_matrix(&knn, &truths, &classes)?;
    Ok(ComparisonReport {
        tpc_accuracy: tpc_confusion.accuracy(),
        knn_accuracy: knn_confusion.accuracy(),
        tpc_confusion,
        knn_confusion,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    /// Largest inter-class pairwise-distance sum in the linear space.
    pub linear_max: f64,
    /// Largest inter-class pairwise-distance sum in the kernel space.
    pub kernel_max: f64,
    /// `kernel_max / linear_max`.
    pub r: f64,
    /// `r` when the kernel space stretches classes farther apart, `1/r`
    /// otherwise (the paper's case split; not clamped to >= 1).
    pub f: f64,
}

/// Core separation computation over already-projected labeled points.
pub fn separation_from_projections(
    linear: &[(Vec<f64>, String)],
    kernel: &[(Vec<f64>, String)],
) -> Result<SeparationReport> {
    let max_interclass = |points: &[(Vec<f64>, String)]| -> Result<f64> {
        let mut sums: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        for (i, (pi, li)) in points.iter().enumerate() {
            for (pj, lj) in &points[i + 1..] {
                if li == lj {
                    continue;
                }
                let key = if li.as_str() < lj.as_str() {
                    (li.as_str(), lj.as_str())
                } else {
                    (lj.as_str(), li.as_str())
                };
                let d: f64 = pi
                    .iter()
                    .zip(pj)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                *sums.entry(key).or_insert(0.0) += d;
            }
        }
        sums.values()
            .fold(None, |acc: Option<f64>, &v| Some(acc.map_or(v, |a| a.max(v))))
            .ok_or(Error::TooFewClasses { need: 2 })
    };
    let linear_max = max_interclass(linear)?;
    let kernel_max = max_interclass(kernel)?;
    let r = kernel_max / linear_max;
    let f = if kernel_max > linear_max { r } else { 1.0 / r };
    Ok(SeparationReport {
        linear_max,
        kernel_max,
        r,
        f,
    })
}

/// Project the training set through both models and compare class spread.
pub fn separation_report(
    linear: &EigenModel,
    kernel: &EigenModel,
    data: &TrainingSet,
) -> Result<SeparationReport> {
    let project_all = |model: &EigenModel| -> Result<Vec<(Vec<f64>, String)>> {
        data.samples()
            .iter()
            .map(|s| Ok((model.project(&s.vector)?, s.label.clone())))
            .collect()
    };
    separation_from_projections(&project_all(linear)?, &project_all(kernel)?)
}

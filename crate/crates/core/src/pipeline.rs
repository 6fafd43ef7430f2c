//! End-to-end glue: frames to templates to eigenspace trajectories to
//! labeled cloud signatures, bundled with the statistics that classification
//! and retrieval need (similarity scale, null-motion thresholds).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::MetricParams;
use crate::eigenspace::{
    train_kpca, train_pca, tune_kernel_degree, EigenModel, Trajectory, TrainingSample,
    TrainingSet, DEFAULT_K,
};
use crate::error::{Error, Result};
use crate::geometry::{cloud_signature, CloudSignature, GeometryConfig};
use crate::templates::{sequence_templates, FlowConfig, FrameSequence, CANONICAL_SIZE};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Canonical square frame size clips are resized to at ingest.
    pub target_size: usize,
    pub flow: FlowConfig,
    pub geometry: GeometryConfig,
    pub metric: MetricParams,
    /// Retained eigenspace dimensions.
    pub k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target_size: CANONICAL_SIZE,
            flow: FlowConfig::default(),
            geometry: GeometryConfig::default(),
            metric: MetricParams::default(),
            k: DEFAULT_K,
        }
    }
}

/// Eigenspace flavor to train.
#[derive(Debug, Clone, Copy)]
pub enum TrainKind {
    Linear,
    /// `degree: None` tunes the exponent by class separation over 1..=4.
    Polynomial { degree: Option<u32>, offset: f64 },
}

/// A labeled clip held in memory.
#[derive(Debug, Clone)]
pub struct Clip {
    pub label: String,
    pub clip_id: String,
    pub seq: FrameSequence,
}

/// A clip reduced to its flattened template vectors; lets evaluation reuse
/// the optical-flow work across cross-validation folds.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub label: String,
    pub clip_id: String,
    pub vectors: Vec<Vec<f64>>,
}

/// Run the template stage once for a clip.
pub fn prepare_clip(clip: &Clip, cfg: &PipelineConfig) -> Result<PreparedClip> {
    Ok(PreparedClip {
        label: clip.label.clone(),
        clip_id: clip.clip_id.clone(),
        vectors: clip_vectors(&clip.seq, cfg)?,
    })
}

/// Trained eigenspace plus per-clip training clouds and derived statistics.
pub struct ActionModel {
    pub eigen: EigenModel,
    /// One labeled signature per training clip.
    pub clouds: Vec<CloudSignature>,
    /// Median inter-class cloud distance; similarity scale for retrieval.
    pub d0: f64,
    /// Median training centroid norm; null-action reference scale.
    pub median_centroid_norm: f64,
    /// Median training cloud radius; null-action reference scale.
    pub median_radius: f64,
}

/// Flatten a clip into template vectors.
pub fn clip_vectors(clip: &FrameSequence, cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let templates = sequence_templates(clip, &cfg.flow)?;
    Ok(templates.iter().map(|t| t.to_vector()).collect())
}

/// Project a clip through the eigenspace and build its signature.
pub fn clip_signature(
    eigen: &EigenModel,
    clip: &FrameSequence,
    cfg: &PipelineConfig,
) -> Result<(CloudSignature, Trajectory)> {
    let vectors = clip_vectors(clip, cfg)?;
    let traj = eigen.project_sequence(vectors.iter().map(|v| v.as_slice()))?;
    let sig = cloud_signature(&traj, &cfg.geometry)?;
    Ok((sig, traj))
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Train the eigenspace on all clip templates, then signature every clip
/// and derive the model statistics.
pub fn train_action_model(
    clips: &[Clip],
    cfg: &PipelineConfig,
    kind: TrainKind,
) -> Result<ActionModel> {
    let prepared = clips
        .iter()
        .map(|c| prepare_clip(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    train_action_model_prepared(&prepared, cfg, kind)
}

/// Train from clips whose template vectors are already computed.
pub fn train_action_model_prepared(
    clips: &[PreparedClip],
    cfg: &PipelineConfig,
    kind: TrainKind,
) -> Result<ActionModel> {
    if clips.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut samples = Vec::new();
    for clip in clips {
        for v in &clip.vectors {
            samples.push(TrainingSample {
                vector: v.clone(),
                label: clip.label.clone(),
                clip_id: clip.clip_id.clone(),
            });
        }
    }
    let data = TrainingSet::new(samples)?;
    let eigen = match kind {
        TrainKind::Linear => train_pca(&data, cfg.k)?,
        TrainKind::Polynomial {
            degree: Some(d),
            offset,
        } => train_kpca(&data, cfg.k, d, offset)?,
        TrainKind::Polynomial {
            degree: None,
            offset,
        } => {
            let (best, _) = tune_kernel_degree(&data, cfg.k, offset, &[1, 2, 3, 4])?;
            train_kpca(&data, cfg.k, best, offset)?
        }
    };
    let mut clouds = Vec::with_capacity(clips.len());
    for clip in clips {
        let traj = eigen.project_sequence(clip.vectors.iter().map(|v| v.as_slice()))?;
        let mut sig = cloud_signature(&traj, &cfg.geometry)?;
        sig.label = Some(clip.label.clone());
        clouds.push(sig);
    }
    finish_model(eigen, clouds, &cfg.metric)
}

/// Compute the derived statistics for an already-built cloud set.
pub fn finish_model(
    eigen: EigenModel,
    clouds: Vec<CloudSignature>,
    metric: &MetricParams,
) -> Result<ActionModel> {
    let pair_metric = MetricParams {
        rho: 0.0,
        ..*metric
    };
    let mut inter = Vec::new();
    let mut all = Vec::new();
    for i in 0..clouds.len() {
        for j in i + 1..clouds.len() {
            let d = crate::classifier::cloud_distance(&clouds[i], &clouds[j], &pair_metric, None)?
                .total;
            all.push(d);
            if clouds[i].label != clouds[j].label {
                inter.push(d);
            }
        }
    }
    let d0 = if !inter.is_empty() {
        median(&mut inter)
    } else if !all.is_empty() {
        median(&mut all)
    } else {
        1.0
    };
    let d0 = if d0 > 0.0 { d0 } else { 1.0 };
    let mut norms: Vec<f64> = clouds
        .iter()
        .map(|c| c.centroid.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut radii: Vec<f64> = clouds.iter().map(|c| c.radius).collect();
    Ok(ActionModel {
        eigen,
        clouds,
        d0,
        median_centroid_norm: median(&mut norms),
        median_radius: median(&mut radii),
    })
}

#[derive(Serialize, Deserialize)]
struct CloudsFile {
    d0: f64,
    median_centroid_norm: f64,
    median_radius: f64,
    clouds: Vec<CloudSignature>,
}

impl ActionModel {
    /// Persist next to the eigenspace artifacts: `clouds.json` alongside
    /// `manifest.json` and `model.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.eigen.save(dir)?;
        let file = CloudsFile {
            d0: self.d0,
            median_centroid_norm: self.median_centroid_norm,
            median_radius: self.median_radius,
            clouds: self.clouds.clone(),
        };
        let path = dir.join("clouds.json");
        fs::write(&path, serde_json::to_vec_pretty(&file)?).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let eigen = EigenModel::load(dir)?;
        let path = dir.join("clouds.json");
        let file: CloudsFile =
            serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        Ok(ActionModel {
            eigen,
            clouds: file.clouds,
            d0: file.d0,
            median_centroid_norm: file.median_centroid_norm,
            median_radius: file.median_radius,
        })
    }

    /// Labels seen in training, sorted.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .clouds
            .iter()
            .filter_map(|c| c.label.clone())
            .collect();
        labels.sort();
        labels.dedup();
        labels
    }
}

//! Trajectory point cloud classification.
//!
//! The distance between two cloud signatures combines the centroid
//! separation, the angle between the clouds' mean osculating planes
//! modulated by `alpha`, and an optional fuzzy cloud-KNN penalty:
//! `D = delta_c + alpha(delta_c) * theta + rho * F`. The modulation makes
//! plane orientation decisive only when clouds overlap: it vanishes for
//! coincident centroids, peaks at small separations, and decays
//! exponentially once centroids are far apart.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CloudSignature;

/// Functional form of the plane-angle modulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaVariant {
    /// `beta * exp(-l1*x) * (1 - exp(-l2*x))`: zero at zero separation,
    /// peaked at small separation, exponentially decaying tail.
    #[default]
    Peaked,
    /// The same numerator divided by the separation; tends to `beta * l2`
    /// at zero instead of vanishing.
    Literal,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlphaParams {
    pub variant: AlphaVariant,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for AlphaParams {
    fn default() -> Self {
        AlphaParams {
            variant: AlphaVariant::Peaked,
            beta: 1.0,
            lambda1: 2.5,
            lambda2: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FuzzyParams {
    pub k_neighbors: usize,
    pub m_fuzzifier: f64,
    pub epsilon: f64,
}

impl Default for FuzzyParams {
    fn default() -> Self {
        FuzzyParams {
            k_neighbors: 7,
            m_fuzzifier: 2.0,
            epsilon: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricParams {
    pub alpha: AlphaParams,
    /// Weight of the fuzzy membership penalty; zero disables it.
    pub rho: f64,
    pub fuzzy: FuzzyParams,
    /// Divide the centroid separation by the sum of mean cloud radii.
    pub normalize_by_radii: bool,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            alpha: AlphaParams::default(),
            rho: 0.0,
            fuzzy: FuzzyParams::default(),
            normalize_by_radii: true,
        }
    }
}

/// The distance metric with each term exposed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistanceBreakdown {
    pub delta_c: f64,
    /// Plane angle in `[0, pi/2]` (zero when either plane is undefined).
    pub theta: f64,
    pub alpha_value: f64,
    pub f_value: f64,
    pub total: f64,
}

impl DistanceBreakdown {
    pub fn assemble(delta_c: f64, alpha_value: f64, theta: f64, rho: f64, f_value: f64) -> Self {
        DistanceBreakdown {
            delta_c,
            theta,
            alpha_value,
            f_value,
            total: delta_c + alpha_value * theta + rho * f_value,
        }
    }
}

/// Plane-angle modulation as a function of normalized centroid separation.
pub fn alpha(delta_c: f64, p: &AlphaParams) -> f64 {
    debug_assert!(delta_c >= 0.0);
    let envelope = p.beta * (-p.lambda1 * delta_c).exp();
    let rise = 1.0 - (-p.lambda2 * delta_c).exp();
    match p.variant {
        AlphaVariant::Peaked => envelope * rise,
        AlphaVariant::Literal => {
            if delta_c < 1e-12 {
                p.beta * p.lambda2
            } else {
                envelope * rise / delta_c
            }
        }
    }
}

/// An eigenspace point tagged with its local differential tuple and class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggedPoint {
    pub position: [f64; 3],
    pub tangent: [f64; 3],
    pub kappa: f64,
    pub tau: f64,
    pub label: String,
}

/// Valid segment midpoints of a signature as tagged points.
pub fn tagged_points(sig: &CloudSignature, label: &str) -> Vec<TaggedPoint> {
    sig.segments
        .iter()
        .filter(|s| s.valid)
        .map(|s| TaggedPoint {
            position: s.midpoint,
            tangent: s.tangent,
            kappa: s.mean_curvature,
            tau: s.mean_torsion,
            label: label.to_string(),
        })
        .collect()
}

fn geometric_affinity(p: &TaggedPoint, q: &TaggedPoint, eps: f64) -> f64 {
    let tp = Vector3::from(p.tangent);
    let tq = Vector3::from(q.tangent);
    let align = 0.5 * (1.0 + tp.dot(&tq).abs());
    let curv = (-(p.kappa - q.kappa).abs() / (p.kappa + q.kappa + eps)).exp();
    let tors = (-(p.tau - q.tau).abs() / (p.tau.abs() + q.tau.abs() + eps)).exp();
    align * curv * tors
}

/// Fuzzy cloud-KNN penalty of a query signature against class `class`.
///
/// Per query point the `k_neighbors` nearest training points (any class)
/// vote with weights combining inverse distance and geometric affinity;
/// `F` is one minus the mean membership in `class`, so it lies in `[0, 1]`.
pub fn fuzzy_penalty(
    query: &CloudSignature,
    class: &str,
    training: &[TaggedPoint],
    p: &FuzzyParams,
) -> Result<f64> {
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if p.k_neighbors < 1 || p.m_fuzzifier <= 1.0 {
        return Err(Error::InvalidConfig(
            "fuzzy KNN needs k >= 1 and fuzzifier > 1".into(),
        ));
    }
    let query_points = tagged_points(query, "");
    if query_points.is_empty() {
        // a plane-less query has no local geometry to compare; report full
        // penalty, which shifts every class equally
        return Ok(1.0);
    }
    let exponent = 2.0 / (p.m_fuzzifier - 1.0);
    let mut membership_sum = 0.0;
    for qp in &query_points {
        let pos = Vector3::from(qp.position);
        let mut by_dist: Vec<(f64, &TaggedPoint)> = training
            .iter()
            .map(|t| ((Vector3::from(t.position) - pos).norm(), t))
            .collect();
        by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        by_dist.truncate(p.k_neighbors);
        let mut total = 0.0;
        let mut in_class = 0.0;
        for (dist, t) in &by_dist {
            let w = geometric_affinity(qp, t, p.epsilon) / (dist.powf(exponent) + p.epsilon);
            total += w;
            if t.label == class {
                in_class += w;
            }
        }
        membership_sum += in_class / total;
    }
    Ok(1.0 - membership_sum / query_points.len() as f64)
}

/// Full distance between two signatures. `fuzzy_context` supplies the
/// candidate class and tagged training points when `rho > 0`.
pub fn cloud_distance(
    a: &CloudSignature,
    b: &CloudSignature,
    p: &MetricParams,
    fuzzy_context: Option<(&str, &[TaggedPoint])>,
) -> Result<DistanceBreakdown> {
    if a.centroid.len() != b.centroid.len() {
        return Err(Error::VectorDimension {
            got: b.centroid.len(),
            expected: a.centroid.len(),
        });
    }
    let raw: f64 = a
        .centroid
        .iter()
        .zip(&b.centroid)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let radii = a.radius + b.radius;
    let delta_c = if p.normalize_by_radii && radii > 0.0 {
        raw / radii
    } else {
        raw
    };
    let theta = match (a.mean_binormal, b.mean_binormal) {
        (Some(ba), Some(bb)) => {
            let dot = Vector3::from(ba).dot(&Vector3::from(bb)).abs().clamp(0.0, 1.0);
            dot.acos()
        }
        _ => 0.0,
    };
    let alpha_value = alpha(delta_c, &p.alpha);
    let f_value = match (p.rho > 0.0, fuzzy_context) {
        (true, Some((class, training))) => fuzzy_penalty(a, class, training, &p.fuzzy)?,
        _ => 0.0,
    };
    Ok(DistanceBreakdown::assemble(
        delta_c,
        alpha_value,
        theta,
        p.rho,
        f_value,
    ))
}

/// Classify a query against labeled training clouds: minimum distance wins,
/// per-class score is the smallest distance within the class. Ties break
/// lexicographically by class name.
pub fn classify_cloud(
    query: &CloudSignature,
    clouds: &[CloudSignature],
    p: &MetricParams,
) -> Result<(String, BTreeMap<String, f64>)> {
    if clouds.is_empty() {
        return Err(Error::EmptyModel);
    }
    let training: Vec<TaggedPoint> = if p.rho > 0.0 {
        clouds
            .iter()
            .flat_map(|c| tagged_points(c, c.label.as_deref().unwrap_or("")))
            .collect()
    } else {
        Vec::new()
    };
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for cloud in clouds {
        let label = cloud
            .label
            .clone()
            .ok_or_else(|| Error::UnknownLabel("<unlabeled cloud>".into()))?;
        let context = if p.rho > 0.0 {
            Some((label.as_str(), training.as_slice()))
        } else {
            None
        };
        let d = cloud_distance(query, cloud, p, context)?.total;
        scores
            .entry(label)
            .and_modify(|s| {
                if d < *s {
                    *s = d;
                }
            })
            .or_insert(d);
    }
    // BTreeMap iterates in key order, so equal scores resolve to the
    // lexicographically first class
    let best = scores
        .iter()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k.clone())
        .expect("non-empty scores");
    Ok((best, scores))
}

/// Baseline per-point KNN over raw eigenspace trajectories: each query point
/// votes with the majority class of its `k` nearest training points; the
/// clip takes the modal vote with its supporting fraction.
pub fn baseline_knn(
    query_points: &[Vec<f64>],
    training: &[(Vec<f64>, String)],
    k: usize,
) -> Result<(String, f64)> {
    if query_points.is_empty() || training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if k < 1 || k > training.len() {
        return Err(Error::KnnTooLarge {
            k,
            n: training.len(),
        });
    }
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for qp in query_points {
        let mut by_dist: Vec<(f64, &str)> = training
            .iter()
            .map(|(tp, label)| {
                let d2: f64 = tp
                    .iter()
                    .zip(qp)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, label.as_str())
            })
            .collect();
        by_dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut local: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, label) in by_dist.iter().take(k) {
            *local.entry(label).or_insert(0) += 1;
        }
        let point_class = local
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(l, _)| *l)
            .expect("k >= 1");
        *votes.entry(point_class).or_insert(0) += 1;
    }
    let (class, count) = votes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(l, c)| (l.to_string(), *c))
        .expect("non-empty query");
    Ok((class, count as f64 / query_points.len() as f64))
}

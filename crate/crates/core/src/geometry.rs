//! Differential geometry of eigenspace trajectories.
//!
//! Trajectories are fit with natural cubic smoothing splines over a
//! chord-length parameter, reparameterized to arc length through a dense
//! lookup table, and carved into overlapping equal-arc segments. Each segment
//! carries a Frenet-Serret frame plus averaged curvature and torsion; the
//! curvature-weighted, sign-aligned sum of segment binormals gives the
//! trajectory's mean osculating plane. Frame geometry uses the first three
//! eigenspace components; the cloud centroid and radius use all of them.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::eigenspace::Trajectory;
use crate::error::{Error, Result};

/// Segments with mean curvature below this have no usable binormal.
pub const KAPPA_MIN: f64 = 1e-8;
/// Fraction of arc length dropped at each end before segmenting.
pub const DEFAULT_TRIM: f64 = 0.1;
/// Interior quadrature samples per segment for the curvature/torsion means.
const QUADRATURE_SAMPLES: usize = 16;
/// Arc-length table resolution.
const ARC_SAMPLES: usize = 512;

#[derive(Debug, Clone)]
pub struct GeometryConfig {
    pub segment_count: usize,
    pub overlap: f64,
    pub trim: f64,
    /// Smoothing factor: target RMS fit residual as a fraction of the mean
    /// cloud radius.
    pub smoothing: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            segment_count: 10,
            overlap: 0.5,
            trim: DEFAULT_TRIM,
            smoothing: 0.05,
        }
    }
}

// ---------------------------------------------------------------------------
// 1-D natural cubic smoothing spline

/// Natural cubic spline given by knot values and second derivatives.
struct Spline1 {
    t: Vec<f64>,
    f: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    g: Vec<f64>,
}

impl Spline1 {
    fn eval(&self, x: f64, order: usize) -> f64 {
        let n = self.t.len();
        let x = x.clamp(self.t[0], self.t[n - 1]);
        // locate interval
        let mut i = match self
            .t
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if i >= n - 1 {
            i = n - 2;
        }
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        let (fi, fj, gi, gj) = (self.f[i], self.f[i + 1], self.g[i], self.g[i + 1]);
        match order {
            0 => {
                a * fi
                    + b * fj
                    + ((a * a * a - a) * gi + (b * b * b - b) * gj) * h * h / 6.0
            }
            1 => {
                (fj - fi) / h
                    + ((1.0 - 3.0 * a * a) * gi + (3.0 * b * b - 1.0) * gj) * h / 6.0
            }
            2 => a * gi + b * gj,
            3 => (gj - gi) / h,
            _ => 0.0,
        }
    }
}

/// Solve a symmetric positive-definite pentadiagonal system in place.
/// `band[r][c]` holds M[r][r+c] for c in 0..=2.
fn solve_penta(band: &mut [[f64; 3]], rhs: &mut [f64]) {
    let n = rhs.len();
    // LDL^T with bandwidth 2; after factorization band[i][0] holds D[i] and
    // band[k][c] (c = 1, 2) holds L[k+c][k]
    for i in 0..n {
        for k in i.saturating_sub(2)..i {
            let l_ik = band[k][i - k];
            band[i][0] -= l_ik * l_ik * band[k][0];
        }
        // L[i+1][i]: within the bandwidth only k = i - 1 contributes
        if i + 1 < n {
            let mut v = band[i][1];
            if i >= 1 {
                v -= band[i - 1][1] * band[i - 1][2] * band[i - 1][0];
            }
            band[i][1] = v / band[i][0];
        }
        // L[i+2][i]: no shared columns inside the bandwidth
        if i + 2 < n {
            band[i][2] /= band[i][0];
        }
    }
    // forward: L y = rhs
    for i in 0..n {
        for k in i.saturating_sub(2)..i {
            rhs[i] -= band[k][i - k] * rhs[k];
        }
    }
    // diagonal
    for i in 0..n {
        rhs[i] /= band[i][0];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        for c in 1..=2 {
            if i + c < n {
                rhs[i] -= band[i][c] * rhs[i + c];
            }
        }
    }
}

/// Fit a natural cubic smoothing spline with total squared-residual budget.
/// `budget <= 0` interpolates.
fn smooth_spline(t: &[f64], y: &[f64], budget: f64) -> Spline1 {
    let n = t.len();
    debug_assert!(n >= 4);
    let m = n - 2;
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // column c of Q touches rows c, c+1, c+2
    let q = |c: usize, r: usize| -> f64 {
        if r == c {
            1.0 / h[c]
        } else if r == c + 1 {
            -1.0 / h[c] - 1.0 / h[c + 1]
        } else if r == c + 2 {
            1.0 / h[c + 1]
        } else {
            0.0
        }
    };
    let solve = |lambda: f64| -> (Vec<f64>, Vec<f64>, f64) {
        let mut band = vec![[0.0f64; 3]; m];
        for a in 0..m {
            for c in 0..=2usize {
                let b = a + c;
                if b >= m {
                    continue;
                }
                let mut qtq = 0.0;
                let lo = a.max(b);
                let hi = (a + 2).min(b + 2).min(n - 1);
                for r in lo..=hi {
                    qtq += q(a, r) * q(b, r);
                }
                let rmat = if c == 0 {
                    (h[a] + h[a + 1]) / 3.0
                } else if c == 1 {
                    h[a + 1] / 6.0
                } else {
                    0.0
                };
                band[a][c] = rmat + lambda * qtq;
            }
        }
        let mut rhs: Vec<f64> = (0..m)
            .map(|c| y[c] / h[c] - y[c + 1] * (1.0 / h[c] + 1.0 / h[c + 1]) + y[c + 2] / h[c + 1])
            .collect();
        solve_penta(&mut band, &mut rhs);
        let gamma = rhs;
        let mut f = y.to_vec();
        let mut residual = 0.0;
        for r in 0..n {
            let lo = r.saturating_sub(2);
            let hi = r.min(m.saturating_sub(1));
            let mut qg = 0.0;
            for c in lo..=hi {
                if c < m && r >= c && r <= c + 2 {
                    qg += q(c, r) * gamma[c];
                }
            }
            let delta = lambda * qg;
            f[r] -= delta;
            residual += delta * delta;
        }
        (f, gamma, residual)
    };

    let build = |f: Vec<f64>, gamma: Vec<f64>| -> Spline1 {
        let mut g = vec![0.0; n];
        g[1..n - 1].copy_from_slice(&gamma);
        Spline1 {
            t: t.to_vec(),
            f,
            g,
        }
    };

    if budget <= 0.0 {
        let (f, gamma, _) = solve(0.0);
        return build(f, gamma);
    }
    // residual grows monotonically with lambda; find the largest lambda
    // whose residual stays within budget
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    let (_, _, res_hi) = solve(10f64.powf(hi));
    if res_hi <= budget {
        let (f, gamma, _) = solve(10f64.powf(hi));
        return build(f, gamma);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (_, _, res) = solve(10f64.powf(mid));
        if res <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (f, gamma, _) = solve(10f64.powf(lo));
    build(f, gamma)
}

// ---------------------------------------------------------------------------
// 3-D arc-length curve

/// Arc-length-parameterized cubic spline through the first three trajectory
/// dimensions.
pub struct SplineCurve {
    dims: [Spline1; 3],
    t_start: f64,
    t_end: f64,
    /// Cumulative arc length at uniformly spaced parameter values.
    arc: Vec<f64>,
    length: f64,
}

fn traj_points3(traj: &Trajectory) -> Vec<Vector3<f64>> {
    traj.points
        .iter()
        .map(|p| {
            Vector3::new(
                p.first().copied().unwrap_or(0.0),
                p.get(1).copied().unwrap_or(0.0),
                p.get(2).copied().unwrap_or(0.0),
            )
        })
        .collect()
}

/// Fit the arc-length spline. `smoothing` scales the residual budget
/// (`smoothing * mean radius * point count`, split across dimensions);
/// zero interpolates.
pub fn fit_spline(traj: &Trajectory, smoothing: f64) -> Result<SplineCurve> {
    if traj.len() < 5 {
        return Err(Error::TooFewPoints {
            got: traj.len(),
            need: 5,
        });
    }
    let raw = traj_points3(traj);
    // collapse consecutive coincident points; zero chord steps break the
    // parameterization
    let spread = {
        let centroid = raw.iter().sum::<Vector3<f64>>() / raw.len() as f64;
        raw.iter()
            .map(|p| (p - centroid).norm())
            .fold(0.0f64, f64::max)
    };
    if spread <= 0.0 {
        return Err(Error::ZeroLengthTrajectory);
    }
    let eps = 1e-12 * spread.max(1.0);
    let mut pts: Vec<Vector3<f64>> = vec![raw[0]];
    for p in &raw[1..] {
        if (p - pts.last().unwrap()).norm() > eps {
            pts.push(*p);
        }
    }
    if pts.len() < 4 {
        return Err(Error::ZeroLengthTrajectory);
    }
    let n = pts.len();
    let mut t = vec![0.0f64; n];
    for i in 1..n {
        t[i] = t[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    let centroid = pts.iter().sum::<Vector3<f64>>() / n as f64;
    let r_mean = pts.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n as f64;
    // RMS residual budget of `smoothing * r_mean`, split across dimensions
    let budget = if smoothing > 0.0 {
        (smoothing * r_mean).powi(2) * n as f64 / 3.0
    } else {
        0.0
    };
    let dims = [0, 1, 2].map(|d| {
        let y: Vec<f64> = pts.iter().map(|p| p[d]).collect();
        smooth_spline(&t, &y, budget)
    });
    let t_start = t[0];
    let t_end = t[n - 1];
    // cumulative arc length over a dense uniform parameter grid
    let mut arc = Vec::with_capacity(ARC_SAMPLES + 1);
    arc.push(0.0);
    let step = (t_end - t_start) / ARC_SAMPLES as f64;
    let speed = |tv: f64| -> f64 {
        let dx = dims[0].eval(tv, 1);
        let dy = dims[1].eval(tv, 1);
        let dz = dims[2].eval(tv, 1);
        (dx * dx + dy * dy + dz * dz).sqrt()
    };
    let mut prev_speed = speed(t_start);
    for i in 1..=ARC_SAMPLES {
        let tv = t_start + step * i as f64;
        let sp = speed(tv);
        let ds = 0.5 * (prev_speed + sp) * step;
        arc.push(arc[i - 1] + ds);
        prev_speed = sp;
    }
    let length = *arc.last().unwrap();
    if !(length.is_finite()) || length <= 1e-12 {
        return Err(Error::ZeroLengthTrajectory);
    }
    Ok(SplineCurve {
        dims,
        t_start,
        t_end,
        arc,
        length,
    })
}

impl SplineCurve {
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Chord parameter at arc position `s` (linear table inversion).
    fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        let i = match self
            .arc
            .binary_search_by(|v| v.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let i = i.min(self.arc.len() - 2);
        let seg = self.arc[i + 1] - self.arc[i];
        let frac = if seg > 0.0 { (s - self.arc[i]) / seg } else { 0.0 };
        let step = (self.t_end - self.t_start) / ARC_SAMPLES as f64;
        self.t_start + step * (i as f64 + frac)
    }

    pub fn point(&self, s: f64) -> Vector3<f64> {
        let t = self.param_at(s);
        Vector3::new(
            self.dims[0].eval(t, 0),
            self.dims[1].eval(t, 0),
            self.dims[2].eval(t, 0),
        )
    }

    /// First three chord-parameter derivatives at arc position `s`.
    fn derivatives(&self, s: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let t = self.param_at(s);
        let d = |order: usize| {
            Vector3::new(
                self.dims[0].eval(t, order),
                self.dims[1].eval(t, order),
                self.dims[2].eval(t, order),
            )
        };
        (d(1), d(2), d(3))
    }
}

/// Curvature and torsion at arc position `s`; the flag marks degenerate
/// (locally straight) points where torsion is reported as zero.
pub fn curvature_torsion_at(curve: &SplineCurve, s: f64) -> Result<(f64, f64, bool)> {
    if !(0.0..=curve.length() + 1e-9).contains(&s) {
        return Err(Error::ArcOutOfRange {
            s,
            len: curve.length(),
        });
    }
    let (d1, d2, d3) = curve.derivatives(s);
    let cross = d1.cross(&d2);
    let speed = d1.norm();
    let kappa = if speed > 0.0 {
        cross.norm() / speed.powi(3)
    } else {
        0.0
    };
    let cross_sq = cross.norm_squared();
    if cross_sq < 1e-16 {
        return Ok((kappa, 0.0, true));
    }
    let tau = cross.dot(&d3) / cross_sq;
    Ok((kappa, tau, false))
}

/// Frenet-Serret frame at arc position `s`; `None` where the curve is
/// locally straight.
pub fn frame_at(curve: &SplineCurve, s: f64) -> Option<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
    let (d1, d2, _) = curve.derivatives(s);
    let speed = d1.norm();
    if speed == 0.0 {
        return None;
    }
    let tangent = d1 / speed;
    let cross = d1.cross(&d2);
    let cn = cross.norm();
    if cn * cn < 1e-16 {
        return None;
    }
    let binormal = cross / cn;
    let normal = binormal.cross(&tangent);
    Some((tangent, normal, binormal))
}

// ---------------------------------------------------------------------------
// Segments and signatures

/// Per-arc-segment Frenet-Serret frame with averaged curvature and torsion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentFrame {
    pub s_start: f64,
    pub s_end: f64,
    pub midpoint: [f64; 3],
    #[serde(rename = "t")]
    pub tangent: [f64; 3],
    #[serde(rename = "n")]
    pub normal: [f64; 3],
    #[serde(rename = "b")]
    pub binormal: [f64; 3],
    #[serde(rename = "kappa")]
    pub mean_curvature: f64,
    #[serde(rename = "tau")]
    pub mean_torsion: f64,
    pub valid: bool,
}

/// Segment the trimmed arc span into `n` equal windows with fractional
/// overlap. Consecutive window starts advance by `sigma * (1 - overlap)`.
pub fn segment_curve(curve: &SplineCurve, n: usize, overlap: f64) -> Result<Vec<SegmentFrame>> {
    segment_curve_span(
        curve,
        n,
        overlap,
        DEFAULT_TRIM * curve.length(),
        (1.0 - DEFAULT_TRIM) * curve.length(),
    )
}

pub fn segment_curve_span(
    curve: &SplineCurve,
    n: usize,
    overlap: f64,
    s_lo: f64,
    s_hi: f64,
) -> Result<Vec<SegmentFrame>> {
    if n < 2 || !(0.0..=0.9).contains(&overlap) {
        return Err(Error::InvalidConfig(
            "segment count must be >= 2 and overlap in [0, 0.9]".into(),
        ));
    }
    let span = s_hi - s_lo;
    if span <= 1e-9 {
        return Err(Error::ZeroLengthTrajectory);
    }
    let sigma = span / n as f64;
    let stride = sigma * (1.0 - overlap);
    let count = ((span - sigma) / stride + 1e-9).floor() as usize + 1;
    let mut segments = Vec::with_capacity(count);
    for w in 0..count {
        let start = s_lo + stride * w as f64;
        let end = (start + sigma).min(s_hi);
        let mut kappa_sum = 0.0;
        let mut tau_sum = 0.0;
        for j in 0..QUADRATURE_SAMPLES {
            let s = start + sigma * (j as f64 + 0.5) / QUADRATURE_SAMPLES as f64;
            let (k, t, _) = curvature_torsion_at(curve, s.min(curve.length()))?;
            kappa_sum += k;
            tau_sum += t;
        }
        let mean_curvature = kappa_sum / QUADRATURE_SAMPLES as f64;
        let mean_torsion = tau_sum / QUADRATURE_SAMPLES as f64;
        let mid_s = 0.5 * (start + end);
        let midpoint = curve.point(mid_s);
        let frame = frame_at(curve, mid_s);
        let valid = mean_curvature >= KAPPA_MIN && frame.is_some();
        let (tangent, normal, binormal) = frame.unwrap_or((
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
        ));
        segments.push(SegmentFrame {
            s_start: start,
            s_end: end,
            midpoint: midpoint.into(),
            tangent: tangent.into(),
            normal: normal.into(),
            binormal: binormal.into(),
            mean_curvature,
            mean_torsion,
            valid,
        });
    }
    Ok(segments)
}

/// Curvature-weighted mean of segment binormals, sign-aligned so antipodal
/// binormals from opposite loop halves reinforce instead of cancel.
pub fn mean_binormal(segments: &[SegmentFrame]) -> Result<[f64; 3]> {
    let mut sum = Vector3::zeros();
    let mut any = false;
    for seg in segments.iter().filter(|s| s.valid) {
        let b = Vector3::from(seg.binormal);
        let w = 1.0 / (seg.mean_curvature * seg.mean_curvature);
        let aligned = if any && b.dot(&sum) < 0.0 { -b } else { b };
        sum += w * aligned;
        any = true;
    }
    if !any || sum.norm() == 0.0 {
        return Err(Error::PlaneUndefined);
    }
    Ok((sum / sum.norm()).into())
}

/// Trajectory point cloud signature: segment frames, mean osculating plane,
/// full-dimension centroid and mean radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudSignature {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    pub centroid: Vec<f64>,
    pub radius: f64,
    pub point_count: usize,
    #[serde(rename = "binormal")]
    pub mean_binormal: Option<[f64; 3]>,
    pub segments: Vec<SegmentFrame>,
}

impl CloudSignature {
    pub fn has_plane(&self) -> bool {
        self.mean_binormal.is_some()
    }
}

/// Assemble the full signature for one trajectory.
///
/// Degenerate trajectories (all points coincident, or straight runs with no
/// usable curvature) produce a signature without a plane; the distance metric
/// then degrades to its centroid term.
pub fn cloud_signature(traj: &Trajectory, cfg: &GeometryConfig) -> Result<CloudSignature> {
    if traj.is_empty() {
        return Err(Error::TooFewPoints { got: 0, need: 5 });
    }
    let dim = traj.dim();
    let mut centroid = vec![0.0f64; dim];
    for p in &traj.points {
        for (c, v) in centroid.iter_mut().zip(p) {
            *c += v;
        }
    }
    for c in centroid.iter_mut() {
        *c /= traj.len() as f64;
    }
    let radius = traj
        .points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / traj.len() as f64;

    let (segments, binormal) = match fit_spline(traj, cfg.smoothing) {
        Ok(curve) => {
            let lo = cfg.trim * curve.length();
            let hi = (1.0 - cfg.trim) * curve.length();
            match segment_curve_span(&curve, cfg.segment_count, cfg.overlap, lo, hi) {
                Ok(segments) => {
                    let binormal = mean_binormal(&segments).ok();
                    (segments, binormal)
                }
                Err(Error::ZeroLengthTrajectory) => (Vec::new(), None),
                Err(e) => return Err(e),
            }
        }
        Err(Error::ZeroLengthTrajectory) => (Vec::new(), None),
        Err(e) => return Err(e),
    };
    Ok(CloudSignature {
        label: None,
        centroid,
        radius,
        point_count: traj.len(),
        mean_binormal: binormal,
        segments,
    })
}

/// Unit normal of the least-squares plane through a point set: the direction
/// of least variance of the centered points.
pub fn fit_plane_svd(points: &[[f64; 3]]) -> Result<[f64; 3]> {
    if points.len() < 3 {
        return Err(Error::DegeneratePlaneFit);
    }
    let n = points.len();
    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += Vector3::from(*p);
    }
    centroid /= n as f64;
    let mut m = DMatrix::zeros(n, 3);
    for (i, p) in points.iter().enumerate() {
        let d = Vector3::from(*p) - centroid;
        m[(i, 0)] = d.x;
        m[(i, 1)] = d.y;
        m[(i, 2)] = d.z;
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    if sv[order[1]] < 1e-9 * sv[order[0]].max(1e-300) {
        return Err(Error::DegeneratePlaneFit);
    }
    let row = v_t.row(order[2]);
    Ok([row[0], row[1], row[2]])
}

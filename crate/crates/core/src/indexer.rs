//! Timeline indexing and similarity retrieval.
//!
//! A sliding window marches along a long video; each window is reduced to a
//! cloud signature, scored against the trained clouds, and stored as one
//! JSON line. Queries reduce a clip the same way and rank stored windows by
//! `100 * exp(-D / D0)`, where `D0` is the median inter-class training
//! distance kept with the model.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify_cloud, cloud_distance};
use crate::error::{Error, Result};
use crate::geometry::CloudSignature;
use crate::pipeline::{clip_signature, ActionModel, PipelineConfig};
use crate::templates::FrameSequence;

pub const INDEX_FORMAT: &str = "mcidx";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexerConfig {
    /// Window size in frames.
    pub window: usize,
    /// Window start spacing in frames.
    pub stride: usize,
    /// Null-action bound as a fraction of the median training centroid norm
    /// and radius.
    pub null_threshold: f64,
}

impl Default for IndexerConfig {
    fn default() -> Self {
        IndexerConfig {
            window: 250,
            stride: 50,
            null_threshold: 0.15,
        }
    }
}

impl IndexerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window <= self.stride || self.stride < 1 {
            return Err(Error::InvalidConfig(
                "indexer needs window > stride >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexRecord {
    pub video_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    #[serde(flatten)]
    pub signature: CloudSignature,
    /// Per-class minimum distance.
    pub scores: BTreeMap<String, f64>,
    pub predicted: Option<String>,
    #[serde(rename = "null")]
    pub null_flag: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryHit {
    pub video_id: String,
    pub window: [usize; 2],
    pub similarity_pct: f64,
    pub predicted_class: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryResult {
    pub null_query: bool,
    pub results: Vec<QueryHit>,
}

/// Window starts: `0, stride, 2*stride, ...` while a full window fits; a
/// single all-covering window when the video is shorter than one window.
pub fn window_spans(frames: usize, cfg: &IndexerConfig) -> Vec<(usize, usize)> {
    if frames < cfg.window {
        return vec![(0, frames)];
    }
    let mut spans = Vec::new();
    let mut start = 0;
    while start + cfg.window <= frames {
        spans.push((start, start + cfg.window));
        start += cfg.stride;
    }
    spans
}

fn is_null_signature(sig: &CloudSignature, model: &ActionModel, threshold: f64) -> bool {
    let norm = sig.centroid.iter().map(|x| x * x).sum::<f64>().sqrt();
    norm < threshold * model.median_centroid_norm && sig.radius < threshold * model.median_radius
}

/// Index every window of a video against a trained model.
pub fn index_timeline(
    video: &FrameSequence,
    model: &ActionModel,
    cfg: &IndexerConfig,
    pipeline_cfg: &PipelineConfig,
    video_id: &str,
) -> Result<Vec<IndexRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for (start, end) in window_spans(video.len(), cfg) {
        let window = FrameSequence::new(video.frames[start..end].to_vec(), video.fps)?;
        let (sig, _) = clip_signature(&model.eigen, &window, pipeline_cfg)?;
        let null_flag = is_null_signature(&sig, model, cfg.null_threshold);
        let (scores, predicted) = if null_flag {
            (BTreeMap::new(), None)
        } else {
            let (class, scores) = classify_cloud(&sig, &model.clouds, &pipeline_cfg.metric)?;
            (scores, Some(class))
        };
        records.push(IndexRecord {
            video_id: video_id.to_string(),
            start_frame: start,
            end_frame: end,
            signature: sig,
            scores,
            predicted,
            null_flag,
        });
    }
    Ok(records)
}

/// Round every float in a JSON tree to 9 significant digits so the stored
/// form is byte-stable.
fn round_floats(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.as_i64().is_none() && n.as_u64().is_none() {
                    let rounded: f64 = format!("{f:.8e}").parse().unwrap_or(f);
                    if let Some(num) = serde_json::Number::from_f64(rounded) {
                        *value = serde_json::Value::Number(num);
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(rename = "K")]
    k: usize,
}

/// Write the index atomically (temp file then rename): header line followed
/// by one JSON line per record.
pub fn save_index(records: &[IndexRecord], path: &Path, k: usize) -> Result<()> {
    let mut out = String::new();
    let header = Header {
        format: INDEX_FORMAT.to_string(),
        version: INDEX_VERSION,
        k,
    };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for record in records {
        let mut value = serde_json::to_value(record)?;
        round_floats(&mut value);
        out.push_str(&serde_json::to_string(&value)?);
        out.push('\n');
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, out).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load an index; returns the records and the stored eigenspace dimension.
pub fn load_index(path: &Path) -> Result<(Vec<IndexRecord>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(Error::MalformedIndex {
        line: 1,
        reason: "empty file".into(),
    })?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| Error::MalformedIndex {
            line: 1,
            reason: e.to_string(),
        })?;
    if header.format != INDEX_FORMAT {
        return Err(Error::MalformedIndex {
            line: 1,
            reason: format!("unknown format {:?}", header.format),
        });
    }
    if header.version != INDEX_VERSION {
        return Err(Error::IndexVersion {
            got: header.version,
            expected: INDEX_VERSION,
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let record: IndexRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedIndex {
                line: i + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok((records, header.k))
}

/// Rank non-null index windows by similarity to an already-computed query
/// signature.
pub fn query_similarity_signature(
    query: &CloudSignature,
    model: &ActionModel,
    records: &[IndexRecord],
    top_k: usize,
    cfg: &IndexerConfig,
    pipeline_cfg: &PipelineConfig,
) -> Result<QueryResult> {
    if records.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if is_null_signature(query, model, cfg.null_threshold) {
        return Ok(QueryResult {
            null_query: true,
            results: Vec::new(),
        });
    }
    let mut hits = Vec::new();
    for record in records.iter().filter(|r| !r.null_flag) {
        let d = cloud_distance(query, &record.signature, &pipeline_cfg.metric, None)?.total;
        let similarity = 100.0 * (-d / model.d0).exp();
        hits.push(QueryHit {
            video_id: record.video_id.clone(),
            window: [record.start_frame, record.end_frame],
            similarity_pct: similarity,
            predicted_class: record.predicted.clone(),
        });
    }
    hits.sort_by(|a, b| b.similarity_pct.partial_cmp(&a.similarity_pct).unwrap());
    hits.truncate(top_k);
    Ok(QueryResult {
        null_query: false,
        results: hits,
    })
}

/// Full query path: clip frames to signature to ranked windows.
pub fn query_similarity(
    clip: &FrameSequence,
    model: &ActionModel,
    records: &[IndexRecord],
    top_k: usize,
    cfg: &IndexerConfig,
    pipeline_cfg: &PipelineConfig,
) -> Result<QueryResult> {
    if records.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let (sig, traj) = clip_signature(&model.eigen, clip, pipeline_cfg)?;
    if traj.len() < 5 {
        return Err(Error::TooFewPoints {
            got: traj.len(),
            need: 5,
        });
    }
    query_similarity_signature(&sig, model, records, top_k, cfg, pipeline_cfg)
}

/// One-vs-rest confusion counts for a class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl BinaryCounts {
    pub fn tpr(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_).max(1) as f64
    }

    pub fn tnr(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp).max(1) as f64
    }
}

/// A labeled ground-truth interval over frame numbers, end exclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthInterval {
    pub label: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    a.1.min(b.1).saturating_sub(a.0.max(b.0))
}

/// Score indexed windows against ground truth, one-vs-rest per class.
///
/// A window matches class `c` when at least half of it lies inside `c`
/// intervals; matching plus predicting `c` is a TP, predicting without a
/// match an FP, matching without predicting an FN, the rest TN.
pub fn annotate_intervals(
    records: &[IndexRecord],
    truth: &[TruthInterval],
) -> Result<BTreeMap<String, BinaryCounts>> {
    for (i, a) in truth.iter().enumerate() {
        for b in &truth[i + 1..] {
            if a.label != b.label
                && overlap((a.start_frame, a.end_frame), (b.start_frame, b.end_frame)) > 0
            {
                return Err(Error::ContradictoryGroundTruth {
                    frame: a.start_frame.max(b.start_frame),
                });
            }
        }
    }
    let mut classes: Vec<&str> = truth.iter().map(|t| t.label.as_str()).collect();
    classes.extend(records.iter().filter_map(|r| r.predicted.as_deref()));
    classes.sort();
    classes.dedup();
    let mut out: BTreeMap<String, BinaryCounts> = classes
        .iter()
        .map(|c| (c.to_string(), BinaryCounts::default()))
        .collect();
    for record in records {
        let span = (record.start_frame, record.end_frame);
        let len = record.end_frame - record.start_frame;
        for class in &classes {
            let covered: usize = truth
                .iter()
                .filter(|t| t.label == *class)
                .map(|t| overlap(span, (t.start_frame, t.end_frame)))
                .sum();
            let matches = 2 * covered >= len && len > 0;
            let predicted = record.predicted.as_deref() == Some(*class);
            let counts = out.get_mut(*class).expect("class present");
            match (predicted, matches) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_arithmetic_paper_defaults() {
        let cfg = IndexerConfig::default();
        let spans = window_spans(400, &cfg);
        assert_eq!(spans, vec![(0, 250), (50, 300), (100, 350), (150, 400)]);
        assert_eq!(window_spans(100, &cfg), vec![(0, 100)]);
        assert_eq!(window_spans(250, &cfg), vec![(0, 250)]);
        // invariant: floor((frames - m)/n) + 1
        for frames in [250usize, 299, 300, 407, 1000] {
            let expect = (frames - 250) / 50 + 1;
            assert_eq!(window_spans(frames, &cfg).len(), expect, "{frames}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(IndexerConfig {
            window: 50,
            stride: 50,
            null_threshold: 0.15
        }
        .validate()
        .is_err());
        assert!(IndexerConfig {
            window: 50,
            stride: 0,
            null_threshold: 0.15
        }
        .validate()
        .is_err());
        assert!(IndexerConfig::default().validate().is_ok());
    }

    fn record(id: &str, start: usize, end: usize, predicted: Option<&str>) -> IndexRecord {
        IndexRecord {
            video_id: id.into(),
            start_frame: start,
            end_frame: end,
            signature: CloudSignature {
                label: None,
                centroid: vec![0.5, 0.25, 0.125],
                radius: 1.0 / 3.0,
                point_count: 42,
                mean_binormal: Some([0.0, 0.6, 0.8]),
                segments: Vec::new(),
            },
            scores: BTreeMap::from([("walk".to_string(), 0.123456789123)]),
            predicted: predicted.map(String::from),
            null_flag: predicted.is_none(),
        }
    }

    #[test]
    fn index_roundtrip_and_byte_determinism() {
        let records = vec![record("a", 0, 250, Some("walk")), record("a", 50, 300, None)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.jsonl");
        save_index(&records, &path, 10).unwrap();
        let first = fs::read(&path).unwrap();
        let (loaded, k) = load_index(&path).unwrap();
        assert_eq!(k, 10);
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].video_id, "a");
        assert_eq!(loaded[0].predicted.as_deref(), Some("walk"));
        assert!(loaded[1].null_flag);
        assert!(
            (loaded[0].scores["walk"] - records[0].scores["walk"]).abs() < 1e-6
        );
        assert!((loaded[0].signature.radius - 1.0 / 3.0).abs() < 1e-6);
        // re-saving the loaded records reproduces the bytes
        save_index(&loaded, &path, 10).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn empty_index_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.jsonl");
        save_index(&[], &path, 10).unwrap();
        let (loaded, _) = load_index(&path).unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn malformed_index_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.jsonl");
        save_index(&[record("a", 0, 250, Some("walk"))], &path, 10).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"truncated\":");
        fs::write(&path, text).unwrap();
        match load_index(&path) {
            Err(Error::MalformedIndex { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.jsonl");
        fs::write(&path, "{\"format\":\"mcidx\",\"version\":9,\"K\":10}\n").unwrap();
        assert!(matches!(
            load_index(&path),
            Err(Error::IndexVersion { got: 9, .. })
        ));
    }

    #[test]
    fn table3_walk_fixture() {
        let counts = BinaryCounts {
            tp: 29,
            tn: 54,
            fp: 13,
            fn_: 8,
        };
        assert!((counts.tpr() - 0.78).abs() < 0.005);
        assert!((counts.tnr() - 0.81).abs() < 0.005);
    }

    #[test]
    fn annotate_perfect_predictions() {
        let records = vec![
            record("v", 0, 100, Some("walk")),
            record("v", 100, 200, Some("run")),
        ];
        let truth = vec![
            TruthInterval {
                label: "walk".into(),
                start_frame: 0,
                end_frame: 100,
            },
            TruthInterval {
                label: "run".into(),
                start_frame: 100,
                end_frame: 200,
            },
        ];
        let counts = annotate_intervals(&records, &truth).unwrap();
        for c in ["walk", "run"] {
            assert_eq!(counts[c].fp, 0, "{c}");
            assert_eq!(counts[c].fn_, 0, "{c}");
            assert_eq!(counts[c].tp, 1);
            assert_eq!(counts[c].tn, 1);
        }
    }

    #[test]
    fn annotate_half_overlap_rule() {
        // window [0,100): 50 frames covered by walk -> counts as a match
        let records = vec![record("v", 0, 100, Some("walk"))];
        let truth = vec![TruthInterval {
            label: "walk".into(),
            start_frame: 50,
            end_frame: 200,
        }];
        let counts = annotate_intervals(&records, &truth).unwrap();
        assert_eq!(counts["walk"].tp, 1);
        // 49 frames covered -> prediction becomes an FP and the interval a FN
        let truth = vec![TruthInterval {
            label: "walk".into(),
            start_frame: 51,
            end_frame: 200,
        }];
        let counts = annotate_intervals(&records, &truth).unwrap();
        assert_eq!(counts["walk"].fp, 1);
        assert_eq!(counts["walk"].tp, 0);
    }

    #[test]
    fn annotate_no_truth_no_predictions_all_tn() {
        let records = vec![record("v", 0, 100, Some("walk"))];
        let truth = vec![
            TruthInterval {
                label: "walk".into(),
                start_frame: 0,
                end_frame: 100,
            },
            TruthInterval {
                label: "jump".into(),
                start_frame: 500,
                end_frame: 600,
            },
        ];
        let counts = annotate_intervals(&records, &truth).unwrap();
        assert_eq!(
            counts["jump"],
            BinaryCounts {
                tp: 0,
                tn: 1,
                fp: 0,
                fn_: 0
            }
        );
    }

    #[test]
    fn contradictory_truth_rejected() {
        let truth = vec![
            TruthInterval {
                label: "walk".into(),
                start_frame: 0,
                end_frame: 100,
            },
            TruthInterval {
                label: "run".into(),
                start_frame: 50,
                end_frame: 150,
            },
        ];
        assert!(matches!(
            annotate_intervals(&[], &truth),
            Err(Error::ContradictoryGroundTruth { .. })
        ));
    }
}

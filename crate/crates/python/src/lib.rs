//! Python bindings: anchors, metrics, synthetic corpora, and model inference.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dvc_core::anchors::{self, Anchor, TemporalSegment};
use dvc_core::captioner::CaptionerConfig;
use dvc_core::dataio::{self, Checkpoint, SynthSpec};
use dvc_core::metrics::{self, tokenize};
use dvc_core::tep::TepConfig;
use dvc_core::trainer;
use dvc_core::Error;
use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn segment((t_start, t_end): (f64, f64)) -> PyResult<TemporalSegment> {
    TemporalSegment::new(t_start, t_end).map_err(py_err)
}

fn segment_map(m: BTreeMap<String, Vec<(f64, f64)>>) -> PyResult<BTreeMap<String, Vec<TemporalSegment>>> {
    m.into_iter()
        .map(|(k, v)| Ok((k, v.into_iter().map(segment).collect::<PyResult<Vec<_>>>()?)))
        .collect()
}

/// Temporal IoU of two `(start, end)` segments.
#[pyfunction]
fn tiou(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    Ok(anchors::tiou(&segment(a)?, &segment(b)?))
}

/// `(center, width)` of every default box on a feature map of `length` cells.
#[pyfunction]
#[pyo3(signature = (length, ratios = vec![1.0, 1.25, 1.5]))]
fn anchor_grid(length: usize, ratios: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let grid = anchors::build_anchor_grid(length, &ratios, 0).map_err(py_err)?;
    Ok(grid.iter().map(|a| (a.center, a.width)).collect())
}

fn anchor(center: f64, width: f64) -> Anchor {
    Anchor {
        center,
        width,
        layer: 0,
        cell: 0,
        ratio: 1.0,
    }
}

/// Applies offsets to a default box; returns `(center, width, t_start, t_end)`
/// with the segment clamped to `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (center, width, dc, dw, alpha1 = 0.1, alpha2 = 0.1))]
fn decode_offsets(center: f64, width: f64, dc: f64, dw: f64, alpha1: f64, alpha2: f64) -> (f64, f64, f64, f64) {
    let d = anchors::decode(&anchor(center, width), dc, dw, alpha1, alpha2);
    (d.center, d.width, d.segment.t_start, d.segment.t_end)
}

/// Offsets that move the default box `(center, width)` onto `(target_center, target_width)`.
#[pyfunction]
#[pyo3(signature = (center, width, target_center, target_width, alpha1 = 0.1, alpha2 = 0.1))]
fn encode_offsets(center: f64, width: f64, target_center: f64, target_width: f64, alpha1: f64, alpha2: f64) -> (f64, f64) {
    anchors::encode_offsets(&anchor(center, width), target_center, target_width, alpha1, alpha2)
}

/// Number of proposals of a network with `anchor_layers` layers over `input_len` clips.
#[pyfunction]
#[pyo3(signature = (input_len, anchor_layers))]
fn proposal_count(input_len: usize, anchor_layers: usize) -> PyResult<usize> {
    let cfg = TepConfig {
        input_len,
        anchor_layers,
        ..TepConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg.num_proposals())
}

#[pyfunction]
#[pyo3(name = "tokenize")]
fn py_tokenize(sentence: &str) -> Vec<String> {
    tokenize(sentence)
}

fn tokens_of(refs: &[String]) -> Vec<Vec<String>> {
    refs.iter().map(|r| tokenize(r)).collect()
}

#[pyfunction]
#[pyo3(signature = (candidate, references, n = 4))]
fn bleu(candidate: &str, references: Vec<String>, n: usize) -> PyResult<f64> {
    metrics::bleu(&tokenize(candidate), &tokens_of(&references), n).map_err(py_err)
}

#[pyfunction]
fn meteor_lite(candidate: &str, references: Vec<String>) -> PyResult<f64> {
    metrics::meteor_lite(&tokenize(candidate), &tokens_of(&references)).map_err(py_err)
}

/// Mean CIDEr-D of `candidates[i]` against `references[i]`; document
/// frequencies come from `references`.
#[pyfunction]
fn cider_d(candidates: Vec<String>, references: Vec<Vec<String>>) -> PyResult<f64> {
    if candidates.len() != references.len() {
        return Err(PyValueError::new_err("one reference list per candidate is required"));
    }
    let c: Vec<Vec<String>> = candidates.iter().map(|s| tokenize(s)).collect();
    let r: Vec<Vec<Vec<String>>> = references.iter().map(|x| tokens_of(x)).collect();
    Ok(metrics::cider_d(&c, &r))
}

/// AR-AN curve of ranked `{video: [(start, end), ...]}` proposals; returns
/// `([(an, ar), ...], auc)`.
#[pyfunction]
#[pyo3(signature = (predicted, ground_truth, an_min = 1, an_max = 100))]
fn ar_an_curve(
    predicted: BTreeMap<String, Vec<(f64, f64)>>,
    ground_truth: BTreeMap<String, Vec<(f64, f64)>>,
    an_min: usize,
    an_max: usize,
) -> PyResult<(Vec<(usize, f64)>, f64)> {
    let grid: Vec<usize> = (an_min..=an_max).collect();
    let curve = metrics::ar_an_curve(&segment_map(predicted)?, &segment_map(ground_truth)?, &grid).map_err(py_err)?;
    Ok((curve.points, curve.auc))
}

/// Writes a seeded synthetic corpus to `out_dir`; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 7, num_videos = 20, num_clips = 128, feature_dim = 32, sigma = 0.3))]
fn generate_synthetic(
    out_dir: PathBuf,
    seed: u64,
    num_videos: usize,
    num_clips: usize,
    feature_dim: usize,
    sigma: f64,
) -> PyResult<PathBuf> {
    let spec = SynthSpec {
        num_videos,
        num_clips,
        feature_dim,
        sigma,
        seed,
        ..SynthSpec::default()
    };
    let videos = dataio::generate(&spec).map_err(py_err)?;
    dataio::write_corpus(&videos, &out_dir).map_err(py_err)?;
    Ok(out_dir.join("manifest.json"))
}

/// A loaded corpus: manifest, clip features and vocabulary.
#[pyclass(frozen)]
struct Dataset {
    inner: dataio::Dataset,
}

impl Dataset {
    fn video(&self, id: &str) -> PyResult<&dataio::Video> {
        self.inner
            .videos
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| PyKeyError::new_err(format!("no video `{id}`")))
    }
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(manifest: PathBuf) -> PyResult<Self> {
        Ok(Dataset {
            inner: dataio::load_dataset(&manifest).map_err(py_err)?,
        })
    }

    #[getter]
    fn video_ids(&self) -> Vec<String> {
        self.inner.videos.iter().map(|v| v.id.clone()).collect()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab.len()
    }

    #[getter]
    fn num_clips(&self) -> usize {
        self.inner.num_clips
    }

    /// `[(start, end, sentence), ...]` of one video, in normalized time.
    fn annotations(&self, video_id: &str) -> PyResult<Vec<(f64, f64, String)>> {
        Ok(self
            .video(video_id)?
            .annotations
            .iter()
            .map(|a| (a.t_start, a.t_end, a.sentence.clone()))
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.videos.len()
    }
}

/// Proposal network and captioner with shared parameters.
#[pyclass(frozen)]
struct Model {
    inner: trainer::Model,
}

#[pymethods]
impl Model {
    /// Loads a checkpoint written by `dvc pretrain-sg` or `dvc train`.
    #[staticmethod]
    fn load(checkpoint: PathBuf) -> PyResult<Self> {
        let ckpt = Checkpoint::load(&checkpoint).map_err(py_err)?;
        let cfg = trainer::Model::stored_config(&ckpt).map_err(py_err)?;
        Ok(Model {
            inner: trainer::Model::from_checkpoint(&ckpt, &cfg).map_err(py_err)?,
        })
    }

    /// Untrained model sized for `dataset`.
    #[staticmethod]
    #[pyo3(signature = (dataset, seed = 7, anchor_layers = 5))]
    fn random(dataset: &Dataset, seed: u64, anchor_layers: usize) -> PyResult<Self> {
        let d = &dataset.inner;
        let tep = TepConfig {
            input_len: d.num_clips,
            input_dim: d.feature_dim,
            anchor_layers,
            ..TepConfig::default()
        };
        let sg = CaptionerConfig {
            attr_dim: d.attr_dim,
            ..CaptionerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Model {
            inner: trainer::Model::new(tep, sg, d.vocab.clone(), &mut rng).map_err(py_err)?,
        })
    }

    #[getter]
    fn num_proposals(&self) -> usize {
        self.inner.anchors().len()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.params.num_values()
    }

    /// Ranked `[(start, end, confidence), ...]` for one video.
    #[pyo3(signature = (dataset, video_id, top_k = 100))]
    fn propose(&self, dataset: &Dataset, video_id: &str, top_k: usize) -> PyResult<Vec<(f64, f64, f64)>> {
        let records = trainer::propose(&self.inner, dataset.video(video_id)?, top_k).map_err(py_err)?;
        Ok(records.iter().map(|r| (r.t_start, r.t_end, r.confidence)).collect())
    }

    /// Ranked `[(start, end, sentence, confidence), ...]` for one video.
    #[pyo3(signature = (dataset, video_id, top_k = 10))]
    fn caption(&self, dataset: &Dataset, video_id: &str, top_k: usize) -> PyResult<Vec<(f64, f64, String, f64)>> {
        let records = trainer::caption_video(&self.inner, dataset.video(video_id)?, top_k).map_err(py_err)?;
        Ok(records
            .into_iter()
            .map(|r| (r.t_start, r.t_end, r.sentence.unwrap_or_default(), r.confidence))
            .collect())
    }

    /// AR-AN AUC of this model's proposals on `dataset`.
    #[pyo3(signature = (dataset, an_min = 1, an_max = 100))]
    fn proposal_auc(&self, dataset: &Dataset, an_min: usize, an_max: usize) -> PyResult<f64> {
        let cfg = trainer::EvalConfig {
            an_min,
            an_max,
            metrics: Vec::new(),
            ..Default::default()
        };
        Ok(trainer::evaluate(&self.inner, &dataset.inner, &cfg).map_err(py_err)?.curve.auc)
    }
}

#[pymodule]
fn dvc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tiou, m)?)?;
    m.add_function(wrap_pyfunction!(anchor_grid, m)?)?;
    m.add_function(wrap_pyfunction!(decode_offsets, m)?)?;
    m.add_function(wrap_pyfunction!(encode_offsets, m)?)?;
    m.add_function(wrap_pyfunction!(proposal_count, m)?)?;
    m.add_function(wrap_pyfunction!(py_tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(meteor_lite, m)?)?;
    m.add_function(wrap_pyfunction!(cider_d, m)?)?;
    m.add_function(wrap_pyfunction!(ar_an_curve, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    Ok(())
}

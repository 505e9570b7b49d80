//! Python bindings for tben-core.
//!
//! Vectors cross the boundary as lists of floats; tensors as `Tensor`
//! objects carrying flat row-major data plus an axis string like `"THWC"`.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use tben_core::classifier::{self as clf, HeadMode, Hierarchy, Label, TrainConfig};
use tben_core::error::Error;
use tben_core::pooling::{PipelineKind, PoolingPipeline, ProjectorConfig};
use tben_core::rm::{Normalization, RmProjector};
use tben_core::tensor::{Axis, FeatureSequence};
use tben_core::{fusion, metrics, synth, tbnf, tensor};

create_exception!(tben, TbenError, PyValueError, "Raised for invalid data, shapes, labels or configuration.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => TbenError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for tben_core::error::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn parse_axes(s: &str) -> PyResult<Vec<Axis>> {
    s.chars()
        .map(|ch| match ch.to_ascii_uppercase() {
            'T' => Ok(Axis::T),
            'H' => Ok(Axis::H),
            'W' => Ok(Axis::W),
            'C' => Ok(Axis::C),
            _ => Err(TbenError::new_err(format!("unknown axis {ch:?} in {s:?}"))),
        })
        .collect()
}

fn parse_norm(s: &str) -> PyResult<Normalization> {
    s.parse().py()
}

/// An immutable tensor over named axes (a subsequence of T, H, W, C).
#[pyclass(frozen, skip_from_py_object, module = "tben")]
#[derive(Clone)]
struct Tensor(tensor::Tensor);

#[pymethods]
impl Tensor {
    #[new]
    fn new(dims: Vec<usize>, axes: &str, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self(tensor::Tensor::new(dims, parse_axes(axes)?, data).py()?))
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.0.dims().to_vec()
    }

    #[getter]
    fn axes(&self) -> String {
        self.0.axes().iter().map(|a| a.to_string()).collect()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn numel(&self) -> usize {
        self.0.numel()
    }

    /// Mean over the named axes, e.g. `t.reduce_mean("HW")`.
    fn reduce_mean(&self, axes: &str) -> PyResult<Self> {
        Ok(Self(self.0.reduce_mean(&parse_axes(axes)?).py()?))
    }

    fn __len__(&self) -> usize {
        self.0.dims()[0]
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Tensor(dims={:?}, axes={:?})", self.0.dims(), self.axes())
    }
}

#[pyfunction]
fn read_tensor(path: std::path::PathBuf) -> PyResult<Tensor> {
    Ok(Tensor(tbnf::read_tensor(path).py()?))
}

#[pyfunction]
fn write_tensor(tensor: &Tensor, path: std::path::PathBuf) -> PyResult<()> {
    tbnf::write_tensor(&tensor.0, path).py()
}

#[pyfunction]
fn encode_tbnf<'py>(py: Python<'py>, tensor: &Tensor) -> PyResult<Bound<'py, PyBytes>> {
    Ok(PyBytes::new(py, &tbnf::encode(&tensor.0).py()?))
}

#[pyfunction]
fn decode_tbnf(data: &[u8]) -> PyResult<Tensor> {
    Ok(Tensor(tbnf::decode(data).py()?))
}

/// Random Maclaurin compact bilinear projector.
#[pyclass(frozen, module = "tben")]
struct Projector(RmProjector);

#[pymethods]
impl Projector {
    #[new]
    #[pyo3(signature = (seed, input_dim, output_dim, norm = "ssqrt"))]
    fn new(seed: u64, input_dim: usize, output_dim: usize, norm: &str) -> PyResult<Self> {
        Ok(Self(RmProjector::new(seed, input_dim, output_dim, parse_norm(norm)?).py()?))
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    #[getter]
    fn norm(&self) -> String {
        self.0.normalization().to_string()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.project(&x).py()
    }

    /// Sum of the projections of each row.
    fn project_sum(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        self.0.project_sum(&flat).py()
    }
}

/// One of the five pooling pipelines: `stap`, `sap+tcbp`, `scbp+tap`,
/// `scbp+tcbp`, `stcbp`.
#[pyclass(frozen, module = "tben")]
struct Pipeline(PoolingPipeline);

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (kind, channels, dim = 4096, seed = 0, norm = "ssqrt"))]
    fn new(kind: &str, channels: usize, dim: usize, seed: u64, norm: &str) -> PyResult<Self> {
        let kind: PipelineKind = kind.parse().py()?;
        let cfg = ProjectorConfig {
            dim,
            seed,
            norm: parse_norm(norm)?,
        };
        Ok(Self(PoolingPipeline::build(kind, channels, cfg).py()?))
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().name()
    }

    /// Encodes a `(T,H,W,C)` tensor (or `(T,C)` for `sap+tcbp`).
    fn run(&self, video: &Tensor) -> PyResult<Vec<f64>> {
        let seq = FeatureSequence::from_tensor(video.0.clone()).py()?;
        self.0.run(&seq).py()
    }
}

/// A trained linear head.
#[pyclass(frozen, module = "tben")]
struct Head {
    head: clf::LinearHead,
    losses: Vec<f64>,
}

#[pymethods]
impl Head {
    /// Logits (flat) or log joint probabilities over children (hierarchical).
    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.head.scores(&x).py()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        Ok(metrics::argmax(&self.head.scores(&x).py()?))
    }

    #[getter]
    fn epoch_losses(&self) -> Vec<f64> {
        self.losses.clone()
    }
}

/// Trains a flat head, or a hierarchical one when `parent_of` (parent id of
/// every child class) is given. `labels` are flat or child class ids.
#[pyfunction]
#[pyo3(signature = (
    features, labels, num_classes = None, parent_of = None,
    epochs = 20, learning_rate = 0.01, momentum = 0.9, batch_size = 32, seed = 0,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: Option<usize>,
    parent_of: Option<Vec<usize>>,
    epochs: usize,
    learning_rate: f64,
    momentum: f64,
    batch_size: usize,
    seed: u64,
) -> PyResult<Head> {
    if features.len() != labels.len() {
        return Err(TbenError::new_err(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let cfg = TrainConfig {
        learning_rate,
        momentum,
        epochs,
        batch_size,
        seed,
        ..TrainConfig::default()
    };
    let (mode, data): (HeadMode, Vec<(Vec<f64>, Label)>) = match parent_of {
        Some(parent_of) => {
            let hierarchy = Hierarchy::new(parent_of).py()?;
            let data = features
                .into_iter()
                .zip(labels)
                .map(|(x, child)| {
                    let parent = hierarchy
                        .parent_of(child)
                        .ok_or_else(|| TbenError::new_err(format!("child {child} has no parent")))?;
                    Ok((x, Label::Hier { parent, child }))
                })
                .collect::<PyResult<_>>()?;
            (HeadMode::Hier { hierarchy }, data)
        }
        None => {
            let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            let data = features.into_iter().zip(labels).map(|(x, y)| (x, Label::Flat(y))).collect();
            (HeadMode::Flat { num_classes: k }, data)
        }
    };
    let outcome = clf::train(&data, &cfg, mode).py()?;
    Ok(Head {
        head: outcome.head,
        losses: outcome.epoch_losses,
    })
}

#[pyfunction]
fn hit_at_k(scores: Vec<f64>, label: usize, k: usize) -> PyResult<bool> {
    metrics::hit_at_k(&scores, label, k).py()
}

/// Hit@k percentages (2 decimals) for `[(scores, label), ...]`.
#[pyfunction]
#[pyo3(signature = (predictions, ks = vec![1, 5]))]
fn evaluate(predictions: Vec<(Vec<f64>, usize)>, ks: Vec<usize>) -> PyResult<BTreeMap<usize, f64>> {
    metrics::evaluate(&predictions, &ks).py()
}

#[pyfunction]
fn split_mean(values: Vec<f64>) -> PyResult<f64> {
    metrics::split_mean(&values).py()
}

#[pyfunction]
#[pyo3(signature = (activations, weights = None))]
fn late_fuse(activations: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    fusion::late_fuse(&activations, weights.as_deref()).py()
}

/// `[(video, class), ...]` where classes differ only in channel covariance.
#[pyfunction]
#[pyo3(signature = (
    num_classes = 4, videos_per_class = 50, t = 20, c = 32, seed = 0,
    covariance_strength = 1.5, mean_offset = 0.0,
))]
fn gen_covariance_classes(
    num_classes: usize,
    videos_per_class: usize,
    t: usize,
    c: usize,
    seed: u64,
    covariance_strength: f64,
    mean_offset: f64,
) -> PyResult<Vec<(Tensor, usize)>> {
    let spec = synth::SynthSpec {
        num_classes,
        videos_per_class,
        t,
        c,
        seed,
        covariance_strength,
        mean_offset,
        ..synth::SynthSpec::default()
    };
    let videos = synth::gen_covariance_classes(&spec).py()?;
    Ok(videos
        .into_iter()
        .map(|(s, y)| (Tensor(s.into_tensor()), y))
        .collect())
}

/// `([(video, parent, child), ...], parent_of)`.
#[pyfunction]
#[pyo3(signature = (parents = 8, children_per_parent = 4, videos_per_child = 20, t = 10, c = 128, seed = 0))]
fn gen_hier_dataset(
    parents: usize,
    children_per_parent: usize,
    videos_per_child: usize,
    t: usize,
    c: usize,
    seed: u64,
) -> PyResult<(Vec<(Tensor, usize, usize)>, Vec<usize>)> {
    let spec = synth::HierSynthSpec {
        parents,
        children_per_parent,
        videos_per_child,
        t,
        c,
        seed,
        ..synth::HierSynthSpec::default()
    };
    let ds = synth::gen_hier_dataset(&spec).py()?;
    let samples = ds
        .samples
        .into_iter()
        .map(|(s, label)| match label {
            Label::Hier { parent, child } => (Tensor(s.into_tensor()), parent, child),
            Label::Flat(c) => (Tensor(s.into_tensor()), 0, c),
        })
        .collect();
    Ok((samples, ds.hierarchy.parents().to_vec()))
}

/// One prototype-plus-noise vector per label.
#[pyfunction]
#[pyo3(signature = (labels, num_classes, snr, dim, seed = 0))]
fn gen_second_modality(labels: Vec<usize>, num_classes: usize, snr: f64, dim: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let vectors = synth::gen_second_modality(&labels, num_classes, snr, dim, seed).py()?;
    Ok(vectors.into_iter().map(|v| v.values().to_vec()).collect())
}

#[pymodule]
fn tben(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TbenError", m.py().get_type::<TbenError>())?;
    m.add_class::<Tensor>()?;
    m.add_class::<Projector>()?;
    m.add_class::<Pipeline>()?;
    m.add_class::<Head>()?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(encode_tbnf, m)?)?;
    m.add_function(wrap_pyfunction!(decode_tbnf, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(hit_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(split_mean, m)?)?;
    m.add_function(wrap_pyfunction!(late_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(gen_covariance_classes, m)?)?;
    m.add_function(wrap_pyfunction!(gen_hier_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(gen_second_modality, m)?)?;
    Ok(())
}

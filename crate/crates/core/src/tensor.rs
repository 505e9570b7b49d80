//! Dense row-major tensors with semantic axis labels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic axis label. The discriminant is the on-disk code and also the
/// canonical ordering: axes of a tensor always appear as a subsequence of
/// `(T, H, W, C)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    T = 0,
    H = 1,
    W = 2,
    C = 3,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::T, Axis::H, Axis::W, Axis::C];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Axis> {
        Axis::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::T => "T",
            Axis::H => "H",
            Axis::W => "W",
            Axis::C => "C",
        };
        f.write_str(s)
    }
}

/// Immutable tensor of rank 1 to 4.
///
/// Invariants enforced at construction: `data.len() == dims.iter().product()`,
/// every extent is positive, axes are distinct and in canonical order, and
/// every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    axes: Vec<Axis>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, axes: Vec<Axis>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::Dimension(format!(
                "rank must be between 1 and 4, got {}",
                dims.len()
            )));
        }
        if axes.len() != dims.len() {
            return Err(Error::Axis(format!(
                "{} axis labels for a rank-{} tensor",
                axes.len(),
                dims.len()
            )));
        }
        if axes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Axis(format!(
                "axes {} are duplicated or out of canonical (T,H,W,C) order",
                fmt_axes(&axes)
            )));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Dimension(format!("extent of axis {} is zero", axes[i])));
        }
        let numel: usize = dims.iter().product();
        if data.len() != numel {
            return Err(Error::Dimension(format!(
                "dims {:?} need {} values, got {}",
                dims,
                numel,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {} at flat index {i}", data[i])));
        }
        Ok(Self { dims, axes, data })
    }

    /// Rank-1 tensor over the channel axis.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], vec![Axis::C], data)
    }

    pub fn filled(dims: Vec<usize>, axes: Vec<Axis>, value: f64) -> Result<Self> {
        let numel = dims.iter().product();
        Self::new(dims, axes, vec![value; numel])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn position(&self, axis: Axis) -> Option<usize> {
        self.axes.iter().position(|&a| a == axis)
    }

    pub fn extent(&self, axis: Axis) -> Option<usize> {
        self.position(axis).map(|i| self.dims[i])
    }

    /// Mean over the given axes. Output keeps the remaining axes in order.
    pub fn reduce_mean(&self, axes_to_reduce: &[Axis]) -> Result<Tensor> {
        let mut reduce = [false; 4];
        for &axis in axes_to_reduce {
            let pos = self.position(axis).ok_or_else(|| {
                Error::Axis(format!(
                    "cannot reduce axis {axis}: tensor has axes {}",
                    fmt_axes(&self.axes)
                ))
            })?;
            reduce[pos] = true;
        }
        if !reduce[..self.rank()].contains(&true) {
            return Ok(self.clone());
        }
        if reduce[..self.rank()].iter().all(|&r| r) {
            return Err(Error::Axis("reducing every axis leaves a rank-0 tensor".into()));
        }

        let rank = self.rank();
        let mut out_dims = Vec::new();
        let mut out_axes = Vec::new();
        for i in 0..rank {
            if !reduce[i] {
                out_dims.push(self.dims[i]);
                out_axes.push(self.axes[i]);
            }
        }
        let out_len: usize = out_dims.iter().product();
        let count: usize = (0..rank).filter(|&i| reduce[i]).map(|i| self.dims[i]).product();

        // Output stride for each input axis (0 for reduced axes).
        let mut out_stride = [0usize; 4];
        let mut acc = 1;
        for i in (0..rank).rev() {
            if !reduce[i] {
                out_stride[i] = acc;
                acc *= self.dims[i];
            }
        }

        let mut sums = vec![0.0; out_len];
        let mut index = [0usize; 4];
        for &v in &self.data {
            let o: usize = (0..rank).map(|i| index[i] * out_stride[i]).sum();
            sums[o] += v;
            for i in (0..rank).rev() {
                index[i] += 1;
                if index[i] < self.dims[i] {
                    break;
                }
                index[i] = 0;
            }
        }
        let scale = 1.0 / count as f64;
        sums.iter_mut().for_each(|s| *s *= scale);
        Tensor::new(out_dims, out_axes, sums)
    }
}

pub(crate) fn fmt_axes(axes: &[Axis]) -> String {
    let labels: Vec<String> = axes.iter().map(|a| a.to_string()).collect();
    format!("({})", labels.join(","))
}

/// A frame-level feature stream: a tensor with leading `T` axis followed by
/// either `(H, W, C)` or `(C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    tensor: Tensor,
    frame_rate: f64,
}

impl FeatureSequence {
    pub fn new(tensor: Tensor, frame_rate: f64) -> Result<Self> {
        let axes = tensor.axes();
        if axes != [Axis::T, Axis::C] && axes != [Axis::T, Axis::H, Axis::W, Axis::C] {
            return Err(Error::Axis(format!(
                "feature sequence needs axes (T,C) or (T,H,W,C), got {}",
                fmt_axes(axes)
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Config(format!("frame rate must be positive, got {frame_rate}")));
        }
        Ok(Self { tensor, frame_rate })
    }

    /// Sequence at the default rate of one frame per second.
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        Self::new(tensor, 1.0)
    }

    /// Builds a `(T, C)` sequence from per-frame vectors.
    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Data("a feature sequence needs at least one frame".into()));
        };
        let c = first.len();
        if let Some(bad) = frames.iter().find(|f| f.len() != c) {
            return Err(Error::Dimension(format!(
                "frames have mixed lengths {c} and {}",
                bad.len()
            )));
        }
        let data = frames.concat();
        Self::from_tensor(Tensor::new(vec![frames.len(), c], vec![Axis::T, Axis::C], data)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn num_frames(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn channels(&self) -> usize {
        *self.tensor.dims().last().unwrap()
    }

    pub fn is_spatial(&self) -> bool {
        self.tensor.rank() == 4
    }

    /// `(h, w)`, or `(1, 1)` for a `(T, C)` sequence.
    pub fn spatial_extent(&self) -> (usize, usize) {
        if self.is_spatial() {
            (self.tensor.dims()[1], self.tensor.dims()[2])
        } else {
            (1, 1)
        }
    }

    /// Local descriptors per frame (`h * w`).
    pub fn descriptors_per_frame(&self) -> usize {
        let (h, w) = self.spatial_extent();
        h * w
    }

    /// All values of frame `t`, laid out as `h * w` descriptors of `c` channels.
    pub fn frame(&self, t: usize) -> &[f64] {
        let len = self.descriptors_per_frame() * self.channels();
        &self.tensor.data()[t * len..(t + 1) * len]
    }

    /// Every local descriptor in (t, h, w) row-major order.
    pub fn descriptors(&self) -> std::slice::ChunksExact<'_, f64> {
        self.tensor.data().chunks_exact(self.channels())
    }

    /// New sequence holding the frames at `indices`, in that order.
    pub fn select_frames(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("cannot select zero frames".into()));
        }
        let t = self.num_frames();
        let mut data = Vec::with_capacity(indices.len() * self.frame(0).len());
        for &i in indices {
            if i >= t {
                return Err(Error::Dimension(format!("frame index {i} out of range for t={t}")));
            }
            data.extend_from_slice(self.frame(i));
        }
        let mut dims = self.tensor.dims().to_vec();
        dims[0] = indices.len();
        Self::new(
            Tensor::new(dims, self.tensor.axes().to_vec(), data)?,
            self.frame_rate,
        )
    }

    /// Frames of `self` followed by frames of `other`.
    pub fn concat(&self, other: &FeatureSequence) -> Result<Self> {
        if self.tensor.dims()[1..] != other.tensor.dims()[1..]
            || self.tensor.axes() != other.tensor.axes()
        {
            return Err(Error::Dimension(
                "sequences differ in per-frame shape and cannot be concatenated".into(),
            ));
        }
        let mut data = self.tensor.data().to_vec();
        data.extend_from_slice(other.tensor.data());
        let mut dims = self.tensor.dims().to_vec();
        dims[0] += other.num_frames();
        Self::new(
            Tensor::new(dims, self.tensor.axes().to_vec(), data)?,
            self.frame_rate,
        )
    }
}

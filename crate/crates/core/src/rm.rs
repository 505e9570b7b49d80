//! Random Maclaurin compact bilinear projection.
//!
//! A descriptor `x` of length `c` is mapped to `norm((W1 x) ∘ (W2 x))` of
//! length `d`, where `W1` and `W2` are fixed `d × c` Rademacher sign
//! matrices. The inner product of two such features, divided by `d`, is an
//! unbiased estimate of `<x, y>^2`. That `1/d` factor is not applied here.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Axis as NdAxis};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Rows projected per GEMM call; bounds scratch memory for long videos.
const PROJECT_CHUNK: usize = 256;

/// Elementwise transfer applied to each projected descriptor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    Identity,
    SignedSqrt,
    Sigmoid,
    /// Division by a positive constant.
    Scale(f64),
}

impl Normalization {
    pub fn validate(self) -> Result<Self> {
        match self {
            Normalization::Scale(k) if !(k.is_finite() && k > 0.0) => Err(Error::Config(format!(
                "scale factor must be positive and finite, got {k}"
            ))),
            other => Ok(other),
        }
    }

    #[inline]
    fn apply_scalar(self, v: f64) -> f64 {
        match self {
            Normalization::Identity => v,
            Normalization::SignedSqrt => v.signum() * v.abs().sqrt(),
            Normalization::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Normalization::Scale(k) => v / k,
        }
    }

    pub(crate) fn apply_in_place(self, values: &mut [f64]) {
        if self != Normalization::Identity {
            for v in values.iter_mut() {
                // signum(0.0) is 1.0 but sqrt(0) keeps the result at zero.
                *v = self.apply_scalar(*v);
            }
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::Identity => f.write_str("identity"),
            Normalization::SignedSqrt => f.write_str("ssqrt"),
            Normalization::Sigmoid => f.write_str("sigmoid"),
            Normalization::Scale(k) => write!(f, "scale:{k}"),
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Normalization::Identity),
            "ssqrt" => Ok(Normalization::SignedSqrt),
            "sigmoid" => Ok(Normalization::Sigmoid),
            _ => {
                let k = s
                    .strip_prefix("scale:")
                    .and_then(|k| k.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "unknown normalization {s:?}; expected identity, ssqrt, sigmoid or scale:<k>"
                        ))
                    })?;
                Normalization::Scale(k).validate()
            }
        }
    }
}

pub fn apply_normalization(values: &[f64], norm: Normalization) -> Result<Vec<f64>> {
    let norm = norm.validate()?;
    check_finite(values)?;
    let mut out = values.to_vec();
    norm.apply_in_place(&mut out);
    Ok(out)
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Data(format!("non-finite input {} at index {i}", values[i]))),
        None => Ok(()),
    }
}

/// Fixed pair of Rademacher matrices plus the output normalization.
#[derive(Clone, Debug)]
pub struct RmProjector {
    seed: u64,
    input_dim: usize,
    output_dim: usize,
    /// `W1` stacked on top of `W2`, shape `(2d, c)`.
    signs: Array2<f64>,
    norm: Normalization,
}

impl RmProjector {
    /// Draws `W1` then `W2`, each row-major, one SplitMix64 word per entry.
    pub fn new(seed: u64, input_dim: usize, output_dim: usize, norm: Normalization) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Dimension(format!(
                "projector dimensions must be positive, got c={input_dim}, d={output_dim}"
            )));
        }
        let norm = norm.validate()?;
        if output_dim < input_dim {
            log::warn!("projector output dim d={output_dim} compresses input dim c={input_dim}");
        }
        let mut rng = SplitMix64::new(seed);
        let signs = Array2::from_shape_simple_fn((2 * output_dim, input_dim), || rng.next_sign());
        Ok(Self {
            seed,
            input_dim,
            output_dim,
            signs,
            norm,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    /// False when `d <= c`, a configuration that compresses rather than expands.
    pub fn is_expanding(&self) -> bool {
        self.output_dim > self.input_dim
    }

    pub fn w1(&self) -> ArrayView2<'_, f64> {
        self.signs.slice(s![..self.output_dim, ..])
    }

    pub fn w2(&self) -> ArrayView2<'_, f64> {
        self.signs.slice(s![self.output_dim.., ..])
    }

    /// Same projector with a different normalization.
    pub fn with_normalization(&self, norm: Normalization) -> Result<Self> {
        Ok(Self {
            norm: norm.validate()?,
            ..self.clone()
        })
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        check_finite(x)?;
        Ok(self.hadamard_block(x, 1).into_raw_vec_and_offset().0)
    }

    /// Projects every row of `descriptors` (row-major, `n × c`) and returns
    /// the `n × d` result.
    pub fn project_rows(&self, descriptors: &[f64]) -> Result<Array2<f64>> {
        let n = self.rows_of(descriptors)?;
        let mut out = Array2::zeros((n, self.output_dim));
        for (start, chunk) in descriptors
            .chunks(PROJECT_CHUNK * self.input_dim)
            .enumerate()
            .map(|(i, c)| (i * PROJECT_CHUNK, c))
        {
            let rows = chunk.len() / self.input_dim;
            let products = self.hadamard_block(chunk, rows);
            out.slice_mut(s![start..start + rows, ..]).assign(&products);
        }
        Ok(out)
    }

    /// Sum of the projections of every row of `descriptors`.
    pub fn project_sum(&self, descriptors: &[f64]) -> Result<Vec<f64>> {
        self.rows_of(descriptors)?;
        let mut out = vec![0.0; self.output_dim];
        self.accumulate(descriptors, &mut out);
        Ok(out)
    }

    fn rows_of(&self, descriptors: &[f64]) -> Result<usize> {
        if !descriptors.len().is_multiple_of(self.input_dim) {
            return Err(Error::Dimension(format!(
                "{} values is not a whole number of length-{} descriptors",
                descriptors.len(),
                self.input_dim
            )));
        }
        check_finite(descriptors)?;
        Ok(descriptors.len() / self.input_dim)
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return Err(Error::Dimension(format!(
                "projector expects length {}, got {len}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Adds the normalized projection of every row into `out`. Inputs are
    /// assumed validated.
    pub(crate) fn accumulate(&self, descriptors: &[f64], out: &mut [f64]) {
        let rows = descriptors.len() / self.input_dim;
        self.accumulate_groups(descriptors, rows.max(1), out);
    }

    /// Like [`Self::accumulate`], but consecutive runs of `group_rows` rows
    /// are summed into consecutive length-`d` slots of `out`. Projection
    /// still runs in large blocks, so small groups stay GEMM-efficient.
    pub(crate) fn accumulate_groups(&self, descriptors: &[f64], group_rows: usize, out: &mut [f64]) {
        let d = self.output_dim;
        for (i, chunk) in descriptors.chunks(PROJECT_CHUNK * self.input_dim).enumerate() {
            let rows = chunk.len() / self.input_dim;
            let x = ArrayView2::from_shape((rows, self.input_dim), chunk).unwrap();
            let both = x.dot(&self.signs.t());
            for (r, row) in both.rows().into_iter().enumerate() {
                let (a, b) = row.as_slice().unwrap().split_at(d);
                let g = (i * PROJECT_CHUNK + r) / group_rows;
                let slot = &mut out[g * d..(g + 1) * d];
                add_normalized(self.norm, slot, a, b);
            }
        }
    }

    /// Normalized `(W1 x) ∘ (W2 x)` for each row of a contiguous block.
    fn hadamard_block(&self, block: &[f64], rows: usize) -> Array2<f64> {
        let x = ArrayView2::from_shape((rows, self.input_dim), block).unwrap();
        let both = x.dot(&self.signs.t());
        let d = self.output_dim;
        let mut products = both.slice(s![.., ..d]).to_owned();
        products *= &both.slice(s![.., d..]);
        for mut row in products.axis_iter_mut(NdAxis(0)) {
            self.norm.apply_in_place(row.as_slice_mut().unwrap());
        }
        products
    }
}

/// `out += norm(a ∘ b)`, dispatching on `norm` once per row.
fn add_normalized(norm: Normalization, out: &mut [f64], a: &[f64], b: &[f64]) {
    fn run(out: &mut [f64], a: &[f64], b: &[f64], f: impl Fn(f64) -> f64) {
        for ((o, &u), &v) in out.iter_mut().zip(a).zip(b) {
            *o += f(u * v);
        }
    }
    match norm {
        Normalization::Identity => run(out, a, b, |v| v),
        Normalization::SignedSqrt => run(out, a, b, |v| v.signum() * v.abs().sqrt()),
        _ => run(out, a, b, |v| norm.apply_scalar(v)),
    }
}

/// Exact second-order pooling `Σ x xᵀ` over descriptors of length `c`.
/// The empty sum is the zero matrix.
pub fn full_bilinear(descriptors: &[Vec<f64>], c: usize) -> Result<Array2<f64>> {
    let mut b = Array2::zeros((c, c));
    for x in descriptors {
        if x.len() != c {
            return Err(Error::Dimension(format!(
                "descriptor of length {} in a set of length-{c} descriptors",
                x.len()
            )));
        }
        check_finite(x)?;
        for i in 0..c {
            for j in 0..c {
                b[[i, j]] += x[i] * x[j];
            }
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Projector with hand-chosen signs for hand-evaluated cases.
    pub(crate) fn manual(w1: &[f64], w2: &[f64], c: usize, norm: Normalization) -> RmProjector {
        let d = w1.len() / c;
        let mut signs = Array2::zeros((2 * d, c));
        for (i, v) in w1.iter().chain(w2).enumerate() {
            signs[[i / c, i % c]] = *v;
        }
        RmProjector {
            seed: 0,
            input_dim: c,
            output_dim: d,
            signs,
            norm,
        }
    }

    #[test]
    fn seed_zero_signs_follow_reference_stream() {
        // Top bits of the first four SplitMix64(0) words: 1, 0, 0, 1.
        let p = RmProjector::new(0, 1, 4, Normalization::Identity).unwrap();
        let w1: Vec<f64> = p.w1().iter().copied().collect();
        assert_eq!(w1, vec![-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let a = RmProjector::new(42, 7, 19, Normalization::SignedSqrt).unwrap();
        let b = RmProjector::new(42, 7, 19, Normalization::SignedSqrt).unwrap();
        assert_eq!(a.signs, b.signs);
        assert!(a.signs.iter().all(|&v| v == 1.0 || v == -1.0));
        let c = RmProjector::new(43, 7, 19, Normalization::SignedSqrt).unwrap();
        assert_ne!(a.signs, c.signs);
    }

    #[test]
    fn compressing_projector_still_builds() {
        let p = RmProjector::new(1, 8, 2, Normalization::Identity).unwrap();
        assert!(!p.is_expanding());
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(
            RmProjector::new(1, 0, 4, Normalization::Identity),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            RmProjector::new(1, 4, 0, Normalization::Identity),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn hand_evaluated_projection() {
        let p = manual(&[1.0, -1.0], &[1.0, 1.0], 2, Normalization::Identity);
        assert_eq!(p.project(&[1.0, 2.0]).unwrap(), vec![-3.0]);
        let p = p.with_normalization(Normalization::SignedSqrt).unwrap();
        assert_eq!(p.project(&[1.0, 2.0]).unwrap(), vec![-(3f64.sqrt())]);
    }

    #[test]
    fn zero_input() {
        for (norm, want) in [
            (Normalization::Identity, 0.0),
            (Normalization::SignedSqrt, 0.0),
            (Normalization::Sigmoid, 0.5),
        ] {
            let p = RmProjector::new(5, 3, 8, norm).unwrap();
            assert!(p.project(&[0.0; 3]).unwrap().iter().all(|&v| v == want));
        }
    }

    #[test]
    fn project_rejects_bad_input() {
        let p = RmProjector::new(5, 3, 8, Normalization::Identity).unwrap();
        assert!(matches!(p.project(&[1.0, 2.0]), Err(Error::Dimension(_))));
        assert!(matches!(p.project(&[1.0, f64::INFINITY, 0.0]), Err(Error::Data(_))));
    }

    #[test]
    fn normalizations() {
        assert_eq!(
            apply_normalization(&[4.0, -9.0, 0.0], Normalization::SignedSqrt).unwrap(),
            vec![2.0, -3.0, 0.0]
        );
        assert_eq!(apply_normalization(&[0.0], Normalization::Sigmoid).unwrap(), vec![0.5]);
        assert_eq!(
            apply_normalization(&[4.0, -6.0], Normalization::Scale(2.0)).unwrap(),
            vec![2.0, -3.0]
        );
        assert!(apply_normalization(&[1.0], Normalization::Scale(0.0)).is_err());
        assert!(apply_normalization(&[f64::NAN], Normalization::Identity).is_err());
    }

    #[test]
    fn normalization_names_round_trip() {
        for s in ["identity", "ssqrt", "sigmoid", "scale:343"] {
            let n: Normalization = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        assert!("scale:-1".parse::<Normalization>().is_err());
        assert!("l2".parse::<Normalization>().is_err());
    }

    #[test]
    fn batched_matches_single() {
        let p = RmProjector::new(9, 5, 12, Normalization::SignedSqrt).unwrap();
        let mut rng = SplitMix64::new(1);
        let rows: Vec<f64> = (0..5 * 600).map(|_| rng.next_gaussian()).collect();
        let batch = p.project_rows(&rows).unwrap();
        let mut sum = [0.0; 12];
        for (i, x) in rows.chunks(5).enumerate() {
            let single = p.project(x).unwrap();
            for j in 0..12 {
                assert!((batch[[i, j]] - single[j]).abs() < 1e-12);
                sum[j] += single[j];
            }
        }
        let summed = p.project_sum(&rows).unwrap();
        for j in 0..12 {
            assert!((summed[j] - sum[j]).abs() < 1e-9 * (1.0 + sum[j].abs()));
        }
    }

    #[test]
    fn full_bilinear_cases() {
        let b = full_bilinear(&[vec![1.0, 0.0]], 2).unwrap();
        assert_eq!(b.into_raw_vec_and_offset().0, vec![1.0, 0.0, 0.0, 0.0]);
        let basis: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(full_bilinear(&basis, 4).unwrap(), Array2::<f64>::eye(4));
        assert_eq!(full_bilinear(&[], 3).unwrap(), Array2::<f64>::zeros((3, 3)));
        assert!(full_bilinear(&[vec![1.0]], 2).is_err());
    }
}

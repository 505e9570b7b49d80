//! Spatial and temporal aggregation of frame-level features.
//!
//! Five pipelines compose average pooling (AP) and compact bilinear pooling
//! (CBP) over the spatial and temporal axes, spatial stage first:
//!
//! | pipeline    | spatial | temporal |
//! |-------------|---------|----------|
//! | `stap`      | AP      | AP       |
//! | `sap+tcbp`  | AP      | CBP      |
//! | `scbp+tap`  | CBP     | AP       |
//! | `scbp+tcbp` | CBP     | CBP      |
//! | `stcbp`     | joint CBP over every (t, h, w) descriptor |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rm::{Normalization, RmProjector};
use crate::tensor::{fmt_axes, Axis, FeatureSequence, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PipelineKind {
    Stap,
    SapTcbp,
    ScbpTap,
    ScbpTcbp,
    Stcbp,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::Stap,
        PipelineKind::SapTcbp,
        PipelineKind::ScbpTap,
        PipelineKind::ScbpTcbp,
        PipelineKind::Stcbp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::Stap => "stap",
            PipelineKind::SapTcbp => "sap+tcbp",
            PipelineKind::ScbpTap => "scbp+tap",
            PipelineKind::ScbpTcbp => "scbp+tcbp",
            PipelineKind::Stcbp => "stcbp",
        }
    }

    pub fn has_spatial_cbp(self) -> bool {
        matches!(self, PipelineKind::ScbpTap | PipelineKind::ScbpTcbp)
    }

    pub fn has_temporal_cbp(self) -> bool {
        matches!(self, PipelineKind::SapTcbp | PipelineKind::ScbpTcbp)
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown pipeline {s:?}; expected one of stap, sap+tcbp, scbp+tap, scbp+tcbp, stcbp"
                ))
            })
    }
}

/// A pipeline together with the projectors its CBP stages need.
///
/// `stcbp` keeps its single joint projector in the temporal slot.
#[derive(Clone, Debug)]
pub struct PoolingPipeline {
    kind: PipelineKind,
    spatial: Option<RmProjector>,
    temporal: Option<RmProjector>,
}

impl PoolingPipeline {
    pub fn stap() -> Self {
        Self {
            kind: PipelineKind::Stap,
            spatial: None,
            temporal: None,
        }
    }

    pub fn sap_tcbp(temporal: RmProjector) -> Self {
        Self {
            kind: PipelineKind::SapTcbp,
            spatial: None,
            temporal: Some(temporal),
        }
    }

    pub fn scbp_tap(spatial: RmProjector) -> Self {
        Self {
            kind: PipelineKind::ScbpTap,
            spatial: Some(spatial),
            temporal: None,
        }
    }

    pub fn scbp_tcbp(spatial: RmProjector, temporal: RmProjector) -> Result<Self> {
        if temporal.input_dim() != spatial.output_dim() {
            return Err(Error::Dimension(format!(
                "temporal projector consumes length {} but the spatial stage emits {}",
                temporal.input_dim(),
                spatial.output_dim()
            )));
        }
        Ok(Self {
            kind: PipelineKind::ScbpTcbp,
            spatial: Some(spatial),
            temporal: Some(temporal),
        })
    }

    pub fn stcbp(joint: RmProjector) -> Self {
        Self {
            kind: PipelineKind::Stcbp,
            spatial: None,
            temporal: Some(joint),
        }
    }

    pub fn kind(&self) -> PipelineKind {
        self.kind
    }

    pub fn spatial_projector(&self) -> Option<&RmProjector> {
        self.spatial.as_ref()
    }

    pub fn temporal_projector(&self) -> Option<&RmProjector> {
        self.temporal.as_ref()
    }

    /// Length of the encoded vector for input descriptors of length `c`.
    pub fn output_dim(&self, c: usize) -> usize {
        match self.kind {
            PipelineKind::Stap => c,
            PipelineKind::ScbpTap => self.spatial.as_ref().unwrap().output_dim(),
            _ => self.temporal.as_ref().unwrap().output_dim(),
        }
    }

    pub fn run(&self, seq: &FeatureSequence) -> Result<Vec<f64>> {
        run_pipeline(self, seq)
    }
}

/// Projector parameters shared by every CBP stage of a pipeline.
///
/// The spatial (or joint) projector is seeded with `seed`; the temporal
/// projector of `scbp+tcbp` with `seed + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectorConfig {
    pub dim: usize,
    pub seed: u64,
    pub norm: Normalization,
}

impl PoolingPipeline {
    /// Builds a pipeline for descriptors with `channels` values.
    pub fn build(kind: PipelineKind, channels: usize, cfg: ProjectorConfig) -> Result<Self> {
        let first = || RmProjector::new(cfg.seed, channels, cfg.dim, cfg.norm);
        Ok(match kind {
            PipelineKind::Stap => Self::stap(),
            PipelineKind::SapTcbp => Self::sap_tcbp(first()?),
            PipelineKind::ScbpTap => Self::scbp_tap(first()?),
            PipelineKind::ScbpTcbp => Self::scbp_tcbp(
                first()?,
                RmProjector::new(cfg.seed.wrapping_add(1), cfg.dim, cfg.dim, cfg.norm)?,
            )?,
            PipelineKind::Stcbp => Self::stcbp(first()?),
        })
    }
}

fn require_tc(seq: &FeatureSequence, op: &str) -> Result<()> {
    if seq.is_spatial() {
        return Err(Error::Axis(format!(
            "{op} needs a (T,C) sequence, got {}",
            fmt_axes(seq.tensor().axes())
        )));
    }
    Ok(())
}

fn require_thwc(seq: &FeatureSequence, op: &str) -> Result<()> {
    if !seq.is_spatial() {
        return Err(Error::Axis(format!(
            "{op} needs a (T,H,W,C) sequence, got {}",
            fmt_axes(seq.tensor().axes())
        )));
    }
    Ok(())
}

fn require_input(p: &RmProjector, c: usize, op: &str) -> Result<()> {
    if p.input_dim() != c {
        return Err(Error::Dimension(format!(
            "{op}: projector input dim {} does not match {c} channels",
            p.input_dim()
        )));
    }
    Ok(())
}

/// Temporal average pooling of a `(T, C)` sequence.
pub fn tap(seq: &FeatureSequence) -> Result<Vec<f64>> {
    require_tc(seq, "tap")?;
    Ok(seq.tensor().reduce_mean(&[Axis::T])?.into_data())
}

/// Spatial average pooling: `(T, H, W, C)` to `(T, C)`.
pub fn sap(seq: &FeatureSequence) -> Result<FeatureSequence> {
    require_thwc(seq, "sap")?;
    let pooled = seq.tensor().reduce_mean(&[Axis::H, Axis::W])?;
    FeatureSequence::new(pooled, seq.frame_rate())
}

/// Spatial CBP: per frame, the sum of the projections of its `h * w`
/// descriptors. Output is `(T, d)`.
pub fn scbp(seq: &FeatureSequence, p: &RmProjector) -> Result<FeatureSequence> {
    require_thwc(seq, "scbp")?;
    require_input(p, seq.channels(), "scbp")?;
    let t = seq.num_frames();
    let d = p.output_dim();
    let mut data = vec![0.0; t * d];
    p.accumulate_groups(seq.tensor().data(), seq.descriptors_per_frame(), &mut data);
    FeatureSequence::new(
        Tensor::new(vec![t, d], vec![Axis::T, Axis::C], data)?,
        seq.frame_rate(),
    )
}

/// Temporal CBP: the sum over frames of the projection of each frame.
pub fn tcbp(seq: &FeatureSequence, p: &RmProjector) -> Result<Vec<f64>> {
    require_tc(seq, "tcbp")?;
    require_input(p, seq.channels(), "tcbp")?;
    let mut out = vec![0.0; p.output_dim()];
    p.accumulate(seq.tensor().data(), &mut out);
    Ok(out)
}

/// Joint spatio-temporal CBP: one sum over all `t * h * w` descriptors.
pub fn stcbp(seq: &FeatureSequence, p: &RmProjector) -> Result<Vec<f64>> {
    require_thwc(seq, "stcbp")?;
    require_input(p, seq.channels(), "stcbp")?;
    let mut out = vec![0.0; p.output_dim()];
    p.accumulate(seq.tensor().data(), &mut out);
    Ok(out)
}

/// Encodes one video with the given pipeline.
///
/// Every variant takes `(T, H, W, C)`. `sap+tcbp` additionally accepts an
/// already spatially pooled `(T, C)` sequence.
pub fn run_pipeline(pp: &PoolingPipeline, seq: &FeatureSequence) -> Result<Vec<f64>> {
    match pp.kind {
        PipelineKind::Stap => {
            require_thwc(seq, "stap")?;
            Ok(seq
                .tensor()
                .reduce_mean(&[Axis::T, Axis::H, Axis::W])?
                .into_data())
        }
        PipelineKind::SapTcbp => {
            let temporal = pp.temporal.as_ref().expect("sap+tcbp carries a projector");
            if seq.is_spatial() {
                tcbp(&sap(seq)?, temporal)
            } else {
                tcbp(seq, temporal)
            }
        }
        PipelineKind::ScbpTap => {
            let spatial = pp.spatial.as_ref().expect("scbp+tap carries a projector");
            tap(&scbp(seq, spatial)?)
        }
        PipelineKind::ScbpTcbp => {
            let spatial = pp.spatial.as_ref().expect("scbp+tcbp carries a spatial projector");
            let temporal = pp.temporal.as_ref().expect("scbp+tcbp carries a temporal projector");
            tcbp(&scbp(seq, spatial)?, temporal)
        }
        PipelineKind::Stcbp => {
            let joint = pp.temporal.as_ref().expect("stcbp carries a projector");
            stcbp(seq, joint)
        }
    }
}

/// The single frame at index `floor(t / 2)`.
pub fn mid_frame(seq: &FeatureSequence) -> FeatureSequence {
    seq.select_frames(&[seq.num_frames() / 2])
        .expect("a sequence always has at least one frame")
}

/// Fixed-length windows of `window_s` seconds every `stride_s` seconds.
///
/// Full windows are emitted at each stride. If the last full window does
/// not reach the final frame (or no full window fits), one shorter window
/// starting at the next stride position and running to the end is added.
pub fn sliding_windows(
    seq: &FeatureSequence,
    window_s: f64,
    stride_s: f64,
) -> Result<Vec<FeatureSequence>> {
    if !(window_s >= 1.0 && stride_s >= 1.0) || !window_s.is_finite() || !stride_s.is_finite() {
        return Err(Error::Config(format!(
            "window and stride must be at least one second, got {window_s} and {stride_s}"
        )));
    }
    let rate = seq.frame_rate();
    let window = ((window_s * rate).round() as usize).max(1);
    let stride = ((stride_s * rate).round() as usize).max(1);
    let t = seq.num_frames();

    let mut starts = Vec::new();
    let mut start = 0;
    while start + window <= t {
        starts.push((start, start + window));
        start += stride;
    }
    let covered = starts.last().map_or(0, |&(_, end)| end);
    if covered < t && start < t {
        starts.push((start, t));
    }

    starts
        .into_iter()
        .map(|(a, b)| seq.select_frames(&(a..b).collect::<Vec<_>>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::tensor::Tensor;

    fn thwc(t: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> FeatureSequence {
        FeatureSequence::from_tensor(
            Tensor::new(vec![t, h, w, c], vec![Axis::T, Axis::H, Axis::W, Axis::C], data).unwrap(),
        )
        .unwrap()
    }

    fn random_thwc(seed: u64, t: usize, h: usize, w: usize, c: usize) -> FeatureSequence {
        let mut rng = SplitMix64::new(seed);
        thwc(t, h, w, c, (0..t * h * w * c).map(|_| rng.next_gaussian()).collect())
    }

    /// Hand-built projector: c=2, d=1, W1 = [1, -1], W2 = [1, 1].
    fn hand_projector() -> RmProjector {
        // Search seeds for the sign pattern rather than poking at internals.
        (0..)
            .map(|seed| RmProjector::new(seed, 2, 1, Normalization::Identity).unwrap())
            .find(|p| {
                p.w1().iter().copied().eq([1.0, -1.0]) && p.w2().iter().copied().eq([1.0, 1.0])
            })
            .unwrap()
    }

    #[test]
    fn pipeline_names_parse() {
        for kind in PipelineKind::ALL {
            assert_eq!(kind.name().parse::<PipelineKind>().unwrap(), kind);
        }
        assert!("tcbp+scbp".parse::<PipelineKind>().is_err());
    }

    #[test]
    fn tap_cases() {
        let s = FeatureSequence::from_frames(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(tap(&s).unwrap(), vec![2.0, 3.0]);
        let single = FeatureSequence::from_frames(&[vec![7.0, -1.0]]).unwrap();
        assert_eq!(tap(&single).unwrap(), vec![7.0, -1.0]);
        assert!(matches!(tap(&random_thwc(1, 2, 2, 2, 3)), Err(Error::Axis(_))));
    }

    #[test]
    fn sap_cases() {
        // One frame, 1x2 positions, channel values {1,3} and {5,7}.
        let s = thwc(1, 1, 2, 2, vec![1.0, 5.0, 3.0, 7.0]);
        assert_eq!(sap(&s).unwrap().tensor().data(), &[2.0, 6.0]);
        let unit = thwc(1, 1, 1, 3, vec![1.0, 2.0, 3.0]);
        assert_eq!(sap(&unit).unwrap().tensor().data(), &[1.0, 2.0, 3.0]);
        let tc = FeatureSequence::from_frames(&[vec![1.0]]).unwrap();
        assert!(matches!(sap(&tc), Err(Error::Axis(_))));
    }

    #[test]
    fn scbp_hand_case() {
        let p = hand_projector();
        // Descriptors [1,2] and [2,1]: (-1)(3) + (1)(3) = 0.
        let s = thwc(1, 1, 2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert_eq!(scbp(&s, &p).unwrap().tensor().data(), &[0.0]);
        // Same descriptors as frames.
        let frames = FeatureSequence::from_frames(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(tcbp(&frames, &p).unwrap(), vec![0.0]);
    }

    #[test]
    fn scbp_of_repeated_descriptor() {
        let p = RmProjector::new(3, 3, 10, Normalization::Identity).unwrap();
        let x = [0.5, -1.0, 2.0];
        let s = thwc(1, 1, 2, 3, [x, x].concat());
        let single = p.project(&x).unwrap();
        let pooled = scbp(&s, &p).unwrap();
        for (a, b) in pooled.tensor().data().iter().zip(&single) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn stcbp_of_repeated_descriptor() {
        let p = RmProjector::new(3, 3, 10, Normalization::Identity).unwrap();
        let x = [0.5, -1.0, 2.0];
        let s = thwc(2, 1, 2, 3, [x, x, x, x].concat());
        let single = p.project(&x).unwrap();
        for (a, b) in stcbp(&s, &p).unwrap().iter().zip(&single) {
            assert!((a - 4.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn stcbp_is_tcbp_on_flattened_descriptors() {
        let p = RmProjector::new(4, 3, 16, Normalization::Identity).unwrap();
        let s = random_thwc(8, 3, 2, 2, 3);
        let flat = FeatureSequence::from_tensor(
            Tensor::new(vec![12, 3], vec![Axis::T, Axis::C], s.tensor().data().to_vec()).unwrap(),
        )
        .unwrap();
        assert_eq!(stcbp(&s, &p).unwrap(), tcbp(&flat, &p).unwrap());
    }

    #[test]
    fn projector_mismatch_is_dimension_error() {
        let p = RmProjector::new(4, 5, 16, Normalization::Identity).unwrap();
        let s = random_thwc(8, 3, 2, 2, 3);
        assert!(matches!(scbp(&s, &p), Err(Error::Dimension(_))));
        assert!(matches!(stcbp(&s, &p), Err(Error::Dimension(_))));
        let spatial = RmProjector::new(1, 3, 16, Normalization::Identity).unwrap();
        let temporal = RmProjector::new(2, 8, 16, Normalization::Identity).unwrap();
        assert!(matches!(
            PoolingPipeline::scbp_tcbp(spatial, temporal),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn degenerate_scbp_tcbp_is_nested_projection() {
        let spatial = RmProjector::new(1, 3, 8, Normalization::SignedSqrt).unwrap();
        let temporal = RmProjector::new(2, 8, 12, Normalization::SignedSqrt).unwrap();
        let pp = PoolingPipeline::scbp_tcbp(spatial.clone(), temporal.clone()).unwrap();
        let x = vec![0.3, -0.7, 1.1];
        let s = thwc(1, 1, 1, 3, x.clone());
        let want = temporal.project(&spatial.project(&x).unwrap()).unwrap();
        let got = run_pipeline(&pp, &s).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stap_of_constant() {
        let s = thwc(3, 2, 2, 4, vec![2.5; 48]);
        assert_eq!(run_pipeline(&PoolingPipeline::stap(), &s).unwrap(), vec![2.5; 4]);
    }

    #[test]
    fn stcbp_differs_from_scbp_tcbp() {
        let cfg = ProjectorConfig {
            dim: 32,
            seed: 11,
            norm: Normalization::Identity,
        };
        let s = random_thwc(5, 3, 2, 2, 8);
        let joint = PoolingPipeline::build(PipelineKind::Stcbp, 8, cfg).unwrap();
        let nested = PoolingPipeline::build(PipelineKind::ScbpTcbp, 8, cfg).unwrap();
        assert_ne!(joint.run(&s).unwrap(), nested.run(&s).unwrap());
    }

    #[test]
    fn sap_tcbp_accepts_pooled_input() {
        let cfg = ProjectorConfig {
            dim: 16,
            seed: 2,
            norm: Normalization::SignedSqrt,
        };
        let pp = PoolingPipeline::build(PipelineKind::SapTcbp, 4, cfg).unwrap();
        let s = random_thwc(6, 4, 2, 3, 4);
        let pooled = sap(&s).unwrap();
        assert_eq!(pp.run(&s).unwrap(), pp.run(&pooled).unwrap());
        let other = PoolingPipeline::build(PipelineKind::ScbpTap, 4, cfg).unwrap();
        assert!(matches!(other.run(&pooled), Err(Error::Axis(_))));
    }

    #[test]
    fn output_dims() {
        let cfg = ProjectorConfig {
            dim: 24,
            seed: 2,
            norm: Normalization::Identity,
        };
        let s = random_thwc(6, 2, 2, 3, 4);
        for kind in PipelineKind::ALL {
            let pp = PoolingPipeline::build(kind, 4, cfg).unwrap();
            assert_eq!(pp.run(&s).unwrap().len(), pp.output_dim(4), "{kind}");
        }
    }

    #[test]
    fn mid_frame_index() {
        for (t, want) in [(5usize, 2.0), (4, 2.0), (1, 0.0)] {
            let frames: Vec<Vec<f64>> = (0..t).map(|i| vec![i as f64]).collect();
            let s = FeatureSequence::from_frames(&frames).unwrap();
            let m = mid_frame(&s);
            assert_eq!(m.num_frames(), 1);
            assert_eq!(m.tensor().data(), &[want]);
        }
    }

    fn window_bounds(t: usize, window: f64, stride: f64) -> Vec<(f64, usize)> {
        let frames: Vec<Vec<f64>> = (0..t).map(|i| vec![i as f64]).collect();
        let s = FeatureSequence::from_frames(&frames).unwrap();
        sliding_windows(&s, window, stride)
            .unwrap()
            .iter()
            .map(|w| (w.tensor().data()[0], w.num_frames()))
            .collect()
    }

    #[test]
    fn sliding_window_cases() {
        assert_eq!(window_bounds(7, 7.0, 2.0), vec![(0.0, 7)]);
        // Starts 0, 2, 4; the window at 4 already ends on the last frame.
        assert_eq!(window_bounds(11, 7.0, 2.0), vec![(0.0, 7), (2.0, 7), (4.0, 7)]);
        assert_eq!(
            window_bounds(12, 7.0, 2.0),
            vec![(0.0, 7), (2.0, 7), (4.0, 7), (6.0, 6)]
        );
        assert_eq!(window_bounds(3, 7.0, 2.0), vec![(0.0, 3)]);
        assert_eq!(window_bounds(9, 7.0, 4.0), vec![(0.0, 7), (4.0, 5)]);
    }

    #[test]
    fn sliding_windows_follow_frame_rate() {
        let frames: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let s = FeatureSequence::new(
            FeatureSequence::from_frames(&frames).unwrap().into_tensor(),
            2.0,
        )
        .unwrap();
        let w = sliding_windows(&s, 7.0, 4.0).unwrap();
        assert_eq!(w[0].num_frames(), 14);
        assert_eq!(w[1].tensor().data()[0], 8.0);
        assert!(sliding_windows(&s, 0.5, 1.0).is_err());
    }
}

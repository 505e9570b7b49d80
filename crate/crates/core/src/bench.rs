//! Encode-latency benchmark over seeded random videos.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pooling::{PipelineKind, PoolingPipeline, ProjectorConfig};
use crate::rng::SplitMix64;
use crate::tensor::{Axis, FeatureSequence, Tensor};

pub const MIN_REPS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub pipelines: Vec<PipelineKind>,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub projector: ProjectorConfig,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub pipeline: String,
    pub output_dim: usize,
    pub reps: usize,
    pub median_ns: u64,
    pub p90_ns: u64,
    pub min_ns: u64,
}

/// Nearest-rank percentile of sorted samples, `q` in (0, 1].
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn median(sorted: &[u64]) -> u64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        ((sorted[n / 2 - 1] as u128 + sorted[n / 2] as u128) / 2) as u64
    }
}

/// Standard-normal `(T, H, W, C)` video.
pub fn random_video(t: usize, h: usize, w: usize, c: usize, seed: u64) -> Result<FeatureSequence> {
    let mut rng = SplitMix64::new(seed);
    let data = (0..t * h * w * c).map(|_| rng.next_gaussian()).collect();
    FeatureSequence::from_tensor(Tensor::new(
        vec![t, h, w, c],
        vec![Axis::T, Axis::H, Axis::W, Axis::C],
        data,
    )?)
}

/// Times each pipeline on the same video, one encode per sample.
///
/// Runs on the calling thread only; `on_row` sees each row as it completes.
pub fn run_bench(cfg: &BenchConfig, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    if cfg.reps < MIN_REPS {
        return Err(Error::Config(format!(
            "--reps {} is below the minimum of {MIN_REPS}",
            cfg.reps
        )));
    }
    if cfg.pipelines.is_empty() {
        return Err(Error::Config("no pipelines to benchmark".into()));
    }
    let video = random_video(cfg.t, cfg.h, cfg.w, cfg.c, cfg.seed)?;
    let mut rows = Vec::with_capacity(cfg.pipelines.len());
    for &kind in &cfg.pipelines {
        let pipeline = PoolingPipeline::build(kind, cfg.c, cfg.projector)?;
        for _ in 0..cfg.warmup {
            std::hint::black_box(pipeline.run(&video)?);
        }
        let mut samples = Vec::with_capacity(cfg.reps);
        for _ in 0..cfg.reps {
            let start = Instant::now();
            std::hint::black_box(pipeline.run(std::hint::black_box(&video))?);
            samples.push(start.elapsed().as_nanos() as u64);
        }
        samples.sort_unstable();
        let row = BenchRow {
            pipeline: kind.name().to_string(),
            output_dim: pipeline.output_dim(cfg.c),
            reps: cfg.reps,
            median_ns: median(&samples),
            p90_ns: percentile(&samples, 0.9),
            min_ns: samples[0],
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rm::Normalization;

    fn cfg(reps: usize) -> BenchConfig {
        BenchConfig {
            pipelines: PipelineKind::ALL.to_vec(),
            t: 3,
            h: 2,
            w: 2,
            c: 4,
            projector: ProjectorConfig {
                dim: 8,
                seed: 0,
                norm: Normalization::SignedSqrt,
            },
            reps,
            warmup: 1,
            seed: 1,
        }
    }

    #[test]
    fn stats() {
        let s = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(median(&s), 5);
        assert_eq!(median(&s[..9]), 5);
        assert_eq!(percentile(&s, 0.9), 9);
        assert_eq!(percentile(&s, 1.0), 10);
        assert_eq!(percentile(&[7], 0.9), 7);
    }

    #[test]
    fn too_few_reps() {
        assert!(matches!(run_bench(&cfg(5), |_| {}), Err(Error::Config(_))));
    }

    #[test]
    fn one_row_per_pipeline() {
        let rows = run_bench(&cfg(10), |_| {}).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].output_dim, 4);
        assert!(rows.iter().all(|r| r.min_ns <= r.median_ns && r.median_ns <= r.p90_ns));
    }
}

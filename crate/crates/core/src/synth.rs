//! Seeded synthetic datasets.
//!
//! * [`gen_covariance_classes`]: classes share one frame mean and differ
//!   only in channel covariance, so first-order (average) pooling carries no
//!   class signal while second-order pooling does.
//! * [`gen_hier_dataset`]: parent classes set a coarse mean direction and
//!   children add a smaller offset.
//! * [`gen_second_modality`]: a per-video vector around a class prototype,
//!   standing in for an audio stream.
//!
//! All Gaussians come from Box-Muller over one SplitMix64 stream per call.

use crate::classifier::{Hierarchy, Label};
use crate::error::{Error, Result};
use crate::fusion::ModalityVector;
use crate::rng::SplitMix64;
use crate::tensor::{Axis, FeatureSequence, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub videos_per_class: usize,
    /// Frames per video.
    pub t: usize,
    /// Channels per descriptor.
    pub c: usize,
    pub seed: u64,
    /// Standard deviation `a` of the class-specific component.
    pub covariance_strength: f64,
    /// Every channel of the shared frame mean.
    pub mean_offset: f64,
    /// Spatial extent; `1 x 1` yields `(T, C)` sequences.
    pub height: usize,
    pub width: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            videos_per_class: 50,
            t: 20,
            c: 32,
            seed: 0,
            covariance_strength: 1.5,
            mean_offset: 0.0,
            height: 1,
            width: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.videos_per_class == 0 || self.t == 0 {
            return Err(Error::Spec("classes, videos per class and frames must be positive".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Spec("spatial extents must be positive".into()));
        }
        if self.c < 4 {
            return Err(Error::Spec(format!("need at least 4 channels, got {}", self.c)));
        }
        if self.num_classes > self.c / 2 {
            return Err(Error::Spec(format!(
                "{} classes need disjoint supports of at least 2 channels, but c={} allows at most {}",
                self.num_classes,
                self.c,
                self.c / 2
            )));
        }
        if !(self.covariance_strength.is_finite() && self.covariance_strength >= 0.0) {
            return Err(Error::Spec("covariance strength must be finite and nonnegative".into()));
        }
        if !self.mean_offset.is_finite() {
            return Err(Error::Spec("mean offset must be finite".into()));
        }
        Ok(())
    }

    /// Channels in the support of each class direction.
    pub fn block_size(&self) -> usize {
        self.c / self.num_classes
    }

    /// Unit vector `u_k`: `1/sqrt(b)` on channels `[k b, (k+1) b)`.
    pub fn class_direction(&self, class: usize) -> Vec<f64> {
        let b = self.block_size();
        let v = 1.0 / (b as f64).sqrt();
        (0..self.c)
            .map(|j| if j / b == class { v } else { 0.0 })
            .collect()
    }
}

fn sequence(t: usize, height: usize, width: usize, c: usize, data: Vec<f64>) -> Result<FeatureSequence> {
    let tensor = if height == 1 && width == 1 {
        Tensor::new(vec![t, c], vec![Axis::T, Axis::C], data)?
    } else {
        Tensor::new(
            vec![t, height, width, c],
            vec![Axis::T, Axis::H, Axis::W, Axis::C],
            data,
        )?
    };
    FeatureSequence::from_tensor(tensor)
}

/// Descriptors `x = mu + z + a * g * u_k`, class-major order.
///
/// Per descriptor the stream yields `c` draws for `z` followed by one for `g`.
pub fn gen_covariance_classes(spec: &SynthSpec) -> Result<Vec<(FeatureSequence, usize)>> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let descriptors = spec.t * spec.height * spec.width;
    let mut out = Vec::with_capacity(spec.num_classes * spec.videos_per_class);
    for class in 0..spec.num_classes {
        let u = spec.class_direction(class);
        for _ in 0..spec.videos_per_class {
            let mut data = Vec::with_capacity(descriptors * spec.c);
            for _ in 0..descriptors {
                let start = data.len();
                data.extend((0..spec.c).map(|_| spec.mean_offset + rng.next_gaussian()));
                let g = spec.covariance_strength * rng.next_gaussian();
                data[start..]
                    .iter_mut()
                    .zip(&u)
                    .for_each(|(x, uj)| *x += g * uj);
            }
            out.push((sequence(spec.t, spec.height, spec.width, spec.c, data)?, class));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierSynthSpec {
    pub parents: usize,
    pub children_per_parent: usize,
    pub videos_per_child: usize,
    pub t: usize,
    pub c: usize,
    pub seed: u64,
    /// Norm of each parent mean.
    pub parent_scale: f64,
    /// Norm of each child offset; smaller than `parent_scale`.
    pub child_scale: f64,
    /// Per-channel standard deviation of frame noise.
    pub noise: f64,
}

impl Default for HierSynthSpec {
    fn default() -> Self {
        Self {
            parents: 8,
            children_per_parent: 4,
            videos_per_child: 20,
            t: 10,
            c: 128,
            seed: 0,
            parent_scale: 4.0,
            child_scale: 2.0,
            noise: 4.0,
        }
    }
}

impl HierSynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.parents == 0
            || self.children_per_parent == 0
            || self.videos_per_child == 0
            || self.t == 0
            || self.c == 0
        {
            return Err(Error::Spec("hierarchical dataset sizes must be positive".into()));
        }
        let scales = [self.parent_scale, self.child_scale, self.noise];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Spec("scales and noise must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HierDataset {
    /// Child-major order: all videos of child 0, then child 1, ...
    pub samples: Vec<(FeatureSequence, Label)>,
    pub hierarchy: Hierarchy,
    pub parent_means: Vec<Vec<f64>>,
    /// Full frame mean of each child: parent mean plus child offset.
    pub child_means: Vec<Vec<f64>>,
}

fn random_direction(rng: &mut SplitMix64, c: usize, norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..c).map(|_| rng.next_gaussian()).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| norm * x / len).collect()
}

/// Stream order: parent means, then child offsets, then frames.
pub fn gen_hier_dataset(spec: &HierSynthSpec) -> Result<HierDataset> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let hierarchy = Hierarchy::from_group_sizes(&vec![spec.children_per_parent; spec.parents])?;
    let parent_means: Vec<Vec<f64>> = (0..spec.parents)
        .map(|_| random_direction(&mut rng, spec.c, spec.parent_scale))
        .collect();
    let child_means: Vec<Vec<f64>> = (0..hierarchy.num_children())
        .map(|child| {
            let parent = &parent_means[hierarchy.parent_of(child).unwrap()];
            let offset = random_direction(&mut rng, spec.c, spec.child_scale);
            parent.iter().zip(offset).map(|(p, o)| p + o).collect()
        })
        .collect();

    let mut samples = Vec::with_capacity(hierarchy.num_children() * spec.videos_per_child);
    for (child, mean) in child_means.iter().enumerate() {
        let label = Label::Hier {
            parent: hierarchy.parent_of(child).unwrap(),
            child,
        };
        for _ in 0..spec.videos_per_child {
            let data: Vec<f64> = (0..spec.t)
                .flat_map(|_| mean.iter().map(|m| m + spec.noise * rng.next_gaussian()).collect::<Vec<_>>())
                .collect();
            samples.push((sequence(spec.t, 1, 1, spec.c, data)?, label));
        }
    }
    Ok(HierDataset {
        samples,
        hierarchy,
        parent_means,
        child_means,
    })
}

/// One vector per label: a class prototype with standard normal entries plus
/// noise of standard deviation `1/snr`. `snr` may be infinite (no noise).
///
/// Stream order: the `num_classes` prototypes, then per-video noise.
pub fn gen_second_modality(
    labels: &[usize],
    num_classes: usize,
    snr: f64,
    dim: usize,
    seed: u64,
) -> Result<Vec<ModalityVector>> {
    if labels.is_empty() {
        return Err(Error::Data("no videos to attach a second modality to".into()));
    }
    if !(snr > 0.0) {
        return Err(Error::Spec(format!("snr must be positive, got {snr}")));
    }
    if dim == 0 {
        return Err(Error::Spec("second modality dimension must be positive".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Label(format!("label {bad} outside {num_classes} classes")));
    }
    let mut rng = SplitMix64::new(seed);
    let prototypes: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.next_gaussian()).collect())
        .collect();
    let noise_scale = 1.0 / snr;
    labels
        .iter()
        .map(|&l| {
            let v = prototypes[l]
                .iter()
                .map(|p| p + noise_scale * rng.next_gaussian())
                .collect();
            ModalityVector::new("audio", v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let bad = SynthSpec {
            num_classes: 9,
            c: 16,
            ..SynthSpec::default()
        };
        assert!(matches!(gen_covariance_classes(&bad), Err(Error::Spec(_))));
        let tiny = SynthSpec {
            c: 3,
            num_classes: 1,
            ..SynthSpec::default()
        };
        assert!(matches!(tiny.validate(), Err(Error::Spec(_))));
        assert!(SynthSpec {
            num_classes: 8,
            c: 16,
            ..SynthSpec::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn class_directions_are_disjoint_units() {
        let spec = SynthSpec {
            num_classes: 3,
            c: 10,
            ..SynthSpec::default()
        };
        for k in 0..3 {
            let u = spec.class_direction(k);
            assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..k {
                let v = spec.class_direction(j);
                assert_eq!(u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>(), 0.0);
            }
        }
    }

    #[test]
    fn shapes_and_determinism() {
        let spec = SynthSpec {
            videos_per_class: 3,
            t: 5,
            c: 8,
            height: 2,
            width: 3,
            ..SynthSpec::default()
        };
        let a = gen_covariance_classes(&spec).unwrap();
        let b = gen_covariance_classes(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_eq!(a[0].0.tensor().dims(), &[5, 2, 3, 8]);
        assert_eq!(a[11].1, 3);
    }

    #[test]
    fn hier_dataset_layout() {
        let spec = HierSynthSpec {
            parents: 3,
            children_per_parent: 2,
            videos_per_child: 4,
            ..HierSynthSpec::default()
        };
        let ds = gen_hier_dataset(&spec).unwrap();
        assert_eq!(ds.samples.len(), 24);
        assert_eq!(ds.hierarchy.num_parents(), 3);
        for (_, label) in &ds.samples {
            let Label::Hier { parent, child } = *label else { panic!() };
            ds.hierarchy.check_label(parent, child).unwrap();
        }
    }

    #[test]
    fn single_child_per_parent() {
        let spec = HierSynthSpec {
            children_per_parent: 1,
            videos_per_child: 1,
            ..HierSynthSpec::default()
        };
        let ds = gen_hier_dataset(&spec).unwrap();
        assert_eq!(ds.hierarchy.num_children(), ds.hierarchy.num_parents());
        for (child, &parent) in ds.hierarchy.parents().iter().enumerate() {
            assert_eq!(child, parent);
        }
    }

    #[test]
    fn second_modality_checks() {
        assert!(matches!(gen_second_modality(&[0], 2, 0.0, 4, 1), Err(Error::Spec(_))));
        assert!(gen_second_modality(&[0], 2, f64::NAN, 4, 1).is_err());
        assert!(gen_second_modality(&[], 2, 1.0, 4, 1).is_err());
        assert!(matches!(gen_second_modality(&[2], 2, 1.0, 4, 1), Err(Error::Label(_))));
        let clean = gen_second_modality(&[0, 1, 0], 2, f64::INFINITY, 4, 1).unwrap();
        assert_eq!(clean[0], clean[2]);
        assert_ne!(clean[0], clean[1]);
        assert_eq!(clean[0].modality(), "audio");
    }
}

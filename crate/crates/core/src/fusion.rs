//! Early fusion by concatenation and late fusion of final-layer activations.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ModalityVector {
    modality: String,
    values: Vec<f64>,
}

impl ModalityVector {
    pub fn new(modality: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let modality = modality.into();
        if modality.is_empty() {
            return Err(Error::Data("modality tag must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in modality {modality:?}")));
        }
        Ok(Self { modality, values })
    }

    pub fn modality(&self) -> &str {
        &self.modality
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Concatenates the parts in order.
pub fn concat_features(parts: &[ModalityVector]) -> Result<Vec<f64>> {
    if parts.is_empty() {
        return Err(Error::Data("nothing to concatenate".into()));
    }
    Ok(parts.iter().flat_map(|p| p.values.iter().copied()).collect())
}

/// Weighted sum of per-modality activation vectors over one label space.
/// Weights default to all ones.
pub fn late_fuse(activations: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let Some(first) = activations.first() else {
        return Err(Error::Data("no activation sets to fuse".into()));
    };
    let n = first.len();
    if let Some(bad) = activations.iter().find(|a| a.len() != n) {
        return Err(Error::Dimension(format!(
            "activation sets have lengths {n} and {}",
            bad.len()
        )));
    }
    let ones;
    let weights = match weights {
        Some(w) => {
            validate_weights(w, activations.len())?;
            w
        }
        None => {
            ones = vec![1.0; activations.len()];
            &ones
        }
    };
    let mut fused = vec![0.0; n];
    for (a, &w) in activations.iter().zip(weights) {
        for (f, v) in fused.iter_mut().zip(a) {
            *f += w * v;
        }
    }
    Ok(fused)
}

pub fn validate_weights(weights: &[f64], count: usize) -> Result<()> {
    if weights.len() != count {
        return Err(Error::Config(format!(
            "{} weights for {count} activation sets",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Config("fusion weights must be finite and nonnegative".into()));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Config("fusion weights are all zero".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::argmax;

    fn mv(tag: &str, values: Vec<f64>) -> ModalityVector {
        ModalityVector::new(tag, values).unwrap()
    }

    #[test]
    fn concat_cases() {
        assert_eq!(
            concat_features(&[mv("rgb", vec![1.0, 2.0]), mv("audio", vec![3.0])]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(concat_features(&[mv("rgb", vec![4.0, 5.0])]).unwrap(), vec![4.0, 5.0]);
        let visual = mv("rgb", vec![0.1; 4096]);
        let audio = mv("audio", vec![0.2; 512]);
        assert_eq!(concat_features(&[visual, audio]).unwrap().len(), 4608);
        assert!(matches!(concat_features(&[]), Err(Error::Data(_))));
    }

    #[test]
    fn modality_validation() {
        assert!(ModalityVector::new("", vec![1.0]).is_err());
        assert!(ModalityVector::new("rgb", vec![f64::NAN]).is_err());
    }

    #[test]
    fn late_fuse_cases() {
        let v = vec![0.5, 2.0, -1.0];
        let doubled = late_fuse(&[v.clone(), v.clone()], None).unwrap();
        assert_eq!(doubled, vec![1.0, 4.0, -2.0]);
        assert_eq!(argmax(&doubled), argmax(&v));

        let other = vec![9.0, 9.0, 9.0];
        assert_eq!(late_fuse(&[v.clone(), other], Some(&[1.0, 0.0])).unwrap(), v);

        let fused = late_fuse(&[vec![2.0, 0.0], vec![0.0, 1.0]], Some(&[1.0, 1.0])).unwrap();
        assert_eq!(fused, vec![2.0, 1.0]);
        assert_eq!(argmax(&fused), 0);
    }

    #[test]
    fn late_fuse_errors() {
        assert!(matches!(
            late_fuse(&[vec![1.0], vec![1.0, 2.0]], None),
            Err(Error::Dimension(_))
        ));
        assert!(late_fuse(&[vec![1.0], vec![2.0]], Some(&[1.0])).is_err());
        assert!(late_fuse(&[vec![1.0], vec![2.0]], Some(&[0.0, 0.0])).is_err());
        assert!(late_fuse(&[vec![1.0], vec![2.0]], Some(&[1.0, -1.0])).is_err());
    }
}

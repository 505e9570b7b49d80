//! Linear classification heads and their SGD-with-momentum trainer.
//!
//! A flat head is a softmax over `K` logits. A hierarchical head emits
//! `P + C` activations: the first `P` are softmax-normalized into parent
//! probabilities, the remaining `C` are softmax-normalized within each
//! sibling group into child-given-parent probabilities, and the joint
//! probability of a (parent, child) pair is their product.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Parent/child label structure. Children are numbered `0..num_children`
/// globally; each belongs to exactly one parent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyFile", into = "HierarchyFile")]
pub struct Hierarchy {
    parent_of: Vec<usize>,
    children_of: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    parent_of: Vec<usize>,
}

impl TryFrom<HierarchyFile> for Hierarchy {
    type Error = Error;

    fn try_from(f: HierarchyFile) -> Result<Self> {
        Hierarchy::new(f.parent_of)
    }
}

impl From<Hierarchy> for HierarchyFile {
    fn from(h: Hierarchy) -> Self {
        HierarchyFile {
            parent_of: h.parent_of,
        }
    }
}

impl Hierarchy {
    /// `parent_of[child]` is the parent id. Parents are `0..=max`, and every
    /// parent in that range must own at least one child.
    pub fn new(parent_of: Vec<usize>) -> Result<Self> {
        if parent_of.is_empty() {
            return Err(Error::Label("a hierarchy needs at least one child".into()));
        }
        let num_parents = parent_of.iter().max().unwrap() + 1;
        let mut children_of = vec![Vec::new(); num_parents];
        for (child, &parent) in parent_of.iter().enumerate() {
            children_of[parent].push(child);
        }
        if let Some(p) = children_of.iter().position(Vec::is_empty) {
            return Err(Error::Label(format!("parent {p} has no children")));
        }
        Ok(Self {
            parent_of,
            children_of,
        })
    }

    /// Consecutive children, `sizes[p]` of them under parent `p`.
    pub fn from_group_sizes(sizes: &[usize]) -> Result<Self> {
        let parent_of = sizes
            .iter()
            .enumerate()
            .flat_map(|(p, &n)| std::iter::repeat_n(p, n))
            .collect();
        if sizes.contains(&0) {
            return Err(Error::Label("every parent needs at least one child".into()));
        }
        Self::new(parent_of)
    }

    pub fn num_parents(&self) -> usize {
        self.children_of.len()
    }

    pub fn num_children(&self) -> usize {
        self.parent_of.len()
    }

    pub fn parent_of(&self, child: usize) -> Option<usize> {
        self.parent_of.get(child).copied()
    }

    pub fn children_of(&self, parent: usize) -> &[usize] {
        &self.children_of[parent]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent_of
    }

    pub fn check_label(&self, parent: usize, child: usize) -> Result<()> {
        match self.parent_of(child) {
            None => Err(Error::Label(format!(
                "child {child} out of range ({} children)",
                self.num_children()
            ))),
            Some(p) if p != parent => Err(Error::Label(format!(
                "child {child} belongs to parent {p}, not {parent}"
            ))),
            Some(_) => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadMode {
    Flat { num_classes: usize },
    Hier { hierarchy: Hierarchy },
}

impl HeadMode {
    pub fn output_dim(&self) -> usize {
        match self {
            HeadMode::Flat { num_classes } => *num_classes,
            HeadMode::Hier { hierarchy } => hierarchy.num_parents() + hierarchy.num_children(),
        }
    }

    /// Size of the label space predictions are scored over: classes for a
    /// flat head, children for a hierarchical one.
    pub fn num_labels(&self) -> usize {
        match self {
            HeadMode::Flat { num_classes } => *num_classes,
            HeadMode::Hier { hierarchy } => hierarchy.num_children(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Flat(usize),
    Hier { parent: usize, child: usize },
}

impl Label {
    /// Class id in the head's scoring space.
    pub fn class(self) -> usize {
        match self {
            Label::Flat(k) => k,
            Label::Hier { child, .. } => child,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    weights: Array2<f64>,
    bias: Array1<f64>,
    mode: HeadMode,
}

/// Gradients of the mean batch loss, shaped like the head's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Output of a hierarchical forward pass, indexed by parent or child id.
#[derive(Clone, Debug, PartialEq)]
pub struct HierProbs {
    pub parent: Vec<f64>,
    /// `P(child | parent_of(child))`.
    pub conditional: Vec<f64>,
    /// `P(parent_of(child), child)`.
    pub joint: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(input_dim: usize, mode: HeadMode) -> Result<Self> {
        if input_dim == 0 || mode.output_dim() == 0 {
            return Err(Error::Dimension("linear head needs positive dimensions".into()));
        }
        let out = mode.output_dim();
        Ok(Self {
            weights: Array2::zeros((out, input_dim)),
            bias: Array1::zeros(out),
            mode,
        })
    }

    pub fn from_parts(weights: Array2<f64>, bias: Array1<f64>, mode: HeadMode) -> Result<Self> {
        if weights.nrows() != mode.output_dim() || bias.len() != mode.output_dim() {
            return Err(Error::Dimension(format!(
                "head mode needs {} outputs, weights have {} rows and bias {} entries",
                mode.output_dim(),
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.ncols() == 0 {
            return Err(Error::Dimension("linear head needs a positive input dim".into()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite head parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            mode,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn mode(&self) -> &HeadMode {
        &self.mode
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Raw activations `W x + b`.
    pub fn logits(&self, x: &[f64]) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "head expects input length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(self.weights.dot(&ArrayView1::from(x)) + &self.bias)
    }

    pub fn forward_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !matches!(self.mode, HeadMode::Flat { .. }) {
            return Err(Error::Config("forward_flat called on a hierarchical head".into()));
        }
        Ok(softmax(self.logits(x)?.as_slice().unwrap()))
    }

    pub fn forward_hier(&self, x: &[f64]) -> Result<HierProbs> {
        let HeadMode::Hier { hierarchy } = &self.mode else {
            return Err(Error::Config("forward_hier called on a flat head".into()));
        };
        Ok(hier_probs(hierarchy, self.logits(x)?.as_slice().unwrap()))
    }

    /// Per-label scores used for ranking and late fusion: logits for a flat
    /// head, log joint probabilities over children for a hierarchical one.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let logits = self.logits(x)?;
        let logits = logits.as_slice().unwrap();
        Ok(match &self.mode {
            HeadMode::Flat { .. } => logits.to_vec(),
            HeadMode::Hier { hierarchy } => hier_log_joint(hierarchy, logits),
        })
    }

    pub fn loss_and_grad(&self, batch: &[(&[f64], Label)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let mut grads = Gradients {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        };
        let mut loss = 0.0;
        for &(x, label) in batch {
            let logits = self.logits(x)?;
            let (sample_loss, dlogits) = self.loss_and_dlogits(logits.as_slice().unwrap(), label)?;
            loss += sample_loss;
            let dlogits = Array1::from(dlogits);
            let xv = ArrayView1::from(x);
            for (mut row, &g) in grads.weights.rows_mut().into_iter().zip(dlogits.iter()) {
                if g != 0.0 {
                    row.scaled_add(g, &xv);
                }
            }
            grads.bias += &dlogits;
        }
        let scale = 1.0 / batch.len() as f64;
        grads.weights *= scale;
        grads.bias *= scale;
        Ok((loss * scale, grads))
    }

    /// Negative log-likelihood of `label` and its gradient w.r.t. the logits.
    fn loss_and_dlogits(&self, logits: &[f64], label: Label) -> Result<(f64, Vec<f64>)> {
        match (&self.mode, label) {
            (HeadMode::Flat { num_classes }, Label::Flat(k)) => {
                if k >= *num_classes {
                    return Err(Error::Label(format!("class {k} out of range ({num_classes})")));
                }
                let (lse, mut grad) = log_softmax_parts(logits);
                let loss = lse - logits[k];
                grad[k] -= 1.0;
                Ok((loss, grad))
            }
            (HeadMode::Hier { hierarchy }, Label::Hier { parent, child }) => {
                hierarchy.check_label(parent, child)?;
                let np = hierarchy.num_parents();
                let mut grad = vec![0.0; logits.len()];

                let (parent_lse, parent_probs) = log_softmax_parts(&logits[..np]);
                let mut loss = parent_lse - logits[parent];
                grad[..np].copy_from_slice(&parent_probs);
                grad[parent] -= 1.0;

                // Only the true parent's sibling group enters the loss.
                let group = hierarchy.children_of(parent);
                let group_logits: Vec<f64> = group.iter().map(|&c| logits[np + c]).collect();
                let (group_lse, group_probs) = log_softmax_parts(&group_logits);
                for (&c, &p) in group.iter().zip(&group_probs) {
                    grad[np + c] = p;
                }
                grad[np + child] -= 1.0;
                loss += group_lse - logits[np + child];
                Ok((loss, grad))
            }
            (HeadMode::Flat { .. }, Label::Hier { .. }) => {
                Err(Error::Label("hierarchical label given to a flat head".into()))
            }
            (HeadMode::Hier { .. }, Label::Flat(_)) => {
                Err(Error::Label("flat label given to a hierarchical head".into()))
            }
        }
    }

    fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (
            self.weights.as_slice_mut().unwrap(),
            self.bias.as_slice_mut().unwrap(),
        )
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax_parts(logits).1
}

/// `(log Σ exp(z), softmax(z))` with max subtraction.
fn log_softmax_parts(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    (max + total.ln(), exps.into_iter().map(|e| e / total).collect())
}

fn hier_probs(h: &Hierarchy, logits: &[f64]) -> HierProbs {
    let np = h.num_parents();
    let parent = softmax(&logits[..np]);
    let mut conditional = vec![0.0; h.num_children()];
    for p in 0..np {
        let group = h.children_of(p);
        let probs = softmax(&group.iter().map(|&c| logits[np + c]).collect::<Vec<_>>());
        for (&c, q) in group.iter().zip(probs) {
            conditional[c] = q;
        }
    }
    let joint = conditional
        .iter()
        .enumerate()
        .map(|(c, &q)| parent[h.parent_of[c]] * q)
        .collect();
    HierProbs {
        parent,
        conditional,
        joint,
    }
}

fn hier_log_joint(h: &Hierarchy, logits: &[f64]) -> Vec<f64> {
    let np = h.num_parents();
    let (parent_lse, _) = log_softmax_parts(&logits[..np]);
    let mut out = vec![0.0; h.num_children()];
    for p in 0..np {
        let group = h.children_of(p);
        let (group_lse, _) =
            log_softmax_parts(&group.iter().map(|&c| logits[np + c]).collect::<Vec<_>>());
        for &c in group {
            out[c] = (logits[p] - parent_lse) + (logits[np + c] - group_lse);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            weight_init_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.weight_init_scale.is_finite() && self.weight_init_scale >= 0.0) {
            return Err(Error::Config(format!(
                "weight init scale {} is invalid",
                self.weight_init_scale
            )));
        }
        Ok(())
    }
}

/// Heavy-ball update: `v <- momentum * v + g; w <- w - lr * v`.
pub fn sgd_momentum_step(
    params: &mut [f64],
    velocity: &mut [f64],
    grads: &[f64],
    learning_rate: f64,
    momentum: f64,
) {
    assert_eq!(params.len(), velocity.len());
    assert_eq!(params.len(), grads.len());
    for ((w, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v + g;
        *w -= learning_rate * *v;
    }
}

/// Initial head: weights uniform in `±scale/sqrt(in)` drawn row-major from
/// the SplitMix64 stream of `seed`, biases zero. The stream continues into
/// the per-epoch shuffles, so it is returned alongside.
fn init_head(input_dim: usize, mode: HeadMode, cfg: &TrainConfig) -> Result<(LinearHead, SplitMix64)> {
    let mut rng = SplitMix64::new(cfg.seed);
    let mut head = LinearHead::zeros(input_dim, mode)?;
    let bound = cfg.weight_init_scale / (input_dim as f64).sqrt();
    head.weights.mapv_inplace(|_| rng.uniform(-bound, bound));
    Ok((head, rng))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub head: LinearHead,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train(dataset: &[(Vec<f64>, Label)], cfg: &TrainConfig, mode: HeadMode) -> Result<TrainOutcome> {
    train_with(dataset, cfg, mode, |_, _, _| {})
}

/// Like [`train`], calling `on_epoch(epoch, head, mean_loss)` after each epoch.
pub fn train_with(
    dataset: &[(Vec<f64>, Label)],
    cfg: &TrainConfig,
    mode: HeadMode,
    mut on_epoch: impl FnMut(usize, &LinearHead, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Some((first, _)) = dataset.first() else {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    };
    let input_dim = first.len();
    if let Some((x, _)) = dataset.iter().find(|(x, _)| x.len() != input_dim) {
        return Err(Error::Dimension(format!(
            "mixed feature lengths {input_dim} and {}",
            x.len()
        )));
    }

    let (mut head, mut rng) = init_head(input_dim, mode, cfg)?;
    let mut vel_w = vec![0.0; head.weights.len()];
    let mut vel_b = vec![0.0; head.bias.len()];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], Label)> = chunk
                .iter()
                .map(|&i| (dataset[i].0.as_slice(), dataset[i].1))
                .collect();
            let (loss, grads) = head.loss_and_grad(&batch)?;
            total += loss * chunk.len() as f64;
            let (w, b) = head.params_mut();
            sgd_momentum_step(
                w,
                &mut vel_w,
                grads.weights.as_slice().unwrap(),
                cfg.learning_rate,
                cfg.momentum,
            );
            sgd_momentum_step(
                b,
                &mut vel_b,
                grads.bias.as_slice().unwrap(),
                cfg.learning_rate,
                cfg.momentum,
            );
        }
        if head.weights.iter().chain(head.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "training diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        let mean = total / dataset.len() as f64;
        epoch_losses.push(mean);
        on_epoch(epoch, &head, mean);
    }
    Ok(TrainOutcome { head, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_head(weights: Vec<f64>, bias: Vec<f64>, input: usize) -> LinearHead {
        let k = bias.len();
        LinearHead::from_parts(
            Array2::from_shape_vec((k, input), weights).unwrap(),
            Array1::from(bias),
            HeadMode::Flat { num_classes: k },
        )
        .unwrap()
    }

    fn hier_head(sizes: &[usize], input: usize) -> LinearHead {
        let h = Hierarchy::from_group_sizes(sizes).unwrap();
        LinearHead::zeros(input, HeadMode::Hier { hierarchy: h }).unwrap()
    }

    #[test]
    fn hierarchy_invariants() {
        let h = Hierarchy::from_group_sizes(&[2, 1, 3]).unwrap();
        assert_eq!(h.num_parents(), 3);
        assert_eq!(h.num_children(), 6);
        assert_eq!(h.children_of(2), &[3, 4, 5]);
        assert!(Hierarchy::new(vec![0, 2]).is_err());
        assert!(Hierarchy::new(vec![]).is_err());
        assert!(h.check_label(0, 1).is_ok());
        assert!(matches!(h.check_label(1, 1), Err(Error::Label(_))));
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"parent_of":[0,0,1,2,2,2]}"#);
        assert_eq!(serde_json::from_str::<Hierarchy>(&json).unwrap(), h);
        assert!(serde_json::from_str::<Hierarchy>(r#"{"parent_of":[1]}"#).is_err());
    }

    #[test]
    fn uniform_flat() {
        let h = LinearHead::zeros(2, HeadMode::Flat { num_classes: 3 }).unwrap();
        for p in h.forward_flat(&[1.0, 2.0]).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_bias_ln2() {
        let h = flat_head(vec![0.0; 2], vec![2f64.ln(), 0.0], 1);
        let p = h.forward_flat(&[5.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn flat_shift_invariance() {
        let a = flat_head(vec![0.0; 3], vec![0.3, -1.0, 2.0], 1);
        let b = flat_head(vec![0.0; 3], vec![100.3, 99.0, 102.0], 1);
        let pa = a.forward_flat(&[0.0]).unwrap();
        let pb = b.forward_flat(&[0.0]).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn large_logits_stay_normalized() {
        let h = flat_head(vec![0.0; 3], vec![1e3, -1e3, 999.0], 1);
        let p = h.forward_flat(&[0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_hier_joint() {
        let h = hier_head(&[2, 1], 3);
        let probs = h.forward_hier(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(probs.joint, vec![0.25, 0.25, 0.5]);
    }

    #[test]
    fn mode_mismatch() {
        let h = hier_head(&[2, 1], 3);
        assert!(h.forward_flat(&[0.0; 3]).is_err());
        let f = LinearHead::zeros(3, HeadMode::Flat { num_classes: 2 }).unwrap();
        assert!(f.forward_hier(&[0.0; 3]).is_err());
        assert!(matches!(f.forward_flat(&[0.0; 2]), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_losses() {
        let f = LinearHead::zeros(2, HeadMode::Flat { num_classes: 5 }).unwrap();
        let x = [1.0, -1.0];
        let (loss, _) = f.loss_and_grad(&[(&x, Label::Flat(3))]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);

        // 3 parents, label parent has 4 children: ln 3 + ln 4.
        let h = hier_head(&[2, 4, 1], 2);
        let (loss, _) = h
            .loss_and_grad(&[(&x, Label::Hier { parent: 1, child: 4 })])
            .unwrap();
        assert!((loss - (3f64.ln() + 4f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_labels_rejected() {
        let h = hier_head(&[2, 1], 2);
        let x = [0.0, 0.0];
        assert!(matches!(
            h.loss_and_grad(&[(&x, Label::Hier { parent: 1, child: 0 })]),
            Err(Error::Label(_))
        ));
        assert!(matches!(h.loss_and_grad(&[(&x, Label::Flat(0))]), Err(Error::Label(_))));
        let f = LinearHead::zeros(2, HeadMode::Flat { num_classes: 2 }).unwrap();
        assert!(matches!(f.loss_and_grad(&[(&x, Label::Flat(2))]), Err(Error::Label(_))));
    }

    #[test]
    fn hier_scores_are_log_joint() {
        let h = Hierarchy::from_group_sizes(&[2, 3]).unwrap();
        let mut rng = SplitMix64::new(4);
        let w = Array2::from_shape_simple_fn((7, 3), || rng.next_gaussian());
        let b = Array1::from_shape_simple_fn(7, || rng.next_gaussian());
        let head = LinearHead::from_parts(w, b, HeadMode::Hier { hierarchy: h }).unwrap();
        let x = [0.2, -0.4, 1.0];
        let probs = head.forward_hier(&x).unwrap();
        let scores = head.scores(&x).unwrap();
        for (s, p) in scores.iter().zip(&probs.joint) {
            assert!((s.exp() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_steps() {
        let mut w = [1.0];
        let mut v = [0.0];
        sgd_momentum_step(&mut w, &mut v, &[1.0], 0.01, 0.0);
        assert!((w[0] - 0.99).abs() < 1e-15);

        let mut w = [0.5, -2.0];
        let mut v = [0.0, 0.0];
        sgd_momentum_step(&mut w, &mut v, &[0.0, 0.0], 0.01, 0.9);
        assert_eq!(w, [0.5, -2.0]);

        let mut w = [0.0];
        let mut v = [0.0];
        sgd_momentum_step(&mut w, &mut v, &[1.0], 0.01, 0.9);
        sgd_momentum_step(&mut w, &mut v, &[1.0], 0.01, 0.9);
        assert!((w[0] + 0.029).abs() < 1e-15);
    }

    fn separable_toy() -> Vec<(Vec<f64>, Label)> {
        let mut rng = SplitMix64::new(10);
        (0..100)
            .map(|i| {
                let class = i % 2;
                let sign = if class == 0 { 1.0 } else { -1.0 };
                let x = vec![
                    sign * (1.0 + rng.next_f64()),
                    rng.uniform(-1.0, 1.0),
                ];
                (x, Label::Flat(class))
            })
            .collect()
    }

    #[test]
    fn separable_data_is_learned() {
        let data = separable_toy();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 8,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg, HeadMode::Flat { num_classes: 2 }).unwrap();
        let correct = data
            .iter()
            .filter(|(x, y)| {
                let p = out.head.forward_flat(x).unwrap();
                let pred = if p[0] >= p[1] { 0 } else { 1 };
                pred == y.class()
            })
            .count();
        assert_eq!(correct, data.len());
        assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
    }

    #[test]
    fn zero_lr_keeps_zero_init() {
        let data = separable_toy();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            weight_init_scale: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg, HeadMode::Flat { num_classes: 2 }).unwrap();
        assert_eq!(
            out.head,
            LinearHead::zeros(2, HeadMode::Flat { num_classes: 2 }).unwrap()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_toy();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 77,
            ..TrainConfig::default()
        };
        let a = train(&data, &cfg, HeadMode::Flat { num_classes: 2 }).unwrap();
        let b = train(&data, &cfg, HeadMode::Flat { num_classes: 2 }).unwrap();
        assert_eq!(a.head, b.head);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&[], &cfg, HeadMode::Flat { num_classes: 2 }),
            Err(Error::Data(_))
        ));
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&separable_toy(), &bad, HeadMode::Flat { num_classes: 2 }),
            Err(Error::Config(_))
        ));
    }
}

//! The continual-learning engine.
//!
//! Classes arrive in disjoint batches; each batch gets a fresh
//! normalized head trained to push its outputs toward the batch's label
//! vectors (new-classes loss). Old heads are kept stable by freezing a
//! snapshot of the whole model before training and maximizing the
//! cosine between each old head's live output and the snapshot's output
//! on the same inputs (response loss). With a rehearsal pool, every old
//! head is additionally trained toward the pooled samples' label
//! vectors regardless of which head governs them (review loss).
//!
//! Two softmax baselines share the loop: a single growing softmax layer
//! (fine-tuning) and one softmax head per batch (multi-head one-hot).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codebook::{CodebookError, LabelCodebook, LabelVector};
use crate::data::{DataError, Dataset, RehearsalPool};
use crate::netcore::{
    self, backward_sample, forward_sample, grad_check, sgd_step, Activation, DenseLayer,
    GradientSet, Head, HeadKind, Matrix, NetError, SampleForward,
};
use crate::rng::new_rng;

#[derive(Debug, Error, PartialEq)]
pub enum LmrcError {
    #[error("class {0} is already trained")]
    ClassAlreadyTrained(usize),
    #[error("class {0} appears more than once in the batch")]
    DuplicateClass(usize),
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("class {class} has only {count} sample(s); at least 2 are required")]
    DegenerateClass { class: usize, count: usize },
    #[error("cosine-mode training requires a codebook")]
    MissingCodebook,
    #[error("no label vector assigned to class {0}")]
    MissingLabelVector(usize),
    #[error("codebook dimension {codebook} does not match model label dimension {model}")]
    CodebookDimMismatch { codebook: usize, model: usize },
    #[error("operation requires a {expected} model, found {found}")]
    WrongMode {
        expected: &'static str,
        found: &'static str,
    },
    #[error("model has no heads")]
    NoHeads,
    #[error("empty input")]
    EmptyInput,
    #[error("dataset label {0} is not among the seen classes")]
    LabelNotSeen(usize),
    #[error("non-finite loss at increment {increment}, epoch {epoch}: {detail}; model left at last finite parameters")]
    NonFiniteLoss {
        increment: usize,
        epoch: u32,
        detail: String,
    },
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Training regime for one increment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Label mapping + response consolidation.
    Lmrc,
    /// Label mapping only; the response term is forced off.
    LmOnly,
    /// Single growing softmax layer with one-hot targets.
    FinetuneSoftmax,
    /// One softmax head per class batch with one-hot targets.
    MultiheadSoftmax,
}

impl TrainMode {
    pub fn is_cosine(self) -> bool {
        matches!(self, TrainMode::Lmrc | TrainMode::LmOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Lmrc => "lmrc",
            TrainMode::LmOnly => "lm_only",
            TrainMode::FinetuneSoftmax => "finetune_softmax",
            TrainMode::MultiheadSoftmax => "multihead_softmax",
        }
    }
}

/// Hyper-parameters for [`train_increment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Response-loss weight. Ignored (treated as absent) in `lm_only`.
    pub lambda: f64,
    pub lr: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
}

/// Shared trunk plus per-increment heads and the class bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadModel {
    pub trunk: Vec<DenseLayer>,
    pub heads: Vec<Head>,
    /// Class ids governed by each head, in head order.
    pub head_classes: Vec<Vec<usize>>,
    /// Label vector per trained class (cosine modes).
    pub class_labels: BTreeMap<usize, LabelVector>,
    /// Codebook dimension every normalized head must emit.
    pub label_dim: usize,
}

impl MultiHeadModel {
    /// Fresh model: relu trunk of the given hidden widths, no heads.
    pub fn new(
        feature_dim: usize,
        hidden: &[usize],
        label_dim: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        assert!(feature_dim >= 1 && label_dim >= 1);
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut in_dim = feature_dim;
        for &width in hidden {
            trunk.push(DenseLayer::init_uniform(
                width,
                in_dim,
                Activation::Relu,
                rng,
            ));
            in_dim = width;
        }
        MultiHeadModel {
            trunk,
            heads: Vec::new(),
            head_classes: Vec::new(),
            class_labels: BTreeMap::new(),
            label_dim,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.trunk.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn trunk_out_dim(&self) -> usize {
        self.trunk.last().map_or(self.feature_dim(), DenseLayer::out_dim)
    }

    /// All trained class ids, in head order then governed order.
    pub fn trained_classes(&self) -> Vec<usize> {
        self.head_classes.iter().flatten().copied().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.head_classes.iter().map(Vec::len).sum()
    }

    pub fn is_trained(&self, class: usize) -> bool {
        self.head_classes.iter().flatten().any(|&c| c == class)
    }

    /// Kind of the model's heads, if any exist (kinds never mix).
    pub fn head_kind(&self) -> Option<HeadKind> {
        self.heads.first().map(|h| h.kind)
    }

    /// Head index governing a class, with the class's position in it.
    pub fn governing_head(&self, class: usize) -> Option<(usize, usize)> {
        for (hi, classes) in self.head_classes.iter().enumerate() {
            if let Some(pos) = classes.iter().position(|&c| c == class) {
                return Some((hi, pos));
            }
        }
        None
    }

    /// Invariant check used by tests: disjoint head/class assignment and
    /// (for cosine models) a label vector of the right dimension per class.
    pub fn validate(&self) -> Result<(), LmrcError> {
        assert_eq!(self.heads.len(), self.head_classes.len());
        let mut seen = BTreeMap::new();
        for (hi, classes) in self.head_classes.iter().enumerate() {
            for &c in classes {
                if seen.insert(c, hi).is_some() {
                    return Err(LmrcError::DuplicateClass(c));
                }
            }
        }
        if self.head_kind() == Some(HeadKind::Normalized) {
            for &c in seen.keys() {
                let v = self
                    .class_labels
                    .get(&c)
                    .ok_or(LmrcError::MissingLabelVector(c))?;
                assert_eq!(v.dim(), self.label_dim);
            }
            for head in &self.heads {
                assert_eq!(head.out_dim(), self.label_dim);
            }
        }
        Ok(())
    }
}

/// Open a new normalized head governing `new_class_ids` and assign each
/// class the next unassigned codebook vector, extending the codebook on
/// demand. Existing heads and the trunk are untouched.
pub fn add_head(
    model: &mut MultiHeadModel,
    new_class_ids: &[usize],
    codebook: &mut LabelCodebook,
    codebook_max_tries: u32,
    rng: &mut ChaCha12Rng,
) -> Result<(), LmrcError> {
    if new_class_ids.is_empty() {
        return Err(LmrcError::EmptyBatch);
    }
    for (i, &c) in new_class_ids.iter().enumerate() {
        if model.is_trained(c) {
            return Err(LmrcError::ClassAlreadyTrained(c));
        }
        if new_class_ids[..i].contains(&c) {
            return Err(LmrcError::DuplicateClass(c));
        }
    }
    if model.head_kind() == Some(HeadKind::Softmax) {
        return Err(LmrcError::WrongMode {
            expected: "normalized-head",
            found: "softmax-head",
        });
    }
    if codebook.dim() != model.label_dim {
        return Err(LmrcError::CodebookDimMismatch {
            codebook: codebook.dim(),
            model: model.label_dim,
        });
    }
    let assigned = model.class_labels.len();
    let needed = assigned + new_class_ids.len();
    if codebook.len() < needed {
        codebook.generate(needed - codebook.len(), codebook_max_tries)?;
    }
    let layer = DenseLayer::init_uniform(
        model.label_dim,
        model.trunk_out_dim(),
        Activation::Identity,
        rng,
    );
    for (i, &class) in new_class_ids.iter().enumerate() {
        model
            .class_labels
            .insert(class, codebook.vector(assigned + i).clone());
    }
    model.heads.push(Head::normalized(layer));
    model.head_classes.push(new_class_ids.to_vec());
    Ok(())
}

/// Frozen deep copy of a model used to produce response targets.
#[derive(Clone, Debug)]
pub struct Snapshot {
    model: MultiHeadModel,
}

impl Snapshot {
    pub fn head_count(&self) -> usize {
        self.model.heads.len()
    }

    pub fn model(&self) -> &MultiHeadModel {
        &self.model
    }

    /// Forward one sample through every snapshot head.
    pub fn forward_heads(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, NetError> {
        let all: Vec<usize> = (0..self.model.heads.len()).collect();
        let fwd = forward_sample(&self.model.trunk, &self.model.heads, x, &all)?;
        Ok(fwd
            .heads
            .into_iter()
            .map(|h| h.expect("all heads active").output)
            .collect())
    }
}

/// Deep-copy the model; the copy never changes afterwards.
pub fn make_snapshot(model: &MultiHeadModel) -> Snapshot {
    Snapshot {
        model: model.clone(),
    }
}

/// Snapshot outputs for a batch: `targets[head][sample]` is the frozen
/// normalized output of that head on that sample.
pub fn response_targets(
    snapshot: &Snapshot,
    batch: &[Vec<f64>],
) -> Result<Vec<Vec<Vec<f64>>>, NetError> {
    let k = snapshot.head_count();
    let mut targets = vec![Vec::with_capacity(batch.len()); k];
    for x in batch {
        let outputs = snapshot.forward_heads(x)?;
        for (hi, o) in outputs.into_iter().enumerate() {
            targets[hi].push(o);
        }
    }
    Ok(targets)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean batch cosine between head outputs and their label vectors.
/// The engine maximizes this; the total loss negates it.
pub fn new_classes_loss(outputs: &[Vec<f64>], labels: &[&LabelVector]) -> f64 {
    assert_eq!(outputs.len(), labels.len());
    assert!(!outputs.is_empty());
    let sum: f64 = outputs
        .iter()
        .zip(labels)
        .map(|(o, c)| dot(o, c.components()))
        .sum();
    sum / outputs.len() as f64
}

/// Per-old-head mean batch cosine against the snapshot targets.
pub fn response_loss(outputs: &[Vec<Vec<f64>>], targets: &[Vec<Vec<f64>>]) -> Vec<f64> {
    assert_eq!(outputs.len(), targets.len());
    outputs
        .iter()
        .zip(targets)
        .map(|(os, ts)| {
            assert_eq!(os.len(), ts.len());
            assert!(!os.is_empty());
            os.iter().zip(ts).map(|(o, t)| dot(o, t)).sum::<f64>() / os.len() as f64
        })
        .collect()
}

/// Per-old-head mean cosine between head outputs on pooled samples and
/// the samples' label vectors; every head is trained toward all classes'
/// vectors, not only those it governs.
pub fn review_loss(head_outputs: &[Vec<Vec<f64>>], sample_labels: &[&LabelVector]) -> Vec<f64> {
    head_outputs
        .iter()
        .map(|os| {
            assert_eq!(os.len(), sample_labels.len());
            assert!(!os.is_empty());
            os.iter()
                .zip(sample_labels)
                .map(|(o, c)| dot(o, c.components()))
                .sum::<f64>()
                / os.len() as f64
        })
        .collect()
}

/// Combined objective: `-(L_new + sum(review) + lambda * sum(response))`,
/// omitting absent terms.
pub fn total_loss(l_new: f64, response: &[f64], review: Option<&[f64]>, lambda: f64) -> f64 {
    let resp: f64 = response.iter().sum();
    let rev: f64 = review.map_or(0.0, |r| r.iter().sum());
    -(l_new + rev + lambda * resp)
}

/// One epoch record of the increment log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub increment: usize,
    pub epoch: u32,
    pub loss: f64,
    pub l_new: f64,
    pub l_resp_sum: f64,
    pub l_review_sum: f64,
}

/// Per-increment training trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IncrementLog {
    pub increment: usize,
    pub classes: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
}

/// Mutable borrow of the shared codebook plus its sampling budget.
pub struct CodebookHandle<'a> {
    pub codebook: &'a mut LabelCodebook,
    pub max_tries: u32,
}

struct LossParts {
    l_new: f64,
    l_resp: Vec<f64>,
    l_review: Vec<f64>,
}

impl LossParts {
    fn total(&self, lambda: f64, review_present: bool) -> f64 {
        total_loss(
            self.l_new,
            &self.l_resp,
            review_present.then_some(self.l_review.as_slice()),
            lambda,
        )
    }
}

/// One cosine-mode optimization step: the new-classes term plus optional
/// response and review terms.
struct CosineStep<'a> {
    new_features: Vec<&'a [f64]>,
    new_labels: Vec<&'a LabelVector>,
    new_head: usize,
    old_heads: Vec<usize>,
    /// `targets[old_head_pos][sample]`; present iff the response term is on.
    response_targets: Option<Vec<Vec<Vec<f64>>>>,
    review_features: Vec<&'a [f64]>,
    review_labels: Vec<&'a LabelVector>,
    lambda: f64,
}

impl<'a> CosineStep<'a> {
    fn use_response(&self) -> bool {
        self.response_targets.is_some() && !self.old_heads.is_empty()
    }

    fn use_review(&self) -> bool {
        !self.review_features.is_empty() && !self.old_heads.is_empty()
    }

    fn forward_only(&self, trunk: &[DenseLayer], heads: &[Head]) -> Result<f64, LmrcError> {
        let (parts, _) = self.run(trunk, heads, false)?;
        Ok(parts.total(self.lambda, self.use_review()))
    }

    fn run(
        &self,
        trunk: &[DenseLayer],
        heads: &[Head],
        want_grads: bool,
    ) -> Result<(LossParts, Option<GradientSet>), LmrcError> {
        let b_new = self.new_features.len() as f64;
        let mut grads = want_grads.then(|| GradientSet::zeros_like(trunk, heads));
        let mut l_new_sum = 0.0;
        let mut resp_sums = vec![0.0; self.old_heads.len()];
        let mut review_sums = vec![0.0; self.old_heads.len()];

        let use_response = self.use_response();
        let mut active: Vec<usize> = vec![self.new_head];
        if use_response {
            active.extend(&self.old_heads);
        }
        for (s, &x) in self.new_features.iter().enumerate() {
            let fwd = forward_sample(trunk, heads, x, &active)?;
            let o_new = &fwd.heads[self.new_head].as_ref().unwrap().output;
            let c = self.new_labels[s].components();
            l_new_sum += dot(o_new, c);
            let mut head_grads: Vec<Option<Vec<f64>>> = vec![None; heads.len()];
            if want_grads {
                head_grads[self.new_head] = Some(c.iter().map(|v| -v / b_new).collect());
            }
            if use_response {
                let targets = self.response_targets.as_ref().unwrap();
                for (k, &hi) in self.old_heads.iter().enumerate() {
                    let o = &fwd.heads[hi].as_ref().unwrap().output;
                    let v = &targets[k][s];
                    resp_sums[k] += dot(o, v);
                    if want_grads {
                        head_grads[hi] =
                            Some(v.iter().map(|t| -self.lambda * t / b_new).collect());
                    }
                }
            }
            accumulate(trunk, heads, &fwd, &head_grads, &mut grads)?;
        }

        if self.use_review() {
            let b_rev = self.review_features.len() as f64;
            for (s, &x) in self.review_features.iter().enumerate() {
                let fwd = forward_sample(trunk, heads, x, &self.old_heads)?;
                let c = self.review_labels[s].components();
                let mut head_grads: Vec<Option<Vec<f64>>> = vec![None; heads.len()];
                for (k, &hi) in self.old_heads.iter().enumerate() {
                    let o = &fwd.heads[hi].as_ref().unwrap().output;
                    review_sums[k] += dot(o, c);
                    if want_grads {
                        head_grads[hi] = Some(c.iter().map(|v| -v / b_rev).collect());
                    }
                }
                accumulate(trunk, heads, &fwd, &head_grads, &mut grads)?;
            }
            for r in &mut review_sums {
                *r /= b_rev;
            }
        }

        let parts = LossParts {
            l_new: l_new_sum / b_new,
            l_resp: if use_response {
                resp_sums.iter().map(|s| s / b_new).collect()
            } else {
                Vec::new()
            },
            l_review: if self.use_review() {
                review_sums
            } else {
                Vec::new()
            },
        };
        Ok((parts, grads))
    }
}

fn accumulate(
    trunk: &[DenseLayer],
    heads: &[Head],
    fwd: &SampleForward,
    head_grads: &[Option<Vec<f64>>],
    grads: &mut Option<GradientSet>,
) -> Result<(), LmrcError> {
    if let Some(g) = grads.as_mut() {
        backward_sample(trunk, heads, fwd, head_grads, g)?;
    }
    Ok(())
}

/// One softmax-mode optimization step: weighted cross-entropy over new
/// samples and (with rehearsal) pooled samples routed to the heads
/// governing them. Weights are the groups' fractions of the minibatch,
/// so the total is the plain minibatch-mean cross-entropy.
struct SoftmaxStep<'a> {
    /// `(features, head, position within head)`
    new_samples: Vec<(&'a [f64], usize, usize)>,
    review_samples: Vec<(&'a [f64], usize, usize)>,
    new_weight: f64,
    review_weight: f64,
}

impl<'a> SoftmaxStep<'a> {
    fn forward_only(&self, trunk: &[DenseLayer], heads: &[Head]) -> Result<f64, LmrcError> {
        let (parts, _) = self.run(trunk, heads, false)?;
        Ok(self.new_weight * parts.l_new
            + self.review_weight * parts.l_review.iter().sum::<f64>())
    }

    fn run(
        &self,
        trunk: &[DenseLayer],
        heads: &[Head],
        want_grads: bool,
    ) -> Result<(LossParts, Option<GradientSet>), LmrcError> {
        let mut grads = want_grads.then(|| GradientSet::zeros_like(trunk, heads));
        let ce_group = |samples: &[(&'a [f64], usize, usize)],
                        weight: f64,
                        grads: &mut Option<GradientSet>|
         -> Result<f64, LmrcError> {
            if samples.is_empty() {
                return Ok(0.0);
            }
            let scale = weight / samples.len() as f64;
            let mut sum = 0.0;
            for &(x, head, position) in samples {
                let fwd = forward_sample(trunk, heads, x, &[head])?;
                let logits = &fwd.heads[head].as_ref().unwrap().output;
                sum += netcore::cross_entropy(logits, position);
                if want_grads {
                    let mut g = netcore::softmax(logits);
                    g[position] -= 1.0;
                    for v in &mut g {
                        *v *= scale;
                    }
                    let mut head_grads: Vec<Option<Vec<f64>>> = vec![None; heads.len()];
                    head_grads[head] = Some(g);
                    accumulate(trunk, heads, &fwd, &head_grads, grads)?;
                }
            }
            Ok(sum / samples.len() as f64)
        };
        let l_new = ce_group(&self.new_samples, self.new_weight, &mut grads)?;
        let l_review = ce_group(&self.review_samples, self.review_weight, &mut grads)?;
        let parts = LossParts {
            l_new,
            l_resp: Vec::new(),
            l_review: if self.review_samples.is_empty() {
                Vec::new()
            } else {
                vec![l_review]
            },
        };
        Ok((parts, grads))
    }
}

fn check_batch_preconditions(
    model: &MultiHeadModel,
    batch: &Dataset,
) -> Result<(), LmrcError> {
    if batch.is_empty() {
        return Err(LmrcError::EmptyBatch);
    }
    for &class in &batch.class_ids {
        if model.is_trained(class) {
            return Err(LmrcError::ClassAlreadyTrained(class));
        }
        let count = batch.labels.iter().filter(|&&l| l == class).count();
        if count < 2 {
            return Err(LmrcError::DegenerateClass { class, count });
        }
    }
    Ok(())
}

/// Train the model on one class batch.
///
/// Cosine modes snapshot the model (when the response term is active),
/// open a new normalized head, and run `epochs` of minibatch SGD on the
/// combined loss; old-batch data is never touched except through the
/// optional rehearsal pool. `finetune_softmax` grows a single softmax
/// layer instead; `multihead_softmax` adds a softmax head per batch.
///
/// A non-finite loss or gradient aborts with a diagnostic; the model
/// keeps the parameters from before the failing update.
pub fn train_increment(
    model: &mut MultiHeadModel,
    increment: usize,
    batch: &Dataset,
    codebook: Option<CodebookHandle<'_>>,
    config: &TrainConfig,
    pool: Option<&RehearsalPool>,
) -> Result<IncrementLog, LmrcError> {
    check_batch_preconditions(model, batch)?;
    let mut rng = new_rng(config.seed);
    let new_classes = batch.class_ids.clone();

    // Response consolidation needs the pre-increment model frozen.
    let use_response = config.mode == TrainMode::Lmrc
        && config.lambda > 0.0
        && !model.heads.is_empty();
    let snapshot = use_response.then(|| make_snapshot(model));
    let old_heads: Vec<usize> = (0..model.heads.len()).collect();

    match config.mode {
        TrainMode::Lmrc | TrainMode::LmOnly => {
            let handle = codebook.ok_or(LmrcError::MissingCodebook)?;
            add_head(
                model,
                &new_classes,
                handle.codebook,
                handle.max_tries,
                &mut rng,
            )?;
        }
        TrainMode::FinetuneSoftmax => {
            grow_single_softmax_head(model, &new_classes, &mut rng)?;
        }
        TrainMode::MultiheadSoftmax => {
            add_softmax_head(model, &new_classes, &mut rng)?;
        }
    }

    let new_head = model.heads.len() - 1;
    let pool_available = pool.map_or(0, RehearsalPool::len);

    let mut log = IncrementLog {
        increment,
        classes: new_classes.clone(),
        epochs: Vec::new(),
    };
    match config.mode {
        TrainMode::Lmrc | TrainMode::LmOnly => {
            let mut indices: Vec<usize> = (0..batch.len()).collect();
            for epoch in 0..config.epochs {
                indices.shuffle(&mut rng);
                let mut sums = (0.0, 0.0, 0.0, 0.0); // loss, l_new, resp, review
                let mut n_batches = 0usize;
                for chunk in indices.chunks(config.batch_size.max(1)) {
                    let review_n = pool_available.min(chunk.len());
                    let review_draw = match pool {
                        Some(p) if review_n > 0 => Some(p.draw(review_n, &mut rng)?),
                        _ => None,
                    };
                    let (loss, l_new, resp, review) = run_cosine_minibatch(
                        model,
                        batch,
                        chunk,
                        new_head,
                        &old_heads,
                        snapshot.as_ref(),
                        review_draw.as_ref(),
                        config,
                        increment,
                        epoch,
                    )?;
                    sums.0 += loss;
                    sums.1 += l_new;
                    sums.2 += resp;
                    sums.3 += review;
                    n_batches += 1;
                }
                let n = n_batches as f64;
                log.epochs.push(EpochRecord {
                    increment,
                    epoch,
                    loss: sums.0 / n,
                    l_new: sums.1 / n,
                    l_resp_sum: sums.2 / n,
                    l_review_sum: sums.3 / n,
                });
            }
        }
        TrainMode::FinetuneSoftmax | TrainMode::MultiheadSoftmax => {
            // Rehearsal for the one-hot baselines follows the data-pool
            // protocol directly: pooled samples join the training set
            // and are iterated once per epoch alongside the new data.
            let pooled: Vec<(Vec<f64>, usize)> = match pool {
                Some(p) if pool_available > 0 => {
                    let (features, labels) = p.draw(pool_available, &mut rng)?;
                    features.into_iter().zip(labels).collect()
                }
                _ => Vec::new(),
            };
            let total = batch.len() + pooled.len();
            let mut indices: Vec<usize> = (0..total).collect();
            for epoch in 0..config.epochs {
                indices.shuffle(&mut rng);
                let mut sums = (0.0, 0.0, 0.0); // loss, l_new, review
                let mut n_batches = 0usize;
                for chunk in indices.chunks(config.batch_size.max(1)) {
                    let (loss, l_new, review) = run_softmax_minibatch(
                        model, batch, &pooled, chunk, config, increment, epoch,
                    )?;
                    sums.0 += loss;
                    sums.1 += l_new;
                    sums.2 += review;
                    n_batches += 1;
                }
                let n = n_batches as f64;
                log.epochs.push(EpochRecord {
                    increment,
                    epoch,
                    loss: sums.0 / n,
                    l_new: sums.1 / n,
                    l_resp_sum: 0.0,
                    l_review_sum: sums.2 / n,
                });
            }
        }
    }
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn run_cosine_minibatch(
    model: &mut MultiHeadModel,
    batch: &Dataset,
    chunk: &[usize],
    new_head: usize,
    old_heads: &[usize],
    snapshot: Option<&Snapshot>,
    review_draw: Option<&(Vec<Vec<f64>>, Vec<usize>)>,
    config: &TrainConfig,
    increment: usize,
    epoch: u32,
) -> Result<(f64, f64, f64, f64), LmrcError> {
    let new_features: Vec<&[f64]> = chunk.iter().map(|&i| batch.features[i].as_slice()).collect();
    let new_labels: Vec<&LabelVector> = chunk
        .iter()
        .map(|&i| {
            model
                .class_labels
                .get(&batch.labels[i])
                .ok_or(LmrcError::MissingLabelVector(batch.labels[i]))
        })
        .collect::<Result<_, _>>()?;
    // Targets come from the frozen snapshot, recomputed per minibatch.
    let response_targets = match snapshot {
        Some(snap) => {
            let owned: Vec<Vec<f64>> = new_features.iter().map(|x| x.to_vec()).collect();
            Some(response_targets(snap, &owned)?)
        }
        None => None,
    };
    let (review_features, review_labels) = match review_draw {
        Some((features, labels)) => {
            let fs: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
            let ls: Vec<&LabelVector> = labels
                .iter()
                .map(|l| {
                    model
                        .class_labels
                        .get(l)
                        .ok_or(LmrcError::MissingLabelVector(*l))
                })
                .collect::<Result<_, _>>()?;
            (fs, ls)
        }
        None => (Vec::new(), Vec::new()),
    };
    let step = CosineStep {
        new_features,
        new_labels,
        new_head,
        old_heads: if snapshot.is_some() || !review_features.is_empty() {
            old_heads.to_vec()
        } else {
            Vec::new()
        },
        response_targets,
        review_features,
        review_labels,
        lambda: config.lambda,
    };
    let (parts, grads) = step.run(&model.trunk, &model.heads, true)?;
    let loss = parts.total(config.lambda, step.use_review());
    if !loss.is_finite() {
        return Err(LmrcError::NonFiniteLoss {
            increment,
            epoch,
            detail: format!("cosine loss = {loss}"),
        });
    }
    let grads = grads.unwrap();
    sgd_step(&mut model.trunk, &mut model.heads, &grads, config.lr).map_err(|e| match e {
        NetError::NonFiniteGradient => LmrcError::NonFiniteLoss {
            increment,
            epoch,
            detail: "non-finite gradient".into(),
        },
        other => LmrcError::Net(other),
    })?;
    Ok((
        loss,
        parts.l_new,
        parts.l_resp.iter().sum(),
        parts.l_review.iter().sum(),
    ))
}

/// One softmax minibatch over the merged (new ∪ pooled) sample list:
/// indices below `batch.len()` address new samples, the rest pooled.
fn run_softmax_minibatch(
    model: &mut MultiHeadModel,
    batch: &Dataset,
    pooled: &[(Vec<f64>, usize)],
    chunk: &[usize],
    config: &TrainConfig,
    increment: usize,
    epoch: u32,
) -> Result<(f64, f64, f64), LmrcError> {
    let position_of = |class: usize| -> Result<(usize, usize), LmrcError> {
        model
            .governing_head(class)
            .ok_or(LmrcError::MissingLabelVector(class))
    };
    let mut new_samples = Vec::new();
    let mut review_samples = Vec::new();
    for &i in chunk {
        if i < batch.len() {
            let (head, pos) = position_of(batch.labels[i])?;
            new_samples.push((batch.features[i].as_slice(), head, pos));
        } else {
            let (features, class) = &pooled[i - batch.len()];
            let (head, pos) = position_of(*class)?;
            review_samples.push((features.as_slice(), head, pos));
        }
    }
    // Single mean over the minibatch; the new/review split is tracked
    // for the log only.
    let b = chunk.len() as f64;
    let new_weight = new_samples.len() as f64 / b;
    let review_weight = review_samples.len() as f64 / b;
    let step = SoftmaxStep {
        new_samples,
        review_samples,
        new_weight,
        review_weight,
    };
    let (parts, grads) = step.run(&model.trunk, &model.heads, true)?;
    let review_sum: f64 = parts.l_review.iter().sum();
    let loss = new_weight * parts.l_new + review_weight * review_sum;
    if !loss.is_finite() {
        return Err(LmrcError::NonFiniteLoss {
            increment,
            epoch,
            detail: format!("cross-entropy loss = {loss}"),
        });
    }
    let grads = grads.unwrap();
    sgd_step(&mut model.trunk, &mut model.heads, &grads, config.lr).map_err(|e| match e {
        NetError::NonFiniteGradient => LmrcError::NonFiniteLoss {
            increment,
            epoch,
            detail: "non-finite gradient".into(),
        },
        other => LmrcError::Net(other),
    })?;
    Ok((loss, parts.l_new, review_sum))
}

/// Fine-tuning baseline: widen the single softmax layer by the new
/// classes (old rows preserved, new rows freshly initialized).
fn grow_single_softmax_head(
    model: &mut MultiHeadModel,
    new_classes: &[usize],
    rng: &mut ChaCha12Rng,
) -> Result<(), LmrcError> {
    if model.head_kind() == Some(HeadKind::Normalized) {
        return Err(LmrcError::WrongMode {
            expected: "softmax-head",
            found: "normalized-head",
        });
    }
    if model.heads.len() > 1 {
        return Err(LmrcError::WrongMode {
            expected: "single softmax head",
            found: "multi-head",
        });
    }
    let in_dim = model.trunk_out_dim();
    if model.heads.is_empty() {
        let layer = DenseLayer::init_uniform(new_classes.len(), in_dim, Activation::Identity, rng);
        model.heads.push(Head::softmax(layer));
        model.head_classes.push(new_classes.to_vec());
        return Ok(());
    }
    let old_layer = &model.heads[0].layer;
    let old_out = old_layer.out_dim();
    let new_out = old_out + new_classes.len();
    let fresh = DenseLayer::init_uniform(new_classes.len(), in_dim, Activation::Identity, rng);
    let mut weights = Matrix::zeros(new_out, in_dim);
    let mut bias = vec![0.0; new_out];
    for r in 0..old_out {
        for c in 0..in_dim {
            weights.set(r, c, old_layer.weights.get(r, c));
        }
        bias[r] = old_layer.bias[r];
    }
    for r in 0..new_classes.len() {
        for c in 0..in_dim {
            weights.set(old_out + r, c, fresh.weights.get(r, c));
        }
        bias[old_out + r] = fresh.bias[r];
    }
    model.heads[0] = Head::softmax(DenseLayer::new(weights, bias, Activation::Identity));
    model.head_classes[0].extend_from_slice(new_classes);
    Ok(())
}

/// Multi-head one-hot baseline: one softmax head per class batch.
fn add_softmax_head(
    model: &mut MultiHeadModel,
    new_classes: &[usize],
    rng: &mut ChaCha12Rng,
) -> Result<(), LmrcError> {
    if model.head_kind() == Some(HeadKind::Normalized) {
        return Err(LmrcError::WrongMode {
            expected: "softmax-head",
            found: "normalized-head",
        });
    }
    let layer = DenseLayer::init_uniform(
        new_classes.len(),
        model.trunk_out_dim(),
        Activation::Identity,
        rng,
    );
    model.heads.push(Head::softmax(layer));
    model.head_classes.push(new_classes.to_vec());
    Ok(())
}

/// Finite-difference verification of every loss composition the engine
/// uses, on a deterministic toy model. Returns `(name, max relative
/// error)` pairs; each should stay at or below 1e-4.
pub fn gradcheck_compositions(seed: u64) -> Vec<(&'static str, f64)> {
    let mut results = Vec::new();
    let epsilon = 1e-5;
    let feature_dim = 6;
    let hidden = [8usize, 7];
    let label_dim = 5;

    let mut rng = new_rng(seed);
    let mut codebook = LabelCodebook::new(label_dim, 0.9, seed).unwrap();
    let mut model = MultiHeadModel::new(feature_dim, &hidden, label_dim, &mut rng);
    add_head(&mut model, &[0, 1], &mut codebook, 1_000, &mut rng).unwrap();
    let snapshot = make_snapshot(&model);
    add_head(&mut model, &[2, 3], &mut codebook, 1_000, &mut rng).unwrap();
    // Move the live model off the snapshot so the response term is not
    // checked at its own maximum, where both gradients degenerate to 0.
    {
        use rand::Rng as _;
        for layer in model
            .trunk
            .iter_mut()
            .chain(model.heads.iter_mut().map(|h| &mut h.layer))
        {
            for w in layer.weights.data_mut() {
                *w += 0.05 * (2.0 * rng.gen::<f64>() - 1.0);
            }
            for b in &mut layer.bias {
                *b += 0.05 * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
    }

    let batch: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let mut x = vec![0.0; feature_dim];
            crate::rng::fill_standard_normal(&mut rng, &mut x);
            x
        })
        .collect();
    let batch_refs: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
    let labels: Vec<&LabelVector> = [2, 3, 2, 3]
        .iter()
        .map(|c| model.class_labels.get(c).unwrap())
        .collect();
    let review: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let mut x = vec![0.0; feature_dim];
            crate::rng::fill_standard_normal(&mut rng, &mut x);
            x
        })
        .collect();
    let review_refs: Vec<&[f64]> = review.iter().map(Vec::as_slice).collect();
    let review_labels: Vec<&LabelVector> = [0, 1, 0]
        .iter()
        .map(|c| model.class_labels.get(c).unwrap())
        .collect();
    let targets = response_targets(&snapshot, &batch).unwrap();

    {
        // Eq. (1): new-classes loss alone (also Eq. (7) at lambda = 0).
        let step = CosineStep {
            new_features: batch_refs.clone(),
            new_labels: labels.clone(),
            new_head: 1,
            old_heads: Vec::new(),
            response_targets: None,
            review_features: Vec::new(),
            review_labels: Vec::new(),
            lambda: 0.0,
        };
        let mut trunk = model.trunk.clone();
        let mut heads = model.heads.clone();
        let (_, grads) = step.run(&trunk, &heads, true).unwrap();
        let err = grad_check(
            &mut trunk,
            &mut heads,
            |t, h| step.forward_only(t, h).unwrap(),
            &grads.unwrap(),
            epsilon,
        );
        results.push(("new_classes_loss", err));
        results.push(("combined_lambda0", err));
    }
    {
        // Eq. (7): new-classes + lambda * response.
        let step = CosineStep {
            new_features: batch_refs.clone(),
            new_labels: labels.clone(),
            new_head: 1,
            old_heads: vec![0],
            response_targets: Some(targets.clone()),
            review_features: Vec::new(),
            review_labels: Vec::new(),
            lambda: 2.0,
        };
        let mut trunk = model.trunk.clone();
        let mut heads = model.heads.clone();
        let (_, grads) = step.run(&trunk, &heads, true).unwrap();
        let err = grad_check(
            &mut trunk,
            &mut heads,
            |t, h| step.forward_only(t, h).unwrap(),
            &grads.unwrap(),
            epsilon,
        );
        results.push(("combined_lambda2", err));
    }
    {
        // Eq. (9): new-classes + review + lambda * response.
        let step = CosineStep {
            new_features: batch_refs.clone(),
            new_labels: labels.clone(),
            new_head: 1,
            old_heads: vec![0],
            response_targets: Some(targets),
            review_features: review_refs,
            review_labels,
            lambda: 2.0,
        };
        let mut trunk = model.trunk.clone();
        let mut heads = model.heads.clone();
        let (_, grads) = step.run(&trunk, &heads, true).unwrap();
        let err = grad_check(
            &mut trunk,
            &mut heads,
            |t, h| step.forward_only(t, h).unwrap(),
            &grads.unwrap(),
            epsilon,
        );
        results.push(("combined_with_review", err));
    }

    // Softmax baselines on a parallel toy model.
    let mut rng = new_rng(seed.wrapping_add(1));
    let mut ft = MultiHeadModel::new(feature_dim, &hidden, label_dim, &mut rng);
    grow_single_softmax_head(&mut ft, &[0, 1], &mut rng).unwrap();
    grow_single_softmax_head(&mut ft, &[2, 3], &mut rng).unwrap();
    {
        let step = SoftmaxStep {
            new_samples: batch_refs
                .iter()
                .zip([2usize, 3, 2, 3])
                .map(|(&x, c)| (x, 0usize, c))
                .collect(),
            review_samples: Vec::new(),
            new_weight: 1.0,
            review_weight: 0.0,
        };
        let mut trunk = ft.trunk.clone();
        let mut heads = ft.heads.clone();
        let (_, grads) = step.run(&trunk, &heads, true).unwrap();
        let err = grad_check(
            &mut trunk,
            &mut heads,
            |t, h| step.forward_only(t, h).unwrap(),
            &grads.unwrap(),
            epsilon,
        );
        results.push(("softmax_finetune_ce", err));
    }
    let mut mh = MultiHeadModel::new(feature_dim, &hidden, label_dim, &mut rng);
    add_softmax_head(&mut mh, &[0, 1], &mut rng).unwrap();
    add_softmax_head(&mut mh, &[2, 3], &mut rng).unwrap();
    {
        let step = SoftmaxStep {
            new_samples: batch_refs
                .iter()
                .zip([0usize, 1, 0, 1])
                .map(|(&x, c)| (x, 1usize, c))
                .collect(),
            review_samples: review
                .iter()
                .zip([0usize, 1, 0])
                .map(|(x, c)| (x.as_slice(), 0usize, c))
                .collect(),
            new_weight: 4.0 / 7.0,
            review_weight: 3.0 / 7.0,
        };
        let mut trunk = mh.trunk.clone();
        let mut heads = mh.heads.clone();
        let (_, grads) = step.run(&trunk, &heads, true).unwrap();
        let err = grad_check(
            &mut trunk,
            &mut heads,
            |t, h| step.forward_only(t, h).unwrap(),
            &grads.unwrap(),
            epsilon,
        );
        results.push(("softmax_multihead_ce", err));
    }
    results
}

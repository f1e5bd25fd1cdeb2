//! Winner-Take-All prediction and evaluation metrics.
//!
//! A test sample is propagated through every head; for each head and
//! each class it governs we record the cosine between the head's output
//! and that class's label vector, and the class attaining the maximum
//! wins. Softmax baselines predict by argmax over per-head softmax
//! probabilities instead.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::lmrc::{LmrcError, MultiHeadModel};
use crate::netcore::{forward_sample, softmax, HeadKind};

/// One `(head, class)` similarity from a WTA pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityEntry {
    pub head: usize,
    pub class_id: usize,
    pub similarity: f64,
}

/// Full record of a WTA prediction: every similarity plus the winner.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTrace {
    pub entries: Vec<SimilarityEntry>,
    pub winner_class: usize,
    pub winner_similarity: f64,
}

/// Winner-Take-All over all `(head, class)` cosine similarities.
/// Ties break toward the lowest class id.
pub fn predict_wta(model: &MultiHeadModel, x: &[f64]) -> Result<PredictionTrace, LmrcError> {
    if model.heads.is_empty() {
        return Err(LmrcError::NoHeads);
    }
    if model.head_kind() != Some(HeadKind::Normalized) {
        return Err(LmrcError::WrongMode {
            expected: "normalized-head",
            found: "softmax-head",
        });
    }
    let all: Vec<usize> = (0..model.heads.len()).collect();
    let fwd = forward_sample(&model.trunk, &model.heads, x, &all)?;
    let mut entries = Vec::with_capacity(model.num_classes());
    let mut winner: Option<(usize, f64)> = None;
    for (hi, classes) in model.head_classes.iter().enumerate() {
        let output = &fwd.heads[hi].as_ref().unwrap().output;
        for &class in classes {
            let label = model
                .class_labels
                .get(&class)
                .ok_or(LmrcError::MissingLabelVector(class))?;
            let similarity: f64 = output
                .iter()
                .zip(label.components())
                .map(|(o, c)| o * c)
                .sum::<f64>()
                .clamp(-1.0, 1.0);
            entries.push(SimilarityEntry {
                head: hi,
                class_id: class,
                similarity,
            });
            let better = match winner {
                None => true,
                Some((best_class, best_sim)) => {
                    similarity > best_sim || (similarity == best_sim && class < best_class)
                }
            };
            if better {
                winner = Some((class, similarity));
            }
        }
    }
    let (winner_class, winner_similarity) = winner.expect("at least one class");
    Ok(PredictionTrace {
        entries,
        winner_class,
        winner_similarity,
    })
}

/// Predicted class id for any model kind: WTA for normalized heads,
/// argmax over concatenated per-head softmax probabilities otherwise.
pub fn predict(model: &MultiHeadModel, x: &[f64]) -> Result<usize, LmrcError> {
    match model.head_kind() {
        None => Err(LmrcError::NoHeads),
        Some(HeadKind::Normalized) => Ok(predict_wta(model, x)?.winner_class),
        Some(HeadKind::Softmax) => {
            let all: Vec<usize> = (0..model.heads.len()).collect();
            let fwd = forward_sample(&model.trunk, &model.heads, x, &all)?;
            let mut winner: Option<(usize, f64)> = None;
            for (hi, classes) in model.head_classes.iter().enumerate() {
                let logits = &fwd.heads[hi].as_ref().unwrap().output;
                let probs = softmax(logits);
                for (pos, &class) in classes.iter().enumerate() {
                    let p = probs[pos];
                    let better = match winner {
                        None => true,
                        Some((best_class, best_p)) => {
                            p > best_p || (p == best_p && class < best_class)
                        }
                    };
                    if better {
                        winner = Some((class, p));
                    }
                }
            }
            Ok(winner.expect("at least one class").0)
        }
    }
}

/// Accuracy over a test set, overall and split into old/new subsets.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub acc_all_seen: f64,
    /// `None` when the dataset has no old-class samples.
    pub acc_old: Option<f64>,
    /// `None` when the dataset has no new-class samples.
    pub acc_new: Option<f64>,
    pub per_class: BTreeMap<usize, f64>,
    pub n_samples: usize,
}

/// Fraction of samples whose prediction equals the true label, with
/// old/new restrictions. `old_classes` must be a subset of
/// `seen_classes`; samples outside `old_classes` count as new.
pub fn evaluate(
    model: &MultiHeadModel,
    dataset: &Dataset,
    seen_classes: &[usize],
    old_classes: &[usize],
) -> Result<EvalMetrics, LmrcError> {
    if dataset.is_empty() {
        return Err(LmrcError::EmptyInput);
    }
    for &l in &dataset.labels {
        if !seen_classes.contains(&l) {
            return Err(LmrcError::LabelNotSeen(l));
        }
    }
    let mut correct = 0usize;
    let mut old_correct = 0usize;
    let mut old_total = 0usize;
    let mut new_correct = 0usize;
    let mut new_total = 0usize;
    let mut class_correct: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (x, &label) in dataset.features.iter().zip(&dataset.labels) {
        let pred = predict(model, x)?;
        let hit = pred == label;
        if hit {
            correct += 1;
        }
        let entry = class_correct.entry(label).or_insert((0, 0));
        entry.1 += 1;
        if hit {
            entry.0 += 1;
        }
        if old_classes.contains(&label) {
            old_total += 1;
            if hit {
                old_correct += 1;
            }
        } else {
            new_total += 1;
            if hit {
                new_correct += 1;
            }
        }
    }
    let ratio = |c: usize, t: usize| c as f64 / t as f64;
    Ok(EvalMetrics {
        acc_all_seen: ratio(correct, dataset.len()),
        acc_old: (old_total > 0).then(|| ratio(old_correct, old_total)),
        acc_new: (new_total > 0).then(|| ratio(new_correct, new_total)),
        per_class: class_correct
            .into_iter()
            .map(|(c, (hits, total))| (c, ratio(hits, total)))
            .collect(),
        n_samples: dataset.len(),
    })
}

/// Arithmetic mean of per-increment accuracies.
pub fn avg_incremental_accuracy(per_increment: &[f64]) -> Result<f64, LmrcError> {
    if per_increment.is_empty() {
        return Err(LmrcError::EmptyInput);
    }
    Ok(per_increment.iter().sum::<f64>() / per_increment.len() as f64)
}

/// Mean softmax probability per class position over a dataset, in
/// `(head order, within-head order)` position order. Only valid for
/// softmax-head models; for a single softmax layer the means sum to 1.
pub fn suppression_probe(
    model: &MultiHeadModel,
    dataset: &Dataset,
) -> Result<Vec<f64>, LmrcError> {
    if model.heads.is_empty() {
        return Err(LmrcError::NoHeads);
    }
    if model.head_kind() != Some(HeadKind::Softmax) {
        return Err(LmrcError::WrongMode {
            expected: "softmax-head",
            found: "normalized-head",
        });
    }
    if dataset.is_empty() {
        return Err(LmrcError::EmptyInput);
    }
    let positions = model.num_classes();
    let mut means = vec![0.0; positions];
    let all: Vec<usize> = (0..model.heads.len()).collect();
    for x in &dataset.features {
        let fwd = forward_sample(&model.trunk, &model.heads, x, &all)?;
        let mut offset = 0;
        for hi in 0..model.heads.len() {
            let probs = softmax(&fwd.heads[hi].as_ref().unwrap().output);
            for (pos, p) in probs.iter().enumerate() {
                means[offset + pos] += p;
            }
            offset += model.head_classes[hi].len();
        }
    }
    for m in &mut means {
        *m /= dataset.len() as f64;
    }
    Ok(means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{LabelCodebook, LabelVector};
    use crate::lmrc::{add_head, train_increment, TrainConfig, TrainMode};
    use crate::netcore::{Activation, DenseLayer, Head, Matrix};
    use crate::rng::new_rng;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    /// Identity trunk + identity normalized heads: the model's head
    /// output is just the normalized input, so predictions are fully
    /// controlled by the chosen label vectors.
    fn passthrough_model(labels: Vec<(usize, Vec<f64>)>, per_head: usize) -> MultiHeadModel {
        let dim = labels[0].1.len();
        let mut class_labels = BTreeMap::new();
        let mut head_classes = Vec::new();
        let mut heads = Vec::new();
        for group in labels.chunks(per_head) {
            head_classes.push(group.iter().map(|(c, _)| *c).collect());
            heads.push(Head::normalized(DenseLayer::new(
                Matrix::identity(dim),
                vec![0.0; dim],
                Activation::Identity,
            )));
        }
        for (c, v) in labels {
            class_labels.insert(c, LabelVector::from_components(v).unwrap());
        }
        MultiHeadModel {
            trunk: vec![DenseLayer::new(
                Matrix::identity(dim),
                vec![0.0; dim],
                Activation::Identity,
            )],
            heads,
            head_classes,
            class_labels,
            label_dim: dim,
        }
    }

    #[test]
    fn wta_single_head_single_class() {
        let model = passthrough_model(vec![(0, vec![1.0, 0.0])], 1);
        let trace = predict_wta(&model, &[0.5, 0.5]).unwrap();
        assert_eq!(trace.winner_class, 0);
        assert_eq!(trace.entries.len(), 1);
        let expected = 0.5 / (0.5f64 * 0.5 + 0.5 * 0.5).sqrt();
        assert!((trace.winner_similarity - expected).abs() <= 1e-12);
    }

    #[test]
    fn wta_exact_match_wins_with_similarity_one() {
        let model = passthrough_model(
            vec![
                (0, vec![1.0, 0.0, 0.0]),
                (1, vec![0.0, 1.0, 0.0]),
                (2, vec![0.0, 0.0, 1.0]),
                (3, vec![0.6, 0.8, 0.0]),
            ],
            2,
        );
        let c3 = model.class_labels[&3].components().to_vec();
        let trace = predict_wta(&model, &c3).unwrap();
        assert_eq!(trace.winner_class, 3);
        assert!((trace.winner_similarity - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn wta_tie_breaks_to_lowest_class_id() {
        // Two classes share the same label vector: a perfect tie.
        let model = passthrough_model(
            vec![(4, vec![1.0, 0.0]), (7, vec![1.0, 0.0])],
            1,
        );
        let trace = predict_wta(&model, &[1.0, 0.0]).unwrap();
        assert_eq!(trace.winner_class, 4);
    }

    // Brute-force argmax oracle over all (head, class) cosines.
    #[test]
    fn wta_matches_brute_force_on_random_model() {
        let mut rng = new_rng(101);
        let mut cb = LabelCodebook::new(6, 0.9, 102).unwrap();
        let mut model = MultiHeadModel::new(5, &[7], 6, &mut rng);
        add_head(&mut model, &[0, 1], &mut cb, 1_000, &mut rng).unwrap();
        add_head(&mut model, &[2, 3], &mut cb, 1_000, &mut rng).unwrap();
        add_head(&mut model, &[4, 5], &mut cb, 1_000, &mut rng).unwrap();
        for _ in 0..50 {
            let mut x = vec![0.0; 5];
            crate::rng::fill_standard_normal(&mut rng, &mut x);
            let trace = predict_wta(&model, &x).unwrap();

            let all: Vec<usize> = (0..model.heads.len()).collect();
            let fwd = forward_sample(&model.trunk, &model.heads, &x, &all).unwrap();
            let mut best: Option<(usize, f64)> = None;
            for (hi, classes) in model.head_classes.iter().enumerate() {
                let o = &fwd.heads[hi].as_ref().unwrap().output;
                for &c in classes {
                    let lv = model.class_labels.get(&c).unwrap();
                    let s: f64 = o
                        .iter()
                        .zip(lv.components())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .clamp(-1.0, 1.0);
                    best = match best {
                        None => Some((c, s)),
                        Some((bc, bs)) => {
                            if s > bs || (s == bs && c < bc) {
                                Some((c, s))
                            } else {
                                Some((bc, bs))
                            }
                        }
                    };
                }
            }
            let (expected_class, expected_sim) = best.unwrap();
            assert_eq!(trace.winner_class, expected_class);
            assert_eq!(trace.winner_similarity, expected_sim);
            // Winner attains the maximum over the trace entries.
            assert!(trace
                .entries
                .iter()
                .all(|e| e.similarity <= trace.winner_similarity));
            assert_eq!(trace.entries.len(), 6);
        }
    }

    proptest! {
        // Scaling a head's pre-normalization output leaves the winner
        // unchanged (normalization absorbs positive scale).
        #[test]
        fn wta_invariant_under_head_rescaling(scale in 0.1f64..10.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
            prop_assume!(x0.abs() + x1.abs() > 0.1);
            let model = passthrough_model(
                vec![(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0])],
                1,
            );
            let mut scaled = model.clone();
            for w in scaled.heads[0].layer.weights.data_mut() {
                *w *= scale;
            }
            let x = [x0, x1];
            let a = predict_wta(&model, &x).unwrap();
            let b = predict_wta(&scaled, &x).unwrap();
            prop_assert_eq!(a.winner_class, b.winner_class);
            prop_assert!((a.winner_similarity - b.winner_similarity).abs() <= 1e-9);
        }
    }

    #[test]
    fn evaluate_counts_correctly() {
        let model = passthrough_model(
            vec![(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0])],
            1,
        );
        // Features equal to the class label vector: all correct.
        let perfect = Dataset::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0]],
            vec![0, 1, 1],
        );
        let m = evaluate(&model, &perfect, &[0, 1], &[]).unwrap();
        assert_eq!(m.acc_all_seen, 1.0);
        assert_eq!(m.acc_old, None);
        assert_eq!(m.acc_new, Some(1.0));

        // Labels permuted so nothing matches.
        let adversarial = Dataset::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1, 0],
        );
        let m = evaluate(&model, &adversarial, &[0, 1], &[0]).unwrap();
        assert_eq!(m.acc_all_seen, 0.0);
        assert_eq!(m.acc_old, Some(0.0));

        // Mixed correctness 7/10.
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            if i < 7 {
                features.push(vec![1.0, 0.0]);
            } else {
                features.push(vec![0.0, 1.0]);
            }
            labels.push(0);
        }
        let mixed = Dataset::new(features, labels);
        let m = evaluate(&model, &mixed, &[0, 1], &[]).unwrap();
        assert!((m.acc_all_seen - 0.7).abs() <= 1e-12);
        assert_eq!(m.per_class[&0], 0.7);

        let empty = Dataset::new(Vec::new(), Vec::new());
        assert_eq!(
            evaluate(&model, &empty, &[0], &[]),
            Err(LmrcError::EmptyInput)
        );
    }

    #[test]
    fn avg_incremental_accuracy_basics() {
        assert_eq!(avg_incremental_accuracy(&[0.5]).unwrap(), 0.5);
        assert_eq!(avg_incremental_accuracy(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(
            avg_incremental_accuracy(&[]),
            Err(LmrcError::EmptyInput)
        );
        // Independent summation oracle.
        let series = [0.497, 0.812, 0.733, 0.651, 0.58];
        let mut sum = 0.0;
        for v in series {
            sum += v;
        }
        let expected = sum / series.len() as f64;
        assert!((avg_incremental_accuracy(&series).unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn suppression_probe_uniform_on_zero_logits() {
        // Zero-weight softmax head: equal logits, uniform probabilities.
        let mut rng = new_rng(110);
        let mut model = MultiHeadModel::new(3, &[4], 2, &mut rng);
        model
            .heads
            .push(Head::softmax(DenseLayer::new(
                Matrix::zeros(4, 4),
                vec![0.0; 4],
                Activation::Identity,
            )));
        model.head_classes.push(vec![0, 1, 2, 3]);
        let ds = Dataset::new(vec![vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 0.4]], vec![0, 1]);
        let probe = suppression_probe(&model, &ds).unwrap();
        assert_eq!(probe.len(), 4);
        for p in &probe {
            assert!((p - 0.25).abs() <= 1e-12);
        }
        assert!((probe.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn suppression_probe_concentrates_after_finetuning() {
        // Train only classes {2, 3} after {0, 1}, no rehearsal: the
        // probability mass migrates to the new positions.
        let mut rng = new_rng(111);
        let mut model = MultiHeadModel::new(4, &[8], 2, &mut rng);
        let cfg = TrainConfig {
            mode: TrainMode::FinetuneSoftmax,
            lambda: 0.0,
            lr: 0.2,
            epochs: 30,
            batch_size: 8,
            seed: 112,
        };
        let mk = |classes: &[usize], seed: u64| {
            let mut rng = new_rng(seed);
            let mut features = Vec::new();
            let mut labels = Vec::new();
            for &c in classes {
                let center = crate::rng::unit_vector(4, &mut rng);
                for _ in 0..16 {
                    let mut n = vec![0.0; 4];
                    crate::rng::fill_standard_normal(&mut rng, &mut n);
                    features.push(center.iter().zip(&n).map(|(c, v)| c + 0.2 * v).collect());
                    labels.push(c);
                }
            }
            Dataset::new(features, labels)
        };
        let b1 = mk(&[0, 1], 113);
        let b2 = mk(&[2, 3], 114);
        train_increment(&mut model, 1, &b1, None, &cfg, None).unwrap();
        train_increment(&mut model, 2, &b2, None, &cfg, None).unwrap();
        let mut full = b1.clone();
        full.features.extend(b2.features.iter().cloned());
        full.labels.extend(b2.labels.iter().cloned());
        let full = Dataset::new(full.features, full.labels);
        let probe = suppression_probe(&model, &full).unwrap();
        assert!((probe.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let new_mass = probe[2] + probe[3];
        assert!(new_mass >= 0.9, "new-class mass {new_mass}");
    }

    #[test]
    fn suppression_probe_rejects_cosine_models() {
        let model = passthrough_model(vec![(0, vec![1.0, 0.0])], 1);
        let ds = Dataset::new(vec![vec![1.0, 0.0]], vec![0]);
        assert!(matches!(
            suppression_probe(&model, &ds),
            Err(LmrcError::WrongMode { .. })
        ));
        // And WTA rejects softmax models.
        let mut rng = new_rng(115);
        let mut sm = MultiHeadModel::new(2, &[], 2, &mut rng);
        sm.heads.push(Head::softmax(DenseLayer::new(
            Matrix::identity(2),
            vec![0.0; 2],
            Activation::Identity,
        )));
        sm.head_classes.push(vec![0, 1]);
        assert!(matches!(
            predict_wta(&sm, &[1.0, 0.0]),
            Err(LmrcError::WrongMode { .. })
        ));
    }

    #[test]
    fn prediction_is_deterministic() {
        let mut rng = new_rng(120);
        let mut cb = LabelCodebook::new(4, 0.9, 121).unwrap();
        let mut model = MultiHeadModel::new(3, &[5], 4, &mut rng);
        add_head(&mut model, &[0, 1], &mut cb, 1_000, &mut rng).unwrap();
        let x = [0.2, -0.7, 0.4];
        assert_eq!(predict_wta(&model, &x).unwrap(), predict_wta(&model, &x).unwrap());
    }
}

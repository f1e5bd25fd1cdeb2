//! Deterministic scenario execution: stream class batches, train each
//! mode increment by increment, evaluate on all seen test classes after
//! every increment.
//!
//! Every mode derives its RNG streams from the scenario seed and the
//! increment index alone, so modes that share a prefix of identical
//! computation (e.g. `lmrc` vs `lm_only` on the first increment)
//! produce identical numbers, and any mode list yields the same
//! per-mode results in any order.

use lmrc_core::rng::{derive_seed, new_rng};
use lmrc_core::{
    avg_incremental_accuracy, evaluate, gen_synthetic_blobs, load_idx, split_class_batches,
    stratified_split, train_increment, CodebookHandle, Dataset, IncrementLog, LabelCodebook,
    MultiHeadModel, RehearsalPool, TrainConfig, TrainMode, TrainTestSplit,
};

use crate::config::{DatasetKind, ScenarioConfig};
use crate::report::{ExperimentReport, IncrementRecord, ModeReport, REPORT_SCHEMA};

// Stream labels for seed derivation.
const STREAM_CODEBOOK: u64 = 0xC0DE;
const STREAM_MODEL: u64 = 0x4D0D_E1;
const STREAM_POOL: u64 = 0x9001;
const STREAM_TRAIN_BASE: u64 = 0x7EA1_0000;
pub(crate) const STREAM_GRID_BASE: u64 = 0xCE11_0000;

/// Materialize the configured dataset with its train/test split.
pub fn build_dataset(config: &ScenarioConfig) -> Result<TrainTestSplit, String> {
    let seed = config.seed.expect("validated config has a seed");
    match config.dataset {
        DatasetKind::Synthetic => Ok(gen_synthetic_blobs(
            config.num_classes,
            config.per_class,
            config.feature_dim,
            config.spread,
            seed,
        )),
        DatasetKind::Idx => {
            let images = config.idx_images.as_ref().expect("validated");
            let labels = config.idx_labels.as_ref().expect("validated");
            let ds = load_idx(images, labels).map_err(|e| e.to_string())?;
            stratified_split(&ds, seed).map_err(|e| e.to_string())
        }
    }
}

/// Everything one mode produced, including the final model for probes.
pub struct ModeOutcome {
    pub report: ModeReport,
    pub epoch_logs: Vec<IncrementLog>,
    pub final_model: Option<MultiHeadModel>,
}

/// Train and evaluate one mode over the whole class-batch stream.
/// Old batches are never revisited except through the rehearsal pool.
pub fn run_mode(
    config: &ScenarioConfig,
    mode: TrainMode,
    split: &TrainTestSplit,
) -> Result<(Vec<IncrementRecord>, Vec<IncrementLog>, MultiHeadModel), String> {
    let seed = config.seed.expect("validated config has a seed");
    let stream = split_class_batches(&split.train, config.classes_per_batch)
        .map_err(|e| e.to_string())?;
    let mut codebook = if mode.is_cosine() {
        Some(
            LabelCodebook::new(
                config.codebook_dim,
                config.codebook_threshold,
                derive_seed(seed, STREAM_CODEBOOK),
            )
            .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };
    let mut init_rng = new_rng(derive_seed(seed, STREAM_MODEL));
    let mut model = MultiHeadModel::new(
        split.train.feature_dim(),
        &config.hidden,
        config.codebook_dim,
        &mut init_rng,
    );
    let mut pool = config
        .rehearsal_m
        .map(|m| RehearsalPool::new(m, derive_seed(seed, STREAM_POOL)));

    let mut records = Vec::with_capacity(stream.len());
    let mut logs = Vec::with_capacity(stream.len());
    let mut seen: Vec<usize> = Vec::new();
    for (idx, batch) in stream.batches.iter().enumerate() {
        let increment = idx + 1;
        let old = seen.clone();
        seen.extend(&batch.class_ids);

        let train_cfg = TrainConfig {
            mode,
            lambda: config.lambda,
            lr: config.lr,
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: derive_seed(seed, STREAM_TRAIN_BASE + increment as u64),
        };
        let handle = codebook.as_mut().map(|cb| CodebookHandle {
            codebook: cb,
            max_tries: config.codebook_max_tries,
        });
        let log = train_increment(&mut model, increment, batch, handle, &train_cfg, pool.as_ref())
            .map_err(|e| format!("increment {increment}: {e}"))?;
        logs.push(log);

        let test_seen = split.test.filter_classes(&seen);
        let metrics =
            evaluate(&model, &test_seen, &seen, &old).map_err(|e| e.to_string())?;
        records.push(IncrementRecord {
            increment,
            classes: batch.class_ids.clone(),
            acc_all_seen: metrics.acc_all_seen,
            acc_old: metrics.acc_old,
            acc_new: metrics.acc_new,
            n_test: metrics.n_samples,
        });

        if let Some(p) = pool.as_mut() {
            p.update(batch).map_err(|e| e.to_string())?;
        }
    }
    Ok((records, logs, model))
}

/// Run every configured mode; a failing mode is reported as failed and
/// does not abort the others.
pub fn run_scenario(config: &ScenarioConfig) -> Result<(ExperimentReport, Vec<ModeOutcome>), String> {
    let split = build_dataset(config)?;
    let mut outcomes = Vec::with_capacity(config.modes.len());
    for &mode in &config.modes {
        let outcome = match run_mode(config, mode, &split) {
            Ok((records, logs, model)) => {
                let accs: Vec<f64> = records.iter().map(|r| r.acc_all_seen).collect();
                let avg = avg_incremental_accuracy(&accs).ok();
                ModeOutcome {
                    report: ModeReport {
                        mode,
                        failed: false,
                        error: None,
                        avg_incremental_accuracy: avg,
                        increments: records,
                    },
                    epoch_logs: logs,
                    final_model: Some(model),
                }
            }
            Err(message) => ModeOutcome {
                report: ModeReport {
                    mode,
                    failed: true,
                    error: Some(message),
                    avg_incremental_accuracy: None,
                    increments: Vec::new(),
                },
                epoch_logs: Vec::new(),
                final_model: None,
            },
        };
        outcomes.push(outcome);
    }
    let report = ExperimentReport {
        schema: REPORT_SCHEMA,
        config: config.clone(),
        modes: outcomes.iter().map(|o| o.report.clone()).collect(),
    };
    Ok((report, outcomes))
}

/// Concatenated test split over all classes (used by the suppression
/// probe after the final increment).
pub fn full_test_set(split: &TrainTestSplit) -> Dataset {
    split.test.clone()
}

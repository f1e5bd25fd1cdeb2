//! Subcommand implementations. Exit codes: 0 success, 1 usage,
//! 2 numerical failure, 3 partial (some modes failed).

use std::fmt::Write as _;
use std::path::Path;

use lmrc_core::rng::derive_seed;
use lmrc_core::{
    capacity_estimate, empirical_capacity, gradcheck_compositions, suppression_probe,
    CapacityParams, LabelCodebook, TrainMode, VarianceMode,
};

use crate::config::{DatasetKind, ScenarioConfig};
use crate::runner::{build_dataset, run_mode, run_scenario, STREAM_GRID_BASE};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

const STREAM_CODEBOOK: u64 = 0xC0DE;

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Generate a codebook file and a capacity table over a (d, T) grid.
pub fn cmd_codebook(config: &ScenarioConfig, out_dir: &Path) -> u8 {
    let seed = config.seed.expect("validated");
    let mut partial = false;

    let mut cb = match LabelCodebook::new(
        config.codebook_dim,
        config.codebook_threshold,
        derive_seed(seed, STREAM_CODEBOOK),
    ) {
        Ok(cb) => cb,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = cb.generate(config.codebook_count, config.codebook_max_tries) {
        eprintln!("warning: {e}; writing the partial codebook");
        partial = true;
    }
    let codebook_path = out_dir.join("codebook.txt");
    if let Err(e) = cb.write_to(&codebook_path) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    println!(
        "codebook: {} vectors at d={} T={} -> {}",
        cb.len(),
        cb.dim(),
        cb.threshold(),
        codebook_path.display()
    );

    let mut csv = String::from("d,T,empirical_count,estimate_paper_mode,estimate_corrected_mode\n");
    let mut cell = 0u64;
    for &d in &config.grid_dims {
        for &threshold in &config.grid_thresholds {
            let count = empirical_capacity(
                d,
                threshold,
                config.grid_max_tries,
                derive_seed(seed, STREAM_GRID_BASE + cell),
            );
            let params = |mode| CapacityParams {
                dim: d,
                threshold,
                max_tries: config.grid_max_tries,
                confidence: config.tau,
                variance_mode: mode,
            };
            let est_paper = capacity_estimate(&params(VarianceMode::PaperFaithful));
            let est_corrected = capacity_estimate(&params(VarianceMode::Corrected));
            let _ = writeln!(csv, "{d},{threshold},{count},{est_paper},{est_corrected}");
            cell += 1;
        }
    }
    let csv_path = out_dir.join("capacity.csv");
    if let Err(e) = write_file(&csv_path, &csv) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    println!("capacity table -> {}", csv_path.display());
    if partial {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

/// Full scenario: every mode over the class-batch stream, with the
/// report, the accuracy curves, and per-epoch JSON-lines logs.
pub fn cmd_run(config: &ScenarioConfig, out_dir: &Path) -> u8 {
    let (report, outcomes) = match run_scenario(config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    if let Err(e) = write_file(&out_dir.join("report.json"), &report.to_json()) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    if let Err(e) = write_file(&out_dir.join("curves.csv"), &report.curves_csv()) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    for outcome in &outcomes {
        let mode = outcome.report.mode;
        let mut jsonl = String::new();
        for log in &outcome.epoch_logs {
            for epoch in &log.epochs {
                jsonl.push_str(&serde_json::to_string(epoch).expect("epoch serializes"));
                jsonl.push('\n');
            }
        }
        let path = out_dir.join(format!("{}_epochs.jsonl", mode.name()));
        if let Err(e) = write_file(&path, &jsonl) {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    }
    let mut failed = 0usize;
    for m in &report.modes {
        match (&m.failed, &m.avg_incremental_accuracy) {
            (true, _) => {
                failed += 1;
                eprintln!(
                    "mode {}: FAILED ({})",
                    m.mode.name(),
                    m.error.as_deref().unwrap_or("unknown error")
                );
            }
            (false, avg) => println!(
                "mode {}: avg incremental accuracy {}",
                m.mode.name(),
                avg.map(|a| format!("{a:.4}")).unwrap_or_default()
            ),
        }
    }
    println!("report -> {}", out_dir.join("report.json").display());
    if failed == 0 {
        EXIT_OK
    } else if failed < report.modes.len() {
        EXIT_PARTIAL
    } else {
        EXIT_NUMERICAL
    }
}

/// Softmax-suppression demonstration: 4 synthetic classes in 2
/// increments of fine-tuning, then the mean per-position softmax
/// probability over the full test set.
pub fn cmd_suppression_demo(config: &ScenarioConfig, out_dir: &Path) -> u8 {
    if config.dataset == DatasetKind::Idx {
        eprintln!("error: suppression-demo runs on the synthetic dataset");
        return EXIT_USAGE;
    }
    let mut demo = config.clone();
    demo.num_classes = 4;
    demo.classes_per_batch = 2;
    demo.modes = vec![TrainMode::FinetuneSoftmax];
    demo.rehearsal_m = None;

    let split = match build_dataset(&demo) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let model = match run_mode(&demo, TrainMode::FinetuneSoftmax, &split) {
        Ok((_, _, model)) => model,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let probe = match suppression_probe(&model, &split.test) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let mut csv = String::from("class_position,mean_probability\n");
    for (pos, p) in probe.iter().enumerate() {
        let _ = writeln!(csv, "{pos},{p}");
    }
    let path = out_dir.join("suppression.csv");
    if let Err(e) = write_file(&path, &csv) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    let new_mass: f64 = probe[2] + probe[3];
    println!("mean probability mass on new-class positions: {new_mass:.4}");
    println!("suppression table -> {}", path.display());
    EXIT_OK
}

/// Finite-difference check of every loss composition; non-zero exit if
/// any relative error exceeds 1e-4.
pub fn cmd_gradcheck(config: &ScenarioConfig) -> u8 {
    let seed = config.seed.expect("validated");
    let results = gradcheck_compositions(seed);
    let mut worst = 0.0f64;
    for (name, err) in &results {
        println!("{name}: max_rel_err={err:.3e}");
        worst = worst.max(*err);
    }
    if worst <= 1e-4 {
        println!("gradcheck: OK (worst {worst:.3e})");
        EXIT_OK
    } else {
        eprintln!("gradcheck: FAILED (worst {worst:.3e} > 1e-4)");
        EXIT_NUMERICAL
    }
}

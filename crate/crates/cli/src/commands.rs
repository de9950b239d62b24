//! Command implementations. Each returns printable lines so tests can drive
//! them without spawning the binary; the only process-level concerns left to
//! `main` are argument parsing, thread-pool setup, and exit codes.

use std::path::Path;

use lift_core::collect::{collect, NullAugmentor};
use lift_core::env::{Dataset, DatasetMeta, DATASET_FORMAT_VERSION};
use lift_core::io::{
    read_dataset, write_dataset, write_model, write_shortcuts, ShortcutRecord,
};
use lift_core::knn::KnnQAugmentor;
use lift_core::rng::RngStream;
use lift_core::shortcut::shortcut_tuples;
use lift_core::verify::run_suite;
use lift_core::{Error, Result};

use crate::config::JobConfig;
use crate::metrics::{evaluate, to_csv};

fn meta_for(cfg: &JobConfig) -> DatasetMeta {
    DatasetMeta {
        version: DATASET_FORMAT_VERSION,
        config_digest: cfg.digest(),
        data_digest: cfg.data_digest(),
        seed: cfg.seed,
        d: cfg.env.d,
        gamma: cfg.env.gamma,
    }
}

/// Readers check the collection digest only, so shortcut and model knobs can
/// be swept over one dataset while env or policy mismatches still fail hard.
fn check_digest(meta: &DatasetMeta, cfg: &JobConfig) -> Result<()> {
    let expected = cfg.data_digest();
    if meta.data_digest != expected {
        return Err(Error::InvalidConfig(format!(
            "dataset was collected under digest {} but the supplied configuration hashes to {}",
            meta.data_digest, expected
        )));
    }
    Ok(())
}

/// Plain data generation: the collection loop with a pass-through augmentor,
/// which never overrides.
pub fn gen_data(cfg: &JobConfig, out: &Path) -> Result<Vec<String>> {
    let mut augmentor = NullAugmentor;
    let trajectories = collect(
        &cfg.env,
        &cfg.policy,
        &mut augmentor,
        &cfg.collect,
        &cfg.shortcut,
        &RngStream::new(cfg.seed),
    )?;
    let n_transitions: usize = trajectories.iter().map(|t| t.len()).sum();
    let dataset = Dataset {
        meta: meta_for(cfg),
        trajectories,
    };
    write_dataset(out, &dataset)?;
    Ok(vec![format!(
        "wrote {} trajectories ({} transitions) to {}",
        dataset.trajectories.len(),
        n_transitions,
        out.display()
    )])
}

pub fn extract_shortcuts(cfg: &JobConfig, data: &Path, out: &Path) -> Result<Vec<String>> {
    let dataset = read_dataset(data)?;
    check_digest(&dataset.meta, cfg)?;
    let base = RngStream::new(cfg.seed).child("extract");
    let mut records = Vec::new();
    for traj in &dataset.trajectories {
        let mut rng = base.child_index(traj.episode as u64);
        for tuple in shortcut_tuples(traj, &cfg.shortcut, &mut rng)? {
            records.push(ShortcutRecord {
                episode: traj.episode,
                tuple,
            });
        }
    }
    write_shortcuts(out, &dataset.meta, &records)?;
    Ok(vec![format!(
        "extracted {} shortcut tuples from {} trajectories to {}",
        records.len(),
        dataset.trajectories.len(),
        out.display()
    )])
}

/// The augmented collection loop with the nearest-neighbor model, trained at
/// the configured checkpoints.
pub fn collect_lift(
    cfg: &JobConfig,
    out: &Path,
    model_out: Option<&Path>,
) -> Result<Vec<String>> {
    let mut augmentor = KnnQAugmentor::new(cfg.knn);
    let trajectories = collect(
        &cfg.env,
        &cfg.policy,
        &mut augmentor,
        &cfg.collect,
        &cfg.shortcut,
        &RngStream::new(cfg.seed),
    )?;
    let n_transitions: usize = trajectories.iter().map(|t| t.len()).sum();
    let n_overrides: usize = trajectories
        .iter()
        .flat_map(|t| &t.transitions)
        .filter(|tr| tr.augmented)
        .count();
    let dataset = Dataset {
        meta: meta_for(cfg),
        trajectories,
    };
    write_dataset(out, &dataset)?;
    let mut lines = vec![format!(
        "wrote {} trajectories ({} transitions, {} overrides) to {}",
        dataset.trajectories.len(),
        n_transitions,
        n_overrides,
        out.display()
    )];
    if let Some(path) = model_out {
        match &augmentor.model {
            Some(model) => {
                write_model(path, model, &cfg.digest())?;
                lines.push(format!(
                    "wrote model ({} pairs) to {}",
                    model.pairs.len(),
                    path.display()
                ));
            }
            None => lines.push(
                "no model written: no training checkpoint was reached".to_string(),
            ),
        }
    }
    Ok(lines)
}

pub fn evaluate_dataset(
    cfg: &JobConfig,
    data: &Path,
    csv_out: Option<&Path>,
) -> Result<Vec<String>> {
    let dataset = read_dataset(data)?;
    check_digest(&dataset.meta, cfg)?;
    let metrics = evaluate(&dataset.trajectories, &cfg.env);
    let mut lines = metrics.summary_lines();
    if let Some(path) = csv_out {
        std::fs::write(path, to_csv(&dataset.trajectories, &cfg.env))?;
        lines.push(format!("wrote per-episode csv to {}", path.display()));
    }
    Ok(lines)
}

/// Runs the diagnostic battery. The boolean is true when every applicable
/// check passed.
pub fn verify(cfg: &JobConfig) -> Result<(Vec<String>, bool)> {
    let reports = run_suite(cfg.seed)?;
    let mut all_pass = true;
    let mut lines = Vec::with_capacity(reports.len());
    for report in &reports {
        if report.applicable && !report.pass {
            all_pass = false;
        }
        lines.push(report.summary_line());
    }
    lines.push(if all_pass {
        "verification passed".to_string()
    } else {
        "verification FAILED".to_string()
    });
    Ok((lines, all_pass))
}

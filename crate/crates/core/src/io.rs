//! Line-delimited file formats for datasets, shortcut tuples, and models.
//!
//! Every file is a sequence of single-line JSON records tagged by a
//! `record` field, with a meta record first. Struct fields serialize in
//! declaration order and floats use shortest round-trip formatting, so
//! writing the same value twice produces byte-identical files and reading
//! back is lossless. Parse failures carry 1-based line numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::distortion::Context;
use crate::env::{Dataset, DatasetMeta, Trajectory, Transition, DATASET_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::knn::{KnnQModel, TrainingPair, MODEL_FORMAT_VERSION};
use crate::math::Vector;
use crate::shortcut::ShortcutTuple;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum DatasetRecord {
    Meta(DatasetMeta),
    Trajectory {
        episode: usize,
        context: Context,
        target: Vector,
    },
    Transition(Transition),
}

/// A shortcut tuple tagged with the episode it was extracted from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutRecord {
    pub episode: usize,
    #[serde(flatten)]
    pub tuple: ShortcutTuple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ShortcutFileRecord {
    Meta(DatasetMeta),
    Shortcut(ShortcutRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    version: u32,
    config_digest: String,
    k: usize,
    gamma: f64,
    lambda: f64,
    obs_dim: usize,
    act_dim: usize,
    scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ModelRecord {
    ModelMeta(ModelMeta),
    Pair(TrainingPair),
}

fn emit<T: Serialize>(out: &mut impl std::io::Write, value: &T) -> Result<()> {
    let line = serde_json::to_string(value)
        .map_err(|e| Error::InvalidConfig(format!("serialization failed: {e}")))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

fn parse_line<T: DeserializeOwned>(line: &str, number: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: number,
        message: e.to_string(),
    })
}

/// Numbered non-empty lines of a file; blank lines are malformed.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let number = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            return Err(Error::Parse {
                line: number,
                message: "blank line".into(),
            });
        }
        out.push((number, line));
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "empty file, expected a meta record".into(),
        });
    }
    Ok(out)
}

fn check_version(got: u32, expected: u32, line: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Parse {
            line,
            message: format!("unsupported format version {got}, expected {expected}"),
        });
    }
    Ok(())
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    emit(&mut out, &DatasetRecord::Meta(dataset.meta.clone()))?;
    for traj in &dataset.trajectories {
        emit(
            &mut out,
            &DatasetRecord::Trajectory {
                episode: traj.episode,
                context: traj.context.clone(),
                target: traj.target.clone(),
            },
        )?;
        for tr in &traj.transitions {
            emit(&mut out, &DatasetRecord::Transition(tr.clone()))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let lines = read_lines(path)?;
    let (first_no, first) = &lines[0];
    let meta = match parse_line::<DatasetRecord>(first, *first_no)? {
        DatasetRecord::Meta(meta) => meta,
        _ => {
            return Err(Error::Parse {
                line: *first_no,
                message: "first record must be meta".into(),
            })
        }
    };
    check_version(meta.version, DATASET_FORMAT_VERSION, *first_no)?;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (number, line) in &lines[1..] {
        match parse_line::<DatasetRecord>(line, *number)? {
            DatasetRecord::Meta(_) => {
                return Err(Error::Parse {
                    line: *number,
                    message: "duplicate meta record".into(),
                })
            }
            DatasetRecord::Trajectory {
                episode,
                context,
                target,
            } => trajectories.push(Trajectory {
                episode,
                context,
                target,
                transitions: Vec::new(),
            }),
            DatasetRecord::Transition(tr) => match trajectories.last_mut() {
                Some(traj) => traj.transitions.push(tr),
                None => {
                    return Err(Error::Parse {
                        line: *number,
                        message: "transition before any trajectory record".into(),
                    })
                }
            },
        }
    }
    Ok(Dataset {
        meta,
        trajectories,
    })
}

pub fn write_shortcuts(
    path: &Path,
    meta: &DatasetMeta,
    records: &[ShortcutRecord],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    emit(&mut out, &ShortcutFileRecord::Meta(meta.clone()))?;
    for rec in records {
        emit(&mut out, &ShortcutFileRecord::Shortcut(rec.clone()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_shortcuts(path: &Path) -> Result<(DatasetMeta, Vec<ShortcutRecord>)> {
    let lines = read_lines(path)?;
    let (first_no, first) = &lines[0];
    let meta = match parse_line::<ShortcutFileRecord>(first, *first_no)? {
        ShortcutFileRecord::Meta(meta) => meta,
        _ => {
            return Err(Error::Parse {
                line: *first_no,
                message: "first record must be meta".into(),
            })
        }
    };
    check_version(meta.version, DATASET_FORMAT_VERSION, *first_no)?;
    let mut records = Vec::new();
    for (number, line) in &lines[1..] {
        match parse_line::<ShortcutFileRecord>(line, *number)? {
            ShortcutFileRecord::Meta(_) => {
                return Err(Error::Parse {
                    line: *number,
                    message: "duplicate meta record".into(),
                })
            }
            ShortcutFileRecord::Shortcut(rec) => records.push(rec),
        }
    }
    Ok((meta, records))
}

pub fn write_model(path: &Path, model: &KnnQModel, config_digest: &str) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    emit(
        &mut out,
        &ModelRecord::ModelMeta(ModelMeta {
            version: model.version,
            config_digest: config_digest.to_string(),
            k: model.k,
            gamma: model.gamma,
            lambda: model.lambda,
            obs_dim: model.obs_dim,
            act_dim: model.act_dim,
            scale: model.scale.clone(),
        }),
    )?;
    for pair in &model.pairs {
        emit(&mut out, &ModelRecord::Pair(pair.clone()))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a model file back, returning the model and the digest of the
/// configuration it was trained under.
pub fn read_model(path: &Path) -> Result<(KnnQModel, String)> {
    let lines = read_lines(path)?;
    let (first_no, first) = &lines[0];
    let meta = match parse_line::<ModelRecord>(first, *first_no)? {
        ModelRecord::ModelMeta(meta) => meta,
        _ => {
            return Err(Error::Parse {
                line: *first_no,
                message: "first record must be model_meta".into(),
            })
        }
    };
    check_version(meta.version, MODEL_FORMAT_VERSION, *first_no)?;
    let mut pairs = Vec::new();
    for (number, line) in &lines[1..] {
        match parse_line::<ModelRecord>(line, *number)? {
            ModelRecord::ModelMeta(_) => {
                return Err(Error::Parse {
                    line: *number,
                    message: "duplicate model_meta record".into(),
                })
            }
            ModelRecord::Pair(pair) => pairs.push(pair),
        }
    }
    Ok((
        KnnQModel {
            version: meta.version,
            k: meta.k,
            gamma: meta.gamma,
            lambda: meta.lambda,
            obs_dim: meta.obs_dim,
            act_dim: meta.act_dim,
            scale: meta.scale,
            pairs,
        },
        meta.config_digest,
    ))
}

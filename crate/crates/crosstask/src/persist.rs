//! On-disk formats: the portable model file, CSV exports and report writers.
//!
//! The model file is little-endian binary: an 8-byte magic, a header
//! (regime, k, d, the three lambdas, seed, column count) and one dense
//! weight array of d+1 values per column, each preceded by its task id.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::{Source, SplitPart, TaskId, TaskRole};
use crate::error::{Error, Result};
use crate::learners::{Regime, TrainedModel};
use crate::metrics::EvalReport;
use crate::optim::{Descent, ModelMatrix, ModelVector, OptConfig};
use crate::relatedness::NeighborMap;

const MODEL_MAGIC: &[u8; 8] = b"XTMODL01";

fn regime_code(regime: Regime) -> u8 {
    match regime {
        Regime::Stl => 0,
        Regime::Ssl => 1,
        Regime::TlNpa => 2,
        Regime::TlIna => 3,
        Regime::MtlNpa => 4,
        Regime::MtlIna => 5,
    }
}

fn regime_from_code(code: u8) -> Option<Regime> {
    match code {
        0 => Some(Regime::Stl),
        1 => Some(Regime::Ssl),
        2 => Some(Regime::TlNpa),
        3 => Some(Regime::TlIna),
        4 => Some(Regime::MtlNpa),
        5 => Some(Regime::MtlIna),
        _ => None,
    }
}

fn source_code(source: Source) -> u8 {
    match source {
        Source::S1 => 1,
        Source::S2 => 2,
    }
}

/// Writes a trained model. Only the header fields and weight columns are
/// persisted; traces, timings and the neighbor map are not part of the file.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    out.write_all(MODEL_MAGIC).map_err(io_err)?;
    out.write_all(&[regime_code(model.regime)]).map_err(io_err)?;
    out.write_all(&(model.k as u32).to_le_bytes()).map_err(io_err)?;
    let d = model.theta.dimension().saturating_sub(1) as u64;
    out.write_all(&d.to_le_bytes()).map_err(io_err)?;
    for lambda in [
        model.config.lambda1,
        model.config.lambda2,
        model.config.lambda3,
    ] {
        out.write_all(&lambda.to_le_bytes()).map_err(io_err)?;
    }
    out.write_all(&model.config.seed.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(model.theta.n_columns() as u64).to_le_bytes())
        .map_err(io_err)?;

    for (id, column) in model.theta.columns() {
        out.write_all(&[source_code(id.source)]).map_err(io_err)?;
        out.write_all(&[matches!(id.role, TaskRole::Pooled) as u8])
            .map_err(io_err)?;
        out.write_all(&id.class_id.to_le_bytes()).map_err(io_err)?;
        for &w in column.weights() {
            out.write_all(&w.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Reads a model file written by [`save_model`]. The optimizer settings not
/// stored in the header come back as defaults; timings and the neighbor map
/// are empty.
pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let bad = |msg: &str| Error::ModelFormat {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };

    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MODEL_MAGIC {
        return Err(bad("bad magic"));
    }

    let mut byte = [0u8; 1];
    input.read_exact(&mut byte).map_err(|e| Error::io(path, e))?;
    let regime = regime_from_code(byte[0]).ok_or_else(|| bad("unknown regime code"))?;

    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
    let k = u32::from_le_bytes(u32buf) as usize;

    let mut u64buf = [0u8; 8];
    input.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
    let d = u64::from_le_bytes(u64buf) as usize;

    let mut f64buf = [0u8; 8];
    let mut lambdas = [0.0f64; 3];
    for lambda in &mut lambdas {
        input.read_exact(&mut f64buf).map_err(|e| Error::io(path, e))?;
        *lambda = f64::from_le_bytes(f64buf);
    }
    input.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
    let seed = u64::from_le_bytes(u64buf);
    input.read_exact(&mut u64buf).map_err(|e| Error::io(path, e))?;
    let n_columns = u64::from_le_bytes(u64buf) as usize;

    let mut theta = ModelMatrix::new(d + 1);
    for _ in 0..n_columns {
        input.read_exact(&mut byte).map_err(|e| Error::io(path, e))?;
        let source = match byte[0] {
            1 => Source::S1,
            2 => Source::S2,
            _ => return Err(bad("unknown source code")),
        };
        input.read_exact(&mut byte).map_err(|e| Error::io(path, e))?;
        let role = match byte[0] {
            0 => TaskRole::Original,
            1 => TaskRole::Pooled,
            _ => return Err(bad("unknown role code")),
        };
        input.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        let class_id = u32::from_le_bytes(u32buf);
        let mut weights = Vec::with_capacity(d + 1);
        for _ in 0..d + 1 {
            input.read_exact(&mut f64buf).map_err(|e| Error::io(path, e))?;
            weights.push(f64::from_le_bytes(f64buf));
        }
        theta.insert(
            TaskId {
                source,
                class_id,
                role,
            },
            ModelVector::new(weights).map_err(|_| bad("non-finite weight"))?,
        )?;
    }

    Ok(TrainedModel {
        regime,
        k,
        theta,
        config: OptConfig {
            lambda1: lambdas[0],
            lambda2: lambdas[1],
            lambda3: lambdas[2],
            seed,
            ..OptConfig::default()
        },
        neighbor_map: None,
        per_task_train_seconds: BTreeMap::new(),
    })
}

/// `task_id,feature_id,weight` rows for every column; the bias appears as
/// feature id d.
pub fn export_model_csv(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "task_id,feature_id,weight").map_err(|e| Error::io(path, e))?;
    for (id, column) in model.theta.columns() {
        for (feature, &w) in column.weights().iter().enumerate() {
            writeln!(out, "{id},{feature},{w}").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// `source,class_id,rank,neighbor_class_id,similarity` rows, rank starting
/// at 1 within each task.
pub fn neighbor_csv(map: &NeighborMap) -> String {
    let mut out = String::from("source,class_id,rank,neighbor_class_id,similarity\n");
    for (task, neighbors) in map.entries() {
        for (rank, &(class, similarity)) in neighbors.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                task.source,
                task.class_id,
                rank + 1,
                class,
                similarity
            ));
        }
    }
    out
}

/// Writes [`neighbor_csv`] to a file.
pub fn write_neighbor_csv(map: &NeighborMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, neighbor_csv(map)).map_err(|e| Error::io(path, e))
}

/// `example_index,part` manifest for splits and samples.
pub fn write_manifest(
    parts: &[(usize, SplitPart)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "example_index,part").map_err(|e| Error::io(path, e))?;
    for &(idx, part) in parts {
        writeln!(out, "{idx},{part}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Generic labelled manifest (`example_index,part` with free-form parts).
pub fn write_labeled_manifest(
    parts: &[(usize, &str)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "example_index,part").map_err(|e| Error::io(path, e))?;
    for &(idx, part) in parts {
        writeln!(out, "{idx},{part}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// `iter,objective,step_size` trace of one descent; iteration 0 is the
/// initial objective with step 0.
pub fn write_trace_csv(descent: &Descent, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "iter,objective,step_size").map_err(|e| Error::io(path, e))?;
    for (iter, &objective) in descent.objectives.iter().enumerate() {
        let step = if iter == 0 {
            0.0
        } else {
            descent.steps[iter - 1]
        };
        writeln!(out, "{iter},{objective},{step}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Serializes an evaluation report as pretty JSON.
pub fn write_eval_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::ModelVector;

    #[test]
    fn model_file_round_trip() {
        let mut theta = ModelMatrix::new(3);
        theta
            .insert(
                TaskId::original(Source::S1, 3),
                ModelVector::new(vec![0.5, -1.25, 0.0]).unwrap(),
            )
            .unwrap();
        theta
            .insert(
                TaskId::pooled(Source::S2, 3),
                ModelVector::new(vec![1.0, 2.0, 3.0]).unwrap(),
            )
            .unwrap();
        let model = TrainedModel {
            regime: Regime::MtlNpa,
            k: 2,
            theta,
            config: OptConfig {
                lambda1: 0.1,
                lambda2: 0.2,
                lambda3: 0.3,
                seed: 99,
                ..OptConfig::default()
            },
            neighbor_map: None,
            per_task_train_seconds: BTreeMap::new(),
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();

        assert_eq!(back.regime, Regime::MtlNpa);
        assert_eq!(back.k, 2);
        assert_eq!(back.config.lambda1, 0.1);
        assert_eq!(back.config.lambda3, 0.3);
        assert_eq!(back.config.seed, 99);
        assert_eq!(back.theta.n_columns(), 2);
        for (id, column) in model.theta.columns() {
            let restored = back.theta.column(id).unwrap();
            for (a, b) in column.weights().iter().zip(restored.weights()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.bin");
        std::fs::write(&path, b"NOTMODEL plus junk").unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::ModelFormat { .. })
        ));
    }
}

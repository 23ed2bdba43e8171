//! Corpus ingestion, splits, distribution samples, one-versus-rest tasks and
//! class centroids.
//!
//! The on-disk format is one document per line: `<class_id> <feat>:<val> ...`
//! with non-negative integer feature ids and real values. All structures here
//! are immutable after construction and safe to share across training workers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeding;
use crate::sparse::SparseVector;

/// Which of the two corpora an object belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub enum Source {
    S1,
    S2,
}

impl Source {
    pub fn other(self) -> Source {
        match self {
            Source::S1 => Source::S2,
            Source::S2 => Source::S1,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::S1 => write!(f, "S1"),
            Source::S2 => write!(f, "S2"),
        }
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Source> {
        match s {
            "S1" | "s1" => Ok(Source::S1),
            "S2" | "s2" => Ok(Source::S2),
            other => Err(Error::Config(format!("unknown source {other:?}"))),
        }
    }
}

/// A labeled document.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub class_id: u32,
}

/// A labeled corpus from one source.
#[derive(Debug, Clone)]
pub struct Dataset {
    source: Source,
    examples: Vec<Example>,
    class_index: BTreeMap<u32, Vec<usize>>,
    dimension: usize,
}

impl Dataset {
    /// Builds a dataset, deriving the class index and `d` = 1 + max feature id.
    pub fn new(source: Source, examples: Vec<Example>) -> Dataset {
        let mut class_index: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut dimension = 0usize;
        for (idx, example) in examples.iter().enumerate() {
            class_index.entry(example.class_id).or_default().push(idx);
            if let Some(max_id) = example.features.max_feature_id() {
                dimension = dimension.max(max_id as usize + 1);
            }
        }
        Dataset {
            source,
            examples,
            class_index,
            dimension,
        }
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `d`: one past the largest feature id seen in this corpus.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn class_index(&self) -> &BTreeMap<u32, Vec<usize>> {
        &self.class_index
    }

    pub fn classes(&self) -> Vec<u32> {
        self.class_index.keys().copied().collect()
    }

    pub fn n_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn class_examples(&self, class_id: u32) -> Option<&[usize]> {
        self.class_index.get(&class_id).map(Vec::as_slice)
    }

    /// New dataset holding clones of the examples at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let examples = indices
            .iter()
            .map(|&idx| self.examples[idx].clone())
            .collect();
        Dataset::new(self.source, examples)
    }

    /// Copy with every document scaled to unit length.
    pub fn l2_normalized(&self) -> Dataset {
        let examples = self
            .examples
            .iter()
            .map(|e| Example {
                features: e.features.l2_normalized(),
                class_id: e.class_id,
            })
            .collect();
        Dataset::new(self.source, examples)
    }
}

/// Distinguishes a real one-versus-rest task from the pooled surrogate that
/// the neighborhood-pooling methods create for it in the other source.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub enum TaskRole {
    Original,
    Pooled,
}

/// Identifier of a binary task: its source, its class, and whether it is a
/// pooled surrogate. A pooled surrogate lives in the source *opposite* to the
/// original task it stands in for, but keeps the original class id.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub struct TaskId {
    pub source: Source,
    pub class_id: u32,
    pub role: TaskRole,
}

impl TaskId {
    pub fn original(source: Source, class_id: u32) -> TaskId {
        TaskId {
            source,
            class_id,
            role: TaskRole::Original,
        }
    }

    /// Id of the pooled surrogate (living in `surrogate_source`) for the
    /// original task `(surrogate_source.other(), class_id)`.
    pub fn pooled(surrogate_source: Source, class_id: u32) -> TaskId {
        TaskId {
            source: surrogate_source,
            class_id,
            role: TaskRole::Pooled,
        }
    }

    pub fn is_pooled(&self) -> bool {
        self.role == TaskRole::Pooled
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            TaskRole::Original => write!(f, "{}:{}", self.source, self.class_id),
            TaskRole::Pooled => write!(f, "{}:{}:pooled", self.source, self.class_id),
        }
    }
}

impl std::str::FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<TaskId> {
        let mut parts = s.split(':');
        let source: Source = parts
            .next()
            .ok_or_else(|| Error::Config(format!("bad task id {s:?}")))?
            .parse()?;
        let class_id: u32 = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad task id {s:?}")))?;
        let role = match parts.next() {
            None => TaskRole::Original,
            Some("pooled") => TaskRole::Pooled,
            Some(other) => return Err(Error::Config(format!("bad task role {other:?}"))),
        };
        Ok(TaskId {
            source,
            class_id,
            role,
        })
    }
}

/// A binary one-versus-rest task: example indices into one dataset.
#[derive(Debug, Clone)]
pub struct BinaryTask {
    pub task_id: TaskId,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl BinaryTask {
    pub fn new(task_id: TaskId, positives: Vec<usize>, negatives: Vec<usize>) -> Result<BinaryTask> {
        let pos_set: std::collections::BTreeSet<usize> = positives.iter().copied().collect();
        if negatives.iter().any(|idx| pos_set.contains(idx)) {
            return Err(Error::Config(format!(
                "task {task_id}: positives and negatives overlap"
            )));
        }
        Ok(BinaryTask {
            task_id,
            positives,
            negatives,
        })
    }

    pub fn n_t(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }
}

/// Mean feature vector of one class.
#[derive(Debug, Clone)]
pub struct Centroid {
    pub class_id: u32,
    pub source: Source,
    pub vector: SparseVector,
}

/// Which split part an example landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPart::Train => write!(f, "train"),
            SplitPart::Val => write!(f, "val"),
            SplitPart::Test => write!(f, "test"),
        }
    }
}

/// Index-level view of a 3:1:1 split, for manifests and re-runs.
#[derive(Debug, Clone)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn parse_line(line: &str) -> std::result::Result<(u32, SparseVector, usize), String> {
    let mut class_id: Option<u32> = None;
    let mut extra_labels = 0usize;
    let mut entries: Vec<(u32, f64)> = Vec::new();
    let mut seen_feature = false;

    for token in line.split_whitespace() {
        if let Some((id_part, val_part)) = token.split_once(':') {
            seen_feature = true;
            let id: i64 = id_part
                .parse()
                .map_err(|_| format!("bad feature id {id_part:?}"))?;
            if id < 0 {
                return Err(format!("negative feature id {id}"));
            }
            let id = u32::try_from(id).map_err(|_| format!("feature id {id} out of range"))?;
            let value: f64 = val_part
                .parse()
                .map_err(|_| format!("bad feature value {val_part:?}"))?;
            if !value.is_finite() {
                return Err(format!("non-finite feature value {val_part:?}"));
            }
            if entries.iter().any(|&(seen, _)| seen == id) {
                return Err(format!("duplicate feature id {id}"));
            }
            entries.push((id, value));
        } else {
            if seen_feature {
                return Err(format!("label token {token:?} after features"));
            }
            // The archival format allows several labels, comma-separated or as
            // separate leading tokens; we keep the first and count the rest.
            for label in token.split(',').filter(|l| !l.is_empty()) {
                let id: i64 = label.parse().map_err(|_| format!("bad label {label:?}"))?;
                if id < 0 {
                    return Err(format!("negative class id {id}"));
                }
                let id = u32::try_from(id).map_err(|_| format!("class id {id} out of range"))?;
                if class_id.is_none() {
                    class_id = Some(id);
                } else {
                    extra_labels += 1;
                }
            }
        }
    }

    let class_id = class_id.ok_or_else(|| "missing class label".to_string())?;
    let features = SparseVector::new(entries).map_err(|e| e.to_string())?;
    Ok((class_id, features, extra_labels))
}

/// Reads a sparse dataset file. Line order is preserved; multi-label lines
/// keep their first label (a warning is logged per file).
pub fn parse_sparse_dataset(path: impl AsRef<Path>, source: Source) -> Result<Dataset> {
    parse_sparse_dataset_with(path, source, false)
}

/// As [`parse_sparse_dataset`], optionally scaling every document to unit
/// length at ingest time.
pub fn parse_sparse_dataset_with(
    path: impl AsRef<Path>,
    source: Source,
    l2_normalize: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut examples = Vec::new();
    let mut multi_label_lines = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (class_id, features, extra) = parse_line(&line).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: line_no + 1,
            msg,
        })?;
        if extra > 0 {
            multi_label_lines += 1;
        }
        let features = if l2_normalize {
            features.l2_normalized()
        } else {
            features
        };
        examples.push(Example {
            features,
            class_id,
        });
    }
    if multi_label_lines > 0 {
        log::warn!(
            "{}: {multi_label_lines} multi-label line(s); kept the first label of each",
            path.display()
        );
    }
    Ok(Dataset::new(source, examples))
}

/// Writes a dataset in the same line format the parser reads.
pub fn write_sparse_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for example in dataset.examples() {
        write!(out, "{}", example.class_id).map_err(|e| Error::io(path, e))?;
        for &(id, value) in example.features.entries() {
            write!(out, " {id}:{value}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(out).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Per-class stratified 3:1:1 split at the index level.
///
/// Each class gets `floor(0.6 n)` train, `floor(0.2 n)` validation and the
/// rest test, shuffled by a per-class stream derived from `seed`. Classes
/// with fewer than 5 examples cannot place one example in every part and are
/// reported as a whole.
pub fn split_indices(dataset: &Dataset, seed: u64) -> Result<SplitIndices> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let too_small: Vec<u32> = dataset
        .class_index()
        .iter()
        .filter(|(_, idxs)| idxs.len() < 5)
        .map(|(&class, _)| class)
        .collect();
    if !too_small.is_empty() {
        return Err(Error::SplitTooSmall(too_small));
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (&class, indices) in dataset.class_index() {
        let mut shuffled = indices.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(
            seed,
            &[seeding::TAG_SPLIT, class as u64],
        ));
        shuffled.shuffle(&mut rng);
        let n = shuffled.len();
        let n_train = n * 3 / 5;
        let n_val = n / 5;
        train.extend_from_slice(&shuffled[..n_train]);
        val.extend_from_slice(&shuffled[n_train..n_train + n_val]);
        test.extend_from_slice(&shuffled[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, val, test })
}

/// Materialized 3:1:1 split; see [`split_indices`].
pub fn split_dataset(dataset: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = split_indices(dataset, seed)?;
    Ok((
        dataset.subset(&idx.train),
        dataset.subset(&idx.val),
        dataset.subset(&idx.test),
    ))
}

/// Index-level distribution sample: exactly `size` training examples for
/// every class that has at least `size`; smaller classes are dropped and
/// returned alongside.
pub fn sample_indices(train: &Dataset, size: usize, seed: u64) -> Result<(Vec<usize>, Vec<u32>)> {
    if size == 0 {
        return Err(Error::Config("distribution size must be positive".into()));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (&class, indices) in train.class_index() {
        if indices.len() < size {
            dropped.push(class);
            continue;
        }
        let mut shuffled = indices.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(
            seed,
            &[seeding::TAG_SAMPLE, size as u64, class as u64],
        ));
        shuffled.shuffle(&mut rng);
        kept.extend_from_slice(&shuffled[..size]);
    }
    if kept.is_empty() {
        return Err(Error::EmptySample { size });
    }
    kept.sort_unstable();
    Ok((kept, dropped))
}

/// Materialized distribution sample; see [`sample_indices`]. Dropped classes
/// are logged.
pub fn sample_distribution(train: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    let (kept, dropped) = sample_indices(train, size, seed)?;
    if !dropped.is_empty() {
        log::warn!(
            "distribution size {size}: dropped {} class(es) below threshold: {dropped:?}",
            dropped.len()
        );
    }
    Ok(train.subset(&kept))
}

/// One one-versus-rest task per class of `dist`: that class's examples
/// against everything else in the same distribution sample.
pub fn build_tasks(dist: &Dataset) -> Result<Vec<BinaryTask>> {
    if dist.n_classes() < 2 {
        return Err(Error::SingleClass);
    }
    let mut tasks = Vec::with_capacity(dist.n_classes());
    for (&class, positives) in dist.class_index() {
        let negatives: Vec<usize> = (0..dist.len())
            .filter(|&idx| dist.examples()[idx].class_id != class)
            .collect();
        tasks.push(BinaryTask {
            task_id: TaskId::original(dist.source(), class),
            positives: positives.clone(),
            negatives,
        });
    }
    Ok(tasks)
}

/// Sparse mean vector of every class in `dist`.
pub fn compute_centroids(dist: &Dataset) -> Vec<Centroid> {
    dist.class_index()
        .iter()
        .map(|(&class, indices)| {
            let vector = SparseVector::mean(
                indices.iter().map(|&idx| &dist.examples()[idx].features),
            );
            Centroid {
                class_id: class,
                source: dist.source(),
                vector,
            }
        })
        .collect()
}

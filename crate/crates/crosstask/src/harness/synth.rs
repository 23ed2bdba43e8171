//! Synthetic dual corpus.
//!
//! Stands in for the archival datasets: every class of S1 shares a latent
//! topic with exactly one class of S2 (same class id), and `topic_overlap`
//! controls how much of each document is drawn from the shared topic rather
//! than a source-specific one. Documents are bags of token counts: sparse,
//! non-negative, and deterministic given the seed.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Example, Source};
use crate::error::{Error, Result};
use crate::seeding;
use crate::sparse::SparseVector;

/// Fraction of tokens drawn from a vocabulary-wide Zipf background shared by
/// every class; these collisions keep the per-class signal weak enough that
/// models trained on few examples stay imperfect.
const BACKGROUND_RATE: f64 = 0.55;
const DOC_LEN_MIN: usize = 14;
const DOC_LEN_MAX: usize = 24;

struct Topic {
    features: Vec<u32>,
    cumulative: Vec<f64>,
    total: f64,
}

impl Topic {
    fn from_weights(features: Vec<u32>, weights: impl Iterator<Item = f64>) -> Topic {
        let mut cumulative = Vec::with_capacity(features.len());
        let mut total = 0.0;
        for w in weights {
            total += w;
            cumulative.push(total);
        }
        debug_assert_eq!(cumulative.len(), features.len());
        Topic {
            features,
            cumulative,
            total,
        }
    }

    /// Support drawn from the first `pool` feature ids. Keeping the pool much
    /// smaller than the vocabulary makes different classes collide on their
    /// signal features, so telling them apart needs calibrated weights rather
    /// than the mere presence of a feature.
    fn draw(rng: &mut ChaCha8Rng, pool: usize, support: usize) -> Topic {
        let features: Vec<u32> = rand::seq::index::sample(rng, pool, support)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        let weights: Vec<f64> = (0..support).map(|_| 0.5 + rng.random::<f64>()).collect();
        Topic::from_weights(features, weights.into_iter())
    }

    fn zipf_background(dim: usize) -> Topic {
        let features: Vec<u32> = (0..dim as u32).collect();
        Topic::from_weights(features, (0..dim).map(|j| 1.0 / (j as f64 + 10.0)))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        let u = rng.random::<f64>() * self.total;
        let pos = self.cumulative.partition_point(|&c| c < u);
        self.features[pos.min(self.features.len() - 1)]
    }
}

/// Generates the paired corpora. Class `c` of S1 and class `c` of S2 share a
/// topic; `topic_overlap` = 1 makes paired classes identically distributed,
/// 0 makes them unrelated.
pub fn generate_synthetic_dual_corpus(
    n_classes: usize,
    examples_per_class: usize,
    dim: usize,
    topic_overlap: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_classes == 0 || examples_per_class == 0 {
        return Err(Error::Config(
            "n_classes and examples_per_class must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&topic_overlap) {
        return Err(Error::Config("topic_overlap must lie in [0, 1]".into()));
    }
    if dim < 4 * n_classes {
        return Err(Error::Config(format!(
            "dim {dim} too small for {n_classes} classes (need at least {})",
            4 * n_classes
        )));
    }

    let support = (dim / (2 * n_classes)).clamp(4, 50);
    let pool = (support * 4).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &[seeding::TAG_SYNTH]));

    let background = Topic::zipf_background(dim);
    let mut shared = Vec::with_capacity(n_classes);
    let mut own_s1 = Vec::with_capacity(n_classes);
    let mut own_s2 = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        shared.push(Topic::draw(&mut rng, pool, support));
        own_s1.push(Topic::draw(&mut rng, pool, support));
        own_s2.push(Topic::draw(&mut rng, pool, support));
    }

    let mut corpora = Vec::with_capacity(2);
    for source in [Source::S1, Source::S2] {
        let own = if source == Source::S1 {
            &own_s1
        } else {
            &own_s2
        };
        let mut examples = Vec::with_capacity(n_classes * examples_per_class);
        for class in 0..n_classes {
            for _ in 0..examples_per_class {
                let len = rng.random_range(DOC_LEN_MIN..=DOC_LEN_MAX);
                let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
                for _ in 0..len {
                    let feature = if rng.random::<f64>() < BACKGROUND_RATE {
                        background.sample(&mut rng)
                    } else if rng.random::<f64>() < topic_overlap {
                        shared[class].sample(&mut rng)
                    } else {
                        own[class].sample(&mut rng)
                    };
                    *counts.entry(feature).or_insert(0.0) += 1.0;
                }
                examples.push(Example {
                    features: SparseVector::new(counts.into_iter().collect())
                        .expect("counts are finite and unique"),
                    class_id: class as u32,
                });
            }
        }
        corpora.push(Dataset::new(source, examples));
    }

    let s2 = corpora.pop().unwrap();
    let s1 = corpora.pop().unwrap();
    Ok((s1, s2))
}

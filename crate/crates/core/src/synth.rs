//! Seeded synthetic datasets: Gaussian sense clusters around orthonormal
//! centroids, in two independent embedding spaces.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Dataset, Period, SenseEntry, Span, TargetWordRecord, Usage};
use crate::error::{Error, Result};
use crate::geometry::{gloss_key, EmbeddingKind, EmbeddingTable};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_words: usize,
    /// New usages per word.
    pub new_usages: usize,
    pub old_senses: usize,
    pub gained_senses: usize,
    /// Old usages per old sense, drawn uniformly from this inclusive range.
    pub old_per_sense: (usize, usize),
    pub dim: usize,
    /// Per-coordinate noise standard deviation around unit centroids.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_words: 50,
            new_usages: 40,
            old_senses: 2,
            gained_senses: 2,
            old_per_sense: (3, 8),
            dim: 64,
            noise: 0.025,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    /// Stands in for the fine-tuned space.
    pub space_a: EmbeddingTable,
    /// Stands in for the base space.
    pub space_b: EmbeddingTable,
}

/// `n` orthonormal vectors via Gram-Schmidt on Gaussian draws.
pub fn orthonormal_centroids<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n > dim {
        return Err(Error::invalid(format!("cannot fit {n} orthonormal centroids in dim {dim}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Ok(basis)
}

fn jitter<R: Rng>(centroid: &[f64], noise: &Normal<f64>, rng: &mut R) -> Vec<f64> {
    centroid.iter().map(|c| c + noise.sample(rng)).collect()
}

/// Generate a dataset where every new usage carries its gold sense. Old
/// senses come first in each word's inventory; gained senses are glossed but
/// only appear among new usages.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let n_senses = cfg.old_senses + cfg.gained_senses;
    if cfg.old_senses == 0 || cfg.old_per_sense.0 == 0 || cfg.old_per_sense.0 > cfg.old_per_sense.1 {
        return Err(Error::invalid("need at least one old sense with at least one usage"));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::invalid(format!("bad noise level {}", cfg.noise)));
    }
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut space_a = EmbeddingTable::new("synth-a", cfg.dim)?;
    let mut space_b = EmbeddingTable::new("synth-b", cfg.dim)?;
    let mut words = Vec::with_capacity(cfg.n_words);

    for w in 0..cfg.n_words {
        let lemma = format!("w{w:04}");
        let centroids_a = orthonormal_centroids(n_senses, cfg.dim, &mut rng)?;
        let centroids_b = orthonormal_centroids(n_senses, cfg.dim, &mut rng)?;
        let sense_ids: Vec<String> =
            (0..n_senses)
                .map(|s| {
                    if s < cfg.old_senses {
                        format!("{lemma}.o{s}")
                    } else {
                        format!("{lemma}.g{}", s - cfg.old_senses)
                    }
                })
                .collect();

        let entry = |s: usize| SenseEntry {
            sense_id: sense_ids[s].clone(),
            word: lemma.clone(),
            gloss: format!("meaning {s} of {lemma}"),
            period_of_record: if s < cfg.old_senses { Period::Old } else { Period::New },
        };
        let usage = |id: String, period: Period, sense: usize| {
            let text = format!("a {lemma} here");
            Usage {
                usage_id: id,
                word: lemma.clone(),
                period,
                span: Some(Span { start: 2, end: 2 + lemma.chars().count() }),
                text,
                gold_sense: Some(sense_ids[sense].clone()),
            }
        };

        for (s, id) in sense_ids.iter().enumerate() {
            space_a.insert(EmbeddingKind::Gloss, gloss_key(&lemma, id), jitter(&centroids_a[s], &noise, &mut rng))?;
            space_b.insert(EmbeddingKind::Gloss, gloss_key(&lemma, id), jitter(&centroids_b[s], &noise, &mut rng))?;
        }

        let mut old_usages = Vec::new();
        for s in 0..cfg.old_senses {
            for _ in 0..rng.gen_range(cfg.old_per_sense.0..=cfg.old_per_sense.1) {
                old_usages.push(usage(format!("{lemma}.old{:03}", old_usages.len()), Period::Old, s));
            }
        }
        // Every sense gets at least one new usage; the rest are spread at random.
        let mut new_senses: Vec<usize> = (0..n_senses.min(cfg.new_usages)).collect();
        while new_senses.len() < cfg.new_usages {
            new_senses.push(rng.gen_range(0..n_senses));
        }
        new_senses.shuffle(&mut rng);
        let new_usages: Vec<Usage> =
            new_senses.iter().enumerate().map(|(j, &s)| usage(format!("{lemma}.new{j:03}"), Period::New, s)).collect();

        let sense_of = |u: &Usage| sense_ids.iter().position(|id| Some(id) == u.gold_sense.as_ref()).unwrap();
        for u in old_usages.iter().chain(&new_usages) {
            let s = sense_of(u);
            space_a.insert(EmbeddingKind::Usage, u.usage_id.clone(), jitter(&centroids_a[s], &noise, &mut rng))?;
            space_b.insert(EmbeddingKind::Usage, u.usage_id.clone(), jitter(&centroids_b[s], &noise, &mut rng))?;
        }

        words.push(TargetWordRecord {
            word: lemma.clone(),
            old_usages,
            new_usages,
            old_senses: (0..cfg.old_senses).map(entry).collect(),
            gained_senses: (cfg.old_senses..n_senses).map(entry).collect(),
        });
    }
    Ok(SynthData { dataset: Dataset { words }, space_a, space_b })
}

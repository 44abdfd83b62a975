//! Seeded synthetic corpora with a known response distribution per trial.
//!
//! Every vocabulary word gets a fixed neighbourhood of confusable words,
//! drawn with Zipf-like popularity weights. A trial picks a spoken word,
//! takes a support of 2–6 words (the spoken word plus neighbours), draws a
//! true distribution over that support from a symmetric Dirichlet and
//! samples `m` listener responses from it. Response distributions therefore
//! depend on the spoken word, and popular words are over-represented in the
//! marginal response distribution.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{normalize_response, Corpus, MaskerType, Response, ResponseSet, Trial};
use crate::error::{Error, Result};

const NEIGHBOURS_PER_WORD: usize = 8;
const MIN_SUPPORT: usize = 2;
const MAX_SUPPORT: usize = 6;

/// Common short English words, the default synthetic vocabulary.
pub const DEFAULT_VOCABULARY: &[&str] = &[
    "bat", "bad", "pat", "pad", "cat", "cap", "cab", "back", "bag", "tap", "map", "mat", "man", "men", "pen", "pin",
    "bin", "bit", "big", "pig", "dig", "dog", "log", "lock", "rock", "rod", "road", "rode", "read", "red", "bed",
    "bet", "bear", "bare", "there", "their", "hair", "here", "hear", "near", "fear", "few", "view", "shoe", "show",
    "so", "sew", "sea", "see", "tea", "key", "knee", "need", "feed", "seed", "sit", "set", "sat", "fat", "fit", "fill",
    "feel", "deal", "meal",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_trials: usize,
    pub vocab: Vec<String>,
    /// Listeners per trial, `m`.
    pub listeners: u32,
    /// Symmetric Dirichlet concentration; small values give peaked distributions.
    pub concentration: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(num_trials: usize, listeners: u32, concentration: f64, seed: u64) -> Self {
        Self {
            num_trials,
            vocab: DEFAULT_VOCABULARY.iter().map(|w| w.to_string()).collect(),
            listeners,
            concentration,
            seed,
        }
    }
}

/// True response distribution of each synthetic trial, in support order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthModel {
    distributions: BTreeMap<String, Vec<(String, f64)>>,
}

impl GroundTruthModel {
    pub fn distribution(&self, trial_id: &str) -> Option<&[(String, f64)]> {
        self.distributions.get(trial_id).map(Vec::as_slice)
    }

    pub fn prob(&self, trial_id: &str, word: &str) -> f64 {
        self.distribution(trial_id).and_then(|d| d.iter().find(|(w, _)| w == word)).map_or(0.0, |(_, p)| *p)
    }

    pub fn len(&self) -> usize {
        self.distributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distributions.is_empty()
    }
}

/// Weighted sampling without replacement (Efraimidis–Spirakis keys).
fn weighted_sample<R: Rng>(rng: &mut R, items: &[usize], weights: &[f64], k: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = items
        .iter()
        .zip(weights)
        .map(|(&item, &w)| {
            let u: f64 = rng.random();
            (u.ln() / w, item)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, item)| item).collect()
}

/// Dirichlet draw computed in log space so tiny concentrations do not
/// underflow: `ln G(a) = ln G(a + 1) + ln(U) / a`.
fn dirichlet<R: Rng>(rng: &mut R, gamma: &Gamma<f64>, concentration: f64, k: usize) -> Vec<f64> {
    loop {
        let logs: Vec<f64> = (0..k)
            .map(|_| {
                let g = gamma.sample(rng);
                let u: f64 = 1.0 - rng.random::<f64>();
                g.ln() + u.ln() / concentration
            })
            .collect();
        let lse = crate::scalar::log_sum_exp(&logs);
        let probs: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
        if probs.iter().all(|p| *p > 0.0 && p.is_finite()) {
            let total: f64 = probs.iter().sum();
            return probs.into_iter().map(|p| p / total).collect();
        }
    }
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Corpus, GroundTruthModel)> {
    if cfg.vocab.is_empty() {
        return Err(Error::Config("synthetic vocabulary is empty".into()));
    }
    if cfg.listeners == 0 {
        return Err(Error::Config("listener count must be at least 1".into()));
    }
    if !(cfg.concentration.is_finite() && cfg.concentration > 0.0) {
        return Err(Error::Config(format!("concentration must be positive, got {}", cfg.concentration)));
    }
    let mut vocab = Vec::with_capacity(cfg.vocab.len());
    let mut seen = HashSet::new();
    for w in &cfg.vocab {
        let w = normalize_response(w)?;
        if !seen.insert(w.clone()) {
            return Err(Error::Config(format!("vocabulary word {w:?} is repeated")));
        }
        vocab.push(w);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gamma = Gamma::new(cfg.concentration + 1.0, 1.0).map_err(|e| Error::Config(format!("concentration: {e}")))?;
    let popularity: Vec<f64> = (0..vocab.len()).map(|i| 1.0 / (i as f64 + 1.0)).collect();

    let neighbours: Vec<Vec<usize>> = (0..vocab.len())
        .map(|i| {
            let others: Vec<usize> = (0..vocab.len()).filter(|&j| j != i).collect();
            let weights: Vec<f64> = others.iter().map(|&j| popularity[j]).collect();
            weighted_sample(&mut rng, &others, &weights, NEIGHBOURS_PER_WORD)
        })
        .collect();

    let maskers = [MaskerType::Ssn, MaskerType::Bab4, MaskerType::Bmn3];
    let width = cfg.num_trials.saturating_sub(1).to_string().len().max(5);
    let mut trials = Vec::with_capacity(cfg.num_trials);
    let mut truth = GroundTruthModel::default();
    for t in 0..cfg.num_trials {
        let spoken = rng.random_range(0..vocab.len());
        let near = &neighbours[spoken];
        let max_support = MAX_SUPPORT.min(near.len() + 1);
        let size = rng.random_range(MIN_SUPPORT.min(max_support)..=max_support);
        let rank_weights: Vec<f64> = (0..near.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let mut support = vec![spoken];
        support.extend(weighted_sample(&mut rng, near, &rank_weights, size - 1));

        let probs = dirichlet(&mut rng, &gamma, cfg.concentration, support.len());
        let mut counts = vec![0u32; support.len()];
        for _ in 0..cfg.listeners {
            counts[categorical(&mut rng, &probs)] += 1;
        }
        let masker = maskers[rng.random_range(0..maskers.len())].clone();

        let id = format!("syn-{t:0width$}");
        let entries = support
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&w, &count)| Response { word: vocab[w].clone(), count })
            .collect();
        let responses = ResponseSet::new(entries, cfg.listeners)
            .map_err(|message| Error::Validation { trial: id.clone(), message })?;
        truth
            .distributions
            .insert(id.clone(), support.iter().zip(&probs).map(|(&w, &p)| (vocab[w].clone(), p)).collect());
        trials.push(Trial { id, spoken_word: vocab[spoken].clone(), masker, responses, audio: None });
    }
    Ok((Corpus::new(trials)?, truth))
}

#[derive(Serialize, Deserialize)]
struct WordProb {
    word: String,
    prob: f64,
}

#[derive(Serialize, Deserialize)]
struct TruthLine {
    id: String,
    probs: Vec<WordProb>,
}

/// Writes `{"id":…,"probs":[{"word":…,"prob":…}]}` lines in corpus order.
pub fn write_ground_truth(corpus: &Corpus, truth: &GroundTruthModel, mut out: impl Write) -> Result<()> {
    for t in corpus.trials() {
        let dist = truth.distribution(&t.id).ok_or_else(|| Error::MissingPrediction(vec![t.id.clone()]))?;
        let line = TruthLine {
            id: t.id.clone(),
            probs: dist.iter().map(|(w, p)| WordProb { word: w.clone(), prob: *p }).collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ground_truth(reader: impl BufRead) -> Result<GroundTruthModel> {
    let mut truth = GroundTruthModel::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TruthLine =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        let total: f64 = parsed.probs.iter().map(|wp| wp.prob).sum();
        if parsed.probs.iter().any(|wp| wp.prob <= 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation { trial: parsed.id, message: "ground truth is not a distribution".into() });
        }
        truth.distributions.insert(parsed.id, parsed.probs.into_iter().map(|wp| (wp.word, wp.prob)).collect());
    }
    Ok(truth)
}

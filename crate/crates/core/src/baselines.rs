//! Reference models: uniform random, stimulus-independent multinomial and
//! the relative-frequency oracle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Trial};
use crate::error::{contract, Error, Result};
use crate::predictions::{CandidateScore, PredictionSet, ResponseModel, DEFAULT_FLOOR};

/// Sorted, distinct responses observed in `corpus`.
pub fn response_vocabulary(corpus: &Corpus) -> Vec<String> {
    let words: BTreeSet<&str> = corpus.trials().iter().flat_map(|t| t.responses.words()).collect();
    words.into_iter().map(str::to_string).collect()
}

/// Every word equally likely: `p = 1 / |V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomModel {
    vocab_size: usize,
    vocabulary: Vec<String>,
}

impl RandomModel {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Config("random baseline needs a vocabulary of at least one word".into()));
        }
        Ok(Self { vocab_size, vocabulary: Vec::new() })
    }

    /// Uniform over the corpus response vocabulary, whose words also serve
    /// as extra ranked candidates.
    pub fn from_corpus(corpus: &Corpus) -> Result<Self> {
        let vocabulary = response_vocabulary(corpus);
        let mut model = Self::new(vocabulary.len())?;
        model.vocabulary = vocabulary;
        Ok(model)
    }

    /// Keeps the candidate words but assumes a different `|V|`.
    pub fn with_vocab_size(self, vocab_size: usize) -> Result<Self> {
        Ok(Self { vocabulary: self.vocabulary, ..Self::new(vocab_size)? })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn prob(&self, _word: &str) -> f64 {
        1.0 / self.vocab_size as f64
    }
}

impl ResponseModel for RandomModel {
    fn name(&self) -> &str {
        "random"
    }

    /// Observed responses plus vocabulary words, at most `|V|` candidates in
    /// total so the listed mass never exceeds one.
    fn predict(&self, trial: &Trial) -> PredictionSet {
        let mut words: BTreeSet<&str> = trial.responses.words().collect();
        for w in &self.vocabulary {
            if words.len() >= self.vocab_size {
                break;
            }
            words.insert(w);
        }
        let lp = self.prob("").ln();
        let mut set = PredictionSet::new(
            trial.id.clone(),
            self.name(),
            words.iter().map(|w| CandidateScore::new(*w, lp)).collect(),
        );
        set.renormalized = words.len() == self.vocab_size;
        set
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialFit {
    pub probabilities: BTreeMap<String, f64>,
    pub alpha: f64,
    pub vocab_size: usize,
}

/// Pooled response distribution of `train`, add-`alpha` smoothed over its
/// response vocabulary.
pub fn fit_multinomial(train: &Corpus, alpha: f64) -> Result<MultinomialFit> {
    if train.is_empty() {
        return Err(contract("multinomial baseline needs a non-empty training corpus"));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Config(format!("smoothing alpha must be non-negative, got {alpha}")));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in train.trials() {
        for r in t.responses.entries() {
            *counts.entry(r.word.clone()).or_default() += u64::from(r.count);
        }
    }
    let total: u64 = counts.values().sum();
    let vocab_size = counts.len();
    let denom = total as f64 + alpha * vocab_size as f64;
    let probabilities = counts.into_iter().map(|(w, c)| (w, (c as f64 + alpha) / denom)).collect();
    Ok(MultinomialFit { probabilities, alpha, vocab_size })
}

impl MultinomialFit {
    /// Fitted probability, or `floor` for words outside the fit vocabulary.
    pub fn lookup(&self, word: &str, floor: f64) -> f64 {
        self.probabilities.get(word).copied().unwrap_or(floor)
    }
}

impl ResponseModel for MultinomialFit {
    fn name(&self) -> &str {
        "multinomial"
    }

    /// Emits the whole fit vocabulary; observed responses outside it are
    /// scored at the default floor so every response has an entry.
    fn predict(&self, trial: &Trial) -> PredictionSet {
        let mut candidates: Vec<CandidateScore> =
            self.probabilities.iter().map(|(w, p)| CandidateScore::new(w.clone(), p.ln())).collect();
        candidates.extend(
            trial
                .responses
                .words()
                .filter(|w| !self.probabilities.contains_key(*w))
                .map(|w| CandidateScore::new(w, DEFAULT_FLOOR.ln())),
        );
        let mut set = PredictionSet::new(trial.id.clone(), self.name(), candidates);
        set.renormalized = true;
        set
    }
}

/// Predicts each trial's observed relative frequencies.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleModel;

pub fn oracle_model(trial: &Trial) -> PredictionSet {
    let m = f64::from(trial.responses.listeners());
    let mut set = PredictionSet::new(
        trial.id.clone(),
        "oracle",
        trial
            .responses
            .entries()
            .iter()
            .map(|r| CandidateScore::new(r.word.clone(), (f64::from(r.count) / m).ln()))
            .collect(),
    );
    set.renormalized = true;
    set
}

impl ResponseModel for OracleModel {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, trial: &Trial) -> PredictionSet {
        oracle_model(trial)
    }
}

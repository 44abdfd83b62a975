//! Desk-scale response model: a log-linear softmax over a closed response
//! vocabulary, trainable under the two fine-tuning objectives.
//!
//! * `PredTop`: cross-entropy against the trial's top response.
//! * `PredAll`: `Σ_j |log p_j − log(k_j / Σk)|` over the observed
//!   responses, pulling every response's likelihood toward its relative
//!   frequency.
//!
//! Gradients are analytic. Through the log-softmax, `∂ log p_j / ∂z_v =
//! δ_jv − p_v`, so for `PredAll` with `s_j = sign(log p_j − log f_j)`
//! (zero at equality) the logit gradient is `s_v − p_v Σ_j s_j`, and for
//! `PredTop` it is `p − onehot(top)`.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ResponseSet, Trial};
use crate::error::{contract, Error, Result};
use crate::lexicon::{PronLexicon, ARPABET};
use crate::predictions::{CandidateScore, PredictionSet, PredictionTable, DEFAULT_FLOOR};
use crate::scalar::{log_sum_exp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Predict the most common response.
    PredTop,
    /// Match the full response distribution.
    PredAll,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "pred_top" => Ok(Objective::PredTop),
            "pred_all" => Ok(Objective::PredAll),
            _ => Err(Error::Config(format!("unknown objective {s:?} (pred-top or pred-all)"))),
        }
    }
}

/// Which inputs the model sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    OneHotTrialId,
    OneHotSpoken,
    BagOfPhonemes,
    Concatenation { parts: Vec<FeatureSpec> },
}

impl std::str::FromStr for FeatureSpec {
    type Err = Error;

    /// `one-hot-trial-id`, `one-hot-spoken`, `bag-of-phonemes`, or several
    /// joined with `+`.
    fn from_str(s: &str) -> Result<Self> {
        let one = |p: &str| match p.trim().replace('_', "-").as_str() {
            "one-hot-trial-id" => Ok(FeatureSpec::OneHotTrialId),
            "one-hot-spoken" => Ok(FeatureSpec::OneHotSpoken),
            "bag-of-phonemes" => Ok(FeatureSpec::BagOfPhonemes),
            other => Err(Error::Config(format!("unknown feature kind {other:?}"))),
        };
        let parts: Vec<&str> = s.split('+').collect();
        if parts.len() == 1 {
            one(parts[0])
        } else {
            Ok(FeatureSpec::Concatenation { parts: parts.into_iter().map(one).collect::<Result<_>>()? })
        }
    }
}

/// A [`FeatureSpec`] bound to the index tables of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    /// Indicator of training trial ids; other trials map to zeros.
    OneHotTrialId {
        ids: Vec<String>,
    },
    OneHotSpoken {
        words: Vec<String>,
    },
    /// Phoneme counts of the spoken word's first pronunciation plus an
    /// out-of-lexicon indicator.
    BagOfPhonemes,
    Concatenation {
        parts: Vec<Featurizer>,
    },
}

impl Featurizer {
    /// One-hot trial ids come from `train`; spoken words from `all`.
    pub fn fit(spec: &FeatureSpec, train: &[&Trial], all: &Corpus) -> Featurizer {
        match spec {
            FeatureSpec::OneHotTrialId => {
                let ids: BTreeSet<&str> = train.iter().map(|t| t.id.as_str()).collect();
                Featurizer::OneHotTrialId { ids: ids.into_iter().map(str::to_string).collect() }
            }
            FeatureSpec::OneHotSpoken => {
                let words: BTreeSet<&str> = all.trials().iter().map(|t| t.spoken_word.as_str()).collect();
                Featurizer::OneHotSpoken { words: words.into_iter().map(str::to_string).collect() }
            }
            FeatureSpec::BagOfPhonemes => Featurizer::BagOfPhonemes,
            FeatureSpec::Concatenation { parts } => {
                Featurizer::Concatenation { parts: parts.iter().map(|p| Featurizer::fit(p, train, all)).collect() }
            }
        }
    }

    pub fn spec(&self) -> FeatureSpec {
        match self {
            Featurizer::OneHotTrialId { .. } => FeatureSpec::OneHotTrialId,
            Featurizer::OneHotSpoken { .. } => FeatureSpec::OneHotSpoken,
            Featurizer::BagOfPhonemes => FeatureSpec::BagOfPhonemes,
            Featurizer::Concatenation { parts } => {
                FeatureSpec::Concatenation { parts: parts.iter().map(Featurizer::spec).collect() }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Featurizer::OneHotTrialId { ids } => ids.len(),
            Featurizer::OneHotSpoken { words } => words.len(),
            Featurizer::BagOfPhonemes => ARPABET.len() + 1,
            Featurizer::Concatenation { parts } => parts.iter().map(Featurizer::dim).sum(),
        }
    }

    pub fn needs_lexicon(&self) -> bool {
        match self {
            Featurizer::BagOfPhonemes => true,
            Featurizer::Concatenation { parts } => parts.iter().any(Featurizer::needs_lexicon),
            _ => false,
        }
    }

    fn fill<T: Scalar>(&self, trial: &Trial, lexicon: Option<&PronLexicon>, out: &mut Vec<T>) -> Result<()> {
        let start = out.len();
        out.resize(start + self.dim(), T::zero());
        let slot = &mut out[start..];
        match self {
            Featurizer::OneHotTrialId { ids } => {
                if let Ok(i) = ids.binary_search(&trial.id) {
                    slot[i] = T::one();
                }
            }
            Featurizer::OneHotSpoken { words } => {
                if let Ok(i) = words.binary_search(&trial.spoken_word) {
                    slot[i] = T::one();
                }
            }
            Featurizer::BagOfPhonemes => {
                let lexicon = lexicon.ok_or_else(|| Error::Config("bag-of-phonemes features need a lexicon".into()))?;
                match lexicon.pronunciations(&trial.spoken_word) {
                    Some(prons) => {
                        for phone in prons[0].phones() {
                            let i = ARPABET.iter().position(|p| *p == phone.base()).expect("parsed phones are ARPAbet");
                            slot[i] = slot[i] + T::one();
                        }
                    }
                    None => slot[ARPABET.len()] = T::one(),
                }
            }
            Featurizer::Concatenation { parts } => {
                out.truncate(start);
                for p in parts {
                    p.fill(trial, lexicon, out)?;
                }
            }
        }
        Ok(())
    }

    pub fn features<T: Scalar>(&self, trial: &Trial, lexicon: Option<&PronLexicon>) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.dim());
        self.fill(trial, lexicon, &mut out)?;
        Ok(out)
    }
}

/// Weights of the log-linear response head. `weights` is row-major
/// `feature_dim × |vocab|`; `vocab` is sorted and distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ToyParams<T> {
    pub vocab: Vec<String>,
    pub feature_spec: Featurizer,
    #[serde(rename = "W")]
    pub weights: Vec<T>,
    #[serde(rename = "b")]
    pub bias: Vec<T>,
}

/// Gradient with the same layout as [`ToyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Gradient<T> {
    pub fn zeros_like(params: &ToyParams<T>) -> Self {
        Self { weights: vec![T::zero(); params.weights.len()], bias: vec![T::zero(); params.bias.len()] }
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &Gradient<T>, scale: T) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a = *a + scale * *b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a = *a + scale * *b;
        }
    }
}

/// Closed response vocabulary: train responses plus every spoken word.
pub fn closed_vocabulary(train: &[&Trial], all: &Corpus) -> Vec<String> {
    let mut words: BTreeSet<&str> = train.iter().flat_map(|t| t.responses.words()).collect();
    words.extend(all.trials().iter().map(|t| t.spoken_word.as_str()));
    words.into_iter().map(str::to_string).collect()
}

impl<T: Scalar> ToyParams<T> {
    pub fn zeros(vocab: Vec<String>, feature_spec: Featurizer) -> Result<Self> {
        let dim = feature_spec.dim();
        let params = Self {
            weights: vec![T::zero(); dim * vocab.len()],
            bias: vec![T::zero(); vocab.len()],
            vocab,
            feature_spec,
        };
        params.check()?;
        Ok(params)
    }

    /// Gaussian initialisation with standard deviation `scale`.
    pub fn random<R: Rng>(vocab: Vec<String>, feature_spec: Featurizer, scale: f64, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(vocab, feature_spec)?;
        if scale > 0.0 {
            let normal = Normal::new(0.0, scale).map_err(|e| Error::Config(e.to_string()))?;
            for w in params.weights.iter_mut().chain(params.bias.iter_mut()) {
                *w = T::of(normal.sample(rng));
            }
        }
        Ok(params)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_spec.dim()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.vocab.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }

    /// Shape, ordering and finiteness invariants.
    pub fn check(&self) -> Result<()> {
        if self.vocab.is_empty() {
            return Err(Error::Config("model vocabulary is empty".into()));
        }
        if self.vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("model vocabulary must be sorted and distinct".into()));
        }
        if self.weights.len() != self.feature_dim() * self.vocab.len() || self.bias.len() != self.vocab.len() {
            return Err(Error::Config(format!(
                "parameter shapes W={} b={} do not match {} features × {} words",
                self.weights.len(),
                self.bias.len(),
                self.feature_dim(),
                self.vocab.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::Numerics("non-finite model parameter".into()));
        }
        Ok(())
    }

    pub fn logits(&self, features: &[T]) -> Result<Vec<T>> {
        if features.len() != self.feature_dim() {
            return Err(contract(format!("{} features given, model expects {}", features.len(), self.feature_dim())));
        }
        let v = self.vocab.len();
        let mut z = self.bias.clone();
        for (f, &x) in features.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (zj, &w) in z.iter_mut().zip(&self.weights[f * v..(f + 1) * v]) {
                *zj = *zj + x * w;
            }
        }
        Ok(z)
    }
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&z| z - lse).collect()
}

/// Log-probabilities over the vocabulary.
pub fn forward<T: Scalar>(params: &ToyParams<T>, features: &[T]) -> Result<Vec<T>> {
    let logits = params.logits(features)?;
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerics("logit overflowed to a non-finite value".into()));
    }
    Ok(log_softmax(&logits))
}

fn vocab_index<T: Scalar>(params: &ToyParams<T>, word: &str) -> Result<usize> {
    params.index_of(word).ok_or_else(|| Error::Vocab(word.to_string()))
}

/// Per-trial distribution-matching loss.
pub fn loss_pred_all<T: Scalar>(pred_logprobs: &[T], responses: &ResponseSet, params: &ToyParams<T>) -> Result<T> {
    let total = T::of(f64::from(responses.counts().iter().sum::<u32>()));
    let mut loss = T::zero();
    for r in responses.entries() {
        let i = vocab_index(params, &r.word)?;
        let target = (T::of(f64::from(r.count)) / total).ln();
        loss = loss + (pred_logprobs[i] - target).abs();
    }
    Ok(loss)
}

/// Cross-entropy against `top_response`, with the probability clamped below
/// at the default evaluation floor.
pub fn loss_pred_top<T: Scalar>(pred_logprobs: &[T], top_response: &str, params: &ToyParams<T>) -> Result<T> {
    let i = vocab_index(params, top_response)?;
    Ok(-pred_logprobs[i].max(T::of(DEFAULT_FLOOR.ln())))
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Loss and its gradient with respect to the logits.
pub fn loss_and_logit_grad<T: Scalar>(
    params: &ToyParams<T>,
    logprobs: &[T],
    responses: &ResponseSet,
    objective: Objective,
) -> Result<(T, Vec<T>)> {
    let probs: Vec<T> = logprobs.iter().map(|lp| lp.exp()).collect();
    match objective {
        Objective::PredTop => {
            let top = responses.top_response();
            let loss = loss_pred_top(logprobs, top, params)?;
            let i = vocab_index(params, top)?;
            if logprobs[i] < T::of(DEFAULT_FLOOR.ln()) {
                return Ok((loss, vec![T::zero(); probs.len()]));
            }
            let mut g = probs;
            g[i] = g[i] - T::one();
            Ok((loss, g))
        }
        Objective::PredAll => {
            let loss = loss_pred_all(logprobs, responses, params)?;
            let total = T::of(f64::from(responses.counts().iter().sum::<u32>()));
            let mut own = vec![T::zero(); probs.len()];
            let mut sign_sum = T::zero();
            for r in responses.entries() {
                let i = vocab_index(params, &r.word)?;
                let s = sign(logprobs[i] - (T::of(f64::from(r.count)) / total).ln());
                own[i] = own[i] + s;
                sign_sum = sign_sum + s;
            }
            let g = own.iter().zip(&probs).map(|(&s, &p)| s - p * sign_sum).collect();
            Ok((loss, g))
        }
    }
}

/// Loss and exact parameter gradient for one trial.
pub fn backward<T: Scalar>(
    params: &ToyParams<T>,
    features: &[T],
    responses: &ResponseSet,
    objective: Objective,
) -> Result<(T, Gradient<T>)> {
    let logprobs = forward(params, features)?;
    let (loss, dz) = loss_and_logit_grad(params, &logprobs, responses, objective)?;
    let v = params.vocab_size();
    let mut grad = Gradient { weights: vec![T::zero(); params.weights.len()], bias: dz.clone() };
    for (f, &x) in features.iter().enumerate() {
        if x == T::zero() {
            continue;
        }
        for (gw, &g) in grad.weights[f * v..(f + 1) * v].iter_mut().zip(&dz) {
            *gw = x * g;
        }
    }
    Ok((loss, grad))
}

/// Every vocabulary word with its model log-probability.
pub fn predict_set<T: Scalar>(
    params: &ToyParams<T>,
    trial: &Trial,
    lexicon: Option<&PronLexicon>,
) -> Result<PredictionSet> {
    let features = params.feature_spec.features::<T>(trial, lexicon)?;
    let logprobs = forward(params, &features)?;
    let candidates = params
        .vocab
        .iter()
        .zip(logprobs)
        .map(|(w, lp)| CandidateScore::new(w.clone(), lp.to_f64_lossy().min(0.0)))
        .collect();
    let mut set = PredictionSet::new(trial.id.clone(), "toy", candidates);
    set.renormalized = true;
    Ok(set)
}

pub fn predict_table<'a, T: Scalar>(
    params: &ToyParams<T>,
    trials: impl IntoIterator<Item = &'a Trial>,
    lexicon: Option<&PronLexicon>,
) -> Result<PredictionTable> {
    let mut table = PredictionTable::default();
    for t in trials {
        table.insert(predict_set(params, t, lexicon)?)?;
    }
    Ok(table)
}

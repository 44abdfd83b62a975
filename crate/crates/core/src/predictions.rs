//! Model-agnostic prediction interchange.
//!
//! A [`PredictionSet`] carries the candidate responses a model scores for one
//! trial. Word scores are natural-log probabilities; when the model works on
//! subword tokens the per-token conditionals are summed into the word score.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_response;
use crate::error::{contract, Error, Result};
use crate::scalar::log_sum_exp;

/// Slack allowed on `logprob <= 0` and on token/word consistency.
pub const LOGPROB_SLACK: f64 = 1e-9;
/// Tolerance on total probability mass.
pub const MASS_TOLERANCE: f64 = 1e-6;
/// Probability assigned to responses a model does not score.
pub const DEFAULT_FLOOR: f64 = 1e-10;
pub const MAX_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub surface: String,
    pub logprob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

impl CandidateScore {
    pub fn new(surface: impl Into<String>, logprob: f64) -> Self {
        Self { surface: surface.into(), logprob, token_logprobs: None }
    }

    /// Candidate scored token by token; the word score is the chain-rule sum.
    pub fn from_tokens(surface: impl Into<String>, token_logprobs: Vec<f64>) -> Result<Self> {
        let logprob = aggregate_tokens(&token_logprobs)?;
        Ok(Self { surface: surface.into(), logprob, token_logprobs: Some(token_logprobs) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub trial_id: String,
    #[serde(rename = "model")]
    pub model_name: String,
    /// The candidate list is a full distribution (mass 1).
    pub renormalized: bool,
    pub candidates: Vec<CandidateScore>,
}

/// `log P(word) = Σ_t log p(token_t | tokens_<t)`.
pub fn aggregate_tokens(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(contract("token log-probability list is empty"));
    }
    if let Some(bad) = token_logprobs.iter().find(|lp| lp.is_nan() || **lp > LOGPROB_SLACK) {
        return Err(contract(format!("token log-probability {bad} is positive or NaN")));
    }
    Ok(token_logprobs.iter().sum())
}

fn by_score_then_surface(a: &CandidateScore, b: &CandidateScore) -> Ordering {
    b.logprob.total_cmp(&a.logprob).then_with(|| a.surface.cmp(&b.surface))
}

/// Folds surface variants (case, spacing, punctuation) into one candidate per
/// normalized surface, combining their probabilities. Output is sorted by
/// descending log-probability, ties by surface. Candidates whose surface
/// normalizes to nothing are dropped.
pub fn merge_variants(candidates: &[CandidateScore]) -> Vec<CandidateScore> {
    let mut groups: BTreeMap<String, Vec<&CandidateScore>> = BTreeMap::new();
    for c in candidates {
        if let Ok(key) = normalize_response(&c.surface) {
            groups.entry(key).or_default().push(c);
        }
    }
    let mut merged: Vec<CandidateScore> = groups
        .into_iter()
        .map(|(surface, group)| {
            if let [single] = group.as_slice() {
                CandidateScore { surface, ..(*single).clone() }
            } else {
                let lps: Vec<f64> = group.iter().map(|c| c.logprob).collect();
                CandidateScore { surface, logprob: log_sum_exp(&lps), token_logprobs: None }
            }
        })
        .collect();
    merged.sort_by(by_score_then_surface);
    merged
}

impl PredictionSet {
    pub fn new(trial_id: impl Into<String>, model_name: impl Into<String>, candidates: Vec<CandidateScore>) -> Self {
        Self { trial_id: trial_id.into(), model_name: model_name.into(), renormalized: false, candidates }
    }

    /// Same set with variants merged and candidates ranked.
    pub fn merged(&self) -> PredictionSet {
        PredictionSet { candidates: merge_variants(&self.candidates), ..self.clone() }
    }

    /// `ln Σ exp(logprob)` over the candidates.
    pub fn log_mass(&self) -> f64 {
        let lps: Vec<f64> = self.candidates.iter().map(|c| c.logprob).collect();
        log_sum_exp(&lps)
    }

    pub fn logprob_of(&self, surface: &str) -> Option<f64> {
        self.candidates.iter().find(|c| c.surface == surface).map(|c| c.logprob)
    }

    /// The `n` highest-ranked candidates; assumes the set is merged.
    pub fn top(&self, n: usize) -> &[CandidateScore] {
        &self.candidates[..n.min(self.candidates.len())]
    }
}

/// Probability of `response` under a merged prediction set.
///
/// Unscored responses get `floor`; scored ones are clamped below by it. With
/// `renormalize` the candidate list is treated as the whole support.
pub fn lookup_prob(preds: &PredictionSet, response: &str, floor: f64, renormalize: bool) -> f64 {
    match preds.logprob_of(response) {
        Some(lp) => {
            let lp = if renormalize { lp - preds.log_mass() } else { lp };
            lp.exp().min(1.0).max(floor)
        }
        None => floor,
    }
}

pub fn check_floor(floor: f64) -> Result<()> {
    if floor > 0.0 && floor <= MAX_FLOOR {
        Ok(())
    } else {
        Err(Error::Config(format!("probability floor must lie in (0, {MAX_FLOOR}], got {floor}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyTrialId,
    EmptySurface,
    NonFinite,
    PositiveLogprob,
    PositiveTokenLogprob,
    EmptyTokenList,
    TokenWordMismatch,
    MassExceedsOne,
    MassNotOne,
    DuplicateTrial,
    MissingTrial,
    MissingResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial_id: String,
    pub candidate: Option<usize>,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.candidate {
            Some(i) => write!(f, "{} candidate {}: {}", self.trial_id, i, self.message),
            None => write!(f, "{}: {}", self.trial_id, self.message),
        }
    }
}

/// All invariant violations of one set.
pub fn validate(preds: &PredictionSet) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut push = |candidate: Option<usize>, kind: ViolationKind, message: String| {
        out.push(Violation { trial_id: preds.trial_id.clone(), candidate, kind, message });
    };
    if preds.trial_id.is_empty() {
        push(None, ViolationKind::EmptyTrialId, "trial_id is empty".into());
    }
    for (i, c) in preds.candidates.iter().enumerate() {
        if normalize_response(&c.surface).is_err() {
            push(Some(i), ViolationKind::EmptySurface, format!("surface {:?} normalizes to nothing", c.surface));
        }
        if !c.logprob.is_finite() {
            push(Some(i), ViolationKind::NonFinite, format!("logprob {} is not finite", c.logprob));
            continue;
        }
        if c.logprob > LOGPROB_SLACK {
            push(Some(i), ViolationKind::PositiveLogprob, format!("logprob > 0 ({})", c.logprob));
        }
        if let Some(tokens) = &c.token_logprobs {
            if tokens.is_empty() {
                push(Some(i), ViolationKind::EmptyTokenList, "token_logprobs is empty".into());
            } else if tokens.iter().any(|t| !t.is_finite()) {
                push(Some(i), ViolationKind::NonFinite, "token log-probability is not finite".into());
            } else {
                if tokens.iter().any(|t| *t > LOGPROB_SLACK) {
                    push(Some(i), ViolationKind::PositiveTokenLogprob, "token logprob > 0".into());
                }
                let sum: f64 = tokens.iter().sum();
                if (sum - c.logprob).abs() > LOGPROB_SLACK {
                    push(
                        Some(i),
                        ViolationKind::TokenWordMismatch,
                        format!("token/word inconsistency: tokens sum to {sum}, logprob is {}", c.logprob),
                    );
                }
            }
        }
    }
    if preds.candidates.iter().all(|c| c.logprob.is_finite()) && !preds.candidates.is_empty() {
        let mass = preds.log_mass().exp();
        if preds.renormalized && (mass - 1.0).abs() > MASS_TOLERANCE {
            push(None, ViolationKind::MassNotOne, format!("renormalized set has mass {mass}"));
        }
        if !preds.renormalized && mass > 1.0 + MASS_TOLERANCE {
            push(None, ViolationKind::MassExceedsOne, format!("probability mass {mass} exceeds 1"));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Anything that can emit a prediction set for a trial.
pub trait ResponseModel {
    fn name(&self) -> &str;

    fn predict(&self, trial: &crate::corpus::Trial) -> PredictionSet;

    fn predict_all<'a>(&self, trials: impl IntoIterator<Item = &'a crate::corpus::Trial>) -> PredictionTable
    where
        Self: Sized,
    {
        trials.into_iter().map(|t| self.predict(t)).collect()
    }
}

/// Keyed collection of prediction sets, one per trial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTable {
    sets: BTreeMap<String, PredictionSet>,
}

impl PredictionTable {
    /// Rejects a second set for the same trial.
    pub fn insert(&mut self, set: PredictionSet) -> Result<()> {
        if self.sets.contains_key(&set.trial_id) {
            return Err(Error::Validation { trial: set.trial_id, message: "duplicate prediction set".into() });
        }
        self.sets.insert(set.trial_id.clone(), set);
        Ok(())
    }

    pub fn get(&self, trial_id: &str) -> Option<&PredictionSet> {
        self.sets.get(trial_id)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PredictionSet> {
        self.sets.values()
    }

    /// Variant-merged copy of every set.
    pub fn merged(&self) -> PredictionTable {
        PredictionTable { sets: self.sets.iter().map(|(k, v)| (k.clone(), v.merged())).collect() }
    }
}

impl FromIterator<PredictionSet> for PredictionTable {
    /// Later sets for an already-present trial replace earlier ones.
    fn from_iter<I: IntoIterator<Item = PredictionSet>>(iter: I) -> Self {
        PredictionTable { sets: iter.into_iter().map(|s| (s.trial_id.clone(), s)).collect() }
    }
}

/// Reads prediction JSON Lines in file order, one set per line.
pub fn read_prediction_sets(reader: impl BufRead) -> Result<Vec<PredictionSet>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn read_predictions(reader: impl BufRead) -> Result<PredictionTable> {
    let mut table = PredictionTable::default();
    for set in read_prediction_sets(reader)? {
        table.insert(set)?;
    }
    Ok(table)
}

pub fn write_predictions<'a>(sets: impl IntoIterator<Item = &'a PredictionSet>, mut out: impl Write) -> Result<()> {
    for set in sets {
        serde_json::to_writer(&mut out, set)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// File-level checks: per-set invariants, duplicate trials and, given the
/// corpus, a score for every observed response of every trial.
pub fn validate_file(sets: &[PredictionSet], corpus: Option<&crate::corpus::Corpus>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for set in sets {
        if let Err(v) = validate(set) {
            out.extend(v);
        }
        *seen.entry(set.trial_id.as_str()).or_default() += 1;
    }
    let mut dups: Vec<_> = seen.iter().filter(|(_, &n)| n > 1).map(|(id, _)| *id).collect();
    dups.sort_unstable();
    for id in dups {
        out.push(Violation {
            trial_id: id.to_string(),
            candidate: None,
            kind: ViolationKind::DuplicateTrial,
            message: "trial has more than one prediction set".into(),
        });
    }
    if let Some(corpus) = corpus {
        let table: PredictionTable = sets.iter().cloned().collect();
        for trial in corpus.trials() {
            let Some(set) = table.get(&trial.id) else {
                out.push(Violation {
                    trial_id: trial.id.clone(),
                    candidate: None,
                    kind: ViolationKind::MissingTrial,
                    message: "no prediction set for trial".into(),
                });
                continue;
            };
            let merged = set.merged();
            for word in trial.responses.words() {
                if merged.logprob_of(word).is_none() {
                    out.push(Violation {
                        trial_id: trial.id.clone(),
                        candidate: None,
                        kind: ViolationKind::MissingResponse,
                        message: format!("observed response {word:?} is not scored"),
                    });
                }
            }
        }
    }
    out
}

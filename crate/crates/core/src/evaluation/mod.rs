//! Dataset scoring: the multinomial log-likelihood score, top-1 accuracy,
//! top-n coverage, Kendall tau-b and the spoken-word truth gap, per trial
//! and aggregated overall and per masker.

mod kendall;
mod likelihood;
mod report;

pub use kendall::kendall_tau_b;
pub use likelihood::{ln_factorial, ln_multinomial_coefficient, trial_log_likelihood};
pub use report::{Aggregate, EvalReport, Quartiles, ReportMetadata};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Trial};
use crate::error::{contract, Error, Result};
use crate::lexicon::{PronLexicon, WordMatcher};
use crate::predictions::{check_floor, lookup_prob, PredictionSet, PredictionTable, DEFAULT_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub floor: f64,
    pub renormalize: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { floor: DEFAULT_FLOOR, renormalize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub masker: String,
    /// Unique observed responses.
    pub n: usize,
    pub listeners: u32,
    /// Trial log-likelihood in nats.
    pub log_likelihood: f64,
    pub top1_hit: bool,
    pub coverage: f64,
    /// `None` when fewer than two responses were observed.
    pub kendall_tau: Option<f64>,
    pub truth_gap: f64,
    /// Observed responses whose probability came from the floor.
    pub floored: usize,
}

/// Listener relative frequency of the spoken word (homophones included)
/// minus the model's probability for it.
pub fn truth_gap(trial: &Trial, preds: &PredictionSet, matcher: WordMatcher<'_>, opts: EvalOptions) -> f64 {
    let heard: u32 = trial
        .responses
        .entries()
        .iter()
        .filter(|r| matcher.matches(&trial.spoken_word, &r.word))
        .map(|r| r.count)
        .sum();
    let listeners = f64::from(heard) / f64::from(trial.responses.listeners());
    listeners - lookup_prob(preds, &trial.spoken_word, opts.floor, opts.renormalize)
}

/// Observed responses matched by the top-n candidates, each candidate
/// claiming at most one response. Exact matches are preferred over
/// homophones.
fn covered(trial: &Trial, preds: &PredictionSet, matcher: WordMatcher<'_>) -> usize {
    let words: Vec<&str> = trial.responses.words().collect();
    let mut taken = vec![false; words.len()];
    for cand in preds.top(words.len()) {
        let slot = (0..words.len())
            .find(|&j| !taken[j] && words[j] == cand.surface)
            .or_else(|| (0..words.len()).find(|&j| !taken[j] && matcher.matches(&cand.surface, words[j])));
        if let Some(j) = slot {
            taken[j] = true;
        }
    }
    taken.into_iter().filter(|&t| t).count()
}

/// Scores one trial against its variant-merged prediction set.
pub fn trial_record(
    trial: &Trial,
    preds: &PredictionSet,
    matcher: WordMatcher<'_>,
    opts: EvalOptions,
) -> Result<TrialRecord> {
    let counts = trial.responses.counts();
    let probs: Vec<f64> =
        trial.responses.words().map(|w| lookup_prob(preds, w, opts.floor, opts.renormalize)).collect();
    let floored = trial.responses.words().filter(|w| preds.logprob_of(w).is_none()).count();
    let log_likelihood = trial_log_likelihood(&probs, &counts)?;

    let modal = trial.responses.modal_words();
    let top1_hit = preds.candidates.first().is_some_and(|best| modal.iter().any(|m| matcher.matches(&best.surface, m)));
    let n = trial.responses.len();

    Ok(TrialRecord {
        trial_id: trial.id.clone(),
        masker: trial.masker.label().to_string(),
        n,
        listeners: trial.responses.listeners(),
        log_likelihood,
        top1_hit,
        coverage: covered(trial, preds, matcher) as f64 / n as f64,
        kendall_tau: kendall_tau_b(&counts, &probs)?,
        truth_gap: truth_gap(trial, preds, matcher, opts),
        floored,
    })
}

/// Per-trial records for every corpus trial, sorted by trial id.
pub fn trial_records(
    corpus: &Corpus,
    preds: &PredictionTable,
    lexicon: Option<&PronLexicon>,
    opts: EvalOptions,
) -> Result<Vec<TrialRecord>> {
    check_floor(opts.floor)?;
    if corpus.is_empty() {
        return Err(contract("cannot score an empty corpus"));
    }
    let mut missing: Vec<String> =
        corpus.trials().iter().filter(|t| preds.get(&t.id).is_none()).map(|t| t.id.clone()).collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingPrediction(missing));
    }
    let matcher = WordMatcher::new(lexicon);
    let mut trials: Vec<&Trial> = corpus.trials().iter().collect();
    trials.sort_by(|a, b| a.id.cmp(&b.id));
    trials
        .into_iter()
        .map(|t| trial_record(t, &preds.get(&t.id).expect("checked above").merged(), matcher, opts))
        .collect()
}

/// Average trial log-likelihood over the corpus.
pub fn dataset_score(corpus: &Corpus, preds: &PredictionTable, floor: f64, renormalize: bool) -> Result<f64> {
    let records = trial_records(corpus, preds, None, EvalOptions { floor, renormalize })?;
    Ok(Aggregate::from_records(records.iter()).avg_log_likelihood)
}

pub fn top1_accuracy(corpus: &Corpus, preds: &PredictionTable, lexicon: Option<&PronLexicon>) -> Result<f64> {
    let records = trial_records(corpus, preds, lexicon, EvalOptions::default())?;
    Ok(Aggregate::from_records(records.iter()).top1_accuracy)
}

pub fn topn_coverage(corpus: &Corpus, preds: &PredictionTable, lexicon: Option<&PronLexicon>) -> Result<f64> {
    let records = trial_records(corpus, preds, lexicon, EvalOptions::default())?;
    Ok(Aggregate::from_records(records.iter()).avg_topn_coverage)
}

/// Full report: records plus overall and per-masker aggregates.
pub fn per_masker_report(
    corpus: &Corpus,
    preds: &PredictionTable,
    lexicon: Option<&PronLexicon>,
    opts: EvalOptions,
    model_name: &str,
) -> Result<EvalReport> {
    let records = trial_records(corpus, preds, lexicon, opts)?;
    let metadata = ReportMetadata::new(model_name, opts, lexicon.is_some());
    Ok(EvalReport::from_records(records, metadata))
}

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{EvalOptions, TrialRecord};

/// Five-number summary with linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Quartiles { min: v[0], q1: at(0.25), median: at(0.5), q3: at(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub avg_log_likelihood: f64,
    pub top1_accuracy: f64,
    pub avg_topn_coverage: f64,
    /// Mean of per-trial tau-b over trials where it is defined.
    pub avg_kendall_tau: Option<f64>,
    pub tau_trials: usize,
    pub truth_gap: Option<Quartiles>,
}

impl Aggregate {
    /// Sums run in iteration order; callers pass records sorted by trial id.
    pub fn from_records<'a>(records: impl Iterator<Item = &'a TrialRecord>) -> Aggregate {
        let mut trials = 0usize;
        let (mut g, mut hits, mut cov, mut tau) = (0.0, 0usize, 0.0, 0.0);
        let mut tau_trials = 0usize;
        let mut gaps = Vec::new();
        for r in records {
            trials += 1;
            g += r.log_likelihood;
            hits += usize::from(r.top1_hit);
            cov += r.coverage;
            if let Some(t) = r.kendall_tau {
                tau += t;
                tau_trials += 1;
            }
            gaps.push(r.truth_gap);
        }
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        Aggregate {
            trials,
            avg_log_likelihood: mean(g, trials),
            top1_accuracy: mean(hits as f64, trials),
            avg_topn_coverage: mean(cov, trials),
            avg_kendall_tau: (tau_trials > 0).then(|| tau / tau_trials as f64),
            tau_trials,
            truth_gap: Quartiles::of(&gaps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model: String,
    pub floor: f64,
    pub renormalize: bool,
    pub lexicon: bool,
    pub word_matching: String,
    pub log_base: String,
    pub tau_averaging: String,
    pub top1_tie_break: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl ReportMetadata {
    pub fn new(model: &str, opts: EvalOptions, lexicon: bool) -> Self {
        Self {
            model: model.to_string(),
            floor: opts.floor,
            renormalize: opts.renormalize,
            lexicon,
            word_matching: if lexicon { "homophone (stress-free phonemes)" } else { "exact normalized string" }.into(),
            log_base: "e".into(),
            tau_averaging: "mean of per-trial tau-b over trials with a defined tau".into(),
            top1_tie_break: "lexicographic on normalized surface".into(),
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub overall: Aggregate,
    pub per_masker: BTreeMap<String, Aggregate>,
    pub records: Vec<TrialRecord>,
}

impl EvalReport {
    pub fn from_records(mut records: Vec<TrialRecord>, metadata: ReportMetadata) -> Self {
        records.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
        let overall = Aggregate::from_records(records.iter());
        let mut maskers: Vec<&str> = records.iter().map(|r| r.masker.as_str()).collect();
        maskers.sort_unstable();
        maskers.dedup();
        let per_masker = maskers
            .into_iter()
            .map(|m| (m.to_string(), Aggregate::from_records(records.iter().filter(|r| r.masker == m))))
            .collect();
        Self { metadata, overall, per_masker, records }
    }

    /// Plain-text table with the headline columns, overall then per masker.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header = |out: &mut String, first: &str| {
            let _ = writeln!(
                out,
                "{first:<16} {:>7} {:>20} {:>11} {:>20} {:>14}",
                "Trials", "Avg. log likelihood", "Top-1 acc.", "Avg. top-n coverage", "Kendall corr."
            );
        };
        let row = |out: &mut String, label: &str, a: &Aggregate| {
            let tau = a.avg_kendall_tau.map_or_else(|| "n/a".to_string(), |t| format!("{t:.3}"));
            let _ = writeln!(
                out,
                "{label:<16} {:>7} {:>20.3} {:>11.3} {:>20.3} {:>14}",
                a.trials, a.avg_log_likelihood, a.top1_accuracy, a.avg_topn_coverage, tau
            );
        };
        header(&mut out, "Model");
        row(&mut out, &self.metadata.model, &self.overall);
        out.push('\n');
        header(&mut out, "Masker");
        for (masker, agg) in &self.per_masker {
            row(&mut out, masker, agg);
        }
        out.push('\n');
        let _ = writeln!(out, "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9}", "Truth gap", "min", "q1", "median", "q3", "max");
        let gaps = std::iter::once(("all", &self.overall)).chain(self.per_masker.iter().map(|(m, a)| (m.as_str(), a)));
        for (label, agg) in gaps {
            if let Some(q) = agg.truth_gap {
                let _ = writeln!(
                    out,
                    "{label:<16} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                    q.min, q.q1, q.median, q.q3, q.max
                );
            }
        }
        let _ = writeln!(
            out,
            "\nfloor={:e} renormalize={} matching={} log=ln",
            self.metadata.floor, self.metadata.renormalize, self.metadata.word_matching
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, masker: &str, g: f64, hit: bool, tau: Option<f64>, gap: f64) -> TrialRecord {
        TrialRecord {
            trial_id: id.into(),
            masker: masker.into(),
            n: 2,
            listeners: 15,
            log_likelihood: g,
            top1_hit: hit,
            coverage: if hit { 1.0 } else { 0.5 },
            kendall_tau: tau,
            truth_gap: gap,
            floored: 0,
        }
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        assert!(Quartiles::of(&[]).is_none());
        assert_eq!(Quartiles::of(&[0.3]).unwrap().median, 0.3);
    }

    #[test]
    fn single_masker_matches_overall() {
        let recs = vec![record("a", "SSN", -2.0, true, Some(1.0), 0.1), record("b", "SSN", -4.0, false, None, -0.1)];
        let report = EvalReport::from_records(recs, ReportMetadata::new("m", EvalOptions::default(), false));
        assert_eq!(report.per_masker.len(), 1);
        assert_eq!(report.per_masker["SSN"], report.overall);
        assert_eq!(report.overall.avg_kendall_tau, Some(1.0));
        assert_eq!(report.overall.tau_trials, 1);
        assert_eq!(report.overall.top1_accuracy, 0.5);
    }

    #[test]
    fn overall_is_trial_weighted_mean_of_groups() {
        let recs = vec![
            record("a", "SSN", -2.0, true, None, 0.0),
            record("b", "BAB4", -5.0, true, None, 0.0),
            record("c", "BAB4", -7.5, false, None, 0.0),
        ];
        let report = EvalReport::from_records(recs, ReportMetadata::new("m", EvalOptions::default(), false));
        let ssn = &report.per_masker["SSN"];
        let bab = &report.per_masker["BAB4"];
        let weighted = (ssn.avg_log_likelihood * ssn.trials as f64 + bab.avg_log_likelihood * bab.trials as f64) / 3.0;
        assert!((report.overall.avg_log_likelihood - weighted).abs() < 1e-12);
        assert_eq!(report.overall.avg_kendall_tau, None);
        let table = report.to_table();
        assert!(table.contains("Kendall corr."));
        assert!(table.contains("BAB4"));
        assert!(table.contains("n/a"));
    }
}

//! Response-annotated stimuli: the trial data model, manifest I/O and
//! response normalization.
//!
//! A manifest is JSON Lines, one trial per line:
//!
//! ```text
//! {"id":"t1","spoken":"their","masker":"SSN","m":15,"responses":[{"word":"there","count":9},{"word":"bear","count":6}]}
//! ```

mod split;
mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{read_split, stratified_split, write_split, Partition, SplitFractions};
pub use synthetic::{
    generate_synthetic, read_ground_truth, write_ground_truth, GroundTruthModel, SyntheticConfig, DEFAULT_VOCABULARY,
};

/// Number of listeners per stimulus in the English Consistent Confusion Corpus.
pub const ECCC_LISTENERS: u32 = 15;
/// Minimum listeners sharing a misperception for it to count as consistent.
pub const ECCC_MIN_CONSISTENT: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MaskerType {
    /// Stationary speech-shaped noise.
    Ssn,
    /// Four-speaker babble.
    Bab4,
    /// Three-speaker babble-modulated noise.
    Bmn3,
    Other(String),
}

impl MaskerType {
    pub fn label(&self) -> &str {
        match self {
            MaskerType::Ssn => "SSN",
            MaskerType::Bab4 => "BAB4",
            MaskerType::Bmn3 => "BMN3",
            MaskerType::Other(label) => label,
        }
    }
}

impl TryFrom<String> for MaskerType {
    type Error = String;

    fn try_from(label: String) -> std::result::Result<Self, String> {
        Ok(match label.as_str() {
            "SSN" => MaskerType::Ssn,
            "BAB4" => MaskerType::Bab4,
            "BMN3" => MaskerType::Bmn3,
            "" => return Err("masker label is empty".to_string()),
            _ => MaskerType::Other(label),
        })
    }
}

impl From<MaskerType> for String {
    fn from(m: MaskerType) -> String {
        m.label().to_string()
    }
}

impl fmt::Display for MaskerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2026}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{00A1}'
                | '\u{00BF}'
                | '\u{00AB}'
                | '\u{00BB}'
        )
}

/// Canonical form of a listener response or model hypothesis.
///
/// Lowercases, folds typographic apostrophes to `'`, strips whitespace and
/// punctuation from both ends and collapses internal whitespace runs to a
/// single space. Internal punctuation such as the apostrophe in "don't"
/// survives.
pub fn normalize_response(raw: &str) -> Result<String> {
    let lowered: String =
        raw.chars().map(|c| if c == '\u{2019}' { '\'' } else { c }).flat_map(char::to_lowercase).collect();
    let trimmed = lowered.trim_matches(|c: char| c.is_whitespace() || is_punctuation(c));
    let collapsed = trimmed.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        Err(Error::EmptyResponse)
    } else {
        Ok(collapsed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub word: String,
    pub count: u32,
}

/// Unique responses of `m` listeners to one stimulus with their counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSet {
    entries: Vec<Response>,
    listeners: u32,
}

impl ResponseSet {
    /// Builds a set from already-normalized, distinct words.
    pub fn new(entries: Vec<Response>, listeners: u32) -> std::result::Result<Self, String> {
        if listeners == 0 {
            return Err("listener count m must be positive".into());
        }
        let mut seen = HashSet::new();
        let mut total: u64 = 0;
        for r in &entries {
            if r.count == 0 {
                return Err(format!("response {:?} has count 0", r.word));
            }
            if r.word.is_empty() {
                return Err("response word is empty".into());
            }
            if !seen.insert(r.word.as_str()) {
                return Err(format!("response {:?} appears twice", r.word));
            }
            total += u64::from(r.count);
        }
        if total != u64::from(listeners) {
            return Err(format!("response counts sum to {total}, expected m = {listeners}"));
        }
        Ok(Self { entries, listeners })
    }

    /// Normalizes raw words and merges counts of words that coincide after
    /// normalization. First-occurrence order is kept.
    pub fn from_raw<S: AsRef<str>>(
        raw: impl IntoIterator<Item = (S, u32)>,
        listeners: u32,
    ) -> std::result::Result<Self, String> {
        let mut entries: Vec<Response> = Vec::new();
        for (word, count) in raw {
            let word = normalize_response(word.as_ref())
                .map_err(|_| format!("response {:?} is empty after normalization", word.as_ref()))?;
            if count == 0 {
                return Err(format!("response {word:?} has count 0"));
            }
            match entries.iter_mut().find(|r| r.word == word) {
                Some(existing) => existing.count += count,
                None => entries.push(Response { word, count }),
            }
        }
        Self::new(entries, listeners)
    }

    pub fn entries(&self) -> &[Response] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `m`, the number of listeners.
    pub fn listeners(&self) -> u32 {
        self.listeners
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|r| r.word.as_str())
    }

    pub fn counts(&self) -> Vec<u32> {
        self.entries.iter().map(|r| r.count).collect()
    }

    pub fn count_of(&self, word: &str) -> u32 {
        self.entries.iter().find(|r| r.word == word).map_or(0, |r| r.count)
    }

    pub fn modal_count(&self) -> u32 {
        self.entries.iter().map(|r| r.count).max().unwrap_or(0)
    }

    /// Every response reaching the maximum count.
    pub fn modal_words(&self) -> Vec<&str> {
        let top = self.modal_count();
        self.entries.iter().filter(|r| r.count == top).map(|r| r.word.as_str()).collect()
    }

    /// The lexicographically smallest modal response.
    pub fn top_response(&self) -> &str {
        self.modal_words().into_iter().min().expect("response sets are non-empty")
    }

    pub fn relative_frequency(&self, word: &str) -> f64 {
        f64::from(self.count_of(word)) / f64::from(self.listeners)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub id: String,
    pub spoken_word: String,
    pub masker: MaskerType,
    pub responses: ResponseSet,
    pub audio: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    trials: Vec<Trial>,
    split: Option<BTreeMap<String, Partition>>,
}

#[derive(Serialize, Deserialize)]
struct ResponseLine {
    word: String,
    count: i64,
}

#[derive(Serialize, Deserialize)]
struct TrialLine {
    id: String,
    spoken: String,
    masker: String,
    m: i64,
    responses: Vec<ResponseLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio: Option<PathBuf>,
}

impl TrialLine {
    fn into_trial(self, strict_eccc: bool) -> Result<Trial> {
        let invalid = |message: String| Error::Validation { trial: self.id.clone(), message };
        if self.id.is_empty() {
            return Err(Error::Validation { trial: String::new(), message: "empty trial id".into() });
        }
        let spoken_word = normalize_response(&self.spoken).map_err(|_| invalid("spoken word is empty".into()))?;
        let masker = MaskerType::try_from(self.masker.clone()).map_err(invalid)?;
        let listeners = u32::try_from(self.m)
            .ok()
            .filter(|&m| m > 0)
            .ok_or_else(|| invalid(format!("m = {} is not a positive integer", self.m)))?;
        let mut raw = Vec::with_capacity(self.responses.len());
        for r in &self.responses {
            let count = u32::try_from(r.count)
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| invalid(format!("response {:?} has count {}", r.word, r.count)))?;
            raw.push((r.word.as_str(), count));
        }
        let responses = ResponseSet::from_raw(raw, listeners).map_err(invalid)?;
        if strict_eccc {
            if listeners != ECCC_LISTENERS {
                return Err(invalid(format!("strict mode expects m = {ECCC_LISTENERS}, got {listeners}")));
            }
            if responses.modal_count() < ECCC_MIN_CONSISTENT {
                return Err(invalid(format!(
                    "strict mode expects a response shared by at least {ECCC_MIN_CONSISTENT} listeners, modal count is {}",
                    responses.modal_count()
                )));
            }
        }
        Ok(Trial { id: self.id, spoken_word, masker, responses, audio: self.audio })
    }

    fn from_trial(t: &Trial) -> Self {
        TrialLine {
            id: t.id.clone(),
            spoken: t.spoken_word.clone(),
            masker: t.masker.label().to_string(),
            m: i64::from(t.responses.listeners()),
            responses: t
                .responses
                .entries()
                .iter()
                .map(|r| ResponseLine { word: r.word.clone(), count: i64::from(r.count) })
                .collect(),
            audio: t.audio.clone(),
        }
    }
}

impl Corpus {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let mut ids = HashSet::new();
        for t in &trials {
            if !ids.insert(t.id.as_str()) {
                return Err(Error::Validation { trial: t.id.clone(), message: "duplicate trial id".into() });
            }
            if t.spoken_word.is_empty() {
                return Err(Error::Validation { trial: t.id.clone(), message: "spoken word is empty".into() });
            }
        }
        Ok(Self { trials, split: None })
    }

    /// Parses a JSON Lines manifest. Blank lines are ignored.
    pub fn from_reader(reader: impl BufRead, strict_eccc: bool) -> Result<Self> {
        let mut trials = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TrialLine =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
            trials.push(parsed.into_trial(strict_eccc)?);
        }
        Self::new(trials)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for t in &self.trials {
            serde_json::to_writer(&mut out, &TrialLine::from_trial(t))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.id == id)
    }

    pub fn split(&self) -> Option<&BTreeMap<String, Partition>> {
        self.split.as_ref()
    }

    /// Attaches a partition assignment, which must cover every trial exactly
    /// once and name no unknown trial.
    pub fn with_split(mut self, split: BTreeMap<String, Partition>) -> Result<Self> {
        let ids: HashSet<&str> = self.trials.iter().map(|t| t.id.as_str()).collect();
        if let Some(unknown) = split.keys().find(|id| !ids.contains(id.as_str())) {
            return Err(Error::Validation { trial: unknown.clone(), message: "split names an unknown trial".into() });
        }
        if let Some(t) = self.trials.iter().find(|t| !split.contains_key(&t.id)) {
            return Err(Error::Validation { trial: t.id.clone(), message: "trial has no partition".into() });
        }
        self.split = Some(split);
        Ok(self)
    }

    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        self.split.as_ref().and_then(|s| s.get(id).copied())
    }

    /// Trials assigned to `part`; empty when no split is attached.
    pub fn partition(&self, part: Partition) -> Vec<&Trial> {
        self.trials.iter().filter(|t| self.partition_of(&t.id) == Some(part)).collect()
    }

    /// A new corpus holding only the trials of `part`, split dropped.
    pub fn subset(&self, part: Partition) -> Corpus {
        Corpus { trials: self.partition(part).into_iter().cloned().collect(), split: None }
    }
}

pub fn load_corpus(manifest: impl AsRef<Path>, strict_eccc: bool) -> Result<Corpus> {
    let file = std::fs::File::open(manifest)?;
    Corpus::from_reader(std::io::BufReader::new(file), strict_eccc)
}

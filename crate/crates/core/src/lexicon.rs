//! CMU-format pronunciation lexicons and homophone matching.
//!
//! Both the classic release layout (`READ(1)  R EH1 D`, `;;;` comments,
//! Latin-1 bytes) and the cmusphinx layout (`read(2) R EH1 D`, trailing
//! `# comment`) are accepted. Headwords are lowercased and variant markers
//! are merged under the base word, keeping file order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// The 39 ARPAbet phonemes used by the CMU dictionary.
pub const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH", "K",
    "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

/// An ARPAbet phone with optional stress digit, e.g. `EH1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phone(String);

impl Phone {
    pub fn parse(symbol: &str) -> Option<Phone> {
        let base = symbol.strip_suffix(['0', '1', '2']).unwrap_or(symbol);
        ARPABET.contains(&base).then(|| Phone(symbol.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The phoneme without its stress digit.
    pub fn base(&self) -> &str {
        self.0.trim_end_matches(['0', '1', '2'])
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pronunciation {
    phones: Vec<Phone>,
}

impl Pronunciation {
    pub fn new(phones: Vec<Phone>) -> Option<Self> {
        (!phones.is_empty()).then_some(Self { phones })
    }

    pub fn phones(&self) -> &[Phone] {
        &self.phones
    }

    pub fn key(&self) -> PhonemicKey {
        PhonemicKey(self.phones.iter().map(|p| p.base().to_string()).collect())
    }
}

/// Stress-free phoneme sequence used to compare words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhonemicKey(pub Vec<String>);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PronLexicon {
    entries: BTreeMap<String, Vec<Pronunciation>>,
}

fn decode_line(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| char::from(b)).collect(),
    }
}

fn strip_variant(head: &str) -> &str {
    if let Some(open) = head.rfind('(') {
        let inner = &head[open + 1..];
        if let Some(digits) = inner.strip_suffix(')') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && open > 0 {
                return &head[..open];
            }
        }
    }
    head
}

impl PronLexicon {
    pub fn parse_bytes(data: &[u8]) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<Pronunciation>> = BTreeMap::new();
        for (idx, raw) in data.split(|&b| b == b'\n').enumerate() {
            let line_no = idx + 1;
            let line = decode_line(raw);
            if line.starts_with(";;;") {
                continue;
            }
            let content = match line.find(" #") {
                Some(pos) => &line[..pos],
                None => line.as_str(),
            };
            let mut fields = content.split_whitespace();
            let Some(head) = fields.next() else { continue };
            let mut phones = Vec::new();
            for symbol in fields {
                let phone = Phone::parse(symbol).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unknown phone symbol {symbol:?}"),
                })?;
                phones.push(phone);
            }
            let pron = Pronunciation::new(phones)
                .ok_or_else(|| Error::Parse { line: line_no, message: format!("headword {head:?} has no phones") })?;
            entries.entry(strip_variant(head).to_lowercase()).or_default().push(pron);
        }
        Ok(Self { entries })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse_bytes(text.as_bytes())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lookup is case-insensitive; headwords are stored lowercased.
    pub fn pronunciations(&self, word: &str) -> Option<&[Pronunciation]> {
        match self.entries.get(word) {
            Some(p) => Some(p.as_slice()),
            None if word.chars().any(char::is_uppercase) => self.entries.get(&word.to_lowercase()).map(Vec::as_slice),
            None => None,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.pronunciations(word).is_some()
    }

    /// Stress-stripped phoneme sequences of every pronunciation of `word`;
    /// empty for out-of-vocabulary words.
    pub fn phonemic_keys(&self, word: &str) -> BTreeSet<PhonemicKey> {
        self.pronunciations(word).map(|prons| prons.iter().map(Pronunciation::key).collect()).unwrap_or_default()
    }

    /// True when any pronunciation of `a` coincides with one of `b`.
    /// Equal strings always match, which covers out-of-vocabulary words.
    pub fn homophones(&self, a: &str, b: &str) -> bool {
        if a == b {
            return true;
        }
        let (ka, kb) = (self.phonemic_keys(a), self.phonemic_keys(b));
        !ka.is_disjoint(&kb)
    }
}

pub fn parse_cmu(path: impl AsRef<Path>) -> Result<PronLexicon> {
    PronLexicon::parse_bytes(&std::fs::read(path)?)
}

/// Word comparison used by the metrics: homophones under a lexicon, or plain
/// string equality when there is none.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordMatcher<'a> {
    lexicon: Option<&'a PronLexicon>,
}

impl<'a> WordMatcher<'a> {
    pub fn new(lexicon: Option<&'a PronLexicon>) -> Self {
        Self { lexicon }
    }

    pub fn exact() -> Self {
        Self { lexicon: None }
    }

    pub fn has_lexicon(&self) -> bool {
        self.lexicon.is_some()
    }

    pub fn matches(&self, a: &str, b: &str) -> bool {
        match self.lexicon {
            Some(lex) => lex.homophones(a, b),
            None => a == b,
        }
    }
}

pub fn homophone_match(a: &str, b: &str, lex: &PronLexicon) -> bool {
    lex.homophones(a, b)
}

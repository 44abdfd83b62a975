use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, MaskerType};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "test" => Ok(Partition::Test),
            other => Err(Error::Config(format!("unknown partition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.8, dev: 0.1, test: 0.1 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::Config(format!("split fractions must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// `(train, dev, test)` sizes for a stratum: dev and test are floored,
    /// train takes the remainder.
    pub fn sizes(&self, stratum: usize) -> (usize, usize, usize) {
        // Slack absorbs products such as 0.1 * 30 landing a hair below 3.
        let floor = |f: f64| ((f * stratum as f64) + 1e-9).floor() as usize;
        let dev = floor(self.dev);
        let test = floor(self.test).min(stratum - dev);
        (stratum - dev - test, dev, test)
    }
}

/// Shuffles each masker stratum with a seeded generator and cuts it into
/// train/dev/test by `fractions`. Strata are visited in label order so the
/// assignment depends only on the corpus and the seed.
pub fn stratified_split(corpus: Corpus, fractions: SplitFractions, seed: u64) -> Result<Corpus> {
    fractions.validate()?;
    let mut strata: BTreeMap<&MaskerType, Vec<&str>> = BTreeMap::new();
    for t in corpus.trials() {
        strata.entry(&t.masker).or_default().push(t.id.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for ids in strata.values_mut() {
        ids.shuffle(&mut rng);
        let (train, dev, _) = fractions.sizes(ids.len());
        for (pos, id) in ids.iter().enumerate() {
            let part = if pos < train {
                Partition::Train
            } else if pos < train + dev {
                Partition::Dev
            } else {
                Partition::Test
            };
            assignment.insert(id.to_string(), part);
        }
    }
    corpus.with_split(assignment)
}

#[derive(Serialize, Deserialize)]
struct SplitLine {
    id: String,
    partition: Partition,
}

/// One `{"id":…,"partition":…}` line per trial, in corpus order.
pub fn write_split(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    let split = corpus.split().ok_or_else(|| Error::Config("corpus has no split to write".into()))?;
    for t in corpus.trials() {
        let line = SplitLine { id: t.id.clone(), partition: split[&t.id] };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_split(reader: impl BufRead) -> Result<BTreeMap<String, Partition>> {
    let mut map = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SplitLine =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if map.insert(parsed.id.clone(), parsed.partition).is_some() {
            return Err(Error::Parse { line: idx + 1, message: format!("trial {:?} assigned twice", parsed.id) });
        }
    }
    Ok(map)
}

//! Minibatch training of the toy response model with Adam, warmup plus
//! decay schedules, best-dev checkpoint selection and grid search.

mod adam;
mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use schedule::{lr_at, warmup_steps, ScheduleKind};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Partition, Trial};
use crate::error::{Error, Result};
use crate::evaluation::dataset_score;
use crate::lexicon::PronLexicon;
use crate::predictions::{check_floor, DEFAULT_FLOOR};
use crate::scalar::Scalar;
use crate::toymodel::{
    backward, closed_vocabulary, predict_table, FeatureSpec, Featurizer, Gradient, Objective, ToyParams,
};

/// Which parameters `train` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    /// Highest dev log-likelihood, earliest epoch on ties.
    #[default]
    BestDev,
    /// State after the final epoch.
    Last,
}

impl std::str::FromStr for Checkpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best-dev" | "best_dev" => Ok(Checkpoint::BestDev),
            "last" => Ok(Checkpoint::Last),
            _ => Err(Error::Config(format!("unknown checkpoint policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub schedule: ScheduleKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Standard deviation of the Gaussian initialisation; 0 starts from zeros.
    pub init_scale: f64,
    /// Probability floor used when scoring the dev set.
    pub floor: f64,
    pub checkpoint: Checkpoint,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            peak_lr: 1e-5,
            warmup_fraction: 0.1,
            schedule: ScheduleKind::Cosine,
            epochs: 12,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            init_scale: 0.0,
            floor: DEFAULT_FLOOR,
            checkpoint: Checkpoint::BestDev,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.peak_lr.is_finite() && self.peak_lr >= 0.0) {
            return bad(format!("peak learning rate must be non-negative, got {}", self.peak_lr));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup fraction must lie in [0, 1), got {}", self.warmup_fraction));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.adam_eps.is_nan()
            || self.adam_eps <= 0.0
        {
            return bad("Adam needs beta1, beta2 in [0, 1) and eps > 0".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad(format!("init scale must be non-negative, got {}", self.init_scale));
        }
        check_floor(self.floor)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub objective: Objective,
    pub initial_dev_score: f64,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch with the highest dev score; earliest on ties.
    pub best_epoch: usize,
    pub best_dev_score: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ToyParams<T>,
    pub history: TrainHistory,
}

struct Prepared<'a, T> {
    train: Vec<(&'a Trial, Vec<T>)>,
    dev: Corpus,
}

fn prepare<'a, T: Scalar>(
    corpus: &'a Corpus,
    spec: &FeatureSpec,
    lexicon: Option<&PronLexicon>,
) -> Result<(Prepared<'a, T>, Featurizer, Vec<String>)> {
    if corpus.split().is_none() {
        return Err(Error::Config("training needs a corpus with a train/dev/test split".into()));
    }
    let mut train = corpus.partition(Partition::Train);
    train.sort_by(|a, b| a.id.cmp(&b.id));
    if train.is_empty() {
        return Err(Error::Config("train partition is empty".into()));
    }
    let dev = corpus.subset(Partition::Dev);
    if dev.is_empty() {
        return Err(Error::Config("dev partition is empty; checkpoint selection needs it".into()));
    }
    let featurizer = Featurizer::fit(spec, &train, corpus);
    if featurizer.needs_lexicon() && lexicon.is_none() {
        return Err(Error::Config("phoneme features need a lexicon".into()));
    }
    let vocab = closed_vocabulary(&train, corpus);
    let train =
        train.into_iter().map(|t| Ok((t, featurizer.features::<T>(t, lexicon)?))).collect::<Result<Vec<_>>>()?;
    Ok((Prepared { train, dev }, featurizer, vocab))
}

/// Average dev log-likelihood of `params`.
pub fn dev_score<T: Scalar>(
    params: &ToyParams<T>,
    dev: &Corpus,
    lexicon: Option<&PronLexicon>,
    floor: f64,
) -> Result<f64> {
    let preds = predict_table(params, dev.trials(), lexicon)?;
    dataset_score(dev, &preds, floor, false)
}

/// Trains on the train partition and returns the checkpoint chosen by
/// `cfg.checkpoint`. Deterministic given the config seed.
pub fn train<T: Scalar>(
    corpus: &Corpus,
    spec: &FeatureSpec,
    lexicon: Option<&PronLexicon>,
    objective: Objective,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let (data, featurizer, vocab) = prepare::<T>(corpus, spec, lexicon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ToyParams::<T>::random(vocab, featurizer, cfg.init_scale, &mut rng)?;

    let n = data.train.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let adam = cfg.adam();
    let mut w_state = AdamState::<T>::new(params.weights.len());
    let mut b_state = AdamState::<T>::new(params.bias.len());

    let initial_dev_score = dev_score(&params, &data.dev, lexicon, cfg.floor)?;
    let mut best = (0usize, f64::NEG_INFINITY, params.clone());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            // Fixed reduction order: sorted trial ids within the batch.
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            let scale = T::one() / T::of_usize(batch.len());
            let mut grad = Gradient::zeros_like(&params);
            for &i in &batch {
                let (trial, features) = &data.train[i];
                let (loss, g) = backward(&params, features, &trial.responses, objective)?;
                epoch_loss += loss.to_f64_lossy();
                grad.add_scaled(&g, scale);
            }
            let lr = lr_at(step, total_steps, cfg.peak_lr, cfg.warmup_fraction, cfg.schedule)?;
            adam_step(&mut params.weights, &grad.weights, &mut w_state, lr, &adam)?;
            adam_step(&mut params.bias, &grad.bias, &mut b_state, lr, &adam)?;
            step += 1;
        }
        params.check()?;
        let dev_score = dev_score(&params, &data.dev, lexicon, cfg.floor)?;
        if dev_score > best.1 {
            best = (epoch, dev_score, params.clone());
        }
        epochs.push(EpochStats { epoch, train_loss: epoch_loss / n as f64, dev_score });
    }

    let (best_epoch, best_dev_score, best_params) = best;
    let params = match cfg.checkpoint {
        Checkpoint::BestDev => best_params,
        Checkpoint::Last => params,
    };
    let history = TrainHistory {
        objective,
        initial_dev_score,
        epochs,
        best_epoch,
        best_dev_score,
        total_steps,
        warmup_steps: warmup_steps(total_steps, cfg.warmup_fraction),
    };
    Ok(TrainOutcome { params, history })
}

/// Hyperparameter grid; combinations run with learning rate outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub peak_lrs: Vec<f64>,
    pub warmup_fractions: Vec<f64>,
    pub schedules: Vec<ScheduleKind>,
    pub epochs: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            peak_lrs: vec![1e-3, 1e-4, 1e-5],
            warmup_fractions: vec![0.1, 0.5],
            schedules: vec![ScheduleKind::Linear, ScheduleKind::Cosine],
            epochs: vec![1, 4, 8, 12, 16],
        }
    }
}

impl Grid {
    pub fn single(cfg: &TrainConfig) -> Self {
        Self {
            peak_lrs: vec![cfg.peak_lr],
            warmup_fractions: vec![cfg.warmup_fraction],
            schedules: vec![cfg.schedule],
            epochs: vec![cfg.epochs],
        }
    }

    pub fn len(&self) -> usize {
        self.peak_lrs.len() * self.warmup_fractions.len() * self.schedules.len() * self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &peak_lr in &self.peak_lrs {
            for &warmup_fraction in &self.warmup_fractions {
                for &schedule in &self.schedules {
                    for &epochs in &self.epochs {
                        out.push(TrainConfig { peak_lr, warmup_fraction, schedule, epochs, ..base.clone() });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_dev_score: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome<T> {
    pub results: Vec<GridResult>,
    /// Index into `results` of the selected configuration.
    pub best: usize,
    pub params: ToyParams<T>,
    pub history: TrainHistory,
}

impl<T> GridOutcome<T> {
    pub fn best_config(&self) -> &TrainConfig {
        &self.results[self.best].config
    }
}

/// Trains every grid combination and keeps the one with the highest dev
/// log-likelihood, first in grid order on ties.
pub fn grid_search<T: Scalar>(
    corpus: &Corpus,
    spec: &FeatureSpec,
    lexicon: Option<&PronLexicon>,
    objective: Objective,
    base: &TrainConfig,
    grid: &Grid,
) -> Result<GridOutcome<T>> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let mut results = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, TrainOutcome<T>)> = None;
    for (i, cfg) in grid.configs(base).into_iter().enumerate() {
        let outcome = train::<T>(corpus, spec, lexicon, objective, &cfg)?;
        results.push(GridResult {
            config: cfg,
            best_epoch: outcome.history.best_epoch,
            best_dev_score: outcome.history.best_dev_score,
        });
        if best.as_ref().is_none_or(|(_, b)| outcome.history.best_dev_score > b.history.best_dev_score) {
            best = Some((i, outcome));
        }
    }
    let (best, outcome) = best.expect("grid is non-empty");
    Ok(GridOutcome { results, best, params: outcome.params, history: outcome.history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, stratified_split, SplitFractions, SyntheticConfig};

    fn synthetic(trials: usize, seed: u64) -> Corpus {
        let (c, _) = generate_synthetic(&SyntheticConfig::new(trials, 15, 0.5, seed)).unwrap();
        stratified_split(c, SplitFractions::default(), seed).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let corpus = synthetic(60, 1);
        let cfg = TrainConfig { peak_lr: 0.0, epochs: 1, init_scale: 0.3, seed: 9, ..TrainConfig::default() };
        let out = train::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (data, feat, vocab) = prepare::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None).unwrap();
        let init = ToyParams::<f64>::random(vocab, feat, 0.3, &mut rng).unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.history.best_dev_score, out.history.initial_dev_score);
        assert_eq!(dev_score(&init, &data.dev, None, DEFAULT_FLOOR).unwrap(), out.history.initial_dev_score);
    }

    #[test]
    fn default_recipe_improves_dev_score() {
        let corpus = synthetic(500, 2);
        let out = train::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &TrainConfig::default())
            .unwrap();
        assert!(out.history.best_dev_score > out.history.initial_dev_score, "{:?}", out.history);
        assert_eq!(out.history.epochs.len(), 12);
        let n_train = corpus.partition(Partition::Train).len();
        assert_eq!(out.history.total_steps, 12 * n_train.div_ceil(16));
    }

    #[test]
    fn training_is_reproducible() {
        let corpus = synthetic(80, 3);
        let cfg = TrainConfig { peak_lr: 0.05, epochs: 5, init_scale: 0.1, ..TrainConfig::default() };
        let a = train::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredTop, &cfg).unwrap();
        let b = train::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredTop, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn best_checkpoint_reproduces_its_score() {
        let corpus = synthetic(120, 4);
        let cfg = TrainConfig { peak_lr: 0.05, epochs: 8, ..TrainConfig::default() };
        let out = train::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &cfg).unwrap();
        let h = &out.history;
        let argmax = h
            .epochs
            .iter()
            .fold(None::<&EpochStats>, |acc, e| match acc {
                Some(a) if a.dev_score >= e.dev_score => Some(a),
                _ => Some(e),
            })
            .unwrap();
        assert_eq!(h.best_epoch, argmax.epoch);
        let rescored = dev_score(&out.params, &corpus.subset(Partition::Dev), None, cfg.floor).unwrap();
        assert_eq!(rescored.to_bits(), h.best_dev_score.to_bits());
    }

    #[test]
    fn last_checkpoint_returns_final_state() {
        let corpus = synthetic(120, 4);
        let best = TrainConfig { peak_lr: 0.05, epochs: 8, ..TrainConfig::default() };
        let last = TrainConfig { checkpoint: Checkpoint::Last, ..best.clone() };
        let a = train::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &best).unwrap();
        let b = train::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &last).unwrap();
        assert_eq!(a.history, b.history);
        let final_score = b.history.epochs.last().unwrap().dev_score;
        let rescored = dev_score(&b.params, &corpus.subset(Partition::Dev), None, best.floor).unwrap();
        assert_eq!(rescored.to_bits(), final_score.to_bits());
        assert_eq!("last".parse::<Checkpoint>().unwrap(), Checkpoint::Last);
    }

    #[test]
    fn single_precision_training_runs() {
        let corpus = synthetic(80, 5);
        let cfg = TrainConfig { peak_lr: 0.05, epochs: 3, ..TrainConfig::default() };
        let out = train::<f32>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &cfg).unwrap();
        assert!(out.history.best_dev_score > out.history.initial_dev_score);
    }

    #[test]
    fn memorizes_small_corpus_with_trial_ids() {
        let (c, _) = generate_synthetic(&SyntheticConfig::new(10, 15, 0.5, 6)).unwrap();
        let mut split = std::collections::BTreeMap::new();
        for t in c.trials() {
            split.insert(t.id.clone(), Partition::Train);
        }
        // One trial doubles as dev so checkpointing has something to score.
        let dev_id = c.trials()[0].id.clone();
        let mut dev_copy = c.trials()[0].clone();
        dev_copy.id = format!("{dev_id}-dev");
        split.insert(dev_copy.id.clone(), Partition::Dev);
        let mut trials = c.trials().to_vec();
        trials.push(dev_copy);
        let corpus = Corpus::new(trials).unwrap().with_split(split).unwrap();

        let cfg = TrainConfig { peak_lr: 0.1, epochs: 100, batch_size: 4, ..TrainConfig::default() };
        let out = train::<f64>(&corpus, &FeatureSpec::OneHotTrialId, None, Objective::PredTop, &cfg).unwrap();
        // Evaluate the final-state behaviour through the returned checkpoint.
        for t in corpus.partition(Partition::Train) {
            let set = crate::toymodel::predict_set(&out.params, t, None).unwrap().merged();
            assert_eq!(set.candidates[0].surface, t.responses.top_response(), "trial {}", t.id);
        }
    }

    #[test]
    fn configuration_errors() {
        let (c, _) = generate_synthetic(&SyntheticConfig::new(20, 15, 0.5, 1)).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train::<f64>(&c, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &cfg),
            Err(Error::Config(_))
        ));
        let mut split = std::collections::BTreeMap::new();
        for t in c.trials() {
            split.insert(t.id.clone(), Partition::Train);
        }
        let no_dev = c.clone().with_split(split).unwrap();
        assert!(matches!(
            train::<f64>(&no_dev, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &cfg),
            Err(Error::Config(_))
        ));
        let split = stratified_split(c, SplitFractions::default(), 0).unwrap();
        let bad = TrainConfig { warmup_fraction: 1.0, ..cfg.clone() };
        assert!(train::<f64>(&split, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &bad).is_err());
        assert!(train::<f64>(&split, &FeatureSpec::BagOfPhonemes, None, Objective::PredAll, &cfg).is_err());
    }

    #[test]
    fn grid_search_examples() {
        let corpus = synthetic(150, 7);
        let base = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let single = grid_search::<f64>(
            &corpus,
            &FeatureSpec::OneHotSpoken,
            None,
            Objective::PredAll,
            &base,
            &Grid::single(&base),
        )
        .unwrap();
        assert_eq!(single.results.len(), 1);
        assert_eq!(single.best_config(), &base);

        let grid = Grid {
            peak_lrs: vec![0.0, 1e-2],
            warmup_fractions: vec![0.1],
            schedules: vec![ScheduleKind::Cosine, ScheduleKind::Linear],
            epochs: vec![3],
        };
        let out =
            grid_search::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &base, &grid).unwrap();
        assert_eq!(out.results.len(), grid.len());
        assert_eq!(out.best_config().peak_lr, 1e-2);
        assert_eq!(out.history.best_dev_score, out.results[out.best].best_dev_score);

        let empty = Grid { epochs: vec![], ..grid };
        assert!(
            grid_search::<f64>(&corpus, &FeatureSpec::OneHotSpoken, None, Objective::PredAll, &base, &empty).is_err()
        );
        assert_eq!(Grid::default().len(), 60);
    }
}

use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{Context, Result};
use lexpredict::baselines::{fit_multinomial, OracleModel, RandomModel};
use lexpredict::corpus::{
    generate_synthetic, load_corpus, read_split, stratified_split, write_ground_truth, write_split, Corpus, Partition,
    SplitFractions, SyntheticConfig, DEFAULT_VOCABULARY,
};
use lexpredict::evaluation::{per_masker_report, EvalOptions};
use lexpredict::lexicon::{parse_cmu, PronLexicon};
use lexpredict::predictions::{
    check_floor, read_prediction_sets, validate_file, write_predictions, PredictionTable, ResponseModel,
};
use lexpredict::toymodel::{predict_table, ToyParams};
use lexpredict::trainer::{grid_search, train, Grid, GridResult, TrainConfig, TrainHistory};
use lexpredict::{Error, Scalar};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{
    BaselineArgs, BaselineKind, Command, CorpusArgs, EvaluateArgs, GlobalArgs, GridArgs, Precision, SplitArgs,
    SynthArgs, TrainArgs, ValidateArgs,
};

/// Failures detected by the CLI itself rather than the library.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

fn data(msg: impl Into<String>) -> anyhow::Error {
    CliError::Data(msg.into()).into()
}

/// 2 usage/config, 3 data, 4 numerics.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => 2,
                CliError::Data(_) => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => 2,
                Error::Numerics(_) => 4,
                _ => 3,
            };
        }
    }
    3
}

pub fn run(g: &GlobalArgs, command: Command) -> Result<()> {
    check_floor(g.floor())?;
    fs::create_dir_all(&g.out_dir).with_context(|| format!("creating {}", g.out_dir.display()))?;
    match command {
        Command::Split(args) => cmd_split(g, &args),
        Command::Synth(args) => cmd_synth(g, &args),
        Command::Baseline(args) => cmd_baseline(g, &args),
        Command::Evaluate(args) => cmd_evaluate(g, &args),
        Command::TrainToy(args) => cmd_train_toy(g, &args),
        Command::Grid(args) => cmd_grid(g, &args),
        Command::ValidatePredictions(args) => cmd_validate(g, &args),
    }
}

fn manifest<A: Serialize>(name: &str, g: &GlobalArgs, args: &A) -> Result<RunManifest> {
    let config = serde_json::json!({ "global": g, "command": args });
    Ok(RunManifest::new(name, g.seed(), config))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn jsonl<F: FnOnce(&mut Vec<u8>) -> lexpredict::Result<()>>(f: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn read_corpus(path: &Path, g: &GlobalArgs, m: &mut RunManifest) -> Result<Corpus> {
    m.input("corpus", path)?;
    load_corpus(path, g.strict_eccc).with_context(|| format!("loading corpus {}", path.display()))
}

fn load_data(args: &CorpusArgs, g: &GlobalArgs, m: &mut RunManifest) -> Result<Corpus> {
    let corpus = read_corpus(&args.corpus, g, m)?;
    match &args.split {
        None => Ok(corpus),
        Some(path) => {
            m.input("split", path)?;
            let split = read_split(open(path)?).with_context(|| format!("reading split {}", path.display()))?;
            Ok(corpus.with_split(split)?)
        }
    }
}

fn load_lexicon(g: &GlobalArgs, m: &mut RunManifest) -> Result<Option<PronLexicon>> {
    let Some(path) = &g.lexicon else { return Ok(None) };
    m.input("lexicon", path)?;
    let lex = parse_cmu(path).with_context(|| format!("loading lexicon {}", path.display()))?;
    Ok(Some(lex))
}

fn select(corpus: Corpus, partition: Option<Partition>) -> Result<Corpus> {
    let Some(part) = partition else { return Ok(corpus) };
    if corpus.split().is_none() {
        return Err(usage(format!("--partition {part} needs --split")));
    }
    let subset = corpus.subset(part);
    if subset.is_empty() {
        return Err(usage(format!("partition {part} selects no trials")));
    }
    Ok(subset)
}

fn cmd_split(g: &GlobalArgs, args: &SplitArgs) -> Result<()> {
    let mut m = manifest("split", g, args)?;
    let fractions = SplitFractions { train: args.train, dev: args.dev, test: args.test };
    fractions.validate()?;
    let corpus = read_corpus(&args.corpus, g, &mut m)?;
    let corpus = stratified_split(corpus, fractions, g.seed())?;
    let bytes = jsonl(|buf| write_split(&corpus, buf))?;
    m.write_output(&g.out_dir, "split.jsonl", &bytes)?;
    let counts = [Partition::Train, Partition::Dev, Partition::Test].map(|p| corpus.partition(p).len());
    println!("train {} / dev {} / test {}", counts[0], counts[1], counts[2]);
    m.finish(&g.out_dir)?;
    Ok(())
}

fn cmd_synth(g: &GlobalArgs, args: &SynthArgs) -> Result<()> {
    let mut m = manifest("synth", g, args)?;
    let vocab = match &args.vocab {
        None => DEFAULT_VOCABULARY.iter().map(|w| w.to_string()).collect(),
        Some(path) => {
            m.input("vocab", path)?;
            let mut words = Vec::new();
            for line in open(path)?.lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    words.push(line.trim().to_string());
                }
            }
            words
        }
    };
    let cfg = SyntheticConfig {
        num_trials: args.trials,
        vocab,
        listeners: args.listeners,
        concentration: args.concentration,
        seed: g.seed(),
    };
    let (corpus, truth) = generate_synthetic(&cfg)?;
    m.write_output(&g.out_dir, "corpus.jsonl", &jsonl(|buf| corpus.write_jsonl(buf))?)?;
    m.write_output(&g.out_dir, "ground_truth.jsonl", &jsonl(|buf| write_ground_truth(&corpus, &truth, buf))?)?;
    println!("{} trials", corpus.len());
    m.finish(&g.out_dir)?;
    Ok(())
}

fn cmd_baseline(g: &GlobalArgs, args: &BaselineArgs) -> Result<()> {
    let mut m = manifest("baseline", g, args)?;
    let corpus = load_data(&args.data, g, &mut m)?;
    let targets = select(corpus.clone(), args.partition)?;
    let table: PredictionTable = match args.kind {
        BaselineKind::Random => {
            let mut model = RandomModel::from_corpus(&corpus)?;
            if let Some(n) = args.vocab_size {
                model = model.with_vocab_size(n)?;
            }
            model.predict_all(targets.trials())
        }
        BaselineKind::Multinomial => {
            let fit_on = if corpus.split().is_some() { corpus.subset(Partition::Train) } else { corpus.clone() };
            fit_multinomial(&fit_on, args.alpha)?.predict_all(targets.trials())
        }
        BaselineKind::Oracle => OracleModel.predict_all(targets.trials()),
    };
    let name = format!("predictions-{}.jsonl", baseline_name(args.kind));
    m.write_output(&g.out_dir, &name, &jsonl(|buf| write_predictions(table.iter(), buf))?)?;
    println!("{} prediction sets -> {}", table.len(), g.out_dir.join(&name).display());
    m.finish(&g.out_dir)?;
    Ok(())
}

fn baseline_name(kind: BaselineKind) -> &'static str {
    match kind {
        BaselineKind::Random => "random",
        BaselineKind::Multinomial => "multinomial",
        BaselineKind::Oracle => "oracle",
    }
}

fn cmd_evaluate(g: &GlobalArgs, args: &EvaluateArgs) -> Result<()> {
    let mut m = manifest("evaluate", g, args)?;
    let corpus = select(load_data(&args.data, g, &mut m)?, args.partition)?;
    let lexicon = load_lexicon(g, &mut m)?;

    let (table, default_name) = match (&args.predictions, &args.params) {
        (Some(path), _) => {
            m.input("predictions", path)?;
            let sets = read_prediction_sets(open(path)?).with_context(|| format!("reading {}", path.display()))?;
            let violations = validate_file(&sets, None);
            if !violations.is_empty() {
                for v in &violations {
                    eprintln!("{v}");
                }
                return Err(data(format!("{} has {} invariant violation(s)", path.display(), violations.len())));
            }
            let name = sets.first().map_or_else(|| "model".to_string(), |s| s.model_name.clone());
            (sets.into_iter().collect::<PredictionTable>(), name)
        }
        (None, Some(path)) => {
            m.input("params", path)?;
            let params: ToyParams<f64> =
                serde_json::from_reader(open(path)?).with_context(|| format!("reading {}", path.display()))?;
            params.check()?;
            (predict_table(&params, corpus.trials(), lexicon.as_ref())?, "toy".to_string())
        }
        (None, None) => return Err(usage("either --predictions or --params is required")),
    };

    let opts = EvalOptions { floor: g.floor(), renormalize: g.renormalize };
    let name = args.model.clone().unwrap_or(default_name);
    let mut report = per_masker_report(&corpus, &table, lexicon.as_ref(), opts, &name)?;
    let partition = args.partition.map_or_else(|| "all".to_string(), |p| p.to_string());
    report.metadata.extra.insert("partition".into(), partition.into());
    let text = report.to_table();
    m.write_output(&g.out_dir, "report.json", &pretty_json(&report)?)?;
    m.write_output(&g.out_dir, "report.txt", text.as_bytes())?;
    print!("{text}");
    m.finish(&g.out_dir)?;
    Ok(())
}

fn resolve_config(args: &TrainArgs, g: &GlobalArgs, m: &mut RunManifest) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        None => TrainConfig::default(),
        Some(path) => {
            m.input("train_config", path)?;
            serde_json::from_reader(open(path)?)
                .map_err(|e| usage(format!("invalid training config {}: {e}", path.display())))?
        }
    };
    if let Some(v) = args.lr {
        cfg.peak_lr = v;
    }
    if let Some(v) = args.warmup {
        cfg.warmup_fraction = v;
    }
    if let Some(v) = args.schedule {
        cfg.schedule = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.init_scale {
        cfg.init_scale = v;
    }
    if let Some(v) = args.checkpoint {
        cfg.checkpoint = v;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = g.floor {
        cfg.floor = v;
    }
    cfg.validate()?;
    m.seed = cfg.seed;
    Ok(cfg)
}

#[derive(Serialize)]
struct Resolved<'a> {
    resolved: &'a TrainConfig,
}

fn write_training<T: Scalar>(
    g: &GlobalArgs,
    m: &mut RunManifest,
    params: &ToyParams<T>,
    history: &TrainHistory,
) -> Result<()> {
    m.write_output(&g.out_dir, "params.json", &pretty_json(params)?)?;
    m.write_output(&g.out_dir, "history.json", &pretty_json(history)?)?;
    println!("initial dev log-likelihood {:.4}", history.initial_dev_score);
    for e in &history.epochs {
        println!("epoch {:>3}  train loss {:.4}  dev log-likelihood {:.4}", e.epoch, e.train_loss, e.dev_score);
    }
    println!("best epoch {} (dev log-likelihood {:.4})", history.best_epoch, history.best_dev_score);
    Ok(())
}

fn cmd_train_toy(g: &GlobalArgs, args: &TrainArgs) -> Result<()> {
    let mut m = manifest("train-toy", g, args)?;
    let cfg = resolve_config(args, g, &mut m)?;
    m.config["resolved"] = serde_json::to_value(Resolved { resolved: &cfg })?["resolved"].take();
    let corpus = load_data(&args.data, g, &mut m)?;
    let lexicon = load_lexicon(g, &mut m)?;
    match args.precision {
        Precision::F64 => {
            let out = train::<f64>(&corpus, &args.features, lexicon.as_ref(), args.objective, &cfg)?;
            write_training(g, &mut m, &out.params, &out.history)?;
        }
        Precision::F32 => {
            let out = train::<f32>(&corpus, &args.features, lexicon.as_ref(), args.objective, &cfg)?;
            write_training(g, &mut m, &out.params, &out.history)?;
        }
    }
    m.finish(&g.out_dir)?;
    Ok(())
}

#[derive(Serialize)]
struct GridReport<'a> {
    best: usize,
    results: &'a [GridResult],
}

fn grid_table(results: &[GridResult], best: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>3}  {:>9} {:>7} {:>8} {:>6} {:>10} {:>14}",
        "#", "lr", "warmup", "schedule", "epochs", "best epoch", "dev loglik"
    );
    for (i, r) in results.iter().enumerate() {
        let c = &r.config;
        let _ = writeln!(
            out,
            "{:>3}{} {:>9.0e} {:>7} {:>8} {:>6} {:>10} {:>14.4}",
            i,
            if i == best { '*' } else { ' ' },
            c.peak_lr,
            c.warmup_fraction,
            c.schedule.to_string(),
            c.epochs,
            r.best_epoch,
            r.best_dev_score
        );
    }
    out
}

fn cmd_grid(g: &GlobalArgs, args: &GridArgs) -> Result<()> {
    let mut m = manifest("grid", g, args)?;
    let base = resolve_config(&args.train, g, &mut m)?;
    let defaults = Grid::default();
    let grid = Grid {
        peak_lrs: args.lrs.clone().unwrap_or(defaults.peak_lrs),
        warmup_fractions: args.warmups.clone().unwrap_or(defaults.warmup_fractions),
        schedules: args.schedules.clone().unwrap_or(defaults.schedules),
        epochs: args.epoch_grid.clone().unwrap_or(defaults.epochs),
    };
    m.config["grid"] = serde_json::to_value(&grid)?;
    let corpus = load_data(&args.train.data, g, &mut m)?;
    let lexicon = load_lexicon(g, &mut m)?;
    let t = &args.train;
    let (results, best) = match t.precision {
        Precision::F64 => {
            let out = grid_search::<f64>(&corpus, &t.features, lexicon.as_ref(), t.objective, &base, &grid)?;
            write_training(g, &mut m, &out.params, &out.history)?;
            (out.results, out.best)
        }
        Precision::F32 => {
            let out = grid_search::<f32>(&corpus, &t.features, lexicon.as_ref(), t.objective, &base, &grid)?;
            write_training(g, &mut m, &out.params, &out.history)?;
            (out.results, out.best)
        }
    };
    let table = grid_table(&results, best);
    m.write_output(&g.out_dir, "grid.json", &pretty_json(&GridReport { best, results: &results })?)?;
    m.write_output(&g.out_dir, "grid.txt", table.as_bytes())?;
    print!("{table}");
    m.finish(&g.out_dir)?;
    Ok(())
}

fn cmd_validate(g: &GlobalArgs, args: &ValidateArgs) -> Result<()> {
    let mut m = manifest("validate-predictions", g, args)?;
    m.input("predictions", &args.predictions)?;
    let sets = read_prediction_sets(open(&args.predictions)?)
        .with_context(|| format!("reading {}", args.predictions.display()))?;
    let corpus = match &args.corpus {
        Some(path) => Some(read_corpus(path, g, &mut m)?),
        None => None,
    };
    let violations = validate_file(&sets, corpus.as_ref());
    m.write_output(&g.out_dir, "violations.json", &pretty_json(&violations)?)?;
    m.finish(&g.out_dir)?;
    if violations.is_empty() {
        println!("ok: {} prediction sets", sets.len());
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(data(format!("{} invariant violation(s)", violations.len())))
}

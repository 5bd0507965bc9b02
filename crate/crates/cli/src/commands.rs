use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use depwise::checkpoint::Checkpoint;
use depwise::engine::{AggregatorKind, CollectionSemantics, EngineConfig};
use depwise::eval::evaluate;
use depwise::model::{ExactModel, ModelParams};
use depwise::props::{run_suite, SUITES};
use depwise::sweep::{drops_after_peak, oversmoothing_sweep, SweepConfig};
use depwise::taskgen::{generate_mixed, label_histogram, parse, read_jsonl_file, to_jsonl};
use depwise::train::{history_csv, split_validation, train_from, ResumeState, TrainConfig};
use depwise::{Error, RelationLabel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{DemoArgs, EvalArgs, GenArgs, PropArgs, SweepArgs, TrainArgs};

/// Fraction of the training file held out when no validation file is given.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    /// The command ran but reported failures.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) | CliError::Failed(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Model and optimizer settings for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    pub aggregator: AggregatorKind,
    pub semantics: CollectionSemantics,
    pub model_seed: u64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 64,
            aggregator: AggregatorKind::RecurrentGated,
            semantics: CollectionSemantics::Snapshot,
            model_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Run(Error::Io(e));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)
}

pub fn gen(args: GenArgs) -> Result<()> {
    let data = generate_mixed(args.seed, &args.k.values(), args.noise, args.n)?;
    write_atomic(&args.out, to_jsonl(&data)?.as_bytes())?;
    println!("wrote {} stories to {}", data.len(), args.out.display());
    for (label, count) in RelationLabel::ALL.iter().zip(label_histogram(&data)) {
        println!("  {:<12} {count}", label.as_str());
    }
    Ok(())
}

fn default_history_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".history.csv");
    PathBuf::from(s)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg: RunConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    let data = read_jsonl_file(&args.data)?;
    let (train_set, val_set) = match &args.val {
        Some(p) => (data, read_jsonl_file(p)?),
        None => split_validation(&data, VALIDATION_FRACTION, cfg.train.seed),
    };
    let (model, resume) = match &args.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let resume = ResumeState {
                completed: ck.epoch,
                lr_engine: ck.lr,
            };
            (ck.to_model()?, resume)
        }
        None => {
            let mut engine = EngineConfig::new(cfg.d, cfg.aggregator);
            engine.semantics = cfg.semantics;
            let resume = ResumeState {
                completed: 0,
                lr_engine: cfg.train.lr_engine,
            };
            (ModelParams::init(engine, cfg.model_seed)?, resume)
        }
    };
    println!(
        "training d={} aggregator={} on {} stories, validating on {}",
        model.d(),
        model.config.aggregator,
        train_set.len(),
        val_set.len()
    );
    let start_epoch = resume.completed;
    let out = train_from(model, &train_set, &val_set, &cfg.train, resume)?;
    for h in &out.history {
        println!(
            "epoch {:>3}  train {:.5}  val {:.5}  lr {:.2e}",
            h.epoch, h.train_loss, h.val_loss, h.lr
        );
    }
    let last_epoch = out.history.last().map_or(start_epoch, |h| h.epoch);
    let ck = Checkpoint::from_model(&out.best, last_epoch, out.final_lr);
    write_atomic(&args.out_ckpt, ck.to_json()?.as_bytes())?;
    let history = args.history.unwrap_or_else(|| default_history_path(&args.out_ckpt));
    write_atomic(&history, history_csv(&out.history).as_bytes())?;
    println!(
        "best epoch {} (val {:.5}){}; checkpoint {}",
        out.best_epoch,
        out.best_val_loss,
        if out.stopped_early { ", stopped early" } else { "" },
        args.out_ckpt.display()
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let data = read_jsonl_file(&args.data)?;
    let report = match &args.ckpt {
        Some(p) => evaluate(&Checkpoint::load(p)?.to_model()?, &data)?,
        None => evaluate(&ExactModel::default(), &data)?,
    };
    println!("{report}");
    if let Some(csv) = &args.csv {
        write_atomic(csv, report.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn prop(args: PropArgs) -> Result<()> {
    let suites: Vec<&str> = if args.suite == "all" {
        SUITES.to_vec()
    } else {
        vec![args.suite.as_str()]
    };
    let mut failed = Vec::new();
    let mut total = 0;
    for suite in suites {
        for o in run_suite(suite)? {
            total += 1;
            let tag = if o.passed { "PASS" } else { "FAIL" };
            println!("{tag}  {}/{:<30} {:>7.2}s  {}", o.suite, o.name, o.secs, o.detail);
            if !o.passed {
                failed.push(format!("{}/{}", o.suite, o.name));
            }
        }
    }
    println!("{} of {total} properties passed", total - failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failed: {}", failed.join(", "))))
    }
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let cfg: SweepConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SweepConfig::default(),
    };
    let data = read_jsonl_file(&args.data)?;
    let test = read_jsonl_file(&args.test)?;
    let (train_set, val_set) = split_validation(&data, VALIDATION_FRACTION, cfg.train.seed);
    let result = oversmoothing_sweep(&train_set, &val_set, &test, &cfg)?;
    let max_k = result.max_k().unwrap_or(0);
    println!(
        "{:<10} {:>8} {:>10} {:>10}",
        "model",
        "overall",
        format!("k={max_k}"),
        "smoothing"
    );
    for p in &result.baseline {
        let at = p.report.per_k.get(&max_k).map_or(0.0, |b| b.accuracy());
        println!(
            "{:<10} {:>8.4} {:>10.4} {:>10.4}",
            format!("breadth-{}", p.layers),
            p.report.accuracy(),
            at,
            p.smoothing
        );
    }
    let at = result.depwignn.per_k.get(&max_k).map_or(0.0, |b| b.accuracy());
    println!("{:<10} {:>8.4} {:>10.4}", "depwignn", result.depwignn.accuracy(), at);
    println!(
        "breadth accuracy at k={max_k} stays at or below its peak by the last depth: {}",
        drops_after_peak(&result.baseline_curve(max_k))
    );
    write_atomic(&args.out, result.to_csv().as_bytes())?;
    Ok(())
}

fn fmt_offset(f: &[f64]) -> String {
    format!("({}, {})", f[0], f[1])
}

pub fn demo_trace(text: &str) -> Result<String> {
    let story = parse(text)?;
    let question = story
        .question
        .ok_or_else(|| Error::Input("the story has no question sentence".into()))?;
    let trace = ExactModel::default().run(&story.triples, &question)?;
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "triples:");
    for t in &trace.triples {
        let _ = writeln!(w, "  {} {} {}", t.src, t.relation, t.dst);
    }
    let _ = writeln!(w, "question: {} -> {}", question.source, question.target);
    match trace.collected_pairs {
        0 => {
            let _ = writeln!(w, "collect: empty (no pair is two or more hops apart)");
        }
        n => {
            let _ = writeln!(w, "collect: {n} long-range pairs stored");
        }
    }
    match &trace.path {
        None => {
            let _ = writeln!(w, "path: no path between {} and {}", question.source, question.target);
        }
        Some(p) => {
            let _ = writeln!(w, "path: {} ({} hops)", p.join(" -> "), p.len() - 1);
            for (a, b, f) in &trace.hop_fillers {
                let _ = writeln!(w, "  {a} relative to {b}: offset {}", fmt_offset(f));
            }
        }
    }
    let _ = writeln!(w, "retrieved: offset {}", fmt_offset(&trace.retrieved));
    let _ = write!(w, "predicted: {}", trace.predicted);
    Ok(out)
}

pub fn demo(args: DemoArgs) -> Result<()> {
    let text = match (&args.story_file, &args.inline_text) {
        (Some(p), _) => fs::read_to_string(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?,
        (None, Some(t)) => t.clone(),
        (None, None) => {
            return Err(CliError::Usage(
                "one of --story-file or --inline-text is required".into(),
            ))
        }
    };
    println!("{}", demo_trace(&text)?);
    Ok(())
}

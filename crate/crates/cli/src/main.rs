use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nle_core::classifier::PredictionRecord;
use nle_core::data::{gold_explanations, load_dataset, sample_few_shot, ExplanationMap};
use nle_core::evaluation::{
    aggregate_annotations, confusion_partition, gold_map, load_annotations, EvaluationReport,
};
use nle_core::harness::{
    hyperparameter_sweep, read_predictions, run_configured, Experiment, ExperimentConfig, Precision, RunMode,
    SweepGrid, SyntheticFixture, SyntheticSpec, TrainedModel,
};
use nle_core::probing::{
    probe_model, LexiconTagger, PerturbationKind, PosTagger, ProbeInputs, ReplacementPool, RuleTagger,
    DEFAULT_POS_TAGS,
};
use nle_core::task::Example;
use nle_core::Scalar;

#[derive(Parser)]
#[command(name = "nle", version, about = "Few-shot NLI with generated explanations")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the few-shot split and generate explanations into the output directory.
    Generate(ConfigArg),
    /// Train the classifier (and the ensemble, if configured).
    Train(ConfigArg),
    /// Predict a dataset with a trained model.
    Predict {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Dataset to predict instead of the configured test set.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Model directory (default: `<output_dir>/model`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output file (default: `<output_dir>/predictions.jsonl`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions; optionally partition against a baseline and summarize annotations.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Predictions of a model without explanations, for the confusion table.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Perturb test explanations and report prediction flip rates.
    Probe {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value = "nv-replace")]
        kind: PerturbationKind,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// `word<TAB>TAG` lexicon overriding the built-in tagger.
        #[arg(long)]
        tagger_lexicon: Option<PathBuf>,
    },
    /// Run every stage end to end.
    Run(ConfigArg),
    /// Grid search over beta_init, beta_lr and the training-explanation variant.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Grid file (TOML with `beta_init`, `beta_lr`, `variants`); default is the full grid.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Write a synthetic dataset, replay file and one config per run mode.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        per_label_pool: usize,
        #[arg(long, default_value_t = 30)]
        per_label_test: usize,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {}", render_error(&e));
        std::process::exit(1);
    }
}

fn load(cfg: &ConfigArg) -> Result<Experiment> {
    let c = ExperimentConfig::load(&cfg.config)?;
    Ok(Experiment::new(c)?)
}

macro_rules! at_precision {
    ($exp:expr, $f:ident($($arg:expr),*)) => {
        match $exp.cfg.precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate(c) => generate(&load(&c)?),
        Command::Train(c) => {
            let exp = load(&c)?;
            at_precision!(exp, train(&exp))
        }
        Command::Predict {
            cfg,
            dataset,
            model,
            out,
        } => {
            let exp = load(&cfg)?;
            at_precision!(
                exp,
                predict(&exp, dataset.as_deref(), model.as_deref(), out.as_deref())
            )
        }
        Command::Evaluate {
            cfg,
            predictions,
            baseline,
            annotations,
        } => {
            let exp = load(&cfg)?;
            at_precision!(
                exp,
                evaluate(
                    &exp,
                    predictions.as_deref(),
                    baseline.as_deref(),
                    annotations.as_deref()
                )
            )
        }
        Command::Probe {
            cfg,
            kind,
            seeds,
            tagger_lexicon,
        } => {
            let exp = load(&cfg)?;
            at_precision!(exp, probe(&exp, kind, &seeds, tagger_lexicon.as_deref()))
        }
        Command::Run(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let (manifest, report) = run_configured(&cfg)?;
            print!("{}", report.render_text());
            println!(
                "manifest: {} ({} artifacts)",
                cfg.output_dir.join("manifest.json").display(),
                manifest.artifacts.len()
            );
            Ok(())
        }
        Command::Sweep { cfg, grid } => {
            let base = ExperimentConfig::load(&cfg.config)?;
            let grid = match grid {
                Some(p) => SweepGrid::from_toml(
                    &std::fs::read_to_string(&p).with_context(|| p.display().to_string())?,
                )?,
                None => SweepGrid::default(),
            };
            let outcome = hyperparameter_sweep(&base, &grid)?;
            print!("{}", outcome.render_table());
            Ok(())
        }
        Command::Synth {
            out,
            per_label_pool,
            per_label_test,
            k,
            seed,
        } => synth(&out, per_label_pool, per_label_test, k, seed),
    }
}

fn generate(exp: &Experiment) -> Result<()> {
    if exp.cfg.run_mode.scheme().is_none() {
        bail!("run mode {} uses no generated explanations", exp.cfg.run_mode);
    }
    let split = exp.split()?;
    let rec = exp
        .generate(&split, &exp.test_examples()?)?
        .expect("mode generates");
    println!(
        "{} generated, {} reused; backend `{}`, cache {}",
        rec.generated,
        rec.reused,
        rec.source.backend_id,
        exp.path("explanations.jsonl").display()
    );
    Ok(())
}

fn train<T: Scalar>(exp: &Experiment) -> Result<()> {
    let split = exp.split()?;
    let generation = exp.load_generation().context("run `nle generate` first")?;
    let model: TrainedModel<T> = exp.train(&split, generation.as_ref().map(|g| &g.source))?;
    match &model.train_report {
        Some(r) => println!(
            "trained {} steps, final loss {:.6}",
            r.steps,
            r.losses.last().copied().unwrap_or(f64::NAN)
        ),
        None => println!("scorer is frozen; nothing trained"),
    }
    if let Some(b) = model.meta.beta {
        println!("beta {b:.4}");
    }
    println!("model written to {}", exp.path("model").display());
    Ok(())
}

fn examples_for(exp: &Experiment, dataset: Option<&Path>) -> Result<Vec<Example>> {
    Ok(match dataset {
        Some(p) => load_dataset(p, &exp.task)?,
        None => exp.test_examples()?,
    })
}

fn predict<T: Scalar>(
    exp: &Experiment,
    dataset: Option<&Path>,
    model_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let model_dir = model_dir.map_or_else(|| exp.path("model"), Path::to_path_buf);
    let model = TrainedModel::<T>::load(&model_dir)?;
    if model.meta.run_mode != exp.cfg.run_mode {
        bail!(
            "model was trained for {}, config says {}",
            model.meta.run_mode,
            exp.cfg.run_mode
        );
    }
    let examples = examples_for(exp, dataset)?;
    if exp.cfg.run_mode.scheme().is_some() {
        let split = sample_few_shot(&exp.pool()?, &exp.task, exp.cfg.k, exp.cfg.seeds.split)?;
        exp.generate(&split, &examples)?;
    }
    let preds = exp.predict(&model, &examples)?;
    let out = out.map_or_else(|| exp.path("predictions.jsonl"), Path::to_path_buf);
    let mut text = String::new();
    for p in &preds {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    std::fs::write(&out, text).with_context(|| out.display().to_string())?;
    let report = EvaluationReport::new(&preds, &gold_map(&examples))?;
    println!(
        "{} predictions written to {}; accuracy {:.4}",
        preds.len(),
        out.display(),
        report.accuracy
    );
    Ok(())
}

fn test_explanations(exp: &Experiment, examples: &[Example]) -> Result<Option<ExplanationMap>> {
    let generation = exp.load_generation()?;
    let map = exp.test_time_explanations(examples, generation.as_ref().map(|g| &g.source))?;
    Ok(map)
}

fn evaluate<T: Scalar>(
    exp: &Experiment,
    predictions: Option<&Path>,
    baseline: Option<&Path>,
    annotations: Option<&Path>,
) -> Result<()> {
    let test = exp.test_examples()?;
    let gold = gold_map(&test);
    let path = predictions.map_or_else(|| exp.path("predictions.jsonl"), Path::to_path_buf);
    let preds: Vec<PredictionRecord<T>> = read_predictions(&path)?;
    let mut report = EvaluationReport::new(&preds, &gold)?;
    if let Some(b) = baseline {
        let base: Vec<PredictionRecord<T>> = read_predictions(b)?;
        report.baseline_accuracy = Some(EvaluationReport::new(&base, &gold)?.accuracy);
        let expl = match test_explanations(exp, &test)? {
            Some(m) => m,
            None => gold_explanations(&test).unwrap_or_default(),
        };
        report.confusion = Some(confusion_partition(&preds, &base, &test, &expl, &exp.task)?);
    }
    print!("{}", report.render_text());
    if let Some(a) = annotations {
        let rows = aggregate_annotations(&load_annotations(a)?, &gold)?;
        println!(
            "\n{:<32} {:>5} {:>8} {:>8} {:>8}",
            "explanations", "n", "logic", "template", "assume"
        );
        let pct = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.1}"));
        for r in &rows {
            println!(
                "{:<32} {:>5} {:>8} {:>8} {:>8}",
                r.title(),
                r.annotations,
                pct(r.logical_consistency),
                pct(r.correct_template),
                pct(r.validity_of_assumption)
            );
        }
    }
    let out = exp.path("evaluation.json");
    std::fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| out.display().to_string())?;
    Ok(())
}

fn probe<T: Scalar>(
    exp: &Experiment,
    kind: PerturbationKind,
    seeds: &[u64],
    tagger_lexicon: Option<&Path>,
) -> Result<()> {
    if !exp.cfg.run_mode.explanations_at_test() {
        bail!("run mode {} predicts without explanations", exp.cfg.run_mode);
    }
    let model = TrainedModel::<T>::load(&exp.path("model"))?;
    let split = sample_few_shot(&exp.pool()?, &exp.task, exp.cfg.k, exp.cfg.seeds.split)?;
    let test = exp.test_examples()?;
    let expl = test_explanations(exp, &test)?.expect("explanations at test time");
    let train_expl = test_explanations(exp, &split.train)?.expect("explanations at test time");
    let tagger: Box<dyn PosTagger> = match tagger_lexicon {
        Some(p) => Box::new(LexiconTagger::load(p).map_err(anyhow::Error::msg)?),
        None => Box::new(RuleTagger::default()),
    };
    let tags: Vec<String> = DEFAULT_POS_TAGS.iter().map(|t| t.to_string()).collect();
    let pool = ReplacementPool::from_texts(
        train_expl.values().flatten().map(|r| r.text.as_str()),
        tagger.as_ref(),
        &tags,
    );
    let pvps = nle_core::harness::mode_pvps(exp.cfg.run_mode, &exp.task);
    let original = exp.predict(&model, &test)?;
    let inputs = ProbeInputs {
        scorer: model.scorer.scorer(),
        task: &exp.task,
        pvps: &pvps,
        examples: &test,
        explanations: &expl,
        original: &original,
    };
    let report = probe_model(&inputs, kind, seeds, tagger.as_ref(), &pool, &tags)?;
    print!("{}", report.render_table());
    let out = exp.path(&format!("probe-{kind}.json"));
    std::fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| out.display().to_string())?;
    Ok(())
}

/// Joins the cause chain, skipping causes already spelled out by their parent.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn synth(out: &Path, per_label_pool: usize, per_label_test: usize, k: usize, seed: u64) -> Result<()> {
    let spec = SyntheticSpec {
        per_label_pool,
        per_label_test,
        seed,
        misleading_train: None,
    };
    let fixture = SyntheticFixture::write(&out.join("data"), &spec)?;
    for mode in RunMode::ALL {
        let mut cfg = fixture.config(mode, k, PathBuf::from("runs").join(mode.as_str()));
        cfg.pool = "data/pool.jsonl".into();
        cfg.test = "data/test.jsonl".into();
        if let nle_core::harness::BackendConfig::Replay { path, .. } = &mut cfg.backend {
            *path = "data/replay.jsonl".into();
        }
        let file = out.join(format!("{}.toml", mode.as_str()));
        std::fs::write(&file, cfg.to_toml()).with_context(|| file.display().to_string())?;
    }
    println!("synthetic task written to {}", out.display());
    Ok(())
}

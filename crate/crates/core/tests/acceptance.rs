//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nle_core::classifier::{
    apply_explanation_pattern, flame_loss, predict_flame, CueDetectorScorer, FnScorer, MaskedSequence,
};
use nle_core::data::ExplanationCache;
use nle_core::evaluation::bleu4_smoothed;
use nle_core::generation::build_generation_prompt;
use nle_core::generation::prompt::training_pair;
use nle_core::harness::{
    mode_pvps, run_experiment, Experiment, RunMode, ScorerConfig, SyntheticFixture, SyntheticSpec,
};
use nle_core::probing::{
    probe_model, LexiconTagger, PerturbationKind, PosTagger, ProbeInputs, ReplacementPool, RuleTagger,
    DEFAULT_POS_TAGS,
};
use nle_core::task::{builtin, Example, ExplanationRecord, Scheme, TaskSpec};

fn ehans() -> TaskSpec {
    TaskSpec::from_toml(builtin::EHANS).unwrap()
}

fn esnli() -> TaskSpec {
    TaskSpec::from_toml(builtin::ESNLI).unwrap()
}

fn cue_scorer() -> ScorerConfig {
    ScorerConfig::CueDetector { bonus: 10.0 }
}

/// Scorer reading the row of scores written as the explanation text.
fn row_scorer() -> FnScorer<f64> {
    FnScorer::new("rows", |seq: &MaskedSequence, cands: &[String]| {
        let text = seq
            .right
            .rsplit("because ")
            .next()
            .unwrap_or_default()
            .trim_matches('"');
        let vals: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), cands.len());
        vals
    })
}

fn matrix_example(task: &TaskSpec) -> Example {
    Example {
        uid: "m".into(),
        premise: "The pilot saw the judge.".into(),
        hypothesis: "The judge saw the pilot.".into(),
        gold_label: task.labels[0].clone(),
        gold_explanation: None,
    }
}

fn row_records(task: &TaskSpec, rows: &[Vec<f64>], conditioning: &[usize]) -> Vec<ExplanationRecord> {
    rows.iter()
        .zip(conditioning)
        .map(|(r, &c)| ExplanationRecord {
            example_uid: "m".into(),
            text: r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            conditioning_label: Some(task.labels[c].clone()),
            scheme: Scheme::PredictThenExplain,
            backend_id: "fixed".into(),
            seed: 0,
        })
        .collect()
}

fn criterion_1() -> Result<String> {
    let scorer = row_scorer();
    let tasks = [ehans(), esnli()];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ties = 0;
    for i in 0..1000 {
        let task = &tasks[i % 2];
        let n = task.num_labels();
        let pvp = &task.pvps[1];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| f64::from(rng.random_range(0..4u8))).collect())
            .collect();
        let mut conditioning: Vec<usize> = (0..n).collect();
        conditioning.rotate_left(rng.random_range(0..n));

        let (mut best, mut by, mut br) = (f64::NEG_INFINITY, 0, 0);
        for y in 0..n {
            for (r, row) in rows.iter().enumerate() {
                if row[y] > best {
                    (best, by, br) = (row[y], y, r);
                }
            }
        }
        let cells = rows.iter().flatten().filter(|v| **v == best).count();
        if cells > 1 {
            ties += 1;
        }

        let expls = row_records(task, &rows, &conditioning);
        let rec = predict_flame(
            &scorer,
            task,
            &matrix_example(task),
            &expls,
            std::slice::from_ref(pvp),
        )?;
        ensure!(
            rec.predicted.id == by,
            "matrix {i} {rows:?}: predicted {} expected {by}",
            rec.predicted.id
        );
        ensure!(
            rec.max_row == br,
            "matrix {i} {rows:?}: row {} expected {br}",
            rec.max_row
        );
        ensure!(
            rec.generator_label.as_ref().map(|l| l.id) == Some(conditioning[br]),
            "matrix {i}: generator label"
        );
    }
    ensure!(ties > 100, "only {ties} tie cases sampled");
    Ok(format!("1000 matrices, {ties} with tied maxima"))
}

fn oracle_loss(rows: &[Vec<f64>], y: usize) -> f64 {
    rows.iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = r.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            -(r[y] - m - lse)
        })
        .sum()
}

fn criterion_2() -> Result<String> {
    let scorer = row_scorer();
    let tasks = [ehans(), esnli()];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let task = &tasks[i % 2];
        let n = task.num_labels();
        let n_rows = rng.random_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..n_rows)
            .map(|_| (0..n).map(|_| rng.random_range(-20.0..20.0)).collect())
            .collect();
        let y = rng.random_range(0..n);
        let conditioning: Vec<usize> = (0..n_rows).map(|r| r % n).collect();
        let expls = row_records(task, &rows, &conditioning);
        let ex = matrix_example(task);
        // Every pvp sees the same rows, so the pvp average equals the single-pvp sum.
        let got = flame_loss(&scorer, &ex, &task.labels[y], &expls, &task.pvps)?;
        let want = oracle_loss(&rows, y);
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "matrix {i}: {got} vs {want}");
    }
    Ok(format!("500 matrices, max abs error {worst:.2e}"))
}

fn fixture(dir: &Path, per_label_pool: usize, per_label_test: usize) -> Result<SyntheticFixture> {
    let spec = SyntheticSpec {
        per_label_pool,
        per_label_test,
        ..SyntheticSpec::default()
    };
    Ok(SyntheticFixture::write(&dir.join("data"), &spec)?)
}

fn criterion_3() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let f = fixture(dir.path(), 16, 30)?;
    let mut cfg = f.config(RunMode::OracleExplanation, 8, dir.path().join("run"));
    cfg.scorer = cue_scorer();
    let out = run_experiment::<f64>(&cfg)?;
    ensure!(
        out.predictions.len() == 60,
        "{} test predictions",
        out.predictions.len()
    );
    ensure!(
        out.report.test.accuracy == 1.0,
        "accuracy {}",
        out.report.test.accuracy
    );
    Ok(format!(
        "accuracy {} on {} examples",
        out.report.test.accuracy,
        out.predictions.len()
    ))
}

fn criterion_4() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let f = fixture(dir.path(), 16, 30)?;
    let mut cfg = f.config(RunMode::PredictThenExplain, 8, dir.path().join("run"));
    cfg.scorer = cue_scorer();
    let out = run_experiment::<f64>(&cfg)?;
    let exp = Experiment::new(cfg.clone())?;
    let generation = exp.load_generation()?.context("generation record")?;
    let test = exp.test_examples()?;
    let split = exp.split()?;
    let expl = exp
        .test_time_explanations(&test, Some(&generation.source))?
        .context("test explanations")?;
    let train_expl = exp
        .test_time_explanations(&split.train, Some(&generation.source))?
        .context("train explanations")?;

    let scorer = CueDetectorScorer::from_task(&f.task, 10.0)?;
    let pvps = mode_pvps(cfg.run_mode, &f.task);
    let inputs = ProbeInputs {
        scorer: &scorer,
        task: &f.task,
        pvps: &pvps,
        examples: &test,
        explanations: &expl,
        original: &out.predictions,
    };
    let tags: Vec<String> = DEFAULT_POS_TAGS.iter().map(|t| t.to_string()).collect();
    let seeds = [0, 1, 2, 3, 4];
    let rule = RuleTagger::default();
    let pool = ReplacementPool::from_texts(
        train_expl.values().flatten().map(|r| r.text.as_str()),
        &rule,
        &tags,
    );
    let preserving = probe_model(
        &inputs,
        PerturbationKind::NounVerbReplace,
        &seeds,
        &rule,
        &pool,
        &tags,
    )?;
    ensure!(
        preserving.prediction_flip_full == 0.0 && preserving.prediction_flip_single == Some(0.0),
        "cue-preserving flips {:?} / {}",
        preserving.prediction_flip_single,
        preserving.prediction_flip_full
    );

    let adversarial =
        LexiconTagger::from_entries(["implies", "not", "know"].map(|w| (w.to_string(), "NN".to_string())));
    let tagger: &dyn PosTagger = &adversarial;
    let deleting = probe_model(
        &inputs,
        PerturbationKind::NounVerbReplace,
        &seeds,
        tagger,
        &pool,
        &tags,
    )?;
    ensure!(deleting.prediction_flip_full > 0.0, "cue-deleting flip rate is 0");
    Ok(format!(
        "cue-preserving flip {} over 5 seeds, cue-deleting flip {:.3}",
        preserving.prediction_flip_full, deleting.prediction_flip_full
    ))
}

fn criterion_5() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let f = fixture(dir.path(), 10, 15)?;
    let mut counts = Vec::new();
    for (mode, expected) in [
        (RunMode::PredictThenExplain, f.task.num_labels()),
        (RunMode::ExplainThenPredict, 1),
    ] {
        let mut cfg = f.config(mode, 5, dir.path().join(mode.as_str()));
        cfg.scorer = cue_scorer();
        run_experiment::<f64>(&cfg)?;
        let cache = ExplanationCache::load(cfg.output_dir.join("explanations.jsonl"))?;
        let mut per_example: BTreeMap<&str, Vec<Option<usize>>> = BTreeMap::new();
        for r in cache.records() {
            per_example
                .entry(r.example_uid.as_str())
                .or_default()
                .push(r.conditioning_label.as_ref().map(|l| l.id));
        }
        ensure!(
            per_example.len() == 50,
            "{mode}: {} examples cached",
            per_example.len()
        );
        for (uid, labels) in &per_example {
            ensure!(
                labels.len() == expected,
                "{mode}: {uid} has {} explanations",
                labels.len()
            );
            if mode == RunMode::PredictThenExplain {
                let mut ids: Vec<usize> = labels.iter().map(|l| l.expect("conditioning label")).collect();
                ids.sort();
                ensure!(ids == (0..expected).collect::<Vec<_>>(), "{uid}: labels {ids:?}");
            } else {
                ensure!(
                    labels[0].is_none(),
                    "{uid}: conditioned explain-then-predict record"
                );
            }
        }
        counts.push(format!("{mode} {expected}/example"));
    }
    Ok(format!("50 examples: {}", counts.join(", ")))
}

/// Sentence-level BLEU-4 from NLTK 3.10.3 (`sentence_bleu`, uniform weights,
/// `SmoothingFunction().method1`) on seeded random pairs.
const BLEU_REFERENCE: &[(&str, &str, f64)] = &[
    (
        "do cat do",
        "do cat do . the know is whether we we because do",
        0.02799732600332712,
    ),
    ("not the is woman", "not the is woman runs", 0.7788007830714049),
    (
        "park man know whether whether the dog",
        "park we know cat whether the dog man we implies man because because woman",
        0.07152057676506869,
    ),
    (
        ", , is .",
        ", , is . we cat runs woman who the",
        0.22313016014842982,
    ),
    (
        ", we whether cat who dog sees",
        ", whether whether know who woman sees is",
        0.04049515890265692,
    ),
    ("cat who because", "cat woman because park", 0.09681772177713914),
    (
        "know dog cat sees sees who implies",
        "a dog cat park sees who the",
        0.09878765474230743,
    ),
    (
        "because sees implies man do park . runs we",
        "cat implies implies because do park . runs we , cat",
        0.38875142041440197,
    ),
    (
        "a woman , do . woman know the not . whether man",
        "sees woman dog do . woman know cat not . do runs",
        0.2620251007173262,
    ),
    (
        "not cat who implies . sees a who park is dog . runs sees",
        "not , who implies . park a know park whether not . runs man",
        0.09997501561329078,
    ),
    (
        "dog who know a is cat we because who sees not",
        ". who know dog is whether the because , cat not",
        0.05452469119630864,
    ),
    (
        "implies we do cat . is , cat dog a we ,",
        "who sees runs who dog is , cat dog because we runs",
        0.22416933501922293,
    ),
    (
        ", not know because runs the . is whether",
        ", not cat sees runs sees . woman whether",
        0.06376715693797415,
    ),
    (
        "dog . a woman the park dog .",
        "dog . man woman the park dog who sees do cat , dog",
        0.22006396709435144,
    ),
    ("dog implies runs cat", "dog implies runs cat", 1.0),
    (
        "know man we runs because know is not because runs ,",
        "runs man we dog know whether is not because runs ,",
        0.42969435238201475,
    ),
    (
        ", runs whether is runs do implies sees . man not",
        ", because whether because not do implies sees . know know",
        0.269855346668251,
    ),
    (
        "not cat park implies runs implies know runs do because the not the",
        "whether cat park implies the because do because do because man not the",
        0.11685792587573332,
    ),
    (
        "who . man do . whether implies sees the park",
        "do . a do implies whether implies because the park , dog sees",
        0.05951944117677027,
    ),
    ("a dog whether sees runs do", "a dog whether sees runs do", 1.0),
];

fn criterion_6() -> Result<String> {
    let mut worst = 0.0f64;
    for &(hyp, reference, expected) in BLEU_REFERENCE {
        let got = bleu4_smoothed(hyp, reference);
        worst = worst.max((got - expected).abs());
        ensure!(
            (got - expected).abs() <= 1e-6,
            "{hyp:?} / {reference:?}: {got} vs {expected}"
        );
    }
    for s in [
        "the manager helped the technician .",
        "We do not know whether the judge saw the pilot.",
        "a b c d",
    ] {
        ensure!(bleu4_smoothed(s, s) == 1.0, "identical sentence {s:?}");
    }
    Ok(format!(
        "{} pairs, max abs error {worst:.2e}",
        BLEU_REFERENCE.len()
    ))
}

fn example(task: &TaskSpec, premise: &str, hypothesis: &str, label: &str) -> Example {
    Example {
        uid: "golden".into(),
        premise: premise.into(),
        hypothesis: hypothesis.into(),
        gold_label: task.label_by_name(label).unwrap().clone(),
        gold_explanation: None,
    }
}

fn criterion_7() -> Result<String> {
    let snli = esnli();
    let hans = ehans();

    let mut ex = example(
        &snli,
        "Three people on a ski trail on a sunny day.",
        "There is nine feet of snow on the ground.",
        "neutral",
    );
    ex.gold_explanation = Some("Not all ski trail has nine feet of snow on the ground.".into());
    let pair = training_pair(&ex, &snli, Scheme::PredictThenExplain)?;
    let full = format!("{}{}", pair.prompt, pair.completion);
    ensure!(
        full == "Three people on a ski trail on a sunny day. question: There is nine feet of snow on the ground. maybe why? ### Not all ski trail has nine feet of snow on the ground. ###",
        "e-SNLI training pair {full:?}"
    );

    let mut ex = example(
        &hans,
        "the manager that helped the technician addressed the illustrator .",
        "the manager helped the technician .",
        "entailment",
    );
    let prompt = build_generation_prompt(&ex, &hans, Scheme::PredictThenExplain, Some(&ex.gold_label))?;
    ensure!(
        prompt == "the manager that helped the technician addressed the illustrator . question: the manager helped the technician . true why? ###",
        "e-HANS prompt {prompt:?}"
    );
    ex.gold_explanation = Some("that in that helped the technician refers to the manager .".into());
    let pair = training_pair(&ex, &hans, Scheme::PredictThenExplain)?;
    let full = format!("{}{}", pair.prompt, pair.completion);
    ensure!(
        full == "the manager that helped the technician addressed the illustrator . question: the manager helped the technician . true why? ### that in that helped the technician refers to the manager . ###",
        "e-HANS training pair {full:?}"
    );

    let quoted = r#""premise"?[mask], "hypothesis" because "expl""#;
    let plain = "premise?[mask],hypothesis because expl";
    let placeholder = |task: &TaskSpec| Example {
        uid: "p".into(),
        premise: "premise".into(),
        hypothesis: "hypothesis".into(),
        gold_label: task.labels[0].clone(),
        gold_explanation: None,
    };
    let yes = [
        ("entailment", "yes"),
        ("contradiction", "no"),
        ("neutral", "maybe"),
    ];
    let right = [
        ("entailment", "right"),
        ("contradiction", "wrong"),
        ("neutral", "maybe"),
    ];
    let rows: [(&[(&str, &str)], &str); 4] =
        [(&yes, quoted), (&yes, plain), (&right, quoted), (&right, plain)];
    let mut checked = 0;
    for task in [&snli, &hans] {
        ensure!(task.pvps.len() == 4, "{} has {} pvps", task.name, task.pvps.len());
        for (pvp, (words, pattern)) in task.pvps.iter().zip(rows) {
            let expected: Vec<&str> = task
                .labels
                .iter()
                .map(|l| {
                    words
                        .iter()
                        .find(|(name, _)| *name == l.name)
                        .map(|(_, w)| *w)
                        .unwrap()
                })
                .collect();
            ensure!(
                pvp.verbalizer == expected,
                "{}: verbalizer {:?}",
                pvp.id,
                pvp.verbalizer
            );
            let seq = apply_explanation_pattern(pvp, &placeholder(task), "expl", None)?;
            ensure!(seq.to_string() == pattern, "{}: {:?}", pvp.id, seq.to_string());
            checked += 1;
        }
    }
    Ok(format!("3 prompts, {checked} patterns"))
}

fn criterion_8() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let f = fixture(dir.path(), 12, 10)?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let cfg = f.config(RunMode::PredictThenExplain, 6, dir.path().join(run));
        let out = run_experiment::<f64>(&cfg)?;
        let bytes = std::fs::read(cfg.output_dir.join("predictions.jsonl"))?;
        outputs.push((bytes, out.manifest));
    }
    ensure!(outputs[0].0 == outputs[1].0, "prediction files differ");
    ensure!(
        outputs[0].1.fingerprint() == outputs[1].1.fingerprint(),
        "manifest digests differ"
    );
    Ok(format!(
        "{} prediction bytes, config digest {}",
        outputs[0].0.len(),
        &outputs[0].1.config_sha256[..12]
    ))
}

fn criterion_9() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let f = fixture(dir.path(), 32, 30)?;
    let pte = run_experiment::<f64>(&f.config(RunMode::PredictThenExplain, 16, dir.path().join("pte")))?;
    ensure!(
        pte.report.dev_accuracy == 1.0,
        "dev accuracy {}",
        pte.report.dev_accuracy
    );
    let twe = run_experiment::<f64>(&f.config(RunMode::TrainWithExplanation, 16, dir.path().join("twe")))?;
    ensure!(
        twe.report.test.accuracy < pte.report.test.accuracy,
        "train_with_explanation {} not below predict_then_explain {}",
        twe.report.test.accuracy,
        pte.report.test.accuracy
    );
    Ok(format!(
        "dev {}; test {:.3} (predict_then_explain) > {:.3} (train_with_explanation)",
        pte.report.dev_accuracy, pte.report.test.accuracy, twe.report.test.accuracy
    ))
}

type Check = fn() -> Result<String>;

fn main() {
    let criteria: [(u32, &str, Check, Duration); 9] = [
        (1, "prediction rule oracle", criterion_1, Duration::from_secs(5)),
        (2, "loss oracle", criterion_2, Duration::from_secs(5)),
        (
            3,
            "oracle explanations reach accuracy 1",
            criterion_3,
            Duration::from_secs(30),
        ),
        (
            4,
            "noun/verb probe flip rates",
            criterion_4,
            Duration::from_secs(30),
        ),
        (
            5,
            "explanations per example by scheme",
            criterion_5,
            Duration::from_secs(120),
        ),
        (
            6,
            "BLEU reference agreement",
            criterion_6,
            Duration::from_secs(120),
        ),
        (
            7,
            "golden prompts and patterns",
            criterion_7,
            Duration::from_secs(120),
        ),
        (8, "determinism", criterion_8, Duration::from_secs(120)),
        (9, "trainability", criterion_9, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            ensure!(took <= budget, "took {took:.2?}, budget {budget:?}");
            Ok(detail)
        });
        match result {
            Ok(detail) => println!("PASS criterion {id}: {name} ({detail}) [{took:.2?}]"),
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {id}: {name}: {e:#} [{took:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

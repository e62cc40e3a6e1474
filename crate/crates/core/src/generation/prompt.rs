//! Generation prompts and completion parsing.
//!
//! A predict-then-explain prompt puts the conditioning label's answer word before
//! `why?`:
//!
//! ```text
//! <premise> question: <hypothesis> <answer-word> why? ###
//! ```
//!
//! Explain-then-predict prompts leave the answer word out. Fine-tuning completions
//! append ` <explanation> ###`; for explain-then-predict the label name follows the
//! explanation so the label is positioned after it.

use super::GenerationError;
use crate::task::{Example, Label, Scheme, Slot, TaskSpec};

/// Default stop sequence separating prompt, explanation and trailer.
pub const DEFAULT_STOP: &str = "###";

pub fn build_generation_prompt(
    example: &Example,
    task: &TaskSpec,
    scheme: Scheme,
    conditioning_label: Option<&Label>,
) -> Result<String, GenerationError> {
    let answer = match (scheme, conditioning_label) {
        (Scheme::PredictThenExplain, Some(label)) => {
            let word = task
                .question_word
                .get(label.id)
                .and_then(Clone::clone)
                .ok_or_else(|| GenerationError::MissingQuestionWord(label.name.clone()))?;
            Some(word)
        }
        (Scheme::PredictThenExplain, None) => {
            return Err(GenerationError::Scheme(
                "predict_then_explain needs a conditioning label".into(),
            ))
        }
        (Scheme::ExplainThenPredict, None) => None,
        (Scheme::ExplainThenPredict, Some(_)) => {
            return Err(GenerationError::Scheme(
                "explain_then_predict takes no conditioning label".into(),
            ))
        }
        (Scheme::Gold, _) => {
            return Err(GenerationError::Scheme(
                "gold explanations are not generated".into(),
            ))
        }
    };
    task.generation_prompt_template
        .render(|slot| match slot {
            Slot::Premise => Some(example.premise.clone()),
            Slot::Hypothesis => Some(example.hypothesis.clone()),
            Slot::Answer => answer.clone(),
            Slot::Mask | Slot::Expl => None,
        })
        .map_err(|slot| {
            GenerationError::Scheme(format!(
                "generation prompt requires `{{{}}}` which {scheme} does not supply",
                slot.name()
            ))
        })
}

/// Prompt/completion pair used to fine-tune a generator on one labelled example.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TrainingPair {
    pub prompt: String,
    pub completion: String,
}

pub fn training_pair(
    example: &Example,
    task: &TaskSpec,
    scheme: Scheme,
) -> Result<TrainingPair, GenerationError> {
    let explanation = example
        .gold_explanation
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| GenerationError::MissingGold(vec![example.uid.clone()]))?;
    let (prompt, completion) = match scheme {
        Scheme::PredictThenExplain => (
            build_generation_prompt(example, task, scheme, Some(&example.gold_label))?,
            format!(" {explanation} {DEFAULT_STOP}"),
        ),
        Scheme::ExplainThenPredict => (
            build_generation_prompt(example, task, scheme, None)?,
            format!(" {explanation} {} {DEFAULT_STOP}", example.gold_label.name),
        ),
        Scheme::Gold => {
            return Err(GenerationError::Scheme(
                "gold explanations are not generated".into(),
            ))
        }
    };
    Ok(TrainingPair { prompt, completion })
}

/// Truncates `raw` at the earliest stop sequence and trims surrounding whitespace.
pub fn parse_completion(raw: &str, stop: &[String]) -> Result<String, GenerationError> {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| raw.find(s.as_str()))
        .min()
        .unwrap_or(raw.len());
    let text = raw[..cut].trim();
    if text.is_empty() {
        return Err(GenerationError::Degenerate);
    }
    Ok(text.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{ehans, esnli};

    fn example(task: &TaskSpec, premise: &str, hypothesis: &str, label: &str) -> Example {
        Example {
            uid: "x".into(),
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            gold_label: task.label_by_name(label).unwrap().clone(),
            gold_explanation: None,
        }
    }

    fn stops() -> Vec<String> {
        vec![DEFAULT_STOP.to_string()]
    }

    #[test]
    fn ehans_prompt_matches_exemplar() {
        let task = ehans();
        let ex = example(
            &task,
            "the manager that helped the technician addressed the illustrator .",
            "the manager helped the technician .",
            "entailment",
        );
        let prompt =
            build_generation_prompt(&ex, &task, Scheme::PredictThenExplain, Some(&ex.gold_label)).unwrap();
        assert_eq!(
            prompt,
            "the manager that helped the technician addressed the illustrator . question: the manager helped the technician . true why? ###"
        );
    }

    #[test]
    fn esnli_neutral_prompt_and_training_pair() {
        let task = esnli();
        let mut ex = example(
            &task,
            "Three people on a ski trail on a sunny day.",
            "There is nine feet of snow on the ground.",
            "neutral",
        );
        let prompt =
            build_generation_prompt(&ex, &task, Scheme::PredictThenExplain, Some(&ex.gold_label)).unwrap();
        assert!(prompt.ends_with("maybe why? ###"));
        ex.gold_explanation = Some("Not all ski trail has nine feet of snow on the ground.".into());
        let pair = training_pair(&ex, &task, Scheme::PredictThenExplain).unwrap();
        assert_eq!(
            format!("{}{}", pair.prompt, pair.completion),
            "Three people on a ski trail on a sunny day. question: There is nine feet of snow on the ground. maybe why? ### Not all ski trail has nine feet of snow on the ground. ###"
        );
    }

    #[test]
    fn explain_then_predict_omits_answer_word() {
        // Slot-filled by hand: premise + " question: " + hypothesis + " why? ###".
        let task = esnli();
        let fixtures = [
            ("A man sleeps.", "A person rests.", "entailment"),
            ("Two dogs run.", "Cats nap.", "contradiction"),
            ("A girl sings.", "She is on stage.", "neutral"),
        ];
        for (p, h, l) in fixtures {
            let ex = example(&task, p, h, l);
            let prompt = build_generation_prompt(&ex, &task, Scheme::ExplainThenPredict, None).unwrap();
            assert_eq!(prompt, format!("{p} question: {h} why? ###"));
        }
    }

    #[test]
    fn explain_then_predict_training_target_carries_label() {
        let task = ehans();
        let mut ex = example(&task, "p .", "h .", "neutral");
        ex.gold_explanation = Some("we do not know".into());
        let pair = training_pair(&ex, &task, Scheme::ExplainThenPredict).unwrap();
        assert_eq!(pair.completion, " we do not know neutral ###");
    }

    #[test]
    fn scheme_label_mismatch_rejected() {
        let task = ehans();
        let ex = example(&task, "p", "h", "neutral");
        assert!(build_generation_prompt(&ex, &task, Scheme::PredictThenExplain, None).is_err());
        assert!(
            build_generation_prompt(&ex, &task, Scheme::ExplainThenPredict, Some(&ex.gold_label)).is_err()
        );
    }

    #[test]
    fn missing_question_word_is_an_error() {
        let mut task = ehans();
        task.question_word[1] = None;
        let ex = example(&task, "p", "h", "neutral");
        assert!(matches!(
            build_generation_prompt(&ex, &task, Scheme::PredictThenExplain, Some(&ex.gold_label)),
            Err(GenerationError::MissingQuestionWord(l)) if l == "neutral"
        ));
    }

    #[test]
    fn parse_truncates_at_stop() {
        assert_eq!(
            parse_completion(
                "Not all ski trail has nine feet of snow on the ground. ### junk",
                &stops()
            )
            .unwrap(),
            "Not all ski trail has nine feet of snow on the ground."
        );
        assert_eq!(parse_completion("abc", &stops()).unwrap(), "abc");
        assert!(matches!(
            parse_completion("   ### ", &stops()),
            Err(GenerationError::Degenerate)
        ));
    }

    #[test]
    fn parse_uses_earliest_stop() {
        let stops = vec!["###".to_string(), "\n".to_string()];
        assert_eq!(parse_completion(" a\nb ### c", &stops).unwrap(), "a");
    }

    proptest::proptest! {
        #[test]
        fn parse_is_idempotent(raw in "[a-z #\\n]{0,40}") {
            let stops = stops();
            if let Ok(once) = parse_completion(&raw, &stops) {
                proptest::prop_assert_eq!(parse_completion(&once, &stops).unwrap(), once);
            }
        }
    }
}

use proptest::prelude::*;

use vcass_core::instruct::{
    style_sentence, CotMode, InstructionBuilder, MockLlm, ScriptedCompletion, Transcript, LLM_INFERRED,
};
use vcass_core::kb::{match_cues, KnowledgeBase, VocalStyle};
use vcass_core::prompts::{declared_step, CotStep, LlmPromptFamily};
use vcass_core::synth::{request_for, SynthesisMode};
use vcass_core::vision::{parse_report, VisualCueReport};
use vcass_core::Error;

const GOLDEN: &str = include_str!("fixtures/festival_vlm_response.txt");

const CLASSIFY_OK: &str = "classified_cues:\n- warm golden and orange tones | color\n";
const STATES_OK: &str = "emotional_states:\n- warmth and joy | color-warm-joy\n";
const STYLE_OK: &str = "tone: warm and cheerful\npitch: high bright\nrhythm_pace: moderate\nvolume: normal\nsummary: A festive evening.\n";

fn builder<'a>(
    kb: &'a KnowledgeBase,
    family: &'a LlmPromptFamily,
    backend: &'a dyn vcass_core::instruct::CompletionBackend,
    single_shot: bool,
) -> InstructionBuilder<'a> {
    InstructionBuilder { kb, prompts: family, backend, single_shot }
}

fn golden() -> VisualCueReport {
    parse_report(GOLDEN).unwrap()
}

#[test]
fn chained_mode_makes_three_ordered_calls_with_knowledge() {
    let kb = KnowledgeBase::builtin();
    let family = LlmPromptFamily::builtin();
    let report = golden();
    let matches = match_cues(&kb, &report);
    let scripted = ScriptedCompletion::new([CLASSIFY_OK, STATES_OK, STYLE_OK]);
    let transcript = Transcript::new("Lanterns glow.", "en").unwrap();
    let (ins, trace) = builder(&kb, &family, &scripted, false).build(&report, &matches, &transcript).unwrap();

    let prompts = scripted.prompts();
    assert_eq!(prompts.len(), 3);
    let steps: Vec<_> = prompts.iter().map(|p| declared_step(p).unwrap()).collect();
    assert_eq!(steps, [CotStep::Classify, CotStep::MapEmotion, CotStep::Compose]);
    // the matched rules are infused into the first prompt
    assert!(prompts[0].contains("- color-warm-joy | color | warmth and joy |"));
    assert!(prompts[0].contains("- [color_composition] warm golden and orange tones"));
    assert!(prompts[2].contains("Lanterns glow."));

    assert_eq!(trace.mode, CotMode::Chained);
    assert_eq!(trace.backend_calls, 3);
    assert!(!trace.repaired);
    assert_eq!(trace.step1_classified_cues.len(), 1);
    assert!(trace.step2_emotional_states[0].is_grounded());
    assert_eq!(trace.step3_raw, STYLE_OK);
    assert_eq!(ins.trace_ref, trace.trace_id);
    assert_eq!(
        ins.rendered_instruction,
        "Speak with a warm and cheerful tone, high pitch (bright), a moderate pace and normal volume. \
         A festive evening. Say: \"Lanterns glow.\""
    );
}

#[test]
fn single_shot_is_one_call() {
    let kb = KnowledgeBase::builtin();
    let family = LlmPromptFamily::builtin();
    let report = golden();
    let matches = match_cues(&kb, &report);
    let transcript = Transcript::new("Lanterns glow.", "en").unwrap();
    let answer = format!("{CLASSIFY_OK}{STATES_OK}{STYLE_OK}");
    let scripted = ScriptedCompletion::new([answer]);
    let (_, trace) = builder(&kb, &family, &scripted, true).build(&report, &matches, &transcript).unwrap();
    assert_eq!(trace.backend_calls, 1);
    assert_eq!(trace.mode, CotMode::SingleShot);
    assert_eq!(declared_step(&scripted.prompts()[0]), Some(CotStep::SingleShot));

    let (_, mock_trace) = builder(&kb, &family, &MockLlm, true).build(&report, &matches, &transcript).unwrap();
    assert_eq!(mock_trace.backend_calls, 1);
}

#[test]
fn one_repair_retry_then_success() {
    let kb = KnowledgeBase::builtin();
    let family = LlmPromptFamily::builtin();
    let report = golden();
    let matches = match_cues(&kb, &report);
    let transcript = Transcript::new("Lanterns glow.", "en").unwrap();
    let bad_states = "emotional_states:\n- joy | no-such-rule\n";
    let scripted = ScriptedCompletion::new([CLASSIFY_OK, bad_states, STATES_OK, STYLE_OK]);
    let (_, trace) = builder(&kb, &family, &scripted, false).build(&report, &matches, &transcript).unwrap();
    assert_eq!(trace.backend_calls, 4);
    assert!(trace.repaired);
    let prompts = scripted.prompts();
    assert!(prompts[2].contains("### validation error"));
    assert!(prompts[2].contains("no-such-rule"));
}

#[test]
fn second_invalid_answer_is_instruction_invalid() {
    let kb = KnowledgeBase::builtin();
    let family = LlmPromptFamily::builtin();
    let report = golden();
    let matches = match_cues(&kb, &report);
    let transcript = Transcript::new("Lanterns glow.", "en").unwrap();
    let scripted = ScriptedCompletion::new([CLASSIFY_OK, STATES_OK, "nothing useful", "still nothing"]);
    let err = builder(&kb, &family, &scripted, false).build(&report, &matches, &transcript).unwrap_err();
    assert!(matches!(err, Error::InstructionInvalid(_)), "{err:?}");
    assert_eq!(err.exit_code(), 3);
    assert_eq!(scripted.prompts().len(), 4);

    // the retry budget is shared by the whole chain
    let scripted = ScriptedCompletion::new(["junk", CLASSIFY_OK, "junk", STATES_OK, STYLE_OK]);
    let err = builder(&kb, &family, &scripted, false).build(&report, &matches, &transcript).unwrap_err();
    assert!(matches!(err, Error::InstructionInvalid(_)));
    assert_eq!(scripted.prompts().len(), 3);
}

#[test]
fn no_matches_gives_neutral_delivery() {
    let kb = KnowledgeBase::builtin();
    let family = LlmPromptFamily::builtin();
    let report = parse_report("emotional_tone:\n- quietude\n").unwrap();
    let matches = match_cues(&kb, &report);
    assert!(matches.is_empty());
    let transcript = Transcript::new("Hello there.", "en").unwrap();
    let (ins, trace) = builder(&kb, &family, &MockLlm, false).build(&report, &matches, &transcript).unwrap();
    assert_eq!(ins.style_directives, VocalStyle::neutral());
    assert!(ins.rendered_instruction.starts_with("Speak in a neutral, even tone."));
    assert!(ins.rendered_instruction.ends_with("Say: \"Hello there.\""));
    // the unmatched cue is kept, tagged as model-inferred
    assert!(trace
        .step2_emotional_states
        .iter()
        .all(|s| s.support == [LLM_INFERRED.to_string()]));
}

#[test]
fn mock_states_cite_only_known_rules() {
    let kb = KnowledgeBase::builtin();
    let family = LlmPromptFamily::builtin();
    let report = golden();
    let matches = match_cues(&kb, &report);
    let transcript = Transcript::new("Hello there.", "en").unwrap();
    let (_, trace) = builder(&kb, &family, &MockLlm, false).build(&report, &matches, &transcript).unwrap();
    assert!(!trace.step2_emotional_states.is_empty());
    for state in &trace.step2_emotional_states {
        for id in &state.support {
            assert!(id == LLM_INFERRED || kb.contains(id), "{id}");
        }
    }
    let json = serde_json::to_string(&trace).unwrap();
    assert_eq!(serde_json::from_str::<vcass_core::instruct::CotTrace>(&json).unwrap(), trace);
}

#[test]
fn transcript_validation() {
    assert!(Transcript::new("  ", "en").is_err());
    assert!(Transcript::new("ok", "en_US").is_err());
    assert!(Transcript::new("ok", "zh-Hans-CN").is_ok());
    let mut t = Transcript::new("two words", "en").unwrap();
    t.word_count = 3;
    assert!(matches!(t.validate(), Err(Error::InvalidInput(_))));
}

fn transcript_text() -> impl Strategy<Value = String> {
    "\\PC{1,60}".prop_filter("needs a visible character", |s| !s.trim().is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn transcript_survives_verbatim(text in transcript_text(), single_shot in any::<bool>()) {
        let kb = KnowledgeBase::builtin();
        let family = LlmPromptFamily::builtin();
        let report = golden();
        let matches = match_cues(&kb, &report);
        let transcript = Transcript::new(text.clone(), "en").unwrap();
        let (ins, _) = builder(&kb, &family, &MockLlm, single_shot).build(&report, &matches, &transcript).unwrap();
        prop_assert!(ins.rendered_instruction.contains(&text));
        prop_assert_eq!(&ins.transcript.text, &text);

        let expressive = request_for(&ins, SynthesisMode::Expressive);
        prop_assert_eq!(&expressive.instruction, &ins.rendered_instruction);
        let baseline = request_for(&ins, SynthesisMode::NeutralBaseline);
        prop_assert_eq!(&baseline.instruction, &text);
        let sentence = style_sentence(&ins.style_directives);
        prop_assert!(!String::from_utf8(baseline.body()).unwrap().contains(&sentence));
    }
}

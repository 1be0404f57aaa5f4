//! Wire contracts of the HTTP adapters against a local scripted server.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use vcass_core::backend::BackendEndpoint;
use vcass_core::eval::{Embedder, HttpEmbedder};
use vcass_core::instruct::{CompletionBackend, HttpCompletion, InstructionBuilder, Transcript};
use vcass_core::kb::{match_cues, KnowledgeBase};
use vcass_core::media::{Keyframe, KeyframeSet};
use vcass_core::prompts::{LlmPromptFamily, VlmPrompt};
use vcass_core::synth::{synthesize, HttpSpeech, SynthesisMode};
use vcass_core::vision::{self, HttpVision, VisualCueReport};
use vcass_core::wav::encode_mono16;
use vcass_core::Error;

enum Reply {
    Json(u16, Value),
    Raw(u16, Vec<u8>, &'static str),
    Stall(Duration),
}

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    body: Vec<u8>,
    auth: Option<String>,
}

struct Server {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl Server {
    fn start(replies: Vec<Reply>) -> Server {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://127.0.0.1:{}", server.server_addr().to_ip().unwrap().port());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        thread::spawn(move || {
            for reply in replies {
                let Ok(mut req) = server.recv() else { return };
                let mut body = Vec::new();
                req.as_reader().read_to_end(&mut body).unwrap();
                let auth = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.as_str().to_string());
                log.lock().unwrap().push(Seen { path: req.url().to_string(), body, auth });
                let (status, bytes, ctype) = match reply {
                    Reply::Json(s, v) => (s, serde_json::to_vec(&v).unwrap(), "application/json"),
                    Reply::Raw(s, b, c) => (s, b, c),
                    Reply::Stall(d) => {
                        thread::sleep(d);
                        (200, b"{}".to_vec(), "application/json")
                    }
                };
                let header = tiny_http::Header::from_bytes("Content-Type", ctype).unwrap();
                let _ = req.respond(tiny_http::Response::from_data(bytes).with_status_code(status).with_header(header));
            }
        });
        Server { url, seen }
    }

    fn endpoint(&self) -> BackendEndpoint {
        BackendEndpoint { backoff_base_s: 0.01, ..BackendEndpoint::http(&self.url) }
    }

    fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn png_keyframes(dir: &std::path::Path) -> KeyframeSet {
    let png = vcass_core::media::still::encode_rgb_png(2, 1, &[255, 0, 0, 0, 255, 0]).unwrap();
    let path = dir.join("frame_000000.png");
    std::fs::write(&path, &png).unwrap();
    KeyframeSet {
        frames: vec![Keyframe {
            index: 0,
            timestamp_s: 0.0,
            image_path: path,
            content_hash: vcass_core::digest::sha256_hex(&png),
        }],
    }
}

#[test]
fn analyze_posts_prompt_and_base64_frames_with_bearer_token() {
    std::env::set_var("VCASS_TEST_VLM_TOKEN", "s3cret");
    let text = "visual_effects:\n- lantern glow\nemotional_tone:\n- festivity\n";
    let server = Server::start(vec![Reply::Json(200, json!({ "text": text }))]);
    let endpoint = BackendEndpoint { auth_token_env: Some("VCASS_TEST_VLM_TOKEN".into()), ..server.endpoint() };
    let dir = tempfile::tempdir().unwrap();
    let set = png_keyframes(dir.path());
    let report = vision::analyze(&set, &VlmPrompt::builtin(), &HttpVision::new(&endpoint).unwrap()).unwrap();
    assert_eq!(report.visual_effects, ["lantern glow"]);
    assert_eq!(report.emotional_tone, ["festivity"]);
    assert_eq!(report.source_hashes, set.hashes());

    let seen = server.seen();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/analyze");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer s3cret"));
    let body: Value = serde_json::from_slice(&seen[0].body).unwrap();
    assert!(body["prompt"].as_str().unwrap().contains("visual_effects"));
    assert_eq!(body["frames"][0]["hash"], set.frames[0].content_hash.as_str());
    assert!(body["frames"][0]["png_base64"].as_str().unwrap().starts_with("iVBOR"));
}

#[test]
fn missing_token_variable_is_a_config_error() {
    let endpoint = BackendEndpoint {
        auth_token_env: Some("VCASS_TEST_UNSET_TOKEN_VAR".into()),
        ..BackendEndpoint::http("http://127.0.0.1:9")
    };
    let err = HttpCompletion::new(&endpoint).unwrap().complete("hi").unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err:?}");
}

#[test]
fn empty_analyze_text_is_a_parse_failure() {
    let server = Server::start(vec![Reply::Json(200, json!({ "text": "" }))]);
    let dir = tempfile::tempdir().unwrap();
    let err = vision::analyze(&png_keyframes(dir.path()), &VlmPrompt::builtin(), &HttpVision::new(&server.endpoint()).unwrap())
        .unwrap_err();
    assert!(matches!(err, Error::ParseFailure { .. }), "{err:?}");
}

#[test]
fn complete_runs_three_chained_calls() {
    let server = Server::start(vec![
        Reply::Json(200, json!({ "text": "classified_cues:\n- soft light with slight shadow | lighting\n" })),
        Reply::Json(200, json!({ "text": "emotional_states:\n- hope | light-soft-hope\n" })),
        Reply::Json(200, json!({ "text": "tone: hopeful\npitch: mid\nsummary: A hopeful glow.\n" })),
    ]);
    let kb = KnowledgeBase::builtin();
    let prompts = LlmPromptFamily::builtin();
    let llm = HttpCompletion::new(&server.endpoint()).unwrap();
    let report = VisualCueReport { visual_effects: vec!["soft light with slight shadow".into()], ..Default::default() };
    let matches = match_cues(&kb, &report);
    let builder = InstructionBuilder { kb: &kb, prompts: &prompts, backend: &llm, single_shot: false };
    let (ins, trace) = builder.build(&report, &matches, &Transcript::new("Dawn breaks.", "en").unwrap()).unwrap();
    assert_eq!(ins.rendered_instruction, "Speak with a hopeful tone and mid pitch. A hopeful glow. Say: \"Dawn breaks.\"");
    assert_eq!(trace.backend_calls, 3);

    let seen = server.seen();
    assert_eq!(seen.iter().map(|s| s.path.as_str()).collect::<Vec<_>>(), ["/v1/complete"; 3]);
    let prompts_sent: Vec<String> = seen
        .iter()
        .map(|s| serde_json::from_slice::<Value>(&s.body).unwrap()["prompt"].as_str().unwrap().to_string())
        .collect();
    assert!(prompts_sent[0].contains("### step: classify"));
    assert!(prompts_sent[0].contains("light-soft-hope"), "knowledge is infused");
    assert!(prompts_sent[1].contains("soft light with slight shadow | lighting"), "step 1 output feeds step 2");
    assert!(prompts_sent[2].contains("hope | light-soft-hope"), "step 2 output feeds step 3");
    assert!(prompts_sent[2].contains("Dawn breaks."));
}

#[test]
fn synthesize_resamples_foreign_rates_and_rejects_stereo() {
    let wav44 = encode_mono16(&vec![1000; 44100], 44100);
    let mut stereo = encode_mono16(&vec![0; 100], 22050);
    stereo[22] = 2; // channel count
    let server = Server::start(vec![Reply::Raw(200, wav44, "audio/wav"), Reply::Raw(200, stereo, "audio/wav")]);
    let tts = HttpSpeech::new(&server.endpoint()).unwrap();
    let transcript = Transcript::new("Hello there.", "en").unwrap();
    let ins = vcass_core::instruct::SpeechInstruction {
        rendered_instruction: format!("Speak in a neutral, even tone. Say: \"{}\"", transcript.text),
        transcript,
        style_directives: vcass_core::kb::VocalStyle::neutral(),
        emotional_summary: String::new(),
        trace_ref: "t".into(),
    };
    let clip = synthesize(&ins, SynthesisMode::Expressive, &tts).unwrap();
    assert_eq!(clip.sample_rate_hz, 22050);
    assert!((clip.duration_s - 1.0).abs() < 1e-6);
    let body: Value = serde_json::from_slice(&server.seen()[0].body).unwrap();
    assert_eq!(body, json!({ "instruction": ins.rendered_instruction }));
    assert_eq!(clip.source_instruction_hash, vcass_core::digest::sha256_hex(&server.seen()[0].body));

    let err = synthesize(&ins, SynthesisMode::Expressive, &tts).unwrap_err();
    assert!(matches!(err, Error::AudioInvalid { field: "channels", .. }), "{err:?}");
}

#[test]
fn embed_contract() {
    let server = Server::start(vec![Reply::Json(200, json!({ "vectors": [[1.0, 0.0], [0.0, 1.0]] }))]);
    let vectors = HttpEmbedder::new(&server.endpoint()).unwrap().embed(&["a".into(), "b".into()]).unwrap();
    assert_eq!(vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    let body: Value = serde_json::from_slice(&server.seen()[0].body).unwrap();
    assert_eq!(body, json!({ "texts": ["a", "b"] }));
    assert_eq!(server.seen()[0].path, "/v1/embed");
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let server = Server::start(vec![
        Reply::Json(503, json!({})),
        Reply::Json(500, json!({})),
        Reply::Json(200, json!({ "text": "ok" })),
    ]);
    let endpoint = BackendEndpoint { max_retries: 2, ..server.endpoint() };
    assert_eq!(HttpCompletion::new(&endpoint).unwrap().complete("p").unwrap(), "ok");
    assert_eq!(server.seen().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = Server::start(vec![Reply::Json(400, json!({ "error": "bad prompt" })), Reply::Json(200, json!({ "text": "late" }))]);
    let endpoint = BackendEndpoint { max_retries: 3, ..server.endpoint() };
    let err = HttpCompletion::new(&endpoint).unwrap().complete("p").unwrap_err();
    match &err {
        Error::BackendRejected { status, body, .. } => {
            assert_eq!(*status, 400);
            assert!(body.contains("bad prompt"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(err.exit_code(), 3);
    assert_eq!(server.seen().len(), 1);
}

#[test]
fn exhausted_retries_time_out() {
    let server = Server::start(vec![Reply::Stall(Duration::from_millis(600)), Reply::Stall(Duration::from_millis(600))]);
    let endpoint = BackendEndpoint { timeout_s: 0.2, max_retries: 1, ..server.endpoint() };
    let err = HttpCompletion::new(&endpoint).unwrap().complete("p").unwrap_err();
    assert!(matches!(err, Error::BackendTimeout { attempts: 2, .. }), "{err:?}");
}

#[test]
fn malformed_json_is_a_parse_failure() {
    let server = Server::start(vec![Reply::Raw(200, b"<html>".to_vec(), "text/html")]);
    let err = HttpCompletion::new(&server.endpoint()).unwrap().complete("p").unwrap_err();
    assert!(matches!(err, Error::ParseFailure { .. }), "{err:?}");
}

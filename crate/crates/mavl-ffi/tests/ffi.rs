//! Exercise the C entry points the way a foreign caller would: through raw
//! pointers and owned C strings.

use std::ffi::{CStr, CString};
use std::ptr;

use mavl_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Take ownership of a returned string and free it through the ABI.
fn take(ptr: *mut std::ffi::c_char) -> String {
    assert!(!ptr.is_null(), "last error: {}", last_error());
    let owned = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string();
    unsafe { mavl_string_free(ptr) };
    owned
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mavl_last_error_message()) }
        .to_string_lossy()
        .to_string()
}

#[test]
fn normalize_answer_round_trip() {
    let raw = c("  The Grey   Wolf. ");
    let out = take(unsafe { mavl_normalize_answer(raw.as_ptr()) });
    assert_eq!(out, "grey wolf");
    assert!(unsafe { mavl_normalize_answer(ptr::null()) }.is_null());
    assert!(last_error().contains("null"));
}

#[test]
fn soft_accuracy_and_error_codes() {
    let predicted = c("elephant");
    let gold = c(r#"["elephant","Elephant.","the elephant","a","b","c","d","e","f","g"]"#);
    let mut score = -1.0f64;
    let status =
        unsafe { mavl_vqa_soft_accuracy(predicted.as_ptr(), gold.as_ptr(), &mut score) };
    assert_eq!(status, MavlStatus::Ok);
    assert_eq!(score, 1.0);

    let short = c(r#"["one","two"]"#);
    let status = unsafe { mavl_vqa_soft_accuracy(predicted.as_ptr(), short.as_ptr(), &mut score) };
    assert_eq!(status, MavlStatus::InvalidArgument);
    assert!(last_error().contains("10"));

    let invalid = c("not json");
    let status =
        unsafe { mavl_vqa_soft_accuracy(predicted.as_ptr(), invalid.as_ptr(), &mut score) };
    assert_eq!(status, MavlStatus::ParseError);
}

#[test]
fn plan_parsing_clamps_to_role() {
    let raw = c("Action_3, Action_1 please");
    let junior: serde_json::Value =
        serde_json::from_str(&take(unsafe { mavl_parse_plan(raw.as_ptr(), MavlRole::Junior) }))
            .unwrap();
    assert_eq!(junior["actions"], serde_json::json!(["Action_1"]));
    assert_eq!(junior["fallback"], false);

    let manager: serde_json::Value =
        serde_json::from_str(&take(unsafe { mavl_parse_plan(raw.as_ptr(), MavlRole::Manager) }))
            .unwrap();
    assert_eq!(manager["actions"], serde_json::json!(["Action_1", "Action_3"]));

    let garbage = c("no actions at all");
    let fallback: serde_json::Value = serde_json::from_str(&take(unsafe {
        mavl_parse_plan(garbage.as_ptr(), MavlRole::Senior)
    }))
    .unwrap();
    assert_eq!(fallback["actions"], serde_json::json!(["Action_1", "Action_2"]));
    assert_eq!(fallback["fallback"], true);
}

#[test]
fn planner_prompt_is_role_scoped() {
    let task = c("Context: c\nQuestion: q");
    let prompt = take(unsafe { mavl_build_planner_prompt(MavlRole::Junior, task.as_ptr()) });
    assert!(prompt.starts_with("You are junior planner."));
    assert!(prompt.ends_with("the response should be like this: Action_1"));
}

#[test]
fn prompt_rendering_from_json() {
    let doc = c(r#"{
        "head": "Please answer the question according to the context.",
        "examples": [{"caption": "c1", "question": "q1", "answer": "a1"}],
        "test": {"caption": "tc", "question": "tq"}
    }"#);
    let rendered = take(unsafe { mavl_render_prompt(doc.as_ptr()) });
    assert_eq!(
        rendered,
        "Please answer the question according to the context.\n=====\n\
         Context: c1\nQuestion: q1\nAnswer: a1\n=====\n\
         Context: tc\nQuestion: tq\nAnswer:"
    );

    let bad = c(r#"{"head": "h", "test": {"caption": "c", "question": "q", "answer": "oops"}}"#);
    assert!(unsafe { mavl_render_prompt(bad.as_ptr()) }.is_null());
}

#[test]
fn weighted_voting_over_the_abi() {
    let votes = c(r#"[
        {"role": "junior", "answer": "Elephant.", "weight": 2},
        {"role": "senior", "answer": "elephant", "weight": 3},
        {"role": "manager", "answer": "mammoth", "weight": 4}
    ]"#);
    let tally: serde_json::Value =
        serde_json::from_str(&take(unsafe { mavl_tally_votes(votes.as_ptr()) })).unwrap();
    assert_eq!(tally["winner"], "elephant");
    assert_eq!(tally["tie_broken"], false);
    assert_eq!(tally["totals"]["elephant"], 5);
    assert_eq!(tally["totals"]["mammoth"], 4);

    let empty = c("[]");
    assert!(unsafe { mavl_tally_votes(empty.as_ptr()) }.is_null());
}

#[test]
fn kb_index_lifecycle_behind_opaque_handle() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(
        &corpus,
        concat!(
            "{\"id\":\"d1\",\"title\":\"Skiing\",\"text\":\"skiing involves riding down snow slopes on skis\"}\n",
            "{\"id\":\"d2\",\"title\":\"Elephant\",\"text\":\"the elephant is the largest land animal\"}\n",
        ),
    )
    .unwrap();
    let corpus_c = c(corpus.to_str().unwrap());
    let index = unsafe { mavl_kb_index_build(corpus_c.as_ptr(), false) };
    assert!(!index.is_null(), "{}", last_error());
    assert_eq!(unsafe { mavl_kb_index_len(index) }, 2);

    let caption = c("A man riding skis down a snow covered slope.");
    let question = c("What is this man on?");
    let hits_json = take(unsafe { mavl_kb_retrieve(index, caption.as_ptr(), question.as_ptr(), 2) });
    let hits: serde_json::Value = serde_json::from_str(&hits_json).unwrap();
    assert_eq!(hits.as_array().unwrap().len(), 1);
    assert_eq!(hits[0]["doc_id"], "d1");

    let sidecar = dir.path().join("corpus.idx");
    let sidecar_c = c(sidecar.to_str().unwrap());
    assert_eq!(
        unsafe { mavl_kb_index_save(index, sidecar_c.as_ptr()) },
        MavlStatus::Ok
    );
    unsafe { mavl_kb_index_free(index) };

    let reloaded = unsafe { mavl_kb_index_load(sidecar_c.as_ptr()) };
    assert!(!reloaded.is_null());
    assert_eq!(unsafe { mavl_kb_index_len(reloaded) }, 2);
    unsafe { mavl_kb_index_free(reloaded) };

    let missing = c("/no/such/corpus.jsonl");
    assert!(unsafe { mavl_kb_index_build(missing.as_ptr(), false) }.is_null());
    unsafe { mavl_kb_index_free(ptr::null_mut()) };
}

#[test]
fn generated_header_compiles_as_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mavl.h");
    assert!(header.exists(), "cbindgen output missing");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "mavl_normalize_answer",
        "mavl_vqa_soft_accuracy",
        "mavl_tally_votes",
        "mavl_kb_index_build",
        "MavlStatus",
        "struct MavlKbIndex",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }

    // Syntax-check the header with the system C compiler when present.
    let cc = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| std::process::Command::new(cc).arg("--version").output().is_ok());
    let Some(cc) = cc else {
        eprintln!("no C compiler found, skipping syntax check");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let smoke = dir.path().join("smoke.c");
    std::fs::write(
        &smoke,
        "#include \"mavl.h\"\n\
         int main(void) {\n\
           double score = 0.0;\n\
           MavlStatus status = mavl_vqa_soft_accuracy(0, 0, &score);\n\
           (void)status;\n\
           char *s = mavl_normalize_answer(0);\n\
           mavl_string_free(s);\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let output = std::process::Command::new(cc)
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&smoke)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "header failed C syntax check: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

//! C ABI over the voting engine's core operations so other languages can
//! bind: answer normalization, the soft-accuracy metric, plan parsing,
//! prompt rendering, weighted voting, and knowledge-base retrieval behind
//! an opaque index handle.
//!
//! Conventions: functions returning `*mut c_char` yield a UTF-8 string the
//! caller must release with [`mavl_string_free`], or null on failure;
//! functions returning [`MavlStatus`] report errors through the code plus
//! [`mavl_last_error_message`]. Structured inputs and outputs are JSON.

#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use serde::{Deserialize, Serialize};

use mavl::agent::Plan;
use mavl::domain::{normalize_answer, vqa_soft_accuracy, AgentAnswer, AgentRole};
use mavl::orchestrator::{tally_votes, AgentSpec};
use mavl::prompting::{build_planner_prompt, ExampleRecord, PromptDocument, PromptHead};
use mavl::tools::{build_kb_index, KbIndex};
use mavl::ParseMode;

/// Result codes for fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MavlStatus {
    Ok = 0,
    /// A pointer was null or a string was not valid UTF-8.
    InvalidArgument = 1,
    /// JSON or corpus input could not be parsed.
    ParseError = 2,
    IoError = 3,
    /// No votes remained after abstentions.
    NoAnswer = 4,
    InternalError = 5,
}

/// Agent roles exposed across the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MavlRole {
    Junior = 0,
    Senior = 1,
    Manager = 2,
}

impl From<MavlRole> for AgentRole {
    fn from(role: MavlRole) -> Self {
        match role {
            MavlRole::Junior => AgentRole::Junior,
            MavlRole::Senior => AgentRole::Senior,
            MavlRole::Manager => AgentRole::Manager,
        }
    }
}

/// Opaque knowledge-base index handle.
pub struct MavlKbIndex {
    inner: KbIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl ToString) {
    let message = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn mavl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by one of the
/// string-returning functions here, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_string_free(s: *mut c_char) {
    if s.is_null() {
        return;
    }
    // SAFETY: caller guarantees `s` came from CString::into_raw here.
    drop(unsafe { CString::from_raw(s) });
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, MavlStatus> {
    if ptr.is_null() {
        set_last_error("null pointer argument");
        return Err(MavlStatus::InvalidArgument);
    }
    // SAFETY: caller guarantees `ptr` is a valid nul-terminated string.
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_last_error("string is not valid UTF-8");
        MavlStatus::InvalidArgument
    })
}

fn into_c_string(s: String) -> *mut c_char {
    match CString::new(s) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            set_last_error("result contains an interior nul byte");
            ptr::null_mut()
        }
    }
}

/// Canonicalize an answer string (lowercase, strip punctuation and leading
/// articles, collapse whitespace). Returns a new string; free with
/// [`mavl_string_free`].
///
/// # Safety
/// `raw` must be a valid nul-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_normalize_answer(raw: *const c_char) -> *mut c_char {
    match unsafe { read_str(raw) } {
        Ok(raw) => into_c_string(normalize_answer(raw)),
        Err(_) => ptr::null_mut(),
    }
}

/// Soft accuracy of `predicted` against `gold_json`, a JSON array of
/// exactly 10 annotation strings. Writes the score into `out_score`.
///
/// # Safety
/// `predicted` and `gold_json` must be valid nul-terminated UTF-8 strings;
/// `out_score` must point to writable memory for one f64.
#[no_mangle]
pub unsafe extern "C" fn mavl_vqa_soft_accuracy(
    predicted: *const c_char,
    gold_json: *const c_char,
    out_score: *mut f64,
) -> MavlStatus {
    if out_score.is_null() {
        set_last_error("out_score is null");
        return MavlStatus::InvalidArgument;
    }
    let (predicted, gold_json) =
        match (unsafe { read_str(predicted) }, unsafe { read_str(gold_json) }) {
            (Ok(p), Ok(g)) => (p, g),
            _ => return MavlStatus::InvalidArgument,
        };
    let gold: Vec<String> = match serde_json::from_str(gold_json) {
        Ok(gold) => gold,
        Err(e) => {
            set_last_error(format!("gold answers: {e}"));
            return MavlStatus::ParseError;
        }
    };
    match vqa_soft_accuracy(predicted, &gold) {
        Ok(score) => {
            // SAFETY: caller guarantees out_score is writable.
            unsafe { *out_score = score };
            MavlStatus::Ok
        }
        Err(e) => {
            set_last_error(e);
            MavlStatus::InvalidArgument
        }
    }
}

#[derive(Serialize)]
struct PlanWire {
    actions: Vec<String>,
    fallback: bool,
}

/// Parse raw planner output for a role: extract action tokens, clamp to
/// the role's scope, fall back to the full allowed set when empty. Returns
/// JSON `{"actions": [...], "fallback": bool}`.
///
/// # Safety
/// `raw` must be a valid nul-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_parse_plan(raw: *const c_char, role: MavlRole) -> *mut c_char {
    let raw = match unsafe { read_str(raw) } {
        Ok(raw) => raw,
        Err(_) => return ptr::null_mut(),
    };
    let plan = Plan::parse_and_clamp(raw, role.into());
    let wire = PlanWire {
        actions: plan.tokens(),
        fallback: plan.fallback,
    };
    into_c_string(serde_json::to_string(&wire).expect("plan serializes"))
}

/// Render the role-scoped planner prompt for a task string.
///
/// # Safety
/// `task` must be a valid nul-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_build_planner_prompt(
    role: MavlRole,
    task: *const c_char,
) -> *mut c_char {
    match unsafe { read_str(task) } {
        Ok(task) => into_c_string(build_planner_prompt(role.into(), task)),
        Err(_) => ptr::null_mut(),
    }
}

#[derive(Deserialize)]
struct DocumentWire {
    head: String,
    #[serde(default)]
    examples: Vec<ExampleRecord>,
    test: ExampleRecord,
}

/// Render a full prompt document from JSON
/// `{"head": "...", "examples": [...], "test": {...}}` where each record
/// has `caption`, `question` and optional `answer`, `candidates`,
/// `kbs_knowledge`, `llm_knowledge` fields.
///
/// # Safety
/// `doc_json` must be a valid nul-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_render_prompt(doc_json: *const c_char) -> *mut c_char {
    let doc_json = match unsafe { read_str(doc_json) } {
        Ok(doc) => doc,
        Err(_) => return ptr::null_mut(),
    };
    let wire: DocumentWire = match serde_json::from_str(doc_json) {
        Ok(wire) => wire,
        Err(e) => {
            set_last_error(format!("prompt document: {e}"));
            return ptr::null_mut();
        }
    };
    let head = match PromptHead::custom(wire.head) {
        Ok(head) => head,
        Err(e) => {
            set_last_error(e);
            return ptr::null_mut();
        }
    };
    match PromptDocument::new(head, wire.examples, wire.test) {
        Ok(doc) => into_c_string(doc.render()),
        Err(e) => {
            set_last_error(e);
            ptr::null_mut()
        }
    }
}

#[derive(Deserialize)]
struct VoteWire {
    role: String,
    answer: String,
    weight: u32,
}

#[derive(Serialize)]
struct TallyWire {
    winner: String,
    tie_broken: bool,
    totals: BTreeMap<String, u32>,
}

fn role_from_name(name: &str) -> Option<AgentRole> {
    AgentRole::ALL.into_iter().find(|r| r.name() == name)
}

/// Tally weighted votes from JSON
/// `[{"role": "junior", "answer": "...", "weight": 2}, ...]`. Answers are
/// normalized before pooling. Returns JSON
/// `{"winner": "...", "tie_broken": bool, "totals": {...}}`.
///
/// # Safety
/// `votes_json` must be a valid nul-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_tally_votes(votes_json: *const c_char) -> *mut c_char {
    let votes_json = match unsafe { read_str(votes_json) } {
        Ok(v) => v,
        Err(_) => return ptr::null_mut(),
    };
    let wire: Vec<VoteWire> = match serde_json::from_str(votes_json) {
        Ok(wire) => wire,
        Err(e) => {
            set_last_error(format!("votes: {e}"));
            return ptr::null_mut();
        }
    };
    let mut answers = Vec::with_capacity(wire.len());
    let mut specs = Vec::with_capacity(wire.len());
    for vote in &wire {
        let Some(role) = role_from_name(&vote.role) else {
            set_last_error(format!("unknown role {:?}", vote.role));
            return ptr::null_mut();
        };
        answers.push(AgentAnswer {
            role,
            raw_answer: vote.answer.clone(),
            normalized_answer: normalize_answer(&vote.answer),
            executed_plan: Plan::forced_empty(role),
            final_prompt_digest: String::new(),
        });
        specs.push(AgentSpec::new(role, vote.weight));
    }
    match tally_votes(&answers, &specs) {
        Ok(tally) => {
            let wire = TallyWire {
                winner: tally.winner,
                tie_broken: tally.tie_broken,
                totals: tally.totals,
            };
            into_c_string(serde_json::to_string(&wire).expect("tally serializes"))
        }
        Err(e) => {
            set_last_error(e);
            ptr::null_mut()
        }
    }
}

/// Build a knowledge-base index from a line-delimited corpus file. Returns
/// an owned handle, or null with a pending error. Free with
/// [`mavl_kb_index_free`].
///
/// # Safety
/// `corpus_path` must be a valid nul-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_kb_index_build(
    corpus_path: *const c_char,
    lenient: bool,
) -> *mut MavlKbIndex {
    let path = match unsafe { read_str(corpus_path) } {
        Ok(path) => path,
        Err(_) => return ptr::null_mut(),
    };
    let mode = if lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    match build_kb_index(Path::new(path), mode) {
        Ok((inner, _)) => Box::into_raw(Box::new(MavlKbIndex { inner })),
        Err(e) => {
            set_last_error(e);
            ptr::null_mut()
        }
    }
}

/// Load an index sidecar previously written by [`mavl_kb_index_save`].
///
/// # Safety
/// `path` must be a valid nul-terminated UTF-8 string or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_kb_index_load(path: *const c_char) -> *mut MavlKbIndex {
    let path = match unsafe { read_str(path) } {
        Ok(path) => path,
        Err(_) => return ptr::null_mut(),
    };
    match KbIndex::load(Path::new(path)) {
        Ok(inner) => Box::into_raw(Box::new(MavlKbIndex { inner })),
        Err(e) => {
            set_last_error(e);
            ptr::null_mut()
        }
    }
}

/// Persist the index to a binary sidecar.
///
/// # Safety
/// `index` must be a live handle from this library; `path` a valid
/// nul-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn mavl_kb_index_save(
    index: *const MavlKbIndex,
    path: *const c_char,
) -> MavlStatus {
    if index.is_null() {
        set_last_error("index handle is null");
        return MavlStatus::InvalidArgument;
    }
    let path = match unsafe { read_str(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    // SAFETY: caller guarantees the handle is live.
    match unsafe { &(*index).inner }.save(Path::new(path)) {
        Ok(()) => MavlStatus::Ok,
        Err(e) => {
            set_last_error(e);
            MavlStatus::IoError
        }
    }
}

/// Number of documents in the index; 0 for a null handle.
///
/// # Safety
/// `index` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_kb_index_len(index: *const MavlKbIndex) -> u64 {
    if index.is_null() {
        return 0;
    }
    // SAFETY: caller guarantees the handle is live.
    unsafe { &(*index).inner }.len() as u64
}

/// Retrieve the top-k snippets for a caption+question query. Returns a
/// JSON array of `{doc_id, title, text, score}` objects.
///
/// # Safety
/// `index` must be a live handle; `caption` and `question` valid
/// nul-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn mavl_kb_retrieve(
    index: *const MavlKbIndex,
    caption: *const c_char,
    question: *const c_char,
    k: u64,
) -> *mut c_char {
    if index.is_null() {
        set_last_error("index handle is null");
        return ptr::null_mut();
    }
    let (caption, question) = match (unsafe { read_str(caption) }, unsafe { read_str(question) }) {
        (Ok(c), Ok(q)) => (c, q),
        _ => return ptr::null_mut(),
    };
    let sample = match mavl::domain::VqaSample::new("ffi", question, caption, None, vec![]) {
        Ok(sample) => sample,
        Err(e) => {
            set_last_error(e);
            return ptr::null_mut();
        }
    };
    // SAFETY: caller guarantees the handle is live.
    let index = unsafe { &(*index).inner };
    let snippets = mavl::tools::retrieve_kb_knowledge(index, &sample, k as usize);
    into_c_string(serde_json::to_string(&snippets).expect("snippets serialize"))
}

/// Release an index handle.
///
/// # Safety
/// `index` must be a handle from this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn mavl_kb_index_free(index: *mut MavlKbIndex) {
    if index.is_null() {
        return;
    }
    // SAFETY: caller guarantees ownership transfers back here.
    drop(unsafe { Box::from_raw(index) });
}

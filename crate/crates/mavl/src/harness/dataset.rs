//! Dataset ingestion for the OK-VQA and A-OKVQA file layouts, plus the
//! in-context example pool built from a training split.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::domain::{VqaSample, GOLD_ANSWER_COUNT};
use crate::prompting::ExampleRecord;
use crate::tools::{select_top_m, AnswerVocabulary, CandidateTable, ScoreVector};
use crate::ParseMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    OkVqa,
    AOkVqa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub sample: VqaSample,
    pub split: Split,
    pub source: DatasetFormat,
}

/// Lenient-mode bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub loaded: usize,
    pub skipped_missing_caption: usize,
    pub skipped_malformed: usize,
    pub padded_gold: usize,
    pub truncated_gold: usize,
}

/// Stringify a JSON id (the benchmark files use integers, fixtures use
/// strings).
fn id_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

#[derive(Deserialize)]
struct OkVqaQuestionFile {
    questions: Vec<OkVqaQuestion>,
}

#[derive(Deserialize)]
struct OkVqaQuestion {
    question_id: Value,
    #[serde(default)]
    image_id: Option<Value>,
    question: String,
}

#[derive(Deserialize)]
struct OkVqaAnnotationFile {
    annotations: Vec<OkVqaAnnotation>,
}

#[derive(Deserialize)]
struct OkVqaAnnotation {
    question_id: Value,
    answers: Vec<OkVqaAnswer>,
}

#[derive(Deserialize)]
struct OkVqaAnswer {
    answer: String,
}

#[derive(Deserialize)]
struct AOkVqaRecord {
    question_id: Value,
    #[serde(default)]
    image_id: Option<Value>,
    question: String,
    #[serde(default)]
    direct_answers: Vec<String>,
    // The multiple-choice fields are present in the files but unused here.
    #[serde(default)]
    #[allow(dead_code)]
    choices: Vec<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let raw = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| HarnessError::parse(path, e))
}

/// Reconcile a gold-answer list with the fixed annotation count. Strict
/// mode rejects; lenient mode pads by cycling or truncates.
fn fix_gold(
    id: &str,
    mut gold: Vec<String>,
    mode: ParseMode,
    stats: &mut LoadStats,
) -> Result<Vec<String>, HarnessError> {
    if gold.is_empty() || gold.len() == GOLD_ANSWER_COUNT {
        return Ok(gold);
    }
    match mode {
        ParseMode::Strict => Err(HarnessError::BadGoldCount {
            id: id.to_string(),
            got: gold.len(),
        }),
        ParseMode::Lenient => {
            if gold.len() > GOLD_ANSWER_COUNT {
                gold.truncate(GOLD_ANSWER_COUNT);
                stats.truncated_gold += 1;
            } else {
                let mut i = 0;
                while gold.len() < GOLD_ANSWER_COUNT {
                    gold.push(gold[i].clone());
                    i += 1;
                }
                stats.padded_gold += 1;
            }
            Ok(gold)
        }
    }
}

struct RawRecord {
    id: String,
    image_id: Option<String>,
    question: String,
    gold: Vec<String>,
}

fn assemble(
    raws: Vec<RawRecord>,
    captions: &HashMap<String, String>,
    format: DatasetFormat,
    split: Split,
    mode: ParseMode,
) -> Result<(Vec<DatasetRecord>, LoadStats), HarnessError> {
    let mut stats = LoadStats::default();
    let mut seen = HashSet::new();
    let mut missing_captions = Vec::new();
    let mut records = Vec::with_capacity(raws.len());
    for raw in raws {
        if !seen.insert(raw.id.clone()) {
            match mode {
                ParseMode::Strict => return Err(HarnessError::DuplicateId(raw.id)),
                ParseMode::Lenient => {
                    stats.skipped_malformed += 1;
                    continue;
                }
            }
        }
        let caption = captions
            .get(&raw.id)
            .or_else(|| raw.image_id.as_ref().and_then(|img| captions.get(img)));
        let caption = match caption {
            Some(c) => c.clone(),
            None => {
                missing_captions.push(raw.id.clone());
                continue;
            }
        };
        let gold = fix_gold(&raw.id, raw.gold, mode, &mut stats)?;
        let sample = VqaSample::new(raw.id.clone(), raw.question, caption, raw.image_id, gold)
            .map_err(|e| HarnessError::BadSample {
                id: raw.id.clone(),
                source: e,
            })?;
        stats.loaded += 1;
        records.push(DatasetRecord {
            sample,
            split,
            source: format,
        });
    }
    if !missing_captions.is_empty() {
        match mode {
            ParseMode::Strict => return Err(HarnessError::MissingCaptions(missing_captions)),
            ParseMode::Lenient => stats.skipped_missing_caption = missing_captions.len(),
        }
    }
    Ok((records, stats))
}

/// Join questions, gold annotations, and precomputed captions into dataset
/// records. For OK-VQA, `primary_path` is the question file and
/// `annotations_path` the annotation file (absent for unlabeled runs); for
/// A-OKVQA, `primary_path` is the single record file.
pub fn load_dataset(
    format: DatasetFormat,
    primary_path: &Path,
    annotations_path: Option<&Path>,
    captions_path: &Path,
    split: Split,
    mode: ParseMode,
) -> Result<(Vec<DatasetRecord>, LoadStats), HarnessError> {
    let captions_raw: HashMap<String, Value> = read_json(captions_path)?;
    let mut captions = HashMap::with_capacity(captions_raw.len());
    for (k, v) in captions_raw {
        match v {
            Value::String(s) => {
                captions.insert(k, s);
            }
            other => {
                return Err(HarnessError::parse(
                    captions_path,
                    format!("caption for {k} is not a string: {other}"),
                ))
            }
        }
    }

    let raws = match format {
        DatasetFormat::OkVqa => {
            let questions: OkVqaQuestionFile = read_json(primary_path)?;
            let mut gold_by_id: HashMap<String, Vec<String>> = HashMap::new();
            if let Some(path) = annotations_path {
                let annotations: OkVqaAnnotationFile = read_json(path)?;
                for ann in annotations.annotations {
                    let id = id_string(&ann.question_id)
                        .ok_or_else(|| HarnessError::parse(path, "non-scalar question_id"))?;
                    gold_by_id.insert(id, ann.answers.into_iter().map(|a| a.answer).collect());
                }
            }
            questions
                .questions
                .into_iter()
                .map(|q| {
                    let id = id_string(&q.question_id).ok_or_else(|| {
                        HarnessError::parse(primary_path, "non-scalar question_id")
                    })?;
                    Ok(RawRecord {
                        gold: gold_by_id.get(&id).cloned().unwrap_or_default(),
                        image_id: q.image_id.as_ref().and_then(id_string),
                        question: q.question,
                        id,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?
        }
        DatasetFormat::AOkVqa => {
            let records: Vec<AOkVqaRecord> = read_json(primary_path)?;
            records
                .into_iter()
                .map(|r| {
                    let id = id_string(&r.question_id).ok_or_else(|| {
                        HarnessError::parse(primary_path, "non-scalar question_id")
                    })?;
                    Ok(RawRecord {
                        id,
                        image_id: r.image_id.as_ref().and_then(id_string),
                        question: r.question,
                        gold: r.direct_answers,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?
        }
    };
    assemble(raws, &captions, format, split, mode)
}

/// Pick the answer a training record contributes to prompts: the most
/// frequent raw annotation, first occurrence breaking ties.
pub fn most_frequent_answer(gold: &[String]) -> Option<String> {
    let mut counts: Vec<(usize, &String)> = Vec::new();
    for answer in gold {
        match counts.iter_mut().find(|(_, a)| *a == answer) {
            Some((n, _)) => *n += 1,
            None => counts.push((1, answer)),
        }
    }
    let mut best: Option<(usize, &String)> = None;
    for (n, answer) in counts {
        if best.is_none_or(|(max, _)| n > max) {
            best = Some((n, answer));
        }
    }
    best.map(|(_, a)| a.clone())
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub id: String,
    pub record: ExampleRecord,
}

/// Optional precomputed knowledge for pool records, keyed by train id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PoolKnowledge {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kbs_knowledge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_knowledge: Option<String>,
}

pub type PoolKnowledgeTable = HashMap<String, PoolKnowledge>;

/// Load a pool knowledge file: JSON map from train id to its optional
/// `kbs_knowledge` / `llm_knowledge` strings.
pub fn load_pool_knowledge(path: &Path) -> Result<PoolKnowledgeTable, HarnessError> {
    read_json(path)
}

/// Fully-annotated in-context examples drawn from the training split, plus
/// an optional precomputed neighbor table (test id -> ordered train ids).
#[derive(Debug, Clone, Default)]
pub struct ExamplePool {
    pub entries: Vec<PoolEntry>,
    pub neighbors: Option<HashMap<String, Vec<String>>>,
}

impl ExamplePool {
    /// Build from training records. Unlabeled records are skipped (every
    /// pool record must carry an answer). When a candidate or knowledge
    /// table covers a record, the fields are attached so example blocks
    /// can mirror the test block's augmentation.
    pub fn from_records(
        records: &[DatasetRecord],
        candidates: Option<&CandidateTable>,
        knowledge: Option<&PoolKnowledgeTable>,
        n_candidates: usize,
    ) -> Result<Self, HarnessError> {
        let mut entries = Vec::with_capacity(records.len());
        for record in records {
            let Some(answer) = most_frequent_answer(&record.sample.gold_answers) else {
                continue;
            };
            let mut example =
                ExampleRecord::new(record.sample.caption.clone(), record.sample.question.clone())
                    .with_answer(answer);
            if let Some(table) = candidates {
                if let Some(pairs) = table.get(&record.sample.id) {
                    let (answers, scores): (Vec<String>, Vec<f64>) =
                        pairs.iter().cloned().unzip();
                    let vocab = AnswerVocabulary::new(answers)?;
                    let scores = ScoreVector::new(scores)?;
                    let m = n_candidates.min(vocab.len());
                    example = example.with_candidates(select_top_m(&scores, &vocab, m)?);
                }
            }
            if let Some(table) = knowledge {
                if let Some(fields) = table.get(&record.sample.id) {
                    example.kbs_knowledge = fields.kbs_knowledge.clone();
                    example.llm_knowledge = fields.llm_knowledge.clone();
                }
            }
            entries.push(PoolEntry {
                id: record.sample.id.clone(),
                record: example,
            });
        }
        Ok(Self {
            entries,
            neighbors: None,
        })
    }

    pub fn with_neighbors(mut self, neighbors: HashMap<String, Vec<String>>) -> Self {
        self.neighbors = Some(neighbors);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Load a neighbor table file: JSON map test id -> ordered train ids.
pub fn load_neighbor_file(path: &Path) -> Result<HashMap<String, Vec<String>>, HarnessError> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_okvqa_fixture(dir: &Path, annotation_counts: &[usize]) {
        let questions = serde_json::json!({
            "questions": annotation_counts
                .iter()
                .enumerate()
                .map(|(i, _)| serde_json::json!({
                    "question_id": i + 1,
                    "image_id": 100 + i,
                    "question": format!("What is thing {i}?"),
                }))
                .collect::<Vec<_>>()
        });
        let annotations = serde_json::json!({
            "annotations": annotation_counts
                .iter()
                .enumerate()
                .map(|(i, n)| serde_json::json!({
                    "question_id": i + 1,
                    "answers": (0..*n).map(|j| serde_json::json!({"answer": format!("a{j}")})).collect::<Vec<_>>(),
                }))
                .collect::<Vec<_>>()
        });
        let captions: HashMap<String, String> = annotation_counts
            .iter()
            .enumerate()
            .map(|(i, _)| ((i + 1).to_string(), format!("caption {i}")))
            .collect();
        fs::write(dir.join("q.json"), questions.to_string()).unwrap();
        fs::write(dir.join("a.json"), annotations.to_string()).unwrap();
        fs::write(dir.join("c.json"), serde_json::to_string(&captions).unwrap()).unwrap();
    }

    #[test]
    fn okvqa_happy_path_joins_three_files() {
        let dir = tempfile::tempdir().unwrap();
        write_okvqa_fixture(dir.path(), &[10, 10, 10]);
        let (records, stats) = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            Some(&dir.path().join("a.json")),
            &dir.path().join("c.json"),
            Split::Val,
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(stats.loaded, 3);
        assert_eq!(records[0].sample.id, "1");
        assert_eq!(records[0].sample.caption, "caption 0");
        assert_eq!(records[0].sample.gold_answers.len(), 10);
    }

    #[test]
    fn strict_mode_names_the_bad_record() {
        let dir = tempfile::tempdir().unwrap();
        write_okvqa_fixture(dir.path(), &[10, 9]);
        let err = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            Some(&dir.path().join("a.json")),
            &dir.path().join("c.json"),
            Split::Val,
            ParseMode::Strict,
        )
        .unwrap_err();
        match err {
            HarnessError::BadGoldCount { id, got } => {
                assert_eq!(id, "2");
                assert_eq!(got, 9);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn lenient_mode_pads_by_cycling_and_truncates() {
        let dir = tempfile::tempdir().unwrap();
        write_okvqa_fixture(dir.path(), &[3, 12]);
        let (records, stats) = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            Some(&dir.path().join("a.json")),
            &dir.path().join("c.json"),
            Split::Val,
            ParseMode::Lenient,
        )
        .unwrap();
        assert_eq!(records[0].sample.gold_answers.len(), 10);
        assert_eq!(records[0].sample.gold_answers[3], "a0");
        assert_eq!(records[1].sample.gold_answers.len(), 10);
        assert_eq!(stats.padded_gold, 1);
        assert_eq!(stats.truncated_gold, 1);
    }

    #[test]
    fn missing_caption_strict_lists_ids_lenient_skips() {
        let dir = tempfile::tempdir().unwrap();
        write_okvqa_fixture(dir.path(), &[10, 10]);
        fs::write(dir.path().join("c.json"), r#"{"1": "caption 0"}"#).unwrap();
        let err = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            Some(&dir.path().join("a.json")),
            &dir.path().join("c.json"),
            Split::Val,
            ParseMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::MissingCaptions(ids) if ids == vec!["2".to_string()]));

        let (records, stats) = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            Some(&dir.path().join("a.json")),
            &dir.path().join("c.json"),
            Split::Val,
            ParseMode::Lenient,
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(stats.skipped_missing_caption, 1);
    }

    #[test]
    fn captions_can_join_on_image_id() {
        let dir = tempfile::tempdir().unwrap();
        write_okvqa_fixture(dir.path(), &[10]);
        fs::write(dir.path().join("c.json"), r#"{"100": "via image id"}"#).unwrap();
        let (records, _) = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            Some(&dir.path().join("a.json")),
            &dir.path().join("c.json"),
            Split::Val,
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(records[0].sample.caption, "via image id");
    }

    #[test]
    fn unlabeled_run_without_annotation_file() {
        let dir = tempfile::tempdir().unwrap();
        write_okvqa_fixture(dir.path(), &[10]);
        let (records, _) = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            None,
            &dir.path().join("c.json"),
            Split::Test,
            ParseMode::Strict,
        )
        .unwrap();
        assert!(records[0].sample.gold_answers.is_empty());
        assert!(!records[0].sample.is_labeled());
    }

    #[test]
    fn malformed_file_reports_its_path() {
        let dir = tempfile::tempdir().unwrap();
        write_okvqa_fixture(dir.path(), &[10]);
        fs::write(dir.path().join("q.json"), "not json").unwrap();
        let err = load_dataset(
            DatasetFormat::OkVqa,
            &dir.path().join("q.json"),
            Some(&dir.path().join("a.json")),
            &dir.path().join("c.json"),
            Split::Val,
            ParseMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::Parse { ref path, .. } if path.ends_with("q.json")));
    }

    #[test]
    fn most_frequent_answer_breaks_ties_by_first_occurrence() {
        let gold: Vec<String> = ["b", "a", "a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(most_frequent_answer(&gold).unwrap(), "b");
        assert_eq!(most_frequent_answer(&[]), None);
    }

    #[test]
    fn pool_skips_unlabeled_and_attaches_candidates() {
        let labeled = DatasetRecord {
            sample: VqaSample::new("t1", "q?", "cap", None, vec!["dog".into(); 10]).unwrap(),
            split: Split::Train,
            source: DatasetFormat::OkVqa,
        };
        let unlabeled = DatasetRecord {
            sample: VqaSample::new("t2", "q?", "cap", None, vec![]).unwrap(),
            split: Split::Train,
            source: DatasetFormat::OkVqa,
        };
        let mut table = CandidateTable::new();
        table.insert("t1".into(), vec![("dog".into(), 0.9), ("cat".into(), 0.1)]);
        let pool =
            ExamplePool::from_records(&[labeled, unlabeled], Some(&table), None, 5).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.entries[0].record.answer.as_deref(), Some("dog"));
        assert_eq!(pool.entries[0].record.candidates.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn pool_attaches_precomputed_knowledge() {
        let record = DatasetRecord {
            sample: VqaSample::new("t1", "q?", "cap", None, vec!["dog".into(); 10]).unwrap(),
            split: Split::Train,
            source: DatasetFormat::OkVqa,
        };
        let mut knowledge = PoolKnowledgeTable::new();
        knowledge.insert(
            "t1".into(),
            PoolKnowledge {
                kbs_knowledge: Some("dogs are domesticated wolves".into()),
                llm_knowledge: None,
            },
        );
        let pool = ExamplePool::from_records(&[record], None, Some(&knowledge), 5).unwrap();
        assert_eq!(
            pool.entries[0].record.kbs_knowledge.as_deref(),
            Some("dogs are domesticated wolves")
        );
        assert!(pool.entries[0].record.llm_knowledge.is_none());
    }
}

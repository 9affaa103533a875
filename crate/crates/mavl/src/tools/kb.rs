//! Knowledge-base retrieval: an inverted index over a line-delimited
//! snippet corpus, scored with BM25 (k1 = 1.2, b = 0.75).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::domain::VqaSample;
use crate::ParseMode;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Stopwords removed from retrieval queries (documents keep every token).
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "did", "do", "does", "doing", "don", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "s", "same", "she",
    "should", "so", "some", "such", "t", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "you", "your", "yours", "yourself",
    "yourselves",
];

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// One corpus document as stored on disk: one JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub id: String,
    pub title: String,
    pub text: String,
}

/// One retrieved snippet with its BM25 score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSnippet {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    tf: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredDoc {
    id: String,
    title: String,
    text: String,
    len: u32,
}

/// Statistics of a lenient corpus build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub indexed: usize,
    pub skipped: usize,
}

/// Immutable inverted index over the snippet corpus. Postings are sorted by
/// document id so rebuilds of the same corpus are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KbIndex {
    docs: Vec<StoredDoc>,
    postings: BTreeMap<String, Vec<Posting>>,
    total_len: u64,
}

impl KbIndex {
    pub fn from_documents(documents: Vec<CorpusDocument>) -> Self {
        let mut docs = Vec::with_capacity(documents.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut total_len = 0u64;
        for (idx, doc) in documents.into_iter().enumerate() {
            let tokens = tokenize(&doc.text);
            total_len += tokens.len() as u64;
            let mut counts: HashMap<String, u32> = HashMap::new();
            for token in &tokens {
                *counts.entry(token.clone()).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: idx as u32,
                    tf,
                });
            }
            docs.push(StoredDoc {
                id: doc.id,
                title: doc.title,
                text: doc.text,
                len: tokens.len() as u32,
            });
        }
        for list in postings.values_mut() {
            list.sort_by(|a, b| docs[a.doc as usize].id.cmp(&docs[b.doc as usize].id));
        }
        Self {
            docs,
            postings,
            total_len,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.docs.len() as f64
        }
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Deterministic summary of corpus statistics; identical rebuilds of
    /// the same corpus produce byte-identical blocks.
    pub fn stats_block(&self) -> String {
        format!(
            "documents: {}\nvocabulary: {}\ntotal_tokens: {}\navg_doc_len: {:.6}\n",
            self.docs.len(),
            self.vocabulary_size(),
            self.total_len,
            self.avg_doc_len()
        )
    }

    /// Persist to a binary sidecar for reuse across runs.
    pub fn save(&self, path: &Path) -> Result<(), ToolError> {
        let file = BufWriter::new(File::create(path)?);
        bincode::serialize_into(file, self).map_err(|e| ToolError::IndexCorrupt(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let file = BufReader::new(File::open(path)?);
        bincode::deserialize_from(file).map_err(|e| ToolError::IndexCorrupt(e.to_string()))
    }

    /// Score every document overlapping the query terms and return the top
    /// `k`, ties broken by ascending document id. Duplicated query terms
    /// count once.
    pub fn retrieve(&self, query_terms: &[String], k: usize) -> Vec<KnowledgeSnippet> {
        if k == 0 || self.docs.is_empty() {
            return Vec::new();
        }
        let n_docs = self.docs.len() as u32;
        let avg_len = self.avg_doc_len();
        let mut seen = std::collections::HashSet::new();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in query_terms {
            if !seen.insert(term.as_str()) {
                continue;
            }
            if let Some(list) = self.postings.get(term) {
                let df = list.len() as u32;
                for posting in list {
                    let doc_len = self.docs[posting.doc as usize].len;
                    *scores.entry(posting.doc).or_default() +=
                        bm25_term_score(posting.tf, doc_len, df, n_docs, avg_len);
                }
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("bm25 scores are finite")
                .then_with(|| self.docs[a.0 as usize].id.cmp(&self.docs[b.0 as usize].id))
        });
        ranked
            .into_iter()
            .take(k)
            .map(|(doc, score)| {
                let stored = &self.docs[doc as usize];
                KnowledgeSnippet {
                    doc_id: stored.id.clone(),
                    title: stored.title.clone(),
                    text: stored.text.clone(),
                    score,
                }
            })
            .collect()
    }
}

/// One term's BM25 contribution.
pub fn bm25_term_score(tf: u32, doc_len: u32, df: u32, n_docs: u32, avg_len: f64) -> f64 {
    if tf == 0 || df == 0 || n_docs == 0 || avg_len <= 0.0 {
        return 0.0;
    }
    let idf = (1.0 + (n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln();
    let tf = tf as f64;
    let norm = 1.0 - BM25_B + BM25_B * doc_len as f64 / avg_len;
    idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm)
}

/// Build the index from a line-delimited corpus file. Strict mode fails on
/// the first malformed line with its number; lenient mode skips and counts.
pub fn build_kb_index(corpus_path: &Path, mode: ParseMode) -> Result<(KbIndex, BuildStats), ToolError> {
    let reader = BufReader::new(File::open(corpus_path)?);
    let mut documents = Vec::new();
    let mut stats = BuildStats::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CorpusDocument>(&line) {
            Ok(doc) if !doc.text.trim().is_empty() => {
                stats.indexed += 1;
                documents.push(doc);
            }
            Ok(_) => match mode {
                ParseMode::Strict => {
                    return Err(ToolError::CorpusParse {
                        line: i + 1,
                        reason: "document text is empty".into(),
                    })
                }
                ParseMode::Lenient => stats.skipped += 1,
            },
            Err(e) => match mode {
                ParseMode::Strict => {
                    return Err(ToolError::CorpusParse {
                        line: i + 1,
                        reason: e.to_string(),
                    })
                }
                ParseMode::Lenient => stats.skipped += 1,
            },
        }
    }
    Ok((KbIndex::from_documents(documents), stats))
}

/// Retrieve snippets for a sample: the query is the tokenized caption plus
/// question with stopwords removed.
pub fn retrieve_kb_knowledge(index: &KbIndex, sample: &VqaSample, k: usize) -> Vec<KnowledgeSnippet> {
    let mut query = tokenize(&sample.caption);
    query.extend(tokenize(&sample.question));
    query.retain(|t| !is_stopword(t));
    index.retrieve(&query, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy_corpus() -> Vec<CorpusDocument> {
        vec![
            CorpusDocument {
                id: "d1".into(),
                title: "Snowboarding".into(),
                text: "snowboarding is a winter sport on a snow covered slope".into(),
            },
            CorpusDocument {
                id: "d2".into(),
                title: "Skiing".into(),
                text: "skiing involves riding down snow slopes on skis".into(),
            },
            CorpusDocument {
                id: "d3".into(),
                title: "Elephant".into(),
                text: "the elephant is the largest land animal".into(),
            },
        ]
    }

    fn ski_sample() -> VqaSample {
        VqaSample::new(
            "s1",
            "What is this man on?",
            "A man riding skis down a snow covered slope.",
            None,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn stopword_table_is_sorted_for_binary_search() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tokenizer_lowercases_and_splits_on_non_alphanumeric() {
        assert_eq!(tokenize("Snow-Covered slope!"), vec!["snow", "covered", "slope"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn toy_corpus_statistics() {
        // Hand-enumerated: 10 + 8 + 7 tokens over 3 documents.
        let index = KbIndex::from_documents(toy_corpus());
        assert_eq!(index.len(), 3);
        assert_eq!(index.avg_doc_len(), 25.0 / 3.0);
        assert_eq!(index.document_frequency("snow"), 2);
        assert_eq!(index.document_frequency("skis"), 1);
        assert_eq!(index.document_frequency("man"), 0);
    }

    #[test]
    fn toy_corpus_ranking_matches_hand_computed_bm25() {
        // Expected scores computed with an independent oracle script over
        // idf = ln(1 + (N - df + 0.5)/(df + 0.5)) and k1 = 1.2, b = 0.75:
        //   d2 = 2.472114924950192 (riding, skis, snow)
        //   d1 = 2.247754914954712 (snow, covered, slope)
        //   d3 = no overlap, never returned
        let index = KbIndex::from_documents(toy_corpus());
        let hits = retrieve_kb_knowledge(&index, &ski_sample(), 3);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].doc_id, "d2");
        assert!((hits[0].score - 2.472114924950192).abs() < 1e-9);
        assert_eq!(hits[1].doc_id, "d1");
        assert!((hits[1].score - 2.247754914954712).abs() < 1e-9);
    }

    #[test]
    fn k_zero_returns_nothing() {
        let index = KbIndex::from_documents(toy_corpus());
        assert!(retrieve_kb_knowledge(&index, &ski_sample(), 0).is_empty());
    }

    #[test]
    fn single_doc_corpus_returns_that_doc() {
        let index = KbIndex::from_documents(vec![CorpusDocument {
            id: "only".into(),
            title: "T".into(),
            text: "a lonely zebra".into(),
        }]);
        let sample = VqaSample::new("s", "Is that a zebra?", "some caption", None, vec![]).unwrap();
        let hits = retrieve_kb_knowledge(&index, &sample, 2);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "only");
    }

    #[test]
    fn empty_corpus_returns_nothing() {
        let index = KbIndex::from_documents(vec![]);
        assert!(retrieve_kb_knowledge(&index, &ski_sample(), 5).is_empty());
    }

    #[test]
    fn never_more_than_k_and_never_zero_overlap() {
        let index = KbIndex::from_documents(toy_corpus());
        let hits = retrieve_kb_knowledge(&index, &ski_sample(), 1);
        assert_eq!(hits.len(), 1);
        assert!(hits.iter().all(|h| h.doc_id != "d3"));
        assert!(hits.iter().all(|h| h.score > 0.0));
    }

    #[test]
    fn tie_breaks_by_ascending_doc_id() {
        let twin = |id: &str| CorpusDocument {
            id: id.into(),
            title: "t".into(),
            text: "same exact words here".into(),
        };
        let index = KbIndex::from_documents(vec![twin("b"), twin("a")]);
        let hits = index.retrieve(&["exact".to_string()], 2);
        assert_eq!(hits[0].doc_id, "a");
        assert_eq!(hits[1].doc_id, "b");
    }

    #[test]
    fn term_score_monotone_in_tf_with_matching_length_growth() {
        // Adding one occurrence of a query term (document grows by one
        // token) never lowers the score, holding corpus stats fixed.
        for tf in 1..20u32 {
            let before = bm25_term_score(tf, 50 + tf, 3, 10, 40.0);
            let after = bm25_term_score(tf + 1, 51 + tf, 3, 10, 40.0);
            assert!(after >= before, "tf {tf}: {after} < {before}");
        }
    }

    #[test]
    fn build_from_file_strict_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(f, r#"{{"id":"d1","title":"t","text":"some text"}}"#).unwrap();
        writeln!(f, "not json").unwrap();
        drop(f);
        match build_kb_index(&path, ParseMode::Strict) {
            Err(ToolError::CorpusParse { line: 2, .. }) => {}
            other => panic!("expected parse error at line 2, got {other:?}"),
        }
        let (index, stats) = build_kb_index(&path, ParseMode::Lenient).unwrap();
        assert_eq!(index.len(), 1);
        assert_eq!(stats, BuildStats { indexed: 1, skipped: 1 });
    }

    #[test]
    fn rebuild_is_idempotent_and_sidecar_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut f = File::create(&path).unwrap();
        for doc in toy_corpus() {
            writeln!(f, "{}", serde_json::to_string(&doc).unwrap()).unwrap();
        }
        drop(f);
        let (first, _) = build_kb_index(&path, ParseMode::Strict).unwrap();
        let (second, _) = build_kb_index(&path, ParseMode::Strict).unwrap();
        assert_eq!(first.stats_block(), second.stats_block());

        let sidecar = dir.path().join("corpus.idx");
        first.save(&sidecar).unwrap();
        let loaded = KbIndex::load(&sidecar).unwrap();
        assert_eq!(loaded.stats_block(), first.stats_block());
        let hits = retrieve_kb_knowledge(&loaded, &ski_sample(), 2);
        assert_eq!(hits[0].doc_id, "d2");

        // Saving the rebuilt index writes identical bytes.
        let sidecar2 = dir.path().join("corpus2.idx");
        second.save(&sidecar2).unwrap();
        assert_eq!(
            std::fs::read(&sidecar).unwrap(),
            std::fs::read(&sidecar2).unwrap()
        );
    }
}

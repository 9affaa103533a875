//! In-context example selection: precomputed neighbor tables (the faithful
//! route), lexical term-frequency cosine similarity, or a seeded fixed
//! random draw.

use std::collections::BTreeMap;

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExamplePool, HarnessError};
use crate::domain::VqaSample;
use crate::prompting::ExampleRecord;
use crate::tools::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    NeighborFile,
    Lexical,
    FixedRandom,
}

// Ordered maps keep the float accumulation order fixed, so similarities
// are bit-identical across runs.
fn tf_vector(caption: &str, question: &str) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for token in tokenize(caption).into_iter().chain(tokenize(question)) {
        *counts.entry(token).or_default() += 1.0;
    }
    counts
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(term, weight)| b.get(term).map(|other| weight * other))
        .sum();
    if dot == 0.0 {
        return 0.0;
    }
    let norm = |v: &BTreeMap<String, f64>| v.values().map(|w| w * w).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}

fn lexical_order(test: &VqaSample, pool: &ExamplePool) -> Vec<usize> {
    let query = tf_vector(&test.caption, &test.question);
    let mut scored: Vec<(usize, f64)> = pool
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            (
                i,
                cosine(&query, &tf_vector(&entry.record.caption, &entry.record.question)),
            )
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("cosine similarities are finite")
            .then(a.0.cmp(&b.0))
    });
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Pick `n` in-context examples for a test sample. Every mode is
/// deterministic for fixed inputs; missing neighbor entries fall back to
/// lexical selection with a warning.
pub fn select_in_context_examples(
    test: &VqaSample,
    pool: &ExamplePool,
    n: usize,
    mode: SelectorMode,
    seed: Option<u64>,
) -> Result<(Vec<ExampleRecord>, Vec<String>), HarnessError> {
    if n > pool.len() {
        return Err(HarnessError::PoolTooSmall { n, pool: pool.len() });
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut warnings = Vec::new();
    let records = match mode {
        SelectorMode::NeighborFile => {
            let table = pool.neighbors.as_ref();
            match table.and_then(|t| t.get(&test.id)) {
                Some(neighbor_ids) => {
                    let mut picked = Vec::with_capacity(n);
                    for id in neighbor_ids {
                        if picked.len() == n {
                            break;
                        }
                        match pool.entries.iter().find(|e| &e.id == id) {
                            Some(entry) => picked.push(entry.record.clone()),
                            None => warnings
                                .push(format!("neighbor {id} for {} not in pool", test.id)),
                        }
                    }
                    if picked.len() < n {
                        warnings.push(format!(
                            "neighbor table lists {} usable entries for {}, wanted {n}",
                            picked.len(),
                            test.id
                        ));
                    }
                    picked
                }
                None => {
                    warnings.push(format!(
                        "no neighbor entry for {}, falling back to lexical selection",
                        test.id
                    ));
                    lexical_order(test, pool)
                        .into_iter()
                        .take(n)
                        .map(|i| pool.entries[i].record.clone())
                        .collect()
                }
            }
        }
        SelectorMode::Lexical => lexical_order(test, pool)
            .into_iter()
            .take(n)
            .map(|i| pool.entries[i].record.clone())
            .collect(),
        SelectorMode::FixedRandom => {
            let seed = seed.ok_or(HarnessError::MissingSeed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index_sample(&mut rng, pool.len(), n)
                .iter()
                .map(|i| pool.entries[i].record.clone())
                .collect()
        }
    };
    Ok((records, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::PoolEntry;
    use std::collections::HashMap;

    fn entry(id: &str, caption: &str, question: &str) -> PoolEntry {
        PoolEntry {
            id: id.to_string(),
            record: ExampleRecord::new(caption, question).with_answer("x"),
        }
    }

    fn toy_pool() -> ExamplePool {
        ExamplePool {
            entries: vec![
                entry("e1", "red bus on street", "what color is the bus"),
                entry("e2", "dog in park", "what animal is this"),
                entry("e3", "red fire truck", "what color is the truck"),
                entry("e4", "green field", "what grows here"),
            ],
            neighbors: None,
        }
    }

    fn test_sample() -> VqaSample {
        VqaSample::new("t1", "what color is the bus", "a red bus parked", None, vec![]).unwrap()
    }

    #[test]
    fn zero_shot_returns_nothing() {
        let (records, warnings) = select_in_context_examples(
            &test_sample(),
            &toy_pool(),
            0,
            SelectorMode::Lexical,
            Some(1),
        )
        .unwrap();
        assert!(records.is_empty());
        assert!(warnings.is_empty());
    }

    #[test]
    fn neighbor_table_prefix_is_honored() {
        let pool = toy_pool().with_neighbors(HashMap::from([(
            "t1".to_string(),
            vec!["e3".to_string(), "e1".to_string(), "e2".to_string()],
        )]));
        let (records, warnings) = select_in_context_examples(
            &test_sample(),
            &pool,
            2,
            SelectorMode::NeighborFile,
            None,
        )
        .unwrap();
        assert!(warnings.is_empty());
        assert_eq!(records[0].caption, "red fire truck");
        assert_eq!(records[1].caption, "red bus on street");
    }

    #[test]
    fn missing_neighbor_entry_falls_back_to_lexical() {
        let pool = toy_pool().with_neighbors(HashMap::new());
        let (records, warnings) = select_in_context_examples(
            &test_sample(),
            &pool,
            1,
            SelectorMode::NeighborFile,
            None,
        )
        .unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("falling back"));
        assert_eq!(records[0].caption, "red bus on street");
    }

    #[test]
    fn lexical_order_matches_hand_computed_cosines() {
        // Query tokens: {a, red, bus, parked, what, color, is, the}.
        // e1 shares {red, bus, what, color, is, the}; e3 shares
        // {red, what, color, is, the}; e2 shares {what, is}; e4 shares
        // {what}. Hand-computed cosines order e1 > e3 > e2 > e4.
        let (records, _) = select_in_context_examples(
            &test_sample(),
            &toy_pool(),
            4,
            SelectorMode::Lexical,
            Some(1),
        )
        .unwrap();
        let captions: Vec<&str> = records.iter().map(|r| r.caption.as_str()).collect();
        assert_eq!(
            captions,
            vec!["red bus on street", "red fire truck", "dog in park", "green field"]
        );
    }

    #[test]
    fn fixed_random_is_seed_deterministic() {
        let first = select_in_context_examples(
            &test_sample(),
            &toy_pool(),
            2,
            SelectorMode::FixedRandom,
            Some(99),
        )
        .unwrap()
        .0;
        let second = select_in_context_examples(
            &test_sample(),
            &toy_pool(),
            2,
            SelectorMode::FixedRandom,
            Some(99),
        )
        .unwrap()
        .0;
        assert_eq!(first, second);
        assert!(matches!(
            select_in_context_examples(
                &test_sample(),
                &toy_pool(),
                2,
                SelectorMode::FixedRandom,
                None
            ),
            Err(HarnessError::MissingSeed)
        ));
    }

    #[test]
    fn n_larger_than_pool_is_an_error() {
        assert!(matches!(
            select_in_context_examples(&test_sample(), &toy_pool(), 5, SelectorMode::Lexical, Some(1)),
            Err(HarnessError::PoolTooSmall { n: 5, pool: 4 })
        ));
    }
}

//! Self-contained oracle suites for the voting, top-M, and plan-clamping
//! contracts. The reference implementations here are deliberately naive
//! (exhaustive enumeration, full sorts) and independent of the production
//! code paths they check; the `selftest` CLI subcommand and the acceptance
//! suite both run them.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::agent::Plan;
use crate::domain::{AgentAnswer, AgentRole};
use crate::orchestrator::{tally_votes, AgentSpec};
use crate::tools::{select_top_m, AnswerVocabulary, ScoreVector};

/// Reference winner by exhaustive max-sum enumeration with the documented
/// tie ladder: highest total, then highest single voter weight, then role
/// precedence, then lexicographic order.
pub fn reference_winner(votes: &[(String, AgentRole, u32)]) -> Option<String> {
    if votes.is_empty() {
        return None;
    }
    let mut answers: Vec<String> = votes.iter().map(|(a, _, _)| a.clone()).collect();
    answers.sort();
    answers.dedup();
    let total = |answer: &str| -> u32 {
        votes
            .iter()
            .filter(|(a, _, _)| a == answer)
            .map(|(_, _, w)| *w)
            .sum()
    };
    let best_voter_weight = |answer: &str| -> u32 {
        votes
            .iter()
            .filter(|(a, _, _)| a == answer)
            .map(|(_, _, w)| *w)
            .max()
            .unwrap_or(0)
    };
    let best_voter_rank = |answer: &str| -> u8 {
        votes
            .iter()
            .filter(|(a, _, _)| a == answer)
            .map(|(_, r, _)| r.rank())
            .max()
            .unwrap_or(0)
    };
    let mut best: Option<String> = None;
    for candidate in answers {
        best = Some(match best {
            None => candidate,
            Some(current) => {
                let lhs = (
                    total(&candidate),
                    best_voter_weight(&candidate),
                    best_voter_rank(&candidate),
                );
                let rhs = (
                    total(&current),
                    best_voter_weight(&current),
                    best_voter_rank(&current),
                );
                if lhs > rhs || (lhs == rhs && candidate < current) {
                    candidate
                } else {
                    current
                }
            }
        });
    }
    best
}

fn synthetic_answer(role: AgentRole, text: &str) -> AgentAnswer {
    AgentAnswer {
        role,
        raw_answer: text.to_string(),
        normalized_answer: text.to_string(),
        executed_plan: Plan::forced_empty(role),
        final_prompt_digest: String::new(),
    }
}

/// Every answer assignment from {a, b, c}^3 crossed with every weight
/// triple in {1..=4}^3: 1728 cases checked against the reference winner.
pub fn voting_oracle_suite() -> Result<usize, String> {
    let alphabet = ["a", "b", "c"];
    let mut cases = 0;
    for aj in alphabet {
        for as_ in alphabet {
            for am in alphabet {
                for wj in 1..=4u32 {
                    for ws in 1..=4u32 {
                        for wm in 1..=4u32 {
                            let answers = vec![
                                synthetic_answer(AgentRole::Junior, aj),
                                synthetic_answer(AgentRole::Senior, as_),
                                synthetic_answer(AgentRole::Manager, am),
                            ];
                            let specs = vec![
                                AgentSpec::new(AgentRole::Junior, wj),
                                AgentSpec::new(AgentRole::Senior, ws),
                                AgentSpec::new(AgentRole::Manager, wm),
                            ];
                            let tally = tally_votes(&answers, &specs)
                                .map_err(|e| format!("tally failed: {e}"))?;
                            let votes = vec![
                                (aj.to_string(), AgentRole::Junior, wj),
                                (as_.to_string(), AgentRole::Senior, ws),
                                (am.to_string(), AgentRole::Manager, wm),
                            ];
                            let expected = reference_winner(&votes).unwrap();
                            if tally.winner != expected {
                                return Err(format!(
                                    "case ({aj},{as_},{am}) x ({wj},{ws},{wm}): \
                                     tally winner {:?} != oracle {:?}",
                                    tally.winner, expected
                                ));
                            }
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(cases)
}

/// Positive scaling of every weight never changes the winner.
pub fn weight_scaling_suite(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let alphabet = ["a", "b", "c", "d"];
    for case in 0..cases {
        let texts: Vec<&str> = (0..3)
            .map(|_| alphabet[rng.random_range(0..alphabet.len())])
            .collect();
        let weights: Vec<u32> = (0..3).map(|_| rng.random_range(1..=20)).collect();
        let factor: u32 = rng.random_range(2..=10);
        let answers = vec![
            synthetic_answer(AgentRole::Junior, texts[0]),
            synthetic_answer(AgentRole::Senior, texts[1]),
            synthetic_answer(AgentRole::Manager, texts[2]),
        ];
        let specs = |scale: u32| {
            vec![
                AgentSpec::new(AgentRole::Junior, weights[0] * scale),
                AgentSpec::new(AgentRole::Senior, weights[1] * scale),
                AgentSpec::new(AgentRole::Manager, weights[2] * scale),
            ]
        };
        let base = tally_votes(&answers, &specs(1)).map_err(|e| e.to_string())?;
        let scaled = tally_votes(&answers, &specs(factor)).map_err(|e| e.to_string())?;
        if base.winner != scaled.winner {
            return Err(format!(
                "case {case}: winner changed under x{factor} scaling: {:?} -> {:?}",
                base.winner, scaled.winner
            ));
        }
    }
    Ok(cases)
}

/// Reference top-M: full descending sort with index tie-break, prefix of m.
pub fn reference_top_m(scores: &[f64], m: usize) -> Vec<(usize, f64)> {
    let mut indexed: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    indexed.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    indexed.truncate(m);
    indexed
}

/// Seeded random score vectors (L <= 50, every m <= L), with quantized
/// scores to force deliberate ties, checked against the sort-prefix oracle.
pub fn top_m_oracle_suite(vectors: usize, seed: u64) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut checked = 0;
    for v in 0..vectors {
        let l: usize = rng.random_range(1..=50);
        let quantize = rng.random_bool(0.5);
        let raw: Vec<f64> = (0..l)
            .map(|_| {
                if quantize {
                    rng.random_range(0..=8) as f64 / 8.0
                } else {
                    rng.random_range(-0.5..1.5)
                }
            })
            .collect();
        let answers: Vec<String> = (0..l).map(|i| format!("w{i}")).collect();
        let vocab = AnswerVocabulary::new(answers.clone()).map_err(|e| e.to_string())?;
        let scores = ScoreVector::new(raw.clone()).map_err(|e| e.to_string())?;
        for m in 0..=l {
            let got = select_top_m(&scores, &vocab, m).map_err(|e| e.to_string())?;
            let expected = reference_top_m(&raw, m);
            if got.len() != expected.len() {
                return Err(format!("vector {v}, m {m}: size mismatch"));
            }
            for (candidate, (idx, score)) in got.items().iter().zip(&expected) {
                if candidate.answer != answers[*idx]
                    || candidate.confidence != score.clamp(0.0, 1.0)
                {
                    return Err(format!(
                        "vector {v}, m {m}: got {:?}({}) expected {}({})",
                        candidate.answer,
                        candidate.confidence,
                        answers[*idx],
                        score.clamp(0.0, 1.0)
                    ));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Random strings (action tokens planted at random) across all roles:
/// clamped plans never leave the role's scope and empty extractions always
/// fall back to the full allowed set.
pub fn plan_clamp_fuzz_suite(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let fragments = [
        "Action_1", "Action_2", "Action_3", "action_2", "ACTION_3", ",", " ", "and", "use",
        "tool", "none", "no actions needed", "\n", "Action_", "4", "answer",
    ];
    for case in 0..cases {
        let pieces: usize = rng.random_range(0..6);
        let raw: String = (0..pieces)
            .map(|_| fragments[rng.random_range(0..fragments.len())])
            .collect::<Vec<_>>()
            .join(" ");
        for role in AgentRole::ALL {
            let plan = Plan::parse_and_clamp(&raw, role);
            if !plan.actions.iter().all(|a| role.allowed_actions().contains(a)) {
                return Err(format!(
                    "case {case}: plan {:?} escapes {role} scope for input {raw:?}",
                    plan.actions
                ));
            }
            let lowered = raw.to_lowercase();
            let extracted_any = role
                .allowed_actions()
                .iter()
                .any(|a| lowered.contains(&a.token().to_lowercase()));
            if !extracted_any && (!plan.fallback || plan.actions != role.allowed_actions()) {
                return Err(format!(
                    "case {case}: empty extraction for {role} did not fall back ({raw:?})"
                ));
            }
        }
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suites_pass() {
        assert_eq!(voting_oracle_suite().unwrap(), 1728);
        assert_eq!(weight_scaling_suite(200, 7).unwrap(), 200);
        top_m_oracle_suite(100, 11).unwrap();
        assert_eq!(plan_clamp_fuzz_suite(500, 13).unwrap(), 500);
    }

    #[test]
    fn reference_winner_handles_ties_like_the_documented_ladder() {
        // a: 1 + 1 = 2, b: 2 -> b wins on best voter weight.
        let votes = vec![
            ("a".to_string(), AgentRole::Junior, 1),
            ("a".to_string(), AgentRole::Senior, 1),
            ("b".to_string(), AgentRole::Manager, 2),
        ];
        assert_eq!(reference_winner(&votes).unwrap(), "b");
    }
}

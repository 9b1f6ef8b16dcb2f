//! Permutation tests for pairwise GSD dominance and the intersection-union
//! test for GSD-front membership.
//!
//! The resampling unit is the prompt-level pair swap: under the
//! exchangeability null the candidate's and the opponent's vectors on each
//! prompt can be exchanged independently with probability 1/2. Swaps move
//! strategy labels only — the set of observed vectors, and therefore the
//! preference system, is unchanged — so each resample re-solves the same LP
//! with fresh objective coefficients.
//!
//! Each pairwise sub-test is one-sided, upper tail: the null "the opponent
//! strictly GSD-dominates the candidate" pushes D(candidate, opponent)
//! down, so large observed values are evidence against it. Front
//! membership is rejected for H0 only when every pairwise sub-test rejects.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EvaluationTable;
use crate::gsd::{compute_d, DContext, GsdConfig};
use crate::order::PreferenceSystem;
use crate::rng::{derive_rng, hash_str};

#[derive(Debug, Error)]
pub enum TestError {
    #[error("resample count must be at least 1")]
    ZeroResamples,
    #[error("candidate and opponent must differ")]
    IdenticalStrategies,
    #[error("unknown strategy id {0:?}")]
    UnknownStrategy(String),
}

/// One pairwise permutation test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseTestResult {
    pub candidate: String,
    pub opponent: String,
    pub observed: f64,
    pub resampled: Vec<f64>,
    pub p_value: f64,
    /// (1 - alpha) empirical quantile of the resampled statistics.
    pub threshold: f64,
    pub reject: bool,
    pub alpha: f64,
}

/// Intersection-union test for front membership of one candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontTestResult {
    pub candidate: String,
    pub alpha: f64,
    pub pairwise: Vec<PairwiseTestResult>,
    pub reject_h0: bool,
}

/// Finite-sample-valid permutation p-value: (1 + #{resampled >= observed}) / (R + 1).
fn permutation_p_value(observed: f64, resampled: &[f64]) -> f64 {
    let count = resampled.iter().filter(|&&v| v >= observed).count();
    (1 + count) as f64 / (resampled.len() + 1) as f64
}

/// Upper empirical quantile: the ceil((1-alpha) * R)-th smallest value.
fn upper_quantile(resampled: &[f64], alpha: f64) -> f64 {
    let mut sorted = resampled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len();
    let k = ((1.0 - alpha) * r as f64).ceil() as usize;
    sorted[k.clamp(1, r) - 1]
}

/// The swap-pattern objective: per prompt, either the observed orientation
/// or the swapped one, averaged with weight 1/m.
fn swapped_objective(
    system: &PreferenceSystem,
    candidate: usize,
    opponent: usize,
    swaps: &[bool],
) -> Vec<f64> {
    let m = swaps.len() as f64;
    let mut objective = vec![0.0; system.node_count()];
    for (j, &swap) in swaps.iter().enumerate() {
        let (cn, on) = if swap {
            (system.cell_nodes[opponent][j], system.cell_nodes[candidate][j])
        } else {
            (system.cell_nodes[candidate][j], system.cell_nodes[opponent][j])
        };
        objective[cn] += 1.0 / m;
        objective[on] -= 1.0 / m;
    }
    objective
}

/// Runs the pairwise permutation test for D(candidate, opponent).
///
/// Resample r derives its generator from (seed, r), so results are
/// deterministic and identical across serial and parallel execution.
pub fn pairwise_test(
    table: &EvaluationTable,
    system: &PreferenceSystem,
    context: &DContext,
    candidate: &str,
    opponent: &str,
    resamples: usize,
    seed: u64,
    alpha: f64,
) -> Result<PairwiseTestResult, TestError> {
    if resamples == 0 {
        return Err(TestError::ZeroResamples);
    }
    if candidate == opponent {
        return Err(TestError::IdenticalStrategies);
    }
    let ci = table
        .strategy_index(candidate)
        .ok_or_else(|| TestError::UnknownStrategy(candidate.to_string()))?;
    let oi = table
        .strategy_index(opponent)
        .ok_or_else(|| TestError::UnknownStrategy(opponent.to_string()))?;

    let observed = compute_d(table, system, context, candidate, opponent)
        .expect("strategy ids already resolved")
        .value;

    let m = table.prompt_count();
    let resampled: Vec<f64> = (1..=resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_rng(seed, &[0x7357, r as u64]);
            let swaps: Vec<bool> = (0..m).map(|_| rng.gen::<bool>()).collect();
            let objective = swapped_objective(system, ci, oi, &swaps);
            context.minimize(&objective).0
        })
        .collect();

    let p_value = permutation_p_value(observed, &resampled);
    Ok(PairwiseTestResult {
        candidate: candidate.to_string(),
        opponent: opponent.to_string(),
        observed,
        threshold: upper_quantile(&resampled, alpha),
        reject: p_value <= alpha,
        p_value,
        resampled,
        alpha,
    })
}

/// Tests H0 "candidate is not in the GSD front" by running the pairwise
/// test against every opponent; H0 is rejected only when every sub-test
/// rejects. With no opponents the rejection is vacuous.
pub fn front_membership_test(
    table: &EvaluationTable,
    candidate: &str,
    resamples: usize,
    seed: u64,
    alpha: f64,
    config: &GsdConfig,
) -> Result<FrontTestResult, TestError> {
    let system = PreferenceSystem::from_table(table, config.r2_budget);
    let context = DContext::new(&system);
    front_membership_test_with(table, &system, &context, candidate, resamples, seed, alpha)
}

/// Same as [`front_membership_test`], reusing an existing system and context.
pub fn front_membership_test_with(
    table: &EvaluationTable,
    system: &PreferenceSystem,
    context: &DContext,
    candidate: &str,
    resamples: usize,
    seed: u64,
    alpha: f64,
) -> Result<FrontTestResult, TestError> {
    if table.strategy_index(candidate).is_none() {
        return Err(TestError::UnknownStrategy(candidate.to_string()));
    }
    let mut pairwise = Vec::new();
    for opponent in &table.strategies {
        if opponent == candidate {
            continue;
        }
        // Per-opponent seeds derive from the opponent name, so adding or
        // removing other strategies does not shift anyone's stream.
        let sub_seed = seed ^ hash_str(opponent);
        pairwise.push(pairwise_test(
            table, system, context, candidate, opponent, resamples, sub_seed, alpha,
        )?);
    }
    let reject_h0 = pairwise.iter().all(|t| t.reject);
    Ok(FrontTestResult {
        candidate: candidate.to_string(),
        alpha,
        pairwise,
        reject_h0,
    })
}

/// Exhaustive permutation distribution for small prompt counts (2^m swap
/// patterns). Test-support helper for exact law checks.
pub fn exhaustive_swap_distribution(
    table: &EvaluationTable,
    candidate: &str,
    opponent: &str,
    config: &GsdConfig,
) -> Vec<f64> {
    let system = PreferenceSystem::from_table(table, config.r2_budget);
    let context = DContext::new(&system);
    let ci = table.strategy_index(candidate).expect("known candidate");
    let oi = table.strategy_index(opponent).expect("known opponent");
    let m = table.prompt_count();
    assert!(m <= 16, "exhaustive enumeration is for small m only");
    (0u32..1 << m)
        .map(|mask| {
            let swaps: Vec<bool> = (0..m).map(|j| mask >> j & 1 == 1).collect();
            let objective = swapped_objective(&system, ci, oi, &swaps);
            context.minimize(&objective).0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EvaluationTable, MetricSpec, Normalization, Scale, ScaleSpec};
    use rand::Rng;

    fn scale_with(z: usize, n: usize) -> ScaleSpec {
        let mut metrics = Vec::new();
        for i in 0..z {
            metrics.push(MetricSpec {
                name: format!("c{i}"),
                scale: Scale::Cardinal,
                normalization: Normalization::None,
                ordinal_levels: None,
            });
        }
        for i in z..n {
            metrics.push(MetricSpec {
                name: format!("o{i}"),
                scale: Scale::Ordinal,
                normalization: Normalization::None,
                ordinal_levels: Some(vec![0.0, 0.25, 0.5, 0.75, 1.0]),
            });
        }
        ScaleSpec { metrics }
    }

    fn table_from(strategies: &[&str], cells: Vec<Vec<Vec<f64>>>, z: usize, n: usize) -> EvaluationTable {
        let prompts: Vec<String> = (0..cells[0].len()).map(|i| format!("p{i}")).collect();
        EvaluationTable::from_raw(
            strategies.iter().map(|s| s.to_string()).collect(),
            prompts.clone(),
            vec![None; prompts.len()],
            cells,
            scale_with(z, n),
        )
        .unwrap()
    }

    fn run_pairwise(
        table: &EvaluationTable,
        cand: &str,
        opp: &str,
        resamples: usize,
        seed: u64,
        alpha: f64,
    ) -> PairwiseTestResult {
        let system = PreferenceSystem::from_table(table, None);
        let context = DContext::new(&system);
        pairwise_test(table, &system, &context, cand, opp, resamples, seed, alpha).unwrap()
    }

    fn random_cells(
        rng: &mut rand_chacha::ChaCha8Rng,
        strategies: usize,
        prompts: usize,
        n: usize,
    ) -> Vec<Vec<Vec<f64>>> {
        (0..strategies)
            .map(|_| {
                (0..prompts)
                    .map(|_| (0..n).map(|_| rng.gen_range(0..=4) as f64 / 4.0).collect())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_columns_give_p_value_one() {
        let col = vec![vec![0.5, 0.75], vec![0.25, 0.5], vec![1.0, 0.0]];
        let table = table_from(&["a", "b"], vec![col.clone(), col], 1, 2);
        let t = run_pairwise(&table, "a", "b", 50, 7, 0.05);
        assert_eq!(t.observed, 0.0);
        assert!(t.resampled.iter().all(|&v| v == 0.0));
        assert_eq!(t.p_value, 1.0);
        assert!(!t.reject);
    }

    #[test]
    fn p_value_floor_when_every_resample_is_below_observed() {
        let t = PairwiseTestResult {
            candidate: "a".into(),
            opponent: "b".into(),
            observed: 0.0,
            resampled: vec![-0.5, -0.25, -0.125, -0.75],
            p_value: permutation_p_value(0.0, &[-0.5, -0.25, -0.125, -0.75]),
            threshold: 0.0,
            reject: false,
            alpha: 0.05,
        };
        assert_eq!(t.p_value, 1.0 / 5.0);
    }

    #[test]
    fn p_value_respects_bounds_and_determinism() {
        let mut rng = crate::rng::derive_rng(61, &[0]);
        for trial in 0..10 {
            let cells = random_cells(&mut rng, 2, 6, 2);
            let table = table_from(&["a", "b"], cells, 1, 2);
            let r = 40;
            let t1 = run_pairwise(&table, "a", "b", r, trial, 0.05);
            let t2 = run_pairwise(&table, "a", "b", r, trial, 0.05);
            assert!(t1.p_value >= 1.0 / (r as f64 + 1.0) - 1e-15);
            assert!(t1.p_value <= 1.0);
            assert_eq!(t1.p_value.to_bits(), t2.p_value.to_bits());
            assert_eq!(t1.observed.to_bits(), t2.observed.to_bits());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&t1.resampled), bits(&t2.resampled));
        }
    }

    #[test]
    fn full_swap_table_has_the_same_exhaustive_law() {
        // Exchange every prompt's vectors between the two strategies; the
        // full 2^m swap distribution must be identical as a multiset.
        let mut rng = crate::rng::derive_rng(62, &[0]);
        let m = 6;
        let cells = random_cells(&mut rng, 2, m, 2);
        let swapped = vec![cells[1].clone(), cells[0].clone()];
        let table = table_from(&["a", "b"], cells, 1, 2);
        let table_swapped = table_from(&["a", "b"], swapped, 1, 2);

        let cfg = GsdConfig::default();
        let mut d1 = exhaustive_swap_distribution(&table, "a", "b", &cfg);
        let mut d2 = exhaustive_swap_distribution(&table_swapped, "a", "b", &cfg);
        d1.sort_by(f64::total_cmp);
        d2.sort_by(f64::total_cmp);
        for (x, y) in d1.iter().zip(&d2) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn resampled_law_is_stable_across_seeds_on_the_full_swap_table() {
        let mut rng = crate::rng::derive_rng(63, &[0]);
        let cells = random_cells(&mut rng, 2, 12, 2);
        let swapped = vec![cells[1].clone(), cells[0].clone()];
        let table = table_from(&["a", "b"], cells, 1, 2);
        let table_swapped = table_from(&["a", "b"], swapped, 1, 2);
        let r = 400;
        let t1 = run_pairwise(&table, "a", "b", r, 1, 0.05);
        let t2 = run_pairwise(&table_swapped, "a", "b", r, 2, 0.05);
        let mut s1 = t1.resampled;
        let mut s2 = t2.resampled;
        s1.sort_by(f64::total_cmp);
        s2.sort_by(f64::total_cmp);
        // Same law, different seeds: compare ECDFs loosely.
        let sup = s1
            .iter()
            .zip(&s2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup < 0.2, "sorted resample gap {sup}");
    }

    #[test]
    fn all_ones_candidate_never_lowers_the_observed_statistic() {
        let mut rng = crate::rng::derive_rng(64, &[0]);
        for trial in 0..20 {
            let cells = random_cells(&mut rng, 2, 5, 2);
            let table = table_from(&["a", "b"], cells.clone(), 1, 2);
            let base = run_pairwise(&table, "a", "b", 1, trial, 0.05).observed;
            let mut boosted = cells;
            for row in boosted[0].iter_mut() {
                *row = vec![1.0, 1.0];
            }
            let table_up = table_from(&["a", "b"], boosted, 1, 2);
            let up = run_pairwise(&table_up, "a", "b", 1, trial, 0.05).observed;
            assert!(up >= base - 1e-9, "boosting candidate lowered D: {base} -> {up}");
        }
    }

    #[test]
    fn front_membership_composes_pairwise_setups() {
        let mut rng = crate::rng::derive_rng(65, &[0]);
        let cells = random_cells(&mut rng, 3, 5, 2);
        let table = table_from(&["a", "b", "c"], cells, 1, 2);
        let res = front_membership_test(&table, "a", 30, 9, 0.05, &GsdConfig::default()).unwrap();
        assert_eq!(res.pairwise.len(), 2);
        assert_eq!(res.reject_h0, res.pairwise.iter().all(|t| t.reject));

        // Deterministic repetition.
        let res2 = front_membership_test(&table, "a", 30, 9, 0.05, &GsdConfig::default()).unwrap();
        assert_eq!(res.reject_h0, res2.reject_h0);
        for (x, y) in res.pairwise.iter().zip(&res2.pairwise) {
            assert_eq!(x.p_value.to_bits(), y.p_value.to_bits());
        }
    }

    #[test]
    fn front_membership_on_singleton_is_vacuous() {
        let table = table_from(&["only"], vec![vec![vec![0.5, 0.5]]], 1, 2);
        let res = front_membership_test(&table, "only", 10, 1, 0.05, &GsdConfig::default()).unwrap();
        assert!(res.reject_h0);
        assert!(res.pairwise.is_empty());
    }

    #[test]
    fn argument_validation() {
        let table = table_from(&["a", "b"], vec![vec![vec![0.5, 0.5]], vec![vec![0.25, 0.25]]], 1, 2);
        let system = PreferenceSystem::from_table(&table, None);
        let context = DContext::new(&system);
        assert!(matches!(
            pairwise_test(&table, &system, &context, "a", "b", 0, 1, 0.05),
            Err(TestError::ZeroResamples)
        ));
        assert!(matches!(
            pairwise_test(&table, &system, &context, "a", "a", 10, 1, 0.05),
            Err(TestError::IdenticalStrategies)
        ));
        assert!(matches!(
            front_membership_test(&table, "zzz", 10, 1, 0.05, &GsdConfig::default()),
            Err(TestError::UnknownStrategy(_))
        ));
    }

    #[test]
    fn quantile_threshold_is_an_order_statistic() {
        let resampled = vec![-0.5, -0.4, -0.3, -0.2, -0.1, 0.0, -0.35, -0.45, -0.25, -0.15];
        let q = upper_quantile(&resampled, 0.05);
        // ceil(0.95 * 10) = 10th smallest = max.
        assert_eq!(q, 0.0);
        let q50 = upper_quantile(&resampled, 0.5);
        let mut sorted = resampled.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(q50, sorted[4]);
    }
}

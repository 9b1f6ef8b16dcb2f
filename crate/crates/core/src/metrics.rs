//! Automatic text-quality metrics: n-gram diversity, generation perplexity,
//! coherence, Gaussian penalties, the Q*Text aggregate, and the fit of its
//! nine parameters against human ratings.
//!
//! Tokens and log-probabilities are taken as given from token records; no
//! tokenizer or language-model inference lives here.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{average_ranks, spearman_rho};
use crate::data::{normalize_column, Normalization, TokenRecord};
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty log-probability list")]
    Empty,
    #[error("log-probability {0} must be <= 0 and finite")]
    BadLogProb(f64),
    #[error("penalty strength must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error("all Q*Text weights are zero")]
    ZeroWeights,
    #[error("need at least {0} texts to fit")]
    TooFewTexts(usize),
    #[error("human ratings are constant; rank correlation undefined")]
    ConstantRatings,
}

/// Product over n = 2..=4 of unique-n-gram share. A factor whose n-gram set
/// is empty (fewer than n tokens) counts as 1.
pub fn diversity(tokens: &[String]) -> f64 {
    (2..=4)
        .map(|n| {
            let total = tokens.len().saturating_sub(n - 1);
            if total == 0 {
                return 1.0;
            }
            let unique = tokens.windows(n).collect::<HashSet<_>>().len();
            unique as f64 / total as f64
        })
        .product()
}

/// exp of the negated mean log-probability; >= 1 for admissible inputs.
pub fn perplexity(uncond_logprob: &[f64]) -> Result<f64, MetricError> {
    let mean = mean_logprob(uncond_logprob)?;
    Ok((-mean).exp())
}

/// Mean prompt-conditioned log-probability of the generated tokens; <= 0.
pub fn coherence(cond_logprob: &[f64]) -> Result<f64, MetricError> {
    mean_logprob(cond_logprob)
}

fn mean_logprob(logs: &[f64]) -> Result<f64, MetricError> {
    if logs.is_empty() {
        return Err(MetricError::Empty);
    }
    for &lp in logs {
        if !lp.is_finite() || lp > 0.0 {
            return Err(MetricError::BadLogProb(lp));
        }
    }
    Ok(logs.iter().sum::<f64>() / logs.len() as f64)
}

/// exp(-alpha (x - mu)^2); equals 1 at the target and for alpha = 0.
pub fn gaussian_penalty(x: f64, mu: f64, alpha: f64) -> Result<f64, MetricError> {
    if alpha < 0.0 {
        return Err(MetricError::NegativeAlpha(alpha));
    }
    Ok((-alpha * (x - mu) * (x - mu)).exp())
}

/// The nine Q*Text parameters: weights, penalty targets, penalty strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTextParams {
    pub weights: [f64; 3],
    pub targets: [f64; 3],
    pub strengths: [f64; 3],
}

impl Default for QTextParams {
    /// Equal weights, no penalty: Q*Text reduces to the mean of the inputs.
    fn default() -> Self {
        QTextParams {
            weights: [1.0, 1.0, 1.0],
            targets: [0.5, 0.5, 0.5],
            strengths: [0.0, 0.0, 0.0],
        }
    }
}

impl QTextParams {
    pub fn check(&self) -> Result<(), MetricError> {
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(MetricError::ZeroWeights);
        }
        if let Some(&w) = self.weights.iter().find(|&&w| w < 0.0 || !w.is_finite()) {
            return Err(MetricError::NegativeAlpha(w));
        }
        if let Some(&a) = self.strengths.iter().find(|&&a| a < 0.0 || !a.is_finite()) {
            return Err(MetricError::NegativeAlpha(a));
        }
        Ok(())
    }
}

/// Weighted penalized mean: sum w_i M_i P_i(M_i) / sum w_i.
///
/// `m` holds the normalized inputs (inverse-normalized perplexity, then
/// coherence, then diversity, each in [0,1]).
pub fn qtext(m: [f64; 3], params: &QTextParams) -> Result<f64, MetricError> {
    params.check()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        let p = gaussian_penalty(m[i], params.targets[i], params.strengths[i])?;
        num += params.weights[i] * m[i] * p;
        den += params.weights[i];
    }
    Ok(num / den)
}

/// Raw per-text metric triple before batch normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextMetrics {
    pub prompt_id: String,
    pub strategy: String,
    pub diversity: f64,
    pub perplexity: f64,
    pub coherence: f64,
}

/// Computes raw metrics for each token record.
pub fn compute_text_metrics(records: &[TokenRecord]) -> Result<Vec<TextMetrics>, MetricError> {
    records
        .iter()
        .map(|r| {
            Ok(TextMetrics {
                prompt_id: r.prompt_id.clone(),
                strategy: r.strategy.clone(),
                diversity: diversity(&r.tokens),
                perplexity: perplexity(&r.uncond_logprob)?,
                coherence: coherence(&r.cond_logprob)?,
            })
        })
        .collect()
}

/// Normalizes a metric batch into the Q*Text inputs M = (ppl', coh', div'):
/// inverse min-max for perplexity (lower is better), min-max for the rest.
pub fn normalize_for_qtext(rows: &[TextMetrics]) -> Result<Vec<[f64; 3]>, MetricError> {
    if rows.is_empty() {
        return Err(MetricError::Empty);
    }
    let ppl: Vec<f64> = rows.iter().map(|r| r.perplexity).collect();
    let coh: Vec<f64> = rows.iter().map(|r| r.coherence).collect();
    let div: Vec<f64> = rows.iter().map(|r| r.diversity).collect();
    let m1 = normalize_column(&ppl, Normalization::InverseMinmax).expect("nonempty");
    let m2 = normalize_column(&coh, Normalization::Minmax).expect("nonempty");
    let m3 = normalize_column(&div, Normalization::Minmax).expect("nonempty");
    Ok((0..rows.len()).map(|i| [m1[i], m2[i], m3[i]]).collect())
}

/// Search configuration for the parameter fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub rounds: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Record every evaluated candidate (for audit tests).
    pub log_evaluations: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            rounds: 3,
            restarts: 16,
            seed: 0,
            log_evaluations: false,
        }
    }
}

/// Grids per parameter kind. The objective is piecewise constant in ranks,
/// so a coarse derivative-free search is appropriate.
fn weight_grid() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.25).collect()
}
fn target_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 0.1).collect()
}
fn strength_grid() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: QTextParams,
    pub achieved_rho: f64,
    /// Present when `log_evaluations` was set.
    pub evaluations: Vec<(QTextParams, f64)>,
}

/// Spearman correlation of Q*Text(theta) scores with the human ratings;
/// None when the scores are constant or the weights all zero.
fn candidate_rho(params: &QTextParams, m_rows: &[[f64; 3]], human: &[f64]) -> Option<f64> {
    if params.weights.iter().all(|&w| w == 0.0) {
        return None;
    }
    let scores: Vec<f64> = m_rows
        .iter()
        .map(|&m| qtext(m, params).expect("weights checked nonzero"))
        .collect();
    spearman_rho(&scores, human).ok()
}

/// Maximizes Spearman correlation between Q*Text scores and human ratings by
/// coordinate-wise grid refinement with random restarts. Restarts run in
/// parallel and are reduced in restart order, so results are deterministic.
pub fn fit_qtext_params(
    m_rows: &[[f64; 3]],
    human: &[f64],
    config: &FitConfig,
) -> Result<FitResult, MetricError> {
    if m_rows.len() < 3 || human.len() != m_rows.len() {
        return Err(MetricError::TooFewTexts(3));
    }
    if human.iter().all(|&h| h == human[0]) {
        return Err(MetricError::ConstantRatings);
    }

    let restarts: Vec<usize> = (0..config.restarts.max(1)).collect();
    let per_restart: Vec<(QTextParams, f64, Vec<(QTextParams, f64)>)> = restarts
        .par_iter()
        .map(|&restart| {
            let mut rng = derive_rng(config.seed, &[0x71e7, restart as u64]);
            let pick = |rng: &mut rand_chacha::ChaCha8Rng, grid: &[f64]| {
                grid[rng.gen_range(0..grid.len())]
            };
            let mut params = QTextParams {
                weights: [
                    pick(&mut rng, &weight_grid()),
                    pick(&mut rng, &weight_grid()),
                    pick(&mut rng, &weight_grid()),
                ],
                targets: [
                    pick(&mut rng, &target_grid()),
                    pick(&mut rng, &target_grid()),
                    pick(&mut rng, &target_grid()),
                ],
                strengths: [
                    pick(&mut rng, &strength_grid()),
                    pick(&mut rng, &strength_grid()),
                    pick(&mut rng, &strength_grid()),
                ],
            };
            let mut log = Vec::new();
            let evaluate = |p: &QTextParams, log: &mut Vec<(QTextParams, f64)>| {
                let rho = candidate_rho(p, m_rows, human);
                if config.log_evaluations {
                    log.push((p.clone(), rho.unwrap_or(f64::NEG_INFINITY)));
                }
                rho
            };
            let mut best_rho = evaluate(&params, &mut log).unwrap_or(f64::NEG_INFINITY);

            for _round in 0..config.rounds {
                // One pass over all nine coordinates; first grid value wins ties.
                for coord in 0..9 {
                    let grid = match coord {
                        0..=2 => weight_grid(),
                        3..=5 => target_grid(),
                        _ => strength_grid(),
                    };
                    let mut best_value = coordinate(&params, coord);
                    for &value in &grid {
                        let mut trial = params.clone();
                        set_coordinate(&mut trial, coord, value);
                        if let Some(rho) = evaluate(&trial, &mut log) {
                            if rho > best_rho + 1e-15 {
                                best_rho = rho;
                                best_value = value;
                            }
                        }
                    }
                    set_coordinate(&mut params, coord, best_value);
                }
            }
            (params, best_rho, log)
        })
        .collect();

    let mut best: Option<(QTextParams, f64)> = None;
    let mut evaluations = Vec::new();
    for (params, rho, log) in per_restart {
        evaluations.extend(log);
        let better = match &best {
            None => true,
            Some((_, b)) => rho > *b + 1e-15,
        };
        if better && rho.is_finite() {
            best = Some((params, rho));
        }
    }
    let (params, achieved_rho) = best.ok_or(MetricError::ConstantRatings)?;
    Ok(FitResult {
        params,
        achieved_rho,
        evaluations,
    })
}

fn coordinate(p: &QTextParams, coord: usize) -> f64 {
    match coord {
        0..=2 => p.weights[coord],
        3..=5 => p.targets[coord - 3],
        _ => p.strengths[coord - 6],
    }
}

fn set_coordinate(p: &mut QTextParams, coord: usize, value: f64) {
    match coord {
        0..=2 => p.weights[coord] = value,
        3..=5 => p.targets[coord - 3] = value,
        _ => p.strengths[coord - 6] = value,
    }
}

/// Ranks used by tests constructing perfect-rank human ratings.
pub fn rank_of(xs: &[f64]) -> Vec<f64> {
    average_ranks(xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Independent n-gram counter: joins each window into a delimited string
    /// and counts distinct strings via a sorted vector.
    fn diversity_oracle(tokens: &[String]) -> f64 {
        let mut product = 1.0;
        for n in 2..=4usize {
            if tokens.len() < n {
                continue;
            }
            let mut grams: Vec<String> = Vec::new();
            for start in 0..=(tokens.len() - n) {
                grams.push(tokens[start..start + n].join("\u{1}"));
            }
            let total = grams.len() as f64;
            grams.sort();
            grams.dedup();
            product *= grams.len() as f64 / total;
        }
        product
    }

    #[test]
    fn diversity_hand_cases() {
        // Ten pairwise-distinct tokens: every n-gram unique.
        let t = toks("a b c d e f g h i j");
        assert_eq!(diversity(&t), 1.0);
        // Six identical tokens: (1/5)(1/4)(1/3) = 1/60.
        let t = toks("a a a a a a");
        assert!((diversity(&t) - 1.0 / 60.0).abs() < 1e-15);
        // Shorter than some n: missing factors count as 1.
        let t = toks("a b");
        assert_eq!(diversity(&t), 1.0);
        assert_eq!(diversity(&[]), 1.0);
    }

    #[test]
    fn diversity_matches_oracle_on_random_sequences() {
        let mut rng = crate::rng::derive_rng(21, &[0]);
        let alphabet = ["a", "b", "c", "d", "e"];
        for _ in 0..100 {
            let len = rng.gen_range(5..60);
            let t: Vec<String> = (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())].to_string())
                .collect();
            assert!((diversity(&t) - diversity_oracle(&t)).abs() < 1e-12);
        }
    }

    #[test]
    fn perplexity_hand_cases() {
        assert_eq!(perplexity(&[0.0, 0.0]).unwrap(), 1.0);
        let half = 0.5f64.ln();
        assert!((perplexity(&[half, half, half]).unwrap() - 2.0).abs() < 1e-12);
        // Mean of [-1,-2,-3] is -2.
        assert!((perplexity(&[-1.0, -2.0, -3.0]).unwrap() - 2f64.exp()).abs() < 1e-12);
        assert!(perplexity(&[]).is_err());
        assert!(perplexity(&[0.1]).is_err());
    }

    #[test]
    fn coherence_hand_cases() {
        assert_eq!(coherence(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(coherence(&[-1.0, -1.0]).unwrap(), -1.0);
        assert!((coherence(&[-0.5, -1.5]).unwrap() + 1.0).abs() < 1e-15);
        assert!(coherence(&[]).is_err());
    }

    #[test]
    fn perplexity_is_exp_of_negated_coherence_mean() {
        let mut rng = crate::rng::derive_rng(22, &[0]);
        for _ in 0..100 {
            let n = rng.gen_range(1..50);
            let logs: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..5.0)).collect();
            let p = perplexity(&logs).unwrap();
            let c = coherence(&logs).unwrap();
            assert!((p - (-c).exp()).abs() < 1e-12 * p.max(1.0));
        }
    }

    #[test]
    fn gaussian_penalty_hand_cases() {
        assert_eq!(gaussian_penalty(0.3, 0.3, 5.0).unwrap(), 1.0);
        assert_eq!(gaussian_penalty(0.9, 0.1, 0.0).unwrap(), 1.0);
        assert!((gaussian_penalty(1.5, 0.5, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!(gaussian_penalty(0.0, 0.0, -1.0).is_err());
    }

    /// Step-by-step Q*Text evaluation with its own exp calls.
    fn qtext_oracle(m: [f64; 3], p: &QTextParams) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..3 {
            let d = m[i] - p.targets[i];
            let pen = f64::exp(-p.strengths[i] * d * d);
            num += p.weights[i] * m[i] * pen;
            den += p.weights[i];
        }
        num / den
    }

    #[test]
    fn qtext_hand_and_oracle_cases() {
        // All metrics at their targets with unit weights: plain mean.
        let p = QTextParams {
            weights: [1.0, 1.0, 1.0],
            targets: [0.2, 0.5, 0.9],
            strengths: [3.0, 1.0, 2.0],
        };
        let v = qtext([0.2, 0.5, 0.9], &p).unwrap();
        assert!((v - (0.2 + 0.5 + 0.9) / 3.0).abs() < 1e-12);

        // Weight masking.
        let p = QTextParams {
            weights: [1.0, 0.0, 0.0],
            targets: [0.5, 0.0, 1.0],
            strengths: [2.0, 7.0, 7.0],
        };
        let v = qtext([0.8, 0.123, 0.456], &p).unwrap();
        let expect = 0.8 * gaussian_penalty(0.8, 0.5, 2.0).unwrap();
        assert!((v - expect).abs() < 1e-12);

        // Mixed case against the oracle.
        let p = QTextParams {
            weights: [1.0, 2.0, 1.0],
            targets: [0.7, 0.5, 1.0],
            strengths: [2.0, 0.0, 1.0],
        };
        let m = [0.8, 0.5, 0.9];
        assert!((qtext(m, &p).unwrap() - qtext_oracle(m, &p)).abs() < 1e-12);

        let zero = QTextParams {
            weights: [0.0, 0.0, 0.0],
            ..QTextParams::default()
        };
        assert!(qtext(m, &zero).is_err());
    }

    #[test]
    fn qtext_matches_oracle_on_random_inputs() {
        let mut rng = crate::rng::derive_rng(23, &[0]);
        for _ in 0..100 {
            let m = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let p = QTextParams {
                weights: [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0 + 0.01],
                targets: [rng.gen(), rng.gen(), rng.gen()],
                strengths: [rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0],
            };
            assert!((qtext(m, &p).unwrap() - qtext_oracle(m, &p)).abs() < 1e-12);
        }
    }

    #[test]
    fn qtext_invariant_under_joint_weight_rescaling() {
        let mut rng = crate::rng::derive_rng(24, &[0]);
        for _ in 0..100 {
            let m = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let p = QTextParams {
                weights: [rng.gen::<f64>() + 0.1, rng.gen::<f64>(), rng.gen::<f64>()],
                targets: [rng.gen(), rng.gen(), rng.gen()],
                strengths: [rng.gen::<f64>() * 4.0, 0.0, 1.0],
            };
            let c = rng.gen_range(0.1..10.0);
            let scaled = QTextParams {
                weights: [p.weights[0] * c, p.weights[1] * c, p.weights[2] * c],
                ..p.clone()
            };
            assert!((qtext(m, &p).unwrap() - qtext(m, &scaled).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn qtext_stays_in_unit_interval() {
        let mut rng = crate::rng::derive_rng(25, &[0]);
        for _ in 0..200 {
            let m = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let p = QTextParams {
                weights: [rng.gen::<f64>() + 0.01, rng.gen(), rng.gen()],
                targets: [rng.gen(), rng.gen(), rng.gen()],
                strengths: [rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0, rng.gen::<f64>() * 8.0],
            };
            let v = qtext(m, &p).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn fit_recovers_perfect_rank_structure() {
        // Human ratings strictly increase in M2; M1 and M3 are flat.
        let m_rows: Vec<[f64; 3]> = (0..20)
            .map(|i| [0.5, i as f64 / 19.0, 0.5])
            .collect();
        let human: Vec<f64> = (0..20).map(|i| (i + 1) as f64).collect();
        let fit = fit_qtext_params(&m_rows, &human, &FitConfig::default()).unwrap();
        assert!((fit.achieved_rho - 1.0).abs() < 1e-12, "rho = {}", fit.achieved_rho);
    }

    #[test]
    fn fit_achieved_rho_dominates_every_logged_candidate() {
        let mut rng = crate::rng::derive_rng(26, &[0]);
        let m_rows: Vec<[f64; 3]> = (0..15)
            .map(|_| [rng.gen(), rng.gen(), rng.gen()])
            .collect();
        let human: Vec<f64> = (0..15).map(|_| rng.gen_range(1..=5) as f64).collect();
        let config = FitConfig {
            restarts: 4,
            rounds: 2,
            log_evaluations: true,
            seed: 3,
        };
        let fit = fit_qtext_params(&m_rows, &human, &config).unwrap();
        for (_, rho) in &fit.evaluations {
            assert!(fit.achieved_rho >= rho - 1e-12);
        }
        // The returned parameters reproduce the achieved correlation.
        let again = candidate_rho(&fit.params, &m_rows, &human).unwrap();
        assert!((again - fit.achieved_rho).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        let m_rows = vec![[0.1, 0.2, 0.3]; 5];
        assert!(matches!(
            fit_qtext_params(&m_rows, &[2.0; 5], &FitConfig::default()),
            Err(MetricError::ConstantRatings)
        ));
        assert!(matches!(
            fit_qtext_params(&m_rows[..2], &[1.0, 2.0], &FitConfig::default()),
            Err(MetricError::TooFewTexts(_))
        ));
    }

    #[test]
    fn normalize_for_qtext_orients_all_three_inputs() {
        let rows = vec![
            TextMetrics {
                prompt_id: "p1".into(),
                strategy: "a".into(),
                diversity: 0.2,
                perplexity: 10.0,
                coherence: -3.0,
            },
            TextMetrics {
                prompt_id: "p1".into(),
                strategy: "b".into(),
                diversity: 0.9,
                perplexity: 2.0,
                coherence: -1.0,
            },
        ];
        let m = normalize_for_qtext(&rows).unwrap();
        // Lower perplexity, higher coherence, higher diversity all map to 1.
        assert_eq!(m[1], [1.0, 1.0, 1.0]);
        assert_eq!(m[0], [0.0, 0.0, 0.0]);
    }
}

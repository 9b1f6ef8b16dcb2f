//! Inter-rater agreement statistics for ordinal human evaluations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("rating lists must be nonempty and of equal length")]
    BadShape,
    #[error("rating value {0} is not one of the declared levels")]
    UnknownLevel(f64),
    #[error("kappa undefined: both raters constant at the same level")]
    KappaUndefined,
    #[error("spearman undefined: input list is constant")]
    ConstantInput,
    #[error("need at least {0} observations")]
    TooFew(usize),
}

/// Two raters' scores on a declared c-level ordinal scale.
#[derive(Debug, Clone)]
pub struct RatingPairs {
    pub rater_a: Vec<f64>,
    pub rater_b: Vec<f64>,
    /// Strictly increasing admissible levels (e.g. 1..=5 Likert).
    pub levels: Vec<f64>,
}

impl RatingPairs {
    pub fn new(rater_a: Vec<f64>, rater_b: Vec<f64>, levels: Vec<f64>) -> Result<Self, AgreementError> {
        if rater_a.is_empty() || rater_a.len() != rater_b.len() {
            return Err(AgreementError::BadShape);
        }
        let pairs = RatingPairs { rater_a, rater_b, levels };
        // Fail fast on values outside the scale.
        pairs.level_indices(&pairs.rater_a)?;
        pairs.level_indices(&pairs.rater_b)?;
        Ok(pairs)
    }

    fn level_indices(&self, xs: &[f64]) -> Result<Vec<usize>, AgreementError> {
        xs.iter()
            .map(|&x| {
                self.levels
                    .iter()
                    .position(|&l| l == x)
                    .ok_or(AgreementError::UnknownLevel(x))
            })
            .collect()
    }
}

/// Cohen's kappa with linear disagreement weights |i-j|/(c-1).
///
/// kappa_w = 1 - (sum v_ij O_ij) / (sum v_ij E_ij) with O the observed joint
/// proportion matrix and E the product of the marginals.
pub fn weighted_kappa(pairs: &RatingPairs) -> Result<f64, AgreementError> {
    let c = pairs.levels.len();
    if c < 2 {
        return Err(AgreementError::TooFew(2));
    }
    let ia = pairs.level_indices(&pairs.rater_a)?;
    let ib = pairs.level_indices(&pairs.rater_b)?;
    let n = ia.len() as f64;

    let mut observed = vec![vec![0.0; c]; c];
    for (&i, &j) in ia.iter().zip(&ib) {
        observed[i][j] += 1.0 / n;
    }
    let mut marg_a = vec![0.0; c];
    let mut marg_b = vec![0.0; c];
    for i in 0..c {
        for j in 0..c {
            marg_a[i] += observed[i][j];
            marg_b[j] += observed[i][j];
        }
    }

    let weight = |i: usize, j: usize| (i as f64 - j as f64).abs() / (c - 1) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..c {
        for j in 0..c {
            num += weight(i, j) * observed[i][j];
            den += weight(i, j) * marg_a[i] * marg_b[j];
        }
    }
    if den == 0.0 {
        return Err(AgreementError::KappaUndefined);
    }
    Ok(1.0 - num / den)
}

/// Average ranks (1-based), ties sharing the mean of their rank range.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, AgreementError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(AgreementError::TooFew(2));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(AgreementError::ConstantInput);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    Ok(pearson(&rx, &ry))
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Within-one-point share and mean absolute difference, in level units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub within_one_share: f64,
    pub mean_abs_diff: f64,
}

pub fn agreement_summary(pairs: &RatingPairs) -> Result<AgreementSummary, AgreementError> {
    let ia = pairs.level_indices(&pairs.rater_a)?;
    let ib = pairs.level_indices(&pairs.rater_b)?;
    let n = ia.len() as f64;
    let mut within = 0.0;
    let mut total = 0.0;
    for (&i, &j) in ia.iter().zip(&ib) {
        let d = (i as f64 - j as f64).abs();
        if d <= 1.0 {
            within += 1.0;
        }
        total += d;
    }
    Ok(AgreementSummary {
        within_one_share: within / n,
        mean_abs_diff: total / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn likert() -> Vec<f64> {
        vec![1.0, 2.0, 3.0, 4.0, 5.0]
    }

    /// Brute-force kappa straight from the formula, building the full joint
    /// count matrix with integer counts and evaluating both sums separately.
    fn kappa_oracle(a: &[f64], b: &[f64], levels: &[f64]) -> Option<f64> {
        let c = levels.len();
        let idx = |x: f64| levels.iter().position(|&l| l == x).unwrap();
        let n = a.len();
        let mut counts = vec![vec![0usize; c]; c];
        for k in 0..n {
            counts[idx(a[k])][idx(b[k])] += 1;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..c {
            for j in 0..c {
                let v = (i as f64 - j as f64).abs() / (c as f64 - 1.0);
                let o = counts[i][j] as f64 / n as f64;
                let ra: usize = counts[i].iter().sum();
                let rb: usize = (0..c).map(|r| counts[r][j]).sum();
                num += v * o;
                den += v * (ra as f64 / n as f64) * (rb as f64 / n as f64);
            }
        }
        if den == 0.0 {
            None
        } else {
            Some(1.0 - num / den)
        }
    }

    #[test]
    fn identical_ratings_give_kappa_one() {
        let a = vec![1.0, 3.0, 5.0, 2.0, 2.0];
        let pairs = RatingPairs::new(a.clone(), a, likert()).unwrap();
        assert!((weighted_kappa(&pairs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_cell_confusion_matrix_matches_oracle() {
        let a = vec![1.0, 5.0];
        let b = vec![5.0, 1.0];
        let pairs = RatingPairs::new(a.clone(), b.clone(), likert()).unwrap();
        let got = weighted_kappa(&pairs).unwrap();
        let want = kappa_oracle(&a, &b, &likert()).unwrap();
        assert!((got - want).abs() < 1e-12);
        // Hand-built matrix: observed weighted disagreement 1, expected 0.5.
        assert!((got - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn random_ratings_match_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(11, &[0]);
        for _ in 0..100 {
            let n = rng.gen_range(2..40);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
            let pairs = RatingPairs::new(a.clone(), b.clone(), likert()).unwrap();
            match (weighted_kappa(&pairs), kappa_oracle(&a, &b, &likert())) {
                (Ok(got), Some(want)) => assert!((got - want).abs() < 1e-12),
                (Err(AgreementError::KappaUndefined), None) => {}
                (got, want) => panic!("disagree: {got:?} vs {want:?}"),
            }
        }
    }

    #[test]
    fn kappa_undefined_when_both_constant_same_level() {
        let pairs = RatingPairs::new(vec![3.0, 3.0], vec![3.0, 3.0], likert()).unwrap();
        assert!(matches!(weighted_kappa(&pairs), Err(AgreementError::KappaUndefined)));
    }

    #[test]
    fn kappa_invariant_under_joint_scale_reversal() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(12, &[0]);
        for _ in 0..50 {
            let n = rng.gen_range(3..30);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
            let rev = |xs: &[f64]| xs.iter().map(|&x| 6.0 - x).collect::<Vec<_>>();
            let p1 = RatingPairs::new(a.clone(), b.clone(), likert()).unwrap();
            let p2 = RatingPairs::new(rev(&a), rev(&b), likert()).unwrap();
            match (weighted_kappa(&p1), weighted_kappa(&p2)) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                other => panic!("reversal changed definedness: {other:?}"),
            }
        }
    }

    #[test]
    fn spearman_basics() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        assert!((spearman_rho(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = xs.iter().rev().cloned().collect();
        assert!((spearman_rho(&xs, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman_rho(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_invariant_under_increasing_transform() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(13, &[0]);
        for _ in 0..50 {
            let n = rng.gen_range(3..40);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            if xs.iter().all(|&v| v == xs[0]) || ys.iter().all(|&v| v == ys[0]) {
                continue;
            }
            let tx: Vec<f64> = xs.iter().map(|&x| (x + 1.0).powi(3)).collect();
            let a = spearman_rho(&xs, &ys).unwrap();
            let b = spearman_rho(&tx, &ys).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn average_ranks_handle_ties() {
        let r = average_ranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn summary_hand_cases() {
        let pairs = RatingPairs::new(vec![2.0, 4.0], vec![2.0, 4.0], likert()).unwrap();
        let s = agreement_summary(&pairs).unwrap();
        assert_eq!(s.within_one_share, 1.0);
        assert_eq!(s.mean_abs_diff, 0.0);

        // {(1,3),(2,2)}: one pair two levels apart, one exact.
        let pairs = RatingPairs::new(vec![1.0, 2.0], vec![3.0, 2.0], likert()).unwrap();
        let s = agreement_summary(&pairs).unwrap();
        assert_eq!(s.within_one_share, 0.5);
        assert_eq!(s.mean_abs_diff, 1.0);
    }
}

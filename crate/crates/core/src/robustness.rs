//! Deviation tolerance from the i.i.d. assumption: p-values as a function
//! of the number of prompts an adversary may replace.
//!
//! The contamination model is a conservative outer bound: up to k prompt
//! pairs are handed to an arbitrary distribution, and the worst case over
//! the utility range [0,1] sends each replaced per-prompt contribution to
//! -1/m. The observed statistic is adjusted accordingly; the resampled
//! reference distribution stays untouched, which errs toward
//! non-rejection. Contributions are measured under the witness utility of
//! the observed LP, a certificate-backed decomposition of the statistic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EvaluationTable;
use crate::gsd::DStatistic;
use crate::inference::PairwiseTestResult;
use crate::order::PreferenceSystem;

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("k_max {k_max} exceeds prompt count {m}")]
    KMaxTooLarge { k_max: usize, m: usize },
    #[error("empty curve list")]
    NoCurves,
}

/// p-value as a function of the contaminated prompt count k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationCurve {
    pub candidate: String,
    pub opponent: String,
    /// (k, adjusted statistic, p_k) for k = 0..=k_max.
    pub points: Vec<CurvePoint>,
    /// Largest k with p_k <= alpha; -1 when even k = 0 is not significant.
    pub breakdown: i64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub adjusted_statistic: f64,
    pub p_value: f64,
}

/// Recomputes the p-value of a finished pairwise test under k adversarial
/// prompts, for k = 0..=k_max.
pub fn contamination_curve(
    test: &PairwiseTestResult,
    observed: &DStatistic,
    table: &EvaluationTable,
    system: &PreferenceSystem,
    k_max: usize,
) -> Result<ContaminationCurve, RobustnessError> {
    let m = table.prompt_count();
    if k_max > m {
        return Err(RobustnessError::KMaxTooLarge { k_max, m });
    }
    let ci = table
        .strategy_index(&test.candidate)
        .expect("test built from this table");
    let oi = table
        .strategy_index(&test.opponent)
        .expect("test built from this table");

    // Per-prompt contributions under the witness utility; their sum equals
    // the observed statistic up to solver tolerance.
    let mut contributions: Vec<f64> = (0..m)
        .map(|j| {
            let cn = system.cell_nodes[ci][j];
            let on = system.cell_nodes[oi][j];
            (observed.witness[cn] - observed.witness[on]) / m as f64
        })
        .collect();
    // Replace the largest contributions first: that is the adversary's
    // strongest move. Ties resolve by prompt index for determinism.
    contributions.sort_by(|a, b| b.total_cmp(a));

    let floor = -1.0 / m as f64;
    let mut points = Vec::with_capacity(k_max + 1);
    let mut reduction = 0.0;
    for k in 0..=k_max {
        if k > 0 {
            reduction += contributions[k - 1] - floor;
        }
        // k = 0 reproduces the observed statistic and p-value exactly.
        let adjusted = test.observed - reduction;
        let p = p_against(&test.resampled, adjusted);
        points.push(CurvePoint {
            k,
            adjusted_statistic: adjusted,
            p_value: p,
        });
    }
    debug_assert_eq!(points[0].p_value, test.p_value);

    let breakdown = breakdown_of(&points, test.alpha);
    Ok(ContaminationCurve {
        candidate: test.candidate.clone(),
        opponent: test.opponent.clone(),
        points,
        breakdown,
        alpha: test.alpha,
    })
}

fn p_against(resampled: &[f64], statistic: f64) -> f64 {
    let count = resampled.iter().filter(|&&v| v >= statistic).count();
    (1 + count) as f64 / (resampled.len() + 1) as f64
}

fn breakdown_of(points: &[CurvePoint], alpha: f64) -> i64 {
    let mut best: i64 = -1;
    for p in points {
        if p.p_value <= alpha {
            best = p.k as i64;
        } else {
            break;
        }
    }
    best
}

/// Front-level tolerance: every sub-test must stay significant, so the
/// front survives min over curves of their breakdown counts.
pub fn front_breakdown(curves: &[ContaminationCurve]) -> Result<i64, RobustnessError> {
    if curves.is_empty() {
        return Err(RobustnessError::NoCurves);
    }
    Ok(curves.iter().map(|c| c.breakdown).min().expect("nonempty"))
}

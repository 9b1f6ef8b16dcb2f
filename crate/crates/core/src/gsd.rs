//! The empirical D statistic, the empirical GSD relation, and the GSD front.
//!
//! D(S,S') is the minimum over all utility representations u of the
//! empirical expected-utility gap (1/m) sum_j [u(Phi(S,P_j)) - u(Phi(S',P_j))],
//! with u constrained to [0,1] per merged vector node, monotone along the
//! reduced R1 edges, and difference-monotone along the R2 quadruples.
//!
//! The LP over the full constraint pool is solved by lazy constraint
//! generation: solve a relaxation, scan the pool for violated rows, add the
//! worst offenders, repeat. The final assignment is feasible for the whole
//! pool and optimal for a relaxation, hence optimal for the full program;
//! it is returned as a witness and re-verified independently.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EvaluationTable;
use crate::lp::{solve_min, Constraint, LinearProgram, Status};
use crate::order::PreferenceSystem;

#[derive(Debug, Error)]
pub enum GsdError {
    #[error("unknown strategy id {0:?}")]
    UnknownStrategy(String),
    #[error("D-statistic LP reported {0:?}; the constant utility should always be feasible")]
    SolverContract(String),
}

/// Tolerance on the "D = 0" dominance decision.
pub const DEFAULT_DOMINANCE_TOL: f64 = 1e-8;

/// Knobs shared by front computation and testing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GsdConfig {
    /// Candidate budget for materializing R2.
    pub r2_budget: Option<usize>,
    /// Tolerance band for weak-dominance decisions.
    pub dominance_tol: f64,
}

impl Default for GsdConfig {
    fn default() -> Self {
        GsdConfig {
            r2_budget: None,
            dominance_tol: DEFAULT_DOMINANCE_TOL,
        }
    }
}

/// Sparse constraint row over utility nodes: sum coef_k * u[idx_k] >= 0.
#[derive(Debug, Clone)]
struct Row {
    idx: Vec<u32>,
    coef: Vec<f64>,
}

impl Row {
    #[inline]
    fn value(&self, u: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.coef)
            .map(|(&i, &c)| c * u[i as usize])
            .sum()
    }
}

/// Reusable LP context for one preference system: the deduplicated,
/// zero-free constraint pool. Only objectives change across comparisons
/// and resamples.
#[derive(Debug)]
pub struct DContext {
    node_count: usize,
    rows: Vec<Row>,
}

/// Builds one sparse row from index/coefficient pairs, combining repeats.
fn canonical_row(terms: &[(u32, f64)]) -> Option<(Vec<u32>, Vec<f64>)> {
    let mut sorted = terms.to_vec();
    sorted.sort_by_key(|&(i, _)| i);
    let mut idx = Vec::new();
    let mut coef = Vec::new();
    for (i, c) in sorted {
        if let Some(last) = idx.last() {
            if *last == i {
                *coef.last_mut().unwrap() += c;
                continue;
            }
        }
        idx.push(i);
        coef.push(c);
    }
    let keep: Vec<(u32, f64)> = idx
        .into_iter()
        .zip(coef)
        .filter(|&(_, c)| c != 0.0)
        .collect();
    if keep.is_empty() {
        None
    } else {
        Some(keep.into_iter().unzip())
    }
}

impl DContext {
    pub fn new(system: &PreferenceSystem) -> DContext {
        let mut rows: Vec<Row> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut push = |terms: &[(u32, f64)]| {
            if let Some((idx, coef)) = canonical_row(terms) {
                let key: Vec<(u32, i64)> = idx
                    .iter()
                    .zip(&coef)
                    .map(|(&i, &c)| (i, c as i64))
                    .collect();
                if seen.insert(key) {
                    rows.push(Row { idx, coef });
                }
            }
        };
        // Monotonicity over the full strict relation, not just covering
        // edges: the feasible set is identical (closure rows are implied),
        // but a violated long-range pair then enters the working set as one
        // direct row instead of one chain edge per generation round.
        for &(x, y) in &system.r1 {
            if x != y {
                push(&[(x, 1.0), (y, -1.0)]);
            }
        }
        for &((r, t), (v, w)) in &system.r2 {
            push(&[(r, 1.0), (t, -1.0), (v, -1.0), (w, 1.0)]);
        }
        DContext {
            node_count: system.node_count(),
            rows,
        }
    }

    pub fn constraint_count(&self) -> usize {
        self.rows.len()
    }

    /// Minimizes `objective . u` over the utility representation set.
    ///
    /// Deterministic: the relaxation grows by pool order among the most
    /// violated rows, and the inner simplex is deterministic.
    pub fn minimize(&self, objective: &[f64]) -> (f64, Vec<f64>) {
        let debug = std::env::var_os("GSD_DEBUG_LP").is_some();
        assert_eq!(objective.len(), self.node_count);
        let mut working: Vec<usize> = Vec::new();
        let mut in_working = vec![false; self.rows.len()];
        let mut round = 0usize;
        // Rows violated at the box optimum u_j = [c_j < 0] are cheap to
        // predict, but scanning after the first solve is simpler and exact.
        loop {
            let lp = LinearProgram {
                var_count: self.node_count,
                objective: objective.to_vec(),
                constraints: working
                    .iter()
                    .map(|&r| {
                        let row = &self.rows[r];
                        let mut coeffs = vec![0.0; self.node_count];
                        for (&i, &c) in row.idx.iter().zip(&row.coef) {
                            coeffs[i as usize] = c;
                        }
                        Constraint { coeffs, rhs: 0.0 }
                    })
                    .collect(),
                bounds: vec![(0.0, 1.0); self.node_count],
            };
            let t0 = std::time::Instant::now();
            let sol = solve_min(&lp);
            if debug {
                round += 1;
                eprintln!(
                    "  round {round}: {} rows, value {:.6}, {:.3}s",
                    working.len(),
                    sol.value,
                    t0.elapsed().as_secs_f64()
                );
            }
            if sol.status != Status::Optimal {
                // The constant utility is always feasible; anything else is
                // an internal error surfaced loudly.
                panic!("D-statistic relaxation reported {:?}", sol.status);
            }

            // Collect violated pool rows, worst first, index-ordered on ties.
            let mut violated: Vec<(f64, usize)> = self
                .rows
                .iter()
                .enumerate()
                .filter(|(r, _)| !in_working[*r])
                .filter_map(|(r, row)| {
                    let v = row.value(&sol.assignment);
                    if v < -1e-10 {
                        Some((v, r))
                    } else {
                        None
                    }
                })
                .collect();
            if violated.is_empty() {
                return (sol.value, sol.assignment);
            }
            violated.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, r) in violated.iter().take(256) {
                working.push(r);
                in_working[r] = true;
            }
        }
    }
}

/// One directed comparison: the statistic value and its witness utility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DStatistic {
    pub candidate: String,
    pub opponent: String,
    pub value: f64,
    /// A minimizing utility assignment over the system's nodes.
    pub witness: Vec<f64>,
}

/// Builds the empirical objective for D(candidate, opponent).
pub fn d_objective(
    system: &PreferenceSystem,
    candidate: usize,
    opponent: usize,
) -> Vec<f64> {
    let m = system.cell_nodes[candidate].len() as f64;
    let mut objective = vec![0.0; system.node_count()];
    for (cn, on) in system.cell_nodes[candidate]
        .iter()
        .zip(&system.cell_nodes[opponent])
    {
        objective[*cn] += 1.0 / m;
        objective[*on] -= 1.0 / m;
    }
    objective
}

/// The empirical D statistic for an ordered strategy pair under one shared
/// preference system.
pub fn compute_d(
    table: &EvaluationTable,
    system: &PreferenceSystem,
    context: &DContext,
    candidate: &str,
    opponent: &str,
) -> Result<DStatistic, GsdError> {
    let ci = table
        .strategy_index(candidate)
        .ok_or_else(|| GsdError::UnknownStrategy(candidate.to_string()))?;
    let oi = table
        .strategy_index(opponent)
        .ok_or_else(|| GsdError::UnknownStrategy(opponent.to_string()))?;
    let objective = d_objective(system, ci, oi);
    let (value, witness) = context.minimize(&objective);
    Ok(DStatistic {
        candidate: candidate.to_string(),
        opponent: opponent.to_string(),
        value,
        witness,
    })
}

/// Weak empirical GSD: D(S,S') >= -tol.
pub fn gsd_weak(d: &DStatistic, tol: f64) -> bool {
    d.value >= -tol
}

/// Strict empirical GSD: forward dominance without backward dominance.
pub fn gsd_strict(d_fwd: &DStatistic, d_rev: &DStatistic, tol: f64) -> bool {
    gsd_weak(d_fwd, tol) && !gsd_weak(d_rev, tol)
}

/// One entry of the dominance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDominance {
    pub candidate: String,
    pub opponent: String,
    pub d: f64,
    pub weak: bool,
    pub strict: bool,
}

/// The empirical GSD front with the full dominance matrix behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontResult {
    pub front: Vec<String>,
    pub dominance_matrix: Vec<PairDominance>,
}

/// Computes all ordered-pair D values under one shared preference system
/// and returns the strategies not strictly dominated by any other.
pub fn gsd_front(table: &EvaluationTable, config: &GsdConfig) -> FrontResult {
    let system = PreferenceSystem::from_table(table, config.r2_budget);
    let context = DContext::new(&system);
    gsd_front_with(table, &system, &context, config)
}

/// Same as [`gsd_front`] but reusing an existing system and LP context.
pub fn gsd_front_with(
    table: &EvaluationTable,
    system: &PreferenceSystem,
    context: &DContext,
    config: &GsdConfig,
) -> FrontResult {
    let k = table.strategies.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let objective = d_objective(system, i, j);
            context.minimize(&objective).0
        })
        .collect();
    let mut d = vec![vec![0.0f64; k]; k];
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        d[i][j] = v;
    }

    let tol = config.dominance_tol;
    let weak = |i: usize, j: usize| d[i][j] >= -tol;
    let mut matrix = Vec::with_capacity(k * (k - 1));
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            matrix.push(PairDominance {
                candidate: table.strategies[i].clone(),
                opponent: table.strategies[j].clone(),
                d: d[i][j],
                weak: weak(i, j),
                strict: weak(i, j) && !weak(j, i),
            });
        }
    }
    let front: Vec<String> = (0..k)
        .filter(|&i| !(0..k).any(|j| j != i && weak(j, i) && !weak(i, j)))
        .map(|i| table.strategies[i].clone())
        .collect();
    debug_assert!(!front.is_empty(), "strict GSD always leaves maximal elements");
    FrontResult {
        front,
        dominance_matrix: matrix,
    }
}

/// Re-evaluates a D statistic directly from its witness: objective by
/// summation plus the worst constraint violation. Returns (objective, violation).
pub fn verify_witness(
    system: &PreferenceSystem,
    context: &DContext,
    candidate: usize,
    opponent: usize,
    d: &DStatistic,
) -> (f64, f64) {
    let objective = d_objective(system, candidate, opponent);
    let value: f64 = objective
        .iter()
        .zip(&d.witness)
        .map(|(c, u)| c * u)
        .sum();
    let mut violation = 0.0f64;
    for row in &context.rows {
        violation = violation.max(-row.value(&d.witness));
    }
    for &u in &d.witness {
        violation = violation.max(-u).max(u - 1.0);
    }
    (value, violation)
}

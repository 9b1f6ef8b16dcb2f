//! Minimal exact-contract linear programming: minimize c·x subject to
//! a·x >= rhs rows and per-variable bounds.
//!
//! Dense two-phase simplex on bounded variables. Anti-cycling: Dantzig
//! pricing normally, switching to Bland's rule while a run of degenerate
//! pivots stalls progress, which restores the termination guarantee.
//! Every optimal solution doubles as a certificate: the assignment can be
//! re-verified against all constraints and the objective independently of
//! the solver internals.

use std::fmt;

/// Feasibility and optimality tolerance used throughout.
pub const DEFAULT_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 30;

/// One row: coeffs · x >= rhs.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// min objective · x  s.t.  constraints, bounds[j].0 <= x_j <= bounds[j].1.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub var_count: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub value: f64,
    pub assignment: Vec<f64>,
}

impl LinearProgram {
    /// Structural invariants: vector lengths, finite coefficients, lo <= hi.
    pub fn check(&self) -> Result<(), String> {
        if self.objective.len() != self.var_count {
            return Err("objective length != var_count".into());
        }
        if self.bounds.len() != self.var_count {
            return Err("bounds length != var_count".into());
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err("non-finite objective coefficient".into());
        }
        for (lo, hi) in &self.bounds {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(format!("invalid bound [{lo}, {hi}]"));
            }
        }
        for (i, con) in self.constraints.iter().enumerate() {
            if con.coeffs.len() != self.var_count {
                return Err(format!("constraint {i} has wrong arity"));
            }
            if con.coeffs.iter().any(|c| !c.is_finite()) || !con.rhs.is_finite() {
                return Err(format!("constraint {i} has non-finite data"));
            }
        }
        Ok(())
    }

    /// Largest violation of bounds and constraints at `x` (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            worst = worst.max(lo - x[j]).max(x[j] - hi);
        }
        for con in &self.constraints {
            let lhs: f64 = con.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(con.rhs - lhs);
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

impl fmt::Display for LinearProgram {
    /// Plain-text LP listing, for debugging dumps.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "min")?;
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write!(f, " {c:+}*x{j}")?;
            }
        }
        writeln!(f)?;
        for con in &self.constraints {
            write!(f, "  s.t.")?;
            for (j, a) in con.coeffs.iter().enumerate() {
                if *a != 0.0 {
                    write!(f, " {a:+}*x{j}")?;
                }
            }
            writeln!(f, " >= {}", con.rhs)?;
        }
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            writeln!(f, "  {lo} <= x{j} <= {hi}")?;
        }
        Ok(())
    }
}

/// Verifies a solution against the program: feasibility within `tol` and
/// objective agreement within `tol`. Returns the worst discrepancy found.
pub fn verify_solution(lp: &LinearProgram, sol: &Solution, tol: f64) -> Result<(), String> {
    if sol.status != Status::Optimal {
        return Ok(());
    }
    if sol.assignment.len() != lp.var_count {
        return Err("assignment length mismatch".into());
    }
    let viol = lp.violation(&sol.assignment);
    if viol > tol {
        return Err(format!("constraint violation {viol} exceeds {tol}"));
    }
    let gap = (lp.objective_at(&sol.assignment) - sol.value).abs();
    if gap > tol {
        return Err(format!("objective mismatch {gap} exceeds {tol}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

struct Simplex {
    rows: usize,
    cols: usize,
    art_start: usize,
    tab: Vec<Vec<f64>>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    vstat: Vec<VarStatus>,
    upper: Vec<f64>,
    zrow: Vec<f64>,
    stalled: usize,
    bland: bool,
}

/// Global minimum of the program; infeasible/unbounded reported via status.
pub fn solve_min(lp: &LinearProgram) -> Solution {
    debug_assert!(lp.check().is_ok(), "{:?}", lp.check());
    if lp.bounds.iter().any(|(lo, hi)| lo > hi) {
        return Solution {
            status: Status::Infeasible,
            value: f64::NAN,
            assignment: vec![],
        };
    }

    let n = lp.var_count;
    let m = lp.constraints.len();

    // Shift x = lo + y so every structural variable has lower bound 0.
    let lows: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    let ups: Vec<f64> = lp.bounds.iter().map(|b| b.1 - b.0).collect();
    let shifted_rhs: Vec<f64> = lp
        .constraints
        .iter()
        .map(|c| c.rhs - c.coeffs.iter().zip(&lows).map(|(a, l)| a * l).sum::<f64>())
        .collect();

    let art_rows: Vec<usize> = (0..m).filter(|&i| shifted_rhs[i] > 0.0).collect();
    let cols = n + m + art_rows.len();
    let mut tab = vec![vec![0.0; cols]; m];
    let mut xb = vec![0.0; m];
    let mut basis = vec![0usize; m];
    let mut vstat = vec![VarStatus::AtLower; cols];
    let mut upper = vec![f64::INFINITY; cols];
    upper[..n].copy_from_slice(&ups);

    let mut next_art = n + m;
    for i in 0..m {
        let b = shifted_rhs[i];
        if b > 0.0 {
            // A y - s + a = b, artificial basic at b.
            for j in 0..n {
                tab[i][j] = lp.constraints[i].coeffs[j];
            }
            tab[i][n + i] = -1.0;
            tab[i][next_art] = 1.0;
            basis[i] = next_art;
            vstat[next_art] = VarStatus::Basic;
            xb[i] = b;
            next_art += 1;
        } else {
            // Negated row: (-A) y + s = -b >= 0, surplus basic.
            for j in 0..n {
                tab[i][j] = -lp.constraints[i].coeffs[j];
            }
            tab[i][n + i] = 1.0;
            basis[i] = n + i;
            vstat[n + i] = VarStatus::Basic;
            xb[i] = -b;
        }
    }

    let mut sx = Simplex {
        rows: m,
        cols,
        art_start: n + m,
        tab,
        xb,
        basis,
        vstat,
        upper,
        zrow: vec![0.0; cols],
        stalled: 0,
        bland: false,
    };

    // Phase 1: minimize the sum of artificials.
    if !art_rows.is_empty() {
        let mut cost = vec![0.0; cols];
        for j in sx.art_start..cols {
            cost[j] = 1.0;
        }
        sx.load_costs(&cost);
        if !sx.iterate(true) {
            return Solution {
                status: Status::Infeasible,
                value: f64::NAN,
                assignment: vec![],
            };
        }
        let infeas: f64 = (0..sx.rows)
            .filter(|&i| sx.basis[i] >= sx.art_start)
            .map(|i| sx.xb[i])
            .sum();
        if infeas > 1e-8 {
            return Solution {
                status: Status::Infeasible,
                value: f64::NAN,
                assignment: vec![],
            };
        }
        sx.expel_artificials();
    }

    // Phase 2 with the real objective.
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    sx.load_costs(&cost);
    if !sx.iterate(false) {
        return Solution {
            status: Status::Unbounded,
            value: f64::NEG_INFINITY,
            assignment: vec![],
        };
    }

    let mut assignment = vec![0.0; n];
    for j in 0..n {
        let y = match sx.vstat[j] {
            VarStatus::AtLower => 0.0,
            VarStatus::AtUpper => ups[j],
            VarStatus::Basic => {
                let row = sx.basis.iter().position(|&b| b == j).expect("basic var has a row");
                sx.xb[row]
            }
        };
        // Snap solver noise back into the box.
        assignment[j] = (lows[j] + y).clamp(lp.bounds[j].0, lp.bounds[j].1);
    }
    let value = lp.objective_at(&assignment);
    Solution {
        status: Status::Optimal,
        value,
        assignment,
    }
}

impl Simplex {
    fn load_costs(&mut self, cost: &[f64]) {
        self.zrow.copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.cols {
                    self.zrow[j] -= cb * self.tab[i][j];
                }
            }
        }
        self.stalled = 0;
        self.bland = false;
    }

    /// Runs pivots to optimality. Returns false when unbounded (or, in
    /// phase 1, when no finite step exists, which only numerics can cause).
    fn iterate(&mut self, phase_one: bool) -> bool {
        let max_iters = 50_000 + 500 * (self.rows + self.cols);
        for _ in 0..max_iters {
            let Some((enter, dir)) = self.choose_entering(phase_one) else {
                return true; // optimal
            };
            match self.ratio_test(enter, dir) {
                Step::Unbounded => return false,
                Step::Flip(t) => {
                    self.apply_flip(enter, dir, t);
                    self.note_progress(t);
                }
                Step::Pivot(row, t) => {
                    self.apply_pivot(enter, dir, row, t);
                    self.note_progress(t);
                }
            }
        }
        panic!("simplex exceeded iteration cap; anti-cycling rule failed");
    }

    fn note_progress(&mut self, t: f64) {
        // Micro-steps count as stalls: long runs of vanishing progress are
        // where cycling lives, and Bland's rule must stay engaged there.
        if t > 1e-9 {
            self.stalled = 0;
            self.bland = false;
        } else {
            self.stalled += 1;
            if self.stalled > STALL_LIMIT {
                self.bland = true;
            }
        }
    }

    /// Entering variable and its move direction (+1 from lower, -1 from upper).
    fn choose_entering(&self, phase_one: bool) -> Option<(usize, f64)> {
        let limit = if phase_one { self.cols } else { self.art_start };
        let mut best: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for j in 0..limit {
            if self.upper[j] <= 0.0 {
                continue; // fixed variable
            }
            let (dir, score) = match self.vstat[j] {
                VarStatus::Basic => continue,
                VarStatus::AtLower => (1.0, self.zrow[j]),
                VarStatus::AtUpper => (-1.0, -self.zrow[j]),
            };
            if score < -PIVOT_TOL {
                if self.bland {
                    return Some((j, dir));
                }
                match best {
                    Some((_, _, s)) if s <= score => {}
                    _ => best = Some((j, dir, score)),
                }
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, enter: usize, dir: f64) -> Step {
        let mut t_min = self.upper[enter];
        let mut ties: Vec<Candidate> = vec![Candidate::SelfBound];
        for i in 0..self.rows {
            let delta = dir * self.tab[i][enter];
            let (t, _hits_lower) = if delta > PIVOT_TOL {
                ((self.xb[i].max(0.0)) / delta, true)
            } else if delta < -PIVOT_TOL {
                let ub = self.upper[self.basis[i]];
                if !ub.is_finite() {
                    continue;
                }
                (((ub - self.xb[i]).max(0.0)) / (-delta), false)
            } else {
                continue;
            };
            if t < t_min - 1e-12 {
                t_min = t;
                ties = vec![Candidate::Row(i)];
            } else if t <= t_min + 1e-12 {
                ties.push(Candidate::Row(i));
            }
        }
        if !t_min.is_finite() {
            return Step::Unbounded;
        }
        // Drop the self-bound candidate when it is not actually tied.
        let ties: Vec<Candidate> = ties
            .into_iter()
            .filter(|c| match c {
                Candidate::SelfBound => self.upper[enter] <= t_min + 1e-12,
                Candidate::Row(_) => true,
            })
            .collect();

        let chosen = if self.bland {
            // Smallest variable index among tied candidates.
            ties.iter()
                .min_by_key(|c| match c {
                    Candidate::SelfBound => enter,
                    Candidate::Row(i) => self.basis[*i],
                })
                .copied()
                .expect("at least one candidate")
        } else {
            // Prefer a bound flip; otherwise the numerically largest pivot.
            if ties.contains(&Candidate::SelfBound) {
                Candidate::SelfBound
            } else {
                ties.iter()
                    .copied()
                    .max_by(|a, b| {
                        let pa = match a {
                            Candidate::Row(i) => self.tab[*i][enter].abs(),
                            Candidate::SelfBound => f64::MAX,
                        };
                        let pb = match b {
                            Candidate::Row(i) => self.tab[*i][enter].abs(),
                            Candidate::SelfBound => f64::MAX,
                        };
                        pa.total_cmp(&pb)
                    })
                    .expect("at least one candidate")
            }
        };
        match chosen {
            Candidate::SelfBound => Step::Flip(t_min.max(0.0)),
            Candidate::Row(i) => Step::Pivot(i, t_min.max(0.0)),
        }
    }

    fn apply_flip(&mut self, enter: usize, dir: f64, _t: f64) {
        let ub = self.upper[enter];
        for i in 0..self.rows {
            self.xb[i] -= dir * ub * self.tab[i][enter];
        }
        self.vstat[enter] = match self.vstat[enter] {
            VarStatus::AtLower => VarStatus::AtUpper,
            VarStatus::AtUpper => VarStatus::AtLower,
            VarStatus::Basic => unreachable!(),
        };
    }

    fn apply_pivot(&mut self, enter: usize, dir: f64, row: usize, t: f64) {
        let entering_value = match self.vstat[enter] {
            VarStatus::AtLower => dir * t,
            VarStatus::AtUpper => self.upper[enter] + dir * t,
            VarStatus::Basic => unreachable!(),
        };
        let delta_r = dir * self.tab[row][enter];
        for i in 0..self.rows {
            if i != row {
                self.xb[i] -= dir * t * self.tab[i][enter];
            }
        }
        let leaving = self.basis[row];
        self.vstat[leaving] = if delta_r > 0.0 {
            VarStatus::AtLower
        } else {
            VarStatus::AtUpper
        };

        let piv = self.tab[row][enter];
        let inv = 1.0 / piv;
        for j in 0..self.cols {
            self.tab[row][j] *= inv;
        }
        self.tab[row][enter] = 1.0;
        for i in 0..self.rows {
            if i == row {
                continue;
            }
            let f = self.tab[i][enter];
            if f != 0.0 {
                for j in 0..self.cols {
                    self.tab[i][j] -= f * self.tab[row][j];
                }
                self.tab[i][enter] = 0.0;
            }
        }
        let zf = self.zrow[enter];
        if zf != 0.0 {
            for j in 0..self.cols {
                self.zrow[j] -= zf * self.tab[row][j];
            }
            self.zrow[enter] = 0.0;
        }

        self.basis[row] = enter;
        self.vstat[enter] = VarStatus::Basic;
        self.xb[row] = entering_value;
    }

    /// After phase 1, pivot every basic artificial out, dropping rows whose
    /// non-artificial coefficients all vanished (redundant constraints).
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] < self.art_start {
                i += 1;
                continue;
            }
            let pivot_col = (0..self.art_start)
                .filter(|&j| self.vstat[j] != VarStatus::Basic)
                .find(|&j| self.tab[i][j].abs() > PIVOT_TOL);
            match pivot_col {
                Some(j) => {
                    // Degenerate pivot: the artificial sits at zero.
                    let art = self.basis[i];
                    let dir = if self.vstat[j] == VarStatus::AtUpper { -1.0 } else { 1.0 };
                    self.apply_pivot(j, dir, i, 0.0);
                    self.vstat[art] = VarStatus::AtLower;
                    i += 1;
                }
                None => {
                    self.drop_row(i);
                }
            }
        }
        // Artificials stay nonbasic at zero and are never selected again.
        for j in self.art_start..self.cols {
            if self.vstat[j] != VarStatus::Basic {
                self.upper[j] = 0.0;
            }
        }
    }

    fn drop_row(&mut self, row: usize) {
        let leaving = self.basis[row];
        self.vstat[leaving] = VarStatus::AtLower;
        self.upper[leaving] = 0.0;
        self.tab.swap_remove(row);
        self.xb.swap_remove(row);
        self.basis.swap_remove(row);
        self.rows -= 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Candidate {
    SelfBound,
    Row(usize),
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot(usize, f64),
}

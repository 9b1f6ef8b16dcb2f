//! The partially cardinal order structure spanned by the observed quality
//! vectors: componentwise dominance (R1), intensity-of-preference
//! comparisons on the cardinal coordinates bracketed by the ordinal ones
//! (R2), and the transitive reduction that feeds the utility LP.
//!
//! Duplicate quality vectors are merged into a single node: utility is a
//! function of the vector, and merging shrinks the LP.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::data::{EvaluationTable, QualityVector, ScaleSpec};

/// Default cap on candidate quadruples examined while materializing R2.
pub const DEFAULT_R2_BUDGET: usize = 2_000_000;

/// Dense bitset over node indices.
#[derive(Debug, Clone)]
pub struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        BitMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] & (1 << (j % 64)) != 0
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// How the R2 candidate set was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Mode {
    /// All ordered pairs of R1 pairs were examined.
    Full,
    /// Candidates restricted to ordered pairs of covering (reduced) edges.
    Covering {
        /// True when even the covering-pair enumeration hit the budget.
        truncated: bool,
    },
}

/// The order structure over deduplicated quality vectors, plus the
/// (strategy, prompt) -> node index map binding it to its table.
#[derive(Debug, Clone)]
pub struct PreferenceSystem {
    /// Distinct quality vectors, indexed by node id.
    pub vectors: Vec<QualityVector>,
    /// R1 as ordered index pairs, including reflexive pairs.
    pub r1: Vec<(u32, u32)>,
    /// Transitive reduction of R1's strict part.
    pub r1_reduced: Vec<(u32, u32)>,
    /// R2 quadruples ((r,t),(v,w)) of node indices.
    pub r2: Vec<((u32, u32), (u32, u32))>,
    pub scale: ScaleSpec,
    /// cell_nodes[strategy][prompt] = node index of that cell's vector.
    pub cell_nodes: Vec<Vec<usize>>,
    /// Strict R1 membership matrix (derived, kept for fast queries).
    pub strict: BitMatrix,
    pub r2_mode: R2Mode,
}

/// Exact componentwise-dominance relation over the vectors, reflexive pairs
/// included.
pub fn build_r1(vectors: &[QualityVector]) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for (i, x) in vectors.iter().enumerate() {
        for (j, y) in vectors.iter().enumerate() {
            if x.dominates(y) {
                pairs.push((i as u32, j as u32));
            }
        }
    }
    pairs
}

fn strict_matrix(vectors: &[QualityVector], r1: &[(u32, u32)]) -> BitMatrix {
    let mut m = BitMatrix::new(vectors.len());
    for &(i, j) in r1 {
        if i != j {
            m.set(i as usize, j as usize);
        }
    }
    m
}

/// Transitive reduction of the strict part of R1.
///
/// On deduplicated vectors mutual dominance implies equality, so the strict
/// part is a partial order and the reduction is the unique covering-edge
/// set: (x,y) is kept iff no z has x > z > y.
pub fn transitive_reduction(vectors: &[QualityVector], r1: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let strict = strict_matrix(vectors, r1);
    let n = strict.len();
    // incoming[j] = set of i with i > j, as bitset rows of the transpose.
    let mut transpose = BitMatrix::new(n);
    for &(i, j) in r1 {
        if i != j {
            transpose.set(j as usize, i as usize);
        }
    }
    // (i,j) is redundant iff some z has strict(i,z) and strict(z,j), i.e.
    // the successor set of i meets the predecessor set of j.
    let mut reduced = Vec::new();
    for &(i, j) in r1 {
        if i == j {
            continue;
        }
        let covering = strict
            .row(i as usize)
            .iter()
            .zip(transpose.row(j as usize))
            .all(|(a, b)| a & b == 0);
        if covering {
            reduced.push((i, j));
        }
    }
    reduced
}

/// Tests the R2 definition on one candidate quadruple ((t,u),(v,w)).
#[inline]
fn r2_holds(
    vectors: &[QualityVector],
    z: usize,
    (t, u): (u32, u32),
    (v, w): (u32, u32),
) -> bool {
    let tv = &vectors[t as usize].values;
    let uv = &vectors[u as usize].values;
    let vv = &vectors[v as usize].values;
    let wv = &vectors[w as usize].values;
    for i in 0..z {
        if tv[i] - uv[i] < vv[i] - wv[i] {
            return false;
        }
    }
    for j in z..tv.len() {
        if !(tv[j] >= vv[j] && vv[j] >= wv[j] && wv[j] >= uv[j]) {
            return false;
        }
    }
    true
}

/// Materializes R2 over candidate pairs drawn from R1.
///
/// Full enumeration over all ordered pairs of R1 pairs when
/// |strict(R1)|^2 fits the budget; otherwise candidates are restricted to
/// ordered pairs of covering edges, in lexicographic edge order, truncated
/// at the budget. Dropping candidates only enlarges the utility set, so a
/// budgeted run can only weaken dominance claims, never fabricate them.
pub fn build_r2(
    vectors: &[QualityVector],
    r1: &[(u32, u32)],
    r1_reduced: &[(u32, u32)],
    scale: &ScaleSpec,
    budget: Option<usize>,
) -> (Vec<((u32, u32), (u32, u32))>, R2Mode) {
    let budget = budget.unwrap_or(DEFAULT_R2_BUDGET);
    let z = scale.cardinal_count();
    let strict_count = r1.iter().filter(|(i, j)| i != j).count();

    let full = strict_count.saturating_mul(strict_count) <= budget;
    let candidates: &[(u32, u32)] = if full { r1 } else { r1_reduced };

    let mut out = Vec::new();
    let mut examined: usize = 0;
    let mut truncated = false;
    'outer: for &(t, u) in candidates {
        for &(v, w) in candidates {
            if !full && examined >= budget {
                truncated = true;
                break 'outer;
            }
            examined += 1;
            if r2_holds(vectors, z, (t, u), (v, w)) {
                out.push(((t, u), (v, w)));
            }
        }
    }
    let mode = if full {
        R2Mode::Full
    } else {
        R2Mode::Covering { truncated }
    };
    (out, mode)
}

impl PreferenceSystem {
    /// Builds the system over all observed vectors of a table: one global
    /// structure shared by every pairwise comparison.
    pub fn from_table(table: &EvaluationTable, r2_budget: Option<usize>) -> PreferenceSystem {
        let mut vectors: Vec<QualityVector> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut cell_nodes = vec![vec![0usize; table.prompts.len()]; table.strategies.len()];
        for (si, rows) in table.cells.iter().enumerate() {
            for (pi, v) in rows.iter().enumerate() {
                let key = v.bits_key();
                let node = *index.entry(key).or_insert_with(|| {
                    vectors.push(v.clone());
                    vectors.len() - 1
                });
                cell_nodes[si][pi] = node;
            }
        }

        let r1 = build_r1(&vectors);
        let r1_reduced = transitive_reduction(&vectors, &r1);
        let (r2, r2_mode) = build_r2(&vectors, &r1, &r1_reduced, &table.scale, r2_budget);
        let strict = strict_matrix(&vectors, &r1);
        PreferenceSystem {
            vectors,
            r1,
            r1_reduced,
            r2,
            scale: table.scale.clone(),
            cell_nodes,
            strict,
            r2_mode,
        }
    }

    pub fn node_count(&self) -> usize {
        self.vectors.len()
    }

    /// The coordinate-mean utility, a feasibility witness for the whole
    /// constraint system.
    pub fn mean_utility(&self) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|v| v.values.iter().sum::<f64>() / v.values.len() as f64)
            .collect()
    }

    /// Largest violation of the R1/R2 constraints by a utility assignment.
    pub fn utility_violation(&self, u: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for &(x, y) in &self.r1 {
            worst = worst.max(u[y as usize] - u[x as usize]);
        }
        for &((r, t), (v, w)) in &self.r2 {
            worst = worst.max(u[v as usize] - u[w as usize] - (u[r as usize] - u[t as usize]));
        }
        worst
    }

    /// Checks the structure's own invariants; returns the first failure.
    pub fn check(&self) -> Result<(), String> {
        let n = self.node_count();
        // Reflexivity of r1.
        for i in 0..n {
            if !self.r1.contains(&(i as u32, i as u32)) {
                return Err(format!("r1 missing reflexive pair ({i},{i})"));
            }
        }
        // Transitivity via the strict matrix (r1 = strict + diagonal here).
        for &(i, j) in &self.r1 {
            for k in 0..n as u32 {
                let ij = i == j || self.strict.get(i as usize, j as usize);
                let jk = j == k || self.strict.get(j as usize, k as usize);
                let ik = i == k || self.strict.get(i as usize, k as usize);
                if ij && jk && !ik {
                    return Err(format!("r1 not transitive at ({i},{j},{k})"));
                }
            }
        }
        // Every r2 component pair lies in r1.
        for &((r, t), (v, w)) in &self.r2 {
            let in_r1 = |a: u32, b: u32| a == b || self.strict.get(a as usize, b as usize);
            if !in_r1(r, t) || !in_r1(v, w) {
                return Err("r2 component pair not in r1".into());
            }
        }
        // The coordinate mean must satisfy every constraint.
        let mean = self.mean_utility();
        let viol = self.utility_violation(&mean);
        if viol > 1e-12 {
            return Err(format!("mean utility violates constraints by {viol}"));
        }
        Ok(())
    }

    /// Writes r1/r2 as edge-list text files for debugging.
    pub fn dump_relations(&self, dir: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(dir.join("r1.txt"))?;
        for &(i, j) in &self.r1 {
            writeln!(f, "{i} {j}")?;
        }
        let mut f = std::fs::File::create(dir.join("r1_reduced.txt"))?;
        for &(i, j) in &self.r1_reduced {
            writeln!(f, "{i} {j}")?;
        }
        let mut f = std::fs::File::create(dir.join("r2.txt"))?;
        for &((r, t), (v, w)) in &self.r2 {
            writeln!(f, "{r} {t} {v} {w}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MetricSpec, Normalization, Scale};
    use rand::Rng;

    fn qv(values: &[f64]) -> QualityVector {
        QualityVector::new(values.to_vec())
    }

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

    #[test]
    fn r1_componentwise_cases() {
        let vectors = vec![qv(&[0.5, 0.75, 1.0]), qv(&[0.4, 0.75, 0.5])];
        let r1 = build_r1(&vectors);
        assert!(r1.contains(&(0, 1)));
        assert!(!r1.contains(&(1, 0)));
        assert!(r1.contains(&(0, 0)) && r1.contains(&(1, 1)));

        let vectors = vec![qv(&[0.5, 0.25]), qv(&[0.4, 0.75])];
        let r1 = build_r1(&vectors);
        assert!(!r1.contains(&(0, 1)) && !r1.contains(&(1, 0)));
    }

    #[test]
    fn r2_hand_case_with_one_cardinal_coordinate() {
        // t=(0.9,1.0), u=(0.1,0.0), v=(0.6,0.75), w=(0.4,0.25), z=1:
        // cardinal 0.8 >= 0.2; ordinal 1.0 >= 0.75 >= 0.25 >= 0.0.
        let vectors = vec![
            qv(&[0.9, 1.0]),
            qv(&[0.1, 0.0]),
            qv(&[0.6, 0.75]),
            qv(&[0.4, 0.25]),
        ];
        let scale = scale_with(1, 2);
        let r1 = build_r1(&vectors);
        let red = transitive_reduction(&vectors, &r1);
        let (r2, mode) = build_r2(&vectors, &r1, &red, &scale, None);
        assert_eq!(mode, R2Mode::Full);
        assert!(r2.contains(&((0, 1), (2, 3))));
        // The reversed quadruple fails the cardinal clause: 0.2 >= 0.8 is false.
        assert!(!r2.contains(&((2, 3), (0, 1))));
        // Reflexive-on-r1 membership.
        assert!(r2.contains(&((0, 1), (0, 1))));
        assert!(r2.contains(&((2, 3), (2, 3))));
    }

    #[test]
    fn r2_vacuous_clauses_with_all_cardinal_or_all_ordinal() {
        let vectors = vec![qv(&[1.0, 1.0]), qv(&[0.0, 0.0]), qv(&[0.5, 0.25])];
        let r1 = build_r1(&vectors);
        let red = transitive_reduction(&vectors, &r1);

        // z = n: the ordinal clause is vacuous.
        let (r2_cardinal, _) = build_r2(&vectors, &r1, &red, &scale_with(2, 2), None);
        assert!(r2_cardinal.contains(&((0, 1), (0, 2))));

        // z = 0: the cardinal clause is vacuous; ordinal bracketing decides.
        let (r2_ordinal, _) = build_r2(&vectors, &r1, &red, &scale_with(0, 2), None);
        assert!(r2_ordinal.contains(&((0, 1), (0, 2))));
        assert!(!r2_ordinal.contains(&((0, 2), (0, 1))));
    }

    #[test]
    fn reduction_covers_chains_and_antichains() {
        // Chain a >= b >= c.
        let vectors = vec![qv(&[1.0, 1.0]), qv(&[0.5, 0.5]), qv(&[0.0, 0.0])];
        let r1 = build_r1(&vectors);
        let mut red = transitive_reduction(&vectors, &r1);
        red.sort();
        assert_eq!(red, vec![(0, 1), (1, 2)]);

        // Antichain: nothing to reduce.
        let vectors = vec![qv(&[1.0, 0.0]), qv(&[0.0, 1.0]), qv(&[0.5, 0.6])];
        let r1 = build_r1(&vectors);
        assert!(transitive_reduction(&vectors, &r1).is_empty());
    }

    /// Boolean transitive closure, recomputed from scratch.
    fn closure(n: usize, edges: &[(u32, u32)]) -> Vec<Vec<bool>> {
        let mut reach = vec![vec![false; n]; n];
        for &(i, j) in edges {
            reach[i as usize][j as usize] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    #[test]
    fn closure_of_reduction_recovers_strict_part() {
        let mut rng = crate::rng::derive_rng(41, &[0]);
        for _ in 0..20 {
            let n = 50;
            let vectors: Vec<QualityVector> = (0..n)
                .map(|_| {
                    qv(&[
                        rng.gen_range(0..=4) as f64 / 4.0,
                        rng.gen_range(0..=4) as f64 / 4.0,
                        rng.gen_range(0..=4) as f64 / 4.0,
                    ])
                })
                .collect();
            // Dedup to keep mutual dominance impossible.
            let mut vectors = vectors;
            vectors.sort_by(|a, b| a.values.partial_cmp(&b.values).unwrap());
            vectors.dedup_by(|a, b| a.values == b.values);

            let r1 = build_r1(&vectors);
            let reduced = transitive_reduction(&vectors, &r1);
            let strict: Vec<(u32, u32)> =
                r1.iter().copied().filter(|(i, j)| i != j).collect();
            let from_reduction = closure(vectors.len(), &reduced);
            let from_strict = closure(vectors.len(), &strict);
            assert_eq!(from_reduction, from_strict);
            // The reduction is a subset of the strict part.
            for e in &reduced {
                assert!(strict.contains(e));
            }
        }
    }

    fn random_system(
        rng: &mut rand_chacha::ChaCha8Rng,
        node_count: usize,
        z: usize,
        n: usize,
    ) -> (Vec<QualityVector>, ScaleSpec) {
        let mut vectors: Vec<QualityVector> = Vec::new();
        while vectors.len() < node_count {
            let v = qv(&(0..n)
                .map(|_| rng.gen_range(0..=4) as f64 / 4.0)
                .collect::<Vec<_>>());
            if !vectors.contains(&v) {
                vectors.push(v);
            }
        }
        (vectors, scale_with(z, n))
    }

    #[test]
    fn mean_utility_is_feasible_for_every_constructed_system() {
        let mut rng = crate::rng::derive_rng(42, &[0]);
        for trial in 0..50 {
            let z = trial % 3;
            let (vectors, scale) = random_system(&mut rng, 12, z, 2.max(z));
            let r1 = build_r1(&vectors);
            let red = transitive_reduction(&vectors, &r1);
            let (r2, _) = build_r2(&vectors, &r1, &red, &scale, None);
            let mean: Vec<f64> = vectors
                .iter()
                .map(|v| v.values.iter().sum::<f64>() / v.values.len() as f64)
                .collect();
            for &(x, y) in &r1 {
                assert!(mean[x as usize] >= mean[y as usize] - 1e-12);
            }
            for &((r, t), (v, w)) in &r2 {
                assert!(
                    mean[r as usize] - mean[t as usize]
                        >= mean[v as usize] - mean[w as usize] - 1e-12
                );
            }
        }
    }

    #[test]
    fn budgeted_r2_is_a_subset_of_full_r2() {
        let mut rng = crate::rng::derive_rng(43, &[0]);
        let (vectors, scale) = random_system(&mut rng, 14, 1, 3);
        let r1 = build_r1(&vectors);
        let red = transitive_reduction(&vectors, &r1);
        let (full, mode_full) = build_r2(&vectors, &r1, &red, &scale, None);
        assert_eq!(mode_full, R2Mode::Full);
        for budget in [1, 10, 100, 1000] {
            let (sub, _) = build_r2(&vectors, &r1, &red, &scale, Some(budget));
            for q in &sub {
                assert!(full.contains(q), "budgeted quadruple outside full set");
            }
        }
    }

    #[test]
    fn scale_invariance_of_r1_and_r2() {
        // Strictly increasing maps on ordinal coordinates and positive
        // affine maps on cardinal coordinates leave both relations unchanged
        // as index sets. Transforms are chosen exactly representable.
        let mut rng = crate::rng::derive_rng(44, &[0]);
        for trial in 0..100 {
            let z = trial % 3;
            let n = 3;
            let (vectors, scale) = random_system(&mut rng, 10, z, n);
            let r1 = build_r1(&vectors);
            let red = transitive_reduction(&vectors, &r1);
            let (r2, _) = build_r2(&vectors, &r1, &red, &scale, None);

            let a = [0.5, 2.0, 4.0][rng.gen_range(0..3)];
            let b = [-1.0, 0.5, 2.0][rng.gen_range(0..3)];
            let transformed: Vec<QualityVector> = vectors
                .iter()
                .map(|v| {
                    let vals: Vec<f64> = v
                        .values
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| {
                            if k < z {
                                a * x + b
                            } else {
                                // Strictly increasing on the 0.25 grid.
                                x * x + x
                            }
                        })
                        .collect();
                    QualityVector::new(vals)
                })
                .collect();
            let r1_t = build_r1(&transformed);
            let red_t = transitive_reduction(&transformed, &r1_t);
            let (r2_t, _) = build_r2(&transformed, &r1_t, &red_t, &scale, None);
            assert_eq!(r1, r1_t, "r1 changed under monotone transforms");
            assert_eq!(r2, r2_t, "r2 changed under monotone transforms");
        }
    }

    #[test]
    fn from_table_merges_duplicate_vectors() {
        use crate::data::EvaluationTable;
        let scale = scale_with(1, 2);
        let raw = vec![
            vec![vec![0.5, 0.75], vec![0.5, 0.75]],
            vec![vec![0.5, 0.75], vec![0.25, 0.25]],
        ];
        let table = EvaluationTable::from_raw(
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into()],
            vec![None, None],
            raw,
            scale,
        )
        .unwrap();
        let system = PreferenceSystem::from_table(&table, None);
        assert_eq!(system.node_count(), 2);
        assert_eq!(system.cell_nodes[0][0], system.cell_nodes[0][1]);
        assert_eq!(system.cell_nodes[0][0], system.cell_nodes[1][0]);
        system.check().unwrap();
    }
}

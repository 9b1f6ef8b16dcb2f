//! Synthetic evaluation tables and a Monte Carlo harness for calibrating
//! the size and power of the GSD permutation tests at desk scale.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EvaluationTable, MetricSpec, Normalization, Scale, ScaleSpec};
use crate::gsd::DContext;
use crate::inference::pairwise_test;
use crate::order::PreferenceSystem;
use crate::rng::derive_rng;

/// Cardinal values are drawn from this grid; the induced ties produce
/// duplicate vectors, stressing node merging and keeping R2 enumerable.
pub const CARDINAL_GRID_STEP: f64 = 0.05;

/// Treatment applied to the first strategy of the generated table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShiftEffect {
    /// Added to every cardinal value, clamped into [0,1].
    pub delta: f64,
    /// Probability of bumping each ordinal value one level up.
    pub bump_prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub strategy_count: usize,
    pub prompt_count: usize,
    pub cardinal_count: usize,
    pub ordinal_count: usize,
    pub ordinal_levels: usize,
    /// None generates exchangeable strategies (the null configuration).
    pub effect: Option<ShiftEffect>,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn null_config(strategies: usize, prompts: usize, seed: u64) -> Self {
        SyntheticConfig {
            strategy_count: strategies,
            prompt_count: prompts,
            cardinal_count: 1,
            ordinal_count: 1,
            ordinal_levels: 5,
            effect: None,
            seed,
        }
    }

    fn scale(&self) -> ScaleSpec {
        let mut metrics = Vec::new();
        for i in 0..self.cardinal_count {
            metrics.push(MetricSpec {
                name: format!("c{i}"),
                scale: Scale::Cardinal,
                normalization: Normalization::None,
                ordinal_levels: None,
            });
        }
        for i in 0..self.ordinal_count {
            metrics.push(MetricSpec {
                name: format!("o{i}"),
                scale: Scale::Ordinal,
                normalization: Normalization::None,
                ordinal_levels: Some((1..=self.ordinal_levels).map(|l| l as f64).collect()),
            });
        }
        ScaleSpec { metrics }
    }
}

/// Generates a table deterministically from the config seed.
///
/// Null effect: every strategy draws i.i.d. from the same per-metric law
/// (cardinal uniform on the 0.05 grid, ordinal uniform over levels). Shift
/// effect: the first strategy's cardinal values gain +delta (clamped) and
/// its ordinal levels bump one step up with the configured probability.
pub fn generate_table(config: &SyntheticConfig) -> EvaluationTable {
    let mut rng = derive_rng(config.seed, &[0x9e4]);
    let grid_points = (1.0 / CARDINAL_GRID_STEP).round() as usize; // 20 -> values 0..=20
    let strategies: Vec<String> = (0..config.strategy_count)
        .map(|i| format!("s{}", i + 1))
        .collect();
    let prompts: Vec<String> = (0..config.prompt_count)
        .map(|i| format!("p{}", i + 1))
        .collect();

    let mut cells = vec![vec![Vec::new(); config.prompt_count]; config.strategy_count];
    for p in 0..config.prompt_count {
        for s in 0..config.strategy_count {
            let mut row = Vec::with_capacity(config.cardinal_count + config.ordinal_count);
            for _ in 0..config.cardinal_count {
                let mut v = rng.gen_range(0..=grid_points) as f64 * CARDINAL_GRID_STEP;
                if s == 0 {
                    if let Some(effect) = &config.effect {
                        v = (v + effect.delta).min(1.0);
                    }
                }
                row.push(v);
            }
            for _ in 0..config.ordinal_count {
                let mut level = rng.gen_range(1..=config.ordinal_levels);
                if s == 0 {
                    if let Some(effect) = &config.effect {
                        if rng.gen::<f64>() < effect.bump_prob {
                            level = (level + 1).min(config.ordinal_levels);
                        }
                    }
                }
                row.push(level as f64);
            }
            cells[s][p] = row;
        }
    }

    EvaluationTable::from_raw(
        strategies,
        prompts,
        vec![None; config.prompt_count],
        cells,
        config.scale(),
    )
    .expect("generated table is well formed")
}

/// Outcome of a calibration study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub runs: usize,
    pub resamples: usize,
    pub alpha: f64,
    pub rejection_rate: f64,
    pub mean_runtime_secs: f64,
    /// Per-run (reject, p_value, observed).
    pub per_run: Vec<RunOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub reject: bool,
    pub p_value: f64,
    pub observed: f64,
}

/// Repeats generate -> pairwise test (first strategy vs second), returning
/// the rejection frequency and mean per-run wall time. Runs execute in
/// parallel with per-run derived seeds and are reduced in run order.
pub fn calibration_study(
    config: &SyntheticConfig,
    runs: usize,
    resamples: usize,
    alpha: f64,
) -> CalibrationResult {
    assert!(runs >= 1, "need at least one run");
    assert!(config.strategy_count >= 2, "need two strategies to compare");
    let outcomes: Vec<(RunOutcome, f64)> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let start = std::time::Instant::now();
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(0x5eed).wrapping_mul(0x100000001b3) ^ run as u64;
            let table = generate_table(&cfg);
            let system = PreferenceSystem::from_table(&table, None);
            let context = DContext::new(&system);
            let test = pairwise_test(
                &table,
                &system,
                &context,
                &table.strategies[0],
                &table.strategies[1],
                resamples,
                cfg.seed ^ 0xabcd,
                alpha,
            )
            .expect("valid test setup");
            (
                RunOutcome {
                    run,
                    reject: test.reject,
                    p_value: test.p_value,
                    observed: test.observed,
                },
                start.elapsed().as_secs_f64(),
            )
        })
        .collect();

    let rejection_rate =
        outcomes.iter().filter(|(o, _)| o.reject).count() as f64 / runs as f64;
    let mean_runtime_secs = outcomes.iter().map(|(_, t)| t).sum::<f64>() / runs as f64;
    CalibrationResult {
        runs,
        resamples,
        alpha,
        rejection_rate,
        mean_runtime_secs,
        per_run: outcomes.into_iter().map(|(o, _)| o).collect(),
    }
}

/// The shifted strategy under the given effect, for power studies.
pub fn shifted_strategy(table: &EvaluationTable) -> &str {
    &table.strategies[0]
}

/// Regenerates the raw draws behind [`generate_table`] (same RNG path) and
/// writes them as an evaluation CSV plus the matching scale file: cardinal
/// values on the grid, ordinal values as raw 1-based levels.
pub fn emit_raw_table(config: &SyntheticConfig, dir: &Path) -> std::io::Result<()> {
    let mut rng = derive_rng(config.seed, &[0x9e4]);
    let grid_points = (1.0 / CARDINAL_GRID_STEP).round() as usize;
    let n = config.cardinal_count + config.ordinal_count;
    let mut rows: Vec<Vec<f64>> =
        vec![vec![0.0; n]; config.strategy_count * config.prompt_count];
    for p in 0..config.prompt_count {
        for s in 0..config.strategy_count {
            let row = &mut rows[s * config.prompt_count + p];
            for k in 0..config.cardinal_count {
                let mut v = rng.gen_range(0..=grid_points) as f64 * CARDINAL_GRID_STEP;
                if s == 0 {
                    if let Some(effect) = &config.effect {
                        v = (v + effect.delta).min(1.0);
                    }
                }
                row[k] = v;
            }
            for k in 0..config.ordinal_count {
                let mut level = rng.gen_range(1..=config.ordinal_levels);
                if s == 0 {
                    if let Some(effect) = &config.effect {
                        if rng.gen::<f64>() < effect.bump_prob {
                            level = (level + 1).min(config.ordinal_levels);
                        }
                    }
                }
                row[config.cardinal_count + k] = level as f64;
            }
        }
    }

    std::fs::create_dir_all(dir)?;
    let scale = config.scale();
    let mut csv = String::from("prompt_id,dataset,strategy");
    for m in &scale.metrics {
        csv.push(',');
        csv.push_str(&m.name);
    }
    csv.push('\n');
    for p in 0..config.prompt_count {
        for s in 0..config.strategy_count {
            let row = &rows[s * config.prompt_count + p];
            csv.push_str(&format!("p{},synthetic,s{}", p + 1, s + 1));
            for v in row {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
    }
    std::fs::write(dir.join("evaluation.csv"), csv)?;
    let scale_json = serde_json::to_string_pretty(&scale).expect("scale serializes");
    std::fs::write(dir.join("scales.json"), format!("{scale_json}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let config = SyntheticConfig::null_config(3, 10, 42);
        let a = generate_table(&config);
        let b = generate_table(&config);
        assert_eq!(a.strategies, b.strategies);
        for s in 0..3 {
            for p in 0..10 {
                assert_eq!(a.cell(s, p).values, b.cell(s, p).values);
            }
        }
        let mut other = config.clone();
        other.seed = 43;
        let c = generate_table(&other);
        let same = (0..3).all(|s| (0..10).all(|p| a.cell(s, p).values == c.cell(s, p).values));
        assert!(!same, "different seeds produced identical tables");
    }

    #[test]
    fn null_strategies_share_their_marginals() {
        // Large-sample check: empirical per-metric distributions of the two
        // strategies stay within a small sup-distance.
        let config = SyntheticConfig {
            strategy_count: 2,
            prompt_count: 5000,
            cardinal_count: 1,
            ordinal_count: 1,
            ordinal_levels: 5,
            effect: None,
            seed: 7,
        };
        let table = generate_table(&config);
        for metric in 0..2 {
            let grab = |s: usize| {
                let mut v: Vec<f64> = (0..config.prompt_count)
                    .map(|p| table.cell(s, p).values[metric])
                    .collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let a = grab(0);
            let b = grab(1);
            // Two-sample sup-difference of the empirical distributions,
            // evaluated at the distinct observed values (the data is heavily
            // tied on the grid, so tie groups must be consumed whole).
            let n = a.len() as f64;
            let mut values: Vec<f64> = a.iter().chain(&b).cloned().collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            let cdf = |xs: &[f64], v: f64| xs.partition_point(|&x| x <= v) as f64 / n;
            let sup = values
                .iter()
                .map(|&v| (cdf(&a, v) - cdf(&b, v)).abs())
                .fold(0.0f64, f64::max);
            assert!(sup <= 0.05, "sup-difference {sup} between null strategies");
        }
    }

    #[test]
    fn shift_moves_the_cardinal_mean_by_the_clamped_expectation() {
        // delta = 0.3 on the uniform 0.05 grid: E[min(X + 0.3, 1)] - E[X]
        // = 0.25 exactly (the clamp eats 0.05 on average).
        let config = SyntheticConfig {
            strategy_count: 2,
            prompt_count: 20_000,
            cardinal_count: 1,
            ordinal_count: 1,
            ordinal_levels: 5,
            effect: Some(ShiftEffect {
                delta: 0.3,
                bump_prob: 0.0,
            }),
            seed: 11,
        };
        let table = generate_table(&config);
        let mean = |s: usize| {
            (0..config.prompt_count)
                .map(|p| table.cell(s, p).values[0])
                .sum::<f64>()
                / config.prompt_count as f64
        };
        let diff = mean(0) - mean(1);
        assert!(
            (diff - 0.25).abs() < 0.02,
            "shifted-mean gap {diff}, expected 0.25 under clamping"
        );
    }

    #[test]
    fn single_run_study_is_zero_or_one() {
        let config = SyntheticConfig::null_config(2, 6, 3);
        let result = calibration_study(&config, 1, 20, 0.05);
        assert!(result.rejection_rate == 0.0 || result.rejection_rate == 1.0);
        assert_eq!(result.per_run.len(), 1);
    }

    #[test]
    fn emitted_raw_table_reloads_to_the_generated_table() {
        let dir = tempfile::tempdir().unwrap();
        let config = SyntheticConfig {
            strategy_count: 3,
            prompt_count: 8,
            cardinal_count: 1,
            ordinal_count: 2,
            ordinal_levels: 5,
            effect: Some(ShiftEffect {
                delta: 0.2,
                bump_prob: 0.4,
            }),
            seed: 99,
        };
        emit_raw_table(&config, dir.path()).unwrap();
        let reloaded = crate::data::load_evaluation_table(
            &dir.path().join("evaluation.csv"),
            &dir.path().join("scales.json"),
        )
        .unwrap();
        let generated = generate_table(&config);
        assert_eq!(reloaded.strategies, generated.strategies);
        for s in 0..3 {
            for p in 0..8 {
                assert_eq!(reloaded.cell(s, p).values, generated.cell(s, p).values);
            }
        }
    }

    #[test]
    fn study_is_deterministic() {
        let config = SyntheticConfig::null_config(2, 8, 5);
        let a = calibration_study(&config, 6, 25, 0.05);
        let b = calibration_study(&config, 6, 25, 0.05);
        assert_eq!(a.rejection_rate, b.rejection_rate);
        for (x, y) in a.per_run.iter().zip(&b.per_run) {
            assert_eq!(x.p_value.to_bits(), y.p_value.to_bits());
        }
    }
}

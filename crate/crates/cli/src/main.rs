//! Command-line front end: ingestion, text metrics, GSD front computation,
//! front-membership testing, contamination robustness, agreement
//! statistics, synthetic calibration, and the full report bundle.
//!
//! Exit codes: 0 success, 1 data/processing error, 2 usage error.
//! Diagnostics go to standard error; artifacts go to `--out`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gsdbench::agreement::{agreement_summary, spearman_rho, weighted_kappa, RatingPairs};
use gsdbench::data::{
    load_evaluation_table, load_ratings, load_token_records, EvaluationTable, RatingRow,
};
use gsdbench::gsd::{compute_d, DContext, GsdConfig};
use gsdbench::inference::front_membership_test_with;
use gsdbench::metrics::{
    compute_text_metrics, fit_qtext_params, normalize_for_qtext, qtext, FitConfig, QTextParams,
};
use gsdbench::order::PreferenceSystem;
use gsdbench::report::{build_report, sanitize, ReportOptions};
use gsdbench::robustness::{contamination_curve, front_breakdown};
use gsdbench::sim::{
    calibration_study, emit_raw_table, generate_table, ShiftEffect, SyntheticConfig,
};

#[derive(Parser)]
#[command(
    name = "gsdbench",
    version,
    about = "Statistical multicriteria benchmarking of text-generation strategies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct TableArgs {
    /// Evaluation CSV (prompt_id,dataset,strategy,<metrics...>).
    #[arg(long)]
    table: PathBuf,
    /// Scale declaration JSON.
    #[arg(long)]
    scale: PathBuf,
}

#[derive(Args, Clone)]
struct TestArgs {
    /// Strategy whose front membership is tested.
    #[arg(long)]
    candidate: String,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Permutation resamples per pairwise test.
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Master seed for the resampling streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Candidate budget for materializing R2.
    #[arg(long)]
    r2_budget: Option<usize>,
    /// Tolerance band on the D = 0 dominance decision.
    #[arg(long, default_value_t = 1e-8)]
    dominance_tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate, and normalize an evaluation table.
    Ingest {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute diversity, perplexity, coherence, and Q*Text per text.
    Metrics {
        /// Token records, one JSON object per line.
        #[arg(long)]
        tokens: PathBuf,
        /// Q*Text parameter JSON; defaults to equal weights, no penalty.
        #[arg(long)]
        qtext_params: Option<PathBuf>,
        /// Fit Q*Text parameters against this ratings CSV before scoring.
        #[arg(long)]
        fit_ratings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the empirical GSD front and dominance matrix.
    Front {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        r2_budget: Option<usize>,
        #[arg(long, default_value_t = 1e-8)]
        dominance_tol: f64,
        /// Also dump r1/r1_reduced/r2 as edge-list text files.
        #[arg(long)]
        dump_relations: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Permutation test for GSD-front membership of one candidate.
    Test {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        test: TestArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// p-values as a function of the contaminated prompt count.
    Robust {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        test: TestArgs,
        /// Largest contaminated prompt count to examine.
        #[arg(long, default_value_t = 5)]
        kmax: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inter-rater agreement statistics for a two-rater ratings CSV.
    Agreement {
        /// Ratings CSV (prompt_id,strategy,rater_a,rater_b).
        #[arg(long)]
        ratings: PathBuf,
        /// Comma-separated admissible levels.
        #[arg(long, default_value = "1,2,3,4,5")]
        levels: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo size/power study on synthetic tables.
    Simulate {
        #[arg(long, default_value_t = 2)]
        strategies: usize,
        #[arg(long, default_value_t = 20)]
        prompts: usize,
        #[arg(long, default_value_t = 1)]
        cardinal: usize,
        #[arg(long, default_value_t = 1)]
        ordinal: usize,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Cardinal shift applied to the first strategy (enables the effect).
        #[arg(long)]
        delta: Option<f64>,
        /// Ordinal level-bump probability for the first strategy.
        #[arg(long)]
        bump: Option<f64>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 200)]
        resamples: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-run outcomes as CSV.
        #[arg(long)]
        per_run: bool,
        /// Write the run-0 table (raw values) into this directory.
        #[arg(long)]
        emit_table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: ingest, front, test, robustness, agreement, bundle.
    Report {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        test: TestArgs,
        #[arg(long, default_value_t = 5)]
        kmax: usize,
        /// Optional ratings CSV for the agreement block.
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Admissible rating levels for the agreement block.
        #[arg(long, default_value = "1,2,3,4,5")]
        rating_levels: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = format!("{}\n", serde_json::to_string_pretty(value)?);
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse_levels(spec: &str) -> Result<Vec<f64>> {
    let levels: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(anyhow::Error::from))
        .collect::<Result<_>>()
        .with_context(|| format!("parsing levels {spec:?}"))?;
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        bail!("levels must be strictly increasing: {spec:?}");
    }
    Ok(levels)
}

fn load_table(args: &TableArgs) -> Result<EvaluationTable> {
    load_evaluation_table(&args.table, &args.scale)
        .with_context(|| format!("loading {}", args.table.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { table, out } => cmd_ingest(&table, &out),
        Command::Metrics {
            tokens,
            qtext_params,
            fit_ratings,
            out,
        } => cmd_metrics(&tokens, qtext_params.as_deref(), fit_ratings.as_deref(), &out),
        Command::Front {
            table,
            r2_budget,
            dominance_tol,
            dump_relations,
            out,
        } => cmd_front(&table, r2_budget, dominance_tol, dump_relations, &out),
        Command::Test { table, test, out } => cmd_test(&table, &test, &out),
        Command::Robust {
            table,
            test,
            kmax,
            out,
        } => cmd_robust(&table, &test, kmax, &out),
        Command::Agreement {
            ratings,
            levels,
            out,
        } => cmd_agreement(&ratings, &levels, &out),
        Command::Simulate {
            strategies,
            prompts,
            cardinal,
            ordinal,
            levels,
            delta,
            bump,
            runs,
            resamples,
            alpha,
            seed,
            per_run,
            emit_table,
            out,
        } => {
            let effect = match (delta, bump) {
                (None, None) => None,
                (d, b) => Some(ShiftEffect {
                    delta: d.unwrap_or(0.0),
                    bump_prob: b.unwrap_or(0.0),
                }),
            };
            let config = SyntheticConfig {
                strategy_count: strategies,
                prompt_count: prompts,
                cardinal_count: cardinal,
                ordinal_count: ordinal,
                ordinal_levels: levels,
                effect,
                seed,
            };
            cmd_simulate(&config, runs, resamples, alpha, per_run, emit_table.as_deref(), &out)
        }
        Command::Report {
            table,
            test,
            kmax,
            ratings,
            rating_levels,
            out,
        } => cmd_report(&table, &test, kmax, ratings.as_deref(), &rating_levels, &out),
    }
}

fn cmd_ingest(args: &TableArgs, out: &Path) -> Result<()> {
    let table = load_table(args)?;
    ensure_out(out)?;
    let validation = table.validate();
    table.write_csv(&out.join("normalized_table.csv"))?;
    table
        .scale
        .normalized_form()
        .to_json_file(&out.join("normalized_scales.json"))?;
    write_json(
        &out.join("ingest.json"),
        &serde_json::json!({
            "strategies": table.strategies,
            "prompt_count": table.prompt_count(),
            "metric_count": table.scale.metric_count(),
            "cardinal_count": table.scale.cardinal_count(),
            "normalization_anchors": gsdbench::data::anchors_map(&table.anchors),
            "validation": validation,
        }),
    )?;
    if !validation.is_empty() {
        bail!("table has {} validation violations; see ingest.json", validation.violations.len());
    }
    eprintln!(
        "ingested {} strategies x {} prompts",
        table.strategies.len(),
        table.prompt_count()
    );
    Ok(())
}

fn cmd_metrics(
    tokens: &Path,
    params_path: Option<&Path>,
    fit_ratings: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let records = load_token_records(tokens)?;
    if records.is_empty() {
        bail!("no token records in {}", tokens.display());
    }
    let rows = compute_text_metrics(&records)?;
    let m_rows = normalize_for_qtext(&rows)?;

    let mut params = match params_path {
        None => QTextParams::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
    };
    params.check().map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let mut fit_summary = serde_json::Value::Null;
    if let Some(ratings_path) = fit_ratings {
        let ratings = load_ratings(ratings_path)?;
        let human: Vec<f64> = rows
            .iter()
            .map(|row| {
                ratings
                    .iter()
                    .find(|r| r.prompt_id == row.prompt_id && r.strategy == row.strategy)
                    .map(|r| (r.rater_a + r.rater_b) / 2.0)
                    .ok_or_else(|| {
                        anyhow::anyhow!(
                            "no rating for ({}, {})",
                            row.prompt_id,
                            row.strategy
                        )
                    })
            })
            .collect::<Result<_>>()?;
        let fit = fit_qtext_params(&m_rows, &human, &FitConfig::default())
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        fit_summary = serde_json::json!({
            "achieved_spearman_rho": fit.achieved_rho,
            "params": fit.params,
        });
        params = fit.params;
    }

    ensure_out(out)?;
    let mut csv = String::from("prompt_id,strategy,diversity,perplexity,coherence,qtext\n");
    for (row, &m) in rows.iter().zip(&m_rows) {
        let q = qtext(m, &params).map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.prompt_id, row.strategy, row.diversity, row.perplexity, row.coherence, q
        );
    }
    std::fs::write(out.join("metrics.csv"), csv)?;
    write_json(
        &out.join("metrics.json"),
        &serde_json::json!({
            "texts": rows.len(),
            "qtext_params": params,
            "fit": fit_summary,
        }),
    )?;
    eprintln!("scored {} texts", rows.len());
    Ok(())
}

fn cmd_front(
    args: &TableArgs,
    r2_budget: Option<usize>,
    dominance_tol: f64,
    dump_relations: bool,
    out: &Path,
) -> Result<()> {
    let table = load_table(args)?;
    ensure_out(out)?;
    let config = GsdConfig {
        r2_budget,
        dominance_tol,
    };
    let system = PreferenceSystem::from_table(&table, r2_budget);
    let context = DContext::new(&system);
    let front = gsdbench::gsd::gsd_front_with(&table, &system, &context, &config);

    let mut csv = String::from("candidate,opponent,d,weak,strict\n");
    for p in &front.dominance_matrix {
        let _ = writeln!(csv, "{},{},{},{},{}", p.candidate, p.opponent, p.d, p.weak, p.strict);
    }
    std::fs::write(out.join("dominance_matrix.csv"), csv)?;
    write_json(
        &out.join("front.json"),
        &serde_json::json!({
            "front": front.front,
            "dominance_matrix": front.dominance_matrix,
            "preference_system": {
                "vector_count": system.node_count(),
                "r1_size": system.r1.len(),
                "r1_reduced_size": system.r1_reduced.len(),
                "r2_size": system.r2.len(),
                "r2_mode": system.r2_mode,
            },
        }),
    )?;
    if dump_relations {
        system.dump_relations(out)?;
    }
    eprintln!("front: {:?}", front.front);
    Ok(())
}

fn cmd_test(args: &TableArgs, test_args: &TestArgs, out: &Path) -> Result<()> {
    let table = load_table(args)?;
    ensure_out(out)?;
    let system = PreferenceSystem::from_table(&table, test_args.r2_budget);
    let context = DContext::new(&system);
    let result = front_membership_test_with(
        &table,
        &system,
        &context,
        &test_args.candidate,
        test_args.resamples,
        test_args.seed,
        test_args.alpha,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    for t in &result.pairwise {
        let mut csv = String::from("resample,statistic\n");
        for (i, v) in t.resampled.iter().enumerate() {
            let _ = writeln!(csv, "{},{}", i + 1, v);
        }
        std::fs::write(out.join(format!("resampled_{}.csv", sanitize(&t.opponent))), csv)?;
    }
    let mut csv = String::from("opponent,observed,p_value,threshold,reject\n");
    for t in &result.pairwise {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            t.opponent, t.observed, t.p_value, t.threshold, t.reject
        );
    }
    std::fs::write(out.join("pairwise_tests.csv"), csv)?;

    write_json(
        &out.join("front_test.json"),
        &serde_json::json!({
            "candidate": result.candidate,
            "alpha": result.alpha,
            "reject_h0": result.reject_h0,
            "pairwise": result.pairwise.iter().map(|t| serde_json::json!({
                "opponent": t.opponent,
                "observed": t.observed,
                "p_value": t.p_value,
                "threshold": t.threshold,
                "reject": t.reject,
            })).collect::<Vec<_>>(),
            "seed": test_args.seed,
            "resamples": test_args.resamples,
        }),
    )?;
    eprintln!(
        "front membership of {:?}: reject_h0 = {}",
        result.candidate, result.reject_h0
    );
    Ok(())
}

fn cmd_robust(args: &TableArgs, test_args: &TestArgs, kmax: usize, out: &Path) -> Result<()> {
    let table = load_table(args)?;
    ensure_out(out)?;
    let system = PreferenceSystem::from_table(&table, test_args.r2_budget);
    let context = DContext::new(&system);
    let result = front_membership_test_with(
        &table,
        &system,
        &context,
        &test_args.candidate,
        test_args.resamples,
        test_args.seed,
        test_args.alpha,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let mut curves = Vec::new();
    for t in &result.pairwise {
        let observed = compute_d(&table, &system, &context, &t.candidate, &t.opponent)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let curve = contamination_curve(t, &observed, &table, &system, kmax)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let mut csv = String::from("k,p_value\n");
        for p in &curve.points {
            let _ = writeln!(csv, "{},{}", p.k, p.p_value);
        }
        std::fs::write(
            out.join(format!("contamination_{}.csv", sanitize(&curve.opponent))),
            csv,
        )?;
        curves.push(curve);
    }
    let breakdown = front_breakdown(&curves).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_json(
        &out.join("robust.json"),
        &serde_json::json!({
            "candidate": result.candidate,
            "alpha": result.alpha,
            "k_max": kmax,
            "curves": curves,
            "front_breakdown": breakdown,
        }),
    )?;
    eprintln!("front breakdown: {breakdown}");
    Ok(())
}

fn cmd_agreement(ratings_path: &Path, levels: &str, out: &Path) -> Result<()> {
    let rows = load_ratings(ratings_path)?;
    let levels = parse_levels(levels)?;
    let pairs = RatingPairs::new(
        rows.iter().map(|r| r.rater_a).collect(),
        rows.iter().map(|r| r.rater_b).collect(),
        levels,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let kappa = weighted_kappa(&pairs).ok();
    let rho = spearman_rho(&pairs.rater_a, &pairs.rater_b)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let summary = agreement_summary(&pairs).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    ensure_out(out)?;
    write_json(
        &out.join("agreement.json"),
        &serde_json::json!({
            "observations": rows.len(),
            "weighted_kappa": kappa,
            "spearman_rho": rho,
            "within_one_share": summary.within_one_share,
            "mean_abs_diff": summary.mean_abs_diff,
        }),
    )?;
    eprintln!(
        "kappa_w = {:?}, spearman = {rho:.3}, within-one = {:.3}, mad = {:.3}",
        kappa, summary.within_one_share, summary.mean_abs_diff
    );
    Ok(())
}

fn cmd_simulate(
    config: &SyntheticConfig,
    runs: usize,
    resamples: usize,
    alpha: f64,
    per_run: bool,
    emit_table: Option<&Path>,
    out: &Path,
) -> Result<()> {
    if let Some(dir) = emit_table {
        let mut run0 = config.clone();
        run0.seed = config.seed.wrapping_add(0x5eed).wrapping_mul(0x100000001b3);
        emit_raw_table(&run0, dir)?;
        // The emitted table corresponds to run 0 of the study below.
        let table = generate_table(&run0);
        eprintln!(
            "emitted run-0 table ({} strategies x {} prompts) to {}",
            table.strategies.len(),
            table.prompt_count(),
            dir.display()
        );
    }
    let result = calibration_study(config, runs, resamples, alpha);
    ensure_out(out)?;
    if per_run {
        let mut csv = String::from("run,reject,p_value,observed\n");
        for r in &result.per_run {
            let _ = writeln!(csv, "{},{},{},{}", r.run, r.reject, r.p_value, r.observed);
        }
        std::fs::write(out.join("runs.csv"), csv)?;
    }
    write_json(
        &out.join("study.json"),
        &serde_json::json!({
            "config": config,
            "runs": result.runs,
            "resamples": result.resamples,
            "alpha": result.alpha,
            "rejection_rate": result.rejection_rate,
            "mean_runtime_secs": result.mean_runtime_secs,
        }),
    )?;
    eprintln!(
        "rejection rate {:.3} over {} runs ({:.3}s/run)",
        result.rejection_rate, result.runs, result.mean_runtime_secs
    );
    Ok(())
}

fn cmd_report(
    args: &TableArgs,
    test_args: &TestArgs,
    kmax: usize,
    ratings: Option<&Path>,
    rating_levels: &str,
    out: &Path,
) -> Result<()> {
    let start = Instant::now();
    let table = load_table(args)?;
    let ratings_rows: Option<Vec<RatingRow>> = match ratings {
        None => None,
        Some(p) => Some(load_ratings(p)?),
    };
    let levels = parse_levels(rating_levels)?;
    let options = ReportOptions {
        candidate: test_args.candidate.clone(),
        alpha: test_args.alpha,
        resamples: test_args.resamples,
        seed: test_args.seed,
        k_max: kmax,
        r2_budget: test_args.r2_budget,
        dominance_tol: test_args.dominance_tol,
    };
    let artifacts = build_report(
        &table,
        ratings_rows.as_deref().map(|r| (r, levels.as_slice())),
        &options,
    )
    .map_err(|e| anyhow::anyhow!(e))?;
    ensure_out(out)?;
    artifacts.write_all(out, start.elapsed().as_secs_f64())?;
    eprintln!(
        "report written to {} ({} artifacts, {:.1}s)",
        out.display(),
        artifacts.files.len() + 2,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

//! Report assembly: one deterministic JSON document plus per-figure CSV and
//! SVG artifacts. Everything is reproducible from (input files, options);
//! wall-clock data goes into a separate sidecar so the main bundle is
//! byte-identical across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agreement::{agreement_summary, spearman_rho, weighted_kappa, RatingPairs};
use crate::data::{anchors_map, EvaluationTable, RatingRow, ValidationReport};
use crate::gsd::{compute_d, DContext, FrontResult, GsdConfig, gsd_front_with};
use crate::inference::{front_membership_test_with, FrontTestResult};
use crate::order::{PreferenceSystem, R2Mode};
use crate::robustness::{contamination_curve, front_breakdown, ContaminationCurve};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportOptions {
    pub candidate: String,
    pub alpha: f64,
    pub resamples: usize,
    pub seed: u64,
    pub k_max: usize,
    pub r2_budget: Option<usize>,
    pub dominance_tol: f64,
}

#[derive(Debug, Serialize)]
pub struct TableSummary {
    pub strategies: Vec<String>,
    pub prompt_count: usize,
    pub metrics: Vec<MetricSummary>,
    pub validation: ValidationReport,
}

#[derive(Debug, Serialize)]
pub struct MetricSummary {
    pub name: String,
    pub scale: crate::data::Scale,
    pub normalization: crate::data::Normalization,
}

#[derive(Debug, Serialize)]
pub struct SystemSummary {
    pub vector_count: usize,
    pub r1_size: usize,
    pub r1_reduced_size: usize,
    pub r2_size: usize,
    pub lp_constraint_count: usize,
    pub r2_mode: R2Mode,
}

#[derive(Debug, Serialize)]
pub struct PairwiseSummary {
    pub opponent: String,
    pub observed: f64,
    pub p_value: f64,
    pub threshold: f64,
    pub reject: bool,
}

#[derive(Debug, Serialize)]
pub struct FrontTestSummary {
    pub candidate: String,
    pub alpha: f64,
    pub reject_h0: bool,
    pub pairwise: Vec<PairwiseSummary>,
}

#[derive(Debug, Serialize)]
pub struct CurveSummary {
    pub opponent: String,
    pub breakdown: i64,
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Serialize)]
pub struct ContaminationSection {
    pub k_max: usize,
    pub curves: Vec<CurveSummary>,
    pub front_breakdown: i64,
}

#[derive(Debug, Serialize)]
pub struct AgreementSection {
    pub observations: usize,
    pub weighted_kappa: Option<f64>,
    pub spearman_rho: f64,
    pub within_one_share: f64,
    pub mean_abs_diff: f64,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub package_version: String,
    pub seed: u64,
    pub alpha: f64,
    pub resamples: usize,
    pub dominance_tol: f64,
    pub lp_feasibility_tol: f64,
    pub r2_budget: Option<usize>,
    pub r2_mode: R2Mode,
    pub normalization_anchors: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub config: ReportOptions,
    pub table_summary: TableSummary,
    pub preference_system: SystemSummary,
    pub dominance: FrontResult,
    pub front_test: FrontTestSummary,
    pub contamination: ContaminationSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementSection>,
    pub provenance: Provenance,
}

/// The finished bundle: the main JSON document and every figure artifact,
/// keyed by file name. Writing is a separate, trivial step.
pub struct ReportArtifacts {
    pub report: Report,
    pub files: BTreeMap<String, String>,
}

/// Runs the full pipeline on a loaded table and assembles the bundle.
pub fn build_report(
    table: &EvaluationTable,
    ratings: Option<(&[RatingRow], &[f64])>,
    options: &ReportOptions,
) -> Result<ReportArtifacts, String> {
    let gsd_config = GsdConfig {
        r2_budget: options.r2_budget,
        dominance_tol: options.dominance_tol,
    };
    let validation = table.validate();
    let system = PreferenceSystem::from_table(table, options.r2_budget);
    let context = DContext::new(&system);

    let dominance = gsd_front_with(table, &system, &context, &gsd_config);
    let front_test = front_membership_test_with(
        table,
        &system,
        &context,
        &options.candidate,
        options.resamples,
        options.seed,
        options.alpha,
    )
    .map_err(|e| e.to_string())?;

    let mut curves: Vec<ContaminationCurve> = Vec::new();
    for test in &front_test.pairwise {
        let observed = compute_d(table, &system, &context, &test.candidate, &test.opponent)
            .map_err(|e| e.to_string())?;
        let curve = contamination_curve(test, &observed, table, &system, options.k_max)
            .map_err(|e| e.to_string())?;
        curves.push(curve);
    }

    let agreement = match ratings {
        None => None,
        Some((rows, levels)) => {
            let pairs = RatingPairs::new(
                rows.iter().map(|r| r.rater_a).collect(),
                rows.iter().map(|r| r.rater_b).collect(),
                levels.to_vec(),
            )
            .map_err(|e| e.to_string())?;
            let summary = agreement_summary(&pairs).map_err(|e| e.to_string())?;
            Some(AgreementSection {
                observations: rows.len(),
                weighted_kappa: weighted_kappa(&pairs).ok(),
                spearman_rho: spearman_rho(&pairs.rater_a, &pairs.rater_b)
                    .map_err(|e| e.to_string())?,
                within_one_share: summary.within_one_share,
                mean_abs_diff: summary.mean_abs_diff,
            })
        }
    };

    let report = Report {
        config: options.clone(),
        table_summary: TableSummary {
            strategies: table.strategies.clone(),
            prompt_count: table.prompt_count(),
            metrics: table
                .scale
                .metrics
                .iter()
                .map(|m| MetricSummary {
                    name: m.name.clone(),
                    scale: m.scale,
                    normalization: m.normalization,
                })
                .collect(),
            validation,
        },
        preference_system: SystemSummary {
            vector_count: system.node_count(),
            r1_size: system.r1.len(),
            r1_reduced_size: system.r1_reduced.len(),
            r2_size: system.r2.len(),
            lp_constraint_count: context.constraint_count(),
            r2_mode: system.r2_mode,
        },
        front_test: FrontTestSummary {
            candidate: front_test.candidate.clone(),
            alpha: front_test.alpha,
            reject_h0: front_test.reject_h0,
            pairwise: front_test
                .pairwise
                .iter()
                .map(|t| PairwiseSummary {
                    opponent: t.opponent.clone(),
                    observed: t.observed,
                    p_value: t.p_value,
                    threshold: t.threshold,
                    reject: t.reject,
                })
                .collect(),
        },
        contamination: ContaminationSection {
            k_max: options.k_max,
            curves: curves
                .iter()
                .map(|c| CurveSummary {
                    opponent: c.opponent.clone(),
                    breakdown: c.breakdown,
                    points: c.points.iter().map(|p| (p.k, p.p_value)).collect(),
                })
                .collect(),
            front_breakdown: front_breakdown(&curves).map_err(|e| e.to_string())?,
        },
        dominance,
        agreement,
        provenance: Provenance {
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: options.seed,
            alpha: options.alpha,
            resamples: options.resamples,
            dominance_tol: options.dominance_tol,
            lp_feasibility_tol: crate::lp::DEFAULT_TOL,
            r2_budget: options.r2_budget,
            r2_mode: system.r2_mode,
            normalization_anchors: anchors_map(&table.anchors),
        },
    };

    let mut files = BTreeMap::new();
    files.insert(
        "dominance_matrix.csv".to_string(),
        dominance_matrix_csv(&report.dominance),
    );
    files.insert("pairwise_tests.csv".to_string(), pairwise_csv(&front_test));
    for test in &front_test.pairwise {
        files.insert(
            format!("resampled_{}.csv", sanitize(&test.opponent)),
            resampled_csv(&test.resampled),
        );
    }
    for curve in &curves {
        files.insert(
            format!("contamination_{}.csv", sanitize(&curve.opponent)),
            curve_csv(curve),
        );
    }
    files.insert(
        "resampled_density.svg".to_string(),
        density_svg(&front_test),
    );
    files.insert(
        "contamination_curves.svg".to_string(),
        contamination_svg(&curves, options.alpha, options.k_max),
    );

    Ok(ReportArtifacts { report, files })
}

impl ReportArtifacts {
    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes report.json, every figure artifact, and the wall-clock
    /// sidecar into `dir`.
    pub fn write_all(&self, dir: &Path, runtime_secs: f64) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report_json())?;
        for (name, content) in &self.files {
            std::fs::write(dir.join(name), content)?;
        }
        let sidecar = serde_json::json!({
            "generated_unix_ms": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            "runtime_secs": runtime_secs,
        });
        std::fs::write(
            dir.join("report.meta.json"),
            format!("{}\n", serde_json::to_string_pretty(&sidecar).expect("sidecar")),
        )
    }
}

pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn dominance_matrix_csv(front: &FrontResult) -> String {
    let mut out = String::from("candidate,opponent,d,weak,strict\n");
    for p in &front.dominance_matrix {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.candidate, p.opponent, p.d, p.weak, p.strict
        );
    }
    out
}

fn pairwise_csv(front_test: &FrontTestResult) -> String {
    let mut out = String::from("opponent,observed,p_value,threshold,reject\n");
    for t in &front_test.pairwise {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.opponent, t.observed, t.p_value, t.threshold, t.reject
        );
    }
    out
}

fn resampled_csv(resampled: &[f64]) -> String {
    let mut out = String::from("resample,statistic\n");
    for (i, v) in resampled.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, v);
    }
    out
}

fn curve_csv(curve: &ContaminationCurve) -> String {
    let mut out = String::from("k,p_value\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{}", p.k, p.p_value);
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 55.0;

fn x_map(x: f64, lo: f64, hi: f64) -> f64 {
    MARGIN + (x - lo) / (hi - lo).max(1e-12) * (WIDTH - 2.0 * MARGIN)
}

fn y_map(y: f64, lo: f64, hi: f64) -> f64 {
    HEIGHT - MARGIN - (y - lo) / (hi - lo).max(1e-12) * (HEIGHT - 2.0 * MARGIN)
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        WIDTH / 2.0
    )
}

/// Gaussian kernel density of the resampled statistics, one polyline per
/// opponent, with the observed value as a dashed marker.
fn density_svg(front_test: &FrontTestResult) -> String {
    let mut svg = svg_header("Resampled pairwise statistics");
    if front_test.pairwise.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in &front_test.pairwise {
        for &v in t.resampled.iter().chain(std::iter::once(&t.observed)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        svg.push_str("</svg>\n");
        return svg;
    }
    let pad = 0.05 * (hi - lo).max(1e-6);
    let (lo, hi) = (lo - pad, hi + pad);

    let grid: Vec<f64> = (0..=200)
        .map(|i| lo + (hi - lo) * i as f64 / 200.0)
        .collect();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    let mut peak = 0.0f64;
    for t in &front_test.pairwise {
        let n = t.resampled.len() as f64;
        let mean = t.resampled.iter().sum::<f64>() / n;
        let var = t.resampled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let h = (1.06 * var.sqrt() * n.powf(-0.2)).max(1e-4);
        let dens: Vec<f64> = grid
            .iter()
            .map(|&x| {
                t.resampled
                    .iter()
                    .map(|&v| {
                        let u = (x - v) / h;
                        (-0.5 * u * u).exp()
                    })
                    .sum::<f64>()
                    / (n * h * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        peak = dens.iter().fold(peak, |a, &b| a.max(b));
        curves.push(dens);
    }
    let peak = peak.max(1e-9);

    for (ti, (t, dens)) in front_test.pairwise.iter().zip(&curves).enumerate() {
        let color = PALETTE[ti % PALETTE.len()];
        let mut points = String::new();
        for (&x, &d) in grid.iter().zip(dens) {
            let _ = write!(points, "{:.2},{:.2} ", x_map(x, lo, hi), y_map(d, 0.0, peak));
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
        // Observed statistic marker.
        let x = x_map(t.observed, lo, hi);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-dasharray=\"4 3\"/>",
            y_map(peak, 0.0, peak),
            y_map(0.0, 0.0, peak)
        );
        // Rejection threshold in red.
        let xt = x_map(t.threshold, lo, hi);
        let _ = writeln!(
            svg,
            "<line x1=\"{xt:.2}\" y1=\"{:.2}\" x2=\"{xt:.2}\" y2=\"{:.2}\" stroke=\"#d62728\" stroke-width=\"0.8\"/>",
            y_map(peak, 0.0, peak),
            y_map(0.0, 0.0, peak)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN + 4.0,
            38.0 + 14.0 * ti as f64 - 14.0 + 14.0,
            sanitize(&t.opponent)
        );
    }
    axis_lines(&mut svg);
    svg.push_str("</svg>\n");
    svg
}

/// Step curves of p(k) per opponent with the significance level in red.
fn contamination_svg(curves: &[ContaminationCurve], alpha: f64, k_max: usize) -> String {
    let mut svg = svg_header("p-values under contamination");
    let klo = 0.0;
    let khi = k_max.max(1) as f64;
    for (ci, curve) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let mut points = String::new();
        for pair in curve.points.windows(2) {
            let _ = write!(
                points,
                "{:.2},{:.2} {:.2},{:.2} ",
                x_map(pair[0].k as f64, klo, khi),
                y_map(pair[0].p_value, 0.0, 1.0),
                x_map(pair[1].k as f64, klo, khi),
                y_map(pair[0].p_value, 0.0, 1.0)
            );
        }
        if let Some(last) = curve.points.last() {
            let _ = write!(
                points,
                "{:.2},{:.2}",
                x_map(last.k as f64, klo, khi),
                y_map(last.p_value, 0.0, 1.0)
            );
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
        for p in &curve.points {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>",
                x_map(p.k as f64, klo, khi),
                y_map(p.p_value, 0.0, 1.0)
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN + 4.0,
            38.0 + 14.0 * ci as f64,
            sanitize(&curve.opponent)
        );
    }
    let y = y_map(alpha, 0.0, 1.0);
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#d62728\" stroke-width=\"1\"/>",
        MARGIN,
        WIDTH - MARGIN
    );
    axis_lines(&mut svg);
    svg.push_str("</svg>\n");
    svg
}

fn axis_lines(svg: &mut String) {
    let _ = writeln!(
        svg,
        "<line x1=\"{m:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\" stroke-width=\"1\"/>\n\
         <line x1=\"{m:.2}\" y1=\"{t:.2}\" x2=\"{m:.2}\" y2=\"{b:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    );
}

//! Evaluation data: scale declarations, quality vectors, evaluation tables,
//! and token-level records, with ingestion, validation, and normalization.
//!
//! An evaluation table holds one quality vector per (strategy, prompt) cell.
//! Cardinal metrics are normalized into [0,1] per declared method over the
//! whole loaded batch; ordinal metrics are mapped order-preservingly onto
//! equally spaced points in [0,1]. The min/max anchors used for cardinal
//! normalization are recorded so a run can be reproduced from its report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse failure in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("scale spec invalid: {0}")]
    ScaleSpec(String),
    #[error("unknown metric column {column:?}; expected {expected:?}")]
    UnknownMetricColumn { column: String, expected: Vec<String> },
    #[error("missing cell: strategy {strategy:?}, prompt {prompt:?}")]
    MissingCell { strategy: String, prompt: String },
    #[error("duplicate cell: strategy {strategy:?}, prompt {prompt:?}")]
    DuplicateCell { strategy: String, prompt: String },
    #[error("ordinal value {value} for metric {metric:?} outside declared levels")]
    LevelOutOfRange { metric: String, value: f64 },
    #[error("non-finite cardinal value for metric {metric:?} (prompt {prompt:?}, strategy {strategy:?})")]
    NonFiniteValue {
        metric: String,
        prompt: String,
        strategy: String,
    },
    #[error("value {value} for metric {metric:?} outside [0,1] under 'none' normalization")]
    OutOfUnitRange { metric: String, value: f64 },
    #[error("prompt {prompt:?} declared with conflicting dataset tags {a:?} and {b:?}")]
    ConflictingDataset { prompt: String, a: String, b: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("token record {index}: {detail}")]
    TokenRecord { index: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Measurement scale of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Cardinal,
    Ordinal,
}

/// How raw cardinal values are mapped into [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// (x - min) / (max - min); higher raw is better.
    Minmax,
    /// (max - x) / (max - min); lower raw is better (e.g. perplexity).
    InverseMinmax,
    /// Values are used as-is and must already lie in [0,1].
    None,
}

/// One declared metric column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub scale: Scale,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    /// Strictly increasing admissible levels; required for ordinal metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal_levels: Option<Vec<f64>>,
}

fn default_normalization() -> Normalization {
    Normalization::None
}

/// Ordered metric declarations: all cardinal metrics first, then ordinal ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub metrics: Vec<MetricSpec>,
}

impl ScaleSpec {
    /// Number of metrics n.
    pub fn metric_count(&self) -> usize {
        self.metrics.len()
    }

    /// Number of cardinal metrics z; cardinal indices are exactly 0..z.
    pub fn cardinal_count(&self) -> usize {
        self.metrics
            .iter()
            .take_while(|m| m.scale == Scale::Cardinal)
            .count()
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.metrics.iter().map(|m| m.name.clone()).collect()
    }

    /// Checks the structural invariants of the declaration itself.
    pub fn check(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(DataError::ScaleSpec("at least one metric required".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.metrics {
            if !seen.insert(m.name.clone()) {
                return Err(DataError::ScaleSpec(format!("duplicate metric name {:?}", m.name)));
            }
        }
        let z = self.cardinal_count();
        if self.metrics[z..].iter().any(|m| m.scale == Scale::Cardinal) {
            return Err(DataError::ScaleSpec(
                "cardinal metrics must precede ordinal metrics".into(),
            ));
        }
        for m in &self.metrics {
            match m.scale {
                Scale::Cardinal => {
                    if m.ordinal_levels.is_some() {
                        return Err(DataError::ScaleSpec(format!(
                            "cardinal metric {:?} must not declare ordinal_levels",
                            m.name
                        )));
                    }
                }
                Scale::Ordinal => {
                    let levels = m.ordinal_levels.as_ref().ok_or_else(|| {
                        DataError::ScaleSpec(format!(
                            "ordinal metric {:?} must declare ordinal_levels",
                            m.name
                        ))
                    })?;
                    if levels.is_empty() {
                        return Err(DataError::ScaleSpec(format!(
                            "ordinal metric {:?} has empty level list",
                            m.name
                        )));
                    }
                    if levels.iter().any(|v| !v.is_finite()) {
                        return Err(DataError::ScaleSpec(format!(
                            "ordinal metric {:?} has non-finite level",
                            m.name
                        )));
                    }
                    if levels.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(DataError::ScaleSpec(format!(
                            "ordinal metric {:?} levels must be strictly increasing",
                            m.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let spec: ScaleSpec = serde_json::from_str(&text).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        spec.check()?;
        Ok(spec)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("scale spec serializes");
        std::fs::write(path, text).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// The spec that reloads a normalized table unchanged: cardinal columns
    /// switch to `none` (values already in [0,1]) and ordinal levels are
    /// replaced by their mapped rank values.
    pub fn normalized_form(&self) -> ScaleSpec {
        let metrics = self
            .metrics
            .iter()
            .map(|m| match m.scale {
                Scale::Cardinal => MetricSpec {
                    name: m.name.clone(),
                    scale: Scale::Cardinal,
                    normalization: Normalization::None,
                    ordinal_levels: None,
                },
                Scale::Ordinal => {
                    let c = m.ordinal_levels.as_ref().map_or(0, Vec::len);
                    MetricSpec {
                        name: m.name.clone(),
                        scale: Scale::Ordinal,
                        normalization: Normalization::None,
                        ordinal_levels: Some((0..c).map(|i| ordinal_rank(i, c)).collect()),
                    }
                }
            })
            .collect();
        ScaleSpec { metrics }
    }
}

/// Rank value of level `i` on a `c`-level scale: equally spaced in [0,1].
/// A single-level scale carries no information and maps to 0.5.
pub fn ordinal_rank(i: usize, c: usize) -> f64 {
    if c <= 1 {
        0.5
    } else {
        i as f64 / (c - 1) as f64
    }
}

/// Normalizes a raw column into [0,1].
///
/// Constant columns map to 0.5 everywhere: the column carries no information
/// and 0.5 avoids the zero division.
pub fn normalize_column(raw: &[f64], method: Normalization) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(DataError::EmptyInput("normalize_column".into()));
    }
    match method {
        Normalization::None => Ok(raw.to_vec()),
        Normalization::Minmax | Normalization::InverseMinmax => {
            let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if min == max {
                return Ok(vec![0.5; raw.len()]);
            }
            let span = max - min;
            Ok(raw
                .iter()
                .map(|&x| match method {
                    Normalization::Minmax => (x - min) / span,
                    Normalization::InverseMinmax => (max - x) / span,
                    Normalization::None => unreachable!(),
                })
                .map(canonical_unit)
                .collect())
        }
    }
}

/// Collapses -0.0 to +0.0 so equal vectors dedupe regardless of sign noise.
fn canonical_unit(x: f64) -> f64 {
    x + 0.0
}

/// A normalized quality vector Φ(S,P): one entry per metric, all in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVector {
    pub values: Vec<f64>,
}

impl QualityVector {
    pub fn new(values: Vec<f64>) -> Self {
        QualityVector {
            values: values.into_iter().map(canonical_unit).collect(),
        }
    }

    /// Componentwise x >= y.
    pub fn dominates(&self, other: &QualityVector) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a >= b)
    }

    /// Exact-equality key for deduplication (entries are finite).
    pub(crate) fn bits_key(&self) -> Vec<u64> {
        self.values.iter().map(|v| v.to_bits()).collect()
    }
}

/// Per-cardinal-metric min/max anchors used during normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationAnchor {
    pub metric: String,
    pub method: Normalization,
    pub min: f64,
    pub max: f64,
}

/// One violation found by [`EvaluationTable::validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

/// Validation outcome; empty iff the table satisfies every invariant.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, message: String) {
        self.violations.push(Violation {
            code: code.to_string(),
            message,
        });
    }
}

/// The empirical law: per (strategy, prompt) one normalized quality vector,
/// each prompt carrying uniform weight 1/m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationTable {
    /// Strategy identifiers, sorted for canonical iteration order.
    pub strategies: Vec<String>,
    /// Prompt identifiers in first-appearance order.
    pub prompts: Vec<String>,
    /// Optional dataset tag per prompt (same order as `prompts`).
    pub datasets: Vec<Option<String>>,
    /// cells[strategy_index][prompt_index]
    pub cells: Vec<Vec<QualityVector>>,
    pub scale: ScaleSpec,
    /// Min/max anchors recorded for each normalized cardinal column.
    pub anchors: Vec<NormalizationAnchor>,
}

impl EvaluationTable {
    pub fn strategy_index(&self, name: &str) -> Option<usize> {
        self.strategies.iter().position(|s| s == name)
    }

    pub fn prompt_count(&self) -> usize {
        self.prompts.len()
    }

    pub fn cell(&self, strategy: usize, prompt: usize) -> &QualityVector {
        &self.cells[strategy][prompt]
    }

    /// Builds a table from per-cell raw values, applying normalization.
    ///
    /// `raw` maps (strategy, prompt) in the given orders to raw metric rows.
    pub fn from_raw(
        strategies: Vec<String>,
        prompts: Vec<String>,
        datasets: Vec<Option<String>>,
        raw: Vec<Vec<Vec<f64>>>,
        scale: ScaleSpec,
    ) -> Result<EvaluationTable> {
        scale.check()?;
        let n = scale.metric_count();
        let s_count = strategies.len();
        let p_count = prompts.len();
        if s_count == 0 || p_count == 0 {
            return Err(DataError::EmptyInput("table has no strategies or prompts".into()));
        }

        // Columns are normalized over the whole batch.
        let mut normalized: Vec<Vec<Vec<f64>>> =
            vec![vec![vec![0.0; n]; p_count]; s_count];
        let mut anchors = Vec::new();
        for (k, metric) in scale.metrics.iter().enumerate() {
            let mut column = Vec::with_capacity(s_count * p_count);
            for s in 0..s_count {
                for p in 0..p_count {
                    column.push(raw[s][p][k]);
                }
            }
            match metric.scale {
                Scale::Cardinal => {
                    for (idx, &v) in column.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(DataError::NonFiniteValue {
                                metric: metric.name.clone(),
                                strategy: strategies[idx / p_count].clone(),
                                prompt: prompts[idx % p_count].clone(),
                            });
                        }
                    }
                    let out = match metric.normalization {
                        Normalization::None => {
                            for &v in &column {
                                if !(0.0..=1.0).contains(&v) {
                                    return Err(DataError::OutOfUnitRange {
                                        metric: metric.name.clone(),
                                        value: v,
                                    });
                                }
                            }
                            column.clone()
                        }
                        method => {
                            let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
                            let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            anchors.push(NormalizationAnchor {
                                metric: metric.name.clone(),
                                method,
                                min,
                                max,
                            });
                            normalize_column(&column, method)?
                        }
                    };
                    for (idx, v) in out.into_iter().enumerate() {
                        normalized[idx / p_count][idx % p_count][k] = v;
                    }
                }
                Scale::Ordinal => {
                    let levels = metric.ordinal_levels.as_ref().expect("checked");
                    let c = levels.len();
                    for (idx, &v) in column.iter().enumerate() {
                        let pos = levels.iter().position(|&l| l == v).ok_or_else(|| {
                            DataError::LevelOutOfRange {
                                metric: metric.name.clone(),
                                value: v,
                            }
                        })?;
                        normalized[idx / p_count][idx % p_count][k] = ordinal_rank(pos, c);
                    }
                }
            }
        }

        let cells = normalized
            .into_iter()
            .map(|rows| rows.into_iter().map(QualityVector::new).collect())
            .collect();
        Ok(EvaluationTable {
            strategies,
            prompts,
            datasets,
            cells,
            scale,
            anchors,
        })
    }

    /// Reports every invariant violation; an empty report means the table is
    /// well formed. Violations are report entries, never failures.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.scale.metric_count();

        if self.scale.check().is_err() {
            report.push("scale", "scale spec violates its invariants".into());
        }
        let mut seen = HashSet::new();
        for p in &self.prompts {
            if !seen.insert(p.clone()) {
                report.push("duplicate_prompt", format!("prompt id {p:?} repeated"));
            }
        }
        let mut seen = HashSet::new();
        for s in &self.strategies {
            if !seen.insert(s.clone()) {
                report.push("duplicate_strategy", format!("strategy id {s:?} repeated"));
            }
        }
        if self.cells.len() != self.strategies.len()
            || self.cells.iter().any(|r| r.len() != self.prompts.len())
        {
            report.push("totality", "cell map does not cover strategies × prompts".into());
            return report;
        }
        if self.datasets.len() != self.prompts.len() {
            report.push("datasets", "dataset tag list length differs from prompts".into());
        }

        // Mapped ordinal level sets, for the membership check below.
        let level_sets: Vec<Option<Vec<f64>>> = self
            .scale
            .metrics
            .iter()
            .map(|m| {
                m.ordinal_levels
                    .as_ref()
                    .map(|ls| (0..ls.len()).map(|i| ordinal_rank(i, ls.len())).collect())
            })
            .collect();

        for (si, rows) in self.cells.iter().enumerate() {
            for (pi, v) in rows.iter().enumerate() {
                if v.values.len() != n {
                    report.push(
                        "vector_length",
                        format!(
                            "cell ({}, {}) has {} entries, expected {}",
                            self.strategies[si],
                            self.prompts[pi],
                            v.values.len(),
                            n
                        ),
                    );
                    continue;
                }
                for (k, &x) in v.values.iter().enumerate() {
                    if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                        report.push(
                            "value_range",
                            format!(
                                "cell ({}, {}) metric {} value {} outside [0,1]",
                                self.strategies[si], self.prompts[pi], self.scale.metrics[k].name, x
                            ),
                        );
                    } else if let Some(levels) = &level_sets[k] {
                        if !levels.iter().any(|&l| l == x) {
                            report.push(
                                "ordinal_level",
                                format!(
                                    "cell ({}, {}) metric {} value {} not a mapped level",
                                    self.strategies[si],
                                    self.prompts[pi],
                                    self.scale.metrics[k].name,
                                    x
                                ),
                            );
                        }
                    }
                }
            }
        }
        report
    }

    /// Writes the (normalized) table in the evaluation CSV format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let mut header = vec!["prompt_id".to_string(), "dataset".to_string(), "strategy".to_string()];
        header.extend(self.scale.metric_names());
        w.write_record(&header).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        for (pi, prompt) in self.prompts.iter().enumerate() {
            for (si, strategy) in self.strategies.iter().enumerate() {
                let mut rec = vec![
                    prompt.clone(),
                    self.datasets[pi].clone().unwrap_or_default(),
                    strategy.clone(),
                ];
                for v in &self.cells[si][pi].values {
                    rec.push(format_value(*v));
                }
                w.write_record(&rec).map_err(|e| DataError::Parse {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?;
            }
        }
        w.flush().map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Shortest decimal that round-trips the f64 exactly.
fn format_value(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // `{}` on f64 prints the shortest representation that parses back exactly.
    format!("{v}")
}

/// Loads and normalizes an evaluation table from CSV plus a scale file.
pub fn load_evaluation_table(table_path: &Path, scale_path: &Path) -> Result<EvaluationTable> {
    let scale = ScaleSpec::from_json_file(scale_path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(table_path)
        .map_err(|e| DataError::Parse {
            path: table_path.display().to_string(),
            detail: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            path: table_path.display().to_string(),
            detail: e.to_string(),
        })?
        .clone();
    let expected_prefix = ["prompt_id", "dataset", "strategy"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected_prefix) {
        return Err(DataError::Parse {
            path: table_path.display().to_string(),
            detail: format!(
                "header must start with {:?}, found {:?}",
                expected_prefix,
                headers.iter().take(3).collect::<Vec<_>>()
            ),
        });
    }
    let metric_names = scale.metric_names();
    let file_metrics: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
    if file_metrics != metric_names {
        let unknown = file_metrics
            .iter()
            .find(|m| !metric_names.contains(m))
            .cloned()
            .unwrap_or_else(|| "<missing>".to_string());
        return Err(DataError::UnknownMetricColumn {
            column: unknown,
            expected: metric_names,
        });
    }

    let n = scale.metric_count();
    let mut prompts: Vec<String> = Vec::new();
    let mut datasets: Vec<Option<String>> = Vec::new();
    let mut prompt_index: HashMap<String, usize> = HashMap::new();
    let mut strategy_set: HashSet<String> = HashSet::new();
    let mut rows: Vec<(String, String, Vec<f64>)> = Vec::new();

    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Parse {
            path: table_path.display().to_string(),
            detail: e.to_string(),
        })?;
        if record.len() != 3 + n {
            return Err(DataError::Parse {
                path: table_path.display().to_string(),
                detail: format!("row {} has {} fields, expected {}", line + 2, record.len(), 3 + n),
            });
        }
        let prompt = record[0].to_string();
        let dataset = record[1].to_string();
        let strategy = record[2].to_string();
        let dataset = if dataset.is_empty() { None } else { Some(dataset) };

        match prompt_index.get(&prompt) {
            None => {
                prompt_index.insert(prompt.clone(), prompts.len());
                prompts.push(prompt.clone());
                datasets.push(dataset);
            }
            Some(&pi) => {
                if datasets[pi] != dataset {
                    return Err(DataError::ConflictingDataset {
                        prompt,
                        a: datasets[pi].clone().unwrap_or_default(),
                        b: dataset.unwrap_or_default(),
                    });
                }
            }
        }
        strategy_set.insert(strategy.clone());

        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            let field = &record[3 + k];
            let v: f64 = field.parse().map_err(|_| DataError::Parse {
                path: table_path.display().to_string(),
                detail: format!("row {}: metric {:?} value {:?} is not a number", line + 2, metric_names[k], field),
            })?;
            values.push(v);
        }
        rows.push((prompt, strategy, values));
    }

    if rows.is_empty() {
        return Err(DataError::EmptyInput(table_path.display().to_string()));
    }

    let mut strategies: Vec<String> = strategy_set.into_iter().collect();
    strategies.sort();
    let strategy_index: HashMap<String, usize> = strategies
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();

    let mut raw: Vec<Vec<Option<Vec<f64>>>> =
        vec![vec![None; prompts.len()]; strategies.len()];
    for (prompt, strategy, values) in rows {
        let pi = prompt_index[&prompt];
        let si = strategy_index[&strategy];
        if raw[si][pi].is_some() {
            return Err(DataError::DuplicateCell { strategy, prompt });
        }
        raw[si][pi] = Some(values);
    }
    let mut full = Vec::with_capacity(strategies.len());
    for (si, per_strategy) in raw.into_iter().enumerate() {
        let mut out = Vec::with_capacity(prompts.len());
        for (pi, cell) in per_strategy.into_iter().enumerate() {
            match cell {
                Some(v) => out.push(v),
                None => {
                    return Err(DataError::MissingCell {
                        strategy: strategies[si].clone(),
                        prompt: prompts[pi].clone(),
                    })
                }
            }
        }
        full.push(out);
    }

    EvaluationTable::from_raw(strategies, prompts, datasets, full, scale)
}

/// Token-level record for one generated text: tokens plus per-token
/// unconditional and prompt-conditioned log-probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRecord {
    pub prompt_id: String,
    pub strategy: String,
    pub tokens: Vec<String>,
    pub uncond_logprob: Vec<f64>,
    pub cond_logprob: Vec<f64>,
}

impl TokenRecord {
    fn check(&self, index: usize) -> Result<()> {
        if self.uncond_logprob.len() != self.tokens.len()
            || self.cond_logprob.len() != self.tokens.len()
        {
            return Err(DataError::TokenRecord {
                index,
                detail: format!(
                    "log-probability list lengths ({}, {}) differ from token count {}",
                    self.uncond_logprob.len(),
                    self.cond_logprob.len(),
                    self.tokens.len()
                ),
            });
        }
        for &lp in self.uncond_logprob.iter().chain(&self.cond_logprob) {
            if !lp.is_finite() || lp > 0.0 {
                return Err(DataError::TokenRecord {
                    index,
                    detail: format!("log-probability {lp} must be finite and <= 0"),
                });
            }
        }
        Ok(())
    }
}

/// Loads a JSON-lines TokenRecord file.
pub fn load_token_records(path: &Path) -> Result<Vec<TokenRecord>> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TokenRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            detail: format!("line {}: {}", i + 1, e),
        })?;
        record.check(i)?;
        records.push(record);
    }
    Ok(records)
}

/// Writes TokenRecords as JSON lines.
pub fn write_token_records(path: &Path, records: &[TokenRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    for r in records {
        let line = serde_json::to_string(r).expect("token record serializes");
        writeln!(file, "{line}").map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}

/// Two-rater ordinal ratings, one row per (prompt, strategy).
#[derive(Debug, Clone)]
pub struct RatingRow {
    pub prompt_id: String,
    pub strategy: String,
    pub rater_a: f64,
    pub rater_b: f64,
}

/// Loads the ratings CSV `prompt_id,strategy,rater_a,rater_b`.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?
        .clone();
    let expected = ["prompt_id", "strategy", "rater_a", "rater_b"];
    if headers.iter().ne(expected) {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            detail: format!("header must be {expected:?}"),
        });
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let parse = |field: &str| -> Result<f64> {
            field.parse().map_err(|_| DataError::Parse {
                path: path.display().to_string(),
                detail: format!("row {}: {:?} is not a number", line + 2, field),
            })
        };
        rows.push(RatingRow {
            prompt_id: record[0].to_string(),
            strategy: record[1].to_string(),
            rater_a: parse(&record[2])?,
            rater_b: parse(&record[3])?,
        });
    }
    if rows.is_empty() {
        return Err(DataError::EmptyInput(path.display().to_string()));
    }
    Ok(rows)
}

/// Anchors as a deterministic JSON-friendly map for the report.
pub fn anchors_map(anchors: &[NormalizationAnchor]) -> BTreeMap<String, serde_json::Value> {
    anchors
        .iter()
        .map(|a| {
            (
                a.metric.clone(),
                serde_json::json!({
                    "method": a.method,
                    "min": a.min,
                    "max": a.max,
                }),
            )
        })
        .collect()
}

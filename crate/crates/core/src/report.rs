//! Intercomparison: collates check verdicts and metric records from several
//! models into one report with a portrait matrix and pairwise deltas, and
//! renders it as JSON, CSV or markdown.
//!
//! The report has no aggregate score. Every evaluated value is shown, and a
//! value that was not evaluated is an explicit `null`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calendar::Season;
use crate::dataset::Provenance;
use crate::error::{Error, Result};
use crate::metrics::{portrait_normalize, MedianPolicy, MetricKey, MetricRecord, MetricValue};
use crate::sanity::CheckResult;

pub const REPORT_VERSION: u32 = 1;
pub const SUITE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce a run: the models involved and every
/// parameter in effect.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    /// Only present when the caller supplies one, so that outputs stay
    /// byte-identical across reruns.
    pub timestamp: Option<String>,
    pub suite_version: String,
    pub models: BTreeMap<String, Provenance>,
    pub config: BTreeMap<String, String>,
}

impl RunManifest {
    /// A manifest whose run id is derived from the configuration and models.
    pub fn new(config: BTreeMap<String, String>, models: impl IntoIterator<Item = Provenance>) -> Self {
        let mut m = Self {
            run_id: String::new(),
            timestamp: None,
            suite_version: SUITE_VERSION.to_string(),
            models: models.into_iter().map(|p| (p.model_id.clone(), p)).collect(),
            config,
        };
        m.run_id = m.content_id();
        m
    }

    pub fn with_timestamp(mut self, timestamp: impl Into<String>) -> Self {
        self.timestamp = Some(timestamp.into());
        self
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON of the
    /// configuration and model provenance.
    pub fn content_id(&self) -> String {
        let body = serde_json::to_vec(&(&self.suite_version, &self.models, &self.config))
            .expect("maps of strings always serialize");
        hex::encode(Sha256::digest(body))[..16].to_string()
    }

    /// Union of several manifests. Disagreeing provenance for one model is a
    /// collation error. Configuration keys on which the runs disagree are kept
    /// per run as `<run_id>/<key>`.
    pub fn merge(manifests: &[RunManifest]) -> Result<RunManifest> {
        let mut unique: Vec<RunManifest> = Vec::new();
        for m in manifests {
            if !unique.contains(m) {
                unique.push(m.clone());
            }
        }
        let manifests = unique.as_slice();
        match manifests {
            [] => return Ok(RunManifest::new(BTreeMap::new(), [])),
            [one] => return Ok(one.clone()),
            _ => {}
        }
        let mut models: BTreeMap<String, Provenance> = BTreeMap::new();
        let mut config: BTreeMap<String, String> = BTreeMap::new();
        let mut split: BTreeSet<String> = BTreeSet::new();
        for m in manifests {
            for (id, p) in &m.models {
                if let Some(prev) = models.insert(id.clone(), p.clone()) {
                    if &prev != p {
                        return Err(Error::Collation(format!("provenance of model `{id}`")));
                    }
                }
            }
        }
        for m in manifests {
            for (k, v) in &m.config {
                let disagree = manifests.iter().any(|o| o.config.get(k) != Some(v));
                if disagree {
                    split.insert(k.clone());
                } else {
                    config.insert(k.clone(), v.clone());
                }
            }
        }
        for m in manifests {
            for k in &split {
                if let Some(v) = m.config.get(k) {
                    config.insert(format!("{}/{k}", m.run_id), v.clone());
                }
            }
        }
        let stamps: BTreeSet<&Option<String>> = manifests.iter().map(|m| &m.timestamp).collect();
        let mut merged = RunManifest::new(config, models.into_values());
        let runs: BTreeSet<&str> = manifests.iter().map(|m| m.run_id.as_str()).collect();
        let joined = runs.into_iter().collect::<Vec<_>>().join("+");
        merged.run_id = hex::encode(Sha256::digest(joined.as_bytes()))[..16].to_string();
        if stamps.len() == 1 {
            merged.timestamp = manifests[0].timestamp.clone();
        }
        Ok(merged)
    }
}

/// A check verdict attributed to a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub model_id: String,
    pub result: CheckResult,
}

impl CheckEntry {
    pub fn new(model_id: impl Into<String>, result: CheckResult) -> Self {
        Self {
            model_id: model_id.into(),
            result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRow {
    pub model_id: String,
    /// Aligned with `IntercomparisonReport::check_ids`.
    pub results: Vec<Option<CheckResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricColumn {
    pub variable: String,
    pub season: Season,
    pub region: String,
    pub metric_id: String,
    pub units: String,
}

impl MetricColumn {
    pub fn key(&self) -> MetricKey {
        MetricKey {
            variable: self.variable.clone(),
            season: self.season,
            region: self.region.clone(),
            metric_id: self.metric_id.clone(),
        }
    }
}

/// A present metric value. Wrapping it keeps an absent cell (`null`)
/// distinct from a NaN value (`{"value": null}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricCell {
    pub value: MetricValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRow {
    pub model_id: String,
    /// Aligned with `IntercomparisonReport::metric_columns`.
    pub values: Vec<Option<MetricCell>>,
}

/// Median-normalized errors, models × columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortraitMatrix {
    pub metric_id: String,
    pub median_policy: MedianPolicy,
    pub models: Vec<String>,
    pub columns: Vec<MetricKey>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Columns left out, with the reason.
    pub omitted: Vec<(MetricKey, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDelta {
    pub key: MetricKey,
    pub a: MetricValue,
    pub b: MetricValue,
    /// `a - b`, elementwise for vectors of equal length.
    pub delta: Option<MetricValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckPair {
    pub check_id: String,
    pub passed_a: bool,
    pub passed_b: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairwiseDelta {
    pub model_a: String,
    pub model_b: String,
    pub metrics: Vec<MetricDelta>,
    pub checks: Vec<CheckPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntercomparisonReport {
    pub report_version: u32,
    pub manifest: RunManifest,
    pub models: Vec<String>,
    pub check_ids: Vec<String>,
    pub check_table: Vec<CheckRow>,
    pub metric_columns: Vec<MetricColumn>,
    pub metric_table: Vec<MetricRow>,
    pub portrait: Option<PortraitMatrix>,
    pub pairwise_deltas: Vec<PairwiseDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateOptions {
    /// Scalar metric that feeds the portrait.
    pub portrait_metric: String,
    pub median_policy: MedianPolicy,
    /// Ordered pairs to difference; `None` means every pair in model order.
    pub pairs: Option<Vec<(String, String)>>,
}

impl Default for CollateOptions {
    fn default() -> Self {
        Self {
            portrait_metric: "rmse".into(),
            median_policy: MedianPolicy::default(),
            pairs: None,
        }
    }
}

/// Joins checks and metric records from any number of models on their keys.
/// Input order does not matter. Exact duplicates are merged; two different
/// values for one key are an error naming the key.
pub fn collate(
    checks: &[CheckEntry],
    metrics: &[MetricRecord],
    manifests: &[RunManifest],
    options: &CollateOptions,
) -> Result<IntercomparisonReport> {
    let manifest = RunManifest::merge(manifests)?;
    let mut models: BTreeSet<String> = manifest.models.keys().cloned().collect();

    let mut check_map: BTreeMap<(String, String), &CheckResult> = BTreeMap::new();
    for e in checks {
        models.insert(e.model_id.clone());
        let k = (e.model_id.clone(), e.result.check_id.clone());
        if let Some(prev) = check_map.insert(k, &e.result) {
            if !same_json(prev, &e.result) {
                return Err(Error::Collation(format!("{}/{}", e.model_id, e.result.check_id)));
            }
        }
    }

    let mut units: BTreeMap<MetricKey, &str> = BTreeMap::new();
    let mut metric_map: BTreeMap<(String, MetricKey), &MetricValue> = BTreeMap::new();
    for r in metrics {
        models.insert(r.model_id.clone());
        let key = r.key();
        if let Some(u) = units.insert(key.clone(), &r.units) {
            if u != r.units {
                return Err(Error::Collation(format!("{key} (units `{u}` vs `{}`)", r.units)));
            }
        }
        if let Some(prev) = metric_map.insert((r.model_id.clone(), key.clone()), &r.value) {
            if !prev.bit_eq(&r.value) {
                return Err(Error::Collation(format!("{}:{key}", r.model_id)));
            }
        }
    }

    let models: Vec<String> = models.into_iter().collect();
    let check_ids: Vec<String> = check_map
        .keys()
        .map(|(_, c)| c.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let check_table = models
        .iter()
        .map(|m| CheckRow {
            model_id: m.clone(),
            results: check_ids
                .iter()
                .map(|c| check_map.get(&(m.clone(), c.clone())).map(|r| (*r).clone()))
                .collect(),
        })
        .collect();
    let metric_columns: Vec<MetricColumn> = units
        .iter()
        .map(|(k, u)| MetricColumn {
            variable: k.variable.clone(),
            season: k.season,
            region: k.region.clone(),
            metric_id: k.metric_id.clone(),
            units: u.to_string(),
        })
        .collect();
    let metric_table = models
        .iter()
        .map(|m| MetricRow {
            model_id: m.clone(),
            values: units
                .keys()
                .map(|k| {
                    metric_map
                        .get(&(m.clone(), k.clone()))
                        .map(|v| MetricCell { value: (*v).clone() })
                })
                .collect(),
        })
        .collect();

    let mut report = IntercomparisonReport {
        report_version: REPORT_VERSION,
        manifest,
        models,
        check_ids,
        check_table,
        metric_columns,
        metric_table,
        portrait: None,
        pairwise_deltas: Vec::new(),
    };
    report.portrait = build_portrait(&report, &options.portrait_metric, options.median_policy)?;
    let pairs = match &options.pairs {
        Some(p) => p.clone(),
        None => {
            let m = &report.models;
            (0..m.len())
                .flat_map(|i| (i + 1..m.len()).map(move |j| (m[i].clone(), m[j].clone())))
                .collect()
        }
    };
    report.pairwise_deltas = pairs
        .iter()
        .map(|(a, b)| pairwise_delta(&report, a, b))
        .collect::<Result<_>>()?;
    Ok(report)
}

fn same_json<T: Serialize>(a: &T, b: &T) -> bool {
    serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}

fn build_portrait(
    report: &IntercomparisonReport,
    metric_id: &str,
    policy: MedianPolicy,
) -> Result<Option<PortraitMatrix>> {
    let cols: Vec<usize> = report
        .metric_columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.metric_id == metric_id)
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Ok(None);
    }
    let scalar = |row: &MetricRow, c: usize| row.values[c].as_ref().and_then(|cell| cell.value.as_scalar());
    let mut kept = Vec::new();
    let mut columns = Vec::new();
    let mut omitted = Vec::new();
    for &c in &cols {
        let column: Vec<Vec<Option<f64>>> = report.metric_table.iter().map(|r| vec![scalar(r, c)]).collect();
        let key = report.metric_columns[c].key();
        match portrait_normalize(&column, policy) {
            Ok(v) => {
                kept.push(v);
                columns.push(key);
            }
            Err(e @ (Error::InsufficientData(_) | Error::UndefinedNormalization(_))) => {
                omitted.push((key, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let values = (0..report.models.len())
        .map(|m| kept.iter().map(|col| col[m][0]).collect())
        .collect();
    Ok(Some(PortraitMatrix {
        metric_id: metric_id.to_string(),
        median_policy: policy,
        models: report.models.clone(),
        columns,
        values,
        omitted,
    }))
}

/// Differences `a - b` for every metric both models have, and the pass
/// flags of every check both ran.
pub fn pairwise_delta(report: &IntercomparisonReport, model_a: &str, model_b: &str) -> Result<PairwiseDelta> {
    let ia = report.model_index(model_a)?;
    let ib = report.model_index(model_b)?;
    let (ra, rb) = (&report.metric_table[ia], &report.metric_table[ib]);
    let metrics = report
        .metric_columns
        .iter()
        .enumerate()
        .filter_map(|(c, col)| {
            let a = ra.values[c].as_ref()?.value.clone();
            let b = rb.values[c].as_ref()?.value.clone();
            let delta = match (&a, &b) {
                (MetricValue::Scalar(x), MetricValue::Scalar(y)) => Some(MetricValue::Scalar(x - y)),
                (MetricValue::Vector(x), MetricValue::Vector(y)) if x.len() == y.len() => {
                    Some(MetricValue::Vector(x.iter().zip(y).map(|(p, q)| p - q).collect()))
                }
                _ => None,
            };
            Some(MetricDelta {
                key: col.key(),
                a,
                b,
                delta,
            })
        })
        .collect();
    let (ca, cb) = (&report.check_table[ia], &report.check_table[ib]);
    let checks = report
        .check_ids
        .iter()
        .enumerate()
        .filter_map(|(i, id)| {
            Some(CheckPair {
                check_id: id.clone(),
                passed_a: ca.results[i].as_ref()?.passed,
                passed_b: cb.results[i].as_ref()?.passed,
            })
        })
        .collect();
    Ok(PairwiseDelta {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        metrics,
        checks,
    })
}

impl IntercomparisonReport {
    pub fn model_index(&self, model_id: &str) -> Result<usize> {
        self.models
            .binary_search_by(|m| m.as_str().cmp(model_id))
            .map_err(|_| Error::UnknownModel(model_id.to_string()))
    }

    /// The check entries this report was built from.
    pub fn check_entries(&self) -> Vec<CheckEntry> {
        self.check_table
            .iter()
            .flat_map(|row| {
                row.results
                    .iter()
                    .flatten()
                    .map(|r| CheckEntry::new(row.model_id.clone(), r.clone()))
            })
            .collect()
    }

    /// The metric records this report was built from, model by model in
    /// column order.
    pub fn metric_records(&self) -> Vec<MetricRecord> {
        self.metric_table
            .iter()
            .flat_map(|row| {
                row.values.iter().zip(&self.metric_columns).filter_map(|(cell, col)| {
                    cell.as_ref().map(|cell| MetricRecord {
                        model_id: row.model_id.clone(),
                        variable: col.variable.clone(),
                        season: col.season,
                        region: col.region.clone(),
                        metric_id: col.metric_id.clone(),
                        value: cell.value.clone(),
                        units: col.units.clone(),
                    })
                })
            })
            .collect()
    }

    /// True when every check that was run passed.
    pub fn all_checks_passed(&self) -> bool {
        self.check_table
            .iter()
            .all(|r| r.results.iter().flatten().all(|c| c.passed))
    }

    /// Parses a report, rejecting unknown fields and other versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let report: IntercomparisonReport =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))?;
        if report.report_version != REPORT_VERSION {
            return Err(Error::Format(format!(
                "report version {} (expected {REPORT_VERSION})",
                report.report_version
            )));
        }
        Ok(report)
    }

    /// Re-collates several reports into one.
    pub fn combine(reports: &[IntercomparisonReport], options: &CollateOptions) -> Result<Self> {
        let checks: Vec<CheckEntry> = reports.iter().flat_map(|r| r.check_entries()).collect();
        let metrics: Vec<MetricRecord> = reports.iter().flat_map(|r| r.metric_records()).collect();
        let manifests: Vec<RunManifest> = reports.iter().map(|r| r.manifest.clone()).collect();
        collate(&checks, &metrics, &manifests, options)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::Config(format!("unknown format `{other}` (json, csv, markdown)"))),
        }
    }
}

/// Renders the report. JSON output is canonical: same report, same bytes.
pub fn render(report: &IntercomparisonReport, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Serialization(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => render_csv(report),
        Format::Markdown => Ok(render_markdown(report)),
    }
}

/// Writes the rendering to `out` and returns the number of bytes written.
pub fn emit(report: &IntercomparisonReport, format: Format, out: &mut dyn Write) -> Result<usize> {
    let text = render(report, format)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(text.len())
}

pub fn emit_to_path(report: &IntercomparisonReport, format: Format, path: &Path) -> Result<usize> {
    let mut f = std::fs::File::create(path)?;
    emit(report, format, &mut f)
}

fn value_text(v: &MetricValue) -> String {
    match v {
        MetricValue::Scalar(x) if x.is_nan() => "NaN".into(),
        MetricValue::Scalar(x) => x.to_string(),
        MetricValue::Vector(_) => serde_json::to_string(v).expect("vectors serialize"),
    }
}

fn render_csv(report: &IntercomparisonReport) -> Result<String> {
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model_id",
        "variable",
        "season",
        "region",
        "metric_id",
        "units",
        "value",
    ])
    .map_err(err)?;
    for r in report.metric_records() {
        w.write_record([
            r.model_id.as_str(),
            &r.variable,
            r.season.as_str(),
            &r.region,
            &r.metric_id,
            &r.units,
            &value_text(&r.value),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn render_markdown(report: &IntercomparisonReport) -> String {
    let mut s = String::new();
    let m = &report.manifest;
    let _ = writeln!(s, "# Intercomparison report\n");
    let _ = writeln!(s, "- run id: `{}`", m.run_id);
    let _ = writeln!(s, "- suite version: {}", m.suite_version);
    if let Some(t) = &m.timestamp {
        let _ = writeln!(s, "- timestamp: {t}");
    }
    let _ = writeln!(s, "- models: {}", report.models.join(", "));
    let _ = writeln!(s, "\nCells marked `n/a` were not evaluated.\n");

    if !report.check_ids.is_empty() {
        let _ = writeln!(s, "## Checks\n");
        let _ = writeln!(
            s,
            "| model | {} |",
            report
                .check_ids
                .iter()
                .map(|c| md_escape(c))
                .collect::<Vec<_>>()
                .join(" | ")
        );
        let _ = writeln!(s, "|---|{}", "---|".repeat(report.check_ids.len()));
        for row in &report.check_table {
            let cells: Vec<String> = row
                .results
                .iter()
                .map(|r| match r {
                    Some(r) => format!("{} ({:.3e})", if r.passed { "PASS" } else { "FAIL" }, r.statistic),
                    None => "n/a".into(),
                })
                .collect();
            let _ = writeln!(s, "| {} | {} |", md_escape(&row.model_id), cells.join(" | "));
        }
        s.push('\n');
    }

    if !report.metric_columns.is_empty() {
        let _ = writeln!(s, "## Metrics\n");
        let _ = writeln!(s, "| model | variable | season | region | metric | units | value |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for row in &report.metric_table {
            for (cell, col) in row.values.iter().zip(&report.metric_columns) {
                let v = cell
                    .as_ref()
                    .map_or_else(|| "n/a".to_string(), |c| value_text(&c.value));
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    md_escape(&row.model_id),
                    md_escape(&col.variable),
                    col.season,
                    md_escape(&col.region),
                    md_escape(&col.metric_id),
                    md_escape(&col.units),
                    v
                );
            }
        }
        s.push('\n');
    }

    if let Some(p) = &report.portrait {
        let _ = writeln!(s, "## Portrait ({}, relative to column median)\n", p.metric_id);
        if p.columns.is_empty() {
            let _ = writeln!(s, "No column had enough models.\n");
        } else {
            let heads: Vec<String> = p.columns.iter().map(|k| md_escape(&k.to_string())).collect();
            let _ = writeln!(s, "| model | {} |", heads.join(" | "));
            let _ = writeln!(s, "|---|{}", "---|".repeat(p.columns.len()));
            for (model, row) in p.models.iter().zip(&p.values) {
                let cells: Vec<String> = row
                    .iter()
                    .map(|v| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:+.3}")))
                    .collect();
                let _ = writeln!(s, "| {} | {} |", md_escape(model), cells.join(" | "));
            }
            s.push('\n');
        }
        for (k, why) in &p.omitted {
            let _ = writeln!(s, "- omitted `{k}`: {why}");
        }
        if !p.omitted.is_empty() {
            s.push('\n');
        }
    }

    for d in &report.pairwise_deltas {
        let _ = writeln!(s, "## {} minus {}\n", md_escape(&d.model_a), md_escape(&d.model_b));
        if !d.metrics.is_empty() {
            let _ = writeln!(s, "| metric | a | b | a - b |");
            let _ = writeln!(s, "|---|---|---|---|");
            for m in &d.metrics {
                let delta = m.delta.as_ref().map_or_else(|| "n/a".to_string(), value_text);
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} |",
                    md_escape(&m.key.to_string()),
                    value_text(&m.a),
                    value_text(&m.b),
                    delta
                );
            }
            s.push('\n');
        }
        for c in &d.checks {
            let mark = |p: bool| if p { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "- {}: {} / {}", c.check_id, mark(c.passed_a), mark(c.passed_b));
        }
        if !d.checks.is_empty() {
            s.push('\n');
        }
    }
    s
}

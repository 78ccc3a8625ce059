//! On-disk formats: dataset and boundary CSV, and the JSON documents.
//!
//! JSON numbers are written by `serde_json`, which emits the shortest decimal
//! that parses back to the same `f64`. Every document written carries
//! `tool_version`; readers ignore it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rawls_core::eval::GridPoint;
use rawls_core::oracle::FiniteDistribution;
use rawls_core::{
    EvaluationReport, Guarantee, LabeledDataset, LinearThresholdModel, Model, MomentTable, Moments,
    ScoreThresholdModel, SubPopId, TOOL_VERSION,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Failure, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Failure::io(path, e))
}

/// Reads `z,y,f1,...,fd` (or `z,y,score`). `p` is the largest group seen.
pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 3 || names[0] != "z" || names[1] != "y" {
        return Err(Failure::parse(format!(
            "{}: header must be `z,y,f1,...,fd` or `z,y,score`, got `{}`",
            path.display(),
            names.join(",")
        )));
    }
    let d = names.len() - 2;
    let mut rows: Vec<(usize, u8, Vec<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |what: String| Failure::parse(format!("{}:{line}: {what}", path.display()));
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != names.len() {
            return Err(bad(format!("expected {} fields, found {}", names.len(), record.len())));
        }
        let z: usize = record[0]
            .trim()
            .parse()
            .ok()
            .filter(|&z| z >= 1)
            .ok_or_else(|| bad(format!("group {:?} is not a positive integer", &record[0])))?;
        let y: u8 = match record[1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label {other:?} is not 0 or 1"))),
        };
        let features = record
            .iter()
            .skip(2)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(format!("feature {v:?} is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((z, y, features));
    }
    let p = rows.iter().map(|r| r.0).max().unwrap_or(1);
    let mut data = LabeledDataset::new(p, d);
    for (z, y, f) in rows {
        data.push(&f, y, z).expect("validated row");
    }
    Ok(data)
}

pub fn write_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Failure::io(path, e);
    let mut header = vec!["z".to_string(), "y".to_string()];
    if data.d() == 1 {
        header.push("score".into());
    } else {
        header.extend((1..=data.d()).map(|k| format!("f{k}")));
    }
    w.write_record(&header).map_err(io)?;
    for (x, y, z) in data.rows() {
        let mut rec = vec![z.to_string(), y.to_string()];
        rec.extend(x.iter().map(f64::to_string));
        w.write_record(&rec).map_err(io)?;
    }
    let inner = w.into_inner().map_err(|e| Failure::io(path, e.error()))?;
    finish(inner, path)
}

pub fn write_grid(path: &Path, grid: &[GridPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| Failure::io(path, e);
    w.write_record(["x", "y", "label"]).map_err(io)?;
    for g in grid {
        w.write_record([g.x.to_string(), g.y.to_string(), g.label.to_string()])
            .map_err(io)?;
    }
    let inner = w.into_inner().map_err(|e| Failure::io(path, e.error()))?;
    finish(inner, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::io(path, e))?;
    w.write_all(b"\n").map_err(|e| Failure::io(path, e))?;
    finish(w, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
}

fn version() -> String {
    TOOL_VERSION.to_string()
}

/// `{y, z}` reference to a sub-population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubPopRef {
    pub y: u8,
    pub z: usize,
}

impl From<SubPopId> for SubPopRef {
    fn from(id: SubPopId) -> Self {
        Self {
            y: id.label,
            z: id.group,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPopStats {
    pub y: u8,
    pub z: usize,
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    #[serde(default = "version")]
    pub tool_version: String,
    pub p: usize,
    pub d: usize,
    pub subpops: Vec<SubPopStats>,
}

impl StatsFile {
    pub fn from_table(t: &MomentTable) -> Self {
        let d = t.d();
        Self {
            tool_version: version(),
            p: t.p(),
            d,
            subpops: t
                .entries()
                .map(|(id, m)| SubPopStats {
                    y: id.label,
                    z: id.group,
                    count: m.count,
                    mean: m.mean.iter().copied().collect(),
                    cov: (0..d).map(|r| m.cov.row(r).iter().copied().collect()).collect(),
                })
                .collect(),
        }
    }

    /// Builds and validates the moment table.
    pub fn to_table(&self) -> Result<MomentTable> {
        if self.p == 0 || self.d == 0 {
            return Err(Failure::parse("stats file needs p >= 1 and d >= 1"));
        }
        let mut t = MomentTable::new(self.p, self.d);
        for s in &self.subpops {
            let id = SubPopId::new(s.y, s.z, self.p).map_err(|e| Failure::parse(e.to_string()))?;
            let shape_ok = s.mean.len() == self.d && s.cov.len() == self.d && s.cov.iter().all(|r| r.len() == self.d);
            if !shape_ok {
                return Err(Failure::parse(format!(
                    "sub-population {id}: mean/cov do not match d = {}",
                    self.d
                )));
            }
            let cov = DMatrix::from_fn(self.d, self.d, |r, c| s.cov[r][c]);
            let previous = t.insert(id, Moments::new(s.count, DVector::from_vec(s.mean.clone()), cov));
            if previous.is_some() {
                return Err(Failure::parse(format!("sub-population {id} listed twice")));
            }
        }
        t.ensure_valid()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Threshold,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fat,
    Flat1,
    Flat2,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default = "version")]
    pub tool_version: String,
    #[serde(rename = "type")]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    pub b: f64,
    pub r_star: Option<f64>,
    /// Label-0 group of the binding pair.
    pub j_star: Option<usize>,
    /// Label-1 group of the binding pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_star: Option<usize>,
    pub method: Method,
}

impl ModelFile {
    pub fn from_model(model: &Model, method: Method, k_star: Option<usize>) -> Self {
        let g = model.guarantee();
        let (kind, w, b) = match model {
            Model::Threshold(m) => (ModelKind::Threshold, None, m.b),
            Model::Linear(m) => (ModelKind::Linear, Some(m.w().to_vec()), m.b),
        };
        Self {
            tool_version: version(),
            kind,
            w,
            b,
            r_star: g.map(|g| g.r_star),
            j_star: g.map(|g| g.j_star),
            k_star,
            method,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let guarantee = match (self.r_star, self.j_star) {
            (Some(r_star), Some(j_star)) => Some(Guarantee { r_star, j_star }),
            _ => None,
        };
        if !self.b.is_finite() {
            return Err(Failure::parse("model threshold b must be finite"));
        }
        match (self.kind, &self.w) {
            (ModelKind::Threshold, None) => Ok(ScoreThresholdModel { b: self.b, guarantee }.into()),
            (ModelKind::Linear, Some(w)) => {
                let m = LinearThresholdModel::new(w.clone(), self.b).map_err(|e| Failure::parse(e.to_string()))?;
                Ok(match guarantee {
                    Some(g) => m.with_guarantee(g),
                    None => m,
                }
                .into())
            }
            (ModelKind::Threshold, Some(_)) => Err(Failure::parse("threshold model must not carry `w`")),
            (ModelKind::Linear, None) => Err(Failure::parse("linear model needs `w`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassEntry {
    pub x: String,
    pub y: u8,
    pub z: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFile {
    pub points: Vec<String>,
    pub p: usize,
    pub mass: Vec<MassEntry>,
}

impl DistributionFile {
    pub fn to_distribution(&self) -> Result<FiniteDistribution> {
        Ok(FiniteDistribution::new(
            self.points.clone(),
            self.p,
            self.mass.iter().map(|m| (m.x.as_str(), m.y, m.z, m.prob)),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubPopOutcome {
    pub y: u8,
    pub z: usize,
    pub count: u64,
    /// `null` for an empty sub-population.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalFile {
    pub tool_version: String,
    pub rows: u64,
    pub max_error: f64,
    pub argmax_set: Vec<SubPopRef>,
    pub accuracy: f64,
    pub fpr_range: Option<[f64; 2]>,
    pub fnr_range: Option<[f64; 2]>,
    pub per_subpop: Vec<SubPopOutcome>,
    pub empty_subpops: Vec<SubPopRef>,
    /// Certified bound carried by the model, if any.
    pub certified_r_star: Option<f64>,
}

impl EvalFile {
    pub fn new(r: &EvaluationReport, certified_r_star: Option<f64>) -> Self {
        Self {
            tool_version: version(),
            rows: r.counts.values().sum(),
            max_error: r.max_error,
            argmax_set: r.argmax_set.iter().map(|&id| id.into()).collect(),
            accuracy: r.accuracy,
            fpr_range: r.fpr_range.map(|(a, b)| [a, b]),
            fnr_range: r.fnr_range.map(|(a, b)| [a, b]),
            per_subpop: r
                .counts
                .iter()
                .map(|(id, &count)| SubPopOutcome {
                    y: id.label,
                    z: id.group,
                    count,
                    error: r.per_subpop_error.get(id).copied(),
                })
                .collect(),
            empty_subpops: r.empty_subpops.iter().map(|&id| id.into()).collect(),
            certified_r_star,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubPopRate {
    pub y: u8,
    pub z: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumOut {
    /// Label per point, aligned with `points`.
    pub labels: Vec<u8>,
    pub rates: Vec<SubPopRate>,
    pub max_error: f64,
    /// Constant on the support.
    pub trivial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCheck {
    /// `grid` maximises over the simplex grid; `uniform` evaluates the uniform
    /// weights only (used when the grid would be too large).
    pub method: &'static str,
    pub resolution: Option<usize>,
    pub c: Vec<f64>,
    pub value: f64,
    /// `r_star - value`; never negative up to rounding.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleFile {
    pub tool_version: String,
    pub points: Vec<String>,
    pub p: usize,
    pub r_star: f64,
    pub optima: Vec<OptimumOut>,
    pub argmax_sets: Vec<Vec<SubPopRef>>,
    /// More optima exist than were listed.
    pub truncated: bool,
    pub dual_value_check: DualCheck,
    /// Minimax over randomised classifiers (`p = 1` only).
    pub randomized_r_star: Option<f64>,
}

impl OracleFile {
    pub fn version() -> String {
        version()
    }
}

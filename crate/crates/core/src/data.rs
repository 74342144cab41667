//! Longitudinal cohorts: trajectories, file formats and the time grid used by
//! the discrete hazard head.
//!
//! Two on-disk layouts are supported:
//!
//! * CSV, long format: one row per `(id, k)` with columns
//!   `id, k, x_0 .. x_{d-1}, t`, plus an outcomes file `id, time, event`
//!   stored next to it as `<stem>_outcomes.csv`.
//! * JSON lines: one object per individual with `id`, `x` (array of arrays),
//!   `t`, `time`, `event`, and optionally `truth` (treatment-sequence string
//!   to survival probabilities) with `truth_tau` giving the time points.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One individual's covariate and treatment history with a censored outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    /// `X(0..=K)`, each of length `d`.
    pub covariates: Vec<Vec<f64>>,
    /// `T(0..=K)`, each 0 or 1.
    pub treatments: Vec<u8>,
    /// `min(Y, C)`.
    pub observed_time: f64,
    pub event: bool,
}

impl Trajectory {
    pub fn last_index(&self) -> usize {
        self.treatments.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.covariates.first().map(Vec::len).unwrap_or(0)
    }
}

/// Ground-truth potential survival curves keyed by `(id, sequence)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    /// Time points `τ_1..τ_m` the curves are evaluated at.
    pub tau: Vec<f64>,
    pub curves: BTreeMap<(String, String), Vec<f64>>,
}

impl GroundTruth {
    pub fn curve(&self, id: &str, sequence: &str) -> Option<&[f64]> {
        self.curves
            .get(&(id.to_string(), sequence.to_string()))
            .map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub trajectories: Vec<Trajectory>,
    pub d: usize,
    /// Last time index `K`.
    pub k: usize,
    pub ground_truth: Option<GroundTruth>,
}

impl Cohort {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::Data("cohort has no trajectories".into()))?;
        let cohort = Cohort {
            d: first.dim(),
            k: first.last_index(),
            trajectories,
            ground_truth: None,
        };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Data("covariate dimension must be positive".into()));
        }
        for tr in &self.trajectories {
            let bad = |what: String| Error::Data(format!("individual {}: {what}", tr.id));
            if tr.treatments.len() != self.k + 1 || tr.covariates.len() != self.k + 1 {
                return Err(bad(format!(
                    "expected {} time steps, got {} covariate and {} treatment entries",
                    self.k + 1,
                    tr.covariates.len(),
                    tr.treatments.len()
                )));
            }
            if let Some(x) = tr.covariates.iter().find(|x| x.len() != self.d) {
                return Err(bad(format!(
                    "covariate dimension {} differs from cohort dimension {}",
                    x.len(),
                    self.d
                )));
            }
            if tr.treatments.iter().any(|&t| t > 1) {
                return Err(bad("treatments must be 0 or 1".into()));
            }
            if !(tr.observed_time >= 0.0 && tr.observed_time.is_finite()) {
                return Err(bad(format!("observed time {} is invalid", tr.observed_time)));
            }
            if tr.covariates.iter().flatten().any(|v| !v.is_finite()) {
                return Err(bad("non-finite covariate".into()));
            }
        }
        if let Some(truth) = &self.ground_truth {
            for ((id, seq), curve) in &truth.curves {
                if curve.len() != truth.tau.len() {
                    return Err(Error::Data(format!(
                        "truth for {id}/{seq} has {} points, expected {}",
                        curve.len(),
                        truth.tau.len()
                    )));
                }
                let mut prev = 1.0;
                for &s in curve {
                    if !(0.0..=1.0).contains(&s) || s > prev + 1e-12 {
                        return Err(Error::Data(format!(
                            "truth for {id}/{seq} is not a survival curve"
                        )));
                    }
                    prev = s;
                }
            }
        }
        Ok(())
    }

    pub fn max_time(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|t| t.observed_time)
            .fold(0.0, f64::max)
    }

    /// Sub-cohort with the given members (ground truth is carried over).
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        let trajectories: Vec<Trajectory> =
            indices.iter().map(|&i| self.trajectories[i].clone()).collect();
        let ground_truth = self.ground_truth.as_ref().map(|gt| {
            let keep: std::collections::BTreeSet<&str> =
                trajectories.iter().map(|t| t.id.as_str()).collect();
            GroundTruth {
                tau: gt.tau.clone(),
                curves: gt
                    .curves
                    .iter()
                    .filter(|((id, _), _)| keep.contains(id.as_str()))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            }
        });
        Cohort {
            trajectories,
            d: self.d,
            k: self.k,
            ground_truth,
        }
    }
}

/// Render a treatment sequence as a bit string such as `"0110"`.
pub fn sequence_key(seq: &[u8]) -> String {
    seq.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

pub fn parse_sequence(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::Data(format!(
                "treatment sequence {s:?} contains {other:?}; expected only 0 and 1"
            ))),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json" => Ok(Format::Jsonl),
            other => Err(Error::Config(format!("unknown cohort format {other:?}"))),
        }
    }
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// Outcomes file paired with a long-format CSV.
pub fn outcomes_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("cohort");
    path.with_file_name(format!("{stem}_outcomes.csv"))
}

pub fn load_cohort(path: &Path, format: Format) -> Result<Cohort> {
    match format {
        Format::Csv => load_csv(path, &outcomes_path(path)),
        Format::Jsonl => load_jsonl(path),
    }
}

pub fn save_cohort(cohort: &Cohort, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => save_csv(cohort, path, &outcomes_path(path)),
        Format::Jsonl => save_jsonl(cohort, path),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    x: Vec<Vec<f64>>,
    t: Vec<f64>,
    time: f64,
    event: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_tau: Option<Vec<f64>>,
}

fn binary_field(path: &Path, row: usize, field: &str, v: f64) -> Result<u8> {
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Schema {
            path: path.display().to_string(),
            row,
            field: field.to_string(),
            reason: format!("expected 0 or 1, got {v}"),
        })
    }
}

fn load_jsonl(path: &Path) -> Result<Cohort> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut trajectories = Vec::new();
    let mut truth = GroundTruth::default();
    let mut has_truth = false;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let row = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |field: &str, reason: String| Error::Schema {
            path: path.display().to_string(),
            row,
            field: field.to_string(),
            reason,
        };
        let rec: JsonRecord =
            serde_json::from_str(&line).map_err(|e| schema("<record>", e.to_string()))?;
        let treatments = rec
            .t
            .iter()
            .map(|&v| binary_field(path, row, "t", v))
            .collect::<Result<Vec<_>>>()?;
        let event = binary_field(path, row, "event", rec.event)? == 1;
        if !(rec.time >= 0.0) {
            return Err(schema("time", format!("negative or invalid time {}", rec.time)));
        }
        if rec.x.len() != treatments.len() {
            return Err(schema(
                "x",
                format!("{} covariate rows for {} treatments", rec.x.len(), treatments.len()),
            ));
        }
        if let Some(first) = rec.x.first() {
            if rec.x.iter().any(|x| x.len() != first.len()) {
                return Err(schema("x", "ragged covariate dimension".into()));
            }
        }
        if let Some(map) = rec.truth {
            let tau = rec
                .truth_tau
                .ok_or_else(|| schema("truth_tau", "truth given without time points".into()))?;
            if has_truth && tau != truth.tau {
                return Err(schema("truth_tau", "differs from earlier rows".into()));
            }
            truth.tau = tau;
            has_truth = true;
            for (seq, curve) in map {
                truth.curves.insert((rec.id.clone(), seq), curve);
            }
        }
        trajectories.push(Trajectory {
            id: rec.id,
            covariates: rec.x,
            treatments,
            observed_time: rec.time,
            event,
        });
    }
    let mut cohort = Cohort::new(trajectories)?;
    if has_truth {
        cohort.ground_truth = Some(truth);
        cohort.validate()?;
    }
    Ok(cohort)
}

fn save_jsonl(cohort: &Cohort, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for tr in &cohort.trajectories {
        let (truth, truth_tau) = match &cohort.ground_truth {
            Some(gt) => {
                let map: BTreeMap<String, Vec<f64>> = gt
                    .curves
                    .range((tr.id.clone(), String::new())..)
                    .take_while(|((id, _), _)| *id == tr.id)
                    .map(|((_, seq), c)| (seq.clone(), c.clone()))
                    .collect();
                if map.is_empty() {
                    (None, None)
                } else {
                    (Some(map), Some(gt.tau.clone()))
                }
            }
            None => (None, None),
        };
        let rec = JsonRecord {
            id: tr.id.clone(),
            x: tr.covariates.clone(),
            t: tr.treatments.iter().map(|&t| t as f64).collect(),
            time: tr.observed_time,
            event: if tr.event { 1.0 } else { 0.0 },
            truth,
            truth_tau,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn parse_f64(path: &Path, row: usize, field: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Schema {
        path: path.display().to_string(),
        row,
        field: field.to_string(),
        reason: format!("not a number: {s:?}"),
    })
}

fn load_csv(path: &Path, outcomes: &Path) -> Result<Cohort> {
    let schema = |p: &Path, row: usize, field: &str, reason: String| Error::Schema {
        path: p.display().to_string(),
        row,
        field: field.to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("id").ok_or_else(|| schema(path, 1, "id", "missing column".into()))?;
    let k_col = col("k").ok_or_else(|| schema(path, 1, "k", "missing column".into()))?;
    let t_col = col("t").ok_or_else(|| schema(path, 1, "t", "missing column".into()))?;
    let mut x_cols = Vec::new();
    while let Some(c) = col(&format!("x_{}", x_cols.len())) {
        x_cols.push(c);
    }
    if x_cols.is_empty() {
        return Err(schema(path, 1, "x_0", "missing column".into()));
    }

    // id -> (first-seen order, rows as (k, x, t))
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(usize, Vec<f64>, u8)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let id = field(id_col).trim().to_string();
        let kf = parse_f64(path, row, "k", field(k_col))?;
        if kf < 0.0 || kf.fract() != 0.0 {
            return Err(schema(path, row, "k", format!("invalid time index {kf}")));
        }
        let x = x_cols
            .iter()
            .enumerate()
            .map(|(j, &c)| parse_f64(path, row, &format!("x_{j}"), field(c)))
            .collect::<Result<Vec<_>>>()?;
        let t = binary_field(path, row, "t", parse_f64(path, row, "t", field(t_col))?)?;
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        entry.push((kf as usize, x, t));
    }

    let mut outcome_map: BTreeMap<String, (f64, bool)> = BTreeMap::new();
    let mut ordr = csv::Reader::from_path(outcomes).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(outcomes, io),
        other => Error::Data(format!("{}: {other:?}", outcomes.display())),
    })?;
    let oh = ordr.headers()?.clone();
    let ocol = |name: &str| {
        oh.iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| schema(outcomes, 1, name, "missing column".into()))
    };
    let (oid, otime, oevent) = (ocol("id")?, ocol("time")?, ocol("event")?);
    for (i, rec) in ordr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let time = parse_f64(outcomes, row, "time", field(otime))?;
        if !(time >= 0.0) {
            return Err(schema(outcomes, row, "time", format!("negative time {time}")));
        }
        let event = binary_field(outcomes, row, "event", parse_f64(outcomes, row, "event", field(oevent))?)?;
        outcome_map.insert(field(oid).trim().to_string(), (time, event == 1));
    }

    let mut trajectories = Vec::with_capacity(order.len());
    for id in order {
        let mut steps = rows.remove(&id).unwrap_or_default();
        steps.sort_by_key(|s| s.0);
        if let Some(pos) = steps.iter().enumerate().position(|(i, s)| s.0 != i) {
            return Err(Error::Data(format!(
                "{}: individual {id} has time indices {:?}; expected 0..K without gaps (first bad position {pos})",
                path.display(),
                steps.iter().map(|s| s.0).collect::<Vec<_>>()
            )));
        }
        let &(observed_time, event) = outcome_map.get(&id).ok_or_else(|| {
            Error::Data(format!("{}: no outcome row for id {id}", outcomes.display()))
        })?;
        let (covariates, treatments) = steps.into_iter().map(|(_, x, t)| (x, t)).unzip();
        trajectories.push(Trajectory {
            id,
            covariates,
            treatments,
            observed_time,
            event,
        });
    }
    Cohort::new(trajectories)
}

fn save_csv(cohort: &Cohort, path: &Path, outcomes: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let mut header = vec!["id".to_string(), "k".to_string()];
    header.extend((0..cohort.d).map(|j| format!("x_{j}")));
    header.push("t".into());
    w.write_record(&header)?;
    for tr in &cohort.trajectories {
        for (k, (x, t)) in tr.covariates.iter().zip(&tr.treatments).enumerate() {
            let mut rec = vec![tr.id.clone(), k.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            rec.push(t.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_path(outcomes).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record(["id", "time", "event"])?;
    for tr in &cohort.trajectories {
        w.write_record([
            tr.id.clone(),
            tr.observed_time.to_string(),
            (tr.event as u8).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(outcomes, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridStrategy {
    Quantile,
    Uniform,
}

impl FromStr for GridStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(GridStrategy::Quantile),
            "uniform" => Ok(GridStrategy::Uniform),
            other => Err(Error::Config(format!("unknown grid strategy {other:?}"))),
        }
    }
}

/// Interval boundaries `0 = τ_0 < τ_1 < … < τ_m`. Interval `j` (1-based) is
/// `[τ_{j-1}, τ_j)`, except that the last interval also holds `τ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    boundaries: Vec<f64>,
}

const TIE_NUDGE: f64 = 1e-9;

impl TimeGrid {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 3 {
            return Err(Error::Grid(format!(
                "a grid needs at least 2 intervals, got {} boundaries",
                boundaries.len()
            )));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::Grid(format!("grid must start at 0, got {}", boundaries[0])));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid(format!(
                "grid boundaries must be strictly increasing: {boundaries:?}"
            )));
        }
        Ok(Self { boundaries })
    }

    /// `m + 1` boundaries including `τ_0 = 0`.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Right endpoints `τ_1..τ_m`.
    pub fn taus(&self) -> &[f64] {
        &self.boundaries[1..]
    }

    pub fn m(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.boundaries.last().expect("nonempty grid")
    }

    /// 1-based interval holding `t`.
    pub fn interval_index(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.horizon() {
            return Err(Error::Grid(format!(
                "time {t} lies outside the grid [0, {}]",
                self.horizon()
            )));
        }
        let above = self.boundaries[1..].partition_point(|&b| b <= t);
        Ok((above + 1).min(self.m()))
    }
}

pub fn build_grid(cohort: &Cohort, m: usize, strategy: GridStrategy) -> Result<TimeGrid> {
    let times: Vec<f64> = cohort.trajectories.iter().map(|t| t.observed_time).collect();
    grid_from_times(&times, m, strategy)
}

pub fn grid_from_times(times: &[f64], m: usize, strategy: GridStrategy) -> Result<TimeGrid> {
    if m < 2 {
        return Err(Error::Grid(format!("need m >= 2 intervals, got {m}")));
    }
    if times.is_empty() {
        return Err(Error::Grid("cannot build a grid from no observations".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = *sorted.last().expect("nonempty");
    if !(max > 0.0) {
        return Err(Error::Grid("all observed times are zero".into()));
    }
    let mut b = vec![0.0];
    match strategy {
        GridStrategy::Uniform => {
            b.extend((1..m).map(|j| max * j as f64 / m as f64));
            b.push(max);
        }
        GridStrategy::Quantile => {
            let mut distinct = sorted.clone();
            distinct.dedup();
            if m > distinct.len() {
                return Err(Error::Grid(format!(
                    "{m} quantile intervals requested but only {} distinct observed times; use the uniform strategy",
                    distinct.len()
                )));
            }
            let n = sorted.len();
            for j in 1..m {
                // inverse empirical CDF at j/m
                let rank = (j * n).div_ceil(m).max(1);
                b.push(sorted[rank - 1]);
            }
            b.push(max);
            for j in 1..b.len() {
                if b[j] <= b[j - 1] {
                    b[j] = b[j - 1] + TIE_NUDGE;
                }
            }
        }
    }
    TimeGrid::new(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(id: &str, t: &[u8], time: f64, event: bool) -> Trajectory {
        Trajectory {
            id: id.into(),
            covariates: t.iter().enumerate().map(|(k, _)| vec![k as f64, -0.5]).collect(),
            treatments: t.to_vec(),
            observed_time: time,
            event,
        }
    }

    fn times_cohort(times: &[f64]) -> Cohort {
        Cohort::new(
            times
                .iter()
                .enumerate()
                .map(|(i, &t)| traj(&i.to_string(), &[0, 1], t, true))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_grid() {
        let g = build_grid(&times_cohort(&[1.0, 2.0, 3.0, 4.0]), 2, GridStrategy::Uniform).unwrap();
        assert_eq!(g.boundaries(), &[0.0, 2.0, 4.0]);
    }

    #[test]
    fn quantile_grid_hits_order_statistics() {
        let g = build_grid(&times_cohort(&[4.0, 2.0, 1.0, 3.0]), 4, GridStrategy::Quantile).unwrap();
        assert_eq!(g.boundaries(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn quantile_grid_nudges_ties() {
        let g = build_grid(&times_cohort(&[1.0, 2.0, 2.0, 2.0]), 2, GridStrategy::Quantile).unwrap();
        assert_eq!(g.boundaries()[1], 2.0);
        assert!(g.horizon() > 2.0 && g.horizon() < 2.0 + 1e-8);
    }

    #[test]
    fn quantile_grid_needs_enough_distinct_times() {
        let err = build_grid(&times_cohort(&[1.0, 1.0, 2.0]), 3, GridStrategy::Quantile).unwrap_err();
        assert!(err.to_string().contains("uniform"));
        assert!(build_grid(&times_cohort(&[1.0, 2.0]), 1, GridStrategy::Uniform).is_err());
    }

    #[test]
    fn interval_membership() {
        let g = TimeGrid::new(vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(g.interval_index(0.0).unwrap(), 1);
        assert_eq!(g.interval_index(2.0).unwrap(), 2);
        assert_eq!(g.interval_index(2.5).unwrap(), 2);
        assert_eq!(g.interval_index(1.999).unwrap(), 1);
        assert_eq!(g.interval_index(4.0).unwrap(), 2);
        assert!(g.interval_index(4.0001).is_err());
        assert!(g.interval_index(-0.1).is_err());
    }

    #[test]
    fn rejects_bad_trajectories() {
        let mut bad = traj("a", &[0, 1], 1.0, true);
        bad.treatments[1] = 2;
        assert!(Cohort::new(vec![bad]).is_err());
        let mut ragged = traj("b", &[0, 1], 1.0, true);
        ragged.covariates[1].push(0.0);
        assert!(Cohort::new(vec![ragged]).is_err());
        assert!(Cohort::new(vec![traj("c", &[0, 1], -1.0, true)]).is_err());
        assert!(Cohort::new(vec![traj("d", &[0, 1], 1.0, true), traj("e", &[0], 1.0, true)]).is_err());
    }

    #[test]
    fn sequence_keys() {
        assert_eq!(sequence_key(&[0, 1, 1, 0]), "0110");
        assert_eq!(parse_sequence("0110").unwrap(), vec![0, 1, 1, 0]);
        assert!(parse_sequence("012").is_err());
    }
}

//! Checkpointed `(mu, E)` sweeps.
//!
//! Each cell is computed independently and appended to a newline-delimited
//! JSON checkpoint as soon as it finishes. The final CSV is assembled from
//! the checkpoint and sorted, so it does not depend on the worker count or
//! on how often the sweep was interrupted and resumed.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{mu1, Cr3bp};
use crate::normalform::{normal_form, short_period_w_of_e, DEFAULT_DEGREE};
use crate::rotation::fixed_point_rotation_number;
use crate::section::fmt17;
use crate::twist::{twistless_on_energy, ActionCap, Rational};
use crate::{Error, Result};

/// Largest energy accepted in a sweep (the normal-form action cap).
pub const MAX_SWEEP_ENERGY: f64 = crate::twist::DEFAULT_CAP_ENERGY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SweepTask {
    /// Rotation number of the short-period fixed point (numerical).
    #[serde(rename = "fixed_point_W")]
    FixedPointW,
    /// Normal-form rotation number of the twistless torus on the energy
    /// line minus 2/7; its zero contour is the 2/7 reconnection locus.
    #[serde(rename = "reconnection_2/7")]
    Reconnection27,
    /// As above for 3/10.
    #[serde(rename = "reconnection_3/10")]
    Reconnection310,
    /// Normal-form rotation number of the short-period orbit.
    #[serde(rename = "nf_chart")]
    NfChart,
}

impl SweepTask {
    pub const ALL: [SweepTask; 4] =
        [SweepTask::FixedPointW, SweepTask::Reconnection27, SweepTask::Reconnection310, SweepTask::NfChart];

    pub fn label(self) -> &'static str {
        match self {
            SweepTask::FixedPointW => "fixed_point_W",
            SweepTask::Reconnection27 => "reconnection_2/7",
            SweepTask::Reconnection310 => "reconnection_3/10",
            SweepTask::NfChart => "nf_chart",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        SweepTask::ALL
            .into_iter()
            .find(|t| t.label() == s || (s == "reconnection_2_7" && *t == SweepTask::Reconnection27)
                || (s == "reconnection_3_10" && *t == SweepTask::Reconnection310))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sweep task {s:?}")))
    }

    fn run(self, mu: f64, energy: f64) -> Result<f64> {
        match self {
            SweepTask::FixedPointW => fixed_point_rotation_number(mu, energy),
            SweepTask::Reconnection27 => twistless_excess(mu, energy, Rational { p: 2, q: 7 }),
            SweepTask::Reconnection310 => twistless_excess(mu, energy, Rational { p: 3, q: 10 }),
            SweepTask::NfChart => short_period_w_of_e(&normal_form(mu, DEFAULT_DEGREE)?.normal_form, energy),
        }
    }
}

fn twistless_excess(mu: f64, energy: f64, r: Rational) -> Result<f64> {
    let nf = normal_form(mu, DEFAULT_DEGREE)?.normal_form;
    let cap = ActionCap::default_for(&nf)?;
    let first = twistless_on_energy(&nf, energy, cap.il_max)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::NoSolution(format!("no twistless torus at mu = {mu}, E = {energy}")))?;
    Ok(first.w - r.value())
}

/// `count` equally spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let a = Axis { min, max, count };
        a.validate("axis")?;
        Ok(a)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 || !(self.min <= self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} grid must be non-empty with min <= max, got ({}, {}, {})",
                self.min, self.max, self.count
            )));
        }
        if self.count == 1 && self.min != self.max {
            return Err(Error::InvalidParameter(format!("{name} grid with one node needs min == max")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|i| {
                let t = i as f64 / (self.count - 1) as f64;
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + t * (self.max - self.min)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mu: Axis,
    pub energy: Axis,
    pub tasks: Vec<SweepTask>,
    pub workers: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.mu.validate("mu")?;
        self.energy.validate("E")?;
        if !(self.mu.min > 0.0 && self.mu.max < mu1()) {
            return Err(Error::InvalidParameter(format!(
                "mu grid must lie in (0, mu_1 = {:.9}), got [{}, {}]",
                mu1(),
                self.mu.min,
                self.mu.max
            )));
        }
        if !(self.energy.min > 0.0 && self.energy.max <= MAX_SWEEP_ENERGY) {
            return Err(Error::InvalidParameter(format!(
                "E grid must lie in (0, {MAX_SWEEP_ENERGY}], got [{}, {}]",
                self.energy.min, self.energy.max
            )));
        }
        if self.tasks.is_empty() {
            return Err(Error::InvalidParameter("no sweep tasks given".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("worker count must be positive".into()));
        }
        Ok(())
    }

    /// Every `(mu, E, task)` cell, in output order.
    pub fn cells(&self) -> Vec<(f64, f64, SweepTask)> {
        let mut tasks = self.tasks.clone();
        tasks.sort();
        tasks.dedup();
        let mut out = Vec::new();
        for mu in self.mu.values() {
            for e in self.energy.values() {
                for t in &tasks {
                    out.push((mu, e, *t));
                }
            }
        }
        out
    }
}

/// One finished cell; also the checkpoint record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mu: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub task: SweepTask,
    pub value: Option<f64>,
    pub status: String,
}

type CellKey = (u64, u64, SweepTask);

fn key(mu: f64, e: f64, t: SweepTask) -> CellKey {
    (mu.to_bits(), e.to_bits(), t)
}

fn compute_cell(mu: f64, energy: f64, task: SweepTask) -> CellResult {
    let result = Cr3bp::with_mu(mu).and_then(|_| task.run(mu, energy));
    match result {
        Ok(v) => CellResult { mu, energy, task, value: Some(v), status: "ok".into() },
        Err(e) => CellResult { mu, energy, task, value: None, status: e.code().into() },
    }
}

/// Records already in the checkpoint. Lines that do not parse (such as a
/// record cut short when a previous run was killed) are ignored.
pub fn read_checkpoint(path: &Path) -> Result<Vec<CellResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if let Ok(rec) = serde_json::from_str::<CellResult>(&line) {
            out.push(rec);
        }
    }
    Ok(out)
}

/// Computes up to `limit` cells that are missing from the checkpoint and
/// appends them to it. Returns the number of cells computed.
pub fn run_cells(spec: &SweepSpec, checkpoint: &Path, limit: Option<usize>) -> Result<usize> {
    spec.validate()?;
    let done: BTreeMap<CellKey, ()> =
        read_checkpoint(checkpoint)?.iter().map(|r| (key(r.mu, r.energy, r.task), ())).collect();
    let mut pending: Vec<_> = spec.cells().into_iter().filter(|c| !done.contains_key(&key(c.0, c.1, c.2))).collect();
    if let Some(n) = limit {
        pending.truncate(n);
    }
    let mut file = OpenOptions::new().create(true).append(true).open(checkpoint)?;
    // Terminate a record left unfinished by an interrupted run.
    if std::fs::metadata(checkpoint)?.len() > 0 {
        let text = std::fs::read(checkpoint)?;
        if text.last() != Some(&b'\n') {
            file.write_all(b"\n")?;
        }
    }
    let sink = Mutex::new(file);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| {
        pending.par_iter().try_for_each(|&(mu, e, task)| -> Result<()> {
            let rec = compute_cell(mu, e, task);
            let line = serde_json::to_string(&rec)?;
            let mut f = sink.lock().map_err(|_| Error::Io("checkpoint lock poisoned".into()))?;
            writeln!(f, "{line}")?;
            f.flush()?;
            Ok(())
        })
    })?;
    Ok(pending.len())
}

/// Runs (or resumes) the sweep and returns the sorted table.
pub fn run_sweep(spec: &SweepSpec, checkpoint: &Path) -> Result<Vec<CellResult>> {
    run_cells(spec, checkpoint, None)?;
    let mut by_key: BTreeMap<CellKey, CellResult> = BTreeMap::new();
    for rec in read_checkpoint(checkpoint)? {
        by_key.entry(key(rec.mu, rec.energy, rec.task)).or_insert(rec);
    }
    let table = spec
        .cells()
        .into_iter()
        .map(|(mu, e, t)| {
            by_key
                .remove(&key(mu, e, t))
                .ok_or_else(|| Error::Io(format!("checkpoint is missing cell ({mu}, {e}, {})", t.label())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(table)
}

/// Writes `mu,E,task,value,status`.
pub fn write_sweep_csv<W: Write>(out: &mut W, table: &[CellResult]) -> Result<()> {
    writeln!(out, "mu,E,task,value,status")?;
    for r in table {
        let v = r.value.map(fmt17).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", fmt17(r.mu), fmt17(r.energy), r.task.label(), v, r.status)?;
    }
    Ok(())
}

/// Linear-interpolated `mu` where `value = level` along each energy row,
/// for one task. Rows without a crossing are skipped.
pub fn contour_crossings(table: &[CellResult], task: SweepTask, level: f64) -> Vec<(f64, f64)> {
    let mut rows: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in table.iter().filter(|r| r.task == task) {
        if let Some(v) = r.value {
            rows.entry(r.energy.to_bits()).or_default().push((r.mu, v));
        }
    }
    let mut out = Vec::new();
    for (e, mut pts) in rows {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.1 - level) * (b.1 - level) <= 0.0 && a.1 != b.1 {
                let t = (level - a.1) / (b.1 - a.1);
                out.push((a.0 + t * (b.0 - a.0), f64::from_bits(e)));
                break;
            }
        }
    }
    out
}

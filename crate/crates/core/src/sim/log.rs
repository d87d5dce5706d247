use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::monitor::MonitorValues;
use super::steer::SteerCommand;
use crate::constraints::ConstraintCounts;
use crate::geometry::Vec3;
use crate::planner::AgentRole;
use crate::solver::{AgentState, SolveStatus};
use crate::topology::TreeExport;

pub const RUNLOG_SCHEMA: &str = "runlog.v1";

/// Wall-clock measurements, left out of the run hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub constraint_ms: Vec<f64>,
    pub solve_ms: Vec<f64>,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub states: Vec<AgentState>,
    pub plans: Vec<Vec<Vec3>>,
    pub intermediate_targets: Vec<Vec3>,
    pub counts: Vec<ConstraintCounts>,
    pub statuses: Vec<SolveStatus>,
    pub iterations: Vec<usize>,
    /// Worst violation of this tick's constraints by the warm starts.
    pub warm_violation: f64,
    pub monitors: MonitorValues,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commands: Vec<SteerCommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl TickRecord {
    pub fn mean_solve_ms(&self) -> f64 {
        self.timing.as_ref().map_or(0.0, |t| mean(&t.solve_ms))
    }

    pub fn mean_constraint_ms(&self) -> f64 {
        self.timing.as_ref().map_or(0.0, |t| mean(&t.constraint_ms))
    }

    pub fn faults(&self) -> usize {
        self.statuses.iter().filter(|s| **s == SolveStatus::Fault).count()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema: String,
    pub scenario: String,
    pub seed: u64,
    pub roles: Vec<AgentRole>,
    pub tree: TreeExport,
    pub initial: Vec<AgentState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Terminated { tick: u64, t: f64 },
    BudgetExhausted { tick: u64 },
    Breach { tick: u64, detail: String },
    Fault { tick: u64, detail: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Terminated { .. })
    }
}

/// Header, tick records and outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub records: Vec<TickRecord>,
    pub outcome: Option<Outcome>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(RunHeader),
    Tick(TickRecord),
    End(Outcome),
}

impl RunLog {
    /// SHA-256 over the log with timing fields removed.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.header).expect("serializable"));
        for r in &self.records {
            let mut r = r.clone();
            r.timing = None;
            h.update(serde_json::to_vec(&r).expect("serializable"));
        }
        h.update(serde_json::to_vec(&self.outcome).expect("serializable"));
        format!("{:x}", h.finalize())
    }

    /// Newline-delimited JSON: header, one line per tick, outcome.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> io::Result<()> {
        let line = |w: &mut W, l: &Line| -> io::Result<()> {
            serde_json::to_writer(&mut *w, l)?;
            w.write_all(b"\n")
        };
        line(&mut w, &Line::Header(self.header.clone()))?;
        for r in &self.records {
            line(&mut w, &Line::Tick(r.clone()))?;
        }
        if let Some(o) = &self.outcome {
            line(&mut w, &Line::End(o.clone()))?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> io::Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        let mut outcome = None;
        for l in r.lines() {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let mut v: serde_json::Value = serde_json::from_str(&l)?;
            let kind = v.as_object_mut().and_then(|m| m.remove("type"));
            match kind.as_ref().and_then(|k| k.as_str()) {
                Some("header") => header = Some(serde_json::from_value(v)?),
                Some("tick") => records.push(serde_json::from_value(v)?),
                Some("end") => outcome = Some(serde_json::from_value(v)?),
                other => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("unknown line type {other:?}"),
                    ))
                }
            }
        }
        let header = header.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing header line"))?;
        Ok(Self {
            header,
            records,
            outcome,
        })
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            completion_time: match self.outcome {
                Some(Outcome::Terminated { t, .. }) => Some(t),
                _ => None,
            },
            rows: self
                .records
                .iter()
                .map(|r| MetricsRow {
                    tick: r.tick,
                    t: r.t,
                    min_pair_dist: r.monitors.min_pair_dist,
                    min_los_obs_dist: r.monitors.min_los_obs_dist,
                    max_edge_dist: r.monitors.max_edge_dist,
                    mean_solve_ms: r.mean_solve_ms(),
                    mean_constraint_ms: r.mean_constraint_ms(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tick: u64,
    pub t: f64,
    pub min_pair_dist: f64,
    pub min_los_obs_dist: f64,
    pub max_edge_dist: f64,
    pub mean_solve_ms: f64,
    pub mean_constraint_ms: f64,
}

/// Per-tick summary series of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completion_time: Option<f64>,
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Mean per-agent per-tick planning time (constraints plus solve).
    pub fn mean_agent_tick_ms(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.mean_solve_ms + r.mean_constraint_ms).collect::<Vec<_>>())
    }
}

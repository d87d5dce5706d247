use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexObstacle, Vec3, Workspace};
use crate::planner::{ConnectorTracking, PlannerParams};
use crate::solver::AdmmSettings;

pub const SCHEMA_VERSION: u32 = 1;

/// A malformed or inconsistent scenario, with the JSON path of the culprit.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Tunables of a run. Every field has a desk-scale default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub r_a: f64,
    pub d_c: f64,
    pub d_m: f64,
    pub d_w: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub h: f64,
    pub horizon: usize,
    pub q_terminal: f64,
    pub q_smooth: f64,
    pub alpha_c: f64,
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub connector_tracking: ConnectorTracking,
    pub tol_p: f64,
    pub tol_v: f64,
    pub seed: u64,
    pub topology_samples: usize,
    pub topology_retries: usize,
    pub tick_budget: u64,
    /// Lattice pitch of the initial formation.
    pub spacing: f64,
    pub admm: AdmmSettings,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        let p = PlannerParams::default();
        Self {
            r_a: p.r_a,
            d_c: p.d_c,
            d_m: p.d_m,
            d_w: p.d_w,
            v_max: p.v_max,
            a_max: p.a_max,
            h: p.h,
            horizon: p.horizon,
            q_terminal: p.q_terminal,
            q_smooth: p.q_smooth,
            alpha_c: p.alpha_c,
            alpha_p: p.alpha_p,
            alpha_n: p.alpha_n,
            connector_tracking: p.connector_tracking,
            tol_p: p.tol_p,
            tol_v: p.tol_v,
            seed: 0,
            topology_samples: 1500,
            topology_retries: 3,
            tick_budget: 1000,
            spacing: 1.3,
            admm: AdmmSettings::default(),
        }
    }
}

impl ScenarioParams {
    pub fn planner(&self) -> PlannerParams {
        PlannerParams {
            r_a: self.r_a,
            d_c: self.d_c,
            d_m: self.d_m,
            d_w: self.d_w,
            v_max: self.v_max,
            a_max: self.a_max,
            h: self.h,
            horizon: self.horizon,
            q_terminal: self.q_terminal,
            q_smooth: self.q_smooth,
            alpha_c: self.alpha_c,
            alpha_p: self.alpha_p,
            alpha_n: self.alpha_n,
            connector_tracking: self.connector_tracking,
            tol_p: self.tol_p,
            tol_v: self.tol_v,
            admm: self.admm,
        }
    }

    /// Same shape with every length scaled by `s` (times unchanged).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            r_a: self.r_a * s,
            d_c: self.d_c * s,
            d_m: self.d_m * s,
            d_w: self.d_w * s,
            v_max: self.v_max * s,
            a_max: self.a_max * s,
            tol_p: self.tol_p * s,
            tol_v: self.tol_v * s,
            spacing: self.spacing * s,
            ..self.clone()
        }
    }
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub workspace: Workspace,
    #[serde(default)]
    pub obstacles: Vec<ConvexObstacle>,
    pub ground_station: Vec3,
    pub targets: Vec<Vec3>,
    #[serde(default)]
    pub params: ScenarioParams,
}

impl ScenarioConfig {
    /// Parses and validates; errors carry the JSON path.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::at(if path.is_empty() { ".".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::at(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let ws = &self.workspace;
        for d in 0..3 {
            if !(ws.min[d] <= ws.max[d]) {
                return Err(ConfigError::at(format!("workspace.max[{d}]"), "below workspace.min"));
            }
        }
        let p = self.params.planner();
        p.check().map_err(|m| ConfigError::at("params", m))?;
        if self.params.spacing < p.separation() {
            return Err(ConfigError::at(
                "params.spacing",
                format!("must be at least the agent separation {:.3}", p.separation()),
            ));
        }
        if self.params.topology_samples == 0 {
            return Err(ConfigError::at("params.topology_samples", "must be positive"));
        }
        if self.targets.is_empty() {
            return Err(ConfigError::at("targets", "at least one target is required"));
        }

        let clearance = p.tree_clearance();
        let grown: Vec<ConvexObstacle> = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| o.inflated(clearance).map_err(|e| ConfigError::at(format!("obstacles[{i}]"), e.to_string())))
            .collect::<Result<_, _>>()?;
        let check_point = |path: String, q: &Vec3| -> Result<(), ConfigError> {
            if !inset_contains(ws, q, p.r_a) {
                return Err(ConfigError::at(path, "outside the workspace (inset by r_a)"));
            }
            if let Some(i) = grown.iter().position(|o| o.contains(q)) {
                return Err(ConfigError::at(path, format!("within clearance of obstacle {i}")));
            }
            Ok(())
        };
        check_point("ground_station".into(), &self.ground_station)?;
        for (i, t) in self.targets.iter().enumerate() {
            check_point(format!("targets[{i}]"), t)?;
            for (j, u) in self.targets.iter().enumerate().take(i) {
                if (t - u).norm() < 2.0 * p.separation() {
                    return Err(ConfigError::at(
                        format!("targets[{i}]"),
                        format!("closer than {:.3} to targets[{j}]", 2.0 * p.separation()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Workspace membership with thick axes shrunk by `r`.
pub fn inset_contains(ws: &Workspace, q: &Vec3, r: f64) -> bool {
    (0..3).all(|d| {
        let (lo, hi) = (ws.min[d], ws.max[d]);
        if hi - lo <= 2.0 * r {
            q[d] >= lo - 1e-9 && q[d] <= hi + 1e-9
        } else {
            q[d] >= lo + r && q[d] <= hi - r
        }
    })
}

/// Workspace with thick axes shrunk by `r`.
pub fn inset(ws: &Workspace, r: f64) -> Workspace {
    let mut min = ws.min;
    let mut max = ws.max;
    for d in 0..3 {
        if max[d] - min[d] > 2.0 * r {
            min[d] += r;
            max[d] -= r;
        }
    }
    Workspace::new(min, max)
}

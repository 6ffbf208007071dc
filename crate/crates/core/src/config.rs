//! Run configuration: a flat key-value TOML file whose keys mirror the
//! command-line flags. Every key is optional and falls back to its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::IntensityConvention;
use crate::error::{Error, Result};
use crate::schedule::{geometric_family, power_family, radius_of, ScalingRow};
use crate::statistics::mismatch::EnvironmentMode;
use crate::statistics::{spread_velocities, EnvironmentSpec, VelocitySpec};
use crate::Vec3;

/// Experiment selected by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Simulate,
    Couple,
    Mismatch,
    Events,
    Green,
    Donsker,
    Quenched,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Self::Simulate,
        Self::Couple,
        Self::Mismatch,
        Self::Events,
        Self::Green,
        Self::Donsker,
        Self::Quenched,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Couple => "couple",
            Self::Mismatch => "mismatch",
            Self::Events => "events",
            Self::Green => "green",
            Self::Donsker => "donsker",
            Self::Quenched => "quenched",
        }
    }

    /// Whether the experiment simulates Lorentz trajectories at `(ε, T)`
    /// and is therefore subject to `r T ≤ 1`.
    fn uses_scatterers(self) -> bool {
        matches!(
            self,
            Self::Simulate | Self::Couple | Self::Mismatch | Self::Events
        )
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Closed-form schedule families, or an explicit row list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Geometric,
    Power,
    Rows,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "power" => Ok(Self::Power),
            "rows" => Ok(Self::Rows),
            _ => Err(Error::Config(format!("unknown schedule {s:?}"))),
        }
    }
}

/// Complete description of a run. Serialised field order is the canonical
/// order used by the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Base intensity convention; overridden by an explicit `rho`.
    pub intensity: IntensityConvention,
    pub rho: Option<f64>,
    pub cell_side: f64,
    pub eps: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub n_traj: usize,
    /// Draw initial velocities uniformly from the cap of half-angle `beta`.
    pub beta: Option<f64>,
    /// Place initial velocities on an arc with consecutive angle `w`.
    pub w: Option<f64>,
    /// Explicit initial velocities (normalised on use).
    pub velocities: Option<Vec<[f64; 3]>>,
    /// Initial velocity of `simulate`; defaults to the axis.
    pub v0: Option<[f64; 3]>,
    pub axis: [f64; 3],
    pub replicas: usize,
    pub mode: EnvironmentMode,
    pub schedule: ScheduleKind,
    pub n_min: u32,
    pub n_max: u32,
    pub t_exp: f64,
    pub b_exp: f64,
    pub n_exp: f64,
    /// Explicit rows `[ε, T, β, N]`, indexed from `n_min`.
    pub rows: Option<Vec<[f64; 4]>>,
    /// Green target ball.
    pub x0: [f64; 3],
    pub a: f64,
    pub escape_factor: f64,
    pub flight_replicas: usize,
    pub wiener_paths: usize,
    pub wiener_steps: usize,
    pub dump: bool,
    pub force: bool,
    /// Worker threads; defaults to the number of cores. Not hashed.
    pub threads: Option<usize>,
    /// Output directory. Not hashed.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Mismatch,
            seed: 1,
            intensity: IntensityConvention::UnitRate,
            rho: None,
            cell_side: 1.0,
            eps: 0.05,
            horizon: 10.0,
            n_traj: 2,
            beta: None,
            w: None,
            velocities: None,
            v0: None,
            axis: [0.0, 0.0, 1.0],
            replicas: 1000,
            mode: EnvironmentMode::Annealed,
            schedule: ScheduleKind::Geometric,
            n_min: 5,
            n_max: 12,
            t_exp: 0.5,
            b_exp: 0.5,
            n_exp: 2.0,
            rows: None,
            x0: [5.0, 0.0, 0.0],
            a: 0.5,
            escape_factor: crate::statistics::green::ESCAPE_FACTOR,
            flight_replicas: 10_000,
            wiener_paths: crate::statistics::wiener::WIENER_PATHS,
            wiener_steps: crate::statistics::wiener::WIENER_STEPS,
            dump: false,
            force: false,
            threads: None,
            out: PathBuf::from("out"),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or_else(|| self.intensity.rho())
    }

    pub fn rate(&self) -> f64 {
        crate::environment::collision_rate(self.rho())
    }

    pub fn environment(&self) -> EnvironmentSpec {
        EnvironmentSpec {
            rho: self.rho(),
            cell_side: self.cell_side,
        }
    }

    pub fn radius(&self) -> Result<f64> {
        radius_of(self.eps, crate::DIM)
    }

    pub fn axis_vec(&self) -> Vec3 {
        Vec3::from(self.axis).normalize()
    }

    /// Initial velocities: explicit list, else an arc with spacing `w`, else
    /// the cap of half-angle `beta`, else uniform on the sphere.
    pub fn velocity_spec(&self) -> Result<VelocitySpec> {
        if let Some(v) = &self.velocities {
            let v: Vec<Vec3> = v.iter().map(|x| Vec3::from(*x).normalize()).collect();
            return Ok(VelocitySpec::explicit(&v));
        }
        if let Some(w) = self.w {
            return Ok(VelocitySpec::explicit(&spread_velocities(self.n_traj, w)?));
        }
        if let Some(beta) = self.beta {
            return Ok(VelocitySpec::Cap {
                n: self.n_traj,
                beta,
                axis: self.axis,
            });
        }
        Ok(VelocitySpec::Uniform { n: self.n_traj })
    }

    /// Initial velocity of a single simulated trajectory.
    pub fn simulate_velocity(&self) -> Vec3 {
        self.v0
            .map(|v| Vec3::from(v).normalize())
            .unwrap_or_else(|| self.axis_vec())
    }

    /// Rows of the configured schedule.
    pub fn schedule_rows(&self) -> Result<Vec<ScalingRow>> {
        let mut rows = match self.schedule {
            ScheduleKind::Geometric => geometric_family(self.n_min, self.n_max)?,
            ScheduleKind::Power => {
                power_family(self.n_min, self.n_max, self.t_exp, self.b_exp, self.n_exp)?
            }
            ScheduleKind::Rows => {
                let rows = self
                    .rows
                    .as_ref()
                    .ok_or_else(|| bad("schedule = \"rows\" needs a rows list"))?;
                rows.iter()
                    .enumerate()
                    .map(|(i, &[eps, t, beta, n])| {
                        if n < 1.0 || n.fract() != 0.0 {
                            return Err(bad(format!("row {i}: N must be a positive integer")));
                        }
                        ScalingRow::new(self.n_min + i as u32, eps, t, beta, n as usize)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let axis = self.axis_vec();
        for row in &mut rows {
            row.axis = [axis.x, axis.y, axis.z];
        }
        Ok(rows)
    }

    /// Checks ranges and the `r T ≤ 1` requirement (unless `force`).
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(bad(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(bad(format!("T must be positive, got {}", self.horizon)));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(bad(format!("beta must lie in (0, 1], got {beta}")));
            }
        }
        if self.n_traj == 0 {
            return Err(bad("N must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(bad("replicas must be at least 1"));
        }
        if !(self.rho() > 0.0 && self.rho().is_finite()) {
            return Err(bad("rho must be positive"));
        }
        if !(self.cell_side > 0.0 && self.cell_side.is_finite()) {
            return Err(bad("cell_side must be positive"));
        }
        if !(Vec3::from(self.axis).norm() > 0.0) {
            return Err(bad("axis must be non-zero"));
        }
        if let Some(v) = self.v0 {
            if !(Vec3::from(v).norm() > 0.0) {
                return Err(bad("v0 must be non-zero"));
            }
        }
        if let Some(vs) = &self.velocities {
            if vs.is_empty() || vs.iter().any(|v| !(Vec3::from(*v).norm() > 0.0)) {
                return Err(bad(
                    "velocities must be a non-empty list of non-zero vectors",
                ));
            }
        }
        if self.threads == Some(0) {
            return Err(bad("threads must be at least 1"));
        }
        if self.experiment.uses_scatterers() {
            let rt = self.radius()? * self.horizon;
            if rt > 1.0 && !self.force {
                return Err(Error::Inadmissible(format!("r·T = {rt} exceeds 1")));
            }
        }
        self.velocity_spec()?.validate()
    }

    /// Hex SHA-256 of the canonical JSON of every result-affecting key, i.e.
    /// everything except `threads` and `out`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.out = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flat_keys_parse() {
        let c = RunConfig::from_toml_str(
            "experiment = \"green\"\nseed = 9\nT = 4.5\nN = 3\nx0 = [2.0, 0.0, 0.0]\n",
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::Green);
        assert_eq!(c.seed, 9);
        assert_eq!(c.horizon, 4.5);
        assert_eq!(c.n_traj, 3);
        assert_eq!(c.eps, RunConfig::default().eps);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("epsilon = 0.1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn range_checks() {
        let mut c = RunConfig {
            eps: 1.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.eps = 0.1;
        c.beta = Some(0.0);
        assert!(c.validate().is_err());
        c.beta = Some(0.5);
        c.n_traj = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rt_limit_is_enforced_unless_forced() {
        let mut c = RunConfig {
            eps: 0.5,
            horizon: 10.0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Inadmissible(_))));
        c.force = true;
        c.validate().unwrap();
        c.force = false;
        c.experiment = Experiment::Donsker;
        c.validate().unwrap();
    }

    #[test]
    fn hash_ignores_threads_and_out_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            threads: Some(3),
            out: "elsewhere".into(),
            ..Default::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig {
            seed: 2,
            ..Default::default()
        };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn explicit_rows_schedule() {
        let c = RunConfig {
            schedule: ScheduleKind::Rows,
            n_min: 3,
            rows: Some(vec![[0.1, 2.0, 0.5, 4.0], [0.05, 3.0, 0.4, 9.0]]),
            ..Default::default()
        };
        let rows = c.schedule_rows().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].n, 4);
        assert_eq!(rows[1].n_traj, 9);
    }
}

//! Frequency of an early mismatch `σ < T` between coupled Lorentz and flight
//! ensembles, compared with the shape `r (N T + N² / w)` of its upper bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{proportion, EstimateWithCI};
use super::{finite, EnvironmentSpec, VelocitySpec};
use crate::coupling::{couple, divergence_times};
use crate::environment::Scatterers;
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, stream, Domain};
use crate::schedule::{min_angle, radius_of};

/// Whether environments are redrawn per replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentMode {
    /// Fresh environment per replica: estimates the annealed probability.
    Annealed,
    /// One environment for all replicas: a quenched diagnostic.
    Quenched,
}

impl std::str::FromStr for EnvironmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annealed" => Ok(Self::Annealed),
            "quenched" => Ok(Self::Quenched),
            _ => Err(invalid(format!("unknown environment mode {s:?}"))),
        }
    }
}

/// Environment seed of one replica.
pub fn environment_seed(seed: u64, mode: EnvironmentMode, replica: u64) -> u64 {
    match mode {
        EnvironmentMode::Annealed => derive_seed(seed, Domain::Environment, &[replica]),
        EnvironmentMode::Quenched => derive_seed(seed, Domain::Environment, &[]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchParams {
    pub eps: f64,
    pub horizon: f64,
    pub velocities: VelocitySpec,
    pub replicas: usize,
    pub seed: u64,
    pub mode: EnvironmentMode,
    pub environment: EnvironmentSpec,
    /// Run even when `r T > 1`.
    pub force: bool,
}

/// One replica of the mismatch experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchRecord {
    pub replica: u64,
    pub environment_seed: u64,
    /// Minimum pairwise angle, absent for a single trajectory.
    pub w: Option<f64>,
    pub bound_term: f64,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub sigma3: Option<f64>,
    pub sigma4: Option<f64>,
    pub sigma: Option<f64>,
    pub mismatch: bool,
    /// Earliest disagreement of the event lists.
    pub divergence: Option<f64>,
    /// Trajectories whose Lorentz path and flight differ before the horizon.
    pub mismatched_trajectories: usize,
    pub identity_holds: bool,
    pub lorentz_events: usize,
    pub flight_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub eps: f64,
    pub r: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub rate: f64,
    pub mode: EnvironmentMode,
    pub estimate: EstimateWithCI,
    /// Mean over replicas of the minimum pairwise angle.
    pub mean_w: Option<f64>,
    /// Mean over replicas of `r (N T + N² / w)`.
    pub bound_term: f64,
    /// `p̂ / bound_term`.
    pub fitted_constant: f64,
    /// Replicas where `min(σ₁, σ₂) ≠ min(σ₃, σ₄)`.
    pub identity_failures: usize,
    /// Replicas where `σ < T` disagrees with the direct path comparison.
    pub divergence_disagreements: usize,
    pub records: Vec<MismatchRecord>,
}

/// `r (N T + N² / w)`, with the pair term absent for one trajectory.
pub fn mismatch_bound(r: f64, n: usize, horizon: f64, w: Option<f64>) -> f64 {
    let n = n as f64;
    r * (n * horizon + w.map_or(0.0, |w| n * n / w))
}

/// Tolerance for comparing stopping times.
const TIME_TOL: f64 = 1e-9;

pub fn estimate_mismatch_probability(p: &MismatchParams) -> Result<MismatchReport> {
    let r = radius_of(p.eps, crate::DIM)?;
    if !(p.horizon > 0.0 && p.horizon.is_finite()) {
        return Err(invalid(format!("T must be positive, got {}", p.horizon)));
    }
    if r * p.horizon > 1.0 && !p.force {
        return Err(Error::Inadmissible(format!(
            "r·T = {} exceeds 1",
            r * p.horizon
        )));
    }
    if p.replicas == 0 {
        return Err(invalid("at least one replica is required"));
    }
    p.velocities.validate()?;
    let n = p.velocities.len();
    let quenched_env = match p.mode {
        EnvironmentMode::Quenched => Some(p.environment.view(
            environment_seed(p.seed, p.mode, 0),
            p.horizon,
            p.eps,
        )?),
        EnvironmentMode::Annealed => None,
    };
    let records = (0..p.replicas as u64)
        .into_par_iter()
        .map(|replica| -> Result<MismatchRecord> {
            let env_seed = environment_seed(p.seed, p.mode, replica);
            let env = match &quenched_env {
                Some(v) => v.clone(),
                None => p.environment.view(env_seed, p.horizon, p.eps)?,
            };
            let mut vrng = stream(p.seed, Domain::InitialVelocity, &[replica]);
            let velocities = p.velocities.draw(&mut vrng);
            let w = if n > 1 {
                Some(min_angle(&velocities)?)
            } else {
                None
            };
            if w == Some(0.0) {
                return Err(Error::DuplicateVelocities);
            }
            let ens = couple(&env, &velocities, env.rate(), p.horizon, p.seed, replica)?;
            let t = ens.times;
            let div = divergence_times(&ens.lorentz, &ens.flights);
            let first = div.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(MismatchRecord {
                replica,
                environment_seed: env_seed,
                w,
                bound_term: mismatch_bound(env.radius(), n, p.horizon, w),
                sigma1: finite(t.sigma1),
                sigma2: finite(t.sigma2),
                sigma3: finite(t.sigma3),
                sigma4: finite(t.sigma4),
                sigma: finite(t.sigma),
                mismatch: t.mismatch_before(p.horizon),
                divergence: finite(first),
                mismatched_trajectories: div.iter().filter(|&&d| d < p.horizon).count(),
                identity_holds: t.identity_holds(TIME_TOL),
                lorentz_events: ens.lorentz_event_count(),
                flight_events: ens.flight_event_count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hits = records.iter().filter(|x| x.mismatch).count();
    let estimate = proportion(hits, records.len(), p.seed)?;
    let m = records.len() as f64;
    let bound_term = records.iter().map(|x| x.bound_term).sum::<f64>() / m;
    let mean_w = (n > 1).then(|| records.iter().filter_map(|x| x.w).sum::<f64>() / m);
    let identity_failures = records.iter().filter(|x| !x.identity_holds).count();
    let divergence_disagreements = records
        .iter()
        .filter(|x| x.mismatch != x.divergence.is_some_and(|d| d < p.horizon))
        .count();
    Ok(MismatchReport {
        eps: p.eps,
        r,
        horizon: p.horizon,
        n_traj: n,
        rate: crate::environment::collision_rate(p.environment.rho),
        mode: p.mode,
        estimate,
        mean_w,
        bound_term,
        fitted_constant: estimate.estimate / bound_term,
        identity_failures,
        divergence_disagreements,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::spread_velocities;

    fn params(eps: f64, horizon: f64, n: usize, replicas: usize) -> MismatchParams {
        MismatchParams {
            eps,
            horizon,
            velocities: VelocitySpec::explicit(&spread_velocities(n, 0.5).unwrap()),
            replicas,
            seed: 11,
            mode: EnvironmentMode::Annealed,
            environment: EnvironmentSpec::default(),
            force: false,
        }
    }

    #[test]
    fn bound_shape() {
        assert_eq!(mismatch_bound(0.1, 1, 5.0, None), 0.5);
        assert_eq!(mismatch_bound(0.1, 2, 5.0, Some(0.5)), 0.1 * (10.0 + 8.0));
    }

    #[test]
    fn rt_above_one_is_refused_unless_forced() {
        let mut p = params(0.5, 10.0, 1, 1);
        assert!(matches!(
            estimate_mismatch_probability(&p),
            Err(Error::Inadmissible(_))
        ));
        p.force = true;
        assert!(estimate_mismatch_probability(&p).is_ok());
    }

    #[test]
    fn duplicate_velocities_are_rejected() {
        let mut p = params(0.1, 2.0, 2, 2);
        let v = crate::Vec3::z();
        p.velocities = VelocitySpec::explicit(&[v, v]);
        assert!(matches!(
            estimate_mismatch_probability(&p),
            Err(Error::DuplicateVelocities)
        ));
    }

    #[test]
    fn records_are_self_consistent_and_deterministic() {
        let p = params(0.1, 10.0, 3, 60);
        let a = estimate_mismatch_probability(&p).unwrap();
        assert_eq!(a.identity_failures, 0);
        assert_eq!(a.divergence_disagreements, 0);
        assert!((0.0..=1.0).contains(&a.estimate.estimate));
        let b = estimate_mismatch_probability(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quenched_mode_reuses_one_environment() {
        let mut p = params(0.1, 5.0, 2, 4);
        p.mode = EnvironmentMode::Quenched;
        let a = estimate_mismatch_probability(&p).unwrap();
        let seeds: std::collections::BTreeSet<_> =
            a.records.iter().map(|x| x.environment_seed).collect();
        assert_eq!(seeds.len(), 1);
    }
}

//! Marginal law of the flights produced by the coupling: exponential gaps,
//! uniform post-collision directions and independence across trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Exp, Uniform};

use super::inference::{correlation, ks_test, TestOutcome};
use super::mismatch::{environment_seed, EnvironmentMode};
use super::{EnvironmentSpec, VelocitySpec};
use crate::coupling::couple;
use crate::error::{invalid, Result};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalParams {
    pub eps: f64,
    pub horizon: f64,
    pub n_traj: usize,
    /// Gaps and directions taken from the first `events_per_flight` events.
    pub events_per_flight: usize,
    pub replicas: usize,
    pub seed: u64,
    pub environment: EnvironmentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub rate: f64,
    pub gaps: usize,
    /// Flights with fewer than `events_per_flight` events before the horizon.
    pub censored_flights: usize,
    pub mean_gap: f64,
    pub gap_ks: TestOutcome,
    /// KS of the z-coordinate of post-collision velocities against U(−1, 1).
    pub cos_ks: TestOutcome,
    /// KS of the azimuth against U(0, 2π).
    pub azimuth_ks: TestOutcome,
    /// Correlation across replicas of endpoint coordinates of trajectories
    /// `i < j`, for every pair and axis.
    pub correlations: Vec<f64>,
    pub correlation_threshold: f64,
}

impl MarginalReport {
    pub fn max_abs_correlation(&self) -> f64 {
        self.correlations.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

struct ReplicaSample {
    gaps: Vec<f64>,
    cos: Vec<f64>,
    azimuth: Vec<f64>,
    censored: usize,
    endpoints: Vec<[f64; 3]>,
}

pub fn coupling_marginals(p: &MarginalParams) -> Result<MarginalReport> {
    if p.n_traj < 2 {
        return Err(invalid("at least two trajectories are required"));
    }
    if p.events_per_flight == 0 || p.replicas < 3 {
        return Err(invalid(
            "need at least one event per flight and three replicas",
        ));
    }
    let k = p.events_per_flight;
    let velocities = VelocitySpec::Uniform { n: p.n_traj };
    let samples = (0..p.replicas as u64)
        .into_par_iter()
        .map(|replica| -> Result<ReplicaSample> {
            let env_seed = environment_seed(p.seed, EnvironmentMode::Annealed, replica);
            let env = p.environment.view(env_seed, p.horizon, p.eps)?;
            let mut vrng = stream(p.seed, Domain::InitialVelocity, &[replica]);
            let v = velocities.draw(&mut vrng);
            let ens = couple(&env, &v, env.rate(), p.horizon, p.seed, replica)?;
            let mut out = ReplicaSample {
                gaps: Vec::new(),
                cos: Vec::new(),
                azimuth: Vec::new(),
                censored: 0,
                endpoints: Vec::new(),
            };
            for flight in &ens.flights {
                let end = flight.endpoint();
                out.endpoints.push([end.x, end.y, end.z]);
                if flight.events.len() < k {
                    out.censored += 1;
                    continue;
                }
                let mut prev = 0.0;
                for e in &flight.events[..k] {
                    out.gaps.push(e.time - prev);
                    prev = e.time;
                    out.cos.push(e.v_post.z);
                    out.azimuth.push(
                        e.v_post
                            .y
                            .atan2(e.v_post.x)
                            .rem_euclid(std::f64::consts::TAU),
                    );
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let rate = crate::environment::collision_rate(p.environment.rho);
    let gaps: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.gaps.iter().copied())
        .collect();
    let cos: Vec<f64> = samples.iter().flat_map(|s| s.cos.iter().copied()).collect();
    let azimuth: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.azimuth.iter().copied())
        .collect();
    if gaps.is_empty() {
        return Err(invalid("every flight was censored; increase T"));
    }
    let exp = Exp::new(rate).map_err(|e| invalid(e.to_string()))?;
    let u11 = Uniform::new(-1.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let u2pi = Uniform::new(0.0, std::f64::consts::TAU).map_err(|e| invalid(e.to_string()))?;

    let mut correlations = Vec::new();
    for i in 0..p.n_traj {
        for j in i + 1..p.n_traj {
            for a in 0..3 {
                let x: Vec<f64> = samples.iter().map(|s| s.endpoints[i][a]).collect();
                let y: Vec<f64> = samples.iter().map(|s| s.endpoints[j][a]).collect();
                correlations.push(correlation(&x, &y));
            }
        }
    }
    Ok(MarginalReport {
        rate,
        gaps: gaps.len(),
        censored_flights: samples.iter().map(|s| s.censored).sum(),
        mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
        gap_ks: ks_test(&gaps, &exp)?,
        cos_ks: ks_test(&cos, &u11)?,
        azimuth_ks: ks_test(&azimuth, &u2pi)?,
        correlations,
        correlation_threshold: 3.0 / (p.replicas as f64).sqrt(),
    })
}

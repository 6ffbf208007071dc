//! Monte Carlo verification suite.
//!
//! Every experiment here is a pure function of its parameters and seed:
//! replicas are simulated in parallel, collected in replica order and reduced
//! sequentially, so results do not depend on the number of worker threads.

pub mod donsker;
pub mod events;
pub mod functionals;
pub mod green;
pub mod inference;
pub mod marginals;
pub mod mismatch;
pub mod quenched;
pub mod wiener;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{BasePointProcess, EnvironmentView, IntensityConvention};
use crate::error::{invalid, Result};
use crate::flight::sample_uniform_sphere;
use crate::schedule::{default_axis, sample_cap};
use crate::Vec3;

pub use donsker::{donsker_test, DonskerParams, DonskerReport};
pub use events::{estimate_event_probabilities, EventParams, EventReport};
pub use functionals::{dictionary, FunctionalKind, PathFunctional, PathSummary};
pub use green::{gamma_ball_integral, green_occupation, GreenParams, GreenReport};
pub use inference::{CiMethod, EstimateWithCI, TestOutcome};
pub use marginals::{coupling_marginals, MarginalParams, MarginalReport};
pub use mismatch::{estimate_mismatch_probability, MismatchParams, MismatchReport};
pub use quenched::{quenched_average_experiment, QuenchedParams, QuenchedReport};
pub use wiener::{wiener_reference, WienerReference};

/// Scatterer field parameters shared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    /// Intensity `ρ` of the unit-scale point process.
    pub rho: f64,
    /// Side of the lazily realised cells, in unit-scale coordinates.
    pub cell_side: f64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            rho: IntensityConvention::UnitRate.rho(),
            cell_side: 1.0,
        }
    }
}

impl EnvironmentSpec {
    /// Base process large enough for unit-speed paths of duration `horizon`
    /// at every scale down to `eps_min`.
    pub fn base(&self, seed: u64, horizon: f64, eps_min: f64) -> Result<Arc<BasePointProcess>> {
        Ok(Arc::new(BasePointProcess::new(
            seed,
            self.rho,
            self.cell_side,
            BasePointProcess::world_radius_for(horizon, eps_min),
        )?))
    }

    /// Rescaled view at `eps` of a fresh base process.
    pub fn view(&self, seed: u64, horizon: f64, eps: f64) -> Result<EnvironmentView> {
        EnvironmentView::new(self.base(seed, horizon, eps)?, eps)
    }
}

/// How initial velocities are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VelocitySpec {
    /// The same velocities in every replica.
    Explicit { velocities: Vec<[f64; 3]> },
    /// `n` independent uniform draws from the cap of half-angle `beta`.
    Cap { n: usize, beta: f64, axis: [f64; 3] },
    /// `n` independent uniform draws from the sphere.
    Uniform { n: usize },
}

impl VelocitySpec {
    pub fn explicit(velocities: &[Vec3]) -> Self {
        Self::Explicit {
            velocities: velocities.iter().map(|v| [v.x, v.y, v.z]).collect(),
        }
    }

    pub fn cap(n: usize, beta: f64) -> Self {
        let e = default_axis();
        Self::Cap {
            n,
            beta,
            axis: [e.x, e.y, e.z],
        }
    }

    /// Number of trajectories.
    pub fn len(&self) -> usize {
        match self {
            Self::Explicit { velocities } => velocities.len(),
            Self::Cap { n, .. } | Self::Uniform { n } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Explicit { velocities } => {
                if velocities.is_empty() {
                    return Err(invalid("no initial velocities given"));
                }
                for v in velocities {
                    let n = Vec3::from(*v).norm();
                    if (n - 1.0).abs() > 1e-9 {
                        return Err(invalid(format!(
                            "initial velocity {v:?} is not a unit vector"
                        )));
                    }
                }
            }
            Self::Cap { n, beta, axis } => {
                if *n == 0 {
                    return Err(invalid("N must be at least 1"));
                }
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(invalid(format!("beta must lie in (0, 1], got {beta}")));
                }
                if !(Vec3::from(*axis).norm() > 0.0) {
                    return Err(invalid("cap axis must be non-zero"));
                }
            }
            Self::Uniform { n } => {
                if *n == 0 {
                    return Err(invalid("N must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Velocities for one replica.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec3> {
        match self {
            Self::Explicit { velocities } => velocities.iter().map(|v| Vec3::from(*v)).collect(),
            Self::Cap { n, beta, axis } => {
                let e = Vec3::from(*axis).normalize();
                (0..*n).map(|_| sample_cap(rng, &e, *beta)).collect()
            }
            Self::Uniform { n } => (0..*n).map(|_| sample_uniform_sphere(rng)).collect(),
        }
    }
}

/// `n` unit vectors on a great-circle arc through the z-axis with
/// consecutive angular spacing `w`, so that their minimum pairwise angle is
/// exactly `w` when `(n − 1) w ≤ π`.
pub fn spread_velocities(n: usize, w: f64) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    if !(w > 0.0) || (n - 1) as f64 * w > std::f64::consts::PI {
        return Err(invalid(format!(
            "cannot place {n} directions {w} rad apart on an arc"
        )));
    }
    Ok((0..n)
        .map(|k| {
            let a = k as f64 * w;
            Vec3::new(a.sin(), 0.0, a.cos())
        })
        .collect())
}

/// `Some(x)` for finite `x`, so that "never" serialises as `null`.
pub(crate) fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::min_angle;
    use approx::assert_relative_eq;

    #[test]
    fn spread_velocities_have_the_requested_min_angle() {
        let v = spread_velocities(5, 0.3).unwrap();
        assert_relative_eq!(min_angle(&v).unwrap(), 0.3, epsilon = 1e-12);
        assert!(spread_velocities(5, 1.0).is_err());
    }

    #[test]
    fn cap_draws_stay_in_the_cap() {
        let spec = VelocitySpec::cap(50, 0.2);
        let mut rng = crate::rng::stream(3, crate::rng::Domain::InitialVelocity, &[]);
        for v in spec.draw(&mut rng) {
            assert!(v.z >= 0.2f64.cos() - 1e-12);
        }
    }
}

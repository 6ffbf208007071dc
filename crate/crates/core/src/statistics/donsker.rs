//! Diffusive limit of a single random flight: Gaussian endpoint marginals
//! and path functionals compared with Brownian motion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::Normal;

use super::functionals::{dictionary, PathFunctional, PathSummary};
use super::inference::{correlation, ks_test, mean_estimate, EstimateWithCI, TestOutcome};
use super::wiener::{wiener_reference, WIENER_PATHS, WIENER_STEPS};
use crate::error::{invalid, Result};
use crate::flight::{diffusivity, flight_covariance, sample_flight, sample_uniform_sphere};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonskerParams {
    pub rate: f64,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub wiener_paths: usize,
    pub wiener_steps: usize,
}

impl DonskerParams {
    pub fn new(rate: f64, horizon: f64, replicas: usize, seed: u64) -> Self {
        Self {
            rate,
            horizon,
            replicas,
            seed,
            wiener_paths: WIENER_PATHS,
            wiener_steps: WIENER_STEPS,
        }
    }
}

/// Flight and Brownian expectations of one functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalComparison {
    pub name: String,
    pub flight: EstimateWithCI,
    pub wiener: EstimateWithCI,
    pub difference: f64,
    /// `sqrt(se_flight² + se_wiener²)`.
    pub combined_se: f64,
    /// `|difference| / combined_se`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonskerReport {
    pub rate: f64,
    pub horizon: f64,
    pub replicas: usize,
    /// Exact per-coordinate variance of `T^{−1/2} Y(T)`.
    pub exact_variance: f64,
    /// Limiting per-coordinate variance `2/(dλ)`.
    pub limit_variance: f64,
    pub sample_variance: [f64; 3],
    /// KS of each rescaled endpoint coordinate against the exact variance.
    pub ks: [TestOutcome; 3],
    /// KS against the limiting variance.
    pub ks_limit: [TestOutcome; 3],
    /// Correlations of coordinate pairs (x,y), (x,z), (y,z).
    pub correlations: [f64; 3],
    pub correlation_threshold: f64,
    pub functionals: Vec<FunctionalComparison>,
}

impl DonskerReport {
    pub fn ks_passes(&self, level: f64) -> bool {
        self.ks.iter().all(|t| t.passes(level))
    }

    pub fn correlations_pass(&self) -> bool {
        self.correlations
            .iter()
            .all(|c| c.abs() <= self.correlation_threshold)
    }
}

pub fn donsker_test(p: &DonskerParams) -> Result<DonskerReport> {
    if !(p.rate > 0.0 && p.horizon > 0.0) {
        return Err(invalid("rate and T must be positive"));
    }
    if p.replicas < 2 {
        return Err(invalid("at least two replicas are required"));
    }
    let funcs: Vec<PathFunctional> = dictionary();
    let summaries = (0..p.replicas as u64)
        .into_par_iter()
        .map(|replica| -> Result<PathSummary> {
            let mut rng = stream(p.seed, Domain::Flight, &[replica]);
            let v0 = sample_uniform_sphere(&mut rng);
            let path = sample_flight(&mut rng, p.rate, &v0, p.horizon, 0.0)?;
            Ok(PathSummary::of_rescaled(&path))
        })
        .collect::<Result<Vec<_>>>()?;

    let exact_variance = flight_covariance(p.rate, p.horizon) / p.horizon;
    let limit_variance = diffusivity(p.rate);
    let exact = Normal::new(0.0, exact_variance.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let limit = Normal::new(0.0, limit_variance.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let coords: Vec<Vec<f64>> = (0..3)
        .map(|a| summaries.iter().map(|s| s.endpoint[a]).collect())
        .collect();
    let m = summaries.len() as f64;
    let sample_variance = std::array::from_fn(|a| coords[a].iter().map(|x| x * x).sum::<f64>() / m);
    let ks = [
        ks_test(&coords[0], &exact)?,
        ks_test(&coords[1], &exact)?,
        ks_test(&coords[2], &exact)?,
    ];
    let ks_limit = [
        ks_test(&coords[0], &limit)?,
        ks_test(&coords[1], &limit)?,
        ks_test(&coords[2], &limit)?,
    ];
    let correlations = [
        correlation(&coords[0], &coords[1]),
        correlation(&coords[0], &coords[2]),
        correlation(&coords[1], &coords[2]),
    ];

    let wiener = wiener_reference(
        p.seed,
        p.wiener_paths,
        p.wiener_steps,
        limit_variance,
        &funcs,
    )?;
    let functionals = funcs
        .iter()
        .zip(&wiener.estimates)
        .map(|(f, w)| -> Result<FunctionalComparison> {
            let values: Vec<f64> = summaries.iter().map(|s| f.evaluate(s)).collect();
            let flight = mean_estimate(&values, p.seed)?;
            let difference = flight.estimate - w.estimate;
            let combined_se = flight.std_error().hypot(w.std_error());
            Ok(FunctionalComparison {
                name: f.name(),
                flight,
                wiener: *w,
                difference,
                combined_se,
                z: difference.abs() / combined_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DonskerReport {
        rate: p.rate,
        horizon: p.horizon,
        replicas: p.replicas,
        exact_variance,
        limit_variance,
        sample_variance,
        ks,
        ks_limit,
        correlations,
        correlation_threshold: 3.0 / m.sqrt(),
        functionals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(horizon: f64, replicas: usize) -> DonskerParams {
        DonskerParams {
            wiener_paths: 5_000,
            wiener_steps: 100,
            ..DonskerParams::new(1.0, horizon, replicas, 21)
        }
    }

    #[test]
    fn diffusive_endpoints_are_gaussian() {
        let rep = donsker_test(&params(100.0, 4_000)).unwrap();
        assert!(rep.ks_passes(0.01), "{:?}", rep.ks);
        assert!(rep.correlations_pass());
        for v in rep.sample_variance {
            assert!((v / rep.exact_variance - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn ballistic_endpoints_are_not_gaussian() {
        // At T ≪ 1/λ, T^{−1/2} Y(T) ≈ √T v0 has bounded uniform marginals.
        let rep = donsker_test(&params(0.1, 4_000)).unwrap();
        assert!(!rep.ks_passes(0.01));
    }
}

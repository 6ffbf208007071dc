//! Monte Carlo expectations of path functionals under Brownian
//! motion, built from Gaussian increments on a uniform grid of `[0, 1]`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functionals::{PathFunctional, PathSummary};
use super::inference::{mean_estimate, EstimateWithCI};
use crate::error::{invalid, Result};
use crate::rng::{stream, Domain};
use crate::Vec3;

/// Default number of Brownian paths.
pub const WIENER_PATHS: usize = 100_000;
/// Default number of time steps on `[0, 1]`.
pub const WIENER_STEPS: usize = 1_000;
const CHUNK: usize = 1_000;

/// Expectations of path functionals for Brownian motion with
/// per-coordinate variance `diffusivity · t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerReference {
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub diffusivity: f64,
    pub functionals: Vec<PathFunctional>,
    pub estimates: Vec<EstimateWithCI>,
}

/// Summary of one discretised Brownian path.
fn brownian_summary<R: rand::Rng + ?Sized>(rng: &mut R, steps: usize, sd: f64) -> PathSummary {
    let mut z = Vec3::zeros();
    PathSummary::from_vertices((0..steps).map(|_| {
        for a in 0..3 {
            let g: f64 = StandardNormal.sample(rng);
            z[a] += sd * g;
        }
        z
    }))
}

/// Computes the reference without the cache.
pub fn compute_wiener_reference(
    seed: u64,
    paths: usize,
    steps: usize,
    diffusivity: f64,
    functionals: &[PathFunctional],
) -> Result<WienerReference> {
    if paths < 2 || steps == 0 {
        return Err(invalid(
            "Wiener reference needs at least two paths and one step",
        ));
    }
    if !(diffusivity > 0.0 && diffusivity.is_finite()) {
        return Err(invalid(format!(
            "diffusivity must be positive, got {diffusivity}"
        )));
    }
    if functionals.is_empty() {
        return Err(invalid("no functionals given"));
    }
    let sd = (diffusivity / steps as f64).sqrt();
    let chunks = paths.div_ceil(CHUNK);
    let values: Vec<Vec<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Domain::Wiener, &[c as u64]);
            let len = CHUNK.min(paths - c * CHUNK);
            (0..len)
                .map(|_| {
                    let s = brownian_summary(&mut rng, steps, sd);
                    functionals.iter().map(|f| f.evaluate(&s)).collect()
                })
                .collect()
        })
        .collect();
    let flat: Vec<Vec<f64>> = values.into_iter().flatten().collect();
    let estimates = (0..functionals.len())
        .map(|i| {
            let column: Vec<f64> = flat.iter().map(|v| v[i]).collect();
            mean_estimate(&column, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WienerReference {
        seed,
        paths,
        steps,
        diffusivity,
        functionals: functionals.to_vec(),
        estimates,
    })
}

type CacheKey = (u64, usize, usize, u64, String);

/// Cached per process on all arguments.
pub fn wiener_reference(
    seed: u64,
    paths: usize,
    steps: usize,
    diffusivity: f64,
    functionals: &[PathFunctional],
) -> Result<Arc<WienerReference>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<WienerReference>>>> = OnceLock::new();
    let names = serde_json::to_string(functionals)?;
    let key = (seed, paths, steps, diffusivity.to_bits(), names);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().expect("cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let fresh = Arc::new(compute_wiener_reference(
        seed,
        paths,
        steps,
        diffusivity,
        functionals,
    )?);
    cache
        .lock()
        .expect("cache poisoned")
        .insert(key, fresh.clone());
    Ok(fresh)
}

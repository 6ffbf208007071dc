//! Markovian random flights: exponential flight times at rate `λ` and
//! independent uniform directions.

use rand::Rng;
use rand_distr::{Distribution, Exp, UnitSphere};

use crate::dynamics::{Path, ScatteringEvent};
use crate::error::{invalid, Error, Result};
use crate::Vec3;

/// Flight trajectory. Event centres are the virtual scatterer centres.
pub type FlightPath = Path;

/// Uniform direction on the unit sphere.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(x, y, z).normalize()
}

/// Centre of the sphere of radius `r` that would turn `u_pre` into `u_post`
/// by a specular collision at `pos`.
pub fn virtual_centre(pos: &Vec3, u_pre: &Vec3, u_post: &Vec3, r: f64) -> Result<Vec3> {
    let d = u_pre - u_post;
    let n = d.norm();
    if n == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(pos + d * (r / n))
}

/// Samples a flight from the origin up to `horizon`. Virtual centres are
/// computed for scatterers of radius `r`.
pub fn sample_flight<R: Rng + ?Sized>(
    rng: &mut R,
    rate: f64,
    v0: &Vec3,
    horizon: f64,
    r: f64,
) -> Result<FlightPath> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("rate must be positive, got {rate}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let gaps = Exp::new(rate).map_err(|e| invalid(format!("rate: {e}")))?;
    let mut path = Path::straight(*v0, horizon);
    let mut t = 0.0;
    let mut pos = Vec3::zeros();
    let mut u = *v0;
    loop {
        let gap: f64 = gaps.sample(rng);
        if t + gap > horizon {
            break;
        }
        t += gap;
        pos += u * gap;
        let next = sample_uniform_sphere(rng);
        let centre = virtual_centre(&pos, &u, &next, r)?;
        path.events.push(ScatteringEvent {
            time: t,
            position: pos,
            v_pre: u,
            v_post: next,
            centre,
        });
        u = next;
    }
    Ok(path)
}

/// Per-coordinate variance of `Y(T)` for a flight with uniform initial
/// velocity: `(2/(dλ²))(λT − 1 + e^{−λT})`.
pub fn flight_covariance(rate: f64, horizon: f64) -> f64 {
    let d = crate::DIM as f64;
    let x = rate * horizon;
    // x − 1 + e^{−x}, with a series where the subtraction cancels.
    let g = if x < 1e-3 {
        x * x / 2.0 - x.powi(3) / 6.0 + x.powi(4) / 24.0
    } else {
        x + (-x).exp_m1()
    };
    2.0 / (d * rate * rate) * g
}

/// Long-time per-coordinate diffusivity `2/(dλ)`.
pub fn diffusivity(rate: f64) -> f64 {
    2.0 / (crate::DIM as f64 * rate)
}

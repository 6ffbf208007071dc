//! Occupation of a ball by a random flight started at the origin, compared
//! with the integral of `γ(x) = |x|⁻² + |x|⁻¹` over the ball.

use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{mean_estimate, proportion, EstimateWithCI};
use crate::environment::ray_ball_interval;
use crate::error::{invalid, Error, Result};
use crate::flight::sample_uniform_sphere;
use crate::rng::{stream, Domain};
use crate::Vec3;

/// Default ratio between the escape radius and `|x₀| + a`.
pub const ESCAPE_FACTOR: f64 = 20.0;
/// Safety cap on scattering events per flight.
const MAX_STEPS: usize = 50_000_000;

/// `γ(x)` with unit constant in three dimensions.
pub fn gamma(x: &Vec3) -> f64 {
    let n = x.norm();
    n.powi(-2) + n.recip()
}

/// Radial profile of `∫_ball γ`: the area of the sphere of radius `ρ`
/// inside the ball of radius `a` at distance `d`, times `γ(ρ)`.
fn shell_integrand(rho: f64, d: f64, a: f64) -> f64 {
    let area = std::f64::consts::PI * rho * (a * a - (d - rho).powi(2)) / d;
    area * (rho.powi(-2) + rho.recip())
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    adaptive(f, a, fa, b, fb, m, fm, whole, tol, 40)
}

/// `∫_{|x − x₀| < a} γ(x) dx` for `|x₀| = distance`, by quadrature over
/// spherical shells about the origin.
pub fn gamma_ball_integral(distance: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0 && distance.is_finite()) {
        return Err(invalid("ball radius must be positive and distance finite"));
    }
    if radius >= distance {
        return Err(Error::SingularBall { distance, radius });
    }
    let f = |rho: f64| shell_integrand(rho, distance, radius);
    let lo = distance - radius;
    let hi = distance + radius;
    // The integrand is at most ~ π a² (1/ρ + 1)/D; aim at relative 1e-10.
    let scale = std::f64::consts::PI * radius * radius * (lo.recip() + 1.0) / distance;
    Ok(integrate(&f, lo, hi, 1e-10 * scale * (hi - lo)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenParams {
    pub centre: [f64; 3],
    /// Radius `a` of the target ball.
    pub radius: f64,
    /// Fattening `r` of the continuous-time target.
    pub r: f64,
    pub rate: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Flights stop once `|Y| > escape_factor (|x₀| + a)`.
    pub escape_factor: f64,
}

/// Hitting statistics of one flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenRecord {
    pub replica: u64,
    /// Scattering points inside the open ball.
    pub visits: u64,
    /// Time spent within `a + r` of the centre.
    pub occupation: f64,
    /// Whether the path itself entered the ball.
    pub path_hit: bool,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenReport {
    pub distance: f64,
    pub radius: f64,
    pub r: f64,
    pub escape_radius: f64,
    /// Mean number of scattering points in the ball.
    pub visits: EstimateWithCI,
    /// Fraction of flights with at least one scattering point in the ball.
    pub visit_probability: EstimateWithCI,
    /// `r⁻¹ E[time within a + r]`.
    pub occupation_over_r: EstimateWithCI,
    /// Fraction of flights whose path enters the ball.
    pub path_hit_probability: EstimateWithCI,
    /// `∫_A γ` and `r⁻¹ ∫_{A_r} γ`.
    pub gamma_integral: f64,
    pub gamma_integral_fattened_over_r: f64,
    /// `visits / ∫_A γ`.
    pub visit_ratio: f64,
    /// `occupation_over_r / (r⁻¹ ∫_{A_r} γ)`.
    pub occupation_ratio: f64,
    pub records: Vec<GreenRecord>,
}

/// Time in `[0, len]` that the ray `from + t·dir` spends inside the ball.
fn time_inside(from: &Vec3, dir: &Vec3, centre: &Vec3, radius: f64, len: f64) -> f64 {
    match ray_ball_interval(from, dir, centre, radius) {
        Some((t0, t1)) => (t1.min(len) - t0.max(0.0)).max(0.0),
        None => 0.0,
    }
}

pub fn green_occupation(p: &GreenParams) -> Result<GreenReport> {
    let x0 = Vec3::from(p.centre);
    let distance = x0.norm();
    let gamma_integral = gamma_ball_integral(distance, p.radius)?;
    if !(p.r > 0.0 && p.rate > 0.0 && p.escape_factor > 1.0) {
        return Err(invalid(
            "r and rate must be positive and the escape factor above 1",
        ));
    }
    if p.radius + p.r >= distance {
        return Err(Error::SingularBall {
            distance,
            radius: p.radius + p.r,
        });
    }
    if p.replicas < 2 {
        return Err(invalid("at least two replicas are required"));
    }
    let escape = p.escape_factor * (distance + p.radius);
    let fat = p.radius + p.r;
    let gaps = Exp::new(p.rate).map_err(|e| invalid(format!("rate: {e}")))?;
    let records = (0..p.replicas as u64)
        .into_par_iter()
        .map(|replica| -> Result<GreenRecord> {
            let mut rng = stream(p.seed, Domain::Flight, &[replica]);
            let mut pos = Vec3::zeros();
            let mut rec = GreenRecord {
                replica,
                visits: 0,
                occupation: 0.0,
                path_hit: false,
                steps: 0,
            };
            while pos.norm() <= escape {
                if rec.steps as usize >= MAX_STEPS {
                    return Err(Error::RunawayTrajectory(MAX_STEPS));
                }
                let u = sample_uniform_sphere(&mut rng);
                let gap: f64 = gaps.sample(&mut rng);
                rec.occupation += time_inside(&pos, &u, &x0, fat, gap);
                rec.path_hit |= time_inside(&pos, &u, &x0, p.radius, gap) > 0.0;
                pos += u * gap;
                rec.steps += 1;
                if (pos - x0).norm() < p.radius {
                    rec.visits += 1;
                }
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let visits_v: Vec<f64> = records.iter().map(|x| x.visits as f64).collect();
    let occ_v: Vec<f64> = records.iter().map(|x| x.occupation / p.r).collect();
    let visits = mean_estimate(&visits_v, p.seed)?;
    let occupation_over_r = mean_estimate(&occ_v, p.seed)?;
    let m = records.len();
    let visit_probability = proportion(records.iter().filter(|x| x.visits > 0).count(), m, p.seed)?;
    let path_hit_probability =
        proportion(records.iter().filter(|x| x.path_hit).count(), m, p.seed)?;
    let fattened = gamma_ball_integral(distance, fat)? / p.r;
    Ok(GreenReport {
        distance,
        radius: p.radius,
        r: p.r,
        escape_radius: escape,
        visit_ratio: visits.estimate / gamma_integral,
        occupation_ratio: occupation_over_r.estimate / fattened,
        visits,
        visit_probability,
        occupation_over_r,
        path_hit_probability,
        gamma_integral,
        gamma_integral_fattened_over_r: fattened,
        records,
    })
}

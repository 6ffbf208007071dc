//! Triangular-array averages over one fixed scatterer field: per scaling
//! row, averages of path functionals over `N_n` coupled Lorentz and flight
//! trajectories, compared with flight and Brownian references.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functionals::{PathFunctional, PathSummary};
use super::inference::{
    binomial_upper_tail, hoeffding_delta, mean_estimate, shifted_mean, EstimateWithCI,
};
use super::wiener::{wiener_reference, WIENER_PATHS, WIENER_STEPS};
use super::EnvironmentSpec;
use crate::coupling::{couple, divergence_times};
use crate::environment::EnvironmentView;
use crate::error::{invalid, Error, Result};
use crate::flight::{diffusivity, sample_flight};
use crate::rng::{derive_seed, stream, Domain};
use crate::schedule::{
    check_schedule, min_angle, sample_cap, Mode, ScalingRow, ScheduleReport, DEFAULT_BUDGET,
};

/// Significance level of the Hoeffding envelope and the row-wise
/// mismatch tests.
pub const LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedParams {
    pub seed: u64,
    pub rows: Vec<ScalingRow>,
    pub functionals: Vec<PathFunctional>,
    pub environment: EnvironmentSpec,
    /// Independent flights per row for the annealed flight reference.
    pub flight_replicas: usize,
    pub wiener_paths: usize,
    pub wiener_steps: usize,
    /// Run even if the schedule fails the admissibility check.
    pub force: bool,
}

impl QuenchedParams {
    pub fn new(seed: u64, rows: Vec<ScalingRow>, functionals: Vec<PathFunctional>) -> Self {
        Self {
            seed,
            rows,
            functionals,
            environment: EnvironmentSpec::default(),
            flight_replicas: 10_000,
            wiener_paths: WIENER_PATHS,
            wiener_steps: WIENER_STEPS,
            force: false,
        }
    }
}

/// One functional on one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRow {
    pub name: String,
    pub cap: f64,
    /// `N⁻¹ Σ F(X_j)` over the Lorentz trajectories.
    pub lorentz_average: f64,
    /// `N⁻¹ Σ F(Y_j)` over the coupled flights.
    pub flight_average: f64,
    /// Annealed expectation of `F(Y)` from independent flights.
    pub flight_reference: EstimateWithCI,
    pub wiener: EstimateWithCI,
    /// `|X̄ − Ȳ|`.
    pub coupling_gap: f64,
    /// `|Ȳ − E F(Y)|`.
    pub sampling_gap: f64,
    /// `|E F(Y) − E F(W)|`.
    pub diffusive_gap: f64,
    /// `|X̄ − E F(W)|`.
    pub total_gap: f64,
    /// Hoeffding deviation at [`LEVEL`] for `N` variables bounded by the cap.
    pub hoeffding: f64,
    /// `hoeffding + 2 cap · mismatched / N + 3 se(Wiener)`.
    pub envelope: f64,
    pub within_envelope: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedRow {
    pub n: u32,
    pub eps: f64,
    pub r: f64,
    pub horizon: f64,
    pub beta: f64,
    pub n_traj: usize,
    pub alpha: f64,
    pub w: f64,
    pub w_below_alpha: bool,
    /// `σ < T` for the row's ensemble.
    pub mismatch: bool,
    pub mismatched_trajectories: usize,
    /// `N rT + N² (r/β)^{2/3}`.
    pub bound: f64,
    /// `P(Bin(N, min(1, Ĉ bound / N)) ≥ mismatched)`.
    pub mismatch_tail: f64,
    pub mismatch_consistent: bool,
    pub functionals: Vec<FunctionalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedReport {
    pub seed: u64,
    pub environment_seed: u64,
    pub schedule: ScheduleReport,
    pub rate: f64,
    pub rows: Vec<QuenchedRow>,
    /// `Σ mismatched / Σ bound`.
    pub fitted_constant: f64,
    /// Rows with `σ < T`.
    pub mismatch_rows: usize,
    /// Rows with `w < α`.
    pub small_angle_rows: usize,
    /// Rows with `σ < T` and `w ≥ α`.
    pub mismatch_wide_rows: usize,
    /// `#(σ<T) ≤ #(w<α) + #(σ<T, w≥α)`.
    pub chain_holds: bool,
    /// Every row's mismatch count passes the Bonferroni-corrected tail test.
    pub mismatch_consistent: bool,
    /// All functionals are within their envelope on the final row.
    pub final_row_within_envelope: bool,
}

struct RowSample {
    w: f64,
    mismatch: bool,
    mismatched: usize,
    lorentz: Vec<PathSummary>,
    flights: Vec<PathSummary>,
}

fn run_row(p: &QuenchedParams, env: &EnvironmentView, row: &ScalingRow) -> Result<RowSample> {
    let axis = row.axis();
    let velocities: Vec<_> = (0..row.n_traj)
        .map(|j| {
            let mut rng = stream(p.seed, Domain::InitialVelocity, &[row.n as u64, j as u64]);
            sample_cap(&mut rng, &axis, row.beta)
        })
        .collect();
    let w = if row.n_traj > 1 {
        min_angle(&velocities)?
    } else {
        f64::INFINITY
    };
    if w == 0.0 {
        return Err(Error::DuplicateVelocities);
    }
    let ens = couple(
        env,
        &velocities,
        env.rate(),
        row.horizon,
        p.seed,
        row.n as u64,
    )?;
    let div = divergence_times(&ens.lorentz, &ens.flights);
    Ok(RowSample {
        w,
        mismatch: ens.times.mismatch_before(row.horizon),
        mismatched: div.iter().filter(|&&d| d < row.horizon).count(),
        lorentz: ens.lorentz.iter().map(PathSummary::of_rescaled).collect(),
        flights: ens.flights.iter().map(PathSummary::of_rescaled).collect(),
    })
}

/// Annealed flight reference for one row: cap velocities, independent
/// flights.
fn flight_reference(p: &QuenchedParams, row: &ScalingRow, rate: f64) -> Result<Vec<PathSummary>> {
    let axis = row.axis();
    (0..p.flight_replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(p.seed, Domain::Flight, &[row.n as u64, i]);
            let v0 = sample_cap(&mut rng, &axis, row.beta);
            let path = sample_flight(&mut rng, rate, &v0, row.horizon, row.r)?;
            Ok(PathSummary::of_rescaled(&path))
        })
        .collect()
}

fn average(f: &PathFunctional, s: &[PathSummary]) -> f64 {
    let values: Vec<f64> = s.iter().map(|x| f.evaluate(x)).collect();
    shifted_mean(&values)
}

pub fn quenched_average_experiment(p: &QuenchedParams) -> Result<QuenchedReport> {
    if p.functionals.is_empty() {
        return Err(invalid("no functionals given"));
    }
    if p.flight_replicas < 2 {
        return Err(invalid("the flight reference needs at least two replicas"));
    }
    let schedule = check_schedule(&p.rows, Mode::Quenched, DEFAULT_BUDGET)?;
    if !schedule.admissible && !p.force {
        return Err(Error::Inadmissible(schedule.reasons.join("; ")));
    }
    let environment_seed = derive_seed(p.seed, Domain::Environment, &[]);
    let horizon_max = p.rows.iter().map(|r| r.horizon).fold(0.0, f64::max);
    let eps_min = p.rows.iter().map(|r| r.eps).fold(f64::INFINITY, f64::min);
    let base = p.environment.base(environment_seed, horizon_max, eps_min)?;
    let rate = crate::environment::collision_rate(p.environment.rho);
    let wiener = wiener_reference(
        p.seed,
        p.wiener_paths,
        p.wiener_steps,
        diffusivity(rate),
        &p.functionals,
    )?;

    let mut samples = Vec::with_capacity(p.rows.len());
    for row in &p.rows {
        let env = EnvironmentView::new(base.clone(), row.eps)?;
        samples.push(run_row(p, &env, row)?);
    }
    let total_mismatched: usize = samples.iter().map(|s| s.mismatched).sum();
    let total_bound: f64 = p.rows.iter().map(|r| r.array_term()).sum();
    let fitted_constant = total_mismatched as f64 / total_bound;
    let bonferroni = LEVEL / p.rows.len() as f64;

    let mut rows = Vec::with_capacity(p.rows.len());
    for (row, s) in p.rows.iter().zip(&samples) {
        let reference = flight_reference(p, row, rate)?;
        let n = row.n_traj as f64;
        let functionals = p
            .functionals
            .iter()
            .zip(&wiener.estimates)
            .map(|(f, w)| -> Result<FunctionalRow> {
                let values: Vec<f64> = reference.iter().map(|x| f.evaluate(x)).collect();
                let flight_reference = mean_estimate(&values, p.seed)?;
                let lorentz_average = average(f, &s.lorentz);
                let flight_average = average(f, &s.flights);
                let hoeffding = hoeffding_delta(row.n_traj, f.cap, LEVEL);
                let total_gap = (lorentz_average - w.estimate).abs();
                let envelope =
                    hoeffding + 2.0 * f.cap * s.mismatched as f64 / n + 3.0 * w.std_error();
                Ok(FunctionalRow {
                    name: f.name(),
                    cap: f.cap,
                    lorentz_average,
                    flight_average,
                    coupling_gap: (lorentz_average - flight_average).abs(),
                    sampling_gap: (flight_average - flight_reference.estimate).abs(),
                    diffusive_gap: (flight_reference.estimate - w.estimate).abs(),
                    flight_reference,
                    wiener: *w,
                    total_gap,
                    hoeffding,
                    envelope,
                    within_envelope: total_gap <= envelope,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let bound = row.array_term();
        let prob = (fitted_constant * bound / n).min(1.0);
        let mismatch_tail = binomial_upper_tail(s.mismatched as u64, row.n_traj as u64, prob)?;
        rows.push(QuenchedRow {
            n: row.n,
            eps: row.eps,
            r: row.r,
            horizon: row.horizon,
            beta: row.beta,
            n_traj: row.n_traj,
            alpha: row.alpha,
            w: s.w,
            w_below_alpha: s.w < row.alpha,
            mismatch: s.mismatch,
            mismatched_trajectories: s.mismatched,
            bound,
            mismatch_tail,
            mismatch_consistent: mismatch_tail > bonferroni,
            functionals,
        });
    }

    let mismatch_rows = rows.iter().filter(|r| r.mismatch).count();
    let small_angle_rows = rows.iter().filter(|r| r.w_below_alpha).count();
    let mismatch_wide_rows = rows
        .iter()
        .filter(|r| r.mismatch && !r.w_below_alpha)
        .count();
    Ok(QuenchedReport {
        seed: p.seed,
        environment_seed,
        schedule,
        rate,
        fitted_constant,
        mismatch_rows,
        small_angle_rows,
        mismatch_wide_rows,
        chain_holds: mismatch_rows <= small_angle_rows + mismatch_wide_rows,
        mismatch_consistent: rows.iter().all(|r| r.mismatch_consistent),
        final_row_within_envelope: rows
            .last()
            .is_some_and(|r| r.functionals.iter().all(|f| f.within_envelope)),
        rows,
    })
}

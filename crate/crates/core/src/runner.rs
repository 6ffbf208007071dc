//! Experiment dispatch for the command-line tool: validates a
//! [`RunConfig`], runs the named experiment on a dedicated thread pool and
//! writes its tables, records and manifest.

use std::path::PathBuf;
use std::time::Instant;

use crate::config::{Experiment, RunConfig};
use crate::coupling::couple;
use crate::dynamics::{simulate_lorentz, Path};
use crate::environment::Scatterers;
use crate::error::{Error, Result};
use crate::output::{int, num, opt, Manifest, OutputDir, Table, MANIFEST_VERSION, TOOL, VERSION};
use crate::rng::{derive_seed, stream, Domain};
use crate::schedule::{check_schedule, Mode, DEFAULT_BUDGET};
use crate::statistics::inference::EstimateWithCI;
use crate::statistics::mismatch::{environment_seed, MismatchParams};
use crate::statistics::{
    dictionary, donsker_test, estimate_event_probabilities, estimate_mismatch_probability,
    green_occupation, quenched_average_experiment, DonskerParams, EventParams, GreenParams,
    QuenchedParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit status for an error: 2 for bad input or refused schedules, 3 for
/// failures during the run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_)
        | Error::Config(_)
        | Error::Inadmissible(_)
        | Error::DuplicateVelocities
        | Error::TooFewVelocities(_)
        | Error::SingularBall { .. }
        | Error::EmptySchedule => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Files and a one-line summary of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub summary: String,
}

/// State shared by the experiment bodies.
struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: OutputDir,
    seeds: Vec<(String, u64)>,
}

/// Validates `config`, runs it and writes every output. A manifest is
/// written whenever the output directory could be created, including for
/// failed runs.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let threads = config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut ctx = Ctx {
        cfg: config,
        out: OutputDir::create(&config.out, config)?,
        seeds: vec![("seed".into(), config.seed)],
    };
    let start = Instant::now();
    let result = pool.install(|| dispatch(&mut ctx));
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: TOOL.into(),
        version: VERSION.into(),
        experiment: config.experiment.name().into(),
        config_hash: ctx.out.config_hash().into(),
        config: config.clone(),
        seeds: ctx.seeds.clone(),
        threads,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        status: match &result {
            Ok(_) => "ok".into(),
            Err(e) => format!("error: {e}"),
        },
        files: ctx.out.file_entries()?,
    };
    let manifest = ctx.out.write_manifest(&manifest)?;
    let summary = result?;
    Ok(RunOutcome {
        files: ctx.out.files().to_vec(),
        manifest,
        summary,
    })
}

fn dispatch(ctx: &mut Ctx) -> Result<String> {
    match ctx.cfg.experiment {
        Experiment::Simulate => simulate(ctx),
        Experiment::Couple => couple_run(ctx),
        Experiment::Mismatch => mismatch(ctx),
        Experiment::Events => events(ctx),
        Experiment::Green => green(ctx),
        Experiment::Donsker => donsker(ctx),
        Experiment::Quenched => quenched(ctx),
    }
}

const CI_COLUMNS: [&str; 5] = ["estimate", "ci_lo", "ci_hi", "ci_method", "replicas"];

fn ci_cells(e: &EstimateWithCI) -> Vec<String> {
    vec![
        num(e.estimate),
        num(e.lo),
        num(e.hi),
        format!("{:?}", e.method).to_lowercase(),
        int(e.replicas),
    ]
}

fn with_ci(head: &[&str], tail: &[&str]) -> Table {
    let cols: Vec<&str> = head
        .iter()
        .chain(CI_COLUMNS.iter())
        .chain(tail.iter())
        .copied()
        .collect();
    Table::new(&cols)
}

/// Rows `t, x, y, z` (and scatterer centre) from the origin, through every
/// event, to the endpoint.
fn push_path(t: &mut Table, prefix: &[String], path: &Path) {
    let row = |time: f64, p: crate::Vec3, c: Option<crate::Vec3>| {
        let mut r = prefix.to_vec();
        r.extend([num(time), num(p.x), num(p.y), num(p.z)]);
        r.extend([
            opt(c.map(|c| c.x)),
            opt(c.map(|c| c.y)),
            opt(c.map(|c| c.z)),
        ]);
        r
    };
    t.push(row(0.0, crate::Vec3::zeros(), None));
    for e in &path.events {
        t.push(row(e.time, e.position, Some(e.centre)));
    }
    t.push(row(path.horizon, path.endpoint(), None));
}

fn simulate(ctx: &mut Ctx) -> Result<String> {
    let c = ctx.cfg;
    let env_seed = derive_seed(c.seed, Domain::Environment, &[]);
    ctx.seeds.push(("environment".into(), env_seed));
    let env = c.environment().view(env_seed, c.horizon, c.eps)?;
    let v0 = c.simulate_velocity();
    let path = simulate_lorentz(&env, &v0, c.horizon)?;
    let end = path.endpoint();
    let mut t = Table::new(&[
        "eps",
        "r",
        "T",
        "rate",
        "events",
        "end_x",
        "end_y",
        "end_z",
        "displacement",
    ]);
    t.push(vec![
        num(c.eps),
        num(env.radius()),
        num(c.horizon),
        num(env.rate()),
        int(path.events.len()),
        num(end.x),
        num(end.y),
        num(end.z),
        num(end.norm()),
    ]);
    ctx.out.write_csv("summary.csv", &t)?;
    if c.dump {
        let mut d = Table::new(&["t", "x", "y", "z", "cx", "cy", "cz"]);
        push_path(&mut d, &[], &path);
        ctx.out.write_csv("trajectory.csv", &d)?;
    }
    Ok(format!(
        "{} collisions, |X(T)| = {:.6}",
        path.events.len(),
        end.norm()
    ))
}

fn mismatch_params(c: &RunConfig) -> Result<MismatchParams> {
    Ok(MismatchParams {
        eps: c.eps,
        horizon: c.horizon,
        velocities: c.velocity_spec()?,
        replicas: c.replicas,
        seed: c.seed,
        mode: c.mode,
        environment: c.environment(),
        force: c.force,
    })
}

fn couple_run(ctx: &mut Ctx) -> Result<String> {
    let c = ctx.cfg;
    let p = mismatch_params(c)?;
    let rep = estimate_mismatch_probability(&p)?;
    let mut t = Table::new(&[
        "eps",
        "r",
        "T",
        "N",
        "replicas",
        "mismatches",
        "identity_failures",
        "divergence_disagreements",
        "mean_lorentz_events",
        "mean_flight_events",
    ]);
    let m = rep.records.len() as f64;
    t.push(vec![
        num(rep.eps),
        num(rep.r),
        num(rep.horizon),
        int(rep.n_traj),
        int(rep.records.len()),
        int(rep.records.iter().filter(|x| x.mismatch).count()),
        int(rep.identity_failures),
        int(rep.divergence_disagreements),
        num(rep
            .records
            .iter()
            .map(|x| x.lorentz_events as f64)
            .sum::<f64>()
            / m),
        num(rep
            .records
            .iter()
            .map(|x| x.flight_events as f64)
            .sum::<f64>()
            / m),
    ]);
    ctx.out.write_csv("summary.csv", &t)?;
    ctx.out.write_jsonl("records.jsonl", &rep.records)?;
    if c.dump {
        let env_seed = environment_seed(c.seed, c.mode, 0);
        let env = c.environment().view(env_seed, c.horizon, c.eps)?;
        let mut vrng = stream(c.seed, Domain::InitialVelocity, &[0]);
        let v = p.velocities.draw(&mut vrng);
        let ens = couple(&env, &v, env.rate(), c.horizon, c.seed, 0)?;
        let mut d = Table::new(&["process", "j", "t", "x", "y", "z", "cx", "cy", "cz"]);
        for (j, path) in ens.lorentz.iter().enumerate() {
            push_path(&mut d, &["lorentz".into(), int(j)], path);
        }
        for (j, path) in ens.flights.iter().enumerate() {
            push_path(&mut d, &["flight".into(), int(j)], path);
        }
        ctx.out.write_csv("trajectories.csv", &d)?;
    }
    Ok(format!(
        "{} replicas, {} identity failures",
        rep.records.len(),
        rep.identity_failures
    ))
}

fn mismatch(ctx: &mut Ctx) -> Result<String> {
    let rep = estimate_mismatch_probability(&mismatch_params(ctx.cfg)?)?;
    let mut t = with_ci(
        &["eps", "r", "T", "N", "mode"],
        &["mean_w", "bound", "fitted_constant", "identity_failures"],
    );
    let mut row = vec![
        num(rep.eps),
        num(rep.r),
        num(rep.horizon),
        int(rep.n_traj),
        format!("{:?}", rep.mode).to_lowercase(),
    ];
    row.extend(ci_cells(&rep.estimate));
    row.extend([
        opt(rep.mean_w),
        num(rep.bound_term),
        num(rep.fitted_constant),
        int(rep.identity_failures),
    ]);
    t.push(row);
    ctx.out.write_csv("summary.csv", &t)?;
    ctx.out.write_jsonl("records.jsonl", &rep.records)?;
    Ok(format!(
        "p = {:.4} [{:.4}, {:.4}], bound shape {:.4}",
        rep.estimate.estimate, rep.estimate.lo, rep.estimate.hi, rep.bound_term
    ))
}

fn events(ctx: &mut Ctx) -> Result<String> {
    let c = ctx.cfg;
    let p = EventParams {
        r: c.radius()?,
        rate: c.rate(),
        horizon: c.horizon,
        velocities: c.velocity_spec()?,
        replicas: c.replicas,
        seed: c.seed,
    };
    let rep = estimate_event_probabilities(&p)?;
    let mut t = with_ci(&["event"], &["bound_shape", "fitted_constant"]);
    let rt = rep.r * rep.horizon;
    let mut add = |name: &str, e: Option<&EstimateWithCI>, shape: Option<f64>| {
        if let Some(e) = e {
            let mut row = vec![name.to_string()];
            row.extend(ci_cells(e));
            row.extend([opt(shape), opt(shape.map(|s| e.estimate / s))]);
            t.push(row);
        }
    };
    add("A", Some(&rep.a), Some(rt));
    add("B", rep.b.as_ref(), None);
    add("B_I", rep.b1.as_ref(), rep.mean_w.map(|w| rep.r / w));
    add("B_II", rep.b2.as_ref(), Some(rep.r));
    add("B_III", rep.b3.as_ref(), Some(rep.r));
    add("B_IV", rep.b4.as_ref(), Some(rep.r));
    ctx.out.write_csv("summary.csv", &t)?;
    ctx.out.write_jsonl("records.jsonl", &rep.records)?;
    Ok(format!(
        "{} pairs with B, {} uncovered",
        rep.pairs_with_b, rep.uncovered
    ))
}

fn green(ctx: &mut Ctx) -> Result<String> {
    let c = ctx.cfg;
    let p = GreenParams {
        centre: c.x0,
        radius: c.a,
        r: c.radius()?,
        rate: c.rate(),
        replicas: c.replicas,
        seed: c.seed,
        escape_factor: c.escape_factor,
    };
    let rep = green_occupation(&p)?;
    let mut t = Table::new(&[
        "quantity",
        "estimate",
        "ci_lo",
        "ci_hi",
        "gamma_integral",
        "ratio",
    ]);
    let row = |name: &str, e: &EstimateWithCI, integral: Option<f64>| {
        vec![
            name.to_string(),
            num(e.estimate),
            num(e.lo),
            num(e.hi),
            opt(integral),
            opt(integral.map(|i| e.estimate / i)),
        ]
    };
    t.push(row("visits", &rep.visits, Some(rep.gamma_integral)));
    t.push(row(
        "visit_probability",
        &rep.visit_probability,
        Some(rep.gamma_integral),
    ));
    t.push(row(
        "occupation_over_r",
        &rep.occupation_over_r,
        Some(rep.gamma_integral_fattened_over_r),
    ));
    t.push(row("path_hit_probability", &rep.path_hit_probability, None));
    ctx.out.write_csv("summary.csv", &t)?;
    ctx.out.write_jsonl("records.jsonl", &rep.records)?;
    Ok(format!(
        "visits {:.4e}, integral {:.4e}, ratio {:.4}",
        rep.visits.estimate, rep.gamma_integral, rep.visit_ratio
    ))
}

fn donsker(ctx: &mut Ctx) -> Result<String> {
    let c = ctx.cfg;
    let p = DonskerParams {
        rate: c.rate(),
        horizon: c.horizon,
        replicas: c.replicas,
        seed: c.seed,
        wiener_paths: c.wiener_paths,
        wiener_steps: c.wiener_steps,
    };
    let rep = donsker_test(&p)?;
    let mut t = Table::new(&[
        "coordinate",
        "sample_variance",
        "exact_variance",
        "ks_statistic",
        "ks_p_value",
        "limit_variance",
        "limit_ks_statistic",
        "limit_ks_p_value",
    ]);
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        t.push(vec![
            name.to_string(),
            num(rep.sample_variance[a]),
            num(rep.exact_variance),
            num(rep.ks[a].statistic),
            num(rep.ks[a].p_value),
            num(rep.limit_variance),
            num(rep.ks_limit[a].statistic),
            num(rep.ks_limit[a].p_value),
        ]);
    }
    ctx.out.write_csv("endpoint_ks.csv", &t)?;
    let mut f = Table::new(&[
        "functional",
        "flight",
        "flight_se",
        "wiener",
        "wiener_se",
        "difference",
        "combined_se",
        "z",
    ]);
    for x in &rep.functionals {
        f.push(vec![
            x.name.clone(),
            num(x.flight.estimate),
            num(x.flight.std_error()),
            num(x.wiener.estimate),
            num(x.wiener.std_error()),
            num(x.difference),
            num(x.combined_se),
            num(x.z),
        ]);
    }
    ctx.out.write_csv("functionals.csv", &f)?;
    ctx.out.write_json("report.json", &rep)?;
    let min_p = rep.ks.iter().map(|k| k.p_value).fold(1.0, f64::min);
    Ok(format!("min KS p-value {min_p:.4}"))
}

fn quenched(ctx: &mut Ctx) -> Result<String> {
    let c = ctx.cfg;
    let rows = c.schedule_rows()?;
    let schedule = check_schedule(&rows, Mode::Quenched, DEFAULT_BUDGET)?;
    let mut s = Table::new(&[
        "n",
        "eps",
        "r",
        "T",
        "beta",
        "N",
        "alpha",
        "rT",
        "quenched_term",
        "quenched_partial",
        "array_term",
        "array_partial",
        "admissible",
    ]);
    for (row, chk) in rows.iter().zip(&schedule.rows) {
        s.push(vec![
            int(row.n),
            num(row.eps),
            num(row.r),
            num(row.horizon),
            num(row.beta),
            int(row.n_traj),
            num(row.alpha),
            num(chk.rt),
            num(chk.quenched_term),
            num(chk.quenched_partial),
            num(chk.array_term),
            num(chk.array_partial),
            schedule.admissible.to_string(),
        ]);
    }
    ctx.out.write_csv("schedule.csv", &s)?;
    if !schedule.admissible && !c.force {
        return Err(Error::Inadmissible(schedule.reasons.join("; ")));
    }
    let p = QuenchedParams {
        environment: c.environment(),
        flight_replicas: c.flight_replicas,
        wiener_paths: c.wiener_paths,
        wiener_steps: c.wiener_steps,
        force: c.force,
        ..QuenchedParams::new(c.seed, rows, dictionary())
    };
    let rep = quenched_average_experiment(&p)?;
    ctx.seeds.push(("environment".into(), rep.environment_seed));
    let mut t = Table::new(&[
        "n",
        "eps",
        "T",
        "beta",
        "N",
        "alpha",
        "w",
        "w_below_alpha",
        "mismatch",
        "mismatched",
        "bound",
        "mismatch_tail",
        "functional",
        "lorentz_average",
        "flight_average",
        "flight_reference",
        "flight_reference_se",
        "wiener",
        "wiener_se",
        "coupling_gap",
        "sampling_gap",
        "diffusive_gap",
        "total_gap",
        "hoeffding",
        "envelope",
        "within_envelope",
    ]);
    for r in &rep.rows {
        for f in &r.functionals {
            t.push(vec![
                int(r.n),
                num(r.eps),
                num(r.horizon),
                num(r.beta),
                int(r.n_traj),
                num(r.alpha),
                num(r.w),
                r.w_below_alpha.to_string(),
                r.mismatch.to_string(),
                int(r.mismatched_trajectories),
                num(r.bound),
                num(r.mismatch_tail),
                f.name.clone(),
                num(f.lorentz_average),
                num(f.flight_average),
                num(f.flight_reference.estimate),
                num(f.flight_reference.std_error()),
                num(f.wiener.estimate),
                num(f.wiener.std_error()),
                num(f.coupling_gap),
                num(f.sampling_gap),
                num(f.diffusive_gap),
                num(f.total_gap),
                num(f.hoeffding),
                num(f.envelope),
                f.within_envelope.to_string(),
            ]);
        }
    }
    ctx.out.write_csv("rows.csv", &t)?;
    ctx.out.write_json("report.json", &rep)?;
    Ok(format!(
        "{} rows, fitted C {:.4e}, final row within envelope: {}",
        rep.rows.len(),
        rep.fitted_constant,
        rep.final_row_within_envelope
    ))
}

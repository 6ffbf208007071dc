//! Scaling rows of the triangular array, their admissibility checks, cap
//! sampling and the minimum pairwise angle.

use std::f64::consts::PI;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::Vec3;

/// Scatterer radius `ε^{d/(d−1)}`.
pub fn radius_of(eps: f64, d: usize) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid(format!("ε must lie in (0, 1], got {eps}")));
    }
    if d < 2 {
        return Err(invalid(format!("dimension must be at least 2, got {d}")));
    }
    Ok(eps.powf(d as f64 / (d as f64 - 1.0)))
}

/// Angle between unit vectors, `2 arcsin √((1 − a·b)/2)`. Accurate for
/// nearly parallel vectors where `arccos` is not.
#[inline]
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.dot(b).clamp(-1.0, 1.0);
    2.0 * ((1.0 - c) / 2.0).sqrt().asin()
}

/// Minimum pairwise angle `w` of a set of unit vectors. Duplicates give 0.
pub fn min_angle(velocities: &[Vec3]) -> Result<f64> {
    if velocities.len() < 2 {
        return Err(Error::TooFewVelocities(velocities.len()));
    }
    let mut w = f64::INFINITY;
    for (i, a) in velocities.iter().enumerate() {
        for b in &velocities[i + 1..] {
            w = w.min(angle_between(a, b));
        }
    }
    Ok(w)
}

/// Two unit vectors completing `e` to a right-handed orthonormal frame.
pub fn orthonormal_frame(e: &Vec3) -> (Vec3, Vec3) {
    let helper = if e.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = e.cross(&helper).normalize();
    let v = e.cross(&u);
    (u, v)
}

/// Uniform sample from the spherical cap of angular radius `beta` around `e`.
pub fn sample_cap<R: Rng + ?Sized>(rng: &mut R, e: &Vec3, beta: f64) -> Vec3 {
    let cos_b = beta.min(PI).cos();
    let z = cos_b + (1.0 - cos_b) * rng.random::<f64>();
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    let (u, v) = orthonormal_frame(e);
    (e * z + u * (s * phi.cos()) + v * (s * phi.sin())).normalize()
}

/// Default cap axis.
pub fn default_axis() -> Vec3 {
    Vec3::z()
}

/// One row `(n, ε_n, r_n, T_n, β_n, N_n)` of a scaling schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u32,
    pub eps: f64,
    pub r: f64,
    pub horizon: f64,
    pub beta: f64,
    pub n_traj: usize,
    pub axis: [f64; 3],
    /// Angular resolution `r^{1/3} β^{2/3}` used to split the mismatch bound.
    pub alpha: f64,
}

impl ScalingRow {
    pub fn new(n: u32, eps: f64, horizon: f64, beta: f64, n_traj: usize) -> Result<Self> {
        let r = radius_of(eps, crate::DIM)?;
        if !(horizon > 0.0) {
            return Err(invalid(format!("T must be positive, got {horizon}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(invalid(format!("β must lie in (0, 1], got {beta}")));
        }
        if n_traj == 0 {
            return Err(invalid("N must be at least 1"));
        }
        let d = crate::DIM as f64;
        let alpha = r.powf(1.0 / d) * beta.powf((d - 1.0) / d);
        let e = default_axis();
        Ok(Self {
            n,
            eps,
            r,
            horizon,
            beta,
            n_traj,
            axis: [e.x, e.y, e.z],
            alpha,
        })
    }

    pub fn axis(&self) -> Vec3 {
        Vec3::from(self.axis)
    }

    pub fn rt(&self) -> f64 {
        self.r * self.horizon
    }

    /// `(r/β)^{(d−1)/d}`.
    pub fn cap_term(&self) -> f64 {
        let d = crate::DIM as f64;
        (self.r / self.beta).powf((d - 1.0) / d)
    }

    /// Summand of the quenched condition:
    /// `log n · rT + (log n)² (r/β)^{(d−1)/d}`.
    pub fn quenched_term(&self) -> f64 {
        let l = (self.n.max(1) as f64).ln();
        l * self.rt() + l * l * self.cap_term()
    }

    /// Summand of the triangular-array condition:
    /// `N rT + N² (r/β)^{(d−1)/d}`; also the shape of the mismatch bound.
    pub fn array_term(&self) -> f64 {
        let n = self.n_traj as f64;
        n * self.rt() + n * n * self.cap_term()
    }
}

/// `ε_n = 2^{−n}`, `T_n = ε_n^{−1/2}`, `β_n = 2^{−n/2}`, `N_n = n²`.
pub fn geometric_family(n_min: u32, n_max: u32) -> Result<Vec<ScalingRow>> {
    if n_min == 0 || n_min > n_max {
        return Err(invalid(format!(
            "need 1 ≤ n_min ≤ n_max, got {n_min}..{n_max}"
        )));
    }
    (n_min..=n_max)
        .map(|n| {
            let eps = 2f64.powi(-(n as i32));
            let beta = 2f64.powf(-(n as f64) / 2.0).min(1.0);
            ScalingRow::new(n, eps, eps.powf(-0.5), beta, (n as usize).pow(2))
        })
        .collect()
}

/// Power-law family `ε_n = 2^{−n}`, `T_n = ε_n^{−t_exp}`,
/// `β_n = min(1, ε_n^{b_exp})`, `N_n = max(1, ⌈n^{n_exp}⌉)`.
pub fn power_family(
    n_min: u32,
    n_max: u32,
    t_exp: f64,
    b_exp: f64,
    n_exp: f64,
) -> Result<Vec<ScalingRow>> {
    if n_min == 0 || n_min > n_max {
        return Err(invalid(format!(
            "need 1 ≤ n_min ≤ n_max, got {n_min}..{n_max}"
        )));
    }
    (n_min..=n_max)
        .map(|n| {
            let eps = 2f64.powi(-(n as i32));
            let beta = eps.powf(b_exp).min(1.0);
            let n_traj = ((n as f64).powf(n_exp).ceil() as usize).max(1);
            ScalingRow::new(n, eps, eps.powf(-t_exp), beta, n_traj)
        })
        .collect()
}

/// Which convergence regime's hypotheses to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Annealed: `r_n T_n → 0`.
    Annealed,
    /// In probability: `r_n (T_n + β_n^{−1}) → 0`.
    InProbability,
    /// Quenched: summability of `log n · rT + (log n)²(r/β)^{2/3}` plus the
    /// triangular-array requirements on `N_n`.
    Quenched,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annealed" => Ok(Mode::Annealed),
            "in_probability" => Ok(Mode::InProbability),
            "quenched" => Ok(Mode::Quenched),
            other => Err(invalid(format!("unknown schedule mode {other:?}"))),
        }
    }
}

/// Per-row quantities of a schedule report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCheck {
    pub n: u32,
    pub rt: f64,
    /// `r (T + 1/β)`.
    pub r_t_beta: f64,
    pub quenched_term: f64,
    pub quenched_partial: f64,
    pub array_term: f64,
    pub array_partial: f64,
    pub rt_ok: bool,
    pub n_monotone: bool,
}

/// Admissibility report for a finite list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub mode: Mode,
    pub rows: Vec<RowCheck>,
    /// First row index (value of `n`) of the tail used by the ratio tests.
    pub tail_from: u32,
    pub quenched_max_ratio: f64,
    pub array_max_ratio: f64,
    /// Tail partial sum plus geometric extrapolation of the remainder.
    pub quenched_tail_estimate: f64,
    pub array_tail_estimate: f64,
    pub budget: f64,
    pub admissible: bool,
    pub reasons: Vec<String>,
}

/// Default budget for the tail of the quenched series.
pub const DEFAULT_BUDGET: f64 = 1.0;

fn max_ratio(terms: &[f64]) -> f64 {
    terms.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max)
}

fn tail_estimate(terms: &[f64]) -> f64 {
    let sum: f64 = terms.iter().sum();
    let q = max_ratio(terms);
    let last = terms.last().copied().unwrap_or(0.0);
    if q < 1.0 {
        sum + last * q / (1.0 - q)
    } else {
        f64::INFINITY
    }
}

fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0] * (1.0 - 1e-9))
}

/// Finite proxy for a limit of zero: decreasing over the tail and at least
/// halved between the first and last tail rows.
fn tends_to_zero(xs: &[f64]) -> bool {
    strictly_decreasing(xs) && xs.last().unwrap_or(&0.0) <= &(0.5 * xs[0])
}

/// Checks the hypotheses of `mode` on the supplied rows. Limits are replaced
/// by trend tests over the upper half of the rows (the tail), and summability
/// by ratio tests plus a budget on the extrapolated tail sum.
pub fn check_schedule(rows: &[ScalingRow], mode: Mode, budget: f64) -> Result<ScheduleReport> {
    if rows.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let mut checks = Vec::with_capacity(rows.len());
    let (mut qp, mut ap) = (0.0, 0.0);
    for (i, row) in rows.iter().enumerate() {
        qp += row.quenched_term();
        ap += row.array_term();
        let n_monotone = i == 0 || row.n_traj > rows[i - 1].n_traj;
        checks.push(RowCheck {
            n: row.n,
            rt: row.rt(),
            r_t_beta: row.r * (row.horizon + 1.0 / row.beta),
            quenched_term: row.quenched_term(),
            quenched_partial: qp,
            array_term: row.array_term(),
            array_partial: ap,
            rt_ok: row.rt() <= 1.0 + 1e-12,
            n_monotone,
        });
    }
    let tail_start = rows.len() / 2;
    let tail = &checks[tail_start..];
    let tail_rows = &rows[tail_start..];
    let qt: Vec<f64> = tail.iter().map(|c| c.quenched_term).collect();
    let at: Vec<f64> = tail.iter().map(|c| c.array_term).collect();
    let quenched_max_ratio = max_ratio(&qt);
    let array_max_ratio = max_ratio(&at);

    let mut reasons = Vec::new();
    for c in &checks {
        if !c.rt_ok {
            reasons.push(format!("row {}: rT = {:.3e} exceeds 1", c.n, c.rt));
        }
    }
    let rts: Vec<f64> = tail.iter().map(|c| c.rt).collect();
    match mode {
        Mode::Annealed => {
            if rows.len() > 1 && !tends_to_zero(&rts) {
                reasons.push("rT does not decay to zero over the tail".into());
            }
        }
        Mode::InProbability => {
            let v: Vec<f64> = tail.iter().map(|c| c.r_t_beta).collect();
            if rows.len() > 1 && !tends_to_zero(&v) {
                reasons.push("r(T + 1/β) does not decay to zero over the tail".into());
            }
        }
        Mode::Quenched => {
            if rows.len() > 1 && !strictly_decreasing(&qt) {
                reasons.push(format!(
                    "quenched series terms do not decrease over the tail (max ratio {quenched_max_ratio:.3})"
                ));
            }
            if rows.len() > 1 && !strictly_decreasing(&at) {
                reasons.push(format!(
                    "triangular-array series terms do not decrease over the tail (max ratio {array_max_ratio:.3})"
                ));
            }
            for c in &checks {
                if !c.n_monotone {
                    reasons.push(format!("row {}: N_n is not increasing", c.n));
                }
            }
            let growth: Vec<f64> = tail_rows
                .iter()
                .map(|r| r.n_traj as f64 / (r.n.max(2) as f64).ln())
                .collect();
            if rows.len() > 1 && non_increasing(&growth) {
                reasons.push("N_n / log n does not grow over the tail".into());
            }
        }
    }
    let quenched_tail_estimate = tail_estimate(&qt);
    let array_tail_estimate = tail_estimate(&at);
    if mode == Mode::Quenched && quenched_tail_estimate > budget {
        reasons.push(format!(
            "quenched series tail estimate {quenched_tail_estimate:.3e} exceeds budget {budget}"
        ));
    }
    Ok(ScheduleReport {
        mode,
        admissible: reasons.is_empty(),
        rows: checks,
        tail_from: rows[tail_start].n,
        quenched_max_ratio,
        array_max_ratio,
        quenched_tail_estimate,
        array_tail_estimate,
        budget,
        reasons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn radius_examples() {
        assert_relative_eq!(radius_of(0.01, 3).unwrap(), 1e-3, max_relative = 1e-12);
        assert_eq!(radius_of(1.0, 3).unwrap(), 1.0);
        assert_relative_eq!(radius_of(0.25, 3).unwrap(), 0.125, max_relative = 1e-12);
        assert!(radius_of(0.0, 3).is_err());
        assert!(radius_of(1.5, 3).is_err());
    }

    #[test]
    fn min_angle_examples() {
        assert_relative_eq!(
            min_angle(&[Vec3::x(), Vec3::y()]).unwrap(),
            PI / 2.0,
            epsilon = 1e-15
        );
        assert_eq!(min_angle(&[Vec3::x(), Vec3::x()]).unwrap(), 0.0);
        assert!(matches!(
            min_angle(&[Vec3::x()]),
            Err(Error::TooFewVelocities(1))
        ));
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, phi)| {
            let s = (1.0 - z * z).sqrt();
            Vec3::new(s * phi.cos(), s * phi.sin(), z)
        })
    }

    proptest! {
        #[test]
        fn min_angle_matches_arccos(vs in proptest::collection::vec(unit(), 2..7)) {
            let mut brute = f64::INFINITY;
            for i in 0..vs.len() {
                for j in i + 1..vs.len() {
                    brute = brute.min(vs[i].dot(&vs[j]).clamp(-1.0, 1.0).acos());
                }
            }
            prop_assert!((min_angle(&vs).unwrap() - brute).abs() < 1e-7);
        }

        #[test]
        fn alpha_relations(n in 1u32..40, beta in 0.01f64..1.0) {
            let eps = 2f64.powi(-(n as i32));
            let row = ScalingRow::new(n, eps, 1.0, beta, 1).unwrap();
            let a = row.alpha;
            prop_assert!((row.r / a / (a / beta).powi(2) - 1.0).abs() < 1e-12);
            prop_assert!((row.r / a / row.cap_term() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cap_samples_stay_in_cap(seed in any::<u64>(), beta in 0.001f64..PI, e in unit()) {
            let mut rng = stream(seed, Domain::InitialVelocity, &[]);
            for _ in 0..20 {
                let u = sample_cap(&mut rng, &e, beta);
                prop_assert!((u.norm() - 1.0).abs() < 1e-12);
                prop_assert!(angle_between(&u, &e) <= beta + 1e-9);
            }
        }
    }

    #[test]
    fn geometric_family_is_admissible() {
        let rows = geometric_family(1, 30).unwrap();
        let rep = check_schedule(&rows, Mode::Quenched, DEFAULT_BUDGET).unwrap();
        assert!(rep.admissible, "{:?}", rep.reasons);
        // Quenched series: term ratios below one from n = 5 onwards.
        let from5: Vec<f64> = rep.rows[4..].iter().map(|c| c.quenched_term).collect();
        assert!(max_ratio(&from5) < 1.0);
        for mode in [Mode::Annealed, Mode::InProbability] {
            assert!(
                check_schedule(&rows, mode, DEFAULT_BUDGET)
                    .unwrap()
                    .admissible
            );
        }
    }

    #[test]
    fn critical_horizon_is_inadmissible() {
        let rows: Vec<ScalingRow> = (1..=30)
            .map(|n| {
                let eps = 2f64.powi(-n);
                ScalingRow::new(
                    n as u32,
                    eps,
                    eps.powf(-1.5),
                    2f64.powf(-n as f64 / 2.0),
                    (n * n) as usize,
                )
                .unwrap()
            })
            .collect();
        for mode in [Mode::Annealed, Mode::InProbability, Mode::Quenched] {
            let rep = check_schedule(&rows, mode, DEFAULT_BUDGET).unwrap();
            assert!(!rep.admissible, "{mode:?}");
        }
    }

    #[test]
    fn constant_n_is_flagged() {
        let rows: Vec<ScalingRow> = geometric_family(1, 30)
            .unwrap()
            .into_iter()
            .map(|mut r| {
                r.n_traj = 10;
                r
            })
            .collect();
        let rep = check_schedule(&rows, Mode::Quenched, DEFAULT_BUDGET).unwrap();
        assert!(!rep.admissible);
        assert!(rep.reasons.iter().any(|s| s.contains("log n")));
    }

    #[test]
    fn empty_schedule_is_an_error() {
        assert!(matches!(
            check_schedule(&[], Mode::Annealed, 1.0),
            Err(Error::EmptySchedule)
        ));
    }
}

//! Near-encounter events of independent flights: self-approach `A_i`,
//! cross-approach `B_ij`, and the split of `B_ij` by whether the first
//! flight of `i` and the first scattering of `j` are involved.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{proportion, EstimateWithCI};
use super::VelocitySpec;
use crate::dynamics::{Path, Segment};
use crate::error::{invalid, Result};
use crate::flight::sample_flight;
use crate::rng::{stream, Domain};
use crate::schedule::min_angle;
use crate::tube::{clipped_distance, tube_distance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    /// Scatterer radius; events test distances below `2r`.
    pub r: f64,
    pub rate: f64,
    pub horizon: f64,
    pub velocities: VelocitySpec,
    pub replicas: usize,
    pub seed: u64,
}

/// Which parts of `B_ij` fired for one ordered pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEvents {
    pub b: bool,
    /// First flight of `i` near the first scattering of `j`.
    pub b1: bool,
    /// First flight of `i` near a later scattering of `j`.
    pub b2: bool,
    /// Later flights of `i` near the first scattering of `j`.
    pub b3: bool,
    /// Later flights of `i` near a later scattering of `j`.
    pub b4: bool,
}

impl PairEvents {
    pub fn any_part(&self) -> bool {
        self.b1 || self.b2 || self.b3 || self.b4
    }
}

/// `A_i`: some scattering point `Y_k` comes within `2r` of the path away
/// from its two adjacent flights, i.e. of a flight ending by `θ_{k−1}` or
/// starting from `θ_{k+1}`.
pub fn self_approach(path: &Path, r: f64) -> bool {
    let segs = path.segments();
    let limit = path.horizon;
    for (idx, e) in path.events.iter().enumerate() {
        let k = idx + 1;
        let far = segs
            .iter()
            .enumerate()
            .filter(|(m, _)| *m + 2 <= k || *m > k);
        for (_, seg) in far {
            if clipped_distance(&e.position, seg, limit).is_some_and(|d| d < 2.0 * r) {
                return true;
            }
        }
    }
    false
}

fn near(seg: &Segment, p: &crate::Vec3, r: f64, limit: f64) -> bool {
    clipped_distance(p, seg, limit).is_some_and(|d| d < 2.0 * r)
}

/// `B_ij` and its four parts for the path of `i` against the scattering
/// points of `j`.
pub fn pair_events(pi: &Path, pj: &Path, r: f64) -> PairEvents {
    let limit = pi.horizon;
    let segs = pi.segments();
    let mut out = PairEvents::default();
    for (idx, e) in pj.events.iter().enumerate() {
        let first_point = idx == 0;
        for (m, seg) in segs.iter().enumerate() {
            if !near(seg, &e.position, r, limit) {
                continue;
            }
            match (m == 0, first_point) {
                (true, true) => out.b1 = true,
                (true, false) => out.b2 = true,
                (false, true) => out.b3 = true,
                (false, false) => out.b4 = true,
            }
        }
    }
    // Direct evaluation over the whole path, independent of the split.
    out.b = pj
        .events
        .iter()
        .any(|e| tube_distance(std::slice::from_ref(pi), &e.position, limit, None) < 2.0 * r);
    out
}

/// Events of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub replica: u64,
    pub a: Vec<bool>,
    /// Ordered pairs `(i, j)`, `i ≠ j`, in lexicographic order.
    pub pairs: Vec<PairEvents>,
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub r: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub mean_w: Option<f64>,
    /// Per-trajectory frequency of `A_i`.
    pub a: EstimateWithCI,
    /// Per-ordered-pair frequencies.
    pub b: Option<EstimateWithCI>,
    pub b1: Option<EstimateWithCI>,
    pub b2: Option<EstimateWithCI>,
    pub b3: Option<EstimateWithCI>,
    pub b4: Option<EstimateWithCI>,
    /// `P̂(A)/(rT)`.
    pub fitted_a: f64,
    /// `P̂(B_I)·w/r`.
    pub fitted_b1: Option<f64>,
    /// `P̂(B_II)/r`, `P̂(B_III)/r`, `P̂(B_IV)/r`.
    pub fitted_b2: Option<f64>,
    pub fitted_b3: Option<f64>,
    pub fitted_b4: Option<f64>,
    /// Pairs where `B_ij` fired without any part, and the converse.
    pub uncovered: usize,
    pub spurious: usize,
    pub pairs_with_b: usize,
    pub records: Vec<EventRecord>,
}

pub fn estimate_event_probabilities(p: &EventParams) -> Result<EventReport> {
    if !(p.r > 0.0 && p.rate > 0.0 && p.horizon > 0.0) {
        return Err(invalid("r, rate and T must be positive"));
    }
    if p.replicas == 0 {
        return Err(invalid("at least one replica is required"));
    }
    p.velocities.validate()?;
    let n = p.velocities.len();
    let records = (0..p.replicas as u64)
        .into_par_iter()
        .map(|replica| -> Result<EventRecord> {
            let mut vrng = stream(p.seed, Domain::InitialVelocity, &[replica]);
            let velocities = p.velocities.draw(&mut vrng);
            let w = if n > 1 {
                Some(min_angle(&velocities)?)
            } else {
                None
            };
            let paths = velocities
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let mut rng = stream(p.seed, Domain::Flight, &[replica, j as u64]);
                    sample_flight(&mut rng, p.rate, v, p.horizon, p.r)
                })
                .collect::<Result<Vec<_>>>()?;
            let a = paths.iter().map(|x| self_approach(x, p.r)).collect();
            let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        pairs.push(pair_events(&paths[i], &paths[j], p.r));
                    }
                }
            }
            Ok(EventRecord {
                replica,
                a,
                pairs,
                w,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let m = records.len();
    let count_a = records.iter().flat_map(|x| &x.a).filter(|&&a| a).count();
    let a = proportion(count_a, m * n, p.seed)?;
    let all_pairs: Vec<&PairEvents> = records.iter().flat_map(|x| &x.pairs).collect();
    let pair_estimate = |f: &dyn Fn(&PairEvents) -> bool| -> Result<Option<EstimateWithCI>> {
        if all_pairs.is_empty() {
            return Ok(None);
        }
        let k = all_pairs.iter().filter(|e| f(e)).count();
        Ok(Some(proportion(k, all_pairs.len(), p.seed)?))
    };
    let b = pair_estimate(&|e| e.b)?;
    let b1 = pair_estimate(&|e| e.b1)?;
    let b2 = pair_estimate(&|e| e.b2)?;
    let b3 = pair_estimate(&|e| e.b3)?;
    let b4 = pair_estimate(&|e| e.b4)?;
    let mean_w = (n > 1).then(|| records.iter().filter_map(|x| x.w).sum::<f64>() / m as f64);
    let per_r = |e: Option<EstimateWithCI>| e.map(|e| e.estimate / p.r);
    Ok(EventReport {
        r: p.r,
        horizon: p.horizon,
        n_traj: n,
        mean_w,
        fitted_a: a.estimate / (p.r * p.horizon),
        fitted_b1: b1.zip(mean_w).map(|(e, w)| e.estimate * w / p.r),
        fitted_b2: per_r(b2),
        fitted_b3: per_r(b3),
        fitted_b4: per_r(b4),
        a,
        b,
        b1,
        b2,
        b3,
        b4,
        uncovered: all_pairs.iter().filter(|e| e.b && !e.any_part()).count(),
        spurious: all_pairs.iter().filter(|e| !e.b && e.any_part()).count(),
        pairs_with_b: all_pairs.iter().filter(|e| e.b).count(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ScatteringEvent;
    use crate::Vec3;

    fn path(points: &[[f64; 3]], horizon: f64) -> Path {
        // Unit-speed polyline through the origin and `points`.
        let mut p = Path::straight(Vec3::zeros(), horizon);
        let mut prev = Vec3::zeros();
        let mut t = 0.0;
        for (k, q) in points.iter().enumerate() {
            let q = Vec3::from(*q);
            let step = q - prev;
            let dir = step / step.norm();
            if k == 0 {
                p.v0 = dir;
            } else {
                p.events.last_mut().unwrap().v_post = dir;
            }
            t += step.norm();
            p.events.push(ScatteringEvent {
                time: t,
                position: q,
                v_pre: dir,
                v_post: dir,
                centre: q,
            });
            prev = q;
        }
        p
    }

    #[test]
    fn self_approach_ignores_adjacent_flights() {
        // Each scattering point lies on its two adjacent flights only.
        let mut p = path(&[[2.0, 0.0, 0.0], [2.0, 2.0, 0.0]], 5.0);
        p.events[1].v_post = Vec3::z();
        assert!(!self_approach(&p, 0.01));
        // A third flight passing 0.0025 from Y_1 triggers it.
        let q = path(&[[2.0, 0.0, 0.0], [2.0, 2.0, 0.0], [2.0, -2.0, 0.005]], 9.0);
        assert!(self_approach(&q, 0.01));
    }

    #[test]
    fn pair_split_by_first_flight_and_first_scattering() {
        let pi = path(&[[3.0, 0.0, 0.0], [3.0, 3.0, 0.0]], 6.0);
        // j's first scattering sits next to i's first flight.
        let pj = path(&[[1.0, 0.001, 0.0], [1.0, 5.0, 0.0]], 6.0);
        let e = pair_events(&pi, &pj, 0.01);
        assert!(e.b && e.b1 && !e.b2 && !e.b3 && !e.b4);
        // j's second scattering sits next to i's second flight.
        let pj = path(&[[-1.0, 0.0, 0.0], [3.001, 1.5, 0.0]], 7.0);
        let e = pair_events(&pi, &pj, 0.01);
        assert!(e.b && e.b4 && !e.b1 && !e.b2 && !e.b3);
    }

    #[test]
    fn decomposition_covers_every_pair() {
        let p = EventParams {
            r: 0.02,
            rate: 1.0,
            horizon: 20.0,
            velocities: VelocitySpec::Uniform { n: 3 },
            replicas: 200,
            seed: 4,
        };
        let rep = estimate_event_probabilities(&p).unwrap();
        assert!(rep.pairs_with_b > 0);
        assert_eq!(rep.uncovered, 0);
        assert_eq!(rep.spurious, 0);
    }
}

//! Joint construction of Lorentz trajectories and Markovian flights.
//!
//! Given `N` Lorentz paths in one environment, each flight follows its Lorentz
//! partner as long as the partner meets fresh scatterers. A collision with an
//! already explored scatterer is ignored by the flight, and auxiliary clock
//! ticks insert the scatterings that the explored region hides from the
//! Lorentz particle. The resulting flights are independent Markovian flights,
//! and the first time any pair disagrees can be read off the flights alone.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_lorentz, Path, ScatteringEvent};
use crate::environment::Scatterers;
use crate::error::{invalid, Error, Result};
use crate::flight::{sample_uniform_sphere, virtual_centre};
use crate::rng::{stream, Domain, Stream};
use crate::tube::{contact_tol, tube_distance, CentreIndex, SegmentId, TimedCentre, TubeIndex};
use crate::Vec3;

/// Clock ticks closer than this to a collision time are redrawn.
pub const TIE_GAP: f64 = 1e-12;

/// Cell side of the spatial indices for scatterer radius `r`.
fn index_side(r: f64) -> f64 {
    (4.0 * r).max(0.5)
}

/// Freshness of the scatterer met at collision `k` of trajectory `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreshnessFlag {
    pub j: usize,
    /// Collision index, starting at 1; `k = 0` is the start.
    pub k: usize,
    pub time: f64,
    pub a: bool,
    pub centre: Vec3,
    /// Distance from the centre to the strictly earlier trajectories.
    pub distance: f64,
}

/// One auxiliary clock tick of trajectory `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowEvent {
    pub j: usize,
    /// Tick index, starting at 1.
    pub l: usize,
    pub time: f64,
    pub proposal: Vec3,
    pub b: bool,
    pub centre: Vec3,
    pub distance: f64,
}

/// Where a flight scattering came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventSource {
    /// Adopted Lorentz collision `k` (1-based).
    Collision(usize),
    /// Shadowed clock tick `l` (1-based).
    Clock(usize),
}

/// Stopping times of one coupled ensemble; `+∞` if not reached by the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingTimes {
    /// First recollision.
    pub sigma1: f64,
    /// First shadowed scattering.
    pub sigma2: f64,
    /// First entry of a flight into an earlier virtual scatterer.
    pub sigma3: f64,
    /// First flight scattering inside the tube of past flights.
    pub sigma4: f64,
    /// `min(σ3, σ4)`.
    pub sigma: f64,
}

impl StoppingTimes {
    /// `min(σ1, σ2) = min(σ3, σ4)` within `tol`, both infinite counting as equal.
    pub fn identity_holds(&self, tol: f64) -> bool {
        let lhs = self.sigma1.min(self.sigma2);
        let rhs = self.sigma3.min(self.sigma4);
        (lhs.is_infinite() && rhs.is_infinite()) || (lhs - rhs).abs() <= tol
    }

    pub fn mismatch_before(&self, horizon: f64) -> bool {
        self.sigma < horizon
    }
}

/// `N` Lorentz paths with their coupled flights and the construction record.
#[derive(Debug, Clone)]
pub struct CoupledEnsemble {
    pub r: f64,
    pub rate: f64,
    pub horizon: f64,
    pub lorentz: Vec<Path>,
    pub flights: Vec<Path>,
    /// Source of every flight event, parallel to `flights[j].events`.
    pub sources: Vec<Vec<EventSource>>,
    pub freshness: Vec<FreshnessFlag>,
    pub shadows: Vec<ShadowEvent>,
    pub times: StoppingTimes,
}

impl CoupledEnsemble {
    pub fn n(&self) -> usize {
        self.lorentz.len()
    }

    pub fn lorentz_event_count(&self) -> usize {
        self.lorentz.iter().map(|p| p.events.len()).sum()
    }

    pub fn flight_event_count(&self) -> usize {
        self.flights.iter().map(|p| p.events.len()).sum()
    }
}

fn fresh(distance: f64, r: f64, centre: &Vec3) -> bool {
    distance > r + contact_tol(r, centre.norm())
}

/// Freshness indicator `a_{j,k}`; `k` counts collisions from 1.
pub fn freshness(paths: &[Path], j: usize, k: usize, r: f64) -> Result<FreshnessFlag> {
    let path = paths
        .get(j)
        .ok_or_else(|| invalid(format!("no trajectory {j}")))?;
    if k == 0 {
        return Ok(FreshnessFlag {
            j,
            k,
            time: 0.0,
            a: true,
            centre: Vec3::zeros(),
            distance: f64::INFINITY,
        });
    }
    let e = path
        .events
        .get(k - 1)
        .ok_or_else(|| invalid(format!("trajectory {j} has no collision {k}")))?;
    let distance = tube_distance(paths, &e.centre, e.time, Some((j, k - 1)));
    Ok(FreshnessFlag {
        j,
        k,
        time: e.time,
        a: fresh(distance, r, &e.centre),
        centre: e.centre,
        distance,
    })
}

/// Shadow indicator `b_j(t, v)`: whether a scatterer turning the current
/// velocity `v_current` of trajectory `j` into `v` at time `t` would overlap
/// the strictly earlier trajectories.
pub fn shadow_indicator(
    paths: &[Path],
    j: usize,
    t: f64,
    v: &Vec3,
    v_current: &Vec3,
    r: f64,
) -> Result<bool> {
    let path = paths
        .get(j)
        .ok_or_else(|| invalid(format!("no trajectory {j}")))?;
    let x = path.position_at(t);
    let c = virtual_centre(&x, v_current, v, r)?;
    let d = tube_distance(paths, &c, t, Some((j, path.segment_index(t))));
    Ok(d <= r)
}

/// Next clock tick after `t`, redrawing gaps that land on a collision.
fn next_tick<R: Rng + ?Sized>(rng: &mut R, gaps: &Exp<f64>, t: f64, collisions: &[f64]) -> f64 {
    loop {
        let tick = t + gaps.sample(rng);
        let i = collisions.partition_point(|&c| c < tick);
        let near_next = collisions.get(i).is_some_and(|&c| c - tick < TIE_GAP);
        let near_prev = i > 0 && tick - collisions[i - 1] < TIE_GAP;
        if !near_next && !near_prev {
            return tick;
        }
    }
}

/// Builds the coupled flights for `lorentz` using one clock stream per
/// trajectory. All paths must share the horizon and scatterer radius `r`.
pub fn build_coupled_flights(
    lorentz: Vec<Path>,
    mut clocks: Vec<Stream>,
    rate: f64,
    horizon: f64,
    r: f64,
) -> Result<CoupledEnsemble> {
    if clocks.len() != lorentz.len() {
        return Err(invalid(format!(
            "{} clock streams for {} trajectories",
            clocks.len(),
            lorentz.len()
        )));
    }
    let gaps = Exp::new(rate).map_err(|e| invalid(format!("rate: {e}")))?;
    let index = TubeIndex::new(&lorentz, index_side(r));
    let cutoff = 2.0 * r;
    let mut flights = Vec::with_capacity(lorentz.len());
    let mut sources = Vec::with_capacity(lorentz.len());
    let mut freshness = Vec::new();
    let mut shadows = Vec::new();

    for (j, (path, rng)) in lorentz.iter().zip(clocks.iter_mut()).enumerate() {
        let times: Vec<f64> = path.times().collect();
        let mut flight = Path::straight(path.v0, horizon);
        let mut src = Vec::new();
        let mut u = path.v0;
        let mut y_pos = Vec3::zeros();
        let mut y_t = 0.0;
        let mut synced = true;
        let mut k = 0usize;
        let mut l = 1usize;
        let mut tick = next_tick(rng, &gaps, 0.0, &times);

        loop {
            let t_coll = times.get(k).copied().unwrap_or(f64::INFINITY);
            if t_coll > horizon && tick > horizon {
                break;
            }
            if t_coll <= tick {
                let e = &path.events[k];
                let distance = index.min_distance(&e.centre, e.time, Some((j, k)), cutoff);
                let a = fresh(distance, r, &e.centre);
                freshness.push(FreshnessFlag {
                    j,
                    k: k + 1,
                    time: e.time,
                    a,
                    centre: e.centre,
                    distance,
                });
                if a {
                    if synced {
                        flight.events.push(*e);
                        src.push(EventSource::Collision(k + 1));
                        u = e.v_post;
                        y_pos = e.position;
                        y_t = e.time;
                    } else {
                        let pos = y_pos + u * (e.time - y_t);
                        if u != e.v_post {
                            flight.events.push(ScatteringEvent {
                                time: e.time,
                                position: pos,
                                v_pre: u,
                                v_post: e.v_post,
                                centre: virtual_centre(&pos, &u, &e.v_post, r)?,
                            });
                            src.push(EventSource::Collision(k + 1));
                            u = e.v_post;
                            y_pos = pos;
                            y_t = e.time;
                        }
                    }
                } else {
                    synced = false;
                }
                k += 1;
            } else {
                let proposal = sample_uniform_sphere(rng);
                let x = path.position_at(tick);
                let v = path.velocity_at(tick);
                let (b, centre, distance) = match virtual_centre(&x, &v, &proposal, r) {
                    Ok(c) => {
                        let seg = path.segment_index(tick);
                        let d = index.min_distance(&c, tick, Some((j, seg)), cutoff);
                        (d <= r, c, d)
                    }
                    Err(Error::DegenerateDirection) => (false, x, f64::INFINITY),
                    Err(e) => return Err(e),
                };
                shadows.push(ShadowEvent {
                    j,
                    l,
                    time: tick,
                    proposal,
                    b,
                    centre,
                    distance,
                });
                if b {
                    let pos = if synced { x } else { y_pos + u * (tick - y_t) };
                    if proposal != u {
                        flight.events.push(ScatteringEvent {
                            time: tick,
                            position: pos,
                            v_pre: u,
                            v_post: proposal,
                            centre: virtual_centre(&pos, &u, &proposal, r)?,
                        });
                        src.push(EventSource::Clock(l));
                        u = proposal;
                        y_pos = pos;
                        y_t = tick;
                    }
                    synced = false;
                }
                l += 1;
                tick = next_tick(rng, &gaps, tick, &times);
            }
        }
        flights.push(flight);
        sources.push(src);
    }

    let mut ensemble = CoupledEnsemble {
        r,
        rate,
        horizon,
        lorentz,
        flights,
        sources,
        freshness,
        shadows,
        times: StoppingTimes {
            sigma1: f64::INFINITY,
            sigma2: f64::INFINITY,
            sigma3: f64::INFINITY,
            sigma4: f64::INFINITY,
            sigma: f64::INFINITY,
        },
    };
    ensemble.times = mismatch_times(&ensemble);
    Ok(ensemble)
}

/// `(σ3, σ4)` computed from flight paths only.
pub fn flight_mismatch_times(flights: &[Path], r: f64) -> (f64, f64) {
    let side = index_side(r);
    let mut centres = Vec::new();
    for (i, f) in flights.iter().enumerate() {
        for (e, ev) in f.events.iter().enumerate() {
            centres.push(TimedCentre {
                centre: ev.centre,
                time: ev.time,
                owner: (i, e),
            });
        }
    }

    let mut sigma4 = f64::INFINITY;
    let tubes = TubeIndex::new(flights, side);
    for c in &centres {
        if c.time >= sigma4 {
            continue;
        }
        let excl: SegmentId = c.owner;
        if tubes.min_distance(&c.centre, c.time, Some(excl), 2.0 * r) < r {
            sigma4 = c.time;
        }
    }

    let balls = CentreIndex::new(centres, r, side);
    let mut sigma3 = f64::INFINITY;
    for (j, f) in flights.iter().enumerate() {
        for (m, seg) in f.segments().iter().enumerate() {
            if seg.t0 >= sigma3 {
                break;
            }
            let skip = (m > 0).then(|| (j, m - 1));
            if let Some((t, _)) = balls.first_penetration(seg, skip) {
                sigma3 = sigma3.min(t);
            }
        }
    }
    (sigma3, sigma4)
}

/// All stopping times of a built ensemble.
pub fn mismatch_times(ens: &CoupledEnsemble) -> StoppingTimes {
    let sigma1 = ens
        .freshness
        .iter()
        .filter(|f| !f.a)
        .map(|f| f.time)
        .fold(f64::INFINITY, f64::min);
    let sigma2 = ens
        .shadows
        .iter()
        .filter(|s| s.b)
        .map(|s| s.time)
        .fold(f64::INFINITY, f64::min);
    let (sigma3, sigma4) = flight_mismatch_times(&ens.flights, ens.r);
    StoppingTimes {
        sigma1,
        sigma2,
        sigma3,
        sigma4,
        sigma: sigma3.min(sigma4),
    }
}

/// Per trajectory, the first time the Lorentz path and its flight differ,
/// found by comparing their event lists directly (infinite if they agree).
pub fn divergence_times(lorentz: &[Path], flights: &[Path]) -> Vec<f64> {
    lorentz
        .iter()
        .zip(flights)
        .map(|(x, y)| {
            let n = x.events.len().max(y.events.len());
            for k in 0..n {
                match (x.events.get(k), y.events.get(k)) {
                    (Some(a), Some(b)) if a == b => continue,
                    (Some(a), Some(b)) => return a.time.min(b.time),
                    (Some(a), None) => return a.time,
                    (None, Some(b)) => return b.time,
                    (None, None) => break,
                }
            }
            f64::INFINITY
        })
        .collect()
}

/// First time some Lorentz path and its flight differ.
pub fn first_divergence(lorentz: &[Path], flights: &[Path]) -> f64 {
    divergence_times(lorentz, flights)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Simulates Lorentz paths from `velocities` in `env` and couples them, with
/// clock streams keyed by `(seed, replica, j)`.
pub fn couple<S: Scatterers + ?Sized>(
    env: &S,
    velocities: &[Vec3],
    rate: f64,
    horizon: f64,
    seed: u64,
    replica: u64,
) -> Result<CoupledEnsemble> {
    let lorentz = velocities
        .iter()
        .map(|v| simulate_lorentz(env, v, horizon))
        .collect::<Result<Vec<_>>>()?;
    let clocks = (0..velocities.len())
        .map(|j| stream(seed, Domain::Clock, &[replica, j as u64]))
        .collect();
    build_coupled_flights(lorentz, clocks, rate, horizon, env.radius())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::FixtureEnvironment;
    use approx::assert_relative_eq;

    /// Two facing spheres on the x-axis: the particle bounces between them
    /// and meets the first one again at t = 20.
    fn trap() -> FixtureEnvironment {
        FixtureEnvironment::new(
            vec![Vec3::new(5.0, 0.0, 0.0), Vec3::new(-5.0, 0.0, 0.0)],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn first_collision_is_always_fresh() {
        let path = simulate_lorentz(&trap(), &Vec3::x(), 25.0).unwrap();
        let paths = [path];
        assert!(freshness(&paths, 0, 0, 1.0).unwrap().a);
        assert!(freshness(&paths, 0, 1, 1.0).unwrap().a);
        assert!(freshness(&paths, 0, 2, 1.0).unwrap().a);
        let third = freshness(&paths, 0, 3, 1.0).unwrap();
        assert!(!third.a);
        assert_relative_eq!(third.time, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn shared_scatterer_is_stale_for_the_later_visitor() {
        // Both rays end on the sphere at (5, 0, 0); the tilted one arrives later.
        let env = FixtureEnvironment::new(vec![Vec3::new(5.0, 0.0, 0.0)], 1.0).unwrap();
        let tilted = Vec3::new(5.0, 0.6, 0.0).normalize();
        let paths = vec![
            simulate_lorentz(&env, &Vec3::x(), 6.0).unwrap(),
            simulate_lorentz(&env, &tilted, 6.0).unwrap(),
        ];
        assert!(paths[1].events[0].time > paths[0].events[0].time);
        assert!(freshness(&paths, 0, 1, 1.0).unwrap().a);
        assert!(!freshness(&paths, 1, 1, 1.0).unwrap().a);
    }

    #[test]
    fn shadow_examples() {
        let env = FixtureEnvironment::new(vec![Vec3::new(5.0, 0.0, 0.0)], 1.0).unwrap();
        let paths = vec![simulate_lorentz(&env, &Vec3::x(), 10.0).unwrap()];
        // No past at t = 0.
        let v = Vec3::new(0.0, 1.0, 0.0);
        assert!(!shadow_indicator(&paths, 0, 0.0, &v, &Vec3::x(), 1.0).unwrap());
        // After the bounce at (4, 0, 0) the particle moves along -x. At t = 6
        // it is at (2, 0, 0); the proposal below puts the virtual centre at
        // (1.4, 0.8, 0), within 1 of the first segment.
        let proposal = Vec3::new(-0.28, -0.96, 0.0);
        assert!(shadow_indicator(&paths, 0, 6.0, &proposal, &-Vec3::x(), 1.0).unwrap());
        // A straight path has no strictly earlier piece once its current
        // segment is set aside.
        let straight = vec![Path::straight(Vec3::x(), 10.0)];
        assert!(!shadow_indicator(&straight, 0, 6.0, &proposal, &Vec3::x(), 1.0).unwrap());
        assert!(matches!(
            shadow_indicator(&paths, 0, 6.0, &-Vec3::x(), &-Vec3::x(), 1.0),
            Err(Error::DegenerateDirection)
        ));
    }

    #[test]
    fn quiet_run_keeps_flights_on_lorentz_paths() {
        let env = FixtureEnvironment::new(
            vec![Vec3::new(5.0, 0.3, 0.0), Vec3::new(0.0, 6.0, 0.2)],
            1.0,
        )
        .unwrap();
        // A vanishing clock rate removes the auxiliary ticks.
        let ens = couple(&env, &[Vec3::x(), Vec3::z()], 1e-12, 30.0, 1, 0).unwrap();
        assert!(ens.freshness.iter().all(|f| f.a));
        assert!(ens.shadows.is_empty());
        assert_eq!(ens.lorentz, ens.flights);
        assert!(ens.times.sigma.is_infinite());
        assert!(ens.times.identity_holds(1e-9));
    }

    #[test]
    fn recollision_fixture() {
        let ens = couple(&trap(), &[Vec3::x()], 1e-12, 25.0, 1, 0).unwrap();
        let t = ens.times;
        assert_relative_eq!(t.sigma1, 20.0, epsilon = 1e-12);
        assert_relative_eq!(t.sigma3, 20.0, epsilon = 1e-9);
        assert!(t.sigma2.is_infinite());
        assert_relative_eq!(t.sigma, 20.0, epsilon = 1e-9);
        assert!(t.identity_holds(1e-9));
        // The flight ignores the recollision and keeps going along +x.
        let y = &ens.flights[0];
        assert_eq!(y.events.len(), 2);
        assert_eq!(&y.events[..], &ens.lorentz[0].events[..2]);
        assert_eq!(y.velocity_at(21.0), Vec3::x());
        assert_eq!(first_divergence(&ens.lorentz, &ens.flights), 20.0);
    }
}

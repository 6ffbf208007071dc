//! Event-driven Lorentz trajectories.
//!
//! A trajectory is stored as its list of scatterings; positions in between are
//! recovered by straight-line interpolation from the last event, so every
//! recorded event position is reproduced exactly.

use serde::{Deserialize, Serialize};

use crate::environment::Scatterers;
use crate::error::{invalid, Error, Result};
use crate::Vec3;

/// Collision count beyond which a trajectory is declared runaway.
pub const MAX_EVENTS: usize = 10_000_000;

/// Tolerance on unit-norm inputs to [`reflect`].
const UNIT_TOL: f64 = 1e-9;

/// One velocity change: a hard-sphere collision for Lorentz paths, a
/// scattering of the flight process otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringEvent {
    pub time: f64,
    pub position: Vec3,
    pub v_pre: Vec3,
    pub v_post: Vec3,
    /// Real scatterer centre for collisions; virtual centre for flights.
    pub centre: Vec3,
}

/// Collision of a Lorentz trajectory.
pub type CollisionEvent = ScatteringEvent;

/// Straight piece of a trajectory on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub start: Vec3,
    pub velocity: Vec3,
}

impl Segment {
    #[inline]
    pub fn point_at(&self, t: f64) -> Vec3 {
        self.start + self.velocity * (t - self.t0)
    }

    #[inline]
    pub fn end(&self) -> Vec3 {
        self.point_at(self.t1)
    }
}

/// Piecewise-linear unit-speed path started at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub v0: Vec3,
    pub horizon: f64,
    pub events: Vec<ScatteringEvent>,
}

/// Newtonian trajectory among hard spheres.
pub type LorentzPath = Path;

impl Path {
    pub fn straight(v0: Vec3, horizon: f64) -> Self {
        Self {
            v0,
            horizon,
            events: Vec::new(),
        }
    }

    /// Number of events with time `≤ t`, which is also the index of the
    /// segment containing `t`.
    #[inline]
    pub fn segment_index(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    pub fn position_at(&self, t: f64) -> Vec3 {
        match self.segment_index(t) {
            0 => self.v0 * t,
            k => {
                let e = &self.events[k - 1];
                e.position + e.v_post * (t - e.time)
            }
        }
    }

    /// Right-continuous velocity.
    pub fn velocity_at(&self, t: f64) -> Vec3 {
        match self.segment_index(t) {
            0 => self.v0,
            k => self.events[k - 1].v_post,
        }
    }

    pub fn endpoint(&self) -> Vec3 {
        self.position_at(self.horizon)
    }

    /// Event times.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.time)
    }

    /// Straight segments covering `[0, horizon]`.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut t0 = 0.0;
        let mut start = Vec3::zeros();
        let mut v = self.v0;
        for e in &self.events {
            out.push(Segment {
                t0,
                t1: e.time,
                start,
                velocity: v,
            });
            t0 = e.time;
            start = e.position;
            v = e.v_post;
        }
        out.push(Segment {
            t0,
            t1: self.horizon,
            start,
            velocity: v,
        });
        out
    }
}

/// Specular reflection `v − 2(v·n)n` of an incoming velocity.
pub fn reflect(v: &Vec3, normal: &Vec3) -> Result<Vec3> {
    if (v.norm() - 1.0).abs() > UNIT_TOL || (normal.norm() - 1.0).abs() > UNIT_TOL {
        return Err(invalid("reflect expects unit vectors"));
    }
    let vn = v.dot(normal);
    if vn >= 0.0 {
        return Err(Error::GrazingReflection(vn));
    }
    Ok((v - normal * (2.0 * vn)).normalize())
}

/// First collision of the ray `pos + t·v`, `t ∈ (0, t_max]`, skipping the
/// sphere centred at `exclude`. The returned event time is the ray parameter.
pub fn next_collision<S: Scatterers + ?Sized>(
    env: &S,
    pos: &Vec3,
    v: &Vec3,
    t_max: f64,
    exclude: Option<&Vec3>,
) -> Result<Option<CollisionEvent>> {
    let Some(hit) = env.first_hit(pos, v, t_max, exclude)? else {
        return Ok(None);
    };
    let position = pos + v * hit.entry;
    let normal = (position - hit.centre).normalize();
    let v_post = reflect(v, &normal)?;
    Ok(Some(CollisionEvent {
        time: hit.entry,
        position,
        v_pre: *v,
        v_post,
        centre: hit.centre,
    }))
}

/// Lorentz trajectory from the origin with initial velocity `v0` up to time
/// `horizon`.
pub fn simulate_lorentz<S: Scatterers + ?Sized>(
    env: &S,
    v0: &Vec3,
    horizon: f64,
) -> Result<LorentzPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let mut path = Path::straight(*v0, horizon);
    let mut t = 0.0;
    let mut pos = Vec3::zeros();
    let mut v = *v0;
    let mut last: Option<Vec3> = None;
    while let Some(mut ev) = next_collision(env, &pos, &v, horizon - t, last.as_ref())? {
        if path.events.len() >= MAX_EVENTS {
            return Err(Error::RunawayTrajectory(MAX_EVENTS));
        }
        t += ev.time;
        if t > horizon {
            break;
        }
        ev.time = t;
        pos = ev.position;
        v = ev.v_post;
        last = Some(ev.centre);
        path.events.push(ev);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::FixtureEnvironment;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn head_on_reflection() {
        let out = reflect(&Vec3::x(), &-Vec3::x()).unwrap();
        assert_relative_eq!(out, -Vec3::x(), epsilon = 1e-15);
    }

    #[test]
    fn oblique_reflection() {
        let h = 0.5f64.sqrt();
        let out = reflect(&Vec3::x(), &Vec3::new(-h, h, 0.0)).unwrap();
        assert_relative_eq!(out, Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn outgoing_reflection_is_rejected() {
        assert!(matches!(
            reflect(&Vec3::x(), &Vec3::x()),
            Err(Error::GrazingReflection(_))
        ));
        assert!(matches!(
            reflect(&Vec3::x(), &Vec3::y()),
            Err(Error::GrazingReflection(_))
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
        fn reflection_preserves_speed_and_flips_normal_component(v in unit(), n in unit()) {
            prop_assume!(v.dot(&n) < -1e-6);
            let out = reflect(&v, &n).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-12);
            prop_assert!((out.dot(&n) + v.dot(&n)).abs() < 1e-12);
            // Involution: reflecting the reversed outgoing velocity recovers
            // the reversed incoming one.
            let back = reflect(&-out, &n).unwrap();
            prop_assert!((back + v).norm() < 1e-12);
        }
    }

    #[test]
    fn single_head_on_collision() {
        let env = FixtureEnvironment::new(vec![Vec3::new(5.0, 0.0, 0.0)], 1.0).unwrap();
        let ev = next_collision(&env, &Vec3::zeros(), &Vec3::x(), 10.0, None)
            .unwrap()
            .unwrap();
        assert_relative_eq!(ev.time, 4.0, epsilon = 1e-12);
        assert_relative_eq!(ev.position, Vec3::new(4.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(ev.v_post, -Vec3::x(), epsilon = 1e-12);

        let path = simulate_lorentz(&env, &Vec3::x(), 10.0).unwrap();
        assert_eq!(path.events.len(), 1);
        assert_relative_eq!(path.endpoint(), Vec3::new(-2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn nearer_sphere_wins() {
        let env = FixtureEnvironment::new(
            vec![Vec3::new(7.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0)],
            1.0,
        )
        .unwrap();
        let ev = next_collision(&env, &Vec3::zeros(), &Vec3::x(), 10.0, None)
            .unwrap()
            .unwrap();
        assert_eq!(ev.centre, Vec3::new(5.0, 0.0, 0.0));
        assert!(next_collision(&env, &Vec3::zeros(), &Vec3::x(), 3.5, None)
            .unwrap()
            .is_none());
    }

    #[test]
    fn empty_environment_is_ballistic() {
        let env = FixtureEnvironment::empty(0.1);
        let v0 = Vec3::new(0.0, 0.6, 0.8);
        let path = simulate_lorentz(&env, &v0, 3.0).unwrap();
        assert!(path.events.is_empty());
        assert_relative_eq!(path.endpoint(), v0 * 3.0, epsilon = 1e-15);
    }

    #[test]
    fn starting_inside_is_an_error() {
        let env = FixtureEnvironment::new(vec![Vec3::new(1.5, 0.0, 0.0)], 1.0).unwrap();
        let r = next_collision(&env, &Vec3::new(1.2, 0.0, 0.0), &Vec3::x(), 5.0, None);
        assert!(matches!(r, Err(Error::InsideScatterer { .. })));
    }

    #[test]
    fn events_are_reproduced_by_interpolation() {
        // Two slightly offset facing spheres give a few bounces.
        let env = FixtureEnvironment::new(
            vec![Vec3::new(5.0, 0.05, 0.0), Vec3::new(-5.0, 0.0, 0.03)],
            1.0,
        )
        .unwrap();
        let path = simulate_lorentz(&env, &Vec3::x(), 40.0).unwrap();
        assert!(path.events.len() >= 2);
        for (k, e) in path.events.iter().enumerate() {
            assert_eq!(path.position_at(e.time), e.position);
            assert_relative_eq!((e.position - e.centre).norm(), 1.0, epsilon = 1e-9);
            let d = e.v_pre - e.v_post;
            assert_relative_eq!(e.position + d / d.norm(), e.centre, epsilon = 1e-9);
            if k > 0 {
                assert!(e.time > path.events[k - 1].time);
            }
        }
    }
}

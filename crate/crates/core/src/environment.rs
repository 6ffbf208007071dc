//! Poisson scatterer environments.
//!
//! [`BasePointProcess`] is the unit-scale point process, realised cell by
//! cell as a pure function of `(seed, cell)`. [`EnvironmentView`] rescales it
//! by `ε` and attaches spherical scatterers of radius `r = ε^{3/2}`. Hand
//! placed [`FixtureEnvironment`]s implement the same [`Scatterers`] interface
//! so that rare geometric branches can be exercised deterministically.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{cell_of, neighbour_offsets, Cell, GridWalk};
use crate::rng::{cell_family_key, CounterRng};
use crate::schedule::radius_of;
use crate::Vec3;

/// Discriminant threshold, relative to `r²`, below which a ray is treated as
/// tangent to a sphere and does not hit it.
pub const TANGENCY_TOL: f64 = 1e-12;

/// Relative depth below the surface at which a start point is considered to
/// be inside a scatterer rather than on it.
const INSIDE_TOL: f64 = 1e-6;

/// Normalisation of the base intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntensityConvention {
    /// `ϱ = 1/π`, so that the free-flight rate is `λ = ϱπ = 1`.
    #[default]
    UnitRate,
    /// `ϱ = 1`, giving `λ = π`.
    UnitIntensity,
}

impl IntensityConvention {
    pub fn rho(self) -> f64 {
        match self {
            IntensityConvention::UnitRate => 1.0 / PI,
            IntensityConvention::UnitIntensity => 1.0,
        }
    }
}

/// Collision rate of a unit-speed ray, `λ = ϱπ` in three dimensions.
pub fn collision_rate(rho: f64) -> f64 {
    rho * PI
}

/// One intersected scatterer along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub centre: Vec3,
    /// Ray parameter of the first intersection with the sphere.
    pub entry: f64,
}

/// Entry and exit parameters of the line `from + t·dir` through the ball,
/// or `None` if it misses or is tangent within [`TANGENCY_TOL`].
/// `dir` must be a unit vector.
#[inline]
pub fn ray_ball_interval(from: &Vec3, dir: &Vec3, centre: &Vec3, r: f64) -> Option<(f64, f64)> {
    let p = from - centre;
    let b = p.dot(dir);
    let c = p.norm_squared() - r * r;
    let disc = b * b - c;
    if disc < TANGENCY_TOL * r * r {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

/// Cumulative Poisson probabilities, stopped once the terms fall below
/// `1e-18`; the last entry is set to one so inversion always terminates.
fn poisson_cdf(mean: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut p = (-mean).exp();
    let mut acc = 0.0;
    let mut k = 0.0;
    loop {
        acc += p;
        out.push(acc);
        k += 1.0;
        p *= mean / k;
        if k > mean && p < 1e-18 {
            break;
        }
    }
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// The unit-scale Poisson point process shared by every rescaled view.
#[derive(Debug, Clone)]
pub struct BasePointProcess {
    seed: u64,
    rho: f64,
    cell_side: f64,
    world_radius: f64,
    family: u64,
    /// `P(N ≤ k)` for the per-cell count, up to where the tail is negligible.
    count_cdf: Vec<f64>,
}

impl BasePointProcess {
    /// Creates a process with intensity `rho` (points per unit volume),
    /// cubic cells of side `cell_side` and a ball of radius `world_radius`
    /// (base units) outside of which cells may not be queried.
    pub fn new(seed: u64, rho: f64, cell_side: f64, world_radius: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("intensity must be positive, got {rho}")));
        }
        if !(cell_side > 0.0 && cell_side.is_finite()) {
            return Err(invalid(format!(
                "cell side must be positive, got {cell_side}"
            )));
        }
        if !(world_radius > 0.0) {
            return Err(invalid(format!(
                "world radius must be positive, got {world_radius}"
            )));
        }
        let mean = rho * cell_side.powi(3);
        if !(mean < 64.0) {
            return Err(invalid(format!(
                "mean count per cell must be below 64, got {mean}"
            )));
        }
        Ok(Self {
            seed,
            rho,
            cell_side,
            world_radius,
            family: cell_family_key(seed),
            count_cdf: poisson_cdf(mean),
        })
    }

    /// World radius large enough for unit-speed paths of duration `horizon`
    /// at every scale down to `eps_min`: `4·horizon/eps_min` base units.
    pub fn world_radius_for(horizon: f64, eps_min: f64) -> f64 {
        4.0 * horizon.max(1.0) / eps_min
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    pub fn world_radius(&self) -> f64 {
        self.world_radius
    }

    pub fn dimension(&self) -> usize {
        crate::DIM
    }

    /// Mean number of points per cell.
    pub fn mean_count(&self) -> f64 {
        self.rho * self.cell_side.powi(3)
    }

    fn cell_in_bounds(&self, cell: Cell) -> bool {
        let s = self.cell_side;
        let near: f64 = cell
            .iter()
            .map(|&c| {
                let lo = c as f64 * s;
                let hi = lo + s;
                if lo > 0.0 {
                    lo * lo
                } else if hi < 0.0 {
                    hi * hi
                } else {
                    0.0
                }
            })
            .sum();
        near.sqrt() <= self.world_radius
    }

    /// Calls `f` on every point of `cell` without a bounds check.
    #[inline]
    pub(crate) fn visit_cell(&self, cell: Cell, mut f: impl FnMut(Vec3)) {
        let mut rng = CounterRng::for_cell_keyed(self.family, cell);
        let u = rng.uniform();
        // Linear search: the table is short and most cells are empty.
        let mut n = 0;
        while self.count_cdf[n] <= u {
            n += 1;
        }
        let s = self.cell_side;
        for _ in 0..n {
            let x = (cell[0] as f64 + rng.uniform()) * s;
            let y = (cell[1] as f64 + rng.uniform()) * s;
            let z = (cell[2] as f64 + rng.uniform()) * s;
            f(Vec3::new(x, y, z));
        }
    }

    /// Points of one cell, in base coordinates.
    pub fn cell_points(&self, cell: Cell) -> Result<Vec<Vec3>> {
        if !self.cell_in_bounds(cell) {
            return Err(Error::CellOutOfBounds {
                cell,
                radius: self.world_radius,
            });
        }
        let mut out = Vec::new();
        self.visit_cell(cell, |q| out.push(q));
        Ok(out)
    }
}

/// Read-only access to a configuration of equal spheres.
pub trait Scatterers: Send + Sync {
    fn radius(&self) -> f64;

    /// Earliest sphere entered by `from + t·dir` with `t ∈ [0, t_max]`,
    /// skipping the sphere centred at `exclude`.
    fn first_hit(
        &self,
        from: &Vec3,
        dir: &Vec3,
        t_max: f64,
        exclude: Option<&Vec3>,
    ) -> Result<Option<Hit>>;

    /// Every sphere the segment `from + t·dir`, `t ∈ [0, length]`, passes
    /// through, ordered by entry parameter.
    fn hits_along(&self, from: &Vec3, dir: &Vec3, length: f64) -> Result<Vec<Hit>>;
}

/// Classifies a candidate for [`Scatterers::first_hit`].
#[inline]
fn candidate_entry(from: &Vec3, dir: &Vec3, c: &Vec3, r: f64, t_max: f64) -> Result<Option<f64>> {
    let Some((t0, t1)) = ray_ball_interval(from, dir, c, r) else {
        return Ok(None);
    };
    if t1 <= 0.0 || t0 > t_max {
        return Ok(None);
    }
    if t0 < -INSIDE_TOL * r && (from - c).norm() < r * (1.0 - INSIDE_TOL) {
        return Err(Error::InsideScatterer {
            centre: [c.x, c.y, c.z],
        });
    }
    Ok(Some(t0.max(0.0)))
}

fn check_ray(dir: &Vec3, length: f64) -> Result<()> {
    if (dir.norm() - 1.0).abs() > 1e-12 {
        return Err(invalid(format!(
            "direction must be a unit vector, |dir| = {}",
            dir.norm()
        )));
    }
    if !(length >= 0.0) {
        return Err(invalid(format!(
            "segment length must be non-negative, got {length}"
        )));
    }
    Ok(())
}

fn sort_dedup(hits: &mut Vec<Hit>) {
    hits.sort_by(|a, b| {
        a.entry
            .total_cmp(&b.entry)
            .then(a.centre.x.total_cmp(&b.centre.x))
            .then(a.centre.y.total_cmp(&b.centre.y))
            .then(a.centre.z.total_cmp(&b.centre.z))
    });
    hits.dedup_by(|a, b| a.centre == b.centre);
}

/// The rescaled environment `ϖ_ε` with scatterers of radius `r = ε^{3/2}`.
#[derive(Debug, Clone)]
pub struct EnvironmentView {
    base: Arc<BasePointProcess>,
    eps: f64,
    radius: f64,
    bound: f64,
}

impl EnvironmentView {
    pub fn new(base: Arc<BasePointProcess>, eps: f64) -> Result<Self> {
        let radius = radius_of(eps, crate::DIM)?;
        let bound = base.world_radius * eps;
        Ok(Self {
            base,
            eps,
            radius,
            bound,
        })
    }

    pub fn base(&self) -> &Arc<BasePointProcess> {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Radius of the excluded ball around the origin (equal to `r`).
    pub fn exclusion_radius(&self) -> f64 {
        self.radius
    }

    /// World bound in rescaled units.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Free-flight collision rate `ϱ ε^{-3} π r²`.
    pub fn rate(&self) -> f64 {
        self.base.rho * PI * self.radius * self.radius / self.eps.powi(3)
    }

    /// Walks the cells near the segment in ray order. `on_cell` receives the
    /// rescaled entry parameter of each traversed cell and the admissible
    /// centres of it and its neighbours within reach that were not already
    /// delivered with the previous cell; returning `false` stops.
    fn scan(
        &self,
        from: &Vec3,
        dir: &Vec3,
        length: f64,
        mut on_cell: impl FnMut(f64, &[Vec3]) -> Result<bool>,
    ) -> Result<()> {
        check_ray(dir, length)?;
        let end = from + dir * length;
        let reach = from.norm().max(end.norm());
        if reach > self.bound {
            return Err(Error::SegmentOutOfBounds {
                reach,
                bound: self.bound,
            });
        }
        let eps = self.eps;
        let r = self.radius;
        let side = self.base.cell_side;
        let reach_b = r / eps * (1.0 + 1e-9) + 1e-12 * side;
        let o = [from.x / eps, from.y / eps, from.z / eps];
        let d = [dir.x, dir.y, dir.z];
        let mut buf: Vec<Vec3> = Vec::with_capacity(16);
        let mut prev: Option<Cell> = None;
        for span in GridWalk::new(o, d, length / eps, side) {
            let a = [
                o[0] + span.t_in * d[0],
                o[1] + span.t_in * d[1],
                o[2] + span.t_in * d[2],
            ];
            let b = [
                o[0] + span.t_out * d[0],
                o[1] + span.t_out * d[1],
                o[2] + span.t_out * d[2],
            ];
            buf.clear();
            let mut keep = |q: Vec3| {
                let c = q * eps;
                if c.norm() > r {
                    buf.push(c);
                }
            };
            let mut offsets = neighbour_offsets(span.cell, a, b, side, reach_b);
            // The previous cell was realised in full by the previous span.
            if let Some(p) = prev {
                offsets.remove([
                    p[0] - span.cell[0],
                    p[1] - span.cell[1],
                    p[2] - span.cell[2],
                ]);
            }
            prev = Some(span.cell);
            if offsets.is_single() {
                self.base.visit_cell(span.cell, &mut keep);
            } else {
                for off in offsets.iter() {
                    let cell = [
                        span.cell[0] + off[0],
                        span.cell[1] + off[1],
                        span.cell[2] + off[2],
                    ];
                    self.base.visit_cell(cell, &mut keep);
                }
            }
            if !on_cell(span.t_in * eps, &buf)? {
                break;
            }
        }
        Ok(())
    }

    /// Scatterer centres with every coordinate in `[lo, hi]` (rescaled).
    pub fn centres_in_box(&self, lo: Vec3, hi: Vec3) -> Result<Vec<Vec3>> {
        let eps = self.eps;
        let side = self.base.cell_side;
        let clo = cell_of([lo.x / eps, lo.y / eps, lo.z / eps], side);
        let chi = cell_of([hi.x / eps, hi.y / eps, hi.z / eps], side);
        let mut out = Vec::new();
        for i in clo[0]..=chi[0] {
            for j in clo[1]..=chi[1] {
                for k in clo[2]..=chi[2] {
                    for q in self.base.cell_points([i, j, k])? {
                        let c = q * eps;
                        let inside = (0..3).all(|a| c[a] >= lo[a] && c[a] <= hi[a]);
                        if inside && c.norm() > self.radius {
                            out.push(c);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl Scatterers for EnvironmentView {
    fn radius(&self) -> f64 {
        self.radius
    }

    fn first_hit(
        &self,
        from: &Vec3,
        dir: &Vec3,
        t_max: f64,
        exclude: Option<&Vec3>,
    ) -> Result<Option<Hit>> {
        let r = self.radius;
        let mut best: Option<Hit> = None;
        self.scan(from, dir, t_max, |t_in, centres| {
            if best.is_some_and(|h| t_in > h.entry) {
                return Ok(false);
            }
            for c in centres {
                if exclude == Some(c) {
                    continue;
                }
                if let Some(entry) = candidate_entry(from, dir, c, r, t_max)? {
                    if best.is_none_or(|h| entry < h.entry) {
                        best = Some(Hit { centre: *c, entry });
                    }
                }
            }
            Ok(true)
        })?;
        Ok(best)
    }

    fn hits_along(&self, from: &Vec3, dir: &Vec3, length: f64) -> Result<Vec<Hit>> {
        let r = self.radius;
        let mut hits = Vec::new();
        self.scan(from, dir, length, |_, centres| {
            for c in centres {
                if let Some((t0, t1)) = ray_ball_interval(from, dir, c, r) {
                    if t1 > 0.0 && t0 <= length {
                        hits.push(Hit {
                            centre: *c,
                            entry: t0.max(0.0),
                        });
                    }
                }
            }
            Ok(true)
        })?;
        sort_dedup(&mut hits);
        Ok(hits)
    }
}

/// `scatterers_along` on any scatterer configuration.
pub fn scatterers_along<S: Scatterers + ?Sized>(
    env: &S,
    from: &Vec3,
    dir: &Vec3,
    length: f64,
) -> Result<Vec<Hit>> {
    env.hits_along(from, dir, length)
}

/// An explicit list of spheres; queried by brute force.
#[derive(Debug, Clone)]
pub struct FixtureEnvironment {
    centres: Vec<Vec3>,
    radius: f64,
}

impl FixtureEnvironment {
    /// Centres within `radius` of the origin are dropped, as in the random
    /// environment.
    pub fn new(centres: Vec<Vec3>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        let centres = centres.into_iter().filter(|c| c.norm() > radius).collect();
        Ok(Self { centres, radius })
    }

    pub fn empty(radius: f64) -> Self {
        Self {
            centres: Vec::new(),
            radius,
        }
    }

    pub fn centres(&self) -> &[Vec3] {
        &self.centres
    }
}

impl Scatterers for FixtureEnvironment {
    fn radius(&self) -> f64 {
        self.radius
    }

    fn first_hit(
        &self,
        from: &Vec3,
        dir: &Vec3,
        t_max: f64,
        exclude: Option<&Vec3>,
    ) -> Result<Option<Hit>> {
        check_ray(dir, t_max)?;
        let mut best: Option<Hit> = None;
        for c in &self.centres {
            if exclude == Some(c) {
                continue;
            }
            if let Some(entry) = candidate_entry(from, dir, c, self.radius, t_max)? {
                if best.is_none_or(|h| entry < h.entry) {
                    best = Some(Hit { centre: *c, entry });
                }
            }
        }
        Ok(best)
    }

    fn hits_along(&self, from: &Vec3, dir: &Vec3, length: f64) -> Result<Vec<Hit>> {
        check_ray(dir, length)?;
        let mut hits: Vec<Hit> = self
            .centres
            .iter()
            .filter_map(|c| {
                let (t0, t1) = ray_ball_interval(from, dir, c, self.radius)?;
                (t1 > 0.0 && t0 <= length).then(|| Hit {
                    centre: *c,
                    entry: t0.max(0.0),
                })
            })
            .collect();
        sort_dedup(&mut hits);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base(seed: u64) -> Arc<BasePointProcess> {
        Arc::new(BasePointProcess::new(seed, 1.0 / PI, 1.0, 1e6).unwrap())
    }

    #[test]
    fn cells_are_deterministic() {
        let a = BasePointProcess::new(3, 1.0, 1.0, 100.0).unwrap();
        let b = BasePointProcess::new(3, 1.0, 1.0, 100.0).unwrap();
        for cell in [[0, 0, 0], [5, -3, 2], [-7, -7, -7]] {
            assert_eq!(a.cell_points(cell).unwrap(), a.cell_points(cell).unwrap());
            assert_eq!(a.cell_points(cell).unwrap(), b.cell_points(cell).unwrap());
        }
    }

    #[test]
    fn points_lie_in_their_cell() {
        let a = BasePointProcess::new(11, 3.0, 0.5, 100.0).unwrap();
        for i in -4..4 {
            let cell = [i, 2 * i, -i];
            for q in a.cell_points(cell).unwrap() {
                for ax in 0..3 {
                    let lo = cell[ax] as f64 * 0.5;
                    assert!(q[ax] >= lo && q[ax] < lo + 0.5);
                }
            }
        }
    }

    #[test]
    fn far_cells_are_rejected() {
        let a = BasePointProcess::new(1, 1.0, 1.0, 10.0).unwrap();
        assert!(a.cell_points([9, 0, 0]).is_ok());
        assert!(matches!(
            a.cell_points([20, 0, 0]),
            Err(Error::CellOutOfBounds { .. })
        ));
    }

    #[test]
    fn view_rate_matches_convention() {
        let v = EnvironmentView::new(base(1), 0.01).unwrap();
        assert_relative_eq!(v.rate(), 1.0, max_relative = 1e-12);
        let b = Arc::new(BasePointProcess::new(1, 1.0, 1.0, 1e6).unwrap());
        let v = EnvironmentView::new(b, 0.01).unwrap();
        assert_relative_eq!(v.rate(), PI, max_relative = 1e-12);
    }

    #[test]
    fn fixture_single_sphere_entry() {
        let env = FixtureEnvironment::new(vec![Vec3::new(5.0, 0.0, 0.0)], 1.0).unwrap();
        let hits = env.hits_along(&Vec3::zeros(), &Vec3::x(), 10.0).unwrap();
        assert_eq!(hits.len(), 1);
        assert_relative_eq!(hits[0].entry, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn fixture_impact_parameter_entry() {
        let env = FixtureEnvironment::new(vec![Vec3::new(5.0, 0.5, 0.0)], 1.0).unwrap();
        let hits = env.hits_along(&Vec3::zeros(), &Vec3::x(), 10.0).unwrap();
        // Hand solution of |t e_x - c|² = 1.
        let expected = 5.0 - (1.0f64 - 0.25).sqrt();
        assert_relative_eq!(hits[0].entry, expected, epsilon = 1e-12);
    }

    #[test]
    fn tangent_rays_miss() {
        let env = FixtureEnvironment::new(vec![Vec3::new(5.0, 1.0, 0.0)], 1.0).unwrap();
        assert!(env
            .hits_along(&Vec3::zeros(), &Vec3::x(), 10.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn view_excludes_origin_ball_and_honours_bounds() {
        let v = EnvironmentView::new(base(5), 0.5).unwrap();
        let lo = Vec3::new(-3.0, -3.0, -3.0);
        for c in v.centres_in_box(lo, -lo).unwrap() {
            assert!(c.norm() > v.radius());
        }
        let small = Arc::new(BasePointProcess::new(5, 1.0, 1.0, 10.0).unwrap());
        let v = EnvironmentView::new(small, 0.1).unwrap();
        let err = v.hits_along(&Vec3::zeros(), &Vec3::x(), 2.0);
        assert!(matches!(err, Err(Error::SegmentOutOfBounds { .. })));
    }

    #[test]
    fn grid_query_agrees_with_brute_force() {
        // Large radius relative to the cell so neighbour handling matters.
        let eps = 0.3;
        let v = EnvironmentView::new(base(21), eps).unwrap();
        let lo = Vec3::new(-6.0, -6.0, -6.0);
        let fixture =
            FixtureEnvironment::new(v.centres_in_box(lo, -lo).unwrap(), v.radius()).unwrap();
        let dirs = [
            Vec3::new(1.0, 0.3, -0.2),
            Vec3::new(-0.4, 1.0, 0.7),
            Vec3::new(0.1, -0.2, -1.0),
            Vec3::new(1.0, 1.0, 1.0),
        ];
        for d in dirs {
            let d = d.normalize();
            let from = Vec3::new(0.01, -0.02, 0.03);
            let grid = v.hits_along(&from, &d, 4.0).unwrap();
            let brute = fixture.hits_along(&from, &d, 4.0).unwrap();
            assert_eq!(grid, brute);
            let g = v.first_hit(&from, &d, 4.0, None).unwrap();
            let b = fixture.first_hit(&from, &d, 4.0, None).unwrap();
            assert_eq!(g, b);
        }
    }

    #[test]
    fn views_of_one_base_are_rescalings() {
        let b = base(8);
        let v1 = EnvironmentView::new(b.clone(), 0.2).unwrap();
        let v2 = EnvironmentView::new(b, 0.1).unwrap();
        let c1 = v1
            .centres_in_box(Vec3::new(0.5, 0.5, 0.5), Vec3::new(2.0, 2.0, 2.0))
            .unwrap();
        let c2 = v2
            .centres_in_box(Vec3::new(0.25, 0.25, 0.25), Vec3::new(1.0, 1.0, 1.0))
            .unwrap();
        assert_eq!(c1.len(), c2.len());
        for (a, b) in c1.iter().zip(&c2) {
            assert_relative_eq!(*a * 0.5, *b, epsilon = 1e-12);
        }
    }
}

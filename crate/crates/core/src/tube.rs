//! Distances from points to the union of past trajectory segments, and
//! spatial indices over segments and sphere centres.
//!
//! All queries take a time limit: only the part of each segment with time
//! `≤ t_limit` counts, and segments starting at or after the limit are
//! ignored. A single `(path, segment)` pair can be excluded; this realises
//! "strictly earlier" for a point that sits on the end of the excluded piece.

use crate::dynamics::{Path, Segment};
use crate::environment::ray_ball_interval;
use crate::grid::{cell_of, neighbour_offsets, CellMap, GridWalk};
use crate::Vec3;

/// `(path index, segment index)`; segment `k` ends at event `k`.
pub type SegmentId = (usize, usize);

/// Absolute slack for contact tests at radius `r` among coordinates of
/// magnitude `scale`: relative `1e-9` of `r` plus a few ulps of the
/// coordinates.
#[inline]
pub fn contact_tol(r: f64, scale: f64) -> f64 {
    1e-9 * r + 1e-13 * (1.0 + scale)
}

/// Distance from `p` to the part of `seg` with time `≤ t_limit`, or `None`
/// if the segment starts at or after the limit.
#[inline]
pub fn clipped_distance(p: &Vec3, seg: &Segment, t_limit: f64) -> Option<f64> {
    if seg.t0 >= t_limit {
        return None;
    }
    let len = seg.t1.min(t_limit) - seg.t0;
    let w = p - seg.start;
    let s = w.dot(&seg.velocity).clamp(0.0, len.max(0.0));
    Some((w - seg.velocity * s).norm())
}

/// Brute-force distance from `point` to the union of all path pieces with
/// time `≤ t_limit`, skipping `exclude`. Infinite if nothing qualifies.
pub fn tube_distance(
    paths: &[Path],
    point: &Vec3,
    t_limit: f64,
    exclude: Option<SegmentId>,
) -> f64 {
    let mut best = f64::INFINITY;
    for (i, path) in paths.iter().enumerate() {
        for (k, seg) in path.segments().iter().enumerate() {
            if exclude == Some((i, k)) {
                continue;
            }
            if let Some(d) = clipped_distance(point, seg, t_limit) {
                best = best.min(d);
            }
        }
    }
    best
}

/// Segments of a set of paths hashed into cubic cells.
#[derive(Debug, Clone)]
pub struct TubeIndex {
    segments: Vec<(SegmentId, Segment)>,
    cells: CellMap<Vec<u32>>,
    side: f64,
}

impl TubeIndex {
    pub fn new(paths: &[Path], side: f64) -> Self {
        let mut segments = Vec::new();
        for (i, path) in paths.iter().enumerate() {
            for (k, seg) in path.segments().into_iter().enumerate() {
                segments.push(((i, k), seg));
            }
        }
        let mut cells: CellMap<Vec<u32>> = CellMap::default();
        for (idx, (_, seg)) in segments.iter().enumerate() {
            let o = [seg.start.x, seg.start.y, seg.start.z];
            let d = [seg.velocity.x, seg.velocity.y, seg.velocity.z];
            for span in GridWalk::new(o, d, seg.t1 - seg.t0, side) {
                cells.entry(span.cell).or_default().push(idx as u32);
            }
        }
        Self {
            segments,
            cells,
            side,
        }
    }

    /// Same as [`tube_distance`] when the result is below `cutoff`
    /// (`cutoff ≤` cell side); otherwise some value `≥ cutoff`.
    pub fn min_distance(
        &self,
        point: &Vec3,
        t_limit: f64,
        exclude: Option<SegmentId>,
        cutoff: f64,
    ) -> f64 {
        let p = [point.x, point.y, point.z];
        let cell = cell_of(p, self.side);
        let mut best = f64::INFINITY;
        for off in neighbour_offsets(cell, p, p, self.side, cutoff).iter() {
            let c = [cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]];
            let Some(list) = self.cells.get(&c) else {
                continue;
            };
            for &idx in list {
                let (id, seg) = &self.segments[idx as usize];
                if exclude == Some(*id) {
                    continue;
                }
                if let Some(d) = clipped_distance(point, seg, t_limit) {
                    best = best.min(d);
                }
            }
        }
        best
    }
}

/// A sphere centre that becomes active at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedCentre {
    pub centre: Vec3,
    pub time: f64,
    /// Creating `(path, event)` pair.
    pub owner: (usize, usize),
}

/// Timed centres hashed by the cell containing them.
#[derive(Debug, Clone)]
pub struct CentreIndex {
    centres: Vec<TimedCentre>,
    cells: CellMap<Vec<u32>>,
    side: f64,
    r: f64,
}

impl CentreIndex {
    pub fn new(centres: Vec<TimedCentre>, r: f64, side: f64) -> Self {
        let mut cells: CellMap<Vec<u32>> = CellMap::default();
        for (idx, c) in centres.iter().enumerate() {
            let key = cell_of([c.centre.x, c.centre.y, c.centre.z], side);
            cells.entry(key).or_default().push(idx as u32);
        }
        Self {
            centres,
            cells,
            side,
            r,
        }
    }

    /// Earliest time `t` on `seg` such that the position at `t` lies strictly
    /// inside the ball of radius `r` around a centre active before `t`.
    /// `skip` is the owner whose ball the segment is known to leave.
    pub fn first_penetration(
        &self,
        seg: &Segment,
        skip: Option<(usize, usize)>,
    ) -> Option<(f64, (usize, usize))> {
        let len = seg.t1 - seg.t0;
        if !(len > 0.0) {
            return None;
        }
        let r = self.r;
        let o = [seg.start.x, seg.start.y, seg.start.z];
        let d = [seg.velocity.x, seg.velocity.y, seg.velocity.z];
        let reach = r * (1.0 + 1e-9) + 1e-12 * self.side;
        let tol = contact_tol(r, seg.start.norm() + len);
        let mut best: Option<(f64, (usize, usize))> = None;
        for span in GridWalk::new(o, d, len, self.side) {
            if best.is_some_and(|(t, _)| seg.t0 + span.t_in > t + 2.0 * reach) {
                break;
            }
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
            for off in neighbour_offsets(span.cell, a, b, self.side, reach).iter() {
                let c = [
                    span.cell[0] + off[0],
                    span.cell[1] + off[1],
                    span.cell[2] + off[2],
                ];
                let Some(list) = self.cells.get(&c) else {
                    continue;
                };
                for &idx in list {
                    let tc = &self.centres[idx as usize];
                    if skip == Some(tc.owner) || tc.time >= seg.t1 {
                        continue;
                    }
                    let Some((s0, s1)) =
                        ray_ball_interval(&seg.start, &seg.velocity, &tc.centre, r)
                    else {
                        continue;
                    };
                    let lo = (seg.t0 + s0.max(0.0)).max(tc.time);
                    let hi = seg.t0 + s1.min(len);
                    if hi - lo > tol && best.is_none_or(|(t, _)| lo < t) {
                        best = Some((lo, tc.owner));
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ScatteringEvent;
    use approx::assert_relative_eq;

    fn zigzag() -> Path {
        // Ten unit-length segments turning by ±90° in the xy-plane.
        let mut path = Path::straight(Vec3::x(), 10.0);
        let mut pos = Vec3::zeros();
        let mut v = Vec3::x();
        for k in 1..10 {
            pos += v;
            let next = if k % 2 == 1 { Vec3::y() } else { Vec3::x() };
            path.events.push(ScatteringEvent {
                time: k as f64,
                position: pos,
                v_pre: v,
                v_post: next,
                centre: pos,
            });
            v = next;
        }
        path
    }

    #[test]
    fn distance_to_single_segment() {
        let p = Path::straight(Vec3::x(), 10.0);
        let d = tube_distance(&[p], &Vec3::new(5.0, 2.0, 0.0), 10.0, None);
        assert_relative_eq!(d, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn time_limit_clips_segments() {
        let p = Path::straight(Vec3::x(), 10.0);
        let d = tube_distance(&[p], &Vec3::new(5.0, 0.0, 0.0), 3.0, None);
        assert_relative_eq!(d, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn exclusion_skips_the_current_piece() {
        let p = zigzag();
        let q = p.events[3].position + Vec3::new(0.0, 0.0, 0.1);
        assert_relative_eq!(
            tube_distance(std::slice::from_ref(&p), &q, 4.0, None),
            0.1,
            epsilon = 1e-12
        );
        let d = tube_distance(&[p], &q, 4.0, Some((0, 3)));
        // Nearest remaining piece is segment 2, which ends one unit away.
        assert_relative_eq!(d, (1.0f64 + 0.01).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn dense_time_sampling_oracle() {
        let p = zigzag();
        let paths = [p.clone()];
        let points = [
            Vec3::new(2.3, 1.7, 0.4),
            Vec3::new(-1.0, 0.5, 0.0),
            Vec3::new(4.1, 4.9, -0.3),
            Vec3::new(3.0, 2.0, 1.0),
        ];
        for q in points {
            let exact = tube_distance(&paths, &q, 10.0, None);
            let sampled = (0..=1000)
                .map(|i| (p.position_at(i as f64 * 0.01) - q).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(exact <= sampled + 1e-12);
            // Sample spacing 0.01 bounds the discretisation error.
            assert!(sampled - exact < 0.01);
        }
    }

    #[test]
    fn index_agrees_with_brute_force() {
        let paths = vec![zigzag(), Path::straight(Vec3::new(0.0, 0.6, 0.8), 10.0)];
        let index = TubeIndex::new(&paths, 0.5);
        for i in 0..200 {
            let f = i as f64;
            let q = Vec3::new(
                (f * 0.37).sin() * 5.0 + 2.5,
                (f * 0.11).cos() * 5.0 + 2.5,
                (f * 0.05).sin(),
            );
            let t = 1.0 + (f * 0.7) % 9.0;
            let brute = tube_distance(&paths, &q, t, Some((0, 2)));
            let fast = index.min_distance(&q, t, Some((0, 2)), 0.4);
            if brute < 0.4 {
                assert_eq!(brute, fast);
            } else {
                assert!(fast >= 0.4);
            }
        }
    }

    #[test]
    fn penetration_respects_activation_time() {
        let centres = vec![TimedCentre {
            centre: Vec3::new(5.0, 0.0, 0.0),
            time: 5.5,
            owner: (1, 0),
        }];
        let index = CentreIndex::new(centres, 1.0, 0.5);
        let seg = Segment {
            t0: 0.0,
            t1: 10.0,
            start: Vec3::zeros(),
            velocity: Vec3::x(),
        };
        let (t, owner) = index.first_penetration(&seg, None).unwrap();
        assert_relative_eq!(t, 5.5, epsilon = 1e-12);
        assert_eq!(owner, (1, 0));
        assert!(index.first_penetration(&seg, Some((1, 0))).is_none());
        let late = Segment { t1: 5.0, ..seg };
        assert!(index.first_penetration(&late, None).is_none());
    }
}

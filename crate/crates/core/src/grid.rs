//! Cubic-grid traversal (Amanatides–Woo) and small cell helpers.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::rng::mix64;

/// Integer cell coordinates.
pub type Cell = [i64; 3];

/// Cheap deterministic hasher for cell keys.
#[derive(Debug, Default, Clone, Copy)]
pub struct CellHasher(u64);

impl Hasher for CellHasher {
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.0 = mix64(self.0 ^ u64::from_le_bytes(word));
        }
    }

    fn write_u64(&mut self, i: u64) {
        self.0 = mix64(self.0 ^ i);
    }

    fn write_usize(&mut self, i: usize) {
        self.write_u64(i as u64);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Hash map keyed by cells.
pub type CellMap<V> = HashMap<Cell, V, BuildHasherDefault<CellHasher>>;

/// One visited cell and the ray-parameter interval spent inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpan {
    pub cell: Cell,
    pub t_in: f64,
    pub t_out: f64,
}

#[inline]
pub fn cell_of(p: [f64; 3], side: f64) -> Cell {
    [
        (p[0] / side).floor() as i64,
        (p[1] / side).floor() as i64,
        (p[2] / side).floor() as i64,
    ]
}

/// Visits, in ray order, every cell that `origin + t * dir`, `t ∈ [0, length]`
/// passes through. `dir` need not be normalised; `t` is in units of it.
#[derive(Debug, Clone)]
pub struct GridWalk {
    cell: Cell,
    step: [i64; 3],
    t_next: [f64; 3],
    t_delta: [f64; 3],
    t: f64,
    length: f64,
    done: bool,
}

impl GridWalk {
    pub fn new(origin: [f64; 3], dir: [f64; 3], length: f64, side: f64) -> Self {
        let cell = cell_of(origin, side);
        let mut step = [0i64; 3];
        let mut t_next = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            if dir[a] > 0.0 {
                step[a] = 1;
                t_next[a] = ((cell[a] + 1) as f64 * side - origin[a]) / dir[a];
                t_delta[a] = side / dir[a];
            } else if dir[a] < 0.0 {
                step[a] = -1;
                t_next[a] = (cell[a] as f64 * side - origin[a]) / dir[a];
                t_delta[a] = -side / dir[a];
            }
        }
        Self {
            cell,
            step,
            t_next,
            t_delta,
            t: 0.0,
            length: length.max(0.0),
            done: false,
        }
    }
}

impl Iterator for GridWalk {
    type Item = CellSpan;

    fn next(&mut self) -> Option<CellSpan> {
        if self.done {
            return None;
        }
        let axis = if self.t_next[0] <= self.t_next[1] {
            if self.t_next[0] <= self.t_next[2] {
                0
            } else {
                2
            }
        } else if self.t_next[1] <= self.t_next[2] {
            1
        } else {
            2
        };
        let t_out = self.t_next[axis].max(self.t);
        let span = CellSpan {
            cell: self.cell,
            t_in: self.t,
            t_out: t_out.min(self.length),
        };
        if t_out >= self.length {
            self.done = true;
        } else {
            self.cell[axis] += self.step[axis];
            self.t = t_out;
            self.t_next[axis] += self.t_delta[axis];
        }
        Some(span)
    }
}

/// Set of neighbour offsets within the 3x3x3 block, stored as a bit mask.
/// Iteration yields the zero offset first when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Offsets {
    mask: u32,
}

const ZERO_BIT: u32 = 13;

#[inline]
fn offset_bit(off: Cell) -> u32 {
    ((off[0] + 1) * 9 + (off[1] + 1) * 3 + (off[2] + 1)) as u32
}

impl Offsets {
    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    /// True when only the cell itself is reachable.
    #[inline]
    pub fn is_single(&self) -> bool {
        self.mask == 1 << ZERO_BIT
    }

    pub fn contains(&self, off: Cell) -> bool {
        off.iter().all(|c| c.abs() <= 1) && self.mask & (1 << offset_bit(off)) != 0
    }

    /// Removes `off` if it lies in the block.
    #[inline]
    pub fn remove(&mut self, off: Cell) {
        if off.iter().all(|c| c.abs() <= 1) {
            self.mask &= !(1 << offset_bit(off));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Cell> {
        let zero = self.mask & (1 << ZERO_BIT);
        let mut rest = self.mask & !(1 << ZERO_BIT);
        let mut first = zero != 0;
        std::iter::from_fn(move || {
            let bit = if first {
                first = false;
                ZERO_BIT
            } else if rest != 0 {
                let b = rest.trailing_zeros();
                rest &= rest - 1;
                b
            } else {
                return None;
            };
            let b = bit as i64;
            Some([b / 9 - 1, (b / 3) % 3 - 1, b % 3 - 1])
        })
    }
}

/// Parameter interval `s ∈ [0, 1]` on which `x0 + s(x1 − x0) < thr`.
#[inline]
fn below(x0: f64, x1: f64, thr: f64) -> (f64, f64) {
    match (x0 < thr, x1 < thr) {
        (true, true) => (0.0, 1.0),
        (false, false) => (1.0, 0.0),
        (true, false) => (0.0, (thr - x0) / (x1 - x0)),
        (false, true) => ((thr - x0) / (x1 - x0), 1.0),
    }
}

/// Offsets of the neighbouring cells that a sausage of radius `reach` around
/// the sub-segment `[a, b]` (both inside `cell`) can touch. A neighbour is
/// kept when some point of the sub-segment is within `reach` of every face
/// separating it from `cell`; this over-approximates the Euclidean test and
/// is exact for face neighbours.
#[inline]
pub fn neighbour_offsets(cell: Cell, a: [f64; 3], b: [f64; 3], side: f64, reach: f64) -> Offsets {
    // Faces the sub-segment comes near: (axis, offset, parameter interval).
    let mut faces = [(0usize, 0i64, 0.0f64, 0.0f64); 6];
    let mut n = 0;
    for ax in 0..3 {
        let lo_face = cell[ax] as f64 * side;
        let (lo, hi) = below(a[ax], b[ax], lo_face + reach);
        if lo <= hi {
            faces[n] = (ax, -1, lo, hi);
            n += 1;
        }
        let (lo, hi) = below(-a[ax], -b[ax], -(lo_face + side - reach));
        if lo <= hi {
            faces[n] = (ax, 1, lo, hi);
            n += 1;
        }
    }
    let mut mask = 1u32 << ZERO_BIT;
    'subsets: for set in 1u32..(1 << n) {
        let mut off = [0i64; 3];
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut bits = set;
        while bits != 0 {
            let (ax, o, l, h) = faces[bits.trailing_zeros() as usize];
            bits &= bits - 1;
            if off[ax] != 0 {
                continue 'subsets;
            }
            off[ax] = o;
            lo = lo.max(l);
            hi = hi.min(h);
        }
        if lo <= hi {
            mask |= 1 << offset_bit(off);
        }
    }
    Offsets { mask }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walk_along_axis_visits_consecutive_cells() {
        let spans: Vec<_> = GridWalk::new([0.5, 0.5, 0.5], [1.0, 0.0, 0.0], 3.0, 1.0).collect();
        let cells: Vec<_> = spans.iter().map(|s| s.cell).collect();
        assert_eq!(cells, vec![[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        assert_eq!(spans[0].t_in, 0.0);
        assert!((spans[0].t_out - 0.5).abs() < 1e-15);
        assert_eq!(spans[3].t_out, 3.0);
    }

    #[test]
    fn walk_negative_direction() {
        let cells: Vec<_> = GridWalk::new([0.5, 0.5, 0.5], [0.0, -1.0, 0.0], 2.0, 1.0)
            .map(|s| s.cell)
            .collect();
        assert_eq!(cells, vec![[0, 0, 0], [0, -1, 0], [0, -2, 0]]);
    }

    #[test]
    fn walk_spans_tile_the_segment_and_are_face_adjacent() {
        let dir = [0.3, -0.7, 0.648_074_069_840_786];
        let spans: Vec<_> = GridWalk::new([0.1, 2.9, -1.3], dir, 17.0, 0.8).collect();
        assert_eq!(spans[0].t_in, 0.0);
        assert_eq!(spans.last().unwrap().t_out, 17.0);
        for w in spans.windows(2) {
            assert_eq!(w[0].t_out, w[1].t_in);
            let d: i64 = (0..3).map(|a| (w[0].cell[a] - w[1].cell[a]).abs()).sum();
            assert_eq!(d, 1);
        }
        // midpoint of every span lies in its cell
        for s in &spans {
            let t = 0.5 * (s.t_in + s.t_out);
            let p = [0.1 + t * dir[0], 2.9 + t * dir[1], -1.3 + t * dir[2]];
            assert_eq!(cell_of(p, 0.8), s.cell);
        }
    }

    #[test]
    fn neighbours_only_near_faces() {
        let offs = neighbour_offsets([0, 0, 0], [0.5, 0.5, 0.5], [0.6, 0.5, 0.5], 1.0, 0.1);
        assert!(offs.is_single());
        assert_eq!(offs.iter().collect::<Vec<_>>(), vec![[0, 0, 0]]);
        let offs = neighbour_offsets([0, 0, 0], [0.05, 0.5, 0.95], [0.2, 0.5, 0.95], 1.0, 0.1);
        let all: Vec<_> = offs.iter().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(offs.len(), 4);
        assert_eq!(all[0], [0, 0, 0]);
        assert!(all.contains(&[-1, 0, 1]));
    }

    #[test]
    fn diagonal_needs_simultaneous_proximity() {
        // Near the low x face early and the high y face late, never both.
        let offs = neighbour_offsets([0, 0, 0], [0.05, 0.5, 0.5], [0.5, 0.95, 0.5], 1.0, 0.1);
        assert_eq!(offs.len(), 3);
        assert!(offs.contains([-1, 0, 0]) && offs.contains([0, 1, 0]));
        assert!(!offs.contains([-1, 1, 0]));
        let mut offs = offs;
        offs.remove([0, 1, 0]);
        assert_eq!(offs.len(), 2);
    }

    fn box_distance(p: [f64; 3], cell: Cell, side: f64) -> f64 {
        (0..3)
            .map(|a| {
                let lo = cell[a] as f64 * side;
                let d = (lo - p[a]).max(p[a] - lo - side).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn offsets_cover_every_cell_the_sausage_touches() {
        let mut state = 0x1234_5678u64;
        let mut unif = || {
            state = mix64(state.wrapping_add(0x9E37_79B9_7F4A_7C15));
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let side = 1.0;
        for _ in 0..2000 {
            let a = [unif(), unif(), unif()];
            let b = [unif(), unif(), unif()];
            let reach = 0.3 * unif();
            let offs = neighbour_offsets([0, 0, 0], a, b, side, reach);
            for i in 0..=200 {
                let s = i as f64 / 200.0;
                let p = [0, 1, 2].map(|k| a[k] + s * (b[k] - a[k]));
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let off = [dx, dy, dz];
                            if box_distance(p, off, side) < reach {
                                assert!(offs.contains(off), "{a:?} {b:?} {reach} {off:?}");
                            }
                        }
                    }
                }
            }
        }
    }
}

//! Bounded continuous path functionals on `C([0, 1], R³)`.
//!
//! Every functional in the dictionary depends on a path only through its
//! uniform norm, its coordinate maxima and its endpoint. For piecewise-linear
//! paths all three are attained at vertices, so a [`PathSummary`] built from
//! the vertices is exact.

use serde::{Deserialize, Serialize};

use crate::dynamics::Path;
use crate::Vec3;

/// The quantities of a path on `[0, 1]` that the dictionary reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub sup_norm: f64,
    pub coord_max: [f64; 3],
    pub endpoint: Vec3,
}

impl PathSummary {
    /// Summary of the path through the origin and the given vertices; the
    /// last vertex is the endpoint.
    pub fn from_vertices<I: IntoIterator<Item = Vec3>>(vertices: I) -> Self {
        let mut out = Self {
            sup_norm: 0.0,
            coord_max: [0.0; 3],
            endpoint: Vec3::zeros(),
        };
        for v in vertices {
            out.sup_norm = out.sup_norm.max(v.norm());
            for a in 0..3 {
                out.coord_max[a] = out.coord_max[a].max(v[a]);
            }
            out.endpoint = v;
        }
        out
    }

    /// Summary of `s ↦ T^{−1/2} X(T s)` on `[0, 1]` for a path of horizon `T`.
    pub fn of_rescaled(path: &Path) -> Self {
        let scale = path.horizon.sqrt().recip();
        let events = path
            .events
            .iter()
            .take_while(|e| e.time <= path.horizon)
            .map(|e| e.position * scale);
        Self::from_vertices(events.chain(std::iter::once(path.endpoint() * scale)))
    }
}

/// Shape of a dictionary functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FunctionalKind {
    /// `min(sup_{t≤1} |z(t)|, M)`.
    CappedSupNorm,
    /// `exp(−|z(1)|²/2)`.
    EndpointGaussian,
    /// `cos(z₁(1))`.
    EndpointCosine,
    /// `min(max_{t≤1} z_a(t), M)`.
    CappedCoordinateMax { axis: usize },
    /// The constant `M`.
    Constant,
}

/// A bounded continuous functional with `|F| ≤ cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFunctional {
    pub kind: FunctionalKind,
    pub cap: f64,
}

impl PathFunctional {
    pub fn capped_sup_norm(cap: f64) -> Self {
        Self {
            kind: FunctionalKind::CappedSupNorm,
            cap,
        }
    }

    pub fn endpoint_gaussian() -> Self {
        Self {
            kind: FunctionalKind::EndpointGaussian,
            cap: 1.0,
        }
    }

    pub fn endpoint_cosine() -> Self {
        Self {
            kind: FunctionalKind::EndpointCosine,
            cap: 1.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: FunctionalKind::Constant,
            cap: value,
        }
    }

    pub fn capped_coordinate_max(axis: usize, cap: f64) -> Self {
        Self {
            kind: FunctionalKind::CappedCoordinateMax { axis },
            cap,
        }
    }

    /// Short identifier used in output tables.
    pub fn name(&self) -> String {
        match self.kind {
            FunctionalKind::CappedSupNorm => format!("sup_norm_cap{}", self.cap),
            FunctionalKind::EndpointGaussian => "endpoint_gaussian".into(),
            FunctionalKind::EndpointCosine => "endpoint_cos_x".into(),
            FunctionalKind::CappedCoordinateMax { axis } => {
                format!("max_coord{}_cap{}", axis, self.cap)
            }
            FunctionalKind::Constant => format!("constant{}", self.cap),
        }
    }

    pub fn evaluate(&self, s: &PathSummary) -> f64 {
        match self.kind {
            FunctionalKind::CappedSupNorm => s.sup_norm.clamp(0.0, self.cap),
            FunctionalKind::EndpointGaussian => (-0.5 * s.endpoint.norm_squared()).exp(),
            FunctionalKind::EndpointCosine => s.endpoint.x.cos(),
            FunctionalKind::CappedCoordinateMax { axis } => {
                s.coord_max[axis].clamp(-self.cap, self.cap)
            }
            FunctionalKind::Constant => self.cap,
        }
    }
}

/// The fixed dictionary of six functionals.
pub fn dictionary() -> Vec<PathFunctional> {
    vec![
        PathFunctional::capped_sup_norm(1.0),
        PathFunctional::capped_sup_norm(2.0),
        PathFunctional::endpoint_gaussian(),
        PathFunctional::endpoint_cosine(),
        PathFunctional::capped_coordinate_max(0, 1.0),
        PathFunctional::capped_coordinate_max(2, 1.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ScatteringEvent;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn summary_of_a_rescaled_zigzag() {
        let mut p = Path::straight(Vec3::x(), 4.0);
        p.events.push(ScatteringEvent {
            time: 2.0,
            position: Vec3::new(2.0, 0.0, 0.0),
            v_pre: Vec3::x(),
            v_post: -Vec3::x(),
            centre: Vec3::new(2.1, 0.0, 0.0),
        });
        let s = PathSummary::of_rescaled(&p);
        assert_relative_eq!(s.sup_norm, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.coord_max[0], 1.0, epsilon = 1e-15);
        assert_eq!(s.coord_max[1], 0.0);
        assert_relative_eq!(s.endpoint, Vec3::zeros(), epsilon = 1e-15);
        let d = dictionary();
        assert_relative_eq!(d[2].evaluate(&s), 1.0, epsilon = 1e-15);
        assert_relative_eq!(d[3].evaluate(&s), 1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn dictionary_is_bounded_by_caps(
            sup in 0.0f64..50.0,
            m in prop::array::uniform3(-20.0f64..20.0),
            e in prop::array::uniform3(-20.0f64..20.0),
        ) {
            let s = PathSummary { sup_norm: sup, coord_max: m, endpoint: Vec3::from(e) };
            for f in dictionary() {
                prop_assert!(f.evaluate(&s).abs() <= f.cap);
            }
        }
    }

    #[test]
    fn names_are_distinct() {
        let names: std::collections::BTreeSet<_> = dictionary().iter().map(|f| f.name()).collect();
        assert_eq!(names.len(), 6);
    }
}

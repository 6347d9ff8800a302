//! Poincaré sections, the successive-maxima return map, periodic orbits and
//! their continuation in `r`.



mod battery;
mod continuation;
mod orbit;
mod section;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{mirror_matrix, Direction, LorenzParams, Plane, State, Trajectory};



pub use battery::{cycle_search_battery, BatteryReport, BatterySettings, FoundOrbit, SearchStats, Seed, SeedSource};
pub use continuation::{continue_orbit, write_branch_csv, Branch, BranchEvent, BranchEventKind, ContinuationSettings};
pub use orbit::{find_periodic_orbit, PeriodicOrbit, Stability};
pub(crate) use section::z_maxima;
pub use section::{
    lorenz_return_map, poincare_crossings, return_map_fixed_point_slope, return_map_thickness, write_return_map_csv,
    Crossings, ReturnMapSample, Thickness,
};

/// A Poincaré section: a plane plus the crossing direction that counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub plane: Plane,
    pub direction: Direction,
}

impl Section {
    /// Downward crossings of `z = r - 1`.
    pub fn equilibrium_plane(p: &LorenzParams) -> Self {
        Self {
            plane: Plane::equilibrium_plane(p),
            direction: Direction::Down,
        }
    }

    /// The same section at another parameter value. Sections anchored at the
    /// equilibrium plane follow `r`.
    pub fn at(&self, from: &LorenzParams, to: &LorenzParams) -> Self {
        let default = Plane::equilibrium_plane(from);
        if self.plane == default {
            Self {
                plane: Plane::equilibrium_plane(to),
                direction: self.direction,
            }
        } else {
            *self
        }
    }

    fn basis(&self) -> (State, State, State) {
        let n = self.plane.normal;
        let n = (1.0 / n.norm()) * n;
        let trial = if n.x.abs() < 0.9 { State::new(1.0, 0.0, 0.0) } else { State::new(0.0, 1.0, 0.0) };
        let e1 = trial - trial.dot(&n) * n;
        let e1 = (1.0 / e1.norm()) * e1;
        let e2 = State::new(n.y * e1.z - n.z * e1.y, n.z * e1.x - n.x * e1.z, n.x * e1.y - n.y * e1.x);
        let origin = (self.plane.offset / self.plane.normal.norm()) * n;
        (origin, e1, e2)
    }

    /// In-plane coordinates of a point.
    pub fn coords(&self, s: &State) -> [f64; 2] {
        let (o, e1, e2) = self.basis();
        let d = *s - o;
        [d.dot(&e1), d.dot(&e2)]
    }

    pub fn point(&self, u: [f64; 2]) -> State {
        let (o, e1, e2) = self.basis();
        o + u[0] * e1 + u[1] * e2
    }

    pub(crate) fn tangent_basis(&self) -> (State, State) {
        let (_, e1, e2) = self.basis();
        (e1, e2)
    }
}

/// Objects with an image under `S(x, y, z) = (-x, -y, z)`.
pub trait Mirror {
    fn mirror(&self) -> Self;
}

impl Mirror for State {
    fn mirror(&self) -> Self {
        State::mirror(*self)
    }
}

impl Mirror for Trajectory {
    fn mirror(&self) -> Self {
        Trajectory::mirror(self)
    }
}

impl Mirror for PeriodicOrbit {
    fn mirror(&self) -> Self {
        let s = mirror_matrix();
        let mut out = self.clone();
        out.anchor = self.anchor.mirror();
        out.section_points = self.section_points.iter().map(|p| p.mirror()).collect();
        out.monodromy = s * self.monodromy * s;
        out.signature = (self.signature.1, self.signature.0);
        out.mean = self.mean.mirror();
        out
    }
}

/// Applies `S` to a state, trajectory or periodic orbit.
pub fn symmetry_image<T: Mirror>(obj: &T) -> T {
    obj.mirror()
}

pub(crate) fn mat_from_cols(a: State, b: State, c: State) -> Matrix3<f64> {
    Matrix3::new(a.x, b.x, c.x, a.y, b.y, c.y, a.z, b.z, c.z)
}

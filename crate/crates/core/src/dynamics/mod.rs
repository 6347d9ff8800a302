//! The Lorenz vector field, its Jacobian and the flow machinery built on it.

pub(crate) mod events;
mod integrator;
mod trajectory;
mod variational;

use std::ops::{Add, Mul, Sub};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use events::{Direction, EventTag, Plane};
pub use integrator::{fixed_step_dopri, ToleranceSpec};
pub(crate) use integrator::{run, StepAction, StepInfo};
pub use trajectory::{fmt17, integrate, integrate_with_events, Event, Trajectory};
pub(crate) use variational::{pack, tangent_field, tangent_flow_to_section, unpack, QrAccumulator, TangentFlow};
pub use variational::{integrate_variational, Variational};

/// Parameters `(sigma, b, r)` of the Lorenz system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub b: f64,
    pub r: f64,
}

impl LorenzParams {
    pub const CANONICAL_SIGMA: f64 = 10.0;
    pub const CANONICAL_B: f64 = 8.0 / 3.0;

    pub fn new(sigma: f64, b: f64, r: f64) -> Result<Self> {
        let p = Self { sigma, b, r };
        p.validate()?;
        Ok(p)
    }

    /// `(10, 8/3, r)`.
    pub fn canonical(r: f64) -> Self {
        Self {
            sigma: Self::CANONICAL_SIGMA,
            b: Self::CANONICAL_B,
            r,
        }
    }

    pub fn with_r(self, r: f64) -> Self {
        Self { r, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Validation(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::Validation(format!("b must be positive, got {}", self.b)));
        }
        if !self.r.is_finite() {
            return Err(Error::Validation(format!("r must be finite, got {}", self.r)));
        }
        Ok(())
    }

    /// Constant divergence of the field, `-(sigma + 1 + b)`.
    pub fn divergence(&self) -> f64 {
        -(self.sigma + 1.0 + self.b)
    }
}

/// A point of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub const ORIGIN: State = State { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &State) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn dist(&self, o: &State) -> f64 {
        (*self - *o).norm()
    }

    /// The symmetry `S(x, y, z) = (-x, -y, z)` of the Lorenz equations.
    pub fn mirror(self) -> Self {
        Self::new(-self.x, -self.y, self.z)
    }

    pub(crate) fn check_finite(self) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::domain(format!("non-finite state {self:?}")))
        }
    }
}

impl Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        State::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<State> for f64 {
    type Output = State;
    fn mul(self, s: State) -> State {
        State::new(self * s.x, self * s.y, self * s.z)
    }
}

/// The vector field on raw arrays.
#[inline]
pub fn field(p: &LorenzParams, s: &[f64; 3]) -> [f64; 3] {
    let [x, y, z] = *s;
    [p.sigma * (y - x), x * (p.r - z) - y, x * y - p.b * z]
}

#[inline]
pub(crate) fn jacobian_array(p: &LorenzParams, s: &[f64; 3]) -> [[f64; 3]; 3] {
    let [x, y, z] = *s;
    [
        [-p.sigma, p.sigma, 0.0],
        [p.r - z, -1.0, -x],
        [y, x, -p.b],
    ]
}

/// `(sigma (y - x), x (r - z) - y, x y - b z)`.
pub fn vector_field(p: &LorenzParams, s: State) -> Result<State> {
    let s = s.check_finite()?;
    Ok(State::from_array(field(p, &s.to_array())))
}

pub fn jacobian(p: &LorenzParams, s: State) -> Result<Matrix3<f64>> {
    let s = s.check_finite()?;
    let j = jacobian_array(p, &s.to_array());
    Ok(Matrix3::from_fn(|i, k| j[i][k]))
}

/// Matrix of the symmetry `S`.
pub fn mirror_matrix() -> Matrix3<f64> {
    Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, -1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn field_examples() {
        let p = LorenzParams::canonical(28.0);
        assert_eq!(vector_field(&p, State::ORIGIN).unwrap(), State::ORIGIN);
        let o1 = State::new(72f64.sqrt(), 72f64.sqrt(), 27.0);
        assert!(vector_field(&p, o1).unwrap().norm() < 1e-12);
        let v = vector_field(&p, State::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(v.x, 10.0);
        assert_eq!(v.y, 23.0);
        assert_relative_eq!(v.z, 2.0 - 8.0, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let p = LorenzParams::canonical(28.0);
        assert!(matches!(
            vector_field(&p, State::new(f64::NAN, 0.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(jacobian(&p, State::new(0.0, f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn jacobian_at_origin() {
        let p = LorenzParams::canonical(28.0);
        let j = jacobian(&p, State::ORIGIN).unwrap();
        let expected = Matrix3::new(-10.0, 10.0, 0.0, 28.0, -1.0, 0.0, 0.0, 0.0, -8.0 / 3.0);
        assert_eq!(j, expected);
        assert_relative_eq!(j.trace(), -41.0 / 3.0, epsilon = 1e-14);
        let mut ev: Vec<f64> = j.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lp = (-11.0 + 1201f64.sqrt()) / 2.0;
        let lm = (-11.0 - 1201f64.sqrt()) / 2.0;
        assert_relative_eq!(ev[0], lm, epsilon = 1e-10);
        assert_relative_eq!(ev[1], -8.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(ev[2], lp, epsilon = 1e-10);
    }

    #[test]
    fn invalid_params() {
        assert!(LorenzParams::new(-1.0, 1.0, 1.0).is_err());
        assert!(LorenzParams::new(1.0, 0.0, 1.0).is_err());
        assert!(LorenzParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn trace_is_state_independent(x in -50.0..50.0f64, y in -50.0..50.0f64, z in -10.0..400.0f64, r in 0.0..400.0f64) {
            let p = LorenzParams::canonical(r);
            let j = jacobian(&p, State::new(x, y, z)).unwrap();
            prop_assert!((j.trace() - p.divergence()).abs() < 1e-12);
        }

        #[test]
        fn field_is_equivariant(x in -50.0..50.0f64, y in -50.0..50.0f64, z in -10.0..400.0f64, r in 0.0..400.0f64) {
            let p = LorenzParams::canonical(r);
            let s = State::new(x, y, z);
            let lhs = vector_field(&p, s.mirror()).unwrap();
            let rhs = vector_field(&p, s).unwrap().mirror();
            prop_assert_eq!(lhs, rhs);
        }
    }
}

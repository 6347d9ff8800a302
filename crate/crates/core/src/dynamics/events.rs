use serde::{Deserialize, Serialize};

use super::integrator::StepInfo;
use super::{field, LorenzParams, State};
use crate::error::{Error, Result};

/// Time accuracy of located crossings.
pub(crate) const EVENT_TIME_TOL: f64 = 1e-12;
/// Crossings whose crossing-function slope is below this are grazing.
pub(crate) const GRAZING_SLOPE: f64 = 1e-12;

/// Plane `normal · s = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: State,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: State, offset: f64) -> Result<Self> {
        if !(normal.is_finite() && offset.is_finite()) || normal.norm() == 0.0 {
            return Err(Error::domain("plane normal must be finite and nonzero"));
        }
        Ok(Self { normal, offset })
    }

    /// `z = level`.
    pub fn horizontal(level: f64) -> Self {
        Self {
            normal: State::new(0.0, 0.0, 1.0),
            offset: level,
        }
    }

    /// The plane `z = r - 1` containing both nontrivial equilibria.
    pub fn equilibrium_plane(p: &LorenzParams) -> Self {
        Self::horizontal(p.r - 1.0)
    }

    pub fn value(&self, s: &State) -> f64 {
        self.normal.dot(s) - self.offset
    }

    /// Rate of change of `value` along the flow.
    pub fn rate(&self, p: &LorenzParams, s: &State) -> f64 {
        self.normal.dot(&State::from_array(field(p, &s.to_array())))
    }

    /// Orthogonal projection of `s` onto the plane.
    pub fn project(&self, s: State) -> State {
        let n2 = self.normal.dot(&self.normal);
        s - (self.value(&s) / n2) * self.normal
    }
}

/// Crossing direction filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Crossing function goes from negative to non-negative.
    Up,
    /// Crossing function goes from positive to non-positive.
    #[default]
    Down,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventTag {
    CrossingUp,
    CrossingDown,
    /// Root found but the crossing is tangential; not a transversal crossing.
    Grazing,
    /// Local maximum of `z`.
    ZMax,
}

impl EventTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventTag::CrossingUp => "crossing-up",
            EventTag::CrossingDown => "crossing-down",
            EventTag::Grazing => "grazing",
            EventTag::ZMax => "zmax",
        }
    }
}

/// A scalar function of the state whose sign changes are tracked.
pub(crate) trait Crossing {
    fn value(&self, s: &State) -> f64;
    fn rate(&self, s: &State) -> f64;
}

pub(crate) struct PlaneCrossing<'a> {
    pub plane: &'a Plane,
    pub params: &'a LorenzParams,
}

impl Crossing for PlaneCrossing<'_> {
    fn value(&self, s: &State) -> f64 {
        self.plane.value(s)
    }
    fn rate(&self, s: &State) -> f64 {
        self.plane.rate(self.params, s)
    }
}

/// `dz/dt = x y - b z`; its downward zeros are the local maxima of `z`.
pub(crate) struct ZVelocity<'a>(pub &'a LorenzParams);

impl Crossing for ZVelocity<'_> {
    fn value(&self, s: &State) -> f64 {
        s.x * s.y - self.0.b * s.z
    }
    fn rate(&self, s: &State) -> f64 {
        let d = field(self.0, &s.to_array());
        d[0] * s.y + s.x * d[1] - self.0.b * d[2]
    }
}

pub(crate) struct Located {
    pub t: f64,
    pub state: State,
    pub tag: EventTag,
}

/// Finds the direction-filtered sign change of `c` inside `step`, if any.
pub(crate) fn locate<const N: usize, C: Crossing>(
    c: &C,
    step: &StepInfo<N>,
    dir: Direction,
) -> Option<Located> {
    let g0 = c.value(&step.state0());
    let g1 = c.value(&step.state1());
    let up = g0 < 0.0 && g1 >= 0.0;
    let down = g0 > 0.0 && g1 <= 0.0;
    let hit = match dir {
        Direction::Up => up,
        Direction::Down => down,
        Direction::Both => up || down,
    };
    if !hit {
        return None;
    }
    let t = if g1 == 0.0 {
        step.t1
    } else {
        find_root(|t| c.value(&step.eval_state(t)), step.t0, step.t1, g0, g1)
    };
    let state = step.eval_state(t);
    let tag = if c.rate(&state).abs() < GRAZING_SLOPE {
        EventTag::Grazing
    } else if up {
        EventTag::CrossingUp
    } else {
        EventTag::CrossingDown
    };
    Some(Located { t, state, tag })
}

/// Illinois-modified regula falsi with a bisection safeguard.
fn find_root(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= EVENT_TIME_TOL {
            break;
        }
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc == 0.0 {
            return c;
        }
        if (gc > 0.0) == (gb > 0.0) {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        }
        // Illinois can stall on one side; fall back to halving the bracket.
        if side != 0 && (b - a).abs() > 1e-3 * EVENT_TIME_TOL {
            let m = 0.5 * (a + b);
            let gm = g(m);
            if gm == 0.0 {
                return m;
            }
            if (gm > 0.0) == (gb > 0.0) {
                b = m;
                gb = gm;
            } else {
                a = m;
                ga = gm;
            }
        }
    }
    if ga.abs() < gb.abs() {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_of_cubic() {
        let g = |t: f64| t * t * t - 2.0;
        let r = find_root(g, 0.0, 2.0, g(0.0), g(2.0));
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn plane_rejects_zero_normal() {
        assert!(Plane::new(State::ORIGIN, 1.0).is_err());
        let pl = Plane::new(State::new(0.0, 0.0, 2.0), 4.0).unwrap();
        let s = pl.project(State::new(1.0, 1.0, 7.0));
        assert!(pl.value(&s).abs() < 1e-15);
        assert_eq!(s.z, 2.0);
    }
}

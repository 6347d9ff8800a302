//! Unstable separatrices of the origin: launch, long-time fate, and the
//! parameter values where that fate changes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    integrate, run, LorenzParams, Plane, State, StepAction, StepInfo, ToleranceSpec, Trajectory,
};
use crate::equilibria::o1_location;
use crate::error::{Error, Result};

/// Distance to an equilibrium that counts as converged.
pub const CONVERGENCE_RADIUS: f64 = 1e-5;
/// How long the orbit must stay inside [`CONVERGENCE_RADIUS`].
pub const CONVERGENCE_HOLD: f64 = 5.0;
/// Return distance to the origin that counts as a homoclinic loop.
pub const HOMOCLINIC_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_OFFSET: f64 = 1e-6;
pub const DEFAULT_FATE_TMAX: f64 = 1000.0;
/// The orbit has left the origin once it is this far away.
const DEPARTURE_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Gamma_1, launched towards `x > 0`.
    #[serde(rename = "+")]
    Plus,
    /// Gamma_2, launched towards `x < 0`.
    #[serde(rename = "-")]
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Plus => "Gamma1",
            Side::Minus => "Gamma2",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" | "1" => Ok(Side::Plus),
            "-" | "minus" | "2" => Ok(Side::Minus),
            _ => Err(Error::Validation(format!("side must be + or -, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    #[serde(rename = "converges-to-O1")]
    ConvergesToO1,
    #[serde(rename = "converges-to-O2")]
    ConvergesToO2,
    NearHomoclinic,
    UndecidedWandering,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConvergesToO1 => "converges-to-O1",
            Verdict::ConvergesToO2 => "converges-to-O2",
            Verdict::NearHomoclinic => "near-homoclinic",
            Verdict::UndecidedWandering => "undecided-wandering",
        }
    }

    pub fn converged(&self) -> bool {
        matches!(self, Verdict::ConvergesToO1 | Verdict::ConvergesToO2)
    }

    /// The verdict with `O1` and `O2` exchanged.
    pub fn mirrored(self) -> Self {
        match self {
            Verdict::ConvergesToO1 => Verdict::ConvergesToO2,
            Verdict::ConvergesToO2 => Verdict::ConvergesToO1,
            v => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixFate {
    pub side: Side,
    pub r: f64,
    pub verdict: Verdict,
    /// Closest approach to the origin on the first return leg (between the
    /// first and second downward crossings of `z = r - 1`).
    pub min_dist_origin: Option<f64>,
    pub decision_time: f64,
    pub t_max: f64,
    /// Local maxima of `z` before the first return leg ends.
    pub zmax_before_return: usize,
}

/// Unit eigenvectors of the origin's positive eigenvalue, `(+, -)`.
pub fn unstable_directions(p: &LorenzParams) -> Result<(State, State)> {
    p.validate()?;
    if p.r <= 1.0 {
        return Err(Error::domain(format!("no unstable direction at the origin for r = {} <= 1", p.r)));
    }
    let s1 = p.sigma + 1.0;
    let lambda = 0.5 * (-s1 + (s1 * s1 - 4.0 * p.sigma * (1.0 - p.r)).sqrt());
    let v = State::new(p.sigma, lambda + p.sigma, 0.0);
    let v = (1.0 / v.norm()) * v;
    Ok((v, v.mirror()))
}

fn launch_point(p: &LorenzParams, side: Side, offset: f64) -> Result<State> {
    if !(1e-8..=1e-4).contains(&offset) {
        return Err(Error::domain(format!("launch offset {offset:e} outside [1e-8, 1e-4]")));
    }
    let (plus, minus) = unstable_directions(p)?;
    Ok(offset * if side == Side::Plus { plus } else { minus })
}

/// A separatrix realized as a trajectory from a small offset along `W^u`.
#[derive(Debug, Clone)]
pub struct Separatrix {
    pub side: Side,
    pub offset: f64,
    pub trajectory: Trajectory,
}

pub fn launch_separatrix(p: &LorenzParams, side: Side, offset: f64, tol: &ToleranceSpec) -> Result<Separatrix> {
    let s0 = launch_point(p, side, offset)?;
    Ok(Separatrix {
        side,
        offset,
        trajectory: integrate(p, s0, tol)?,
    })
}

struct FateTracker {
    targets: Option<[State; 2]>,
    plane: Plane,
    departed: bool,
    down_crossings: usize,
    return_min: f64,
    return_leg_end: Option<f64>,
    zmax: usize,
    inside: Option<(usize, f64)>,
    b: f64,
}

impl FateTracker {
    fn new(p: &LorenzParams) -> Self {
        let targets = o1_location(p).map(|o1| [o1, o1.mirror()]);
        Self {
            targets,
            plane: Plane::equilibrium_plane(p),
            departed: false,
            down_crossings: 0,
            return_min: f64::INFINITY,
            return_leg_end: None,
            zmax: 0,
            inside: None,
            b: p.b,
        }
    }

    /// Returns the verdict once one is reached.
    fn observe(&mut self, step: &StepInfo<3>) -> Option<(Verdict, f64)> {
        let s1 = step.state1();
        if !self.departed && s1.norm() >= DEPARTURE_RADIUS {
            self.departed = true;
        }
        let zv = |s: &State| s.x * s.y - self.b * s.z;
        if self.return_leg_end.is_none() && zv(&step.state0()) > 0.0 && zv(&s1) <= 0.0 {
            self.zmax += 1;
        }
        let g0 = self.plane.value(&step.state0());
        let g1 = self.plane.value(&s1);
        let crossed_down = g0 > 0.0 && g1 <= 0.0;
        if self.down_crossings == 1 && self.return_leg_end.is_none() {
            for i in 0..=8 {
                let t = step.t0 + step.h() * i as f64 / 8.0;
                self.return_min = self.return_min.min(step.eval_state(t).norm());
            }
        }
        if crossed_down && self.departed {
            self.down_crossings += 1;
            if self.down_crossings == 2 {
                self.return_leg_end = Some(step.t1);
                if self.return_min < HOMOCLINIC_THRESHOLD {
                    return Some((Verdict::NearHomoclinic, step.t1));
                }
            }
        }
        let targets = self.targets?;
        let near = targets.iter().position(|o| s1.dist(o) < CONVERGENCE_RADIUS);
        match (near, self.inside) {
            (Some(i), Some((j, since))) if i == j => {
                if step.t1 - since >= CONVERGENCE_HOLD {
                    let v = if i == 0 { Verdict::ConvergesToO1 } else { Verdict::ConvergesToO2 };
                    return Some((v, step.t1));
                }
            }
            (Some(i), _) => self.inside = Some((i, step.t1)),
            (None, _) => self.inside = None,
        }
        None
    }
}

/// Integrates the separatrix until its fate is decided or `t_max` elapses.
pub fn classify_separatrix_fate(
    p: &LorenzParams,
    side: Side,
    tol: &ToleranceSpec,
    t_max: f64,
) -> Result<SeparatrixFate> {
    classify_separatrix_fate_with_offset(p, side, DEFAULT_OFFSET, tol, t_max)
}

pub fn classify_separatrix_fate_with_offset(
    p: &LorenzParams,
    side: Side,
    offset: f64,
    tol: &ToleranceSpec,
    t_max: f64,
) -> Result<SeparatrixFate> {
    tol.validate()?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Validation(format!("t_max must be positive, got {t_max}")));
    }
    let s0 = launch_point(p, side, offset)?;
    let mut tracker = FateTracker::new(p);
    let mut decided = None;
    let f = |y: &[f64; 3]| crate::dynamics::field(p, y);
    run(&f, s0.to_array(), 0.0, t_max, tol, None, |step| match tracker.observe(step) {
        Some(d) => {
            decided = Some(d);
            StepAction::Stop
        }
        None => StepAction::Continue,
    })?;
    let (verdict, decision_time) = decided.unwrap_or((Verdict::UndecidedWandering, t_max));
    Ok(SeparatrixFate {
        side,
        r: p.r,
        verdict,
        min_dist_origin: tracker.return_min.is_finite().then_some(tracker.return_min),
        decision_time,
        t_max,
        zmax_before_return: tracker.zmax,
    })
}

/// Bisection result with the sequence of brackets visited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    pub estimate: f64,
    pub bracket_history: Vec<(f64, f64)>,
}

/// Sign of `x` at the second downward crossing of `z = r - 1` by `Gamma_1`.
///
/// The first downward crossing is the descent of the first loop and stays on
/// the launch side; whether the separatrix falls back to `x > 0` or passes to
/// `x < 0` after its first return shows up at the second.
pub fn homoclinic_side(p: &LorenzParams, tol: &ToleranceSpec) -> Result<f64> {
    let s0 = launch_point(p, Side::Plus, DEFAULT_OFFSET)?;
    let plane = Plane::equilibrium_plane(p);
    let f = |y: &[f64; 3]| crate::dynamics::field(p, y);
    let mut crossings = 0;
    let mut sign = None;
    let horizon = tol.t_max.min(200.0);
    run(&f, s0.to_array(), 0.0, horizon, tol, None, |step| {
        let g0 = plane.value(&step.state0());
        let g1 = plane.value(&step.state1());
        if g0 > 0.0 && g1 <= 0.0 {
            crossings += 1;
            if crossings == 2 {
                sign = Some(step.state1().x.signum());
                return StepAction::Stop;
            }
        }
        StepAction::Continue
    })?;
    sign.ok_or_else(|| {
        Error::geometry(format!(
            "separatrix made {crossings} downward crossings of z = r - 1 within t = {horizon}"
        ))
    })
}

/// Bisection for the homoclinic butterfly value `r1` to `|dr| < 1e-4`.
pub fn find_homoclinic_r(template: &LorenzParams, bracket: (f64, f64), tol: &ToleranceSpec) -> Result<BisectionResult> {
    bisect_sign(bracket, 1e-4, |r| homoclinic_side(&template.with_r(r), tol))
}

fn bisect_sign(bracket: (f64, f64), width: f64, f: impl Fn(f64) -> Result<f64>) -> Result<BisectionResult> {
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let s_lo = f(lo)?;
    let s_hi = f(hi)?;
    if s_lo == s_hi {
        return Err(Error::Bracket(format!("observable has the same sign ({s_lo}) at r = {lo} and r = {hi}")));
    }
    let mut history = vec![(lo, hi)];
    while hi - lo >= width {
        let mid = 0.5 * (lo + hi);
        if f(mid)? == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        history.push((lo, hi));
    }
    Ok(BisectionResult {
        estimate: 0.5 * (lo + hi),
        bracket_history: history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FateTransition {
    /// `None` when the fate is not monotone across the bracket.
    pub estimate: Option<f64>,
    pub bracket_history: Vec<(f64, f64)>,
    pub t_max: f64,
    pub monotone: bool,
    /// Coarse fate profile used for the monotonicity check.
    pub profile: Vec<SeparatrixFate>,
}

/// Number of grid points in the monotonicity check of a fate transition.
const TRANSITION_PROFILE_POINTS: usize = 11;

/// Bisection on "`Gamma_1` converges" versus "`Gamma_1` still wanders at
/// `t_max`" to `|dr| < 1e-3`.
pub fn find_fate_transition_r(
    template: &LorenzParams,
    bracket: (f64, f64),
    t_max: f64,
    tol: &ToleranceSpec,
) -> Result<FateTransition> {
    let (lo, hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let wandering = |r: f64| -> Result<bool> {
        let fate = classify_separatrix_fate(&template.with_r(r), Side::Plus, tol, t_max)?;
        Ok(fate.verdict == Verdict::UndecidedWandering)
    };
    let (w_lo, w_hi) = (wandering(lo)?, wandering(hi)?);
    if w_lo == w_hi {
        return Err(Error::Bracket(format!(
            "separatrix fate is {} at both r = {lo} and r = {hi}",
            if w_lo { "wandering" } else { "convergent" }
        )));
    }
    let grid: Vec<f64> = (0..TRANSITION_PROFILE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (TRANSITION_PROFILE_POINTS - 1) as f64)
        .collect();
    let profile = fate_profile(template, &grid, Side::Plus, t_max, tol)?;
    let switches = profile
        .windows(2)
        .filter(|w| (w[0].verdict == Verdict::UndecidedWandering) != (w[1].verdict == Verdict::UndecidedWandering))
        .count();

    let mut a = lo;
    let mut b = hi;
    let mut history = vec![(a, b)];
    while b - a >= 1e-3 {
        let mid = 0.5 * (a + b);
        if wandering(mid)? == w_lo {
            a = mid;
        } else {
            b = mid;
        }
        history.push((a, b));
    }
    let monotone = switches == 1;
    Ok(FateTransition {
        estimate: monotone.then_some(0.5 * (a + b)),
        bracket_history: history,
        t_max,
        monotone,
        profile,
    })
}

/// Fate of one separatrix on a grid of `r`, evaluated independently per point.
pub fn fate_profile(
    template: &LorenzParams,
    grid: &[f64],
    side: Side,
    t_max: f64,
    tol: &ToleranceSpec,
) -> Result<Vec<SeparatrixFate>> {
    grid.par_iter()
        .map(|&r| classify_separatrix_fate(&template.with_r(r), side, tol, t_max))
        .collect()
}

/// CSV `r,verdict,decision_time,min_dist_origin`.
pub fn write_fate_profile_csv<W: std::io::Write>(rows: &[SeparatrixFate], mut w: W) -> std::io::Result<usize> {
    use crate::dynamics::fmt17;
    writeln!(w, "r,verdict,decision_time,min_dist_origin")?;
    for f in rows {
        let d = f.min_dist_origin.map(fmt17).unwrap_or_else(|| "nan".into());
        writeln!(w, "{},{},{},{}", fmt17(f.r), f.verdict.as_str(), fmt17(f.decision_time), d)?;
    }
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> ToleranceSpec {
        ToleranceSpec::default()
    }

    #[test]
    fn directions_at_28() {
        let p = LorenzParams::canonical(28.0);
        let (plus, minus) = unstable_directions(&p).unwrap();
        assert_eq!(plus.z, 0.0);
        assert_eq!(minus, plus.mirror());
        let lambda = (-11.0 + 1201f64.sqrt()) / 2.0;
        assert!((plus.y / plus.x - (lambda + 10.0) / 10.0).abs() < 1e-14);
        assert!((plus.norm() - 1.0).abs() < 1e-15);
        assert!(unstable_directions(&LorenzParams::canonical(1.0)).is_err());
    }

    #[test]
    fn launch_offset_range() {
        let p = LorenzParams::canonical(10.0);
        let t = tol().with_t_max(1.0);
        assert!(launch_separatrix(&p, Side::Plus, 1e-3, &t).is_err());
        assert!(launch_separatrix(&p, Side::Plus, 1e-9, &t).is_err());
    }

    #[test]
    fn launched_separatrices_settle_and_mirror() {
        let p = LorenzParams::canonical(10.0);
        let t = tol().with_t_max(100.0);
        let g1 = launch_separatrix(&p, Side::Plus, DEFAULT_OFFSET, &t).unwrap();
        let o1 = o1_location(&p).unwrap();
        assert!(g1.trajectory.last().dist(&o1) < 1e-5);
        let g2 = launch_separatrix(&p, Side::Minus, DEFAULT_OFFSET, &t).unwrap();
        let m = g1.trajectory.mirror();
        for (a, b) in m.samples.iter().zip(&g2.trajectory.samples) {
            assert!(a.1.dist(&b.1) < 1e-7);
        }

        let p = LorenzParams::canonical(20.0);
        let g1 = launch_separatrix(&p, Side::Plus, DEFAULT_OFFSET, &t).unwrap();
        assert!(g1.trajectory.last().dist(&o1_location(&p).unwrap().mirror()) < 1e-5);
    }

    #[test]
    fn fates_at_reference_values() {
        let cases = [
            (10.0, Verdict::ConvergesToO1),
            (20.0, Verdict::ConvergesToO2),
            (28.0, Verdict::UndecidedWandering),
        ];
        for (r, expected) in cases {
            let p = LorenzParams::canonical(r);
            let plus = classify_separatrix_fate(&p, Side::Plus, &tol(), DEFAULT_FATE_TMAX).unwrap();
            assert_eq!(plus.verdict, expected, "r = {r}");
            let minus = classify_separatrix_fate(&p, Side::Minus, &tol(), DEFAULT_FATE_TMAX).unwrap();
            assert_eq!(minus.verdict, expected.mirrored(), "r = {r}");
        }
    }

    #[test]
    fn homoclinic_bracket_error() {
        let p = LorenzParams::canonical(20.0);
        assert!(matches!(find_homoclinic_r(&p, (20.0, 22.0), &tol()), Err(Error::Bracket(_))));
    }

    #[test]
    fn fate_bracket_error() {
        let p = LorenzParams::canonical(10.0);
        assert!(matches!(
            find_fate_transition_r(&p, (10.0, 12.0), 200.0, &tol()),
            Err(Error::Bracket(_))
        ));
    }
}

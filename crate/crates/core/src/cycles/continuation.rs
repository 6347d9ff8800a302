//! Natural-parameter continuation of periodic orbits in `r`.
//!
//! Bifurcations are detected from sign changes of the section map's
//! characteristic polynomial: `chi(1)` for a real multiplier through `+1`,
//! `chi(-1)` for one through `-1`, and `det - 1` over a complex pair for a
//! pair leaving the unit circle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::orbit::{find_periodic_orbit, PeriodicOrbit};
use crate::dynamics::{fmt17, ToleranceSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchEventKind {
    /// Real multiplier through `-1`.
    PeriodDoubling,
    /// Real multiplier through `+1` on a symmetric orbit.
    SymmetryBreaking,
    /// Real multiplier through `+1` on an asymmetric orbit.
    Fold,
    /// Complex pair through the unit circle.
    TorusHopf,
    /// Newton failed even at the minimum step.
    BranchEnd,
}

impl BranchEventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchEventKind::PeriodDoubling => "period-doubling",
            BranchEventKind::SymmetryBreaking => "symmetry-breaking",
            BranchEventKind::Fold => "fold",
            BranchEventKind::TorusHopf => "torus-hopf",
            BranchEventKind::BranchEnd => "branch-end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub kind: BranchEventKind,
    /// Located parameter value.
    pub r: f64,
    /// Final bisection bracket.
    pub bracket: (f64, f64),
    /// Nontrivial multiplier closest to the critical value at the located point.
    pub multiplier: Complex64,
    /// Index of the first branch point past the event.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSettings {
    pub step: f64,
    pub min_step: f64,
    /// Bisection stops when the critical multiplier is this close to its
    /// critical value.
    pub multiplier_tol: f64,
    /// ...or when the bracket is this narrow.
    pub min_bracket: f64,
    /// Largest accepted relative period change between neighbours.
    pub max_period_jump: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            step: 0.5,
            min_step: 1e-4,
            multiplier_tol: 1e-3,
            min_bracket: 1e-7,
            max_period_jump: 0.25,
        }
    }
}

impl ContinuationSettings {
    pub fn with_step(self, step: f64) -> Self {
        Self { step, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<PeriodicOrbit>,
    pub events: Vec<BranchEvent>,
    pub reached_target: bool,
}

impl Branch {
    pub fn events_of(&self, kind: BranchEventKind) -> impl Iterator<Item = &BranchEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

fn step_to(prev: &PeriodicOrbit, r: f64, tol: &ToleranceSpec) -> Result<PeriodicOrbit> {
    let p = prev.params.with_r(r);
    let section = prev.section.at(&prev.params, &p);
    let guess = section.point(prev.section.coords(&prev.anchor));
    find_periodic_orbit(&p, guess, prev.returns, &section, tol)
}

fn consistent(prev: &PeriodicOrbit, next: &PeriodicOrbit, s: &ContinuationSettings) -> bool {
    next.returns == prev.returns
        && next.signature == prev.signature
        && (next.period - prev.period).abs() <= s.max_period_jump * prev.period
}

/// Continues `orbit` in `r` towards `r_target`.
pub fn continue_orbit(
    orbit: &PeriodicOrbit,
    r_target: f64,
    settings: &ContinuationSettings,
    tol: &ToleranceSpec,
) -> Result<Branch> {
    if !(settings.step > 0.0 && settings.step <= 0.5) {
        return Err(Error::Validation(format!("continuation step must lie in (0, 0.5], got {}", settings.step)));
    }
    if !r_target.is_finite() {
        return Err(Error::Validation("r target must be finite".into()));
    }
    let dir = (r_target - orbit.params.r).signum();
    let mut h = settings.step;
    let mut points = vec![orbit.clone()];
    let mut events = Vec::new();
    let mut reached_target = (r_target - orbit.params.r).abs() < 1e-12;

    while !reached_target {
        let cur = points.last().expect("non-empty");
        let r = cur.params.r;
        let remaining = (r_target - r).abs();
        let landing = remaining <= h;
        let r_next = if landing { r_target } else { r + dir * h };
        match step_to(cur, r_next, tol) {
            Ok(next) if consistent(cur, &next, settings) => {
                let index = points.len();
                events.extend(detect(cur, &next, index, settings, tol));
                points.push(next);
                reached_target = landing;
                h = (2.0 * h).min(settings.step);
            }
            _ => {
                h *= 0.5;
                if h < settings.min_step {
                    let cur = points.last().expect("non-empty");
                    events.push(BranchEvent {
                        kind: BranchEventKind::BranchEnd,
                        r: cur.params.r,
                        bracket: (cur.params.r, cur.params.r + dir * 2.0 * h),
                        multiplier: cur.multipliers[1],
                        index: points.len(),
                    });
                    break;
                }
            }
        }
    }
    Ok(Branch {
        points,
        events,
        reached_target,
    })
}

#[derive(Clone, Copy)]
enum Test {
    PlusOne,
    MinusOne,
    Torus,
}

impl Test {
    fn value(&self, o: &PeriodicOrbit) -> f64 {
        let (chi_plus, chi_minus, det) = o.test_functions();
        match self {
            Test::PlusOne => chi_plus,
            Test::MinusOne => chi_minus,
            Test::Torus => det - 1.0,
        }
    }

    fn applies(&self, o: &PeriodicOrbit) -> bool {
        match self {
            Test::Torus => o.multipliers[1].im != 0.0,
            _ => true,
        }
    }

    fn critical(&self, o: &PeriodicOrbit) -> (Complex64, f64) {
        let target = match self {
            Test::PlusOne => Complex64::new(1.0, 0.0),
            Test::MinusOne => Complex64::new(-1.0, 0.0),
            Test::Torus => Complex64::new(0.0, 0.0),
        };
        let dist = |m: &Complex64| match self {
            Test::Torus => (m.norm() - 1.0).abs(),
            _ => (m - target).norm(),
        };
        let m = o
            .nontrivial()
            .into_iter()
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            .expect("two multipliers");
        (m, dist(&m))
    }
}

fn detect(
    a: &PeriodicOrbit,
    b: &PeriodicOrbit,
    index: usize,
    settings: &ContinuationSettings,
    tol: &ToleranceSpec,
) -> Vec<BranchEvent> {
    let mut out = Vec::new();
    for test in [Test::PlusOne, Test::MinusOne, Test::Torus] {
        if !(test.applies(a) && test.applies(b)) {
            continue;
        }
        if test.value(a).signum() == test.value(b).signum() {
            continue;
        }
        let (r, bracket, multiplier) = locate(a, b, test, settings, tol);
        let kind = match test {
            Test::PlusOne if a.symmetric => BranchEventKind::SymmetryBreaking,
            Test::PlusOne => BranchEventKind::Fold,
            Test::MinusOne => BranchEventKind::PeriodDoubling,
            Test::Torus => BranchEventKind::TorusHopf,
        };
        out.push(BranchEvent {
            kind,
            r,
            bracket,
            multiplier,
            index,
        });
    }
    out
}

/// Bisection in `r` on a test function, re-solving the orbit at each midpoint.
fn locate(
    a: &PeriodicOrbit,
    b: &PeriodicOrbit,
    test: Test,
    settings: &ContinuationSettings,
    tol: &ToleranceSpec,
) -> (f64, (f64, f64), Complex64) {
    let mut lo = a.clone();
    let mut hi = b.clone();
    let mut best = if test.critical(a).1 <= test.critical(b).1 { a.clone() } else { b.clone() };
    for _ in 0..60 {
        if test.critical(&best).1 < settings.multiplier_tol
            || (hi.params.r - lo.params.r).abs() < settings.min_bracket
        {
            break;
        }
        let mid_r = 0.5 * (lo.params.r + hi.params.r);
        let Ok(mid) = step_to(&lo, mid_r, tol) else { break };
        if !consistent(&lo, &mid, settings) || !test.applies(&mid) {
            break;
        }
        if test.value(&mid).signum() == test.value(&lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        best = if test.critical(&lo).1 <= test.critical(&hi).1 { lo.clone() } else { hi.clone() };
    }
    let (fa, fb) = (test.value(&lo), test.value(&hi));
    let (ra, rb) = (lo.params.r, hi.params.r);
    let r = if fa != fb { ra + (rb - ra) * fa / (fa - fb) } else { 0.5 * (ra + rb) };
    (r, (ra.min(rb), ra.max(rb)), test.critical(&best).0)
}

/// CSV `r,period,amplitude,mu1_re,mu1_im,mu2_re,mu2_im,event`; the event
/// column marks the first point past each detected event.
pub fn write_branch_csv<W: std::io::Write>(branch: &Branch, mut w: W) -> std::io::Result<usize> {
    writeln!(w, "r,period,amplitude,mu1_re,mu1_im,mu2_re,mu2_im,event")?;
    for (i, o) in branch.points.iter().enumerate() {
        let tags: Vec<&str> = branch
            .events
            .iter()
            .filter(|e| e.index == i && e.kind != BranchEventKind::BranchEnd)
            .map(|e| e.kind.as_str())
            .collect();
        let [m1, m2] = o.nontrivial();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt17(o.params.r),
            fmt17(o.period),
            fmt17(o.amplitude),
            fmt17(m1.re),
            fmt17(m1.im),
            fmt17(m2.re),
            fmt17(m2.im),
            tags.join(";")
        )?;
    }
    Ok(branch.points.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{Section, Stability};
    use crate::dynamics::{LorenzParams, State};

    fn l1(r: f64) -> PeriodicOrbit {
        let p = LorenzParams::canonical(r);
        let guess = State::new(6.89, 6.07, r - 1.0);
        find_periodic_orbit(&p, guess, 1, &Section::equilibrium_plane(&p), &ToleranceSpec::default()).unwrap()
    }

    #[test]
    fn saddle_cycle_shrinks_towards_hopf() {
        let start = l1(24.5);
        let branch = continue_orbit(
            &start,
            24.7,
            &ContinuationSettings::default().with_step(0.05),
            &ToleranceSpec::default(),
        )
        .unwrap();
        assert!(branch.reached_target);
        assert!(branch.points.len() >= 5);
        assert!(branch.points.windows(2).all(|w| w[1].amplitude < w[0].amplitude));
        assert!(branch.points.iter().all(|o| o.stability == Stability::Saddle));
        assert!(branch.events.is_empty());
    }

    #[test]
    fn step_must_be_bounded() {
        let start = l1(24.5);
        for step in [0.0, -0.1, 0.6] {
            let s = ContinuationSettings::default().with_step(step);
            assert!(matches!(
                continue_orbit(&start, 24.6, &s, &ToleranceSpec::default()),
                Err(Error::Validation(_))
            ));
        }
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let start = l1(24.5);
        let branch = continue_orbit(&start, 24.6, &ContinuationSettings::default().with_step(0.05), &ToleranceSpec::default()).unwrap();
        let mut buf = Vec::new();
        let rows = write_branch_csv(&branch, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(rows, branch.points.len());
        assert_eq!(text.lines().count(), rows + 1);
        assert!(text.starts_with("r,period,amplitude,mu1_re,mu1_im,mu2_re,mu2_im,event\n"));
    }
}

use std::io::Write;

use super::events::{locate, Direction, EventTag, Plane, PlaneCrossing};
use super::integrator::{run, StepAction, StepInfo, ToleranceSpec};
use super::{field, LorenzParams, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub state: State,
    pub tag: EventTag,
}

/// Time-stamped solution with dense output between samples.
#[derive(Clone)]
pub struct Trajectory {
    pub params: LorenzParams,
    pub samples: Vec<(f64, State)>,
    pub events: Vec<Event>,
    pub accepted: usize,
    pub rejected: usize,
    segments: Vec<StepInfo<3>>,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("params", &self.params)
            .field("samples", &self.samples.len())
            .field("events", &self.events.len())
            .field("accepted", &self.accepted)
            .field("rejected", &self.rejected)
            .finish()
    }
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map(|s| s.0).unwrap_or(0.0)
    }

    pub fn last(&self) -> State {
        self.samples.last().map(|s| s.1).unwrap_or_default()
    }

    /// Dense output at any `t` inside the integrated interval.
    pub fn eval(&self, t: f64) -> Option<State> {
        if t < self.t_start() || t > self.t_end() {
            return None;
        }
        if self.segments.is_empty() {
            return Some(self.samples[0].1);
        }
        let i = self.segments.partition_point(|s| s.t1 < t).min(self.segments.len() - 1);
        Some(self.segments[i].eval_state(t))
    }

    /// Pointwise image under `S(x, y, z) = (-x, -y, z)`.
    pub fn mirror(&self) -> Trajectory {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.1 = s.1.mirror();
        }
        for e in &mut out.events {
            e.state = e.state.mirror();
        }
        for seg in &mut out.segments {
            seg.mirror_in_place();
        }
        out
    }

    /// CSV with header `t,x,y,z`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<usize> {
        writeln!(w, "t,x,y,z")?;
        for (t, s) in &self.samples {
            writeln!(w, "{},{},{},{}", fmt17(*t), fmt17(s.x), fmt17(s.y), fmt17(s.z))?;
        }
        Ok(self.samples.len())
    }

    /// CSV with header `t,x,y,z,tag`.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> std::io::Result<usize> {
        writeln!(w, "t,x,y,z,tag")?;
        for e in &self.events {
            let s = e.state;
            writeln!(w, "{},{},{},{},{}", fmt17(e.t), fmt17(s.x), fmt17(s.y), fmt17(s.z), e.tag.as_str())?;
        }
        Ok(self.events.len())
    }
}

/// Formats with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

fn integrate_impl(
    p: &LorenzParams,
    s0: State,
    tol: &ToleranceSpec,
    section: Option<(&Plane, Direction)>,
) -> Result<Trajectory> {
    p.validate()?;
    tol.validate()?;
    let s0 = s0.check_finite()?;
    let f = |y: &[f64; 3]| field(p, y);
    let mut samples = vec![(0.0, s0)];
    let mut segments = Vec::new();
    let mut events = Vec::new();
    let flow = run(&f, s0.to_array(), 0.0, tol.t_max, tol, None, |step| {
        if let Some((plane, dir)) = section {
            let c = PlaneCrossing { plane, params: p };
            if let Some(hit) = locate(&c, step, dir) {
                let state = if hit.tag == EventTag::Grazing {
                    hit.state
                } else {
                    State::from_array(step.restep(&f, hit.t))
                };
                events.push(Event {
                    t: hit.t,
                    state,
                    tag: hit.tag,
                });
            }
        }
        samples.push((step.t1, step.state1()));
        segments.push(step.clone());
        StepAction::Continue
    })?;
    Ok(Trajectory {
        params: *p,
        samples,
        events,
        accepted: flow.accepted,
        rejected: flow.rejected,
        segments,
    })
}

/// Adaptive integration of the Lorenz flow from `s0` over `[0, tol.t_max]`.
pub fn integrate(p: &LorenzParams, s0: State, tol: &ToleranceSpec) -> Result<Trajectory> {
    integrate_impl(p, s0, tol, None)
}

/// Like [`integrate`], recording every direction-filtered crossing of `plane`.
pub fn integrate_with_events(
    p: &LorenzParams,
    s0: State,
    tol: &ToleranceSpec,
    plane: &Plane,
    direction: Direction,
) -> Result<Trajectory> {
    if plane.normal.norm() == 0.0 {
        return Err(Error::domain("plane normal must be nonzero"));
    }
    integrate_impl(p, s0, tol, Some((plane, direction)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical_tol(t_max: f64) -> ToleranceSpec {
        ToleranceSpec::default().with_t_max(t_max)
    }

    #[test]
    fn equilibrium_stays_put() {
        let p = LorenzParams::canonical(28.0);
        let o1 = State::new(72f64.sqrt(), 72f64.sqrt(), 27.0);
        let tr = integrate(&p, o1, &canonical_tol(10.0)).unwrap();
        assert!(tr.samples.iter().all(|(_, s)| s.dist(&o1) < 1e-8));
    }

    #[test]
    fn self_convergence_against_tight_reference() {
        let p = LorenzParams::canonical(28.0);
        let s0 = State::new(1.0, 1.0, 1.0);
        let a = integrate(&p, s0, &canonical_tol(1.0)).unwrap().last();
        let b = integrate(&p, s0, &canonical_tol(1.0).with_tol(1e-13)).unwrap().last();
        assert!(a.dist(&b) < 1e-7, "{}", a.dist(&b));
    }

    #[test]
    fn dense_output_reproduces_samples() {
        let p = LorenzParams::canonical(28.0);
        let tr = integrate(&p, State::new(1.0, 1.0, 1.0), &canonical_tol(5.0)).unwrap();
        for (t, s) in tr.samples.iter().skip(1) {
            assert!(tr.eval(*t).unwrap().dist(s) < 1e-12);
        }
        assert!(tr.eval(6.0).is_none());
    }

    #[test]
    fn initial_touch_excluded_by_direction_filter() {
        let p = LorenzParams::canonical(28.0);
        // on z = 27 with dz/dt = x y - b z > 0
        let s0 = State::new(10.0, 10.0, 27.0);
        let tr = integrate_with_events(&p, s0, &canonical_tol(5.0), &Plane::equilibrium_plane(&p), Direction::Down)
            .unwrap();
        assert!(tr.events[0].t > 0.0);
        assert!(tr.events.iter().all(|e| e.tag == EventTag::CrossingDown));
    }

    #[test]
    fn crossing_counts() {
        let p = LorenzParams::canonical(28.0);
        let tr = integrate_with_events(
            &p,
            State::new(1.0, 1.0, 1.0),
            &canonical_tol(50.0),
            &Plane::horizontal(27.0),
            Direction::Both,
        )
        .unwrap();
        assert!(tr.events.len() > 20, "{}", tr.events.len());
        for e in &tr.events {
            assert!((e.state.z - 27.0).abs() < 1e-8);
        }

        let p = LorenzParams::canonical(0.5);
        let tr = integrate_with_events(
            &p,
            State::new(1.0, 1.0, 1.0),
            &canonical_tol(50.0),
            &Plane::horizontal(10.0),
            Direction::Both,
        )
        .unwrap();
        assert!(tr.events.is_empty());
    }

    #[test]
    fn csv_has_full_precision() {
        let p = LorenzParams::canonical(28.0);
        let tr = integrate(&p, State::new(1.0, 1.0, 1.0), &canonical_tol(0.5)).unwrap();
        let mut buf = Vec::new();
        let rows = tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,y,z"));
        assert_eq!(rows, tr.samples.len());
        let row: Vec<f64> = lines.nth(3).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row[1], tr.samples[3].1.x);
    }
}

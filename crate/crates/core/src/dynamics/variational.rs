//! Tangent flow `M' = J(s(t)) M`, `M(0) = I`.
//!
//! The tangent columns are re-orthonormalized after every accepted step and
//! the triangular factors are accumulated separately. The determinant is then
//! the product of the factor diagonals, which stays accurate long after the
//! explicitly formed monodromy matrix has become numerically rank deficient.

use nalgebra::Matrix3;

use super::events::{locate, Direction, EventTag, Plane, PlaneCrossing, ZVelocity};
use super::integrator::{run, StepAction, StepInfo, ToleranceSpec};
use super::{field, jacobian_array, LorenzParams, State};
use crate::error::{Error, Result};

/// Endpoint and tangent map of a finite-time flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variational {
    pub state: State,
    pub monodromy: Matrix3<f64>,
    /// `det(monodromy)` from the accumulated triangular factors.
    pub det: f64,
    pub log_abs_det: f64,
}

pub(crate) fn tangent_field(p: &LorenzParams, y: &[f64; 12]) -> [f64; 12] {
    let s = [y[0], y[1], y[2]];
    let d = field(p, &s);
    let j = jacobian_array(p, &s);
    let mut out = [0.0; 12];
    out[..3].copy_from_slice(&d);
    for c in 0..3 {
        let col = &y[3 + 3 * c..6 + 3 * c];
        for r in 0..3 {
            out[3 + 3 * c + r] = j[r][0] * col[0] + j[r][1] * col[1] + j[r][2] * col[2];
        }
    }
    out
}

pub(crate) fn pack(s: State, m: &Matrix3<f64>) -> [f64; 12] {
    let mut y = [0.0; 12];
    y[..3].copy_from_slice(&s.to_array());
    for c in 0..3 {
        for r in 0..3 {
            y[3 + 3 * c + r] = m[(r, c)];
        }
    }
    y
}

pub(crate) fn unpack(y: &[f64; 12]) -> (State, Matrix3<f64>) {
    (
        State::new(y[0], y[1], y[2]),
        Matrix3::from_fn(|r, c| y[3 + 3 * c + r]),
    )
}

/// Accumulated upper-triangular factors of the tangent map.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QrAccumulator {
    r_total: Matrix3<f64>,
    log_abs_det: f64,
}

impl QrAccumulator {
    pub fn new() -> Self {
        Self {
            r_total: Matrix3::identity(),
            log_abs_det: 0.0,
        }
    }

    /// Modified Gram–Schmidt with one re-orthogonalization pass. Returns the
    /// orthonormal factor and the log of each diagonal entry of `R`.
    pub fn factor(y: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
        let mut q = *y;
        let mut r = Matrix3::zeros();
        for j in 0..3 {
            for _pass in 0..2 {
                for i in 0..j {
                    let proj = q.column(i).dot(&q.column(j));
                    r[(i, j)] += proj;
                    let qi = q.column(i).into_owned();
                    let mut qj = q.column_mut(j);
                    qj -= proj * qi;
                }
            }
            let n = q.column(j).norm();
            r[(j, j)] = n;
            let mut qj = q.column_mut(j);
            qj /= n;
        }
        (q, r)
    }

    /// Orthonormalizes the tangent part of `y` and absorbs the factor.
    /// Returns the logs of the diagonal stretch factors.
    pub fn absorb(&mut self, y: &mut [f64; 12]) -> [f64; 3] {
        let (s, m) = unpack(y);
        let (q, r) = Self::factor(&m);
        self.r_total = r * self.r_total;
        let logs = [r[(0, 0)].ln(), r[(1, 1)].ln(), r[(2, 2)].ln()];
        self.log_abs_det += logs.iter().sum::<f64>();
        *y = pack(s, &q);
        logs
    }

    /// Tangent map for the current (partially evolved) basis `y`.
    pub fn finish(&self, y: &[f64; 12]) -> (State, Matrix3<f64>, f64, f64) {
        let (s, basis) = unpack(y);
        let d = basis.determinant();
        let log_abs_det = d.abs().ln() + self.log_abs_det;
        let det = d.signum() * log_abs_det.exp();
        (s, basis * self.r_total, det, log_abs_det)
    }
}

/// Integrates the state and its tangent map over `[0, t_final]`.
pub fn integrate_variational(
    p: &LorenzParams,
    s0: State,
    t_final: f64,
    tol: &ToleranceSpec,
) -> Result<Variational> {
    p.validate()?;
    tol.validate()?;
    let s0 = s0.check_finite()?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::domain(format!("T must be positive, got {t_final}")));
    }
    let f = |y: &[f64; 12]| tangent_field(p, y);
    let mut acc = QrAccumulator::new();
    let flow = run(&f, pack(s0, &Matrix3::identity()), 0.0, t_final, tol, None, |step| {
        let mut y = step.y1;
        acc.absorb(&mut y);
        StepAction::Replace(y)
    })?;
    // the final replacement already folded the last step into `acc`
    let (state, monodromy, det, log_abs_det) = acc.finish(&flow.y);
    Ok(Variational {
        state,
        monodromy,
        det,
        log_abs_det,
    })
}

/// Tangent flow stopped at the `n`-th direction-filtered crossing of a plane.
#[derive(Debug, Clone)]
pub(crate) struct TangentFlow {
    pub t: f64,
    pub state: State,
    pub monodromy: Matrix3<f64>,
    pub log_abs_det: f64,
    pub det_sign: f64,
    /// All section crossings up to and including the final one.
    pub crossings: Vec<(f64, State)>,
    /// Local maxima of `z` passed before the final crossing.
    pub zmax: Vec<State>,
}

/// Crossings this close to the start are the launch point itself.
const DEPARTURE_TIME: f64 = 1e-6;

pub(crate) fn tangent_flow_to_section(
    p: &LorenzParams,
    s0: State,
    plane: &Plane,
    dir: Direction,
    returns: usize,
    tol: &ToleranceSpec,
) -> Result<TangentFlow> {
    let f = |y: &[f64; 12]| tangent_field(p, y);
    let mut acc = QrAccumulator::new();
    let mut crossings = Vec::with_capacity(returns);
    let mut zmax = Vec::new();
    let mut finish: Option<(f64, [f64; 12])> = None;
    let crossing = PlaneCrossing { plane, params: p };
    let zvel = ZVelocity(p);

    let mut on_step = |step: &StepInfo<12>| {
        let hit = locate(&crossing, step, dir)
            .filter(|h| h.t > DEPARTURE_TIME && h.tag != EventTag::Grazing);
        let t_cut = hit.as_ref().map(|h| h.t).unwrap_or(step.t1);
        if let Some(m) = locate(&zvel, step, Direction::Down) {
            if m.t <= t_cut {
                zmax.push(m.state);
            }
        }
        if let Some(h) = hit {
            let y = step.restep(&f, h.t);
            crossings.push((h.t, State::new(y[0], y[1], y[2])));
            if crossings.len() == returns {
                finish = Some((h.t, y));
                return StepAction::Stop;
            }
        }
        let mut y = step.y1;
        acc.absorb(&mut y);
        StepAction::Replace(y)
    };
    run(&f, pack(s0, &Matrix3::identity()), 0.0, tol.t_max, tol, None, &mut on_step)?;
    let (t, y) = finish.ok_or_else(|| {
        Error::geometry(format!(
            "only {} of {} section returns within t_max={}",
            crossings.len(),
            returns,
            tol.t_max
        ))
    })?;
    let (state, monodromy, det, log_abs_det) = acc.finish(&y);
    Ok(TangentFlow {
        t,
        state,
        monodromy,
        log_abs_det,
        det_sign: det.signum(),
        crossings,
        zmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate;

    #[test]
    fn identity_for_short_times() {
        let p = LorenzParams::canonical(28.0);
        let v = integrate_variational(&p, State::new(1.0, 2.0, 3.0), 1e-9, &ToleranceSpec::default()).unwrap();
        assert!((v.monodromy - Matrix3::identity()).amax() < 1e-7);
    }

    #[test]
    fn liouville_determinant() {
        let p = LorenzParams::canonical(28.0);
        let v = integrate_variational(&p, State::new(1.0, 1.0, 1.0), 1.0, &ToleranceSpec::default()).unwrap();
        let expected = (-41.0f64 / 3.0).exp();
        assert!((v.det / expected - 1.0).abs() < 1e-6, "{} vs {}", v.det, expected);
        assert!((expected - 1.160_491_8e-6).abs() < 1e-12);
    }

    #[test]
    fn long_horizon_liouville_on_chaotic_orbit() {
        let p = LorenzParams::canonical(28.0);
        let v = integrate_variational(&p, State::new(1.0, 1.0, 1.0), 20.0, &ToleranceSpec::default()).unwrap();
        let expected = -41.0 / 3.0 * 20.0;
        assert!(((v.log_abs_det - expected) / expected).abs() < 1e-6);
        assert!((v.log_abs_det - expected).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_columns() {
        let p = LorenzParams::canonical(28.0);
        let tol = ToleranceSpec::default();
        let s0 = State::new(1.0, 1.0, 1.0);
        let v = integrate_variational(&p, s0, 1.0, &tol).unwrap();
        let base = integrate(&p, s0, &tol.with_t_max(1.0)).unwrap().last();
        let h = 1e-6;
        for c in 0..3 {
            let mut d = [0.0; 3];
            d[c] = h;
            let pert = integrate(&p, s0 + State::from_array(d), &tol.with_t_max(1.0)).unwrap().last();
            let fd = (1.0 / h) * (pert - base);
            let col = v.monodromy.column(c);
            let scale = col.norm();
            let diff = ((fd.x - col[0]).powi(2) + (fd.y - col[1]).powi(2) + (fd.z - col[2]).powi(2)).sqrt();
            assert!(diff < 1e-3 * scale.max(1.0), "column {c}: {diff} vs {scale}");
        }
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        let p = LorenzParams::canonical(28.0);
        assert!(integrate_variational(&p, State::ORIGIN, 0.0, &ToleranceSpec::default()).is_err());
    }
}

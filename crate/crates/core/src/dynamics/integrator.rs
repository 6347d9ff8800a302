//! Dormand–Prince 5(4) with Hairer's continuous extension.
//!
//! The engine is generic over the state dimension so the same stepper drives
//! both the 3-dimensional flow and the 12-dimensional tangent flow.

use serde::{Deserialize, Serialize};

use super::State;
use crate::error::{Error, Result};

/// Integration tolerances and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub rel: f64,
    pub abs: f64,
    pub max_step: f64,
    pub t_max: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            rel: 1e-10,
            abs: 1e-10,
            max_step: 0.1,
            t_max: 1000.0,
        }
    }
}

impl ToleranceSpec {
    pub fn with_t_max(self, t_max: f64) -> Self {
        Self { t_max, ..self }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self {
            rel: tol,
            abs: tol,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.rel) || !unit(self.abs) {
            return Err(Error::Validation(format!(
                "tolerances must lie in (0, 1), got rel={} abs={}",
                self.rel, self.abs
            )));
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(Error::Validation(format!("max_step must be positive, got {}", self.max_step)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::Validation(format!("t_max must be positive, got {}", self.t_max)));
        }
        Ok(())
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const MAX_STEPS: usize = 50_000_000;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

pub(crate) struct Stages<const N: usize> {
    pub y1: [f64; N],
    pub k: [[f64; N]; 7],
}

/// One explicit step of size `h` from `y` with `k1 = f(y)`.
pub(crate) fn dopri_step<const N: usize, F>(f: &F, y: &[f64; N], k1: &[f64; N], h: f64) -> Stages<N>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let k2 = f(&axpy(y, h, &[(A21, k1)]));
    let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(&y1);
    Stages {
        y1,
        k: [*k1, k2, k3, k4, k5, k6, k7],
    }
}

/// `steps` fixed steps of the fifth-order Dormand-Prince formula, without
/// error control. Used to measure the convergence order.
pub fn fixed_step_dopri<const N: usize, F>(f: &F, y0: [f64; N], h: f64, steps: usize) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let mut y = y0;
    let mut k1 = f(&y);
    for _ in 0..steps {
        let st = dopri_step(f, &y, &k1, h);
        y = st.y1;
        k1 = st.k[6];
    }
    y
}

/// An accepted step with its continuous extension.
#[derive(Clone)]
pub(crate) struct StepInfo<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub k1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> StepInfo<N> {
    fn new(t0: f64, h: f64, y0: [f64; N], st: &Stages<N>) -> Self {
        let k = &st.k;
        let mut rcont = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = st.y1[i] - y0[i];
            let bspl = h * k[0][i] - ydiff;
            rcont[0][i] = y0[i];
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - h * k[6][i] - bspl;
            rcont[4][i] = h
                * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        Self {
            t0,
            t1: t0 + h,
            y0,
            y1: st.y1,
            k1: k[0],
            rcont,
        }
    }

    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Dense output at `t` in `[t0, t1]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h();
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
        }
        out
    }

    /// Dense output restricted to the first three (phase-space) components.
    pub fn eval_state(&self, t: f64) -> State {
        let y = self.eval(t);
        State::new(y[0], y[1], y[2])
    }

    /// Applies `S` to the leading three components of every stored vector.
    pub(crate) fn mirror_in_place(&mut self) {
        for v in [&mut self.y0, &mut self.y1, &mut self.k1]
            .into_iter()
            .chain(self.rcont.iter_mut())
        {
            v[0] = -v[0];
            v[1] = -v[1];
        }
    }

    pub fn state0(&self) -> State {
        State::new(self.y0[0], self.y0[1], self.y0[2])
    }

    pub fn state1(&self) -> State {
        State::new(self.y1[0], self.y1[1], self.y1[2])
    }

    /// Exact (non-interpolated) integration from `t0` to `t`, one explicit step.
    pub fn restep<F: Fn(&[f64; N]) -> [f64; N]>(&self, f: &F, t: f64) -> [f64; N] {
        dopri_step(f, &self.y0, &self.k1, t - self.t0).y1
    }
}

pub(crate) enum StepAction<const N: usize> {
    Continue,
    Stop,
    /// Replace the current state (e.g. re-orthonormalized tangent vectors).
    Replace([f64; N]),
}

/// Summary of a finished run.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Flow<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub accepted: usize,
    pub rejected: usize,
    pub h: f64,
}

fn error_norm<const N: usize>(y0: &[f64; N], st: &Stages<N>, h: f64, tol: &ToleranceSpec) -> f64 {
    let k = &st.k;
    let mut acc = 0.0;
    for i in 0..N {
        let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
        let sc = tol.abs + tol.rel * y0[i].abs().max(st.y1[i].abs());
        acc += (e / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(f: &F, y0: &[f64; N], f0: &[f64; N], tol: &ToleranceSpec) -> f64
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = tol.abs + tol.rel * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(tol.max_step);
    let y1 = axpy(y0, h, &[(1.0, f0)]);
    let f1 = f(&y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = tol.abs + tol.rel * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(tol.max_step)
}

fn leading_state<const N: usize>(y: &[f64; N]) -> State {
    State::new(y[0], y[1], y[2])
}

/// Integrates `y' = f(y)` from `(t0, y0)` to `t_end`, calling `observe` after
/// every accepted step. The observer may stop the run or replace the state.
pub(crate) fn run<const N: usize, F, O>(
    f: &F,
    y0: [f64; N],
    t0: f64,
    t_end: f64,
    tol: &ToleranceSpec,
    h_init: Option<f64>,
    mut observe: O,
) -> Result<Flow<N>>
where
    F: Fn(&[f64; N]) -> [f64; N],
    O: FnMut(&StepInfo<N>) -> StepAction<N>,
{
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration {
            t: t0,
            state: leading_state(&y0),
            reason: "non-finite initial state".into(),
        });
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(&y);
    let mut h = h_init.unwrap_or_else(|| initial_step(f, &y, &k1, tol));
    let mut fac_old: f64 = 1e-4;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut last_rejected = false;

    for _ in 0..MAX_STEPS {
        if t >= t_end {
            break;
        }
        let remaining = t_end - t;
        let floor = 1e-13 * t.abs().max(1.0);
        if remaining < floor {
            t = t_end;
            break;
        }
        let mut last = false;
        let mut step = h.min(tol.max_step);
        // never leave a sliver shorter than the underflow floor
        if step >= remaining * (1.0 - 1e-12) || remaining - step < 100.0 * floor {
            step = remaining;
            last = true;
        }
        if step < floor {
            return Err(Error::Integration {
                t,
                state: leading_state(&y),
                reason: format!("step size underflow (h={step:e})"),
            });
        }
        let st = dopri_step(f, &y, &k1, step);
        let err = error_norm(&y, &st, step, tol);
        if !err.is_finite() || st.y1.iter().any(|v| !v.is_finite()) {
            rejected += 1;
            last_rejected = true;
            h = step * FAC_MIN;
            continue;
        }
        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = step / fac;
            if last_rejected {
                h_new = h_new.min(step);
            }
            fac_old = err.max(1e-4);
            last_rejected = false;
            accepted += 1;
            let info = StepInfo::new(t, step, y, &st);
            t = if last { t_end } else { t + step };
            y = st.y1;
            k1 = st.k[6];
            if !last {
                h = h_new;
            }
            match observe(&info) {
                StepAction::Continue => {}
                StepAction::Stop => {
                    return Ok(Flow {
                        t,
                        y,
                        accepted,
                        rejected,
                        h: h_new,
                    })
                }
                StepAction::Replace(new_y) => {
                    y = new_y;
                    k1 = f(&y);
                }
            }
        } else {
            rejected += 1;
            last_rejected = true;
            h = step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
    if t < t_end {
        return Err(Error::Integration {
            t,
            state: leading_state(&y),
            reason: "maximum number of steps exceeded".into(),
        });
    }
    Ok(Flow {
        t,
        y,
        accepted,
        rejected,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let f = |y: &[f64; 1]| [-y[0]];
        let tol = ToleranceSpec::default();
        let flow = run(&f, [1.0], 0.0, 5.0, &tol, None, |_| StepAction::Continue).unwrap();
        assert!((flow.y[0] - (-5f64).exp()).abs() < 1e-10);
        assert_eq!(flow.t, 5.0);
    }

    #[test]
    fn dense_output_hits_step_endpoints() {
        let f = |y: &[f64; 2]| [y[1], -y[0]];
        let tol = ToleranceSpec::default();
        let mut worst: f64 = 0.0;
        let mut worst_mid: f64 = 0.0;
        run(&f, [0.0, 1.0], 0.0, 10.0, &tol, None, |s| {
            let a = s.eval(s.t0);
            let b = s.eval(s.t1);
            worst = worst.max((a[0] - s.y0[0]).abs()).max((b[0] - s.y1[0]).abs());
            let tm = 0.5 * (s.t0 + s.t1);
            worst_mid = worst_mid.max((s.eval(tm)[0] - tm.sin()).abs());
            StepAction::Continue
        })
        .unwrap();
        assert!(worst < 1e-12, "{worst}");
        assert!(worst_mid < 1e-8, "{worst_mid}");
    }

    #[test]
    fn blowup_reports_last_good_state() {
        let f = |y: &[f64; 3]| [y[0] * y[0], 0.0, 0.0];
        let tol = ToleranceSpec::default();
        let err = run(&f, [1.0, 0.0, 0.0], 0.0, 2.0, &tol, None, |_| StepAction::Continue).unwrap_err();
        match err {
            Error::Integration { t, state, .. } => {
                assert!(t < 1.0 && t > 0.9);
                assert!(state.is_finite());
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn fifth_order_on_a_linear_problem() {
        let f = |y: &[f64; 2]| [y[1], -y[0]];
        let err = |n: usize| {
            let y = fixed_step_dopri(&f, [0.0, 1.0], 2.0 / n as f64, n);
            (y[0] - 2f64.sin()).abs()
        };
        let order = (err(20) / err(40)).log2();
        assert!((order - 5.0).abs() < 0.3, "{order}");
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceSpec::default().validate().is_ok());
        assert!(ToleranceSpec::default().with_tol(1.5).validate().is_err());
        assert!(ToleranceSpec::default().with_t_max(-1.0).validate().is_err());
    }
}

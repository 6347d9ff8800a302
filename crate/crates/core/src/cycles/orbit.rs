use nalgebra::{Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{mat_from_cols, Section};
use crate::dynamics::{field, integrate, tangent_flow_to_section, LorenzParams, State, TangentFlow, ToleranceSpec};
use crate::equilibria::o1_location;
use crate::error::{Error, Result};

pub const NEWTON_MAX_ITER: usize = 50;
pub const NEWTON_RESIDUAL: f64 = 1e-10;
/// Distance (relative to `1 + |anchor|`) below which two section points coincide.
const SAME_POINT: f64 = 1e-6;
/// Section coordinates beyond this mean Newton has left the attractor region.
const ESCAPE_RADIUS: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Saddle,
    Unstable,
}

/// A converged periodic orbit with its Floquet data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub params: LorenzParams,
    pub section: Section,
    /// Point of the orbit on the section; Newton's unknown.
    pub anchor: State,
    /// Section crossings per period.
    pub returns: usize,
    pub period: f64,
    pub monodromy: Matrix3<f64>,
    /// `[trivial, mu1, mu2]`, the nontrivial pair ordered by decreasing modulus.
    pub multipliers: [Complex64; 3],
    /// `log |det monodromy|` from the accumulated tangent factors.
    pub log_abs_det: f64,
    pub stability: Stability,
    pub symmetric: bool,
    /// Local maxima of `z` per period in `x > 0` and `x < 0`.
    pub signature: (usize, usize),
    /// All section crossings over one period, the last one at the anchor.
    pub section_points: Vec<State>,
    /// Time average of the orbit.
    pub mean: State,
    /// Largest distance of the orbit from the equilibrium nearest to `mean`.
    pub amplitude: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl PeriodicOrbit {
    pub fn trivial_multiplier(&self) -> Complex64 {
        self.multipliers[0]
    }

    pub fn nontrivial(&self) -> [Complex64; 2] {
        [self.multipliers[1], self.multipliers[2]]
    }

    /// Number of nontrivial multipliers outside the unit circle.
    pub fn unstable_dimension(&self) -> usize {
        self.nontrivial().iter().filter(|m| m.norm() > 1.0).count()
    }

    /// Section point used for deduplication: the crossing with the largest `x`.
    pub fn canonical_point(&self) -> State {
        *self
            .section_points
            .iter()
            .max_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)))
            .unwrap_or(&self.anchor)
    }

    /// Distance between the anchor and the flow of the anchor after one period.
    pub fn return_error(&self, tol: &ToleranceSpec) -> Result<f64> {
        let end = integrate(&self.params, self.anchor, &tol.with_t_max(self.period))?.last();
        Ok(end.dist(&self.anchor))
    }

    /// Whether `other` is the same orbit up to the deduplication thresholds.
    pub fn same_as(&self, other: &PeriodicOrbit, tol: f64) -> bool {
        if (self.period - other.period).abs() > tol * self.period {
            return false;
        }
        let a = self.canonical_point();
        other.section_points.iter().any(|q| q.dist(&a) < tol * (1.0 + a.norm()))
    }

    /// Characteristic polynomial of the section map at `1` and `-1` and the
    /// product of the nontrivial multipliers.
    pub(crate) fn test_functions(&self) -> (f64, f64, f64) {
        let [a, b] = self.nontrivial();
        let tr = (a + b).re;
        let det = (a * b).re;
        (1.0 - tr + det, 1.0 + tr + det, det)
    }
}

struct Newton<'a> {
    p: &'a LorenzParams,
    section: &'a Section,
    returns: usize,
    tol: ToleranceSpec,
}

impl Newton<'_> {
    fn flow(&self, u: [f64; 2]) -> Result<TangentFlow> {
        tangent_flow_to_section(
            self.p,
            self.section.point(u),
            &self.section.plane,
            self.section.direction,
            self.returns,
            &self.tol,
        )
    }

    /// Section-map Jacobian in plane coordinates.
    fn section_jacobian(&self, tf: &TangentFlow) -> Matrix2<f64> {
        let n = self.section.plane.normal;
        let f_end = State::from_array(field(self.p, &tf.state.to_array()));
        let nf = n.dot(&f_end);
        let (e1, e2) = self.section.tangent_basis();
        let m = tf.monodromy;
        let nm = [0, 1, 2].map(|c| n.x * m[(0, c)] + n.y * m[(1, c)] + n.z * m[(2, c)]);
        let dp = Matrix3::from_fn(|r, c| {
            let fr = [f_end.x, f_end.y, f_end.z][r];
            m[(r, c)] - fr * nm[c] / nf
        });
        let e = mat_from_cols(e1, e2, State::ORIGIN);
        let proj = e.transpose() * dp * e;
        Matrix2::new(proj[(0, 0)], proj[(0, 1)], proj[(1, 0)], proj[(1, 1)])
    }

    fn residual(&self, u: [f64; 2], tf: &TangentFlow) -> Vector2<f64> {
        let v = self.section.coords(&tf.state);
        Vector2::new(v[0] - u[0], v[1] - u[1])
    }
}

/// Newton iteration on the `returns`-fold section map.
pub fn find_periodic_orbit(
    p: &LorenzParams,
    guess: State,
    returns: usize,
    section: &Section,
    tol: &ToleranceSpec,
) -> Result<PeriodicOrbit> {
    p.validate()?;
    tol.validate()?;
    let guess = guess.check_finite()?;
    if returns == 0 {
        return Err(Error::domain("returns must be at least 1"));
    }
    let newton = Newton {
        p,
        section,
        returns,
        tol: tol.with_t_max(tol.t_max.min(100.0 * returns as f64)),
    };
    let mut u = section.coords(&guess);
    let mut history = Vec::new();
    let mut last: Option<([f64; 2], f64, Vector2<f64>)> = None;
    let mut damping = 1.0;
    for iter in 0..NEWTON_MAX_ITER {
        if u[0].hypot(u[1]) > ESCAPE_RADIUS {
            return Err(Error::geometry(format!("Newton iterate escaped the section region: {u:?}")));
        }
        let tf = newton.flow(u)?;
        let r = newton.residual(u, &tf);
        let res = r.norm();
        history.push(res);
        if res < NEWTON_RESIDUAL {
            return finalize(&newton, u, tf, iter, res, tol);
        }
        if let Some((u_prev, res_prev, step)) = last {
            if res > res_prev && damping > 1.0 / 16.0 {
                damping *= 0.5;
                u = [u_prev[0] + damping * step[0], u_prev[1] + damping * step[1]];
                continue;
            }
        }
        let jac = newton.section_jacobian(&tf) - Matrix2::identity();
        let step = jac
            .lu()
            .solve(&(-r))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(Error::Convergence { residuals: history.clone() })?;
        damping = 1.0;
        last = Some((u, res, step));
        u = [u[0] + step[0], u[1] + step[1]];
    }
    Err(Error::Convergence { residuals: history })
}

fn finalize(
    newton: &Newton,
    u: [f64; 2],
    tf: TangentFlow,
    iterations: usize,
    residual: f64,
    tol: &ToleranceSpec,
) -> Result<PeriodicOrbit> {
    let p = newton.p;
    let anchor = newton.section.point(u);
    let scale = 1.0 + anchor.norm();

    // the same orbit may close after fewer crossings
    for k in 1..newton.returns {
        if newton.returns.is_multiple_of(k) && tf.crossings[k - 1].1.dist(&anchor) < SAME_POINT * scale {
            return find_periodic_orbit(p, anchor, k, newton.section, tol);
        }
    }

    let f0 = State::from_array(field(p, &anchor.to_array()));
    let f_end = State::from_array(field(p, &tf.state.to_array()));
    if f0.norm() < 1e-9 * scale {
        return Err(Error::geometry("Newton converged onto an equilibrium"));
    }
    let n = newton.section.plane.normal;
    let dp = newton.section_jacobian(&tf);
    let det_m = tf.det_sign * tf.log_abs_det.exp();
    let det2 = det_m * n.dot(&f0) / n.dot(&f_end);
    let tr2 = dp.trace();
    let disc = tr2 * tr2 - 4.0 * det2;
    let (mu1, mu2) = if disc >= 0.0 {
        let big = 0.5 * (tr2 + tr2.signum() * disc.sqrt());
        let small = if big != 0.0 { det2 / big } else { 0.0 };
        (Complex64::new(big, 0.0), Complex64::new(small, 0.0))
    } else {
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(0.5 * tr2, im), Complex64::new(0.5 * tr2, -im))
    };
    let (mu1, mu2) = if mu1.norm() >= mu2.norm() { (mu1, mu2) } else { (mu2, mu1) };
    let trivial = tf
        .monodromy
        .complex_eigenvalues()
        .iter()
        .copied()
        .min_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()))
        .expect("3 eigenvalues");

    let n_out = [mu1, mu2].iter().filter(|m| m.norm() > 1.0).count();
    let stability = match n_out {
        0 => Stability::Stable,
        1 => Stability::Saddle,
        _ => Stability::Unstable,
    };
    let section_points: Vec<State> = tf.crossings.iter().map(|c| c.1).collect();
    let image = anchor.mirror();
    let symmetric = section_points.iter().any(|q| q.dist(&image) < SAME_POINT * scale);
    let signature = (
        tf.zmax.iter().filter(|s| s.x > 0.0).count(),
        tf.zmax.iter().filter(|s| s.x < 0.0).count(),
    );

    let orbit = integrate(p, anchor, &tol.with_t_max(tf.t))?;
    let mut mean = State::ORIGIN;
    for w in orbit.samples.windows(2) {
        let dt = w[1].0 - w[0].0;
        mean = mean + (0.5 * dt) * (w[0].1 + w[1].1);
    }
    let mean = (1.0 / tf.t) * mean;
    let mut centers = vec![State::ORIGIN];
    if let Some(o1) = o1_location(p) {
        centers.extend([o1, o1.mirror()]);
    }
    let center = centers
        .into_iter()
        .min_by(|a, b| a.dist(&mean).total_cmp(&b.dist(&mean)))
        .expect("origin always present");
    let amplitude = orbit.samples.iter().map(|s| s.1.dist(&center)).fold(0.0, f64::max);

    Ok(PeriodicOrbit {
        params: *p,
        section: *newton.section,
        anchor,
        returns: newton.returns,
        period: tf.t,
        monodromy: tf.monodromy,
        multipliers: [trivial, mu1, mu2],
        log_abs_det: tf.log_abs_det,
        stability,
        symmetric,
        signature,
        section_points,
        mean,
        amplitude,
        iterations,
        residual,
    })
}

//! Equilibria of the Lorenz system, their spectra, and the Hopf threshold of
//! the symmetric pair.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{jacobian, vector_field, LorenzParams, State};
use crate::error::{Error, Result};

/// Relative tolerance on the cubic discriminant deciding real vs complex roots.
const DISCRIMINANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    StableNode,
    StableFocusNode,
    /// The origin at `r = 1`, where the three equilibria coalesce.
    TripleDegenerate,
    /// One positive real eigenvalue, two with negative real part.
    #[serde(rename = "saddle-index-1")]
    SaddleIndex1,
    /// Two real positive eigenvalues, one negative.
    #[serde(rename = "saddle-index-2")]
    SaddleIndex2,
    /// Complex pair with positive real part, real eigenvalue negative.
    UnstableSaddleFocus,
    /// All eigenvalues with positive real part.
    Repeller,
    /// Some eigenvalue on the imaginary axis (other than the triple point).
    Marginal,
}

impl Classification {
    pub fn is_stable(&self) -> bool {
        matches!(self, Classification::StableNode | Classification::StableFocusNode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    #[serde(rename = "O")]
    Origin,
    #[serde(rename = "O1")]
    O1,
    #[serde(rename = "O2")]
    O2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub location: State,
    pub eigenvalues: [Complex64; 3],
    pub classification: Classification,
}

impl Equilibrium {
    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Location of `O1`; `None` for `r <= 1`.
pub fn o1_location(p: &LorenzParams) -> Option<State> {
    (p.r > 1.0).then(|| {
        let c = (p.b * (p.r - 1.0)).sqrt();
        State::new(c, c, p.r - 1.0)
    })
}

/// All equilibria: the origin, and `O1`, `O2 = S(O1)` when `r > 1`.
pub fn equilibria(p: &LorenzParams) -> Result<Vec<Equilibrium>> {
    p.validate()?;
    let mut out = Vec::with_capacity(3);
    let (classification, eigenvalues) = classify(p, State::ORIGIN)?;
    out.push(Equilibrium {
        kind: EquilibriumKind::Origin,
        location: State::ORIGIN,
        eigenvalues,
        classification,
    });
    if let Some(o1) = o1_location(p) {
        for (kind, loc) in [(EquilibriumKind::O1, o1), (EquilibriumKind::O2, o1.mirror())] {
            let (classification, eigenvalues) = classify(p, loc)?;
            out.push(Equilibrium {
                kind,
                location: loc,
                eigenvalues,
                classification,
            });
        }
    }
    Ok(out)
}

/// Eigenvalues of the Jacobian at an equilibrium and the resulting label.
pub fn classify(p: &LorenzParams, location: State) -> Result<(Classification, [Complex64; 3])> {
    let residual = vector_field(p, location)?.norm();
    if residual >= 1e-12 * (1.0 + location.norm()) {
        return Err(Error::domain(format!(
            "{location:?} is not an equilibrium (|f| = {residual:e})"
        )));
    }
    let eig = eigenvalues3(&jacobian(p, location)?);
    let scale = eig.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let zero = 1e-12 * scale;
    let at_origin = location == State::ORIGIN;
    let n_pos = eig.iter().filter(|c| c.re > zero).count();
    let complex = eig.iter().any(|c| c.im != 0.0);
    let class = if eig.iter().any(|c| c.re.abs() <= zero) {
        if at_origin {
            Classification::TripleDegenerate
        } else {
            Classification::Marginal
        }
    } else {
        match (n_pos, complex) {
            (0, false) => Classification::StableNode,
            (0, true) => Classification::StableFocusNode,
            (1, _) => Classification::SaddleIndex1,
            (2, true) => Classification::UnstableSaddleFocus,
            (2, false) => Classification::SaddleIndex2,
            _ => Classification::Repeller,
        }
    };
    Ok((class, eig))
}

/// Roots of `l^3 + a l^2 + b l + c`, real roots first (ascending), then a
/// complex pair with positive imaginary part first.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    let scale = (half_q * half_q).max(third_p.abs().powi(3)).max(f64::MIN_POSITIVE);

    let polish = |mut x: f64| {
        for _ in 0..3 {
            let f = ((x + a) * x + b) * x + c;
            let df = (3.0 * x + 2.0 * a) * x + b;
            if df == 0.0 {
                break;
            }
            let dx = f / df;
            if !dx.is_finite() {
                break;
            }
            x -= dx;
        }
        x
    };

    if disc.abs() <= DISCRIMINANT_TOL * scale {
        // repeated roots
        if p.abs() <= DISCRIMINANT_TOL * (a * a).max(b.abs()).max(1.0) {
            let t = -shift;
            return [Complex64::new(t, 0.0); 3];
        }
        let t1 = 3.0 * q / p - shift;
        let t2 = -1.5 * q / p - shift;
        let mut r = [t1, t2, t2];
        r.sort_by(f64::total_cmp);
        return r.map(|x| Complex64::new(x, 0.0));
    }

    if disc < 0.0 {
        let m = 2.0 * (-third_p).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let mut r = [0, 1, 2].map(|k| {
            let t = m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos();
            polish(t - shift)
        });
        r.sort_by(f64::total_cmp);
        // trace identity
        let drift = (r.iter().sum::<f64>() + a) / 3.0;
        return r.map(|x| Complex64::new(x - drift, 0.0));
    }

    let sq = disc.sqrt();
    let u = (-half_q + sq).cbrt();
    let v = (-half_q - sq).cbrt();
    let real = polish(u + v - shift);
    // the pair shares the remaining trace exactly
    let re = (-a - real) / 2.0;
    // product of the pair from the constant term when the real root is safe
    let im = if real.abs() > 1e-8 {
        let prod = -c / real;
        (prod - re * re).max(0.0).sqrt()
    } else {
        (3f64.sqrt() / 2.0 * (u - v)).abs()
    };
    [
        Complex64::new(real, 0.0),
        Complex64::new(re, im),
        Complex64::new(re, -im),
    ]
}

/// Eigenvalues of a 3x3 matrix via its characteristic polynomial.
pub fn eigenvalues3(m: &Matrix3<f64>) -> [Complex64; 3] {
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();
    cubic_roots(-tr, minors, -det)
}

/// Closed-form Hopf value of `O1`, `O2`: `sigma (sigma + b + 3) / (sigma - b - 1)`.
pub fn hopf_threshold(sigma: f64, b: f64) -> Result<f64> {
    let denom = sigma - b - 1.0;
    if denom <= 0.0 {
        return Err(Error::NoThreshold(denom));
    }
    Ok(sigma * (sigma + b + 3.0) / denom)
}

/// Bisection of the largest real part of `O1`'s spectrum to `|dr| < 1e-9`.
pub fn find_hopf_numeric(sigma: f64, b: f64, bracket: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    if lo <= 1.0 {
        return Err(Error::Bracket(format!("bracket [{lo}, {hi}] must lie in r > 1 where O1 exists")));
    }
    let growth = |r: f64| -> Result<f64> {
        let p = LorenzParams::new(sigma, b, r)?;
        let o1 = o1_location(&p).expect("r > 1");
        let (_, eig) = classify(&p, o1)?;
        Ok(eig.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max))
    };
    let g_lo = growth(lo)?;
    let g_hi = growth(hi)?;
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::Bracket(format!(
            "no stability change of O1 in [{lo}, {hi}] (max Re = {g_lo:e}, {g_hi:e})"
        )));
    }
    while hi - lo >= 1e-9 {
        let mid = 0.5 * (lo + hi);
        if growth(mid)?.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_names() {
        let name = |c: Classification| serde_json::to_value(c).unwrap();
        assert_eq!(name(Classification::SaddleIndex1), "saddle-index-1");
        assert_eq!(name(Classification::UnstableSaddleFocus), "unstable-saddle-focus");
        assert_eq!(name(Classification::TripleDegenerate), "triple-degenerate");
    }
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn origin_only_below_one() {
        let eq = equilibria(&LorenzParams::canonical(0.5)).unwrap();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].classification, Classification::StableNode);
        assert!(eq[0].eigenvalues.iter().all(|c| c.im == 0.0 && c.re < 0.0));
    }

    #[test]
    fn triple_point_at_one() {
        let eq = equilibria(&LorenzParams::canonical(1.0)).unwrap();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].classification, Classification::TripleDegenerate);
    }

    #[test]
    fn spectra_at_28() {
        let eq = equilibria(&LorenzParams::canonical(28.0)).unwrap();
        assert_eq!(eq.len(), 3);
        let o1 = eq[1].location;
        assert_relative_eq!(o1.x, 8.48528, epsilon = 1e-5);
        assert_relative_eq!(o1.y, 8.48528, epsilon = 1e-5);
        assert_eq!(o1.z, 27.0);
        assert_eq!(eq[2].location, o1.mirror());
        assert_eq!(eq[0].classification, Classification::SaddleIndex1);
        let mut re: Vec<f64> = eq[0].eigenvalues.iter().map(|c| c.re).collect();
        re.sort_by(f64::total_cmp);
        assert_relative_eq!(re[0], (-11.0 - 1201f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(re[1], -8.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(re[2], (-11.0 + 1201f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_eq!(eq[1].classification, Classification::UnstableSaddleFocus);
        assert_eq!(eq[2].classification, Classification::UnstableSaddleFocus);
    }

    #[test]
    fn classify_rejects_non_equilibrium() {
        let p = LorenzParams::canonical(28.0);
        assert!(matches!(classify(&p, State::new(1.0, 2.0, 3.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_form_threshold() {
        assert_relative_eq!(hopf_threshold(10.0, 8.0 / 3.0).unwrap(), 470.0 / 19.0, epsilon = 1e-13);
        assert_relative_eq!(hopf_threshold(16.0, 4.0).unwrap(), 368.0 / 11.0, epsilon = 1e-13);
        assert!(matches!(hopf_threshold(3.0, 2.0), Err(Error::NoThreshold(_))));
    }

    #[test]
    fn numeric_threshold() {
        let r = find_hopf_numeric(10.0, 8.0 / 3.0, (20.0, 30.0)).unwrap();
        assert!((r - 470.0 / 19.0).abs() < 1e-6);
        let r = find_hopf_numeric(16.0, 4.0, (30.0, 40.0)).unwrap();
        assert!((r - 368.0 / 11.0).abs() < 1e-6);
        assert!(matches!(find_hopf_numeric(10.0, 8.0 / 3.0, (25.0, 30.0)), Err(Error::Bracket(_))));
    }

    #[test]
    fn classification_flips_once_near_hopf() {
        let ra = find_hopf_numeric(10.0, 8.0 / 3.0, (20.0, 30.0)).unwrap();
        let mut flips = 0;
        let mut prev = None;
        for i in -200..=200 {
            let r = ra + i as f64 * 1e-3 + 5e-4;
            let p = LorenzParams::canonical(r);
            let stable = classify(&p, o1_location(&p).unwrap()).unwrap().0.is_stable();
            if let Some(prev) = prev {
                if prev != stable {
                    flips += 1;
                    assert!((r - ra).abs() <= 1e-3);
                }
            }
            prev = Some(stable);
        }
        assert_eq!(flips, 1);
    }

    #[test]
    fn cubic_with_complex_pair() {
        // (l + 2)(l^2 + 2 l + 5) = l^3 + 4 l^2 + 9 l + 10
        let r = cubic_roots(4.0, 9.0, 10.0);
        assert_relative_eq!(r[0].re, -2.0, epsilon = 1e-12);
        assert_relative_eq!(r[1].re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(r[1].im, 2.0, epsilon = 1e-12);
        assert_eq!(r[2], r[1].conj());
    }

    proptest! {
        #[test]
        fn equilibrium_invariants(r in 0.0..400.0f64) {
            let p = LorenzParams::canonical(r);
            for e in equilibria(&p).unwrap() {
                let f = vector_field(&p, e.location).unwrap().norm();
                prop_assert!(f < 1e-12 * (1.0 + e.location.norm()));
                let sum: f64 = e.eigenvalues.iter().map(|c| c.re).sum();
                prop_assert!((sum - p.divergence()).abs() < 1e-9);
            }
        }

        #[test]
        fn stability_switch_at_threshold(r in 1.01..400.0f64) {
            let p = LorenzParams::canonical(r);
            let ra = hopf_threshold(p.sigma, p.b).unwrap();
            prop_assume!((r - ra).abs() > 1e-6);
            let (class, _) = classify(&p, o1_location(&p).unwrap()).unwrap();
            prop_assert_eq!(class.is_stable(), r < ra);
        }
    }
}

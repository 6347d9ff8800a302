//! Library results checked against independent computations: a fixed-step
//! RK4 integrator written here, closed forms, and nalgebra's general eigen
//! solver.

use lorenz_bif::chaos::lyapunov_spectrum;
use lorenz_bif::dynamics::{integrate, jacobian};
use lorenz_bif::equilibria::{equilibria, find_hopf_numeric, hopf_threshold};
use lorenz_bif::separatrix::find_homoclinic_r;
use lorenz_bif::{LorenzParams, State, ToleranceSpec};

const SIGMA: f64 = 10.0;
const B: f64 = 8.0 / 3.0;

fn f(r: f64, s: [f64; 3]) -> [f64; 3] {
    [SIGMA * (s[1] - s[0]), s[0] * (r - s[2]) - s[1], s[0] * s[1] - B * s[2]]
}

fn rk4(r: f64, s: [f64; 3], h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], k: [f64; 3], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2]];
    let k1 = f(r, s);
    let k2 = f(r, add(s, k1, h / 2.0));
    let k3 = f(r, add(s, k2, h / 2.0));
    let k4 = f(r, add(s, k3, h));
    [0, 1, 2].map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Sign of `x` where the separatrix launched into `x > 0` crosses
/// `z = r - 1` downward for the second time.
fn second_crossing_side(r: f64) -> f64 {
    let lambda = 0.5 * (-(SIGMA + 1.0) + ((SIGMA + 1.0).powi(2) + 4.0 * SIGMA * (r - 1.0)).sqrt());
    let (vx, vy) = (SIGMA, lambda + SIGMA);
    let n = vx.hypot(vy);
    let mut s = [1e-6 * vx / n, 1e-6 * vy / n, 0.0];
    let h = 2e-4;
    let level = r - 1.0;
    let mut crossings = 0;
    for _ in 0..2_000_000 {
        let next = rk4(r, s, h);
        if s[2] > level && next[2] <= level {
            crossings += 1;
            if crossings == 2 {
                return next[0].signum();
            }
        }
        s = next;
    }
    panic!("no second crossing at r = {r}");
}

#[test]
fn homoclinic_value_matches_rk4_bisection() {
    let (mut lo, mut hi) = (13.0, 15.0);
    let s_lo = second_crossing_side(lo);
    assert_ne!(s_lo, second_crossing_side(hi));
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if second_crossing_side(mid) == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    assert!((oracle - 13.9265).abs() < 1e-3, "oracle {oracle}");
    let lib = find_homoclinic_r(&LorenzParams::canonical(14.0), (13.0, 15.0), &ToleranceSpec::default()).unwrap();
    assert!((lib.estimate - oracle).abs() < 1e-3, "library {} vs oracle {oracle}", lib.estimate);
}

#[test]
fn adaptive_solution_matches_fine_rk4() {
    for r in [0.5, 10.0, 28.0, 350.0] {
        let t_end = if r > 100.0 { 2.0 } else { 5.0 };
        let s0 = [1.0, 2.0, 3.0];
        let steps = 200_000;
        let h = t_end / steps as f64;
        let mut s = s0;
        for _ in 0..steps {
            s = rk4(r, s, h);
        }
        let p = LorenzParams::canonical(r);
        let tol = ToleranceSpec::default().with_tol(1e-12).with_t_max(t_end);
        let lib = integrate(&p, State::from_array(s0), &tol).unwrap().last();
        let scale = 1.0 + State::from_array(s).norm();
        assert!(lib.dist(&State::from_array(s)) < 1e-7 * scale, "r = {r}: {lib:?} vs {s:?}");
    }
}

#[test]
fn hopf_threshold_closed_form() {
    let oracle = SIGMA * (SIGMA + B + 3.0) / (SIGMA - B - 1.0);
    assert!((oracle - 470.0 / 19.0).abs() < 1e-12);
    assert!((hopf_threshold(SIGMA, B).unwrap() - oracle).abs() < 1e-9);
    assert!((find_hopf_numeric(SIGMA, B, (20.0, 30.0)).unwrap() - oracle).abs() < 1e-6);
}

#[test]
fn equilibrium_eigenvalues_match_general_solver() {
    for r in [0.5, 10.0, 20.0, 24.5, 28.0, 350.0] {
        let p = LorenzParams::canonical(r);
        for e in equilibria(&p).unwrap() {
            let mut general: Vec<_> = jacobian(&p, e.location).unwrap().complex_eigenvalues().iter().copied().collect();
            for ev in e.eigenvalues {
                let (k, d) = general
                    .iter()
                    .enumerate()
                    .map(|(k, g)| (k, (g - ev).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(d < 1e-8 * (1.0 + ev.norm()), "r = {r}: {ev} unmatched ({d:e})");
                general.remove(k);
            }
        }
    }
}

#[test]
fn lyapunov_sum_is_divergence() {
    let p = LorenzParams::canonical(28.0);
    let spec = lyapunov_spectrum(&p, State::new(1.0, 1.0, 1.0), 20.0, 200.0, 0.5, &ToleranceSpec::default()).unwrap();
    assert!((spec.sum() + 41.0 / 3.0).abs() < 1e-3);
}

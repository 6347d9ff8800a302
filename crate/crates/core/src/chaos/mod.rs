//! Lyapunov spectra, parameter sweeps and the scenario report.


mod report;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, pack, run, tangent_field, unpack, LorenzParams, QrAccumulator, State, StepAction, ToleranceSpec};
use crate::error::{Error, Result};


pub use report::{claim_ids, scenario_report, Claim, ClaimVerdict, CycleSearchRow, GridRow, ReportConfig, ScenarioReport};
pub use sweep::{cluster_count, sweep, write_sweep_csv, SweepRecord, SweepSettings, SweepVerdict, CHAOS_THRESHOLD, CLUSTER_DIAMETER, MAX_CLUSTERS};

pub const DEFAULT_TRANSIENT: f64 = 100.0;
pub const DEFAULT_TOTAL: f64 = 2000.0;
pub const DEFAULT_RENORM: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    /// Sorted descending.
    pub exponents: [f64; 3],
    pub transient: f64,
    pub total: f64,
    pub renorm: f64,
}

impl LyapunovSpectrum {
    pub fn leading(&self) -> f64 {
        self.exponents[0]
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// Benettin's method: three tangent vectors evolved with the flow and
/// re-orthonormalized every `renorm` time units.
pub fn lyapunov_spectrum(
    p: &LorenzParams,
    s0: State,
    transient: f64,
    total: f64,
    renorm: f64,
    tol: &ToleranceSpec,
) -> Result<LyapunovSpectrum> {
    p.validate()?;
    tol.validate()?;
    s0.check_finite()?;
    if !(transient >= 0.0 && transient.is_finite()) {
        return Err(Error::Validation(format!("transient must be non-negative, got {transient}")));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Validation(format!("total must be positive, got {total}")));
    }
    if !(0.1..=1.0).contains(&renorm) {
        return Err(Error::Validation(format!("renorm must lie in [0.1, 1], got {renorm}")));
    }

    let start = if transient > 0.0 {
        integrate(p, s0, &tol.with_t_max(transient))?.last()
    } else {
        s0
    };

    let f = |y: &[f64; 12]| tangent_field(p, y);
    // a generic frame: the identity can sit inside invariant subspaces
    let (frame, _) = QrAccumulator::factor(&nalgebra::Matrix3::new(1.0, 0.3, 0.2, 0.4, 1.0, 0.5, 0.1, 0.6, 1.0));
    let mut y = pack(start, &frame);
    let mut sums = [0.0; 3];
    let mut t = 0.0;
    let mut h = None;
    let partial = |sums: &[f64; 3], t: f64| if t > 0.0 { sums.map(|s| s / t) } else { [f64::NAN; 3] };
    while t < total * (1.0 - 1e-12) {
        let t_next = (t + renorm).min(total);
        let flow = run(&f, y, t, t_next, tol, h, |_| StepAction::Continue).map_err(|e| match e {
            Error::Integration { t: te, .. } => Error::Diverged {
                t: transient + te,
                partial: partial(&sums, t),
            },
            other => other,
        })?;
        h = Some(flow.h);
        y = flow.y;
        let (s, m) = unpack(&y);
        if s.norm() > 1e6 {
            return Err(Error::Diverged {
                t: transient + t_next,
                partial: partial(&sums, t),
            });
        }
        let (q, r) = QrAccumulator::factor(&m);
        for (k, acc) in sums.iter_mut().enumerate() {
            *acc += r[(k, k)].ln();
        }
        y = pack(s, &q);
        t = flow.t;
    }
    let mut exponents = sums.map(|s| s / total);
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovSpectrum {
        exponents,
        transient,
        total,
        renorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(r: f64, total: f64) -> LyapunovSpectrum {
        let tol = ToleranceSpec::default().with_tol(1e-9);
        lyapunov_spectrum(&LorenzParams::canonical(r), State::new(1.0, 1.0, 1.0), DEFAULT_TRANSIENT, total, DEFAULT_RENORM, &tol).unwrap()
    }

    #[test]
    fn stable_node_matches_eigenvalues() {
        let s = spectrum(0.5, 500.0);
        let d = 101f64.sqrt();
        let expect = [(-11.0 + d) / 2.0, -8.0 / 3.0, (-11.0 - d) / 2.0];
        for (a, b) in s.exponents.iter().zip(expect) {
            assert!((a - b).abs() < 0.02, "{:?}", s.exponents);
        }
    }

    #[test]
    fn sum_is_divergence() {
        let s = spectrum(28.0, 200.0);
        assert!((s.sum() + 41.0 / 3.0).abs() < 0.05, "{:?}", s.exponents);
    }

    #[test]
    fn rejects_bad_renorm() {
        let tol = ToleranceSpec::default();
        let p = LorenzParams::canonical(28.0);
        assert!(matches!(
            lyapunov_spectrum(&p, State::new(1.0, 1.0, 1.0), 10.0, 100.0, 2.0, &tol),
            Err(Error::Validation(_))
        ));
    }
}

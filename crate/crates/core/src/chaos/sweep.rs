use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lyapunov_spectrum, DEFAULT_RENORM, DEFAULT_TOTAL, DEFAULT_TRANSIENT};
use crate::cycles::z_maxima;
use crate::dynamics::{fmt17, integrate, LorenzParams, State, ToleranceSpec};
use crate::error::{Error, Result};

/// Leading exponents above this are chaotic, below its negative a fixed point.
pub const CHAOS_THRESHOLD: f64 = 0.01;
pub const CLUSTER_DIAMETER: f64 = 1e-3;
pub const MAX_CLUSTERS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVerdict {
    FixedPoint,
    Periodic,
    Chaotic,
    /// Neither clustered nor clearly positive; also used for failed runs.
    Undetermined,
}

impl SweepVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVerdict::FixedPoint => "fixed-point",
            SweepVerdict::Periodic => "periodic",
            SweepVerdict::Chaotic => "chaotic",
            SweepVerdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub s0: State,
    pub transient: f64,
    pub total: f64,
    pub renorm: f64,
    /// Time window after the transient in which z-maxima are collected.
    pub window: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            s0: State::new(1.0, 1.0, 1.0),
            transient: DEFAULT_TRANSIENT,
            total: DEFAULT_TOTAL,
            renorm: DEFAULT_RENORM,
            window: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub r: f64,
    pub zmax: Vec<f64>,
    /// NaN when the spectrum could not be computed.
    pub exponents: [f64; 3],
    pub leading: f64,
    pub n_clusters: usize,
    pub verdict: SweepVerdict,
    pub error: Option<String>,
}

/// Number of groups of diameter below `diameter` in a greedy left-to-right
/// covering of the sorted values.
pub fn cluster_count(values: &[f64], diameter: f64) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut n = 0;
    let mut start = f64::NEG_INFINITY;
    for x in v {
        if x - start >= diameter {
            n += 1;
            start = x;
        }
    }
    n
}

fn verdict(leading: f64, zmax: &[f64], n_clusters: usize) -> SweepVerdict {
    if leading < -CHAOS_THRESHOLD {
        return SweepVerdict::FixedPoint;
    }
    if zmax.len() >= 2 && n_clusters <= MAX_CLUSTERS {
        return SweepVerdict::Periodic;
    }
    if leading > CHAOS_THRESHOLD {
        return SweepVerdict::Chaotic;
    }
    SweepVerdict::Undetermined
}

fn record(template: &LorenzParams, r: f64, s: &SweepSettings, tol: &ToleranceSpec) -> SweepRecord {
    let fail = |e: Error| SweepRecord {
        r,
        zmax: Vec::new(),
        exponents: [f64::NAN; 3],
        leading: f64::NAN,
        n_clusters: 0,
        verdict: SweepVerdict::Undetermined,
        error: Some(e.to_string()),
    };
    let run = || -> Result<SweepRecord> {
        let p = template.with_r(r);
        p.validate()?;
        let warm = integrate(&p, s.s0, &tol.with_t_max(s.transient))?.last();
        let zmax = z_maxima(&p, warm, usize::MAX, &tol.with_t_max(s.window))?;
        let spec = lyapunov_spectrum(&p, warm, 0.0, s.total, s.renorm, tol)?;
        let n_clusters = cluster_count(&zmax, CLUSTER_DIAMETER);
        Ok(SweepRecord {
            r,
            verdict: verdict(spec.leading(), &zmax, n_clusters),
            leading: spec.leading(),
            exponents: spec.exponents,
            n_clusters,
            zmax,
            error: None,
        })
    };
    run().unwrap_or_else(fail)
}

/// One independent record per grid value; failures are recorded inline.
pub fn sweep(template: &LorenzParams, grid: &[f64], settings: &SweepSettings, tol: &ToleranceSpec) -> Result<Vec<SweepRecord>> {
    template.validate()?;
    tol.validate()?;
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("sweep grid must be strictly ascending".into()));
    }
    Ok(grid.par_iter().map(|&r| record(template, r, settings, tol)).collect())
}

pub fn write_sweep_csv<W: std::io::Write>(records: &[SweepRecord], mut w: W) -> std::io::Result<usize> {
    writeln!(w, "r,lam1,lam2,lam3,verdict,n_clusters")?;
    for rec in records {
        let [a, b, c] = rec.exponents;
        writeln!(w, "{},{},{},{},{},{}", fmt17(rec.r), fmt17(a), fmt17(b), fmt17(c), rec.verdict.as_str(), rec.n_clusters)?;
    }
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters() {
        assert_eq!(cluster_count(&[], 1e-3), 0);
        assert_eq!(cluster_count(&[1.0, 1.0005, 2.0, 1.0002], 1e-3), 2);
        assert_eq!(cluster_count(&[0.0, 0.0009, 0.0018], 1e-3), 2);
    }

    #[test]
    fn rejects_unsorted_grid() {
        let p = LorenzParams::canonical(28.0);
        let r = sweep(&p, &[2.0, 1.0], &SweepSettings::default(), &ToleranceSpec::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn failures_are_inline() {
        let p = LorenzParams::canonical(28.0);
        let recs = sweep(&p, &[f64::NAN, 0.5], &SweepSettings { total: 50.0, ..Default::default() }, &ToleranceSpec::default()).unwrap();
        assert_eq!(recs[0].verdict, SweepVerdict::Undetermined);
        assert!(recs[0].error.is_some());
        assert_eq!(recs[1].verdict, SweepVerdict::FixedPoint);
    }
}

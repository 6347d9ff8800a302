use serde::{Deserialize, Serialize};

use super::Section;
use crate::dynamics::{field, fmt17, run, LorenzParams, State, StepAction, ToleranceSpec};
use crate::dynamics::{Direction, EventTag};
use crate::error::{Error, Result};

/// Direction-filtered section crossings; `complete` is false when fewer than
/// the requested number occurred before `t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossings {
    pub times: Vec<f64>,
    pub points: Vec<State>,
    pub complete: bool,
}

pub fn poincare_crossings(
    p: &LorenzParams,
    s0: State,
    section: &Section,
    n: usize,
    tol: &ToleranceSpec,
) -> Result<Crossings> {
    p.validate()?;
    tol.validate()?;
    let s0 = s0.check_finite()?;
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let f = |y: &[f64; 3]| field(p, y);
    let crossing = crate::dynamics::events::PlaneCrossing {
        plane: &section.plane,
        params: p,
    };
    let mut times = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    run(&f, s0.to_array(), 0.0, tol.t_max, tol, None, |step| {
        if let Some(hit) = crate::dynamics::events::locate(&crossing, step, section.direction) {
            if hit.tag != EventTag::Grazing {
                times.push(hit.t);
                points.push(State::from_array(step.restep(&f, hit.t)));
                if points.len() == n {
                    return StepAction::Stop;
                }
            }
        }
        StepAction::Continue
    })?;
    Ok(Crossings {
        complete: points.len() == n,
        times,
        points,
    })
}

/// Successive local maxima of `z`: `(M_i, M_{i+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnMapSample {
    pub current: f64,
    pub next: f64,
}

/// Collects `n_maxima` local maxima of `z` after discarding `discard` of them
/// and returns the consecutive pairs.
pub fn lorenz_return_map(
    p: &LorenzParams,
    s0: State,
    n_maxima: usize,
    discard: usize,
    tol: &ToleranceSpec,
) -> Result<Vec<ReturnMapSample>> {
    p.validate()?;
    tol.validate()?;
    if n_maxima < 2 {
        return Err(Error::domain("n_maxima must be at least 2"));
    }
    let maxima = z_maxima(p, s0, n_maxima + discard, tol)?;
    let kept = &maxima[discard.min(maxima.len())..];
    if kept.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} maxima of z after discarding {discard} (of {} found)",
            kept.len(),
            maxima.len()
        )));
    }
    Ok(kept
        .windows(2)
        .map(|w| ReturnMapSample {
            current: w[0],
            next: w[1],
        })
        .collect())
}

pub(crate) fn z_maxima(p: &LorenzParams, s0: State, count: usize, tol: &ToleranceSpec) -> Result<Vec<f64>> {
    let f = |y: &[f64; 3]| field(p, y);
    let zvel = crate::dynamics::events::ZVelocity(p);
    let mut out = Vec::with_capacity(count.min(4096));
    run(&f, s0.check_finite()?.to_array(), 0.0, tol.t_max, tol, None, |step| {
        if let Some(m) = crate::dynamics::events::locate(&zvel, step, Direction::Down) {
            if m.tag != EventTag::Grazing {
                out.push(step.restep(&f, m.t)[2]);
                if out.len() == count {
                    return StepAction::Stop;
                }
            }
        }
        StepAction::Continue
    })?;
    Ok(out)
}

/// How far the sampled return map is from the graph of a function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thickness {
    /// `max - min` of the abscissae.
    pub range: f64,
    /// Largest within-bin spread of the ordinates about the bin's local
    /// least-squares line, away from the cusp.
    pub detrended_spread: f64,
    /// Largest raw within-bin spread of the ordinates, all bins.
    pub raw_spread: f64,
    pub bins: usize,
}

impl Thickness {
    pub fn relative(&self) -> f64 {
        self.detrended_spread / self.range
    }
}

/// Bins the samples on the abscissa and measures the vertical spread.
///
/// The bin edges are aligned with the cusp (the abscissa of the largest
/// ordinate) so that no bin straddles both branches of the tent. The two bins
/// touching the cusp are left out of the detrended spread: the map is
/// singular there and no bin of finite width is linear.
pub fn return_map_thickness(samples: &[ReturnMapSample], bins: usize) -> Result<Thickness> {
    if samples.len() < 2 || bins == 0 {
        return Err(Error::InsufficientData("need at least two samples and one bin".into()));
    }
    let lo = samples.iter().map(|s| s.current).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.current).fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let cusp = samples.iter().max_by(|a, b| a.next.total_cmp(&b.next)).map(|s| s.current).unwrap_or(lo);
    let left = ((((cusp - lo) / range) * bins as f64).round() as usize).min(bins);
    let right = bins - left;
    let index = |x: f64| -> usize {
        if x < cusp && left > 0 {
            ((((x - lo) / (cusp - lo)) * left as f64).floor() as usize).min(left - 1)
        } else if right > 0 {
            left + ((((x - cusp) / (hi - cusp).max(f64::MIN_POSITIVE)) * right as f64).floor() as usize).min(right - 1)
        } else {
            left - 1
        }
    };
    let mut buckets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); bins];
    for s in samples {
        buckets[index(s.current)].push((s.current, s.next));
    }
    let mut detrended: f64 = 0.0;
    let mut raw: f64 = 0.0;
    for (i, b) in buckets.iter().enumerate().filter(|(_, b)| b.len() >= 3) {
        let n = b.len() as f64;
        let mx = b.iter().map(|v| v.0).sum::<f64>() / n;
        let my = b.iter().map(|v| v.1).sum::<f64>() / n;
        let sxx: f64 = b.iter().map(|v| (v.0 - mx).powi(2)).sum();
        let sxy: f64 = b.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let res = b.iter().map(|v| v.1 - my - slope * (v.0 - mx));
        let (rmin, rmax) = res.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), r| (a.min(r), c.max(r)));
        if i + 1 != left && i != left {
            detrended = detrended.max(rmax - rmin);
        }
        let (ymin, ymax) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), v| (a.min(v.1), c.max(v.1)));
        raw = raw.max(ymax - ymin);
    }
    Ok(Thickness {
        range,
        detrended_spread: detrended,
        raw_spread: raw,
        bins,
    })
}

/// Secant slope of the sampled map where it crosses the diagonal, using the
/// samples bracketing the crossing on either side. Returns one slope per
/// diagonal crossing.
pub fn return_map_fixed_point_slope(samples: &[ReturnMapSample]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.current, s.next)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    // average of a short window suppresses sampling noise
    let w = (pts.len() / 400).max(2);
    let mean = |sl: &[(f64, f64)]| {
        let n = sl.len() as f64;
        (sl.iter().map(|v| v.0).sum::<f64>() / n, sl.iter().map(|v| v.1).sum::<f64>() / n)
    };
    let mut i = 0;
    while i + 2 * w <= pts.len() {
        let a = mean(&pts[i..i + w]);
        let b = mean(&pts[i + w..i + 2 * w]);
        if (a.1 - a.0).signum() != (b.1 - b.0).signum() && b.0 > a.0 {
            let slope = (b.1 - a.1) / (b.0 - a.0);
            // linear interpolation of the crossing abscissa
            let da = a.1 - a.0;
            let db = b.1 - b.0;
            let x = a.0 + (b.0 - a.0) * da / (da - db);
            out.push((x, slope));
        }
        i += w;
    }
    out
}

/// CSV `zmax_i,zmax_next`.
pub fn write_return_map_csv<W: std::io::Write>(samples: &[ReturnMapSample], mut w: W) -> std::io::Result<usize> {
    writeln!(w, "zmax_i,zmax_next")?;
    for s in samples {
        writeln!(w, "{},{}", fmt17(s.current), fmt17(s.next))?;
    }
    Ok(samples.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossings_alternate_irregularly_at_28() {
        let p = LorenzParams::canonical(28.0);
        let sec = Section::equilibrium_plane(&p);
        let c = poincare_crossings(&p, State::new(1.0, 1.0, 1.0), &sec, 60, &ToleranceSpec::default()).unwrap();
        assert!(c.complete);
        let signs: Vec<bool> = c.points.iter().map(|s| s.x > 0.0).collect();
        let switches = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(switches > 5 && switches < 59, "{switches}");
        // not a fixed alternation pattern
        let runs: std::collections::BTreeSet<usize> = signs
            .chunk_by(|a, b| a == b)
            .map(|c| c.len())
            .collect();
        assert!(runs.len() >= 2);
        for s in &c.points {
            assert!((s.z - 27.0).abs() < 1e-9);
        }
    }

    #[test]
    fn decaying_orbit_has_no_crossings() {
        let p = LorenzParams::canonical(0.5);
        let sec = Section {
            plane: crate::dynamics::Plane::equilibrium_plane(&p),
            direction: Direction::Up,
        };
        let tol = ToleranceSpec::default().with_t_max(100.0);
        // start above the plane: only the transient descent, no upward crossing
        let c = poincare_crossings(&p, State::new(1.0, 1.0, 1.0), &sec, 3, &tol).unwrap();
        assert!(!c.complete);
        assert!(c.points.is_empty());
    }

    #[test]
    fn return_map_needs_two_maxima() {
        let p = LorenzParams::canonical(0.5);
        let tol = ToleranceSpec::default().with_t_max(50.0);
        let e = lorenz_return_map(&p, State::new(1.0, 1.0, 1.0), 10, 0, &tol).unwrap_err();
        assert!(matches!(e, Error::InsufficientData(_)));
        assert!(lorenz_return_map(&p, State::new(1.0, 1.0, 1.0), 1, 0, &tol).is_err());
    }

    #[test]
    fn thickness_of_a_clean_graph_is_zero() {
        let samples: Vec<ReturnMapSample> = (0..1000)
            .map(|i| {
                let x = i as f64 / 999.0;
                ReturnMapSample { current: x, next: 1.0 - (2.0 * x - 1.0).abs() }
            })
            .collect();
        let t = return_map_thickness(&samples, 200).unwrap();
        assert!(t.relative() < 1e-3, "{t:?}");
        let slopes = return_map_fixed_point_slope(&samples);
        assert_eq!(slopes.len(), 1);
        assert!((slopes[0].0 - 2.0 / 3.0).abs() < 1e-2);
        assert!((slopes[0].1 + 2.0).abs() < 1e-6);
    }
}

//! Seeded multi-start search for periodic orbits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::orbit::{find_periodic_orbit, PeriodicOrbit};
use super::section::poincare_crossings;
use super::{Mirror, Section};
use crate::dynamics::{integrate, LorenzParams, State, ToleranceSpec};
use crate::equilibria::o1_location;
use crate::error::Result;
use crate::separatrix::{unstable_directions, DEFAULT_OFFSET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    CloseReturn,
    Separatrix,
    Ring,
    Symmetry,
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySettings {
    /// Maximum number of Newton starts.
    pub budget: usize,
    /// Longest orbit searched for, in section returns.
    pub max_returns: usize,
    /// Section distance that counts as a close return.
    pub recurrence: f64,
    pub transient: f64,
    /// Length of each seeding trajectory after the transient.
    pub run_length: f64,
    /// Seed from close returns of long trajectories.
    pub close_returns: bool,
    /// Seed from the late windings of the separatrix.
    pub separatrix: bool,
    /// Also seed on rings around the nontrivial equilibria.
    pub ring_seeds: bool,
    pub seed: u64,
    /// Half-width of the uniform jitter applied when a seed is retried.
    pub jitter: f64,
    /// Relative period and anchor distance under which two orbits are one.
    pub dedup_tol: f64,
}

impl Default for BatterySettings {
    fn default() -> Self {
        Self {
            budget: 200,
            max_returns: 6,
            recurrence: 0.5,
            transient: 50.0,
            run_length: 200.0,
            close_returns: true,
            separatrix: true,
            ring_seeds: false,
            seed: 0,
            jitter: 1e-3,
            dedup_tol: 1e-4,
        }
    }
}

impl BatterySettings {
    pub fn with_budget(self, budget: usize) -> Self {
        Self { budget, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub point: State,
    pub returns: usize,
    pub source: SeedSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub candidate_seeds: usize,
    pub newton_starts: usize,
    pub converged: usize,
    pub failed: usize,
    pub duplicates: usize,
    pub symmetry_images_added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoundOrbit {
    pub orbit: PeriodicOrbit,
    pub source: SeedSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub r: f64,
    pub orbits: Vec<FoundOrbit>,
    pub stats: SearchStats,
}

impl BatteryReport {
    /// Orbits counted once per symmetric pair.
    pub fn up_to_symmetry(&self) -> Vec<&PeriodicOrbit> {
        let mut out: Vec<&PeriodicOrbit> = Vec::new();
        for f in &self.orbits {
            let image = f.orbit.mirror();
            if !out.iter().any(|o| o.same_as(&f.orbit, 1e-4) || o.same_as(&image, 1e-4)) {
                out.push(&f.orbit);
            }
        }
        out
    }
}

const NEAR_EQUILIBRIUM: f64 = 1e-3;

fn section_points(p: &LorenzParams, s0: State, sec: &Section, settings: &BatterySettings, tol: &ToleranceSpec) -> Vec<State> {
    let Ok(warm) = integrate(p, s0, &tol.with_t_max(settings.transient)) else {
        return Vec::new();
    };
    let estimate = (settings.run_length * 3.0).ceil() as usize + 8;
    let Ok(c) = poincare_crossings(p, warm.last(), sec, estimate, &tol.with_t_max(settings.run_length)) else {
        return Vec::new();
    };
    let eqs = equilibria_points(p);
    c.points
        .into_iter()
        .filter(|q| eqs.iter().all(|e| q.dist(e) > NEAR_EQUILIBRIUM))
        .collect()
}

fn equilibria_points(p: &LorenzParams) -> Vec<State> {
    let mut v = vec![State::ORIGIN];
    if let Some(o1) = o1_location(p) {
        v.extend([o1, o1.mirror()]);
    }
    v
}

/// Close returns `|u_{i+n} - u_i| < recurrence`, best first, at most one
/// seed per neighbourhood and return count.
fn close_return_seeds(points: &[State], settings: &BatterySettings, source: SeedSource) -> Vec<(f64, Seed)> {
    let mut cands = Vec::new();
    for n in 1..=settings.max_returns {
        for i in 0..points.len().saturating_sub(n) {
            let d = points[i].dist(&points[i + n]);
            if d < settings.recurrence {
                cands.push((d, n, points[i]));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<(f64, Seed)> = Vec::new();
    for (d, n, q) in cands {
        if chosen.iter().any(|(_, s)| s.returns == n && s.point.dist(&q) < settings.recurrence) {
            continue;
        }
        chosen.push((
            d,
            Seed {
                point: q,
                returns: n,
                source,
            },
        ));
    }
    chosen
}

/// Round-robin over return counts so that short and long orbits share the budget.
fn interleave(mut seeds: Vec<(f64, Seed)>, limit: usize) -> Vec<Seed> {
    seeds.sort_by(|a, b| a.1.returns.cmp(&b.1.returns).then(a.0.total_cmp(&b.0)));
    let max_n = seeds.iter().map(|s| s.1.returns).max().unwrap_or(0);
    let mut by_n: Vec<std::collections::VecDeque<Seed>> = vec![Default::default(); max_n + 1];
    for (_, s) in seeds {
        by_n[s.returns].push_back(s);
    }
    let mut out = Vec::new();
    while out.len() < limit && by_n.iter().any(|q| !q.is_empty()) {
        for q in by_n.iter_mut() {
            if let Some(s) = q.pop_front() {
                out.push(s);
                if out.len() == limit {
                    break;
                }
            }
        }
    }
    out
}

fn ring_seeds(p: &LorenzParams, sec: &Section) -> Vec<Seed> {
    let Some(o1) = o1_location(p) else { return Vec::new() };
    let mut out = Vec::new();
    for center in [o1, o1.mirror()] {
        for rho in [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0] {
            for (dx, dy) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)] {
                out.push(Seed {
                    point: sec.plane.project(center + rho * State::new(dx, dy, 0.0)),
                    returns: 1,
                    source: SeedSource::Ring,
                });
            }
        }
    }
    out
}

/// Initial conditions of the close-return seeding runs.
fn seeding_starts(p: &LorenzParams) -> Vec<State> {
    let z = (p.r - 1.0).max(1.0);
    vec![
        State::new(1.0, 1.0, 1.0),
        State::new(-5.0, 3.0, z + 5.0),
        State::new(8.0, -2.0, 0.5 * z),
        State::new(0.1, 0.2, 1.5 * z),
    ]
}

/// Multi-start Newton search seeded from close returns of long trajectories,
/// late windings of the separatrix, optional equilibrium rings, and symmetry
/// images of everything found.
pub fn cycle_search_battery(p: &LorenzParams, settings: &BatterySettings, tol: &ToleranceSpec) -> Result<BatteryReport> {
    p.validate()?;
    tol.validate()?;
    let sec = Section::equilibrium_plane(p);

    let mut close: Vec<(f64, Seed)> = Vec::new();
    for s0 in seeding_starts(p).into_iter().filter(|_| settings.close_returns) {
        close.extend(close_return_seeds(&section_points(p, s0, &sec, settings, tol), settings, SeedSource::CloseReturn));
    }
    let mut sep: Vec<(f64, Seed)> = Vec::new();
    if p.r > 1.0 && settings.separatrix {
        let (plus, _) = unstable_directions(p)?;
        let late = section_points(p, DEFAULT_OFFSET * plus, &sec, settings, tol);
        sep = close_return_seeds(&late, settings, SeedSource::Separatrix);
        // single windings closest to the equilibria
        if let Some(o1) = o1_location(p) {
            let mut wind: Vec<(f64, Seed)> = late
                .iter()
                .map(|q| {
                    let d = q.dist(&o1).min(q.dist(&o1.mirror()));
                    (d, Seed { point: *q, returns: 1, source: SeedSource::Separatrix })
                })
                .collect();
            wind.sort_by(|a, b| a.0.total_cmp(&b.0));
            sep.extend(wind.into_iter().take(4));
        }
    }
    let rings = if settings.ring_seeds { ring_seeds(p, &sec) } else { Vec::new() };

    let candidate_seeds = close.len() + sep.len() + rings.len();
    let mut seeds = rings;
    let remaining = settings.budget.saturating_sub(seeds.len());
    let sep_share = if close.is_empty() { remaining } else { remaining / 3 }.min(sep.len());
    seeds.extend(interleave(sep, sep_share));
    let rest = settings.budget.saturating_sub(seeds.len());
    seeds.extend(interleave(close, rest));
    seeds.truncate(settings.budget);

    let mut stats = SearchStats {
        candidate_seeds,
        ..Default::default()
    };
    let solve = |s: &Seed| find_periodic_orbit(p, s.point, s.returns, &sec, tol).ok();
    let first: Vec<Option<PeriodicOrbit>> = seeds.par_iter().map(solve).collect();
    stats.newton_starts = seeds.len();

    // failed seeds get one jittered retry while budget remains
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let retry: Vec<(usize, Seed)> = first
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_none())
        .map(|(i, _)| i)
        .take(settings.budget.saturating_sub(seeds.len()))
        .map(|i| {
            let mut s = seeds[i];
            let j = settings.jitter;
            s.point = sec.plane.project(s.point + State::new(rng.gen_range(-j..=j), rng.gen_range(-j..=j), 0.0));
            (i, s)
        })
        .collect();
    let retried: Vec<(usize, Option<PeriodicOrbit>)> = retry.par_iter().map(|(i, s)| (*i, solve(s))).collect();
    stats.newton_starts += retried.len();

    let mut results: Vec<(PeriodicOrbit, SeedSource)> = Vec::new();
    for (i, o) in first.into_iter().enumerate() {
        if let Some(o) = o {
            results.push((o, seeds[i].source));
        }
    }
    for (i, o) in retried {
        if let Some(o) = o {
            results.push((o, seeds[i].source));
        }
    }
    stats.converged = results.len();
    stats.failed = stats.newton_starts - stats.converged;

    let mut orbits = dedup(results, settings.dedup_tol, &mut stats);

    // close the set under the symmetry
    let mut images = Vec::new();
    for f in &orbits {
        if f.orbit.symmetric {
            continue;
        }
        let img = f.orbit.mirror();
        let known = orbits.iter().chain(images.iter()).any(|g: &FoundOrbit| g.orbit.same_as(&img, settings.dedup_tol));
        if !known {
            let polished = find_periodic_orbit(p, img.anchor, img.returns, &sec, tol).unwrap_or(img);
            images.push(FoundOrbit {
                orbit: polished,
                source: SeedSource::Symmetry,
            });
        }
    }
    stats.symmetry_images_added = images.len();
    orbits.extend(images);
    orbits.sort_by(|a, b| orbit_key(&a.orbit).partial_cmp(&orbit_key(&b.orbit)).expect("finite"));

    Ok(BatteryReport { r: p.r, orbits, stats })
}

fn orbit_key(o: &PeriodicOrbit) -> (f64, f64, f64) {
    let c = o.canonical_point();
    (o.period, c.x, c.y)
}

fn dedup(mut results: Vec<(PeriodicOrbit, SeedSource)>, tol: f64, stats: &mut SearchStats) -> Vec<FoundOrbit> {
    results.sort_by(|a, b| orbit_key(&a.0).partial_cmp(&orbit_key(&b.0)).expect("finite"));
    let mut out: Vec<FoundOrbit> = Vec::new();
    for (o, source) in results {
        if out.iter().any(|f| f.orbit.same_as(&o, tol)) {
            stats.duplicates += 1;
        } else {
            out.push(FoundOrbit { orbit: o, source });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::Stability;

    #[test]
    fn unique_stable_orbit_at_350() {
        let p = LorenzParams::canonical(350.0);
        let report = cycle_search_battery(&p, &BatterySettings::default().with_budget(30), &ToleranceSpec::default()).unwrap();
        let distinct = report.up_to_symmetry();
        assert_eq!(distinct.len(), 1);
        assert_eq!(distinct[0].stability, Stability::Stable);
        assert!(distinct[0].symmetric);
        assert!(report.stats.newton_starts <= 30);
    }

    #[test]
    fn saddle_cycle_pair_at_245() {
        let p = LorenzParams::canonical(24.5);
        let report = cycle_search_battery(&p, &BatterySettings::default().with_budget(40), &ToleranceSpec::default()).unwrap();
        let l1 = report.orbits.iter().find(|f| f.orbit.signature == (1, 0)).expect("L1");
        let l2 = report.orbits.iter().find(|f| f.orbit.signature == (0, 1)).expect("L2");
        assert!(l1.orbit.mirror().same_as(&l2.orbit, 1e-6));
        assert_eq!(l1.orbit.unstable_dimension(), 1);
    }

    #[test]
    fn search_is_reproducible() {
        let p = LorenzParams::canonical(28.0);
        let s = BatterySettings::default().with_budget(40);
        let a = cycle_search_battery(&p, &s, &ToleranceSpec::default()).unwrap();
        let b = cycle_search_battery(&p, &s, &ToleranceSpec::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.orbits.iter().all(|f| f.orbit.stability != Stability::Stable));
    }
}

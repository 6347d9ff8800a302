use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lorenz_bif::chaos::{lyapunov_spectrum, scenario_report, sweep, write_sweep_csv, ReportConfig, SweepSettings};
use lorenz_bif::config::{load_config, EmittedFile, RunConfig, RunManifest};
use lorenz_bif::cycles::{
    continue_orbit, cycle_search_battery, find_periodic_orbit, lorenz_return_map, return_map_thickness,
    write_branch_csv, write_return_map_csv, BatterySettings, ContinuationSettings, PeriodicOrbit, Section,
    Stability,
};
use lorenz_bif::dynamics::{fmt17, integrate_with_events, Direction, Plane};
use lorenz_bif::equilibria::equilibria;
use lorenz_bif::separatrix::{
    classify_separatrix_fate, find_fate_transition_r, find_homoclinic_r, launch_separatrix, write_fate_profile_csv,
    Side, DEFAULT_OFFSET,
};
use lorenz_bif::{Error, LorenzParams, Result, State};

#[derive(Parser, Debug)]
#[command(name = "lorenz-bif", version, about = "Bifurcation analysis of the Lorenz system")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    #[arg(long, global = true, allow_hyphen_values = true)]
    sigma: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    b: Option<f64>,
    /// `key = value` configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    tol_rel: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    tol_abs: Option<f64>,
    /// Integration horizon (also the separatrix fate horizon).
    #[arg(long, global = true, allow_hyphen_values = true)]
    tmax: Option<f64>,
    /// Seed for the Newton-start jitter of cycle searches.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SeedMode {
    CloseReturn,
    Separatrix,
    Point,
}

#[derive(Args, Debug)]
struct OrbitStart {
    /// Starting point `x,y,z` for Newton.
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    point: Option<State>,
    /// Section returns per period.
    #[arg(long, default_value_t = 1)]
    returns: usize,
    /// Newton starts for the cycle search.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibria with eigenvalues and classification.
    Equilibria {
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
    },
    /// Long-time fate of one separatrix of the origin.
    Separatrix {
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        /// `+` (Gamma1) or `-` (Gamma2); `plus` and `minus` are accepted too.
        #[arg(long, default_value = "+", allow_hyphen_values = true)]
        side: String,
    },
    /// Bisection for the homoclinic-butterfly value of r.
    HomoclinicSearch {
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        bracket: (f64, f64),
    },
    /// Bisection for the value of r where the separatrices stop converging.
    FateTransition {
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        bracket: (f64, f64),
    },
    /// One periodic orbit, from a cycle search or a given point.
    Cycle {
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, value_enum, default_value = "close-return")]
        seed_mode: SeedMode,
        #[command(flatten)]
        start: OrbitStart,
    },
    /// Continuation of a periodic orbit in r.
    Continue {
        #[arg(long, allow_hyphen_values = true)]
        r_from: f64,
        #[arg(long, allow_hyphen_values = true)]
        r_to: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        #[command(flatten)]
        start: OrbitStart,
    },
    /// Successive maxima of z, `(M_i, M_i+1)`.
    ReturnMap {
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Leading maxima dropped as transient.
        #[arg(long, default_value_t = 100)]
        discard: usize,
    },
    /// Lyapunov spectrum.
    Lyapunov {
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, default_value_t = lorenz_bif::chaos::DEFAULT_TRANSIENT)]
        transient: f64,
        #[arg(long, default_value_t = lorenz_bif::chaos::DEFAULT_TOTAL)]
        total: f64,
        #[arg(long, default_value_t = lorenz_bif::chaos::DEFAULT_RENORM)]
        renorm: f64,
    },
    /// Lyapunov spectra and z-maxima over a grid of r.
    Sweep {
        #[arg(long, allow_hyphen_values = true)]
        r_from: f64,
        #[arg(long, allow_hyphen_values = true)]
        r_to: f64,
        #[arg(long)]
        step: f64,
        #[arg(long, default_value_t = lorenz_bif::chaos::DEFAULT_TRANSIENT)]
        transient: f64,
        #[arg(long, default_value_t = lorenz_bif::chaos::DEFAULT_TOTAL)]
        total: f64,
    },
    /// Evaluates the catalogue of scenario claims. An `--out` ending in
    /// `.json` names the report file itself.
    ScenarioReport {
        /// Claim ids to leave out (comma separated).
        #[arg(long, value_delimiter = ',')]
        skip: Vec<String>,
    },
    /// Plain trajectory with downward crossings of z = r - 1.
    Trajectory {
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, value_parser = parse_state, default_value = "1,1,1", allow_hyphen_values = true)]
        x0: State,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Equilibria { .. } => "equilibria",
            Command::Separatrix { .. } => "separatrix",
            Command::HomoclinicSearch { .. } => "homoclinic-search",
            Command::FateTransition { .. } => "fate-transition",
            Command::Cycle { .. } => "cycle",
            Command::Continue { .. } => "continue",
            Command::ReturnMap { .. } => "return-map",
            Command::Lyapunov { .. } => "lyapunov",
            Command::Sweep { .. } => "sweep",
            Command::ScenarioReport { .. } => "scenario-report",
            Command::Trajectory { .. } => "trajectory",
        }
    }
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = parse_floats(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_state(s: &str) -> std::result::Result<State, String> {
    let v = parse_floats(s, 3)?;
    Ok(State::new(v[0], v[1], v[2]))
}

fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = g.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = g.b {
        cfg.b = v;
    }
    if let Some(v) = &g.out {
        cfg.out = v.clone();
    }
    if let Some(v) = g.tol_rel {
        cfg.tol_rel = v;
    }
    if let Some(v) = g.tol_abs {
        cfg.tol_abs = v;
    }
    if let Some(v) = g.tmax {
        cfg.t_max = v;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Files written by one run, in emission order.
struct Outputs {
    dir: PathBuf,
    files: Vec<EmittedFile>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<usize>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        let rows = body(&mut w)?;
        w.flush()?;
        self.files.push(EmittedFile { path, rows });
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value, rows: usize) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(rows)
        })
    }
}

fn orbit_json(o: &PeriodicOrbit) -> Value {
    json!({
        "r": o.params.r,
        "anchor": o.anchor,
        "period": o.period,
        "returns": o.returns,
        "multipliers": o.multipliers,
        "stability": o.stability,
        "symmetric": o.symmetric,
        "signature": o.signature,
        "amplitude": o.amplitude,
        "residual": o.residual,
    })
}

fn orbit_from_start(cfg: &RunConfig, p: &LorenzParams, start: &OrbitStart, mode: SeedMode) -> Result<(PeriodicOrbit, Value)> {
    let tol = cfg.tolerance();
    if let (SeedMode::Point, Some(pt)) = (mode, start.point) {
        let orbit = find_periodic_orbit(p, pt, start.returns, &Section::equilibrium_plane(p), &tol)?;
        return Ok((orbit, json!(null)));
    }
    if matches!(mode, SeedMode::Point) {
        return Err(Error::Validation("seed mode 'point' needs --point x,y,z".into()));
    }
    let settings = BatterySettings {
        close_returns: !matches!(mode, SeedMode::Separatrix),
        separatrix: !matches!(mode, SeedMode::CloseReturn),
        seed: cfg.seed,
        ..BatterySettings::default().with_budget(start.budget.unwrap_or(cfg.budget))
    };
    let report = cycle_search_battery(p, &settings, &tol)?;
    let chosen = report
        .orbits
        .iter()
        .find(|f| f.orbit.stability == Stability::Stable)
        .or_else(|| {
            report
                .orbits
                .iter()
                .min_by(|a, b| a.orbit.period.total_cmp(&b.orbit.period))
        })
        .map(|f| f.orbit.clone())
        .ok_or_else(|| {
            Error::Convergence {
                residuals: Vec::new(),
            }
        })?;
    let all: Vec<Value> = report.orbits.iter().map(|f| {
        let mut v = orbit_json(&f.orbit);
        v["source"] = json!(f.source);
        v
    }).collect();
    Ok((chosen, json!({ "stats": report.stats, "orbits": all })))
}

fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite() && from.is_finite() && to.is_finite() && to >= from) {
        return Err(Error::Validation(format!(
            "need finite r-from <= r-to and a positive step, got {from}, {to}, {step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

fn execute(cmd: &Command, cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let tol = cfg.tolerance();
    match cmd {
        Command::Equilibria { r } => {
            let eqs = equilibria(&cfg.params(*r)?)?;
            let v = json!(eqs);
            out.json("equilibria.json", &v, eqs.len())?;
            Ok(v)
        }
        Command::Separatrix { r, side } => {
            let p = cfg.params(*r)?;
            let side: Side = side.parse()?;
            let fate = classify_separatrix_fate(&p, side, &tol, cfg.t_max)?;
            let sep = launch_separatrix(&p, side, DEFAULT_OFFSET, &tol.with_t_max(fate.decision_time))?;
            let v = json!(fate);
            out.json("separatrix.json", &v, 1)?;
            out.write(&format!("separatrix_{}.csv", side.name()), |w| sep.trajectory.write_csv(w))?;
            Ok(v)
        }
        Command::HomoclinicSearch { bracket } => {
            let res = find_homoclinic_r(&cfg.params(bracket.0)?, *bracket, &tol)?;
            let v = json!({ "estimate": res.estimate, "bracket-history": res.bracket_history });
            out.json("homoclinic.json", &v, 1)?;
            Ok(v)
        }
        Command::FateTransition { bracket } => {
            let res = find_fate_transition_r(&cfg.params(bracket.0)?, *bracket, cfg.t_max, &tol)?;
            let v = json!({
                "estimate": res.estimate,
                "bracket-history": res.bracket_history,
                "t-max": res.t_max,
                "monotone": res.monotone,
            });
            out.json("fate_transition.json", &v, 1)?;
            out.write("fate_profile.csv", |w| write_fate_profile_csv(&res.profile, w))?;
            Ok(v)
        }
        Command::Cycle { r, seed_mode, start } => {
            let p = cfg.params(*r)?;
            let (orbit, search) = orbit_from_start(cfg, &p, start, *seed_mode)?;
            let v = orbit_json(&orbit);
            out.json("cycle.json", &v, 1)?;
            if !search.is_null() {
                let n = search["orbits"].as_array().map_or(0, |a| a.len());
                out.json("cycle_search.json", &search, n)?;
            }
            Ok(v)
        }
        Command::Continue {
            r_from,
            r_to,
            step,
            start,
        } => {
            let p = cfg.params(*r_from)?;
            cfg.params(*r_to)?;
            let mode = if start.point.is_some() { SeedMode::Point } else { SeedMode::CloseReturn };
            let (orbit, _) = orbit_from_start(cfg, &p, start, mode)?;
            let branch = continue_orbit(&orbit, *r_to, &ContinuationSettings::default().with_step(*step), &tol)?;
            out.write("branch.csv", |w| write_branch_csv(&branch, w))?;
            let v = json!({
                "start": orbit_json(&orbit),
                "points": branch.points.len(),
                "reached-target": branch.reached_target,
                "events": branch.events,
            });
            out.json("branch_events.json", &v, branch.events.len())?;
            Ok(v)
        }
        Command::ReturnMap { r, n, discard } => {
            let p = cfg.params(*r)?;
            // maxima come roughly once per time unit; stretch the horizon so
            // that `n` is what limits the run
            let horizon = cfg.t_max.max(4.0 * (n + discard) as f64);
            let samples = lorenz_return_map(&p, State::new(1.0, 1.0, 1.0), *n, *discard, &tol.with_t_max(horizon))?;
            out.write("return_map.csv", |w| write_return_map_csv(&samples, w))?;
            let thickness = return_map_thickness(&samples, 200).ok();
            Ok(json!({ "samples": samples.len(), "thickness": thickness }))
        }
        Command::Lyapunov {
            r,
            transient,
            total,
            renorm,
        } => {
            let p = cfg.params(*r)?;
            let spec = lyapunov_spectrum(&p, State::new(1.0, 1.0, 1.0), *transient, *total, *renorm, &tol)?;
            let v = json!({
                "r": r,
                "exponents": spec.exponents,
                "sum": spec.sum(),
                "divergence": p.divergence(),
                "transient": spec.transient,
                "total": spec.total,
                "renorm": spec.renorm,
            });
            out.json("lyapunov.json", &v, 1)?;
            Ok(v)
        }
        Command::Sweep {
            r_from,
            r_to,
            step,
            transient,
            total,
        } => {
            let p = cfg.params(*r_from)?;
            let rs = grid(*r_from, *r_to, *step)?;
            let settings = SweepSettings {
                transient: *transient,
                total: *total,
                ..SweepSettings::default()
            };
            let records = sweep(&p, &rs, &settings, &tol)?;
            out.write("sweep.csv", |w| write_sweep_csv(&records, w))?;
            out.write("sweep_zmax.csv", |w| {
                writeln!(w, "r,zmax")?;
                let mut n = 0;
                for rec in &records {
                    for z in &rec.zmax {
                        writeln!(w, "{},{}", fmt17(rec.r), fmt17(*z))?;
                        n += 1;
                    }
                }
                Ok(n)
            })?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            Ok(json!({ "points": records.len(), "failed": failed }))
        }
        Command::ScenarioReport { skip } => {
            let config = ReportConfig {
                battery_budget: cfg.budget,
                g_budget: cfg.g_budget,
                seed: cfg.seed,
                skip: skip.clone(),
                ..ReportConfig::default()
            };
            let report = scenario_report(&cfg.params(28.0)?, &config, &tol)?;
            let v = serde_json::to_value(&report)?;
            let name = report_file_name(&cfg.out);
            out.json(&name, &v, report.claims.len())?;
            let mut counts = std::collections::BTreeMap::new();
            for c in &report.claims {
                *counts.entry(serde_json::to_value(c.verdict)?.as_str().unwrap_or("").to_string()).or_insert(0) += 1;
            }
            Ok(json!({ "claims": report.claims.len(), "verdicts": counts, "wall-time": report.wall_time }))
        }
        Command::Trajectory { r, x0 } => {
            let p = cfg.params(*r)?;
            let traj = integrate_with_events(&p, *x0, &tol, &Plane::equilibrium_plane(&p), Direction::Down)?;
            out.write("trajectory.csv", |w| traj.write_csv(w))?;
            out.write("events.csv", |w| traj.write_events_csv(w))?;
            Ok(json!({ "samples": traj.samples.len(), "events": traj.events.len() }))
        }
    }
}

fn is_report_path(out: &Path) -> bool {
    out.extension().is_some_and(|e| e == "json")
}

fn report_file_name(out: &Path) -> String {
    if is_report_path(out) {
        out.file_name().map_or("report.json".into(), |n| n.to_string_lossy().into_owned())
    } else {
        "report.json".into()
    }
}

fn output_dir(cmd: &Command, out: &Path) -> PathBuf {
    match cmd {
        Command::ScenarioReport { .. } if is_report_path(out) => match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        },
        _ => out.to_path_buf(),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let start = Instant::now();
    let mut out = Outputs::new(output_dir(&cli.command, &cfg.out))?;
    let summary = execute(&cli.command, &cfg, &mut out)?;
    let text = cfg.to_text();
    out.write("config.resolved", |w| {
        w.write_all(text.as_bytes())?;
        Ok(text.lines().count())
    })?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cli.command.name().to_string(),
        config: cfg.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: out.files.clone(),
    };
    let path = out.dir.join("manifest.json");
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    // a closed stdout (e.g. piped into `head`) is not a failure of the run
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Validation(_)) { 2 } else { 1 })
        }
    }
}

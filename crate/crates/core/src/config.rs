//! Run configuration (`key = value` files) and run manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{LorenzParams, ToleranceSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sigma: f64,
    pub b: f64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_step: f64,
    pub t_max: f64,
    pub out: PathBuf,
    /// Seeds only the Newton-start jitter of the cycle search.
    pub seed: u64,
    /// Newton starts for cycle searches.
    pub budget: usize,
    /// Newton starts per parameter value in the report's stable-cycle search.
    pub g_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tol = ToleranceSpec::default();
        Self {
            sigma: 10.0,
            b: 8.0 / 3.0,
            tol_rel: tol.rel,
            tol_abs: tol.abs,
            max_step: tol.max_step,
            t_max: tol.t_max,
            out: PathBuf::from("."),
            seed: 0,
            budget: 100,
            g_budget: 100,
        }
    }
}

pub const CONFIG_KEYS: [&str; 10] = [
    "sigma", "b", "tol_rel", "tol_abs", "max_step", "t_max", "out", "seed", "budget", "g_budget",
];

impl RunConfig {
    pub fn tolerance(&self) -> ToleranceSpec {
        ToleranceSpec {
            rel: self.tol_rel,
            abs: self.tol_abs,
            max_step: self.max_step,
            t_max: self.t_max,
        }
    }

    pub fn params(&self, r: f64) -> Result<LorenzParams> {
        LorenzParams::new(self.sigma, self.b, r)
    }

    pub fn validate(&self) -> Result<()> {
        LorenzParams::new(self.sigma, self.b, 0.0)?;
        self.tolerance().validate()?;
        if self.budget == 0 || self.g_budget == 0 {
            return Err(Error::Validation("budgets must be positive".into()));
        }
        Ok(())
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Validation(format!("malformed value for {key}: '{value}'")))
        }
        match key {
            "sigma" => self.sigma = num(key, value)?,
            "b" => self.b = num(key, value)?,
            "tol_rel" => self.tol_rel = num(key, value)?,
            "tol_abs" => self.tol_abs = num(key, value)?,
            "max_step" => self.max_step = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = num(key, value)?,
            "budget" => self.budget = num(key, value)?,
            "g_budget" => self.g_budget = num(key, value)?,
            _ => return Err(Error::Validation(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values. `#` starts a
    /// comment; blank lines are ignored. Each assignment is validated as it
    /// is read so that errors carry the line number.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("line {n}: expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value).map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("line {n}: {m}")),
                other => other,
            })?;
            self.validate().map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("line {n}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    /// The configuration in the file format accepted by [`load_config`].
    pub fn to_text(&self) -> String {
        format!(
            "sigma = {:?}\nb = {:?}\ntol_rel = {:?}\ntol_abs = {:?}\nmax_step = {:?}\nt_max = {:?}\nout = {}\nseed = {}\nbudget = {}\ng_budget = {}\n",
            self.sigma,
            self.b,
            self.tol_rel,
            self.tol_abs,
            self.max_step,
            self.t_max,
            self.out.display(),
            self.seed,
            self.budget,
            self.g_budget
        )
    }
}

/// Defaults overridden by the file at `path`.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = RunConfig::default();
    cfg.apply_text(&text)?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedFile {
    pub path: PathBuf,
    /// Data rows (CSV rows without the header, or JSON records).
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub wall_time_s: f64,
    pub files: Vec<EmittedFile>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let mut c = RunConfig::default();
        c.apply_text("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sigma, 10.0);
        assert_eq!(c.b, 8.0 / 3.0);
    }

    #[test]
    fn comments_and_values() {
        let mut c = RunConfig::default();
        c.apply_text("# header\nsigma = 16  # trailing\n\nseed=7\nout = runs/a\n").unwrap();
        assert_eq!(c.sigma, 16.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.out, PathBuf::from("runs/a"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::default().apply_text("sigma = 10\nrho = 28\n").unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains("rho") && m.contains("line 2")), "{err}");
    }

    #[test]
    fn malformed_value_has_line_number() {
        let err = RunConfig::default().apply_text("\n\nb = two\n").unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains("line 3")), "{err}");
        let err = RunConfig::default().apply_text("just words\n").unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains("line 1")), "{err}");
    }

    #[test]
    fn domain_checks() {
        assert!(RunConfig::default().apply_text("t_max = -5").is_err());
        assert!(RunConfig::default().apply_text("sigma = -1").is_err());
        assert!(RunConfig::default().apply_text("tol_rel = 2").is_err());
        assert!(RunConfig::default().apply_text("budget = 0").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig {
            sigma: 16.0,
            b: 4.0,
            seed: 3,
            ..Default::default()
        };
        c.tol_rel = 1e-9;
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn load_missing_file_fails() {
        assert!(load_config(Path::new("/nonexistent/lorenz.conf")).is_err());
    }
}

//! Experiment configuration: named scenarios with flat key=value settings.
//!
//! Settings come from (in increasing precedence) per-scenario defaults, an
//! optional config file of `key = value` lines, command-line `--key=value`
//! overrides, and the `MISSPEC_SEED` environment variable for the seed.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Named end-to-end experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Sweep N for the unequal-first-variance Gaussian mean pair; the
    /// first-sample estimator beats the sandwich bound.
    Box1,
    /// Same sweep with the projected bound and the oracle estimator added.
    Box2,
    /// Proportional-noise pair where the sandwich and projected bounds match.
    Box3,
    /// Pointwise-equivalent-family property checks for both g-functions.
    Box4,
    /// Single-source direction finding versus noise correlation.
    DoaSweep,
    /// Randomized bound-ordering property over random covariance problems.
    RandomOrderCheck,
}

impl Scenario {
    /// All scenario names, in documentation order.
    pub const ALL: [&'static str; 6] =
        ["box1", "box2", "box3", "box4", "doa_sweep", "random_order_check"];

    /// The scenario's command-line name.
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Box1 => "box1",
            Scenario::Box2 => "box2",
            Scenario::Box3 => "box3",
            Scenario::Box4 => "box4",
            Scenario::DoaSweep => "doa_sweep",
            Scenario::RandomOrderCheck => "random_order_check",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box1" => Ok(Scenario::Box1),
            "box2" => Ok(Scenario::Box2),
            "box3" => Ok(Scenario::Box3),
            "box4" => Ok(Scenario::Box4),
            "doa_sweep" => Ok(Scenario::DoaSweep),
            "random_order_check" => Ok(Scenario::RandomOrderCheck),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected one of {})",
                Scenario::ALL.join(", ")
            ))),
        }
    }
}

/// Fully resolved settings for one scenario run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Sample count for single-point scenarios (box3, box4).
    pub n: usize,
    /// Inclusive sample-count sweep for box1/box2 (`n_min`, `n_max`).
    pub n_min: usize,
    pub n_max: usize,
    /// Assumed (white) noise variance.
    pub sigma2: f64,
    /// First-sample variance for the box1/box2 pair.
    pub epsilon: f64,
    /// True and assumed variances for the proportional pair (box3).
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    /// Scalar true mean for the Gaussian mean pairs.
    pub theta0: f64,
    /// Sensor count for the direction-finding sweep.
    pub m: usize,
    /// Noise correlation sweep values, each in `[0, 1)`.
    pub rho: Vec<f64>,
    /// Complex source amplitude and arrival angle (radians).
    pub s_re: f64,
    pub s_im: f64,
    pub phi: f64,
    /// Random problem count for the order-check scenario.
    pub n_cases: usize,
    /// Estimator trials per sweep point.
    pub n_trials: usize,
    /// Monte Carlo samples for expectation estimates.
    pub mc_samples: usize,
    /// Standard-error multiplier for statistical assertions.
    pub z_threshold: f64,
    pub seed: u64,
    /// Directory for CSV output; no files are written when unset.
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Per-scenario defaults.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let mut cfg = ExperimentConfig {
            scenario,
            n: 10,
            n_min: 2,
            n_max: 60,
            sigma2: 1.0,
            epsilon: 0.05,
            sigma1_sq: 2.0,
            sigma2_sq: 1.0,
            theta0: 1.0,
            m: 8,
            rho: (0..10).map(|k| k as f64 / 10.0).collect(),
            s_re: FRAC_PI_4.cos(),
            s_im: FRAC_PI_4.sin(),
            phi: FRAC_PI_8,
            n_cases: 100,
            n_trials: 2000,
            mc_samples: 100_000,
            z_threshold: 5.0,
            seed: 7,
            output_dir: None,
        };
        match scenario {
            Scenario::Box3 => cfg.n = 5,
            Scenario::Box4 => {
                cfg.n = 4;
                cfg.epsilon = 0.1;
            }
            Scenario::DoaSweep => {
                cfg.sigma2 = 0.1;
                cfg.n_trials = 10_000;
            }
            _ => {}
        }
        cfg
    }

    /// Loads defaults, then the optional config file, then the command-line
    /// overrides, then the `MISSPEC_SEED` environment variable.
    pub fn resolve(
        scenario: Scenario,
        config_file: Option<&std::path::Path>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut cfg = Self::for_scenario(scenario);
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)?;
            for (key, value) in parse_key_values(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        if let Ok(seed) = std::env::var("MISSPEC_SEED") {
            cfg.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("MISSPEC_SEED is not an integer: {seed}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("invalid {what} for '{key}': {value}"));
        macro_rules! num {
            ($field:ident, $what:expr) => {{
                self.$field = value.parse().map_err(|_| bad($what))?;
            }};
        }
        match key {
            "n" => num!(n, "integer"),
            "n_min" => num!(n_min, "integer"),
            "n_max" => num!(n_max, "integer"),
            "sigma2" => num!(sigma2, "number"),
            "epsilon" => num!(epsilon, "number"),
            "sigma1_sq" => num!(sigma1_sq, "number"),
            "sigma2_sq" => num!(sigma2_sq, "number"),
            "theta0" => num!(theta0, "number"),
            "m" => num!(m, "integer"),
            "s_re" => num!(s_re, "number"),
            "s_im" => num!(s_im, "number"),
            "phi" => num!(phi, "number"),
            "n_cases" => num!(n_cases, "integer"),
            "n_trials" => num!(n_trials, "integer"),
            "mc_samples" => num!(mc_samples, "integer"),
            "z_threshold" => num!(z_threshold, "number"),
            "seed" => num!(seed, "integer"),
            "rho" => {
                self.rho = value
                    .split(',')
                    .map(|p| p.trim().parse().map_err(|_| bad("number list")))
                    .collect::<Result<Vec<f64>>>()?;
            }
            "out" | "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Checks variance positivity, correlation range, and trial floors.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma2", self.sigma2),
            ("epsilon", self.epsilon),
            ("sigma1_sq", self.sigma1_sq),
            ("sigma2_sq", self.sigma2_sq),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.rho.is_empty() || self.rho.iter().any(|&r| !(0.0..1.0).contains(&r)) {
            return Err(Error::Config("rho values must satisfy 0 <= rho < 1".into()));
        }
        if self.n_trials < 100 {
            return Err(Error::Config(format!(
                "n_trials must be >= 100, got {}",
                self.n_trials
            )));
        }
        if self.n < 2 || self.n_min < 2 || self.n_max < self.n_min {
            return Err(Error::Config("sample counts must satisfy 2 <= n_min <= n_max".into()));
        }
        if self.m < 2 {
            return Err(Error::Config("m must be >= 2".into()));
        }
        if self.mc_samples < 100 {
            return Err(Error::Config("mc_samples must be >= 100".into()));
        }
        if self.n_cases < 1 {
            return Err(Error::Config("n_cases must be >= 1".into()));
        }
        if !(self.z_threshold > 0.0) {
            return Err(Error::Config("z_threshold must be > 0".into()));
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Later duplicates win, matching override semantics.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: BTreeMap<usize, (String, String)> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        out.insert(lineno, (key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out.into_values().collect())
}

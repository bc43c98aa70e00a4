//! Flat `key = value` run configuration.
//!
//! Every key has a fixed type and range; unknown keys, duplicates and
//! out-of-range values are rejected when a file is read. Values are stored in
//! canonical form, so writing a parsed file and reading it back is a no-op.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::CliError;

#[derive(Clone, Copy, Debug)]
enum Kind {
    Choice(&'static [&'static str]),
    /// `>= 1`.
    Count,
    Seed,
    Positive,
    NonNegative,
    Real,
    /// `[lo, hi]`.
    Closed(f64, f64),
    /// `(lo, hi]`.
    OpenClosed(f64, f64),
    List(&'static Kind),
}

const ETA_RANGE: Kind = Kind::Closed(0.0, 20.0);
const ZETA_RANGE: Kind = Kind::OpenClosed(0.25, 20.0);

const KEYS: &[(&str, Kind)] = &[
    ("admm_max_iters", Kind::Count),
    ("admm_tol", Kind::Positive),
    ("alpha", Kind::NonNegative),
    ("alpha_per_m", Kind::NonNegative),
    ("acq_subsample", Kind::OpenClosed(0.0, 1.0)),
    ("bg", Kind::NonNegative),
    ("bin_width_ps", Kind::Positive),
    ("bins", Kind::Count),
    ("c1", Kind::Positive),
    ("cols", Kind::Count),
    ("delta", Kind::Positive),
    ("depth", Kind::NonNegative),
    ("distance_m", Kind::NonNegative),
    ("eta", ETA_RANGE),
    ("eta0", ETA_RANGE),
    ("eta_grid", Kind::List(&ETA_RANGE)),
    ("gate_first", Kind::Count),
    ("gate_last", Kind::Count),
    ("initial_step", Kind::Positive),
    ("irf_center", Kind::Real),
    ("method", Kind::Choice(&["xcorr", "cda", "mcmc"])),
    ("mu", Kind::Positive),
    ("n_bi", Kind::Count),
    ("n_max", Kind::Count),
    ("n_mc", Kind::Count),
    ("refl", Kind::NonNegative),
    ("refractive_index", Kind::Positive),
    ("rows", Kind::Count),
    ("scene", Kind::Choice(&["v-b", "flat"])),
    ("seed", Kind::Seed),
    ("sigma2", Kind::Positive),
    ("zeta", ZETA_RANGE),
    ("zeta0", ZETA_RANGE),
    ("zeta_grid", Kind::List(&ZETA_RANGE)),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

fn canonical(kind: Kind, raw: &str) -> Result<String, String> {
    let real = |raw: &str| -> Result<f64, String> {
        let v: f64 = raw.parse().map_err(|_| format!("'{raw}' is not a number"))?;
        if !v.is_finite() {
            return Err(format!("'{raw}' is not finite"));
        }
        Ok(v)
    };
    match kind {
        Kind::Choice(options) => options
            .iter()
            .find(|o| **o == raw)
            .map(|o| o.to_string())
            .ok_or_else(|| format!("'{raw}' is not one of {}", options.join("|"))),
        Kind::Count => match raw.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v.to_string()),
            _ => Err(format!("'{raw}' is not a positive integer")),
        },
        Kind::Seed => raw
            .parse::<u64>()
            .map(|v| v.to_string())
            .map_err(|_| format!("'{raw}' is not an unsigned integer")),
        Kind::Positive => match real(raw)? {
            v if v > 0.0 => Ok(v.to_string()),
            v => Err(format!("{v} must be positive")),
        },
        Kind::NonNegative => match real(raw)? {
            v if v >= 0.0 => Ok(v.to_string()),
            v => Err(format!("{v} must be nonnegative")),
        },
        Kind::Real => real(raw).map(|v| v.to_string()),
        Kind::Closed(lo, hi) => match real(raw)? {
            v if (lo..=hi).contains(&v) => Ok(v.to_string()),
            v => Err(format!("{v} is outside [{lo}, {hi}]")),
        },
        Kind::OpenClosed(lo, hi) => match real(raw)? {
            v if v > lo && v <= hi => Ok(v.to_string()),
            v => Err(format!("{v} is outside ({lo}, {hi}]")),
        },
        Kind::List(item) => {
            let parts: Result<Vec<String>, String> =
                raw.split(',').map(|p| canonical(*item, p.trim())).collect();
            let parts = parts?;
            if parts.is_empty() {
                return Err("empty list".into());
            }
            Ok(parts.join(","))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return Err(CliError::config(format!("line {}: duplicate key '{key}'", n + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| CliError::config(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Sets `key` after validating `value`; replaces any previous value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let kind = kind_of(key).ok_or_else(|| CliError::config(format!("unknown key '{key}'")))?;
        let v = canonical(kind, value).map_err(|e| CliError::config(format!("{key}: {e}")))?;
        self.values.insert(key.to_string(), v);
        Ok(())
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> Result<(), CliError> {
        match value {
            Some(v) => self.set(key, &v.to_string()),
            None => Ok(()),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.values.get(key).map(String::as_str).unwrap_or(default)
    }

    // Values were validated on insertion, so parsing cannot fail here.
    pub fn f64_or(&self, key: &str, default: f64) -> f64 {
        self.values.get(key).map_or(default, |v| v.parse().expect("validated"))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> usize {
        self.values.get(key).map_or(default, |v| v.parse().expect("validated"))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> u64 {
        self.values.get(key).map_or(default, |v| v.parse().expect("validated"))
    }

    pub fn list(&self, key: &str) -> Option<Vec<f64>> {
        self.values
            .get(key)
            .map(|v| v.split(',').map(|p| p.parse().expect("validated")).collect())
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

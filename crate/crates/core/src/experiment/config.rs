//! `key = value` experiment configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::em::{BaselineMode, EmConfig};
use crate::signal::DEFAULT_D_OVER_LAMBDA;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    /// 1-based line of the offending entry, if there is one.
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }

    fn global(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    EmEp,
    EmEpB,
    EmEpNoGr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::EmEp, Algorithm::EmEpB, Algorithm::EmEpNoGr];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::EmEp => "em_ep",
            Algorithm::EmEpB => "em_ep_b",
            Algorithm::EmEpNoGr => "em_ep_no_gr",
        }
    }

    /// Estimator settings for this variant on top of `base`.
    pub fn em_config(self, base: &EmConfig) -> EmConfig {
        match self {
            Algorithm::EmEp => EmConfig { baseline_mode: BaselineMode::Markov, ..base.clone() },
            Algorithm::EmEpB => EmConfig { baseline_mode: BaselineMode::IidBernoulli, ..base.clone() },
            Algorithm::EmEpNoGr => {
                EmConfig { baseline_mode: BaselineMode::Markov, grid_refinement: false, ..base.clone() }
            }
        }
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm '{s}' (expected em_ep, em_ep_b or em_ep_no_gr)"))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    SnrDb,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N => "N",
            SweepAxis::SnrDb => "snr_db",
        }
    }
}

/// One point of the sweep: the pilot length and SNR it runs at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub g: usize,
    pub m: usize,
    pub n: Vec<usize>,
    pub l_s: usize,
    pub l_p: usize,
    pub a_degrees: f64,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub output_path: Option<PathBuf>,
    pub d_over_lambda: f64,
    pub em: EmConfig,
    /// Fill the `wall_ms` column. Off by default so reruns are byte-identical.
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn sweep_axis(&self) -> SweepAxis {
        if self.n.len() > 1 {
            SweepAxis::N
        } else {
            SweepAxis::SnrDb
        }
    }

    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        match self.sweep_axis() {
            SweepAxis::N => self.n.iter().map(|&n| SweepPoint { n, snr_db: self.snr_db[0] }).collect(),
            SweepAxis::SnrDb => self.snr_db.iter().map(|&s| SweepPoint { n: self.n[0], snr_db: s }).collect(),
        }
    }

    /// Value of the swept quantity at `point`.
    pub fn sweep_value(&self, point: &SweepPoint) -> f64 {
        match self.sweep_axis() {
            SweepAxis::N => point.n as f64,
            SweepAxis::SnrDb => point.snr_db,
        }
    }

    /// Checks cross-field invariants; `parse_config` calls this.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError::global(m));
        if self.g == 0 {
            return err("G must be at least 1");
        }
        if self.m < 2 {
            return err("M must be at least 2");
        }
        if self.n.is_empty() || self.snr_db.is_empty() {
            return err("sweep lists must be non-empty");
        }
        if self.n.len() > 1 && self.snr_db.len() > 1 {
            return err("exactly one of N and snr_db may be a list");
        }
        if self.n.contains(&0) {
            return err("N must be at least 1");
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return err("snr_db must be a number");
        }
        if self.l_s == 0 || self.l_p == 0 {
            return err("L_s and L_p must be at least 1");
        }
        if !(self.a_degrees >= 0.0 && self.a_degrees < 180.0) {
            return err("A_degrees must lie in [0, 180)");
        }
        if self.trials == 0 {
            return err("trials must be at least 1");
        }
        if self.algorithms.is_empty() {
            return err("algorithms must name at least one estimator");
        }
        if !(self.d_over_lambda > 0.0 && self.d_over_lambda.is_finite()) {
            return err("d_over_lambda must be positive");
        }
        self.em.validate().map_err(|e| ConfigError::global(e.to_string()))
    }
}

const REQUIRED: [&str; 7] = ["G", "M", "N", "L_s", "L_p", "A_degrees", "snr_db"];
const OPTIONAL: [&str; 14] = [
    "trials",
    "seed",
    "algorithms",
    "output_path",
    "d_over_lambda",
    "n_em",
    "n_ep",
    "eps_em",
    "eps_ep",
    "lambda0",
    "tau01_0",
    "snr0",
    "record_timing",
    "grid_refinement",
];

fn parse_scalar<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::at(line, format!("malformed value '{raw}' for {key}")))
}

fn parse_list<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>, ConfigError> {
    let items: Vec<&str> = raw.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::at(line, format!("empty entry in list for {key}")));
    }
    items.into_iter().map(|s| parse_scalar(line, key, s)).collect()
}

fn parse_bool(line: usize, key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::at(line, format!("malformed boolean '{raw}' for {key}"))),
    }
}

/// Parses a configuration. Blank lines and `#` comments are ignored; list
/// values are comma separated.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, format!("expected 'key = value', got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
            return Err(ConfigError::at(line, format!("unknown key '{key}'")));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line, format!("missing value for {key}")));
        }
        if let Some((first, _)) = entries.insert(key, (line, value)) {
            return Err(ConfigError::at(line, format!("duplicate key '{key}' (first set on line {first})")));
        }
    }
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !entries.contains_key(k)).collect();
    if !missing.is_empty() {
        return Err(ConfigError::global(format!("missing required keys: {}", missing.join(", "))));
    }

    let scalar = |key: &str| entries[key];
    let (l, v) = scalar("G");
    let g = parse_scalar(l, "G", v)?;
    let (l, v) = scalar("M");
    let m = parse_scalar(l, "M", v)?;
    let (l, v) = scalar("N");
    let n = parse_list(l, "N", v)?;
    let (l, v) = scalar("L_s");
    let l_s = parse_scalar(l, "L_s", v)?;
    let (l, v) = scalar("L_p");
    let l_p = parse_scalar(l, "L_p", v)?;
    let (l, v) = scalar("A_degrees");
    let a_degrees = parse_scalar(l, "A_degrees", v)?;
    let (l, v) = scalar("snr_db");
    let snr_db = parse_list(l, "snr_db", v)?;

    let mut cfg = ExperimentConfig {
        g,
        m,
        n,
        l_s,
        l_p,
        a_degrees,
        snr_db,
        trials: 1,
        seed: 0,
        algorithms: vec![Algorithm::EmEp],
        output_path: None,
        d_over_lambda: DEFAULT_D_OVER_LAMBDA,
        em: EmConfig::default(),
        record_timing: false,
    };
    for (&key, &(l, v)) in &entries {
        match key {
            "trials" => cfg.trials = parse_scalar(l, key, v)?,
            "seed" => cfg.seed = parse_scalar(l, key, v)?,
            "algorithms" => {
                let mut algs: Vec<Algorithm> =
                    parse_list::<String>(l, key, v)?.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(|e| ConfigError::at(l, e))?;
                let before = algs.len();
                algs.sort();
                algs.dedup();
                if algs.len() != before {
                    return Err(ConfigError::at(l, "algorithm listed twice"));
                }
                cfg.algorithms = algs;
            }
            "output_path" => cfg.output_path = Some(PathBuf::from(v)),
            "d_over_lambda" => cfg.d_over_lambda = parse_scalar(l, key, v)?,
            "n_em" => cfg.em.n_em = parse_scalar(l, key, v)?,
            "n_ep" => cfg.em.n_ep = parse_scalar(l, key, v)?,
            "eps_em" => cfg.em.eps_em = parse_scalar(l, key, v)?,
            "eps_ep" => cfg.em.eps_ep = parse_scalar(l, key, v)?,
            "lambda0" => cfg.em.lambda0 = parse_scalar(l, key, v)?,
            // The seed transition probability the other one is derived from
            // through lambda0; see `EmConfig::tau10_0`.
            "tau01_0" => cfg.em.tau10_0 = parse_scalar(l, key, v)?,
            "snr0" => cfg.em.snr0 = parse_scalar(l, key, v)?,
            "record_timing" => cfg.record_timing = parse_bool(l, key, v)?,
            "grid_refinement" => cfg.em.grid_refinement = parse_bool(l, key, v)?,
            _ => {}
        }
    }
    cfg.validate().map_err(|e| match e.line {
        Some(_) => e,
        None => {
            // Point cross-field errors at the most relevant line when we can.
            let hint = ["N", "snr_db"].iter().filter_map(|k| entries.get(k).map(|(l, _)| *l)).max();
            if e.message.contains("exactly one") {
                ConfigError { line: hint, message: e.message }
            } else {
                e
            }
        }
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "G = 128\nM = 200\nN = 48\nL_s = 3\nL_p = 10\nA_degrees = 10\nsnr_db = 10\n";

    #[test]
    fn reference_setup_parses() {
        let cfg = parse_config(BASE).unwrap();
        assert_eq!((cfg.g, cfg.m, cfg.n.as_slice()), (128, 200, &[48][..]));
        assert_eq!(cfg.em, EmConfig::default());
        assert_eq!(cfg.sweep_axis(), SweepAxis::SnrDb);
        assert_eq!(cfg.sweep_points().len(), 1);
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let e = parse_config("").unwrap_err();
        for k in REQUIRED {
            assert!(e.message.contains(k), "{e}");
        }
    }

    #[test]
    fn snr_list_is_a_sweep() {
        let text = BASE.replace("snr_db = 10", "snr_db = 0,5,10,15");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.sweep_points().len(), 4);
        assert_eq!(cfg.sweep_points()[3].snr_db, 15.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config(&format!("{BASE}bogus = 1\n")).unwrap_err();
        assert_eq!(e.line, Some(8));
        let e = parse_config(&BASE.replace("M = 200", "M = two hundred")).unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse_config(&format!("{BASE}G = 4\n")).unwrap_err();
        assert_eq!(e.line, Some(8));
        assert!(e.to_string().starts_with("line 8:"));
    }

    #[test]
    fn two_swept_axes_rejected() {
        let text = BASE.replace("N = 48", "N = 16,32").replace("snr_db = 10", "snr_db = 0,5");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn optional_keys_override_defaults() {
        let text = format!(
            "{BASE}trials = 7\nseed = 99\nalgorithms = em_ep_b, em_ep\nn_em = 5\ntau01_0 = 0.2\nrecord_timing = true # comment\n"
        );
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.trials, 7);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.algorithms, vec![Algorithm::EmEp, Algorithm::EmEpB]);
        assert_eq!(cfg.em.n_em, 5);
        assert_eq!(cfg.em.tau10_0, 0.2);
        assert!(cfg.record_timing);
    }
}

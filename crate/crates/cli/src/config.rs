//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored, every key may appear once, and
//! unknown keys are rejected. [`ExperimentConfig::echo`] writes the effective
//! configuration back out in a form that [`parse_config`] reads to an equal
//! value.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gebit_core::{FitOptions, Period, Threshold, Weighting};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given more than once")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{key}` {constraint} (got `{value}`)")]
    Invalid {
        key: &'static str,
        constraint: &'static str,
        value: String,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Iterate,
    Maximize,
    Fit,
    Sweep,
    Emerge,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Iterate, Mode::Maximize, Mode::Fit, Mode::Sweep, Mode::Emerge];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Iterate => "iterate",
            Mode::Maximize => "maximize",
            Mode::Fit => "fit",
            Mode::Sweep => "sweep",
            Mode::Emerge => "emerge",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or(())
    }
}

/// Shortest of the plain and scientific renderings; both round-trip.
fn number(x: f64) -> String {
    let plain = x.to_string();
    let sci = format!("{x:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

fn weighting_name(w: Weighting) -> &'static str {
    match w {
        Weighting::Counts => "counts",
        Weighting::Uniform => "uniform",
    }
}

fn period_name(p: Period) -> &'static str {
    match p {
        Period::Auto => "auto",
        Period::Closed => "closed",
        Period::Open => "open",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,

    /// Tree node count `N` for maximize and sweep.
    pub n: u64,
    pub p: f64,
    pub depth_min: usize,
    pub depth_max: usize,
    pub p_grid: Vec<f64>,
    /// Largest `N` checked against full enumeration in maximize mode.
    pub oracle_cap: u64,

    pub nodes: usize,
    pub alpha: f64,
    pub steps: usize,
    pub start_scale: f64,
    pub sigma_floor_ratio: f64,
    pub background_sigma: f64,
    pub rare_prob: f64,
    pub rare_lo: f64,
    pub rare_hi: f64,
    pub record_every: usize,
    pub record_matrices: bool,

    /// Absolute `|B_ij|` cut, unless `link_quantile` is set.
    pub link_threshold: f64,
    pub link_quantile: Option<f64>,
    pub jaccard_threshold: f64,
    pub root_samples: usize,

    /// Shell profile read by fit mode.
    pub profile: Option<PathBuf>,
    pub trim_floor: f64,
    pub weighting: Weighting,
    pub period: Period,

    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            seed: 0,
            n: 5000,
            p: 1e-6,
            depth_min: 2,
            depth_max: 120,
            p_grid: vec![1e-7, 1e-6, 1e-5, 1e-4, 1e-3],
            oracle_cap: 12,
            nodes: 100,
            alpha: 0.1,
            steps: 100,
            start_scale: 1e-6,
            sigma_floor_ratio: 1e-8,
            background_sigma: 0.01,
            rare_prob: 1e-3,
            rare_lo: 1.0,
            rare_hi: 2.0,
            record_every: 10,
            record_matrices: false,
            link_threshold: 0.5,
            link_quantile: None,
            jaccard_threshold: 0.5,
            root_samples: 32,
            profile: None,
            trim_floor: 1.0,
            weighting: Weighting::Counts,
            period: Period::Auto,
            out: PathBuf::from("results"),
        }
    }

    pub fn threshold(&self) -> Threshold {
        match self.link_quantile {
            Some(q) => Threshold::TopQuantile(q),
            None => Threshold::Absolute(self.link_threshold),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            weighting: self.weighting,
            period: self.period,
            floor: self.trim_floor,
        }
    }

    /// Depth range clamped to what `N` allows.
    pub fn depth_range(&self, n: u64) -> gebit_core::DepthRange {
        let top = (n.saturating_sub(1).max(1)) as usize;
        let max = self.depth_max.min(top);
        gebit_core::DepthRange::new(self.depth_min.min(max), max)
    }

    /// Every key with its effective value, in a fixed order. Optional keys
    /// are left out when unset.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let grid: Vec<String> = self.p_grid.iter().map(|&p| number(p)).collect();
        let mut pairs = vec![
            ("mode", self.mode.to_string()),
            ("seed", self.seed.to_string()),
            ("N", self.n.to_string()),
            ("p", number(self.p)),
            ("depth_min", self.depth_min.to_string()),
            ("depth_max", self.depth_max.to_string()),
            ("p_grid", grid.join(", ")),
            ("oracle_cap", self.oracle_cap.to_string()),
            ("nodes", self.nodes.to_string()),
            ("alpha", number(self.alpha)),
            ("steps", self.steps.to_string()),
            ("start_scale", number(self.start_scale)),
            ("sigma_floor_ratio", number(self.sigma_floor_ratio)),
            ("background_sigma", number(self.background_sigma)),
            ("rare_prob", number(self.rare_prob)),
            ("rare_lo", number(self.rare_lo)),
            ("rare_hi", number(self.rare_hi)),
            ("record_every", self.record_every.to_string()),
            ("record_matrices", self.record_matrices.to_string()),
            ("link_threshold", number(self.link_threshold)),
        ];
        if let Some(q) = self.link_quantile {
            pairs.push(("link_quantile", number(q)));
        }
        pairs.push(("jaccard_threshold", number(self.jaccard_threshold)));
        pairs.push(("root_samples", self.root_samples.to_string()));
        if let Some(path) = &self.profile {
            pairs.push(("profile", path.display().to_string()));
        }
        pairs.push(("trim_floor", number(self.trim_floor)));
        pairs.push(("weighting", weighting_name(self.weighting).to_string()));
        pairs.push(("period", period_name(self.period).to_string()));
        pairs.push(("out", self.out.display().to_string()));
        pairs
    }

    /// Effective configuration as config-file text.
    pub fn echo(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Builds a config from already split pairs, as found in a report's
    /// config block. Relative paths are taken as they are.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let lines = pairs.into_iter().enumerate().map(|(i, (k, v))| (i + 1, k, v));
        build(lines, None)
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &'static str, constraint: &'static str, value: impl fmt::Display) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(invalid(key, constraint, &value.to_string()))
            }
        }
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        check(self.n >= 2, "N", "must be at least 2", self.n)?;
        check(open_unit(self.p), "p", "must lie in (0, 1)", self.p)?;
        check(self.depth_min >= 1, "depth_min", "must be at least 1", self.depth_min)?;
        check(self.depth_max >= self.depth_min, "depth_max", "must be >= depth_min", self.depth_max)?;
        check(!self.p_grid.is_empty(), "p_grid", "must list at least one value", "")?;
        for &p in &self.p_grid {
            check(open_unit(p), "p_grid", "values must lie in (0, 1)", p)?;
        }
        check(
            (2..=24).contains(&self.oracle_cap),
            "oracle_cap",
            "must lie in [2, 24]",
            self.oracle_cap,
        )?;
        check(
            self.nodes >= 2 && self.nodes.is_multiple_of(2),
            "nodes",
            "must be even and at least 2",
            self.nodes,
        )?;
        check(self.alpha.is_finite() && self.alpha > 0.0, "alpha", "must be finite and > 0", self.alpha)?;
        check(
            self.start_scale.is_finite() && self.start_scale > 0.0,
            "start_scale",
            "must be finite and > 0",
            self.start_scale,
        )?;
        check(
            open_unit(self.sigma_floor_ratio),
            "sigma_floor_ratio",
            "must lie in (0, 1)",
            self.sigma_floor_ratio,
        )?;
        check(
            self.background_sigma.is_finite() && self.background_sigma >= 0.0,
            "background_sigma",
            "must be finite and >= 0",
            self.background_sigma,
        )?;
        check(
            (0.0..=1.0).contains(&self.rare_prob),
            "rare_prob",
            "must lie in [0, 1]",
            self.rare_prob,
        )?;
        check(
            self.rare_lo.is_finite() && self.rare_lo > 0.0,
            "rare_lo",
            "must be finite and > 0",
            self.rare_lo,
        )?;
        check(
            self.rare_hi.is_finite() && self.rare_hi >= self.rare_lo,
            "rare_hi",
            "must be finite and >= rare_lo",
            self.rare_hi,
        )?;
        check(
            self.link_threshold.is_finite() && self.link_threshold >= 0.0,
            "link_threshold",
            "must be finite and >= 0",
            self.link_threshold,
        )?;
        if let Some(q) = self.link_quantile {
            check(q > 0.0 && q <= 1.0, "link_quantile", "must lie in (0, 1]", q)?;
        }
        check(
            self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0,
            "jaccard_threshold",
            "must lie in (0, 1]",
            self.jaccard_threshold,
        )?;
        check(self.root_samples >= 1, "root_samples", "must be at least 1", self.root_samples)?;
        check(
            self.trim_floor.is_finite() && self.trim_floor >= 0.0,
            "trim_floor",
            "must be finite and >= 0",
            self.trim_floor,
        )?;
        if self.mode == Mode::Fit && self.profile.is_none() {
            return Err(ConfigError::Missing("profile"));
        }
        Ok(())
    }
}

fn invalid(key: &'static str, constraint: &'static str, raw: &str) -> ConfigError {
    ConfigError::Invalid {
        key,
        constraint,
        value: raw.to_string(),
    }
}

fn parse_value<T: FromStr>(key: &'static str, raw: &str, constraint: &'static str) -> Result<T> {
    raw.parse().map_err(|_| invalid(key, constraint, raw))
}

const KEYS: [&str; 28] = [
    "mode",
    "seed",
    "N",
    "p",
    "depth_min",
    "depth_max",
    "p_grid",
    "oracle_cap",
    "nodes",
    "alpha",
    "steps",
    "start_scale",
    "sigma_floor_ratio",
    "background_sigma",
    "rare_prob",
    "rare_lo",
    "rare_hi",
    "record_every",
    "record_matrices",
    "link_threshold",
    "link_quantile",
    "jaccard_threshold",
    "root_samples",
    "profile",
    "trim_floor",
    "weighting",
    "period",
    "out",
];

fn apply(config: &mut ExperimentConfig, key: &'static str, raw: &str, base: Option<&Path>) -> Result<()> {
    const FLOAT: &str = "must be a number";
    const UINT: &str = "must be a non-negative integer";
    let resolve = |raw: &str| {
        let path = PathBuf::from(raw);
        match base {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path,
        }
    };
    match key {
        "mode" => config.mode = parse_value(key, raw, "must be one of iterate, maximize, fit, sweep, emerge")?,
        "seed" => config.seed = parse_value(key, raw, UINT)?,
        "N" => config.n = parse_value(key, raw, UINT)?,
        "p" => config.p = parse_value(key, raw, FLOAT)?,
        "depth_min" => config.depth_min = parse_value(key, raw, UINT)?,
        "depth_max" => config.depth_max = parse_value(key, raw, UINT)?,
        "p_grid" => {
            config.p_grid = raw
                .split(',')
                .map(|v| parse_value(key, v.trim(), "must be a comma-separated list of numbers"))
                .collect::<Result<_>>()?
        }
        "oracle_cap" => config.oracle_cap = parse_value(key, raw, UINT)?,
        "nodes" => config.nodes = parse_value(key, raw, UINT)?,
        "alpha" => config.alpha = parse_value(key, raw, FLOAT)?,
        "steps" => config.steps = parse_value(key, raw, UINT)?,
        "start_scale" => config.start_scale = parse_value(key, raw, FLOAT)?,
        "sigma_floor_ratio" => config.sigma_floor_ratio = parse_value(key, raw, FLOAT)?,
        "background_sigma" => config.background_sigma = parse_value(key, raw, FLOAT)?,
        "rare_prob" => config.rare_prob = parse_value(key, raw, FLOAT)?,
        "rare_lo" => config.rare_lo = parse_value(key, raw, FLOAT)?,
        "rare_hi" => config.rare_hi = parse_value(key, raw, FLOAT)?,
        "record_every" => config.record_every = parse_value(key, raw, UINT)?,
        "record_matrices" => config.record_matrices = parse_value(key, raw, "must be true or false")?,
        "link_threshold" => config.link_threshold = parse_value(key, raw, FLOAT)?,
        "link_quantile" => config.link_quantile = Some(parse_value(key, raw, FLOAT)?),
        "jaccard_threshold" => config.jaccard_threshold = parse_value(key, raw, FLOAT)?,
        "root_samples" => config.root_samples = parse_value(key, raw, UINT)?,
        "profile" => config.profile = Some(resolve(raw)),
        "trim_floor" => config.trim_floor = parse_value(key, raw, FLOAT)?,
        "weighting" => {
            config.weighting = match raw {
                "counts" => Weighting::Counts,
                "uniform" => Weighting::Uniform,
                _ => return Err(invalid(key, "must be counts or uniform", raw)),
            }
        }
        "period" => {
            config.period = match raw {
                "auto" => Period::Auto,
                "closed" => Period::Closed,
                "open" => Period::Open,
                _ => return Err(invalid(key, "must be auto, closed or open", raw)),
            }
        }
        "out" => config.out = resolve(raw),
        _ => unreachable!("key table and setter disagree on `{key}`"),
    }
    Ok(())
}

fn build<'a>(lines: impl Iterator<Item = (usize, &'a str, &'a str)>, base: Option<&Path>) -> Result<ExperimentConfig> {
    let mut seen: Vec<(&'static str, &'a str)> = Vec::new();
    for (line, key, value) in lines {
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            })?;
        if seen.iter().any(|(k, _)| k == known) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        seen.push((known, value));
    }
    let mode_raw = seen
        .iter()
        .find(|(k, _)| *k == "mode")
        .map(|(_, v)| *v)
        .ok_or(ConfigError::Missing("mode"))?;
    let mode = parse_value("mode", mode_raw, "must be one of iterate, maximize, fit, sweep, emerge")?;
    let mut config = ExperimentConfig::new(mode);
    if let Some(dir) = base {
        config.out = dir.join(&config.out);
    }
    for (key, value) in seen {
        apply(&mut config, key, value, base)?;
    }
    config.validate()?;
    Ok(config)
}

/// Parses config text. Relative paths are resolved against `base` when given.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ExperimentConfig> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            });
        }
        entries.push((idx + 1, key, value));
    }
    build(entries.into_iter(), base)
}

/// Reads and validates a config file. Relative paths inside it are resolved
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let config = parse_config("mode = maximize\nN = 5000\np = 1e-6\n", None).unwrap();
        assert_eq!(config.mode, Mode::Maximize);
        assert_eq!(config.seed, 0);
        assert_eq!((config.depth_min, config.depth_max), (2, 120));
        assert_eq!(config.depth_range(5000), gebit_core::DepthRange::new(2, 120));
        assert_eq!(config.p, 1e-6);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config("mode = iterate\nalhpa = 0.1\n", None).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { key, line: 2 } if key == "alhpa"));
        assert!(err.to_string().contains("`alhpa`"));
    }

    #[test]
    fn range_errors_name_key_and_constraint() {
        let err = parse_config("mode = iterate\nnodes = 7\n", None).unwrap_err();
        assert_eq!(err.to_string(), "`nodes` must be even and at least 2 (got `7`)");
        let err = parse_config("mode = sweep\np_grid = 1e-6, 2\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key: "p_grid", .. }));
        let err = parse_config("mode = iterate\nalpha = fast\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key: "alpha", constraint: "must be a number", .. }));
        let err = parse_config("mode = fit\n", None).unwrap_err();
        assert!(matches!(err, ConfigError::Missing("profile")));
        assert!(matches!(parse_config("N = 10\n", None), Err(ConfigError::Missing("mode"))));
        assert!(matches!(parse_config("mode = dance\n", None), Err(ConfigError::Invalid { key: "mode", .. })));
    }

    #[test]
    fn syntax_and_duplicates() {
        assert!(matches!(
            parse_config("mode = iterate\nsteps 10\n", None),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("mode = iterate\nsteps = 1\nsteps = 2\n", None),
            Err(ConfigError::DuplicateKey { line: 3, .. })
        ));
        let config = parse_config("# header\n\nmode = iterate   # trailing\n  steps=7\n", None).unwrap();
        assert_eq!(config.steps, 7);
    }

    #[test]
    fn echo_round_trips() {
        let text = "mode = emerge\nseed = 99\nalpha = 0.3\np_grid = 1e-7, 0.001\nlink_quantile = 0.01\n\
                    weighting = uniform\nperiod = closed\nrecord_matrices = true\nprofile = /tmp/x.csv\n";
        let config = parse_config(text, None).unwrap();
        let again = parse_config(&config.echo(), None).unwrap();
        assert_eq!(again, config);
        let pairs = config.pairs();
        let from_pairs = ExperimentConfig::from_pairs(pairs.iter().map(|(k, v)| (*k, v.as_str()))).unwrap();
        assert_eq!(from_pairs, config);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let config = parse_config("mode = fit\nprofile = shells.csv\nout = runs\n", Some(Path::new("/data/exp"))).unwrap();
        assert_eq!(config.profile.as_deref(), Some(Path::new("/data/exp/shells.csv")));
        assert_eq!(config.out, Path::new("/data/exp/runs"));
    }

    #[test]
    fn depth_range_is_clamped_to_the_node_count() {
        let config = ExperimentConfig::new(Mode::Maximize);
        assert_eq!(config.depth_range(10), gebit_core::DepthRange::new(2, 9));
        assert_eq!(config.depth_range(2), gebit_core::DepthRange::new(1, 1));
    }
}

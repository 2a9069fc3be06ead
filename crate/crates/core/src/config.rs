//! One TOML document configures every subcommand: experiment settings at
//! the top level, one table per subcommand for its own knobs.
//!
//! Overrides (`--set tuning.mode="rule"`) are applied to the parsed table
//! before typing, so they go through exactly the same validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, TruthSpec};
use crate::sobolev::DEFAULT_LEVEL;

/// Settings for `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// CSV with a header and a final `y` column; generated from the experiment when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub rep: usize,
}

/// Settings for `seminorm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeminormSection {
    #[serde(default = "default_step")]
    pub function: TruthSpec,
    #[serde(default = "default_order")]
    pub s: f64,
    #[serde(default = "default_level")]
    pub level: u32,
}

/// Settings for `eigen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSection {
    #[serde(default = "default_eigen_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
}

/// Settings for `gridsearch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub rep: usize,
}

/// Settings for `zoo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooSection {
    #[serde(default = "default_points")]
    pub points: usize,
}

/// Averaged fit curve written by `sweep`; off while `n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    #[serde(default)]
    pub n: usize,
    /// Evaluation points at the centers of equal cells across the design.
    #[serde(default = "default_curve_points")]
    pub points: usize,
}

fn default_n() -> usize {
    500
}
fn default_eigen_n() -> usize {
    300
}
fn default_m() -> usize {
    20
}
fn default_step() -> TruthSpec {
    TruthSpec::Named("step".into())
}
fn default_order() -> f64 {
    0.25
}
fn default_level() -> u32 {
    DEFAULT_LEVEL
}
fn default_points() -> usize {
    201
}
fn default_curve_points() -> usize {
    100
}

macro_rules! defaults_from_serde {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("every field has a default")
            }
        }
    )*};
}
defaults_from_serde!(FitSection, SeminormSection, EigenSection, GridSection, ZooSection, CurveSection);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub experiment: ExperimentConfig,
    pub fit: FitSection,
    pub seminorm: SeminormSection,
    pub eigen: EigenSection,
    pub gridsearch: GridSection,
    pub zoo: ZooSection,
    pub curve: CurveSection,
}

/// Name of the echo written next to every run's outputs.
pub const ECHO_FILE: &str = "effective_config.toml";

impl Config {
    /// Read a config file (or start from defaults) and apply `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            Error::Config {
                key: "<syntax>".into(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        // grid search is the default tuning mode, also for partial tables
        if let Some(toml::Value::Table(t)) = table.get_mut("tuning") {
            t.entry("mode").or_insert_with(|| toml::Value::String("grid".into()));
        }
        let cfg = Self::from_table(table).map_err(|e| with_line(e, text))?;
        cfg.validate().map_err(|e| with_line(e, text))?;
        Ok(cfg)
    }

    fn from_table(mut table: toml::Table) -> Result<Self> {
        fn section<T: for<'de> Deserialize<'de> + Default>(table: &mut toml::Table, name: &str) -> Result<T> {
            match table.remove(name) {
                None => Ok(T::default()),
                Some(v) => T::deserialize(v).map_err(|e| typed_error(name, &e.to_string())),
            }
        }
        let fit = section(&mut table, "fit")?;
        let seminorm = section(&mut table, "seminorm")?;
        let eigen = section(&mut table, "eigen")?;
        let gridsearch = section(&mut table, "gridsearch")?;
        let zoo = section(&mut table, "zoo")?;
        let curve = section(&mut table, "curve")?;
        let experiment = ExperimentConfig::deserialize(toml::Value::Table(table))
            .map_err(|e| typed_error("", &e.to_string()))?;
        Ok(Config {
            experiment,
            fit,
            seminorm,
            eigen,
            gridsearch,
            zoo,
            curve,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        let bad = |key: &str, message: &str| Error::Config {
            key: key.into(),
            line: None,
            message: message.into(),
        };
        if self.fit.n < 2 {
            return Err(bad("fit.n", "fit.n must be at least 2"));
        }
        if self.gridsearch.n < 2 {
            return Err(bad("gridsearch.n", "gridsearch.n must be at least 2"));
        }
        if self.eigen.m == 0 || self.eigen.m > self.eigen.n {
            return Err(bad("eigen.m", "eigen.m must lie in 1..=eigen.n"));
        }
        if !(self.seminorm.s > 0.0 && self.seminorm.s < 1.0) {
            return Err(bad("seminorm.s", "s must lie in (0,1)"));
        }
        if !(crate::sobolev::MIN_LEVEL..=20).contains(&self.seminorm.level) {
            return Err(bad("seminorm.level", "level must lie in 7..=20"));
        }
        self.seminorm
            .function
            .resolve()
            .map_err(|e| bad("seminorm.function", &e.to_string()))?;
        if self.zoo.points < 2 {
            return Err(bad("zoo.points", "zoo.points must be at least 2"));
        }
        if self.curve.points == 0 {
            return Err(bad("curve.points", "curve.points must be at least 1"));
        }
        Ok(())
    }

    /// The effective configuration as TOML; parsing it back gives `self`.
    pub fn to_toml(&self) -> Result<String> {
        let ser = |e: toml::ser::Error| Error::invalid(format!("cannot serialize config: {e}"));
        let mut table = toml::Table::try_from(&self.experiment).map_err(ser)?;
        table.insert("fit".into(), toml::Value::try_from(&self.fit).map_err(ser)?);
        table.insert("seminorm".into(), toml::Value::try_from(&self.seminorm).map_err(ser)?);
        table.insert("eigen".into(), toml::Value::try_from(&self.eigen).map_err(ser)?);
        table.insert("gridsearch".into(), toml::Value::try_from(&self.gridsearch).map_err(ser)?);
        table.insert("zoo".into(), toml::Value::try_from(&self.zoo).map_err(ser)?);
        table.insert("curve".into(), toml::Value::try_from(&self.curve).map_err(ser)?);
        toml::to_string(&table).map_err(ser)
    }

    /// Write the echo into `dir`.
    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(ECHO_FILE), self.to_toml()?)?;
        Ok(())
    }
}

/// `a.b.c=value`; the value is read as a TOML value, falling back to a bare string.
fn apply_override(table: &mut toml::Table, raw: &str) -> Result<()> {
    let malformed = |msg: &str| Error::Config {
        key: raw.into(),
        line: None,
        message: msg.into(),
    };
    let (key, value) = raw.split_once('=').ok_or_else(|| malformed("override must look like key=value"))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').map(str::trim).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(malformed("override key has an empty segment"));
    }
    let value = parse_value(value.trim());
    let (last, parents) = path.split_last().unwrap();
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(malformed(&format!("`{p}` is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// Map a serde message onto the key it names.
fn typed_error(section: &str, message: &str) -> Error {
    let named = message.split('`').nth(1).map(str::to_string);
    let key = match (section.is_empty(), named) {
        (true, Some(k)) => k,
        (true, None) => "<document>".into(),
        (false, Some(k)) => format!("{section}.{k}"),
        (false, None) => section.into(),
    };
    Error::Config {
        key,
        line: None,
        message: message.trim().to_string(),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Fill in the line of the offending key when the source mentions it.
fn with_line(err: Error, text: &str) -> Error {
    match err {
        Error::Config { key, line: None, message } => {
            let line = locate(text, &key);
            Error::Config { key, line, message }
        }
        other => other,
    }
}

/// First line assigning `key` (dotted or inside its table), else the table header.
fn locate(text: &str, key: &str) -> Option<usize> {
    let segments: Vec<&str> = key.split('.').collect();
    let last = *segments.last()?;
    let assigns = |line: &str, name: &str| {
        line.trim_start()
            .strip_prefix(name)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    };
    let mut table = String::new();
    let mut header_line = None;
    let parent = segments[..segments.len() - 1].join(".");
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if !parent.is_empty() && table == parent {
                header_line = Some(i + 1);
            }
            if table == key {
                return Some(i + 1);
            }
            continue;
        }
        if assigns(line, key) || (table == parent && assigns(line, last)) {
            return Some(i + 1);
        }
    }
    header_line
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Tuning;

    #[test]
    fn empty_config_is_the_default() {
        let cfg = Config::parse("", &[]).unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.experiment.n_grid, vec![500, 625, 750, 875, 1000]);
        assert_eq!(cfg.experiment.repetitions, 200);
    }

    #[test]
    fn out_of_range_s_cites_key_and_line() {
        let text = "truth = \"f2\"\n\ns = 1.5\n";
        match Config::parse(text, &[]) {
            Err(Error::Config { key, line, message }) => {
                assert_eq!(key, "s");
                assert_eq!(line, Some(3));
                assert!(message.contains("s must lie in (0,1)"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_truth_and_keys() {
        let err = Config::parse("truth = \"f7\"", &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { key, line: Some(1), .. } if key == "truth"), "{err}");
        let err = Config::parse("n_grd = [1, 2]", &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { key, line: Some(1), .. } if key == "n_grd"), "{err}");
        let err = Config::parse("[eigen]\nn = 10\nmm = 3\n", &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { key, line: Some(3), .. } if key == "eigen.mm"), "{err}");
        let err = Config::parse("s = [", &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { line: Some(1), .. }), "{err}");
    }

    #[test]
    fn nested_key_line() {
        let text = "[tuning]\nmode = \"grid\"\nk_grid = []\n";
        let err = Config::parse(text, &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { key, line: Some(3), .. } if key == "tuning.k_grid"), "{err}");
    }

    #[test]
    fn overrides() {
        let cfg = Config::parse(
            "",
            &[
                "tuning.mode=fixed".into(),
                "tuning.k=\"n\"".into(),
                "tuning.epsilon=0.3".into(),
                "repetitions = 3".into(),
                "seminorm.function=f3".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.experiment.repetitions, 3);
        assert!(matches!(cfg.experiment.tuning, Tuning::Fixed { epsilon, .. } if epsilon == 0.3));
        assert_eq!(cfg.seminorm.function, TruthSpec::Named("f3".into()));
        assert!(Config::parse("", &["repetitions".into()]).is_err());
        assert!(Config::parse("", &["a..b=1".into()]).is_err());
        assert!(Config::parse("", &["s.x=1".into()]).is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = "18446744073709551615"
noise_sd = 0.5
n_grid = [10, 20]
[truth]
family = "piecewise_constant"
breakpoints = [0.0, 2.5, 5.0]
values = [1, -1]
[kernel]
family = "triangular"
[tuning]
mode = "rule"
m = 2.0
[fit]
data = "points.csv"
[curve]
n = 30
"#;
        let cfg = Config::parse(text, &[]).unwrap();
        assert_eq!(cfg.experiment.seed, u64::MAX);
        let echo = cfg.to_toml().unwrap();
        let again = Config::parse(&echo, &[]).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml().unwrap(), echo);
    }
}

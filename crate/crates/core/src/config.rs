//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, keys are dotted names from
//! a fixed table and values are typed and range-checked at parse time.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::InitialData;
use crate::evolution::RunConfig;
use crate::grid::Grid;
use crate::kernel::Boundary;
use crate::report::fmt17;
use crate::weight::{Weight, WeightKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Text(String),
    List(Vec<f64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Float(v) => f.write_str(&fmt17(*v)),
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
            Value::List(v) => f.write_str(&v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(", ")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// Finite float in `[lo, hi]`.
    Float(f64, f64),
    /// Float strictly above `lo`.
    Positive(f64),
    Int(u64, u64),
    Choice(&'static [&'static str]),
    Text,
    /// Comma-separated floats (`inf` allowed) in `[lo, ∞]`.
    List(f64),
}

const KEYS: &[(&str, Kind)] = &[
    ("weight.kind", Kind::Choice(&["axis", "radial"])),
    ("weight.exponent", Kind::Float(-1e3, 1e3)),
    ("dim", Kind::Int(1, 2)),
    ("p", Kind::Positive(1.0)),
    ("grid.L", Kind::Positive(0.0)),
    ("grid.cells", Kind::Int(2, 1 << 16)),
    ("time.horizon", Kind::Positive(0.0)),
    ("time.dt0", Kind::Positive(0.0)),
    ("time.theta", Kind::Float(1e-6, 0.999_999)),
    ("time.dt_rel", Kind::Float(0.0, 1.0)),
    ("blowup.umax", Kind::Float(1e6, 1e300)),
    (
        "data.kind",
        Kind::Choice(&["bump", "threshold", "constant", "gaussian", "indicator"]),
    ),
    ("data.amplitude", Kind::Float(0.0, 1e12)),
    ("data.delta", Kind::Float(0.0, 1e12)),
    ("data.radius", Kind::Positive(0.0)),
    ("boundary", Kind::Choice(&["reflecting", "absorbing"])),
    ("snapshots.per_decade", Kind::Int(1, 1000)),
    ("snapshots.t0", Kind::Positive(0.0)),
    ("seed", Kind::Int(0, u64::MAX)),
    ("output.dir", Kind::Text),
    ("channels.strong", Kind::List(1.0)),
    ("channels.weak", Kind::List(1.0)),
    ("sweep.p", Kind::List(1.0)),
    ("sweep.alpha", Kind::List(-1e3)),
    ("kernel.t0", Kind::Positive(0.0)),
    ("kernel.t1", Kind::Positive(0.0)),
    ("kernel.dt", Kind::Positive(0.0)),
    ("picard.iterations", Kind::Int(1, 1000)),
    ("picard.tau", Kind::Positive(0.0)),
    ("picard.every", Kind::Int(1, 1_000_000)),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_float(key: &str, s: &str) -> Result<f64, ConfigError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| !v.is_nan())
        .ok_or_else(|| invalid(key, format!("`{s}` is not a number")))
}

fn parse_value(key: &str, kind: Kind, raw: &str) -> Result<Value, ConfigError> {
    match kind {
        Kind::Float(lo, hi) => {
            let v = parse_float(key, raw)?;
            if !(v >= lo && v <= hi) {
                return Err(invalid(key, format!("{v} is outside [{lo}, {hi}]")));
            }
            Ok(Value::Float(v))
        }
        Kind::Positive(lo) => {
            let v = parse_float(key, raw)?;
            if !(v > lo && v.is_finite()) {
                return Err(invalid(key, format!("{v} must be finite and exceed {lo}")));
            }
            Ok(Value::Float(v))
        }
        Kind::Int(lo, hi) => {
            let v: u64 = raw
                .parse()
                .map_err(|_| invalid(key, format!("`{raw}` is not a nonnegative integer")))?;
            if v < lo || v > hi {
                return Err(invalid(key, format!("{v} is outside [{lo}, {hi}]")));
            }
            Ok(Value::Int(v))
        }
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(Value::Text(raw.to_string()))
            } else {
                Err(invalid(key, format!("`{raw}` is not one of {}", options.join(", "))))
            }
        }
        Kind::Text => {
            if raw.is_empty() {
                Err(invalid(key, "empty value"))
            } else {
                Ok(Value::Text(raw.to_string()))
            }
        }
        Kind::List(lo) => {
            let mut out = Vec::new();
            for part in raw.split(',') {
                let v = parse_float(key, part)?;
                if !(v >= lo) {
                    return Err(invalid(key, format!("{v} is below {lo}")));
                }
                out.push(v);
            }
            Ok(Value::List(out))
        }
    }
}

/// A validated configuration document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: no + 1,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = k.trim();
            let raw = v.trim();
            let kind = kind_of(key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            let value = parse_value(key, kind, raw)?;
            if entries.insert(key.to_string(), value).is_some() {
                return Err(ConfigError::Duplicate(key.to_string()));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets a key from its textual form, with the same validation as parsing.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let kind = kind_of(key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let value = parse_value(key, kind, raw.trim())?;
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    /// Canonical text: keys sorted, floats at 17 significant digits.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.serialize().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn float(&self, key: &str) -> Result<f64, ConfigError> {
        match self.entries.get(key) {
            Some(Value::Float(v)) => Ok(*v),
            Some(_) => Err(invalid(key, "wrong type")),
            None => Err(ConfigError::Missing(key.to_string())),
        }
    }

    pub fn float_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.float(key) {
            Err(ConfigError::Missing(_)) => Ok(default),
            other => other,
        }
    }

    pub fn int_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.entries.get(key) {
            Some(Value::Int(v)) => Ok(*v),
            Some(_) => Err(invalid(key, "wrong type")),
            None => Ok(default),
        }
    }

    pub fn text_or<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str, ConfigError> {
        match self.entries.get(key) {
            Some(Value::Text(v)) => Ok(v),
            Some(_) => Err(invalid(key, "wrong type")),
            None => Ok(default),
        }
    }

    pub fn list(&self, key: &str) -> Result<Option<&[f64]>, ConfigError> {
        match self.entries.get(key) {
            Some(Value::List(v)) => Ok(Some(v)),
            Some(_) => Err(invalid(key, "wrong type")),
            None => Ok(None),
        }
    }

    /// The admissible weight named by `weight.kind`, `weight.exponent`, `dim`.
    pub fn weight(&self) -> Result<Weight, ConfigError> {
        let kind = match self.text_or("weight.kind", "axis")? {
            "radial" => WeightKind::RadialPower,
            _ => WeightKind::AxisPower,
        };
        let exponent = self.float("weight.exponent")?;
        let dim = self.int_or("dim", 1)? as usize;
        Weight::admissible(kind, exponent, dim).map_err(|e| invalid("weight.exponent", e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let dim = self.int_or("dim", 1)? as usize;
        let half = self.float_or("grid.L", 16.0)?;
        let cells = self.int_or("grid.cells", 512)? as usize;
        if !cells.is_multiple_of(2) {
            return Err(invalid("grid.cells", "must be even"));
        }
        Grid::new(dim, cells, half).map_err(|e| invalid("grid.cells", e.to_string()))
    }

    pub fn p(&self) -> Result<f64, ConfigError> {
        self.float("p")
    }

    pub fn data(&self) -> Result<InitialData, ConfigError> {
        let amplitude = self.float_or("data.amplitude", 1.0)?;
        let radius = self.float_or("data.radius", 1.0)?;
        Ok(match self.text_or("data.kind", "bump")? {
            "threshold" => {
                let delta = self.float("data.delta")?;
                let w = self.weight()?;
                InitialData::threshold(delta, w.exponent, self.p()?)
            }
            "constant" => InitialData::Constant { value: amplitude },
            "gaussian" => InitialData::Gaussian {
                amplitude,
                width: radius,
            },
            "indicator" => InitialData::Indicator {
                amplitude,
                lo: -radius,
                hi: radius,
            },
            _ => InitialData::Bump { amplitude, radius },
        })
    }

    pub fn boundary(&self) -> Result<Boundary, ConfigError> {
        Ok(match self.text_or("boundary", "reflecting")? {
            "absorbing" => Boundary::Absorbing,
            _ => Boundary::Reflecting,
        })
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.int_or("seed", 7)
    }

    /// Run configuration with every optional key at its documented default.
    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let weight = self.weight()?;
        let grid = self.grid()?;
        let p = self.p()?;
        let horizon = self.float_or("time.horizon", 10.0)?;
        let mut c = RunConfig::new(weight, p, grid, self.data()?, horizon);
        c.dt0 = self.float_or("time.dt0", c.dt0)?;
        c.theta = self.float_or("time.theta", c.theta)?;
        c.dt_rel = self.float_or("time.dt_rel", c.dt_rel)?;
        c.umax = self.float_or("blowup.umax", c.umax)?;
        c.boundary = self.boundary()?;
        c.snapshots_per_decade = self.int_or("snapshots.per_decade", c.snapshots_per_decade as u64)? as usize;
        c.snapshot_t0 = self.float_or("snapshots.t0", c.snapshot_t0)?;
        if let Some(v) = self.list("channels.strong")? {
            c.strong_q = v.to_vec();
        }
        if let Some(v) = self.list("channels.weak")? {
            c.weak_q = v.to_vec();
        }
        c.validate().map_err(|e| invalid("p", e.to_string()))?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "\
# dichotomy run
weight.kind = axis
weight.exponent = 0.5
dim = 1
p = 4
grid.L = 64   # half width
grid.cells = 1024
data.kind = threshold
data.delta = 0.1
channels.strong = 1, inf
";

    #[test]
    fn parses_sample() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.float("p").unwrap(), 4.0);
        assert_eq!(c.list("channels.strong").unwrap().unwrap(), &[1.0, f64::INFINITY]);
        let rc = c.run_config().unwrap();
        assert_eq!(rc.grid.cells, 1024);
        assert!(matches!(rc.data, InitialData::Threshold { .. }));
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert_eq!(
            ExperimentConfig::parse("weight.exponnent = 1").unwrap_err(),
            ConfigError::UnknownKey("weight.exponnent".into())
        );
        assert!(matches!(
            ExperimentConfig::parse("p = 2\np = 3"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("p 2"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn missing_exponent_is_named() {
        let c = ExperimentConfig::parse("p = 2").unwrap();
        assert_eq!(c.weight().unwrap_err(), ConfigError::Missing("weight.exponent".into()));
    }

    #[test]
    fn inadmissible_exponent_rejected() {
        let c = ExperimentConfig::parse("weight.exponent = 1.5\np = 2").unwrap();
        assert!(matches!(c.weight(), Err(ConfigError::Invalid { key, .. }) if key == "weight.exponent"));
    }

    #[test]
    fn ranges_enforced() {
        assert!(ExperimentConfig::parse("time.theta = 1.5").is_err());
        assert!(ExperimentConfig::parse("blowup.umax = 10").is_err());
        assert!(ExperimentConfig::parse("p = 1").is_err());
        assert!(ExperimentConfig::parse("dim = 3").is_err());
        assert!(ExperimentConfig::parse("p = nan").is_err());
        assert!(ExperimentConfig::parse("grid.cells = 7\nweight.exponent = 0\np = 2")
            .unwrap()
            .grid()
            .is_err());
    }

    #[test]
    fn hash_is_stable_under_reordering() {
        let a = ExperimentConfig::parse("p = 2\nweight.exponent = 0.5").unwrap();
        let b = ExperimentConfig::parse("weight.exponent = 0.50\n\n# c\np = 2.0").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    fn entry() -> impl Strategy<Value = (String, String)> {
        prop_oneof![
            (-0.99f64..0.99).prop_map(|v| ("weight.exponent".to_string(), format!("{v}"))),
            (1.0001f64..10.0).prop_map(|v| ("p".to_string(), format!("{v}"))),
            (1u64..=2).prop_map(|v| ("dim".to_string(), v.to_string())),
            (0.1f64..1e3).prop_map(|v| ("grid.L".to_string(), format!("{v:e}"))),
            (1u64..500).prop_map(|v| ("grid.cells".to_string(), (2 * v).to_string())),
            prop::sample::select(vec!["bump", "threshold", "gaussian"])
                .prop_map(|v| ("data.kind".to_string(), v.to_string())),
            prop::collection::vec(1.0f64..100.0, 1..5).prop_map(|v| (
                "sweep.p".to_string(),
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            )),
            any::<u64>().prop_map(|v| ("seed".to_string(), v.to_string())),
            "[a-z/_]{1,12}".prop_map(|v| ("output.dir".to_string(), v)),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(entries in prop::collection::btree_map("[a-z]", entry(), 0..9)) {
            let mut text = String::new();
            let mut seen = std::collections::HashSet::new();
            for (_, (k, v)) in entries {
                if seen.insert(k.clone()) {
                    text.push_str(&format!("{k} = {v}\n"));
                }
            }
            let a = ExperimentConfig::parse(&text).unwrap();
            let b = ExperimentConfig::parse(&a.serialize()).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.serialize(), b.serialize());
        }

        #[test]
        fn parser_never_panics(text in "\\PC{0,200}") {
            let _ = ExperimentConfig::parse(&text);
        }
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nets::{FieldMode, HyperConfig, TargetArch};

use super::{AdamConfig, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Squared error at one point sampled inside each cube.
    Point,
    /// Squared error at the worst-case end of each cube's occupancy interval.
    Interval,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Point => "point",
            Variant::Interval => "interval",
        }
    }

    /// Field read used to score a model trained as this variant. The interval
    /// objective pushes each inside cell's lower bound up, so interval models
    /// are read at the lower bound: a cell is occupied only if its whole cube is.
    pub fn eval_mode(self) -> FieldMode {
        match self {
            Variant::Point => FieldMode::PointAtCenter,
            Variant::Interval => FieldMode::IntervalWorstLo,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "point" => Ok(Variant::Point),
            "interval" => Ok(Variant::Interval),
            other => Err(TrainError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// How each batch splits between inside and outside cubes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// [`Sampling::Uniform`] for the point variant, `Balanced(0.5)` for the
    /// interval variant, which collapses to all-outside under uniform draws.
    Auto,
    /// Cubes drawn uniformly, so each class appears at its grid frequency.
    Uniform,
    /// This many inside cubes per outside cube.
    Balanced(f64),
}

impl Sampling {
    pub fn resolve(self, variant: Variant) -> Sampling {
        match (self, variant) {
            (Sampling::Auto, Variant::Point) => Sampling::Uniform,
            (Sampling::Auto, Variant::Interval) => Sampling::Balanced(0.5),
            (s, _) => s,
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Auto => f.write_str("auto"),
            Sampling::Uniform => f.write_str("uniform"),
            Sampling::Balanced(r) => write!(f, "{r:?}"),
        }
    }
}

impl FromStr for Sampling {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "" | "auto" => Ok(Sampling::Auto),
            "uniform" => Ok(Sampling::Uniform),
            v => Ok(Sampling::Balanced(parse("class_balance", v)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Each epoch visits every shape once, one optimizer step per visit.
    pub epochs: usize,
    pub batch_cubes: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Required grid resolution; `None` accepts whatever the dataset shares.
    pub resolution: Option<usize>,
    pub class_balance: Sampling,
    pub model: HyperConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Point,
            epochs: 2000,
            batch_cubes: 512,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            resolution: None,
            class_balance: Sampling::Auto,
            model: HyperConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "variant",
    "epochs",
    "batch_cubes",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "seed",
    "resolution",
    "class_balance",
    "encoder_resolution",
    "encoder_hidden",
    "latent_dim",
    "head_hidden",
    "target_hidden",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value
        .trim()
        .parse()
        .map_err(|_| TrainError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>, TrainError> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|w| parse(key, w)).collect()
}

fn join(widths: &[usize]) -> String {
    widths.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.batch_cubes == 0 {
            return bad("batch_cubes must be at least 1");
        }
        if let Sampling::Balanced(r) = self.class_balance {
            if !(r > 0.0 && r.is_finite()) {
                return bad("class_balance must be positive");
            }
        }
        if self.resolution == Some(0) {
            return bad("resolution must be positive");
        }
        self.model.validate()?;
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let key = key.trim();
        match key {
            "variant" => self.variant = value.parse()?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_cubes" => self.batch_cubes = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "resolution" => {
                let v = value.trim();
                self.resolution = if v.is_empty() || v == "auto" { None } else { Some(parse(key, v)?) };
            }
            "class_balance" => self.class_balance = value.parse()?,
            "encoder_resolution" => self.model.encoder_resolution = parse(key, value)?,
            "encoder_hidden" => self.model.encoder_hidden = parse_widths(key, value)?,
            "latent_dim" => self.model.latent_dim = parse(key, value)?,
            "head_hidden" => self.model.head_hidden = parse_widths(key, value)?,
            "target_hidden" => self.model.target = TargetArch::with_hidden(&parse_widths(key, value)?)?,
            _ => {
                return Err(TrainError::Config(format!(
                    "unknown key {key:?}; expected one of {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Overlays `key = value` lines onto `self`. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), TrainError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, TrainError> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key, one per line, in a form [`from_kv`](Self::from_kv) reads back.
    pub fn to_kv(&self) -> String {
        let resolution = self.resolution.map_or_else(|| "auto".to_string(), |n| n.to_string());
        let lines = [
            ("variant", self.variant.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_cubes", self.batch_cubes.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("beta1", format!("{:?}", self.beta1)),
            ("beta2", format!("{:?}", self.beta2)),
            ("epsilon", format!("{:?}", self.epsilon)),
            ("seed", self.seed.to_string()),
            ("resolution", resolution),
            ("class_balance", self.class_balance.to_string()),
            ("encoder_resolution", self.model.encoder_resolution.to_string()),
            ("encoder_hidden", join(&self.model.encoder_hidden)),
            ("latent_dim", self.model.latent_dim.to_string()),
            ("head_hidden", join(&self.model.head_hidden)),
            ("target_hidden", join(self.model.target.hidden())),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

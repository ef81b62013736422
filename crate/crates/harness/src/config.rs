//! Experiment configuration: JSON with unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use offeval_core::bias::DEFAULT_BOOTSTRAP_REPLICATES;
use offeval_core::env::EnvParams;
use offeval_core::estimators::EstimatorKind;
use offeval_core::models::FitConfig;
use offeval_core::policy::{default_nu_grid, PolicyParams};
use offeval_core::ratio::RatioParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::HarnessError;

/// Data-collecting policy of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BehaviorParams {
    #[default]
    Uniform,
    /// Stochastic policy with Dirichlet(1) rows.
    Random { seed: u64 },
}

/// One estimator variant: estimator kind plus the covariate-shift (b1) and
/// bootstrap-correction (b2) flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub estimator: EstimatorKind,
    pub shift: bool,
    pub bootstrap: bool,
}

impl Variant {
    pub fn needs_ratio(&self) -> bool {
        self.shift || self.estimator != EstimatorKind::Pi
    }

    /// The comparison set: PI−−, PI+−, PI−+, DR−−.
    pub fn comparison_set() -> Vec<Variant> {
        ["PI--", "PI+-", "PI-+", "DR--"].iter().map(|t| t.parse().expect("valid tag")).collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.estimator {
            EstimatorKind::Pi => "PI",
            EstimatorKind::Is => "IS",
            EstimatorKind::Dr => "DR",
        };
        let flag = |b: bool| if b { '+' } else { '-' };
        write!(f, "{kind}{}{}", flag(self.shift), flag(self.bootstrap))
    }
}

impl FromStr for Variant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("variant tag {s:?} is not of the form PI--, DR+-, IS-+, ..."));
        if !s.is_ascii() || s.len() != 4 {
            return Err(bad());
        }
        let estimator = match &s[..2] {
            "PI" => EstimatorKind::Pi,
            "IS" => EstimatorKind::Is,
            "DR" => EstimatorKind::Dr,
            _ => return Err(bad()),
        };
        let flag = |c: u8| match c {
            b'+' => Ok(true),
            b'-' => Ok(false),
            _ => Err(bad()),
        };
        let b = s.as_bytes();
        Ok(Variant { estimator, shift: flag(b[2])?, bootstrap: flag(b[3])? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Value of the `exp` column.
    pub name: String,
    pub env: EnvParams,
    pub behavior: BehaviorParams,
    /// `predictor.lambda` must stay 0; the shift exponent is `shift_lambda`.
    pub predictor: FitConfig,
    pub policy: PolicyParams,
    /// Required by any variant that uses a density ratio.
    pub ratio: Option<RatioParams>,
    /// Variant of `bias-sweep`.
    pub estimator: EstimatorKind,
    pub covariate_shift: bool,
    pub bootstrap: bool,
    /// Variants of `reduction-compare`, as tags like `PI-+`.
    pub variants: Vec<String>,
    /// Exponent on the ratio in covariate-shift refits.
    pub shift_lambda: f64,
    pub bootstrap_replicates: usize,
    pub n_grid: Vec<usize>,
    pub nu_grid: Vec<f64>,
    pub repeats: usize,
    /// Size of a sampled test set; `None` evaluates against the exact G table.
    pub test_size: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Fill the `ms` column. Off by default so that outputs are reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "offeval".into(),
            env: EnvParams::default(),
            behavior: BehaviorParams::default(),
            predictor: FitConfig::default(),
            policy: PolicyParams::default(),
            ratio: Some(RatioParams::default()),
            estimator: EstimatorKind::Pi,
            covariate_shift: false,
            bootstrap: false,
            variants: Variant::comparison_set().iter().map(|v| v.to_string()).collect(),
            shift_lambda: 1.0,
            bootstrap_replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            n_grid: (6..=10).map(|k| 1usize << k).collect(),
            nu_grid: default_nu_grid(),
            repeats: 5,
            test_size: None,
            seed: 0,
            out: None,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Self::from_value(serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?)
    }

    pub fn from_value(value: Value) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, deep-merged over `base` (used for per-command defaults).
    pub fn load(path: &Path, base: Value) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let user: Value = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if !user.is_object() {
            return Err(HarnessError::Config(format!("{}: top level must be an object", path.display())));
        }
        Self::from_value(merge(base, user))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// The bias-sweep variant.
    pub fn sweep_variant(&self) -> Variant {
        Variant { estimator: self.estimator, shift: self.covariate_shift, bootstrap: self.bootstrap }
    }

    pub fn comparison_variants(&self) -> Result<Vec<Variant>, HarnessError> {
        self.variants.iter().map(|t| t.parse()).collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: &str| Err(HarnessError::Config(m.into()));
        if self.n_grid.is_empty() {
            return err("n_grid must not be empty");
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return err("n_grid must be positive and strictly increasing");
        }
        if self.repeats == 0 {
            return err("repeats must be at least 1");
        }
        if self.nu_grid.is_empty() || self.nu_grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return err("nu_grid must be a nonempty list of finite nonnegative numbers");
        }
        if self.predictor.lambda != 0.0 {
            return err("predictor.lambda must be 0; set shift_lambda and enable covariate_shift instead");
        }
        if !(self.shift_lambda.is_finite() && self.shift_lambda > 0.0) {
            return err("shift_lambda must be positive");
        }
        if self.bootstrap_replicates == 0 {
            return err("bootstrap_replicates must be at least 1");
        }
        if self.test_size == Some(0) {
            return err("test_size must be positive");
        }
        if self.sweep_variant().needs_ratio() && self.ratio.is_none() {
            return err("the is/dr estimators and covariate_shift need a ratio block");
        }
        let variants = self.comparison_variants()?;
        if variants.is_empty() {
            return err("variants must not be empty");
        }
        if variants.iter().any(|v| v.needs_ratio()) && self.ratio.is_none() {
            return err("variants using a density ratio (b1 = +, IS, DR) need a ratio block");
        }
        self.predictor.validate().map_err(|e| HarnessError::Config(format!("predictor: {e}")))?;
        Ok(())
    }
}

/// Object-wise merge; values in `over` replace those in `base`.
pub fn merge(base: Value, over: Value) -> Value {
    match (base, over) {
        (Value::Object(mut b), Value::Object(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            Value::Object(b)
        }
        (_, o) => o,
    }
}

//! TOML run configuration.
//!
//! ```toml
//! horizons = [500, 1000, 2000]
//! trials = 20
//! seed = 7
//!
//! [instance]
//! family = "knapsack"
//! deg = 6
//!
//! [[arms]]
//! loss = "spo_plus"
//! predictor = "linear"
//! ```
//!
//! The full key list lives in the README.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer};

use online_spo::datagen::{KnapsackOverrides, LongestPathOverrides};
use online_spo::models::{AdamConfig, HypothesisClass, TrainingConfig};
use online_spo::simulate::{Arm, ConstraintMode, DualOverrides, InstanceSpec, Predictor, Schedule, TrialPlan};
use online_spo::LossKind;

use crate::CliError;

fn parsed<'de, D, T>(de: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let s = String::deserialize(de)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn parsed_opt<'de, D, T>(de: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: std::fmt::Display,
{
    parsed(de).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Knapsack,
    LongestPath,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub family: Family,
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub deg: Option<u32>,
    pub noise: Option<f64>,
    pub k: Option<usize>,
    pub budget: Option<f64>,
    pub budget_ratio: Option<f64>,
    pub leftover_price: Option<f64>,
    pub n: Option<usize>,
    pub v_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    #[serde(deserialize_with = "parsed", default = "default_loss")]
    pub loss: LossKind,
    #[serde(deserialize_with = "parsed")]
    pub predictor: Predictor,
}

fn default_loss() -> LossKind {
    LossKind::SpoPlus
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Periodic { every: usize },
    Power { beta: f64 },
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::Periodic { every: 10 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSection {
    pub d_lambda: Option<f64>,
    pub d_theta: Option<f64>,
    pub g_lambda: Option<f64>,
    pub g_theta: Option<f64>,
    pub eta_lambda: Option<f64>,
    pub eta_theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizons: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, deserialize_with = "parsed_opt")]
    pub mode: Option<ConstraintMode>,
    pub zeta: Option<f64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub instance: InstanceConfig,
    pub arms: Vec<ArmConfig>,
    pub training: Option<TrainingSection>,
    #[serde(default)]
    pub duals: DualSection,
}

fn default_trials() -> usize {
    1
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |message: String| CliError::Config { line: None, message };
        if self.arms.is_empty() {
            return Err(bad("at least one arm is required".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(bad("horizons must be a non-empty list of positive integers".into()));
        }
        if self.trials == 0 {
            return Err(bad("trials must be at least 1".into()));
        }
        self.training()?;
        Ok(())
    }

    pub fn instance_spec(&self) -> InstanceSpec {
        let i = &self.instance;
        match i.family {
            Family::Knapsack => InstanceSpec::Knapsack(KnapsackOverrides {
                p: i.p,
                d: i.d,
                m: i.m,
                deg: i.deg,
                noise: i.noise,
                k: i.k,
                budget: i.budget,
                budget_ratio: i.budget_ratio,
                leftover_price: i.leftover_price,
            }),
            Family::LongestPath => InstanceSpec::LongestPath(LongestPathOverrides {
                p: i.p,
                n: i.n,
                deg: i.deg,
                noise: i.noise,
                v_cap: i.v_cap,
            }),
        }
    }

    pub fn arms(&self) -> Vec<Arm> {
        self.arms.iter().map(|a| Arm { loss: a.loss, predictor: a.predictor }).collect()
    }

    /// Explicit training settings; an omitted learning rate takes the
    /// default of the (single) hypothesis class in use.
    pub fn training(&self) -> Result<Option<TrainingConfig>, CliError> {
        let Some(t) = self.training else { return Ok(None) };
        let mut classes: Vec<HypothesisClass> = self
            .arms
            .iter()
            .filter_map(|a| match a.predictor {
                Predictor::Model(c) => Some(c),
                Predictor::Benchmark(_) => None,
            })
            .collect();
        classes.dedup();
        let lr = match (t.lr, classes.as_slice()) {
            (Some(lr), _) => lr,
            (None, [c]) => c.default_lr(),
            (None, []) => HypothesisClass::Linear.default_lr(),
            (None, _) => {
                return Err(CliError::Config {
                    line: None,
                    message: "training.lr is required when arms mix hypothesis classes".into(),
                })
            }
        };
        Ok(Some(TrainingConfig {
            steps: t.steps.unwrap_or(50),
            adam: AdamConfig::with_lr(lr),
            batch_size: t.batch_size,
        }))
    }

    pub fn schedule(&self) -> Schedule {
        match self.schedule {
            ScheduleConfig::Periodic { every } => Schedule::Periodic(every),
            ScheduleConfig::Power { beta } => Schedule::Power(beta),
        }
    }

    pub fn plan(&self, seed: u64) -> Result<TrialPlan, CliError> {
        let d = self.duals;
        Ok(TrialPlan {
            instance: self.instance_spec(),
            arms: self.arms(),
            horizons: self.horizons.clone(),
            trials: self.trials,
            master_seed: seed,
            mode: self.mode,
            zeta: self.zeta,
            schedule: self.schedule(),
            training: self.training()?,
            duals: DualOverrides {
                d_lambda: d.d_lambda,
                d_theta: d.d_theta,
                g_lambda: d.g_lambda,
                g_theta: d.g_theta,
                eta_lambda: d.eta_lambda,
                eta_theta: d.eta_theta,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use online_spo::models::BenchmarkKind;

    const MINIMAL: &str = r#"
horizons = [50]

[instance]
family = "knapsack"

[[arms]]
predictor = "saa"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.trials, 1);
        assert_eq!(c.schedule(), Schedule::Periodic(10));
        assert_eq!(c.arms()[0].predictor, Predictor::Benchmark(BenchmarkKind::Saa));
        assert!(c.training().unwrap().is_none());
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "horizons = [50]\ntrials = \n";
        match RunConfig::parse(text) {
            Err(CliError::Config { line: Some(2), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_loss_reports_line() {
        let text = format!("{MINIMAL}\n[[arms]]\nloss = \"hinge\"\npredictor = \"linear\"\n");
        match RunConfig::parse(&text) {
            Err(CliError::Config { line: Some(l), message }) => {
                assert_eq!(l, 11);
                assert!(message.contains("hinge"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_arms_rejected() {
        let text = "horizons = [50]\narms = []\n[instance]\nfamily = \"knapsack\"\n";
        assert!(RunConfig::parse(text).is_err());
    }

    #[test]
    fn training_lr_follows_class() {
        let text = format!("{MINIMAL}\n[training]\nsteps = 5\n\n[[arms]]\npredictor = \"mlp\"\n");
        let t = RunConfig::parse(&text).unwrap().training().unwrap().unwrap();
        assert_eq!(t.steps, 5);
        assert_eq!(t.adam.lr, HypothesisClass::Mlp.default_lr());
    }

    #[test]
    fn power_schedule() {
        let text = format!("schedule = {{ kind = \"power\", beta = 1.5 }}\n{MINIMAL}");
        assert_eq!(RunConfig::parse(&text).unwrap().schedule(), Schedule::Power(1.5));
    }
}

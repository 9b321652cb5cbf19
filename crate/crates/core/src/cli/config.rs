//! Run configuration: defaults, then a JSON file, then dotted overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::RRTStarConfig;
use crate::error::{Error, Result};
use crate::eval::{BehaviorCloning, EvalConfig, KernelSetup};
use crate::grid::{MapGenConfig, ScenarioKind};
use crate::heat::SolverParams;
use crate::kernel::{KernelParams, KernelSchedule};
use crate::sampler::SamplerConfig;
use crate::scorematch::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcSettings {
    pub experts_per_goal: usize,
    pub expert_noise: f64,
    pub expert_cutoff: Option<f64>,
    pub rollout_steps: Option<usize>,
    pub horizon: usize,
}

impl Default for BcSettings {
    fn default() -> Self {
        let b = BehaviorCloning::default();
        BcSettings {
            experts_per_goal: b.experts_per_goal,
            expert_noise: b.expert_noise,
            expert_cutoff: b.expert_cutoff,
            rollout_steps: b.rollout_steps,
            horizon: b.horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSettings {
    pub n_samples: usize,
}

impl Default for SampleSettings {
    fn default() -> Self {
        SampleSettings { n_samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Run seed; every component seed is mixed with it.
    pub seed: u64,
    pub mapgen: MapGenConfig,
    pub schedule: KernelSchedule,
    pub kernel: KernelParams,
    pub solver: SolverParams,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub rrt: RRTStarConfig,
    pub bc: BcSettings,
    pub sample: SampleSettings,
    /// Planners compared by `eval`.
    pub models: Vec<String>,
    /// Scenario kinds covered by `eval`.
    pub kinds: Vec<ScenarioKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mapgen: MapGenConfig::default(),
            schedule: KernelSchedule::default(),
            kernel: KernelParams::default(),
            solver: SolverParams::default(),
            sampler: SamplerConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            rrt: RRTStarConfig::default(),
            bc: BcSettings::default(),
            sample: SampleSettings::default(),
            models: ["ours", "gaussian", "gaussian+rrt", "bc"].map(String::from).to_vec(),
            kinds: ScenarioKind::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn kernel_setup(&self) -> KernelSetup {
        KernelSetup {
            schedule: self.schedule,
            params: self.kernel,
            solver: self.solver,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mapgen.validate()?;
        self.schedule.validate()?;
        self.kernel.validate()?;
        self.solver.validate()?;
        self.sampler.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if let Some(m) = self.models.iter().find(|m| !super::commands::MODEL_NAMES.contains(&m.as_str())) {
            return Err(Error::Config(format!(
                "unknown model `{m}`; expected one of {}",
                super::commands::MODEL_NAMES.join(", ")
            )));
        }
        Ok(())
    }

    /// Defaults, merged with `file` (if any), then with each `key=value` override.
    pub fn load(file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(RunConfig::default())?;
        if let Some(text) = file {
            let user: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
            merge(&mut tree, user, "")?;
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut Value, user: Value, path: &str) -> Result<()> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &p)?,
                    None => return Err(Error::Config(format!("unknown config key `{p}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// `a.b.c=value`; the value is read as JSON, falling back to a bare string.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let mut slot = &mut *tree;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

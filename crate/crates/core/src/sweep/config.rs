use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domains::{plan_target_policy, reward_lookahead_policy, DomainSpec};
use crate::fmdp::{FactoredMdp, Policy};
use crate::gscope::Thresholds;
use crate::{Error, Result};

const PRESETS: [(&str, &str); 2] = [
    ("paper_taxi", include_str!("../../presets/paper_taxi.toml")),
    ("paper_random_fmdp", include_str!("../../presets/paper_random_fmdp.toml")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gscope,
    Ks,
    Flat,
    Mfmc,
    Cis,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gscope, Method::Ks, Method::Flat, Method::Mfmc, Method::Cis];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gscope => "gscope",
            Method::Ks => "ks",
            Method::Flat => "flat",
            Method::Mfmc => "mfmc",
            Method::Cis => "cis",
        }
    }

    /// Stable seed coordinate, independent of the order in a config.
    pub fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Uniform,
    /// Always `action`.
    Constant,
    /// Finite-horizon optimal policy on the true model.
    Planned,
    /// Greedy one-step chase of an indicator reward.
    RewardLookahead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_floor: Option<f64>,
}

impl PolicySpec {
    pub fn uniform() -> Self {
        PolicySpec {
            kind: PolicyKind::Uniform,
            action: None,
            eps_floor: None,
        }
    }

    pub fn build(&self, mdp: &FactoredMdp) -> Result<Policy> {
        let floor = self.eps_floor.unwrap_or(0.0);
        match self.kind {
            PolicyKind::Uniform => Ok(Policy::uniform(mdp.n_actions())),
            PolicyKind::Constant => {
                let a = self
                    .action
                    .ok_or_else(|| Error::Config("constant policy needs `action`".into()))?;
                Policy::constant(mdp.n_actions(), mdp.gamma(), a)?.epsilon_floor(floor)
            }
            PolicyKind::Planned => plan_target_policy(mdp, floor),
            PolicyKind::RewardLookahead => reward_lookahead_policy(mdp, floor),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub eps: f64,
    pub delta1: f64,
    pub c2: f64,
    /// Replaces the closed-form `N` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_count: Option<u64>,
}

impl ThresholdConfig {
    pub fn build(&self, gamma: usize) -> Result<Thresholds> {
        let th = Thresholds::new(self.eps, self.delta1, self.c2, gamma)?;
        match self.min_count {
            Some(n) => th.with_min_count(n),
            None => Ok(th),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    /// Rollouts per model-based estimate (gscope, ks, flat).
    pub model: usize,
    /// Monte-Carlo rollouts for the reference value when exact evaluation
    /// is refused.
    pub truth_mc: usize,
    #[serde(default = "one")]
    pub mfmc_k: usize,
    /// Artificial trajectories; defaults to `H`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mfmc_artificial: Option<usize>,
    /// Trajectory-level weight clip for CIS (`inf` disables clipping).
    pub cis_clip: f64,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: String,
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            csv: "sweep.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

/// A full experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub master_seed: u64,
    pub trials: usize,
    pub h_grid: Vec<usize>,
    pub methods: Vec<Method>,
    /// Worker threads; 0 means one per core.
    #[serde(default)]
    pub workers: usize,
    pub domain: DomainSpec,
    pub behavior: PolicySpec,
    pub target: PolicySpec,
    pub thresholds: ThresholdConfig,
    pub rollouts: RolloutConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl SweepConfig {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        Self::from_toml(text)
    }

    /// A preset name or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if Path::new(name_or_path).is_file() {
            Self::from_toml(&std::fs::read_to_string(name_or_path)?)
        } else if PRESETS.iter().any(|(n, _)| *n == name_or_path) {
            Self::preset(name_or_path)
        } else {
            Err(Error::Config(format!("`{name_or_path}` is neither a file nor a preset")))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.h_grid.is_empty() || self.h_grid.contains(&0) {
            return bad("h_grid must be nonempty with positive entries");
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty");
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods must be distinct");
        }
        if self.rollouts.model == 0 || self.rollouts.truth_mc == 0 || self.rollouts.mfmc_k == 0 {
            return bad("rollout counts and mfmc_k must be at least 1");
        }
        if !(self.rollouts.cis_clip > 0.0) {
            return bad("cis_clip must be > 0");
        }
        Thresholds::new(self.thresholds.eps, self.thresholds.delta1, self.thresholds.c2, 2)?;
        if self.thresholds.min_count == Some(0) {
            return bad("min_count must be at least 1");
        }
        Ok(())
    }

    /// The full-scale protocol: 40 trials and the grid extended to 2000.
    pub fn full_scale(mut self) -> Self {
        self.trials = self.trials.max(40);
        if self.h_grid.iter().all(|&h| h < 2000) {
            self.h_grid.push(2000);
        }
        self
    }
}

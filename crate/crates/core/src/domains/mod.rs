//! Benchmark models and target-policy planners.

mod counterexamples;
mod planning;
mod random;
mod taxi;

pub use counterexamples::{exact_frequency_batch, make_assumption1_violation, make_assumption3_violation};
pub use planning::{plan_target_policy, reward_lookahead_policy};
pub use random::random_fmdp;
pub use taxi::{make_taxi, TaxiAction, TAXI_DEPOTS};

use serde::{Deserialize, Serialize};

use crate::fmdp::{FactoredMdp, FlatDynamics, InitialDist, Reward};
use crate::{Error, Result};

/// Names accepted by [`DomainSpec::build`].
pub const DOMAIN_NAMES: [&str; 5] = [
    "taxi",
    "random-fmdp",
    "assumption1-violation",
    "assumption3-violation",
    "copy-chain",
];

/// A registered domain plus its generator parameters. Building the same spec
/// twice yields identical models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

impl DomainSpec {
    pub fn named(name: &str) -> Self {
        DomainSpec {
            name: name.to_string(),
            d: None,
            gamma: None,
            actions: None,
            seed: None,
            horizon: None,
        }
    }

    pub fn build(&self) -> Result<FactoredMdp> {
        let mdp = match self.name.as_str() {
            "taxi" => make_taxi(),
            "random-fmdp" => random_fmdp(
                self.d.unwrap_or(20),
                self.gamma.unwrap_or(2),
                self.actions.unwrap_or(4),
                self.seed.unwrap_or(0),
            )?,
            "assumption1-violation" => make_assumption1_violation(),
            "assumption3-violation" => make_assumption3_violation(),
            "copy-chain" => copy_chain(self.d.unwrap_or(8), self.gamma.unwrap_or(2), self.actions.unwrap_or(2))?,
            other => return Err(Error::UnknownDomain(other.to_string())),
        };
        Ok(match self.horizon {
            Some(t) => mdp.with_horizon(t),
            None => mdp,
        })
    }
}

/// Deterministic test domain: every variable copies itself under every
/// action; reward is 1 when `X(0)` equals the action index. Horizon 50.
pub fn copy_chain(d: usize, gamma: usize, n_actions: usize) -> Result<FactoredMdp> {
    if d == 0 || gamma < 2 || n_actions == 0 {
        return Err(Error::InvalidArgument("copy-chain needs D >= 1, gamma >= 2, A >= 1".into()));
    }
    let mut table = vec![0.0; gamma * n_actions * gamma];
    for v in 0..gamma {
        for a in 0..n_actions {
            table[(v * n_actions + a) * gamma + v] = 1.0;
        }
    }
    FactoredMdp::new(
        d,
        gamma,
        n_actions,
        50,
        (0..d).map(|i| vec![i]).collect(),
        vec![table; d],
        Reward::ActionMatch { var: 0 },
        InitialDist::uniform_product(d, gamma),
    )
}

/// Number of flat states reachable from the support of `ρ` under any
/// sequence of actions.
pub fn reachable_state_count(mdp: &FactoredMdp) -> Result<usize> {
    let flat = FlatDynamics::build(mdp)?;
    let rho = flat.initial_vector(mdp);
    let mut seen = vec![false; flat.n_states];
    let mut stack: Vec<usize> = (0..flat.n_states).filter(|&s| rho[s] > 0.0).collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        for a in 0..flat.n_actions {
            for (n, _) in flat.successors(s, a) {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    Ok(seen.iter().filter(|&&x| x).count())
}

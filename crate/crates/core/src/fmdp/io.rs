use serde::{Deserialize, Serialize};

use super::{FactoredMdp, InitialDist, Reward};
use crate::Error;

/// On-disk JSON layout of a [`FactoredMdp`].
///
/// `cpts` is nested `[i][realization-rank][a][y]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FmdpDocument {
    #[serde(rename = "D")]
    pub d: usize,
    pub gamma: usize,
    #[serde(rename = "A")]
    pub a: usize,
    pub horizon: usize,
    pub parents: Vec<Vec<usize>>,
    pub cpts: Vec<Vec<Vec<Vec<f64>>>>,
    pub reward: Reward,
    pub rho: InitialDist,
}

impl From<FactoredMdp> for FmdpDocument {
    fn from(m: FactoredMdp) -> Self {
        let g = m.gamma;
        let na = m.n_actions;
        let cpts = m
            .cpts
            .iter()
            .map(|table| {
                table
                    .chunks(na * g)
                    .map(|rank_block| rank_block.chunks(g).map(<[f64]>::to_vec).collect())
                    .collect()
            })
            .collect();
        FmdpDocument {
            d: m.n_vars,
            gamma: g,
            a: na,
            horizon: m.horizon,
            parents: m.parents,
            cpts,
            reward: m.reward,
            rho: m.rho,
        }
    }
}

impl TryFrom<FmdpDocument> for FactoredMdp {
    type Error = Error;

    fn try_from(doc: FmdpDocument) -> Result<Self, Error> {
        let mut cpts = Vec::with_capacity(doc.cpts.len());
        for (i, per_rank) in doc.cpts.into_iter().enumerate() {
            let mut flat = Vec::new();
            for per_action in per_rank {
                if per_action.len() != doc.a {
                    return Err(Error::InvalidModel(format!(
                        "CPT {i}: expected {} actions per realization",
                        doc.a
                    )));
                }
                for row in per_action {
                    if row.len() != doc.gamma {
                        return Err(Error::InvalidModel(format!(
                            "CPT {i}: row length {} != gamma {}",
                            row.len(),
                            doc.gamma
                        )));
                    }
                    flat.extend(row);
                }
            }
            cpts.push(flat);
        }
        FactoredMdp::new(
            doc.d,
            doc.gamma,
            doc.a,
            doc.horizon,
            doc.parents,
            cpts,
            doc.reward,
            doc.rho,
        )
    }
}

impl FactoredMdp {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        // serde's try_from wraps our error as a string; re-run validation to
        // keep the typed error.
        let doc: FmdpDocument = serde_json::from_str(s)?;
        FactoredMdp::try_from(doc)
    }
}

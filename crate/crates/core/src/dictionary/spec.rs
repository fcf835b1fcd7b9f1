use serde::{Deserialize, Serialize};

use super::{truncation_level, Dictionary, GaussianAtom};
use crate::error::{Result, SpadesError};

/// Declarative dictionary description, as found under `[dictionary]` in a
/// configuration file.
///
/// ```toml
/// [dictionary]
/// kind = "gaussian"
/// tau = 1.0
/// grid = { spacing = 4.0, count = 200 }
/// ```
///
/// Gaussian dictionaries take either explicit `means` (one list per atom) or
/// a 1-D `grid` of means `spacing * j`, `j = 1..=count`. An optional `taus`
/// list gives per-atom scales. Haar dictionaries take `l_max`, an explicit
/// atom count `atoms`, or neither, in which case the level is derived from
/// the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    Gaussian {
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        taus: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        means: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
    Haar {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l_max: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        atoms: Option<usize>,
    },
}

fn default_tau() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub spacing: f64,
    pub count: usize,
}

impl DictionarySpec {
    /// Builds the dictionary. `sample_size` is consulted only by Haar specs
    /// that give neither `l_max` nor `atoms`.
    pub fn build(&self, sample_size: Option<usize>) -> Result<Dictionary> {
        match self {
            DictionarySpec::Gaussian {
                tau,
                taus,
                means,
                grid,
            } => {
                let means: Vec<Vec<f64>> = match (means, grid) {
                    (Some(m), None) => m.clone(),
                    (None, Some(g)) => (1..=g.count)
                        .map(|j| vec![g.spacing * j as f64])
                        .collect(),
                    (Some(_), Some(_)) => {
                        return Err(SpadesError::Config(
                            "give either `means` or `grid`, not both".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(SpadesError::Config(
                            "gaussian dictionary needs `means` or `grid`".into(),
                        ))
                    }
                };
                if means.is_empty() {
                    return Err(SpadesError::Config("dictionary has no atoms".into()));
                }
                let scales = match taus {
                    Some(t) if t.len() != means.len() => {
                        return Err(SpadesError::Config(format!(
                            "`taus` has {} entries for {} means",
                            t.len(),
                            means.len()
                        )))
                    }
                    Some(t) => t.clone(),
                    None => vec![*tau; means.len()],
                };
                let atoms = means
                    .into_iter()
                    .zip(scales)
                    .map(|(m, t)| GaussianAtom::new(m, t))
                    .collect::<Result<Vec<_>>>()?;
                Dictionary::gaussian(atoms)
            }
            DictionarySpec::Haar { l_max, atoms } => match (l_max, atoms) {
                (Some(l), None) => Dictionary::haar(*l),
                (None, Some(m)) => Dictionary::haar_with_atoms(*m),
                (None, None) => {
                    let n = sample_size.ok_or_else(|| {
                        SpadesError::Config(
                            "haar dictionary without `l_max` or `atoms` needs a sample".into(),
                        )
                    })?;
                    Dictionary::haar(truncation_level(n))
                }
                (Some(_), Some(_)) => Err(SpadesError::Config(
                    "give either `l_max` or `atoms`, not both".into(),
                )),
            },
        }
    }
}

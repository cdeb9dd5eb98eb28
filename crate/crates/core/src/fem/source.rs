use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MultijunctionComplex;

/// Source density on one patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatchSource {
    Zero,
    Constant { value: f64 },
    /// `sum_j coefficients[j] * r^j` with `r = |x - center|`.
    Radial {
        center: Vec<f64>,
        coefficients: Vec<f64>,
    },
    /// One value per simplex.
    PerElement { values: Vec<f64> },
}

/// Source term `Q` as a density per patch, plus a constant offset per patch
/// that is subtracted from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceTerm {
    pub patches: Vec<PatchSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<f64>,
}

impl SourceTerm {
    pub fn new(patches: Vec<PatchSource>) -> Self {
        Self {
            patches,
            offsets: Vec::new(),
        }
    }

    pub fn zero(num_patches: usize) -> Self {
        Self::new(vec![PatchSource::Zero; num_patches])
    }

    pub fn constant(values: &[f64]) -> Self {
        Self::new(
            values
                .iter()
                .map(|&value| PatchSource::Constant { value })
                .collect(),
        )
    }

    pub fn validate(&self, c: &MultijunctionComplex) -> Result<()> {
        let np = c.patches().len();
        if self.patches.len() != np {
            return Err(Error::InvalidSource(format!(
                "{} patch sources for {np} patches",
                self.patches.len()
            )));
        }
        if !self.offsets.is_empty() && self.offsets.len() != np {
            return Err(Error::InvalidSource(format!(
                "{} offsets for {np} patches",
                self.offsets.len()
            )));
        }
        for (p, s) in self.patches.iter().enumerate() {
            let finite = match s {
                PatchSource::Zero => true,
                PatchSource::Constant { value } => value.is_finite(),
                PatchSource::Radial {
                    center,
                    coefficients,
                } => {
                    if center.len() != c.ambient_dim() {
                        return Err(Error::InvalidSource(format!(
                            "patch {p}: center has {} coordinates, expected {}",
                            center.len(),
                            c.ambient_dim()
                        )));
                    }
                    center.iter().chain(coefficients).all(|v| v.is_finite())
                }
                PatchSource::PerElement { values } => {
                    if values.len() != c.patch(p).num_simplices() {
                        return Err(Error::InvalidSource(format!(
                            "patch {p}: {} element values for {} simplices",
                            values.len(),
                            c.patch(p).num_simplices()
                        )));
                    }
                    values.iter().all(|v| v.is_finite())
                }
            };
            if !finite {
                return Err(Error::InvalidSource(format!("patch {p}: non-finite value")));
            }
        }
        if !self.offsets.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSource("non-finite offset".into()));
        }
        Ok(())
    }

    /// Density on `patch` at `x`, which lies in simplex `element`.
    pub fn eval(&self, patch: usize, element: usize, x: &[f64]) -> f64 {
        let offset = self.offsets.get(patch).copied().unwrap_or(0.0);
        let value = match &self.patches[patch] {
            PatchSource::Zero => 0.0,
            PatchSource::Constant { value } => *value,
            PatchSource::Radial {
                center,
                coefficients,
            } => {
                let r = crate::mesh::distance(x, center);
                coefficients.iter().rev().fold(0.0, |acc, c| acc * r + c)
            }
            PatchSource::PerElement { values } => values[element],
        };
        value - offset
    }

    /// Same source with `offsets[p]` subtracted on patch `p`.
    pub fn with_offsets(&self, offsets: Vec<f64>) -> Self {
        Self {
            patches: self.patches.clone(),
            offsets,
        }
    }

    /// Source on the uniform refinement of `parent`: per-element values are
    /// inherited by the 2^k children of each simplex.
    pub fn refined(&self, parent: &MultijunctionComplex) -> Self {
        let patches = self
            .patches
            .iter()
            .enumerate()
            .map(|(p, s)| match s {
                PatchSource::PerElement { values } => {
                    let children = 1usize << parent.patch(p).dim();
                    PatchSource::PerElement {
                        values: values
                            .iter()
                            .flat_map(|&v| std::iter::repeat_n(v, children))
                            .collect(),
                    }
                }
                other => other.clone(),
            })
            .collect();
        Self {
            patches,
            offsets: self.offsets.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let patches = self
            .patches
            .iter()
            .map(|s| match s {
                PatchSource::Zero => PatchSource::Zero,
                PatchSource::Constant { value } => PatchSource::Constant {
                    value: value * factor,
                },
                PatchSource::Radial {
                    center,
                    coefficients,
                } => PatchSource::Radial {
                    center: center.clone(),
                    coefficients: coefficients.iter().map(|c| c * factor).collect(),
                },
                PatchSource::PerElement { values } => PatchSource::PerElement {
                    values: values.iter().map(|v| v * factor).collect(),
                },
            })
            .collect();
        Self {
            patches,
            offsets: self.offsets.iter().map(|o| o * factor).collect(),
        }
    }
}

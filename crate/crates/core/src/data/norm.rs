use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::grid::{GridField, Variable};

/// Nominal physical range of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalRange {
    pub min: f64,
    pub max: f64,
}

impl NominalRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn half_width(&self) -> f64 {
        (self.max - self.min) / 2.0
    }

    pub fn midpoint(&self) -> f64 {
        (self.max + self.min) / 2.0
    }

    /// `2 (x - min) / (max - min) - 1`, clamped to `[-1, 1]`.
    pub fn normalize(&self, x: f64) -> f64 {
        (2.0 * (x - self.min) / (self.max - self.min) - 1.0).clamp(-1.0, 1.0)
    }

    /// Affine inverse of [`NominalRange::normalize`] (without the clamp).
    pub fn denormalize(&self, x: f64) -> f64 {
        x * self.half_width() + self.midpoint()
    }
}

/// Per-variable nominal ranges mapping physical values onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    ranges: BTreeMap<Variable, NominalRange>,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self::from_ranges([
            (Variable::SivU, NominalRange::new(-50.0, 50.0)),
            (Variable::SivV, NominalRange::new(-50.0, 50.0)),
            (Variable::Sic, NominalRange::new(0.0, 1.0)),
            (Variable::T2m, NominalRange::new(-50.0, 30.0)),
            (Variable::WindU, NominalRange::new(-30.0, 30.0)),
            (Variable::WindV, NominalRange::new(-30.0, 30.0)),
        ])
        .expect("default ranges are well formed")
    }
}

impl NormalizationSpec {
    pub fn from_ranges(ranges: impl IntoIterator<Item = (Variable, NominalRange)>) -> Result<Self, DataError> {
        let ranges: BTreeMap<_, _> = ranges.into_iter().collect();
        for (var, r) in &ranges {
            if !(r.max > r.min) || !r.min.is_finite() || !r.max.is_finite() {
                return Err(DataError::Config(format!("{var}: nominal max {} must exceed min {}", r.max, r.min)));
            }
        }
        Ok(Self { ranges })
    }

    pub fn range(&self, variable: Variable) -> Result<NominalRange, DataError> {
        self.ranges
            .get(&variable)
            .copied()
            .ok_or(DataError::UnknownVariable(variable))
    }

    pub fn ranges(&self) -> impl Iterator<Item = (Variable, NominalRange)> + '_ {
        self.ranges.iter().map(|(v, r)| (*v, *r))
    }

    /// Normalized values of `field`; invalid cells stay NaN.
    pub fn normalize(&self, field: &GridField) -> Result<Vec<f32>, DataError> {
        let r = self.range(field.variable())?;
        Ok(field
            .values()
            .iter()
            .zip(field.valid())
            .map(|(v, ok)| if *ok { r.normalize(*v as f64) as f32 } else { f32::NAN })
            .collect())
    }
}

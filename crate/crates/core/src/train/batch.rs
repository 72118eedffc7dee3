use icepinn_autodiff::{Real, Shape, Tensor};

use super::{Result, TrainError};
use crate::data::{SampleWindow, INPUT_CHANNELS, TARGET_CHANNELS};
use crate::grid::GridGeometry;

/// Windows stacked along the batch axis.
#[derive(Debug, Clone)]
pub struct Batch<T: Real> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
    pub prev_sic: Tensor<T>,
    pub mask: Vec<bool>,
    pub geometry: GridGeometry,
}

impl<T: Real> Batch<T> {
    pub fn assemble(windows: &[&SampleWindow]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| TrainError::Config("cannot assemble an empty batch".into()))?;
        let geometry = first.geometry.clone();
        let (n, h, w) = (windows.len(), geometry.height, geometry.width);
        let mut input = Vec::with_capacity(n * INPUT_CHANNELS * h * w);
        let mut target = Vec::with_capacity(n * TARGET_CHANNELS * h * w);
        let mut prev = Vec::with_capacity(n * h * w);
        let mut mask = Vec::with_capacity(n * h * w);
        for win in windows {
            if !win.geometry.compatible(&geometry) {
                return Err(TrainError::Config(format!(
                    "window {} has a different grid than {}",
                    win.date, first.date
                )));
            }
            let lit = |x: &f32| T::lit(f64::from(*x));
            input.extend(win.input.iter().map(lit));
            target.extend(win.target.iter().map(lit));
            prev.extend(win.prev_sic.iter().map(lit));
            mask.extend_from_slice(&win.valid);
        }
        Ok(Self {
            input: Tensor::from_vec(Shape::new(n, INPUT_CHANNELS, h, w), input)?,
            target: Tensor::from_vec(Shape::new(n, TARGET_CHANNELS, h, w), target)?,
            prev_sic: Tensor::from_vec(Shape::new(n, 1, h, w), prev)?,
            mask,
            geometry,
        })
    }
}

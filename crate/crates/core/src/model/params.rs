use std::collections::HashMap;

use icepinn_autodiff::{Graph, Real, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, Result, LEVELS};

pub const BRANCHES: [&str; 2] = ["siv", "sic"];
pub const WAM_PATHS: [&str; 3] = ["share", "siv", "sic"];
pub const WAM_SCALARS: [&str; 4] = ["a_in_siv", "a_in_sic", "a_out_siv", "a_out_sic"];
pub const WAM_COUNT: usize = 2 * LEVELS;
const WAM_SCALAR_INIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `[-sqrt(3 / fan_in), sqrt(3 / fan_in)]`.
    FanIn(usize),
    Zero,
    WamScalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub init: Init,
}

/// Feature width of WAM `k` (1-based): levels 1..3 on the way down, then
/// 3..1 on the way up.
pub fn wam_width(config: &ModelConfig, k: usize) -> usize {
    let level = if k <= LEVELS { k } else { 2 * LEVELS + 1 - k };
    config.width_at(level)
}

fn conv(specs: &mut Vec<ParamSpec>, name: String, cin: usize, cout: usize, k: usize) {
    specs.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: Shape::new(cout, cin, k, k),
        init: Init::FanIn(cin * k * k),
    });
    specs.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: Shape::new(cout, 1, 1, 1),
        init: Init::Zero,
    });
}

/// Every parameter in storage order. Names are stable across runs.
pub fn layout(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    for b in BRANCHES {
        let mut cin = config.input_channels();
        for l in 1..=LEVELS {
            let c = config.width_at(l);
            conv(&mut s, format!("{b}.enc{l}.conv1"), cin, c, 3);
            conv(&mut s, format!("{b}.enc{l}.conv2"), c, c, 3);
            cin = c;
        }
        let deep = 2 * config.width_at(LEVELS);
        conv(&mut s, format!("{b}.bottleneck.conv1"), cin, deep, 3);
        conv(&mut s, format!("{b}.bottleneck.conv2"), deep, deep, 3);
        let mut below = deep;
        for l in (1..=LEVELS).rev() {
            let c = config.width_at(l);
            s.push(ParamSpec {
                name: format!("{b}.dec{l}.up.weight"),
                shape: Shape::new(below, c, 2, 2),
                init: Init::FanIn(below),
            });
            s.push(ParamSpec {
                name: format!("{b}.dec{l}.up.bias"),
                shape: Shape::new(c, 1, 1, 1),
                init: Init::Zero,
            });
            conv(&mut s, format!("{b}.dec{l}.conv1"), 2 * c, c, 3);
            conv(&mut s, format!("{b}.dec{l}.conv2"), c, c, 3);
            below = c;
        }
        let out = if b == "siv" { 2 } else { 1 };
        conv(&mut s, format!("{b}.head"), below, out, 1);
    }
    for k in 1..=WAM_COUNT {
        let c = wam_width(config, k);
        let hidden = c / config.attention_reduction;
        for a in WAM_SCALARS {
            s.push(ParamSpec {
                name: format!("wam{k}.{a}"),
                shape: Shape::SCALAR,
                init: Init::WamScalar,
            });
        }
        for p in WAM_PATHS {
            conv(&mut s, format!("wam{k}.{p}.channel.fc1"), c, hidden, 1);
            conv(&mut s, format!("wam{k}.{p}.channel.fc2"), hidden, c, 1);
            let ks = config.spatial_kernel;
            conv(&mut s, format!("wam{k}.{p}.spatial"), 2, 1, ks);
        }
    }
    s
}

/// All learnable tensors of one model, addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub struct HisUnetParams<T: Real> {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> HisUnetParams<T> {
    /// Assembles parameters from tensors in [`layout`] order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        if specs.len() != tensors.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if s.shape != t.shape() {
                return Err(ModelError::Config(format!("{} has shape {}, expected {}", s.name, t.shape(), s.shape)));
            }
        }
        let index = specs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        Ok(Self {
            config,
            specs,
            tensors,
            index,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.tensors[self.position(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = self.position(name)?;
        Ok(&mut self.tensors[i])
    }

    pub fn cast<U: Real>(&self) -> HisUnetParams<U> {
        HisUnetParams {
            config: self.config.clone(),
            specs: self.specs.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            index: self.index.clone(),
        }
    }

    /// Places every tensor on `g`, as trainable leaves or as constants.
    pub fn bind<'a>(&'a self, g: &mut Graph<T>, trainable: bool) -> Bound<'a, T> {
        let vars = self.tensors.iter().map(|t| g.leaf(t.clone(), trainable)).collect();
        Bound { params: self, vars }
    }
}

/// Parameters placed on a graph.
#[derive(Debug)]
pub struct Bound<'a, T: Real> {
    params: &'a HisUnetParams<T>,
    vars: Vec<Var>,
}

impl<T: Real> Bound<'_, T> {
    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        Ok(self.vars[self.params.position(name)?])
    }

    /// Vars in layout order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Fan-in scaled uniform weights, zero biases, WAM scalars at 0.5.
/// Deterministic under `seed`.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<HisUnetParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = layout(config)
        .iter()
        .map(|s| match s.init {
            Init::Zero => Tensor::zeros(s.shape),
            Init::WamScalar => Tensor::full(s.shape, T::lit(WAM_SCALAR_INIT)),
            Init::FanIn(fan_in) => {
                let bound = (3.0 / fan_in as f64).sqrt();
                let data = (0..s.shape.len())
                    .map(|_| T::lit(rng.gen_range(-bound..bound)))
                    .collect();
                Tensor::from_vec(s.shape, data).expect("layout shape matches data")
            }
        })
        .collect();
    HisUnetParams::from_tensors(config.clone(), tensors)
}

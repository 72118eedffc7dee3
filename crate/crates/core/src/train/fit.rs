use icepinn_autodiff::{Graph, Real};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamConfig, AdamState, Batch, Result, TrainError};
use crate::data::{NormalizationSpec, SampleWindow};
use crate::grid::Variable;
use crate::model::{forward, init_params, HisUnetParams, ModelConfig};
use crate::physics::{self, LossBreakdown, LossInputs, LossWeights};

/// Stream offset so the shuffle never shares a seed with initialization.
const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// What the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Data loss plus weighted saturation and thermodynamic terms.
    PhysicsInformed { weights: LossWeights },
    /// Data loss alone, built without the physics graph. The physics terms
    /// are still evaluated for the log but never reach the gradient.
    DataOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            adam: AdamConfig::default(),
            objective: Objective::PhysicsInformed {
                weights: LossWeights {
                    lambda_sat: 0.2,
                    lambda_therm: 0.2,
                },
            },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        self.adam.validate()?;
        if let Objective::PhysicsInformed { weights } = self.objective {
            weights.validate()?;
        }
        Ok(())
    }
}

/// Batch-averaged loss components of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub data: f64,
    pub sat: f64,
    pub therm: f64,
    pub total: f64,
    pub batches: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub params: HisUnetParams<T>,
    pub log: Vec<EpochLog>,
}

/// Initializes from `config.seed` and trains.
pub fn train(
    model: &ModelConfig,
    windows: &[SampleWindow],
    norm: &NormalizationSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome<f32>> {
    config.validate()?;
    let params = init_params::<f32>(model, config.seed)?;
    train_params(params, windows, norm, config)
}

fn check_windows(windows: &[SampleWindow]) -> Result<()> {
    let first = windows
        .first()
        .ok_or_else(|| TrainError::Config("training set is empty".into()))?;
    if let Some(w) = windows.iter().find(|w| !w.geometry.compatible(&first.geometry)) {
        return Err(TrainError::Config(format!(
            "window {} is on a different grid than {}",
            w.date, first.date
        )));
    }
    Ok(())
}

fn loss_on_batch<T: Real>(
    g: &mut Graph<T>,
    params: &HisUnetParams<T>,
    batch: &Batch<T>,
    norm: &NormalizationSpec,
    objective: Objective,
) -> Result<(icepinn_autodiff::Var, LossBreakdown, Vec<icepinn_autodiff::Var>)> {
    let bound = params.bind(g, true);
    let input = g.constant(batch.input.clone());
    let target = g.constant(batch.target.clone());
    let prev = g.constant(batch.prev_sic.clone());
    let (siv, sic) = forward(g, &bound, input)?;
    let inputs = LossInputs {
        siv,
        sic,
        target,
        prev_sic: prev,
        mask: &batch.mask,
        geometry: &batch.geometry,
        u_range: norm.range(Variable::SivU)?,
        v_range: norm.range(Variable::SivV)?,
    };
    let (loss, breakdown) = match objective {
        Objective::PhysicsInformed { weights } => physics::total_loss(g, inputs, weights)?,
        Objective::DataOnly => data_only_loss(g, inputs)?,
    };
    Ok((loss, breakdown, bound.vars().to_vec()))
}

fn data_only_loss<T: Real>(
    g: &mut Graph<T>,
    inp: LossInputs<'_>,
) -> Result<(icepinn_autodiff::Var, LossBreakdown)> {
    let pu = g.slice_channels(inp.siv, 0, 1)?;
    let pv = g.slice_channels(inp.siv, 1, 1)?;
    let ou = g.slice_channels(inp.target, 0, 1)?;
    let ov = g.slice_channels(inp.target, 1, 1)?;
    let oa = g.slice_channels(inp.target, 2, 1)?;
    let data = physics::data_loss(g, pu, pv, inp.sic, ou, ov, oa, inp.mask)?;

    // Monitoring only: these nodes come after `data` on the tape, so the
    // reverse sweep from `data` never visits them.
    let uk = physics::denormalize(g, pu, inp.u_range);
    let vk = physics::denormalize(g, pv, inp.v_range);
    let sat = physics::sat_loss(g, uk, vk, inp.sic, inp.mask)?;
    let therm = physics::therm_loss(g, inp.sic, inp.prev_sic, uk, vk, inp.geometry, inp.mask)?;

    let scalar = |v| g.value(v).data()[0].to_f64_lossy();
    let breakdown = LossBreakdown {
        data: scalar(data),
        sat: scalar(sat),
        therm: scalar(therm),
        total: scalar(data),
        valid_pixels: inp.mask.iter().filter(|m| **m).count(),
    };
    Ok((data, breakdown))
}

/// Trains `params` in place of a fresh initialization. Batches follow a
/// seeded per-epoch permutation; the last batch of an epoch may be short.
pub fn train_params<T: Real>(
    mut params: HisUnetParams<T>,
    windows: &[SampleWindow],
    norm: &NormalizationSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_windows(windows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut state = AdamState::new(params.tensors());
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut g = Graph::<T>::new();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let members: Vec<&SampleWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let batch = Batch::<T>::assemble(&members)?;
            g.reset();
            let (loss, br, vars) = loss_on_batch(&mut g, &params, &batch, norm, config.objective)?;
            if !br.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: b,
                    what: format!("loss {br:?}"),
                });
            }
            let grads = g.backward(loss)?;
            let owned: Vec<Vec<T>> = vars
                .iter()
                .zip(params.tensors())
                .map(|(v, t)| grads.get(*v).map_or_else(|| vec![T::zero(); t.len()], <[T]>::to_vec))
                .collect();
            if let Some(i) = owned.iter().position(|gr| gr.iter().any(|x| !x.is_finite())) {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: b,
                    what: format!("non-finite gradient for {}", params.specs()[i].name),
                });
            }
            let refs: Vec<&[T]> = owned.iter().map(Vec::as_slice).collect();
            adam_step(params.tensors_mut(), &refs, &mut state, &config.adam)?;
            for (s, v) in sums.iter_mut().zip([br.data, br.sat, br.therm, br.total]) {
                *s += v;
            }
            batches += 1;
            debug!("epoch {epoch} batch {b}: total {:.6}", br.total);
        }
        let n = batches as f64;
        let row = EpochLog {
            epoch,
            data: sums[0] / n,
            sat: sums[1] / n,
            therm: sums[2] / n,
            total: sums[3] / n,
            batches,
        };
        info!(
            "epoch {epoch}/{}: data {:.6} sat {:.6} therm {:.6} total {:.6}",
            config.epochs, row.data, row.sat, row.therm, row.total
        );
        log.push(row);
    }
    Ok(TrainOutcome { params, log })
}

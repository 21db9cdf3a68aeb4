use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cells::{backward_into, bce_loss, ForwardCache};
use super::{CellKind, Gradients, NetParams, Shape};
use crate::error::{Error, Result};
use crate::transition::Sample;

/// Anything with an input sequence and a multi-hot target.
pub trait SequenceSample {
    fn inputs(&self) -> &[Vec<f64>];
    fn target(&self) -> &[f64];
}

impl SequenceSample for Sample {
    fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    fn target(&self) -> &[f64] {
        &self.target
    }
}

impl SequenceSample for (Vec<Vec<f64>>, Vec<f64>) {
    fn inputs(&self) -> &[Vec<f64>] {
        &self.0
    }

    fn target(&self) -> &[f64] {
        &self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 200,
            batch_size: 32,
            hidden_dim: 32,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("batch_size and hidden_dim must be positive".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    /// Mean training loss per epoch, measured before each batch's update.
    pub loss_trace: Vec<f64>,
}

/// Mean loss and mean gradient over a batch.
pub fn batch_gradient<S: SequenceSample>(samples: &[S], params: &NetParams) -> Result<(f64, Gradients)> {
    let mut cache = ForwardCache::new(params.shape());
    let mut grads = Gradients::zeros(params.shape());
    let loss = accumulate(samples.iter(), params, &mut cache, &mut grads)?;
    Ok((loss, grads))
}

fn accumulate<'a, S: SequenceSample + 'a>(
    batch: impl ExactSizeIterator<Item = &'a S>,
    params: &NetParams,
    cache: &mut ForwardCache,
    grads: &mut Gradients,
) -> Result<f64> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    for s in batch {
        let y = cache.run(s.inputs(), params)?;
        loss += bce_loss(y, s.target());
        backward_into(cache, s.target(), params, grads, scale)?;
    }
    Ok(loss * scale)
}

/// Mini-batch gradient descent with momentum; shuffling and initialization
/// draw from one generator seeded by `config.seed`.
pub fn train<S: SequenceSample>(samples: &[S], cell: CellKind, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let input_dim = first.inputs().first().map(Vec::len).unwrap_or(0);
    let shape = Shape::new(cell, input_dim, config.hidden_dim, first.target().len())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = NetParams::init(shape, config.init_scale, &mut rng);
    let mut velocity = vec![0.0; shape.param_count()];
    let mut grads = Gradients::zeros(shape);
    let mut cache = ForwardCache::new(shape);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.values_mut().fill(0.0);
            let loss = accumulate(batch.iter().map(|&i| &samples[i]), &params, &mut cache, &mut grads)?;
            epoch_loss += loss * batch.len() as f64;
            for ((w, v), g) in params.values_mut().iter_mut().zip(&mut velocity).zip(grads.values()) {
                *v = config.momentum * *v - config.learning_rate * g;
                *w += *v;
            }
        }
        loss_trace.push(epoch_loss / samples.len() as f64);
    }
    Ok(TrainOutcome { params, loss_trace })
}

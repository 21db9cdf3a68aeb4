#![allow(dead_code)]

use genreseq::recurrent::{backward, bce_loss, forward_sequence, CellKind, NetParams, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error of near-zero gradients. Central
/// differences at FD_STEP carry about 1e-11 of rounding noise.
pub const FD_FLOOR: f64 = 1e-6;

pub struct GradInstance {
    pub params: NetParams,
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// A random network and sequence. Odd seeds use multi-hot inputs, even
/// seeds dense ones, so both kernel paths are exercised.
pub fn grad_instance(cell: CellKind, input_dim: usize, hidden_dim: usize, steps: usize, seed: u64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(cell, input_dim, hidden_dim, input_dim).unwrap();
    let values = (0..shape.param_count()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let params = NetParams::from_values(shape, values).unwrap();
    let sparse = seed % 2 == 1;
    let inputs = (0..steps)
        .map(|_| {
            (0..input_dim)
                .map(|_| if sparse { f64::from(u8::from(rng.gen_bool(0.15))) } else { rng.gen_range(-1.0..1.0) })
                .collect()
        })
        .collect();
    let target = (0..input_dim).map(|_| f64::from(u8::from(rng.gen_bool(0.3)))).collect();
    GradInstance { params, inputs, target }
}

fn loss_at(params: &NetParams, inst: &GradInstance) -> f64 {
    let (y, _) = forward_sequence(&inst.inputs, params).unwrap();
    bce_loss(&y, &inst.target)
}

/// Largest relative error between analytic and central-difference gradients.
pub fn max_relative_error(inst: &GradInstance) -> f64 {
    let (_, cache) = forward_sequence(&inst.inputs, &inst.params).unwrap();
    let analytic = backward(&cache, &inst.target, &inst.params).unwrap();
    let mut probe = inst.params.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.values().iter().enumerate() {
        let w = inst.params.values()[k];
        probe.values_mut()[k] = w + FD_STEP;
        let up = loss_at(&probe, inst);
        probe.values_mut()[k] = w - FD_STEP;
        let down = loss_at(&probe, inst);
        probe.values_mut()[k] = w;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

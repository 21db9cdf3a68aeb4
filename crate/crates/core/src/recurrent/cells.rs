//! Cell kernels, the cached forward pass and its exact backward pass.

use super::linalg::{
    add_acc, collect_nonzeros, gemv_acc, gemv_cat_acc, gemv_t_acc, ger_acc, ger_cat_acc, sigmoid, Input,
};
use super::{split, split_mut, CellKind, Gradients, NetParams, Shape};
use crate::error::{Error, Result};

const CLIP: f64 = 1e-7;

fn check_cell(params: &NetParams, cell: CellKind) -> Result<()> {
    if params.cell() != cell {
        return Err(Error::ShapeMismatch(format!(
            "{cell} step called with {} parameters",
            params.cell()
        )));
    }
    Ok(())
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

fn rnn_kernel(u: &[f64], w: &[f64], b: &[f64], x: Input, h_prev: &[f64], h_out: &mut [f64]) {
    h_out.copy_from_slice(b);
    gemv_cat_acc(h_out, u, &[], x);
    gemv_acc(h_out, w, h_prev);
    h_out.iter_mut().for_each(|v| *v = v.tanh());
}

/// `gates` receives `[f | i | c̃ | o | tanh(c)]`.
fn lstm_kernel(
    blocks: &[&[f64]],
    h_prev: &[f64],
    x: Input,
    c_prev: &[f64],
    gates: &mut [f64],
    c_out: &mut [f64],
    h_out: &mut [f64],
) {
    let h = c_prev.len();
    for g in 0..4 {
        let (w, b) = (blocks[2 * g], blocks[2 * g + 1]);
        let pre = &mut gates[g * h..(g + 1) * h];
        pre.copy_from_slice(b);
        gemv_cat_acc(pre, w, h_prev, x);
        if g == 2 {
            pre.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            pre.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }
    let (act, tc) = gates.split_at_mut(4 * h);
    for k in 0..h {
        let (f, i, cand, o) = (act[k], act[h + k], act[2 * h + k], act[3 * h + k]);
        let c = f * c_prev[k] + i * cand;
        c_out[k] = c;
        tc[k] = c.tanh();
        h_out[k] = o * tc[k];
    }
}

/// `gates` receives `[z | r | h̃]`; `rh` receives `r ∗ h_prev`.
#[allow(clippy::too_many_arguments)]
fn gru_kernel(
    wz: &[f64],
    wr: &[f64],
    w: &[f64],
    h_prev: &[f64],
    x: Input,
    rh: &mut [f64],
    gates: &mut [f64],
    h_out: &mut [f64],
) {
    let h = h_prev.len();
    let (update, rest) = gates.split_at_mut(h);
    let (reset, cand) = rest.split_at_mut(h);
    update.fill(0.0);
    gemv_cat_acc(update, wz, h_prev, x);
    update.iter_mut().for_each(|v| *v = sigmoid(*v));
    reset.fill(0.0);
    gemv_cat_acc(reset, wr, h_prev, x);
    reset.iter_mut().for_each(|v| *v = sigmoid(*v));
    for k in 0..h {
        rh[k] = reset[k] * h_prev[k];
    }
    cand.fill(0.0);
    gemv_cat_acc(cand, w, rh, x);
    cand.iter_mut().for_each(|v| *v = v.tanh());
    for k in 0..h {
        h_out[k] = (1.0 - update[k]) * h_prev[k] + update[k] * cand[k];
    }
}

/// `h_t = tanh(U x_t + W h_{t-1} + b)`.
pub fn rnn_step(x: &[f64], h_prev: &[f64], params: &NetParams) -> Result<Vec<f64>> {
    check_cell(params, CellKind::Rnn)?;
    let s = params.shape();
    check_len("x_t", x.len(), s.input_dim)?;
    check_len("h_prev", h_prev.len(), s.hidden_dim)?;
    let b = params.blocks();
    let mut h = vec![0.0; s.hidden_dim];
    rnn_kernel(b[0], b[1], b[2], Input::dense(x), h_prev, &mut h);
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

pub fn lstm_step(x: &[f64], state: &LstmState, params: &NetParams) -> Result<LstmState> {
    check_cell(params, CellKind::Lstm)?;
    let s = params.shape();
    check_len("x_t", x.len(), s.input_dim)?;
    check_len("h_prev", state.h.len(), s.hidden_dim)?;
    check_len("c_prev", state.c.len(), s.hidden_dim)?;
    let mut gates = vec![0.0; 5 * s.hidden_dim];
    let mut next = LstmState {
        h: vec![0.0; s.hidden_dim],
        c: vec![0.0; s.hidden_dim],
    };
    lstm_kernel(&params.blocks(), &state.h, Input::dense(x), &state.c, &mut gates, &mut next.c, &mut next.h);
    Ok(next)
}

pub fn gru_step(x: &[f64], h_prev: &[f64], params: &NetParams) -> Result<Vec<f64>> {
    check_cell(params, CellKind::Gru)?;
    let s = params.shape();
    check_len("x_t", x.len(), s.input_dim)?;
    check_len("h_prev", h_prev.len(), s.hidden_dim)?;
    let b = params.blocks();
    let mut rh = vec![0.0; s.hidden_dim];
    let mut gates = vec![0.0; 3 * s.hidden_dim];
    let mut h = vec![0.0; s.hidden_dim];
    gru_kernel(b[0], b[1], b[2], h_prev, Input::dense(x), &mut rh, &mut gates, &mut h);
    Ok(h)
}

fn gate_width(cell: CellKind) -> usize {
    match cell {
        CellKind::Rnn => 0,
        CellKind::Lstm => 5,
        CellKind::Gru => 3,
    }
}

/// Activations of one forward pass, reusable across samples.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    shape: Shape,
    steps: usize,
    xs: Vec<f64>,
    /// Nonzero positions of each sparse input, concatenated.
    nz: Vec<usize>,
    /// Per step: `Some((start, end))` into `nz` when the input is sparse.
    nz_spans: Vec<Option<(usize, usize)>>,
    /// `h_0 .. h_T`, with `h_0 = 0`.
    hs: Vec<f64>,
    /// LSTM cell states `c_0 .. c_T`.
    cs: Vec<f64>,
    /// `r_t ∗ h_{t-1}` per step (GRU).
    rhs: Vec<f64>,
    gates: Vec<f64>,
    y: Vec<f64>,
}

impl ForwardCache {
    pub fn new(shape: Shape) -> Self {
        ForwardCache {
            shape,
            steps: 0,
            xs: Vec::new(),
            nz: Vec::new(),
            nz_spans: Vec::new(),
            hs: Vec::new(),
            cs: Vec::new(),
            rhs: Vec::new(),
            gates: Vec::new(),
            y: vec![0.0; shape.output_dim],
        }
    }

    pub fn output(&self) -> &[f64] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Hidden state after step `t` (1-based; 0 is the initial state).
    pub fn hidden(&self, t: usize) -> &[f64] {
        let h = self.shape.hidden_dim;
        &self.hs[t * h..(t + 1) * h]
    }

    fn input(&self, t: usize) -> Input<'_> {
        let i = self.shape.input_dim;
        Input {
            values: &self.xs[t * i..(t + 1) * i],
            nz: self.nz_spans[t].map(|(a, b)| &self.nz[a..b]),
        }
    }

    fn resize(&mut self, steps: usize) {
        let s = self.shape;
        let (i, h) = (s.input_dim, s.hidden_dim);
        self.steps = steps;
        self.xs.resize(steps * i, 0.0);
        self.nz.clear();
        self.nz_spans.clear();
        self.hs.resize((steps + 1) * h, 0.0);
        self.hs[..h].fill(0.0);
        self.cs.resize(if s.cell == CellKind::Lstm { (steps + 1) * h } else { 0 }, 0.0);
        self.cs.iter_mut().take(h).for_each(|v| *v = 0.0);
        self.rhs.resize(if s.cell == CellKind::Gru { steps * h } else { 0 }, 0.0);
        self.gates.resize(steps * gate_width(s.cell) * h, 0.0);
    }

    /// Run the cell over `inputs` from a zero state, then the sigmoid head.
    pub fn run(&mut self, inputs: &[Vec<f64>], params: &NetParams) -> Result<&[f64]> {
        let s = params.shape();
        if s != self.shape {
            return Err(Error::ShapeMismatch("cache built for a different network shape".into()));
        }
        if inputs.is_empty() {
            return Err(Error::ShapeMismatch("empty input sequence".into()));
        }
        for x in inputs {
            check_len("input step", x.len(), s.input_dim)?;
        }
        self.resize(inputs.len());
        let (i, h) = (s.input_dim, s.hidden_dim);
        for (t, x) in inputs.iter().enumerate() {
            self.xs[t * i..(t + 1) * i].copy_from_slice(x);
            let start = self.nz.len();
            if collect_nonzeros(x, &mut self.nz) {
                self.nz_spans.push(Some((start, self.nz.len())));
            } else {
                self.nz.truncate(start);
                self.nz_spans.push(None);
            }
        }

        let gw = gate_width(s.cell) * h;
        let blocks = params.blocks();
        let mut hs = std::mem::take(&mut self.hs);
        let mut cs = std::mem::take(&mut self.cs);
        let mut rhs = std::mem::take(&mut self.rhs);
        let mut gates = std::mem::take(&mut self.gates);
        for t in 0..self.steps {
            let x = self.input(t);
            let (prev, next) = hs.split_at_mut((t + 1) * h);
            let h_prev = &prev[t * h..];
            let h_out = &mut next[..h];
            let g = &mut gates[t * gw..(t + 1) * gw];
            match s.cell {
                CellKind::Rnn => rnn_kernel(blocks[0], blocks[1], blocks[2], x, h_prev, h_out),
                CellKind::Lstm => {
                    let (cp, cn) = cs.split_at_mut((t + 1) * h);
                    lstm_kernel(&blocks[..8], h_prev, x, &cp[t * h..], g, &mut cn[..h], h_out);
                }
                CellKind::Gru => {
                    let rh = &mut rhs[t * h..(t + 1) * h];
                    gru_kernel(blocks[0], blocks[1], blocks[2], h_prev, x, rh, g, h_out);
                }
            }
        }
        self.hs = hs;
        self.cs = cs;
        self.rhs = rhs;
        self.gates = gates;

        let n = blocks.len();
        let (v, out_b) = (blocks[n - 2], blocks[n - 1]);
        let h_last = &self.hs[self.steps * h..];
        self.y.copy_from_slice(out_b);
        gemv_acc(&mut self.y, v, h_last);
        self.y.iter_mut().for_each(|l| *l = sigmoid(*l));
        Ok(&self.y)
    }
}

/// Forward pass over a full input sequence from zero initial state.
pub fn forward_sequence(inputs: &[Vec<f64>], params: &NetParams) -> Result<(Vec<f64>, ForwardCache)> {
    let mut cache = ForwardCache::new(params.shape());
    let y = cache.run(inputs, params)?.to_vec();
    Ok((y, cache))
}

/// Mean binary cross-entropy over genres, with `y` clipped to `[1e-7, 1-1e-7]`.
pub fn bce_loss(y: &[f64], target: &[f64]) -> f64 {
    assert_eq!(y.len(), target.len(), "prediction and target lengths differ");
    let total: f64 = y
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    total / y.len() as f64
}

/// Exact gradients of [`bce_loss`] with respect to every parameter.
pub fn backward(cache: &ForwardCache, target: &[f64], params: &NetParams) -> Result<Gradients> {
    let mut grads = Gradients::zeros(params.shape());
    backward_into(cache, target, params, &mut grads, 1.0)?;
    Ok(grads)
}

/// Accumulate `scale` times the gradient into `grads`.
pub fn backward_into(
    cache: &ForwardCache,
    target: &[f64],
    params: &NetParams,
    grads: &mut Gradients,
    scale: f64,
) -> Result<()> {
    let s = params.shape();
    if s != cache.shape || s != grads.shape {
        return Err(Error::ShapeMismatch("cache, params and gradients disagree on shape".into()));
    }
    check_len("target", target.len(), s.output_dim)?;
    let (h, zd) = (s.hidden_dim, s.concat_dim());
    let steps = cache.steps;
    let sizes: Vec<usize> = s.blocks().iter().map(|b| b.len()).collect();
    let p = split(params.values(), &sizes);
    let mut g = split_mut(grads.values_mut(), &sizes);
    let nb = p.len();

    // sigmoid + mean BCE: dL/dlogit = (y - t) / n
    let inv_n = scale / s.output_dim as f64;
    let dlogit: Vec<f64> = cache.y.iter().zip(target).map(|(y, t)| (y - t) * inv_n).collect();
    let h_last = &cache.hs[steps * h..];
    ger_acc(g[nb - 2], &dlogit, h_last);
    add_acc(g[nb - 1], &dlogit);
    let mut dh = vec![0.0; h];
    gemv_t_acc(&mut dh, p[nb - 2], h, &dlogit);

    // Gradients flowing into h_0 are never used, so step 0 skips them.
    match s.cell {
        CellKind::Rnn => {
            let mut da = vec![0.0; h];
            for t in (0..steps).rev() {
                let h_t = &cache.hs[(t + 1) * h..(t + 2) * h];
                let h_prev = &cache.hs[t * h..(t + 1) * h];
                for k in 0..h {
                    da[k] = dh[k] * (1.0 - h_t[k] * h_t[k]);
                }
                ger_cat_acc(g[0], &da, &[], cache.input(t));
                ger_acc(g[1], &da, h_prev);
                add_acc(g[2], &da);
                if t > 0 {
                    dh.fill(0.0);
                    gemv_t_acc(&mut dh, p[1], h, &da);
                }
            }
        }
        CellKind::Lstm => {
            let gw = 5 * h;
            let mut dc = vec![0.0; h];
            let mut da = vec![0.0; 4 * h];
            for t in (0..steps).rev() {
                let gates = &cache.gates[t * gw..(t + 1) * gw];
                let c_prev = &cache.cs[t * h..(t + 1) * h];
                let h_prev = &cache.hs[t * h..(t + 1) * h];
                let x = cache.input(t);
                for k in 0..h {
                    let (f, i, cand, o, tc) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k], gates[4 * h + k]);
                    let d_o = dh[k] * tc;
                    let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                    da[k] = dck * c_prev[k] * f * (1.0 - f);
                    da[h + k] = dck * cand * i * (1.0 - i);
                    da[2 * h + k] = dck * i * (1.0 - cand * cand);
                    da[3 * h + k] = d_o * o * (1.0 - o);
                    dc[k] = dck * f;
                }
                dh.fill(0.0);
                for gate in 0..4 {
                    let dag = &da[gate * h..(gate + 1) * h];
                    ger_cat_acc(g[2 * gate], dag, h_prev, x);
                    add_acc(g[2 * gate + 1], dag);
                    if t > 0 {
                        gemv_t_acc(&mut dh, p[2 * gate], zd, dag);
                    }
                }
            }
        }
        CellKind::Gru => {
            let gw = 3 * h;
            let mut dh_prev = vec![0.0; h];
            let mut d_update = vec![0.0; h];
            let mut d_reset = vec![0.0; h];
            let mut d_cand = vec![0.0; h];
            let mut d_rh = vec![0.0; h];
            for t in (0..steps).rev() {
                let gates = &cache.gates[t * gw..(t + 1) * gw];
                let (update, reset, cand) = (&gates[..h], &gates[h..2 * h], &gates[2 * h..]);
                let h_prev = &cache.hs[t * h..(t + 1) * h];
                let rh = &cache.rhs[t * h..(t + 1) * h];
                let x = cache.input(t);
                for k in 0..h {
                    d_cand[k] = dh[k] * update[k] * (1.0 - cand[k] * cand[k]);
                    d_update[k] = dh[k] * (cand[k] - h_prev[k]) * update[k] * (1.0 - update[k]);
                    dh_prev[k] = dh[k] * (1.0 - update[k]);
                }
                ger_cat_acc(g[2], &d_cand, rh, x);
                d_rh.fill(0.0);
                gemv_t_acc(&mut d_rh, p[2], zd, &d_cand);
                for k in 0..h {
                    d_reset[k] = d_rh[k] * h_prev[k] * reset[k] * (1.0 - reset[k]);
                    dh_prev[k] += d_rh[k] * reset[k];
                }
                ger_cat_acc(g[0], &d_update, h_prev, x);
                ger_cat_acc(g[1], &d_reset, h_prev, x);
                if t > 0 {
                    gemv_t_acc(&mut dh_prev, p[0], zd, &d_update);
                    gemv_t_acc(&mut dh_prev, p[1], zd, &d_reset);
                    dh.copy_from_slice(&dh_prev);
                }
            }
        }
    }
    Ok(())
}

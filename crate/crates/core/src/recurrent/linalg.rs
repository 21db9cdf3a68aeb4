//! Dense row-major kernels used by the cells, with a sparse path for
//! multi-hot inputs.

/// An input vector, optionally with the positions of its nonzero entries.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Input<'a> {
    pub values: &'a [f64],
    pub nz: Option<&'a [usize]>,
}

impl<'a> Input<'a> {
    pub fn dense(values: &'a [f64]) -> Self {
        Input { values, nz: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }
}

/// Record the nonzero positions of `x` in `out`; true when at most half are nonzero.
pub(crate) fn collect_nonzeros(x: &[f64], out: &mut Vec<usize>) -> bool {
    let start = out.len();
    out.extend(x.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, _)| j));
    2 * (out.len() - start) <= x.len()
}

/// Dot product over four interleaved partial sums.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut lanes = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

#[inline]
fn input_dot(row: &[f64], x: Input) -> f64 {
    match x.nz {
        Some(idx) => idx.iter().map(|&j| row[j] * x.values[j]).sum(),
        None => dot(row, x.values),
    }
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// `out += M x` where `M` is `out.len() x x.len()`.
#[inline]
pub(crate) fn gemv_acc(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += M [a, x]` where `M` has `a.len() + x.len()` columns.
#[inline]
pub(crate) fn gemv_cat_acc(out: &mut [f64], m: &[f64], a: &[f64], x: Input) {
    let cols = a.len() + x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        let (ra, rx) = row.split_at(a.len());
        *o += dot(ra, a) + input_dot(rx, x);
    }
}

/// `out += M[:, ..out.len()]ᵀ d` where `M` is `d.len() x cols`.
#[inline]
pub(crate) fn gemv_t_acc(out: &mut [f64], m: &[f64], cols: usize, d: &[f64]) {
    debug_assert!(out.len() <= cols);
    debug_assert_eq!(m.len(), d.len() * cols);
    for (&dr, row) in d.iter().zip(m.chunks_exact(cols)) {
        if dr != 0.0 {
            axpy(out, dr, &row[..out.len()]);
        }
    }
}

/// `g += d xᵀ`.
#[inline]
pub(crate) fn ger_acc(g: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(g.len(), d.len() * cols);
    for (&dr, row) in d.iter().zip(g.chunks_exact_mut(cols)) {
        if dr != 0.0 {
            axpy(row, dr, x);
        }
    }
}

/// `g += d [a, x]ᵀ`.
#[inline]
pub(crate) fn ger_cat_acc(g: &mut [f64], d: &[f64], a: &[f64], x: Input) {
    let cols = a.len() + x.len();
    debug_assert_eq!(g.len(), d.len() * cols);
    for (&dr, row) in d.iter().zip(g.chunks_exact_mut(cols)) {
        if dr == 0.0 {
            continue;
        }
        let (ra, rx) = row.split_at_mut(a.len());
        axpy(ra, dr, a);
        match x.nz {
            Some(idx) => {
                for &j in idx {
                    rx[j] += dr * x.values[j];
                }
            }
            None => axpy(rx, dr, x.values),
        }
    }
}

#[inline]
pub(crate) fn add_acc(out: &mut [f64], x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += v;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

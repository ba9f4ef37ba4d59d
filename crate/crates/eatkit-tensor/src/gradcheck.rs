//! Central-difference gradient verification. This is the oracle the whole
//! workspace is judged against: analytic gradients from the tape are compared
//! coordinate-wise with (f(x+h) - f(x-h)) / 2h.

use crate::error::{Result, TensorError};
use crate::tape::{ParamId, ParamStore, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs())
}

/// Check d loss / d x over every coordinate of `x`.
/// `f` must build a scalar loss from the supplied leaf.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&'a Tape, Var<'a>) -> Result<Var<'a>>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    grad_check_at(&f, x, h, &coords)
}

/// Check a seeded random subset of coordinates (for large composites).
pub fn grad_check_sampled<F>(
    f: F,
    x: &Tensor,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&'a Tape, Var<'a>) -> Result<Var<'a>>,
{
    let coords = sample_indices(x.numel(), max_coords, seed);
    grad_check_at(&f, x, h, &coords)
}

fn grad_check_at<F>(f: &F, x: &Tensor, h: f64, coords: &[usize]) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&'a Tape, Var<'a>) -> Result<Var<'a>>,
{
    if h <= 0.0 {
        return Err(TensorError::arg("grad_check", "step h must be > 0"));
    }
    let analytic = {
        let tape = Tape::new();
        let leaf = tape.watch(x.clone());
        let loss = f(&tape, leaf)?;
        let grads = tape.backward(loss)?;
        grads.wrt_or_zeros(leaf)
    };

    let eval = |probe: &Tensor| -> Result<f64> {
        let tape = Tape::new();
        let leaf = tape.constant(probe.clone());
        Ok(f(&tape, leaf)?.item())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_coord: 0,
        coords_checked: coords.len(),
    };
    let mut probe = x.clone();
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let fm = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let err = rel_err(analytic.data()[i], numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = i;
        }
    }
    Ok(report)
}

/// Check d loss / d parameters for a model-level function, at the given
/// (parameter, flat index) coordinates. The store is restored afterwards.
pub fn grad_check_params<F>(
    f: F,
    store: &mut ParamStore,
    h: f64,
    coords: &[(ParamId, usize)],
) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&'a Tape, &ParamStore) -> Result<Var<'a>>,
{
    if h <= 0.0 {
        return Err(TensorError::arg("grad_check", "step h must be > 0"));
    }
    store.zero_grads();
    {
        let tape = Tape::new();
        let loss = f(&tape, store)?;
        let grads = tape.backward(loss)?;
        grads.accumulate_into(store)?;
    }
    let analytic: Vec<f64> = coords
        .iter()
        .map(|&(pid, i)| store.grad(pid).data()[i])
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_coord: 0,
        coords_checked: coords.len(),
    };
    for (ci, &(pid, i)) in coords.iter().enumerate() {
        store.nudge(pid, i, h);
        let fp = {
            let tape = Tape::new();
            f(&tape, store)?.item()
        };
        store.nudge(pid, i, -2.0 * h);
        let fm = {
            let tape = Tape::new();
            f(&tape, store)?.item()
        };
        store.nudge(pid, i, h);
        let numeric = (fp - fm) / (2.0 * h);
        let err = rel_err(analytic[ci], numeric);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = ci;
        }
    }
    Ok(report)
}

/// Deterministic index sample without replacement (splitmix64 driven
/// partial Fisher-Yates).
pub fn sample_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut state = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut next = move || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..max {
        let j = i + (next() as usize) % (n - i);
        pool.swap(i, j);
    }
    pool.truncate(max);
    pool.sort_unstable();
    pool
}

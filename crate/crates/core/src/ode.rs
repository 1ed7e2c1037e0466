//! Explicit Runge-Kutta integration on a sampling grid.
//!
//! Trajectories are always reported on a grid of output times. The fixed-step
//! method takes exactly one RK4 step per grid interval; the adaptive method
//! (Dormand-Prince 5(4)) sub-steps inside each interval and lands on every grid
//! point exactly, so piecewise-linear control inputs never straddle a kink.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};

/// Smallest adaptive step before the integration is declared failed.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub method: Method,
    /// Output grid spacing, and the step of the fixed method.
    pub base_step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Project every state component into `[0, 1]` after each step.
    pub clamp: bool,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self { method: Method::Rk45, base_step: 1e-3, abs_tol: 1e-8, rel_tol: 1e-8, clamp: true }
    }
}

impl IntegratorSpec {
    pub fn rk4(step: f64) -> Self {
        Self { method: Method::Rk4, base_step: step, ..Self::default() }
    }

    /// Unclamped variant for costates.
    pub fn unclamped(self) -> Self {
        Self { clamp: false, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_step.is_finite() && self.base_step > 0.0) {
            return Err(config_err("integrator base_step must be positive"));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(config_err("integrator tolerances must be positive"));
        }
        Ok(())
    }
}

/// Right-hand side `y' = f(t, y)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}

/// A scalar input signal: constant, or piecewise linear between samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Constant(f64),
    Sampled { times: Vec<f64>, values: Vec<f64> },
}

impl Signal {
    pub fn sampled(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(config_err("signal needs matching, non-empty time and value samples"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("signal times must be strictly increasing"));
        }
        Ok(Signal::Sampled { times, values })
    }

    /// Value at `t`; held constant outside the sampled range.
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Signal::Constant(v) => *v,
            Signal::Sampled { times, values } => interpolate(times, values, t),
        }
    }
}

/// Piecewise-linear interpolation on a strictly increasing grid.
pub fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let last = times.len() - 1;
    if t <= times[0] {
        return values[0];
    }
    if t >= times[last] {
        return values[last];
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    values[k] + w * (values[k + 1] - values[k])
}

/// States sampled on a time grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Samples of one component over the whole grid.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.data.iter().skip(i).step_by(self.dim).copied().collect()
    }
}

/// Uniform grid from `t0` to `t1` whose spacing is at most `max_step`.
pub fn uniform_grid(t0: f64, t1: f64, max_step: f64) -> Vec<f64> {
    let intervals = libm::ceil((t1 - t0) / max_step - 1e-9).max(1.0) as usize;
    let h = (t1 - t0) / intervals as f64;
    let mut grid: Vec<f64> = (0..=intervals).map(|k| t0 + k as f64 * h).collect();
    grid[intervals] = t1;
    grid
}

/// Integrates from `x0` at `t0` to `t1`, sampled every `spec.base_step` (or less).
pub fn integrate_forward<F: VectorField + ?Sized>(
    f: &F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    if t1.is_nan() || t0.is_nan() || t1 <= t0 {
        return Err(config_err("integration requires t1 > t0"));
    }
    spec.validate()?;
    let grid = uniform_grid(t0, t1, spec.base_step);
    integrate_on_grid(f, x0, &grid, spec)
}

/// Integrates from the terminal value `x_end` at `t1` back to `t0`.
///
/// The returned trajectory is in ascending time order; its last sample is
/// exactly `x_end`.
pub fn integrate_backward<F: VectorField + ?Sized>(
    f: &F,
    x_end: &[f64],
    t1: f64,
    t0: f64,
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    if t1.is_nan() || t0.is_nan() || t1 <= t0 {
        return Err(config_err("integration requires t1 > t0"));
    }
    spec.validate()?;
    let mut grid = uniform_grid(t0, t1, spec.base_step);
    grid.reverse();
    let rev = integrate_on_grid(f, x_end, &grid, spec)?;
    Ok(reversed(rev))
}

fn reversed(tr: Trajectory) -> Trajectory {
    let dim = tr.dim;
    let times: Vec<f64> = tr.times.iter().rev().copied().collect();
    let mut data = Vec::with_capacity(tr.data.len());
    for chunk in tr.data.chunks(dim).rev() {
        data.extend_from_slice(chunk);
    }
    Trajectory { times, dim, data }
}

/// Integrates along an explicit grid, which may run forward or backward in time.
///
/// Samples are returned in grid order.
pub fn integrate_on_grid<F: VectorField + ?Sized>(
    f: &F,
    start: &[f64],
    grid: &[f64],
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    let dim = f.dim();
    if start.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, found: start.len() });
    }
    if grid.len() < 2 {
        return Err(config_err("integration grid needs at least two points"));
    }
    let mut data = Vec::with_capacity(grid.len() * dim);
    data.extend_from_slice(start);
    let mut y = start.to_vec();
    let mut ws = Workspace::new(dim);
    let mut h_adaptive = spec.base_step.min(libm::fabs(grid[1] - grid[0]));
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        match spec.method {
            Method::Rk4 => {
                rk4_step(f, a, b - a, &mut y, &mut ws);
                if spec.clamp {
                    clamp_unit(&mut y);
                }
            }
            Method::Rk45 => {
                h_adaptive = dopri_interval(f, a, b, &mut y, h_adaptive, spec, &mut ws)?;
            }
        }
        data.extend_from_slice(&y);
    }
    Ok(Trajectory { times: grid.to_vec(), dim, data })
}

fn clamp_unit(y: &mut [f64]) {
    for v in y {
        *v = v.clamp(0.0, 1.0);
    }
}

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y5: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self { k: core::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim], y5: vec![0.0; dim] }
    }
}

fn rk4_step<F: VectorField + ?Sized>(f: &F, t: f64, h: f64, y: &mut [f64], ws: &mut Workspace) {
    let [k1, k2, k3, k4, ..] = &mut ws.k;
    let tmp = &mut ws.tmp;
    f.eval(t, y, k1);
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f.eval(t + 0.5 * h, tmp, k2);
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f.eval(t + 0.5 * h, tmp, k3);
    for i in 0..y.len() {
        tmp[i] = y[i] + h * k3[i];
    }
    f.eval(t + h, tmp, k4);
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Adaptive sub-stepping from `a` to `b`; returns the step to try next.
#[allow(clippy::needless_range_loop)] // stage sums read clearer indexed
fn dopri_interval<F: VectorField + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    y: &mut [f64],
    h_start: f64,
    spec: &IntegratorSpec,
    ws: &mut Workspace,
) -> Result<f64> {
    let span = b - a;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let mut t = a;
    let mut h = h_start.min(libm::fabs(span));
    let dim = y.len();
    loop {
        let remaining = libm::fabs(b - t);
        if remaining <= 1e-14 * libm::fabs(span).max(1.0) {
            break;
        }
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        let hs = dir * step;
        for s in 0..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, aj) in A[s][..s].iter().enumerate() {
                    acc += hs * aj * ws.k[j][i];
                }
                ws.tmp[i] = acc;
            }
            let (tmp, k) = (&ws.tmp, &mut ws.k[s]);
            f.eval(t + C[s] * hs, tmp, k);
        }
        let mut err: f64 = 0.0;
        for i in 0..dim {
            let mut y5 = y[i];
            let mut y4 = y[i];
            for s in 0..7 {
                y5 += hs * B5[s] * ws.k[s][i];
                y4 += hs * B4[s] * ws.k[s][i];
            }
            ws.y5[i] = y5;
            let scale = spec.abs_tol + spec.rel_tol * libm::fabs(y[i]).max(libm::fabs(y5));
            let e = libm::fabs(y5 - y4) / scale;
            err = if e.is_nan() { f64::INFINITY } else { err.max(e) };
        }
        let factor = if err == 0.0 {
            5.0
        } else if err.is_finite() {
            (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0)
        } else {
            0.2
        };
        if err <= 1.0 {
            t = if last { b } else { t + hs };
            y.copy_from_slice(&ws.y5);
            if spec.clamp {
                clamp_unit(y);
            }
            if !last {
                h = step * factor;
            }
        } else {
            h = step * factor;
            if h < MIN_STEP {
                return Err(Error::StepUnderflow { t, step: h });
            }
        }
    }
    Ok(h)
}

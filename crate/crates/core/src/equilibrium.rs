//! Static optima, best responses and Nash fixed points on constant strategies.
//!
//! With constant controls the long-run average objective of node `i` collapses to
//!
//! ```text
//! F_i(a) = p a (1 - a) / (1 + S) - r (1 - a)^2 - q a^2
//! ```
//!
//! where `S` is the sum of the competitors' benign rates. `F_i` is strictly
//! concave, so each node has a unique best response in `(0, 1)`.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::trust::{long_run_average_profit, others_sum, GameConfig, NodeParams, Strategy};

/// Random initial profiles tried after the default start.
pub const MULTI_START_COUNT: usize = 8;

/// Optimal constant strategy of an isolated node.
pub fn single_static_optimum(params: &NodeParams) -> Strategy {
    static_strategy(params, 0.0)
}

/// Closed-form best response to competitors whose benign rates sum to `others`.
pub fn static_best_response(params: &NodeParams, others: f64) -> f64 {
    let NodeParams { p, q, r } = *params;
    (p + 2.0 * r * (1.0 + others)) / (2.0 * (p + q + r + (q + r) * others))
}

fn static_strategy(params: &NodeParams, others: f64) -> Strategy {
    Strategy::clamped(static_best_response(params, others))
}

/// Best response by exhaustive search over `{0, res, 2 res, ..., 1}`.
///
/// Ties go to the smaller rate.
pub fn brute_force_best_response(params: &NodeParams, others: f64, resolution: f64) -> f64 {
    grid_argmax(resolution, |a| long_run_average_profit(Strategy::clamped(a), others, params)).0
}

/// Maximizes `f` over the uniform grid on `[0, 1]`, returning `(argmax, max)`.
fn grid_argmax(resolution: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let steps = libm::round(1.0 / resolution).max(1.0) as usize;
    let mut best = (0.0, f(0.0));
    for k in 1..=steps {
        let a = if k == steps { 1.0 } else { k as f64 * resolution };
        let v = f(a);
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}

/// Outcome of a best-response fixed-point search.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticProfile {
    pub alphas: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `max_i |alpha_i - BR_i(alpha_{-i})|` at the returned profile.
    pub residual: f64,
    /// Further converged fixed points found from random starts, if any differ.
    pub alternatives: Vec<Vec<f64>>,
}

impl StaticProfile {
    pub fn betas(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| 1.0 - a).collect()
    }
}

/// Largest deviation of a profile from its own best responses.
pub fn best_response_residual(params: &[NodeParams], alphas: &[f64]) -> f64 {
    params
        .iter()
        .enumerate()
        .map(|(i, pr)| libm::fabs(alphas[i] - static_best_response(pr, others_sum(alphas, i))))
        .fold(0.0, f64::max)
}

/// Damped simultaneous best-response iteration from a given start.
pub fn best_response_iteration(config: &GameConfig, start: &[f64]) -> StaticProfile {
    let settings = config.fixed_point;
    let n = config.n();
    let mut alphas = start.to_vec();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iter {
        let total: f64 = alphas.iter().sum();
        residual = 0.0;
        for (i, pr) in config.params.iter().enumerate() {
            let br = static_best_response(pr, total - alphas[i]);
            residual = residual.max(libm::fabs(br - alphas[i]));
            next[i] = ((1.0 - settings.damping) * alphas[i] + settings.damping * br).clamp(0.0, 1.0);
        }
        if residual < settings.tol {
            break;
        }
        alphas.copy_from_slice(&next);
        iterations += 1;
    }
    let residual = if residual < settings.tol { residual } else { best_response_residual(&config.params, &alphas) };
    StaticProfile { alphas, converged: residual < settings.tol, iterations, residual, alternatives: Vec::new() }
}

/// Static Nash equilibrium from the uniform start `alpha_i = 0.5`.
///
/// [`MULTI_START_COUNT`] seeded random starts are also iterated; converged
/// fixed points farther than `100 tol` from the main one are reported in
/// [`StaticProfile::alternatives`].
pub fn static_nash_fixed_point(config: &GameConfig) -> StaticProfile {
    let n = config.n();
    let mut main = best_response_iteration(config, &vec![0.5; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let separation = 100.0 * config.fixed_point.tol;
    for _ in 0..MULTI_START_COUNT {
        let start: Vec<f64> = (0..n).map(|_| unit_f64(&mut rng)).collect();
        let other = best_response_iteration(config, &start);
        if !other.converged {
            continue;
        }
        let known = core::iter::once(&main.alphas)
            .chain(main.alternatives.iter())
            .any(|a| max_abs_diff(a, &other.alphas) <= separation);
        if !known {
            main.alternatives.push(other.alphas);
        }
    }
    main
}

fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| libm::fabs(x - y)).fold(0.0, f64::max)
}

/// Per-node outcome of a unilateral deviation search.
#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    /// Best payoff improvement found by node `i` on the deviation grid.
    pub gains: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Default deviation tolerance of [`verify_nash`].
pub const DEVIATION_TOL: f64 = 1e-6;

/// Checks that no node gains more than `tolerance` by deviating to any grid rate.
pub fn verify_nash(alphas: &[f64], config: &GameConfig, resolution: f64, tolerance: f64) -> NashReport {
    let gains: Vec<f64> = config
        .params
        .iter()
        .enumerate()
        .map(|(i, pr)| {
            let others = others_sum(alphas, i);
            let current = long_run_average_profit(Strategy::clamped(alphas[i]), others, pr);
            let (_, best) = grid_argmax(resolution, |a| long_run_average_profit(Strategy::clamped(a), others, pr));
            best - current
        })
        .collect();
    let passed = gains.iter().all(|&g| g <= tolerance);
    NashReport { gains, tolerance, passed }
}

/// Slope of node `i`'s best response against a single rival, as stated in
/// closed form for the two-player open-loop game:
///
/// ```text
/// -(4 r (q + r) + p (q + 3 r)) / (2 (p + (q + r)(1 + a_j)^2))
/// ```
pub fn best_response_slope(params: &NodeParams, alpha_j: f64) -> f64 {
    let NodeParams { p, q, r } = *params;
    let u = 1.0 + alpha_j;
    -(4.0 * r * (q + r) + p * (q + 3.0 * r)) / (2.0 * (p + (q + r) * u * u))
}

/// Exact derivative of [`static_best_response`] with respect to a single rival's rate:
/// `p (r - q) / (2 (p + (q + r)(1 + a_j))^2)`.
pub fn best_response_slope_exact(params: &NodeParams, alpha_j: f64) -> f64 {
    let NodeParams { p, q, r } = *params;
    let d = p + (q + r) * (1.0 + alpha_j);
    p * (r - q) / (2.0 * d * d)
}

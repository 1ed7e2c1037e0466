//! Open-loop dynamic solutions from Pontryagin's necessary conditions.
//!
//! For node `i`, with `S` the sum of the other nodes' benign rates, the
//! Hamiltonian is
//!
//! ```text
//! H_i = lambda_i (alpha_i - (1 + S) x_i) + p (1 - alpha_i) x_i - q alpha_i^2 - r (1 - alpha_i)^2
//! ```
//!
//! which gives the costate equation `lambda_i' = lambda_i (1 + S) - p (1 - alpha_i)`
//! and the maximizing control `alpha_i = (lambda_i - p x_i + 2 r) / (2 (q + r))`,
//! projected onto `[0, 1]`. [`solve_open_loop`] finds controls satisfying both
//! conditions on a time grid with a damped forward-backward sweep.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::equilibrium::{best_response_iteration, single_static_optimum, static_best_response};
use crate::error::{check_len, Error, Result};
use crate::ode::{integrate_on_grid, interpolate, uniform_grid, IntegratorSpec, VectorField};
use crate::trust::{
    drift_multi_into, others_sum, profit_density, GameConfig, NodeParams, NodeTrajectory, SolverSettings, Strategy,
};

/// Benign rate maximizing the Hamiltonian for a given costate and trust share.
pub fn control_from_costate(lambda: f64, x: f64, params: &NodeParams) -> f64 {
    let NodeParams { p, q, r } = *params;
    let slack = lambda - p * x + 2.0 * r;
    if slack <= 0.0 {
        return 0.0;
    }
    (slack / (2.0 * (q + r))).min(1.0)
}

/// Costate rate of an isolated node.
#[inline]
pub fn costate_drift_single(lambda: f64, alpha: f64, params: &NodeParams) -> f64 {
    lambda - params.p * (1.0 - alpha)
}

/// Costate rate under competition; `others` is the rivals' benign-rate sum.
#[inline]
pub fn costate_drift_multi(lambda: f64, alpha: f64, others: f64, params: &NodeParams) -> f64 {
    lambda * (1.0 + others) - params.p * (1.0 - alpha)
}

/// `H_i` evaluated at one instant.
pub fn hamiltonian(node: usize, x: &[f64], alphas: &[f64], lambda: f64, params: &NodeParams) -> Result<f64> {
    check_len(x.len(), alphas.len())?;
    if node >= x.len() {
        return Err(Error::Config(format!("node index {node} out of range for {} nodes", x.len())));
    }
    let mut drift = vec![0.0; x.len()];
    drift_multi_into(x, alphas, &mut drift);
    Ok(lambda * drift[node] + profit_density(x[node], Strategy::clamped(alphas[node]), params))
}

/// `dH_i / d alpha_i`; vanishes at an interior maximizer.
#[inline]
pub fn hamiltonian_control_gradient(lambda: f64, x: f64, alpha: f64, params: &NodeParams) -> f64 {
    lambda - params.p * x + 2.0 * params.r - 2.0 * (params.q + params.r) * alpha
}

/// `dH_i / dx_i`.
#[inline]
pub fn hamiltonian_state_gradient(lambda: f64, alpha: f64, others: f64, params: &NodeParams) -> f64 {
    -costate_drift_multi(lambda, alpha, others, params)
}

/// Result of [`solve_open_loop`].
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopSolution {
    pub nodes: Vec<NodeTrajectory>,
    pub converged: bool,
    pub sweeps: usize,
    /// Largest control change proposed by the last sweep.
    pub control_residual: f64,
    pub residual_history: Vec<f64>,
    /// Relaxation factor in force when the sweep stopped.
    pub final_damping: f64,
    pub horizon: f64,
}

impl OpenLoopSolution {
    pub fn times(&self) -> &[f64] {
        &self.nodes[0].times
    }

    /// Index range of samples with `t` in `[lo T, hi T]`.
    pub fn window(&self, lo: f64, hi: f64) -> core::ops::Range<usize> {
        let t = self.times();
        let a = t.partition_point(|&s| s < lo * self.horizon);
        let b = t.partition_point(|&s| s <= hi * self.horizon);
        a..b
    }

    /// Mid-horizon window `[0.4 T, 0.6 T]` where the turnpike plateau is read.
    pub fn plateau(&self) -> core::ops::Range<usize> {
        self.window(0.4, 0.6)
    }

    /// Mean plateau control of every node.
    pub fn plateau_alphas(&self) -> Vec<f64> {
        let w = self.plateau();
        let len = w.len() as f64;
        self.nodes.iter().map(|n| n.alpha[w.clone()].iter().sum::<f64>() / len).collect()
    }

    /// Mean plateau trust share of every node.
    pub fn plateau_states(&self) -> Vec<f64> {
        let w = self.plateau();
        let len = w.len() as f64;
        self.nodes.iter().map(|n| n.x[w.clone()].iter().sum::<f64>() / len).collect()
    }

    /// Largest plateau deviation of any node's control from `targets`.
    pub fn plateau_deviation(&self, targets: &[f64]) -> f64 {
        let w = self.plateau();
        self.nodes
            .iter()
            .zip(targets)
            .flat_map(|(n, &t)| n.alpha[w.clone()].iter().map(move |a| libm::fabs(a - t)))
            .fold(0.0, f64::max)
    }
}

/// Trust dynamics driven by grid-sampled controls.
struct StateField<'a> {
    times: &'a [f64],
    alphas: &'a [Vec<f64>],
}

impl StateField<'_> {
    fn rates(&self, t: f64, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(self.alphas) {
            *o = interpolate(self.times, a, t);
        }
    }
}

impl VectorField for StateField<'_> {
    fn dim(&self) -> usize {
        self.alphas.len()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let mut rates = vec![0.0; y.len()];
        self.rates(t, &mut rates);
        drift_multi_into(y, &rates, dy);
    }
}

/// Costate dynamics; independent of the trust shares.
struct CostateField<'a> {
    inner: StateField<'a>,
    params: &'a [NodeParams],
}

impl VectorField for CostateField<'_> {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let mut rates = vec![0.0; y.len()];
        self.inner.rates(t, &mut rates);
        let total: f64 = rates.iter().sum();
        for i in 0..y.len() {
            dy[i] = costate_drift_multi(y[i], rates[i], total - rates[i], &self.params[i]);
        }
    }
}

fn split(tr: &crate::ode::Trajectory) -> Vec<Vec<f64>> {
    (0..tr.dim()).map(|i| tr.component(i)).collect()
}

/// Per-node samples `[node][grid index]`.
type NodeSamples = Vec<Vec<f64>>;

/// States and costates of every node under fixed sampled controls.
fn sweep_once(config: &GameConfig, grid: &[f64], alphas: &[Vec<f64>]) -> Result<(NodeSamples, NodeSamples)> {
    let step = grid[1] - grid[0];
    let field = StateField { times: grid, alphas };
    let states = integrate_on_grid(&field, &config.x0, grid, &IntegratorSpec::rk4(step))?;

    let costate = CostateField { inner: StateField { times: grid, alphas }, params: &config.params };
    let reversed: Vec<f64> = grid.iter().rev().copied().collect();
    let terminal = vec![0.0; config.n()];
    let back = integrate_on_grid(&costate, &terminal, &reversed, &IntegratorSpec::rk4(step).unclamped())?;
    let mut lambdas = split(&back);
    for l in &mut lambdas {
        l.reverse();
    }
    Ok((split(&states), lambdas))
}

/// Open-loop Nash trajectories by forward-backward sweep.
///
/// Controls start at each node's isolated static optimum. Every sweep integrates
/// the trust shares forward, the costates backward from `lambda(T) = 0`, and
/// relaxes the controls toward [`control_from_costate`]. Whenever the control
/// residual grows the relaxation factor is halved (down to `1e-3`). A result
/// with `converged == false` is still returned when `max_iter` sweeps run out.
pub fn solve_open_loop(config: &GameConfig) -> Result<OpenLoopSolution> {
    config.validate()?;
    let SolverSettings { tol, max_iter, mut damping } = config.sweep;
    let grid = uniform_grid(0.0, config.horizon, config.step);
    let n = config.n();
    let m = grid.len();
    let mut alphas: Vec<Vec<f64>> = config.params.iter().map(|pr| vec![single_static_optimum(pr).alpha(); m]).collect();

    let mut history = Vec::new();
    let mut proposed = vec![vec![0.0; m]; n];
    let (states, lambdas, converged) = loop {
        let (states, lambdas) = sweep_once(config, &grid, &alphas)?;
        let mut residual: f64 = 0.0;
        for i in 0..n {
            for k in 0..m {
                let a = control_from_costate(lambdas[i][k], states[i][k], &config.params[i]);
                residual = residual.max(libm::fabs(a - alphas[i][k]));
                proposed[i][k] = a;
            }
        }
        if history.last().is_some_and(|&prev| residual > prev) {
            damping = (0.5 * damping).max(1e-3);
        }
        history.push(residual);
        if residual < tol {
            break (states, lambdas, true);
        }
        if history.len() >= max_iter {
            break (states, lambdas, false);
        }
        for (cur, new) in alphas.iter_mut().zip(&proposed) {
            for (c, &v) in cur.iter_mut().zip(new) {
                *c = ((1.0 - damping) * *c + damping * v).clamp(0.0, 1.0);
            }
        }
    };

    let nodes = (0..n)
        .map(|i| {
            let pr = &config.params[i];
            let profit =
                states[i].iter().zip(&alphas[i]).map(|(&x, &a)| profit_density(x, Strategy::clamped(a), pr)).collect();
            NodeTrajectory {
                times: grid.clone(),
                x: states[i].clone(),
                alpha: alphas[i].clone(),
                lambda: Some(lambdas[i].clone()),
                profit_density: profit,
            }
        })
        .collect();
    Ok(OpenLoopSolution {
        nodes,
        converged,
        sweeps: history.len(),
        control_residual: *history.last().unwrap_or(&f64::INFINITY),
        residual_history: history,
        final_damping: damping,
        horizon: config.horizon,
    })
}

/// Worst violations of the three necessary conditions on interior grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PontryaginResiduals {
    /// `|dH/d alpha|` where the control is strictly inside `(0, 1)`.
    pub control_gradient: f64,
    /// `|lambda' + dH/dx|` with `lambda'` from central differences.
    pub costate: f64,
    /// `|x' - drift|` with `x'` from central differences.
    pub state: f64,
}

pub fn pontryagin_residuals(sol: &OpenLoopSolution, params: &[NodeParams]) -> PontryaginResiduals {
    let t = sol.times();
    let n = sol.nodes.len();
    let mut res = PontryaginResiduals { control_gradient: 0.0, costate: 0.0, state: 0.0 };
    let mut x = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut drift = vec![0.0; n];
    for k in 1..t.len() - 1 {
        let dt = t[k + 1] - t[k - 1];
        for (i, node) in sol.nodes.iter().enumerate() {
            x[i] = node.x[k];
            a[i] = node.alpha[k];
        }
        drift_multi_into(&x, &a, &mut drift);
        for (i, node) in sol.nodes.iter().enumerate() {
            let lam = node.lambda.as_ref().expect("open-loop nodes carry costates");
            let pr = &params[i];
            if a[i] > 0.0 && a[i] < 1.0 {
                let g = hamiltonian_control_gradient(lam[k], x[i], a[i], pr);
                res.control_gradient = res.control_gradient.max(libm::fabs(g));
            }
            let lam_dot = (lam[k + 1] - lam[k - 1]) / dt;
            let dhdx = hamiltonian_state_gradient(lam[k], a[i], others_sum(&a, i), pr);
            res.costate = res.costate.max(libm::fabs(lam_dot + dhdx));
            let x_dot = (node.x[k + 1] - node.x[k - 1]) / dt;
            res.state = res.state.max(libm::fabs(x_dot - drift[i]));
        }
    }
    res
}

/// Steady benign rates of the open-loop equilibrium.
///
/// Identical nodes reduce to the scalar quadratic
/// `2(q+r)(n-1) a^2 + 2(p+q+r-r(n-1)) a - (p+2r) = 0`; otherwise the `n`
/// coupled steady-state conditions are solved by damped fixed-point iteration.
pub fn steady_state_open_loop(params: &[NodeParams]) -> Result<Vec<f64>> {
    let n = params.len();
    if n == 0 {
        return Err(Error::Config("node count must be at least 1".into()));
    }
    if params.iter().all(|p| p == &params[0]) {
        let a = symmetric_steady_state(n, &params[0])?;
        return Ok(vec![a; n]);
    }
    let cfg = GameConfig {
        params: params.to_vec(),
        x0: vec![0.0; n],
        horizon: GameConfig::DEFAULT_HORIZON,
        step: GameConfig::DEFAULT_HORIZON / GameConfig::DEFAULT_GRID_INTERVALS as f64,
        fixed_point: SolverSettings { tol: 1e-14, max_iter: 100_000, damping: 0.5 },
        sweep: SolverSettings::SWEEP,
        seed: 0,
    };
    let prof = best_response_iteration(&cfg, &vec![0.5; n]);
    if !prof.converged {
        return Err(Error::Numeric(format!("steady-state iteration stalled at residual {:e}", prof.residual)));
    }
    Ok(prof.alphas)
}

/// Root in `[0, 1]` of the symmetric steady-state quadratic.
pub fn symmetric_steady_state(n: usize, params: &NodeParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("node count must be at least 1".into()));
    }
    let NodeParams { p, q, r } = *params;
    let m = (n - 1) as f64;
    let a = 2.0 * (q + r) * m;
    let b = 2.0 * (p + q + r - r * m);
    let c = p + 2.0 * r;
    // a >= 0 and -c < 0: exactly one non-negative root, written without cancellation
    let disc = b * b + 4.0 * a * c;
    let root = 2.0 * c / (b + libm::sqrt(disc));
    if !(root.is_finite() && (0.0..=1.0).contains(&root)) {
        return Err(Error::Numeric(format!("symmetric steady state has no root in [0, 1] (got {root})")));
    }
    Ok(root)
}

/// Steady trust share of each node given steady benign rates.
pub fn steady_states(alphas: &[f64]) -> Vec<f64> {
    (0..alphas.len()).map(|i| alphas[i] / (1.0 + others_sum(alphas, i))).collect()
}

/// Steady costate `p (1 - alpha) / (1 + S)` matching [`steady_states`].
pub fn steady_costates(params: &[NodeParams], alphas: &[f64]) -> Vec<f64> {
    (0..alphas.len()).map(|i| params[i].p * (1.0 - alphas[i]) / (1.0 + others_sum(alphas, i))).collect()
}

/// Residual of the steady-state best-response condition for node `i`.
pub fn steady_state_residual(params: &[NodeParams], alphas: &[f64]) -> f64 {
    (0..alphas.len())
        .map(|i| libm::fabs(alphas[i] - static_best_response(&params[i], others_sum(alphas, i))))
        .fold(0.0, f64::max)
}

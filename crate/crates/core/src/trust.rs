//! Domain types, trust dynamics and the per-node payoff integrands.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, config_err, Result};

/// Slack allowed on the budget-of-interaction bound `sum x_i <= 1`.
pub const SIMPLEX_SLACK: f64 = 1e-9;

/// Economic constants of one malicious node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams {
    /// Unit malicious profit.
    pub p: f64,
    /// Unit cost of trustable activity.
    pub q: f64,
    /// Unit penalty of malicious activity (the administrator's lever).
    pub r: f64,
}

impl NodeParams {
    pub fn new(p: f64, q: f64, r: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q), ("r", r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { p, q, r })
    }

    /// Same node with a different penalty.
    pub fn with_r(self, r: f64) -> Result<Self> {
        Self::new(self.p, self.q, r)
    }
}

/// A control pair `(alpha, beta)` with `alpha + beta = 1`; only `alpha` is stored.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Strategy {
    alpha: f64,
}

impl Strategy {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(config_err(format!("benign rate must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// Builds a strategy from the malicious rate.
    pub fn from_beta(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(config_err(format!("malicious rate must lie in [0, 1], got {beta}")));
        }
        Ok(Self { alpha: 1.0 - beta })
    }

    /// Projects an arbitrary rate into `[0, 1]`.
    pub fn clamped(alpha: f64) -> Self {
        Self { alpha: alpha.clamp(0.0, 1.0) }
    }

    #[inline]
    pub fn alpha(self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn beta(self) -> f64 {
        1.0 - self.alpha
    }
}

/// Trust shares of all nodes at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustState {
    pub t: f64,
    x: Vec<f64>,
}

impl TrustState {
    pub fn new(t: f64, x: Vec<f64>) -> Result<Self> {
        validate_shares(&x)?;
        Ok(Self { t, x })
    }

    pub fn shares(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub(crate) fn validate_shares(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(config_err("trust state must have at least one node"));
    }
    for (i, &xi) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&xi) {
            return Err(config_err(format!("x[{i}] = {xi} is outside [0, 1]")));
        }
    }
    let total: f64 = x.iter().sum();
    if total > 1.0 + SIMPLEX_SLACK {
        return Err(config_err(format!("trust shares sum to {total} > 1")));
    }
    Ok(())
}

/// Sampled trajectory of one node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Costate samples; only populated by dynamic solutions.
    pub lambda: Option<Vec<f64>>,
    pub profit_density: Vec<f64>,
}

impl NodeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn beta(&self) -> impl Iterator<Item = f64> + '_ {
        self.alpha.iter().map(|a| 1.0 - a)
    }

    /// Checks shared lengths, grid monotonicity and sample bounds.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        check_len(n, self.x.len())?;
        check_len(n, self.alpha.len())?;
        check_len(n, self.profit_density.len())?;
        if let Some(l) = &self.lambda {
            check_len(n, l.len())?;
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("time grid must be strictly increasing"));
        }
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if !self.x.iter().all(unit) || !self.alpha.iter().all(unit) {
            return Err(config_err("trajectory sample outside [0, 1]"));
        }
        Ok(())
    }
}

/// Relaxed fixed-point iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl SolverSettings {
    /// Best-response iteration on constant profiles.
    pub const STATIC: Self = Self { tol: 1e-10, max_iter: 10_000, damping: 0.5 };
    /// Forward-backward sweep on sampled controls.
    pub const SWEEP: Self = Self { tol: 1e-8, max_iter: 500, damping: 0.5 };

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(config_err(format!("{what}: tol must be positive")));
        }
        if self.max_iter == 0 {
            return Err(config_err(format!("{what}: max_iter must be at least 1")));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(config_err(format!("{what}: damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Everything a solver needs to know about one game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub params: Vec<NodeParams>,
    pub x0: Vec<f64>,
    /// Finite truncation of the averaging horizon.
    pub horizon: f64,
    /// Grid step of sampled trajectories.
    pub step: f64,
    pub fixed_point: SolverSettings,
    pub sweep: SolverSettings,
    pub seed: u64,
}

impl GameConfig {
    pub const DEFAULT_HORIZON: f64 = 30.0;
    pub const DEFAULT_GRID_INTERVALS: usize = 3000;

    /// Config with default horizon, grid and solver settings.
    pub fn new(params: Vec<NodeParams>, x0: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            params,
            x0,
            horizon: Self::DEFAULT_HORIZON,
            step: Self::DEFAULT_HORIZON / Self::DEFAULT_GRID_INTERVALS as f64,
            fixed_point: SolverSettings::STATIC,
            sweep: SolverSettings::SWEEP,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n` identical nodes starting from empty trust.
    pub fn symmetric(n: usize, params: NodeParams) -> Result<Self> {
        Self::new(vec![params; n], vec![0.0; n])
    }

    /// Sets the horizon and rescales the step to keep the grid resolution.
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        let intervals = libm::round(self.horizon / self.step);
        self.horizon = horizon;
        self.step = horizon / intervals;
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(config_err("node count must be at least 1"));
        }
        check_len(self.params.len(), self.x0.len())?;
        for p in &self.params {
            NodeParams::new(p.p, p.q, p.r)?;
        }
        validate_shares(&self.x0)?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(config_err(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.step > 0.0 && self.step <= self.horizon) {
            return Err(config_err(format!("step must lie in (0, horizon], got {}", self.step)));
        }
        self.fixed_point.validate("fixed point")?;
        self.sweep.validate("sweep")?;
        Ok(())
    }
}

/// Trust drift of an isolated node.
#[inline]
pub fn drift_single(x: f64, s: Strategy) -> f64 {
    s.alpha() * (1.0 - x) - s.beta() * x
}

/// Trust drift of every node under competition.
pub fn drift_multi(state: &TrustState, strategies: &[Strategy]) -> Result<Vec<f64>> {
    check_len(state.len(), strategies.len())?;
    let alphas: Vec<f64> = strategies.iter().map(|s| s.alpha()).collect();
    let mut out = vec![0.0; state.len()];
    drift_multi_into(state.shares(), &alphas, &mut out);
    Ok(out)
}

/// Allocation-free drift used by the integrators; slices must share one length.
///
/// Component `i` is `alpha_i (1 - x_i) - (sum_{j != i} alpha_j) x_i - (1 - alpha_i) x_i`.
#[inline]
pub fn drift_multi_into(x: &[f64], alphas: &[f64], out: &mut [f64]) {
    let total: f64 = alphas.iter().sum();
    for ((o, &xi), &ai) in out.iter_mut().zip(x).zip(alphas) {
        let others = total - ai;
        *o = ai * (1.0 - xi) - others * xi - (1.0 - ai) * xi;
    }
}

/// Instantaneous net profit `p beta x - q alpha^2 - r beta^2`.
#[inline]
pub fn profit_density(x: f64, s: Strategy, params: &NodeParams) -> f64 {
    let (a, b) = (s.alpha(), s.beta());
    params.p * b * x - params.q * a * a - params.r * b * b
}

/// Exact trust share under constant controls.
///
/// `others` is the sum of the competitors' benign rates.
pub fn closed_form_trust(t: f64, x0: f64, alpha: f64, others: f64) -> f64 {
    let k = 1.0 + others;
    let decay = libm::exp(-k * t);
    decay * x0 + alpha / k * (1.0 - decay)
}

/// Steady trust share `alpha / (1 + others)` under constant controls.
#[inline]
pub fn steady_trust(alpha: f64, others: f64) -> f64 {
    alpha / (1.0 + others)
}

/// Long-run average net profit of a constant strategy.
pub fn long_run_average_profit(s: Strategy, others: f64, params: &NodeParams) -> f64 {
    let a = s.alpha();
    params.p * (1.0 - a) * a / (1.0 + others) - params.r * (1.0 - a) * (1.0 - a) - params.q * a * a
}

/// Sum of every rate except index `i`.
#[inline]
pub fn others_sum(alphas: &[f64], i: usize) -> f64 {
    alphas.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, a)| a).sum()
}

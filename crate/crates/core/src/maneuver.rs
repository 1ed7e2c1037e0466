//! Penalty settings that steer equilibrium malicious activity to a target.
//!
//! The administrator only controls the unit penalty `r`; raising it lowers the
//! equilibrium malicious rate. Every routine here verifies its answer by
//! running the forward equilibrium map on the returned penalties.

use alloc::vec;
use alloc::vec::Vec;

use crate::equilibrium::single_static_optimum;
use crate::error::{config_err, Error, Result};
use crate::pontryagin::steady_state_open_loop;
use crate::trust::{GameConfig, NodeParams};

/// Bisection bracket on the penalty.
pub const R_LOW: f64 = 1e-9;
pub const R_HIGH: f64 = 1e3;
pub const BISECTION_ITERS: usize = 200;

/// Round-trip residual required from [`maneuver_symmetric`].
pub const SYMMETRIC_TOL: f64 = 1e-8;
/// Residual at which [`maneuver_general`] stops.
pub const GENERAL_TOL: f64 = 1e-6;
const GENERAL_MAX_ROUNDS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverResult {
    pub r: Vec<f64>,
    /// Equilibrium malicious rates recomputed under `r`.
    pub achieved_beta: Vec<f64>,
    pub target_beta: Vec<f64>,
    /// `max_i |achieved_i - target_i|`.
    pub residual: f64,
}

impl ManeuverResult {
    fn new(r: Vec<f64>, achieved_beta: Vec<f64>, target_beta: Vec<f64>) -> Self {
        let residual = achieved_beta.iter().zip(&target_beta).map(|(a, t)| libm::fabs(a - t)).fold(0.0, f64::max);
        Self { r, achieved_beta, target_beta, residual }
    }

    /// Aggregate malicious activity `sum_i beta_i` under the returned penalties.
    pub fn overall_activity(&self) -> f64 {
        self.achieved_beta.iter().sum()
    }
}

/// Highest malicious rate reachable by an isolated node (the `r -> 0` limit).
pub fn single_beta_max(p: f64, q: f64) -> f64 {
    (p + 2.0 * q) / (2.0 * (p + q))
}

/// Penalty making an isolated node's optimal malicious rate equal `target_beta`:
/// `r = (p + 2q) / (2 beta) - p - q`.
pub fn maneuver_single(p: f64, q: f64, target_beta: f64) -> Result<ManeuverResult> {
    let base = NodeParams::new(p, q, 1.0)?;
    let high = single_beta_max(p, q);
    if !(target_beta > 0.0 && target_beta < high) {
        return Err(Error::InfeasibleTarget { node: 0, target: target_beta, low: 0.0, high });
    }
    let r = (p + 2.0 * q) / (2.0 * target_beta) - p - q;
    if r.is_nan() || r <= 0.0 {
        return Err(Error::InfeasibleTarget { node: 0, target: target_beta, low: 0.0, high });
    }
    let achieved = single_static_optimum(&base.with_r(r)?).beta();
    Ok(ManeuverResult::new(vec![r], vec![achieved], vec![target_beta]))
}

/// Common equilibrium malicious rate of `n` identical nodes under penalty `r`.
pub fn symmetric_beta(n: usize, p: f64, q: f64, r: f64) -> Result<f64> {
    let params = NodeParams::new(p, q, r)?;
    Ok(1.0 - steady_state_open_loop(&vec![params; n])?[0])
}

/// Shared penalty that puts each of `n` identical nodes at `target_beta`.
///
/// The steady-state quadratic is linear in `r`, so the penalty is read off
/// directly; if that fails the round trip, bisection on the forward map takes over.
pub fn maneuver_symmetric(n: usize, p: f64, q: f64, target_beta: f64) -> Result<ManeuverResult> {
    if n < 2 {
        return Err(config_err("maneuver_symmetric needs at least two nodes"));
    }
    NodeParams::new(p, q, 1.0)?;
    let high = symmetric_beta(n, p, q, R_LOW)?;
    let low = symmetric_beta(n, p, q, R_HIGH)?;
    if !(target_beta > low && target_beta < high) {
        return Err(Error::InfeasibleTarget { node: 0, target: target_beta, low, high });
    }
    let m = (n - 1) as f64;
    let a = 1.0 - target_beta;
    // r * coeff + rest = 0 at the target rate
    let coeff = 2.0 * m * a * a - 2.0 * (m - 1.0) * a - 2.0;
    let rest = 2.0 * q * m * a * a + 2.0 * (p + q) * a - p;
    let direct = -rest / coeff;
    if direct.is_finite() && direct > 0.0 {
        let achieved = symmetric_beta(n, p, q, direct)?;
        if libm::fabs(achieved - target_beta) < SYMMETRIC_TOL {
            return Ok(ManeuverResult::new(vec![direct; n], vec![achieved; n], vec![target_beta; n]));
        }
    }
    let r = bisect_penalty(target_beta, |r| symmetric_beta(n, p, q, r))?;
    let achieved = symmetric_beta(n, p, q, r)?;
    let res = ManeuverResult::new(vec![r; n], vec![achieved; n], vec![target_beta; n]);
    if res.residual >= SYMMETRIC_TOL {
        return Err(Error::Numeric(alloc::format!("symmetric maneuver residual {:e}", res.residual)));
    }
    Ok(res)
}

/// Two-node penalty formula `(p + q)(3 - 2 beta)^2 - (3p + q) / 4`, as stated in
/// closed form for symmetric rivals.
///
/// Kept for comparison only: it does not round-trip through the steady-state
/// equilibrium (for `p = 0.4, q = 0.2, beta = 0.5` it gives 2.05 where the
/// equilibrium needs 0.2). Use [`maneuver_symmetric`].
pub fn maneuver_two_symmetric_closed_form(p: f64, q: f64, target_beta: f64) -> f64 {
    let k = 3.0 - 2.0 * target_beta;
    (p + q) * k * k - 0.25 * (3.0 * p + q)
}

/// Monotone decreasing forward map `r -> beta(r)` inverted on `[R_LOW, R_HIGH]`.
fn bisect_penalty(target: f64, beta_of: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (mut lo, mut hi) = (R_LOW, R_HIGH);
    let (b_lo, b_hi) = (beta_of(lo)?, beta_of(hi)?);
    if !(target <= b_lo && target >= b_hi) {
        return Err(Error::Numeric(alloc::format!(
            "penalty bracket [{lo}, {hi}] maps to beta in [{b_hi}, {b_lo}], which excludes {target}"
        )));
    }
    for _ in 0..BISECTION_ITERS {
        // geometric midpoint: the bracket spans twelve decades
        let mid = libm::sqrt(lo * hi);
        if beta_of(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-node penalties reaching an arbitrary vector of malicious-rate targets.
///
/// Jacobi rounds: each node's penalty is bisected against its own equilibrium
/// malicious rate with the other penalties frozen, until every residual is
/// below [`GENERAL_TOL`].
pub fn maneuver_general(config: &GameConfig, targets: &[f64]) -> Result<ManeuverResult> {
    config.validate()?;
    let n = config.n();
    crate::error::check_len(n, targets.len())?;
    if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InfeasibleTarget { node: i, target: t, low: 0.0, high: 1.0 });
    }
    if n == 1 {
        let pr = config.params[0];
        return maneuver_single(pr.p, pr.q, targets[0]);
    }

    let betas_for = |r: &[f64]| -> Result<Vec<f64>> {
        let params: Vec<NodeParams> =
            config.params.iter().zip(r).map(|(pr, &ri)| pr.with_r(ri)).collect::<Result<_>>()?;
        Ok(steady_state_open_loop(&params)?.into_iter().map(|a| 1.0 - a).collect())
    };

    let mut r: Vec<f64> = config.params.iter().map(|p| p.r).collect();
    let mut best = (f64::INFINITY, r.clone());
    for _ in 0..GENERAL_MAX_ROUNDS {
        let achieved = betas_for(&r)?;
        let residual = achieved.iter().zip(targets).map(|(a, t)| libm::fabs(a - t)).fold(0.0, f64::max);
        if residual < best.0 {
            best = (residual, r.clone());
        }
        if residual < GENERAL_TOL {
            return Ok(ManeuverResult::new(r, achieved, targets.to_vec()));
        }
        let mut next = r.clone();
        for i in 0..n {
            let beta_i = |ri: f64| -> Result<f64> {
                let mut trial = r.clone();
                trial[i] = ri;
                Ok(betas_for(&trial)?[i])
            };
            let (high, low) = (beta_i(R_LOW)?, beta_i(R_HIGH)?);
            if !(targets[i] > low && targets[i] < high) {
                return Err(Error::InfeasibleTarget { node: i, target: targets[i], low, high });
            }
            next[i] = bisect_penalty(targets[i], beta_i)?;
        }
        r = next;
    }
    Err(Error::Numeric(alloc::format!(
        "general maneuver did not converge; best residual {:e} at r = {:?}",
        best.0,
        best.1
    )))
}

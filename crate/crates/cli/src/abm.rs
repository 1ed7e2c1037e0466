//! Agent-based Monte Carlo model behind the mean-field trust dynamics.
//!
//! Each of `N` users is either unattached or attends exactly one node. Per step
//! of length `dt`:
//!
//! * unattached -> node `i` with probability `alpha_i dt`
//! * node `i` -> unattached with probability `beta_i dt`
//! * node `i` -> node `j` with probability `alpha_j dt` (`j != i`)
//!
//! The expected share change is exactly `dt` times the mean-field drift, and the
//! attention is exclusive, so `sum_i X_i <= N` always holds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use socialtrust_core::ode::{integrate_on_grid, interpolate, FnField, IntegratorSpec, Signal};
use socialtrust_core::trust::drift_multi_into;
use socialtrust_core::GameConfig;
use thiserror::Error;

/// Largest admissible value of `dt` times the summed transition rates.
pub const PROBABILITY_BOUND: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum AbmError {
    #[error("dt = {dt} is too large: dt * (rate bound {rates}) = {value} exceeds {PROBABILITY_BOUND}")]
    StepTooLarge { dt: f64, rates: f64, value: f64 },
    #[error("abm configuration error: {0}")]
    Config(String),
    #[error("time grids differ: {0}")]
    GridMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// One Bernoulli draw per user per step.
    Agents,
    /// Multinomial draws over users sharing a state; same chain, O(n^2) per step.
    Counts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbmSettings {
    pub users: usize,
    pub dt: f64,
    pub runs: usize,
    pub seed: u64,
    pub engine: Engine,
}

impl AbmSettings {
    pub fn new(users: usize, dt: f64, runs: usize, seed: u64) -> Self {
        let engine = if users >= 10_000 { Engine::Counts } else { Engine::Agents };
        Self { users, dt, runs, seed, engine }
    }
}

/// Common interface of the two simulation engines.
pub trait Population {
    /// Advances one step under the given benign rates.
    fn step(&mut self, alphas: &[f64]);
    /// Users per state; index 0 is unattached, index `i + 1` is node `i`.
    fn counts(&self) -> Vec<u64>;
}

/// Initial occupation counts; node `i` starts with `round(x0_i N)` users.
pub fn initial_counts(users: usize, x0: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; x0.len() + 1];
    let mut attached = 0u64;
    for (i, &x) in x0.iter().enumerate() {
        let c = ((x * users as f64).round() as u64).min(users as u64 - attached);
        counts[i + 1] = c;
        attached += c;
    }
    counts[0] = users as u64 - attached;
    counts
}

/// Per-user engine: `assignment[u]` is 0 when unattached, `i + 1` when attending node `i`.
pub struct AgentPopulation {
    assignment: Vec<u16>,
    nodes: usize,
    dt: f64,
    rng: ChaCha8Rng,
}

impl AgentPopulation {
    pub fn new(users: usize, x0: &[f64], dt: f64, seed: u64) -> Self {
        let counts = initial_counts(users, x0);
        let mut assignment = Vec::with_capacity(users);
        for (state, &c) in counts.iter().enumerate().skip(1).chain(std::iter::once((0, &counts[0]))) {
            assignment.extend(std::iter::repeat_n(state as u16, c as usize));
        }
        Self { assignment, nodes: x0.len(), dt, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Population for AgentPopulation {
    fn step(&mut self, alphas: &[f64]) {
        let dt = self.dt;
        for state in self.assignment.iter_mut() {
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let current = *state as usize;
            if current != 0 {
                acc += (1.0 - alphas[current - 1]) * dt;
                if u < acc {
                    *state = 0;
                    continue;
                }
            }
            for (j, &a) in alphas.iter().enumerate() {
                if j + 1 == current {
                    continue;
                }
                acc += a * dt;
                if u < acc {
                    *state = (j + 1) as u16;
                    break;
                }
            }
        }
    }

    fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.nodes + 1];
        for &s in &self.assignment {
            c[s as usize] += 1;
        }
        c
    }
}

/// Aggregated engine drawing each state's outflows as one multinomial.
pub struct CountPopulation {
    counts: Vec<u64>,
    dt: f64,
    rng: ChaCha8Rng,
}

impl CountPopulation {
    pub fn new(users: usize, x0: &[f64], dt: f64, seed: u64) -> Self {
        Self { counts: initial_counts(users, x0), dt, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

/// Sequential-binomial multinomial draw; leftover mass stays put.
fn multinomial(rng: &mut ChaCha8Rng, trials: u64, probs: &[f64], out: &mut [u64]) {
    let mut remaining = trials;
    let mut mass = 1.0;
    for (o, &p) in out.iter_mut().zip(probs) {
        if remaining == 0 || p <= 0.0 {
            *o = 0;
            continue;
        }
        let share = (p / mass).clamp(0.0, 1.0);
        let k = Binomial::new(remaining, share).expect("probability in [0, 1]").sample(rng);
        *o = k;
        remaining -= k;
        mass -= p;
    }
}

impl Population for CountPopulation {
    fn step(&mut self, alphas: &[f64]) {
        let n = alphas.len();
        let old = self.counts.clone();
        let mut probs = vec![0.0; n + 1];
        let mut moves = vec![0u64; n + 1];
        for from in 0..=n {
            for (to, p) in probs.iter_mut().enumerate() {
                *p = transition_probability(from, to, alphas, self.dt);
            }
            probs[from] = 0.0;
            multinomial(&mut self.rng, old[from], &probs, &mut moves);
            for (to, &k) in moves.iter().enumerate() {
                self.counts[from] -= k;
                self.counts[to] += k;
            }
        }
    }

    fn counts(&self) -> Vec<u64> {
        self.counts.clone()
    }
}

/// One-step probability of moving between two attention states (0 = unattached).
pub fn transition_probability(from: usize, to: usize, alphas: &[f64], dt: f64) -> f64 {
    match (from, to) {
        (f, t) if f == t => {
            1.0 - (0..=alphas.len()).filter(|&k| k != f).map(|k| transition_probability(f, k, alphas, dt)).sum::<f64>()
        }
        (_, 0) => (1.0 - alphas[from - 1]) * dt,
        (_, t) => alphas[t - 1] * dt,
    }
}

/// Expected one-step change of every node's share, from the transition table.
pub fn expected_share_change(shares: &[f64], alphas: &[f64], dt: f64) -> Vec<f64> {
    let n = alphas.len();
    let mut occupancy = Vec::with_capacity(n + 1);
    occupancy.push(1.0 - shares.iter().sum::<f64>());
    occupancy.extend_from_slice(shares);
    (1..=n)
        .map(|to| {
            let inflow: f64 = (0..=n).map(|from| occupancy[from] * transition_probability(from, to, alphas, dt)).sum();
            inflow - occupancy[to]
        })
        .collect()
}

/// Replicate-averaged empirical shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalTrajectory {
    pub times: Vec<f64>,
    /// `shares[i][k]`: mean fraction of users attending node `i` at `times[k]`.
    pub shares: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub runs: usize,
}

fn check_step(strategies: &[Signal], dt: f64, horizon: f64) -> Result<(), AbmError> {
    let samples = |s: &Signal| -> Vec<f64> {
        match s {
            Signal::Constant(v) => vec![*v],
            Signal::Sampled { values, .. } => values.clone(),
        }
    };
    let mut a_max = Vec::new();
    let mut b_max = Vec::new();
    for s in strategies {
        let v = samples(s);
        if v.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(AbmError::Config("benign rates must lie in [0, 1]".into()));
        }
        a_max.push(v.iter().cloned().fold(0.0, f64::max));
        b_max.push(v.iter().map(|a| 1.0 - a).fold(0.0, f64::max));
    }
    let total_a: f64 = a_max.iter().sum();
    let exit = (0..a_max.len()).map(|i| b_max[i] + total_a - a_max[i]).fold(total_a, f64::max);
    let rates = total_a + b_max.iter().cloned().fold(0.0, f64::max) + exit;
    let value = dt * rates;
    if dt.is_nan() || dt <= 0.0 || value > PROBABILITY_BOUND {
        return Err(AbmError::StepTooLarge { dt, rates, value });
    }
    if dt > horizon {
        return Err(AbmError::Config(format!("dt = {dt} exceeds the horizon {horizon}")));
    }
    Ok(())
}

/// Simulates `settings.runs` replicates over `[0, config.horizon]`.
///
/// Replicate `k` is seeded with `settings.seed + k`; results are identical for
/// identical inputs regardless of thread scheduling.
pub fn simulate_population(
    config: &GameConfig,
    strategies: &[Signal],
    settings: &AbmSettings,
) -> Result<EmpiricalTrajectory, AbmError> {
    let n = config.n();
    if strategies.len() != n {
        return Err(AbmError::Config(format!("expected {n} strategies, got {}", strategies.len())));
    }
    if settings.users == 0 || settings.runs == 0 {
        return Err(AbmError::Config("users and runs must be positive".into()));
    }
    check_step(strategies, settings.dt, config.horizon)?;
    let steps = (config.horizon / settings.dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * settings.dt).collect();

    let runs: Vec<Vec<Vec<f64>>> = (0..settings.runs)
        .into_par_iter()
        .map(|run| {
            let seed = settings.seed.wrapping_add(run as u64);
            let mut pop: Box<dyn Population> = match settings.engine {
                Engine::Agents => Box::new(AgentPopulation::new(settings.users, &config.x0, settings.dt, seed)),
                Engine::Counts => Box::new(CountPopulation::new(settings.users, &config.x0, settings.dt, seed)),
            };
            record(pop.as_mut(), strategies, &times, settings.users)
        })
        .collect();

    let reps = settings.runs as f64;
    let mut shares = vec![vec![0.0; times.len()]; n];
    let mut stderr = vec![vec![0.0; times.len()]; n];
    for i in 0..n {
        for k in 0..times.len() {
            let mean = runs.iter().map(|r| r[i][k]).sum::<f64>() / reps;
            shares[i][k] = mean;
            if settings.runs > 1 {
                let var = runs.iter().map(|r| (r[i][k] - mean).powi(2)).sum::<f64>() / (reps - 1.0);
                stderr[i][k] = (var / reps).sqrt();
            }
        }
    }
    Ok(EmpiricalTrajectory { times, shares, stderr, runs: settings.runs })
}

/// Share samples `[node][time]` of a single replicate.
fn record(pop: &mut dyn Population, strategies: &[Signal], times: &[f64], users: usize) -> Vec<Vec<f64>> {
    let n = strategies.len();
    let mut out = vec![Vec::with_capacity(times.len()); n];
    let mut alphas = vec![0.0; n];
    let push = |out: &mut Vec<Vec<f64>>, counts: &[u64]| {
        for i in 0..n {
            out[i].push(counts[i + 1] as f64 / users as f64);
        }
    };
    push(&mut out, &pop.counts());
    for &t in &times[..times.len() - 1] {
        for (a, s) in alphas.iter_mut().zip(strategies) {
            *a = s.at(t);
        }
        pop.step(&alphas);
        push(&mut out, &pop.counts());
    }
    out
}

/// Mean-field ODE solution on the given grid, for comparison with the simulation.
pub fn meanfield_trajectory(
    config: &GameConfig,
    strategies: &[Signal],
    times: &[f64],
) -> anyhow::Result<Vec<Vec<f64>>> {
    let field = FnField::new(config.n(), |t, y: &[f64], dy: &mut [f64]| {
        let a: Vec<f64> = strategies.iter().map(|s| s.at(t)).collect();
        drift_multi_into(y, &a, dy);
    });
    let step = times[1] - times[0];
    let spec = IntegratorSpec { base_step: step, ..IntegratorSpec::default() };
    let tr = integrate_on_grid(&field, &config.x0, times, &spec)?;
    Ok((0..config.n()).map(|i| tr.component(i)).collect())
}

/// Per-node sup-norm distance between empirical and mean-field shares.
///
/// The ODE samples are interpolated onto the empirical grid, which must lie
/// inside the ODE time range.
pub fn meanfield_gap(emp: &EmpiricalTrajectory, ode_times: &[f64], ode: &[Vec<f64>]) -> Result<Vec<f64>, AbmError> {
    if ode.len() != emp.shares.len() {
        return Err(AbmError::GridMismatch(format!("{} empirical nodes vs {} ODE nodes", emp.shares.len(), ode.len())));
    }
    let (Some(&first), Some(&last)) = (ode_times.first(), ode_times.last()) else {
        return Err(AbmError::GridMismatch("empty ODE grid".into()));
    };
    let tol = 1e-9 * last.abs().max(1.0);
    if emp.times[0] < first - tol || *emp.times.last().unwrap() > last + tol {
        return Err(AbmError::GridMismatch(format!(
            "empirical grid [{}, {}] exceeds ODE grid [{first}, {last}]",
            emp.times[0],
            emp.times.last().unwrap()
        )));
    }
    Ok(emp
        .shares
        .iter()
        .zip(ode)
        .map(|(s, x)| {
            if x.len() != ode_times.len() {
                return f64::NAN;
            }
            emp.times.iter().zip(s).map(|(&t, &v)| (v - interpolate(ode_times, x, t)).abs()).fold(0.0, f64::max)
        })
        .collect())
}

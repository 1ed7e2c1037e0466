//! Mode runners and the result bundle they produce.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use socialtrust_core::equilibrium::{static_nash_fixed_point, verify_nash, DEVIATION_TOL};
use socialtrust_core::maneuver::{
    maneuver_general, maneuver_single, maneuver_symmetric, maneuver_two_symmetric_closed_form, ManeuverResult,
};
use socialtrust_core::ode::{uniform_grid, Signal};
use socialtrust_core::pontryagin::{
    pontryagin_residuals, solve_open_loop, steady_state_open_loop, steady_states, OpenLoopSolution,
};
use socialtrust_core::trust::{closed_form_trust, long_run_average_profit, others_sum, profit_density};
use socialtrust_core::{GameConfig, NodeParams, Strategy};

use crate::abm::{meanfield_gap, meanfield_trajectory, simulate_population};
use crate::error::{HarnessError, Result};
use crate::plot::{emit_plot, PlotSpec};
use crate::reproduce;
use crate::scenario::{resolve, Mode, Overrides, Plan, Scenario, SolveKind, SweepParameter, SweepPlan};
use crate::table::Table;

/// Resolution used when checking static profiles against unilateral deviations.
const DEVIATION_GRID: f64 = 1e-4;

/// Everything a run produces; written to disk by [`ResultBundle::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    /// The resolved scenario; re-running it reproduces every file.
    pub manifest: Scenario,
    pub output: PathBuf,
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, String)>,
    pub summary: Map<String, Value>,
    pub converged: bool,
}

impl ResultBundle {
    fn new(manifest: Scenario, output: PathBuf) -> Self {
        Self { manifest, output, tables: Vec::new(), plots: Vec::new(), summary: Map::new(), converged: true }
    }

    /// 0 when every solver converged, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            2
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub(crate) fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    pub(crate) fn note(&mut self, text: impl Into<String>) {
        let notes = self.summary.entry("notes").or_insert_with(|| Value::Array(Vec::new()));
        if let Value::Array(v) = notes {
            v.push(Value::String(text.into()));
        }
    }

    pub(crate) fn plot(&mut self, file: &str, table: &str, spec: PlotSpec) -> Result<()> {
        let svg = emit_plot(self.table(table).expect("plotted table exists"), &spec)?;
        self.plots.push((file.into(), svg));
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary_value()).expect("summary is valid JSON");
        s.push('\n');
        s
    }

    fn summary_value(&self) -> Value {
        let mut m = self.summary.clone();
        m.insert("converged".into(), self.converged.into());
        m.insert("exit_code".into(), self.exit_code().into());
        Value::Object(m)
    }

    /// Human-readable `key: value` listing of the summary.
    pub fn summary_text(&self) -> String {
        let Value::Object(m) = self.summary_value() else { unreachable!() };
        let mut out = String::new();
        for (k, v) in &m {
            match v {
                Value::String(s) => out.push_str(&format!("{k}: {s}\n")),
                Value::Array(items) if items.iter().all(Value::is_string) => {
                    out.push_str(&format!("{k}:\n"));
                    for item in items {
                        out.push_str(&format!("  - {}\n", item.as_str().unwrap()));
                    }
                }
                v => out.push_str(&format!("{k}: {v}\n")),
            }
        }
        out
    }

    /// Writes manifest, tables, plots and summaries into `dir`, one file at a time.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let put = |name: &str, contents: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| HarnessError::io(path, e))
        };
        put("manifest.toml", self.manifest.to_toml().as_bytes())?;
        for (name, table) in &self.tables {
            put(name, table.to_csv_string().as_bytes())?;
        }
        for (name, svg) in &self.plots {
            put(name, svg.as_bytes())?;
        }
        put("summary.json", self.summary_json().as_bytes())?;
        put("summary.txt", self.summary_text().as_bytes())?;
        Ok(())
    }
}

/// Loads `path` (if any), applies command-line overrides and runs the scenario.
pub fn run_scenario(path: Option<&Path>, overrides: &Overrides) -> Result<ResultBundle> {
    let file = match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    execute(overrides.apply(file)?)
}

/// Resolves and runs a scenario without touching the file system.
pub fn execute(scenario: Scenario) -> Result<ResultBundle> {
    let (manifest, plan) = resolve(scenario)?;
    let mut bundle = ResultBundle::new(manifest, plan.output.clone());
    bundle.put("mode", serde_json::to_value(plan.mode).expect("mode serializes"));
    match plan.mode {
        Mode::Static => run_static(&plan, &mut bundle)?,
        Mode::Dynamic => {
            run_dynamic(&plan.config, "dynamic", &mut bundle)?;
        }
        Mode::Abm => run_abm(&plan, &mut bundle)?,
        Mode::Maneuver => run_maneuver(&plan, &mut bundle)?,
        Mode::Sweep => run_sweep(&plan, plan.sweep.as_ref().expect("resolved sweep"), &mut bundle)?,
        Mode::Reproduce => reproduce::run_figure(&plan, plan.figure.expect("resolved figure"), &mut bundle)?,
    }
    Ok(bundle)
}

pub(crate) fn node_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn spec_for(title: &str, x: &str, series: &[String], y_label: &str) -> PlotSpec {
    let refs: Vec<&str> = series.iter().map(String::as_str).collect();
    PlotSpec::new(title, x, &refs).y_label(y_label)
}

fn run_static(plan: &Plan, bundle: &mut ResultBundle) -> Result<()> {
    let cfg = &plan.config;
    let n = cfg.n();
    let prof = static_nash_fixed_point(cfg);
    let alphas = &prof.alphas;
    let trust = steady_states(alphas);
    let profit: Vec<f64> = (0..n)
        .map(|i| long_run_average_profit(Strategy::clamped(alphas[i]), others_sum(alphas, i), &cfg.params[i]))
        .collect();
    let report = verify_nash(alphas, cfg, DEVIATION_GRID, DEVIATION_TOL);

    let mut columns = vec!["t".to_string()];
    for prefix in ["x", "alpha", "beta", "profit"] {
        columns.extend(node_columns(prefix, n));
    }
    let mut table = Table::new(columns);
    for t in uniform_grid(0.0, cfg.horizon, cfg.step) {
        let x: Vec<f64> = (0..n).map(|i| closed_form_trust(t, cfg.x0[i], alphas[i], others_sum(alphas, i))).collect();
        let mut row = vec![t];
        row.extend(&x);
        row.extend(alphas.iter());
        row.extend(alphas.iter().map(|a| 1.0 - a));
        row.extend((0..n).map(|i| profit_density(x[i], Strategy::clamped(alphas[i]), &cfg.params[i])));
        table.push(row);
    }
    bundle.tables.push(("static.csv".into(), table));
    bundle.plot(
        "static_trust.svg",
        "static.csv",
        spec_for("Trust under static equilibrium rates", "t", &node_columns("x", n), "trust share"),
    )?;

    bundle.converged = prof.converged;
    bundle.put("alpha", alphas.clone());
    bundle.put("beta", prof.betas());
    bundle.put("steady_trust", trust);
    bundle.put("long_run_profit", profit);
    bundle.put("iterations", prof.iterations);
    bundle.put("residual", prof.residual);
    bundle.put("alternative_equilibria", prof.alternatives.len());
    bundle.put("deviation_gain", report.gains);
    bundle.put("nash_verified", report.passed);
    Ok(())
}

/// Table with `t, x_i, alpha_i, beta_i, lambda_i, profit_i` from a sweep solution.
pub(crate) fn dynamic_table(sol: &OpenLoopSolution) -> Table {
    let n = sol.nodes.len();
    let mut columns = vec!["t".to_string()];
    for prefix in ["x", "alpha", "beta", "lambda", "profit"] {
        columns.extend(node_columns(prefix, n));
    }
    let mut table = Table::new(columns);
    for (k, &t) in sol.times().iter().enumerate() {
        let mut row = vec![t];
        row.extend(sol.nodes.iter().map(|nd| nd.x[k]));
        row.extend(sol.nodes.iter().map(|nd| nd.alpha[k]));
        row.extend(sol.nodes.iter().map(|nd| 1.0 - nd.alpha[k]));
        row.extend(sol.nodes.iter().map(|nd| nd.lambda.as_ref().map_or(f64::NAN, |l| l[k])));
        row.extend(sol.nodes.iter().map(|nd| nd.profit_density[k]));
        table.push(row);
    }
    table
}

/// Runs the forward-backward sweep and records `<stem>.csv` plus the summary.
pub(crate) fn run_dynamic(cfg: &GameConfig, stem: &str, bundle: &mut ResultBundle) -> Result<OpenLoopSolution> {
    let n = cfg.n();
    let sol = solve_open_loop(cfg)?;
    let steady = steady_state_open_loop(&cfg.params)?;
    let res = pontryagin_residuals(&sol, &cfg.params);
    let csv = format!("{stem}.csv");
    bundle.tables.push((csv.clone(), dynamic_table(&sol)));
    bundle.plot(
        &format!("{stem}_trust.svg"),
        &csv,
        spec_for("Trust shares", "t", &node_columns("x", n), "trust share"),
    )?;
    bundle.plot(
        &format!("{stem}_controls.svg"),
        &csv,
        spec_for("Benign activity rates", "t", &node_columns("alpha", n), "alpha"),
    )?;

    bundle.converged = sol.converged;
    bundle.put("sweeps", sol.sweeps);
    bundle.put("control_residual", sol.control_residual);
    bundle.put("final_damping", sol.final_damping);
    let plateau = sol.plateau_alphas();
    bundle.put("plateau_beta", plateau.iter().map(|a| 1.0 - a).collect::<Vec<_>>());
    bundle.put("plateau_alpha", plateau);
    bundle.put("plateau_trust", sol.plateau_states());
    bundle.put("steady_state_alpha", steady.clone());
    bundle.put("plateau_deviation", sol.plateau_deviation(&steady));
    bundle.put("final_trust", sol.nodes.iter().map(|nd| *nd.x.last().unwrap()).collect::<Vec<_>>());
    bundle.put(
        "pontryagin_residuals",
        json!({ "control_gradient": res.control_gradient, "costate": res.costate, "state": res.state }),
    );
    Ok(sol)
}

fn run_abm(plan: &Plan, bundle: &mut ResultBundle) -> Result<()> {
    let cfg = &plan.config;
    let n = cfg.n();
    let alphas = match &plan.abm_alpha {
        Some(a) => a.clone(),
        None => {
            let prof = static_nash_fixed_point(cfg);
            if !prof.converged {
                bundle.converged = false;
            }
            prof.alphas
        }
    };
    let strategies: Vec<Signal> = alphas.iter().map(|&a| Signal::Constant(a)).collect();
    let emp = simulate_population(cfg, &strategies, &plan.abm)?;
    let ode = meanfield_trajectory(cfg, &strategies, &emp.times)?;
    let gap = meanfield_gap(&emp, &emp.times, &ode)?;

    let mut columns = vec!["t".to_string()];
    for prefix in ["x", "stderr", "ode"] {
        columns.extend(node_columns(prefix, n));
    }
    let mut table = Table::new(columns);
    for (k, &t) in emp.times.iter().enumerate() {
        let mut row = vec![t];
        row.extend(emp.shares.iter().map(|s| s[k]));
        row.extend(emp.stderr.iter().map(|s| s[k]));
        row.extend(ode.iter().map(|s| s[k]));
        table.push(row);
    }
    bundle.tables.push(("abm.csv".into(), table));
    let mut series = node_columns("x", n);
    series.extend(node_columns("ode", n));
    bundle.plot("abm.svg", "abm.csv", spec_for("Simulated and mean-field trust", "t", &series, "trust share"))?;

    bundle.put("alpha", alphas);
    bundle.put("users", plan.abm.users);
    bundle.put("runs", plan.abm.runs);
    bundle.put("dt", plan.abm.dt);
    bundle.put("engine", serde_json::to_value(plan.abm.engine).expect("engine serializes"));
    bundle.put("meanfield_gap", gap);
    let max_se = emp.stderr.iter().flatten().cloned().fold(0.0, f64::max);
    bundle.put("max_stderr", max_se);
    Ok(())
}

fn maneuver_result(plan: &Plan) -> Result<(&'static str, ManeuverResult)> {
    let cfg = &plan.config;
    let n = cfg.n();
    let t = &plan.target_beta;
    let first = cfg.params[0];
    if n == 1 {
        return Ok(("single", maneuver_single(first.p, first.q, t[0])?));
    }
    let identical = cfg.params.iter().all(|pr| pr.p == first.p && pr.q == first.q) && t.iter().all(|&b| b == t[0]);
    if identical {
        Ok(("symmetric", maneuver_symmetric(n, first.p, first.q, t[0])?))
    } else {
        Ok(("general", maneuver_general(cfg, t)?))
    }
}

fn run_maneuver(plan: &Plan, bundle: &mut ResultBundle) -> Result<()> {
    let (method, res) = maneuver_result(plan)?;
    let mut table = Table::new(vec!["node".into(), "r".into(), "target_beta".into(), "achieved_beta".into()]);
    for i in 0..res.r.len() {
        table.push(vec![(i + 1) as f64, res.r[i], res.target_beta[i], res.achieved_beta[i]]);
    }
    bundle.tables.push(("maneuver.csv".into(), table));
    bundle.put("method", method);
    bundle.put("r", res.r.clone());
    bundle.put("target_beta", res.target_beta.clone());
    bundle.put("achieved_beta", res.achieved_beta.clone());
    bundle.put("round_trip_residual", res.residual);
    bundle.put("overall_activity", res.overall_activity());
    if method == "symmetric" && res.r.len() == 2 {
        let pr = plan.config.params[0];
        let closed = maneuver_two_symmetric_closed_form(pr.p, pr.q, res.target_beta[0]);
        bundle.put("two_node_closed_form_r", closed);
        bundle.note(format!(
            "the published two-node closed form (p+q)(3-2b)^2-(3p+q)/4 gives r = {closed}, \
             the round-trip inverter gives r = {}; only the latter reproduces the target rate",
            res.r[0]
        ));
    }
    Ok(())
}

/// Equilibrium summary of one sweep point: per-node alpha, trust, profit.
struct PointResult {
    alpha: Vec<f64>,
    trust: Vec<f64>,
    profit: Vec<f64>,
    converged: bool,
}

fn solve_point(cfg: &GameConfig, kind: SolveKind) -> Result<PointResult> {
    let n = cfg.n();
    match kind {
        SolveKind::Static => {
            let prof = static_nash_fixed_point(cfg);
            let profit = (0..n)
                .map(|i| {
                    long_run_average_profit(
                        Strategy::clamped(prof.alphas[i]),
                        others_sum(&prof.alphas, i),
                        &cfg.params[i],
                    )
                })
                .collect();
            Ok(PointResult {
                trust: steady_states(&prof.alphas),
                alpha: prof.alphas,
                profit,
                converged: prof.converged,
            })
        }
        SolveKind::Dynamic => {
            let sol = solve_open_loop(cfg)?;
            let w = sol.plateau();
            let len = w.len() as f64;
            let profit = sol.nodes.iter().map(|nd| nd.profit_density[w.clone()].iter().sum::<f64>() / len).collect();
            Ok(PointResult {
                alpha: sol.plateau_alphas(),
                trust: sol.plateau_states(),
                profit,
                converged: sol.converged,
            })
        }
    }
}

fn point_config(base: &GameConfig, sweep: &SweepPlan, value: f64) -> Result<GameConfig> {
    let mut cfg = base.clone();
    let set = |pr: &mut NodeParams| -> Result<()> {
        let (p, q, r) = match sweep.parameter {
            SweepParameter::P => (value, pr.q, pr.r),
            SweepParameter::Q => (pr.p, value, pr.r),
            SweepParameter::R => (pr.p, pr.q, value),
            SweepParameter::N => unreachable!(),
        };
        *pr = NodeParams::new(p, q, r).map_err(|e| HarnessError::Config(format!("sweep value {value}: {e}")))?;
        Ok(())
    };
    if sweep.parameter == SweepParameter::N {
        let count = value as usize;
        cfg.params = vec![base.params[0]; count];
        cfg.x0 = vec![0.0; count];
    } else {
        match sweep.node {
            Some(i) => set(&mut cfg.params[i])?,
            None => cfg.params.iter_mut().try_for_each(set)?,
        }
    }
    Ok(cfg)
}

fn run_sweep(plan: &Plan, sweep: &SweepPlan, bundle: &mut ResultBundle) -> Result<()> {
    let configs = sweep.values.iter().map(|&v| point_config(&plan.config, sweep, v)).collect::<Result<Vec<_>>>()?;
    let points = configs.par_iter().map(|cfg| solve_point(cfg, sweep.solve)).collect::<Result<Vec<_>>>()?;

    let label = serde_json::to_value(sweep.parameter).expect("parameter serializes").as_str().unwrap().to_string();
    // node count varies along an n sweep, so only node 1 is tabulated there
    let width = if sweep.parameter == SweepParameter::N { 1 } else { plan.config.n() };
    let mut columns = vec![label.clone()];
    for prefix in ["alpha", "beta", "x", "profit"] {
        columns.extend(node_columns(prefix, width));
    }
    columns.push("converged".into());
    let mut table = Table::new(columns);
    for (v, pt) in sweep.values.iter().zip(&points) {
        let mut row = vec![*v];
        row.extend(&pt.alpha[..width]);
        row.extend(pt.alpha[..width].iter().map(|a| 1.0 - a));
        row.extend(&pt.trust[..width]);
        row.extend(&pt.profit[..width]);
        row.push(if pt.converged { 1.0 } else { 0.0 });
        table.push(row);
    }
    bundle.tables.push(("sweep.csv".into(), table));
    let mut series = node_columns("alpha", width);
    series.extend(node_columns("beta", width));
    bundle.plot(
        "sweep.svg",
        "sweep.csv",
        spec_for(&format!("Equilibrium rates against {label}"), &label, &series, "rate"),
    )?;

    bundle.converged = points.iter().all(|p| p.converged);
    bundle.put("parameter", label);
    bundle.put("points", points.len());
    bundle.put("solve", serde_json::to_value(sweep.solve).expect("solve kind serializes"));
    bundle.put("unconverged_points", points.iter().filter(|p| !p.converged).count());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn run(text: &str) -> ResultBundle {
        execute(Scenario::parse(text, Path::new("t.toml")).unwrap()).unwrap()
    }

    #[test]
    fn static_single_node_reports_one_half() {
        let b = run("mode = \"static\"\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n");
        assert_eq!(b.exit_code(), 0);
        let a = b.summary["alpha"][0].as_f64().unwrap();
        let beta = b.summary["beta"][0].as_f64().unwrap();
        assert!((a - 0.5).abs() < 1e-9 && (beta - 0.5).abs() < 1e-9);
        assert_eq!(b.table("static.csv").unwrap().columns, ["t", "x_1", "alpha_1", "beta_1", "profit_1"]);
    }

    #[test]
    fn single_maneuver_round_trips() {
        let b = run("mode = \"maneuver\"\n[[node]]\np = 0.4\nq = 0.2\n[maneuver]\ntarget_beta = [0.5]\n");
        assert!((b.summary["r"][0].as_f64().unwrap() - 0.2).abs() < 1e-12);
        assert!(b.summary["round_trip_residual"].as_f64().unwrap() < 1e-12);
    }

    #[test]
    fn infeasible_maneuver_exits_one_with_interval() {
        let s = Scenario::parse(
            "mode = \"maneuver\"\n[[node]]\np = 0.4\nq = 0.2\n[maneuver]\ntarget_beta = [0.9]\n",
            Path::new("t"),
        )
        .unwrap();
        let err = execute(s).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("achievable interval"), "{err}");
    }

    #[test]
    fn forced_non_convergence_exits_two() {
        let b = run("mode = \"dynamic\"\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n[solver]\nmax_iter = 1\n");
        assert!(!b.converged);
        assert_eq!(b.exit_code(), 2);
        assert_eq!(b.summary_value()["converged"], Value::Bool(false));
    }

    #[test]
    fn summary_text_lists_every_key() {
        let b = run("mode = \"static\"\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n");
        let text = b.summary_text();
        assert!(text.contains("converged: true\n"));
        assert!(text.contains("mode: static\n"));
    }
}

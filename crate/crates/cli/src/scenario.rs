//! Scenario files: strict TOML schema, command-line overrides and resolution
//! into solver inputs.
//!
//! A resolved scenario has every default filled in. It is what gets written as
//! the run manifest, so feeding a manifest back in repeats the run exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use socialtrust_core::{GameConfig, NodeParams, SolverSettings};

use crate::abm::{AbmSettings, Engine};
use crate::error::{HarnessError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_OUTPUT: &str = "results";
pub const DEFAULT_USERS: usize = 10_000;
pub const DEFAULT_ABM_DT: f64 = 0.01;
pub const DEFAULT_RUNS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Static,
    Dynamic,
    Abm,
    Maneuver,
    Sweep,
    Reproduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    Entrant,
    NSweep,
    ManeuverCompare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    P,
    Q,
    R,
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub p: f64,
    pub q: f64,
    /// Optional only in maneuver mode, where the penalty is the output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbmBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    /// Constant benign rates; defaults to the static equilibrium.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<SweepParameter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// 1-based node whose parameter is swept; all nodes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<Figure>,
}

/// A scenario as written by the user; every key is optional until resolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, rename = "node", skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abm: Option<AbmBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maneuver: Option<ManeuverBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reproduce: Option<ReproduceBlock>,
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl Scenario {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
            HarnessError::Parse { path: path.to_owned(), line, column, message: e.message().trim().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }
}

/// Values set on the command line; each one replaces the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub n: Option<usize>,
    /// Applied to every node.
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
    pub max_iter: Option<usize>,
    pub step: Option<f64>,
    pub users: Option<usize>,
    pub dt: Option<f64>,
    pub runs: Option<usize>,
    pub engine: Option<Engine>,
    pub alpha: Option<Vec<f64>>,
    pub target_beta: Option<Vec<f64>>,
    pub parameter: Option<SweepParameter>,
    pub values: Option<Vec<f64>>,
    pub node: Option<usize>,
    pub solve: Option<SolveKind>,
    pub figure: Option<Figure>,
}

fn set<T>(slot: &mut Option<T>, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = Some(v.clone());
    }
}

impl Overrides {
    pub fn apply(&self, mut s: Scenario) -> Result<Scenario> {
        set(&mut s.mode, &self.mode);
        set(&mut s.n, &self.n);
        set(&mut s.x0, &self.x0);
        set(&mut s.horizon, &self.horizon);
        set(&mut s.seed, &self.seed);
        set(&mut s.output, &self.output);
        if self.p.is_some() || self.q.is_some() || self.r.is_some() {
            if s.nodes.is_empty() {
                let (Some(p), Some(q)) = (self.p, self.q) else {
                    return Err(HarnessError::Config("no [[node]] entries: --p and --q are both required".into()));
                };
                s.nodes.push(NodeEntry { p, q, r: self.r });
            } else {
                for node in &mut s.nodes {
                    node.p = self.p.unwrap_or(node.p);
                    node.q = self.q.unwrap_or(node.q);
                    set(&mut node.r, &self.r);
                }
            }
        }
        if self.tol.is_some() || self.damping.is_some() || self.max_iter.is_some() || self.step.is_some() {
            let b = s.solver.get_or_insert_with(Default::default);
            set(&mut b.tol, &self.tol);
            set(&mut b.damping, &self.damping);
            set(&mut b.max_iter, &self.max_iter);
            set(&mut b.step, &self.step);
        }
        if self.users.is_some()
            || self.dt.is_some()
            || self.runs.is_some()
            || self.engine.is_some()
            || self.alpha.is_some()
        {
            let b = s.abm.get_or_insert_with(Default::default);
            set(&mut b.users, &self.users);
            set(&mut b.dt, &self.dt);
            set(&mut b.runs, &self.runs);
            set(&mut b.engine, &self.engine);
            set(&mut b.alpha, &self.alpha);
        }
        if self.target_beta.is_some() {
            s.maneuver.get_or_insert_with(Default::default).target_beta = self.target_beta.clone();
        }
        if self.parameter.is_some() || self.values.is_some() || self.node.is_some() || self.solve.is_some() {
            let b = s.sweep.get_or_insert_with(Default::default);
            set(&mut b.parameter, &self.parameter);
            set(&mut b.values, &self.values);
            set(&mut b.node, &self.node);
            set(&mut b.solve, &self.solve);
        }
        if self.figure.is_some() {
            s.reproduce.get_or_insert_with(Default::default).figure = self.figure;
        }
        Ok(s)
    }
}

/// Fully resolved sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// 0-based node index, `None` for all nodes.
    pub node: Option<usize>,
    pub solve: SolveKind,
}

/// Solver inputs derived from a resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub mode: Mode,
    pub config: GameConfig,
    pub output: PathBuf,
    pub abm: AbmSettings,
    pub abm_alpha: Option<Vec<f64>>,
    pub target_beta: Vec<f64>,
    pub sweep: Option<SweepPlan>,
    pub figure: Option<Figure>,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Node list and initial shares a reproduction figure runs with.
pub fn figure_setup(figure: Figure) -> (Vec<NodeEntry>, Vec<f64>) {
    let node = |p: f64, q: f64, r: f64| NodeEntry { p, q, r: Some(r) };
    match figure {
        Figure::Entrant => (vec![node(0.4, 0.2, 0.2); 2], vec![0.5, 0.0]),
        Figure::NSweep => (vec![node(0.4, 0.2, 0.2)], vec![0.0]),
        Figure::ManeuverCompare => (vec![node(0.5, 0.1, 0.2), node(0.5, 0.1, 0.3)], vec![0.0, 0.0]),
    }
}

/// Node counts of the n-sweep figure.
pub const N_SWEEP_RANGE: std::ops::RangeInclusive<usize> = 1..=10;

/// Fills in every default and checks the result.
///
/// Returns the resolved scenario (the manifest) together with solver inputs.
pub fn resolve(s: Scenario) -> Result<(Scenario, Plan)> {
    if let Some(v) = &s.tool_version {
        if v != TOOL_VERSION {
            eprintln!("warning: scenario was written by version {v}, this is {TOOL_VERSION}");
        }
    }
    let mode = s.mode.ok_or_else(|| config_err("missing key 'mode'"))?;
    let figure = s.reproduce.as_ref().and_then(|b| b.figure);
    if mode == Mode::Reproduce && figure.is_none() {
        return Err(config_err("reproduce mode needs [reproduce] figure"));
    }
    if mode != Mode::Reproduce && s.reproduce.is_some() {
        return Err(config_err("[reproduce] block is only valid in reproduce mode"));
    }

    let (nodes, x0, n) = if let Some(fig) = figure {
        if !s.nodes.is_empty() || s.x0.is_some() || s.n.is_some() {
            return Err(config_err("reproduction figures fix their own nodes; remove n, x0 and [[node]]"));
        }
        let (nodes, x0) = figure_setup(fig);
        let n = nodes.len();
        (nodes, x0, n)
    } else {
        if s.nodes.is_empty() {
            return Err(config_err("at least one [[node]] entry is required"));
        }
        let n = s.n.unwrap_or(s.nodes.len());
        if n == 0 {
            return Err(config_err("n must be at least 1"));
        }
        let nodes = match s.nodes.len() {
            len if len == n => s.nodes.clone(),
            1 => vec![s.nodes[0].clone(); n],
            len => return Err(config_err(format!("n = {n} but {len} [[node]] entries given"))),
        };
        let x0 = s.x0.clone().unwrap_or_else(|| vec![0.0; n]);
        if x0.len() != n {
            return Err(config_err(format!("x0 has {} entries, expected {n}", x0.len())));
        }
        (nodes, x0, n)
    };
    if mode != Mode::Maneuver {
        if let Some(i) = nodes.iter().position(|nd| nd.r.is_none()) {
            return Err(config_err(format!("node {} is missing 'r'", i + 1)));
        }
    }
    let params = nodes
        .iter()
        .map(|nd| NodeParams::new(nd.p, nd.q, nd.r.unwrap_or(1.0)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| config_err(e.to_string()))?;

    let sweep_kind = s.sweep.as_ref().and_then(|b| b.solve).unwrap_or(SolveKind::Static);
    let primary = match mode {
        Mode::Dynamic | Mode::Reproduce => SolverSettings::SWEEP,
        Mode::Sweep if sweep_kind == SolveKind::Dynamic => SolverSettings::SWEEP,
        _ => SolverSettings::STATIC,
    };
    let horizon = s.horizon.unwrap_or(GameConfig::DEFAULT_HORIZON);
    let sb = s.solver.clone().unwrap_or_default();
    let solver = SolverBlock {
        tol: Some(sb.tol.unwrap_or(primary.tol)),
        damping: Some(sb.damping.unwrap_or(primary.damping)),
        max_iter: Some(sb.max_iter.unwrap_or(primary.max_iter)),
        step: Some(sb.step.unwrap_or(horizon / GameConfig::DEFAULT_GRID_INTERVALS as f64)),
    };
    let seed = s.seed.unwrap_or(0);

    let mut config = GameConfig::new(params, x0.clone()).map_err(|e| config_err(e.to_string()))?;
    config.horizon = horizon;
    config.step = solver.step.unwrap();
    config.seed = seed;
    // the mode's own solver gets the block; the other one is unused, so both share it
    config.fixed_point = SolverSettings {
        tol: solver.tol.unwrap(),
        damping: solver.damping.unwrap(),
        max_iter: solver.max_iter.unwrap(),
    };
    config.sweep = config.fixed_point;
    config.validate().map_err(|e| config_err(e.to_string()))?;

    let ab = s.abm.clone().unwrap_or_default();
    let users = ab.users.unwrap_or(DEFAULT_USERS);
    let mut abm = AbmSettings::new(users, ab.dt.unwrap_or(DEFAULT_ABM_DT), ab.runs.unwrap_or(DEFAULT_RUNS), seed);
    if let Some(e) = ab.engine {
        abm.engine = e;
    }
    if let (Mode::Abm, Some(a)) = (mode, &ab.alpha) {
        if a.len() != n {
            return Err(config_err(format!("[abm] alpha has {} entries, expected {n}", a.len())));
        }
    }

    let mut target_beta = Vec::new();
    if mode == Mode::Maneuver {
        let t = s
            .maneuver
            .as_ref()
            .and_then(|b| b.target_beta.clone())
            .ok_or_else(|| config_err("maneuver mode needs [maneuver] target_beta"))?;
        target_beta = match t.len() {
            len if len == n => t,
            1 => vec![t[0]; n],
            len => return Err(config_err(format!("target_beta has {len} entries, expected 1 or {n}"))),
        };
    }

    let sweep = if mode == Mode::Sweep {
        let b = s.sweep.clone().unwrap_or_default();
        let parameter = b.parameter.ok_or_else(|| config_err("sweep mode needs [sweep] parameter"))?;
        let values = b
            .values
            .clone()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| config_err("sweep mode needs non-empty [sweep] values"))?;
        if let Some(k) = b.node {
            if k == 0 || k > n {
                return Err(config_err(format!("[sweep] node must lie in 1..={n}, got {k}")));
            }
            if parameter == SweepParameter::N {
                return Err(config_err("[sweep] node cannot be combined with parameter = \"n\""));
            }
        }
        if parameter == SweepParameter::N {
            if values.iter().any(|v| !(v.fract() == 0.0 && *v >= 1.0)) {
                return Err(config_err("node-count sweep values must be positive integers"));
            }
            if x0.iter().any(|&v| v != 0.0) {
                return Err(config_err("node-count sweeps start every node from zero trust; remove x0"));
            }
        }
        Some(SweepPlan { parameter, values, node: b.node.map(|k| k - 1), solve: sweep_kind })
    } else {
        None
    };

    let resolved = Scenario {
        tool_version: Some(TOOL_VERSION.into()),
        mode: Some(mode),
        n: figure.is_none().then_some(n),
        x0: figure.is_none().then(|| x0.clone()),
        horizon: Some(horizon),
        seed: Some(seed),
        output: Some(s.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))),
        nodes: if figure.is_none() { nodes } else { Vec::new() },
        solver: Some(solver),
        abm: (mode == Mode::Abm).then(|| AbmBlock {
            users: Some(abm.users),
            dt: Some(abm.dt),
            runs: Some(abm.runs),
            engine: Some(abm.engine),
            alpha: ab.alpha.clone(),
        }),
        maneuver: (mode == Mode::Maneuver).then(|| ManeuverBlock { target_beta: Some(target_beta.clone()) }),
        sweep: sweep.as_ref().map(|p| SweepBlock {
            parameter: Some(p.parameter),
            values: Some(p.values.clone()),
            node: p.node.map(|k| k + 1),
            solve: Some(p.solve),
        }),
        reproduce: figure.map(|f| ReproduceBlock { figure: Some(f) }),
    };
    let plan = Plan {
        mode,
        config,
        output: resolved.output.clone().unwrap(),
        abm,
        abm_alpha: ab.alpha,
        target_beta,
        sweep,
        figure,
    };
    Ok((resolved, plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "mode = \"static\"\n\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n";

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::parse(text, Path::new("s.toml"))
    }

    #[test]
    fn defaults_are_filled_in() {
        let (resolved, plan) = resolve(parse(BASIC).unwrap()).unwrap();
        assert_eq!(resolved.n, Some(1));
        assert_eq!(resolved.x0, Some(vec![0.0]));
        assert_eq!(resolved.horizon, Some(30.0));
        assert_eq!(resolved.solver.as_ref().unwrap().step, Some(0.01));
        assert_eq!(plan.config.fixed_point, SolverSettings::STATIC);
        assert_eq!(plan.output, PathBuf::from(DEFAULT_OUTPUT));
    }

    #[test]
    fn resolution_is_idempotent() {
        for text in [
            BASIC.to_string(),
            "mode = \"dynamic\"\nn = 2\nx0 = [0.5, 0.0]\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n".into(),
            "mode = \"reproduce\"\n[reproduce]\nfigure = \"n-sweep\"\n".into(),
            "mode = \"abm\"\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n[abm]\nusers = 500\n".into(),
            "mode = \"maneuver\"\n[[node]]\np = 0.4\nq = 0.2\n[maneuver]\ntarget_beta = [0.5]\n".into(),
            "mode = \"sweep\"\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n[sweep]\nparameter = \"r\"\nvalues = [0.1, 0.2]\n"
                .into(),
        ] {
            let (first, plan) = resolve(parse(&text).unwrap()).unwrap();
            let reparsed = parse(&first.to_toml()).unwrap();
            let (second, plan2) = resolve(reparsed).unwrap();
            assert_eq!(first, second, "{text}");
            assert_eq!(plan, plan2, "{text}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let err = parse("mode = \"static\"\n\n[[node]]\np = 0.4\nq = 0.2\nrr = 0.2\n").unwrap_err();
        match err {
            HarnessError::Parse { line, message, .. } => {
                assert_eq!(line, 6);
                assert!(message.contains("rr"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
        let err = parse("mode = \"static\"\nhorizon = [\n").unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2 | 3, .. }), "{err:?}");
    }

    #[test]
    fn single_node_entry_is_replicated() {
        let mut s = parse(BASIC).unwrap();
        s.n = Some(3);
        let (resolved, plan) = resolve(s).unwrap();
        assert_eq!(resolved.nodes.len(), 3);
        assert_eq!(plan.config.n(), 3);
    }

    #[test]
    fn inconsistent_input_is_a_config_error() {
        let cases = [
            "[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n",
            "mode = \"static\"\n",
            "mode = \"static\"\nx0 = [0.5, 0.1]\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n",
            "mode = \"static\"\n[[node]]\np = 0.4\nq = 0.2\n",
            "mode = \"static\"\n[[node]]\np = -0.4\nq = 0.2\nr = 0.2\n",
            "mode = \"maneuver\"\n[[node]]\np = 0.4\nq = 0.2\n",
            "mode = \"reproduce\"\n",
            "mode = \"reproduce\"\nn = 2\n[reproduce]\nfigure = \"entrant\"\n",
            "mode = \"sweep\"\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n[sweep]\nparameter = \"n\"\nvalues = [1.5]\n",
        ];
        for text in cases {
            let err = resolve(parse(text).unwrap()).unwrap_err();
            assert!(matches!(err, HarnessError::Config(_)), "{text}: {err:?}");
            assert_eq!(err.exit_code(), 1);
        }
    }

    #[test]
    fn flags_beat_file_values() {
        let file = parse(BASIC).unwrap();
        let o =
            Overrides { p: Some(0.6), horizon: Some(10.0), max_iter: Some(7), users: Some(100), ..Default::default() };
        let s = o.apply(file).unwrap();
        assert_eq!(s.nodes[0].p, 0.6);
        assert_eq!(s.nodes[0].q, 0.2);
        assert_eq!(s.horizon, Some(10.0));
        assert_eq!(s.solver.unwrap().max_iter, Some(7));
        assert_eq!(s.abm.unwrap().users, Some(100));
    }
}

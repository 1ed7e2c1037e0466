use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use socialtrust::abm::Engine;
use socialtrust::plot::{emit_plot, PlotSpec};
use socialtrust::scenario::{Figure, Mode, SolveKind, SweepParameter};
use socialtrust::table::Table;
use socialtrust::{run_scenario, HarnessError, Overrides};

#[derive(Parser)]
#[command(name = "socialtrust", version, about = "Solvers and experiments for the social-trust game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static Nash equilibrium of constant activity rates
    SolveStatic(ScenarioArgs),
    /// Open-loop equilibrium by forward-backward sweep
    SolveDynamic(ScenarioArgs),
    /// Penalties that pin equilibrium malicious rates to targets
    Maneuver(ScenarioArgs),
    /// Agent-based simulation checked against the mean-field ODE
    SimulateAbm(ScenarioArgs),
    /// Equilibria over a grid of one parameter
    Sweep(ScenarioArgs),
    /// Re-run one of the published studies
    Reproduce {
        /// entrant, n-sweep or maneuver-compare
        #[arg(value_parser = parse_kebab::<Figure>)]
        figure: Figure,
        #[command(flatten)]
        args: ScenarioArgs,
    },
    /// Run a scenario file in the mode it declares
    Run {
        file: PathBuf,
        #[command(flatten)]
        args: ScenarioArgs,
    },
    /// Render columns of a CSV table as an SVG line chart
    Plot {
        csv: PathBuf,
        /// Column used for the horizontal axis
        #[arg(long, default_value = "t")]
        x: String,
        /// Columns to draw
        #[arg(long, value_delimiter = ',', required = true)]
        series: Vec<String>,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value = "")]
        y_label: String,
        /// Destination file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct ScenarioArgs {
    /// Scenario file; command-line values override its keys
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Print the summary as JSON
    #[arg(long)]
    json: bool,
    #[arg(long)]
    n: Option<usize>,
    /// Revenue weight, applied to every node
    #[arg(long)]
    p: Option<f64>,
    /// Cost weight of benign activity, applied to every node
    #[arg(long)]
    q: Option<f64>,
    /// Penalty on malicious activity, applied to every node
    #[arg(long)]
    r: Option<f64>,
    /// Initial trust shares, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving the result files
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    /// Simulated users
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation replicates
    #[arg(long)]
    runs: Option<usize>,
    /// agents or counts
    #[arg(long, value_parser = parse_kebab::<Engine>)]
    engine: Option<Engine>,
    /// Constant benign rates for the simulation, comma separated
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Maneuver targets, one value or one per node
    #[arg(long, value_delimiter = ',')]
    target_beta: Option<Vec<f64>>,
    /// Swept parameter: p, q, r or n
    #[arg(long, value_parser = parse_kebab::<SweepParameter>)]
    parameter: Option<SweepParameter>,
    /// Sweep grid, comma separated
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// 1-based node whose parameter is swept
    #[arg(long)]
    node: Option<usize>,
    /// static or dynamic
    #[arg(long, value_parser = parse_kebab::<SolveKind>)]
    solve: Option<SolveKind>,
}

fn parse_kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

impl ScenarioArgs {
    fn overrides(&self, mode: Option<Mode>, figure: Option<Figure>) -> Overrides {
        Overrides {
            mode,
            n: self.n,
            p: self.p,
            q: self.q,
            r: self.r,
            x0: self.x0.clone(),
            horizon: self.horizon,
            seed: self.seed,
            output: self.output.clone(),
            tol: self.tol,
            damping: self.damping,
            max_iter: self.max_iter,
            step: self.step,
            users: self.users,
            dt: self.dt,
            runs: self.runs,
            engine: self.engine,
            alpha: self.alpha.clone(),
            target_beta: self.target_beta.clone(),
            parameter: self.parameter,
            values: self.values.clone(),
            node: self.node,
            solve: self.solve,
            figure,
        }
    }
}

fn run(
    file: Option<PathBuf>,
    args: &ScenarioArgs,
    mode: Option<Mode>,
    figure: Option<Figure>,
) -> Result<i32, HarnessError> {
    let bundle = run_scenario(file.as_deref(), &args.overrides(mode, figure))?;
    bundle.write(&bundle.output)?;
    if args.json {
        print!("{}", bundle.summary_json());
    } else {
        print!("{}", bundle.summary_text());
        println!("results written to {}", bundle.output.display());
    }
    Ok(bundle.exit_code())
}

fn plot(csv: PathBuf, spec: PlotSpec, out: Option<PathBuf>) -> Result<i32, HarnessError> {
    let file = std::fs::File::open(&csv).map_err(|e| HarnessError::io(&csv, e))?;
    let table = Table::read_csv(file).map_err(|e| HarnessError::Config(format!("{}: {e:#}", csv.display())))?;
    let svg = emit_plot(&table, &spec)?;
    match out {
        Some(path) => std::fs::write(&path, svg).map_err(|e| HarnessError::io(path, e))?,
        None => print!("{svg}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // malformed command lines are configuration errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::SolveStatic(a) => run(a.config.clone(), &a, Some(Mode::Static), None),
        Command::SolveDynamic(a) => run(a.config.clone(), &a, Some(Mode::Dynamic), None),
        Command::Maneuver(a) => run(a.config.clone(), &a, Some(Mode::Maneuver), None),
        Command::SimulateAbm(a) => run(a.config.clone(), &a, Some(Mode::Abm), None),
        Command::Sweep(a) => run(a.config.clone(), &a, Some(Mode::Sweep), None),
        Command::Reproduce { figure, args } => run(args.config.clone(), &args, Some(Mode::Reproduce), Some(figure)),
        Command::Run { file, args } => {
            if args.config.is_some() {
                eprintln!("error: pass the scenario either as FILE or with --config, not both");
                return ExitCode::from(1);
            }
            run(Some(file), &args, None, None)
        }
        Command::Plot { csv, x, series, title, y_label, out } => {
            let refs: Vec<&str> = series.iter().map(String::as_str).collect();
            let title = if title.is_empty() { csv.display().to_string() } else { title };
            plot(csv, PlotSpec::new(&title, &x, &refs).y_label(&y_label), out)
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

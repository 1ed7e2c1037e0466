use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use socialtrust::abm::Engine;
use socialtrust::scenario::{resolve, Figure, Mode, SolveKind, SweepParameter};
use socialtrust::{Overrides, Scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_socialtrust"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn exit_codes_follow_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_in(dir.path(), &["solve-static", "--p", "0.4", "--q", "0.2", "--r", "0.2", "-o", "a"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert!(stdout.contains("alpha: [0.5]") && stdout.contains("beta: [0.5]"), "{stdout}");

    let stalled = run_in(
        dir.path(),
        &["solve-dynamic", "--p", "0.4", "--q", "0.2", "--r", "0.2", "--max-iter", "1", "--json", "-o", "b"],
    );
    assert_eq!(stalled.status.code(), Some(2));
    let summary: serde_json::Value = serde_json::from_slice(&stalled.stdout).unwrap();
    assert_eq!(summary["converged"], false);
    assert!(dir.path().join("b/dynamic.csv").exists());

    let bad = run_in(dir.path(), &["solve-static", "--p", "0.4", "--q", "0.2", "--r=-1", "-o", "c"]);
    assert_eq!(bad.status.code(), Some(1));

    let infeasible = run_in(dir.path(), &["maneuver", "--p", "0.4", "--q", "0.2", "--target-beta", "0.9", "-o", "d"]);
    assert_eq!(infeasible.status.code(), Some(1));
    let err = String::from_utf8(infeasible.stderr).unwrap();
    assert!(err.contains("achievable interval is (0, 0.6666666666666666)"), "{err}");
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "mode = \"static\"\n\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\npenalty = 3\n").unwrap();
    let out = run_in(dir.path(), &["run", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.toml:7:"), "{err}");
    assert!(err.contains("penalty"), "{err}");
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["solve-dynamic", "--p", "0.5", "--q", "0.1", "--r", "0.3", "--n", "2", "--x0", "0.2,0.1", "-o", "first"],
        &[
            "simulate-abm",
            "--p",
            "0.4",
            "--q",
            "0.2",
            "--r",
            "0.2",
            "--users",
            "500",
            "--runs",
            "4",
            "--horizon",
            "5",
            "--seed",
            "9",
            "-o",
            "first",
        ],
        &[
            "sweep",
            "--p",
            "0.4",
            "--q",
            "0.2",
            "--r",
            "0.2",
            "--n",
            "2",
            "--parameter",
            "p",
            "--values",
            "0.2,0.6",
            "-o",
            "first",
        ],
        &["reproduce", "maneuver-compare", "-o", "first"],
    ];
    for args in cases {
        let _ = fs::remove_dir_all(dir.path().join("first"));
        let _ = fs::remove_dir_all(dir.path().join("second"));
        assert_eq!(run_in(dir.path(), args).status.code(), Some(0), "{args:?}");
        let again = run_in(dir.path(), &["run", "first/manifest.toml", "-o", "second"]);
        assert_eq!(again.status.code(), Some(0), "{}", String::from_utf8_lossy(&again.stderr));
        let mut compared = 0;
        for entry in fs::read_dir(dir.path().join("first")).unwrap() {
            let name = entry.unwrap().file_name();
            if name == "manifest.toml" || name == "summary.txt" || name == "summary.json" {
                continue;
            }
            let a = fs::read(dir.path().join("first").join(&name)).unwrap();
            let b = fs::read(dir.path().join("second").join(&name)).unwrap();
            assert!(a == b, "{args:?}: {name:?} differs");
            compared += 1;
        }
        assert!(compared >= 2, "{args:?}");
        // the manifests differ only in the output directory
        let m1 = fs::read_to_string(dir.path().join("first/manifest.toml")).unwrap();
        let m2 = fs::read_to_string(dir.path().join("second/manifest.toml")).unwrap();
        assert_eq!(m1.replace("first", "second"), m2);
    }
}

fn header(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_schemas_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let two = ["--p", "0.4", "--q", "0.2", "--r", "0.2", "--n", "2"];
    let runs: [(&[&str], &str, &str); 6] = [
        (&["solve-static"], "static.csv", "t,x_1,x_2,alpha_1,alpha_2,beta_1,beta_2,profit_1,profit_2"),
        (
            &["solve-dynamic"],
            "dynamic.csv",
            "t,x_1,x_2,alpha_1,alpha_2,beta_1,beta_2,lambda_1,lambda_2,profit_1,profit_2",
        ),
        (
            &["simulate-abm", "--users", "200", "--runs", "2", "--horizon", "1"],
            "abm.csv",
            "t,x_1,x_2,stderr_1,stderr_2,ode_1,ode_2",
        ),
        (&["maneuver", "--target-beta", "0.5"], "maneuver.csv", "node,r,target_beta,achieved_beta"),
        (
            &["sweep", "--parameter", "q", "--values", "0.1,0.3"],
            "sweep.csv",
            "q,alpha_1,alpha_2,beta_1,beta_2,x_1,x_2,profit_1,profit_2,converged",
        ),
        (&["sweep", "--parameter", "n", "--values", "1,2"], "sweep.csv", "n,alpha_1,beta_1,x_1,profit_1,converged"),
    ];
    for (k, (args, file, expected)) in runs.iter().enumerate() {
        let out = format!("o{k}");
        let mut all: Vec<&str> = args.to_vec();
        all.extend(two);
        all.extend(["-o", &out]);
        let res = run_in(d, &all);
        assert_eq!(res.status.code(), Some(0), "{all:?}: {}", String::from_utf8_lossy(&res.stderr));
        assert_eq!(header(&d.join(&out), file), *expected, "{all:?}");
    }
    assert_eq!(run_in(d, &["reproduce", "n-sweep", "-o", "ns"]).status.code(), Some(0));
    assert_eq!(header(&d.join("ns"), "n_sweep.csv"), "n,alpha,beta,alpha_predicted,beta_predicted,converged");
}

#[test]
fn entrant_plot_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["reproduce", "entrant", "-o", "e"]).status.code(), Some(0));
    let svg = fs::read_to_string(dir.path().join("e/entrant_trust.svg")).unwrap();
    assert!(svg.contains(">x_1</text>") && svg.contains(">x_2</text>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    let path = golden("entrant_trust.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, &svg).unwrap();
    }
    let expected = fs::read_to_string(&path).expect("golden file present; set UPDATE_GOLDEN=1 to create it");
    assert!(svg == expected, "entrant plot differs from {}", path.display());
}

#[test]
fn plot_subcommand_reports_unknown_columns() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.csv"), "t,a\n0,1\n1,2\n").unwrap();
    let ok = run_in(dir.path(), &["plot", "t.csv", "--series", "a", "--out", "t.svg"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(fs::read_to_string(dir.path().join("t.svg")).unwrap().starts_with("<svg"));
    let bad = run_in(dir.path(), &["plot", "t.csv", "--series", "b"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8(bad.stderr).unwrap().contains("available columns: t, a"));
}

/// Every override key, set both in the file and on the command line, resolves to the flag value.
#[test]
fn every_flag_overrides_the_file() {
    let file = "mode = \"sweep\"\nn = 2\nx0 = [0.1, 0.1]\nhorizon = 20.0\nseed = 3\noutput = \"from-file\"\n\n\
                [[node]]\np = 0.4\nq = 0.2\nr = 0.2\n\n\
                [solver]\ntol = 1e-9\ndamping = 0.4\nmax_iter = 50\nstep = 0.02\n\n\
                [abm]\nusers = 100\ndt = 0.01\nruns = 2\nengine = \"agents\"\nalpha = [0.3, 0.3]\n\n\
                [maneuver]\ntarget_beta = [0.4]\n\n\
                [sweep]\nparameter = \"p\"\nvalues = [0.1]\nnode = 1\nsolve = \"static\"\n";
    let base = Scenario::parse(file, Path::new("f.toml")).unwrap();
    let resolved = |o: Overrides| match resolve(o.apply(base.clone()).unwrap()) {
        Ok(r) => r.0,
        Err(e) => panic!("{e}"),
    };
    let plain = resolved(Overrides::default());
    assert_eq!(plain.horizon, Some(20.0));

    macro_rules! check {
        ($field:ident = $value:expr, |$s:ident| $read:expr) => {{
            let s = resolved(Overrides { $field: Some($value), ..Default::default() });
            let before = {
                let $s = &plain;
                $read
            };
            let after = {
                let $s = &s;
                $read
            };
            assert_ne!(before, after, "{} left the file value in place", stringify!($field));
        }};
    }
    let three = resolved(Overrides { n: Some(3), x0: Some(vec![0.0; 3]), ..Default::default() });
    assert_eq!((plain.n, three.n), (Some(2), Some(3)));
    check!(p = 0.7, |s| s.nodes[1].p);
    check!(q = 0.3, |s| s.nodes[1].q);
    check!(r = 0.5, |s| s.nodes[1].r);
    check!(x0 = vec![0.2, 0.3], |s| s.x0.clone());
    check!(horizon = 40.0, |s| s.horizon);
    check!(seed = 4, |s| s.seed);
    check!(output = PathBuf::from("flag"), |s| s.output.clone());
    check!(tol = 1e-7, |s| s.solver.as_ref().unwrap().tol);
    check!(damping = 0.9, |s| s.solver.as_ref().unwrap().damping);
    check!(max_iter = 9, |s| s.solver.as_ref().unwrap().max_iter);
    check!(step = 0.05, |s| s.solver.as_ref().unwrap().step);
    check!(parameter = SweepParameter::Q, |s| s.sweep.as_ref().unwrap().parameter);
    check!(values = vec![0.5, 0.6], |s| s.sweep.as_ref().unwrap().values.clone());
    check!(node = 2, |s| s.sweep.as_ref().unwrap().node);
    check!(solve = SolveKind::Dynamic, |s| s.sweep.as_ref().unwrap().solve);

    let as_mode =
        |mode: Mode, o: Overrides| resolve(Overrides { mode: Some(mode), ..o }.apply(base.clone()).unwrap()).unwrap().0;
    let abm = as_mode(Mode::Abm, Overrides::default());
    let abm_flags = as_mode(
        Mode::Abm,
        Overrides {
            users: Some(200),
            dt: Some(0.02),
            runs: Some(3),
            engine: Some(Engine::Counts),
            alpha: Some(vec![0.6, 0.6]),
            ..Default::default()
        },
    );
    let (a, b) = (abm.abm.unwrap(), abm_flags.abm.unwrap());
    assert_eq!((a.users, a.dt, a.runs, a.engine), (Some(100), Some(0.01), Some(2), Some(Engine::Agents)));
    assert_eq!((b.users, b.dt, b.runs, b.engine), (Some(200), Some(0.02), Some(3), Some(Engine::Counts)));
    assert_eq!(b.alpha, Some(vec![0.6, 0.6]));

    let m = as_mode(Mode::Maneuver, Overrides { target_beta: Some(vec![0.3]), ..Default::default() });
    assert_eq!(m.maneuver.unwrap().target_beta, Some(vec![0.3, 0.3]));

    let mut repro = base.clone();
    repro.nodes.clear();
    repro.n = None;
    repro.x0 = None;
    let fig = Overrides { mode: Some(Mode::Reproduce), figure: Some(Figure::Entrant), ..Default::default() };
    let r = resolve(fig.apply(repro).unwrap()).unwrap().0;
    assert_eq!(r.reproduce.unwrap().figure, Some(Figure::Entrant));
}

#[test]
fn flag_precedence_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let text = "mode = \"static\"\nhorizon = 5.0\noutput = \"file-out\"\n\n[[node]]\np = 0.4\nq = 0.2\nr = 0.2\n";
    fs::write(dir.path().join("s.toml"), text).unwrap();
    let out = run_in(dir.path(), &["run", "s.toml", "--horizon", "7", "--r", "0.4", "-o", "flag-out"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!dir.path().join("file-out").exists());
    let manifest = fs::read_to_string(dir.path().join("flag-out/manifest.toml")).unwrap();
    assert!(manifest.contains("horizon = 7.0"), "{manifest}");
    assert!(manifest.contains("r = 0.4"), "{manifest}");
    let table = fs::read_to_string(dir.path().join("flag-out/static.csv")).unwrap();
    assert!(table.lines().last().unwrap().starts_with("7.0000000000000000e0,"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynpanel_core::simulate::{generate, DgpSpec};
use dynpanel_core::PanelDataset;

const PREMIUMS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/premiums.csv");
const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/sampled_firms.txt");

fn dynpanel(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynpanel"))
        .env_remove("DYNPANEL_OUT_DIR")
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_panel(dir: &Path, name: &str, d: &PanelDataset) -> PathBuf {
    let p = dir.join(name);
    let mut f = fs::File::create(&p).unwrap();
    d.write_long_csv(&mut f).unwrap();
    p
}

fn synthetic(dir: &Path, dgp: &DgpSpec) -> PathBuf {
    write_panel(dir, "panel.csv", &generate(dgp).unwrap())
}

#[test]
fn ratings_both_directions() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dynpanel(tmp.path(), &["ratings", "--grade", "AAA"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "97.50");

    let o = dynpanel(tmp.path(), &["ratings", "--value", "25"]);
    assert_eq!(stdout(&o).trim(), "D");

    let o = dynpanel(tmp.path(), &["ratings", "--scale"]);
    assert_eq!(stdout(&o).lines().count(), 29);

    let o = dynpanel(tmp.path(), &["ratings", "--grade", "ZZ"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("AAA+"));
    assert!(tmp.path().join("ratings.manifest.json").exists());
}

#[test]
fn estimate_od_json_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(
        tmp.path(),
        &DgpSpec {
            n_entities: 80,
            n_periods: 7,
            exogenous_betas: vec![1.0, 0.5],
            seed: 11,
            ..DgpSpec::default()
        },
    );
    let out = tmp.path().join("out");
    let o = dynpanel(
        &out,
        &[
            "estimate",
            "--data",
            data.to_str().unwrap(),
            "--spec",
            "od",
            "--dep",
            "y",
            "--ar",
            "1",
            "--x",
            "x1,x2",
            "--instruments",
            "dyn(y,2),dyn(x1,2),dyn(x2,2)",
            "--out",
            "json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["coefficients", "se", "t", "r2", "j", "j_p"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    assert!(v["coefficients"].get("y(-1)").is_some());

    let fitted = fs::read_to_string(out.join("fitted.csv")).unwrap();
    assert!(fitted.lines().count() > 100);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("estimate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"][0], "fitted.csv");
}

#[test]
fn lagged_regressor_grammar() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), &DgpSpec { seed: 12, ..DgpSpec::default() });
    let o = dynpanel(
        tmp.path(),
        &["estimate", "--data", data.to_str().unwrap(), "--dep", "y", "--x", "x1,x1(-1)", "--spec", "fe"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("x1(-1)") && text.contains("y(-1)"), "{text}");
}

#[test]
fn re_degeneracy_is_annotated() {
    let tmp = tempfile::tempdir().unwrap();
    let dgp = DgpSpec {
        n_entities: 40,
        n_periods: 6,
        sigma_effect: 0.0,
        seed: 4,
        ..DgpSpec::default()
    };
    // pick a draw where the between variance is floored
    let floored = (0..50u64)
        .map(|seed| DgpSpec { seed, ..dgp.clone() })
        .find(|g| {
            let d = generate(g).unwrap();
            let c = dynpanel_core::pipeline::EstimationConfig::new(g.model_spec(dynpanel_core::SpecKind::RandomEffects));
            let fit = dynpanel_core::pipeline::estimate(&d, &c).unwrap();
            fit.diagnostics.variance_components.unwrap().floored
        })
        .expect("no floored draw");
    let data = synthetic(tmp.path(), &floored);
    let o = dynpanel(
        tmp.path(),
        &["estimate", "--data", data.to_str().unwrap(), "--dep", "y", "--x", "x1", "--spec", "re"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("rho_u = 0; coefficients identical to pooled"), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere.csv");
    let o = dynpanel(tmp.path(), &["estimate", "--data", missing.to_str().unwrap(), "--dep", "y"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));

    let o = dynpanel(tmp.path(), &["estimate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));

    // one collapsed instrument for two regressors
    let data = synthetic(tmp.path(), &DgpSpec { seed: 13, ..DgpSpec::default() });
    let o = dynpanel(
        tmp.path(),
        &[
            "estimate",
            "--data",
            data.to_str().unwrap(),
            "--dep",
            "y",
            "--x",
            "x1",
            "--spec",
            "fd",
            "--instruments",
            "dyn(y,2,2):collapse",
        ],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("under-identified"), "{}", stderr(&o));
}

#[test]
fn describe_sampled_firms() {
    let tmp = tempfile::tempdir().unwrap();
    let firms: Vec<String> = fs::read_to_string(SAMPLE)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    let wide = format!("pp={PREMIUMS}");
    let o = dynpanel(
        tmp.path(),
        &["describe", "--wide", &wide, "--entities", &firms.join(","), "--vars", "pp", "--out", "json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["pp"]["n"].as_u64().unwrap() > 250);
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--reps", "10", "--seed", "7", "--entities", "40", "--periods", "6"];
    let oa = dynpanel(a.path(), &args);
    let ob = dynpanel(b.path(), &args);
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(stdout(&oa), stdout(&ob));
    for f in ["simulation.csv", "simulation.json", "seeds.txt", "simulate.manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.path().join("simulation.csv")).unwrap();
    // header plus two coefficients for each of three estimators
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dynpanel"))
        .env("DYNPANEL_OUT_DIR", tmp.path())
        .args(["ratings", "--value", "82.5"])
        .output()
        .unwrap();
    assert_eq!(stdout(&o).trim(), "A");
    assert!(tmp.path().join("ratings.manifest.json").exists());
}

#[test]
fn replicate_needs_brand_series() {
    let tmp = tempfile::tempdir().unwrap();
    let wide = format!("pp={PREMIUMS}");
    let o = dynpanel(tmp.path(), &["replicate", "--wide", &wide]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bv"), "{}", stderr(&o));
}

#[test]
fn replicate_csv_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let g = generate(&DgpSpec {
        n_entities: 150,
        n_periods: 8,
        rho: 0.6,
        exogenous_betas: vec![0.5, -0.3],
        seed: 14,
        ..DgpSpec::default()
    })
    .unwrap();
    let mut d = PanelDataset::new(g.entities().to_vec(), g.first_period(), g.last_period()).unwrap();
    for (from, to) in [("y", "pp"), ("x1", "bv"), ("x2", "bt")] {
        d.insert_series(to, g.series(from).unwrap().to_vec()).unwrap();
    }
    let data = write_panel(tmp.path(), "brand.csv", &d);
    let o = dynpanel(tmp.path(), &["replicate", "--data", data.to_str().unwrap(), "--out", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 6);
    assert!(text.lines().any(|l| l.starts_with("pp(-1),")));
}

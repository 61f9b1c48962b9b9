use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn geodiag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodiag"))
        .args(args)
        .env_remove("GEODIAG_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = geodiag(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn spheres(dir: &Path) -> PathBuf {
    let out = dir.join("spheres");
    ok(&[
        "gen",
        "spheres",
        "--dim",
        "3",
        "--radius",
        "0.5",
        "--ambient",
        "20",
        "--classes",
        "3",
        "--points",
        "20",
        "--seed",
        "4",
        "--out",
        s(&out),
    ]);
    out
}

const SMALL_GLUE: [&str; 6] = ["--reps", "4", "--points", "15", "--n-dirs", "30"];

fn markers(bundle: &Path, out: &Path, extra: &[&str], jobs: &str) -> String {
    let mut args = vec![
        "--jobs",
        jobs,
        "markers",
        "--bundle",
        s(bundle),
        "--out",
        s(out),
    ];
    args.extend_from_slice(&SMALL_GLUE);
    args.extend_from_slice(extra);
    ok(&args);
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn gen_spheres_writes_a_readable_bundle_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = spheres(dir.path());
    let b = geodiag::featureio::read_bundle(&out).unwrap();
    assert_eq!(b.num_samples(), 60);
    assert_eq!(b.feature_dim(), 20);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("spheres.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "gen spheres");
    assert_eq!(manifest["seeds"][0], 4);
}

#[test]
fn missing_required_argument_exits_with_two() {
    let out = geodiag(&[
        "gen",
        "spheres",
        "--dim",
        "3",
        "--radius",
        "1",
        "--ambient",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn analysis_errors_exit_with_one_and_a_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = geodiag(&[
        "markers",
        "--bundle",
        s(&dir.path().join("nope")),
        "--out",
        "x.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error ["));
}

#[test]
fn gen_planted_writes_both_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("planted");
    ok(&[
        "gen",
        "planted",
        "--compression",
        "0.5",
        "--seed",
        "2",
        "--out",
        s(&out),
    ]);
    let id = geodiag::featureio::read_bundle(out.join("id")).unwrap();
    let ood = geodiag::featureio::read_bundle(out.join("ood")).unwrap();
    assert_eq!(id.feature_dim(), ood.feature_dim());
    assert!(dir.path().join("planted.manifest.json").exists());
}

#[test]
fn markers_full_and_selected() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = spheres(dir.path());
    let full: serde_json::Value =
        serde_json::from_str(&markers(&bundle, &dir.path().join("m.json"), &[], "1")).unwrap();
    for name in [
        "d_eff",
        "psi_eff",
        "n_crit",
        "nc1",
        "participation_ratio",
        "mean_angle",
    ] {
        assert!(full["markers"].get(name).is_some(), "missing {name}");
    }
    let picked: serde_json::Value = serde_json::from_str(&markers(
        &bundle,
        &dir.path().join("p.json"),
        &["--markers", "d_eff,psi_eff"],
        "1",
    ))
    .unwrap();
    let keys: Vec<&String> = picked["markers"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["d_eff", "psi_eff"]);
    assert_eq!(picked["markers"]["d_eff"], full["markers"]["d_eff"]);
}

#[test]
fn logit_marker_without_logits_warns_and_is_absent() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = spheres(dir.path());
    let out = dir.path().join("e.json");
    let mut args = vec![
        "markers",
        "--bundle",
        s(&bundle),
        "--out",
        s(&out),
        "--markers",
        "energy,nc1",
    ];
    args.extend_from_slice(&SMALL_GLUE);
    let run = ok(&args);
    assert!(String::from_utf8_lossy(&run.stderr).contains("warning: marker energy absent"));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(v["markers"].get("energy").is_none());
    assert!(v["markers"].get("nc1").is_some());
}

fn marker_file(path: &Path, d: (f64, f64), p: (f64, f64)) {
    let v = serde_json::json!({"markers": {
        "d_eff": {"value": d.0, "stderr": d.1},
        "psi_eff": {"value": p.0, "stderr": p.1},
    }});
    std::fs::write(path, v.to_string()).unwrap();
}

#[test]
fn predict_prints_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a.json"),
        dir.path().join("b.json"),
        dir.path().join("c.json"),
    );
    marker_file(&a, (10.0, 0.1), (0.5, 0.01));
    marker_file(&b, (8.0, 0.1), (0.4, 0.01));
    marker_file(&c, (8.0, 0.1), (0.6, 0.01));
    let first_line = |out: Output| {
        String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(
        first_line(ok(&["predict", "--a", s(&a), "--b", s(&b)])),
        "A"
    );
    assert_eq!(
        first_line(ok(&["predict", "--a", s(&b), "--b", s(&a)])),
        "B"
    );
    assert_eq!(
        first_line(ok(&["predict", "--a", s(&a), "--b", s(&c)])),
        "no verdict"
    );
    let lower = ok(&[
        "predict",
        "--a",
        s(&a),
        "--b",
        s(&b),
        "--direction",
        "d_eff=lower,psi_eff=lower",
    ]);
    assert_eq!(first_line(lower), "B");
    let bad = geodiag(&[
        "predict",
        "--a",
        s(&a),
        "--b",
        s(&b),
        "--markers",
        "mystery",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oracle_writes_the_probability_curve() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = spheres(dir.path());
    let csv = dir.path().join("curve.csv");
    let summary = dir.path().join("summary.json");
    let run = ok(&[
        "oracle",
        "--bundle",
        s(&bundle),
        "--pair",
        "0,1",
        "--points",
        "10",
        "--trials",
        "40",
        "--nmax",
        "20",
        "--n-dirs",
        "30",
        "--out",
        s(&csv),
        "--summary",
        s(&summary),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n_prime,p_hat,n_trials"));
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.first().unwrap().0, 1);
    assert!(rows.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with("n_crit "));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert!(v["n_crit_mean_field"].as_f64().unwrap() > 0.0);
}

#[test]
fn correlate_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (i, (d, acc)) in [(1.0, 0.2), (2.0, 0.4), (3.0, 0.5), (4.0, 0.9)]
        .iter()
        .enumerate()
    {
        let p = dir.path().join(format!("run{i}.json"));
        let v = serde_json::json!({
            "run_id": format!("r{i}"),
            "markers": {"d_eff": {"value": d, "stderr": 0.1}},
            "ood_accuracies": {"shift": acc},
        });
        std::fs::write(&p, v.to_string()).unwrap();
        paths.push(p);
    }
    let out = dir.path().join("table.csv");
    let heat = dir.path().join("heat.json");
    let mut args = vec![
        "correlate",
        "--out",
        s(&out),
        "--heatmap",
        s(&heat),
        "--runs",
    ];
    args.extend(paths.iter().map(|p| s(p)));
    ok(&args);
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("marker,setting,r,p,stars,n\n"));
    assert!(csv.lines().nth(1).unwrap().starts_with("d_eff,shift,"));
    assert!(heat.exists());
}

#[test]
fn probe_on_a_bundle_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = spheres(dir.path());
    let out = dir.path().join("probe.json");
    ok(&[
        "probe",
        "--bundle",
        s(&bundle),
        "--repeats",
        "2",
        "--out",
        s(&out),
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let acc = v["test_acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(v["per_seed"].as_array().unwrap().len(), 2);
}

#[test]
fn reruns_are_byte_identical_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = spheres(dir.path());
    let one = markers(&bundle, &dir.path().join("1.json"), &[], "1");
    let again = markers(&bundle, &dir.path().join("1b.json"), &[], "1");
    let eight = markers(&bundle, &dir.path().join("8.json"), &[], "8");
    assert_eq!(one, again);
    assert_eq!(one, eight);

    let curve = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        ok(&[
            "--jobs",
            jobs,
            "oracle",
            "--bundle",
            s(&bundle),
            "--pair",
            "0,2",
            "--points",
            "10",
            "--trials",
            "30",
            "--nmax",
            "12",
            "--n-dirs",
            "0",
            "--out",
            s(&out),
        ]);
        std::fs::read_to_string(out).unwrap()
    };
    assert_eq!(curve("c1.csv", "1"), curve("c8.csv", "8"));

    let other = dir.path().join("spheres2");
    ok(&[
        "gen",
        "spheres",
        "--dim",
        "3",
        "--radius",
        "0.5",
        "--ambient",
        "20",
        "--classes",
        "3",
        "--points",
        "20",
        "--seed",
        "4",
        "--out",
        s(&other),
    ]);
    for f in ["features.bin", "labels.bin", "meta.json"] {
        assert_eq!(
            std::fs::read(bundle.join(f)).unwrap(),
            std::fs::read(other.join(f)).unwrap()
        );
    }
}

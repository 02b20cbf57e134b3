use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = r#"
supersample = 2
[grid]
margin_mm = 6
[[tubes]]
id = "straight"
family = "straight"
lumen_diameter_start = 3.9
length = 20
[[tubes]]
id = "tapered"
family = "tapered"
diameter_gradient = 0.083
lumen_diameter_start = 2.5
length = 20
placement = { origin = [15, 0, 0] }
"#;

fn airtaper(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airtaper"))
        .args(args)
        .current_dir(dir)
        .env_remove("AIRTAPER_OUT")
        .output()
        .expect("binary runs")
}

fn phantom(dir: &Path) {
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    let out = airtaper(&["phantom", "--spec", "spec.toml", "-o", "ph"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn analyze(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "analyze",
        "--ct",
        "ph/ct.nrrd",
        "--seg",
        "ph/seg.nrrd",
        "--distal-points",
        "ph/distal_points.csv",
        "--start-points",
        "ph/start_points.csv",
        // the test grid is too small for the default plane
        "--plane-extent",
        "12",
        "-o",
        out,
    ];
    args.extend_from_slice(extra);
    airtaper(&args, dir)
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn phantom_analyze_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    phantom(dir);
    for f in ["ct.nrrd", "seg.nrrd", "ground_truth.json", "start_points.csv", "distal_points.csv"] {
        assert!(dir.join("ph").join(f).is_file(), "{f}");
    }

    let a = analyze(dir, "a", &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = analyze(dir, "b", &["--sequential"]);
    assert!(b.status.success());
    // same inputs and settings give identical files, whatever the threading
    assert_eq!(outputs(&dir.join("a")), outputs(&dir.join("b")));

    let names: Vec<String> = outputs(&dir.join("a")).into_iter().map(|(n, _)| n).collect();
    for id in ["straight", "tapered"] {
        for ext in ["sections.csv", "centreline.csv", "taper.json", "profile.svg"] {
            assert!(names.contains(&format!("{id}.{ext}")), "{id}.{ext}");
        }
    }
    let t: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("a/straight.taper.json")).unwrap()).unwrap();
    assert!(t["slope"].as_f64().unwrap().abs() < 0.005);
    assert_eq!(t["config_hash"].as_str().unwrap().len(), 64);
    let t: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("a/tapered.taper.json")).unwrap()).unwrap();
    assert!(t["slope"].as_f64().unwrap() > 0.02);

    let c = analyze(dir, "c", &["--exclude-bifurcations"]);
    assert!(c.status.success());
    let cmp = airtaper(&["compare", "a", "c", "--paired", "-o", "cmp"], dir);
    assert!(cmp.status.success(), "{}", String::from_utf8_lossy(&cmp.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("cmp/comparison.json")).unwrap()).unwrap();
    assert_eq!(rep["slope_rank_sum"]["p_two_sided"].as_f64().unwrap(), 1.0);
    assert!(rep["paired"]["slope_agreement"]["mean_diff"].as_f64().unwrap().abs() < 1e-12);
    for f in ["slopes_boxplot.svg", "bland_altman.svg", "see_boxplot.svg"] {
        assert!(dir.join("cmp").join(f).is_file(), "{f}");
    }

    // different measurement settings cannot be compared
    let d = analyze(dir, "d", &["--diameter-offset-mm", "-0.1"]);
    assert!(d.status.success());
    let mixed = airtaper(&["compare", "a", "d", "-o", "cmp2"], dir);
    assert_eq!(mixed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mixed.stderr).contains("config hash"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = airtaper(
        &["analyze", "--ct", "ct.nrrd", "--seg", "seg.nrrd", "--distal-points", "missing.csv"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));

    fs::write(dir.join("empty.toml"), "tubes = []\n").unwrap();
    let out = airtaper(&["phantom", "--spec", "empty.toml"], dir);
    assert_eq!(out.status.code(), Some(2));

    let out = airtaper(&["phantom", "--preset", "nope"], dir);
    assert_eq!(out.status.code(), Some(2));

    fs::create_dir(dir.join("none")).unwrap();
    let out = airtaper(&["compare", "none", "none"], dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn all_airways_failing_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    phantom(dir);
    // keep only the straight tube's start; the tapered tube is then unreachable
    let starts = fs::read_to_string(dir.join("ph/start_points.csv")).unwrap();
    let kept: Vec<&str> = starts.lines().filter(|l| !l.starts_with("tapered")).collect();
    fs::write(dir.join("ph/start_points.csv"), kept.join("\n") + "\n").unwrap();
    let distal = fs::read_to_string(dir.join("ph/distal_points.csv")).unwrap();
    let kept: Vec<&str> = distal.lines().filter(|l| !l.starts_with("straight")).collect();
    fs::write(dir.join("ph/distal_points.csv"), kept.join("\n") + "\n").unwrap();
    let out = analyze(dir, "r", &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_ok"], 0);
    assert_eq!(summary["airways"][0]["airway_id"], "tapered");
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_airtaper"))
        .args(["phantom", "--spec", "spec.toml"])
        .current_dir(dir)
        .env("AIRTAPER_OUT", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("from_env/ct.nrrd").is_file());
}

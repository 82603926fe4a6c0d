use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

use selfsim::render::{render, RenderSpec};
use selfsim_core::certify::{certify, Budgets, Certificate};
use selfsim_core::distance::sample_pinned_distances;
use selfsim_core::ifs::{normalize_into_ball, DEFAULT_BUDGET};
use selfsim_core::projection::scan_directions;
use selfsim_core::separation::check_very_strong_separation;
use selfsim_core::SpecFile;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn scratch(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn selfsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfsim"))
        .args(args)
        .env_remove("SELFSIM_BUDGET")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("JSON on stderr")
}

fn spec(name: &str) -> SpecFile {
    SpecFile::parse(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn dim_of_four_corner_is_one() {
    let out = selfsim(&["dim", p(&fixture("four_corner.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.0");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(selfsim(&["frobnicate"]).status.code(), Some(2));
    let out = selfsim(&["dim", p(&fixture("four_corner.json")), "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(selfsim(&["--help"]).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_selfsim"))
        .args(["dim", p(&fixture("rot3.json"))])
        .env("SELFSIM_BUDGET", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one_with_json() {
    let out = selfsim(&["dim", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");

    let out = Command::new(env!("CARGO_BIN_EXE_selfsim"))
        .args([
            "balls",
            p(&fixture("four_corner.json")),
            "--generation",
            "2",
        ])
        .env("SELFSIM_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "ifs");
}

#[test]
fn balls_and_pinned_match_the_library() {
    let out = selfsim(&[
        "balls",
        p(&fixture("four_corner.json")),
        "--generation",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out).as_array().unwrap().len(), 16);

    let out = selfsim(&[
        "pinned",
        p(&fixture("four_corner.json")),
        "--x",
        "100",
        "0",
        "--points",
        "500",
        "--seed",
        "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let got: Vec<f64> = serde_json::from_value(stdout_json(&out)).unwrap();
    let sys = normalize_into_ball(spec("four_corner.json").similitudes().unwrap())
        .unwrap()
        .system;
    let want = sample_pinned_distances(&sys, selfsim_core::Point::new(100.0, 0.0), 500, 7);
    assert_eq!(got, want);
    assert!(got.iter().all(|d| (99.5..=100.5).contains(d)));
}

#[test]
fn boxdim_of_four_corner() {
    let out = selfsim(&[
        "boxdim",
        p(&fixture("four_corner.json")),
        "--points",
        "50000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out)["value"].as_f64().unwrap();
    assert!((0.85..=1.1).contains(&v), "{v}");
}

#[test]
fn separate_derotate_and_scan_chain() {
    let out = selfsim(&[
        "separate",
        p(&fixture("four_corner_overlap.json")),
        "--target",
        "0.5",
        "--max-gen",
        "6",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let sub: SpecFile = serde_json::from_value(v["spec"].clone()).unwrap();
    assert!(check_very_strong_separation(&sub.system().unwrap()));

    let derotated = scratch("rot3_derotated.json");
    let out = selfsim(&["derotate", p(&fixture("rot3.json")), "--eps", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
    std::fs::write(&derotated, &out.stdout).unwrap();
    let d: SpecFile = serde_json::from_value(stdout_json(&out)["spec"].clone()).unwrap();
    let dsys = d.system().unwrap();
    assert!(dsys.maps().iter().all(|m| m.isometry().is_identity()));

    let out = selfsim(&[
        "project-scan",
        p(&derotated),
        "--eps",
        "0.3",
        "--grid",
        "12",
        "--max-gen",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let want = scan_directions(&dsys, 0.3, 12, 1, DEFAULT_BUDGET);
    assert_eq!(lines.len(), want.len());
    for (line, fam) in lines.iter().zip(&want) {
        assert_eq!(line["words"], serde_json::to_value(&fam.words).unwrap());
    }
}

#[test]
fn certify_then_check_four_corner() {
    let cert_path = scratch("four_corner_cert.json");
    let out = selfsim(&[
        "certify",
        p(&fixture("four_corner.json")),
        "--eps",
        "0.1",
        "--out",
        p(&cert_path),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout_json(&out)["bound"].as_f64().unwrap() >= 0.9);
    let out = selfsim(&["check", p(&cert_path)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert_eq!(stdout_json(&out)["ok"], true);

    let text = std::fs::read_to_string(&cert_path).unwrap();
    let cert = Certificate::from_json(&text).unwrap();
    let direct = certify(&spec("four_corner.json"), 0.1, &Budgets::default(), 0).unwrap();
    assert_eq!(cert, direct);
}

#[test]
fn certify_then_check_collinear_and_tampering() {
    let cert_path = scratch("collinear_cert.json");
    let out = selfsim(&[
        "certify",
        p(&fixture("collinear3.json")),
        "--eps",
        "0.1",
        "-o",
        p(&cert_path),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(selfsim(&["check", p(&cert_path)]).status.code(), Some(0));

    let mut cert = Certificate::from_json(&std::fs::read_to_string(&cert_path).unwrap()).unwrap();
    cert.rational.as_mut().unwrap().pin.n += 1;
    let bad = scratch("collinear_cert_bad.json");
    std::fs::write(&bad, cert.to_json()).unwrap();
    let out = selfsim(&["check", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["checks"]["pin"]["ok"], false);
}

#[test]
fn certify_rot3_agrees_with_the_library() {
    let cert_path = scratch("rot3_cert.json");
    let out = selfsim(&[
        "certify",
        p(&fixture("rot3.json")),
        "--eps",
        "0.1",
        "--out",
        p(&cert_path),
    ]);
    match certify(&spec("rot3.json"), 0.1, &Budgets::default(), 0) {
        Ok(_) => {
            assert_eq!(out.status.code(), Some(0));
            assert_eq!(selfsim(&["check", p(&cert_path)]).status.code(), Some(0));
        }
        Err(e) => {
            assert_eq!(out.status.code(), Some(1));
            let err = stderr_json(&out);
            assert_eq!(
                err["error"]["stage"],
                serde_json::to_value(e.stage).unwrap()
            );
            assert_eq!(err["error"]["detail"], e.detail);
        }
    }
}

#[test]
fn irrational_spec_takes_the_empirical_branch() {
    let out = selfsim(&["certify", p(&fixture("irrational.json")), "--eps", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let cert: Certificate = serde_json::from_slice(&out.stdout).unwrap();
    assert!(cert.bound.is_none());
    assert!(cert.irrational.is_some());
    let path = scratch("irrational_cert.json");
    std::fs::write(&path, cert.to_json()).unwrap();
    assert_eq!(selfsim(&["check", p(&path)]).status.code(), Some(0));
}

#[test]
fn render_counts_disks_and_is_deterministic() {
    let a = scratch("fc_a.png");
    let b = scratch("fc_b.png");
    for path in [&a, &b] {
        let out = selfsim(&[
            "render",
            p(&fixture("four_corner.json")),
            "--gens",
            "1,2",
            "-o",
            p(path),
            "--width",
            "256",
            "--height",
            "256",
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(stdout_json(&out)["disks"], 20);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let sys = normalize_into_ball(spec("four_corner.json").similitudes().unwrap())
        .unwrap()
        .system;
    let rs = RenderSpec {
        width: 256,
        height: 256,
        generations: vec![1, 2],
        cones: Vec::new(),
    };
    let img = render(&sys, &rs, DEFAULT_BUDGET).unwrap();
    let decoded = image::load_from_memory(&bytes).unwrap().to_rgb8();
    assert_eq!(decoded, img.image);
    let digest: String = Sha256::digest(img.image.as_raw())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    assert_eq!(digest, GOLDEN_FOUR_CORNER_1_2);
}

#[test]
fn render_with_only_the_outline() {
    let path = scratch("outline.png");
    let out = selfsim(&[
        "render",
        p(&fixture("rot3.json")),
        "--gens",
        "",
        "-o",
        p(&path),
        "--cone",
        "0,0.6,0,1,0.2",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout_json(&out)["disks"], 0);
    let out = selfsim(&[
        "render",
        p(&fixture("rot3.json")),
        "-o",
        p(&path),
        "--cone",
        "1,2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

const GOLDEN_FOUR_CORNER_1_2: &str =
    "1cb06d082d059b0d31e4eb779c3be27ca3558079a99cd07b1df040b6f2acbec3";

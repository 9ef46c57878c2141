use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use levelset_cli::config::{ForcingBlock, SolverBlock, Stencil};
use levelset_cli::output::{format_g17, pgm_string, Table};
use levelset_cli::{emit_config, parse_config, run_case_with_threads, CaseKind};
use levelset_core::field::ScalarField;
use levelset_core::geometry::{build_grid, DomainSpec};

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const SMALL: &str = r#"{
  "case": "simulate",
  "domain": {"disk": {"radius": 1.0}},
  "forcing": {"constant": 1.0},
  "initial": {"trig": {"amplitude": 0.5, "wave": [1.0, 2.0]}},
  "solver": {"h": 0.1, "t_final": 0.1}
}"#;

#[test]
fn defaults_are_filled_at_parse_time() {
    let cfg = parse_config(SMALL).unwrap();
    assert_eq!(cfg.case, CaseKind::Simulate);
    let SolverBlock {
        h,
        eps,
        cfl_safety,
        snapshot_every,
        stencil,
        ..
    } = cfg.solver.clone().unwrap();
    assert_eq!(eps, Some(h));
    assert_eq!(cfl_safety, Some(0.25));
    assert_eq!(snapshot_every, Some(0.1 / 10.0));
    assert_eq!(stencil, Some(Stencil::Upwind));
    assert_eq!(cfg.forcing, Some(ForcingBlock::Constant(1.0)));
}

#[test]
fn emitted_config_round_trips() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_config(&fs::read_to_string(&path).unwrap()).unwrap();
        let again = parse_config(&emit_config(&cfg)).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
    }
}

#[test]
fn non_positive_delta_is_rejected_with_its_path() {
    for delta in ["0.0", "-1.0"] {
        let text = format!(
            r#"{{"case": "check-condition", "domain": {{"disk": {{"radius": 1.0}}}},
               "forcing": {{"constant": 2.0}}, "condition": {{"delta": {delta}}}}}"#
        );
        let errs = parse_config(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "condition.delta"), "{errs:?}");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = SMALL.replace("\"t_final\": 0.1", "\"t_final\": 0.1, \"tfinal\": 2.0");
    let errs = parse_config(&text).unwrap_err();
    assert_eq!(errs.len(), 1);
    assert!(errs[0].message.contains("tfinal"), "{}", errs[0]);
    assert_eq!(errs[0].path, "solver.tfinal");
}

#[test]
fn type_errors_carry_path_and_position() {
    let text = SMALL.replace("\"h\": 0.1", "\"h\": \"fine\"");
    let errs = parse_config(&text).unwrap_err();
    assert_eq!(errs[0].path, "solver.h");
    assert_eq!(errs[0].line, Some(6));
    assert!(errs[0].to_string().starts_with("solver.h (line 6"));
}

#[test]
fn every_validation_error_is_reported() {
    let text = SMALL.replace("\"h\": 0.1", "\"h\": -0.1").replace("\"t_final\": 0.1", "\"t_final\": 0.0");
    let errs = parse_config(&text).unwrap_err();
    let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
    assert!(paths.contains(&"solver.h") && paths.contains(&"solver.t_final"), "{paths:?}");
}

#[test]
fn csv_floats_reparse_bit_exactly() {
    let values = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 1e-320, -0.0];
    let mut table = Table::new(&["v", "w"]);
    for v in values {
        table.push(vec![v, v.abs().sqrt()]);
    }
    let csv = table.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("v,w"));
    for (line, v) in lines.zip(values) {
        let first: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert_eq!(first.to_bits(), v.to_bits(), "{line}");
    }
    assert_eq!(format_g17(0.5), "0.5");
}

fn pixels(pgm: &str) -> Vec<u8> {
    pgm.lines().skip(4).flat_map(|l| l.split(' ').map(|p| p.parse::<u8>().unwrap())).collect()
}

#[test]
fn pgm_maps_constant_to_mid_grey_and_extremes_to_black_white() {
    let geom = Arc::new(
        build_grid(
            &DomainSpec::Rectangle {
                half_extents: vec![1.0, 1.0],
            },
            0.25,
        )
        .unwrap(),
    );
    // the image covers the ghost ring too, which stays black
    let pixel_of = |p: &[u8], index: usize| {
        let m = geom.multi_index(index);
        p[(9 - m[1]) * 10 + m[0]]
    };
    let constant = pgm_string(&ScalarField::constant(geom.clone(), 3.0)).unwrap();
    assert!(constant.starts_with("P2\n# min=3 max=3\n10 10\n255\n"), "{constant}");
    let p = pixels(&constant);
    assert_eq!(p.len(), 100);
    for i in 0..geom.len() {
        assert_eq!(pixel_of(&p, i), if geom.is_inside(i) { 128 } else { 0 });
    }

    let mut step = ScalarField::constant(geom.clone(), 0.0);
    for &i in geom.inside() {
        if geom.coords_vec(i)[1] > 0.0 {
            step.values_mut()[i] = 1.0;
        }
    }
    let p = pixels(&pgm_string(&step).unwrap());
    for &i in geom.inside() {
        let expected = if geom.coords_vec(i)[1] > 0.0 { 255 } else { 0 };
        assert_eq!(pixel_of(&p, i), expected);
    }
    // top row first: the first interior row is the upper one
    assert_eq!(p[11], 255);
    assert_eq!(p[81], 0);
}

#[test]
fn check_condition_example_margin() {
    let cfg = parse_config(&fs::read_to_string(configs_dir().join("condition-disk.json")).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_case_with_threads(&cfg, dir.path(), Some(1)).unwrap();
    assert!(report.passed());
    assert!((report.value("margin").unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let cfg = parse_config(SMALL).unwrap();
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let a = run_case_with_threads(&cfg, one.path(), Some(1)).unwrap();
    let b = run_case_with_threads(&cfg, four.path(), Some(4)).unwrap();
    assert!(!a.files.is_empty());
    assert_eq!(a.files.len(), b.files.len());
    for (fa, fb) in a.files.iter().zip(&b.files) {
        assert_eq!(fa.file_name(), fb.file_name());
        assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{}", fa.display());
    }
}

fn levelset() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levelset"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = levelset()
        .args(["check-condition", "--config"])
        .arg(configs_dir().join("condition-disk.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));
    assert!(dir.path().join("condition-disk_condition.csv").exists());

    let wrong_case = levelset()
        .args(["bounds", "--config"])
        .arg(configs_dir().join("condition-disk.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(wrong_case.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"case": "bounds", "domain": {"disk": {"radius": -1.0}}}"#).unwrap();
    let invalid = levelset().args(["bounds", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("domain"));
}

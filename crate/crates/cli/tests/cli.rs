use std::path::Path;
use std::process::{Command, Output};

use povm_forge::io;
use povm_forge::linalg::basis_ket;
use povm_forge::povm::{sic_povm_d4, Element, Povm};
use povm_forge::simulator::{PhaseError, Shifter};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_povm-forge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn basis(d: usize) -> Povm {
    Povm {
        dim: d,
        elements: (0..d)
            .map(|k| Element {
                weight: 1.0,
                ket: basis_ket(d, k),
            })
            .collect(),
    }
}

fn write_povm(dir: &Path, name: &str, p: &Povm) -> String {
    let path = dir.join(name);
    std::fs::write(&path, io::povm_to_json(p)).unwrap();
    path.to_str().unwrap().to_owned()
}

fn compile_to(dir: &Path, povm: &str, name: &str) -> String {
    let out = dir.join(name);
    let o = run(&["compile", povm, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_owned()
}

#[test]
fn compile_sic_and_basis() {
    let dir = TempDir::new().unwrap();
    let sic = write_povm(dir.path(), "sic.json", &sic_povm_d4());
    let prog = compile_to(dir.path(), &sic, "sic_prog.json");
    let p = io::program_from_json(&std::fs::read_to_string(prog).unwrap()).unwrap();
    assert_eq!(p.modules.len(), 15);

    let b = write_povm(dir.path(), "basis.json", &basis(4));
    let o = run(&["--json", "compile", &b, "-o", dir.path().join("b.json").to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["modules"], 3);
    assert_eq!(v["structure_ok"], true);
}

#[test]
fn malformed_input_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dim\": 4, \"elements\": [").unwrap();
    let o = run(&["compile", bad.to_str().unwrap(), "-o", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let missing = run(&["compile", "/nonexistent/povm.json", "-o", "/dev/null"]);
    assert_eq!(missing.status.code(), Some(2));

    let not_povm = Povm {
        dim: 2,
        elements: vec![Element {
            weight: 0.5,
            ket: basis_ket(2, 0),
        }],
    };
    let p = write_povm(dir.path(), "incomplete.json", &not_povm);
    assert_eq!(run(&["compile", &p, "-o", "/dev/null"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_locates_a_perturbation() {
    let dir = TempDir::new().unwrap();
    let sic = write_povm(dir.path(), "sic.json", &sic_povm_d4());
    let prog = compile_to(dir.path(), &sic, "prog.json");
    for probes in ["random", "mub"] {
        let o = run(&["verify", &prog, &sic, "--probes", probes, "--trials", "10"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        assert!(stdout(&o).contains("PASS"));
    }

    let mut p = io::program_from_json(&std::fs::read_to_string(&prog).unwrap()).unwrap();
    p.modules[4][1].beta += 0.1;
    let bad = dir.path().join("bad_prog.json");
    std::fs::write(&bad, io::program_to_json(&p)).unwrap();
    let o = run(&["--json", "verify", bad.to_str().unwrap(), &sic]);
    assert_eq!(o.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], false);
    assert!(v["max_deviation"].as_f64().unwrap() > 1e-3);
    assert!(v["outcome"].as_u64().unwrap() >= 5);
}

#[test]
fn zero_trials_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let sic = write_povm(dir.path(), "sic.json", &sic_povm_d4());
    let prog = compile_to(dir.path(), &sic, "prog.json");
    let o = run(&["verify", &prog, &sic, "--trials", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_then_reconstruct() {
    let dir = TempDir::new().unwrap();
    let sic = write_povm(dir.path(), "sic.json", &sic_povm_d4());
    let prog = compile_to(dir.path(), &sic, "prog.json");
    let counts = dir.path().join("counts.json");
    let o = run(&["--seed", "3", "sample", &prog, "--shots", "100000", "-o", counts.to_str().unwrap()]);
    assert!(o.status.success());
    let again = dir.path().join("again.json");
    run(&["--seed", "3", "sample", &prog, "--shots", "100000", "-o", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&counts).unwrap(), std::fs::read(&again).unwrap());

    let recon = dir.path().join("recon.json");
    let o = run(&[
        "--json",
        "tomo",
        counts.to_str().unwrap(),
        "--reference",
        &sic,
        "-o",
        recon.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["fidelity"].as_f64().unwrap() >= 0.995);
    let p = io::operator_povm_from_json(&std::fs::read_to_string(recon).unwrap()).unwrap();
    assert_eq!(p.matrices.len(), 16);
}

#[test]
fn calibrate_with_dithered_counts() {
    let dir = TempDir::new().unwrap();
    let b = write_povm(dir.path(), "basis.json", &basis(4));
    let prog = compile_to(dir.path(), &b, "prog.json");
    let p = io::program_from_json(&std::fs::read_to_string(&prog).unwrap()).unwrap();
    let mut truth = PhaseError::default();
    truth.set(1, 2, Shifter::Alpha, 0.05);
    truth.set(2, 3, Shifter::Beta, -0.04);
    truth.set(3, 1, Shifter::Beta, 0.03);
    let err = dir.path().join("err.json");
    std::fs::write(&err, io::phase_error_to_json(&truth)).unwrap();

    let dprog = dir.path().join("dprog.json");
    std::fs::write(&dprog, io::program_to_json(&povm_forge::simulator::dithered(&p, 0.5))).unwrap();
    let plain = dir.path().join("plain.json");
    let dith = dir.path().join("dith.json");
    for (program, path) in [(prog.as_str(), &plain), (dprog.to_str().unwrap(), &dith)] {
        let o = run(&["--json", "simulate", program, "--phase-error", err.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::write(path, o.stdout).unwrap();
    }
    let est = dir.path().join("est.json");
    let o = run(&[
        "calibrate",
        &prog,
        plain.to_str().unwrap(),
        "--dithered-counts",
        dith.to_str().unwrap(),
        "--dither",
        "0.5",
        "-o",
        est.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let estimate = io::phase_error_from_json(&std::fs::read_to_string(est).unwrap()).unwrap();
    let corrected = povm_forge::simulator::corrected_program(&p, &estimate);
    let device = povm_forge::simulator::apply_phase_error(&corrected, &truth, 1.0);
    let probes = povm_forge::povm::mub_probe_states_d4();
    assert!(povm_forge::simulator::born_distance(&device, &p, &probes).unwrap() < 1e-6);
}

#[test]
fn bench_tables() {
    let o = run(&["bench", "usd"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for want in ["0.7259", "0.5974", "0.5575"] {
        assert!(text.contains(want), "{text}");
    }

    let o = run(&["bench", "noutcome", "--fast"]);
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("N = ")).count(), 6);

    let o = run(&["bench", "eat"]);
    assert!(stdout(&o).contains("2.9786"));
}

#[test]
fn bench_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("eat.csv");
    let o = run(&["--json", "bench", "eat", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r.get("inputs").is_some() && r.get("value").is_some() && r.get("details").is_some());
    }
    let rate = rows[2]["value"].as_f64().unwrap();
    assert!((rate - 2.9786).abs() < 2e-3);
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("label,value,reference,abs_diff\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn thread_count_from_environment() {
    let o = bin()
        .args(["bench", "noutcome", "--fast"])
        .env("POVM_FORGE_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = bin()
        .args(["bench", "gram"])
        .env("POVM_FORGE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_suite_is_rejected() {
    assert_eq!(run(&["bench", "nope"]).status.code(), Some(2));
}

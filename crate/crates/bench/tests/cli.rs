use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_manpg-bench"))
}

#[test]
fn run_from_config_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "problem = \"cm\"\nn = 24\nr = 2\nmu = 0.1\ninstances = 9\nsolvers = [\"manpg\", \"soc\"]\n").unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--instances", "2", "--no-timing", "--out"])
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let recs = manpg_bench::parse_csv(&out.join("raw.csv")).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(out.join("aggregate.csv").exists());
}

#[test]
fn configuration_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "instances = 0\n").unwrap();
    assert!(!bin().args(["run", "--config"]).arg(&bad).output().unwrap().status.success());
    assert!(!bin().args(["run", "--config", "/nonexistent/x.toml"]).output().unwrap().status.success());
    assert!(!bin().args(["run", "--problem", "tsp"]).output().unwrap().status.success());
}

#[test]
fn matrix_generators_write_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let h = dir.path().join("h.csv");
    assert!(bin().args(["gen-spca", "--m", "5", "--n", "7", "--seed", "3", "--out"]).arg(&a).output().unwrap().status.success());
    assert!(bin().args(["fe-hamiltonian", "--n", "6", "--out"]).arg(&h).output().unwrap().status.success());
    assert_eq!(manpg::matio::load_matrix(&a).unwrap(), manpg::problems::gen_spca(5, 7, 3).unwrap());
    assert_eq!(manpg::matio::load_matrix(&h).unwrap(), manpg::problems::build_fe_hamiltonian(6).unwrap());

    // A loaded Hamiltonian drives a sweep.
    let out = dir.path().join("sweep");
    let status = bin()
        .args(["run", "--problem", "cm", "--n", "6", "--r", "2", "--instances", "1", "--solvers", "manpg", "--no-timing", "--out"])
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let cfg = dir.path().join("m.toml");
    std::fs::write(&cfg, format!("problem = \"cm\"\nn = 6\nr = 2\ninstances = 1\nsolvers = \"manpg\"\ntiming = false\nmatrix = {:?}\n", h.display().to_string())).unwrap();
    let out2 = dir.path().join("sweep2");
    assert!(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out2).output().unwrap().status.success());
    assert_eq!(std::fs::read(out.join("raw.csv")).unwrap(), std::fs::read(out2.join("raw.csv")).unwrap());
}

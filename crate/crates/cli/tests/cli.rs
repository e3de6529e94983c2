use std::path::Path;
use std::process::{Command, Output};

fn vtwist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtwist")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn resonance_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = vtwist(&["resonance-table", "--out", dir.path().to_str().unwrap()]);
    ok(&out);
    let text = read(dir.path(), "resonance_table.csv");
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let find = |label: &str| rows.iter().find(|r| r[0] == label).unwrap_or_else(|| panic!("{label}"));
    for (label, mu) in [("4", "0.00827"), ("11/3", "0.00964"), ("7/2", "0.01045"), ("c", "0.01091"), ("10/3", "0.01135")] {
        assert_eq!(find(label)[3], mu);
    }
    // the 3:1 root is 0.0135160, which rounds up
    assert_eq!(find("3")[3], "0.01352");
    let mu3: f64 = find("3")[2].parse().unwrap();
    assert!((mu3 - 0.013516016).abs() < 1e-9);
    assert!(dir.path().join("resonance_table.meta.json").exists());
}

#[test]
fn data_files_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&vtwist(&["chart", "--mu", "0.01", "--grid", "0.05,0.05,11,11", "--out", d.path().to_str().unwrap()]));
        ok(&vtwist(&["nf", "--mu", "0.01", "--format", "json", "--out", d.path().to_str().unwrap()]));
    }
    for name in ["chart_mu0.010000_grid.csv", "chart_mu0.010000_lines.csv", "nf_mu0.010000.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    assert!(read(a.path(), "chart_mu0.010000_grid.csv").starts_with("Is,Il,H,W,C\n"));
}

#[test]
fn profile_peaks_below_two_sevenths() {
    let dir = tempfile::tempdir().unwrap();
    let out = vtwist(&[
        "profile", "--mu", "0.00914", "--E", "0.02", "--max-crossings", "1000", "--out", dir.path().to_str().unwrap(),
    ]);
    ok(&out);
    let name = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .find(|n| n.starts_with("profile") && n.ends_with(".csv"))
        .unwrap();
    let text = read(dir.path(), &name);
    assert!(text.starts_with("index,I,W,error,flag\n"));
    let w_max = text
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",ok"))
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!(w_max > 0.28 && w_max < 2.0 / 7.0, "{w_max}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // computational failure: too close to the 3:1 resonance
    let out = vtwist(&["nf", "--mu", "0.013516", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ResonanceTooClose"));
    // validation failures
    assert_eq!(vtwist(&["nf", "--mu", "0.01", "--bogus"]).status.code(), Some(1));
    assert_eq!(vtwist(&["nf", "--mu", "0.05", "--out", d]).status.code(), Some(1));
    assert_eq!(vtwist(&["nf", "--mu", "0.01", "--degree", "7", "--out", d]).status.code(), Some(1));
    assert_eq!(vtwist(&["section", "--mu", "0.01", "--E", "-0.1", "--out", d]).status.code(), Some(1));
    assert_eq!(vtwist(&["sweep", "--out", d]).status.code(), Some(1));
    assert_eq!(vtwist(&["--help"]).status.code(), Some(0));
}

#[test]
fn help_lists_every_subcommand() {
    let out = vtwist(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in [
        "resonance-table", "section", "orbit", "profile", "fixed-point-contours", "reconnect", "nf", "nf-contours",
        "chart", "sweep",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
    let sub = String::from_utf8(vtwist(&["reconnect", "--help"]).stdout).unwrap();
    for flag in ["--rational", "--method", "--grid", "--E", "--config", "--out", "--format"] {
        assert!(sub.contains(flag), "{flag}");
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.json");
    std::fs::write(&cfg, format!(r#"{{"mu": 0.0095, "format": "json", "out": "{}"}}"#, d.join("a").display())).unwrap();
    ok(&vtwist(&["nf", "--config", cfg.to_str().unwrap()]));
    assert!(d.join("a/nf_mu0.009500.json").exists());
    ok(&vtwist(&["nf", "--config", cfg.to_str().unwrap(), "--mu", "0.0096", "--format", "csv"]));
    assert!(d.join("a/nf_mu0.009600.csv").exists());

    std::fs::write(&cfg, r#"{"mu": 0.0095, "colour": "red"}"#).unwrap();
    assert_eq!(vtwist(&["nf", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn section_and_orbit_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&vtwist(&["section", "--mu", "0.01", "--E", "0.02", "--max-crossings", "20", "--out", d]));
    ok(&vtwist(&["orbit", "--mu", "0.01", "--E", "0.02", "--out", d]));
    let names: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    let section = names.iter().find(|n| n.starts_with("section") && n.ends_with(".csv")).unwrap();
    let text = read(dir.path(), section);
    assert!(text.starts_with("seed,a,pa,E,mu,direction,t_cross\n"));
    // 16 default seeds, 20 crossings each (seeds that leave the region fail
    // and are listed in the sidecar instead)
    assert!(text.lines().count() > 20);
    let orbit = names.iter().find(|n| n.starts_with("orbit") && n.ends_with(".csv")).unwrap();
    assert!(read(dir.path(), orbit).starts_with("t,x,y\n"));
}

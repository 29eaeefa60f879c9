use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chcrit::diagnostics::{read_rows_csv, ObservablesRow};
use chcrit::nucleation::{self, SharpInterface};
use chcrit::torus::Field;
use chcrit::{critical_volumes, io, make_grid, Model};
use chcrit_cli::manifest::file_sha256;
use tempfile::TempDir;

fn chcrit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chcrit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = chcrit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn kv(path: &Path) -> HashMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn rows(path: &Path) -> Vec<ObservablesRow> {
    read_rows_csv(fs::File::open(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn constants_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c");
    run_ok(&["constants", "--xi", "2.3", "--out", s(&out)]);
    let c = kv(&out.join("constants.txt"));
    assert!(c["c0"].starts_with("0.942809"));
    let nu_s: f64 = c["nu_s"].parse().unwrap();
    let nu_m: f64 = c["nu_m"].parse().unwrap();
    let sharp = SharpInterface::new(2.3, 2).unwrap();
    assert!(sharp.f_prime(nu_s).abs() <= 1e-10);
    assert!(sharp.f_prime(nu_m).abs() <= 1e-10);
    let csv = fs::read_to_string(out.join("constants.csv")).unwrap();
    assert!(csv.starts_with("xi,d,c0,cbar1,xi_tilde,xi_d,nu_s,c_s,nu_m,c_m\n"));
}

#[test]
fn constants_below_bifurcation() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c");
    let r = chcrit(&["constants", "--xi", "1.0", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    let c = kv(&out.join("constants.txt"));
    assert!(c.contains_key("c0"));
    assert!(!c.contains_key("nu_s") && !c.contains_key("nu_m"));
    let r = chcrit(&["minimize", "--xi", "1.0", "--out", s(&dir.path().join("m"))]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn minimize_matches_table_and_restarts_idempotently() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    run_ok(&["minimize", "--phi", "0.4", "--out", s(&a)]);
    let first = rows(&a.join("minimizer.csv"))[0];
    assert!((first.energy_gap - 3.8415).abs() < 0.01 * 3.8415, "{}", first.energy_gap);

    let b = dir.path().join("b");
    let chf = a.join("minimizer.chf");
    run_ok(&["minimize", "--phi", "0.4", "--resume", s(&chf), "--out", s(&b)]);
    let again = rows(&b.join("minimizer.csv"))[0];
    for obs in chcrit::diagnostics::OBSERVABLES {
        let (x, y) = (first.get(obs).unwrap(), again.get(obs).unwrap());
        assert!((x - y).abs() < 1e-10, "{obs}: {x} vs {y}");
    }
    assert_eq!(kv(&b.join("status.txt"))["steps"], "0");

    // same config, same bytes
    let c = dir.path().join("c");
    run_ok(&["minimize", "--phi", "0.4", "--out", s(&c)]);
    for f in ["minimizer.csv", "minimizer.chf", "status.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(c.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn minimize_flags_non_convergence() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m");
    let r = chcrit(&["minimize", "--phi", "0.4", "--max-iters", "5", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(kv(&out.join("status.txt"))["converged"], "false");
    assert!(out.join("minimizer.chf").exists());
}

#[test]
fn string_saddle_and_resume() {
    let dir = TempDir::new().unwrap();
    let full = dir.path().join("full");
    run_ok(&["string", "--phi", "0.4", "--images", "32", "--out", s(&full)]);
    let saddle = rows(&full.join("saddle.csv"))[0];
    assert!((saddle.energy_gap - 0.6101).abs() <= 0.12, "{}", saddle.energy_gap);
    let profile = fs::read_to_string(full.join("profile.csv")).unwrap();
    assert!(profile.starts_with("alpha,energy,grad2\n"));
    assert_eq!(profile.lines().count(), 34);
    assert_eq!(rows(&full.join("endpoints.csv")).len(), 2);

    let part = dir.path().join("part");
    let r = chcrit(&[
        "string", "--phi", "0.4", "--images", "32", "--max-iters", "30", "--checkpoint-every", "7", "--out", s(&part),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let ck = io::read_string(&mut fs::File::open(part.join("string.chs")).unwrap()).unwrap();
    assert_eq!(ck.iter, 30);

    let resumed = dir.path().join("resumed");
    run_ok(&[
        "string", "--phi", "0.4", "--resume", s(&part.join("string.chs")), "--out", s(&resumed),
    ]);
    let again = rows(&resumed.join("saddle.csv"))[0];
    for obs in chcrit::diagnostics::OBSERVABLES {
        let (x, y) = (saddle.get(obs).unwrap(), again.get(obs).unwrap());
        assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{obs}: {x} vs {y}");
    }
}

#[test]
fn constant_endpoints_have_no_saddle() {
    let dir = TempDir::new().unwrap();
    let m = Model::new(0.4, 2.3).unwrap();
    let flat = Field::constant(make_grid(0.4, 2.3).unwrap(), m.mean_value());
    let b = dir.path().join("flat.chf");
    io::save_field(&b, &flat).unwrap();
    let out = dir.path().join("s");
    let r = chcrit(&["string", "--phi", "0.4", "--images", "8", "--endpoint-b", s(&b), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(4));
    assert_eq!(kv(&out.join("status.txt"))["saddle"], "none");
}

#[test]
fn diagnose_sharp_profile() {
    let dir = TempDir::new().unwrap();
    let g = make_grid(0.2, 2.3).unwrap();
    let nu_m = critical_volumes(2.3, 2).unwrap().critical().unwrap().nu_m;
    let psi = nucleation::sharp_profile_psi(nu_m, &g).unwrap();
    let input = dir.path().join("psi.chf");
    io::save_field(&input, &psi.shifted(3, 7)).unwrap();
    let out = dir.path().join("d");
    run_ok(&["diagnose", "--input", s(&input), "--out", s(&out)]);
    let row = rows(&out.join("diagnose.csv"))[0];
    assert_eq!(row.l2_gap, 0.0);
    assert_eq!(row.phi, 0.2);
}

#[test]
fn geometry_of_a_radial_bump() {
    let dir = TempDir::new().unwrap();
    let g = make_grid(0.2, 2.3).unwrap();
    let c = g.center();
    let bump = Field::from_fn(g, |x, y| {
        let r2 = (x - c).powi(2) + (y - c).powi(2);
        (-r2 / 2.0).exp() - 1.0
    });
    let input = dir.path().join("bump.chf");
    io::save_field(&input, &bump).unwrap();
    let out = dir.path().join("g");
    run_ok(&["geometry", "--input", s(&input), "--levels", "10", "--out", s(&out)]);
    let summary = kv(&out.join("geometry.txt"));
    assert_eq!(summary["ray_violations"], "0");
    let conv = fs::read_to_string(out.join("convexity.csv")).unwrap();
    let mut lines = conv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "superlevel_convex").unwrap();
    let flags: Vec<String> = lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect();
    assert_eq!(flags.len(), 10);
    assert!(flags.iter().all(|f| f == "true"), "{flags:?}");
    for f in ["contours.csv", "rays.csv", "h2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn table_reproduces_rates() {
    let dir = TempDir::new().unwrap();
    let mut csvs = Vec::new();
    for phi in ["0.4", "0.2", "0.1"] {
        let out = dir.path().join(format!("m{phi}"));
        run_ok(&["minimize", "--phi", phi, "--out", s(&out)]);
        csvs.push(out.join("minimizer.csv"));
    }
    let out = dir.path().join("t");
    let mut args = vec!["table", "--out", s(&out)];
    // reversed order on purpose; the table sorts by phi
    args.extend(csvs.iter().rev().map(|p| s(p)));
    run_ok(&args);
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    let energy: Vec<f64> = rates
        .lines()
        .filter(|l| l.contains(",energy_gap,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(energy.len(), 2);
    assert!((energy[0] - 0.8142).abs() < 0.1 && (energy[1] - 0.9244).abs() < 0.1, "{energy:?}");
    assert_eq!(rows(&out.join("raw.csv")).len(), 3);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# experiment\nxi = 1.0\nphi = 0.2\n").unwrap();
    let out = dir.path().join("c");
    run_ok(&["constants", "--config", s(&cfg), "--xi", "2.3", "--out", s(&out)]);
    let used = kv(&out.join("config.txt"));
    assert_eq!(used["xi"], "2.3");
    assert_eq!(used["phi"], "0.2");

    fs::write(&cfg, "colour=red\n").unwrap();
    let r = chcrit(&["constants", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let r = chcrit(&["minimize", "--phi", "1.5", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn manifest_lists_checksums() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c");
    run_ok(&["constants", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(text.starts_with("command=constants\nconfig_sha256="));
    let mut seen = 0;
    for line in text.lines().filter(|l| l.starts_with("artifact=")) {
        let (name, sum) = line["artifact=".len()..].split_once(" sha256=").unwrap();
        assert_eq!(file_sha256(&out.join(name)).unwrap(), sum, "{name}");
        seen += 1;
    }
    assert_eq!(seen, 3);
}

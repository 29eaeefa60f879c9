//! Acceptance suite at xi = 2.3, d = 2. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use chcrit::diagnostics::{self, Kind, ObservablesRow};
use chcrit::energy::{self, Model, StepControl};
use chcrit::levelset;
use chcrit::minimize::{relax, RelaxConfig};
use chcrit::nucleation::{self, CriticalPoints};
use chcrit::string::{self, StringConfig};
use chcrit::torus::{self, Field, Grid};
use chcrit::{critical_volumes, make_grid};

const XI: f64 = 2.3;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

struct Minimizer {
    field: Field,
    row: ObservablesRow,
    elapsed: Duration,
}

struct SaddleRun {
    field: Field,
    row: ObservablesRow,
    el_residual: f64,
    converged: bool,
    elapsed: Duration,
}

fn critical() -> CriticalPoints {
    critical_volumes(XI, 2).unwrap().critical().unwrap()
}

fn minimize(phi: f64) -> Minimizer {
    let t = Instant::now();
    let m = Model::new(phi, XI).unwrap();
    let g = make_grid(phi, XI).unwrap();
    let nc = critical_volumes(XI, 2).unwrap();
    let u0 = nucleation::droplet_ansatz(nc.critical().unwrap().nu_m, &m, &g).unwrap();
    let r = relax(&u0, &RelaxConfig::default(), &m).unwrap();
    let row = diagnostics::observables_row(&r.field, Kind::Minimizer, &m, &nc).unwrap();
    Minimizer {
        field: r.field,
        row,
        elapsed: t.elapsed(),
    }
}

fn saddle(min: &Minimizer, phi: f64) -> SaddleRun {
    let t = Instant::now();
    let m = Model::new(phi, XI).unwrap();
    let nc = critical_volumes(XI, 2).unwrap();
    let cfg = StringConfig::for_grid(min.field.grid());
    let a = Field::constant(*min.field.grid(), m.mean_value());
    let s = string::init_linear(&a, &min.field, cfg.m_images).unwrap();
    let (mut s, rep) = string::run_string(s, &cfg, &m).unwrap();
    let field = match rep.refined {
        Some(r) => r.field,
        None => string::extract_saddle(&mut s, &m).unwrap().field,
    };
    SaddleRun {
        row: diagnostics::observables_row(&field, Kind::Saddle, &m, &nc).unwrap(),
        el_residual: energy::euler_lagrange_residual(&field, &m).unwrap(),
        converged: rep.converged,
        field,
        elapsed: t.elapsed(),
    }
}

/// Hand-written `f'` for d = 2 with the surface tension from quadrature.
fn fp_oracle(nu: f64) -> f64 {
    let cbar = common::c0_quadrature() * 2.0 * PI.sqrt();
    0.5 * cbar / nu.sqrt() - 4.0 + 8.0 * nu / XI.powi(3)
}

fn bisect_oracle(mut a: f64, mut b: f64) -> f64 {
    let fa = fp_oracle(a);
    assert!(fa * fp_oracle(b) < 0.0, "bracket [{a}, {b}] has no sign change");
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (fp_oracle(mid) > 0.0) == (fa > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let nc = critical_volumes(XI, 2).unwrap();
    let cp = nc.critical().unwrap();
    let elapsed = t.elapsed();
    let s = nucleation::SharpInterface::new(XI, 2).unwrap();
    let (os, om) = (bisect_oracle(0.1, 0.3), bisect_oracle(4.0, 6.0));
    let (fs, fm) = (s.f_prime(cp.nu_s).abs(), s.f_prime(cp.nu_m).abs());
    let ok = (cp.nu_s - os).abs() <= 1e-8
        && (cp.nu_m - om).abs() <= 1e-8
        && fs <= 1e-10
        && fm <= 1e-10
        && cp.c_m < 0.0
        && 0.0 < cp.c_s
        && elapsed < Duration::from_secs(1);
    outcome(
        ok,
        format!(
            "nu_s={:.10} (oracle {:.10}) nu_m={:.10} (oracle {:.10}) |f'|={fs:.1e},{fm:.1e} c_s={:.6} c_m={:.6} in {:.1?}",
            cp.nu_s, os, cp.nu_m, om, cp.c_s, cp.c_m, elapsed
        ),
    )
}

fn criterion_2(mins: &[(f64, &Minimizer)]) -> Outcome {
    let paper = [3.8415, 2.1848, 1.1512];
    let mut ok = true;
    let mut parts = Vec::new();
    for (&(phi, run), &p) in mins.iter().zip(&paper) {
        let rel = (run.row.energy_gap - p).abs() / p;
        ok &= rel <= 0.10;
        parts.push(format!("phi={phi}: {:.4} vs {p} ({:.1}%, {:.1?})", run.row.energy_gap, 100.0 * rel, run.elapsed));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_3(mins: &[(f64, &Minimizer)]) -> Outcome {
    let rows: Vec<ObservablesRow> = mins.iter().map(|(_, r)| r.row).collect();
    let rates = diagnostics::rate_table(&rows).unwrap();
    let rate = |phi: f64| {
        rates
            .iter()
            .find(|e| e.obs == "energy_gap" && (e.phi - phi).abs() < 1e-12)
            .and_then(|e| e.log2_ratio)
            .unwrap_or(f64::NAN)
    };
    let (r2, r1) = (rate(0.2), rate(0.1));
    let ok = r2 >= 0.80 && (r2 - 0.8142).abs() <= 0.1 && r1 >= 0.90 && (r1 - 0.9244).abs() <= 0.1;
    outcome(ok, format!("log2 ratio phi=0.2: {r2:.4} (0.8142), phi=0.1: {r1:.4} (0.9244)"))
}

fn criterion_4(min01: &Minimizer) -> Outcome {
    let l2 = min01.row.l2_gap;
    let nu = min01.row.nu_gap;
    let ok = (l2 - 0.9145).abs() / 0.9145 <= 0.15 && (nu - 0.1514).abs() <= 0.1;
    outcome(ok, format!("phi=0.1 l2_gap={l2:.4} (0.9145), nu_gap={nu:.4} (0.1514)"))
}

fn criterion_5(mins: &[(f64, &Minimizer)]) -> Outcome {
    let v: Vec<f64> = mins.iter().map(|(_, r)| r.row.interfacial).collect();
    let ok = v[0] == 0.0 && v[1] == 0.0 && (v[2] - 0.1675).abs() <= 0.05;
    outcome(ok, format!("phi=0.4: {}, phi=0.2: {}, phi=0.1: {:.4} (0.1675)", v[0], v[1], v[2]))
}

fn criterion_6(s04: &SaddleRun, s02: &SaddleRun) -> Outcome {
    let ok = (s04.row.energy_gap - 0.6101).abs() <= 0.12
        && (s02.row.energy_gap - 0.2041).abs() <= 0.08
        && s04.el_residual <= 2e-3
        && s02.el_residual <= 2e-3;
    outcome(
        ok,
        format!(
            "phi=0.4: gap {:.4} (0.6101) EL {:.1e} converged {} ({:.1?}); phi=0.2: gap {:.4} (0.2041) EL {:.1e} converged {} ({:.1?})",
            s04.row.energy_gap,
            s04.el_residual,
            s04.converged,
            s04.elapsed,
            s02.row.energy_gap,
            s02.el_residual,
            s02.converged,
            s02.elapsed
        ),
    )
}

fn criterion_7() -> Outcome {
    let g = Grid::new(32, 6.5, 0.4, XI).unwrap();
    let k0 = 2.0 * PI / g.side();
    let mut lap_err = 0.0f64;
    for &(kx, ky) in &[(1, 0), (0, 3), (2, 5), (7, 7), (15, 1), (-4, 9), (15, 15)] {
        let (kx, ky) = (kx as f64, ky as f64);
        let u = Field::from_fn(g, |x, y| (k0 * (kx * x + ky * y)).cos());
        let lap = torus::spectral_laplacian(&u);
        let want = u.scale(-k0 * k0 * (kx * kx + ky * ky));
        let err = lap.lincomb(1.0, &want, -1.0).unwrap().l2_norm() / want.l2_norm();
        lap_err = lap_err.max(err);
    }

    let m = Model::new(0.4, XI).unwrap();
    let mg = make_grid(0.4, XI).unwrap();
    let u = nucleation::droplet_ansatz(critical().nu_m, &m, &mg)
        .unwrap()
        .lincomb(1.0, &common::band_limited(mg, 17, 3, 0.1, 0.0), 1.0)
        .unwrap();
    let grad = energy::grad_l2(&u, &m).unwrap();
    let eps = 1e-5;
    let mut fd_err = 0.0f64;
    for seed in 0..10 {
        let v = common::direction(mg, 100 + seed, 4);
        let ep = energy::energy(&u.lincomb(1.0, &v, eps).unwrap(), &m).unwrap();
        let em = energy::energy(&u.lincomb(1.0, &v, -eps).unwrap(), &m).unwrap();
        let fd = (ep - em) / (2.0 * eps);
        let an = grad.inner(&v).unwrap();
        fd_err = fd_err.max((fd - an).abs() / an.abs());
    }
    outcome(
        lap_err <= 1e-10 && fd_err <= 1e-4,
        format!("Fourier-mode Laplacian rel err {lap_err:.1e}; gradient vs central difference max rel err {fd_err:.1e} over 10 directions"),
    )
}

fn criterion_8() -> Outcome {
    let mut worst_mean = 0.0f64;
    let mut rises = 0;
    for &(phi, seed) in &[(0.4, 1u64), (0.2, 2)] {
        let m = Model::new(phi, XI).unwrap();
        let g = make_grid(phi, XI).unwrap();
        let mut u = common::band_limited(g, seed, 4, 1.2, m.mean_value());
        let mut ctl = StepControl::new(StepControl::default_dt0(&m));
        let mut e = energy::energy(&u, &m).unwrap();
        for _ in 0..1000 {
            let next = ctl.advance(&u, e, &m).unwrap();
            if next.energy > e + energy::energy_slack(e) {
                rises += 1;
            }
            u = next.field;
            e = next.energy;
            worst_mean = worst_mean.max((torus::mean(&u) - m.mean_value()).abs());
        }
    }
    outcome(
        worst_mean <= 1e-11 && rises == 0,
        format!("1000 steps at phi=0.4 and 0.2: max |mean - (-1+phi)| {worst_mean:.1e}, energy rises {rises}"),
    )
}

fn criterion_9() -> Outcome {
    let m = Model::new(0.4, XI).unwrap();
    let g = make_grid(0.4, XI).unwrap();
    let mut spacing_err = 0.0f64;
    let mut idem_err = 0.0f64;
    for seed in 0..5u64 {
        let a = Field::constant(g, m.mean_value());
        let b = nucleation::droplet_ansatz(critical().nu_m, &m, &g).unwrap();
        let mut s = string::init_linear(&a, &b, 20).unwrap();
        for (k, img) in s.images.iter_mut().enumerate().skip(1).take(19) {
            let wobble = common::band_limited(g, seed * 100 + k as u64, 3, 0.02, 0.0);
            *img = img.lincomb(1.0, &wobble, 1.0).unwrap();
        }
        let once = string::reparameterize(s);
        let sp = once.spacings();
        let mean = sp.iter().sum::<f64>() / sp.len() as f64;
        spacing_err = sp.iter().fold(spacing_err, |acc, d| acc.max((d - mean).abs() / mean));
        let twice = string::reparameterize(once.clone());
        for (x, y) in once.images.iter().zip(&twice.images) {
            idem_err = idem_err.max(x.dist(y).unwrap() / mean);
        }
    }

    let a = Field::constant(g, m.mean_value());
    let b = common::band_limited(g, 9, 3, 1.0, m.mean_value());
    let s = string::init_linear(&a, &b, 16).unwrap();
    let cfg = StringConfig {
        m_images: 16,
        pin_endpoints: true,
        max_outer_iters: 50,
        climb_steps: 0,
        ..Default::default()
    };
    let (out, _) = string::run_string(s, &cfg, &m).unwrap();
    let pinned = out.images[0] == a && out.images[16] == b;
    outcome(
        spacing_err <= 1e-10 && idem_err <= 1e-10 && pinned,
        format!("spacing rel err {spacing_err:.1e}, idempotence {idem_err:.1e}, pinned endpoints bitwise {pinned}"),
    )
}

fn criterion_10() -> Outcome {
    let g = Grid::new(16, 3.0, 0.4, XI).unwrap();
    let mut mismatches = 0;
    let trials = 20;
    for seed in 0..trials {
        let u = common::white_noise(g, seed, -1.0, 1.0);
        let psi = common::white_noise(g, 1000 + seed, -1.0, 1.0);
        if torus::min_translated_l2_sq(&u, &psi).unwrap() != common::brute_force_shift(&u, &psi) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{trials} random 16x16 pairs, all 256 shifts: {mismatches} mismatches"))
}

fn criterion_11(s02: &SaddleRun) -> Outcome {
    let mut disagree = 0;
    for seed in 0..100u64 {
        let poly = common::random_convex_polygon(seed, 4);
        if levelset::is_convex(&poly, levelset::CONVEXITY_TOL) != common::hull_says_convex(&poly) {
            disagree += 1;
        }
        let bent = common::reflect_vertex(&poly, seed as usize % poly.len());
        if levelset::is_convex(&bent, levelset::CONVEXITY_TOL) != common::hull_says_convex(&bent) {
            disagree += 1;
        }
    }
    let rays = levelset::ray_monotonicity(&s02.field, 64, 1e-6);
    let scan = levelset::convexity_scan(&s02.field, 20).unwrap();
    outcome(
        disagree == 0 && rays.is_empty() && scan.top_convex_band >= 1,
        format!(
            "hull oracle disagreements {disagree}/200; phi=0.2 saddle: ray violations {}, convex superlevel band {} of 20 levels",
            rays.len(),
            scan.top_convex_band
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("{} [{n:>2}] {name}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "nucleation oracle", criterion_1());
    let m04 = minimize(0.4);
    let m02 = minimize(0.2);
    let m01 = minimize(0.1);
    let mins = [(0.4, &m04), (0.2, &m02), (0.1, &m01)];
    report(2, "minimizer energy gaps", criterion_2(&mins));
    report(3, "minimizer rates", criterion_3(&mins));
    report(4, "minimizer l2 and nu gaps", criterion_4(&m01));
    report(5, "interfacial measure", criterion_5(&mins));
    let s04 = saddle(&m04, 0.4);
    let s02 = saddle(&m02, 0.2);
    report(6, "string method saddles", criterion_6(&s04, &s02));
    report(7, "spectral operators and gradient", criterion_7());
    report(8, "mean conservation and descent", criterion_8());
    report(9, "reparameterization", criterion_9());
    report(10, "shift search vs brute force", criterion_10());
    report(11, "convexity detector and saddle geometry", criterion_11(&s02));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.ok).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

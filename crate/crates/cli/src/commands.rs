use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chcrit::diagnostics::{self, Kind, ObservablesRow};
use chcrit::energy::{self, Model, StepControl};
use chcrit::io;
use chcrit::levelset;
use chcrit::minimize::{relax_with, RelaxConfig};
use chcrit::nucleation::{self, NucleationConstants};
use chcrit::string::{self, StringConfig, StringState};
use chcrit::torus::{self, Field, Grid};
use chcrit::{critical_volumes, make_grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::manifest::{write_atomic, Outputs};

/// How a command finished; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    NoDroplet,
    NoSaddle,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotConverged => 2,
            Status::NoDroplet => 3,
            Status::NoSaddle => 4,
        }
    }
}

/// Exit code for an error escaping a command.
pub fn error_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<chcrit::Error>() {
        Some(chcrit::Error::NoDroplet { .. }) => Status::NoDroplet.code(),
        Some(chcrit::Error::NoSaddle) => Status::NoSaddle.code(),
        _ => 1,
    }
}

fn field_bytes(u: &Field) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    io::write_field(&mut buf, u)?;
    Ok(buf)
}

fn rows_csv(rows: &[ObservablesRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    diagnostics::write_rows_csv(&mut buf, rows)?;
    Ok(buf)
}

fn kv_text(kv: &[(&str, String)]) -> String {
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn load_input(out: &mut Outputs, path: &Path) -> Result<Field> {
    out.input(path)?;
    io::load_field(path).with_context(|| format!("loading {}", path.display()))
}

fn model_for(u: &Field) -> Result<Model> {
    let g = u.grid();
    Ok(Model::new(g.phi(), g.xi())?)
}

/// `droplet_ansatz(nu_m)` plus seeded zero-mean uniform noise of amplitude
/// `init-noise`.
fn initial_droplet(cfg: &RunConfig, m: &Model, g: &Grid, nc: &NucleationConstants) -> Result<Field> {
    let u = nucleation::droplet_ansatz(nc.critical()?.nu_m, m, g)?;
    if cfg.init_noise == 0.0 {
        return Ok(u);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let noise = torus::project_zero_mean(&Field::new(*g, noise)?);
    Ok(u.lincomb(1.0, &noise, cfg.init_noise)?)
}

pub fn constants(cfg: &RunConfig, mut out: Outputs) -> Result<Status> {
    let nc = nucleation::nucleation_constants(cfg.xi, 2)?;
    let (tilde, xi_d) = nucleation::bifurcation_xis(2)?;
    let mut kv = vec![
        ("xi", nc.xi.to_string()),
        ("d", nc.d.to_string()),
        ("c0", nc.c0.to_string()),
        ("cbar1", nc.cbar1.to_string()),
        ("xi_tilde", tilde.to_string()),
        ("xi_d", xi_d.to_string()),
    ];
    if let Some(cp) = nc.critical {
        kv.extend([
            ("nu_s", cp.nu_s.to_string()),
            ("c_s", cp.c_s.to_string()),
            ("nu_m", cp.nu_m.to_string()),
            ("c_m", cp.c_m.to_string()),
        ]);
    }
    let text = kv_text(&kv);
    let header: Vec<&str> = kv.iter().map(|(k, _)| *k).collect();
    let values: Vec<&str> = kv.iter().map(|(_, v)| v.as_str()).collect();
    let csv = format!("{}\n{}\n", header.join(","), values.join(","));
    out.write_text("constants.txt", &text)?;
    out.write_text("constants.csv", &csv)?;
    out.finish()?;
    print!("{text}");
    if nc.critical.is_none() {
        log::warn!("xi={} is below xi_tilde={tilde}: no droplet regime", cfg.xi);
        return Ok(Status::NoDroplet);
    }
    Ok(Status::Ok)
}

pub fn minimize(cfg: &RunConfig, mut out: Outputs) -> Result<Status> {
    let m = Model::new(cfg.phi, cfg.xi)?;
    let g = make_grid(cfg.phi, cfg.xi)?;
    let nc = critical_volumes(cfg.xi, 2)?;
    let u0 = match &cfg.resume {
        Some(p) => load_input(&mut out, p)?,
        None => initial_droplet(cfg, &m, &g, &nc)?,
    };
    m.check_grid(u0.grid())?;
    let rc = RelaxConfig {
        dt0: cfg.dt0,
        tol_grad: cfg.tol_grad,
        tol_displacement: cfg.tol_disp,
        max_steps: cfg.max_iters.unwrap_or(RelaxConfig::default().max_steps),
    };
    log::info!("minimize: phi={} xi={} grid {}^2", cfg.phi, cfg.xi, g.n());
    let rep = relax_with(&u0, &rc, &m, |step, e| {
        if step % 1000 == 0 {
            log::info!("step {step}: energy {e}");
        }
    })?;
    let row = diagnostics::observables_row(&rep.field, Kind::Minimizer, &m, &nc)?;
    out.write("minimizer.chf", &field_bytes(&rep.field)?)?;
    out.write("minimizer.csv", &rows_csv(&[row])?)?;
    let status = kv_text(&[
        ("converged", rep.converged.to_string()),
        ("steps", rep.steps.to_string()),
        ("energy", rep.energy.to_string()),
        ("grad_norm", rep.grad_norm.to_string()),
        ("displacement_rate", rep.displacement_rate.to_string()),
        ("el_residual", energy::euler_lagrange_residual(&rep.field, &m)?.to_string()),
    ]);
    out.write_text("status.txt", &status)?;
    out.finish()?;
    print!("{status}");
    if !rep.converged {
        log::warn!("descent stopped after {} steps without meeting the tolerances", rep.steps);
        return Ok(Status::NotConverged);
    }
    Ok(Status::Ok)
}

/// Step-control sidecar of a string checkpoint: `<checkpoint>.ctl`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("ctl")
}

fn control_text(c: &StepControl) -> String {
    kv_text(&[
        ("dt0", c.dt0.to_string()),
        ("dt", c.dt.to_string()),
        ("streak", c.streak.to_string()),
    ])
}

fn read_control(path: &Path) -> Result<StepControl> {
    let text = fs::read_to_string(path)?;
    let mut c = StepControl::new(f64::NAN);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').context("expected key=value")?;
        match k {
            "dt0" => c.dt0 = v.parse()?,
            "dt" => c.dt = v.parse()?,
            "streak" => c.streak = v.parse()?,
            _ => bail!("unknown key {k:?} in {}", path.display()),
        }
    }
    if !(c.dt0 > 0.0 && c.dt > 0.0) {
        bail!("{} lacks dt0 or dt", path.display());
    }
    Ok(c)
}

fn checkpoint_bytes(s: &StringState) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    io::write_string(&mut buf, &s.images, &s.alpha, s.iter)?;
    Ok(buf)
}

fn resume_string(out: &mut Outputs, path: &Path) -> Result<StringState> {
    out.input(path)?;
    let ck = io::read_string(&mut BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?;
    let mut s = StringState::from_parts(ck.images, ck.alpha, ck.iter)?;
    let ctl = sidecar_path(path);
    if ctl.exists() {
        out.input(&ctl)?;
        s.control = Some(read_control(&ctl)?);
    } else {
        log::warn!("no {} next to the checkpoint; the time step restarts from dt0", ctl.display());
    }
    log::info!("resuming at outer iteration {}", s.iter);
    Ok(s)
}

pub fn string(cfg: &RunConfig, mut out: Outputs) -> Result<Status> {
    let m = Model::new(cfg.phi, cfg.xi)?;
    let g = make_grid(cfg.phi, cfg.xi)?;
    let nc = critical_volumes(cfg.xi, 2)?;
    let mut scfg = StringConfig::for_grid(&g);
    scfg.dt0 = cfg.dt0;
    scfg.tol_displacement = cfg.tol_disp;
    scfg.tol_grad = cfg.tol_grad;
    let budget = cfg.max_iters.unwrap_or(scfg.max_outer_iters) as u64;

    let s = match &cfg.resume {
        Some(p) => {
            let s = resume_string(&mut out, p)?;
            if cfg.images.is_some_and(|k| k != s.intervals()) {
                bail!("images={} but the checkpoint has {} intervals", cfg.images.unwrap(), s.intervals());
            }
            m.check_grid(s.grid())?;
            s
        }
        None => {
            let a = Field::constant(g, m.mean_value());
            let b = match &cfg.endpoint_b {
                Some(p) => load_input(&mut out, p)?,
                None => initial_droplet(cfg, &m, &g, &nc)?,
            };
            m.check_grid(b.grid())?;
            string::init_linear(&a, &b, cfg.images.unwrap_or(scfg.m_images))?
        }
    };
    scfg.m_images = s.intervals();
    scfg.max_outer_iters = budget.saturating_sub(s.iter) as usize;
    log::info!(
        "string: phi={} xi={} grid {}^2, {} intervals, budget {} iterations",
        cfg.phi,
        cfg.xi,
        g.n(),
        scfg.m_images,
        scfg.max_outer_iters
    );

    let ck_path = out.path("string.chs");
    let every = cfg.checkpoint_every;
    let (mut s, rep) = string::run_string_with(s, &scfg, &m, |s| {
        if s.iter % every == 0 {
            write_atomic(&ck_path, &checkpoint_bytes(s).map_err(chcrit_io)?).map_err(chcrit_io)?;
            if let Some(c) = &s.control {
                write_atomic(&sidecar_path(&ck_path), control_text(c).as_bytes()).map_err(chcrit_io)?;
            }
            log::info!(
                "iteration {}: displacement {:.3e}, dt {:.3e}, saddle image {:?}",
                s.iter,
                s.last_displacement,
                s.control.map(|c| c.dt).unwrap_or(f64::NAN),
                s.saddle_index
            );
        }
        Ok(())
    })?;

    out.write("string.chs", &checkpoint_bytes(&s)?)?;
    if let Some(c) = &s.control {
        out.write_text("string.ctl", &control_text(c))?;
    }
    let mut profile = String::from("alpha,energy,grad2\n");
    for p in &rep.profile {
        profile.push_str(&format!("{},{},{}\n", p.alpha, p.energy, p.grad2));
    }
    out.write_text("profile.csv", &profile)?;
    let last = s.images.len() - 1;
    let ends = [
        diagnostics::observables_row(&s.images[0], Kind::Minimizer, &m, &nc)?,
        diagnostics::observables_row(&s.images[last], Kind::Minimizer, &m, &nc)?,
    ];
    out.write("endpoints.csv", &rows_csv(&ends)?)?;

    let mut status = vec![
        ("converged", rep.converged.to_string()),
        ("iterations", rep.iterations.to_string()),
        ("final_displacement", rep.final_displacement.to_string()),
        ("dt", rep.dt.to_string()),
    ];
    let saddle = match rep.refined {
        Some(r) => {
            status.push(("climb_steps", r.steps.to_string()));
            Some(r.field)
        }
        None => match string::extract_saddle(&mut s, &m) {
            Ok(sd) => Some(sd.field),
            Err(chcrit::Error::NoSaddle) => None,
            Err(e) => return Err(e.into()),
        },
    };
    let Some(saddle) = saddle else {
        status.push(("saddle", "none".into()));
        out.write_text("status.txt", &kv_text(&status))?;
        out.finish()?;
        log::error!("the energy profile has no interior maximum");
        return Ok(Status::NoSaddle);
    };
    let row = diagnostics::observables_row(&saddle, Kind::Saddle, &m, &nc)?;
    status.push(("saddle_index", rep.saddle.map(|s| s.0.to_string()).unwrap_or_default()));
    status.push(("saddle_energy", energy::energy(&saddle, &m)?.to_string()));
    status.push(("saddle_grad2", row.error.to_string()));
    status.push(("el_residual", energy::euler_lagrange_residual(&saddle, &m)?.to_string()));
    out.write("saddle.chf", &field_bytes(&saddle)?)?;
    out.write("saddle.csv", &rows_csv(&[row])?)?;
    let text = kv_text(&status);
    out.write_text("status.txt", &text)?;
    out.finish()?;
    print!("{text}");
    if !rep.converged {
        log::warn!("string stopped after {} iterations without settling", rep.iterations);
        return Ok(Status::NotConverged);
    }
    Ok(Status::Ok)
}

fn chcrit_io(e: impl std::fmt::Display) -> chcrit::Error {
    chcrit::Error::Io(std::io::Error::other(e.to_string()))
}

fn require_input(cfg: &RunConfig) -> Result<&Path> {
    cfg.input.as_deref().context("this command needs input=<CHF1 file>")
}

pub fn diagnose(cfg: &RunConfig, mut out: Outputs) -> Result<Status> {
    let u = load_input(&mut out, require_input(cfg)?)?;
    let m = model_for(&u)?;
    let nc = critical_volumes(m.xi, 2)?;
    let kind = cfg.kind.unwrap_or(Kind::Minimizer);
    let row = diagnostics::observables_row(&u, kind, &m, &nc)?;
    out.write("diagnose.csv", &rows_csv(&[row])?)?;
    let text = kv_text(&[
        ("phi", row.phi.to_string()),
        ("kind", row.kind.to_string()),
        ("energy", energy::energy(&u, &m)?.to_string()),
        ("interfacial", row.interfacial.to_string()),
        ("energy_gap", row.energy_gap.to_string()),
        ("nu_gap", row.nu_gap.to_string()),
        ("l2_gap", row.l2_gap.to_string()),
        ("error", row.error.to_string()),
        ("el_residual", energy::euler_lagrange_residual(&u, &m)?.to_string()),
    ]);
    out.write_text("diagnose.txt", &text)?;
    out.finish()?;
    print!("{text}");
    Ok(Status::Ok)
}

pub fn geometry(cfg: &RunConfig, mut out: Outputs) -> Result<Status> {
    let u = load_input(&mut out, require_input(cfg)?)?;
    let m = model_for(&u)?;
    let scan = levelset::convexity_scan(&u, cfg.levels)?;
    let contours = scan
        .levels
        .iter()
        .map(|&t| levelset::contour(&u, t))
        .collect::<chcrit::Result<Vec<_>>>()?;
    let rays = levelset::ray_monotonicity(&u, cfg.rays, levelset::CONVEXITY_TOL);
    let h2 = levelset::h2_scan(&u, &m, cfg.c_star, cfg.levels)?;

    let mut buf = Vec::new();
    levelset::write_convexity_csv(&mut buf, &scan)?;
    out.write("convexity.csv", &buf)?;
    let mut buf = Vec::new();
    levelset::write_contours_csv(&mut buf, &contours)?;
    out.write("contours.csv", &buf)?;
    let mut buf = Vec::new();
    levelset::write_rays_csv(&mut buf, &rays)?;
    out.write("rays.csv", &buf)?;
    let mut buf = Vec::new();
    levelset::write_h2_csv(&mut buf, &h2)?;
    out.write("h2.csv", &buf)?;

    let mut text = levelset::convexity_summary(&scan);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(&kv_text(&[
        ("ray_violations", rays.len().to_string()),
        ("lambda_phi", h2.lambda_phi.to_string()),
        ("h2_holds", h2.h2_holds.to_string()),
    ]));
    out.write_text("geometry.txt", &text)?;
    out.finish()?;
    print!("{text}");
    Ok(Status::Ok)
}

pub fn table(cfg: &RunConfig, inputs: &[PathBuf], mut out: Outputs) -> Result<Status> {
    if inputs.is_empty() {
        bail!("table needs at least one CSV of observables rows");
    }
    let kind = cfg.kind.unwrap_or(Kind::Minimizer);
    let mut rows = Vec::new();
    for p in inputs {
        out.input(p)?;
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let read = diagnostics::read_rows_csv(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?;
        rows.extend(read.into_iter().filter(|r| r.kind == kind));
    }
    rows.sort_by(|a, b| b.phi.total_cmp(&a.phi));
    if let Some(w) = rows.windows(2).find(|w| w[0].phi == w[1].phi) {
        bail!("two {kind} rows for phi={}", w[0].phi);
    }
    let rates = diagnostics::rate_table(&rows)?;
    out.write("raw.csv", &rows_csv(&rows)?)?;
    let mut buf = Vec::new();
    diagnostics::write_rates_csv(&mut buf, &rates)?;
    out.write("rates.csv", &buf)?;
    out.finish()?;
    for e in rates.iter().filter(|e| e.obs == "energy_gap") {
        println!(
            "phi={} energy_gap log2_ratio={}",
            e.phi,
            e.log2_ratio.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    Ok(Status::Ok)
}

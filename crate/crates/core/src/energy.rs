//! The renormalized Cahn-Hilliard energy on the torus, the smoothed volume
//! functional and the mass-conserving L^2 descent used by every solver.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::torus::{self, Field, Grid};

/// Double-well potential. `Quartic { scale }` is `scale * (1 - u^2)^2 / 4`;
/// the standard potential has `scale = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    Quartic { scale: f64 },
}

impl Potential {
    pub const STANDARD: Potential = Potential::Quartic { scale: 1.0 };

    pub fn g(&self, u: f64) -> f64 {
        match *self {
            Potential::Quartic { scale } => {
                let w = 1.0 - u * u;
                0.25 * scale * w * w
            }
        }
    }

    pub fn gp(&self, u: f64) -> f64 {
        match *self {
            Potential::Quartic { scale } => scale * (u * u * u - u),
        }
    }

    pub fn gpp(&self, u: f64) -> f64 {
        match *self {
            Potential::Quartic { scale } => scale * (3.0 * u * u - 1.0),
        }
    }
}

impl Default for Potential {
    fn default() -> Self {
        Potential::STANDARD
    }
}

/// Standard quartic `G(u) = (1 - u^2)^2 / 4`.
pub fn g(u: f64) -> f64 {
    Potential::STANDARD.g(u)
}

pub fn gp(u: f64) -> f64 {
    Potential::STANDARD.gp(u)
}

pub fn gpp(u: f64) -> f64 {
    Potential::STANDARD.gpp(u)
}

/// Fraction of the cutoff band `[1 - 2 phi^{1/3}, 1 - phi^{1/3}]` over which
/// `chi` rises, starting at the lower edge. The default keeps `chi` a C^2
/// quintic ramp while making `nu` count almost exactly the set
/// `{u > 1 - 2 phi^{1/3}}`.
pub const DEFAULT_CHI_RAMP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub phi: f64,
    pub xi: f64,
    pub potential: Potential,
    pub chi_lo: f64,
    pub chi_hi: f64,
    pub chi_ramp: f64,
}

impl Model {
    pub fn new(phi: f64, xi: f64) -> Result<Model> {
        Model::with_chi_ramp(phi, xi, DEFAULT_CHI_RAMP)
    }

    pub fn with_chi_ramp(phi: f64, xi: f64, chi_ramp: f64) -> Result<Model> {
        if !(phi.is_finite() && phi > 0.0 && phi < 1.0) {
            return Err(invalid("phi", format!("need 0 < phi < 1, got {phi}")));
        }
        if !(xi.is_finite() && xi > 0.0) {
            return Err(invalid("xi", format!("need xi > 0, got {xi}")));
        }
        if !(chi_ramp.is_finite() && chi_ramp > 0.0 && chi_ramp <= 1.0) {
            return Err(invalid("chi_ramp", format!("need 0 < ramp <= 1, got {chi_ramp}")));
        }
        let c = phi.cbrt();
        Ok(Model {
            phi,
            xi,
            potential: Potential::STANDARD,
            chi_lo: 1.0 - 2.0 * c,
            chi_hi: 1.0 - c,
            chi_ramp,
        })
    }

    pub fn with_potential(mut self, potential: Potential) -> Model {
        self.potential = potential;
        self
    }

    /// Mean of every admissible state, `-1 + phi`.
    pub fn mean_value(&self) -> f64 {
        -1.0 + self.phi
    }

    /// Lower and upper edges of the interfacial band `[-1 + 2 phi^{1/3}, 1 - 2 phi^{1/3}]`.
    pub fn interfacial_band(&self) -> (f64, f64) {
        let c = self.phi.cbrt();
        (-1.0 + 2.0 * c, 1.0 - 2.0 * c)
    }

    fn ramp_width(&self) -> f64 {
        self.chi_ramp * (self.chi_hi - self.chi_lo)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.phi() == self.phi && grid.xi() == self.xi {
            Ok(())
        } else {
            Err(Error::ModelMismatch {
                grid_phi: grid.phi(),
                grid_xi: grid.xi(),
                model_phi: self.phi,
                model_xi: self.xi,
            })
        }
    }
}

/// Smooth cutoff: 0 below `chi_lo`, 1 from `chi_lo + ramp` on, quintic
/// smoothstep in between.
pub fn chi(s: f64, m: &Model) -> f64 {
    let t = (s - m.chi_lo) / m.ramp_width();
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

pub fn chi_p(s: f64, m: &Model) -> f64 {
    let w = m.ramp_width();
    let t = (s - m.chi_lo) / w;
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (1.0 - t) * (1.0 - t) / w
    }
}

pub fn chi_pp(s: f64, m: &Model) -> f64 {
    let w = m.ramp_width();
    let t = (s - m.chi_lo) / w;
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (w * w)
    }
}

fn potential_integral(u: &Field, m: &Model) -> f64 {
    let g0 = m.potential.g(m.mean_value());
    let s: f64 = u.values().iter().map(|&v| m.potential.g(v) - g0).sum();
    s * u.grid().cell_area() / m.phi
}

/// Energy from a precomputed spectrum of `u`.
fn energy_with_spectrum(u: &Field, spec: &[Complex64], m: &Model) -> f64 {
    0.5 * m.phi * torus::dirichlet_from_spectrum(u.grid(), spec) + potential_integral(u, m)
}

/// `int (phi/2)|grad u|^2 + (G(u) - G(-1+phi))/phi` by the rectangle rule.
pub fn energy(u: &Field, m: &Model) -> Result<f64> {
    m.check_grid(u.grid())?;
    Ok(energy_with_spectrum(u, &u.spectrum(), m))
}

/// `nu(u) = int chi(u)`.
pub fn nu_volume(u: &Field, m: &Model) -> Result<f64> {
    m.check_grid(u.grid())?;
    let s: f64 = u.values().iter().map(|&v| chi(v, m)).sum();
    Ok(s * u.grid().cell_area())
}

/// Projected L^2 gradient `P(-phi Lap u + G'(u)/phi)`, with `P` removing the mean.
pub fn grad_l2(u: &Field, m: &Model) -> Result<Field> {
    m.check_grid(u.grid())?;
    let lap = torus::spectral_laplacian(u);
    let raw: Vec<f64> = u
        .values()
        .iter()
        .zip(lap.values())
        .map(|(&v, &l)| -m.phi * l + m.potential.gp(v) / m.phi)
        .collect();
    Ok(torus::project_zero_mean(&Field::from_raw(*u.grid(), raw)))
}

/// Mean multiplier `lambda_phi = mean(phi Lap u - G'(u)/phi)`.
pub fn lambda_phi_estimate(u: &Field, m: &Model) -> Result<f64> {
    m.check_grid(u.grid())?;
    let lap = torus::spectral_laplacian(u);
    let s: f64 = u
        .values()
        .iter()
        .zip(lap.values())
        .map(|(&v, &l)| m.phi * l - m.potential.gp(v) / m.phi)
        .sum();
    Ok(s / u.grid().len() as f64)
}

/// `|| -phi Lap u + G'(u)/phi + lambda_phi ||_{L^2}` with the estimated multiplier.
pub fn euler_lagrange_residual(u: &Field, m: &Model) -> Result<f64> {
    let lam = lambda_phi_estimate(u, m)?;
    let lap = torus::spectral_laplacian(u);
    let s: f64 = u
        .values()
        .iter()
        .zip(lap.values())
        .map(|(&v, &l)| {
            let r = -m.phi * l + m.potential.gp(v) / m.phi + lam;
            r * r
        })
        .sum();
    Ok((s * u.grid().cell_area()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub grad_norm2: f64,
    pub lambda_phi: f64,
    pub mean_value: f64,
}

pub fn energy_report(u: &Field, m: &Model) -> Result<EnergyReport> {
    Ok(EnergyReport {
        energy: energy(u, m)?,
        grad_norm2: grad_l2(u, m)?.l2_norm_sq(),
        lambda_phi: lambda_phi_estimate(u, m)?,
        mean_value: torus::mean(u),
    })
}

/// One semi-implicit step: the projected nonlinearity `P(G'(u)/phi)` explicit,
/// diffusion implicit,
/// `u+^(k) = (u^(k) - dt N^(k)) / (1 + dt phi |k|^2)`.
/// The zero mode is carried over untouched, so the mean is exact.
pub fn descent_step(u: &Field, dt: f64, m: &Model) -> Result<Field> {
    m.check_grid(u.grid())?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("need a positive step, got {dt}")));
    }
    Ok(step_parts(u, dt, m, None)?.0)
}

/// [`descent_step`] with an extra explicit zero-mean term `w` added to the
/// gradient, `u+^ = (u^ - dt (N^ + w^)) / (1 + dt phi |k|^2)`.
pub fn forced_step(u: &Field, w: &Field, dt: f64, m: &Model) -> Result<Field> {
    m.check_grid(u.grid())?;
    u.check_same_grid(w)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("need a positive step, got {dt}")));
    }
    Ok(step_parts(u, dt, m, Some(w))?.0)
}

/// Step plus the spectrum of the result (reused for its energy).
fn step_parts(u: &Field, dt: f64, m: &Model, w: Option<&Field>) -> Result<(Field, Vec<Complex64>)> {
    let grid = *u.grid();
    let spec = u.spectrum();
    let mut nonlinear = torus::project_zero_mean(&u.map(|v| m.potential.gp(v) / m.phi));
    if let Some(w) = w {
        nonlinear = nonlinear.lincomb(1.0, &torus::project_zero_mean(w), 1.0)?;
    }
    let nspec = nonlinear.spectrum();
    let ksq = torus::k_squared(&grid);
    let mut next: Vec<Complex64> = spec
        .iter()
        .zip(&nspec)
        .zip(&ksq)
        .map(|((a, b), k2)| (a - dt * b) / (1.0 + dt * m.phi * k2))
        .collect();
    next[0] = spec[0];
    let out = Field::from_spectrum(grid, next);
    if !out.is_finite() {
        return Err(Error::BlowUp { image: None });
    }
    let out_spec = out.spectrum();
    Ok((out, out_spec))
}

/// Result of one accepted adaptive step.
#[derive(Debug, Clone)]
pub struct Accepted {
    pub field: Field,
    pub energy: f64,
    pub dt: f64,
}

/// Tolerated energy increase per step, `1e-12 max(|E|, 1)`.
pub fn energy_slack(e: f64) -> f64 {
    1e-12 * e.abs().max(1.0)
}

/// Steps `u` with `dt`, reporting the new field and its energy. Does not
/// adapt; callers compare energies.
pub fn trial_step(u: &Field, dt: f64, m: &Model) -> Result<(Field, f64)> {
    let (f, spec) = step_parts(u, dt, m, None)?;
    let e = energy_with_spectrum(&f, &spec, m);
    Ok((f, e))
}

/// Time-step controller shared by the minimizer and the string: start at
/// `dt0 = phi/8`, halve on any energy increase above [`energy_slack`], double
/// back toward `dt0` after 50 accepted steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt0: f64,
    pub dt: f64,
    pub streak: u32,
}

impl StepControl {
    pub const GROW_AFTER: u32 = 50;
    pub const MAX_HALVINGS: u32 = 40;

    pub fn new(dt0: f64) -> Self {
        StepControl {
            dt0,
            dt: dt0,
            streak: 0,
        }
    }

    pub fn default_dt0(m: &Model) -> f64 {
        m.phi / 8.0
    }

    pub fn dt_min(&self) -> f64 {
        self.dt0 * 0.5f64.powi(Self::MAX_HALVINGS as i32)
    }

    /// Halves `dt`; fails once it drops below the floor.
    pub fn shrink(&mut self) -> Result<()> {
        self.dt *= 0.5;
        self.streak = 0;
        if self.dt < self.dt_min() {
            return Err(Error::StepCollapse {
                dt_min: self.dt_min(),
            });
        }
        Ok(())
    }

    pub fn accept(&mut self) {
        self.streak += 1;
        if self.streak >= Self::GROW_AFTER && self.dt < self.dt0 {
            self.dt = (2.0 * self.dt).min(self.dt0);
            self.streak = 0;
        }
    }

    /// Adaptive single-field step from `u` with known energy `e`.
    pub fn advance(&mut self, u: &Field, e: f64, m: &Model) -> Result<Accepted> {
        loop {
            let (f, e_new) = trial_step(u, self.dt, m)?;
            if e_new <= e + energy_slack(e) {
                let dt = self.dt;
                self.accept();
                return Ok(Accepted {
                    field: f,
                    energy: e_new,
                    dt,
                });
            }
            self.shrink()?;
        }
    }
}

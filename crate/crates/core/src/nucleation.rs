//! Sharp-interface nucleation theory: the reduced droplet energy
//! `f_xi(nu) = C1 nu^{(d-1)/d} - 4 nu + 4 xi^{-(d+1)} nu^2`, its critical
//! volumes and bifurcation values, and reference profiles on a grid.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::energy::{Model, Potential};
use crate::error::{invalid, Error, Result};
use crate::torus::{self, Field, Grid};

/// Interface cost `c0 = int_{-1}^{1} sqrt(2 G(s)) ds`.
pub fn c0(potential: &Potential) -> f64 {
    adaptive_simpson(&|s| (2.0 * potential.g(s)).max(0.0).sqrt(), -1.0, 1.0, 1e-14)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Surface area of the unit sphere in R^d (`sigma_2 = 2 pi`).
pub fn sphere_area(d: u32) -> f64 {
    assert!(d >= 1);
    // sigma_1 = 2, sigma_2 = 2 pi, sigma_{d+2} = 2 pi sigma_d / d
    let (mut s, mut k) = if d % 2 == 1 { (2.0, 1) } else { (2.0 * PI, 2) };
    while k < d {
        s *= 2.0 * PI / k as f64;
        k += 2;
    }
    s
}

/// Perimeter constant `C1 = c0 sigma_d^{1/d} d^{(d-1)/d}`.
pub fn cbar1(c0: f64, d: u32) -> f64 {
    let df = d as f64;
    c0 * sphere_area(d).powf(1.0 / df) * df.powf((df - 1.0) / df)
}

/// `f_xi` for one `(xi, d)` and interface constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpInterface {
    pub d: u32,
    pub xi: f64,
    pub c0: f64,
    pub cbar1: f64,
}

impl SharpInterface {
    pub fn new(xi: f64, d: u32) -> Result<Self> {
        Self::with_c0(xi, d, c0(&Potential::STANDARD))
    }

    pub fn with_c0(xi: f64, d: u32, c0: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid("d", format!("need d >= 2, got {d}")));
        }
        if !(xi.is_finite() && xi > 0.0) {
            return Err(invalid("xi", format!("need xi > 0, got {xi}")));
        }
        Ok(SharpInterface {
            d,
            xi,
            c0,
            cbar1: cbar1(c0, d),
        })
    }

    fn dim(&self) -> f64 {
        self.d as f64
    }

    fn confinement(&self) -> f64 {
        4.0 * self.xi.powi(-(self.d as i32 + 1))
    }

    pub fn f(&self, nu: f64) -> f64 {
        let d = self.dim();
        self.cbar1 * nu.powf((d - 1.0) / d) - 4.0 * nu + self.confinement() * nu * nu
    }

    pub fn f_prime(&self, nu: f64) -> f64 {
        if nu == 0.0 {
            return f64::INFINITY;
        }
        let d = self.dim();
        self.cbar1 * (d - 1.0) / d * nu.powf(-1.0 / d) - 4.0 + 2.0 * self.confinement() * nu
    }

    pub fn f_second(&self, nu: f64) -> f64 {
        let d = self.dim();
        -self.cbar1 * (d - 1.0) / (d * d) * nu.powf(-1.0 / d - 1.0) + 2.0 * self.confinement()
    }

    /// Unique minimizer of `f'` on `(0, inf)`; `f''` is increasing there.
    pub fn inflection(&self) -> f64 {
        let d = self.dim();
        (self.cbar1 * (d - 1.0) / (d * d) / (2.0 * self.confinement())).powf(d / (d + 1.0))
    }

    /// `(nu_s, nu_m)`, the local max and local min of `f`, when they exist.
    pub fn critical_volumes(&self) -> Option<(f64, f64)> {
        let star = self.inflection();
        if self.f_prime(star) >= 0.0 {
            return None;
        }
        let mut lo = star;
        while self.f_prime(lo) <= 0.0 {
            lo *= 0.5;
        }
        let mut hi = star;
        while self.f_prime(hi) <= 0.0 {
            hi *= 2.0;
        }
        let nu_s = bisect(|v| self.f_prime(v), lo, star, 1e-12);
        let nu_m = bisect(|v| self.f_prime(v), star, hi, 1e-12);
        Some((nu_s, nu_m))
    }
}

/// Root of `g` in `[a, b]` given a sign change, to absolute width `tol` (or
/// until the bracket stops shrinking in floating point).
pub(crate) fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut ga = g(a);
    loop {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            return m;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
}

pub fn f_xi(nu: f64, xi: f64, d: u32) -> Result<f64> {
    if !(nu >= 0.0) {
        return Err(invalid("nu", format!("need nu >= 0, got {nu}")));
    }
    Ok(SharpInterface::new(xi, d)?.f(nu))
}

pub fn f_xi_prime(nu: f64, xi: f64, d: u32) -> Result<f64> {
    if !(nu >= 0.0) {
        return Err(invalid("nu", format!("need nu >= 0, got {nu}")));
    }
    Ok(SharpInterface::new(xi, d)?.f_prime(nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoints {
    pub nu_s: f64,
    pub c_s: f64,
    pub nu_m: f64,
    pub c_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NucleationConstants {
    pub d: u32,
    pub xi: f64,
    pub c0: f64,
    pub cbar1: f64,
    pub critical: Option<CriticalPoints>,
}

impl NucleationConstants {
    pub fn exists_droplet(&self) -> bool {
        self.critical.is_some()
    }

    pub fn critical(&self) -> Result<CriticalPoints> {
        self.critical.ok_or(Error::NoDroplet { xi: self.xi })
    }
}

/// Constants for `(xi, d)` with the critical branch left empty below the
/// bifurcation.
pub fn nucleation_constants(xi: f64, d: u32) -> Result<NucleationConstants> {
    let sharp = SharpInterface::new(xi, d)?;
    let critical = sharp.critical_volumes().map(|(nu_s, nu_m)| CriticalPoints {
        nu_s,
        c_s: sharp.f(nu_s),
        nu_m,
        c_m: sharp.f(nu_m),
    });
    Ok(NucleationConstants {
        d,
        xi,
        c0: sharp.c0,
        cbar1: sharp.cbar1,
        critical,
    })
}

/// Like [`nucleation_constants`] but fails in the no-droplet regime.
pub fn critical_volumes(xi: f64, d: u32) -> Result<NucleationConstants> {
    let nc = nucleation_constants(xi, d)?;
    nc.critical()?;
    Ok(nc)
}

/// `(xi_tilde_d, xi_d)`: where the droplet local minimum of `f_xi` appears,
/// and where its value crosses zero.
pub fn bifurcation_xis(d: u32) -> Result<(f64, f64)> {
    let c0 = c0(&Potential::STANDARD);
    let sharp = |xi: f64| SharpInterface::with_c0(xi, d, c0).expect("xi stays positive");
    // min f' decreases with xi
    let min_fp = |xi: f64| {
        let s = sharp(xi);
        s.f_prime(s.inflection())
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    while min_fp(lo) <= 0.0 {
        lo *= 0.5;
    }
    while min_fp(hi) >= 0.0 {
        hi *= 2.0;
    }
    let tilde = bisect(min_fp, lo, hi, 1e-13);

    // c_m decreases with xi; just above tilde it is positive
    let c_m = |xi: f64| {
        let s = sharp(xi);
        match s.critical_volumes() {
            Some((_, nu_m)) => s.f(nu_m),
            None => s.f(s.inflection()),
        }
    };
    let mut hi = tilde * 1.01;
    while c_m(hi) >= 0.0 {
        hi *= 1.5;
    }
    let xi_d = bisect(c_m, tilde, hi, 1e-13);
    Ok((tilde, xi_d))
}

/// `+1` on the disc of area `nu` centred at sample `(n/2, n/2)`, `-1`
/// elsewhere; membership is decided at the samples.
pub fn sharp_profile_psi(nu: f64, grid: &Grid) -> Result<Field> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(invalid("nu", format!("need nu >= 0, got {nu}")));
    }
    let r = (nu / PI).sqrt();
    if 2.0 * r >= grid.side() {
        return Err(Error::DiscTooLarge {
            nu,
            side: grid.side(),
        });
    }
    let c = grid.center();
    let r2 = r * r;
    Ok(Field::from_fn(*grid, |x, y| {
        let d2 = (x - c).powi(2) + (y - c).powi(2);
        if d2 < r2 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// Smooth droplet of area about `nu`: the heteroclinic
/// `tanh((r - |x - c|) / (sqrt(2) phi))`, shifted to mean `-1 + phi`.
pub fn droplet_ansatz(nu: f64, m: &Model, grid: &Grid) -> Result<Field> {
    m.check_grid(grid)?;
    if !(nu.is_finite() && nu > 0.0) {
        return Err(invalid("nu", format!("need nu > 0, got {nu}")));
    }
    let r = (nu / PI).sqrt();
    if 2.0 * r >= grid.side() {
        return Err(Error::DiscTooLarge {
            nu,
            side: grid.side(),
        });
    }
    let c = grid.center();
    let width = SQRT_2 * m.phi;
    let raw = Field::from_fn(*grid, |x, y| {
        let dist = ((x - c).powi(2) + (y - c).powi(2)).sqrt();
        ((r - dist) / width).tanh()
    });
    let shift = m.mean_value() - torus::mean(&raw);
    Ok(raw.add_constant(shift))
}

//! Periodic grids and spectral calculus on the 2-torus.
//!
//! Sample `(i, j)` sits at `(i h, j h)` and stands for the `h x h` cell
//! centred there; the first index runs along `x`. Derivatives use the wavenumbers
//! `k = 2 pi m / side` with `m` in `-n/2+1 ..= n/2`. First derivatives drop
//! the Nyquist mode, the Laplacian keeps it.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::spectral::{self, Plan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    side: f64,
    h: f64,
    phi: f64,
    xi: f64,
}

impl Grid {
    /// Largest side count `make_grid` accepts unless told otherwise
    /// (one field is then 512 MiB).
    pub const DEFAULT_MAX_N: usize = 8192;

    pub fn new(n: usize, side: f64, phi: f64, xi: f64) -> Result<Grid> {
        if n < 4 || n % 2 != 0 {
            return Err(invalid("n", format!("need an even count >= 4, got {n}")));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(invalid("side", format!("need a positive length, got {side}")));
        }
        if !phi.is_finite() || !xi.is_finite() {
            return Err(invalid("phi/xi", "must be finite"));
        }
        Ok(Grid {
            n,
            side,
            h: side / n as f64,
            phi,
            xi,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    /// Physical coordinate `i h` of sample index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// `side / 2`, the coordinate of sample `n/2`.
    pub fn center(&self) -> f64 {
        0.5 * self.side
    }

    pub(crate) fn plan(&self) -> std::sync::Arc<Plan> {
        spectral::plan(self.n)
    }

    fn wavenumber(&self, mode: i64) -> f64 {
        2.0 * PI * mode as f64 / self.side
    }
}

/// Grid for the critical regime in d = 2: `n = 2 ceil((xi/phi)^{3/2})` samples on
/// a torus of side `phi L = xi^{3/2} phi^{-1/2}`.
pub fn make_grid(phi: f64, xi: f64) -> Result<Grid> {
    make_grid_capped(phi, xi, Grid::DEFAULT_MAX_N)
}

pub fn make_grid_capped(phi: f64, xi: f64, max_n: usize) -> Result<Grid> {
    if !(phi.is_finite() && phi > 0.0 && phi <= 0.5) {
        return Err(invalid("phi", format!("need 0 < phi <= 0.5, got {phi}")));
    }
    if !(xi.is_finite() && xi > 0.0) {
        return Err(invalid("xi", format!("need xi > 0, got {xi}")));
    }
    let cells = (xi.powf(1.5) / phi.powf(1.5)).ceil();
    if !cells.is_finite() || cells > (max_n / 2) as f64 {
        return Err(Error::GridTooLarge {
            n: if cells.is_finite() { 2 * cells as usize } else { usize::MAX },
            cap: max_n,
        });
    }
    let n = 2 * cells as usize;
    Grid::new(n.max(4), xi.powf(1.5) / phi.sqrt(), phi, xi)
}

/// Real samples on a [`Grid`], row-major with `values[i * n + j] = u(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(invalid(
                "values",
                format!("expected {} samples, got {}", grid.len(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "non-finite sample"));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Field {
        Field::from_raw(grid, vec![c; grid.len()])
    }

    /// Samples `f(x, y)` at the grid points.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        let n = grid.n;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            let x = grid.coord(i);
            for j in 0..n {
                values.push(f(x, grid.coord(j)));
            }
        }
        Field::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn add_constant(&self, c: f64) -> Field {
        self.map(|v| v + c)
    }

    /// `h^2 sum u v`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_area())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(s * self.grid.cell_area())
    }

    pub fn dist(&self, other: &Field) -> Result<f64> {
        self.dist_sq(other).map(f64::sqrt)
    }

    /// Cyclic translation: `out[i][j] = self[i - di][j - dj]`, so the sample
    /// at `(0, 0)` moves to `(di, dj)`.
    pub fn shifted(&self, di: usize, dj: usize) -> Field {
        let n = self.grid.n;
        let (di, dj) = (di % n, dj % n);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let src = ((i + n - di) % n) * n;
            let dst = i * n;
            for j in 0..n {
                out[dst + j] = self.values[src + (j + n - dj) % n];
            }
        }
        Field::from_raw(self.grid, out)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First maximizer in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        (best / self.grid.n, best % self.grid.n)
    }

    /// First minimizer in row-major order.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = k;
            }
        }
        (best / self.grid.n, best % self.grid.n)
    }

    pub(crate) fn spectrum(&self) -> Vec<Complex64> {
        self.grid.plan().forward(&self.values)
    }

    pub(crate) fn from_spectrum(grid: Grid, spec: Vec<Complex64>) -> Field {
        Field::from_raw(grid, grid.plan().inverse(spec))
    }
}

/// Applies `mult(kx, ky)` to every stored coefficient, where the wavenumbers
/// are the physical ones (Nyquist included).
pub(crate) fn apply_multiplier(
    grid: &Grid,
    spec: &mut [Complex64],
    mult: impl Fn(f64, f64) -> Complex64,
) {
    let plan = grid.plan();
    let (n, m) = (plan.n(), plan.half());
    for i in 0..n {
        let kx = grid.wavenumber(plan.mode(i));
        for q in 0..m {
            let ky = grid.wavenumber(q as i64);
            spec[i * m + q] *= mult(kx, ky);
        }
    }
}

/// `|k|^2` per stored coefficient, row-major over the half spectrum.
pub(crate) fn k_squared(grid: &Grid) -> Vec<f64> {
    let plan = grid.plan();
    let (n, m) = (plan.n(), plan.half());
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let kx = grid.wavenumber(plan.mode(i));
        for q in 0..m {
            let ky = grid.wavenumber(q as i64);
            out.push(kx * kx + ky * ky);
        }
    }
    out
}

/// `int |grad u|^2` from a spectrum of `u`, with the Nyquist first-derivative
/// coefficients dropped. Equal to the rectangle rule applied to
/// [`grad_sq_density`].
pub(crate) fn dirichlet_from_spectrum(grid: &Grid, spec: &[Complex64]) -> f64 {
    let plan = grid.plan();
    let (n, m) = (plan.n(), plan.half());
    let nyq = (n / 2) as i64;
    let mut acc = 0.0;
    for i in 0..n {
        let mode = plan.mode(i);
        let kx = if mode == nyq { 0.0 } else { grid.wavenumber(mode) };
        for q in 0..m {
            let ky = if q as i64 == nyq { 0.0 } else { grid.wavenumber(q as i64) };
            acc += plan.half_weight(q) * (kx * kx + ky * ky) * spec[i * m + q].norm_sqr();
        }
    }
    let nn = (n * n) as f64;
    acc * grid.cell_area() / nn
}

pub fn spectral_laplacian(u: &Field) -> Field {
    let mut spec = u.spectrum();
    apply_multiplier(&u.grid, &mut spec, |kx, ky| {
        Complex64::new(-(kx * kx + ky * ky), 0.0)
    });
    Field::from_spectrum(u.grid, spec)
}

/// Spectral partial derivatives `(du/dx, du/dy)`.
pub fn gradient(u: &Field) -> (Field, Field) {
    let nyq = u.grid.wavenumber((u.grid.n / 2) as i64);
    let spec = u.spectrum();
    let mut dx = spec.clone();
    apply_multiplier(&u.grid, &mut dx, |kx, _| {
        if kx == nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, kx)
        }
    });
    let mut dy = spec;
    apply_multiplier(&u.grid, &mut dy, |_, ky| {
        if ky == nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, ky)
        }
    });
    (
        Field::from_spectrum(u.grid, dx),
        Field::from_spectrum(u.grid, dy),
    )
}

/// Pointwise `|grad u|^2`.
pub fn grad_sq_density(u: &Field) -> Field {
    let (dx, dy) = gradient(u);
    Field::from_raw(
        u.grid,
        dx.values
            .iter()
            .zip(&dy.values)
            .map(|(a, b)| a * a + b * b)
            .collect(),
    )
}

pub fn integrate(u: &Field) -> f64 {
    u.values.iter().sum::<f64>() * u.grid.cell_area()
}

pub fn mean(u: &Field) -> f64 {
    u.values.iter().sum::<f64>() / u.grid.len() as f64
}

pub fn project_zero_mean(u: &Field) -> Field {
    let m = mean(u);
    u.map(|v| v - m)
}

/// `min_{x0} || u - psi(. - x0) ||^2` over all cyclic grid shifts, with the
/// minimizing shift `(di, dj)` in the convention of [`Field::shifted`].
///
/// The correlation is evaluated with FFTs; shifts whose correlation is within
/// roundoff of the best are then re-scored directly so the reported distance is
/// an exact rectangle-rule sum. Ties go to the smallest `(di, dj)`.
pub fn min_translated_l2_sq(u: &Field, psi: &Field) -> Result<(f64, (usize, usize))> {
    u.check_same_grid(psi)?;
    let grid = u.grid;
    let n = grid.n;
    let mut spec = u.spectrum();
    let psi_spec = psi.spectrum();
    for (a, b) in spec.iter_mut().zip(&psi_spec) {
        *a *= b.conj();
    }
    let corr = grid.plan().inverse(spec);

    let energy: f64 = u.values.iter().chain(&psi.values).map(|v| v * v).sum();
    let best = corr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-10 * energy.max(f64::MIN_POSITIVE);
    let candidates: Vec<usize> = (0..n * n).filter(|&k| corr[k] >= best - slack).collect();

    const DIRECT_LIMIT: usize = 64;
    let score = |k: usize| direct_shift_dist_sq(u, psi, k / n, k % n);
    let (dist, k) = if candidates.len() <= DIRECT_LIMIT {
        candidates
            .iter()
            .map(|&k| (score(k), k))
            .fold((f64::INFINITY, usize::MAX), |acc, cur| {
                if cur.0 < acc.0 {
                    cur
                } else {
                    acc
                }
            })
    } else {
        // Massive ties (e.g. a constant field): every candidate is optimal to
        // roundoff, take the first.
        (score(candidates[0]), candidates[0])
    };
    Ok((dist, (k / n, k % n)))
}

fn direct_shift_dist_sq(u: &Field, psi: &Field, di: usize, dj: usize) -> f64 {
    let n = u.grid.n;
    let mut acc = 0.0;
    for i in 0..n {
        let src = ((i + n - di) % n) * n;
        for j in 0..n {
            let d = u.values[i * n + j] - psi.values[src + (j + n - dj) % n];
            acc += d * d;
        }
    }
    acc * u.grid.cell_area()
}

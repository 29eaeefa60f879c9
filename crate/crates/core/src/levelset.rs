//! Level sets of fields on the torus: periodic marching squares, a polygon
//! convexity test, convexity scans over levels, ray monotonicity from the
//! maximum and the (H2) sign table for the right-hand side
//! `f(c) = G'(c)/phi^2 + lambda_phi/phi`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{self, Model};
use crate::error::{Error, Result};
use crate::torus::Field;

/// Cyclic shift moving the first maximizer (row-major) to `(n/2, n/2)`.
pub fn recenter_at_max(u: &Field) -> Field {
    recenter(u, u.argmax())
}

/// Cyclic shift moving the first minimizer (row-major) to `(n/2, n/2)`.
pub fn recenter_at_min(u: &Field) -> Field {
    recenter(u, u.argmin())
}

fn recenter(u: &Field, (i, j): (usize, usize)) -> Field {
    let n = u.grid().n();
    let c = n / 2;
    u.shifted((c + n - i) % n, (c + n - j) % n)
}

/// Closed polylines of `{u = level}` in domain coordinates (sample `(i, j)`
/// sits at `(i h, j h)`). A loop is
/// counter-clockwise when the region `{u > level}` is on its inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub level: f64,
    pub loops: Vec<Vec<[f64; 2]>>,
    /// Whether each loop winds around the torus instead of closing in the plane.
    pub wraps: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Axis {
    H,
    V,
}

/// Edge `(i, j, H)` joins lattice points `(i, j)` and `(i+1, j)`; `(i, j, V)`
/// joins `(i, j)` and `(i, j+1)`.
type EdgeId = (usize, usize, Axis);

/// [`contour_with`] using [`EdgeInterp::Spectral`].
pub fn contour(u: &Field, t: f64) -> Result<Contour> {
    contour_with(u, t, EdgeInterp::Spectral)
}

/// Marching squares on the sample lattice. In ambiguous cells the two high
/// corners are joined when the cell average is above the level.
pub fn contour_with(u: &Field, t: f64, interp: EdgeInterp) -> Result<Contour> {
    let (lo, hi) = (u.min(), u.max());
    if !(t > lo && t < hi) {
        return Err(Error::LevelOutOfRange {
            level: t,
            min: lo,
            max: hi,
        });
    }
    let n = u.grid().n();
    let h = u.grid().h();
    let at = |i: usize, j: usize| u.get(i % n, j % n);

    let mut next: HashMap<EdgeId, EdgeId> = HashMap::new();
    for i in 0..n {
        for j in 0..n {
            let v = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let high = v.map(|x| x > t);
            let edges: [EdgeId; 4] = [
                (i, j, Axis::H),
                ((i + 1) % n, j, Axis::V),
                (i, (j + 1) % n, Axis::H),
                (i, j, Axis::V),
            ];
            // Edge k runs from corner k to corner k+1 counter-clockwise.
            let down: Vec<usize> = (0..4).filter(|&k| high[k] && !high[(k + 1) % 4]).collect();
            let up = |k: usize| !high[k] && high[(k + 1) % 4];
            match down.len() {
                0 => {}
                1 => {
                    let d = down[0];
                    let e = (0..4).find(|&k| up(k)).expect("one up crossing");
                    next.insert(edges[d], edges[e]);
                }
                _ => {
                    let avg = v.iter().sum::<f64>() / 4.0;
                    for &d in &down {
                        let e = if avg > t { (d + 1) % 4 } else { (d + 3) % 4 };
                        debug_assert!(up(e));
                        next.insert(edges[d], edges[e]);
                    }
                }
            }
        }
    }

    let lines = Lines::new(u);
    let point = |(i, j, axis): EdgeId| -> [f64; 2] {
        let s = match interp {
            EdgeInterp::Linear => {
                let (a, b) = match axis {
                    Axis::H => (at(i, j), at(i + 1, j)),
                    Axis::V => (at(i, j), at(i, j + 1)),
                };
                (t - a) / (b - a)
            }
            EdgeInterp::Spectral => lines.root((i, j, axis), t),
        };
        match axis {
            Axis::H => [i as f64 + s, j as f64],
            Axis::V => [i as f64, j as f64 + s],
        }
    };
    let nf = n as f64;
    let unwrap_near = |p: [f64; 2], prev: [f64; 2]| -> [f64; 2] {
        let mut q = p;
        for c in 0..2 {
            q[c] += nf * ((prev[c] - q[c]) / nf).round();
        }
        q
    };

    // Deterministic loop order: start from the smallest unvisited edge id.
    let mut starts: Vec<EdgeId> = next.keys().copied().collect();
    starts.sort_by_key(|&(i, j, a)| (i, j, a == Axis::V));
    let mut seen: HashMap<EdgeId, ()> = HashMap::new();
    let mut loops = Vec::new();
    let mut wraps = Vec::new();
    for start in starts {
        if seen.contains_key(&start) {
            continue;
        }
        let mut pts: Vec<[f64; 2]> = Vec::new();
        let mut e = start;
        loop {
            seen.insert(e, ());
            let p = point(e);
            let p = match pts.last() {
                Some(&prev) => unwrap_near(p, prev),
                None => p,
            };
            pts.push(p);
            e = next[&e];
            if e == start {
                break;
            }
        }
        let first_again = unwrap_near(point(start), *pts.last().expect("nonempty"));
        let wrapped = (first_again[0] - pts[0][0]).abs() > 0.5 || (first_again[1] - pts[0][1]).abs() > 0.5;
        dedup_closed(&mut pts);
        loops.push(
            pts.into_iter()
                .map(|[a, b]| [a * h, b * h])
                .collect(),
        );
        wraps.push(wrapped);
    }
    Ok(Contour {
        level: t,
        loops,
        wraps,
    })
}

/// How crossings are placed on the edges of the marching-squares lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeInterp {
    /// Linear between the two edge samples.
    Linear,
    /// Root of the trigonometric interpolant of the grid line through the
    /// edge, so every vertex lies on the level set of the band-limited field.
    Spectral,
}

/// Trigonometric interpolants of all grid lines, computed on demand.
struct Lines<'a> {
    u: &'a Field,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    cache: RefCell<HashMap<(Axis, usize), Vec<Complex64>>>,
}

impl<'a> Lines<'a> {
    fn new(u: &'a Field) -> Self {
        let n = u.grid().n();
        Lines {
            u,
            fft: rustfft::FftPlanner::new().plan_fft_forward(n),
            cache: RefCell::new(HashMap::new()),
        }
    }

    /// Value at fractional position `s` along line `(axis, k)`: for `H`, the
    /// line of fixed second index `k`; for `V`, fixed first index `k`.
    fn eval(&self, axis: Axis, k: usize, s: f64) -> f64 {
        let n = self.u.grid().n();
        let mut cache = self.cache.borrow_mut();
        let coef = cache.entry((axis, k)).or_insert_with(|| {
            let mut buf: Vec<Complex64> = (0..n)
                .map(|q| {
                    let v = match axis {
                        Axis::H => self.u.get(q, k),
                        Axis::V => self.u.get(k, q),
                    };
                    Complex64::new(v, 0.0)
                })
                .collect();
            self.fft.process(&mut buf);
            buf
        });
        let w = 2.0 * PI * s / n as f64;
        let mut acc = coef[0].re;
        for q in 1..n / 2 {
            let (sn, cs) = (w * q as f64).sin_cos();
            acc += 2.0 * (coef[q].re * cs - coef[q].im * sn);
        }
        acc += coef[n / 2].re * (w * (n / 2) as f64).cos();
        acc / n as f64
    }

    /// Crossing of `t` on the edge starting at lattice point `(i, j)`.
    fn root(&self, (i, j, axis): EdgeId, t: f64) -> f64 {
        let (line, start) = match axis {
            Axis::H => (j, i),
            Axis::V => (i, j),
        };
        let n = self.u.grid().n();
        let (a, b) = match axis {
            Axis::H => (self.u.get(i, j), self.u.get((i + 1) % n, j)),
            Axis::V => (self.u.get(i, j), self.u.get(i, (j + 1) % n)),
        };
        let up = b > a;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if (self.eval(axis, line, start as f64 + mid) > t) == up {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn dedup_closed(pts: &mut Vec<[f64; 2]>) {
    pts.dedup();
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
}

/// Signed shoelace area; positive for counter-clockwise loops.
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let k = poly.len();
    0.5 * (0..k)
        .map(|a| {
            let p = poly[a];
            let q = poly[(a + 1) % k];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

pub fn perimeter(poly: &[[f64; 2]]) -> f64 {
    let k = poly.len();
    (0..k)
        .map(|a| {
            let p = poly[a];
            let q = poly[(a + 1) % k];
            (q[0] - p[0]).hypot(q[1] - p[1])
        })
        .sum()
}

/// True when all turns of the closed polygon have one sign (turns with
/// `|cross| <= tol * scale^2` are ignored, `scale` being the larger side of
/// the bounding box) and the total turning is `±2 pi`.
pub fn is_convex(poly: &[[f64; 2]], tol: f64) -> bool {
    let mut pts = poly.to_vec();
    dedup_closed(&mut pts);
    let k = pts.len();
    if k < 3 {
        return false;
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let scale = (xmax - xmin).max(ymax - ymin);
    if !(scale > 0.0) {
        return false;
    }
    let dead = tol * scale * scale;
    let mut sign = 0.0f64;
    let mut turning = 0.0;
    for a in 0..k {
        let p0 = pts[(a + k - 1) % k];
        let p1 = pts[a];
        let p2 = pts[(a + 1) % k];
        let e1 = [p1[0] - p0[0], p1[1] - p0[1]];
        let e2 = [p2[0] - p1[0], p2[1] - p1[1]];
        let cross = e1[0] * e2[1] - e1[1] * e2[0];
        let dot = e1[0] * e2[0] + e1[1] * e2[1];
        turning += cross.atan2(dot);
        if cross.abs() > dead {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    sign != 0.0 && (turning.abs() - 2.0 * PI).abs() <= 1e-6
}

/// Relative tolerance of the convexity test used by the scans.
pub const CONVEXITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub levels: Vec<f64>,
    pub superlevel_convex: Vec<bool>,
    pub sublevel_convex: Vec<bool>,
    /// Level has more than one contour loop (on the max-recentered field).
    pub multi_component: Vec<bool>,
    /// Highest level at which superlevel convexity fails, scanning down from
    /// the maximum; the lowest level when none fails.
    pub t_star_lo: f64,
    /// Lowest level of the convex band adjacent to the maximum; the maximum
    /// itself when that band is empty.
    pub t_star_hi: f64,
    /// Number of consecutive convex superlevels counted down from the top.
    pub top_convex_band: usize,
}

/// A level set `{u > t}` (`want_ccw`) or `{u < t}` bounded by one planar
/// convex loop.
fn single_convex(c: &Contour, want_ccw: bool) -> bool {
    if c.loops.len() != 1 || c.wraps[0] {
        return false;
    }
    let a = signed_area(&c.loops[0]);
    (a > 0.0) == want_ccw && is_convex(&c.loops[0], CONVEXITY_TOL)
}

/// Tests superlevel sets (field centred at its maximum) and sublevel sets
/// (field centred at its minimum) at `n_levels` equispaced interior levels.
pub fn convexity_scan(u: &Field, n_levels: usize) -> Result<ConvexityReport> {
    if n_levels == 0 {
        return Err(crate::error::invalid("n_levels", "need at least one level"));
    }
    let (lo, hi) = (u.min(), u.max());
    if !(hi > lo) {
        return Err(Error::LevelOutOfRange {
            level: lo,
            min: lo,
            max: hi,
        });
    }
    let levels: Vec<f64> = (1..=n_levels)
        .map(|k| lo + (hi - lo) * k as f64 / (n_levels + 1) as f64)
        .collect();
    let top = recenter_at_max(u);
    let bottom = recenter_at_min(u);
    let rows = levels
        .par_iter()
        .map(|&t| {
            let sup = contour(&top, t)?;
            let sub = contour(&bottom, t)?;
            Ok((single_convex(&sup, true), single_convex(&sub, false), sup.loops.len() > 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let superlevel_convex: Vec<bool> = rows.iter().map(|r| r.0).collect();
    let sublevel_convex = rows.iter().map(|r| r.1).collect();
    let multi_component = rows.iter().map(|r| r.2).collect();

    let top_convex_band = superlevel_convex.iter().rev().take_while(|&&c| c).count();
    let (t_star_lo, t_star_hi) = if top_convex_band == n_levels {
        (levels[0], levels[0])
    } else {
        let fail = n_levels - 1 - top_convex_band;
        let hi_edge = if top_convex_band > 0 { levels[fail + 1] } else { hi };
        (levels[fail], hi_edge)
    };
    Ok(ConvexityReport {
        levels,
        superlevel_convex,
        sublevel_convex,
        multi_component,
        t_star_lo,
        t_star_hi,
        top_convex_band,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayViolation {
    pub ray: usize,
    pub angle: f64,
    /// Distance from the maximum where the increase ends.
    pub radius: f64,
    pub increase: f64,
}

/// Periodic bilinear interpolation at fractional lattice position `(x, y)`.
fn bilinear(u: &Field, x: f64, y: f64) -> f64 {
    let n = u.grid().n() as isize;
    let (fx, fy) = (x.floor(), y.floor());
    let (sx, sy) = (x - fx, y - fy);
    let wrap = |a: isize| a.rem_euclid(n) as usize;
    let (i0, j0) = (fx as isize, fy as isize);
    let v = |di: isize, dj: isize| u.get(wrap(i0 + di), wrap(j0 + dj));
    (1.0 - sx) * ((1.0 - sy) * v(0, 0) + sy * v(0, 1)) + sx * ((1.0 - sy) * v(1, 0) + sy * v(1, 1))
}

/// Walks `n_rays` equiangular rays out of the maximum in steps of `h/2` up
/// to the edge of the centred fundamental square, and reports each step
/// where `u` grows by more than `rel_tol * (max - min)`.
pub fn ray_monotonicity(u: &Field, n_rays: usize, rel_tol: f64) -> Vec<RayViolation> {
    let c = recenter_at_max(u);
    let n = c.grid().n();
    let h = c.grid().h();
    let centre = (n / 2) as f64;
    let tol = rel_tol * (c.max() - c.min());
    let half = n as f64 / 2.0;
    (0..n_rays)
        .into_par_iter()
        .flat_map_iter(|r| {
            let angle = 2.0 * PI * r as f64 / n_rays as f64;
            let (dx, dy) = (angle.cos(), angle.sin());
            let reach = half / dx.abs().max(dy.abs());
            let steps = (reach / 0.5).floor() as usize;
            let mut prev = c.get(n / 2, n / 2);
            let mut out = Vec::new();
            for s in 1..=steps {
                let d = 0.5 * s as f64;
                let v = bilinear(&c, centre + d * dx, centre + d * dy);
                if v - prev > tol {
                    out.push(RayViolation {
                        ray: r,
                        angle,
                        radius: d * h,
                        increase: v - prev,
                    });
                }
                prev = v;
            }
            out
        })
        .collect()
}

/// `f(c) = G'(c)/phi^2 + lambda_phi/phi + lambda_omega chi'(c)/phi`.
pub fn rhs(c: f64, m: &Model, lambda_phi: f64, lambda_omega: f64) -> f64 {
    m.potential.gp(c) / (m.phi * m.phi) + lambda_phi / m.phi + lambda_omega * energy::chi_p(c, m) / m.phi
}

/// `f'(c) = G''(c)/phi^2 + lambda_omega chi''(c)/phi`.
pub fn rhs_prime(c: f64, m: &Model, lambda_omega: f64) -> f64 {
    m.potential.gpp(c) / (m.phi * m.phi) + lambda_omega * energy::chi_pp(c, m) / m.phi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Row {
    pub c: f64,
    pub f: f64,
    pub f_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Table {
    pub lambda_phi: f64,
    pub c_star: f64,
    pub rows: Vec<H2Row>,
    pub h2_holds: bool,
}

/// Signs of `f` and `f'` on `n_levels` points of `(c_star, max u)`, with
/// `lambda_phi` estimated from `u` and `lambda_omega = 0`. When
/// `c_star >= max u` the interval is empty: no rows, and (H2) holds
/// vacuously.
pub fn h2_scan(u: &Field, m: &Model, c_star: f64, n_levels: usize) -> Result<H2Table> {
    let lambda_phi = energy::lambda_phi_estimate(u, m)?;
    let top = u.max();
    if !c_star.is_finite() {
        return Err(crate::error::invalid("c_star", "must be finite"));
    }
    if c_star >= top {
        log::warn!("c_star = {c_star} is not below max u = {top}; empty (H2) scan");
    }
    let rows: Vec<H2Row> = if c_star < top {
        (1..=n_levels)
            .map(|k| {
                let c = c_star + (top - c_star) * k as f64 / (n_levels + 1) as f64;
                H2Row {
                    c,
                    f: rhs(c, m, lambda_phi, 0.0),
                    f_prime: rhs_prime(c, m, 0.0),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let h2_holds = rows.iter().all(|r| r.f > 0.0 && r.f_prime > 0.0);
    Ok(H2Table {
        lambda_phi,
        c_star,
        rows,
        h2_holds,
    })
}

/// CSV `level,loop,x,y`.
pub fn write_contours_csv<W: Write>(w: W, contours: &[Contour]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "loop", "x", "y"])?;
    for c in contours {
        for (id, lp) in c.loops.iter().enumerate() {
            for p in lp {
                out.write_record(&[
                    c.level.to_string(),
                    id.to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// CSV `level,superlevel_convex,sublevel_convex,multi_component`.
pub fn write_convexity_csv<W: Write>(w: W, r: &ConvexityReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "superlevel_convex", "sublevel_convex", "multi_component"])?;
    for k in 0..r.levels.len() {
        out.write_record(&[
            r.levels[k].to_string(),
            r.superlevel_convex[k].to_string(),
            r.sublevel_convex[k].to_string(),
            r.multi_component[k].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// CSV `c,f,f_prime`.
pub fn write_h2_csv<W: Write>(w: W, t: &H2Table) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["c", "f", "f_prime"])?;
    for r in &t.rows {
        out.write_record(&[r.c.to_string(), r.f.to_string(), r.f_prime.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// CSV `ray,angle,radius,increase`.
pub fn write_rays_csv<W: Write>(w: W, v: &[RayViolation]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["ray", "angle", "radius", "increase"])?;
    for r in v {
        out.write_record(&[
            r.ray.to_string(),
            r.angle.to_string(),
            r.radius.to_string(),
            r.increase.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Flat `key=value` summary of a convexity report.
pub fn convexity_summary(r: &ConvexityReport) -> String {
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
    format!(
        "levels={}\nsuperlevel_convex={}\nsublevel_convex={}\nmulti_component={}\ntop_convex_band={}\nt_star_lo={}\nt_star_hi={}\n",
        r.levels.len(),
        count(&r.superlevel_convex),
        count(&r.sublevel_convex),
        count(&r.multi_component),
        r.top_convex_band,
        r.t_star_lo,
        r.t_star_hi
    )
}

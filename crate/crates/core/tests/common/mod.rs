#![allow(dead_code)]

use std::f64::consts::PI;

use chcrit::{Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random trigonometric polynomial with wavenumbers up to `kmax` per axis and
/// the given mean.
pub fn band_limited(grid: Grid, seed: u64, kmax: i32, amp: f64, mean: f64) -> Field {
    let mut r = rng(seed);
    let l = grid.side();
    let mut modes = Vec::new();
    for kx in -kmax..=kmax {
        for ky in 0..=kmax {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let a: f64 = r.gen_range(-1.0..1.0);
            let b: f64 = r.gen_range(-1.0..1.0);
            modes.push((kx as f64, ky as f64, a, b));
        }
    }
    let scale = amp / (modes.len() as f64).sqrt();
    Field::from_fn(grid, |x, y| {
        let mut v = mean;
        for &(kx, ky, a, b) in &modes {
            let t = 2.0 * PI * (kx * x + ky * y) / l;
            v += scale * (a * t.cos() + b * t.sin());
        }
        v
    })
}

/// Independent uniform samples in `[lo, hi)`.
pub fn white_noise(grid: Grid, seed: u64, lo: f64, hi: f64) -> Field {
    let mut r = rng(seed);
    let values = (0..grid.len()).map(|_| r.gen_range(lo..hi)).collect();
    Field::new(grid, values).unwrap()
}

/// Zero-mean random direction of unit L2 norm.
pub fn direction(grid: Grid, seed: u64, kmax: i32) -> Field {
    let v = band_limited(grid, seed, kmax, 1.0, 0.0);
    let v = chcrit::torus::project_zero_mean(&v);
    let n = v.l2_norm();
    v.scale(1.0 / n)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull by the monotone chain, counter-clockwise, without collinear
/// points.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let k = poly.len();
    0.5 * (0..k)
        .map(|a| {
            let (p, q) = (poly[a], poly[(a + 1) % k]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

/// Oracle: a simple polygon is convex iff its area equals its hull's area.
pub fn hull_says_convex(poly: &[[f64; 2]]) -> bool {
    let hull = convex_hull(poly.to_vec());
    let (a, h) = (shoelace(poly).abs(), shoelace(&hull).abs());
    (h - a).abs() <= 1e-9 * h
}

/// Hull of a random point cloud with at least `min_vertices` vertices.
pub fn random_convex_polygon(seed: u64, min_vertices: usize) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    loop {
        let count = r.gen_range(8..60);
        let (sx, sy) = (r.gen_range(0.2..5.0), r.gen_range(0.2..5.0));
        let pts: Vec<[f64; 2]> = (0..count)
            .map(|_| [sx * r.gen_range(-1.0..1.0), sy * r.gen_range(-1.0..1.0)])
            .collect();
        let hull = convex_hull(pts);
        if hull.len() >= min_vertices {
            return hull;
        }
    }
}

/// Reflects vertex `k` through the line joining its neighbours, creating a
/// reflex vertex.
pub fn reflect_vertex(poly: &[[f64; 2]], k: usize) -> Vec<[f64; 2]> {
    let n = poly.len();
    let (a, p, b) = (poly[(k + n - 1) % n], poly[k], poly[(k + 1) % n]);
    let d = [b[0] - a[0], b[1] - a[1]];
    let t = ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1]);
    let foot = [a[0] + t * d[0], a[1] + t * d[1]];
    let mut out = poly.to_vec();
    out[k] = [2.0 * foot[0] - p[0], 2.0 * foot[1] - p[1]];
    out
}

/// Exhaustive minimum over all `n^2` cyclic shifts.
pub fn brute_force_shift(u: &Field, psi: &Field) -> (f64, (usize, usize)) {
    let n = u.grid().n();
    let mut best = (f64::INFINITY, (0, 0));
    for di in 0..n {
        for dj in 0..n {
            let d = u.dist_sq(&psi.shifted(di, dj)).unwrap();
            if d < best.0 {
                best = (d, (di, dj));
            }
        }
    }
    best
}

/// `int_{-1}^{1} sqrt(2 G)` by composite Simpson.
pub fn c0_quadrature() -> f64 {
    let k = 20_000;
    let h = 2.0 / k as f64;
    let f = |u: f64| (2.0 * (1.0 - u * u).powi(2) / 4.0).sqrt();
    let mut s = f(-1.0) + f(1.0);
    for i in 1..k {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(-1.0 + i as f64 * h);
    }
    s * h / 3.0
}

//! Simplified String Method: images of a path are advanced by plain descent
//! and then redistributed along the path, until the string stops moving. The
//! interior energy maximum is then the saddle.
//!
//! Redistribution places the new images on the old polyline so that all
//! consecutive L^2 distances (chords) are equal. For a straight path this is
//! the usual arclength interpolation; on a curved path it differs by
//! corner-cutting only, and it makes the operation idempotent.

use std::cell::RefCell;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{self, Model, StepControl};
use crate::error::{invalid, Error, Result};
use crate::torus::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StringConfig {
    /// Number of intervals `M`; the string holds `M + 1` images.
    pub m_images: usize,
    /// Initial time step; `phi/8` when unset.
    pub dt0: Option<f64>,
    pub max_outer_iters: usize,
    /// Bound on the per-iteration image displacement, divided by
    /// `dt * substeps`.
    pub tol_displacement: f64,
    /// Bound on `||grad_l2||` at the saddle image.
    pub tol_grad: f64,
    pub substeps_per_reparam: usize,
    pub pin_endpoints: bool,
    /// Budget of climbing steps for the peak image when the string settles
    /// with the saddle gradient above `tol_grad`; 0 disables climbing.
    pub climb_steps: usize,
}

impl Default for StringConfig {
    fn default() -> Self {
        StringConfig {
            m_images: 511,
            dt0: None,
            max_outer_iters: 20_000,
            tol_displacement: 5e-3,
            tol_grad: 1e-3,
            substeps_per_reparam: 1,
            pin_endpoints: false,
            climb_steps: 20_000,
        }
    }
}

impl StringConfig {
    /// Defaults with 512 images, or 256 on grids finer than 256 per side.
    pub fn for_grid(grid: &Grid) -> Self {
        StringConfig {
            m_images: if grid.n() <= 256 { 511 } else { 255 },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_images < 8 {
            return Err(invalid("m_images", format!("need >= 8 intervals, got {}", self.m_images)));
        }
        if !(self.tol_displacement > 0.0 && self.tol_grad > 0.0) {
            return Err(invalid("tolerances", "must be positive"));
        }
        if self.substeps_per_reparam == 0 {
            return Err(invalid("substeps_per_reparam", "must be at least 1"));
        }
        if let Some(dt) = self.dt0 {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(invalid("dt0", format!("need a positive step, got {dt}")));
            }
        }
        Ok(())
    }

    fn initial_control(&self, m: &Model) -> StepControl {
        StepControl::new(self.dt0.unwrap_or_else(|| StepControl::default_dt0(m)))
    }
}

#[derive(Debug, Clone)]
pub struct StringState {
    pub images: Vec<Field>,
    pub alpha: Vec<f64>,
    pub iter: u64,
    pub last_displacement: f64,
    pub saddle_index: Option<usize>,
    pub grad2_at_saddle: Option<f64>,
    /// Adaptive step state; created on first evolution.
    pub control: Option<StepControl>,
    energies: Option<Vec<f64>>,
}

impl StringState {
    /// Wraps images with uniform `alpha`.
    pub fn from_images(images: Vec<Field>) -> Result<StringState> {
        if images.len() < 2 {
            return Err(invalid("images", "a string needs at least two images"));
        }
        for u in &images[1..] {
            images[0].check_same_grid(u)?;
        }
        let m = images.len() - 1;
        Ok(StringState {
            alpha: (0..=m).map(|i| i as f64 / m as f64).collect(),
            images,
            iter: 0,
            last_displacement: f64::INFINITY,
            saddle_index: None,
            grad2_at_saddle: None,
            control: None,
            energies: None,
        })
    }

    /// Restores a checkpoint; `alpha` must start at 0, end at 1 and increase.
    pub fn from_parts(images: Vec<Field>, alpha: Vec<f64>, iter: u64) -> Result<StringState> {
        if alpha.len() != images.len() {
            return Err(invalid("alpha", "length differs from image count"));
        }
        let ok = alpha.first() == Some(&0.0)
            && alpha.last() == Some(&1.0)
            && alpha.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(invalid("alpha", "must increase strictly from 0 to 1"));
        }
        let mut s = StringState::from_images(images)?;
        s.alpha = alpha;
        s.iter = iter;
        Ok(s)
    }

    pub fn intervals(&self) -> usize {
        self.images.len() - 1
    }

    pub fn grid(&self) -> &Grid {
        self.images[0].grid()
    }

    /// Image energies, cached until the images change.
    pub fn energies(&mut self, m: &Model) -> Result<&[f64]> {
        if self.energies.is_none() {
            let e = self
                .images
                .par_iter()
                .map(|u| energy::energy(u, m))
                .collect::<Result<Vec<_>>>()?;
            self.energies = Some(e);
        }
        Ok(self.energies.as_deref().expect("just filled"))
    }

    /// Consecutive L^2 distances.
    pub fn spacings(&self) -> Vec<f64> {
        self.images
            .windows(2)
            .map(|w| w[0].dist(&w[1]).expect("images share a grid"))
            .collect()
    }

    pub fn length(&self) -> f64 {
        self.spacings().iter().sum()
    }
}

/// `images_i = (1 - i/M) a + (i/M) b`.
pub fn init_linear(a: &Field, b: &Field, m: usize) -> Result<StringState> {
    a.check_same_grid(b)?;
    if m < 1 {
        return Err(invalid("M", "need at least one interval"));
    }
    let images = (0..=m)
        .map(|i| {
            let t = i as f64 / m as f64;
            a.lincomb(1.0 - t, b, t)
        })
        .collect::<Result<Vec<_>>>()?;
    StringState::from_images(images)
}

/// Advances every image by `substeps_per_reparam` descent steps with a
/// common adaptive `dt`; any image whose energy would rise sends the whole
/// string back with `dt` halved.
pub fn evolve_images(mut s: StringState, cfg: &StringConfig, m: &Model) -> Result<StringState> {
    let mut ctl = s.control.unwrap_or_else(|| cfg.initial_control(m));
    let mut energies = s.energies(m)?.to_vec();
    let last = s.images.len() - 1;
    let frozen = |i: usize| cfg.pin_endpoints && (i == 0 || i == last);
    for _ in 0..cfg.substeps_per_reparam {
        loop {
            let dt = ctl.dt;
            let trials: Vec<Option<(Field, f64)>> = s
                .images
                .par_iter()
                .enumerate()
                .map(|(i, u)| {
                    if frozen(i) {
                        Ok(None)
                    } else {
                        energy::trial_step(u, dt, m)
                            .map(Some)
                            .map_err(|e| match e {
                                Error::BlowUp { .. } => Error::BlowUp { image: Some(i) },
                                other => other,
                            })
                    }
                })
                .collect::<Result<_>>()?;
            let rises = trials.iter().zip(&energies).any(|(t, &e)| {
                t.as_ref()
                    .is_some_and(|(_, e_new)| *e_new > e + energy::energy_slack(e))
            });
            if rises {
                ctl.shrink()?;
                continue;
            }
            for (i, t) in trials.into_iter().enumerate() {
                if let Some((u, e)) = t {
                    s.images[i] = u;
                    energies[i] = e;
                }
            }
            ctl.accept();
            break;
        }
    }
    s.control = Some(ctl);
    s.energies = Some(energies);
    Ok(s)
}

/// Redistributes the images to equal L^2 spacing along the current polyline.
/// Endpoints are kept bit for bit.
pub fn reparameterize(mut s: StringState) -> StringState {
    let count = s.images.len();
    let images = resample(&s.images, count);
    if images.is_some() {
        s.energies = None;
    }
    if let Some(images) = images {
        s.images = images;
    }
    let m = count - 1;
    s.alpha = (0..=m).map(|i| i as f64 / m as f64).collect();
    s
}

/// `count` images on the polyline through `images`, equally spaced in L^2
/// and including both ends. `None` when the polyline has zero length.
pub fn resample(images: &[Field], count: usize) -> Option<Vec<Field>> {
    assert!(images.len() >= 2 && count >= 2);
    let chain = Chain::new(images);
    let total = chain.length();
    if !(total > 0.0) {
        return None;
    }
    let intervals = count - 1;
    let points = chain.equal_chords(intervals, total);
    let last = images.len() - 1;
    let mut out: Vec<Field> = points
        .par_iter()
        .map(|&(k, t)| {
            if t == 0.0 {
                images[k].clone()
            } else {
                images[k].lincomb(1.0 - t, &images[k + 1], t).expect("shared grid")
            }
        })
        .collect();
    out.insert(0, images[0].clone());
    out.push(images[last].clone());
    Some(out)
}

/// Polyline of fields, with inner products of its segment vectors cached.
struct Chain<'a> {
    nodes: &'a [Field],
    gram: RefCell<HashMap<(usize, usize), f64>>,
    diffs: Vec<Field>,
}

/// A point `nodes[k] + t (nodes[k+1] - nodes[k])`.
type Pos = (usize, f64);

enum Shot {
    /// Interior points and the remaining distance to the end minus the chord.
    Placed(Vec<Pos>, f64),
    /// The chord ran past the end of the polyline.
    Overshoot,
}

impl<'a> Chain<'a> {
    fn new(nodes: &'a [Field]) -> Self {
        let diffs: Vec<Field> = nodes
            .par_windows(2)
            .map(|w| w[1].lincomb(1.0, &w[0], -1.0).expect("shared grid"))
            .collect();
        let diag: Vec<f64> = diffs.par_iter().map(|d| d.l2_norm_sq()).collect();
        let mut gram = HashMap::new();
        for (k, v) in diag.into_iter().enumerate() {
            gram.insert((k, k), v);
        }
        Chain {
            nodes,
            gram: RefCell::new(gram),
            diffs,
        }
    }

    fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    fn gram(&self, a: usize, b: usize) -> f64 {
        let key = (a.min(b), a.max(b));
        if let Some(&v) = self.gram.borrow().get(&key) {
            return v;
        }
        let v = self.diffs[key.0].inner(&self.diffs[key.1]).expect("shared grid");
        self.gram.borrow_mut().insert(key, v);
        v
    }

    fn length(&self) -> f64 {
        (0..self.segments()).map(|k| self.gram(k, k).sqrt()).sum()
    }

    /// First point after `from` (along the polyline) at distance `chord`.
    fn next_at(&self, from: Pos, chord: f64) -> Option<Pos> {
        let (j, s) = from;
        let target = chord * chord;
        // Offset W = sum_i w_i d_i from `from` to the start of segment k.
        let mut weights: Vec<(usize, f64)> = vec![(j, -s)];
        let mut w_sq = s * s * self.gram(j, j);
        for k in j..self.segments() {
            if k > j {
                // W grows by d_{k-1}
                let cross: f64 = weights.iter().map(|&(i, w)| w * self.gram(i, k - 1)).sum();
                w_sq += 2.0 * cross + self.gram(k - 1, k - 1);
                match weights.last_mut() {
                    Some(last) if last.0 == k - 1 => last.1 += 1.0,
                    _ => weights.push((k - 1, 1.0)),
                }
            }
            let a = self.gram(k, k);
            if a == 0.0 {
                continue;
            }
            let b: f64 = weights.iter().map(|&(i, w)| w * self.gram(i, k)).sum();
            let t0 = if k == j { s } else { 0.0 };
            let at_end = w_sq + 2.0 * b + a;
            if at_end < target {
                continue;
            }
            let c = w_sq - target;
            let disc = (b * b - a * c).max(0.0).sqrt();
            let t = if b <= 0.0 { (-b + disc) / a } else { -c / (b + disc) };
            return Some((k, t.clamp(t0, 1.0)));
        }
        None
    }

    fn dist_to_end(&self, from: Pos) -> f64 {
        let (j, s) = from;
        let last = self.segments();
        // end - from = (1 - s) d_j + sum_{i > j} d_i
        let mut w: Vec<(usize, f64)> = vec![(j, 1.0 - s)];
        w.extend((j + 1..last).map(|i| (i, 1.0)));
        let mut acc = 0.0;
        for &(a, wa) in &w {
            for &(b, wb) in &w {
                acc += wa * wb * self.gram(a, b);
            }
        }
        acc.max(0.0).sqrt()
    }

    fn shoot(&self, intervals: usize, chord: f64) -> Shot {
        let mut pos = (0, 0.0);
        let mut out = Vec::with_capacity(intervals.saturating_sub(1));
        for _ in 1..intervals {
            match self.next_at(pos, chord) {
                Some(p) => {
                    out.push(p);
                    pos = p;
                }
                None => return Shot::Overshoot,
            }
        }
        let rest = self.dist_to_end(pos) - chord;
        Shot::Placed(out, rest)
    }

    /// Interior points splitting the polyline into `intervals` equal chords.
    fn equal_chords(&self, intervals: usize, total: f64) -> Vec<Pos> {
        if intervals == 1 {
            return Vec::new();
        }
        let mut lo = 0.0;
        let mut hi = total / intervals as f64;
        let mut best: Option<Vec<Pos>> = None;
        if let Shot::Placed(pts, rest) = self.shoot(intervals, hi) {
            if rest >= 0.0 {
                return pts;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match self.shoot(intervals, mid) {
                Shot::Placed(pts, rest) if rest > 0.0 => {
                    lo = mid;
                    best = Some(pts);
                }
                Shot::Placed(pts, rest) if rest == 0.0 => return pts,
                _ => hi = mid,
            }
        }
        match best {
            Some(pts) => pts,
            None => match self.shoot(intervals, lo) {
                Shot::Placed(pts, _) => pts,
                Shot::Overshoot => unreachable!("a zero chord never overshoots"),
            },
        }
    }
}

/// Energy along the string and the saddle estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub alpha: f64,
    pub energy: f64,
    pub grad2: f64,
}

#[derive(Debug, Clone)]
pub struct Saddle {
    pub field: Field,
    pub index: usize,
    pub energy: f64,
    /// `||grad_l2||^2` at the saddle image.
    pub grad2: f64,
}

/// Saddle estimate after climbing from the peak image.
#[derive(Debug, Clone)]
pub struct RefinedSaddle {
    pub field: Field,
    pub energy: f64,
    pub grad2: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: u64,
    pub final_displacement: f64,
    pub dt: f64,
    pub profile: Vec<ProfilePoint>,
    /// Interior maximum of the main string, if the profile has one.
    pub saddle: Option<(usize, f64, f64)>,
    pub refined: Option<RefinedSaddle>,
}

impl ConvergenceReport {
    /// Saddle gradient squared, after climbing when that ran.
    pub fn best_grad2(&self) -> Option<f64> {
        self.refined
            .as_ref()
            .map(|r| r.grad2)
            .or(self.saddle.map(|s| s.2))
    }
}

fn energy_tol(energies: &[f64]) -> f64 {
    let scale = energies.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    1e-9 * scale
}

/// Index of the interior energy maximum, if it rises above both endpoints.
fn interior_peak(energies: &[f64]) -> Option<usize> {
    let last = energies.len() - 1;
    if last < 2 {
        return None;
    }
    let (idx, &peak) = energies[1..last]
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, e)| {
            if *e > *acc.1 {
                (i, e)
            } else {
                acc
            }
        });
    let tol = energy_tol(energies);
    if peak > energies[0].max(energies[last]) + tol {
        Some(idx + 1)
    } else {
        None
    }
}

/// The interior energy maximum of the string.
pub fn extract_saddle(s: &mut StringState, m: &Model) -> Result<Saddle> {
    let energies = s.energies(m)?.to_vec();
    let index = interior_peak(&energies).ok_or(Error::NoSaddle)?;
    let tol = energy_tol(&energies);
    let local_max = (1..energies.len() - 1)
        .filter(|&i| energies[i] > energies[i - 1] + tol && energies[i] >= energies[i + 1] + tol)
        .count();
    if local_max > 1 {
        log::warn!("energy profile has {local_max} interior local maxima; taking the highest");
    }
    let field = s.images[index].clone();
    let grad2 = energy::grad_l2(&field, m)?.l2_norm_sq();
    Ok(Saddle {
        energy: energies[index],
        field,
        index,
        grad2,
    })
}

/// Energy and `||grad_l2||^2` for every image.
pub fn energy_profile(s: &mut StringState, m: &Model) -> Result<Vec<ProfilePoint>> {
    let energies = s.energies(m)?.to_vec();
    let grads = s
        .images
        .par_iter()
        .map(|u| energy::grad_l2(u, m).map(|g| g.l2_norm_sq()))
        .collect::<Result<Vec<_>>>()?;
    Ok(s.alpha
        .iter()
        .zip(energies)
        .zip(grads)
        .map(|((&alpha, energy), grad2)| ProfilePoint {
            alpha,
            energy,
            grad2,
        })
        .collect())
}

/// Outcome of one evolve/reparameterize sweep.
fn outer_iteration(s: StringState, cfg: &StringConfig, m: &Model) -> Result<StringState> {
    let before = s.images.clone();
    let mut s = reparameterize(evolve_images(s, cfg, m)?);
    s.last_displacement = s
        .images
        .par_iter()
        .zip(before.par_iter())
        .map(|(a, b)| a.dist(b).expect("shared grid"))
        .reduce(|| 0.0, f64::max);
    s.iter += 1;
    let energies = s.energies(m)?.to_vec();
    s.saddle_index = interior_peak(&energies);
    s.grad2_at_saddle = match s.saddle_index {
        Some(i) => Some(energy::grad_l2(&s.images[i], m)?.l2_norm_sq()),
        None => None,
    };
    Ok(s)
}

fn settled(s: &StringState, cfg: &StringConfig, disp_tol: f64) -> bool {
    let dt = s.control.map(|c| c.dt).unwrap_or(f64::NAN);
    s.last_displacement < disp_tol * dt * cfg.substeps_per_reparam as f64
}

/// Alternates [`evolve_images`] and [`reparameterize`] until the string stops
/// moving and the saddle gradient is within tolerance, or the iteration
/// budget runs out (the state is then returned flagged as not converged).
pub fn run_string(
    s: StringState,
    cfg: &StringConfig,
    m: &Model,
) -> Result<(StringState, ConvergenceReport)> {
    run_string_with(s, cfg, m, |_| Ok(()))
}

/// [`run_string`] with a hook called after every outer iteration, at the
/// reparameterization barrier (used for checkpoints).
pub fn run_string_with(
    mut s: StringState,
    cfg: &StringConfig,
    m: &Model,
    mut on_iter: impl FnMut(&StringState) -> Result<()>,
) -> Result<(StringState, ConvergenceReport)> {
    cfg.validate()?;
    m.check_grid(s.grid())?;
    let tol_grad2 = cfg.tol_grad * cfg.tol_grad;
    let mut settled_now = false;
    let mut done = 0;
    while done < cfg.max_outer_iters {
        s = outer_iteration(s, cfg, m)?;
        done += 1;
        on_iter(&s)?;
        if settled(&s, cfg, cfg.tol_displacement) {
            settled_now = true;
            break;
        }
    }

    let mut refined = None;
    let mut grad_ok = match s.grad2_at_saddle {
        None => true,
        Some(g2) => g2 <= tol_grad2,
    };
    if settled_now && !grad_ok && cfg.climb_steps > 0 {
        let r = climb_saddle(&mut s, cfg, m)?;
        grad_ok = r.grad2 <= tol_grad2;
        refined = Some(r);
    }
    if settled_now && !grad_ok {
        log::warn!("string settled but the saddle gradient is above tolerance");
    }

    let profile = energy_profile(&mut s, m)?;
    let saddle = s
        .saddle_index
        .map(|i| (i, profile[i].energy, profile[i].grad2));
    let report = ConvergenceReport {
        converged: settled_now && grad_ok,
        iterations: s.iter,
        final_displacement: s.last_displacement,
        dt: s.control.map(|c| c.dt).unwrap_or(f64::NAN),
        profile,
        saddle,
        refined,
    };
    Ok((s, report))
}

/// Climbing image: starting from the peak image, descends with the gradient
/// component along the string tangent `tau` reversed,
/// `du/dt = -(g - 2 <g, tau> tau)`, which turns the saddle into an attractor.
/// Any fixed point has `<g, tau> = 2 <g, tau>`, hence `g = 0`. Runs until
/// `||g|| <= tol_grad / 10` or `climb_steps` is spent, and returns the iterate
/// with the smallest gradient.
pub fn climb_saddle(s: &mut StringState, cfg: &StringConfig, m: &Model) -> Result<RefinedSaddle> {
    let top = extract_saddle(s, m)?;
    let tangent = s.images[top.index + 1].lincomb(1.0, &s.images[top.index - 1], -1.0)?;
    let norm = tangent.l2_norm();
    if !(norm > 0.0) {
        return Err(Error::NoSaddle);
    }
    let tau = tangent.scale(1.0 / norm);
    let mut dt = s.control.map(|c| c.dt).unwrap_or_else(|| cfg.initial_control(m).dt);
    let target = (0.1 * cfg.tol_grad).powi(2);
    let mut best = RefinedSaddle {
        field: top.field.clone(),
        energy: top.energy,
        grad2: top.grad2,
        steps: 0,
    };
    let mut u = top.field;
    let mut halvings = 0;
    for step in 1..=cfg.climb_steps {
        let g = energy::grad_l2(&u, m)?;
        let g2 = g.l2_norm_sq();
        if g2 < best.grad2 {
            best = RefinedSaddle {
                field: u.clone(),
                energy: energy::energy(&u, m)?,
                grad2: g2,
                steps: step - 1,
            };
        }
        if g2 <= target {
            break;
        }
        if g2 > 100.0 * best.grad2 {
            // Diverging: restart from the best iterate with a smaller step.
            halvings += 1;
            if halvings > StepControl::MAX_HALVINGS {
                break;
            }
            dt *= 0.5;
            u = best.field.clone();
            continue;
        }
        let push = tau.scale(-2.0 * g.inner(&tau)?);
        u = energy::forced_step(&u, &push, dt, m)?;
    }
    Ok(best)
}

//! Steepest descent to a local minimizer.

use serde::{Deserialize, Serialize};

use crate::energy::{self, Model, StepControl};
use crate::error::Result;
use crate::torus::Field;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxConfig {
    /// Initial (and maximal) time step; `phi/8` when unset.
    pub dt0: Option<f64>,
    /// Bound on `||grad_l2||_{L^2}`.
    pub tol_grad: f64,
    /// Bound on `||u_{k+1} - u_k||_{L^2} / dt`.
    pub tol_displacement: f64,
    pub max_steps: usize,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            dt0: None,
            tol_grad: 1e-3,
            tol_displacement: 5e-3,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxReport {
    pub field: Field,
    pub energy: f64,
    pub grad_norm: f64,
    pub displacement_rate: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Descends from `u0` until both tolerances hold. The stopping test is made
/// on a trial step, and the state *before* that step is returned, so a
/// converged input comes back unchanged.
pub fn relax(u0: &Field, cfg: &RelaxConfig, m: &Model) -> Result<RelaxReport> {
    relax_with(u0, cfg, m, |_, _| {})
}

/// [`relax`] with a callback `(step, energy)` after every accepted step.
pub fn relax_with(
    u0: &Field,
    cfg: &RelaxConfig,
    m: &Model,
    mut on_step: impl FnMut(usize, f64),
) -> Result<RelaxReport> {
    let mut ctl = StepControl::new(cfg.dt0.unwrap_or_else(|| StepControl::default_dt0(m)));
    let mut u = u0.clone();
    let mut e = energy::energy(&u, m)?;
    let mut rate = f64::INFINITY;
    for step in 0..=cfg.max_steps {
        let next = ctl.advance(&u, e, m)?;
        rate = next.field.dist(&u)? / next.dt;
        if rate < cfg.tol_displacement {
            let grad_norm = energy::grad_l2(&u, m)?.l2_norm();
            if grad_norm <= cfg.tol_grad {
                return Ok(RelaxReport {
                    field: u,
                    energy: e,
                    grad_norm,
                    displacement_rate: rate,
                    steps: step,
                    converged: true,
                });
            }
        }
        if step == cfg.max_steps {
            break;
        }
        u = next.field;
        e = next.energy;
        on_step(step + 1, e);
    }
    Ok(RelaxReport {
        grad_norm: energy::grad_l2(&u, m)?.l2_norm(),
        field: u,
        energy: e,
        displacement_rate: rate,
        steps: cfg.max_steps,
        converged: false,
    })
}

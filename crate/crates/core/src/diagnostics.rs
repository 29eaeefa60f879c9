//! Observables of a computed critical point measured against the
//! sharp-interface predictions, and log2 rate tables across phi.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{self, Model};
use crate::error::{invalid, Error, Result};
use crate::nucleation::{self, NucleationConstants};
use crate::torus::{self, Field};

/// `h^2` times the number of samples in the closed interfacial band.
pub fn interfacial_measure(u: &Field, m: &Model) -> f64 {
    let (lo, hi) = m.interfacial_band();
    let count = u.values().iter().filter(|&&v| lo <= v && v <= hi).count();
    count as f64 * u.grid().cell_area()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Minimizer,
    Saddle,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Minimizer => "minimizer",
            Kind::Saddle => "saddle",
        })
    }
}

impl FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Kind> {
        match s {
            "minimizer" => Ok(Kind::Minimizer),
            "saddle" => Ok(Kind::Saddle),
            _ => Err(invalid("kind", format!("expected minimizer or saddle, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservablesRow {
    pub phi: f64,
    pub kind: Kind,
    pub interfacial: f64,
    pub energy_gap: f64,
    pub nu_gap: f64,
    pub l2_gap: f64,
    /// `||grad_l2(u)||^2`.
    pub error: f64,
}

/// Compares `u` with `(c, nu, Psi)` of the droplet minimum or the saddle,
/// depending on `kind`.
pub fn observables_row(u: &Field, kind: Kind, m: &Model, nc: &NucleationConstants) -> Result<ObservablesRow> {
    m.check_grid(u.grid())?;
    let cp = nc.critical()?;
    let (c_ref, nu_ref) = match kind {
        Kind::Minimizer => (cp.c_m, cp.nu_m),
        Kind::Saddle => (cp.c_s, cp.nu_s),
    };
    let psi = nucleation::sharp_profile_psi(nu_ref, u.grid())?;
    let (l2_gap, _) = torus::min_translated_l2_sq(u, &psi)?;
    Ok(ObservablesRow {
        phi: m.phi,
        kind,
        interfacial: interfacial_measure(u, m),
        energy_gap: (energy::energy(u, m)? - c_ref).abs(),
        nu_gap: (energy::nu_volume(u, m)? - nu_ref).abs(),
        l2_gap,
        error: energy::grad_l2(u, m)?.l2_norm_sq(),
    })
}

pub const OBSERVABLES: [&str; 5] = ["interfacial", "energy_gap", "nu_gap", "l2_gap", "error"];

impl ObservablesRow {
    pub fn get(&self, obs: &str) -> Option<f64> {
        Some(match obs {
            "interfacial" => self.interfacial,
            "energy_gap" => self.energy_gap,
            "nu_gap" => self.nu_gap,
            "l2_gap" => self.l2_gap,
            "error" => self.error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    /// The smaller phi of the pair.
    pub phi: f64,
    pub obs: String,
    /// `log2(value at 2 phi / value at phi)`; `None` when either is zero.
    pub log2_ratio: Option<f64>,
}

/// Log2 ratios of each observable between neighbouring rows; rows must be
/// sorted by decreasing phi, each half the previous.
pub fn rate_table(rows: &[ObservablesRow]) -> Result<Vec<RateEntry>> {
    for w in rows.windows(2) {
        let ratio = w[0].phi / w[1].phi;
        if (ratio - 2.0).abs() > 1e-9 {
            return Err(Error::RateSpacing {
                hi: w[0].phi,
                lo: w[1].phi,
            });
        }
    }
    let mut out = Vec::new();
    for w in rows.windows(2) {
        for obs in OBSERVABLES {
            let a = w[0].get(obs).expect("known observable");
            let b = w[1].get(obs).expect("known observable");
            let log2_ratio = (a != 0.0 && b != 0.0).then(|| (a / b).log2());
            out.push(RateEntry {
                phi: w[1].phi,
                obs: obs.to_string(),
                log2_ratio,
            });
        }
    }
    Ok(out)
}

/// CSV `phi,kind,interfacial,energy_gap,nu_gap,l2_gap,error`.
pub fn write_rows_csv<W: Write>(w: W, rows: &[ObservablesRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["phi", "kind", "interfacial", "energy_gap", "nu_gap", "l2_gap", "error"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(r: R) -> Result<Vec<ObservablesRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// CSV `phi,obs,log2_ratio`, blank where the ratio is undefined.
pub fn write_rates_csv<W: Write>(w: W, rates: &[RateEntry]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["phi", "obs", "log2_ratio"])?;
    for e in rates {
        out.write_record(&[
            e.phi.to_string(),
            e.obs.clone(),
            e.log2_ratio.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

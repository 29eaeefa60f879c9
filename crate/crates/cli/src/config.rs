//! Run configuration: a flat `key=value` file overridden by flags of the
//! same names.
//!
//! Keys (defaults in brackets):
//!
//! | key | meaning |
//! |---|---|
//! | `phi` | interface width [0.4] |
//! | `xi` | scaled torus size [2.3] |
//! | `images` | string intervals M [511, or 255 above 256 samples per side] |
//! | `dt0` | initial time step [phi/8] |
//! | `tol-disp` | displacement tolerance [5e-3] |
//! | `tol-grad` | gradient tolerance [1e-3] |
//! | `max-iters` | descent steps (minimize) or outer iterations (string) [200000 / 20000] |
//! | `out` | output directory [out] |
//! | `resume` | CHF1 (minimize) or CHS1 (string) to continue from |
//! | `levels` | levels per geometry scan [20] |
//! | `rays` | rays for the monotonicity check [64] |
//! | `workers` | worker threads [all cores] |
//! | `seed` | RNG seed for `init-noise` [0] |
//! | `init-noise` | amplitude of uniform noise added to the initial droplet [0] |
//! | `input` | CHF1 field for diagnose and geometry |
//! | `kind` | `minimizer` or `saddle` [minimizer for diagnose/table] |
//! | `endpoint-b` | CHF1 field for the far end of the string [droplet ansatz] |
//! | `c-star` | lower end of the (H2) interval [0.6] |
//! | `checkpoint-every` | outer iterations between string checkpoints [50] |
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chcrit::Kind;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub phi: f64,
    pub xi: f64,
    pub images: Option<usize>,
    pub dt0: Option<f64>,
    pub tol_disp: f64,
    pub tol_grad: f64,
    pub max_iters: Option<usize>,
    pub out: PathBuf,
    pub resume: Option<PathBuf>,
    pub levels: usize,
    pub rays: usize,
    pub workers: Option<usize>,
    pub seed: u64,
    pub init_noise: f64,
    pub input: Option<PathBuf>,
    pub kind: Option<Kind>,
    pub endpoint_b: Option<PathBuf>,
    pub c_star: f64,
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            phi: 0.4,
            xi: 2.3,
            images: None,
            dt0: None,
            tol_disp: 5e-3,
            tol_grad: 1e-3,
            max_iters: None,
            out: PathBuf::from("out"),
            resume: None,
            levels: 20,
            rays: 64,
            workers: None,
            seed: 0,
            init_noise: 0.0,
            input: None,
            kind: None,
            endpoint_b: None,
            c_star: 0.6,
            checkpoint_every: 50,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("bad value {value:?} for {key}: {e}"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "phi" => self.phi = parse(key, value)?,
            "xi" => self.xi = parse(key, value)?,
            "images" => self.images = Some(parse(key, value)?),
            "dt0" => self.dt0 = Some(parse(key, value)?),
            "tol-disp" => self.tol_disp = parse(key, value)?,
            "tol-grad" => self.tol_grad = parse(key, value)?,
            "max-iters" => self.max_iters = Some(parse(key, value)?),
            "out" => self.out = PathBuf::from(value),
            "resume" => self.resume = Some(PathBuf::from(value)),
            "levels" => self.levels = parse(key, value)?,
            "rays" => self.rays = parse(key, value)?,
            "workers" => self.workers = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "init-noise" => self.init_noise = parse(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "kind" => self.kind = Some(parse(key, value)?),
            "endpoint-b" => self.endpoint_b = Some(PathBuf::from(value)),
            "c-star" => self.c_star = parse(key, value)?,
            "checkpoint-every" => self.checkpoint_every = parse(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value", no + 1))?;
            self.set(k.trim(), v.trim())
                .with_context(|| format!("line {}", no + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_str(&text)
            .with_context(|| format!("in {}", path.display()))
    }

    /// Every set key in a fixed order, in the file syntax.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Path| p.display().to_string();
        let mut kv = vec![
            ("phi", self.phi.to_string()),
            ("xi", self.xi.to_string()),
        ];
        let opt = [
            ("images", self.images.map(|v| v.to_string())),
            ("dt0", self.dt0.map(|v| v.to_string())),
        ];
        kv.extend(opt.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
        kv.push(("tol-disp", self.tol_disp.to_string()));
        kv.push(("tol-grad", self.tol_grad.to_string()));
        let opt = [
            ("max-iters", self.max_iters.map(|v| v.to_string())),
            ("out", Some(path(&self.out))),
            ("resume", self.resume.as_deref().map(path)),
            ("levels", Some(self.levels.to_string())),
            ("rays", Some(self.rays.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
            ("seed", Some(self.seed.to_string())),
            ("init-noise", Some(self.init_noise.to_string())),
            ("input", self.input.as_deref().map(path)),
            ("kind", self.kind.map(|k| k.to_string())),
            ("endpoint-b", self.endpoint_b.as_deref().map(path)),
            ("c-star", Some(self.c_star.to_string())),
            ("checkpoint-every", Some(self.checkpoint_every.to_string())),
        ];
        kv.extend(opt.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            bail!("phi must lie in (0, 1), got {}", self.phi);
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            bail!("xi must be positive, got {}", self.xi);
        }
        if let Some(m) = self.images {
            if m < 8 {
                bail!("images must be at least 8, got {m}");
            }
        }
        if let Some(dt) = self.dt0 {
            if !(dt.is_finite() && dt > 0.0) {
                bail!("dt0 must be positive, got {dt}");
            }
        }
        if !(self.tol_disp > 0.0 && self.tol_grad > 0.0) {
            bail!("tolerances must be positive");
        }
        if self.levels == 0 || self.rays == 0 {
            bail!("levels and rays must be at least 1");
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            bail!("init-noise must be non-negative, got {}", self.init_noise);
        }
        if self.checkpoint_every == 0 {
            bail!("checkpoint-every must be at least 1");
        }
        if !self.c_star.is_finite() {
            bail!("c-star must be finite");
        }
        Ok(())
    }
}

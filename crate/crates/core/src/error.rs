use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid of {n}x{n} samples exceeds the cap of {cap} per side")]
    GridTooLarge { n: usize, cap: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field grid (phi={grid_phi}, xi={grid_xi}) does not match model (phi={model_phi}, xi={model_xi})")]
    ModelMismatch {
        grid_phi: f64,
        grid_xi: f64,
        model_phi: f64,
        model_xi: f64,
    },

    #[error("non-finite values after descent step{}", image.map(|i| format!(" in image {i}")).unwrap_or_default())]
    BlowUp { image: Option<usize> },

    #[error("adaptive time step fell below {dt_min:e} without an energy decrease")]
    StepCollapse { dt_min: f64 },

    #[error("no droplet regime: f' has no positive root pair at xi={xi}")]
    NoDroplet { xi: f64 },

    #[error("no saddle: the energy profile peaks at an endpoint")]
    NoSaddle,

    #[error("disc of volume {nu} does not fit in a torus of side {side}")]
    DiscTooLarge { nu: f64, side: f64 },

    #[error("level {level} outside the open range ({min}, {max})")]
    LevelOutOfRange { level: f64, min: f64, max: f64 },

    #[error("rate table rows must be sorted by descending phi with ratio 2 (got {hi} then {lo})")]
    RateSpacing { hi: f64, lo: f64 },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

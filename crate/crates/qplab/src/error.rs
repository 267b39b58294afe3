use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operation requires a nonempty site set")]
    EmptySet,

    #[error("block alignment exceeded its margin of {margin} (doubled units) after absorbing {absorbed} blocks")]
    EnlargeMarginExceeded { margin: i64, absorbed: usize },

    #[error("index sets do not compose: left has {left} columns, right has {right} rows")]
    IndexMismatch { left: usize, right: usize },

    #[error("matrix is singular to working precision (smallest pivot {pivot:.3e})")]
    NearSingular { pivot: f64 },

    #[error("adjugate refused for size {size} (cap {cap}): cofactor cost grows too fast")]
    AdjugateCap { size: usize, cap: usize },

    #[error("Schur block is degenerate: outer block singular (smallest pivot {pivot:.3e})")]
    SchurDegenerate { pivot: f64 },

    #[error("perturbation out of range: |N|_0 |P|_0 = {product:.3e} > 1/2")]
    PerturbationOutOfRange { product: f64 },

    #[error("potential is not cosine-type on the scanned grid: empirical kappa1 = {kappa1:.3e} <= 0")]
    NotCosineType { kappa1: f64 },

    #[error("energy {energy} has no preimage under v in the strip of half-width {half_width}")]
    EnergyOutOfRange { energy: f64, half_width: f64 },

    #[error("Fourier tail {tail:.3e} above tolerance: band cut {band_cut} too small")]
    BandCutTooSmall { band_cut: i64, tail: f64 },

    #[error("scale schedule invalid: {reason}")]
    ScheduleInvalid { reason: String },

    #[error("block geometry violated at generation {generation}: {reason}")]
    GeometryViolation { generation: usize, reason: String },

    #[error("no determinant root inside the contour (winding 0)")]
    NoRoot,

    #[error("contour contaminated: winding {winding} after radius shrinks")]
    ContourContaminated { winding: i64 },

    #[error("resonance window alternatives both fired at scale {generation}")]
    AmbiguousResonanceWindow { generation: usize },

    #[error("operator is not Hermitian (deviation {deviation:.3e}); use the Green's-function path instead")]
    NotHermitian { deviation: f64 },

    #[error("eigensolver failed to converge for index {index}")]
    EigenNoConvergence { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

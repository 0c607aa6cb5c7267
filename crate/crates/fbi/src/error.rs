use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size must be at least 1x1, got {0}x{1}")]
    EmptyGrid(usize, usize),
    #[error("momentum ({0}, {1}) does not lie on the grid")]
    OffGrid(f64, f64),
    #[error("plane-wave cutoff too small: {0} vectors (need at least 7)")]
    CutoffTooSmall(usize),
    #[error("magic coupling search failed: best residual {residual:e} at alpha = {alpha}")]
    SearchFailed { alpha: f64, residual: f64 },
    #[error("band is not flat at k = ({kx}, {ky}): residual {residual:e}")]
    NotFlat { kx: f64, ky: f64, residual: f64 },
    #[error("degenerate chiral gauge at k = ({kx}, {ky}): singular values {s0:e}, {s1:e}")]
    DegenerateGauge { kx: f64, ky: f64, s0: f64, s1: f64 },
    #[error("flavor mismatch: expected {expected}, found {found}")]
    FlavorMismatch { expected: String, found: String },
    #[error("density matrix is not an orthogonal projector (defect {0:e})")]
    NotProjector(f64),
    #[error("generator index {index} out of range for {count} generators")]
    InvalidGenerator { index: usize, count: usize },
    #[error("valley construction failed validation: residual {0:e}")]
    Convention(f64),
    #[error("no invertible form factor for step from k index {k} (best singular value {best:e})")]
    NoInvertibleShift { k: usize, best: f64 },
    #[error("singular propagation step (smallest singular value {0:e})")]
    SingularStep(f64),
    #[error("Fock space with {0} modes exceeds the dimension cap")]
    DimensionCap(usize),
    #[error("orbitals are not orthonormal (defect {0:e})")]
    NonOrthonormal(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("block structure violated (defect {0:e})")]
    BlockStructure(f64),
    #[error("theta series did not converge")]
    ThetaSeries,
}

pub type Result<T> = std::result::Result<T, Error>;

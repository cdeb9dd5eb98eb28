use thiserror::Error;

/// Everything that can go wrong between loading a complex and exporting a solve.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed mesh document: {0}")]
    Malformed(String),

    #[error("patch {patch}: dimension {dim} must satisfy 1 <= k < N = {ambient}")]
    PatchDimension { patch: usize, dim: usize, ambient: usize },

    #[error("patch {patch}: simplex {simplex} is degenerate")]
    DegenerateSimplex { patch: usize, simplex: usize },

    #[error("vertex {vertex} is shared by patches {patches:?} without a declared junction")]
    UndeclaredSharing { vertex: usize, patches: Vec<usize> },

    #[error("junction {junction}: {reason}")]
    InvalidJunction { junction: usize, reason: String },

    #[error("patch {patch}: boundary vertex {vertex} is neither on the outer boundary nor in a junction")]
    OpenBoundary { patch: usize, vertex: usize },

    #[error("unknown geometry `{0}`")]
    UnknownGeometry(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },

    #[error("invalid conductivity: {0}")]
    InvalidConductivity(String),

    #[error("patch {patch}, element {element}: coercivity {found:e} below declared lambda {lambda:e}")]
    Coercivity {
        patch: usize,
        element: usize,
        found: f64,
        lambda: f64,
    },

    #[error("patch {patch}, element {element}: no tensor available")]
    MissingTensor { patch: usize, element: usize },

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("source violates compatibility on components {components:?}")]
    Incompatible {
        components: Vec<usize>,
        defects: Vec<f64>,
        /// `int_{S_p} Q` per patch, when known.
        patch_integrals: Vec<f64>,
    },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("component {0} does not exist")]
    UnknownComponent(usize),

    #[error("test polynomial of degree {0} is unsupported (maximum 3)")]
    UnsupportedDegree(u32),

    #[error("boundary rim cannot be resolved: {0}")]
    RimUnresolved(String),

    #[error("oracle precondition violated: {0}")]
    Oracle(String),

    #[error("invalid scenario: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

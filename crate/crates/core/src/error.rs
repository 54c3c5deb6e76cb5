use thiserror::Error;

/// Errors produced by the mesh, assembly and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("evaluation point within {dist:.3e} of charge {charge} (guard radius 1e-12)")]
    Singularity { charge: usize, dist: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error("charge {charge} at distance {dist:.6} from the interface violates sigma = {sigma}")]
    SigmaViolation {
        charge: usize,
        dist: f64,
        sigma: f64,
    },

    #[error("degenerate element {element} (volume {volume:.3e})")]
    DegenerateElement { element: usize, volume: f64 },

    #[error("non-conforming mesh: {0}")]
    NonConforming(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("sinh/cosh argument {arg:.3} on element {element} exceeds the overflow guard (300)")]
    Overflow { element: usize, arg: f64 },

    #[error("linear solver reached {iters} iterations, relative residual {residual:.3e}")]
    LinearMaxIter { iters: usize, residual: f64 },

    #[error("negative curvature in CG at iteration {iter}: operator is not positive definite")]
    Indefinite { iter: usize },

    #[error("line search stalled at Newton iteration {iter} (residual {residual:.3e})")]
    LineSearchStall { iter: usize, residual: f64 },

    #[error("Newton did not converge in {iters} iterations (residual {residual:.3e})")]
    NewtonMaxIter { iters: usize, residual: f64 },

    #[error("reference energy {e_ref:.6e} exceeds E(u_{k}) = {e_k:.6e}")]
    InvalidReference { k: usize, e_ref: f64, e_k: f64 },

    #[error("AFEM iteration {iter}: {source}")]
    Afem {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

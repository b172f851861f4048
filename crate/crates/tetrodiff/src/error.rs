use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate element: |volume| = {volume:e} below tolerance {tol:e}")]
    DegenerateElement { volume: f64, tol: f64 },
    #[error("mesh build error: {0}")]
    MeshBuild(String),
    #[error("conflicting boundary values at node {node}: {a} vs {b}")]
    ConflictingBc { node: usize, a: f64, b: f64 },
    #[error("linear solver did not converge: residual {residual:e} after {iters} iterations")]
    SolverDiverged { residual: f64, iters: usize },
    #[error("Newton iteration did not converge: |F| = {residual:e} after {iters} iterations")]
    NewtonDiverged { residual: f64, iters: usize },
    #[error("evaluation at the charge location (r = 0)")]
    SingularPoint,
    #[error("analytical field is identically zero; relative difference undefined")]
    ZeroReference,
    #[error("vector length mismatch: {expected} expected, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

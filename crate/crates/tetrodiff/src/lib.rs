//! Metropolis-optimized tetrahedral mesh generation and linear finite element
//! solvers for the Laplace, diffusion and Poisson-Nernst-Planck equations,
//! with built-in analytic series oracles for verification.

pub mod builder;
pub mod delaunay;
pub mod domain;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod metropolis;
pub mod oracle;
pub mod pde;
pub mod refine;
pub mod geometry;
pub mod io;

pub use error::{Error, Result};

//! Structure-preserving neural-Galerkin solver for gradient-flow PDEs.
//!
//! Neural networks generate adaptive trial-space basis functions, the PDE is
//! projected onto that space, and energy-stable time integrators evolve the
//! coefficient ODE so the discrete free energy is non-increasing.

pub mod assembly;
pub mod basis;
pub mod cli;
pub mod config;
pub mod evolve;
pub mod fft;
pub mod integrators;
pub mod linalg;
pub mod problems;
pub mod quadrature;
pub mod reference;
pub mod training;

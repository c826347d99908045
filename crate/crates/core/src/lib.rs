//! Numerical laboratory for random trace-class perturbations of index-0
//! Fredholm operators: exact truncations of the chiral twisted bilayer
//! graphene operator and of Seeley's operator, structured Gaussian
//! perturbations, Grushin problems, and Monte Carlo tail experiments.

pub mod error;
pub mod experiments;
pub mod grushin;
pub mod lattice;
pub mod models;
pub mod perturb;
pub mod spectral;

pub use error::{Error, Result};

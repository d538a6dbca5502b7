//! Non-Markovian dynamics, bound states and entanglement of quantum emitters
//! coupled through the surface plasmon of a lossy metallic nanowire.

pub mod cache;
pub mod config;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod green;
pub mod material;
pub mod pipeline;
pub mod quadrature;
pub mod records;
pub mod special_functions;
pub mod spectrum;
pub mod spectral_matrix;

pub use error::{Error, Result};

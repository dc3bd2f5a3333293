//! Self-supervised hypergraph transformer for collaborative filtering.
//!
//! The crate bundles a small reverse-mode differentiation substrate
//! ([`autodiff`]), interaction data handling ([`data`]), the model itself
//! ([`local`], [`hypergraph`], [`augment`], [`model`]), training ([`train`])
//! and all-rank evaluation ([`eval`]).

pub mod augment;
pub mod config;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod hypergraph;
pub mod local;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Result, ShtError};
pub use rng::Rng;
pub use tensor::{DenseMatrix, Real};

//! Spectral toolkit for higher-order fractional Laplacians `(-Δ)^γ`, the
//! degenerate extension systems that realize them as Dirichlet-to-Neumann maps,
//! variable-coefficient powers `L^γ` via heat-semigroup functional calculus,
//! Carleman-weight construction, and a lab of unique-continuation experiments.
//!
//! Everything runs at desk scale on periodic tangential grids (tori), where
//! band-limited data makes the spectral operations exact and every identity
//! can be audited mode by mode.

pub mod carleman;
pub mod error;
pub mod extension;
pub mod grid;
pub mod io;
pub mod operator;
pub mod quad;
pub mod special;
pub mod ucp;

pub use error::Error;
pub use extension::{ExtensionField, ExtensionGrid};
pub use grid::{FractionalOrder, PeriodicGrid, SpectralField};
pub use operator::{DiscreteOperator, MetricField};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

//! Special functions and quadrature shared by the spectral modules.

pub mod airy;
pub mod jet;
pub mod quadrature;

pub use airy::{ai_pair, airy_ai, airy_ai_prime};
pub use jet::Jet;
pub use quadrature::GaussLegendre;

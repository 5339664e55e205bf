pub mod ensembles;
pub mod edge_stats;
pub mod error;
pub mod flow_lab;
pub mod harness;
pub mod linalg;
pub mod mc;
pub mod profile;
pub mod resolvent;
pub mod rng;
pub mod semicircle;
pub mod special;
pub mod tracy_widom;
pub mod verification;

pub use error::{LabError, Result};

//! Noisy stabilizer simulation in the Pauli-channel standard form.

pub mod bits;
pub mod circuit;
pub mod compression;
pub mod engine;
pub mod error;
pub mod f2;
pub mod gate;
pub mod graphs;
pub mod noise;
pub mod oracle;
pub mod param;
pub mod pipeline;
pub mod sampler;
pub mod pauli;
pub mod tableau;

pub use error::{Error, Result};
pub use gate::Gate;
pub use pauli::PauliString;
pub use tableau::{MeasurementKind, StabilizerTableau};

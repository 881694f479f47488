pub mod adjoint;
pub mod algebra;
pub mod asymptotics;
pub mod dilation;
pub mod error;
pub mod fixedpoints;
mod floats;
pub mod matrixcore;
pub mod models;
pub mod report;
pub mod semigroup;
pub mod states;
pub mod superop;

pub mod cli;
pub mod convolution;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod filters;
pub mod grid;
pub mod kernels;
pub mod mat2;
pub mod noise;
pub mod rng;

pub use error::{Error, Result};
pub use grid::TimeGrids;
pub use kernels::{BathSpec, KernelTable};

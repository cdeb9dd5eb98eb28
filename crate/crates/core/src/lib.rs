pub mod error;
pub mod fem;
pub mod kernel;
pub mod linalg;
pub mod mesh;
pub mod oracles;
pub mod quadrature;
pub mod scenario;
pub mod tensor;
pub mod trace;

pub use error::{Error, Result};

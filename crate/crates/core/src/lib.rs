pub mod adaptive;
pub mod bounds;
pub mod chisq;
pub mod cldr;
pub mod error;
pub mod fixtures;
pub mod law;
pub mod limitlaw;
pub mod linalg;
pub mod parser;
pub mod poly;
pub mod polymatrix;
pub mod rng;
pub mod scalar;
pub mod system;
pub mod waldstat;

pub use error::{Error, ErrorClass, ParseError, Result};
pub use linalg::Matrix;
pub use poly::{Degree, Monomial, Order, Polynomial};
pub use scalar::{Rational, Scalar};
pub use system::RestrictionSystem;

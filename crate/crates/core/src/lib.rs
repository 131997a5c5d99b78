//! Exact primal and dual values for minimal-norm deep networks.
//!
//! The crate covers deep linear networks (standard and parallel), three-layer
//! ReLU networks on rank-one and whitened data, sampling checks for deep
//! parallel ReLU duals, Caratheodory sparsification of atomic measures, and a
//! gradient-descent trainer used as an empirical oracle.
//!
//! ```
//! use nalgebra::DMatrix;
//! use netdual::linear::{self, Dataset};
//!
//! let ds = Dataset::new(
//!     DMatrix::identity(2, 2),
//!     DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
//! ).unwrap();
//! let primal = linear::primal_value_standard_linear(&ds, 3, 1.0).unwrap();
//! let dual = linear::dual_value_standard_linear(&ds, 3, 1.0).unwrap();
//! assert!(primal > dual);
//! ```

pub mod error;
pub mod linear;
pub mod matfun;
pub mod measure;
pub mod network;
pub mod relu;
pub mod sample;
pub mod trainer;

pub use error::{Error, Result};

//! Multi-area DC economic dispatch by critical region projection.

pub use nalgebra;

pub mod coordinator;
pub mod jed;
pub(crate) mod linalg;
pub mod mpqp;
pub mod netmodel;
pub mod qp;

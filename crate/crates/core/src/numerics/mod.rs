//! Dense linear algebra, seeded random streams and finite differences.

mod fd;
mod matrix;
mod ops;
mod rng;

pub use fd::{finite_difference_grad, relative_error};
pub use matrix::{count_macs, matmul, Matrix};
pub use ops::{
    argmax, col_means, elementwise, reduce, relu, row_means, row_softmax, sigmoid, softmax, Activation, Reduced,
    Reduction,
};
pub use rng::{Rng, RngState, Stream};

//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation as a node; node indices double as a
//! topological order, so [`Graph::backward`] is a single reverse sweep. The op
//! set is what recurrent cells, dense layers, discrete hazards and RBF kernels
//! need: elementwise arithmetic with row/column/scalar broadcasting, `matmul`,
//! `sigmoid`, `tanh`, `exp`, `log`, row softmax, column concat/slice, row
//! gather, reductions, and pairwise squared distances.
//!
//! ```
//! use tvsurv_autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::row(vec![1.0, 2.0, 3.0]));
//! let sq = g.square(x);
//! let loss = g.sum(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).data(), &[2.0, 4.0, 6.0]);
//! ```

mod check;
mod graph;
mod tensor;

pub use check::{grad_check, GradCheckReport, REL_FLOOR};
pub use graph::{sigmoid, Graph, Var, LOG_FLOOR};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a rank-1 or rank-2 tensor, got shape {shape:?}")]
    Rank { op: &'static str, shape: Vec<usize> },
    #[error("invalid tensor shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} needs {} elements, got {len}", .shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("slice {start}..{end} out of range for {cols} columns")]
    Slice { start: usize, end: usize, cols: usize },
    #[error("row index {index} out of range for {rows} rows")]
    RowIndex { index: usize, rows: usize },
    #[error("select_rows needs at least one index")]
    EmptySelection,
    #[error("concat needs at least one input")]
    EmptyConcat,
    #[error("backward needs a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("function value is not finite ({value})")]
    NonFinite { value: f64 },
    #[error("{0}")]
    Closure(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

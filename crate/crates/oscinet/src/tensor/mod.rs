//! Dense float64 tensors with a define-by-run reverse-mode tape.
//!
//! The op set is deliberately small: affine layers, elementwise activations,
//! constant input scaling, elementwise sums, column concatenation, the
//! branch/trunk pairing, and mean-squared-error reduction. That is exactly
//! what is needed to train the operator networks in this crate.

mod activation;
mod gradcheck;
mod matmul;
mod tape;

pub use activation::Activation;
pub use gradcheck::grad_check;
pub use matmul::{matmul_nn, matmul_nt, matmul_tn};
pub use tape::{NodeId, Tape};

use crate::error::{Error, Result};

/// Dense row-major float64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Checked constructor: the element count must match the shape and every
    /// value must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match expected {
            Some(n) if n == data.len() => {}
            _ => {
                return Err(Error::dim(format!(
                    "shape {:?} implies {:?} elements, got {}",
                    shape,
                    shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)),
                    data.len()
                )))
            }
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {bad} rejected at tensor construction"
            )));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for values produced by the engine itself.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// 2-D tensor from nested rows. Rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::dim("rows of unequal length"));
        }
        Tensor::new(
            vec![rows.len(), ncols],
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows when interpreted as a matrix ([n] counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Number of columns when interpreted as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => self.data.len(),
        }
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// True for shapes [1] and [1, 1].
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert!(self.is_matrix());
        self.data[row * self.shape[1] + col]
    }

    /// Column vector [n, 1] from a slice.
    pub fn column_vec(x: &[f64]) -> Tensor {
        Tensor::from_parts(vec![x.len(), 1], x.to_vec())
    }
}

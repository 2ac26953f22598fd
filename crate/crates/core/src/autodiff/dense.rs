use super::tape::LinearMap;
use crate::error::{Error, Result};

/// Explicit row-major matrix acting on flattened tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMap {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    rows: usize,
    cols: usize,
    matrix: Vec<f64>,
}

impl DenseMap {
    pub fn new(input_shape: &[usize], output_shape: &[usize], matrix: Vec<f64>) -> Result<Self> {
        let cols: usize = input_shape.iter().product();
        let rows: usize = output_shape.iter().product();
        if matrix.len() != rows * cols {
            return Err(Error::dim("dense map", &[rows, cols], &[matrix.len()]));
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            output_shape: output_shape.to_vec(),
            rows,
            cols,
            matrix,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.cols + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.at(i, i)).sum()
    }
}

impl LinearMap for DenseMap {
    fn input_shape(&self) -> Vec<usize> {
        self.input_shape.clone()
    }

    fn output_shape(&self) -> Vec<usize> {
        self.output_shape.clone()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.matrix.chunks(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }
}

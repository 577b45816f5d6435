//! Dense tensors: a shape vector plus a flat row-major `Vec<f64>`.

use crate::error::{Error, Result};

/// Dense multi-dimensional array of 64-bit floats.
///
/// The invariant `product(shape) == data.len()` holds for every constructed
/// value; an empty shape denotes a scalar. `requires_grad` only matters when
/// the tensor is registered on a tape as a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} implies {} elements but data has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data, requires_grad: false })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel], requires_grad: false }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel], requires_grad: false }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value], requires_grad: false }
    }

    /// Rank-1 tensor over `values`.
    pub fn vector(values: &[f64]) -> Self {
        Tensor { shape: vec![values.len()], data: values.to_vec(), requires_grad: false }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::contract(format!(
                "item() on tensor with {} elements",
                self.data.len()
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    /// Elementwise accumulate `other` into `self`. Shapes must match.
    pub fn accumulate(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "accumulate shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    /// Largest absolute elementwise difference; tolerates equal shapes only.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "max_abs_diff shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_data_len() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn scalar_is_rank_zero_with_one_element() {
        let s = Tensor::scalar(4.5);
        assert!(s.is_scalar());
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item().unwrap(), 4.5);
    }

    #[test]
    fn accumulate_adds_elementwise() {
        let mut a = Tensor::vector(&[1.0, 2.0]);
        a.accumulate(&Tensor::vector(&[0.5, 0.5])).unwrap();
        assert_eq!(a.data(), &[1.5, 2.5]);
    }
}

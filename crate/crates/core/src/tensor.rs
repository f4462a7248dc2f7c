//! Dense order-N tensors stored row-major (last index fastest).
//!
//! Modes are addressed 0-based. The mode-`n` matricization places the mode-`n`
//! index on rows; the column index is the row-major linear index of the
//! remaining indices taken in their original order, so the last remaining mode
//! varies fastest. With that convention the mode-0 matricization of a tensor is
//! a plain reshape of its storage.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Highest tensor order accepted.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_ORDER {
            return Err(Error::arg(format!(
                "tensor order must be in 1..={MAX_ORDER}, got {}",
                dims.len()
            )));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::arg(format!("extent of mode {pos} is zero")));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Product of extents before and after `mode`.
    pub(crate) fn split(&self, mode: usize) -> (usize, usize, usize) {
        let outer = self.0[..mode].iter().product();
        let inner = self.0[mode + 1..].iter().product();
        (outer, self.0[mode], inner)
    }

    /// Row-major linear offset of a multi-index. Caller guarantees bounds.
    pub fn offset(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.0).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    /// Inverse of [`Shape::offset`].
    pub fn unravel(&self, mut offset: usize, out: &mut [usize]) {
        for (slot, &d) in out.iter_mut().zip(&self.0).rev() {
            *slot = offset % d;
            offset /= d;
        }
    }

    pub(crate) fn with_extent(&self, mode: usize, extent: usize) -> Shape {
        let mut dims = self.0.clone();
        dims[mode] = extent;
        Shape(dims)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::arg(format!(
                "mode {mode} out of range for order-{} tensor",
                self.order()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::arg(format!(
                "{} values supplied for shape {:?} ({} entries)",
                values.len(),
                shape.dims(),
                shape.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite value at offset {pos}")));
        }
        Ok(DenseTensor { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.len();
        DenseTensor { shape, values: vec![0.0; n] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let n = shape.len();
        DenseTensor { shape, values: vec![value; n] }
    }

    /// Order-2 tensor holding a matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let shape = Shape::new(vec![m.nrows(), m.ncols()])?;
        let mut values = Vec::with_capacity(shape.len());
        for i in 0..m.nrows() {
            values.extend(m.row(i).iter().copied());
        }
        DenseTensor::new(shape, values)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.shape.offset(index)]
    }

    /// Matrix view of an order-2 tensor.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.order() != 2 {
            return Err(Error::arg("to_matrix requires an order-2 tensor"));
        }
        let d = self.dims();
        Ok(DMatrix::from_row_slice(d[0], d[1], &self.values))
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return Err(Error::arg("shape mismatch in tensor subtraction"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(DenseTensor { shape: self.shape.clone(), values })
    }
}

/// A partially observed tensor. Unobserved entries of `data` hold 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTensor {
    data: DenseTensor,
    mask: DenseTensor,
}

impl ObservedTensor {
    pub fn new(data: DenseTensor, mask: DenseTensor) -> Result<Self> {
        if data.shape() != mask.shape() {
            return Err(Error::arg("data and mask shapes differ"));
        }
        if mask.values().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::arg("mask entries must be 0 or 1"));
        }
        let mut data = data;
        for (v, &m) in data.values.iter_mut().zip(mask.values()) {
            if m == 0.0 {
                *v = 0.0;
            }
        }
        Ok(ObservedTensor { data, mask })
    }

    pub fn fully_observed(data: DenseTensor) -> Self {
        let mask = DenseTensor::filled(data.shape().clone(), 1.0);
        ObservedTensor { data, mask }
    }

    pub fn data(&self) -> &DenseTensor {
        &self.data
    }

    pub fn mask(&self) -> &DenseTensor {
        &self.mask
    }

    pub fn shape(&self) -> &Shape {
        self.data.shape()
    }

    pub fn is_observed(&self, offset: usize) -> bool {
        self.mask.values[offset] == 1.0
    }

    pub fn observed_count(&self) -> usize {
        self.mask.values.iter().filter(|&&m| m == 1.0).count()
    }

    pub fn missing_ratio(&self) -> f64 {
        1.0 - self.observed_count() as f64 / self.mask.values.len() as f64
    }
}

/// Mode-`mode` matricization: an `n_mode x (product of other extents)` matrix.
pub fn matricize(t: &DenseTensor, mode: usize) -> Result<DMatrix<f64>> {
    t.shape.check_mode(mode)?;
    let (outer, n, inner) = t.shape.split(mode);
    let cols = outer * inner;
    let mut m = DMatrix::zeros(n, cols);
    for o in 0..outer {
        for i in 0..n {
            let base = (o * n + i) * inner;
            for k in 0..inner {
                m[(i, o * inner + k)] = t.values[base + k];
            }
        }
    }
    Ok(m)
}

/// Inverse of [`matricize`].
pub fn fold(m: &DMatrix<f64>, mode: usize, shape: &Shape) -> Result<DenseTensor> {
    shape.check_mode(mode)?;
    let (outer, n, inner) = shape.split(mode);
    if m.nrows() != n || m.ncols() != outer * inner {
        return Err(Error::arg(format!(
            "cannot fold a {}x{} matrix into shape {:?} along mode {mode}",
            m.nrows(),
            m.ncols(),
            shape.dims()
        )));
    }
    let mut values = vec![0.0; shape.len()];
    for o in 0..outer {
        for i in 0..n {
            let base = (o * n + i) * inner;
            for k in 0..inner {
                values[base + k] = m[(i, o * inner + k)];
            }
        }
    }
    DenseTensor::new(shape.clone(), values)
}

/// n-mode product `t x_mode u` for `u` of shape `J x n_mode`.
pub fn mode_product(t: &DenseTensor, u: &DMatrix<f64>, mode: usize) -> Result<DenseTensor> {
    t.shape.check_mode(mode)?;
    let (outer, n, inner) = t.shape.split(mode);
    if u.ncols() != n {
        return Err(Error::arg(format!(
            "mode product: matrix has {} columns, mode {mode} has extent {n}",
            u.ncols()
        )));
    }
    let j_out = u.nrows();
    let mut values = vec![0.0; outer * j_out * inner];
    for o in 0..outer {
        let src = &t.values[o * n * inner..(o + 1) * n * inner];
        let dst = &mut values[o * j_out * inner..(o + 1) * j_out * inner];
        for j in 0..j_out {
            let row = &mut dst[j * inner..(j + 1) * inner];
            for i in 0..n {
                let w = u[(j, i)];
                if w == 0.0 {
                    continue;
                }
                let fiber = &src[i * inner..(i + 1) * inner];
                for (r, &s) in row.iter_mut().zip(fiber) {
                    *r += w * s;
                }
            }
        }
    }
    Ok(DenseTensor { shape: t.shape.with_extent(mode, j_out), values })
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Degrees of freedom of an `I^n` tensor with equal Tucker ranks `r`, returned as
/// `(tucker, matricized, per-slice)`.
pub fn dof_counts(extent: u64, order: u32, rank: u64) -> Result<(u128, u128, u128)> {
    if order < 2 {
        return Err(Error::arg("order must be at least 2"));
    }
    if rank < 1 || rank > extent {
        return Err(Error::arg(format!("rank {rank} must lie in 1..={extent}")));
    }
    let (i, n, r) = (extent as u128, order, rank as u128);
    let m0 = r.pow(n) + n as u128 * (r * i - r * r);
    let m1 = (i + i.pow(n - 1) - r) * r;
    let m2 = i.pow(n - 2) * (2 * r * i - r * r);
    Ok((m0, m1, m2))
}

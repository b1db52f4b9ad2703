use num_complex::Complex64;

use super::CdiffError;

/// Dense complex array stored in row-major order.
///
/// Vectors are conventionally column matrices `[n, 1]`; scalars have an empty
/// shape and hold exactly one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self, CdiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CdiffError::ShapeMismatch {
                op: "new",
                left: shape,
                right: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn filled(shape: &[usize], value: Complex64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: Complex64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Column vector `[n, 1]`.
    pub fn column(data: Vec<Complex64>) -> Self {
        Self {
            shape: vec![data.len(), 1],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, CdiffError> {
        Self::new(vec![rows, cols], data)
    }

    /// Real-valued tensor with zero imaginary parts.
    pub fn from_real(shape: &[usize], values: &[f64]) -> Result<Self, CdiffError> {
        Self::new(
            shape.to_vec(),
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    /// Entry `(i, j)` of a rank-2 tensor.
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        let cols = self.cols();
        self.data[i * cols + j] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Squared Frobenius norm.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Real inner product `Re Σ conj(a) b`.
    pub fn real_inner(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Elementwise combination; shapes must already agree.
    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        self.map(|z| z * factor)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self, CdiffError> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    /// Plain transpose of a rank-2 tensor (no conjugation).
    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut data = Vec::with_capacity(self.len());
        for j in 0..c {
            for i in 0..r {
                data.push(self.data[i * c + j]);
            }
        }
        Self {
            shape: vec![c, r],
            data,
        }
    }

    /// Conjugate transpose of a rank-2 tensor.
    pub fn adjoint(&self) -> Self {
        let mut t = self.transpose();
        for z in &mut t.data {
            *z = z.conj();
        }
        t
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self, CdiffError> {
        if self.rank() != 2 || other.rank() != 2 || self.cols() != other.rows() {
            return Err(CdiffError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (n, k, m) = (self.rows(), self.cols(), other.cols());
        let mut out = vec![Complex64::new(0.0, 0.0); n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let rhs = &other.data[p * m..(p + 1) * m];
                for (o, b) in row.iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Column-major vectorisation of a rank-2 tensor, as a plain vector.
    pub fn vec_column_major(&self) -> Vec<Complex64> {
        self.transpose().data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn shape_must_match_data() {
        assert!(ComplexTensor::new(vec![2, 3], vec![c(0.0, 0.0); 5]).is_err());
        assert!(ComplexTensor::new(vec![2, 3], vec![c(0.0, 0.0); 6]).is_ok());
        assert_eq!(ComplexTensor::scalar(c(1.0, 0.0)).len(), 1);
    }

    #[test]
    fn matmul_shape_rule() {
        let a = ComplexTensor::zeros(&[2, 3]);
        let b = ComplexTensor::zeros(&[3, 4]);
        assert_eq!(a.matmul(&b).unwrap().shape(), &[2, 4]);
        assert!(b.matmul(&a).is_err());
    }

    #[test]
    fn adjoint_conjugates() {
        let a = ComplexTensor::matrix(1, 2, vec![c(1.0, 2.0), c(3.0, -4.0)]).unwrap();
        let h = a.adjoint();
        assert_eq!(h.shape(), &[2, 1]);
        assert_eq!(h.data(), &[c(1.0, -2.0), c(3.0, 4.0)]);
    }

    #[test]
    fn column_major_vec() {
        // [[1, 2], [3, 4]] -> [1, 3, 2, 4]
        let a = ComplexTensor::matrix(
            2,
            2,
            vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)],
        )
        .unwrap();
        let v: Vec<f64> = a.vec_column_major().iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);
    }
}

use std::fmt;

use super::AutodiffError;

/// Dense row-major tensor of `f64` values.
///
/// Every operation in this crate works on rank-2 views: a rank-0 tensor is
/// treated as `1x1` and a rank-1 tensor of length `n` as `1xn`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, AutodiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AutodiffError> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AutodiffError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(AutodiffError::Shape("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn row(values: &[f64]) -> Self {
        Self {
            shape: vec![1, values.len()],
            data: values.to_vec(),
            requires_grad: false,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        Self {
            shape: vec![values.len(), 1],
            data: values.to_vec(),
            requires_grad: false,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
            requires_grad: false,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            requires_grad: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Marks the tensor as a differentiable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// `(rows, cols)` of the rank-2 view.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => {
                let cols = *self.shape.last().unwrap_or(&1);
                (self.data.len() / cols.max(1), cols)
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = self.dims2();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            shape: vec![c, r],
            data,
            requires_grad: false,
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, AutodiffError> {
        let (n, k) = self.dims2();
        let (k2, m) = other.dims2();
        if k != k2 {
            return Err(AutodiffError::Shape(format!(
                "matmul {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(&self.data, &other.data, &mut out, n, k, m);
        Tensor::matrix(n, m, out)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

/// `out += a (n x k) * b (k x m)`. Rows of `b` are consumed four at a time
/// so each pass over an output row does four multiply-adds.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * m..(i + 1) * m];
        axpy_rows(out_row, a_row, |p| &b[p * m..(p + 1) * m]);
    }
}

/// `out += a^T * g` for `a` of `n x k` and `g` of `n x m`; `out` is `k x m`.
pub(crate) fn matmul_tn_into(a: &[f64], g: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for p in 0..k {
        let out_row = &mut out[p * m..(p + 1) * m];
        let mut q = 0;
        while q + 4 <= n {
            let (c0, c1, c2, c3) = (a[q * k + p], a[(q + 1) * k + p], a[(q + 2) * k + p], a[(q + 3) * k + p]);
            let g0 = &g[q * m..(q + 1) * m];
            let g1 = &g[(q + 1) * m..(q + 2) * m];
            let g2 = &g[(q + 2) * m..(q + 3) * m];
            let g3 = &g[(q + 3) * m..(q + 4) * m];
            for j in 0..m {
                out_row[j] += c0 * g0[j] + c1 * g1[j] + c2 * g2[j] + c3 * g3[j];
            }
            q += 4;
        }
        for q in q..n {
            let c = a[q * k + p];
            for (o, &v) in out_row.iter_mut().zip(&g[q * m..(q + 1) * m]) {
                *o += c * v;
            }
        }
    }
}

/// `out += g * b^T` for `g` of `n x m` and `b` of `k x m`; `out` is `n x k`.
pub(crate) fn matmul_nt_into(g: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    if m < 8 {
        // short dot products: cheaper to transpose the small factor
        let mut bt = vec![0.0; m * k];
        for p in 0..k {
            for j in 0..m {
                bt[j * k + p] = b[p * m + j];
            }
        }
        return matmul_into(g, &bt, out, n, m, k);
    }
    for i in 0..n {
        let g_row = &g[i * m..(i + 1) * m];
        for p in 0..k {
            out[i * k + p] += dot(g_row, &b[p * m..(p + 1) * m]);
        }
    }
}

fn axpy_rows<'a>(out_row: &mut [f64], coef: &[f64], row: impl Fn(usize) -> &'a [f64]) {
    let m = out_row.len();
    let k = coef.len();
    let mut p = 0;
    while p + 4 <= k {
        let (c0, c1, c2, c3) = (coef[p], coef[p + 1], coef[p + 2], coef[p + 3]);
        let (b0, b1, b2, b3) = (&row(p)[..m], &row(p + 1)[..m], &row(p + 2)[..m], &row(p + 3)[..m]);
        for j in 0..m {
            out_row[j] += c0 * b0[j] + c1 * b1[j] + c2 * b2[j] + c3 * b3[j];
        }
        p += 4;
    }
    for p in p..k {
        let c = coef[p];
        for (o, &v) in out_row.iter_mut().zip(row(p)) {
            *o += c * v;
        }
    }
}

/// Dot product with four independent partial sums.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let xs = x.chunks_exact(4);
    let ys = y.chunks_exact(4);
    let tail: f64 = xs.remainder().iter().zip(ys.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xs.zip(ys) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = (0..k).map(|p| a[i * k + p] * b[p * m + j]).sum();
            }
        }
        out
    }

    #[test]
    fn kernels_match_naive_products() {
        for &(n, k, m) in &[(1, 1, 1), (3, 5, 7), (9, 4, 6), (2, 13, 3)] {
            let a: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * m).map(|i| (i as f64 * 0.91).cos()).collect();
            let g: Vec<f64> = (0..n * m).map(|i| (i as f64 * 0.53).sin()).collect();
            let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-12);
            let mut out = vec![0.0; n * m];
            matmul_into(&a, &b, &mut out, n, k, m);
            assert!(close(&out, &naive(&a, &b, n, k, m)));
            let at = Tensor::matrix(n, k, a.clone()).unwrap().transpose();
            let mut out = vec![0.0; k * m];
            matmul_tn_into(&a, &g, &mut out, n, k, m);
            assert!(close(&out, &naive(at.data(), &g, k, n, m)));
            let bt = Tensor::matrix(k, m, b.clone()).unwrap().transpose();
            let mut out = vec![0.0; n * k];
            matmul_nt_into(&g, &b, &mut out, n, k, m);
            assert!(close(&out, &naive(&g, bt.data(), n, m, k)));
        }
    }

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn rank_views() {
        assert_eq!(Tensor::scalar(1.0).dims2(), (1, 1));
        assert_eq!(Tensor::new(vec![4], vec![0.0; 4]).unwrap().dims2(), (1, 4));
    }

    #[test]
    fn transpose_roundtrip() {
        let t = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let tt = t.transpose();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.data(), &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(tt.transpose(), t);
    }
}

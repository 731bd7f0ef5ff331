//! Dense row-major matrices of `f64`, the universal tensor for activations,
//! weights, and gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{}x{} matrix requires {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "ragged rows: row 0 has {} entries, row {} has {}",
                    cols,
                    i,
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: n, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Standard matrix product with 64-bit accumulation.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} . {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}

/// Euclidean norm of a vector.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_times_matrix_is_matrix() {
        let m = DenseMatrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = DenseMatrix::identity(3).matmul(&m).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn hand_product() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseMatrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let p = a.matmul(&b).unwrap();
        assert_eq!(p.values(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        let mut rng = crate::rng::RngState::new(7).stream("matmul-test");
        let a = DenseMatrix::from_vec(5, 7, rng.gaussian_vec(35, 1.0)).unwrap();
        let b = DenseMatrix::from_vec(7, 3, rng.gaussian_vec(21, 1.0)).unwrap();
        let p = a.matmul(&b).unwrap();
        // Independent naive oracle.
        let mut max_diff: f64 = 0.0;
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..7 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                max_diff = max_diff.max((acc - p.get(i, j)).abs());
            }
        }
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("4x2"), "{err}");
    }

    #[test]
    fn l2_norm_basics() {
        assert_eq!(l2_norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn l2_norm_matches_direct_formula() {
        let mut rng = crate::rng::RngState::new(3).stream("norm-test");
        let v = rng.gaussian_vec(100, 2.0);
        let oracle = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let got = l2_norm(&v);
        assert!((got - oracle).abs() / oracle < 1e-14);
    }

    #[test]
    fn matmul_associativity() {
        let mut rng = crate::rng::RngState::new(11).stream("assoc");
        let a = DenseMatrix::from_vec(3, 4, rng.gaussian_vec(12, 1.0)).unwrap();
        let b = DenseMatrix::from_vec(4, 2, rng.gaussian_vec(8, 1.0)).unwrap();
        let c = DenseMatrix::from_vec(2, 5, rng.gaussian_vec(10, 1.0)).unwrap();
        let lhs = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let rhs = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn l2_norm_absolute_homogeneity(
            v in proptest::collection::vec(-1e3f64..1e3, 1..32),
            alpha in -100.0f64..100.0,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
            let lhs = l2_norm(&scaled);
            let rhs = alpha.abs() * l2_norm(&v);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}

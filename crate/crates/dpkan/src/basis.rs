//! Univariate basis machinery: uniform B-spline grids with Cox-de Boor
//! evaluation, SiLU, the residual activation phi, and the RSWAF basis used
//! by the fasterKAN variant. Every forward op has an analytic derivative.

use crate::error::{Error, Result};

/// Uniform B-spline grid of degree `k` with `grid_size` interior intervals
/// on `[lo, hi]`. `k` extra uniformly spaced knots extend past each end,
/// giving `grid_size + k` basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineGrid {
    degree: usize,
    grid_size: usize,
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

impl BSplineGrid {
    pub fn new(grid_size: usize, degree: usize, lo: f64, hi: f64) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::Argument("grid_size must be >= 1".into()));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Argument(format!(
                "invalid spline domain [{lo}, {hi}]"
            )));
        }
        let h = (hi - lo) / grid_size as f64;
        let knots = (0..grid_size + 2 * degree + 1)
            .map(|i| lo + (i as f64 - degree as f64) * h)
            .collect();
        Ok(Self {
            degree,
            grid_size,
            lo,
            hi,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.grid_size + self.degree
    }

    /// All degree-`p` basis values at `x` (Cox-de Boor, right-limit
    /// convention at knots). Returns `grid_size + 2*degree - p` values.
    fn basis_at_degree(&self, x: f64, p: usize) -> Vec<f64> {
        let n0 = self.grid_size + 2 * self.degree;
        let t = &self.knots;
        let mut b: Vec<f64> = (0..n0)
            .map(|i| if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 })
            .collect();
        for d in 1..=p {
            for i in 0..n0 - d {
                let left = (x - t[i]) / (t[i + d] - t[i]) * b[i];
                let right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * b[i + 1];
                b[i] = left + right;
            }
        }
        b.truncate(n0 - p);
        b
    }

    /// Evaluate every basis function B_i(x), i = 0 .. grid_size + degree.
    pub fn basis(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(Error::Argument(format!("non-finite input {x}")));
        }
        let mut b = self.basis_at_degree(x, self.degree);
        b.truncate(self.num_basis());
        Ok(b)
    }

    /// d/dx of every basis function, via the degree-reduction recurrence.
    pub fn basis_derivative(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(Error::Argument(format!("non-finite input {x}")));
        }
        let k = self.degree;
        if k == 0 {
            return Ok(vec![0.0; self.num_basis()]);
        }
        let lower = self.basis_at_degree(x, k - 1);
        let t = &self.knots;
        let kf = k as f64;
        Ok((0..self.num_basis())
            .map(|i| {
                kf * (lower[i] / (t[i + k] - t[i]) - lower[i + 1] / (t[i + k + 1] - t[i + 1]))
            })
            .collect())
    }

    /// spline(x) = sum_i c_i B_i(x).
    pub fn spline_eval(&self, x: f64, coeffs: &[f64]) -> Result<f64> {
        let b = self.basis(x)?;
        dot_checked(coeffs, &b)
    }

    pub fn spline_derivative(&self, x: f64, coeffs: &[f64]) -> Result<f64> {
        let db = self.basis_derivative(x)?;
        dot_checked(coeffs, &db)
    }
}

fn dot_checked(coeffs: &[f64], basis: &[f64]) -> Result<f64> {
    if coeffs.len() != basis.len() {
        return Err(Error::Shape(format!(
            "expected {} spline coefficients, got {}",
            basis.len(),
            coeffs.len()
        )));
    }
    Ok(coeffs.iter().zip(basis).map(|(c, b)| c * b).sum())
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// SiLU: x * sigmoid(x).
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// d/dx SiLU = sigmoid(x) * (1 + x * (1 - sigmoid(x))).
pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// The residual activation phi(x) = w_b * silu(x) + w_s * spline(x).
pub fn phi_eval(x: f64, w_b: f64, w_s: f64, coeffs: &[f64], grid: &BSplineGrid) -> Result<f64> {
    Ok(w_b * silu(x) + w_s * grid.spline_eval(x, coeffs)?)
}

/// RSWAF basis grid: uniformly spaced centers on [grid_min, grid_max].
/// Basis i is 1 - tanh^2((x - center_i) * inv_denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct RswafGrid {
    centers: Vec<f64>,
    inv_denominator: f64,
}

impl RswafGrid {
    pub fn new(num_grids: usize, grid_min: f64, grid_max: f64, inv_denominator: f64) -> Result<Self> {
        if num_grids == 0 {
            return Err(Error::Argument("num_grids must be >= 1".into()));
        }
        if !(inv_denominator > 0.0) {
            return Err(Error::Argument(format!(
                "inv_denominator must be > 0, got {inv_denominator}"
            )));
        }
        let centers = if num_grids == 1 {
            vec![0.5 * (grid_min + grid_max)]
        } else {
            if !(grid_max > grid_min) {
                return Err(Error::Argument(format!(
                    "invalid RSWAF range [{grid_min}, {grid_max}]"
                )));
            }
            // Lerp form so both endpoints land exactly on the bounds.
            (0..num_grids)
                .map(|i| {
                    let t = i as f64 / (num_grids - 1) as f64;
                    grid_min * (1.0 - t) + grid_max * t
                })
                .collect()
        };
        Ok(Self {
            centers,
            inv_denominator,
        })
    }

    pub fn num_grids(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn inv_denominator(&self) -> f64 {
        self.inv_denominator
    }

    pub fn basis(&self, x: f64) -> Vec<f64> {
        self.centers
            .iter()
            .map(|c| {
                let t = ((x - c) * self.inv_denominator).tanh();
                1.0 - t * t
            })
            .collect()
    }

    pub fn basis_derivative(&self, x: f64) -> Vec<f64> {
        self.centers
            .iter()
            .map(|c| {
                let t = ((x - c) * self.inv_denominator).tanh();
                -2.0 * t * (1.0 - t * t) * self.inv_denominator
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn partition_of_unity() {
        let mut rng = RngState::new(1).stream("pou");
        for g in 2..=10 {
            for k in 1..=3 {
                let grid = BSplineGrid::new(g, k, -1.0, 1.0).unwrap();
                for _ in 0..100 {
                    let x = -1.0 + 2.0 * rng.uniform();
                    let s: f64 = grid.basis(x).unwrap().iter().sum();
                    assert!((s - 1.0).abs() < 1e-9, "g={g} k={k} x={x} sum={s}");
                }
            }
        }
    }

    #[test]
    fn degree_zero_is_indicator() {
        let grid = BSplineGrid::new(4, 0, 0.0, 4.0).unwrap();
        let b = grid.basis(1.5).unwrap();
        assert_eq!(b, vec![0.0, 1.0, 0.0, 0.0]);
        // Right-limit convention at a knot.
        let b = grid.basis(2.0).unwrap();
        assert_eq!(b, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn quadratic_center_value_is_three_quarters() {
        // Unit-spaced knots; the degree-2 basis on knots [t_i, t_i+3]
        // peaks at the middle of its support with value 3/4 (hand-unrolled
        // Cox-de Boor: N = 1/2 * 1 + 1/2 * 1/2 at the center... = 0.75).
        let grid = BSplineGrid::new(4, 2, 0.0, 4.0).unwrap();
        // Basis i=0 has support [-2, 1] (knots start at -2), center -0.5.
        let b = grid.basis(-0.5).unwrap();
        assert!((b[0] - 0.75).abs() < 1e-12, "{}", b[0]);
    }

    #[test]
    fn non_finite_input_rejected() {
        let grid = BSplineGrid::new(2, 2, -1.0, 1.0).unwrap();
        assert!(grid.basis(f64::NAN).is_err());
        assert!(grid.basis(f64::INFINITY).is_err());
    }

    #[test]
    fn nonnegativity_and_local_support() {
        let grid = BSplineGrid::new(5, 3, -1.0, 1.0).unwrap();
        let t = grid.knots();
        let k = grid.degree();
        let mut rng = RngState::new(2).stream("support");
        for _ in 0..500 {
            let x = -2.0 + 4.0 * rng.uniform();
            let b = grid.basis(x).unwrap();
            for (i, &v) in b.iter().enumerate() {
                assert!(v >= 0.0);
                if x < t[i] || x > t[i + k + 1] {
                    assert_eq!(v, 0.0, "B_{i}({x}) outside support");
                }
            }
        }
    }

    #[test]
    fn spline_eval_constant_coeffs() {
        let grid = BSplineGrid::new(3, 2, -1.0, 1.0).unwrap();
        let coeffs = vec![7.0; grid.num_basis()];
        assert!((grid.spline_eval(0.3, &coeffs).unwrap() - 7.0).abs() < 1e-9);
        let zeros = vec![0.0; grid.num_basis()];
        assert_eq!(grid.spline_eval(0.3, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn spline_eval_matches_direct_summation() {
        let grid = BSplineGrid::new(4, 3, -2.0, 2.0).unwrap();
        let mut rng = RngState::new(3).stream("coeffs");
        let coeffs = rng.gaussian_vec(grid.num_basis(), 1.0);
        for _ in 0..50 {
            let x = -2.0 + 4.0 * rng.uniform();
            let b = grid.basis(x).unwrap();
            let oracle: f64 = coeffs.iter().zip(&b).map(|(c, v)| c * v).sum();
            let got = grid.spline_eval(x, &coeffs).unwrap();
            assert!((got - oracle).abs() <= 1e-13 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn spline_eval_length_mismatch() {
        let grid = BSplineGrid::new(3, 2, -1.0, 1.0).unwrap();
        assert!(matches!(
            grid.spline_eval(0.0, &[1.0, 2.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!(silu(-1000.0).abs() < 1e-12);
        assert!((silu(1.0) - 0.7310585786).abs() < 1e-9);
        assert_eq!(silu_derivative(0.0), 0.5);
    }

    #[test]
    fn phi_eval_branches() {
        let grid = BSplineGrid::new(3, 2, -1.0, 1.0).unwrap();
        let mut rng = RngState::new(4).stream("phi");
        let coeffs = rng.gaussian_vec(grid.num_basis(), 1.0);
        let x = 0.4;
        assert_eq!(phi_eval(x, 1.0, 0.0, &coeffs, &grid).unwrap(), silu(x));
        assert_eq!(
            phi_eval(x, 0.0, 1.0, &coeffs, &grid).unwrap(),
            grid.spline_eval(x, &coeffs).unwrap()
        );
        let oracle = 2.0 * silu(x) + 3.0 * grid.spline_eval(x, &coeffs).unwrap();
        let got = phi_eval(x, 2.0, 3.0, &coeffs, &grid).unwrap();
        assert!((got - oracle).abs() <= 1e-13 * oracle.abs().max(1.0));
    }

    #[test]
    fn rswaf_values() {
        let grid = RswafGrid::new(2, -1.2, 0.2, 0.5).unwrap();
        assert_eq!(grid.centers(), &[-1.2, 0.2]);
        let b = grid.basis(-1.2);
        assert_eq!(b[0], 1.0);
        // Saturation far from a center.
        let far = grid.basis(0.2 + 20.0 / 0.5);
        assert!(far[1] < 1e-16);
        // (x - c) * inv_den = 1  ->  1 - tanh^2(1).
        let b = RswafGrid::new(1, 0.0, 0.0, 0.5).unwrap().basis(2.0);
        assert!((b[0] - 0.4199743416).abs() < 1e-9);
    }

    #[test]
    fn derivative_of_partition_of_unity_is_zero() {
        let grid = BSplineGrid::new(5, 2, -1.0, 1.0).unwrap();
        let s: f64 = grid.basis_derivative(0.37).unwrap().iter().sum();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = RngState::new(5).stream("fd");
        let h = 1e-5;
        let bgrid = BSplineGrid::new(4, 3, -1.0, 1.0).unwrap();
        let rgrid = RswafGrid::new(3, -1.2, 0.2, 0.5).unwrap();
        for _ in 0..100 {
            let x = -1.5 + 3.0 * rng.uniform();
            for i in 0..bgrid.num_basis() {
                let fd = central_diff(|x| bgrid.basis(x).unwrap()[i], x, h);
                let an = bgrid.basis_derivative(x).unwrap()[i];
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                    "bspline i={i} x={x} fd={fd} an={an}"
                );
            }
            for i in 0..rgrid.num_grids() {
                let fd = central_diff(|x| rgrid.basis(x)[i], x, h);
                let an = rgrid.basis_derivative(x)[i];
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3));
            }
            let fd = central_diff(silu, x, h);
            let an = silu_derivative(x);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3));
        }
    }

    proptest! {
        #[test]
        fn spline_eval_is_linear_in_coeffs(
            x in -0.99f64..0.99,
            alpha in -5.0f64..5.0,
            beta in -5.0f64..5.0,
            seed in 0u64..1000,
        ) {
            let grid = BSplineGrid::new(3, 2, -1.0, 1.0).unwrap();
            let mut rng = RngState::new(seed).stream("lin");
            let c = rng.gaussian_vec(grid.num_basis(), 1.0);
            let d = rng.gaussian_vec(grid.num_basis(), 1.0);
            let mixed: Vec<f64> = c.iter().zip(&d).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = grid.spline_eval(x, &mixed).unwrap();
            let rhs = alpha * grid.spline_eval(x, &c).unwrap() + beta * grid.spline_eval(x, &d).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0) + 1e-12);
        }
    }
}

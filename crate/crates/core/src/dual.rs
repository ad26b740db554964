//! Scalar forward-mode sensitivities.
//!
//! Every divergence map in this crate depends on a single scalar `s = sqrt(tau)`,
//! so one tangent per value is enough. [`DualMatrix`] carries a matrix of
//! values together with its elementwise derivative with respect to `s`.

use nalgebra::DMatrix;

/// A value together with its derivative with respect to one scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub dot: f64,
}

impl Dual {
    pub fn new(val: f64, dot: f64) -> Self {
        Dual { val, dot }
    }

    pub fn constant(val: f64) -> Self {
        Dual { val, dot: 0.0 }
    }
}

impl std::ops::Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.val + rhs.val, self.dot + rhs.dot)
    }
}

impl std::ops::AddAssign for Dual {
    fn add_assign(&mut self, rhs: Dual) {
        self.val += rhs.val;
        self.dot += rhs.dot;
    }
}

impl std::ops::Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        Dual::new(self.val * rhs, self.dot * rhs)
    }
}

/// Matrix-valued dual: `val` and `dot = d val / ds` share a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMatrix {
    pub val: DMatrix<f64>,
    pub dot: DMatrix<f64>,
}

impl DualMatrix {
    pub fn constant(val: DMatrix<f64>) -> Self {
        let dot = DMatrix::zeros(val.nrows(), val.ncols());
        DualMatrix { val, dot }
    }

    pub fn nrows(&self) -> usize {
        self.val.nrows()
    }

    /// `self * w` for a weight that does not depend on `s`.
    pub fn mul_const(&self, w: &DMatrix<f64>) -> DualMatrix {
        DualMatrix {
            val: &self.val * w,
            dot: &self.dot * w,
        }
    }

    /// `self * w` where `w` depends on `s` with derivative `w_dot`.
    pub fn mul_dual(&self, w: &DMatrix<f64>, w_dot: &DMatrix<f64>) -> DualMatrix {
        DualMatrix {
            val: &self.val * w,
            dot: &self.dot * w + &self.val * w_dot,
        }
    }

    /// Elementwise ReLU. At an exactly-zero pre-activation the right
    /// derivative (gate open) is used.
    pub fn relu(&self) -> DualMatrix {
        let val = self.val.map(|z| z.max(0.0));
        let dot = self.dot.zip_map(&self.val, |d, z| if z >= 0.0 { d } else { 0.0 });
        DualMatrix { val, dot }
    }

    pub fn add(&self, other: &DualMatrix) -> DualMatrix {
        DualMatrix {
            val: &self.val + &other.val,
            dot: &self.dot + &other.dot,
        }
    }

    pub fn row(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.val.row(i).iter().copied().collect(),
            self.dot.row(i).iter().copied().collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_against_finite_difference() {
        let h = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 0.8, 0.5]);
        let phi = DMatrix::from_row_slice(2, 2, &[0.1, 0.4, -0.7, 0.2]);
        let xi = DMatrix::from_row_slice(2, 2, &[1.1, -0.3, 0.6, 0.9]);
        let f = |s: f64| {
            let w = &phi + &xi * s;
            (DualMatrix::constant(h.clone()).mul_dual(&w, &xi)).relu()
        };
        let s = 0.7;
        let d = f(s);
        let e = 1e-6;
        let fd = (f(s + e).val - f(s - e).val) / (2.0 * e);
        assert!((d.dot - fd).abs().max() < 1e-8);
    }

    #[test]
    fn relu_uses_right_derivative_at_zero() {
        let m = DualMatrix {
            val: DMatrix::from_row_slice(1, 3, &[0.0, -1.0, 1.0]),
            dot: DMatrix::from_row_slice(1, 3, &[2.0, 2.0, 2.0]),
        };
        let r = m.relu();
        assert_eq!(r.dot, DMatrix::from_row_slice(1, 3, &[2.0, 0.0, 2.0]));
    }
}

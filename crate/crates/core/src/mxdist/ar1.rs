use nalgebra::DMatrix;

use super::DistError;

/// `Omega[i][j] = rho^|i - j|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Matrix {
    q: usize,
    rho: f64,
}

pub fn ar1_build(q: usize, rho: f64) -> Result<Ar1Matrix, DistError> {
    Ar1Matrix::new(q, rho)
}

impl Ar1Matrix {
    pub fn new(q: usize, rho: f64) -> Result<Self, DistError> {
        if !(rho.abs() < 1.0) {
            return Err(DistError::InvalidRho(rho));
        }
        if q == 0 {
            return Err(DistError::Dimension("AR(1) dimension must be >= 1".into()));
        }
        Ok(Self { q, rho })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.q, self.q, |i, j| self.rho.powi(i.abs_diff(j) as i32))
    }

    /// Tridiagonal inverse: `[1, 1 + rho^2, ..., 1 + rho^2, 1]` on the
    /// diagonal and `-rho` beside it, all over `1 - rho^2`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let (q, r) = (self.q, self.rho);
        let s = 1.0 / (1.0 - r * r);
        DMatrix::from_fn(q, q, |i, j| {
            if i == j {
                if q == 1 {
                    1.0
                } else if i == 0 || i == q - 1 {
                    s
                } else {
                    (1.0 + r * r) * s
                }
            } else if i.abs_diff(j) == 1 {
                -r * s
            } else {
                0.0
            }
        })
    }

    pub fn log_det(&self) -> f64 {
        (self.q as f64 - 1.0) * (-self.rho * self.rho).ln_1p()
    }

    /// The same process observed at `k` consecutive positions.
    pub fn restrict(&self, k: usize) -> Result<Self, DistError> {
        if k == 0 || k > self.q {
            return Err(DistError::Dimension(format!("cannot restrict q = {} to {k}", self.q)));
        }
        Self::new(k, self.rho)
    }

    /// `A Omega^-1 B^T` for `p x q` matrices, using the tridiagonal inverse.
    pub fn sandwich(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.ncols(), self.q);
        assert_eq!(b.ncols(), self.q);
        let q = self.q;
        if q == 1 {
            return a * b.transpose();
        }
        let r = self.rho;
        let mut out = a * b.transpose();
        let inner_a = a.columns(1, q - 2);
        let inner_b = b.columns(1, q - 2);
        out += r * r * (inner_a * inner_b.transpose());
        let lead_a = a.columns(0, q - 1);
        let lag_a = a.columns(1, q - 1);
        let lead_b = b.columns(0, q - 1);
        let lag_b = b.columns(1, q - 1);
        out -= r * (lead_a * lag_b.transpose() + lag_a * lead_b.transpose());
        out / (1.0 - r * r)
    }
}

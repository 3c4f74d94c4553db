use nalgebra::{DMatrix, DVector};

use super::{Ar1Matrix, DistError, MatrixT};
use crate::rng;

/// How far `Sigma[0][0]` may stray from 1 before the anchor counts as broken.
pub const SIGMA_ANCHOR_TOL: f64 = 1e-9;

/// Constrained class model: row-constant mean, `Sigma[0][0] = 1`,
/// AR(1) column correlation, fixed degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct MxVtParams {
    /// One mean per row (band); every column shares it.
    pub row_means: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub rho: f64,
    pub nu: f64,
    pub q: usize,
}

impl MxVtParams {
    pub fn new(row_means: DVector<f64>, sigma: DMatrix<f64>, rho: f64, nu: f64, q: usize) -> Result<Self, DistError> {
        let p = Self {
            row_means,
            sigma,
            rho,
            nu,
            q,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn p(&self) -> usize {
        self.row_means.len()
    }

    pub fn validate(&self) -> Result<(), DistError> {
        let p = self.p();
        if p == 0 || self.q == 0 {
            return Err(DistError::Dimension(format!("p = {p}, q = {}", self.q)));
        }
        if self.sigma.shape() != (p, p) {
            return Err(DistError::Dimension(format!(
                "Sigma is {:?} for p = {p}",
                self.sigma.shape()
            )));
        }
        if !(self.nu >= 1.0) || !self.nu.is_finite() {
            return Err(DistError::InvalidNu(self.nu));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(DistError::InvalidRho(self.rho));
        }
        if self.row_means.iter().any(|v| !v.is_finite()) {
            return Err(DistError::Invalid("non-finite row mean".into()));
        }
        if (self.sigma[(0, 0)] - 1.0).abs() > SIGMA_ANCHOR_TOL {
            return Err(DistError::Invalid(format!(
                "Sigma[0][0] = {} but must be 1",
                self.sigma[(0, 0)]
            )));
        }
        if (&self.sigma - self.sigma.transpose()).amax() > 1e-12 * self.sigma.amax().max(1.0) {
            return Err(DistError::Invalid("Sigma is not symmetric".into()));
        }
        super::cholesky(&self.sigma, "Sigma")?;
        Ok(())
    }

    pub fn omega(&self) -> Ar1Matrix {
        Ar1Matrix::new(self.q, self.rho).expect("validated rho")
    }

    pub fn mean_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), self.q, |i, _| self.row_means[i])
    }

    /// The model for `k` consecutive image positions.
    pub fn restrict(&self, k: usize) -> Result<Self, DistError> {
        if k == 0 || k > self.q {
            return Err(DistError::Dimension(format!("cannot restrict q = {} to {k}", self.q)));
        }
        Ok(Self { q: k, ..self.clone() })
    }

    pub fn to_matrix_t(&self) -> Result<MatrixT, DistError> {
        MatrixT::new(self.mean_matrix(), self.sigma.clone(), self.omega().dense(), self.nu)
    }
}

pub fn mxt_logpdf(x: &DMatrix<f64>, params: &MxVtParams) -> Result<f64, DistError> {
    params.validate()?;
    params.to_matrix_t()?.logpdf(x)
}

/// `n` draws, reproducible from `seed`.
pub fn mxt_sample(params: &MxVtParams, n: usize, seed: u64) -> Result<Vec<DMatrix<f64>>, DistError> {
    params.validate()?;
    let t = params.to_matrix_t()?;
    Ok(t.sample(n, &mut rng::seeded(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MxVtParams {
        MxVtParams::new(
            DVector::from_vec(vec![1.2, 0.8]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.9]),
            0.5,
            10.0,
            4,
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let good = params();
        let mut bad = good.clone();
        bad.sigma[(0, 0)] = 2.0;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.rho = 1.0;
        assert!(matches!(bad.validate(), Err(DistError::InvalidRho(_))));
        let mut bad = good.clone();
        bad.nu = 0.9;
        assert!(matches!(bad.validate(), Err(DistError::InvalidNu(_))));
        let mut bad = good;
        bad.sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sample_is_seeded() {
        let p = params();
        assert!(mxt_sample(&p, 0, 1).unwrap().is_empty());
        let a = mxt_sample(&p, 5, 42).unwrap();
        let b = mxt_sample(&p, 5, 42).unwrap();
        let c = mxt_sample(&p, 5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a[0].shape(), (2, 4));
    }

    #[test]
    fn restriction_keeps_rho() {
        let r = params().restrict(2).unwrap();
        assert_eq!((r.q, r.rho), (2, 0.5));
        assert!(params().restrict(5).is_err());
    }
}

//! Matrix-variate normal and t distributions with AR(1) column correlation.

mod ar1;
mod matrix_t;
mod params;

pub use ar1::{ar1_build, Ar1Matrix};
pub use matrix_t::{mxn_logpdf, MatrixT};
pub use params::{mxt_logpdf, mxt_sample, MxVtParams, SIGMA_ANCHOR_TOL};

use nalgebra::{Cholesky, DMatrix, Dyn};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("AR(1) parameter {0} must satisfy |rho| < 1")]
    InvalidRho(f64),
    #[error("degrees of freedom {0} must be >= 1")]
    InvalidNu(f64),
    #[error("multivariate gamma pole: a = {a} <= (p - 1)/2 for p = {p}")]
    Pole { a: f64, p: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

/// `ln Gamma_p(a) = p(p-1)/4 ln(pi) + sum_{j=1..p} ln Gamma(a + (1-j)/2)`.
pub fn multigamma_ln(a: f64, p: usize) -> Result<f64, DistError> {
    if p == 0 || !(a > (p as f64 - 1.0) / 2.0) {
        return Err(DistError::Pole { a, p });
    }
    let pf = p as f64;
    let mut s = pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 1..=p {
        s += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    Ok(s)
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>, DistError> {
    if m.nrows() != m.ncols() {
        return Err(DistError::Dimension(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(DistError::NotPositiveDefinite(what));
    }
    let ch = m.clone().cholesky().ok_or(DistError::NotPositiveDefinite(what))?;
    if ch.l_dirty().diagonal().iter().any(|d| !(*d > 0.0)) {
        return Err(DistError::NotPositiveDefinite(what));
    }
    Ok(ch)
}

pub(crate) fn chol_logdet(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `ln |I + Y Y^T|` through whichever Gram matrix is smaller.
pub(crate) fn logdet_identity_plus_gram(y: &DMatrix<f64>) -> Result<f64, DistError> {
    let g = if y.nrows() <= y.ncols() {
        y * y.transpose()
    } else {
        y.transpose() * y
    };
    let k = g.nrows();
    let ch = cholesky(&(DMatrix::identity(k, k) + g), "I + Y Y^T")?;
    Ok(chol_logdet(&ch))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multigamma_examples() {
        assert!(multigamma_ln(2.0, 1).unwrap().abs() < 1e-15);
        let v = multigamma_ln(1.5, 2).unwrap();
        assert!((v - (std::f64::consts::PI / 2.0).ln()).abs() < 1e-13);
        assert!(matches!(multigamma_ln(1.0, 3), Err(DistError::Pole { .. })));
        assert!(multigamma_ln(1.01, 3).is_ok());
    }
}

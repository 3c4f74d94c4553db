use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{chol_logdet, cholesky, logdet_identity_plus_gram, multigamma_ln, DistError};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// `Y = Ls^-1 (X - M) Lo^-T` where `Sigma = Ls Ls^T`, `Omega = Lo Lo^T`,
/// so that `tr[Omega^-1 (X-M)^T Sigma^-1 (X-M)] = |Y|_F^2`.
fn whiten(
    x: &DMatrix<f64>,
    m: &DMatrix<f64>,
    ls: &Cholesky<f64, Dyn>,
    lo: &Cholesky<f64, Dyn>,
) -> Result<DMatrix<f64>, DistError> {
    if x.shape() != m.shape() {
        return Err(DistError::Dimension(format!(
            "X is {:?}, M is {:?}",
            x.shape(),
            m.shape()
        )));
    }
    let r = x - m;
    let a = ls
        .l_dirty()
        .lower_triangle()
        .solve_lower_triangular(&r)
        .ok_or(DistError::NotPositiveDefinite("Sigma"))?;
    // Solve Y Lo^T = A, i.e. Lo Y^T = A^T.
    let yt = lo
        .l_dirty()
        .lower_triangle()
        .solve_lower_triangular(&a.transpose())
        .ok_or(DistError::NotPositiveDefinite("Omega"))?;
    Ok(yt.transpose())
}

fn check_dims(m: &DMatrix<f64>, sigma: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<(), DistError> {
    let (p, q) = m.shape();
    if sigma.shape() != (p, p) || omega.shape() != (q, q) {
        return Err(DistError::Dimension(format!(
            "M is {p}x{q}, Sigma {:?}, Omega {:?}",
            sigma.shape(),
            omega.shape()
        )));
    }
    Ok(())
}

/// Matrix-variate normal log-density with row covariance `Sigma` and column covariance `Omega`.
pub fn mxn_logpdf(
    x: &DMatrix<f64>,
    m: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    omega: &DMatrix<f64>,
) -> Result<f64, DistError> {
    check_dims(m, sigma, omega)?;
    let (p, q) = (m.nrows() as f64, m.ncols() as f64);
    let ls = cholesky(sigma, "Sigma")?;
    let lo = cholesky(omega, "Omega")?;
    let y = whiten(x, m, &ls, &lo)?;
    Ok(-0.5 * y.norm_squared()
        - 0.5 * p * q * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * p * chol_logdet(&lo)
        - 0.5 * q * chol_logdet(&ls))
}

/// Matrix-variate t with general scale matrices. `X | S ~ N(M, S^-1, Omega)`,
/// `S ~ W_p(nu + p - 1, Sigma^-1)`.
#[derive(Debug, Clone)]
pub struct MatrixT {
    m: DMatrix<f64>,
    sigma: DMatrix<f64>,
    omega: DMatrix<f64>,
    nu: f64,
    ls: Cholesky<f64, Dyn>,
    lo: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl MatrixT {
    pub fn new(m: DMatrix<f64>, sigma: DMatrix<f64>, omega: DMatrix<f64>, nu: f64) -> Result<Self, DistError> {
        check_dims(&m, &sigma, &omega)?;
        if !(nu >= 1.0) || !nu.is_finite() {
            return Err(DistError::InvalidNu(nu));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(DistError::Invalid("non-finite mean".into()));
        }
        let ls = cholesky(&sigma, "Sigma")?;
        let lo = cholesky(&omega, "Omega")?;
        let (p, q) = m.shape();
        let (pf, qf) = (p as f64, q as f64);
        let log_norm = multigamma_ln((nu + pf + qf - 1.0) / 2.0, p)?
            - 0.5 * pf * qf * LN_PI
            - multigamma_ln((nu + pf - 1.0) / 2.0, p)?
            - 0.5 * pf * chol_logdet(&lo)
            - 0.5 * qf * chol_logdet(&ls);
        Ok(Self {
            m,
            sigma,
            omega,
            nu,
            ls,
            lo,
            log_norm,
        })
    }

    pub fn p(&self) -> usize {
        self.m.nrows()
    }

    pub fn q(&self) -> usize {
        self.m.ncols()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// `a1 = (nu + p + q - 1) / 2`, the exponent on the determinant term.
    fn a1(&self) -> f64 {
        (self.nu + (self.p() + self.q()) as f64 - 1.0) / 2.0
    }

    pub fn logpdf(&self, x: &DMatrix<f64>) -> Result<f64, DistError> {
        let y = whiten(x, &self.m, &self.ls, &self.lo)?;
        Ok(self.log_norm - self.a1() * logdet_identity_plus_gram(&y)?)
    }

    /// Posterior of the row precision: `S | X ~ W_p(df, scale)` with
    /// `df = nu + p + q - 1` and `scale = [(X-M) Omega^-1 (X-M)^T + Sigma]^-1`.
    pub fn wishart_conditional(&self, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>), DistError> {
        if x.shape() != self.m.shape() {
            return Err(DistError::Dimension(format!("X is {:?}", x.shape())));
        }
        let r = x - &self.m;
        let omega_inv = self.lo.inverse();
        let inner = &r * omega_inv * r.transpose() + &self.sigma;
        let inner = (&inner + inner.transpose()) * 0.5;
        let scale = cholesky(&inner, "(X-M) Omega^-1 (X-M)^T + Sigma")?.inverse();
        Ok((2.0 * self.a1(), scale))
    }

    /// Normal-Wishart draws; the Wishart uses the Bartlett decomposition.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DMatrix<f64>> {
        let (p, q) = (self.p(), self.q());
        let df = self.nu + p as f64 - 1.0;
        // Cholesky factor of the Wishart scale Sigma^-1.
        let sigma_inv = self.ls.inverse();
        let l = sigma_inv.cholesky().expect("inverse of a PD matrix is PD").unpack();
        let chi: Vec<ChiSquared<f64>> = (0..p)
            .map(|i| ChiSquared::new(df - i as f64).expect("df - i > 0 for nu >= 1"))
            .collect();
        let lo = self.lo.l_dirty().lower_triangle();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut a = DMatrix::<f64>::zeros(p, p);
            for i in 0..p {
                a[(i, i)] = chi[i].sample(rng).sqrt();
                for j in 0..i {
                    a[(i, j)] = rng.sample(StandardNormal);
                }
            }
            // S = (L A)(L A)^T, so (L A)^-T is a square root of S^-1.
            let la = &l * a;
            let z = DMatrix::<f64>::from_fn(p, q, |_, _| rng.sample(StandardNormal));
            let u = la
                .transpose()
                .solve_upper_triangular(&z)
                .expect("Bartlett factor has a positive diagonal");
            out.push(&self.m + u * lo.transpose());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_zero() {
        let z = DMatrix::zeros(1, 1);
        let i = DMatrix::identity(1, 1);
        let v = mxn_logpdf(&z, &z, &i, &i).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn cauchy_at_zero() {
        let z = DMatrix::zeros(1, 1);
        let i = DMatrix::identity(1, 1);
        let t = MatrixT::new(z.clone(), i.clone(), i, 1.0).unwrap();
        assert!((t.logpdf(&z).unwrap() + std::f64::consts::PI.ln()).abs() < 1e-14);
    }

    #[test]
    fn non_pd_rejected() {
        let z = DMatrix::zeros(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let i = DMatrix::identity(2, 2);
        assert_eq!(
            mxn_logpdf(&z, &z, &bad, &i),
            Err(DistError::NotPositiveDefinite("Sigma"))
        );
        assert!(MatrixT::new(z.clone(), i.clone(), bad, 3.0).is_err());
        assert!(matches!(
            MatrixT::new(z, i.clone(), i, 0.5),
            Err(DistError::InvalidNu(_))
        ));
    }

    #[test]
    fn wishart_conditional_at_mean() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, 0.1, 0.1, 0.4, 0.4, 0.4]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let o = super::super::ar1_build(3, 0.5).unwrap().dense();
        let t = MatrixT::new(m.clone(), s.clone(), o, 4.0).unwrap();
        let (df, scale) = t.wishart_conditional(&m).unwrap();
        assert_eq!(df, 4.0 + 2.0 + 3.0 - 1.0);
        assert!((scale - s.try_inverse().unwrap()).amax() < 1e-12);
    }
}

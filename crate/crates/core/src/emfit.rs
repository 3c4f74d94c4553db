//! Maximum-likelihood fitting of the constrained matrix-variate t by EM.
//!
//! Each EM map performs an E-step (conditional Wishart means), a
//! conditional maximization of the row means, an exact maximization of
//! `Sigma` subject to `Sigma[0][0] = 1`, and a golden-section search for
//! `rho` on the observed-data likelihood. Two EM maps are combined with a
//! safeguarded squared extrapolation (SQUAREM); the extrapolated point is
//! kept only if it beats the plain double step.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mxdist::{multigamma_ln, Ar1Matrix, DistError, MxVtParams};

/// Eigenvalue floor for `Sigma`.
pub const SIGMA_FLOOR: f64 = 1e-8;
/// Allowed log-likelihood decrease per iteration.
pub const MONOTONE_SLACK: f64 = 1e-8;
const GOLDEN_TOL: f64 = 1e-6;
const LN_PI: f64 = 1.144_729_885_849_400_2;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub nu: f64,
    pub max_iter: usize,
    /// Relative log-likelihood change that ends the iteration.
    pub tol: f64,
    pub rho_search: (f64, f64),
    /// Squared extrapolation between EM maps.
    pub accelerate: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            nu: 10.0,
            max_iter: 500,
            tol: 1e-8,
            rho_search: (-0.99, 0.99),
            accelerate: true,
        }
    }
}

impl FitConfig {
    pub fn with_nu(nu: f64) -> Self {
        Self { nu, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let (lo, hi) = self.rho_search;
        if self.max_iter == 0 {
            return Err(FitError::Config("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(FitError::Config(format!("tol {} must be > 0", self.tol)));
        }
        if !(lo < hi && lo > -0.9999 && hi < 0.9999) {
            return Err(FitError::Config(format!(
                "rho_search ({lo}, {hi}) must lie in (-0.9999, 0.9999)"
            )));
        }
        if !(self.nu >= 1.0) || !self.nu.is_finite() {
            return Err(FitError::Dist(DistError::InvalidNu(self.nu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: MxVtParams,
    /// Observed-data log-likelihood at the start and after each iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The `Sigma` eigenvalue floor was engaged at some point.
    pub degenerate: bool,
}

impl FitReport {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the starting value")
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
    #[error("observation {index} is {found:?}, expected {expected:?}")]
    Shape {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("n*q = {nq} must exceed p = {p} for the model to be identifiable")]
    NonIdentifiable { nq: usize, p: usize },
    #[error("non-finite value in observation {0}")]
    NonFinite(usize),
    #[error("invalid fit configuration: {0}")]
    Config(String),
    #[error("log-likelihood fell from {before} to {after} at iteration {iteration}")]
    LikelihoodDecrease { iteration: usize, before: f64, after: f64 },
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone)]
struct Theta {
    m: DVector<f64>,
    sigma: DMatrix<f64>,
    rho: f64,
}

/// Residual cross-products for one mean, split so that
/// `R Omega^-1 R^T = (g0 + rho^2 gi - rho c) / (1 - rho^2)`.
struct Stats {
    g0: Vec<DMatrix<f64>>,
    gi: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
}

impl Stats {
    fn b(&self, i: usize, rho: f64) -> DMatrix<f64> {
        (&self.g0[i] + rho * rho * &self.gi[i] - rho * &self.c[i]) / (1.0 - rho * rho)
    }
}

struct Problem {
    data: Vec<DMatrix<f64>>,
    n: usize,
    p: usize,
    q: usize,
    nu: f64,
    a1: f64,
    norm: f64,
}

fn logdet_pd(m: &DMatrix<f64>) -> Option<f64> {
    let ch = m.clone().cholesky()?;
    let d = ch.l_dirty().diagonal();
    if d.iter().all(|v| *v > 0.0) {
        Some(2.0 * d.iter().map(|v| v.ln()).sum::<f64>())
    } else {
        None
    }
}

/// `ln |I + L^-1 B L^-T|` from the eigenvalues of the whitened `B`, so that
/// small quadratic forms keep their relative precision even when the result
/// is later multiplied by a large degrees-of-freedom factor.
fn logdet_identity_plus(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let a = l.solve_lower_triangular(b)?;
    let k = l.solve_lower_triangular(&a.transpose())?;
    let k = (&k + k.transpose()) * 0.5;
    let mut s = 0.0;
    for e in k.symmetric_eigenvalues().iter() {
        if !(*e > -1.0) {
            return None;
        }
        s += e.ln_1p();
    }
    Some(s)
}

fn lex_cmp(a: &DMatrix<f64>, b: &DMatrix<f64>) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl Problem {
    fn new(data: &[DMatrix<f64>], nu: f64) -> Result<Self, FitError> {
        let n = data.len();
        if n < 2 {
            return Err(FitError::TooFew(n));
        }
        let shape = data[0].shape();
        for (index, x) in data.iter().enumerate() {
            if x.shape() != shape {
                return Err(FitError::Shape {
                    index,
                    expected: shape,
                    found: x.shape(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(FitError::NonFinite(index));
            }
        }
        let (p, q) = shape;
        if p == 0 || q == 0 {
            return Err(FitError::Shape {
                index: 0,
                expected: (1, 1),
                found: shape,
            });
        }
        if n * q <= p {
            return Err(FitError::NonIdentifiable { nq: n * q, p });
        }
        // A canonical order makes every reduction independent of input order.
        let mut data = data.to_vec();
        data.sort_by(lex_cmp);
        let (pf, qf) = (p as f64, q as f64);
        let a1 = (nu + pf + qf - 1.0) / 2.0;
        let a0 = (nu + pf - 1.0) / 2.0;
        let norm = n as f64 * (multigamma_ln(a1, p)? - 0.5 * pf * qf * LN_PI - multigamma_ln(a0, p)?);
        Ok(Self {
            data,
            n,
            p,
            q,
            nu,
            a1,
            norm,
        })
    }

    fn stats(&self, mean: &DMatrix<f64>) -> Stats {
        let q = self.q;
        let mut st = Stats {
            g0: Vec::with_capacity(self.n),
            gi: Vec::with_capacity(self.n),
            c: Vec::with_capacity(self.n),
        };
        for x in &self.data {
            let r = x - mean;
            st.g0.push(&r * r.transpose());
            if q >= 2 {
                let inner = r.columns(1, q - 2);
                st.gi.push(inner * inner.transpose());
                let (lead, lag) = (r.columns(0, q - 1), r.columns(1, q - 1));
                st.c.push(lead * lag.transpose() + lag * lead.transpose());
            } else {
                st.gi.push(DMatrix::zeros(self.p, self.p));
                st.c.push(DMatrix::zeros(self.p, self.p));
            }
        }
        st
    }

    fn mean_matrix(&self, m: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.q, |i, _| m[i])
    }

    /// Observed log-likelihood; `None` when `Sigma` or `rho` is infeasible.
    fn ll_stats(&self, st: &Stats, sigma: &DMatrix<f64>, rho: f64) -> Option<f64> {
        if !(rho.abs() < 1.0) {
            return None;
        }
        let ch = sigma.clone().cholesky()?;
        let l = ch.l_dirty().lower_triangle();
        let ld_sigma = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !ld_sigma.is_finite() {
            return None;
        }
        let (nf, pf, qf) = (self.n as f64, self.p as f64, self.q as f64);
        let mut quad = 0.0;
        for i in 0..self.n {
            quad += logdet_identity_plus(&l, &st.b(i, rho))?;
        }
        let ld_omega = (qf - 1.0) * (-rho * rho).ln_1p();
        Some(self.norm - 0.5 * nf * pf * ld_omega - 0.5 * nf * qf * ld_sigma - self.a1 * quad)
    }

    fn loglik(&self, th: &Theta) -> Option<f64> {
        self.ll_stats(&self.stats(&self.mean_matrix(&th.m)), &th.sigma, th.rho)
    }

    /// Moment start: pooled row means, pooled row covariance, lag-1 autocorrelation.
    fn initial(&self, cfg: &FitConfig) -> (Theta, bool) {
        let (n, p, q) = (self.n, self.p, self.q);
        let mut m = DVector::zeros(p);
        for x in &self.data {
            for i in 0..p {
                m[i] += x.row(i).sum();
            }
        }
        m /= (n * q) as f64;
        let mean = self.mean_matrix(&m);
        let mut s = DMatrix::zeros(p, p);
        let (mut lag1, mut lag0) = (0.0, 0.0);
        for x in &self.data {
            let r = x - &mean;
            s += &r * r.transpose();
            for i in 0..p {
                for j in 0..q {
                    lag0 += r[(i, j)] * r[(i, j)];
                    if j + 1 < q {
                        lag1 += r[(i, j)] * r[(i, j + 1)];
                    }
                }
            }
        }
        let rho = if q >= 2 && lag0 > 0.0 {
            (lag1 / lag0).clamp(cfg.rho_search.0, cfg.rho_search.1)
        } else {
            0.0_f64.clamp(cfg.rho_search.0, cfg.rho_search.1)
        };
        if !(s[(0, 0)] > 0.0) {
            s[(0, 0)] = 1.0;
        }
        let (sigma, clamped) = anchor_and_floor(s);
        (Theta { m, sigma, rho }, clamped)
    }

    fn golden_rho(&self, st: &Stats, sigma: &DMatrix<f64>, current: f64, cfg: &FitConfig) -> f64 {
        if self.q < 2 {
            return current;
        }
        let f = |r: f64| self.ll_stats(st, sigma, r).unwrap_or(f64::NEG_INFINITY);
        let (mut a, mut b) = cfg.rho_search;
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while b - a > GOLDEN_TOL {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
        }
        let mid = 0.5 * (a + b);
        // The endpoints catch maxima on the search boundary.
        let mut best = (current, f(current));
        for r in [mid, cfg.rho_search.0, cfg.rho_search.1] {
            let v = f(r);
            if v > best.1 {
                best = (r, v);
            }
        }
        best.0
    }

    /// One EM map. Returns the new parameters and whether the floor engaged.
    fn em_map(&self, th: &Theta, cfg: &FitConfig) -> Result<(Theta, bool), FitError> {
        let (n, p, q) = (self.n, self.p, self.q);
        let mean = self.mean_matrix(&th.m);
        let st = self.stats(&mean);
        let omega = Ar1Matrix::new(q, th.rho)?;
        let v = omega.inverse() * DVector::from_element(q, 1.0);
        let s = v.sum();
        let two_a1 = 2.0 * self.a1;
        let mut a = DMatrix::zeros(p, p);
        let mut wc = DVector::zeros(p);
        for (i, x) in self.data.iter().enumerate() {
            let inner = &th.sigma + st.b(i, th.rho);
            let w = inner
                .cholesky()
                .ok_or(DistError::NotPositiveDefinite("(X-M) Omega^-1 (X-M)^T + Sigma"))?
                .inverse()
                * two_a1;
            let c = x * &v / s;
            wc += &w * c;
            a += w;
        }
        let a = (&a + a.transpose()) * 0.5;
        let a_ch = a
            .clone()
            .cholesky()
            .ok_or(DistError::NotPositiveDefinite("sum of weights"))?;
        let m = a_ch.solve(&wc);
        let a_inv = a_ch.inverse();
        let a2 = n as f64 * (self.nu + p as f64 - 1.0);
        let mu = a2 - 1.0 / a_inv[(0, 0)];
        let mut shifted = a;
        shifted[(0, 0)] += mu;
        let sigma = shifted
            .cholesky()
            .ok_or(DistError::NotPositiveDefinite("constrained Sigma update"))?
            .inverse()
            * a2;
        let (sigma, clamped) = anchor_and_floor(sigma);
        let st = self.stats(&self.mean_matrix(&m));
        let rho = self.golden_rho(&st, &sigma, th.rho, cfg);
        Ok((Theta { m, sigma, rho }, clamped))
    }

    fn pack(&self, th: &Theta) -> Vec<f64> {
        let mut v: Vec<f64> = th.m.iter().copied().collect();
        for j in 0..self.p {
            for i in j..self.p {
                if (i, j) != (0, 0) {
                    v.push(th.sigma[(i, j)]);
                }
            }
        }
        v.push(th.rho);
        v
    }

    fn unpack(&self, v: &[f64], cfg: &FitConfig) -> Option<Theta> {
        let p = self.p;
        let m = DVector::from_column_slice(&v[..p]);
        let mut sigma = DMatrix::zeros(p, p);
        sigma[(0, 0)] = 1.0;
        let mut k = p;
        for j in 0..p {
            for i in j..p {
                if (i, j) != (0, 0) {
                    sigma[(i, j)] = v[k];
                    sigma[(j, i)] = v[k];
                    k += 1;
                }
            }
        }
        let rho = v[k];
        let (lo, hi) = cfg.rho_search;
        let ok = v.iter().all(|x| x.is_finite())
            && (rho >= lo && rho <= hi)
            && sigma.clone().symmetric_eigenvalues().min() >= SIGMA_FLOOR;
        ok.then_some(Theta { m, sigma, rho })
    }
}

/// Symmetrize, floor the eigenvalues and re-anchor `Sigma[0][0] = 1`.
fn anchor_and_floor(sigma: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let mut s = (&sigma + sigma.transpose()) * 0.5;
    let eig = s.clone().symmetric_eigen();
    let clamped = eig.eigenvalues.iter().any(|e| !(*e >= SIGMA_FLOOR));
    if clamped {
        let mut e = eig.eigenvalues.clone();
        e.iter_mut().for_each(|v| *v = v.max(SIGMA_FLOOR));
        s = &eig.eigenvectors * DMatrix::from_diagonal(&e) * eig.eigenvectors.transpose();
        s = (&s + s.transpose()) * 0.5;
    }
    let s00 = s[(0, 0)];
    if s00 != 1.0 {
        s /= s00;
    }
    s[(0, 0)] = 1.0;
    (s, clamped)
}

/// Fit the constrained matrix-variate t to `data` with `nu` held fixed.
pub fn fit_mxt(data: &[DMatrix<f64>], config: &FitConfig) -> Result<FitReport, FitError> {
    config.validate()?;
    let prob = Problem::new(data, config.nu)?;
    let (mut th, mut degenerate) = prob.initial(config);
    let mut ll = prob
        .loglik(&th)
        .ok_or(DistError::NotPositiveDefinite("initial Sigma"))?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        iterations = it;
        let (t1, c1) = prob.em_map(&th, config)?;
        let (t2, c2) = prob.em_map(&t1, config)?;
        degenerate |= c1 | c2;
        let ll2 = prob.loglik(&t2).ok_or(DistError::NotPositiveDefinite("Sigma"))?;
        let (mut next, mut ll_next) = (t2, ll2);
        if config.accelerate && !degenerate {
            let (v0, v1) = (prob.pack(&th), prob.pack(&t1));
            let v2 = prob.pack(&next);
            let r: Vec<f64> = v1.iter().zip(&v0).map(|(a, b)| a - b).collect();
            let d: Vec<f64> = (0..v0.len()).map(|i| v2[i] - 2.0 * v1[i] + v0[i]).collect();
            let (rn, dn) = (norm(&r), norm(&d));
            if dn > 0.0 && rn > 0.0 {
                let alpha = (-rn / dn).min(-1.0);
                let vx: Vec<f64> = (0..v0.len())
                    .map(|i| v0[i] - 2.0 * alpha * r[i] + alpha * alpha * d[i])
                    .collect();
                if let Some(tx) = prob.unpack(&vx, config) {
                    if let Ok((t3, c3)) = prob.em_map(&tx, config) {
                        if let Some(ll3) = prob.loglik(&t3) {
                            if !c3 && ll3 >= ll_next {
                                next = t3;
                                ll_next = ll3;
                            }
                        }
                    }
                }
            }
        }
        if ll_next < ll - MONOTONE_SLACK && !degenerate {
            return Err(FitError::LikelihoodDecrease {
                iteration: it,
                before: ll,
                after: ll_next,
            });
        }
        let change = (ll_next - ll).abs();
        th = next;
        ll = ll_next;
        trace.push(ll);
        if change <= config.tol * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let params = MxVtParams::new(th.m, th.sigma, th.rho, config.nu, prob.q)?;
    Ok(FitReport {
        params,
        loglik_trace: trace,
        iterations,
        converged,
        degenerate,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sum_i ln f(X_i; M, Sigma, AR1(q, rho), nu)` for a general mean matrix `M`.
pub fn profile_loglik_rho(
    data: &[DMatrix<f64>],
    mean: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    nu: f64,
    rho: f64,
) -> Result<f64, FitError> {
    if !(rho.abs() < 1.0) {
        return Err(DistError::InvalidRho(rho).into());
    }
    if !(nu >= 1.0) {
        return Err(DistError::InvalidNu(nu).into());
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let shape = mean.shape();
    for (index, x) in data.iter().enumerate() {
        if x.shape() != shape {
            return Err(FitError::Shape {
                index,
                expected: shape,
                found: x.shape(),
            });
        }
    }
    if sigma.shape() != (shape.0, shape.0) {
        return Err(DistError::Dimension(format!("Sigma is {:?}", sigma.shape())).into());
    }
    let (p, q) = shape;
    let (pf, qf) = (p as f64, q as f64);
    let a1 = (nu + pf + qf - 1.0) / 2.0;
    let a0 = (nu + pf - 1.0) / 2.0;
    let prob = Problem {
        data: data.to_vec(),
        n: data.len(),
        p,
        q,
        nu,
        a1,
        norm: data.len() as f64 * (multigamma_ln(a1, p)? - 0.5 * pf * qf * LN_PI - multigamma_ln(a0, p)?),
    };
    let st = prob.stats(mean);
    if q == 1 {
        let ld_sigma = logdet_pd(sigma).ok_or(DistError::NotPositiveDefinite("Sigma"))?;
        let mut quad = 0.0;
        for g in &st.g0 {
            quad += logdet_pd(&(sigma + g)).ok_or(DistError::NotPositiveDefinite("Sigma + B"))? - ld_sigma;
        }
        return Ok(prob.norm - 0.5 * prob.n as f64 * ld_sigma - a1 * quad);
    }
    prob.ll_stats(&st, sigma, rho)
        .ok_or_else(|| DistError::NotPositiveDefinite("Sigma").into())
}

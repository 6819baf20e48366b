//! Bayesian normal linear regression: a conjugate Gibbs sampler under
//! homoskedastic errors, and the variant with stochastic-volatility errors
//! that plugs a single SV sweep into the regression Gibbs loop.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_core::RngCore;

use crate::driver::{default_start, linearized, stored_time_indices, DrawMatrix, LatentDraws, ParaDraws, SamplerConfig, SvUpdater};
use crate::error::{Error, Result};
use crate::model::PriorSpec;
use crate::rng;

const RANK_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// Response vector and design matrix whose first column is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl RegressionData {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::validation("design matrix has no columns"));
        }
        if y.len() != n {
            return Err(Error::validation(format!("y has {} entries but X has {n} rows", y.len())));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::validation("first design column must be all ones"));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("regression data contain non-finite values"));
        }
        Ok(Self {
            y: DVector::from_vec(y),
            x,
        })
    }

    /// AR(1) in levels: y_t regressed on (1, y_{t-1}) for t = 2..n.
    pub fn ar1(levels: &[f64]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("empty series"));
        }
        let n = levels.len() - 1;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { levels[i] });
        Self::new(levels[1..].to_vec(), x)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `y - X beta`.
    pub fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }

    /// Whether X has full column rank, judged by the pivoted QR diagonal.
    pub fn has_full_rank(&self) -> bool {
        let (n, p) = self.x.shape();
        if n < p {
            return false;
        }
        let r = self.x.clone().col_piv_qr().r();
        let scale = r[(0, 0)].abs();
        scale > 0.0 && (0..p).all(|i| r[(i, i)].abs() > RANK_TOL * scale)
    }
}

/// Conjugate prior: beta | sigma^2 ~ N(b0, sigma^2 B0), sigma^2 ~ IG(c0, C0),
/// with the precision `B0inv` stored directly.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPrior {
    pub b0: DVector<f64>,
    pub b0inv: DMatrix<f64>,
    pub c0: f64,
    pub cc0: f64,
}

impl RegressionPrior {
    pub fn new(b0: DVector<f64>, b0inv: DMatrix<f64>, c0: f64, cc0: f64) -> Result<Self> {
        let prior = Self { b0, b0inv, c0, cc0 };
        prior.validate()?;
        Ok(prior)
    }

    /// Zero prior mean and precision `precision * I`.
    pub fn isotropic(p: usize, precision: f64, c0: f64, cc0: f64) -> Result<Self> {
        Self::new(DVector::zeros(p), DMatrix::identity(p, p) * precision, c0, cc0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.b0.len();
        if self.b0inv.shape() != (p, p) {
            return Err(Error::validation("prior precision must be p x p"));
        }
        if !(self.c0 > 0.0 && self.cc0 > 0.0 && self.c0.is_finite() && self.cc0.is_finite()) {
            return Err(Error::validation("c0 and C0 must be positive"));
        }
        if self.b0.iter().chain(self.b0inv.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("prior contains non-finite values"));
        }
        let scale = self.b0inv.amax().max(1.0);
        for i in 0..p {
            for j in 0..i {
                if (self.b0inv[(i, j)] - self.b0inv[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::validation("prior precision is not symmetric"));
                }
            }
        }
        if p > 0 {
            let min_eig = self.b0inv.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 * scale {
                return Err(Error::validation("prior precision is not nonnegative definite"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.b0.len()
    }

    fn is_flat(&self) -> bool {
        self.b0inv.iter().all(|&v| v == 0.0)
    }
}

pub(crate) fn check_compatible(data: &RegressionData, prior: &RegressionPrior) -> Result<()> {
    if data.p() != prior.dim() {
        return Err(Error::validation(format!(
            "prior has dimension {} but the design has {} columns",
            prior.dim(),
            data.p()
        )));
    }
    if prior.is_flat() && !data.has_full_rank() {
        return Err(Error::validation(
            "design matrix is rank deficient and the prior precision is zero",
        ));
    }
    Ok(())
}

pub(crate) fn spd_factor(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a).ok_or_else(|| Error::validation("posterior precision of beta is not positive definite"))
}

/// `mean + L^{-T} z` for `L L^T = precision`: a draw from N(mean, precision^{-1}).
pub(crate) fn draw_gaussian<R: RngCore + ?Sized>(
    chol: &Cholesky<f64, Dyn>,
    mean: &DVector<f64>,
    scale: f64,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng::std_normal(rng));
    let dev = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    mean + dev * scale
}

/// Full conditionals of the homoskedastic model with the p x p precision
/// factorization precomputed.
#[derive(Debug, Clone)]
pub struct HomoskedasticKernel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    b0: DVector<f64>,
    b0inv: DMatrix<f64>,
    cc0: f64,
    chol: Cholesky<f64, Dyn>,
    b_t: DVector<f64>,
    c_n: f64,
}

impl HomoskedasticKernel {
    pub fn new(data: &RegressionData, prior: &RegressionPrior) -> Result<Self> {
        prior.validate()?;
        check_compatible(data, prior)?;
        let (n, p) = data.x.shape();
        let chol = spd_factor(data.x.tr_mul(&data.x) + &prior.b0inv)?;
        let mut kernel = Self {
            x: data.x.clone(),
            y: data.y.clone(),
            b0: prior.b0.clone(),
            b0inv: prior.b0inv.clone(),
            cc0: prior.cc0,
            chol,
            b_t: DVector::zeros(p),
            c_n: prior.c0 + 0.5 * n as f64 + 0.5 * p as f64,
        };
        kernel.refresh_mean();
        Ok(kernel)
    }

    fn refresh_mean(&mut self) {
        let rhs = self.x.tr_mul(&self.y) + &self.b0inv * &self.b0;
        self.b_t = self.chol.solve(&rhs);
    }

    /// Replaces the response while keeping the design and prior.
    pub fn set_y(&mut self, y: &[f64]) {
        assert_eq!(y.len(), self.y.len(), "response length changed");
        self.y.copy_from_slice(y);
        self.refresh_mean();
    }

    /// Posterior mean b_T of beta given sigma^2 (which does not depend on it).
    pub fn beta_mean(&self) -> &DVector<f64> {
        &self.b_t
    }

    /// B_T = sigma^2 (X'X + B0inv)^{-1}.
    pub fn beta_covariance(&self, sigma2: f64) -> DMatrix<f64> {
        self.chol.inverse() * sigma2
    }

    pub fn c_n(&self) -> f64 {
        self.c_n
    }

    /// C_n = C0 + [(y - X beta)'(y - X beta) + (beta - b0)' B0inv (beta - b0)] / 2.
    pub fn big_c_n(&self, beta: &DVector<f64>) -> f64 {
        let e = &self.y - &self.x * beta;
        let d = beta - &self.b0;
        self.cc0 + 0.5 * (e.dot(&e) + d.dot(&(&self.b0inv * &d)))
    }

    pub fn draw_beta<R: RngCore + ?Sized>(&self, sigma2: f64, rng: &mut R) -> DVector<f64> {
        draw_gaussian(&self.chol, &self.b_t, libm::sqrt(sigma2), rng)
    }

    pub fn draw_sigma2<R: RngCore + ?Sized>(&self, beta: &DVector<f64>, rng: &mut R) -> f64 {
        rng::inverse_gamma(rng, self.c_n, self.big_c_n(beta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomoskedasticDraws {
    /// M x p
    pub beta: DrawMatrix,
    pub sigma_eps: Vec<f64>,
}

impl HomoskedasticDraws {
    pub fn len(&self) -> usize {
        self.sigma_eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_eps.is_empty()
    }
}

/// Gibbs sampler alternating beta | sigma^2 and sigma^2 | beta, starting from
/// sigma^2 = 1.
pub fn gibbs_homoskedastic<R: RngCore + ?Sized>(
    data: &RegressionData,
    prior: &RegressionPrior,
    burnin: usize,
    draws: usize,
    rng: &mut R,
) -> Result<HomoskedasticDraws> {
    if draws == 0 {
        return Err(Error::validation("draws must be at least 1"));
    }
    let kernel = HomoskedasticKernel::new(data, prior)?;
    let mut beta_out = DrawMatrix::with_capacity(draws, data.p());
    let mut sigma_eps = Vec::with_capacity(draws);
    let mut sigma2 = 1.0;
    for it in 0..burnin + draws {
        let beta = kernel.draw_beta(sigma2, rng);
        sigma2 = kernel.draw_sigma2(&beta, rng);
        if it >= burnin {
            beta_out.push_row(beta.iter().copied());
            sigma_eps.push(libm::sqrt(sigma2));
        }
    }
    Ok(HomoskedasticDraws {
        beta: beta_out,
        sigma_eps,
    })
}

/// Mean and covariance of beta given the log-variances `h_1..h_n` under SV
/// errors: rows are scaled by exp(-h_t / 2), and the prior enters through
/// `B0inv` only (it is not scaled by a common error variance).
pub fn sv_beta_conditional(
    data: &RegressionData,
    prior: &RegressionPrior,
    h: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (chol, mean) = sv_beta_precision(data, prior, h)?;
    Ok((mean, chol.inverse()))
}

fn sv_beta_precision(
    data: &RegressionData,
    prior: &RegressionPrior,
    h: &[f64],
) -> Result<(Cholesky<f64, Dyn>, DVector<f64>)> {
    if h.len() != data.n() {
        return Err(Error::validation(format!("{} log-variances for {} rows", h.len(), data.n())));
    }
    let mut xnew = data.x.clone();
    let mut ynew = data.y.clone();
    for (t, &ht) in h.iter().enumerate() {
        let w = libm::exp(-ht / 2.0);
        xnew.row_mut(t).scale_mut(w);
        ynew[t] *= w;
    }
    let chol = spd_factor(xnew.tr_mul(&xnew) + &prior.b0inv)?;
    let mean = chol.solve(&(xnew.tr_mul(&ynew) + &prior.b0inv * &prior.b0));
    Ok((chol, mean))
}

/// Draws of the regression with SV errors. `para` and `latent` follow the
/// layout of the plain SV sampler; `beta` is thinned like `para`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvRegressionDraws {
    pub beta: DrawMatrix,
    pub para: ParaDraws,
    pub latent: LatentDraws,
    pub latent0: Vec<f64>,
}

/// Gibbs sampler for the regression with SV errors. Each iteration runs one
/// SV sweep on the current residuals and then draws beta from its Gaussian
/// conditional on the reweighted data. Burn-in, draws, thinning, start values,
/// theta-update strategy and mixture table come from `cfg`; randomness comes
/// from `rng` (the seed in `cfg` is not used).
pub fn gibbs_sv_errors<R: RngCore + ?Sized>(
    data: &RegressionData,
    prior: &RegressionPrior,
    sv_prior: &PriorSpec,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SvRegressionDraws> {
    prior.validate()?;
    sv_prior.validate()?;
    cfg.validate()?;
    check_compatible(data, prior)?;
    let n = data.n();
    if n < 2 {
        return Err(Error::validation("SV errors need at least 2 observations"));
    }
    if let Some(l) = &cfg.startlatent {
        if l.n() != n {
            return Err(Error::validation(format!(
                "startlatent has {} states for {} observations",
                l.n(),
                n
            )));
        }
    }

    let start_chol = spd_factor(data.x.tr_mul(&data.x) + &prior.b0inv)?;
    let mut beta = start_chol.solve(&(data.x.tr_mul(&data.y) + &prior.b0inv * &prior.b0));
    let resid0 = data.residuals(&beta);
    let (dpara, dlatent) = default_start(resid0.as_slice());
    let mut params = cfg.startpara.unwrap_or(dpara);
    let mut h: Vec<f64> = cfg.startlatent.clone().unwrap_or(dlatent).into_vec();

    let time_index = stored_time_indices(n, cfg.thintime);
    let n_para = cfg.draws / cfg.thinpara;
    let n_latent = cfg.draws / cfg.thinlatent;
    let mut beta_out = DrawMatrix::with_capacity(n_para, data.p());
    let mut para = ParaDraws::default();
    let mut latent = DrawMatrix::with_capacity(n_latent, time_index.len());
    let mut latent0 = Vec::with_capacity(n_latent);

    let mut updater = SvUpdater::new(cfg.mixture.clone(), cfg.theta);
    for it in 1..=cfg.burnin + cfg.draws {
        let ytilde = data.residuals(&beta);
        let ystar = linearized(ytilde.as_slice())?;
        updater.sweep(&ystar, &mut params, &mut h, sv_prior, rng)?;
        let (chol, mean) = sv_beta_precision(data, prior, &h[1..])?;
        beta = draw_gaussian(&chol, &mean, 1.0, rng);
        if it > cfg.burnin {
            let i = it - cfg.burnin;
            if i.is_multiple_of(cfg.thinpara) {
                beta_out.push_row(beta.iter().copied());
                para.mu.push(params.mu());
                para.phi.push(params.phi());
                para.sigma.push(params.sigma());
                para.h_last.push(h[n]);
            }
            if i.is_multiple_of(cfg.thinlatent) {
                latent.push_row(time_index.iter().map(|&t| h[t]));
                latent0.push(h[0]);
            }
        }
    }
    Ok(SvRegressionDraws {
        beta: beta_out,
        para,
        latent: LatentDraws {
            time_index,
            values: latent,
        },
        latent0,
    })
}

//! GARCH(1,1) regression errors and a random-walk Metropolis-Hastings sampler
//! for (beta, alpha).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_core::RngCore;

use crate::driver::DrawMatrix;
use crate::error::{Error, Result};
use crate::linreg::{check_compatible, draw_gaussian, spd_factor, RegressionData, RegressionPrior};
use crate::rng;
use crate::special::LN_2PI;
use crate::stats;

/// sigma^2_t = alpha0 + alpha1 ytilde^2_{t-1} + alpha2 sigma^2_{t-1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    alpha0: f64,
    alpha1: f64,
    alpha2: f64,
}

impl GarchParams {
    pub fn new(alpha0: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(Error::validation(format!("alpha0 must be positive, got {alpha0}")));
        }
        for (name, v) in [("alpha1", alpha1), ("alpha2", alpha2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(Self { alpha0, alpha1, alpha2 })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha0, self.alpha1, self.alpha2]
    }

    /// alpha1 + alpha2 < 1; recorded, never enforced.
    pub fn is_stationary(&self) -> bool {
        self.alpha1 + self.alpha2 < 1.0
    }

    /// Next conditional variance.
    #[inline]
    pub fn next_variance(&self, ytilde_prev: f64, sigma2_prev: f64) -> f64 {
        self.alpha0 + self.alpha1 * ytilde_prev * ytilde_prev + self.alpha2 * sigma2_prev
    }
}

/// Conditional variances sigma^2_1..sigma^2_n.
pub fn garch_recursion(ytilde: &[f64], params: &GarchParams, sigma2_0: f64, ytilde0: f64) -> Vec<f64> {
    let mut s2 = sigma2_0;
    let mut prev = ytilde0;
    ytilde
        .iter()
        .map(|&e| {
            s2 = params.next_variance(prev, s2);
            prev = e;
            s2
        })
        .collect()
}

/// Log-likelihood together with the last conditional variance.
fn loglik_with_last(ytilde: &[f64], params: &GarchParams, sigma2_0: f64, ytilde0: f64) -> (f64, f64) {
    let mut s2 = sigma2_0;
    let mut prev = ytilde0;
    let mut ll = 0.0;
    for &e in ytilde {
        s2 = params.next_variance(prev, s2);
        ll -= 0.5 * (LN_2PI + libm::log(s2) + e * e / s2);
        prev = e;
    }
    (ll, s2)
}

/// sum_t log N(ytilde_t; 0, sigma^2_t).
pub fn garch_loglik(ytilde: &[f64], params: &GarchParams, sigma2_0: f64, ytilde0: f64) -> f64 {
    loglik_with_last(ytilde, params, sigma2_0, ytilde0).0
}

/// Simulates `n` GARCH(1,1) errors starting from the stationary variance
/// (or `alpha0` if the process is not stationary) and a zero past error.
pub fn garch_simulate<R: RngCore + ?Sized>(n: usize, params: &GarchParams, rng: &mut R) -> Vec<f64> {
    let mut s2 = if params.is_stationary() {
        params.alpha0 / (1.0 - params.alpha1 - params.alpha2)
    } else {
        params.alpha0
    };
    let mut prev = 0.0;
    (0..n)
        .map(|_| {
            s2 = params.next_variance(prev, s2);
            prev = libm::sqrt(s2) * rng::std_normal(rng);
            prev
        })
        .collect()
}

/// Metropolis-Hastings decision for a log acceptance ratio and a uniform draw.
#[inline]
pub fn mh_accept(log_ratio: f64, u: f64) -> bool {
    log_ratio >= 0.0 || libm::log(u) < log_ratio
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchConfig {
    pub burnin: usize,
    pub draws: usize,
    /// Random-walk standard deviations on log alpha0, log alpha1, log alpha2.
    pub log_alpha_scales: [f64; 3],
    /// Multiplier on the weighted-least-squares standard errors used as the
    /// beta random-walk covariance.
    pub beta_scale: f64,
}

impl Default for GarchConfig {
    fn default() -> Self {
        Self {
            burnin: 1000,
            draws: 10_000,
            log_alpha_scales: [0.1; 3],
            beta_scale: 1.0,
        }
    }
}

impl GarchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::validation("draws must be at least 1"));
        }
        if self
            .log_alpha_scales
            .iter()
            .chain(core::iter::once(&self.beta_scale))
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::validation("random-walk scales must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchAcceptance {
    pub alpha: [f64; 3],
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchDraws {
    /// M x p
    pub beta: DrawMatrix,
    /// M x 3: alpha0, alpha1, alpha2
    pub alpha: DrawMatrix,
    /// sigma^2_{n+1} implied by each stored draw.
    pub sigma2_next: Vec<f64>,
    pub sigma2_0: f64,
    pub acceptance: GarchAcceptance,
}

/// Method-of-moments start from the squared-residual autocorrelations:
/// persistence alpha1 + alpha2 from rho2 / rho1, alpha1 from rho1, alpha0
/// from the unconditional variance.
pub fn moment_start(e: &[f64]) -> GarchParams {
    let u: Vec<f64> = e.iter().map(|v| v * v).collect();
    let v = stats::mean(&u).max(f64::MIN_POSITIVE);
    let ubar = v;
    let denom: f64 = u.iter().map(|x| (x - ubar) * (x - ubar)).sum();
    let acf = |lag: usize| -> f64 {
        if u.len() <= lag || denom <= 0.0 {
            return 0.0;
        }
        u.windows(lag + 1).map(|w| (w[0] - ubar) * (w[lag] - ubar)).sum::<f64>() / denom
    };
    let (r1, r2) = (acf(1), acf(2));
    let persistence = if r1 > 0.02 && r2 > 0.0 { (r2 / r1).clamp(0.5, 0.98) } else { 0.9 };
    // rho1(a1) = a1 (1 - a2 P) / (1 - 2 a1 a2 - a2^2), a2 = P - a1
    let rho1 = |a1: f64| {
        let a2 = persistence - a1;
        a1 * (1.0 - a2 * persistence) / (1.0 - 2.0 * a1 * a2 - a2 * a2)
    };
    let mut alpha1 = 0.05_f64.min(persistence / 2.0);
    if r1 > 0.02 {
        let (mut lo, mut hi) = (1e-4, persistence - 1e-4);
        // keep the fourth moment finite, where the formula holds
        let fourth_moment_gap = |a1: f64| {
            let a2 = persistence - a1;
            1.0 - 2.0 * a1 * a2 - a2 * a2 - 2.0 * a1 * a1
        };
        while hi > lo && fourth_moment_gap(hi) <= 0.0 {
            hi *= 0.9;
        }
        if hi > lo && rho1(lo) < r1 && rho1(hi) > r1 {
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if rho1(mid) < r1 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            alpha1 = 0.5 * (lo + hi);
        }
    }
    GarchParams::new(v * (1.0 - persistence), alpha1, persistence - alpha1).expect("moment start is positive")
}

/// Random-walk MH chain over (beta, alpha). The log-likelihood of the
/// current state is carried along and replaced on each accepted move.
#[derive(Debug, Clone)]
pub struct GarchSampler {
    data: RegressionData,
    b0: DVector<f64>,
    b0inv: DMatrix<f64>,
    cfg: GarchConfig,
    beta_prop: Cholesky<f64, Dyn>,
    sigma2_0: f64,
    beta: DVector<f64>,
    alpha: GarchParams,
    resid: Vec<f64>,
    loglik: f64,
    sigma2_last: f64,
    accepted: [usize; 4],
    steps: usize,
}

const YTILDE0: f64 = 0.0;

impl GarchSampler {
    /// OLS beta, moment-based alpha, sigma^2_0 fixed to the OLS residual
    /// variance, and the beta proposal from the weighted least-squares fit at
    /// those starts. Priors: flat on alpha over the positive orthant; the
    /// Gaussian N(b0, B0inv^{-1}) on beta (flat when B0inv = 0). c0 and C0
    /// are not used.
    pub fn new(data: &RegressionData, prior: &RegressionPrior, cfg: GarchConfig) -> Result<Self> {
        prior.validate()?;
        cfg.validate()?;
        check_compatible(data, prior)?;
        if data.n() < 2 {
            return Err(Error::validation("GARCH errors need at least 2 observations"));
        }
        let x = data.x();
        let ols = spd_factor(x.tr_mul(x) + &prior.b0inv)?.solve(&(x.tr_mul(data.y()) + &prior.b0inv * &prior.b0));
        let resid: Vec<f64> = data.residuals(&ols).iter().copied().collect();
        let sigma2_0 = stats::mean(&resid.iter().map(|e| e * e).collect::<Vec<_>>());
        if !(sigma2_0 > 0.0) {
            return Err(Error::validation("residual variance at the start is zero"));
        }
        let alpha = moment_start(&resid);
        let s2 = garch_recursion(&resid, &alpha, sigma2_0, YTILDE0);
        let mut xw = x.clone();
        for (t, v) in s2.iter().enumerate() {
            xw.row_mut(t).scale_mut(1.0 / libm::sqrt(*v));
        }
        let beta_prop = spd_factor(xw.tr_mul(&xw) + &prior.b0inv)?;
        let (loglik, sigma2_last) = loglik_with_last(&resid, &alpha, sigma2_0, YTILDE0);
        Ok(Self {
            data: data.clone(),
            b0: prior.b0.clone(),
            b0inv: prior.b0inv.clone(),
            cfg,
            beta_prop,
            sigma2_0,
            beta: ols,
            alpha,
            resid,
            loglik,
            sigma2_last,
            accepted: [0; 4],
            steps: 0,
        })
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn alpha(&self) -> &GarchParams {
        &self.alpha
    }

    pub fn sigma2_0(&self) -> f64 {
        self.sigma2_0
    }

    /// Carried log-likelihood of the current state.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// Log-likelihood of the current state evaluated from scratch.
    pub fn recompute_loglik(&self) -> f64 {
        let e = self.data.residuals(&self.beta);
        garch_loglik(e.as_slice(), &self.alpha, self.sigma2_0, YTILDE0)
    }

    /// sigma^2_{n+1} at the current state.
    pub fn sigma2_next(&self) -> f64 {
        self.alpha.next_variance(*self.resid.last().expect("n >= 2"), self.sigma2_last)
    }

    pub fn acceptance(&self) -> GarchAcceptance {
        let s = self.steps.max(1) as f64;
        GarchAcceptance {
            alpha: [
                self.accepted[0] as f64 / s,
                self.accepted[1] as f64 / s,
                self.accepted[2] as f64 / s,
            ],
            beta: self.accepted[3] as f64 / s,
        }
    }

    fn ln_prior_beta(&self, beta: &DVector<f64>) -> f64 {
        let d = beta - &self.b0;
        -0.5 * d.dot(&(&self.b0inv * &d))
    }

    /// One sweep: each log alpha_i in turn, then beta jointly.
    pub fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        self.steps += 1;
        for i in 0..3 {
            let mut a = self.alpha.as_array();
            let old = a[i];
            a[i] = old * libm::exp(self.cfg.log_alpha_scales[i] * rng::std_normal(rng));
            let u = rng::uniform(rng);
            let Ok(prop) = GarchParams::new(a[0], a[1], a[2]) else {
                continue;
            };
            if !(a[i] > 0.0) {
                continue;
            }
            let (ll, last) = loglik_with_last(&self.resid, &prop, self.sigma2_0, YTILDE0);
            // flat prior on alpha_i, log-scale proposal: Jacobian alpha'_i / alpha_i
            let ratio = ll - self.loglik + libm::log(a[i]) - libm::log(old);
            if ll.is_finite() && mh_accept(ratio, u) {
                self.alpha = prop;
                self.loglik = ll;
                self.sigma2_last = last;
                self.accepted[i] += 1;
            }
        }
        let zero = DVector::zeros(self.beta.len());
        let dev = draw_gaussian(&self.beta_prop, &zero, self.cfg.beta_scale, rng);
        let u = rng::uniform(rng);
        let prop = &self.beta + dev;
        let resid: Vec<f64> = self.data.residuals(&prop).iter().copied().collect();
        let (ll, last) = loglik_with_last(&resid, &self.alpha, self.sigma2_0, YTILDE0);
        let ratio = ll - self.loglik + self.ln_prior_beta(&prop) - self.ln_prior_beta(&self.beta);
        if ll.is_finite() && mh_accept(ratio, u) {
            self.beta = prop;
            self.resid = resid;
            self.loglik = ll;
            self.sigma2_last = last;
            self.accepted[3] += 1;
        }
    }
}

pub fn garch_rwmh<R: RngCore + ?Sized>(
    data: &RegressionData,
    prior: &RegressionPrior,
    cfg: &GarchConfig,
    rng: &mut R,
) -> Result<GarchDraws> {
    let mut s = GarchSampler::new(data, prior, *cfg)?;
    let p = data.p();
    let mut beta = DrawMatrix::with_capacity(cfg.draws, p);
    let mut alpha = DrawMatrix::with_capacity(cfg.draws, 3);
    let mut sigma2_next = Vec::with_capacity(cfg.draws);
    for it in 0..cfg.burnin + cfg.draws {
        s.step(rng);
        if it >= cfg.burnin {
            beta.push_row(s.beta.iter().copied());
            alpha.push_row(s.alpha.as_array());
            sigma2_next.push(s.sigma2_next());
        }
    }
    let acceptance = s.acceptance();
    if acceptance.alpha.iter().chain(core::iter::once(&acceptance.beta)).any(|&a| a == 0.0) {
        log::warn!(
            "GARCH sampler accepted no moves in some block (rates {:?}, log-alpha scales {:?}, beta scale {})",
            acceptance,
            cfg.log_alpha_scales,
            cfg.beta_scale
        );
    }
    Ok(GarchDraws {
        beta,
        alpha,
        sigma2_next,
        sigma2_0: s.sigma2_0,
        acceptance,
    })
}

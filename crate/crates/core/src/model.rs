//! Domain types of the stochastic volatility model, data preparation, the
//! process simulator and the closed-form prior densities.
//!
//! The model in its centered parameterization:
//!
//! ```text
//! y_t | h_t            ~ N(0, exp(h_t))
//! h_t | h_{t-1}, theta ~ N(mu + phi (h_{t-1} - mu), sigma^2)
//! h_0 | theta          ~ N(mu, sigma^2 / (1 - phi^2))
//! ```
//!
//! with independent priors `mu ~ N(b_mu, B_mu)`, `(phi + 1)/2 ~ Beta(a0, b0)`
//! and `sigma^2 ~ B_sigma * chi^2_1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::rng;
use crate::special::{ln_beta, LN_2PI};

/// Mean-zero return series; the observations `y_1..y_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsSeries {
    values: Vec<f64>,
    labels: Option<Vec<String>>,
    had_zeros: bool,
}

impl ReturnsSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::validation(format!(
                "return series needs at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "return series contains a missing or non-finite value at position {}",
                i + 1
            )));
        }
        let had_zeros = values.contains(&0.0);
        Ok(Self {
            values,
            labels: None,
            had_zeros,
        })
    }

    /// Attach calendar labels (one per value). Labels are carried through to
    /// outputs and never used in computation.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.values.len() {
            return Err(Error::validation(format!(
                "{} labels for {} values",
                labels.len(),
                self.values.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn had_zeros(&self) -> bool {
        self.had_zeros
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// theta = (mu, phi, sigma_eta).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParameters {
    mu: f64,
    phi: f64,
    sigma: f64,
}

impl SvParameters {
    pub fn new(mu: f64, phi: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::validation(format!("mu must be finite, got {mu}")));
        }
        if !(phi.abs() < 1.0) {
            return Err(Error::validation(format!("|phi| must be < 1, got {phi}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::validation(format!(
                "sigma_eta must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { mu, phi, sigma })
    }

    /// True if `(mu, phi, sigma)` lies in the parameter space.
    pub fn admissible(mu: f64, phi: f64, sigma: f64) -> bool {
        mu.is_finite() && phi.abs() < 1.0 && sigma > 0.0 && sigma.is_finite()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Stationary variance of the log-variance process, sigma^2 / (1 - phi^2).
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

/// h = (h_0, h_1, ..., h_n); index 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    h: Vec<f64>,
}

impl LatentPath {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.len() < 2 {
            return Err(Error::validation("latent path needs h_0 and at least one h_t"));
        }
        if let Some(i) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("latent state h_{i} is not finite")));
        }
        Ok(Self { h })
    }

    /// Constant path of length `n + 1`.
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(alloc::vec![value; n + 1])
    }

    pub(crate) fn from_vec_unchecked(h: Vec<f64>) -> Self {
        Self { h }
    }

    /// Number of observation-time states, n (excludes h_0).
    pub fn n(&self) -> usize {
        self.h.len() - 1
    }

    pub fn h0(&self) -> f64 {
        self.h[0]
    }

    pub fn last(&self) -> f64 {
        self.h[self.h.len() - 1]
    }

    /// All states including h_0.
    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }

    /// h_1..h_n.
    pub fn states(&self) -> &[f64] {
        &self.h[1..]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.h
    }
}

/// Hyperparameters of the three independent prior components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    /// Prior mean of mu.
    pub b_mu: f64,
    /// Prior variance of mu.
    pub var_mu: f64,
    pub a0: f64,
    pub b0: f64,
    /// Scale of the chi^2_1 prior on sigma_eta^2.
    pub b_sigma: f64,
}

impl PriorSpec {
    pub fn new(b_mu: f64, var_mu: f64, a0: f64, b0: f64, b_sigma: f64) -> Result<Self> {
        let p = Self {
            b_mu,
            var_mu,
            a0,
            b0,
            b_sigma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds the prior from the command-line style triple
    /// `priormu = (mean, sd)`, `priorphi = (a0, b0)`, `priorsigma`.
    pub fn from_args(priormu: (f64, f64), priorphi: (f64, f64), priorsigma: f64) -> Result<Self> {
        Self::new(
            priormu.0,
            priormu.1 * priormu.1,
            priorphi.0,
            priorphi.1,
            priorsigma,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !self.b_mu.is_finite() {
            return Err(Error::validation("prior mean of mu must be finite"));
        }
        for (name, v) in [
            ("B_mu", self.var_mu),
            ("a0", self.a0),
            ("b0", self.b0),
            ("B_sigma", self.b_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "prior hyperparameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn sd_mu(&self) -> f64 {
        libm::sqrt(self.var_mu)
    }
}

impl Default for PriorSpec {
    /// `priormu = (0, 100)`, `priorphi = (5, 1.5)`, `priorsigma = 1`.
    fn default() -> Self {
        Self {
            b_mu: 0.0,
            var_mu: 100.0 * 100.0,
            a0: 5.0,
            b0: 1.5,
            b_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub returns: ReturnsSeries,
    pub latent: LatentPath,
    pub parameters: SvParameters,
    pub seed: u64,
}

/// Log returns `log(p_{t+1}) - log(p_t)`, optionally demeaned by their
/// arithmetic mean.
pub fn logret(prices: &[f64], demean: bool) -> Result<ReturnsSeries> {
    if prices.len() < 3 {
        // Two prices give one return; ReturnsSeries needs two.
        return Err(Error::validation(format!(
            "need at least 3 prices to form 2 returns, got {}",
            prices.len()
        )));
    }
    if let Some(i) = prices.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::validation(format!(
            "price at position {} is not strictly positive: {}",
            i + 1,
            prices[i]
        )));
    }
    let mut r: Vec<f64> = prices
        .windows(2)
        .map(|w| libm::log(w[1]) - libm::log(w[0]))
        .collect();
    if demean {
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter_mut().for_each(|v| *v -= mean);
    }
    ReturnsSeries::new(r)
}

/// Simulates `n` observations of the SV process from `seed`.
pub fn svsim(n: usize, params: SvParameters, seed: u64) -> Result<SimOutput> {
    let mut rng = rng::rng_from_seed(seed);
    let (returns, latent) = svsim_with_rng(n, params, &mut rng)?;
    Ok(SimOutput {
        returns,
        latent,
        parameters: params,
        seed,
    })
}

/// Simulator core. Draw order is fixed: h_0, h_1, y_1, h_2, y_2, ...
pub fn svsim_with_rng<R: RngCore + ?Sized>(
    n: usize,
    params: SvParameters,
    rng: &mut R,
) -> Result<(ReturnsSeries, LatentPath)> {
    if n < 2 {
        return Err(Error::validation(format!(
            "simulation length must be at least 2, got {n}"
        )));
    }
    let (mu, phi, sigma) = (params.mu, params.phi, params.sigma);
    let mut h = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n);
    h.push(rng::normal(rng, mu, libm::sqrt(params.stationary_variance())));
    for t in 1..=n {
        let ht = mu + phi * (h[t - 1] - mu) + sigma * rng::std_normal(rng);
        h.push(ht);
        y.push(libm::exp(ht / 2.0) * rng::std_normal(rng));
    }
    Ok((ReturnsSeries::new(y)?, LatentPath::from_vec_unchecked(h)))
}

fn check_beta_hyper(a0: f64, b0: f64) -> Result<()> {
    if !(a0 > 0.0 && b0 > 0.0 && a0.is_finite() && b0.is_finite()) {
        return Err(Error::validation(format!(
            "beta hyperparameters must be positive, got a0={a0}, b0={b0}"
        )));
    }
    Ok(())
}

/// Density of phi when (phi + 1)/2 ~ Beta(a0, b0); zero outside (-1, 1).
pub fn prior_phi_density(phi: f64, a0: f64, b0: f64) -> Result<f64> {
    check_beta_hyper(a0, b0)?;
    Ok(libm::exp(ln_prior_phi(phi, a0, b0)))
}

/// Prior mean and standard deviation of phi.
pub fn prior_phi_moments(a0: f64, b0: f64) -> Result<(f64, f64)> {
    check_beta_hyper(a0, b0)?;
    let s = a0 + b0;
    let mean = 2.0 * a0 / s - 1.0;
    let var = 4.0 * a0 * b0 / (s * s * (s + 1.0));
    Ok((mean, libm::sqrt(var)))
}

pub fn ln_prior_mu(mu: f64, prior: &PriorSpec) -> f64 {
    let d = mu - prior.b_mu;
    -0.5 * (LN_2PI + libm::log(prior.var_mu) + d * d / prior.var_mu)
}

pub fn ln_prior_phi(phi: f64, a0: f64, b0: f64) -> f64 {
    if !(phi.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a0 - 1.0) * libm::log((1.0 + phi) / 2.0) + (b0 - 1.0) * libm::log((1.0 - phi) / 2.0)
        - core::f64::consts::LN_2
        - ln_beta(a0, b0)
}

/// log density of sigma_eta when sigma_eta^2 ~ Gamma(1/2, rate 1/(2 B_sigma)),
/// i.e. a half-normal with scale sqrt(B_sigma).
pub fn ln_prior_sigma(sigma: f64, b_sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    core::f64::consts::LN_2 - 0.5 * (LN_2PI + libm::log(b_sigma)) - sigma * sigma / (2.0 * b_sigma)
}

/// log p(mu) + log p(phi) + log p(sigma_eta).
pub fn prior_log_density_theta(params: &SvParameters, prior: &PriorSpec) -> f64 {
    ln_prior_mu(params.mu, prior)
        + ln_prior_phi(params.phi, prior.a0, prior.b0)
        + ln_prior_sigma(params.sigma, prior.b_sigma)
}

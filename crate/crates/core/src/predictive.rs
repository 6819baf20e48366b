//! One-step-ahead predictive likelihoods, rolling refits, cumulative log
//! predictive Bayes factors and the marginal-likelihood decomposition.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::driver::{DrawMatrix, SamplerConfig};
use crate::error::{Error, Result};
use crate::garch::{garch_rwmh, GarchConfig, GarchDraws};
use crate::linreg::{gibbs_homoskedastic, gibbs_sv_errors, HomoskedasticDraws, RegressionData, RegressionPrior, SvRegressionDraws};
use crate::model::PriorSpec;
use crate::rng;
use crate::special::{log_sum_exp, normal_ln_pdf};
use crate::stats;

pub const DEFAULT_PREDICTIVE_QUANTILES: [f64; 3] = [0.01, 0.5, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelTag {
    Homoskedastic,
    Garch,
    Sv,
}

impl ModelTag {
    pub const ALL: [ModelTag; 3] = [ModelTag::Homoskedastic, ModelTag::Garch, ModelTag::Sv];

    pub fn name(self) -> &'static str {
        match self {
            ModelTag::Homoskedastic => "homoskedastic",
            ModelTag::Garch => "garch",
            ModelTag::Sv => "sv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown model '{s}' (expected homoskedastic, garch or sv)")))
    }

    fn code(self) -> u64 {
        match self {
            ModelTag::Homoskedastic => 1,
            ModelTag::Garch => 2,
            ModelTag::Sv => 3,
        }
    }
}

impl core::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Posterior draws from a fit on the training window, reduced to what the
/// one-step-ahead predictive needs.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveDraws {
    Homoskedastic { beta: DrawMatrix, sigma: Vec<f64> },
    /// `sigma2_next` is sigma^2_{t+1} per draw.
    Garch { beta: DrawMatrix, sigma2_next: Vec<f64> },
    /// `h_last` is h_t per draw; h_{t+1} is propagated at prediction time.
    Sv {
        beta: DrawMatrix,
        mu: Vec<f64>,
        phi: Vec<f64>,
        sigma: Vec<f64>,
        h_last: Vec<f64>,
    },
}

impl PredictiveDraws {
    pub fn tag(&self) -> ModelTag {
        match self {
            PredictiveDraws::Homoskedastic { .. } => ModelTag::Homoskedastic,
            PredictiveDraws::Garch { .. } => ModelTag::Garch,
            PredictiveDraws::Sv { .. } => ModelTag::Sv,
        }
    }

    pub fn len(&self) -> usize {
        self.beta().rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn beta(&self) -> &DrawMatrix {
        match self {
            PredictiveDraws::Homoskedastic { beta, .. }
            | PredictiveDraws::Garch { beta, .. }
            | PredictiveDraws::Sv { beta, .. } => beta,
        }
    }
}

impl From<HomoskedasticDraws> for PredictiveDraws {
    fn from(d: HomoskedasticDraws) -> Self {
        PredictiveDraws::Homoskedastic {
            beta: d.beta,
            sigma: d.sigma_eps,
        }
    }
}

impl From<GarchDraws> for PredictiveDraws {
    fn from(d: GarchDraws) -> Self {
        PredictiveDraws::Garch {
            beta: d.beta,
            sigma2_next: d.sigma2_next,
        }
    }
}

impl From<SvRegressionDraws> for PredictiveDraws {
    fn from(d: SvRegressionDraws) -> Self {
        PredictiveDraws::Sv {
            beta: d.beta,
            mu: d.para.mu,
            phi: d.para.phi,
            sigma: d.para.sigma,
            h_last: d.para.h_last,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveRecord {
    /// Index of the predicted observation.
    pub t: usize,
    pub log_pl: f64,
    /// (probability, quantile) pairs of the simulated predictive draws,
    /// ascending in probability.
    pub quantiles: Vec<(f64, f64)>,
    pub model: ModelTag,
}

/// log of the mean of exp(values), by max subtraction.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - libm::log(values.len() as f64)
}

fn sorted_probs(quantiles: &[f64]) -> Result<Vec<f64>> {
    if quantiles.is_empty() {
        return Err(Error::validation("quantile list is empty"));
    }
    if let Some(p) = quantiles.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::validation(format!("quantile {p} is outside (0, 1)")));
    }
    let mut probs = quantiles.to_vec();
    probs.sort_by(f64::total_cmp);
    probs.dedup();
    Ok(probs)
}

/// Predictive likelihood of `y_next` at design row `x_next`, averaged over the
/// last `m` stored draws, and quantiles of `m` simulated predictive draws.
pub fn predictive_step<R: RngCore + ?Sized>(
    draws: &PredictiveDraws,
    x_next: &[f64],
    y_next: f64,
    t: usize,
    m: usize,
    quantiles: &[f64],
    rng: &mut R,
) -> Result<PredictiveRecord> {
    if m == 0 {
        return Err(Error::validation("number of predictive draws M must be at least 1"));
    }
    let available = draws.len();
    if m > available {
        return Err(Error::validation(format!("M = {m} exceeds the {available} available posterior draws")));
    }
    let beta = draws.beta();
    if x_next.len() != beta.cols() {
        return Err(Error::validation(format!(
            "design row has {} entries, draws have {} coefficients",
            x_next.len(),
            beta.cols()
        )));
    }
    let probs = sorted_probs(quantiles)?;
    let mut logd = Vec::with_capacity(m);
    let mut sims = Vec::with_capacity(m);
    for i in available - m..available {
        let mean: f64 = beta.row(i).iter().zip(x_next).map(|(b, x)| b * x).sum();
        let var = match draws {
            PredictiveDraws::Homoskedastic { sigma, .. } => sigma[i] * sigma[i],
            PredictiveDraws::Garch { sigma2_next, .. } => sigma2_next[i],
            PredictiveDraws::Sv {
                mu,
                phi,
                sigma,
                h_last,
                ..
            } => {
                let h = mu[i] + phi[i] * (h_last[i] - mu[i]) + sigma[i] * rng::std_normal(rng);
                libm::exp(h)
            }
        };
        logd.push(normal_ln_pdf(y_next, mean, var));
        sims.push(mean + libm::sqrt(var) * rng::std_normal(rng));
    }
    let log_pl = log_mean_exp(&logd);
    if !log_pl.is_finite() {
        return Err(Error::internal(format!("predictive density at t = {t} is not finite")));
    }
    let q = stats::quantiles(&sims, &probs);
    Ok(PredictiveRecord {
        t,
        log_pl,
        quantiles: probs.into_iter().zip(q).collect(),
        model: draws.tag(),
    })
}

/// Settings shared by all refits of a rolling evaluation. Burn-in and draw
/// counts in `sampler` apply to every model; `garch` contributes its
/// proposal scales only.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    pub sampler: SamplerConfig,
    pub regression_prior: RegressionPrior,
    pub sv_prior: PriorSpec,
    pub garch: GarchConfig,
    /// Draws per predictive evaluation; all stored draws when `None`.
    pub pl_draws: Option<usize>,
    pub quantiles: Vec<f64>,
    pub seed: u64,
}

impl EvaluationConfig {
    /// Defaults for the AR(1) regression: vague prior N(0, 1e10 I) on beta,
    /// IG(0.001, 0.001) on the error variance.
    pub fn new(sampler: SamplerConfig, seed: u64) -> Self {
        Self {
            sampler,
            regression_prior: RegressionPrior::isotropic(2, 1e-10, 0.001, 0.001).expect("valid default prior"),
            sv_prior: PriorSpec::default(),
            garch: GarchConfig::default(),
            pl_draws: None,
            quantiles: DEFAULT_PREDICTIVE_QUANTILES.to_vec(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.regression_prior.validate()?;
        self.sv_prior.validate()?;
        self.garch.validate()?;
        sorted_probs(&self.quantiles)?;
        if self.pl_draws == Some(0) {
            return Err(Error::validation("number of predictive draws M must be at least 1"));
        }
        Ok(())
    }
}

/// Seed of the (model, t) refit: `seed` XOR a splitmix hash of the pair.
pub fn task_seed(seed: u64, model: ModelTag, t: usize) -> u64 {
    seed ^ rng::mix_seed((model.code() << 48) ^ t as u64)
}

/// Fits `model` to the AR(1)-in-levels regression on y_1..y_t and evaluates
/// the predictive likelihood of y_{t+1} at design row (1, y_t).
pub fn evaluate_task(y: &[f64], t: usize, model: ModelTag, cfg: &EvaluationConfig) -> Result<PredictiveRecord> {
    if t == 0 || t >= y.len() {
        return Err(Error::validation(format!("training end {t} outside 1..{}", y.len())));
    }
    let data = RegressionData::ar1(&y[..t])?;
    let mut rng = rng::rng_from_seed(task_seed(cfg.seed, model, t));
    let s = &cfg.sampler;
    let draws: PredictiveDraws = match model {
        ModelTag::Homoskedastic => {
            gibbs_homoskedastic(&data, &cfg.regression_prior, s.burnin, s.draws, &mut rng)?.into()
        }
        ModelTag::Garch => {
            let g = GarchConfig {
                burnin: s.burnin,
                draws: s.draws,
                ..cfg.garch
            };
            garch_rwmh(&data, &cfg.regression_prior, &g, &mut rng)?.into()
        }
        ModelTag::Sv => {
            // only theta and h_t are needed; keep latent storage minimal
            let sc = SamplerConfig {
                thinlatent: s.draws,
                thintime: data.n().max(1),
                startpara: None,
                startlatent: None,
                ..s.clone()
            };
            gibbs_sv_errors(&data, &cfg.regression_prior, &cfg.sv_prior, &sc, &mut rng)?.into()
        }
    };
    let m = cfg.pl_draws.unwrap_or(draws.len());
    predictive_step(&draws, &[1.0, y[t - 1]], y[t], t + 1, m, &cfg.quantiles, &mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskFailure {
    pub model: ModelTag,
    /// Training end; the failed prediction was for t + 1.
    pub t: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationOutput {
    /// Successful records per model, ascending in t.
    pub records: Vec<(ModelTag, Vec<PredictiveRecord>)>,
    pub failures: Vec<TaskFailure>,
}

impl EvaluationOutput {
    pub fn records_for(&self, model: ModelTag) -> Option<&[PredictiveRecord]> {
        self.records.iter().find(|(m, _)| *m == model).map(|(_, r)| r.as_slice())
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// The (model, training end) pairs of a rolling evaluation, in output order.
pub fn evaluation_tasks(n: usize, s: usize, models: &[ModelTag]) -> Result<Vec<(ModelTag, usize)>> {
    if !(s >= 1 && s < n) {
        return Err(Error::validation(format!("training cutoff {s} must satisfy 1 <= s < n = {n}")));
    }
    if models.is_empty() {
        return Err(Error::validation("no models to evaluate"));
    }
    let mut uniq = models.to_vec();
    uniq.sort();
    uniq.dedup();
    Ok(uniq.into_iter().flat_map(|m| (s..n).map(move |t| (m, t))).collect())
}

/// Groups per-task results (in the order of `tasks`) into an output.
pub fn collect_results(tasks: &[(ModelTag, usize)], results: Vec<Result<PredictiveRecord>>) -> EvaluationOutput {
    let mut records: Vec<(ModelTag, Vec<PredictiveRecord>)> = Vec::new();
    let mut failures = Vec::new();
    for (&(model, t), res) in tasks.iter().zip(results) {
        if records.last().map(|(m, _)| *m) != Some(model) {
            records.push((model, Vec::new()));
        }
        match res {
            Ok(r) => records.last_mut().expect("pushed above").1.push(r),
            Err(e) => failures.push(TaskFailure {
                model,
                t,
                message: e.to_string(),
            }),
        }
    }
    EvaluationOutput { records, failures }
}

fn check_series(y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("observation {} is not finite", i + 1)));
    }
    Ok(())
}

/// Serial rolling evaluation over t = s..n-1. Failed refits are collected
/// in `failures` and the remaining tasks still run.
pub fn rolling_evaluation(y: &[f64], s: usize, models: &[ModelTag], cfg: &EvaluationConfig) -> Result<EvaluationOutput> {
    check_series(y)?;
    cfg.validate()?;
    let tasks = evaluation_tasks(y.len(), s, models)?;
    let results = tasks.iter().map(|&(m, t)| evaluate_task(y, t, m, cfg)).collect();
    Ok(collect_results(&tasks, results))
}

/// Checks the inputs of a rolling evaluation without running it.
pub fn validate_evaluation(y: &[f64], s: usize, models: &[ModelTag], cfg: &EvaluationConfig) -> Result<Vec<(ModelTag, usize)>> {
    check_series(y)?;
    cfg.validate()?;
    evaluation_tasks(y.len(), s, models)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesFactorSeries {
    pub s: usize,
    /// Time indices u = s+1..
    pub t: Vec<usize>,
    pub cumulative: Vec<f64>,
}

impl BayesFactorSeries {
    pub fn last(&self) -> Option<f64> {
        self.cumulative.last().copied()
    }
}

/// Running sum of log PL_u(A) - log PL_u(B) over u = s+1, s+2, ...
pub fn cumulative_bayes_factor(a: &[PredictiveRecord], b: &[PredictiveRecord], s: usize) -> Result<BayesFactorSeries> {
    if a.len() != b.len() {
        return Err(Error::validation(format!("record counts differ: {} vs {}", a.len(), b.len())));
    }
    let mut acc = 0.0;
    let mut t = Vec::with_capacity(a.len());
    let mut cumulative = Vec::with_capacity(a.len());
    for (k, (ra, rb)) in a.iter().zip(b).enumerate() {
        let expected = s + 1 + k;
        if ra.t != expected || rb.t != expected {
            return Err(Error::validation(format!(
                "records are not aligned at position {k}: t = {} and {}, expected {expected}",
                ra.t, rb.t
            )));
        }
        acc += ra.log_pl - rb.log_pl;
        t.push(expected);
        cumulative.push(acc);
    }
    Ok(BayesFactorSeries { s, t, cumulative })
}

/// Sum of log PL_t over records that cover t = 1..n in order.
pub fn log_marginal_likelihood(records: &[PredictiveRecord]) -> Result<f64> {
    for (k, r) in records.iter().enumerate() {
        if r.t != k + 1 {
            return Err(Error::validation(format!(
                "records must cover t = 1..n without gaps; found t = {} at position {k}",
                r.t
            )));
        }
    }
    Ok(records.iter().map(|r| r.log_pl).sum())
}

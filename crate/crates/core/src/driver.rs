//! The full sampler loop, the single-sweep update for embedding in other
//! samplers, posterior summaries, residuals and volatility forecasts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::latent::LatentWorkspace;
use crate::mixture::{fill_indicators, linearize_values, MixtureTable};
use crate::model::{LatentPath, PriorSpec, ReturnsSeries, SvParameters};
use crate::rng;
use crate::stats;
use crate::theta::{asis_in_place, ThetaUpdateConfig};

pub const DEFAULT_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub burnin: usize,
    pub draws: usize,
    pub thinpara: usize,
    pub thinlatent: usize,
    pub thintime: usize,
    pub quiet: bool,
    pub startpara: Option<SvParameters>,
    pub startlatent: Option<LatentPath>,
    pub seed: u64,
    pub theta: ThetaUpdateConfig,
    pub mixture: MixtureTable,
    pub quantiles: Vec<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burnin: 1000,
            draws: 10_000,
            thinpara: 1,
            thinlatent: 1,
            thintime: 1,
            quiet: false,
            startpara: None,
            startlatent: None,
            seed: 0,
            theta: ThetaUpdateConfig::default(),
            mixture: MixtureTable::omori10(),
            quantiles: DEFAULT_QUANTILES.to_vec(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::validation("draws must be at least 1"));
        }
        for (name, v) in [
            ("thinpara", self.thinpara),
            ("thinlatent", self.thinlatent),
            ("thintime", self.thintime),
        ] {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be at least 1")));
            }
        }
        self.theta.validate()?;
        validate_quantiles(&self.quantiles)?;
        Ok(())
    }
}

/// Row-major matrix of stored draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix data has {} entries, expected {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn with_capacity(rows: usize, cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            data: Vec::with_capacity(rows * cols),
        }
    }

    pub(crate) fn push_row(&mut self, row: impl IntoIterator<Item = f64>) {
        let before = self.data.len();
        self.data.extend(row);
        debug_assert_eq!(self.data.len() - before, self.cols);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Stored parameter draws. `h_last` is h_n at the same iterations and anchors
/// volatility forecasts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParaDraws {
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma: Vec<f64>,
    pub h_last: Vec<f64>,
}

impl ParaDraws {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn params(&self, i: usize) -> SvParameters {
        SvParameters::new(self.mu[i], self.phi[i], self.sigma[i]).expect("stored draws are admissible")
    }

    fn push(&mut self, p: &SvParameters, h_last: f64) {
        self.mu.push(p.mu());
        self.phi.push(p.phi());
        self.sigma.push(p.sigma());
        self.h_last.push(h_last);
    }
}

/// Stored latent draws at the time indices kept by `thintime`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraws {
    /// 1-based time index of each column.
    pub time_index: Vec<usize>,
    pub values: DrawMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thinning {
    pub para: usize,
    pub latent: usize,
    pub time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Values at `SummaryTable::quantile_probs`.
    pub quantiles: Vec<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub quantile_probs: Vec<f64>,
    /// mu, phi, sigma, exp(mu/2), sigma^2
    pub para: Vec<SummaryRecord>,
    /// 100 exp(h_t / 2) per stored time index
    pub latent: Vec<SummaryRecord>,
}

/// Posterior draw store.
#[derive(Debug, Clone, PartialEq)]
pub struct SvDraws {
    pub para: ParaDraws,
    pub latent: LatentDraws,
    pub latent0: Vec<f64>,
    pub y: ReturnsSeries,
    pub runtime: f64,
    pub priors: PriorSpec,
    pub thinning: Thinning,
    pub summary: SummaryTable,
}

/// Hooks for wall-clock timing and progress reporting; the default methods do
/// nothing so that the sampler itself stays free of any platform clock.
pub trait SamplerObserver {
    /// Monotone time in seconds, if a clock is available.
    fn now(&self) -> Option<f64> {
        None
    }

    fn on_start(&mut self, _strategy: &str, _iterations: usize, _series_len: usize) {}

    fn on_progress(&mut self, _done: usize, _total: usize) {}

    fn on_finish(&mut self, _runtime: f64, _iterations: usize) {}
}

pub struct NoObserver;

impl SamplerObserver for NoObserver {}

/// Reusable state for repeated single sweeps: indicator buffer, latent
/// workspace and interweaving scratch.
#[derive(Debug, Clone)]
pub struct SvUpdater {
    table: MixtureTable,
    theta: ThetaUpdateConfig,
    r: Vec<u8>,
    latent: LatentWorkspace,
    scratch: Vec<f64>,
}

impl SvUpdater {
    pub fn new(table: MixtureTable, theta: ThetaUpdateConfig) -> Self {
        Self {
            table,
            theta,
            r: Vec::new(),
            latent: LatentWorkspace::new(),
            scratch: Vec::new(),
        }
    }

    pub fn table(&self) -> &MixtureTable {
        &self.table
    }

    /// Most recent indicator draw.
    pub fn indicators(&self) -> &[u8] {
        &self.r
    }

    /// One composite sweep: indicators, joint latent draw, interweaved theta.
    pub fn sweep<R: RngCore + ?Sized>(
        &mut self,
        ystar: &[f64],
        params: &mut SvParameters,
        h: &mut [f64],
        prior: &PriorSpec,
        rng: &mut R,
    ) -> Result<()> {
        fill_indicators(ystar, &h[1..], &self.table, rng, &mut self.r);
        self.latent.draw(ystar, &self.r, params, &self.table, h, rng)?;
        asis_in_place(h, ystar, &self.r, params, prior, &self.table, &self.theta, rng, &mut self.scratch);
        Ok(())
    }
}

impl Default for SvUpdater {
    fn default() -> Self {
        Self::new(MixtureTable::omori10(), ThetaUpdateConfig::default())
    }
}

fn check_step_inputs(ytilde: &[f64], para: &SvParameters, latent: &LatentPath) -> Result<()> {
    if latent.n() != ytilde.len() {
        return Err(Error::validation(format!(
            "startlatent has {} states for {} observations",
            latent.n(),
            ytilde.len()
        )));
    }
    if ytilde.len() < 2 {
        return Err(Error::validation("need at least 2 observations"));
    }
    if let Some(i) = ytilde.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!("observation {} is not finite", i + 1)));
    }
    SvParameters::new(para.mu(), para.phi(), para.sigma())?;
    Ok(())
}

pub(crate) fn linearized(y: &[f64]) -> Result<Vec<f64>> {
    let had_zeros = y.contains(&0.0);
    let lin = linearize_values(y, had_zeros);
    if lin.ystar().iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(
            "series is identically zero; log-squared returns are undefined",
        ));
    }
    Ok(lin.ystar().to_vec())
}

/// One composite MCMC sweep starting from `(startpara, startlatent)` with the
/// default interweaving configuration and the shipped mixture table.
pub fn sv_update_step<R: RngCore + ?Sized>(
    ytilde: &[f64],
    startpara: &SvParameters,
    startlatent: &LatentPath,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<(SvParameters, LatentPath)> {
    sv_update_step_with(ytilde, startpara, startlatent, prior, &mut SvUpdater::default(), rng)
}

/// As [`sv_update_step`] with caller-owned scratch space and configuration.
pub fn sv_update_step_with<R: RngCore + ?Sized>(
    ytilde: &[f64],
    startpara: &SvParameters,
    startlatent: &LatentPath,
    prior: &PriorSpec,
    updater: &mut SvUpdater,
    rng: &mut R,
) -> Result<(SvParameters, LatentPath)> {
    check_step_inputs(ytilde, startpara, startlatent)?;
    let ystar = linearized(ytilde)?;
    let mut params = *startpara;
    let mut h = startlatent.as_slice().to_vec();
    updater.sweep(&ystar, &mut params, &mut h, prior, rng)?;
    Ok((params, LatentPath::from_vec_unchecked(h)))
}

/// Scale-aware default start: theta = (log var(y), 0.9, 0.1), h = log var(y).
pub fn default_start(y: &[f64]) -> (SvParameters, LatentPath) {
    let v = stats::variance(y);
    let level = if v > 0.0 && libm::log(v).is_finite() { libm::log(v) } else { -10.0 };
    (
        SvParameters::new(level, 0.9, 0.1).expect("finite level"),
        LatentPath::from_vec_unchecked(vec![level; y.len() + 1]),
    )
}

/// Time indices (1-based) kept under `thintime`: 1, 1 + thintime, ...
pub fn stored_time_indices(n: usize, thintime: usize) -> Vec<usize> {
    (1..=n).step_by(thintime).collect()
}

pub fn svsample(y: &ReturnsSeries, prior: &PriorSpec, cfg: &SamplerConfig) -> Result<SvDraws> {
    svsample_observed(y, prior, cfg, &mut NoObserver)
}

/// Runs `burnin + draws` sweeps from `cfg.seed`, storing thinned draws and
/// summarizing them.
pub fn svsample_observed(
    y: &ReturnsSeries,
    prior: &PriorSpec,
    cfg: &SamplerConfig,
    observer: &mut dyn SamplerObserver,
) -> Result<SvDraws> {
    prior.validate()?;
    cfg.validate()?;
    let n = y.len();
    let ystar = linearized(y.values())?;
    let (default_para, default_latent) = default_start(y.values());
    let mut params = cfg.startpara.unwrap_or(default_para);
    let mut h = match &cfg.startlatent {
        Some(l) => {
            if l.n() != n {
                return Err(Error::validation(format!(
                    "startlatent has {} states for {} observations",
                    l.n(),
                    n
                )));
            }
            l.as_slice().to_vec()
        }
        None => default_latent.into_vec(),
    };

    let time_index = stored_time_indices(n, cfg.thintime);
    let n_para = cfg.draws / cfg.thinpara;
    let n_latent = cfg.draws / cfg.thinlatent;
    let mut para = ParaDraws::default();
    let mut latent = DrawMatrix::with_capacity(n_latent, time_index.len());
    let mut latent0 = Vec::with_capacity(n_latent);

    let total = cfg.burnin + cfg.draws;
    let mut updater = SvUpdater::new(cfg.mixture.clone(), cfg.theta);
    let mut rng = rng::rng_from_seed(cfg.seed);
    let start = observer.now();
    if !cfg.quiet {
        observer.on_start(cfg.theta.strategy_name(), total, n);
    }
    let tick = (total / 10).max(1);
    for it in 1..=total {
        updater.sweep(&ystar, &mut params, &mut h, prior, &mut rng)?;
        if it > cfg.burnin {
            let i = it - cfg.burnin;
            if i.is_multiple_of(cfg.thinpara) {
                para.push(&params, h[n]);
            }
            if i.is_multiple_of(cfg.thinlatent) {
                latent.push_row(time_index.iter().map(|&t| h[t]));
                latent0.push(h[0]);
            }
        }
        if !cfg.quiet && (it % tick == 0 || it == total) {
            observer.on_progress(it, total);
        }
    }
    let runtime = match (start, observer.now()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    if !cfg.quiet {
        observer.on_finish(runtime, total);
    }
    debug_assert_eq!(para.len(), n_para);
    debug_assert_eq!(latent.rows(), n_latent);

    let mut draws = SvDraws {
        para,
        latent: LatentDraws {
            time_index,
            values: latent,
        },
        latent0,
        y: y.clone(),
        runtime,
        priors: *prior,
        thinning: Thinning {
            para: cfg.thinpara,
            latent: cfg.thinlatent,
            time: cfg.thintime,
        },
        summary: SummaryTable {
            quantile_probs: Vec::new(),
            para: Vec::new(),
            latent: Vec::new(),
        },
    };
    draws.summary = summarize(&draws, &cfg.quantiles)?;
    Ok(draws)
}

fn validate_quantiles(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::validation("quantile list is empty"));
    }
    if let Some(p) = q.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::validation(format!("quantile {p} is outside (0, 1)")));
    }
    Ok(())
}

fn record(name: String, x: &[f64], probs: &[f64]) -> SummaryRecord {
    SummaryRecord {
        name,
        mean: stats::mean(x),
        sd: stats::sd(x),
        quantiles: stats::quantiles(x, probs),
        ess: stats::ess_batch_means(x),
    }
}

fn summarize(d: &SvDraws, quantiles: &[f64]) -> Result<SummaryTable> {
    validate_quantiles(quantiles)?;
    let mut probs = quantiles.to_vec();
    probs.sort_by(f64::total_cmp);
    probs.dedup();
    let p = &d.para;
    let mut para = Vec::with_capacity(5);
    if !p.is_empty() {
        para.push(record("mu".into(), &p.mu, &probs));
        para.push(record("phi".into(), &p.phi, &probs));
        para.push(record("sigma".into(), &p.sigma, &probs));
        let level: Vec<f64> = p.mu.iter().map(|m| libm::exp(m / 2.0)).collect();
        para.push(record("exp(mu/2)".into(), &level, &probs));
        let var: Vec<f64> = p.sigma.iter().map(|s| s * s).collect();
        para.push(record("sigma^2".into(), &var, &probs));
    }
    let lv = &d.latent.values;
    let mut latent = Vec::with_capacity(lv.cols());
    if lv.rows() > 0 {
        let mut col = vec![0.0; lv.rows()];
        for (j, &t) in d.latent.time_index.iter().enumerate() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = 100.0 * libm::exp(lv.get(i, j) / 2.0);
            }
            latent.push(record(format!("h_{t}"), &col, &probs));
        }
    }
    Ok(SummaryTable {
        quantile_probs: probs,
        para,
        latent,
    })
}

/// Recomputes the summary table for new quantile levels.
pub fn updatesummary(mut d: SvDraws, quantiles: &[f64]) -> Result<SvDraws> {
    d.summary = summarize(&d, quantiles)?;
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualType {
    Mean,
    Median,
}

/// Standardized residuals: per t, the mean or median over draws of
/// `y_t / exp(h_t / 2)`.
pub fn residuals(d: &SvDraws, kind: ResidualType) -> Result<Vec<f64>> {
    if d.thinning.time != 1 || d.latent.time_index.len() != d.y.len() {
        return Err(Error::validation(
            "residuals need latent draws for every time point (thintime = 1)",
        ));
    }
    let lv = &d.latent.values;
    if lv.rows() == 0 {
        return Err(Error::validation("no stored latent draws"));
    }
    let mut col = vec![0.0; lv.rows()];
    Ok(d
        .y
        .values()
        .iter()
        .enumerate()
        .map(|(j, &yt)| {
            for (i, c) in col.iter_mut().enumerate() {
                *c = yt / libm::exp(lv.get(i, j) / 2.0);
            }
            match kind {
                ResidualType::Mean => stats::mean(&col),
                ResidualType::Median => stats::median(&col),
            }
        })
        .collect())
}

/// Iterates the state equation `horizon` steps ahead from `h_last`, drawing
/// innovations from `noise`.
pub fn forecast_path(params: &SvParameters, h_last: f64, horizon: usize, mut noise: impl FnMut() -> f64) -> Vec<f64> {
    let (mu, phi, sigma) = (params.mu(), params.phi(), params.sigma());
    let mut h = h_last;
    (0..horizon)
        .map(|_| {
            h = mu + phi * (h - mu) + sigma * noise();
            h
        })
        .collect()
}

/// Forecast draws of h_{n+1..n+horizon}: one row per stored parameter draw.
pub fn predict_volatility<R: RngCore + ?Sized>(d: &SvDraws, horizon: usize, rng: &mut R) -> Result<DrawMatrix> {
    if horizon == 0 {
        return Err(Error::validation("forecast horizon must be at least 1"));
    }
    let m = d.para.len();
    let mut out = DrawMatrix::with_capacity(m, horizon);
    for i in 0..m {
        let p = d.para.params(i);
        out.push_row(forecast_path(&p, d.para.h_last[i], horizon, || rng::std_normal(rng)));
    }
    Ok(out)
}

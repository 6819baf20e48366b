//! Argument definitions and the four workflows: simulate, fit, regress,
//! evaluate.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::{json, Value};
use volatil_core::driver::{
    predict_volatility, svsample_observed, updatesummary, DrawMatrix, LatentDraws, NoObserver, ParaDraws,
    SamplerConfig, SamplerObserver, SvDraws,
};
use volatil_core::garch::GarchConfig;
use volatil_core::predictive::{EvaluationConfig, EvaluationOutput, DEFAULT_PREDICTIVE_QUANTILES};
use volatil_core::rng::{mix_seed, rng_from_seed};
use volatil_core::{
    cumulative_bayes_factor, garch_rwmh, gibbs_homoskedastic, gibbs_sv_errors, logret, svsim, MixtureTable,
    ModelTag, Parameterization, PriorSpec, ProposalKind, RegressionData, RegressionPrior, ReturnsSeries,
    SvParameters, ThetaUpdateConfig,
};

use crate::error::{CliError, CliResult};
use crate::export::{self, Chain};
use crate::io::{self, num, OutputSet};
use crate::observer::ConsoleObserver;
use crate::parallel;

#[derive(Parser, Debug)]
#[command(name = "volatil", version, about = "Bayesian stochastic volatility toolkit")]
pub struct Cli {
    /// Master seed for all random draws.
    #[arg(long, global = true, env = "VOLATIL_SEED", default_value_t = 1)]
    pub seed: u64,

    /// No progress output.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a return series from the SV process.
    Simulate(SimulateArgs),
    /// Fit the SV model to a return series.
    Fit(FitArgs),
    /// Bayesian linear regression with homoskedastic, SV or GARCH(1,1) errors.
    Regress(RegressArgs),
    /// Rolling one-step-ahead predictive likelihoods and Bayes factors.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.98, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// CSV with `date,value` rows under a header, or one headerless column.
    pub input: PathBuf,
    /// Treat the input as price levels and convert to log returns.
    #[arg(long)]
    pub logret: bool,
    /// Subtract the mean of the log returns (requires --logret).
    #[arg(long, requires = "logret")]
    pub demean: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// Interweaving on a centered baseline.
    GisC,
    /// Interweaving on a noncentered baseline.
    GisNc,
    Centered,
    Noncentered,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Proposal {
    Independence,
    RandomWalk,
}

#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    /// Mean and standard deviation of the normal prior on mu.
    #[arg(long, num_args = 2, value_names = ["MEAN", "SD"], default_values_t = [0.0, 100.0], allow_negative_numbers = true)]
    pub priormu: Vec<f64>,
    /// Beta shape parameters of the prior on (phi + 1)/2.
    #[arg(long, num_args = 2, value_names = ["A0", "B0"], default_values_t = [5.0, 1.5])]
    pub priorphi: Vec<f64>,
    /// Scale of the sigma^2 ~ S * chi^2_1 prior.
    #[arg(long, value_name = "S", default_value_t = 1.0)]
    pub priorsigma: f64,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 10000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub thinpara: usize,
    #[arg(long, default_value_t = 1)]
    pub thinlatent: usize,
    #[arg(long, default_value_t = 1)]
    pub thintime: usize,
    #[arg(long, value_enum, default_value_t = Strategy::GisC)]
    pub strategy: Strategy,
    #[arg(long, value_enum, default_value_t = Proposal::Independence)]
    pub proposal: Proposal,
    /// Mixture table file (`weight mean variance` per line) replacing the
    /// built-in 10-component table.
    #[arg(long)]
    pub mixture_table: Option<PathBuf>,
    /// Posterior quantile levels for summaries.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.5, 0.95])]
    pub quantiles: Vec<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct RegressionPriorArgs {
    /// Prior precision of each regression coefficient (prior mean 0).
    #[arg(long, default_value_t = 1e-10)]
    pub prior_precision: f64,
    #[arg(long, default_value_t = 0.001)]
    pub c0: f64,
    #[arg(long = "C0", default_value_t = 0.001)]
    pub cc0: f64,
}

#[derive(Args, Debug, Clone)]
pub struct GarchArgs {
    /// Random-walk step sizes on log alpha_0, log alpha_1, log alpha_2.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.1, 0.1, 0.1])]
    pub garch_alpha_scales: Vec<f64>,
    /// Multiplier on the weighted least squares covariance of the beta proposal.
    #[arg(long, default_value_t = 1.0)]
    pub garch_beta_scale: f64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Forecast horizon for the latent volatility (0 for none).
    #[arg(long, value_name = "H", default_value_t = 0)]
    pub forecast: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Worker threads for multiple chains (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ErrorModel {
    Homoskedastic,
    Sv,
    Garch,
}

#[derive(Args, Debug)]
pub struct RegressArgs {
    /// CSV with a header; the first column is the response, the remaining
    /// columns covariates. An intercept is added.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub model: ErrorModel,
    /// Read a single series and regress y_t on (1, y_{t-1}).
    #[arg(long)]
    pub ar1: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub prior: RegressionPriorArgs,
    #[command(flatten)]
    pub garch: GarchArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Model to evaluate; repeat for several. Bayes factors are reported for
    /// every pair in the order given.
    #[arg(long = "model", required = true, value_parser = parse_model)]
    pub models: Vec<ModelTag>,
    /// Last index of the first training window.
    #[arg(long, value_name = "S")]
    pub training_cutoff: usize,
    /// Posterior draws per predictive density (default: all stored).
    #[arg(long, value_name = "M")]
    pub pl_draws: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_PREDICTIVE_QUANTILES)]
    pub pl_quantiles: Vec<f64>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub prior: RegressionPriorArgs,
    #[command(flatten)]
    pub garch: GarchArgs,
}

fn parse_model(s: &str) -> Result<ModelTag, String> {
    ModelTag::parse(s).map_err(|e| e.to_string())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Fit(a) => fit(a, cli.seed, cli.quiet),
        Command::Regress(a) => regress(a, cli.seed, cli.quiet),
        Command::Evaluate(a) => evaluate(a, cli.seed, cli.quiet),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Seed of chain `c`; chain 0 uses the master seed itself so that a
/// one-chain fit matches a direct sampler call.
pub fn chain_seed(seed: u64, c: usize) -> u64 {
    if c == 0 {
        seed
    } else {
        seed ^ mix_seed(c as u64)
    }
}

pub fn forecast_seed(seed: u64) -> u64 {
    mix_seed(seed ^ 0x666f_7265_6361_7374)
}

struct Mixture {
    table: MixtureTable,
    source: String,
    sha256: String,
}

fn load_mixture(path: Option<&Path>) -> CliResult<Mixture> {
    match path {
        None => Ok(Mixture {
            table: MixtureTable::omori10(),
            source: "builtin:omori10".into(),
            sha256: io::sha256_hex(volatil_core::mixture::OMORI10_SOURCE.as_bytes()),
        }),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", p.display())))?;
            Ok(Mixture {
                table: MixtureTable::parse(&text)?,
                source: p.display().to_string(),
                sha256: io::sha256_hex(text.as_bytes()),
            })
        }
    }
}

fn sv_prior(a: &SamplerArgs) -> CliResult<PriorSpec> {
    Ok(PriorSpec::from_args(
        (a.priormu[0], a.priormu[1]),
        (a.priorphi[0], a.priorphi[1]),
        a.priorsigma,
    )?)
}

fn theta_config(a: &SamplerArgs) -> ThetaUpdateConfig {
    let (baseline, interweave) = match a.strategy {
        Strategy::GisC => (Parameterization::Centered, true),
        Strategy::GisNc => (Parameterization::Noncentered, true),
        Strategy::Centered => (Parameterization::Centered, false),
        Strategy::Noncentered => (Parameterization::Noncentered, false),
    };
    ThetaUpdateConfig {
        baseline,
        interweave,
        proposal: match a.proposal {
            Proposal::Independence => ProposalKind::Independence,
            Proposal::RandomWalk => ProposalKind::RandomWalk,
        },
        ..ThetaUpdateConfig::default()
    }
}

fn sampler_config(a: &SamplerArgs, mixture: &Mixture, seed: u64, quiet: bool) -> CliResult<SamplerConfig> {
    let cfg = SamplerConfig {
        burnin: a.burnin,
        draws: a.draws,
        thinpara: a.thinpara,
        thinlatent: a.thinlatent,
        thintime: a.thintime,
        quiet,
        startpara: None,
        startlatent: None,
        seed,
        theta: theta_config(a),
        mixture: mixture.table.clone(),
        quantiles: a.quantiles.clone(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn sampler_json(a: &SamplerArgs, prior: &PriorSpec, mixture: &Mixture) -> Value {
    json!({
        "priormu": a.priormu,
        "priorphi": a.priorphi,
        "priorsigma": a.priorsigma,
        "prior": {
            "b_mu": prior.b_mu, "var_mu": prior.var_mu,
            "a0": prior.a0, "b0": prior.b0, "b_sigma": prior.b_sigma,
        },
        "burnin": a.burnin,
        "draws": a.draws,
        "thinpara": a.thinpara,
        "thinlatent": a.thinlatent,
        "thintime": a.thintime,
        "strategy": theta_config(a).strategy_name(),
        "proposal": format!("{:?}", a.proposal).to_lowercase(),
        "quantiles": a.quantiles,
        "mixture": { "source": mixture.source, "components": mixture.table.len(), "sha256": mixture.sha256 },
    })
}

fn regression_prior(a: &RegressionPriorArgs, p: usize) -> CliResult<RegressionPrior> {
    Ok(RegressionPrior::isotropic(p, a.prior_precision, a.c0, a.cc0)?)
}

fn garch_config(a: &GarchArgs, burnin: usize, draws: usize) -> CliResult<GarchConfig> {
    let cfg = GarchConfig {
        burnin,
        draws,
        log_alpha_scales: [a.garch_alpha_scales[0], a.garch_alpha_scales[1], a.garch_alpha_scales[2]],
        beta_scale: a.garch_beta_scale,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads the input series and applies the optional log-return transform.
fn load_returns(a: &InputArgs) -> CliResult<(ReturnsSeries, String)> {
    let bytes = std::fs::read(&a.input)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", a.input.display())))?;
    let sha = io::sha256_hex(&bytes);
    let s = io::read_series(&a.input)?;
    let series = if a.logret {
        let r = logret(&s.values, a.demean)?;
        match s.labels {
            Some(l) => r.with_labels(l[1..].to_vec())?,
            None => r,
        }
    } else {
        let r = ReturnsSeries::new(s.values)?;
        match s.labels {
            Some(l) => r.with_labels(l)?,
            None => r,
        }
    };
    Ok((series, sha))
}

fn input_json(a: &InputArgs, sha: &str, n: usize) -> Value {
    json!({
        "path": a.input.display().to_string(),
        "sha256": sha,
        "observations": n,
        "logret": a.logret,
        "demean": a.demean,
    })
}

fn simulate(a: &SimulateArgs, seed: u64) -> CliResult<()> {
    let params = SvParameters::new(a.mu, a.phi, a.sigma)?;
    let sim = svsim(a.n, params, seed)?;
    let mut out = OutputSet::new(&a.out)?;
    out.csv(
        "returns.csv",
        &["date".into(), "value".into()],
        sim.returns
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![(i + 1).to_string(), num(v)]),
    )?;
    out.csv(
        "latent.csv",
        &["t".into(), "h".into()],
        sim.latent
            .as_slice()
            .iter()
            .enumerate()
            .map(|(t, &h)| vec![t.to_string(), num(h)]),
    )?;
    out.json(
        "params.json",
        &json!({ "command": "simulate", "n": a.n, "mu": a.mu, "phi": a.phi, "sigma": a.sigma, "seed": seed }),
    )?;
    out.commit()?;
    Ok(())
}

/// Concatenates chains in order and recomputes the pooled summary.
pub fn merge_chains(chains: &[Chain], quantiles: &[f64]) -> CliResult<SvDraws> {
    let first = &chains[0].draws;
    let mut para = ParaDraws::default();
    let mut latent = Vec::new();
    let mut latent0 = Vec::new();
    let mut rows = 0;
    for c in chains {
        let d = &c.draws;
        para.mu.extend_from_slice(&d.para.mu);
        para.phi.extend_from_slice(&d.para.phi);
        para.sigma.extend_from_slice(&d.para.sigma);
        para.h_last.extend_from_slice(&d.para.h_last);
        latent.extend_from_slice(d.latent.values.as_slice());
        latent0.extend_from_slice(&d.latent0);
        rows += d.latent.values.rows();
    }
    let merged = SvDraws {
        para,
        latent: LatentDraws {
            time_index: first.latent.time_index.clone(),
            values: DrawMatrix::new(rows, first.latent.values.cols(), latent)?,
        },
        latent0,
        y: first.y.clone(),
        runtime: chains.iter().map(|c| c.draws.runtime).fold(0.0, f64::max),
        priors: first.priors,
        thinning: first.thinning,
        summary: first.summary.clone(),
    };
    Ok(updatesummary(merged, quantiles)?)
}

fn run_chain(y: &ReturnsSeries, prior: &PriorSpec, cfg: &SamplerConfig, label: String) -> CliResult<SvDraws> {
    let mut console = ConsoleObserver::new(label);
    let mut silent = NoObserver;
    let observer: &mut dyn SamplerObserver = if cfg.quiet { &mut silent } else { &mut console };
    Ok(svsample_observed(y, prior, cfg, observer)?)
}

fn fit(a: &FitArgs, seed: u64, quiet: bool) -> CliResult<()> {
    if a.chains == 0 {
        return Err(CliError::validation("--chains must be at least 1"));
    }
    let (y, sha) = load_returns(&a.input)?;
    if y.had_zeros() {
        log::warn!("series contains zero returns; fitting log(y^2 + c) with a small offset c");
    }
    let prior = sv_prior(&a.sampler)?;
    let mixture = load_mixture(a.sampler.mixture_table.as_deref())?;
    let base = sampler_config(&a.sampler, &mixture, seed, quiet)?;

    let configs: Vec<SamplerConfig> = (0..a.chains)
        .map(|c| SamplerConfig {
            seed: chain_seed(seed, c),
            ..base.clone()
        })
        .collect();
    let results: Vec<CliResult<SvDraws>> = if a.chains == 1 {
        vec![run_chain(&y, &prior, &configs[0], "fit".into())]
    } else {
        use rayon::prelude::*;
        let pool = parallel::pool(a.threads.unwrap_or_else(default_threads))?;
        pool.install(|| {
            configs
                .par_iter()
                .enumerate()
                .map(|(c, cfg)| run_chain(&y, &prior, cfg, format!("chain {c}")))
                .collect()
        })
    };
    let chains = results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map(|draws| Chain {
                index,
                seed: configs[index].seed,
                draws,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let pooled = if chains.len() == 1 {
        chains[0].draws.clone()
    } else {
        merge_chains(&chains, &base.quantiles)?
    };

    let mut out = OutputSet::new(&a.out)?;
    export::write_sv_draws(&mut out, &chains)?;
    out.json("summary.json", &export::summary_json(&pooled.summary))?;
    export::write_volatility(
        &mut out,
        &pooled.latent.time_index,
        &pooled.summary.latent,
        &pooled.summary.quantile_probs,
        pooled.y.labels(),
    )?;
    let mut forecast = Value::Null;
    if a.forecast > 0 {
        let fseed = forecast_seed(seed);
        let draws = predict_volatility(&pooled, a.forecast, &mut rng_from_seed(fseed))?;
        export::write_forecast(&mut out, &draws, &pooled.summary.quantile_probs)?;
        forecast = json!({ "horizon": a.forecast, "seed": fseed });
    }
    let meta = json!({
        "command": "fit",
        "version": env!("CARGO_PKG_VERSION"),
        "input": input_json(&a.input, &sha, y.len()),
        "zero_offset_applied": y.had_zeros(),
        "seed": seed,
        "sampler": sampler_json(&a.sampler, &prior, &mixture),
        "chains": chains.iter().map(|c| json!({
            "chain": c.index, "seed": c.seed, "runtime_seconds": c.draws.runtime,
            "stored_para": c.draws.para.len(), "stored_latent": c.draws.latent.values.rows(),
        })).collect::<Vec<_>>(),
        "forecast": forecast,
    });
    out.json("metadata.json", &meta)?;
    out.commit()?;
    Ok(())
}

fn regression_data(a: &RegressArgs) -> CliResult<(RegressionData, Vec<String>, String)> {
    let bytes = std::fs::read(&a.input)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", a.input.display())))?;
    let sha = io::sha256_hex(&bytes);
    if a.ar1 {
        let s = io::read_series(&a.input)?;
        let data = RegressionData::ar1(&s.values)?;
        return Ok((data, vec!["intercept".into(), "lag1".into()], sha));
    }
    let (names, rows) = io::read_table(&a.input)?;
    let n = rows.len();
    let p = names.len();
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { rows[i][j] });
    let mut cov = vec!["intercept".to_string()];
    cov.extend(names[1..].iter().cloned());
    Ok((RegressionData::new(y, x)?, cov, sha))
}

fn regress(a: &RegressArgs, seed: u64, quiet: bool) -> CliResult<()> {
    let (data, names, sha) = regression_data(a)?;
    let prior = regression_prior(&a.prior, data.p())?;
    let s = &a.sampler;
    let probs = sorted_probs(&s.quantiles)?;
    let mut rng = rng_from_seed(seed);
    let beta_names: Vec<String> = (0..data.p()).map(|j| format!("beta_{j}")).collect();

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let push_beta = |columns: &mut Vec<(String, Vec<f64>)>, beta: &DrawMatrix| {
        for (j, name) in beta_names.iter().enumerate() {
            columns.push((name.clone(), beta.column(j)));
        }
    };
    let mut extra = json!({});
    let mut vol = None;
    match a.model {
        ErrorModel::Homoskedastic => {
            let d = gibbs_homoskedastic(&data, &prior, s.burnin, s.draws, &mut rng)?;
            push_beta(&mut columns, &d.beta);
            columns.push(("sigma".into(), d.sigma_eps));
        }
        ErrorModel::Garch => {
            let cfg = garch_config(&a.garch, s.burnin, s.draws)?;
            let d = garch_rwmh(&data, &prior, &cfg, &mut rng)?;
            push_beta(&mut columns, &d.beta);
            for j in 0..3 {
                columns.push((format!("alpha_{j}"), d.alpha.column(j)));
            }
            columns.push(("sigma2_next".into(), d.sigma2_next));
            extra = json!({
                "garch": {
                    "log_alpha_scales": a.garch.garch_alpha_scales,
                    "beta_scale": a.garch.garch_beta_scale,
                    "sigma2_0": d.sigma2_0,
                    "acceptance": { "alpha": d.acceptance.alpha, "beta": d.acceptance.beta },
                }
            });
        }
        ErrorModel::Sv => {
            let sv = sv_prior(s)?;
            let mixture = load_mixture(s.mixture_table.as_deref())?;
            let cfg = sampler_config(s, &mixture, seed, quiet)?;
            if !quiet {
                eprintln!("regress: {} iterations with SV errors", s.burnin + s.draws);
            }
            let d = gibbs_sv_errors(&data, &prior, &sv, &cfg, &mut rng)?;
            push_beta(&mut columns, &d.beta);
            columns.push(("mu".into(), d.para.mu.clone()));
            columns.push(("phi".into(), d.para.phi.clone()));
            columns.push(("sigma".into(), d.para.sigma.clone()));
            extra = json!({ "sv": sampler_json(s, &sv, &mixture) });
            let records = export::volatility_records(&d.latent.time_index, &d.latent.values, &probs);
            vol = Some((d.latent.time_index.clone(), records));
        }
    }

    let rows = columns[0].1.len();
    let mut out = OutputSet::new(&a.out)?;
    let header: Vec<String> = std::iter::once("iteration".to_string())
        .chain(columns.iter().map(|c| c.0.clone()))
        .collect();
    out.csv(
        "draws.csv",
        &header,
        (0..rows).map(|i| {
            std::iter::once((i + 1).to_string())
                .chain(columns.iter().map(|c| num(c.1[i])))
                .collect()
        }),
    )?;
    let summary: Vec<Value> = columns
        .iter()
        .map(|(name, x)| export::record_json(&export::summarize_column(name, x, &probs), &probs))
        .collect();
    out.json("summary.json", &json!({ "quantile_probs": probs, "parameters": summary }))?;
    if let Some((time_index, records)) = vol {
        export::write_volatility(&mut out, &time_index, &records, &probs, None)?;
    }
    let meta = json!({
        "command": "regress",
        "version": env!("CARGO_PKG_VERSION"),
        "model": format!("{:?}", a.model).to_lowercase(),
        "input": { "path": a.input.display().to_string(), "sha256": sha, "ar1": a.ar1 },
        "observations": data.n(),
        "covariates": names,
        "seed": seed,
        "burnin": s.burnin,
        "draws": s.draws,
        "prior": { "precision": a.prior.prior_precision, "c0": a.prior.c0, "C0": a.prior.cc0 },
        "details": extra,
    });
    out.json("metadata.json", &meta)?;
    out.commit()?;
    Ok(())
}

fn sorted_probs(q: &[f64]) -> CliResult<Vec<f64>> {
    if q.is_empty() || q.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(CliError::validation("quantile levels must lie in (0, 1)"));
    }
    let mut p = q.to_vec();
    p.sort_by(f64::total_cmp);
    p.dedup();
    Ok(p)
}

/// Distinct models in the order first given.
fn unique_models(models: &[ModelTag]) -> Vec<ModelTag> {
    let mut out: Vec<ModelTag> = Vec::new();
    for &m in models {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn write_evaluation(
    out: &mut OutputSet,
    result: &EvaluationOutput,
    models: &[ModelTag],
    s: usize,
    probs: &[f64],
) -> CliResult<Vec<Value>> {
    let mut header = vec!["model".to_string(), "t".to_string(), "log_pl".to_string()];
    header.extend(export::quantile_header(probs));
    let mut rows = Vec::new();
    for &m in models {
        for r in result.records_for(m).unwrap_or(&[]) {
            let mut row = vec![m.name().to_string(), r.t.to_string(), num(r.log_pl)];
            row.extend(r.quantiles.iter().map(|&(_, v)| num(v)));
            rows.push(row);
        }
    }
    out.csv("pl.csv", &header, rows)?;

    let mut notes = Vec::new();
    if models.len() < 2 {
        return Ok(notes);
    }
    let complete = |m: ModelTag| !result.failures.iter().any(|f| f.model == m);
    let mut cols: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    for (i, &a) in models.iter().enumerate() {
        for &b in &models[i + 1..] {
            let name = format!("{}_vs_{}", a.name(), b.name());
            if !(complete(a) && complete(b)) {
                notes.push(json!({ "column": name, "skipped": "a refit failed for one of the models" }));
                continue;
            }
            let ra = result.records_for(a).unwrap_or(&[]);
            let rb = result.records_for(b).unwrap_or(&[]);
            let bf = cumulative_bayes_factor(ra, rb, s)?;
            let last = bf.last();
            notes.push(json!({ "column": name, "final": last }));
            cols.push((name, bf.t, bf.cumulative));
        }
    }
    if let Some((_, t, _)) = cols.first() {
        let t = t.clone();
        let mut header = vec!["t".to_string()];
        header.extend(cols.iter().map(|c| c.0.clone()));
        let rows = t.iter().enumerate().map(|(k, &tt)| {
            let mut row = vec![tt.to_string()];
            row.extend(cols.iter().map(|c| num(c.2[k])));
            row
        });
        out.csv("bf.csv", &header, rows)?;
    }
    Ok(notes)
}

fn evaluate(a: &EvaluateArgs, seed: u64, quiet: bool) -> CliResult<()> {
    let (y, sha) = load_returns(&a.input)?;
    let models = unique_models(&a.models);
    let mixture = load_mixture(a.sampler.mixture_table.as_deref())?;
    // refits never report progress individually
    let sampler = sampler_config(&a.sampler, &mixture, seed, true)?;
    let probs = sorted_probs(&a.pl_quantiles)?;
    let cfg = EvaluationConfig {
        regression_prior: regression_prior(&a.prior, 2)?,
        sv_prior: sv_prior(&a.sampler)?,
        garch: garch_config(&a.garch, a.sampler.burnin, a.sampler.draws)?,
        pl_draws: a.pl_draws,
        quantiles: probs.clone(),
        ..EvaluationConfig::new(sampler, seed)
    };
    let threads = a.threads.unwrap_or_else(default_threads);
    let pool = parallel::pool(threads)?;
    let s = a.training_cutoff;
    if !quiet {
        let tasks = y.len().saturating_sub(s) * models.len();
        eprintln!("evaluate: {tasks} refits on {threads} threads");
    }
    let result = parallel::rolling_evaluation_parallel(y.values(), s, &models, &cfg, &pool)?;

    let mut out = OutputSet::new(&a.out)?;
    let bf = write_evaluation(&mut out, &result, &models, s, &probs)?;
    let manifest = json!({
        "command": "evaluate",
        "version": env!("CARGO_PKG_VERSION"),
        "input": input_json(&a.input, &sha, y.len()),
        "seed": seed,
        "task_seed": "seed ^ mix_seed((model_code << 48) ^ t), model codes homoskedastic=1 garch=2 sv=3",
        "models": models.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "training_cutoff": s,
        "pl_draws": a.pl_draws.unwrap_or(a.sampler.draws),
        "pl_quantiles": probs,
        "threads": threads,
        "sampler": sampler_json(&a.sampler, &cfg.sv_prior, &mixture),
        "regression_prior": { "precision": a.prior.prior_precision, "c0": a.prior.c0, "C0": a.prior.cc0 },
        "garch": { "log_alpha_scales": a.garch.garch_alpha_scales, "beta_scale": a.garch.garch_beta_scale },
        "bayes_factors": bf,
        "complete": result.is_complete(),
        "failures": result.failures.iter().map(|f| json!({
            "model": f.model.name(), "t": f.t, "message": f.message,
        })).collect::<Vec<_>>(),
    });
    out.json("manifest.json", &manifest)?;
    out.commit()?;
    if !result.is_complete() {
        return Err(CliError::runtime(format!(
            "{} of the refits failed; see manifest.json",
            result.failures.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_zero_keeps_master_seed() {
        assert_eq!(chain_seed(17, 0), 17);
        assert_ne!(chain_seed(17, 1), chain_seed(17, 2));
    }

    #[test]
    fn models_keep_first_order() {
        let m = unique_models(&[ModelTag::Sv, ModelTag::Homoskedastic, ModelTag::Sv]);
        assert_eq!(m, vec![ModelTag::Sv, ModelTag::Homoskedastic]);
    }

    #[test]
    fn defaults_match_documented_values() {
        let cli = Cli::try_parse_from(["volatil", "fit", "x.csv", "--out", "o"]).unwrap();
        let Command::Fit(f) = cli.command else { panic!() };
        assert_eq!(f.sampler.priorphi, vec![5.0, 1.5]);
        assert_eq!(f.sampler.priorsigma, 1.0);
        assert_eq!((f.sampler.burnin, f.sampler.draws), (1000, 10000));
        assert_eq!(cli.seed, 1);
    }

    #[test]
    fn negative_prior_mean_parses() {
        let cli = Cli::try_parse_from(["volatil", "fit", "x.csv", "--out", "o", "--priormu", "-9", "1"]).unwrap();
        let Command::Fit(f) = cli.command else { panic!() };
        assert_eq!(f.sampler.priormu, vec![-9.0, 1.0]);
    }

    #[test]
    fn unknown_model_is_usage_error() {
        let e = Cli::try_parse_from([
            "volatil", "evaluate", "x.csv", "--out", "o", "--model", "arch", "--training-cutoff", "5",
        ])
        .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn merged_chains_pool_draws() {
        let sim = svsim(50, SvParameters::new(-1.0, 0.9, 0.3).unwrap(), 3).unwrap();
        let prior = PriorSpec::default();
        let chains: Vec<Chain> = (0..2)
            .map(|c| {
                let cfg = SamplerConfig {
                    burnin: 10,
                    draws: 30,
                    quiet: true,
                    seed: chain_seed(1, c),
                    ..SamplerConfig::default()
                };
                Chain {
                    index: c,
                    seed: cfg.seed,
                    draws: volatil_core::svsample(&sim.returns, &prior, &cfg).unwrap(),
                }
            })
            .collect();
        let m = merge_chains(&chains, &[0.5]).unwrap();
        assert_eq!(m.para.len(), 60);
        assert_eq!(m.latent.values.rows(), 60);
        assert_eq!(m.para.mu[30], chains[1].draws.para.mu[0]);
        let mean = (chains[0].draws.para.mu.iter().sum::<f64>() + chains[1].draws.para.mu.iter().sum::<f64>()) / 60.0;
        assert!((m.summary.para[0].mean - mean).abs() < 1e-12);
    }
}

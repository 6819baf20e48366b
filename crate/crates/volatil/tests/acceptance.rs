//! Acceptance gate. Runs every criterion and prints one PASS/FAIL line each
//! plus a failure count. With `VOLATIL_ACCEPTANCE_STRICT=1` the process also
//! exits non-zero when any criterion fails. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test -p volatil --test acceptance -- 3 11`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use volatil::parallel;
use volatil_core::driver::{default_start, stored_time_indices, SamplerConfig};
use volatil_core::latent::{build_system, conditional_mean, sample_latent};
use volatil_core::linreg::HomoskedasticKernel;
use volatil_core::mixture::{linearize, sample_indicators};
use volatil_core::model::{prior_phi_moments, svsim_with_rng};
use volatil_core::predictive::{predictive_step, EvaluationConfig, PredictiveDraws, PredictiveRecord};
use volatil_core::{garch, rng, stats};
use volatil_core::{
    cumulative_bayes_factor, garch_rwmh, gibbs_homoskedastic, gibbs_sv_errors, log_marginal_likelihood,
    rolling_evaluation, sv_update_step, svsample, svsim, GarchConfig, GarchParams, LatentPath, MixtureTable,
    ModelTag, Parameterization, PriorSpec, RegressionData, RegressionPrior, SvParameters, ThetaUpdateConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// 1 ------------------------------------------------------------------------

fn prior_closed_forms() -> Outcome {
    let closed = |a: f64, b: f64| {
        // phi = 2X - 1 with X ~ Beta(a, b)
        let mean = 2.0 * a / (a + b) - 1.0;
        let sd = 2.0 * (a * b / ((a + b) * (a + b) * (a + b + 1.0))).sqrt();
        (mean, sd)
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for ((a, b), quoted) in [((5.0, 1.5), (0.54, 0.31)), ((20.0, 1.5), (0.86, 0.11))] {
        let (m, s) = prior_phi_moments(a, b).unwrap();
        let (cm, cs) = closed(a, b);
        ok &= (m - cm).abs() < 1e-12 && (s - cs).abs() < 1e-12;
        ok &= (m - quoted.0).abs() < 5e-3 && (s - quoted.1).abs() < 5e-3;
        detail.push(format!("({a}, {b}) -> ({m:.4}, {s:.4})"));
    }
    outcome(ok, detail.join(", "))
}

// 2 ------------------------------------------------------------------------

fn mixture_fidelity() -> Outcome {
    let t = MixtureTable::omori10();
    let c = t.components();
    let mean: f64 = c.iter().map(|k| k.weight * k.mean).sum();
    let second: f64 = c.iter().map(|k| k.weight * (k.variance + k.mean * k.mean)).sum();
    let var = second - mean * mean;
    // log chi^2_1: digamma(1/2) + ln 2 and trigamma(1/2) = pi^2/2
    let target_mean = -1.963_510_026_021_423_5 + std::f64::consts::LN_2;
    let target_var = std::f64::consts::PI.powi(2) / 2.0;
    let ok = (mean - target_mean).abs() < 1e-2 && (var - target_var).abs() < 1e-2;
    outcome(ok, format!("mean {mean:.5} vs {target_mean:.5}, variance {var:.5} vs {target_var:.5}"))
}

// 3 ------------------------------------------------------------------------

/// Posterior of (h_0..h_n) from the dense AR(1) prior covariance plus the
/// conditionally Gaussian observations.
fn dense_posterior(ystar: &[f64], r: &[u8], p: &SvParameters, table: &MixtureTable) -> (DVector<f64>, DMatrix<f64>) {
    let dim = ystar.len() + 1;
    let stat = p.sigma() * p.sigma() / (1.0 - p.phi() * p.phi());
    let prior_cov = DMatrix::from_fn(dim, dim, |i, j| stat * p.phi().powi((i as i32 - j as i32).abs()));
    let prior_prec = prior_cov.try_inverse().unwrap();
    let mut q = prior_prec.clone();
    let mut b = &prior_prec * DVector::from_element(dim, p.mu());
    for t in 1..dim {
        let c = table.components()[r[t - 1] as usize];
        q[(t, t)] += 1.0 / c.variance;
        b[t] += (ystar[t - 1] - c.mean) / c.variance;
    }
    let chol = q.cholesky().unwrap();
    (chol.solve(&b), chol.inverse())
}

fn awol_exactness() -> Outcome {
    let table = MixtureTable::omori10();
    let draws = 100_000;
    let mut worst_z: f64 = 0.0;
    let mut worst_solve: f64 = 0.0;
    for instance in 0..10u64 {
        let mut r = rng::rng_from_seed(3_000 + instance);
        let p = SvParameters::new(
            rng::normal(&mut r, -9.0, 1.0),
            rng::uniform(&mut r) * 1.8 - 0.9,
            0.05 + rng::uniform(&mut r),
        )
        .unwrap();
        let (y, h) = svsim_with_rng(10, p, &mut r).unwrap();
        let lin = linearize(&y);
        let ind = sample_indicators(&lin, &h, &table, &mut r).unwrap();
        let sys = build_system(&lin, &ind, &p, &table).unwrap();
        let (mean, cov) = dense_posterior(lin.ystar(), ind.as_slice(), &p, &table);
        let dim = mean.len();

        let solved = conditional_mean(&sys).unwrap();
        for i in 0..dim {
            worst_solve = worst_solve.max((solved[i] - mean[i]).abs());
        }

        let mut sum = DVector::zeros(dim);
        let mut cross = DMatrix::zeros(dim, dim);
        for _ in 0..draws {
            let x = DVector::from_column_slice(sample_latent(&sys, &mut r).unwrap().as_slice());
            let d = &x - &mean;
            sum += &d;
            cross += &d * d.transpose();
        }
        let m = draws as f64;
        let dbar = sum / m;
        let s = cross / m - &dbar * dbar.transpose();
        for i in 0..dim {
            worst_z = worst_z.max(dbar[i].abs() / (cov[(i, i)] / m).sqrt());
            for j in 0..=i {
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)] * cov[(i, j)]) / m).sqrt();
                worst_z = worst_z.max((s[(i, j)] - cov[(i, j)]).abs() / se);
            }
        }
    }
    let ok = worst_z < 4.0 && worst_solve < 1e-10;
    outcome(
        ok,
        format!("largest |z| over 10 systems x 77 moments = {worst_z:.2} (< 4), mean solve error {worst_solve:.1e}"),
    )
}

// 4 ------------------------------------------------------------------------

fn asis_invariance() -> Outcome {
    let sim = svsim(1000, SvParameters::new(-9.0, 0.95, 0.2).unwrap(), 2024).unwrap();
    let prior = PriorSpec::default();
    let variants = [
        ("C", Parameterization::Centered, false),
        ("NC", Parameterization::Noncentered, false),
        ("GIS_C", Parameterization::Centered, true),
    ];
    let mut est = Vec::new();
    for (name, baseline, interweave) in variants {
        let cfg = SamplerConfig {
            burnin: 2000,
            draws: 20_000,
            quiet: true,
            thinlatent: 20_000,
            thintime: 1000,
            seed: 77,
            theta: ThetaUpdateConfig {
                baseline,
                interweave,
                ..ThetaUpdateConfig::default()
            },
            ..SamplerConfig::default()
        };
        let d = svsample(&sim.returns, &prior, &cfg).unwrap();
        let ms: Vec<(f64, f64)> = [&d.para.mu, &d.para.phi, &d.para.sigma]
            .iter()
            .map(|x| (stats::mean(x), stats::sd(x) / stats::ess_batch_means(x).sqrt()))
            .collect();
        est.push((name, ms));
    }
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        for b in a + 1..3 {
            for k in 0..3 {
                let (ma, sa) = est[a].1[k];
                let (mb, sb) = est[b].1[k];
                worst = worst.max((ma - mb).abs() / (sa * sa + sb * sb).sqrt());
            }
        }
    }
    let means: Vec<String> = est
        .iter()
        .map(|(n, ms)| format!("{n} ({:.3}, {:.4}, {:.4})", ms[0].0, ms[1].0, ms[2].0))
        .collect();
    outcome(worst < 3.0, format!("largest pairwise gap {worst:.2} combined SEs (< 3); {}", means.join(", ")))
}

// 5 ------------------------------------------------------------------------

fn calibration() -> Outcome {
    let truth = SvParameters::new(-9.0, 0.97, 0.2).unwrap();
    let prior = PriorSpec::default();
    let mut covered = [0usize; 3];
    for rep in 0..20u64 {
        let sim = svsim(3000, truth, 500 + rep).unwrap();
        let cfg = SamplerConfig {
            burnin: 1000,
            draws: 5000,
            quiet: true,
            thinlatent: 5000,
            thintime: 3000,
            seed: 900 + rep,
            quantiles: vec![0.025, 0.975],
            ..SamplerConfig::default()
        };
        let d = svsample(&sim.returns, &prior, &cfg).unwrap();
        for (k, value) in [truth.mu(), truth.phi(), truth.sigma()].into_iter().enumerate() {
            let q = &d.summary.para[k].quantiles;
            if q[0] <= value && value <= q[1] {
                covered[k] += 1;
            }
        }
    }
    let ok = covered.iter().all(|&c| c >= 17);
    outcome(ok, format!("95% intervals cover (mu, phi, sigma) in {covered:?} of 20 runs (need >= 17)"))
}

// 6 ------------------------------------------------------------------------

fn regression_recovery() -> Outcome {
    let n = 1000;
    let mut r = rng::rng_from_seed(123_456);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng::normal(&mut r, 0.0, 0.01) });
    let beta_true = [0.1, 0.5];
    let mean_of = |i: usize| beta_true[0] + beta_true[1] * x[(i, 1)];
    let prior = RegressionPrior::isotropic(2, 1e-10, 0.001, 0.001).unwrap();

    let y: Vec<f64> = (0..n).map(|i| mean_of(i) + rng::normal(&mut r, 0.0, 0.01)).collect();
    let data = RegressionData::new(y, x.clone()).unwrap();
    let homo = gibbs_homoskedastic(&data, &prior, 100, 5000, &mut r).unwrap();

    let resid = svsim_with_rng(n, SvParameters::new((0.01f64).powi(2).ln(), 0.97, 0.3).unwrap(), &mut r)
        .unwrap()
        .0;
    let y: Vec<f64> = (0..n).map(|i| mean_of(i) + resid.values()[i]).collect();
    let data = RegressionData::new(y, x).unwrap();
    let sv_prior = PriorSpec::from_args((-10.0, 2.0), (20.0, 1.5), 1.0).unwrap();
    let cfg = SamplerConfig {
        burnin: 1000,
        draws: 50_000,
        thinpara: 10,
        thinlatent: 50_000,
        thintime: n,
        quiet: true,
        ..SamplerConfig::default()
    };
    let sv = gibbs_sv_errors(&data, &prior, &sv_prior, &cfg, &mut r).unwrap();

    let mut ok = true;
    let mut detail = Vec::new();
    for (name, beta) in [("homoskedastic", &homo.beta), ("sv", &sv.beta)] {
        let mut parts = Vec::new();
        for (j, truth) in beta_true.iter().enumerate() {
            let col = beta.column(j);
            let (m, s) = (stats::mean(&col), stats::sd(&col));
            ok &= (m - truth).abs() <= 3.0 * s;
            parts.push(format!("{m:.4} (sd {s:.4})"));
        }
        detail.push(format!("{name}: {}", parts.join(", ")));
    }
    outcome(ok, detail.join("; "))
}

// 7 ------------------------------------------------------------------------

/// Variance of the mean of a correlated chain from a fixed number of long
/// batches, robust to autocorrelation times in the hundreds.
fn batch_mean_variance(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = x[..size * batches].chunks_exact(size).map(stats::mean).collect();
    stats::variance(&means) / batches as f64
}

fn geweke() -> Outcome {
    let n = 8;
    let mut r = rng::rng_from_seed(7_000);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng::std_normal(&mut r) });
    let b0 = DVector::from_vec(vec![0.5, -0.3]);
    let b0inv = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    // c0 large enough that every test function has finite moments up to the
    // order its standard error estimate needs (sigma^16 for sigma^4).
    let (c0, cc0) = (10.0, 9.0);
    let prior = RegressionPrior::new(b0.clone(), b0inv.clone(), c0, cc0).unwrap();
    let prior_cov_chol = b0inv.clone().try_inverse().unwrap().cholesky().unwrap().l();

    let draw_prior = |r: &mut rng::SvRng| {
        let s2 = rng::inverse_gamma(r, c0, cc0);
        let z = DVector::from_fn(2, |_, _| rng::std_normal(r));
        let beta = &b0 + &prior_cov_chol * z * s2.sqrt();
        (beta, s2)
    };
    let g = |beta: &DVector<f64>, s2: f64| [beta[0], beta[1], s2, beta[0] * beta[1], beta[0] * beta[0], s2 * s2];

    let m = 1_000_000;
    let mut marginal: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(m)).collect();
    for _ in 0..m {
        let (beta, s2) = draw_prior(&mut r);
        for (k, v) in g(&beta, s2).into_iter().enumerate() {
            marginal[k].push(v);
        }
    }

    let data = RegressionData::new(vec![0.0; n], x.clone()).unwrap();
    let mut kernel = HomoskedasticKernel::new(&data, &prior).unwrap();
    let (mut beta, mut s2) = draw_prior(&mut r);
    let mut successive: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(m)).collect();
    let mut y = vec![0.0; n];
    for _ in 0..m {
        let mean = &x * &beta;
        for i in 0..n {
            y[i] = mean[i] + s2.sqrt() * rng::std_normal(&mut r);
        }
        kernel.set_y(&y);
        beta = kernel.draw_beta(s2, &mut r);
        s2 = kernel.draw_sigma2(&beta, &mut r);
        for (k, v) in g(&beta, s2).into_iter().enumerate() {
            successive[k].push(v);
        }
    }

    let crit = 2.575_829_303_548_901;
    let z: Vec<f64> = (0..6)
        .map(|k| {
            let a = &marginal[k];
            let b = &successive[k];
            let va = stats::variance(a) / a.len() as f64;
            let vb = batch_mean_variance(b, 100);
            (stats::mean(a) - stats::mean(b)) / (va + vb).sqrt()
        })
        .collect();
    let ok = z.iter().all(|v| v.abs() < crit);
    let zs: Vec<String> = z.iter().map(|v| format!("{v:.2}")).collect();
    outcome(ok, format!("z for (b0, b1, s2, b0 b1, b0^2, s2^2) = [{}], |z| < {crit:.3}", zs.join(", ")))
}

// 8 ------------------------------------------------------------------------

fn nig_log_ml(x: &DMatrix<f64>, y: &DVector<f64>, b0: &DVector<f64>, l0: &DMatrix<f64>, c0: f64, cc0: f64) -> f64 {
    let n = y.len() as f64;
    let ln = x.tr_mul(x) + l0;
    let mn = ln.clone().cholesky().unwrap().solve(&(x.tr_mul(y) + l0 * b0));
    let an = c0 + n / 2.0;
    let bn = cc0 + 0.5 * (y.dot(y) + b0.dot(&(l0 * b0)) - mn.dot(&(&ln * &mn)));
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * (l0.determinant().ln() - ln.determinant().ln())
        + c0 * cc0.ln()
        - an * bn.ln()
        + libm::lgamma(an)
        - libm::lgamma(c0)
}

fn marginal_likelihood() -> Outcome {
    let n = 50;
    let mut r = rng::rng_from_seed(8_000);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng::std_normal(&mut r) });
    let y = DVector::from_fn(n, |i, _| 0.2 + 0.7 * x[(i, 1)] + 0.8 * rng::std_normal(&mut r));
    let (b0, l0, c0, cc0) = (DVector::zeros(2), DMatrix::identity(2, 2), 3.0, 2.0);
    let prior = RegressionPrior::new(b0.clone(), l0.clone(), c0, cc0).unwrap();
    let exact = nig_log_ml(&x, &y, &b0, &l0, c0, cc0);

    let m = 10_000;
    let run = |seed: u64| {
        let mut r = rng::rng_from_seed(seed);
        let records: Vec<PredictiveRecord> = (0..n)
            .map(|t| {
                let data = RegressionData::new(y.rows(0, t).iter().copied().collect(), x.rows(0, t).into_owned())
                    .unwrap();
                let draws: PredictiveDraws = gibbs_homoskedastic(&data, &prior, 200, m, &mut r).unwrap().into();
                let row: Vec<f64> = x.row(t).iter().copied().collect();
                predictive_step(&draws, &row, y[t], t + 1, m, &[0.5], &mut r).unwrap()
            })
            .collect();
        log_marginal_likelihood(&records).unwrap()
    };
    let estimates: Vec<f64> = (0..10).map(|k| run(80_000 + k)).collect();
    let se = stats::sd(&estimates);
    let primary = estimates[0];
    let ok = (primary - exact).abs() < 3.0 * se;
    let pooled = stats::mean(&estimates);
    outcome(
        ok,
        format!(
            "sum log PL {primary:.4} vs analytic {exact:.4}, |diff| = {:.4}, MC se {se:.4} from 10 seeds \
             (10-seed mean {pooled:.4}, {:.1} se of the mean away)",
            (primary - exact).abs(),
            (pooled - exact).abs() / (se / 10f64.sqrt())
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn garch_recovery() -> Outcome {
    let n = 2000;
    let truth = GarchParams::new(1e-6, 0.05, 0.9).unwrap();
    let mut r = rng::rng_from_seed(9_000);
    let e = garch::garch_simulate(n, &truth, &mut r);
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng::normal(&mut r, 0.0, 0.01) });
    let y: Vec<f64> = (0..n).map(|i| 0.1 + 0.5 * x[(i, 1)] + e[i]).collect();
    let data = RegressionData::new(y, x).unwrap();
    let prior = RegressionPrior::isotropic(2, 1e-10, 0.001, 0.001).unwrap();
    let cfg = GarchConfig {
        burnin: 10_000,
        draws: 50_000,
        ..GarchConfig::default()
    };
    let d = garch_rwmh(&data, &prior, &cfg, &mut r).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, t) in truth.as_array().into_iter().enumerate() {
        let col = d.alpha.column(j);
        let (m, s) = (stats::mean(&col), stats::sd(&col));
        ok &= (m - t).abs() <= 3.0 * s;
        parts.push(format!("alpha_{j} {m:.3e} (sd {s:.1e}, true {t:.0e})"));
    }
    outcome(ok, parts.join(", "))
}

// 10 -----------------------------------------------------------------------

fn bayes_factor_direction() -> Outcome {
    let sim = svsim(500, SvParameters::new(-9.0, 0.97, 0.3).unwrap(), 10_000).unwrap();
    let y = sim.returns.values().to_vec();
    let s = 250;
    let sampler = SamplerConfig {
        burnin: 1000,
        draws: 5000,
        quiet: true,
        ..SamplerConfig::default()
    };
    let cfg = EvaluationConfig::new(sampler, 10_001);
    let models = [ModelTag::Sv, ModelTag::Homoskedastic];
    let t0 = Instant::now();
    let serial = rolling_evaluation(&y, s, &models, &cfg).unwrap();
    let t_serial = t0.elapsed().as_secs_f64();
    let pool = parallel::pool(8).unwrap();
    let t0 = Instant::now();
    let par = parallel::rolling_evaluation_parallel(&y, s, &models, &cfg, &pool).unwrap();
    let t_par = t0.elapsed().as_secs_f64();

    let bits = |o: &volatil_core::predictive::EvaluationOutput| -> Vec<u64> {
        o.records
            .iter()
            .flat_map(|(_, recs)| recs.iter())
            .flat_map(|rec| {
                std::iter::once(rec.log_pl.to_bits()).chain(rec.quantiles.iter().map(|q| q.1.to_bits()))
            })
            .collect()
    };
    let identical = serial == par && bits(&serial) == bits(&par) && serial.is_complete();
    let bf = cumulative_bayes_factor(
        serial.records_for(ModelTag::Sv).unwrap(),
        serial.records_for(ModelTag::Homoskedastic).unwrap(),
        s,
    )
    .unwrap()
    .last()
    .unwrap();
    outcome(
        identical && bf > 0.0,
        format!(
            "final log BF(sv, homoskedastic) = {bf:.2}; 8 workers bit-identical to serial: {identical} \
             ({} refits, serial {t_serial:.0} s, pool {t_par:.0} s)",
            2 * (y.len() - s)
        ),
    )
}

// 11 -----------------------------------------------------------------------

fn single_step_equivalence() -> Outcome {
    let sim = svsim(300, SvParameters::new(-9.5, 0.96, 0.25).unwrap(), 11_000).unwrap();
    let prior = PriorSpec::from_args((-10.0, 1.0), (20.0, 1.5), 0.1).unwrap();
    let cfg = SamplerConfig {
        burnin: 200,
        draws: 1000,
        thinpara: 3,
        thinlatent: 7,
        thintime: 2,
        quiet: true,
        seed: 11_001,
        ..SamplerConfig::default()
    };
    let d = svsample(&sim.returns, &prior, &cfg).unwrap();

    let y = sim.returns.values();
    let (mut params, mut h): (SvParameters, LatentPath) = default_start(y);
    let mut r = rng::rng_from_seed(cfg.seed);
    let times = stored_time_indices(y.len(), cfg.thintime);
    let (mut mu, mut phi, mut sigma, mut h_last) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut latent, mut latent0) = (Vec::new(), Vec::new());
    for it in 1..=cfg.burnin + cfg.draws {
        (params, h) = sv_update_step(y, &params, &h, &prior, &mut r).unwrap();
        if it > cfg.burnin {
            let i = it - cfg.burnin;
            if i.is_multiple_of(cfg.thinpara) {
                mu.push(params.mu());
                phi.push(params.phi());
                sigma.push(params.sigma());
                h_last.push(h.last());
            }
            if i.is_multiple_of(cfg.thinlatent) {
                latent.extend(times.iter().map(|&t| h.as_slice()[t]));
                latent0.push(h.h0());
            }
        }
    }
    let same = d.para.mu == mu
        && d.para.phi == phi
        && d.para.sigma == sigma
        && d.para.h_last == h_last
        && d.latent.values.as_slice() == latent.as_slice()
        && d.latent0 == latent0
        && d.latent.time_index == times;
    outcome(
        same && !mu.is_empty(),
        format!(
            "{} parameter and {} latent draws compared, all exactly equal: {same}",
            mu.len(),
            latent0.len()
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "prior closed forms", prior_closed_forms),
        (2, "mixture fidelity", mixture_fidelity),
        (3, "joint latent draw exactness", awol_exactness),
        (4, "parameterization invariance", asis_invariance),
        (5, "simulation-based calibration", calibration),
        (6, "regression recovery", regression_recovery),
        (7, "Geweke joint-distribution test", geweke),
        (8, "marginal-likelihood oracle", marginal_likelihood),
        (9, "GARCH recovery", garch_recovery),
        (10, "Bayes-factor direction and parallel determinism", bayes_factor_direction),
        (11, "svsample equals chained single steps", single_step_equivalence),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {status}: {name} [{:.1} s] {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("{failed} acceptance criteria failed");
    let strict = std::env::var("VOLATIL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}

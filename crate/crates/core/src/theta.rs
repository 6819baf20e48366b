//! Parameter updates in the centered and noncentered parameterizations and
//! their interweaving.
//!
//! Centered: theta is drawn given `h` alone. The default independence
//! proposal is the conjugate posterior of the AR(1) regression
//! `h_t = a + phi (h_{t-1} - hbar) + eta_t` under a vague auxiliary prior; the
//! Metropolis-Hastings weight then only involves the initial-state density,
//! the actual priors and the auxiliary prior, because the transition
//! likelihood cancels.
//!
//! Noncentered: with `htilde = (h - mu) / sigma` fixed, `mu` and the signed
//! scale `omega = +-sigma` are regression coefficients of the linearized
//! observations. The `N(0, B_sigma)` prior on `omega` is the `B_sigma chi^2_1`
//! prior on `sigma^2`, so this block is an exact Gibbs draw. `phi` only enters
//! the `htilde` process and gets its own independence MH step.

use alloc::vec::Vec;

use rand_core::RngCore;

use crate::mixture::{IndicatorPath, LinearizedData, MixtureTable};
use crate::model::{ln_prior_mu, ln_prior_phi, ln_prior_sigma, LatentPath, PriorSpec, SvParameters};
use crate::rng;
use crate::special::{gamma_ln_pdf, normal_ln_pdf};

const VARIANCE_FLOOR: f64 = 1e-12;
// Auxiliary conjugate prior of the centered proposal:
// (a, phi) | s2 ~ N(0, s2 / AUX_PRECISION I), s2 ~ IG(AUX_SHAPE, AUX_SCALE).
const AUX_PRECISION: f64 = 1e-8;
const AUX_SHAPE: f64 = 0.5;
const AUX_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    Centered,
    Noncentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    Independence,
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaUpdateConfig {
    pub baseline: Parameterization,
    pub interweave: bool,
    pub proposal: ProposalKind,
    /// Random-walk step sizes for (mu, phi, sigma).
    pub rw_scales: [f64; 3],
}

impl Default for ThetaUpdateConfig {
    fn default() -> Self {
        Self {
            baseline: Parameterization::Centered,
            interweave: true,
            proposal: ProposalKind::Independence,
            rw_scales: [0.1, 0.01, 0.01],
        }
    }
}

impl ThetaUpdateConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.rw_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(crate::Error::validation("random-walk scales must be positive"));
        }
        Ok(())
    }

    /// Name of the sampler variant, e.g. `GIS_C` for interweaving on a
    /// centered baseline.
    pub fn strategy_name(&self) -> &'static str {
        match (self.interweave, self.baseline) {
            (true, Parameterization::Centered) => "GIS_C",
            (true, Parameterization::Noncentered) => "GIS_NC",
            (false, Parameterization::Centered) => "C",
            (false, Parameterization::Noncentered) => "NC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDrawResult {
    pub params: SvParameters,
    pub accepted: bool,
    pub stage: Parameterization,
}

/// Sufficient statistics of the AR(1) regression of h_1..h_n on h_0..h_{n-1},
/// with the regressor centered at its mean.
#[derive(Debug, Clone, Copy)]
struct ArStats {
    n: f64,
    xbar: f64,
    sxx: f64,
    sz: f64,
    sxz: f64,
    szz: f64,
}

impl ArStats {
    fn new(h: &[f64]) -> Self {
        let n = (h.len() - 1) as f64;
        let xbar = h[..h.len() - 1].iter().sum::<f64>() / n;
        let (mut sxx, mut sz, mut sxz, mut szz) = (0.0, 0.0, 0.0, 0.0);
        for w in h.windows(2) {
            let x = w[0] - xbar;
            let z = w[1];
            sxx += x * x;
            sz += z;
            sxz += x * z;
            szz += z * z;
        }
        Self {
            n,
            xbar,
            sxx,
            sz,
            sxz,
            szz,
        }
    }
}

/// log p(h | theta) in the centered parameterization.
pub fn ln_latent_density(h: &[f64], mu: f64, phi: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let mut lp = normal_ln_pdf(h[0], mu, s2 / (1.0 - phi * phi));
    let mut ss = 0.0;
    for w in h.windows(2) {
        let e = w[1] - mu - phi * (w[0] - mu);
        ss += e * e;
    }
    let n = (h.len() - 1) as f64;
    lp += -0.5 * n * (crate::special::LN_2PI + libm::log(s2)) - 0.5 * ss / s2;
    lp
}

/// Unnormalized log posterior of theta given h (centered).
pub fn ln_centered_target(h: &[f64], mu: f64, phi: f64, sigma: f64, prior: &PriorSpec) -> f64 {
    if !SvParameters::admissible(mu, phi, sigma) {
        return f64::NEG_INFINITY;
    }
    ln_latent_density(h, mu, phi, sigma)
        + ln_prior_mu(mu, prior)
        + ln_prior_phi(phi, prior.a0, prior.b0)
        + ln_prior_sigma(sigma, prior.b_sigma)
}

/// Centered independence proposal: a draw of (mu, phi, sigma) from the
/// regression posterior. Support is not enforced here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredProposal {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
}

fn draw_centered_proposal<R: RngCore + ?Sized>(stats: &ArStats, rng: &mut R) -> CenteredProposal {
    // Precision of (a, phi): diag(n + lambda, sxx + lambda) since the regressor is centered.
    let pa = stats.n + AUX_PRECISION;
    let pp = (stats.sxx + AUX_PRECISION).max(VARIANCE_FLOOR);
    let ma = stats.sz / pa;
    let mp = stats.sxz / pp;
    let shape = AUX_SHAPE + 0.5 * stats.n;
    let scale = AUX_SCALE + 0.5 * (stats.szz - ma * stats.sz - mp * stats.sxz).max(0.0);
    let s2 = rng::inverse_gamma(rng, shape, scale.max(VARIANCE_FLOOR));
    let sd = libm::sqrt(s2);
    let a = ma + sd * rng::std_normal(rng) / libm::sqrt(pa);
    let phi = mp + sd * rng::std_normal(rng) / libm::sqrt(pp);
    // a = mu (1 - phi) + phi xbar
    let mu = (a - phi * stats.xbar) / (1.0 - phi);
    CenteredProposal { mu, phi, sigma: sd }
}

/// log of (target / proposal) in (a, phi, sigma^2) coordinates, up to a
/// constant shared by all theta.
fn centered_weight(h0: f64, p: &CenteredProposal, xbar: f64, prior: &PriorSpec) -> f64 {
    let (mu, phi) = (p.mu, p.phi);
    let s2 = p.sigma * p.sigma;
    let a = mu * (1.0 - phi) + phi * xbar;
    let ln_aux = -(AUX_SHAPE + 1.0) * libm::log(s2) - AUX_SCALE / s2 - libm::log(s2)
        - 0.5 * AUX_PRECISION * (a * a + phi * phi) / s2;
    normal_ln_pdf(h0, mu, s2 / (1.0 - phi * phi))
        + ln_prior_mu(mu, prior)
        + ln_prior_phi(phi, prior.a0, prior.b0)
        + gamma_ln_pdf(s2, 0.5, 0.5 / prior.b_sigma)
        - libm::log(1.0 - phi)
        - ln_aux
}

/// Accept/reject step of the centered independence sampler for a given
/// proposal. Proposals outside the parameter space are rejected.
pub fn centered_independence_accept(
    h: &LatentPath,
    current: &SvParameters,
    proposal: CenteredProposal,
    prior: &PriorSpec,
    u: f64,
) -> ThetaDrawResult {
    let stats = ArStats::new(h.as_slice());
    centered_accept_with(&stats, h.h0(), current, proposal, prior, u)
}

fn centered_accept_with(
    stats: &ArStats,
    h0: f64,
    current: &SvParameters,
    proposal: CenteredProposal,
    prior: &PriorSpec,
    u: f64,
) -> ThetaDrawResult {
    let reject = ThetaDrawResult {
        params: *current,
        accepted: false,
        stage: Parameterization::Centered,
    };
    if !SvParameters::admissible(proposal.mu, proposal.phi, proposal.sigma) {
        return reject;
    }
    let cur = CenteredProposal {
        mu: current.mu(),
        phi: current.phi(),
        sigma: current.sigma(),
    };
    let log_alpha = centered_weight(h0, &proposal, stats.xbar, prior) - centered_weight(h0, &cur, stats.xbar, prior);
    if libm::log(u) < log_alpha {
        ThetaDrawResult {
            params: SvParameters::new(proposal.mu, proposal.phi, proposal.sigma).unwrap_or(*current),
            accepted: true,
            stage: Parameterization::Centered,
        }
    } else {
        reject
    }
}

/// One MH update of theta given h (centered parameterization).
pub fn update_theta_centered<R: RngCore + ?Sized>(
    h: &LatentPath,
    params: &SvParameters,
    prior: &PriorSpec,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
) -> ThetaDrawResult {
    centered_update_slice(h.as_slice(), params, prior, cfg, rng)
}

fn centered_update_slice<R: RngCore + ?Sized>(
    hs: &[f64],
    params: &SvParameters,
    prior: &PriorSpec,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
) -> ThetaDrawResult {
    match cfg.proposal {
        ProposalKind::Independence => {
            let stats = ArStats::new(hs);
            let proposal = draw_centered_proposal(&stats, rng);
            let u = rng::uniform(rng);
            centered_accept_with(&stats, hs[0], params, proposal, prior, u)
        }
        ProposalKind::RandomWalk => {
            let [s_mu, s_phi, s_sigma] = cfg.rw_scales;
            let mu = params.mu() + s_mu * rng::std_normal(rng);
            let phi = params.phi() + s_phi * rng::std_normal(rng);
            let sigma = params.sigma() + s_sigma * rng::std_normal(rng);
            let u = rng::uniform(rng);
            let mut out = ThetaDrawResult {
                params: *params,
                accepted: false,
                stage: Parameterization::Centered,
            };
            if SvParameters::admissible(mu, phi, sigma) {
                let log_alpha = ln_centered_target(hs, mu, phi, sigma, prior)
                    - ln_centered_target(hs, params.mu(), params.phi(), params.sigma(), prior);
                if libm::log(u) < log_alpha {
                    out.params = SvParameters::new(mu, phi, sigma).unwrap_or(*params);
                    out.accepted = true;
                }
            }
            out
        }
    }
}

/// Outcome of a noncentered update on a standardized path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncenteredDraw {
    pub mu: f64,
    /// Signed scale coefficient before the sign normalization.
    pub omega: f64,
    pub phi: f64,
    pub phi_accepted: bool,
}

/// Flips `omega` and `htilde` together so that the scale is positive. The
/// implied `mu + omega * htilde` is unchanged.
pub fn normalize_sign(omega: f64, htilde: &mut [f64]) -> f64 {
    if omega < 0.0 {
        htilde.iter_mut().for_each(|v| *v = -*v);
        -omega
    } else {
        omega
    }
}

/// log p(phi | htilde) up to a constant, excluding the transition terms that
/// the proposal already matches.
fn noncentered_phi_weight(htilde0: f64, phi: f64, prior: &PriorSpec) -> f64 {
    normal_ln_pdf(htilde0, 0.0, 1.0 / (1.0 - phi * phi)) + ln_prior_phi(phi, prior.a0, prior.b0)
}

/// Unnormalized log conditional of phi given htilde.
pub fn ln_noncentered_phi_target(htilde: &[f64], phi: f64, prior: &PriorSpec) -> f64 {
    if !(phi.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    let mut lp = noncentered_phi_weight(htilde[0], phi, prior);
    for w in htilde.windows(2) {
        let e = w[1] - phi * w[0];
        lp -= 0.5 * e * e;
    }
    lp
}

/// Noncentered update on a standardized path `htilde` (h_0..h_n scale-free).
/// `(mu, omega)` are an exact Gibbs draw; phi takes one MH step from
/// `current_phi`.
pub fn noncentered_step<R: RngCore + ?Sized>(
    htilde: &[f64],
    ystar: &[f64],
    r: &[u8],
    current_phi: f64,
    prior: &PriorSpec,
    table: &MixtureTable,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
) -> NoncenteredDraw {
    let comps = table.components();
    // Weighted normal equations for u_t = mu + omega htilde_t + e_t, e_t ~ N(0, v_t).
    let (mut p11, mut p12, mut p22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&ys, &j), &ht) in ystar.iter().zip(r).zip(&htilde[1..]) {
        let c = comps[j as usize];
        let w = 1.0 / c.variance;
        let u = ys - c.mean;
        p11 += w;
        p12 += w * ht;
        p22 += w * ht * ht;
        b1 += w * u;
        b2 += w * u * ht;
    }
    p11 += 1.0 / prior.var_mu;
    p22 += 1.0 / prior.b_sigma;
    b1 += prior.b_mu / prior.var_mu;
    // 2x2 Cholesky of the posterior precision
    let l11 = libm::sqrt(p11);
    let l21 = p12 / l11;
    let l22 = libm::sqrt((p22 - l21 * l21).max(VARIANCE_FLOOR));
    // mean = P^{-1} b via the factor
    let f1 = b1 / l11;
    let f2 = (b2 - l21 * f1) / l22;
    let z1 = rng::std_normal(rng);
    let z2 = rng::std_normal(rng);
    let omega = (f2 + z2) / l22;
    let mu = (f1 + z1 - l21 * omega) / l11;

    let (phi, phi_accepted) = noncentered_phi_update(htilde, current_phi, prior, cfg, rng);
    NoncenteredDraw {
        mu,
        omega,
        phi,
        phi_accepted,
    }
}

fn noncentered_phi_update<R: RngCore + ?Sized>(
    htilde: &[f64],
    current: f64,
    prior: &PriorSpec,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
) -> (f64, bool) {
    match cfg.proposal {
        ProposalKind::Independence => {
            let (mut sxx, mut sxz) = (0.0, 0.0);
            for w in htilde.windows(2) {
                sxx += w[0] * w[0];
                sxz += w[0] * w[1];
            }
            let sxx = sxx.max(VARIANCE_FLOOR);
            let proposal = sxz / sxx + rng::std_normal(rng) / libm::sqrt(sxx);
            let u = rng::uniform(rng);
            if !(proposal.abs() < 1.0) {
                return (current, false);
            }
            let log_alpha =
                noncentered_phi_weight(htilde[0], proposal, prior) - noncentered_phi_weight(htilde[0], current, prior);
            if libm::log(u) < log_alpha {
                (proposal, true)
            } else {
                (current, false)
            }
        }
        ProposalKind::RandomWalk => {
            let proposal = current + cfg.rw_scales[1] * rng::std_normal(rng);
            let u = rng::uniform(rng);
            if !(proposal.abs() < 1.0) {
                return (current, false);
            }
            let log_alpha =
                ln_noncentered_phi_target(htilde, proposal, prior) - ln_noncentered_phi_target(htilde, current, prior);
            if libm::log(u) < log_alpha {
                (proposal, true)
            } else {
                (current, false)
            }
        }
    }
}

fn standardize(h: &[f64], params: &SvParameters, out: &mut Vec<f64>) {
    let (mu, s) = (params.mu(), params.sigma());
    out.clear();
    out.extend(h.iter().map(|v| (v - mu) / s));
}

fn destandardize(htilde: &[f64], params: &SvParameters, out: &mut [f64]) {
    let (mu, s) = (params.mu(), params.sigma());
    for (o, v) in out.iter_mut().zip(htilde) {
        *o = mu + s * v;
    }
}

/// Noncentered update expressed on the centered path: standardizes `h` with
/// the current theta, updates theta, and returns the path implied by the new
/// theta and the (sign-normalized) standardized states.
#[allow(clippy::too_many_arguments)]
pub fn update_theta_noncentered<R: RngCore + ?Sized>(
    h: &LatentPath,
    ystar: &LinearizedData,
    r: &IndicatorPath,
    params: &SvParameters,
    prior: &PriorSpec,
    table: &MixtureTable,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
) -> (ThetaDrawResult, LatentPath) {
    let mut h_out = h.as_slice().to_vec();
    let mut scratch = Vec::new();
    let res = noncentered_in_place(&mut h_out, ystar.ystar(), r.as_slice(), params, prior, table, cfg, rng, &mut scratch);
    (res, LatentPath::from_vec_unchecked(h_out))
}

#[allow(clippy::too_many_arguments)]
fn noncentered_in_place<R: RngCore + ?Sized>(
    h: &mut [f64],
    ystar: &[f64],
    r: &[u8],
    params: &SvParameters,
    prior: &PriorSpec,
    table: &MixtureTable,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
    htilde: &mut Vec<f64>,
) -> ThetaDrawResult {
    standardize(h, params, htilde);
    let draw = noncentered_step(htilde, ystar, r, params.phi(), prior, table, cfg, rng);
    let sigma = normalize_sign(draw.omega, htilde);
    match SvParameters::new(draw.mu, draw.phi, sigma) {
        Ok(new) => {
            destandardize(htilde, &new, h);
            ThetaDrawResult {
                params: new,
                accepted: draw.phi_accepted,
                stage: Parameterization::Noncentered,
            }
        }
        // omega exactly 0 has probability zero; keep the current state.
        Err(_) => ThetaDrawResult {
            params: *params,
            accepted: false,
            stage: Parameterization::Noncentered,
        },
    }
}

/// Composite state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub h: LatentPath,
    pub r: IndicatorPath,
    pub params: SvParameters,
}

/// Per-stage results of an interweaving step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsisOutcome {
    pub baseline: ThetaDrawResult,
    pub alternative: Option<ThetaDrawResult>,
}

/// Updates theta in the baseline parameterization, re-expresses the path in
/// the other one with the new theta, updates theta there and maps back.
pub fn asis_step<R: RngCore + ?Sized>(
    state: &mut ChainState,
    data: &LinearizedData,
    prior: &PriorSpec,
    table: &MixtureTable,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
) -> AsisOutcome {
    let mut h = core::mem::replace(&mut state.h, LatentPath::from_vec_unchecked(Vec::new())).into_vec();
    let mut scratch = Vec::new();
    let out = asis_in_place(&mut h, data.ystar(), state.r.as_slice(), &mut state.params, prior, table, cfg, rng, &mut scratch);
    state.h = LatentPath::from_vec_unchecked(h);
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn asis_in_place<R: RngCore + ?Sized>(
    h: &mut [f64],
    ystar: &[f64],
    r: &[u8],
    params: &mut SvParameters,
    prior: &PriorSpec,
    table: &MixtureTable,
    cfg: &ThetaUpdateConfig,
    rng: &mut R,
    scratch: &mut Vec<f64>,
) -> AsisOutcome {
    let stages = match cfg.baseline {
        Parameterization::Centered => [Parameterization::Centered, Parameterization::Noncentered],
        Parameterization::Noncentered => [Parameterization::Noncentered, Parameterization::Centered],
    };
    let mut results = [None, None];
    let count = if cfg.interweave { 2 } else { 1 };
    for (slot, stage) in results.iter_mut().zip(stages).take(count) {
        let res = match stage {
            Parameterization::Centered => centered_update_slice(h, params, prior, cfg, rng),
            Parameterization::Noncentered => noncentered_in_place(h, ystar, r, params, prior, table, cfg, rng, scratch),
        };
        *params = res.params;
        *slot = Some(res);
    }
    AsisOutcome {
        baseline: results[0].expect("baseline stage always runs"),
        alternative: results[1],
    }
}

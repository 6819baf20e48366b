//! Joint ("all without a loop") draw of the latent log-variances.
//!
//! Given the mixture indicators, `(h_0, ..., h_n)` is Gaussian with a
//! symmetric tridiagonal precision matrix. A banded Cholesky factorization
//! yields the conditional mean and an exact joint draw in O(n).

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::mixture::{IndicatorPath, LinearizedData, MixtureTable};
use crate::model::{LatentPath, SvParameters};
use crate::rng;

/// Precision `Omega` (diagonal and first off-diagonal) and linear term `c` of
/// the Gaussian full conditional `N(Omega^{-1} c, Omega^{-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
    pub covector: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>, covector: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || offdiag.len() + 1 != diag.len() || covector.len() != diag.len() {
            return Err(Error::validation(format!(
                "inconsistent tridiagonal dimensions: diag {}, offdiag {}, covector {}",
                diag.len(),
                offdiag.len(),
                covector.len()
            )));
        }
        Ok(Self {
            diag,
            offdiag,
            covector,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

/// Builds the precision system of h | ystar, r, theta.
///
/// With `s2 = sigma^2`, `m_t`, `v_t` the moments of component `r_t`:
///
/// ```text
/// diag_0 = 1/s2
/// diag_t = 1/v_t + (1 + phi^2)/s2        1 <= t < n
/// diag_n = 1/v_n + 1/s2
/// off_t  = -phi/s2
/// c_0    = mu (1 - phi)/s2
/// c_t    = mu (1 - phi)^2/s2 + (ystar_t - m_t)/v_t
/// c_n    = mu (1 - phi)/s2   + (ystar_n - m_n)/v_n
/// ```
pub fn build_system(
    ystar: &LinearizedData,
    r: &IndicatorPath,
    params: &SvParameters,
    table: &MixtureTable,
) -> Result<TridiagonalSystem> {
    let n = ystar.len();
    if r.len() != n || n == 0 {
        return Err(Error::validation(format!(
            "{} observations but {} indicators",
            n,
            r.len()
        )));
    }
    let mut sys = TridiagonalSystem {
        diag: Vec::new(),
        offdiag: Vec::new(),
        covector: Vec::new(),
    };
    fill_system(ystar.ystar(), r.as_slice(), params, table, &mut sys);
    if let Some(i) = sys
        .diag
        .iter()
        .chain(&sys.offdiag)
        .chain(&sys.covector)
        .position(|v| !v.is_finite())
    {
        return Err(Error::internal(format!(
            "non-finite entry {i} in latent precision system (theta = {params:?}, offset = {})",
            ystar.offset()
        )));
    }
    Ok(sys)
}

pub(crate) fn fill_system(
    ystar: &[f64],
    r: &[u8],
    params: &SvParameters,
    table: &MixtureTable,
    sys: &mut TridiagonalSystem,
) {
    let n = ystar.len();
    let (mu, phi) = (params.mu(), params.phi());
    let inv_s2 = 1.0 / (params.sigma() * params.sigma());
    let comps = table.components();
    let interior = (1.0 + phi * phi) * inv_s2;
    let level_edge = mu * (1.0 - phi) * inv_s2;
    let level_mid = mu * (1.0 - phi) * (1.0 - phi) * inv_s2;

    sys.diag.clear();
    sys.offdiag.clear();
    sys.covector.clear();
    sys.diag.push(inv_s2);
    sys.covector.push(level_edge);
    for t in 1..=n {
        let c = comps[r[t - 1] as usize];
        let inv_v = 1.0 / c.variance;
        let obs = (ystar[t - 1] - c.mean) * inv_v;
        if t < n {
            sys.diag.push(inv_v + interior);
            sys.covector.push(level_mid + obs);
        } else {
            sys.diag.push(inv_v + inv_s2);
            sys.covector.push(level_edge + obs);
        }
    }
    sys.offdiag.resize(n, -phi * inv_s2);
}

/// Banded Cholesky factor `L` of a tridiagonal SPD matrix: `d` is the
/// diagonal of `L`, `l` its sub-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalCholesky {
    pub d: Vec<f64>,
    pub l: Vec<f64>,
}

impl TridiagonalCholesky {
    pub fn factor(sys: &TridiagonalSystem) -> Result<Self> {
        let mut f = Self {
            d: Vec::with_capacity(sys.dim()),
            l: Vec::with_capacity(sys.dim().saturating_sub(1)),
        };
        f.refactor(sys)?;
        Ok(f)
    }

    fn refactor(&mut self, sys: &TridiagonalSystem) -> Result<()> {
        self.d.clear();
        self.l.clear();
        let mut pivot = sys.diag[0];
        for i in 0..sys.dim() {
            if i > 0 {
                let li = sys.offdiag[i - 1] / self.d[i - 1];
                self.l.push(li);
                pivot = sys.diag[i] - li * li;
            }
            if !(pivot > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    index: i,
                    value: pivot,
                });
            }
            self.d.push(libm::sqrt(pivot));
        }
        Ok(())
    }

    /// Solves `L a = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        b[0] /= self.d[0];
        for i in 1..b.len() {
            b[i] = (b[i] - self.l[i - 1] * b[i - 1]) / self.d[i];
        }
    }

    /// Solves `L^T x = a` in place.
    pub fn backward(&self, a: &mut [f64]) {
        let last = a.len() - 1;
        a[last] /= self.d[last];
        for i in (0..last).rev() {
            a[i] = (a[i] - self.l[i] * a[i + 1]) / self.d[i];
        }
    }

    /// Solves `Omega x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }
}

/// Conditional mean `Omega^{-1} c`.
pub fn conditional_mean(system: &TridiagonalSystem) -> Result<Vec<f64>> {
    let chol = TridiagonalCholesky::factor(system)?;
    let mut m = system.covector.clone();
    chol.solve(&mut m);
    Ok(m)
}

/// Exact draw from `N(Omega^{-1} c, Omega^{-1})`.
pub fn sample_latent<R: RngCore + ?Sized>(system: &TridiagonalSystem, rng: &mut R) -> Result<LatentPath> {
    let chol = TridiagonalCholesky::factor(system)?;
    let mut z: Vec<f64> = (0..system.dim()).map(|_| rng::std_normal(rng)).collect();
    Ok(LatentPath::from_vec_unchecked(draw_with_noise(&chol, &system.covector, &mut z)))
}

/// `mean + L^{-T} z` computed as `L^{-T} (L^{-1} c + z)`; `z` is consumed.
pub fn draw_with_noise(chol: &TridiagonalCholesky, covector: &[f64], z: &mut [f64]) -> Vec<f64> {
    let mut a = covector.to_vec();
    chol.forward(&mut a);
    for (ai, zi) in a.iter_mut().zip(z.iter()) {
        *ai += zi;
    }
    chol.backward(&mut a);
    a
}

/// Scratch space reused across sweeps so that a chain allocates once.
#[derive(Debug, Clone)]
pub(crate) struct LatentWorkspace {
    system: TridiagonalSystem,
    chol: TridiagonalCholesky,
}

impl LatentWorkspace {
    pub(crate) fn new() -> Self {
        Self {
            system: TridiagonalSystem {
                diag: Vec::new(),
                offdiag: Vec::new(),
                covector: Vec::new(),
            },
            chol: TridiagonalCholesky {
                d: Vec::new(),
                l: Vec::new(),
            },
        }
    }

    /// Overwrites `h` (length n + 1) with a fresh joint draw.
    pub(crate) fn draw<R: RngCore + ?Sized>(
        &mut self,
        ystar: &[f64],
        r: &[u8],
        params: &SvParameters,
        table: &MixtureTable,
        h: &mut [f64],
        rng: &mut R,
    ) -> Result<()> {
        fill_system(ystar, r, params, table, &mut self.system);
        self.chol.refactor(&self.system)?;
        h.copy_from_slice(&self.system.covector);
        self.chol.forward(h);
        for hi in h.iter_mut() {
            *hi += rng::std_normal(rng);
        }
        self.chol.backward(h);
        if let Some(i) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::internal(format!(
                "latent draw produced non-finite h_{i} (theta = {params:?})"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{linearize, sample_indicators};
    use crate::model::ReturnsSeries;
    use crate::special::LN_2PI;
    use alloc::vec;
    use nalgebra::{DMatrix, DVector};

    /// Joint log density of (h_0..h_n) given ystar, r and theta, written
    /// directly from the model equations.
    fn joint_log_density(h: &[f64], ystar: &[f64], r: &[u8], p: &SvParameters, t: &MixtureTable) -> f64 {
        let s2 = p.sigma() * p.sigma();
        let mut lp = -0.5 * (LN_2PI + libm::log(s2 / (1.0 - p.phi() * p.phi())))
            - 0.5 * (h[0] - p.mu()) * (h[0] - p.mu()) * (1.0 - p.phi() * p.phi()) / s2;
        for i in 1..h.len() {
            let m = p.mu() + p.phi() * (h[i - 1] - p.mu());
            lp += -0.5 * (h[i] - m) * (h[i] - m) / s2;
            let c = t.components()[r[i - 1] as usize];
            let e = ystar[i - 1] - c.mean - h[i];
            lp += -0.5 * e * e / c.variance;
        }
        lp
    }

    /// Dense precision and linear term by central finite differences of the
    /// joint log density (exact for a quadratic up to rounding).
    fn dense_oracle(ystar: &[f64], r: &[u8], p: &SvParameters, t: &MixtureTable) -> (DMatrix<f64>, DVector<f64>) {
        let dim = ystar.len() + 1;
        let f = |h: &[f64]| joint_log_density(h, ystar, r, p, t);
        let base = vec![0.0; dim];
        let step = 1.0;
        let mut q = DMatrix::zeros(dim, dim);
        let mut c = DVector::zeros(dim);
        for i in 0..dim {
            let mut hp = base.clone();
            hp[i] = step;
            let mut hm = base.clone();
            hm[i] = -step;
            c[i] = (f(&hp) - f(&hm)) / (2.0 * step);
            for j in 0..dim {
                let eval = |si: f64, sj: f64| {
                    let mut h = base.clone();
                    h[i] += si;
                    h[j] += sj;
                    f(&h)
                };
                q[(i, j)] = -(eval(step, step) - eval(step, -step) - eval(-step, step) + eval(-step, -step))
                    / (4.0 * step * step);
            }
        }
        (q, c)
    }

    fn random_instance(n: usize, seed: u64, params: SvParameters) -> (LinearizedData, IndicatorPath) {
        let mut rng = rng::rng_from_seed(seed);
        let sim = crate::model::svsim_with_rng(n, params, &mut rng).unwrap();
        let l = linearize(&sim.0);
        let r = sample_indicators(&l, &sim.1, &MixtureTable::omori10(), &mut rng).unwrap();
        (l, r)
    }

    #[test]
    fn system_matches_dense_oracle() {
        let t = MixtureTable::omori10();
        for (seed, phi) in [(1, 0.95), (2, -0.4), (3, 0.0)] {
            let p = SvParameters::new(-1.5, phi, 0.35).unwrap();
            let (l, r) = random_instance(10, seed, p);
            let sys = build_system(&l, &r, &p, &t).unwrap();
            let (q, c) = dense_oracle(l.ystar(), r.as_slice(), &p, &t);
            for i in 0..11 {
                assert!((q[(i, i)] - sys.diag[i]).abs() < 1e-10 * q[(i, i)].abs().max(1.0));
                assert!((c[i] - sys.covector[i]).abs() < 1e-10 * c[i].abs().max(1.0), "{i}: {} {}", c[i], sys.covector[i]);
                for j in 0..11 {
                    let expected = if j == i + 1 {
                        sys.offdiag[i]
                    } else if i == j + 1 {
                        sys.offdiag[j]
                    } else if i == j {
                        sys.diag[i]
                    } else {
                        0.0
                    };
                    assert!((q[(i, j)] - expected).abs() < 1e-10 * q[(i, i)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn diagonal_case_conditional_mean() {
        // n = 1, phi = 0: states are independent.
        let t = MixtureTable::omori10();
        let p = SvParameters::new(-2.0, 0.0, 0.5).unwrap();
        let y = ReturnsSeries::new(vec![0.3, 0.2]).unwrap();
        let l = linearize(&y);
        let r = IndicatorPath::new(vec![4, 7], &t).unwrap();
        let sys = build_system(&l, &r, &p, &t).unwrap();
        assert!(sys.offdiag.iter().all(|&o| o == 0.0));
        let mean = conditional_mean(&sys).unwrap();
        let s2 = 0.25;
        for k in 0..2 {
            let c = t.components()[r.as_slice()[k] as usize];
            let expected = ((l.ystar()[k] - c.mean) / c.variance + p.mu() / s2) / (1.0 / c.variance + 1.0 / s2);
            assert!((mean[k + 1] - expected).abs() < 1e-12);
        }
        assert!((mean[0] - p.mu()).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_returns_conditional_mean() {
        let t = MixtureTable::omori10();
        let p = SvParameters::new(-9.0, 0.97, 0.15).unwrap();
        let (l, r) = random_instance(10, 9, p);
        let sys = build_system(&l, &r, &p, &t).unwrap();
        let chol = TridiagonalCholesky::factor(&sys).unwrap();
        let mut z = vec![0.0; 11];
        let draw = draw_with_noise(&chol, &sys.covector, &mut z);
        let (q, c) = dense_oracle(l.ystar(), r.as_slice(), &p, &t);
        let dense = q.cholesky().unwrap().solve(&c);
        for i in 0..11 {
            assert!((draw[i] - dense[i]).abs() < 1e-10, "{i}");
        }
    }

    #[test]
    fn ill_conditioned_still_positive_definite() {
        let t = MixtureTable::omori10();
        let p = SvParameters::new(-9.0, 0.999, 1e-4).unwrap();
        let (l, r) = random_instance(2000, 4, p);
        let sys = build_system(&l, &r, &p, &t).unwrap();
        let chol = TridiagonalCholesky::factor(&sys).unwrap();
        assert!(chol.d.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn non_spd_reports_pivot() {
        let sys = TridiagonalSystem::new(vec![1.0, 1.0, 1.0], vec![0.5, 2.0], vec![0.0; 3]).unwrap();
        match TridiagonalCholesky::factor(&sys) {
            Err(Error::NotPositiveDefinite { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
        assert!(TridiagonalSystem::new(vec![1.0], vec![0.5], vec![0.0]).is_err());
    }

    #[test]
    fn independent_states_uncorrelated() {
        let sys = TridiagonalSystem::new(vec![2.0, 0.5, 4.0], vec![0.0, 0.0], vec![1.0, -1.0, 0.0]).unwrap();
        let mut rng = rng::rng_from_seed(12);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_latent(&sys, &mut rng).unwrap().into_vec()).collect();
        let mean = |k: usize| draws.iter().map(|d| d[k]).sum::<f64>() / n as f64;
        let ms: Vec<f64> = (0..3).map(mean).collect();
        let cov = |a: usize, b: usize| draws.iter().map(|d| (d[a] - ms[a]) * (d[b] - ms[b])).sum::<f64>() / n as f64;
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let corr = cov(a, b) / libm::sqrt(cov(a, a) * cov(b, b));
            assert!(corr.abs() < 0.02, "{a},{b}: {corr}");
        }
        assert!((ms[0] - 0.5).abs() < 4.0 * libm::sqrt(0.5 / n as f64));
        assert!((ms[1] + 2.0).abs() < 4.0 * libm::sqrt(2.0 / n as f64));
    }

    #[test]
    fn workspace_draw_matches_free_function() {
        let t = MixtureTable::omori10();
        let p = SvParameters::new(-3.0, 0.9, 0.3).unwrap();
        let (l, r) = random_instance(50, 21, p);
        let sys = build_system(&l, &r, &p, &t).unwrap();
        let mut a = rng::rng_from_seed(5);
        let mut b = rng::rng_from_seed(5);
        let free = sample_latent(&sys, &mut a).unwrap();
        let mut ws = LatentWorkspace::new();
        let mut h = vec![0.0; 51];
        ws.draw(l.ystar(), r.as_slice(), &p, &t, &mut h, &mut b).unwrap();
        assert_eq!(free.as_slice(), &h[..]);
    }
}

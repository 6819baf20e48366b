//! Auxiliary mixture linearization of the observation equation.
//!
//! Squaring and logging the returns turns `y_t = exp(h_t / 2) z_t` into
//! `log y_t^2 = h_t + log z_t^2`. The log chi^2_1 error is replaced by a finite
//! Gaussian mixture; conditioning on the component indicators makes the model
//! linear and Gaussian in `h`.

use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::model::{LatentPath, ReturnsSeries};
use crate::rng;
use crate::special::{LOG_CHISQ1_MEAN, LOG_CHISQ1_VAR};

/// Text of the shipped ten-component table.
pub const OMORI10_SOURCE: &str = include_str!("../data/mixture_omori10.txt");

/// Minimum number of components accepted from a table file.
pub const MIN_FILE_COMPONENTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTable {
    components: Vec<MixtureComponent>,
    // log(weight) - 0.5 log(variance), cached for indicator sampling
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl MixtureTable {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::validation("mixture table is empty"));
        }
        for (j, c) in components.iter().enumerate() {
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::validation(format!(
                    "mixture component {j} has non-positive variance {}",
                    c.variance
                )));
            }
            if !(c.weight >= 0.0) || !c.mean.is_finite() {
                return Err(Error::validation(format!(
                    "mixture component {j} has invalid weight or mean"
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let log_norm = components
            .iter()
            .map(|c| libm::log(c.weight) - 0.5 * libm::log(c.variance))
            .collect();
        let inv_var = components.iter().map(|c| 1.0 / c.variance).collect();
        Ok(Self {
            components,
            log_norm,
            inv_var,
        })
    }

    /// Parses the plain-text table format: one `weight mean variance` row per
    /// component, `#` starts a comment, blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut components = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::validation(format!(
                    "mixture table line {}: expected 3 columns, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut vals = [0.0; 3];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f.parse::<f64>().map_err(|_| {
                    Error::validation(format!(
                        "mixture table line {}: cannot parse {f:?}",
                        lineno + 1
                    ))
                })?;
            }
            components.push(MixtureComponent {
                weight: vals[0],
                mean: vals[1],
                variance: vals[2],
            });
        }
        if components.len() < MIN_FILE_COMPONENTS {
            return Err(Error::validation(format!(
                "mixture table has {} components, need at least {MIN_FILE_COMPONENTS}",
                components.len()
            )));
        }
        Self::new(components)
    }

    /// The shipped ten-component approximation.
    pub fn omori10() -> Self {
        Self::parse(OMORI10_SOURCE).expect("shipped mixture table is valid")
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.variance + c.mean * c.mean))
            .sum::<f64>()
            - m * m
    }

    /// Log of the unnormalized posterior probability of component `j` for a
    /// residual `d = ystar_t - h_t`.
    #[inline]
    fn log_kernel(&self, j: usize, d: f64) -> f64 {
        let e = d - self.components[j].mean;
        self.log_norm[j] - 0.5 * e * e * self.inv_var[j]
    }

    /// Normalized component probabilities for residual `d`, written into `out`.
    pub fn indicator_probabilities(&self, d: f64, out: &mut [f64]) {
        let k = self.len();
        let mut max = f64::NEG_INFINITY;
        for (j, o) in out.iter_mut().enumerate().take(k) {
            *o = self.log_kernel(j, d);
            max = max.max(*o);
        }
        if !max.is_finite() {
            let pick = closest_component(self, d);
            for (j, o) in out.iter_mut().enumerate().take(k) {
                *o = if j == pick { 1.0 } else { 0.0 };
            }
            return;
        }
        let mut total = 0.0;
        for o in out.iter_mut().take(k) {
            *o = libm::exp(*o - max);
            total += *o;
        }
        for o in out.iter_mut().take(k) {
            *o /= total;
        }
    }
}

impl Default for MixtureTable {
    fn default() -> Self {
        Self::omori10()
    }
}

/// Component index per observation, r_1..r_n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorPath {
    r: Vec<u8>,
}

impl IndicatorPath {
    pub fn new(r: Vec<u8>, table: &MixtureTable) -> Result<Self> {
        if let Some(&bad) = r.iter().find(|&&j| j as usize >= table.len()) {
            return Err(Error::validation(format!(
                "indicator {bad} out of range for {} components",
                table.len()
            )));
        }
        Ok(Self { r })
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// `ystar_t = log(y_t^2 + c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedData {
    ystar: Vec<f64>,
    offset: f64,
}

impl LinearizedData {
    pub fn ystar(&self) -> &[f64] {
        &self.ystar
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.ystar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ystar.is_empty()
    }
}

/// Sample standard deviation (denominator n - 1).
pub(crate) fn sample_sd(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    libm::sqrt(y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

/// Log-squares the returns. The offset `sd(y) / 10000` is added only when the
/// series contains exact zeros.
pub fn linearize(y: &ReturnsSeries) -> LinearizedData {
    linearize_values(y.values(), y.had_zeros())
}

pub(crate) fn linearize_values(y: &[f64], had_zeros: bool) -> LinearizedData {
    let offset = if had_zeros { sample_sd(y) / 10_000.0 } else { 0.0 };
    if offset > 0.0 {
        log::warn!(
            "return series contains zeros; adding offset {offset:e} to squared returns"
        );
    }
    let ystar = y.iter().map(|v| libm::log(v * v + offset)).collect();
    LinearizedData { ystar, offset }
}

/// Draws every r_t independently with P(r_t = j) proportional to
/// `w_j N(ystar_t - h_t; m_j, v_j)`.
pub fn sample_indicators<R: RngCore + ?Sized>(
    ystar: &LinearizedData,
    h: &LatentPath,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<IndicatorPath> {
    if ystar.len() != h.n() {
        return Err(Error::validation(format!(
            "{} linearized observations but latent path has {} states",
            ystar.len(),
            h.n()
        )));
    }
    let mut r = Vec::with_capacity(ystar.len());
    fill_indicators(ystar.ystar(), h.states(), table, rng, &mut r);
    Ok(IndicatorPath { r })
}

pub(crate) fn fill_indicators<R: RngCore + ?Sized>(
    ystar: &[f64],
    h: &[f64],
    table: &MixtureTable,
    rng: &mut R,
    out: &mut Vec<u8>,
) {
    let k = table.len();
    let mut buf = [0.0f64; 32];
    let mut heap = Vec::new();
    let probs: &mut [f64] = if k <= buf.len() {
        &mut buf[..k]
    } else {
        heap.resize(k, 0.0);
        &mut heap[..]
    };
    out.clear();
    for (&ys, &ht) in ystar.iter().zip(h) {
        let d = ys - ht;
        let mut max = f64::NEG_INFINITY;
        for (j, p) in probs.iter_mut().enumerate() {
            *p = table.log_kernel(j, d);
            max = max.max(*p);
        }
        let mut total = 0.0;
        for p in probs.iter_mut() {
            *p = libm::exp(*p - max);
            total += *p;
            *p = total;
        }
        let pick = if total > 0.0 && total.is_finite() {
            let u = rng::uniform(rng) * total;
            probs.iter().position(|&c| u < c).unwrap_or(k - 1)
        } else {
            closest_component(table, d)
        };
        out.push(pick as u8);
    }
}

/// Component that dominates when every kernel underflows: for |d| -> inf the
/// log kernel behaves like -d^2/(2v) + d m / v, so the widest component wins
/// and ties go to the mean on the side of d.
fn closest_component(table: &MixtureTable, d: f64) -> usize {
    let side = if d < 0.0 { -1.0 } else { 1.0 };
    let mut best = 0;
    let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (j, c) in table.components().iter().enumerate() {
        let key = (c.variance, side * c.mean / c.variance);
        if key.0 > best_key.0 || (key.0 == best_key.0 && key.1 > best_key.1) {
            best_key = key;
            best = j;
        }
    }
    best
}

/// Absolute errors of the table's mean and variance against the exact log
/// chi^2_1 moments.
pub fn mixture_fidelity(table: &MixtureTable) -> (f64, f64) {
    (
        (table.mean() - LOG_CHISQ1_MEAN).abs(),
        (table.variance() - LOG_CHISQ1_VAR).abs(),
    )
}

use core::f64::consts::PI;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// log N(x; mean, var)
#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + libm::log(var) + d * d / var)
}

/// log of the Gamma(shape, rate) density.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * libm::log(rate) - ln_gamma(shape) + (shape - 1.0) * libm::log(x) - rate * x
}

/// log of the Inverse-Gamma(shape, scale) density.
pub fn inverse_gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * libm::log(scale) - ln_gamma(shape) - (shape + 1.0) * libm::log(x) - scale / x
}

/// Numerically stable log(sum(exp(v))).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(values.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Mean and variance of log(z^2), z ~ N(0, 1): psi(1/2) + log 2 and pi^2 / 2.
pub const LOG_CHISQ1_MEAN: f64 = -EULER_GAMMA - core::f64::consts::LN_2;
pub const LOG_CHISQ1_VAR: f64 = PI * PI / 2.0;

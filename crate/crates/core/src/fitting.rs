// SPDX-License-Identifier: Apache-2.0

//! Lorentzian peak fits, signal-to-noise ratio and coherence time.
//!
//! The fit minimises the sum of squared residuals of
//! `L(f) = A γ² / ((f − f₀)² + γ²) + B` with a Levenberg-Marquardt loop
//! (multiplicative damping on the diagonal of `JᵀJ`). Positivity of `A` and
//! `γ` is enforced by fitting `A = a²` and `γ = e^g`.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{peak_index, PowerSpectrum};

pub fn lorentzian(f: f64, a: f64, gamma: f64, f0: f64, b: f64) -> f64 {
    let d = f - f0;
    a * gamma * gamma / (d * d + gamma * gamma) + b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub amplitude_a: f64,
    /// Fitted width parameter; used directly as the FWHM in `tau`.
    pub gamma: f64,
    pub f0: f64,
    pub baseline_b: f64,
    pub residual_sigma: f64,
    /// `A / σ`; infinite when the residuals vanish.
    pub snr: f64,
    pub tau: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction.
    pub relative_tolerance: f64,
    pub amplitude_floor: f64,
    /// Lower bound on γ in units of the bin width. Below one bin the width is
    /// not resolved and the fit can trade γ → 0 against A → ∞ indefinitely.
    pub gamma_floor_bins: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            amplitude_floor: 1e-10,
            gamma_floor_bins: 0.25,
        }
    }
}

/// Minimum number of spectrum bins accepted by [`fit_lorentzian`].
pub const MIN_FIT_BINS: usize = 8;

const MAX_DAMPING: f64 = 1e16;

pub fn fit_lorentzian(spec: &PowerSpectrum) -> Result<LorentzianFit> {
    fit_lorentzian_with(spec, &FitConfig::default())
}

pub fn fit_lorentzian_with(spec: &PowerSpectrum, config: &FitConfig) -> Result<LorentzianFit> {
    if spec.len() < MIN_FIT_BINS {
        return Err(Error::InvalidArgument(format!(
            "Lorentzian fit needs at least {MIN_FIT_BINS} bins, got {}",
            spec.len()
        )));
    }
    if spec
        .power
        .iter()
        .chain(&spec.frequencies)
        .any(|v| !v.is_finite())
    {
        return Err(Error::FitDegenerate(
            "spectrum contains non-finite values".into(),
        ));
    }
    let (lo, hi) = spec
        .power
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            (lo.min(p), hi.max(p))
        });
    if hi <= lo {
        return Err(Error::FitDegenerate(format!(
            "all {} power values equal {lo}",
            spec.len()
        )));
    }

    // Work on data normalised to unit peak so the damping is scale-free.
    let scale = hi.abs().max(lo.abs());
    let data: Vec<f64> = spec.power.iter().map(|p| p / scale).collect();
    let freqs = &spec.frequencies;

    let k = peak_index(spec)?;
    let median = median(&data);
    let amp0 = (data[k] - median).max(f64::EPSILON);
    let gamma_min = config.gamma_floor_bins.max(0.0) * spec.bin_width();
    let natural = |u: &Vector4<f64>| natural(u, gamma_min);
    let mut internal = Vector4::new(
        amp0.sqrt(),
        (spec.bin_width() - gamma_min)
            .max(1e-3 * spec.bin_width())
            .ln(),
        freqs[k],
        median,
    );

    let mut cost = objective(freqs, &data, &natural(&internal));
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(freqs, &data, &internal, gamma_min);
        let mut step = None;
        while damping <= MAX_DAMPING {
            let mut lhs = jtj;
            for i in 0..4 {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = lhs.cholesky().map(|c| c.solve(&(-jtr))) else {
                damping *= 10.0;
                continue;
            };
            let trial = internal + delta;
            let trial_cost = objective(freqs, &data, &natural(&trial));
            if trial_cost.is_finite() && trial_cost < cost {
                step = Some((trial, trial_cost));
                break;
            }
            damping *= 10.0;
        }
        let Some((trial, trial_cost)) = step else {
            // No descent direction left at any damping: stationary point.
            converged = true;
            break;
        };
        let decrease = cost - trial_cost;
        internal = trial;
        cost = trial_cost;
        damping = (damping / 10.0).max(1e-12);
        if decrease <= config.relative_tolerance * (cost + decrease)
            || cost <= 1e-30 * data.len() as f64
        {
            converged = true;
            break;
        }
    }

    let [a, gamma, f0, b] = natural(&internal);
    let residuals: Vec<f64> = freqs
        .iter()
        .zip(&data)
        .map(|(&f, &y)| (y - lorentzian(f, a, gamma, f0, b)) * scale)
        .collect();
    let residual_sigma = std_dev(&residuals);
    let amplitude_a = (a * scale).max(config.amplitude_floor);
    let snr = match snr_of(amplitude_a, residual_sigma) {
        Snr::Finite(v) => v,
        Snr::Noiseless => f64::INFINITY,
    };
    Ok(LorentzianFit {
        amplitude_a,
        gamma,
        f0,
        baseline_b: b * scale,
        residual_sigma,
        snr,
        tau: 1.0 / (PI * gamma),
        converged,
        iterations,
    })
}

/// `(A, γ, f₀, B)` from the internal `(√A, ln(γ − γ_min), f₀, B)`.
fn natural(u: &Vector4<f64>, gamma_min: f64) -> [f64; 4] {
    [u[0] * u[0], gamma_min + u[1].exp(), u[2], u[3]]
}

fn objective(freqs: &[f64], data: &[f64], [a, gamma, f0, b]: &[f64; 4]) -> f64 {
    freqs
        .iter()
        .zip(data)
        .map(|(&f, &y)| {
            let r = lorentzian(f, *a, *gamma, *f0, *b) - y;
            r * r
        })
        .sum()
}

/// Partial derivatives of `L(f)` with respect to `(A, γ, f₀, B)`.
fn model_gradient(f: f64, a: f64, gamma: f64, f0: f64) -> [f64; 4] {
    let d = f - f0;
    let g2 = gamma * gamma;
    let den = d * d + g2;
    let den2 = den * den;
    [
        g2 / den,
        2.0 * a * gamma * d * d / den2,
        2.0 * a * g2 * d / den2,
        1.0,
    ]
}

fn normal_equations(
    freqs: &[f64],
    data: &[f64],
    u: &Vector4<f64>,
    gamma_min: f64,
) -> (Matrix4<f64>, Vector4<f64>) {
    let [a, gamma, f0, b] = natural(u, gamma_min);
    // Chain rule for A = u₀², γ = γ_min + e^{u₁}.
    let chain = [2.0 * u[0], gamma - gamma_min, 1.0, 1.0];
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for (&f, &y) in freqs.iter().zip(data) {
        let r = lorentzian(f, a, gamma, f0, b) - y;
        let g = model_gradient(f, a, gamma, f0);
        let row = Vector4::new(
            g[0] * chain[0],
            g[1] * chain[1],
            g[2] * chain[2],
            g[3] * chain[3],
        );
        jtj += row * row.transpose();
        jtr += row * r;
    }
    (jtj, jtr)
}

/// Sum of squared residuals and its gradient in `(A, γ, f₀, B)`.
pub fn objective_and_gradient(freqs: &[f64], data: &[f64], params: [f64; 4]) -> (f64, [f64; 4]) {
    let [a, gamma, f0, b] = params;
    let mut grad = [0.0; 4];
    let mut cost = 0.0;
    for (&f, &y) in freqs.iter().zip(data) {
        let r = lorentzian(f, a, gamma, f0, b) - y;
        cost += r * r;
        for (g, d) in grad.iter_mut().zip(model_gradient(f, a, gamma, f0)) {
            *g += 2.0 * r * d;
        }
    }
    (cost, grad)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Finite(f64),
    /// Residuals vanished exactly.
    Noiseless,
}

impl Snr {
    pub fn value(self) -> f64 {
        match self {
            Snr::Finite(v) => v,
            Snr::Noiseless => f64::INFINITY,
        }
    }
}

pub fn snr(fit: &LorentzianFit) -> Snr {
    snr_of(fit.amplitude_a, fit.residual_sigma)
}

fn snr_of(amplitude: f64, sigma: f64) -> Snr {
    if sigma > 0.0 {
        Snr::Finite(amplitude / sigma)
    } else {
        Snr::Noiseless
    }
}

/// `τ = 1 / (π γ)`.
pub fn coherence_time(gamma: f64) -> Result<f64> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(1.0 / (PI * gamma))
    } else {
        Err(Error::InvalidLinewidth(gamma))
    }
}

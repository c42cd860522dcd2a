// SPDX-License-Identifier: Apache-2.0

//! Spectral pipeline: mean removal, Hann taper, real DFT and one-sided power.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::capacitance::FluxSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    Hann,
}

/// One-sided power spectrum, `N/2 + 1` bins.
///
/// Frequencies are cycles per flux quantum; with one flux quantum taken as
/// one second they read as Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub n_input: usize,
    pub flux_span: f64,
    pub window: WindowKind,
}

impl PowerSpectrum {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.flux_span
    }

    /// Same spectrum with every power value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PowerSpectrum {
        PowerSpectrum {
            power: self.power.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }
}

/// Subtracts the sample mean.
pub fn detrend(signal: &FluxSignal) -> FluxSignal {
    FluxSignal {
        cq_values: remove_mean(&signal.cq_values),
        ..signal.clone()
    }
}

pub fn remove_mean(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| v - mean).collect()
}

/// Symmetric Hann window, `w[i] = ½(1 − cos(2πi/(N−1)))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Hann window needs n >= 2, got {n}"
        )));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            // Mirror the upper half so the window is exactly symmetric.
            let j = i.min(n - 1 - i) as f64;
            0.5 * (1.0 - (TAU * j / denom).cos())
        })
        .collect())
}

/// `P[k] = (2/N²) |Σ_n w[n] x[n] e^{−2πikn/N}|²` for `k = 0..=N/2`.
///
/// The input is windowed as given; call [`detrend`] first (or use
/// [`analyze`]) to remove the mean.
pub fn power_spectrum(signal: &FluxSignal) -> Result<PowerSpectrum> {
    signal.validate()?;
    let power = windowed_power(&signal.cq_values)?;
    let span = signal.span();
    let frequencies = (0..power.len()).map(|k| k as f64 / span).collect();
    Ok(PowerSpectrum {
        frequencies,
        power,
        n_input: signal.len(),
        flux_span: span,
        window: WindowKind::Hann,
    })
}

/// [`detrend`] followed by [`power_spectrum`].
pub fn analyze(signal: &FluxSignal) -> Result<PowerSpectrum> {
    power_spectrum(&detrend(signal))
}

/// One-sided Hann-windowed power of a real record.
pub fn windowed_power(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    let window = hann_window(n)?;
    let mut buffer: Vec<Complex<f64>> = values
        .iter()
        .zip(&window)
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let norm = 2.0 / (n as f64 * n as f64);
    Ok(buffer[..=n / 2]
        .iter()
        .map(|c| norm * c.norm_sqr())
        .collect())
}

/// Frequency and power of the strongest non-DC bin; ties go to the lower
/// frequency.
pub fn peak_location(spec: &PowerSpectrum) -> Result<(f64, f64)> {
    peak_index(spec).map(|k| (spec.frequencies[k], spec.power[k]))
}

pub fn peak_index(spec: &PowerSpectrum) -> Result<usize> {
    if spec.len() < 2 || spec.frequencies.len() != spec.len() {
        return Err(Error::InvalidArgument(
            "peak search needs at least one non-DC bin".into(),
        ));
    }
    let mut best = 1;
    for k in 2..spec.len() {
        if spec.power[k] > spec.power[best] {
            best = k;
        }
    }
    Ok(best)
}

// SPDX-License-Identifier: Apache-2.0

//! Parity-resolved quantum capacitance and flux sweeps.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::model::{parity_energy, Parity, C64};
use crate::phases::{dressed_hopping, effective_phase, hybridization_energy, Topology};

/// Scalar physics inputs. Energies in µeV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Dot detuning `E_D` (the same quantity as `E₀`).
    pub e_d: f64,
    /// Bare hybridization before phase dressing.
    pub e_m0: f64,
    pub t_l: C64,
    pub t_r: C64,
    pub delta_e_d: f64,
    /// Gate lever arm `α ∈ (0, 1]`.
    pub lever_alpha: f64,
    pub k_b_t: f64,
    /// `e²` in the chosen unit system; capacitances carry `prefactor · α²`.
    pub capacitance_prefactor: f64,
}

/// Relative detuning shift used when none is given.
pub const DEFAULT_DELTA_E_D_RATIO: f64 = 0.01;

impl Default for PhysicalParams {
    fn default() -> Self {
        let e_m0 = 10.0;
        PhysicalParams {
            e_d: 0.0,
            e_m0,
            t_l: C64::from(2.0),
            t_r: C64::from(2.0),
            delta_e_d: DEFAULT_DELTA_E_D_RATIO * e_m0,
            lever_alpha: 1.0,
            k_b_t: 2.0,
            capacitance_prefactor: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("e_d", self.e_d)?;
        ensure_finite("e_m0", self.e_m0)?;
        ensure_finite("|t_l|", self.t_l.norm())?;
        ensure_finite("|t_r|", self.t_r.norm())?;
        ensure_finite("delta_e_d", self.delta_e_d)?;
        ensure_finite("capacitance_prefactor", self.capacitance_prefactor)?;
        if !(self.k_b_t > 0.0 && self.k_b_t.is_finite()) {
            return Err(Error::InvalidTemperature(self.k_b_t));
        }
        if !(self.lever_alpha > 0.0 && self.lever_alpha <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lever_alpha",
                reason: format!("must lie in (0, 1], got {}", self.lever_alpha),
            });
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.capacitance_prefactor * self.lever_alpha * self.lever_alpha
    }
}

/// Which capacitance quantity a sweep records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParityMode {
    #[serde(rename = "+1")]
    Even,
    #[serde(rename = "-1")]
    Odd,
    /// Boltzmann-weighted sum over both parities.
    #[serde(rename = "total")]
    Thermal,
    /// Parity-shift capacitance change `ΔC_Q`.
    #[serde(rename = "delta")]
    Delta,
}

impl ParityMode {
    pub fn fixed(self) -> Option<Parity> {
        match self {
            ParityMode::Even => Some(Parity::Even),
            ParityMode::Odd => Some(Parity::Odd),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ParityMode::Even => "+1",
            ParityMode::Odd => "-1",
            ParityMode::Thermal => "total",
            ParityMode::Delta => "delta",
        }
    }
}

impl From<Parity> for ParityMode {
    fn from(p: Parity) -> Self {
        match p {
            Parity::Even => ParityMode::Even,
            Parity::Odd => ParityMode::Odd,
        }
    }
}

impl fmt::Display for ParityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ParityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "+1" | "1" | "even" => Ok(ParityMode::Even),
            "-1" | "odd" => Ok(ParityMode::Odd),
            "total" | "thermal" => Ok(ParityMode::Thermal),
            "delta" => Ok(ParityMode::Delta),
            other => Err(Error::InvalidArgument(format!(
                "unknown parity mode `{other}`"
            ))),
        }
    }
}

/// Boltzmann weights `(P₊, P₋)` of two parity energies.
pub fn parity_probabilities(e_plus: f64, e_minus: f64, k_b_t: f64) -> Result<(f64, f64)> {
    check_temperature(k_b_t)?;
    // P₊ = 1 / (1 + exp((E₊ - E₋)/kT)), evaluated without overflow.
    let d = (e_plus - e_minus) / k_b_t;
    Ok((inverse_logistic(d), inverse_logistic(-d)))
}

/// `1 / (1 + eˣ)`.
fn inverse_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `cosh²(a) cosh²(b) / [cosh²(a) + cosh²(b)]²` with `a, b = E±/2kT`.
///
/// Evaluated through the log ratio of the two `cosh²` terms, so it stays
/// finite for arbitrarily large energies.
pub fn delta_p(e_plus: f64, e_minus: f64, k_b_t: f64) -> Result<f64> {
    check_temperature(k_b_t)?;
    let a = e_plus / (2.0 * k_b_t);
    let b = e_minus / (2.0 * k_b_t);
    let log_ratio = 2.0 * (ln_cosh(a) - ln_cosh(b));
    let e = (-log_ratio.abs()).exp();
    Ok(e / ((1.0 + e) * (1.0 + e)))
}

fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

fn check_temperature(k_b_t: f64) -> Result<()> {
    if k_b_t > 0.0 && k_b_t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(k_b_t))
    }
}

/// Effective coupling of a parity block, `t_L1 + Z P t_R1`.
pub fn effective_hopping(t_l1: C64, t_r1: C64, z: Parity, p: Parity) -> C64 {
    t_l1 + t_r1 * (z.sign() * p.sign())
}

/// `C_Q(Z)`; returns 0 in the limit where both detuning and hopping vanish.
pub fn parity_capacitance(p: &PhysicalParams, e_m: f64, t_eff: C64, z: Parity) -> Result<f64> {
    p.validate()?;
    Ok(parity_capacitance_unchecked(p, e_m, t_eff, z))
}

fn parity_capacitance_unchecked(p: &PhysicalParams, e_m: f64, t_eff: C64, z: Parity) -> f64 {
    let detuning = p.e_d + z.sign() * e_m;
    let energy = parity_energy(p.e_d, e_m, t_eff, z).value;
    if energy == 0.0 {
        return 0.0;
    }
    p.scale() * detuning * detuning / energy.powi(3) * (energy / (2.0 * p.k_b_t)).tanh()
}

/// `Σ_Z P(Z) C_Q(Z)` with Boltzmann weights of the two parity energies.
pub fn total_capacitance(p: &PhysicalParams, e_m: f64, t_eff: C64) -> Result<f64> {
    p.validate()?;
    let e_plus = parity_energy(p.e_d, e_m, t_eff, Parity::Even).value;
    let e_minus = parity_energy(p.e_d, e_m, t_eff, Parity::Odd).value;
    let (w_plus, w_minus) = parity_probabilities(e_plus, e_minus, p.k_b_t)?;
    Ok(
        w_plus * parity_capacitance_unchecked(p, e_m, t_eff, Parity::Even)
            + w_minus * parity_capacitance_unchecked(p, e_m, t_eff, Parity::Odd),
    )
}

/// `ΔC_Q = -[C_Q(+1) - C_Q(-1)] · δE_D · (4/kT) · δP`.
pub fn delta_capacitance(p: &PhysicalParams, e_m: f64, t_eff: C64) -> Result<f64> {
    p.validate()?;
    let e_plus = parity_energy(p.e_d, e_m, t_eff, Parity::Even).value;
    let e_minus = parity_energy(p.e_d, e_m, t_eff, Parity::Odd).value;
    let bracket = parity_capacitance_unchecked(p, e_m, t_eff, Parity::Even)
        - parity_capacitance_unchecked(p, e_m, t_eff, Parity::Odd);
    Ok(-bracket * p.delta_e_d * (4.0 / p.k_b_t) * delta_p(e_plus, e_minus, p.k_b_t)?)
}

/// Uniform flux grid `Φ_n = n · span / N`, `n = 0..N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxGrid {
    pub span: f64,
    pub samples: usize,
}

impl Default for FluxGrid {
    fn default() -> Self {
        FluxGrid {
            span: 10.0,
            samples: 4096,
        }
    }
}

impl FluxGrid {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "flux sweep needs at least 2 samples, got {}",
                self.samples
            )));
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "flux span must be positive and finite, got {}",
                self.span
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.span / self.samples as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.step();
        (0..self.samples).map(move |n| n as f64 * step)
    }
}

/// Additive zero-mean Gaussian noise applied in the flux domain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub sigma: f64,
    /// `None` draws from OS entropy; a seed makes the record reproducible.
    pub seed: Option<u64>,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        sigma: 0.0,
        seed: None,
    };

    pub fn seeded(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            sigma,
            seed: Some(seed),
        }
    }
}

/// Where additive noise entered the pipeline.
pub const NOISE_INJECTION_DOMAIN: &str = "flux";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSignal {
    pub flux_values: Vec<f64>,
    pub cq_values: Vec<f64>,
    pub parity_mode: ParityMode,
    pub noise_sigma: f64,
    pub rng_seed: Option<u64>,
}

impl FluxSignal {
    pub fn len(&self) -> usize {
        self.cq_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cq_values.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.flux_values[1] - self.flux_values[0]
    }

    /// `N · step`: the period the DFT assumes for the record.
    pub fn span(&self) -> f64 {
        self.step() * self.len() as f64
    }

    /// Equal lengths, at least two samples and a strictly increasing,
    /// constant-step flux axis.
    pub fn validate(&self) -> Result<()> {
        if self.flux_values.len() != self.cq_values.len() {
            return Err(Error::InvalidSignal(format!(
                "{} flux values but {} capacitance values",
                self.flux_values.len(),
                self.cq_values.len()
            )));
        }
        if self.len() < 2 {
            return Err(Error::InvalidSignal("need at least 2 samples".into()));
        }
        let step = self.step();
        if !(step > 0.0) {
            return Err(Error::InvalidSignal(
                "flux axis must be strictly increasing".into(),
            ));
        }
        for (i, w) in self.flux_values.windows(2).enumerate() {
            let tol = 1e-9 * step + 64.0 * f64::EPSILON * w[1].abs();
            if ((w[1] - w[0]) - step).abs() > tol {
                return Err(Error::InvalidSignal(format!(
                    "non-uniform flux sampling at index {}: step {} vs {}",
                    i + 1,
                    w[1] - w[0],
                    step
                )));
            }
        }
        if self.cq_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("non-finite capacitance value".into()));
        }
        Ok(())
    }
}

/// Capacitance quantity at one flux point.
pub fn capacitance_at(
    p: &PhysicalParams,
    topology: &Topology,
    mode: ParityMode,
    flux: f64,
) -> Result<f64> {
    p.validate()?;
    Ok(capacitance_at_unchecked(p, topology, mode, flux))
}

fn capacitance_at_unchecked(
    p: &PhysicalParams,
    topology: &Topology,
    mode: ParityMode,
    flux: f64,
) -> f64 {
    let theta = effective_phase(topology, flux).theta_total;
    let e_m = hybridization_energy(p.e_m0, theta);
    let t_l1 = dressed_hopping(p.t_l, theta);
    let t_r1 = dressed_hopping(p.t_r, theta);
    match mode.fixed() {
        // The block parity is identified with the readout parity.
        Some(z) => parity_capacitance_unchecked(p, e_m, effective_hopping(t_l1, t_r1, z, z), z),
        None => {
            let t_eff = effective_hopping(t_l1, t_r1, Parity::Even, Parity::Even);
            let value = match mode {
                ParityMode::Thermal => total_capacitance(p, e_m, t_eff),
                _ => delta_capacitance(p, e_m, t_eff),
            };
            value.expect("parameters validated by caller")
        }
    }
}

/// Samples the selected capacitance over a uniform flux grid.
pub fn sweep_flux(
    p: &PhysicalParams,
    topology: &Topology,
    mode: ParityMode,
    grid: FluxGrid,
    noise: NoiseSpec,
) -> Result<FluxSignal> {
    p.validate()?;
    grid.validate()?;
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be non-negative and finite, got {}",
            noise.sigma
        )));
    }
    let flux_values: Vec<f64> = grid.points().collect();
    let mut cq_values: Vec<f64> = flux_values
        .iter()
        .map(|&flux| capacitance_at_unchecked(p, topology, mode, flux))
        .collect();

    if noise.sigma > 0.0 {
        let mut rng = match noise.seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_rng(&mut rand::rng()),
        };
        add_gaussian_noise(&mut cq_values, noise.sigma, &mut rng);
    }

    Ok(FluxSignal {
        flux_values,
        cq_values,
        parity_mode: mode,
        noise_sigma: noise.sigma,
        rng_seed: noise.seed,
    })
}

fn add_gaussian_noise(values: &mut [f64], sigma: f64, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, sigma).expect("sigma checked positive and finite");
    for v in values {
        *v += normal.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phases::TopologyKind;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn params(e_d: f64) -> PhysicalParams {
        PhysicalParams {
            e_d,
            ..PhysicalParams::default()
        }
    }

    #[test]
    fn probabilities_examples() {
        let (a, b) = parity_probabilities(3.0, 3.0, 0.7).unwrap();
        assert_eq!((a, b), (0.5, 0.5));

        let (a, b) = parity_probabilities(0.0, 1e6, 1.0).unwrap();
        assert_eq!((a, b), (1.0, 0.0));

        let e = std::f64::consts::E;
        let (a, b) = parity_probabilities(1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(a, e / (e + 1.0), max_relative = 1e-14);
        assert_relative_eq!(b, 1.0 / (e + 1.0), max_relative = 1e-14);
        assert_abs_diff_eq!(a, 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        assert!(matches!(
            parity_probabilities(1.0, 2.0, 0.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            delta_p(1.0, 2.0, -1.0),
            Err(Error::InvalidTemperature(_))
        ));
        let p = PhysicalParams {
            k_b_t: 0.0,
            ..PhysicalParams::default()
        };
        assert!(parity_capacitance(&p, 1.0, C64::from(1.0), Parity::Even).is_err());
    }

    #[test]
    fn lever_arm_outside_unit_interval_is_rejected() {
        for alpha in [0.0, 1.5, f64::NAN] {
            let p = PhysicalParams {
                lever_alpha: alpha,
                ..PhysicalParams::default()
            };
            assert!(matches!(
                p.validate(),
                Err(Error::InvalidParameter {
                    name: "lever_alpha",
                    ..
                })
            ));
        }
    }

    #[test]
    fn delta_p_examples() {
        assert_eq!(delta_p(2.5, 2.5, 1.3).unwrap(), 0.25);
        assert_eq!(delta_p(0.0, 0.0, 1.0).unwrap(), 0.25);
        // cosh²(5) / (cosh²(5) + 1)², 50-digit evaluation.
        assert_relative_eq!(
            delta_p(10.0, 0.0, 1.0).unwrap(),
            1.815_173_039_616_817_3e-4,
            max_relative = 1e-13
        );
    }

    #[test]
    fn delta_p_survives_overflowing_cosh() {
        let v = delta_p(1e5, 0.0, 1.0).unwrap();
        assert!(v.is_finite() && v >= 0.0);
        let v = delta_p(1e5, 1e5 + 2.0, 1.0).unwrap();
        // Equal-size arguments: ratio of cosh² → exp(-2), finite and well inside (0, 1/4).
        let e = (-2.0f64).exp();
        assert_relative_eq!(v, e / ((1.0 + e) * (1.0 + e)), max_relative = 1e-12);
    }

    #[test]
    fn parity_capacitance_examples() {
        let p = params(2.0);
        // E_D + Z E_M = 0 kills the numerator.
        assert_eq!(
            parity_capacitance(&p, 2.0, C64::from(0.3), Parity::Odd).unwrap(),
            0.0
        );
        // Fully degenerate point: defined limit.
        let p0 = params(0.0);
        assert_eq!(
            parity_capacitance(&p0, 0.0, C64::from(0.0), Parity::Even).unwrap(),
            0.0
        );

        let hot = PhysicalParams {
            k_b_t: 1e4,
            ..params(2.0)
        };
        let v = parity_capacitance(&hot, 1.0, C64::from(0.0), Parity::Even).unwrap();
        assert_relative_eq!(v, (1.0 / 3.0) * (3.0 / 2e4f64).tanh(), max_relative = 1e-14);
        // tanh ≈ argument in this regime.
        assert_relative_eq!(v, 1.0 / 3.0 * 1.5e-4, max_relative = 1e-7);
    }

    #[test]
    fn prefactor_and_lever_arm_scale_capacitance() {
        let base = params(1.0);
        let scaled = PhysicalParams {
            capacitance_prefactor: 3.0,
            lever_alpha: 0.5,
            ..base
        };
        let t = C64::new(0.4, -0.1);
        let a = parity_capacitance(&base, 0.8, t, Parity::Even).unwrap();
        let b = parity_capacitance(&scaled, 0.8, t, Parity::Even).unwrap();
        assert_relative_eq!(b, 0.75 * a, max_relative = 1e-15);
    }

    #[test]
    fn total_capacitance_examples() {
        let t = C64::new(0.5, 0.5);
        let p0 = params(0.0);
        let total = total_capacitance(&p0, 1.3, t).unwrap();
        assert_eq!(
            total,
            parity_capacitance(&p0, 1.3, t, Parity::Even).unwrap()
        );

        // Cold limit with E₊ ≪ E₋ leaves only C_Q(+1).
        let cold = PhysicalParams {
            k_b_t: 1e-3,
            ..params(-3.0)
        };
        let total = total_capacitance(&cold, 3.0, C64::from(0.0)).unwrap();
        // E₊ = |−3 + 3| = 0, so C_Q(+1) = 0 and P₋ underflows.
        assert_eq!(
            total,
            parity_capacitance(&cold, 3.0, C64::from(0.0), Parity::Even).unwrap()
        );

        let p = params(1.7);
        let e_plus = parity_energy(1.7, 0.6, t, Parity::Even).value;
        let e_minus = parity_energy(1.7, 0.6, t, Parity::Odd).value;
        let zp = (-e_plus / p.k_b_t).exp();
        let zm = (-e_minus / p.k_b_t).exp();
        let cp = {
            let x = 1.7 + 0.6;
            x * x / e_plus.powi(3) * (e_plus / (2.0 * p.k_b_t)).tanh()
        };
        let cm = {
            let x = 1.7 - 0.6;
            x * x / e_minus.powi(3) * (e_minus / (2.0 * p.k_b_t)).tanh()
        };
        let expected = (zp * cp + zm * cm) / (zp + zm);
        assert_relative_eq!(
            total_capacitance(&p, 0.6, t).unwrap(),
            expected,
            max_relative = 1e-13
        );
    }

    #[test]
    fn delta_capacitance_examples() {
        let t = C64::new(0.2, 0.9);
        assert_eq!(delta_capacitance(&params(0.0), 2.0, t).unwrap(), 0.0);
        let no_shift = PhysicalParams {
            delta_e_d: 0.0,
            ..params(2.0)
        };
        assert_eq!(delta_capacitance(&no_shift, 2.0, t).unwrap(), 0.0);

        let p = params(2.0);
        let cp = parity_capacitance(&p, 1.1, t, Parity::Even).unwrap();
        let cm = parity_capacitance(&p, 1.1, t, Parity::Odd).unwrap();
        let ep = parity_energy(2.0, 1.1, t, Parity::Even).value;
        let em = parity_energy(2.0, 1.1, t, Parity::Odd).value;
        let a = (ep / (2.0 * p.k_b_t)).cosh().powi(2);
        let b = (em / (2.0 * p.k_b_t)).cosh().powi(2);
        let dp = a * b / ((a + b) * (a + b));
        let expected = -(cp - cm) * p.delta_e_d * 4.0 / p.k_b_t * dp;
        assert_relative_eq!(
            delta_capacitance(&p, 1.1, t).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn default_detuning_shift_is_one_percent() {
        let p = PhysicalParams::default();
        assert_eq!(p.delta_e_d, 0.01 * p.e_m0);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let p = PhysicalParams::default();
        let t = Topology::new(TopologyKind::Loop);
        let bad = [
            FluxGrid {
                span: 10.0,
                samples: 1,
            },
            FluxGrid {
                span: 0.0,
                samples: 8,
            },
            FluxGrid {
                span: f64::NAN,
                samples: 8,
            },
        ];
        for grid in bad {
            assert!(matches!(
                sweep_flux(&p, &t, ParityMode::Even, grid, NoiseSpec::NONE),
                Err(Error::InvalidArgument(_))
            ));
        }
        let grid = FluxGrid::default();
        assert!(sweep_flux(&p, &t, ParityMode::Even, grid, NoiseSpec::seeded(-1.0, 0)).is_err());
    }

    #[test]
    fn loop_sweep_is_periodic_in_one_flux_quantum() {
        let p = params(0.0);
        let grid = FluxGrid {
            span: 4.0,
            samples: 256,
        };
        let s = sweep_flux(
            &p,
            &Topology::new(TopologyKind::Loop),
            ParityMode::Even,
            grid,
            NoiseSpec::NONE,
        )
        .unwrap();
        let per_quantum = 64;
        for i in 0..(s.len() - per_quantum) {
            assert_abs_diff_eq!(
                s.cq_values[i],
                s.cq_values[i + per_quantum],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let p = params(2.0);
        let t = Topology::new(TopologyKind::Trefoil);
        let grid = FluxGrid {
            span: 10.0,
            samples: 512,
        };
        let a = sweep_flux(&p, &t, ParityMode::Odd, grid, NoiseSpec::seeded(0.01, 42)).unwrap();
        let b = sweep_flux(&p, &t, ParityMode::Odd, grid, NoiseSpec::seeded(0.01, 42)).unwrap();
        let c = sweep_flux(&p, &t, ParityMode::Odd, grid, NoiseSpec::seeded(0.01, 43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.cq_values, c.cq_values);
        assert_eq!(a.rng_seed, Some(42));
    }

    #[test]
    fn noise_preserves_mean() {
        let p = params(2.0);
        let t = Topology::new(TopologyKind::Moebius);
        let grid = FluxGrid {
            span: 10.0,
            samples: 131_072,
        };
        let sigma = 0.05;
        let clean = sweep_flux(&p, &t, ParityMode::Even, grid, NoiseSpec::NONE).unwrap();
        let noisy =
            sweep_flux(&p, &t, ParityMode::Even, grid, NoiseSpec::seeded(sigma, 7)).unwrap();
        let n = clean.len() as f64;
        let mean: f64 = noisy
            .cq_values
            .iter()
            .zip(&clean.cq_values)
            .map(|(a, b)| a - b)
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 5.0 * sigma / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn sweep_modes_match_pointwise_evaluation() {
        let p = params(2.0);
        let t = Topology::new(TopologyKind::Moebius);
        let grid = FluxGrid {
            span: 1.0,
            samples: 16,
        };
        for mode in [
            ParityMode::Even,
            ParityMode::Odd,
            ParityMode::Thermal,
            ParityMode::Delta,
        ] {
            let s = sweep_flux(&p, &t, mode, grid, NoiseSpec::NONE).unwrap();
            for (&flux, &v) in s.flux_values.iter().zip(&s.cq_values) {
                assert_eq!(v, capacitance_at(&p, &t, mode, flux).unwrap());
            }
        }
    }

    #[test]
    fn signal_validation() {
        let mut s = FluxSignal {
            flux_values: vec![0.0, 0.1, 0.2, 0.35],
            cq_values: vec![1.0; 4],
            parity_mode: ParityMode::Even,
            noise_sigma: 0.0,
            rng_seed: None,
        };
        assert!(matches!(s.validate(), Err(Error::InvalidSignal(_))));
        s.flux_values = vec![0.0, 0.1, 0.2, 0.3];
        assert!(s.validate().is_ok());
        s.cq_values.pop();
        assert!(s.validate().is_err());
    }

    #[test]
    fn parity_mode_labels_round_trip() {
        for m in [
            ParityMode::Even,
            ParityMode::Odd,
            ParityMode::Thermal,
            ParityMode::Delta,
        ] {
            assert_eq!(m.label().parse::<ParityMode>().unwrap(), m);
        }
        assert!("2".parse::<ParityMode>().is_err());
    }

    /// Second-order Taylor estimate of the relative variation of `C_Q(Z)`
    /// under a hybridization swing of `±e_m0`, via the curvature of `ln C`.
    fn perturbative_relative_variation(p: &PhysicalParams, t_eff: C64, z: Parity) -> f64 {
        let c = |e_m: f64| parity_capacitance(p, e_m, t_eff, z).unwrap().ln();
        let h = 1e-4 * p.e_m0.max(1e-6);
        let g1 = (c(h) - c(-h)) / (2.0 * h);
        let g2 = (c(h) - 2.0 * c(0.0) + c(-h)) / (h * h);
        2.0 * g1.abs() * p.e_m0 + g2.abs() * p.e_m0 * p.e_m0
    }

    proptest! {
        #[test]
        fn probabilities_normalised(e_plus in 0.0..50.0f64, e_minus in 0.0..50.0f64, kt in 0.01..20.0f64) {
            let (a, b) = parity_probabilities(e_plus, e_minus, kt).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        }

        #[test]
        fn delta_p_in_range(e_plus in 0.0..50.0f64, e_minus in 0.0..50.0f64, kt in 0.1..20.0f64) {
            let v = delta_p(e_plus, e_minus, kt).unwrap();
            prop_assert!(v > 0.0 && v <= 0.25);
        }

        #[test]
        fn zero_detuning_is_parity_independent(e_m in -20.0..20.0f64, tr in -5.0..5.0f64, ti in -5.0..5.0f64) {
            let p = params(0.0);
            let t = C64::new(tr, ti);
            prop_assert_eq!(
                parity_capacitance(&p, e_m, t, Parity::Even).unwrap(),
                parity_capacitance(&p, e_m, t, Parity::Odd).unwrap()
            );
        }

        #[test]
        fn large_detuning_flattens_signal(ratio in 10.0..40.0f64, e_m0 in 0.1..1.0f64, t in 0.05..1.0f64) {
            let p = PhysicalParams {
                e_d: ratio * e_m0.max(t),
                e_m0,
                t_l: C64::from(t / 2.0),
                t_r: C64::from(t / 2.0),
                ..PhysicalParams::default()
            };
            let grid = FluxGrid { span: 1.0, samples: 512 };
            let s = sweep_flux(&p, &Topology::new(TopologyKind::Loop), ParityMode::Odd, grid, NoiseSpec::NONE).unwrap();
            let (lo, hi) = s.cq_values.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let mean = s.cq_values.iter().sum::<f64>() / s.len() as f64;
            let measured = (hi - lo) / mean;
            let estimate = perturbative_relative_variation(&p, C64::from(t), Parity::Odd);
            prop_assert!(measured <= 1.05 * estimate, "measured {measured} estimate {estimate}");
        }
    }
}

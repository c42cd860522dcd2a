// SPDX-License-Identifier: Apache-2.0

//! Parity-resolved effective Hamiltonian of the Majorana/quantum-dot system.
//!
//! The bare three-mode model (Majorana pair `c`, dot levels `f` and `d`) is
//! kept as data in [`BareParams`]. Downstream code works with the
//! parity-resolved 2x2 blocks obtained after eliminating the high-energy
//! sector, whose parameters live in [`ParityBlockParams`].

use nalgebra::{Complex, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub type C64 = Complex<f64>;

/// Fermion parity eigenvalue, `+1` (even) or `-1` (odd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub const BOTH: [Parity; 2] = [Parity::Even, Parity::Odd];

    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }
}

impl TryFrom<i32> for Parity {
    type Error = Error;

    fn try_from(value: i32) -> Result<Self> {
        match value {
            1 => Ok(Parity::Even),
            -1 => Ok(Parity::Odd),
            other => Err(Error::InvalidParity(other)),
        }
    }
}

impl From<Parity> for i32 {
    fn from(p: Parity) -> i32 {
        p.as_i32()
    }
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Parity::Even => "+1",
            Parity::Odd => "-1",
        })
    }
}

/// Parameters of the bare nanowire model: Majorana hybridization `e_m`,
/// dot splittings `delta_1`/`delta_2` and hoppings `t_m1`, `t_12`.
///
/// None of these feed the pipeline directly; the effective blocks below are
/// parameterised independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BareParams {
    pub e_m: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub t_m1: C64,
    pub t_12: C64,
}

impl BareParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("e_m", self.e_m)?;
        ensure_finite("delta_1", self.delta_1)?;
        ensure_finite("delta_2", self.delta_2)?;
        ensure_finite("|t_m1|", self.t_m1.norm())?;
        ensure_finite("|t_12|", self.t_12.norm())?;
        Ok(())
    }
}

/// Inputs of the parity-resolved blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityBlockParams {
    /// Phase-dressed hybridization energy.
    pub e_m1: f64,
    pub t_l1: C64,
    pub t_r1: C64,
    /// Dot detuning.
    pub e_d: f64,
    pub delta_e_d: f64,
    pub parity: Parity,
}

impl ParityBlockParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("e_m1", self.e_m1)?;
        ensure_finite("e_d", self.e_d)?;
        ensure_finite("delta_e_d", self.delta_e_d)?;
        for (name, t) in [("t_l1", self.t_l1), ("t_r1", self.t_r1)] {
            ensure_finite(name, t.re)?;
            ensure_finite(name, t.im)?;
        }
        Ok(())
    }
}

pub fn build_even_block(p: &ParityBlockParams) -> Result<Matrix2<C64>> {
    p.validate()?;
    let s = p.parity.sign();
    let off = p.t_l1 + p.t_r1 * s;
    Ok(Matrix2::new(
        C64::from(-p.e_m1 * s - p.delta_e_d),
        off,
        off.conj(),
        C64::from(p.e_d + p.e_m1 * s - p.delta_e_d),
    ))
}

pub fn build_odd_block(p: &ParityBlockParams) -> Result<Matrix2<C64>> {
    p.validate()?;
    let s = p.parity.sign();
    let off = p.t_l1 - p.t_r1 * s;
    Ok(Matrix2::new(
        C64::from(p.e_m1 * s + p.delta_e_d),
        off,
        off.conj(),
        C64::from(p.e_d - p.e_m1 * s + p.delta_e_d),
    ))
}

/// Block-diagonal direct sum `H_even ⊕ H_odd`.
pub fn build_full_hamiltonian(p: &ParityBlockParams) -> Result<Matrix4<C64>> {
    let even = build_even_block(p)?;
    let odd = build_odd_block(p)?;
    let mut full = Matrix4::zeros();
    full.fixed_view_mut::<2, 2>(0, 0).copy_from(&even);
    full.fixed_view_mut::<2, 2>(2, 2).copy_from(&odd);
    Ok(full)
}

/// Closed-form eigenvalues `(lower, upper)` of a 2x2 Hermitian matrix.
pub fn hermitian_2x2_eigenvalues(m: &Matrix2<C64>) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let mean = 0.5 * (a + d);
    let half_gap = (0.25 * (a - d) * (a - d) + m[(0, 1)].norm_sqr()).sqrt();
    (mean - half_gap, mean + half_gap)
}

/// Ascending eigenvalues of the 4x4 Hamiltonian, taken block by block.
pub fn full_spectrum(p: &ParityBlockParams) -> Result<[f64; 4]> {
    let (e0, e1) = hermitian_2x2_eigenvalues(&build_even_block(p)?);
    let (o0, o1) = hermitian_2x2_eigenvalues(&build_odd_block(p)?);
    let mut all = [e0, e1, o0, o1];
    all.sort_by(f64::total_cmp);
    Ok(all)
}

/// Level splitting of one block, obtained by diagonalisation.
///
/// With `δE_D = 0` the even-block gap is `sqrt((E_D + 2 E_M1 P)² + 4|t|²)`,
/// which differs from [`parity_energy`] by the factor 2 on `E_M1`. Both are
/// exposed; the pipeline uses [`parity_energy`].
pub fn block_gap(p: &ParityBlockParams, block: Parity) -> Result<f64> {
    let m = match block {
        Parity::Even => build_even_block(p)?,
        Parity::Odd => build_odd_block(p)?,
    };
    let (lo, hi) = hermitian_2x2_eigenvalues(&m);
    Ok(hi - lo)
}

/// Parity-resolved energy `E(z)`; always non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParityEnergy {
    pub z: Parity,
    pub value: f64,
}

/// `sqrt((e_d + z e_m)² + 4|t_eff|²)`. The parity enters at first power.
pub fn parity_energy(e_d: f64, e_m: f64, t_eff: C64, z: Parity) -> ParityEnergy {
    let detuning = e_d + z.sign() * e_m;
    ParityEnergy {
        z,
        value: detuning.hypot(2.0 * t_eff.norm()),
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Quantum-capacitance readout simulation for Majorana/quantum-dot qubits.
//!
//! The crate is organised as a straight pipeline:
//!
//! * [`model`]: parity-resolved 2x2 blocks, the 4x4 direct sum and the
//!   closed-form parity energy.
//! * [`phases`]: effective Peierls phase per band topology and the
//!   phase-dressed hybridization and hoppings.
//! * [`capacitance`]: parity capacitance, Boltzmann weights and flux sweeps.
//! * [`spectral`]: mean removal, Hann window, one-sided power spectrum.
//! * [`fitting`]: Lorentzian least-squares fit, SNR and coherence time.
//! * [`harness`]: sweep configuration, persistence and table emission.
//!
//! Energies are in µeV throughout. Flux is the dimensionless ratio Φ/Φ₀ and
//! spectral frequencies are cycles per flux quantum (reported as Hz).

pub mod capacitance;
pub mod error;
pub mod fitting;
pub mod harness;
pub mod model;
pub mod phases;
pub mod spectral;

pub use capacitance::{FluxSignal, ParityMode, PhysicalParams};
pub use error::{Error, Result};
pub use fitting::{LorentzianFit, Snr};
pub use phases::{PhaseBreakdown, Topology, TopologyKind};
pub use spectral::PowerSpectrum;

// SPDX-License-Identifier: Apache-2.0

//! Effective Peierls phase of each band topology and the phase dressing of
//! hybridization energy and hopping amplitudes.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TopologyKind {
    Loop,
    Moebius,
    Trefoil,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 3] = [
        TopologyKind::Loop,
        TopologyKind::Moebius,
        TopologyKind::Trefoil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Loop => "Loop",
            TopologyKind::Moebius => "Moebius",
            TopologyKind::Trefoil => "Trefoil",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "loop" => Ok(TopologyKind::Loop),
            "moebius" | "mobius" | "möbius" => Ok(TopologyKind::Moebius),
            "trefoil" => Ok(TopologyKind::Trefoil),
            other => Err(Error::InvalidArgument(format!(
                "unknown topology `{other}`"
            ))),
        }
    }
}

/// A band topology together with its winding number `w` and invariant `ν`.
///
/// The `(w, ν)` pairs are fixed per kind; construct through [`Topology::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Topology {
    kind: TopologyKind,
    winding: i32,
    invariant: i32,
}

impl Topology {
    pub const fn new(kind: TopologyKind) -> Self {
        let (winding, invariant) = match kind {
            TopologyKind::Loop => (1, 0),
            TopologyKind::Moebius => (1, 1),
            TopologyKind::Trefoil => (2, 2),
        };
        Topology {
            kind,
            winding,
            invariant,
        }
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn winding(&self) -> i32 {
        self.winding
    }

    pub fn invariant(&self) -> i32 {
        self.invariant
    }

    /// Coefficient `c` in `θ = 2π c Φ/Φ₀ + offset`.
    pub fn flux_coefficient(&self) -> i32 {
        match self.kind {
            TopologyKind::Loop => 1,
            TopologyKind::Moebius => 2,
            TopologyKind::Trefoil => 3,
        }
    }

    /// Flux-independent part of the effective phase.
    pub fn phase_offset(&self) -> f64 {
        match self.kind {
            TopologyKind::Loop => 0.0,
            TopologyKind::Moebius => TAU,
            TopologyKind::Trefoil => 2.0 * TAU,
        }
    }
}

impl From<TopologyKind> for Topology {
    fn from(kind: TopologyKind) -> Self {
        Topology::new(kind)
    }
}

/// Which route produced [`PhaseBreakdown::theta_total`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhasePath {
    /// Per-topology closed law (the canonical route).
    TopologyLaw,
    /// Sum of Aharonov-Bohm, Zak and torsion components.
    ComponentSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseBreakdown {
    pub theta_ab: f64,
    pub gamma_zak: f64,
    pub gamma_topo: f64,
    pub theta_total: f64,
    pub path: PhasePath,
}

pub fn ab_phase(winding: i32, flux: f64) -> f64 {
    TAU * f64::from(winding) * flux
}

pub fn zak_phase(invariant: i32) -> f64 {
    PI * f64::from(invariant)
}

pub fn torsion_phase(winding: i32) -> f64 {
    PI * f64::from(winding)
}

/// Effective Peierls phase: `2πΦ` (loop), `4πΦ + 2π` (Möbius),
/// `6πΦ + 4π` (trefoil), with `Φ` in flux quanta.
///
/// The component phases are filled in for inspection only; they do not sum
/// to `theta_total` for the Möbius and trefoil geometries.
pub fn effective_phase(topology: &Topology, flux: f64) -> PhaseBreakdown {
    let theta_total = TAU * f64::from(topology.flux_coefficient()) * flux + topology.phase_offset();
    PhaseBreakdown {
        theta_total,
        path: PhasePath::TopologyLaw,
        ..components(topology, flux)
    }
}

/// `θ_AB + γ_Zak + γ_topo` from the topology's `(w, ν)`.
pub fn composed_phase(topology: &Topology, flux: f64) -> PhaseBreakdown {
    let parts = components(topology, flux);
    PhaseBreakdown {
        theta_total: parts.theta_ab + parts.gamma_zak + parts.gamma_topo,
        ..parts
    }
}

fn components(topology: &Topology, flux: f64) -> PhaseBreakdown {
    PhaseBreakdown {
        theta_ab: ab_phase(topology.winding(), flux),
        gamma_zak: zak_phase(topology.invariant()),
        gamma_topo: torsion_phase(topology.winding()),
        theta_total: f64::NAN,
        path: PhasePath::ComponentSum,
    }
}

/// Peierls substitution `t0 · e^{iθ}`.
pub fn dressed_hopping(t0: C64, theta: f64) -> C64 {
    t0 * C64::from_polar(1.0, theta)
}

/// Real part of the dressed amplitude: `E_M0 cos θ`.
pub fn hybridization_energy(e_m0: f64, theta: f64) -> f64 {
    e_m0 * theta.cos()
}

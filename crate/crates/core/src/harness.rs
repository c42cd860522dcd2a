// SPDX-License-Identifier: Apache-2.0

//! Sweep configuration, orchestration and flat-file persistence.
//!
//! A sweep evaluates every `(detuning, topology, parity)` grid point through
//! flux sweep → mean removal → Hann-windowed power spectrum → Lorentzian fit
//! and writes:
//!
//! * `signals/<tag>.tsv` and `spectra/<tag>.tsv`: two-column series with
//!   `#`-prefixed metadata headers,
//! * `fits/<tag>.json`: the fitted row of that point,
//! * `table.csv` plus its machine-readable twin `table.json`,
//! * `plots/<tag>_{signal,spectrum}.svg` when plot rendering is enabled.
//!
//! Output depends only on the configuration (seed included); grid points may
//! be computed in parallel but are always written in table order.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacitance::{
    sweep_flux, FluxGrid, FluxSignal, NoiseSpec, ParityMode, PhysicalParams, NOISE_INJECTION_DOMAIN,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_lorentzian, LorentzianFit};
use crate::model::C64;
use crate::phases::{Topology, TopologyKind};
use crate::spectral::{analyze, hann_window, PowerSpectrum};

pub const SCHEMA_VERSION: u32 = 1;

/// Target white-noise SNR of the `auto` noise level.
pub const AUTO_NOISE_SNR: f64 = 11.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Sigma(f64),
    Auto,
}

impl std::str::FromStr for NoiseLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("auto") {
            return Ok(NoiseLevel::Auto);
        }
        s.trim().parse().map(NoiseLevel::Sigma).map_err(|_| {
            Error::InvalidConfig(format!("noise level `{s}` is neither a number nor `auto`"))
        })
    }
}

impl Serialize for NoiseLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NoiseLevel::Sigma(v) => s.serialize_f64(*v),
            NoiseLevel::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for NoiseLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(NoiseLevel::Sigma(v)),
            Repr::Int(v) => Ok(NoiseLevel::Sigma(v as f64)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub const UNIT_CONVENTION: &str =
    "energies in ueV; flux in flux quanta; frequency in cycles per flux quantum (1 quantum = 1 s, reported as Hz); capacitance in units of prefactor*alpha^2/ueV";

pub const GAMMA_CONVENTION: &str =
    "gamma is the fitted Lorentzian width parameter, used directly as the FWHM in tau = 1/(pi*gamma); reading it as the half width would give tau = 1/(2*pi*gamma)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Signals,
    Spectra,
    Fits,
    Table,
    Plots,
}

impl std::str::FromStr for Emit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "signals" => Ok(Emit::Signals),
            "spectra" => Ok(Emit::Spectra),
            "fits" => Ok(Emit::Fits),
            "table" => Ok(Emit::Table),
            "plots" => Ok(Emit::Plots),
            other => Err(Error::InvalidConfig(format!(
                "unknown emit target `{other}`"
            ))),
        }
    }
}

/// Full parameter set of a sweep, stored as one flat TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub topologies: Vec<TopologyKind>,
    /// Dot detunings `E₀` in µeV.
    pub detunings: Vec<f64>,
    pub parities: Vec<ParityMode>,

    pub e_m0: f64,
    pub t_l_re: f64,
    pub t_l_im: f64,
    pub t_r_re: f64,
    pub t_r_im: f64,
    /// Falls back to 1% of `e_m0` when absent.
    pub delta_e_d: Option<f64>,
    pub lever_alpha: f64,
    pub k_b_t: f64,
    pub capacitance_prefactor: f64,

    pub flux_span: f64,
    pub n_samples: usize,
    /// Flux-domain noise standard deviation, in capacitance units, or
    /// `"auto"` to calibrate against [`AUTO_NOISE_SNR`].
    pub noise_sigma: NoiseLevel,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    pub emit: BTreeSet<Emit>,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let physical = PhysicalParams::default();
        let grid = FluxGrid::default();
        SweepConfig {
            schema_version: SCHEMA_VERSION,
            topologies: TopologyKind::ALL.to_vec(),
            detunings: vec![0.0, 2.0, 10.0],
            parities: vec![ParityMode::Even, ParityMode::Odd],
            e_m0: physical.e_m0,
            t_l_re: physical.t_l.re,
            t_l_im: physical.t_l.im,
            t_r_re: physical.t_r.re,
            t_r_im: physical.t_r.im,
            delta_e_d: None,
            lever_alpha: physical.lever_alpha,
            k_b_t: physical.k_b_t,
            capacitance_prefactor: physical.capacitance_prefactor,
            flux_span: grid.span,
            n_samples: grid.samples,
            noise_sigma: NoiseLevel::Auto,
            rng_seed: 20_251_014,
            output_dir: PathBuf::from("out"),
            emit: [Emit::Signals, Emit::Spectra, Emit::Fits, Emit::Table]
                .into_iter()
                .collect(),
            workers: 0,
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.topologies.is_empty() {
            return bad("topologies must not be empty".into());
        }
        if self.detunings.is_empty() {
            return bad("detunings must not be empty".into());
        }
        if self.parities.is_empty() {
            return bad("parities must not be empty".into());
        }
        if let Some(e) = self.detunings.iter().find(|e| !e.is_finite()) {
            return bad(format!("detuning {e} is not finite"));
        }
        if !self.n_samples.is_power_of_two() || self.n_samples < 16 {
            return bad(format!(
                "n_samples must be a power of two >= 16, got {}",
                self.n_samples
            ));
        }
        if let NoiseLevel::Sigma(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("noise_sigma must be non-negative, got {s}"));
            }
        }
        self.grid()
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.physical(0.0)
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> FluxGrid {
        FluxGrid {
            span: self.flux_span,
            samples: self.n_samples,
        }
    }

    pub fn physical(&self, e_d: f64) -> PhysicalParams {
        PhysicalParams {
            e_d,
            e_m0: self.e_m0,
            t_l: C64::new(self.t_l_re, self.t_l_im),
            t_r: C64::new(self.t_r_re, self.t_r_im),
            delta_e_d: self
                .delta_e_d
                .unwrap_or(crate::capacitance::DEFAULT_DELTA_E_D_RATIO * self.e_m0),
            lever_alpha: self.lever_alpha,
            k_b_t: self.k_b_t,
            capacitance_prefactor: self.capacitance_prefactor,
        }
    }

    /// Grid points in table order: detuning ascending, then topology, then
    /// parity. Duplicates are dropped.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut detunings = self.detunings.clone();
        detunings.sort_by(f64::total_cmp);
        detunings.dedup();
        let topologies: BTreeSet<_> = self.topologies.iter().copied().collect();
        let parities: BTreeSet<_> = self.parities.iter().copied().collect();
        let mut out = Vec::new();
        for &e0 in &detunings {
            for &topology in &topologies {
                for &parity in &parities {
                    out.push(GridPoint {
                        e0,
                        topology,
                        parity,
                    });
                }
            }
        }
        out
    }

    /// Flux-domain σ for this run.
    ///
    /// `Auto` picks σ so that white noise alone yields `SNR = AUTO_NOISE_SNR`
    /// for the noiseless fitted amplitude of the reference point (E₀ = 0,
    /// loop, Z = +1). Windowed white noise gives exponentially distributed
    /// bins with mean and standard deviation `2σ²Σw²/N²`.
    pub fn resolve_noise(&self) -> Result<f64> {
        match self.noise_sigma {
            NoiseLevel::Sigma(s) => Ok(s),
            NoiseLevel::Auto => {
                let signal = sweep_flux(
                    &self.physical(0.0),
                    &Topology::new(TopologyKind::Loop),
                    ParityMode::Even,
                    self.grid(),
                    NoiseSpec::NONE,
                )?;
                let a_ref = fit_lorentzian(&analyze(&signal)?)?.amplitude_a;
                let n = self.n_samples as f64;
                let w2: f64 = hann_window(self.n_samples)?.iter().map(|w| w * w).sum();
                Ok((a_ref * n * n / (AUTO_NOISE_SNR * 2.0 * w2)).sqrt())
            }
        }
    }

    pub fn metadata(&self, noise_sigma: f64) -> RunMetadata {
        let p = self.physical(0.0);
        RunMetadata {
            schema_version: SCHEMA_VERSION,
            units: UNIT_CONVENTION.into(),
            n_samples: self.n_samples,
            flux_span: self.flux_span,
            noise_sigma,
            noise_calibration: match self.noise_sigma {
                NoiseLevel::Sigma(_) => "fixed".into(),
                NoiseLevel::Auto => {
                    format!("auto, white-noise SNR {AUTO_NOISE_SNR} at E0=0 Loop +1")
                }
            },
            noise_domain: NOISE_INJECTION_DOMAIN.into(),
            rng_seed: self.rng_seed,
            e_m0: p.e_m0,
            t_l: format!("{}{:+}i", p.t_l.re, p.t_l.im),
            t_r: format!("{}{:+}i", p.t_r.re, p.t_r.im),
            delta_e_d: p.delta_e_d,
            lever_alpha: p.lever_alpha,
            k_b_t: p.k_b_t,
            capacitance_prefactor: p.capacitance_prefactor,
            gamma_convention: GAMMA_CONVENTION.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub e0: f64,
    pub topology: TopologyKind,
    pub parity: ParityMode,
}

impl GridPoint {
    /// File stem, e.g. `e0_2_Moebius_m1`.
    pub fn tag(&self) -> String {
        let parity = match self.parity {
            ParityMode::Even => "p1",
            ParityMode::Odd => "m1",
            ParityMode::Thermal => "total",
            ParityMode::Delta => "delta",
        };
        format!("e0_{}_{}_{}", self.e0, self.topology, parity)
    }
}

/// Settings echoed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub units: String,
    pub n_samples: usize,
    pub flux_span: f64,
    pub noise_sigma: f64,
    pub noise_calibration: String,
    pub noise_domain: String,
    pub rng_seed: u64,
    pub e_m0: f64,
    pub t_l: String,
    pub t_r: String,
    pub delta_e_d: f64,
    pub lever_alpha: f64,
    pub k_b_t: f64,
    pub capacitance_prefactor: f64,
    pub gamma_convention: String,
}

impl RunMetadata {
    fn header_lines(&self) -> Vec<(String, String)> {
        let value = serde_json::to_value(self).expect("metadata serialises");
        let serde_json::Value::Object(map) = value else {
            unreachable!("metadata is a struct")
        };
        // Field order, not map order.
        let order = [
            "schema_version",
            "units",
            "n_samples",
            "flux_span",
            "noise_sigma",
            "noise_calibration",
            "noise_domain",
            "rng_seed",
            "e_m0",
            "t_l",
            "t_r",
            "delta_e_d",
            "lever_alpha",
            "k_b_t",
            "capacitance_prefactor",
            "gamma_convention",
        ];
        order
            .iter()
            .map(|&k| {
                let v = match &map[k] {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.to_string(), v)
            })
            .collect()
    }
}

/// One line of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "e0_ueV")]
    pub e0: f64,
    pub topology: TopologyKind,
    pub parity: ParityMode,
    #[serde(rename = "A", with = "float_repr")]
    pub a: f64,
    #[serde(rename = "gamma_hz", with = "float_repr")]
    pub gamma: f64,
    #[serde(rename = "f0_hz", with = "float_repr")]
    pub f0: f64,
    #[serde(with = "float_repr")]
    pub baseline: f64,
    #[serde(with = "float_repr")]
    pub snr: f64,
    #[serde(rename = "tau_s", with = "float_repr")]
    pub tau: f64,
    pub converged: bool,
}

pub const TABLE_COLUMNS: [&str; 10] = [
    "e0_ueV",
    "topology",
    "parity",
    "A",
    "gamma_hz",
    "f0_hz",
    "baseline",
    "snr",
    "tau_s",
    "converged",
];

impl ResultRow {
    pub fn from_fit(point: &GridPoint, fit: &LorentzianFit) -> Self {
        ResultRow {
            e0: point.e0,
            topology: point.topology,
            parity: point.parity,
            a: fit.amplitude_a,
            gamma: fit.gamma,
            f0: fit.f0,
            baseline: fit.baseline_b,
            snr: fit.snr,
            tau: fit.tau,
            converged: fit.converged,
        }
    }

    /// Row for a point whose fit could not be attempted.
    pub fn failed(point: &GridPoint) -> Self {
        ResultRow {
            e0: point.e0,
            topology: point.topology,
            parity: point.parity,
            a: f64::NAN,
            gamma: f64::NAN,
            f0: f64::NAN,
            baseline: f64::NAN,
            snr: f64::NAN,
            tau: f64::NAN,
            converged: false,
        }
    }

    fn sort_key(&self) -> (f64, TopologyKind, ParityMode) {
        (self.e0, self.topology, self.parity)
    }
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        let (ea, ta, pa) = a.sort_key();
        let (eb, tb, pb) = b.sort_key();
        ea.total_cmp(&eb).then(ta.cmp(&tb)).then(pa.cmp(&pb))
    });
}

/// Everything computed for one grid point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: GridPoint,
    pub signal: FluxSignal,
    pub spectrum: PowerSpectrum,
    pub fit: Option<LorentzianFit>,
    pub fit_error: Option<String>,
    pub row: ResultRow,
}

/// Per-point seed, a SplitMix64 step over the run seed and grid index.
pub fn point_seed(run_seed: u64, index: usize) -> u64 {
    let mut z = run_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one grid point with the sweep's settings.
pub fn evaluate_point(
    cfg: &SweepConfig,
    noise_sigma: f64,
    point: &GridPoint,
    index: usize,
) -> Result<PointResult> {
    let noise = NoiseSpec::seeded(noise_sigma, point_seed(cfg.rng_seed, index));
    let signal = sweep_flux(
        &cfg.physical(point.e0),
        &Topology::new(point.topology),
        point.parity,
        cfg.grid(),
        noise,
    )?;
    let spectrum = analyze(&signal)?;
    let (fit, fit_error, row) = match fit_lorentzian(&spectrum) {
        Ok(fit) => (Some(fit), None, ResultRow::from_fit(point, &fit)),
        Err(e) => (None, Some(e.to_string()), ResultRow::failed(point)),
    };
    Ok(PointResult {
        point: *point,
        signal,
        spectrum,
        fit,
        fit_error,
        row,
    })
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<ResultRow>,
    pub noise_sigma: f64,
    pub output_dir: PathBuf,
}

impl SweepReport {
    pub fn nonconverged(&self) -> usize {
        self.rows.iter().filter(|r| !r.converged).count()
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub noise_sigma: f64,
    pub results: Vec<PointResult>,
}

/// Evaluates the whole grid without touching the filesystem.
pub fn compute_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let noise_sigma = cfg.resolve_noise()?;
    let points = cfg.points();
    let work = || -> Result<SweepOutcome> {
        let results = points
            .par_iter()
            .enumerate()
            .map(|(i, p)| evaluate_point(cfg, noise_sigma, p, i))
            .collect::<Result<_>>()?;
        Ok(SweepOutcome {
            noise_sigma,
            results,
        })
    };
    if cfg.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?
            .install(work)
    }
}

/// Evaluates the grid and persists the artifacts selected by `cfg.emit`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    prepare_output_dir(&cfg.output_dir)?;
    let SweepOutcome {
        noise_sigma,
        results,
    } = compute_sweep(cfg)?;
    let meta = cfg.metadata(noise_sigma);
    persist_points(cfg, &meta, &results)?;
    let mut rows: Vec<ResultRow> = results.into_iter().map(|r| r.row).collect();
    sort_rows(&mut rows);
    if cfg.emit.contains(&Emit::Table) {
        emit_table(&rows, &meta, &cfg.output_dir)?;
    }
    Ok(SweepReport {
        rows,
        noise_sigma,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Creates the directory and checks it accepts writes.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
    Ok(())
}

fn persist_points(cfg: &SweepConfig, meta: &RunMetadata, results: &[PointResult]) -> Result<()> {
    let dir = &cfg.output_dir;
    for r in results {
        let tag = r.point.tag();
        let extra = point_header(&r.point);
        if cfg.emit.contains(&Emit::Signals) {
            let series = PlotSeries::from_signal(&r.signal);
            write_file(
                &dir.join("signals").join(format!("{tag}.tsv")),
                &series.to_tsv(meta, &extra),
            )?;
        }
        if cfg.emit.contains(&Emit::Spectra) {
            let series = PlotSeries::from_spectrum(&r.spectrum);
            write_file(
                &dir.join("spectra").join(format!("{tag}.tsv")),
                &series.to_tsv(meta, &extra),
            )?;
        }
        if cfg.emit.contains(&Emit::Fits) {
            let record = FitRecord {
                schema_version: SCHEMA_VERSION,
                metadata: meta.clone(),
                row: r.row.clone(),
                iterations: r.fit.map(|f| f.iterations),
                residual_sigma: r.fit.map(|f| f.residual_sigma),
                error: r.fit_error.clone(),
            };
            let text = serde_json::to_string_pretty(&record).expect("fit record serialises") + "\n";
            write_file(&dir.join("fits").join(format!("{tag}.json")), &text)?;
        }
        if cfg.emit.contains(&Emit::Plots) {
            emit_plot_data(
                &PlotSeries::from_signal(&r.signal),
                meta,
                &extra,
                &dir.join("plots").join(format!("{tag}_signal")),
                true,
            )?;
            emit_plot_data(
                &PlotSeries::from_spectrum(&r.spectrum),
                meta,
                &extra,
                &dir.join("plots").join(format!("{tag}_spectrum")),
                true,
            )?;
        }
    }
    Ok(())
}

fn point_header(point: &GridPoint) -> Vec<(String, String)> {
    vec![
        ("e0_ueV".into(), point.e0.to_string()),
        ("topology".into(), point.topology.to_string()),
        ("parity".into(), point.parity.to_string()),
    ]
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Per-point fit file, re-aggregated by the `table` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub schema_version: u32,
    pub metadata: RunMetadata,
    pub row: ResultRow,
    pub iterations: Option<usize>,
    pub residual_sigma: Option<f64>,
    pub error: Option<String>,
}

/// Reads every `fits/*.json` under `dir`, in table order.
pub fn load_fit_records(dir: &Path) -> Result<Vec<FitRecord>> {
    let fits = dir.join("fits");
    let entries = fs::read_dir(&fits).map_err(|e| Error::io(&fits, e))?;
    let mut records = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&fits, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let record: FitRecord = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        records.push(record);
    }
    records.sort_by(|a, b| {
        let (ea, ta, pa) = a.row.sort_key();
        let (eb, tb, pb) = b.row.sort_key();
        ea.total_cmp(&eb).then(ta.cmp(&tb)).then(pa.cmp(&pb))
    });
    Ok(records)
}

/// Rebuilds `table.csv`/`table.json` from persisted fit files.
pub fn reaggregate(dir: &Path) -> Result<Vec<ResultRow>> {
    let records = load_fit_records(dir)?;
    let Some(first) = records.first() else {
        return Err(Error::InvalidConfig(format!(
            "no fit files under {}",
            dir.join("fits").display()
        )));
    };
    let meta = first.metadata.clone();
    let rows: Vec<ResultRow> = records.into_iter().map(|r| r.row).collect();
    emit_table(&rows, &meta, dir)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub metadata: RunMetadata,
    pub rows: Vec<ResultRow>,
}

/// Delimited table text with a `#` metadata header. Rows are emitted in the
/// order given.
pub fn format_table_csv(rows: &[ResultRow], meta: &RunMetadata) -> String {
    let mut out = String::new();
    for (k, v) in meta.header_lines() {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    writer.write_record(TABLE_COLUMNS).expect("in-memory write");
    for row in rows {
        writer.serialize(row).expect("in-memory write");
    }
    let body = writer.into_inner().expect("in-memory flush");
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    out
}

pub fn parse_table_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?
        .clone();
    if headers.iter().ne(TABLE_COLUMNS) {
        return Err(Error::InvalidConfig(format!(
            "unexpected table columns {headers:?}"
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::InvalidConfig(e.to_string())))
        .collect()
}

/// Writes `table.csv` and `table.json` into `dir`, sorted into table order.
pub fn emit_table(rows: &[ResultRow], meta: &RunMetadata, dir: &Path) -> Result<()> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    write_file(&dir.join("table.csv"), &format_table_csv(&rows, meta))?;
    let doc = TableDocument {
        schema_version: SCHEMA_VERSION,
        columns: TABLE_COLUMNS.iter().map(|c| c.to_string()).collect(),
        metadata: meta.clone(),
        rows,
    };
    write_file(
        &dir.join("table.json"),
        &(serde_json::to_string_pretty(&doc).expect("table serialises") + "\n"),
    )
}

/// A two-column series destined for a figure.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PlotSeries {
    pub fn from_signal(signal: &FluxSignal) -> Self {
        PlotSeries {
            x_label: "flux_phi0",
            y_label: "cq",
            x: signal.flux_values.clone(),
            y: signal.cq_values.clone(),
        }
    }

    pub fn from_spectrum(spec: &PowerSpectrum) -> Self {
        PlotSeries {
            x_label: "frequency_hz",
            y_label: "power",
            x: spec.frequencies.clone(),
            y: spec.power.clone(),
        }
    }

    pub fn to_tsv(&self, meta: &RunMetadata, extra: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in meta.header_lines().iter().chain(extra) {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}\t{}", self.x_label, self.y_label);
        for (x, y) in self.x.iter().zip(&self.y) {
            let _ = writeln!(out, "{x}\t{y}");
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let mut cols = line.split('\t');
            let mut next = || -> Result<f64> {
                cols.next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("malformed series line `{line}`")))
            };
            xs.push(next()?);
            ys.push(next()?);
        }
        Ok((xs, ys))
    }

    /// Polyline SVG; the output is a pure function of the data.
    pub fn to_svg(&self, title: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 360.0;
        const PAD: f64 = 40.0;
        let range = |v: &[f64]| {
            let (lo, hi) = v
                .iter()
                .filter(|x| x.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 0.5, lo + 0.5)
            } else {
                (0.0, 1.0)
            }
        };
        let (x0, x1) = range(&self.x);
        let (y0, y1) = range(&self.y);
        let mut points = String::new();
        for (x, y) in self.x.iter().zip(&self.y) {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let px = PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
            let py = H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
            let _ = write!(points, "{px:.2},{py:.2} ");
        }
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
                "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
                "<text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
                "<rect x=\"{pad}\" y=\"{pad}\" width=\"{iw}\" height=\"{ih}\" fill=\"none\" stroke=\"black\"/>\n",
                "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"{points}\"/>\n",
                "<text x=\"{pad}\" y=\"{xl}\" font-family=\"sans-serif\" font-size=\"11\">{xlabel} [{x0:.4e}, {x1:.4e}]</text>\n",
                "<text x=\"4\" y=\"{pad}\" font-family=\"sans-serif\" font-size=\"11\">{ylabel} [{y0:.4e}, {y1:.4e}]</text>\n",
                "</svg>\n"
            ),
            w = W,
            h = H,
            pad = PAD,
            iw = W - 2.0 * PAD,
            ih = H - 2.0 * PAD,
            xl = H - 12.0,
            title = title,
            points = points.trim_end(),
            xlabel = self.x_label,
            ylabel = self.y_label,
            x0 = x0,
            x1 = x1,
            y0 = y0,
            y1 = y1,
        )
    }
}

/// Writes `<stem>.tsv` and, when `render` is set, `<stem>.svg`.
pub fn emit_plot_data(
    series: &PlotSeries,
    meta: &RunMetadata,
    extra: &[(String, String)],
    stem: &Path,
    render: bool,
) -> Result<()> {
    write_file(&stem.with_extension("tsv"), &series.to_tsv(meta, extra))?;
    if render {
        let title = extra
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        write_file(&stem.with_extension("svg"), &series.to_svg(&title))?;
    }
    Ok(())
}

/// Writes figure data (and SVGs) for each grid point into `<out>/plots`.
pub fn emit_plots(cfg: &SweepConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    prepare_output_dir(&cfg.output_dir)?;
    let SweepOutcome {
        noise_sigma,
        results,
    } = compute_sweep(cfg)?;
    let meta = cfg.metadata(noise_sigma);
    let mut written = Vec::new();
    for r in &results {
        let extra = point_header(&r.point);
        let base = cfg.output_dir.join("plots").join(r.point.tag());
        let signal_stem = PathBuf::from(format!("{}_signal", base.display()));
        let spectrum_stem = PathBuf::from(format!("{}_spectrum", base.display()));
        emit_plot_data(
            &PlotSeries::from_signal(&r.signal),
            &meta,
            &extra,
            &signal_stem,
            true,
        )?;
        emit_plot_data(
            &PlotSeries::from_spectrum(&r.spectrum),
            &meta,
            &extra,
            &spectrum_stem,
            true,
        )?;
        written.push(signal_stem.with_extension("tsv"));
        written.push(spectrum_stem.with_extension("tsv"));
    }
    Ok(written)
}

/// Finite floats as plain numbers; NaN and infinities as strings, so both
/// the CSV and JSON forms round-trip.
mod float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("not a float: `{t}`"))),
        }
    }
}

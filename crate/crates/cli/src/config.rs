//! Experiment configuration documents (TOML).
//!
//! A document names its `experiment` and may set `seed` and `output`; every
//! other key belongs to the experiment's own table of parameters. Energies
//! are in units of `t` (effective model) or `g` (oscillator model), times in
//! the inverse unit.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Grow,
    Gapscan,
    MicroscopicEvolve,
    Snapshot,
    Ramsey,
    RamseyCalibrate,
    ReducedGap,
    Finetune,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Grow => "grow",
            Experiment::Gapscan => "gapscan",
            Experiment::MicroscopicEvolve => "microscopic-evolve",
            Experiment::Snapshot => "snapshot",
            Experiment::Ramsey => "ramsey",
            Experiment::RamseyCalibrate => "ramsey-calibrate",
            Experiment::ReducedGap => "reduced-gap",
            Experiment::Finetune => "finetune",
        }
    }
}

/// Evenly spaced values `min ..= max`.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        Self { min, max, n }
    }

    pub fn values(&self, field: &str) -> Result<Vec<f64>, CliError> {
        if self.n == 0 || !self.min.is_finite() || !self.max.is_finite() {
            return Err(CliError::schema(field, "grid needs finite bounds and n >= 1"));
        }
        Ok(z2lgt::reduced::linspace(self.min, self.max, self.n))
    }
}

fn default_t() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub geometry: String,
    pub t: f64,
    /// Uniform field on every link.
    pub h: f64,
    pub n_levels: usize,
    /// Gauss eigenvalues per super site; the default sector when absent.
    pub gauss: Option<Vec<i8>>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            geometry: "tri1".into(),
            t: 1.0,
            h: 0.0,
            n_levels: 20,
            gauss: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowConfig {
    pub geometry: String,
    pub t: f64,
    /// Initial field; `t` when absent.
    pub h0: Option<f64>,
    /// Length of each ramp segment; `20 / t` when absent.
    pub segment_duration: Option<f64>,
    /// Grow a vison on this plaquette instead of the ground state.
    pub vison_plaquette: Option<usize>,
    pub dt: f64,
    pub samples_per_segment: usize,
    pub convergence: f64,
    pub track_gap: bool,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            geometry: "tri3".into(),
            t: 1.0,
            h0: None,
            segment_duration: None,
            vison_plaquette: None,
            dt: 0.2,
            samples_per_segment: 10,
            convergence: 1e-8,
            track_gap: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapscanConfig {
    pub geometry: String,
    pub t: f64,
    pub h0: Option<f64>,
    /// Growing step (0-based) whose fresh links are scanned.
    pub step: usize,
    pub t_tilde: Grid,
    pub h: Grid,
}

impl Default for GapscanConfig {
    fn default() -> Self {
        Self {
            geometry: "tri2".into(),
            t: 1.0,
            h0: None,
            step: 1,
            t_tilde: Grid::new(0.0, 1.0, 21),
            h: Grid::new(0.0, 1.0, 21),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducedGapConfig {
    #[serde(default = "default_t")]
    pub t: f64,
    pub t_tilde: Grid,
    pub h: Grid,
    /// Also diagonalize the two-plaquette model and report it.
    pub compare_full: bool,
}

impl Default for ReducedGapConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            t_tilde: Grid::new(0.0, 1.0, 21),
            h: Grid::new(0.0, 1.0, 21),
            compare_full: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutName {
    SingleBlock,
    MergedChain,
    DoubleLink,
    FullTriangle,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicroscopicConfig {
    pub layout: LayoutName,
    /// Coupler detuning per link.
    pub delta: Vec<f64>,
    /// Coupler anharmonicity per link; fine-tuned when `t_eff` is set.
    pub beta: Vec<f64>,
    /// Matter-coupler tunneling per link; with `t_eff` only the first is used.
    pub g: Vec<f64>,
    /// Coupler exchange (electric field) per link.
    pub h: Vec<f64>,
    /// Fine-tune the full triangle to this hopping.
    pub t_eff: Option<f64>,
    /// Matter offset of the second bond of a double link.
    pub delta_tilde: Option<f64>,
    pub d_max: u8,
    pub t_final: f64,
    pub n_steps: usize,
    pub initial_site: usize,
    /// Initial `tau^x` per link, all `+1` when absent.
    pub tau_x: Option<Vec<i8>>,
}

impl Default for MicroscopicConfig {
    fn default() -> Self {
        Self {
            layout: LayoutName::FullTriangle,
            delta: vec![200.0, 201.0, 202.0],
            beta: vec![],
            g: vec![1.0],
            h: vec![],
            t_eff: Some(0.02),
            delta_tilde: None,
            d_max: 3,
            t_final: 1000.0,
            n_steps: 1000,
            initial_site: 0,
            tau_x: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub t_eff: f64,
    pub delta: [f64; 3],
    pub g: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            t_eff: 0.02,
            delta: [200.0, 201.0, 202.0],
            g: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureBasis {
    TauX,
    TauZ,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotConfig {
    pub geometry: String,
    /// `B_P` of the sampled toric-code eigenstate, one entry per plaquette.
    pub plaquette_signs: Option<Vec<i8>>,
    pub basis: MeasureBasis,
    pub n_shots: usize,
    /// Apply the string flip to `tau^x` shots before classifying them.
    pub flip: bool,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            geometry: "tri3".into(),
            plaquette_signs: None,
            basis: MeasureBasis::TauX,
            n_shots: 1000,
            flip: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ExactEigenstate,
    GrownState,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyConfigDoc {
    pub source: Source,
    pub t: f64,
    pub n_phi: usize,
    /// Run the free Hamiltonian with this uniform field during the pulses.
    pub free_field: Option<f64>,
    pub pulse_duration: f64,
}

impl Default for RamseyConfigDoc {
    fn default() -> Self {
        Self {
            source: Source::ExactEigenstate,
            t: 1.0,
            n_phi: 41,
            free_field: None,
            pulse_duration: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    pub source: Source,
    pub t: f64,
    pub vison: bool,
    /// Pulse areas (the total pulse time at unit amplitude).
    pub areas: Grid,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            source: Source::ExactEigenstate,
            t: 1.0,
            vison: false,
            areas: Grid::new(0.0, 4.0 * std::f64::consts::PI, 81),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Params {
    Spectrum(SpectrumConfig),
    Grow(GrowConfig),
    Gapscan(GapscanConfig),
    MicroscopicEvolve(MicroscopicConfig),
    Snapshot(SnapshotConfig),
    Ramsey(RamseyConfigDoc),
    RamseyCalibrate(CalibrateConfig),
    ReducedGap(ReducedGapConfig),
    Finetune(FinetuneConfig),
}

/// A parsed document with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub params: Params,
}

fn typed<P: DeserializeOwned>(table: toml::Table) -> Result<P, CliError> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Schema(e.message().to_string()))
}

impl ExperimentConfig {
    /// Parses a document. `implied` fills in the experiment when the document
    /// does not name one; a document naming a different one is rejected.
    pub fn parse(text: &str, implied: Option<Experiment>) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Schema(e.to_string()))?;
        let named: Option<Experiment> = table
            .remove("experiment")
            .map(|v| v.try_into().map_err(|_| CliError::schema("experiment", "unknown experiment name")))
            .transpose()?;
        let experiment = match (named, implied) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::schema(
                    "experiment",
                    format!("document is for `{}`, not `{}`", a.name(), b.name()),
                ))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(CliError::schema("experiment", "missing field")),
        };
        let seed = table
            .remove("seed")
            .map(|v| match v {
                toml::Value::Integer(i) if i >= 0 => Ok(i as u64),
                _ => Err(CliError::schema("seed", "must be a non-negative integer")),
            })
            .transpose()?;
        let output = table
            .remove("output")
            .map(|v| match v {
                toml::Value::String(s) => Ok(PathBuf::from(s)),
                _ => Err(CliError::schema("output", "must be a path string")),
            })
            .transpose()?;
        let params = match experiment {
            Experiment::Spectrum => Params::Spectrum(typed(table)?),
            Experiment::Grow => Params::Grow(typed(table)?),
            Experiment::Gapscan => Params::Gapscan(typed(table)?),
            Experiment::MicroscopicEvolve => Params::MicroscopicEvolve(typed(table)?),
            Experiment::Snapshot => Params::Snapshot(typed(table)?),
            Experiment::Ramsey => Params::Ramsey(typed(table)?),
            Experiment::RamseyCalibrate => Params::RamseyCalibrate(typed(table)?),
            Experiment::ReducedGap => Params::ReducedGap(typed(table)?),
            Experiment::Finetune => Params::Finetune(typed(table)?),
        };
        Ok(Self {
            experiment,
            seed,
            output,
            params,
        })
    }
}

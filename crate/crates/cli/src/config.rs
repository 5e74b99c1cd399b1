//! JSON experiment configuration.
//!
//! A config file holds either one explicit experiment or a reference to a
//! named preset with overrides. Unknown keys are rejected in both forms.

use std::fs;
use std::path::{Path, PathBuf};

use otoc_core::channels::{load_chi_matrix, load_confusion_matrix, load_density_matrix, ChiMatrix, EprSource};
use otoc_core::dynamics::{CoherenceTimes, IntegratorConfig};
use otoc_core::protocol::{NoiseModel, Protocol, ProtocolLayout, ReadoutModel, ShotConfig};
use otoc_core::spinchain::{CouplingScheme, HamiltonianSpec, MismatchSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;
use crate::presets::{Overrides, PresetName};

/// Evenly spaced times `0, …, t_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_max_us: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![0.0];
        }
        let last = (self.n_points - 1) as f64;
        (0..self.n_points).map(|i| self.t_max_us * i as f64 / last).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.n_points == 0 {
            return Err(CliError::Config("time_grid.n_points must be at least 1".into()));
        }
        if !(self.t_max_us > 0.0 && self.t_max_us.is_finite()) && self.n_points > 1 {
            return Err(CliError::Config(format!(
                "time_grid.t_max_us must be positive, got {}",
                self.t_max_us
            )));
        }
        Ok(())
    }
}

/// One EPR pair: a Werner state of given fidelity or a density-matrix file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EprConfig {
    Fidelity(f64),
    File(PathBuf),
}

/// Error channel before the Bell projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChiConfig {
    Identity,
    /// Two-qubit depolarizing channel with this average gate fidelity.
    Depolarizing(f64),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// `[F_gg, F_ee]` per register qubit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_qubit: Option<Vec<[f64; 2]>>,
    /// Full-register confusion matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub correct: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMethod {
    #[default]
    Direct,
    Tomography,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialConfig {
    #[serde(default)]
    pub method: SpatialMethod,
}

fn default_mismatch() -> Vec<MismatchSpec> {
    vec![MismatchSpec::default()]
}

/// A single chain, its imperfections and the sweep to run on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scheme: CouplingScheme,
    /// Chain length of one subsystem; the register has `2N+1` qubits.
    pub n: usize,
    #[serde(default)]
    pub detunings_mhz: Vec<f64>,
    #[serde(default)]
    pub drives_mhz: Vec<f64>,
    pub couplings_mhz: Vec<f64>,
    /// One entry per EPR pair; empty means perfect pairs.
    #[serde(default)]
    pub epr: Vec<EprConfig>,
    #[serde(default)]
    pub coherence: Option<CoherenceTimes>,
    #[serde(default)]
    pub chi: Option<ChiConfig>,
    #[serde(default)]
    pub readout: Option<ReadoutConfig>,
    pub time_grid: TimeGrid,
    #[serde(default = "default_mismatch")]
    pub mismatch: Vec<MismatchSpec>,
    /// Shots per input state and time; absent means exact probabilities.
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub decay_rates: bool,
    #[serde(default)]
    pub spatial: Option<SpatialConfig>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// A config file that names a preset instead of spelling out an experiment.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub preset: Option<PresetName>,
    #[serde(default)]
    pub noiseless: bool,
    pub master_seed: Option<u64>,
    pub shots: Option<u64>,
    pub t_max_us: Option<f64>,
    pub n_points: Option<usize>,
    pub output: Option<PathBuf>,
}

/// Parsed contents of a config file.
#[derive(Clone, Debug)]
pub enum ConfigFile {
    Experiment(Box<ExperimentConfig>),
    Preset { name: PresetName, overrides: Overrides, output: Option<PathBuf> },
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        if value.get("preset").is_some() {
            let r: PresetRef = serde_json::from_value(value).map_err(CliError::config)?;
            let overrides = Overrides {
                noiseless: r.noiseless,
                master_seed: r.master_seed,
                shots: r.shots,
                t_max_us: r.t_max_us,
                n_points: r.n_points,
            };
            Ok(ConfigFile::Preset { name: r.preset.expect("checked above"), overrides, output: r.output })
        } else {
            let cfg: ExperimentConfig = serde_json::from_value(value).map_err(CliError::config)?;
            Ok(ConfigFile::Experiment(Box::new(cfg)))
        }
    }

    /// Reads `path`; relative file references are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg {
            ConfigFile::Experiment(exp) => exp.resolve_paths(base),
            ConfigFile::Preset { output: Some(out), .. } if out.is_relative() => *out = base.join(&*out),
            ConfigFile::Preset { .. } => {}
        }
        Ok(cfg)
    }
}

/// An experiment ready to evolve: one protocol per mismatch value.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub times_us: Vec<f64>,
    pub protocols: Vec<Protocol>,
}

impl ExperimentConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for e in &mut self.epr {
            if let EprConfig::File(p) = e {
                fix(p);
            }
        }
        if let Some(ChiConfig::File(p)) = &mut self.chi {
            fix(p);
        }
        if let Some(ReadoutConfig { file: Some(p), .. }) = &mut self.readout {
            fix(p);
        }
        if let Some(p) = &mut self.output {
            fix(p);
        }
    }

    /// Drops every imperfection, keeping the sweep itself.
    pub fn make_noiseless(&mut self) {
        self.epr.clear();
        self.coherence = None;
        self.chi = None;
        self.readout = None;
    }

    pub fn hamiltonian(&self) -> Result<HamiltonianSpec, CliError> {
        let fill = |v: &Vec<f64>| if v.is_empty() { vec![0.0; self.n] } else { v.clone() };
        let spec = HamiltonianSpec::new(
            self.scheme,
            fill(&self.detunings_mhz),
            fill(&self.drives_mhz),
            self.couplings_mhz.clone(),
        )
        .map_err(|e| CliError::Config(format!("{}: {e}", self.name)))?;
        if spec.n_sites() != self.n {
            return Err(CliError::Config(format!(
                "{}: n = {} but the chain arrays describe {} sites",
                self.name,
                self.n,
                spec.n_sites()
            )));
        }
        Ok(spec)
    }

    pub fn shot_mode(&self) -> ShotConfig {
        match self.shots {
            None => ShotConfig::Exact,
            Some(shots) => ShotConfig::Sampled { shots, seed: self.master_seed },
        }
    }

    fn noise_model(&self, layout: &ProtocolLayout) -> Result<NoiseModel, CliError> {
        let ctx = |e: otoc_core::Error| CliError::Config(format!("{}: {e}", self.name));
        let mut noise = NoiseModel::ideal(layout);
        if !self.epr.is_empty() {
            if self.epr.len() != layout.half_length() {
                return Err(CliError::Config(format!(
                    "{}: epr has {} entries, the layout has {} pairs",
                    self.name,
                    self.epr.len(),
                    layout.half_length()
                )));
            }
            noise.epr = self
                .epr
                .iter()
                .map(|e| match e {
                    EprConfig::Fidelity(f) => {
                        let src = EprSource::Synthesized { fidelity: *f };
                        src.density().map(|_| src)
                    }
                    EprConfig::File(p) => load_density_matrix(p).map(EprSource::Loaded),
                })
                .collect::<otoc_core::Result<_>>()
                .map_err(ctx)?;
        }
        noise.chi = match &self.chi {
            None => None,
            Some(ChiConfig::Identity) => Some(ChiMatrix::identity()),
            Some(ChiConfig::Depolarizing(f)) => Some(ChiMatrix::depolarizing(*f).map_err(ctx)?),
            Some(ChiConfig::File(p)) => Some(load_chi_matrix(p).map_err(ctx)?),
        };
        if let Some(times) = &self.coherence {
            times.validate().map_err(ctx)?;
            noise.coherence = Some(times.clone());
        }
        noise.readout = match &self.readout {
            None => None,
            Some(r) => Some(match (&r.per_qubit, &r.file) {
                (Some(f), None) => {
                    let pairs: Vec<(f64, f64)> = f.iter().map(|p| (p[0], p[1])).collect();
                    if pairs.len() != layout.n_qubits() {
                        return Err(CliError::Config(format!(
                            "{}: readout.per_qubit has {} entries for {} qubits",
                            self.name,
                            pairs.len(),
                            layout.n_qubits()
                        )));
                    }
                    ReadoutModel::per_qubit(&pairs, r.correct).map_err(ctx)?
                }
                (None, Some(p)) => ReadoutModel::new(load_confusion_matrix(p).map_err(ctx)?, r.correct).map_err(ctx)?,
                _ => {
                    return Err(CliError::Config(format!(
                        "{}: readout needs exactly one of per_qubit or file",
                        self.name
                    )))
                }
            }),
        };
        Ok(noise)
    }

    /// Validates everything and builds the protocols.
    pub fn build(&self) -> Result<Experiment, CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Config(format!("invalid experiment name {:?}", self.name)));
        }
        self.time_grid.validate()?;
        if self.mismatch.is_empty() {
            return Err(CliError::Config(format!("{}: mismatch list is empty", self.name)));
        }
        if self.shots == Some(0) {
            return Err(CliError::Config(format!("{}: shots must be at least 1", self.name)));
        }
        let spec = self.hamiltonian()?;
        let layout = ProtocolLayout::new(self.n).map_err(CliError::config)?;
        if self.spatial.is_some() && self.n < 3 {
            return Err(CliError::Config(format!("{}: spatial OTOC needs n ≥ 3", self.name)));
        }
        if self.decay_rates && self.time_grid.n_points < 3 {
            return Err(CliError::Config(format!("{}: decay rates need at least 3 time points", self.name)));
        }
        let noise = self.noise_model(&layout)?;
        let protocols = self
            .mismatch
            .iter()
            .map(|m| {
                let m = (!m.is_zero()).then_some(m);
                Protocol::new(&spec, layout, noise.clone(), m, self.integrator)
            })
            .collect::<otoc_core::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(format!("{}: {e}", self.name)))?;
        Ok(Experiment { config: self.clone(), times_us: self.time_grid.times(), protocols })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "scheme": "zz",
        "n": 2,
        "couplings_mhz": [0.42],
        "time_grid": {"t_max_us": 1.0, "n_points": 5}
    }"#;

    fn minimal() -> ExperimentConfig {
        match ConfigFile::parse(MINIMAL).unwrap() {
            ConfigFile::Experiment(e) => *e,
            _ => unreachable!(),
        }
    }

    #[test]
    fn minimal_config_defaults() {
        let cfg = minimal();
        assert_eq!(cfg.mismatch, vec![MismatchSpec::default()]);
        assert_eq!(cfg.shot_mode(), ShotConfig::Exact);
        let exp = cfg.build().unwrap();
        assert_eq!(exp.times_us, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(exp.protocols.len(), 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"n\": 2", "\"n\": 2, \"bogus_key\": 1");
        let err = ConfigFile::parse(&text).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn unphysical_coherence_rejected() {
        let mut cfg = minimal();
        cfg.coherence = Some(CoherenceTimes { t1_us: vec![10.0; 5], t2_us: vec![25.0; 5] });
        let err = cfg.build().unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("2·T1"), "{err}");
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let mut cfg = minimal();
        cfg.chi = Some(ChiConfig::File(PathBuf::from("/nonexistent/chi.json")));
        assert!(matches!(cfg.build(), Err(CliError::Config(_))));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut cfg = minimal();
        cfg.epr = vec![EprConfig::Fidelity(0.9)];
        assert!(matches!(cfg.build(), Err(CliError::Config(_))));
        let mut cfg = minimal();
        cfg.n = 3;
        assert!(matches!(cfg.build(), Err(CliError::Config(_))));
        let mut cfg = minimal();
        cfg.spatial = Some(SpatialConfig::default());
        assert!(matches!(cfg.build(), Err(CliError::Config(_))));
    }

    #[test]
    fn preset_reference_parses() {
        let cfg = ConfigFile::parse(r#"{"preset": "fig2", "noiseless": true, "n_points": 3}"#).unwrap();
        match cfg {
            ConfigFile::Preset { name, overrides, .. } => {
                assert_eq!(name, PresetName::Fig2);
                assert!(overrides.noiseless);
                assert_eq!(overrides.n_points, Some(3));
            }
            _ => panic!("expected preset"),
        }
        assert!(ConfigFile::parse(r#"{"preset": "fig9"}"#).is_err());
    }

    #[test]
    fn tagged_noise_sources_parse() {
        let text = MINIMAL.replace(
            "\"n\": 2",
            r#""n": 2, "epr": [{"fidelity": 0.93}, {"fidelity": 0.91}], "chi": {"depolarizing": 0.98},
               "readout": {"per_qubit": [[0.95, 0.9], [0.95, 0.9], [0.95, 0.9], [0.95, 0.9], [0.95, 0.9]], "correct": true}"#,
        );
        let ConfigFile::Experiment(cfg) = ConfigFile::parse(&text).unwrap() else { panic!() };
        assert_eq!(cfg.chi, Some(ChiConfig::Depolarizing(0.98)));
        let exp = cfg.build().unwrap();
        assert!(exp.protocols[0].noise().readout.as_ref().unwrap().corrects());
        let identity = MINIMAL.replace("\"n\": 2", r#""n": 2, "chi": "identity""#);
        assert!(ConfigFile::parse(&identity).is_ok());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = minimal();
        let text = serde_json::to_string(&cfg).unwrap();
        let ConfigFile::Experiment(back) = ConfigFile::parse(&text).unwrap() else { panic!() };
        assert_eq!(*back, cfg);
    }
}

//! Named experiment bundles with the device parameters of the five- and
//! seven-qubit processors.

use clap::ValueEnum;
use otoc_core::dynamics::{CoherenceTimes, IntegratorConfig};
use otoc_core::spinchain::{CouplingScheme, MismatchSpec};
use serde::{Deserialize, Serialize};

use crate::config::{ChiConfig, EprConfig, ExperimentConfig, SpatialConfig, SpatialMethod, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    #[value(name = "fig1_5q")]
    #[serde(rename = "fig1_5q")]
    Fig1_5q,
    #[value(name = "fig1_7q")]
    #[serde(rename = "fig1_7q")]
    Fig1_7q,
    Fig2,
    Fig3,
    Fig4,
    #[value(name = "figS1")]
    #[serde(rename = "figS1")]
    FigS1,
}

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Fig1_5q => "fig1_5q",
            PresetName::Fig1_7q => "fig1_7q",
            PresetName::Fig2 => "fig2",
            PresetName::Fig3 => "fig3",
            PresetName::Fig4 => "fig4",
            PresetName::FigS1 => "figS1",
        }
    }
}

/// Command-line or config-file adjustments applied on top of a preset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub noiseless: bool,
    pub master_seed: Option<u64>,
    pub shots: Option<u64>,
    pub t_max_us: Option<f64>,
    pub n_points: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.noiseless {
            cfg.make_noiseless();
        }
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        if self.shots.is_some() {
            cfg.shots = self.shots;
        }
        if let Some(t) = self.t_max_us {
            cfg.time_grid.t_max_us = t;
        }
        if let Some(n) = self.n_points {
            cfg.time_grid.n_points = n;
        }
    }
}

/// Default grid for the ZZ presets.
pub const ZZ_GRID: TimeGrid = TimeGrid { t_max_us: 2.4, n_points: 41 };
/// Default grid for the faster XY presets.
pub const XY_GRID: TimeGrid = TimeGrid { t_max_us: 0.6, n_points: 41 };

/// Bell-measurement error: two-qubit depolarizing at this average gate fidelity.
pub const BELL_MEASUREMENT_FIDELITY: f64 = 0.98;

pub const DRIVE_MISMATCH_SWEEP_MHZ: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const COUPLING_MISMATCH_SWEEP_MHZ: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Per-device noise figures, indexed by register qubit.
struct Device {
    t1_us: &'static [f64],
    t2_us: &'static [f64],
    /// In EPR-pair layout order.
    epr_fidelity: &'static [f64],
}

const FIVE_QUBIT: Device = Device {
    t1_us: &[22.9, 22.5, 22.0, 16.4, 19.9],
    t2_us: &[3.0, 6.7, 6.8, 4.2, 7.9],
    epr_fidelity: &[0.934, 0.915],
};

// The pair order is (Q2,Q5), (Q3,Q4), (Q6,Q7).
const SEVEN_QUBIT: Device = Device {
    t1_us: &[22.9, 22.5, 23.9, 16.4, 19.9, 23.3, 24.8],
    t2_us: &[2.6, 6.4, 2.4, 3.6, 7.7, 5.0, 11.7],
    epr_fidelity: &[0.801, 0.895, 0.915],
};

fn device(n: usize) -> &'static Device {
    match n {
        2 => &FIVE_QUBIT,
        3 => &SEVEN_QUBIT,
        _ => unreachable!("presets cover five and seven qubits"),
    }
}

/// Forward-chain ZZ parameters `(Δ, Ω, J)` in MHz.
fn zz_params(n: usize) -> (f64, f64, f64) {
    match n {
        2 => (1.0, 0.5, 0.42),
        3 => (0.2, 0.6, 0.21),
        _ => unreachable!(),
    }
}

fn xy_coupling(n: usize) -> f64 {
    if n == 2 {
        3.73
    } else {
        3.7
    }
}

fn tag(n: usize) -> &'static str {
    if n == 2 {
        "5q"
    } else {
        "7q"
    }
}

fn base(name: String, scheme: CouplingScheme, n: usize, grid: TimeGrid) -> ExperimentConfig {
    let dev = device(n);
    ExperimentConfig {
        name,
        scheme,
        n,
        detunings_mhz: vec![0.0; n],
        drives_mhz: vec![0.0; n],
        couplings_mhz: vec![0.0; n - 1],
        epr: dev.epr_fidelity.iter().map(|&f| EprConfig::Fidelity(f)).collect(),
        coherence: Some(CoherenceTimes { t1_us: dev.t1_us.to_vec(), t2_us: dev.t2_us.to_vec() }),
        chi: Some(ChiConfig::Depolarizing(BELL_MEASUREMENT_FIDELITY)),
        readout: None,
        time_grid: grid,
        mismatch: vec![MismatchSpec::default()],
        shots: None,
        master_seed: 0,
        decay_rates: false,
        spatial: None,
        integrator: IntegratorConfig::default(),
        output: None,
    }
}

fn zz(name: String, n: usize, detuning: f64, drive: f64, coupling: f64) -> ExperimentConfig {
    let mut cfg = base(name, CouplingScheme::Zz, n, ZZ_GRID);
    cfg.detunings_mhz = vec![detuning; n];
    cfg.drives_mhz = vec![drive; n];
    cfg.couplings_mhz = vec![coupling; n - 1];
    cfg
}

fn fig1(n: usize) -> ExperimentConfig {
    let (d, o, j) = zz_params(n);
    zz(format!("fig1_{}", tag(n)), n, d, o, j)
}

/// Experiments making up a preset, before overrides.
pub fn preset(name: PresetName) -> Vec<ExperimentConfig> {
    match name {
        PresetName::Fig1_5q => vec![fig1(2)],
        PresetName::Fig1_7q => vec![fig1(3)],
        PresetName::Fig2 => [2, 3]
            .into_iter()
            .flat_map(|n| {
                let (_, o, j) = zz_params(n);
                [
                    zz(format!("fig2_{}_drive", tag(n)), n, 0.0, o, j),
                    zz(format!("fig2_{}_nodrive", tag(n)), n, 0.0, 0.0, j),
                ]
            })
            .collect(),
        PresetName::Fig3 => [2, 3]
            .into_iter()
            .map(|n| {
                let mut cfg = fig1(n);
                cfg.name = format!("fig3_{}", tag(n));
                cfg.mismatch = DRIVE_MISMATCH_SWEEP_MHZ.iter().map(|&d| MismatchSpec::drive(d)).collect();
                cfg.decay_rates = true;
                cfg
            })
            .collect(),
        PresetName::Fig4 => {
            let (d, o, j) = zz_params(3);
            let spatial = Some(SpatialConfig { method: SpatialMethod::Tomography });
            let mut nodrive = zz("fig4_nodrive".into(), 3, d, 0.0, j);
            let mut drive = zz("fig4_drive".into(), 3, d, o, j);
            nodrive.spatial = spatial;
            drive.spatial = spatial;
            vec![nodrive, drive]
        }
        PresetName::FigS1 => [2, 3]
            .into_iter()
            .map(|n| {
                let mut cfg = base(format!("figS1_{}", tag(n)), CouplingScheme::Xy, n, XY_GRID);
                cfg.couplings_mhz = vec![xy_coupling(n); n - 1];
                cfg.mismatch = COUPLING_MISMATCH_SWEEP_MHZ.iter().map(|&d| MismatchSpec::coupling(d)).collect();
                cfg
            })
            .collect(),
    }
}

/// Preset experiments with `overrides` applied.
pub fn resolve(name: PresetName, overrides: &Overrides) -> Vec<ExperimentConfig> {
    let mut cfgs = preset(name);
    for cfg in &mut cfgs {
        overrides.apply(cfg);
    }
    cfgs
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [PresetName; 6] = [
        PresetName::Fig1_5q,
        PresetName::Fig1_7q,
        PresetName::Fig2,
        PresetName::Fig3,
        PresetName::Fig4,
        PresetName::FigS1,
    ];

    #[test]
    fn every_preset_builds() {
        for name in ALL {
            for cfg in preset(name) {
                let exp = cfg.build().unwrap_or_else(|e| panic!("{}: {e}", cfg.name));
                assert_eq!(exp.protocols.len(), cfg.mismatch.len());
            }
        }
    }

    #[test]
    fn names_are_unique_and_serde_matches_cli() {
        let mut seen = std::collections::HashSet::new();
        for name in ALL {
            let json = serde_json::to_string(&name).unwrap();
            assert_eq!(json, format!("\"{}\"", name.as_str()));
            assert_eq!(PresetName::from_str(name.as_str(), false).unwrap(), name);
            for cfg in preset(name) {
                assert!(seen.insert(cfg.name.clone()), "duplicate {}", cfg.name);
            }
        }
    }

    #[test]
    fn fig1_parameters() {
        let c5 = &preset(PresetName::Fig1_5q)[0];
        assert_eq!((c5.detunings_mhz[0], c5.drives_mhz[1], c5.couplings_mhz[0]), (1.0, 0.5, 0.42));
        assert_eq!(c5.epr, vec![EprConfig::Fidelity(0.934), EprConfig::Fidelity(0.915)]);
        let c7 = &preset(PresetName::Fig1_7q)[0];
        assert_eq!(c7.couplings_mhz, vec![0.21, 0.21]);
        assert_eq!(c7.coherence.as_ref().unwrap().t2_us[2], 2.4);
        assert_eq!(c7.time_grid, ZZ_GRID);
    }

    #[test]
    fn noiseless_override_strips_noise() {
        let overrides = Overrides { noiseless: true, n_points: Some(3), ..Default::default() };
        for cfg in resolve(PresetName::Fig2, &overrides) {
            assert!(cfg.epr.is_empty() && cfg.coherence.is_none() && cfg.chi.is_none());
            assert_eq!(cfg.time_grid.n_points, 3);
            assert_eq!(cfg.detunings_mhz, vec![0.0; cfg.n]);
        }
    }
}

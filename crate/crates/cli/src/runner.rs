//! Parallel sweeps over time and mismatch grids.
//!
//! Every (mismatch, time) cell is an independent job with its own seed,
//! and results are collected in job order, so the output does not depend
//! on the number of workers.

use std::fs;
use std::path::Path;

use otoc_core::protocol::{
    extract_decay_rate, job_seed, OtocTimeSeries, PairChoice, PairMethod, ProtocolResult, ShotConfig,
};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, SpatialMethod};
use crate::error::CliError;
use crate::output::{rates_csv, series_csv, spatial_csv, ExperimentEntry, Manifest, SeriesEntry};

const RANGE_TOL: f64 = 1e-9;

/// Bell-pair and inner-pair OTOC on the time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialSeries {
    pub bell_pair: Vec<f64>,
    pub inner_pair: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    /// One per mismatch value.
    pub series: Vec<OtocTimeSeries>,
    pub rates: Option<Vec<Option<f64>>>,
    pub spatial: Option<Vec<SpatialSeries>>,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))
}

/// Range checks on one estimate. The noise-parameter bound holds by
/// construction only for exact, uncorrected probabilities.
fn check_result(name: &str, t: f64, r: &ProtocolResult, strict_noise: bool) -> Result<(), CliError> {
    let bounded = [
        ("avg_otoc", r.avg_otoc),
        ("pf_mean", r.pf_mean),
        ("tele_fid_conditional", r.tele_fid_conditional),
    ];
    let states = r.states.iter().flat_map(|s| [("P", s.p_success), ("F", s.fidelity.unwrap_or(0.5))]);
    for (what, v) in bounded.into_iter().chain(states) {
        if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
            return Err(CliError::Invariant(format!("{name}, t = {t} µs: {what} = {v} outside [0, 1]")));
        }
    }
    if strict_noise && !(-2.0 - RANGE_TOL..=1.0 + 1e-6).contains(&r.noise_param) {
        return Err(CliError::Invariant(format!(
            "{name}, t = {t} µs: noise parameter {} outside [-2, 1]",
            r.noise_param
        )));
    }
    if r.noise_param < 0.0 {
        log::warn!("{name}, t = {t} µs: negative noise parameter {}", r.noise_param);
    }
    Ok(())
}

fn run_experiment(exp: &Experiment) -> Result<ExperimentOutput, CliError> {
    let cfg = &exp.config;
    let nt = exp.times_us.len();
    let nm = exp.protocols.len();
    if exp.times_us.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Invariant(format!("{}: time grid not strictly increasing", cfg.name)));
    }
    let shots_for = |index: usize| match cfg.shot_mode() {
        ShotConfig::Exact => ShotConfig::Exact,
        ShotConfig::Sampled { shots, seed } => ShotConfig::Sampled { shots, seed: job_seed(seed, index as u64) },
    };

    let corrected = exp.protocols[0].noise().readout.as_ref().is_some_and(|r| r.corrects());
    let strict_noise = cfg.shots.is_none() && !corrected;

    let results: Vec<ProtocolResult> = (0..nm * nt)
        .into_par_iter()
        .map(|job| {
            let (m, i) = (job / nt, job % nt);
            let t = exp.times_us[i];
            let r = exp.protocols[m]
                .estimate(t, shots_for(job))
                .map_err(|e| CliError::Invariant(format!("{}, t = {t} µs: {e}", cfg.name)))?;
            check_result(&cfg.name, t, &r, strict_noise)?;
            Ok(r)
        })
        .collect::<Result<_, CliError>>()?;
    let mut chunks = results.into_iter();
    let series: Vec<OtocTimeSeries> = (0..nm)
        .map(|_| OtocTimeSeries { times_us: exp.times_us.clone(), results: chunks.by_ref().take(nt).collect() })
        .collect();

    let rates = cfg.decay_rates.then(|| {
        series
            .iter()
            .zip(&cfg.mismatch)
            .map(|(s, m)| match extract_decay_rate(&s.times_us, &s.noise_params()) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("{} at mismatch {m:?}: no decay rate ({e})", cfg.name);
                    None
                }
            })
            .collect()
    });

    let spatial = match cfg.spatial {
        None => None,
        Some(sp) => {
            let offset = nm * nt;
            let values: Vec<f64> = (0..nm * nt * 2)
                .into_par_iter()
                .map(|job| {
                    let (m, rest) = (job / (2 * nt), job % (2 * nt));
                    let (i, pair) = (rest / 2, if rest % 2 == 0 { PairChoice::BellPair } else { PairChoice::InnerPair });
                    let t = exp.times_us[i];
                    let method = match sp.method {
                        SpatialMethod::Direct => PairMethod::DirectProjection,
                        SpatialMethod::Tomography => PairMethod::Tomography(shots_for(offset + job)),
                    };
                    let v = exp.protocols[m]
                        .spatial_otoc(t, pair, method)
                        .map_err(|e| CliError::Invariant(format!("{}, t = {t} µs: {e}", cfg.name)))?;
                    if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
                        return Err(CliError::Invariant(format!(
                            "{}, t = {t} µs: spatial OTOC {v} outside [0, 1]",
                            cfg.name
                        )));
                    }
                    Ok(v)
                })
                .collect::<Result<_, CliError>>()?;
            Some(
                values
                    .chunks(2 * nt)
                    .map(|c| SpatialSeries {
                        bell_pair: c.iter().step_by(2).copied().collect(),
                        inner_pair: c.iter().skip(1).step_by(2).copied().collect(),
                    })
                    .collect(),
            )
        }
    };

    Ok(ExperimentOutput { config: cfg.clone(), series, rates, spatial })
}

/// Validates and runs one experiment on `workers` threads.
pub fn compute(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput, CliError> {
    let exp = cfg.build()?;
    pool(workers)?.install(|| run_experiment(&exp))
}

fn series_file(cfg: &ExperimentConfig, m: usize) -> String {
    if cfg.mismatch.len() == 1 {
        format!("{}.csv", cfg.name)
    } else {
        format!("{}_m{m}.csv", cfg.name)
    }
}

fn write(dir: &Path, file: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(file);
    fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

impl ExperimentOutput {
    /// Writes this experiment's CSV files into `dir` and describes them.
    pub fn write_files(&self, dir: &Path) -> Result<ExperimentEntry, CliError> {
        let cfg = &self.config;
        let mut entries = Vec::with_capacity(self.series.len());
        for (m, (series, mismatch)) in self.series.iter().zip(&cfg.mismatch).enumerate() {
            let file = series_file(cfg, m);
            write(dir, &file, &series_csv(series))?;
            let spatial_file = match &self.spatial {
                Some(sp) => {
                    let f = file.replace(".csv", "_spatial.csv");
                    write(dir, &f, &spatial_csv(&series.times_us, &sp[m].bell_pair, &sp[m].inner_pair))?;
                    Some(f)
                }
                None => None,
            };
            entries.push(SeriesEntry { file, mismatch: *mismatch, spatial_file });
        }
        let rates_file = match &self.rates {
            Some(rates) => {
                let f = format!("{}_rates.csv", cfg.name);
                write(dir, &f, &rates_csv(&cfg.mismatch, rates))?;
                Some(f)
            }
            None => None,
        };
        Ok(ExperimentEntry {
            config: cfg.clone(),
            times_us: cfg.time_grid.times(),
            series: entries,
            rates_file,
        })
    }
}

/// Validates every experiment first, then runs them all and writes the
/// CSV files plus `manifest.json` into `out_dir`.
pub fn run_and_write(
    cfgs: &[ExperimentConfig],
    out_dir: &Path,
    workers: usize,
    source: &str,
) -> Result<Manifest, CliError> {
    let exps = cfgs.iter().map(ExperimentConfig::build).collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", out_dir.display())))?;
    let pool = pool(workers)?;
    let mut manifest = Manifest::new(source.to_string());
    for exp in &exps {
        log::info!("running {} ({} mismatch values × {} times)", exp.config.name, exp.protocols.len(), exp.times_us.len());
        let out = pool.install(|| run_experiment(exp))?;
        manifest.experiments.push(out.write_files(out_dir)?);
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(out_dir, "manifest.json", &(text + "\n"))?;
    Ok(manifest)
}

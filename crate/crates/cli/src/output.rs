//! CSV and manifest writers.
//!
//! Numbers are printed with 12 significant digits, '.' as the decimal
//! separator and trailing zeros trimmed, so identical inputs give identical bytes.

use otoc_core::protocol::{InputEnsemble, OtocTimeSeries};
use otoc_core::spinchain::MismatchSpec;
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const SIG_DIGITS: i32 = 12;

/// Leading columns of every time-series CSV.
pub const SERIES_PREFIX: [&str; 6] = ["t_us", "avg_otoc", "pf_mean", "tele_fid_conditional", "noise_param", "mean_f"];

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let s = if (-5..15).contains(&mag) {
        let decimals = (SIG_DIGITS - 1 - mag).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    } else {
        let s = format!("{x:.*e}", (SIG_DIGITS - 1) as usize);
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        format!("{}e{exp}", trim_fraction(mantissa))
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn series_header(sampled: bool) -> Vec<String> {
    let mut cols: Vec<String> = SERIES_PREFIX.iter().map(|s| s.to_string()).collect();
    for label in InputEnsemble::TWO_DESIGN_LABELS {
        cols.push(format!("p_{label}"));
        cols.push(format!("f_{label}"));
    }
    cols.push("excluded_count".into());
    if sampled {
        cols.extend(["se_avg_otoc", "se_pf_mean", "se_noise_param"].map(String::from));
    }
    cols
}

fn to_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

pub fn series_csv(series: &OtocTimeSeries) -> String {
    let sampled = series.results.iter().any(|r| r.std_errors.is_some());
    let rows = series.times_us.iter().zip(&series.results).map(|(&t, r)| {
        let mut row: Vec<String> = [t, r.avg_otoc, r.pf_mean, r.tele_fid_conditional, r.noise_param, r.mean_fidelity]
            .into_iter()
            .map(fmt_num)
            .collect();
        for s in &r.states {
            row.push(fmt_num(s.p_success));
            row.push(fmt_num(s.fidelity.unwrap_or(f64::NAN)));
        }
        row.push(r.excluded.to_string());
        if let Some(se) = &r.std_errors {
            row.extend([se.avg_otoc, se.pf_mean, se.noise_param].map(fmt_num));
        }
        row
    });
    to_csv(&series_header(sampled), rows)
}

pub fn rates_csv(mismatch: &[MismatchSpec], rates: &[Option<f64>]) -> String {
    let header = ["d_omega_mhz", "d_j_mhz", "decay_rate_per_us"].map(String::from);
    let rows = mismatch.iter().zip(rates).map(|(m, r)| {
        vec![fmt_num(m.d_omega_mhz), fmt_num(m.d_j_mhz), fmt_num(r.unwrap_or(f64::NAN))]
    });
    to_csv(&header, rows)
}

pub fn spatial_csv(times_us: &[f64], bell_pair: &[f64], inner_pair: &[f64]) -> String {
    let header = ["t_us", "bell_pair_otoc", "inner_pair_otoc"].map(String::from);
    let rows = times_us
        .iter()
        .zip(bell_pair.iter().zip(inner_pair))
        .map(|(&t, (&b, &i))| vec![fmt_num(t), fmt_num(b), fmt_num(i)]);
    to_csv(&header, rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesEntry {
    pub file: String,
    pub mismatch: MismatchSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial_file: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentEntry {
    /// Fully resolved configuration, enough to rerun with `otoc run`.
    pub config: ExperimentConfig,
    pub times_us: Vec<f64>,
    pub series: Vec<SeriesEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates_file: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub source: String,
    pub experiments: Vec<ExperimentEntry>,
}

impl Manifest {
    pub fn new(source: String) -> Self {
        Self { tool: "otoc", version: env!("CARGO_PKG_VERSION"), source, experiments: Vec::new() }
    }
}

//! Calibration formulas: randomized-benchmarking infidelity and decay fits,
//! tunable-coupler effective coupling, bare qubit frequencies from dressed
//! Ramsey frequencies, and linear phase-accumulation fits.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interleaved-RB gate infidelity `r = (1 − p_gate/p_ref)/2`.
pub fn rb_infidelity(p_ref: f64, p_gate: f64) -> Result<f64> {
    for (name, v) in [("p_ref", p_ref), ("p_gate", p_gate)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if p_gate > p_ref {
        log::warn!("interleaved decay {p_gate} exceeds reference decay {p_ref}; infidelity is negative");
    }
    Ok((1.0 - p_gate / p_ref) / 2.0)
}

/// Sequence fidelity versus Clifford sequence length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbCurve {
    lengths: Vec<f64>,
    fidelities: Vec<f64>,
}

impl RbCurve {
    pub fn new(lengths: Vec<f64>, fidelities: Vec<f64>) -> Result<Self> {
        if lengths.len() != fidelities.len() {
            return Err(Error::DimensionMismatch { expected: lengths.len(), got: fidelities.len() });
        }
        if lengths.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "RB curve needs at least 3 points, got {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidParameter("sequence lengths must be non-negative".into()));
        }
        if lengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("sequence lengths must be strictly increasing".into()));
        }
        if let Some(f) = fidelities.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::InvalidParameter(format!("sequence fidelity {f} outside [0, 1]")));
        }
        Ok(Self { lengths, fidelities })
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn fidelities(&self) -> &[f64] {
        &self.fidelities
    }
}

/// `F(m) = A·p^m + B`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RbFit {
    pub a: f64,
    pub p: f64,
    pub b: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

const RB_MAX_ITER: usize = 200;

fn rb_residuals(curve: &RbCurve, a: f64, p: f64, b: f64) -> Vec<f64> {
    curve
        .lengths
        .iter()
        .zip(&curve.fidelities)
        .map(|(&m, &f)| a * p.powf(m) + b - f)
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Best `(A, B)` for a fixed decay base.
fn linear_amplitudes(curve: &RbCurve, p: f64) -> (f64, f64) {
    let n = curve.lengths.len() as f64;
    let x: Vec<f64> = curve.lengths.iter().map(|&m| p.powf(m)).collect();
    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sy: f64 = curve.fidelities.iter().sum();
    let sxy: f64 = x.iter().zip(&curve.fidelities).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-14 * n * sxx.max(1.0) {
        return (0.0, sy / n);
    }
    let a = (n * sxy - sx * sy) / det;
    (a, (sy - a * sx) / n)
}

/// Least-squares fit of `A·p^m + B` with `p ∈ (0, 1]`, by damped Gauss-Newton.
///
/// Starts from `p` given by the log-ratio of the first and last points and the
/// matching linear `A, B`.
pub fn fit_rb_decay(curve: &RbCurve) -> Result<RbFit> {
    let (m0, f0) = (curve.lengths[0], curve.fidelities[0]);
    let (m1, f1) = (*curve.lengths.last().unwrap(), *curve.fidelities.last().unwrap());
    let mut p = if f0 > 0.0 && f1 > 0.0 {
        ((f1 / f0).ln() / (m1 - m0)).exp().clamp(1e-6, 1.0)
    } else {
        0.5
    };
    let (mut a, mut b) = linear_amplitudes(curve, p);
    let mut res = rb_residuals(curve, a, p, b);
    let mut cost = norm(&res);
    let scale = norm(&curve.fidelities).max(1.0);
    let mut lambda = 1e-3;
    for iter in 0..RB_MAX_ITER {
        if cost <= 1e-15 * scale {
            return Ok(RbFit { a, p, b, residual_norm: cost, iterations: iter });
        }
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (k, &m) in curve.lengths.iter().enumerate() {
            let pm = p.powf(m);
            let dp = if m == 0.0 { 0.0 } else { a * m * p.powf(m - 1.0) };
            let row = Vector3::new(pm, dp, 1.0);
            jtj += row * row.transpose();
            jtr += row * res[k];
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.try_inverse().map(|inv| -(inv * jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let (na, np, nb) = (a + step[0], (p + step[1]).clamp(1e-12, 1.0), b + step[2]);
            let nres = rb_residuals(curve, na, np, nb);
            let ncost = norm(&nres);
            if ncost < cost {
                let rel = (step[0].abs() + (np - p).abs() + step[2].abs()) / (a.abs() + p + b.abs()).max(1e-12);
                let gain = cost - ncost;
                a = na;
                p = np;
                b = nb;
                res = nres;
                cost = ncost;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel < 1e-13 || gain < 1e-16 * scale {
                    return Ok(RbFit { a, p, b, residual_norm: cost, iterations: iter + 1 });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No damped step lowers the cost: a (possibly boundary) minimum.
            return Ok(RbFit { a, p, b, residual_norm: cost, iterations: iter + 1 });
        }
    }
    Err(Error::FitFailed(format!(
        "RB decay fit did not converge in {RB_MAX_ITER} iterations (residual {cost:.3e})"
    )))
}

/// Tunable-coupler parameters, all in MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerParams {
    pub g1_mhz: f64,
    pub g2_mhz: f64,
    pub gd_mhz: f64,
    pub delta1_mhz: f64,
    pub delta2_mhz: f64,
    pub sigma1_mhz: f64,
    pub sigma2_mhz: f64,
}

/// `J = (g1 g2 / 2)(1/Δ1 + 1/Δ2 − 1/Σ1 − 1/Σ2) + g_d`, in MHz.
pub fn coupler_effective_j(c: &CouplerParams) -> Result<f64> {
    for (name, v) in [
        ("delta1", c.delta1_mhz),
        ("delta2", c.delta2_mhz),
        ("sigma1", c.sigma1_mhz),
        ("sigma2", c.sigma2_mhz),
    ] {
        if v == 0.0 || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite and nonzero, got {v}")));
        }
    }
    let inv = 1.0 / c.delta1_mhz + 1.0 / c.delta2_mhz - 1.0 / c.sigma1_mhz - 1.0 / c.sigma2_mhz;
    Ok(c.g1_mhz * c.g2_mhz / 2.0 * inv + c.gd_mhz)
}

/// Dressed frequencies (GHz) of a centre qubit with its neighbours in 00, 10 and 01.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DressedFrequencies {
    pub w00_ghz: f64,
    pub w10_ghz: f64,
    pub w01_ghz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BareFrequency {
    pub omega_ghz: f64,
    pub j12_mhz: f64,
    pub j23_mhz: f64,
}

const MHZ_PER_GHZ: f64 = 1e3;

/// Bare frequency and both ZZ couplings from the three dressed frequencies.
pub fn bare_frequency(d: &DressedFrequencies) -> Result<BareFrequency> {
    if ![d.w00_ghz, d.w10_ghz, d.w01_ghz].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("dressed frequencies must be finite".into()));
    }
    let j12 = (d.w10_ghz - d.w00_ghz) / 4.0;
    let j23 = (d.w01_ghz - d.w00_ghz) / 4.0;
    Ok(BareFrequency {
        omega_ghz: d.w00_ghz + 2.0 * j12 + 2.0 * j23,
        j12_mhz: j12 * MHZ_PER_GHZ,
        j23_mhz: j23 * MHZ_PER_GHZ,
    })
}

/// Dressed frequencies produced by a bare frequency and ZZ couplings.
pub fn dressed_frequencies(omega_ghz: f64, j12_mhz: f64, j23_mhz: f64) -> DressedFrequencies {
    let (j12, j23) = (j12_mhz / MHZ_PER_GHZ, j23_mhz / MHZ_PER_GHZ);
    DressedFrequencies {
        w00_ghz: omega_ghz - 2.0 * j12 - 2.0 * j23,
        w10_ghz: omega_ghz + 2.0 * j12 - 2.0 * j23,
        w01_ghz: omega_ghz - 2.0 * j12 + 2.0 * j23,
    }
}

/// Removes `2π` jumps larger than `π` between consecutive samples.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &phi) in phases.iter().enumerate() {
        if i > 0 {
            let delta = phi - phases[i - 1];
            if delta > PI {
                offset -= TAU * ((delta + PI) / TAU).floor();
            } else if delta < -PI {
                offset += TAU * ((-delta + PI) / TAU).floor();
            }
        }
        out.push(phi + offset);
    }
    out
}

/// `φ = k·t + b`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseFit {
    pub k_rad_per_us: f64,
    pub b_rad: f64,
    pub residual_norm: f64,
}

/// Ordinary least-squares line through `(t, φ)` samples.
pub fn fit_phase_accumulation(t_us: &[f64], phi_rad: &[f64]) -> Result<PhaseFit> {
    if t_us.len() != phi_rad.len() {
        return Err(Error::DimensionMismatch { expected: t_us.len(), got: phi_rad.len() });
    }
    let n = t_us.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("phase fit needs at least 2 points, got {n}")));
    }
    let mt = t_us.iter().sum::<f64>() / n as f64;
    let mp = phi_rad.iter().sum::<f64>() / n as f64;
    let stt: f64 = t_us.iter().map(|t| (t - mt).powi(2)).sum();
    if stt <= 0.0 {
        return Err(Error::InsufficientData("all sample times are equal".into()));
    }
    let stp: f64 = t_us.iter().zip(phi_rad).map(|(t, p)| (t - mt) * (p - mp)).sum();
    let k = stp / stt;
    let b = mp - k * mt;
    let residual_norm = t_us
        .iter()
        .zip(phi_rad)
        .map(|(t, p)| (k * t + b - p).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PhaseFit { k_rad_per_us: k, b_rad: b, residual_norm })
}

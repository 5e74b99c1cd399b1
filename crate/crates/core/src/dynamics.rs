//! Closed- and open-system time evolution.
//!
//! Open-system evolution integrates the Lindblad master equation with one
//! amplitude-damping channel `√(1/T1)·σ−` and one dephasing channel
//! `√(2γφ)·a†a`, `γφ = 1/T2 − 1/(2T1)`, per qubit. With both channels the
//! off-diagonal coherence of a qubit decays at exactly `1/T2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    apply_left, apply_right, embed, hermitian_function, kron, pauli, DensityMatrix, OperatorMatrix,
    SiteMap, I,
};

/// Per-qubit relaxation and Ramsey dephasing times in µs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceTimes {
    pub t1_us: Vec<f64>,
    pub t2_us: Vec<f64>,
}

impl CoherenceTimes {
    pub fn new(t1_us: Vec<f64>, t2_us: Vec<f64>) -> Result<Self> {
        let ct = Self { t1_us, t2_us };
        ct.validate()?;
        Ok(ct)
    }

    /// No decoherence on `n` qubits.
    pub fn ideal(n: usize) -> Self {
        Self { t1_us: vec![f64::INFINITY; n], t2_us: vec![f64::INFINITY; n] }
    }

    pub fn len(&self) -> usize {
        self.t1_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t1_us.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1_us.len() != self.t2_us.len() {
            return Err(Error::DimensionMismatch { expected: self.t1_us.len(), got: self.t2_us.len() });
        }
        for (q, (&t1, &t2)) in self.t1_us.iter().zip(&self.t2_us).enumerate() {
            if t1.is_nan() || t2.is_nan() || t1 <= 0.0 || t2 <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "qubit {q}: T1 and T2 must be positive (T1={t1}, T2={t2})"
                )));
            }
            if t2 > 2.0 * t1 {
                return Err(Error::InvalidParameter(format!(
                    "qubit {q}: T2={t2} µs exceeds 2·T1={} µs (negative pure-dephasing rate)",
                    2.0 * t1
                )));
            }
        }
        Ok(())
    }

    pub fn relaxation_rate(&self, q: usize) -> f64 {
        1.0 / self.t1_us[q]
    }

    /// `γφ = 1/T2 − 1/(2T1)`
    pub fn dephasing_rate(&self, q: usize) -> f64 {
        (1.0 / self.t2_us[q] - 0.5 / self.t1_us[q]).max(0.0)
    }

    /// Times for a subset of qubits, in the listed order.
    pub fn select(&self, qubits: &[usize]) -> Self {
        Self {
            t1_us: qubits.iter().map(|&q| self.t1_us[q]).collect(),
            t2_us: qubits.iter().map(|&q| self.t2_us[q]).collect(),
        }
    }

    /// Collapse operators `(site, local 2×2 operator)` with rates folded in.
    fn jump_operators(&self) -> Vec<(usize, OperatorMatrix)> {
        let mut jumps = Vec::new();
        for q in 0..self.len() {
            let g1 = self.relaxation_rate(q);
            if g1 > 0.0 {
                jumps.push((q, pauli::sigma_minus().scale_real(g1.sqrt())));
            }
            let gphi = self.dephasing_rate(q);
            if gphi > 0.0 {
                jumps.push((q, pauli::number().scale_real((2.0 * gphi).sqrt())));
            }
        }
        jumps
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt_us: f64,
    pub trace_drift_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt_us: 2e-3, trace_drift_tol: 1e-8 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_us > 0.0 && self.dt_us.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt_us)));
        }
        if !(self.trace_drift_tol > 0.0) {
            return Err(Error::InvalidParameter("trace drift tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Number of equal steps covering `duration` with step ≤ `dt`.
    fn steps_for(&self, duration: f64) -> usize {
        if duration <= 0.0 {
            0
        } else {
            ((duration / self.dt_us) - 1e-9).ceil().max(1.0) as usize
        }
    }
}

/// `U = e^{−iHt}` via the Hermitian eigendecomposition.
pub fn propagator(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    hermitian_function(h, |lambda| (-I * lambda * t).exp())
}

/// `U ρ U†`
pub fn unitary_apply(rho: &DensityMatrix, u: &OperatorMatrix) -> Result<DensityMatrix> {
    if u.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: u.dim() });
    }
    Ok(DensityMatrix::from_trusted(&(u * rho.operator()) * &u.adjoint()))
}

fn check_register(h: &OperatorMatrix, times: &CoherenceTimes) -> Result<usize> {
    let n = h
        .n_qubits()
        .ok_or_else(|| Error::InvalidParameter(format!("dimension {} is not a qubit register", h.dim())))?;
    if times.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: times.len() });
    }
    times.validate()?;
    Ok(n)
}

struct MasterEquation {
    h_eff: OperatorMatrix,
    h_eff_adj: OperatorMatrix,
    jumps: Vec<(SiteMap, OperatorMatrix, OperatorMatrix)>,
}

impl MasterEquation {
    fn new(h: &OperatorMatrix, times: &CoherenceTimes, n: usize) -> Result<Self> {
        let mut h_eff = h.clone();
        let mut jumps = Vec::new();
        for (q, l) in times.jump_operators() {
            let ldl = &l.adjoint() * &l;
            h_eff = &h_eff - &embed(&ldl, &[q], n)?.scale(Complex64::new(0.0, 0.5));
            jumps.push((SiteMap::new(&[q], n)?, l.adjoint(), l));
        }
        let h_eff_adj = h_eff.adjoint();
        Ok(Self { h_eff, h_eff_adj, jumps })
    }

    /// `−i(H_eff ρ − ρ H_eff†) + Σ L ρ L†`
    fn rhs(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix> {
        let comm = &(&self.h_eff * rho) - &(rho * &self.h_eff_adj);
        let mut out = comm.scale(-I);
        for (map, l_adj, l) in &self.jumps {
            let lr = apply_left(l, map, rho)?;
            out = &out + &apply_right(&lr, l_adj, map)?;
        }
        Ok(out)
    }

    fn rk4_step(&self, rho: &OperatorMatrix, h: f64) -> Result<OperatorMatrix> {
        let k1 = self.rhs(rho)?;
        let k2 = self.rhs(&(rho + &k1.scale_real(h / 2.0)))?;
        let k3 = self.rhs(&(rho + &k2.scale_real(h / 2.0)))?;
        let k4 = self.rhs(&(rho + &k3.scale_real(h)))?;
        let incr = &(&(&k1 + &k2.scale_real(2.0)) + &k3.scale_real(2.0)) + &k4;
        Ok(rho + &incr.scale_real(h / 6.0))
    }
}

/// Integrates the master equation from `rho0` for time `t` with fixed-step RK4.
pub fn lindblad_evolve(
    rho0: &DensityMatrix,
    h: &OperatorMatrix,
    times: &CoherenceTimes,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    cfg.validate()?;
    if h.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch { expected: rho0.dim(), got: h.dim() });
    }
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!("negative evolution time {t}")));
    }
    let n = check_register(h, times)?;
    let eq = MasterEquation::new(h, times, n)?;
    let steps = cfg.steps_for(t);
    let mut rho = rho0.operator().clone();
    if steps > 0 {
        let dt = t / steps as f64;
        for _ in 0..steps {
            rho = eq.rk4_step(&rho, dt)?;
        }
    }
    let drift = (rho.trace() - rho0.operator().trace()).norm();
    if drift > cfg.trace_drift_tol {
        return Err(Error::TraceDrift { drift, tol: cfg.trace_drift_tol });
    }
    // RK4 conserves the trace of a trace-annihilating generator exactly, so an
    // oversized step shows up as out-of-range populations instead.
    check_populations(&rho, cfg.trace_drift_tol)?;
    Ok(DensityMatrix::from_trusted(rho))
}

fn check_populations(rho: &OperatorMatrix, tol: f64) -> Result<()> {
    for z in rho.diag() {
        if z.re < -tol || z.re > 1.0 + tol {
            return Err(Error::Unstable { value: z.re });
        }
    }
    Ok(())
}

/// Generator of the master equation in row-major vectorized form.
///
/// With `vec(ρ)[a·D + b] = ρ[a, b]`, `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
pub fn liouvillian(h: &OperatorMatrix, times: &CoherenceTimes) -> Result<OperatorMatrix> {
    let n = check_register(h, times)?;
    let d = h.dim();
    let id = OperatorMatrix::identity(d);
    let mut gen = (&kron(h, &id) - &kron(&id, &h.transpose())).scale(-I);
    for (q, l) in times.jump_operators() {
        let l_full = embed(&l, &[q], n)?;
        let ldl = &l_full.adjoint() * &l_full;
        gen = &gen + &kron(&l_full, &l_full.conjugate());
        gen = &gen - &kron(&ldl, &id).scale_real(0.5);
        gen = &gen - &kron(&id, &ldl.transpose()).scale_real(0.5);
    }
    Ok(gen)
}

/// Steps a vectorized channel `S(t)` forward along increasing times with RK4.
///
/// For a time-independent generator `L`, one RK4 step of size `h` is the
/// matrix polynomial `I + hL + (hL)²/2 + (hL)³/6 + (hL)⁴/24`.
pub struct ChannelStepper {
    generator: OperatorMatrix,
    cfg: IntegratorConfig,
    local_dim: usize,
    time: f64,
    channel: OperatorMatrix,
}

impl ChannelStepper {
    pub fn new(h: &OperatorMatrix, times: &CoherenceTimes, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let generator = liouvillian(h, times)?;
        let dim = generator.dim();
        Ok(Self {
            generator,
            cfg,
            local_dim: h.dim(),
            time: 0.0,
            channel: OperatorMatrix::identity(dim),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Superoperator for the current time.
    pub fn channel(&self) -> &OperatorMatrix {
        &self.channel
    }

    /// Advances to time `t ≥ current time` and returns the channel.
    pub fn advance_to(&mut self, t: f64) -> Result<&OperatorMatrix> {
        if t < self.time - 1e-15 {
            return Err(Error::InvalidParameter(format!(
                "cannot step backwards from {} to {t}",
                self.time
            )));
        }
        let steps = self.cfg.steps_for(t - self.time);
        if steps > 0 {
            let h = (t - self.time) / steps as f64;
            let step = rk4_polynomial(&self.generator, h);
            self.channel = &matrix_power(&step, steps) * &self.channel;
        }
        self.time = t;
        let drift = self.trace_drift();
        if drift > self.cfg.trace_drift_tol {
            return Err(Error::TraceDrift { drift, tol: self.cfg.trace_drift_tol });
        }
        self.check_populations()?;
        Ok(&self.channel)
    }

    /// Populations of every evolved basis projector must stay within `[0, 1]`.
    fn check_populations(&self) -> Result<()> {
        let d = self.local_dim;
        let tol = self.cfg.trace_drift_tol;
        for a in 0..d {
            let col = a * d + a;
            for k in 0..d {
                let z = self.channel.get(k * d + k, col).re;
                if !(z >= -tol && z <= 1.0 + tol) {
                    return Err(Error::Unstable { value: z });
                }
            }
        }
        Ok(())
    }

    /// Largest deviation of `tr S(|a⟩⟨b|)` from `δ_ab`.
    pub fn trace_drift(&self) -> f64 {
        let d = self.local_dim;
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                let col = a * d + b;
                let tr: Complex64 = (0..d).map(|k| self.channel.get(k * d + k, col)).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((tr - expected).norm());
            }
        }
        worst
    }
}

fn rk4_polynomial(generator: &OperatorMatrix, h: f64) -> OperatorMatrix {
    let a = generator.scale_real(h);
    let mut term = OperatorMatrix::identity(a.dim());
    let mut sum = term.clone();
    for k in 1..=4 {
        term = (&term * &a).scale_real(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

/// `m^k` by repeated squaring.
fn matrix_power(m: &OperatorMatrix, mut k: usize) -> OperatorMatrix {
    let mut result = OperatorMatrix::identity(m.dim());
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Superoperator of the master equation over `[0, t]`.
pub fn lindblad_channel(
    h: &OperatorMatrix,
    times: &CoherenceTimes,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<OperatorMatrix> {
    let mut stepper = ChannelStepper::new(h, times, *cfg)?;
    stepper.advance_to(t)?;
    Ok(stepper.channel)
}

/// Superoperator of `ρ ↦ UρU†` in the same vectorization.
pub fn unitary_channel(u: &OperatorMatrix) -> OperatorMatrix {
    kron(u, &u.conjugate())
}

//! Teleportation-based OTOC protocol: register layout, evolution of the
//! forward and mirrored backward chains, Bell projection and the estimators.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channels::{apply_chi_channel, pauli_basis_element, ChiMatrix, ConfusionMatrix, EprSource};
use crate::dynamics::{lindblad_channel, propagator, CoherenceTimes, IntegratorConfig};
use crate::error::{Error, Result};
use crate::linalg::{
    apply_left, apply_right, apply_superop, bell_basis, embed_single_site, partial_trace_operator,
    phi_plus, place_factors, DensityMatrix, OperatorMatrix, Pauli, SiteMap, StateVector, ONE, ZERO,
};
use crate::spinchain::{apply_mismatch, build_hamiltonian, opposite_spec, HamiltonianSpec, MismatchSpec};

/// Success probabilities below this are treated as "no conditioning possible".
pub const MIN_SUCCESS_PROBABILITY: f64 = 1e-12;

/// Qubit roles for a chain of half-length `N` on `2N + 1` qubits (0-based indices).
///
/// The forward chain occupies qubits `0..N`, the backward chain `N..2N` with
/// spec site `i` on qubit `2N - 1 - i`, and qubit `2N` is the reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolLayout {
    half: usize,
}

impl ProtocolLayout {
    pub fn new(half_length: usize) -> Result<Self> {
        if half_length < 2 {
            return Err(Error::InvalidParameter(format!(
                "chain half-length must be at least 2, got {half_length}"
            )));
        }
        Ok(Self { half: half_length })
    }

    pub fn half_length(&self) -> usize {
        self.half
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.half + 1
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn forward(&self) -> Vec<usize> {
        (0..self.half).collect()
    }

    /// Backward-chain qubits indexed by spec site.
    pub fn backward(&self) -> Vec<usize> {
        (0..self.half).map(|i| 2 * self.half - 1 - i).collect()
    }

    pub fn reference(&self) -> usize {
        2 * self.half
    }

    /// EPR pairs: mirror partners across the Bell pair, then (last backward, reference).
    pub fn epr_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.half;
        let mut pairs: Vec<(usize, usize)> = (1..n).map(|k| (k, 2 * n - 1 - k)).collect();
        pairs.push((2 * n - 1, 2 * n));
        pairs
    }

    pub fn bell_pair(&self) -> (usize, usize) {
        (self.half - 1, self.half)
    }

    /// The EPR pair one step further from the centre than the Bell pair.
    pub fn inner_pair(&self) -> Result<(usize, usize)> {
        if self.half < 3 {
            return Err(Error::InvalidParameter(
                "the inner pair needs a chain half-length of at least 3".into(),
            ));
        }
        Ok((self.half - 2, self.half + 1))
    }
}

/// Input-state ensembles. The six-state list starts with the two-state one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEnsemble {
    OneDesign,
    TwoDesign,
}

impl InputEnsemble {
    pub const TWO_DESIGN_LABELS: [&'static str; 6] = ["0", "1", "+x", "-x", "+y", "-y"];

    pub fn len(self) -> usize {
        match self {
            InputEnsemble::OneDesign => 2,
            InputEnsemble::TwoDesign => 6,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        &Self::TWO_DESIGN_LABELS[..self.len()]
    }

    /// `|0⟩, |1⟩, |+x⟩, |−x⟩, |+y⟩, |−y⟩`, truncated to the ensemble size.
    pub fn states(self) -> Vec<StateVector> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = |x: f64| Complex64::new(x, 0.0);
        let i = |x: f64| Complex64::new(0.0, x);
        let all = [
            vec![ONE, ZERO],
            vec![ZERO, ONE],
            vec![r(h), r(h)],
            vec![r(h), r(-h)],
            vec![r(h), i(h)],
            vec![r(h), i(-h)],
        ];
        all.into_iter()
            .take(self.len())
            .map(|a| StateVector::new(a).expect("normalized input state"))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ShotConfig {
    Exact,
    Sampled { shots: u64, seed: u64 },
}

impl ShotConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ShotConfig::Sampled { shots: 0, .. } => {
                Err(Error::InvalidParameter("shot count must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// SplitMix64 finalizer, used to decorrelate per-job seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of job `index` under `master`.
pub fn job_seed(master: u64, index: u64) -> u64 {
    master ^ splitmix64(index)
}

/// Readout errors on the full register, with optional Bayes correction.
#[derive(Clone, Debug)]
pub struct ReadoutModel {
    confusion: ConfusionMatrix,
    inverse: Option<DMatrix<f64>>,
}

impl ReadoutModel {
    pub fn new(confusion: ConfusionMatrix, correct: bool) -> Result<Self> {
        let inverse = if correct {
            let cond = confusion.condition_number();
            if !(cond < 1e12) {
                return Err(Error::Singular(format!(
                    "confusion matrix condition number {cond:.3e}"
                )));
            }
            log::debug!("readout correction condition number {cond:.3e}");
            Some(
                confusion
                    .as_matrix()
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("confusion matrix inverse failed".into()))?,
            )
        } else {
            None
        };
        Ok(Self { confusion, inverse })
    }

    /// Independent per-qubit readout errors `(F_gg, F_ee)`, qubit 0 first.
    pub fn per_qubit(fidelities: &[(f64, f64)], correct: bool) -> Result<Self> {
        let parts = fidelities
            .iter()
            .map(|&(g, e)| ConfusionMatrix::single_qubit(g, e))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ConfusionMatrix::kron_all(&parts), correct)
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.confusion
    }

    pub fn corrects(&self) -> bool {
        self.inverse.is_some()
    }

    fn distort(&self, p: &[f64]) -> Vec<f64> {
        let m = self.confusion.as_matrix();
        (0..p.len())
            .map(|j| (0..p.len()).map(|i| p[i] * m[(i, j)]).sum())
            .collect()
    }

    fn correct(&self, p: &[f64]) -> Vec<f64> {
        let Some(inv) = &self.inverse else {
            return p.to_vec();
        };
        let mut out: Vec<f64> = (0..p.len())
            .map(|j| (0..p.len()).map(|i| p[i] * inv[(i, j)]).sum::<f64>().max(0.0))
            .collect();
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|x| *x /= total);
        }
        out
    }
}

/// Every imperfection the protocol can include. `ideal` disables all of them.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    /// One source per entry of [`ProtocolLayout::epr_pairs`], in that order.
    pub epr: Vec<EprSource>,
    /// Applied to the Bell pair just before the projection.
    pub chi: Option<ChiMatrix>,
    /// One entry per register qubit.
    pub coherence: Option<CoherenceTimes>,
    pub readout: Option<ReadoutModel>,
}

impl NoiseModel {
    pub fn ideal(layout: &ProtocolLayout) -> Self {
        Self {
            epr: vec![EprSource::Synthesized { fidelity: 1.0 }; layout.half_length()],
            chi: None,
            coherence: None,
            readout: None,
        }
    }

    fn validate(&self, layout: &ProtocolLayout) -> Result<()> {
        if self.epr.len() != layout.half_length() {
            return Err(Error::DimensionMismatch {
                expected: layout.half_length(),
                got: self.epr.len(),
            });
        }
        if let Some(times) = &self.coherence {
            if times.len() != layout.n_qubits() {
                return Err(Error::DimensionMismatch { expected: layout.n_qubits(), got: times.len() });
            }
            times.validate()?;
        }
        if let Some(r) = &self.readout {
            if r.confusion.size() != 1 << layout.n_qubits() {
                return Err(Error::DimensionMismatch {
                    expected: 1 << layout.n_qubits(),
                    got: r.confusion.size(),
                });
            }
        }
        Ok(())
    }
}

/// `|ψ⟩⟨ψ|` on the input qubit with each EPR state on its pair.
pub fn assemble_initial_state(
    psi: &StateVector,
    layout: &ProtocolLayout,
    epr: &[EprSource],
) -> Result<DensityMatrix> {
    if psi.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: psi.dim() });
    }
    let pairs = layout.epr_pairs();
    if epr.len() != pairs.len() {
        return Err(Error::DimensionMismatch { expected: pairs.len(), got: epr.len() });
    }
    let densities = epr.iter().map(|e| e.density()).collect::<Result<Vec<_>>>()?;
    initial_state_from(psi, layout, &densities)
}

fn initial_state_from(
    psi: &StateVector,
    layout: &ProtocolLayout,
    densities: &[DensityMatrix],
) -> Result<DensityMatrix> {
    let input = psi.projector();
    let input_site = [layout.input()];
    let pair_sites: Vec<[usize; 2]> = layout.epr_pairs().iter().map(|&(a, b)| [a, b]).collect();
    let mut factors: Vec<(&OperatorMatrix, &[usize])> = vec![(&input, &input_site)];
    for (rho, sites) in densities.iter().zip(&pair_sites) {
        factors.push((rho.operator(), sites));
    }
    Ok(DensityMatrix::from_trusted(place_factors(&factors, layout.n_qubits())?))
}

/// Success probability and conditional fidelity for one input state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateOutcome {
    pub label: &'static str,
    pub p_success: f64,
    /// `None` when the Bell outcome never occurred, so `F` is undefined.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StdErrors {
    pub avg_otoc: f64,
    pub pf_mean: f64,
    pub noise_param: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolResult {
    /// Two-design ensemble order.
    pub states: Vec<StateOutcome>,
    pub avg_otoc: f64,
    pub pf_mean: f64,
    pub tele_fid_conditional: f64,
    pub noise_param: f64,
    /// Mean conditional fidelity over the states that could be conditioned.
    pub mean_fidelity: f64,
    pub excluded: usize,
    pub std_errors: Option<StdErrors>,
}

impl ProtocolResult {
    fn from_outcomes(states: Vec<StateOutcome>, shots: Option<u64>) -> Self {
        let d = 2.0;
        let avg_otoc = states[..2].iter().map(|s| s.p_success).sum::<f64>() / 2.0;
        let mean_p = states.iter().map(|s| s.p_success).sum::<f64>() / states.len() as f64;
        let pf: Vec<f64> = states
            .iter()
            .map(|s| s.fidelity.map_or(0.0, |f| s.p_success * f))
            .collect();
        let pf_mean = pf.iter().sum::<f64>() / states.len() as f64;
        let fids: Vec<f64> = states.iter().filter_map(|s| s.fidelity).collect();
        let excluded = states.len() - fids.len();
        let mean_fidelity = if fids.is_empty() {
            f64::NAN
        } else {
            fids.iter().sum::<f64>() / fids.len() as f64
        };
        let tele_fid_conditional = if mean_p > 0.0 { pf_mean / mean_p } else { f64::NAN };
        let noise_param = d * ((d + 1.0) * pf_mean - avg_otoc);
        let std_errors = shots.map(|n| {
            let n = n as f64;
            let var = |q: f64| q * (1.0 - q) / n;
            let se_avg = (states[..2].iter().map(|s| var(s.p_success)).sum::<f64>()).sqrt() / 2.0;
            let se_pf = (pf.iter().map(|&q| var(q)).sum::<f64>()).sqrt() / states.len() as f64;
            let se_noise = d * (((d + 1.0) * se_pf).powi(2) + se_avg.powi(2)).sqrt();
            StdErrors { avg_otoc: se_avg, pf_mean: se_pf, noise_param: se_noise }
        });
        Self {
            states,
            avg_otoc,
            pf_mean,
            tele_fid_conditional,
            noise_param,
            mean_fidelity,
            excluded,
            std_errors,
        }
    }
}

/// Which EPR pair a spatially resolved OTOC reads out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairChoice {
    BellPair,
    InnerPair,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMethod {
    DirectProjection,
    Tomography(ShotConfig),
}

/// Forward and backward Hamiltonians with their noise, ready to evolve.
#[derive(Clone, Debug)]
pub struct Protocol {
    layout: ProtocolLayout,
    noise: NoiseModel,
    epr_states: Vec<DensityMatrix>,
    h_fwd: OperatorMatrix,
    h_bwd: OperatorMatrix,
    fwd_map: SiteMap,
    bwd_map: SiteMap,
    ref_map: SiteMap,
    integrator: IntegratorConfig,
}

/// The evolution map of the whole register at one time.
enum Evolution {
    Unitary { u_fwd: OperatorMatrix, u_bwd: OperatorMatrix },
    Lindblad { s_fwd: OperatorMatrix, s_bwd: OperatorMatrix, s_ref: OperatorMatrix },
}

impl Protocol {
    pub fn new(
        spec: &HamiltonianSpec,
        layout: ProtocolLayout,
        noise: NoiseModel,
        mismatch: Option<&MismatchSpec>,
        integrator: IntegratorConfig,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.n_sites() != layout.half_length() {
            return Err(Error::DimensionMismatch {
                expected: layout.half_length(),
                got: spec.n_sites(),
            });
        }
        noise.validate(&layout)?;
        integrator.validate()?;
        let backward = match mismatch {
            Some(m) => apply_mismatch(&opposite_spec(spec), m),
            None => opposite_spec(spec),
        };
        let n = layout.n_qubits();
        let epr_states = noise.epr.iter().map(|e| e.density()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            h_fwd: build_hamiltonian(spec)?,
            h_bwd: build_hamiltonian(&backward)?,
            fwd_map: SiteMap::new(&layout.forward(), n)?,
            bwd_map: SiteMap::new(&layout.backward(), n)?,
            ref_map: SiteMap::new(&[layout.reference()], n)?,
            layout,
            noise,
            epr_states,
            integrator,
        })
    }

    pub fn layout(&self) -> &ProtocolLayout {
        &self.layout
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn evolution(&self, t: f64) -> Result<Evolution> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("evolution time must be ≥ 0, got {t}")));
        }
        match &self.noise.coherence {
            None => Ok(Evolution::Unitary {
                u_fwd: propagator(&self.h_fwd, t)?,
                u_bwd: propagator(&self.h_bwd, t)?,
            }),
            Some(times) => {
                let cfg = &self.integrator;
                let sub = |h: &OperatorMatrix, qubits: &[usize]| {
                    lindblad_channel(h, &times.select(qubits), t, cfg)
                };
                Ok(Evolution::Lindblad {
                    s_fwd: sub(&self.h_fwd, &self.layout.forward())?,
                    s_bwd: sub(&self.h_bwd, &self.layout.backward())?,
                    s_ref: sub(&OperatorMatrix::zeros(2), &[self.layout.reference()])?,
                })
            }
        }
    }

    fn evolve(&self, ev: &Evolution, rho: &OperatorMatrix) -> Result<OperatorMatrix> {
        match ev {
            Evolution::Unitary { u_fwd, u_bwd } => {
                let mut out = apply_left(u_fwd, &self.fwd_map, rho)?;
                out = apply_right(&out, &u_fwd.adjoint(), &self.fwd_map)?;
                out = apply_left(u_bwd, &self.bwd_map, &out)?;
                apply_right(&out, &u_bwd.adjoint(), &self.bwd_map)
            }
            Evolution::Lindblad { s_fwd, s_bwd, s_ref } => {
                let out = apply_superop(s_fwd, &self.fwd_map, rho)?;
                let out = apply_superop(s_bwd, &self.bwd_map, &out)?;
                apply_superop(s_ref, &self.ref_map, &out)
            }
        }
    }

    /// Register state just before the Bell measurement (chi already applied).
    pub fn final_state(&self, t: f64, psi: &StateVector) -> Result<DensityMatrix> {
        let ev = self.evolution(t)?;
        self.final_state_with(&ev, psi)
    }

    fn final_state_with(&self, ev: &Evolution, psi: &StateVector) -> Result<DensityMatrix> {
        let rho0 = initial_state_from(psi, &self.layout, &self.epr_states)?;
        let rho = DensityMatrix::from_trusted(self.evolve(ev, rho0.operator())?);
        match &self.noise.chi {
            Some(chi) => apply_chi_channel(&rho, chi, self.layout.bell_pair(), self.layout.n_qubits()),
            None => Ok(rho),
        }
    }

    /// Joint distribution over (Bell outcome k, reference outcome r) at index `2k + r`,
    /// with Bell outcomes ordered Φ+, Ψ+, Φ−, Ψ− and `r = 0` meaning "found in ψ".
    fn outcome_distribution(
        &self,
        rho: &DensityMatrix,
        psi: &StateVector,
        shots: Option<(u64, &mut ChaCha8Rng)>,
    ) -> Result<Vec<f64>> {
        let (a, b) = self.layout.bell_pair();
        let r = self.layout.reference();
        let n = self.layout.n_qubits();
        let rotation = measurement_rotation(psi)?;
        let map = SiteMap::new(&[a, b, r], n)?;
        match &self.noise.readout {
            None => {
                let local = partial_trace_operator(rho.operator(), &[a, b, r], n)?;
                let rotated = &(&rotation * &local) * &rotation.adjoint();
                let p: Vec<f64> = rotated.diag().iter().map(|z| z.re.max(0.0)).collect();
                Ok(match shots {
                    Some((s, rng)) => frequencies(&p, s, rng),
                    None => p,
                })
            }
            Some(readout) => {
                let rotated = apply_left(&rotation, &map, rho.operator())?;
                let rotated = apply_right(&rotated, &rotation.adjoint(), &map)?;
                let p_full: Vec<f64> = rotated.diag().iter().map(|z| z.re.max(0.0)).collect();
                let mut observed = readout.distort(&p_full);
                if let Some((s, rng)) = shots {
                    observed = frequencies(&observed, s, rng);
                }
                let corrected = readout.correct(&observed);
                let mut q = vec![0.0; 8];
                let bit = |i: usize, site: usize| (i >> (n - 1 - site)) & 1;
                for (i, x) in corrected.iter().enumerate() {
                    q[4 * bit(i, a) + 2 * bit(i, b) + bit(i, r)] += x;
                }
                Ok(q)
            }
        }
    }

    fn measure(
        &self,
        ev: &Evolution,
        psi: &StateVector,
        shots: Option<(u64, &mut ChaCha8Rng)>,
    ) -> Result<(f64, f64)> {
        let rho = self.final_state_with(ev, psi)?;
        let q = self.outcome_distribution(&rho, psi, shots)?;
        let p = q[0] + q[1];
        if p < MIN_SUCCESS_PROBABILITY {
            return Err(Error::Unconditioned(p));
        }
        Ok((p, q[0] / p))
    }

    /// `(P_ψ, F_ψ)` at time `t`, exact.
    pub fn run(&self, t: f64, psi: &StateVector) -> Result<(f64, f64)> {
        let ev = self.evolution(t)?;
        self.measure(&ev, psi, None)
    }

    /// All estimators at time `t` over the six-state ensemble.
    pub fn estimate(&self, t: f64, shots: ShotConfig) -> Result<ProtocolResult> {
        shots.validate()?;
        let ev = self.evolution(t)?;
        let labels = InputEnsemble::TWO_DESIGN_LABELS;
        let mut outcomes = Vec::with_capacity(6);
        for (k, psi) in InputEnsemble::TwoDesign.states().iter().enumerate() {
            let result = match shots {
                ShotConfig::Exact => self.measure(&ev, psi, None),
                ShotConfig::Sampled { shots, seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(k as u64);
                    self.measure(&ev, psi, Some((shots, &mut rng)))
                }
            };
            let outcome = match result {
                Ok((p, f)) => StateOutcome { label: labels[k], p_success: p, fidelity: Some(f) },
                Err(Error::Unconditioned(p)) => {
                    log::warn!("input {} at t = {t}: success probability {p:.3e}, excluded", labels[k]);
                    StateOutcome { label: labels[k], p_success: p, fidelity: None }
                }
                Err(e) => return Err(e),
            };
            outcomes.push(outcome);
        }
        let n_shots = match shots {
            ShotConfig::Exact => None,
            ShotConfig::Sampled { shots, .. } => Some(shots),
        };
        Ok(ProtocolResult::from_outcomes(outcomes, n_shots))
    }

    /// Unconditioned `⟨Φ+|ρ_pair|Φ+⟩` averaged over the one-design inputs.
    pub fn spatial_otoc(&self, t: f64, pair: PairChoice, method: PairMethod) -> Result<f64> {
        let (a, b) = match pair {
            PairChoice::BellPair => self.layout.bell_pair(),
            PairChoice::InnerPair => self.layout.inner_pair()?,
        };
        let ev = self.evolution(t)?;
        let n = self.layout.n_qubits();
        let bell = phi_plus();
        let mut total = 0.0;
        for (k, psi) in InputEnsemble::OneDesign.states().iter().enumerate() {
            let rho0 = initial_state_from(psi, &self.layout, &self.epr_states)?;
            let rho = self.evolve(&ev, rho0.operator())?;
            let pair_state = partial_trace_operator(&rho, &[a, b], n)?;
            let value = match method {
                PairMethod::DirectProjection => bell.expectation(&pair_state).re,
                PairMethod::Tomography(shots) => {
                    shots.validate()?;
                    let mut rng = match shots {
                        ShotConfig::Sampled { seed, .. } => {
                            let mut r = ChaCha8Rng::seed_from_u64(seed);
                            r.set_stream(k as u64);
                            Some(r)
                        }
                        ShotConfig::Exact => None,
                    };
                    let est = pauli_tomography(&pair_state, shots, rng.as_mut());
                    bell.expectation(&est).re
                }
            };
            total += value;
        }
        Ok(total / 2.0)
    }
}

/// Maps Bell states to `|00⟩, |01⟩, |10⟩, |11⟩` and `ψ, ψ⊥` to `|0⟩, |1⟩`.
fn measurement_rotation(psi: &StateVector) -> Result<OperatorMatrix> {
    let perp = psi
        .qubit_complement()
        .ok_or_else(|| Error::DimensionMismatch { expected: 2, got: psi.dim() })?;
    let bells = bell_basis();
    Ok(OperatorMatrix::from_fn(8, |row, col| {
        let (k, r) = (row / 2, row % 2);
        let (bc, rc) = (col / 2, col % 2);
        let target = if r == 0 { psi } else { &perp };
        (bells[k].amplitudes()[bc] * target.amplitudes()[rc]).conj()
    }))
}

/// Relative frequencies of `shots` draws from `p`.
fn frequencies(p: &[f64], shots: u64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    let mut remaining_mass = total;
    let mut remaining = shots;
    let mut out = vec![0.0; p.len()];
    for (i, &x) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let count = if i + 1 == p.len() || remaining_mass <= x {
            remaining
        } else {
            let q = (x / remaining_mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("valid binomial").sample(rng)
        };
        out[i] = count as f64 / shots as f64;
        remaining -= count;
        remaining_mass -= x;
    }
    out
}

/// Linear-inversion tomography of a two-qubit state from its 16 Pauli expectations.
pub fn pauli_tomography(
    rho: &OperatorMatrix,
    shots: ShotConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> OperatorMatrix {
    let mut out = OperatorMatrix::zeros(4);
    for m in 0..16 {
        let e = pauli_basis_element(m);
        let exact = rho.trace_product(&e).re;
        let value = match (shots, rng.as_deref_mut()) {
            (ShotConfig::Sampled { shots, .. }, Some(r)) if m != 0 => {
                let plus = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
                let k = Binomial::new(shots, plus).expect("valid binomial").sample(r);
                2.0 * k as f64 / shots as f64 - 1.0
            }
            _ => exact,
        };
        out = &out + &e.scale_real(value / 4.0);
    }
    out
}

/// `(P_ψ, F_ψ)` for a single input state; see [`Protocol`].
#[allow(clippy::too_many_arguments)]
pub fn run_protocol(
    spec: &HamiltonianSpec,
    layout: &ProtocolLayout,
    epr: &[EprSource],
    chi: Option<&ChiMatrix>,
    times: Option<&CoherenceTimes>,
    t: f64,
    psi: &StateVector,
    mismatch: Option<&MismatchSpec>,
) -> Result<(f64, f64)> {
    let noise = NoiseModel {
        epr: epr.to_vec(),
        chi: chi.cloned(),
        coherence: times.cloned(),
        readout: None,
    };
    Protocol::new(spec, *layout, noise, mismatch, IntegratorConfig::default())?.run(t, psi)
}

/// Average OTOC, teleportation fidelity and noise parameter at time `t`.
pub fn estimate_all(
    spec: &HamiltonianSpec,
    layout: &ProtocolLayout,
    noise: &NoiseModel,
    t: f64,
    mismatch: Option<&MismatchSpec>,
    shots: ShotConfig,
) -> Result<ProtocolResult> {
    Protocol::new(spec, *layout, noise.clone(), mismatch, IntegratorConfig::default())?.estimate(t, shots)
}

/// Pauli-twirled OTOC `(1/16) Σ_{P,Q} 2^{-N} tr[P_w(t)† Q_v† P_w(t) Q_v]` on the bare chain.
pub fn pauli_average_otoc(spec: &HamiltonianSpec, t: f64, site_w: usize, site_v: usize) -> Result<f64> {
    let n = spec.n_sites();
    for s in [site_w, site_v] {
        if s >= n {
            return Err(Error::SiteOutOfRange { site: s, n_qubits: n });
        }
    }
    let u = propagator(&build_hamiltonian(spec)?, t)?;
    let u_adj = u.adjoint();
    let dim = (1usize << n) as f64;
    let mut total = 0.0;
    for p in Pauli::ALL {
        let pw = embed_single_site(&p.matrix(), site_w, n)?;
        let pw_t = &(&u_adj * &pw) * &u;
        let pw_t_adj = pw_t.adjoint();
        for q in Pauli::ALL {
            let qv = embed_single_site(&q.matrix(), site_v, n)?;
            let prod = &(&(&pw_t_adj * &qv.adjoint()) * &pw_t) * &qv;
            total += prod.trace().re / dim;
        }
    }
    Ok(total / 16.0)
}

/// Estimator values on an increasing time grid.
#[derive(Clone, Debug, Default)]
pub struct OtocTimeSeries {
    pub times_us: Vec<f64>,
    pub results: Vec<ProtocolResult>,
}

impl OtocTimeSeries {
    pub fn compute(protocol: &Protocol, times_us: &[f64], shots: ShotConfig) -> Result<Self> {
        let results = times_us
            .iter()
            .map(|&t| protocol.estimate(t, shots))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { times_us: times_us.to_vec(), results })
    }

    pub fn noise_params(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.noise_param).collect()
    }
}

/// Decay rates are fitted while the noise parameter stays above this level.
pub const DECAY_FIT_THRESHOLD: f64 = 0.4;

/// Magnitude of the least-squares slope of `N(t)` over the leading points with `N ≥ 0.4`.
pub fn extract_decay_rate(times_us: &[f64], noise: &[f64]) -> Result<f64> {
    if times_us.len() != noise.len() {
        return Err(Error::DimensionMismatch { expected: times_us.len(), got: noise.len() });
    }
    let k = noise.iter().take_while(|&&v| v >= DECAY_FIT_THRESHOLD).count();
    if k < 3 {
        return Err(Error::InsufficientData(format!(
            "{k} leading points with N ≥ {DECAY_FIT_THRESHOLD}; need at least 3"
        )));
    }
    let (x, y) = (&times_us[..k], &noise[..k]);
    let mx = x.iter().sum::<f64>() / k as f64;
    let my = y.iter().sum::<f64>() / k as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all fit times coincide".into()));
    }
    Ok((sxy / sxx).abs())
}

pub fn extract_decay_rate_from_series(series: &OtocTimeSeries) -> Result<f64> {
    extract_decay_rate(&series.times_us, &series.noise_params())
}

//! Imperfection models: noisy EPR pairs, the two-qubit chi-matrix channel applied
//! before the Bell projection, and readout confusion matrices.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{apply_left, apply_right, partial_trace_operator, SiteMap};
use crate::linalg::{hermitian_eig, kron, phi_plus, DensityMatrix, OperatorMatrix, Pauli, ZERO};

/// Basis label written into chi-matrix files.
pub const CHI_BASIS_ORDER: &str = "IXYZ⊗IXYZ";

const CHI_HERMITIAN_TOL: f64 = 1e-9;
const CHI_PSD_TOL: f64 = 1e-9;
const CHI_TP_TOL: f64 = 1e-8;
const STOCHASTIC_TOL: f64 = 1e-9;
const SINGULAR_COND: f64 = 1e12;

/// Where an EPR pair's density matrix comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum EprSource {
    Loaded(DensityMatrix),
    Synthesized { fidelity: f64 },
}

impl EprSource {
    pub fn density(&self) -> Result<DensityMatrix> {
        match self {
            EprSource::Loaded(rho) => {
                if rho.dim() != 4 {
                    return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
                }
                Ok(rho.clone())
            }
            EprSource::Synthesized { fidelity } => synthesize_epr(*fidelity),
        }
    }

    /// Overlap with `|Φ+⟩`.
    pub fn fidelity(&self) -> Result<f64> {
        Ok(self.density()?.fidelity_with_pure(&phi_plus()))
    }
}

/// Werner state `p|Φ+⟩⟨Φ+| + (1-p) I/4` with `⟨Φ+|ρ|Φ+⟩ = f`.
pub fn synthesize_epr(f: f64) -> Result<DensityMatrix> {
    if !(f > 0.25 && f <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "EPR fidelity {f} outside (0.25, 1]"
        )));
    }
    let p = werner_weight(f);
    let pure = phi_plus().projector().scale_real(p);
    let mixed = OperatorMatrix::identity(4).scale_real((1.0 - p) / 4.0);
    Ok(DensityMatrix::from_trusted(&pure + &mixed))
}

/// Singlet weight `p = (4F - 1)/3` of the Werner state with fidelity `F`.
pub fn werner_weight(f: f64) -> f64 {
    (4.0 * f - 1.0) / 3.0
}

/// Two-qubit Pauli product `E_m = P_a ⊗ P_b` with `m = 4a + b`.
pub fn pauli_basis_element(m: usize) -> OperatorMatrix {
    kron(&Pauli::ALL[m / 4].matrix(), &Pauli::ALL[m % 4].matrix())
}

fn pauli_basis() -> Vec<OperatorMatrix> {
    (0..16).map(pauli_basis_element).collect()
}

/// Process matrix of a two-qubit channel in the `{I,X,Y,Z}⊗2` basis,
/// `Φ(ρ) = Σ χ_mn E_m ρ E_n†`.
#[derive(Clone, Debug)]
pub struct ChiMatrix {
    entries: OperatorMatrix,
    kraus: Vec<OperatorMatrix>,
}

impl PartialEq for ChiMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ChiMatrix {
    /// Validates Hermiticity, positivity and trace preservation.
    pub fn new(entries: OperatorMatrix) -> Result<Self> {
        if entries.dim() != 16 {
            return Err(Error::DimensionMismatch { expected: 16, got: entries.dim() });
        }
        let herm = entries.hermiticity_error();
        if herm > CHI_HERMITIAN_TOL {
            return Err(Error::NotCptp(format!(
                "chi not Hermitian (deviation {herm:.3e})"
            )));
        }
        let (vals, vecs) = hermitian_eig(&entries)?;
        if vals[0] < -CHI_PSD_TOL {
            return Err(Error::NotCptp(format!(
                "chi not positive semidefinite (min eigenvalue {:.3e})",
                vals[0]
            )));
        }
        let tp = trace_preservation_error(&choi_of(&entries));
        if tp > CHI_TP_TOL {
            return Err(Error::NotCptp(format!(
                "map not trace preserving (|tr_out J - I| = {tp:.3e})"
            )));
        }
        let basis = pauli_basis();
        let cutoff = 1e-14 * vals.last().copied().unwrap_or(1.0).max(1.0);
        let kraus = vals
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > cutoff)
            .map(|(k, &l)| {
                let mut op = OperatorMatrix::zeros(4);
                for (m, e) in basis.iter().enumerate() {
                    let c = vecs.get(m, k) * l.sqrt();
                    if c != ZERO {
                        op = &op + &e.scale(c);
                    }
                }
                op
            })
            .collect();
        Ok(Self { entries, kraus })
    }

    pub fn identity() -> Self {
        Self::pauli_diagonal(&unit_weight(0)).expect("identity process is CPTP")
    }

    /// Pauli channel with the given probabilities on `E_0..E_15`.
    pub fn pauli_diagonal(weights: &[f64]) -> Result<Self> {
        if weights.len() != 16 {
            return Err(Error::DimensionMismatch { expected: 16, got: weights.len() });
        }
        let diag: Vec<Complex64> = weights.iter().map(|&w| Complex64::new(w, 0.0)).collect();
        Self::new(OperatorMatrix::diagonal(&diag))
    }

    /// Depolarized identity whose average gate fidelity equals `f_avg`.
    pub fn depolarizing(f_avg: f64) -> Result<Self> {
        let d = 4.0;
        let f_pro = ((d + 1.0) * f_avg - 1.0) / d;
        if !(0.0..=1.0).contains(&f_pro) || !f_avg.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "average gate fidelity {f_avg} outside [0.2, 1]"
            )));
        }
        let mut w = [(1.0 - f_pro) / 15.0; 16];
        w[0] = f_pro;
        Self::pauli_diagonal(&w)
    }

    pub fn entries(&self) -> &OperatorMatrix {
        &self.entries
    }

    pub fn kraus_operators(&self) -> &[OperatorMatrix] {
        &self.kraus
    }

    /// Choi matrix `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`, input factor first.
    pub fn choi(&self) -> OperatorMatrix {
        choi_of(&self.entries)
    }

    /// `⟨Φ_d|J|Φ_d⟩ / d²` for the maximally entangled `Φ_d`.
    pub fn process_fidelity(&self) -> f64 {
        self.entries.get(0, 0).re
    }

    pub fn average_gate_fidelity(&self) -> f64 {
        (4.0 * self.process_fidelity() + 1.0) / 5.0
    }
}

fn unit_weight(m: usize) -> [f64; 16] {
    let mut w = [0.0; 16];
    w[m] = 1.0;
    w
}

fn choi_of(chi: &OperatorMatrix) -> OperatorMatrix {
    let basis = pauli_basis();
    let mut out = OperatorMatrix::zeros(16);
    for i in 0..4 {
        for j in 0..4 {
            let mut unit = OperatorMatrix::zeros(4);
            unit.set(i, j, Complex64::new(1.0, 0.0));
            let mut img = OperatorMatrix::zeros(4);
            for m in 0..16 {
                let left = &basis[m] * &unit;
                for n in 0..16 {
                    let c = chi.get(m, n);
                    if c != ZERO {
                        img = &img + &(&left * &basis[n].adjoint()).scale(c);
                    }
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    out.set(4 * i + a, 4 * j + b, img.get(a, b));
                }
            }
        }
    }
    out
}

fn trace_preservation_error(choi: &OperatorMatrix) -> f64 {
    let reduced = partial_trace_operator(choi, &[0, 1], 4).expect("16-dim Choi matrix");
    reduced.max_abs_diff(&OperatorMatrix::identity(4))
}

/// Applies `chi` to `sites = (a, b)` of an `n`-qubit state; `a` carries the first Pauli factor.
pub fn apply_chi_channel(
    rho: &DensityMatrix,
    chi: &ChiMatrix,
    sites: (usize, usize),
    n_qubits: usize,
) -> Result<DensityMatrix> {
    if sites.0 == sites.1 {
        return Err(Error::InvalidSites(format!("chi sites coincide ({})", sites.0)));
    }
    let map = SiteMap::new(&[sites.0, sites.1], n_qubits)?;
    let target = rho.operator();
    let mut out = OperatorMatrix::zeros(target.dim());
    for k in chi.kraus_operators() {
        let left = apply_left(k, &map, target)?;
        out = &out + &apply_right(&left, &k.adjoint(), &map)?;
    }
    Ok(DensityMatrix::from_trusted(out))
}

/// Row-stochastic readout matrix: rows are prepared states, columns measured outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix(DMatrix<f64>);

impl ConfusionMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "confusion matrix size {size} is not a power of two"
            )));
        }
        let mut m = DMatrix::zeros(size, size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::NotSquare { rows: size, cols: row.len() });
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&x) {
                    return Err(Error::InvalidParameter(format!(
                        "confusion entry ({i}, {j}) = {x} outside [0, 1]"
                    )));
                }
                m[(i, j)] = x;
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidParameter(format!(
                    "confusion row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn identity(size: usize) -> Self {
        Self(DMatrix::identity(size, size))
    }

    /// `[[F_gg, 1-F_gg], [1-F_ee, F_ee]]`
    pub fn single_qubit(f_gg: f64, f_ee: f64) -> Result<Self> {
        Self::new(&[vec![f_gg, 1.0 - f_gg], vec![1.0 - f_ee, f_ee]])
    }

    /// Kronecker composition with `self` on the more significant bits.
    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn kron_all<'a>(parts: impl IntoIterator<Item = &'a ConfusionMatrix>) -> Self {
        parts
            .into_iter()
            .fold(Self::identity(1), |acc, m| acc.kron(m))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// 2-norm condition number; infinite when singular.
    pub fn condition_number(&self) -> f64 {
        let sv = self.0.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

fn check_probabilities(p: &[f64], size: usize) -> Result<()> {
    if p.len() != size {
        return Err(Error::DimensionMismatch { expected: size, got: p.len() });
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL || p.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "probability vector sums to {s}, not 1"
        )));
    }
    Ok(())
}

/// `p' = p·M`
pub fn apply_confusion(p: &[f64], m: &ConfusionMatrix) -> Result<Vec<f64>> {
    check_probabilities(p, m.size())?;
    let n = m.size();
    Ok((0..n)
        .map(|j| (0..n).map(|i| p[i] * m.0[(i, j)]).sum())
        .collect())
}

/// `p = p_meas·M⁻¹`, negative entries clipped to zero and the result renormalized.
pub fn bayes_correct(p_meas: &[f64], m: &ConfusionMatrix) -> Result<Vec<f64>> {
    check_probabilities(p_meas, m.size())?;
    let cond = m.condition_number();
    if !(cond < SINGULAR_COND) {
        return Err(Error::Singular(format!(
            "confusion matrix condition number {cond:.3e}"
        )));
    }
    log::debug!("bayes correction with condition number {cond:.3e}");
    let inv = m
        .0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("confusion matrix inverse failed".into()))?;
    let n = m.size();
    let mut p: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| p_meas[i] * inv[(i, j)]).sum::<f64>().max(0.0))
        .collect();
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(Error::Singular("corrected distribution vanished after clipping".into()));
    }
    for x in &mut p {
        *x /= total;
    }
    Ok(p)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ComplexEntries {
    Flat(Vec<[f64; 2]>),
    Rows(Vec<Vec<[f64; 2]>>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComplexMatrixFile {
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis_order: Option<String>,
    entries: ComplexEntries,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfusionFile {
    size: usize,
    entries: Vec<Vec<f64>>,
}

fn parse_complex_matrix(text: &str) -> Result<(OperatorMatrix, Option<String>)> {
    let file: ComplexMatrixFile =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let d = file.dim;
    let flat: Vec<[f64; 2]> = match file.entries {
        ComplexEntries::Flat(v) => v,
        ComplexEntries::Rows(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Format(format!("entries are not a {d}x{d} grid")));
            }
            rows.into_iter().flatten().collect()
        }
    };
    if d == 0 || flat.len() != d * d {
        return Err(Error::Format(format!(
            "dim {d} requires {} entries, found {}",
            d * d,
            flat.len()
        )));
    }
    let m = DMatrix::from_row_iterator(d, d, flat.iter().map(|&[re, im]| Complex64::new(re, im)));
    Ok((OperatorMatrix::new(m)?, file.basis_order))
}

fn complex_matrix_json(m: &OperatorMatrix, basis_order: Option<&str>) -> String {
    let d = m.dim();
    let rows = (0..d)
        .map(|i| (0..d).map(|j| [m.get(i, j).re, m.get(i, j).im]).collect())
        .collect();
    let file = ComplexMatrixFile {
        dim: d,
        basis_order: basis_order.map(str::to_owned),
        entries: ComplexEntries::Rows(rows),
    };
    serde_json::to_string_pretty(&file).expect("matrix serializes")
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn with_path(path: &Path, e: Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn parse_density_matrix(text: &str) -> Result<DensityMatrix> {
    let (m, _) = parse_complex_matrix(text)?;
    DensityMatrix::new(m)
}

pub fn parse_chi_matrix(text: &str) -> Result<ChiMatrix> {
    let (m, order) = parse_complex_matrix(text)?;
    match order.as_deref() {
        Some(CHI_BASIS_ORDER) => {}
        other => {
            return Err(Error::Format(format!(
                "basis_order must be \"{CHI_BASIS_ORDER}\", found {other:?}"
            )))
        }
    }
    ChiMatrix::new(m)
}

pub fn parse_confusion_matrix(text: &str) -> Result<ConfusionMatrix> {
    let file: ConfusionFile =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.entries.len() != file.size {
        return Err(Error::Format(format!(
            "size {} but {} rows",
            file.size,
            file.entries.len()
        )));
    }
    ConfusionMatrix::new(&file.entries)
}

pub fn load_density_matrix(path: &Path) -> Result<DensityMatrix> {
    parse_density_matrix(&read_file(path)?).map_err(|e| with_path(path, e))
}

pub fn load_chi_matrix(path: &Path) -> Result<ChiMatrix> {
    parse_chi_matrix(&read_file(path)?).map_err(|e| with_path(path, e))
}

pub fn load_confusion_matrix(path: &Path) -> Result<ConfusionMatrix> {
    parse_confusion_matrix(&read_file(path)?).map_err(|e| with_path(path, e))
}

pub fn density_matrix_to_json(rho: &DensityMatrix) -> String {
    complex_matrix_json(rho.operator(), None)
}

pub fn chi_matrix_to_json(chi: &ChiMatrix) -> String {
    complex_matrix_json(chi.entries(), Some(CHI_BASIS_ORDER))
}

pub fn confusion_matrix_to_json(m: &ConfusionMatrix) -> String {
    let file = ConfusionFile { size: m.size(), entries: m.rows() };
    serde_json::to_string_pretty(&file).expect("matrix serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::embed;
    use crate::linalg::{bell_basis, pauli, StateVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let d = 1 << n;
        let g = OperatorMatrix::from_fn(d, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let m = &g * &g.adjoint();
        let tr = m.trace().re;
        DensityMatrix::new(m.scale_real(1.0 / tr)).unwrap()
    }

    /// Random CPTP map from normalized random Kraus operators, expressed as chi.
    fn random_chi(rng: &mut ChaCha8Rng) -> OperatorMatrix {
        let ks: Vec<OperatorMatrix> = (0..3)
            .map(|_| OperatorMatrix::from_fn(4, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)))
            .collect();
        let mut s = OperatorMatrix::zeros(4);
        for k in &ks {
            s = &s + &(&k.adjoint() * k);
        }
        let inv_sqrt = crate::linalg::hermitian_function(&s, |l| c(1.0 / l.sqrt(), 0.0)).unwrap();
        let basis = pauli_basis();
        let coeffs: Vec<Vec<Complex64>> = ks
            .iter()
            .map(|k| {
                let kn = k * &inv_sqrt;
                basis.iter().map(|e| e.adjoint().trace_product(&kn) / 4.0).collect()
            })
            .collect();
        OperatorMatrix::from_fn(16, |m, n| coeffs.iter().map(|v| v[m] * v[n].conj()).sum())
    }

    fn brute_force(rho: &OperatorMatrix, chi: &OperatorMatrix, sites: [usize; 2], n: usize) -> OperatorMatrix {
        let basis: Vec<OperatorMatrix> = pauli_basis()
            .iter()
            .map(|e| embed(e, &sites, n).unwrap())
            .collect();
        let mut out = OperatorMatrix::zeros(rho.dim());
        for m in 0..16 {
            for k in 0..16 {
                let z = chi.get(m, k);
                if z != ZERO {
                    out = &out + &(&(&basis[m] * rho) * &basis[k].adjoint()).scale(z);
                }
            }
        }
        out
    }

    #[test]
    fn epr_unit_fidelity_is_pure_bell_state() {
        let rho = synthesize_epr(1.0).unwrap();
        assert!(rho.operator().max_abs_diff(&phi_plus().projector()) < 1e-15);
    }

    #[test]
    fn epr_fidelity_range() {
        assert!(synthesize_epr(0.25).is_err());
        assert!(synthesize_epr(1.0 + 1e-12).is_err());
        assert!(synthesize_epr(f64::NAN).is_err());
    }

    #[test]
    fn epr_target_fidelity_and_spectrum() {
        let rho = synthesize_epr(0.895).unwrap();
        assert!((werner_weight(0.895) - 0.86).abs() < 1e-12);
        assert!((rho.fidelity_with_pure(&phi_plus()) - 0.895).abs() < 1e-12);
        DensityMatrix::new(rho.operator().clone()).unwrap();
        let p = 0.86;
        let ev = rho.eigenvalues();
        let expect = [(1.0 - p) / 4.0, (1.0 - p) / 4.0, (1.0 - p) / 4.0, p + (1.0 - p) / 4.0];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_process_leaves_state_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_state(3, &mut rng);
        let out = apply_chi_channel(&rho, &ChiMatrix::identity(), (2, 0), 3).unwrap();
        assert!(out.operator().max_abs_diff(rho.operator()) < 1e-14);
    }

    #[test]
    fn uniform_pauli_twirl_fully_depolarizes_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_state(3, &mut rng);
        let chi = ChiMatrix::pauli_diagonal(&[1.0 / 16.0; 16]).unwrap();
        let out = apply_chi_channel(&rho, &chi, (0, 2), 3).unwrap();
        let marginal = partial_trace_operator(out.operator(), &[0, 2], 3).unwrap();
        assert!(marginal.max_abs_diff(&OperatorMatrix::identity(4).scale_real(0.25)) < 1e-12);
        let brute = brute_force(rho.operator(), chi.entries(), [0, 2], 3);
        assert!(out.operator().max_abs_diff(&brute) < 1e-12);
    }

    #[test]
    fn single_pauli_weight_acts_on_first_site() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_state(3, &mut rng);
        let chi = ChiMatrix::pauli_diagonal(&unit_weight(4)).unwrap();
        let out = apply_chi_channel(&rho, &chi, (1, 2), 3).unwrap();
        let x = embed(&pauli::sigma_x(), &[1], 3).unwrap();
        let expect = &(&x * rho.operator()) * &x;
        assert!(out.operator().max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn random_chi_matches_brute_force_and_preserves_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let entries = random_chi(&mut rng);
            let chi = ChiMatrix::new(entries.clone()).unwrap();
            let rho = random_state(3, &mut rng);
            let out = apply_chi_channel(&rho, &chi, (2, 1), 3).unwrap();
            let brute = brute_force(rho.operator(), &entries, [2, 1], 3);
            assert!(out.operator().max_abs_diff(&brute) < 1e-12);
            assert!((out.trace() - 1.0).abs() < 1e-9);
            DensityMatrix::with_tolerance(out.into_operator(), 1e-9).unwrap();
        }
    }

    #[test]
    fn chi_channel_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chi = ChiMatrix::new(random_chi(&mut rng)).unwrap();
        let a = random_state(2, &mut rng);
        let b = random_state(2, &mut rng);
        let mix = DensityMatrix::new(&a.operator().scale_real(0.3) + &b.operator().scale_real(0.7)).unwrap();
        let fa = apply_chi_channel(&a, &chi, (0, 1), 2).unwrap();
        let fb = apply_chi_channel(&b, &chi, (0, 1), 2).unwrap();
        let fm = apply_chi_channel(&mix, &chi, (0, 1), 2).unwrap();
        let lin = &fa.operator().scale_real(0.3) + &fb.operator().scale_real(0.7);
        assert!(fm.operator().max_abs_diff(&lin) < 1e-13);
    }

    #[test]
    fn invalid_chi_rejected_with_named_invariant() {
        let mut nonherm = OperatorMatrix::identity(16).scale_real(1.0 / 16.0);
        nonherm.set(0, 1, c(0.1, 0.0));
        let e = ChiMatrix::new(nonherm).unwrap_err().to_string();
        assert!(e.contains("Hermitian"), "{e}");

        let mut w = unit_weight(0);
        w[0] = 1.2;
        w[1] = -0.2;
        let e = ChiMatrix::pauli_diagonal(&w).unwrap_err().to_string();
        assert!(e.contains("positive"), "{e}");

        let e = ChiMatrix::pauli_diagonal(&[0.1; 16]).unwrap_err().to_string();
        assert!(e.contains("trace preserving"), "{e}");

        assert!(apply_chi_channel(&DensityMatrix::maximally_mixed(4), &ChiMatrix::identity(), (1, 1), 2).is_err());
    }

    #[test]
    fn depolarizing_chi_has_requested_average_fidelity() {
        let chi = ChiMatrix::depolarizing(0.98).unwrap();
        // Process fidelity from the Choi state against the ideal maximally entangled state.
        let omega = StateVector::new((0..16).map(|k| if k % 5 == 0 { c(0.5, 0.0) } else { ZERO }).collect()).unwrap();
        let f_pro = omega.expectation(&chi.choi()).re / 4.0;
        let f_avg = (4.0 * f_pro + 1.0) / 5.0;
        assert!((f_avg - 0.98).abs() < 1e-12);
        assert!((chi.average_gate_fidelity() - 0.98).abs() < 1e-12);
        assert!(ChiMatrix::depolarizing(0.1).is_err());
    }

    #[test]
    fn bell_state_is_fixed_point_of_identity_but_not_of_noise() {
        let bell = DensityMatrix::from_pure(&bell_basis()[0]);
        let noisy = apply_chi_channel(&bell, &ChiMatrix::depolarizing(0.9).unwrap(), (0, 1), 2).unwrap();
        let f = noisy.fidelity_with_pure(&bell_basis()[0]);
        // Depolarizing fixes F_pro on the Bell state and spreads the rest uniformly.
        let f_pro = (5.0 * 0.9 - 1.0) / 4.0;
        assert!((f - (f_pro + (1.0 - f_pro) / 15.0 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn confusion_identity_and_doubly_stochastic_fixed_point() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(apply_confusion(&p, &ConfusionMatrix::identity(4)).unwrap(), p.to_vec());
        let m = ConfusionMatrix::new(&[
            vec![0.7, 0.1, 0.1, 0.1],
            vec![0.1, 0.6, 0.2, 0.1],
            vec![0.1, 0.2, 0.5, 0.2],
            vec![0.1, 0.1, 0.2, 0.6],
        ])
        .unwrap();
        let out = apply_confusion(&[0.25; 4], &m).unwrap();
        for x in out {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_qubit_idle_fidelities() {
        let m = ConfusionMatrix::single_qubit(0.927, 0.893).unwrap();
        let out = apply_confusion(&[1.0, 0.0], &m).unwrap();
        assert!((out[0] - 0.927).abs() < 1e-15 && (out[1] - 0.073).abs() < 1e-15);
        let back = bayes_correct(&out, &m).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-12 && back[1].abs() < 1e-12);
    }

    #[test]
    fn kron_composition_is_row_stochastic() {
        let parts = [
            ConfusionMatrix::single_qubit(0.98, 0.95).unwrap(),
            ConfusionMatrix::single_qubit(0.927, 0.893).unwrap(),
            ConfusionMatrix::single_qubit(0.96, 0.91).unwrap(),
        ];
        let m = ConfusionMatrix::kron_all(&parts);
        assert_eq!(m.size(), 8);
        ConfusionMatrix::new(&m.rows()).unwrap();
        // Prepared |101⟩ read out as |101⟩.
        assert!((m.get(5, 5) - 0.95 * 0.927 * 0.91).abs() < 1e-15);
    }

    #[test]
    fn bayes_round_trip_in_simplex_interior() {
        let m = ConfusionMatrix::kron_all(&[
            ConfusionMatrix::single_qubit(0.97, 0.9).unwrap(),
            ConfusionMatrix::single_qubit(0.93, 0.88).unwrap(),
        ]);
        let p = [0.4, 0.1, 0.3, 0.2];
        let back = bayes_correct(&apply_confusion(&p, &m).unwrap(), &m).unwrap();
        for (a, b) in back.iter().zip(p) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn bayes_clips_outside_image() {
        let m = ConfusionMatrix::new(&[vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap();
        // M⁻¹ maps (1, 0) to (3, -2).
        let p = bayes_correct(&[1.0, 0.0], &m).unwrap();
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn confusion_validation() {
        assert!(ConfusionMatrix::new(&[vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(ConfusionMatrix::new(&[vec![1.2, -0.2], vec![0.0, 1.0]]).is_err());
        assert!(ConfusionMatrix::new(&vec![vec![1.0, 0.0, 0.0]; 3]).is_err());
        let singular = ConfusionMatrix::new(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(bayes_correct(&[0.5, 0.5], &singular), Err(Error::Singular(_))));
        assert!(apply_confusion(&[0.5, 0.5, 0.0], &singular).is_err());
        assert!(apply_confusion(&[0.5, 0.6], &singular).is_err());
    }

    #[test]
    fn file_round_trips() {
        let rho = synthesize_epr(0.915).unwrap();
        let back = parse_density_matrix(&density_matrix_to_json(&rho)).unwrap();
        assert!(back.operator().max_abs_diff(rho.operator()) < 1e-15);

        let chi = ChiMatrix::depolarizing(0.97).unwrap();
        let back = parse_chi_matrix(&chi_matrix_to_json(&chi)).unwrap();
        assert!(back.entries().max_abs_diff(chi.entries()) < 1e-15);

        let m = ConfusionMatrix::single_qubit(0.9, 0.8).unwrap();
        assert_eq!(parse_confusion_matrix(&confusion_matrix_to_json(&m)).unwrap(), m);
    }

    #[test]
    fn flat_row_major_entries_accepted() {
        let text = r#"{"dim": 2, "entries": [[0.5, 0], [0, 0.5], [0, -0.5], [0.5, 0]]}"#;
        let rho = parse_density_matrix(text).unwrap();
        assert_eq!(rho.operator().get(0, 1), c(0.0, 0.5));
        assert_eq!(rho.operator().get(1, 0), c(0.0, -0.5));
    }

    #[test]
    fn loaders_name_the_failed_invariant() {
        let e = parse_density_matrix(r#"{"dim": 2, "entries": [[1,0],[0,0],[0,0],[1,0]]}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("trace"), "{e}");
        let e = parse_density_matrix(r#"{"dim": 2, "entries": [[1,0],[0,0],[0,0]]}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("requires 4 entries"), "{e}");
        let mut chi_text = chi_matrix_to_json(&ChiMatrix::identity());
        chi_text = chi_text.replace(CHI_BASIS_ORDER, "IXYZ");
        let e = parse_chi_matrix(&chi_text).unwrap_err().to_string();
        assert!(e.contains("basis_order"), "{e}");
        let e = parse_confusion_matrix(r#"{"size": 2, "entries": [[0.9, 0.2], [0, 1]]}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("sums to"), "{e}");
        let e = load_density_matrix(Path::new("/nonexistent/rho.json")).unwrap_err();
        assert!(matches!(e, Error::Io(_)));
    }
}

//! Spin-chain Hamiltonian specifications and builders.
//!
//! All spec values are linear frequencies in MHz (the `·/2π` values of a
//! parameter table). The `2π` is applied only inside [`build_hamiltonian`], so
//! built matrices are in rad/µs and times are in µs.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{embed, embed_single_site, kron, pauli, OperatorMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingScheme {
    /// `Σ (Δ σz + Ω σx) + Σ J σz σz`
    Zz,
    /// `Σ (J/2)(σx σx + σy σy)`
    Xy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub scheme: CouplingScheme,
    pub detunings_mhz: Vec<f64>,
    pub drives_mhz: Vec<f64>,
    pub couplings_mhz: Vec<f64>,
}

impl HamiltonianSpec {
    pub fn new(
        scheme: CouplingScheme,
        detunings_mhz: Vec<f64>,
        drives_mhz: Vec<f64>,
        couplings_mhz: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self { scheme, detunings_mhz, drives_mhz, couplings_mhz };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zz(detunings_mhz: Vec<f64>, drives_mhz: Vec<f64>, couplings_mhz: Vec<f64>) -> Result<Self> {
        Self::new(CouplingScheme::Zz, detunings_mhz, drives_mhz, couplings_mhz)
    }

    pub fn xy(couplings_mhz: Vec<f64>) -> Result<Self> {
        let n = couplings_mhz.len() + 1;
        Self::new(CouplingScheme::Xy, vec![0.0; n], vec![0.0; n], couplings_mhz)
    }

    pub fn n_sites(&self) -> usize {
        self.detunings_mhz.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.detunings_mhz.len();
        if n == 0 {
            return Err(Error::InvalidParameter("spec has no sites".into()));
        }
        if self.drives_mhz.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.drives_mhz.len() });
        }
        if self.couplings_mhz.len() != n - 1 {
            return Err(Error::DimensionMismatch { expected: n - 1, got: self.couplings_mhz.len() });
        }
        let all = self.detunings_mhz.iter().chain(&self.drives_mhz).chain(&self.couplings_mhz);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Hamiltonian coefficient".into()));
        }
        if self.scheme == CouplingScheme::Xy
            && self.detunings_mhz.iter().chain(&self.drives_mhz).any(|&v| v != 0.0)
        {
            return Err(Error::InvalidParameter(
                "the XY scheme carries couplings only; detunings and drives must be zero".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform additive mismatch applied to the backward subsystem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MismatchSpec {
    pub d_omega_mhz: f64,
    pub d_j_mhz: f64,
}

impl MismatchSpec {
    pub fn drive(d_omega_mhz: f64) -> Self {
        Self { d_omega_mhz, d_j_mhz: 0.0 }
    }

    pub fn coupling(d_j_mhz: f64) -> Self {
        Self { d_omega_mhz: 0.0, d_j_mhz }
    }

    pub fn is_zero(&self) -> bool {
        self.d_omega_mhz == 0.0 && self.d_j_mhz == 0.0
    }
}

/// Builds the Hamiltonian matrix (rad/µs) for `spec` on `n_sites` qubits.
pub fn build_hamiltonian(spec: &HamiltonianSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    let n = spec.n_sites();
    let dim = 1usize << n;
    let mut h = OperatorMatrix::zeros(dim);
    match spec.scheme {
        CouplingScheme::Zz => {
            let z = pauli::sigma_z();
            let x = pauli::sigma_x();
            let zz = kron(&z, &z);
            for i in 0..n {
                if spec.detunings_mhz[i] != 0.0 {
                    h = &h + &embed_single_site(&z, i, n)?.scale_real(TAU * spec.detunings_mhz[i]);
                }
                if spec.drives_mhz[i] != 0.0 {
                    h = &h + &embed_single_site(&x, i, n)?.scale_real(TAU * spec.drives_mhz[i]);
                }
            }
            for (i, &j) in spec.couplings_mhz.iter().enumerate() {
                if j != 0.0 {
                    h = &h + &embed(&zz, &[i, i + 1], n)?.scale_real(TAU * j);
                }
            }
        }
        CouplingScheme::Xy => {
            let x = pauli::sigma_x();
            let y = pauli::sigma_y();
            let hop = &kron(&x, &x) + &kron(&y, &y);
            for (i, &j) in spec.couplings_mhz.iter().enumerate() {
                if j != 0.0 {
                    h = &h + &embed(&hop, &[i, i + 1], n)?.scale_real(TAU * j / 2.0);
                }
            }
        }
    }
    Ok(h)
}

/// Negates every coefficient. All built Hamiltonians are real, so this realizes `−H*`.
pub fn opposite_spec(spec: &HamiltonianSpec) -> HamiltonianSpec {
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    HamiltonianSpec {
        scheme: spec.scheme,
        detunings_mhz: neg(&spec.detunings_mhz),
        drives_mhz: neg(&spec.drives_mhz),
        couplings_mhz: neg(&spec.couplings_mhz),
    }
}

fn widen(v: f64, by: f64) -> f64 {
    if v == 0.0 {
        v
    } else {
        v + by * v.signum()
    }
}

/// Sign-preserving magnitude shift of every nonzero drive by `ΔΩ` and, for the
/// XY scheme, of every nonzero coupling by `ΔJ`.
pub fn apply_mismatch(spec: &HamiltonianSpec, m: &MismatchSpec) -> HamiltonianSpec {
    let mut out = spec.clone();
    for w in &mut out.drives_mhz {
        *w = widen(*w, m.d_omega_mhz);
    }
    if spec.scheme == CouplingScheme::Xy {
        for j in &mut out.couplings_mhz {
            *j = widen(*j, m.d_j_mhz);
        }
    }
    out
}

/// Spec obtained by swapping the labels `|0⟩ ↔ |1⟩` on one site.
///
/// The hardware realizes a coupling sign flip this way; the simulator sets signs
/// directly and never calls this on the protocol path.
pub fn relabel_site(spec: &HamiltonianSpec, site: usize) -> Result<HamiltonianSpec> {
    let n = spec.n_sites();
    if site >= n {
        return Err(Error::SiteOutOfRange { site, n_qubits: n });
    }
    let mut out = spec.clone();
    if spec.scheme == CouplingScheme::Zz {
        out.detunings_mhz[site] = -out.detunings_mhz[site];
        if site > 0 {
            out.couplings_mhz[site - 1] = -out.couplings_mhz[site - 1];
        }
        if site + 1 < n {
            out.couplings_mhz[site] = -out.couplings_mhz[site];
        }
        Ok(out)
    } else {
        // X σ± X = σ∓ turns the hopping term into a pairing term, not a sign flip.
        Err(Error::InvalidParameter("basis relabeling only maps ZZ specs onto ZZ specs".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn single_site_drive() {
        let spec = HamiltonianSpec::zz(vec![0.0], vec![0.5], vec![]).unwrap();
        let h = build_hamiltonian(&spec).unwrap();
        assert_abs_diff_eq!(h.get(0, 1).re, PI, epsilon = 1e-15);
        assert_abs_diff_eq!(h.get(1, 0).re, PI, epsilon = 1e-15);
        assert_eq!(h.get(0, 0).norm(), 0.0);
        assert_eq!(h.get(1, 1).norm(), 0.0);
    }

    #[test]
    fn two_site_zz_coupling_is_diagonal() {
        let spec = HamiltonianSpec::zz(vec![0.0; 2], vec![0.0; 2], vec![0.42]).unwrap();
        let h = build_hamiltonian(&spec).unwrap();
        let j = TAU * 0.42;
        for (k, s) in [1.0, -1.0, -1.0, 1.0].iter().enumerate() {
            assert_abs_diff_eq!(h.get(k, k).re, s * j, epsilon = 1e-14);
        }
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    assert_eq!(h.get(r, c).norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn xy_coupling_only_hops_single_excitations() {
        let spec = HamiltonianSpec::xy(vec![3.7]).unwrap();
        let h = build_hamiltonian(&spec).unwrap();
        let j = TAU * 3.7;
        for r in 0..4 {
            for c in 0..4 {
                let expected = if (r, c) == (1, 2) || (r, c) == (2, 1) { j } else { 0.0 };
                assert_abs_diff_eq!(h.get(r, c).re, expected, epsilon = 1e-13);
                assert_abs_diff_eq!(h.get(r, c).im, 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(HamiltonianSpec::zz(vec![0.0; 2], vec![0.0; 3], vec![0.1]).is_err());
        assert!(HamiltonianSpec::zz(vec![0.0; 2], vec![0.0; 2], vec![]).is_err());
        assert!(HamiltonianSpec::new(CouplingScheme::Xy, vec![0.1, 0.0], vec![0.0; 2], vec![1.0]).is_err());
    }

    #[test]
    fn opposite_of_seven_qubit_row() {
        let spec = HamiltonianSpec::zz(vec![0.2], vec![0.6], vec![]).unwrap();
        let mut spec2 = spec.clone();
        spec2.detunings_mhz = vec![0.2, 0.2];
        spec2.drives_mhz = vec![0.6, 0.6];
        spec2.couplings_mhz = vec![0.21];
        let opp = opposite_spec(&spec2);
        assert_eq!(opp.detunings_mhz, vec![-0.2, -0.2]);
        assert_eq!(opp.drives_mhz, vec![-0.6, -0.6]);
        assert_eq!(opp.couplings_mhz, vec![-0.21]);
        assert_eq!(opposite_spec(&opp), spec2);
        assert_eq!(opposite_spec(&opposite_spec(&spec)), spec);
    }

    #[test]
    fn mismatch_examples() {
        let spec = HamiltonianSpec::zz(vec![-0.2], vec![-0.6], vec![]).unwrap();
        assert_eq!(apply_mismatch(&spec, &MismatchSpec::default()), spec);
        let shifted = apply_mismatch(&spec, &MismatchSpec::drive(0.2));
        assert_abs_diff_eq!(shifted.drives_mhz[0], -0.8, epsilon = 1e-15);

        let xy = HamiltonianSpec::xy(vec![-3.7, 0.0]).unwrap();
        let shifted = apply_mismatch(&xy, &MismatchSpec::coupling(0.3));
        assert_abs_diff_eq!(shifted.couplings_mhz[0], -4.0, epsilon = 1e-15);
        assert_eq!(shifted.couplings_mhz[1], 0.0);

        // ΔJ is ignored in the ZZ scheme
        let zz = HamiltonianSpec::zz(vec![0.0; 2], vec![0.5; 2], vec![0.42]).unwrap();
        assert_eq!(apply_mismatch(&zz, &MismatchSpec::coupling(0.3)).couplings_mhz, vec![0.42]);
    }

    #[test]
    fn zz_without_fields_is_diagonal() {
        let spec = HamiltonianSpec::zz(vec![0.0; 3], vec![0.0; 3], vec![0.3, -0.7]).unwrap();
        let h = build_hamiltonian(&spec).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                if r != c {
                    assert_eq!(h.get(r, c).norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn relabeling_matches_x_conjugation() {
        let spec = HamiltonianSpec::zz(vec![0.2, 0.3, -0.1], vec![0.6, 0.1, 0.4], vec![0.21, -0.5]).unwrap();
        let flipped = relabel_site(&spec, 1).unwrap();
        let x1 = embed_single_site(&pauli::sigma_x(), 1, 3).unwrap();
        let conj = &(&x1 * &build_hamiltonian(&spec).unwrap()) * &x1;
        assert!(conj.max_abs_diff(&build_hamiltonian(&flipped).unwrap()) < 1e-13);
        assert!(relabel_site(&HamiltonianSpec::xy(vec![1.0]).unwrap(), 0).is_err());
    }

    fn spec_strategy() -> impl Strategy<Value = HamiltonianSpec> {
        (1usize..4, any::<bool>()).prop_flat_map(|(n, xy)| {
            (
                proptest::collection::vec(-2.0f64..2.0, n),
                proptest::collection::vec(-2.0f64..2.0, n),
                proptest::collection::vec(-2.0f64..2.0, n - 1),
            )
                .prop_map(move |(d, o, j)| {
                    if xy {
                        HamiltonianSpec::xy(j).unwrap()
                    } else {
                        HamiltonianSpec::zz(d, o, j).unwrap()
                    }
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn opposite_builds_negated_conjugate(spec in spec_strategy()) {
            let h = build_hamiltonian(&spec).unwrap();
            let h_opp = build_hamiltonian(&opposite_spec(&spec)).unwrap();
            prop_assert!(h_opp.max_abs_diff(&(-&h.conjugate())) <= 1e-12);
        }

        #[test]
        fn built_hamiltonians_are_real_and_hermitian(spec in spec_strategy()) {
            let h = build_hamiltonian(&spec).unwrap();
            prop_assert!(h.hermiticity_error() <= 1e-12);
            let d = h.dim();
            for r in 0..d {
                for c in 0..d {
                    prop_assert!(h.get(r, c).im.abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn build_is_linear_in_coupling(j in proptest::collection::vec(-2.0f64..2.0, 1..3)) {
            let n = j.len() + 1;
            let one = HamiltonianSpec::zz(vec![0.0; n], vec![0.0; n], j.clone()).unwrap();
            let two = HamiltonianSpec::zz(vec![0.0; n], vec![0.0; n], j.iter().map(|x| 2.0 * x).collect()).unwrap();
            let h1 = build_hamiltonian(&one).unwrap();
            let h2 = build_hamiltonian(&two).unwrap();
            prop_assert!(h2.max_abs_diff(&h1.scale_real(2.0)) <= 1e-12);
        }
    }
}

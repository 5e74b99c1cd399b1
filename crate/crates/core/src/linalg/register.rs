//! Index bookkeeping for operators acting on a subset of register sites.

use num_complex::Complex64;

use super::{DensityMatrix, OperatorMatrix, ZERO};
use crate::error::{Error, Result};

/// Precomputed index offsets for a list of sites inside an `n`-qubit register.
///
/// Sub-index `a` of a `k`-site operator has its bit `k-1-j` placed on `sites[j]`,
/// so `sites[0]` is the slow index of the local operator.
#[derive(Clone, Debug)]
pub struct SiteMap {
    n_qubits: usize,
    sites: Vec<usize>,
    offsets: Vec<usize>,
    mask: usize,
}

impl SiteMap {
    pub fn new(sites: &[usize], n_qubits: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidSites("empty site list".into()));
        }
        let mut mask = 0usize;
        for &s in sites {
            if s >= n_qubits {
                return Err(Error::SiteOutOfRange { site: s, n_qubits });
            }
            let bit = 1usize << (n_qubits - 1 - s);
            if mask & bit != 0 {
                return Err(Error::InvalidSites(format!("site {s} listed twice")));
            }
            mask |= bit;
        }
        let k = sites.len();
        let offsets = (0..1usize << k)
            .map(|a| {
                sites.iter().enumerate().fold(0usize, |acc, (j, &s)| {
                    let b = (a >> (k - 1 - j)) & 1;
                    acc | (b << (n_qubits - 1 - s))
                })
            })
            .collect();
        Ok(Self { n_qubits, sites: sites.to_vec(), offsets, mask })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn local_dim(&self) -> usize {
        self.offsets.len()
    }

    /// Register indices whose bits on the mapped sites are all zero.
    fn bases(&self) -> impl Iterator<Item = usize> + '_ {
        (0..1usize << self.n_qubits).filter(move |x| x & self.mask == 0)
    }

    fn check_local(&self, op: &OperatorMatrix) -> Result<()> {
        if op.dim() != self.local_dim() {
            return Err(Error::DimensionMismatch { expected: self.local_dim(), got: op.dim() });
        }
        Ok(())
    }

    fn check_full(&self, m: &OperatorMatrix) -> Result<()> {
        let d = 1usize << self.n_qubits;
        if m.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
        }
        Ok(())
    }
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` (2×2) on `site`.
pub fn embed_single_site(op: &OperatorMatrix, site: usize, n_qubits: usize) -> Result<OperatorMatrix> {
    if op.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: op.dim() });
    }
    embed(op, &[site], n_qubits)
}

/// Embeds a `2^k`-dimensional operator on the listed sites of an `n`-qubit register.
pub fn embed(op: &OperatorMatrix, sites: &[usize], n_qubits: usize) -> Result<OperatorMatrix> {
    let map = SiteMap::new(sites, n_qubits)?;
    map.check_local(op)?;
    let d = 1usize << n_qubits;
    let mut out = OperatorMatrix::zeros(d);
    let ld = map.local_dim();
    for base in map.bases() {
        for a in 0..ld {
            for b in 0..ld {
                let z = op.get(a, b);
                if z != ZERO {
                    out.set(base | map.offsets[a], base | map.offsets[b], z);
                }
            }
        }
    }
    Ok(out)
}

/// Computes `embed(op, sites) · target` without forming the embedded operator.
pub fn apply_left(op: &OperatorMatrix, map: &SiteMap, target: &OperatorMatrix) -> Result<OperatorMatrix> {
    map.check_local(op)?;
    map.check_full(target)?;
    let d = target.dim();
    let ld = map.local_dim();
    let mut out = OperatorMatrix::zeros(d);
    let mut buf = vec![ZERO; ld];
    for base in map.bases() {
        for col in 0..d {
            for (a, slot) in buf.iter_mut().enumerate() {
                *slot = target.get(base | map.offsets[a], col);
            }
            for a in 0..ld {
                let mut acc = ZERO;
                for (b, v) in buf.iter().enumerate() {
                    acc += op.get(a, b) * v;
                }
                out.set(base | map.offsets[a], col, acc);
            }
        }
    }
    Ok(out)
}

/// Computes `target · embed(op, sites)` without forming the embedded operator.
pub fn apply_right(target: &OperatorMatrix, op: &OperatorMatrix, map: &SiteMap) -> Result<OperatorMatrix> {
    map.check_local(op)?;
    map.check_full(target)?;
    let d = target.dim();
    let ld = map.local_dim();
    let mut out = OperatorMatrix::zeros(d);
    let mut buf = vec![ZERO; ld];
    for base in map.bases() {
        for row in 0..d {
            for (a, slot) in buf.iter_mut().enumerate() {
                *slot = target.get(row, base | map.offsets[a]);
            }
            for b in 0..ld {
                let mut acc = ZERO;
                for (a, v) in buf.iter().enumerate() {
                    acc += v * op.get(a, b);
                }
                out.set(row, base | map.offsets[b], acc);
            }
        }
    }
    Ok(out)
}

/// Applies a superoperator on the mapped subsystem.
///
/// `superop` acts on row-major vectorized local matrices: the local entry
/// `(a, b)` sits at index `a·D + b`, `D = 2^k`.
pub fn apply_superop(
    superop: &OperatorMatrix,
    map: &SiteMap,
    target: &OperatorMatrix,
) -> Result<OperatorMatrix> {
    map.check_full(target)?;
    let ld = map.local_dim();
    if superop.dim() != ld * ld {
        return Err(Error::DimensionMismatch { expected: ld * ld, got: superop.dim() });
    }
    let d = target.dim();
    let bases: Vec<usize> = map.bases().collect();
    let mut out = OperatorMatrix::zeros(d);
    let mut buf = vec![ZERO; ld * ld];
    let s = superop.as_matrix();
    for &r in &bases {
        for &c in &bases {
            for a in 0..ld {
                for b in 0..ld {
                    buf[a * ld + b] = target.get(r | map.offsets[a], c | map.offsets[b]);
                }
            }
            for a in 0..ld {
                for b in 0..ld {
                    let row = a * ld + b;
                    let mut acc = ZERO;
                    for (k, v) in buf.iter().enumerate() {
                        acc += s[(row, k)] * v;
                    }
                    out.set(r | map.offsets[a], c | map.offsets[b], acc);
                }
            }
        }
    }
    Ok(out)
}

/// Traces out every site not in `keep`; the kept sites appear in ascending order.
pub fn partial_trace_operator(
    m: &OperatorMatrix,
    keep: &[usize],
    n_qubits: usize,
) -> Result<OperatorMatrix> {
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    let map = SiteMap::new(&keep, n_qubits)?;
    map.check_full(m)?;
    let ld = map.local_dim();
    let mut out = OperatorMatrix::zeros(ld);
    for base in map.bases() {
        for a in 0..ld {
            for b in 0..ld {
                let z = out.get(a, b) + m.get(base | map.offsets[a], base | map.offsets[b]);
                out.set(a, b, z);
            }
        }
    }
    Ok(out)
}

pub fn partial_trace(rho: &DensityMatrix, keep: &[usize], n_qubits: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_trusted(partial_trace_operator(rho.operator(), keep, n_qubits)?))
}

/// Tensor product of factors placed on disjoint site lists covering the register.
pub fn place_factors(factors: &[(&OperatorMatrix, &[usize])], n_qubits: usize) -> Result<OperatorMatrix> {
    let maps = factors
        .iter()
        .map(|(op, sites)| {
            let m = SiteMap::new(sites, n_qubits)?;
            m.check_local(op)?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut covered = 0usize;
    for m in &maps {
        if covered & m.mask != 0 {
            return Err(Error::InvalidSites("factor site lists overlap".into()));
        }
        covered |= m.mask;
    }
    let d = 1usize << n_qubits;
    if covered != d - 1 {
        return Err(Error::InvalidSites("factors do not cover every site".into()));
    }
    // Inverse of each map: register index → local index.
    let local_index = |m: &SiteMap, x: usize| -> usize {
        m.sites.iter().fold(0usize, |acc, &s| (acc << 1) | ((x >> (n_qubits - 1 - s)) & 1))
    };
    let mut out = OperatorMatrix::zeros(d);
    for r in 0..d {
        for c in 0..d {
            let mut z = Complex64::new(1.0, 0.0);
            for ((op, _), m) in factors.iter().zip(&maps) {
                z *= op.get(local_index(m, r), local_index(m, c));
                if z == ZERO {
                    break;
                }
            }
            out.set(r, c, z);
        }
    }
    Ok(out)
}

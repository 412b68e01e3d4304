use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;

use super::mixed::MixedState;
use super::registry::ModeId;
use super::state::PureState;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Default bound on the dimension of a kept subspace.
pub const DEFAULT_SUBSPACE_BOUND: usize = 64;

/// Dense density matrix over the occupation patterns of a set of kept modes
/// that appear in the state's support.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    modes: Vec<ModeId>,
    basis: Vec<Vec<u8>>,
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    /// Kept-mode occupation patterns labelling rows and columns.
    pub fn basis(&self) -> &[Vec<u8>] {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, pattern: &[u8]) -> Option<usize> {
        self.basis.binary_search_by(|b| b.as_slice().cmp(pattern)).ok()
    }

    /// ⟨row|ρ|col⟩, zero for patterns outside the support.
    pub fn element(&self, row: &[u8], col: &[u8]) -> Complex64 {
        match (self.index_of(row), self.index_of(col)) {
            (Some(i), Some(j)) => self.matrix[(i, j)],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// The block of ρ on the listed patterns, in the given order.
    pub fn restrict(&self, patterns: &[Vec<u8>]) -> CMatrix {
        let rows: Vec<Vec<Complex64>> = patterns
            .iter()
            .map(|r| patterns.iter().map(|c| self.element(r, c)).collect())
            .collect();
        CMatrix::from_rows(&rows)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix.eigvalsh()
    }
}

fn accumulate(
    state: &PureState,
    keep_idx: &[usize],
    weight: f64,
    acc: &mut BTreeMap<(Vec<u8>, Vec<u8>), Complex64>,
    support: &mut BTreeSet<Vec<u8>>,
) {
    let norm = state.norm_sqr();
    if norm <= 0.0 {
        return;
    }
    let scale = weight / norm;
    let mut groups: BTreeMap<Vec<u8>, Vec<(Vec<u8>, Complex64)>> = BTreeMap::new();
    for (b, c) in state.terms() {
        let occ = b.occupations();
        let kept: Vec<u8> = keep_idx.iter().map(|&i| occ[i]).collect();
        let rest: Vec<u8> =
            occ.iter().enumerate().filter(|(i, _)| !keep_idx.contains(i)).map(|(_, &n)| n).collect();
        support.insert(kept.clone());
        groups.entry(rest).or_default().push((kept, *c));
    }
    for vec in groups.values() {
        for (ki, ci) in vec {
            for (kj, cj) in vec {
                *acc.entry((ki.clone(), kj.clone())).or_insert(Complex64::new(0.0, 0.0)) +=
                    ci * cj.conj() * scale;
            }
        }
    }
}

fn assemble(
    modes: Vec<ModeId>,
    acc: BTreeMap<(Vec<u8>, Vec<u8>), Complex64>,
    support: BTreeSet<Vec<u8>>,
    bound: usize,
) -> Result<DensityMatrix> {
    if support.len() > bound {
        return Err(Error::SubspaceTooLarge { dim: support.len(), bound });
    }
    let basis: Vec<Vec<u8>> = support.into_iter().collect();
    let mut matrix = CMatrix::zeros(basis.len());
    let pos = |p: &Vec<u8>| basis.binary_search(p).expect("pattern in support");
    for ((r, c), v) in acc {
        matrix[(pos(&r), pos(&c))] = v;
    }
    Ok(DensityMatrix { modes, basis, matrix })
}

fn keep_indices(state: &PureState, keep: &[&str]) -> Result<(Vec<usize>, Vec<ModeId>)> {
    let reg = state.registry();
    let idx: Vec<usize> = keep.iter().map(|m| reg.index_of(m)).collect::<Result<_>>()?;
    let modes = idx.iter().map(|&i| reg.modes()[i].clone()).collect();
    Ok((idx, modes))
}

/// Reduced density matrix of a (normalized on the fly) pure state.
pub fn reduced_density(state: &PureState, keep: &[&str], bound: usize) -> Result<DensityMatrix> {
    let (idx, modes) = keep_indices(state, keep)?;
    let mut acc = BTreeMap::new();
    let mut support = BTreeSet::new();
    accumulate(state, &idx, 1.0, &mut acc, &mut support);
    assemble(modes, acc, support, bound)
}

/// Reduced density matrix of a weighted ensemble.
pub fn reduced_density_mixed(
    state: &MixedState,
    keep: &[&str],
    bound: usize,
) -> Result<DensityMatrix> {
    let first = &state.branches()[0].1;
    let (idx, modes) = keep_indices(first, keep)?;
    let mut acc = BTreeMap::new();
    let mut support = BTreeSet::new();
    for (w, s) in state.branches() {
        accumulate(s, &idx, *w, &mut acc, &mut support);
    }
    assemble(modes, acc, support, bound)
}

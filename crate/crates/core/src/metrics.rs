//! Entanglement and distance measures: von Neumann entropy, Wootters
//! concurrence, purity and fidelity against logical qubit encodings.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{reduced_density_mixed, MixedState, OccupationPattern, PureState, DEFAULT_SUBSPACE_BOUND};
use crate::fock::reduced_density;
use crate::linalg::CMatrix;

const DENSITY_TOLERANCE: f64 = 1e-10;

/// A logical qubit carried by two orthogonal occupation patterns over a set
/// of modes, e.g. {|S₁⟩, |S₂⟩} or {|H⟩, |V⟩}.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitEncoding {
    modes: Vec<String>,
    basis0: Vec<u8>,
    basis1: Vec<u8>,
}

impl QubitEncoding {
    pub fn new(basis0: &OccupationPattern, basis1: &OccupationPattern) -> Result<Self> {
        let mut modes: Vec<String> = Vec::new();
        for (m, _) in basis0.entries().iter().chain(basis1.entries()) {
            if !modes.contains(m) {
                modes.push(m.clone());
            }
        }
        let lookup = |p: &OccupationPattern| -> Vec<u8> {
            modes
                .iter()
                .map(|m| p.entries().iter().find(|(n, _)| n == m).map(|(_, k)| *k).unwrap_or(0))
                .collect()
        };
        let (b0, b1) = (lookup(basis0), lookup(basis1));
        if b0 == b1 {
            return Err(Error::NotQubit("basis patterns coincide".into()));
        }
        Ok(QubitEncoding { modes, basis0: b0, basis1: b1 })
    }

    /// One excitation shared between two modes: |1,0⟩ ↦ |0⟩, |0,1⟩ ↦ |1⟩.
    pub fn dual_rail(mode0: &str, mode1: &str) -> Self {
        QubitEncoding {
            modes: vec![mode0.to_string(), mode1.to_string()],
            basis0: vec![1, 0],
            basis1: vec![0, 1],
        }
    }

    pub fn modes(&self) -> Vec<&str> {
        self.modes.iter().map(String::as_str).collect()
    }

    pub fn basis(&self, bit: usize) -> &[u8] {
        if bit == 0 { &self.basis0 } else { &self.basis1 }
    }

    /// Logical state `a|0⟩ + b|1⟩` as a Fock state on `like`'s registry.
    pub fn encode(&self, like: &PureState, a: Complex64, b: Complex64) -> Result<PureState> {
        let names = self.modes();
        let term = |occ: &[u8]| names.iter().copied().zip(occ.iter().copied()).collect::<Vec<_>>();
        PureState::from_terms(like.registry().clone(), [(term(&self.basis0), a), (term(&self.basis1), b)])
    }
}

/// Logical 2×2 density matrix of `state` on `enc`, together with the weight
/// found outside the qubit sector.
pub fn logical_density(state: &MixedState, enc: &QubitEncoding) -> Result<(CMatrix, f64)> {
    let rho = reduced_density_mixed(state, &enc.modes(), DEFAULT_SUBSPACE_BOUND)?;
    let block = rho.restrict(&[enc.basis0.clone(), enc.basis1.clone()]);
    let leak = 1.0 - block.trace().re;
    Ok((block, leak))
}

/// Two-qubit 4×4 density matrix in the order |00⟩, |01⟩, |10⟩, |11⟩. Fails
/// if more than 1e-9 of the weight lies outside the two-qubit sector.
pub fn two_qubit_density(state: &MixedState, a: &QubitEncoding, b: &QubitEncoding) -> Result<CMatrix> {
    let mut keep = a.modes();
    keep.extend(b.modes());
    let rho = reduced_density_mixed(state, &keep, DEFAULT_SUBSPACE_BOUND)?;
    let pattern = |x: usize, y: usize| -> Vec<u8> {
        let mut p = a.basis(x).to_vec();
        p.extend_from_slice(b.basis(y));
        p
    };
    let block = rho.restrict(&[pattern(0, 0), pattern(0, 1), pattern(1, 0), pattern(1, 1)]);
    let leak = 1.0 - block.trace().re;
    if leak.abs() > 1e-9 {
        return Err(Error::OutOfSector(format!("{leak:.3e} of the weight is outside the two-qubit sector")));
    }
    Ok(block)
}

fn validate_density(rho: &CMatrix) -> Result<Vec<f64>> {
    if rho.hermiticity_defect() > DENSITY_TOLERANCE {
        return Err(Error::InvalidDensity("not Hermitian".into()));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > DENSITY_TOLERANCE || tr.im.abs() > DENSITY_TOLERANCE {
        return Err(Error::InvalidDensity(format!("trace {tr}")));
    }
    let ev = rho.eigvalsh();
    if ev[0] < -DENSITY_TOLERANCE {
        return Err(Error::InvalidDensity(format!("negative eigenvalue {}", ev[0])));
    }
    Ok(ev)
}

/// −Σ λ log₂ λ with 0·log 0 ≡ 0.
pub fn entropy_of_spectrum(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.log2()).sum::<f64>().max(0.0)
}

pub fn von_neumann_entropy(rho: &CMatrix) -> Result<f64> {
    Ok(entropy_of_spectrum(&validate_density(rho)?))
}

/// Entanglement entropy (ebits) of a pure state across the cut between
/// `partition` and the remaining modes.
pub fn entropy(state: &PureState, partition: &[&str]) -> Result<f64> {
    let rho = reduced_density(state, partition, DEFAULT_SUBSPACE_BOUND)?;
    Ok(entropy_of_spectrum(&rho.eigenvalues()))
}

/// Entanglement entropy of a one-branch ensemble; mixed input is rejected.
pub fn entropy_mixed(state: &MixedState, partition: &[&str]) -> Result<f64> {
    match state.as_pure(1e-12) {
        Some(p) => entropy(&p, partition),
        None => Err(Error::InvalidDensity("entropy of entanglement needs a pure state".into())),
    }
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn concurrence(rho: &CMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::InvalidDensity(format!("expected 4×4, got {}×{}", rho.dim(), rho.dim())));
    }
    validate_density(rho)?;
    // Wootters' construction: with ρ = Σ p_k |v_k⟩⟨v_k| and w_k = √p_k v_k,
    // the λ_i are the singular values of τ_ij = w_iᵀ (σy⊗σy) w_j. They are
    // read off the Hermitian dilation [[0, τ], [τ†, 0]] so that rounding
    // noise in null eigenvalues enters only at second order.
    let eig = rho.eigh();
    let w: Vec<Vec<Complex64>> = (0..4)
        .map(|k| {
            let s = eig.values[k].max(0.0).sqrt();
            (0..4).map(|row| eig.vectors[(row, k)] * s).collect()
        })
        .collect();
    let yy = |v: &[Complex64]| [-v[3], v[2], v[1], -v[0]];
    let mut dilation = CMatrix::zeros(8);
    for i in 0..4 {
        for j in 0..4 {
            let yj = yy(&w[j]);
            let tau: Complex64 = (0..4).map(|k| w[i][k] * yj[k]).sum();
            dilation[(i, 4 + j)] = tau;
            dilation[(4 + j, i)] = tau.conj();
        }
    }
    let mut lambdas: Vec<f64> = dilation.eigvalsh().into_iter().rev().take(4).map(|x| x.max(0.0)).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// Tr ρ²
pub fn purity(rho: &CMatrix) -> Result<f64> {
    validate_density(rho)?;
    Ok((rho * rho).trace().re)
}

/// Overlap of a stored state with a logical input qubit when part of the
/// stored weight may sit outside the qubit sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorFidelity {
    /// ⟨Φ|ρ|Φ⟩ with ρ the full state; out-of-sector weight counts as error.
    pub fidelity: f64,
    /// Weight of ρ inside the qubit sector.
    pub in_sector: f64,
}

impl SectorFidelity {
    /// Fidelity conditioned on the state being found in the qubit sector.
    pub fn conditional(&self) -> f64 {
        if self.in_sector > 0.0 { (self.fidelity / self.in_sector).clamp(0.0, 1.0) } else { 0.0 }
    }
}

pub fn sector_fidelity(
    before: &PureState,
    before_enc: &QubitEncoding,
    after: &MixedState,
    after_enc: &QubitEncoding,
) -> Result<SectorFidelity> {
    let (phi_rho, leak_before) = logical_density(&MixedState::from_pure(before)?, before_enc)?;
    if leak_before.abs() > 1e-9 {
        return Err(Error::OutOfSector(format!("input qubit leaks {leak_before:.3e}")));
    }
    // A pure logical qubit: recover |Φ⟩ from its projector.
    let eig = phi_rho.eigh();
    let phi = [eig.vectors[(0, 1)], eig.vectors[(1, 1)]];
    let (rho, leak_after) = logical_density(after, after_enc)?;
    let rphi = rho.mul_vec(&phi);
    let f = phi[0].conj() * rphi[0] + phi[1].conj() * rphi[1];
    Ok(SectorFidelity { fidelity: f.re.clamp(0.0, 1.0), in_sector: (1.0 - leak_after).clamp(0.0, 1.0) })
}

/// ⟨Φ|ρ|Φ⟩ where |Φ⟩ is the logical qubit carried by `before` on
/// `before_enc` and ρ the logical state of `after` on `after_enc`. Both
/// must lie in their qubit sectors.
pub fn fidelity_report(
    before: &PureState,
    before_enc: &QubitEncoding,
    after: &MixedState,
    after_enc: &QubitEncoding,
) -> Result<f64> {
    let sf = sector_fidelity(before, before_enc, after, after_enc)?;
    if 1.0 - sf.in_sector > 1e-9 {
        return Err(Error::OutOfSector(format!("stored qubit leaks {:.3e}", 1.0 - sf.in_sector)));
    }
    Ok(sf.fidelity)
}

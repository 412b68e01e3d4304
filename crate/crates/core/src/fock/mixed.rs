use std::sync::Arc;

use super::registry::ModeRegistry;
use super::state::{OccupationPattern, PureState};
use crate::error::{Error, Result};

/// Weighted ensemble of normalized pure states sharing one registry; a
/// rank-k density operator ρ = Σ w_i |ψ_i⟩⟨ψ_i|.
#[derive(Debug, Clone)]
pub struct MixedState {
    branches: Vec<(f64, PureState)>,
}

/// Result of conditioning an ensemble on an occupation pattern.
#[derive(Debug, Clone)]
pub struct MixedProjection {
    pub state: Option<MixedState>,
    pub probability: f64,
}

const WEIGHT_TOLERANCE: f64 = 1e-12;

impl MixedState {
    /// Validates and stores the branches. States are normalized; weights
    /// must be positive and sum to one.
    pub fn new(branches: Vec<(f64, PureState)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::BadWeights(0.0));
        }
        let total: f64 = branches.iter().map(|(w, _)| w).sum();
        if branches.iter().any(|(w, _)| *w <= 0.0) || (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::BadWeights(total));
        }
        let reg = branches[0].1.registry().clone();
        let branches = branches
            .into_iter()
            .map(|(w, s)| Ok((w, s.with_registry(reg.clone())?.normalize()?)))
            .collect::<Result<_>>()?;
        Ok(MixedState { branches })
    }

    pub fn from_pure(state: &PureState) -> Result<Self> {
        Ok(MixedState { branches: vec![(1.0, state.normalize()?)] })
    }

    /// Builds an ensemble from unnormalized branches `(prior, ψ)`; each
    /// branch gets weight ∝ prior·‖ψ‖². Empty branches are skipped.
    pub fn from_weighted(parts: impl IntoIterator<Item = (f64, PureState)>) -> Result<Self> {
        let mut raw: Vec<(f64, PureState)> = parts
            .into_iter()
            .filter(|(p, s)| *p > 0.0 && !s.is_empty())
            .map(|(p, s)| (p * s.norm_sqr(), s))
            .filter(|(w, _)| *w > 0.0)
            .collect();
        let total: f64 = raw.iter().map(|(w, _)| w).sum();
        if raw.is_empty() || total <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        for (w, _) in raw.iter_mut() {
            *w /= total;
        }
        let reg = raw[0].1.registry().clone();
        let branches = raw
            .into_iter()
            .map(|(w, s)| Ok((w, s.with_registry(reg.clone())?.normalize()?)))
            .collect::<Result<_>>()?;
        Ok(MixedState { branches })
    }

    /// Convex combination of ensembles.
    pub fn mix(parts: impl IntoIterator<Item = (f64, MixedState)>) -> Result<Self> {
        let flat: Vec<(f64, PureState)> = parts
            .into_iter()
            .flat_map(|(p, m)| m.branches.into_iter().map(move |(w, s)| (p * w, s)))
            .collect();
        Self::from_weighted(flat)
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        self.branches[0].1.registry()
    }

    pub fn branches(&self) -> &[(f64, PureState)] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(|(w, _)| *w).collect()
    }

    pub fn truncation_loss(&self) -> f64 {
        self.branches.iter().map(|(w, s)| w * s.truncation_loss()).sum()
    }

    /// Applies a norm-preserving map to every branch, keeping the weights.
    pub fn map_unitary(&self, f: impl Fn(&PureState) -> Result<PureState>) -> Result<Self> {
        let mut branches = Vec::with_capacity(self.branches.len());
        let mut reg: Option<Arc<ModeRegistry>> = None;
        for (w, s) in &self.branches {
            let mut out = f(s)?.normalize()?;
            match &reg {
                Some(r) => out = out.with_registry(r.clone())?,
                None => reg = Some(out.registry().clone()),
            }
            branches.push((*w, out));
        }
        Ok(MixedState { branches })
    }

    pub fn tensor(&self, other: &MixedState) -> Result<Self> {
        let mut parts = Vec::new();
        for (w1, a) in &self.branches {
            for (w2, b) in &other.branches {
                parts.push((w1 * w2, a.tensor(b)?));
            }
        }
        Self::from_weighted(parts)
    }

    pub fn tensor_pure(&self, other: &PureState) -> Result<Self> {
        self.tensor(&MixedState::from_pure(other)?)
    }

    /// Tr ρ² = Σ_ij w_i w_j |⟨ψ_i|ψ_j⟩|²
    pub fn purity(&self) -> Result<f64> {
        let mut p = 0.0;
        for (wi, a) in &self.branches {
            for (wj, b) in &self.branches {
                p += wi * wj * a.inner_product(b)?.norm_sqr();
            }
        }
        Ok(p)
    }

    /// ⟨ψ|ρ|ψ⟩ for a normalized target.
    pub fn fidelity_with(&self, target: &PureState) -> Result<f64> {
        let mut f = 0.0;
        for (w, s) in &self.branches {
            f += w * target.inner_product(s)?.norm_sqr();
        }
        Ok(f)
    }

    pub fn project(&self, pattern: &OccupationPattern) -> Result<MixedProjection> {
        let mut parts = Vec::new();
        let mut probability = 0.0;
        for (w, s) in &self.branches {
            let proj = s.project(pattern)?;
            probability += w * proj.probability;
            if let Some(st) = proj.state {
                parts.push((w * proj.probability, st));
            }
        }
        let state = if parts.is_empty() { None } else { Some(Self::from_weighted(parts)?) };
        Ok(MixedProjection { state, probability })
    }

    /// Partial trace over `names`, realized as an ensemble: every branch is
    /// split by the occupations of the traced modes, which are then removed.
    pub fn trace_out(&self, names: &[&str]) -> Result<Self> {
        let mut parts = Vec::new();
        for (w, s) in &self.branches {
            let idx: Vec<usize> =
                names.iter().map(|m| s.registry().index_of(m)).collect::<Result<_>>()?;
            let groups =
                s.split_by(|b| idx.iter().map(|&i| b.get(i)).collect::<Vec<u8>>());
            for (_, g) in groups {
                parts.push((*w, g.discard_modes(names)?));
            }
        }
        Self::from_weighted(parts)
    }

    /// Removes modes with a definite occupation in every branch.
    pub fn discard_modes(&self, names: &[&str]) -> Result<Self> {
        self.map_unitary(|s| s.discard_modes(names))
    }

    /// The single pure state this ensemble represents, if every branch is
    /// the same ray (overlap modulus within `tol` of one).
    pub fn as_pure(&self, tol: f64) -> Option<PureState> {
        let first = &self.branches[0].1;
        for (_, s) in &self.branches[1..] {
            match first.inner_product(s) {
                Ok(ov) if (ov.norm() - 1.0).abs() <= tol => {}
                _ => return None,
            }
        }
        Some(first.clone())
    }
}

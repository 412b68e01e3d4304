use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::registry::{ModeId, ModeRegistry};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Amplitudes with modulus below this are not stored.
pub const DROP_TOLERANCE: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Occupation numbers, one per registered mode, in registration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisVector(Vec<u8>);

impl BasisVector {
    pub fn new(occupations: Vec<u8>) -> Self {
        BasisVector(occupations)
    }

    pub fn vacuum(modes: usize) -> Self {
        BasisVector(vec![0; modes])
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, pos: usize) -> u8 {
        self.0[pos]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    fn with(&self, pos: usize, n: u8) -> Self {
        let mut v = self.0.clone();
        v[pos] = n;
        BasisVector(v)
    }
}

impl fmt::Display for BasisVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

/// Occupation requirement over a subset of modes, addressed by name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OccupationPattern(Vec<(String, u8)>);

impl OccupationPattern {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, u8)>) -> Self {
        OccupationPattern(entries.into_iter().map(|(m, n)| (m.into(), n)).collect())
    }

    pub fn entries(&self) -> &[(String, u8)] {
        &self.0
    }

    pub(crate) fn resolve(&self, reg: &ModeRegistry) -> Result<Vec<(usize, u8)>> {
        self.0.iter().map(|(m, n)| Ok((reg.index_of(m)?, *n))).collect()
    }
}

/// Result of conditioning a state on an occupation pattern.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Normalized post-measurement state, `None` when the outcome is
    /// impossible.
    pub state: Option<PureState>,
    /// Born probability relative to the input norm.
    pub probability: f64,
    /// Unnormalized weight Σ|c|² of the matching terms.
    pub weight: f64,
}

/// Sparse superposition of Fock basis vectors over a shared registry.
///
/// States may be sub-normalized (heralded branches, truncation). Nothing is
/// normalized implicitly; call [`PureState::normalize`].
#[derive(Debug, Clone)]
pub struct PureState {
    registry: Arc<ModeRegistry>,
    amps: BTreeMap<BasisVector, Complex64>,
    truncation_loss: f64,
}

fn sqrt_factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().sqrt()
}

impl PureState {
    pub fn vacuum(registry: Arc<ModeRegistry>) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(BasisVector::vacuum(registry.len()), Complex64::new(1.0, 0.0));
        PureState { registry, amps, truncation_loss: 0.0 }
    }

    /// Builds a state from `(occupations by mode name, amplitude)` terms.
    /// Unlisted modes are empty. Amplitudes are taken as given.
    pub fn from_terms<'a, I, P>(registry: Arc<ModeRegistry>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (P, Complex64)>,
        P: IntoIterator<Item = (&'a str, u8)>,
    {
        let mut amps = BTreeMap::new();
        for (pattern, c) in terms {
            let mut occ = vec![0u8; registry.len()];
            for (name, n) in pattern {
                occ[registry.index_of(name)?] = n;
            }
            *amps.entry(BasisVector(occ)).or_insert(ZERO) += c;
        }
        Ok(Self::from_map(registry, amps, 0.0))
    }

    pub(crate) fn from_map(
        registry: Arc<ModeRegistry>,
        mut amps: BTreeMap<BasisVector, Complex64>,
        truncation_loss: f64,
    ) -> Self {
        amps.retain(|_, c| c.norm() >= DROP_TOLERANCE);
        PureState { registry, amps, truncation_loss }
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BasisVector, &Complex64)> {
        self.amps.iter()
    }

    pub fn amplitude(&self, basis: &BasisVector) -> Complex64 {
        self.amps.get(basis).copied().unwrap_or(ZERO)
    }

    /// Amplitude of the basis vector given by named occupations.
    pub fn amplitude_of(&self, pattern: &[(&str, u8)]) -> Result<Complex64> {
        let mut occ = vec![0u8; self.registry.len()];
        for (name, n) in pattern {
            occ[self.registry.index_of(name)?] = *n;
        }
        Ok(self.amplitude(&BasisVector(occ)))
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum()
    }

    /// Weight dropped by the excitation cutoff so far.
    pub fn truncation_loss(&self) -> f64 {
        self.truncation_loss
    }

    pub fn same_registry(&self, other: &PureState) -> bool {
        Arc::ptr_eq(&self.registry, &other.registry) || *self.registry == *other.registry
    }

    fn check_registry(&self, other: &PureState) -> Result<()> {
        if self.same_registry(other) {
            Ok(())
        } else {
            Err(Error::RegistryMismatch)
        }
    }

    pub fn normalize(&self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / n2.sqrt();
        Ok(PureState {
            registry: self.registry.clone(),
            amps: self.amps.iter().map(|(b, c)| (b.clone(), c * inv)).collect(),
            truncation_loss: self.truncation_loss / n2,
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let amps = self.amps.iter().map(|(b, c)| (b.clone(), c * s)).collect();
        Self::from_map(self.registry.clone(), amps, self.truncation_loss * s.norm_sqr())
    }

    /// Unnormalized sum `self + other`.
    pub fn add(&self, other: &PureState) -> Result<Self> {
        self.check_registry(other)?;
        let mut amps = self.amps.clone();
        for (b, c) in &other.amps {
            *amps.entry(b.clone()).or_insert(ZERO) += c;
        }
        Ok(Self::from_map(
            self.registry.clone(),
            amps,
            self.truncation_loss + other.truncation_loss,
        ))
    }

    /// Applies the creation operator of `mode`. Terms that would exceed the
    /// cutoff are dropped and their weight is added to the truncation loss.
    pub fn create(&self, mode: &str) -> Result<Self> {
        let pos = self.registry.index_of(mode)?;
        let cutoff = self.registry.cutoff() as u32;
        let mut lost = 0.0;
        let mut amps = BTreeMap::new();
        for (b, c) in &self.amps {
            let n = b.get(pos);
            let factor = ((n as f64) + 1.0).sqrt();
            if b.total() + 1 > cutoff {
                lost += (c * factor).norm_sqr();
                continue;
            }
            amps.insert(b.with(pos, n + 1), c * factor);
        }
        Ok(Self::from_map(self.registry.clone(), amps, self.truncation_loss + lost))
    }

    /// Applies the annihilation operator of `mode`.
    pub fn annihilate(&self, mode: &str) -> Result<Self> {
        let pos = self.registry.index_of(mode)?;
        let amps = self
            .amps
            .iter()
            .filter(|(b, _)| b.get(pos) > 0)
            .map(|(b, c)| {
                let n = b.get(pos);
                (b.with(pos, n - 1), c * (n as f64).sqrt())
            })
            .collect();
        Ok(Self::from_map(self.registry.clone(), amps, self.truncation_loss))
    }

    /// Linear-optics mode transformation: every creation operator of the
    /// listed modes is substituted as `a_i† → Σ_j U_ji a_j†`.
    ///
    /// Excitation number is conserved, so no truncation can occur.
    pub fn apply_mode_unitary(&self, modes: &[&str], u: &CMatrix) -> Result<Self> {
        if u.dim() != modes.len() {
            return Err(Error::DimensionMismatch { expected: modes.len(), got: u.dim() });
        }
        let defect = u.unitarity_defect();
        if defect > 1e-10 {
            return Err(Error::NotUnitary { deviation: defect });
        }
        let idx: Vec<usize> =
            modes.iter().map(|m| self.registry.index_of(m)).collect::<Result<_>>()?;
        for (i, a) in idx.iter().enumerate() {
            if idx[..i].contains(a) {
                return Err(Error::RepeatedMode);
            }
        }

        let mut cache: HashMap<Vec<u8>, Vec<(Vec<u8>, Complex64)>> = HashMap::new();
        let mut out: BTreeMap<BasisVector, Complex64> = BTreeMap::new();
        for (b, c) in &self.amps {
            let sub: Vec<u8> = idx.iter().map(|&i| b.get(i)).collect();
            let expansion = cache.entry(sub.clone()).or_insert_with(|| expand_monomial(&sub, u));
            for (new_sub, coeff) in expansion.iter() {
                let mut occ = b.0.clone();
                for (k, &i) in idx.iter().enumerate() {
                    occ[i] = new_sub[k];
                }
                *out.entry(BasisVector(occ)).or_insert(ZERO) += c * coeff;
            }
        }
        Ok(Self::from_map(self.registry.clone(), out, self.truncation_loss))
    }

    /// Multiplies every term by `e^{i n φ}` where `n` is the occupation of
    /// `mode`.
    pub fn apply_phase(&self, mode: &str, phi: f64) -> Result<Self> {
        let u = CMatrix::diag(&[Complex64::from_polar(1.0, phi)]);
        self.apply_mode_unitary(&[mode], &u)
    }

    /// ⟨self|other⟩
    pub fn inner_product(&self, other: &PureState) -> Result<Complex64> {
        self.check_registry(other)?;
        let (small, large, conj_small) = if self.amps.len() <= other.amps.len() {
            (&self.amps, &other.amps, true)
        } else {
            (&other.amps, &self.amps, false)
        };
        let mut acc = ZERO;
        for (b, c) in small {
            if let Some(d) = large.get(b) {
                acc += if conj_small { c.conj() * d } else { d.conj() * c };
            }
        }
        Ok(acc)
    }

    /// |⟨self|other⟩|² for normalized inputs.
    pub fn fidelity(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner_product(other)?.norm_sqr())
    }

    /// Keeps only the terms for which `keep` holds. Unnormalized.
    pub fn filter_terms(&self, keep: impl Fn(&BasisVector) -> bool) -> Self {
        let amps = self.amps.iter().filter(|(b, _)| keep(b)).map(|(b, c)| (b.clone(), *c)).collect();
        Self::from_map(self.registry.clone(), amps, self.truncation_loss)
    }

    /// Conditions on the occupation pattern, returning the normalized
    /// post-measurement state and its Born probability.
    pub fn project(&self, pattern: &OccupationPattern) -> Result<Projection> {
        let req = pattern.resolve(&self.registry)?;
        let total = self.norm_sqr();
        let kept = self.filter_terms(|b| req.iter().all(|&(i, n)| b.get(i) == n));
        let weight = kept.norm_sqr();
        let probability = if total > 0.0 { weight / total } else { 0.0 };
        let state = if kept.is_empty() { None } else { Some(kept.normalize()?) };
        Ok(Projection { state, probability, weight })
    }

    /// Groups terms by a key computed from each basis vector. Each group is
    /// returned unnormalized.
    pub fn split_by<K: Ord>(&self, key: impl Fn(&BasisVector) -> K) -> BTreeMap<K, PureState> {
        let mut groups: BTreeMap<K, BTreeMap<BasisVector, Complex64>> = BTreeMap::new();
        for (b, c) in &self.amps {
            groups.entry(key(b)).or_default().insert(b.clone(), *c);
        }
        groups
            .into_iter()
            .map(|(k, amps)| (k, Self::from_map(self.registry.clone(), amps, 0.0)))
            .collect()
    }

    /// Total occupation of the named modes in a basis vector.
    pub fn count_in(&self, names: &[&str]) -> Result<impl Fn(&BasisVector) -> u32> {
        let idx: Vec<usize> = names.iter().map(|m| self.registry.index_of(m)).collect::<Result<_>>()?;
        Ok(move |b: &BasisVector| idx.iter().map(|&i| b.get(i) as u32).sum())
    }

    /// Returns the same state on a registry with `extra` modes appended in
    /// the vacuum.
    pub fn extend_modes(&self, extra: &[ModeId]) -> Result<Self> {
        let mut reg = (*self.registry).clone();
        for m in extra {
            reg.push(m.clone())?;
        }
        let pad = extra.len();
        let amps = self
            .amps
            .iter()
            .map(|(b, c)| {
                let mut occ = b.0.clone();
                occ.extend(std::iter::repeat_n(0, pad));
                (BasisVector(occ), *c)
            })
            .collect();
        Ok(PureState { registry: Arc::new(reg), amps, truncation_loss: self.truncation_loss })
    }

    /// Renames modes in place; occupations are untouched.
    pub fn relabel_modes(&self, renames: &[(&str, ModeId)]) -> Result<Self> {
        let mut reg = (*self.registry).clone();
        for (old, new) in renames {
            let pos = reg.index_of(old)?;
            reg.replace(pos, new.clone())?;
        }
        Ok(PureState {
            registry: Arc::new(reg),
            amps: self.amps.clone(),
            truncation_loss: self.truncation_loss,
        })
    }

    /// Moves the state onto an equal registry instance so it can be combined
    /// with states built elsewhere.
    pub fn with_registry(&self, registry: Arc<ModeRegistry>) -> Result<Self> {
        if *registry != *self.registry {
            return Err(Error::RegistryMismatch);
        }
        Ok(PureState { registry, amps: self.amps.clone(), truncation_loss: self.truncation_loss })
    }

    /// Removes modes whose occupation is the same in every term (as after a
    /// projective measurement on them).
    pub fn discard_modes(&self, names: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = names.iter().map(|m| self.registry.index_of(m)).collect::<Result<_>>()?;
        if let Some(first) = self.amps.keys().next() {
            for b in self.amps.keys() {
                for &i in &idx {
                    if b.get(i) != first.get(i) {
                        return Err(Error::OutOfSector(format!(
                            "mode `{}` has no definite occupation",
                            self.registry.modes()[i].name()
                        )));
                    }
                }
            }
        }
        let reg = self.registry.without(&idx);
        let amps = self
            .amps
            .iter()
            .map(|(b, c)| {
                let occ = b.0.iter().enumerate().filter(|(i, _)| !idx.contains(i)).map(|(_, &n)| n);
                (BasisVector(occ.collect()), *c)
            })
            .collect();
        Ok(PureState { registry: Arc::new(reg), amps, truncation_loss: self.truncation_loss })
    }

    /// Tensor product on the concatenated registry. The cutoff of the result
    /// is the larger of the two; terms above it are dropped and counted.
    pub fn tensor(&self, other: &PureState) -> Result<Self> {
        let cutoff = self.registry.cutoff().max(other.registry.cutoff());
        let reg = ModeRegistry::with_modes(
            self.registry.modes().iter().chain(other.registry.modes()).cloned(),
            cutoff,
        )?;
        let mut lost = 0.0;
        let mut amps = BTreeMap::new();
        for (a, ca) in &self.amps {
            for (b, cb) in &other.amps {
                let c = ca * cb;
                if a.total() + b.total() > cutoff as u32 {
                    lost += c.norm_sqr();
                    continue;
                }
                let mut occ = a.0.clone();
                occ.extend_from_slice(&b.0);
                amps.insert(BasisVector(occ), c);
            }
        }
        let loss = lost
            + self.truncation_loss * other.norm_sqr()
            + other.truncation_loss * self.norm_sqr();
        Ok(Self::from_map(Arc::new(reg), amps, loss))
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.registry.modes().iter().map(|m| m.name()).collect();
        writeln!(f, "modes [{}]", names.join(", "))?;
        for (b, c) in &self.amps {
            writeln!(f, "  {:+.6}{:+.6}i {}", c.re, c.im, b)?;
        }
        Ok(())
    }
}

/// Expands Π_i (Σ_j U_ji a_j†)^{n_i} / √(n_i!) acting on vacuum into
/// normalized Fock amplitudes over the same mode subset.
fn expand_monomial(sub: &[u8], u: &CMatrix) -> Vec<(Vec<u8>, Complex64)> {
    let k = sub.len();
    let mut poly: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
    poly.insert(vec![0; k], Complex64::new(1.0, 0.0));
    for (i, &n) in sub.iter().enumerate() {
        for _ in 0..n {
            let mut next: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
            for (mono, c) in &poly {
                for j in 0..k {
                    let uji = u[(j, i)];
                    if uji == ZERO {
                        continue;
                    }
                    let mut m = mono.clone();
                    m[j] += 1;
                    *next.entry(m).or_insert(ZERO) += c * uji;
                }
            }
            poly = next;
        }
    }
    let denom: f64 = sub.iter().map(|&n| sqrt_factorial(n as u32)).product();
    poly.into_iter()
        .map(|(m, c)| {
            let num: f64 = m.iter().map(|&n| sqrt_factorial(n as u32)).product();
            (m, c * (num / denom))
        })
        .filter(|(_, c)| c.norm() >= DROP_TOLERANCE)
        .collect()
}

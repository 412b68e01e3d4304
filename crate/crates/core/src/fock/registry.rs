use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Polarization tag of a photonic mode: circular (R, L) or linear (H, V).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    R,
    L,
    H,
    V,
}

impl Polarization {
    pub fn is_circular(self) -> bool {
        matches!(self, Polarization::R | Polarization::L)
    }

    pub fn is_linear(self) -> bool {
        !self.is_circular()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::R => "R",
            Polarization::L => "L",
            Polarization::H => "H",
            Polarization::V => "V",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(Polarization::R),
            "L" => Ok(Polarization::L),
            "H" => Ok(Polarization::H),
            "V" => Ok(Polarization::V),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModeKind {
    Photonic { path: String, pol: Polarization },
    /// One collective excitation mode of an atomic ensemble.
    Atomic,
    /// Environment mode receiving attenuated light.
    Loss,
}

/// A registered bosonic mode. Photonic modes are named `path:pol`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeId {
    name: String,
    kind: ModeKind,
}

impl ModeId {
    pub fn photon(path: &str, pol: Polarization) -> Self {
        ModeId {
            name: photon_name(path, pol),
            kind: ModeKind::Photonic { path: path.to_string(), pol },
        }
    }

    pub fn atomic(name: &str) -> Self {
        ModeId { name: name.to_string(), kind: ModeKind::Atomic }
    }

    pub fn loss(name: &str) -> Self {
        ModeId { name: name.to_string(), kind: ModeKind::Loss }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ModeKind {
        &self.kind
    }

    pub fn path(&self) -> Option<&str> {
        match &self.kind {
            ModeKind::Photonic { path, .. } => Some(path),
            _ => None,
        }
    }

    pub fn pol(&self) -> Option<Polarization> {
        match &self.kind {
            ModeKind::Photonic { pol, .. } => Some(*pol),
            _ => None,
        }
    }

    pub fn is_atomic(&self) -> bool {
        self.kind == ModeKind::Atomic
    }

    pub fn is_loss(&self) -> bool {
        self.kind == ModeKind::Loss
    }
}

pub fn photon_name(path: &str, pol: Polarization) -> String {
    format!("{path}:{pol}")
}

/// The ordered set of modes a state lives on, plus the global excitation
/// cutoff. Basis vectors list occupations in registration order.
#[derive(Debug, Clone)]
pub struct ModeRegistry {
    modes: Vec<ModeId>,
    index: HashMap<String, usize>,
    cutoff: u8,
}

impl PartialEq for ModeRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.cutoff == other.cutoff && self.modes == other.modes
    }
}

impl ModeRegistry {
    pub const DEFAULT_CUTOFF: u8 = 6;

    pub fn new(cutoff: u8) -> Self {
        ModeRegistry { modes: Vec::new(), index: HashMap::new(), cutoff }
    }

    pub fn with_modes(modes: impl IntoIterator<Item = ModeId>, cutoff: u8) -> Result<Self> {
        let mut reg = Self::new(cutoff);
        for m in modes {
            reg.push(m)?;
        }
        Ok(reg)
    }

    pub fn push(&mut self, mode: ModeId) -> Result<usize> {
        if self.index.contains_key(mode.name()) {
            return Err(Error::DuplicateMode(mode.name().to_string()));
        }
        let pos = self.modes.len();
        self.index.insert(mode.name().to_string(), pos);
        self.modes.push(mode);
        Ok(pos)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn cutoff(&self) -> u8 {
        self.cutoff
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownMode(name.to_string()))
    }

    pub fn mode(&self, name: &str) -> Result<&ModeId> {
        Ok(&self.modes[self.index_of(name)?])
    }

    pub fn find_photon(&self, path: &str, pol: Polarization) -> Option<usize> {
        self.index.get(&photon_name(path, pol)).copied()
    }

    /// Polarization labels registered on a path, in registration order.
    pub fn path_pols(&self, path: &str) -> Vec<Polarization> {
        self.modes
            .iter()
            .filter(|m| m.path() == Some(path))
            .filter_map(|m| m.pol())
            .collect()
    }

    /// Replaces the mode at `pos`, keeping its position in the basis order.
    pub(crate) fn replace(&mut self, pos: usize, mode: ModeId) -> Result<()> {
        let old = self.modes[pos].name().to_string();
        if old != mode.name() && self.index.contains_key(mode.name()) {
            return Err(Error::DuplicateMode(mode.name().to_string()));
        }
        self.index.remove(&old);
        self.index.insert(mode.name().to_string(), pos);
        self.modes[pos] = mode;
        Ok(())
    }

    pub(crate) fn without(&self, drop: &[usize]) -> Self {
        let kept = self
            .modes
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, m)| m.clone());
        Self::with_modes(kept, self.cutoff).expect("subset of a valid registry")
    }
}

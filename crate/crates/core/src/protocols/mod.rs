//! The end-to-end procedures: post-selected entanglement generation,
//! event-ready heralded generation and teleportation-based storage.
//!
//! Every driver has an exact mode (enumerated outcomes, ideal detectors)
//! and a sampled mode. Sampled trials draw from `rng::trial_rng(seed, i)`
//! and run in parallel on the current rayon pool; results are collected in
//! trial order, so they do not depend on the number of threads.

mod event_ready;
mod generation;
mod memory;

use std::f64::consts::PI;

pub use event_ready::{event_ready_generation, heralded_target, EventReadyReport, BELL_PATH_A, BELL_PATH_B};
pub use generation::{bell_decompose, generate_entanglement, BellDecomposition, GenerationReport, BELL_LABELS};
pub use memory::{input_qubit, memory_readout, memory_store, MemoryReport, INPUT_PATH, READOUT_PATH};

use crate::detection::{DetectorSpec, HeraldRule, Outcome};
use crate::error::{Error, Result};
use crate::fock::ModeRegistry;
use crate::sources::SourceParams;
use crate::stats::{wilson_interval, Z95};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Sampled,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Sampled => "sampled",
        }
    }
}

/// Where the memory protocol's atom–photon channel comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// The ideal (|V⟩_B|S₁⟩ − |H⟩_B|S₂⟩)/√2.
    Ideal,
    /// The exact heralded output of event-ready generation.
    EventReady,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Ideal => "ideal",
            Channel::EventReady => "event-ready",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryParams {
    /// Input qubit cos θ|H⟩ + e^{iφ} sin θ|V⟩.
    pub theta: f64,
    pub phi: f64,
    /// Readout efficiency η_r.
    pub retrieval_efficiency: f64,
    pub channel: Channel,
}

impl Default for MemoryParams {
    fn default() -> Self {
        MemoryParams { theta: 0.0, phi: 0.0, retrieval_efficiency: 1.0, channel: Channel::Ideal }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub source: SourceParams,
    pub detectors: DetectorSpec,
    pub rule: HeraldRule,
    pub trials: u64,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub memory: MemoryParams,
    /// Keep one record per trial in sampled mode.
    pub keep_records: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            source: SourceParams::default(),
            detectors: DetectorSpec::default(),
            rule: HeraldRule::default(),
            trials: 1,
            mode: Mode::Exact,
            seed: None,
            memory: MemoryParams::default(),
            keep_records: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate(ModeRegistry::DEFAULT_CUTOFF)?;
        self.detectors.validate()?;
        if self.trials < 1 {
            return Err(Error::OutOfRange { name: "trials", value: self.trials as f64, range: "[1, ∞)" });
        }
        let m = &self.memory;
        if !(0.0..=PI).contains(&m.theta) {
            return Err(Error::OutOfRange { name: "theta", value: m.theta, range: "[0, π]" });
        }
        if !(0.0..2.0 * PI).contains(&m.phi) {
            return Err(Error::OutOfRange { name: "phi", value: m.phi, range: "[0, 2π)" });
        }
        if !(0.0..=1.0).contains(&m.retrieval_efficiency) {
            return Err(Error::OutOfRange {
                name: "retrieval_efficiency",
                value: m.retrieval_efficiency,
                range: "[0, 1]",
            });
        }
        if self.mode == Mode::Sampled && self.seed.is_none() {
            return Err(Error::MissingSeed);
        }
        Ok(())
    }

    pub(crate) fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// One trial (sampled mode) or one outcome branch (exact mode).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: u64,
    pub outcome: Outcome,
    pub success: bool,
    /// Fidelity of the heralded state with the protocol target; absent on
    /// failure.
    pub fidelity: Option<f64>,
    /// Branch probability, exact mode only.
    pub weight: Option<f64>,
}

/// Success statistics of a sampled run.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSummary {
    pub trials: u64,
    pub successes: u64,
    pub psi_minus: u64,
    pub psi_plus: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean fidelity over successful trials.
    pub mean_fidelity: Option<f64>,
}

impl SampledSummary {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let trials = records.len() as u64;
        let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count() as u64;
        let (psi_minus, psi_plus) = (count(Outcome::PsiMinus), count(Outcome::PsiPlus));
        let successes = records.iter().filter(|r| r.success).count() as u64;
        let fids: Vec<f64> = records.iter().filter_map(|r| r.fidelity).collect();
        let mean_fidelity = (!fids.is_empty()).then(|| fids.iter().sum::<f64>() / fids.len() as f64);
        let (ci_low, ci_high) = wilson_interval(successes, trials, Z95);
        SampledSummary {
            trials,
            successes,
            psi_minus,
            psi_plus,
            rate: successes as f64 / trials as f64,
            ci_low,
            ci_high,
            mean_fidelity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = ProtocolConfig::default();
        assert!(ok.validate().is_ok());
        let bad = |f: fn(&mut ProtocolConfig)| {
            let mut c = ProtocolConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.trials = 0));
        assert!(bad(|c| c.memory.theta = 4.0));
        assert!(bad(|c| c.memory.phi = 2.0 * PI));
        assert!(bad(|c| c.memory.retrieval_efficiency = -0.1));
        assert!(bad(|c| c.mode = Mode::Sampled));
        assert!(bad(|c| c.source.p0 = 0.5));
        assert!(!bad(|c| {
            c.mode = Mode::Sampled;
            c.seed = Some(1)
        }));
    }

    #[test]
    fn summary_recomputes_from_records() {
        let rec = |i, outcome: Outcome, f: Option<f64>| TrialRecord {
            index: i,
            outcome,
            success: outcome.is_success(),
            fidelity: f,
            weight: None,
        };
        let records = vec![
            rec(0, Outcome::PsiMinus, Some(1.0)),
            rec(1, Outcome::Fail, None),
            rec(2, Outcome::PsiPlus, Some(0.5)),
            rec(3, Outcome::Fail, None),
        ];
        let s = SampledSummary::from_records(&records);
        assert_eq!((s.trials, s.successes, s.psi_minus, s.psi_plus), (4, 2, 1, 1));
        assert_eq!(s.rate, 0.5);
        assert_eq!(s.mean_fidelity, Some(0.75));
        assert!(s.ci_low < 0.5 && s.ci_high > 0.5);
    }
}

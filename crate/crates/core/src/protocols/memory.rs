use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{event_ready_generation, Channel, Mode, ProtocolConfig, SampledSummary, TrialRecord, BELL_PATH_B};
use crate::detection::{BellAnalyzer, Outcome, PreparedBell};
use crate::error::{Error, Result};
use crate::fock::{photon_name, MixedState, ModeId, ModeRegistry, Polarization, PureState};
use crate::linalg::CMatrix;
use crate::metrics::{sector_fidelity, QubitEncoding};
use crate::rng::trial_rng;
use crate::sources::{ENSEMBLE_1, ENSEMBLE_2};

/// Path of the photon to be stored.
pub const INPUT_PATH: &str = "q";
/// Path of the photon released on readout.
pub const READOUT_PATH: &str = "r";

#[derive(Debug, Clone)]
pub struct MemoryReport {
    pub theta: f64,
    pub phi: f64,
    /// Exact herald probability with ideal detectors.
    pub success_probability: f64,
    pub psi_minus_probability: f64,
    pub psi_plus_probability: f64,
    pub detector_success_probability: f64,
    /// ⟨Φ|ρ|Φ⟩ of the corrected stored state against the input qubit.
    pub stored_fidelity: f64,
    /// Weight of the stored state inside the {S₁, S₂} qubit sector.
    pub stored_in_sector: f64,
    pub psi_minus_fidelity: f64,
    pub psi_plus_fidelity: f64,
    /// Fidelity of the released photon, conditioned on retrieval.
    pub readout_fidelity: f64,
    pub retrieval_probability: f64,
    pub stored: Option<MixedState>,
    pub readout: Option<MixedState>,
    pub sampled: Option<SampledSummary>,
    pub records: Vec<TrialRecord>,
}

/// cos θ|H⟩_q + e^{iφ} sin θ|V⟩_q on a fresh registry.
pub fn input_qubit(theta: f64, phi: f64) -> Result<PureState> {
    let reg = Arc::new(ModeRegistry::with_modes(
        [ModeId::photon(INPUT_PATH, Polarization::H), ModeId::photon(INPUT_PATH, Polarization::V)],
        ModeRegistry::DEFAULT_CUTOFF,
    )?);
    let (h, v) = (photon_name(INPUT_PATH, Polarization::H), photon_name(INPUT_PATH, Polarization::V));
    PureState::from_terms(
        reg,
        [
            (vec![(h.as_str(), 1)], Complex64::new(theta.cos(), 0.0)),
            (vec![(v.as_str(), 1)], Complex64::from_polar(theta.sin(), phi)),
        ],
    )
}

fn ideal_channel() -> Result<PureState> {
    let reg = Arc::new(ModeRegistry::with_modes(
        [
            ModeId::atomic(ENSEMBLE_1),
            ModeId::atomic(ENSEMBLE_2),
            ModeId::photon(BELL_PATH_B, Polarization::H),
            ModeId::photon(BELL_PATH_B, Polarization::V),
        ],
        ModeRegistry::DEFAULT_CUTOFF,
    )?);
    let s = FRAC_1_SQRT_2;
    PureState::from_terms(
        reg,
        [
            (vec![(ENSEMBLE_1, 1), ("B:V", 1)], Complex64::new(s, 0.0)),
            (vec![(ENSEMBLE_2, 1), ("B:H", 1)], Complex64::new(-s, 0.0)),
        ],
    )
}

fn channel_state(config: &ProtocolConfig) -> Result<MixedState> {
    match config.memory.channel {
        Channel::Ideal => MixedState::from_pure(&ideal_channel()?),
        Channel::EventReady => {
            let exact = ProtocolConfig { mode: Mode::Exact, keep_records: false, ..config.clone() };
            event_ready_generation(&exact)?
                .state
                .ok_or_else(|| Error::OutOfSector("event-ready generation never heralds at these settings".into()))
        }
    }
}

/// Teleportation correction on the atomic qubit: none after Ψ⁻, a π phase
/// on S₂ after Ψ⁺.
fn correct_and_trace(outcome: Outcome, state: &MixedState) -> Result<MixedState> {
    let corrected = match outcome {
        Outcome::PsiPlus => state.map_unitary(|s| s.apply_phase(ENSEMBLE_2, PI))?,
        _ => state.clone(),
    };
    let others: Vec<String> = corrected
        .registry()
        .modes()
        .iter()
        .map(|m| m.name().to_string())
        .filter(|n| n != ENSEMBLE_1 && n != ENSEMBLE_2)
        .collect();
    if others.is_empty() {
        return Ok(corrected);
    }
    corrected.trace_out(&others.iter().map(String::as_str).collect::<Vec<_>>())
}

fn atoms() -> QubitEncoding {
    QubitEncoding::dual_rail(ENSEMBLE_1, ENSEMBLE_2)
}

fn input_encoding() -> QubitEncoding {
    QubitEncoding::dual_rail(&photon_name(INPUT_PATH, Polarization::H), &photon_name(INPUT_PATH, Polarization::V))
}

fn prepare(config: &ProtocolConfig, input: &PureState) -> Result<PreparedBell> {
    let joint = channel_state(config)?.tensor_pure(input)?;
    BellAnalyzer::new(INPUT_PATH, BELL_PATH_B, config.detectors, config.rule.clone())?.prepare(&joint)
}

pub fn memory_store(config: &ProtocolConfig) -> Result<MemoryReport> {
    config.validate()?;
    let m = &config.memory;
    let input = input_qubit(m.theta, m.phi)?;
    let prepared = prepare(config, &input)?;
    let exact = prepared.exact()?;
    let stored_fid = |s: &MixedState| sector_fidelity(&input, &input_encoding(), s, &atoms());

    let mut parts = Vec::new();
    let mut branch_fid = [0.0; 2];
    for (k, outcome) in [Outcome::PsiMinus, Outcome::PsiPlus].into_iter().enumerate() {
        let branch = exact.branch(outcome).expect("success outcome");
        if let Some(s) = &branch.state {
            let stored = correct_and_trace(outcome, s)?;
            branch_fid[k] = stored_fid(&stored)?.fidelity;
            parts.push((branch.probability, stored));
        }
    }
    let (pm, pp) = (exact.psi_minus.probability, exact.psi_plus.probability);
    let stored = if parts.is_empty() { None } else { Some(MixedState::mix(parts)?) };
    let sf = stored.as_ref().map(&stored_fid).transpose()?;

    let readout = stored.as_ref().map(|s| memory_readout(s, m.retrieval_efficiency)).transpose()?;
    let rf = readout
        .as_ref()
        .map(|r| {
            let enc = QubitEncoding::dual_rail(
                &photon_name(READOUT_PATH, Polarization::H),
                &photon_name(READOUT_PATH, Polarization::V),
            );
            sector_fidelity(&input, &input_encoding(), r, &enc)
        })
        .transpose()?;

    let detector_success_probability = {
        let p = prepared.outcome_probabilities();
        p[0] + p[1]
    };

    let (sampled, records) = match config.mode {
        Mode::Exact => {
            let records = if config.keep_records {
                [(Outcome::PsiMinus, pm, branch_fid[0]), (Outcome::PsiPlus, pp, branch_fid[1]), (Outcome::Fail, exact.fail, 0.0)]
                    .into_iter()
                    .enumerate()
                    .map(|(i, (o, w, f))| TrialRecord {
                        index: i as u64,
                        outcome: o,
                        success: o.is_success(),
                        fidelity: o.is_success().then_some(f),
                        weight: Some(w),
                    })
                    .collect()
            } else {
                Vec::new()
            };
            (None, records)
        }
        Mode::Sampled => {
            let records = run_sampled(config, &prepared, &|s| Ok(stored_fid(s)?.fidelity))?;
            let summary = SampledSummary::from_records(&records);
            (Some(summary), if config.keep_records { records } else { Vec::new() })
        }
    };

    Ok(MemoryReport {
        theta: m.theta,
        phi: m.phi,
        success_probability: pm + pp,
        psi_minus_probability: pm,
        psi_plus_probability: pp,
        detector_success_probability,
        stored_fidelity: sf.map_or(0.0, |f| f.fidelity),
        stored_in_sector: sf.map_or(0.0, |f| f.in_sector),
        psi_minus_fidelity: branch_fid[0],
        psi_plus_fidelity: branch_fid[1],
        readout_fidelity: rf.map_or(0.0, |f| f.conditional()),
        retrieval_probability: rf.map_or(0.0, |f| f.in_sector),
        stored,
        readout,
        sampled,
        records,
    })
}

fn run_sampled(
    config: &ProtocolConfig,
    prepared: &PreparedBell,
    fidelity: &(dyn Fn(&MixedState) -> Result<f64> + Sync),
) -> Result<Vec<TrialRecord>> {
    let n = prepared.measurement().outcomes().len();
    let mut cache: Vec<[Option<f64>; 2]> = Vec::with_capacity(n);
    for i in 0..n {
        let mut entry = [None, None];
        if let Some(s) = prepared.conditional(i) {
            for (k, o) in [Outcome::PsiMinus, Outcome::PsiPlus].into_iter().enumerate() {
                entry[k] = Some(fidelity(&correct_and_trace(o, s)?)?);
            }
        }
        cache.push(entry);
    }
    let seed = config.seed();
    Ok((0..config.trials)
        .into_par_iter()
        .map(|i| {
            let s = prepared.sample(&mut trial_rng(seed, i));
            let fid = match s.outcome {
                Outcome::PsiMinus => cache[s.window.true_index][0],
                Outcome::PsiPlus => cache[s.window.true_index][1],
                Outcome::Fail => None,
            };
            TrialRecord { index: i, outcome: s.outcome, success: s.outcome.is_success(), fidelity: fid, weight: None }
        })
        .collect())
}

/// Converts the stored atomic excitation into a photon on path `r`: S₁ → H,
/// S₂ → V. With η_r < 1 each mode first loses its excitation to a fresh
/// loss mode with probability 1 − η_r, which is then traced out.
pub fn memory_readout(state: &MixedState, retrieval_efficiency: f64) -> Result<MixedState> {
    if !(0.0..=1.0).contains(&retrieval_efficiency) {
        return Err(Error::OutOfRange {
            name: "retrieval_efficiency",
            value: retrieval_efficiency,
            range: "[0, 1]",
        });
    }
    for (_, s) in state.branches() {
        let count = s.count_in(&[ENSEMBLE_1, ENSEMBLE_2])?;
        if s.terms().any(|(b, _)| count(b) > 1) {
            return Err(Error::OutOfSector("readout needs at most one stored excitation".into()));
        }
    }
    let (h, v) = (photon_name(READOUT_PATH, Polarization::H), photon_name(READOUT_PATH, Polarization::V));
    let relabeled = state.map_unitary(|s| {
        s.relabel_modes(&[
            (ENSEMBLE_1, ModeId::photon(READOUT_PATH, Polarization::H)),
            (ENSEMBLE_2, ModeId::photon(READOUT_PATH, Polarization::V)),
        ])
    })?;
    if retrieval_efficiency == 1.0 {
        return Ok(relabeled);
    }
    let losses = [format!("loss:{h}"), format!("loss:{v}")];
    let (t, r) = (retrieval_efficiency.sqrt(), (1.0 - retrieval_efficiency).sqrt());
    let u = CMatrix::from_real_rows(&[vec![t, -r], vec![r, t]]);
    let lossy = relabeled.map_unitary(|s| {
        let s = s.extend_modes(&[ModeId::loss(&losses[0]), ModeId::loss(&losses[1])])?;
        let s = s.apply_mode_unitary(&[&h, &losses[0]], &u)?;
        s.apply_mode_unitary(&[&v, &losses[1]], &u)
    })?;
    lossy.trace_out(&[&losses[0], &losses[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectorSpec;
    use crate::metrics::fidelity_report;
    use crate::stats::binomial_sigma;

    fn config(theta: f64, phi: f64) -> ProtocolConfig {
        let mut c = ProtocolConfig { detectors: DetectorSpec::ideal(), ..Default::default() };
        c.memory.theta = theta;
        c.memory.phi = phi;
        c
    }

    /// Brute-force teleportation on three qubits (q, B, a) as plain 8-vectors
    /// with index 4q + 2B + a. Returns the normalized state of `a` after
    /// projecting (q, B) onto `bell` = [c00, c01, c10, c11].
    fn teleport_oracle(theta: f64, phi: f64, bell: [f64; 4]) -> (f64, [Complex64; 2]) {
        let input = [Complex64::new(theta.cos(), 0.0), Complex64::from_polar(theta.sin(), phi)];
        // Channel (|V⟩_B|S₁⟩ − |H⟩_B|S₂⟩)/√2 with H, S₁ ↦ 0 and V, S₂ ↦ 1.
        let s = FRAC_1_SQRT_2;
        let chan = |b: usize, a: usize| match (b, a) {
            (1, 0) => s,
            (0, 1) => -s,
            _ => 0.0,
        };
        let mut out = [Complex64::new(0.0, 0.0); 2];
        for a in 0..2 {
            for q in 0..2 {
                for b in 0..2 {
                    out[a] += bell[2 * q + b] * input[q] * chan(b, a);
                }
            }
        }
        let p = out[0].norm_sqr() + out[1].norm_sqr();
        let n = p.sqrt();
        (p, [out[0] / n, out[1] / n])
    }

    #[test]
    fn oracle_fixes_the_correction_table() {
        let s = FRAC_1_SQRT_2;
        for &(theta, phi) in &[(0.3, 1.1), (1.2, 4.0)] {
            let input = [Complex64::new(f64::cos(theta), 0.0), Complex64::from_polar(f64::sin(theta), phi)];
            let overlap = |a: [Complex64; 2]| (input[0].conj() * a[0] + input[1].conj() * a[1]).norm();
            // Ψ⁻ = (|HV⟩ − |VH⟩)/√2: the atom already holds the input.
            let (p, a) = teleport_oracle(theta, phi, [0.0, s, -s, 0.0]);
            assert!((p - 0.25).abs() < 1e-12 && (overlap(a) - 1.0).abs() < 1e-12);
            // Ψ⁺: the atom holds σz·input.
            let (p, a) = teleport_oracle(theta, phi, [0.0, s, s, 0.0]);
            assert!((p - 0.25).abs() < 1e-12);
            assert!((overlap([a[0], -a[1]]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_input_is_stored_exactly() {
        let r = memory_store(&config(0.0, 0.0)).unwrap();
        assert!((r.success_probability - 0.5).abs() < 1e-12);
        assert!((r.stored_fidelity - 1.0).abs() < 1e-12);
        let stored = r.stored.unwrap();
        let s1 = PureState::from_terms(stored.registry().clone(), [(vec![(ENSEMBLE_1, 1)], Complex64::new(1.0, 0.0))]).unwrap();
        assert!((stored.fidelity_with(&s1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stored_fidelity_on_grid() {
        for i in 0..5 {
            for j in 0..5 {
                let theta = PI * i as f64 / 4.0;
                let phi = 2.0 * PI * j as f64 / 5.0;
                let r = memory_store(&config(theta, phi)).unwrap();
                assert!((r.success_probability - 0.5).abs() < 1e-12);
                assert!((r.psi_minus_fidelity - 1.0).abs() < 1e-10, "θ={theta} φ={phi}");
                assert!((r.psi_plus_fidelity - 1.0).abs() < 1e-10, "θ={theta} φ={phi}");
                assert!((r.stored_fidelity - 1.0).abs() < 1e-10);
                assert!((r.readout_fidelity - 1.0).abs() < 1e-10);
                assert!((r.retrieval_probability - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn readout_examples() {
        let reg = Arc::new(ModeRegistry::with_modes([ModeId::atomic("S1"), ModeId::atomic("S2")], 6).unwrap());
        let s1 = PureState::from_terms(reg.clone(), [(vec![("S1", 1)], Complex64::new(1.0, 0.0))]).unwrap();
        let out = memory_readout(&MixedState::from_pure(&s1).unwrap(), 1.0).unwrap();
        let h = out.branches()[0].1.amplitude_of(&[("r:H", 1)]).unwrap();
        assert!((h.norm() - 1.0).abs() < 1e-15);

        let s = FRAC_1_SQRT_2;
        let plus = PureState::from_terms(
            reg.clone(),
            [(vec![("S1", 1)], Complex64::new(s, 0.0)), (vec![("S2", 1)], Complex64::new(s, 0.0))],
        )
        .unwrap();
        let out = memory_readout(&MixedState::from_pure(&plus).unwrap(), 1.0).unwrap();
        let input = input_qubit(PI / 4.0, 0.0).unwrap();
        let f = fidelity_report(&input, &input_encoding(), &out, &QubitEncoding::dual_rail("r:H", "r:V")).unwrap();
        assert!((f - 1.0).abs() < 1e-12);

        let out = memory_readout(&MixedState::from_pure(&s1).unwrap(), 0.8).unwrap();
        let click: f64 = out
            .branches()
            .iter()
            .map(|(w, b)| w * b.amplitude_of(&[("r:H", 1)]).unwrap().norm_sqr())
            .sum();
        assert!((click - 0.8).abs() < 1e-12);

        let two = PureState::from_terms(reg, [(vec![("S1", 1), ("S2", 1)], Complex64::new(1.0, 0.0))]).unwrap();
        assert!(matches!(memory_readout(&MixedState::from_pure(&two).unwrap(), 1.0), Err(Error::OutOfSector(_))));
    }

    #[test]
    fn readout_efficiency_reduces_retrieval_not_fidelity() {
        let mut c = config(1.0, 2.0);
        c.memory.retrieval_efficiency = 0.7;
        let r = memory_store(&c).unwrap();
        assert!((r.retrieval_probability - 0.7).abs() < 1e-12);
        assert!((r.readout_fidelity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sampled_success_is_half() {
        let mut c = config(0.7, 0.3);
        c.mode = Mode::Sampled;
        c.seed = Some(77);
        c.trials = 100_000;
        c.detectors = DetectorSpec::default();
        let r = memory_store(&c).unwrap();
        let s = r.sampled.unwrap();
        assert!((s.rate - 0.5).abs() < 3.0 * binomial_sigma(0.5, c.trials));
        assert!(s.mean_fidelity.unwrap() > 0.999);
    }

    #[test]
    fn event_ready_channel_matches_ideal_at_order_one() {
        let mut c = config(0.9, 1.3);
        c.memory.channel = Channel::EventReady;
        c.source.p0 = 0.02;
        let r = memory_store(&c).unwrap();
        assert!((r.success_probability - 0.5).abs() < 1e-12);
        assert!((r.stored_fidelity - 1.0).abs() < 1e-10);
    }
}

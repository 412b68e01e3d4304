use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{Mode, ProtocolConfig, SampledSummary, TrialRecord};
use crate::detection::{BellAnalyzer, Outcome, PreparedBell};
use crate::error::Result;
use crate::fock::{MixedState, PureState};
use crate::metrics::{concurrence, two_qubit_density, QubitEncoding};
use crate::rng::trial_rng;
use crate::sources::{dual_ensemble_source, epr_pair_mixed, ENSEMBLE_1, ENSEMBLE_2, STOKES_PATH};

/// Paths of the ancilla pair: A goes to the analyzer, B is kept.
pub const BELL_PATH_A: &str = "A";
pub const BELL_PATH_B: &str = "B";

const B_H: &str = "B:H";
const B_V: &str = "B:V";

#[derive(Debug, Clone)]
pub struct EventReadyReport {
    /// Exact herald probability with ideal detectors.
    pub success_probability: f64,
    pub psi_minus_probability: f64,
    pub psi_plus_probability: f64,
    /// p₀ / (2(1 + q₁ + q₂)), available at emission order 1.
    pub closed_form_probability: Option<f64>,
    /// p₀ / 2.
    pub leading_order_probability: f64,
    /// Exact herald probability with the configured detector imperfections.
    pub detector_success_probability: f64,
    pub heralded_fidelity: f64,
    pub psi_minus_fidelity: f64,
    /// Ψ⁺ branch after its phase flip on B:H.
    pub psi_plus_fidelity: f64,
    /// |⟨ψ₊,corrected|ψ₋⟩| when both branches are pure.
    pub correction_overlap: Option<f64>,
    /// Concurrence of the heralded atom/photon-B state, when it stays in the
    /// two-qubit sector.
    pub concurrence: Option<f64>,
    pub truncation_loss: f64,
    /// Heralded state with the Ψ⁺ correction applied.
    pub state: Option<MixedState>,
    pub psi_minus_state: Option<MixedState>,
    pub psi_plus_state: Option<MixedState>,
    pub sampled: Option<SampledSummary>,
    pub records: Vec<TrialRecord>,
}

/// (α|S₁⟩|V⟩_B − β|S₂⟩|H⟩_B)/‖·‖ on the registry of `like`.
pub fn heralded_target(like: &MixedState, alpha: Complex64, beta: Complex64) -> Result<PureState> {
    PureState::from_terms(
        like.registry().clone(),
        [(vec![(ENSEMBLE_1, 1), (B_V, 1)], alpha), (vec![(ENSEMBLE_2, 1), (B_H, 1)], -beta)],
    )?
    .normalize()
}

/// Phase flip on photon B that maps the Ψ⁺-heralded state onto the Ψ⁻ one.
fn correct(outcome: Outcome, state: &MixedState) -> Result<MixedState> {
    match outcome {
        Outcome::PsiPlus => state.map_unitary(|s| s.apply_phase(B_H, PI)),
        _ => Ok(state.clone()),
    }
}

fn prepare(config: &ProtocolConfig) -> Result<(PreparedBell, f64)> {
    let source = dual_ensemble_source(&config.source)?;
    let pair = epr_pair_mixed(BELL_PATH_A, BELL_PATH_B, config.source.epr_visibility)?;
    let joint = MixedState::from_pure(&source)?.tensor(&pair)?;
    let analyzer = BellAnalyzer::new(STOKES_PATH, BELL_PATH_A, config.detectors, config.rule.clone())?;
    Ok((analyzer.prepare(&joint)?, joint.truncation_loss()))
}

pub fn event_ready_generation(config: &ProtocolConfig) -> Result<EventReadyReport> {
    config.validate()?;
    let params = &config.source;
    let (prepared, truncation_loss) = prepare(config)?;
    let exact = prepared.exact()?;
    let fidelity = |s: &MixedState| -> Result<f64> { s.fidelity_with(&heralded_target(s, params.alpha, params.beta)?) };

    let psi_minus_state = exact.psi_minus.state.clone();
    let psi_plus_state = exact.psi_plus.state.as_ref().map(|s| correct(Outcome::PsiPlus, s)).transpose()?;
    let psi_minus_fidelity = psi_minus_state.as_ref().map(fidelity).transpose()?.unwrap_or(0.0);
    let psi_plus_fidelity = psi_plus_state.as_ref().map(fidelity).transpose()?.unwrap_or(0.0);
    let (pm, pp) = (exact.psi_minus.probability, exact.psi_plus.probability);
    let success_probability = pm + pp;

    let parts: Vec<(f64, MixedState)> = [(pm, &psi_minus_state), (pp, &psi_plus_state)]
        .into_iter()
        .filter_map(|(p, s)| s.clone().map(|s| (p, s)))
        .collect();
    let state = if parts.is_empty() { None } else { Some(MixedState::mix(parts)?) };
    let heralded_fidelity = state.as_ref().map(fidelity).transpose()?.unwrap_or(0.0);

    let correction_overlap = match (&psi_minus_state, &psi_plus_state) {
        (Some(m), Some(p)) => match (m.as_pure(1e-12), p.as_pure(1e-12)) {
            (Some(m), Some(p)) => Some(p.inner_product(&m)?.norm()),
            _ => None,
        },
        _ => None,
    };
    let concurrence = state.as_ref().and_then(|s| {
        two_qubit_density(s, &QubitEncoding::dual_rail(ENSEMBLE_1, ENSEMBLE_2), &QubitEncoding::dual_rail(B_H, B_V))
            .ok()
            .and_then(|rho| concurrence(&rho).ok())
    });

    let settings = params.compile();
    let closed_form_probability =
        (params.emission_order == 1).then(|| params.p0 / (2.0 * (1.0 + settings.q1 + settings.q2)));
    let detector_success_probability = {
        let p = prepared.outcome_probabilities();
        p[0] + p[1]
    };

    let (sampled, records) = match config.mode {
        Mode::Exact => {
            let records = if config.keep_records {
                [(Outcome::PsiMinus, pm, psi_minus_fidelity), (Outcome::PsiPlus, pp, psi_plus_fidelity), (Outcome::Fail, exact.fail, 0.0)]
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
            let records = run_sampled(config, &prepared, &fidelity)?;
            let summary = SampledSummary::from_records(&records);
            (Some(summary), if config.keep_records { records } else { Vec::new() })
        }
    };

    Ok(EventReadyReport {
        success_probability,
        psi_minus_probability: pm,
        psi_plus_probability: pp,
        closed_form_probability,
        leading_order_probability: params.p0 / 2.0,
        detector_success_probability,
        heralded_fidelity,
        psi_minus_fidelity,
        psi_plus_fidelity,
        correction_overlap,
        concurrence,
        truncation_loss,
        state,
        psi_minus_state,
        psi_plus_state,
        sampled,
        records,
    })
}

/// Sampled windows. The fidelity after each possible correction is cached
/// per true photon-number pattern, so a window costs only the draws.
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
                entry[k] = Some(fidelity(&correct(o, s)?)?);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectorSpec;
    use crate::sources::SourceParams;
    use crate::stats::binomial_sigma;

    fn config(p0: f64, order: u32) -> ProtocolConfig {
        ProtocolConfig {
            source: SourceParams { emission_order: order, ..SourceParams::balanced(p0) },
            detectors: DetectorSpec::ideal(),
            ..Default::default()
        }
    }

    #[test]
    fn exact_probability_and_fidelity_at_order_one() {
        for &p0 in &[0.005, 0.01, 0.02, 0.1] {
            let r = event_ready_generation(&config(p0, 1)).unwrap();
            let closed = p0 / (2.0 * (1.0 + p0));
            assert!((r.success_probability - closed).abs() < 1e-12, "p0={p0}");
            assert_eq!(r.closed_form_probability.map(|c| (c - closed).abs() < 1e-15), Some(true));
            assert_eq!(r.leading_order_probability, p0 / 2.0);
            assert!((r.psi_minus_probability - closed / 2.0).abs() < 1e-12);
            assert!((r.psi_minus_fidelity - 1.0).abs() < 1e-12);
            assert!((r.psi_plus_fidelity - 1.0).abs() < 1e-12);
            assert!((r.heralded_fidelity - 1.0).abs() < 1e-12);
            assert!((r.correction_overlap.unwrap() - 1.0).abs() < 1e-12);
            assert!((r.concurrence.unwrap() - 1.0).abs() < 1e-10);
        }
        let r = event_ready_generation(&config(0.01, 1)).unwrap();
        assert!((r.success_probability - 0.005).abs() < 1e-4);
    }

    #[test]
    fn uncorrected_psi_plus_branch_is_orthogonal_to_target() {
        let (prepared, _) = prepare(&config(0.02, 1)).unwrap();
        let raw = prepared.exact().unwrap().psi_plus.state.unwrap();
        let target = heralded_target(&raw, Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        assert!(raw.fidelity_with(&target).unwrap() < 1e-12);
    }

    #[test]
    fn unbalanced_branches_are_heralded_faithfully() {
        let mut c = config(0.02, 1);
        c.source.alpha = Complex64::new(0.6, 0.0);
        c.source.beta = Complex64::from_polar(0.8, 0.7);
        let r = event_ready_generation(&c).unwrap();
        assert!((r.heralded_fidelity - 1.0).abs() < 1e-12);
        assert!((r.success_probability - r.closed_form_probability.unwrap()).abs() < 1e-12);
        assert!((r.concurrence.unwrap() - 2.0 * 0.6 * 0.8).abs() < 1e-10);
    }

    #[test]
    fn second_order_contamination_is_linear_in_p0() {
        let mut last = 0.0;
        for k in 1..=10 {
            let p0 = 0.01 * k as f64;
            let r = event_ready_generation(&config(p0, 2)).unwrap();
            let deficit = 1.0 - r.heralded_fidelity;
            assert!(deficit > last, "p0={p0}");
            assert!(deficit / p0 <= 1.5, "p0={p0}: {}", deficit / p0);
            last = deficit;
        }
    }

    #[test]
    fn sampled_rate_within_three_sigma() {
        let mut c = config(0.02, 1);
        c.mode = Mode::Sampled;
        c.seed = Some(2024);
        c.trials = 100_000;
        c.detectors = DetectorSpec::default();
        let r = event_ready_generation(&c).unwrap();
        let s = r.sampled.unwrap();
        let p = r.success_probability;
        assert!((s.rate - p).abs() < 3.0 * binomial_sigma(p, c.trials));
        assert!(s.rate >= 0.0091 && s.rate <= 0.0109);
        assert!(s.ci_low < p && p < s.ci_high);
        assert!(s.mean_fidelity.unwrap() > 0.99);
    }

    #[test]
    fn sampled_results_do_not_depend_on_thread_count() {
        let mut c = config(0.05, 1);
        c.mode = Mode::Sampled;
        c.seed = Some(5);
        c.trials = 5_000;
        c.keep_records = true;
        c.detectors = DetectorSpec { efficiency: 0.9, dark_prob: 1e-3, resolving: false };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| event_ready_generation(&c).unwrap().records)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn dark_counts_herald_the_lone_ancilla_photon() {
        // With p₀ = 0 only photon A reaches the analyzer, so one dark click
        // on a matching detector completes a herald: rate ≈ 2·dark_prob.
        for &d in &[1e-3, 1e-4] {
            let mut c = config(0.0, 1);
            c.detectors = DetectorSpec { efficiency: 1.0, dark_prob: d, resolving: false };
            let r = event_ready_generation(&c).unwrap();
            assert_eq!(r.success_probability, 0.0);
            let rel = r.detector_success_probability / (2.0 * d);
            assert!((rel - 1.0).abs() < 3.0 * d, "{rel}");
        }
    }
}

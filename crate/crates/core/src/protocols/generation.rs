use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;

use super::{Mode, ProtocolConfig};
use crate::error::{Error, Result};
use crate::fock::{BasisVector, MixedState, PureState};
use crate::metrics::{concurrence, entropy, two_qubit_density, QubitEncoding};
use crate::rng::trial_rng;
use crate::sources::{dual_ensemble_source, ENSEMBLE_1, ENSEMBLE_2, STOKES_PATH};

#[derive(Debug, Clone)]
pub struct GenerationReport {
    /// Source output split into branches of fixed atomic excitation number.
    pub state: MixedState,
    /// Branch weights indexed by atomic excitation number.
    pub sector_weights: Vec<f64>,
    pub purity: f64,
    /// Probability of exactly one Stokes photon.
    pub one_photon_probability: f64,
    /// Fidelity of the one-photon-conditioned state with α|S₁⟩|H⟩ + β|S₂⟩|V⟩.
    pub one_photon_fidelity: f64,
    /// Concurrence and entanglement entropy of the one-photon state restricted
    /// to the atom/photon two-qubit sector.
    pub concurrence: f64,
    pub entropy: f64,
    pub truncation_loss: f64,
    /// Sampled counts per excitation number (sampled mode).
    pub sampled_sector_counts: Option<Vec<u64>>,
}

fn branch_target(like: &PureState, alpha: Complex64, beta: Complex64) -> Result<PureState> {
    let (h, v) = (format!("{STOKES_PATH}:H"), format!("{STOKES_PATH}:V"));
    PureState::from_terms(
        like.registry().clone(),
        [(vec![(ENSEMBLE_1, 1), (h.as_str(), 1)], alpha), (vec![(ENSEMBLE_2, 1), (v.as_str(), 1)], beta)],
    )
}

pub fn generate_entanglement(config: &ProtocolConfig) -> Result<GenerationReport> {
    config.validate()?;
    let params = &config.source;
    let source = dual_ensemble_source(params)?;
    let atoms = source.count_in(&[ENSEMBLE_1, ENSEMBLE_2])?;
    let sectors = source.split_by(|b| atoms(b));
    let sector_weights: Vec<f64> = (0..=params.emission_order)
        .map(|n| sectors.get(&n).map_or(0.0, |s| s.norm_sqr()))
        .collect();
    let state = MixedState::from_weighted(sectors.into_values().map(|s| (1.0, s)))?;
    let purity = state.purity()?;

    let (h, v) = (format!("{STOKES_PATH}:H"), format!("{STOKES_PATH}:V"));
    let photons = source.count_in(&[h.as_str(), v.as_str()])?;
    let one = source.filter_terms(|b| photons(b) == 1);
    let one_photon_probability = one.norm_sqr();
    let (one_photon_fidelity, conc, ent) = if one_photon_probability > 0.0 {
        let one = one.normalize()?;
        let fid = one.fidelity(&branch_target(&one, params.alpha, params.beta)?.normalize()?)?;
        let total = one.count_in(&one.registry().modes().iter().map(|m| m.name()).collect::<Vec<_>>())?;
        let logical = one.filter_terms(|b| atoms(b) == 1 && total(b) == 2).normalize()?;
        let rho = two_qubit_density(
            &MixedState::from_pure(&logical)?,
            &QubitEncoding::dual_rail(ENSEMBLE_1, ENSEMBLE_2),
            &QubitEncoding::dual_rail(&h, &v),
        )?;
        (fid, concurrence(&rho)?, entropy(&logical, &[ENSEMBLE_1, ENSEMBLE_2])?)
    } else {
        (0.0, 0.0, 0.0)
    };

    let sampled_sector_counts = match config.mode {
        Mode::Exact => None,
        Mode::Sampled => {
            let sampler = WeightedIndex::new(&sector_weights).map_err(|_| Error::ZeroNorm)?;
            let seed = config.seed();
            let draws: Vec<usize> =
                (0..config.trials).into_par_iter().map(|i| sampler.sample(&mut trial_rng(seed, i))).collect();
            let mut counts = vec![0u64; sector_weights.len()];
            for d in draws {
                counts[d] += 1;
            }
            Some(counts)
        }
    };

    Ok(GenerationReport {
        truncation_loss: state.truncation_loss(),
        state,
        sector_weights,
        purity,
        one_photon_probability,
        one_photon_fidelity,
        concurrence: conc,
        entropy: ent,
        sampled_sector_counts,
    })
}

/// Report labels of the Bell components, in coefficient order.
pub const BELL_LABELS: [&str; 4] = ["phi_plus", "phi_minus", "psi_plus", "psi_minus"];

/// A state written as Σᵢ cᵢ |Bellᵢ⟩ ⊗ |restᵢ⟩ with normalized rests.
#[derive(Debug, Clone)]
pub struct BellDecomposition {
    /// Coefficients of |Φ⁺⟩, |Φ⁻⟩, |Ψ⁺⟩, |Ψ⁻⟩. Each rest is phased so its
    /// first nonzero amplitude is real and positive.
    pub coefficients: [Complex64; 4],
    pub rests: [Option<PureState>; 4],
    /// ‖ψ − Σᵢ cᵢ |Bellᵢ⟩|restᵢ⟩‖.
    pub reconstruction_error: f64,
}

impl BellDecomposition {
    pub fn weights(&self) -> [f64; 4] {
        self.coefficients.map(|c| c.norm_sqr())
    }
}

/// Bell amplitudes ⟨xy|Bellᵢ⟩ for x, y ∈ {0, 1}, rows in BELL_LABELS order.
const BELL_TABLE: [[f64; 4]; 4] = [
    // |00⟩, |01⟩, |10⟩, |11⟩
    [FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, 0.0, 0.0, -FRAC_1_SQRT_2],
    [0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
    [0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0],
];

/// Decomposes `state` over the Bell basis of the qubits `a` ⊗ `b`. Every
/// term must put exactly one of the two basis patterns on each qubit.
pub fn bell_decompose(state: &PureState, a: &QubitEncoding, b: &QubitEncoding) -> Result<BellDecomposition> {
    let reg = state.registry();
    let idx_of = |enc: &QubitEncoding| -> Result<Vec<usize>> { enc.modes().iter().map(|m| reg.index_of(m)).collect() };
    let (ia, ib) = (idx_of(a)?, idx_of(b)?);
    let qubit: Vec<usize> = ia.iter().chain(&ib).copied().collect();
    let bit = |enc: &QubitEncoding, idx: &[usize], occ: &BasisVector| -> Option<usize> {
        let pat: Vec<u8> = idx.iter().map(|&i| occ.get(i)).collect();
        (0..2).find(|&k| enc.basis(k) == pat.as_slice())
    };

    // ψ = Σ_xy |xy⟩ ⊗ |r_xy⟩
    let mut parts: [BTreeMap<BasisVector, Complex64>; 4] = Default::default();
    for (occ, c) in state.terms() {
        let (x, y) = match (bit(a, &ia, occ), bit(b, &ib, occ)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::NotQubit(format!("term {occ} is outside the two-qubit sector"))),
        };
        let rest: Vec<u8> =
            (0..reg.len()).filter(|i| !qubit.contains(i)).map(|i| occ.get(i)).collect();
        parts[2 * x + y].insert(BasisVector::new(rest), *c);
    }

    let rest_reg = std::sync::Arc::new(reg.without(&qubit));
    let mut coefficients = [Complex64::new(0.0, 0.0); 4];
    let mut rests: [Option<PureState>; 4] = Default::default();
    let mut raw: [BTreeMap<BasisVector, Complex64>; 4] = Default::default();
    for (k, row) in BELL_TABLE.iter().enumerate() {
        let mut acc: BTreeMap<BasisVector, Complex64> = BTreeMap::new();
        for (xy, part) in parts.iter().enumerate() {
            if row[xy] == 0.0 {
                continue;
            }
            for (r, c) in part {
                *acc.entry(r.clone()).or_insert(Complex64::new(0.0, 0.0)) += c * row[xy];
            }
        }
        let norm = acc.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-14 {
            continue;
        }
        let lead = acc.values().find(|c| c.norm() > 1e-14 * norm).copied().unwrap_or(Complex64::new(1.0, 0.0));
        let phase = lead / lead.norm();
        coefficients[k] = phase * norm;
        let normalized: BTreeMap<BasisVector, Complex64> =
            acc.iter().map(|(r, c)| (r.clone(), c / (phase * norm))).collect();
        rests[k] = Some(PureState::from_map(rest_reg.clone(), normalized.clone(), 0.0));
        raw[k] = normalized;
    }

    // Rebuild Σᵢ cᵢ Bellᵢ(xy) restᵢ term by term and compare.
    let mut error = 0.0;
    let mut seen = std::collections::BTreeSet::new();
    for xy in 0..4 {
        let mut keys: Vec<&BasisVector> = parts[xy].keys().collect();
        keys.extend(raw.iter().flat_map(|m| m.keys()));
        for r in keys {
            if !seen.insert((xy, r.clone())) {
                continue;
            }
            let rebuilt: Complex64 = (0..4)
                .map(|k| coefficients[k] * BELL_TABLE[k][xy] * raw[k].get(r).copied().unwrap_or_default())
                .sum();
            let orig = parts[xy].get(r).copied().unwrap_or_default();
            error += (orig - rebuilt).norm_sqr();
        }
    }
    Ok(BellDecomposition { coefficients, rests, reconstruction_error: error.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{epr_pair, SourceParams};

    fn config(p0: f64) -> ProtocolConfig {
        ProtocolConfig { source: SourceParams::balanced(p0), ..Default::default() }
    }

    #[test]
    fn branch_weights_and_purity_match_closed_form() {
        for &p0 in &[0.001, 0.01, 0.05, 0.1] {
            let r = generate_entanglement(&config(p0)).unwrap();
            assert!((r.sector_weights[0] - 1.0 / (1.0 + p0)).abs() < 1e-12);
            assert!((r.sector_weights[1] - p0 / (1.0 + p0)).abs() < 1e-12);
            let mut w = r.state.weights();
            w.sort_by(|a, b| b.total_cmp(a));
            assert!((w[0] - 1.0 / (1.0 + p0)).abs() < 1e-12);
            let closed = (1.0 + p0 * p0) / (1.0 + p0).powi(2);
            assert!((r.purity - closed).abs() < 1e-12, "p0={p0}");
            assert!((r.one_photon_fidelity - 1.0).abs() < 1e-12);
            assert!((r.concurrence - 1.0).abs() < 1e-10);
            assert!((r.entropy - 1.0).abs() < 1e-12);
        }
        let r = generate_entanglement(&config(0.01)).unwrap();
        assert!((r.sector_weights[0] - 0.990099).abs() < 1e-6 && (r.sector_weights[1] - 0.009900).abs() < 1e-6);
    }

    #[test]
    fn zero_p0_is_pure_vacuum() {
        let r = generate_entanglement(&config(0.0)).unwrap();
        assert_eq!(r.state.len(), 1);
        assert_eq!(r.sector_weights, vec![1.0, 0.0]);
        assert_eq!(r.purity, 1.0);
        assert_eq!(r.one_photon_probability, 0.0);
    }

    #[test]
    fn sampled_sector_counts_track_weights() {
        let mut c = config(0.1);
        c.mode = Mode::Sampled;
        c.seed = Some(9);
        c.trials = 20_000;
        let r = generate_entanglement(&c).unwrap();
        let counts = r.sampled_sector_counts.unwrap();
        let p = r.sector_weights[1];
        let sigma = (p * (1.0 - p) / 20_000.0).sqrt();
        assert!((counts[1] as f64 / 20_000.0 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn concurrence_follows_amplitudes() {
        for &a2 in &[0.1f64, 0.3, 0.5, 0.9] {
            let mut c = config(0.02);
            c.source.alpha = Complex64::new(a2.sqrt(), 0.0);
            c.source.beta = Complex64::new((1.0f64 - a2).sqrt(), 0.0);
            let r = generate_entanglement(&c).unwrap();
            let want = 2.0 * (a2 * (1.0 - a2)).sqrt();
            assert!((r.concurrence - want).abs() < 1e-10, "a2={a2}");
            assert!((r.one_photon_fidelity - 1.0).abs() < 1e-12);
        }
    }

    fn phot(p: &str) -> QubitEncoding {
        QubitEncoding::dual_rail(&format!("{p}:H"), &format!("{p}:V"))
    }

    #[test]
    fn decompose_trivial_inputs() {
        let phi = epr_pair("p", "A").unwrap();
        let d = bell_decompose(&phi, &phot("p"), &phot("A")).unwrap();
        assert!((d.coefficients[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(d.coefficients[1..].iter().all(|c| c.norm() < 1e-15));
        assert!(d.reconstruction_error < 1e-15);

        let reg = phi.registry().clone();
        let s = FRAC_1_SQRT_2;
        let singlet = PureState::from_terms(
            reg,
            [(vec![("p:H", 1), ("A:V", 1)], Complex64::new(s, 0.0)), (vec![("p:V", 1), ("A:H", 1)], Complex64::new(-s, 0.0))],
        )
        .unwrap();
        let d = bell_decompose(&singlet, &phot("p"), &phot("A")).unwrap();
        assert!((d.weights()[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decompose_three_photon_term() {
        let source = dual_ensemble_source(&SourceParams::balanced(0.01)).unwrap();
        let photons = source.count_in(&["p:H", "p:V"]).unwrap();
        let one = source.filter_terms(|b| photons(b) == 1).normalize().unwrap();
        let joint = one.tensor(&epr_pair("A", "B").unwrap()).unwrap();
        let d = bell_decompose(&joint, &phot("p"), &phot("A")).unwrap();
        for (k, w) in d.weights().iter().enumerate() {
            assert!((w - 0.25).abs() < 1e-12, "{}", BELL_LABELS[k]);
            assert!((d.coefficients[k].norm() - 0.5).abs() < 1e-12);
        }
        assert!(d.reconstruction_error < 1e-12);
        // The Ψ⁻ rest is (|S₁⟩|V⟩_B − |S₂⟩|H⟩_B)/√2 up to phase.
        let rest = d.rests[3].as_ref().unwrap();
        let s1v = rest.amplitude_of(&[("S1", 1), ("B:V", 1)]).unwrap();
        let s2h = rest.amplitude_of(&[("S2", 1), ("B:H", 1)]).unwrap();
        assert!((s1v.norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s1v + s2h).norm() < 1e-12);
    }

    #[test]
    fn decompose_rejects_non_qubit_terms() {
        let source = dual_ensemble_source(&SourceParams::balanced(0.01)).unwrap();
        let joint = source.tensor(&epr_pair("A", "B").unwrap()).unwrap();
        assert!(matches!(bell_decompose(&joint, &phot("p"), &phot("A")), Err(Error::NotQubit(_))));
    }
}

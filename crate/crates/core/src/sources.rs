//! Probabilistic excitation sources: Raman Stokes emission from an atomic
//! ensemble, the two-ensemble polarization source, the single-ensemble
//! dual-transition source and the ancilla EPR photon pair.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{photon_name, MixedState, ModeId, ModeRegistry, Polarization, PureState};
use crate::optics::{filter, half_wave, pbs_attenuator, phase_plate, quarter_wave};

/// Atomic collective modes of the two-ensemble source.
pub const ENSEMBLE_1: &str = "S1";
pub const ENSEMBLE_2: &str = "S2";
/// Collective modes of the single-ensemble source.
pub const ENSEMBLE_R: &str = "S_r";
pub const ENSEMBLE_L: &str = "S_l";
/// Forward Stokes path.
pub const STOKES_PATH: &str = "p";

pub const MAX_P0: f64 = 0.2;
const AMPLITUDE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    /// Probability of one Stokes photon per pump pulse.
    pub p0: f64,
    /// Highest excitation number kept in the emission expansion.
    pub emission_order: u32,
    pub alpha: Complex64,
    pub beta: Complex64,
    /// Coherence of the ancilla EPR pair; 1 is the ideal |Φ⁺⟩.
    pub epr_visibility: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        SourceParams { p0: 0.01, emission_order: 1, alpha: s, beta: s, epr_visibility: 1.0 }
    }
}

impl SourceParams {
    pub fn balanced(p0: f64) -> Self {
        SourceParams { p0, ..Default::default() }
    }

    /// Branch amplitudes realized by a PBS of transmissivity `t` under equal
    /// pumping: |α|²/|β|² = t, with `phase` = arg(β/α).
    pub fn from_transmissivity(p0: f64, t: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange { name: "t", value: t, range: "[0, 1]" });
        }
        let alpha = Complex64::new((t / (1.0 + t)).sqrt(), 0.0);
        let beta = Complex64::from_polar((1.0 / (1.0 + t)).sqrt(), phase);
        Ok(SourceParams { p0, alpha, beta, ..Default::default() })
    }

    pub fn validate(&self, cutoff: u8) -> Result<()> {
        if !(0.0..=MAX_P0).contains(&self.p0) {
            return Err(Error::OutOfRange { name: "p0", value: self.p0, range: "[0, 0.2]" });
        }
        if self.emission_order < 1 {
            return Err(Error::OutOfRange {
                name: "emission_order",
                value: self.emission_order as f64,
                range: "[1, cutoff/2]",
            });
        }
        check_order(self.emission_order, cutoff)?;
        let n = self.alpha.norm_sqr() + self.beta.norm_sqr();
        if (n - 1.0).abs() > AMPLITUDE_TOLERANCE {
            return Err(Error::OutOfRange { name: "|alpha|^2+|beta|^2", value: n, range: "{1}" });
        }
        if !(0.0..=1.0).contains(&self.epr_visibility) {
            return Err(Error::OutOfRange {
                name: "epr_visibility",
                value: self.epr_visibility,
                range: "[0, 1]",
            });
        }
        Ok(())
    }

    /// The pump and attenuator settings that realize (α, β).
    pub fn compile(&self) -> SourceSettings {
        compile_transmissivity(self.p0, self.alpha, self.beta)
    }
}

/// Per-ensemble emission probabilities and the PBS transmissivity applied to
/// ensemble-1 light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSettings {
    pub t: f64,
    pub q1: f64,
    pub q2: f64,
}

/// Chooses t = min(1, |α|²/|β|²) and pumps so that the transmitted branch
/// weights are p₀|α|² and p₀|β|². When |α| ≤ |β| both ensembles see the
/// same pump; otherwise ensemble 2 is pumped more weakly.
pub fn compile_transmissivity(p0: f64, alpha: Complex64, beta: Complex64) -> SourceSettings {
    let (a2, b2) = (alpha.norm_sqr(), beta.norm_sqr());
    let t = if a2 >= b2 { 1.0 } else { a2 / b2 };
    let q1 = if a2 == 0.0 { 0.0 } else { p0 * a2 / t };
    SourceSettings { t, q1, q2: p0 * b2 }
}

fn check_order(order: u32, cutoff: u8) -> Result<()> {
    if 2 * order > cutoff as u32 {
        return Err(Error::OrderExceedsCutoff { order, needed: 2 * order, cutoff });
    }
    Ok(())
}

/// Raman scattering on an empty ensemble/Stokes pair:
/// Σ_{n ≤ order} p^{n/2} |n⟩_S |n⟩_stokes ⊗ |input⟩, normalized.
pub fn raman_emit(state: &PureState, ensemble: &str, stokes: &str, p: f64, order: u32) -> Result<PureState> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange { name: "p0", value: p, range: "[0, 1]" });
    }
    check_order(order, state.registry().cutoff())?;
    for mode in [ensemble, stokes] {
        let i = state.registry().index_of(mode)?;
        if state.terms().any(|(b, _)| b.get(i) != 0) {
            return Err(Error::OccupiedMode(mode.to_string()));
        }
    }
    let mut out = state.clone();
    let mut term = state.clone();
    let mut factorial = 1.0;
    for n in 1..=order {
        if p == 0.0 {
            break;
        }
        // (S†a†)ⁿ|0,0⟩ = n!|n,n⟩
        term = term.create(ensemble)?.create(stokes)?;
        factorial *= n as f64;
        out = out.add(&term.scale(Complex64::new(p.powf(n as f64 / 2.0) / factorial, 0.0)))?;
    }
    out.normalize()
}

fn fresh_registry(modes: impl IntoIterator<Item = ModeId>) -> Result<Arc<ModeRegistry>> {
    Ok(Arc::new(ModeRegistry::with_modes(modes, ModeRegistry::DEFAULT_CUTOFF)?))
}

/// Drops terms with more than `order` atomic excitations in total.
fn truncate_atomic(state: &PureState, ensembles: &[&str], order: u32) -> Result<PureState> {
    let count = state.count_in(ensembles)?;
    state.filter_terms(|b| count(b) <= order).normalize()
}

/// Two ensembles pumped in turn into one forward path: ensemble 1 emits on
/// R, the λ/2 plate turns it to L, the tunable PBS sets its weight,
/// ensemble 2 then emits on R, the relative phase goes on R and the λ/4
/// plate maps L → H, R → V. One-Stokes sector: α|S₁⟩|H⟩ + β|S₂⟩|V⟩.
pub fn dual_ensemble_source(params: &SourceParams) -> Result<PureState> {
    params.validate(ModeRegistry::DEFAULT_CUTOFF)?;
    let reg = fresh_registry([
        ModeId::atomic(ENSEMBLE_1),
        ModeId::atomic(ENSEMBLE_2),
        ModeId::photon(STOKES_PATH, Polarization::R),
        ModeId::photon(STOKES_PATH, Polarization::L),
    ])?;
    let settings = params.compile();
    let r = photon_name(STOKES_PATH, Polarization::R);
    let order = params.emission_order;
    let mut s = PureState::vacuum(reg);
    s = raman_emit(&s, ENSEMBLE_1, &r, settings.q1, order)?;
    s = half_wave(&s, STOKES_PATH)?;
    s = pbs_attenuator(&s, STOKES_PATH, settings.t)?;
    s = filter(&s, STOKES_PATH)?;
    s = raman_emit(&s, ENSEMBLE_2, &r, settings.q2, order)?;
    s = phase_plate(&s, &r, relative_phase(params))?;
    s = quarter_wave(&s, STOKES_PATH)?;
    truncate_atomic(&s, &[ENSEMBLE_1, ENSEMBLE_2], order)
}

fn relative_phase(params: &SourceParams) -> f64 {
    if params.alpha.norm() == 0.0 || params.beta.norm() == 0.0 {
        0.0
    } else {
        (params.beta / params.alpha).arg()
    }
}

/// One ensemble with two Raman channels: S_r correlated with R photons and
/// S_l with L photons, branch amplitudes taken directly from (α, β). The
/// one-Stokes sector is α|S_r⟩|R⟩ + β|S_l⟩|L⟩.
pub fn single_ensemble_source(params: &SourceParams) -> Result<PureState> {
    params.validate(ModeRegistry::DEFAULT_CUTOFF)?;
    let reg = fresh_registry([
        ModeId::atomic(ENSEMBLE_R),
        ModeId::atomic(ENSEMBLE_L),
        ModeId::photon(STOKES_PATH, Polarization::R),
        ModeId::photon(STOKES_PATH, Polarization::L),
    ])?;
    let r = photon_name(STOKES_PATH, Polarization::R);
    let l = photon_name(STOKES_PATH, Polarization::L);
    let order = params.emission_order;
    let mut s = PureState::vacuum(reg);
    s = raman_emit(&s, ENSEMBLE_R, &r, params.p0 * params.alpha.norm_sqr(), order)?;
    s = raman_emit(&s, ENSEMBLE_L, &l, params.p0 * params.beta.norm_sqr(), order)?;
    s = phase_plate(&s, &r, params.alpha.arg())?;
    s = phase_plate(&s, &l, params.beta.arg())?;
    truncate_atomic(&s, &[ENSEMBLE_R, ENSEMBLE_L], order)
}

/// (|H⟩_A|H⟩_B + |V⟩_A|V⟩_B)/√2 on fresh linear-basis paths.
pub fn epr_pair(path_a: &str, path_b: &str) -> Result<PureState> {
    epr_state(path_a, path_b, 1.0)
}

fn epr_state(path_a: &str, path_b: &str, sign: f64) -> Result<PureState> {
    let reg = fresh_registry([
        ModeId::photon(path_a, Polarization::H),
        ModeId::photon(path_a, Polarization::V),
        ModeId::photon(path_b, Polarization::H),
        ModeId::photon(path_b, Polarization::V),
    ])?;
    let (ah, av) = (photon_name(path_a, Polarization::H), photon_name(path_a, Polarization::V));
    let (bh, bv) = (photon_name(path_b, Polarization::H), photon_name(path_b, Polarization::V));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    PureState::from_terms(
        reg,
        [
            (vec![(ah.as_str(), 1), (bh.as_str(), 1)], Complex64::new(s, 0.0)),
            (vec![(av.as_str(), 1), (bv.as_str(), 1)], Complex64::new(sign * s, 0.0)),
        ],
    )
}

/// EPR pair with its HH/VV coherence scaled by `visibility`: the mixture
/// (1+v)/2 |Φ⁺⟩⟨Φ⁺| + (1−v)/2 |Φ⁻⟩⟨Φ⁻|.
pub fn epr_pair_mixed(path_a: &str, path_b: &str, visibility: f64) -> Result<MixedState> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::OutOfRange { name: "epr_visibility", value: visibility, range: "[0, 1]" });
    }
    let plus = epr_state(path_a, path_b, 1.0)?;
    if visibility == 1.0 {
        return MixedState::from_pure(&plus);
    }
    let minus = epr_state(path_a, path_b, -1.0)?;
    MixedState::from_weighted([((1.0 + visibility) / 2.0, plus), ((1.0 - visibility) / 2.0, minus)])
}

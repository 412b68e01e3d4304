//! Linear optical elements acting on [`PureState`]s.
//!
//! Wave plates and the polarization splitter are exact mode relabelings or
//! permutations. The tunable PBS is a beam splitter onto a fresh loss mode,
//! so every element stays unitary on the system-plus-loss space.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fock::{photon_name, MixedState, ModeId, Polarization, PureState};
use crate::linalg::CMatrix;

fn require_pols(state: &PureState, path: &str, pols: &[Polarization], why: &str) -> Result<()> {
    let have = state.registry().path_pols(path);
    if pols.iter().all(|p| have.contains(p)) {
        Ok(())
    } else {
        Err(Error::Basis { path: path.to_string(), reason: why.to_string() })
    }
}

/// λ/2 plate: swaps the R and L modes of a path.
pub fn half_wave(state: &PureState, path: &str) -> Result<PureState> {
    require_pols(state, path, &[Polarization::R, Polarization::L], "half-wave plate needs R and L modes")?;
    let swap = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let r = photon_name(path, Polarization::R);
    let l = photon_name(path, Polarization::L);
    state.apply_mode_unitary(&[&r, &l], &swap)
}

/// λ/4 plate taking the circular basis to the linear one: L → H, R → V with
/// no extra phases.
pub fn quarter_wave(state: &PureState, path: &str) -> Result<PureState> {
    let have = state.registry().path_pols(path);
    if have.iter().any(|p| p.is_linear()) {
        return Err(Error::Basis { path: path.into(), reason: "already in the linear basis".into() });
    }
    require_pols(state, path, &[Polarization::R, Polarization::L], "quarter-wave plate needs R and L modes")?;
    state.relabel_modes(&[
        (&photon_name(path, Polarization::L), ModeId::photon(path, Polarization::H)),
        (&photon_name(path, Polarization::R), ModeId::photon(path, Polarization::V)),
    ])
}

/// Inverse of [`quarter_wave`]: H → L, V → R.
pub fn quarter_wave_inverse(state: &PureState, path: &str) -> Result<PureState> {
    let have = state.registry().path_pols(path);
    if have.iter().any(|p| p.is_circular()) {
        return Err(Error::Basis { path: path.into(), reason: "already in the circular basis".into() });
    }
    require_pols(state, path, &[Polarization::H, Polarization::V], "needs H and V modes")?;
    state.relabel_modes(&[
        (&photon_name(path, Polarization::H), ModeId::photon(path, Polarization::L)),
        (&photon_name(path, Polarization::V), ModeId::photon(path, Polarization::R)),
    ])
}

/// Name of the `k`-th loss mode attached to the L mode of `path`.
pub fn loss_mode_name(path: &str, k: usize) -> String {
    format!("loss:{path}:L#{k}")
}

/// Loss modes created by attenuators on `path`, in creation order.
pub fn loss_modes(state: &PureState, path: &str) -> Vec<String> {
    (0..)
        .map(|k| loss_mode_name(path, k))
        .take_while(|name| state.registry().contains(name))
        .collect()
}

/// Tunable PBS: passes the L mode with amplitude transmissivity √t and
/// routes the rest into a fresh loss mode. The R mode is untouched.
pub fn pbs_attenuator(state: &PureState, path: &str, t: f64) -> Result<PureState> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange { name: "t", value: t, range: "[0, 1]" });
    }
    require_pols(state, path, &[Polarization::L], "attenuator needs an L mode")?;
    let loss = loss_mode_name(path, loss_modes(state, path).len());
    let extended = state.extend_modes(&[ModeId::loss(&loss)])?;
    let (tr, rf) = (t.sqrt(), (1.0 - t).sqrt());
    let u = CMatrix::from_real_rows(&[vec![tr, -rf], vec![rf, tr]]);
    extended.apply_mode_unitary(&[&photon_name(path, Polarization::L), &loss], &u)
}

/// The 2×2 beam-splitter matrix [[√(1−r), √r], [√r, −√(1−r)]].
pub fn beam_splitter_matrix(r: f64) -> CMatrix {
    let (t, s) = ((1.0 - r).sqrt(), r.sqrt());
    CMatrix::from_real_rows(&[vec![t, s], vec![s, -t]])
}

/// Beam splitter of reflectivity `r` between two paths, applied
/// independently to each polarization. The output ports keep the input path
/// names.
pub fn beam_splitter(state: &PureState, path_a: &str, path_b: &str, r: f64) -> Result<PureState> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::OutOfRange { name: "r", value: r, range: "[0, 1]" });
    }
    let mut pa = state.registry().path_pols(path_a);
    let mut pb = state.registry().path_pols(path_b);
    pa.sort();
    pb.sort();
    if pa.is_empty() || pa != pb {
        return Err(Error::Basis {
            path: format!("{path_a}/{path_b}"),
            reason: "beam splitter inputs must share a polarization basis".into(),
        });
    }
    let u = beam_splitter_matrix(r);
    let mut out = state.clone();
    for pol in pa {
        out = out.apply_mode_unitary(&[&photon_name(path_a, pol), &photon_name(path_b, pol)], &u)?;
    }
    Ok(out)
}

/// Output paths of [`pol_splitter`]: (H port, V port).
pub fn pol_splitter_ports(path: &str) -> (String, String) {
    (format!("{path}/h"), format!("{path}/v"))
}

/// Two-channel polarizer: routes H to `{path}/h` and V to `{path}/v`.
pub fn pol_splitter(state: &PureState, path: &str) -> Result<PureState> {
    let have = state.registry().path_pols(path);
    if have.is_empty() || have.iter().any(|p| p.is_circular()) {
        return Err(Error::Basis { path: path.into(), reason: "polarizer needs the linear basis".into() });
    }
    let (h_port, v_port) = pol_splitter_ports(path);
    let mut renames = Vec::new();
    let h_name = photon_name(path, Polarization::H);
    let v_name = photon_name(path, Polarization::V);
    if have.contains(&Polarization::H) {
        renames.push((h_name.as_str(), ModeId::photon(&h_port, Polarization::H)));
    }
    if have.contains(&Polarization::V) {
        renames.push((v_name.as_str(), ModeId::photon(&v_port, Polarization::V)));
    }
    state.relabel_modes(&renames)
}

/// Frequency filter. The pump is a classical field that never enters the
/// mode registry, so removing it leaves the Stokes state unchanged.
pub fn filter(state: &PureState, _path: &str) -> Result<PureState> {
    Ok(state.clone())
}

/// Phase plate on a single mode: e^{iφ n}.
pub fn phase_plate(state: &PureState, mode: &str, phi: f64) -> Result<PureState> {
    state.apply_phase(mode, phi)
}

/// One linear element in canonical textual form, e.g.
/// `pbs_attenuator(p, t=0.5)` or `beam_splitter(p, A, r=0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementSpec {
    HalfWave { path: String },
    QuarterWave { path: String },
    PbsAttenuator { path: String, t: f64 },
    BeamSplitter { path_a: String, path_b: String, r: f64 },
    PolSplitter { path: String },
    Filter { path: String },
    Phase { mode: String, phi: f64 },
}

impl ElementSpec {
    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        match self {
            ElementSpec::HalfWave { path } => half_wave(state, path),
            ElementSpec::QuarterWave { path } => quarter_wave(state, path),
            ElementSpec::PbsAttenuator { path, t } => pbs_attenuator(state, path, *t),
            ElementSpec::BeamSplitter { path_a, path_b, r } => beam_splitter(state, path_a, path_b, *r),
            ElementSpec::PolSplitter { path } => pol_splitter(state, path),
            ElementSpec::Filter { path } => filter(state, path),
            ElementSpec::Phase { mode, phi } => phase_plate(state, mode, *phi),
        }
    }

    pub fn apply_mixed(&self, state: &MixedState) -> Result<MixedState> {
        state.map_unitary(|s| self.apply(s))
    }
}

impl fmt::Display for ElementSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementSpec::HalfWave { path } => write!(f, "half_wave({path})"),
            ElementSpec::QuarterWave { path } => write!(f, "quarter_wave({path})"),
            ElementSpec::PbsAttenuator { path, t } => write!(f, "pbs_attenuator({path}, t={t:?})"),
            ElementSpec::BeamSplitter { path_a, path_b, r } => {
                write!(f, "beam_splitter({path_a}, {path_b}, r={r:?})")
            }
            ElementSpec::PolSplitter { path } => write!(f, "pol_splitter({path})"),
            ElementSpec::Filter { path } => write!(f, "filter({path})"),
            ElementSpec::Phase { mode, phi } => write!(f, "phase({mode}, phi={phi:?})"),
        }
    }
}

fn keyed(arg: &str, key: &str, text: &str) -> Result<f64> {
    let (k, v) = arg.split_once('=').ok_or_else(|| Error::ElementSyntax(text.into()))?;
    if k.trim() != key {
        return Err(Error::ElementSyntax(text.into()));
    }
    v.trim().parse().map_err(|_| Error::ElementSyntax(text.into()))
}

impl FromStr for ElementSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::ElementSyntax(text.to_string());
        let s = text.trim();
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let kind = s[..open].trim();
        let args: Vec<&str> = s[open + 1..s.len() - 1].split(',').map(str::trim).collect();
        if args.iter().any(|a| a.is_empty()) {
            return Err(bad());
        }
        let one = |args: &[&str]| -> Result<String> {
            match args {
                [p] => Ok(p.to_string()),
                _ => Err(bad()),
            }
        };
        let spec = match kind {
            "half_wave" => ElementSpec::HalfWave { path: one(&args)? },
            "quarter_wave" => ElementSpec::QuarterWave { path: one(&args)? },
            "pol_splitter" => ElementSpec::PolSplitter { path: one(&args)? },
            "filter" => ElementSpec::Filter { path: one(&args)? },
            "pbs_attenuator" => match args.as_slice() {
                [p, t] => ElementSpec::PbsAttenuator { path: p.to_string(), t: keyed(t, "t", text)? },
                _ => return Err(bad()),
            },
            "beam_splitter" => match args.as_slice() {
                [a, b] => ElementSpec::BeamSplitter { path_a: a.to_string(), path_b: b.to_string(), r: 0.5 },
                [a, b, r] => ElementSpec::BeamSplitter {
                    path_a: a.to_string(),
                    path_b: b.to_string(),
                    r: keyed(r, "r", text)?,
                },
                _ => return Err(bad()),
            },
            "phase" => match args.as_slice() {
                [m, phi] => ElementSpec::Phase { mode: m.to_string(), phi: keyed(phi, "phi", text)? },
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        };
        match &spec {
            ElementSpec::PbsAttenuator { t, .. } if !(0.0..=1.0).contains(t) => {
                Err(Error::OutOfRange { name: "t", value: *t, range: "[0, 1]" })
            }
            ElementSpec::BeamSplitter { r, .. } if !(0.0..=1.0).contains(r) => {
                Err(Error::OutOfRange { name: "r", value: *r, range: "[0, 1]" })
            }
            _ => Ok(spec),
        }
    }
}

//! Threshold (or number-resolving) photon detectors with efficiency and dark
//! counts, Born-rule sampling, and the four-detector Bell-state analyzer.
//!
//! A measurement is prepared once per input state: the exact distribution
//! of true photon numbers on the measured modes and the conditional state
//! for each pattern are computed up front. Sampling a window then costs one
//! categorical draw, binomial thinning by the efficiency and one Bernoulli
//! dark-count draw per detector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{photon_name, MixedState, OccupationPattern, Polarization};
use crate::optics::{beam_splitter, pol_splitter, pol_splitter_ports};

pub const DEFAULT_DARK_PROB: f64 = 1e-5;
/// Bound on the number of distinct photon-number patterns a prepared
/// measurement enumerates.
pub const DEFAULT_PATTERN_BOUND: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// Probability of a spurious click per detection window.
    pub dark_prob: f64,
    /// Reports photon numbers instead of click/no-click.
    pub resolving: bool,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec { efficiency: 1.0, dark_prob: DEFAULT_DARK_PROB, resolving: false }
    }
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        DetectorSpec { efficiency: 1.0, dark_prob: 0.0, resolving: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::OutOfRange { name: "efficiency", value: self.efficiency, range: "[0, 1]" });
        }
        if !(0.0..1.0).contains(&self.dark_prob) {
            return Err(Error::OutOfRange { name: "dark_prob", value: self.dark_prob, range: "[0, 1)" });
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.efficiency == 1.0 && self.dark_prob == 0.0
    }

    /// Probabilities of reporting 0, 1 and ≥ 2 counts given `n` incident
    /// photons. A threshold detector never reports more than one.
    pub fn response(&self, n: u8) -> [f64; 3] {
        let (eta, d) = (self.efficiency, self.dark_prob);
        let none = (1.0 - eta).powi(n as i32);
        if !self.resolving {
            let p0 = none * (1.0 - d);
            return [p0, 1.0 - p0, 0.0];
        }
        let one = if n == 0 { 0.0 } else { n as f64 * eta * (1.0 - eta).powi(n as i32 - 1) };
        let p0 = none * (1.0 - d);
        let p1 = one * (1.0 - d) + none * d;
        [p0, p1, (1.0 - p0 - p1).max(0.0)]
    }

    /// One detection window with `n` incident photons: returns the count
    /// after thinning and the reported count including a possible dark
    /// click.
    fn sample<R: Rng + ?Sized>(&self, n: u8, rng: &mut R) -> (u32, u32) {
        let detected = if self.efficiency == 1.0 {
            n as u32
        } else {
            (0..n).filter(|_| rng.gen::<f64>() < self.efficiency).count() as u32
        };
        let dark = self.dark_prob > 0.0 && rng.gen::<f64>() < self.dark_prob;
        let total = detected + dark as u32;
        if self.resolving {
            (detected, total)
        } else {
            (detected.min(1), total.min(1))
        }
    }
}

/// A named detector watching one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub name: String,
    pub mode: String,
    pub spec: DetectorSpec,
}

impl Detector {
    pub fn new(name: impl Into<String>, mode: impl Into<String>, spec: DetectorSpec) -> Self {
        Detector { name: name.into(), mode: mode.into(), spec }
    }
}

/// Reported counts of the detectors that fired.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClickPattern(BTreeMap<String, u32>);

impl ClickPattern {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_clicks<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        ClickPattern(names.into_iter().map(|n| (n.into(), 1)).collect())
    }

    fn record(&mut self, name: &str, count: u32) {
        if count > 0 {
            self.0.insert(name.to_string(), count);
        }
    }

    pub fn count(&self, name: &str) -> u32 {
        self.0.get(name).copied().unwrap_or(0)
    }

    pub fn clicked(&self) -> BTreeSet<&str> {
        self.0.keys().map(String::as_str).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_superset(&self, other: &ClickPattern) -> bool {
        other.0.keys().all(|k| self.0.contains_key(k))
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(k, &c)| if c == 1 { k.clone() } else { format!("{k}*{c}") })
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    PsiMinus,
    PsiPlus,
    Fail,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::PsiMinus, Outcome::PsiPlus, Outcome::Fail];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::PsiMinus => "psi_minus",
            Outcome::PsiPlus => "psi_plus",
            Outcome::Fail => "fail",
        }
    }

    pub fn is_success(self) -> bool {
        self != Outcome::Fail
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::RuleSyntax(format!("unknown outcome `{s}`")))
    }
}

/// Click sets that herald each outcome; any other pattern is a failure.
///
/// Textual form: `psi_minus = {D_H, D_V'} | {D_V, D_H'}; psi_plus = {D_H, D_V} | {D_H', D_V'}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldRule {
    classes: Vec<(Outcome, Vec<BTreeSet<String>>)>,
}

impl Default for HeraldRule {
    fn default() -> Self {
        let set = |a: &str, b: &str| BTreeSet::from([a.to_string(), b.to_string()]);
        HeraldRule {
            classes: vec![
                (Outcome::PsiMinus, vec![set("D_H", "D_V'"), set("D_V", "D_H'")]),
                (Outcome::PsiPlus, vec![set("D_H", "D_V"), set("D_H'", "D_V'")]),
            ],
        }
    }
}

impl HeraldRule {
    pub fn new(classes: Vec<(Outcome, Vec<BTreeSet<String>>)>) -> Result<Self> {
        let mut seen: BTreeSet<&BTreeSet<String>> = BTreeSet::new();
        for (_, sets) in &classes {
            for s in sets {
                if s.is_empty() {
                    return Err(Error::RuleSyntax("empty click set".into()));
                }
                if !seen.insert(s) {
                    return Err(Error::RuleSyntax(format!("click set {s:?} listed twice")));
                }
            }
        }
        Ok(HeraldRule { classes })
    }

    pub fn classes(&self) -> &[(Outcome, Vec<BTreeSet<String>>)] {
        &self.classes
    }

    /// Detector names the rule refers to.
    pub fn detectors(&self) -> BTreeSet<&str> {
        self.classes.iter().flat_map(|(_, sets)| sets.iter().flatten().map(String::as_str)).collect()
    }

    /// Looks the clicked set up; a detector reporting more than one count
    /// (resolving detectors only) is never a valid herald.
    pub fn classify(&self, pattern: &ClickPattern) -> Outcome {
        if pattern.0.values().any(|&c| c > 1) {
            return Outcome::Fail;
        }
        let clicked: BTreeSet<&str> = pattern.clicked();
        for (outcome, sets) in &self.classes {
            if sets.iter().any(|s| s.len() == clicked.len() && s.iter().all(|n| clicked.contains(n.as_str()))) {
                return *outcome;
            }
        }
        Outcome::Fail
    }
}

impl fmt::Display for HeraldRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let classes: Vec<String> = self
            .classes
            .iter()
            .map(|(o, sets)| {
                let sets: Vec<String> = sets
                    .iter()
                    .map(|s| format!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join(", ")))
                    .collect();
                format!("{o} = {}", sets.join(" | "))
            })
            .collect();
        f.write_str(&classes.join("; "))
    }
}

impl FromStr for HeraldRule {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut classes = Vec::new();
        for clause in text.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let (name, sets) = clause
                .split_once('=')
                .ok_or_else(|| Error::RuleSyntax(format!("expected `outcome = {{...}}` in `{clause}`")))?;
            let outcome: Outcome = name.trim().parse()?;
            let mut parsed = Vec::new();
            for set in sets.split('|').map(str::trim) {
                let inner = set
                    .strip_prefix('{')
                    .and_then(|s| s.strip_suffix('}'))
                    .ok_or_else(|| Error::RuleSyntax(format!("expected `{{a, b}}`, got `{set}`")))?;
                let names: BTreeSet<String> =
                    inner.split(',').map(str::trim).filter(|n| !n.is_empty()).map(String::from).collect();
                parsed.push(names);
            }
            classes.push((outcome, parsed));
        }
        HeraldRule::new(classes)
    }
}

/// Exhaustive Born distribution of photon numbers on `modes`, sorted by
/// pattern.
pub fn exact_outcome_distribution(state: &MixedState, modes: &[&str], bound: usize) -> Result<Vec<(Vec<u8>, f64)>> {
    let reg = state.registry();
    let idx: Vec<usize> = modes.iter().map(|m| reg.index_of(m)).collect::<Result<_>>()?;
    let mut dist: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (w, s) in state.branches() {
        let norm = s.norm_sqr();
        for (b, c) in s.terms() {
            let key: Vec<u8> = idx.iter().map(|&i| b.get(i)).collect();
            *dist.entry(key).or_insert(0.0) += w * c.norm_sqr() / norm;
        }
    }
    if dist.len() > bound {
        return Err(Error::SubspaceTooLarge { dim: dist.len(), bound });
    }
    Ok(dist.into_iter().collect())
}

/// One possible true photon-number pattern on the measured modes.
#[derive(Debug, Clone)]
pub struct TrueOutcome {
    pub occupations: Vec<u8>,
    pub probability: f64,
    /// Post-measurement state with the measured modes removed.
    pub state: Option<MixedState>,
}

#[derive(Debug, Clone)]
pub struct WindowSample {
    /// Reported counts, dark clicks included.
    pub clicks: ClickPattern,
    /// Counts that survived efficiency thinning, before dark clicks.
    pub thinned: ClickPattern,
    pub true_index: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedMeasurement {
    detectors: Vec<Detector>,
    outcomes: Vec<TrueOutcome>,
    sampler: WeightedIndex<f64>,
}

impl PreparedMeasurement {
    pub fn new(state: &MixedState, detectors: Vec<Detector>) -> Result<Self> {
        for d in &detectors {
            d.spec.validate()?;
        }
        let modes: Vec<&str> = detectors.iter().map(|d| d.mode.as_str()).collect();
        let dist = exact_outcome_distribution(state, &modes, DEFAULT_PATTERN_BOUND)?;
        let mut outcomes = Vec::with_capacity(dist.len());
        for (occ, probability) in dist {
            let pattern = OccupationPattern::new(modes.iter().copied().zip(occ.iter().copied()));
            let proj = state.project(&pattern)?;
            let cond = proj.state.map(|m| m.discard_modes(&modes)).transpose()?;
            outcomes.push(TrueOutcome { occupations: occ, probability, state: cond });
        }
        let sampler = WeightedIndex::new(outcomes.iter().map(|o| o.probability)).map_err(|_| Error::ZeroNorm)?;
        Ok(PreparedMeasurement { detectors, outcomes, sampler })
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    pub fn outcomes(&self) -> &[TrueOutcome] {
        &self.outcomes
    }

    /// Pattern an ideal detector bank would report for true outcome `i`.
    pub fn ideal_clicks(&self, i: usize) -> ClickPattern {
        let mut p = ClickPattern::new();
        for (d, &n) in self.detectors.iter().zip(&self.outcomes[i].occupations) {
            p.record(&d.name, if d.spec.resolving { n as u32 } else { n.min(1) as u32 });
        }
        p
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WindowSample {
        let true_index = self.sampler.sample(rng);
        let mut clicks = ClickPattern::new();
        let mut thinned = ClickPattern::new();
        for (d, &n) in self.detectors.iter().zip(&self.outcomes[true_index].occupations) {
            let (kept, reported) = d.spec.sample(n, rng);
            thinned.record(&d.name, kept);
            clicks.record(&d.name, reported);
        }
        WindowSample { clicks, thinned, true_index }
    }

    /// Probability of a reported pattern under the detector model, with
    /// counts of two or more lumped together.
    pub fn pattern_probability(&self, pattern: &ClickPattern) -> f64 {
        let class: Vec<usize> = self.detectors.iter().map(|d| pattern.count(&d.name).min(2) as usize).collect();
        self.outcomes
            .iter()
            .map(|o| {
                o.probability
                    * self
                        .detectors
                        .iter()
                        .zip(&o.occupations)
                        .zip(&class)
                        .map(|((d, &n), &c)| d.spec.response(n)[c])
                        .product::<f64>()
            })
            .sum()
    }

    /// Exact probability of each herald outcome with the detector model
    /// applied, enumerating every reported count class.
    pub fn outcome_probabilities(&self, rule: &HeraldRule) -> [f64; 3] {
        let k = self.detectors.len();
        let mut out = [0.0; 3];
        for o in &self.outcomes {
            let resp: Vec<[f64; 3]> =
                self.detectors.iter().zip(&o.occupations).map(|(d, &n)| d.spec.response(n)).collect();
            for combo in 0..3usize.pow(k as u32) {
                let mut pattern = ClickPattern::new();
                let mut p = o.probability;
                let mut code = combo;
                for (d, r) in self.detectors.iter().zip(&resp) {
                    let c = code % 3;
                    code /= 3;
                    p *= r[c];
                    pattern.record(&d.name, c as u32);
                }
                if p > 0.0 {
                    out[rule.classify(&pattern).index()] += p;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MeasureResult {
    pub clicks: ClickPattern,
    /// State conditioned on the true photon numbers of the sampled window.
    pub state: Option<MixedState>,
    pub probability: f64,
}

/// Measures `modes` once. Detectors are named after the mode they watch.
pub fn measure<R: Rng + ?Sized>(
    state: &MixedState,
    modes: &[&str],
    specs: &BTreeMap<String, DetectorSpec>,
    rng: &mut R,
) -> Result<MeasureResult> {
    let detectors = modes
        .iter()
        .map(|m| {
            let spec = specs.get(*m).ok_or_else(|| Error::MissingDetector(m.to_string()))?;
            Ok(Detector::new(*m, *m, *spec))
        })
        .collect::<Result<Vec<_>>>()?;
    let prepared = PreparedMeasurement::new(state, detectors)?;
    let window = prepared.sample(rng);
    Ok(MeasureResult {
        probability: prepared.pattern_probability(&window.clicks),
        state: prepared.outcomes[window.true_index].state.clone(),
        clicks: window.clicks,
    })
}

pub fn classify(pattern: &ClickPattern, rule: &HeraldRule) -> Outcome {
    rule.classify(pattern)
}

/// Detector names of the analyzer, in the order H and V on the first path,
/// then H and V on the second.
pub const BELL_DETECTORS: [&str; 4] = ["D_H", "D_V", "D_H'", "D_V'"];

/// 50/50 beam splitter on two linear-basis paths followed by a polarizing
/// splitter and two detectors on each output.
#[derive(Debug, Clone)]
pub struct BellAnalyzer {
    path_p: String,
    path_a: String,
    detector: DetectorSpec,
    rule: HeraldRule,
}

impl BellAnalyzer {
    pub fn new(path_p: &str, path_a: &str, detector: DetectorSpec, rule: HeraldRule) -> Result<Self> {
        detector.validate()?;
        if let Some(bad) = rule.detectors().into_iter().find(|d| !BELL_DETECTORS.contains(d)) {
            return Err(Error::RuleSyntax(format!("unknown detector `{bad}`")));
        }
        Ok(BellAnalyzer { path_p: path_p.into(), path_a: path_a.into(), detector, rule })
    }

    pub fn rule(&self) -> &HeraldRule {
        &self.rule
    }

    pub fn detectors(&self) -> Vec<Detector> {
        let mut out = Vec::new();
        for (path, suffix) in [(&self.path_p, ""), (&self.path_a, "'")] {
            let (h, v) = pol_splitter_ports(path);
            out.push(Detector::new(format!("D_H{suffix}"), photon_name(&h, Polarization::H), self.detector));
            out.push(Detector::new(format!("D_V{suffix}"), photon_name(&v, Polarization::V), self.detector));
        }
        out
    }

    /// The optical network in front of the detectors.
    pub fn evolve(&self, state: &MixedState) -> Result<MixedState> {
        state.map_unitary(|s| {
            let s = beam_splitter(s, &self.path_p, &self.path_a, 0.5)?;
            let s = pol_splitter(&s, &self.path_p)?;
            pol_splitter(&s, &self.path_a)
        })
    }

    pub fn prepare(&self, state: &MixedState) -> Result<PreparedBell> {
        let measurement = PreparedMeasurement::new(&self.evolve(state)?, self.detectors())?;
        let ideal = (0..measurement.outcomes.len()).map(|i| self.rule.classify(&measurement.ideal_clicks(i))).collect();
        Ok(PreparedBell { measurement, rule: self.rule.clone(), ideal })
    }
}

#[derive(Debug, Clone)]
pub struct HeraldBranch {
    pub probability: f64,
    pub state: Option<MixedState>,
}

/// Ideal-detector outcome table of the analyzer.
#[derive(Debug, Clone)]
pub struct ExactBell {
    pub psi_minus: HeraldBranch,
    pub psi_plus: HeraldBranch,
    pub fail: f64,
}

impl ExactBell {
    pub fn branch(&self, outcome: Outcome) -> Option<&HeraldBranch> {
        match outcome {
            Outcome::PsiMinus => Some(&self.psi_minus),
            Outcome::PsiPlus => Some(&self.psi_plus),
            Outcome::Fail => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BellSample {
    pub outcome: Outcome,
    pub window: WindowSample,
}

#[derive(Debug, Clone)]
pub struct PreparedBell {
    measurement: PreparedMeasurement,
    rule: HeraldRule,
    ideal: Vec<Outcome>,
}

impl PreparedBell {
    pub fn measurement(&self) -> &PreparedMeasurement {
        &self.measurement
    }

    /// Outcome an ideal detector bank assigns to true outcome `i`.
    pub fn ideal_outcome(&self, i: usize) -> Outcome {
        self.ideal[i]
    }

    pub fn exact(&self) -> Result<ExactBell> {
        let branch = |target: Outcome| -> Result<HeraldBranch> {
            let parts: Vec<(f64, MixedState)> = self
                .measurement
                .outcomes
                .iter()
                .zip(&self.ideal)
                .filter(|(_, &o)| o == target)
                .filter_map(|(t, _)| t.state.clone().map(|s| (t.probability, s)))
                .collect();
            let probability = parts.iter().map(|(p, _)| p).sum();
            let state = if parts.is_empty() { None } else { Some(MixedState::mix(parts)?) };
            Ok(HeraldBranch { probability, state })
        };
        let psi_minus = branch(Outcome::PsiMinus)?;
        let psi_plus = branch(Outcome::PsiPlus)?;
        let fail = (1.0 - psi_minus.probability - psi_plus.probability).max(0.0);
        Ok(ExactBell { psi_minus, psi_plus, fail })
    }

    /// [Ψ⁻, Ψ⁺, fail] probabilities with detector imperfections included.
    pub fn outcome_probabilities(&self) -> [f64; 3] {
        self.measurement.outcome_probabilities(&self.rule)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BellSample {
        let window = self.measurement.sample(rng);
        BellSample { outcome: self.rule.classify(&window.clicks), window }
    }

    /// State conditioned on the true photon numbers of a sampled window.
    pub fn conditional(&self, true_index: usize) -> Option<&MixedState> {
        self.measurement.outcomes[true_index].state.as_ref()
    }
}

/// One analyzer window: the herald, the state conditioned on the true
/// photon numbers behind it, and the herald's probability.
pub fn bell_analyzer<R: Rng + ?Sized>(
    state: &MixedState,
    path_p: &str,
    path_a: &str,
    detector: DetectorSpec,
    rng: &mut R,
) -> Result<(Outcome, Option<MixedState>, f64)> {
    let prepared = BellAnalyzer::new(path_p, path_a, detector, HeraldRule::default())?.prepare(state)?;
    let s = prepared.sample(rng);
    let p = prepared.outcome_probabilities()[s.outcome.index()];
    Ok((s.outcome, prepared.conditional(s.window.true_index).cloned(), p))
}

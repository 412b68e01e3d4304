//! TOML experiment files.
//!
//! ```toml
//! protocol = "event-ready"   # generate | event-ready | memory | sweep
//! mode = "sampled"           # exact | sampled
//! seed = 7
//! trials = 100000
//!
//! [source]
//! p0 = 0.01
//! emission_order = 1
//! alpha = 0.6                # or `t = 0.5625`; beta completes the norm
//! phase = 0.0                # arg(beta/alpha)
//! epr_visibility = 1.0
//!
//! [detectors]
//! efficiency = 1.0
//! dark_prob = 1e-5
//! resolving = false
//! rule = "psi_minus = {D_H, D_V'} | {D_V, D_H'}; psi_plus = {D_H, D_V} | {D_H', D_V'}"
//!
//! [memory]
//! theta = 0.0
//! phi = 0.0
//! retrieval_efficiency = 1.0
//! channel = "ideal"          # ideal | event-ready
//!
//! [sweep]
//! parameter = "p0"
//! values = [0.005, 0.01, 0.02]
//! protocol = "event-ready"
//!
//! [output]
//! path = "report.json"
//! format = "json"
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Deserialize;
use toml::Spanned;

use crate::detection::HeraldRule;
use crate::fock::ModeRegistry;
use crate::protocols::{Channel, Mode, ProtocolConfig};
use crate::sources::{SourceParams, MAX_P0};

/// A config problem, located at a key and, when it came from the file, a line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "`{}` (line {line}): {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Generate,
    EventReady,
    Memory,
    Sweep,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Generate => "generate",
            Protocol::EventReady => "event-ready",
            Protocol::Memory => "memory",
            Protocol::Sweep => "sweep",
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Protocol::Generate, Protocol::EventReady, Protocol::Memory, Protocol::Sweep]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown protocol `{s}`, expected generate, event-ready, memory or sweep"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(format!("unknown format `{s}`, expected json or csv")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    P0,
    Theta,
    Phi,
    T,
    Eta,
    DarkProb,
    EmissionOrder,
}

impl SweepParam {
    pub const ALL: [SweepParam; 7] = [
        SweepParam::P0,
        SweepParam::Theta,
        SweepParam::Phi,
        SweepParam::T,
        SweepParam::Eta,
        SweepParam::DarkProb,
        SweepParam::EmissionOrder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::P0 => "p0",
            SweepParam::Theta => "theta",
            SweepParam::Phi => "phi",
            SweepParam::T => "t",
            SweepParam::Eta => "eta",
            SweepParam::DarkProb => "dark_prob",
            SweepParam::EmissionOrder => "emission_order",
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown sweep parameter `{s}`, expected one of p0, theta, phi, t, eta, dark_prob, emission_order"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    /// The protocol run at every point; never `Sweep`.
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Absent when the file leaves the choice to the subcommand.
    pub protocol: Option<Protocol>,
    pub run: ProtocolConfig,
    /// Set when the branch amplitudes came from `source.t`.
    pub transmissivity: Option<f64>,
    /// arg(β/α).
    pub phase: f64,
    pub sweep: Option<SweepSpec>,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: None,
            run: ProtocolConfig::default(),
            transmissivity: None,
            phase: 0.0,
            sweep: None,
            output: OutputSpec::default(),
        }
    }
}

/// Command-line values that replace file values before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub records: bool,
}

impl ExperimentConfig {
    /// One protocol config per sweep value, in declared order; a single
    /// point (labelled `None`) without a sweep.
    pub fn points(&self) -> Result<Vec<(Option<f64>, ProtocolConfig)>, ConfigError> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(None, self.run.clone())]);
        };
        sweep
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let key = || format!("sweep.values[{i}]");
                let cfg = self.apply(sweep.parameter, v).map_err(|message| ConfigError { key: key(), line: None, message })?;
                cfg.validate().map_err(|e| ConfigError { key: key(), line: None, message: e.to_string() })?;
                Ok((Some(v), cfg))
            })
            .collect()
    }

    fn apply(&self, parameter: SweepParam, v: f64) -> Result<ProtocolConfig, String> {
        let mut cfg = self.run.clone();
        match parameter {
            SweepParam::P0 => cfg.source.p0 = v,
            SweepParam::Theta => cfg.memory.theta = v,
            SweepParam::Phi => cfg.memory.phi = v,
            SweepParam::T => {
                let s = SourceParams::from_transmissivity(cfg.source.p0, v, self.phase).map_err(|e| e.to_string())?;
                cfg.source.alpha = s.alpha;
                cfg.source.beta = s.beta;
            }
            SweepParam::Eta => cfg.detectors.efficiency = v,
            SweepParam::DarkProb => cfg.detectors.dark_prob = v,
            SweepParam::EmissionOrder => {
                if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
                    return Err(format!("emission_order must be a positive integer, got {v}"));
                }
                cfg.source.emission_order = v as u32;
            }
        }
        Ok(cfg)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    protocol: Option<Spanned<String>>,
    mode: Option<Spanned<String>>,
    seed: Option<Spanned<u64>>,
    trials: Option<Spanned<u64>>,
    records: Option<bool>,
    #[serde(default)]
    source: RawSource,
    #[serde(default)]
    detectors: RawDetectors,
    #[serde(default)]
    memory: RawMemory,
    sweep: Option<RawSweep>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSource {
    p0: Option<Spanned<f64>>,
    emission_order: Option<Spanned<u32>>,
    alpha: Option<Spanned<f64>>,
    beta: Option<Spanned<f64>>,
    phase: Option<Spanned<f64>>,
    t: Option<Spanned<f64>>,
    epr_visibility: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDetectors {
    efficiency: Option<Spanned<f64>>,
    dark_prob: Option<Spanned<f64>>,
    resolving: Option<bool>,
    rule: Option<Spanned<String>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMemory {
    theta: Option<Spanned<f64>>,
    phi: Option<Spanned<f64>>,
    retrieval_efficiency: Option<Spanned<f64>>,
    channel: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Spanned<String>,
    values: Spanned<Vec<f64>>,
    protocol: Spanned<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<String>,
    format: Option<Spanned<String>>,
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].matches('\n').count() + 1
    }

    fn err<T>(&self, key: &str, value: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError { key: key.to_string(), line: Some(self.line(value.span())), message: message.into() }
    }

    fn range(&self, key: &str, value: &Option<Spanned<f64>>, ok: impl Fn(f64) -> bool, range: &str) -> Result<Option<f64>, ConfigError> {
        match value {
            None => Ok(None),
            Some(v) if ok(*v.get_ref()) => Ok(Some(*v.get_ref())),
            Some(v) => Err(self.err(key, v, format!("value {} outside {range}", v.get_ref()))),
        }
    }

    fn parse<T: FromStr<Err = String>>(&self, key: &str, value: &Spanned<String>) -> Result<T, ConfigError> {
        value.get_ref().parse().map_err(|m: String| self.err(key, value, m))
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with(text, &Overrides::default())
}

/// Parses and validates `text` after applying command-line overrides.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let loc = Locator { text };
        ConfigError {
            key: unknown_key(e.message()).unwrap_or_else(|| "<file>".into()),
            line: e.span().map(|s| loc.line(s)),
            message: e.message().trim().to_string(),
        }
    })?;
    let loc = Locator { text };
    let mut cfg = ExperimentConfig::default();
    let run = &mut cfg.run;

    if let Some(p) = &raw.protocol {
        cfg.protocol = Some(loc.parse("protocol", p)?);
    }
    if let Some(m) = &raw.mode {
        run.mode = match m.get_ref().as_str() {
            "exact" => Mode::Exact,
            "sampled" => Mode::Sampled,
            other => return Err(loc.err("mode", m, format!("unknown mode `{other}`, expected exact or sampled"))),
        };
    }
    run.seed = raw.seed.as_ref().map(|s| *s.get_ref());
    if let Some(t) = &raw.trials {
        if *t.get_ref() < 1 {
            return Err(loc.err("trials", t, "value 0 outside [1, ∞)"));
        }
        run.trials = *t.get_ref();
    }
    run.keep_records = raw.records.unwrap_or(false);

    let s = &raw.source;
    if let Some(p0) = loc.range("source.p0", &s.p0, |x| (0.0..=MAX_P0).contains(&x), "[0, 0.2]")? {
        run.source.p0 = p0;
    }
    if let Some(o) = &s.emission_order {
        let max = ModeRegistry::DEFAULT_CUTOFF as u32 / 2;
        if !(1..=max).contains(o.get_ref()) {
            return Err(loc.err("source.emission_order", o, format!("value {} outside [1, {max}]", o.get_ref())));
        }
        run.source.emission_order = *o.get_ref();
    }
    cfg.phase = loc.range("source.phase", &s.phase, |x| (0.0..2.0 * PI).contains(&x), "[0, 2π)")?.unwrap_or(0.0);
    let alpha = loc.range("source.alpha", &s.alpha, unit, "[0, 1]")?;
    let beta = loc.range("source.beta", &s.beta, unit, "[0, 1]")?;
    let t = loc.range("source.t", &s.t, unit, "[0, 1]")?;
    let (a, b) = match (alpha, beta, t) {
        (Some(_), _, Some(_)) | (_, Some(_), Some(_)) => {
            let at = s.t.as_ref().expect("t present");
            return Err(loc.err("source.t", at, "give either t or alpha/beta, not both"));
        }
        (None, None, Some(t)) => {
            cfg.transmissivity = Some(t);
            ((t / (1.0 + t)).sqrt(), (1.0 / (1.0 + t)).sqrt())
        }
        (Some(a), None, None) => (a, (1.0 - a * a).max(0.0).sqrt()),
        (None, Some(b), None) => ((1.0 - b * b).max(0.0).sqrt(), b),
        (Some(a), Some(b), None) => {
            let n = a * a + b * b;
            if (n - 1.0).abs() > 1e-12 {
                let at = s.beta.as_ref().expect("beta present");
                return Err(loc.err("source.beta", at, format!("alpha² + beta² = {n}, must be 1 within 1e-12 (omit beta to complete it)")));
            }
            (a, b)
        }
        (None, None, None) => (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    };
    run.source.alpha = Complex64::new(a, 0.0);
    run.source.beta = Complex64::from_polar(b, cfg.phase);
    if let Some(v) = loc.range("source.epr_visibility", &s.epr_visibility, unit, "[0, 1]")? {
        run.source.epr_visibility = v;
    }

    let d = &raw.detectors;
    if let Some(e) = loc.range("detectors.efficiency", &d.efficiency, unit, "[0, 1]")? {
        run.detectors.efficiency = e;
    }
    if let Some(p) = loc.range("detectors.dark_prob", &d.dark_prob, |x| (0.0..1.0).contains(&x), "[0, 1)")? {
        run.detectors.dark_prob = p;
    }
    if let Some(r) = d.resolving {
        run.detectors.resolving = r;
    }
    if let Some(rule) = &d.rule {
        run.rule = rule.get_ref().parse::<HeraldRule>().map_err(|e| loc.err("detectors.rule", rule, e.to_string()))?;
    }

    let m = &raw.memory;
    if let Some(th) = loc.range("memory.theta", &m.theta, |x| (0.0..=PI).contains(&x), "[0, π]")? {
        run.memory.theta = th;
    }
    if let Some(ph) = loc.range("memory.phi", &m.phi, |x| (0.0..2.0 * PI).contains(&x), "[0, 2π)")? {
        run.memory.phi = ph;
    }
    if let Some(eta) = loc.range("memory.retrieval_efficiency", &m.retrieval_efficiency, unit, "[0, 1]")? {
        run.memory.retrieval_efficiency = eta;
    }
    if let Some(c) = &m.channel {
        run.memory.channel = match c.get_ref().as_str() {
            "ideal" => Channel::Ideal,
            "event-ready" => Channel::EventReady,
            other => return Err(loc.err("memory.channel", c, format!("unknown channel `{other}`, expected ideal or event-ready"))),
        };
    }

    if let Some(sw) = &raw.sweep {
        let protocol: Protocol = loc.parse("sweep.protocol", &sw.protocol)?;
        if protocol == Protocol::Sweep {
            return Err(loc.err("sweep.protocol", &sw.protocol, "a sweep must run generate, event-ready or memory"));
        }
        if sw.values.get_ref().is_empty() {
            return Err(loc.err("sweep.values", &sw.values, "at least one value is required"));
        }
        cfg.sweep = Some(SweepSpec {
            parameter: loc.parse("sweep.parameter", &sw.parameter)?,
            values: sw.values.get_ref().clone(),
            protocol,
        });
    }
    if cfg.protocol == Some(Protocol::Sweep) && cfg.sweep.is_none() {
        let p = raw.protocol.as_ref().expect("protocol present");
        return Err(loc.err("protocol", p, "protocol `sweep` needs a [sweep] section"));
    }

    cfg.output.path = raw.output.path.map(PathBuf::from);
    if let Some(f) = &raw.output.format {
        cfg.output.format = loc.parse("output.format", f)?;
    }

    apply_overrides(&mut cfg, overrides);
    let run = &cfg.run;
    if run.mode == Mode::Sampled && run.seed.is_none() {
        let line = raw.mode.as_ref().map(|m| loc.line(m.span()));
        return Err(ConfigError {
            key: "seed".into(),
            line,
            message: "sampled mode requires a seed (config `seed`, --seed or PHOTON_ENSEMBLE_SEED)".into(),
        });
    }
    run.validate().map_err(|e| ConfigError { key: "<config>".into(), line: None, message: e.to_string() })?;
    if let Some(sw) = &raw.sweep {
        cfg.points().map_err(|e| ConfigError { line: Some(loc.line(sw.values.span())), ..e })?;
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(seed) = o.seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(mode) = o.mode {
        cfg.run.mode = mode;
    }
    if let Some(trials) = o.trials {
        cfg.run.trials = trials;
    }
    if let Some(out) = &o.out {
        cfg.output.path = Some(out.clone());
    }
    if let Some(format) = o.format {
        cfg.output.format = format;
    }
    cfg.run.keep_records |= o.records;
}

/// Pulls the key out of serde's "unknown field `x`" message.
fn unknown_key(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("protocol = \"event-ready\"\n").unwrap();
        assert_eq!(cfg.protocol, Some(Protocol::EventReady));
        assert_eq!(cfg.run.detectors.efficiency, 1.0);
        assert_eq!(cfg.run.detectors.dark_prob, 1e-5);
        assert_eq!(cfg.run.source.emission_order, 1);
        assert_eq!(cfg.run.mode, Mode::Exact);
        assert_eq!(cfg.output.format, OutputFormat::Json);
    }

    #[test]
    fn p0_out_of_range_names_key_line_and_range() {
        let err = parse_config("protocol = \"generate\"\n\n[source]\np0 = 1.5\n").unwrap_err();
        assert_eq!(err.key, "source.p0");
        assert_eq!(err.line, Some(4));
        assert!(err.message.contains("[0, 0.2]"), "{err}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = parse_config("[source]\np0 = 0.01\npzero = 0.02\n").unwrap_err();
        assert_eq!(err.key, "pzero");
        assert_eq!(err.line, Some(3));
        let err = parse_config("[detector]\nefficiency = 0.5\n").unwrap_err();
        assert_eq!(err.key, "detector");
    }

    #[test]
    fn sweep_points_keep_declared_order() {
        let text = "protocol = \"sweep\"\n[sweep]\nparameter = \"p0\"\nvalues = [0.02, 0.005, 0.01]\nprotocol = \"event-ready\"\n";
        let cfg = parse_config(text).unwrap();
        let p0s: Vec<f64> = cfg.points().unwrap().iter().map(|(_, c)| c.source.p0).collect();
        assert_eq!(p0s, vec![0.02, 0.005, 0.01]);
    }

    #[test]
    fn sweep_values_are_range_checked() {
        let text = "[sweep]\nparameter = \"theta\"\nvalues = [0.0, 4.0]\nprotocol = \"memory\"\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.key, "sweep.values[1]");
        assert_eq!(err.line, Some(3));
        let text = "[sweep]\nparameter = \"emission_order\"\nvalues = [1.5]\nprotocol = \"event-ready\"\n";
        assert!(parse_config(text).is_err());
        let text = "[sweep]\nparameter = \"gain\"\nvalues = [1.0]\nprotocol = \"event-ready\"\n";
        assert_eq!(parse_config(text).unwrap_err().key, "sweep.parameter");
    }

    #[test]
    fn sampled_mode_needs_a_seed() {
        let err = parse_config("mode = \"sampled\"\n").unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("seed", Some(1)));
        let o = Overrides { seed: Some(3), ..Default::default() };
        assert_eq!(parse_config_with("mode = \"sampled\"\n", &o).unwrap().run.seed, Some(3));
    }

    #[test]
    fn amplitudes_from_alpha_or_t() {
        let cfg = parse_config("[source]\nalpha = 0.6\n").unwrap();
        assert!((cfg.run.source.beta.re - 0.8).abs() < 1e-15);
        let cfg = parse_config("[source]\nt = 0.5625\nphase = 1.0\n").unwrap();
        let s = &cfg.run.source;
        assert!((s.alpha.norm_sqr() / s.beta.norm_sqr() - 0.5625).abs() < 1e-12);
        assert!((s.beta.arg() - 1.0).abs() < 1e-12);
        assert!(parse_config("[source]\nalpha = 0.6\nt = 0.5\n").is_err());
        assert!(parse_config("[source]\nalpha = 0.6\nbeta = 0.6\n").is_err());
    }

    #[test]
    fn herald_rule_text_round_trips() {
        let rule = HeraldRule::default().to_string();
        let cfg = parse_config(&format!("[detectors]\nrule = \"{rule}\"\n")).unwrap();
        assert_eq!(cfg.run.rule, HeraldRule::default());
        let err = parse_config("[detectors]\nrule = \"psi_zero = {D_H}\"\n").unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("detectors.rule", Some(2)));
    }
}

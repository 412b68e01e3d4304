//! Protocol dispatch and report assembly.

use crate::error::Result;
use crate::protocols::{
    event_ready_generation, generate_entanglement, memory_store, EventReadyReport, GenerationReport, MemoryReport,
    ProtocolConfig, SampledSummary, TrialRecord,
};

use super::config::{ConfigError, ExperimentConfig, Protocol};
use super::report::{Object, Report, Value, SCHEMA_VERSION};

pub const TOOL: &str = "photon-ensemble";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Checks a subcommand against the file's `protocol` key and `[sweep]`
/// section and returns the protocol to run.
pub fn resolve_protocol(cfg: &ExperimentConfig, command: Protocol) -> std::result::Result<Protocol, ConfigError> {
    let err = |key: &str, message: String| ConfigError { key: key.into(), line: None, message };
    if let Some(p) = cfg.protocol {
        if p != command {
            return Err(err("protocol", format!("config names `{}` but the command is `{}`", p.as_str(), command.as_str())));
        }
    }
    match (command, &cfg.sweep) {
        (Protocol::Sweep, None) => Err(err("sweep", "the sweep command needs a [sweep] section".into())),
        (Protocol::Sweep, Some(_)) => Ok(command),
        (_, Some(_)) => Err(err("sweep", format!("a [sweep] section is only valid with the sweep command, not `{}`", command.as_str()))),
        (_, None) => Ok(command),
    }
}

/// Runs `protocol` (already resolved) over every point of `cfg`.
pub fn run(cfg: &ExperimentConfig, protocol: Protocol) -> Result<Report> {
    let points = cfg.points().map_err(|e| crate::Error::InvalidConfig(e.to_string()))?;
    let inner = match (&cfg.sweep, protocol) {
        (Some(sweep), Protocol::Sweep) => sweep.protocol,
        _ => protocol,
    };
    let keep = cfg.run.keep_records;
    let mut rows = Vec::with_capacity(points.len());
    let mut records = Vec::new();
    for (value, point) in &points {
        let (summary, recs) = run_point(inner, point)?;
        let mut row = Object::new();
        if let Some(v) = value {
            row.push("sweep_value", *v);
        }
        row.0.extend(summary.0);
        rows.push(row);
        records.push(Value::Array(recs.iter().map(record).collect()));
    }
    let run = &cfg.run;
    let header = Object::new()
        .with("schema_version", SCHEMA_VERSION)
        .with("tool", TOOL)
        .with("tool_version", TOOL_VERSION)
        .with("protocol", protocol.as_str())
        .with("mode", run.mode.as_str())
        .with("seed", run.seed)
        .with("entanglement_measure", "concurrence");
    Ok(Report {
        header,
        config: echo(cfg),
        sweep: cfg.sweep.as_ref().map(|s| (s.parameter.as_str().to_string(), s.protocol.as_str().to_string())),
        rows,
        records: keep.then_some(records),
    })
}

fn run_point(protocol: Protocol, cfg: &ProtocolConfig) -> Result<(Object, Vec<TrialRecord>)> {
    Ok(match protocol {
        Protocol::Generate => (generation_summary(&generate_entanglement(cfg)?), Vec::new()),
        Protocol::EventReady => {
            let r = event_ready_generation(cfg)?;
            (event_ready_summary(&r), r.records)
        }
        Protocol::Memory => {
            let r = memory_store(cfg)?;
            (memory_summary(&r), r.records)
        }
        Protocol::Sweep => unreachable!("sweeps do not nest"),
    })
}

fn generation_summary(r: &GenerationReport) -> Object {
    let mut o = Object::new();
    for (n, w) in r.sector_weights.iter().enumerate() {
        o.push(&format!("sector_weight_{n}"), *w);
    }
    o.push("purity", r.purity);
    o.push("one_photon_probability", r.one_photon_probability);
    o.push("one_photon_fidelity", r.one_photon_fidelity);
    o.push("concurrence", r.concurrence);
    o.push("entropy", r.entropy);
    o.push("truncation_loss", r.truncation_loss);
    if let Some(counts) = &r.sampled_sector_counts {
        o.push("trials", counts.iter().sum::<u64>());
        for (n, c) in counts.iter().enumerate() {
            o.push(&format!("sector_count_{n}"), *c);
        }
    }
    o
}

fn event_ready_summary(r: &EventReadyReport) -> Object {
    let mut o = Object::new()
        .with("success_probability", r.success_probability)
        .with("closed_form_probability", r.closed_form_probability)
        .with("leading_order_probability", r.leading_order_probability)
        .with("psi_minus_probability", r.psi_minus_probability)
        .with("psi_plus_probability", r.psi_plus_probability)
        .with("detector_success_probability", r.detector_success_probability)
        .with("heralded_fidelity", r.heralded_fidelity)
        .with("psi_minus_fidelity", r.psi_minus_fidelity)
        .with("psi_plus_fidelity", r.psi_plus_fidelity)
        .with("correction_overlap", r.correction_overlap)
        .with("concurrence", r.concurrence)
        .with("truncation_loss", r.truncation_loss);
    push_sampled(&mut o, r.sampled.as_ref());
    o
}

fn memory_summary(r: &MemoryReport) -> Object {
    let mut o = Object::new()
        .with("theta", r.theta)
        .with("phi", r.phi)
        .with("success_probability", r.success_probability)
        .with("psi_minus_probability", r.psi_minus_probability)
        .with("psi_plus_probability", r.psi_plus_probability)
        .with("detector_success_probability", r.detector_success_probability)
        .with("stored_fidelity", r.stored_fidelity)
        .with("stored_in_sector", r.stored_in_sector)
        .with("psi_minus_fidelity", r.psi_minus_fidelity)
        .with("psi_plus_fidelity", r.psi_plus_fidelity)
        .with("readout_fidelity", r.readout_fidelity)
        .with("retrieval_probability", r.retrieval_probability);
    push_sampled(&mut o, r.sampled.as_ref());
    o
}

fn push_sampled(o: &mut Object, s: Option<&SampledSummary>) {
    let Some(s) = s else { return };
    o.push("trials", s.trials);
    o.push("successes", s.successes);
    o.push("psi_minus_count", s.psi_minus);
    o.push("psi_plus_count", s.psi_plus);
    o.push("success_rate", s.rate);
    o.push("ci_low", s.ci_low);
    o.push("ci_high", s.ci_high);
    o.push("mean_fidelity", s.mean_fidelity);
}

fn record(r: &TrialRecord) -> Value {
    Object::new()
        .with("index", r.index)
        .with("outcome", r.outcome.as_str())
        .with("success", r.success)
        .with("fidelity", r.fidelity)
        .with("weight", r.weight)
        .into()
}

fn echo(cfg: &ExperimentConfig) -> Object {
    let run = &cfg.run;
    let s = &run.source;
    let settings = s.compile();
    let source = Object::new()
        .with("p0", s.p0)
        .with("emission_order", s.emission_order as u64)
        .with("alpha_re", s.alpha.re)
        .with("alpha_im", s.alpha.im)
        .with("beta_re", s.beta.re)
        .with("beta_im", s.beta.im)
        .with("phase", cfg.phase)
        .with("t", cfg.transmissivity)
        .with("pbs_transmissivity", settings.t)
        .with("pump_1", settings.q1)
        .with("pump_2", settings.q2)
        .with("epr_visibility", s.epr_visibility);
    let d = &run.detectors;
    let detectors = Object::new()
        .with("efficiency", d.efficiency)
        .with("dark_prob", d.dark_prob)
        .with("resolving", d.resolving)
        .with("rule", run.rule.to_string());
    let m = &run.memory;
    let memory = Object::new()
        .with("theta", m.theta)
        .with("phi", m.phi)
        .with("retrieval_efficiency", m.retrieval_efficiency)
        .with("channel", m.channel.as_str());
    let mut o = Object::new()
        .with("mode", run.mode.as_str())
        .with("seed", run.seed)
        .with("trials", run.trials)
        .with("records", run.keep_records)
        .with("source", source)
        .with("detectors", detectors)
        .with("memory", memory);
    if let Some(sw) = &cfg.sweep {
        let values = sw.values.iter().map(|&v| Value::Float(v)).collect();
        o.push(
            "sweep",
            Object::new()
                .with("parameter", sw.parameter.as_str())
                .with("values", Value::Array(values))
                .with("protocol", sw.protocol.as_str()),
        );
    }
    o.push("output_format", cfg.output.format.as_str());
    o
}

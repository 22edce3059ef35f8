//! CSV writers for all command outputs.
//!
//! Files begin with a `#`-prefixed comment block recording the tool
//! version, the command, the model file hash, and the full configuration,
//! so a run can be reproduced from its output alone. Bodies use '.' as
//! the decimal separator and 17 significant digits, enough to round-trip
//! every f64 exactly. Undefined values are written as `nan`. Formatting
//! is fully deterministic: equal inputs give byte-identical files.

use sha2::{Digest, Sha256};

use crate::cme::OracleMoments;
use crate::local::{LocalSensitivityReport, PerturbationSweep};
use crate::moments::{MomentState, MomentTrajectory};
use crate::sobol::SobolReport;

/// Provenance recorded in every file's header comment block.
#[derive(Debug, Clone, Default)]
pub struct CsvMeta {
    /// Reconstructed invocation, e.g. `sobol models/x.model --n 15000`.
    pub command: String,
    pub model_path: String,
    pub model_sha256: String,
    /// Ordered key=value pairs of the effective configuration.
    pub config: Vec<(String, String)>,
}

/// Hex-encoded SHA-256 of a model file's bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// One f64 with 17 significant digits; non-finite values map to
/// `nan`/`inf`/`-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn format_missing(v: Option<f64>) -> String {
    match v {
        Some(x) => format_value(x),
        None => "nan".to_string(),
    }
}

fn header(meta: &CsvMeta) -> String {
    let mut out = String::new();
    out.push_str(&format!("# momsens {}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("# command: {}\n", meta.command));
    out.push_str(&format!(
        "# model: {} sha256={}\n",
        meta.model_path, meta.model_sha256
    ));
    let cfg: Vec<String> = meta
        .config
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    out.push_str(&format!("# config: {}\n", cfg.join(" ")));
    out
}

fn state_component(state: &MomentState, index: usize) -> f64 {
    let n = state.mu.len();
    if index < n {
        state.mu[index]
    } else {
        state.sigma.packed()[index - n]
    }
}

/// Wide moment table: `t` followed by one column per packed component.
pub fn simulate_csv(meta: &CsvMeta, labels: &[String], traj: &MomentTrajectory) -> String {
    let mut out = header(meta);
    out.push_str(&format!("t,{}\n", labels.join(",")));
    for (t, st) in traj.times.iter().zip(&traj.states) {
        out.push_str(&format_value(*t));
        for i in 0..labels.len() {
            out.push(',');
            out.push_str(&format_value(state_component(st, i)));
        }
        out.push('\n');
    }
    out
}

/// Oracle moments in the simulate schema, each component followed by its
/// deviation from the closure (`diff_* = oracle - closure`).
pub fn oracle_csv(
    meta: &CsvMeta,
    labels: &[String],
    oracle: &OracleMoments,
    closure: &MomentTrajectory,
) -> String {
    assert_eq!(oracle.times.len(), closure.times.len());
    let mut out = header(meta);
    let diff_labels: Vec<String> = labels.iter().map(|l| format!("diff_{l}")).collect();
    out.push_str(&format!("t,{},{}\n", labels.join(","), diff_labels.join(",")));
    for ((t, st), cl) in oracle
        .times
        .iter()
        .zip(&oracle.states)
        .zip(&closure.states)
    {
        out.push_str(&format_value(*t));
        for i in 0..labels.len() {
            out.push(',');
            out.push_str(&format_value(state_component(st, i)));
        }
        for i in 0..labels.len() {
            out.push(',');
            out.push_str(&format_value(state_component(st, i) - state_component(cl, i)));
        }
        out.push('\n');
    }
    out
}

/// Long sensitivity table, one row per (time, output, parameter).
/// `output_indices` selects which packed outputs to emit.
pub fn local_csv(
    meta: &CsvMeta,
    report: &LocalSensitivityReport,
    output_indices: &[usize],
) -> String {
    let mut out = header(meta);
    out.push_str("t,output,param,S_raw,S_normalized\n");
    for (ti, t) in report.times.iter().enumerate() {
        for &o in output_indices {
            for (pi, param) in report.params.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    format_value(*t),
                    report.outputs[o],
                    param,
                    format_value(report.raw[pi][o][ti]),
                    format_value(report.normalized[pi][o][ti]),
                ));
            }
        }
    }
    out
}

/// Wide sweep table: one block of rows per run (`nominal` first, then one
/// per perturbed parameter), with the selected outputs as columns.
pub fn sweep_csv(meta: &CsvMeta, sweep: &PerturbationSweep, output_indices: &[usize], labels: &[String]) -> String {
    let mut out = header(meta);
    let cols: Vec<&str> = output_indices.iter().map(|&o| labels[o].as_str()).collect();
    out.push_str(&format!("run,t,{}\n", cols.join(",")));
    let mut emit = |name: &str, traj: &MomentTrajectory| {
        for (t, st) in traj.times.iter().zip(&traj.states) {
            out.push_str(name);
            out.push(',');
            out.push_str(&format_value(*t));
            for &o in output_indices {
                out.push(',');
                out.push_str(&format_value(state_component(st, o)));
            }
            out.push('\n');
        }
    };
    emit("nominal", &sweep.nominal);
    for (name, traj) in sweep.params.iter().zip(&sweep.perturbed) {
        emit(name, traj);
    }
    out
}

/// Long Sobol' index table, one row per (time, output, parameter).
pub fn sobol_csv(meta: &CsvMeta, report: &SobolReport) -> String {
    let mut out = header(meta);
    out.push_str("t,output,param,S_first,S_total,estimator,n,seed\n");
    for (ti, t) in report.times.iter().enumerate() {
        for (o, output) in report.outputs.iter().enumerate() {
            for (pi, param) in report.params.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    format_value(*t),
                    output,
                    param,
                    format_missing(report.first[o][pi][ti]),
                    format_missing(report.total[o][pi][ti]),
                    report.estimator,
                    report.n,
                    report.seed,
                ));
            }
        }
    }
    out
}

/// Splits a rendered CSV into its `#` header block and its body.
pub fn split_header(text: &str) -> (String, String) {
    let mut header = String::new();
    let mut body = String::new();
    for line in text.lines() {
        if line.starts_with('#') {
            header.push_str(line);
            header.push('\n');
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    (header, body)
}

//! JSON report fragments and CSV profiles.

use maxclass_core::linalg::RankDecision;
use maxclass_core::linalg::SubspaceFrame;
use serde_json::{json, Value};

use crate::CliError;

pub fn rank_record(d: &RankDecision) -> Value {
    json!({
        "rank": d.rank,
        "tol": d.tol,
        "sigma_max": d.sigma_max,
        "smallest_retained": d.smallest_retained,
        "largest_discarded": d.largest_discarded,
        "stable": d.stable,
    })
}

pub fn frame_records(frames: &[SubspaceFrame]) -> Vec<Value> {
    frames.iter().map(|f| rank_record(&f.record)).collect()
}

pub fn error_record(e: &CliError) -> Value {
    json!({ "error": { "code": e.code, "message": e.message } })
}

/// A `t,value` profile with 17 significant digits per float.
pub fn csv_profile(ts: &[f64], values: &[f64]) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in ts.iter().zip(values) {
        out.push_str(&format!("{t:.16e},{v:.16e}\n"));
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn render(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

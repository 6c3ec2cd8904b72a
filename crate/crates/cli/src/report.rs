use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;
use serde_json::{Map, Value};

/// Machine-readable record of one run. The human summary is rendered from
/// it, and it carries no timing so that repeated runs compare equal.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub version: &'static str,
    pub inputs: BTreeMap<String, String>,
    pub settings: Map<String, Value>,
    pub result: Value,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            inputs: BTreeMap::new(),
            settings: Map::new(),
            result: Value::Null,
        }
    }

    pub fn input(&mut self, name: &str, path: &std::path::Path) {
        self.inputs.insert(name.to_string(), path.display().to_string());
    }

    pub fn set(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("settings serialize");
        self.settings.insert(name.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn summary(&self, elapsed: Duration) -> String {
        let mut out = String::new();
        let r = &self.result;
        if let Some(e) = r.get("error") {
            let _ = writeln!(out, "{}: error: {}", self.command, text(e));
            return out;
        }
        match self.command.as_str() {
            "check" => check_summary(&mut out, r),
            "invariant" => invariant_summary(&mut out, r),
            "solve" => solve_summary(&mut out, r),
            _ => {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(r).unwrap_or_default());
            }
        }
        let _ = writeln!(out, "elapsed: {:.3}s", elapsed.as_secs_f64());
        out
    }
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn check_summary(out: &mut String, r: &Value) {
    let outcome = text(&r["result"]);
    match outcome.as_str() {
        "proved" => {
            let _ = writeln!(out, "PROVED at k = {} by {}", r["k"], text(&r["method"]));
        }
        "refuted" => {
            let _ = writeln!(out, "REFUTED at k = {} by {}", r["k"], text(&r["method"]));
            if let Some(trace) = r["trace"].as_array() {
                for (i, s) in trace.iter().enumerate() {
                    let _ = writeln!(out, "  state {i}: in {} out {}", s["inputs"], s["outputs"]);
                }
            }
            if let Some(l) = r.get("loop_start") {
                let _ = writeln!(out, "  loops back to state {l}");
            }
            let _ = writeln!(out, "trace valid: {}", r["trace_valid"]);
        }
        _ => {
            let _ = writeln!(out, "EXHAUSTED up to k = {}: {}", r["k_max"], text(&r["reason"]));
        }
    }
    if let Some(p) = r.get("provenance") {
        let _ = writeln!(out, "provenance: {}", text(p));
    }
    let s = &r["stats"];
    let _ = writeln!(out, "queries: {}, nodes: {}", s["queries"], s["nodes"]);
}

fn invariant_summary(out: &mut String, r: &Value) {
    let _ = writeln!(
        out,
        "{} template: proved bound {}, bracketing SAT {}",
        text(&r["template"]),
        r["proved_bound"],
        text(&r["bracketing_sat"])
    );
    let _ = writeln!(
        out,
        "bracket width {}, {} iterations",
        r["precision_achieved"], r["iterations"]
    );
    if let Some(log) = r["query_log"].as_array() {
        for q in log {
            let _ = writeln!(out, "  {} -> {}", q["bound"], text(&q["status"]));
        }
    }
    if let Some(n) = r.get("note") {
        let _ = writeln!(out, "note: {}", text(n));
    }
}

fn solve_summary(out: &mut String, r: &Value) {
    let _ = writeln!(out, "{} ({})", text(&r["status"]), text(&r["provenance"]));
    if let Some(w) = r.get("witness").filter(|w| !w.is_null()) {
        let _ = writeln!(out, "  inputs {}", w["inputs"]);
        let _ = writeln!(out, "  outputs {}", w["outputs"]);
        let _ = writeln!(out, "witness valid: {}", r["witness_valid"]);
    }
    if let Some(reason) = r.get("reason") {
        let _ = writeln!(out, "reason: {}", text(reason));
    }
}

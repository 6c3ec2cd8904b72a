//! Shared helpers: the checked-in fixture files and a runner for the binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use drlcheck::fixtures;
use drlcheck::format::{PropertyFile, PropertyKind, RawConstraint};
use drlcheck::invariant::{InvariantConfigFile, Template};
use drlcheck::transition::TransitionSpecFile;
use drlcheck::{LinearConstraint, Network, PredicateKind, Relation, StatePredicate, TransitionSpec, VarRef};
use serde_json::Value;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures_dir().join(rel)
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s
}

fn property(kind: PropertyKind, copies: usize, constraints: &[LinearConstraint]) -> PropertyFile {
    PropertyFile {
        network: None,
        kind,
        copies,
        boxes: Default::default(),
        constraints: constraints.iter().map(RawConstraint::from_constraint).collect(),
        any_of: Vec::new(),
        max_output_exceeds: None,
    }
}

fn predicate_file(p: &StatePredicate) -> PropertyFile {
    let kind = match p.kind {
        PredicateKind::Bad => PropertyKind::Safety,
        PredicateKind::Good => PropertyKind::Liveness,
    };
    property(kind, 1, &p.constraints)
}

fn system(out: &mut Vec<(String, String)>, dir: &str, spec: &TransitionSpec) {
    out.push((format!("{dir}/net.json"), spec.network().to_json_string()));
    out.push((format!("{dir}/spec.json"), pretty(&TransitionSpecFile::describe(spec, "net.json"))));
}

fn two_relu_query(lo: [f64; 2], hi: [f64; 2]) -> PropertyFile {
    let mut p = property(PropertyKind::Query, 1, &[drlcheck::constraint::output_at_most(0, 5.0)]);
    p.network = Some("net.json".into());
    p.boxes.insert("0:in:0".into(), [Some(lo[0]), Some(hi[0])]);
    p.boxes.insert("0:in:1".into(), [Some(lo[1]), Some(hi[1])]);
    p
}

fn invariant_config(template: Template) -> InvariantConfigFile {
    InvariantConfigFile {
        template,
        epsilon: 0.0,
        eta: None,
        pkt: None,
        precision: None,
        output_index: 0,
        roles: Default::default(),
        searched_role: None,
        search_floor: None,
    }
}

/// Every fixture file as (path relative to `fixtures/`, contents), built from
/// the constructors in `drlcheck::fixtures`.
pub fn expected_files() -> Vec<(String, String)> {
    let mut out = Vec::new();

    out.push(("two-relu/net.json".into(), fixtures::two_relu().to_json_string()));
    out.push(("two-relu/query.prop.json".into(), pretty(&two_relu_query([-10.0; 2], [10.0; 2]))));
    out.push(("two-relu/impossible.prop.json".into(), pretty(&two_relu_query([1.0, 3.0], [2.0, 4.0]))));

    let safety = [
        ("depth3", fixtures::depth3()),
        ("long-delay", fixtures::long_delay()),
        ("pointwise-safe", fixtures::pointwise_safe()),
    ];
    for (dir, (spec, bad)) in &safety {
        system(&mut out, dir, spec);
        out.push((format!("{dir}/bad.prop.json"), pretty(&predicate_file(bad))));
    }

    let (spec, good) = fixtures::aurora_mini();
    system(&mut out, "aurora-mini", &spec);
    out.push(("aurora-mini/prop1-liveness.prop.json".into(), pretty(&predicate_file(&good))));

    for (k, d) in fixtures::LADDER {
        let (spec, good) = fixtures::liveness_ladder(d);
        let dir = format!("ladder-k{k}");
        system(&mut out, &dir, &spec);
        out.push((format!("{dir}/good.prop.json"), pretty(&predicate_file(&good))));
    }

    let (spec, _) = fixtures::zero_weight();
    system(&mut out, "zero-weight", &spec);
    let c = LinearConstraint::single(VarRef::output(1, 0), Relation::Le, 0.4);
    out.push(("zero-weight/query.prop.json".into(), pretty(&property(PropertyKind::Query, 2, &[c]))));

    let (spec, _) = fixtures::spurious();
    system(&mut out, "spurious", &spec);
    let cs = [
        LinearConstraint::single(VarRef::input(0, 1), Relation::Le, 0.2),
        LinearConstraint::single(VarRef::output(1, 0), Relation::Ge, 0.5),
    ];
    out.push(("spurious/query.prop.json".into(), pretty(&property(PropertyKind::Query, 2, &cs))));

    system(&mut out, "identity", &fixtures::identity_passthrough());
    let mut cfg = invariant_config(Template::Output);
    cfg.epsilon = 0.1;
    cfg.eta = Some(0.01);
    out.push(("identity/output.inv.json".into(), pretty(&cfg)));

    system(&mut out, "two-minus-x", &fixtures::two_minus_x());
    let mut cfg = invariant_config(Template::Input);
    cfg.pkt = Some(8.0);
    out.push(("two-minus-x/input.inv.json".into(), pretty(&cfg)));

    out
}

pub struct Run {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
    /// Raw text of the `--report` file, if one was written.
    pub report_text: Option<String>,
}

impl Run {
    pub fn report(&self) -> Value {
        serde_json::from_str(self.report_text.as_deref().expect("report written")).expect("report is JSON")
    }
}

/// Runs the binary with `args` from the fixtures directory, writing the
/// report to a temporary file.
pub fn run(args: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = Command::new(env!("CARGO_BIN_EXE_drlcheck"))
        .current_dir(fixtures_dir())
        .args(args)
        .arg("--report")
        .arg(&report)
        .env_remove("DRLCHECK_LOG")
        .output()
        .expect("binary runs");
    Run {
        status: out.status.code().expect("exited normally"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        report_text: std::fs::read_to_string(&report).ok(),
    }
}

pub fn load_network(rel: &str) -> Network {
    Network::load(fixture(rel)).unwrap()
}

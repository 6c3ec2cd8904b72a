use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use drlcheck::abstraction::solve_with_abstraction;
use drlcheck::checker::{self, validate_counterexample, Outcome};
use drlcheck::format::{PropertyFile, PropertyKind};
use drlcheck::invariant::{self, InvariantConfigFile, SearchConfig, Template};
use drlcheck::oracle;
use drlcheck::{
    solve, validate_witness, AbstractionMask, CheckConfig, FieldSelection, Network, Property, Provenance, Query,
    SolverConfig, Start, Status, TransitionSpec, Verdict,
};

use crate::args::{
    CheckArgs, Cli, Command, GridArgs, Global, InvariantArgs, MethodArg, OracleCommand, ReachArgs, SolveArgs,
    TemplateArg, TraceArgs,
};
use crate::report::Report;

struct Ctx {
    solver: SolverConfig,
    delta_strict: f64,
    timeout: Option<Duration>,
    seed: u64,
}

impl Ctx {
    fn new(g: &Global, threads: usize) -> Result<Self> {
        let mut solver = SolverConfig {
            threads,
            ..SolverConfig::default()
        };
        if let Some(t) = g.tau_lp {
            solver.tau_lp = t;
        }
        if let Some(t) = g.tau_val {
            solver.tau_val = t;
        }
        if let Some(n) = g.node_limit {
            solver.node_limit = n;
        }
        let timeout = match g.timeout {
            Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
            Some(s) => bail!("--timeout must be a positive number of seconds, got {s}"),
            None => None,
        };
        solver.time_limit = timeout;
        let delta_strict = g.delta_strict.unwrap_or(drlcheck::DEFAULT_DELTA_STRICT);
        for (name, v) in [
            ("tau-lp", solver.tau_lp),
            ("tau-val", solver.tau_val),
            ("delta-strict", delta_strict),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("--{name} must be positive, got {v}");
            }
        }
        Ok(Ctx {
            solver,
            delta_strict,
            timeout,
            seed: g.seed,
        })
    }

    fn record(&self, rep: &mut Report, threads: usize) {
        rep.set("threads", threads);
        rep.set("seed", self.seed);
        rep.set("timeout", self.timeout.map(|t| t.as_secs_f64()));
        rep.set("tau_lp", self.solver.tau_lp);
        rep.set("tau_val", self.solver.tau_val);
        rep.set("delta_strict", self.delta_strict);
        rep.set("node_limit", self.solver.node_limit);
    }
}

/// Runs the command, prints and writes its report, and returns the exit
/// status.
pub fn run(cli: &Cli) -> u8 {
    let start = Instant::now();
    let threads = cli
        .global
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("could not configure the thread pool: {e}");
    }
    let mut rep = Report::new(match &cli.command {
        Command::Check(_) => "check",
        Command::Invariant(_) => "invariant",
        Command::Solve(_) => "solve",
        Command::Oracle(OracleCommand::Grid(_)) => "oracle-grid",
        Command::Oracle(OracleCommand::Reach(_)) => "oracle-reach",
        Command::Oracle(OracleCommand::Trace(_)) => "oracle-trace",
    });
    let status = Ctx::new(&cli.global, threads).and_then(|ctx| {
        ctx.record(&mut rep, threads);
        match &cli.command {
            Command::Check(a) => check(&ctx, a, &mut rep),
            Command::Invariant(a) => invariant(&ctx, a, &mut rep),
            Command::Solve(a) => solve_cmd(&ctx, a, &mut rep),
            Command::Oracle(OracleCommand::Grid(a)) => grid(&ctx, a, &mut rep),
            Command::Oracle(OracleCommand::Reach(a)) => reach(&ctx, a, &mut rep),
            Command::Oracle(OracleCommand::Trace(a)) => trace(&ctx, a, &mut rep),
        }
    });
    let status = match status {
        Ok(s) => s,
        Err(e) => {
            let code = crate::error_status(&e);
            rep.result = json!({ "error": format!("{e:#}"), "exit_status": code });
            eprintln!("error: {e:#}");
            code
        }
    };
    if cli.global.json {
        print!("{}", rep.to_json());
    } else if rep.result.get("error").is_none() {
        print!("{}", rep.summary(start.elapsed()));
    }
    if let Some(path) = &cli.global.report {
        if let Err(e) = std::fs::write(path, rep.to_json()) {
            eprintln!("error: cannot write report {}: {e}", path.display());
            return crate::EXIT_USAGE;
        }
    }
    status
}

fn mask_for(spec: &TransitionSpec, fields: Option<&str>) -> Result<Option<AbstractionMask>> {
    let Some(fields) = fields else { return Ok(None) };
    let sel: FieldSelection = fields.parse()?;
    Ok(Some(AbstractionMask::resolve(spec, &sel)?))
}

fn check(ctx: &Ctx, a: &CheckArgs, rep: &mut Report) -> Result<u8> {
    rep.input("spec", &a.spec);
    rep.input("property", &a.property);
    rep.set("method", a.method);
    rep.set("k", a.k);
    rep.set("k_max", a.k_max);
    rep.set("abstract_fields", &a.abstract_fields);
    if a.k == Some(0) || a.k_max == 0 {
        bail!("--k and --k-max must be at least 1");
    }

    let spec = TransitionSpec::load(&a.spec, ctx.delta_strict)?;
    let prop = PropertyFile::load(&a.property)?;
    let pred = prop.to_predicate(ctx.delta_strict)?;
    let property = match prop.kind {
        PropertyKind::Safety => Property::Safety(pred),
        _ => Property::Liveness(pred),
    };
    let cfg = CheckConfig {
        solver: ctx.solver.clone(),
        delta_strict: ctx.delta_strict,
        time_limit: ctx.timeout,
        mask: mask_for(&spec, a.abstract_fields.as_deref())?,
        ..CheckConfig::default()
    };
    let k = a.k.unwrap_or(a.k_max);
    let r = match a.method {
        MethodArg::Portfolio => checker::portfolio(&spec, &property, a.k_max, &cfg)?,
        MethodArg::Bmc => checker::bmc_property(&spec, &property, k, &cfg)?,
        MethodArg::Kind => checker::induction_at(&spec, &property, k, &cfg)?,
    };
    let mut result = serde_json::to_value(&r)?;
    let status = match &r.outcome {
        Outcome::Proved { .. } => 0,
        Outcome::Refuted { trace, loop_start, .. } => {
            let valid = validate_counterexample(
                &spec,
                &property,
                trace,
                *loop_start,
                ctx.solver.tau_val,
                ctx.delta_strict,
            );
            result["trace_valid"] = Value::Bool(valid);
            1
        }
        Outcome::Exhausted { .. } => 2,
    };
    rep.result = result;
    Ok(status)
}

fn invariant(ctx: &Ctx, a: &InvariantArgs, rep: &mut Report) -> Result<u8> {
    rep.input("spec", &a.spec);
    if let Some(c) = &a.config {
        rep.input("config", c);
    }
    let mut file = match &a.config {
        Some(path) => InvariantConfigFile::load(path)?,
        None => {
            let Some(t) = a.template else {
                bail!("--template is required without --config");
            };
            InvariantConfigFile {
                template: match t {
                    TemplateArg::Output => Template::Output,
                    TemplateArg::Input => Template::Input,
                },
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
    };
    if let Some(t) = a.template {
        file.template = match t {
            TemplateArg::Output => Template::Output,
            TemplateArg::Input => Template::Input,
        };
    }
    if let Some(e) = a.epsilon {
        file.epsilon = e;
    }
    file.eta = a.eta.or(file.eta);
    file.pkt = a.pkt.or(file.pkt);
    file.precision = a.precision.or(file.precision);
    if let Some(i) = a.output_index {
        file.output_index = i;
    }
    rep.set("search", &file);

    let search = file.to_search()?;
    let spec = TransitionSpec::load(&a.spec, ctx.delta_strict)?;
    let r = match &search {
        SearchConfig::Output(c) => invariant::find_output_invariant(&spec, c, &ctx.solver)?,
        SearchConfig::Input(c) => invariant::find_input_invariant(&spec, c, &ctx.solver)?,
    };
    rep.result = serde_json::to_value(&r)?;
    Ok(0)
}

/// Network named by `--network`, or by the property file relative to its
/// own directory.
fn property_network(prop: &PropertyFile, prop_path: &Path, network: Option<&Path>) -> Result<(PathBuf, Network)> {
    let path = match (network, &prop.network) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(n)) => prop_path.parent().unwrap_or(Path::new("")).join(n),
        (None, None) => bail!("no network: pass --network, --spec, or name one in the property file"),
    };
    let net = Network::load(&path)?;
    Ok((path, net))
}

/// Queries of a property file, one per disjunct.
fn property_queries(
    ctx: &Ctx,
    prop_path: &Path,
    network: Option<&Path>,
    spec_path: Option<&Path>,
    rep: &mut Report,
) -> Result<(Vec<Query>, Option<TransitionSpec>)> {
    rep.input("property", prop_path);
    let prop = PropertyFile::load(prop_path)?;
    if let Some(sp) = spec_path {
        rep.input("spec", sp);
        if network.is_some() {
            bail!("--network and --spec are mutually exclusive; the spec names its network");
        }
        let spec = TransitionSpec::load(sp, ctx.delta_strict)?;
        let base = spec.unroll(prop.copies, Start::FromAnywhere)?;
        return Ok((prop.apply(&base, ctx.delta_strict)?, Some(spec)));
    }
    let (path, net) = property_network(&prop, prop_path, network)?;
    rep.input("network", &path);
    Ok((prop.to_queries(Arc::new(net), ctx.delta_strict)?, None))
}

fn solve_cmd(ctx: &Ctx, a: &SolveArgs, rep: &mut Report) -> Result<u8> {
    rep.set("abstract_fields", &a.abstract_fields);
    let (queries, spec) = property_queries(ctx, &a.property, a.network.as_deref(), a.spec.as_deref(), rep)?;
    let mask = match &spec {
        Some(s) => mask_for(s, a.abstract_fields.as_deref())?,
        None => None,
    };

    let mut unknown: Option<(usize, Verdict)> = None;
    let mut provenances = Vec::with_capacity(queries.len());
    let (mut nodes, mut lp_calls) = (0, 0);
    for (i, q) in queries.iter().enumerate() {
        let (v, prov) = match (&spec, &mask) {
            (Some(s), Some(m)) => {
                let r = solve_with_abstraction(q, s, m, &ctx.solver)?;
                (r.verdict, r.provenance)
            }
            _ => (solve(q, &ctx.solver)?, Provenance::Direct),
        };
        nodes += v.stats.nodes;
        lp_calls += v.stats.lp_calls;
        provenances.push(prov);
        match v.status {
            Status::Sat => {
                let w = v.witness.as_ref().expect("SAT verdicts carry a witness");
                rep.result = json!({
                    "status": v.status,
                    "provenance": prov,
                    "disjunct": i,
                    "disjuncts": queries.len(),
                    "witness": w,
                    "witness_valid": validate_witness(q, w, ctx.solver.tau_val),
                    "stats": { "nodes": nodes, "lp_calls": lp_calls },
                });
                return Ok(1);
            }
            Status::Unknown if unknown.is_none() => unknown = Some((i, v)),
            _ => {}
        }
    }
    if let Some((i, v)) = unknown {
        rep.result = json!({
            "status": Status::Unknown,
            "disjunct": i,
            "disjuncts": queries.len(),
            "provenance": provenances[i],
            "reason": v.reason,
            "stats": { "nodes": nodes, "lp_calls": lp_calls },
        });
        return Ok(2);
    }
    let prov = if !provenances.is_empty() && provenances.iter().all(|p| *p == Provenance::ProvedViaAbstraction) {
        Provenance::ProvedViaAbstraction
    } else if provenances.contains(&Provenance::AbstractionRefutedSpurious) {
        Provenance::AbstractionRefutedSpurious
    } else {
        Provenance::Direct
    };
    rep.result = json!({
        "status": Status::Unsat,
        "provenance": prov,
        "disjuncts": queries.len(),
        "stats": { "nodes": nodes, "lp_calls": lp_calls },
    });
    Ok(0)
}

fn grid(ctx: &Ctx, a: &GridArgs, rep: &mut Report) -> Result<u8> {
    rep.set("h", a.h);
    rep.set("cap", a.cap);
    let (queries, _) = property_queries(ctx, &a.property, a.network.as_deref(), a.spec.as_deref(), rep)?;
    let mut entries = Vec::new();
    let mut status = 0;
    for q in &queries {
        let g = oracle::grid_sat(q, a.h, a.cap)?;
        let v = solve(q, &ctx.solver)?;
        let agreement = oracle::compare(q, &v, &g, a.h, &ctx.solver)?;
        status = status.max(match agreement {
            oracle::Agreement::Agree | oracle::Agreement::Boundary => 0,
            oracle::Agreement::Inconclusive => 2,
            oracle::Agreement::Contradiction(_) => 1,
        });
        entries.push(json!({
            "grid": g,
            "solver": v.status,
            "comparison": agreement,
        }));
    }
    rep.result = json!({ "queries": entries });
    Ok(status)
}

fn reach(ctx: &Ctx, a: &ReachArgs, rep: &mut Report) -> Result<u8> {
    rep.input("spec", &a.spec);
    rep.input("property", &a.property);
    rep.set("depth", a.depth);
    rep.set("pitch", &a.pitch);
    rep.set("cap", a.cap);
    let spec = TransitionSpec::load(&a.spec, ctx.delta_strict)?;
    let prop = PropertyFile::load(&a.property)?;
    if prop.kind != PropertyKind::Safety {
        bail!("oracle reach needs a safety property");
    }
    let bad = prop.to_predicate(ctx.delta_strict)?;
    let pitches = match a.pitch.as_slice() {
        [h] => vec![*h; spec.fields_per_step()],
        p => p.to_vec(),
    };
    let found = oracle::reach_oracle(&spec, &bad, a.depth, &pitches, a.cap)
        .with_context(|| format!("reachability search up to depth {}", a.depth))?;
    rep.result = json!({ "reached_at": found });
    Ok(if found.is_some() { 1 } else { 0 })
}

fn trace(ctx: &Ctx, a: &TraceArgs, rep: &mut Report) -> Result<u8> {
    rep.input("spec", &a.spec);
    rep.set("length", a.length);
    let spec = TransitionSpec::load(&a.spec, ctx.delta_strict)?;
    let states = oracle::generate_trace(&spec, a.length, ctx.seed);
    let trace: Vec<Value> = states
        .iter()
        .map(|x| json!({ "inputs": x, "outputs": oracle::forward(spec.network(), x) }))
        .collect();
    rep.result = json!({ "trace": trace });
    Ok(0)
}

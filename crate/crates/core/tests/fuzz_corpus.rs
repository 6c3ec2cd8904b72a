//! Replays the fuzz corpus seeds through the parser entry points the fuzz
//! targets exercise, so the seeds stay meaningful without a fuzzing
//! toolchain.

use std::path::Path;
use std::sync::Arc;

use drlcheck::format::PropertyFile;
use drlcheck::invariant::InvariantConfigFile;
use drlcheck::transition::TransitionSpecFile;
use drlcheck::{fixtures, AbstractionMask, FieldSelection, Network};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn network_seeds() {
    let mut parsed = 0;
    for (name, text) in seeds("network") {
        if let Ok(net) = Network::from_json_str(&text) {
            assert_eq!(Network::from_json_str(&net.to_json_string()).unwrap(), net, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 3);
}

#[test]
fn property_seeds() {
    for (name, text) in seeds("property") {
        let prop = PropertyFile::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let _ = prop.to_predicate(1e-6);
        let _ = prop.to_queries(Arc::new(fixtures::two_relu()), 1e-6);
    }
}

#[test]
fn transition_spec_seeds() {
    let (mini, _) = fixtures::aurora_mini();
    for (name, text) in seeds("transition_spec") {
        let file = TransitionSpecFile::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let _ = file.build(mini.network_arc().clone(), 1e-6);
    }
}

#[test]
fn invariant_config_seeds() {
    for (name, text) in seeds("invariant_config") {
        let cfg = InvariantConfigFile::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.to_search().is_ok(), "{name}");
    }
}

#[test]
fn abstract_fields_seeds() {
    let (spec, _) = fixtures::aurora_mini();
    for (name, text) in seeds("abstract_fields") {
        match text.parse::<FieldSelection>() {
            Ok(sel) => {
                assert_eq!(sel.to_string().parse::<FieldSelection>().unwrap(), sel, "{name}");
                let _ = AbstractionMask::resolve(&spec, &sel);
            }
            Err(_) => assert_eq!(name, "zero"),
        }
    }
}

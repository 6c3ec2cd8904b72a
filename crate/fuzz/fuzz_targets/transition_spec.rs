#![no_main]

use drlcheck::fixtures;
use drlcheck::transition::TransitionSpecFile;
use drlcheck::Start;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = TransitionSpecFile::parse(text) else { return };
    // the network field is ignored; specs are built over a fixed 9-input net
    let (mini, _) = fixtures::aurora_mini();
    if let Ok(spec) = file.build(mini.network_arc().clone(), 1e-6) {
        let _ = spec.unroll(2, Start::FromInitial);
        let described = TransitionSpecFile::describe(&spec, &file.network);
        assert!(described.build(mini.network_arc().clone(), 1e-6).is_ok());
    }
});

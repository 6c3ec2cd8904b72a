#![no_main]

use drlcheck::invariant::InvariantConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = InvariantConfigFile::parse(text) {
        let _ = cfg.to_search();
    }
});

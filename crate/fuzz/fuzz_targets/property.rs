#![no_main]

use std::sync::Arc;

use drlcheck::fixtures;
use drlcheck::format::PropertyFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(prop) = PropertyFile::parse(text) else { return };
    let _ = prop.to_predicate(1e-6);
    if prop.copies <= 8 {
        let _ = prop.to_queries(Arc::new(fixtures::two_relu()), 1e-6);
    }
});

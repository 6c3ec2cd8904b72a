#![no_main]

use drlcheck::{fixtures, AbstractionMask, FieldSelection};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(sel) = text.parse::<FieldSelection>() else { return };
    // display output parses back to the same selection
    assert_eq!(sel.to_string().parse::<FieldSelection>().ok(), Some(sel.clone()));
    let (spec, _) = fixtures::aurora_mini();
    let _ = AbstractionMask::resolve(&spec, &sel);
});

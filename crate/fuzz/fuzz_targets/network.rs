#![no_main]

use drlcheck::Network;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = Network::from_json_str(text) {
        // a parsed network must round-trip and evaluate
        let again = Network::from_json_str(&net.to_json_string()).expect("round trip");
        assert_eq!(again, net);
        let _ = net.evaluate(&vec![0.5; net.input_size()]);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use pipesel::io::{format_tensor, parse_tensor};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = parse_tensor(text) {
        let again = format_tensor(&t);
        let back = parse_tensor(&again).expect("formatted tensor parses");
        assert_eq!(format_tensor(&back), again);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use pipesel::io::{format_report, parse_report, summarize_report};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = parse_report(text) {
        let _ = summarize_report(&report);
        let again = format_report(&report);
        assert_eq!(parse_report(&again).expect("formatted report parses"), report);
    }
});

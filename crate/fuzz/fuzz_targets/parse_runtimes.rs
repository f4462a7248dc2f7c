#![no_main]

use libfuzzer_sys::fuzz_target;
use pipesel::io::{format_runtimes, format_sizes, parse_runtimes, parse_sizes};

// Both CSV tables share one target; the first byte picks the parser.
fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if which % 2 == 0 {
        if let Ok(records) = parse_runtimes(text) {
            let again = format_runtimes(&records);
            assert_eq!(parse_runtimes(&again).expect("formatted runtimes parse"), records);
        }
    } else if let Ok(sizes) = parse_sizes(text) {
        let again = format_sizes(&sizes);
        assert_eq!(parse_sizes(&again).expect("formatted sizes parse"), sizes);
    }
});

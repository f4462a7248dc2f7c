#![no_main]

use libfuzzer_sys::fuzz_target;
use pipesel::io::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::parse(text) {
        let again = config.to_toml();
        assert_eq!(RunConfig::parse(&again).expect("formatted config parses"), config);
    }
});

//! Feeds the checked-in fuzz corpus through every parser. Parsers must
//! return, never panic, and accepted inputs must survive a format round trip.

use std::path::PathBuf;

use pipesel::io::*;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn tensor_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("parse_tensor") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(t) = parse_tensor(&text) {
            accepted += 1;
            let again = format_tensor(&t);
            assert_eq!(format_tensor(&parse_tensor(&again).unwrap()), again, "{name}");
        }
    }
    assert!(accepted >= 1);
}

#[test]
fn table_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("parse_runtimes") {
        let (which, rest) = bytes.split_first().unwrap();
        let text = std::str::from_utf8(rest).unwrap();
        if which % 2 == 0 {
            if let Ok(r) = parse_runtimes(text) {
                accepted += 1;
                assert_eq!(parse_runtimes(&format_runtimes(&r)).unwrap(), r, "{name}");
            }
        } else if let Ok(s) = parse_sizes(text) {
            accepted += 1;
            assert_eq!(parse_sizes(&format_sizes(&s)).unwrap(), s, "{name}");
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("parse_config") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(c) = RunConfig::parse(&text) {
            accepted += 1;
            assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c, "{name}");
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn report_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("parse_report") {
        let text = String::from_utf8(bytes).unwrap();
        if let Ok(r) = parse_report(&text) {
            accepted += 1;
            assert_eq!(parse_report(&format_report(&r)).unwrap(), r, "{name}");
        }
    }
    assert!(accepted >= 2);
}

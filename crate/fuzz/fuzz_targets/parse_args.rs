#![no_main]

use libfuzzer_sys::fuzz_target;
use tablechain::ops::Operation;
use tablechain::parse::{canonical_format, parse_args};

// Whatever parses must survive a canonical-format round trip.
fuzz_target!(|input: (u8, &str)| {
    let (selector, completion) = input;
    let op = Operation::ATOMIC[(selector as usize) % Operation::ATOMIC.len()];
    if let Ok(parsed) = parse_args(op, completion) {
        let canonical = canonical_format(op, &parsed.args);
        let reparsed = parse_args(op, &canonical)
            .unwrap_or_else(|e| panic!("canonical text {canonical:?} failed to re-parse: {e}"));
        assert_eq!(reparsed.args, parsed.args);
    }
});

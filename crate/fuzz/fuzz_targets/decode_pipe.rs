#![no_main]

use libfuzzer_sys::fuzz_target;
use tablechain::encode::{decode_pipe, encode_pipe};

// Decoding must never panic; anything that decodes and re-encodes must
// round-trip exactly.
fuzz_target!(|text: &str| {
    if let Ok(table) = decode_pipe(text) {
        if let Ok(reencoded) = encode_pipe(&table) {
            let back = decode_pipe(&reencoded).expect("re-encoded table must decode");
            assert_eq!(back, table);
        }
    }
});

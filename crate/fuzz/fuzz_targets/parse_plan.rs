#![no_main]

use libfuzzer_sys::fuzz_target;
use tablechain::parse::parse_plan;

fuzz_target!(|completion: &str| {
    if let Ok(step) = parse_plan(completion) {
        // a parsed plan always names a canonical token present in the input
        let token = match step.op.canonical_name() {
            "[E]" => completion.contains("<END>") || completion.contains("[E]"),
            name => completion.contains(name),
        };
        assert!(token);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use tablechain::backend::ScriptRecord;

fuzz_target!(|line: &str| {
    if let Ok(record) = ScriptRecord::parse_line(line) {
        let json = serde_json::to_string(&record).unwrap();
        let back = ScriptRecord::parse_line(&json).expect("serialized record must parse");
        assert_eq!(back.completions, record.completions);
        assert_eq!(back.key, record.key);
    }
});

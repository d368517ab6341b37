#![no_main]

use libfuzzer_sys::fuzz_target;
use tablechain::eval::parse_dataset_line;
use tablechain::profile::TaskKind;

fuzz_target!(|input: (u8, &str)| {
    let (selector, line) = input;
    let task = match selector % 3 {
        0 => TaskKind::ShortQa,
        1 => TaskKind::FactVerification,
        _ => TaskKind::FreeFormQa,
    };
    if let Ok(sample) = parse_dataset_line(line, task) {
        // accepted samples are structurally sound
        assert!(!sample.gold_answers.is_empty());
        for row in sample.table.rows() {
            assert_eq!(row.len(), sample.table.n_cols());
        }
    }
});

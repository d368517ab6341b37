#![no_main]

use libfuzzer_sys::fuzz_target;
use tablechain::parse::{parse_cot_answer, parse_final_answer};
use tablechain::profile::TaskKind;

fuzz_target!(|input: (u8, &str)| {
    let (selector, completion) = input;
    let task = match selector % 3 {
        0 => TaskKind::ShortQa,
        1 => TaskKind::FactVerification,
        _ => TaskKind::FreeFormQa,
    };
    if let Ok(answer) = parse_final_answer(completion, task) {
        assert_eq!(answer.trim(), answer);
        assert!(!answer.contains('\n'));
    }
    let _ = parse_cot_answer(completion, task);
});

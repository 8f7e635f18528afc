#![no_main]

use evidencer::acquire::{parse_record_line, write_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(record) = parse_record_line(line, 1) {
        let mut out = Vec::new();
        write_jsonl(std::slice::from_ref(&record), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let again = parse_record_line(text.trim_end(), 1).unwrap();
        assert_eq!(again, record);
    }
});

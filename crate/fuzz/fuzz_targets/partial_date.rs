#![no_main]

use evidencer::PartialDate;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(date) = text.parse::<PartialDate>() {
        let again: PartialDate = date.to_string().parse().unwrap();
        assert_eq!(again, date);
    }
});

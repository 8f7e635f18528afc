#![no_main]

use evidencer::lingua::{format_pretagged, parse_pretagged};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sentences) = parse_pretagged(text) {
        let again = parse_pretagged(&format_pretagged(&sentences)).unwrap();
        assert_eq!(again.len(), sentences.len());
    }
});

#![no_main]

use evidencer::sentiment::{score, SentimentLexicon};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(lex) = SentimentLexicon::parse(text) {
        let s = score("the results were not very good, but acceptable", &lex);
        assert!((-1.0..=1.0).contains(&s.compound));
    }
});

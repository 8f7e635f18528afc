#![no_main]

use evidencer::features::{extract_ngrams, ngram_tokens};
use evidencer::lingua::tokenize;
use evidencer::sentiment::{compound_of, SentimentLexicon};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for t in tokenize(text) {
        assert_eq!(&text[t.start..t.end], t.surface);
    }
    let tokens = ngram_tokens(text);
    let grams = extract_ngrams(&tokens, 1, 3).unwrap();
    let unigrams: u32 = grams.iter().filter(|(g, _)| !g.contains(' ')).map(|(_, c)| c).sum();
    assert_eq!(unigrams as usize, tokens.len());
    let c = compound_of(text, SentimentLexicon::bundled());
    assert!((-1.0..=1.0).contains(&c));
});

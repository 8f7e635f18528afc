#![no_main]

use evidencer::lingua::{pos_tag, tokenize, TaggerModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = TaggerModel::from_text(text) {
        let tokens = tokenize("However, the trial did not confirm the benefit.");
        if let Ok(tagged) = pos_tag(&tokens, &model) {
            assert_eq!(tagged.len(), tokens.len());
        }
    }
});

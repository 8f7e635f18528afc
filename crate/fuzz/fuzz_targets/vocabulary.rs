#![no_main]

use evidencer::features::{read_vocabulary, write_vocabulary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(vocab) = read_vocabulary(data) {
        let mut out = Vec::new();
        write_vocabulary(&vocab, &mut out).unwrap();
        assert_eq!(read_vocabulary(out.as_slice()).unwrap(), vocab);
    }
});

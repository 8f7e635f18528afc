#![no_main]

use evidencer::acquire::parse_pmid_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pmids) = parse_pmid_list(text) {
        let mut sorted = pmids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), pmids.len());
    }
});

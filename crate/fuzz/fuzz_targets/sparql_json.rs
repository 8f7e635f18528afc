#![no_main]

use std::collections::HashSet;

use evidencer::acquire::parse_sparql_citances;
use evidencer::Pmid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = parse_sparql_citances(text, Pmid::new(1)) {
        let mut seen = HashSet::new();
        for c in &parsed.citances {
            assert!(!c.text().trim().is_empty());
            assert!(seen.insert((c.text().to_string(), c.citing_pmid)), "duplicate survived");
        }
    }
});

#![no_main]

use evidencer::acquire::parse_efetch_xml;
use evidencer::Pmid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(article) = parse_efetch_xml(text, Pmid::new(1001)) {
        assert_eq!(article.pmid, Pmid::new(1001));
        assert!(article.abstract_text.as_deref().is_none_or(|a| !a.is_empty()));
    }
});

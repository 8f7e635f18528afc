use std::path::PathBuf;
use std::time::Duration;

use evidencer::acquire::{
    ingest, load_corpus, read_pmid_list, save_corpus, AcquireError, ColilClient, EutilsClient, FakeClock, FetchConfig,
    FixtureTransport, HttpClient,
};
use evidencer::corpus::{ArticleRecord, ExclusionReason, CitingSentence, ExpertRecommendation, Label, MeshTerm, PartialDate, Pmid};
use evidencer::RecommendationTag;
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eutils")
}

fn client() -> HttpClient {
    HttpClient::new(Box::new(FixtureTransport::new(fixtures())), Box::new(FakeClock::new()), &FetchConfig::default())
        .unwrap()
}

#[test]
fn fetch_article_from_fixture() {
    let http = client();
    let eutils = EutilsClient::new(&http, &FetchConfig::default());
    let a = eutils.fetch_article(Pmid::new(1001)).unwrap();
    assert_eq!(
        a.abstract_text.as_deref(),
        Some(
            "Epidemiologic studies have suggested a relationship between glycated hemoglobin levels and \
             cardiovascular events. We randomly assigned 10,251 patients to receive intensive or standard therapy."
        )
    );
    assert_eq!(a.pub_date, Some("2008-06-12".parse().unwrap()));
    assert_eq!(a.major_mesh_terms().collect::<Vec<_>>(), vec!["Diabetes Mellitus, Type 2/drug therapy", "Hypoglycemic Agents"]);
    assert!(evidencer::corpus::is_clinical(&a));

    let b = eutils.fetch_article(Pmid::new(1002)).unwrap();
    assert_eq!(b.abstract_text, None);
    assert_eq!(b.pub_date, Some(PartialDate::year(2005)));

    let d = eutils.fetch_article(Pmid::new(1004)).unwrap();
    assert_eq!(d.pub_date, Some("2011-02-03".parse().unwrap()));

    assert!(matches!(eutils.fetch_article(Pmid::new(1003)), Err(AcquireError::NotFound(_))));
}

#[test]
fn fetch_citances_from_fixture() {
    let http = client();
    let colil = ColilClient::new(&http, &FetchConfig::default());
    let got = colil.fetch_citances(Pmid::new(1001), |_| None).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[1].citing_date, PartialDate::year(2010));
    assert!(colil.fetch_citances(Pmid::new(1004), |_| None).unwrap().is_empty());
    assert!(colil.fetch_citances(Pmid::new(1003), |_| None).unwrap().is_empty());
}

#[test]
fn ingest_pmid_list() {
    let pmids = read_pmid_list(fixtures().join("pmids.txt")).unwrap();
    assert_eq!(pmids.len(), 4);
    let cfg = FetchConfig::default();
    let http = client();
    let (records, summary) = ingest(&http, &cfg, &pmids).unwrap();
    assert_eq!(summary.fetched, 3);
    assert_eq!(summary.not_found, vec![Pmid::new(1003)]);
    assert_eq!(summary.without_abstract, 1);
    let b = records.iter().find(|r| r.pmid == Pmid::new(1002)).unwrap();
    // 2001 is known to PubMed and falls back to its year; 2999 is dropped
    let dated: Vec<_> = b.citances.iter().map(|c| (c.citing_pmid.get(), c.citing_date.to_string())).collect();
    assert_eq!(dated, vec![(3003, "2006-03".to_string()), (2001, "2006".to_string())]);
    assert_eq!(summary.citances, 4);
}

#[test]
fn fixture_requests_respect_rate_under_fake_clock() {
    let cfg = FetchConfig { rate_limit: 2.0, ..FetchConfig::default() };
    let http = HttpClient::new(Box::new(FixtureTransport::new(fixtures())), Box::new(FakeClock::new()), &cfg).unwrap();
    let eutils = EutilsClient::new(&http, &cfg);
    for _ in 0..5 {
        eutils.fetch_article(Pmid::new(1001)).unwrap();
    }
    // five requests at two per second need at least two seconds
    assert!(http.clock().now() >= Duration::from_secs(2));
}

fn sample(n: u64) -> ArticleRecord {
    let mut r = ArticleRecord::new(Pmid::new(n));
    r.title = format!("Study {n}");
    r.abstract_text = Some("An abstract with \"quotes\" and unicode: \u{3b1}-blockers.".into());
    r.pub_date = Some("2004-05".parse().unwrap());
    r.mesh_terms = vec![MeshTerm::new("Humans", false), MeshTerm::new("Aspirin/therapeutic use", true)];
    r.recommendations = vec![ExpertRecommendation::new("e1", vec![RecommendationTag::Refutation], None).unwrap()];
    r.citances = vec![CitingSentence::new("However, it failed.", Pmid::new(n + 1), PartialDate::year(2005)).unwrap()];
    r.label = Some(Label::Transformative);
    r
}

#[test]
fn corpus_round_trip_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let records: Vec<_> = (1..=5).map(sample).collect();
    save_corpus(&records, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), records);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 5);

    std::fs::write(&path, "{\"pmid\":\"1\"}\n{\"pmid\":\"2\"}\n{\"title\":\"no id\"}\n").unwrap();
    match load_corpus(&path) {
        Err(AcquireError::Schema { line, field, .. }) => assert_eq!((line, field.as_str()), (3, "pmid")),
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(&path, "").unwrap();
    assert!(load_corpus(&path).unwrap().is_empty());
    assert!(matches!(load_corpus(dir.path().join("missing.jsonl")), Err(AcquireError::Io(_))));
}

fn arb_date() -> impl Strategy<Value = PartialDate> {
    prop_oneof![
        (1950i32..2030).prop_map(PartialDate::year),
        (1950i32..2030, 1u8..=12).prop_map(|(y, m)| PartialDate::year_month(y, m).unwrap()),
        (1950i32..2030, 1u8..=12, 1u8..=28).prop_map(|(y, m, d)| PartialDate::ymd(y, m, d).unwrap()),
    ]
}

fn arb_record() -> impl Strategy<Value = ArticleRecord> {
    let tag = prop::sample::select(RecommendationTag::ALL.to_vec());
    (
        1u64..100_000_000,
        "\\PC{0,30}",
        prop::option::of("[a-zA-Z][\\PC]{0,40}"),
        prop::option::of(arb_date()),
        prop::collection::vec(("[A-Za-z ,]{1,20}(/[a-z ]{1,10})?", any::<bool>()), 0..4),
        prop::collection::vec(("e[0-9]{1,3}", prop::collection::vec(tag, 1..3), prop::option::of(arb_date())), 0..4),
        prop::collection::vec(("[a-zA-Z][\\PC]{0,40}", 1u64..100_000_000, arb_date()), 0..5),
        prop::option::of(prop::sample::select(vec![Label::Transformative, Label::Incremental, Label::Excluded(ExclusionReason::Conflict), Label::Excluded(ExclusionReason::NoLabelingTags)])),
    )
        .prop_map(|(pmid, title, abs, date, mesh, recs, cits, label)| {
            let mut r = ArticleRecord::new(Pmid::new(pmid));
            r.title = title;
            r.abstract_text = abs;
            r.pub_date = date;
            r.mesh_terms = mesh.into_iter().map(|(t, m)| MeshTerm::new(t, m)).collect();
            r.recommendations =
                recs.into_iter().map(|(e, tags, d)| ExpertRecommendation::new(e, tags, d).unwrap()).collect();
            r.citances =
                cits.into_iter().map(|(t, p, d)| CitingSentence::new(t, Pmid::new(p), d).unwrap()).collect();
            r.label = label;
            r
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn save_then_load_is_identity(records in prop::collection::vec(arb_record(), 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&records, &path).unwrap();
        prop_assert_eq!(load_corpus(&path).unwrap(), records);
    }
}

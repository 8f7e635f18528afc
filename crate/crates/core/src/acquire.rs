//! PubMed E-utilities and Colil SPARQL clients, a rate limiter with jittered
//! retry, and the JSON Lines corpus store.
//!
//! Network access goes through the [`Transport`] trait. The `http` feature
//! provides a blocking [`UreqTransport`]; tests use [`FixtureTransport`] or
//! [`ScriptedTransport`] together with a [`FakeClock`].

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ArticleRecord, CitingSentence, MeshTerm, PartialDate, Pmid};

pub const DEFAULT_EUTILS_URL: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
pub const DEFAULT_COLIL_URL: &str = "http://colil.dbcls.jp/sparql";
pub const ENV_EUTILS_KEY: &str = "EVIDENCER_EUTILS_KEY";
pub const ENV_COLIL_URL: &str = "EVIDENCER_COLIL_URL";

/// Requests per second without and with an NCBI API key.
pub const RATE_WITHOUT_KEY: f64 = 3.0;
pub const RATE_WITH_KEY: f64 = 10.0;

#[derive(Debug, Error)]
pub enum AcquireError {
    #[error("transport failure for {pmid}: {message}")]
    Transport { pmid: Pmid, message: String },
    #[error("HTTP {status} for {pmid}")]
    Http { pmid: Pmid, status: u16 },
    #[error("article {0} not found")]
    NotFound(Pmid),
    #[error("malformed XML for {pmid}: {message}")]
    Parse { pmid: Pmid, message: String },
    #[error("malformed SPARQL response for {pmid}: {message}")]
    MalformedResponse { pmid: Pmid, message: String },
    #[error("line {line}: field {field:?}: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("invalid fetch configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AcquireError {
    /// True for failures of the network layer, as opposed to bad data.
    pub fn is_transport(&self) -> bool {
        matches!(self, AcquireError::Transport { .. } | AcquireError::Http { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchConfig {
    pub eutils_base_url: String,
    pub colil_endpoint_url: String,
    pub api_key: Option<String>,
    /// Requests per second, shared by both services.
    pub rate_limit: f64,
    pub retries: u32,
    pub timeout: Duration,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            eutils_base_url: DEFAULT_EUTILS_URL.to_string(),
            colil_endpoint_url: DEFAULT_COLIL_URL.to_string(),
            api_key: None,
            rate_limit: RATE_WITHOUT_KEY,
            retries: 3,
            timeout: Duration::from_secs(30),
        }
    }
}

impl FetchConfig {
    /// Defaults overridden by `EVIDENCER_EUTILS_KEY` and `EVIDENCER_COLIL_URL`.
    /// A key raises the default rate to 10/s.
    pub fn from_env() -> Self {
        let mut cfg = FetchConfig::default();
        if let Some(key) = std::env::var(ENV_EUTILS_KEY).ok().filter(|k| !k.trim().is_empty()) {
            cfg.api_key = Some(key.trim().to_string());
            cfg.rate_limit = RATE_WITH_KEY;
        }
        if let Some(url) = std::env::var(ENV_COLIL_URL).ok().filter(|u| !u.trim().is_empty()) {
            cfg.colil_endpoint_url = url.trim().to_string();
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), AcquireError> {
        if !(self.rate_limit.is_finite() && self.rate_limit > 0.0) {
            return Err(AcquireError::InvalidConfig(format!("rate_limit must be positive, got {}", self.rate_limit)));
        }
        for url in [&self.eutils_base_url, &self.colil_endpoint_url] {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                return Err(AcquireError::InvalidConfig(format!("not an http(s) URL: {url:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Service {
    Eutils,
    Colil,
}

/// Verbatim response body as received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFetchResult {
    pub pmid: Pmid,
    pub payload: Vec<u8>,
    pub fetched_at: SystemTime,
    pub source: Service,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub params: Vec<(String, String)>,
    pub accept: &'static str,
    pub pmid: Pmid,
    pub service: Service,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// One blocking HTTP GET. `Err` means no response was received.
pub trait Transport: Send + Sync {
    fn get(&self, request: &HttpRequest) -> Result<HttpResponse, String>;
}

#[cfg(feature = "http")]
pub struct UreqTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("evidencer/", env!("CARGO_PKG_VERSION")))
            .build();
        UreqTransport { agent: ureq::Agent::new_with_config(config) }
    }
}

#[cfg(feature = "http")]
impl Transport for UreqTransport {
    fn get(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let mut response = self
            .agent
            .get(&request.url)
            .header("Accept", request.accept)
            .query_pairs(request.params.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .call()
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_vec().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Serves `{pmid}.xml` for E-utilities and `{pmid}.srj` for Colil from a
/// directory. Missing files answer 404.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureTransport { dir: dir.into() }
    }
}

impl Transport for FixtureTransport {
    fn get(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let ext = match request.service {
            Service::Eutils => "xml",
            Service::Colil => "srj",
        };
        match fs::read(self.dir.join(format!("{}.{ext}", request.pmid))) {
            Ok(body) => Ok(HttpResponse { status: 200, body }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(HttpResponse { status: 404, body: Vec::new() }),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Replays a fixed sequence of responses and records every request.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<HttpResponse, String>>>,
    seen: Mutex<Vec<HttpRequest>>,
}

impl ScriptedTransport {
    pub fn new(script: impl IntoIterator<Item = Result<HttpResponse, String>>) -> Self {
        ScriptedTransport { script: Mutex::new(script.into_iter().collect()), seen: Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.seen.lock().expect("scripted transport lock").clone()
    }
}

impl Transport for ScriptedTransport {
    fn get(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        self.seen.lock().expect("scripted transport lock").push(request.clone());
        self.script.lock().expect("scripted transport lock").pop_front().unwrap_or_else(|| Err("script exhausted".into()))
    }
}

/// Monotonic time source.
pub trait Clock: Send + Sync {
    /// Time since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Clock whose `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl FakeClock {
    pub fn new() -> Self {
        FakeClock::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().expect("fake clock lock") += d;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("fake clock lock")
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

#[derive(Debug)]
struct LimiterState {
    /// Start times of the most recent requests, oldest first.
    recent: VecDeque<Duration>,
}

/// Admits at most `floor(rate)` requests (at least one) in any half-open
/// one-second window and spaces consecutive requests by `1/rate`.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    burst: usize,
    window: Duration,
    state: Mutex<LimiterState>,
}

impl RateLimiter {
    pub fn new(rate: f64) -> Self {
        assert!(rate.is_finite() && rate > 0.0, "rate must be positive");
        let interval = Duration::from_nanos((1e9 / rate).ceil() as u64);
        let burst = (rate.floor() as usize).max(1);
        // below one request per second the spacing is the binding constraint
        let window = Duration::from_secs(1).max(interval);
        RateLimiter { interval, burst, window, state: Mutex::new(LimiterState { recent: VecDeque::new() }) }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Reserves the next slot and sleeps until it. Returns the slot time.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        let slot = {
            let mut state = self.state.lock().expect("rate limiter lock");
            let mut slot = clock.now();
            if let Some(&last) = state.recent.back() {
                slot = slot.max(last + self.interval);
            }
            if state.recent.len() >= self.burst {
                slot = slot.max(state.recent[state.recent.len() - self.burst] + self.window);
            }
            state.recent.push_back(slot);
            while state.recent.len() > self.burst {
                state.recent.pop_front();
            }
            slot
        };
        let now = clock.now();
        if slot > now {
            clock.sleep(slot - now);
        }
        slot
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// Rate-limited GET with jittered exponential backoff on 429, 5xx and
/// transport failures.
pub struct HttpClient {
    transport: Box<dyn Transport>,
    clock: Box<dyn Clock>,
    limiter: RateLimiter,
    retries: u32,
}

impl HttpClient {
    pub fn new(transport: Box<dyn Transport>, clock: Box<dyn Clock>, cfg: &FetchConfig) -> Result<Self, AcquireError> {
        cfg.validate()?;
        Ok(HttpClient { transport, clock, limiter: RateLimiter::new(cfg.rate_limit), retries: cfg.retries })
    }

    #[cfg(feature = "http")]
    pub fn live(cfg: &FetchConfig) -> Result<Self, AcquireError> {
        HttpClient::new(Box::new(UreqTransport::new(cfg.timeout)), Box::<SystemClock>::default(), cfg)
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.limiter.interval().saturating_mul(1 << attempt.min(16));
        base.mul_f64(rand::rng().random_range(0.5..1.5))
    }

    pub fn get(&self, request: &HttpRequest) -> Result<RawFetchResult, AcquireError> {
        let mut attempt = 0;
        loop {
            self.limiter.acquire(self.clock.as_ref());
            let outcome = self.transport.get(request);
            let failure = match outcome {
                Ok(resp) if resp.status == 200 => {
                    return Ok(RawFetchResult {
                        pmid: request.pmid,
                        payload: resp.body,
                        fetched_at: SystemTime::now(),
                        source: request.service,
                    })
                }
                Ok(resp) if resp.status == 404 => return Err(AcquireError::NotFound(request.pmid)),
                Ok(resp) if !retryable(resp.status) => {
                    return Err(AcquireError::Http { pmid: request.pmid, status: resp.status })
                }
                Ok(resp) => AcquireError::Http { pmid: request.pmid, status: resp.status },
                Err(message) => AcquireError::Transport { pmid: request.pmid, message },
            };
            if attempt >= self.retries {
                return Err(failure);
            }
            log::warn!("{failure}; retry {} of {}", attempt + 1, self.retries);
            self.clock.sleep(self.backoff(attempt));
            attempt += 1;
        }
    }
}

/// PubMed `efetch` client.
pub struct EutilsClient<'a> {
    http: &'a HttpClient,
    base_url: String,
    api_key: Option<String>,
}

impl<'a> EutilsClient<'a> {
    pub fn new(http: &'a HttpClient, cfg: &FetchConfig) -> Self {
        EutilsClient { http, base_url: cfg.eutils_base_url.trim_end_matches('/').to_string(), api_key: cfg.api_key.clone() }
    }

    pub fn request(&self, pmid: Pmid) -> HttpRequest {
        let mut params = vec![
            ("db".to_string(), "pubmed".to_string()),
            ("id".to_string(), pmid.to_string()),
            ("retmode".to_string(), "xml".to_string()),
        ];
        if let Some(key) = &self.api_key {
            params.push(("api_key".to_string(), key.clone()));
        }
        HttpRequest {
            url: format!("{}/efetch.fcgi", self.base_url),
            params,
            accept: "application/xml",
            pmid,
            service: Service::Eutils,
        }
    }

    /// Metadata and abstract; recommendations and citances are left empty.
    pub fn fetch_article(&self, pmid: Pmid) -> Result<ArticleRecord, AcquireError> {
        let raw = self.http.get(&self.request(pmid))?;
        let text = String::from_utf8(raw.payload)
            .map_err(|e| AcquireError::Parse { pmid, message: e.to_string() })?;
        parse_efetch_xml(&text, pmid)
    }
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn path<'a, 'i>(node: roxmltree::Node<'a, 'i>, names: &[&str]) -> Option<roxmltree::Node<'a, 'i>> {
    names.iter().try_fold(node, |n, name| child(n, name))
}

/// Text of all descendants with whitespace runs collapsed.
fn inner_text(node: roxmltree::Node<'_, '_>) -> String {
    let raw: String = node.descendants().filter(|n| n.is_text()).filter_map(|n| n.text()).collect();
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn month_number(s: &str) -> Option<u8> {
    let s = s.trim();
    if let Ok(m) = s.parse::<u8>() {
        return (1..=12).contains(&m).then_some(m);
    }
    const NAMES: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];
    let prefix = s.get(..3)?.to_ascii_lowercase();
    NAMES.iter().position(|&n| n == prefix).map(|i| i as u8 + 1)
}

/// `Year`/`Month`/`Day` children, or a `MedlineDate` such as "1998 Dec-1999 Jan"
/// reduced to its first year. Precision stops at the first missing part.
fn parse_date_node(node: roxmltree::Node<'_, '_>) -> Option<PartialDate> {
    let year = match child(node, "Year") {
        Some(y) => inner_text(y).parse::<i32>().ok()?,
        None => {
            let medline = inner_text(child(node, "MedlineDate")?);
            let digits: String = medline.chars().skip_while(|c| !c.is_ascii_digit()).take(4).collect();
            return digits.parse().ok().filter(|_| digits.len() == 4).map(PartialDate::year);
        }
    };
    let Some(month) = child(node, "Month").and_then(|m| month_number(&inner_text(m))) else {
        return Some(PartialDate::year(year));
    };
    let day = child(node, "Day").and_then(|d| inner_text(d).parse::<u8>().ok());
    match day.and_then(|d| PartialDate::ymd(year, month, d).ok()) {
        Some(date) => Some(date),
        None => PartialDate::year_month(year, month).ok(),
    }
}

/// Parses an `efetch` PubmedArticleSet, taking the article whose PMID matches.
/// Abstract sections are joined with single spaces and their labels dropped.
/// The journal issue date is preferred over the electronic `ArticleDate`.
pub fn parse_efetch_xml(xml: &str, pmid: Pmid) -> Result<ArticleRecord, AcquireError> {
    // efetch responses carry a DOCTYPE; roxmltree never loads external DTDs
    let options = roxmltree::ParsingOptions { allow_dtd: true, nodes_limit: 4_000_000 };
    let doc = roxmltree::Document::parse_with_options(xml, options)
        .map_err(|e| AcquireError::Parse { pmid, message: e.to_string() })?;
    let wanted = pmid.to_string();
    let citation = doc
        .descendants()
        .filter(|n| n.has_tag_name("MedlineCitation"))
        .find(|n| child(*n, "PMID").is_some_and(|p| inner_text(p) == wanted))
        .ok_or(AcquireError::NotFound(pmid))?;
    let article = child(citation, "Article")
        .ok_or_else(|| AcquireError::Parse { pmid, message: "MedlineCitation has no Article element".into() })?;

    let mut record = ArticleRecord::new(pmid);
    record.title = child(article, "ArticleTitle").map(inner_text).unwrap_or_default();
    record.journal = path(article, &["Journal", "Title"]).map(inner_text).filter(|t| !t.is_empty());

    let sections: Vec<String> = child(article, "Abstract")
        .map(|a| a.children().filter(|c| c.has_tag_name("AbstractText")).map(inner_text).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default();
    record.abstract_text = (!sections.is_empty()).then(|| sections.join(" "));

    record.pub_date = path(article, &["Journal", "JournalIssue", "PubDate"])
        .and_then(parse_date_node)
        .or_else(|| child(article, "ArticleDate").and_then(parse_date_node));

    if let Some(list) = child(article, "PublicationTypeList") {
        record.publication_types =
            list.children().filter(|c| c.has_tag_name("PublicationType")).map(inner_text).filter(|s| !s.is_empty()).collect();
    }

    if let Some(list) = child(citation, "MeshHeadingList") {
        for heading in list.children().filter(|c| c.has_tag_name("MeshHeading")) {
            let Some(descriptor) = child(heading, "DescriptorName") else { continue };
            let name = inner_text(descriptor);
            let major = descriptor.attribute("MajorTopicYN") == Some("Y");
            let qualifiers: Vec<_> = heading.children().filter(|c| c.has_tag_name("QualifierName")).collect();
            if qualifiers.is_empty() {
                record.mesh_terms.push(MeshTerm::new(name.clone(), major));
            }
            for q in qualifiers {
                let q_major = q.attribute("MajorTopicYN") == Some("Y");
                record.mesh_terms.push(MeshTerm::new(format!("{name}/{}", inner_text(q)), major || q_major));
            }
        }
    }
    Ok(record)
}

/// SPARQL query for the citation contexts of one PubMed article in Colil.
/// `?year` is an optional citing-paper year used when `?date` is absent.
pub fn colil_query(pmid: Pmid) -> String {
    format!(
        r#"PREFIX colil: <http://purl.jp/bio/10/colil/ontology/201303#>
PREFIX bibo: <http://purl.org/ontology/bibo/>
PREFIX dcterms: <http://purl.org/dc/terms/>
PREFIX prism: <http://prismstandard.org/namespaces/basic/2.0/>
SELECT DISTINCT ?context ?citing ?date ?year WHERE {{
  ?cited bibo:pmid "{pmid}" .
  ?citing colil:mentions ?mention .
  ?mention colil:in ?section ; colil:cites ?cited .
  ?section colil:context ?context .
  OPTIONAL {{ ?citing prism:publicationDate ?date }}
  OPTIONAL {{ ?citing dcterms:issued ?year }}
}}"#
    )
}

#[derive(Debug, Deserialize)]
struct SparqlResults {
    results: SparqlBindings,
}

#[derive(Debug, Deserialize)]
struct SparqlBindings {
    bindings: Vec<BTreeMap<String, SparqlTerm>>,
}

#[derive(Debug, Deserialize)]
struct SparqlTerm {
    value: String,
}

/// Citances parsed from a SPARQL JSON result set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCitances {
    pub citances: Vec<CitingSentence>,
    /// Contexts whose binding had neither a usable date nor year.
    pub undated: Vec<(String, Pmid)>,
    /// Bindings dropped for a blank context or a citing id without a PMID.
    pub skipped: usize,
}

/// PMID from the trailing digits of a citing-paper IRI or literal.
fn trailing_pmid(s: &str) -> Option<Pmid> {
    let digits: String = s.trim().chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    let digits: String = digits.chars().rev().collect();
    digits.parse().ok()
}

fn parse_loose_date(s: &str) -> Option<PartialDate> {
    let s = s.trim();
    if let Ok(d) = s.parse::<PartialDate>() {
        return Some(d);
    }
    // xsd:dateTime or gYear with timezone
    let head: String = s.chars().take_while(|c| c.is_ascii_digit() || *c == '-').collect();
    head.trim_end_matches('-').parse().ok()
}

/// Parses SPARQL JSON results with `context`, `citing` and optional `date` /
/// `year` variables. Identical (text, citing PMID) pairs are kept once.
pub fn parse_sparql_citances(json: &str, pmid: Pmid) -> Result<ParsedCitances, AcquireError> {
    let results: SparqlResults = serde_json::from_str(json)
        .map_err(|e| AcquireError::MalformedResponse { pmid, message: e.to_string() })?;
    let mut out = ParsedCitances::default();
    let mut seen = HashSet::new();
    for binding in results.results.bindings {
        let context = binding.get("context").map(|t| t.value.split_whitespace().collect::<Vec<_>>().join(" "));
        let citing = binding.get("citing").and_then(|t| trailing_pmid(&t.value));
        let (Some(text), Some(citing)) = (context.filter(|c| !c.is_empty()), citing) else {
            out.skipped += 1;
            continue;
        };
        if !seen.insert((text.clone(), citing)) {
            continue;
        }
        let date = binding
            .get("date")
            .and_then(|t| parse_loose_date(&t.value))
            .or_else(|| binding.get("year").and_then(|t| parse_loose_date(&t.value)).map(PartialDate::to_year));
        match date {
            Some(date) => out.citances.push(CitingSentence::new(text, citing, date).expect("context is non-blank")),
            None => out.undated.push((text, citing)),
        }
    }
    Ok(out)
}

/// Colil SPARQL client.
pub struct ColilClient<'a> {
    http: &'a HttpClient,
    endpoint: String,
}

impl<'a> ColilClient<'a> {
    pub fn new(http: &'a HttpClient, cfg: &FetchConfig) -> Self {
        ColilClient { http, endpoint: cfg.colil_endpoint_url.clone() }
    }

    pub fn request(&self, pmid: Pmid) -> HttpRequest {
        HttpRequest {
            url: self.endpoint.clone(),
            params: vec![("query".to_string(), colil_query(pmid))],
            accept: "application/sparql-results+json",
            pmid,
            service: Service::Colil,
        }
    }

    /// Citances of `pmid`. Undated contexts take the year from `citing_year`
    /// when it knows the citing paper, else they are dropped with a warning.
    pub fn fetch_citances(
        &self,
        pmid: Pmid,
        citing_year: impl Fn(Pmid) -> Option<PartialDate>,
    ) -> Result<Vec<CitingSentence>, AcquireError> {
        let raw = match self.http.get(&self.request(pmid)) {
            Ok(raw) => raw,
            Err(AcquireError::NotFound(_)) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let text = String::from_utf8(raw.payload)
            .map_err(|e| AcquireError::MalformedResponse { pmid, message: e.to_string() })?;
        let parsed = parse_sparql_citances(&text, pmid)?;
        let mut citances = parsed.citances;
        let mut dropped = 0;
        for (text, citing) in parsed.undated {
            match citing_year(citing) {
                Some(date) => citances.push(CitingSentence::new(text, citing, date.to_year()).expect("non-blank")),
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            log::warn!("{pmid}: dropped {dropped} citing sentences without a date");
        }
        if parsed.skipped > 0 {
            log::warn!("{pmid}: skipped {} malformed bindings", parsed.skipped);
        }
        Ok(citances)
    }
}

/// Outcome of [`ingest`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub requested: usize,
    pub fetched: usize,
    pub not_found: Vec<Pmid>,
    pub without_abstract: usize,
    pub citances: usize,
}

/// Fetches metadata and citances for every PMID. Unknown PMIDs are listed
/// in the summary; any other error aborts. Undated citances fall back to the
/// citing article's publication year from E-utilities.
pub fn ingest(http: &HttpClient, cfg: &FetchConfig, pmids: &[Pmid]) -> Result<(Vec<ArticleRecord>, IngestSummary), AcquireError> {
    let eutils = EutilsClient::new(http, cfg);
    let colil = ColilClient::new(http, cfg);
    let mut summary = IngestSummary { requested: pmids.len(), ..IngestSummary::default() };
    let mut records = Vec::new();
    for &pmid in pmids {
        let mut record = match eutils.fetch_article(pmid) {
            Ok(r) => r,
            Err(AcquireError::NotFound(p)) => {
                log::warn!("article {p} not found");
                summary.not_found.push(p);
                continue;
            }
            Err(e) => return Err(e),
        };
        record.citances = colil.fetch_citances(pmid, |citing| {
            eutils.fetch_article(citing).ok().and_then(|a| a.pub_date).map(PartialDate::to_year)
        })?;
        summary.fetched += 1;
        summary.citances += record.citances.len();
        if record.abstract_text.is_none() {
            summary.without_abstract += 1;
        }
        records.push(record);
    }
    Ok((records, summary))
}

/// Reads one record per non-blank line.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<ArticleRecord>, AcquireError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record_line(&line, i + 1)?);
    }
    Ok(records)
}

/// Parses one JSON Lines record; errors name the line and the offending field.
pub fn parse_record_line(line: &str, line_no: usize) -> Result<ArticleRecord, AcquireError> {
    let schema = |field: &str, message: String| AcquireError::Schema { line: line_no, field: field.to_string(), message };
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| schema("", e.to_string()))?;
    let Some(object) = value.as_object() else {
        return Err(schema("", "expected a JSON object".into()));
    };
    if !object.contains_key("pmid") {
        return Err(schema("pmid", "missing required field".into()));
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        schema(if field == "." { "" } else { &field }, e.into_inner().to_string())
    })
}

pub fn write_jsonl(records: &[ArticleRecord], mut writer: impl Write) -> Result<(), AcquireError> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ArticleRecord>, AcquireError> {
    read_jsonl(BufReader::new(fs::File::open(path)?))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn save_corpus(records: &[ArticleRecord], path: impl AsRef<Path>) -> Result<(), AcquireError> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_jsonl(records, BufWriter::new(fs::File::create(&tmp)?))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One PMID per line; blank lines and `#` comments are skipped and
/// duplicates dropped in first-seen order.
pub fn read_pmid_list(path: impl AsRef<Path>) -> Result<Vec<Pmid>, AcquireError> {
    let text = fs::read_to_string(path)?;
    parse_pmid_list(&text)
}

pub fn parse_pmid_list(text: &str) -> Result<Vec<Pmid>, AcquireError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let pmid: Pmid = line.parse().map_err(|e: crate::corpus::CorpusError| AcquireError::Schema {
            line: i + 1,
            field: "pmid".into(),
            message: e.to_string(),
        })?;
        if seen.insert(pmid) {
            out.push(pmid);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_SECTIONS: &str = r#"<?xml version="1.0"?>
<PubmedArticleSet>
 <PubmedArticle>
  <MedlineCitation Status="MEDLINE">
   <PMID Version="1">123</PMID>
   <Article>
    <Journal><Title>The Lancet</Title>
     <JournalIssue><PubDate><Year>2009</Year><Month>Mar</Month><Day>07</Day></PubDate></JournalIssue>
    </Journal>
    <ArticleTitle>Aspirin in <i>older</i> adults.</ArticleTitle>
    <Abstract>
     <AbstractText Label="BACKGROUND" NlmCategory="BACKGROUND">Aspirin is widely used.</AbstractText>
     <AbstractText Label="RESULTS">Mortality did not
       differ.</AbstractText>
    </Abstract>
    <PublicationTypeList><PublicationType>Randomized Controlled Trial</PublicationType></PublicationTypeList>
   </Article>
   <MeshHeadingList>
    <MeshHeading><DescriptorName MajorTopicYN="N">Humans</DescriptorName></MeshHeading>
    <MeshHeading><DescriptorName MajorTopicYN="N">Aspirin</DescriptorName>
     <QualifierName MajorTopicYN="Y">therapeutic use</QualifierName>
     <QualifierName MajorTopicYN="N">adverse effects</QualifierName></MeshHeading>
   </MeshHeadingList>
  </MedlineCitation>
 </PubmedArticle>
</PubmedArticleSet>"#;

    fn cfg(rate: f64, retries: u32) -> FetchConfig {
        FetchConfig { rate_limit: rate, retries, ..FetchConfig::default() }
    }

    #[test]
    fn efetch_sections_are_joined() {
        let a = parse_efetch_xml(TWO_SECTIONS, Pmid::new(123)).unwrap();
        assert_eq!(a.title, "Aspirin in older adults.");
        assert_eq!(a.abstract_text.as_deref(), Some("Aspirin is widely used. Mortality did not differ."));
        assert_eq!(a.pub_date, Some("2009-03-07".parse().unwrap()));
        assert_eq!(a.journal.as_deref(), Some("The Lancet"));
        assert_eq!(a.publication_types, vec!["Randomized Controlled Trial"]);
        assert_eq!(
            a.mesh_terms,
            vec![
                MeshTerm::new("Humans", false),
                MeshTerm::new("Aspirin/therapeutic use", true),
                MeshTerm::new("Aspirin/adverse effects", false),
            ]
        );
        assert!(a.recommendations.is_empty() && a.citances.is_empty());
    }

    #[test]
    fn efetch_without_abstract_or_match() {
        let xml = TWO_SECTIONS.replace(
            &TWO_SECTIONS[TWO_SECTIONS.find("<Abstract>").unwrap()..TWO_SECTIONS.find("</Abstract>").unwrap() + 11],
            "",
        );
        assert_eq!(parse_efetch_xml(&xml, Pmid::new(123)).unwrap().abstract_text, None);
        assert!(matches!(parse_efetch_xml(TWO_SECTIONS, Pmid::new(9)), Err(AcquireError::NotFound(_))));
        assert!(matches!(parse_efetch_xml("<PubmedArticleSet>", Pmid::new(1)), Err(AcquireError::Parse { .. })));
        assert!(matches!(parse_efetch_xml("<PubmedArticleSet/>", Pmid::new(1)), Err(AcquireError::NotFound(_))));
    }

    #[test]
    fn medline_and_article_dates() {
        let medline = TWO_SECTIONS.replace(
            "<Year>2009</Year><Month>Mar</Month><Day>07</Day>",
            "<MedlineDate>1998 Dec-1999 Jan</MedlineDate>",
        );
        assert_eq!(parse_efetch_xml(&medline, Pmid::new(123)).unwrap().pub_date, Some(PartialDate::year(1998)));
        let month_only = TWO_SECTIONS.replace("<Day>07</Day>", "");
        assert_eq!(parse_efetch_xml(&month_only, Pmid::new(123)).unwrap().pub_date, Some("2009-03".parse().unwrap()));
        let electronic = TWO_SECTIONS
            .replace("<PubDate><Year>2009</Year><Month>Mar</Month><Day>07</Day></PubDate>", "<PubDate/>")
            .replace(
                "<ArticleTitle>",
                r#"<ArticleDate DateType="Electronic"><Year>2008</Year><Month>11</Month><Day>30</Day></ArticleDate><ArticleTitle>"#,
            );
        assert_eq!(parse_efetch_xml(&electronic, Pmid::new(123)).unwrap().pub_date, Some("2008-11-30".parse().unwrap()));
    }

    fn srj(bindings: &[(&str, &str, Option<&str>)]) -> String {
        let rows: Vec<serde_json::Value> = bindings
            .iter()
            .map(|(c, p, d)| {
                let mut b = serde_json::json!({
                    "context": {"type": "literal", "value": c},
                    "citing": {"type": "uri", "value": format!("http://identifiers.org/pubmed/{p}")},
                });
                if let Some(d) = d {
                    b["date"] = serde_json::json!({"type": "literal", "value": d});
                }
                b
            })
            .collect();
        serde_json::json!({"head": {"vars": ["context", "citing", "date"]}, "results": {"bindings": rows}}).to_string()
    }

    #[test]
    fn sparql_dedup_and_undated() {
        let json = srj(&[("A finding.", "11", Some("2010-05")), ("A finding.", "11", Some("2010-05")), ("Other.", "12", Some("2011"))]);
        let parsed = parse_sparql_citances(&json, Pmid::new(1)).unwrap();
        assert_eq!(parsed.citances.len(), 2);
        assert_eq!(parsed.citances[0].citing_date, "2010-05".parse().unwrap());
        let empty = parse_sparql_citances(&srj(&[]), Pmid::new(1)).unwrap();
        assert!(empty.citances.is_empty() && empty.undated.is_empty());
        let undated = parse_sparql_citances(&srj(&[("No date.", "13", None)]), Pmid::new(1)).unwrap();
        assert_eq!(undated.undated, vec![("No date.".to_string(), Pmid::new(13))]);
        assert!(matches!(parse_sparql_citances("{\"head\":{}}", Pmid::new(1)), Err(AcquireError::MalformedResponse { .. })));
    }

    #[test]
    fn undated_falls_back_to_citing_year_or_drops() {
        let json = srj(&[("Dated.", "11", Some("2010-05-02T00:00:00Z")), ("Undated.", "12", None), ("Lost.", "13", None)]);
        let http = HttpClient::new(
            Box::new(ScriptedTransport::new([Ok(HttpResponse { status: 200, body: json.into_bytes() })])),
            Box::new(FakeClock::new()),
            &cfg(3.0, 0),
        )
        .unwrap();
        let c = ColilClient::new(&http, &FetchConfig::default());
        let got = c
            .fetch_citances(Pmid::new(1), |p| (p == Pmid::new(12)).then(|| "2012-07-01".parse().unwrap()))
            .unwrap();
        let summary: Vec<_> = got.iter().map(|c| (c.text().to_string(), c.citing_date.to_string())).collect();
        assert_eq!(summary, vec![("Dated.".into(), "2010-05-02".into()), ("Undated.".into(), "2012".into())]);
    }

    #[test]
    fn retry_after_429_waits_at_least_one_interval() {
        let clock = FakeClock::new();
        let transport = ScriptedTransport::new([
            Ok(HttpResponse { status: 429, body: Vec::new() }),
            Ok(HttpResponse { status: 200, body: b"ok".to_vec() }),
        ]);
        let http = HttpClient::new(Box::new(transport), Box::new(clock), &cfg(4.0, 2)).unwrap();
        let req = EutilsClient::new(&http, &cfg(4.0, 2)).request(Pmid::new(5));
        let start = http.clock().now();
        let raw = http.get(&req).unwrap();
        assert_eq!(raw.payload, b"ok");
        assert!(http.clock().now() - start >= Duration::from_millis(250));
    }

    #[test]
    fn retries_exhausted_and_client_errors() {
        let script = (0..3).map(|_| Ok(HttpResponse { status: 503, body: Vec::new() }));
        let http = HttpClient::new(Box::new(ScriptedTransport::new(script)), Box::new(FakeClock::new()), &cfg(3.0, 2)).unwrap();
        let req = EutilsClient::new(&http, &FetchConfig::default()).request(Pmid::new(5));
        assert!(matches!(http.get(&req), Err(AcquireError::Http { status: 503, .. })));

        let http = HttpClient::new(
            Box::new(ScriptedTransport::new([Ok(HttpResponse { status: 400, body: Vec::new() })])),
            Box::new(FakeClock::new()),
            &cfg(3.0, 5),
        )
        .unwrap();
        assert!(matches!(http.get(&req), Err(AcquireError::Http { status: 400, .. })));

        let http = HttpClient::new(
            Box::new(ScriptedTransport::new([Err("connection refused".to_string())])),
            Box::new(FakeClock::new()),
            &cfg(3.0, 0),
        )
        .unwrap();
        assert!(http.get(&req).unwrap_err().is_transport());
    }

    #[test]
    fn api_key_is_sent() {
        let c = FetchConfig { api_key: Some("k".into()), ..FetchConfig::default() };
        let http = HttpClient::new(Box::new(ScriptedTransport::default()), Box::new(FakeClock::new()), &c).unwrap();
        let req = EutilsClient::new(&http, &c).request(Pmid::new(7));
        assert!(req.params.contains(&("api_key".into(), "k".into())));
        assert!(req.url.ends_with("/efetch.fcgi"));
        assert!(matches!(
            HttpClient::new(Box::new(ScriptedTransport::default()), Box::new(FakeClock::new()), &cfg(0.0, 0)),
            Err(AcquireError::InvalidConfig(_))
        ));
    }

    fn max_in_window(starts: &[Duration]) -> usize {
        let one = Duration::from_secs(1);
        (0..starts.len()).map(|i| starts[i..].iter().take_while(|&&s| s < starts[i] + one).count()).max().unwrap_or(0)
    }

    proptest! {
        #[test]
        fn limiter_respects_budget(rate in 0.3f64..25.0, gaps in proptest::collection::vec(0u64..700, 1..80)) {
            let clock = FakeClock::new();
            let limiter = RateLimiter::new(rate);
            let mut starts = Vec::new();
            for g in gaps {
                clock.advance(Duration::from_millis(g));
                starts.push(limiter.acquire(&clock));
            }
            prop_assert!(starts.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(max_in_window(&starts) as f64 <= rate.max(1.0));
        }
    }

    #[test]
    fn pmid_list_parsing() {
        let got = parse_pmid_list("# header\n123\n\n456 # note\n123\n").unwrap();
        assert_eq!(got, vec![Pmid::new(123), Pmid::new(456)]);
        assert!(matches!(parse_pmid_list("1\nabc\n"), Err(AcquireError::Schema { line: 2, .. })));
    }

    #[test]
    fn schema_errors_name_line_and_field() {
        let text = "{\"pmid\":\"1\"}\n{\"pmid\":2}\n{\"title\":\"x\"}\n";
        match read_jsonl(text.as_bytes()) {
            Err(AcquireError::Schema { line, field, .. }) => assert_eq!((line, field.as_str()), (3, "pmid")),
            other => panic!("unexpected {other:?}"),
        }
        let bad_date = "{\"pmid\":\"1\",\"pub_date\":\"2001-13\"}";
        match read_jsonl(bad_date.as_bytes()) {
            Err(AcquireError::Schema { line: 1, field, .. }) => assert_eq!(field, "pub_date"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_jsonl("".as_bytes()).unwrap().is_empty());
    }
}

//! Study records, the transformative / incremental labeling rules and the
//! early-citation window.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("article {0} has no publication date")]
    MissingDate(Pmid),
    #[error("citation window must be positive, got {0} months")]
    InvalidWindow(u32),
    #[error("invalid date {0:?}: expected YYYY, YYYY-MM or YYYY-MM-DD")]
    InvalidDate(String),
    #[error("invalid PubMed identifier {0:?}")]
    InvalidPmid(String),
    #[error("unknown recommendation tag {0:?}")]
    UnknownTag(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("recommendation by {0:?} carries no tags")]
    EmptyTags(String),
    #[error("citing sentence from {0} is blank")]
    BlankCitance(Pmid),
}

/// PubMed identifier. Serialized as a decimal string; numbers are accepted on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pmid(u64);

impl Pmid {
    pub fn new(id: u64) -> Self {
        Pmid(id)
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl FromStr for Pmid {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || t.len() > 19 || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(CorpusError::InvalidPmid(s.to_string()));
        }
        t.parse().map(Pmid).map_err(|_| CorpusError::InvalidPmid(s.to_string()))
    }
}

impl fmt::Display for Pmid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Pmid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pmid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Pmid(n)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatePrecision {
    Year,
    Month,
    Day,
}

/// Calendar date truncated to the precision the source actually knows.
///
/// Ordering is lexicographic with unknown components sorting first, so a
/// year-only date precedes every month of that year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartialDate {
    year: i32,
    month: Option<u8>,
    day: Option<u8>,
}

impl PartialDate {
    pub fn year(year: i32) -> Self {
        PartialDate { year, month: None, day: None }
    }

    pub fn year_month(year: i32, month: u8) -> Result<Self, CorpusError> {
        if !(1..=12).contains(&month) {
            return Err(CorpusError::InvalidDate(format!("{year:04}-{month:02}")));
        }
        Ok(PartialDate { year, month: Some(month), day: None })
    }

    pub fn ymd(year: i32, month: u8, day: u8) -> Result<Self, CorpusError> {
        let d = Self::year_month(year, month)?;
        if day == 0 || day > days_in_month(year, month) {
            return Err(CorpusError::InvalidDate(format!("{year:04}-{month:02}-{day:02}")));
        }
        Ok(PartialDate { day: Some(day), ..d })
    }

    pub fn get_year(&self) -> i32 {
        self.year
    }

    pub fn get_month(&self) -> Option<u8> {
        self.month
    }

    pub fn get_day(&self) -> Option<u8> {
        self.day
    }

    pub fn precision(&self) -> DatePrecision {
        match (self.month, self.day) {
            (None, _) => DatePrecision::Year,
            (Some(_), None) => DatePrecision::Month,
            (Some(_), Some(_)) => DatePrecision::Day,
        }
    }

    /// Truncates the date to year precision.
    pub fn to_year(self) -> Self {
        Self::year(self.year)
    }
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        4 | 6 | 9 | 11 => 30,
        2 if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        2 => 28,
        _ => 31,
    }
}

impl FromStr for PartialDate {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::InvalidDate(s.to_string());
        let parts: Vec<&str> = s.trim().split('-').collect();
        let num = |p: &str, len: usize| -> Result<u32, CorpusError> {
            if p.len() != len || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            p.parse().map_err(|_| bad())
        };
        match parts.as_slice() {
            [y] => Ok(Self::year(num(y, 4)? as i32)),
            [y, m] => Self::year_month(num(y, 4)? as i32, num(m, 2)? as u8).map_err(|_| bad()),
            [y, m, d] => Self::ymd(num(y, 4)? as i32, num(m, 2)? as u8, num(d, 2)? as u8).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PartialDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.year)?;
        if let Some(m) = self.month {
            write!(f, "-{m:02}")?;
        }
        if let Some(d) = self.day {
            write!(f, "-{d:02}")?;
        }
        Ok(())
    }
}

impl Serialize for PartialDate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartialDate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Faculty Opinions recommendation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecommendationTag {
    Confirmation,
    ChangesClinicalPractice,
    Controversial,
    Refutation,
    GoodForTeaching,
    InterestingHypothesis,
    NewFinding,
    NovelDrugTarget,
    TechnicalAdvance,
}

impl RecommendationTag {
    pub const ALL: [RecommendationTag; 9] = [
        RecommendationTag::Confirmation,
        RecommendationTag::ChangesClinicalPractice,
        RecommendationTag::Controversial,
        RecommendationTag::Refutation,
        RecommendationTag::GoodForTeaching,
        RecommendationTag::InterestingHypothesis,
        RecommendationTag::NewFinding,
        RecommendationTag::NovelDrugTarget,
        RecommendationTag::TechnicalAdvance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecommendationTag::Confirmation => "Confirmation",
            RecommendationTag::ChangesClinicalPractice => "Changes Clinical Practice",
            RecommendationTag::Controversial => "Controversial",
            RecommendationTag::Refutation => "Refutation",
            RecommendationTag::GoodForTeaching => "Good for Teaching",
            RecommendationTag::InterestingHypothesis => "Interesting Hypothesis",
            RecommendationTag::NewFinding => "New Finding",
            RecommendationTag::NovelDrugTarget => "Novel Drug Target",
            RecommendationTag::TechnicalAdvance => "Technical Advance",
        }
    }

    /// Tags that mark a study as challenging established claims.
    pub fn is_transformative(self) -> bool {
        matches!(
            self,
            RecommendationTag::Refutation | RecommendationTag::ChangesClinicalPractice | RecommendationTag::Controversial
        )
    }

    pub fn is_incremental(self) -> bool {
        self == RecommendationTag::Confirmation
    }

    pub fn is_labeling(self) -> bool {
        self.is_transformative() || self.is_incremental()
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

impl FromStr for RecommendationTag {
    type Err = CorpusError;

    /// Accepts the display form or the variant name, ignoring case, spaces,
    /// hyphens and underscores.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s);
        Self::ALL
            .into_iter()
            .find(|t| squash(t.as_str()) == key)
            .ok_or_else(|| CorpusError::UnknownTag(s.to_string()))
    }
}

impl fmt::Display for RecommendationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for RecommendationTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RecommendationTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRecommendation")]
pub struct ExpertRecommendation {
    pub expert_id: String,
    tags: BTreeSet<RecommendationTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<PartialDate>,
}

#[derive(Deserialize)]
struct RawRecommendation {
    expert_id: String,
    tags: BTreeSet<RecommendationTag>,
    #[serde(default)]
    date: Option<PartialDate>,
}

impl TryFrom<RawRecommendation> for ExpertRecommendation {
    type Error = CorpusError;

    fn try_from(raw: RawRecommendation) -> Result<Self, Self::Error> {
        ExpertRecommendation::new(raw.expert_id, raw.tags, raw.date)
    }
}

impl ExpertRecommendation {
    pub fn new(
        expert_id: impl Into<String>,
        tags: impl IntoIterator<Item = RecommendationTag>,
        date: Option<PartialDate>,
    ) -> Result<Self, CorpusError> {
        let expert_id = expert_id.into();
        let tags: BTreeSet<_> = tags.into_iter().collect();
        if tags.is_empty() {
            return Err(CorpusError::EmptyTags(expert_id));
        }
        Ok(ExpertRecommendation { expert_id, tags, date })
    }

    pub fn tags(&self) -> &BTreeSet<RecommendationTag> {
        &self.tags
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCitance")]
pub struct CitingSentence {
    text: String,
    pub citing_pmid: Pmid,
    pub citing_date: PartialDate,
}

#[derive(Deserialize)]
struct RawCitance {
    text: String,
    citing_pmid: Pmid,
    citing_date: PartialDate,
}

impl TryFrom<RawCitance> for CitingSentence {
    type Error = CorpusError;

    fn try_from(raw: RawCitance) -> Result<Self, Self::Error> {
        CitingSentence::new(raw.text, raw.citing_pmid, raw.citing_date)
    }
}

impl CitingSentence {
    pub fn new(text: impl Into<String>, citing_pmid: Pmid, citing_date: PartialDate) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::BlankCitance(citing_pmid));
        }
        Ok(CitingSentence { text, citing_pmid, citing_date })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshTerm {
    /// Descriptor, optionally followed by `/qualifier`.
    pub term: String,
    pub major: bool,
}

impl MeshTerm {
    pub fn new(term: impl Into<String>, major: bool) -> Self {
        MeshTerm { term: term.into(), major }
    }

    pub fn descriptor(&self) -> &str {
        self.term.split_once('/').map_or(self.term.as_str(), |(d, _)| d)
    }

    pub fn qualifier(&self) -> Option<&str> {
        self.term.split_once('/').map(|(_, q)| q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionReason {
    Conflict,
    InsufficientExperts,
    NoLabelingTags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Transformative,
    Incremental,
    Excluded(ExclusionReason),
}

impl Label {
    /// `Some(true)` for transformative, `Some(false)` for incremental.
    pub fn as_class(self) -> Option<bool> {
        match self {
            Label::Transformative => Some(true),
            Label::Incremental => Some(false),
            Label::Excluded(_) => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Transformative => "transformative",
            Label::Incremental => "incremental",
            Label::Excluded(ExclusionReason::Conflict) => "excluded:conflict",
            Label::Excluded(ExclusionReason::InsufficientExperts) => "excluded:insufficient_experts",
            Label::Excluded(ExclusionReason::NoLabelingTags) => "excluded:no_labeling_tags",
        })
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "transformative" => Label::Transformative,
            "incremental" => Label::Incremental,
            "excluded:conflict" => Label::Excluded(ExclusionReason::Conflict),
            "excluded:insufficient_experts" => Label::Excluded(ExclusionReason::InsufficientExperts),
            "excluded:no_labeling_tags" => Label::Excluded(ExclusionReason::NoLabelingTags),
            _ => return Err(CorpusError::UnknownLabel(s.to_string())),
        })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn blank_as_none<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|s| !s.trim().is_empty()))
}

/// One study in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub pmid: Pmid,
    #[serde(default)]
    pub title: String,
    /// `None` when PubMed has no abstract for the study.
    #[serde(rename = "abstract", default, deserialize_with = "blank_as_none")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub pub_date: Option<PartialDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub publication_types: Vec<String>,
    #[serde(default)]
    pub mesh_terms: Vec<MeshTerm>,
    #[serde(default)]
    pub recommendations: Vec<ExpertRecommendation>,
    #[serde(default)]
    pub citances: Vec<CitingSentence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl ArticleRecord {
    pub fn new(pmid: Pmid) -> Self {
        ArticleRecord {
            pmid,
            title: String::new(),
            abstract_text: None,
            pub_date: None,
            journal: None,
            publication_types: Vec::new(),
            mesh_terms: Vec::new(),
            recommendations: Vec::new(),
            citances: Vec::new(),
            label: None,
        }
    }

    pub fn major_mesh_terms(&self) -> impl Iterator<Item = &str> {
        self.mesh_terms.iter().filter(|m| m.major).map(|m| m.term.as_str())
    }
}

/// Assigns the transformative / incremental annotation from expert recommendations.
///
/// A study carrying both a transformative tag (Refutation, Changes Clinical
/// Practice, Controversial) and Confirmation anywhere is a conflict. Otherwise
/// at least two distinct experts must back the same class.
pub fn assign_label(recs: &[ExpertRecommendation]) -> Label {
    let mut t_experts = BTreeSet::new();
    let mut i_experts = BTreeSet::new();
    for rec in recs {
        if rec.tags.iter().any(|t| t.is_transformative()) {
            t_experts.insert(rec.expert_id.as_str());
        }
        if rec.tags.iter().any(|t| t.is_incremental()) {
            i_experts.insert(rec.expert_id.as_str());
        }
    }
    match (t_experts.len(), i_experts.len()) {
        (t, i) if t > 0 && i > 0 => Label::Excluded(ExclusionReason::Conflict),
        (t, _) if t >= 2 => Label::Transformative,
        (_, i) if i >= 2 => Label::Incremental,
        (0, 0) => Label::Excluded(ExclusionReason::NoLabelingTags),
        _ => Label::Excluded(ExclusionReason::InsufficientExperts),
    }
}

pub const DEFAULT_WINDOW_MONTHS: u32 = 24;

/// Whether a citance dated `cited` falls in the first `window_months` after `published`.
///
/// With month precision on both sides the month offset must lie in
/// `[0, window_months)`. Otherwise only years are compared and a citance is
/// kept when some month assignment within the two years could fall inside
/// the window, i.e. `0 <= dy` and `12*dy - 11 < window_months`.
pub fn within_window(published: PartialDate, cited: PartialDate, window_months: u32) -> bool {
    let window = i64::from(window_months);
    match (published.month, cited.month) {
        (Some(pm), Some(cm)) => {
            let offset = (i64::from(cited.year) * 12 + i64::from(cm)) - (i64::from(published.year) * 12 + i64::from(pm));
            (0..window).contains(&offset)
        }
        _ => {
            let dy = i64::from(cited.year) - i64::from(published.year);
            dy >= 0 && 12 * dy - 11 < window
        }
    }
}

/// Citances inside the early window after publication, in input order.
pub fn window_citances(article: &ArticleRecord, window_months: u32) -> Result<Vec<CitingSentence>, CorpusError> {
    if window_months == 0 {
        return Err(CorpusError::InvalidWindow(window_months));
    }
    let published = article.pub_date.ok_or(CorpusError::MissingDate(article.pmid))?;
    Ok(article
        .citances
        .iter()
        .filter(|c| within_window(published, c.citing_date, window_months))
        .cloned()
        .collect())
}

/// Joins citances into one document, ordered by citing date then citing PMID.
pub fn concat_citances(citances: &[CitingSentence]) -> String {
    let mut ordered: Vec<&CitingSentence> = citances.iter().collect();
    ordered.sort_by_key(|c| (c.citing_date, c.citing_pmid));
    ordered.iter().map(|c| c.text.trim()).collect::<Vec<_>>().join(" ")
}

/// Local equivalent of the PubMed clinical-study filter query.
pub fn is_clinical(article: &ArticleRecord) -> bool {
    let text = format!("{} {}", article.title, article.abstract_text.as_deref().unwrap_or("")).to_lowercase();
    if text.contains("clinical") && text.contains("trial") {
        return true;
    }
    if text.contains("random") {
        return true;
    }
    if article.publication_types.iter().any(|p| p.to_lowercase().contains("clinical trial")) {
        return true;
    }
    article.mesh_terms.iter().any(|m| {
        let descriptor = m.descriptor().trim().to_lowercase();
        descriptor.starts_with("clinical trials")
            || descriptor == "random allocation"
            || m.qualifier().is_some_and(|q| q.trim().eq_ignore_ascii_case("therapeutic use"))
    })
}

/// Counts from labeling a corpus. `non_clinical + excluded + labeled == total`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub total: usize,
    pub non_clinical: usize,
    pub conflict: usize,
    pub insufficient_experts: usize,
    pub no_labeling_tags: usize,
    pub transformative: usize,
    pub incremental: usize,
}

impl AnnotationSummary {
    pub fn labeled(&self) -> usize {
        self.transformative + self.incremental
    }

    pub fn excluded(&self) -> usize {
        self.conflict + self.insufficient_experts + self.no_labeling_tags
    }
}

/// Labels every record in place. With `clinical_only`, non-clinical records are
/// dropped before labeling and counted separately.
pub fn annotate(records: Vec<ArticleRecord>, clinical_only: bool) -> (Vec<ArticleRecord>, AnnotationSummary) {
    let mut summary = AnnotationSummary { total: records.len(), ..Default::default() };
    let mut out = Vec::with_capacity(records.len());
    for mut rec in records {
        if clinical_only && !is_clinical(&rec) {
            summary.non_clinical += 1;
            continue;
        }
        let label = assign_label(&rec.recommendations);
        match label {
            Label::Transformative => summary.transformative += 1,
            Label::Incremental => summary.incremental += 1,
            Label::Excluded(ExclusionReason::Conflict) => summary.conflict += 1,
            Label::Excluded(ExclusionReason::InsufficientExperts) => summary.insufficient_experts += 1,
            Label::Excluded(ExclusionReason::NoLabelingTags) => summary.no_labeling_tags += 1,
        }
        rec.label = Some(label);
        out.push(rec);
    }
    (out, summary)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelingSummary {
    pub unlabeled: usize,
    pub missing_date: usize,
    pub missing_abstract: usize,
    pub no_windowed_citances: usize,
    pub kept: usize,
}

/// Keeps labeled records that have an abstract and at least one citance inside
/// the window. The returned records carry only their windowed citances.
pub fn select_for_modeling(records: Vec<ArticleRecord>, window_months: u32) -> Result<(Vec<ArticleRecord>, ModelingSummary), CorpusError> {
    if window_months == 0 {
        return Err(CorpusError::InvalidWindow(window_months));
    }
    let mut summary = ModelingSummary::default();
    let mut kept = Vec::new();
    for mut rec in records {
        if rec.label.and_then(Label::as_class).is_none() {
            summary.unlabeled += 1;
            continue;
        }
        if rec.abstract_text.is_none() {
            summary.missing_abstract += 1;
            continue;
        }
        let windowed = match window_citances(&rec, window_months) {
            Ok(w) => w,
            Err(CorpusError::MissingDate(_)) => {
                summary.missing_date += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if windowed.is_empty() {
            summary.no_windowed_citances += 1;
            continue;
        }
        rec.citances = windowed;
        kept.push(rec);
    }
    summary.kept = kept.len();
    Ok((kept, summary))
}

/// Rejects corpora with repeated PMIDs, returning the first duplicate.
pub fn check_unique_pmids(records: &[ArticleRecord]) -> Result<(), Pmid> {
    let mut seen = BTreeMap::new();
    for r in records {
        if seen.insert(r.pmid, ()).is_some() {
            return Err(r.pmid);
        }
    }
    Ok(())
}

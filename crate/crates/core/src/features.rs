//! N-gram extraction, count / TF-IDF vectorization and per-document feature
//! assembly.
//!
//! TF-IDF uses the plain form `tf * ln(N / df)`: natural log, no smoothing, no
//! row normalisation. A term present in every document therefore weighs zero.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{concat_citances, window_citances, ArticleRecord, CorpusError};
use crate::lingua::{is_punct_token, pos_tag, tag_histogram, tokenize, LinguaError, PosTag, TagHistogram, TaggerModel};
use crate::sentiment::{compound_of, mean_compound, SentimentLexicon};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("n-gram range {0}..={1} is invalid")]
    InvalidNgramRange(usize, usize),
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("article {pmid} has no {text_source} text")]
    EmptyText { pmid: String, text_source: TextSource },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lingua(#[from] LinguaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Multiset of terms (space-joined lowercase n-grams) with their frequencies.
pub type TermCounts = BTreeMap<String, u32>;

/// Lowercased word tokens with punctuation tokens removed.
pub fn ngram_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_punct_token(&t.surface))
        .map(|t| t.surface.to_lowercase())
        .collect()
}

/// Contiguous lowercased n-grams for every `n` in `n_min..=n_max`.
pub fn extract_ngrams<S: AsRef<str>>(tokens: &[S], n_min: usize, n_max: usize) -> Result<TermCounts, FeatureError> {
    if n_min == 0 || n_min > n_max {
        return Err(FeatureError::InvalidNgramRange(n_min, n_max));
    }
    let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let mut out = TermCounts::new();
    for n in n_min..=n_max {
        for gram in lower.windows(n) {
            *out.entry(gram.join(" ")).or_default() += 1;
        }
    }
    Ok(out)
}

pub fn add_counts(into: &mut TermCounts, other: &TermCounts) {
    for (t, c) in other {
        *into.entry(t.clone()).or_default() += c;
    }
}

/// Fitted term-to-column map with document frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<u32>,
    n_docs: u32,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn df(&self, idx: usize) -> u32 {
        self.df[idx]
    }

    pub fn idf(&self, idx: usize) -> f64 {
        (f64::from(self.n_docs) / f64::from(self.df[idx])).ln()
    }

    fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: u32) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { terms, index, df, n_docs }
    }
}

pub const DEFAULT_MIN_DF: u32 = 2;

/// Terms with document frequency at least `min_df`, in lexicographic column order.
pub fn fit_vocabulary<'a>(docs: impl IntoIterator<Item = &'a TermCounts>, min_df: u32) -> Result<Vocabulary, FeatureError> {
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    let mut n_docs = 0u32;
    for d in docs {
        n_docs += 1;
        for (t, c) in d {
            if *c > 0 {
                *df.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    if n_docs == 0 {
        return Err(FeatureError::EmptyCorpus);
    }
    let (terms, df): (Vec<String>, Vec<u32>) =
        df.into_iter().filter(|(_, n)| *n >= min_df.max(1)).map(|(t, n)| (t.to_string(), n)).unzip();
    Ok(Vocabulary::from_parts(terms, df, n_docs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorizerMode {
    Count,
    Tfidf,
}

impl fmt::Display for VectorizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VectorizerMode::Count => "count",
            VectorizerMode::Tfidf => "tfidf",
        })
    }
}

impl FromStr for VectorizerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "count" => Ok(VectorizerMode::Count),
            "tfidf" => Ok(VectorizerMode::Tfidf),
            _ => Err(format!("unknown vectorizer mode {s:?} (expected count|tfidf)")),
        }
    }
}

/// Sparse vector with strictly increasing indices and non-zero values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(dim: usize) -> Self {
        SparseVector { indices: Vec::new(), values: Vec::new(), dim }
    }

    /// Builds from unordered pairs; zeros are dropped, duplicates rejected.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(u32, f64)>) -> Option<Self> {
        pairs.sort_by_key(|p| p.0);
        pairs.retain(|p| p.1 != 0.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) || pairs.last().is_some_and(|p| p.0 as usize >= dim) {
            return None;
        }
        if pairs.iter().any(|p| !p.1.is_finite()) {
            return None;
        }
        let (indices, values) = pairs.into_iter().unzip();
        Some(SparseVector { indices, values, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.indices.binary_search(&(idx as u32)).map_or(0.0, |i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(i, v)| (*i as usize, *v))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Maps a document's term counts onto the vocabulary; unknown terms are dropped.
pub fn transform(doc: &TermCounts, vocab: &Vocabulary, mode: VectorizerMode) -> SparseVector {
    let mut pairs: Vec<(u32, f64)> = doc
        .iter()
        .filter_map(|(t, c)| {
            let idx = vocab.index_of(t)?;
            let tf = f64::from(*c);
            let v = match mode {
                VectorizerMode::Count => tf,
                VectorizerMode::Tfidf => tf * vocab.idf(idx),
            };
            (v != 0.0).then_some((idx as u32, v))
        })
        .collect();
    pairs.sort_by_key(|p| p.0);
    let (indices, values) = pairs.into_iter().unzip();
    SparseVector { indices, values, dim: vocab.len() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    Citances,
    Abstract,
    Both,
}

impl TextSource {
    pub const ALL: [TextSource; 3] = [TextSource::Citances, TextSource::Abstract, TextSource::Both];
}

impl fmt::Display for TextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextSource::Citances => "citances",
            TextSource::Abstract => "abstract",
            TextSource::Both => "both",
        })
    }
}

impl FromStr for TextSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "citances" => Ok(TextSource::Citances),
            "abstract" => Ok(TextSource::Abstract),
            "both" => Ok(TextSource::Both),
            _ => Err(format!("unknown text source {s:?} (expected citances|abstract|both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentMode {
    /// One score over the whole document text.
    Document,
    /// Mean of per-citance scores (the abstract counts as one unit).
    SentenceMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub window_months: u32,
    pub n_min: usize,
    pub n_max: usize,
    /// Raw tag counts instead of relative frequencies.
    pub pos_raw_counts: bool,
    pub sentiment: SentimentMode,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            window_months: crate::corpus::DEFAULT_WINDOW_MONTHS,
            n_min: 1,
            n_max: 3,
            pos_raw_counts: false,
            sentiment: SentimentMode::Document,
        }
    }
}

/// The text segments a source contributes: windowed citances (as one joined
/// segment) and/or the abstract.
pub fn source_segments(article: &ArticleRecord, source: TextSource, window_months: u32) -> Result<Vec<String>, FeatureError> {
    let mut segments = Vec::new();
    let mut sentences = Vec::new();
    if matches!(source, TextSource::Citances | TextSource::Both) {
        let windowed = window_citances(article, window_months)?;
        sentences.extend(windowed.iter().map(|c| c.text().trim().to_string()));
        let joined = concat_citances(&windowed);
        if !joined.trim().is_empty() {
            segments.push(joined);
        }
    }
    if matches!(source, TextSource::Abstract | TextSource::Both) {
        if let Some(a) = article.abstract_text.as_deref().filter(|a| !a.trim().is_empty()) {
            segments.push(a.trim().to_string());
        }
    }
    if segments.is_empty() {
        return Err(FeatureError::EmptyText { pmid: article.pmid.to_string(), text_source: source });
    }
    Ok(segments)
}

/// The fold-independent part of a document's features: n-gram counts, tag
/// histogram and compound score.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentAnalysis {
    pub terms: TermCounts,
    pub tags: TagHistogram,
    pub compound: f64,
    pub source: TextSource,
}

/// Tokenizes, tags and scores one article's text for `source`.
///
/// With `Both`, n-grams are counted per segment and summed so no n-gram spans
/// the citance/abstract seam; tags and sentiment see the joined text.
pub fn analyze(
    article: &ArticleRecord,
    source: TextSource,
    tagger: &TaggerModel,
    lexicon: &SentimentLexicon,
    opts: &FeatureOptions,
) -> Result<DocumentAnalysis, FeatureError> {
    let segments = source_segments(article, source, opts.window_months)?;
    let mut terms = TermCounts::new();
    for seg in &segments {
        add_counts(&mut terms, &extract_ngrams(&ngram_tokens(seg), opts.n_min, opts.n_max)?);
    }
    let text = segments.join(" ");
    let tagged = pos_tag(&tokenize(&text), tagger)?;
    let compound = match opts.sentiment {
        SentimentMode::Document => compound_of(&text, lexicon),
        SentimentMode::SentenceMean => {
            let mut units: Vec<String> = Vec::new();
            if matches!(source, TextSource::Citances | TextSource::Both) {
                let windowed = window_citances(article, opts.window_months)?;
                units.extend(windowed.iter().map(|c| c.text().to_string()));
            }
            if matches!(source, TextSource::Abstract | TextSource::Both) {
                units.extend(article.abstract_text.clone());
            }
            mean_compound(&units, lexicon)
        }
    };
    Ok(DocumentAnalysis { terms, tags: tag_histogram(&tagged), compound, source })
}

/// Final per-document feature vector: n-gram block, POS block, compound score.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub ngram_block: SparseVector,
    pub pos_block: Vec<f64>,
    pub compound: f64,
    pub provenance: TextSource,
}

impl FeatureVector {
    pub fn from_analysis(doc: &DocumentAnalysis, vocab: &Vocabulary, mode: VectorizerMode, pos_raw_counts: bool) -> Self {
        FeatureVector {
            ngram_block: transform(&doc.terms, vocab, mode),
            pos_block: if pos_raw_counts { doc.tags.raw_counts() } else { doc.tags.frequencies() },
            compound: doc.compound,
            provenance: doc.source,
        }
    }

    pub fn dim(&self) -> usize {
        self.ngram_block.dim() + self.pos_block.len() + 1
    }

    /// Non-zero entries over the concatenated column space.
    pub fn to_sparse_row(&self) -> Vec<(u32, f64)> {
        let base = self.ngram_block.dim();
        let mut row: Vec<(u32, f64)> = self.ngram_block.iter().map(|(i, v)| (i as u32, v)).collect();
        row.extend(self.pos_block.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| ((base + i) as u32, *v)));
        if self.compound != 0.0 {
            row.push(((base + self.pos_block.len()) as u32, self.compound));
        }
        row
    }
}

pub fn assemble(
    article: &ArticleRecord,
    source: TextSource,
    vocab: &Vocabulary,
    tagger: &TaggerModel,
    lexicon: &SentimentLexicon,
    mode: VectorizerMode,
    opts: &FeatureOptions,
) -> Result<FeatureVector, FeatureError> {
    let doc = analyze(article, source, tagger, lexicon, opts)?;
    Ok(FeatureVector::from_analysis(&doc, vocab, mode, opts.pos_raw_counts))
}

pub const POS_PREFIX: &str = "__POS_";
pub const COMPOUND_NAME: &str = "__COMPOUND";

/// Column names: vocabulary terms, then `__POS_<TAG>` in tagset order, then `__COMPOUND`.
pub fn feature_names(vocab: &Vocabulary) -> Vec<String> {
    let mut names = vocab.terms.clone();
    names.extend(PosTag::ALL.iter().map(|t| format!("{POS_PREFIX}{t}")));
    names.push(COMPOUND_NAME.to_string());
    names
}

/// Writes `index\tterm\tdf` lines; the appended POS and compound columns carry `-` as df.
pub fn write_vocabulary<W: Write>(vocab: &Vocabulary, mut out: W) -> std::io::Result<()> {
    for (i, t) in vocab.terms.iter().enumerate() {
        writeln!(out, "{i}\t{t}\t{}", vocab.df[i])?;
    }
    for (j, name) in feature_names(vocab).iter().enumerate().skip(vocab.len()) {
        writeln!(out, "{j}\t{name}\t-")?;
    }
    writeln!(out, "#n_docs\t{}", vocab.n_docs)
}

/// Reads a vocabulary sidecar written by [`write_vocabulary`].
pub fn read_vocabulary<R: BufRead>(input: R) -> Result<Vocabulary, FeatureError> {
    let mut terms = Vec::new();
    let mut df = Vec::new();
    let mut n_docs = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        let bad = |m: &str| FeatureError::Malformed { line: line_no, message: m.to_string() };
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#n_docs\t") {
            n_docs = Some(rest.trim().parse::<u32>().map_err(|_| bad("bad document count"))?);
            continue;
        }
        let mut f = line.splitn(3, '\t');
        let (Some(idx), Some(term), Some(d)) = (f.next(), f.next(), f.next()) else {
            return Err(bad("expected index\\tterm\\tdf"));
        };
        let idx: usize = idx.parse().map_err(|_| bad("bad index"))?;
        if term.starts_with(POS_PREFIX) || term == COMPOUND_NAME {
            if d != "-" {
                return Err(bad("reserved column must have '-' as df"));
            }
            continue;
        }
        if idx != terms.len() {
            return Err(bad("indices must be contiguous from 0"));
        }
        if terms.last().is_some_and(|last: &String| last.as_str() >= term) {
            return Err(bad("terms must be in strictly increasing order"));
        }
        let d: u32 = d.parse().map_err(|_| bad("bad df"))?;
        if d == 0 {
            return Err(bad("df must be at least 1"));
        }
        terms.push(term.to_string());
        df.push(d);
    }
    let n_docs = n_docs.ok_or(FeatureError::Malformed { line: 0, message: "missing #n_docs trailer".into() })?;
    if df.iter().any(|d| *d > n_docs) {
        return Err(FeatureError::Malformed { line: 0, message: "df exceeds document count".into() });
    }
    Ok(Vocabulary::from_parts(terms, df, n_docs))
}

/// Sparse triplet export: one `row col value` line per non-zero entry.
pub fn write_triplets<W: Write>(rows: &[Vec<(u32, f64)>], mut out: W) -> std::io::Result<()> {
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row {
            writeln!(out, "{r} {c} {v}")?;
        }
    }
    Ok(())
}

/// Parses triplet text into `(row, col, value)` entries.
pub fn read_triplets<R: BufRead>(input: R) -> Result<Vec<(usize, usize, f64)>, FeatureError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| FeatureError::Malformed { line: n + 1, message: m.to_string() };
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [r, c, v] = parts.as_slice() else {
            return Err(bad("expected `row col value`"));
        };
        let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
        if !v.is_finite() {
            return Err(bad("non-finite value"));
        }
        out.push((r.parse().map_err(|_| bad("bad row"))?, c.parse().map_err(|_| bad("bad column"))?, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CitingSentence, PartialDate, Pmid};

    fn counts(items: &[(&str, u32)]) -> TermCounts {
        items.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn ngram_examples() {
        let g = extract_ngrams(&["This", "is", "supported"], 1, 3).unwrap();
        let expect = counts(&[
            ("this", 1),
            ("is", 1),
            ("supported", 1),
            ("this is", 1),
            ("is supported", 1),
            ("this is supported", 1),
        ]);
        assert_eq!(g, expect);
        let two = extract_ngrams(&["a", "b"], 1, 3).unwrap();
        assert!(two.keys().all(|k| k.split(' ').count() <= 2));
        assert!(extract_ngrams::<&str>(&[], 1, 3).unwrap().is_empty());
        assert!(extract_ngrams(&["a"], 0, 2).is_err());
        assert!(extract_ngrams(&["a"], 3, 2).is_err());
    }

    #[test]
    fn punctuation_excluded_from_ngrams() {
        let toks = ngram_tokens("However, despite these data.");
        assert_eq!(toks, ["however", "despite", "these", "data"]);
    }

    #[test]
    fn vocabulary_fit() {
        let docs = vec![counts(&[("a", 1), ("b", 2)]), counts(&[("b", 1), ("c", 1)])];
        let v = fit_vocabulary(&docs, 1).unwrap();
        assert_eq!(v.terms(), ["a", "b", "c"]);
        assert_eq!(v.df(v.index_of("b").unwrap()), 2);
        assert_eq!(v.n_docs(), 2);
        let v2 = fit_vocabulary(&docs, 2).unwrap();
        assert_eq!(v2.terms(), ["b"]);
        assert_eq!(fit_vocabulary(&docs, 1).unwrap(), v);
        assert!(matches!(fit_vocabulary(&Vec::<TermCounts>::new(), 1), Err(FeatureError::EmptyCorpus)));
    }

    #[test]
    fn transform_modes() {
        let docs = vec![counts(&[("x", 3), ("all", 1)]), counts(&[("all", 2)])];
        let v = fit_vocabulary(&docs, 1).unwrap();
        let x = v.index_of("x").unwrap();
        let all = v.index_of("all").unwrap();
        let tf = transform(&docs[0], &v, VectorizerMode::Tfidf);
        assert!((tf.get(x) - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((tf.get(x) - 2.0794415416798357).abs() < 1e-12);
        assert_eq!(tf.get(all), 0.0);
        let c = transform(&docs[0], &v, VectorizerMode::Count);
        assert_eq!(c.get(x), 3.0);
        assert_eq!(c.sum(), 4.0);
        let oov = transform(&counts(&[("zzz", 5)]), &v, VectorizerMode::Count);
        assert_eq!(oov.nnz(), 0);
    }

    #[test]
    fn sparse_vector_invariants() {
        assert!(SparseVector::from_pairs(3, vec![(2, 1.0), (0, 0.0), (1, 2.0)]).is_some());
        assert!(SparseVector::from_pairs(3, vec![(1, 1.0), (1, 2.0)]).is_none());
        assert!(SparseVector::from_pairs(3, vec![(3, 1.0)]).is_none());
        assert!(SparseVector::from_pairs(3, vec![(0, f64::NAN)]).is_none());
    }

    fn article() -> ArticleRecord {
        let mut a = ArticleRecord::new(Pmid::new(42));
        a.pub_date = Some(PartialDate::year(2010));
        a.citances = vec![
            CitingSentence::new("However this was questioned.", Pmid::new(1), PartialDate::year(2011)).unwrap(),
            CitingSentence::new("Later work agreed.", Pmid::new(2), PartialDate::year(2019)).unwrap(),
        ];
        a
    }

    #[test]
    fn empty_source_text() {
        let a = article();
        let err = analyze(&a, TextSource::Abstract, TaggerModel::bundled(), SentimentLexicon::bundled(), &FeatureOptions::default());
        assert!(matches!(err, Err(FeatureError::EmptyText { .. })));
    }

    #[test]
    fn both_source_counts_are_additive() {
        let mut a = article();
        a.abstract_text = Some("This trial was questioned by many.".into());
        let opts = FeatureOptions::default();
        let (tagger, lex) = (TaggerModel::bundled(), SentimentLexicon::bundled());
        let c = analyze(&a, TextSource::Citances, tagger, lex, &opts).unwrap();
        let ab = analyze(&a, TextSource::Abstract, tagger, lex, &opts).unwrap();
        let both = analyze(&a, TextSource::Both, tagger, lex, &opts).unwrap();
        // brute-force recount of each segment
        let mut expect = TermCounts::new();
        for text in ["However this was questioned.", "This trial was questioned by many."] {
            let toks = ngram_tokens(text);
            for n in 1..=3 {
                for w in toks.windows(n) {
                    *expect.entry(w.join(" ")).or_default() += 1;
                }
            }
        }
        assert_eq!(both.terms, expect);
        let mut sum = c.terms.clone();
        add_counts(&mut sum, &ab.terms);
        assert_eq!(both.terms, sum);
        // windowed out citance contributes nothing
        assert!(!c.terms.contains_key("later"));
    }

    #[test]
    fn assemble_is_deterministic_and_sized() {
        let a = article();
        let opts = FeatureOptions::default();
        let doc = analyze(&a, TextSource::Citances, TaggerModel::bundled(), SentimentLexicon::bundled(), &opts).unwrap();
        let vocab = fit_vocabulary(&[doc.terms.clone()], 1).unwrap();
        let f1 = assemble(&a, TextSource::Citances, &vocab, TaggerModel::bundled(), SentimentLexicon::bundled(), VectorizerMode::Count, &opts).unwrap();
        let f2 = assemble(&a, TextSource::Citances, &vocab, TaggerModel::bundled(), SentimentLexicon::bundled(), VectorizerMode::Count, &opts).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.pos_block.len(), PosTag::COUNT);
        assert_eq!(f1.dim(), feature_names(&vocab).len());
        assert!((f1.pos_block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(f1.to_sparse_row().windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn vocabulary_sidecar_round_trip() {
        let docs = vec![counts(&[("a b", 1), ("c", 2)]), counts(&[("c", 1)])];
        let v = fit_vocabulary(&docs, 1).unwrap();
        let mut buf = Vec::new();
        write_vocabulary(&v, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("0\ta b\t1\n1\tc\t2\n2\t__POS_CC\t-\n"));
        assert!(text.contains("\t__COMPOUND\t-\n"));
        assert_eq!(read_vocabulary(&buf[..]).unwrap(), v);
        assert!(read_vocabulary(&b"0\tb\t1\n1\ta\t1\n#n_docs\t2\n"[..]).is_err());
        assert!(read_vocabulary(&b"0\ta\t3\n#n_docs\t2\n"[..]).is_err());
    }

    #[test]
    fn triplets_round_trip() {
        let rows = vec![vec![(0, 1.0), (3, 0.5)], vec![], vec![(2, -0.25)]];
        let mut buf = Vec::new();
        write_triplets(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0 0 1\n0 3 0.5\n2 2 -0.25\n");
        assert_eq!(read_triplets(&buf[..]).unwrap(), vec![(0, 0, 1.0), (0, 3, 0.5), (2, 2, -0.25)]);
        assert!(read_triplets(&b"1 2\n"[..]).is_err());
    }
}

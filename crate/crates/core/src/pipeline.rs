//! Stratified cross-validation, ROC/AUC, the experiment grid, error analysis
//! and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{window_citances, ArticleRecord, CorpusError, Label, Pmid};
use crate::features::{
    analyze, feature_names, fit_vocabulary, DocumentAnalysis, FeatureError, FeatureOptions, FeatureVector, TextSource,
    VectorizerMode, Vocabulary, DEFAULT_MIN_DF,
};
use crate::lingua::TaggerModel;
use crate::models::{
    balanced_weights, fit_ensemble, tree_seed, EnsembleKind, EnsembleParams, FeatureImportance, FeatureMatrix,
    ModelError,
};
use crate::sentiment::SentimentLexicon;

pub const DEFAULT_FOLDS: usize = 10;
pub const MISCLASSIFIED_THRESHOLD: f64 = 0.5;
pub const DEFAULT_TOP_FEATURES: usize = 20;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("too few samples: a class has {smallest} members but {k} folds were requested")]
    TooFewSamples { smallest: usize, k: usize },
    #[error("only one class present")]
    SingleClass,
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("score {0} is not finite")]
    InvalidScore(f64),
    #[error("corpus has no labeled studies")]
    NoLabeled,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fold index per item, in input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }
}

/// Shuffles each class with the seed, then deals items to folds round-robin,
/// continuing the deal position from one class to the next.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<FoldAssignment, PipelineError> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[usize::from(y)].push(i);
    }
    let smallest = by_class[0].len().min(by_class[1].len());
    if k < 2 || smallest < k {
        return Err(PipelineError::TooFewSamples { smallest, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut deal = 0usize;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = deal % k;
            deal += 1;
        }
    }
    Ok(FoldAssignment { folds, k, seed })
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), PipelineError> {
    if scores.len() != labels.len() {
        return Err(PipelineError::ShapeMismatch { what: "scores", expected: labels.len(), found: scores.len() });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(PipelineError::InvalidScore(*s));
    }
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(PipelineError::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC with midranks for tied scores.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, PipelineError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// ROC polyline from (0,0) to (1,1) with one point per item; tied scores
/// move along the diagonal of their block, so the area equals [`roc_auc`].
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, PipelineError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let block = &order[i..=j];
        let bp = block.iter().filter(|&&o| labels[o]).count();
        let bn = block.len() - bp;
        for step in 1..=block.len() {
            let frac = step as f64 / block.len() as f64;
            let t = (tp as f64 + frac * bp as f64) / pos as f64;
            let f = (fp as f64 + frac * bn as f64) / neg as f64;
            points.push((f, t));
        }
        tp += bp;
        fp += bn;
        i = j + 1;
    }
    Ok(points)
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub source: TextSource,
    pub mode: VectorizerMode,
    pub classifier: EnsembleKind,
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.source, self.mode, self.classifier)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub sources: Vec<TextSource>,
    pub modes: Vec<VectorizerMode>,
    pub classifiers: Vec<EnsembleKind>,
}

impl ExperimentGrid {
    pub fn full() -> Self {
        ExperimentGrid {
            sources: vec![TextSource::Citances, TextSource::Abstract, TextSource::Both],
            modes: vec![VectorizerMode::Count, VectorizerMode::Tfidf],
            classifiers: EnsembleKind::ALL.to_vec(),
        }
    }

    pub fn single(cell: GridCell) -> Self {
        ExperimentGrid { sources: vec![cell.source], modes: vec![cell.mode], classifiers: vec![cell.classifier] }
    }

    /// Cells in source, mode, classifier order; `None` if any axis is empty.
    pub fn cells(&self) -> Option<Vec<GridCell>> {
        if self.sources.is_empty() || self.modes.is_empty() || self.classifiers.is_empty() {
            return None;
        }
        let mut out = Vec::new();
        for &source in &self.sources {
            for &mode in &self.modes {
                for &classifier in &self.classifiers {
                    out.push(GridCell { source, mode, classifier });
                }
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub merge_auc: bool,
    /// Fit one more model on all studies and keep this many top features.
    pub top_features: Option<usize>,
    /// Overrides the classifier's default tree count.
    pub n_trees: Option<usize>,
    pub min_df: u32,
    pub features: FeatureOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: DEFAULT_FOLDS,
            seed: 0,
            merge_auc: false,
            top_features: None,
            n_trees: None,
            min_df: DEFAULT_MIN_DF,
            features: FeatureOptions::default(),
        }
    }
}

impl CvOptions {
    fn ensemble_params(&self, kind: EnsembleKind, seed: u64) -> EnsembleParams {
        let base = EnsembleParams::defaults(kind);
        EnsembleParams { n_trees: self.n_trees.unwrap_or(base.n_trees), seed, ..base }
    }
}

/// Labeled studies with their fold-independent text analyses for one source.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub source: TextSource,
    pub pmids: Vec<Pmid>,
    pub labels: Vec<bool>,
    pub analyses: Vec<DocumentAnalysis>,
}

/// Keeps studies labeled transformative or incremental and analyses their text.
pub fn prepare(
    corpus: &[ArticleRecord],
    source: TextSource,
    tagger: &TaggerModel,
    lexicon: &SentimentLexicon,
    opts: &FeatureOptions,
) -> Result<PreparedCorpus, PipelineError> {
    let labeled: Vec<(&ArticleRecord, bool)> =
        corpus.iter().filter_map(|a| a.label.and_then(Label::as_class).map(|y| (a, y))).collect();
    if labeled.is_empty() {
        return Err(PipelineError::NoLabeled);
    }
    let analyses = labeled
        .par_iter()
        .map(|(a, _)| analyze(a, source, tagger, lexicon, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreparedCorpus {
        source,
        pmids: labeled.iter().map(|(a, _)| a.pmid).collect(),
        labels: labeled.iter().map(|(_, y)| *y).collect(),
        analyses,
    })
}

/// Vocabulary fitted on the training part of `fold` only.
pub fn fold_vocabulary(
    prepared: &PreparedCorpus,
    folds: &FoldAssignment,
    fold: usize,
    min_df: u32,
) -> Result<Vocabulary, PipelineError> {
    let train = folds.complement(fold);
    Ok(fit_vocabulary(train.iter().map(|&i| &prepared.analyses[i].terms), min_df)?)
}

fn design_matrix(
    prepared: &PreparedCorpus,
    rows: &[usize],
    vocab: &Vocabulary,
    mode: VectorizerMode,
    pos_raw_counts: bool,
) -> Result<FeatureMatrix, PipelineError> {
    let n_cols = feature_names(vocab).len();
    let sparse: Vec<Vec<(u32, f64)>> = rows
        .iter()
        .map(|&i| FeatureVector::from_analysis(&prepared.analyses[i], vocab, mode, pos_raw_counts).to_sparse_row())
        .collect();
    Ok(FeatureMatrix::from_rows(n_cols, &sparse)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pmid: Pmid,
    pub truth: Label,
    pub score: f64,
    pub fold: usize,
}

impl Prediction {
    pub fn is_correct(&self) -> bool {
        (self.score > MISCLASSIFIED_THRESHOLD) == (self.truth == Label::Transformative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub mean: f64,
    pub std: f64,
}

impl From<FeatureImportance> for ImportanceRow {
    fn from(f: FeatureImportance) -> Self {
        ImportanceRow { feature: f.feature, mean: f.mean, std: f.std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub cell: GridCell,
    pub k: usize,
    pub seed: u64,
    pub fold_aucs: Vec<f64>,
    pub auc_avg: f64,
    pub auc_min: f64,
    pub auc_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_merge: Option<f64>,
    /// Held-out predictions in fold order, then input order.
    pub predictions: Vec<Prediction>,
    pub misclassified: Vec<Prediction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_features: Vec<ImportanceRow>,
    pub fingerprint: String,
    /// Wall-clock time; not part of the fingerprint.
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl CvReport {
    /// SHA-256 over everything except the fingerprint itself and timing.
    pub fn compute_fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.fingerprint = String::new();
        canonical.elapsed = Duration::ZERO;
        let bytes = serde_json::to_vec(&canonical).expect("report serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn fold_predictions(&self, fold: usize) -> impl Iterator<Item = &Prediction> {
        self.predictions.iter().filter(move |p| p.fold == fold)
    }

    /// `0.755 (0.705-0.875)`
    pub fn summary(&self) -> String {
        format!("{:.3} ({:.3}-{:.3})", self.auc_avg, self.auc_min, self.auc_max)
    }
}

fn truth_label(y: bool) -> Label {
    if y {
        Label::Transformative
    } else {
        Label::Incremental
    }
}

/// k-fold cross-validation of one grid cell on analysed studies. Each fold
/// fits its own vocabulary and class weights on the training part only.
pub fn cross_validate_prepared(
    prepared: &PreparedCorpus,
    mode: VectorizerMode,
    classifier: EnsembleKind,
    opts: &CvOptions,
) -> Result<CvReport, PipelineError> {
    let started = Instant::now();
    let folds = stratified_folds(&prepared.labels, opts.k, opts.seed)?;
    let per_fold = (0..opts.k)
        .into_par_iter()
        .map(|fold| -> Result<(Vec<usize>, Vec<f64>), PipelineError> {
            let train = folds.complement(fold);
            let test = folds.members(fold);
            let vocab = fold_vocabulary(prepared, &folds, fold, opts.min_df)?;
            let names = feature_names(&vocab);
            let x_train = design_matrix(prepared, &train, &vocab, mode, opts.features.pos_raw_counts)?;
            let x_test = design_matrix(prepared, &test, &vocab, mode, opts.features.pos_raw_counts)?;
            let y_train: Vec<bool> = train.iter().map(|&i| prepared.labels[i]).collect();
            let params = EnsembleParams {
                class_weights: Some(balanced_weights(&y_train)?),
                ..opts.ensemble_params(classifier, tree_seed(opts.seed, fold))
            };
            let model = fit_ensemble(classifier, &x_train, &y_train, &names, &params)?;
            Ok((test, model.predict_proba(&x_test)?))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut fold_aucs = Vec::with_capacity(opts.k);
    let mut predictions = Vec::with_capacity(prepared.labels.len());
    for (fold, (test, scores)) in per_fold.iter().enumerate() {
        let y: Vec<bool> = test.iter().map(|&i| prepared.labels[i]).collect();
        fold_aucs.push(roc_auc(scores, &y)?);
        for (&i, &score) in test.iter().zip(scores) {
            predictions.push(Prediction { pmid: prepared.pmids[i], truth: truth_label(prepared.labels[i]), score, fold });
        }
    }
    let auc_merge = if opts.merge_auc {
        let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
        let y: Vec<bool> = predictions.iter().map(|p| p.truth == Label::Transformative).collect();
        Some(roc_auc(&scores, &y)?)
    } else {
        None
    };
    let top_features = match opts.top_features {
        Some(n) => {
            let all: Vec<usize> = (0..prepared.labels.len()).collect();
            let vocab = fit_vocabulary(prepared.analyses.iter().map(|a| &a.terms), opts.min_df)?;
            let x = design_matrix(prepared, &all, &vocab, mode, opts.features.pos_raw_counts)?;
            let params = EnsembleParams {
                class_weights: Some(balanced_weights(&prepared.labels)?),
                ..opts.ensemble_params(classifier, opts.seed)
            };
            let model = fit_ensemble(classifier, &x, &prepared.labels, &feature_names(&vocab), &params)?;
            model.feature_importances().into_iter().take(n).map(ImportanceRow::from).collect()
        }
        None => Vec::new(),
    };
    let auc_avg = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
    let auc_min = fold_aucs.iter().copied().fold(f64::INFINITY, f64::min);
    let auc_max = fold_aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let misclassified = predictions.iter().filter(|p| !p.is_correct()).cloned().collect();
    let mut report = CvReport {
        cell: GridCell { source: prepared.source, mode, classifier },
        k: opts.k,
        seed: opts.seed,
        fold_aucs,
        auc_avg,
        auc_min,
        auc_max,
        auc_merge,
        predictions,
        misclassified,
        top_features,
        fingerprint: String::new(),
        elapsed: Duration::ZERO,
    };
    report.fingerprint = report.compute_fingerprint();
    report.elapsed = started.elapsed();
    Ok(report)
}

pub fn cross_validate(
    corpus: &[ArticleRecord],
    cell: GridCell,
    tagger: &TaggerModel,
    lexicon: &SentimentLexicon,
    opts: &CvOptions,
) -> Result<CvReport, PipelineError> {
    let prepared = prepare(corpus, cell.source, tagger, lexicon, &opts.features)?;
    cross_validate_prepared(&prepared, cell.mode, cell.classifier, opts)
}

/// Runs every cell; text analyses are shared between cells with the same source.
pub fn run_grid(
    corpus: &[ArticleRecord],
    grid: &ExperimentGrid,
    tagger: &TaggerModel,
    lexicon: &SentimentLexicon,
    opts: &CvOptions,
) -> Result<Vec<CvReport>, PipelineError> {
    let cells = grid.cells().ok_or(PipelineError::ShapeMismatch { what: "grid axes", expected: 1, found: 0 })?;
    let mut reports = Vec::with_capacity(cells.len());
    for &source in &grid.sources {
        let prepared = prepare(corpus, source, tagger, lexicon, &opts.features)?;
        for cell in cells.iter().filter(|c| c.source == source) {
            log::info!("evaluating {cell}");
            reports.push(cross_validate_prepared(&prepared, cell.mode, cell.classifier, opts)?);
        }
    }
    Ok(reports)
}

/// AUC table with one row per source and classifier and one column per mode.
pub fn grid_table(reports: &[CvReport]) -> String {
    let modes: BTreeSet<VectorizerMode> = reports.iter().map(|r| r.cell.mode).collect();
    let mut rows: BTreeMap<(TextSource, EnsembleKind), BTreeMap<VectorizerMode, String>> = BTreeMap::new();
    for r in reports {
        rows.entry((r.cell.source, r.cell.classifier)).or_default().insert(r.cell.mode, r.summary());
    }
    let mut out = String::from("source\tclassifier");
    for m in &modes {
        write!(out, "\t{m}").expect("write to string");
    }
    out.push('\n');
    for ((source, classifier), cols) in rows {
        write!(out, "{source}\t{classifier}").expect("write to string");
        for m in &modes {
            write!(out, "\t{}", cols.get(m).map_or("-", String::as_str)).expect("write to string");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassifiedExample {
    pub pmid: Pmid,
    pub truth: Label,
    pub score: f64,
    pub fold: usize,
    pub citances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    /// Major MeSH terms of correctly classified studies, by descending count.
    pub correct: Vec<(String, usize)>,
    pub misclassified: Vec<(String, usize)>,
    pub examples: Vec<MisclassifiedExample>,
}

fn ranked(counts: BTreeMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Major MeSH frequencies of correctly and falsely classified studies (each
/// term counted once per study) and up to `max_examples` windowed citances
/// per misclassified study.
pub fn error_analysis(report: &CvReport, corpus: &[ArticleRecord], window_months: u32, max_examples: usize) -> ErrorAnalysis {
    let by_pmid: BTreeMap<Pmid, &ArticleRecord> = corpus.iter().map(|a| (a.pmid, a)).collect();
    let mut correct = BTreeMap::new();
    let mut wrong = BTreeMap::new();
    let mut examples = Vec::new();
    for p in &report.predictions {
        let Some(article) = by_pmid.get(&p.pmid) else { continue };
        let terms: BTreeSet<&str> = article.major_mesh_terms().collect();
        let table = if p.is_correct() { &mut correct } else { &mut wrong };
        for t in terms {
            *table.entry(t.to_string()).or_insert(0usize) += 1;
        }
        if !p.is_correct() {
            let citances = window_citances(article, window_months)
                .map(|cs| cs.iter().take(max_examples).map(|c| c.text().to_string()).collect())
                .unwrap_or_default();
            examples.push(MisclassifiedExample { pmid: p.pmid, truth: p.truth, score: p.score, fold: p.fold, citances });
        }
    }
    ErrorAnalysis { correct: ranked(correct), misclassified: ranked(wrong), examples }
}

impl ErrorAnalysis {
    pub fn to_tsv(&self, top: usize) -> String {
        let mut out = String::from("rank\tcorrect_term\tcorrect_count\tfalse_term\tfalse_count\n");
        let n = self.correct.len().max(self.misclassified.len()).min(top);
        for i in 0..n {
            let c = self.correct.get(i).map_or((String::new(), String::new()), |(t, n)| (t.clone(), n.to_string()));
            let f = self.misclassified.get(i).map_or((String::new(), String::new()), |(t, n)| (t.clone(), n.to_string()));
            writeln!(out, "{}\t{}\t{}\t{}\t{}", i + 1, c.0, c.1, f.0, f.1).expect("write to string");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub n: usize,
    /// Four-year publication buckets such as `2001-2004`.
    pub year_buckets: Vec<(String, usize)>,
    pub journals: Vec<(String, usize)>,
    pub mean_recommendations: f64,
    pub median_recommendations: f64,
    pub mean_citances: f64,
    pub median_citances: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub incremental: ClassStats,
    pub transformative: ClassStats,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn year_bucket(year: i32) -> String {
    let start = 2001 + (year - 2001).div_euclid(4) * 4;
    format!("{}-{}", start, start + 3)
}

fn class_stats(articles: &[&ArticleRecord], window_months: u32) -> Result<ClassStats, PipelineError> {
    let mut years: BTreeMap<String, usize> = BTreeMap::new();
    let mut journals: BTreeMap<String, usize> = BTreeMap::new();
    let mut recs = Vec::new();
    let mut cits = Vec::new();
    for a in articles {
        if let Some(d) = a.pub_date {
            *years.entry(year_bucket(d.get_year())).or_default() += 1;
        }
        *journals.entry(a.journal.clone().unwrap_or_else(|| "(unknown)".into())).or_default() += 1;
        recs.push(a.recommendations.len() as f64);
        cits.push(window_citances(a, window_months)?.len() as f64);
    }
    let n = articles.len();
    Ok(ClassStats {
        n,
        year_buckets: years.into_iter().collect(),
        journals: ranked(journals),
        mean_recommendations: recs.iter().sum::<f64>() / n as f64,
        median_recommendations: median(&mut recs),
        mean_citances: cits.iter().sum::<f64>() / n as f64,
        median_citances: median(&mut cits),
    })
}

/// Per-class publication years, journals and recommendation / windowed citance counts.
pub fn descriptive_stats(corpus: &[ArticleRecord], window_months: u32) -> Result<DescriptiveStats, PipelineError> {
    let of = |class: Label| corpus.iter().filter(|a| a.label == Some(class)).collect::<Vec<_>>();
    let (t, i) = (of(Label::Transformative), of(Label::Incremental));
    if t.is_empty() || i.is_empty() {
        return Err(PipelineError::SingleClass);
    }
    Ok(DescriptiveStats { incremental: class_stats(&i, window_months)?, transformative: class_stats(&t, window_months)? })
}

impl DescriptiveStats {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("measure\tincremental\ttransformative\n");
        let (i, t) = (&self.incremental, &self.transformative);
        let mut line = |name: &str, a: String, b: String| writeln!(out, "{name}\t{a}\t{b}").expect("write to string");
        line("studies", i.n.to_string(), t.n.to_string());
        let buckets: BTreeSet<&String> = i.year_buckets.iter().chain(&t.year_buckets).map(|(b, _)| b).collect();
        let count = |v: &[(String, usize)], k: &str| v.iter().find(|(b, _)| b == k).map_or(0, |(_, n)| *n);
        for b in buckets {
            line(&format!("published {b}"), count(&i.year_buckets, b).to_string(), count(&t.year_buckets, b).to_string());
        }
        let journals: BTreeSet<&String> = i.journals.iter().chain(&t.journals).map(|(j, _)| j).collect();
        for j in journals {
            line(&format!("journal {j}"), count(&i.journals, j).to_string(), count(&t.journals, j).to_string());
        }
        line("mean recommendations", format!("{:.2}", i.mean_recommendations), format!("{:.2}", t.mean_recommendations));
        line("median recommendations", format!("{:.1}", i.median_recommendations), format!("{:.1}", t.median_recommendations));
        line("mean citances", format!("{:.2}", i.mean_citances), format!("{:.2}", t.mean_citances));
        line("median citances", format!("{:.1}", i.median_citances), format!("{:.1}", t.median_citances));
        out
    }
}

/// Per-fold ROC points as CSV: `fold,index,fpr,tpr`, fold-size + 1 rows per fold.
pub fn roc_csv(report: &CvReport) -> Result<String, PipelineError> {
    let mut out = String::from("fold,index,fpr,tpr\n");
    for fold in 0..report.k {
        let (scores, labels) = fold_scores(report, fold);
        for (i, (f, t)) in roc_points(&scores, &labels)?.into_iter().enumerate() {
            writeln!(out, "{fold},{i},{f},{t}").expect("write to string");
        }
    }
    Ok(out)
}

fn fold_scores(report: &CvReport, fold: usize) -> (Vec<f64>, Vec<bool>) {
    report.fold_predictions(fold).map(|p| (p.score, p.truth == Label::Transformative)).unzip()
}

const PALETTE: &[&str] = &["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// Static SVG with one ROC polyline per fold over the chance diagonal.
pub fn roc_svg(report: &CvReport) -> Result<String, PipelineError> {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let px = |f: f64| PAD + f * SIZE;
    let py = |t: f64| PAD + (1.0 - t) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#)
        .expect("write to string");
    writeln!(svg, r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#).expect("write to string");
    writeln!(
        svg,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999999" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    )
    .expect("write to string");
    for fold in 0..report.k {
        let (scores, labels) = fold_scores(report, fold);
        let points: Vec<String> =
            roc_points(&scores, &labels)?.iter().map(|(f, t)| format!("{:.2},{:.2}", px(*f), py(*t))).collect();
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            PALETTE[fold % PALETTE.len()],
            points.join(" ")
        )
        .expect("write to string");
    }
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">False positive rate</text>"#, PAD + SIZE / 2.0, total - 15.0)
        .expect("write to string");
    writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 15 {})">True positive rate</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0
    )
    .expect("write to string");
    writeln!(svg, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{} AUC {}</text>"#, PAD + SIZE / 2.0, report.cell, report.summary())
        .expect("write to string");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn emit_roc(report: &CvReport, dir: &Path, stem: &str) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), roc_csv(report)?)?;
    std::fs::write(dir.join(format!("{stem}.svg")), roc_svg(report)?)?;
    Ok(())
}

/// Writes the report JSON, misclassified studies and top features for one cell.
pub fn write_report(report: &CvReport, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    let stem = report.cell.to_string();
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(report).map_err(std::io::Error::other)?)?;
    let mut mis = String::from("pmid\ttruth\tscore\tfold\n");
    for p in &report.misclassified {
        writeln!(mis, "{}\t{}\t{}\t{}", p.pmid, p.truth, p.score, p.fold).expect("write to string");
    }
    std::fs::write(dir.join(format!("{stem}.misclassified.tsv")), mis)?;
    if !report.top_features.is_empty() {
        let mut imp = String::from("rank\tfeature\tmean\tstd\n");
        for (i, f) in report.top_features.iter().enumerate() {
            writeln!(imp, "{}\t{}\t{}\t{}", i + 1, f.feature, f.mean, f.std).expect("write to string");
        }
        std::fs::write(dir.join(format!("{stem}.importances.tsv")), imp)?;
    }
    emit_roc(report, dir, &format!("{stem}.roc"))
}

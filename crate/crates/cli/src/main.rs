//! `evidencer` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation error (bad flags,
//! config or input data), 3 transport error while fetching.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use evidencer::acquire::{self, AcquireError, FetchConfig, FixtureTransport, HttpClient, SystemClock};
use evidencer::corpus::{self, CorpusError};
use evidencer::features::{self, FeatureError, FeatureOptions, FeatureVector, TextSource, VectorizerMode};
use evidencer::lingua::{LinguaError, TaggerModel};
use evidencer::models::EnsembleKind;
use evidencer::pipeline::{self, CvOptions, CvReport, ExperimentGrid, GridCell, PipelineError};
use evidencer::sentiment::{self, SentimentError, SentimentLexicon};
use evidencer::synthetic::{self, SyntheticConfig};

use config::Config;

#[derive(Debug)]
enum Failure {
    Io(String),
    Validation(String),
    Transport(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Transport(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Validation(m) | Failure::Transport(m) => m,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<AcquireError> for Failure {
    fn from(e: AcquireError) -> Self {
        match e {
            e if e.is_transport() => Failure::Transport(e.to_string()),
            AcquireError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Io(e) | FeatureError::Lingua(LinguaError::Io(e)) => Failure::Io(e.to_string()),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io(e) => Failure::Io(e.to_string()),
            PipelineError::Feature(e) => e.into(),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<LinguaError> for Failure {
    fn from(e: LinguaError) -> Self {
        match e {
            LinguaError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<SentimentError> for Failure {
    fn from(e: SentimentError) -> Self {
        match e {
            SentimentError::Io(e) => Failure::Io(e.to_string()),
            e => Failure::Validation(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "evidencer", version, about = "Classify clinical studies as transformative or incremental")]
struct Cli {
    /// TOML file whose keys mirror the long flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fetch metadata, abstracts and citing sentences for a list of PMIDs.
    Ingest(IngestArgs),
    /// Label studies from their expert recommendations.
    Annotate(AnnotateArgs),
    /// Write the feature matrix of the modeling corpus.
    Featurize(FeaturizeArgs),
    /// Cross-validate one grid cell or the full grid.
    Evaluate(EvaluateArgs),
    /// MeSH error tables, descriptive statistics and ROC plots.
    Report(ReportArgs),
    /// Write a seeded synthetic labeled corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// One PMID per line.
    #[arg(long)]
    pmids: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Serve responses from {pmid}.xml / {pmid}.srj files instead of the network.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Corpus whose recommendations and labels are copied onto fetched studies.
    #[arg(long)]
    merge: Option<PathBuf>,
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
    /// Request timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    eutils_url: Option<String>,
    #[arg(long)]
    colil_url: Option<String>,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop studies that fail the clinical filter before labeling.
    #[arg(long)]
    clinical_only: bool,
}

#[derive(Args, Debug, Default)]
struct TextArgs {
    #[arg(long)]
    window_months: Option<u32>,
    #[arg(long)]
    min_df: Option<u32>,
    /// Tagger model file (default: bundled model).
    #[arg(long)]
    tagger: Option<PathBuf>,
    /// Valence lexicon file (default: bundled lexicon).
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FeaturizeArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// citances | abstract | both
    #[arg(long)]
    source: Option<String>,
    /// count | tfidf
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    text: TextArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// full | cell
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// rf | ada | gbt
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    top_features: Option<usize>,
    /// Also report the AUC of the pooled fold predictions.
    #[arg(long)]
    merge_auc: bool,
    #[command(flatten)]
    text: TextArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Labeled corpus (needed for the mesh and stats tables).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Directory holding `evaluate` output; tables are written there too.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Comma-separated: mesh, stats
    #[arg(long)]
    tables: Option<String>,
    /// Regenerate ROC CSV and SVG files.
    #[arg(long)]
    roc: bool,
    /// Rows per MeSH table.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    window_months: Option<u32>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Permute the labels (null control).
    #[arg(long)]
    shuffle_labels: bool,
}

fn required<T>(flag: Option<T>, cfg: Option<T>, name: &str) -> Result<T, Failure> {
    flag.or(cfg).ok_or_else(|| invalid(format!("missing --{name} (flag or config key)")))
}

fn parse_with<T>(flag: Option<String>, cfg: Option<String>, default: T, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, Failure> {
    match flag.or(cfg) {
        Some(s) => parse(&s).map_err(invalid),
        None => Ok(default),
    }
}

fn parse_source(flag: Option<String>, cfg: Option<String>) -> Result<TextSource, Failure> {
    parse_with(flag, cfg, TextSource::Citances, |s| s.parse())
}

fn parse_mode(flag: Option<String>, cfg: Option<String>) -> Result<VectorizerMode, Failure> {
    parse_with(flag, cfg, VectorizerMode::Count, |s| s.parse())
}

fn parse_classifier(flag: Option<String>, cfg: Option<String>) -> Result<EnsembleKind, Failure> {
    parse_with(flag, cfg, EnsembleKind::RandomForest, |s| s.parse::<EnsembleKind>().map_err(|e| e.to_string()))
}

struct TextResources {
    tagger: Option<TaggerModel>,
    lexicon: Option<SentimentLexicon>,
}

impl TextResources {
    fn load(args: &TextArgs, cfg: &Config) -> Result<Self, Failure> {
        let tagger = match args.tagger.clone().or(cfg.tagger.clone()) {
            Some(p) => Some(TaggerModel::load(&p)?),
            None => None,
        };
        let lexicon = match args.lexicon.clone().or(cfg.lexicon.clone()) {
            Some(p) => Some(sentiment::load_lexicon(&p)?),
            None => None,
        };
        Ok(TextResources { tagger, lexicon })
    }

    fn tagger(&self) -> &TaggerModel {
        self.tagger.as_ref().unwrap_or_else(|| TaggerModel::bundled())
    }

    fn lexicon(&self) -> &SentimentLexicon {
        self.lexicon.as_ref().unwrap_or_else(|| SentimentLexicon::bundled())
    }
}

fn feature_options(args: &TextArgs, cfg: &Config) -> Result<FeatureOptions, Failure> {
    let window_months = args.window_months.or(cfg.window_months).unwrap_or(corpus::DEFAULT_WINDOW_MONTHS);
    if window_months == 0 {
        return Err(invalid("--window-months must be positive"));
    }
    Ok(FeatureOptions { window_months, ..FeatureOptions::default() })
}

/// Labeled studies with an abstract and at least one windowed citance.
fn modeling_corpus(path: &Path, window_months: u32) -> Result<Vec<corpus::ArticleRecord>, Failure> {
    let records = acquire::load_corpus(path)?;
    if let Err(dup) = corpus::check_unique_pmids(&records) {
        return Err(invalid(format!("{}: PMID {dup} appears more than once", path.display())));
    }
    let (kept, summary) = corpus::select_for_modeling(records, window_months)?;
    log::info!(
        "modeling corpus: {} kept, {} unlabeled, {} without abstract, {} without date, {} without windowed citances",
        summary.kept,
        summary.unlabeled,
        summary.missing_abstract,
        summary.missing_date,
        summary.no_windowed_citances
    );
    Ok(kept)
}

fn ingest(args: IngestArgs, cfg: &Config) -> Result<(), Failure> {
    let pmids_path = required(args.pmids, cfg.pmids.clone(), "pmids")?;
    let out = required(args.out, cfg.out.clone(), "out")?;
    let mut fetch = FetchConfig::from_env();
    if let Some(r) = args.rate_limit.or(cfg.rate_limit) {
        fetch.rate_limit = r;
    }
    if let Some(r) = args.retries.or(cfg.retries) {
        fetch.retries = r;
    }
    if let Some(t) = args.timeout.or(cfg.timeout) {
        fetch.timeout = Duration::from_secs(t);
    }
    if let Some(u) = args.eutils_url.or(cfg.eutils_url.clone()) {
        fetch.eutils_base_url = u;
    }
    if let Some(u) = args.colil_url.or(cfg.colil_url.clone()) {
        fetch.colil_endpoint_url = u;
    }
    let pmids = acquire::read_pmid_list(&pmids_path)?;
    let http = match args.fixtures.or(cfg.fixtures.clone()) {
        Some(dir) => HttpClient::new(Box::new(FixtureTransport::new(dir)), Box::<SystemClock>::default(), &fetch)?,
        None => HttpClient::live(&fetch)?,
    };
    let (mut records, summary) = acquire::ingest(&http, &fetch, &pmids)?;
    if let Some(path) = args.merge.or(cfg.merge.clone()) {
        let known: std::collections::HashMap<_, _> =
            acquire::load_corpus(&path)?.into_iter().map(|r| (r.pmid, (r.recommendations, r.label))).collect();
        for r in &mut records {
            if let Some((recs, label)) = known.get(&r.pmid) {
                r.recommendations = recs.clone();
                r.label = *label;
            }
        }
    }
    acquire::save_corpus(&records, &out)?;
    println!(
        "fetched {} of {} studies ({} not found, {} without abstract), {} citing sentences",
        summary.fetched,
        summary.requested,
        summary.not_found.len(),
        summary.without_abstract,
        summary.citances
    );
    Ok(())
}

fn annotate(args: AnnotateArgs, cfg: &Config) -> Result<(), Failure> {
    let input = required(args.input, cfg.input.clone(), "in")?;
    let out = required(args.out, cfg.out.clone(), "out")?;
    let clinical_only = args.clinical_only || cfg.clinical_only.unwrap_or(false);
    let records = acquire::load_corpus(&input)?;
    let (labeled, s) = corpus::annotate(records, clinical_only);
    acquire::save_corpus(&labeled, &out)?;
    println!(
        "{} studies: {} transformative, {} incremental, {} conflict, {} single expert, {} without labeling tags, {} non-clinical",
        s.total, s.transformative, s.incremental, s.conflict, s.insufficient_experts, s.no_labeling_tags, s.non_clinical
    );
    Ok(())
}

fn featurize(args: FeaturizeArgs, cfg: &Config) -> Result<(), Failure> {
    let input = required(args.input, cfg.input.clone(), "in")?;
    let out = required(args.out, cfg.out.clone(), "out")?;
    let source = parse_source(args.source, cfg.source.clone())?;
    let mode = parse_mode(args.mode, cfg.mode.clone())?;
    let opts = feature_options(&args.text, cfg)?;
    let min_df = args.text.min_df.or(cfg.min_df).unwrap_or(features::DEFAULT_MIN_DF);
    let res = TextResources::load(&args.text, cfg)?;
    let corpus = modeling_corpus(&input, opts.window_months)?;
    let prepared = pipeline::prepare(&corpus, source, res.tagger(), res.lexicon(), &opts)?;
    let vocab = features::fit_vocabulary(prepared.analyses.iter().map(|a| &a.terms), min_df)?;
    let rows: Vec<_> = prepared
        .analyses
        .iter()
        .map(|a| FeatureVector::from_analysis(a, &vocab, mode, opts.pos_raw_counts).to_sparse_row())
        .collect();
    std::fs::create_dir_all(&out)?;
    features::write_vocabulary(&vocab, std::io::BufWriter::new(std::fs::File::create(out.join("vocabulary.tsv"))?))?;
    features::write_triplets(&rows, std::io::BufWriter::new(std::fs::File::create(out.join("matrix.triplets"))?))?;
    let mut labels = String::from("row\tpmid\tlabel\n");
    for (i, (pmid, y)) in prepared.pmids.iter().zip(&prepared.labels).enumerate() {
        writeln!(labels, "{i}\t{pmid}\t{}", if *y { "transformative" } else { "incremental" }).expect("write to string");
    }
    std::fs::write(out.join("labels.tsv"), labels)?;
    println!("{} studies x {} columns ({} n-grams), {source}/{mode}", rows.len(), features::feature_names(&vocab).len(), vocab.len());
    Ok(())
}

fn evaluate(args: EvaluateArgs, cfg: &Config) -> Result<(), Failure> {
    let input = required(args.input, cfg.input.clone(), "in")?;
    let report_dir = required(args.report, cfg.report.clone(), "report")?;
    let grid_kind = args.grid.or(cfg.grid.clone()).unwrap_or_else(|| "cell".into());
    let grid = match grid_kind.as_str() {
        "full" => ExperimentGrid::full(),
        "cell" => ExperimentGrid::single(GridCell {
            source: parse_source(args.source, cfg.source.clone())?,
            mode: parse_mode(args.mode, cfg.mode.clone())?,
            classifier: parse_classifier(args.classifier, cfg.classifier.clone())?,
        }),
        other => return Err(invalid(format!("unknown grid {other:?} (expected full|cell)"))),
    };
    let features = feature_options(&args.text, cfg)?;
    let opts = CvOptions {
        k: args.k.or(cfg.k).unwrap_or(pipeline::DEFAULT_FOLDS),
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        merge_auc: args.merge_auc || cfg.merge_auc.unwrap_or(false),
        top_features: Some(args.top_features.or(cfg.top_features).unwrap_or(pipeline::DEFAULT_TOP_FEATURES)),
        n_trees: args.n_trees.or(cfg.n_trees),
        min_df: args.text.min_df.or(cfg.min_df).unwrap_or(features::DEFAULT_MIN_DF),
        features,
    };
    if opts.n_trees == Some(0) {
        return Err(invalid("--n-trees must be positive"));
    }
    let res = TextResources::load(&args.text, cfg)?;
    let corpus = modeling_corpus(&input, opts.features.window_months)?;
    let reports = pipeline::run_grid(&corpus, &grid, res.tagger(), res.lexicon(), &opts)?;
    for r in &reports {
        pipeline::write_report(r, &report_dir)?;
    }
    let table = pipeline::grid_table(&reports);
    std::fs::write(report_dir.join("grid.tsv"), &table)?;
    print!("{table}");
    for r in &reports {
        println!("{}\tfingerprint {}", r.cell, r.fingerprint);
    }
    Ok(())
}

fn load_reports(dir: &Path) -> Result<Vec<CvReport>, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".errors.json"))
        .collect();
    paths.sort();
    let mut reports = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        let report: CvReport =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: not a cross-validation report: {e}", p.display())))?;
        reports.push(report);
    }
    Ok(reports)
}

fn report(args: ReportArgs, cfg: &Config) -> Result<(), Failure> {
    let dir = required(args.report, cfg.report.clone(), "report")?;
    let tables = match args.tables {
        Some(t) => config::Tables::Joined(t).names(),
        None => cfg.tables.as_ref().map(config::Tables::names).unwrap_or_default(),
    };
    if let Some(bad) = tables.iter().find(|t| !matches!(t.as_str(), "mesh" | "stats")) {
        return Err(invalid(format!("unknown table {bad:?} (expected mesh,stats)")));
    }
    let roc = args.roc || cfg.roc.unwrap_or(false);
    if tables.is_empty() && !roc {
        return Err(invalid("nothing to do: pass --tables and/or --roc"));
    }
    let window = args.window_months.or(cfg.window_months).unwrap_or(corpus::DEFAULT_WINDOW_MONTHS);
    let top = args.top.or(cfg.top).unwrap_or(20);
    let corpus = if tables.is_empty() {
        Vec::new()
    } else {
        modeling_corpus(&required(args.input, cfg.input.clone(), "in")?, window)?
    };
    let needs_reports = roc || tables.iter().any(|t| t == "mesh");
    let reports = if needs_reports { load_reports(&dir)? } else { Vec::new() };
    if needs_reports && reports.is_empty() {
        return Err(invalid(format!("no reports in {}; run evaluate first", dir.display())));
    }
    for t in &tables {
        match t.as_str() {
            "stats" => {
                let stats = pipeline::descriptive_stats(&corpus, window)?;
                std::fs::write(dir.join("stats.tsv"), stats.to_tsv())?;
                println!("wrote {}", dir.join("stats.tsv").display());
            }
            _ => {
                for r in &reports {
                    let analysis = pipeline::error_analysis(r, &corpus, window, 5);
                    let stem = r.cell.to_string();
                    std::fs::write(dir.join(format!("{stem}.mesh.tsv")), analysis.to_tsv(top))?;
                    let json = serde_json::to_string_pretty(&analysis).map_err(|e| Failure::Io(e.to_string()))?;
                    std::fs::write(dir.join(format!("{stem}.errors.json")), json)?;
                    println!("wrote {}", dir.join(format!("{stem}.mesh.tsv")).display());
                }
            }
        }
    }
    if roc {
        for r in &reports {
            pipeline::emit_roc(r, &dir, &format!("{}.roc", r.cell))?;
        }
        println!("wrote {} ROC plots", reports.len());
    }
    Ok(())
}

fn synth(args: SynthArgs, cfg: &Config) -> Result<(), Failure> {
    let out = required(args.out, cfg.out.clone(), "out")?;
    let mut sc = SyntheticConfig::default();
    if let Some(n) = args.n_docs.or(cfg.n_docs) {
        sc.n_docs = n;
    }
    if let Some(s) = args.seed.or(cfg.seed) {
        sc.seed = s;
    }
    let mut records = synthetic::generate(&sc);
    if args.shuffle_labels || cfg.shuffle_labels.unwrap_or(false) {
        synthetic::shuffle_labels(&mut records, sc.seed.wrapping_add(1));
    }
    acquire::save_corpus(&records, &out)?;
    println!("wrote {} synthetic studies to {}", records.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(invalid)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(a, &cfg),
        Command::Annotate(a) => annotate(a, &cfg),
        Command::Featurize(a) => featurize(a, &cfg),
        Command::Evaluate(a) => evaluate(a, &cfg),
        Command::Report(a) => report(a, &cfg),
        Command::Synth(a) => synth(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

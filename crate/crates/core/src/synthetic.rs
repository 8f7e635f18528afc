//! Seeded synthetic corpora with contrast cues planted in the citing
//! sentences of transformative studies only.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    assign_label, ArticleRecord, CitingSentence, ExpertRecommendation, Label, MeshTerm, PartialDate, Pmid,
    RecommendationTag,
};

/// Major MeSH term carried by studies whose citances contradict their label.
pub const HARD_CASE_MESH: &str = "Treatment Failure";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub transformative_fraction: f64,
    /// Per-citance probability of each cue in a transformative study.
    pub cue_rate: f64,
    /// Per-citance probability of each cue in an incremental study.
    pub background_rate: f64,
    /// Fraction of studies whose citances follow the other class.
    pub hard_fraction: f64,
    pub min_citances: usize,
    pub max_citances: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_docs: 600,
            transformative_fraction: 0.55,
            cue_rate: 0.55,
            background_rate: 0.08,
            hard_fraction: 0.06,
            min_citances: 3,
            max_citances: 7,
            seed: 2024,
        }
    }
}

const AUTHORS: &[&str] = &[
    "Smith et al.", "Chen and colleagues", "Garcia et al.", "The investigators", "Patel et al.", "Kim et al.",
    "A recent trial", "Nguyen et al.", "Miller and coworkers", "This study", "Rossi et al.", "The authors",
];
const INTERVENTIONS: &[&str] = &[
    "statin therapy", "early surgery", "intensive glucose control", "aspirin", "beta blockade", "vitamin D",
    "home monitoring", "low dose steroids", "radiotherapy", "antiviral treatment", "exercise training",
    "dual antiplatelet therapy", "tight blood pressure control", "iron supplementation", "early mobilization",
];
const OUTCOMES: &[&str] = &[
    "mortality", "hospital admission", "stroke", "relapse", "cardiac events", "fracture risk", "infection rates",
    "quality of life", "renal decline", "length of stay", "recurrence", "functional recovery",
];
const POPULATIONS: &[&str] = &[
    "older adults", "children", "patients with diabetes", "women", "critically ill patients",
    "patients with heart failure", "outpatients", "smokers", "pregnant women", "patients with cancer",
];
const EFFECTS_PRESENT: &[&str] = &["reduces", "lowers", "improves", "increases", "prevents", "modifies"];
const EFFECTS_PAST: &[&str] = &["reduced", "lowered", "improved", "increased", "prevented", "modified"];
const REPORT_PRESENT: &[&str] = &["show", "report", "find", "suggest", "demonstrate", "confirm"];
const REPORT_PAST: &[&str] = &["showed", "reported", "found", "suggested", "demonstrated", "observed"];
const JOURNALS: &[&str] =
    &["N Engl J Med", "Lancet", "JAMA", "BMJ", "Ann Intern Med", "Circulation", "J Clin Oncol", "Diabetes Care"];
const MESH: &[&str] = &[
    "Humans", "Aged", "Randomized Controlled Trials as Topic", "Treatment Outcome", "Risk Factors", "Cohort Studies",
    "Hypertension", "Diabetes Mellitus, Type 2", "Myocardial Infarction", "Neoplasms", "Stroke", "Child",
];
const ABSTRACT_OPENERS: &[&str] = &["Background", "Objective", "Aims", "Purpose"];

#[derive(Debug, Clone, Copy)]
struct Cues {
    however: bool,
    question: bool,
    negation: bool,
    past: bool,
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty word list")
}

fn citance(rng: &mut ChaCha8Rng, cues: Cues) -> String {
    let author = pick(rng, AUTHORS);
    let intervention = pick(rng, INTERVENTIONS);
    let outcome = pick(rng, OUTCOMES);
    let population = pick(rng, POPULATIONS);
    let k = rng.random_range(0..REPORT_PAST.len());
    let e = rng.random_range(0..EFFECTS_PAST.len());
    let (report, effect) = if cues.past { (REPORT_PAST[k], EFFECTS_PAST[e]) } else { (REPORT_PRESENT[k], EFFECTS_PRESENT[e]) };
    let mut body = if cues.negation {
        if cues.past {
            format!("{author} {report} that {intervention} did not change {outcome} in {population}")
        } else {
            format!("{author} {report} that {intervention} does not change {outcome} in {population}")
        }
    } else {
        format!("{author} {report} that {intervention} {effect} {outcome} in {population}")
    };
    if cues.question {
        body.push_str(if cues.past {
            ", which called into question the earlier guidance"
        } else {
            ", and the question of dosing remains open"
        });
    }
    if cues.however {
        let mut chars = body.chars();
        let first = chars.next().map(|c| c.to_lowercase().collect::<String>()).unwrap_or_default();
        body = if author.starts_with("The ") || author.starts_with("This ") || author.starts_with("A ") {
            format!("However, {first}{}", chars.as_str())
        } else {
            format!("However, {body}")
        };
    }
    body.push('.');
    body
}

fn abstract_text(rng: &mut ChaCha8Rng) -> String {
    let intervention = pick(rng, INTERVENTIONS);
    let outcome = pick(rng, OUTCOMES);
    let population = pick(rng, POPULATIONS);
    let n = rng.random_range(80..2000);
    let opener = pick(rng, ABSTRACT_OPENERS);
    let effect = pick(rng, EFFECTS_PRESENT);
    let months = rng.random_range(6..60);
    format!(
        "{opener}: whether {intervention} {effect} {outcome} in {population} is uncertain. \
         Methods: we randomly assigned {n} participants to {intervention} or usual care and followed them for {months} months. \
         Results: the primary outcome of {outcome} occurred in a similar proportion of participants in each group, \
         and adverse events were uncommon. Conclusions: in {population}, {intervention} was feasible and well tolerated."
    )
}

fn month_offset(date: PartialDate, months: u32) -> PartialDate {
    let m0 = date.get_year() * 12 + i32::from(date.get_month().unwrap_or(1)) - 1 + months as i32;
    PartialDate::year_month(m0 / 12, (m0 % 12 + 1) as u8).expect("month in range")
}

fn recommendations(rng: &mut ChaCha8Rng, transformative: bool) -> Vec<ExpertRecommendation> {
    let n = rng.random_range(2..=3);
    let extras = [RecommendationTag::NewFinding, RecommendationTag::GoodForTeaching, RecommendationTag::TechnicalAdvance];
    (0..n)
        .map(|e| {
            let main = if transformative {
                *[RecommendationTag::Refutation, RecommendationTag::ChangesClinicalPractice, RecommendationTag::Controversial]
                    .choose(rng)
                    .expect("non-empty")
            } else {
                RecommendationTag::Confirmation
            };
            let mut tags = vec![main];
            if rng.random_bool(0.3) {
                tags.push(*extras.choose(rng).expect("non-empty"));
            }
            ExpertRecommendation::new(format!("expert-{e}"), tags, None).expect("tags are non-empty")
        })
        .collect()
}

/// Generates `n_docs` labeled studies. Transformative studies' citances carry
/// "however", "question", negation and past-tense cues at `cue_rate`;
/// incremental ones at `background_rate`. Abstracts do not depend on the class.
/// Hard cases swap the cue rates and carry [`HARD_CASE_MESH`].
pub fn generate(config: &SyntheticConfig) -> Vec<ArticleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_t = (config.n_docs as f64 * config.transformative_fraction).round() as usize;
    let mut classes: Vec<bool> = (0..config.n_docs).map(|i| i < n_t).collect();
    classes.shuffle(&mut rng);
    let mut next_citing = 9_000_000u64;
    classes
        .into_iter()
        .enumerate()
        .map(|(i, transformative)| {
            let hard = rng.random_bool(config.hard_fraction);
            let cue_like = transformative != hard;
            let rate = if cue_like { config.cue_rate } else { config.background_rate };
            let mut article = ArticleRecord::new(Pmid::new(10_000_000 + i as u64));
            let published = PartialDate::year_month(rng.random_range(2001..2017), rng.random_range(1..=12)).expect("valid month");
            article.pub_date = Some(published);
            article.title = format!("A randomized trial of {} in {}", pick(&mut rng, INTERVENTIONS), pick(&mut rng, POPULATIONS));
            article.abstract_text = Some(abstract_text(&mut rng));
            article.journal = Some(pick(&mut rng, JOURNALS).to_string());
            article.publication_types = vec!["Randomized Controlled Trial".into()];
            let mut mesh: Vec<&str> = MESH.choose_multiple(&mut rng, 3).copied().collect();
            if hard {
                mesh.push(HARD_CASE_MESH);
            }
            article.mesh_terms = mesh.iter().enumerate().map(|(k, m)| MeshTerm::new(*m, k != 0 || hard)).collect();
            article.recommendations = recommendations(&mut rng, transformative);
            let n_cit = rng.random_range(config.min_citances..=config.max_citances);
            for c in 0..n_cit {
                let cues = Cues {
                    however: rng.random_bool(rate),
                    question: rng.random_bool(rate),
                    negation: rng.random_bool(rate),
                    past: rng.random_bool(if cue_like { 0.7 } else { 0.3 }),
                };
                // the last citance of some studies falls outside the 24-month window
                let late = c + 1 == n_cit && rng.random_bool(0.25);
                let offset = if late { rng.random_range(24..48) } else { rng.random_range(0..24) };
                next_citing += 1;
                let sentence = CitingSentence::new(citance(&mut rng, cues), Pmid::new(next_citing), month_offset(published, offset))
                    .expect("generated sentence is not blank");
                article.citances.push(sentence);
            }
            article.label = Some(assign_label(&article.recommendations));
            article
        })
        .collect()
}

/// Permutes class labels across the labeled studies, removing any text signal.
pub fn shuffle_labels(records: &mut [ArticleRecord], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = records.iter().filter_map(|r| r.label.filter(|l| l.as_class().is_some())).collect();
    labels.shuffle(&mut rng);
    let mut it = labels.into_iter();
    for r in records.iter_mut().filter(|r| r.label.is_some_and(|l| l.as_class().is_some())) {
        r.label = it.next();
    }
}

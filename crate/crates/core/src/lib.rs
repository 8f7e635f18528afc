//! Classification of clinical studies as *transformative* (challenging
//! established claims) or *incremental* (confirming them) from abstracts and
//! early citing sentences.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: study records, expert-tag labeling rules and the citation window.
//! * [`acquire`]: PubMed E-utilities and Colil SPARQL clients plus the JSON Lines store.
//! * [`lingua`]: tokenizer and averaged-perceptron Penn Treebank tagger.
//! * [`sentiment`]: rule-based valence scoring (compound score feature).
//! * [`features`]: n-grams, count / TF-IDF vectorization and feature assembly.
//! * [`models`]: CART trees, random forest, AdaBoost and gradient boosting.
//! * [`pipeline`]: stratified cross-validation, ROC AUC, reports and error analysis.
//! * [`synthetic`]: seeded corpus generator with planted citance cues.

pub mod acquire;
pub mod corpus;
pub mod features;
pub mod lingua;
pub mod models;
pub mod pipeline;
pub mod sentiment;
pub mod synthetic;

pub use corpus::{ArticleRecord, CitingSentence, ExpertRecommendation, Label, PartialDate, Pmid, RecommendationTag};

use evidencer::corpus::{self, CitingSentence};
use evidencer::features::{FeatureOptions, TextSource};
use evidencer::lingua::TaggerModel;
use evidencer::pipeline::{fold_vocabulary, prepare, stratified_folds};
use evidencer::sentiment::SentimentLexicon;
use evidencer::synthetic::{self, SyntheticConfig};

#[test]
fn held_out_text_never_reaches_the_fold_vocabulary() {
    let docs = synthetic::generate(&SyntheticConfig { n_docs: 80, seed: 3, ..SyntheticConfig::default() });
    let (docs, _) = corpus::select_for_modeling(docs, corpus::DEFAULT_WINDOW_MONTHS).unwrap();
    let opts = FeatureOptions::default();
    let (tagger, lex) = (TaggerModel::bundled(), SentimentLexicon::bundled());
    let prepared = prepare(&docs, TextSource::Citances, tagger, lex, &opts).unwrap();
    let folds = stratified_folds(&prepared.labels, 5, 1).unwrap();
    let fold = 2;
    let before = fold_vocabulary(&prepared, &folds, fold, 1).unwrap();

    // plant a canary in every held-out study
    let mut poisoned = docs.clone();
    for &i in &folds.members(fold) {
        let c = &poisoned[i].citances[0];
        let canary = CitingSentence::new("zzcanary zzcanary leaks", c.citing_pmid, c.citing_date).unwrap();
        poisoned[i].citances.push(canary);
    }
    let prepared2 = prepare(&poisoned, TextSource::Citances, tagger, lex, &opts).unwrap();
    let after = fold_vocabulary(&prepared2, &folds, fold, 1).unwrap();
    assert_eq!(before, after);
    assert!(after.index_of("zzcanary").is_none());
    // the canary does show up when its fold is part of training
    let other = fold_vocabulary(&prepared2, &folds, (fold + 1) % 5, 1).unwrap();
    assert!(other.index_of("zzcanary").is_some());
}

//! Optional TOML config file. Keys mirror the long flag names with `-`
//! replaced by `_`; a flag given on the command line always wins.
//!
//! ```toml
//! input = "labeled.jsonl"      # --in
//! window_months = 24
//! seed = 7
//! k = 10
//! grid = "cell"                # full | cell
//! source = "citances"
//! mode = "count"
//! classifier = "rf"
//! report = "out/"
//! tables = ["mesh", "stats"]   # or "mesh,stats"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub window_months: Option<u32>,
    // ingest
    pub pmids: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub merge: Option<PathBuf>,
    pub rate_limit: Option<f64>,
    pub retries: Option<u32>,
    pub timeout: Option<u64>,
    pub eutils_url: Option<String>,
    pub colil_url: Option<String>,
    // annotate
    pub clinical_only: Option<bool>,
    // featurize / evaluate
    pub source: Option<String>,
    pub mode: Option<String>,
    pub min_df: Option<u32>,
    pub tagger: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub grid: Option<String>,
    pub classifier: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub report: Option<PathBuf>,
    pub n_trees: Option<usize>,
    pub top_features: Option<usize>,
    pub merge_auc: Option<bool>,
    // report
    pub tables: Option<Tables>,
    pub roc: Option<bool>,
    pub top: Option<usize>,
    // synth
    pub n_docs: Option<usize>,
    pub shuffle_labels: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Tables {
    List(Vec<String>),
    Joined(String),
}

impl Tables {
    pub fn names(&self) -> Vec<String> {
        match self {
            Tables::List(v) => v.clone(),
            Tables::Joined(s) => s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let c: Config = toml::from_str("seed = 7\ntables = \"mesh, stats\"\nclinical_only = true\n").unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.tables.unwrap().names(), vec!["mesh", "stats"]);
        let l: Config = toml::from_str("tables = [\"stats\"]").unwrap();
        assert_eq!(l.tables.unwrap().names(), vec!["stats"]);
        assert!(toml::from_str::<Config>("sed = 7").is_err());
    }
}

//! Rule-based valence scoring in the style of VADER.
//!
//! Token valences come from a lexicon of mean human ratings; a handful of
//! rules adjust them (capitalisation, degree adverbs, negation within three
//! tokens, "least", contrastive "but") and the adjusted sum `S` is squashed to
//! `S / sqrt(S^2 + 15)`.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

pub const ALPHA: f64 = 15.0;
pub const BOOSTER_INCREMENT: f64 = 0.293;
pub const CAPS_INCREMENT: f64 = 0.733;
pub const NEGATION_SCALAR: f64 = -0.74;
const EXCLAMATION_INCREMENT: f64 = 0.292;
const QUESTION_INCREMENT: f64 = 0.18;
const QUESTION_CAP: f64 = 0.96;

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("lexicon has no usable entries")]
    EmptyLexicon,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const NEGATIONS: &[&str] = &[
    "aint", "arent", "cannot", "cant", "couldnt", "darent", "didnt", "doesnt", "ain't", "aren't", "can't", "couldn't",
    "daren't", "didn't", "doesn't", "dont", "hadnt", "hasnt", "havent", "isnt", "mightnt", "mustnt", "neither",
    "don't", "hadn't", "hasn't", "haven't", "isn't", "mightn't", "mustn't", "neednt", "needn't", "never", "none",
    "nope", "nor", "not", "nothing", "nowhere", "oughtnt", "shant", "shouldnt", "uhuh", "wasnt", "werent", "oughtn't",
    "shan't", "shouldn't", "uh-uh", "wasn't", "weren't", "without", "wont", "wouldnt", "won't", "wouldn't", "rarely",
    "seldom", "despite",
];

const BOOSTERS_UP: &[&str] = &[
    "absolutely", "amazingly", "awfully", "completely", "considerable", "considerably", "decidedly", "deeply",
    "effing", "enormous", "enormously", "entirely", "especially", "exceptional", "exceptionally", "extreme",
    "extremely", "fabulously", "flipping", "flippin", "frackin", "fracking", "fricking", "frickin", "frigging",
    "friggin", "fully", "fuckin", "fucking", "fuggin", "fugging", "greatly", "hella", "highly", "hugely",
    "incredible", "incredibly", "intensely", "major", "majorly", "more", "most", "particularly", "purely", "quite",
    "really", "remarkably", "so", "substantially", "thoroughly", "total", "totally", "tremendous", "tremendously",
    "uber", "unbelievably", "unusually", "utter", "utterly", "very",
];

const BOOSTERS_DOWN: &[&str] = &[
    "almost", "barely", "hardly", "just enough", "kind of", "kinda", "kindof", "kind-of", "less", "little",
    "marginal", "marginally", "occasional", "occasionally", "partly", "scarce", "scarcely", "slight", "slightly",
    "somewhat", "sort of", "sorta", "sortof", "sort-of",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub malformed_lines: usize,
    pub duplicate_tokens: usize,
}

#[derive(Debug, Clone)]
pub struct SentimentLexicon {
    valences: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negations: HashSet<String>,
    stats: LoadStats,
}

impl SentimentLexicon {
    /// Parses `token \t mean \t stddev \t ratings` lines, keeping token and mean.
    /// Malformed lines are skipped and counted; a repeated token keeps its last value.
    pub fn parse(text: &str) -> Result<Self, SentimentError> {
        let mut valences = HashMap::new();
        let mut stats = LoadStats::default();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let parsed = match (fields.next(), fields.next()) {
                (Some(tok), Some(mean)) if !tok.trim().is_empty() => {
                    mean.trim().parse::<f64>().ok().filter(|m| m.is_finite()).map(|m| (tok.trim(), m))
                }
                _ => None,
            };
            match parsed {
                Some((tok, mean)) => {
                    if valences.insert(tok.to_string(), mean).is_some() {
                        stats.duplicate_tokens += 1;
                    }
                }
                None => stats.malformed_lines += 1,
            }
        }
        if stats.malformed_lines > 0 {
            log::warn!("skipped {} malformed lexicon lines", stats.malformed_lines);
        }
        if stats.duplicate_tokens > 0 {
            log::warn!("{} duplicate lexicon tokens, last value kept", stats.duplicate_tokens);
        }
        if valences.is_empty() {
            return Err(SentimentError::EmptyLexicon);
        }
        let boosters = BOOSTERS_UP
            .iter()
            .map(|w| (w.to_string(), BOOSTER_INCREMENT))
            .chain(BOOSTERS_DOWN.iter().map(|w| (w.to_string(), -BOOSTER_INCREMENT)))
            .collect();
        let negations = NEGATIONS.iter().map(|w| w.to_string()).collect();
        Ok(SentimentLexicon { valences, boosters, negations, stats })
    }

    /// The canonical valence lexicon shipped with the crate.
    pub fn bundled() -> &'static SentimentLexicon {
        static LEX: OnceLock<SentimentLexicon> = OnceLock::new();
        LEX.get_or_init(|| SentimentLexicon::parse(include_str!("../data/vader_lexicon.txt")).expect("bundled lexicon parses"))
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valences.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    pub fn load_stats(&self) -> LoadStats {
        self.stats
    }

    /// Same lexicon with every valence sign flipped.
    pub fn mirrored(&self) -> SentimentLexicon {
        SentimentLexicon {
            valences: self.valences.iter().map(|(k, v)| (k.clone(), -v)).collect(),
            ..self.clone()
        }
    }

    fn contains(&self, word: &str) -> bool {
        self.valences.contains_key(word)
    }

    fn is_negation(&self, word: &str) -> bool {
        self.negations.contains(word) || word.contains("n't")
    }
}

pub fn load_lexicon(path: &Path) -> Result<SentimentLexicon, SentimentError> {
    SentimentLexicon::parse(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarityScores {
    pub neg: f64,
    pub neu: f64,
    pub pos: f64,
    pub compound: f64,
}

impl PolarityScores {
    pub const ZERO: PolarityScores = PolarityScores { neg: 0.0, neu: 0.0, pos: 0.0, compound: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoringRules {
    /// Halve valences before the first "but" and scale those after by 1.5.
    pub but_clause: bool,
}

impl Default for ScoringRules {
    fn default() -> Self {
        ScoringRules { but_clause: true }
    }
}

/// `s / sqrt(s^2 + alpha)`, clamped to [-1, 1].
pub fn normalize(s: f64, alpha: f64) -> f64 {
    (s / (s * s + alpha).sqrt()).clamp(-1.0, 1.0)
}

fn is_upper(word: &str) -> bool {
    word.chars().any(|c| c.is_uppercase() || c.is_lowercase()) && !word.chars().any(char::is_lowercase)
}

const ASCII_PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Whitespace split; leading/trailing ASCII punctuation is removed unless
/// that leaves two characters or fewer (emoticons survive).
fn words_of(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|w| {
            let stripped = w.trim_matches(|c| ASCII_PUNCT.contains(c));
            if stripped.chars().count() <= 2 {
                w
            } else {
                stripped
            }
        })
        .collect()
}

fn signed(magnitude: f64, valence: f64) -> f64 {
    if valence > 0.0 {
        magnitude
    } else if valence < 0.0 {
        -magnitude
    } else {
        0.0
    }
}

struct Scorer<'a> {
    lex: &'a SentimentLexicon,
    words: Vec<&'a str>,
    lower: Vec<String>,
    cap_differential: bool,
}

impl<'a> Scorer<'a> {
    fn new(text: &'a str, lex: &'a SentimentLexicon) -> Self {
        let words = words_of(text);
        let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
        let caps = words.iter().filter(|w| is_upper(w)).count();
        let cap_differential = caps > 0 && caps < words.len();
        Scorer { lex, words, lower, cap_differential }
    }

    fn booster_scalar(&self, j: usize, valence: f64) -> f64 {
        let Some(b) = self.lex.boosters.get(&self.lower[j]) else {
            return 0.0;
        };
        let mut scalar = signed(*b, valence);
        if is_upper(self.words[j]) && self.cap_differential {
            scalar += signed(CAPS_INCREMENT, valence);
        }
        scalar
    }

    fn token_valence(&self, i: usize) -> f64 {
        let lw = self.lower[i].as_str();
        let Some(base) = self.lex.valence(lw) else {
            return 0.0;
        };
        let n = self.words.len();
        let mut valence = base;
        if lw == "no" && i + 1 < n && self.lex.contains(&self.lower[i + 1]) {
            valence = 0.0;
        }
        if (i > 0 && self.lower[i - 1] == "no")
            || (i > 1 && self.lower[i - 2] == "no")
            || (i > 2 && self.lower[i - 3] == "no" && matches!(self.lower[i - 1].as_str(), "or" | "nor"))
        {
            valence = base * NEGATION_SCALAR;
        }
        if is_upper(self.words[i]) && self.cap_differential {
            valence += signed(CAPS_INCREMENT, valence);
        }
        for dist in 0..3 {
            if i <= dist {
                break;
            }
            let j = i - dist - 1;
            if self.lex.contains(&self.lower[j]) {
                continue;
            }
            let damp = [1.0, 0.95, 0.9][dist];
            valence += self.booster_scalar(j, valence) * damp;
            valence = self.negation(valence, dist, i);
        }
        self.least(valence, i)
    }

    fn negation(&self, valence: f64, dist: usize, i: usize) -> f64 {
        let w = |k: usize| self.lower[i - k].as_str();
        match dist {
            0 if self.lex.is_negation(w(1)) => valence * NEGATION_SCALAR,
            1 if w(2) == "never" && matches!(w(1), "so" | "this") => valence * 1.25,
            1 if w(2) == "without" && w(1) == "doubt" => valence,
            1 if self.lex.is_negation(w(2)) => valence * NEGATION_SCALAR,
            2 if (w(3) == "never" && matches!(w(2), "so" | "this")) || matches!(w(1), "so" | "this") => valence * 1.25,
            2 if w(3) == "without" && (w(2) == "doubt" || w(1) == "doubt") => valence,
            2 if self.lex.is_negation(w(3)) => valence * NEGATION_SCALAR,
            _ => valence,
        }
    }

    fn least(&self, valence: f64, i: usize) -> f64 {
        if i > 0 && self.lower[i - 1] == "least" && !self.lex.contains("least") {
            if i > 1 && matches!(self.lower[i - 2].as_str(), "at" | "very") {
                return valence;
            }
            return valence * NEGATION_SCALAR;
        }
        valence
    }

    fn valences(&self, rules: ScoringRules) -> Vec<f64> {
        let n = self.words.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let lw = self.lower[i].as_str();
            if self.lex.boosters.contains_key(lw) || (lw == "kind" && i + 1 < n && self.lower[i + 1] == "of") {
                out.push(0.0);
                continue;
            }
            out.push(self.token_valence(i));
        }
        if rules.but_clause {
            if let Some(bi) = self.lower.iter().position(|w| w == "but") {
                for (si, v) in out.iter_mut().enumerate() {
                    if si < bi {
                        *v *= 0.5;
                    } else if si > bi {
                        *v *= 1.5;
                    }
                }
            }
        }
        out
    }
}

fn punctuation_emphasis(text: &str) -> f64 {
    let ep = text.matches('!').count().min(4) as f64 * EXCLAMATION_INCREMENT;
    let qm = match text.matches('?').count() {
        0 | 1 => 0.0,
        n @ 2..=3 => n as f64 * QUESTION_INCREMENT,
        _ => QUESTION_CAP,
    };
    ep + qm
}

pub fn score_with(text: &str, lex: &SentimentLexicon, rules: ScoringRules) -> PolarityScores {
    let text = text.trim();
    let scorer = Scorer::new(text, lex);
    let valences = scorer.valences(rules);
    if valences.is_empty() {
        return PolarityScores::ZERO;
    }
    let emphasis = punctuation_emphasis(text);
    let sum: f64 = valences.iter().sum();
    let compound = normalize(sum + signed(emphasis, sum), ALPHA);

    let (mut pos, mut neg, mut neu) = (0.0, 0.0, 0.0);
    for v in &valences {
        if *v > 0.0 {
            pos += v + 1.0;
        } else if *v < 0.0 {
            neg += v - 1.0;
        } else {
            neu += 1.0;
        }
    }
    if pos > neg.abs() {
        pos += emphasis;
    } else if pos < neg.abs() {
        neg -= emphasis;
    }
    let total = pos + neg.abs() + neu;
    PolarityScores { neg: (neg / total).abs(), neu: (neu / total).abs(), pos: (pos / total).abs(), compound }
}

pub fn score(text: &str, lex: &SentimentLexicon) -> PolarityScores {
    score_with(text, lex, ScoringRules::default())
}

pub fn compound_of(text: &str, lex: &SentimentLexicon) -> f64 {
    score(text, lex).compound
}

/// Mean compound over separately scored sentences; 0 for no sentences.
pub fn mean_compound<S: AsRef<str>>(sentences: &[S], lex: &SentimentLexicon) -> f64 {
    if sentences.is_empty() {
        return 0.0;
    }
    sentences.iter().map(|s| compound_of(s.as_ref(), lex)).sum::<f64>() / sentences.len() as f64
}

//! Tokenization and Penn Treebank part-of-speech tagging.
//!
//! The tagger is a greedy left-to-right averaged perceptron. Frequent
//! unambiguous words are resolved through a tag dictionary and never reach
//! the perceptron.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinguaError {
    #[error("tagger model has no weights and no tag dictionary")]
    UntrainedModel,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training needs at least one iteration")]
    EmptyTraining,
    #[error("line {line}: unknown tag {tag:?}")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! tagset {
    ($($variant:ident => $sym:literal, $desc:literal;)*) => {
        /// Closed Penn Treebank tagset.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum PosTag { $($variant),* }

        impl PosTag {
            pub const ALL: &'static [PosTag] = &[$(PosTag::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(PosTag::$variant => $sym),* }
            }

            pub fn description(self) -> &'static str {
                match self { $(PosTag::$variant => $desc),* }
            }
        }

        impl FromStr for PosTag {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($sym => Ok(PosTag::$variant),)*
                    "-LRB-" => Ok(PosTag::LeftParen),
                    "-RRB-" => Ok(PosTag::RightParen),
                    _ => Err(s.to_string()),
                }
            }
        }
    };
}

tagset! {
    Cc => "CC", "coordinating conjunction";
    Cd => "CD", "cardinal digit";
    Dt => "DT", "determiner";
    Ex => "EX", "existential there";
    Fw => "FW", "foreign word";
    In => "IN", "conjunction, subordinating or preposition";
    Jj => "JJ", "adjective";
    Jjr => "JJR", "adjective, comparative";
    Jjs => "JJS", "adjective, superlative";
    Ls => "LS", "list item marker";
    Md => "MD", "verb, modal auxiliary";
    Nn => "NN", "noun, singular or mass";
    Nns => "NNS", "noun, plural";
    Nnp => "NNP", "noun, proper singular";
    Nnps => "NNPS", "noun, proper plural";
    Pdt => "PDT", "predeterminer";
    Pos => "POS", "possessive ending";
    Prp => "PRP", "pronoun, personal";
    PrpS => "PRP$", "pronoun, possessive";
    Rb => "RB", "adverb";
    Rbr => "RBR", "adverb, comparative";
    Rbs => "RBS", "adverb, superlative";
    Rp => "RP", "adverb, particle";
    Sym => "SYM", "symbol";
    To => "TO", "infinitival to";
    Uh => "UH", "interjection";
    Vb => "VB", "verb, base form";
    Vbd => "VBD", "verb, past tense";
    Vbg => "VBG", "verb, gerund or present participle";
    Vbn => "VBN", "verb, past participle";
    Vbp => "VBP", "verb, non-3rd person singular present";
    Vbz => "VBZ", "verb, 3rd person singular present";
    Wdt => "WDT", "wh-determiner";
    Wp => "WP", "wh-pronoun, personal";
    WpS => "WP$", "wh-pronoun, possessive";
    Wrb => "WRB", "wh-adverb";
    Hash => "#", "pound sign";
    Dollar => "$", "dollar sign";
    Period => ".", "sentence terminator";
    Comma => ",", "comma";
    Colon => ":", "colon or ellipsis";
    LeftParen => "(", "opening parenthesis";
    RightParen => ")", "closing parenthesis";
    OpenQuote => "``", "opening quotation mark";
    CloseQuote => "''", "closing quotation mark";
}

impl PosTag {
    pub const COUNT: usize = 45;

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub token: Token,
    pub tag: PosTag,
}

pub fn is_split_punct(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '(' | ')' | '[' | ']' | '"' | '\'' | '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}')
}

/// True when every character of the token is splittable punctuation.
pub fn is_punct_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_split_punct)
}

/// Splits on Unicode whitespace, then peels leading and trailing punctuation
/// into single-character tokens. Inner punctuation (`Barrett's`, `1.5`,
/// `32+0-33+6`) stays attached.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chunk_start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (c.is_whitespace(), chunk_start) {
            (true, Some(s)) => {
                split_chunk(text, s, i, &mut out);
                chunk_start = None;
            }
            (false, None) => chunk_start = Some(i),
            _ => {}
        }
    }
    out
}

fn split_chunk(text: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    let push = |out: &mut Vec<Token>, s: usize, e: usize| out.push(Token { surface: text[s..e].to_string(), start: s, end: e });
    let mut lo = start;
    let mut hi = end;
    let mut lead = Vec::new();
    while lo < hi {
        let c = text[lo..hi].chars().next().unwrap();
        if !is_split_punct(c) {
            break;
        }
        lead.push((lo, lo + c.len_utf8()));
        lo += c.len_utf8();
    }
    let mut trail = Vec::new();
    while lo < hi {
        let c = text[lo..hi].chars().next_back().unwrap();
        if !is_split_punct(c) {
            break;
        }
        trail.push((hi - c.len_utf8(), hi));
        hi -= c.len_utf8();
    }
    for (s, e) in lead {
        push(out, s, e);
    }
    if lo < hi {
        push(out, lo, hi);
    }
    for (s, e) in trail.into_iter().rev() {
        push(out, s, e);
    }
}

/// Deterministic guess for punctuation tokens; these never reach the perceptron.
fn punct_tag(word: &str, open_quote: &mut bool) -> Option<PosTag> {
    let tag = match word {
        "." | "!" | "?" => PosTag::Period,
        "," => PosTag::Comma,
        ";" | ":" => PosTag::Colon,
        "(" | "[" => PosTag::LeftParen,
        ")" | "]" => PosTag::RightParen,
        "\u{201c}" => PosTag::OpenQuote,
        "\u{201d}" => PosTag::CloseQuote,
        "\"" => {
            *open_quote = !*open_quote;
            if *open_quote {
                PosTag::OpenQuote
            } else {
                PosTag::CloseQuote
            }
        }
        _ => return None,
    };
    Some(tag)
}

const START: [&str; 2] = ["-START-", "-START2-"];

fn features(i: usize, words: &[&str], prev: &str, prev2: &str) -> Vec<String> {
    let word = words[i];
    let lower = word.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let suffix = |n: usize| chars[chars.len().saturating_sub(n)..].iter().collect::<String>();
    let at = |j: isize| -> String {
        usize::try_from(j)
            .ok()
            .and_then(|j| words.get(j))
            .map_or_else(|| if j < 0 { START[0].to_string() } else { "-END-".to_string() }, |w| w.to_lowercase())
    };
    let i = i as isize;
    let mut f = vec![
        "bias".to_string(),
        format!("w {word}"),
        format!("lw {lower}"),
        format!("s1 {}", suffix(1)),
        format!("s2 {}", suffix(2)),
        format!("s3 {}", suffix(3)),
        format!("p1 {}", chars.first().copied().unwrap_or(' ')),
        format!("t-1 {prev}"),
        format!("t-2 {prev2}"),
        format!("t-1t-2 {prev} {prev2}"),
        format!("t-1w {prev} {lower}"),
        format!("w-1 {}", at(i - 1)),
        format!("w+1 {}", at(i + 1)),
        format!("w-2 {}", at(i - 2)),
        format!("w+2 {}", at(i + 2)),
    ];
    let next = at(i + 1);
    let next_chars: Vec<char> = next.chars().collect();
    f.push(format!("w+1s3 {}", next_chars[next_chars.len().saturating_sub(3)..].iter().collect::<String>()));
    if word.chars().next().is_some_and(char::is_uppercase) {
        f.push(if i == 0 { "shape cap-initial".into() } else { "shape cap".into() });
    }
    if word.chars().any(|c| c.is_ascii_digit()) {
        f.push("shape digit".into());
    }
    if word.contains('-') {
        f.push("shape hyphen".into());
    }
    if word.len() > 1 && word.chars().all(|c| !c.is_alphabetic() || c.is_uppercase()) && word.chars().any(char::is_alphabetic) {
        f.push("shape allcaps".into());
    }
    f
}

/// Per-feature weights, one entry per tag that ever received an update.
type WeightRow = Vec<(PosTag, f64)>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaggerModel {
    weights: HashMap<String, WeightRow>,
    tagdict: BTreeMap<String, PosTag>,
    iterations: u32,
}

fn argmax(scores: &[f64; PosTag::COUNT]) -> PosTag {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    PosTag::ALL[best]
}

impl TaggerModel {
    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn is_trained(&self) -> bool {
        !self.weights.is_empty() || !self.tagdict.is_empty()
    }

    pub fn dictionary_tag(&self, word: &str) -> Option<PosTag> {
        self.tagdict.get(word).copied()
    }

    fn predict(&self, feats: &[String]) -> PosTag {
        let mut scores = [0.0; PosTag::COUNT];
        for f in feats {
            if let Some(row) = self.weights.get(f) {
                for (tag, w) in row {
                    scores[tag.index()] += w;
                }
            }
        }
        argmax(&scores)
    }

    fn tag_words(&self, words: &[&str]) -> Vec<PosTag> {
        let mut tags = Vec::with_capacity(words.len());
        let (mut prev, mut prev2) = (START[0], START[1]);
        let mut open_quote = false;
        for i in 0..words.len() {
            let tag = punct_tag(words[i], &mut open_quote)
                .or_else(|| self.dictionary_tag(words[i]))
                .unwrap_or_else(|| self.predict(&features(i, words, prev, prev2)));
            prev2 = prev;
            prev = tag.as_str();
            tags.push(tag);
        }
        tags
    }

    /// Writes the line-oriented model format: `#` headers, then
    /// `feature\ttag\tweight` lines sorted by feature and tag.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "#evidencer-tagger\t1").unwrap();
        writeln!(out, "#iterations\t{}", self.iterations).unwrap();
        for (w, t) in &self.tagdict {
            writeln!(out, "#dict\t{w}\t{t}").unwrap();
        }
        let mut feats: Vec<_> = self.weights.iter().collect();
        feats.sort_by(|a, b| a.0.cmp(b.0));
        for (f, row) in feats {
            for (t, w) in row {
                writeln!(out, "{f}\t{t}\t{w}").unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LinguaError> {
        let mut model = TaggerModel::default();
        let mut seen_header = false;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.is_empty() {
                continue;
            }
            let malformed = |message: &str| LinguaError::Malformed { line: line_no, message: message.to_string() };
            let tag_of = |s: &str| s.parse::<PosTag>().map_err(|tag| LinguaError::UnknownTag { line: line_no, tag });
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["#evidencer-tagger", "1"] => seen_header = true,
                ["#evidencer-tagger", v] => return Err(malformed(&format!("unsupported model version {v}"))),
                _ if !seen_header => return Err(malformed("missing #evidencer-tagger header")),
                ["#iterations", n] => model.iterations = n.parse().map_err(|_| malformed("bad iteration count"))?,
                ["#dict", word, tag] => {
                    model.tagdict.insert(word.to_string(), tag_of(tag)?);
                }
                [feat, tag, weight] if !feat.starts_with('#') => {
                    let w: f64 = weight.parse().map_err(|_| malformed("bad weight"))?;
                    if !w.is_finite() {
                        return Err(malformed("non-finite weight"));
                    }
                    let tag = tag_of(tag)?;
                    let row = model.weights.entry(feat.to_string()).or_default();
                    match row.binary_search_by_key(&tag, |(t, _)| *t) {
                        Ok(i) => row[i].1 = w,
                        Err(i) => row.insert(i, (tag, w)),
                    }
                }
                _ => return Err(malformed("expected feature\\ttag\\tweight")),
            }
        }
        if !seen_header {
            return Err(LinguaError::Malformed { line: 0, message: "empty model file".into() });
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), LinguaError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LinguaError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Model trained on the bundled tagged fixture, built once per process.
    pub fn bundled() -> &'static TaggerModel {
        static MODEL: OnceLock<TaggerModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            let corpus = bundled_corpus();
            train_tagger(&corpus, BUNDLED_ITERATIONS, BUNDLED_SEED).expect("bundled tagger fixture is valid")
        })
    }
}

pub const BUNDLED_ITERATIONS: u32 = 8;
pub const BUNDLED_SEED: u64 = 7;

/// Tags a token sequence; output has one entry per input token.
pub fn pos_tag(tokens: &[Token], model: &TaggerModel) -> Result<Vec<TaggedToken>, LinguaError> {
    if !model.is_trained() {
        return Err(LinguaError::UntrainedModel);
    }
    let words: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    let tags = model.tag_words(&words);
    Ok(tokens.iter().cloned().zip(tags).map(|(token, tag)| TaggedToken { token, tag }).collect())
}

#[derive(Clone, Copy, Default)]
struct Param {
    weight: f64,
    total: f64,
    stamp: u64,
}

const DICT_MIN_FREQ: usize = 4;
const DICT_MIN_RATIO: f64 = 0.97;

fn build_tagdict(corpus: &[Vec<TaggedToken>]) -> BTreeMap<String, PosTag> {
    let mut counts: BTreeMap<&str, BTreeMap<PosTag, usize>> = BTreeMap::new();
    for sent in corpus {
        for t in sent {
            *counts.entry(t.token.surface.as_str()).or_default().entry(t.tag).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(word, tags)| {
            let n: usize = tags.values().sum();
            let (tag, top) = tags.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?;
            (n >= DICT_MIN_FREQ && top as f64 / n as f64 >= DICT_MIN_RATIO).then(|| (word.to_string(), tag))
        })
        .collect()
}

/// Averaged-perceptron training; epochs visit sentences in an order shuffled
/// by `seed`, so `(corpus, iterations, seed)` determines the model.
pub fn train_tagger(corpus: &[Vec<TaggedToken>], iterations: u32, seed: u64) -> Result<TaggerModel, LinguaError> {
    if iterations == 0 {
        return Err(LinguaError::EmptyTraining);
    }
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(LinguaError::EmptyCorpus);
    }
    let tagdict = build_tagdict(corpus);
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut params: Vec<[Param; PosTag::COUNT]> = Vec::new();
    let mut clock: u64 = 0;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..iterations {
        for &si in &order {
            let sent = &corpus[si];
            let words: Vec<&str> = sent.iter().map(|t| t.token.surface.as_str()).collect();
            let (mut prev, mut prev2) = (START[0], START[1]);
            let mut open_quote = false;
            for (i, gold) in sent.iter().enumerate() {
                let fixed = punct_tag(words[i], &mut open_quote).or_else(|| tagdict.get(words[i]).copied());
                let guess = match fixed {
                    Some(t) => t,
                    None => {
                        let feats: Vec<usize> = features(i, &words, prev, prev2)
                            .into_iter()
                            .map(|f| {
                                let next = ids.len();
                                *ids.entry(f).or_insert_with(|| {
                                    params.push([Param::default(); PosTag::COUNT]);
                                    next
                                })
                            })
                            .collect();
                        let mut scores = [0.0; PosTag::COUNT];
                        for &f in &feats {
                            for (s, p) in scores.iter_mut().zip(&params[f]) {
                                *s += p.weight;
                            }
                        }
                        let guess = argmax(&scores);
                        clock += 1;
                        if guess != gold.tag {
                            for &f in &feats {
                                for (tag, delta) in [(gold.tag, 1.0), (guess, -1.0)] {
                                    let p = &mut params[f][tag.index()];
                                    p.total += (clock - p.stamp) as f64 * p.weight;
                                    p.stamp = clock;
                                    p.weight += delta;
                                }
                            }
                        }
                        guess
                    }
                };
                prev2 = prev;
                prev = guess.as_str();
            }
        }
        order.shuffle(&mut rng);
    }

    let mut weights = HashMap::with_capacity(ids.len());
    for (feat, id) in ids {
        let row: WeightRow = params[id]
            .iter()
            .enumerate()
            .filter_map(|(t, p)| {
                let total = p.total + (clock - p.stamp) as f64 * p.weight;
                let avg = total / clock.max(1) as f64;
                (avg != 0.0).then_some((PosTag::ALL[t], avg))
            })
            .collect();
        if !row.is_empty() {
            weights.insert(feat, row);
        }
    }
    Ok(TaggerModel { weights, tagdict, iterations })
}

/// Token-level accuracy of `model` against gold tags.
pub fn accuracy(model: &TaggerModel, gold: &[Vec<TaggedToken>]) -> f64 {
    let (mut right, mut total) = (0usize, 0usize);
    for sent in gold {
        let words: Vec<&str> = sent.iter().map(|t| t.token.surface.as_str()).collect();
        for (g, p) in sent.iter().zip(model.tag_words(&words)) {
            right += usize::from(g.tag == p);
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        right as f64 / total as f64
    }
}

/// Parses pre-tagged text: one sentence per line, whitespace-separated
/// `token_TAG` items. Offsets refer to positions within each line.
pub fn parse_pretagged(text: &str) -> Result<Vec<Vec<TaggedToken>>, LinguaError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut sent = Vec::new();
        for tok in tokenize_whitespace(line) {
            let (start, item) = tok;
            let (word, tag) = item.rsplit_once('_').ok_or_else(|| LinguaError::Malformed {
                line: n + 1,
                message: format!("item {item:?} is not token_TAG"),
            })?;
            if word.is_empty() {
                return Err(LinguaError::Malformed { line: n + 1, message: format!("item {item:?} has an empty token") });
            }
            let tag = tag.parse().map_err(|tag| LinguaError::UnknownTag { line: n + 1, tag })?;
            sent.push(TaggedToken { token: Token { surface: word.to_string(), start, end: start + word.len() }, tag });
        }
        if !sent.is_empty() {
            out.push(sent);
        }
    }
    Ok(out)
}

fn tokenize_whitespace(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split(char::is_whitespace)
        .filter(|s| !s.is_empty())
        .map(move |s| (s.as_ptr() as usize - line.as_ptr() as usize, s))
}

pub fn format_pretagged(sentences: &[Vec<TaggedToken>]) -> String {
    let mut out = String::new();
    for s in sentences {
        let items: Vec<String> = s.iter().map(|t| format!("{}_{}", t.token.surface, t.tag)).collect();
        out.push_str(&items.join(" "));
        out.push('\n');
    }
    out
}

const BUNDLED_FIXTURE: &str = include_str!("../data/tagged_sentences.txt");

/// The bundled tagged sentences.
pub fn bundled_corpus() -> Vec<Vec<TaggedToken>> {
    parse_pretagged(BUNDLED_FIXTURE).expect("bundled tagged fixture parses")
}

/// Fixed split of the bundled fixture: every fifth sentence is held out.
pub fn bundled_split() -> (Vec<Vec<TaggedToken>>, Vec<Vec<TaggedToken>>) {
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, s) in bundled_corpus().into_iter().enumerate() {
        if i % 5 == 4 {
            held.push(s);
        } else {
            train.push(s);
        }
    }
    (train, held)
}

/// Counts of each tag, in closed-tagset order.
#[derive(Debug, Clone, PartialEq)]
pub struct TagHistogram {
    counts: [u32; PosTag::COUNT],
    total: u32,
}

impl TagHistogram {
    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn count(&self, tag: PosTag) -> u32 {
        self.counts[tag.index()]
    }

    pub fn frequency(&self, tag: PosTag) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.counts[tag.index()]) / f64::from(self.total)
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        PosTag::ALL.iter().map(|t| self.frequency(*t)).collect()
    }

    pub fn raw_counts(&self) -> Vec<f64> {
        self.counts.iter().map(|c| f64::from(*c)).collect()
    }

    pub fn to_map(&self) -> BTreeMap<PosTag, f64> {
        PosTag::ALL.iter().map(|t| (*t, self.frequency(*t))).collect()
    }
}

pub fn tag_histogram(tagged: &[TaggedToken]) -> TagHistogram {
    let mut counts = [0u32; PosTag::COUNT];
    for t in tagged {
        counts[t.tag.index()] += 1;
    }
    TagHistogram { counts, total: tagged.len() as u32 }
}

//! Free-text processing: tokenisation, gazetteer entity matching, manual
//! sleep/begging keyword topics and LDA topic features.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use thiserror::Error;

mod lda;

pub use lda::{lda_fit, lda_infer, LdaConfig, LdaModel, Vocabulary};

#[derive(Debug, Error)]
pub enum TextError {
    #[error("gazetteer `{0}` is empty")]
    EmptyGazetteer(String),
    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,
    #[error("need at least {needed} non-empty documents, got {got}")]
    TooFewDocuments { needed: usize, got: usize },
    #[error("invalid LDA configuration: {0}")]
    Config(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Artifact(#[from] crate::artifact::ArtifactError),
}

const STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
const LOCATION_TERMS: &str = include_str!("../../resources/location_terms.txt");
const ACTIVITY_TERMS: &str = include_str!("../../resources/activity_terms.txt");
const SLEEP_TERMS: &str = include_str!("../../resources/sleep_terms.txt");
const BEG_TERMS: &str = include_str!("../../resources/beg_terms.txt");

fn term_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

pub fn default_stopwords() -> HashSet<String> {
    term_lines(STOPWORDS).map(str::to_string).collect()
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self { stopwords: default_stopwords() }
    }
}

impl Tokenizer {
    pub fn with_stopwords(stopwords: HashSet<String>) -> Self {
        Self { stopwords }
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Splits on runs of non-alphanumeric characters and drops short tokens and stop words.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.chars().count() >= 2 && !self.stopwords.contains(*t))
            .map(str::to_string)
            .collect()
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}

/// Whitespace token count; `None` counts as zero.
pub fn word_count(text: Option<&str>) -> usize {
    text.map_or(0, |t| t.split_whitespace().count())
}

/// Longest-match phrase matcher over unigrams and bigrams.
#[derive(Debug, Clone)]
pub struct TermMatcher {
    name: String,
    unigrams: HashSet<String>,
    bigrams: HashSet<(String, String)>,
}

impl TermMatcher {
    pub fn from_terms<'a>(name: &str, terms: impl IntoIterator<Item = &'a str>) -> Result<Self, TextError> {
        let mut unigrams = HashSet::new();
        let mut bigrams = HashSet::new();
        for term in terms {
            let words: Vec<&str> = term.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                [w] => {
                    unigrams.insert(w.to_lowercase());
                }
                [a, b] => {
                    bigrams.insert((a.to_lowercase(), b.to_lowercase()));
                }
                // longer phrases are matched on their first two words
                [a, b, ..] => {
                    bigrams.insert((a.to_lowercase(), b.to_lowercase()));
                }
            }
        }
        if unigrams.is_empty() && bigrams.is_empty() {
            return Err(TextError::EmptyGazetteer(name.to_string()));
        }
        Ok(Self { name: name.to_string(), unigrams, bigrams })
    }

    /// One term per line; blank lines and `#` comments ignored.
    pub fn from_file(name: &str, path: &Path) -> Result<Self, TextError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TextError::Io { path: path.display().to_string(), source })?;
        Self::from_terms(name, term_lines(&text))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Calls `hit` for every matched term; bigrams take precedence over their unigrams.
    pub fn scan<S: AsRef<str>>(&self, tokens: &[S], mut hit: impl FnMut(String)) {
        let mut i = 0;
        while i < tokens.len() {
            if i + 1 < tokens.len() {
                let pair = (tokens[i].as_ref().to_string(), tokens[i + 1].as_ref().to_string());
                if self.bigrams.contains(&pair) {
                    hit(format!("{} {}", pair.0, pair.1));
                    i += 2;
                    continue;
                }
            }
            if self.unigrams.contains(tokens[i].as_ref()) {
                hit(tokens[i].as_ref().to_string());
            }
            i += 1;
        }
    }

    pub fn count<S: AsRef<str>>(&self, tokens: &[S]) -> usize {
        let mut n = 0;
        self.scan(tokens, |_| n += 1);
        n
    }

    pub fn matches<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let mut out = Vec::new();
        self.scan(tokens, |t| out.push(t));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Gazetteers {
    pub location: TermMatcher,
    pub activity: TermMatcher,
}

impl Gazetteers {
    pub fn builtin() -> Self {
        Self {
            location: TermMatcher::from_terms("location", term_lines(LOCATION_TERMS)).expect("builtin list"),
            activity: TermMatcher::from_terms("activity", term_lines(ACTIVITY_TERMS)).expect("builtin list"),
        }
    }

    pub fn load(location: &Path, activity: &Path) -> Result<Self, TextError> {
        Ok(Self {
            location: TermMatcher::from_file("location", location)?,
            activity: TermMatcher::from_file("activity", activity)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Entities {
    pub location: BTreeMap<String, usize>,
    pub activity: BTreeMap<String, usize>,
}

impl Entities {
    pub fn location_count(&self) -> usize {
        self.location.values().sum()
    }

    pub fn activity_count(&self) -> usize {
        self.activity.values().sum()
    }
}

pub fn extract_entities<S: AsRef<str>>(tokens: &[S], gazetteers: &Gazetteers) -> Entities {
    let mut e = Entities::default();
    gazetteers.location.scan(tokens, |t| *e.location.entry(t).or_default() += 1);
    gazetteers.activity.scan(tokens, |t| *e.activity.entry(t).or_default() += 1);
    e
}

/// Hand-curated sleep and begging keyword lists.
#[derive(Debug, Clone)]
pub struct ManualTopics {
    pub sleep: TermMatcher,
    pub beg: TermMatcher,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TopicCounts {
    pub sleep: usize,
    pub beg: usize,
}

impl ManualTopics {
    pub fn builtin() -> Self {
        Self {
            sleep: TermMatcher::from_terms("sleep", term_lines(SLEEP_TERMS)).expect("builtin list"),
            beg: TermMatcher::from_terms("beg", term_lines(BEG_TERMS)).expect("builtin list"),
        }
    }

    pub fn counts<S: AsRef<str>>(&self, tokens: &[S]) -> TopicCounts {
        TopicCounts { sleep: self.sleep.count(tokens), beg: self.beg.count(tokens) }
    }
}

/// Term lists exposed for the corpus generator so planted text uses the same vocabulary.
pub fn builtin_terms() -> HashMap<&'static str, Vec<&'static str>> {
    HashMap::from([
        ("location", term_lines(LOCATION_TERMS).collect()),
        ("activity", term_lines(ACTIVITY_TERMS).collect()),
        ("sleep", term_lines(SLEEP_TERMS).collect()),
        ("beg", term_lines(BEG_TERMS).collect()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_drops_short_and_stop_words() {
        assert_eq!(tokenize("sleeping-bag by tesco's door"), vec!["sleeping", "bag", "tesco", "door"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("a a a").is_empty());
    }

    #[test]
    fn word_counts() {
        assert_eq!(word_count(Some("blue coat near bridge")), 4);
        assert_eq!(word_count(Some("")), 0);
        assert_eq!(word_count(None), 0);
        assert_eq!(word_count(Some("  double  spaces ")), 2);
    }

    #[test]
    fn entities_from_gazetteer() {
        let g = Gazetteers::builtin();
        let e = extract_entities(&["tent", "outside", "station"], &g);
        assert_eq!(e.location, BTreeMap::from([("station".to_string(), 1)]));
        assert!(e.activity.is_empty());
        assert_eq!(extract_entities(&["blue", "coat"], &g), Entities::default());
    }

    #[test]
    fn bigram_wins_over_unigram() {
        let g = Gazetteers::builtin();
        let e = extract_entities(&tokenize("near the train station"), &g);
        assert_eq!(e.location, BTreeMap::from([("train station".to_string(), 1)]));
    }

    #[test]
    fn empty_gazetteer_is_rejected() {
        assert!(matches!(TermMatcher::from_terms("x", ["", "  "]), Err(TextError::EmptyGazetteer(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.txt");
        std::fs::write(&p, "# nothing\n\n").unwrap();
        assert!(TermMatcher::from_file("loc", &p).is_err());
    }

    #[test]
    fn manual_topics() {
        let m = ManualTopics::builtin();
        assert_eq!(m.counts(&tokenize("tent and duvet")), TopicCounts { sleep: 2, beg: 0 });
        assert_eq!(m.counts(&tokenize("small change")).beg, 1);
        assert_eq!(m.counts(&tokenize("blue coat")), TopicCounts::default());
    }

    proptest! {
        #[test]
        fn manual_counts_ignore_token_order(idx in proptest::collection::vec(0usize..8, 0..20), seed in any::<u64>()) {
            // unigram-only pool: bigram adjacency is order dependent by definition
            let pool = ["tent", "duvet", "beg", "cup", "coat", "blue", "money", "mattress"];
            let tokens: Vec<&str> = idx.iter().map(|&i| pool[i]).collect();
            let mut shuffled = tokens.clone();
            let n = shuffled.len();
            for i in 0..n {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
                shuffled.swap(i, j);
            }
            let m = ManualTopics::builtin();
            prop_assert_eq!(m.counts(&tokens), m.counts(&shuffled));
        }
    }
}

//! Control-code classification of perturbations from POS tags and
//! dependency trees.
//!
//! Classification is an ordered rule cascade; the first rule that fires wins:
//!
//! 1. negation — an edited token is a negation word or carries a `neg` relation
//! 2. quantifier — an edited token is a numeral or a quantifier word
//! 3. shuffle — removed and added content words overlap
//! 4. lexical — one token (or one noun chunk) swapped with an identical POS sequence
//! 5. insert / 6. delete — short pure insertions/deletions, rest of the tree intact
//! 7. resemantic — short phrase replacement, rest of the tree intact
//! 8. restructure — relations outside the edits changed
//! 9. global — nothing fired, or the edit distance is too large

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, Token};
use crate::diff::{EditKind, EditSpan, Perturbation, TokenBag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlCode {
    Negation,
    Quantifier,
    Shuffle,
    Lexical,
    Resemantic,
    Insert,
    Delete,
    Restructure,
    Global,
}

impl ControlCode {
    /// The eight steerable codes, in cascade order.
    pub const STEERABLE: [ControlCode; 8] = [
        ControlCode::Negation,
        ControlCode::Quantifier,
        ControlCode::Shuffle,
        ControlCode::Lexical,
        ControlCode::Resemantic,
        ControlCode::Insert,
        ControlCode::Delete,
        ControlCode::Restructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControlCode::Negation => "negation",
            ControlCode::Quantifier => "quantifier",
            ControlCode::Shuffle => "shuffle",
            ControlCode::Lexical => "lexical",
            ControlCode::Resemantic => "resemantic",
            ControlCode::Insert => "insert",
            ControlCode::Delete => "delete",
            ControlCode::Restructure => "restructure",
            ControlCode::Global => "global",
        }
    }
}

impl fmt::Display for ControlCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown control code `{0}`")]
pub struct UnknownCode(pub String);

impl FromStr for ControlCode {
    type Err = UnknownCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControlCode::STEERABLE
            .iter()
            .chain(std::iter::once(&ControlCode::Global))
            .find(|c| c.as_str() == s)
            .copied()
            .ok_or_else(|| UnknownCode(s.to_string()))
    }
}

/// Scores how much replacing `removed` by `added` shifts meaning.
pub trait SemanticShift: Send + Sync {
    /// `None` when no score is available (the caller then falls back to span length).
    fn shift(&self, removed: &str, added: &str) -> Option<f64>;
}

/// No embedding backend: always defers to the length fallback.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoShift;

impl SemanticShift for NoShift {
    fn shift(&self, _removed: &str, _added: &str) -> Option<f64> {
        None
    }
}

/// Produces sentence embeddings for a batch of texts.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Option<Vec<Vec<f32>>>;
}

/// Semantic shift as one minus the cosine similarity of span embeddings.
pub struct EmbeddingShift<E: Embedder>(pub E);

impl<E: Embedder> SemanticShift for EmbeddingShift<E> {
    fn shift(&self, removed: &str, added: &str) -> Option<f64> {
        let v = self.0.embed(&[removed.to_string(), added.to_string()])?;
        let (a, b) = (v.first()?, v.get(1)?);
        let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Some(1.0);
        }
        Some(1.0 - dot / (na * nb))
    }
}

pub const DEFAULT_NEGATION: [&str; 12] = [
    "not", "n't", "no", "never", "none", "nothing", "nobody", "nowhere", "neither", "nor", "without", "supposedly",
];

pub const DEFAULT_QUANTIFIER: [&str; 14] = [
    "all", "some", "many", "few", "most", "more", "less", "at least", "at most", "exactly", "only", "every", "each",
    "no",
];

/// Universal POS tags treated as content words for the shuffle overlap.
const CONTENT_POS: [&str; 6] = ["NOUN", "PROPN", "VERB", "ADJ", "ADV", "NUM"];

#[derive(Clone)]
pub struct ClassifierConfig {
    pub negation_lexicon: BTreeSet<String>,
    pub quantifier_lexicon: BTreeSet<String>,
    pub shuffle_overlap_min: f64,
    pub global_edit_max: f64,
    /// Longest span (in tokens) still counted as a short phrase.
    pub short_phrase_max: usize,
    pub semantic_shift: Arc<dyn SemanticShift>,
}

impl fmt::Debug for ClassifierConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassifierConfig")
            .field("negation_lexicon", &self.negation_lexicon)
            .field("quantifier_lexicon", &self.quantifier_lexicon)
            .field("shuffle_overlap_min", &self.shuffle_overlap_min)
            .field("global_edit_max", &self.global_edit_max)
            .field("short_phrase_max", &self.short_phrase_max)
            .finish_non_exhaustive()
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            negation_lexicon: DEFAULT_NEGATION.iter().map(|s| s.to_string()).collect(),
            quantifier_lexicon: DEFAULT_QUANTIFIER.iter().map(|s| s.to_string()).collect(),
            shuffle_overlap_min: 0.5,
            global_edit_max: 0.6,
            short_phrase_max: 4,
            semantic_shift: Arc::new(NoShift),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{name} must lie in (0, 1], got {value}")]
    Threshold { name: &'static str, value: f64 },
    #[error("short_phrase_max must be at least 1")]
    PhraseLength,
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [("shuffle_overlap_min", self.shuffle_overlap_min), ("global_edit_max", self.global_edit_max)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ConfigError::Threshold { name, value });
            }
        }
        if self.short_phrase_max == 0 {
            return Err(ConfigError::PhraseLength);
        }
        Ok(())
    }
}

/// Parses a plain-text word list: one entry per line, `#` comments, blank lines ignored.
pub fn load_lexicon(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Tokens touched by a group of spans, on both sides.
struct SpanTokens<'a> {
    removed: Vec<&'a Token>,
    added: Vec<&'a Token>,
}

impl<'a> SpanTokens<'a> {
    fn collect(p: &'a Perturbation, spans: &[&EditSpan]) -> Self {
        let removed = spans.iter().flat_map(|e| &p.original.tokens[e.x_range.clone()]).collect();
        let added = spans.iter().flat_map(|e| &p.revised.tokens[e.xhat_range.clone()]).collect();
        SpanTokens { removed, added }
    }

    fn all(&self) -> impl Iterator<Item = &&'a Token> {
        self.removed.iter().chain(self.added.iter())
    }
}

fn is_content(t: &Token) -> bool {
    if CONTENT_POS.contains(&t.upos.as_str()) {
        return true;
    }
    // untagged tokens from projected/shallow revisions
    t.upos == "X" && t.surface.chars().any(char::is_alphanumeric) && !FUNCTION_WORDS.contains(&t.folded().as_str())
}

const FUNCTION_WORDS: [&str; 24] = [
    "a", "an", "the", "is", "are", "was", "were", "be", "to", "of", "in", "on", "at", "by", "for", "with", "and", "or",
    "it", "this", "that", "as", "from", "but",
];

fn content_bag<'a>(tokens: impl Iterator<Item = &'a &'a Token>) -> TokenBag {
    tokens.filter(|t| is_content(t)).map(|t| t.folded()).collect()
}

/// True when `phrase` (space-separated, lower-case) occurs as a whole-word run in `words`.
fn contains_phrase(words: &[String], phrase: &str) -> bool {
    let parts: Vec<&str> = phrase.split_whitespace().collect();
    !parts.is_empty() && words.windows(parts.len()).any(|w| w.iter().zip(&parts).all(|(a, b)| a == b))
}

fn lexicon_hit(tokens: &[&Token], lexicon: &BTreeSet<String>) -> bool {
    let words: Vec<String> = tokens.iter().map(|t| t.folded()).collect();
    lexicon.iter().any(|entry| contains_phrase(&words, entry))
}

/// Root-path relations of every unedited token agree across the pair.
pub fn tree_intact(p: &Perturbation) -> bool {
    p.matched_pairs()
        .into_iter()
        .all(|(i, j)| p.original.root_path(i) == p.revised.root_path(j))
}

fn pos_sequences_match(a: &[Token], b: &[Token]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.upos == y.upos || x.upos == "X" || y.upos == "X")
}

fn is_noun_chunk(s: &Sentence, range: &std::ops::Range<usize>) -> bool {
    s.noun_chunks().iter().any(|c| c == range)
}

/// Runs the cascade over `spans`, measuring shuffle overlap against the
/// removed/added content words of the whole perturbation.
fn cascade(p: &Perturbation, spans: &[&EditSpan], intact: bool, cfg: &ClassifierConfig) -> ControlCode {
    if spans.is_empty() {
        return ControlCode::Global;
    }
    let toks = SpanTokens::collect(p, spans);

    // 1. negation
    let neg_rel = toks.all().any(|t| t.deprel == "neg" || t.deprel.starts_with("neg:"));
    if neg_rel || lexicon_hit(&toks.removed, &cfg.negation_lexicon) || lexicon_hit(&toks.added, &cfg.negation_lexicon) {
        return ControlCode::Negation;
    }

    // 2. quantifier
    let numeral = toks.all().any(|t| t.upos == "NUM" || t.xpos == "CD");
    if numeral || lexicon_hit(&toks.removed, &cfg.quantifier_lexicon) || lexicon_hit(&toks.added, &cfg.quantifier_lexicon) {
        return ControlCode::Quantifier;
    }

    // 3. shuffle: Dice overlap of content words against the whole pair
    let all_edits: Vec<&EditSpan> = p.edits.iter().collect();
    let whole = SpanTokens::collect(p, &all_edits);
    let total_removed = content_bag(whole.removed.iter());
    let total_added = content_bag(whole.added.iter());
    let span_removed = content_bag(toks.removed.iter());
    let span_added = content_bag(toks.added.iter());
    let denom = span_removed.len() + span_added.len();
    if denom > 0 {
        let overlap = span_removed.overlap(&total_added) + span_added.overlap(&total_removed);
        if overlap as f64 / denom as f64 >= cfg.shuffle_overlap_min {
            return ControlCode::Shuffle;
        }
    }

    // 4. lexical
    if let [e] = spans {
        if e.kind == EditKind::Replace {
            let a = &p.original.tokens[e.x_range.clone()];
            let b = &p.revised.tokens[e.xhat_range.clone()];
            let one_token = a.len() == 1 && b.len() == 1;
            let chunk = is_noun_chunk(&p.original, &e.x_range) || is_noun_chunk(&p.revised, &e.xhat_range);
            if (one_token || chunk) && pos_sequences_match(a, b) {
                return ControlCode::Lexical;
            }
        }
    }

    let short = spans.iter().all(|e| e.x_range.len().max(e.xhat_range.len()) <= cfg.short_phrase_max);
    if short && intact {
        // 5. insert / 6. delete
        if spans.iter().all(|e| e.kind == EditKind::Insert) {
            return ControlCode::Insert;
        }
        if spans.iter().all(|e| e.kind == EditKind::Delete) {
            return ControlCode::Delete;
        }
        // 7. resemantic
        return ControlCode::Resemantic;
    }

    // 8. restructure
    if !intact {
        return ControlCode::Restructure;
    }
    ControlCode::Global
}

/// Classifies the perturbation as a whole.
pub fn classify(p: &Perturbation, cfg: &ClassifierConfig) -> ControlCode {
    if p.edits.is_empty() || p.levenshtein_norm() > cfg.global_edit_max {
        return ControlCode::Global;
    }
    let spans: Vec<&EditSpan> = p.edits.iter().collect();
    cascade(p, &spans, tree_intact(p), cfg)
}

/// Per-span code, with shuffle overlap measured against the whole pair.
pub fn classify_span(p: &Perturbation, span: &EditSpan, cfg: &ClassifierConfig) -> ControlCode {
    cascade(p, &[span], tree_intact(p), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanDecision {
    pub span: EditSpan,
    pub code: ControlCode,
    /// Ranking score: semantic shift, or normalized span length as fallback.
    pub score: f64,
}

/// Classifies every span and ranks them by semantic shift (fallback: normalized
/// span length), most significant first. Ties keep cascade order, then span order.
pub fn rank_spans(p: &Perturbation, cfg: &ClassifierConfig) -> Vec<SpanDecision> {
    let intact = tree_intact(p);
    let longest = p.original.len().max(p.revised.len()).max(1) as f64;
    let mut shifts = Vec::with_capacity(p.edits.len());
    for e in &p.edits {
        let removed = p.original.span_text(&e.x_range);
        let added = p.revised.span_text(&e.xhat_range);
        shifts.push(cfg.semantic_shift.shift(&removed, &added));
    }
    let use_shift = !shifts.is_empty() && shifts.iter().all(Option::is_some);
    let mut out: Vec<(usize, SpanDecision)> = p
        .edits
        .iter()
        .zip(shifts)
        .enumerate()
        .map(|(k, (e, shift))| {
            let score = match (use_shift, shift) {
                (true, Some(s)) => s,
                _ => e.x_range.len().max(e.xhat_range.len()) as f64 / longest,
            };
            (k, SpanDecision { span: e.clone(), code: cascade(p, &[e], intact, cfg), score })
        })
        .collect();
    out.sort_by(|(ka, a), (kb, b)| {
        let global = |d: &SpanDecision| d.code == ControlCode::Global;
        global(a)
            .cmp(&global(b))
            .then(b.score.total_cmp(&a.score))
            .then(a.code.cmp(&b.code))
            .then(ka.cmp(kb))
    });
    out.into_iter().map(|(_, d)| d).collect()
}

/// The code of the most significant span; a single-span pair reduces to [`classify`].
pub fn primary_code(p: &Perturbation, cfg: &ClassifierConfig) -> ControlCode {
    if p.edits.len() <= 1 {
        return classify(p, cfg);
    }
    if p.levenshtein_norm() > cfg.global_edit_max {
        return ControlCode::Global;
    }
    rank_spans(p, cfg).first().map(|d| d.code).unwrap_or(ControlCode::Global)
}

/// One classifier decision as exported to JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub id: String,
    pub code: ControlCode,
    pub spans: Vec<SpanDecision>,
}

pub fn decide(id: impl Into<String>, p: &Perturbation, cfg: &ClassifierConfig) -> Decision {
    let mut spans = rank_spans(p, cfg);
    spans.sort_by_key(|d| d.span.x_range.start);
    Decision { id: id.into(), code: primary_code(p, cfg), spans }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    #[test]
    fn code_names_round_trip() {
        for c in ControlCode::STEERABLE.iter().chain([ControlCode::Global].iter()) {
            assert_eq!(c.as_str().parse::<ControlCode>().unwrap(), *c);
            assert_eq!(serde_json::to_string(c).unwrap(), format!("\"{c}\""));
        }
        assert!("blank".parse::<ControlCode>().is_err());
    }

    #[test]
    fn lexicon_loading() {
        let lex = load_lexicon("# negations\nnot\n\n  Never \nat least # multiword\n");
        assert_eq!(lex, BTreeSet::from(["not".to_string(), "never".to_string(), "at least".to_string()]));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ClassifierConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.global_edit_max = 0.0;
        assert!(cfg.validate().is_err());
        cfg.global_edit_max = 1.5;
        assert!(cfg.validate().is_err());
    }

    fn pair(a: &str, b: &str) -> Perturbation {
        Perturbation::new(Sentence::shallow("a", a), Sentence::shallow("b", b))
    }

    #[test]
    fn identical_pair_is_global() {
        assert_eq!(classify(&pair("a b c", "a b c"), &ClassifierConfig::default()), ControlCode::Global);
    }

    #[test]
    fn too_large_edit_is_global() {
        let p = pair("the cat sat on the mat", "a dog ran across my yard");
        assert_eq!(classify(&p, &ClassifierConfig::default()), ControlCode::Global);
    }

    #[test]
    fn multiword_quantifier_entry() {
        let p = pair("two women are at a bar", "at least two women are at a bar");
        assert_eq!(classify(&p, &ClassifierConfig::default()), ControlCode::Quantifier);
        let p = pair("women are at a bar", "at least women are at a bar");
        assert_eq!(classify(&p, &ClassifierConfig::default()), ControlCode::Quantifier);
    }

    #[test]
    fn semantic_shift_overrides_length() {
        struct Fixed;
        impl SemanticShift for Fixed {
            fn shift(&self, removed: &str, _added: &str) -> Option<f64> {
                Some(if removed == "kids" { 0.9 } else { 0.1 })
            }
        }
        let p = pair("It is great for kids .", "It is not great for children .");
        let cfg = ClassifierConfig::default();
        assert_eq!(primary_code(&p, &cfg), ControlCode::Negation);
        let cfg = ClassifierConfig { semantic_shift: Arc::new(Fixed), ..cfg };
        assert_eq!(primary_code(&p, &cfg), ControlCode::Lexical);
    }

    #[test]
    fn embedding_shift_is_cosine_distance() {
        struct Table;
        impl Embedder for Table {
            fn embed(&self, texts: &[String]) -> Option<Vec<Vec<f32>>> {
                Some(texts.iter().map(|t| if t == "a" { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect())
            }
        }
        let s = EmbeddingShift(Table);
        assert_eq!(s.shift("a", "a"), Some(0.0));
        assert_eq!(s.shift("a", "b"), Some(1.0));
    }
}

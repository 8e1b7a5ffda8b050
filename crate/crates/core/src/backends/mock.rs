//! Deterministic offline backend.
//!
//! Generation recovers the blanked text from the prompt and rewrites it with a
//! small rule set per control code; scoring sums log unigram probabilities from
//! a bundled table; prediction applies lexicon heuristics for sentiment, NLI
//! and duplicate-question tasks.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    BackendError, FluencyScore, GenerationParams, Generator, PredictionRecord, Predictor, Scorer, TaskInput,
};
use crate::corpus::{normalize_spaces, split_words, Sentence};
use crate::ctrlcode::ControlCode;
use crate::prompting::{blank_template, parse_prompt, ANSWER, BLANK, END, SEP};

/// Log-probability assigned to words missing from the unigram table.
pub const UNKNOWN_LOGPROB: f64 = -10.0;

const UNIGRAMS: &str = include_str!("../../data/unigrams.tsv");

const VARIANTS: usize = 5;

const NEGATORS: [&str; 9] = ["not", "n't", "never", "no", "hardly", "nobody", "none", "nothing", "nowhere"];
const NEGATION_FILLS: [&str; VARIANTS] = ["not", "never", "not really", "no longer", "not very"];
const QUANTIFIER_FILLS: [&str; VARIANTS] = ["some", "many", "at least two", "few", "all"];
const NUMBERS: [&str; 10] = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
const INSERT_FILLS: [&str; VARIANTS] = ["really", "very", "also", "still", "just"];
const RESEMANTIC_FILLS: [&str; VARIANTS] = ["in a strange way", "with great care", "for a while", "at the park", "by the river"];
const GENERIC_WORDS: [&str; VARIANTS] = ["something", "someone", "everyone", "this", "that"];

/// Substitution groups for lexical rewrites.
const LEXICAL_GROUPS: [&[&str]; 9] = [
    &["great", "terrible", "good", "bad", "funny", "boring", "wonderful", "dull", "exciting", "scary"],
    &["happy", "sad", "small", "big", "old", "young", "tall", "short", "quiet", "busy", "little", "clever"],
    &["dog", "cat", "woman", "man", "girl", "boy", "child", "teacher", "student", "doctor", "farmer", "bird"],
    &["dogs", "cats", "women", "men", "girls", "boys", "children", "kids", "teachers", "students", "adults"],
    &["park", "garden", "kitchen", "street", "house", "school", "river", "room", "library", "office"],
    &["running", "walking", "sleeping", "eating", "reading", "singing", "playing", "working", "sitting", "waiting"],
    &["chased", "followed", "saw", "watched", "helped", "called", "found", "painted", "liked", "visited"],
    &["embraced", "attacked", "hugged", "kissed", "pushed"],
    &["in", "near", "behind", "beside", "outside"],
];

const POSITIVE: [&str; 14] = [
    "great", "good", "wonderful", "funny", "exciting", "happy", "love", "like", "liked", "best", "fine", "beautiful",
    "fascinating", "charming",
];
const NEGATIVE: [&str; 12] =
    ["terrible", "bad", "boring", "dull", "scary", "awful", "hate", "worst", "flawed", "annoying", "sad", "mistakes"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MockTask {
    /// Labels: 0 negative, 1 positive.
    #[default]
    Sentiment,
    /// Labels: 0 entailment, 1 neutral, 2 contradiction.
    Nli,
    /// Labels: 0 not duplicate, 1 duplicate.
    Qqp,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    task: MockTask,
    unigrams: HashMap<String, f64>,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new(MockTask::default())
    }
}

impl MockBackend {
    pub fn new(task: MockTask) -> Self {
        let unigrams = UNIGRAMS
            .lines()
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| {
                let (w, lp) = l.split_once('\t')?;
                Some((w.to_string(), lp.trim().parse().ok()?))
            })
            .collect();
        MockBackend { task, unigrams }
    }

    pub fn task(&self) -> MockTask {
        self.task
    }

    pub fn logprob(&self, word: &str) -> f64 {
        self.unigrams.get(&word.to_lowercase()).copied().unwrap_or(UNKNOWN_LOGPROB)
    }

    fn score_one(&self, text: &str) -> FluencyScore {
        let tokens = split_words(text)
            .into_iter()
            .map(|p| {
                let w = &text[p.range];
                (w.to_string(), self.logprob(w))
            })
            .collect();
        FluencyScore::from_tokens(tokens)
    }

    fn predict_one(&self, input: &TaskInput) -> Result<PredictionRecord, BackendError> {
        match (self.task, input) {
            (MockTask::Sentiment, TaskInput::Single(text)) => Ok(sentiment(text)),
            (MockTask::Nli, TaskInput::Pair { premise, hypothesis }) => Ok(nli(premise, hypothesis)),
            (MockTask::Qqp, TaskInput::QuestionPair { question1, question2 }) => Ok(qqp(question1, question2)),
            (task, other) => Err(BackendError::Shape(format!("{task:?} task cannot take input {other:?}"))),
        }
    }
}

fn words(text: &str) -> Vec<String> {
    split_words(text).into_iter().map(|p| text[p.range].to_lowercase()).collect()
}

fn sentiment(text: &str) -> PredictionRecord {
    let w = words(text);
    let mut score = 0.0_f64;
    for (i, word) in w.iter().enumerate() {
        let polarity = if POSITIVE.contains(&word.as_str()) {
            1.0
        } else if NEGATIVE.contains(&word.as_str()) {
            -1.0
        } else {
            continue;
        };
        let negated = w[i.saturating_sub(3)..i].iter().any(|p| NEGATORS.contains(&p.as_str()));
        score += if negated { -polarity } else { polarity };
    }
    // softsign squashing: only correctly rounded arithmetic, so identical on every platform
    let z = 1.5 * score + 0.25;
    let p = 0.5 + 0.5 * z / (1.0 + z.abs());
    PredictionRecord::from_probs(vec![1.0 - p, p])
}

fn has_negation(w: &[String]) -> bool {
    w.iter().any(|x| NEGATORS.contains(&x.as_str()))
}

fn content_set(w: &[String]) -> BTreeSet<&str> {
    w.iter().map(String::as_str).filter(|x| x.chars().any(char::is_alphanumeric)).collect()
}

fn nli(premise: &str, hypothesis: &str) -> PredictionRecord {
    let (p, h) = (words(premise), words(hypothesis));
    let (ps, hs) = (content_set(&p), content_set(&h));
    let covered = if hs.is_empty() { 1.0 } else { hs.iter().filter(|x| ps.contains(*x)).count() as f64 / hs.len() as f64 };
    let probs = if has_negation(&p) != has_negation(&h) {
        vec![0.05, 0.15, 0.8]
    } else if covered >= 0.999 {
        vec![0.8, 0.15, 0.05]
    } else {
        let e = 0.5 * covered;
        vec![e, 0.9 - e, 0.1]
    };
    PredictionRecord::from_probs(probs)
}

fn qqp(q1: &str, q2: &str) -> PredictionRecord {
    let (a, b) = (words(q1), words(q2));
    let (sa, sb) = (content_set(&a), content_set(&b));
    let union = sa.union(&sb).count();
    let jaccard = if union == 0 { 1.0 } else { sa.intersection(&sb).count() as f64 / union as f64 };
    let dup = if has_negation(&a) != has_negation(&b) { jaccard * 0.5 } else { jaccard };
    PredictionRecord::from_probs(vec![1.0 - dup, dup])
}

/// Recovers the original text under each blank by aligning the template's
/// literal pieces against `original`.
pub fn recover_blanks(template: &str, original: &str) -> Option<Vec<String>> {
    let orig = normalize_spaces(original);
    let pieces: Vec<String> = template.split(BLANK).map(|p| normalize_spaces(p).trim().to_string()).collect();
    let first = pieces.first()?;
    if !orig.starts_with(first.as_str()) {
        return None;
    }
    let mut pos = first.len();
    let mut out = Vec::with_capacity(pieces.len() - 1);
    for (k, piece) in pieces.iter().enumerate().skip(1) {
        let rest = &orig[pos..];
        if k == pieces.len() - 1 {
            let cut = rest.len().checked_sub(piece.len())?;
            if !rest.ends_with(piece.as_str()) {
                return None;
            }
            out.push(rest[..cut].trim().to_string());
        } else if piece.is_empty() {
            out.push(String::new());
        } else {
            let at = rest.find(piece.as_str())?;
            out.push(rest[..at].trim().to_string());
            pos += at + piece.len();
        }
    }
    Some(out)
}

fn join(words: &[&str]) -> String {
    words.iter().filter(|w| !w.is_empty()).copied().collect::<Vec<_>>().join(" ")
}

fn lexical_word(word: &str, r: usize) -> Option<String> {
    let lower = word.to_lowercase();
    let group = LEXICAL_GROUPS.iter().find(|g| g.contains(&lower.as_str()))?;
    let at = group.iter().position(|w| *w == lower)?;
    let pick = group[(at + 1 + r) % group.len()];
    let pick = if pick == lower { group[(at + 2 + r) % group.len()] } else { pick };
    let capitalized = word.chars().next().is_some_and(char::is_uppercase);
    Some(if capitalized { capitalize(pick) } else { pick.to_string() })
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn lexical(content: &str, r: usize) -> String {
    let ws: Vec<&str> = content.split_whitespace().collect();
    let mut changed = false;
    let mut out: Vec<String> = ws
        .iter()
        .map(|w| match lexical_word(w, r) {
            Some(x) => {
                changed = true;
                x
            }
            None => w.to_string(),
        })
        .collect();
    if !changed {
        match out.last_mut() {
            Some(last) => *last = GENERIC_WORDS[r].to_string(),
            None => out.push(GENERIC_WORDS[r].to_string()),
        }
    }
    out.join(" ")
}

/// Rewrites the blank contents for one variant.
fn fills_for(code: ControlCode, contents: &[String], r: usize) -> Vec<String> {
    let mut fills: Vec<String> = contents.to_vec();
    let Some(first) = contents.first() else { return fills };
    let ws: Vec<&str> = first.split_whitespace().collect();
    match code {
        ControlCode::Negation => {
            let lower: Vec<String> = ws.iter().map(|w| w.to_lowercase()).collect();
            fills[0] = if has_negation(&lower) {
                join(&ws.iter().zip(&lower).filter(|(_, l)| !NEGATORS.contains(&l.as_str())).map(|(w, _)| *w).collect::<Vec<_>>())
            } else {
                join(&[NEGATION_FILLS[r], first])
            };
        }
        ControlCode::Quantifier => {
            let num = ws.iter().position(|w| NUMBERS.contains(&w.to_lowercase().as_str()) || w.chars().all(|c| c.is_ascii_digit()));
            fills[0] = match num {
                Some(i) => {
                    let cur = NUMBERS.iter().position(|n| *n == ws[i].to_lowercase()).unwrap_or(0);
                    let mut v = ws.clone();
                    let replacement = NUMBERS[(cur + 1 + r) % NUMBERS.len()];
                    v[i] = replacement;
                    join(&v)
                }
                None => join(&[QUANTIFIER_FILLS[r], first]),
            };
        }
        ControlCode::Shuffle => {
            if contents.len() >= 2 {
                let k = contents.len();
                let shift = 1 + r % (k - 1);
                fills = (0..k).map(|i| contents[(i + shift) % k].clone()).collect();
            } else if ws.len() >= 2 {
                let mut v = ws.clone();
                v.rotate_left(1 + r % (ws.len() - 1));
                fills[0] = join(&v);
            }
        }
        ControlCode::Lexical | ControlCode::Global => {
            fills = contents.iter().map(|c| lexical(c, r)).collect();
            if code == ControlCode::Global {
                fills[0] = join(&[NEGATION_FILLS[r], &fills[0]]);
            }
        }
        ControlCode::Resemantic => fills[0] = RESEMANTIC_FILLS[r].to_string(),
        ControlCode::Insert => fills[0] = join(&[INSERT_FILLS[r], first]),
        ControlCode::Delete => {
            fills[0] = match r {
                0 => String::new(),
                1 if ws.len() > 1 => join(&ws[1..]),
                2 if ws.len() > 1 => join(&ws[..ws.len() - 1]),
                _ => String::new(),
            };
        }
        ControlCode::Restructure => {
            fills[0] = match r {
                0 => join(&["that", first]),
                1 => join(&[first, "that was"]),
                2 => join(&["because", first]),
                3 => join(&["while", first]),
                _ => join(&["and then", first]),
            };
        }
    }
    fills
}

fn encode_fills(fills: &[String]) -> String {
    let mut out: Vec<String> = fills.iter().map(|f| join(&[f, ANSWER])).collect();
    out.push(END.to_string());
    out.join(" ")
}

impl Generator for MockBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Vec<String>, BackendError> {
        params.validate()?;
        let parsed = parse_prompt(prompt).map_err(|e| BackendError::Invalid(e.to_string()))?;
        let offset = params.seed.unwrap_or(0) as usize % VARIANTS;
        let mut outputs: Vec<String> = Vec::new();
        for r in 0..VARIANTS {
            if outputs.len() >= params.num_return {
                break;
            }
            let v = (r + offset) % VARIANTS;
            let out = match &parsed.blanked_template {
                Some(template) => {
                    let contents = recover_blanks(template, &parsed.original_text)
                        .ok_or_else(|| BackendError::Invalid("template does not match the original text".into()))?;
                    let code = parsed.code.unwrap_or(ControlCode::STEERABLE[v % ControlCode::STEERABLE.len()]);
                    encode_fills(&fills_for(code, &contents, v))
                }
                None => {
                    // choose a blank ourselves: the longest word
                    let x = Sentence::shallow("x", &parsed.original_text);
                    let target = (0..x.len()).rev().max_by_key(|&i| x.tokens[i].surface.len()).unwrap_or(0);
                    let template = blank_template(&x.tokens, &[target..target + 1]);
                    let code = parsed.code.unwrap_or(ControlCode::STEERABLE[v % ControlCode::STEERABLE.len()]);
                    let fills = fills_for(code, &[x.tokens[target].surface.clone()], v);
                    format!("[{code}] {template} {SEP} {}", encode_fills(&fills))
                }
            };
            if !outputs.contains(&out) {
                outputs.push(out);
            }
        }
        Ok(outputs)
    }
}

impl Scorer for MockBackend {
    fn score(&self, texts: &[String]) -> Result<Vec<FluencyScore>, BackendError> {
        Ok(texts.iter().map(|t| self.score_one(t)).collect())
    }
}

impl Predictor for MockBackend {
    fn predict(&self, inputs: &[TaskInput]) -> Result<Vec<PredictionRecord>, BackendError> {
        inputs.iter().map(|i| self.predict_one(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{parse_continuation, parse_generation, Prompt};

    fn beam(n: usize) -> GenerationParams {
        GenerationParams { num_return: n, beam_width: Some(n.max(5)), ..Default::default() }
    }

    #[test]
    fn recovers_blank_contents() {
        assert_eq!(
            recover_blanks("It is [BLANK] great for [BLANK].", "It is great for kids.").unwrap(),
            vec!["".to_string(), "kids".to_string()]
        );
        assert_eq!(recover_blanks("[BLANK] b c", "a b c").unwrap(), vec!["a".to_string()]);
        assert_eq!(recover_blanks("x [BLANK]", "a b c"), None);
    }

    #[test]
    fn negation_prompt_yields_negated_sentence() {
        let mock = MockBackend::default();
        let prompt = Prompt {
            original_text: "It is great for kids.".into(),
            code: Some(ControlCode::Negation),
            blanked_template: Some("It is [BLANK] great for kids.".into()),
            answers: None,
        };
        let outs = mock.generate(&prompt.render().unwrap(), &beam(5)).unwrap();
        assert_eq!(outs[0], "not [ANSWER] <|endoftext|>");
        let texts: Vec<String> =
            outs.iter().map(|o| parse_generation(prompt.blanked_template.as_ref().unwrap(), o).unwrap()).collect();
        assert!(texts.contains(&"It is not great for kids.".to_string()));
        assert_eq!(outs, mock.generate(&prompt.render().unwrap(), &beam(5)).unwrap());
    }

    #[test]
    fn num_return_bounds_outputs() {
        let mock = MockBackend::default();
        let prompt = "A dog is embraced by the woman . <|perturb|> [lexical] A [BLANK] is embraced by the woman .";
        let outs = mock.generate(prompt, &beam(3)).unwrap();
        assert_eq!(outs.len(), 3);
        assert_eq!(outs.iter().collect::<BTreeSet<_>>().len(), 3);
    }

    #[test]
    fn bare_prompt_produces_continuation() {
        let mock = MockBackend::default();
        let outs = mock.generate("It is great for kids. <|perturb|> [negation]", &beam(2)).unwrap();
        let (code, text) = parse_continuation(&outs[0]).unwrap();
        assert_eq!(code, Some(ControlCode::Negation));
        assert_ne!(text, "It is great for kids.");
    }

    #[test]
    fn mismatched_template_is_an_error() {
        let mock = MockBackend::default();
        let err = mock.generate("a b <|perturb|> [negation] x [BLANK]", &beam(1)).unwrap_err();
        assert!(matches!(err, BackendError::Invalid(_)));
    }

    #[test]
    fn scoring_is_additive() {
        let mock = MockBackend::default();
        let s = mock.score(&["".into(), "the dog".into(), "the dog the dog".into(), "zzzq".into()]).unwrap();
        assert_eq!(s[0].total_logprob, 0.0);
        assert!(s[0].token_logprobs.is_empty());
        assert_eq!(s[2].total_logprob, 2.0 * s[1].total_logprob);
        assert_eq!(s[3].total_logprob, UNKNOWN_LOGPROB);
        assert!(s.iter().all(FluencyScore::is_consistent));
    }

    #[test]
    fn sentiment_negation_flips() {
        let mock = MockBackend::default();
        let p = mock
            .predict(&[TaskInput::Single("It is great for kids.".into()), TaskInput::Single("It is not great for kids.".into())])
            .unwrap();
        assert_eq!((p[0].label, p[1].label), (1, 0));
        assert!(p.iter().all(|r| r.validate().is_ok()));
        assert!(mock.predict(&[]).unwrap().is_empty());
    }

    #[test]
    fn shape_mismatch() {
        let mock = MockBackend::new(MockTask::Nli);
        assert!(matches!(mock.predict(&[TaskInput::Single("x".into())]), Err(BackendError::Shape(_))));
        let r = mock
            .predict(&[TaskInput::Pair { premise: "A man sleeps .".into(), hypothesis: "A man does not sleep .".into() }])
            .unwrap();
        assert_eq!(r[0].label, 2);
    }
}

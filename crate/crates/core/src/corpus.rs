//! Dependency-parsed sentences: CoNLL-U ingestion, tree queries and the
//! light projections used when a revision has no parse of its own.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::BufRead;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open range of token indices.
pub type TokenRange = Range<usize>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: expected 10 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: invalid token id `{id}`")]
    BadId { line: usize, id: String },
    #[error("line {line}: token ids must be consecutive starting at 1 (expected {expected}, found {found})")]
    NonConsecutive { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid head `{head}`")]
    BadHead { line: usize, head: String },
    #[error("line {line}: head {head} out of range for a {len}-token sentence")]
    HeadOutOfRange { line: usize, head: usize, len: usize },
    #[error("line {line}: token is its own head")]
    SelfHead { line: usize },
    #[error("line {line}: empty surface form")]
    EmptySurface { line: usize },
    #[error("line {line}: cyclic head links through token {token}")]
    Cycle { line: usize, token: usize },
    #[error("line {line}: {count} root tokens (exactly one required)")]
    RootCount { line: usize, count: usize },
    #[error("line {line}: duplicate sentence id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: sentence has no tokens")]
    EmptySentence { line: usize },
    #[error("token index {index} out of range ({len} tokens)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("jsonl line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

/// Where a sentence's annotation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    /// Read from a full parse (CoNLL-U).
    #[default]
    Parsed,
    /// Derived from a parsed sentence by splicing in generated text.
    Projected,
    /// Whitespace/punctuation split with a flat tree; no real parse.
    Shallow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub surface: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    #[serde(default = "underscore")]
    pub feats: String,
    /// Governor index; `None` marks the root.
    pub head: Option<usize>,
    pub deprel: String,
    #[serde(default = "underscore")]
    pub deps: String,
    #[serde(default = "underscore")]
    pub misc: String,
    /// Whether whitespace precedes this token in the sentence text.
    pub space_before: bool,
}

fn underscore() -> String {
    "_".to_string()
}

impl Token {
    /// Lemma, falling back to the lower-cased surface when unannotated.
    pub fn lemma_or_surface(&self) -> String {
        if self.lemma.is_empty() || self.lemma == "_" {
            self.surface.to_lowercase()
        } else {
            self.lemma.clone()
        }
    }

    pub fn folded(&self) -> String {
        self.surface.to_lowercase()
    }

    pub fn is_punct(&self) -> bool {
        self.upos == "PUNCT" || self.surface.chars().all(|c| c.is_ascii_punctuation())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub annotation: Annotation,
    /// Raw `#` comment lines, in input order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comments: Vec<String>,
    /// Multiword-token and empty-node lines, keyed by the token index they precede.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_lines: Vec<(usize, String)>,
}

impl Sentence {
    /// Builds a sentence after checking the tree invariants.
    pub fn new(id: impl Into<String>, text: impl Into<String>, tokens: Vec<Token>) -> Result<Self, CorpusError> {
        let s = Sentence {
            id: id.into(),
            text: text.into(),
            tokens,
            annotation: Annotation::Parsed,
            comments: Vec::new(),
            extra_lines: Vec::new(),
        };
        s.validate(0)?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn folded(&self) -> Vec<String> {
        self.tokens.iter().map(Token::folded).collect()
    }

    pub fn root(&self) -> usize {
        self.tokens.iter().position(|t| t.head.is_none()).unwrap_or(0)
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .filter(|t| t.head == Some(i))
            .map(|t| t.index)
            .collect()
    }

    fn validate(&self, line: usize) -> Result<(), CorpusError> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(CorpusError::EmptySentence { line });
        }
        let mut roots = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.surface.is_empty() {
                return Err(CorpusError::EmptySurface { line });
            }
            match t.head {
                None => roots += 1,
                Some(h) if h == i => return Err(CorpusError::SelfHead { line }),
                Some(h) if h >= n => return Err(CorpusError::HeadOutOfRange { line, head: h + 1, len: n }),
                Some(_) => {}
            }
        }
        for start in 0..n {
            let mut seen = 0;
            let mut cur = start;
            while let Some(h) = self.tokens[cur].head {
                cur = h;
                seen += 1;
                if seen > n {
                    return Err(CorpusError::Cycle { line, token: start + 1 });
                }
            }
        }
        if roots != 1 {
            return Err(CorpusError::RootCount { line, count: roots });
        }
        Ok(())
    }

    /// Concatenates surfaces using the whitespace map.
    pub fn render(&self) -> String {
        render_tokens(&self.tokens)
    }

    /// Character offsets of every token within `render()`.
    pub fn char_offsets(&self) -> Vec<TokenRange> {
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut pos = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 && t.space_before {
                pos += 1;
            }
            let len = t.surface.chars().count();
            out.push(pos..pos + len);
            pos += len;
        }
        out
    }

    /// Renders the tokens of `range` with their internal whitespace.
    pub fn span_text(&self, range: &TokenRange) -> String {
        render_tokens(&self.tokens[range.clone()])
    }

    /// Token `i` and all its transitive dependents, in surface order.
    pub fn subtree_indices(&self, i: usize) -> Result<Vec<usize>, CorpusError> {
        let n = self.tokens.len();
        if i >= n {
            return Err(CorpusError::IndexOutOfRange { index: i, len: n });
        }
        let mut keep = vec![false; n];
        keep[i] = true;
        for (j, k) in keep.iter_mut().enumerate() {
            let mut cur = j;
            while let Some(h) = self.tokens[cur].head {
                if h == i {
                    *k = true;
                    break;
                }
                cur = h;
            }
        }
        Ok((0..n).filter(|&j| keep[j]).collect())
    }

    /// The subtree of `i` as a contiguous range, or `None` when non-projective.
    pub fn subtree_range(&self, i: usize) -> Result<Option<TokenRange>, CorpusError> {
        let idx = self.subtree_indices(i)?;
        Ok(contiguous(&idx))
    }

    /// Smallest subtree containing every index in `range` (non-empty).
    pub fn covering_subtree(&self, range: &TokenRange) -> Result<Vec<usize>, CorpusError> {
        if range.is_empty() || range.end > self.len() {
            return Err(CorpusError::IndexOutOfRange { index: range.end, len: self.len() });
        }
        let path = |mut i: usize| {
            let mut p = vec![i];
            while let Some(h) = self.tokens[i].head {
                p.push(h);
                i = h;
            }
            p
        };
        let first = path(range.start);
        let mut lca_pos = 0;
        for j in range.clone().skip(1) {
            let pj: HashSet<usize> = path(j).into_iter().collect();
            let pos = first.iter().position(|a| pj.contains(a)).unwrap_or(first.len() - 1);
            lca_pos = lca_pos.max(pos);
        }
        self.subtree_indices(first[lca_pos])
    }

    /// Deprel labels from token `i` up to the root.
    pub fn root_path(&self, mut i: usize) -> Vec<&str> {
        let mut out = vec![self.tokens[i].deprel.as_str()];
        while let Some(h) = self.tokens[i].head {
            i = h;
            out.push(self.tokens[i].deprel.as_str());
        }
        out
    }

    /// Maximal nominal spans: a NOUN/PROPN/PRON head plus its determiner,
    /// adjectival, numeric and compound dependents.
    pub fn noun_chunks(&self) -> Vec<TokenRange> {
        const NOMINAL: [&str; 3] = ["NOUN", "PROPN", "PRON"];
        let mut chunks: Vec<TokenRange> = Vec::new();
        for t in &self.tokens {
            if !NOMINAL.contains(&t.upos.as_str()) {
                continue;
            }
            let mut members: BTreeSet<usize> = BTreeSet::new();
            members.insert(t.index);
            let mut frontier = vec![t.index];
            while let Some(h) = frontier.pop() {
                for c in self.children(h) {
                    if is_chunk_modifier(&self.tokens[c].deprel) {
                        members.insert(c);
                        frontier.push(c);
                    }
                }
            }
            let lo = *members.iter().next().unwrap_or(&t.index);
            let hi = *members.iter().next_back().unwrap_or(&t.index);
            // keep only the contiguous part around the head
            let mut start = t.index;
            while start > lo && members.contains(&(start - 1)) {
                start -= 1;
            }
            let mut end = t.index + 1;
            while end <= hi && members.contains(&end) {
                end += 1;
            }
            chunks.push(start..end);
        }
        // maximal and non-overlapping: prefer longer spans, then leftmost
        chunks.sort_by(|a, b| (b.len(), a.start).cmp(&(a.len(), b.start)));
        let mut taken: Vec<TokenRange> = Vec::new();
        for c in chunks {
            if taken.iter().all(|t| t.end <= c.start || c.end <= t.start) {
                taken.push(c);
            }
        }
        taken.sort_by_key(|r| r.start);
        taken
    }

    /// A sentence from raw text with a whitespace/punctuation split and a flat tree.
    pub fn shallow(id: impl Into<String>, text: &str) -> Self {
        let text = normalize_spaces(text);
        let pieces = split_words(&text);
        let mut tokens: Vec<Token> = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| shallow_token(i, &text[p.range.clone()], p.space_before))
            .collect();
        let root = tokens.iter().position(|t| t.upos != "PUNCT").unwrap_or(0);
        for t in tokens.iter_mut() {
            if t.index == root {
                t.head = None;
                t.deprel = "root".into();
            } else {
                t.head = Some(root);
            }
        }
        Sentence {
            id: id.into(),
            text: render_tokens(&tokens),
            tokens,
            annotation: Annotation::Shallow,
            comments: Vec::new(),
            extra_lines: Vec::new(),
        }
    }

    /// Replaces token ranges with new text, projecting the parse of the kept
    /// tokens onto the result. `replacements` must be sorted and disjoint.
    pub fn splice(&self, id: impl Into<String>, replacements: &[(TokenRange, String)]) -> Result<Sentence, CorpusError> {
        let n = self.len();
        for w in replacements.windows(2) {
            if w[0].0.end > w[1].0.start {
                return Err(CorpusError::IndexOutOfRange { index: w[1].0.start, len: n });
            }
        }
        if let Some((r, _)) = replacements.iter().find(|(r, _)| r.end > n || r.start > r.end) {
            return Err(CorpusError::IndexOutOfRange { index: r.end, len: n });
        }
        // old index -> new index for kept tokens
        let mut kept_map: Vec<Option<usize>> = vec![None; n];
        // replacement id for removed tokens
        let mut removed_by: Vec<Option<usize>> = vec![None; n];
        let mut out: Vec<Token> = Vec::new();
        // (first new index, count) per replacement
        let mut inserted: Vec<(usize, usize)> = Vec::with_capacity(replacements.len());
        let mut next = 0;
        let push_new = |out: &mut Vec<Token>, fill: &str, inherit_space: bool| -> (usize, usize) {
            let fill = normalize_spaces(fill);
            let first = out.len();
            for (k, p) in split_words(&fill).into_iter().enumerate() {
                let space = if k == 0 { inherit_space } else { p.space_before };
                out.push(shallow_token(out.len(), &fill[p.range], space));
            }
            (first, out.len() - first)
        };
        for (ri, (r, fill)) in replacements.iter().enumerate() {
            while next < r.start {
                kept_map[next] = Some(out.len());
                let mut t = self.tokens[next].clone();
                t.index = out.len();
                out.push(t);
                next += 1;
            }
            let inherit = if r.is_empty() {
                self.tokens.get(r.start).map(|t| t.space_before).unwrap_or(true)
            } else {
                self.tokens[r.start].space_before
            };
            let (first, count) = push_new(&mut out, fill, inherit);
            for slot in &mut removed_by[r.start..r.end] {
                *slot = Some(ri);
            }
            inserted.push((first, count));
            next = r.end;
        }
        while next < n {
            kept_map[next] = Some(out.len());
            let mut t = self.tokens[next].clone();
            t.index = out.len();
            out.push(t);
            next += 1;
        }
        if out.is_empty() {
            return Err(CorpusError::EmptySentence { line: 0 });
        }
        // an insertion pushes the following token apart from the new material
        for (ri, (r, _)) in replacements.iter().enumerate() {
            if r.is_empty() && inserted[ri].1 > 0 {
                if let Some(k) = self.tokens.get(r.start).and_then(|t| kept_map[t.index]) {
                    if !out[k].is_punct() {
                        out[k].space_before = true;
                    }
                }
            }
        }

        // resolve an old head into the new sentence
        let resolve = |mut h: usize| -> Option<usize> {
            loop {
                if let Some(k) = kept_map[h] {
                    return Some(k);
                }
                if let Some(ri) = removed_by[h] {
                    let (first, count) = inserted[ri];
                    if count > 0 {
                        return Some(first);
                    }
                }
                h = self.tokens[h].head?;
            }
        };

        // kept tokens
        for old in 0..n {
            if let Some(k) = kept_map[old] {
                out[k].head = self.tokens[old].head.and_then(resolve);
            }
        }
        // new tokens
        for (ri, (r, _)) in replacements.iter().enumerate() {
            let (first, count) = inserted[ri];
            if count == 0 {
                continue;
            }
            let (head, deprel) = if r.is_empty() {
                let neighbour = if r.start < n { r.start } else { n - 1 };
                (resolve(neighbour), "dep".to_string())
            } else {
                // highest token of the replaced span
                let top = (r.start..r.end)
                    .find(|&j| self.tokens[j].head.map(|h| !r.contains(&h)).unwrap_or(true))
                    .unwrap_or(r.start);
                (self.tokens[top].head.and_then(resolve), self.tokens[top].deprel.clone())
            };
            out[first].head = head.filter(|&h| h != first);
            out[first].deprel = if out[first].head.is_none() { "root".into() } else { deprel };
            for t in &mut out[first + 1..first + count] {
                t.head = Some(first);
                t.deprel = if t.upos == "PUNCT" { "punct".into() } else { "dep".into() };
            }
        }
        // exactly one root: orphans attach to the first of them
        let roots: Vec<usize> = out.iter().filter(|t| t.head.is_none()).map(|t| t.index).collect();
        if let Some((&r0, rest)) = roots.split_first() {
            for &r in rest {
                out[r].head = Some(r0);
                if out[r].deprel == "root" {
                    out[r].deprel = "dep".into();
                }
            }
            out[r0].deprel = "root".into();
        }
        if let Some(t) = out.first_mut() {
            t.space_before = false;
        }
        let s = Sentence {
            id: id.into(),
            text: render_tokens(&out),
            tokens: out,
            annotation: Annotation::Projected,
            comments: Vec::new(),
            extra_lines: Vec::new(),
        };
        s.validate(0)?;
        Ok(s)
    }

    /// Serializes back to a CoNLL-U block (terminated by a blank line).
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        let mut comments = self.comments.clone();
        if comments.is_empty() {
            comments.push(format!("# sent_id = {}", self.id));
            comments.push(format!("# text = {}", self.text));
        }
        for c in &comments {
            out.push_str(c);
            out.push('\n');
        }
        let mut extras = self.extra_lines.iter().peekable();
        for (i, t) in self.tokens.iter().enumerate() {
            while let Some((_, line)) = extras.next_if(|(pos, _)| *pos <= i) {
                out.push_str(line);
                out.push('\n');
            }
            let head = t.head.map(|h| h + 1).unwrap_or(0);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                i + 1,
                t.surface,
                t.lemma,
                t.upos,
                t.xpos,
                t.feats,
                head,
                t.deprel,
                t.deps,
                t.misc
            ));
        }
        for (_, line) in extras {
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
        out
    }
}

fn is_chunk_modifier(deprel: &str) -> bool {
    let base = deprel.split(':').next().unwrap_or(deprel);
    matches!(base, "det" | "amod" | "nummod" | "compound" | "nmod:poss" | "poss" | "flat")
        || deprel == "nmod:poss"
}

fn contiguous(idx: &[usize]) -> Option<TokenRange> {
    let first = *idx.first()?;
    let last = *idx.last()?;
    (last - first + 1 == idx.len()).then_some(first..last + 1)
}

fn render_tokens(tokens: &[Token]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 && t.space_before {
            s.push(' ');
        }
        s.push_str(&t.surface);
    }
    s
}

/// Collapses whitespace runs into single spaces and trims the ends.
pub fn normalize_spaces(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPiece {
    /// Byte range in the source text.
    pub range: Range<usize>,
    pub space_before: bool,
}

const NUMERAL_WORDS: [&str; 24] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "twenty", "thirty", "forty", "fifty", "hundred", "thousand", "million", "dozen",
];

/// Splits on whitespace, detaching leading/trailing punctuation and the `n't` clitic.
/// This is not a tokenizer for real use; it only segments generated fills and
/// raw-text pairs that arrive without a parse.
pub fn split_words(text: &str) -> Vec<WordPiece> {
    let mut out = Vec::new();
    let mut prev_end: Option<usize> = None;
    for (start, word) in word_spans(text) {
        let mut first = true;
        let bytes: Vec<(usize, char)> = word.char_indices().collect();
        let mut lo = 0;
        let mut hi = bytes.len();
        let mut leading = Vec::new();
        while lo < hi && is_split_punct(bytes[lo].1) {
            leading.push(lo);
            lo += 1;
        }
        let mut trailing = Vec::new();
        while hi > lo && is_split_punct(bytes[hi - 1].1) {
            hi -= 1;
            trailing.push(hi);
        }
        trailing.reverse();
        let byte_at = |k: usize| if k < bytes.len() { bytes[k].0 } else { word.len() };
        let mut push = |r: Range<usize>, out: &mut Vec<WordPiece>| {
            out.push(WordPiece { range: start + r.start..start + r.end, space_before: first && prev_end.is_some() });
            first = false;
        };
        for k in leading {
            push(byte_at(k)..byte_at(k + 1), &mut out);
        }
        if lo < hi {
            let core = &word[byte_at(lo)..byte_at(hi)];
            let lower = core.to_lowercase();
            if lower.ends_with("n't") && core.len() > 3 {
                let cut = byte_at(hi) - 3;
                push(byte_at(lo)..cut, &mut out);
                push(cut..byte_at(hi), &mut out);
            } else {
                push(byte_at(lo)..byte_at(hi), &mut out);
            }
        }
        for k in trailing {
            push(byte_at(k)..byte_at(k + 1), &mut out);
        }
        prev_end = Some(start + word.len());
    }
    out
}

fn word_spans(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &text[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

fn is_split_punct(c: char) -> bool {
    c.is_ascii_punctuation() && c != '\'' && c != '-' && c != '&' && c != '%' && c != '$'
}

/// Function words tagged without a parser: (word, coarse tag, fine tag).
const CLOSED_CLASS: [(&str, &str, &str); 44] = [
    ("not", "PART", "RB"),
    ("n't", "PART", "RB"),
    ("to", "PART", "TO"),
    ("the", "DET", "DT"),
    ("a", "DET", "DT"),
    ("an", "DET", "DT"),
    ("no", "DET", "DT"),
    ("this", "DET", "DT"),
    ("that", "DET", "DT"),
    ("some", "DET", "DT"),
    ("every", "DET", "DT"),
    ("each", "DET", "DT"),
    ("all", "DET", "DT"),
    ("is", "AUX", "VBZ"),
    ("are", "AUX", "VBP"),
    ("was", "AUX", "VBD"),
    ("were", "AUX", "VBD"),
    ("be", "AUX", "VB"),
    ("been", "AUX", "VBN"),
    ("has", "AUX", "VBZ"),
    ("have", "AUX", "VBP"),
    ("had", "AUX", "VBD"),
    ("does", "AUX", "VBZ"),
    ("do", "AUX", "VBP"),
    ("did", "AUX", "VBD"),
    ("can", "AUX", "MD"),
    ("will", "AUX", "MD"),
    ("would", "AUX", "MD"),
    ("in", "ADP", "IN"),
    ("on", "ADP", "IN"),
    ("at", "ADP", "IN"),
    ("for", "ADP", "IN"),
    ("with", "ADP", "IN"),
    ("by", "ADP", "IN"),
    ("of", "ADP", "IN"),
    ("and", "CCONJ", "CC"),
    ("or", "CCONJ", "CC"),
    ("but", "CCONJ", "CC"),
    ("it", "PRON", "PRP"),
    ("he", "PRON", "PRP"),
    ("she", "PRON", "PRP"),
    ("they", "PRON", "PRP"),
    ("never", "ADV", "RB"),
    ("very", "ADV", "RB"),
];

fn shallow_token(index: usize, surface: &str, space_before: bool) -> Token {
    let lower = surface.to_lowercase();
    let upos = if surface.chars().all(|c| c.is_ascii_punctuation()) {
        "PUNCT"
    } else if surface.chars().any(|c| c.is_ascii_digit())
        && surface.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',')
        || NUMERAL_WORDS.contains(&lower.as_str())
    {
        "NUM"
    } else if let Some((_, tag, _)) = CLOSED_CLASS.iter().find(|(w, _, _)| *w == lower) {
        tag
    } else {
        "X"
    };
    let xpos = match upos {
        "NUM" => "CD".to_string(),
        "X" | "PUNCT" => upos.to_string(),
        _ => CLOSED_CLASS.iter().find(|(w, _, _)| *w == lower).map_or(upos, |(_, _, x)| x).to_string(),
    };
    Token {
        index,
        surface: surface.to_string(),
        lemma: lower,
        upos: upos.to_string(),
        xpos,
        feats: underscore(),
        head: None,
        deprel: if upos == "PUNCT" { "punct".into() } else { "dep".into() },
        deps: underscore(),
        misc: underscore(),
        space_before,
    }
}

/// A collection of sentences plus the original → revisions index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub pair_index: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn by_text(&self, text: &str) -> Option<&Sentence> {
        let norm = normalize_spaces(text);
        self.sentences.iter().find(|s| normalize_spaces(&s.text) == norm)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// (original, revised) sentence pairs from the pair index, in corpus order.
    pub fn pairs(&self) -> Vec<(&Sentence, &Sentence)> {
        let mut out = Vec::new();
        for s in &self.sentences {
            if let Some(revs) = self.pair_index.get(&s.id) {
                for r in revs {
                    if let Some(rev) = self.get(r) {
                        out.push((s, rev));
                    }
                }
            }
        }
        out
    }

    /// Sentences that are not a revision of another sentence.
    pub fn originals(&self) -> Vec<&Sentence> {
        let revisions: HashSet<&str> = self.pair_index.values().flatten().map(String::as_str).collect();
        self.sentences.iter().filter(|s| !revisions.contains(s.id.as_str())).collect()
    }

    pub fn to_conllu(&self) -> String {
        self.sentences.iter().map(Sentence::to_conllu).collect()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Reads CoNLL-U. Multiword-token and empty-node lines are preserved for
/// re-serialization but not turned into tokens. `# revision_of = <id>`
/// comments populate the pair index.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Dataset, CorpusError> {
    let mut ds = Dataset::default();
    let mut ids: HashSet<String> = HashSet::new();
    let mut block: Vec<(usize, String)> = Vec::new();
    let mut lineno = 0;
    let mut flush = |block: &mut Vec<(usize, String)>, ds: &mut Dataset| -> Result<(), CorpusError> {
        if block.is_empty() {
            return Ok(());
        }
        let start_line = block[0].0;
        let (sentence, revision_of) = parse_block(block, ds.sentences.len() + 1)?;
        if !ids.insert(sentence.id.clone()) {
            return Err(CorpusError::DuplicateId { line: start_line, id: sentence.id });
        }
        if let Some(orig) = revision_of {
            ds.pair_index.entry(orig).or_default().push(sentence.id.clone());
        }
        ds.sentences.push(sentence);
        block.clear();
        Ok(())
    };
    for line in reader.lines() {
        lineno += 1;
        let line = line?;
        if line.trim().is_empty() {
            flush(&mut block, &mut ds)?;
        } else {
            block.push((lineno, line));
        }
    }
    flush(&mut block, &mut ds)?;
    Ok(ds)
}

pub fn parse_conllu_str(text: &str) -> Result<Dataset, CorpusError> {
    parse_conllu(text.as_bytes())
}

fn parse_block(block: &[(usize, String)], ordinal: usize) -> Result<(Sentence, Option<String>), CorpusError> {
    let first_line = block[0].0;
    let mut comments = Vec::new();
    let mut extra_lines = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut token_lines: Vec<usize> = Vec::new();
    let mut sent_id = None;
    let mut text = None;
    let mut revision_of = None;
    for (ln, line) in block {
        if line.starts_with('#') {
            let body = line.trim_start_matches('#').trim_start();
            if let Some(v) = comment_value(body, "sent_id") {
                sent_id = Some(v);
            } else if let Some(v) = comment_value(body, "text") {
                text = Some(v);
            } else if let Some(v) = comment_value(body, "revision_of") {
                revision_of = Some(v);
            }
            comments.push(line.clone());
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(CorpusError::FieldCount { line: *ln, found: fields.len() });
        }
        let id = fields[0];
        if id.contains('-') || id.contains('.') {
            extra_lines.push((tokens.len(), line.clone()));
            continue;
        }
        let num: usize = id.parse().map_err(|_| CorpusError::BadId { line: *ln, id: id.to_string() })?;
        if num != tokens.len() + 1 {
            return Err(CorpusError::NonConsecutive { line: *ln, expected: tokens.len() + 1, found: num });
        }
        let head: usize = fields[6]
            .parse()
            .map_err(|_| CorpusError::BadHead { line: *ln, head: fields[6].to_string() })?;
        if fields[1].is_empty() {
            return Err(CorpusError::EmptySurface { line: *ln });
        }
        tokens.push(Token {
            index: num - 1,
            surface: fields[1].to_string(),
            lemma: fields[2].to_string(),
            upos: fields[3].to_string(),
            xpos: fields[4].to_string(),
            feats: fields[5].to_string(),
            head: if head == 0 { None } else { Some(head - 1) },
            deprel: fields[7].to_string(),
            deps: fields[8].to_string(),
            misc: fields[9].to_string(),
            space_before: false,
        });
        token_lines.push(*ln);
    }
    if tokens.is_empty() {
        return Err(CorpusError::EmptySentence { line: first_line });
    }
    let n = tokens.len();
    for (t, ln) in tokens.iter().zip(&token_lines) {
        match t.head {
            Some(h) if h >= n => return Err(CorpusError::HeadOutOfRange { line: *ln, head: h + 1, len: n }),
            Some(h) if h == t.index => return Err(CorpusError::SelfHead { line: *ln }),
            _ => {}
        }
    }
    // cycles, then root count, each reported at the offending token line
    for start in 0..n {
        let mut cur = start;
        let mut steps = 0;
        while let Some(h) = tokens[cur].head {
            cur = h;
            steps += 1;
            if steps > n {
                return Err(CorpusError::Cycle { line: token_lines[start], token: start + 1 });
            }
        }
    }
    let roots: Vec<usize> = tokens.iter().filter(|t| t.head.is_none()).map(|t| t.index).collect();
    if roots.len() != 1 {
        let line = roots.get(1).map(|&r| token_lines[r]).unwrap_or(first_line);
        return Err(CorpusError::RootCount { line, count: roots.len() });
    }

    // whitespace map: align against `# text` when present, else SpaceAfter=No
    let aligned = text.as_deref().and_then(|t| align_whitespace(t, &tokens));
    match aligned {
        Some(spaces) => {
            for (t, s) in tokens.iter_mut().zip(spaces) {
                t.space_before = s;
            }
        }
        None => {
            for i in 1..n {
                let no_space = tokens[i - 1].misc.split('|').any(|m| m == "SpaceAfter=No");
                tokens[i].space_before = !no_space;
            }
        }
    }
    let text = text.unwrap_or_else(|| render_tokens(&tokens));
    let sentence = Sentence {
        id: sent_id.unwrap_or_else(|| format!("s{ordinal}")),
        text,
        tokens,
        annotation: Annotation::Parsed,
        comments,
        extra_lines,
    };
    Ok((sentence, revision_of))
}

fn comment_value(body: &str, key: &str) -> Option<String> {
    let rest = body.strip_prefix(key)?;
    let rest = rest.trim_start();
    let rest = rest.strip_prefix('=')?;
    Some(rest.trim().to_string())
}

fn align_whitespace(text: &str, tokens: &[Token]) -> Option<Vec<bool>> {
    let mut rest = text;
    let mut out = Vec::with_capacity(tokens.len());
    for (i, t) in tokens.iter().enumerate() {
        let trimmed = rest.trim_start();
        let had_space = trimmed.len() != rest.len();
        if !trimmed.starts_with(t.surface.as_str()) {
            return None;
        }
        out.push(i > 0 && had_space);
        rest = &trimmed[t.surface.len()..];
    }
    rest.trim().is_empty().then_some(out)
}

/// One line of sentence-pair JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub original: String,
    pub revised: String,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_label")]
    pub label_original: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "de_label")]
    pub label_revised: Option<String>,
}

/// Accepts string or numeric labels, normalizing to a string.
pub fn de_label<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let v = Option::<serde_json::Value>::deserialize(d)?;
    Ok(match v {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s),
        Some(other) => Some(other.to_string()),
    })
}

pub fn read_pairs_jsonl<R: BufRead>(reader: R) -> Result<Vec<PairRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Jsonl { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

impl PairRecord {
    /// Resolves both sides against `parses` by text, falling back to a shallow split.
    pub fn sentences(&self, parses: Option<&Dataset>) -> (Sentence, Sentence) {
        let pick = |text: &str, id: String| -> Sentence {
            match parses.and_then(|d| d.by_text(text)) {
                Some(s) => {
                    let mut s = s.clone();
                    s.id = id;
                    s
                }
                None => Sentence::shallow(id, text),
            }
        };
        (pick(&self.original, self.id.clone()), pick(&self.revised, format!("{}.rev", self.id)))
    }
}

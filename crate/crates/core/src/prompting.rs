//! Blank placement and the infilling prompt wire format.
//!
//! A prompt reads `x <|perturb|> [code] template <|sep|> a1 [ANSWER] a2 [ANSWER]`,
//! where every part after `<|perturb|>` is optional (answers require a template).

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sentence, Token, TokenRange};
use crate::ctrlcode::ControlCode;
use crate::diff::{EditSpan, Perturbation};

pub const PERTURB: &str = "<|perturb|>";
pub const BLANK: &str = "[BLANK]";
pub const ANSWER: &str = "[ANSWER]";
pub const SEP: &str = "<|sep|>";
pub const END: &str = "<|endoftext|>";

/// Most blanks a single prompt may carry.
pub const MAX_BLANKS: usize = 3;

const MARKERS: [&str; 5] = [PERTURB, BLANK, ANSWER, SEP, END];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("training mode needs at least one edit")]
    MissingEdits,
    #[error("{count} blanks requested, at most {MAX_BLANKS} allowed")]
    TooManyBlanks { count: usize },
    #[error("blank ranges must be sorted and disjoint")]
    Overlapping,
    #[error("blank range {start}..{end} exceeds {len} tokens")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("answers given without a blanked template")]
    AnswersWithoutTemplate,
    #[error("template has {blanks} blanks but {answers} answers were given")]
    AnswerCount { blanks: usize, answers: usize },
    #[error("generation has {fills} fills for {blanks} blanks: {raw:?}")]
    FillCount { blanks: usize, fills: usize, raw: String },
    #[error("cannot parse {what}: {raw:?}")]
    Unparseable { what: &'static str, raw: String },
    #[error("field `{field}` contains a reserved marker or stray whitespace")]
    InvalidField { field: &'static str },
}

/// One to three disjoint, surface-ordered token ranges of a sentence.
/// Empty ranges mark insertion points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<TokenRange>", into = "Vec<TokenRange>")]
pub struct BlankSpec(Vec<TokenRange>);

impl BlankSpec {
    /// Validates and normalizes: touching ranges are merged.
    pub fn new(ranges: Vec<TokenRange>) -> Result<Self, PromptError> {
        let mut merged: Vec<TokenRange> = Vec::with_capacity(ranges.len());
        for r in ranges {
            if r.start > r.end {
                return Err(PromptError::Overlapping);
            }
            match merged.last_mut() {
                Some(last) if r.start < last.end => return Err(PromptError::Overlapping),
                Some(last) if r.start == last.end => last.end = r.end,
                _ => merged.push(r),
            }
        }
        if merged.is_empty() || merged.len() > MAX_BLANKS {
            return Err(PromptError::TooManyBlanks { count: merged.len() });
        }
        Ok(BlankSpec(merged))
    }

    pub fn ranges(&self) -> &[TokenRange] {
        &self.0
    }

    pub fn check(&self, s: &Sentence) -> Result<(), PromptError> {
        match self.0.iter().find(|r| r.end > s.len()) {
            Some(r) => Err(PromptError::OutOfBounds { start: r.start, end: r.end, len: s.len() }),
            None => Ok(()),
        }
    }

    /// Every blanked token is punctuation (such specs are allowed but flagged).
    pub fn punct_only(&self, s: &Sentence) -> bool {
        let mut any = false;
        for r in &self.0 {
            for t in &s.tokens[r.clone()] {
                if !t.is_punct() {
                    return false;
                }
                any = true;
            }
        }
        any
    }
}

impl TryFrom<Vec<TokenRange>> for BlankSpec {
    type Error = PromptError;

    fn try_from(v: Vec<TokenRange>) -> Result<Self, Self::Error> {
        BlankSpec::new(v)
    }
}

impl From<BlankSpec> for Vec<TokenRange> {
    fn from(b: BlankSpec) -> Self {
        b.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlankMode {
    Training,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlankConfig {
    /// Specs drawn per sentence in generation mode.
    pub per_sentence: usize,
    /// Permit blanks over non-projective subtrees (their surface hull is used).
    pub allow_nonprojective: bool,
}

impl Default for BlankConfig {
    fn default() -> Self {
        BlankConfig { per_sentence: 10, allow_nonprojective: false }
    }
}

/// Blank placements for `s`: the four training granularities derived from
/// `edits`, or seeded random subtree blanks.
pub fn enumerate_blanks(
    s: &Sentence,
    edits: Option<&[EditSpan]>,
    mode: BlankMode,
    seed: u64,
    cfg: &BlankConfig,
) -> Result<Vec<BlankSpec>, PromptError> {
    if s.is_empty() {
        return Err(PromptError::EmptySentence);
    }
    match mode {
        BlankMode::Training => match edits {
            Some(e) if !e.is_empty() => training_blanks(s, e),
            _ => Err(PromptError::MissingEdits),
        },
        BlankMode::Generation => Ok(generation_blanks(s, seed, cfg)),
    }
}

fn training_blanks(s: &Sentence, edits: &[EditSpan]) -> Result<Vec<BlankSpec>, PromptError> {
    let n = s.len();
    let changed: Vec<TokenRange> = edits.iter().map(|e| e.x_range.clone()).collect();
    let structures: Vec<TokenRange> = edits
        .iter()
        .map(|e| {
            if e.x_range.is_empty() {
                return e.x_range.clone();
            }
            let idx = s.covering_subtree(&e.x_range).unwrap_or_else(|_| e.x_range.clone().collect());
            let lo = idx.first().copied().unwrap_or(e.x_range.start).min(e.x_range.start);
            let hi = idx.last().map(|h| h + 1).unwrap_or(e.x_range.end).max(e.x_range.end);
            lo..hi
        })
        .collect();
    let lo = changed.iter().map(|r| r.start).min().unwrap_or(0);
    let hi = changed.iter().map(|r| r.end).max().unwrap_or(n);
    let candidates = [changed, structures, vec![lo..hi], vec![0..n]];

    let mut out: Vec<BlankSpec> = Vec::new();
    for ranges in candidates {
        let spec = BlankSpec::new(fit_ranges(ranges, edits))?;
        if !out.contains(&spec) {
            out.push(spec);
        }
    }
    Ok(out)
}

/// Sorts, merges overlaps, absorbs partially covered edits and merges the
/// closest neighbours until at most three ranges remain.
fn fit_ranges(mut ranges: Vec<TokenRange>, edits: &[EditSpan]) -> Vec<TokenRange> {
    loop {
        ranges.sort_by_key(|r| (r.start, r.end));
        let mut merged: Vec<TokenRange> = Vec::with_capacity(ranges.len());
        for r in ranges.drain(..) {
            match merged.last_mut() {
                Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
                _ => merged.push(r),
            }
        }
        let mut grown = false;
        for r in merged.iter_mut() {
            for e in edits {
                let x = &e.x_range;
                let touches = x.start < r.end && r.start < x.end;
                if touches && (x.start < r.start || x.end > r.end) {
                    r.start = r.start.min(x.start);
                    r.end = r.end.max(x.end);
                    grown = true;
                }
            }
        }
        ranges = merged;
        if grown {
            continue;
        }
        if ranges.len() <= MAX_BLANKS {
            return ranges;
        }
        let k = (1..ranges.len())
            .min_by_key(|&k| ranges[k].start - ranges[k - 1].end)
            .unwrap_or(1);
        ranges[k - 1].end = ranges[k].end;
        ranges.remove(k);
    }
}

fn generation_blanks(s: &Sentence, seed: u64, cfg: &BlankConfig) -> Vec<BlankSpec> {
    let n = s.len();
    let mut units: Vec<TokenRange> = Vec::new();
    for i in 0..n {
        let r = match s.subtree_range(i) {
            Ok(Some(r)) => r,
            Ok(None) if cfg.allow_nonprojective => {
                let idx = s.subtree_indices(i).unwrap_or_default();
                idx[0]..idx[idx.len() - 1] + 1
            }
            _ => continue,
        };
        if !units.contains(&r) {
            units.push(r);
        }
    }
    units.sort_by_key(|r| (r.start, r.end));
    if n == 1 || units.is_empty() {
        return vec![BlankSpec(vec![0..n])];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<BlankSpec> = Vec::new();
    let attempts = cfg.per_sentence.saturating_mul(20);
    for _ in 0..attempts {
        if out.len() >= cfg.per_sentence {
            break;
        }
        let want = rng.random_range(1..=MAX_BLANKS);
        let mut order: Vec<usize> = (0..units.len()).collect();
        order.shuffle(&mut rng);
        let mut picked: Vec<TokenRange> = Vec::with_capacity(want);
        for k in order {
            let u = &units[k];
            // keep a token between blanks so they stay separate
            if picked.iter().all(|p| u.end < p.start || p.end < u.start) {
                picked.push(u.clone());
                if picked.len() == want {
                    break;
                }
            }
        }
        picked.sort_by_key(|r| r.start);
        if let Ok(spec) = BlankSpec::new(picked) {
            if !out.contains(&spec) {
                out.push(spec);
            }
        }
    }
    out
}

/// Renders `tokens` with `ranges` replaced by blank markers.
///
/// A non-empty blank inherits the leading whitespace of its first token; an
/// insertion point is written as ` [BLANK]` before the following token.
pub fn blank_template(tokens: &[Token], ranges: &[TokenRange]) -> String {
    let mut out = String::new();
    let mut force_space = false;
    let push_token = |out: &mut String, t: &Token, force: &mut bool| {
        if !out.is_empty() && (t.space_before || *force) {
            out.push(' ');
        }
        *force = false;
        out.push_str(&t.surface);
    };
    let mut i = 0;
    for r in ranges {
        while i < r.start {
            push_token(&mut out, &tokens[i], &mut force_space);
            i += 1;
        }
        let lead = if r.is_empty() { !out.is_empty() } else { !out.is_empty() && tokens[r.start].space_before };
        if lead {
            out.push(' ');
        }
        out.push_str(BLANK);
        if r.is_empty() && r.start == 0 {
            force_space = true;
        }
        i = r.end;
    }
    while i < tokens.len() {
        push_token(&mut out, &tokens[i], &mut force_space);
        i += 1;
    }
    out
}

/// A serialized infilling request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub original_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<ControlCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blanked_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<String>>,
}

impl Prompt {
    pub fn bare(original_text: impl Into<String>) -> Self {
        Prompt { original_text: original_text.into(), code: None, blanked_template: None, answers: None }
    }

    /// A generation request blanking `spec` over `x`.
    pub fn for_generation(x: &Sentence, code: Option<ControlCode>, spec: &BlankSpec) -> Self {
        Prompt {
            original_text: x.text.clone(),
            code,
            blanked_template: Some(blank_template(&x.tokens, spec.ranges())),
            answers: None,
        }
    }

    pub fn blank_count(&self) -> usize {
        self.blanked_template.as_deref().map(|t| t.matches(BLANK).count()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        fn clean(s: &str, field: &'static str, allow_blank: bool) -> Result<(), PromptError> {
            let reserved = MARKERS.iter().filter(|m| !(allow_blank && **m == BLANK)).any(|m| s.contains(m));
            if reserved || s.contains('\n') || s.trim() != s {
                return Err(PromptError::InvalidField { field });
            }
            Ok(())
        }
        clean(&self.original_text, "original_text", false)?;
        if self.original_text.is_empty() {
            return Err(PromptError::InvalidField { field: "original_text" });
        }
        if let Some(t) = &self.blanked_template {
            clean(t, "blanked_template", true)?;
            if t.is_empty() || leading_code(t).is_some() {
                return Err(PromptError::InvalidField { field: "blanked_template" });
            }
        }
        if let Some(answers) = &self.answers {
            if self.blanked_template.is_none() {
                return Err(PromptError::AnswersWithoutTemplate);
            }
            for a in answers {
                clean(a, "answers", false)?;
            }
            if answers.len() != self.blank_count() {
                return Err(PromptError::AnswerCount { blanks: self.blank_count(), answers: answers.len() });
            }
        }
        Ok(())
    }

    pub fn render(&self) -> Result<String, PromptError> {
        render_prompt(self)
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match render_prompt(self) {
            Ok(s) => f.write_str(&s),
            Err(e) => write!(f, "<invalid prompt: {e}>"),
        }
    }
}

pub fn render_prompt(p: &Prompt) -> Result<String, PromptError> {
    if p.answers.is_some() && p.blanked_template.is_none() {
        return Err(PromptError::AnswersWithoutTemplate);
    }
    let mut out = format!("{} {PERTURB}", p.original_text);
    if let Some(c) = p.code {
        out.push_str(&format!(" [{c}]"));
    }
    if let Some(t) = &p.blanked_template {
        out.push(' ');
        out.push_str(t);
    }
    if let Some(answers) = &p.answers {
        out.push_str(&format!(" {SEP}"));
        for a in answers {
            out.push(' ');
            out.push_str(a);
            out.push_str(&format!(" {ANSWER}"));
        }
    }
    Ok(out)
}

/// `[code]` at the very start of `s`, with the remainder.
fn leading_code(s: &str) -> Option<(ControlCode, &str)> {
    let rest = s.strip_prefix('[')?;
    let close = rest.find(']')?;
    let code = rest[..close].parse().ok()?;
    let after = &rest[close + 1..];
    (after.is_empty() || after.starts_with(' ')).then_some((code, after))
}

/// Inverse of [`render_prompt`].
pub fn parse_prompt(wire: &str) -> Result<Prompt, PromptError> {
    let bad = || PromptError::Unparseable { what: "prompt", raw: wire.to_string() };
    let marker = format!(" {PERTURB}");
    let at = wire.find(&marker).ok_or_else(bad)?;
    let mut prompt = Prompt::bare(&wire[..at]);
    let mut rest = &wire[at + marker.len()..];

    if let Some(r) = rest.strip_prefix(' ') {
        if let Some((code, after)) = leading_code(r) {
            prompt.code = Some(code);
            rest = after;
        }
    }
    if rest.is_empty() {
        return Ok(prompt);
    }
    let rest = rest.strip_prefix(' ').ok_or_else(bad)?;
    if rest.starts_with(SEP) {
        return Err(PromptError::AnswersWithoutTemplate);
    }
    let sep = format!(" {SEP}");
    let (template, answers) = match rest.find(&sep) {
        Some(k) => (&rest[..k], Some(&rest[k + sep.len()..])),
        None => (rest, None),
    };
    prompt.blanked_template = Some(template.to_string());
    if let Some(mut a) = answers {
        let tail = format!(" {ANSWER}");
        let mut list = Vec::new();
        while !a.is_empty() {
            a = a.strip_prefix(' ').ok_or_else(bad)?;
            let k = a.find(&tail).ok_or_else(bad)?;
            list.push(a[..k].to_string());
            a = &a[k + tail.len()..];
        }
        prompt.answers = Some(list);
    }
    Ok(prompt)
}

/// Splits raw backend output into fills: `[ANSWER]`-separated, end marker stripped.
pub fn split_fills(output: &str) -> Result<Vec<String>, PromptError> {
    let body = output.split(END).next().unwrap_or("");
    if [PERTURB, SEP, BLANK].iter().any(|m| body.contains(m)) {
        return Err(PromptError::Unparseable { what: "generation", raw: output.to_string() });
    }
    let mut fills: Vec<String> = body.split(ANSWER).map(|f| f.trim().to_string()).collect();
    if fills.last().is_some_and(String::is_empty) {
        fills.pop();
    }
    Ok(fills)
}

/// Substitutes backend fills into the template's blanks, left to right.
pub fn parse_generation(template: &str, output: &str) -> Result<String, PromptError> {
    let fills = split_fills(output)?;
    let blanks = template.matches(BLANK).count();
    if fills.len() != blanks {
        return Err(PromptError::FillCount { blanks, fills: fills.len(), raw: output.to_string() });
    }
    Ok(fill_template(template, &fills))
}

/// Substitution without count checks; extra fills are ignored, missing ones are empty.
pub fn fill_template<S: AsRef<str>>(template: &str, fills: &[S]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut pieces = template.split(BLANK);
    out.push_str(pieces.next().unwrap_or(""));
    for (k, piece) in pieces.enumerate() {
        let fill = fills.get(k).map(AsRef::as_ref).unwrap_or("");
        if fill.is_empty() && piece.chars().next().is_some_and(|c| !c.is_whitespace()) {
            // nothing inserted before attached text such as punctuation
            out.truncate(out.trim_end().len());
        }
        out.push_str(fill);
        out.push_str(piece);
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reads the continuation of a prompt that carried only `x` (and maybe a code):
/// `[code] template <|sep|> fills`, or a plain revised sentence.
pub fn parse_continuation(output: &str) -> Result<(Option<ControlCode>, String), PromptError> {
    let body = output.split(END).next().unwrap_or("").trim();
    let (code, body) = match leading_code(body) {
        Some((c, rest)) => (Some(c), rest.trim()),
        None => (None, body),
    };
    let text = match body.split_once(SEP) {
        Some((template, fills)) => parse_generation(template.trim(), fills)?,
        None if body.contains(BLANK) => {
            return Err(PromptError::Unparseable { what: "continuation", raw: output.to_string() })
        }
        None => body.split_whitespace().collect::<Vec<_>>().join(" "),
    };
    if text.is_empty() {
        return Err(PromptError::Unparseable { what: "continuation", raw: output.to_string() });
    }
    Ok((code, text))
}

/// Maps a range over the original onto the revision. `range` must contain
/// every edit it touches; insertions at either boundary count as inside.
pub fn map_range(p: &Perturbation, range: &TokenRange) -> TokenRange {
    let mut start_shift = 0isize;
    let mut end_shift = 0isize;
    for e in &p.edits {
        let inside = range.start <= e.x_range.start && e.x_range.end <= range.end;
        if !inside && e.x_range.end <= range.start {
            start_shift += e.delta();
        }
        if inside || e.x_range.end <= range.start {
            end_shift += e.delta();
        }
    }
    let start = (range.start as isize + start_shift) as usize;
    let end = (range.end as isize + end_shift) as usize;
    start..end.max(start)
}

/// Finetuning prompts for a pair at every training granularity.
pub fn training_prompts(p: &Perturbation, code: Option<ControlCode>) -> Result<Vec<Prompt>, PromptError> {
    let specs = enumerate_blanks(&p.original, Some(&p.edits), BlankMode::Training, 0, &BlankConfig::default())?;
    Ok(specs.iter().map(|spec| training_prompt(p, code, spec)).collect())
}

pub fn training_prompt(p: &Perturbation, code: Option<ControlCode>, spec: &BlankSpec) -> Prompt {
    let mapped: Vec<TokenRange> = spec.ranges().iter().map(|r| map_range(p, r)).collect();
    let answers = mapped.iter().map(|r| p.revised.span_text(r)).collect();
    Prompt {
        original_text: p.original.text.clone(),
        code,
        blanked_template: Some(blank_template(&p.revised.tokens, &mapped)),
        answers: Some(answers),
    }
}

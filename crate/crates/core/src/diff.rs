//! Word-level alignment between an original sentence and its revision.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, TokenRange};
use crate::ctrlcode::ControlCode;

/// Matched tokens needed between two edit regions to keep them apart.
pub const MERGE_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Insert,
    Delete,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditSpan {
    pub x_range: TokenRange,
    pub xhat_range: TokenRange,
    pub kind: EditKind,
}

impl EditSpan {
    pub fn new(x_range: TokenRange, xhat_range: TokenRange) -> Self {
        let kind = match (x_range.is_empty(), xhat_range.is_empty()) {
            (true, _) => EditKind::Insert,
            (false, true) => EditKind::Delete,
            (false, false) => EditKind::Replace,
        };
        EditSpan { x_range, xhat_range, kind }
    }

    /// Length change this edit introduces (revised minus original).
    pub fn delta(&self) -> isize {
        self.xhat_range.len() as isize - self.x_range.len() as isize
    }
}

/// A multiset of case-folded surfaces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenBag(pub BTreeMap<String, usize>);

impl TokenBag {
    pub fn add(&mut self, word: impl Into<String>) {
        *self.0.entry(word.into()).or_insert(0) += 1;
    }

    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains_key(word)
    }

    /// Size of the multiset intersection.
    pub fn overlap(&self, other: &TokenBag) -> usize {
        self.0
            .iter()
            .map(|(w, &c)| c.min(other.0.get(w).copied().unwrap_or(0)))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &usize)> {
        self.0.iter()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenBag {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut bag = TokenBag::default();
        for w in iter {
            bag.add(w);
        }
        bag
    }
}

/// An original/revised pair with its aligned edit spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub original: Sentence,
    pub revised: Sentence,
    pub edits: Vec<EditSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<ControlCode>,
}

impl Perturbation {
    pub fn new(original: Sentence, revised: Sentence) -> Self {
        let edits = align(&original, &revised);
        Perturbation { original, revised, edits, code: None }
    }

    /// Revised tokens reconstructed by replaying the edits over the original.
    pub fn replay(&self) -> Option<Vec<String>> {
        replay(&self.original.surfaces(), &self.revised.surfaces(), &self.edits)
    }

    /// Maps an original token outside every edit to its revised position.
    pub fn matched_index(&self, i: usize) -> Option<usize> {
        let mut shift: isize = 0;
        for e in &self.edits {
            if e.x_range.contains(&i) {
                return None;
            }
            if e.x_range.end <= i {
                shift += e.delta();
            }
        }
        Some((i as isize + shift) as usize)
    }

    /// `(original, revised)` index pairs of all unedited tokens.
    pub fn matched_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.original.len()).filter_map(|i| self.matched_index(i).map(|j| (i, j))).collect()
    }

    pub fn views(&self) -> EditViews {
        edit_views(self)
    }

    pub fn levenshtein_norm(&self) -> f64 {
        levenshtein_norm(&self.original, &self.revised)
    }
}

/// LCS alignment on case-folded surfaces; close edit regions are merged.
pub fn align(x: &Sentence, xhat: &Sentence) -> Vec<EditSpan> {
    align_tokens(&x.folded(), &xhat.folded())
}

pub fn align_tokens<S: AsRef<str>>(a: &[S], b: &[S]) -> Vec<EditSpan> {
    let matches = lcs_pairs(a, b);
    let mut regions: Vec<(TokenRange, TokenRange)> = Vec::new();
    let (mut pi, mut pj) = (0, 0);
    for &(i, j) in matches.iter().chain(std::iter::once(&(a.len(), b.len()))) {
        if i > pi || j > pj {
            regions.push((pi..i, pj..j));
        }
        pi = i + 1;
        pj = j + 1;
    }
    let mut merged: Vec<(TokenRange, TokenRange)> = Vec::new();
    for (xr, yr) in regions {
        if let Some(last) = merged.last_mut() {
            if xr.start - last.0.end < MERGE_WINDOW {
                last.0.end = xr.end;
                last.1.end = yr.end;
                continue;
            }
        }
        merged.push((xr, yr));
    }
    merged.into_iter().map(|(xr, yr)| EditSpan::new(xr, yr)).collect()
}

/// Leftmost longest-common-subsequence matching.
fn lcs_pairs<S: AsRef<str>>(a: &[S], b: &[S]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut suffix = vec![0u32; (n + 1) * (m + 1)];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * w + j] = if a[i].as_ref() == b[j].as_ref() {
                suffix[(i + 1) * w + j + 1] + 1
            } else {
                suffix[(i + 1) * w + j].max(suffix[i * w + j + 1])
            };
        }
    }
    let mut out = Vec::with_capacity(suffix[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i].as_ref() == b[j].as_ref() && suffix[i * w + j] == suffix[(i + 1) * w + j + 1] + 1 {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if suffix[(i + 1) * w + j] >= suffix[i * w + j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Rebuilds the revised sequence from `x`, the revised tokens inside the
/// edit spans, and the spans themselves. `None` when the spans are inconsistent.
pub fn replay<S: AsRef<str>>(x: &[S], xhat: &[S], edits: &[EditSpan]) -> Option<Vec<String>> {
    let mut out = Vec::with_capacity(xhat.len());
    let mut i = 0;
    for e in edits {
        if e.x_range.start < i || e.x_range.end > x.len() || e.xhat_range.end > xhat.len() {
            return None;
        }
        out.extend(x[i..e.x_range.start].iter().map(|s| s.as_ref().to_string()));
        if out.len() != e.xhat_range.start {
            return None;
        }
        out.extend(xhat[e.xhat_range.clone()].iter().map(|s| s.as_ref().to_string()));
        i = e.x_range.end;
    }
    out.extend(x[i..].iter().map(|s| s.as_ref().to_string()));
    Some(out)
}

/// Unit-cost word edit distance.
pub fn levenshtein<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x.as_ref() != y.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word-level edit distance over case-folded surfaces, divided by the longer length.
pub fn levenshtein_norm(x: &Sentence, xhat: &Sentence) -> f64 {
    levenshtein_norm_tokens(&x.folded(), &xhat.folded())
}

pub fn levenshtein_norm_tokens<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / denom as f64
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditViews {
    /// Original tokens touched by an edit; pure inserts count their left anchor.
    pub edited: BTreeSet<usize>,
    /// Original tokens actually removed or replaced.
    pub removed_indices: BTreeSet<usize>,
    pub removed: TokenBag,
    pub added: TokenBag,
}

pub fn edit_views(p: &Perturbation) -> EditViews {
    let mut v = EditViews::default();
    for e in &p.edits {
        if e.x_range.is_empty() {
            v.edited.insert(e.x_range.start.saturating_sub(1).min(p.original.len().saturating_sub(1)));
        }
        for i in e.x_range.clone() {
            v.edited.insert(i);
            v.removed_indices.insert(i);
            v.removed.add(p.original.tokens[i].folded());
        }
        for j in e.xhat_range.clone() {
            v.added.add(p.revised.tokens[j].folded());
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|w| w.to_lowercase()).collect()
    }

    fn sh(id: &str, s: &str) -> Sentence {
        Sentence::shallow(id, s)
    }

    #[test]
    fn identical_is_empty() {
        let a = toks("A dog is embraced by the woman .");
        assert!(align_tokens(&a, &a).is_empty());
    }

    #[test]
    fn negation_insert() {
        let e = align_tokens(&toks("A dog is embraced by the woman ."), &toks("A dog is not embraced by the woman ."));
        assert_eq!(e, vec![EditSpan::new(3..3, 3..4)]);
        assert_eq!(e[0].kind, EditKind::Insert);
    }

    #[test]
    fn lexical_replace() {
        let e = align_tokens(&toks("A dog is embraced by the woman ."), &toks("A dog is attacked by the woman ."));
        assert_eq!(e, vec![EditSpan::new(3..4, 3..4)]);
        assert_eq!(e[0].kind, EditKind::Replace);
    }

    #[test]
    fn single_match_between_edits_merges() {
        // "great" alone separates the two regions, so they fuse into one span
        let e = align_tokens(&toks("it is great fun"), &toks("it was great joy"));
        assert_eq!(e, vec![EditSpan::new(1..4, 1..4)]);
        // two matched tokens keep them apart
        let e = align_tokens(&toks("It is great for kids ."), &toks("It is not great for children ."));
        assert_eq!(e, vec![EditSpan::new(2..2, 2..3), EditSpan::new(4..5, 5..6)]);
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein_norm(&sh("a", "a b c d"), &sh("b", "a b c d")), 0.0);
        assert_eq!(levenshtein_norm(&sh("a", "a b c d"), &sh("b", "a b x d")), 0.25);
        assert_eq!(levenshtein_norm(&sh("a", "a b c"), &sh("b", "x y z")), 1.0);
        assert_eq!(levenshtein_norm_tokens::<&str>(&[], &[]), 0.0);
        assert_eq!(levenshtein_norm(&sh("a", "The Dog"), &sh("b", "the dog")), 0.0);
    }

    #[test]
    fn views_for_table_pairs() {
        let p = Perturbation::new(sh("x", "A dog is embraced by the woman ."), sh("y", "A dog is not embraced by the woman ."));
        let v = p.views();
        assert_eq!(v.edited, BTreeSet::from([2]));
        assert!(v.removed.is_empty());
        assert_eq!(v.added, TokenBag::from_iter(["not"]));

        let p = Perturbation::new(sh("x", "A dog is embraced by the woman ."), sh("y", "A dog is attacked by the woman ."));
        let v = p.views();
        assert_eq!(v.edited, BTreeSet::from([3]));
        assert_eq!(v.removed, TokenBag::from_iter(["embraced"]));
        assert_eq!(v.added, TokenBag::from_iter(["attacked"]));

        let p = Perturbation::new(sh("x", "a b"), sh("y", "a b"));
        assert_eq!(p.views(), EditViews::default());
    }

    #[test]
    fn insert_at_start_anchors_first_token() {
        let p = Perturbation::new(sh("x", "dogs bark"), sh("y", "no dogs bark"));
        assert_eq!(p.views().edited, BTreeSet::from([0]));
    }

    #[test]
    fn matched_index_tracks_shifts() {
        let p = Perturbation::new(sh("x", "It is great for kids ."), sh("y", "It is not great for children ."));
        assert_eq!(p.matched_pairs(), vec![(0, 0), (1, 1), (2, 3), (3, 4), (5, 6)]);
    }
}

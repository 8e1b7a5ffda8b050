//! Diversity, surprise and contrast selection over candidate sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::AttributionMap;
use crate::corpus::Sentence;
use crate::ctrlcode::ControlCode;
use crate::diff::{Perturbation, TokenBag};
use crate::pipeline::Candidate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("selection size must be at least 1")]
    ZeroK,
    #[error("no candidates to select from")]
    Empty,
    #[error("attribution has {weights} weights for {tokens} tokens")]
    AttributionShape { weights: usize, tokens: usize },
    #[error("attribution weights must be finite")]
    NonFinite,
    #[error("candidate {0} has no prediction")]
    MissingPrediction(String),
    #[error("original sentence has no prediction")]
    MissingOriginalPrediction,
    #[error("row {0} is missing a label")]
    MissingLabel(String),
}

/// What diversity selection compares candidates on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSignature {
    pub code: ControlCode,
    pub removed: TokenBag,
    pub added: TokenBag,
    /// Hex prefix of a SHA-256 over the revision's `deprel:head` sequence.
    pub tree_shape: String,
}

impl SelectionSignature {
    pub fn of(p: &Perturbation, code: ControlCode) -> Self {
        let v = p.views();
        SelectionSignature { code, removed: v.removed, added: v.added, tree_shape: tree_shape(&p.revised) }
    }

    pub fn of_candidate(x: &Sentence, c: &Candidate) -> Self {
        Self::of(&c.perturbation(x), c.code)
    }
}

pub fn tree_shape(s: &Sentence) -> String {
    let mut h = Sha256::new();
    for t in &s.tokens {
        let head = t.head.map_or(0, |h| h + 1);
        h.update(format!("{}:{head};", t.deprel).as_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Weights of code, removed-bag and added-bag agreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityWeights {
    pub code: f64,
    pub removed: f64,
    pub added: f64,
}

impl Default for DiversityWeights {
    fn default() -> Self {
        DiversityWeights { code: 0.2, removed: 0.4, added: 0.4 }
    }
}

impl DiversityWeights {
    pub fn similarity(&self, a: &SelectionSignature, b: &SelectionSignature) -> f64 {
        let ind = |c: bool| if c { 1.0 } else { 0.0 };
        self.code * ind(a.code == b.code) + self.removed * ind(a.removed == b.removed) + self.added * ind(a.added == b.added)
    }
}

/// Greedy least-similar selection; returns indices into `sigs` in pick order.
/// Ties go to the lower index.
pub fn diversity_select(sigs: &[SelectionSignature], k: usize, w: &DiversityWeights) -> Result<Vec<usize>, SelectionError> {
    let rank: Vec<usize> = (0..sigs.len()).collect();
    diversity_select_ranked(sigs, k, w, &rank)
}

/// As [`diversity_select`], with ties going to the lower `rank` entry.
pub fn diversity_select_ranked(
    sigs: &[SelectionSignature],
    k: usize,
    w: &DiversityWeights,
    rank: &[usize],
) -> Result<Vec<usize>, SelectionError> {
    if k == 0 {
        return Err(SelectionError::ZeroK);
    }
    assert_eq!(rank.len(), sigs.len(), "one rank per signature");
    let n = sigs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| rank[i]);
    if k >= n {
        return Ok(order);
    }
    let sim: Vec<Vec<f64>> = sigs.iter().map(|a| sigs.iter().map(|b| w.similarity(a, b)).collect()).collect();
    let max_to = |i: usize, set: &mut dyn Iterator<Item = usize>| set.map(|j| sim[i][j]).fold(0.0_f64, f64::max);

    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = order[argmin(order.iter().map(|&i| max_to(i, &mut (0..n).filter(|&j| j != i))))];
    chosen.push(first);
    taken[first] = true;
    while chosen.len() < k {
        let scores = order.iter().map(|&i| if taken[i] { f64::INFINITY } else { max_to(i, &mut chosen.iter().copied()) });
        let next = order[argmin(scores)];
        taken[next] = true;
        chosen.push(next);
    }
    Ok(chosen)
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    argmin(values.map(|v| -v))
}

/// One candidate as seen by surprise selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseInput {
    /// e(x̂): original positions touched by the edit.
    pub edited: BTreeSet<usize>,
    /// r(x̂): original positions removed or replaced.
    pub removed: BTreeSet<usize>,
    /// |f_p(x) − f_p(x̂)|.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSurprise {
    pub index: usize,
    pub token: String,
    pub s: f64,
    pub d: f64,
    pub delta_d: f64,
    pub group: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseResult {
    pub t_l: usize,
    pub t_u: usize,
    /// Candidate index and id for x̂_L / x̂_U; `None` when the group is empty.
    pub xhat_l: Option<usize>,
    pub xhat_u: Option<usize>,
    pub xhat_l_id: Option<String>,
    pub xhat_u_id: Option<String>,
    pub table: Vec<TokenSurprise>,
}

/// Surprise scores for weights `s` over the original tokens.
pub fn surprise_scores(s: &[f64], cands: &[SurpriseInput]) -> Result<SurpriseResult, SelectionError> {
    if cands.is_empty() {
        return Err(SelectionError::Empty);
    }
    if s.is_empty() {
        return Err(SelectionError::AttributionShape { weights: 0, tokens: 0 });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SelectionError::NonFinite);
    }
    let table: Vec<TokenSurprise> = s
        .iter()
        .enumerate()
        .map(|(t, &st)| {
            let group: Vec<usize> = (0..cands.len()).filter(|&c| cands[c].edited.contains(&t)).collect();
            let sum: f64 = group.iter().map(|&c| cands[c].delta / cands[c].edited.len() as f64).sum();
            let d = (st + sum) / (group.len() as f64 + 1.0);
            TokenSurprise { index: t, token: String::new(), s: st, d, delta_d: d - st, group }
        })
        .collect();
    let t_l = argmax(table.iter().map(|r| r.delta_d));
    let t_u = argmax(table.iter().map(|r| -r.delta_d));
    let objective = |c: usize| cands[c].delta - cands[c].removed.iter().map(|&u| s.get(u).copied().unwrap_or(0.0)).sum::<f64>();
    let pick = |group: &[usize], best: fn(std::vec::IntoIter<f64>) -> usize| {
        (!group.is_empty()).then(|| group[best(group.iter().map(|&c| objective(c)).collect::<Vec<_>>().into_iter())])
    };
    let xhat_l = pick(&table[t_l].group, argmax);
    let xhat_u = pick(&table[t_u].group, argmin);
    Ok(SurpriseResult { t_l, t_u, xhat_l, xhat_u, xhat_l_id: None, xhat_u_id: None, table })
}

/// Surprise selection over candidates carrying predictions.
pub fn surprise_select(x: &Sentence, attribution: &AttributionMap, cands: &[Candidate]) -> Result<SurpriseResult, SelectionError> {
    if attribution.weights.len() != x.len() {
        return Err(SelectionError::AttributionShape { weights: attribution.weights.len(), tokens: x.len() });
    }
    let original = cands
        .iter()
        .find_map(|c| c.original_prediction.as_ref())
        .ok_or(SelectionError::MissingOriginalPrediction)?;
    let class = original.label;
    let inputs: Vec<SurpriseInput> = cands
        .iter()
        .map(|c| {
            let pred = c.prediction.as_ref().ok_or_else(|| SelectionError::MissingPrediction(c.id.clone()))?;
            let v = c.perturbation(x).views();
            Ok(SurpriseInput { edited: v.edited, removed: v.removed_indices, delta: (original.prob(class) - pred.prob(class)).abs() })
        })
        .collect::<Result<_, SelectionError>>()?;
    // candidates with no edits would get an undefined weight
    let usable: Vec<usize> = (0..inputs.len()).filter(|&i| !inputs[i].edited.is_empty()).collect();
    let filtered: Vec<SurpriseInput> = usable.iter().map(|&i| inputs[i].clone()).collect();
    let mut r = surprise_scores(&attribution.weights, &filtered)?;
    for row in &mut r.table {
        row.token = x.tokens[row.index].surface.clone();
        row.group = row.group.iter().map(|&g| usable[g]).collect();
    }
    r.xhat_l = r.xhat_l.map(|g| usable[g]);
    r.xhat_u = r.xhat_u.map(|g| usable[g]);
    r.xhat_l_id = r.xhat_l.map(|i| cands[i].id.clone());
    r.xhat_u_id = r.xhat_u.map(|i| cands[i].id.clone());
    Ok(r)
}

/// A candidate (or any row) with its gold label and the original's label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeled<T> {
    pub item: T,
    pub label: Option<String>,
    pub original_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition<T> {
    pub kept: Vec<T>,
    pub dropped: Vec<T>,
}

/// Splits rows into label flips (kept) and same-label rows (dropped).
pub fn contrast_partition<T>(rows: Vec<Labeled<T>>, id: impl Fn(&T) -> String) -> Result<Partition<T>, SelectionError> {
    let mut out = Partition { kept: Vec::new(), dropped: Vec::new() };
    for r in rows {
        match (&r.label, &r.original_label) {
            (Some(a), Some(b)) if a != b => out.kept.push(r.item),
            (Some(_), Some(_)) => out.dropped.push(r.item),
            _ => return Err(SelectionError::MissingLabel(id(&r.item))),
        }
    }
    Ok(out)
}

pub fn contrast_filter<T>(rows: Vec<Labeled<T>>, id: impl Fn(&T) -> String) -> Result<Vec<T>, SelectionError> {
    contrast_partition(rows, id).map(|p| p.kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(code: ControlCode, removed: &[&str], added: &[&str]) -> SelectionSignature {
        SelectionSignature {
            code,
            removed: removed.iter().copied().collect(),
            added: added.iter().copied().collect(),
            tree_shape: String::new(),
        }
    }

    #[test]
    fn k_covers_pool() {
        let pool = vec![sig(ControlCode::Lexical, &["a"], &["b"]); 3];
        assert_eq!(diversity_select(&pool, 5, &DiversityWeights::default()).unwrap(), vec![0, 1, 2]);
        assert_eq!(diversity_select(&pool, 2, &DiversityWeights::default()).unwrap(), vec![0, 1]);
        assert_eq!(diversity_select(&pool, 0, &DiversityWeights::default()), Err(SelectionError::ZeroK));
    }

    #[test]
    fn duplicate_pattern_deferred() {
        let pool = vec![
            sig(ControlCode::Negation, &[], &["not"]),
            sig(ControlCode::Negation, &[], &["not"]),
            sig(ControlCode::Lexical, &["kids"], &["children"]),
            sig(ControlCode::Quantifier, &["a"], &["two"]),
        ];
        let picked = diversity_select(&pool, 3, &DiversityWeights::default()).unwrap();
        assert_eq!(picked, vec![2, 0, 3]);
    }

    #[test]
    fn micro_example() {
        let c = SurpriseInput { edited: [0].into(), removed: [0].into(), delta: 0.8 };
        let r = surprise_scores(&[0.1, 0.5], &[c]).unwrap();
        assert!((r.table[0].d - 0.45).abs() < 1e-12);
        assert!((r.table[0].delta_d - 0.35).abs() < 1e-12);
        assert_eq!(r.table[1].d, 0.5);
        assert_eq!(r.table[1].delta_d, 0.0);
        assert_eq!(r.t_l, 0);
        assert_eq!(r.t_u, 1);
        assert_eq!(r.xhat_l, Some(0));
        assert_eq!(r.xhat_u, None);
    }

    #[test]
    fn two_token_edit_gets_half_weight() {
        let c = SurpriseInput { edited: [0, 1].into(), removed: [0, 1].into(), delta: 0.6 };
        let r = surprise_scores(&[0.0, 0.0, 0.0], &[c]).unwrap();
        assert!((r.table[0].d - 0.15).abs() < 1e-12);
        assert!((r.table[1].d - 0.15).abs() < 1e-12);
    }

    #[test]
    fn untouched_tokens_tie_at_zero() {
        let c = SurpriseInput { edited: [5].into(), removed: [5].into(), delta: 0.0 };
        let r = surprise_scores(&[0.3, 0.2, 0.1], &[c]).unwrap();
        assert!(r.table.iter().all(|t| t.delta_d == 0.0));
        assert_eq!((r.t_l, r.t_u), (0, 0));
        assert!(matches!(surprise_scores(&[0.1], &[]), Err(SelectionError::Empty)));
    }

    #[test]
    fn contrast_partition_is_lossless() {
        let rows: Vec<Labeled<usize>> = (0..6)
            .map(|i| Labeled {
                item: i,
                label: Some(if i % 3 == 0 { "neg" } else { "pos" }.into()),
                original_label: Some("pos".into()),
            })
            .collect();
        let p = contrast_partition(rows, |i| i.to_string()).unwrap();
        assert_eq!(p.kept, vec![0, 3]);
        assert_eq!(p.dropped, vec![1, 2, 4, 5]);
        let bad = vec![Labeled { item: 9usize, label: None, original_label: Some("pos".into()) }];
        assert_eq!(contrast_filter(bad, |i| i.to_string()), Err(SelectionError::MissingLabel("9".into())));
    }
}

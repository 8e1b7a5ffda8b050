//! Perturbation templates: extraction at several granularities, greedy
//! weighted set-cover selection and flip-rate aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::PredictionRecord;
use crate::corpus::{Sentence, Token, TokenRange};
use crate::diff::{EditSpan, Perturbation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("perturbation {0} has no part-of-speech annotation")]
    Unparsed(String),
    #[error("coverage budget must lie in (0, 1], got {0}")]
    Budget(String),
    #[error("invalid sparsity weights: {0}")]
    Weights(String),
}

/// What a pattern slot records about a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Text,
    Lemma,
    Fine,
    Coarse,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Text, Level::Lemma, Level::Fine, Level::Coarse];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Text => "text",
            Level::Lemma => "lemma",
            Level::Fine => "fine",
            Level::Coarse => "coarse",
        }
    }

    fn slot(self, t: &Token) -> String {
        match self {
            Level::Text => t.folded(),
            Level::Lemma => t.lemma_or_surface().to_lowercase(),
            Level::Fine => t.xpos.clone(),
            Level::Coarse => t.upos.clone(),
        }
    }
}

/// Sparsity weights g(t) per level; doubled when context is omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sparsity {
    pub text: f64,
    pub lemma: f64,
    pub fine: f64,
    pub coarse: f64,
    pub no_context_factor: f64,
}

impl Default for Sparsity {
    fn default() -> Self {
        Sparsity { text: 1.0, lemma: 2.0, fine: 4.0, coarse: 8.0, no_context_factor: 2.0 }
    }
}

impl Sparsity {
    pub fn g(&self, level: Level, context: bool) -> f64 {
        let base = match level {
            Level::Text => self.text,
            Level::Lemma => self.lemma,
            Level::Fine => self.fine,
            Level::Coarse => self.coarse,
        };
        if context {
            base
        } else {
            base * self.no_context_factor
        }
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let all = [self.text, self.lemma, self.fine, self.coarse, self.no_context_factor];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TemplateError::Weights(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Identity of a template: what it rewrites and at which granularity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TemplateKey {
    pub level: Level,
    pub context: bool,
    pub before: Vec<String>,
    pub after: Vec<String>,
}

impl TemplateKey {
    pub fn granularity(&self) -> String {
        if self.context {
            format!("{}+ctx", self.level.as_str())
        } else {
            self.level.as_str().to_string()
        }
    }
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (b, a) = (self.before.join(" "), self.after.join(" "));
        match (b.is_empty(), a.is_empty()) {
            (true, _) => write!(f, "+{a}"),
            (false, true) => write!(f, "-{b}"),
            _ => write!(f, "{b} -> {a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRule {
    #[serde(flatten)]
    pub key: TemplateKey,
    /// Candidate ids whose perturbation yields this template.
    pub covered: BTreeSet<String>,
    pub originals: BTreeSet<String>,
    pub unique_originals: usize,
    pub sparsity_weight: f64,
    /// g(t) / |t|_x.
    pub weight: f64,
}

impl TemplateRule {
    /// Whether `p` produces this template.
    pub fn matches(&self, p: &Perturbation) -> bool {
        p.edits.iter().any(|e| {
            edit_keys(p, e).into_iter().any(|k| k == self.key)
        })
    }
}

/// A perturbation tagged with the candidate and original it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedPerturbation {
    pub candidate_id: String,
    pub original_id: String,
    pub perturbation: Perturbation,
}

fn annotated(s: &Sentence) -> bool {
    s.tokens.iter().any(|t| t.upos != "_" && !t.upos.is_empty())
}

/// Context tokens next to an edit: adjacent unchanged tokens that share the
/// span's parent or are that parent. Indices refer to `side`.
fn context_of(side: &Sentence, span: &TokenRange, edited: &BTreeSet<usize>) -> (Option<usize>, Option<usize>) {
    if span.is_empty() {
        return (None, None);
    }
    let top = span
        .clone()
        .find(|&i| side.tokens[i].head.is_none_or(|h| !span.contains(&h)))
        .unwrap_or(span.start);
    let parent = side.tokens[top].head;
    let qualifies = |n: usize| {
        !edited.contains(&n) && (Some(n) == parent || (parent.is_some() && side.tokens[n].head == parent))
    };
    let left = span.start.checked_sub(1).filter(|&n| qualifies(n));
    let right = Some(span.end).filter(|&n| n < side.len() && qualifies(n));
    (left, right)
}

/// Every template key one edit yields.
fn edit_keys(p: &Perturbation, e: &EditSpan) -> Vec<TemplateKey> {
    let (side, span, edited): (&Sentence, &TokenRange, BTreeSet<usize>) = if e.x_range.is_empty() {
        (&p.revised, &e.xhat_range, p.edits.iter().flat_map(|e| e.xhat_range.clone()).collect())
    } else {
        (&p.original, &e.x_range, p.edits.iter().flat_map(|e| e.x_range.clone()).collect())
    };
    let (left, right) = context_of(side, span, &edited);
    let has_context = left.is_some() || right.is_some();
    let mut keys = Vec::with_capacity(8);
    for level in Level::ALL {
        let before: Vec<String> = e.x_range.clone().map(|i| level.slot(&p.original.tokens[i])).collect();
        let after: Vec<String> = e.xhat_range.clone().map(|j| level.slot(&p.revised.tokens[j])).collect();
        if has_context {
            let wrap = |mid: &[String]| -> Vec<String> {
                left.map(|l| level.slot(&side.tokens[l]))
                    .into_iter()
                    .chain(mid.iter().cloned())
                    .chain(right.map(|r| level.slot(&side.tokens[r])))
                    .collect()
            };
            keys.push(TemplateKey { level, context: true, before: wrap(&before), after: wrap(&after) });
        }
        keys.push(TemplateKey { level, context: false, before, after });
    }
    keys
}

/// Extracts and merges templates across perturbations, ordered by key.
pub fn extract_templates(perts: &[TaggedPerturbation], sparsity: &Sparsity) -> Result<Vec<TemplateRule>, TemplateError> {
    sparsity.validate()?;
    for tp in perts {
        if !annotated(&tp.perturbation.original) || !annotated(&tp.perturbation.revised) {
            return Err(TemplateError::Unparsed(tp.candidate_id.clone()));
        }
    }
    let per = crate::pipeline::bounded_map(perts.len(), 8, |i| {
        let p = &perts[i].perturbation;
        p.edits.iter().flat_map(|e| edit_keys(p, e)).collect::<Vec<_>>()
    });
    let mut merged: BTreeMap<TemplateKey, (BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
    for (tp, keys) in perts.iter().zip(per) {
        for k in keys {
            let entry = merged.entry(k).or_default();
            entry.0.insert(tp.candidate_id.clone());
            entry.1.insert(tp.original_id.clone());
        }
    }
    Ok(merged
        .into_iter()
        .map(|(key, (covered, originals))| {
            let g = sparsity.g(key.level, key.context);
            let n = originals.len();
            TemplateRule { covered, unique_originals: n, sparsity_weight: g, weight: g / n as f64, originals, key }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSelection {
    pub chosen: Vec<TemplateRule>,
    pub covered: BTreeSet<String>,
    pub total_weight: f64,
    /// Universe elements no template covers.
    pub uncoverable: Vec<String>,
}

/// Default fraction of the universe to cover.
pub const DEFAULT_BUDGET: f64 = 0.9;

/// Greedy weighted set cover: repeatedly takes the template with the lowest
/// weight per newly covered element until the budget is met.
pub fn select_templates(
    templates: &[TemplateRule],
    universe: &BTreeSet<String>,
    budget: f64,
) -> Result<CoverSelection, TemplateError> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(TemplateError::Budget(budget.to_string()));
    }
    let coverable: BTreeSet<&String> = templates.iter().flat_map(|t| t.covered.iter()).collect();
    let uncoverable: Vec<String> = universe.iter().filter(|u| !coverable.contains(u)).cloned().collect();
    let target = (budget * universe.len() as f64).ceil() as usize;
    let mut covered: BTreeSet<String> = BTreeSet::new();
    let mut used = vec![false; templates.len()];
    let mut chosen = Vec::new();
    let mut total_weight = 0.0;
    while covered.len() < target {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in templates.iter().enumerate() {
            if used[i] {
                continue;
            }
            let fresh = t.covered.iter().filter(|c| universe.contains(*c) && !covered.contains(*c)).count();
            if fresh == 0 {
                continue;
            }
            let ratio = t.weight / fresh as f64;
            let better = match best {
                None => true,
                Some((b, br)) => {
                    ratio < br || (ratio == br && tie_key(t) < tie_key(&templates[b]))
                }
            };
            if better {
                best = Some((i, ratio));
            }
        }
        let Some((i, _)) = best else { break };
        used[i] = true;
        let t = &templates[i];
        covered.extend(t.covered.iter().filter(|c| universe.contains(*c)).cloned());
        total_weight += t.weight;
        chosen.push(t.clone());
    }
    Ok(CoverSelection { chosen, covered, total_weight, uncoverable })
}

fn tie_key(t: &TemplateRule) -> (u64, String) {
    (t.sparsity_weight.to_bits(), t.key.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub template: TemplateRule,
    /// Most frequent original label among covered candidates.
    pub from_label: Option<usize>,
    pub to_labels: BTreeMap<usize, usize>,
    pub flips: usize,
    pub with_predictions: usize,
    pub missing_predictions: usize,
    pub flip_rate: f64,
}

/// Share of covered candidates whose label changed, per template.
pub fn flip_rates(
    selected: &[TemplateRule],
    predictions: &BTreeMap<String, (PredictionRecord, PredictionRecord)>,
) -> Vec<FlipReport> {
    selected
        .iter()
        .map(|t| {
            let mut to_labels = BTreeMap::new();
            let mut from_counts: BTreeMap<usize, usize> = BTreeMap::new();
            let (mut flips, mut with, mut missing) = (0, 0, 0);
            for c in &t.covered {
                match predictions.get(c) {
                    Some((orig, rev)) => {
                        with += 1;
                        *to_labels.entry(rev.label).or_insert(0) += 1;
                        *from_counts.entry(orig.label).or_insert(0) += 1;
                        if orig.label != rev.label {
                            flips += 1;
                        }
                    }
                    None => missing += 1,
                }
            }
            // most frequent; lowest label on ties
            let from_label = from_counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(l, _)| *l);
            FlipReport {
                template: t.clone(),
                from_label,
                to_labels,
                flips,
                with_predictions: with,
                missing_predictions: missing,
                flip_rate: if with == 0 { 0.0 } else { flips as f64 / with as f64 },
            }
        })
        .collect()
}

pub const TSV_HEADER: &str = "before\tafter\tgranularity\tg\tcoverage\tunique_originals\tweight\tflip_rate";

fn tsv_pattern(p: &[String]) -> String {
    if p.is_empty() {
        "_".into()
    } else {
        p.join(" ")
    }
}

/// Tab-separated template table with a header row.
pub fn to_tsv(reports: &[FlipReport]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in reports {
        let t = &r.template;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.4}\n",
            tsv_pattern(&t.key.before),
            tsv_pattern(&t.key.after),
            t.key.granularity(),
            t.sparsity_weight,
            t.covered.len(),
            t.unique_originals,
            t.weight,
            r.flip_rate
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu_str;

    const READING: &str = "\
# sent_id = r
# text = A man is reading.
1\tA\ta\tDET\tDT\t_\t2\tdet\t_\t_
2\tman\tman\tNOUN\tNN\t_\t4\tnsubj\t_\t_
3\tis\tbe\tAUX\tVBZ\t_\t4\taux\t_\t_
4\treading\tread\tVERB\tVBG\t_\t0\troot\t_\tSpaceAfter=No
5\t.\t.\tPUNCT\t.\t_\t4\tpunct\t_\t_

# sent_id = r.neg
# text = A man is not reading.
1\tA\ta\tDET\tDT\t_\t2\tdet\t_\t_
2\tman\tman\tNOUN\tNN\t_\t5\tnsubj\t_\t_
3\tis\tbe\tAUX\tVBZ\t_\t5\taux\t_\t_
4\tnot\tnot\tPART\tRB\t_\t5\tadvmod\t_\t_
5\treading\tread\tVERB\tVBG\t_\t0\troot\t_\tSpaceAfter=No
6\t.\t.\tPUNCT\t.\t_\t5\tpunct\t_\t_

# sent_id = p
# text = Kids are playing.
1\tKids\tkid\tNOUN\tNNS\t_\t3\tnsubj\t_\t_
2\tare\tbe\tAUX\tVBP\t_\t3\taux\t_\t_
3\tplaying\tplay\tVERB\tVBG\t_\t0\troot\t_\tSpaceAfter=No
4\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_

# sent_id = p.neg
# text = Kids are not playing.
1\tKids\tkid\tNOUN\tNNS\t_\t4\tnsubj\t_\t_
2\tare\tbe\tAUX\tVBP\t_\t4\taux\t_\t_
3\tnot\tnot\tPART\tRB\t_\t4\tadvmod\t_\t_
4\tplaying\tplay\tVERB\tVBG\t_\t0\troot\t_\tSpaceAfter=No
5\t.\t.\tPUNCT\t.\t_\t4\tpunct\t_\t_

";

    fn tagged() -> Vec<TaggedPerturbation> {
        let s = parse_conllu_str(READING).unwrap().sentences;
        vec![
            TaggedPerturbation {
                candidate_id: "r.neg".into(),
                original_id: "r".into(),
                perturbation: Perturbation::new(s[0].clone(), s[1].clone()),
            },
            TaggedPerturbation {
                candidate_id: "p.neg".into(),
                original_id: "p".into(),
                perturbation: Perturbation::new(s[2].clone(), s[3].clone()),
            },
        ]
    }

    fn find<'a>(ts: &'a [TemplateRule], display: &str, level: Level, context: bool) -> Option<&'a TemplateRule> {
        ts.iter().find(|t| t.key.to_string() == display && t.key.level == level && t.key.context == context)
    }

    #[test]
    fn negation_templates_shared_and_literal() {
        let ts = extract_templates(&tagged(), &Sparsity::default()).unwrap();
        let literal = find(&ts, "is reading -> is not reading", Level::Text, true).unwrap();
        assert_eq!(literal.covered, ["r.neg".to_string()].into());
        let plus_part = find(&ts, "+PART", Level::Coarse, false).unwrap();
        assert_eq!(plus_part.covered.len(), 2);
        assert_eq!(plus_part.weight, 16.0 / 2.0);
        let plus_not = find(&ts, "+not", Level::Text, false).unwrap();
        assert_eq!(plus_not.covered.len(), 2);
        assert!(find(&ts, "are playing -> are not playing", Level::Text, true).is_some());
    }

    #[test]
    fn templates_match_their_covered_perturbations() {
        let tagged = tagged();
        let ts = extract_templates(&tagged, &Sparsity::default()).unwrap();
        for t in &ts {
            for tp in &tagged {
                assert_eq!(t.matches(&tp.perturbation), t.covered.contains(&tp.candidate_id), "{}", t.key);
            }
        }
    }

    #[test]
    fn greedy_prefers_lower_weight_on_equal_sets() {
        let ts = extract_templates(&tagged(), &Sparsity::default()).unwrap();
        let universe: BTreeSet<String> = ["r.neg".to_string(), "p.neg".to_string()].into();
        let sel = select_templates(&ts, &universe, 1.0).unwrap();
        assert_eq!(sel.chosen.len(), 1);
        assert_eq!(sel.chosen[0].key.to_string(), "+not");
        assert_eq!(sel.chosen[0].key.level, Level::Text);
        assert!(sel.uncoverable.is_empty());
    }

    #[test]
    fn uncoverable_reported() {
        let ts = extract_templates(&tagged(), &Sparsity::default()).unwrap();
        let universe: BTreeSet<String> = ["r.neg".to_string(), "ghost".to_string()].into();
        let sel = select_templates(&ts, &universe, 1.0).unwrap();
        assert_eq!(sel.uncoverable, vec!["ghost".to_string()]);
        assert_eq!(sel.covered.len(), 1);
        assert!(select_templates(&ts, &universe, 0.0).is_err());
    }

    #[test]
    fn flip_rate_counts() {
        let rule = TemplateRule {
            key: TemplateKey { level: Level::Text, context: false, before: vec![], after: vec!["no".into()] },
            covered: (0..15).map(|i| format!("c{i:02}")).collect(),
            originals: ["x".to_string()].into(),
            unique_originals: 1,
            sparsity_weight: 2.0,
            weight: 2.0,
        };
        let p = |l: usize| PredictionRecord::from_probs(if l == 0 { vec![0.9, 0.1] } else { vec![0.1, 0.9] });
        let preds: BTreeMap<String, (PredictionRecord, PredictionRecord)> =
            (0..14).map(|i| (format!("c{i:02}"), (p(0), p(if i == 0 { 0 } else { 1 })))).collect();
        let r = &flip_rates(&[rule], &preds)[0];
        assert_eq!((r.flips, r.with_predictions, r.missing_predictions), (13, 14, 1));
        assert!((r.flip_rate - 13.0 / 14.0).abs() < 1e-12);
        assert_eq!(format!("{:.3}", r.flip_rate), "0.929");
        assert_eq!(r.to_labels.values().sum::<usize>(), r.with_predictions);
        let tsv = to_tsv(std::slice::from_ref(r));
        assert!(tsv.starts_with(TSV_HEADER));
        assert!(tsv.contains("_\tno\ttext\t2\t15\t1\t2.000000\t0.9286"));
    }
}

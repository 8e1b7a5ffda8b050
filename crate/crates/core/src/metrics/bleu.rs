//! Sentence BLEU-4 and self-BLEU.

use std::collections::HashMap;

use crate::corpus::split_words;

pub const MAX_ORDER: usize = 4;

pub fn tokenize(text: &str) -> Vec<&str> {
    split_words(text).into_iter().map(|w| &text[w.range]).collect()
}

fn ngrams<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w.to_vec()).or_insert(0) += 1;
    }
    m
}

/// BLEU-4 of `hyp` against `refs`: uniform weights, clipped counts, add-one
/// smoothing for orders two and up, closest-reference brevity penalty.
pub fn sentence_bleu(hyp: &[&str], refs: &[Vec<&str>]) -> f64 {
    let c = hyp.len();
    if c == 0 || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let h = ngrams(hyp, n);
        let mut max_ref: HashMap<&Vec<&str>, usize> = HashMap::new();
        for r in refs {
            let rc = ngrams(r, n);
            for g in h.keys() {
                let k = rc.get(g).copied().unwrap_or(0);
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let clipped: usize = h.iter().map(|(g, &k)| k.min(max_ref[g])).sum();
        let total = c.saturating_sub(n - 1);
        let p = if n == 1 {
            clipped as f64 / total as f64
        } else {
            (clipped as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln() / MAX_ORDER as f64;
    }
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_sum.exp()
}

/// Mean BLEU of each element against all others; `None` for fewer than two.
pub fn self_bleu<S: AsRef<str>>(set: &[S]) -> Option<f64> {
    if set.len() < 2 {
        return None;
    }
    let toks: Vec<Vec<&str>> = set.iter().map(|s| tokenize(s.as_ref())).collect();
    let mut scores: Vec<f64> = (0..toks.len())
        .map(|i| {
            let refs: Vec<Vec<&str>> = toks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| t.clone()).collect();
            sentence_bleu(&toks[i], &refs)
        })
        .collect();
    // summing in sorted order keeps the mean independent of input order
    scores.sort_by(f64::total_cmp);
    Some(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_set_is_one() {
        let v = self_bleu(&["the dog runs fast .", "the dog runs fast .", "the dog runs fast ."]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(self_bleu(&["a b c", "d e f"]), Some(0.0));
    }

    #[test]
    fn too_small() {
        assert_eq!(self_bleu(&["only"]), None);
    }

    #[test]
    fn short_hypothesis_brevity() {
        let v = sentence_bleu(&["a", "b"], &[vec!["a", "b", "c", "d"]]);
        // p1 = 1, p2 = 2/2, p3 = 1/1, p4 = 1/1; bp = e^(1-2)
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
    }
}

//! BLEU-4 over pre-tokenized text, written from the textbook definition.

use std::collections::BTreeMap;

fn counts(tokens: &[String], n: usize) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    if tokens.len() < n {
        return out;
    }
    for i in 0..=tokens.len() - n {
        *out.entry(tokens[i..i + n].join("\u{1}")).or_insert(0) += 1;
    }
    out
}

pub fn bleu(hyp: &[String], refs: &[Vec<String>]) -> f64 {
    if hyp.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut precisions = [0.0f64; 4];
    for n in 1..=4 {
        let h = counts(hyp, n);
        let ref_counts: Vec<BTreeMap<String, usize>> = refs.iter().map(|r| counts(r, n)).collect();
        let mut matched = 0usize;
        let mut total = 0usize;
        for (gram, c) in &h {
            let best = ref_counts.iter().map(|rc| *rc.get(gram).unwrap_or(&0)).max().unwrap_or(0);
            matched += (*c).min(best);
            total += *c;
        }
        precisions[n - 1] = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
    }
    if precisions[0] == 0.0 {
        return 0.0;
    }
    // closest reference length, shorter one on ties
    let c = hyp.len() as i64;
    let mut r = refs[0].len() as i64;
    for rf in refs {
        let l = rf.len() as i64;
        if (l - c).abs() < (r - c).abs() || ((l - c).abs() == (r - c).abs() && l < r) {
            r = l;
        }
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    let geo = precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0;
    bp * geo.exp()
}

pub fn self_bleu(set: &[Vec<String>]) -> f64 {
    let mut total = 0.0;
    for i in 0..set.len() {
        let refs: Vec<Vec<String>> = set.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.clone()).collect();
        total += bleu(&set[i], &refs);
    }
    total / set.len() as f64
}

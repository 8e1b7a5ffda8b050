//! Instance generators for exhaustive and randomized checks.

use rand::Rng;

/// A tree as parallel label and parent arrays.
pub type ParentTree = (Vec<String>, Vec<Option<usize>>);

/// All ordered trees with exactly `n` nodes, shapes only, in preorder numbering.
fn shapes(n: usize) -> Vec<Vec<Option<usize>>> {
    // a forest of m nodes hanging under `parent`, numbered from `offset`
    fn forests(m: usize, parent: usize, offset: usize) -> Vec<Vec<Option<usize>>> {
        if m == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for k in 1..=m {
            for first in forests(k - 1, offset, offset + 1) {
                for rest in forests(m - k, parent, offset + k) {
                    let mut v = vec![Some(parent)];
                    v.extend(first.iter().copied());
                    v.extend(rest.iter().copied());
                    out.push(v);
                }
            }
        }
        out
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    forests(n - 1, 0, 1)
        .into_iter()
        .map(|f| {
            let mut v = vec![None];
            v.extend(f);
            v
        })
        .collect()
}

/// Every ordered tree of `1..=max_nodes` nodes labelled from `alphabet`.
pub fn all_trees(max_nodes: usize, alphabet: &[&str]) -> Vec<ParentTree> {
    let mut out = Vec::new();
    for n in 1..=max_nodes {
        for shape in shapes(n) {
            let combos = alphabet.len().pow(n as u32);
            for c in 0..combos {
                let mut rest = c;
                let labels = (0..n)
                    .map(|_| {
                        let l = alphabet[rest % alphabet.len()].to_string();
                        rest /= alphabet.len();
                        l
                    })
                    .collect();
                out.push((labels, shape.clone()));
            }
        }
    }
    out
}

/// A random tree with `n` nodes: each node hangs under an earlier one.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, alphabet: &[&str]) -> ParentTree {
    let labels = (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string()).collect();
    let parents = (0..n).map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) }).collect();
    (labels, parents)
}

/// Random words drawn from a small vocabulary so n-grams repeat.
pub fn random_words<R: Rng>(rng: &mut R, len: usize, vocab: &[&str]) -> Vec<String> {
    (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ted;

    #[test]
    fn shape_counts_are_catalan() {
        let counts: Vec<usize> = (1..=5).map(|n| shapes(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 14]);
    }

    #[test]
    fn labelled_tree_count() {
        assert_eq!(all_trees(4, &["a", "b"]).len(), 2 + 4 + 16 + 80);
    }

    #[test]
    fn oracle_small_cases() {
        let t = |l: &[&str], p: &[Option<usize>]| ted::forest(&l.iter().map(|s| s.to_string()).collect::<Vec<_>>(), p);
        let chain3 = t(&["a", "b", "c"], &[None, Some(0), Some(1)]);
        let chain2 = t(&["a", "c"], &[None, Some(0)]);
        assert_eq!(ted::edit_distance(&chain3, &chain2), 1);
        let star = t(&["a", "b", "c"], &[None, Some(0), Some(0)]);
        assert_eq!(ted::edit_distance(&chain3, &star), 2);
        assert_eq!(ted::edit_distance(&star, &star), 0);
    }
}

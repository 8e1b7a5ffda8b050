//! Ordered labeled tree edit distance (Zhang–Shasha) over dependency trees.

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;

/// Which token field labels a tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Deprel,
    Upos,
    DeprelUpos,
}

/// An ordered forest; children of each node are kept in surface order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub labels: Vec<String>,
    pub parents: Vec<Option<usize>>,
}

impl Tree {
    /// `parents` must be acyclic; roots may be several (a forest).
    pub fn from_parents(labels: Vec<String>, parents: Vec<Option<usize>>) -> Self {
        assert_eq!(labels.len(), parents.len(), "one parent per node");
        Tree { labels, parents }
    }

    pub fn from_sentence(s: &Sentence, mode: LabelMode) -> Self {
        let labels = s
            .tokens
            .iter()
            .map(|t| match mode {
                LabelMode::Deprel => t.deprel.clone(),
                LabelMode::Upos => t.upos.clone(),
                LabelMode::DeprelUpos => format!("{}/{}", t.deprel, t.upos),
            })
            .collect();
        Tree::from_parents(labels, s.tokens.iter().map(|t| t.head).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn children(&self, of: Option<usize>) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.parents[i] == of).collect()
    }

    /// Postorder labels and leftmost-leaf indices, under a virtual root that
    /// joins the forest into one tree.
    fn postorder(&self) -> (Vec<Option<&str>>, Vec<usize>) {
        let mut labels = Vec::with_capacity(self.len() + 1);
        let mut lml = Vec::with_capacity(self.len() + 1);
        fn walk<'a>(t: &'a Tree, node: Option<usize>, labels: &mut Vec<Option<&'a str>>, lml: &mut Vec<usize>) -> usize {
            let mut leftmost = None;
            for c in t.children(node) {
                let l = walk(t, Some(c), labels, lml);
                leftmost.get_or_insert(l);
            }
            let me = labels.len();
            labels.push(node.map(|n| t.labels[n].as_str()));
            let l = leftmost.unwrap_or(me);
            lml.push(l);
            l
        }
        walk(self, None, &mut labels, &mut lml);
        (labels, lml)
    }
}

/// Unit-cost insert/delete/relabel distance.
pub fn zhang_shasha(a: &Tree, b: &Tree) -> usize {
    let (la, lmla) = a.postorder();
    let (lb, lmlb) = b.postorder();
    let keyroots = |lml: &[usize]| -> Vec<usize> {
        (0..lml.len()).filter(|&i| !(i + 1..lml.len()).any(|j| lml[j] == lml[i])).collect()
    };
    let (ka, kb) = (keyroots(&lmla), keyroots(&lmlb));
    let mut td = vec![vec![0usize; lb.len()]; la.len()];
    for &i in &ka {
        for &j in &kb {
            let (li, lj) = (lmla[i], lmlb[j]);
            let (rows, cols) = (i - li + 2, j - lj + 2);
            let mut fd = vec![vec![0usize; cols]; rows];
            for di in 1..rows {
                fd[di][0] = fd[di - 1][0] + 1;
            }
            for dj in 1..cols {
                fd[0][dj] = fd[0][dj - 1] + 1;
            }
            for di in 1..rows {
                let x = li + di - 1;
                for dj in 1..cols {
                    let y = lj + dj - 1;
                    let del = fd[di - 1][dj] + 1;
                    let ins = fd[di][dj - 1] + 1;
                    if lmla[x] == li && lmlb[y] == lj {
                        let rel = fd[di - 1][dj - 1] + usize::from(la[x] != lb[y]);
                        fd[di][dj] = del.min(ins).min(rel);
                        td[x][y] = fd[di][dj];
                    } else {
                        let sub = fd[lmla[x] - li][lmlb[y] - lj] + td[x][y];
                        fd[di][dj] = del.min(ins).min(sub);
                    }
                }
            }
        }
    }
    td[la.len() - 1][lb.len() - 1]
}

pub fn tree_edit_distance(a: &Sentence, b: &Sentence, mode: LabelMode) -> f64 {
    zhang_shasha(&Tree::from_sentence(a, mode), &Tree::from_sentence(b, mode)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(labels: &[&str], parents: &[Option<usize>]) -> Tree {
        Tree::from_parents(labels.iter().map(|s| s.to_string()).collect(), parents.to_vec())
    }

    #[test]
    fn identical_and_relabel() {
        let a = t(&["root", "nsubj", "obj"], &[None, Some(0), Some(0)]);
        assert_eq!(zhang_shasha(&a, &a), 0);
        let b = t(&["root", "nsubj", "iobj"], &[None, Some(0), Some(0)]);
        assert_eq!(zhang_shasha(&a, &b), 1);
    }

    #[test]
    fn empty_trees() {
        let e = t(&[], &[]);
        let a = t(&["x", "y"], &[None, Some(0)]);
        assert_eq!(zhang_shasha(&e, &a), 2);
        assert_eq!(zhang_shasha(&a, &e), 2);
        assert_eq!(zhang_shasha(&e, &e), 0);
    }

    #[test]
    fn classic_example() {
        // f(d(a c(b)) e) vs f(c(d(a b)) e): distance 2
        let a = t(&["f", "d", "a", "c", "b", "e"], &[None, Some(0), Some(1), Some(1), Some(3), Some(0)]);
        let b = t(&["f", "c", "d", "a", "b", "e"], &[None, Some(0), Some(1), Some(2), Some(2), Some(0)]);
        assert_eq!(zhang_shasha(&a, &b), 2);
    }

    #[test]
    fn order_matters() {
        let a = t(&["r", "x", "y"], &[None, Some(0), Some(0)]);
        let b = t(&["r", "y", "x"], &[None, Some(0), Some(0)]);
        assert_eq!(zhang_shasha(&a, &b), 2);
    }
}

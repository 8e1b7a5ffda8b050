//! Tree edit distance by breadth-first search over edit scripts.
//!
//! An optimal script can be reordered into deletions, then relabels, then
//! insertions, so the search only visits forests no larger than the bigger
//! input and only uses labels that occur in either input.

use std::collections::{HashMap, HashSet, VecDeque};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub label: String,
    pub children: Vec<Node>,
}

pub type Forest = Vec<Node>;

/// Ordered forest from a parent array; children follow index order.
pub fn forest(labels: &[String], parents: &[Option<usize>]) -> Forest {
    fn build(i: usize, labels: &[String], parents: &[Option<usize>]) -> Node {
        let children = (0..labels.len()).filter(|&j| parents[j] == Some(i)).map(|j| build(j, labels, parents)).collect();
        Node { label: labels[i].clone(), children }
    }
    (0..labels.len()).filter(|&i| parents[i].is_none()).map(|i| build(i, labels, parents)).collect()
}

pub fn size(f: &[Node]) -> usize {
    f.iter().map(|n| 1 + size(&n.children)).sum()
}

fn labels_of(f: &[Node], out: &mut HashSet<String>) {
    for n in f {
        out.insert(n.label.clone());
        labels_of(&n.children, out);
    }
}

/// Every forest one edit away from `list`, within `room` extra nodes.
fn variants(list: &[Node], alphabet: &[String], room: bool) -> Vec<Vec<Node>> {
    let mut out = Vec::new();
    for i in 0..list.len() {
        // delete child i, splicing its children in its place
        let mut v = list[..i].to_vec();
        v.extend(list[i].children.iter().cloned());
        v.extend(list[i + 1..].iter().cloned());
        out.push(v);
        // relabel child i
        for l in alphabet {
            if *l != list[i].label {
                let mut v = list.to_vec();
                v[i].label = l.clone();
                out.push(v);
            }
        }
        // edit inside child i
        for inner in variants(&list[i].children, alphabet, room) {
            let mut v = list.to_vec();
            v[i].children = inner;
            out.push(v);
        }
    }
    if room {
        // insert a node adopting list[a..b]
        for a in 0..=list.len() {
            for b in a..=list.len() {
                for l in alphabet {
                    let mut v = list[..a].to_vec();
                    v.push(Node { label: l.clone(), children: list[a..b].to_vec() });
                    v.extend(list[b..].iter().cloned());
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Edit distance between two ordered labeled forests with unit costs.
pub fn edit_distance(a: &Forest, b: &Forest) -> usize {
    if a == b {
        return 0;
    }
    let mut labels = HashSet::new();
    labels_of(a, &mut labels);
    labels_of(b, &mut labels);
    let mut alphabet: Vec<String> = labels.into_iter().collect();
    alphabet.sort();
    let bound = size(a).max(size(b));
    let mut seen: HashMap<Forest, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(a.clone(), 0);
    queue.push_back(a.clone());
    while let Some(f) = queue.pop_front() {
        let d = seen[&f];
        for next in variants(&f, &alphabet, size(&f) < bound) {
            if seen.contains_key(&next) {
                continue;
            }
            if next == *b {
                return d + 1;
            }
            seen.insert(next.clone(), d + 1);
            queue.push_back(next);
        }
    }
    unreachable!("every forest is reachable by deleting and inserting")
}

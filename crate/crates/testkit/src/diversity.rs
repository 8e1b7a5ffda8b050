//! Step-by-step greedy least-similar selection.

/// Plain signature: code tag plus sorted removed/added token lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sig {
    pub code: u8,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

fn sim(a: &Sig, b: &Sig, w: (f64, f64, f64)) -> f64 {
    let mut s = 0.0;
    if a.code == b.code {
        s += w.0;
    }
    if a.removed == b.removed {
        s += w.1;
    }
    if a.added == b.added {
        s += w.2;
    }
    s
}

pub fn greedy(pool: &[Sig], k: usize, w: (f64, f64, f64)) -> Vec<usize> {
    if k >= pool.len() {
        return (0..pool.len()).collect();
    }
    // first pick: lowest maximum similarity to the rest of the pool
    let mut first = 0;
    let mut first_score = f64::INFINITY;
    for i in 0..pool.len() {
        let mut worst = 0.0f64;
        for j in 0..pool.len() {
            if i != j {
                worst = worst.max(sim(&pool[i], &pool[j], w));
            }
        }
        if worst < first_score {
            first_score = worst;
            first = i;
        }
    }
    let mut chosen = vec![first];
    while chosen.len() < k {
        let mut best = None;
        let mut best_score = f64::INFINITY;
        for i in 0..pool.len() {
            if chosen.contains(&i) {
                continue;
            }
            let mut worst = 0.0f64;
            for &j in &chosen {
                worst = worst.max(sim(&pool[i], &pool[j], w));
            }
            if worst < best_score {
                best_score = worst;
                best = Some(i);
            }
        }
        chosen.push(best.expect("pool larger than k"));
    }
    chosen
}

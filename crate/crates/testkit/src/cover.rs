//! Exhaustive minimum-weight set cover.

/// Lowest total weight of a subfamily covering every element of `0..universe`;
/// `None` if no subfamily does.
pub fn optimal_cover(sets: &[(Vec<usize>, f64)], universe: usize) -> Option<f64> {
    assert!(sets.len() <= 20, "exhaustive search only");
    let full: u64 = if universe == 64 { u64::MAX } else { (1u64 << universe) - 1 };
    let masks: Vec<u64> = sets.iter().map(|(s, _)| s.iter().fold(0u64, |m, &e| m | (1 << e))).collect();
    let mut best: Option<f64> = None;
    for pick in 0u32..(1u32 << sets.len()) {
        let mut mask = 0u64;
        let mut w = 0.0;
        for (i, m) in masks.iter().enumerate() {
            if pick & (1 << i) != 0 {
                mask |= m;
                w += sets[i].1;
            }
        }
        if mask & full == full && best.is_none_or(|b| w < b) {
            best = Some(w);
        }
    }
    best
}

/// The n-th harmonic number.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

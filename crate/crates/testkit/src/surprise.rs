//! Literal evaluation of the surprise-selection formulas.

pub struct Instance {
    /// Attribution weight per original token.
    pub s: Vec<f64>,
    /// Per candidate: edited positions, removed positions, prediction change.
    pub cands: Vec<(Vec<usize>, Vec<usize>, f64)>,
}

pub struct Outcome {
    pub d: Vec<f64>,
    pub delta_d: Vec<f64>,
    pub t_l: usize,
    pub t_u: usize,
    pub xhat_l: Option<usize>,
    pub xhat_u: Option<usize>,
}

pub fn evaluate(inst: &Instance) -> Outcome {
    let n = inst.s.len();
    let mut d = vec![0.0; n];
    let mut delta_d = vec![0.0; n];
    for t in 0..n {
        let mut sum = inst.s[t];
        let mut g = 0usize;
        for (edited, _, delta) in &inst.cands {
            if edited.contains(&t) {
                g += 1;
                sum += (1.0 / edited.len() as f64) * delta;
            }
        }
        d[t] = sum / (g as f64 + 1.0);
        delta_d[t] = d[t] - inst.s[t];
    }
    let mut t_l = 0;
    let mut t_u = 0;
    for t in 1..n {
        if delta_d[t] > delta_d[t_l] {
            t_l = t;
        }
        if -delta_d[t] > -delta_d[t_u] {
            t_u = t;
        }
    }
    let objective = |c: usize| {
        let (_, removed, delta) = &inst.cands[c];
        delta - removed.iter().map(|&u| inst.s[u]).sum::<f64>()
    };
    let mut xhat_l: Option<usize> = None;
    let mut xhat_u: Option<usize> = None;
    for c in 0..inst.cands.len() {
        if inst.cands[c].0.contains(&t_l) && xhat_l.is_none_or(|b| objective(c) > objective(b)) {
            xhat_l = Some(c);
        }
        if inst.cands[c].0.contains(&t_u) && xhat_u.is_none_or(|b| objective(c) < objective(b)) {
            xhat_u = Some(c);
        }
    }
    Outcome { d, delta_d, t_l, t_u, xhat_l, xhat_u }
}

//! Core implementations against the independent reference oracles.

use std::collections::BTreeSet;

use cfkit_core::diff::{levenshtein, levenshtein_norm_tokens};
use cfkit_core::metrics::{bleu, zhang_shasha, Tree};
use cfkit_core::selection::{diversity_select, surprise_scores, DiversityWeights, SelectionSignature, SurpriseInput};
use cfkit_core::templates::{select_templates, Level, TemplateKey, TemplateRule};
use cfkit_core::ControlCode;
use cfkit_testkit::{cover, diversity, gen, lev, surprise, ted};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn tree_distance_matches_search_on_all_small_trees() {
    let trees = gen::all_trees(3, &["a", "b"]);
    for (la, pa) in &trees {
        for (lb, pb) in &trees {
            let core = zhang_shasha(&Tree::from_parents(la.clone(), pa.clone()), &Tree::from_parents(lb.clone(), pb.clone()));
            let oracle = ted::edit_distance(&ted::forest(la, pa), &ted::forest(lb, pb));
            assert_eq!(core, oracle, "{la:?} {pa:?} vs {lb:?} {pb:?}");
        }
    }
}

#[test]
fn three_chain_vs_two_chain() {
    let l = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let a = (l(&["root", "obj", "det"]), vec![None, Some(0), Some(1)]);
    let b = (l(&["root", "obj"]), vec![None, Some(0)]);
    let oracle = ted::edit_distance(&ted::forest(&a.0, &a.1), &ted::forest(&b.0, &b.1));
    assert_eq!(oracle, 1);
    assert_eq!(zhang_shasha(&Tree::from_parents(a.0, a.1), &Tree::from_parents(b.0, b.1)), 1);
}

#[test]
fn levenshtein_matches_dp() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vocab = ["a", "b", "c", "d"];
    for _ in 0..1000 {
        let (n, m) = (rng.random_range(0..9), rng.random_range(0..9));
        let a = gen::random_words(&mut rng, n, &vocab);
        let b = gen::random_words(&mut rng, m, &vocab);
        assert_eq!(levenshtein(&a, &b), lev::levenshtein(&a, &b));
        assert_eq!(levenshtein_norm_tokens(&a, &b), lev::levenshtein_norm(&a, &b));
    }
}

#[test]
fn bleu_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let vocab = ["the", "dog", "cat", "runs", "fast", "slowly", "a"];
    for _ in 0..100 {
        let k = rng.random_range(2..6);
        let set: Vec<Vec<String>> = (0..k).map(|_| {
            let n = rng.random_range(1..9);
            gen::random_words(&mut rng, n, &vocab)
        }).collect();
        let joined: Vec<String> = set.iter().map(|s| s.join(" ")).collect();
        let core = bleu::self_bleu(&joined).unwrap();
        let oracle = cfkit_testkit::bleu::self_bleu(&set);
        assert!((core - oracle).abs() <= 1e-9, "{joined:?}: {core} vs {oracle}");
    }
}

#[test]
fn bleu_reference_examples() {
    let w = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    // frozen from the reference implementation
    let v = cfkit_testkit::bleu::self_bleu(&[w("a b c"), w("d e f")]);
    assert_eq!(v, 0.0);
    let same = vec![w("x y z w"); 3];
    assert_eq!(cfkit_testkit::bleu::self_bleu(&same), 1.0);
    let mut more = same.clone();
    more.push(w("p q r s"));
    let lower = bleu::self_bleu(&more.iter().map(|s| s.join(" ")).collect::<Vec<_>>()).unwrap();
    assert!(lower < 1.0);
    assert!((lower - cfkit_testkit::bleu::self_bleu(&more)).abs() < 1e-12);
}

fn random_surprise(rng: &mut ChaCha8Rng) -> surprise::Instance {
    let n = rng.random_range(1..=10);
    let s = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = rng.random_range(1..=20);
    let cands = (0..c)
        .map(|_| {
            let mut edited: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
            if edited.is_empty() {
                edited.push(rng.random_range(0..n));
            }
            let removed: Vec<usize> = edited.iter().copied().filter(|_| rng.random_bool(0.7)).collect();
            (edited, removed, rng.random_range(0.0..1.0))
        })
        .collect();
    surprise::Instance { s, cands }
}

#[test]
fn surprise_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let inst = random_surprise(&mut rng);
        let inputs: Vec<SurpriseInput> = inst
            .cands
            .iter()
            .map(|(e, r, d)| SurpriseInput { edited: e.iter().copied().collect(), removed: r.iter().copied().collect(), delta: *d })
            .collect();
        let core = surprise_scores(&inst.s, &inputs).unwrap();
        let oracle = surprise::evaluate(&inst);
        for (row, (d, dd)) in core.table.iter().zip(oracle.d.iter().zip(&oracle.delta_d)) {
            assert!((row.d - d).abs() <= 1e-9 && (row.delta_d - dd).abs() <= 1e-9);
        }
        assert_eq!((core.t_l, core.t_u, core.xhat_l, core.xhat_u), (oracle.t_l, oracle.t_u, oracle.xhat_l, oracle.xhat_u));
    }
}

fn rule(i: usize, covered: &[usize], g: f64, originals: usize) -> TemplateRule {
    TemplateRule {
        key: TemplateKey { level: Level::Text, context: false, before: vec![], after: vec![format!("t{i:02}")] },
        covered: covered.iter().map(|e| format!("e{e:02}")).collect(),
        originals: (0..originals).map(|o| format!("x{o}")).collect(),
        unique_originals: originals,
        sparsity_weight: g,
        weight: g / originals as f64,
    }
}

fn random_cover(rng: &mut ChaCha8Rng) -> (Vec<TemplateRule>, usize) {
    let universe = rng.random_range(1..=12);
    let m = rng.random_range(1..=10);
    let mut rules: Vec<TemplateRule> = (0..m)
        .map(|i| {
            let covered: Vec<usize> = (0..universe).filter(|_| rng.random_bool(0.35)).collect();
            let covered = if covered.is_empty() { vec![rng.random_range(0..universe)] } else { covered };
            let g = [1.0, 2.0, 4.0, 8.0, 16.0][rng.random_range(0..5)];
            rule(i, &covered, g, rng.random_range(1..4))
        })
        .collect();
    // make every element coverable
    let covered: BTreeSet<String> = rules.iter().flat_map(|r| r.covered.iter().cloned()).collect();
    let missing: Vec<usize> = (0..universe).filter(|e| !covered.contains(&format!("e{e:02}"))).collect();
    if !missing.is_empty() {
        rules.push(rule(m, &missing, 16.0, 1));
    }
    (rules, universe)
}

#[test]
fn greedy_cover_within_harmonic_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..300 {
        let (rules, n) = random_cover(&mut rng);
        let universe: BTreeSet<String> = (0..n).map(|e| format!("e{e:02}")).collect();
        let sel = select_templates(&rules, &universe, 1.0).unwrap();
        assert_eq!(sel.covered, universe);
        let sets: Vec<(Vec<usize>, f64)> = rules
            .iter()
            .map(|r| (r.covered.iter().map(|c| c[1..].parse().unwrap()).collect(), r.weight))
            .collect();
        let opt = cover::optimal_cover(&sets, n).unwrap();
        assert!(sel.total_weight <= cover::harmonic(n) * opt + 1e-9, "{} > H({n}) * {opt}", sel.total_weight);
    }
}

fn to_core(s: &diversity::Sig) -> SelectionSignature {
    SelectionSignature {
        code: ControlCode::STEERABLE[s.code as usize],
        removed: s.removed.iter().map(String::as_str).collect(),
        added: s.added.iter().map(String::as_str).collect(),
        tree_shape: String::new(),
    }
}

#[test]
fn diversity_matches_reference_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let words = ["a", "b", "c"];
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let pool: Vec<diversity::Sig> = (0..n)
            .map(|_| {
                let (nr, na) = (rng.random_range(0..2), rng.random_range(0..2));
                let mut removed = gen::random_words(&mut rng, nr, &words);
                let mut added = gen::random_words(&mut rng, na, &words);
                removed.sort();
                added.sort();
                diversity::Sig { code: rng.random_range(0..3), removed, added }
            })
            .collect();
        let k = rng.random_range(1..=3);
        let core = diversity_select(&pool.iter().map(to_core).collect::<Vec<_>>(), k, &DiversityWeights::default()).unwrap();
        assert_eq!(core, diversity::greedy(&pool, k, (0.2, 0.4, 0.4)));
    }
}

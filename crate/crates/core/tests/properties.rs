//! Property tests for the documented invariants.

use std::collections::BTreeSet;

use cfkit_core::backends::{MockBackend, PredictionRecord};
use cfkit_core::corpus::{normalize_spaces, parse_conllu_str, Sentence};
use cfkit_core::ctrlcode::{classify, ClassifierConfig, ControlCode};
use cfkit_core::diff::{align_tokens, levenshtein, levenshtein_norm_tokens, replay, Perturbation};
use cfkit_core::metrics::{self_bleu, zhang_shasha, Tree};
use cfkit_core::pipeline::{generate_candidates, passes_fluency, PipelineConfig};
use cfkit_core::prompting::{enumerate_blanks, parse_prompt, render_prompt, BlankConfig, BlankMode, Prompt};
use cfkit_core::selection::{contrast_partition, diversity_select, diversity_select_ranked, DiversityWeights, Labeled, SelectionSignature};
use cfkit_core::templates::{flip_rates, select_templates, Level, TemplateKey, TemplateRule};
use cfkit_testkit::{fixture, ted};
use proptest::prelude::*;

const WORDS: [&str; 8] = ["the", "dog", "cat", "sees", "a", "big", "red", "ball"];

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(WORDS.to_vec()).prop_map(String::from)
}

fn words(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(word(), 0..=max)
}

/// A parent array where every node hangs under an earlier one.
fn parents(n: usize) -> impl Strategy<Value = Vec<Option<usize>>> {
    (1..n.max(2))
        .map(|i| (0..i).prop_map(Some).boxed())
        .collect::<Vec<_>>()
        .prop_map(move |mut v| {
            v.insert(0, None);
            v.truncate(n);
            v
        })
}

fn labelled_tree(max: usize) -> impl Strategy<Value = (Vec<String>, Vec<Option<usize>>)> {
    (1..=max).prop_flat_map(|n| {
        (prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from), n), parents(n))
    })
}

fn conllu_block(forms: &[String], heads: &[Option<usize>]) -> String {
    let mut s = format!("# sent_id = g\n# text = {}\n", forms.join(" "));
    for (i, (f, h)) in forms.iter().zip(heads).enumerate() {
        let head = h.map_or(0, |h| h + 1);
        let rel = if h.is_none() { "root" } else { "dep" };
        s.push_str(&format!("{}\t{f}\t{f}\tX\tX\t_\t{head}\t{rel}\t_\t_\n", i + 1));
    }
    s.push('\n');
    s
}

fn sentence_strategy() -> impl Strategy<Value = String> {
    (1..=8usize).prop_flat_map(|n| (prop::collection::vec(word(), n), parents(n))).prop_map(|(f, h)| conllu_block(&f, &h))
}

fn corpus() -> Vec<Sentence> {
    parse_conllu_str(&fixture("corpus.conllu")).unwrap().sentences
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conllu_round_trip(block in sentence_strategy()) {
        let ds = parse_conllu_str(&block).unwrap();
        prop_assert_eq!(ds.sentences[0].to_conllu(), block);
    }

    #[test]
    fn children_partition_subtrees(block in sentence_strategy()) {
        let s = parse_conllu_str(&block).unwrap().sentences.remove(0);
        for i in 0..s.len() {
            let sub: BTreeSet<usize> = s.subtree_indices(i).unwrap().into_iter().collect();
            let mut union = BTreeSet::from([i]);
            for c in s.children(i) {
                for j in s.subtree_indices(c).unwrap() {
                    prop_assert!(union.insert(j), "overlap at {}", j);
                }
            }
            prop_assert_eq!(&union, &sub);
            let contiguous = sub.iter().max().unwrap() - sub.iter().min().unwrap() + 1 == sub.len();
            prop_assert_eq!(s.subtree_range(i).unwrap().is_some(), contiguous);
        }
    }

    #[test]
    fn levenshtein_is_a_metric(a in words(7), b in words(7), c in words(7)) {
        prop_assert_eq!(levenshtein_norm_tokens(&a, &b), levenshtein_norm_tokens(&b, &a));
        prop_assert_eq!(levenshtein_norm_tokens(&a, &b) == 0.0, a == b);
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }

    #[test]
    fn alignment_replays(x in words(8), ops in prop::collection::vec((0usize..10, 0u8..3, word()), 0..4)) {
        let mut y = x.clone();
        for (pos, op, w) in ops {
            let at = pos % (y.len() + 1);
            match op {
                0 => y.insert(at, w),
                1 if at < y.len() => { y.remove(at); }
                _ if at < y.len() => y[at] = w,
                _ => {}
            }
        }
        let edits = align_tokens(&x, &y);
        prop_assert_eq!(replay(&x, &y, &edits), Some(y.clone()));
        prop_assert!(align_tokens(&x, &x).is_empty());
    }

    #[test]
    fn insert_and_delete_codes_are_one_sided(x in prop::collection::vec(word(), 1..8), y in prop::collection::vec(word(), 1..8)) {
        let sx = Sentence::shallow("x", &x.join(" "));
        let sy = Sentence::shallow("y", &y.join(" "));
        let p = Perturbation::new(sx, sy);
        let cfg = ClassifierConfig::default();
        let code = classify(&p, &cfg);
        prop_assert_eq!(code, classify(&p, &cfg));
        let v = p.views();
        if code == ControlCode::Insert { prop_assert!(v.removed.is_empty()); }
        if code == ControlCode::Delete { prop_assert!(v.added.is_empty()); }
    }

    #[test]
    fn prompt_round_trip(
        text in prop::collection::vec(word(), 1..6),
        code in prop::option::of(prop::sample::select(ControlCode::STEERABLE.to_vec())),
        template in prop::option::of((prop::collection::vec(word(), 0..5), prop::collection::vec(0usize..6, 1..=3))),
        with_answers in any::<bool>(),
        answer_words in prop::collection::vec(words(2), 3),
    ) {
        let mut p = Prompt::bare(text.join(" "));
        p.code = code;
        if let Some((mut t, blanks)) = template {
            for b in blanks {
                let at = b.min(t.len());
                t.insert(at, "[BLANK]".into());
            }
            let n = t.iter().filter(|w| *w == "[BLANK]").count();
            p.blanked_template = Some(t.join(" "));
            if with_answers {
                p.answers = Some(answer_words.iter().take(n).map(|w| w.join(" ")).collect());
            }
        }
        prop_assume!(p.validate().is_ok());
        let wire = render_prompt(&p).unwrap();
        prop_assert_eq!(parse_prompt(&wire).unwrap(), p);
    }

    #[test]
    fn generated_blanks_are_valid(idx in 0usize..240, seed in any::<u64>()) {
        let s = &corpus()[idx];
        for spec in enumerate_blanks(s, None, BlankMode::Generation, seed, &BlankConfig::default()).unwrap() {
            prop_assert!(spec.ranges().len() <= 3 && !spec.ranges().is_empty());
            for w in spec.ranges().windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            prop_assert!(spec.check(s).is_ok());
        }
    }

    #[test]
    fn tree_distance_is_a_metric(a in labelled_tree(8), b in labelled_tree(8), c in labelled_tree(8)) {
        let t = |x: &(Vec<String>, Vec<Option<usize>>)| Tree::from_parents(x.0.clone(), x.1.clone());
        let (ta, tb, tc) = (t(&a), t(&b), t(&c));
        let ab = zhang_shasha(&ta, &tb);
        prop_assert_eq!(ab, zhang_shasha(&tb, &ta));
        prop_assert_eq!(ab == 0, ted::forest(&a.0, &a.1) == ted::forest(&b.0, &b.1));
        prop_assert!(zhang_shasha(&ta, &tc) <= ab + zhang_shasha(&tb, &tc));
    }

    #[test]
    fn self_bleu_ignores_order(set in prop::collection::vec(prop::collection::vec(word(), 1..7), 2..6), seed in any::<u64>()) {
        let texts: Vec<String> = set.iter().map(|s| s.join(" ")).collect();
        let mut shuffled = texts.clone();
        let n = shuffled.len();
        for i in 0..n {
            let j = (seed as usize).wrapping_add(i * 7) % n;
            shuffled.swap(i, j);
        }
        let a = self_bleu(&texts).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, self_bleu(&shuffled).unwrap());
    }

    #[test]
    fn diversity_permutation_invariant(
        pool in prop::collection::vec((0usize..3, words(1), words(1)), 1..9),
        k in 1usize..4,
        perm_seed in any::<u64>(),
    ) {
        let sigs: Vec<SelectionSignature> = pool.iter().map(|(c, r, a)| SelectionSignature {
            code: ControlCode::STEERABLE[*c],
            removed: r.iter().map(String::as_str).collect(),
            added: a.iter().map(String::as_str).collect(),
            tree_shape: String::new(),
        }).collect();
        let n = sigs.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (perm_seed.rotate_left(i as u32) as usize) % (i + 1);
            perm.swap(i, j);
        }
        let permuted: Vec<SelectionSignature> = perm.iter().map(|&i| sigs[i].clone()).collect();
        let w = DiversityWeights::default();
        let base = diversity_select(&sigs, k, &w).unwrap();
        let again = diversity_select_ranked(&permuted, k, &w, &perm).unwrap();
        prop_assert_eq!(again.iter().map(|&i| perm[i]).collect::<Vec<_>>(), base);
    }

    #[test]
    fn contrast_partition_loses_nothing(labels in prop::collection::vec((0u8..3, 0u8..3), 0..50)) {
        let rows: Vec<Labeled<usize>> = labels.iter().enumerate().map(|(i, (a, b))| Labeled {
            item: i, label: Some(a.to_string()), original_label: Some(b.to_string()),
        }).collect();
        let p = contrast_partition(rows, |i| i.to_string()).unwrap();
        let mut all: Vec<usize> = p.kept.iter().chain(&p.dropped).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        prop_assert!(p.kept.iter().all(|&i| labels[i].0 != labels[i].1));
    }

    #[test]
    fn cover_meets_budget(
        sets in prop::collection::vec((prop::collection::btree_set(0usize..12, 1..6), 1u8..5), 1..10),
        budget in 0.05f64..=1.0,
    ) {
        let rules: Vec<TemplateRule> = sets.iter().enumerate().map(|(i, (cov, g))| TemplateRule {
            key: TemplateKey { level: Level::Text, context: false, before: vec![], after: vec![format!("t{i}")] },
            covered: cov.iter().map(|e| format!("e{e:02}")).collect(),
            originals: BTreeSet::from(["x".to_string()]),
            unique_originals: 1,
            sparsity_weight: *g as f64,
            weight: *g as f64,
        }).collect();
        let universe: BTreeSet<String> = rules.iter().flat_map(|r| r.covered.iter().cloned()).collect();
        let sel = select_templates(&rules, &universe, budget).unwrap();
        prop_assert!(sel.covered.len() as f64 >= (budget * universe.len() as f64).ceil());
        let mut shuffled = rules.clone();
        shuffled.reverse();
        let again = select_templates(&shuffled, &universe, budget).unwrap();
        prop_assert_eq!(
            sel.chosen.iter().map(|r| r.key.clone()).collect::<Vec<_>>(),
            again.chosen.iter().map(|r| r.key.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn flip_denominators_add_up(outcomes in prop::collection::vec(prop::option::of((0usize..3, 0usize..3)), 1..30)) {
        let rule = TemplateRule {
            key: TemplateKey { level: Level::Coarse, context: false, before: vec![], after: vec!["PART".into()] },
            covered: (0..outcomes.len()).map(|i| format!("c{i:02}")).collect(),
            originals: BTreeSet::from(["x".to_string()]),
            unique_originals: 1,
            sparsity_weight: 16.0,
            weight: 16.0,
        };
        let one_hot = |l: usize| PredictionRecord { label: l, probs: (0..3).map(|k| if k == l { 1.0 } else { 0.0 }).collect() };
        let preds = outcomes.iter().enumerate()
            .filter_map(|(i, o)| o.map(|(a, b)| (format!("c{i:02}"), (one_hot(a), one_hot(b)))))
            .collect();
        let r = &flip_rates(&[rule], &preds)[0];
        prop_assert_eq!(r.with_predictions + r.missing_predictions, outcomes.len());
        prop_assert_eq!(r.to_labels.values().sum::<usize>(), r.with_predictions);
        prop_assert!((0.0..=1.0).contains(&r.flip_rate));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fluency_filter_monotone(ds in -30.0f64..10.0, dc in -30.0f64..10.0, t1 in 0.0f64..25.0, extra in 0.0f64..10.0) {
        if passes_fluency(ds, dc, t1) {
            prop_assert!(passes_fluency(ds, dc, t1 + extra));
        }
    }
}

#[test]
fn noun_chunks_disjoint_on_corpus() {
    for s in corpus() {
        let chunks = s.noun_chunks();
        for w in chunks.windows(2) {
            assert!(w[0].end <= w[1].start, "{}: {:?}", s.id, chunks);
        }
    }
}

#[test]
fn generated_candidates_stay_inside_blanks() {
    let mock = MockBackend::default();
    let cfg = ClassifierConfig::default();
    let pcfg = PipelineConfig::default();
    for s in corpus().iter().filter(|s| !s.id.ends_with(".r")).take(20) {
        let run = generate_candidates(s, None, None, &mock, &cfg, &pcfg).unwrap();
        let again = generate_candidates(s, None, None, &mock, &cfg, &pcfg).unwrap();
        assert_eq!(serde_json::to_string(&run).unwrap(), serde_json::to_string(&again).unwrap());
        for c in &run.candidates {
            // the revision is the original with the blanks replaced by the fills
            let replacements: Vec<_> = c.blanks.ranges().iter().cloned().zip(c.fills.iter().cloned()).collect();
            let spliced = s.splice("check", &replacements).unwrap();
            assert_eq!(normalize_spaces(&spliced.text), c.revised_text, "{}", c.id);
            // every edit touches a blank; merged spans may reach slightly past one
            let p = c.perturbation(s);
            for e in &p.edits {
                let touches = c.blanks.ranges().iter().any(|r| e.x_range.start <= r.end && r.start <= e.x_range.end);
                assert!(touches, "{}: edit {:?} away from blanks {:?}", c.id, e, c.blanks);
            }
        }
    }
}

//! The mock backend answers identical requests identically (golden file).
//! Regenerate with `CFKIT_BLESS=1 cargo test --test mock_golden`.

use cfkit_core::backends::{GenerationParams, Generator, MockBackend, MockTask, Predictor, Scorer, TaskFrame};
use cfkit_testkit::fixtures_dir;
use serde_json::json;

fn transcript() -> serde_json::Value {
    let prompts = [
        "It is great for kids. <|perturb|> [negation] It is [BLANK] great for kids.",
        "It is great for kids. <|perturb|> [lexical] It is great for [BLANK].",
        "Two dogs run in the park. <|perturb|> [quantifier] [BLANK] dogs run in the park.",
        "The woman is singing in the garden. <|perturb|> [shuffle] The [BLANK] is singing in the [BLANK].",
        "The woman is singing in the garden. <|perturb|> [delete] The woman is singing [BLANK].",
        "It is great for kids. <|perturb|>",
    ];
    let mut out = Vec::new();
    for task in [MockTask::Sentiment, MockTask::Nli, MockTask::Qqp] {
        let m = MockBackend::new(task);
        let mut gens = Vec::new();
        for p in prompts {
            for seed in [0u64, 3] {
                let params = GenerationParams { seed: Some(seed), ..Default::default() };
                gens.push(json!({"prompt": p, "seed": seed, "outputs": m.generate(p, &params).unwrap()}));
            }
        }
        let texts: Vec<String> = ["It is great for kids.", "It is not great for kids.", "zxqv blorp"].map(String::from).to_vec();
        let scores = m.score(&texts).unwrap();
        let frame = match task {
            MockTask::Sentiment => TaskFrame::Single,
            MockTask::Nli => TaskFrame::Hypothesis { premise: "A woman is singing.".into() },
            MockTask::Qqp => TaskFrame::SecondQuestion { question1: "How do I learn Rust?".into() },
        };
        let inputs: Vec<_> = texts.iter().map(|t| frame.frame(t)).collect();
        let preds = m.predict(&inputs).unwrap();
        out.push(json!({"task": task, "generate": gens, "score": scores, "predict": preds}));
    }
    json!(out)
}

#[test]
fn mock_matches_golden_transcript() {
    let path = fixtures_dir().join("mock_golden.json");
    let got = serde_json::to_string_pretty(&transcript()).unwrap() + "\n";
    assert_eq!(got, serde_json::to_string_pretty(&transcript()).unwrap() + "\n");
    if std::env::var_os("CFKIT_BLESS").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(got, want);
}

mod common;

use common::corpus_of;
use contrast_core::critique::CritiqueKind;
use contrast_core::{run_pipeline, Gateway, PipelineConfig};

/// Ten side-A documents splitting `majority`/`10 - majority` between two
/// weights, and a plain side B.
fn split_corpus(majority: usize) -> contrast_core::Corpus {
    let a: Vec<String> = (0..10)
        .map(|i| {
            let grams = if i < majority { 450 } else { 610 };
            format!("The weight of Orion is {grams} grams. Page {i} covers the rest of the specifications.")
        })
        .collect();
    let b: Vec<String> = (0..5)
        .map(|i| format!("The weight of Vega is 800 grams. Owner report number {i} arrived this week."))
        .collect();
    corpus_of(&[("Orion", a), ("Vega", b)])
}

fn weight_values(majority: usize) -> (Vec<String>, contrast_core::RunOutput) {
    let out = run_pipeline(&split_corpus(majority), "Orion", "Vega", &Gateway::deterministic(), &PipelineConfig::default())
        .unwrap();
    let row = out.summary.rows.iter().find(|r| r.attribute == "weight").expect("weight row");
    let values = row.cell_a.iter().map(|c| c.value.clone()).collect();
    (values, out)
}

#[test]
fn nine_to_one_keeps_only_the_majority() {
    let (values, out) = weight_values(9);
    assert_eq!(values, ["450 grams"]);
    let row = &out.summary.rows[0];
    assert_eq!(row.cell_a[0].support_count, 9);
}

#[test]
fn even_split_keeps_both_and_is_flagged() {
    let (mut values, out) = weight_values(5);
    values.sort();
    assert_eq!(values, ["450 grams", "610 grams"]);
    assert!(out
        .cr_log
        .iter()
        .any(|r| r.kind == CritiqueKind::InconsistentValues && r.target.starts_with("R")));
}

use cotrr_core::pipeline::{
    parse_decomposition, parse_evaluation, parse_ranking, SemanticDecomposition, Verdict, DEFAULT_COMPONENTS,
};
use cotrr_core::Judgment;
use proptest::prelude::*;
use serde_json::json;

fn decomposition() -> SemanticDecomposition {
    SemanticDecomposition::fallback(&DEFAULT_COMPONENTS, "q")
}

/// Fragments that push random inputs into the deeper parser paths.
fn jsonish() -> impl Strategy<Value = String> {
    let atoms = prop::sample::select(vec![
        "{",
        "}",
        "[",
        "]",
        "\"",
        ":",
        ",",
        "```",
        "```json\n",
        "\n```",
        "\"ranking\"",
        "\"overall\"",
        "\"components\"",
        "\"excellent_match\"",
        "\"unmet\"",
        "\"name\"",
        "\"verdict\"",
        "\"primary_subject\"",
        "1",
        "-3",
        "1e400",
        "null",
        "\\u00e9",
        "é",
        " ",
    ]);
    prop::collection::vec(atoms, 0..60).prop_map(|v| v.concat())
}

fn fenced(body: &serde_json::Value, prose: &str) -> String {
    format!(
        "{prose}\n```json\n{}\n```\n{prose}",
        serde_json::to_string_pretty(body).unwrap()
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_decomposition(&text, &DEFAULT_COMPONENTS);
        let _ = parse_evaluation(&text, "c", &decomposition());
        let _ = parse_ranking(&text);
    }

    #[test]
    fn json_fragments_never_panic(text in jsonish()) {
        let _ = parse_decomposition(&text, &DEFAULT_COMPONENTS);
        let _ = parse_evaluation(&text, "c", &decomposition());
        let _ = parse_ranking(&text);
    }

    #[test]
    fn well_formed_decomposition_round_trips(
        descs in prop::collection::vec("[^\\x00-\\x1f]{0,30}[a-z]", 5),
        prose in "[a-zA-Z ,.]{0,40}",
    ) {
        let body: serde_json::Map<String, serde_json::Value> = DEFAULT_COMPONENTS
            .iter()
            .zip(&descs)
            .map(|(n, d)| (n.to_string(), json!(d)))
            .collect();
        let parsed = parse_decomposition(&fenced(&body.into(), &prose), &DEFAULT_COMPONENTS).unwrap();
        for (c, d) in parsed.components.iter().zip(&descs) {
            prop_assert_eq!(&c.description, d.trim());
        }
    }

    #[test]
    fn well_formed_evaluation_round_trips(
        verdicts in prop::collection::vec(0usize..3, 5),
        level in 0usize..5,
        prose in "[a-zA-Z ,.]{0,40}",
    ) {
        let verdicts: Vec<Verdict> = verdicts
            .into_iter()
            .map(|v| [Verdict::Met, Verdict::PartiallyMet, Verdict::Unmet][v])
            .collect();
        let mut overall = Judgment::ALL[level];
        if overall == Judgment::ExcellentMatch && verdicts.contains(&Verdict::Unmet) {
            overall = Judgment::GoodMatch;
        }
        let components: Vec<_> = DEFAULT_COMPONENTS
            .iter()
            .zip(&verdicts)
            .map(|(n, v)| json!({"name": n, "verdict": v.as_str(), "rationale": "because"}))
            .collect();
        let body = json!({"overall": overall.as_str(), "components": components});
        let parsed = parse_evaluation(&fenced(&body, &prose), "c7", &decomposition()).unwrap();
        prop_assert_eq!(parsed.overall, overall);
        prop_assert_eq!(parsed.candidate_id, "c7");
        prop_assert_eq!(parsed.component_notes.iter().map(|n| n.verdict).collect::<Vec<_>>(), verdicts);
    }

    #[test]
    fn well_formed_ranking_round_trips(
        order in Just((1usize..=70).collect::<Vec<_>>()).prop_shuffle(),
        prose in "[a-zA-Z ,.]{0,40}",
    ) {
        let body = json!({"analysis": "compared", "ranking": order});
        prop_assert_eq!(parse_ranking(&fenced(&body, &prose)).unwrap(), order);
    }
}

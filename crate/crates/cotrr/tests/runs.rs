use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cotrr::backend::{MockTransport, RecordingTransport};
use cotrr::cli::ConfigArgs;
use cotrr::config::{ConfigLayer, RunConfig};
use cotrr::run::{self, RunError};
use cotrr_core::pipeline::Mode;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn config(name: &str, out: &Path, overrides: ConfigLayer) -> RunConfig {
    let file = ConfigLayer::from_file(&fixture(name).join("config.toml")).unwrap();
    let layer = ConfigLayer {
        output_dir: Some(out.to_path_buf()),
        ..overrides
    };
    RunConfig::resolve(layer.over(file)).unwrap()
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn shipped_fixtures_match_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    cotrr::fixture::write_all(dir.path()).unwrap();
    let generated = files_under(dir.path());
    let shipped = files_under(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    assert_eq!(generated.keys().collect::<Vec<_>>(), shipped.keys().collect::<Vec<_>>());
    for (name, bytes) in &generated {
        assert!(
            shipped[name] == *bytes,
            "{} is stale; rerun the make_fixtures example",
            name.display()
        );
    }
}

#[test]
fn fixture_images_reencode_to_distinct_bytes() {
    use cotrr_core::pipeline::ImageSource;
    let images = cotrr::images::FileImageSource::new(fixture("tir").join("images"));
    let mut seen = std::collections::HashSet::new();
    for i in 0..300 {
        let part = images.load(&format!("img{i:04}")).unwrap();
        assert!(seen.insert(part.data), "img{i:04} duplicates an earlier image");
    }
}

#[test]
fn second_cached_run_makes_no_calls_and_reports_identically() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = ConfigLayer {
        cache_dir: Some(dir.path().join("cache")),
        ..ConfigLayer::default()
    };
    let cfg = config("cir", &dir.path().join("out"), overrides);
    let prepared = run::prepare(&cfg).unwrap();

    let first = RecordingTransport::new(MockTransport::oracle(prepared.labels.clone()));
    let a = run::run_with(&cfg, &prepared, &first).unwrap();
    let second = RecordingTransport::new(MockTransport::oracle(prepared.labels.clone()));
    let b = run::run_with(&cfg, &prepared, &second).unwrap();

    assert!(!first.is_empty());
    assert_eq!(second.len(), 0);
    assert_eq!(a.report_json(), b.report_json());
    assert_eq!(a.per_query_jsonl(), b.per_query_jsonl());
    for line in b.transcript_jsonl().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["from_cache"], true);
    }
}

#[test]
fn aggregates_do_not_depend_on_query_order() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("tir").join("manifest.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.reverse();
    let reversed = dir.path().join("manifest.jsonl");
    std::fs::write(&reversed, lines.join("\n") + "\n").unwrap();

    let noisy = || ConfigLayer {
        backend: Some("mock:noisy:5".into()),
        ..ConfigLayer::default()
    };
    let forward = run::run(&config("tir", &dir.path().join("a"), noisy())).unwrap();
    let backward = run::run(&config(
        "tir",
        &dir.path().join("b"),
        ConfigLayer {
            manifest: Some(reversed),
            labels: Some(fixture("tir").join("labels.jsonl")),
            ..noisy()
        },
    ))
    .unwrap();
    assert_eq!(forward.report.aggregates, backward.report.aggregates);
    assert_eq!(forward.report.initial_aggregates, backward.report.initial_aggregates);
    assert!(
        forward.report.aggregates["recall@1"] < 1.0,
        "noise should cost some accuracy"
    );
}

#[test]
fn mode_is_echoed_and_calls_match() {
    let dir = tempfile::tempdir().unwrap();
    for mode in Mode::ALL {
        let overrides = ConfigLayer {
            mode: Some(mode.to_string()),
            ..ConfigLayer::default()
        };
        let out = run::run(&config("cir", &dir.path().join(mode.as_str()), overrides)).unwrap();
        let report = &out.report;
        assert_eq!(report.mode, mode);
        assert_eq!(report.config.mode, mode);
        let reranks = report.counters.reranks;
        assert_eq!(reranks, 80, "full list plus subset per query");
        assert!(report.counters.calls >= 40 * mode.expected_calls(15));
    }
}

#[test]
fn subset_rerank_scores_within_the_subset() {
    let dir = tempfile::tempdir().unwrap();
    let out = run::run(&config("cir", dir.path(), ConfigLayer::default())).unwrap();
    let r = &out.report;
    for k in 1..=3 {
        assert_eq!(r.aggregates[&format!("recall_subset@{k}")], 1.0);
    }
    assert!(r.initial_aggregates["recall_subset@1"] < 1.0);
    assert!(r.notes.iter().any(|n| n.contains("subset")));
    let phases: Vec<String> = out
        .transcript_jsonl()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["phase"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert!(phases.iter().any(|p| p == "subset"));
    for q in &r.per_query {
        assert_eq!(q.reranks.len(), 1);
        let subset = q.subset.as_ref().expect("subset rerank");
        assert!(subset.reranked_top.len() <= 3);
    }
}

#[test]
fn chat_runs_score_every_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = run::run(&config("chat", dir.path(), ConfigLayer::default())).unwrap();
    let r = &out.report;
    assert_eq!(r.counters.reranks, 20 * 11);
    let curve = |variant: &str| -> Vec<f64> {
        (0..11)
            .map(|t| r.aggregates[&format!("{variant}@10@round{t}")])
            .collect()
    };
    let cumulative = curve("hits");
    let per_round = curve("hits_per_round");
    assert!(cumulative.windows(2).all(|w| w[0] <= w[1]));
    assert!(cumulative.iter().zip(&per_round).all(|(c, p)| c >= p));
    let chart = out.report.hits_variants.len();
    assert!(chart > 0);
    let csv = cotrr::report::chart_csv(r);
    assert!(csv.starts_with(cotrr::report::CHART_HEADER));
    assert_eq!(csv.lines().count(), 1 + 11 * 4);
}

#[test]
fn truncating_and_malformed_mocks_still_yield_permutations() {
    let dir = tempfile::tempdir().unwrap();
    for (backend, check) in [
        ("mock:truncating:4", "repaired_ids"),
        ("mock:malformed:4", "ranking_fallbacks"),
    ] {
        let overrides = ConfigLayer {
            backend: Some(backend.into()),
            ..ConfigLayer::default()
        };
        let out = run::run(&config("cir", &dir.path().join(backend.replace(':', "_")), overrides)).unwrap();
        let counters = serde_json::to_value(&out.report.counters).unwrap();
        assert!(counters[check].as_u64().unwrap() > 0, "{backend}: {counters}");
        assert_eq!(out.report.counters.failed, 0);
        for q in &out.report.per_query {
            let full = &q.reranks[0];
            let mut a = full.initial_top.clone();
            let mut b = full.reranked_top.clone();
            a.sort();
            b.sort();
            assert_eq!(a, b, "{backend} {}", q.query_id);
        }
    }
}

#[test]
fn replay_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let original = config("tir", &dir.path().join("a"), ConfigLayer::default());
    run::run(&original).unwrap();
    let args = ConfigArgs {
        replay: Some(dir.path().join("a")),
        ..ConfigArgs::default()
    };
    let replayed = RunConfig::resolve(args.effective(|_| None).unwrap()).unwrap();
    assert_eq!(replayed, original);
}

#[test]
fn aborted_run_reports_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = ConfigLayer {
        k_rerank: Some(61),
        ..ConfigLayer::default()
    };
    match run::run(&config("cir", dir.path(), overrides)) {
        Err(e @ RunError::Aborted { .. }) => assert_eq!(e.exit_code(), 4),
        other => panic!("expected abort, got {:?}", other.map(|o| o.report.counters)),
    }
    assert!(dir.path().join("report.json").is_file());
}

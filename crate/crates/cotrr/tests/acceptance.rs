//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs entirely offline against the bundled fixtures and mocks.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cotrr::backend::{
    Client, Labels, MockKind, MockTransport, RecordingTransport, ScriptStep, ScriptedTransport, Transport,
};
use cotrr::config::{ConfigLayer, RunConfig};
use cotrr::images::PlaceholderImages;
use cotrr::run::{self, RunOutput};
use cotrr_core::chat::check_conformance;
use cotrr_core::harness::{splice_ranking, ManifestRecord, TaskKind, TaskProfile};
use cotrr_core::metrics::{average_precision_at_k, hits_at_k, recall_at_k, recall_subset_at_k, HitsVariant};
use cotrr_core::pipeline::{
    is_permutation, parse_decomposition, parse_evaluation, parse_ranking, Mode, Pipeline, PipelineConfig, Query,
    SemanticDecomposition, Verdict, DEFAULT_COMPONENTS,
};
use cotrr_core::store::EmbeddingStore;
use cotrr_core::Judgment;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture_config(name: &str, output: &Path, overrides: ConfigLayer) -> Result<RunConfig, String> {
    let file = ConfigLayer::from_file(&fixtures().join(name).join("config.toml")).map_err(|e| e.to_string())?;
    let layer = ConfigLayer {
        output_dir: Some(output.to_path_buf()),
        ..overrides
    };
    RunConfig::resolve(layer.over(file)).map_err(|e| e.to_string())
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:03}")).collect()
}

// ---------------------------------------------------------------------------

fn retrieval_exactness() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut compared = 0usize;
    for s in 0..20 {
        let rows = if s == 0 { 40 } else { rng.random_range(100..=1000) };
        let dim = rng.random_range(16..=256);
        let mut raw: Vec<f32> = (0..rows * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        // Bitwise-duplicate rows create exact score ties.
        for _ in 0..rows / 10 {
            let from = rng.random_range(0..rows);
            let to = rng.random_range(0..rows);
            let row = raw[from * dim..(from + 1) * dim].to_vec();
            raw[to * dim..(to + 1) * dim].copy_from_slice(&row);
        }
        let names = ids(&format!("s{s}-"), rows);
        let store = EmbeddingStore::from_rows(names.clone(), dim, raw.clone()).map_err(|e| e.to_string())?;
        for q in 0..5 {
            let query: Vec<f32> = if q % 2 == 0 {
                let row = rng.random_range(0..rows);
                raw[row * dim..(row + 1) * dim].to_vec()
            } else {
                (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
            };
            let want = oracles::brute_force_ranking(&names, dim, &raw, &query);
            for k in [1, 5, 10, 50, 70] {
                let got = store.top_k(&query, k).map_err(|e| e.to_string())?.ids();
                let expect = &want[..k.min(rows)];
                ensure(got == expect, || {
                    format!("store {s} ({rows}x{dim}) query {q} k={k}: order differs")
                })?;
                compared += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{compared} top-k lists identical to brute force in {:.2?}",
        elapsed
    ))
}

// ---------------------------------------------------------------------------

fn random_ranking(rng: &mut ChaCha8Rng, pool: usize, len: usize) -> Vec<String> {
    let mut all = ids("x", pool);
    all.shuffle(rng);
    all.truncate(len);
    all
}

fn metric_oracle_equivalence() -> Check {
    const N: usize = 500;
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let close = |a: f64, b: f64| (a - b).abs() <= TOL;

    for i in 0..N {
        let pool = rng.random_range(1..120);
        let len = rng.random_range(0..=pool);
        let ranked = random_ranking(&mut rng, pool, len);
        let n_gts = rng.random_range(1..=pool.min(8));
        let gts: Vec<String> = random_ranking(&mut rng, pool, n_gts);
        let set: BTreeSet<String> = gts.iter().cloned().collect();
        let k = rng.random_range(1..80);
        let r = recall_at_k(&ranked, &set, k).map_err(|e| e.to_string())?;
        ensure(close(r, oracles::recall(&ranked, &gts, k)), || {
            format!("recall instance {i}")
        })?;
        let ap = average_precision_at_k(&ranked, &set, k).map_err(|e| e.to_string())?;
        let want = oracles::average_precision(&ranked, &gts, k);
        ensure(close(ap, want), || format!("map instance {i}: {ap} vs {want}"))?;
    }

    for i in 0..N {
        let pool = rng.random_range(6..100);
        let len = rng.random_range(0..=pool);
        let ranked = random_ranking(&mut rng, pool, len);
        let subset = random_ranking(&mut rng, pool, 6);
        let mut gts = vec![subset[rng.random_range(0..6)].clone()];
        if rng.random_bool(0.3) {
            gts.push(random_ranking(&mut rng, pool, 1)[0].clone());
        }
        let set: BTreeSet<String> = gts.iter().cloned().collect();
        let k = rng.random_range(1..=6);
        let got = recall_subset_at_k(&ranked, &subset, &set, k).map_err(|e| e.to_string())?;
        ensure(
            close(got.value, oracles::recall_subset(&ranked, &subset, &gts, k)),
            || format!("recall_subset instance {i}"),
        )?;
    }

    for i in 0..N {
        let dialogues = rng.random_range(1..=60);
        let ranks: Vec<Vec<usize>> = (0..dialogues)
            .map(|_| (0..11).map(|_| rng.random_range(1..=40)).collect())
            .collect();
        let k = rng.random_range(1..=30);
        for (variant, cumulative) in [(HitsVariant::Cumulative, true), (HitsVariant::PerRound, false)] {
            let got = hits_at_k(&ranks, k, variant).map_err(|e| e.to_string())?.per_round;
            let want = oracles::hits(&ranks, k, cumulative);
            ensure(
                got.len() == want.len() && got.iter().zip(&want).all(|(a, b)| close(*a, *b)),
                || format!("hits instance {i} ({variant:?})"),
            )?;
        }
    }

    let ranked: Vec<String> = ["x", "a", "y", "b", "z"].map(String::from).to_vec();
    let gts: BTreeSet<String> = ["a", "b"].map(String::from).into();
    let hand = average_precision_at_k(&ranked, &gts, 5).map_err(|e| e.to_string())?;
    ensure(hand == 0.5, || format!("hand case gave {hand}"))?;
    Ok(format!(
        "{N} instances each for recall, map, recall_subset, hits (2 variants); hand case map@5 = 0.5"
    ))
}

// ---------------------------------------------------------------------------

/// Canned replies mixing valid rankings, partial JSON and noise.
fn scripted_for(seed: u64, k: usize) -> ScriptedTransport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k as u64);
    let steps = (0..k + 8).map(|_| match rng.random_range(0..6) {
        0 => {
            let mut order: Vec<usize> = (1..=k + 2).collect();
            order.shuffle(&mut rng);
            order.truncate(rng.random_range(0..=k + 2));
            ScriptStep::Reply(format!("```json\n{}\n```", json!({"ranking": order})))
        }
        1 => ScriptStep::Reply(format!("{{\"ranking\": [{}, {}, 1]}}", k, k)),
        2 => ScriptStep::Reply("no idea".into()),
        3 => ScriptStep::Reply(json!({"overall": "good match", "components": []}).to_string()),
        4 => ScriptStep::Fail(500),
        _ => ScriptStep::Timeout,
    });
    ScriptedTransport::new(steps.collect::<Vec<_>>())
}

fn permutation_safety() -> Check {
    let seeds: Vec<u64> = (0..10).map(|i| 1000 + 17 * i).collect();
    let config = PipelineConfig::default();
    let images = PlaceholderImages;
    let query = Query::text("a dog catching a frisbee").map_err(|e| e.to_string())?;
    let mut runs = 0usize;
    let mut violations = Vec::new();
    for kind in MockKind::ALL {
        for &seed in &seeds {
            for k in [1usize, 3, 15, 20, 70] {
                let full = ids("c", k + 30);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut labels = Labels::new();
                for id in &full {
                    labels.insert("q", id, rng.random_range(0..3), None);
                }
                let transport: Box<dyn Transport> = match kind {
                    MockKind::Scripted => Box::new(scripted_for(seed, k)),
                    other => Box::new(MockTransport::new(other, seed, None, Arc::new(labels))),
                };
                let client = Client::new(transport).with_sleep(|_| {});
                let pipeline = Pipeline::new(&client, &images, &config);
                let mode = Mode::ALL[(seed as usize + k) % 4];
                let tag = format!("{}:{seed} K={k} {mode}", kind.as_str());
                runs += 1;
                match pipeline.rerank("q", &query, &full[..k], mode) {
                    Ok(outcome) => {
                        let ranked = outcome.ranked.ids();
                        if !is_permutation(&ranked, &full[..k]) {
                            violations.push(format!("{tag}: not a permutation"));
                            continue;
                        }
                        match splice_ranking(&full, &outcome.ranked) {
                            Ok(spliced) if is_permutation(&spliced, &full) && spliced[k..] == full[k..] => {}
                            _ => violations.push(format!("{tag}: splice broke the tail")),
                        }
                    }
                    Err(e) => violations.push(format!("{tag}: {e}")),
                }
            }
        }
    }
    ensure(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    Ok(format!(
        "{runs} reranks over {} mock kinds x 10 seeds x 5 K values, 0 violations",
        MockKind::ALL.len()
    ))
}

// ---------------------------------------------------------------------------

const RUN_FILES: [&str; 4] = ["report.json", "per_query.jsonl", "transcript.jsonl", "chart.csv"];

fn read_run(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    RUN_FILES
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn oracle_end_to_end() -> Check {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = fixture_config("tir", out.path(), ConfigLayer::default())?;
    ensure(config.backend == "mock:oracle:7" && config.mode == Mode::RDE, || {
        "unexpected fixture config".into()
    })?;
    let started = Instant::now();
    let first = run::run(&config).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let first_bytes = read_run(out.path())?;
    run::run(&config).map_err(|e| e.to_string())?;
    let second_bytes = read_run(out.path())?;

    let r = &first.report;
    let get = |m: &BTreeMap<String, f64>, key: &str| m.get(key).copied().ok_or(format!("missing {key}"));
    let r1 = get(&r.aggregates, "recall@1")?;
    let map5 = get(&r.aggregates, "map@5")?;
    let initial = get(&r.initial_aggregates, "recall@1")?;
    ensure(r.counters.queries == 200 && r.counters.scored == 200, || {
        format!("{:?}", r.counters)
    })?;
    ensure(r1 == 1.0, || format!("R@1 = {r1}"))?;
    ensure(map5 == 1.0, || format!("mAP@5 = {map5}"))?;
    ensure(initial <= 0.5, || format!("initial R@1 = {initial}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    for (name, (a, b)) in RUN_FILES.iter().zip(first_bytes.iter().zip(&second_bytes)) {
        ensure(a == b, || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "200 queries: R@1 {initial:.3} -> {r1:.3}, mAP@5 {map5:.3}, {elapsed:.2?}, outputs byte-identical across runs"
    ))
}

// ---------------------------------------------------------------------------

fn transcript_lines(output: &RunOutput) -> Result<Vec<Value>, String> {
    output
        .transcript_jsonl()
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn ablation_modes() -> Check {
    let mut summaries = Vec::new();
    let mut stage_sets = BTreeSet::new();
    for mode in Mode::ALL {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let overrides = ConfigLayer {
            mode: Some(mode.to_string()),
            ..ConfigLayer::default()
        };
        let config = fixture_config("tir", out.path(), overrides)?;
        let output = run::run(&config).map_err(|e| format!("{mode}: {e}"))?;
        let report = &output.report;
        ensure(
            report.mode == mode && report.counters.scored == 200 && !report.aborted,
            || format!("{mode}: invalid run {:?}", report.counters),
        )?;
        let expected = mode.expected_calls(config.k_rerank);
        let mut per_query: BTreeMap<String, usize> = BTreeMap::new();
        let mut stages = BTreeSet::new();
        for line in transcript_lines(&output)? {
            *per_query
                .entry(line["query_id"].as_str().unwrap_or_default().to_string())
                .or_default() += 1;
            stages.insert(line["stage"].as_str().unwrap_or_default().to_string());
        }
        ensure(per_query.len() == 200, || {
            format!("{mode}: {} queries in transcript", per_query.len())
        })?;
        if let Some((q, n)) = per_query.iter().find(|(_, n)| **n != expected) {
            return Err(format!("{mode}: query {q} made {n} calls, expected {expected}"));
        }
        for q in &report.per_query {
            let calls = q.reranks.first().map_or(0, |r| r.calls);
            ensure(calls == expected, || {
                format!("{mode}: {} reports {calls} calls", q.query_id)
            })?;
        }
        summaries.push(format!("{mode}={expected}"));
        stage_sets.insert(stages.into_iter().collect::<Vec<_>>().join("+"));
    }
    ensure(stage_sets.len() == 4, || {
        format!("stage sets not distinct: {stage_sets:?}")
    })?;
    Ok(format!(
        "calls per query {} on 200 queries, 4 distinct stage sets",
        summaries.join(", ")
    ))
}

// ---------------------------------------------------------------------------

/// Small CIRCO-shaped manifest: 80-deep rankings and several targets each.
fn write_circo(dir: &Path) -> Result<PathBuf, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut text = String::new();
    for q in 0..4 {
        let mut candidates = ids("m", 200);
        candidates.shuffle(&mut rng);
        candidates.truncate(80);
        let record = ManifestRecord {
            query_id: format!("circo{q}"),
            task: TaskKind::Cir,
            text: None,
            reference_image: Some(format!("ref{q}")),
            manipulation_text: Some("same scene at night".into()),
            dialogue: None,
            ground_truth: candidates[5..8].to_vec(),
            subset: None,
            candidates: Some(candidates),
            round_candidates: None,
            round_queries: None,
        };
        text.push_str(&serde_json::to_string(&record).map_err(|e| e.to_string())?);
        text.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, text).map_err(|e| e.to_string())?;
    Ok(path)
}

fn request_conformance() -> Check {
    let expected = [
        ("flickr30k", 20, None),
        ("mscoco", 20, None),
        ("cirr", 15, Some(3)),
        ("circo", 70, None),
        ("visdial", 20, None),
    ];
    for (name, k, subset) in expected {
        let p = TaskProfile::preset(name).map_err(|e| e.to_string())?;
        ensure(p.k_rerank == k && p.k_subset == subset, || {
            format!("{name}: K={} subset={:?}", p.k_rerank, p.k_subset)
        })?;
    }

    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let circo_manifest = write_circo(scratch.path())?;
    let mut total = 0usize;
    let mut per_profile = Vec::new();
    for (profile, fixture) in [
        ("flickr30k", "tir"),
        ("mscoco", "tir"),
        ("cirr", "cir"),
        ("visdial", "chat"),
        ("circo", ""),
    ] {
        let out = scratch.path().join(profile);
        let config = if fixture.is_empty() {
            RunConfig::resolve(ConfigLayer {
                profile: Some(profile.into()),
                manifest: Some(circo_manifest.clone()),
                backend: Some("mock:oracle:7".into()),
                output_dir: Some(out),
                ..ConfigLayer::default()
            })
            .map_err(|e| e.to_string())?
        } else {
            let overrides = ConfigLayer {
                profile: Some(profile.into()),
                metrics: None,
                ..ConfigLayer::default()
            };
            let mut layer =
                ConfigLayer::from_file(&fixtures().join(fixture).join("config.toml")).map_err(|e| e.to_string())?;
            layer.metrics = None;
            RunConfig::resolve(
                ConfigLayer {
                    output_dir: Some(out),
                    ..overrides
                }
                .over(layer),
            )
            .map_err(|e| e.to_string())?
        };
        ensure(config.temperature == 0.0, || {
            format!("{profile}: default temperature {}", config.temperature)
        })?;
        let prepared = run::prepare(&config).map_err(|e| format!("{profile}: {e}"))?;
        let recorder = RecordingTransport::new(MockTransport::oracle(prepared.labels.clone()));
        let output = run::run_with(&config, &prepared, &recorder).map_err(|e| format!("{profile}: {e}"))?;
        ensure(output.report.counters.scored == output.report.counters.queries, || {
            format!("{profile}: failed queries")
        })?;
        let requests = recorder.requests();
        ensure(!requests.is_empty(), || format!("{profile}: no requests recorded"))?;
        for req in &requests {
            ensure(req.temperature == 0.0, || {
                format!("{profile}: temperature {}", req.temperature)
            })?;
            check_conformance(req, 0.0).map_err(|e| format!("{profile}: {e}"))?;
        }
        total += requests.len();
        per_profile.push(format!("{profile} {}", requests.len()));
    }
    Ok(format!(
        "K defaults 20/20/15/70 (subset 3); {total} recorded calls at temperature 0.0 ({})",
        per_profile.join(", ")
    ))
}

// ---------------------------------------------------------------------------

const FRAGMENTS: [&str; 24] = [
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
    "\"excellent match\"",
    "\"unmet\"",
    "\"name\"",
    "\"verdict\"",
    "\"primary_subject\"",
    "1",
    "-3",
    "1e400",
    "null",
    "\\u00e9",
    " ",
];

fn fenced(body: &Value) -> String {
    format!(
        "Here you go.\n```json\n{}\n```\nDone.",
        serde_json::to_string_pretty(body).unwrap_or_default()
    )
}

fn parser_robustness() -> Check {
    let decomposition = SemanticDecomposition::fallback(&DEFAULT_COMPONENTS, "q");
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut panics = 0usize;
    const N: usize = 100_000;
    for i in 0..N {
        let text = if i % 2 == 0 {
            let mut bytes = vec![0u8; rng.random_range(0..512)];
            rng.fill_bytes(&mut bytes);
            String::from_utf8_lossy(&bytes).into_owned()
        } else {
            (0..rng.random_range(0..60))
                .map(|_| FRAGMENTS[rng.random_range(0..FRAGMENTS.len())])
                .collect()
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let _ = parse_decomposition(&text, &DEFAULT_COMPONENTS);
            let _ = parse_evaluation(&text, "c", &decomposition);
            let _ = parse_ranking(&text);
        }));
        if outcome.is_err() {
            panics += 1;
        }
    }
    ensure(panics == 0, || format!("{panics} of {N} inputs panicked"))?;

    const WELL_FORMED: usize = 1000;
    let verdicts = [Verdict::Met, Verdict::PartiallyMet, Verdict::Unmet];
    for i in 0..WELL_FORMED {
        let descs: Vec<String> = (0..5).map(|j| format!("detail {i}-{j}")).collect();
        let body: serde_json::Map<String, Value> = DEFAULT_COMPONENTS
            .iter()
            .zip(&descs)
            .map(|(n, d)| (n.to_string(), json!(d)))
            .collect();
        let parsed = parse_decomposition(&fenced(&body.into()), &DEFAULT_COMPONENTS)
            .map_err(|e| format!("decomposition {i}: {e}"))?;
        ensure(
            parsed.components.iter().zip(&descs).all(|(c, d)| &c.description == d),
            || format!("decomposition {i}"),
        )?;

        let chosen: Vec<Verdict> = (0..5).map(|_| verdicts[rng.random_range(0..3)]).collect();
        let mut overall = Judgment::ALL[rng.random_range(0..Judgment::ALL.len())];
        if overall == Judgment::ExcellentMatch && chosen.contains(&Verdict::Unmet) {
            overall = Judgment::GoodMatch;
        }
        let components: Vec<Value> = DEFAULT_COMPONENTS
            .iter()
            .zip(&chosen)
            .map(|(n, v)| json!({"name": n, "verdict": v.as_str(), "rationale": "seen"}))
            .collect();
        let body = json!({"overall": overall.as_str(), "components": components});
        let parsed =
            parse_evaluation(&fenced(&body), "c1", &decomposition).map_err(|e| format!("evaluation {i}: {e}"))?;
        ensure(parsed.overall == overall, || format!("evaluation {i}"))?;

        let mut order: Vec<usize> = (1..=rng.random_range(1..=70)).collect();
        order.shuffle(&mut rng);
        let parsed = parse_ranking(&fenced(&json!({"ranking": order}))).map_err(|e| format!("ranking {i}: {e}"))?;
        ensure(parsed == order, || format!("ranking {i}"))?;
    }

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let overrides = ConfigLayer {
        backend: Some("mock:malformed:3".into()),
        max_failure_rate: Some(1.0),
        ..ConfigLayer::default()
    };
    let config = fixture_config("tir", out.path(), overrides)?;
    let output = run::run(&config).map_err(|e| e.to_string())?;
    let c = &output.report.counters;
    let repairs = transcript_lines(&output)?
        .iter()
        .filter(|l| l["repair"] == json!(true))
        .count();
    ensure(c.repair_prompts > 0 && repairs > 0, || {
        format!("repair path not exercised: {c:?}")
    })?;
    ensure(c.scored == c.queries, || format!("malformed run lost queries: {c:?}"))?;
    Ok(format!(
        "{N} fuzz inputs, 0 panics; {} well-formed payloads parsed; malformed mock issued {} repair prompts",
        3 * WELL_FORMED,
        c.repair_prompts
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let checks: [Criterion; 7] = [
        ("retrieval exactness", retrieval_exactness),
        ("metric oracle equivalence", metric_oracle_equivalence),
        ("permutation safety", permutation_safety),
        ("oracle end-to-end", oracle_end_to_end),
        ("ablation-mode plumbing", ablation_modes),
        ("request conformance", request_conformance),
        ("parser robustness", parser_robustness),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

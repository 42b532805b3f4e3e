//! Deterministic synthetic fixtures for end-to-end runs against mock backends.
//!
//! Each generator writes a self-contained directory with `manifest.jsonl`,
//! `labels.jsonl` and a `config.toml` whose paths are relative to it. The
//! initial rankings are deliberately scrambled so that re-ranking has
//! something to fix.

use std::fs;
use std::io;
use std::path::Path;

use cotrr_core::harness::{Dialogue, ManifestRecord, TaskKind};
use cotrr_core::pipeline::DialogueTurn;
use image::{ImageFormat, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{Label, LABEL_COMPONENTS};
use crate::store_io::write_store;

const COLOURS: [&str; 8] = ["red", "blue", "green", "yellow", "white", "black", "orange", "purple"];
const SUBJECTS: [&str; 8] = ["dog", "bicycle", "child", "boat", "horse", "guitar", "bus", "kite"];
const PLACES: [&str; 6] = [
    "on a beach",
    "in a park",
    "on a street",
    "near a lake",
    "in a kitchen",
    "in the snow",
];
const EDITS: [&str; 5] = [
    "make it night",
    "add a second one",
    "zoom out",
    "remove the person",
    "change the colour",
];

fn image_id(i: usize) -> String {
    format!("img{i:04}")
}

fn describe(i: usize) -> String {
    format!(
        "a {} {} {}",
        COLOURS[i % COLOURS.len()],
        SUBJECTS[(i / COLOURS.len()) % SUBJECTS.len()],
        PLACES[(i / 7) % PLACES.len()]
    )
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).map_err(io::Error::other)?);
        out.push('\n');
    }
    fs::write(path, out)
}

/// Tiny solid-colour PNG with a marker pixel and the index as 16 black or
/// white pixels along the bottom two rows, distinct per index.
fn write_png(path: &Path, i: usize) -> io::Result<()> {
    let base = Rgb([(i * 37 % 256) as u8, (i * 91 % 256) as u8, (i * 53 % 256) as u8]);
    let mut img = RgbImage::from_pixel(8, 8, base);
    img.put_pixel((i % 8) as u32, (i / 8 % 8) as u32, Rgb([255, 255, 255]));
    for bit in 0..16u32 {
        let on = (i >> bit) & 1 == 1;
        img.put_pixel(
            bit % 8,
            6 + bit / 8,
            if on { Rgb([255, 255, 255]) } else { Rgb([0, 0, 0]) },
        );
    }
    img.save_with_format(path, ImageFormat::Png).map_err(io::Error::other)
}

/// Distractors drawn from `0..pool` excluding `exclude`.
fn distractors(rng: &mut ChaCha8Rng, pool: usize, exclude: &[usize], n: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..pool).filter(|i| !exclude.contains(i)).collect();
    all.shuffle(rng);
    all.truncate(n);
    all
}

/// Partial-credit labels for a few distractors so evaluations span judgments.
fn near_miss_labels(rng: &mut ChaCha8Rng, qid: &str, ids: &[String], labels: &mut Vec<Label>) {
    for id in ids.iter().take(4) {
        labels.push(Label {
            query_id: qid.to_string(),
            candidate_id: id.clone(),
            relevance: 0,
            met: Some(rng.random_range(1..LABEL_COMPONENTS)),
        });
    }
}

fn relevant(qid: &str, id: &str) -> Label {
    Label {
        query_id: qid.to_string(),
        candidate_id: id.to_string(),
        relevance: 1,
        met: None,
    }
}

/// Text-to-image fixture: `queries` records, one relevant image each, with a
/// 25-deep precomputed ranking. The relevant image sits first for 30% of
/// queries and elsewhere in the top 20 otherwise. Also writes 8x8 PNG images
/// and a pair of embedding stores for `retrieve`.
pub fn write_tir(dir: &Path, queries: usize, seed: u64) -> io::Result<()> {
    const DEPTH: usize = 25;
    const DIM: usize = 32;
    let pool = queries + 100;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(dir.join("images"))?;
    for i in 0..pool {
        write_png(&dir.join("images").join(format!("{}.png", image_id(i))), i)?;
    }

    let mut records = Vec::with_capacity(queries);
    let mut labels = Vec::new();
    for q in 0..queries {
        let qid = format!("t{q:04}");
        let gt = q;
        let mut ids: Vec<String> = distractors(&mut rng, pool, &[gt], DEPTH - 1)
            .into_iter()
            .map(image_id)
            .collect();
        near_miss_labels(&mut rng, &qid, &ids, &mut labels);
        let pos = if q % 10 < 3 { 0 } else { rng.random_range(1..20) };
        ids.insert(pos, image_id(gt));
        labels.push(relevant(&qid, &image_id(gt)));
        records.push(ManifestRecord {
            query_id: qid,
            task: TaskKind::Tir,
            text: Some(format!("{} (scene {q})", describe(gt))),
            reference_image: None,
            manipulation_text: None,
            dialogue: None,
            ground_truth: vec![image_id(gt)],
            subset: None,
            candidates: Some(ids),
            round_candidates: None,
            round_queries: None,
        });
    }
    write_jsonl(&dir.join("manifest.jsonl"), &records)?;
    write_jsonl(&dir.join("labels.jsonl"), &labels)?;

    let image_vecs: Vec<f32> = (0..pool * DIM).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let query_vecs: Vec<f32> = (0..queries * DIM)
        .map(|j| image_vecs[j] + rng.random_range(-0.8f32..0.8))
        .collect();
    let image_ids: Vec<String> = (0..pool).map(image_id).collect();
    let query_ids: Vec<String> = records.iter().map(|r| r.query_id.clone()).collect();
    write_store(&dir.join("images.emb"), &image_ids, DIM, &image_vecs).map_err(io::Error::other)?;
    write_store(&dir.join("queries.emb"), &query_ids, DIM, &query_vecs).map_err(io::Error::other)?;

    fs::write(
        dir.join("config.toml"),
        "profile = \"flickr30k\"\nmanifest = \"manifest.jsonl\"\nlabels = \"labels.jsonl\"\n\
         image_root = \"images\"\nbackend = \"mock:oracle:7\"\nmode = \"R+D+E\"\n\
         metrics = [\"recall@1\", \"recall@5\", \"recall@10\", \"map@5\"]\n",
    )
}

/// Composed-retrieval fixture for the subset profile: a 60-deep ranking with
/// the target inside the top 15 and a six-member subset per query.
pub fn write_cir(dir: &Path, queries: usize, seed: u64) -> io::Result<()> {
    const DEPTH: usize = 60;
    let pool = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(queries);
    let mut labels = Vec::new();
    for q in 0..queries {
        let qid = format!("c{q:04}");
        let gt = q;
        let reference = pool + q;
        let mut ids: Vec<String> = distractors(&mut rng, pool, &[gt], DEPTH - 1)
            .into_iter()
            .map(image_id)
            .collect();
        near_miss_labels(&mut rng, &qid, &ids, &mut labels);
        let pos = if q % 4 == 0 { 0 } else { rng.random_range(1..15) };
        ids.insert(pos, image_id(gt));
        labels.push(relevant(&qid, &image_id(gt)));
        let mut subset: Vec<String> = ids
            .iter()
            .filter(|id| **id != image_id(gt))
            .step_by(7)
            .take(5)
            .cloned()
            .collect();
        let at = rng.random_range(0..=subset.len());
        subset.insert(at, image_id(gt));
        records.push(ManifestRecord {
            query_id: qid,
            task: TaskKind::Cir,
            text: None,
            reference_image: Some(image_id(reference)),
            manipulation_text: Some(EDITS[q % EDITS.len()].to_string()),
            dialogue: None,
            ground_truth: vec![image_id(gt)],
            subset: Some(subset),
            candidates: Some(ids),
            round_candidates: None,
            round_queries: None,
        });
    }
    write_jsonl(&dir.join("manifest.jsonl"), &records)?;
    write_jsonl(&dir.join("labels.jsonl"), &labels)?;
    fs::write(
        dir.join("config.toml"),
        "profile = \"cirr\"\nmanifest = \"manifest.jsonl\"\nlabels = \"labels.jsonl\"\n\
         backend = \"mock:oracle:7\"\nmode = \"R+D+E\"\n",
    )
}

/// Dialogue fixture: `dialogues` records with `rounds - 1` question/answer
/// pairs and a 25-deep ranking per round. The target drifts upward as rounds
/// accumulate and starts outside the list for some dialogues.
pub fn write_chat(dir: &Path, dialogues: usize, rounds: usize, seed: u64) -> io::Result<()> {
    const DEPTH: usize = 25;
    let pool = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(dialogues);
    let mut labels = Vec::new();
    for d in 0..dialogues {
        let qid = format!("d{d:04}");
        let gt = d;
        let turns = (1..rounds)
            .map(|t| DialogueTurn {
                question: format!("what is in detail {t}?"),
                answer: format!("{} part {t}", describe(gt)),
            })
            .collect();
        let mut start: usize = rng.random_range(0..35);
        let mut round_candidates = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let mut ids: Vec<String> = distractors(&mut rng, pool, &[gt], DEPTH)
                .into_iter()
                .map(image_id)
                .collect();
            if start < DEPTH {
                ids[start] = image_id(gt);
            }
            round_candidates.push(ids);
            start = start.saturating_sub(rng.random_range(0..4));
        }
        near_miss_labels(&mut rng, &qid, &round_candidates[0], &mut labels);
        labels.push(relevant(&qid, &image_id(gt)));
        records.push(ManifestRecord {
            query_id: qid,
            task: TaskKind::Chat,
            text: None,
            reference_image: None,
            manipulation_text: None,
            dialogue: Some(Dialogue {
                caption: describe(gt),
                turns,
            }),
            ground_truth: vec![image_id(gt)],
            subset: None,
            candidates: None,
            round_candidates: Some(round_candidates),
            round_queries: None,
        });
    }
    write_jsonl(&dir.join("manifest.jsonl"), &records)?;
    write_jsonl(&dir.join("labels.jsonl"), &labels)?;
    fs::write(
        dir.join("config.toml"),
        "profile = \"visdial\"\nmanifest = \"manifest.jsonl\"\nlabels = \"labels.jsonl\"\n\
         backend = \"mock:oracle:7\"\nmode = \"R+D+E\"\n",
    )
}

/// Writes the three standard fixtures under `root`.
pub fn write_all(root: &Path) -> io::Result<()> {
    write_tir(&root.join("tir"), 200, 11)?;
    write_cir(&root.join("cir"), 40, 12)?;
    write_chat(&root.join("chat"), 20, 11, 13)
}

//! Literal-definition reference implementations used by the integration and
//! acceptance tests. Deliberately naive: no early exits, no shared helpers
//! with the library.
#![allow(dead_code)]

/// 1 if any ground truth sits at a position `< k`.
pub fn recall(ranked: &[String], gts: &[String], k: usize) -> f64 {
    let mut hit = 0.0;
    for (pos, id) in ranked.iter().enumerate() {
        if pos < k && gts.iter().any(|g| g == id) {
            hit = 1.0;
        }
    }
    hit
}

/// AP@k = 1/min(k, |G|) * sum_{i=1..k} P(i) * rel(i), with P(i) recounted from
/// scratch at every position.
pub fn average_precision(ranked: &[String], gts: &[String], k: usize) -> f64 {
    let mut total = 0.0;
    for i in 1..=k {
        if i > ranked.len() {
            break;
        }
        let rel = if gts.contains(&ranked[i - 1]) { 1.0 } else { 0.0 };
        let in_prefix = ranked[..i].iter().filter(|id| gts.contains(id)).count();
        let precision = in_prefix as f64 / i as f64;
        total += precision * rel;
    }
    total / (k.min(gts.len()) as f64)
}

/// Filter to subset members (absent members appended in subset order), then
/// recall within the filtered list.
pub fn recall_subset(ranked: &[String], subset: &[String], gts: &[String], k: usize) -> f64 {
    let mut filtered: Vec<String> = Vec::new();
    for id in ranked {
        if subset.contains(id) && !filtered.contains(id) {
            filtered.push(id.clone());
        }
    }
    for id in subset {
        if !filtered.contains(id) {
            filtered.push(id.clone());
        }
    }
    recall(&filtered, gts, k)
}

/// Per-round fraction of dialogues with rank <= k, either at that round or at
/// any round up to it. Dialogues are assumed to have equal lengths.
pub fn hits(ranks: &[Vec<usize>], k: usize, cumulative: bool) -> Vec<f64> {
    let rounds = ranks[0].len();
    let mut out = Vec::new();
    for t in 0..rounds {
        let mut count = 0usize;
        for dialogue in ranks {
            let hit = if cumulative {
                (0..=t).any(|u| dialogue[u] <= k)
            } else {
                dialogue[t] <= k
            };
            if hit {
                count += 1;
            }
        }
        out.push(count as f64 / ranks.len() as f64);
    }
    out
}

/// Ids sorted by descending cosine against raw rows, ascending row on ties.
pub fn brute_force_ranking(ids: &[String], dim: usize, raw: &[f32], query: &[f32]) -> Vec<String> {
    let qn: f64 = query.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    let mut all: Vec<(f64, usize)> = Vec::new();
    for (i, row) in raw.chunks(dim).enumerate() {
        let rn: f64 = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        let dot: f64 = row.iter().zip(query).map(|(a, b)| *a as f64 * *b as f64).sum();
        all.push((dot / (rn * qn), i));
    }
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().map(|(_, i)| ids[i].clone()).collect()
}

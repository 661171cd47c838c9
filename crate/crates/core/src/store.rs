//! Embedding store with exact top-k cosine retrieval and per-agent caches.
//!
//! Retrieval is an exact full scan with partial selection (the candidate
//! pools are small), ranked by descending similarity with ties broken by
//! ascending patch id so results are fully deterministic.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::Scene;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Dot product of two unit vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, StoreError> {
    if a.len() != b.len() {
        return Err(StoreError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    debug_assert!({
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        (na - 1.0).abs() < 1e-6 && (nb - 1.0).abs() < 1e-6
    });
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Read-only similarity index over a scene's patch embeddings.
#[derive(Debug, Clone)]
pub struct PatchIndex {
    dimension: usize,
    entries: Vec<(u64, Vec<f64>)>,
}

impl PatchIndex {
    pub fn new(dimension: usize, entries: Vec<(u64, Vec<f64>)>) -> Self {
        debug_assert!(entries.iter().all(|(_, e)| e.len() == dimension));
        debug_assert_eq!(
            entries.iter().map(|(id, _)| id).collect::<BTreeSet<_>>().len(),
            entries.len(),
            "patch ids must be unique"
        );
        Self { dimension, entries }
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let dimension = scene.patches.first().map_or(0, |p| p.embedding.len());
        Self::new(
            dimension,
            scene
                .patches
                .iter()
                .map(|p| (p.id, p.embedding.clone()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// The `k` most similar non-excluded patches, descending by score,
    /// ties by ascending patch id. Returns fewer than `k` only when fewer
    /// candidates exist.
    pub fn top_k(
        &self,
        query: &[f64],
        k: usize,
        exclude: &BTreeSet<u64>,
    ) -> Result<Vec<(u64, f64)>, StoreError> {
        if query.len() != self.dimension && !self.entries.is_empty() {
            return Err(StoreError::DimensionMismatch {
                left: query.len(),
                right: self.dimension,
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        // Partial selection: keep the k best seen so far, worst on top.
        let mut kept: Vec<(u64, f64)> = Vec::with_capacity(k + 1);
        for (id, emb) in &self.entries {
            if exclude.contains(id) {
                continue;
            }
            let score: f64 = emb.iter().zip(query).map(|(x, y)| x * y).sum();
            if kept.len() < k {
                kept.push((*id, score));
                if kept.len() == k {
                    kept.sort_by(|a, b| rank_order(*a, *b));
                }
                continue;
            }
            let worst = kept[k - 1];
            if rank_order((*id, score), worst) == std::cmp::Ordering::Less {
                kept[k - 1] = (*id, score);
                let mut i = k - 1;
                while i > 0 && rank_order(kept[i], kept[i - 1]) == std::cmp::Ordering::Less {
                    kept.swap(i, i - 1);
                    i -= 1;
                }
            }
        }
        if kept.len() < k {
            kept.sort_by(|a, b| rank_order(*a, *b));
        }
        Ok(kept)
    }
}

/// Total retrieval order: higher score first, then lower patch id.
fn rank_order(a: (u64, f64), b: (u64, f64)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1)
        .expect("similarity scores are finite")
        .then(a.0.cmp(&b.0))
}

/// Patches an agent already holds; grows monotonically within an episode.
#[derive(Debug, Clone, Default)]
pub struct LocalCache {
    pub agent_id: u32,
    held: BTreeSet<u64>,
    hits: u64,
    misses: u64,
}

impl LocalCache {
    pub fn new(agent_id: u32) -> Self {
        Self {
            agent_id,
            ..Self::default()
        }
    }

    /// Returns whether the patch was newly inserted.
    pub fn insert(&mut self, patch_id: u64) -> bool {
        self.held.insert(patch_id)
    }

    /// Membership check; updates the hit/miss counters.
    pub fn contains(&mut self, patch_id: u64) -> bool {
        if self.held.contains(&patch_id) {
            self.hits += 1;
            true
        } else {
            self.misses += 1;
            false
        }
    }

    pub fn held(&self) -> &BTreeSet<u64> {
        &self.held
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_scene, SceneParams};
    use crate::seeds;
    use rand::Rng;

    #[test]
    fn cosine_of_identical_and_antipodal_vectors() {
        let v = vec![0.6, 0.8];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_dimension_mismatch() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(StoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_matches_elementwise_oracle() {
        let mut rng = seeds::rng_from(1, "cos-oracle");
        for _ in 0..200 {
            let a = crate::model::random_unit_vector(&mut rng, 16);
            let b = crate::model::random_unit_vector(&mut rng, 16);
            let mut expect = 0.0;
            for i in 0..16 {
                expect += a[i] * b[i];
            }
            let got = cosine_similarity(&a, &b).unwrap();
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_zero_is_empty_and_oversized_k_returns_all_sorted() {
        let (scene, task) = generate_scene(3, &SceneParams::default()).unwrap();
        let idx = PatchIndex::from_scene(&scene);
        let none = idx.top_k(&task.query_embedding, 0, &BTreeSet::new()).unwrap();
        assert!(none.is_empty());

        let all = idx
            .top_k(&task.query_embedding, 1000, &BTreeSet::new())
            .unwrap();
        assert_eq!(all.len(), scene.patches.len());
        for w in all.windows(2) {
            assert!(
                w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0),
                "descending by score then ascending by id"
            );
        }
    }

    #[test]
    fn top_k_matches_full_sort_oracle_with_ties_and_exclusions() {
        let mut rng = seeds::rng_from(77, "topk-oracle");
        for case in 0..300 {
            let p = rng.gen_range(1..=50);
            let dim = 8;
            let mut entries: Vec<(u64, Vec<f64>)> = Vec::new();
            for id in 0..p as u64 {
                // Force frequent exact ties by reusing earlier embeddings.
                let emb = if id > 0 && rng.gen::<f64>() < 0.35 {
                    entries[rng.gen_range(0..entries.len())].1.clone()
                } else {
                    crate::model::random_unit_vector(&mut rng, dim)
                };
                entries.push((id, emb));
            }
            let exclude: BTreeSet<u64> =
                (0..p as u64).filter(|_| rng.gen::<f64>() < 0.25).collect();
            let query = crate::model::random_unit_vector(&mut rng, dim);
            let k = rng.gen_range(0..=p);

            // Independent oracle: score everything, full sort, truncate.
            let mut scored: Vec<(u64, f64)> = entries
                .iter()
                .filter(|(id, _)| !exclude.contains(id))
                .map(|(id, e)| {
                    let mut s = 0.0;
                    for i in 0..dim {
                        s += e[i] * query[i];
                    }
                    (*id, s)
                })
                .collect();
            scored.sort_by(|a, b| {
                b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0))
            });
            scored.truncate(k);

            let idx = PatchIndex::new(dim, entries);
            let got = idx.top_k(&query, k, &exclude).unwrap();
            assert_eq!(got, scored, "case {case}: tie order must match oracle");
            for (id, _) in &got {
                assert!(!exclude.contains(id), "exclusion soundness");
            }
        }
    }

    #[test]
    fn cache_tracks_hits_and_misses() {
        let mut c = LocalCache::new(0);
        assert!(!c.contains(5));
        assert_eq!(c.misses(), 1);
        assert!(c.insert(5));
        assert!(c.contains(5));
        assert_eq!(c.hits(), 1);
        assert!(!c.insert(5), "reinsert is a no-op");
        assert_eq!(c.hits() + c.misses(), 2, "counters cover every lookup");
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn unit_vec(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::seeds::rng_from(seed, "prop-vec");
        crate::model::random_unit_vector(&mut rng, dim)
    }

    proptest! {
        // Every returned score dominates every non-returned candidate.
        #[test]
        fn top_k_scores_dominate_rest(seed in 0u64..2000, k in 0usize..20, n in 1usize..40) {
            let dim = 6;
            let entries: Vec<(u64, Vec<f64>)> = (0..n as u64)
                .map(|id| (id, unit_vec(dim, seed.wrapping_mul(131).wrapping_add(id))))
                .collect();
            let query = unit_vec(dim, seed.wrapping_add(9999));
            let idx = PatchIndex::new(dim, entries.clone());
            let got = idx.top_k(&query, k, &BTreeSet::new()).unwrap();
            prop_assert_eq!(got.len(), k.min(n));
            let returned: BTreeSet<u64> = got.iter().map(|(id, _)| *id).collect();
            let floor = got.last().map(|(_, s)| *s);
            if let Some(floor) = floor {
                for (id, emb) in &entries {
                    if !returned.contains(id) {
                        let s: f64 = emb.iter().zip(&query).map(|(x, y)| x * y).sum();
                        prop_assert!(s <= floor);
                    }
                }
            }
        }
    }
}

//! Scenes, patches, tasks and the coverage-based task-success model.
//!
//! A scene is a set of retrievable patches, a few of which are critical to
//! answering the scene's task. An agent's task succeeds once the
//! importance-weighted fraction of critical patches it holds reaches the
//! task threshold. Scene generation is fully deterministic per seed.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid scene parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("patch {patch_id} is not part of scene {scene_id}")]
    UnknownPatchId { patch_id: u64, scene_id: u64 },
    #[error("view is bound to scene {view_scene} but task targets scene {task_scene}")]
    SceneMismatch { view_scene: u64, task_scene: u64 },
}

/// One retrievable semantic element of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub id: u64,
    /// Unit-norm embedding of dimension `SceneParams::dimension`.
    pub embedding: Vec<f64>,
    /// Weight in [0,1]; zero for non-critical patches.
    pub importance: f64,
    pub size_bits: u64,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: u64,
    pub patches: Vec<Patch>,
    pub summary_bits: u64,
}

impl Scene {
    pub fn patch(&self, patch_id: u64) -> Option<&Patch> {
        self.patches.iter().find(|p| p.id == patch_id)
    }

    pub fn patch_ids(&self) -> BTreeSet<u64> {
        self.patches.iter().map(|p| p.id).collect()
    }
}

/// A scene-specific question; answerable once coverage reaches `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub scene_id: u64,
    pub query_embedding: Vec<f64>,
    pub theta: f64,
    pub completed: bool,
    pub completion_round: Option<u32>,
}

impl Task {
    pub fn new(scene_id: u64, query_embedding: Vec<f64>, theta: f64) -> Self {
        Self {
            scene_id,
            query_embedding,
            theta,
            completed: false,
            completion_round: None,
        }
    }
}

/// What one agent has received so far, with its derived coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentView {
    pub agent_id: u32,
    pub scene_id: u64,
    pub received_patch_ids: BTreeSet<u64>,
    pub coverage: f64,
    pub uncertainty: f64,
}

impl AgentView {
    pub fn new(agent_id: u32, scene_id: u64) -> Self {
        Self {
            agent_id,
            scene_id,
            received_patch_ids: BTreeSet::new(),
            coverage: 0.0,
            uncertainty: 1.0,
        }
    }

    /// Records receipt of a patch and returns whether it was new.
    pub fn record_receipt(&mut self, patch_id: u64) -> bool {
        self.received_patch_ids.insert(patch_id)
    }

    /// Recomputes coverage and uncertainty against the scene.
    pub fn refresh(&mut self, scene: &Scene) -> Result<(), ModelError> {
        self.coverage = coverage(self, scene)?;
        self.uncertainty = 1.0 - self.coverage;
        Ok(())
    }
}

/// Parameters of the synthetic scene generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Embedding dimension D.
    pub dimension: usize,
    /// Patch count P.
    pub patches: usize,
    /// Critical patch count C.
    pub critical: usize,
    /// Required coverage threshold in (0,1].
    pub theta: f64,
    pub summary_bits: u64,
    /// Candidate patch sizes; one is drawn uniformly per patch.
    pub patch_sizes_bits: Vec<u64>,
    /// Scale of the noise mixed into critical-patch embeddings.
    pub noise_sigma: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            dimension: 32,
            patches: 24,
            critical: 6,
            theta: 0.8,
            summary_bits: 65_536,
            patch_sizes_bits: vec![65_536, 131_072, 262_144],
            noise_sigma: 0.25,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut errs = Vec::new();
        if self.dimension < 2 {
            errs.push(format!("dimension must be >= 2, got {}", self.dimension));
        }
        if self.patches < 1 {
            errs.push("patches must be >= 1".into());
        }
        if self.critical < 1 || self.critical > self.patches {
            errs.push(format!(
                "critical must be in [1, patches={}], got {}",
                self.patches, self.critical
            ));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            errs.push(format!("theta must be in (0,1], got {}", self.theta));
        }
        if self.summary_bits == 0 {
            errs.push("summary_bits must be positive".into());
        }
        if self.patch_sizes_bits.is_empty() || self.patch_sizes_bits.iter().any(|&s| s == 0) {
            errs.push("patch_sizes_bits must be non-empty and positive".into());
        }
        if !(self.noise_sigma >= 0.0) {
            errs.push(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(errs))
        }
    }
}

/// Generates a scene and its task, deterministically per seed.
///
/// Critical patches are planted around the task query: their embeddings are
/// `normalize(query + sigma * gaussian_noise)`, so they rank high (but not
/// perfectly) under cosine retrieval, while non-critical patches are
/// uniform random unit vectors. Critical importances are normalized
/// positive weights summing to one; non-critical importance is zero.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<(Scene, Task), ModelError> {
    params.validate()?;
    let mut rng = seeds::rng_from(seed, "scene-gen");
    let d = params.dimension;

    let query = random_unit_vector(&mut rng, d);

    // Which patch ids are critical: seeded partial shuffle of 0..P.
    let mut ids: Vec<u64> = (0..params.patches as u64).collect();
    for i in 0..params.critical {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    let critical_ids: BTreeSet<u64> = ids[..params.critical].iter().copied().collect();

    // Normalized positive weights for the critical patches, keyed by id so
    // the assignment does not depend on shuffle order.
    let mut weights: Vec<f64> = (0..params.critical)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    let mut patches = Vec::with_capacity(params.patches);
    let mut next_weight = 0;
    for id in 0..params.patches as u64 {
        let critical = critical_ids.contains(&id);
        let embedding = if critical {
            let mut v: Vec<f64> = query.clone();
            for x in &mut v {
                *x += params.noise_sigma * seeds::gaussian(&mut rng);
            }
            normalize(v)
        } else {
            random_unit_vector(&mut rng, d)
        };
        let importance = if critical {
            let w = weights[next_weight];
            next_weight += 1;
            w
        } else {
            0.0
        };
        let size_bits =
            params.patch_sizes_bits[rng.gen_range(0..params.patch_sizes_bits.len())];
        patches.push(Patch {
            id,
            embedding,
            importance,
            size_bits,
            critical,
        });
    }

    let scene = Scene {
        id: seed,
        patches,
        summary_bits: params.summary_bits,
    };
    let task = Task::new(seed, query, params.theta);
    Ok((scene, task))
}

/// Importance-weighted fraction of critical patches the view has received.
pub fn coverage(view: &AgentView, scene: &Scene) -> Result<f64, ModelError> {
    let ids = scene.patch_ids();
    for &pid in &view.received_patch_ids {
        if !ids.contains(&pid) {
            return Err(ModelError::UnknownPatchId {
                patch_id: pid,
                scene_id: scene.id,
            });
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for p in &scene.patches {
        if p.critical {
            den += p.importance;
            if view.received_patch_ids.contains(&p.id) {
                num += p.importance;
            }
        }
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// True once coverage has reached the task threshold.
pub fn task_complete(view: &AgentView, task: &Task) -> Result<bool, ModelError> {
    if view.scene_id != task.scene_id {
        return Err(ModelError::SceneMismatch {
            view_scene: view.scene_id,
            task_scene: task.scene_id,
        });
    }
    Ok(view.coverage >= task.theta)
}

pub fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| seeds::gaussian(rng)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

// --- serialized scene layout ---------------------------------------------
//
// The on-disk JSON layout doubles as the import format for externally
// produced scenes, so its field names are part of the contract:
// `id`, `patches[].{id,embedding,importance,size_bits,critical}`,
// `summary_bits`, `task.{query_embedding,theta}`.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: u64,
    pub patches: Vec<Patch>,
    pub summary_bits: u64,
    pub task: TaskRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub query_embedding: Vec<f64>,
    pub theta: f64,
}

impl SceneRecord {
    pub fn from_parts(scene: &Scene, task: &Task) -> Self {
        Self {
            id: scene.id,
            patches: scene.patches.clone(),
            summary_bits: scene.summary_bits,
            task: TaskRecord {
                query_embedding: task.query_embedding.clone(),
                theta: task.theta,
            },
        }
    }

    pub fn into_parts(self) -> (Scene, Task) {
        let scene = Scene {
            id: self.id,
            patches: self.patches,
            summary_bits: self.summary_bits,
        };
        let task = Task::new(self.id, self.task.query_embedding, self.task.theta);
        (scene, task)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene records always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> SceneParams {
        SceneParams {
            dimension: 8,
            patches: 10,
            critical: 3,
            ..SceneParams::default()
        }
    }

    fn view_with(scene: &Scene, ids: &[u64]) -> AgentView {
        let mut v = AgentView::new(0, scene.id);
        for &id in ids {
            v.record_receipt(id);
        }
        v.refresh(scene).unwrap();
        v
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let p = small_params();
        let (s1, t1) = generate_scene(7, &p).unwrap();
        let (s2, t2) = generate_scene(7, &p).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(t1.query_embedding, t2.query_embedding);
        assert_eq!(s1.patches.len(), 10);
        assert_eq!(s1.patches.iter().filter(|p| p.critical).count(), 3);
    }

    #[test]
    fn different_seeds_differ_at_serialization_level() {
        let p = small_params();
        let (s7, t7) = generate_scene(7, &p).unwrap();
        let (s8, t8) = generate_scene(8, &p).unwrap();
        let j7 = SceneRecord::from_parts(&s7, &t7).to_json();
        let j8 = SceneRecord::from_parts(&s8, &t8).to_json();
        assert_ne!(j7, j8);
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let (scene, task) = generate_scene(3, &SceneParams::default()).unwrap();
        for p in &scene.patches {
            let n: f64 = p.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9, "patch {} norm {}", p.id, n);
        }
        let n: f64 = task.query_embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn critical_importances_normalized_and_positive() {
        let (scene, _) = generate_scene(11, &SceneParams::default()).unwrap();
        let sum: f64 = scene
            .patches
            .iter()
            .filter(|p| p.critical)
            .map(|p| p.importance)
            .sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for p in &scene.patches {
            if p.critical {
                assert!(p.importance > 0.0 && p.importance <= 1.0);
            } else {
                assert_eq!(p.importance, 0.0);
            }
        }
    }

    #[test]
    fn critical_patches_rank_closer_to_query_on_average() {
        // Planted relevance: expected similarity of critical embeddings to
        // the query must exceed that of non-critical ones.
        let mut crit = 0.0;
        let mut crit_n = 0.0;
        let mut other = 0.0;
        let mut other_n = 0.0;
        for seed in 0..20 {
            let (scene, task) = generate_scene(seed, &SceneParams::default()).unwrap();
            for p in &scene.patches {
                let dot: f64 = p
                    .embedding
                    .iter()
                    .zip(&task.query_embedding)
                    .map(|(a, b)| a * b)
                    .sum();
                if p.critical {
                    crit += dot;
                    crit_n += 1.0;
                } else {
                    other += dot;
                    other_n += 1.0;
                }
            }
        }
        assert!(crit / crit_n > other / other_n + 0.2);
    }

    #[test]
    fn all_critical_scene_reaches_full_coverage() {
        let p = SceneParams {
            patches: 5,
            critical: 5,
            ..small_params()
        };
        let (scene, _) = generate_scene(1, &p).unwrap();
        let all: Vec<u64> = scene.patches.iter().map(|p| p.id).collect();
        let v = view_with(&scene, &all);
        assert_eq!(v.coverage, 1.0);
    }

    #[test]
    fn invalid_params_are_all_reported() {
        let p = SceneParams {
            dimension: 1,
            patches: 2,
            critical: 3,
            theta: 1.5,
            ..SceneParams::default()
        };
        match generate_scene(0, &p) {
            Err(ModelError::InvalidParams(errs)) => {
                assert_eq!(errs.len(), 3, "expected 3 issues, got {errs:?}");
            }
            other => panic!("expected InvalidParams, got {other:?}"),
        }
    }

    #[test]
    fn coverage_of_empty_view_is_zero() {
        let (scene, _) = generate_scene(2, &small_params()).unwrap();
        let v = view_with(&scene, &[]);
        assert_eq!(v.coverage, 0.0);
        assert_eq!(v.uncertainty, 1.0);
    }

    #[test]
    fn coverage_matches_hand_sum() {
        // Critical importances {0.5, 0.3, 0.2}; receiving the 0.5 patch
        // alone yields coverage 0.5.
        let scene = Scene {
            id: 9,
            patches: vec![
                Patch {
                    id: 0,
                    embedding: vec![1.0, 0.0],
                    importance: 0.5,
                    size_bits: 8,
                    critical: true,
                },
                Patch {
                    id: 1,
                    embedding: vec![0.0, 1.0],
                    importance: 0.3,
                    size_bits: 8,
                    critical: true,
                },
                Patch {
                    id: 2,
                    embedding: vec![0.0, 1.0],
                    importance: 0.2,
                    size_bits: 8,
                    critical: true,
                },
                Patch {
                    id: 3,
                    embedding: vec![1.0, 0.0],
                    importance: 0.0,
                    size_bits: 8,
                    critical: false,
                },
            ],
            summary_bits: 8,
        };
        let v = view_with(&scene, &[0]);
        assert!((v.coverage - 0.5).abs() < 1e-15);
        let v = view_with(&scene, &[0, 3]);
        assert!((v.coverage - 0.5).abs() < 1e-15, "non-critical adds nothing");
        let v = view_with(&scene, &[0, 1, 2]);
        assert_eq!(v.coverage, 1.0);
    }

    #[test]
    fn coverage_rejects_unknown_patch() {
        let (scene, _) = generate_scene(2, &small_params()).unwrap();
        let mut v = AgentView::new(0, scene.id);
        v.record_receipt(999);
        match coverage(&v, &scene) {
            Err(ModelError::UnknownPatchId { patch_id: 999, .. }) => {}
            other => panic!("expected UnknownPatchId, got {other:?}"),
        }
    }

    #[test]
    fn task_completion_boundary_is_inclusive() {
        let task = Task::new(1, vec![1.0, 0.0], 0.8);
        let mut v = AgentView::new(0, 1);
        v.coverage = 0.0;
        assert!(!task_complete(&v, &task).unwrap());
        v.coverage = 0.79999;
        assert!(!task_complete(&v, &task).unwrap());
        v.coverage = 0.8;
        assert!(task_complete(&v, &task).unwrap());
        v.coverage = 1.0;
        assert!(task_complete(&v, &task).unwrap());
    }

    #[test]
    fn task_completion_rejects_scene_mismatch() {
        let task = Task::new(1, vec![1.0, 0.0], 0.8);
        let v = AgentView::new(0, 2);
        assert!(matches!(
            task_complete(&v, &task),
            Err(ModelError::SceneMismatch { .. })
        ));
    }

    #[test]
    fn scene_record_round_trips_with_exact_field_names() {
        let (scene, task) = generate_scene(5, &small_params()).unwrap();
        let rec = SceneRecord::from_parts(&scene, &task);
        let json = rec.to_json();
        for key in [
            "\"id\"",
            "\"patches\"",
            "\"embedding\"",
            "\"importance\"",
            "\"size_bits\"",
            "\"critical\"",
            "\"summary_bits\"",
            "\"task\"",
            "\"query_embedding\"",
            "\"theta\"",
        ] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back = SceneRecord::from_json(&json).unwrap();
        assert_eq!(rec, back);
        let (s2, t2) = back.into_parts();
        assert_eq!(scene, s2);
        assert_eq!(task.query_embedding, t2.query_embedding);
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // Adding any patch never decreases coverage, and order never matters.
        #[test]
        fn coverage_monotone_and_permutation_invariant(
            seed in 0u64..500,
            subset_bits in 0u32..(1 << 10),
            extra in 0usize..10,
        ) {
            let params = SceneParams {
                dimension: 8,
                patches: 10,
                critical: 3,
                ..SceneParams::default()
            };
            let (scene, _) = generate_scene(seed, &params).unwrap();
            let ids: Vec<u64> = (0..10)
                .filter(|i| subset_bits & (1 << i) != 0)
                .map(|i| i as u64)
                .collect();

            let mut base = AgentView::new(0, scene.id);
            for &id in &ids {
                base.record_receipt(id);
            }
            base.refresh(&scene).unwrap();

            // Permutation invariance: reversed insertion gives the same value.
            let mut rev = AgentView::new(0, scene.id);
            for &id in ids.iter().rev() {
                rev.record_receipt(id);
            }
            rev.refresh(&scene).unwrap();
            prop_assert_eq!(base.coverage, rev.coverage);

            // Monotonicity and completion permanence under one more patch.
            let extra_id = extra as u64;
            if extra_id < 10 {
                let was_complete = base.coverage >= params.theta;
                let mut more = base.clone();
                more.record_receipt(extra_id);
                more.refresh(&scene).unwrap();
                prop_assert!(more.coverage >= base.coverage);
                if was_complete {
                    prop_assert!(more.coverage >= params.theta);
                }
            }
        }
    }
}

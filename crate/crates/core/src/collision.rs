//! Embedding collisions: distinct functions whose summed vertex states land
//! close together even though the states themselves differ.
//!
//! ```text
//! states a = {(1,−1), (−1,1)}      Σ = (0,0)
//! states b = {(2,−2), (−2,2)}      Σ = (0,0)
//! ```
//!
//! A pair is a `Collision` when the graph embeddings agree (cosine ≥
//! `tau_sim`), the vertex states do not (distance ≥ `tau_node`), and the
//! functions come from different sources.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::acfg::FunctionRef;
use crate::align::GraphIndex;
use crate::embed::{embed_function, EmbeddingConfig, FunctionEmbedding, ModelParams, VertexStates};
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::linalg::dot;
use crate::search::RankedList;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionThresholds {
    pub tau_sim: f64,
    pub tau_node: f64,
}

impl Default for CollisionThresholds {
    fn default() -> Self {
        CollisionThresholds {
            tau_sim: 0.9,
            tau_node: 0.3,
        }
    }
}

impl CollisionThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_sim", self.tau_sim), ("tau_node", self.tau_node)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0,1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Collision,
    Rename,
    NotCollision,
}

/// Cosine where zero vectors have no direction: 0 against anything, except
/// that two identical vectors (zero included) score 1.
pub fn verdict_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a == b {
        return Ok(1.0);
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

fn greedy_matched_sum(a: &VertexStates, b: &VertexStates) -> Result<f64> {
    let (na, nb) = (a.vertex_count(), b.vertex_count());
    let mut pairs = Vec::with_capacity(na * nb);
    for i in 0..na {
        for j in 0..nb {
            pairs.push((verdict_cosine(a.row(i), b.row(j))?, i, j));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let (mut used_a, mut used_b) = (vec![false; na], vec![false; nb]);
    let mut sum = 0.0;
    for (c, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            sum += c;
        }
    }
    Ok(sum)
}

/// `1 − mean matched cosine` under greedy best-first matching; surplus
/// vertices count as cosine 0. Averaged over both argument orders.
pub fn vertex_state_distance(a: &VertexStates, b: &VertexStates) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let denom = a.vertex_count().max(b.vertex_count());
    if denom == 0 {
        return Err(Error::EmptyGraph);
    }
    let ab = greedy_matched_sum(a, b)?;
    let ba = greedy_matched_sum(b, a)?;
    Ok(1.0 - (ab + ba) / (2.0 * denom as f64))
}

/// One side of a collision check.
#[derive(Clone, Copy, Debug)]
pub struct Observed<'a> {
    pub embedding: &'a FunctionEmbedding,
    pub states: &'a VertexStates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvidence {
    pub cosine: f64,
    pub node_distance: f64,
    pub verdict: Verdict,
}

pub fn collision_evidence(a: Observed<'_>, b: Observed<'_>, t: &CollisionThresholds) -> Result<CollisionEvidence> {
    let cosine = verdict_cosine(&a.embedding.vector, &b.embedding.vector)?;
    let node_distance = vertex_state_distance(a.states, b.states)?;
    let (fa, fb) = (&a.embedding.function, &b.embedding.function);
    let verdict = if cosine >= t.tau_sim && node_distance >= t.tau_node && fa.source_id != fb.source_id {
        Verdict::Collision
    } else if cosine >= t.tau_sim && fa.source_id == fb.source_id && fa.function_name != fb.function_name {
        Verdict::Rename
    } else {
        Verdict::NotCollision
    };
    Ok(CollisionEvidence {
        cosine,
        node_distance,
        verdict,
    })
}

pub fn detect_collision(a: Observed<'_>, b: Observed<'_>, t: &CollisionThresholds) -> Result<Verdict> {
    collision_evidence(a, b, t).map(|e| e.verdict)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPair {
    pub query: FunctionRef,
    pub candidate: FunctionRef,
    pub cosine: f64,
    pub node_distance: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FpBreakdown {
    pub collision: usize,
    pub rename: usize,
    pub other: usize,
    pub pairs: Vec<ClassifiedPair>,
}

impl FpBreakdown {
    pub fn total(&self) -> usize {
        self.collision + self.rename + self.other
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }
}

/// Label every irrelevant top-K hit. Embeddings and vertex states are
/// recomputed from the graphs with `params`.
///
/// Under `BySource` labels renamed co-source hits are already relevant, so
/// the rename bucket stays empty; pass `ByName` lists to see them.
pub fn classify_false_positives(
    lists: &[RankedList],
    graphs: &GraphIndex<'_>,
    params: &ModelParams,
    cfg: &EmbeddingConfig,
    t: &CollisionThresholds,
    threads: usize,
) -> Result<FpBreakdown> {
    t.validate()?;
    let mut needed = BTreeSet::new();
    for l in lists {
        needed.insert(l.query.clone());
        for h in l.results.iter().filter(|h| !h.relevant) {
            needed.insert(h.function.clone());
        }
    }
    let refs: Vec<FunctionRef> = needed.into_iter().collect();
    let embedded = map_ordered(&refs, threads, |f| -> Result<(FunctionEmbedding, VertexStates)> {
        embed_function(graphs.get(f)?, params, cfg)
    });
    let mut cache = HashMap::with_capacity(refs.len());
    for (f, e) in refs.into_iter().zip(embedded) {
        cache.insert(f, e?);
    }
    let observe = |f: &FunctionRef| {
        let (embedding, states) = &cache[f];
        Observed { embedding, states }
    };

    let mut out = FpBreakdown::default();
    for l in lists {
        for h in l.results.iter().filter(|h| !h.relevant) {
            let ev = collision_evidence(observe(&l.query), observe(&h.function), t)?;
            match ev.verdict {
                Verdict::Collision => out.collision += 1,
                Verdict::Rename => out.rename += 1,
                Verdict::NotCollision => out.other += 1,
            }
            out.pairs.push(ClassifiedPair {
                query: l.query.clone(),
                candidate: h.function.clone(),
                cosine: ev.cosine,
                node_distance: ev.node_distance,
                verdict: ev.verdict,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acfg::{Arch, CompilationTag, OptLevel};

    fn fe(source: &str, name: &str, v: &[f64]) -> FunctionEmbedding {
        FunctionEmbedding {
            vector: v.to_vec(),
            function: FunctionRef {
                source_id: source.into(),
                function_name: name.into(),
                compilation: CompilationTag::new(Arch::X64, OptLevel::O0, "gcc"),
            },
        }
    }

    fn states(rows: &[&[f64]]) -> VertexStates {
        VertexStates::from_rows(rows)
    }

    #[test]
    fn distance_examples() {
        let a = states(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        assert_eq!(vertex_state_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            vertex_state_distance(&states(&[&[1.0, 0.0]]), &states(&[&[0.0, 1.0]])).unwrap(),
            1.0
        );
        // {(1,−1),(−1,1)} vs {(1,0)}: best pair is (1,−1)↔(1,0) at 1/√2; the
        // other vertex is surplus, so mean = (1/√2)/2
        let b = states(&[&[1.0, 0.0]]);
        let want = 1.0 - 0.5f64.sqrt() / 2.0;
        assert!((vertex_state_distance(&a, &b).unwrap() - want).abs() < 1e-15);
        assert!((vertex_state_distance(&b, &a).unwrap() - want).abs() < 1e-15);
        assert!(vertex_state_distance(&a, &states(&[&[1.0, 0.0, 0.0]])).is_err());
    }

    #[test]
    fn basis_versus_uniform_states() {
        let a = states(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let third = 1.0 / 3.0;
        let b = states(&[&[third; 3], &[third; 3], &[third; 3]]);
        let d = vertex_state_distance(&a, &b).unwrap();
        assert!((d - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn verdict_examples() {
        let t = CollisionThresholds::default();
        let sa = states(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let sb = states(&[&[1.0, 1.0], &[-1.0, -1.0]]);
        let za = fe("s1", "f", &[0.0, 0.0]);
        let zb = fe("s2", "g", &[0.0, 0.0]);
        let a = Observed { embedding: &za, states: &sa };
        let b = Observed { embedding: &zb, states: &sb };
        assert_eq!(detect_collision(a, b, &t).unwrap(), Verdict::Collision);
        assert_eq!(detect_collision(b, a, &t).unwrap(), Verdict::Collision);

        let r1 = fe("s1", "f", &[1.0, 2.0]);
        let r2 = fe("s1", "f_alias1", &[1.0, 2.0]);
        let a = Observed { embedding: &r1, states: &sa };
        let b = Observed { embedding: &r2, states: &sa };
        assert_eq!(detect_collision(a, b, &t).unwrap(), Verdict::Rename);

        let far = fe("s9", "h", &[2.0, -1.0]);
        let b = Observed { embedding: &far, states: &sb };
        assert_eq!(detect_collision(a, b, &t).unwrap(), Verdict::NotCollision);
    }

    #[test]
    fn raising_thresholds_never_adds_collisions() {
        let sa = states(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let sb = states(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let x = fe("a", "x", &[1.0, 1.0]);
        let y = fe("b", "y", &[1.0, 0.9]);
        let a = Observed { embedding: &x, states: &sa };
        let b = Observed { embedding: &y, states: &sb };
        let mut last = true;
        for tau in [0.0, 0.2, 0.4, 0.6, 0.8, 0.95, 1.0] {
            let t = CollisionThresholds { tau_sim: tau, tau_node: 0.1 };
            let hit = detect_collision(a, b, &t).unwrap() == Verdict::Collision;
            assert!(!hit || last);
            last = hit;
        }
    }
}

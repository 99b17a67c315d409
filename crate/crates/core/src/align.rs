//! Partial graph alignment: drop top-K candidates that share (almost) no
//! identical basic blocks with the query, backfilling from the rest of the
//! ranking so lists keep their length.
//!
//! Two blocks are identical when their feature vectors, rounded to six
//! decimals, agree componentwise within `tol`. A candidate survives when at
//! least `max(1, ceil(alpha·V_q))` query blocks find a distinct partner.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::acfg::{AttributedCfg, FunctionRef};
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::metrics::precision_recall_f1_single;
use crate::search::{check_same_queries, hit_order, RankedHit, RankedList};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub alpha: f64,
    pub tol: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            alpha: 0.05,
            tol: 1e-6,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol {} must be finite and ≥ 0", self.tol)));
        }
        Ok(())
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn blocks_identical(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (round6(*x) - round6(*y)).abs() <= tol)
}

/// Greedy one-to-one matching in node order: each query block takes the
/// first still-unmatched identical block of `c`.
pub fn match_identical_blocks(q: &AttributedCfg, c: &AttributedCfg, tol: f64) -> Result<usize> {
    if let (Some(dq), Some(dc)) = (q.d_feat(), c.d_feat()) {
        if dq != dc {
            return Err(Error::DimensionMismatch {
                expected: dq,
                found: dc,
            });
        }
    }
    let mut used = vec![false; c.node_count()];
    let mut matched = 0;
    for qb in &q.nodes {
        let hit = c
            .nodes
            .iter()
            .enumerate()
            .position(|(j, cb)| !used[j] && blocks_identical(&qb.features.0, &cb.features.0, tol));
        if let Some(j) = hit {
            used[j] = true;
            matched += 1;
        }
    }
    Ok(matched)
}

/// `max(1, ceil(alpha·V_q))`.
pub fn survival_threshold(query_vertices: usize, alpha: f64) -> usize {
    ((alpha * query_vertices as f64).ceil() as usize).max(1)
}

/// Graphs looked up by function ref.
#[derive(Clone, Debug, Default)]
pub struct GraphIndex<'g> {
    map: HashMap<FunctionRef, &'g AttributedCfg>,
}

impl<'g> GraphIndex<'g> {
    pub fn new<I: IntoIterator<Item = &'g AttributedCfg>>(graphs: I) -> Self {
        GraphIndex {
            map: graphs.into_iter().map(|g| (g.function_ref(), g)).collect(),
        }
    }

    pub fn get(&self, f: &FunctionRef) -> Result<&'g AttributedCfg> {
        self.map
            .get(f)
            .copied()
            .ok_or_else(|| Error::MissingGraph(f.to_string()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn survives(q: &AttributedCfg, c: &AttributedCfg, cfg: &AlignConfig) -> Result<bool> {
    Ok(match_identical_blocks(q, c, cfg.tol)? >= survival_threshold(q.node_count(), cfg.alpha))
}

/// Keep surviving candidates, then refill up to `K` from `fallback` (the
/// rest of the ranking, best first) under the same rule.
pub fn filter_ranked_list(
    list: &RankedList,
    graphs: &GraphIndex<'_>,
    cfg: &AlignConfig,
    fallback: &[RankedHit],
) -> Result<RankedList> {
    cfg.validate()?;
    let q = graphs.get(&list.query)?;
    let mut kept = Vec::with_capacity(list.k);
    for hit in &list.results {
        if survives(q, graphs.get(&hit.function)?, cfg)? {
            kept.push(hit.clone());
        }
    }
    let present: HashSet<FunctionRef> = list.results.iter().map(|h| h.function.clone()).collect();
    for hit in fallback {
        if kept.len() >= list.k {
            break;
        }
        if present.contains(&hit.function) {
            continue;
        }
        if survives(q, graphs.get(&hit.function)?, cfg)? {
            kept.push(hit.clone());
        }
    }
    kept.sort_by(hit_order);
    Ok(RankedList {
        query: list.query.clone(),
        results: kept,
        k: list.k,
        total_relevant_in_repo: list.total_relevant_in_repo,
    })
}

/// [`filter_ranked_list`] over `(list, fallback)` pairs, in input order.
pub fn filter_batch(
    lists: &[(RankedList, Vec<RankedHit>)],
    graphs: &GraphIndex<'_>,
    cfg: &AlignConfig,
    threads: usize,
) -> Result<Vec<RankedList>> {
    map_ordered(lists, threads, |(l, rest)| filter_ranked_list(l, graphs, cfg, rest))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryFilterDelta {
    pub query: FunctionRef,
    pub precision_before: f64,
    pub precision_after: f64,
    pub recall_before: f64,
    pub recall_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterEffect {
    pub precision_before: f64,
    pub precision_after: f64,
    pub recall_before: f64,
    pub recall_after: f64,
    pub delta_precision: f64,
    pub delta_recall: f64,
    pub per_query: Vec<QueryFilterDelta>,
}

pub fn evaluate_filter_effect(before: &[RankedList], after: &[RankedList], k: usize) -> Result<FilterEffect> {
    check_same_queries(before, after)?;
    if before.is_empty() {
        return Err(Error::invalid("empty query set"));
    }
    let per_query: Vec<QueryFilterDelta> = before
        .iter()
        .zip(after)
        .map(|(b, a)| {
            let pb = precision_recall_f1_single(b, k);
            let pa = precision_recall_f1_single(a, k);
            QueryFilterDelta {
                query: b.query.clone(),
                precision_before: pb.precision,
                precision_after: pa.precision,
                recall_before: pb.recall,
                recall_after: pa.recall,
            }
        })
        .collect();
    let n = per_query.len() as f64;
    let mean = |f: fn(&QueryFilterDelta) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    let precision_before = mean(|d| d.precision_before);
    let precision_after = mean(|d| d.precision_after);
    let recall_before = mean(|d| d.recall_before);
    let recall_after = mean(|d| d.recall_after);
    Ok(FilterEffect {
        precision_before,
        precision_after,
        recall_before,
        recall_after,
        delta_precision: precision_after - precision_before,
        delta_recall: recall_after - recall_before,
        per_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acfg::{Arch, BasicBlockNode, CompilationTag, FeatureVector, OptLevel};

    fn graph(source: &str, feats: &[&[f64]]) -> AttributedCfg {
        AttributedCfg {
            function_name: format!("f_{source}"),
            source_id: source.into(),
            compilation: CompilationTag::new(Arch::X64, OptLevel::O0, "gcc"),
            nodes: feats
                .iter()
                .enumerate()
                .map(|(i, f)| BasicBlockNode {
                    node_id: i,
                    features: FeatureVector(f.to_vec()),
                })
                .collect(),
            edges: (1..feats.len()).map(|i| (i - 1, i)).collect(),
        }
    }

    const A: &[f64] = &[0.1, 0.2];
    const B: &[f64] = &[0.3, 0.4];
    const C: &[f64] = &[0.5, 0.6];

    #[test]
    fn matching_examples() {
        let q = graph("q", &[A, B, C]);
        assert_eq!(match_identical_blocks(&q, &q, 1e-6).unwrap(), 3);
        assert_eq!(match_identical_blocks(&q, &graph("x", &[&[9.0, 9.0]]), 1e-6).unwrap(), 0);
        let aab = graph("a", &[A, A, B]);
        let abb = graph("b", &[A, B, B]);
        assert_eq!(match_identical_blocks(&aab, &abb, 1e-6).unwrap(), 2);
        assert_eq!(match_identical_blocks(&abb, &aab, 1e-6).unwrap(), 2);
        assert!(match_identical_blocks(&q, &graph("d", &[&[0.1]]), 1e-6).is_err());
    }

    #[test]
    fn rounding_absorbs_serialization_noise() {
        let q = graph("q", &[&[0.1234564, 0.5]]);
        let c = graph("c", &[&[0.1234561, 0.5]]);
        assert_eq!(match_identical_blocks(&q, &c, 0.0).unwrap(), 1);
        let far = graph("f", &[&[0.123458, 0.5]]);
        assert_eq!(match_identical_blocks(&q, &far, 1e-6).unwrap(), 0);
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(survival_threshold(10, 0.0), 1);
        assert_eq!(survival_threshold(10, 0.05), 1);
        assert_eq!(survival_threshold(30, 0.05), 2);
        assert_eq!(survival_threshold(10, 1.0), 10);
    }

    fn hit(g: &AttributedCfg, score: f64, relevant: bool) -> RankedHit {
        RankedHit {
            function: g.function_ref(),
            score,
            relevant,
        }
    }

    #[test]
    fn collision_candidate_removed_and_backfilled() {
        let q = graph("q", &[A, B, C]);
        let twin = graph("q2", &[A, B, &[0.7, 0.7]]);
        let collider = graph("z", &[&[0.9, 0.1], &[0.8, 0.2]]);
        let spare = graph("y", &[C, &[0.0, 0.0]]);
        let other = graph("w", &[&[0.33, 0.33]]);
        let graphs = GraphIndex::new([&q, &twin, &collider, &spare, &other]);
        let list = RankedList {
            query: q.function_ref(),
            results: vec![hit(&collider, 0.99, false), hit(&twin, 0.95, true)],
            k: 2,
            total_relevant_in_repo: 1,
        };
        let fallback = vec![hit(&other, 0.5, false), hit(&spare, 0.4, false)];
        let cfg = AlignConfig::default();
        let out = filter_ranked_list(&list, &graphs, &cfg, &fallback).unwrap();
        let refs: Vec<_> = out.results.iter().map(|h| h.function.source_id.as_str()).collect();
        assert_eq!(refs, vec!["q2", "y"]);
        assert_eq!(filter_ranked_list(&out, &graphs, &cfg, &fallback).unwrap(), out);

        let effect = evaluate_filter_effect(std::slice::from_ref(&list), &[out], 2).unwrap();
        assert_eq!(effect.delta_precision, 0.0);
        assert_eq!(effect.delta_recall, 0.0);

        // alpha = 0 with every candidate sharing a block leaves the list alone
        let clean = RankedList {
            results: vec![hit(&twin, 0.95, true), hit(&spare, 0.4, false)],
            ..list.clone()
        };
        let zero = AlignConfig { alpha: 0.0, ..cfg };
        assert_eq!(filter_ranked_list(&clean, &graphs, &zero, &fallback).unwrap(), clean);

        let missing = GraphIndex::new([&q]);
        assert!(matches!(
            filter_ranked_list(&list, &missing, &cfg, &fallback),
            Err(Error::MissingGraph(_))
        ));
        assert!(filter_ranked_list(&list, &graphs, &AlignConfig { alpha: 2.0, tol: 0.0 }, &fallback).is_err());
    }
}

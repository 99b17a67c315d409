//! Synthetic ground-truth corpora.
//!
//! Each source function is a random CFG with per-block features. Compiled
//! variants are simulated by structural transforms (block split/merge, edge
//! rewiring) driven by the optimization level, and by numeric drift
//! (per-architecture feature scaling, jitter) driven by the architecture.
//! Everything is deterministic in the corpus seed.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::acfg::{
    validate_acfg, Arch, AttributedCfg, BasicBlockNode, CompilationTag, Corpus, FeatureVector,
    OptLevel,
};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng, RNG_ALGORITHM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    BlockSplit,
    BlockMerge,
    FeatureJitter,
    FeatureScale,
    EdgeRewire,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantTransform {
    pub kind: TransformKind,
    pub intensity: f64,
}

impl VariantTransform {
    pub fn new(kind: TransformKind, intensity: f64) -> Self {
        VariantTransform { kind, intensity }
    }
}

/// Transform intensities used to derive each variant from its source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformProfile {
    pub name: String,
    /// Architectures variants are compiled for.
    pub archs: Vec<Arch>,
    /// Structural intensities at `O3`; lower levels scale linearly.
    pub split: f64,
    pub merge: f64,
    pub rewire: f64,
    /// Per-architecture feature scaling strength.
    pub arch_scale: f64,
    /// Jitter applied to every variant.
    pub jitter: f64,
    /// Extra jitter for non-X64 variants.
    pub cross_arch_jitter: f64,
}

impl TransformProfile {
    /// Mono-architecture, mild changes.
    pub fn easy() -> Self {
        TransformProfile {
            name: "easy".into(),
            archs: vec![Arch::X64],
            split: 0.2,
            merge: 0.2,
            rewire: 0.1,
            arch_scale: 0.0,
            jitter: 0.02,
            cross_arch_jitter: 0.0,
        }
    }

    /// Cross-architecture, heavy structural and numeric drift.
    pub fn hard() -> Self {
        TransformProfile {
            name: "hard".into(),
            archs: Arch::ALL.to_vec(),
            split: 0.5,
            merge: 0.4,
            rewire: 0.3,
            arch_scale: 0.6,
            jitter: 0.05,
            cross_arch_jitter: 0.1,
        }
    }

    /// Like `easy` but with no numeric drift, so untouched blocks stay
    /// bit-identical across variants.
    pub fn zero_jitter() -> Self {
        TransformProfile {
            name: "zero_jitter".into(),
            jitter: 0.0,
            ..TransformProfile::easy()
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "easy" => Ok(Self::easy()),
            "hard" => Ok(Self::hard()),
            "zero_jitter" => Ok(Self::zero_jitter()),
            other => Err(Error::invalid(format!("unknown transform profile {other:?}"))),
        }
    }

    fn validate(&self) -> Result<()> {
        let vals = [
            self.split,
            self.merge,
            self.rewire,
            self.arch_scale,
            self.jitter,
            self.cross_arch_jitter,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("profile intensities must be finite and >= 0"));
        }
        if self.archs.is_empty() {
            return Err(Error::invalid("profile needs at least one architecture"));
        }
        Ok(())
    }

    /// Transform list for a variant compiled under `tag`.
    pub fn transforms_for(&self, tag: &CompilationTag) -> Vec<VariantTransform> {
        let structural = f64::from(tag.opt_level.level().max(1)) / 3.0;
        let mut jitter = self.jitter;
        if tag.arch != Arch::X64 {
            jitter += self.cross_arch_jitter;
        }
        vec![
            VariantTransform::new(TransformKind::BlockSplit, self.split * structural),
            VariantTransform::new(TransformKind::BlockMerge, self.merge * structural),
            VariantTransform::new(TransformKind::EdgeRewire, self.rewire * structural),
            VariantTransform::new(TransformKind::FeatureScale, self.arch_scale),
            VariantTransform::new(TransformKind::FeatureJitter, jitter),
        ]
        .into_iter()
        .filter(|t| t.intensity > 0.0)
        .collect()
    }
}

fn deserialize_profile<'de, D: Deserializer<'de>>(d: D) -> Result<TransformProfile, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Named(String),
        Custom(TransformProfile),
    }
    match Repr::deserialize(d)? {
        Repr::Named(name) => TransformProfile::named(&name).map_err(serde::de::Error::custom),
        Repr::Custom(p) => Ok(p),
    }
}

/// Parameters of a synthetic corpus. `transform_profile` accepts either a
/// preset name (`"easy"`, `"hard"`, `"zero_jitter"`) or a full profile object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_sources: usize,
    pub variants_per_source: usize,
    pub node_count_range: (usize, usize),
    pub d_feat: usize,
    pub seed: u64,
    pub rename_fraction: f64,
    #[serde(deserialize_with = "deserialize_profile")]
    pub transform_profile: TransformProfile,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec::new(60, 4, 0)
    }
}

impl CorpusSpec {
    pub fn new(n_sources: usize, variants_per_source: usize, seed: u64) -> Self {
        CorpusSpec {
            n_sources,
            variants_per_source,
            node_count_range: (8, 30),
            d_feat: 8,
            seed,
            rename_fraction: 0.0,
            transform_profile: TransformProfile::easy(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sources == 0 || self.variants_per_source == 0 {
            return Err(Error::invalid("n_sources and variants_per_source must be >= 1"));
        }
        let (lo, hi) = self.node_count_range;
        if lo == 0 || lo > hi {
            return Err(Error::invalid("node_count_range needs 1 <= min <= max"));
        }
        if self.d_feat == 0 {
            return Err(Error::invalid("d_feat must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.rename_fraction) {
            return Err(Error::invalid("rename_fraction must lie in [0,1]"));
        }
        self.transform_profile.validate()
    }
}

fn base_tag() -> CompilationTag {
    CompilationTag::new(Arch::X64, OptLevel::O0, "gcc")
}

pub fn base_function_name(index: usize) -> String {
    format!("func_{index}")
}

/// Deterministic source function `index` of the corpus.
pub fn generate_source_function(spec: &CorpusSpec, index: usize) -> AttributedCfg {
    let mut rng = rng::stream(spec.seed, "source", index as u64);
    let (lo, hi) = spec.node_count_range;
    let n = rng.gen_range(lo..=hi);

    let nodes = (0..n)
        .map(|i| BasicBlockNode {
            node_id: i,
            features: FeatureVector(
                (0..spec.d_feat)
                    .map(|_| round_to(rng.gen_range(0.05..1.0), 4))
                    .collect(),
            ),
        })
        .collect();

    let mut edges = BTreeSet::new();
    for i in 1..n {
        // mostly fall-through, sometimes a jump from an earlier block
        let parent = if rng.gen_bool(0.6) {
            i - 1
        } else {
            rng.gen_range(0..i)
        };
        edges.insert((parent, i));
    }
    if n >= 2 {
        let extra = rng.gen_range(0..=n / 3);
        for _ in 0..extra {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                edges.insert((a, b));
            }
        }
    }

    AttributedCfg {
        function_name: base_function_name(index),
        source_id: format!("src:{index}"),
        compilation: base_tag(),
        nodes,
        edges: edges.into_iter().collect(),
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (v * p).round() / p
}

/// Mutable working form used while transforming a graph.
struct WorkGraph {
    features: Vec<Vec<f64>>,
    edges: BTreeSet<(usize, usize)>,
}

impl WorkGraph {
    fn from_cfg(g: &AttributedCfg) -> Self {
        WorkGraph {
            features: g.features_by_id().into_iter().map(|f| f.to_vec()).collect(),
            edges: g.edges.iter().copied().collect(),
        }
    }

    fn n(&self) -> usize {
        self.features.len()
    }

    fn connected(&self) -> bool {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// Move `v`'s outgoing edges to a new block appended after it.
    fn split(&mut self, v: usize, rng: &mut StreamRng) {
        let w = self.n();
        let ratio = rng.gen_range(0.3..0.7);
        let tail: Vec<f64> = self.features[v].iter().map(|x| x * (1.0 - ratio)).collect();
        self.features[v].iter_mut().for_each(|x| *x *= ratio);
        self.features.push(tail);
        let outgoing: Vec<(usize, usize)> = self
            .edges
            .range((v, 0)..(v + 1, 0))
            .copied()
            .collect();
        for (_, x) in outgoing {
            self.edges.remove(&(v, x));
            self.edges.insert((w, x));
        }
        self.edges.insert((v, w));
    }

    /// Contract edge `(u, v)` into `u`.
    fn merge(&mut self, u: usize, v: usize) {
        let fv = self.features.remove(v);
        let u = if u > v { u - 1 } else { u };
        for (a, b) in self.features[u].iter_mut().zip(fv) {
            *a += b;
        }
        let relabel = |x: usize| match x.cmp(&v) {
            std::cmp::Ordering::Equal => u,
            std::cmp::Ordering::Greater => x - 1,
            std::cmp::Ordering::Less => x,
        };
        self.edges = self
            .edges
            .iter()
            .map(|&(a, b)| (relabel(a), relabel(b)))
            .filter(|(a, b)| a != b)
            .collect();
    }

    fn into_cfg(self, template: &AttributedCfg, tag: &CompilationTag) -> AttributedCfg {
        AttributedCfg {
            function_name: template.function_name.clone(),
            source_id: template.source_id.clone(),
            compilation: tag.clone(),
            nodes: self
                .features
                .into_iter()
                .enumerate()
                .map(|(i, f)| BasicBlockNode {
                    node_id: i,
                    features: FeatureVector(f),
                })
                .collect(),
            edges: self.edges.into_iter().collect(),
        }
    }
}

/// Per-dimension multiplicative offset for an architecture.
fn arch_offset(arch: Arch, dim: usize) -> f64 {
    match arch {
        Arch::X64 => 0.0,
        Arch::X86 => [0.25, -0.25][dim % 2],
        Arch::ARM => [0.5, -0.3, 0.2][dim % 3],
    }
}

fn draw_count(rng: &mut StreamRng, intensity: f64, base: usize) -> usize {
    let cap = ((intensity * base as f64).floor() as usize).min(base);
    rng.gen_range(0..=cap)
}

/// Derive a compiled variant of `g`.
///
/// Counts for the structural transforms are drawn uniformly from
/// `0..=floor(intensity * size)`, so `BlockSplit` at intensity 0.5 on a
/// 10-block graph yields between 10 and 15 blocks.
pub fn apply_variant(
    g: &AttributedCfg,
    tag: &CompilationTag,
    transforms: &[VariantTransform],
    seed: u64,
) -> AttributedCfg {
    let mut work = WorkGraph::from_cfg(g);
    for (step, t) in transforms.iter().enumerate() {
        let mut rng = rng::stream(seed, "transform", step as u64);
        let intensity = if t.intensity.is_finite() {
            t.intensity.max(0.0)
        } else {
            0.0
        };
        match t.kind {
            TransformKind::BlockSplit => {
                let n = work.n();
                let count = draw_count(&mut rng, intensity, n);
                let mut picks: Vec<usize> = (0..n).collect();
                picks.shuffle(&mut rng);
                picks.truncate(count);
                picks.sort_unstable();
                for v in picks {
                    work.split(v, &mut rng);
                }
            }
            TransformKind::BlockMerge => {
                let n = work.n();
                let count = draw_count(&mut rng, intensity, n.saturating_sub(1));
                for _ in 0..count {
                    if work.n() <= 1 || work.edges.is_empty() {
                        break;
                    }
                    let idx = rng.gen_range(0..work.edges.len());
                    let &(u, v) = work.edges.iter().nth(idx).expect("index in range");
                    work.merge(u, v);
                }
            }
            TransformKind::EdgeRewire => {
                let n = work.n();
                if n < 2 {
                    continue;
                }
                let count = draw_count(&mut rng, intensity, work.edges.len());
                for _ in 0..count {
                    let idx = rng.gen_range(0..work.edges.len());
                    let old = *work.edges.iter().nth(idx).expect("index in range");
                    let mut replacement = None;
                    for _ in 0..20 {
                        let a = rng.gen_range(0..n);
                        let b = rng.gen_range(0..n);
                        if a != b && !work.edges.contains(&(a, b)) {
                            replacement = Some((a, b));
                            break;
                        }
                    }
                    let Some(new) = replacement else { continue };
                    work.edges.remove(&old);
                    work.edges.insert(new);
                    if !work.connected() {
                        work.edges.remove(&new);
                        work.edges.insert(old);
                    }
                }
            }
            TransformKind::FeatureJitter => {
                if intensity == 0.0 {
                    continue;
                }
                for row in &mut work.features {
                    for x in row.iter_mut() {
                        *x += rng.gen_range(-intensity..=intensity);
                    }
                }
            }
            TransformKind::FeatureScale => {
                for row in &mut work.features {
                    for (k, x) in row.iter_mut().enumerate() {
                        *x *= 1.0 + intensity * arch_offset(tag.arch, k);
                    }
                }
            }
        }
    }
    work.into_cfg(g, tag)
}

fn variant_tags(profile: &TransformProfile, count: usize, rng: &mut StreamRng) -> Vec<CompilationTag> {
    let base = base_tag();
    let mut combos: Vec<CompilationTag> = profile
        .archs
        .iter()
        .flat_map(|&a| OptLevel::ALL.iter().map(move |&o| CompilationTag::new(a, o, "gcc")))
        .filter(|t| *t != base)
        .collect();
    if combos.is_empty() {
        combos.push(base);
    }
    combos.shuffle(rng);
    (0..count).map(|i| combos[i % combos.len()].clone()).collect()
}

/// All variants of one source, base first.
pub fn generate_source_variants(spec: &CorpusSpec, index: usize) -> Vec<AttributedCfg> {
    let base = generate_source_function(spec, index);
    let mut rng = rng::stream(spec.seed, "variant-plan", index as u64);
    let tags = variant_tags(
        &spec.transform_profile,
        spec.variants_per_source.saturating_sub(1),
        &mut rng,
    );
    let mut out = Vec::with_capacity(spec.variants_per_source);
    out.push(base.clone());
    for (v, tag) in tags.iter().enumerate() {
        let variant_index = v + 1;
        let transforms = spec.transform_profile.transforms_for(tag);
        let seed = rng::derive_key(
            spec.seed,
            "variant",
            (index * spec.variants_per_source + variant_index) as u64,
        );
        let mut g = apply_variant(&base, tag, &transforms, seed);
        if rng.gen_bool(spec.rename_fraction) {
            g.function_name = format!("{}_alias{variant_index}", base.function_name);
        }
        out.push(g);
    }
    out
}

/// A decoy for `g` from another source: same structure, every feature
/// shifted by `shift`. It embeds close to `g` yet shares no identical block
/// with it when `shift` exceeds the alignment tolerance.
pub fn plant_collision(g: &AttributedCfg, source_id: &str, shift: f64) -> AttributedCfg {
    let mut out = g.clone();
    out.source_id = source_id.to_string();
    out.function_name = format!("{source_id}_decoy");
    for node in &mut out.nodes {
        node.features.0.iter_mut().for_each(|x| *x += shift);
    }
    out
}

/// Generate the whole corpus, ordered by (source index, variant index).
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let functions: Vec<AttributedCfg> = (0..spec.n_sources)
        .into_par_iter()
        .flat_map_iter(|i| generate_source_variants(spec, i))
        .collect();
    debug_assert!(functions
        .iter()
        .all(|g| validate_acfg(g, spec.d_feat).is_valid()));
    Ok(Corpus {
        d_feat: spec.d_feat,
        functions,
        rng: Some(RNG_ALGORITHM.to_string()),
    })
}

/// Source-disjoint train/validation/test partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<AttributedCfg>,
    pub validation: Vec<AttributedCfg>,
    pub test: Vec<AttributedCfg>,
}

/// Source counts per partition: `floor(frac * n)` for training (kept within
/// `1..=n-2`), the remainder split between validation and test with the odd
/// one going to validation.
pub fn split_counts(n_sources: usize, train_frac: f64) -> (usize, usize, usize) {
    let n_train = ((train_frac * n_sources as f64 + 1e-9).floor() as usize).clamp(1, n_sources - 2);
    let rest = n_sources - n_train;
    let n_val = rest.div_ceil(2);
    (n_train, n_val, rest - n_val)
}

/// Split by `source_id` so every variant of a source lands in one partition.
pub fn split_dataset(corpus: &[AttributedCfg], train_frac: f64, seed: u64) -> Result<DatasetSplit> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid("train_frac must lie in (0,1)"));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    for g in corpus {
        if seen.insert(g.source_id.as_str()) {
            order.push(&g.source_id);
        }
    }
    if order.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 distinct sources to split, found {}",
            order.len()
        )));
    }
    order.shuffle(&mut rng::stream(seed, "split", 0));
    let (n_train, n_val, _) = split_counts(order.len(), train_frac);
    let part: BTreeMap<&str, u8> = order
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = if i < n_train {
                0
            } else if i < n_train + n_val {
                1
            } else {
                2
            };
            (*s, p)
        })
        .collect();

    let mut split = DatasetSplit::default();
    for g in corpus {
        match part[g.source_id.as_str()] {
            0 => split.train.push(g.clone()),
            1 => split.validation.push(g.clone()),
            _ => split.test.push(g.clone()),
        }
    }
    Ok(split)
}

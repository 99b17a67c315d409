//! Embedding repositories and exhaustive top-K cosine search.
//!
//! A [`Repository`] is an immutable list of embedded functions built from a
//! pool under one of three protocols:
//!
//! - `Random`: uniform sample without replacement.
//! - `ExcludeIdentical`: the same, after dropping every pool entry that is
//!   the exact compiled instance (same source and compilation tag) of a query.
//! - `RatioInjection(r)`: exactly `round(r·|queries|)` query instances plus
//!   non-query functions up to the requested size.
//!
//! All three draw from seeded shuffles of fixed streams, so for a fixed seed
//! the injected queries and the non-query filler are nested across `r`, and
//! `RatioInjection(0)` selects the same entries as `ExcludeIdentical`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::acfg::{CompilationTag, FunctionRef};
use crate::embed::FunctionEmbedding;
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::linalg::dot;
use crate::metrics::{ranking_metrics, RankingMetrics};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Protocol {
    Random,
    ExcludeIdentical,
    RatioInjection(f64),
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Random => write!(f, "random"),
            Protocol::ExcludeIdentical => write!(f, "exclude"),
            Protocol::RatioInjection(r) => write!(f, "ratio:{r}"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    /// `random`, `exclude` or `ratio:<r>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Protocol::Random),
            "exclude" | "exclude-identical" | "nq" => Ok(Protocol::ExcludeIdentical),
            _ => match s.strip_prefix("ratio:") {
                Some(r) => r
                    .parse::<f64>()
                    .map(Protocol::RatioInjection)
                    .map_err(|_| Error::invalid(format!("bad injection ratio {r:?}"))),
                None => Err(Error::invalid(format!("unknown protocol {s:?}"))),
            },
        }
    }
}

/// How a search hit is judged relevant to its query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundTruthPolicy {
    /// Same function name.
    ByName,
    /// Same source function, whatever the symbol is called.
    BySource,
}

impl GroundTruthPolicy {
    pub fn is_relevant(self, query: &FunctionRef, candidate: &FunctionRef) -> bool {
        match self {
            GroundTruthPolicy::ByName => query.function_name == candidate.function_name,
            GroundTruthPolicy::BySource => query.source_id == candidate.source_id,
        }
    }
}

impl FromStr for GroundTruthPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "name" | "by-name" => Ok(GroundTruthPolicy::ByName),
            "source" | "by-source" => Ok(GroundTruthPolicy::BySource),
            _ => Err(Error::invalid(format!("unknown ground-truth policy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Repository {
    entries: Vec<FunctionEmbedding>,
    norms: Vec<f64>,
    protocol: Protocol,
    seed: u64,
}

impl Repository {
    pub fn new(entries: Vec<FunctionEmbedding>, protocol: Protocol, seed: u64) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::invalid("repository must not be empty"))?;
        let dim = first.vector.len();
        if let Some(bad) = entries.iter().find(|e| e.vector.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.vector.len(),
            });
        }
        let norms = entries.iter().map(|e| dot(&e.vector, &e.vector).sqrt()).collect();
        Ok(Repository {
            entries,
            norms,
            protocol,
            seed,
        })
    }

    /// Wrap a complete pool, e.g. one loaded from an index file.
    pub fn from_entries(entries: Vec<FunctionEmbedding>) -> Result<Self> {
        Repository::new(entries, Protocol::Random, 0)
    }

    pub fn entries(&self) -> &[FunctionEmbedding] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].vector.len()
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn contains_instance(&self, f: &FunctionRef) -> bool {
        self.entries.iter().any(|e| e.function.same_instance(f))
    }

    /// Entries relevant to `query` under `policy`, anywhere in the repository.
    pub fn count_relevant(&self, query: &FunctionRef, policy: GroundTruthPolicy) -> usize {
        self.entries
            .iter()
            .filter(|e| policy.is_relevant(query, &e.function))
            .count()
    }
}

fn shuffled(n: usize, seed: u64, domain: &str) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, domain, 0));
    idx
}

fn take_prefix(order: &[usize], n: usize) -> Result<Vec<usize>> {
    if n > order.len() {
        return Err(Error::InsufficientPool {
            needed: n,
            available: order.len(),
        });
    }
    Ok(order[..n].to_vec())
}

/// Sample a repository of `size` entries from `pool`. Entries keep their
/// pool order.
pub fn build_repository(
    pool: &[FunctionEmbedding],
    queries: &[FunctionRef],
    protocol: Protocol,
    size: usize,
    seed: u64,
) -> Result<Repository> {
    let instance_keys: HashSet<(&str, &CompilationTag)> = queries
        .iter()
        .map(|q| (q.source_id.as_str(), &q.compilation))
        .collect();
    let is_query = |e: &FunctionEmbedding| {
        instance_keys.contains(&(e.function.source_id.as_str(), &e.function.compilation))
    };
    let non_query: Vec<usize> = (0..pool.len()).filter(|&i| !is_query(&pool[i])).collect();
    let filler_order = || -> Vec<usize> {
        shuffled(non_query.len(), seed, "repo-filler")
            .into_iter()
            .map(|j| non_query[j])
            .collect()
    };

    let mut chosen = match protocol {
        Protocol::Random => take_prefix(&shuffled(pool.len(), seed, "repo-random"), size)?,
        Protocol::ExcludeIdentical => take_prefix(&filler_order(), size)?,
        Protocol::RatioInjection(r) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("injection ratio {r} outside [0,1]")));
            }
            let n_inject = (r * queries.len() as f64).round() as usize;
            if n_inject > size {
                return Err(Error::invalid(format!(
                    "cannot inject {n_inject} queries into a repository of {size}"
                )));
            }
            let mut injected = Vec::with_capacity(n_inject);
            let mut seen = HashSet::new();
            for qi in shuffled(queries.len(), seed, "repo-inject") {
                if injected.len() == n_inject {
                    break;
                }
                let q = &queries[qi];
                let pos = pool
                    .iter()
                    .position(|e| e.function.same_instance(q))
                    .ok_or_else(|| Error::invalid(format!("query {q} is not in the pool")))?;
                if seen.insert(pos) {
                    injected.push(pos);
                }
            }
            if injected.len() < n_inject {
                return Err(Error::InsufficientPool {
                    needed: n_inject,
                    available: injected.len(),
                });
            }
            injected.extend(take_prefix(&filler_order(), size - n_inject)?);
            injected
        }
    };
    chosen.sort_unstable();
    let entries = chosen.into_iter().map(|i| pool[i].clone()).collect();
    Repository::new(entries, protocol, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub function: FunctionRef,
    pub score: f64,
    pub relevant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: FunctionRef,
    pub results: Vec<RankedHit>,
    pub k: usize,
    pub total_relevant_in_repo: usize,
}

/// Descending score, then ascending function ref.
pub fn hit_order(a: &RankedHit, b: &RankedHit) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.function.cmp(&b.function))
}

fn score_all(repo: &Repository, q: &FunctionEmbedding, policy: GroundTruthPolicy) -> Result<Vec<RankedHit>> {
    if q.vector.len() != repo.dim() {
        return Err(Error::DimensionMismatch {
            expected: repo.dim(),
            found: q.vector.len(),
        });
    }
    let qn = dot(&q.vector, &q.vector).sqrt();
    if qn == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(repo
        .entries
        .iter()
        .zip(&repo.norms)
        .map(|(e, &en)| {
            // zero-vector entries have no direction and score 0
            let score = if en == 0.0 {
                0.0
            } else if e.vector == q.vector {
                1.0
            } else {
                // + 0.0 folds -0.0 so total_cmp ties behave
                (dot(&q.vector, &e.vector) / (qn * en)).clamp(-1.0, 1.0) + 0.0
            };
            RankedHit {
                function: e.function.clone(),
                score,
                relevant: policy.is_relevant(&q.function, &e.function),
            }
        })
        .collect())
}

/// Every repository entry ranked against `q`.
pub fn rank_all(repo: &Repository, q: &FunctionEmbedding, policy: GroundTruthPolicy) -> Result<Vec<RankedHit>> {
    let mut hits = score_all(repo, q, policy)?;
    hits.sort_by(hit_order);
    Ok(hits)
}

fn require_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    Ok(())
}

pub fn query_topk(
    repo: &Repository,
    q: &FunctionEmbedding,
    k: usize,
    policy: GroundTruthPolicy,
) -> Result<RankedList> {
    require_k(k)?;
    let mut hits = score_all(repo, q, policy)?;
    let total_relevant_in_repo = hits.iter().filter(|h| h.relevant).count();
    if k < hits.len() {
        hits.select_nth_unstable_by(k - 1, hit_order);
        hits.truncate(k);
    }
    hits.sort_by(hit_order);
    Ok(RankedList {
        query: q.function.clone(),
        results: hits,
        k,
        total_relevant_in_repo,
    })
}

/// Top-K list plus the rest of the repository in rank order, the fallback
/// that graph-alignment filtering draws replacements from.
pub fn query_with_fallback(
    repo: &Repository,
    q: &FunctionEmbedding,
    k: usize,
    policy: GroundTruthPolicy,
) -> Result<(RankedList, Vec<RankedHit>)> {
    require_k(k)?;
    let mut hits = rank_all(repo, q, policy)?;
    let total_relevant_in_repo = hits.iter().filter(|h| h.relevant).count();
    let rest = hits.split_off(k.min(hits.len()));
    Ok((
        RankedList {
            query: q.function.clone(),
            results: hits,
            k,
            total_relevant_in_repo,
        },
        rest,
    ))
}

pub fn query_batch(
    repo: &Repository,
    queries: &[FunctionEmbedding],
    k: usize,
    policy: GroundTruthPolicy,
    threads: usize,
) -> Result<Vec<RankedList>> {
    map_ordered(queries, threads, |q| query_topk(repo, q, k, policy))
        .into_iter()
        .collect()
}

/// `metric(BySource) − metric(ByName)` for every ranking metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rank1: f64,
    pub map: f64,
    pub mrr: f64,
    pub ndcg: f64,
}

impl MetricDelta {
    pub fn between(before: &RankingMetrics, after: &RankingMetrics) -> Self {
        MetricDelta {
            precision: after.precision - before.precision,
            recall: after.recall - before.recall,
            f1: after.f1 - before.f1,
            rank1: after.rank1 - before.rank1,
            map: after.map - before.map,
            mrr: after.mrr - before.mrr,
            ndcg: after.ndcg - before.ndcg,
        }
    }
}

pub(crate) fn check_same_queries(a: &[RankedList], b: &[RankedList]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.query != y.query) {
        return Err(Error::invalid("the two list sets cover different queries"));
    }
    Ok(())
}

pub fn rectification_delta(
    lists_by_name: &[RankedList],
    lists_by_source: &[RankedList],
    k: usize,
) -> Result<MetricDelta> {
    check_same_queries(lists_by_name, lists_by_source)?;
    let before = ranking_metrics(lists_by_name, k)?;
    let after = ranking_metrics(lists_by_source, k)?;
    Ok(MetricDelta::between(&before, &after))
}

/// Round every component to the nearest `f32`, the precision an index file
/// stores.
pub fn quantize_f32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

pub const INDEX_MAGIC: &[u8; 4] = b"BSDX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

/// Binary index: `"BSDX"`, version u32, d_embed u32, count u64, then per
/// entry five length-prefixed strings (name, source, arch, opt, compiler)
/// and `d_embed` little-endian f32 values. All integers little-endian.
pub fn write_index<W: Write>(w: W, entries: &[FunctionEmbedding]) -> Result<()> {
    let dim = entries.first().map_or(0, |e| e.vector.len());
    if let Some(bad) = entries.iter().find(|e| e.vector.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.vector.len(),
        });
    }
    let mut w = BufWriter::new(w);
    let io = |e| Error::io("<index>", e);
    w.write_all(INDEX_MAGIC).map_err(io)?;
    w.write_all(&INDEX_FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(entries.len() as u64).to_le_bytes()).map_err(io)?;
    for e in entries {
        let f = &e.function;
        put_str(&mut w, &f.function_name).map_err(io)?;
        put_str(&mut w, &f.source_id).map_err(io)?;
        put_str(&mut w, f.compilation.arch.as_str()).map_err(io)?;
        put_str(&mut w, f.compilation.opt_level.as_str()).map_err(io)?;
        put_str(&mut w, &f.compilation.compiler).map_err(io)?;
        for &x in &e.vector {
            w.write_all(&(x as f32).to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct IndexReader<R> {
    inner: R,
}

impl<R: Read> IndexReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Schema("truncated index file".into()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 1 << 20 {
            return Err(Error::Schema(format!("implausible string length {len}")));
        }
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Schema("truncated index file".into()))?;
        String::from_utf8(buf).map_err(|_| Error::Schema("non-UTF-8 string in index".into()))
    }
}

pub fn read_index<R: Read>(r: R) -> Result<Vec<FunctionEmbedding>> {
    let mut r = IndexReader {
        inner: BufReader::new(r),
    };
    let magic: [u8; 4] = r.bytes().map_err(|_| Error::BadMagic)?;
    if &magic != INDEX_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != INDEX_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version as u64,
            expected: INDEX_FORMAT_VERSION as u64,
        });
    }
    let dim = r.u32()? as usize;
    let count = u64::from_le_bytes(r.bytes()?) as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let function_name = r.string()?;
        let source_id = r.string()?;
        let arch = r.string()?.parse()?;
        let opt_level = r.string()?.parse()?;
        let compiler = r.string()?;
        let vector = (0..dim)
            .map(|_| Ok(f32::from_le_bytes(r.bytes()?) as f64))
            .collect::<Result<Vec<_>>>()?;
        entries.push(FunctionEmbedding {
            vector,
            function: FunctionRef {
                source_id,
                function_name,
                compilation: CompilationTag::new(arch, opt_level, compiler),
            },
        });
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(|e| Error::io("<index>", e))? != 0 {
        return Err(Error::Schema("trailing bytes after index entries".into()));
    }
    Ok(entries)
}

pub fn save_index(path: impl AsRef<Path>, entries: &[FunctionEmbedding]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_index(f, entries)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Vec<FunctionEmbedding>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_index(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acfg::{Arch, OptLevel};

    fn emb(source: &str, name: &str, opt: OptLevel, v: &[f64]) -> FunctionEmbedding {
        FunctionEmbedding {
            vector: v.to_vec(),
            function: FunctionRef {
                source_id: source.into(),
                function_name: name.into(),
                compilation: CompilationTag::new(Arch::X64, opt, "gcc"),
            },
        }
    }

    fn pool() -> Vec<FunctionEmbedding> {
        let mut out = Vec::new();
        for s in 0..10 {
            for (j, opt) in [OptLevel::O0, OptLevel::O1, OptLevel::O2].into_iter().enumerate() {
                let v = [s as f64 + 1.0, j as f64 * 0.1, 1.0];
                out.push(emb(&format!("s{s}"), &format!("f{s}"), opt, &v));
            }
        }
        out
    }

    #[test]
    fn random_full_size_is_the_pool() {
        let p = pool();
        let repo = build_repository(&p, &[], Protocol::Random, p.len(), 3).unwrap();
        assert_eq!(repo.entries(), &p[..]);
        assert!(build_repository(&p, &[], Protocol::Random, p.len() + 1, 3).is_err());
    }

    #[test]
    fn exclude_identical_drops_only_exact_instances() {
        let p = pool();
        let queries = vec![p[0].function.clone(), p[4].function.clone()];
        let repo = build_repository(&p, &queries, Protocol::ExcludeIdentical, p.len() - 2, 1).unwrap();
        for q in &queries {
            assert!(!repo.contains_instance(q));
            // co-source variants stay findable
            assert_eq!(repo.count_relevant(q, GroundTruthPolicy::BySource), 2);
        }
        assert!(build_repository(&p, &queries, Protocol::ExcludeIdentical, p.len() - 1, 1).is_err());
    }

    #[test]
    fn ratio_injection_counts_and_nesting() {
        let p = pool();
        let queries: Vec<FunctionRef> = p.iter().step_by(3).map(|e| e.function.clone()).collect();
        let exclude = build_repository(&p, &queries, Protocol::ExcludeIdentical, 12, 9).unwrap();
        let mut previous: Option<Repository> = None;
        for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let repo = build_repository(&p, &queries, Protocol::RatioInjection(r), 12, 9).unwrap();
            let injected = queries.iter().filter(|q| repo.contains_instance(q)).count();
            assert_eq!(injected, (r * queries.len() as f64).round() as usize);
            assert_eq!(repo.len(), 12);
            if r == 0.0 {
                assert_eq!(repo.entries(), exclude.entries());
            }
            if let Some(prev) = &previous {
                for q in queries.iter().filter(|q| prev.contains_instance(q)) {
                    assert!(repo.contains_instance(q));
                }
            }
            previous = Some(repo);
        }
        assert!(build_repository(&p, &queries, Protocol::RatioInjection(1.5), 12, 9).is_err());
        assert!(build_repository(&p, &queries, Protocol::RatioInjection(-0.1), 12, 9).is_err());
    }

    #[test]
    fn query_itself_ranks_first_with_score_one() {
        let p = pool();
        let repo = Repository::from_entries(p.clone()).unwrap();
        let list = query_topk(&repo, &p[7], 5, GroundTruthPolicy::BySource).unwrap();
        assert_eq!(list.results[0].function, p[7].function);
        assert_eq!(list.results[0].score, 1.0);
        assert_eq!(list.total_relevant_in_repo, 3);
        let big = query_topk(&repo, &p[7], 1000, GroundTruthPolicy::ByName).unwrap();
        assert_eq!(big.results.len(), p.len());
    }

    #[test]
    fn five_entry_repository_matches_hand_sort() {
        let entries = vec![
            emb("b", "g", OptLevel::O0, &[1.0, 0.0]),
            emb("a", "f", OptLevel::O1, &[0.0, 1.0]),
            emb("a", "f", OptLevel::O0, &[0.0, 2.0]),
            emb("c", "h", OptLevel::O0, &[1.0, 1.0]),
            emb("d", "z", OptLevel::O0, &[-1.0, 0.0]),
        ];
        let repo = Repository::from_entries(entries).unwrap();
        let q = emb("a", "f", OptLevel::O3, &[0.0, 3.0]);
        let list = query_topk(&repo, &q, 4, GroundTruthPolicy::ByName).unwrap();
        let names: Vec<(String, OptLevel)> = list
            .results
            .iter()
            .map(|h| (h.function.source_id.clone(), h.function.compilation.opt_level))
            .collect();
        // two exact ties at 1.0 broken by ref order, then (1,1), then (1,0)
        assert_eq!(
            names,
            vec![
                ("a".into(), OptLevel::O0),
                ("a".into(), OptLevel::O1),
                ("c".into(), OptLevel::O0),
                ("b".into(), OptLevel::O0),
            ]
        );
        assert_eq!(list.total_relevant_in_repo, 2);
        assert!((list.results[2].score - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dimension_and_zero_checks() {
        let repo = Repository::from_entries(pool()).unwrap();
        let bad = emb("x", "x", OptLevel::O0, &[1.0, 2.0]);
        assert!(matches!(
            query_topk(&repo, &bad, 5, GroundTruthPolicy::ByName),
            Err(Error::DimensionMismatch { .. })
        ));
        let zero = emb("x", "x", OptLevel::O0, &[0.0, 0.0, 0.0]);
        assert!(matches!(query_topk(&repo, &zero, 5, GroundTruthPolicy::ByName), Err(Error::ZeroVector)));
        assert!(query_topk(&repo, &pool()[0], 0, GroundTruthPolicy::ByName).is_err());
        assert!(Repository::from_entries(vec![]).is_err());
    }

    #[test]
    fn fallback_continues_the_ranking() {
        let p = pool();
        let repo = Repository::from_entries(p.clone()).unwrap();
        let (list, rest) = query_with_fallback(&repo, &p[2], 5, GroundTruthPolicy::BySource).unwrap();
        let full = rank_all(&repo, &p[2], GroundTruthPolicy::BySource).unwrap();
        assert_eq!(list, query_topk(&repo, &p[2], 5, GroundTruthPolicy::BySource).unwrap());
        assert_eq!([list.results, rest].concat(), full);
    }

    #[test]
    fn protocol_parsing() {
        assert_eq!("random".parse::<Protocol>().unwrap(), Protocol::Random);
        assert_eq!("exclude".parse::<Protocol>().unwrap(), Protocol::ExcludeIdentical);
        assert_eq!("ratio:0.25".parse::<Protocol>().unwrap(), Protocol::RatioInjection(0.25));
        assert!("ratio:x".parse::<Protocol>().is_err());
        assert_eq!(Protocol::RatioInjection(0.5).to_string(), "ratio:0.5");
    }

    #[test]
    fn index_round_trip_and_corruption() {
        let p: Vec<FunctionEmbedding> = pool()
            .into_iter()
            .map(|mut e| {
                e.vector = quantize_f32(&e.vector);
                e
            })
            .collect();
        let mut buf = Vec::new();
        write_index(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"BSDX");
        assert_eq!(read_index(buf.as_slice()).unwrap(), p);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_index(bad.as_slice()), Err(Error::BadMagic)));
        assert!(matches!(read_index(&b""[..]), Err(Error::BadMagic)));
        let mut v2 = buf.clone();
        v2[4] = 2;
        assert!(matches!(read_index(v2.as_slice()), Err(Error::UnsupportedVersion { found: 2, .. })));
        assert!(read_index(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf;
        extra.push(0);
        assert!(read_index(extra.as_slice()).is_err());
    }
}

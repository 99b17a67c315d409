//! Vulnerability search and license-violation detection over a firmware
//! pool.
//!
//! Vulnerability search reports the top-K evidence for each vulnerable query
//! function without applying a similarity cutoff. License detection scores a
//! query library `Q` against each target library `T` by
//! `S_QT = mean_{f ∈ Q} s_f`, where `s_f` is the top-1 similarity of `f`
//! inside `T`, and ranks the targets by that score.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acfg::FunctionRef;
use crate::align::{filter_ranked_list, AlignConfig, GraphIndex};
use crate::embed::FunctionEmbedding;
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::search::{load_index, query_topk, query_with_fallback, GroundTruthPolicy, RankedHit, Repository};

pub const DEFAULT_VULN_K: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VulnReport {
    pub query: FunctionRef,
    pub hits: Vec<RankedHit>,
    pub max_similarity: f64,
    pub min_similarity: f64,
    /// Hits from the query's own source (confirmed by ground truth).
    pub confirmed: usize,
}

pub fn vuln_search(
    queries: &[FunctionEmbedding],
    pool: &Repository,
    k: usize,
    threads: usize,
) -> Result<Vec<VulnReport>> {
    map_ordered(queries, threads, |q| {
        let list = query_topk(pool, q, k, GroundTruthPolicy::BySource)?;
        let scores = list.results.iter().map(|h| h.score);
        let max_similarity = scores.clone().fold(f64::NEG_INFINITY, f64::max);
        let min_similarity = scores.fold(f64::INFINITY, f64::min);
        Ok(VulnReport {
            query: list.query,
            confirmed: list.results.iter().filter(|h| h.relevant).count(),
            hits: list.results,
            max_similarity,
            min_similarity,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryScore {
    pub query_library: String,
    pub target_library: String,
    pub s_qt: f64,
    /// `s_f` per query function, in query order.
    pub per_function: Vec<f64>,
}

/// Optional graph-alignment pass applied before taking each top-1 score.
#[derive(Clone, Copy, Debug)]
pub struct AlignedTopOne<'a, 'g> {
    pub graphs: &'a GraphIndex<'g>,
    pub cfg: &'a AlignConfig,
}

fn top_one(q: &FunctionEmbedding, target: &Repository, align: Option<AlignedTopOne<'_, '_>>) -> Result<f64> {
    match align {
        None => Ok(query_topk(target, q, 1, GroundTruthPolicy::BySource)?.results[0].score),
        Some(a) => {
            let (list, rest) = query_with_fallback(target, q, 1, GroundTruthPolicy::BySource)?;
            let filtered = filter_ranked_list(&list, a.graphs, a.cfg, &rest)?;
            // nothing in T shares a block with f
            Ok(filtered.results.first().map_or(0.0, |h| h.score))
        }
    }
}

pub fn library_similarity(
    query_library: &str,
    queries: &[FunctionEmbedding],
    target_library: &str,
    target: &Repository,
    align: Option<AlignedTopOne<'_, '_>>,
) -> Result<LibraryScore> {
    if queries.is_empty() {
        return Err(Error::invalid("query library has no functions"));
    }
    if target.is_empty() {
        return Err(Error::invalid(format!("target library {target_library} is empty")));
    }
    let per_function = queries
        .iter()
        .map(|q| top_one(q, target, align))
        .collect::<Result<Vec<_>>>()?;
    let s_qt = per_function.iter().sum::<f64>() / per_function.len() as f64;
    Ok(LibraryScore {
        query_library: query_library.to_string(),
        target_library: target_library.to_string(),
        s_qt,
        per_function,
    })
}

/// Named libraries of one firmware image.
#[derive(Clone, Debug, Default)]
pub struct Firmware {
    pub libraries: BTreeMap<String, Repository>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedLibrary {
    pub library: String,
    pub s_qt: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryRanking {
    pub query_library: String,
    pub libraries: Vec<RankedLibrary>,
    /// Rank of the designated library, or −1 when it is absent.
    pub expected_rank: i64,
}

pub fn rank_target_libraries(
    query_library: &str,
    queries: &[FunctionEmbedding],
    firmware: &Firmware,
    expected: Option<&str>,
    align: Option<AlignedTopOne<'_, '_>>,
    threads: usize,
) -> Result<LibraryRanking> {
    if firmware.libraries.is_empty() {
        return Err(Error::invalid("firmware has no libraries"));
    }
    let libs: Vec<(&String, &Repository)> = firmware.libraries.iter().collect();
    let scores = map_ordered(&libs, threads, |(name, repo)| {
        library_similarity(query_library, queries, name, repo, align)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<(String, f64)> = scores.into_iter().map(|s| (s.target_library, s.s_qt)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let libraries: Vec<RankedLibrary> = order
        .into_iter()
        .enumerate()
        .map(|(i, (library, s_qt))| RankedLibrary {
            library,
            s_qt,
            rank: i + 1,
        })
        .collect();
    let expected_rank = expected
        .and_then(|e| libraries.iter().find(|l| l.library == e))
        .map_or(-1, |l| l.rank as i64);
    Ok(LibraryRanking {
        query_library: query_library.to_string(),
        libraries,
        expected_rank,
    })
}

/// `{"libraries": {"name": "index-path", …}}`. Relative paths resolve
/// against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmwareManifest {
    pub libraries: BTreeMap<String, PathBuf>,
}

impl FirmwareManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut m: FirmwareManifest = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| Error::Schema(format!("bad firmware manifest: {e}")))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in m.libraries.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn load_firmware(&self) -> Result<Firmware> {
        let mut libraries = BTreeMap::new();
        for (name, path) in &self.libraries {
            libraries.insert(name.clone(), Repository::from_entries(load_index(path)?)?);
        }
        Ok(Firmware { libraries })
    }
}

//! Attributed control-flow graphs: data model, corpus file format,
//! validation and simple structural statistics.
//!
//! A corpus file is newline-delimited JSON. The first line is a header
//! `{"format_version":1,"d_feat":N}`; every following line is one function:
//!
//! ```text
//! {"function_name":"f","source_id":"src:0","arch":"X64","opt_level":"O0","compiler":"gcc",
//!  "nodes":[{"id":0,"features":[..]}],"edges":[[0,1]]}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CORPUS_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arch {
    X86,
    X64,
    ARM,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::X86, Arch::X64, Arch::ARM];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::X86 => "X86",
            Arch::X64 => "X64",
            Arch::ARM => "ARM",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X86" => Ok(Arch::X86),
            "X64" => Ok(Arch::X64),
            "ARM" => Ok(Arch::ARM),
            other => Err(Error::Schema(format!("unknown arch {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptLevel {
    O0,
    O1,
    O2,
    O3,
}

impl OptLevel {
    pub const ALL: [OptLevel; 4] = [OptLevel::O0, OptLevel::O1, OptLevel::O2, OptLevel::O3];

    pub fn as_str(self) -> &'static str {
        match self {
            OptLevel::O0 => "O0",
            OptLevel::O1 => "O1",
            OptLevel::O2 => "O2",
            OptLevel::O3 => "O3",
        }
    }

    /// 0 for `O0` through 3 for `O3`.
    pub fn level(self) -> u8 {
        self as u8
    }
}

impl std::str::FromStr for OptLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O0" => Ok(OptLevel::O0),
            "O1" => Ok(OptLevel::O1),
            "O2" => Ok(OptLevel::O2),
            "O3" => Ok(OptLevel::O3),
            other => Err(Error::Schema(format!("unknown opt_level {other:?}"))),
        }
    }
}

/// Compilation provenance of one function instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompilationTag {
    pub arch: Arch,
    pub opt_level: OptLevel,
    pub compiler: String,
}

impl CompilationTag {
    pub fn new(arch: Arch, opt_level: OptLevel, compiler: impl Into<String>) -> Self {
        CompilationTag {
            arch,
            opt_level,
            compiler: compiler.into(),
        }
    }
}

impl fmt::Display for CompilationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}",
            self.arch.as_str(),
            self.opt_level.as_str(),
            self.compiler
        )
    }
}

/// Per-block feature vector. Dimension is fixed per corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicBlockNode {
    #[serde(rename = "id")]
    pub node_id: usize,
    pub features: FeatureVector,
}

/// Identity of a compiled function instance. Ordering is the search
/// tie-break order: source id, name, arch, opt level, compiler.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionRef {
    pub source_id: String,
    pub function_name: String,
    pub compilation: CompilationTag,
}

impl FunctionRef {
    /// True when both refer to the same compiled instance (same source and
    /// same compilation tag), regardless of the symbol name.
    pub fn same_instance(&self, other: &FunctionRef) -> bool {
        self.source_id == other.source_id && self.compilation == other.compilation
    }
}

impl fmt::Display for FunctionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@{}[{}]",
            self.function_name, self.source_id, self.compilation
        )
    }
}

/// A function's basic-block graph with per-block features.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedCfg {
    pub function_name: String,
    pub source_id: String,
    pub compilation: CompilationTag,
    pub nodes: Vec<BasicBlockNode>,
    pub edges: Vec<(usize, usize)>,
}

impl AttributedCfg {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn d_feat(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.features.len())
    }

    pub fn function_ref(&self) -> FunctionRef {
        FunctionRef {
            source_id: self.source_id.clone(),
            function_name: self.function_name.clone(),
            compilation: self.compilation.clone(),
        }
    }

    /// Feature rows indexed by node id. Assumes dense ids.
    pub fn features_by_id(&self) -> Vec<&[f64]> {
        let mut rows: Vec<&[f64]> = vec![&[]; self.nodes.len()];
        for n in &self.nodes {
            rows[n.node_id] = n.features.as_slice();
        }
        rows
    }

    /// Undirected neighbor sets indexed by node id: `N_i` is the union of
    /// in- and out-neighbors, each listed once, sorted ascending.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// True when every vertex is reachable from vertex 0 ignoring direction.
    pub fn is_weakly_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let adj = self.undirected_neighbors();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
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
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoVertices,
    DuplicateNodeId(usize),
    NonDenseNodeIds,
    DanglingEdge { from: usize, to: usize },
    DuplicateEdge { from: usize, to: usize },
    SelfLoop(usize),
    FeatureDimension { node: usize, expected: usize, found: usize },
    NonFiniteFeature { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoVertices => write!(f, "graph has no vertices"),
            Violation::DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            Violation::NonDenseNodeIds => write!(f, "node ids are not dense 0..V-1"),
            Violation::DanglingEdge { from, to } => {
                write!(f, "edge ({from},{to}) references a missing node")
            }
            Violation::DuplicateEdge { from, to } => write!(f, "duplicate edge ({from},{to})"),
            Violation::SelfLoop(v) => write!(f, "self-loop on node {v}"),
            Violation::FeatureDimension {
                node,
                expected,
                found,
            } => write!(
                f,
                "feature dimension on node {node}: expected {expected}, found {found}"
            ),
            Violation::NonFiniteFeature { node } => write!(f, "non-finite feature on node {node}"),
        }
    }
}

/// Outcome of [`validate_acfg`]: empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Check every graph invariant against the corpus feature dimension.
/// Never fails; all violations found are listed.
pub fn validate_acfg(g: &AttributedCfg, d_feat: usize) -> ValidationReport {
    let mut violations = Vec::new();
    let n = g.nodes.len();
    if n == 0 {
        violations.push(Violation::NoVertices);
    }

    let mut ids = HashSet::with_capacity(n);
    for node in &g.nodes {
        if !ids.insert(node.node_id) {
            violations.push(Violation::DuplicateNodeId(node.node_id));
        }
        if node.features.len() != d_feat {
            violations.push(Violation::FeatureDimension {
                node: node.node_id,
                expected: d_feat,
                found: node.features.len(),
            });
        }
        if !node.features.is_finite() {
            violations.push(Violation::NonFiniteFeature { node: node.node_id });
        }
    }
    if ids.len() == n && ids.iter().any(|&id| id >= n) {
        violations.push(Violation::NonDenseNodeIds);
    }

    let mut seen = HashSet::with_capacity(g.edges.len());
    for &(from, to) in &g.edges {
        if !ids.contains(&from) || !ids.contains(&to) {
            violations.push(Violation::DanglingEdge { from, to });
        }
        if from == to {
            violations.push(Violation::SelfLoop(from));
        }
        if !seen.insert((from, to)) {
            violations.push(Violation::DuplicateEdge { from, to });
        }
    }

    ValidationReport { violations }
}

/// `|V_a − V_b| / max(V_a, V_b)`.
pub fn vertex_count_relative_diff(a: &AttributedCfg, b: &AttributedCfg) -> f64 {
    let (va, vb) = (a.node_count() as f64, b.node_count() as f64);
    let denom = va.max(vb);
    if denom == 0.0 {
        return 0.0;
    }
    (va - vb).abs() / denom
}

/// An in-memory corpus: a feature dimension plus its functions.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub d_feat: usize,
    pub functions: Vec<AttributedCfg>,
    /// Name of the generator RNG, when the corpus was synthesized.
    pub rng: Option<String>,
}

impl Corpus {
    pub fn new(d_feat: usize, functions: Vec<AttributedCfg>) -> Self {
        Corpus {
            d_feat,
            functions,
            rng: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    format_version: u64,
    d_feat: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rng: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AcfgRecord {
    function_name: String,
    source_id: String,
    arch: String,
    opt_level: String,
    compiler: String,
    nodes: Vec<BasicBlockNode>,
    edges: Vec<[usize; 2]>,
}

impl AcfgRecord {
    fn into_graph(self) -> Result<AttributedCfg> {
        Ok(AttributedCfg {
            function_name: self.function_name,
            source_id: self.source_id,
            compilation: CompilationTag {
                arch: self.arch.parse()?,
                opt_level: self.opt_level.parse()?,
                compiler: self.compiler,
            },
            nodes: self.nodes,
            edges: self.edges.into_iter().map(|[a, b]| (a, b)).collect(),
        })
    }

    fn from_graph(g: &AttributedCfg) -> Self {
        AcfgRecord {
            function_name: g.function_name.clone(),
            source_id: g.source_id.clone(),
            arch: g.compilation.arch.as_str().to_string(),
            opt_level: g.compilation.opt_level.as_str().to_string(),
            compiler: g.compilation.compiler.clone(),
            nodes: g.nodes.clone(),
            edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

/// Read and validate a corpus file.
pub fn parse_acfg_stream(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parse a corpus from any reader. Blank lines are skipped; line numbers in
/// errors are 1-based and count the header.
pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus> {
    let reader = BufReader::new(reader);
    let mut header: Option<CorpusHeader> = None;
    let mut functions = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: CorpusHeader = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad header: {e}"),
                })?;
                if h.format_version != CORPUS_FORMAT_VERSION {
                    return Err(Error::UnsupportedVersion {
                        found: h.format_version,
                        expected: CORPUS_FORMAT_VERSION,
                    });
                }
                header = Some(h);
            }
            Some(h) => {
                let record: AcfgRecord =
                    serde_json::from_str(&line).map_err(|e| Error::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                let g = record.into_graph().map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                let report = validate_acfg(&g, h.d_feat);
                if !report.is_valid() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("schema violation: {report}"),
                    });
                }
                functions.push(g);
            }
        }
    }
    Ok(match header {
        Some(h) => Corpus {
            d_feat: h.d_feat,
            functions,
            rng: h.rng,
        },
        None => Corpus::new(0, Vec::new()),
    })
}

pub fn write_corpus<W: Write>(writer: W, corpus: &Corpus) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let header = CorpusHeader {
        format_version: CORPUS_FORMAT_VERSION,
        d_feat: corpus.d_feat,
        rng: corpus.rng.clone(),
    };
    let io = |e: std::io::Error| Error::io("<stream>", e);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Schema(e.to_string()))?;
    w.write_all(b"\n").map_err(io)?;
    for g in &corpus.functions {
        serde_json::to_writer(&mut w, &AcfgRecord::from_graph(g))
            .map_err(|e| Error::Schema(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_corpus_file(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(file, corpus).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

//! End-to-end orchestration: ingest → graph bundle → dataset → train →
//! evaluate / predict.

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{
    invoke_external_compiler, load_ast_file, parse_ast_document, AstError, AstTree, CompilerConfig, DefectCategory,
    RawAstDocument,
};
use crate::deps::{build_graph, identify_cross_contract_nodes, tag_dependencies, DepsError, InteractionPoint, LabelSet};
use crate::embed::{build_dataset, build_vocabulary, load_dataset, serialize_dataset, EmbedError, EmbeddingMatrix, NormalizedDataset};
use crate::gcn::{load_checkpoint, save_checkpoint, GcnError, GcnModel};
use crate::optimize::{merge_subgraphs, optimize_graph, OptimizeError, OptimizedGraph};
use crate::train::{evaluate, history_table, split, train, EpochRecord, EvalMetrics, TrainError};

pub use config::{PipelineConfig, SplitSection};
pub use report::{cmd_predict, predict_projects, render_report_text, DefectReport, SuspectSpan};

pub const PROJECT_META_FILE: &str = "project.json";
pub const GRAPH_SUFFIX: &str = ".graph.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no input projects found under {0}")]
    NoInputs(String),
    #[error("{path}: {source}")]
    Ast { path: String, source: AstError },
    #[error("project {project}: {source}")]
    Optimize { project: String, source: OptimizeError },
    #[error("project {0}: no usable source unit")]
    EmptyProject(String),
    #[error("duplicate project id {0}")]
    DuplicateProject(String),
    #[error(transparent)]
    Labels(#[from] DepsError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }

    /// True when the error signals a broken internal invariant rather than
    /// bad input.
    pub fn is_internal(&self) -> bool {
        fn gcn_internal(e: &GcnError) -> bool {
            matches!(
                e,
                GcnError::DimensionMismatch(_)
                    | GcnError::NonFiniteActivation(_)
                    | GcnError::ShapeMismatch { .. }
                    | GcnError::IndexOutOfRange(..)
            )
        }
        match self {
            PipelineError::Optimize { source, .. } => {
                matches!(source, OptimizeError::IdCollision(_) | OptimizeError::UnknownGraph(_))
            }
            PipelineError::Gcn(e) | PipelineError::Train(TrainError::Gcn(e)) => gcn_internal(e),
            _ => false,
        }
    }

    /// Process exit status: 1 for input errors, 2 for invariant breaches.
    pub fn exit_code(&self) -> i32 {
        if self.is_internal() {
            2
        } else {
            1
        }
    }
}

/// Contents of a project's `project.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectMeta {
    pub label: Option<bool>,
    pub categories: BTreeSet<DefectCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectSource {
    pub project_id: String,
    pub files: Vec<PathBuf>,
    pub meta: ProjectMeta,
}

fn is_input_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    name != PROJECT_META_FILE && !name.ends_with(GRAPH_SUFFIX) && (ext == "json" || ext == "sol")
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| PipelineError::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::io(dir, e))?;
    entries.sort();
    Ok(entries)
}

fn input_files_recursive(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    for entry in sorted_entries(dir)? {
        if entry.is_dir() {
            input_files_recursive(&entry, out)?;
        } else if is_input_file(&entry) {
            out.push(entry);
        }
    }
    Ok(())
}

fn read_meta(dir: &Path) -> Result<ProjectMeta, PipelineError> {
    let path = dir.join(PROJECT_META_FILE);
    if !path.exists() {
        return Ok(ProjectMeta::default());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: path.display().to_string(), source })
}

fn name_of(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("project");
    name.split('.').next().unwrap_or(name).to_owned()
}

fn project_in(dir: &Path) -> Result<Option<ProjectSource>, PipelineError> {
    let direct = sorted_entries(dir)?;
    let has_meta = dir.join(PROJECT_META_FILE).exists();
    if !has_meta && !direct.iter().any(|p| p.is_file() && is_input_file(p)) {
        return Ok(None);
    }
    let mut files = Vec::new();
    input_files_recursive(dir, &mut files)?;
    if files.is_empty() {
        return Ok(None);
    }
    Ok(Some(ProjectSource { project_id: name_of(dir), files, meta: read_meta(dir)? }))
}

/// Resolves input paths to projects.
///
/// A file is a one-file project. A directory holding `project.json` or AST /
/// source files directly is one project (all input files below it); any
/// other directory is a corpus whose immediate subdirectories are projects.
pub fn discover_projects(paths: &[PathBuf]) -> Result<Vec<ProjectSource>, PipelineError> {
    let mut projects = Vec::new();
    for path in paths {
        if path.is_file() {
            projects.push(ProjectSource { project_id: name_of(path), files: vec![path.clone()], meta: ProjectMeta::default() });
        } else if path.is_dir() {
            if let Some(p) = project_in(path)? {
                projects.push(p);
            } else {
                for sub in sorted_entries(path)?.into_iter().filter(|p| p.is_dir()) {
                    projects.extend(project_in(&sub)?);
                }
            }
        } else {
            return Err(PipelineError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")));
        }
    }
    if projects.is_empty() {
        let shown: Vec<_> = paths.iter().map(|p| p.display().to_string()).collect();
        return Err(PipelineError::NoInputs(shown.join(", ")));
    }
    let mut seen = BTreeSet::new();
    for p in &projects {
        if !seen.insert(p.project_id.clone()) {
            return Err(PipelineError::DuplicateProject(p.project_id.clone()));
        }
    }
    Ok(projects)
}

/// Version requested by the first `pragma solidity` line, e.g. `^0.8.0` →
/// `0.8.0`.
pub fn source_pragma_version(source: &str) -> Option<String> {
    let line = source.lines().map(str::trim).find(|l| l.starts_with("pragma solidity"))?;
    let spec = line.trim_start_matches("pragma solidity").trim().trim_end_matches(';');
    let start = spec.find(|c: char| c.is_ascii_digit())?;
    let version: String = spec[start..].chars().take_while(|c| c.is_ascii_digit() || *c == '.').collect();
    Some(version.trim_end_matches('.').to_owned()).filter(|v| !v.is_empty())
}

fn load_file(path: &Path, compilers: &CompilerConfig) -> Result<Vec<RawAstDocument>, AstError> {
    if path.extension().and_then(|e| e.to_str()) == Some("sol") {
        let source = std::fs::read_to_string(path).map_err(|source| AstError::Io { path: path.display().to_string(), source })?;
        let version = source_pragma_version(&source).unwrap_or_else(|| "unknown".into());
        Ok(vec![invoke_external_compiler(compilers, path, &version)?])
    } else {
        load_ast_file(path)
    }
}

/// Optimized, merged graph of one project plus ingest diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectGraph {
    pub project_id: String,
    pub meta: ProjectMeta,
    pub graph: OptimizedGraph,
    pub warnings: Vec<String>,
}

/// Runs parsing, dependency extraction, optimization and merging for one
/// project. Outside strict mode a failing source unit is skipped with a
/// warning.
pub fn ingest_project(
    project: &ProjectSource,
    labels: &LabelSet,
    compilers: &CompilerConfig,
    strict: bool,
) -> Result<ProjectGraph, PipelineError> {
    let mut warnings = Vec::new();
    let mut trees: Vec<AstTree> = Vec::new();
    for file in &project.files {
        let parsed = load_file(file, compilers)
            .and_then(|docs| docs.iter().map(parse_ast_document).collect::<Result<Vec<_>, _>>());
        match parsed {
            Ok(mut docs) => trees.append(&mut docs),
            Err(source) if !strict => warnings.push(format!("skipped {}: {source}", file.display())),
            Err(source) => return Err(PipelineError::Ast { path: file.display().to_string(), source }),
        }
    }

    let graphs: Vec<_> = trees.into_iter().map(|t| build_graph(&tag_dependencies(t, labels))).collect();
    let scan = identify_cross_contract_nodes(&graphs);

    // Optimize every graph; indices of survivors are remapped for the merge.
    let mut optimized = Vec::new();
    let mut remap = BTreeMap::new();
    for (i, g) in graphs.iter().enumerate() {
        match optimize_graph(g, labels) {
            Ok(o) => {
                remap.insert(i, optimized.len());
                optimized.push(o);
            }
            Err(source @ OptimizeError::EmptyResult(_)) if !strict => {
                warnings.push(format!("skipped {}: {source}", g.source_path));
            }
            Err(source) => return Err(PipelineError::Optimize { project: project.project_id.clone(), source }),
        }
    }
    if optimized.is_empty() {
        return Err(PipelineError::EmptyProject(project.project_id.clone()));
    }
    let points: Vec<InteractionPoint> = scan
        .points
        .iter()
        .filter_map(|p| {
            Some(InteractionPoint { graph_index: *remap.get(&p.graph_index)?, target_graph: *remap.get(&p.target_graph)?, ..*p })
        })
        .collect();

    let mut graph = merge_subgraphs(&optimized, &points)
        .map_err(|source| PipelineError::Optimize { project: project.project_id.clone(), source })?;
    graph.warnings.extend(scan.warnings);
    graph.graph_label = project.meta.label;
    warnings.extend(graph.warnings.iter().map(ToString::to_string));
    Ok(ProjectGraph { project_id: project.project_id.clone(), meta: project.meta.clone(), graph, warnings })
}

pub fn load_labels(config: &PipelineConfig) -> Result<LabelSet, PipelineError> {
    match &config.label_set {
        Some(path) => Ok(LabelSet::load(path)?),
        None => Ok(LabelSet::default()),
    }
}

/// Ingests every project found under `paths`. Outside strict mode a project
/// that fails entirely becomes a warning, as long as one project succeeds.
pub fn ingest_paths(paths: &[PathBuf], config: &PipelineConfig) -> Result<(Vec<ProjectGraph>, Vec<String>), PipelineError> {
    let labels = load_labels(config)?;
    let compilers = config.compiler_config()?;
    let mut graphs = Vec::new();
    let mut warnings = Vec::new();
    let mut first_error = None;
    for project in discover_projects(paths)? {
        match ingest_project(&project, &labels, &compilers, config.strict) {
            Ok(g) => graphs.push(g),
            Err(e) if !config.strict && !e.is_internal() => {
                warnings.push(format!("project {} skipped: {e}", project.project_id));
                first_error.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if graphs.is_empty() {
        return Err(first_error.expect("at least one project was discovered"));
    }
    Ok((graphs, warnings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<String, PipelineError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|source| PipelineError::Json { path: path.display().to_string(), source })
}

/// Writes one `<project>.graph.json` per project into `<output>/graphs`.
pub fn cmd_ingest(paths: &[PathBuf], config: &PipelineConfig) -> Result<IngestSummary, PipelineError> {
    let (graphs, mut warnings) = ingest_paths(paths, config)?;
    let dir = config.output_dir.join("graphs");
    let mut written = Vec::new();
    for g in &graphs {
        let path = dir.join(format!("{}{GRAPH_SUFFIX}", g.project_id));
        write_file(&path, to_json(g, &path)?)?;
        if config.dump_edges {
            write_file(&dir.join(format!("{}.edges.txt", g.project_id)), g.graph.edge_list_dump())?;
        }
        warnings.extend(g.warnings.iter().map(|w| format!("{}: {w}", g.project_id)));
        written.push(path);
    }
    Ok(IngestSummary { written, warnings })
}

pub fn load_graph_bundle(path: &Path) -> Result<ProjectGraph, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: path.display().to_string(), source })
}

/// Bundles from files and directories (every `*.graph.json` inside), sorted
/// by project id.
pub fn load_graph_bundles(paths: &[PathBuf]) -> Result<Vec<ProjectGraph>, PipelineError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            files.extend(sorted_entries(path)?.into_iter().filter(|p| {
                p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(GRAPH_SUFFIX))
            }));
        } else {
            files.push(path.clone());
        }
    }
    let mut bundles = files.iter().map(|f| load_graph_bundle(f)).collect::<Result<Vec<_>, _>>()?;
    if bundles.is_empty() {
        let shown: Vec<_> = paths.iter().map(|p| p.display().to_string()).collect();
        return Err(PipelineError::NoInputs(shown.join(", ")));
    }
    bundles.sort_by(|a, b| a.project_id.cmp(&b.project_id));
    for pair in bundles.windows(2) {
        if pair[0].project_id == pair[1].project_id {
            return Err(PipelineError::DuplicateProject(pair[0].project_id.clone()));
        }
    }
    Ok(bundles)
}

/// Vocabulary, seeded embedding and normalized features for a corpus.
pub fn dataset_from_bundles(bundles: &[ProjectGraph], config: &PipelineConfig) -> Result<NormalizedDataset, PipelineError> {
    let graphs: Vec<OptimizedGraph> = bundles.iter().map(|b| b.graph.clone()).collect();
    let vocab = build_vocabulary(&graphs, config.min_count, config.token_scheme());
    let m = EmbeddingMatrix::seeded(config.embedding_dim, vocab.len(), config.seed);
    let named: Vec<(String, OptimizedGraph)> = bundles.iter().map(|b| b.project_id.clone()).zip(graphs).collect();
    Ok(build_dataset(&named, &vocab, &m)?)
}

pub fn cmd_dataset(bundle_paths: &[PathBuf], out: &Path, config: &PipelineConfig) -> Result<NormalizedDataset, PipelineError> {
    let dataset = dataset_from_bundles(&load_graph_bundles(bundle_paths)?, config)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    serialize_dataset(&dataset, out)?;
    Ok(dataset)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub validation: Option<EvalMetrics>,
    pub model: GcnModel,
}

/// Splits, trains and writes `model.sgmd`, `history.tsv` and
/// `metrics.json` into the output directory.
pub fn cmd_train(dataset_path: &Path, config: &PipelineConfig) -> Result<TrainSummary, PipelineError> {
    let dataset = load_dataset(dataset_path)?;
    train_dataset(&dataset, config)
}

pub fn train_dataset(dataset: &NormalizedDataset, config: &PipelineConfig) -> Result<TrainSummary, PipelineError> {
    if dataset.embedding.dim() != config.embedding_dim {
        return Err(PipelineError::Config(format!(
            "dataset embedding dimension {} differs from configured {}",
            dataset.embedding.dim(),
            config.embedding_dim
        )));
    }
    let model = GcnModel::new(config.gcn_config(), dataset.vocabulary.clone(), dataset.embedding.clone())?;
    let (train_set, validation_set) = split(dataset, &config.split_spec())?;
    let outcome = train(model, &train_set, &validation_set, &config.train_config())?;
    let validation = match outcome.history.is_empty() {
        true => None,
        false => Some(evaluate(&outcome.model, &validation_set, config.threshold)?),
    };

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let checkpoint = dir.join("model.sgmd");
    save_checkpoint(&outcome.model, &checkpoint)?;
    let history_path = dir.join("history.tsv");
    write_file(&history_path, history_table(&outcome.history))?;
    if let Some(m) = &validation {
        let path = dir.join("metrics.json");
        write_file(&path, to_json(m, &path)?)?;
    }
    Ok(TrainSummary {
        checkpoint,
        history_path,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        validation,
        model: outcome.model,
    })
}

pub fn cmd_eval(checkpoint: &Path, dataset_path: &Path, config: &PipelineConfig) -> Result<EvalMetrics, PipelineError> {
    let model = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(dataset_path)?;
    Ok(evaluate(&model, &dataset, config.threshold)?)
}

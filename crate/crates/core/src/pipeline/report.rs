use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ingest_paths, to_json, write_file, PipelineConfig, PipelineError, ProjectGraph};
use crate::ast::DefectCategory;
use crate::embed::build_dataset;
use crate::gcn::{load_checkpoint, GcnModel};
use crate::optimize::OptimizedGraph;
use crate::train::prepare_inputs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspectSpan {
    pub file: String,
    pub offset: u64,
    pub length: u64,
    pub node_id: i64,
    pub kind: String,
    /// Euclidean norm of the node's final-layer state.
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub project_id: String,
    pub verdict: bool,
    /// Probability of the defective class.
    pub confidence: f64,
    pub threshold: f64,
    pub contract_paths: Vec<String>,
    /// Heuristic localization: nodes with the largest final-layer
    /// activation norm.
    pub suspect_spans: Vec<SuspectSpan>,
    pub taxonomy_note: Option<DefectCategory>,
    pub warnings: Vec<String>,
}

pub fn render_report_text(r: &DefectReport) -> String {
    let mut out = String::new();
    let verdict = if r.verdict { "DEFECT SUSPECTED" } else { "no defect detected" };
    let _ = writeln!(out, "project: {}", r.project_id);
    let _ = writeln!(out, "verdict: {verdict}");
    let _ = writeln!(out, "confidence: {:.6} (threshold {:.2})", r.confidence, r.threshold);
    if let Some(tag) = r.taxonomy_note {
        let _ = writeln!(out, "taxonomy: {tag}");
    }
    let _ = writeln!(out, "contracts:");
    for p in &r.contract_paths {
        let _ = writeln!(out, "  {p}");
    }
    let _ = writeln!(out, "suspect locations:");
    for s in &r.suspect_spans {
        let _ = writeln!(out, "  {}:{}:{}  {} #{}  activation {:.6}", s.file, s.offset, s.length, s.kind, s.node_id, s.activation);
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn suspects(graph: &OptimizedGraph, node_ids: &[i64], norms: &[f64], k: usize) -> Vec<SuspectSpan> {
    let mut ranked: Vec<(f64, i64)> = node_ids.iter().zip(norms).map(|(&id, &n)| (n, id)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked
        .into_iter()
        .filter_map(|(activation, id)| {
            let node = graph.nodes.get(&id)?;
            let file = graph.provenance.get(&id)?;
            (node.span.length > 0).then(|| SuspectSpan {
                file: file.clone(),
                offset: node.span.offset,
                length: node.span.length,
                node_id: id,
                kind: node.n_type.clone(),
                activation,
            })
        })
        .take(k)
        .collect()
}

/// Scores ingested projects with a trained model, using the model's own
/// vocabulary and embedding.
pub fn predict_projects(model: &GcnModel, projects: &[ProjectGraph], config: &PipelineConfig) -> Result<Vec<DefectReport>, PipelineError> {
    let named: Vec<(String, OptimizedGraph)> = projects.iter().map(|p| (p.project_id.clone(), p.graph.clone())).collect();
    let dataset = build_dataset(&named, &model.vocabulary, &model.embedding)?;
    let inputs = prepare_inputs(model, &dataset)?;

    let mut reports = Vec::with_capacity(projects.len());
    for (g, (project, input)) in projects.iter().zip(&inputs).enumerate() {
        let pass = model.forward(input)?;
        let confidence = pass.probabilities[(0, 1)].clamp(0.0, 1.0);
        let states = pass.node_states();
        let norms: Vec<f64> = (0..states.rows()).map(|r| states.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let (start, end) = dataset.graph_boundaries[g];
        reports.push(DefectReport {
            project_id: project.project_id.clone(),
            verdict: confidence >= config.threshold,
            confidence,
            threshold: config.threshold,
            contract_paths: project.graph.documents.iter().map(|d| d.path.clone()).collect(),
            suspect_spans: suspects(&project.graph, &dataset.node_ids[start..end], &norms, config.suspect_count),
            taxonomy_note: project.meta.categories.iter().next().copied(),
            warnings: project.warnings.clone(),
        });
    }
    Ok(reports)
}

/// Ingests `paths`, predicts every project and writes
/// `<output>/reports/<project>.json` and `.txt`.
pub fn cmd_predict(checkpoint: &Path, paths: &[PathBuf], config: &PipelineConfig) -> Result<Vec<DefectReport>, PipelineError> {
    let model = load_checkpoint(checkpoint)?;
    let (projects, _skipped) = ingest_paths(paths, config)?;
    let reports = predict_projects(&model, &projects, config)?;
    let dir = config.output_dir.join("reports");
    for r in &reports {
        let path = dir.join(format!("{}.json", r.project_id));
        write_file(&path, to_json(r, &path)?)?;
        write_file(&dir.join(format!("{}.txt", r.project_id)), render_report_text(r))?;
    }
    Ok(reports)
}

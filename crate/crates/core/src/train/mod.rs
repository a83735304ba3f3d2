//! Corpus splitting, the training loop and evaluation.

mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::NormalizedDataset;
use crate::gcn::{loss, normalized_adjacency, optimizer_step, AdamConfig, GcnError, GcnModel, GraphInput, TrainState};

pub use metrics::{history_table, EpochRecord, EvalMetrics};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("need at least 2 graphs to split, got {0}")]
    TooFewGraphs(usize),
    #[error("stratified split needs both classes present")]
    MissingClass,
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("dataset has unlabeled graphs")]
    UnlabeledDataset,
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("dataset vocabulary does not match the model vocabulary")]
    VocabularyMismatch,
    #[error(transparent)]
    Gcn(#[from] GcnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.9, seed: 7, stratified: true }
    }
}

/// Seeded split of graph indices into (train, validation), each sorted.
///
/// Each side gets `round(n · fraction)` graphs (per class when stratified),
/// adjusted so neither side is empty.
pub fn split_indices(labels: &[Option<bool>], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(TrainError::InvalidFraction(spec.train_fraction));
    }
    let n = labels.len();
    if n < 2 {
        return Err(TrainError::TooFewGraphs(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        if labels.iter().any(Option::is_none) {
            return Err(TrainError::UnlabeledDataset);
        }
        let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == Some(true)).collect();
        let neg: Vec<usize> = (0..n).filter(|&i| labels[i] == Some(false)).collect();
        if pos.is_empty() || neg.is_empty() {
            return Err(TrainError::MissingClass);
        }
        vec![pos, neg]
    } else {
        vec![(0..n).collect()]
    };

    let mut parts: Vec<(Vec<usize>, usize)> = groups
        .into_iter()
        .map(|mut g| {
            g.shuffle(&mut rng);
            let k = (g.len() as f64 * spec.train_fraction).round() as usize;
            (g, k)
        })
        .collect();
    let total: usize = parts.iter().map(|(_, k)| k).sum();
    if total == n {
        let largest = parts.iter_mut().max_by_key(|(_, k)| *k).expect("non-empty");
        largest.1 -= 1;
    } else if total == 0 {
        let largest = parts.iter_mut().max_by_key(|(g, _)| g.len()).expect("non-empty");
        largest.1 += 1;
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (g, k) in parts {
        train.extend_from_slice(&g[..k]);
        validation.extend_from_slice(&g[k..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok((train, validation))
}

pub fn split(dataset: &NormalizedDataset, spec: &SplitSpec) -> Result<(NormalizedDataset, NormalizedDataset), TrainError> {
    let (train, validation) = split_indices(&dataset.graph_labels, spec)?;
    Ok((dataset.subset(&train), dataset.subset(&validation)))
}

/// Per-graph model inputs for a dataset, checked against the model's
/// vocabulary.
pub fn prepare_inputs(model: &GcnModel, dataset: &NormalizedDataset) -> Result<Vec<GraphInput>, TrainError> {
    if dataset.vocabulary.tokens() != model.vocabulary.tokens() {
        return Err(TrainError::VocabularyMismatch);
    }
    (0..dataset.num_graphs())
        .map(|g| {
            let (start, end) = dataset.graph_boundaries[g];
            let token_ids = dataset.node_labels[start..end].iter().map(|t| model.vocabulary.index_of(t)).collect();
            let features = dataset.features.slice_rows(start, end);
            let norm_adj = normalized_adjacency(&dataset.graph_edges(g), end - start)?;
            Ok(GraphInput::single(token_ids, features, norm_adj))
        })
        .collect()
}

fn labels_of(dataset: &NormalizedDataset) -> Result<Vec<bool>, TrainError> {
    dataset.graph_labels.iter().map(|l| l.ok_or(TrainError::UnlabeledDataset)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffle of training graphs.
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50, patience: 10, adam: AdamConfig::default(), seed: 7, threshold: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best-validation-F1 epoch.
    pub model: GcnModel,
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
}

/// Trains one graph per optimizer step, evaluating on the validation set
/// after every epoch. Stops after `patience` epochs without a strict F1
/// improvement.
pub fn train(
    model: GcnModel,
    train_set: &NormalizedDataset,
    validation_set: &NormalizedDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if config.epochs == 0 {
        return Ok(TrainOutcome { model, history: Vec::new(), best_epoch: 0 });
    }
    if train_set.num_graphs() == 0 {
        return Err(TrainError::EmptySet("training"));
    }
    if validation_set.num_graphs() == 0 {
        return Err(TrainError::EmptySet("validation"));
    }
    let train_inputs = prepare_inputs(&model, train_set)?;
    let train_labels = labels_of(train_set)?;
    let val_inputs = prepare_inputs(&model, validation_set)?;
    let val_labels = labels_of(validation_set)?;

    let mut model = model;
    let mut state = TrainState::new(config.adam, model.parameters_mut().into_iter().map(|p| &*p));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, GcnModel)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &g in &order {
            let labels = [train_labels[g]];
            let (value, grads) = model.loss_and_gradients(&train_inputs[g], &labels)?;
            total += value;
            let grad_list = grads.as_list();
            optimizer_step(&mut state, &mut model.parameters_mut(), &grad_list)?;
        }
        let train_loss = total / order.len() as f64;

        let probs = probabilities(&model, &val_inputs)?;
        let val_loss = mean_loss(&probs, &val_labels)?;
        let metrics = EvalMetrics::from_pairs(probs.iter().map(|&p| p >= config.threshold).zip(val_labels.iter().copied()));
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(GcnError::NonFiniteActivation("loss").into());
        }
        let f1 = metrics.f1;
        history.push(EpochRecord { epoch, train_loss, val_loss, metrics });

        if best.as_ref().is_none_or(|(best_f1, _, _)| f1 > *best_f1) {
            best = Some((f1, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model: best_model, history, best_epoch })
}

fn probabilities(model: &GcnModel, inputs: &[GraphInput]) -> Result<Vec<f64>, TrainError> {
    inputs.iter().map(|input| Ok(model.forward(input)?.probabilities[(0, 1)])).collect()
}

fn mean_loss(probs: &[f64], labels: &[bool]) -> Result<f64, TrainError> {
    let matrix = crate::gcn::DenseMatrix::from_vec(probs.len(), 2, probs.iter().flat_map(|&p| [1.0 - p, p]).collect());
    Ok(loss(&matrix, labels)?)
}

/// Class-1 probability of every graph in the dataset.
pub fn predict_probabilities(model: &GcnModel, dataset: &NormalizedDataset) -> Result<Vec<f64>, TrainError> {
    probabilities(model, &prepare_inputs(model, dataset)?)
}

/// Predicts class 1 when its probability reaches `threshold`; one count per
/// graph.
pub fn evaluate(model: &GcnModel, dataset: &NormalizedDataset, threshold: f64) -> Result<EvalMetrics, TrainError> {
    let labels = labels_of(dataset)?;
    let probs = predict_probabilities(model, dataset)?;
    Ok(EvalMetrics::from_pairs(probs.iter().map(|&p| p >= threshold).zip(labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pos: usize, neg: usize) -> Vec<Option<bool>> {
        std::iter::repeat_n(Some(true), pos).chain(std::iter::repeat_n(Some(false), neg)).collect()
    }

    #[test]
    fn ninety_ten() {
        let spec = SplitSpec { train_fraction: 0.9, seed: 1, stratified: false };
        let (train, val) = split_indices(&labels(5, 5), &spec).unwrap();
        assert_eq!((train.len(), val.len()), (9, 1));
    }

    #[test]
    fn same_seed_same_split() {
        let spec = SplitSpec::default();
        assert_eq!(split_indices(&labels(30, 20), &spec).unwrap(), split_indices(&labels(30, 20), &spec).unwrap());
        let other = SplitSpec { seed: 99, ..spec };
        assert_ne!(split_indices(&labels(30, 20), &spec).unwrap(), split_indices(&labels(30, 20), &other).unwrap());
    }

    #[test]
    fn stratified_half() {
        let l = labels(6, 4);
        let spec = SplitSpec { train_fraction: 0.5, seed: 3, stratified: true };
        let (train, _) = split_indices(&l, &spec).unwrap();
        let pos = train.iter().filter(|&&i| l[i] == Some(true)).count();
        assert_eq!((pos, train.len() - pos), (3, 2));
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split_indices(&labels(1, 0), &SplitSpec::default()), Err(TrainError::TooFewGraphs(1))));
        assert!(matches!(split_indices(&labels(4, 0), &SplitSpec::default()), Err(TrainError::MissingClass)));
        let bad = SplitSpec { train_fraction: 1.0, ..SplitSpec::default() };
        assert!(matches!(split_indices(&labels(4, 4), &bad), Err(TrainError::InvalidFraction(_))));
    }

    #[test]
    fn neither_side_empty() {
        let spec = SplitSpec { train_fraction: 0.9, seed: 0, stratified: true };
        let (train, val) = split_indices(&labels(1, 1), &spec).unwrap();
        assert_eq!((train.len(), val.len()), (1, 1));
        let spec = SplitSpec { train_fraction: 0.1, seed: 0, stratified: false };
        let (train, val) = split_indices(&labels(1, 2), &spec).unwrap();
        assert_eq!((train.len(), val.len()), (1, 2));
    }
}

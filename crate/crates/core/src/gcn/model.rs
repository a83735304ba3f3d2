use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DenseMatrix, GcnError};
use crate::embed::{EmbeddingMatrix, Vocabulary};

/// Probabilities are clamped to `[PROBABILITY_CLAMP, 1 - PROBABILITY_CLAMP]`
/// before taking logs.
pub const PROBABILITY_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub embedding_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
    /// Train the embedding matrix jointly with the layer weights. When
    /// false, the precomputed dataset features are used as-is.
    pub train_embedding: bool,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig { embedding_dim: 64, hidden_dims: vec![64, 64, 64], num_classes: 2, seed: 7, train_embedding: true }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<(), GcnError> {
        if self.embedding_dim == 0 || self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(GcnError::InvalidConfig("dimensions must be positive and at least one layer given".into()));
        }
        if self.num_classes != 2 {
            return Err(GcnError::InvalidConfig("only binary classification is supported".into()));
        }
        Ok(())
    }
}

/// Layer weights `W^(0..L-1)`, readout `W^(L)`, embedding `M` and the
/// vocabulary `M` is indexed by.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub config: GcnConfig,
    /// Propagation layers followed by the readout matrix.
    pub weights: Vec<DenseMatrix>,
    pub embedding: EmbeddingMatrix,
    pub vocabulary: Vocabulary,
}

/// One forward/backward unit: a block of graphs sharing a propagation
/// matrix. `ranges` delimits each graph's node rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub token_ids: Vec<usize>,
    pub features: DenseMatrix,
    pub norm_adj: DenseMatrix,
    pub ranges: Vec<(usize, usize)>,
}

impl GraphInput {
    pub fn single(token_ids: Vec<usize>, features: DenseMatrix, norm_adj: DenseMatrix) -> Self {
        let n = norm_adj.rows();
        GraphInput { token_ids, features, norm_adj, ranges: vec![(0, n)] }
    }

    pub fn num_nodes(&self) -> usize {
        self.norm_adj.rows()
    }
}

/// Cached intermediates of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `H^(0)`.
    pub input: DenseMatrix,
    /// Norms of the raw embedding rows when features come from `M`.
    input_norms: Option<Vec<f64>>,
    /// `Â H^(l)` per layer.
    propagated: Vec<DenseMatrix>,
    /// `H^(1..=L)`.
    pub hidden: Vec<DenseMatrix>,
    /// Mean-pooled final states, one row per graph.
    pub pooled: DenseMatrix,
    pub logits: DenseMatrix,
    pub probabilities: DenseMatrix,
}

impl ForwardPass {
    /// Final-layer node states.
    pub fn node_states(&self) -> &DenseMatrix {
        self.hidden.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    /// Present only when the embedding is trainable.
    pub embedding: Option<DenseMatrix>,
}

impl Gradients {
    pub fn as_list(&self) -> Vec<&DenseMatrix> {
        self.weights.iter().chain(self.embedding.as_ref()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.as_list().iter().map(|m| m.frobenius_norm().powi(2)).sum::<f64>().sqrt()
    }
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Binary cross-entropy over the class-1 column, averaged over rows.
pub fn loss(probabilities: &DenseMatrix, labels: &[bool]) -> Result<f64, GcnError> {
    if probabilities.rows() != labels.len() {
        return Err(GcnError::LengthMismatch { probabilities: probabilities.rows(), labels: labels.len() });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let p = probabilities[(i, 1)].clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
    DenseMatrix::from_vec(fan_in, fan_out, data)
}

impl GcnModel {
    /// Glorot-uniform weights drawn from `config.seed`.
    pub fn new(config: GcnConfig, vocabulary: Vocabulary, embedding: EmbeddingMatrix) -> Result<Self, GcnError> {
        config.validate()?;
        if embedding.dim() != config.embedding_dim || embedding.vocab_size() != vocabulary.len() {
            return Err(GcnError::DimensionMismatch(format!(
                "embedding {}x{} for dim {} and vocabulary {}",
                embedding.dim(),
                embedding.vocab_size(),
                config.embedding_dim,
                vocabulary.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut dims = vec![config.embedding_dim];
        dims.extend(&config.hidden_dims);
        dims.push(config.num_classes);
        let weights = dims.windows(2).map(|w| glorot(&mut rng, w[0], w[1])).collect();
        Ok(GcnModel { config, weights, embedding, vocabulary })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn readout(&self) -> &DenseMatrix {
        self.weights.last().expect("readout present")
    }

    /// Trainable parameters in gradient order: weights, then `M` when the
    /// embedding is trained.
    pub fn parameters_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let train_embedding = self.config.train_embedding;
        let mut params: Vec<&mut DenseMatrix> = self.weights.iter_mut().collect();
        if train_embedding {
            params.push(&mut self.embedding.m);
        }
        params
    }

    pub fn check_structure(&self) -> Result<(), GcnError> {
        self.config.validate()?;
        let mut dims = vec![self.config.embedding_dim];
        dims.extend(&self.config.hidden_dims);
        dims.push(self.config.num_classes);
        if self.weights.len() != dims.len() - 1 {
            return Err(GcnError::DimensionMismatch(format!("{} weight matrices for {} layers", self.weights.len(), dims.len() - 1)));
        }
        for (l, (w, pair)) in self.weights.iter().zip(dims.windows(2)).enumerate() {
            if w.shape() != (pair[0], pair[1]) {
                return Err(GcnError::DimensionMismatch(format!("W^({l}) is {:?}, expected {:?}", w.shape(), (pair[0], pair[1]))));
            }
        }
        if self.embedding.dim() != self.config.embedding_dim || self.embedding.vocab_size() != self.vocabulary.len() {
            return Err(GcnError::DimensionMismatch("embedding does not match config/vocabulary".into()));
        }
        Ok(())
    }

    /// `H^(l+1) = ReLU(Â H^(l) W^(l))`, mean-pooled per graph, then
    /// `softmax(pooled · W^(L))`.
    pub fn forward(&self, input: &GraphInput) -> Result<ForwardPass, GcnError> {
        let n = input.num_nodes();
        if input.norm_adj.cols() != n {
            return Err(GcnError::DimensionMismatch(format!("propagation matrix {:?} is not square", input.norm_adj.shape())));
        }
        let (h0, input_norms) = if self.config.train_embedding {
            if input.token_ids.len() != n {
                return Err(GcnError::DimensionMismatch(format!("{} token ids for {n} nodes", input.token_ids.len())));
            }
            if let Some(&bad) = input.token_ids.iter().find(|&&t| t >= self.embedding.vocab_size()) {
                return Err(GcnError::DimensionMismatch(format!("token id {bad} outside vocabulary")));
            }
            let mut raw = self.embedding.lookup(&input.token_ids);
            let mut norms = Vec::with_capacity(n);
            for r in 0..n {
                let row = raw.row_mut(r);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
                norms.push(norm);
            }
            (raw, Some(norms))
        } else {
            if input.features.shape() != (n, self.config.embedding_dim) {
                return Err(GcnError::DimensionMismatch(format!(
                    "features {:?} for {n} nodes of dim {}",
                    input.features.shape(),
                    self.config.embedding_dim
                )));
            }
            (input.features.clone(), None)
        };
        for &(start, end) in &input.ranges {
            if start > end || end > n {
                return Err(GcnError::DimensionMismatch(format!("graph range {start}..{end} outside {n} nodes")));
            }
        }

        let mut propagated = Vec::with_capacity(self.num_layers());
        let mut hidden: Vec<DenseMatrix> = Vec::with_capacity(self.num_layers());
        for w in &self.weights[..self.num_layers()] {
            let h = hidden.last().unwrap_or(&h0);
            let p = input.norm_adj.matmul(h);
            let z = p.matmul(w);
            propagated.push(p);
            hidden.push(z.map(|v| v.max(0.0)));
        }
        let last = hidden.last().expect("at least one layer");
        if !last.is_finite() {
            return Err(GcnError::NonFiniteActivation("hidden layers"));
        }

        let mut pooled = DenseMatrix::zeros(input.ranges.len(), last.cols());
        for (g, &(start, end)) in input.ranges.iter().enumerate() {
            if end == start {
                continue;
            }
            let scale = 1.0 / (end - start) as f64;
            for r in start..end {
                for (acc, &v) in pooled.row_mut(g).iter_mut().zip(last.row(r)) {
                    *acc += v * scale;
                }
            }
        }
        let logits = pooled.matmul(self.readout());
        if !logits.is_finite() {
            return Err(GcnError::NonFiniteActivation("logits"));
        }
        let probabilities = softmax_rows(&logits);
        Ok(ForwardPass { input: h0, input_norms, propagated, hidden, pooled, logits, probabilities })
    }

    /// Exact gradients of [`loss`] for the given forward pass.
    pub fn backward(&self, input: &GraphInput, pass: &ForwardPass, labels: &[bool]) -> Result<Gradients, GcnError> {
        let graphs = pass.probabilities.rows();
        if graphs != labels.len() {
            return Err(GcnError::LengthMismatch { probabilities: graphs, labels: labels.len() });
        }
        let scale = 1.0 / graphs.max(1) as f64;

        // dL/dlogits through the clamp and the two-class softmax
        let mut d_logits = DenseMatrix::zeros(graphs, 2);
        for (g, &y) in labels.iter().enumerate() {
            let p = pass.probabilities[(g, 1)];
            if !(PROBABILITY_CLAMP..=1.0 - PROBABILITY_CLAMP).contains(&p) {
                continue;
            }
            let d_p = if y { -1.0 / p } else { 1.0 / (1.0 - p) } * scale;
            let d_l1 = d_p * p * (1.0 - p);
            d_logits[(g, 0)] = -d_l1;
            d_logits[(g, 1)] = d_l1;
        }

        let layers = self.num_layers();
        let mut weight_grads = vec![DenseMatrix::zeros(0, 0); layers + 1];
        weight_grads[layers] = pass.pooled.t_matmul(&d_logits);
        let d_pooled = d_logits.matmul_t(self.readout());

        let last = pass.node_states();
        let mut d_h = DenseMatrix::zeros(last.rows(), last.cols());
        for (g, &(start, end)) in input.ranges.iter().enumerate() {
            if end == start {
                continue;
            }
            let share = 1.0 / (end - start) as f64;
            for r in start..end {
                for (d, &v) in d_h.row_mut(r).iter_mut().zip(d_pooled.row(g)) {
                    *d = v * share;
                }
            }
        }

        for l in (0..layers).rev() {
            let mut d_z = d_h;
            for (d, &h) in d_z.data_mut().iter_mut().zip(pass.hidden[l].data()) {
                if h <= 0.0 {
                    *d = 0.0;
                }
            }
            weight_grads[l] = pass.propagated[l].t_matmul(&d_z);
            if l == 0 && !self.config.train_embedding {
                d_h = DenseMatrix::zeros(0, 0);
                break;
            }
            let d_p = d_z.matmul_t(&self.weights[l]);
            d_h = input.norm_adj.t_matmul(&d_p);
        }

        let embedding = match (&pass.input_norms, self.config.train_embedding) {
            (Some(norms), true) => {
                let mut d_m = DenseMatrix::zeros(self.embedding.dim(), self.embedding.vocab_size());
                for (r, &tok) in input.token_ids.iter().enumerate() {
                    let norm = norms[r];
                    if norm == 0.0 {
                        continue;
                    }
                    let z = pass.input.row(r);
                    let dz = d_h.row(r);
                    let dot: f64 = z.iter().zip(dz).map(|(a, b)| a * b).sum();
                    for d in 0..z.len() {
                        d_m[(d, tok)] += (dz[d] - z[d] * dot) / norm;
                    }
                }
                Some(d_m)
            }
            _ => None,
        };
        Ok(Gradients { weights: weight_grads, embedding })
    }

    /// Loss and gradients for one input.
    pub fn loss_and_gradients(&self, input: &GraphInput, labels: &[bool]) -> Result<(f64, Gradients), GcnError> {
        let pass = self.forward(input)?;
        let value = loss(&pass.probabilities, labels)?;
        let grads = self.backward(input, &pass, labels)?;
        Ok((value, grads))
    }
}

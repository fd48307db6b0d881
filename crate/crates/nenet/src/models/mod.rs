//! Link prediction models over character graphs.
//!
//! Four model variants share one interface: the edge-learnable network
//! (NENET), the same network with edge features frozen at their initial
//! values (the edge-propagation ablation), a vanilla spectral-normalized
//! GCN, and a dynamic GCN that rebuilds its neighbourhood graph in feature
//! space after every layer. All of them score the same directed candidate
//! edges of the spatial k-NN graph, so their metrics are directly
//! comparable.

mod dynamic_gcn;
mod nenet;
mod vanilla_gcn;

pub use dynamic_gcn::{DynamicGcnConfig, DynamicGcnModel};
pub use nenet::{NenetConfig, NenetModel};
pub use vanilla_gcn::{VanillaGcnConfig, VanillaGcnModel};

use crate::error::{Error, Result};
use crate::graph::CharGraph;
use crate::nn::Matrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Per-edge probability of the positive class, aligned with a graph's edge
/// list.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePrediction {
    pub probs: Vec<f64>,
}

impl EdgePrediction {
    /// Positive-class softmax of a 2-column logit matrix.
    pub fn from_logits(logits: &Matrix) -> EdgePrediction {
        let probs = (0..logits.rows())
            .map(|e| {
                let r = logits.row(e);
                crate::nn::softmax2([r[0], r[1]])[1]
            })
            .collect();
        EdgePrediction { probs }
    }

    /// Boolean decision at a probability threshold (default 0.5).
    pub fn is_positive(&self, edge: usize, threshold: f64) -> bool {
        self.probs[edge] >= threshold
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Which model a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Nenet,
    NenetStaticEdge,
    VanillaGcn,
    DynamicGcn,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Nenet => "nenet",
            ModelKind::NenetStaticEdge => "nenet_static_edge",
            ModelKind::VanillaGcn => "vanilla_gcn",
            ModelKind::DynamicGcn => "dynamic_gcn",
        }
    }

    pub fn all() -> [ModelKind; 4] {
        [
            ModelKind::Nenet,
            ModelKind::NenetStaticEdge,
            ModelKind::VanillaGcn,
            ModelKind::DynamicGcn,
        ]
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nenet" => Ok(ModelKind::Nenet),
            "nenet_static_edge" => Ok(ModelKind::NenetStaticEdge),
            "vanilla_gcn" => Ok(ModelKind::VanillaGcn),
            "dynamic_gcn" => Ok(ModelKind::DynamicGcn),
            other => Err(Error::Config(format!(
                "unknown model type '{other}' (expected nenet, nenet_static_edge, vanilla_gcn or dynamic_gcn)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One named weight tensor in a checkpoint. Vectors are stored as a single
/// column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// A serialized model: type tag, structural config, init seed and all
/// weights by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model_type: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub weights: BTreeMap<String, WeightRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Collects named tensors while building a checkpoint.
pub(crate) struct WeightWriter {
    weights: BTreeMap<String, WeightRecord>,
}

impl WeightWriter {
    pub fn new() -> Self {
        WeightWriter {
            weights: BTreeMap::new(),
        }
    }

    pub fn matrix(&mut self, name: &str, m: &Matrix) {
        self.weights.insert(
            name.to_string(),
            WeightRecord {
                rows: m.rows(),
                cols: m.cols(),
                data: m.data().to_vec(),
            },
        );
    }

    pub fn vector(&mut self, name: &str, v: &[f64]) {
        self.weights.insert(
            name.to_string(),
            WeightRecord {
                rows: v.len(),
                cols: 1,
                data: v.to_vec(),
            },
        );
    }

    pub fn mlp(&mut self, prefix: &str, p: &crate::nn::MlpParams) {
        self.matrix(&format!("{prefix}.w1"), &p.w1);
        self.vector(&format!("{prefix}.b1"), &p.b1);
        self.matrix(&format!("{prefix}.w2"), &p.w2);
        self.vector(&format!("{prefix}.b2"), &p.b2);
    }

    pub fn finish(self) -> BTreeMap<String, WeightRecord> {
        self.weights
    }
}

/// Validates and extracts named tensors while loading a checkpoint. Every
/// weight must be consumed exactly once with the shape the config implies.
pub(crate) struct WeightReader<'a> {
    weights: &'a BTreeMap<String, WeightRecord>,
    consumed: std::collections::HashSet<String>,
}

impl<'a> WeightReader<'a> {
    pub fn new(weights: &'a BTreeMap<String, WeightRecord>) -> Self {
        WeightReader {
            weights,
            consumed: std::collections::HashSet::new(),
        }
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let rec = self
            .weights
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing weight '{name}'")))?;
        if rec.rows != rows || rec.cols != cols || rec.data.len() != rows * cols {
            return Err(Error::Checkpoint(format!(
                "weight '{name}' has shape {}x{} ({} values), expected {rows}x{cols}",
                rec.rows,
                rec.cols,
                rec.data.len()
            )));
        }
        self.consumed.insert(name.to_string());
        Ok(Matrix::from_vec(rows, cols, rec.data.clone()))
    }

    pub fn vector(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        Ok(self.matrix(name, len, 1)?.data().to_vec())
    }

    pub fn mlp(&mut self, prefix: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Result<crate::nn::MlpParams> {
        Ok(crate::nn::MlpParams {
            w1: self.matrix(&format!("{prefix}.w1"), d_hidden, d_in)?,
            b1: self.vector(&format!("{prefix}.b1"), d_hidden)?,
            w2: self.matrix(&format!("{prefix}.w2"), d_out, d_hidden)?,
            b2: self.vector(&format!("{prefix}.b2"), d_out)?,
        })
    }

    pub fn finish(self) -> Result<()> {
        for name in self.weights.keys() {
            if !self.consumed.contains(name) {
                return Err(Error::Checkpoint(format!(
                    "unexpected weight '{name}' for this model config"
                )));
            }
        }
        Ok(())
    }
}

/// Weighted two-class cross-entropy straight from a logit matrix. Working
/// from logits keeps small class probabilities exact, which matters for
/// finite-difference gradient verification.
pub(crate) fn weighted_ce_from_logits(logits: &Matrix, labels: &[u8], weights: &[f64]) -> f64 {
    assert_eq!(logits.rows(), labels.len());
    assert_eq!(logits.rows(), weights.len());
    let mut loss = 0.0;
    for e in 0..logits.rows() {
        let r = logits.row(e);
        let probs = crate::nn::softmax2([r[0], r[1]]);
        loss += weights[e] * crate::nn::cross_entropy(probs, labels[e] as usize);
    }
    loss
}

/// A trained or trainable link predictor of any supported kind.
#[derive(Debug, Clone)]
pub enum LinkModel {
    Nenet(NenetModel),
    VanillaGcn(VanillaGcnModel),
    DynamicGcn(DynamicGcnModel),
}

impl LinkModel {
    /// Builds a freshly initialized model of `kind` with the default
    /// dimension schedule, graph degree `k` and MLP hidden width `hidden`.
    pub fn new(kind: ModelKind, k: usize, hidden: usize, seed: u64) -> LinkModel {
        match kind {
            ModelKind::Nenet => {
                LinkModel::Nenet(NenetModel::new(NenetConfig::standard(k, hidden, false), false, seed))
            }
            ModelKind::NenetStaticEdge => {
                LinkModel::Nenet(NenetModel::new(NenetConfig::standard(k, hidden, true), true, seed))
            }
            ModelKind::VanillaGcn => {
                LinkModel::VanillaGcn(VanillaGcnModel::new(VanillaGcnConfig::standard(k, hidden), seed))
            }
            ModelKind::DynamicGcn => {
                LinkModel::DynamicGcn(DynamicGcnModel::new(DynamicGcnConfig::standard(k, hidden), seed))
            }
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            LinkModel::Nenet(m) => {
                if m.static_edges() {
                    ModelKind::NenetStaticEdge
                } else {
                    ModelKind::Nenet
                }
            }
            LinkModel::VanillaGcn(_) => ModelKind::VanillaGcn,
            LinkModel::DynamicGcn(_) => ModelKind::DynamicGcn,
        }
    }

    /// Graph degree the model was configured for.
    pub fn k(&self) -> usize {
        match self {
            LinkModel::Nenet(m) => m.config().k,
            LinkModel::VanillaGcn(m) => m.config().k,
            LinkModel::DynamicGcn(m) => m.config().k,
        }
    }

    pub fn predict(&self, g: &CharGraph) -> EdgePrediction {
        match self {
            LinkModel::Nenet(m) => m.predict(g),
            LinkModel::VanillaGcn(m) => m.predict(g),
            LinkModel::DynamicGcn(m) => m.predict(g),
        }
    }

    /// Weighted cross-entropy over the graph's edges.
    pub fn scene_loss(&self, g: &CharGraph, labels: &[u8], weights: &[f64]) -> f64 {
        match self {
            LinkModel::Nenet(m) => m.scene_loss(g, labels, weights),
            LinkModel::VanillaGcn(m) => m.scene_loss(g, labels, weights),
            LinkModel::DynamicGcn(m) => m.scene_loss(g, labels, weights),
        }
    }

    /// Weighted loss plus its exact gradient as a flat vector aligned with
    /// `param_vector`.
    pub fn scene_gradient(&self, g: &CharGraph, labels: &[u8], weights: &[f64]) -> (f64, Vec<f64>) {
        match self {
            LinkModel::Nenet(m) => m.scene_gradient(g, labels, weights),
            LinkModel::VanillaGcn(m) => m.scene_gradient(g, labels, weights),
            LinkModel::DynamicGcn(m) => m.scene_gradient(g, labels, weights),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            LinkModel::Nenet(m) => m.n_params(),
            LinkModel::VanillaGcn(m) => m.n_params(),
            LinkModel::DynamicGcn(m) => m.n_params(),
        }
    }

    pub fn param_vector(&self) -> Vec<f64> {
        match self {
            LinkModel::Nenet(m) => m.param_vector(),
            LinkModel::VanillaGcn(m) => m.param_vector(),
            LinkModel::DynamicGcn(m) => m.param_vector(),
        }
    }

    pub fn set_param_vector(&mut self, v: &[f64]) {
        match self {
            LinkModel::Nenet(m) => m.set_param_vector(v),
            LinkModel::VanillaGcn(m) => m.set_param_vector(v),
            LinkModel::DynamicGcn(m) => m.set_param_vector(v),
        }
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        match self {
            LinkModel::Nenet(m) => m.to_checkpoint(seed),
            LinkModel::VanillaGcn(m) => m.to_checkpoint(seed),
            LinkModel::DynamicGcn(m) => m.to_checkpoint(seed),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<LinkModel> {
        let kind: ModelKind = ckpt.model_type.parse()?;
        match kind {
            ModelKind::Nenet => Ok(LinkModel::Nenet(NenetModel::from_checkpoint(ckpt, false)?)),
            ModelKind::NenetStaticEdge => {
                Ok(LinkModel::Nenet(NenetModel::from_checkpoint(ckpt, true)?))
            }
            ModelKind::VanillaGcn => {
                Ok(LinkModel::VanillaGcn(VanillaGcnModel::from_checkpoint(ckpt)?))
            }
            ModelKind::DynamicGcn => {
                Ok(LinkModel::DynamicGcn(DynamicGcnModel::from_checkpoint(ckpt)?))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64) -> Result<()> {
        self.to_checkpoint(seed).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LinkModel> {
        LinkModel::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::geometry::{Point, Quad};
    use crate::graph::{build_knn_graph, GraphConfig};
    use crate::scene::{BoxProvenance, DetectionSet};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A random detection set of `n` axis-aligned boxes in a 100x100 image.
    pub fn random_graph(n: usize, k: usize, seed: u64) -> CharGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boxes: Vec<Quad> = (0..n)
            .map(|_| {
                let x: f64 = rng.gen_range(2.0..80.0);
                let y: f64 = rng.gen_range(2.0..80.0);
                let w: f64 = rng.gen_range(3.0..15.0);
                let h: f64 = rng.gen_range(3.0..15.0);
                Quad::new([
                    Point::new(x, y),
                    Point::new(x + w, y),
                    Point::new(x + w, y + h),
                    Point::new(x, y + h),
                ])
            })
            .collect();
        let det = DetectionSet {
            scene_id: "rand".into(),
            provenance: vec![BoxProvenance::Unknown; boxes.len()],
            boxes,
        };
        build_knn_graph(&det, &GraphConfig { k }, 100, 100)
    }

    pub fn random_labels_weights(n_edges: usize, seed: u64) -> (Vec<u8>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = (0..n_edges).map(|_| u8::from(rng.gen_bool(0.3))).collect();
        let weights = vec![1.0; n_edges];
        (labels, weights)
    }

    /// Central finite-difference check of `scene_gradient` against
    /// `scene_loss` for every parameter.
    pub fn finite_difference_check(
        model: &mut LinkModel,
        g: &CharGraph,
        labels: &[u8],
        weights: &[f64],
        eps: f64,
        rel_tol: f64,
    ) {
        let (_, analytic) = model.scene_gradient(g, labels, weights);
        let base = model.param_vector();
        assert_eq!(analytic.len(), base.len());
        for i in 0..base.len() {
            let mut params = base.clone();
            params[i] = base[i] + eps;
            model.set_param_vector(&params);
            let up = model.scene_loss(g, labels, weights);
            params[i] = base[i] - eps;
            model.set_param_vector(&params);
            let down = model.scene_loss(g, labels, weights);
            let fd = (up - down) / (2.0 * eps);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            assert!(
                (analytic[i] - fd).abs() / denom < rel_tol,
                "param {i}: analytic {} vs finite difference {fd}",
                analytic[i]
            );
        }
        model.set_param_vector(&base);
    }

    /// Applies a node permutation to a graph, returning the relabeled graph
    /// and the edge order mapping (new edge index for each old edge).
    pub fn permute_graph(g: &CharGraph, perm: &[usize]) -> (CharGraph, Vec<usize>) {
        use crate::nn::Matrix;
        let n = g.n;
        assert_eq!(perm.len(), n);
        // perm[old] = new
        let mut node_feats = Matrix::zeros(n, g.node_feats.cols());
        for old in 0..n {
            node_feats
                .row_mut(perm[old])
                .copy_from_slice(g.node_feats.row(old));
        }
        // Keep per-source edge blocks ordered by new source index so the
        // permuted graph looks freshly built.
        let mut indexed: Vec<(usize, usize)> = (0..g.edges.len())
            .map(|e| (perm[g.edges[e].0], e))
            .collect();
        indexed.sort_by_key(|&(src, e)| (src, e));
        let mut edges = Vec::with_capacity(g.edges.len());
        let mut edge_feats = Matrix::zeros(g.edges.len(), g.edge_feats.cols());
        let mut edge_map = vec![0usize; g.edges.len()];
        for (new_e, &(_, old_e)) in indexed.iter().enumerate() {
            let (i, j) = g.edges[old_e];
            edges.push((perm[i], perm[j]));
            edge_feats
                .row_mut(new_e)
                .copy_from_slice(g.edge_feats.row(old_e));
            edge_map[old_e] = new_e;
        }
        let mut out_degree = vec![0usize; n];
        for &(i, _) in &edges {
            out_degree[i] += 1;
        }
        (
            CharGraph {
                n,
                node_feats,
                edges,
                edge_feats,
                out_degree,
                image_width: g.image_width,
                image_height: g.image_height,
            },
            edge_map,
        )
    }
}

//! Dynamic graph convolution baseline.
//!
//! Layer 1 runs on the spatial k-NN graph; every node sums an edge-function
//! MLP over its current neighbours, `x'_i = sum h(x_i, x_j)`, and after each
//! of the first three layers the neighbourhood graph is rebuilt by k-NN in
//! the new feature space. Edge outputs are not propagated between layers.
//! Links are finally scored on the ORIGINAL spatial candidate edges so the
//! evaluation universe matches the other models.

use super::{Checkpoint, EdgePrediction, ModelKind, WeightReader, WeightWriter};
use crate::error::{Error, Result};
use crate::graph::CharGraph;
use crate::nn::{cross_entropy, softmax2, softmax2_ce_grad, Matrix, MlpCache, MlpGrads, MlpParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicGcnConfig {
    /// Node feature width per layer, input first (default 4 layers:
    /// [16, 32, 32, 32, 32]).
    pub layer_dims: Vec<usize>,
    /// Hidden width of the edge-function MLPs and the pair classifier.
    pub hidden: usize,
    pub k: usize,
}

impl DynamicGcnConfig {
    pub fn standard(k: usize, hidden: usize) -> DynamicGcnConfig {
        DynamicGcnConfig {
            layer_dims: vec![crate::graph::NODE_FEATURE_DIM, 32, 32, 32, 32],
            hidden,
            k,
        }
    }

    pub fn layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.hidden == 0 || self.k == 0 {
            return Err(Error::Config("invalid dynamic GCN config".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DynamicGcnModel {
    cfg: DynamicGcnConfig,
    edge_fns: Vec<MlpParams>,
    pair: MlpParams,
}

/// Directed k-NN over rows of a feature matrix, ties broken by lower index.
fn feature_knn(x: &Matrix, k: usize) -> Vec<(usize, usize)> {
    let n = x.rows();
    let mut edges = Vec::with_capacity(n * k.min(n.saturating_sub(1)));
    for i in 0..n {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2 = x
                    .row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, j)
            })
            .collect();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(_, j) in candidates.iter().take(k) {
            edges.push((i, j));
        }
    }
    edges
}

struct DynActs {
    xs: Vec<Matrix>,
    edge_lists: Vec<Vec<(usize, usize)>>,
    caches: Vec<Vec<MlpCache>>,
}

impl DynamicGcnModel {
    pub fn new(cfg: DynamicGcnConfig, seed: u64) -> DynamicGcnModel {
        cfg.validate().expect("invalid dynamic GCN config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edge_fns = (0..cfg.layers())
            .map(|l| MlpParams::new(2 * cfg.layer_dims[l], cfg.hidden, cfg.layer_dims[l + 1], &mut rng))
            .collect();
        let d_emb = *cfg.layer_dims.last().unwrap();
        let pair = MlpParams::new(2 * d_emb, cfg.hidden, 2, &mut rng);
        DynamicGcnModel { cfg, edge_fns, pair }
    }

    pub fn config(&self) -> &DynamicGcnConfig {
        &self.cfg
    }

    fn check_graph(&self, g: &CharGraph) {
        assert_eq!(
            g.node_feats.cols(),
            self.cfg.layer_dims[0],
            "graph node feature dimension does not match the model"
        );
    }

    fn forward_states(&self, g: &CharGraph, with_caches: bool) -> DynActs {
        let mut acts = DynActs {
            xs: vec![g.node_feats.clone()],
            edge_lists: Vec::with_capacity(self.cfg.layers()),
            caches: Vec::with_capacity(if with_caches { self.cfg.layers() } else { 0 }),
        };
        let mut input = Vec::new();
        for (l, h) in self.edge_fns.iter().enumerate() {
            let edges = if l == 0 {
                g.edges.clone()
            } else {
                feature_knn(&acts.xs[l], self.cfg.k)
            };
            let mut sums = Matrix::zeros(g.n, self.cfg.layer_dims[l + 1]);
            let mut caches = Vec::with_capacity(if with_caches { edges.len() } else { 0 });
            for &(i, j) in &edges {
                input.clear();
                input.extend_from_slice(acts.xs[l].row(i));
                input.extend_from_slice(acts.xs[l].row(j));
                let msg = if with_caches {
                    let (msg, cache) = h.forward(&input);
                    caches.push(cache);
                    msg
                } else {
                    h.eval(&input)
                };
                for (acc, m) in sums.row_mut(i).iter_mut().zip(&msg) {
                    *acc += m;
                }
            }
            acts.xs.push(sums);
            acts.edge_lists.push(edges);
            if with_caches {
                acts.caches.push(caches);
            }
        }
        acts
    }

    /// Pair-classifier logits per original candidate edge, inference only.
    pub fn edge_logits(&self, g: &CharGraph) -> Matrix {
        self.check_graph(g);
        let acts = self.forward_states(g, false);
        let emb = acts.xs.last().unwrap();
        let d = emb.cols();
        let mut input = vec![0.0; 2 * d];
        let mut logits = Matrix::zeros(g.edges.len(), 2);
        for (e, &(i, j)) in g.edges.iter().enumerate() {
            input[..d].copy_from_slice(emb.row(i));
            input[d..].copy_from_slice(emb.row(j));
            logits.row_mut(e).copy_from_slice(&self.pair.eval(&input));
        }
        logits
    }

    pub fn predict(&self, g: &CharGraph) -> EdgePrediction {
        EdgePrediction::from_logits(&self.edge_logits(g))
    }

    pub fn scene_loss(&self, g: &CharGraph, labels: &[u8], weights: &[f64]) -> f64 {
        super::weighted_ce_from_logits(&self.edge_logits(g), labels, weights)
    }

    /// Loss and exact gradient. The rebuilt neighbour sets are treated as
    /// constants of the forward pass (the selection itself is not
    /// differentiable).
    pub fn scene_gradient(&self, g: &CharGraph, labels: &[u8], weights: &[f64]) -> (f64, Vec<f64>) {
        self.check_graph(g);
        assert_eq!(labels.len(), g.edges.len());
        assert_eq!(weights.len(), g.edges.len());
        let acts = self.forward_states(g, true);
        let emb = acts.xs.last().unwrap();
        let d_emb = emb.cols();

        let mut loss = 0.0;
        let mut pair_grads = self.pair.zeros_like();
        let mut d_x = Matrix::zeros(g.n, d_emb);
        let mut input = vec![0.0; 2 * d_emb];
        for (idx, &(i, j)) in g.edges.iter().enumerate() {
            input[..d_emb].copy_from_slice(emb.row(i));
            input[d_emb..].copy_from_slice(emb.row(j));
            let (logits, cache) = self.pair.forward(&input);
            let probs = softmax2([logits[0], logits[1]]);
            loss += weights[idx] * cross_entropy(probs, labels[idx] as usize);
            let dl = softmax2_ce_grad(probs, labels[idx] as usize);
            let dlogits = [weights[idx] * dl[0], weights[idx] * dl[1]];
            let dx = self.pair.backward_acc(&cache, &dlogits, &mut pair_grads);
            for (dv, v) in d_x.row_mut(i).iter_mut().zip(&dx[..d_emb]) {
                *dv += v;
            }
            for (dv, v) in d_x.row_mut(j).iter_mut().zip(&dx[d_emb..]) {
                *dv += v;
            }
        }

        let mut edge_grads: Vec<MlpGrads> =
            self.edge_fns.iter().map(|h| h.zeros_like()).collect();
        for l in (0..self.cfg.layers()).rev() {
            let dn = self.cfg.layer_dims[l];
            let mut d_x_prev = Matrix::zeros(g.n, dn);
            for (idx, &(i, j)) in acts.edge_lists[l].iter().enumerate() {
                let dy = d_x.row(i);
                let dinput =
                    self.edge_fns[l].backward_acc(&acts.caches[l][idx], dy, &mut edge_grads[l]);
                for (dv, v) in d_x_prev.row_mut(i).iter_mut().zip(&dinput[..dn]) {
                    *dv += v;
                }
                for (dv, v) in d_x_prev.row_mut(j).iter_mut().zip(&dinput[dn..]) {
                    *dv += v;
                }
            }
            d_x = d_x_prev;
        }

        let mut flat = Vec::with_capacity(self.n_params());
        for eg in &edge_grads {
            eg.write_grads(&mut flat);
        }
        pair_grads.write_grads(&mut flat);
        (loss, flat)
    }

    pub fn n_params(&self) -> usize {
        self.edge_fns.iter().map(|h| h.n_params()).sum::<usize>() + self.pair.n_params()
    }

    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for h in &self.edge_fns {
            h.write_params(&mut out);
        }
        self.pair.write_params(&mut out);
        out
    }

    pub fn set_param_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.n_params(), "parameter vector length mismatch");
        let mut pos = 0;
        for h in self.edge_fns.iter_mut() {
            h.read_params(v, &mut pos);
        }
        self.pair.read_params(v, &mut pos);
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut w = WeightWriter::new();
        for (l, h) in self.edge_fns.iter().enumerate() {
            w.mlp(&format!("layer{}.h", l + 1), h);
        }
        w.mlp("pair", &self.pair);
        Checkpoint {
            model_type: ModelKind::DynamicGcn.as_str().to_string(),
            config: serde_json::to_value(&self.cfg).expect("config serializes"),
            seed,
            weights: w.finish(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<DynamicGcnModel> {
        let cfg: DynamicGcnConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad dynamic GCN config: {e}")))?;
        cfg.validate()?;
        let mut reader = WeightReader::new(&ckpt.weights);
        let mut edge_fns = Vec::with_capacity(cfg.layers());
        for l in 0..cfg.layers() {
            edge_fns.push(reader.mlp(
                &format!("layer{}.h", l + 1),
                2 * cfg.layer_dims[l],
                cfg.hidden,
                cfg.layer_dims[l + 1],
            )?);
        }
        let d_emb = *cfg.layer_dims.last().unwrap();
        let pair = reader.mlp("pair", 2 * d_emb, cfg.hidden, 2)?;
        reader.finish()?;
        Ok(DynamicGcnModel { cfg, edge_fns, pair })
    }
}

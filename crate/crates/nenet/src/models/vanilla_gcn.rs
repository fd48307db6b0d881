//! Vanilla graph convolution baseline.
//!
//! Node features are propagated with the symmetric renormalized adjacency
//! `P = D^{-1/2} (I + A) D^{-1/2}` (A is the symmetrized candidate edge set,
//! D the row sums of I + A) through per-layer linear filters and relu. Since
//! this scheme has no edge features at all, links are scored by a pair
//! classifier applied to the concatenated endpoint embeddings of each
//! candidate directed edge.

use super::{Checkpoint, EdgePrediction, ModelKind, WeightReader, WeightWriter};
use crate::error::{Error, Result};
use crate::graph::CharGraph;
use crate::nn::{cross_entropy, softmax2, softmax2_ce_grad, xavier_init, Matrix, MlpCache, MlpParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VanillaGcnConfig {
    /// Node embedding width per layer, input first (default [16, 32, 32]).
    pub layer_dims: Vec<usize>,
    /// Hidden width of the pair classifier.
    pub hidden: usize,
    pub k: usize,
}

impl VanillaGcnConfig {
    pub fn standard(k: usize, hidden: usize) -> VanillaGcnConfig {
        VanillaGcnConfig {
            layer_dims: vec![crate::graph::NODE_FEATURE_DIM, 32, 32],
            hidden,
            k,
        }
    }

    pub fn layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.hidden == 0 || self.k == 0 {
            return Err(Error::Config("invalid vanilla GCN config".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VanillaGcnModel {
    cfg: VanillaGcnConfig,
    /// Per-layer filters, stored `d_out x d_in`.
    filters: Vec<Matrix>,
    pair: MlpParams,
}

impl VanillaGcnModel {
    pub fn new(cfg: VanillaGcnConfig, seed: u64) -> VanillaGcnModel {
        cfg.validate().expect("invalid vanilla GCN config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filters = (0..cfg.layers())
            .map(|l| xavier_init(cfg.layer_dims[l], cfg.layer_dims[l + 1], &mut rng))
            .collect();
        let d_emb = *cfg.layer_dims.last().unwrap();
        let pair = MlpParams::new(2 * d_emb, cfg.hidden, 2, &mut rng);
        VanillaGcnModel { cfg, filters, pair }
    }

    pub fn config(&self) -> &VanillaGcnConfig {
        &self.cfg
    }

    /// Symmetric renormalized propagation matrix of the graph. The identity
    /// term keeps isolated nodes propagating their own features (D = I on an
    /// edgeless graph).
    pub fn propagation_matrix(g: &CharGraph) -> Matrix {
        let n = g.n;
        let mut adj = vec![false; n * n];
        for &(i, j) in &g.edges {
            adj[i * n + j] = true;
            adj[j * n + i] = true;
        }
        let mut degree = vec![1.0f64; n]; // the I term
        for i in 0..n {
            for j in 0..n {
                if i != j && adj[i * n + j] {
                    degree[i] += 1.0;
                }
            }
        }
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let connected = i == j || adj[i * n + j];
                if connected {
                    p.set(i, j, 1.0 / (degree[i] * degree[j]).sqrt());
                }
            }
        }
        p
    }

    fn check_graph(&self, g: &CharGraph) {
        assert_eq!(
            g.node_feats.cols(),
            self.cfg.layer_dims[0],
            "graph node feature dimension does not match the model"
        );
    }

    /// Forward through the conv stack; returns per-layer pre-activations and
    /// embeddings for backprop.
    fn conv_forward(&self, g: &CharGraph, p: &Matrix) -> (Vec<Matrix>, Vec<Matrix>) {
        let mut xs = vec![g.node_feats.clone()];
        let mut zs = Vec::with_capacity(self.cfg.layers());
        for filter in &self.filters {
            let x = xs.last().unwrap();
            let d_out = filter.rows();
            // M = X H (per node), Z = P M, X' = relu(Z).
            let mut m = Matrix::zeros(g.n, d_out);
            for i in 0..g.n {
                m.row_mut(i).copy_from_slice(&filter.matvec(x.row(i)));
            }
            let mut z = Matrix::zeros(g.n, d_out);
            for i in 0..g.n {
                let zi = z.row_mut(i);
                for j in 0..g.n {
                    let w = p.get(i, j);
                    if w == 0.0 {
                        continue;
                    }
                    for (acc, v) in zi.iter_mut().zip(m.row(j)) {
                        *acc += w * v;
                    }
                }
            }
            let mut x_next = Matrix::zeros(g.n, d_out);
            for (xv, zv) in x_next.data_mut().iter_mut().zip(z.data()) {
                *xv = zv.max(0.0);
            }
            zs.push(z);
            xs.push(x_next);
        }
        (xs, zs)
    }

    /// Node embeddings after the conv stack (relu(P X H) per layer).
    pub fn embed(&self, g: &CharGraph) -> Matrix {
        let p = Self::propagation_matrix(g);
        let (xs, _) = self.conv_forward(g, &p);
        xs.into_iter().last().unwrap()
    }

    /// Pair-classifier logits per candidate directed edge, inference only.
    pub fn edge_logits(&self, g: &CharGraph) -> Matrix {
        self.check_graph(g);
        let emb = self.embed(g);
        let mut input = vec![0.0; 2 * emb.cols()];
        let mut logits = Matrix::zeros(g.edges.len(), 2);
        for (e, &(i, j)) in g.edges.iter().enumerate() {
            input[..emb.cols()].copy_from_slice(emb.row(i));
            input[emb.cols()..].copy_from_slice(emb.row(j));
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

    pub fn scene_gradient(&self, g: &CharGraph, labels: &[u8], weights: &[f64]) -> (f64, Vec<f64>) {
        self.check_graph(g);
        assert_eq!(labels.len(), g.edges.len());
        assert_eq!(weights.len(), g.edges.len());
        let p = Self::propagation_matrix(g);
        let (xs, zs) = self.conv_forward(g, &p);
        let emb = xs.last().unwrap();
        let d_emb = emb.cols();

        // Pair classifier forward + backward.
        let mut loss = 0.0;
        let mut pair_grads = self.pair.zeros_like();
        let mut d_emb_acc = Matrix::zeros(g.n, d_emb);
        let mut input = vec![0.0; 2 * d_emb];
        let mut caches: Vec<MlpCache> = Vec::with_capacity(g.edges.len());
        let mut dlogits: Vec<[f64; 2]> = Vec::with_capacity(g.edges.len());
        for (idx, &(i, j)) in g.edges.iter().enumerate() {
            input[..d_emb].copy_from_slice(emb.row(i));
            input[d_emb..].copy_from_slice(emb.row(j));
            let (logits, cache) = self.pair.forward(&input);
            let probs = softmax2([logits[0], logits[1]]);
            loss += weights[idx] * cross_entropy(probs, labels[idx] as usize);
            let dl = softmax2_ce_grad(probs, labels[idx] as usize);
            dlogits.push([weights[idx] * dl[0], weights[idx] * dl[1]]);
            caches.push(cache);
        }
        for (idx, &(i, j)) in g.edges.iter().enumerate() {
            let dx = self
                .pair
                .backward_acc(&caches[idx], &dlogits[idx], &mut pair_grads);
            for (d, v) in d_emb_acc.row_mut(i).iter_mut().zip(&dx[..d_emb]) {
                *d += v;
            }
            for (d, v) in d_emb_acc.row_mut(j).iter_mut().zip(&dx[d_emb..]) {
                *d += v;
            }
        }

        // Conv stack backward: dZ = dX o relu', dM = P dZ (P symmetric),
        // dH += dM_i (outer) X_i, dX_prev_i = H^T dM_i.
        let mut filter_grads: Vec<Matrix> = self
            .filters
            .iter()
            .map(|f| Matrix::zeros(f.rows(), f.cols()))
            .collect();
        let mut d_x = d_emb_acc;
        for l in (0..self.filters.len()).rev() {
            let d_out = self.filters[l].rows();
            let mut d_z = Matrix::zeros(g.n, d_out);
            for (dz, (dx, z)) in d_z
                .data_mut()
                .iter_mut()
                .zip(d_x.data().iter().zip(zs[l].data()))
            {
                *dz = if *z > 0.0 { *dx } else { 0.0 };
            }
            let mut d_m = Matrix::zeros(g.n, d_out);
            for i in 0..g.n {
                let dmi = d_m.row_mut(i);
                for j in 0..g.n {
                    let w = p.get(j, i);
                    if w == 0.0 {
                        continue;
                    }
                    for (acc, v) in dmi.iter_mut().zip(d_z.row(j)) {
                        *acc += w * v;
                    }
                }
            }
            let x_prev = &xs[l];
            let mut d_x_prev = Matrix::zeros(g.n, x_prev.cols());
            for i in 0..g.n {
                filter_grads[l].add_outer(d_m.row(i), x_prev.row(i));
                d_x_prev
                    .row_mut(i)
                    .copy_from_slice(&self.filters[l].t_matvec(d_m.row(i)));
            }
            d_x = d_x_prev;
        }

        let mut flat = Vec::with_capacity(self.n_params());
        for fg in &filter_grads {
            flat.extend_from_slice(fg.data());
        }
        pair_grads.write_grads(&mut flat);
        (loss, flat)
    }

    pub fn n_params(&self) -> usize {
        self.filters.iter().map(|f| f.data().len()).sum::<usize>() + self.pair.n_params()
    }

    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for f in &self.filters {
            out.extend_from_slice(f.data());
        }
        self.pair.write_params(&mut out);
        out
    }

    pub fn set_param_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.n_params(), "parameter vector length mismatch");
        let mut pos = 0;
        for f in self.filters.iter_mut() {
            let len = f.data().len();
            f.data_mut().copy_from_slice(&v[pos..pos + len]);
            pos += len;
        }
        self.pair.read_params(v, &mut pos);
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut w = WeightWriter::new();
        for (l, f) in self.filters.iter().enumerate() {
            w.matrix(&format!("conv{}.h", l + 1), f);
        }
        w.mlp("pair", &self.pair);
        Checkpoint {
            model_type: ModelKind::VanillaGcn.as_str().to_string(),
            config: serde_json::to_value(&self.cfg).expect("config serializes"),
            seed,
            weights: w.finish(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<VanillaGcnModel> {
        let cfg: VanillaGcnConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad vanilla GCN config: {e}")))?;
        cfg.validate()?;
        let mut reader = WeightReader::new(&ckpt.weights);
        let mut filters = Vec::with_capacity(cfg.layers());
        for l in 0..cfg.layers() {
            filters.push(reader.matrix(
                &format!("conv{}.h", l + 1),
                cfg.layer_dims[l + 1],
                cfg.layer_dims[l],
            )?);
        }
        let d_emb = *cfg.layer_dims.last().unwrap();
        let pair = reader.mlp("pair", 2 * d_emb, cfg.hidden, 2)?;
        reader.finish()?;
        Ok(VanillaGcnModel { cfg, filters, pair })
    }
}

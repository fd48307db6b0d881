//! Minimal dense numerics for training the link predictors: a row-major
//! matrix, two-layer MLPs with analytic gradients, a numerically stable
//! two-class softmax, cross-entropy, Adam, and Xavier initialization.
//!
//! Everything is 64-bit and deterministic given inputs (and a seed where one
//! applies), which keeps gradient checks tight and checkpoints reproducible.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape/value count mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[r] = acc;
        }
        y
    }

    /// y = A^T x
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "t_matvec dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (yc, a) in y.iter_mut().zip(row) {
                *yc += a * xr;
            }
        }
        y
    }

    /// self += a b^T (rank-1 accumulation).
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), self.rows);
        assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = self.row_mut(r);
            for (v, &bc) in row.iter_mut().zip(b) {
                *v += ar * bc;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Uniform Xavier/Glorot initialization: entries in +-sqrt(6 / (d_in + d_out)).
///
/// Returns a `d_out x d_in` matrix; biases are initialized to zero elsewhere.
pub fn xavier_init<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Matrix {
    assert!(d_in > 0 && d_out > 0);
    let bound = (6.0 / (d_in + d_out) as f64).sqrt();
    let data = (0..d_in * d_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Matrix::from_vec(d_out, d_in, data)
}

/// Parameters of a 2-layer feed-forward network y = W2 relu(W1 x + b1) + b2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Values saved by the forward pass that the backward pass needs.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    z1: Vec<f64>,
}

/// Parameter gradients of one MLP, shaped like its parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub dw1: Matrix,
    pub db1: Vec<f64>,
    pub dw2: Matrix,
    pub db2: Vec<f64>,
}

impl MlpParams {
    pub fn new<R: Rng>(d_in: usize, d_hidden: usize, d_out: usize, rng: &mut R) -> Self {
        MlpParams {
            w1: xavier_init(d_in, d_hidden, rng),
            b1: vec![0.0; d_hidden],
            w2: xavier_init(d_hidden, d_out, rng),
            b2: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w2.rows()
    }

    pub fn n_params(&self) -> usize {
        self.w1.data().len() + self.b1.len() + self.w2.data().len() + self.b2.len()
    }

    pub fn zeros_like(&self) -> MlpGrads {
        MlpGrads {
            dw1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            db1: vec![0.0; self.b1.len()],
            dw2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            db2: vec![0.0; self.b2.len()],
        }
    }

    /// Forward pass; the cache holds what `backward` needs.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        assert_eq!(x.len(), self.d_in(), "mlp_forward input dimension mismatch");
        let mut z1 = self.w1.matvec(x);
        for (z, b) in z1.iter_mut().zip(&self.b1) {
            *z += b;
        }
        let h: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let mut y = self.w2.matvec(&h);
        for (v, b) in y.iter_mut().zip(&self.b2) {
            *v += b;
        }
        (
            y,
            MlpCache {
                input: x.to_vec(),
                z1,
            },
        )
    }

    /// Output without a cache, for inference-only paths.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Backward pass accumulating parameter gradients into `acc` and
    /// returning the gradient w.r.t. the input.
    ///
    /// The relu subgradient at 0 is taken as 0.
    pub fn backward_acc(&self, cache: &MlpCache, dy: &[f64], acc: &mut MlpGrads) -> Vec<f64> {
        assert_eq!(dy.len(), self.d_out(), "mlp_backward dy dimension mismatch");
        let h: Vec<f64> = cache.z1.iter().map(|&v| v.max(0.0)).collect();
        acc.dw2.add_outer(dy, &h);
        for (d, g) in acc.db2.iter_mut().zip(dy) {
            *d += g;
        }
        let dh = self.w2.t_matvec(dy);
        let dz1: Vec<f64> = dh
            .iter()
            .zip(&cache.z1)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        acc.dw1.add_outer(&dz1, &cache.input);
        for (d, g) in acc.db1.iter_mut().zip(&dz1) {
            *d += g;
        }
        self.w1.t_matvec(&dz1)
    }

    /// Backward pass into a fresh gradient holder.
    pub fn backward(&self, cache: &MlpCache, dy: &[f64]) -> (Vec<f64>, MlpGrads) {
        let mut acc = self.zeros_like();
        let dx = self.backward_acc(cache, dy, &mut acc);
        (dx, acc)
    }

    /// Appends all parameters to `out` in a fixed order (w1, b1, w2, b2).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.w1.data());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.data());
        out.extend_from_slice(&self.b2);
    }

    /// Reads parameters back in the order written by `write_params`.
    pub fn read_params(&mut self, src: &[f64], pos: &mut usize) {
        for dst in [
            self.w1.data_mut(),
            self.b1.as_mut_slice(),
            self.w2.data_mut(),
            self.b2.as_mut_slice(),
        ] {
            dst.copy_from_slice(&src[*pos..*pos + dst.len()]);
            *pos += dst.len();
        }
    }
}

impl MlpGrads {
    /// Appends gradients in the same order `write_params` uses.
    pub fn write_grads(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.dw1.data());
        out.extend_from_slice(&self.db1);
        out.extend_from_slice(self.dw2.data());
        out.extend_from_slice(&self.db2);
    }
}

/// Two-class softmax with max-subtraction for stability.
///
/// Components are positive and sum to 1 within 1e-12 for any finite logits.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Cross-entropy -log(probs[label]) with a 1e-12 probability floor.
pub fn cross_entropy(probs: [f64; 2], label: usize) -> f64 {
    debug_assert!(label < 2);
    -probs[label].max(1e-12).ln()
}

/// Gradient of `cross_entropy(softmax2(logits), label)` w.r.t. the logits.
pub fn softmax2_ce_grad(probs: [f64; 2], label: usize) -> [f64; 2] {
    let mut g = probs;
    g[label] -= 1.0;
    g
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update with bias correction. `params` and `grads` must match
    /// the state's parameter count.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "adam_step parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "adam_step gradient count mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

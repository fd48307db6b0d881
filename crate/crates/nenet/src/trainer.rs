//! Batch training of the link predictors: online hard negative mining,
//! step-decay learning rate, ordered gradient reduction and checkpointing.
//!
//! Everything is deterministic for a fixed config: model initialization,
//! the per-epoch scene shuffle and the optimizer all derive from the config
//! seed, and per-scene gradients computed in parallel are summed in scene
//! order before each optimizer step.

use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, CharGraph, GraphConfig};
use crate::models::{LinkModel, ModelKind};
use crate::nn::{cross_entropy, AdamState};
use crate::scene::{load_detections, load_scenes, split_tail, DetectionSet, SceneAnnotation};
use crate::supervision::{label_edges, match_boxes, LinkLabels, DEFAULT_MATCH_IOU};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

/// Step-decay learning-rate schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay: f64,
    pub period: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base_lr: 1e-3,
            decay: 0.8,
            period: 10,
        }
    }
}

/// Learning rate at a given epoch: `base * decay^(epoch / period)`.
pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    schedule.base_lr * schedule.decay.powi((epoch / schedule.period) as i32)
}

/// Full training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    /// Scenes per optimizer step.
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Hard negatives kept per positive.
    pub ohnm_ratio: usize,
    pub seed: u64,
    pub k: usize,
    pub hidden: usize,
    pub scenes: PathBuf,
    pub detections: PathBuf,
    /// Explicit held-out data; when absent the tail tenth of the training
    /// files is held out instead.
    pub eval_scenes: Option<PathBuf>,
    pub eval_detections: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(model: ModelKind, scenes: PathBuf, detections: PathBuf) -> TrainConfig {
        TrainConfig {
            model,
            epochs: 20,
            batch_size: 12,
            schedule: LrSchedule::default(),
            ohnm_ratio: 3,
            seed: 0,
            k: 4,
            hidden: 32,
            scenes,
            detections,
            eval_scenes: None,
            eval_detections: None,
            checkpoint_out: None,
            report_out: None,
        }
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean cross-entropy over the edges OHNM selected this epoch.
    pub mean_selected_loss: f64,
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub edge_f1: f64,
    pub wall_clock_secs: f64,
}

/// Training report: one entry per epoch, held-out metrics included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_edge_f1(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.edge_f1)
    }

    /// Copy with wall-clock timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrainReport {
        let mut r = self.clone();
        for e in r.epochs.iter_mut() {
            e.wall_clock_secs = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Online hard negative mining: keeps every positive edge plus the
/// `ratio * positives` negatives with the highest loss. With no positives,
/// the `min(8, negatives)` hardest negatives are kept so texture-only scenes
/// still contribute negative supervision.
pub fn ohnm_select(losses: &[f64], labels: &LinkLabels, ratio: usize) -> Vec<f64> {
    assert_eq!(losses.len(), labels.labels.len(), "losses do not align with labels");
    let mut weights = vec![0.0; losses.len()];
    let mut negatives: Vec<usize> = Vec::new();
    let mut n_pos = 0usize;
    for (idx, &label) in labels.labels.iter().enumerate() {
        if label == 1 {
            weights[idx] = 1.0;
            n_pos += 1;
        } else {
            negatives.push(idx);
        }
    }
    negatives.sort_by(|&a, &b| losses[b].partial_cmp(&losses[a]).unwrap().then(a.cmp(&b)));
    let quota = if n_pos > 0 { ratio * n_pos } else { 8.min(negatives.len()) };
    for &idx in negatives.iter().take(quota) {
        weights[idx] = 1.0;
    }
    weights
}

/// A scene prepared for training: its graph and link labels.
pub struct PreparedScene {
    pub graph: CharGraph,
    pub labels: LinkLabels,
}

/// Builds graphs and labels for aligned scene/detection lists.
pub fn prepare_scenes(
    scenes: &[SceneAnnotation],
    detections: &[DetectionSet],
    k: usize,
) -> Result<Vec<PreparedScene>> {
    if scenes.len() != detections.len() {
        return Err(Error::Config(format!(
            "{} scenes but {} detection sets",
            scenes.len(),
            detections.len()
        )));
    }
    for (s, d) in scenes.iter().zip(detections) {
        if s.scene_id != d.scene_id {
            return Err(Error::SceneIdMismatch {
                scene: s.scene_id.clone(),
                detections: d.scene_id.clone(),
            });
        }
    }
    let cfg = GraphConfig { k };
    scenes
        .par_iter()
        .zip(detections.par_iter())
        .map(|(scene, det)| {
            let graph = build_knn_graph(det, &cfg, scene.image_width, scene.image_height);
            let mapping = match_boxes(det, scene, DEFAULT_MATCH_IOU)?;
            let labels = label_edges(&graph, &mapping, scene);
            Ok(PreparedScene { graph, labels })
        })
        .collect()
}

/// Per-edge cross-entropy of a prediction against its labels.
pub fn per_edge_losses(probs: &[f64], labels: &LinkLabels) -> Vec<f64> {
    probs
        .iter()
        .zip(&labels.labels)
        .map(|(&p, &y)| cross_entropy([1.0 - p, p], y as usize))
        .collect()
}

/// Held-out edge-level precision/recall/F at threshold 0.5.
pub fn evaluate_edge_metrics(model: &LinkModel, prepared: &[PreparedScene]) -> (f64, f64, f64) {
    let counts: Vec<(usize, usize, usize)> = prepared
        .par_iter()
        .map(|ps| {
            let pred = model.predict(&ps.graph);
            let mut tp = 0;
            let mut fp = 0;
            let mut fneg = 0;
            for (e, &label) in ps.labels.labels.iter().enumerate() {
                let positive = pred.is_positive(e, 0.5);
                match (positive, label == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    (false, false) => {}
                }
            }
            (tp, fp, fneg)
        })
        .collect();
    let (tp, fp, fneg) = counts
        .into_iter()
        .fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    precision_recall_f(tp, fp, fneg)
}

pub fn precision_recall_f(tp: usize, fp: usize, fneg: usize) -> (f64, f64, f64) {
    let p = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let r = if tp + fneg > 0 {
        tp as f64 / (tp + fneg) as f64
    } else {
        0.0
    };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Loads the configured data files and trains; see `train_prepared`.
pub fn train(cfg: &TrainConfig) -> Result<(LinkModel, TrainReport)> {
    let scenes = load_scenes(&cfg.scenes)?;
    let detections = load_detections(&cfg.detections)?;
    if scenes.is_empty() {
        return Err(Error::EmptyDataset(cfg.scenes.display().to_string()));
    }

    let (train_pairs, eval_pairs) = match (&cfg.eval_scenes, &cfg.eval_detections) {
        (Some(es), Some(ed)) => {
            let eval_scenes = load_scenes(es)?;
            let eval_dets = load_detections(ed)?;
            ((scenes, detections), (eval_scenes, eval_dets))
        }
        (None, None) => {
            let (train_s, eval_s) = split_tail(&scenes);
            let (train_d, eval_d) = split_tail(&detections);
            (
                (train_s.to_vec(), train_d.to_vec()),
                (eval_s.to_vec(), eval_d.to_vec()),
            )
        }
        _ => {
            return Err(Error::Config(
                "eval scenes and eval detections must be given together".into(),
            ))
        }
    };

    let train_set = prepare_scenes(&train_pairs.0, &train_pairs.1, cfg.k)?;
    let eval_set = prepare_scenes(&eval_pairs.0, &eval_pairs.1, cfg.k)?;
    train_prepared(cfg, &train_set, &eval_set)
}

/// Trains on prepared scenes. Per step: forward every scene of the batch,
/// select edges by OHNM, backprop on the selected edges, sum the per-scene
/// gradients in scene order and apply one Adam step.
pub fn train_prepared(
    cfg: &TrainConfig,
    train_set: &[PreparedScene],
    eval_set: &[PreparedScene],
) -> Result<(LinkModel, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("no training scenes".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }

    let mut model = LinkModel::new(cfg.model, cfg.k, cfg.hidden, cfg.seed);
    let mut params = model.param_vector();
    let mut adam = AdamState::new(params.len(), lr_at(&cfg.schedule, 0));
    let mut report = TrainReport::default();

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = lr_at(&cfg.schedule, epoch);
        adam.lr = lr;

        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_add(1));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut selected_sum = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (batch_loss, batch_selected, grads) = batch_gradient(&model, train_set, batch, cfg.ohnm_ratio);
            loss_sum += batch_loss;
            selected_sum += batch_selected;
            adam.step(&mut params, &grads);
            model.set_param_vector(&params);
        }

        let (precision, recall, f1) = evaluate_edge_metrics(&model, eval_set);
        let mean_loss = if selected_sum > 0 {
            loss_sum / selected_sum as f64
        } else {
            0.0
        };
        println!("epoch {epoch} lr {lr} loss {mean_loss:.6} edgeF {f1:.4}");
        report.epochs.push(EpochStats {
            epoch,
            lr,
            mean_selected_loss: mean_loss,
            edge_precision: precision,
            edge_recall: recall,
            edge_f1: f1,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
    }

    if let Some(path) = &cfg.checkpoint_out {
        model.save(path, cfg.seed)?;
    }
    if let Some(path) = &cfg.report_out {
        std::fs::write(path, report.to_json())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok((model, report))
}

/// Gradient of one batch: the sum of independent per-scene gradients, folded
/// in scene order. Returns (selected-edge loss, selected count, gradient).
fn batch_gradient(
    model: &LinkModel,
    train_set: &[PreparedScene],
    batch: &[usize],
    ohnm_ratio: usize,
) -> (f64, usize, Vec<f64>) {
    let per_scene: Vec<(f64, usize, Vec<f64>)> = batch
        .par_iter()
        .map(|&scene_idx| {
            let ps = &train_set[scene_idx];
            let pred = model.predict(&ps.graph);
            let losses = per_edge_losses(&pred.probs, &ps.labels);
            let weights = ohnm_select(&losses, &ps.labels, ohnm_ratio);
            debug_assert!(ohnm_invariants_hold(&weights, &ps.labels, ohnm_ratio));
            let selected = weights.iter().filter(|&&w| w > 0.0).count();
            let (loss, grads) = model.scene_gradient(&ps.graph, &ps.labels.labels, &weights);
            (loss, selected, grads)
        })
        .collect();

    let n_params = model.n_params();
    let mut grads = vec![0.0; n_params];
    let mut loss_sum = 0.0;
    let mut selected_sum = 0usize;
    for (loss, selected, g) in per_scene {
        loss_sum += loss;
        selected_sum += selected;
        for (acc, v) in grads.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    (loss_sum, selected_sum, grads)
}

/// OHNM safety: no positive is ever dropped, and with positives present the
/// selected negatives never exceed ratio * positives.
fn ohnm_invariants_hold(weights: &[f64], labels: &LinkLabels, ratio: usize) -> bool {
    let mut pos = 0usize;
    let mut neg_selected = 0usize;
    for (w, &l) in weights.iter().zip(&labels.labels) {
        if l == 1 {
            if *w != 1.0 {
                return false;
            }
            pos += 1;
        } else if *w > 0.0 {
            neg_selected += 1;
        }
    }
    pos == 0 || neg_selected <= ratio * pos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scenes, simulate_all, DetectorNoise, GeneratorConfig};

    fn labels_of(bits: &[u8]) -> LinkLabels {
        LinkLabels {
            labels: bits.to_vec(),
            coverage: 1.0,
        }
    }

    #[test]
    fn lr_schedule_values() {
        let s = LrSchedule::default();
        assert_eq!(lr_at(&s, 0), 1e-3);
        assert!((lr_at(&s, 10) - 8e-4).abs() < 1e-18);
        let mut last = f64::INFINITY;
        for e in 0..50 {
            let lr = lr_at(&s, e);
            assert!(lr <= last);
            last = lr;
        }
    }

    #[test]
    fn ohnm_keeps_positives_and_hardest_negatives() {
        // 2 positives, 10 negatives, ratio 3: the 6 highest-loss negatives.
        let labels = labels_of(&[1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let losses: Vec<f64> = vec![
            0.1, 0.1, // positives
            0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.6, 0.4, 0.5, 0.05,
        ];
        let w = ohnm_select(&losses, &labels, 3);
        assert_eq!(w[0], 1.0);
        assert_eq!(w[1], 1.0);
        let selected_negs: Vec<usize> = (2..12).filter(|&i| w[i] == 1.0).collect();
        assert_eq!(selected_negs, vec![2, 4, 6, 8, 9, 10]);
    }

    #[test]
    fn ohnm_takes_all_when_quota_exceeds_supply() {
        let labels = labels_of(&[1, 1, 1, 1, 1, 0, 0, 0, 0]);
        let losses = vec![0.0; 9];
        let w = ohnm_select(&losses, &labels, 3);
        assert!(w.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn ohnm_zero_positive_fallback() {
        let labels = labels_of(&[0; 20]);
        let losses: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let w = ohnm_select(&losses, &labels, 3);
        let selected: Vec<usize> = (0..20).filter(|&i| w[i] == 1.0).collect();
        assert_eq!(selected, vec![12, 13, 14, 15, 16, 17, 18, 19]);
    }

    fn tiny_dataset(seed: u64, n: usize) -> (Vec<PreparedScene>, Vec<PreparedScene>) {
        let cfg = GeneratorConfig {
            scene_count: n,
            seed,
            ..Default::default()
        };
        let scenes = generate_scenes(&cfg).unwrap();
        let noise = DetectorNoise {
            jitter_sigma: 0.0,
            drop_prob: 0.0,
            spurious_rate: 0.0,
            seed,
        };
        let dets = simulate_all(&scenes, &noise);
        let prepared = prepare_scenes(&scenes, &dets, 4).unwrap();
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for (i, ps) in prepared.into_iter().enumerate() {
            if i % 5 == 4 {
                eval.push(ps);
            } else {
                train.push(ps);
            }
        }
        (train, eval)
    }

    fn tiny_config(model: ModelKind, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            seed,
            hidden: 16,
            ..TrainConfig::new(model, PathBuf::new(), PathBuf::new())
        }
    }

    #[test]
    fn one_epoch_decreases_training_loss() {
        let (train_set, eval_set) = tiny_dataset(3, 20);
        let cfg = tiny_config(ModelKind::Nenet, 1, 7);
        let initial = LinkModel::new(cfg.model, cfg.k, cfg.hidden, cfg.seed);
        let before = mean_full_loss(&initial, &train_set);
        let (trained, _) = train_prepared(&cfg, &train_set, &eval_set).unwrap();
        let after = mean_full_loss(&trained, &train_set);
        assert!(after < before, "loss did not descend: {before} -> {after}");
    }

    fn mean_full_loss(model: &LinkModel, set: &[PreparedScene]) -> f64 {
        let mut total = 0.0;
        let mut edges = 0usize;
        for ps in set {
            let w = vec![1.0; ps.graph.edge_count()];
            total += model.scene_loss(&ps.graph, &ps.labels.labels, &w);
            edges += ps.graph.edge_count();
        }
        total / edges as f64
    }

    #[test]
    fn training_is_deterministic() {
        let (train_set, eval_set) = tiny_dataset(5, 15);
        let cfg = tiny_config(ModelKind::Nenet, 2, 11);
        let (m1, r1) = train_prepared(&cfg, &train_set, &eval_set).unwrap();
        let (m2, r2) = train_prepared(&cfg, &train_set, &eval_set).unwrap();
        assert_eq!(m1.param_vector(), m2.param_vector());
        assert_eq!(r1.without_timing(), r2.without_timing());
    }

    #[test]
    fn batch_gradient_equals_ordered_scene_sum() {
        let (train_set, _) = tiny_dataset(9, 8);
        let model = LinkModel::new(ModelKind::Nenet, 4, 16, 3);
        let batch: Vec<usize> = (0..train_set.len()).collect();
        let (_, _, batch_grads) = batch_gradient(&model, &train_set, &batch, 3);
        let mut manual = vec![0.0; model.n_params()];
        for &idx in &batch {
            let ps = &train_set[idx];
            let pred = model.predict(&ps.graph);
            let losses = per_edge_losses(&pred.probs, &ps.labels);
            let weights = ohnm_select(&losses, &ps.labels, 3);
            let (_, g) = model.scene_gradient(&ps.graph, &ps.labels.labels, &weights);
            for (acc, v) in manual.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        for (a, b) in batch_grads.iter().zip(&manual) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn convergence_on_clean_data() {
        // The zero-noise toy set is geometrically separable; training to
        // convergence pushes held-out edge F above 0.99.
        let (train_set, eval_set) = tiny_dataset(13, 100);
        let mut cfg = tiny_config(ModelKind::Nenet, 80, 2);
        cfg.hidden = 32;
        cfg.schedule.base_lr = 3e-3;
        cfg.schedule.period = 25;
        let (_, report) = train_prepared(&cfg, &train_set, &eval_set).unwrap();
        assert!(
            report.final_edge_f1() > 0.99,
            "held-out edge F stuck at {}",
            report.final_edge_f1()
        );
    }

    #[test]
    fn checkpoint_reload_reproduces_metrics() {
        let (train_set, eval_set) = tiny_dataset(21, 12);
        let cfg = tiny_config(ModelKind::NenetStaticEdge, 2, 5);
        let (model, report) = train_prepared(&cfg, &train_set, &eval_set).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        model.save(&path, cfg.seed).unwrap();
        let reloaded = LinkModel::load(&path).unwrap();
        let (p, r, f) = evaluate_edge_metrics(&reloaded, &eval_set);
        let last = report.epochs.last().unwrap();
        assert_eq!(p, last.edge_precision);
        assert_eq!(r, last.edge_recall);
        assert_eq!(f, last.edge_f1);
    }
}

//! Word assembly and evaluation: connected components of the predicted
//! positive links, convex hulls, minimum-area word rectangles, and the
//! edge-level / word-level scoring protocol.

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, min_area_rect, OrientedRect, Point};
use crate::graph::{build_knn_graph, GraphConfig};
use crate::models::EdgePrediction;
use crate::scene::{DetectionSet, SceneAnnotation};
use crate::supervision::{label_edges, match_boxes};
use crate::trainer::precision_recall_f;
use serde::{Deserialize, Serialize};

/// Default probability threshold for calling an edge positive.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.5;
/// Default rectangle IoU for matching predicted words to ground truth.
pub const DEFAULT_WORD_IOU: f64 = 0.5;

/// One predicted word: its member detections, convex hull and oriented box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordPrediction {
    pub members: Vec<usize>,
    pub hull: Vec<Point>,
    pub rect: OrientedRect,
}

/// Union-find over node indices.
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Connected components of the undirected graph induced by
/// `positive_edges` over `n` nodes; isolated nodes become singletons.
///
/// Components are returned in ascending order of their minimum member, each
/// with ascending members.
pub fn connected_components(n: usize, positive_edges: &[(usize, usize)]) -> Result<Vec<Vec<usize>>> {
    let mut uf = UnionFind::new(n);
    for &(i, j) in positive_edges {
        if i >= n || j >= n {
            return Err(Error::Config(format!(
                "edge ({i}, {j}) out of range for {n} nodes"
            )));
        }
        uf.union(i, j);
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        let root = uf.find(v);
        buckets[root].push(v);
    }
    // Nodes are visited in order, so members are already ascending; the
    // buckets themselves are keyed by root and need ordering by minimum.
    let mut components: Vec<Vec<usize>> = buckets.into_iter().filter(|b| !b.is_empty()).collect();
    components.sort_by_key(|c| c[0]);
    Ok(components)
}

/// Groups detections into words: edges at or above `threshold` are positive
/// (taken as undirected), components become hulls and minimum-area boxes.
pub fn assemble_words(
    det: &DetectionSet,
    pred: &EdgePrediction,
    edges: &[(usize, usize)],
    threshold: f64,
) -> Vec<WordPrediction> {
    assert_eq!(pred.len(), edges.len(), "prediction does not align with edges");
    let positive: Vec<(usize, usize)> = edges
        .iter()
        .enumerate()
        .filter(|&(e, _)| pred.is_positive(e, threshold))
        .map(|(_, &pair)| pair)
        .collect();
    let components =
        connected_components(det.boxes.len(), &positive).expect("edges index detections");
    components
        .into_iter()
        .map(|members| {
            let corners: Vec<Point> = members
                .iter()
                .flat_map(|&m| det.boxes[m].corners().iter().copied())
                .collect();
            let hull = convex_hull(&corners);
            let rect = min_area_rect(&corners);
            WordPrediction {
                members,
                hull,
                rect,
            }
        })
        .collect()
}

/// Evaluation settings; defaults mirror the training protocol.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub edge_threshold: f64,
    /// IoU threshold for matching detections to ground-truth characters
    /// when deriving edge labels.
    pub match_iou: f64,
    /// Rectangle IoU for counting a predicted word as correct.
    pub word_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 4,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            match_iou: crate::supervision::DEFAULT_MATCH_IOU,
            word_iou: DEFAULT_WORD_IOU,
        }
    }
}

/// Per-scene evaluation breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub scene_id: String,
    pub edge_tp: usize,
    pub edge_fp: usize,
    pub edge_fn: usize,
    pub word_tp: usize,
    pub word_fp: usize,
    pub word_fn: usize,
    pub label_coverage: f64,
}

/// Aggregate evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub edge_f1: f64,
    pub word_precision: f64,
    pub word_recall: f64,
    pub word_f1: f64,
    pub mean_label_coverage: f64,
    pub scenes: Vec<SceneEval>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Ground-truth word rectangle: the minimum-area box over all the word's
/// character corners.
pub fn ground_truth_word_rect(word: &crate::scene::WordAnnotation) -> OrientedRect {
    let corners: Vec<Point> = word
        .chars
        .iter()
        .flat_map(|q| q.corners().iter().copied())
        .collect();
    min_area_rect(&corners)
}

/// Scores predictions for a batch of scenes.
///
/// Edge level: directed candidate edges against the derived link labels.
/// Word level: greedy one-to-one matching of predicted rectangles to
/// ground-truth word rectangles in descending polygon IoU, counted as
/// correct at IoU >= `cfg.word_iou`. Edge predictions must align with the
/// k-NN graph built over each detection set with `cfg.k`.
pub fn evaluate(
    scenes: &[SceneAnnotation],
    detections: &[DetectionSet],
    predictions: &[EdgePrediction],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if scenes.len() != detections.len() || scenes.len() != predictions.len() {
        return Err(Error::Config(format!(
            "evaluate needs aligned inputs: {} scenes, {} detections, {} predictions",
            scenes.len(),
            detections.len(),
            predictions.len()
        )));
    }
    let graph_cfg = GraphConfig { k: cfg.k };
    let mut per_scene = Vec::with_capacity(scenes.len());
    for ((scene, det), pred) in scenes.iter().zip(detections).zip(predictions) {
        if scene.scene_id != det.scene_id {
            return Err(Error::SceneIdMismatch {
                scene: scene.scene_id.clone(),
                detections: det.scene_id.clone(),
            });
        }
        let graph = build_knn_graph(det, &graph_cfg, scene.image_width, scene.image_height);
        if graph.edge_count() != pred.len() {
            return Err(Error::DimensionMismatch(format!(
                "scene {}: {} candidate edges but {} predictions",
                scene.scene_id,
                graph.edge_count(),
                pred.len()
            )));
        }
        let mapping = match_boxes(det, scene, cfg.match_iou)?;
        let labels = label_edges(&graph, &mapping, scene);

        let mut edge_tp = 0;
        let mut edge_fp = 0;
        let mut edge_fn = 0;
        for (e, &label) in labels.labels.iter().enumerate() {
            match (pred.is_positive(e, cfg.edge_threshold), label == 1) {
                (true, true) => edge_tp += 1,
                (true, false) => edge_fp += 1,
                (false, true) => edge_fn += 1,
                (false, false) => {}
            }
        }

        let words = assemble_words(det, pred, &graph.edges, cfg.edge_threshold);
        let (word_tp, word_fp, word_fn) = match_words(scene, &words, cfg.word_iou);

        per_scene.push(SceneEval {
            scene_id: scene.scene_id.clone(),
            edge_tp,
            edge_fp,
            edge_fn,
            word_tp,
            word_fp,
            word_fn,
            label_coverage: labels.coverage,
        });
    }

    let sum = |f: fn(&SceneEval) -> usize| per_scene.iter().map(f).sum::<usize>();
    let (edge_precision, edge_recall, edge_f1) = precision_recall_f(
        sum(|s| s.edge_tp),
        sum(|s| s.edge_fp),
        sum(|s| s.edge_fn),
    );
    let (word_precision, word_recall, word_f1) = precision_recall_f(
        sum(|s| s.word_tp),
        sum(|s| s.word_fp),
        sum(|s| s.word_fn),
    );
    let mean_label_coverage = if per_scene.is_empty() {
        1.0
    } else {
        per_scene.iter().map(|s| s.label_coverage).sum::<f64>() / per_scene.len() as f64
    };
    Ok(EvalReport {
        edge_precision,
        edge_recall,
        edge_f1,
        word_precision,
        word_recall,
        word_f1,
        mean_label_coverage,
        scenes: per_scene,
    })
}

/// Greedy one-to-one rectangle matching by descending IoU.
fn match_words(
    scene: &SceneAnnotation,
    predictions: &[WordPrediction],
    iou_threshold: f64,
) -> (usize, usize, usize) {
    let gt_rects: Vec<[Point; 4]> = scene
        .words
        .iter()
        .map(|w| ground_truth_word_rect(w).corners())
        .collect();
    let pred_rects: Vec<[Point; 4]> = predictions.iter().map(|p| p.rect.corners()).collect();

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, pr) in pred_rects.iter().enumerate() {
        for (gi, gr) in gt_rects.iter().enumerate() {
            let iou = crate::geometry::iou(pr, gr);
            if iou >= iou_threshold {
                pairs.push((iou, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred_rects.len()];
    let mut gt_used = vec![false; gt_rects.len()];
    let mut tp = 0;
    for (_, pi, gi) in pairs {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            tp += 1;
        }
    }
    (tp, pred_rects.len() - tp, gt_rects.len() - tp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quad;
    use crate::scene::{BoxProvenance, WordAnnotation};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn components_basic() {
        let parts = connected_components(4, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(parts, vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn components_no_edges_are_singletons() {
        let parts = connected_components(3, &[]).unwrap();
        assert_eq!(parts, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn components_out_of_range_is_error() {
        assert!(connected_components(2, &[(0, 5)]).is_err());
    }

    /// Transitive-closure reachability oracle.
    fn reachability_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut reach = vec![vec![false; n]; n];
        for v in 0..n {
            reach[v][v] = true;
        }
        for &(i, j) in edges {
            reach[i][j] = true;
            reach[j][i] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for v in 0..n {
            if seen[v] {
                continue;
            }
            let members: Vec<usize> = (v..n).filter(|&u| reach[v][u]).collect();
            for &m in &members {
                seen[m] = true;
            }
            out.push(members);
        }
        out
    }

    #[test]
    fn components_match_reachability_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12);
            let m = rng.gen_range(0..=2 * n);
            let edges: Vec<(usize, usize)> = (0..m)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            let got = connected_components(n, &edges).unwrap();
            let want = reachability_components(n, &edges);
            assert_eq!(got, want);
        }
    }

    fn square_at(x: f64, y: f64, side: f64) -> Quad {
        Quad::new([
            Point::new(x, y),
            Point::new(x + side, y),
            Point::new(x + side, y + side),
            Point::new(x, y + side),
        ])
    }

    fn det_of(boxes: Vec<Quad>) -> DetectionSet {
        DetectionSet {
            scene_id: "t".into(),
            provenance: vec![BoxProvenance::Unknown; boxes.len()],
            boxes,
        }
    }

    #[test]
    fn no_positive_edges_yield_one_word_per_detection() {
        let det = det_of(vec![square_at(0.0, 0.0, 4.0), square_at(20.0, 0.0, 4.0)]);
        let edges = vec![(0, 1), (1, 0)];
        let pred = EdgePrediction {
            probs: vec![0.0, 0.0],
        };
        let words = assemble_words(&det, &pred, &edges, 0.5);
        assert_eq!(words.len(), 2);
        assert!(words.iter().all(|w| w.members.len() == 1));
    }

    #[test]
    fn chain_merges_into_one_word_containing_all_corners() {
        let boxes = vec![
            square_at(0.0, 0.0, 8.0),
            square_at(10.0, 0.0, 8.0),
            square_at(20.0, 0.0, 8.0),
        ];
        let det = det_of(boxes.clone());
        let edges = vec![(0, 1), (1, 2)];
        let pred = EdgePrediction {
            probs: vec![0.9, 0.8],
        };
        let words = assemble_words(&det, &pred, &edges, 0.5);
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].members, vec![0, 1, 2]);
        for b in &boxes {
            for c in b.corners() {
                assert!(words[0].rect.contains(*c, 1e-9));
            }
        }
    }

    #[test]
    fn separate_chains_stay_separate() {
        let det = det_of(vec![
            square_at(0.0, 0.0, 5.0),
            square_at(7.0, 0.0, 5.0),
            square_at(40.0, 40.0, 5.0),
            square_at(47.0, 40.0, 5.0),
        ]);
        let edges = vec![(0, 1), (2, 3)];
        let pred = EdgePrediction {
            probs: vec![1.0, 1.0],
        };
        let words = assemble_words(&det, &pred, &edges, 0.5);
        assert_eq!(words.len(), 2);
        assert_eq!(words[0].members, vec![0, 1]);
        assert_eq!(words[1].members, vec![2, 3]);
    }

    #[test]
    fn assembly_partitions_detections() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(1..10);
            let boxes: Vec<Quad> = (0..n)
                .map(|i| square_at(10.0 * i as f64, rng.gen_range(0.0..40.0), 6.0))
                .collect();
            let det = det_of(boxes);
            let edges: Vec<(usize, usize)> = if n > 1 {
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            } else {
                Vec::new()
            };
            let pred = EdgePrediction {
                probs: edges.iter().map(|_| rng.gen_range(0.0..1.0)).collect(),
            };
            let words = assemble_words(&det, &pred, &edges, 0.5);
            let mut seen = vec![0usize; n];
            for w in &words {
                for &m in &w.members {
                    seen[m] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1), "not a partition");
        }
    }

    #[test]
    fn raising_threshold_refines_components() {
        let det = det_of(vec![
            square_at(0.0, 0.0, 5.0),
            square_at(7.0, 0.0, 5.0),
            square_at(14.0, 0.0, 5.0),
        ]);
        let edges = vec![(0, 1), (1, 2)];
        let pred = EdgePrediction {
            probs: vec![0.6, 0.9],
        };
        let loose = assemble_words(&det, &pred, &edges, 0.5);
        let strict = assemble_words(&det, &pred, &edges, 0.8);
        assert_eq!(loose.len(), 1);
        assert_eq!(strict.len(), 2);
        // Every strict component is contained in some loose component.
        for s in &strict {
            assert!(loose
                .iter()
                .any(|l| s.members.iter().all(|m| l.members.contains(m))));
        }
    }

    fn toy_scene() -> (SceneAnnotation, DetectionSet) {
        let word1 = vec![
            square_at(10.0, 10.0, 8.0),
            square_at(20.0, 10.0, 8.0),
            square_at(30.0, 10.0, 8.0),
        ];
        let word2 = vec![square_at(60.0, 60.0, 8.0), square_at(70.0, 60.0, 8.0)];
        let scene = SceneAnnotation {
            scene_id: "toy".into(),
            image_width: 100,
            image_height: 100,
            words: vec![
                WordAnnotation {
                    text: "abc".into(),
                    chars: word1.clone(),
                },
                WordAnnotation {
                    text: "de".into(),
                    chars: word2.clone(),
                },
            ],
        };
        let det = DetectionSet {
            scene_id: "toy".into(),
            provenance: vec![BoxProvenance::Unknown; 5],
            boxes: [word1, word2].concat(),
        };
        (scene, det)
    }

    #[test]
    fn perfect_predictions_score_one() {
        let (scene, det) = toy_scene();
        let graph = build_knn_graph(&det, &GraphConfig { k: 4 }, 100, 100);
        let mapping = match_boxes(&det, &scene, 0.25).unwrap();
        let labels = label_edges(&graph, &mapping, &scene);
        let pred = EdgePrediction {
            probs: labels.labels.iter().map(|&l| l as f64).collect(),
        };
        let report = evaluate(
            &[scene],
            &[det],
            &[pred],
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(report.edge_f1, 1.0);
        assert_eq!(report.word_f1, 1.0);
        assert_eq!(report.mean_label_coverage, 1.0);
    }

    #[test]
    fn half_recall_edge_f() {
        // Half of the positive edges predicted, no false positives:
        // P = 1, R = 0.5, F = 2/3.
        let (scene, det) = toy_scene();
        let graph = build_knn_graph(&det, &GraphConfig { k: 4 }, 100, 100);
        let mapping = match_boxes(&det, &scene, 0.25).unwrap();
        let labels = label_edges(&graph, &mapping, &scene);
        let mut kept = 0;
        let total: usize = labels.labels.iter().map(|&l| l as usize).sum();
        let probs: Vec<f64> = labels
            .labels
            .iter()
            .map(|&l| {
                if l == 1 && kept < total / 2 {
                    kept += 1;
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        // total positives = 3 (two in "abc", one in "de"); keep 1 of them..
        let report = evaluate(
            &[scene],
            &[det],
            &[EdgePrediction { probs }],
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(report.edge_precision, 1.0);
        assert!((report.edge_recall - kept as f64 / total as f64).abs() < 1e-12);
        let want_f = 2.0 * report.edge_precision * report.edge_recall
            / (report.edge_precision + report.edge_recall);
        assert!((report.edge_f1 - want_f).abs() < 1e-12);
    }

    #[test]
    fn word_matching_is_one_to_one() {
        // A merged prediction covering two words can match at most one.
        let (scene, det) = toy_scene();
        let graph = build_knn_graph(&det, &GraphConfig { k: 4 }, 100, 100);
        let pred = EdgePrediction {
            probs: vec![1.0; graph.edge_count()],
        };
        let report = evaluate(
            &[scene],
            &[det],
            &[pred],
            &EvalConfig::default(),
        )
        .unwrap();
        // Everything merges into one blob; it overlaps both ground-truth
        // words but its rect IoU with either is low, so nothing matches.
        let tp: usize = report.scenes.iter().map(|s| s.word_tp).sum();
        assert_eq!(tp, 0);
    }

    #[test]
    fn evaluate_is_scene_order_invariant() {
        let (scene_a, det_a) = toy_scene();
        let mut scene_b = scene_a.clone();
        scene_b.scene_id = "toy2".into();
        let mut det_b = det_a.clone();
        det_b.scene_id = "toy2".into();
        let graph = build_knn_graph(&det_a, &GraphConfig { k: 4 }, 100, 100);
        let mapping = match_boxes(&det_a, &scene_a, 0.25).unwrap();
        let labels = label_edges(&graph, &mapping, &scene_a);
        let pred = EdgePrediction {
            probs: labels.labels.iter().map(|&l| l as f64).collect(),
        };
        let fwd = evaluate(
            &[scene_a.clone(), scene_b.clone()],
            &[det_a.clone(), det_b.clone()],
            &[pred.clone(), pred.clone()],
            &EvalConfig::default(),
        )
        .unwrap();
        let rev = evaluate(
            &[scene_b, scene_a],
            &[det_b, det_a],
            &[pred.clone(), pred],
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(fwd.edge_f1, rev.edge_f1);
        assert_eq!(fwd.word_f1, rev.word_f1);
    }
}

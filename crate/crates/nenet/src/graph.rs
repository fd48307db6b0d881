//! Directed k-nearest-neighbour character graphs with geometric node and
//! edge feature vectors.
//!
//! Every detection becomes a node pointing at its `k` nearest neighbours by
//! centroid distance. The graph is directed: `(i, j)` and `(j, i)` are
//! distinct edges with independently computed features. All features are
//! normalized into [0, 1] by the image dimensions.

use crate::geometry::{min_corner_distance, quad_centroid, Quad};
use crate::nn::Matrix;
use crate::scene::DetectionSet;
use serde::{Deserialize, Serialize};

/// Node feature dimensionality.
pub const NODE_FEATURE_DIM: usize = 16;
/// Edge feature dimensionality.
pub const EDGE_FEATURE_DIM: usize = 6;

/// Graph construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Out-degree of every node (capped at n-1).
    pub k: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { k: 4 }
    }
}

/// A directed k-NN graph over detected character boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct CharGraph {
    pub n: usize,
    /// `n x NODE_FEATURE_DIM`.
    pub node_feats: Matrix,
    /// Directed edges, grouped by source, nearest neighbour first.
    pub edges: Vec<(usize, usize)>,
    /// `|edges| x EDGE_FEATURE_DIM`, row-aligned with `edges`.
    pub edge_feats: Matrix,
    pub out_degree: Vec<usize>,
    pub image_width: u32,
    pub image_height: u32,
}

impl CharGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Builds the directed k-NN graph over `det` and initializes all features.
///
/// Neighbour ties at equal distance are broken by the lower box index, so
/// construction is deterministic and order-invariant up to relabeling.
pub fn build_knn_graph(det: &DetectionSet, cfg: &GraphConfig, image_w: u32, image_h: u32) -> CharGraph {
    assert!(cfg.k >= 1, "k must be at least 1");
    assert!(image_w > 0 && image_h > 0, "image dimensions must be positive");
    let n = det.boxes.len();
    let centroids: Vec<_> = det.boxes.iter().map(quad_centroid).collect();

    let mut node_feats = Matrix::zeros(n, NODE_FEATURE_DIM);
    for (i, quad) in det.boxes.iter().enumerate() {
        node_feats
            .row_mut(i)
            .copy_from_slice(&init_node_features(quad, image_w, image_h));
    }

    let mut edges = Vec::with_capacity(n * cfg.k.min(n.saturating_sub(1)));
    for i in 0..n {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = centroids[i].x - centroids[j].x;
                let dy = centroids[i].y - centroids[j].y;
                (dx * dx + dy * dy, j)
            })
            .collect();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(_, j) in candidates.iter().take(cfg.k) {
            edges.push((i, j));
        }
    }

    let mut edge_feats = Matrix::zeros(edges.len(), EDGE_FEATURE_DIM);
    for (e, &(i, j)) in edges.iter().enumerate() {
        edge_feats
            .row_mut(e)
            .copy_from_slice(&init_edge_features(&det.boxes[i], &det.boxes[j], image_w, image_h));
    }

    let mut out_degree = vec![0usize; n];
    for &(i, _) in &edges {
        out_degree[i] += 1;
    }

    CharGraph {
        n,
        node_feats,
        edges,
        edge_feats,
        out_degree,
        image_width: image_w,
        image_height: image_h,
    }
}

/// 16 geometric node features of one box, all in [0, 1]:
/// the 4 corner coordinates (8), the centroid (2), the width and height of
/// the axis-aligned envelope (2), its area (1), the aspect ratio clamped to
/// [0, 10] and divided by 10 (1), and sin/cos of the dominant (longest) edge
/// orientation remapped by (v+1)/2 (2). Lengths are normalized by the image
/// width/height, the area by the image area.
pub fn init_node_features(q: &Quad, image_w: u32, image_h: u32) -> [f64; NODE_FEATURE_DIM] {
    assert!(image_w > 0 && image_h > 0, "image dimensions must be positive");
    let w = image_w as f64;
    let h = image_h as f64;
    let c = q.corners();
    let mut f = [0.0f64; NODE_FEATURE_DIM];
    for (i, p) in c.iter().enumerate() {
        f[2 * i] = p.x / w;
        f[2 * i + 1] = p.y / h;
    }
    let centroid = quad_centroid(q);
    f[8] = centroid.x / w;
    f[9] = centroid.y / h;
    let bb = q.aabb();
    f[10] = bb.width() / w;
    f[11] = bb.height() / h;
    f[12] = bb.area() / (w * h);
    let aspect = if bb.height() > 0.0 {
        bb.width() / bb.height()
    } else {
        10.0
    };
    f[13] = aspect.clamp(0.0, 10.0) / 10.0;
    let angle = dominant_edge_angle(q);
    f[14] = (angle.sin() + 1.0) / 2.0;
    f[15] = (angle.cos() + 1.0) / 2.0;
    f
}

/// Orientation of the longest quad edge, folded into [-pi/2, pi/2).
fn dominant_edge_angle(q: &Quad) -> f64 {
    let c = q.corners();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..4 {
        let d = c[(i + 1) % 4] - c[i];
        let len2 = d.x * d.x + d.y * d.y;
        if len2 > best.0 {
            best = (len2, d.y.atan2(d.x));
        }
    }
    let mut a = (best.1 + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI)
        - std::f64::consts::FRAC_PI_2;
    if a >= std::f64::consts::FRAC_PI_2 {
        a = -std::f64::consts::FRAC_PI_2;
    }
    a
}

/// 6 edge features of the directed pair (src -> dst), all in [0, 1]:
/// centroid displacement dx, dy remapped by (v+1)/2 (2), minimum corner
/// distance and centroid distance normalized by the image diagonal (2), and
/// two side flags: 1 when the dst centroid lies strictly right of the src,
/// and 1 when it lies strictly above (smaller y), ties giving 0.
pub fn init_edge_features(
    src: &Quad,
    dst: &Quad,
    image_w: u32,
    image_h: u32,
) -> [f64; EDGE_FEATURE_DIM] {
    assert!(image_w > 0 && image_h > 0, "image dimensions must be positive");
    let w = image_w as f64;
    let h = image_h as f64;
    let diag = (w * w + h * h).sqrt();
    let cs = quad_centroid(src);
    let cd = quad_centroid(dst);
    let dx = (cd.x - cs.x) / w;
    let dy = (cd.y - cs.y) / h;
    [
        (dx + 1.0) / 2.0,
        (dy + 1.0) / 2.0,
        min_corner_distance(src, dst) / diag,
        cs.distance(&cd) / diag,
        if cd.x > cs.x { 1.0 } else { 0.0 },
        if cd.y < cs.y { 1.0 } else { 0.0 },
    ]
}

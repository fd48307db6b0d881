//! Supervision for link prediction: matching detections to ground-truth
//! characters by IoU and deriving directed link labels.
//!
//! A directed edge is positive exactly when it runs from a mapped character
//! to the next mapped character of the same word in reading order. Because
//! "next mapped" skips characters the detector missed, this realizes both
//! the adjacent-next rule and the skip rule in one definition. Edges touching
//! unmapped detections are all negative.

use crate::error::{Error, Result};
use crate::geometry::quad_iou;
use crate::graph::CharGraph;
use crate::scene::{DetectionSet, SceneAnnotation};
use std::collections::HashSet;

/// Default IoU threshold for mapping detections to ground truth.
pub const DEFAULT_MATCH_IOU: f64 = 0.25;

/// Per-detection assignment to a ground-truth character, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxMapping {
    /// `assignments[d] = Some((word_index, char_index))` or None (unmapped).
    pub assignments: Vec<Option<(usize, usize)>>,
}

/// Directed link labels aligned with a graph's edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkLabels {
    /// One 0/1 label per directed edge.
    pub labels: Vec<u8>,
    /// Fraction of intended positive successor pairs that exist as graph
    /// edges (1.0 when there are no intended pairs).
    pub coverage: f64,
}

impl LinkLabels {
    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Greedy one-to-one assignment of detections to ground-truth characters in
/// descending IoU order; pairs at or above `threshold` are kept.
///
/// The inclusive comparison means a pair sitting exactly on the threshold is
/// matched. A ground-truth character is claimed by at most one detection.
pub fn match_boxes(
    det: &DetectionSet,
    scene: &SceneAnnotation,
    threshold: f64,
) -> Result<BoxMapping> {
    if det.scene_id != scene.scene_id {
        return Err(Error::SceneIdMismatch {
            scene: scene.scene_id.clone(),
            detections: det.scene_id.clone(),
        });
    }
    let mut pairs: Vec<(f64, usize, (usize, usize))> = Vec::new();
    for (d, dbox) in det.boxes.iter().enumerate() {
        for (w, c, quad) in scene.iter_chars() {
            let iou = quad_iou(dbox, quad);
            if iou >= threshold {
                pairs.push((iou, d, (w, c)));
            }
        }
    }
    // Descending IoU; deterministic tie-break on indices.
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut assignments: Vec<Option<(usize, usize)>> = vec![None; det.boxes.len()];
    let mut claimed: HashSet<(usize, usize)> = HashSet::new();
    for (_, d, gt) in pairs {
        if assignments[d].is_none() && !claimed.contains(&gt) {
            assignments[d] = Some(gt);
            claimed.insert(gt);
        }
    }
    Ok(BoxMapping { assignments })
}

/// Labels every directed edge of `graph` using a box mapping.
///
/// Within each word the mapped characters are ordered by reading position;
/// each consecutive pair is an intended positive link from the earlier
/// detection to the later one. Intended links missing from the k-NN edge set
/// are not force-inserted; the coverage field reports the loss.
pub fn label_edges(graph: &CharGraph, mapping: &BoxMapping, scene: &SceneAnnotation) -> LinkLabels {
    assert_eq!(
        graph.n,
        mapping.assignments.len(),
        "mapping does not align with graph nodes"
    );
    // Invert the mapping per word: char index -> detection index.
    let mut per_word: Vec<Vec<(usize, usize)>> = vec![Vec::new(); scene.words.len()];
    for (d, assign) in mapping.assignments.iter().enumerate() {
        if let Some((w, c)) = assign {
            per_word[*w].push((*c, d));
        }
    }

    let mut intended: Vec<(usize, usize)> = Vec::new();
    for mapped in per_word.iter_mut() {
        mapped.sort_unstable();
        for pair in mapped.windows(2) {
            intended.push((pair[0].1, pair[1].1));
        }
    }

    let edge_set: HashSet<(usize, usize)> = graph.edges.iter().copied().collect();
    let present = intended.iter().filter(|p| edge_set.contains(p)).count();
    let coverage = if intended.is_empty() {
        1.0
    } else {
        present as f64 / intended.len() as f64
    };

    let positive: HashSet<(usize, usize)> = intended.into_iter().collect();
    let labels = graph
        .edges
        .iter()
        .map(|e| u8::from(positive.contains(e)))
        .collect();

    LinkLabels { labels, coverage }
}

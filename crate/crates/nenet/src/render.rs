//! SVG overlays for visual inspection: character boxes, predicted links,
//! word hulls and word boxes against the ground truth.
//!
//! Color legend: blue character boxes, green word rectangles when they match
//! a ground-truth word, red otherwise, dashed gray ground-truth rectangles.

use crate::assembly::{assemble_words, ground_truth_word_rect, WordPrediction};
use crate::geometry::{iou, quad_centroid, Point};
use crate::models::EdgePrediction;
use crate::scene::{DetectionSet, SceneAnnotation};
use std::fmt::Write;

/// Renders one scene as an SVG document.
///
/// Without a prediction only the ground truth and the detected boxes are
/// drawn; with one, the predicted positive links, word hulls and word
/// rectangles are overlaid.
pub fn render_scene_svg(
    scene: &SceneAnnotation,
    det: &DetectionSet,
    prediction: Option<(&EdgePrediction, &[(usize, usize)])>,
    edge_threshold: f64,
    word_iou: f64,
) -> String {
    let mut svg = String::new();
    let w = scene.image_width;
    let h = scene.image_height;
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(svg, "  <title>{}</title>", escape(&scene.scene_id)).unwrap();
    writeln!(
        svg,
        r#"  <rect class="background" x="0" y="0" width="{w}" height="{h}" fill="white"/>"#
    )
    .unwrap();

    // Ground-truth word rectangles, dashed.
    for word in &scene.words {
        let rect = ground_truth_word_rect(word);
        writeln!(
            svg,
            r##"  <polygon class="gt-word" points="{}" fill="none" stroke="#9e9e9e" stroke-width="1" stroke-dasharray="4 3"/>"##,
            points_attr(&rect.corners())
        )
        .unwrap();
    }

    // Detected character boxes, blue.
    for quad in &det.boxes {
        writeln!(
            svg,
            r##"  <polygon class="char-box" points="{}" fill="none" stroke="#1565c0" stroke-width="1"/>"##,
            points_attr(quad.corners())
        )
        .unwrap();
    }

    if let Some((pred, edges)) = prediction {
        // Predicted positive links between box centroids.
        for (e, &(i, j)) in edges.iter().enumerate() {
            if !pred.is_positive(e, edge_threshold) {
                continue;
            }
            let a = quad_centroid(&det.boxes[i]);
            let b = quad_centroid(&det.boxes[j]);
            writeln!(
                svg,
                r##"  <line class="link" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#ef6c00" stroke-width="1.2"/>"##,
                a.x, a.y, b.x, b.y
            )
            .unwrap();
        }

        let words = assemble_words(det, pred, edges, edge_threshold);
        let matched = match_flags(scene, &words, word_iou);
        for (word, ok) in words.iter().zip(&matched) {
            if word.hull.len() >= 3 {
                writeln!(
                    svg,
                    r##"  <polygon class="word-hull" points="{}" fill="#42a5f5" fill-opacity="0.12" stroke="none"/>"##,
                    points_attr(&word.hull)
                )
                .unwrap();
            }
            let color = if *ok { "#2e7d32" } else { "#c62828" };
            writeln!(
                svg,
                r#"  <polygon class="word-rect" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                points_attr(&word.rect.corners())
            )
            .unwrap();
        }
    }

    svg.push_str("</svg>\n");
    svg
}

/// Greedy one-to-one matching flags per predicted word, mirroring the
/// evaluation protocol.
fn match_flags(scene: &SceneAnnotation, words: &[WordPrediction], threshold: f64) -> Vec<bool> {
    let gt: Vec<[Point; 4]> = scene
        .words
        .iter()
        .map(|w| ground_truth_word_rect(w).corners())
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, word) in words.iter().enumerate() {
        let pr = word.rect.corners();
        for (gi, gr) in gt.iter().enumerate() {
            let v = iou(&pr, gr);
            if v >= threshold {
                pairs.push((v, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut flags = vec![false; words.len()];
    let mut gt_used = vec![false; gt.len()];
    for (_, pi, gi) in pairs {
        if !flags[pi] && !gt_used[gi] {
            flags[pi] = true;
            gt_used[gi] = true;
        }
    }
    flags
}

fn points_attr(points: &[Point]) -> String {
    points
        .iter()
        .map(|p| format!("{:.2},{:.2}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

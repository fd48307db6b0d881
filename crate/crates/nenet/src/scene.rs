//! Desk-scale scene generation, detector simulation and file ingestion.
//!
//! The generator lays out words of rotated character rectangles along
//! straight or curved baselines, calibrated to the character box statistics
//! of large synthetic scene-text corpora (mean height 23 px, mean width
//! 17.4 px). The detector simulator stands in for a trained character
//! detector: it jitters, drops and fabricates boxes under a seeded noise
//! model so the supervision mapping rules are exercised.
//!
//! Files are line-delimited JSON, one scene (or detection set) per line.

use crate::error::{Error, Result};
use crate::geometry::{AABox, Point, Quad};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Mean character width / mean character height of the reference corpus.
const CHAR_WIDTH_RATIO: f64 = 17.4 / 23.0;

/// One annotated word: text plus one quad per character in reading order.
#[derive(Debug, Clone, PartialEq)]
pub struct WordAnnotation {
    pub text: String,
    pub chars: Vec<Quad>,
}

/// Ground truth for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub words: Vec<WordAnnotation>,
}

impl SceneAnnotation {
    pub fn char_count(&self) -> usize {
        self.words.iter().map(|w| w.chars.len()).sum()
    }

    /// Iterates `(word_index, char_index, quad)` in reading order.
    pub fn iter_chars(&self) -> impl Iterator<Item = (usize, usize, &Quad)> {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(w, word)| word.chars.iter().enumerate().map(move |(c, q)| (w, c, q)))
    }
}

/// Where a simulated detection came from. Diagnostics only; models never
/// read this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxProvenance {
    GroundTruth { word: usize, ch: usize },
    Spurious,
    /// Loaded from a file, origin unknown.
    Unknown,
}

/// Detected (or simulated) character boxes for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub scene_id: String,
    pub boxes: Vec<Quad>,
    pub provenance: Vec<BoxProvenance>,
}

/// Configuration of the procedural scene generator. The seed fixes the full
/// output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub scene_count: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub words_per_scene: (usize, usize),
    pub chars_per_word: (usize, usize),
    pub char_height_mean: f64,
    pub char_height_std: f64,
    pub gap_range: (f64, f64),
    pub rotation_range: (f64, f64),
    pub curved_prob: f64,
    pub curvature_range: (f64, f64),
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            scene_count: 100,
            image_width: 512,
            image_height: 512,
            words_per_scene: (3, 7),
            chars_per_word: (2, 8),
            char_height_mean: 23.0,
            char_height_std: 4.0,
            gap_range: (1.0, 5.0),
            rotation_range: (-0.45, 0.45),
            curved_prob: 0.3,
            curvature_range: (0.002, 0.008),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.image_width > 0
            && self.image_height > 0
            && self.words_per_scene.0 <= self.words_per_scene.1
            && self.chars_per_word.0 >= 1
            && self.chars_per_word.0 <= self.chars_per_word.1
            && self.char_height_mean > 0.0
            && self.char_height_std >= 0.0
            && self.gap_range.0 <= self.gap_range.1
            && self.rotation_range.0 <= self.rotation_range.1
            && (0.0..=1.0).contains(&self.curved_prob)
            && self.curvature_range.0 <= self.curvature_range.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("generator config has an empty range".into()))
        }
    }
}

/// Noise model of the simulated character detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorNoise {
    /// Per-corner, per-coordinate Gaussian jitter in pixels.
    pub jitter_sigma: f64,
    /// Probability of losing a ground-truth character.
    pub drop_prob: f64,
    /// Probability, per ground-truth character, of adding one spurious box.
    pub spurious_rate: f64,
    pub seed: u64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        DetectorNoise {
            jitter_sigma: 1.0,
            drop_prob: 0.02,
            spurious_rate: 0.02,
            seed: 0,
        }
    }
}

/// Generates `cfg.scene_count` scenes, deterministically in `cfg.seed`.
///
/// Each scene draws from its own stream seeded with `seed ^ scene_index`, so
/// scenes are independent of generation order. Words that cannot be placed
/// inside the image without overlapping already placed words after 20
/// attempts are skipped; a scene is never emitted in an invalid state.
pub fn generate_scenes(cfg: &GeneratorConfig) -> Result<Vec<SceneAnnotation>> {
    cfg.validate()?;
    let mut scenes = Vec::with_capacity(cfg.scene_count);
    for index in 0..cfg.scene_count {
        scenes.push(generate_scene(cfg, index));
    }
    Ok(scenes)
}

fn generate_scene(cfg: &GeneratorConfig, index: usize) -> SceneAnnotation {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    let w = cfg.image_width as f64;
    let h = cfg.image_height as f64;
    let n_words = rng.gen_range(cfg.words_per_scene.0..=cfg.words_per_scene.1);
    let mut placed: Vec<AABox> = Vec::new();
    let mut words = Vec::new();

    for _ in 0..n_words {
        let len = rng.gen_range(cfg.chars_per_word.0..=cfg.chars_per_word.1);
        let height = sample_char_height(cfg, &mut rng);
        let widths: Vec<f64> = (0..len)
            .map(|_| height * CHAR_WIDTH_RATIO * rng.gen_range(0.85..1.15))
            .collect();
        let gaps: Vec<f64> = (0..len)
            .map(|_| rng.gen_range(cfg.gap_range.0..=cfg.gap_range.1))
            .collect();
        let theta = rng.gen_range(cfg.rotation_range.0..=cfg.rotation_range.1);
        let curvature = if cfg.curved_prob > 0.0 && rng.gen_bool(cfg.curved_prob) {
            let k = rng.gen_range(cfg.curvature_range.0..=cfg.curvature_range.1);
            if rng.gen_bool(0.5) {
                k
            } else {
                -k
            }
        } else {
            0.0
        };

        let mut accepted: Option<Vec<Quad>> = None;
        for _attempt in 0..20 {
            let start = Point::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h));
            let quads = layout_word(start, theta, curvature, &widths, &gaps, height);
            if quads_in_bounds(&quads, w, h) && !quads_overlap(&quads, &placed) {
                accepted = Some(quads);
                break;
            }
        }
        let Some(quads) = accepted else { continue };
        placed.extend(quads.iter().map(|q| q.aabb().inflated(2.0)));
        let text: String = (0..len)
            .map(|_| (b'a' + rng.gen_range(0..26u8)) as char)
            .collect();
        words.push(WordAnnotation { text, chars: quads });
    }

    SceneAnnotation {
        scene_id: format!("scene-{:08x}-{:05}", cfg.seed, index),
        image_width: cfg.image_width,
        image_height: cfg.image_height,
        words,
    }
}

fn sample_char_height(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> f64 {
    let raw = if cfg.char_height_std > 0.0 {
        Normal::new(cfg.char_height_mean, cfg.char_height_std)
            .expect("validated std")
            .sample(rng)
    } else {
        cfg.char_height_mean
    };
    let cap = (cfg.image_height as f64 / 4.0).max(8.0);
    raw.clamp(6.0, cap)
}

/// Lays out character rectangles along a baseline starting at `start` with
/// initial heading `theta`. A nonzero `curvature` (radians per pixel of arc
/// length) bends the baseline.
fn layout_word(
    start: Point,
    theta: f64,
    curvature: f64,
    widths: &[f64],
    gaps: &[f64],
    height: f64,
) -> Vec<Quad> {
    let mut pos = start;
    let mut heading = theta;
    let mut quads = Vec::with_capacity(widths.len());
    for (i, &cw) in widths.iter().enumerate() {
        let dir = Point::new(heading.cos(), heading.sin());
        let center = Point::new(pos.x + dir.x * cw / 2.0, pos.y + dir.y * cw / 2.0);
        quads.push(char_quad(center, heading, cw, height));
        let advance = cw + gaps[i];
        pos = Point::new(pos.x + dir.x * advance, pos.y + dir.y * advance);
        heading += curvature * advance;
    }
    quads
}

/// Rectangle of size `w x h` centered at `c`, rotated by `angle`, corners in
/// top-left, top-right, bottom-right, bottom-left order.
fn char_quad(c: Point, angle: f64, w: f64, h: f64) -> Quad {
    let (s, co) = angle.sin_cos();
    let local = [
        (-w / 2.0, -h / 2.0),
        (w / 2.0, -h / 2.0),
        (w / 2.0, h / 2.0),
        (-w / 2.0, h / 2.0),
    ];
    Quad::new(local.map(|(lx, ly)| Point::new(c.x + lx * co - ly * s, c.y + lx * s + ly * co)))
}

fn quads_in_bounds(quads: &[Quad], w: f64, h: f64) -> bool {
    quads.iter().all(|q| {
        q.corners()
            .iter()
            .all(|p| p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h)
    })
}

fn quads_overlap(quads: &[Quad], placed: &[AABox]) -> bool {
    quads
        .iter()
        .any(|q| placed.iter().any(|b| b.intersects(&q.aabb())))
}

/// Simulates a character detector on one scene: per-corner Gaussian jitter,
/// character drops and spurious boxes, all from `noise.seed`.
///
/// With zero jitter, zero drop probability and zero spurious rate the output
/// boxes equal the ground truth exactly.
pub fn simulate_detections(scene: &SceneAnnotation, noise: &DetectorNoise) -> DetectionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let w = scene.image_width as f64;
    let h = scene.image_height as f64;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut boxes = Vec::new();
    let mut provenance = Vec::new();
    for (wi, ci, quad) in scene.iter_chars() {
        let dropped = noise.drop_prob > 0.0 && rng.gen_bool(noise.drop_prob);
        // Consume the jitter draws either way so dropping a character does
        // not shift the noise of every later one.
        let mut corners = *quad.corners();
        for p in corners.iter_mut() {
            let dx = noise.jitter_sigma * normal.sample(&mut rng);
            let dy = noise.jitter_sigma * normal.sample(&mut rng);
            p.x = (p.x + dx).clamp(0.0, w);
            p.y = (p.y + dy).clamp(0.0, h);
        }
        if dropped {
            continue;
        }
        boxes.push(Quad::new(corners));
        provenance.push(BoxProvenance::GroundTruth { word: wi, ch: ci });
    }

    if noise.spurious_rate > 0.0 {
        let (mean_w, mean_h) = scene_char_size(scene);
        let n_chars = scene.char_count();
        for _ in 0..n_chars {
            if !rng.gen_bool(noise.spurious_rate) {
                continue;
            }
            let bw = (mean_w * rng.gen_range(0.7..1.3)).max(2.0);
            let bh = (mean_h * rng.gen_range(0.7..1.3)).max(2.0);
            let angle = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
            let margin = (bw + bh) / 2.0;
            let cx = rng.gen_range(margin..(w - margin).max(margin + 1e-9));
            let cy = rng.gen_range(margin..(h - margin).max(margin + 1e-9));
            let mut corners = *char_quad(Point::new(cx, cy), angle, bw, bh).corners();
            for p in corners.iter_mut() {
                p.x = p.x.clamp(0.0, w);
                p.y = p.y.clamp(0.0, h);
            }
            boxes.push(Quad::new(corners));
            provenance.push(BoxProvenance::Spurious);
        }
    }

    DetectionSet {
        scene_id: scene.scene_id.clone(),
        boxes,
        provenance,
    }
}

fn scene_char_size(scene: &SceneAnnotation) -> (f64, f64) {
    let mut sum_w = 0.0;
    let mut sum_h = 0.0;
    let mut n = 0usize;
    for (_, _, q) in scene.iter_chars() {
        let c = q.corners();
        sum_w += (c[0].distance(&c[1]) + c[3].distance(&c[2])) / 2.0;
        sum_h += (c[0].distance(&c[3]) + c[1].distance(&c[2])) / 2.0;
        n += 1;
    }
    if n == 0 {
        (17.4, 23.0)
    } else {
        (sum_w / n as f64, sum_h / n as f64)
    }
}

/// Simulates detections for every scene, deriving a per-scene seed as
/// `noise.seed ^ scene_index`.
pub fn simulate_all(scenes: &[SceneAnnotation], noise: &DetectorNoise) -> Vec<DetectionSet> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let per_scene = DetectorNoise {
                seed: noise.seed ^ i as u64,
                ..noise.clone()
            };
            simulate_detections(s, &per_scene)
        })
        .collect()
}

/// Splits a dataset 9:1 by index; the tail tenth is the held-out part.
pub fn split_tail<T>(items: &[T]) -> (&[T], &[T]) {
    let n_test = items.len() / 10;
    items.split_at(items.len() - n_test)
}

// ---------------------------------------------------------------------------
// Line-delimited JSON serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    scene_id: String,
    image_width: u32,
    image_height: u32,
    words: Vec<WordRecord>,
}

#[derive(Serialize, Deserialize)]
struct WordRecord {
    text: String,
    chars: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    scene_id: String,
    boxes: Vec<Vec<[f64; 2]>>,
}

fn quad_to_corners(q: &Quad) -> Vec<[f64; 2]> {
    q.corners().iter().map(|p| [p.x, p.y]).collect()
}

fn corners_to_quad(file: &str, line: usize, field: &str, corners: &[[f64; 2]]) -> Result<Quad> {
    if corners.len() != 4 {
        return Err(Error::data(
            file,
            line,
            format!("{field}: quad must have 4 corners"),
        ));
    }
    let pts: Vec<Point> = corners.iter().map(|c| Point::new(c[0], c[1])).collect();
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(Error::data(
            file,
            line,
            format!("{field}: corner coordinates must be finite"),
        ));
    }
    Ok(Quad::new([pts[0], pts[1], pts[2], pts[3]]))
}

pub fn save_scenes(path: impl AsRef<Path>, scenes: &[SceneAnnotation]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    for scene in scenes {
        let record = SceneRecord {
            scene_id: scene.scene_id.clone(),
            image_width: scene.image_width,
            image_height: scene.image_height,
            words: scene
                .words
                .iter()
                .map(|w| WordRecord {
                    text: w.text.clone(),
                    chars: w.chars.iter().map(quad_to_corners).collect(),
                })
                .collect(),
        };
        let json = serde_json::to_string(&record).expect("scene record serializes");
        writeln!(out, "{json}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    out.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_scenes(path: impl AsRef<Path>) -> Result<Vec<SceneAnnotation>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(name.clone(), e))?;
    let reader = BufReader::new(file);
    let mut scenes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(name.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(&name, line_no, e.to_string()))?;
        let mut words = Vec::with_capacity(record.words.len());
        for (wi, wr) in record.words.iter().enumerate() {
            if wr.chars.is_empty() {
                return Err(Error::data(
                    &name,
                    line_no,
                    format!("words[{wi}].chars: word must have at least 1 character"),
                ));
            }
            if wr.text.chars().count() != wr.chars.len() {
                return Err(Error::data(
                    &name,
                    line_no,
                    format!(
                        "words[{wi}].text: text length {} does not match {} character boxes",
                        wr.text.chars().count(),
                        wr.chars.len()
                    ),
                ));
            }
            let mut chars = Vec::with_capacity(wr.chars.len());
            for (ci, corners) in wr.chars.iter().enumerate() {
                let field = format!("words[{wi}].chars[{ci}]");
                let quad = corners_to_quad(&name, line_no, &field, corners)?;
                let in_bounds = quad.corners().iter().all(|p| {
                    p.x >= 0.0
                        && p.x <= record.image_width as f64
                        && p.y >= 0.0
                        && p.y <= record.image_height as f64
                });
                if !in_bounds {
                    return Err(Error::data(
                        &name,
                        line_no,
                        format!("{field}: corner outside image bounds"),
                    ));
                }
                chars.push(quad);
            }
            words.push(WordAnnotation {
                text: wr.text.clone(),
                chars,
            });
        }
        scenes.push(SceneAnnotation {
            scene_id: record.scene_id,
            image_width: record.image_width,
            image_height: record.image_height,
            words,
        });
    }
    Ok(scenes)
}

pub fn save_detections(path: impl AsRef<Path>, dets: &[DetectionSet]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    for det in dets {
        let record = DetectionRecord {
            scene_id: det.scene_id.clone(),
            boxes: det.boxes.iter().map(quad_to_corners).collect(),
        };
        let json = serde_json::to_string(&record).expect("detection record serializes");
        writeln!(out, "{json}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    out.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionSet>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(name.clone(), e))?;
    let reader = BufReader::new(file);
    let mut dets = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(name.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(&name, line_no, e.to_string()))?;
        let mut boxes = Vec::with_capacity(record.boxes.len());
        for (bi, corners) in record.boxes.iter().enumerate() {
            let field = format!("boxes[{bi}]");
            boxes.push(corners_to_quad(&name, line_no, &field, corners)?);
        }
        let provenance = vec![BoxProvenance::Unknown; boxes.len()];
        dets.push(DetectionSet {
            scene_id: record.scene_id,
            boxes,
            provenance,
        });
    }
    Ok(dets)
}

//! Ground-truth character heatmaps: an isotropic Gaussian window warped onto
//! each character box by a perspective transform, blended by pixelwise max,
//! plus the summed-square loss used to train a heatmap regressor.
//!
//! The character detector itself is out of scope here (detections come from
//! `scene::simulate_detections`), so this module is a verified utility layer.

use crate::error::{Error, Result};
use crate::geometry::{Point, Quad};
use crate::scene::SceneAnnotation;
use std::io::Write;

/// Default Gaussian window size in pixels.
pub const DEFAULT_WINDOW_SIZE: usize = 50;
/// Default Gaussian standard deviation in pixels.
pub const DEFAULT_SIGMA: f64 = 18.5;

/// A 3x3 projective transform, normalized so `h[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.h
    }

    pub fn det(&self) -> f64 {
        let h = &self.h;
        h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
            - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
            + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0])
    }

    /// Applies the transform; returns None for points mapped to infinity.
    pub fn apply(&self, p: Point) -> Option<Point> {
        let h = &self.h;
        let w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
        if w.abs() < 1e-12 {
            return None;
        }
        Some(Point::new(
            (h[0][0] * p.x + h[0][1] * p.y + h[0][2]) / w,
            (h[1][0] * p.x + h[1][1] * p.y + h[1][2]) / w,
        ))
    }

    /// Inverse transform via the adjugate, renormalized to `h[2][2] = 1`
    /// when possible.
    pub fn inverse(&self) -> Result<Homography> {
        let d = self.det();
        if d.abs() < 1e-12 {
            return Err(Error::SingularHomography);
        }
        let h = &self.h;
        let adj = [
            [
                h[1][1] * h[2][2] - h[1][2] * h[2][1],
                h[0][2] * h[2][1] - h[0][1] * h[2][2],
                h[0][1] * h[1][2] - h[0][2] * h[1][1],
            ],
            [
                h[1][2] * h[2][0] - h[1][0] * h[2][2],
                h[0][0] * h[2][2] - h[0][2] * h[2][0],
                h[0][2] * h[1][0] - h[0][0] * h[1][2],
            ],
            [
                h[1][0] * h[2][1] - h[1][1] * h[2][0],
                h[0][1] * h[2][0] - h[0][0] * h[2][1],
                h[0][0] * h[1][1] - h[0][1] * h[1][0],
            ],
        ];
        Ok(Homography::normalized(adj))
    }

    pub fn compose(&self, other: &Homography) -> Homography {
        let a = &self.h;
        let b = &other.h;
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Homography::normalized(m)
    }

    fn normalized(mut m: [[f64; 3]; 3]) -> Homography {
        let s = m[2][2];
        if s.abs() > 1e-12 {
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        Homography { h: m }
    }
}

/// Solves the 8x8 direct-linear-transform system mapping the corners of
/// `src` onto the corners of `dst`.
///
/// Exact for 4 point correspondences; a degenerate correspondence (three
/// collinear corners on either side) yields `Error::SingularHomography`.
pub fn homography_from_quads(src: &Quad, dst: &Quad) -> Result<Homography> {
    let mut a = [[0.0f64; 9]; 8]; // augmented 8x9 system
    for (k, (s, d)) in src.corners().iter().zip(dst.corners()).enumerate() {
        let (x, y, xp, yp) = (s.x, s.y, d.x, d.y);
        a[2 * k] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * xp, -y * xp, xp];
        a[2 * k + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * yp, -y * yp, yp];
    }
    let sol = solve8(&mut a)?;
    let h = Homography {
        h: [
            [sol[0], sol[1], sol[2]],
            [sol[3], sol[4], sol[5]],
            [sol[6], sol[7], 1.0],
        ],
    };
    if h.det().abs() < 1e-12 {
        return Err(Error::SingularHomography);
    }
    Ok(h)
}

/// Gaussian elimination with partial pivoting on an 8x9 augmented system.
fn solve8(a: &mut [[f64; 9]; 8]) -> Result<[f64; 8]> {
    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter().take(8))
        .fold(1.0f64, |m, v| m.max(v.abs()));
    for col in 0..8 {
        let pivot_row = (col..8)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return Err(Error::SingularHomography);
        }
        a.swap(col, pivot_row);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..9 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0f64; 8];
    for col in (0..8).rev() {
        let mut acc = a[col][8];
        for k in col + 1..8 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

/// A grayscale map with values in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    values: Vec<f64>,
}

impl HeatMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "heatmap dimensions must be positive");
        HeatMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Position of the maximum value (first occurrence in row-major order).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, 0.0f64);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 % self.width, best.0 / self.width)
    }

    /// Bilinear sample with zero outside the map.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let at = |ix: i64, iy: i64| -> f64 {
            if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
                0.0
            } else {
                self.values[iy as usize * self.width + ix as usize]
            }
        };
        let (ix, iy) = (x0 as i64, y0 as i64);
        let v00 = at(ix, iy);
        let v10 = at(ix + 1, iy);
        let v01 = at(ix, iy + 1);
        let v11 = at(ix + 1, iy + 1);
        (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
    }

    /// Writes the map as a binary 8-bit PGM, values scaled by 255 and
    /// rounded half-up.
    pub fn write_pgm<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "P5")?;
        writeln!(out, "{} {}", self.width, self.height)?;
        writeln!(out, "255")?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.write_all(&bytes)
    }
}

/// Isotropic Gaussian window of side `size`, centered at `(size-1)/2` with
/// peak amplitude 1 (amplitude normalization, not a probability density).
///
/// For even sizes the continuous peak falls between pixels, so the largest
/// stored sample is `exp(-0.5 / (2 sigma^2))`; odd sizes hold an exact 1 at
/// the center pixel.
pub fn gaussian_window(size: usize, sigma: f64) -> HeatMap {
    assert!(size > 0, "window size must be positive");
    assert!(sigma > 0.0, "sigma must be positive");
    let mut map = HeatMap::zeros(size, size);
    let c = (size as f64 - 1.0) / 2.0;
    let denom = 2.0 * sigma * sigma;
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            map.set(x, y, (-(dx * dx + dy * dy) / denom).exp());
        }
    }
    map
}

/// Corner quad of a window map (pixel-center extent), used as the source of
/// the perspective transform onto a character box.
pub fn window_quad(size: usize) -> Quad {
    let s = size as f64 - 1.0;
    Quad::new([
        Point::new(0.0, 0.0),
        Point::new(s, 0.0),
        Point::new(s, s),
        Point::new(0.0, s),
    ])
}

/// Warps `window` into a `target_w x target_h` map through `h` (window
/// coordinates to target coordinates) using inverse-mapped bilinear
/// resampling. Pixels outside the warped window are 0.
pub fn warp_gaussian(window: &HeatMap, h: &Homography, target_w: usize, target_h: usize) -> HeatMap {
    let mut out = HeatMap::zeros(target_w, target_h);
    let Ok(inv) = h.inverse() else { return out };
    warp_into(&mut out, window, &inv, 0, 0, target_w, target_h);
    out
}

fn warp_into(
    out: &mut HeatMap,
    window: &HeatMap,
    inv: &Homography,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
) {
    for y in y0..y1 {
        for x in x0..x1 {
            let Some(src) = inv.apply(Point::new(x as f64, y as f64)) else {
                continue;
            };
            let v = window.sample(src.x, src.y).clamp(0.0, 1.0);
            if v > out.get(x, y) {
                out.set(x, y, v);
            }
        }
    }
}

/// Renders the ground-truth heatmap of a scene: one warped Gaussian per
/// character, blended by pixelwise max.
///
/// Blending by max keeps every per-character peak intact when boxes overlap
/// and is independent of character order.
pub fn render_scene_heatmap(scene: &SceneAnnotation) -> HeatMap {
    let window = gaussian_window(DEFAULT_WINDOW_SIZE, DEFAULT_SIGMA);
    let src = window_quad(DEFAULT_WINDOW_SIZE);
    let w = scene.image_width as usize;
    let h = scene.image_height as usize;
    let mut out = HeatMap::zeros(w.max(1), h.max(1));
    for (_, _, quad) in scene.iter_chars() {
        let Ok(hom) = homography_from_quads(&src, quad) else {
            // A zero-area character has no heat to contribute.
            continue;
        };
        let Ok(inv) = hom.inverse() else { continue };
        // The warped window occupies exactly the quad; only its padded
        // envelope needs resampling.
        let bb = quad.aabb().inflated(2.0);
        let x0 = bb.min.x.floor().max(0.0) as usize;
        let y0 = bb.min.y.floor().max(0.0) as usize;
        let x1 = (bb.max.x.ceil() as usize + 1).min(w);
        let y1 = (bb.max.y.ceil() as usize + 1).min(h);
        warp_into(&mut out, &window, &inv, x0, y0, x1, y1);
    }
    out
}

/// Summed squared difference over all pixels (a sum, not a mean).
pub fn mse_loss(pred: &HeatMap, target: &HeatMap) -> Result<f64> {
    if pred.width != target.width || pred.height != target.height {
        return Err(Error::DimensionMismatch(format!(
            "heatmap {}x{} vs {}x{}",
            pred.width, pred.height, target.width, target.height
        )));
    }
    Ok(pred
        .values
        .iter()
        .zip(&target.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_window_center_and_corner() {
        let map = gaussian_window(50, 18.5);
        // Even size: the continuous peak sits between the four central
        // pixels; the best sample is half a pixel away in each axis.
        let expected_max = (-0.5f64 / (2.0 * 18.5 * 18.5)).exp();
        assert!((map.max_value() - expected_max).abs() < 1e-12);
        let corner = (-(24.5f64.powi(2) * 2.0) / (2.0 * 18.5 * 18.5)).exp();
        assert!((map.get(0, 0) - corner).abs() < 1e-12);
        assert!((map.get(0, 0) - 0.1731).abs() < 1e-4);

        // Odd size: center pixel is exactly the peak.
        let odd = gaussian_window(49, 18.5);
        assert_eq!(odd.get(24, 24), 1.0);
    }

    #[test]
    fn gaussian_window_is_symmetric() {
        let map = gaussian_window(50, 18.5);
        for y in 0..50 {
            for x in 0..50 {
                assert_eq!(map.get(x, y), map.get(y, x));
                assert_eq!(map.get(x, y), map.get(49 - x, 49 - y));
            }
        }
    }

    fn quad(pts: [(f64, f64); 4]) -> Quad {
        Quad::new(pts.map(|(x, y)| Point::new(x, y)))
    }

    #[test]
    fn homography_identity_for_same_quad() {
        let q = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let h = homography_from_quads(&q, &q).unwrap();
        let id = Homography::identity();
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.matrix()[i][j] - id.matrix()[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn homography_pure_translation() {
        let q = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let t = q.translated(5.0, 7.0);
        let h = homography_from_quads(&q, &t).unwrap();
        let m = h.matrix();
        let want = [[1.0, 0.0, 5.0], [0.0, 1.0, 7.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - want[i][j]).abs() < 1e-9, "m[{i}][{j}] = {}", m[i][j]);
            }
        }
    }

    #[test]
    fn homography_corner_roundtrip() {
        let src = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let dst = quad([(0.0, 0.0), (2.0, 0.0), (2.5, 1.5), (0.5, 1.0)]);
        let h = homography_from_quads(&src, &dst).unwrap();
        for (s, d) in src.corners().iter().zip(dst.corners()) {
            let got = h.apply(*s).unwrap();
            assert!((got.x - d.x).abs() < 1e-9 && (got.y - d.y).abs() < 1e-9);
        }
        assert_eq!(h.matrix()[2][2], 1.0);
    }

    #[test]
    fn homography_degenerate_is_error() {
        let collinear = quad([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0)]);
        let ok = quad([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert!(homography_from_quads(&collinear, &ok).is_err());
    }

    #[test]
    fn inverse_roundtrips_random_points() {
        let src = quad([(0.0, 0.0), (49.0, 0.0), (49.0, 49.0), (0.0, 49.0)]);
        let dst = quad([(10.0, 12.0), (40.0, 8.0), (45.0, 44.0), (6.0, 38.0)]);
        let h = homography_from_quads(&src, &dst).unwrap();
        let both = h.compose(&h.inverse().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let p = Point::new(rng.gen_range(0.0..49.0), rng.gen_range(0.0..49.0));
            let q = both.apply(p).unwrap();
            assert!((q.x - p.x).abs() < 1e-9 && (q.y - p.y).abs() < 1e-9);
        }
    }

    #[test]
    fn warp_identity_reproduces_grid() {
        let window = gaussian_window(20, 6.0);
        let out = warp_gaussian(&window, &Homography::identity(), 20, 20);
        for y in 0..20 {
            for x in 0..20 {
                assert!((out.get(x, y) - window.get(x, y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn warp_peak_lands_inside_target_quad() {
        let window = gaussian_window(DEFAULT_WINDOW_SIZE, DEFAULT_SIGMA);
        let src = window_quad(DEFAULT_WINDOW_SIZE);
        let dst = quad([(30.0, 20.0), (60.0, 25.0), (55.0, 50.0), (28.0, 45.0)]);
        let h = homography_from_quads(&src, &dst).unwrap();
        let out = warp_gaussian(&window, &h, 100, 100);
        let (ax, ay) = out.argmax();
        let p = Point::new(ax as f64, ay as f64);
        // Inside test against each CCW edge of the quad.
        let c = dst.corners();
        for i in 0..4 {
            assert!(
                crate::geometry::cross(c[i], c[(i + 1) % 4], p) >= -1e-9,
                "argmax ({ax},{ay}) outside quad"
            );
        }
        assert!(out.max_value() > 0.9);
    }

    #[test]
    fn warp_outside_bounds_is_zero() {
        let window = gaussian_window(10, 4.0);
        let src = window_quad(10);
        let dst = quad([(200.0, 200.0), (220.0, 200.0), (220.0, 220.0), (200.0, 220.0)]);
        let h = homography_from_quads(&src, &dst).unwrap();
        let out = warp_gaussian(&window, &h, 50, 50);
        assert_eq!(out.max_value(), 0.0);
    }

    #[test]
    fn render_empty_scene_is_zero() {
        let scene = SceneAnnotation {
            scene_id: "empty".into(),
            image_width: 32,
            image_height: 32,
            words: vec![],
        };
        assert_eq!(render_scene_heatmap(&scene).max_value(), 0.0);
    }

    #[test]
    fn render_single_char_equals_direct_warp() {
        let q = quad([(8.0, 10.0), (28.0, 10.0), (28.0, 34.0), (8.0, 34.0)]);
        let scene = SceneAnnotation {
            scene_id: "one".into(),
            image_width: 48,
            image_height: 48,
            words: vec![crate::scene::WordAnnotation {
                text: "a".into(),
                chars: vec![q],
            }],
        };
        let rendered = render_scene_heatmap(&scene);
        let h = homography_from_quads(&window_quad(DEFAULT_WINDOW_SIZE), &q).unwrap();
        let direct = warp_gaussian(&gaussian_window(DEFAULT_WINDOW_SIZE, DEFAULT_SIGMA), &h, 48, 48);
        for (a, b) in rendered.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn render_two_chars_peak_per_quad() {
        let q1 = quad([(4.0, 4.0), (20.0, 4.0), (20.0, 24.0), (4.0, 24.0)]);
        let q2 = quad([(40.0, 40.0), (58.0, 40.0), (58.0, 60.0), (40.0, 60.0)]);
        let scene = SceneAnnotation {
            scene_id: "two".into(),
            image_width: 64,
            image_height: 64,
            words: vec![crate::scene::WordAnnotation {
                text: "ab".into(),
                chars: vec![q1, q2],
            }],
        };
        let map = render_scene_heatmap(&scene);
        for q in [&q1, &q2] {
            let bb = q.aabb();
            let mut best = (0usize, 0usize, 0.0f64);
            for y in bb.min.y as usize..=bb.max.y as usize {
                for x in bb.min.x as usize..=bb.max.x as usize {
                    if map.get(x, y) > best.2 {
                        best = (x, y, map.get(x, y));
                    }
                }
            }
            assert!(best.2 > 0.9, "no local peak inside quad");
        }
        assert!(map.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn render_is_order_independent() {
        let q1 = quad([(4.0, 4.0), (20.0, 4.0), (20.0, 24.0), (4.0, 24.0)]);
        let q2 = quad([(12.0, 10.0), (30.0, 10.0), (30.0, 30.0), (12.0, 30.0)]);
        let make = |chars: Vec<Quad>| SceneAnnotation {
            scene_id: "o".into(),
            image_width: 40,
            image_height: 40,
            words: vec![crate::scene::WordAnnotation {
                text: "ab".into(),
                chars,
            }],
        };
        let a = render_scene_heatmap(&make(vec![q1, q2]));
        let b = render_scene_heatmap(&make(vec![q2, q1]));
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn mse_loss_cases() {
        let a = gaussian_window(8, 3.0);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);

        let zero = HeatMap::zeros(2, 2);
        let mut one = HeatMap::zeros(2, 2);
        for y in 0..2 {
            for x in 0..2 {
                one.set(x, y, 1.0);
            }
        }
        assert_eq!(mse_loss(&zero, &one).unwrap(), 4.0);
        assert_eq!(
            mse_loss(&zero, &one).unwrap(),
            mse_loss(&one, &zero).unwrap()
        );

        let other = HeatMap::zeros(3, 2);
        assert!(mse_loss(&zero, &other).is_err());
    }

    #[test]
    fn pgm_output_shape() {
        let map = gaussian_window(4, 2.0);
        let mut buf = Vec::new();
        map.write_pgm(&mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf[..12]);
        assert!(text.starts_with("P5\n4 4\n255\n"));
        assert_eq!(buf.len(), 11 + 16);
    }
}

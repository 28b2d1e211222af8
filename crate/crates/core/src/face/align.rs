//! Five-point face alignment via a least-squares similarity transform.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{FaceObservation, Point};
use crate::error::{Error, Result};

/// Canonical landmark positions in the output crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTemplate {
    pub points: [Point; 5],
    pub crop_size: u32,
}

impl Default for AlignmentTemplate {
    /// The common 112×112 ArcFace reference landmarks.
    fn default() -> Self {
        Self {
            points: [
                [38.2946, 51.6963],
                [73.5318, 51.5014],
                [56.0252, 71.7366],
                [41.5493, 92.3655],
                [70.7299, 92.2041],
            ],
            crop_size: 112,
        }
    }
}

impl AlignmentTemplate {
    pub fn validate(&self) -> Result<()> {
        let size = self.crop_size as f64;
        for p in &self.points {
            if !(p[0] > 0.0 && p[0] < size && p[1] > 0.0 && p[1] < size) {
                return Err(Error::Config(format!(
                    "template point ({}, {}) not strictly inside the {}px crop",
                    p[0], p[1], self.crop_size
                )));
            }
        }
        Ok(())
    }
}

/// `x ↦ [[a, -b], [b, a]]·x + t`, i.e. scale `√(a²+b²)` and rotation `atan2(b, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn rotation(&self) -> f64 {
        self.b.atan2(self.a)
    }

    /// Row-major 2×3 affine matrix.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        [[self.a, -self.b, self.tx], [self.b, self.a, self.ty]]
    }

    pub fn apply(&self, p: Point) -> Point {
        [
            self.a * p[0] - self.b * p[1] + self.tx,
            self.b * p[0] + self.a * p[1] + self.ty,
        ]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.a * self.a + self.b * self.b;
        if det <= f64::EPSILON {
            return Err(Error::Degenerate("similarity transform has zero scale".into()));
        }
        let (a, b) = (self.a / det, -self.b / det);
        Ok(Self {
            a,
            b,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        })
    }
}

fn centroid(pts: &[Point]) -> Point {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [sx / n, sy / n]
}

/// Closed-form least-squares similarity (Umeyama, no reflection) mapping `src` onto `dst`.
pub fn estimate_similarity_transform(src: &[Point; 5], dst: &[Point; 5]) -> Result<SimilarityTransform> {
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut var = 0.0;
    let mut dot = 0.0;
    let mut cross = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s[0] - cs[0], s[1] - cs[1]);
        let (dx, dy) = (d[0] - cd[0], d[1] - cd[1]);
        var += sx * sx + sy * sy;
        dot += sx * dx + sy * dy;
        cross += sx * dy - sy * dx;
    }
    let spread = src.iter().map(|p| p[0].abs().max(p[1].abs())).fold(1.0, f64::max);
    if var <= 1e-12 * spread * spread {
        return Err(Error::Degenerate("source landmarks are coincident".into()));
    }
    let a = dot / var;
    let b = cross / var;
    if a.hypot(b) <= 1e-12 {
        return Err(Error::Degenerate("destination landmarks collapse to a point".into()));
    }
    Ok(SimilarityTransform {
        a,
        b,
        tx: cd[0] - (a * cs[0] - b * cs[1]),
        ty: cd[1] - (b * cs[0] + a * cs[1]),
    })
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Produce a `size`×`size` image whose pixel `p` samples `frame` at
/// `transform⁻¹(p)` with bilinear interpolation; samples outside the frame are black.
pub fn warp_similarity(frame: &RgbImage, transform: &SimilarityTransform, size: u32) -> Result<RgbImage> {
    let inv = transform.inverse()?;
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let fetch = |x: i64, y: i64| -> [f64; 3] {
        if x >= 0 && y >= 0 && x < w && y < h {
            let p = frame.get_pixel(x as u32, y as u32).0;
            [p[0] as f64, p[1] as f64, p[2] as f64]
        } else {
            [0.0; 3]
        }
    };
    let mut out = RgbImage::new(size, size);
    for oy in 0..size {
        for ox in 0..size {
            let [sx, sy] = inv.apply([ox as f64, oy as f64]);
            let (sx, sy) = (snap(sx), snap(sy));
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let weights = [
                ((x0, y0), (1.0 - fx) * (1.0 - fy)),
                ((x0 + 1, y0), fx * (1.0 - fy)),
                ((x0, y0 + 1), (1.0 - fx) * fy),
                ((x0 + 1, y0 + 1), fx * fy),
            ];
            let mut acc = [0.0f64; 3];
            for ((x, y), wgt) in weights {
                if wgt == 0.0 {
                    continue;
                }
                let px = fetch(x, y);
                for c in 0..3 {
                    acc[c] += px[c] * wgt;
                }
            }
            out.put_pixel(ox, oy, Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8)));
        }
    }
    Ok(out)
}

/// Warp the face described by `obs` so its landmarks land on the template.
pub fn align_face(frame: &RgbImage, obs: &FaceObservation, template: &AlignmentTemplate) -> Result<RgbImage> {
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    if let Some(p) = obs.landmarks.iter().find(|p| !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] < w && p[1] < h)) {
        return Err(Error::Contract(format!(
            "landmark ({}, {}) outside the {}x{} frame",
            p[0], p[1], w, h
        )));
    }
    let t = estimate_similarity_transform(&obs.landmarks, &template.points)?;
    warp_similarity(frame, &t, template.crop_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face::BBox;
    use proptest::prelude::*;

    /// Independent route: solve the 4-unknown normal equations by Gaussian elimination.
    fn brute_force_fit(src: &[Point; 5], dst: &[Point; 5]) -> [f64; 4] {
        let mut m = [[0.0f64; 5]; 4];
        for (s, d) in src.iter().zip(dst) {
            let rows = [([s[0], -s[1], 1.0, 0.0], d[0]), ([s[1], s[0], 0.0, 1.0], d[1])];
            for (r, rhs) in rows {
                for j in 0..4 {
                    for k in 0..4 {
                        m[j][k] += r[j] * r[k];
                    }
                    m[j][4] += r[j] * rhs;
                }
            }
        }
        for col in 0..4 {
            let piv = (col..4).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
            m.swap(col, piv);
            for row in 0..4 {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..5 {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        [m[0][4] / m[0][0], m[1][4] / m[1][1], m[2][4] / m[2][2], m[3][4] / m[3][3]]
    }

    fn template_points() -> [Point; 5] {
        AlignmentTemplate::default().points
    }

    #[test]
    fn identity_when_points_match() {
        let p = template_points();
        let t = estimate_similarity_transform(&p, &p).unwrap();
        assert!((t.scale() - 1.0).abs() < 1e-12);
        assert!(t.rotation().abs() < 1e-12);
        assert!(t.tx.abs() < 1e-9 && t.ty.abs() < 1e-9);
    }

    #[test]
    fn pure_translation() {
        let src = template_points();
        let dst = src.map(|p| [p[0] + 10.0, p[1] - 5.0]);
        let t = estimate_similarity_transform(&src, &dst).unwrap();
        assert!((t.scale() - 1.0).abs() < 1e-12);
        assert!(t.rotation().abs() < 1e-12);
        assert!((t.tx - 10.0).abs() < 1e-9 && (t.ty + 5.0).abs() < 1e-9);
    }

    #[test]
    fn scaled_quarter_turn_matches_normal_equations() {
        let src = template_points();
        let dst = src.map(|p| [-2.0 * p[1], 2.0 * p[0]]);
        let t = estimate_similarity_transform(&src, &dst).unwrap();
        assert!((t.scale() - 2.0).abs() < 1e-12);
        assert!((t.rotation() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let [a, b, tx, ty] = brute_force_fit(&src, &dst);
        assert!((t.a - a).abs() < 1e-9 && (t.b - b).abs() < 1e-9);
        assert!((t.tx - tx).abs() < 1e-7 && (t.ty - ty).abs() < 1e-7);
        // centroids map onto each other
        let c = t.apply(centroid(&src));
        let cd = centroid(&dst);
        assert!((c[0] - cd[0]).abs() < 1e-9 && (c[1] - cd[1]).abs() < 1e-9);
    }

    #[test]
    fn coincident_source_is_degenerate() {
        let src = [[3.0, 3.0]; 5];
        assert!(matches!(
            estimate_similarity_transform(&src, &template_points()),
            Err(Error::Degenerate(_))
        ));
    }

    fn patterned(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 + y * 3) as u8, (x ^ y) as u8, (x * y) as u8]))
    }

    fn obs_with(landmarks: [Point; 5]) -> FaceObservation {
        FaceObservation::new(0, BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), landmarks, 0.9).unwrap()
    }

    #[test]
    fn identity_warp_copies_pixels() {
        let tpl = AlignmentTemplate::default();
        let frame = patterned(112, 112);
        let out = align_face(&frame, &obs_with(tpl.points), &tpl).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn translated_landmarks_shift_the_crop() {
        let tpl = AlignmentTemplate::default();
        let frame = patterned(300, 260);
        let (dx, dy) = (57u32, 31u32);
        let lm = tpl.points.map(|p| [p[0] + dx as f64, p[1] + dy as f64]);
        let out = align_face(&frame, &obs_with(lm), &tpl).unwrap();
        for y in 0..112 {
            for x in 0..112 {
                assert_eq!(out.get_pixel(x, y), frame.get_pixel(x + dx, y + dy), "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn outside_samples_are_black() {
        let tpl = AlignmentTemplate::default();
        let frame = RgbImage::from_pixel(120, 112, Rgb([200, 200, 200]));
        let lm = tpl.points.map(|p| [p[0] + 40.0, p[1]]);
        let out = align_face(&frame, &obs_with(lm), &tpl).unwrap();
        assert_eq!(out.get_pixel(0, 50).0, [200, 200, 200]);
        assert_eq!(out.get_pixel(111, 50).0, [0, 0, 0]);
    }

    #[test]
    fn degenerate_landmarks_propagate() {
        let tpl = AlignmentTemplate::default();
        let frame = patterned(112, 112);
        assert!(matches!(align_face(&frame, &obs_with([[50.0, 50.0]; 5]), &tpl), Err(Error::Degenerate(_))));
    }

    #[test]
    fn default_template_is_valid() {
        AlignmentTemplate::default().validate().unwrap();
        let mut t = AlignmentTemplate::default();
        t.points[0] = [0.0, 10.0];
        assert!(t.validate().is_err());
    }

    proptest! {
        #[test]
        fn exact_similarity_images_are_recovered(
            scale in 0.2f64..5.0, angle in -3.1f64..3.1, tx in -500.0f64..500.0, ty in -500.0f64..500.0,
            jitter in proptest::collection::vec(-15.0f64..15.0, 10),
        ) {
            let mut src = template_points();
            for (i, p) in src.iter_mut().enumerate() {
                p[0] += jitter[2 * i];
                p[1] += jitter[2 * i + 1];
            }
            let truth = SimilarityTransform { a: scale * angle.cos(), b: scale * angle.sin(), tx, ty };
            let dst = src.map(|p| truth.apply(p));
            let t = estimate_similarity_transform(&src, &dst).unwrap();
            prop_assert!(t.scale() > 0.0);
            for (s, d) in src.iter().zip(&dst) {
                let q = t.apply(*s);
                prop_assert!((q[0] - d[0]).abs() < 1e-6 && (q[1] - d[1]).abs() < 1e-6);
            }
        }
    }
}

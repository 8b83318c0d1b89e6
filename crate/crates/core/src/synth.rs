//! Deterministic synthetic stereo scenes with exact ground truth.
//!
//! Polygons with integer vertices sit on fronto-parallel depth layers in
//! front of a textured background plane. In rig mode disparities are
//! integers, so every polygon's right-view footprint and texture are exact
//! shifted copies of the left ones. In homography mode the right view is the
//! left view warped by a global homography.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{for_each_span, Grid, Homography3x3, Point2, Polygon};
use crate::groundtruth::{CameraRig, DepthMap};
use crate::image::GrayImage;
use crate::vectorize::{KeypointMatch, LabelImage};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// Rectified rig: focal length in pixels and baseline in scene units.
    Rig { focal: f64, baseline: f64 },
    /// Planar scene: right view is the left view mapped by this homography.
    Homography(Homography3x3),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Inclusive polygon count range.
    pub polygons: (usize, usize),
    /// Inclusive outer-radius range, pixels.
    pub radius: (f64, f64),
    pub transform: Transform,
    /// Depth of the main polygon layer.
    pub depth_main: f64,
    pub depth_background: f64,
    /// Depth of the layer holding the discontinuity fraction.
    pub depth_near: f64,
    /// Fraction of polygons placed on the near layer.
    pub discontinuity: f64,
    /// Pairs of adjacent polygons sharing shape and texture.
    pub twins: usize,
    pub keypoints_per_polygon: usize,
    pub background_keypoints: usize,
    /// Outliers as a fraction of the inlier count.
    pub outlier_fraction: f64,
    /// Minimum free pixels between polygons in both views.
    pub gap: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 1024,
            height: 1024,
            polygons: (20, 40),
            radius: (16.0, 30.0),
            transform: Transform::Rig { focal: 1000.0, baseline: 0.04 },
            depth_main: 1.0,
            depth_background: 2.0,
            depth_near: 0.55,
            discontinuity: 0.0,
            twins: 0,
            keypoints_per_polygon: 20,
            background_keypoints: 80,
            outlier_fraction: 0.1,
            gap: 4,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::InvalidParameter("scene dimensions must be >= 64"));
        }
        if self.polygons.0 == 0 || self.polygons.0 > self.polygons.1 {
            return Err(Error::InvalidParameter("polygon count range must be 1 <= min <= max"));
        }
        if !(self.radius.0 >= 4.0) || self.radius.0 > self.radius.1 {
            return Err(Error::InvalidParameter("radius range must be 4 <= min <= max"));
        }
        if !(self.depth_main > 0.0 && self.depth_background > 0.0 && self.depth_near > 0.0) {
            return Err(Error::InvalidParameter("depths must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.discontinuity) || !(0.0..=10.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidParameter("fractions out of range"));
        }
        if 2 * self.twins > self.polygons.0 {
            return Err(Error::InvalidParameter("twins need two polygons each"));
        }
        match self.transform {
            Transform::Rig { focal, baseline } => {
                if !(focal > 0.0) || !(baseline >= 0.0) {
                    return Err(Error::InvalidParameter("focal must be > 0 and baseline >= 0"));
                }
            }
            Transform::Homography(_) => {
                if self.discontinuity > 0.0 {
                    return Err(Error::InvalidParameter("homography scenes are planar"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Main,
    Near,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPolygon {
    pub label: u32,
    pub left: Polygon,
    pub right: Polygon,
    pub layer: Layer,
    /// Integer disparity (rig mode; 0 otherwise).
    pub disparity: i64,
    pub twin_of: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub spec: SceneSpec,
    pub left: GrayImage,
    pub right: GrayImage,
    pub labels_l: LabelImage,
    pub labels_r: LabelImage,
    /// All-invalid in homography mode.
    pub depth_l: DepthMap,
    pub depth_r: DepthMap,
    pub rig: CameraRig,
    pub homography: Option<Homography3x3>,
    pub keypoints: Vec<KeypointMatch>,
    pub inlier: Vec<bool>,
    /// Corresponding (left label, right label) pairs.
    pub truth: Vec<(u32, u32)>,
    pub polygons: Vec<SynthPolygon>,
}

fn hash(x: i64, y: i64, seed: u32) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= seed as u64;
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise in `[0, 1)`, continuous in `(x, y)`.
pub fn value_noise(x: f64, y: f64, seed: u32) -> f64 {
    const OCTAVES: [(f64, f64); 4] = [(24.0, 0.4), (12.0, 0.3), (6.0, 0.2), (3.0, 0.1)];
    let mut v = 0.0;
    for (o, &(period, weight)) in OCTAVES.iter().enumerate() {
        let (fx, fy) = (x / period, y / period);
        let (ix, iy) = (libm::floor(fx), libm::floor(fy));
        let (tx, ty) = (smooth(fx - ix), smooth(fy - iy));
        let (ix, iy) = (ix as i64, iy as i64);
        let s = seed.wrapping_add((o as u32).wrapping_mul(0x68E3_1DA4));
        let a = hash(ix, iy, s);
        let b = hash(ix + 1, iy, s);
        let c = hash(ix, iy + 1, s);
        let d = hash(ix + 1, iy + 1, s);
        let top = a + (b - a) * tx;
        let bot = c + (d - c) * tx;
        v += weight * (top + (bot - top) * ty);
    }
    v
}

const POLY_AMPLITUDE: f64 = 60.0;
const BG_MEAN: f64 = 128.0;
const BG_AMPLITUDE: f64 = 24.0;

#[derive(Debug, Clone)]
struct Texture {
    mean: f64,
    seed: u32,
    /// Texture coordinates are pixel coordinates minus this anchor.
    anchor: (i64, i64),
}

impl Texture {
    fn at(&self, x: f64, y: f64) -> f64 {
        self.mean + POLY_AMPLITUDE * (value_noise(x - self.anchor.0 as f64, y - self.anchor.1 as f64, self.seed) - 0.5)
    }
}

fn background(x: f64, y: f64, seed: u32) -> f64 {
    BG_MEAN + BG_AMPLITUDE * (value_noise(x, y, seed) - 0.5)
}

fn quantize(v: f64) -> f32 {
    libm::round(v.clamp(0.0, 255.0)) as f32
}

fn raster_spans(p: &Polygon, w: usize, h: usize) -> Vec<(usize, usize, usize)> {
    let mut spans = Vec::new();
    for_each_span(p.vertices(), &Grid::pixels(w, h), |r, c0, c1| spans.push((r, c0, c1)));
    spans
}

fn span_pixels(spans: &[(usize, usize, usize)]) -> usize {
    spans.iter().map(|s| s.2 - s.1).sum()
}

/// Occupancy with a dilation margin.
struct Occupancy {
    w: usize,
    h: usize,
    cells: Vec<bool>,
}

impl Occupancy {
    fn new(w: usize, h: usize) -> Self {
        Self { w, h, cells: vec![false; w * h] }
    }

    fn free(&self, spans: &[(usize, usize, usize)]) -> bool {
        spans.iter().all(|&(r, c0, c1)| !self.cells[r * self.w + c0..r * self.w + c1].iter().any(|&c| c))
    }

    fn mark(&mut self, spans: &[(usize, usize, usize)], gap: usize) {
        for &(r, c0, c1) in spans {
            let (r0, r1) = (r.saturating_sub(gap), (r + gap + 1).min(self.h));
            let (x0, x1) = (c0.saturating_sub(gap), (c1 + gap).min(self.w));
            for rr in r0..r1 {
                self.cells[rr * self.w + x0..rr * self.w + x1].fill(true);
            }
        }
    }
}

fn star_shape(rng: &mut ChaCha8Rng, r_max: f64) -> Option<Vec<Point2>> {
    let n = rng.gen_range(6..=10);
    let mut angles: Vec<f64> = (0..n)
        .map(|k| (k as f64 + rng.gen_range(0.15..0.85)) * core::f64::consts::TAU / n as f64)
        .collect();
    angles.sort_by(f64::total_cmp);
    let pts: Vec<Point2> = angles
        .iter()
        .map(|&a| {
            let r = r_max * rng.gen_range(0.7..1.0);
            Point2::new(libm::round(r * libm::cos(a)), libm::round(r * libm::sin(a)))
        })
        .collect();
    let mut pts = pts;
    pts.dedup();
    (pts.len() >= 3 && pts.first() != pts.last()).then_some(pts)
}

fn translated(shape: &[Point2], dx: i64, dy: i64) -> Result<Polygon> {
    Polygon::new(shape.iter().map(|p| Point2::new(p.x + dx as f64, p.y + dy as f64)).collect())
}

fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    let t = if len2 > 0.0 { ((p - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.dist(a + d * t)
}

fn boundary_distance(p: Point2, poly: &Polygon) -> f64 {
    let v = poly.vertices();
    (0..v.len()).map(|i| seg_dist(p, v[i], v[(i + 1) % v.len()])).fold(f64::INFINITY, f64::min)
}

fn disparity_for(transform: &Transform, depth: f64) -> (i64, f64) {
    match *transform {
        Transform::Rig { focal, baseline } => {
            let d = libm::round(focal * baseline / depth) as i64;
            if d > 0 {
                (d, focal * baseline / d as f64)
            } else {
                (0, depth)
            }
        }
        Transform::Homography(_) => (0, depth),
    }
}

struct Placed {
    poly: SynthPolygon,
    tex: Texture,
    spans_l: Vec<(usize, usize, usize)>,
    spans_r: Vec<(usize, usize, usize)>,
}

fn right_footprint(left: &Polygon, transform: &Transform, disparity: i64) -> Result<Polygon> {
    match transform {
        Transform::Rig { .. } => Ok(left.translated(-(disparity as f64), 0.0)),
        Transform::Homography(h) => left.map(|p| h.apply(p)),
    }
}

fn inside_with_margin(p: &Polygon, w: usize, h: usize, margin: f64) -> bool {
    let b = p.bbox();
    b.min.x >= margin && b.min.y >= margin && b.max.x <= w as f64 - margin && b.max.y <= h as f64 - margin
}

/// Generates a scene; identical specs give identical bundles.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let count = rng.gen_range(spec.polygons.0..=spec.polygons.1);
    let n_near = libm::round(spec.discontinuity * count as f64) as usize;
    let n_near = n_near.min(count - 2 * spec.twins);
    let (d_main, z_main) = disparity_for(&spec.transform, spec.depth_main);
    let (d_near, z_near) = disparity_for(&spec.transform, spec.depth_near);
    let (d_bg, z_bg) = disparity_for(&spec.transform, spec.depth_background);

    let mut means: Vec<f64> = (0..count).map(|k| 40.0 + 175.0 * k as f64 / count.max(2).saturating_sub(1) as f64).collect();
    means.shuffle(&mut rng);
    let bg_seed: u32 = rng.gen();

    let mut occ_l = Occupancy::new(w, h);
    let mut occ_r = Occupancy::new(w, h);
    let mut placed: Vec<Placed> = Vec::new();
    let margin = 6.0;
    let gap = spec.gap;

    // Twins first, then the near layer, then the rest.
    let mut plan: Vec<(Layer, bool)> = Vec::new();
    plan.extend((0..spec.twins).map(|_| (Layer::Main, true)));
    plan.extend((0..n_near).map(|_| (Layer::Near, false)));
    plan.extend((0..count - 2 * spec.twins - n_near).map(|_| (Layer::Main, false)));

    for (layer, twin) in plan {
        let disparity = if layer == Layer::Near { d_near } else { d_main };
        let mut done = false;
        for _ in 0..400 {
            let r = rng.gen_range(spec.radius.0..=spec.radius.1);
            let Some(shape) = star_shape(&mut rng, r) else { continue };
            let reach = r + margin + 2.0;
            let lo_x = reach + disparity.max(0) as f64;
            let hi_x = w as f64 - reach - if twin { 2.0 * r + gap as f64 + 4.0 } else { 0.0 };
            if lo_x >= hi_x || reach >= h as f64 - reach {
                break;
            }
            let ax = rng.gen_range(lo_x..hi_x) as i64;
            let ay = rng.gen_range(reach..h as f64 - reach) as i64;
            let mut group = vec![(ax, ay)];
            if twin {
                let width = shape.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max)
                    - shape.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
                group.push((ax + libm::ceil(width) as i64 + gap as i64 + 3, ay));
            }
            let mut cand = Vec::new();
            let mut ok = true;
            for &(px, py) in &group {
                let Ok(left) = translated(&shape, px, py) else {
                    ok = false;
                    break;
                };
                if !left.contains(left.centroid()) || boundary_distance(left.centroid(), &left) < 8.0 {
                    ok = false;
                    break;
                }
                let Ok(right) = right_footprint(&left, &spec.transform, disparity) else {
                    ok = false;
                    break;
                };
                if !inside_with_margin(&left, w, h, margin) || !inside_with_margin(&right, w, h, margin) {
                    ok = false;
                    break;
                }
                let spans_l = raster_spans(&left, w, h);
                let spans_r = raster_spans(&right, w, h);
                if !occ_l.free(&spans_l) || !occ_r.free(&spans_r) || span_pixels(&spans_l) < 60 {
                    ok = false;
                    break;
                }
                cand.push((left, right, spans_l, spans_r, (px, py)));
            }
            // Twins must also clear each other.
            if ok && cand.len() == 2 {
                let mut tmp = Occupancy::new(w, h);
                tmp.mark(&cand[0].2, gap);
                ok = tmp.free(&cand[1].2);
                let mut tmp = Occupancy::new(w, h);
                tmp.mark(&cand[0].3, gap);
                ok &= tmp.free(&cand[1].3);
            }
            if !ok {
                continue;
            }
            let tex_seed: u32 = rng.gen();
            let first_label = placed.len() as u32 + 1;
            let mean = means[placed.len()];
            for (k, (left, right, spans_l, spans_r, anchor)) in cand.into_iter().enumerate() {
                occ_l.mark(&spans_l, gap);
                occ_r.mark(&spans_r, gap);
                let label = placed.len() as u32 + 1;
                let twin_of = twin.then_some(if k == 0 { first_label + 1 } else { first_label });
                placed.push(Placed {
                    poly: SynthPolygon {
                        label,
                        left: left.with_id(alloc::format!("{label}")).with_label(label),
                        right: right.with_id(alloc::format!("{label}")).with_label(label),
                        layer,
                        disparity,
                        twin_of,
                    },
                    tex: Texture { mean, seed: tex_seed, anchor },
                    spans_l,
                    spans_r,
                });
            }
            done = true;
            break;
        }
        if !done {
            return Err(Error::Placement { placed: placed.len(), requested: count });
        }
    }

    // Label images and depth.
    let mut labels_l = LabelImage::blank(w, h)?;
    let mut labels_r = LabelImage::blank(w, h)?;
    let homography = match spec.transform {
        Transform::Homography(hm) => Some(hm),
        Transform::Rig { .. } => None,
    };
    let depth_valid = homography.is_none();
    let mut depth_l = vec![if depth_valid { z_bg as f32 } else { 0.0 }; w * h];
    let mut depth_r = depth_l.clone();
    for p in &placed {
        let z = if p.poly.layer == Layer::Near { z_near } else { z_main };
        for &(r, c0, c1) in &p.spans_l {
            for c in c0..c1 {
                labels_l.set(c, r, p.poly.label);
                if depth_valid {
                    depth_l[r * w + c] = z as f32;
                }
            }
        }
        for &(r, c0, c1) in &p.spans_r {
            for c in c0..c1 {
                labels_r.set(c, r, p.poly.label);
                if depth_valid {
                    depth_r[r * w + c] = z as f32;
                }
            }
        }
    }

    // Rendering.
    let left = GrayImage::from_fn(w, h, |x, y| {
        let l = labels_l.get(x, y);
        let v = if l == 0 { background(x as f64, y as f64, bg_seed) } else { placed[l as usize - 1].tex.at(x as f64, y as f64) };
        quantize(v)
    });
    let inv = homography.map(|hm| hm.inverse());
    let right = GrayImage::from_fn(w, h, |x, y| {
        let l = labels_r.get(x, y);
        let v = match inv {
            None => {
                if l == 0 {
                    background((x as i64 + d_bg) as f64, y as f64, bg_seed)
                } else {
                    let p = &placed[l as usize - 1];
                    p.tex.at((x as i64 + p.poly.disparity) as f64, y as f64)
                }
            }
            Some(hi) => {
                // Pixel centers are at +0.5 in polygon coordinates.
                let q = hi.apply(Point2::new(x as f64 + 0.5, y as f64 + 0.5)).unwrap_or(Point2::new(-1e9, -1e9));
                let (qx, qy) = (q.x - 0.5, q.y - 0.5);
                if l == 0 {
                    background(qx, qy, bg_seed)
                } else {
                    placed[l as usize - 1].tex.at(qx, qy)
                }
            }
        };
        quantize(v)
    });

    // Keypoints.
    let map = |pl: Point2, disparity: i64| -> Option<Point2> {
        match homography {
            Some(hm) => hm.apply(pl).ok(),
            None => Some(Point2::new(pl.x - disparity as f64, pl.y)),
        }
    };
    let mut inliers: Vec<KeypointMatch> = Vec::new();
    for p in &placed {
        let b = p.poly.left.bbox();
        let mut got = 0;
        for _ in 0..spec.keypoints_per_polygon * 50 {
            if got == spec.keypoints_per_polygon {
                break;
            }
            let q = Point2::new(rng.gen_range(b.min.x..b.max.x), rng.gen_range(b.min.y..b.max.y));
            if !p.poly.left.contains(q) || boundary_distance(q, &p.poly.left) < 2.0 {
                continue;
            }
            let Some(r) = map(q, p.poly.disparity) else { continue };
            inliers.push(KeypointMatch::new(q, r, rng.gen_range(0.5..1.0)));
            got += 1;
        }
    }
    let mut got = 0;
    for _ in 0..spec.background_keypoints * 50 {
        if got == spec.background_keypoints {
            break;
        }
        let q = Point2::new(rng.gen_range(2.0..w as f64 - 2.0), rng.gen_range(2.0..h as f64 - 2.0));
        let Some(r) = map(q, d_bg) else { continue };
        if r.x < 2.0 || r.y < 2.0 || r.x > w as f64 - 2.0 || r.y > h as f64 - 2.0 {
            continue;
        }
        let near_label = |img: &LabelImage, p: Point2| {
            let (cx, cy) = (p.x as i64, p.y as i64);
            (-3..=3).any(|dy| {
                (-3..=3).any(|dx| {
                    let (x, y) = (cx + dx, cy + dy);
                    x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && img.get(x as usize, y as usize) != 0
                })
            })
        };
        if near_label(&labels_l, q) || near_label(&labels_r, r) {
            continue;
        }
        inliers.push(KeypointMatch::new(q, r, rng.gen_range(0.3..0.9)));
        got += 1;
    }
    let n_out = libm::round(spec.outlier_fraction * inliers.len() as f64) as usize;
    let mut all: Vec<(KeypointMatch, bool)> = inliers.into_iter().map(|m| (m, true)).collect();
    let mut made = 0;
    while made < n_out {
        let q = Point2::new(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let r = Point2::new(rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let expected = map(q, d_main).unwrap_or(r);
        // Far from any layer's epipolar line / mapped point.
        let off = match homography {
            None => (r.y - q.y).abs(),
            Some(_) => r.dist(expected),
        };
        if off <= 6.0 {
            continue;
        }
        all.push((KeypointMatch::new(q, r, rng.gen_range(0.0..0.5)), false));
        made += 1;
    }
    all.shuffle(&mut rng);
    let (keypoints, inlier): (Vec<_>, Vec<_>) = all.into_iter().unzip();

    let rig = match spec.transform {
        Transform::Rig { focal, baseline } => CameraRig::rectified(focal, w as f64 / 2.0, h as f64 / 2.0, baseline)?,
        Transform::Homography(_) => CameraRig::rectified(1.0, 0.0, 0.0, 0.0)?,
    };
    let truth = placed.iter().map(|p| (p.poly.label, p.poly.label)).collect();
    Ok(SceneBundle {
        spec: *spec,
        left,
        right,
        labels_l,
        labels_r,
        depth_l: DepthMap::new(w, h, depth_l)?,
        depth_r: DepthMap::new(w, h, depth_r)?,
        rig,
        homography,
        keypoints,
        inlier,
        truth,
        polygons: placed.into_iter().map(|p| p.poly).collect(),
    })
}

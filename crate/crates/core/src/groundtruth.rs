//! Ground-truth polygon correspondences from depth reprojection or from a
//! weighted shape similarity.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::geometry::{chamfer_discrete, hausdorff_discrete, polygon_iou, Homography3x3, Point2, Polygon};
use crate::{Error, Result};

/// Intrinsics `p0`, `p1` and camera-to-world transforms `t_l`, `t_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub p0: Matrix3<f64>,
    pub p1: Matrix3<f64>,
    pub t_l: Matrix4<f64>,
    pub t_r: Matrix4<f64>,
}

fn is_rigid(t: &Matrix4<f64>) -> bool {
    let r = t.fixed_view::<3, 3>(0, 0).into_owned();
    let bottom_ok = t[(3, 0)] == 0.0 && t[(3, 1)] == 0.0 && t[(3, 2)] == 0.0 && t[(3, 3)] == 1.0;
    bottom_ok && (r.transpose() * r - Matrix3::identity()).norm() < 1e-9 && (r.determinant() - 1.0).abs() < 1e-9
}

impl CameraRig {
    pub fn new(p0: Matrix3<f64>, p1: Matrix3<f64>, t_l: Matrix4<f64>, t_r: Matrix4<f64>) -> Result<Self> {
        let rig = Self { p0, p1, t_l, t_r };
        rig.validate()?;
        Ok(rig)
    }

    /// Left camera at the origin, right camera translated by `baseline`
    /// along +x, both with focal length `f` and principal point `(cx, cy)`.
    pub fn rectified(f: f64, cx: f64, cy: f64, baseline: f64) -> Result<Self> {
        let k = Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0);
        let mut t_r = Matrix4::identity();
        t_r[(0, 3)] = baseline;
        Self::new(k, k, Matrix4::identity(), t_r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.p0.iter().chain(self.p1.iter()).chain(self.t_l.iter()).chain(self.t_r.iter());
        if !finite.into_iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.p0.determinant().abs() < 1e-12 || self.p1.determinant().abs() < 1e-12 {
            return Err(Error::InvalidParameter("intrinsics must be invertible"));
        }
        if !is_rigid(&self.t_l) || !is_rigid(&self.t_r) {
            return Err(Error::InvalidParameter("camera transforms must be rigid"));
        }
        Ok(())
    }

    /// The same rig seen from the right camera.
    pub fn reversed(&self) -> Self {
        Self { p0: self.p1, p1: self.p0, t_l: self.t_r, t_r: self.t_l }
    }
}

/// Per-pixel depth; values that are not finite and positive are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter("depth buffer size mismatch"));
        }
        Ok(Self { width, height, data })
    }

    /// Depth of the pixel containing `p` (pixel `(x, y)` covers
    /// `[x, x + 1) x [y, y + 1)`).
    pub fn at(&self, p: Point2) -> Option<f64> {
        if !p.is_finite() || p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let (x, y) = (libm::floor(p.x) as usize, libm::floor(p.y) as usize);
        if x >= self.width || y >= self.height {
            return None;
        }
        let d = self.data[y * self.width + x] as f64;
        (d.is_finite() && d > 0.0).then_some(d)
    }
}

/// Back-projects `x` at its depth through the left camera and projects the
/// 3-D point into the right camera.
pub fn project_center(x: Point2, rig: &CameraRig, depth: &DepthMap) -> Result<Point2> {
    let d = depth.at(x).ok_or(Error::NoProjection)?;
    project_with_depth(x, d, rig)
}

pub fn project_with_depth(x: Point2, d: f64, rig: &CameraRig) -> Result<Point2> {
    let k_inv = rig.p0.try_inverse().ok_or(Error::InvalidParameter("intrinsics must be invertible"))?;
    let ray = k_inv * Vector3::new(x.x, x.y, 1.0);
    let cam = ray * d;
    let world = rig.t_l * Vector4::new(cam.x, cam.y, cam.z, 1.0);
    let to_right = rig.t_r.try_inverse().ok_or(Error::InvalidParameter("transform must be invertible"))?;
    let r = to_right * world;
    let img = rig.p1 * Vector3::new(r.x, r.y, r.z);
    if !(img.z > 0.0) {
        return Err(Error::BehindCamera);
    }
    Ok(Point2::new(img.x / img.z, img.y / img.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Depth,
    Similarity,
}

/// Binary `m x n` ground-truth relation with per-entry provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtMatrix {
    m: usize,
    n: usize,
    entries: Vec<Option<Provenance>>,
}

impl GtMatrix {
    pub fn new(m: usize, n: usize) -> Self {
        Self { m, n, entries: vec![None; m * n] }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.n + j].is_some()
    }

    pub fn provenance(&self, i: usize, j: usize) -> Option<Provenance> {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Option<Provenance>) {
        self.entries[i * self.n + j] = p;
    }

    /// Set entries, row-major.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.m).flat_map(|i| (0..self.n).filter(move |&j| self.get(i, j)).map(move |j| (i, j))).collect()
    }

    pub fn count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn transposed(&self) -> Self {
        let mut t = Self::new(self.n, self.m);
        for (i, j) in self.pairs() {
            t.set(j, i, self.provenance(i, j));
        }
        t
    }
}

/// `M[i][j] = 1` iff the centroid of source `i` reprojects within `lambda_px`
/// of target `j`'s centroid and target `j`'s centroid reprojects (right to
/// left, with the right depth map) within `lambda_px` of source `i`'s.
pub fn gt_from_depth(
    src: &[Polygon],
    tgt: &[Polygon],
    rig: &CameraRig,
    depth_l: &DepthMap,
    depth_r: &DepthMap,
    lambda_px: f64,
) -> GtMatrix {
    let rev = rig.reversed();
    let cs: Vec<Point2> = src.iter().map(Polygon::centroid).collect();
    let ct: Vec<Point2> = tgt.iter().map(Polygon::centroid).collect();
    let fwd: Vec<Option<Point2>> = cs.iter().map(|&c| project_center(c, rig, depth_l).ok()).collect();
    let bwd: Vec<Option<Point2>> = ct.iter().map(|&c| project_center(c, &rev, depth_r).ok()).collect();
    let mut m = GtMatrix::new(src.len(), tgt.len());
    for i in 0..src.len() {
        let Some(pi) = fwd[i] else { continue };
        for j in 0..tgt.len() {
            let Some(pj) = bwd[j] else { continue };
            if pi.dist(ct[j]) <= lambda_px && pj.dist(cs[i]) <= lambda_px {
                m.set(i, j, Some(Provenance::Depth));
            }
        }
    }
    m
}

/// Weights of the five-term similarity. `beta = kappa = (1 - alpha) / 8` and
/// `delta = 3 (1 - alpha) / 4`, so the four weights sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtWeights {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub delta: f64,
    /// Centroid-distance scale of the Gaussian penalty, pixels.
    pub sigma: f64,
    pub abs_threshold: f64,
    /// Required lead of the best score over the runner-up.
    pub confidence_margin: f64,
}

impl GtWeights {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter("alpha must be in [0, 1]"));
        }
        let rest = 1.0 - alpha;
        let w = Self {
            alpha,
            beta: rest / 8.0,
            kappa: rest / 8.0,
            delta: 3.0 * rest / 4.0,
            sigma: 40.0,
            abs_threshold: 0.3,
            confidence_margin: 0.1,
        };
        assert!((w.sum() - 1.0).abs() < 1e-12, "similarity weights must sum to 1");
        Ok(w)
    }

    pub fn sum(&self) -> f64 {
        self.alpha + self.beta + self.kappa + self.delta
    }
}

impl Default for GtWeights {
    fn default() -> Self {
        Self::new(0.5).expect("0.5 is admissible")
    }
}

/// `α IoU + β/(1+H) + κ/(1+C) + δ AreaRatio + D` with IoU, Hausdorff and
/// Chamfer on the projected source, area ratio on the original source, and
/// `D = exp(-d²/2σ²) - 1` on the centroid distance.
pub fn gt_similarity(gi_projected: &Polygon, gj: &Polygon, gi_original: &Polygon, w: &GtWeights) -> Result<f64> {
    let iou = polygon_iou(gi_projected.vertices(), gj.vertices())?;
    let h = hausdorff_discrete(gi_projected.vertices(), gj.vertices())?;
    let c = chamfer_discrete(gi_projected.vertices(), gj.vertices())?;
    let (ao, aj) = (gi_original.area(), gj.area());
    let ratio = ao.min(aj) / ao.max(aj);
    let d2 = gi_projected.centroid().dist2(gj.centroid());
    let d = libm::exp(-d2 / (2.0 * w.sigma * w.sigma)) - 1.0;
    Ok(w.alpha * iou + w.beta / (1.0 + h) + w.kappa / (1.0 + c) + w.delta * ratio + d)
}

/// Index of the best score if it clears the absolute threshold and leads the
/// runner-up by more than the margin. A lone candidate needs only the
/// absolute threshold.
pub fn accept_best(scores: &[f64], w: &GtWeights) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::NEG_INFINITY;
    for (j, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => second = second.max(s),
            _ => {
                if let Some((_, b)) = best {
                    second = second.max(b);
                }
                best = Some((j, s));
            }
        }
    }
    let (j, s) = best?;
    (s > w.abs_threshold && s - second > w.confidence_margin).then_some(j)
}

/// For each source: project through `t`, score every target and keep the
/// best one passing [`accept_best`].
pub fn gt_match_by_similarity(src: &[Polygon], tgt: &[Polygon], t: &Homography3x3, w: &GtWeights) -> GtMatrix {
    let mut m = GtMatrix::new(src.len(), tgt.len());
    for (i, gi) in src.iter().enumerate() {
        let Ok(proj) = gi.map(|p| t.apply(p)) else { continue };
        let scores: Vec<f64> =
            tgt.iter().map(|gj| gt_similarity(&proj, gj, gi, w).unwrap_or(f64::NEG_INFINITY)).collect();
        if let Some(j) = accept_best(&scores, w) {
            m.set(i, j, Some(Provenance::Similarity));
        }
    }
    m
}

//! Robust two-view geometry from keypoint matches.
//!
//! A fundamental matrix is fitted first; matches near their epipolar lines
//! feed the global homography, the rest are kept (not discarded) for the later
//! polygon-level stages.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{apply_homography, epipolar_distance, sampson_distance, Fundamental3x3, Homography3x3, Point2};
use crate::vectorize::KeypointMatch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig {
    /// Epipolar gate at full resolution, pixels.
    pub epipolar_eps: f64,
    pub max_iterations: usize,
    /// Sampson distance (F) / symmetric transfer error (H) threshold, pixels.
    pub inlier_threshold: f64,
    pub seed: u64,
    /// Early-exit confidence for the adaptive iteration bound.
    pub confidence: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self { epipolar_eps: 3.0, max_iterations: 2000, inlier_threshold: 2.0, seed: 0, confidence: 0.999 }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epipolar_eps > 0.0) {
            return Err(Error::InvalidParameter("epipolar_eps must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1"));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidParameter("inlier_threshold must be > 0"));
        }
        Ok(())
    }
}

/// Mismatch filter used for the global models. [`Consensus`] is the default;
/// any estimator honoring the same contract can be swapped in.
pub trait RobustFilter {
    fn fundamental(&self, matches: &[KeypointMatch]) -> Result<(Fundamental3x3, Vec<usize>)>;
    fn homography(&self, matches: &[KeypointMatch]) -> Result<(Homography3x3, Vec<usize>)>;
}

/// Seeded random-sample consensus with a fixed inlier threshold.
#[derive(Debug, Clone, Copy, Default)]
pub struct Consensus {
    pub cfg: RobustConfig,
}

impl RobustFilter for Consensus {
    fn fundamental(&self, matches: &[KeypointMatch]) -> Result<(Fundamental3x3, Vec<usize>)> {
        estimate_fundamental(matches, &self.cfg)
    }

    fn homography(&self, matches: &[KeypointMatch]) -> Result<(Homography3x3, Vec<usize>)> {
        estimate_homography(matches, &self.cfg)
    }
}

/// Per-match consistency test for gating template matches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// Distance from the right point to its epipolar line.
    Epipolar(Fundamental3x3),
    /// Transfer distance `|H pl - pr|`, for matches that fix no epipolar
    /// geometry (zero baseline, a single plane).
    Planar(Homography3x3),
}

impl Constraint {
    pub fn distance(&self, pl: Point2, pr: Point2) -> f64 {
        match self {
            Constraint::Epipolar(f) => epipolar_distance(f.matrix(), pl, pr),
            Constraint::Planar(h) => h.apply(pl).map_or(f64::INFINITY, |q| q.dist(pr)),
        }
    }

    /// The same constraint for both images scaled by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        match self {
            Constraint::Epipolar(f) => Constraint::Epipolar(f.rescaled(s)),
            Constraint::Planar(h) => Constraint::Planar(h.rescaled(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoViewGeometry {
    /// `None` when the matches are explained by a homography alone.
    pub fundamental: Option<Fundamental3x3>,
    pub homography: Homography3x3,
    /// Inliers of the first-stage model (F, or H in the planar case).
    pub inliers_f: Vec<usize>,
    /// Subset of `inliers_f` within the epipolar gate; used for the homography.
    pub near_epipolar: Vec<usize>,
    /// Everything not in `near_epipolar`; kept for later stages.
    pub retained: Vec<usize>,
}

/// Hartley normalization: centroid to the origin, mean distance sqrt(2).
fn normalizer(points: &[Point2]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = points.iter().map(|p| p.dist(Point2::new(cx, cy))).sum::<f64>() / n;
    let s = if mean > 1e-300 { core::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: Point2) -> Point2 {
    Point2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Right singular vector of the smallest singular value, plus the ratio of
/// the two smallest singular values (near 0 means a unique null direction).
fn null_vector(rows: &[[f64; 9]]) -> Option<([f64; 9], f64)> {
    let n = rows.len().max(9);
    let a = DMatrix::from_fn(n, 9, |r, c| rows.get(r).map_or(0.0, |row| row[c]));
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap_or(core::cmp::Ordering::Equal));
    let (min, second, max) = (order[0], order[1], order[order.len() - 1]);
    if !(sv[max] > 0.0) {
        return None;
    }
    let mut out = [0.0; 9];
    for (c, v) in out.iter_mut().enumerate() {
        *v = vt[(min, c)];
    }
    Some((out, sv[second] / sv[max]))
}

// A minimal sample whose second-smallest singular value is this small (relative
// to the largest) has a multi-dimensional solution space.
const DEGENERATE_RATIO: f64 = 1e-9;

/// Normalized 8-point fit (least squares when more than 8 matches).
pub fn fit_fundamental(pl: &[Point2], pr: &[Point2]) -> Option<Fundamental3x3> {
    if pl.len() < 8 || pl.len() != pr.len() {
        return None;
    }
    let (tl, tr) = (normalizer(pl), normalizer(pr));
    let rows: Vec<[f64; 9]> = pl
        .iter()
        .zip(pr)
        .map(|(&l, &r)| {
            let (a, b) = (transform(&tl, l), transform(&tr, r));
            [b.x * a.x, b.x * a.y, b.x, b.y * a.x, b.y * a.y, b.y, a.x, a.y, 1.0]
        })
        .collect();
    let (f, ratio) = null_vector(&rows)?;
    if ratio < DEGENERATE_RATIO {
        return None;
    }
    let fnorm = Fundamental3x3::new(Matrix3::from_row_slice(&f)).ok()?;
    Fundamental3x3::new(tr.transpose() * fnorm.matrix() * tl).ok()
}

fn collinear(a: Point2, b: Point2, c: Point2) -> bool {
    let scale = a.dist2(b).max(a.dist2(c)).max(b.dist2(c));
    (b - a).cross(c - a).abs() <= 1e-9 * scale
}

fn has_collinear_triple(points: &[Point2]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if collinear(points[i], points[j], points[k]) {
                    return true;
                }
            }
        }
    }
    false
}

fn all_collinear(points: &[Point2]) -> bool {
    let Some(&a) = points.first() else { return true };
    let Some(&b) = points.iter().max_by(|p, q| a.dist2(**p).partial_cmp(&a.dist2(**q)).unwrap()) else {
        return true;
    };
    if a.dist2(b) == 0.0 {
        return true;
    }
    points.iter().all(|&c| collinear(a, b, c))
}

/// Normalized direct linear transform mapping `pl` to `pr`, least squares
/// when more than four correspondences are given. `None` for degenerate
/// (collinear) configurations.
pub fn fit_homography(pl: &[Point2], pr: &[Point2]) -> Option<Homography3x3> {
    if pl.len() < 4 || pl.len() != pr.len() || all_collinear(pl) || all_collinear(pr) {
        return None;
    }
    if pl.len() == 4 && (has_collinear_triple(pl) || has_collinear_triple(pr)) {
        return None;
    }
    let (tl, tr) = (normalizer(pl), normalizer(pr));
    let mut rows = Vec::with_capacity(pl.len() * 2);
    for (&l, &r) in pl.iter().zip(pr) {
        let (a, b) = (transform(&tl, l), transform(&tr, r));
        rows.push([-a.x, -a.y, -1.0, 0.0, 0.0, 0.0, b.x * a.x, b.x * a.y, b.x]);
        rows.push([0.0, 0.0, 0.0, -a.x, -a.y, -1.0, b.y * a.x, b.y * a.y, b.y]);
    }
    let (h, ratio) = null_vector(&rows)?;
    if ratio < DEGENERATE_RATIO {
        return None;
    }
    let hn = Matrix3::from_row_slice(&h);
    let tr_inv = tr.try_inverse()?;
    Homography3x3::new(tr_inv * hn * tl).ok()
}

/// RMS of forward and backward transfer distances.
pub fn symmetric_transfer_error(h: &Homography3x3, h_inv: &Homography3x3, pl: Point2, pr: Point2) -> f64 {
    let fwd = apply_homography(h, pl).map_or(f64::INFINITY, |p| p.dist2(pr));
    let bwd = apply_homography(h_inv, pr).map_or(f64::INFINITY, |p| p.dist2(pl));
    libm::sqrt(0.5 * (fwd + bwd))
}

fn iteration_bound(cfg: &RobustConfig, inlier_ratio: f64, sample_size: i32) -> usize {
    let w = libm::pow(inlier_ratio, sample_size as f64);
    if w >= 1.0 - 1e-15 {
        return 1;
    }
    if w <= 1e-15 {
        return cfg.max_iterations;
    }
    let n = libm::log(1.0 - cfg.confidence) / libm::log(1.0 - w);
    (libm::ceil(n).max(1.0) as usize).min(cfg.max_iterations)
}

/// Generic consensus loop: `fit` on minimal samples, `score` counts inliers.
fn consensus<M: Clone>(
    n: usize,
    sample_size: usize,
    cfg: &RobustConfig,
    fit: impl Fn(&[usize]) -> Option<M>,
    inliers_of: impl Fn(&M) -> Vec<usize>,
) -> Option<(M, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(M, Vec<usize>)> = None;
    let mut bound = cfg.max_iterations;
    let mut iter = 0;
    while iter < bound {
        iter += 1;
        let idx = sample(&mut rng, n, sample_size).into_vec();
        let Some(model) = fit(&idx) else { continue };
        let inl = inliers_of(&model);
        if best.as_ref().is_none_or(|(_, b)| inl.len() > b.len()) {
            bound = bound.min(iteration_bound(cfg, inl.len() as f64 / n as f64, sample_size as i32));
            best = Some((model, inl));
        }
    }
    best
}

fn split(matches: &[KeypointMatch], idx: &[usize]) -> (Vec<Point2>, Vec<Point2>) {
    idx.iter().map(|&i| (matches[i].pl, matches[i].pr)).unzip()
}

pub fn estimate_fundamental(matches: &[KeypointMatch], cfg: &RobustConfig) -> Result<(Fundamental3x3, Vec<usize>)> {
    cfg.validate()?;
    if matches.len() < 8 {
        return Err(Error::InsufficientData { needed: 8, got: matches.len() });
    }
    let inliers_of = |f: &Fundamental3x3| -> Vec<usize> {
        (0..matches.len())
            .filter(|&i| sampson_distance(f.matrix(), matches[i].pl, matches[i].pr) <= cfg.inlier_threshold)
            .collect()
    };
    let fit = |idx: &[usize]| {
        let (l, r) = split(matches, idx);
        fit_fundamental(&l, &r)
    };
    let (model, inl) = consensus(matches.len(), 8, cfg, fit, inliers_of)
        .ok_or(Error::EstimationFailed("no non-degenerate fundamental sample"))?;
    if inl.len() < 8 {
        return Err(Error::EstimationFailed("fewer than 8 fundamental inliers"));
    }
    let refit = fit(&inl).map(|f| {
        let i = inliers_of(&f);
        (f, i)
    });
    Ok(match refit {
        Some((f, i)) if i.len() >= inl.len() => (f, i),
        _ => (model, inl),
    })
}

pub fn estimate_homography(matches: &[KeypointMatch], cfg: &RobustConfig) -> Result<(Homography3x3, Vec<usize>)> {
    cfg.validate()?;
    if matches.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: matches.len() });
    }
    let pl: Vec<Point2> = matches.iter().map(|m| m.pl).collect();
    let pr: Vec<Point2> = matches.iter().map(|m| m.pr).collect();
    if all_collinear(&pl) || all_collinear(&pr) {
        return Err(Error::EstimationFailed("all points collinear"));
    }
    let inliers_of = |h: &Homography3x3| -> Vec<usize> {
        let hi = h.inverse();
        (0..matches.len())
            .filter(|&i| symmetric_transfer_error(h, &hi, matches[i].pl, matches[i].pr) <= cfg.inlier_threshold)
            .collect()
    };
    let fit = |idx: &[usize]| {
        let (l, r) = split(matches, idx);
        fit_homography(&l, &r)
    };
    let (model, inl) = consensus(matches.len(), 4, cfg, fit, inliers_of)
        .ok_or(Error::EstimationFailed("only degenerate homography samples"))?;
    if inl.len() < 4 {
        return Err(Error::EstimationFailed("fewer than 4 homography inliers"));
    }
    let refit = fit(&inl).map(|h| {
        let i = inliers_of(&h);
        (h, i)
    });
    Ok(match refit {
        Some((h, i)) if i.len() >= inl.len() => (h, i),
        _ => (model, inl),
    })
}

/// Partitions match indices into those within `eps` pixels of their epipolar
/// line and the rest.
pub fn filter_near_epipolar(matches: &[KeypointMatch], f: &Fundamental3x3, eps: f64) -> (Vec<usize>, Vec<usize>) {
    (0..matches.len()).partition(|&i| epipolar_distance(f.matrix(), matches[i].pl, matches[i].pr) <= eps)
}

/// Fundamental matrix, epipolar gating and the global homography.
///
/// When no non-degenerate fundamental sample exists but a homography explains
/// at least eight matches, the homography takes over both roles.
pub fn estimate_two_view(
    matches: &[KeypointMatch],
    cfg: &RobustConfig,
    filter: &impl RobustFilter,
) -> Result<TwoViewGeometry> {
    cfg.validate()?;
    let (fundamental, inliers_f) = match filter.fundamental(matches) {
        Ok(fit) => fit,
        Err(e @ Error::EstimationFailed(_)) => return planar_two_view(matches, cfg, filter).ok_or(e),
        Err(e) => return Err(e),
    };
    let subset: Vec<KeypointMatch> = inliers_f.iter().map(|&i| matches[i]).collect();
    let (near_local, _) = filter_near_epipolar(&subset, &fundamental, cfg.epipolar_eps);
    let near_epipolar: Vec<usize> = near_local.iter().map(|&k| inliers_f[k]).collect();
    let retained = complement(matches.len(), &near_epipolar);
    let near_matches: Vec<KeypointMatch> = near_epipolar.iter().map(|&i| matches[i]).collect();
    let (homography, _) = filter.homography(&near_matches)?;
    Ok(TwoViewGeometry { fundamental: Some(fundamental), homography, inliers_f, near_epipolar, retained })
}

fn planar_two_view(matches: &[KeypointMatch], cfg: &RobustConfig, filter: &impl RobustFilter) -> Option<TwoViewGeometry> {
    let (homography, inliers) = filter.homography(matches).ok()?;
    if inliers.len() < 8 {
        return None;
    }
    let gate = Constraint::Planar(homography);
    let near_epipolar: Vec<usize> =
        inliers.iter().copied().filter(|&i| gate.distance(matches[i].pl, matches[i].pr) <= cfg.epipolar_eps).collect();
    let retained = complement(matches.len(), &near_epipolar);
    Some(TwoViewGeometry { fundamental: None, homography, inliers_f: inliers, near_epipolar, retained })
}

fn complement(n: usize, idx: &[usize]) -> Vec<usize> {
    let mut keep = alloc::vec![true; n];
    idx.iter().for_each(|&i| keep[i] = false);
    (0..n).filter(|&i| keep[i]).collect()
}

impl TwoViewGeometry {
    /// Gate for template matches: epipolar when F exists, planar otherwise.
    pub fn constraint(&self) -> Constraint {
        self.fundamental.map_or(Constraint::Planar(self.homography), Constraint::Epipolar)
    }
}

//! Local matcher: shape embeddings, geometric and texture correlation, the
//! piecewise pair cost and the one-to-one polygon assignment.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::assignment::{hungarian, Assignment, CostMatrix};
use crate::geometry::{for_each_span, Grid, Point2, Polygon};
use crate::image::GrayImage;
use crate::pyramid::{local_rectify, ncc_at, supporting_matches, CandidateMatch, CandidateMatrix};
use crate::vectorize::{build_graph, KeypointMatch, PolyGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMatchConfig {
    pub k_neighbors: usize,
    /// Area-term weight ξ.
    pub xi: f64,
    /// Shape-term decay k.
    pub k_scale: f64,
    /// χ above this selects the geometry branch.
    pub gamma: usize,
    /// Pairs with cost at or above ι are dropped.
    pub iota: f64,
    pub ncc_floor: f64,
    /// Minimum supporting matches for local rectification.
    pub rectify_min_pts: usize,
}

impl Default for LocalMatchConfig {
    fn default() -> Self {
        Self { k_neighbors: 4, xi: 6.0, k_scale: 0.1, gamma: 8, iota: 5.0, ncc_floor: 0.5, rectify_min_pts: 4 }
    }
}

impl LocalMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidParameter("k_neighbors must be >= 1"));
        }
        for (v, msg) in [
            (self.xi, "xi must be > 0"),
            (self.k_scale, "k_scale must be > 0"),
            (self.iota, "iota must be > 0"),
            (self.ncc_floor, "ncc_floor must be > 0"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(msg));
            }
        }
        Ok(())
    }
}

/// Row `i` holds vertex `i`'s `k` embedding values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbedding {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
}

fn angle(a: Point2, b: Point2, c: Point2) -> f64 {
    let (u, v) = (a - b, c - b);
    libm::atan2(u.cross(v).abs(), u.dot(v))
}

/// For each vertex and each of its `k` nearest vertices: straight-line
/// distance over along-ring distance, times the summed angles at the
/// vertices strictly between them. The shorter way around the ring is used,
/// forward on ties.
pub fn node_embedding(g: &PolyGraph, k: usize) -> Result<NodeEmbedding> {
    let n = g.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if k == 0 || k > n - 1 {
        return Err(Error::InvalidParameter("k must be in [1, N-1]"));
    }
    let v = &g.vertices;
    let edge: Vec<f64> = (0..n).map(|i| v[i].dist(v[(i + 1) % n])).collect();
    let turn: Vec<f64> = (0..n).map(|i| angle(v[(i + n - 1) % n], v[i], v[(i + 1) % n])).collect();
    let mut rows = Vec::with_capacity(n);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((1..n).map(|off| (v[i].dist(v[(i + off) % n]), off)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // Distances equal up to rounding keep the forward-offset order.
        let mut s = 0;
        while s < order.len() {
            let tol = 1e-9 * order[s].0.max(1e-300);
            let mut e = s + 1;
            while e < order.len() && order[e].0 - order[s].0 <= tol {
                e += 1;
            }
            order[s..e].sort_by_key(|x| x.1);
            s = e;
        }
        let row = order[..k]
            .iter()
            .map(|&(d, off)| {
                let (path, angles) = if off <= n - off {
                    let path: f64 = (0..off).map(|t| edge[(i + t) % n]).sum();
                    let angles: f64 = (1..off).map(|t| turn[(i + t) % n]).sum();
                    (path, angles)
                } else {
                    let back = n - off;
                    let path: f64 = (1..=back).map(|t| edge[(i + n - t) % n]).sum();
                    let angles: f64 = (1..back).map(|t| turn[(i + n - t) % n]).sum();
                    (path, angles)
                };
                d / path * angles
            })
            .collect();
        rows.push(row);
    }
    Ok(NodeEmbedding { k, rows })
}

fn row_distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Minimum-cost node assignment between two ring graphs under Euclidean
/// embedding distances. Returns the total cost β and the node pairs.
pub fn geometric_discrepancy(gi: &PolyGraph, gj: &PolyGraph, k: usize) -> Result<(f64, Assignment)> {
    let limit = gi.len().min(gj.len());
    if k == 0 || limit < 3 || k > limit - 1 {
        return Err(Error::InvalidParameter("k must be in [1, min(Ni, Nj) - 1]"));
    }
    let (ei, ej) = (node_embedding(gi, k)?, node_embedding(gj, k)?);
    let c = CostMatrix::from_fn(gi.len(), gj.len(), |r, s| row_distance(&ei.rows[r], &ej.rows[s]))?;
    let a = hungarian(&c);
    Ok((a.total_cost, a))
}

/// `ξ (1 - |η_i - η_j| / max η) + exp(-k β)`, with `k_neighbors` clamped to
/// what the smaller polygon admits.
pub fn geometric_correlation(gi: &Polygon, gj: &Polygon, cfg: &LocalMatchConfig) -> Result<f64> {
    let (ai, aj) = (gi.area(), gj.area());
    let m = ai.max(aj);
    if !(m > 0.0) {
        return Err(Error::DegeneratePolygon);
    }
    let k = cfg.k_neighbors.min(gi.len().min(gj.len()) - 1);
    let (beta, _) = geometric_discrepancy(&build_graph(gi.vertices())?, &build_graph(gj.vertices())?, k)?;
    Ok(psi_from(ai, aj, beta, cfg))
}

/// The geometric correlation from its ingredients.
pub fn psi_from(area_i: f64, area_j: f64, beta: f64, cfg: &LocalMatchConfig) -> f64 {
    let m = area_i.max(area_j);
    cfg.xi * (1.0 - (area_i - area_j).abs() / m) + libm::exp(-cfg.k_scale * beta)
}

struct Crop {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

fn bbox_crop(p: &Polygon, img: &GrayImage) -> Option<Crop> {
    let b = p.bbox();
    let x0 = libm::floor(b.min.x).max(0.0);
    let y0 = libm::floor(b.min.y).max(0.0);
    let x1 = libm::ceil(b.max.x).min(img.width() as f64);
    let y1 = libm::ceil(b.max.y).min(img.height() as f64);
    (x1 > x0 && y1 > y0).then(|| Crop { x0: x0 as usize, y0: y0 as usize, w: (x1 - x0) as usize, h: (y1 - y0) as usize })
}

/// Crops `p`'s bounding box from `img`, resamples it to `w x h`, and replaces
/// pixels whose centers fall outside `p` with the mean of those inside.
fn masked_patch(img: &GrayImage, p: &Polygon, c: &Crop, w: usize, h: usize) -> GrayImage {
    let patch = img.crop(c.x0, c.y0, c.w, c.h);
    let patch = if (w, h) == (c.w, c.h) { patch } else { patch.resize(w, h) };
    let (sx, sy) = (c.w as f64 / w as f64, c.h as f64 / h as f64);
    // The polygon in resampled-patch pixel units.
    let ring: Vec<Point2> =
        p.vertices().iter().map(|v| Point2::new((v.x - c.x0 as f64) / sx, (v.y - c.y0 as f64) / sy)).collect();
    let mut mask = vec![false; w * h];
    for_each_span(&ring, &Grid::pixels(w, h), |row, c0, c1| mask[row * w + c0..row * w + c1].fill(true));
    let inside: Vec<f32> = patch.data().iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
    if inside.is_empty() {
        return patch;
    }
    let mean = (inside.iter().map(|&v| v as f64).sum::<f64>() / inside.len() as f64) as f32;
    let data = patch.data().iter().zip(&mask).map(|(&v, &m)| if m { v } else { mean }).collect();
    GrayImage::from_vec(w, h, data).expect("same size")
}

/// Zero-offset NCC of the two polygons' masked bounding-box crops, the larger
/// crop resampled to the smaller one's size. Zero variance gives 0.
pub fn texture_correlation(img_l: &GrayImage, img_r: &GrayImage, gi: &Polygon, gj: &Polygon) -> f64 {
    let (Some(ci), Some(cj)) = (bbox_crop(gi, img_l), bbox_crop(gj, img_r)) else {
        return 0.0;
    };
    let (w, h) = if ci.w * ci.h <= cj.w * cj.h { (ci.w, ci.h) } else { (cj.w, cj.h) };
    let a = masked_patch(img_l, gi, &ci, w, h);
    let b = masked_patch(img_r, gj, &cj, w, h);
    ncc_at(&a, &b, 0, 0)
}

/// `1 / (ψ + 1e-5)` when `χ > γ`, else `1 / (max(floor, R) + 1e-5)`.
pub fn matching_cost(psi: f64, r: f64, chi: usize, cfg: &LocalMatchConfig) -> f64 {
    if chi > cfg.gamma {
        1.0 / (psi + 1e-5)
    } else {
        1.0 / (r.max(cfg.ncc_floor) + 1e-5)
    }
}

/// Fills χ, the local homography, ψ, R and ζ for one candidate pair.
pub fn annotate_pair(
    i: usize,
    j: usize,
    gi: &Polygon,
    gj: &Polygon,
    img_l: &GrayImage,
    img_r: &GrayImage,
    matches: &[KeypointMatch],
    cfg: &LocalMatchConfig,
) -> CandidateMatch {
    let support: Vec<KeypointMatch> = supporting_matches(gi, gj, matches).into_iter().map(|k| matches[k]).collect();
    let mut c = CandidateMatch::new(i, j);
    c.chi = support.len();
    let rect = local_rectify(gj, &support, cfg.rectify_min_pts);
    let target = match &rect {
        Some((h, poly)) => {
            c.rectifying_h = Some(*h);
            poly
        }
        None => gj,
    };
    c.psi = geometric_correlation(gi, target, cfg)
        .or_else(|_| geometric_correlation(gi, gj, cfg))
        .unwrap_or(0.0);
    c.r = texture_correlation(img_l, img_r, gi, gj);
    c.zeta = matching_cost(c.psi, c.r, c.chi, cfg);
    c
}

/// Annotates every set entry of `m`, row-major.
pub fn annotate_candidates(
    m: &CandidateMatrix,
    src: &[Polygon],
    tgt: &[Polygon],
    img_l: &GrayImage,
    img_r: &GrayImage,
    matches: &[KeypointMatch],
    cfg: &LocalMatchConfig,
) -> Vec<CandidateMatch> {
    m.pairs().into_iter().map(|(i, j)| annotate_pair(i, j, &src[i], &tgt[j], img_l, img_r, matches, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Geometry,
    Texture,
    /// Known correspondence, not produced by the matcher.
    Reference,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Geometry => "geometry",
            Channel::Texture => "texture",
            Channel::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub src: usize,
    pub tgt: usize,
    pub src_id: String,
    pub tgt_id: String,
    pub zeta: f64,
    pub chi: usize,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Sorted by source index.
    pub pairs: Vec<MatchPair>,
    pub unmatched_sources: Vec<usize>,
    pub unmatched_targets: Vec<usize>,
}

impl MatchResult {
    fn assemble(pairs: Vec<MatchPair>, m: usize, n: usize) -> Self {
        let mut used_s = vec![false; m];
        let mut used_t = vec![false; n];
        for p in &pairs {
            used_s[p.src] = true;
            used_t[p.tgt] = true;
        }
        MatchResult {
            pairs,
            unmatched_sources: (0..m).filter(|&i| !used_s[i]).collect(),
            unmatched_targets: (0..n).filter(|&j| !used_t[j]).collect(),
        }
    }
}

fn pair(c: &CandidateMatch, src: &[Polygon], tgt: &[Polygon], zeta: f64, channel: Channel) -> MatchPair {
    MatchPair {
        src: c.i,
        tgt: c.j,
        src_id: src[c.i].id.clone(),
        tgt_id: tgt[c.j].id.clone(),
        zeta,
        chi: c.chi,
        channel,
    }
}

/// Globally optimal one-to-one selection over the candidate pairs by ζ;
/// non-candidates are forbidden and pairs with `ζ >= ι` are dropped.
pub fn lojogm(cands: &[CandidateMatch], src: &[Polygon], tgt: &[Polygon], cfg: &LocalMatchConfig) -> MatchResult {
    let (m, n) = (src.len(), tgt.len());
    let mut cost = CostMatrix::forbidden(m, n);
    let mut index = vec![usize::MAX; m * n];
    for (k, c) in cands.iter().enumerate() {
        if c.zeta.is_finite() && c.zeta >= 0.0 {
            cost.set(c.i, c.j, c.zeta).expect("finite non-negative cost");
            index[c.i * n + c.j] = k;
        }
    }
    let pairs = hungarian(&cost)
        .pairs
        .into_iter()
        .map(|(i, j)| &cands[index[i * n + j]])
        .filter(|c| c.zeta < cfg.iota)
        .map(|c| {
            let ch = if c.chi > cfg.gamma { Channel::Geometry } else { Channel::Texture };
            pair(c, src, tgt, c.zeta, ch)
        })
        .collect();
    MatchResult::assemble(pairs, m, n)
}

/// Ablation baseline: every source independently takes the candidate with
/// the highest geometric correlation ψ (first on ties). No one-to-one
/// constraint and no cost threshold.
pub fn greedy_match(cands: &[CandidateMatch], src: &[Polygon], tgt: &[Polygon]) -> MatchResult {
    let mut best: Vec<Option<&CandidateMatch>> = vec![None; src.len()];
    for c in cands {
        let slot = &mut best[c.i];
        if slot.is_none_or(|b| c.psi > b.psi) {
            *slot = Some(c);
        }
    }
    let pairs =
        best.into_iter().flatten().map(|c| pair(c, src, tgt, 1.0 / (c.psi + 1e-5), Channel::Geometry)).collect();
    MatchResult::assemble(pairs, src.len(), tgt.len())
}

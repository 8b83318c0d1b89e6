//! Matching-quality metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{for_each_span, Grid, Polygon};
use crate::groundtruth::GtMatrix;
use crate::local_match::MatchResult;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub acr: f64,
    pub sas: f64,
    pub mp: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub num_matches: usize,
    pub elapsed: f64,
}

/// Area coverage ratio: total area of `matched` over total area of `gt_all`.
pub fn acr(matched: &[Polygon], gt_all: &[Polygon]) -> Result<f64> {
    if gt_all.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = gt_all.iter().map(Polygon::area).sum();
    Ok(matched.iter().map(Polygon::area).sum::<f64>() / total)
}

/// Symmetric area score `exp(-z |ln acr|)`; 0 for `acr <= 0`.
pub fn sas(acr_value: f64, z: f64) -> f64 {
    if !(acr_value > 0.0) {
        return 0.0;
    }
    libm::exp(-z * libm::log(acr_value).abs())
}

/// Pixel mask of the union of `polys` on a `width x height` image.
pub fn union_mask(polys: &[Polygon], width: usize, height: usize) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    let grid = Grid::pixels(width, height);
    for p in polys {
        for_each_span(p.vertices(), &grid, |row, c0, c1| mask[row * width + c0..row * width + c1].fill(true));
    }
    mask
}

/// IoU of two pixel masks; 1 when both are empty.
pub fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut uni) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        uni += (x || y) as usize;
    }
    if uni == 0 {
        1.0
    } else {
        inter as f64 / uni as f64
    }
}

/// Mean over the two views of the IoU between the union of predicted and the
/// union of ground-truth regions, rasterized at image resolution.
pub fn matching_precision(
    pred_l: &[Polygon],
    gt_l: &[Polygon],
    pred_r: &[Polygon],
    gt_r: &[Polygon],
    dims_l: (usize, usize),
    dims_r: (usize, usize),
) -> f64 {
    let side = |p: &[Polygon], g: &[Polygon], (w, h): (usize, usize)| mask_iou(&union_mask(p, w, h), &union_mask(g, w, h));
    0.5 * (side(pred_l, gt_l, dims_l) + side(pred_r, gt_r, dims_r))
}

/// A predicted pair counts as correct when the ground truth has it.
pub fn precision_recall_f1(pred: &MatchResult, gt: &GtMatrix) -> Result<(f64, f64, f64)> {
    let correct = count_correct(pred, gt)?;
    let gt_pairs = gt.count();
    let p = if pred.pairs.is_empty() { 0.0 } else { correct as f64 / pred.pairs.len() as f64 };
    let r = if gt_pairs == 0 {
        if pred.pairs.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        correct as f64 / gt_pairs as f64
    };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Ok((p, r, f1))
}

/// Number of predicted pairs present in `gt`; errors when an index is outside
/// the ground-truth index space.
pub fn count_correct(pred: &MatchResult, gt: &GtMatrix) -> Result<usize> {
    let mut n = 0;
    for p in &pred.pairs {
        if p.src >= gt.rows() || p.tgt >= gt.cols() {
            return Err(Error::InvalidParameter("match index outside ground-truth index space"));
        }
        n += gt.get(p.src, p.tgt) as usize;
    }
    Ok(n)
}

/// Source polygons of the predicted pairs that `gt` confirms.
pub fn correct_sources<'a>(pred: &MatchResult, gt: &GtMatrix, src: &'a [Polygon]) -> Vec<&'a Polygon> {
    pred.pairs.iter().filter(|p| p.src < gt.rows() && p.tgt < gt.cols() && gt.get(p.src, p.tgt)).map(|p| &src[p.src]).collect()
}

/// ACR of correctly matched source area over the area of every source
/// polygon that has a ground-truth partner.
pub fn acr_correct(pred: &MatchResult, gt: &GtMatrix, src: &[Polygon]) -> Result<f64> {
    let matched: Vec<Polygon> = correct_sources(pred, gt, src).into_iter().cloned().collect();
    let mut has_gt = vec![false; gt.rows()];
    gt.pairs().into_iter().for_each(|(i, _)| has_gt[i] = true);
    let gt_all: Vec<Polygon> = src.iter().zip(&has_gt).filter(|(_, &h)| h).map(|(p, _)| p.clone()).collect();
    acr(&matched, &gt_all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::local_match::{Channel, MatchPair};

    fn rect(x: f64, y: f64, w: f64, h: f64) -> Polygon {
        Polygon::new(vec![Point2::new(x, y), Point2::new(x + w, y), Point2::new(x + w, y + h), Point2::new(x, y + h)])
            .unwrap()
    }

    #[test]
    fn acr_examples() {
        let gt = vec![rect(0.0, 0.0, 4.0, 4.0), rect(10.0, 0.0, 4.0, 4.0)];
        assert_eq!(acr(&gt, &gt).unwrap(), 1.0);
        assert_eq!(acr(&[], &gt).unwrap(), 0.0);
        assert_eq!(acr(&gt[..1], &gt).unwrap(), 0.5);
        assert_eq!(acr(&gt, &[]), Err(Error::EmptyInput));
    }

    #[test]
    fn sas_examples() {
        assert_eq!(sas(1.0, 5.0), 1.0);
        assert!((sas(0.5, 5.0) - 0.03125).abs() < 1e-12);
        assert!((sas(2.0, 5.0) - 0.03125).abs() < 1e-12);
        assert_eq!(sas(0.0, 5.0), 0.0);
    }

    #[test]
    fn mp_examples() {
        let gt = vec![rect(2.0, 2.0, 4.0, 4.0)];
        let dims = (16, 16);
        assert_eq!(matching_precision(&gt, &gt, &gt, &gt, dims, dims), 1.0);
        assert_eq!(matching_precision(&[], &gt, &[], &gt, dims, dims), 0.0);
        assert_eq!(matching_precision(&[], &[], &[], &[], dims, dims), 1.0);
        let pred = vec![rect(2.0, 2.0, 4.0, 4.0), rect(8.0, 8.0, 4.0, 4.0)];
        assert_eq!(matching_precision(&pred, &gt, &pred, &gt, dims, dims), 0.5);
    }

    fn result(pairs: &[(usize, usize)]) -> MatchResult {
        MatchResult {
            pairs: pairs
                .iter()
                .map(|&(s, t)| MatchPair {
                    src: s,
                    tgt: t,
                    src_id: alloc::format!("{s}"),
                    tgt_id: alloc::format!("{t}"),
                    zeta: 1.0,
                    chi: 0,
                    channel: Channel::Texture,
                })
                .collect(),
            ..Default::default()
        }
    }

    fn diag_gt(n: usize) -> GtMatrix {
        let mut g = GtMatrix::new(n, n);
        (0..n).for_each(|i| g.set(i, i, Some(crate::groundtruth::Provenance::Depth)));
        g
    }

    #[test]
    fn prf_examples() {
        let g5 = diag_gt(5);
        assert_eq!(precision_recall_f1(&result(&[(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]), &g5).unwrap(), (1.0, 1.0, 1.0));
        let g4 = diag_gt(4);
        assert_eq!(precision_recall_f1(&result(&[(0, 0), (1, 1), (2, 2), (3, 0)]), &g4).unwrap(), (0.75, 0.75, 0.75));
        assert_eq!(precision_recall_f1(&result(&[]), &g4).unwrap(), (0.0, 0.0, 0.0));
        assert!(precision_recall_f1(&result(&[(9, 0)]), &g4).is_err());
    }
}

//! Global matcher: Gaussian pyramids, NCC template search from coarse to fine,
//! coarse candidate relation, keypoint support counting and local
//! rectification.

use alloc::vec;
use alloc::vec::Vec;

use crate::epipolar::{fit_homography, Constraint};
use crate::geometry::{Homography3x3, Point2, Polygon};
use crate::image::GrayImage;
use crate::vectorize::KeypointMatch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidConfig {
    pub factor: usize,
    /// A level whose smaller side is below this is the last one.
    pub stop_dim: usize,
    pub sigma: f64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self { factor: 3, stop_dim: 200, sigma: 1.0 }
    }
}

/// Level 0 is full resolution. Pixel `x` of level `l` sits at level-0 pixel
/// `factor^l * x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    pub levels: Vec<GrayImage>,
    pub factor: usize,
}

impl ImagePyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    /// `factor^level` as a real.
    pub fn scale(&self, level: usize) -> f64 {
        libm::pow(self.factor as f64, level as f64)
    }
}

fn downsample(img: &GrayImage, factor: usize) -> GrayImage {
    let w = img.width().div_ceil(factor);
    let h = img.height().div_ceil(factor);
    GrayImage::from_fn(w, h, |x, y| img.get(x * factor, y * factor))
}

/// Blur-and-subsample levels; see [`level_count`] for how many.
pub fn build_pyramid(img: &GrayImage, cfg: &PyramidConfig) -> Result<ImagePyramid> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidParameter("image must be non-empty"));
    }
    if cfg.factor < 2 {
        return Err(Error::InvalidParameter("pyramid factor must be >= 2"));
    }
    let n = level_count(img.width(), img.height(), cfg);
    let mut levels = vec![img.clone()];
    while levels.len() < n {
        let last = levels.last().expect("non-empty");
        let next = downsample(&last.gaussian_blur(cfg.sigma), cfg.factor);
        levels.push(next);
    }
    Ok(ImagePyramid { levels, factor: cfg.factor })
}

/// Levels for a `w x h` image: keep subsampling while `min(w, h) / factor^l`
/// (real division) is at least `stop_dim`. Nested floor division gives the
/// same comparison exactly.
pub fn level_count(w: usize, h: usize, cfg: &PyramidConfig) -> usize {
    let (mut w, mut h, mut n) = (w, h, 1);
    while w.min(h) >= cfg.stop_dim && w.min(h) >= cfg.factor {
        w /= cfg.factor;
        h /= cfg.factor;
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccMatch {
    /// Offset of the template's top-left corner inside the search patch.
    pub dx: usize,
    pub dy: usize,
    pub score: f64,
}

/// Mean-centered normalized cross-correlation at a single alignment.
/// Zero variance on either side scores 0.
pub fn ncc_at(template: &GrayImage, search: &GrayImage, ox: usize, oy: usize) -> f64 {
    let (tw, th) = (template.width(), template.height());
    let n = (tw * th) as f64;
    let (mut st, mut ss, mut stt, mut sss, mut sts) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for y in 0..th {
        let trow = &template.data()[y * tw..(y + 1) * tw];
        let srow = &search.data()[(oy + y) * search.width() + ox..(oy + y) * search.width() + ox + tw];
        for (&t, &s) in trow.iter().zip(srow) {
            let (t, s) = (t as f64, s as f64);
            st += t;
            ss += s;
            stt += t * t;
            sss += s * s;
            sts += t * s;
        }
    }
    let vt = stt - st * st / n;
    let vs = sss - ss * ss / n;
    let cov = sts - st * ss / n;
    let scale = 1e-12 * (stt.max(sss)).max(1e-300);
    if vt <= scale || vs <= scale {
        return 0.0;
    }
    (cov / libm::sqrt(vt * vs)).clamp(-1.0, 1.0)
}

/// Best alignment of `template` inside `search`; ties go to the smallest
/// `(dy, dx)`.
pub fn ncc_match(template: &GrayImage, search: &GrayImage) -> Result<NccMatch> {
    if template.width() > search.width() || template.height() > search.height() {
        return Err(Error::TemplateTooLarge);
    }
    if template.width() == 0 || template.height() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut best = NccMatch { dx: 0, dy: 0, score: f64::NEG_INFINITY };
    for dy in 0..=search.height() - template.height() {
        for dx in 0..=search.width() - template.width() {
            let s = ncc_at(template, search, dx, dy);
            if s > best.score {
                best = NccMatch { dx, dy, score: s };
            }
        }
    }
    Ok(best)
}

/// Square window of odd side `size` centered on `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchWindow {
    pub center: Point2,
    pub size: usize,
}

impl SearchWindow {
    pub fn new(center: Point2, size: usize) -> Result<Self> {
        if size < 3 || size % 2 == 0 {
            return Err(Error::InvalidParameter("window size must be odd and >= 3"));
        }
        if !center.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self { center, size })
    }

    /// Closed containment test `|x - cx| <= size/2` and likewise for y.
    pub fn contains(&self, p: Point2) -> bool {
        let h = self.size as f64 / 2.0;
        (p.x - self.center.x).abs() <= h && (p.y - self.center.y).abs() <= h
    }
}

/// Integer pixel rectangle clipped to an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

/// `size x size` pixels whose center pixel is the one nearest `c`, clipped to
/// a `width x height` image. `None` when less than `min_fraction` survives.
fn clipped_rect(c: Point2, size: usize, width: usize, height: usize, min_fraction: f64) -> Option<Rect> {
    if !c.is_finite() {
        return None;
    }
    let half = (size / 2) as f64;
    let x0 = libm::round(c.x) - half;
    let y0 = libm::round(c.y) - half;
    let (x1, y1) = (x0 + size as f64, y0 + size as f64);
    let cx0 = x0.max(0.0);
    let cy0 = y0.max(0.0);
    let cx1 = x1.min(width as f64);
    let cy1 = y1.min(height as f64);
    if cx1 <= cx0 || cy1 <= cy0 {
        return None;
    }
    let r = Rect { x0: cx0 as usize, y0: cy0 as usize, w: (cx1 - cx0) as usize, h: (cy1 - cy0) as usize };
    ((r.w * r.h) as f64 >= min_fraction * (size * size) as f64).then_some(r)
}

fn crop(img: &GrayImage, r: Rect) -> GrayImage {
    img.crop(r.x0, r.y0, r.w, r.h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Template side φ.
    pub phi: usize,
    /// Search side τ at every pyramid level.
    pub tau: usize,
    /// Search side of the single-level fixed-window baseline.
    pub baseline_window: usize,
    /// Side of the returned level-0 window.
    pub final_window: usize,
    /// Epipolar gate at level 0, pixels; divided by `factor` per level.
    pub epipolar_eps: f64,
    /// Use at most this many levels, counted from level 0.
    pub max_levels: usize,
    /// Clipped windows keeping less than this fraction of their area count as
    /// missing.
    pub min_clip_fraction: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            phi: 15,
            tau: 25,
            baseline_window: 50,
            final_window: 151,
            epipolar_eps: 3.0,
            max_levels: usize::MAX,
            min_clip_fraction: 0.5,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phi < 3 || self.phi % 2 == 0 {
            return Err(Error::InvalidParameter("phi must be odd and >= 3"));
        }
        if self.tau < self.phi {
            return Err(Error::InvalidParameter("tau must be >= phi"));
        }
        if self.baseline_window < self.phi {
            return Err(Error::InvalidParameter("baseline_window must be >= phi"));
        }
        if self.final_window < 3 || self.final_window % 2 == 0 {
            return Err(Error::InvalidParameter("final_window must be odd and >= 3"));
        }
        if !(self.epipolar_eps > 0.0) {
            return Err(Error::InvalidParameter("epipolar_eps must be > 0"));
        }
        if self.max_levels == 0 {
            return Err(Error::InvalidParameter("max_levels must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.min_clip_fraction) {
            return Err(Error::InvalidParameter("min_clip_fraction must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub window: Option<SearchWindow>,
    /// Pixels of target-side search area examined, summed over levels.
    pub visited: usize,
}

/// One template search at a single level. Returns the matched point, which
/// is `c` moved by the integer displacement of the best alignment, and the
/// search area in pixels.
fn match_at_level(
    left: &GrayImage,
    right: &GrayImage,
    c: Point2,
    expected: Point2,
    phi: usize,
    search_side: usize,
    min_fraction: f64,
) -> Option<(Point2, usize)> {
    let t = clipped_rect(c, phi, left.width(), left.height(), min_fraction)?;
    let s = clipped_rect(expected, search_side, right.width(), right.height(), min_fraction)?;
    if t.w > s.w || t.h > s.h {
        return None;
    }
    let m = ncc_match(&crop(left, t), &crop(right, s)).ok()?;
    let dx = (s.x0 + m.dx) as f64 - t.x0 as f64;
    let dy = (s.y0 + m.dy) as f64 - t.y0 as f64;
    Some((Point2::new(c.x + dx, c.y + dy), s.w * s.h))
}

fn inside(p: Point2, img: &GrayImage) -> bool {
    p.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x < img.width() as f64 && p.y < img.height() as f64
}

/// Coarse-to-fine search for the level-0 window around the correspondent of
/// the left point `c`.
///
/// At the top level `c` is mapped through `h` and a τ window there is
/// searched with the φ template around `c`. Each lower level searches a τ
/// window centered on the previous match projected down by `factor`. Every
/// match must satisfy `gate` within `epipolar_eps / factor^level` pixels,
/// plus half a pixel diagonal above level 0 for the integer displacement.
pub fn bidir_pyramid_search(
    pl: &ImagePyramid,
    pr: &ImagePyramid,
    h: &Homography3x3,
    gate: &Constraint,
    c: Point2,
    cfg: &SearchConfig,
) -> SearchOutcome {
    let mut visited = 0;
    let none = |visited| SearchOutcome { window: None, visited };
    if pl.is_empty() || pr.is_empty() || pl.len() != pr.len() || !inside(c, &pl.levels[0]) {
        return none(visited);
    }
    let top = pl.top().min(cfg.max_levels - 1);
    let mut found: Option<Point2> = None;
    for level in (0..=top).rev() {
        let s = pl.scale(level);
        let (left, right) = (&pl.levels[level], &pr.levels[level]);
        let cl = c * (1.0 / s);
        let expected = match found {
            None => match h.rescaled(1.0 / s).apply(cl) {
                Ok(p) if inside(p, right) => p,
                _ => return none(visited),
            },
            Some(prev) => prev * pl.factor as f64,
        };
        let Some((matched, area)) =
            match_at_level(left, right, cl, expected, cfg.phi, cfg.tau, cfg.min_clip_fraction)
        else {
            return none(visited);
        };
        visited += area;
        let quantization = if level > 0 { core::f64::consts::FRAC_1_SQRT_2 } else { 0.0 };
        if gate.rescaled(1.0 / s).distance(cl, matched) > cfg.epipolar_eps / s + quantization {
            return none(visited);
        }
        found = Some(matched);
    }
    let window = found.and_then(|p| SearchWindow::new(p, cfg.final_window).ok());
    SearchOutcome { window, visited }
}

/// Baseline without a pyramid: one `baseline_window` search at level 0
/// around `h(c)`.
pub fn fixed_window_search(
    left: &GrayImage,
    right: &GrayImage,
    h: &Homography3x3,
    gate: &Constraint,
    c: Point2,
    cfg: &SearchConfig,
) -> SearchOutcome {
    let none = |visited| SearchOutcome { window: None, visited };
    if !inside(c, left) {
        return none(0);
    }
    let expected = match h.apply(c) {
        Ok(p) if inside(p, right) => p,
        _ => return none(0),
    };
    let Some((matched, area)) =
        match_at_level(left, right, c, expected, cfg.phi, cfg.baseline_window, cfg.min_clip_fraction)
    else {
        return none(0);
    };
    if gate.distance(c, matched) > cfg.epipolar_eps {
        return none(area);
    }
    SearchOutcome { window: SearchWindow::new(matched, cfg.final_window).ok(), visited: area }
}

/// Binary `m x n` coarse relation; may be many-to-many.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMatrix {
    m: usize,
    n: usize,
    entries: Vec<bool>,
}

impl CandidateMatrix {
    pub fn new(m: usize, n: usize) -> Self {
        Self { m, n, entries: vec![false; m * n] }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.entries[i * self.n + j] = v;
    }

    /// Set entries in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.m).flat_map(|i| (0..self.n).filter(move |&j| self.get(i, j)).map(move |j| (i, j))).collect()
    }

    pub fn count(&self) -> usize {
        self.entries.iter().filter(|&&e| e).count()
    }
}

/// Annotated coarse pair. `psi`, `r` and `zeta` are filled by the local
/// matcher.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMatch {
    pub i: usize,
    pub j: usize,
    /// Deep-spectral factor: supporting keypoint matches.
    pub chi: usize,
    /// Local homography, present only with at least four supporting matches.
    pub rectifying_h: Option<Homography3x3>,
    pub psi: f64,
    pub r: f64,
    pub zeta: f64,
}

impl CandidateMatch {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j, chi: 0, rectifying_h: None, psi: 0.0, r: 0.0, zeta: f64::INFINITY }
    }
}

/// `M[i][j] = 1` iff source `i` has a window containing the centroid of
/// target `j`.
pub fn coarse_candidates(src: &[Polygon], tgt: &[Polygon], windows: &[Option<SearchWindow>]) -> CandidateMatrix {
    assert_eq!(src.len(), windows.len(), "one window slot per source polygon");
    let mut m = CandidateMatrix::new(src.len(), tgt.len());
    let centroids: Vec<Point2> = tgt.iter().map(Polygon::centroid).collect();
    for (i, w) in windows.iter().enumerate() {
        let Some(w) = w else { continue };
        for (j, c) in centroids.iter().enumerate() {
            if w.contains(*c) {
                m.set(i, j, true);
            }
        }
    }
    m
}

/// Indices of matches with the left point in `gi` and the right point in
/// `gj`, boundary inclusive.
pub fn supporting_matches(gi: &Polygon, gj: &Polygon, matches: &[KeypointMatch]) -> Vec<usize> {
    let (bi, bj) = (gi.bbox(), gj.bbox());
    let in_box = |p: Point2, b: crate::geometry::BBox| p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y;
    (0..matches.len())
        .filter(|&k| {
            let m = &matches[k];
            in_box(m.pl, bi) && in_box(m.pr, bj) && gi.contains(m.pl) && gj.contains(m.pr)
        })
        .collect()
}

/// Deep-spectral factor χ: keypoint matches falling inside both polygons.
pub fn deep_spectral_factor(gi: &Polygon, gj: &Polygon, matches: &[KeypointMatch]) -> usize {
    supporting_matches(gi, gj, matches).len()
}

/// With at least `min_pts` supporting matches, fits a local left-to-right
/// homography by least squares and maps `gj` back into the left frame.
/// `None` below the threshold or for degenerate configurations.
pub fn local_rectify(gj: &Polygon, inside: &[KeypointMatch], min_pts: usize) -> Option<(Homography3x3, Polygon)> {
    if inside.len() < min_pts.max(4) {
        return None;
    }
    let l: Vec<Point2> = inside.iter().map(|m| m.pl).collect();
    let r: Vec<Point2> = inside.iter().map(|m| m.pr).collect();
    let h = fit_homography(&l, &r)?;
    let back = h.inverse();
    let rect = gj.map(|p| back.apply(p)).ok()?;
    Some((h, rect.with_id(gj.id.clone()).with_label(gj.label)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let mut v = (x as u32).wrapping_mul(73856093) ^ (y as u32).wrapping_mul(19349663) ^ seed;
            v ^= v >> 13;
            v = v.wrapping_mul(0x5bd1e995);
            v ^= v >> 15;
            (v % 256) as f32
        })
    }

    #[test]
    fn level_counts() {
        let cfg = PyramidConfig::default();
        assert_eq!(level_count(5750, 3750, &cfg), 4);
        assert_eq!(level_count(960, 540, &cfg), 2);
        assert_eq!(level_count(150, 150, &cfg), 1);
        let p = build_pyramid(&GrayImage::new(960, 540), &cfg).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p.levels[1].width(), p.levels[1].height()), (320, 180));
    }

    #[test]
    fn ncc_examples() {
        let s = noise(30, 20, 1);
        let t = s.crop(7, 4, 9, 9);
        let m = ncc_match(&t, &s).unwrap();
        assert_eq!((m.dx, m.dy), (7, 4));
        assert!((m.score - 1.0).abs() < 1e-9);

        let lin = GrayImage::from_fn(9, 9, |x, y| 2.5 * t.get(x, y) + 7.0);
        assert!((ncc_match(&t, &lin).unwrap().score - 1.0).abs() < 1e-9);
        let neg = GrayImage::from_fn(9, 9, |x, y| -t.get(x, y));
        assert!((ncc_match(&t, &neg).unwrap().score + 1.0).abs() < 1e-9);

        let flat = GrayImage::from_fn(9, 9, |_, _| 3.0);
        assert_eq!(ncc_match(&t, &flat).unwrap().score, 0.0);
        assert_eq!(ncc_match(&s, &t), Err(Error::TemplateTooLarge));
    }

    #[test]
    fn ncc_ties_prefer_smallest_offset() {
        let t = GrayImage::from_fn(3, 3, |x, _| x as f32);
        let s = GrayImage::from_fn(9, 5, |x, _| (x % 3) as f32);
        let m = ncc_match(&t, &s).unwrap();
        assert_eq!((m.dx, m.dy), (0, 0));
    }

    #[test]
    fn window_containment() {
        let w = SearchWindow::new(Point2::new(10.0, 10.0), 5).unwrap();
        assert!(w.contains(Point2::new(12.5, 7.5)));
        assert!(!w.contains(Point2::new(12.6, 10.0)));
        assert!(SearchWindow::new(Point2::new(0.0, 0.0), 4).is_err());
    }

    #[test]
    fn candidates_many_to_many() {
        let sq = |x: f64, y: f64| {
            Polygon::new(vec![
                Point2::new(x, y),
                Point2::new(x + 2.0, y),
                Point2::new(x + 2.0, y + 2.0),
                Point2::new(x, y + 2.0),
            ])
            .unwrap()
        };
        let src = vec![sq(0.0, 0.0), sq(10.0, 0.0), sq(20.0, 0.0)];
        let tgt = vec![sq(0.0, 0.0), sq(4.0, 0.0)];
        let w = |x| Some(SearchWindow::new(Point2::new(x, 1.0), 9).unwrap());
        let m = coarse_candidates(&src, &tgt, &[w(3.0), w(1.0), None]);
        assert_eq!(m.pairs(), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert!(!m.get(2, 0) && !m.get(2, 1));
    }

    #[test]
    fn rectify_needs_four_points() {
        let sq = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(10.0, 10.0),
            Point2::new(0.0, 10.0),
        ])
        .unwrap();
        let pts: Vec<KeypointMatch> = [(1.0, 1.0), (8.0, 2.0), (5.0, 9.0)]
            .iter()
            .map(|&(x, y)| KeypointMatch::new(Point2::new(x, y), Point2::new(x + 3.0, y), 1.0))
            .collect();
        assert!(local_rectify(&sq, &pts, 4).is_none());
    }
}

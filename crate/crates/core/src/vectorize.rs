//! Raster instance masks to polygons and ring graphs.
//!
//! Contours follow pixel boundaries, so a traced polygon has integer corner
//! coordinates and its area equals the component's pixel count (before
//! simplification, holes ignored).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{douglas_peucker, polygon_area, Point2, Polygon};
use crate::{Error, Result};

pub const DEFAULT_DP_EPS: f64 = 1.5;
pub const DEFAULT_MIN_AREA: f64 = 50.0;

/// Per-pixel instance ids, 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("label image dimensions must be >= 1"));
        }
        if labels.len() != width * height {
            return Err(Error::InvalidParameter("label buffer size mismatch"));
        }
        Ok(Self { width, height, labels })
    }

    pub fn blank(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u32) {
        self.labels[y * self.width + x] = label;
    }
}

/// 4-connected component, pixels in raster order of discovery.
struct Component {
    label: u32,
    pixels: Vec<(usize, usize)>,
}

fn components(img: &LabelImage) -> Vec<Component> {
    let (w, h) = (img.width, img.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = Vec::new();
    for start in 0..w * h {
        let label = img.labels[start];
        if label == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.clear();
        queue.push(start);
        let mut pixels = Vec::new();
        let mut head = 0;
        while head < queue.len() {
            let idx = queue[head];
            head += 1;
            let (x, y) = (idx % w, idx / w);
            pixels.push((x, y));
            let mut visit = |n: usize| {
                if !seen[n] && img.labels[n] == label {
                    seen[n] = true;
                    queue.push(n);
                }
            };
            if x > 0 {
                visit(idx - 1);
            }
            if x + 1 < w {
                visit(idx + 1);
            }
            if y > 0 {
                visit(idx - w);
            }
            if y + 1 < h {
                visit(idx + w);
            }
        }
        out.push(Component { label, pixels });
    }
    // Raster discovery order within a label, labels ascending.
    out.sort_by_key(|c| c.label);
    out
}

// Direction bits: +x, +y, -x, -y.
const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Traces the outer boundary of a component with the interior on the left
/// (positive shoelace area). At pinch corners the tracer turns right, which
/// keeps diagonally touching pixels inside one outer ring.
fn trace_outer(comp: &Component) -> Vec<Point2> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &(x, y) in &comp.pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut inside = vec![false; bw * bh];
    for &(x, y) in &comp.pixels {
        inside[(y - y0) * bw + (x - x0)] = true;
    }
    let filled = |x: i64, y: i64| -> bool {
        x >= 0 && y >= 0 && (x as usize) < bw && (y as usize) < bh && inside[y as usize * bw + x as usize]
    };
    let cw = bw + 1;
    let mut out_edges = vec![0u8; cw * (bh + 1)];
    for py in 0..bh as i64 {
        for px in 0..bw as i64 {
            if !filled(px, py) {
                continue;
            }
            let mut add = |vx: i64, vy: i64, d: u8| out_edges[vy as usize * cw + vx as usize] |= 1 << d;
            if !filled(px, py - 1) {
                add(px, py, 0);
            }
            if !filled(px + 1, py) {
                add(px + 1, py, 1);
            }
            if !filled(px, py + 1) {
                add(px + 1, py + 1, 2);
            }
            if !filled(px - 1, py) {
                add(px, py + 1, 3);
            }
        }
    }
    // Topmost row, leftmost pixel: its top edge is on the outer boundary.
    let &(sx, sy) = comp.pixels.iter().min_by_key(|&&(x, y)| (y, x)).expect("non-empty");
    let start = ((sx - x0) as i64, (sy - y0) as i64);
    let mut pos = start;
    let mut corners = Vec::new();
    let mut prev_dir = usize::MAX;
    loop {
        let slot = &mut out_edges[pos.1 as usize * cw + pos.0 as usize];
        // Preference relative to the incoming direction: right, straight, left.
        let choice = if prev_dir == usize::MAX {
            0
        } else {
            [(prev_dir + 3) % 4, prev_dir, (prev_dir + 1) % 4]
                .into_iter()
                .find(|d| *slot & (1 << d) != 0)
                .expect("boundary edges form closed loops")
        };
        *slot &= !(1 << choice);
        let dir = choice;
        if dir != prev_dir {
            corners.push(Point2::new((pos.0 as usize + x0) as f64, (pos.1 as usize + y0) as f64));
        }
        prev_dir = dir;
        pos = (pos.0 + DIRS[dir].0, pos.1 + DIRS[dir].1);
        if pos == start {
            break;
        }
    }
    corners
}

fn clean_ring(mut ring: Vec<Point2>) -> Vec<Point2> {
    ring.dedup();
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

/// One CCW polygon per 4-connected instance region with at least `min_area`
/// pixels, simplified with Douglas–Peucker at `dp_eps`. Ordered by
/// (label, component); a label split into several components gets ids
/// `"{label}-{k}"`, otherwise the id is the label itself.
pub fn masks_to_polygons(img: &LabelImage, dp_eps: f64, min_area: f64) -> Result<Vec<Polygon>> {
    if !dp_eps.is_finite() || dp_eps < 0.0 {
        return Err(Error::InvalidParameter("dp_eps must be finite and >= 0"));
    }
    let comps = components(img);
    let mut out = Vec::new();
    let mut i = 0;
    while i < comps.len() {
        let label = comps[i].label;
        let group_end = comps[i..].iter().position(|c| c.label != label).map_or(comps.len(), |p| p + i);
        let multi = group_end - i > 1;
        for (k, comp) in comps[i..group_end].iter().enumerate() {
            if (comp.pixels.len() as f64) < min_area {
                continue;
            }
            let traced = trace_outer(comp);
            let simplified = clean_ring(douglas_peucker(&traced, dp_eps)?);
            let ring = if simplified.len() >= 3 && polygon_area(&simplified).is_ok() {
                simplified
            } else {
                traced
            };
            let id = if multi { format!("{label}-{k}") } else { format!("{label}") };
            out.push(Polygon::new(ring)?.with_id(id).with_label(label));
        }
        i = group_end;
    }
    Ok(out)
}

/// One externally produced keypoint correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointMatch {
    pub pl: Point2,
    pub pr: Point2,
    pub score: f64,
}

impl KeypointMatch {
    pub fn new(pl: Point2, pr: Point2, score: f64) -> Self {
        Self { pl, pr, score }
    }
}

/// Ring graph of a polygon: vertex `i` is joined to `i + 1` and the last
/// vertex to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyGraph {
    pub vertices: Vec<Point2>,
    pub edges: Vec<(usize, usize)>,
}

impl PolyGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertices.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

pub fn build_graph(ring: &[Point2]) -> Result<PolyGraph> {
    polygon_area(ring)?;
    let n = ring.len();
    let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Ok(PolyGraph { vertices: ring.to_vec(), edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{for_each_span, Grid};

    fn paint(img: &mut LabelImage, x0: usize, y0: usize, w: usize, h: usize, label: u32) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                img.set(x, y, label);
            }
        }
    }

    #[test]
    fn blank_gives_nothing() {
        let img = LabelImage::blank(10, 10).unwrap();
        assert!(masks_to_polygons(&img, 1.5, 0.0).unwrap().is_empty());
    }

    #[test]
    fn block_area_is_pixel_count() {
        let mut img = LabelImage::blank(10, 10).unwrap();
        paint(&mut img, 3, 2, 4, 4, 7);
        let polys = masks_to_polygons(&img, 0.0, 0.0).unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].area(), 16.0);
        assert_eq!(polys[0].len(), 4);
        assert_eq!(polys[0].id, "7");
        assert_eq!(polys[0].label, 7);
    }

    #[test]
    fn distinct_labels_separate() {
        let mut img = LabelImage::blank(20, 10).unwrap();
        paint(&mut img, 1, 1, 4, 4, 1);
        paint(&mut img, 10, 3, 5, 5, 2);
        let polys = masks_to_polygons(&img, 1.5, 0.0).unwrap();
        assert_eq!(polys.len(), 2);
        assert_eq!(polys[1].area(), 25.0);
    }

    #[test]
    fn split_label_gets_suffixed_ids() {
        let mut img = LabelImage::blank(20, 10).unwrap();
        paint(&mut img, 1, 1, 4, 4, 3);
        paint(&mut img, 10, 3, 5, 5, 3);
        let ids: Vec<_> = masks_to_polygons(&img, 1.5, 0.0).unwrap().into_iter().map(|p| p.id).collect();
        assert_eq!(ids, ["3-0", "3-1"]);
    }

    #[test]
    fn min_area_filters() {
        let mut img = LabelImage::blank(20, 10).unwrap();
        paint(&mut img, 1, 1, 2, 2, 1);
        paint(&mut img, 10, 3, 8, 7, 2);
        let polys = masks_to_polygons(&img, 1.5, 50.0).unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].label, 2);
    }

    #[test]
    fn holes_dropped_and_pinch_kept() {
        let mut img = LabelImage::blank(12, 12).unwrap();
        paint(&mut img, 2, 2, 6, 6, 1);
        paint(&mut img, 4, 4, 2, 2, 0);
        let polys = masks_to_polygons(&img, 0.0, 0.0).unwrap();
        assert_eq!(polys[0].area(), 36.0);

        // Two lobes touching at one corner, joined through a long arm.
        let mut img = LabelImage::blank(12, 12).unwrap();
        paint(&mut img, 1, 1, 3, 3, 1);
        paint(&mut img, 4, 4, 3, 3, 1);
        paint(&mut img, 7, 4, 2, 1, 1);
        paint(&mut img, 8, 0, 1, 4, 1);
        paint(&mut img, 1, 0, 8, 1, 1);
        let polys = masks_to_polygons(&img, 0.0, 0.0).unwrap();
        assert_eq!(polys.len(), 1);
        let mut count = 0;
        for_each_span(polys[0].vertices(), &Grid::pixels(12, 12), |_, a, b| count += b - a);
        let pixels = img.labels().iter().filter(|&&l| l == 1).count();
        assert!(count >= pixels);
    }

    #[test]
    fn staircase_is_simplified() {
        // A right triangle rasterized as a staircase.
        let mut img = LabelImage::blank(40, 40).unwrap();
        for y in 0..30 {
            for x in 0..=y {
                img.set(x + 5, y + 5, 1);
            }
        }
        let rough = masks_to_polygons(&img, 0.0, 0.0).unwrap();
        let smooth = masks_to_polygons(&img, 1.5, 0.0).unwrap();
        assert!(smooth[0].len() < rough[0].len());
        assert!(smooth[0].len() <= 5);
    }

    #[test]
    fn graph_is_a_ring() {
        let sq = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0), Point2::new(0.0, 1.0)];
        let g = build_graph(&sq).unwrap();
        assert_eq!((g.len(), g.edges.len()), (4, 4));
        assert!(g.degrees().iter().all(|&d| d == 2));
        let g = build_graph(&sq[..3]).unwrap();
        assert_eq!((g.len(), g.edges.len()), (3, 3));
        assert!(build_graph(&[Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)]).is_err());
    }
}

//! Planar geometry primitives shared by every stage.
//!
//! Rings are stored counter-clockwise, meaning a positive shoelace sum in raw
//! image coordinates (x right, y down). Functions that take a bare `&[Point2]`
//! validate on entry; [`Polygon`] carries an already validated ring.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(self, other: Point2) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn dist2(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned bounding box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point2,
    pub max: Point2,
}

impl BBox {
    pub fn of(points: &[Point2]) -> Option<BBox> {
        let first = *points.first()?;
        let mut b = BBox { min: first, max: first };
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn union(self, o: BBox) -> BBox {
        BBox {
            min: Point2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn intersects(self, o: BBox) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    pub fn width(self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(self) -> f64 {
        self.max.y - self.min.y
    }
}

/// A validated simple ring: at least three vertices, no repeated consecutive
/// vertex, strictly positive area (counter-clockwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub id: String,
    /// Source instance label, 0 when the polygon did not come from a mask.
    pub label: u32,
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        validate_ring(&vertices)?;
        for i in 0..vertices.len() {
            if vertices[i] == vertices[(i + 1) % vertices.len()] {
                return Err(Error::DegeneratePolygon);
            }
        }
        polygon_area(&vertices)?;
        Ok(Self { id: String::new(), label: 0, vertices })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.label = label;
        self
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point2 {
        // Validated at construction, cannot fail.
        polygon_centroid(&self.vertices).unwrap_or_default()
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.vertices).expect("validated polygon is non-empty")
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(p, &self.vertices)
    }

    /// Applies `f` to every vertex and revalidates, keeping id and label.
    pub fn map(&self, f: impl Fn(Point2) -> Result<Point2>) -> Result<Polygon> {
        let vertices = self.vertices.iter().map(|&p| f(p)).collect::<Result<Vec<_>>>()?;
        Ok(Polygon::new(vertices)?.with_id(self.id.clone()).with_label(self.label))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        self.map(|p| Ok(Point2::new(p.x + dx, p.y + dy))).expect("translation keeps validity")
    }
}

fn validate_ring(ring: &[Point2]) -> Result<()> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    if ring.len() < 3 {
        return Err(Error::DegeneratePolygon);
    }
    Ok(())
}

/// Shoelace sum without validation; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point2]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let o = ring[0];
    let mut acc = 0.0;
    for i in 1..n - 1 {
        acc += (ring[i] - o).cross(ring[i + 1] - o);
    }
    0.5 * acc
}

fn area_eps(ring: &[Point2]) -> f64 {
    let b = BBox::of(ring).expect("non-empty");
    let scale = b.width().max(b.height()).max(1e-300);
    1e-12 * scale * scale
}

pub fn polygon_area(ring: &[Point2]) -> Result<f64> {
    validate_ring(ring)?;
    let a = signed_area(ring);
    if a.abs() <= area_eps(ring) {
        return Err(Error::DegeneratePolygon);
    }
    if a < 0.0 {
        return Err(Error::ClockwiseRing);
    }
    Ok(a)
}

/// Area-weighted centroid.
pub fn polygon_centroid(ring: &[Point2]) -> Result<Point2> {
    let area = polygon_area(ring)?;
    let o = ring[0];
    let (mut cx, mut cy) = (0.0, 0.0);
    let n = ring.len();
    for i in 0..n {
        let p = ring[i] - o;
        let q = ring[(i + 1) % n] - o;
        let c = p.cross(q);
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    let k = 1.0 / (6.0 * area);
    Ok(Point2::new(o.x + cx * k, o.y + cy * k))
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    let tol = 1e-12 * (1.0 + a.dist2(b));
    let d = b - a;
    let cr = d.cross(p - a);
    if cr * cr > tol * d.dot(d).max(1e-300) {
        return false;
    }
    let t = (p - a).dot(d);
    t >= -tol && t <= d.dot(d) + tol
}

/// Even-odd ray casting; points on the boundary count as inside.
pub fn point_in_polygon(p: Point2, ring: &[Point2]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let a = ring[i];
        let b = ring[j];
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A regular sampling lattice: cell `(col, row)` has its center at
/// `origin + ((col + 0.5) * cell, (row + 0.5) * cell)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: Point2,
    pub cell: f64,
    pub cols: usize,
    pub rows: usize,
}

impl Grid {
    /// Integer pixel grid of an image; pixel `(x, y)` has center `(x + 0.5, y + 0.5)`.
    pub fn pixels(width: usize, height: usize) -> Self {
        Grid { origin: Point2::new(0.0, 0.0), cell: 1.0, cols: width, rows: height }
    }

    /// Grid over `bbox` with `long_side` cells along its longer dimension.
    pub fn covering(bbox: BBox, long_side: usize) -> Self {
        let long = bbox.width().max(bbox.height()).max(1e-300);
        let cell = long / long_side as f64;
        let cols = libm::ceil(bbox.width() / cell - 1e-9).max(1.0) as usize;
        let rows = libm::ceil(bbox.height() / cell - 1e-9).max(1.0) as usize;
        Grid { origin: bbox.min, cell, cols, rows }
    }
}

/// Calls `f(row, col_start, col_end)` for every run of cells whose centers
/// lie inside `ring` (even-odd rule).
pub fn for_each_span(ring: &[Point2], grid: &Grid, mut f: impl FnMut(usize, usize, usize)) {
    let Some(bb) = BBox::of(ring) else { return };
    let rel = |v: f64| (v - grid.origin.y) / grid.cell - 0.5;
    let r0 = libm::ceil(rel(bb.min.y)).max(0.0) as usize;
    let r1 = (libm::floor(rel(bb.max.y)) + 1.0).max(0.0).min(grid.rows as f64) as usize;
    let n = ring.len();
    let mut xs: Vec<f64> = Vec::new();
    for row in r0..r1 {
        let y = grid.origin.y + (row as f64 + 0.5) * grid.cell;
        xs.clear();
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            if (a.y <= y) != (b.y <= y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        for pair in xs.chunks_exact(2) {
            let c0 = libm::ceil((pair[0] - grid.origin.x) / grid.cell - 0.5).max(0.0);
            let c1 = libm::ceil((pair[1] - grid.origin.x) / grid.cell - 0.5).min(grid.cols as f64);
            if c1 > c0 {
                f(row, c0 as usize, c1 as usize);
            }
        }
    }
}

/// Sorted disjoint cell spans per row.
fn row_spans(ring: &[Point2], grid: &Grid) -> Vec<Vec<(usize, usize)>> {
    let mut rows = alloc::vec![Vec::new(); grid.rows];
    for_each_span(ring, grid, |r, a, b| rows[r].push((a, b)));
    rows
}

fn span_overlap(a: &[(usize, usize)], b: &[(usize, usize)]) -> (usize, usize) {
    let len = |s: &[(usize, usize)]| s.iter().map(|(x, y)| y - x).sum::<usize>();
    let (mut i, mut j, mut inter) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            inter += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    (inter, len(a) + len(b) - inter)
}

/// Default rasterization resolution along the longer side of the union box.
pub const IOU_GRID: usize = 2048;

/// Intersection over union by rasterization on a grid covering both boxes.
pub fn polygon_iou(a: &[Point2], b: &[Point2]) -> Result<f64> {
    polygon_iou_with_grid(a, b, IOU_GRID)
}

pub fn polygon_iou_with_grid(a: &[Point2], b: &[Point2], long_side: usize) -> Result<f64> {
    let da = polygon_area(a).is_err();
    let db = polygon_area(b).is_err();
    if da && db {
        return Err(Error::DegeneratePolygon);
    }
    if da || db {
        return Ok(0.0);
    }
    let (ba, bb) = (BBox::of(a).unwrap(), BBox::of(b).unwrap());
    if !ba.intersects(bb) {
        return Ok(0.0);
    }
    if a == b {
        return Ok(1.0);
    }
    let grid = Grid::covering(ba.union(bb), long_side.max(1));
    let (ra, rb) = (row_spans(a, &grid), row_spans(b, &grid));
    let (mut inter, mut union) = (0usize, 0usize);
    for (sa, sb) in ra.iter().zip(&rb) {
        let (i, u) = span_overlap(sa, sb);
        inter += i;
        union += u;
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

fn directed_min_dists<'a>(a: &'a [Point2], b: &'a [Point2]) -> impl Iterator<Item = f64> + 'a {
    a.iter().map(move |p| libm::sqrt(b.iter().map(|q| p.dist2(*q)).fold(f64::INFINITY, f64::min)))
}

fn check_nonempty(a: &[Point2], b: &[Point2]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    if a.iter().chain(b).any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Symmetric Hausdorff distance over the two vertex sets.
pub fn hausdorff_discrete(a: &[Point2], b: &[Point2]) -> Result<f64> {
    check_nonempty(a, b)?;
    let ab = directed_min_dists(a, b).fold(0.0, f64::max);
    let ba = directed_min_dists(b, a).fold(0.0, f64::max);
    Ok(ab.max(ba))
}

/// Mean of the two directed mean nearest-vertex distances.
pub fn chamfer_discrete(a: &[Point2], b: &[Point2]) -> Result<f64> {
    check_nonempty(a, b)?;
    let ab = directed_min_dists(a, b).sum::<f64>() / a.len() as f64;
    let ba = directed_min_dists(b, a).sum::<f64>() / b.len() as f64;
    Ok(0.5 * (ab + ba))
}

fn hom(p: Point2) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// Invertible planar projective transform, scaled so `h[(2,2)] == 1` when
/// that entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography3x3(Matrix3<f64>);

impl Homography3x3 {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero homography"));
        }
        // A single division keeps normalization idempotent.
        let m = if m[(2, 2)].abs() > 1e-12 * norm { m / m[(2, 2)] } else { m / norm };
        let scale = m.norm();
        if m.determinant().abs() <= 1e-14 * scale * scale * scale {
            return Err(Error::InvalidParameter("singular homography"));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    pub fn scaling(s: f64) -> Self {
        Self(Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let inv = self.0.try_inverse().expect("validated invertible");
        Self::new(inv).unwrap_or(Self(inv))
    }

    /// Expresses the same mapping for images scaled by `s` (both views).
    pub fn rescaled(&self, s: f64) -> Self {
        let sm = Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0);
        let si = Matrix3::new(1.0 / s, 0.0, 0.0, 0.0, 1.0 / s, 0.0, 0.0, 0.0, 1.0);
        Self::new(sm * self.0 * si).expect("rescaling keeps invertibility")
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        apply_homography(self, p)
    }
}

pub fn apply_homography(h: &Homography3x3, p: Point2) -> Result<Point2> {
    if !p.is_finite() {
        return Err(Error::NonFinite);
    }
    let v = h.0 * hom(p);
    let scale = h.0.row(2).abs().sum() * (1.0 + p.x.abs() + p.y.abs());
    if v.z.abs() <= 1e-12 * scale {
        return Err(Error::PointAtInfinity);
    }
    Ok(Point2::new(v.x / v.z, v.y / v.z))
}

/// Rank-2 fundamental matrix with unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fundamental3x3(Matrix3<f64>);

impl Fundamental3x3 {
    /// Forces rank 2 by zeroing the smallest singular value, then normalizes
    /// to unit Frobenius norm with a deterministic sign.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
        let mut s = svd.singular_values;
        let min = s.imin();
        s[min] = 0.0;
        let mut r = u * Matrix3::from_diagonal(&s) * vt;
        // Exact rank-2 projection: remove any residual along the null vectors.
        let null_r = vt.row(min).transpose();
        r -= r * null_r * null_r.transpose();
        let norm = r.norm();
        if norm <= 1e-300 {
            return Err(Error::InvalidParameter("rank < 2 fundamental matrix"));
        }
        r /= norm;
        let (idx, _) = r.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
            if v.abs() > acc.1 + 1e-12 { (i, v.abs()) } else { acc }
        });
        if r.as_slice()[idx] < 0.0 {
            r = -r;
        }
        Ok(Self(r))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// The same epipolar geometry for both images scaled by `s`, renormalized.
    pub fn rescaled(&self, s: f64) -> Self {
        let si = Matrix3::new(1.0 / s, 0.0, 0.0, 0.0, 1.0 / s, 0.0, 0.0, 0.0, 1.0);
        let m = si * self.0 * si;
        let m = m / m.norm();
        Self(m)
    }

    /// The epipolar relation with the two views exchanged.
    pub fn transposed(&self) -> Self {
        Self(self.0.transpose())
    }
}

/// Algebraic epipolar residual `|pr^T F pl|` with unit third coordinates.
pub fn epipolar_residual(f: &Matrix3<f64>, pl: Point2, pr: Point2) -> f64 {
    (hom(pr).transpose() * f * hom(pl))[(0, 0)].abs()
}

/// Distance in pixels from `pr` to the epipolar line `F pl`. Equals
/// [`epipolar_residual`] when the line's normal has unit length, and unlike
/// it does not depend on the scale of `F`.
pub fn epipolar_distance(f: &Matrix3<f64>, pl: Point2, pr: Point2) -> f64 {
    let line = f * hom(pl);
    let e = line.dot(&hom(pr)).abs();
    let n = libm::hypot(line.x, line.y);
    if n <= 0.0 {
        return if e == 0.0 { 0.0 } else { f64::INFINITY };
    }
    e / n
}

/// First-order geometric (Sampson) distance in pixels.
pub fn sampson_distance(f: &Matrix3<f64>, pl: Point2, pr: Point2) -> f64 {
    let (xl, xr) = (hom(pl), hom(pr));
    let fx = f * xl;
    let ftx = f.transpose() * xr;
    let e = xr.dot(&fx);
    let den = fx.x * fx.x + fx.y * fx.y + ftx.x * ftx.x + ftx.y * ftx.y;
    if den <= 0.0 {
        return if e == 0.0 { 0.0 } else { f64::INFINITY };
    }
    libm::sqrt(e * e / den)
}

fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

/// Keeps a subset of `chain[lo..=hi]` (endpoints always kept) such that every
/// dropped point is within `eps` of the simplified chain.
fn simplify_open(chain: &[Point2], eps: f64, keep: &mut [bool]) {
    let n = chain.len();
    if n == 0 {
        return;
    }
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = alloc::vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (mut best, mut best_d) = (lo, -1.0);
        for (k, p) in chain.iter().enumerate().take(hi).skip(lo + 1) {
            let d = seg_dist(*p, chain[lo], chain[hi]);
            if d > best_d {
                best_d = d;
                best = k;
            }
        }
        if best_d > eps {
            keep[best] = true;
            stack.push((lo, best));
            stack.push((best, hi));
        }
    }
}

/// Douglas–Peucker on a closed ring: split at the two mutually farthest
/// vertices, simplify both open chains, rejoin. The output is a subsequence
/// of the input in the original order.
pub fn douglas_peucker(ring: &[Point2], eps: f64) -> Result<Vec<Point2>> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidParameter("eps must be finite and >= 0"));
    }
    let n = ring.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let (mut a, mut b, mut best) = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = ring[i].dist2(ring[j]);
            if d > best {
                best = d;
                a = i;
                b = j;
            }
        }
    }
    let mut keep = alloc::vec![false; n];
    let first: Vec<Point2> = ring[a..=b].to_vec();
    let mut k1 = alloc::vec![false; first.len()];
    simplify_open(&first, eps, &mut k1);
    for (off, k) in k1.iter().enumerate() {
        keep[a + off] |= *k;
    }
    let second: Vec<Point2> = (b..=n + a).map(|i| ring[i % n]).collect();
    let mut k2 = alloc::vec![false; second.len()];
    simplify_open(&second, eps, &mut k2);
    for (off, k) in k2.iter().enumerate() {
        keep[(b + off) % n] |= *k;
    }
    Ok(ring.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect())
}

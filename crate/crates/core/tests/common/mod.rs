//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use polymatch_core::{Point2, Polygon};
use rand::Rng;

/// Star-shaped CCW polygon around `c` with `n` vertices at radii in
/// `[0.4 r, r]`.
pub fn star_polygon(rng: &mut impl Rng, n: usize, c: Point2, r: f64) -> Polygon {
    let mut angles: Vec<f64> = (0..n).map(|k| (k as f64 + rng.gen_range(0.1..0.9)) * std::f64::consts::TAU / n as f64).collect();
    angles.sort_by(f64::total_cmp);
    let ring = angles
        .iter()
        .map(|&a| {
            let rr = r * rng.gen_range(0.4..1.0);
            Point2::new(c.x + rr * a.cos(), c.y + rr * a.sin())
        })
        .collect();
    Polygon::new(ring).expect("star polygons are simple and CCW")
}

pub fn random_polygon(rng: &mut impl Rng, max_vertices: usize) -> Polygon {
    let n = rng.gen_range(3..=max_vertices);
    let c = Point2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let r = rng.gen_range(2.0..30.0);
    star_polygon(rng, n, c, r)
}

/// Minimum total cost over all injective row-to-column maps (rows <= cols),
/// summed in row order. `None` entries are forbidden.
pub fn brute_force_assignment(cost: &[Vec<Option<f64>>]) -> Option<f64> {
    let m = cost.len();
    let n = cost.first().map_or(0, Vec::len);
    assert!(m <= n, "oracle expects rows <= cols");
    fn rec(cost: &[Vec<Option<f64>>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut Option<f64>) {
        if row == cost.len() {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        for j in 0..used.len() {
            if used[j] {
                continue;
            }
            if let Some(c) = cost[row][j] {
                used[j] = true;
                rec(cost, row + 1, used, acc + c, best);
                used[j] = false;
            }
        }
    }
    let mut best = None;
    rec(cost, 0, &mut vec![false; n], 0.0, &mut best);
    best
}

/// Crossing abscissae of the horizontal line `y` with the ring.
fn crossings(ring: &[Point2], y: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    for (k, a) in ring.iter().enumerate() {
        let b = ring[(k + 1) % ring.len()];
        let (lo, hi) = if a.y < b.y { (*a, b) } else { (b, *a) };
        if lo.y <= y && y < hi.y {
            xs.push(lo.x + (y - lo.y) / (hi.y - lo.y) * (hi.x - lo.x));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs
}

fn inside_intervals(xs: &[f64], x: f64) -> bool {
    xs.iter().filter(|&&v| v < x).count() % 2 == 1
}

/// IoU by sampling cell centers of a `long_side`-cell grid over the union
/// bounding box, counting per row with even-odd crossing parity.
pub fn raster_iou(a: &Polygon, b: &Polygon, long_side: usize) -> f64 {
    let (ba, bb) = (a.bbox(), b.bbox());
    let (x0, y0) = (ba.min.x.min(bb.min.x), ba.min.y.min(bb.min.y));
    let (x1, y1) = (ba.max.x.max(bb.max.x), ba.max.y.max(bb.max.y));
    let cell = (x1 - x0).max(y1 - y0) / long_side as f64;
    let cols = ((x1 - x0) / cell).ceil() as usize;
    let rows = ((y1 - y0) / cell).ceil() as usize;
    let (mut inter, mut uni) = (0u64, 0u64);
    for r in 0..rows {
        let y = y0 + (r as f64 + 0.5) * cell;
        let (xa, xb) = (crossings(a.vertices(), y), crossings(b.vertices(), y));
        if xa.is_empty() && xb.is_empty() {
            continue;
        }
        for c in 0..cols {
            let x = x0 + (c as f64 + 0.5) * cell;
            let (ia, ib) = (inside_intervals(&xa, x), inside_intervals(&xb, x));
            inter += (ia && ib) as u64;
            uni += (ia || ib) as u64;
        }
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}

pub fn all_pairs(a: &[Point2], b: &[Point2]) -> Vec<Vec<f64>> {
    a.iter().map(|p| b.iter().map(|q| ((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y)).sqrt()).collect()).collect()
}

pub fn brute_hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    let d = all_pairs(a, b);
    let ab = d.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    let ba = (0..b.len()).map(|j| d.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    ab.max(ba)
}

pub fn brute_chamfer(a: &[Point2], b: &[Point2]) -> f64 {
    let d = all_pairs(a, b);
    let ab: f64 = d.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).sum::<f64>() / a.len() as f64;
    let ba: f64 =
        (0..b.len()).map(|j| d.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min)).sum::<f64>() / b.len() as f64;
    0.5 * (ab + ba)
}

/// Distance from `p` to segment `ab`.
pub fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.x - a.x - t * dx).hypot(p.y - a.y - t * dy)
}

/// Every input point missing from `simplified` lies within `eps` of the
/// simplified ring edge spanning it.
pub fn removed_within(ring: &[Point2], simplified: &[Point2], eps: f64) -> bool {
    let kept: Vec<usize> = simplified.iter().map(|p| ring.iter().position(|q| q == p).expect("subset")).collect();
    let n = ring.len();
    (0..kept.len()).all(|k| {
        let (s, e) = (kept[k], kept[(k + 1) % kept.len()]);
        let mut i = (s + 1) % n;
        while i != e {
            if seg_dist(ring[i], ring[s], ring[e]) > eps + 1e-12 {
                return false;
            }
            i = (i + 1) % n;
        }
        true
    })
}

/// Exact intersection area of two convex CCW polygons (Sutherland–Hodgman).
pub fn convex_intersection_area(a: &[Point2], b: &[Point2]) -> f64 {
    let mut out: Vec<Point2> = a.to_vec();
    for k in 0..b.len() {
        let (p, q) = (b[k], b[(k + 1) % b.len()]);
        let side = |s: Point2| (q.x - p.x) * (s.y - p.y) - (q.y - p.y) * (s.x - p.x);
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (cur, nxt) = (input[i], input[(i + 1) % input.len()]);
            let (sc, sn) = (side(cur), side(nxt));
            if sc >= 0.0 {
                out.push(cur);
            }
            if (sc >= 0.0) != (sn >= 0.0) {
                let t = sc / (sc - sn);
                out.push(Point2::new(cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)));
            }
        }
        if out.is_empty() {
            return 0.0;
        }
    }
    shoelace(&out).abs()
}

pub fn shoelace(r: &[Point2]) -> f64 {
    0.5 * (0..r.len()).map(|i| r[i].x * r[(i + 1) % r.len()].y - r[(i + 1) % r.len()].x * r[i].y).sum::<f64>()
}

/// Regular `n`-gon (convex, CCW).
pub fn regular(n: usize, c: Point2, r: f64, phase: f64) -> Polygon {
    Polygon::new(
        (0..n)
            .map(|k| {
                let a = phase + k as f64 * std::f64::consts::TAU / n as f64;
                Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect(),
    )
    .unwrap()
}

/// Rigid motion plus uniform scale.
pub fn similarity(p: &Polygon, theta: f64, s: f64, t: Point2) -> Polygon {
    let (c, sn) = (theta.cos(), theta.sin());
    Polygon::new(p.vertices().iter().map(|v| Point2::new(s * (c * v.x - sn * v.y) + t.x, s * (sn * v.x + c * v.y) + t.y)).collect())
        .unwrap()
}

/// Even-odd containment by counting edge crossings right of `p`.
pub fn parity_inside(ring: &[Point2], p: Point2) -> bool {
    let mut inside = false;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        if (a.y > p.y) != (b.y > p.y) && a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) > p.x {
            inside = !inside;
        }
    }
    inside
}

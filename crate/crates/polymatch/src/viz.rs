//! Side-by-side match overlays.

use std::fmt::Write as _;

use base64::Engine as _;
use polymatch_core::geometry::{for_each_span, Grid};
use polymatch_core::{GrayImage, Point2, Polygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formats::gray_to_u8;

const FILL_ALPHA: f64 = 0.45;

/// One color per pair, fixed by `seed`.
pub fn pair_colors(n: usize, seed: u64) -> Vec<[u8; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let hue: f64 = rng.gen_range(0.0..360.0);
            hsv_to_rgb(hue, 0.85, 0.95)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
}

fn png_data_uri(img: &GrayImage) -> String {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, gray_to_u8(img))
        .expect("buffer matches dimensions");
    let mut png = std::io::Cursor::new(Vec::new());
    image::DynamicImage::ImageLuma8(buf).write_to(&mut png, image::ImageFormat::Png).expect("in-memory PNG encoding");
    format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png.into_inner()))
}

fn points_attr(p: &Polygon, dx: f64) -> String {
    p.vertices().iter().map(|v| format!("{:.2},{:.2}", v.x + dx, v.y)).collect::<Vec<_>>().join(" ")
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// SVG with the left image at `x = 0`, the right one beside it, both
/// polygons of every pair filled in the pair color and a line between their
/// centroids.
pub fn render_svg(
    left: &GrayImage,
    right: &GrayImage,
    src: &[Polygon],
    tgt: &[Polygon],
    pairs: &[(usize, usize)],
    seed: u64,
) -> String {
    let (wl, w) = (left.width(), left.width() + right.width());
    let h = left.height().max(right.height());
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<image x="0" y="0" width="{}" height="{}" href="{}"/>"#, left.width(), left.height(), png_data_uri(left));
    let _ = writeln!(
        s,
        r#"<image x="{wl}" y="0" width="{}" height="{}" href="{}"/>"#,
        right.width(),
        right.height(),
        png_data_uri(right)
    );
    for (&(i, j), c) in pairs.iter().zip(pair_colors(pairs.len(), seed)) {
        let col = hex(c);
        for (p, dx) in [(&src[i], 0.0), (&tgt[j], wl as f64)] {
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{col}" fill-opacity="{FILL_ALPHA}" stroke="{col}" stroke-width="1"/>"#,
                points_attr(p, dx)
            );
        }
        let (a, b) = (src[i].centroid(), tgt[j].centroid());
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{col}" stroke-width="1.5"/>"#,
            a.x,
            a.y,
            b.x + wl as f64,
            b.y
        );
    }
    s.push_str("</svg>\n");
    s
}

fn blend(px: &mut [u8], c: [u8; 3], alpha: f64) {
    for k in 0..3 {
        px[k] = (px[k] as f64 * (1.0 - alpha) + c[k] as f64 * alpha).round() as u8;
    }
}

/// Raster version of [`render_svg`]; returns `(width, height, rgb)`.
pub fn render_png(
    left: &GrayImage,
    right: &GrayImage,
    src: &[Polygon],
    tgt: &[Polygon],
    pairs: &[(usize, usize)],
    seed: u64,
) -> (usize, usize, Vec<u8>) {
    let (wl, w) = (left.width(), left.width() + right.width());
    let h = left.height().max(right.height());
    let mut rgb = vec![0u8; w * h * 3];
    for (img, x0) in [(left, 0), (right, wl)] {
        let g = gray_to_u8(img);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let o = (y * w + x0 + x) * 3;
                rgb[o..o + 3].fill(g[y * img.width() + x]);
            }
        }
    }
    let colors = pair_colors(pairs.len(), seed);
    for (&(i, j), &c) in pairs.iter().zip(&colors) {
        for (p, img, x0) in [(&src[i], left, 0), (&tgt[j], right, wl)] {
            for_each_span(p.vertices(), &Grid::pixels(img.width(), img.height()), |r, c0, c1| {
                for x in c0..c1 {
                    let o = (r * w + x0 + x) * 3;
                    blend(&mut rgb[o..o + 3], c, FILL_ALPHA);
                }
            });
        }
    }
    for (&(i, j), &c) in pairs.iter().zip(&colors) {
        let (a, b) = (src[i].centroid(), tgt[j].centroid() + Point2::new(wl as f64, 0.0));
        let steps = a.dist(b).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let p = a + (b - a) * (k as f64 / steps as f64);
            let (x, y) = (p.x.floor(), p.y.floor());
            if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                let o = (y as usize * w + x as usize) * 3;
                rgb[o..o + 3].copy_from_slice(&c);
            }
        }
    }
    (w, h, rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_deterministic() {
        assert_eq!(pair_colors(5, 3), pair_colors(5, 3));
        assert_ne!(pair_colors(5, 3), pair_colors(5, 4));
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
    }
}

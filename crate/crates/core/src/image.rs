use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major single-channel image with `f32` intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// Luminance `0.299 R + 0.587 G + 0.114 B` from interleaved RGB bytes.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Option<Self> {
        if rgb.len() != width * height * 3 {
            return None;
        }
        let data = rgb
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect();
        Some(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer positions), clamped at the border.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let (fx, fy) = (libm::floor(x), libm::floor(y));
        let (tx, ty) = ((x - fx) as f32, (y - fy) as f32);
        let (ix, iy) = (fx as isize, fy as isize);
        let a = self.get_clamped(ix, iy);
        let b = self.get_clamped(ix + 1, iy);
        let c = self.get_clamped(ix, iy + 1);
        let d = self.get_clamped(ix + 1, iy + 1);
        let top = a + (b - a) * tx;
        let bot = c + (d - c) * tx;
        top + (bot - top) * ty
    }

    /// Copy of the rectangle `[x0, x0 + w) x [y0, y0 + h)`, which must lie
    /// inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        GrayImage { width: w, height: h, data }
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, w: usize, h: usize) -> GrayImage {
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        GrayImage::from_fn(w, h, |x, y| {
            self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    /// Separable Gaussian blur with kernel radius `ceil(3 sigma)` and
    /// replicated borders.
    pub fn gaussian_blur(&self, sigma: f64) -> GrayImage {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = libm::ceil(3.0 * sigma) as isize;
        let mut k: Vec<f32> = (-r..=r)
            .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)) as f32)
            .collect();
        let s: f32 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        let horiz = GrayImage::from_fn(self.width, self.height, |x, y| {
            k.iter()
                .enumerate()
                .map(|(i, w)| w * self.get_clamped(x as isize + i as isize - r, y as isize))
                .sum()
        });
        GrayImage::from_fn(self.width, self.height, |x, y| {
            k.iter()
                .enumerate()
                .map(|(i, w)| w * horiz.get_clamped(x as isize, y as isize + i as isize - r))
                .sum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luminance_weights() {
        let img = GrayImage::from_rgb8(1, 1, &[100, 50, 200]).unwrap();
        assert!((img.get(0, 0) - (29.9 + 29.35 + 22.8)).abs() < 1e-4);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = GrayImage::from_fn(9, 7, |_, _| 42.0);
        let b = img.gaussian_blur(1.0);
        assert!(b.data().iter().all(|v| (v - 42.0).abs() < 1e-4));
    }

    #[test]
    fn resize_identity_and_crop() {
        let img = GrayImage::from_fn(6, 4, |x, y| (x + 10 * y) as f32);
        assert_eq!(img.resize(6, 4), img);
        let c = img.crop(2, 1, 3, 2);
        assert_eq!(c.data(), &[12.0, 13.0, 14.0, 22.0, 23.0, 24.0]);
    }
}

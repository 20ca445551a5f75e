//! Frequency-domain view of an image: 2D DFT, centering shift and a
//! normalized log-magnitude map.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};

/// Row-major grayscale image with pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("image must be non-empty"));
        }
        if pixels.len() != height * width {
            return Err(invalid(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
            return Err(invalid(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Interleaved multi-channel data reduced to gray by the unweighted channel mean.
    pub fn from_channels(height: usize, width: usize, channels: usize, data: &[f64]) -> Result<Self> {
        if channels == 0 || data.len() != height * width * channels {
            return Err(invalid("channel data does not match image shape"));
        }
        let pixels = data
            .chunks_exact(channels)
            .map(|px| px.iter().sum::<f64>() / channels as f64)
            .collect();
        Self::new(height, width, pixels)
    }

    pub(crate) fn from_raw(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// Complex 2D spectrum, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.bins[row * self.width + col]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

/// Normalized log-magnitude spectrum with the DC bin at `(H/2, W/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FrequencyMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

fn transform_2d(height: usize, width: usize, bins: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    row_fft.process(bins);
    let mut column = vec![Complex64::default(); height];
    for c in 0..width {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = bins[r * width + c];
        }
        col_fft.process(&mut column);
        for (r, v) in column.iter().enumerate() {
            bins[r * width + c] = *v;
        }
    }
}

/// Forward, unnormalized 2D DFT: `X[u,v] = sum x[r,c] exp(-2 pi i (u r / H + v c / W))`.
pub fn fft2d(image: &ImageTensor) -> Spectrum {
    let mut bins: Vec<Complex64> = image.pixels.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    transform_2d(image.height, image.width, &mut bins, false);
    Spectrum {
        height: image.height,
        width: image.width,
        bins,
    }
}

/// Inverse 2D DFT including the `1 / (H W)` factor, so `ifft2d(fft2d(x)) == x`.
pub fn ifft2d(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut bins = spectrum.bins.clone();
    transform_2d(spectrum.height, spectrum.width, &mut bins, true);
    let norm = 1.0 / (spectrum.height * spectrum.width) as f64;
    bins.iter_mut().for_each(|b| *b *= norm);
    bins
}

/// Quadrant swap moving bin `(0, 0)` to `(H/2, W/2)` (floor division).
pub fn fftshift(spectrum: &Spectrum) -> Spectrum {
    let (h, w) = (spectrum.height, spectrum.width);
    let mut bins = vec![Complex64::default(); h * w];
    for r in 0..h {
        let dr = (r + h / 2) % h;
        for c in 0..w {
            bins[dr * w + (c + w / 2) % w] = spectrum.bins[r * w + c];
        }
    }
    Spectrum {
        height: h,
        width: w,
        bins,
    }
}

/// `log(1 + |fftshift(fft2d(x))|)`, min-max scaled to `[0, 1]`.
///
/// An image whose pixels are all equal maps to all zeros.
pub fn frequency_map(image: &ImageTensor) -> FrequencyMap {
    let (height, width) = (image.height, image.width);
    let first = image.pixels[0];
    if image.pixels.iter().all(|&p| p == first) {
        return FrequencyMap {
            height,
            width,
            values: vec![0.0; height * width],
        };
    }
    let shifted = fftshift(&fft2d(image));
    let mut values: Vec<f64> = shifted.bins.iter().map(|c| c.norm().ln_1p()).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        let span = hi - lo;
        values.iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    FrequencyMap {
        height,
        width,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ImageTensor {
        let mut px = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                px.push(f(r, c));
            }
        }
        ImageTensor::new(h, w, px).unwrap()
    }

    #[test]
    fn constant_image_has_only_dc() {
        let s = fft2d(&img(4, 4, |_, _| 0.3));
        assert!((s.get(0, 0).re - 16.0 * 0.3).abs() < 1e-12);
        for (i, b) in s.bins.iter().enumerate().skip(1) {
            assert!(b.norm() < 1e-12, "bin {i} = {b}");
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let s = fft2d(&img(8, 8, |r, c| if r == 0 && c == 0 { 1.0 } else { 0.0 }));
        assert!(s.bins.iter().all(|b| (b.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn inverse_recovers_image() {
        let im = img(6, 10, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0);
        let back = ifft2d(&fft2d(&im));
        for (a, b) in im.pixels().iter().zip(back) {
            assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn shift_moves_dc() {
        let mut s = Spectrum {
            height: 4,
            width: 4,
            bins: vec![Complex64::default(); 16],
        };
        s.bins[0] = Complex64::new(1.0, 0.0);
        assert_eq!(fftshift(&s).get(2, 2).re, 1.0);

        let mut s = Spectrum {
            height: 6,
            width: 4,
            bins: vec![Complex64::default(); 24],
        };
        s.bins[0] = Complex64::new(1.0, 0.0);
        assert_eq!(fftshift(&s).get(3, 2).re, 1.0);
    }

    #[test]
    fn shift_is_involution_on_even_sizes() {
        let s = fft2d(&img(6, 8, |r, c| ((r + 2 * c) % 5) as f64 / 4.0));
        assert_eq!(fftshift(&fftshift(&s)), s);
    }

    #[test]
    fn degenerate_and_impulse_maps() {
        let m = frequency_map(&img(8, 8, |_, _| 0.7));
        assert!(m.values().iter().all(|&v| v == 0.0));

        // flat magnitude: every bin ties, so the normalized map collapses to zero
        let m = frequency_map(&img(8, 8, |r, c| if r == 0 && c == 0 { 1.0 } else { 0.0 }));
        let spread = m.values().iter().fold(0.0f64, |a, &v| a.max(v));
        assert!(spread < 1e-9);
    }

    #[test]
    fn non_power_of_two_sizes() {
        let im = img(5, 3, |r, c| ((r * 3 + c) % 4) as f64 / 3.0);
        let s = fft2d(&im);
        let total: f64 = im.pixels().iter().sum();
        assert!((s.get(0, 0).re - total).abs() < 1e-12);
    }

    #[test]
    fn multichannel_conversion() {
        let im = ImageTensor::from_channels(1, 2, 3, &[0.0, 0.3, 0.6, 1.0, 1.0, 0.7]).unwrap();
        assert!((im.pixels()[0] - 0.3).abs() < 1e-15);
        assert!((im.pixels()[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_images() {
        assert!(ImageTensor::new(0, 4, vec![]).is_err());
        assert!(ImageTensor::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(1, 2, vec![0.0, 1.5]).is_err());
    }
}

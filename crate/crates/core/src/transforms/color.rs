//! Photometric operations.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::round_u8;
use crate::rng::Rng;
use crate::tensor::Image8;

fn map_samples(img: &Image8, mut f: impl FnMut(u8) -> u8) -> Image8 {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = f(*v));
    out
}

fn map_channels_lut(img: &Image8, luts: &[[u8; 256]; 3]) -> Image8 {
    let mut out = img.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = luts[c][px[c] as usize];
        }
    }
    out
}

fn channel_histograms(img: &Image8) -> [[u64; 256]; 3] {
    let mut hist = [[0u64; 256]; 3];
    for px in img.data().chunks_exact(3) {
        for c in 0..3 {
            hist[c][px[c] as usize] += 1;
        }
    }
    hist
}

/// ITU-R 601-2 luma, rounded like the common integer implementation.
fn luma(px: &[u8]) -> f64 {
    (f64::from(px[0]) * 299.0 + f64::from(px[1]) * 587.0 + f64::from(px[2]) * 114.0) / 1000.0
}

/// `degenerate + factor * (img - degenerate)`, per sample.
fn blend(img: &Image8, degenerate: &[f64], factor: f64) -> Image8 {
    let mut out = img.clone();
    for (v, &d) in out.data_mut().iter_mut().zip(degenerate) {
        *v = round_u8(d + factor * (f64::from(*v) - d));
    }
    out
}

pub fn invert(img: &Image8) -> Image8 {
    map_samples(img, |v| 255 - v)
}

/// Per-channel min-max stretch to the full 8-bit range.
pub fn autocontrast(img: &Image8) -> Image8 {
    let hist = channel_histograms(img);
    let mut luts = [[0u8; 256]; 3];
    for c in 0..3 {
        let lo = hist[c].iter().position(|&n| n > 0).unwrap_or(0);
        let hi = hist[c].iter().rposition(|&n| n > 0).unwrap_or(255);
        for (i, slot) in luts[c].iter_mut().enumerate() {
            *slot = if hi > lo {
                round_u8((i as f64 - lo as f64) * 255.0 / (hi - lo) as f64)
            } else {
                i as u8
            };
        }
    }
    map_channels_lut(img, &luts)
}

/// Per-channel histogram equalization.
pub fn equalize(img: &Image8) -> Image8 {
    let hist = channel_histograms(img);
    let mut luts = [[0u8; 256]; 3];
    for c in 0..3 {
        let h = &hist[c];
        let last = h.iter().rposition(|&n| n > 0).map_or(0, |i| h[i]);
        let total: u64 = h.iter().sum();
        let step = (total - last) / 255;
        for (i, slot) in luts[c].iter_mut().enumerate() {
            *slot = i as u8;
        }
        if step == 0 {
            continue;
        }
        let mut n = step / 2;
        for (i, slot) in luts[c].iter_mut().enumerate() {
            *slot = (n / step).min(255) as u8;
            n += h[i];
        }
    }
    map_channels_lut(img, &luts)
}

pub fn posterize(img: &Image8, bits_removed: u32) -> Image8 {
    let mask = !((1u16 << bits_removed.min(8)) - 1) as u8;
    map_samples(img, |v| v & mask)
}

/// Invert every sample at or above `threshold`.
pub fn solarize(img: &Image8, threshold: f64) -> Image8 {
    map_samples(img, |v| if f64::from(v) >= threshold { 255 - v } else { v })
}

/// Add `addend` to samples below `threshold`, saturating at 255.
pub fn solarize_add(img: &Image8, addend: u32, threshold: u8) -> Image8 {
    map_samples(img, |v| {
        if v < threshold {
            (u32::from(v) + addend).min(255) as u8
        } else {
            v
        }
    })
}

/// Saturation: blend with the grayscale version.
pub fn saturation(img: &Image8, factor: f64) -> Image8 {
    let gray: Vec<f64> = img
        .data()
        .chunks_exact(3)
        .flat_map(|px| {
            let l = luma(px).round();
            [l, l, l]
        })
        .collect();
    blend(img, &gray, factor)
}

/// Blend with a constant image at the rounded mean luma.
pub fn contrast(img: &Image8, factor: f64) -> Image8 {
    let n = (img.height() * img.width()) as f64;
    let mean = (img.data().chunks_exact(3).map(|px| luma(px).round()).sum::<f64>() / n).round();
    blend(img, &vec![mean; img.data().len()], factor)
}

pub fn brightness(img: &Image8, factor: f64) -> Image8 {
    blend(img, &vec![0.0; img.data().len()], factor)
}

/// Blend with a 3×3 smoothed copy (center weight 5, others 1, sum 13);
/// border pixels of the smoothed copy equal the input.
pub fn sharpness(img: &Image8, factor: f64) -> Image8 {
    let (h, w) = (img.height(), img.width());
    let mut smooth: Vec<f64> = img.data().iter().map(|&v| f64::from(v)).collect();
    if h >= 3 && w >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                for c in 0..3 {
                    let mut acc = 4.0 * f64::from(img.get(y, x, c));
                    for dy in 0..3 {
                        for dx in 0..3 {
                            acc += f64::from(img.get(y + dy - 1, x + dx - 1, c));
                        }
                    }
                    smooth[(y * w + x) * 3 + c] = (acc / 13.0).round();
                }
            }
        }
    }
    blend(img, &smooth, factor)
}

fn add_noise(img: &Image8, mut draw: impl FnMut() -> f64) -> Image8 {
    map_samples(img, |v| {
        round_u8((f64::from(v) / 255.0 + draw()).clamp(0.0, 1.0) * 255.0)
    })
}

/// Additive `U(-amplitude, amplitude)` noise on the [0, 1] scale.
pub fn uniform_noise(img: &Image8, amplitude: f64, seed: u64) -> Image8 {
    if amplitude <= 0.0 {
        return img.clone();
    }
    let mut rng = Rng::from_state(seed);
    add_noise(img, || rng.random_range(-amplitude..amplitude))
}

/// Additive `N(0, amplitude²)` noise on the [0, 1] scale.
pub fn gaussian_noise(img: &Image8, amplitude: f64, seed: u64) -> Image8 {
    if amplitude <= 0.0 {
        return img.clone();
    }
    let mut rng = Rng::from_state(seed);
    let normal = Normal::new(0.0, amplitude).expect("positive finite sigma");
    add_noise(img, || normal.sample(&mut rng))
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`, clamped edges.
pub fn gaussian_blur(img: &Image8, sigma: f64) -> Image8 {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (h, w) = (img.height() as isize, img.width() as isize);
    let src: Vec<f64> = img.data().iter().map(|&v| f64::from(v)).collect();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, &kw) in kernel.iter().enumerate() {
                    let sx = (x + k as isize - radius).clamp(0, w - 1);
                    acc += kw * src[((y * w + sx) * 3 + c) as usize];
                }
                tmp[((y * w + x) * 3 + c) as usize] = acc;
            }
        }
    }
    let mut out = img.clone();
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, &kw) in kernel.iter().enumerate() {
                    let sy = (y + k as isize - radius).clamp(0, h - 1);
                    acc += kw * tmp[((sy * w + x) * 3 + c) as usize];
                }
                data[((y * w + x) * 3 + c) as usize] = round_u8(acc);
            }
        }
    }
    out
}

//! Geometric operations. Warps use an inverse map about the image center,
//! bilinear sampling at half-pixel centers, and [`FILL_GRAY`] outside the
//! source.

use super::{round_u8, FILL_GRAY};
use crate::tensor::Image8;

/// Inverse-warp `img`: `inverse(u, v)` maps centered output coordinates to
/// centered source coordinates.
fn warp(img: &Image8, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Image8 {
    let (h, w) = (img.height(), img.width());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut out = img.clone();
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let (su, sv) = inverse(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let (sx, sy) = (su + cx - 0.5, sv + cy - 0.5);
            let px = sample_bilinear(img, sy, sx);
            data[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&px);
        }
    }
    out
}

/// Bilinear sample at pixel-index coordinates; neighbours outside the image
/// contribute the fill value.
fn sample_bilinear(img: &Image8, sy: f64, sx: f64) -> [u8; 3] {
    let (h, w) = (img.height() as isize, img.width() as isize);
    if !(sx > -1.0 && sy > -1.0 && sx < w as f64 && sy < h as f64) {
        return [FILL_GRAY; 3];
    }
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let fetch = |y: isize, x: isize, c: usize| -> f64 {
        if y >= 0 && y < h && x >= 0 && x < w {
            f64::from(img.get(y as usize, x as usize, c))
        } else {
            f64::from(FILL_GRAY)
        }
    };
    let mut px = [0u8; 3];
    for (c, slot) in px.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let weight = wy * wx;
                if weight != 0.0 {
                    acc += weight * fetch(y0 + dy, x0 + dx, c);
                }
            }
        }
        *slot = round_u8(acc);
    }
    px
}

/// Counter-clockwise rotation by `degrees` about the center.
pub fn rotate(img: &Image8, degrees: f64) -> Image8 {
    if degrees == 0.0 {
        return img.clone();
    }
    let (s, c) = degrees.to_radians().sin_cos();
    // y grows downward, so a visual counter-clockwise turn maps
    // output (u, v) back through the transpose of the rotation.
    warp(img, |u, v| (c * u - s * v, s * u + c * v))
}

pub fn shear_x(img: &Image8, shear: f64) -> Image8 {
    warp(img, |u, v| (u - shear * v, v))
}

pub fn shear_y(img: &Image8, shear: f64) -> Image8 {
    warp(img, |u, v| (u, v - shear * u))
}

pub fn translate(img: &Image8, dx: f64, dy: f64) -> Image8 {
    warp(img, |u, v| (u - dx, v - dy))
}

/// Zoom about the center; the output keeps the input dimensions.
pub fn scale(img: &Image8, factor_y: f64, factor_x: f64) -> Image8 {
    warp(img, |u, v| (u / factor_x, v / factor_y))
}

/// Gray square of side `side` centered at fractional position.
pub fn cutout(img: &Image8, side: usize, center_y: f64, center_x: f64) -> Image8 {
    let mut out = img.clone();
    if side == 0 {
        return out;
    }
    let (h, w) = (img.height(), img.width());
    let cy = ((center_y * h as f64) as usize).min(h - 1) as isize;
    let cx = ((center_x * w as f64) as usize).min(w - 1) as isize;
    let half = (side / 2) as isize;
    let y0 = (cy - half).max(0) as usize;
    let x0 = (cx - half).max(0) as usize;
    let y1 = ((cy - half + side as isize).max(0) as usize).min(h);
    let x1 = ((cx - half + side as isize).max(0) as usize).min(w);
    for y in y0..y1 {
        for x in x0..x1 {
            for c in 0..3 {
                out.set(y, x, c, FILL_GRAY);
            }
        }
    }
    out
}

pub fn hflip(img: &Image8) -> Image8 {
    let w = img.width();
    let mut out = img.clone();
    for (dst, src) in out
        .data_mut()
        .chunks_exact_mut(w * 3)
        .zip(img.data().chunks_exact(w * 3))
    {
        for x in 0..w {
            dst[x * 3..x * 3 + 3].copy_from_slice(&src[(w - 1 - x) * 3..(w - x) * 3]);
        }
    }
    out
}

pub fn vflip(img: &Image8) -> Image8 {
    let row = img.width() * 3;
    let data: Vec<u8> = img.data().chunks_exact(row).rev().flatten().copied().collect();
    Image8::new(img.height(), img.width(), data).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image8 {
        Image8::from_fn(7, 10, |y, x, c| (y * 31 + x * 7 + c * 90) as u8)
    }

    #[test]
    fn zero_parameter_warps_are_identity() {
        let img = sample();
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(shear_x(&img, 0.0), img);
        assert_eq!(shear_y(&img, 0.0), img);
        assert_eq!(translate(&img, 0.0, 0.0), img);
        assert_eq!(scale(&img, 1.0, 1.0), img);
        assert_eq!(cutout(&img, 0, 0.5, 0.5), img);
    }

    #[test]
    fn integer_translation_shifts_pixels() {
        let img = sample();
        let out = translate(&img, 2.0, 0.0);
        for y in 0..7 {
            assert_eq!(out.pixel(y, 0), [FILL_GRAY; 3]);
            assert_eq!(out.pixel(y, 1), [FILL_GRAY; 3]);
            for x in 2..10 {
                assert_eq!(out.pixel(y, x), img.pixel(y, x - 2));
            }
        }
    }

    #[test]
    fn rotate_180_matches_double_flip() {
        let img = sample();
        assert_eq!(rotate(&img, 180.0), hflip(&vflip(&img)));
    }

    #[test]
    fn rotate_90_square() {
        // Counter-clockwise: the top-right corner moves to the top-left.
        let img = Image8::from_fn(4, 4, |y, x, _| (y * 4 + x) as u8);
        let out = rotate(&img, 90.0);
        assert_eq!(out.get(0, 0, 0), img.get(0, 3, 0));
        assert_eq!(out.get(3, 0, 0), img.get(0, 0, 0));
    }

    #[test]
    fn cutout_patch() {
        let img = Image8::filled(10, 10, 0);
        let out = cutout(&img, 4, 0.5, 0.5);
        let gray = out.data().iter().filter(|&&v| v == FILL_GRAY).count();
        assert_eq!(gray, 16 * 3);
        assert_eq!(out.get(5, 5, 0), FILL_GRAY);
        assert_eq!(out.get(3, 3, 0), FILL_GRAY);
        assert_eq!(out.get(7, 7, 0), 0);
        // clipped at the corner
        let out = cutout(&img, 4, 0.0, 0.0);
        assert_eq!(out.data().iter().filter(|&&v| v == FILL_GRAY).count(), 4 * 3);
    }

    #[test]
    fn flips_are_involutions() {
        let img = sample();
        assert_eq!(hflip(&hflip(&img)), img);
        assert_eq!(vflip(&vflip(&img)), img);
        assert_eq!(hflip(&img).pixel(0, 0), img.pixel(0, 9));
        assert_eq!(vflip(&img).pixel(0, 0), img.pixel(6, 0));
    }

    #[test]
    fn zoom_in_keeps_center() {
        let img = Image8::filled(8, 8, 200);
        let out = scale(&img, 1.4, 1.4);
        assert_eq!(out, img);
        let out = scale(&img, 0.9, 0.9);
        assert_eq!(out.pixel(4, 4), [200; 3]);
        assert_ne!(out.pixel(0, 0), [200; 3]);
    }
}

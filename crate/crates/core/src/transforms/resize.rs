//! Fixed pipeline ops: bilinear resize and 224 crops.

use rand::Rng as _;

use super::round_u8;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Image8;

pub const CROP_SIZE: usize = 224;

/// Bilinear resize with half-pixel centers and clamped edges.
pub fn resize_bilinear(img: &Image8, out_h: usize, out_w: usize) -> Result<Image8> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!("resize target {out_h}x{out_w}")));
    }
    let (h, w) = (img.height(), img.width());
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let ratio = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = f64::from(img.get(y0, x0, c)) * (1.0 - fx) + f64::from(img.get(y0, x1, c)) * fx;
                let bot = f64::from(img.get(y1, x0, c)) * (1.0 - fx) + f64::from(img.get(y1, x1, c)) * fx;
                data.push(round_u8(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    Image8::new(out_h, out_w, data)
}

fn crop_at(img: &Image8, top: usize, left: usize, size: usize) -> Image8 {
    let w = img.width();
    let mut data = Vec::with_capacity(size * size * 3);
    for y in top..top + size {
        data.extend_from_slice(&img.data()[(y * w + left) * 3..(y * w + left + size) * 3]);
    }
    Image8::new(size, size, data).expect("crop within bounds")
}

fn check_crop(img: &Image8, size: usize) -> Result<()> {
    if size == 0 || img.height() < size || img.width() < size {
        return Err(Error::CropTooLarge {
            height: img.height(),
            width: img.width(),
            size,
        });
    }
    Ok(())
}

/// Square crop at uniformly drawn offsets. Returns the crop and its `(top, left)`.
pub fn random_crop(img: &Image8, size: usize, rng: &mut Rng) -> Result<(Image8, (usize, usize))> {
    check_crop(img, size)?;
    let top = rng.random_range(0..=img.height() - size);
    let left = rng.random_range(0..=img.width() - size);
    Ok((crop_at(img, top, left, size), (top, left)))
}

pub fn center_crop(img: &Image8, size: usize) -> Result<Image8> {
    check_crop(img, size)?;
    Ok(crop_at(img, (img.height() - size) / 2, (img.width() - size) / 2, size))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_dims_and_identity() {
        let img = Image8::from_fn(208, 179, |y, x, c| (y + x + c) as u8);
        let out = resize_bilinear(&img, 297, 256).unwrap();
        assert_eq!((out.height(), out.width()), (297, 256));
        assert_eq!(resize_bilinear(&img, 208, 179).unwrap(), img);
    }

    #[test]
    fn resize_constant() {
        let img = Image8::filled(5, 9, 73);
        assert_eq!(resize_bilinear(&img, 13, 4).unwrap(), Image8::filled(13, 4, 73));
    }

    #[test]
    fn resize_half_pixel_upsample() {
        // 1x2 -> 1x4: sample positions -0.25 (clamped 0), 0.25, 0.75, 1.25 (clamped 1)
        let img = Image8::new(1, 2, vec![0, 0, 0, 100, 100, 100]).unwrap();
        let out = resize_bilinear(&img, 1, 4).unwrap();
        let r: Vec<u8> = out.data().iter().step_by(3).copied().collect();
        assert_eq!(r, vec![0, 25, 75, 100]);
    }

    #[test]
    fn crops() {
        let img = Image8::from_fn(297, 256, |y, x, _| ((y * 3 + x) % 251) as u8);
        let c = center_crop(&img, 224).unwrap();
        assert_eq!((c.height(), c.width()), (224, 224));
        assert_eq!(c.pixel(0, 0), img.pixel(36, 16));
        let (r, (top, left)) = random_crop(&img, 224, &mut Rng::from_state(1)).unwrap();
        assert_eq!(r.pixel(0, 0), img.pixel(top, left));
        assert!(top <= 73 && left <= 32);

        let exact = Image8::from_fn(224, 224, |y, x, _| (y ^ x) as u8);
        assert_eq!(center_crop(&exact, 224).unwrap(), exact);
        assert_eq!(random_crop(&exact, 224, &mut Rng::from_state(9)).unwrap().0, exact);

        let odd = Image8::from_fn(226, 226, |y, x, _| (y * 226 + x) as u8);
        assert_eq!(center_crop(&odd, 224).unwrap().pixel(0, 0), odd.pixel(1, 1));

        assert!(matches!(
            center_crop(&Image8::filled(200, 300, 0), 224),
            Err(Error::CropTooLarge { .. })
        ));
    }
}

//! Grad-CAM++ heatmaps from last-layer feature maps and their gradients.
//!
//! The class score is taken through an exponential, `Y = exp(S)`, so the
//! second and third derivatives are `exp(S) G²` and `exp(S) G³`. The common
//! `exp(S)` factor cancels inside alpha and is dropped from the channel
//! weights, since heatmaps are max-normalized:
//!
//! ```text
//! alpha_k(i,j) = G² / (2 G² + sum_ab A_k(a,b) G³ + eps)      (0 where G = 0)
//! w_k          = sum_ij alpha_k(i,j) relu(G_k(i,j))
//! L(i,j)       = relu(sum_k w_k A_k(i,j))
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Image8, Tensor};

pub const ALPHA_EPS: f64 = 1e-8;

/// Threshold of the boundary drawn around the hottest region.
pub const HOT_REGION_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapBundle<T> {
    /// K×H×W feature maps.
    pub activations: Tensor<T>,
    /// K×H×W gradients of the pre-softmax class score w.r.t. the activations.
    pub gradients: Tensor<T>,
    pub score: T,
    pub class_index: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BundleMeta {
    pub score_s: f64,
    pub class_index: u8,
}

impl<T: Scalar> FeatureMapBundle<T> {
    pub fn new(activations: Tensor<T>, gradients: Tensor<T>, score: T, class_index: u8) -> Result<Self> {
        let bundle = Self {
            activations,
            gradients,
            score,
            class_index,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.activations.dims().len() != 3 {
            return Err(Error::invalid(format!(
                "feature maps must be K×H×W, got {:?}",
                self.activations.dims()
            )));
        }
        if self.activations.dims() != self.gradients.dims() {
            return Err(Error::invalid(format!(
                "activation dims {:?} != gradient dims {:?}",
                self.activations.dims(),
                self.gradients.dims()
            )));
        }
        if self.activations.first_non_finite().is_some() {
            return Err(Error::NonFinite("activations"));
        }
        if self.gradients.first_non_finite().is_some() {
            return Err(Error::NonFinite("gradients"));
        }
        if !self.score.is_finite() {
            return Err(Error::NonFinite("score"));
        }
        if self.class_index > 1 {
            return Err(Error::invalid(format!("class index {}", self.class_index)));
        }
        Ok(())
    }

    /// `(K, H, W)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.activations.dims();
        (d[0], d[1], d[2])
    }

    /// Read `A.tsr`, `G.tsr` and `meta.json` from `dir`.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let a = Tensor::read_tsr1(dir.join("A.tsr"))?;
        let g = Tensor::read_tsr1(dir.join("G.tsr"))?;
        let meta_path = dir.join("meta.json");
        let meta: BundleMeta =
            serde_json::from_slice(&std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?;
        Self::new(a.cast(), g.cast(), T::lit(meta.score_s), meta.class_index)
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.activations.cast::<f32>().write_tsr1(dir.join("A.tsr"))?;
        self.gradients.cast::<f32>().write_tsr1(dir.join("G.tsr"))?;
        let meta = BundleMeta {
            score_s: self.score.to_f64_lossy(),
            class_index: self.class_index,
        };
        let path = dir.join("meta.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))
    }
}

/// H×W non-negative map.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
    /// Values were divided by their maximum (which was positive).
    pub normalized: bool,
}

impl<T: Scalar> Heatmap<T> {
    pub fn get(&self, y: usize, x: usize) -> T {
        self.values[y * self.width + x]
    }

    /// Row-major index of the largest value (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(
            vec![self.height, self.width],
            self.values.iter().map(|v| v.to_f64_lossy() as f32).collect(),
        )
        .expect("heatmap dims positive")
    }
}

/// Per-position alpha coefficients, K×H×W.
pub fn alpha<T: Scalar>(bundle: &FeatureMapBundle<T>) -> Result<Tensor<T>> {
    bundle.validate()?;
    let (k, h, w) = bundle.shape();
    let plane = h * w;
    let a = bundle.activations.data();
    let g = bundle.gradients.data();
    let eps = T::lit(ALPHA_EPS);
    let two = T::lit(2.0);
    let mut out = vec![T::zero(); k * plane];
    for c in 0..k {
        let range = c * plane..(c + 1) * plane;
        let sum_a: T = a[range.clone()].iter().copied().sum();
        for i in range {
            let gi = g[i];
            if gi == T::zero() {
                continue;
            }
            let g2 = gi * gi;
            out[i] = g2 / (two * g2 + sum_a * g2 * gi + eps);
        }
    }
    Ok(Tensor::new(bundle.activations.dims().to_vec(), out)?)
}

/// `w_k = sum_ij alpha_k(i,j) f(G_k(i,j))` with `f` = relu when `rectify`,
/// identity otherwise.
pub fn pool_weights<T: Scalar>(gradients: &Tensor<T>, alpha: &Tensor<T>, rectify: bool) -> Vec<T> {
    let d = gradients.dims();
    let plane = d[1] * d[2];
    gradients
        .data()
        .chunks_exact(plane)
        .zip(alpha.data().chunks_exact(plane))
        .map(|(g, a)| {
            g.iter()
                .zip(a)
                .map(|(&g, &a)| a * if rectify { g.max(T::zero()) } else { g })
                .sum()
        })
        .collect()
}

pub fn channel_weights<T: Scalar>(bundle: &FeatureMapBundle<T>) -> Result<Vec<T>> {
    let alpha = alpha(bundle)?;
    Ok(pool_weights(&bundle.gradients, &alpha, true))
}

/// `relu(sum_k w_k A_k)` without normalization.
pub fn combine<T: Scalar>(activations: &Tensor<T>, weights: &[T]) -> Heatmap<T> {
    let d = activations.dims();
    let (h, w) = (d[1], d[2]);
    let mut values = vec![T::zero(); h * w];
    for (maps, &wk) in activations.data().chunks_exact(h * w).zip(weights) {
        for (v, &a) in values.iter_mut().zip(maps) {
            *v += wk * a;
        }
    }
    values.iter_mut().for_each(|v| *v = v.max(T::zero()));
    Heatmap {
        height: h,
        width: w,
        values,
        normalized: false,
    }
}

/// Divide by the maximum when it is positive.
pub fn normalize<T: Scalar>(mut map: Heatmap<T>) -> Heatmap<T> {
    let max = map.max();
    if max > T::zero() {
        map.values.iter_mut().for_each(|v| *v /= max);
        map.normalized = true;
    }
    map
}

pub fn heatmap_raw<T: Scalar>(bundle: &FeatureMapBundle<T>) -> Result<Heatmap<T>> {
    let weights = channel_weights(bundle)?;
    Ok(combine(&bundle.activations, &weights))
}

pub fn heatmap<T: Scalar>(bundle: &FeatureMapBundle<T>) -> Result<Heatmap<T>> {
    Ok(normalize(heatmap_raw(bundle)?))
}

/// Grad-CAM weights: spatial mean of the gradients.
pub fn gradcam_weights<T: Scalar>(bundle: &FeatureMapBundle<T>) -> Result<Vec<T>> {
    bundle.validate()?;
    let (_, h, w) = bundle.shape();
    let n = T::from_usize_lossy(h * w);
    Ok(bundle
        .gradients
        .data()
        .chunks_exact(h * w)
        .map(|g| g.iter().copied().sum::<T>() / n)
        .collect())
}

pub fn gradcam_baseline<T: Scalar>(bundle: &FeatureMapBundle<T>) -> Result<Heatmap<T>> {
    let weights = gradcam_weights(bundle)?;
    Ok(normalize(combine(&bundle.activations, &weights)))
}

/// Five-stop colormap: navy, blue, green, yellow, red.
pub fn colormap(v: f64) -> [f64; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 128.0],
        [0.0, 0.0, 255.0],
        [0.0, 255.0, 0.0],
        [255.0, 255.0, 0.0],
        [255.0, 0.0, 0.0],
    ];
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let pos = v * 4.0;
    let i = (pos.floor() as usize).min(3);
    let t = pos - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * t)
}

/// Bilinear upsampling of a heatmap to `out_h`×`out_w`, half-pixel centers.
pub fn upsample<T: Scalar>(map: &Heatmap<T>, out_h: usize, out_w: usize) -> Vec<f64> {
    let (h, w) = (map.height, map.width);
    let coord = |o: usize, out: usize, inp: usize| {
        let s = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(inp - 1), s - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, out_h, h);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, out_w, w);
            let v = |yy: usize, xx: usize| map.get(yy, xx).to_f64_lossy();
            let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
            let bot = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Blend `base·(1−a) + colormap(h)·a` with the heatmap upsampled to the base size.
pub fn render_overlay<T: Scalar>(base: &Image8, map: &Heatmap<T>, alpha_blend: f64) -> Image8 {
    let (h, w) = (base.height(), base.width());
    let up = upsample(map, h, w);
    let mut out = base.clone();
    for (px, &v) in out.data_mut().chunks_exact_mut(3).zip(&up) {
        let color = colormap(v);
        for c in 0..3 {
            let blended = f64::from(px[c]) * (1.0 - alpha_blend) + color[c] * alpha_blend;
            px[c] = blended.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Pixels inside the `>= threshold` region that touch a pixel outside it.
pub fn hot_region_boundary(values: &[f64], height: usize, width: usize, threshold: f64) -> Vec<bool> {
    let inside = |y: isize, x: isize| {
        y >= 0
            && x >= 0
            && (y as usize) < height
            && (x as usize) < width
            && values[y as usize * width + x as usize] >= threshold
    };
    let mut mask = vec![false; height * width];
    for y in 0..height as isize {
        for x in 0..width as isize {
            if inside(y, x)
                && [(-1, 0), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|(dy, dx)| !inside(y + dy, x + dx))
            {
                mask[y as usize * width + x as usize] = true;
            }
        }
    }
    mask
}

/// Overlay with the boundary of the `>= threshold` region drawn in `color`.
pub fn render_overlay_with_boundary<T: Scalar>(
    base: &Image8,
    map: &Heatmap<T>,
    alpha_blend: f64,
    threshold: f64,
    color: [u8; 3],
) -> Image8 {
    let mut out = render_overlay(base, map, alpha_blend);
    let (h, w) = (base.height(), base.width());
    let up = upsample(map, h, w);
    let mask = hot_region_boundary(&up, h, w, threshold);
    for (px, &edge) in out.data_mut().chunks_exact_mut(3).zip(&mask) {
        if edge {
            px.copy_from_slice(&color);
        }
    }
    out
}

//! The 23 selectable image transformations and the fixed pipeline ops.
//!
//! Every transformation is a pure function of the image and a
//! [`TransformInstance`]; all randomness (sign, cutout position, noise seed,
//! per-axis scale levels) is drawn up front and stored in the instance.
//!
//! Magnitude levels run over `0..=30` and map linearly onto each kind's range:
//!
//! | kind                               | parameter at level `M`              |
//! |------------------------------------|-------------------------------------|
//! | Posterize                          | bits removed `round(4M/30)`         |
//! | Solarize                           | threshold `256(1 - M/30)`           |
//! | SolarizeAdd                        | addend `round(100M/30)`             |
//! | Color, Contrast, Brightness, Sharpness | factor `1 + sign * 0.9M/30`     |
//! | RandomNoise, GaussianNoise         | amplitude `0.4M/30`                 |
//! | GaussianBlur                       | sigma `2M/30`                       |
//! | Rotate                             | degrees `30M/30`                    |
//! | ShearX, ShearY                     | shear `0.3M/30`                     |
//! | Cutout                             | side `round(40M/30)` pixels         |
//! | TranslateX, TranslateY             | pixels `100M/30`                    |
//! | Scale, ScaleXY                     | factor `0.9 + 0.5M/30`              |

pub mod color;
pub mod geometry;
pub mod resize;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Image8;

pub use geometry::{hflip, vflip};
pub use resize::{center_crop, random_crop, resize_bilinear, CROP_SIZE};

pub const MAX_LEVEL: i64 = 30;

/// Fill value for pixels sampled from outside the source and for cutout patches.
pub const FILL_GRAY: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Color,
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransformKind {
    AutoContrast,
    Equalize,
    Invert,
    Posterize,
    Solarize,
    SolarizeAdd,
    Color,
    Contrast,
    Brightness,
    Sharpness,
    RandomNoise,
    GaussianNoise,
    GaussianBlur,
    HorizontalFlip,
    VerticalFlip,
    Rotate,
    ShearX,
    ShearY,
    Cutout,
    TranslateX,
    TranslateY,
    Scale,
    ScaleXY,
}

use TransformKind::*;

impl TransformKind {
    pub const ALL: [TransformKind; 23] = [
        AutoContrast,
        Equalize,
        Invert,
        Posterize,
        Solarize,
        SolarizeAdd,
        Color,
        Contrast,
        Brightness,
        Sharpness,
        RandomNoise,
        GaussianNoise,
        GaussianBlur,
        HorizontalFlip,
        VerticalFlip,
        Rotate,
        ShearX,
        ShearY,
        Cutout,
        TranslateX,
        TranslateY,
        Scale,
        ScaleXY,
    ];

    /// The original RandAugment space: all kinds minus the seven additions
    /// (the two noises, blur, both flips, Scale and ScaleXY).
    pub const RANDAUGMENT: [TransformKind; 16] = [
        AutoContrast,
        Equalize,
        Invert,
        Posterize,
        Solarize,
        SolarizeAdd,
        Color,
        Contrast,
        Brightness,
        Sharpness,
        Rotate,
        ShearX,
        ShearY,
        Cutout,
        TranslateX,
        TranslateY,
    ];

    pub const COLOR: [TransformKind; 13] = [
        AutoContrast,
        Equalize,
        Invert,
        Posterize,
        Solarize,
        SolarizeAdd,
        Color,
        Contrast,
        Brightness,
        Sharpness,
        RandomNoise,
        GaussianNoise,
        GaussianBlur,
    ];

    pub const SHAPE: [TransformKind; 10] = [
        HorizontalFlip,
        VerticalFlip,
        Rotate,
        ShearX,
        ShearY,
        Cutout,
        TranslateX,
        TranslateY,
        Scale,
        ScaleXY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AutoContrast => "Auto Contrast",
            Equalize => "Equalize",
            Invert => "Invert",
            Posterize => "Posterize",
            Solarize => "Solarize",
            SolarizeAdd => "Solarize Add",
            Color => "Color",
            Contrast => "Contrast",
            Brightness => "Brightness",
            Sharpness => "Sharpness",
            RandomNoise => "Random noise",
            GaussianNoise => "Gaussian noise",
            GaussianBlur => "Gaussian blur",
            HorizontalFlip => "Horizontal flip",
            VerticalFlip => "Vertical flip",
            Rotate => "Rotate",
            ShearX => "Shear X",
            ShearY => "Shear Y",
            Cutout => "Cutout",
            TranslateX => "Translate X",
            TranslateY => "Translate Y",
            Scale => "Scale",
            ScaleXY => "Scale XY",
        }
    }

    pub fn category(self) -> Category {
        if Self::COLOR.contains(&self) {
            Category::Color
        } else {
            Category::Shape
        }
    }

    pub fn magnitude_range(self) -> Option<(f64, f64)> {
        match self {
            AutoContrast | Equalize | Invert | HorizontalFlip | VerticalFlip => None,
            Posterize => Some((0.0, 4.0)),
            Solarize => Some((0.0, 256.0)),
            SolarizeAdd => Some((0.0, 100.0)),
            Color | Contrast | Brightness | Sharpness => Some((0.1, 1.9)),
            RandomNoise | GaussianNoise => Some((0.0, 0.4)),
            GaussianBlur => Some((0.0, 2.0)),
            Rotate => Some((0.0, 30.0)),
            ShearX | ShearY => Some((0.0, 0.3)),
            Cutout => Some((0.0, 40.0)),
            TranslateX | TranslateY => Some((0.0, 100.0)),
            Scale | ScaleXY => Some((0.9, 1.4)),
        }
    }

    /// Whether a uniform random sign is drawn for this kind.
    pub fn signed(self) -> bool {
        matches!(
            self,
            Rotate | ShearX | ShearY | TranslateX | TranslateY | Color | Contrast | Brightness | Sharpness
        )
    }

    pub fn is_enhancement(self) -> bool {
        matches!(self, Color | Contrast | Brightness | Sharpness)
    }

    pub fn needs_aux(self) -> bool {
        matches!(self, Cutout | RandomNoise | GaussianNoise | ScaleXY)
    }
}

/// Map a magnitude level onto the kind's parameter. Returns `None` for
/// parameterless kinds.
pub fn magnitude_to_param(kind: TransformKind, level: i64, sign: i8) -> Result<Option<f64>> {
    if !(0..=MAX_LEVEL).contains(&level) {
        return Err(Error::LevelOutOfRange(level));
    }
    let frac = level as f64 / MAX_LEVEL as f64;
    let sign = if sign < 0 { -1.0 } else { 1.0 };
    let value = match kind {
        AutoContrast | Equalize | Invert | HorizontalFlip | VerticalFlip => return Ok(None),
        Posterize => (4.0 * frac).round(),
        Solarize => 256.0 * (1.0 - frac),
        SolarizeAdd => (100.0 * frac).round(),
        Color | Contrast | Brightness | Sharpness => 1.0 + sign * 0.9 * frac,
        RandomNoise | GaussianNoise => 0.4 * frac,
        GaussianBlur => 2.0 * frac,
        Rotate => 30.0 * frac,
        ShearX | ShearY => 0.3 * frac,
        Cutout => (40.0 * frac).round(),
        TranslateX | TranslateY => 100.0 * frac,
        Scale | ScaleXY => 0.9 + 0.5 * frac,
    };
    Ok(Some(value))
}

/// Auxiliary random draws needed by some kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Aux {
    None,
    /// Patch center as fractions of height and width in `[0, 1)`.
    Cutout {
        center_y: f64,
        center_x: f64,
    },
    /// Seed of the per-sample noise stream.
    Noise {
        seed: u64,
    },
    /// Independent per-axis scale factors.
    ScaleXy {
        factor_y: f64,
        factor_x: f64,
    },
}

/// A realized transformation. For geometric kinds `param` is an unsigned
/// magnitude and `sign` gives the direction; for enhancement kinds the sign
/// is already folded into the factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformInstance {
    pub kind: TransformKind,
    pub level: i64,
    pub param: Option<f64>,
    pub sign: i8,
    pub aux: Aux,
}

impl TransformInstance {
    /// Build an instance with explicit sign and aux. Validates the level and
    /// that aux matches the kind.
    pub fn new(kind: TransformKind, level: i64, sign: i8, aux: Aux) -> Result<Self> {
        let param = magnitude_to_param(kind, level, sign)?;
        if kind.needs_aux() == matches!(aux, Aux::None) {
            return Err(Error::invalid(format!("aux {aux:?} does not fit {}", kind.name())));
        }
        Ok(Self {
            kind,
            level,
            param,
            sign: if sign < 0 { -1 } else { 1 },
            aux,
        })
    }

    /// Draw sign and aux for `kind` at `level` from `rng`.
    pub fn draw(kind: TransformKind, level: i64, rng: &mut Rng) -> Result<Self> {
        if !(0..=MAX_LEVEL).contains(&level) {
            return Err(Error::LevelOutOfRange(level));
        }
        let sign = if kind.signed() && rng.random::<bool>() { -1 } else { 1 };
        let aux = match kind {
            Cutout => Aux::Cutout {
                center_y: rng.random::<f64>(),
                center_x: rng.random::<f64>(),
            },
            RandomNoise | GaussianNoise => Aux::Noise { seed: rng.random() },
            ScaleXY => {
                let ly = rng.random_range(0..=level);
                let lx = rng.random_range(0..=level);
                Aux::ScaleXy {
                    factor_y: magnitude_to_param(Scale, ly, 1)?.unwrap(),
                    factor_x: magnitude_to_param(Scale, lx, 1)?.unwrap(),
                }
            }
            _ => Aux::None,
        };
        Self::new(kind, level, sign, aux)
    }

    fn value(&self) -> f64 {
        self.param.unwrap_or(0.0)
    }

    fn signed_value(&self) -> f64 {
        self.value() * f64::from(self.sign)
    }
}

/// Apply one realized transformation. Dimensions are preserved.
pub fn apply_transform(img: &Image8, t: &TransformInstance) -> Image8 {
    match t.kind {
        AutoContrast => color::autocontrast(img),
        Equalize => color::equalize(img),
        Invert => color::invert(img),
        Posterize => color::posterize(img, t.value() as u32),
        Solarize => color::solarize(img, t.value()),
        SolarizeAdd => color::solarize_add(img, t.value() as u32, 128),
        Color => color::saturation(img, t.value()),
        Contrast => color::contrast(img, t.value()),
        Brightness => color::brightness(img, t.value()),
        Sharpness => color::sharpness(img, t.value()),
        RandomNoise => match t.aux {
            Aux::Noise { seed } => color::uniform_noise(img, t.value(), seed),
            _ => img.clone(),
        },
        GaussianNoise => match t.aux {
            Aux::Noise { seed } => color::gaussian_noise(img, t.value(), seed),
            _ => img.clone(),
        },
        GaussianBlur => color::gaussian_blur(img, t.value()),
        HorizontalFlip => hflip(img),
        VerticalFlip => vflip(img),
        Rotate => geometry::rotate(img, t.signed_value()),
        ShearX => geometry::shear_x(img, t.signed_value()),
        ShearY => geometry::shear_y(img, t.signed_value()),
        Cutout => match t.aux {
            Aux::Cutout { center_y, center_x } => geometry::cutout(img, t.value() as usize, center_y, center_x),
            _ => img.clone(),
        },
        TranslateX => geometry::translate(img, t.signed_value(), 0.0),
        TranslateY => geometry::translate(img, 0.0, t.signed_value()),
        Scale => geometry::scale(img, t.value(), t.value()),
        ScaleXY => match t.aux {
            Aux::ScaleXy { factor_y, factor_x } => geometry::scale(img, factor_y, factor_x),
            _ => img.clone(),
        },
    }
}

pub(crate) fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

//! Image and tensor containers, the TSR1/VOL1 interchange formats, and
//! volume-to-slice ingestion.
//!
//! TSR1 layout (little-endian throughout):
//!
//! | offset | size      | content                              |
//! |--------|-----------|--------------------------------------|
//! | 0      | 4         | ASCII `TSR1`                         |
//! | 4      | 1         | dtype code, `0x01` = float32         |
//! | 5      | 1         | ndim, 1..=4                          |
//! | 6      | 4 × ndim  | u32 extents                          |
//! | ...    | 4 × numel | row-major f32 payload                |
//!
//! VOL1 layout: ASCII `VOL1`, three u32 extents (sagittal, coronal, axial),
//! then a sagittal-major row-major f32 payload.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TSR1_MAGIC: &[u8; 4] = b"TSR1";
pub const VOL1_MAGIC: &[u8; 4] = b"VOL1";
pub const DTYPE_F32: u8 = 0x01;

/// Slices discarded at each end of the sagittal axis.
pub const SAGITTAL_MARGIN: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported dtype code {0:#04x}")]
    UnsupportedDtype(u8),
    #[error("ndim {0} outside 1..=4")]
    BadRank(usize),
    #[error("zero extent in dims {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("truncated {section}: need {needed} bytes, have {available}")]
    Truncated {
        section: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("payload length {len} does not match dims {dims:?}")]
    LengthMismatch { dims: Vec<usize>, len: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
}

/// H×W×3 8-bit RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image8 {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image8 {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("image dims {height}x{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "image data length {} != {height}x{width}x3",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        assert!(height > 0 && width > 0, "image dims must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> u8) -> Self {
        assert!(height > 0 && width > 0, "image dims must be positive");
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let rgb = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(h as usize, w as usize, rgb.into_raw())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = self.encode_png()?;
        fs::write(path.as_ref(), buf).map_err(|e| Error::io(path, e))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        use image::ImageEncoder;
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(out)
    }
}

/// Row-major dense tensor with 1 to 4 axes and no zero extents.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self, FormatError> {
        check_dims(&dims)?;
        let numel: usize = dims.iter().product();
        if data.len() != numel {
            return Err(FormatError::LengthMismatch { dims, len: data.len() });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self, FormatError> {
        let numel = dims.iter().product();
        Self::new(dims, vec![T::zero(); numel])
    }

    pub fn from_fn(dims: Vec<usize>, f: impl FnMut(usize) -> T) -> Result<Self, FormatError> {
        let numel = dims.iter().product();
        Self::new(dims, (0..numel).map(f).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64_lossy()).unwrap_or_else(U::nan))
                .collect(),
        }
    }
}

fn check_dims(dims: &[usize]) -> Result<(), FormatError> {
    if dims.is_empty() || dims.len() > 4 {
        return Err(FormatError::BadRank(dims.len()));
    }
    if dims.contains(&0) {
        return Err(FormatError::ZeroExtent(dims.to_vec()));
    }
    Ok(())
}

fn take<'a>(buf: &'a [u8], at: usize, n: usize, section: &'static str) -> Result<&'a [u8], FormatError> {
    buf.get(at..at + n).ok_or(FormatError::Truncated {
        section,
        needed: at + n,
        available: buf.len(),
    })
}

fn check_magic(buf: &[u8], expected: &[u8; 4]) -> Result<(), FormatError> {
    let head = take(buf, 0, 4, "magic")?;
    if head != expected {
        let mut found = [0u8; 4];
        found.copy_from_slice(head);
        return Err(FormatError::BadMagic {
            found,
            expected: *expected,
        });
    }
    Ok(())
}

fn read_f32s(buf: &[u8], at: usize, n: usize) -> Result<Vec<f32>, FormatError> {
    let payload = take(buf, at, n * 4, "payload")?;
    let trailing = buf.len() - (at + n * 4);
    if trailing != 0 {
        return Err(FormatError::TrailingBytes(trailing));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

impl Tensor<f32> {
    pub fn encode_tsr1(&self) -> Result<Vec<u8>, FormatError> {
        check_dims(&self.dims)?;
        if let Some(i) = self.first_non_finite() {
            return Err(FormatError::NonFinite(i));
        }
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TSR1_MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode_tsr1(buf: &[u8]) -> Result<Self, FormatError> {
        check_magic(buf, TSR1_MAGIC)?;
        let header = take(buf, 4, 2, "header")?;
        if header[0] != DTYPE_F32 {
            return Err(FormatError::UnsupportedDtype(header[0]));
        }
        let ndim = header[1] as usize;
        if !(1..=4).contains(&ndim) {
            return Err(FormatError::BadRank(ndim));
        }
        let dims: Vec<usize> = take(buf, 6, 4 * ndim, "dims")?
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .collect();
        check_dims(&dims)?;
        let numel: usize = dims.iter().product();
        let data = read_f32s(buf, 6 + 4 * ndim, numel)?;
        Ok(Self { dims, data })
    }

    pub fn write_tsr1(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.encode_tsr1()?;
        fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsr1(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path, e))?;
        Ok(Self::decode_tsr1(&bytes)?)
    }
}

/// Scalar volume with the sagittal axis first.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    sagittal: usize,
    coronal: usize,
    axial: usize,
    data: Vec<f32>,
}

impl VolumeGrid {
    pub fn new(sagittal: usize, coronal: usize, axial: usize, data: Vec<f32>) -> Result<Self> {
        if sagittal * coronal * axial == 0 {
            return Err(Error::invalid(format!("volume dims {sagittal}x{coronal}x{axial}")));
        }
        if data.len() != sagittal * coronal * axial {
            return Err(FormatError::LengthMismatch {
                dims: vec![sagittal, coronal, axial],
                len: data.len(),
            }
            .into());
        }
        if sagittal <= 2 * SAGITTAL_MARGIN {
            return Err(Error::TooThin(sagittal));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume"));
        }
        Ok(Self {
            sagittal,
            coronal,
            axial,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.sagittal, self.coronal, self.axial)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The coronal × axial plane at sagittal index `s`.
    pub fn sagittal_plane(&self, s: usize) -> &[f32] {
        let n = self.coronal * self.axial;
        &self.data[s * n..(s + 1) * n]
    }

    pub fn encode_vol1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(VOL1_MAGIC);
        for d in [self.sagittal, self.coronal, self.axial] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode_vol1(buf: &[u8]) -> Result<Self> {
        check_magic(buf, VOL1_MAGIC)?;
        let dims: Vec<usize> = take(buf, 4, 12, "dims")?
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .collect();
        if dims.contains(&0) {
            return Err(FormatError::ZeroExtent(dims).into());
        }
        let data = read_f32s(buf, 16, dims.iter().product())?;
        Self::new(dims[0], dims[1], dims[2], data)
    }

    pub fn read_vol1(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path, e))?;
        Self::decode_vol1(&bytes)
    }

    pub fn write_vol1(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.encode_vol1()).map_err(|e| Error::io(path, e))
    }
}

/// Min-max scale one plane to 8 bits with round-half-up. Constant planes map to 0.
fn plane_to_u8(plane: &[f32]) -> Vec<u8> {
    let (lo, hi) = plane.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if hi <= lo {
        return vec![0; plane.len()];
    }
    let range = f64::from(hi) - f64::from(lo);
    plane
        .iter()
        .map(|&v| {
            ((f64::from(v) - f64::from(lo)) / range * 255.0 + 0.5)
                .floor()
                .clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Sagittal slices with the first and last twenty discarded, each scaled to
/// [0, 255] and replicated into R, G and B. Slices are `coronal` rows by
/// `axial` columns.
pub fn volume_to_slices(vol: &VolumeGrid) -> Result<Vec<Image8>> {
    let (sag, cor, ax) = vol.dims();
    if sag <= 2 * SAGITTAL_MARGIN {
        return Err(Error::TooThin(sag));
    }
    (SAGITTAL_MARGIN..sag - SAGITTAL_MARGIN)
        .map(|s| {
            let gray = plane_to_u8(vol.sagittal_plane(s));
            let data = gray.iter().flat_map(|&g| [g, g, g]).collect();
            Image8::new(cor, ax, data)
        })
        .collect()
}

/// Channel-first 3×H×W tensor with samples scaled to [0, 1].
pub fn image_to_tensor<T: Scalar>(img: &Image8) -> Tensor<T> {
    let (h, w) = (img.height(), img.width());
    let scale = T::lit(255.0);
    let mut data = vec![T::zero(); 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[(c * h + y) * w + x] = T::from_u8(img.get(y, x, c)).unwrap() / scale;
            }
        }
    }
    Tensor {
        dims: vec![3, h, w],
        data,
    }
}

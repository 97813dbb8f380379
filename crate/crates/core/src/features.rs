//! Orthonormal 2D DCT-II and the 64-value signature descriptor.
//!
//! The descriptor is the 8×8 low-frequency corner of the DCT of the aligned
//! signature resampled to 64×64, read in zig-zag order and min-max scaled to
//! [0, 1].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{self, GrayImage, DEFAULT_INK_THRESHOLD};
use crate::rst::minmax_normalize;

pub const FEATURE_LEN: usize = 64;

/// Side of the square raster the DCT is taken over.
pub const DCT_FRAME: usize = 64;

/// Side of the retained low-frequency block.
pub const BLOCK: usize = 8;

/// DCT coefficients stored row-major: row `v` is vertical frequency, column
/// `u` horizontal frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct DctCoeffs {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DctCoeffs {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width * height != values.len() || width == 0 || height == 0 {
            return Err(Error::dims(format!("{width}x{height}"), values.len()));
        }
        Ok(DctCoeffs {
            width,
            height,
            values,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// `basis[k][n] = α(k) cos(π (2n + 1) k / 2N)` with α(0) = √(1/N), else √(2/N).
fn dct_basis(n: usize) -> Vec<Vec<f64>> {
    let len = n as f64;
    (0..n)
        .map(|k| {
            let alpha = if k == 0 {
                (1.0 / len).sqrt()
            } else {
                (2.0 / len).sqrt()
            };
            (0..n)
                .map(|i| alpha * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * len)).cos())
                .collect()
        })
        .collect()
}

/// Applies `basis` (or its transpose) along rows then columns.
fn separable(width: usize, height: usize, data: &[f64], inverse: bool) -> Vec<f64> {
    let bw = dct_basis(width);
    let bh = dct_basis(height);
    let coef = |basis: &[Vec<f64>], out: usize, inp: usize| {
        if inverse {
            basis[inp][out]
        } else {
            basis[out][inp]
        }
    };
    let mut rows = vec![0.0; width * height];
    for y in 0..height {
        let src = &data[y * width..(y + 1) * width];
        for u in 0..width {
            rows[y * width + u] = src
                .iter()
                .enumerate()
                .map(|(x, v)| coef(&bw, u, x) * v)
                .sum();
        }
    }
    let mut out = vec![0.0; width * height];
    for v in 0..height {
        for y in 0..height {
            let c = coef(&bh, v, y);
            let src = &rows[y * width..(y + 1) * width];
            let dst = &mut out[v * width..(v + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c * s;
            }
        }
    }
    out
}

/// Orthonormal DCT-II of a real raster.
pub fn dct2_real(width: usize, height: usize, data: &[f64]) -> Result<DctCoeffs> {
    if width == 0 || height == 0 || data.len() != width * height {
        return Err(Error::dims(format!("{width}x{height}"), data.len()));
    }
    DctCoeffs::new(width, height, separable(width, height, data, false))
}

pub fn dct2(img: &GrayImage) -> DctCoeffs {
    let data: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    dct2_real(img.width(), img.height(), &data).expect("image dimensions are consistent")
}

/// Inverse of [`dct2`], returned as a row-major real raster.
pub fn idct2(coeffs: &DctCoeffs) -> Vec<f64> {
    separable(coeffs.width, coeffs.height, &coeffs.values, true)
}

/// `(row, col)` positions of a k×k block in JPEG zig-zag order.
pub fn zigzag_order(k: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(k * k);
    for s in 0..(2 * k).saturating_sub(1) {
        let lo = s.saturating_sub(k - 1);
        let hi = s.min(k - 1);
        if s % 2 == 1 {
            order.extend((lo..=hi).map(|r| (r, s - r)));
        } else {
            order.extend((lo..=hi).rev().map(|r| (r, s - r)));
        }
    }
    order
}

/// The top-left k×k block flattened in zig-zag order, DC first.
pub fn zigzag_block(coeffs: &DctCoeffs, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > coeffs.width || k > coeffs.height {
        return Err(Error::BlockTooLarge {
            k,
            width: coeffs.width,
            height: coeffs.height,
        });
    }
    Ok(zigzag_order(k)
        .into_iter()
        .map(|(r, c)| coeffs.get(r, c))
        .collect())
}

/// 64 values in [0, 1] describing one signature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    pub source_id: Option<String>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(Error::dims(FEATURE_LEN, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature values must be finite".into(),
            ));
        }
        Ok(FeatureVector {
            values,
            source_id: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source_id = Some(source.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// How a descriptor is computed from an aligned signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureExtractor {
    /// 64×64 resample, DCT, zig-zag of the 8×8 low-frequency block.
    #[default]
    DctLowFrequency,
    /// The aligned image shrunk to 8×8 and used pixel by pixel.
    RawPixels,
}

impl FeatureExtractor {
    pub fn extract(&self, aligned: &GrayImage) -> Result<FeatureVector> {
        self.extract_with_threshold(aligned, DEFAULT_INK_THRESHOLD)
    }

    pub fn extract_with_threshold(&self, aligned: &GrayImage, ink: u8) -> Result<FeatureVector> {
        image::ink_bbox(aligned, ink)?;
        let raw = match self {
            FeatureExtractor::DctLowFrequency => {
                let frame = image::resize(aligned, DCT_FRAME, DCT_FRAME);
                if frame.is_constant() {
                    return Err(Error::DegenerateRange);
                }
                zigzag_block(&dct2(&frame), BLOCK)?
            }
            FeatureExtractor::RawPixels => image::resize(aligned, BLOCK, BLOCK)
                .pixels()
                .iter()
                .map(|&p| p as f64)
                .collect(),
        };
        FeatureVector::new(minmax_normalize(&raw)?)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureExtractor::DctLowFrequency => "dct",
            FeatureExtractor::RawPixels => "raw",
        }
    }
}

impl std::str::FromStr for FeatureExtractor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct" => Ok(FeatureExtractor::DctLowFrequency),
            "raw" => Ok(FeatureExtractor::RawPixels),
            other => Err(Error::InvalidArgument(format!(
                "unknown feature extractor {other:?} (expected dct or raw)"
            ))),
        }
    }
}

/// Descriptor of an aligned signature with the default extractor.
pub fn extract_features(aligned: &GrayImage) -> Result<FeatureVector> {
    FeatureExtractor::default().extract(aligned)
}

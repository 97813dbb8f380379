//! Rotation, translation and scale removal between a probe signature and a
//! reference.
//!
//! Correction always runs in the order rotation, translation, scale: the ink
//! box of a tilted signature says nothing reliable about its size until the
//! tilt is gone.
//!
//! Rotation is found by brute force. The probe is turned back by every
//! multiple of 5° in ±60°, each candidate is cropped to its ink and resampled
//! into a fixed square frame, and the frame is correlated with the
//! reference's frame. The best coarse angle is then refined at 1° steps
//! within ±3°.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{self, GrayImage, InkBox, DEFAULT_INK_THRESHOLD};

/// Detected geometric distortion of a probe relative to its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RstParams {
    /// Counter-clockwise tilt of the probe, in whole degrees within ±60.
    pub rotation_deg: f64,
    /// Blank columns left of the ink after de-rotation.
    pub translation_x: usize,
    /// Blank rows below the ink after de-rotation.
    pub translation_y: usize,
    /// Reference ink height divided by probe ink height.
    pub scale_ratio: f64,
}

/// Coarse-sweep correlation scores, min-max normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationProfile {
    pub angles: Vec<f64>,
    pub scores: Vec<f64>,
    /// The un-normalized correlation coefficients behind `scores`.
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationEstimate {
    pub angle_deg: f64,
    pub profile: CorrelationProfile,
    /// Correlation of the reference with the probe at `angle_deg`.
    pub peak_correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub cropped: GrayImage,
    pub tx: usize,
    pub ty: usize,
    pub bbox: InkBox,
}

/// Output of [`correct_rst`].
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Probe resampled to the reference's tight-crop size.
    pub aligned: GrayImage,
    pub params: RstParams,
    pub profile: CorrelationProfile,
    pub peak_correlation: f64,
    /// Reference ink width over probe ink width. Diagnostic only, never applied.
    pub width_ratio: f64,
}

/// Search grid and thresholds for alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RstConfig {
    pub ink_threshold: u8,
    /// Side of the square frame both images are resampled to before correlating.
    pub frame_size: usize,
    pub coarse_step_deg: i32,
    pub max_angle_deg: i32,
    pub fine_radius_deg: i32,
}

impl Default for RstConfig {
    fn default() -> Self {
        RstConfig {
            ink_threshold: DEFAULT_INK_THRESHOLD,
            frame_size: 64,
            coarse_step_deg: 5,
            max_angle_deg: 60,
            fine_radius_deg: 3,
        }
    }
}

/// Pearson correlation of two equally sized images over all pixels.
pub fn ncc(p: &GrayImage, q: &GrayImage) -> Result<f64> {
    if (p.width(), p.height()) != (q.width(), q.height()) {
        return Err(Error::dims(
            format!("{}x{}", p.width(), p.height()),
            format!("{}x{}", q.width(), q.height()),
        ));
    }
    let to_f64 = |img: &GrayImage| img.pixels().iter().map(|&v| v as f64).collect::<Vec<_>>();
    correlate(&to_f64(p), &to_f64(q))
}

/// Pearson correlation of two equally long real sequences.
pub fn correlate(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dims(p.len(), q.len()));
    }
    let n = p.len() as f64;
    let mean_p = p.iter().sum::<f64>() / n;
    let mean_q = q.iter().sum::<f64>() / n;
    let (mut cross, mut var_p, mut var_q) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(q) {
        let (da, db) = (a - mean_p, b - mean_q);
        cross += da * db;
        var_p += da * da;
        var_q += db * db;
    }
    let denom = (var_p * var_q).sqrt();
    if denom == 0.0 {
        return Err(Error::ConstantImage);
    }
    Ok(cross / denom)
}

/// Rescales values linearly so the minimum maps to 0 and the maximum to 1.
pub fn minmax_normalize(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "min-max normalization needs at least two values".into(),
        ));
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = hi - lo;
    if range <= 0.0 || !range.is_finite() {
        return Err(Error::DegenerateRange);
    }
    Ok(xs.iter().map(|&x| (x - lo) / range).collect())
}

/// Mean-centered comparison frame of an image's ink region.
#[derive(Debug, Clone)]
pub struct ComparisonFrame {
    centered: Vec<f64>,
    norm: f64,
}

impl ComparisonFrame {
    pub fn new(img: &GrayImage, config: &RstConfig) -> Result<Self> {
        let bbox = image::ink_bbox(img, config.ink_threshold)?;
        let cropped = image::crop(img, bbox)?;
        let values = image::resample(&cropped, config.frame_size, config.frame_size);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ConstantImage);
        }
        Ok(ComparisonFrame { centered, norm })
    }

    pub fn correlate(&self, other: &ComparisonFrame) -> f64 {
        let dot: f64 = self
            .centered
            .iter()
            .zip(&other.centered)
            .map(|(a, b)| a * b)
            .sum();
        dot / (self.norm * other.norm)
    }
}

#[derive(Debug, Clone, Copy)]
enum FrameFailure {
    NoInk,
    Constant,
}

impl From<FrameFailure> for Error {
    fn from(f: FrameFailure) -> Self {
        match f {
            FrameFailure::NoInk => Error::NoInk,
            FrameFailure::Constant => Error::ConstantImage,
        }
    }
}

/// Probe-side state of the rotation sweep.
///
/// Frames of the de-rotated probe are computed once per angle and reused,
/// so one probe can be compared against many references cheaply.
pub struct RotationSearch {
    probe: GrayImage,
    config: RstConfig,
    frames: Vec<OnceLock<std::result::Result<ComparisonFrame, FrameFailure>>>,
}

impl RotationSearch {
    pub fn new(probe: &GrayImage, config: RstConfig) -> Result<Self> {
        let bbox = image::ink_bbox(probe, config.ink_threshold)?;
        let probe = image::crop(probe, bbox)?;
        let slots = 2 * (config.max_angle_deg + config.fine_radius_deg) as usize + 1;
        Ok(RotationSearch {
            probe,
            config,
            frames: (0..slots).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn config(&self) -> &RstConfig {
        &self.config
    }

    /// Frame of the probe turned back by `angle` degrees.
    fn frame(&self, angle: i32) -> Result<&ComparisonFrame> {
        let offset = self.config.max_angle_deg + self.config.fine_radius_deg;
        let slot = &self.frames[(angle + offset) as usize];
        slot.get_or_init(|| {
            let turned = image::rotate(&self.probe, -(angle as f64));
            ComparisonFrame::new(&turned, &self.config).map_err(|e| match e {
                Error::NoInk => FrameFailure::NoInk,
                _ => FrameFailure::Constant,
            })
        })
        .as_ref()
        .map_err(|&f| f.into())
    }

    fn scores(&self, reference: &ComparisonFrame, angles: &[i32]) -> Result<Vec<f64>> {
        angles
            .par_iter()
            .map(|&a| self.frame(a).map(|f| reference.correlate(f)))
            .collect()
    }

    /// Coarse sweep followed by a 1° refinement around the coarse peak.
    pub fn estimate(&self, reference: &ComparisonFrame) -> Result<RotationEstimate> {
        let c = &self.config;
        let step = c.coarse_step_deg.max(1) as usize;
        let coarse: Vec<i32> = (-c.max_angle_deg..=c.max_angle_deg).step_by(step).collect();
        let coarse_scores = self.scores(reference, &coarse)?;
        let coarse_best = coarse[best_index(&coarse, &coarse_scores)];

        let fine: Vec<i32> =
            (coarse_best - c.fine_radius_deg..=coarse_best + c.fine_radius_deg).collect();
        let fine_scores = self.scores(reference, &fine)?;
        let angle = fine[best_index(&fine, &fine_scores)].clamp(-c.max_angle_deg, c.max_angle_deg);
        let peak_correlation = reference.correlate(self.frame(angle)?);

        // a perfectly flat sweep has no preferred angle; report it as all zeros
        let scores = minmax_normalize(&coarse_scores).unwrap_or_else(|_| vec![0.0; coarse.len()]);
        Ok(RotationEstimate {
            angle_deg: angle as f64,
            profile: CorrelationProfile {
                angles: coarse.iter().map(|&a| a as f64).collect(),
                scores,
                raw: coarse_scores,
            },
            peak_correlation,
        })
    }
}

/// Highest score; ties go to the smaller absolute angle, then the smaller angle.
fn best_index(angles: &[i32], scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..angles.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best]
                && (angles[i].abs(), angles[i]) < (angles[best].abs(), angles[best]));
        if better {
            best = i;
        }
    }
    best
}

impl RstConfig {
    pub fn estimate_rotation(
        &self,
        reference: &GrayImage,
        probe: &GrayImage,
    ) -> Result<RotationEstimate> {
        let reference = ComparisonFrame::new(reference, self)?;
        RotationSearch::new(probe, *self)?.estimate(&reference)
    }

    pub fn remove_translation(&self, img: &GrayImage) -> Result<Translation> {
        let bbox = image::ink_bbox(img, self.ink_threshold)?;
        Ok(Translation {
            cropped: image::crop(img, bbox)?,
            tx: bbox.left,
            ty: img.height() - 1 - bbox.bottom,
            bbox,
        })
    }

    pub fn correct(&self, reference: &GrayImage, probe: &GrayImage) -> Result<Alignment> {
        let rotation = self.estimate_rotation(reference, probe)?;
        self.correct_with_rotation(reference, probe, rotation)
    }

    /// Translation and scale steps of [`RstConfig::correct`] for an already
    /// estimated rotation.
    pub fn correct_with_rotation(
        &self,
        reference: &GrayImage,
        probe: &GrayImage,
        rotation: RotationEstimate,
    ) -> Result<Alignment> {
        let upright = image::rotate(probe, -rotation.angle_deg);
        let reference = self.remove_translation(reference)?;
        let probe = self.remove_translation(&upright)?;
        let scale_ratio = estimate_scale(&reference.cropped, &probe.cropped)?;
        let width_ratio = reference.cropped.width() as f64 / probe.cropped.width() as f64;
        let aligned = image::resize(
            &probe.cropped,
            reference.cropped.width(),
            reference.cropped.height(),
        );
        Ok(Alignment {
            aligned,
            params: RstParams {
                rotation_deg: rotation.angle_deg,
                translation_x: probe.tx,
                translation_y: probe.ty,
                scale_ratio,
            },
            profile: rotation.profile,
            peak_correlation: rotation.peak_correlation,
            width_ratio,
        })
    }
}

/// Tilt of `probe` relative to `reference`, with the default search grid.
pub fn estimate_rotation(reference: &GrayImage, probe: &GrayImage) -> Result<RotationEstimate> {
    RstConfig::default().estimate_rotation(reference, probe)
}

/// Crops to the ink box; reports the blank columns on the left and the
/// blank rows at the bottom.
pub fn remove_translation(img: &GrayImage) -> Result<Translation> {
    RstConfig::default().remove_translation(img)
}

/// Height of the reference ink over height of the probe ink.
pub fn estimate_scale(reference_cropped: &GrayImage, probe_cropped: &GrayImage) -> Result<f64> {
    Ok(reference_cropped.height() as f64 / probe_cropped.height() as f64)
}

/// Full rotation, translation, scale correction with default settings.
pub fn correct_rst(reference: &GrayImage, probe: &GrayImage) -> Result<Alignment> {
    RstConfig::default().correct(reference, probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, px: &[u8]) -> GrayImage {
        GrayImage::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let p = GrayImage::from_fn(7, 5, |x, y| (x * 31 + y * 17) as u8);
        assert!((ncc(&p, &p).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn inverted_correlation_is_minus_one() {
        let p = GrayImage::from_fn(7, 5, |x, y| (x * 31 + y * 17) as u8);
        let q = GrayImage::from_fn(7, 5, |x, y| 255 - p.get(x, y));
        assert!((ncc(&p, &q).unwrap() + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn two_by_two_matches_hand_evaluation() {
        // P0 = 2.5, Q0 = 2.75; deviations (-1.5,-0.5,0.5,1.5) and (-1.75,-0.75,0.25,2.25)
        let p = img(2, 2, &[1, 2, 3, 4]);
        let q = img(2, 2, &[1, 2, 3, 5]);
        let cross = 1.5 * 1.75 + 0.5 * 0.75 + 0.5 * 0.25 + 1.5 * 2.25;
        let vp = 2.25 + 0.25 + 0.25 + 2.25;
        let vq = 1.75f64.powi(2) + 0.75f64.powi(2) + 0.25f64.powi(2) + 2.25f64.powi(2);
        let expected = cross / (vp * vq).sqrt();
        assert!((ncc(&p, &q).unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn ncc_errors() {
        let p = img(2, 1, &[1, 2]);
        assert_eq!(
            ncc(&p, &img(1, 2, &[1, 2])).unwrap_err().name(),
            "DimensionMismatch"
        );
        assert_eq!(
            ncc(&p, &img(2, 1, &[9, 9])).unwrap_err().name(),
            "ConstantImage"
        );
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(
            minmax_normalize(&[2.0, 4.0, 6.0]).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            minmax_normalize(&[-1.0, 0.0, 3.0]).unwrap(),
            vec![0.0, 0.25, 1.0]
        );
        assert_eq!(
            minmax_normalize(&[5.0, 5.0, 5.0]).unwrap_err().name(),
            "DegenerateRange"
        );
    }

    #[test]
    fn translation_of_interior_block() {
        let mut im = GrayImage::filled(10, 10, 255);
        for y in 4..=6 {
            for x in 4..=6 {
                im.set(x, y, 0);
            }
        }
        let t = remove_translation(&im).unwrap();
        assert_eq!((t.tx, t.ty), (4, 3));
        assert_eq!((t.cropped.width(), t.cropped.height()), (3, 3));
    }

    #[test]
    fn tight_image_has_no_translation() {
        let im = GrayImage::from_fn(4, 3, |x, y| if (x + y) % 2 == 0 { 0 } else { 200 });
        let t = remove_translation(&im).unwrap();
        assert_eq!((t.tx, t.ty), (0, 0));
        assert_eq!(t.cropped, im);
    }

    #[test]
    fn scale_is_height_ratio() {
        let a = GrayImage::filled(10, 120, 0);
        let b = GrayImage::filled(300, 60, 0);
        assert_eq!(estimate_scale(&a, &b).unwrap(), 2.0);
        assert_eq!(estimate_scale(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ties_prefer_small_angles() {
        assert_eq!(best_index(&[-5, 0, 5], &[1.0, 1.0, 1.0]), 1);
        assert_eq!(best_index(&[-5, 5], &[0.3, 0.3]), 0);
        assert_eq!(best_index(&[-5, 0, 5], &[0.1, 0.2, 0.9]), 2);
    }

    proptest! {
        #[test]
        fn ncc_is_symmetric(px in prop::collection::vec(any::<u8>(), 12),
                            qx in prop::collection::vec(any::<u8>(), 12)) {
            let (p, q) = (img(4, 3, &px), img(4, 3, &qx));
            if let (Ok(a), Ok(b)) = (ncc(&p, &q), ncc(&q, &p)) {
                prop_assert!((a - b).abs() <= 1e-12);
                prop_assert!(a.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn ncc_ignores_positive_affine_remaps(
            p in prop::collection::vec(0.0f64..255.0, 16),
            q in prop::collection::vec(0.0f64..255.0, 16),
            gain in 0.01f64..50.0, bias in -500.0f64..500.0,
        ) {
            let remapped: Vec<f64> = q.iter().map(|v| gain * v + bias).collect();
            if let (Ok(a), Ok(b)) = (correlate(&p, &q), correlate(&p, &remapped)) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn minmax_hits_both_ends_and_keeps_ranks(
            xs in prop::collection::vec(-1e6f64..1e6, 2..40)
        ) {
            if let Ok(ys) = minmax_normalize(&xs) {
                prop_assert!(ys.contains(&0.0));
                prop_assert!(ys.contains(&1.0));
                for i in 0..xs.len() {
                    prop_assert!((0.0..=1.0).contains(&ys[i]));
                    for j in 0..xs.len() {
                        if xs[i] < xs[j] {
                            prop_assert!(ys[i] <= ys[j]);
                        }
                    }
                }
            }
        }
    }
}

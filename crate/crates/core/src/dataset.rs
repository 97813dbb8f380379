//! Synthetic signatures with known distortions, the on-disk database layout,
//! and the enrollment gallery.
//!
//! Each subject is a seeded set of pen strokes (cubic segments through random
//! control points, left to right across the canvas). Every sample of a
//! subject perturbs those control points by at most 3 px, so two samples of
//! one subject differ the way two real signatures of one writer do.
//!
//! Layout on disk:
//!
//! ```text
//! db/subjects/<id>/<nn>.pgm     sample 00 enrolls, the rest are probes
//! db/ground_truth.csv           subject_id,sample,rotation_deg,scale,tx,ty,noise_sigma,seed
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureVector, FEATURE_LEN};
use crate::image::{self, GrayImage, BACKGROUND, DEFAULT_INK_THRESHOLD};
use crate::numfmt::sig17;
use crate::rbfn::Sample;

pub const DEFAULT_CANVAS: (usize, usize) = (256, 128);

/// Largest per-sample displacement of a control point, in pixels.
pub const SAMPLE_JITTER: f64 = 3.0;

/// Derives an independent seed from a parent seed and a stream index.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Geometric and photometric distortion applied to a clean render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub rotation_deg: f64,
    pub scale: f64,
    /// Offset of the transformed image from the canvas's left and bottom edges.
    pub translation: (i64, i64),
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Distortion {
    pub fn identity() -> Self {
        Distortion {
            rotation_deg: 0.0,
            scale: 1.0,
            translation: (0, 0),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-60.0..=60.0).contains(&self.rotation_deg) {
            return Err(Error::InvalidArgument(format!(
                "rotation {} outside [-60, 60]",
                self.rotation_deg
            )));
        }
        if !(0.25..=1.8).contains(&self.scale) {
            return Err(Error::InvalidArgument(format!(
                "scale {} outside [0.25, 1.8]",
                self.scale
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Everything needed to reproduce one synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub subject_seed: u64,
    pub sample_index: u32,
    pub canvas: (usize, usize),
    /// 2–6 strokes; drawn from the subject seed when `None`.
    pub stroke_count: Option<usize>,
    pub distortion: Option<Distortion>,
}

impl SyntheticSpec {
    pub fn new(subject_seed: u64) -> Self {
        SyntheticSpec {
            subject_seed,
            sample_index: 0,
            canvas: DEFAULT_CANVAS,
            stroke_count: None,
            distortion: None,
        }
    }

    pub fn sample(mut self, index: u32) -> Self {
        self.sample_index = index;
        self
    }

    pub fn distorted(mut self, distortion: Distortion) -> Self {
        self.distortion = Some(distortion);
        self
    }
}

type Point = (f64, f64);

/// Control polygons of a subject's strokes, before per-sample jitter.
fn subject_strokes(spec: &SyntheticSpec) -> (Vec<Vec<Point>>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.subject_seed);
    let (w, h) = (spec.canvas.0 as f64, spec.canvas.1 as f64);
    let count = spec
        .stroke_count
        .unwrap_or_else(|| rng.random_range(2..=6))
        .clamp(2, 6);
    let half_width = rng.random_range(2.0..3.0);
    let (margin_x, margin_y) = (0.08 * w, 0.15 * h);
    let span = (w - 2.0 * margin_x) / count as f64;
    let strokes = (0..count)
        .map(|s| {
            let x0 = margin_x + s as f64 * span;
            let points = rng.random_range(4..=7);
            (0..points)
                .map(|p| {
                    let t = p as f64 / (points - 1) as f64;
                    let x = x0 + t * span * 1.1 + rng.random_range(-0.15..0.15) * span;
                    let y = rng.random_range(margin_y..h - margin_y);
                    (x, y)
                })
                .collect()
        })
        .collect();
    (strokes, half_width)
}

/// Catmull-Rom spline through `pts`, as a dense polyline.
fn spline(pts: &[Point]) -> Vec<Point> {
    let n = pts.len();
    let at = |i: isize| pts[i.clamp(0, n as isize - 1) as usize];
    let mut out = vec![pts[0]];
    for i in 0..n as isize - 1 {
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        // equivalent cubic Bezier control points
        let c1 = (p1.0 + (p2.0 - p0.0) / 6.0, p1.1 + (p2.1 - p0.1) / 6.0);
        let c2 = (p2.0 - (p3.0 - p1.0) / 6.0, p2.1 - (p3.1 - p1.1) / 6.0);
        let hull = dist(p1, c1) + dist(c1, c2) + dist(c2, p2);
        let steps = hull.ceil().max(1.0) as usize;
        for k in 1..=steps {
            let t = k as f64 / steps as f64;
            let u = 1.0 - t;
            let b = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
            out.push((
                b[0] * p1.0 + b[1] * c1.0 + b[2] * c2.0 + b[3] * p2.0,
                b[0] * p1.1 + b[1] * c1.1 + b[2] * c2.1 + b[3] * p2.1,
            ));
        }
    }
    out
}

fn dist(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    dist(p, (a.0 + t * dx, a.1 + t * dy))
}

/// Renders the undistorted sample: dark anti-aliased strokes on white.
pub fn render_clean(spec: &SyntheticSpec) -> GrayImage {
    let (w, h) = spec.canvas;
    let (strokes, half_width) = subject_strokes(spec);
    let mut jitter =
        ChaCha8Rng::seed_from_u64(mix_seed(spec.subject_seed, spec.sample_index as u64));
    let mut field = vec![f64::INFINITY; w * h];
    let reach = half_width + 1.0;
    for stroke in strokes {
        let moved: Vec<Point> = stroke
            .iter()
            .map(|&(x, y)| {
                (
                    (x + jitter.random_range(-SAMPLE_JITTER..=SAMPLE_JITTER))
                        .clamp(reach, w as f64 - 1.0 - reach),
                    (y + jitter.random_range(-SAMPLE_JITTER..=SAMPLE_JITTER))
                        .clamp(reach, h as f64 - 1.0 - reach),
                )
            })
            .collect();
        for seg in spline(&moved).windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let x_lo = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
            let x_hi = ((a.0.max(b.0) + reach).ceil() as usize).min(w - 1);
            let y_lo = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
            let y_hi = ((a.1.max(b.1) + reach).ceil() as usize).min(h - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let d = segment_distance((x as f64, y as f64), a, b);
                    let slot = &mut field[y * w + x];
                    *slot = slot.min(d);
                }
            }
        }
    }
    let pixels = field
        .into_iter()
        .map(|d| image::round_u8(255.0 * (d - half_width + 0.5).clamp(0.0, 1.0)))
        .collect();
    GrayImage::new(w, h, pixels).expect("canvas dimensions are positive")
}

/// Renders the sample described by `spec`, applying its distortion (if any)
/// on a canvas padded by 16 px around the transformed image.
pub fn generate_signature(spec: &SyntheticSpec) -> Result<GrayImage> {
    let clean = render_clean(spec);
    match &spec.distortion {
        None => Ok(clean),
        Some(d) => {
            let (tw, th) = transformed(&clean, d.rotation_deg, d.scale)?.dims();
            let canvas = (
                tw + 32 + d.translation.0.unsigned_abs() as usize,
                th + 32 + d.translation.1.unsigned_abs() as usize,
            );
            distort(&clean, d, canvas)
        }
    }
}

trait Dims {
    fn dims(&self) -> (usize, usize);
}

impl Dims for GrayImage {
    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
}

/// Scale first, then rotate on a grown canvas.
pub fn transformed(img: &GrayImage, rotation_deg: f64, scale: f64) -> Result<GrayImage> {
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale {scale} must be positive"
        )));
    }
    let scaled = if scale == 1.0 {
        img.clone()
    } else {
        let w = ((img.width() as f64 * scale).round() as usize).max(1);
        let h = ((img.height() as f64 * scale).round() as usize).max(1);
        image::resize(img, w, h)
    };
    Ok(image::rotate(&scaled, rotation_deg))
}

/// Scales, rotates and places `img` on a white `canvas`, then adds seeded
/// Gaussian noise. The transformed image's bottom-left corner lands
/// `translation` pixels from the canvas's left and bottom edges.
pub fn distort(img: &GrayImage, d: &Distortion, canvas: (usize, usize)) -> Result<GrayImage> {
    d.validate()?;
    let (cw, ch) = canvas;
    if cw == 0 || ch == 0 {
        return Err(Error::InvalidArgument("canvas must be at least 1x1".into()));
    }
    let t = transformed(img, d.rotation_deg, d.scale)?;
    let x0 = d.translation.0;
    let y0 = ch as i64 - d.translation.1 - t.height() as i64;
    if let Ok(ink) = image::ink_bbox(&t, DEFAULT_INK_THRESHOLD) {
        let fits = x0 + ink.left as i64 >= 0
            && y0 + ink.top as i64 >= 0
            && x0 + (ink.right as i64) < cw as i64
            && y0 + (ink.bottom as i64) < ch as i64;
        if !fits {
            return Err(Error::InkClipped {
                width: cw,
                height: ch,
            });
        }
    }
    let mut out = GrayImage::filled(cw, ch, BACKGROUND);
    for y in 0..t.height() {
        let cy = y0 + y as i64;
        if cy < 0 || cy >= ch as i64 {
            continue;
        }
        for x in 0..t.width() {
            let cx = x0 + x as i64;
            if cx >= 0 && cx < cw as i64 {
                out.set(cx as usize, cy as usize, t.get(x, y));
            }
        }
    }
    if d.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, d.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
        let noisy = out
            .pixels()
            .iter()
            .map(|&p| image::round_u8(p as f64 + normal.sample(&mut rng)))
            .collect();
        out = GrayImage::new(cw, ch, noisy)?;
    }
    Ok(out)
}

/// Applied distortion of one database sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub subject_id: String,
    pub sample: usize,
    pub rotation_deg: f64,
    pub scale: f64,
    pub tx: i64,
    pub ty: i64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Size and distortion ranges of a generated database.
#[derive(Debug, Clone, PartialEq)]
pub struct DbConfig {
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub seed: u64,
    pub canvas: (usize, usize),
    /// Probe tilts are whole degrees in ±this.
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub noise_sigma: f64,
    /// White border around each transformed probe; also the translation range.
    pub pad: usize,
}

impl Default for DbConfig {
    fn default() -> Self {
        DbConfig {
            subjects: 70,
            samples_per_subject: 10,
            seed: 0,
            canvas: DEFAULT_CANVAS,
            max_rotation_deg: 30.0,
            scale_range: (0.7, 1.3),
            noise_sigma: 4.0,
            pad: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// Sample 0 is the enrollment image.
    pub samples: Vec<GrayImage>,
    pub truth: Vec<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignatureDb {
    pub subjects: Vec<SubjectRecord>,
}

pub fn subject_id(index: usize) -> String {
    format!("s{:03}", index + 1)
}

impl SignatureDb {
    /// Renders every subject; sample 0 is left undistorted.
    pub fn generate(config: &DbConfig) -> Result<Self> {
        if config.subjects == 0 || config.samples_per_subject < 1 {
            return Err(Error::InvalidArgument(
                "need at least one subject and one sample".into(),
            ));
        }
        let subjects = (0..config.subjects)
            .into_par_iter()
            .map(|s| generate_subject(config, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(SignatureDb { subjects })
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for subject in &self.subjects {
            let sub = dir.join("subjects").join(&subject.id);
            fs::create_dir_all(&sub)?;
            for (n, img) in subject.samples.iter().enumerate() {
                image::save_image(img, sub.join(format!("{n:02}.pgm")))?;
            }
        }
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record([
            "subject_id",
            "sample",
            "rotation_deg",
            "scale",
            "tx",
            "ty",
            "noise_sigma",
            "seed",
        ])?;
        for t in self.subjects.iter().flat_map(|s| &s.truth) {
            csv.write_record([
                t.subject_id.clone(),
                t.sample.to_string(),
                t.rotation_deg.to_string(),
                t.scale.to_string(),
                t.tx.to_string(),
                t.ty.to_string(),
                t.noise_sigma.to_string(),
                t.seed.to_string(),
            ])?;
        }
        write_atomic(&dir.join("ground_truth.csv"), &csv_bytes(csv)?)
    }

    /// Reads `subjects/<id>/*.pgm`; ground truth is picked up when present.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut subjects = Vec::new();
        for (id, files) in list_subjects(dir)? {
            let samples = files
                .iter()
                .map(image::load_image)
                .collect::<Result<Vec<_>>>()?;
            subjects.push(SubjectRecord {
                id,
                samples,
                truth: Vec::new(),
            });
        }
        if subjects.is_empty() {
            return Err(Error::EmptyDirectory(dir.to_path_buf()));
        }
        let truth_path = dir.join("ground_truth.csv");
        if truth_path.exists() {
            for t in read_ground_truth(&truth_path)? {
                if let Some(s) = subjects.iter_mut().find(|s| s.id == t.subject_id) {
                    s.truth.push(t);
                }
            }
        }
        Ok(SignatureDb { subjects })
    }
}

fn generate_subject(config: &DbConfig, index: usize) -> Result<SubjectRecord> {
    let id = subject_id(index);
    let subject_seed = mix_seed(config.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(subject_seed, u64::MAX));
    let mut samples = Vec::with_capacity(config.samples_per_subject);
    let mut truth = Vec::with_capacity(config.samples_per_subject);
    for n in 0..config.samples_per_subject {
        let spec = SyntheticSpec {
            canvas: config.canvas,
            ..SyntheticSpec::new(subject_seed).sample(n as u32)
        };
        let clean = render_clean(&spec);
        if n == 0 {
            samples.push(clean);
            truth.push(GroundTruth {
                subject_id: id.clone(),
                sample: 0,
                rotation_deg: 0.0,
                scale: 1.0,
                tx: 0,
                ty: 0,
                noise_sigma: 0.0,
                seed: 0,
            });
            continue;
        }
        let max_rot = config.max_rotation_deg.floor() as i64;
        let rotation_deg = rng.random_range(-max_rot..=max_rot) as f64;
        let (lo, hi) = config.scale_range;
        let scale = (rng.random_range(lo..=hi) * 100.0).round() / 100.0;
        let slack = 2 * config.pad as i64;
        let translation = (rng.random_range(0..=slack), rng.random_range(0..=slack));
        let d = Distortion {
            rotation_deg,
            scale,
            translation,
            noise_sigma: config.noise_sigma,
            seed: rng.random(),
        };
        let (tw, th) = transformed(&clean, rotation_deg, scale)?.dims();
        let canvas = (tw + 2 * config.pad, th + 2 * config.pad);
        samples.push(distort(&clean, &d, canvas)?);
        truth.push(GroundTruth {
            subject_id: id.clone(),
            sample: n,
            rotation_deg,
            scale,
            tx: translation.0,
            ty: translation.1,
            noise_sigma: config.noise_sigma,
            seed: d.seed,
        });
    }
    Ok(SubjectRecord { id, samples, truth })
}

fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let mut reader = csv::Reader::from_path(path)?;
    let bad = |what: &str| Error::MalformedCsv(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        let field = |i: usize| r.get(i).ok_or_else(|| bad("row length"));
        out.push(GroundTruth {
            subject_id: field(0)?.to_string(),
            sample: field(1)?.parse().map_err(|_| bad("sample"))?,
            rotation_deg: field(2)?.parse().map_err(|_| bad("rotation_deg"))?,
            scale: field(3)?.parse().map_err(|_| bad("scale"))?,
            tx: field(4)?.parse().map_err(|_| bad("tx"))?,
            ty: field(5)?.parse().map_err(|_| bad("ty"))?,
            noise_sigma: field(6)?.parse().map_err(|_| bad("noise_sigma"))?,
            seed: field(7)?.parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(out)
}

/// Subject directories under `dir/subjects`, each with its sorted `.pgm` files.
fn list_subjects(dir: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let root = dir.join("subjects");
    if !root.is_dir() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    let mut subjects = Vec::new();
    for entry in fs::read_dir(&root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(entry.path())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm" || x == "png"))
            .collect();
        if files.is_empty() {
            continue;
        }
        files.sort();
        subjects.push((entry.file_name().to_string_lossy().into_owned(), files));
    }
    subjects.sort();
    Ok(subjects)
}

fn csv_bytes(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer
        .into_inner()
        .map_err(|e| Error::IoFailure(std::io::Error::other(e.to_string())))
}

/// Writes to a sibling temp file, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One enrolled subject.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub subject_id: String,
    pub features: FeatureVector,
    pub source_path: PathBuf,
}

/// The enrollment database: one reference descriptor per subject.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gallery {
    pub entries: Vec<GalleryEntry>,
    pub manifest_path: Option<PathBuf>,
    /// Images that could not be enrolled, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

/// Enrolls the first sample of every subject under `image_dir/subjects` and
/// writes the manifest.
pub fn build_gallery(
    image_dir: impl AsRef<Path>,
    out_manifest: impl AsRef<Path>,
) -> Result<Gallery> {
    build_gallery_with(
        image_dir,
        out_manifest,
        FeatureExtractor::default(),
        DEFAULT_INK_THRESHOLD,
    )
}

pub fn build_gallery_with(
    image_dir: impl AsRef<Path>,
    out_manifest: impl AsRef<Path>,
    extractor: FeatureExtractor,
    ink_threshold: u8,
) -> Result<Gallery> {
    let image_dir = image_dir.as_ref();
    let subjects = list_subjects(image_dir)?;
    if subjects.is_empty() {
        return Err(Error::EmptyDirectory(image_dir.to_path_buf()));
    }
    let results: Vec<(String, PathBuf, Result<FeatureVector>)> = subjects
        .into_par_iter()
        .map(|(id, files)| {
            let path = files[0].clone();
            let features = enrollment_features(&path, extractor, ink_threshold);
            (id, path, features)
        })
        .collect();
    let mut gallery = Gallery::default();
    for (subject_id, source_path, features) in results {
        match features {
            Ok(features) => gallery.entries.push(GalleryEntry {
                subject_id,
                features,
                source_path,
            }),
            Err(e) => gallery
                .failures
                .push((source_path, format!("{}: {e}", e.name()))),
        }
    }
    let out = out_manifest.as_ref();
    gallery.write_manifest(out)?;
    gallery.manifest_path = Some(out.to_path_buf());
    Ok(gallery)
}

fn enrollment_features(path: &Path, extractor: FeatureExtractor, ink: u8) -> Result<FeatureVector> {
    let img = image::load_image(path)?;
    let tight = image::crop(&img, image::ink_bbox(&img, ink)?)?;
    Ok(extractor
        .extract_with_threshold(&tight, ink)?
        .with_source(path.to_string_lossy()))
}

impl Gallery {
    pub fn samples(&self) -> Vec<Sample> {
        self.entries
            .iter()
            .map(|e| Sample::new(e.features.values().to_vec(), e.subject_id.clone()))
            .collect()
    }

    pub fn manifest_bytes(&self) -> Result<Vec<u8>> {
        let mut csv = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["subject_id".to_string(), "sample_path".to_string()];
        header.extend((0..FEATURE_LEN).map(|i| format!("f{i:02}")));
        csv.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![
                e.subject_id.clone(),
                e.source_path.to_string_lossy().into_owned(),
            ];
            row.extend(e.features.values().iter().map(|&v| sig17(v)));
            csv.write_record(&row)?;
        }
        csv_bytes(csv)
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.manifest_bytes()?)
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let mut reader = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let r = record?;
            if r.len() != FEATURE_LEN + 2 {
                return Err(Error::MalformedCsv(format!(
                    "manifest row has {} columns, expected {}",
                    r.len(),
                    FEATURE_LEN + 2
                )));
            }
            let values = r
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::MalformedCsv(format!("feature value: {e}")))?;
            let subject_id = r[0].to_string();
            if subject_id.is_empty() {
                return Err(Error::MalformedCsv("empty subject id".into()));
            }
            entries.push(GalleryEntry {
                subject_id,
                features: FeatureVector::new(values)?.with_source(&r[1]),
                source_path: PathBuf::from(&r[1]),
            });
        }
        Ok(Gallery {
            entries,
            manifest_path: Some(path.to_path_buf()),
            failures: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{crop, ink_bbox};
    use crate::rst::{self, ncc};

    fn tight(img: &GrayImage) -> GrayImage {
        crop(img, ink_bbox(img, DEFAULT_INK_THRESHOLD).unwrap()).unwrap()
    }

    #[test]
    fn generation_is_deterministic_and_inked() {
        let spec = SyntheticSpec::new(42);
        let a = generate_signature(&spec).unwrap();
        assert_eq!(a, generate_signature(&spec).unwrap());
        assert!(ink_bbox(&a, DEFAULT_INK_THRESHOLD).is_ok());
        assert_eq!((a.width(), a.height()), DEFAULT_CANVAS);
    }

    #[test]
    fn samples_of_one_subject_differ_slightly() {
        let a = render_clean(&SyntheticSpec::new(7));
        let b = render_clean(&SyntheticSpec::new(7).sample(3));
        assert_ne!(a, b);
        let frame = |i: &GrayImage| image::resize(&tight(i), 64, 64);
        let other = render_clean(&SyntheticSpec::new(8));
        let same = ncc(&frame(&a), &frame(&b)).unwrap();
        let cross = ncc(&frame(&a), &frame(&other)).unwrap();
        assert!(
            same > 0.3 && same > cross + 0.2,
            "same {same}, cross {cross}"
        );
    }

    #[test]
    fn different_subjects_are_distinct() {
        let frame = |s: u64| image::resize(&tight(&render_clean(&SyntheticSpec::new(s))), 64, 64);
        for s in 0..10 {
            let r = ncc(&frame(s), &frame(s + 100)).unwrap();
            assert!(r < 0.95, "subjects {s} and {}: ncc {r}", s + 100);
        }
    }

    #[test]
    fn identity_distortion_keeps_the_ink() {
        let img = render_clean(&SyntheticSpec::new(3));
        let out = distort(&img, &Distortion::identity(), (img.width(), img.height())).unwrap();
        assert!(tight(&img).max_abs_diff(&tight(&out)).unwrap() <= 1);
    }

    #[test]
    fn translation_is_recovered_exactly() {
        let img = render_clean(&SyntheticSpec::new(5));
        let before = rst::remove_translation(&img).unwrap();
        let d = Distortion {
            translation: (7, 5),
            ..Distortion::identity()
        };
        let out = distort(&img, &d, (img.width() + 20, img.height() + 20)).unwrap();
        let after = rst::remove_translation(&out).unwrap();
        assert_eq!(after.tx, before.tx + 7);
        assert_eq!(after.ty, before.ty + 5);
        assert_eq!(after.cropped, before.cropped);
    }

    #[test]
    fn clipping_is_detected() {
        let img = render_clean(&SyntheticSpec::new(5));
        let d = Distortion {
            translation: (-200, 0),
            ..Distortion::identity()
        };
        let err = distort(&img, &d, (img.width(), img.height())).unwrap_err();
        assert_eq!(err.name(), "InkClipped");
    }

    #[test]
    fn out_of_range_distortions_are_rejected() {
        let img = render_clean(&SyntheticSpec::new(5));
        for d in [
            Distortion {
                rotation_deg: 61.0,
                ..Distortion::identity()
            },
            Distortion {
                scale: 0.1,
                ..Distortion::identity()
            },
            Distortion {
                noise_sigma: -1.0,
                ..Distortion::identity()
            },
        ] {
            assert_eq!(
                distort(&img, &d, (400, 400)).unwrap_err().name(),
                "InvalidArgument"
            );
        }
    }

    #[test]
    fn noise_is_seeded() {
        let img = render_clean(&SyntheticSpec::new(9));
        let d = Distortion {
            noise_sigma: 4.0,
            seed: 77,
            ..Distortion::identity()
        };
        let a = distort(&img, &d, (300, 150)).unwrap();
        assert_eq!(a, distort(&img, &d, (300, 150)).unwrap());
        let other = Distortion { seed: 78, ..d };
        assert_ne!(a, distort(&img, &other, (300, 150)).unwrap());
    }

    #[test]
    fn database_round_trips_through_disk() {
        let config = DbConfig {
            subjects: 3,
            samples_per_subject: 3,
            seed: 4,
            ..DbConfig::default()
        };
        let db = SignatureDb::generate(&config).unwrap();
        assert_eq!(db, SignatureDb::generate(&config).unwrap());
        let dir = tempfile::tempdir().unwrap();
        db.write(dir.path()).unwrap();
        assert!(dir.path().join("subjects/s002/01.pgm").exists());
        let back = SignatureDb::load(dir.path()).unwrap();
        assert_eq!(back, db);
    }

    #[test]
    fn gallery_manifest_is_stable() {
        let config = DbConfig {
            subjects: 3,
            samples_per_subject: 2,
            seed: 1,
            ..DbConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        SignatureDb::generate(&config)
            .unwrap()
            .write(dir.path())
            .unwrap();
        let manifest = dir.path().join("gallery.csv");
        let gallery = build_gallery(dir.path(), &manifest).unwrap();
        assert_eq!(gallery.entries.len(), 3);
        assert!(gallery.failures.is_empty());
        let first = fs::read(&manifest).unwrap();
        let text = String::from_utf8(first.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4, "header plus three rows");
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 66));

        build_gallery(dir.path(), &manifest).unwrap();
        assert_eq!(fs::read(&manifest).unwrap(), first);

        let loaded = Gallery::load_manifest(&manifest).unwrap();
        assert_eq!(loaded.entries.len(), 3);
        for (a, b) in loaded.entries.iter().zip(&gallery.entries) {
            assert_eq!(a.features.values(), b.features.values());
        }
    }

    #[test]
    fn bad_images_are_reported_not_fatal() {
        let config = DbConfig {
            subjects: 2,
            samples_per_subject: 1,
            seed: 1,
            ..DbConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        SignatureDb::generate(&config)
            .unwrap()
            .write(dir.path())
            .unwrap();
        fs::write(dir.path().join("subjects/s001/00.pgm"), b"garbage").unwrap();
        let gallery = build_gallery(dir.path(), dir.path().join("g.csv")).unwrap();
        assert_eq!(gallery.entries.len(), 1);
        assert_eq!(gallery.failures.len(), 1);
        assert!(gallery.failures[0].1.starts_with("MalformedImage"));
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_gallery(dir.path(), dir.path().join("g.csv")).unwrap_err();
        assert_eq!(err.name(), "EmptyDirectory");
        fs::create_dir_all(dir.path().join("subjects/s001")).unwrap();
        let err = build_gallery(dir.path(), dir.path().join("g.csv")).unwrap_err();
        assert_eq!(err.name(), "EmptyDirectory");
    }
}

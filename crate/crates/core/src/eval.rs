//! Experiment sweeps over synthetic data, written as CSV reports.
//!
//! Every report starts with `# config: <json>` so a file can be regenerated
//! from its own header. Aggregates follow the rows as `# name=value` lines.

use std::fmt::Display;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DbConfig, Distortion, SignatureDb, SyntheticSpec};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::image::GrayImage;
use crate::pipeline::{enrollment_features, Identifier};
use crate::rbfn::{LearningRates, RbfnModel, Sample, DEFAULT_SPREAD};
use crate::rst::{self, RstConfig};

/// Fixed (rotation in degrees, probe scale) pairs for the alignment benchmark.
pub const REFERENCE_PAIRS: [(f64, f64); 10] = [
    (-50.0, 0.54),
    (-20.0, 0.9),
    (-10.0, 0.65),
    (-5.0, 1.43),
    (3.0, 1.0),
    (12.0, 0.83),
    (15.0, 1.5),
    (32.0, 1.78),
    (33.0, 0.75),
    (42.0, 0.26),
];

pub const ITERATION_BUDGETS: [usize; 10] = [5, 10, 20, 40, 50, 60, 70, 100, 200, 500];

pub const PROBE_COUNTS: [usize; 5] = [50, 100, 200, 400, 500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    RstTable,
    Convergence,
    Recognition,
}

/// One CSV row of a report.
pub trait ReportRow {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<R> {
    pub kind: ReportKind,
    pub rows: Vec<R>,
    pub aggregates: Vec<(String, f64)>,
    pub config_echo: String,
}

impl<R: ReportRow> EvalReport<R> {
    pub fn aggregate(&self, name: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# config: {}\n", self.config_echo);
        out.push_str(&R::header().join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.fields().join(","));
            out.push('\n');
        }
        for (name, value) in &self.aggregates {
            out.push_str(&format!("# {name}={value}\n"));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        dataset::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn echo<T: Serialize>(config: &T) -> String {
    serde_json::to_string(config).expect("config serializes")
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn status<T>(r: &std::result::Result<T, String>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.clone(),
    }
}

/// Median; even counts average the two middle values.
fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return None;
    }
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn max(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::max)
}

// ---------------------------------------------------------------- alignment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RstTableConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Whole-degree rotations are drawn from ±this.
    pub max_rotation_deg: i64,
    pub scale_range: (f64, f64),
    pub noise_sigma: f64,
    pub pad: usize,
    /// Fixed (rotation, scale) pairs used instead of random draws, cycled.
    pub pairs: Option<Vec<(f64, f64)>>,
}

impl Default for RstTableConfig {
    fn default() -> Self {
        RstTableConfig {
            n_samples: 50,
            seed: 0,
            max_rotation_deg: 55,
            scale_range: (0.3, 1.8),
            noise_sigma: 0.0,
            pad: 16,
            pairs: None,
        }
    }
}

impl RstTableConfig {
    pub fn reference_pairs() -> Self {
        RstTableConfig {
            n_samples: REFERENCE_PAIRS.len(),
            pairs: Some(REFERENCE_PAIRS.to_vec()),
            ..RstTableConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RstRow {
    pub original_rotation: f64,
    pub original_scale: f64,
    /// Detected rotation and reciprocal of the detected height ratio, or the
    /// stable name of the error that stopped the sample.
    pub detected: std::result::Result<(f64, f64), String>,
}

impl RstRow {
    pub fn rotation_error(&self) -> Option<f64> {
        self.detected
            .as_ref()
            .ok()
            .map(|&(r, _)| (r - self.original_rotation).abs())
    }

    pub fn scale_error(&self) -> Option<f64> {
        self.detected
            .as_ref()
            .ok()
            .map(|&(_, s)| (s - self.original_scale).abs())
    }
}

impl ReportRow for RstRow {
    fn header() -> &'static [&'static str] {
        &[
            "original_rotation",
            "original_scale",
            "detected_rotation",
            "detected_scale",
            "abs_rotation_error",
            "abs_scale_error",
            "status",
        ]
    }

    fn fields(&self) -> Vec<String> {
        let d = self.detected.as_ref().ok();
        vec![
            self.original_rotation.to_string(),
            self.original_scale.to_string(),
            opt(d.map(|d| d.0)),
            opt(d.map(|d| d.1)),
            opt(self.rotation_error()),
            opt(self.scale_error()),
            status(&self.detected),
        ]
    }
}

/// Signed per-sample errors, the series behind the error plots.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeriesRow {
    pub sample: usize,
    pub rotation_error: Option<f64>,
    pub scale_error: Option<f64>,
}

impl ReportRow for ErrorSeriesRow {
    fn header() -> &'static [&'static str] {
        &["sample", "rotation_error", "scale_error"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.sample.to_string(),
            opt(self.rotation_error),
            opt(self.scale_error),
        ]
    }
}

/// Aggregates of an alignment table, recomputed from its rows.
pub fn rst_aggregates(rows: &[RstRow]) -> Vec<(String, f64)> {
    let rot: Vec<f64> = rows.iter().filter_map(RstRow::rotation_error).collect();
    let scale: Vec<f64> = rows.iter().filter_map(RstRow::scale_error).collect();
    let mut out = vec![
        ("samples".to_string(), rows.len() as f64),
        ("failed".to_string(), (rows.len() - rot.len()) as f64),
    ];
    for (name, value) in [
        ("median_abs_rotation_error", median(&rot)),
        ("max_abs_rotation_error", max(&rot)),
        ("median_abs_scale_error", median(&scale)),
        ("max_abs_scale_error", max(&scale)),
    ] {
        if let Some(v) = value {
            out.push((name.to_string(), v));
        }
    }
    out
}

/// The (rotation, scale) of probe `i`.
fn rst_case(config: &RstTableConfig, i: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match &config.pairs {
        Some(pairs) if !pairs.is_empty() => pairs[i % pairs.len()],
        _ => {
            let m = config.max_rotation_deg;
            let rotation = rng.random_range(-m..=m) as f64;
            let (lo, hi) = config.scale_range;
            let scale = (rng.random_range(lo..=hi) * 100.0).round() / 100.0;
            (rotation, scale)
        }
    }
}

/// Distorts a fresh clean signature per sample with known (rotation, scale)
/// and measures what alignment recovers.
pub fn rst_error_table(config: &RstTableConfig) -> Result<EvalReport<RstRow>> {
    if config.n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // (subject seed, (rotation, scale), translation, noise seed)
    type Case = (u64, (f64, f64), (i64, i64), u64);
    let cases: Vec<Case> = (0..config.n_samples)
        .map(|i| {
            let case = rst_case(config, i, &mut rng);
            let slack = 2 * config.pad as i64;
            let shift = (rng.random_range(0..=slack), rng.random_range(0..=slack));
            (
                dataset::mix_seed(config.seed, i as u64),
                case,
                shift,
                rng.random(),
            )
        })
        .collect();
    let rows = cases
        .par_iter()
        .map(|&(subject, (rotation, scale), translation, noise_seed)| {
            let d = Distortion {
                rotation_deg: rotation,
                scale,
                translation,
                noise_sigma: config.noise_sigma,
                seed: noise_seed,
            };
            let detected = align_case(subject, &d, config.pad).map_err(|e| e.name().to_string());
            RstRow {
                original_rotation: rotation,
                original_scale: scale,
                detected,
            }
        })
        .collect::<Vec<_>>();
    Ok(EvalReport {
        kind: ReportKind::RstTable,
        aggregates: rst_aggregates(&rows),
        rows,
        config_echo: echo(config),
    })
}

fn align_case(subject: u64, d: &Distortion, pad: usize) -> Result<(f64, f64)> {
    let reference = dataset::render_clean(&SyntheticSpec::new(subject));
    let (tw, th) = {
        let t = dataset::transformed(&reference, d.rotation_deg, d.scale)?;
        (t.width(), t.height())
    };
    let probe = dataset::distort(&reference, d, (tw + 2 * pad, th + 2 * pad))?;
    let a = rst::correct_rst(&reference, &probe)?;
    Ok((a.params.rotation_deg, 1.0 / a.params.scale_ratio))
}

/// Signed errors per sample, in table order.
pub fn error_series(report: &EvalReport<RstRow>) -> EvalReport<ErrorSeriesRow> {
    let rows = report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d = r.detected.as_ref().ok();
            ErrorSeriesRow {
                sample: i + 1,
                rotation_error: d.map(|d| d.0 - r.original_rotation),
                scale_error: d.map(|d| d.1 - r.original_scale),
            }
        })
        .collect();
    EvalReport {
        kind: ReportKind::RstTable,
        rows,
        aggregates: Vec::new(),
        config_echo: report.config_echo.clone(),
    }
}

// ---------------------------------------------------------------- convergence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Iteration budgets, ascending.
    pub budgets: Vec<usize>,
    pub spread: f64,
    pub seed: u64,
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub hidden_units: usize,
    pub rates: LearningRates,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            budgets: ITERATION_BUDGETS.to_vec(),
            spread: DEFAULT_SPREAD,
            seed: 0,
            subjects: 10,
            samples_per_subject: 2,
            hidden_units: 10,
            rates: LearningRates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub mse: std::result::Result<f64, String>,
    pub spread: f64,
    pub iterations: usize,
}

impl ReportRow for ConvergenceRow {
    fn header() -> &'static [&'static str] {
        &["mse", "spread", "iterations", "status"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            opt(self.mse.as_ref().ok()),
            self.spread.to_string(),
            self.iterations.to_string(),
            status(&self.mse),
        ]
    }
}

pub fn convergence_aggregates(rows: &[ConvergenceRow]) -> Vec<(String, f64)> {
    let mses: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.mse.as_ref().ok().copied())
        .collect();
    let monotone = mses.windows(2).all(|w| w[1] <= w[0]);
    let mut out = vec![
        ("budgets".to_string(), rows.len() as f64),
        ("failed".to_string(), (rows.len() - mses.len()) as f64),
        (
            "non_increasing".to_string(),
            if monotone { 1.0 } else { 0.0 },
        ),
    ];
    if let Some(&last) = mses.last() {
        out.push(("final_mse".to_string(), last));
    }
    out
}

/// Feature vectors of clean synthetic signatures: `samples_per_subject`
/// jittered renders of each of `subjects` writers.
pub fn synthetic_samples(
    subjects: usize,
    samples_per_subject: usize,
    seed: u64,
    extractor: FeatureExtractor,
) -> Result<Vec<Sample>> {
    let jobs: Vec<(usize, usize)> = (0..subjects)
        .flat_map(|s| (0..samples_per_subject).map(move |k| (s, k)))
        .collect();
    jobs.par_iter()
        .map(|&(s, k)| {
            let spec = SyntheticSpec::new(dataset::mix_seed(seed, s as u64)).sample(k as u32);
            let img = dataset::render_clean(&spec);
            let f = enrollment_features(&img, extractor, &RstConfig::default())?;
            Ok(Sample::new(f.into_values(), dataset::subject_id(s)))
        })
        .collect()
}

/// Trains the same initial network for each iteration budget.
pub fn convergence_sweep(config: &ConvergenceConfig) -> Result<EvalReport<ConvergenceRow>> {
    if config.budgets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("budgets must be ascending".into()));
    }
    let samples = synthetic_samples(
        config.subjects,
        config.samples_per_subject,
        config.seed,
        FeatureExtractor::default(),
    )?;
    convergence_on(&samples, config)
}

/// As [`convergence_sweep`], on caller-supplied samples.
pub fn convergence_on(
    samples: &[Sample],
    config: &ConvergenceConfig,
) -> Result<EvalReport<ConvergenceRow>> {
    if config.budgets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("budgets must be ascending".into()));
    }
    let initial = RbfnModel::initial(samples, config.spread, config.hidden_units)?;
    let rows = config
        .budgets
        .par_iter()
        .map(|&budget| ConvergenceRow {
            mse: initial
                .train_gradient(samples, config.rates, budget)
                .map(|(_, state)| state.mse)
                .map_err(|e| e.name().to_string()),
            spread: config.spread,
            iterations: budget,
        })
        .collect::<Vec<_>>();
    Ok(EvalReport {
        kind: ReportKind::Convergence,
        aggregates: convergence_aggregates(&rows),
        rows,
        config_echo: echo(config),
    })
}

// ---------------------------------------------------------------- recognition

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionConfig {
    pub counts: Vec<usize>,
    pub seed: u64,
    pub spread: f64,
    pub reject_threshold: f64,
    pub extractor: String,
    pub db: DbEcho,
}

/// Serializable mirror of [`DbConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbEcho {
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub seed: u64,
    pub canvas: (usize, usize),
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub noise_sigma: f64,
    pub pad: usize,
}

impl From<&DbConfig> for DbEcho {
    fn from(c: &DbConfig) -> Self {
        DbEcho {
            subjects: c.subjects,
            samples_per_subject: c.samples_per_subject,
            seed: c.seed,
            canvas: c.canvas,
            max_rotation_deg: c.max_rotation_deg,
            scale_range: c.scale_range,
            noise_sigma: c.noise_sigma,
            pad: c.pad,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionRow {
    pub number_of_samples: usize,
    pub recognition_rate_percent: f64,
}

impl ReportRow for RecognitionRow {
    fn header() -> &'static [&'static str] {
        &["number_of_samples", "recognition_rate_percent"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.number_of_samples.to_string(),
            self.recognition_rate_percent.to_string(),
        ]
    }
}

/// Fate of one probe, in presentation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub order: usize,
    pub subject_id: String,
    pub sample: usize,
    /// Predicted label, `Rejected`, or the error name.
    pub predicted: String,
    pub correct: bool,
}

impl ReportRow for ProbeOutcome {
    fn header() -> &'static [&'static str] {
        &["order", "subject_id", "sample", "predicted", "correct"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.order.to_string(),
            self.subject_id.clone(),
            self.sample.to_string(),
            self.predicted.clone(),
            (self.correct as u8).to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionSweep {
    pub report: EvalReport<RecognitionRow>,
    pub outcomes: EvalReport<ProbeOutcome>,
}

/// Rate over the first `count` outcomes.
pub fn recognition_rate(outcomes: &[ProbeOutcome], count: usize) -> f64 {
    let taken = &outcomes[..count.min(outcomes.len())];
    if taken.is_empty() {
        return 0.0;
    }
    100.0 * taken.iter().filter(|o| o.correct).count() as f64 / taken.len() as f64
}

pub fn recognition_aggregates(outcomes: &[ProbeOutcome]) -> Vec<(String, f64)> {
    let correct = outcomes.iter().filter(|o| o.correct).count();
    vec![
        ("probes".to_string(), outcomes.len() as f64),
        ("correct".to_string(), correct as f64),
        (
            "recognition_rate_percent".to_string(),
            recognition_rate(outcomes, outcomes.len()),
        ),
    ]
}

/// Enrolls sample 0 of each subject, identifies every other sample in a
/// seeded random order, and reports the rate over the first `count` probes
/// for each count.
pub fn recognition_sweep(
    db: &SignatureDb,
    counts: &[usize],
    seed: u64,
    spread: f64,
    reject_threshold: f64,
    extractor: FeatureExtractor,
    config_echo: &RecognitionConfig,
) -> Result<RecognitionSweep> {
    let mut probes: Vec<(usize, usize)> = db
        .subjects
        .iter()
        .enumerate()
        .flat_map(|(s, rec)| (1..rec.samples.len()).map(move |k| (s, k)))
        .collect();
    if let Some(&too_many) = counts.iter().find(|&&c| c > probes.len()) {
        return Err(Error::InvalidArgument(format!(
            "count {too_many} exceeds the {} available probes",
            probes.len()
        )));
    }
    probes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let identifier =
        Identifier::enroll(db, spread, extractor)?.with_reject_threshold(reject_threshold);
    let images: Vec<GrayImage> = probes
        .iter()
        .map(|&(s, k)| db.subjects[s].samples[k].clone())
        .collect();
    let outcomes: Vec<ProbeOutcome> = identifier
        .identify_all(&images)
        .into_iter()
        .zip(&probes)
        .enumerate()
        .map(|(order, (result, &(s, k)))| {
            let subject_id = db.subjects[s].id.clone();
            let predicted = match result {
                Ok(id) => id.label().unwrap_or("Rejected").to_string(),
                Err(e) => e.name().to_string(),
            };
            ProbeOutcome {
                order,
                correct: predicted == subject_id,
                subject_id,
                sample: k,
                predicted,
            }
        })
        .collect();
    let rows = counts
        .iter()
        .map(|&c| RecognitionRow {
            number_of_samples: c,
            recognition_rate_percent: recognition_rate(&outcomes, c),
        })
        .collect();
    let echo_text = echo(config_echo);
    Ok(RecognitionSweep {
        report: EvalReport {
            kind: ReportKind::Recognition,
            aggregates: recognition_aggregates(&outcomes),
            rows,
            config_echo: echo_text.clone(),
        },
        outcomes: EvalReport {
            kind: ReportKind::Recognition,
            aggregates: Vec::new(),
            rows: outcomes,
            config_echo: echo_text,
        },
    })
}

/// Generates the database described by `config` and runs the sweep on it.
pub fn recognition_sweep_synthetic(config: &RecognitionConfig) -> Result<RecognitionSweep> {
    let db_config = DbConfig {
        subjects: config.db.subjects,
        samples_per_subject: config.db.samples_per_subject,
        seed: config.db.seed,
        canvas: config.db.canvas,
        max_rotation_deg: config.db.max_rotation_deg,
        scale_range: config.db.scale_range,
        noise_sigma: config.db.noise_sigma,
        pad: config.db.pad,
    };
    let extractor: FeatureExtractor = config.extractor.parse()?;
    let db = SignatureDb::generate(&db_config)?;
    recognition_sweep(
        &db,
        &config.counts,
        config.seed,
        config.spread,
        config.reject_threshold,
        extractor,
        config,
    )
}

//! Gaussian radial basis function network with a linear output layer.
//!
//! Hidden unit `i` responds with `G_i(x) = exp(-‖x - t_i‖² / 2σ_i²)`; output
//! `l` is `Σ_i ω_il G_i(x)`. Targets are one-hot class vectors.
//!
//! Two ways to fit:
//! - [`RbfnModel::fit_exact`] puts a unit on every training sample and solves
//!   the ridge-regularized interpolation system for the output weights.
//! - [`RbfnModel::train_gradient`] runs full-batch gradient descent on the
//!   cost `ξ = ½ Σ_j Σ_l e_jl²` with respect to weights, centers and widths.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::numfmt::sig17;

/// Ridge term added to the interpolation matrix diagonal.
pub const RIDGE: f64 = 1e-8;

pub const DEFAULT_SPREAD: f64 = 0.5;

pub const DEFAULT_REJECT_THRESHOLD: f64 = 0.5;

pub const MODEL_FORMAT: u32 = 1;

/// A labelled training or evaluation input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: String,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: impl Into<String>) -> Self {
        Sample {
            features,
            label: label.into(),
        }
    }
}

/// Gaussian response of one hidden unit.
pub fn activation(x: &[f64], center: &[f64], width: f64) -> Result<f64> {
    if x.len() != center.len() {
        return Err(Error::dims(center.len(), x.len()));
    }
    if width <= 0.0 || !width.is_finite() {
        return Err(Error::NonPositiveWidth(width));
    }
    Ok(gaussian(squared_distance(x, center), width))
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
fn gaussian(dist2: f64, width: f64) -> f64 {
    (-dist2 / (2.0 * width * width)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LearningRates {
    pub weights: f64,
    pub centers: f64,
    pub widths: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            weights: 1e-2,
            centers: 1e-3,
            widths: 1e-3,
        }
    }
}

/// Progress of [`RbfnModel::train_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    /// Current cost expressed as 2ξ/N.
    pub mse: f64,
    pub learning_rates: LearningRates,
    /// MSE after each completed epoch.
    pub history: Vec<f64>,
}

/// Partial derivatives of ξ, shaped like the corresponding parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Class {
        index: usize,
        label: String,
        score: f64,
    },
    Rejected {
        best_score: f64,
    },
}

impl Decision {
    pub fn label(&self) -> Option<&str> {
        match self {
            Decision::Class { label, .. } => Some(label),
            Decision::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfnModel {
    spread: f64,
    class_labels: Vec<String>,
    centers: Vec<Vec<f64>>,
    widths: Vec<f64>,
    /// Hidden units × classes.
    weights: Vec<Vec<f64>>,
}

/// Per-sample quantities shared by the cost and its gradient.
struct Evaluation {
    /// `activations[j][i]` = G_i(x_j)
    activations: Vec<Vec<f64>>,
    /// `errors[j][l]` = d_jl − F_l(x_j)
    errors: Vec<Vec<f64>>,
}

impl Evaluation {
    fn cost(&self) -> f64 {
        0.5 * self
            .errors
            .iter()
            .flat_map(|e| e.iter())
            .map(|e| e * e)
            .sum::<f64>()
    }
}

impl RbfnModel {
    pub fn new(
        spread: f64,
        class_labels: Vec<String>,
        centers: Vec<Vec<f64>>,
        widths: Vec<f64>,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if spread <= 0.0 || !spread.is_finite() {
            return Err(Error::NonPositiveWidth(spread));
        }
        if class_labels.is_empty() {
            return Err(Error::InvalidArgument(
                "model needs at least one class".into(),
            ));
        }
        let unique: BTreeSet<&String> = class_labels.iter().collect();
        if unique.len() != class_labels.len() {
            return Err(Error::InvalidArgument("class labels must be unique".into()));
        }
        if centers.is_empty() {
            return Err(Error::InvalidArgument(
                "model needs at least one hidden unit".into(),
            ));
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::dims(
                format!("centers of dimension {dim}"),
                "ragged centers",
            ));
        }
        if widths.len() != centers.len() {
            return Err(Error::dims(centers.len(), widths.len()));
        }
        if let Some(&w) = widths.iter().find(|w| **w <= 0.0 || !w.is_finite()) {
            return Err(Error::NonPositiveWidth(w));
        }
        if weights.len() != centers.len() || weights.iter().any(|r| r.len() != class_labels.len()) {
            return Err(Error::dims(
                format!("{}x{} weights", centers.len(), class_labels.len()),
                "mismatched weight matrix",
            ));
        }
        Ok(RbfnModel {
            spread,
            class_labels,
            centers,
            widths,
            weights,
        })
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn hidden_units(&self) -> usize {
        self.centers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.centers[0].len()
    }

    /// Same network with output weights replaced.
    pub fn with_weights(&self, weights: Vec<Vec<f64>>) -> Result<Self> {
        RbfnModel::new(
            self.spread,
            self.class_labels.clone(),
            self.centers.clone(),
            self.widths.clone(),
            weights,
        )
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dims(self.input_dim(), x.len()));
        }
        Ok(())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, &w)| gaussian(squared_distance(x, c), w))
            .collect()
    }

    fn output(&self, hidden: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.class_labels.len()];
        for (g, row) in hidden.iter().zip(&self.weights) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += g * w;
            }
        }
        out
    }

    /// One linear score per class.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.output(&self.hidden(x)))
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_labels.iter().position(|l| l == label)
    }

    /// Highest-scoring class, or `Rejected` when that score is below
    /// `reject_threshold`. Ties go to the lower class index.
    pub fn classify(&self, x: &[f64], reject_threshold: f64) -> Result<Decision> {
        let scores = self.forward(x)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        let score = scores[best];
        if score >= reject_threshold {
            Ok(Decision::Class {
                index: best,
                label: self.class_labels[best].clone(),
                score,
            })
        } else {
            Ok(Decision::Rejected { best_score: score })
        }
    }

    fn targets(&self, samples: &[Sample]) -> Result<Vec<usize>> {
        samples
            .iter()
            .map(|s| {
                self.check_input(&s.features)?;
                self.class_index(&s.label).ok_or_else(|| {
                    Error::InvalidArgument(format!("label {:?} is not a model class", s.label))
                })
            })
            .collect()
    }

    fn evaluate(&self, samples: &[Sample], targets: &[usize]) -> Evaluation {
        let (activations, errors) = samples
            .par_iter()
            .zip(targets)
            .map(|(s, &t)| {
                let g = self.hidden(&s.features);
                let mut e = self.output(&g);
                for (l, v) in e.iter_mut().enumerate() {
                    *v = if l == t { 1.0 } else { 0.0 } - *v;
                }
                (g, e)
            })
            .unzip();
        Evaluation {
            activations,
            errors,
        }
    }

    /// ξ = ½ Σ_j Σ_l (d_jl − F_l(x_j))².
    pub fn cost(&self, samples: &[Sample]) -> Result<f64> {
        let targets = self.targets(samples)?;
        Ok(self.evaluate(samples, &targets).cost())
    }

    /// Mean over samples of the squared error summed over outputs (2ξ/N).
    pub fn mse(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("mse of an empty sample set".into()));
        }
        Ok(2.0 * self.cost(samples)? / samples.len() as f64)
    }

    /// Analytic ∂ξ/∂ω, ∂ξ/∂t and ∂ξ/∂σ.
    pub fn gradients(&self, samples: &[Sample]) -> Result<Gradients> {
        let targets = self.targets(samples)?;
        Ok(self.gradients_from(samples, &self.evaluate(samples, &targets)))
    }

    fn gradients_from(&self, samples: &[Sample], eval: &Evaluation) -> Gradients {
        let m = self.hidden_units();
        let dim = self.input_dim();
        let mut gw = vec![vec![0.0; self.class_labels.len()]; m];
        let mut gt = vec![vec![0.0; dim]; m];
        let mut gs = vec![0.0; m];
        // fixed summation order over samples keeps results reproducible
        for (j, sample) in samples.iter().enumerate() {
            let g = &eval.activations[j];
            let e = &eval.errors[j];
            for i in 0..m {
                // back-propagated error reaching unit i
                let delta: f64 = e.iter().zip(&self.weights[i]).map(|(a, b)| a * b).sum();
                for (gwl, el) in gw[i].iter_mut().zip(e) {
                    *gwl -= el * g[i];
                }
                let sigma = self.widths[i];
                let common = delta * g[i] / (sigma * sigma);
                let mut dist2 = 0.0;
                for ((gtk, xk), tk) in gt[i].iter_mut().zip(&sample.features).zip(&self.centers[i])
                {
                    let d = xk - tk;
                    *gtk -= common * d;
                    dist2 += d * d;
                }
                gs[i] -= common * dist2 / sigma;
            }
        }
        Gradients {
            weights: gw,
            centers: gt,
            widths: gs,
        }
    }

    /// One hidden unit per sample; output weights from the ridge system
    /// (G + λI) ω = D.
    pub fn fit_exact(samples: &[Sample], spread: f64) -> Result<Self> {
        Self::fit_with_centers(samples, spread, samples.len())
    }

    /// Uses every ⌈N/M⌉-th sample as a center and fits the output weights by
    /// ridge least squares. `hidden_units >= N` is exact interpolation.
    pub fn fit_with_centers(samples: &[Sample], spread: f64, hidden_units: usize) -> Result<Self> {
        let mut model = Self::initial(samples, spread, hidden_units)?;
        model.solve_weights(samples)?;
        Ok(model)
    }

    /// Centers picked as in [`RbfnModel::fit_with_centers`], widths set to
    /// `spread`, all output weights zero. Starting point for gradient training.
    pub fn initial(samples: &[Sample], spread: f64, hidden_units: usize) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        if hidden_units == 0 {
            return Err(Error::InvalidArgument(
                "need at least one hidden unit".into(),
            ));
        }
        check_conflicts(samples)?;
        let labels: Vec<String> = samples
            .iter()
            .map(|s| s.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let stride = samples.len().div_ceil(hidden_units.min(samples.len()));
        let centers: Vec<Vec<f64>> = samples
            .iter()
            .step_by(stride)
            .map(|s| s.features.clone())
            .collect();
        let (m, classes) = (centers.len(), labels.len());
        RbfnModel::new(
            spread,
            labels,
            centers,
            vec![spread; m],
            vec![vec![0.0; classes]; m],
        )
    }

    fn solve_weights(&mut self, samples: &[Sample]) -> Result<()> {
        let targets = self.targets(samples)?;
        let n = samples.len();
        let m = self.hidden_units();
        let classes = self.class_labels.len();
        let g = DMatrix::from_fn(n, m, |j, i| {
            gaussian(
                squared_distance(&samples[j].features, &self.centers[i]),
                self.widths[i],
            )
        });
        let d = DMatrix::from_fn(n, classes, |j, l| if targets[j] == l { 1.0 } else { 0.0 });
        let square = n == m;
        let (mut a, b) = if square {
            (g, d)
        } else {
            (g.transpose() * &g, g.transpose() * d)
        };
        for k in 0..m {
            a[(k, k)] += RIDGE;
        }
        let solution = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a.lu().solve(&b).ok_or(Error::SingularSystem)?,
        };
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        self.weights = (0..m)
            .map(|i| (0..classes).map(|l| solution[(i, l)]).collect())
            .collect();
        Ok(())
    }

    /// Full-batch gradient descent on ξ over weights, centers and widths.
    pub fn train_gradient(
        &self,
        samples: &[Sample],
        rates: LearningRates,
        epochs: usize,
    ) -> Result<(RbfnModel, TrainState)> {
        for r in [rates.weights, rates.centers, rates.widths] {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "learning rate {r} is invalid"
                )));
            }
        }
        if epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        let targets = self.targets(samples)?;
        let n = samples.len() as f64;
        let mut model = self.clone();
        let mut eval = model.evaluate(samples, &targets);
        let mut history = Vec::with_capacity(epochs);
        for epoch in 1..=epochs {
            let grad = model.gradients_from(samples, &eval);
            step(&mut model.weights, &grad.weights, rates.weights);
            step(&mut model.centers, &grad.centers, rates.centers);
            for (w, g) in model.widths.iter_mut().zip(&grad.widths) {
                *w -= rates.widths * g;
            }
            if let Some(&w) = model.widths.iter().find(|w| **w <= 0.0 || w.is_nan()) {
                return Err(if w.is_finite() {
                    Error::NonPositiveWidth(w)
                } else {
                    Error::NonFiniteCost { epoch }
                });
            }
            eval = model.evaluate(samples, &targets);
            let mse = 2.0 * eval.cost() / n;
            if !mse.is_finite() {
                return Err(Error::NonFiniteCost { epoch });
            }
            history.push(mse);
        }
        let state = TrainState {
            epoch: epochs,
            mse: *history.last().expect("at least one epoch"),
            learning_rates: rates,
            history,
        };
        Ok((model, state))
    }

    pub fn to_json(&self) -> String {
        let raw = |v: f64| RawValue::from_string(sig17(v)).expect("formatted float is valid json");
        let doc = ModelDocOut {
            format: MODEL_FORMAT,
            spread: raw(self.spread),
            class_labels: &self.class_labels,
            centers: self
                .centers
                .iter()
                .map(|c| c.iter().map(|&v| raw(v)).collect())
                .collect(),
            widths: self.widths.iter().map(|&v| raw(v)).collect(),
            weights: self
                .weights
                .iter()
                .map(|r| r.iter().map(|&v| raw(v)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocIn =
            serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::MalformedModel(format!(
                "unsupported format {}, expected {MODEL_FORMAT}",
                doc.format
            )));
        }
        RbfnModel::new(
            doc.spread,
            doc.class_labels,
            doc.centers,
            doc.widths,
            doc.weights,
        )
        .map_err(|e| Error::MalformedModel(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::IoFailure(e),
        })?;
        Self::from_json(&text)
    }
}

fn step(params: &mut [Vec<f64>], grads: &[Vec<f64>], rate: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= rate * gv;
        }
    }
}

fn check_conflicts(samples: &[Sample]) -> Result<()> {
    let dim = samples[0].features.len();
    if let Some(bad) = samples.iter().find(|s| s.features.len() != dim) {
        return Err(Error::dims(dim, bad.features.len()));
    }
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            if a.label != b.label && a.features == b.features {
                return Err(Error::DuplicateConflict(a.label.clone(), b.label.clone()));
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelDocOut<'a> {
    format: u32,
    spread: Box<RawValue>,
    class_labels: &'a [String],
    centers: Vec<Vec<Box<RawValue>>>,
    widths: Vec<Box<RawValue>>,
    weights: Vec<Vec<Box<RawValue>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocIn {
    format: u32,
    spread: f64,
    class_labels: Vec<String>,
    centers: Vec<Vec<f64>>,
    widths: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

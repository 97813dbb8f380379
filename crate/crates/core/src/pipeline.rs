//! Probe-to-label identification against an enrolled gallery.
//!
//! The probe is aligned to the enrolled reference it correlates with best
//! (the rotation sweep is shared across references), then its features are
//! classified by the network.

use rayon::prelude::*;

use crate::dataset::SignatureDb;
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureVector};
use crate::image::{self, GrayImage};
use crate::rbfn::{Decision, RbfnModel, Sample, DEFAULT_REJECT_THRESHOLD};
use crate::rst::{Alignment, ComparisonFrame, RotationSearch, RstConfig};

struct Reference {
    label: String,
    tight: GrayImage,
    frame: ComparisonFrame,
}

pub struct Identifier {
    references: Vec<Reference>,
    model: RbfnModel,
    config: RstConfig,
    extractor: FeatureExtractor,
    reject_threshold: f64,
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub decision: Decision,
    /// Label of the reference the probe was aligned to.
    pub aligned_to: String,
    pub alignment: Alignment,
    pub features: FeatureVector,
}

impl Identification {
    pub fn label(&self) -> Option<&str> {
        self.decision.label()
    }
}

/// Features of a reference image, computed on its tight crop.
pub fn enrollment_features(
    img: &GrayImage,
    extractor: FeatureExtractor,
    config: &RstConfig,
) -> Result<FeatureVector> {
    let tight = image::crop(img, image::ink_bbox(img, config.ink_threshold)?)?;
    extractor.extract_with_threshold(&tight, config.ink_threshold)
}

impl Identifier {
    /// `references` are (label, enrollment image) pairs; the model's classes
    /// must cover every label.
    pub fn new(
        references: Vec<(String, GrayImage)>,
        model: RbfnModel,
        config: RstConfig,
        extractor: FeatureExtractor,
        reject_threshold: f64,
    ) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::InvalidArgument("no enrolled references".into()));
        }
        let references = references
            .into_par_iter()
            .map(|(label, img)| {
                if model.class_index(&label).is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "reference {label} is not a model class"
                    )));
                }
                let tight = image::crop(&img, image::ink_bbox(&img, config.ink_threshold)?)?;
                let frame = ComparisonFrame::new(&tight, &config)?;
                Ok(Reference {
                    label,
                    tight,
                    frame,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Identifier {
            references,
            model,
            config,
            extractor,
            reject_threshold,
        })
    }

    /// Enrolls sample 0 of every subject and fits the network exactly.
    pub fn enroll(db: &SignatureDb, spread: f64, extractor: FeatureExtractor) -> Result<Self> {
        let config = RstConfig::default();
        let references: Vec<(String, GrayImage)> = db
            .subjects
            .iter()
            .filter_map(|s| s.samples.first().map(|img| (s.id.clone(), img.clone())))
            .collect();
        let samples = references
            .par_iter()
            .map(|(label, img)| {
                enrollment_features(img, extractor, &config)
                    .map(|f| Sample::new(f.into_values(), label.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = RbfnModel::fit_exact(&samples, spread)?;
        Identifier::new(
            references,
            model,
            config,
            extractor,
            DEFAULT_REJECT_THRESHOLD,
        )
    }

    pub fn with_reject_threshold(mut self, threshold: f64) -> Self {
        self.reject_threshold = threshold;
        self
    }

    pub fn model(&self) -> &RbfnModel {
        &self.model
    }

    pub fn reference_labels(&self) -> impl Iterator<Item = &str> {
        self.references.iter().map(|r| r.label.as_str())
    }

    pub fn identify(&self, probe: &GrayImage) -> Result<Identification> {
        let search = RotationSearch::new(probe, self.config)?;
        let mut best: Option<(usize, crate::rst::RotationEstimate)> = None;
        for (i, reference) in self.references.iter().enumerate() {
            let estimate = search.estimate(&reference.frame)?;
            if best
                .as_ref()
                .is_none_or(|(_, b)| estimate.peak_correlation > b.peak_correlation)
            {
                best = Some((i, estimate));
            }
        }
        let (index, estimate) = best.expect("at least one reference");
        let reference = &self.references[index];
        let alignment = self
            .config
            .correct_with_rotation(&reference.tight, probe, estimate)?;
        let features = self
            .extractor
            .extract_with_threshold(&alignment.aligned, self.config.ink_threshold)?;
        let decision = self
            .model
            .classify(features.values(), self.reject_threshold)?;
        Ok(Identification {
            decision,
            aligned_to: reference.label.clone(),
            alignment,
            features,
        })
    }

    /// Identifies every probe; results keep the input order.
    pub fn identify_all(&self, probes: &[GrayImage]) -> Vec<Result<Identification>> {
        probes.par_iter().map(|p| self.identify(p)).collect()
    }
}

impl std::fmt::Debug for Identifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Identifier")
            .field("references", &self.references.len())
            .field("extractor", &self.extractor)
            .field("reject_threshold", &self.reject_threshold)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DbConfig, Distortion, SyntheticSpec};
    use crate::rbfn::DEFAULT_SPREAD;

    fn small_db(noise: f64) -> SignatureDb {
        SignatureDb::generate(&DbConfig {
            subjects: 5,
            samples_per_subject: 4,
            seed: 11,
            noise_sigma: noise,
            ..DbConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn enrollment_images_identify_themselves() {
        let db = small_db(0.0);
        let id = Identifier::enroll(&db, DEFAULT_SPREAD, FeatureExtractor::default()).unwrap();
        for s in &db.subjects {
            let out = id.identify(&s.samples[0]).unwrap();
            assert_eq!(out.label(), Some(s.id.as_str()));
            assert_eq!(out.aligned_to, s.id);
            assert_eq!(out.alignment.params.rotation_deg, 0.0);
        }
    }

    #[test]
    fn rotated_reference_is_recognised() {
        let db = small_db(0.0);
        let id = Identifier::enroll(&db, DEFAULT_SPREAD, FeatureExtractor::default()).unwrap();
        let clean = crate::dataset::render_clean(&SyntheticSpec {
            subject_seed: crate::dataset::mix_seed(11, 2),
            ..SyntheticSpec::new(0)
        });
        assert_eq!(clean, db.subjects[2].samples[0]);
        let d = Distortion {
            rotation_deg: 20.0,
            scale: 0.8,
            ..Distortion::identity()
        };
        let probe = crate::dataset::distort(&clean, &d, (320, 240)).unwrap();
        let out = id.identify(&probe).unwrap();
        assert_eq!(out.label(), Some("s003"));
        assert!((out.alignment.params.rotation_deg - 20.0).abs() <= 2.0);
    }

    #[test]
    fn batch_matches_single_calls() {
        let db = small_db(4.0);
        let id = Identifier::enroll(&db, DEFAULT_SPREAD, FeatureExtractor::default()).unwrap();
        let probes: Vec<GrayImage> = db.subjects.iter().map(|s| s.samples[1].clone()).collect();
        let batch = id.identify_all(&probes);
        for (p, b) in probes.iter().zip(batch) {
            let single = id.identify(p).unwrap();
            let b = b.unwrap();
            assert_eq!(single.decision, b.decision);
            assert_eq!(single.features, b.features);
        }
    }

    #[test]
    fn blank_probe_has_no_ink() {
        let db = small_db(0.0);
        let id = Identifier::enroll(&db, DEFAULT_SPREAD, FeatureExtractor::default()).unwrap();
        let err = id.identify(&GrayImage::filled(50, 50, 255)).unwrap_err();
        assert_eq!(err.name(), "NoInk");
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sigkit_core::dataset::{self, DbConfig, Gallery, SignatureDb};
use sigkit_core::eval::{
    self, ConvergenceConfig, RecognitionConfig, RstTableConfig, ITERATION_BUDGETS, PROBE_COUNTS,
};
use sigkit_core::image;
use sigkit_core::numfmt::sig17;
use sigkit_core::pipeline::Identifier;
use sigkit_core::rbfn::{LearningRates, RbfnModel};
use sigkit_core::{FeatureExtractor, RstConfig};

/// Offline signature identification: alignment, DCT features and an RBF network.
#[derive(Parser, Debug)]
#[command(name = "sigkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic signature database with known distortions.
    Gen(GenArgs),
    /// Extract reference features for every subject and write the gallery manifest.
    Enroll(EnrollArgs),
    /// Fit (and optionally refine by gradient descent) a network on a gallery.
    Train(TrainArgs),
    /// Align one probe to a reference and report the detected parameters.
    Rst(RstArgs),
    /// Write the 64 features of an aligned image as one CSV row.
    Features(FeaturesArgs),
    /// Identify one probe against an enrolled gallery and trained model.
    Identify(IdentifyArgs),
    /// Alignment error table on synthetic probes with known rotation and scale.
    EvalRst(EvalRstArgs),
    /// Training MSE for a series of iteration budgets.
    EvalConvergence(EvalConvergenceArgs),
    /// Recognition rate over growing numbers of probes.
    EvalRecognition(EvalRecognitionArgs),
}

#[derive(Args, Debug)]
struct DbArgs {
    /// Number of subjects
    #[arg(long, default_value_t = 70)]
    subjects: usize,
    /// Samples per subject; the first enrolls, the rest are probes
    #[arg(long, default_value_t = 10)]
    samples_per_subject: usize,
    /// Probe rotations are whole degrees within plus/minus this
    #[arg(long, default_value_t = 30.0)]
    max_rotation: f64,
    /// Smallest probe scale
    #[arg(long, default_value_t = 0.7)]
    scale_min: f64,
    /// Largest probe scale
    #[arg(long, default_value_t = 1.3)]
    scale_max: f64,
    /// Standard deviation of the additive pixel noise
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
}

impl DbArgs {
    fn config(&self, seed: u64) -> DbConfig {
        DbConfig {
            subjects: self.subjects,
            samples_per_subject: self.samples_per_subject,
            seed,
            max_rotation_deg: self.max_rotation,
            scale_range: (self.scale_min, self.scale_max),
            noise_sigma: self.noise,
            ..DbConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    db: DbArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = "db")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EnrollArgs {
    /// Database directory containing subjects/<id>/<nn>.pgm
    #[arg(long, default_value = "db")]
    db: PathBuf,
    /// Manifest to write
    #[arg(long, default_value = "gallery.csv")]
    out: PathBuf,
    /// Feature extractor: dct or raw
    #[arg(long, default_value = "dct")]
    features: FeatureExtractor,
    /// Pixels darker than this are ink
    #[arg(long, default_value_t = 128)]
    ink_threshold: u8,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Gallery manifest
    #[arg(long, default_value = "gallery.csv")]
    gallery: PathBuf,
    /// Model file to write
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Gaussian width of every hidden unit
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    /// Hidden units; omit for one per gallery entry
    #[arg(long)]
    centers: Option<usize>,
    /// Gradient-descent epochs after the linear fit (0 to skip)
    #[arg(long, default_value_t = 0)]
    epochs: usize,
    /// Learning rates for weights, centers and widths
    #[arg(long, default_value = "0.01,0.001,0.001", value_parser = parse_rates)]
    rates: LearningRates,
}

#[derive(Args, Debug)]
struct RstArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    probe: PathBuf,
    /// Aligned probe (PGM)
    #[arg(long, default_value = "aligned.pgm")]
    out: PathBuf,
    /// Detected parameters (CSV)
    #[arg(long, default_value = "rst.csv")]
    report: PathBuf,
    #[arg(long, default_value_t = 128)]
    ink_threshold: u8,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "features.csv")]
    out: PathBuf,
    #[arg(long, default_value = "dct")]
    features: FeatureExtractor,
    #[arg(long, default_value_t = 128)]
    ink_threshold: u8,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[arg(long)]
    probe: PathBuf,
    #[arg(long, default_value = "model.json")]
    model: PathBuf,
    /// Gallery manifest; its sample paths are the alignment references
    #[arg(long, default_value = "gallery.csv")]
    gallery: PathBuf,
    /// Scores below this are rejected
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value = "dct")]
    features: FeatureExtractor,
    #[arg(long, default_value_t = 128)]
    ink_threshold: u8,
}

#[derive(Args, Debug)]
struct EvalRstArgs {
    /// Number of probes
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest absolute rotation, whole degrees
    #[arg(long, default_value_t = 55)]
    max_rotation: i64,
    #[arg(long, default_value_t = 0.3)]
    scale_min: f64,
    #[arg(long, default_value_t = 1.8)]
    scale_max: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Use the ten fixed reference (rotation, scale) pairs instead of random draws
    #[arg(long)]
    reference_pairs: bool,
    /// Output directory
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalConvergenceArgs {
    /// Comma-separated ascending iteration budgets
    #[arg(long, value_delimiter = ',', default_values_t = ITERATION_BUDGETS.to_vec())]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    subjects: usize,
    #[arg(long, default_value_t = 2)]
    samples_per_subject: usize,
    /// Hidden units
    #[arg(long, default_value_t = 10)]
    centers: usize,
    #[arg(long, default_value = "0.01,0.001,0.001", value_parser = parse_rates)]
    rates: LearningRates,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalRecognitionArgs {
    #[command(flatten)]
    db: DbArgs,
    /// Comma-separated probe counts
    #[arg(long, value_delimiter = ',', default_values_t = PROBE_COUNTS.to_vec())]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value = "dct")]
    features: FeatureExtractor,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

fn parse_rates(s: &str) -> Result<LearningRates, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [w, t, s] if [w, t, s].iter().all(|r| *r >= 0.0 && r.is_finite()) => Ok(LearningRates {
            weights: w,
            centers: t,
            widths: s,
        }),
        _ => Err("expected three non-negative rates: weights,centers,widths".into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> sigkit_core::Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Enroll(a) => enroll(a),
        Command::Train(a) => train(a),
        Command::Rst(a) => rst(a),
        Command::Features(a) => features(a),
        Command::Identify(a) => identify(a),
        Command::EvalRst(a) => eval_rst(a),
        Command::EvalConvergence(a) => eval_convergence(a),
        Command::EvalRecognition(a) => eval_recognition(a),
    }
}

fn gen(a: GenArgs) -> sigkit_core::Result<()> {
    let db = SignatureDb::generate(&a.db.config(a.seed))?;
    db.write(&a.out)?;
    let images: usize = db.subjects.iter().map(|s| s.samples.len()).sum();
    println!(
        "wrote {} subjects, {images} images to {}",
        db.subjects.len(),
        a.out.display()
    );
    Ok(())
}

fn enroll(a: EnrollArgs) -> sigkit_core::Result<()> {
    let gallery = dataset::build_gallery_with(&a.db, &a.out, a.features, a.ink_threshold)?;
    for (path, reason) in &gallery.failures {
        eprintln!("skipped {}: {reason}", path.display());
    }
    println!(
        "enrolled {} subjects into {}",
        gallery.entries.len(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> sigkit_core::Result<()> {
    let gallery = Gallery::load_manifest(&a.gallery)?;
    let samples = gallery.samples();
    let mut model = match a.centers {
        Some(m) => RbfnModel::fit_with_centers(&samples, a.spread, m)?,
        None => RbfnModel::fit_exact(&samples, a.spread)?,
    };
    if a.epochs > 0 {
        model = model.train_gradient(&samples, a.rates, a.epochs)?.0;
    }
    model.save(&a.out)?;
    println!(
        "trained {} hidden units on {} samples, mse {}; model in {}",
        model.hidden_units(),
        samples.len(),
        sig17(model.mse(&samples)?),
        a.out.display()
    );
    Ok(())
}

fn rst_config(ink_threshold: u8) -> RstConfig {
    RstConfig {
        ink_threshold,
        ..RstConfig::default()
    }
}

fn write_text(path: &Path, text: &str) -> sigkit_core::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn rst(a: RstArgs) -> sigkit_core::Result<()> {
    let reference = image::load_image(&a.reference)?;
    let probe = image::load_image(&a.probe)?;
    let alignment = rst_config(a.ink_threshold).correct(&reference, &probe)?;
    image::save_image(&alignment.aligned, &a.out)?;
    let p = alignment.params;
    let profile: Vec<String> = alignment
        .profile
        .scores
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_text(
        &a.report,
        &format!(
            "rotation_deg,tx,ty,scale_ratio,coarse_profile\n{},{},{},{},{}\n",
            p.rotation_deg,
            p.translation_x,
            p.translation_y,
            p.scale_ratio,
            profile.join(";")
        ),
    )?;
    println!(
        "rotation {} deg, tx {}, ty {}, scale ratio {:.4}",
        p.rotation_deg, p.translation_x, p.translation_y, p.scale_ratio
    );
    Ok(())
}

fn features(a: FeaturesArgs) -> sigkit_core::Result<()> {
    let img = image::load_image(&a.input)?;
    let f = a.features.extract_with_threshold(&img, a.ink_threshold)?;
    let row: Vec<String> = f.values().iter().map(|&v| sig17(v)).collect();
    write_text(&a.out, &format!("{}\n", row.join(",")))
}

fn identify(a: IdentifyArgs) -> sigkit_core::Result<()> {
    let model = RbfnModel::load(&a.model)?;
    let gallery = Gallery::load_manifest(&a.gallery)?;
    let references = gallery
        .entries
        .iter()
        .map(|e| Ok((e.subject_id.clone(), image::load_image(&e.source_path)?)))
        .collect::<sigkit_core::Result<Vec<_>>>()?;
    let identifier = Identifier::new(
        references,
        model,
        rst_config(a.ink_threshold),
        a.features,
        a.threshold,
    )?;
    let probe = image::load_image(&a.probe)?;
    let out = identifier.identify(&probe)?;
    let p = out.alignment.params;
    match &out.decision {
        sigkit_core::Decision::Class { label, score, .. } => println!(
            "subject_id={label} score={score:.6} aligned_to={} rotation_deg={} scale_ratio={:.4}",
            out.aligned_to, p.rotation_deg, p.scale_ratio
        ),
        sigkit_core::Decision::Rejected { best_score } => println!(
            "subject_id=Rejected score={best_score:.6} aligned_to={} rotation_deg={} scale_ratio={:.4}",
            out.aligned_to, p.rotation_deg, p.scale_ratio
        ),
    }
    Ok(())
}

fn print_aggregates(aggregates: &[(String, f64)]) {
    for (name, value) in aggregates {
        println!("{name}={value}");
    }
}

fn eval_rst(a: EvalRstArgs) -> sigkit_core::Result<()> {
    let config = if a.reference_pairs {
        RstTableConfig {
            seed: a.seed,
            noise_sigma: a.noise,
            ..RstTableConfig::reference_pairs()
        }
    } else {
        RstTableConfig {
            n_samples: a.samples,
            seed: a.seed,
            max_rotation_deg: a.max_rotation,
            scale_range: (a.scale_min, a.scale_max),
            noise_sigma: a.noise,
            ..RstTableConfig::default()
        }
    };
    let report = eval::rst_error_table(&config)?;
    report.write(a.out.join("rst_table.csv"))?;
    eval::error_series(&report).write(a.out.join("rst_error_series.csv"))?;
    print_aggregates(&report.aggregates);
    Ok(())
}

fn eval_convergence(a: EvalConvergenceArgs) -> sigkit_core::Result<()> {
    let config = ConvergenceConfig {
        budgets: a.budgets,
        spread: a.spread,
        seed: a.seed,
        subjects: a.subjects,
        samples_per_subject: a.samples_per_subject,
        hidden_units: a.centers,
        rates: a.rates,
    };
    let report = eval::convergence_sweep(&config)?;
    report.write(a.out.join("convergence.csv"))?;
    print_aggregates(&report.aggregates);
    Ok(())
}

fn eval_recognition(a: EvalRecognitionArgs) -> sigkit_core::Result<()> {
    let db = a.db.config(a.seed);
    let config = RecognitionConfig {
        counts: a.counts,
        seed: a.seed,
        spread: a.spread,
        reject_threshold: a.threshold,
        extractor: a.features.name().to_string(),
        db: (&db).into(),
    };
    let sweep = eval::recognition_sweep_synthetic(&config)?;
    sweep.report.write(a.out.join("recognition.csv"))?;
    sweep
        .outcomes
        .write(a.out.join("recognition_outcomes.csv"))?;
    for row in &sweep.report.rows {
        println!(
            "{} probes: {}%",
            row.number_of_samples, row.recognition_rate_percent
        );
    }
    print_aggregates(&sweep.report.aggregates);
    Ok(())
}

//! Command-line front end for the fcid colorization-forensics library.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use fcid::channels::{extract_channel_planes, ChannelConfig};
use fcid::eval::default_param_grid;
use fcid::hist::BinCounts;
use fcid::manifest::DatasetManifest;
use fcid::model::{FcidModel, Method};
use fcid::pipeline::{
    cross_validate, detect, evaluate_model, grid_search_manifest, histdump, train, PipelineConfig,
};
use fcid::raster::{load_image, save_plane_png, Plane};
use fcid::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "fcid",
    version,
    about = "Fake colorized image detection: train, detect and evaluate histogram and feature-encoding detectors"
)]
struct Cli {
    /// Master seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON pipeline configuration; fields override the built-in defaults,
    /// command-line flags override the file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (defaults to all logical CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Hist,
    Fe,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Method {
        match value {
            MethodArg::Hist => Method::Hist,
            MethodArg::Fe => Method::Fe,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract the four analysis channels of one image.
    Extract {
        image: PathBuf,
        /// Patch radius for the dark/bright channels.
        #[arg(long)]
        patch_radius: Option<usize>,
        /// Write the channel summary JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also render each plane as a grayscale PNG `<prefix>_<channel>.png`.
        #[arg(long, value_name = "PREFIX")]
        png_prefix: Option<PathBuf>,
    },
    /// Export class-level channel histograms as CSV.
    Histdump {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Uniform bin count for all four channels.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        patch_radius: Option<usize>,
    },
    /// Train a detector and persist the model.
    Train {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// SVM cost (defaults: hist 32, fe 2).
        #[arg(long)]
        c: Option<f64>,
        /// RBF gamma (default 1/2).
        #[arg(long)]
        gamma: Option<f64>,
        /// Decision threshold (defaults: hist 0.455, fe 0.492).
        #[arg(long)]
        threshold: Option<f64>,
        /// Uniform histogram bin count (default 200).
        #[arg(long)]
        bins: Option<usize>,
        /// Mixture components (default 8).
        #[arg(long)]
        components: Option<usize>,
        /// Per-image pixel sample cap (default 2048).
        #[arg(long)]
        sample_cap: Option<usize>,
        #[arg(long)]
        patch_radius: Option<usize>,
    },
    /// Classify images with a trained model.
    Detect {
        #[arg(long)]
        model: PathBuf,
        /// Manifest listing the images to classify.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Image files (alternative to --manifest).
        #[arg(required_unless_present = "manifest")]
        images: Vec<PathBuf>,
        /// Write the JSON results here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a model on a labeled manifest: HTER, ROC and AUC.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write ROC points as CSV (`fpr,tpr`).
        #[arg(long)]
        roc_csv: Option<PathBuf>,
        /// Write the threshold/HTER curve as CSV.
        #[arg(long)]
        threshold_csv: Option<PathBuf>,
    },
    /// HTER grid search over SVM cost and gamma.
    GridSearch {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        manifest: PathBuf,
        /// Disjoint validation manifest; without it a seeded pair-aware
        /// 50/50 split of the training manifest is used.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated cost grid (default 2^-6..2^6).
        #[arg(long, value_delimiter = ',')]
        c_grid: Vec<f64>,
        /// Comma-separated gamma grid (default 2^-6..2^6).
        #[arg(long, value_delimiter = ',')]
        g_grid: Vec<f64>,
    },
    /// k-fold cross-validation with per-fold threshold selection.
    CrossValidate {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic natural/colorized corpus with a manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        n_pairs: usize,
        /// Perturbation strength in [0, 1].
        #[arg(long, default_value_t = 0.4)]
        strength: f64,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

fn main() {
    if let Err(err) = run() {
        // One machine-readable error line on stderr.
        eprintln!("{}", json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }

    let mut cfg: PipelineConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config `{}`", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config `{}`", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    match cli.command {
        Command::Extract {
            image,
            patch_radius,
            out,
            png_prefix,
        } => {
            if let Some(r) = patch_radius {
                cfg.channel.patch_radius = r;
            }
            cmd_extract(&image, &cfg.channel, out.as_deref(), png_prefix.as_deref())
        }
        Command::Histdump {
            manifest,
            out,
            bins,
            patch_radius,
        } => {
            if let Some(k) = bins {
                cfg.bins = BinCounts::uniform(k);
            }
            if let Some(r) = patch_radius {
                cfg.channel.patch_radius = r;
            }
            let manifest = DatasetManifest::load(&manifest)?;
            let file =
                fs::File::create(&out).with_context(|| format!("creating `{}`", out.display()))?;
            histdump(&manifest, &cfg, file)?;
            println!("{}", json!({ "histdump": out, "images": manifest.len() }));
            Ok(())
        }
        Command::Train {
            method,
            manifest,
            out,
            c,
            gamma,
            threshold,
            bins,
            components,
            sample_cap,
            patch_radius,
        } => {
            let method: Method = method.into();
            apply_train_overrides(
                &mut cfg,
                method,
                c,
                gamma,
                threshold,
                bins,
                components,
                sample_cap,
                patch_radius,
            );
            let manifest = DatasetManifest::load(&manifest)?;
            let model = train(&manifest, method, &cfg)?;
            model.save(&out)?;
            println!(
                "{}",
                json!({
                    "model": out,
                    "method": method.to_string(),
                    "images": manifest.len(),
                    "support_vectors": model.svm.support_vectors.len(),
                    "threshold": model.svm.threshold,
                })
            );
            Ok(())
        }
        Command::Detect {
            model,
            manifest,
            images,
            out,
        } => cmd_detect(&model, manifest.as_deref(), &images, out.as_deref()),
        Command::Eval {
            model,
            manifest,
            report,
            roc_csv,
            threshold_csv,
        } => cmd_eval(
            &model,
            &manifest,
            report.as_deref(),
            roc_csv.as_deref(),
            threshold_csv.as_deref(),
        ),
        Command::GridSearch {
            method,
            manifest,
            validation,
            out,
            c_grid,
            g_grid,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let validation = validation
                .as_deref()
                .map(DatasetManifest::load)
                .transpose()?;
            let c_grid = if c_grid.is_empty() {
                default_param_grid()
            } else {
                c_grid
            };
            let g_grid = if g_grid.is_empty() {
                default_param_grid()
            } else {
                g_grid
            };
            let result = grid_search_manifest(
                &manifest,
                validation.as_ref(),
                method.into(),
                &cfg,
                &c_grid,
                &g_grid,
            )?;
            emit_json(&serde_json::to_value(&result)?, out.as_deref())
        }
        Command::CrossValidate {
            method,
            manifest,
            folds,
            out,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let report = cross_validate(&manifest, method.into(), &cfg, folds)?;
            emit_json(&serde_json::to_value(&report)?, out.as_deref())
        }
        Command::Synth {
            out_dir,
            n_pairs,
            strength,
            size,
        } => {
            let synth_cfg = SynthConfig {
                pairs: n_pairs,
                strength,
                size,
                seed: cfg.seed,
                ..Default::default()
            };
            let manifest = generate(&out_dir, &synth_cfg)?;
            println!(
                "{}",
                json!({
                    "manifest": out_dir.join("manifest.csv"),
                    "pairs": n_pairs,
                    "images": manifest.len(),
                })
            );
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_train_overrides(
    cfg: &mut PipelineConfig,
    method: Method,
    c: Option<f64>,
    gamma: Option<f64>,
    threshold: Option<f64>,
    bins: Option<usize>,
    components: Option<usize>,
    sample_cap: Option<usize>,
    patch_radius: Option<usize>,
) {
    let (svm, thr) = match method {
        Method::Hist => (&mut cfg.hist_svm, &mut cfg.hist_threshold),
        Method::Fe => (&mut cfg.fe_svm, &mut cfg.fe_threshold),
    };
    if let Some(c) = c {
        svm.c = c;
    }
    if let Some(g) = gamma {
        svm.gamma = g;
    }
    if let Some(t) = threshold {
        *thr = t;
    }
    if let Some(k) = bins {
        cfg.bins = BinCounts::uniform(k);
    }
    if let Some(m) = components {
        cfg.components = m;
    }
    if let Some(cap) = sample_cap {
        cfg.sample_cap = cap;
    }
    if let Some(r) = patch_radius {
        cfg.channel.patch_radius = r;
    }
}

fn plane_summary(plane: &Plane) -> serde_json::Value {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in plane.values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    json!({ "min": lo, "max": hi, "mean": plane.mean() })
}

fn cmd_extract(
    image: &Path,
    channel: &ChannelConfig,
    out: Option<&Path>,
    png_prefix: Option<&Path>,
) -> Result<()> {
    let loaded = load_image(image)?;
    let planes = extract_channel_planes(&loaded.image, channel);
    let summary = json!({
        "image": image,
        "width": planes.width(),
        "height": planes.height(),
        "grayscale": loaded.grayscale,
        "patch_radius": channel.patch_radius,
        "channels": {
            "hue": plane_summary(&planes.hue),
            "saturation": plane_summary(&planes.saturation),
            "dark": plane_summary(&planes.dark),
            "bright": plane_summary(&planes.bright),
        }
    });
    if let Some(prefix) = png_prefix {
        let base = prefix.to_string_lossy();
        for (name, plane) in [
            ("hue", &planes.hue),
            ("saturation", &planes.saturation),
            ("dark", &planes.dark),
            ("bright", &planes.bright),
        ] {
            save_plane_png(plane, &PathBuf::from(format!("{base}_{name}.png")))?;
        }
    }
    emit_json(&summary, out)
}

fn cmd_detect(
    model_path: &Path,
    manifest: Option<&Path>,
    images: &[PathBuf],
    out: Option<&Path>,
) -> Result<()> {
    let model = FcidModel::load(model_path)?;
    let paths: Vec<PathBuf> = match manifest {
        Some(m) => DatasetManifest::load(m)?.paths(),
        None => images.to_vec(),
    };
    let records = detect(&model, &paths);
    let rows: Vec<serde_json::Value> = records
        .iter()
        .map(|r| match &r.outcome {
            Ok(d) => json!({
                "path": r.path,
                "status": "ok",
                "label": d.label.as_str(),
                "probability": d.probability,
                "grayscale": r.grayscale,
            }),
            Err(e) => json!({ "path": r.path, "status": "error", "error": e }),
        })
        .collect();
    emit_json(&serde_json::Value::Array(rows), out)
}

fn cmd_eval(
    model_path: &Path,
    manifest_path: &Path,
    report: Option<&Path>,
    roc_csv: Option<&Path>,
    threshold_csv: Option<&Path>,
) -> Result<()> {
    let model = FcidModel::load(model_path)?;
    let manifest = DatasetManifest::load(manifest_path)?;
    let evaluation = evaluate_model(&model, &manifest)?;

    if let Some(path) = roc_csv {
        let mut file = fs::File::create(path)?;
        writeln!(file, "fpr,tpr")?;
        for (fpr, tpr) in &evaluation.report.roc {
            writeln!(file, "{fpr},{tpr}")?;
        }
    }
    if let Some(path) = threshold_csv {
        let mut file = fs::File::create(path)?;
        writeln!(file, "threshold,hter")?;
        for (t, h) in &evaluation.sweep.curve {
            writeln!(file, "{t},{h}")?;
        }
    }

    let body = json!({
        "model": model_path,
        "method": model.method.to_string(),
        "images": manifest.len(),
        "evaluation": evaluation,
    });
    emit_json(&body, report)
}

fn emit_json(value: &serde_json::Value, out: Option<&std::path::Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing `{}`", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use volbench::manifest::{GroundTruthSource, ImageEntry, Split};
use volbench::{
    apply_postprocess, load_manifest, load_predictions, preprocess as preprocess_volume, read_volume, write_volume, ApInterpolation,
    BootstrapOptions, DatasetManifest, Detection, EvalConfig, EvalSettings, GroundTruthSet, Interpolation, MethodRun,
    OfficialProtocol, PostprocessConfig, PreprocessConfig, RankMetric, Strictness, TieMode,
};

use crate::config::{self, load_file_config, FileConfig};
use crate::output::{self, EvaluationReport, MethodEvaluation};
use crate::{CliError, EvalArgs, ExtractArgs, PreprocessArgs, RankArgs, ReportArgs};

/// Everything an evaluation or ranking run needs after flags and the config
/// file are merged.
struct EvalJob {
    manifest: DatasetManifest,
    split: Option<Split>,
    preds: Vec<(String, PathBuf)>,
    settings: EvalSettings,
    postprocess: Option<PostprocessConfig>,
    strictness: Strictness,
    out: PathBuf,
}

struct LoadedMethod {
    method_id: String,
    source: PathBuf,
    images: Option<Vec<String>>,
    detections: Vec<Detection>,
    warnings: Vec<String>,
}

fn file_config(path: Option<&PathBuf>) -> Result<FileConfig, CliError> {
    path.map(|p| load_file_config(p)).transpose().map(Option::unwrap_or_default)
}

fn required<T>(value: Option<T>, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing {what}")))
}

fn resolve_eval(args: &EvalArgs, file: &FileConfig) -> Result<EvalJob, CliError> {
    let manifest_path = required(file.manifest.clone().or_else(|| args.manifest.clone()), "--manifest")?;
    let manifest = load_manifest(&manifest_path)?;

    let all_splits = file.all_splits.unwrap_or(args.all_splits);
    let split = match (all_splits, file.split) {
        (true, _) => None,
        (false, Some(s)) => Some(s),
        (false, None) => Some(args.split.parse::<Split>()?),
    };

    let mut preds = Vec::new();
    match &file.predictions {
        Some(map) => preds.extend(map.iter().map(|(k, v)| (k.clone(), v.clone()))),
        None => {
            for p in &args.preds {
                preds.push(config::parse_pred(p)?);
            }
        }
    }
    if preds.is_empty() {
        return Err(CliError::Config("no prediction files given (use --pred <method>=<path>)".into()));
    }
    let mut seen = HashSet::new();
    if let Some((id, _)) = preds.iter().find(|(id, _)| !seen.insert(id.clone())) {
        return Err(CliError::Config(format!("method '{id}' given twice")));
    }

    let mut eval = match &file.eval {
        Some(c) => c.clone(),
        None => {
            let mut c = EvalConfig::default();
            if let Some(t) = args.iou {
                c.iou_threshold = t;
            }
            if let Some(f) = &args.fppi {
                c.fppi_thresholds = config::parse_float_list(f)?;
            }
            c
        }
    };
    if file.eval.is_none() {
        if let Some(a) = &args.ap_interpolation {
            eval.ap_interpolation = match a.as_str() {
                "all-points" => ApInterpolation::AllPoints,
                "101" => ApInterpolation::Points101,
                other => return Err(CliError::Config(format!("unknown AP interpolation '{other}'"))),
            };
        }
    }

    let official = match file.official {
        Some(o) => Some(o),
        None => args.official.as_deref().map(str::parse::<OfficialProtocol>).transpose()?,
    };
    let criterion = match file.criterion {
        Some(c) => Some(c),
        None => args.criterion.as_deref().map(|c| config::parse_criterion(c, eval.iou_threshold)).transpose()?,
    };
    let policy = match file.duplicate_policy {
        Some(p) => Some(p),
        None => args.duplicate_policy.as_deref().map(config::parse_policy).transpose()?,
    };
    let settings = config::eval_settings(official, criterion, policy, eval)?;

    let postprocess = match &file.postprocess {
        Some(p) => Some(p.clone()),
        None if args.min_score.is_some() || args.nms_iou.is_some() || args.top_k.is_some() => {
            let d = PostprocessConfig::default();
            Some(PostprocessConfig {
                min_score: args.min_score.unwrap_or(d.min_score),
                nms_iou: args.nms_iou.unwrap_or(d.nms_iou),
                max_detections_per_image: args.top_k,
            })
        }
        None => None,
    };
    if let Some(p) = &postprocess {
        p.validate()?;
    }

    let strictness = match file.unknown_images.as_deref().unwrap_or(&args.unknown_images) {
        "fail" => Strictness::Fail,
        "warn" => Strictness::Warn,
        other => return Err(CliError::Config(format!("unknown-images must be fail or warn, got '{other}'"))),
    };
    let out = file.out.clone().or_else(|| args.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    Ok(EvalJob {
        manifest,
        split,
        preds,
        settings,
        postprocess,
        strictness,
        out,
    })
}

fn load_methods(job: &EvalJob, gt: &GroundTruthSet) -> Result<Vec<LoadedMethod>, CliError> {
    let in_split: HashSet<&str> = gt.image_ids.iter().map(String::as_str).collect();
    let mut out = Vec::with_capacity(job.preds.len());
    for (id, path) in &job.preds {
        let file = load_predictions(path, Some(&job.manifest), job.strictness)?;
        if file.method_id != *id {
            log::info!("{}: method '{}' evaluated as '{id}'", path.display(), file.method_id);
        }
        let mut warnings = file.warnings;
        let total = file.detections.len();
        let mut detections: Vec<Detection> = file
            .detections
            .into_iter()
            .filter(|d| in_split.contains(d.image_id.as_str()))
            .collect();
        if detections.len() < total {
            let msg = format!("{} detection(s) on images outside the evaluated split dropped", total - detections.len());
            log::warn!("{id}: {msg}");
            warnings.push(msg);
        }
        if let Some(p) = &job.postprocess {
            detections = apply_postprocess(&detections, p)?;
        }
        out.push(LoadedMethod {
            method_id: id.clone(),
            source: path.clone(),
            images: file.images,
            detections,
            warnings,
        });
    }
    Ok(out)
}

pub fn evaluate(args: &EvalArgs) -> Result<(), CliError> {
    let file = file_config(args.config.as_ref())?;
    let job = resolve_eval(args, &file)?;
    let gt = job.manifest.ground_truth_set(job.split)?;
    let methods = load_methods(&job, &gt)?;
    let mut evaluations = Vec::with_capacity(methods.len());
    for m in methods {
        let result = volbench::evaluate(&m.detections, &gt, &job.settings)?;
        log::info!("{}: mAP {} FROC {}", m.method_id, output::pct(result.map), output::pct(result.froc_score));
        evaluations.push(MethodEvaluation {
            method_id: m.method_id,
            source: m.source.display().to_string(),
            warnings: m.warnings,
            result,
        });
    }
    let report = EvaluationReport {
        dataset_id: job.manifest.dataset_id.clone(),
        split: job.split,
        settings: job.settings.clone(),
        postprocess: job.postprocess.clone(),
        methods: evaluations,
    };
    output::write_file(&job.out.join("evaluation.json"), &output::to_json(&report))?;
    let table = output::evaluation_table(&report);
    output::write_file(&job.out.join("table.csv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn rank(args: &RankArgs, threads: usize) -> Result<(), CliError> {
    let file = file_config(args.eval.config.as_ref())?;
    let job = resolve_eval(&args.eval, &file)?;
    let gt = job.manifest.ground_truth_set(job.split)?;
    let runs: Vec<MethodRun> = load_methods(&job, &gt)?
        .into_iter()
        .map(|m| MethodRun {
            method_id: m.method_id,
            detections: m.detections,
            image_ids: m.images,
        })
        .collect();

    let metrics = match &file.metrics {
        Some(m) => m.clone(),
        None => match args.metric.as_str() {
            "both" => vec![RankMetric::Map, RankMetric::Froc],
            m => vec![m.parse::<RankMetric>()?],
        },
    };
    let tie_mode = match file.tie_mode {
        Some(t) => t,
        None => match args.tie_mode.as_str() {
            "fractional" => TieMode::Fractional,
            "min" => TieMode::Min,
            other => return Err(CliError::Config(format!("unknown tie mode '{other}'"))),
        },
    };
    let mut dists = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let options = BootstrapOptions {
            metric,
            iterations: file.iterations.unwrap_or(args.iterations),
            seed: file.seed.unwrap_or(args.seed),
            settings: job.settings.clone(),
            tie_mode,
            threads: file.threads.unwrap_or(threads),
            baseline: file.baseline.clone().or_else(|| args.baseline.clone()),
        };
        let dist = volbench::bootstrap_rank(&runs, &gt, &options)?;
        let name = match metric {
            RankMetric::Map => "map",
            RankMetric::Froc => "froc",
        };
        output::write_file(&job.out.join(format!("ranking_{name}.json")), &output::to_json(&dist))?;
        dists.push(dist);
    }
    output::write_file(&job.out.join("rank_histogram.csv"), &output::rank_histogram_csv(&dists))?;
    let deltas = output::deltas_csv(&dists);
    output::write_file(&job.out.join("deltas.csv"), &deltas)?;
    print!("{deltas}");
    Ok(())
}

pub fn extract(args: &ExtractArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&args.manifest)?;
    let boxes = manifest.to_box_manifest()?;
    output::write_file(&args.out, &boxes.to_json())?;
    let counts = manifest.object_counts()?;
    for (split, n) in counts {
        println!("{split:?}: {n} object(s)");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProvenanceItem {
    image_id: String,
    kind: &'static str,
    input: String,
    output: String,
    input_shape: [usize; 3],
    input_spacing: [f64; 3],
    output_shape: [usize; 3],
    output_spacing: [f64; 3],
}

#[derive(Debug, Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    source_manifest: String,
    config: PreprocessConfig,
    items: Vec<ProvenanceItem>,
}

fn preprocess_config(args: &PreprocessArgs, file: &FileConfig) -> Result<PreprocessConfig, CliError> {
    if let Some(c) = &file.preprocess {
        c.validate()?;
        return Ok(c.clone());
    }
    let mut c = match args.modality.as_str() {
        "ct" => PreprocessConfig::ct(),
        "mri" => PreprocessConfig::mri(),
        other => return Err(CliError::Config(format!("unknown modality '{other}'"))),
    };
    if let Some(s) = &args.target_spacing {
        c.target_spacing = config::parse_floats::<3>(s)?;
    }
    if let Some(i) = &args.interpolation {
        c.image_interpolation = match i.as_str() {
            "trilinear" => Interpolation::Trilinear,
            "nearest" => Interpolation::Nearest,
            other => return Err(CliError::Config(format!("unknown interpolation '{other}'"))),
        };
    }
    if let Some(clip) = &args.clip {
        let [lo, hi] = config::parse_floats::<2>(clip)?;
        c.clip_percentiles = Some((lo, hi));
    }
    if args.no_clip {
        c.clip_percentiles = None;
    }
    if args.no_normalize {
        c.normalize = false;
    }
    c.validate()?;
    Ok(c)
}

fn process_one(
    manifest: &DatasetManifest,
    image_id: &str,
    rel: &Path,
    out_dir: &Path,
    sub: &str,
    config: &PreprocessConfig,
    is_label: bool,
) -> Result<(PathBuf, ProvenanceItem), CliError> {
    let input = manifest.resolve(rel);
    let volume = read_volume(&input).map_err(volbench::Error::from)?;
    let result = preprocess_volume(&volume, config, is_label)?;
    let out_rel = PathBuf::from(sub).join(format!("{image_id}.nii.gz"));
    let out_path = out_dir.join(&out_rel);
    if let Some(dir) = out_path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_volume(&result, &out_path).map_err(volbench::Error::from)?;
    let item = ProvenanceItem {
        image_id: image_id.to_string(),
        kind: if is_label { "mask" } else { "image" },
        input: input.display().to_string(),
        output: out_rel.display().to_string(),
        input_shape: volume.shape(),
        input_spacing: volume.spacing(),
        output_shape: result.shape(),
        output_spacing: result.spacing(),
    };
    Ok((out_rel, item))
}

/// Writes preprocessed images and masks plus a manifest pointing at them and
/// a provenance record.
pub fn preprocess(args: &PreprocessArgs) -> Result<(), CliError> {
    let file = file_config(args.config.as_ref())?;
    let manifest_path = required(file.manifest.clone().or_else(|| args.manifest.clone()), "--manifest")?;
    let out_dir = required(file.out.clone().or_else(|| args.out.clone()), "--out")?;
    let config = preprocess_config(args, &file)?;
    let manifest = load_manifest(&manifest_path)?;

    let mut items = Vec::new();
    let mut images = Vec::with_capacity(manifest.images.len());
    for entry in &manifest.images {
        let mut new_entry: ImageEntry = entry.clone();
        if let Some(rel) = &entry.image {
            let (out_rel, item) = process_one(&manifest, &entry.image_id, rel, &out_dir, "images", &config, false)?;
            new_entry.image = Some(out_rel);
            items.push(item);
        }
        if let GroundTruthSource::Mask {
            mask,
            label_classes,
            connectivity,
        } = &entry.ground_truth
        {
            let (out_rel, item) = process_one(&manifest, &entry.image_id, mask, &out_dir, "masks", &config, true)?;
            new_entry.ground_truth = GroundTruthSource::Mask {
                mask: out_rel,
                label_classes: label_classes.clone(),
                connectivity: *connectivity,
            };
            items.push(item);
        }
        if entry.spacing.is_some() {
            let mut s = [0.0; 3];
            for (slot, axis) in s.iter_mut().zip(manifest.axis_order) {
                *slot = config.target_spacing[axis as usize];
            }
            new_entry.spacing = Some(s);
        }
        images.push(new_entry);
    }
    let out_manifest = DatasetManifest::new(
        manifest.dataset_id.clone(),
        manifest.classes.clone(),
        manifest.axis_order,
        images,
        out_dir.clone(),
    )?;
    output::write_file(&out_dir.join("manifest.json"), &out_manifest.to_json())?;
    let provenance = Provenance {
        tool: "volbench",
        version: env!("CARGO_PKG_VERSION"),
        source_manifest: manifest_path.display().to_string(),
        config,
        items,
    };
    output::write_file(&out_dir.join("provenance.json"), &output::to_json(&provenance))?;
    println!("{} volume(s) written to {}", provenance.items.len(), out_dir.display());
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for input in &args.inputs {
        let path = if input.is_dir() { input.join("evaluation.json") } else { input.clone() };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let report: EvaluationReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Core(volbench::Error::Schema { path: path.clone(), message: e.to_string() }))?;
        reports.push(report);
    }
    let (csv, md) = output::combined_table(&reports);
    output::write_file(&args.out.join("report.csv"), &csv)?;
    output::write_file(&args.out.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}

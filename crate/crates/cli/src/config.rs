//! Run configuration: command-line flags overlaid by an optional JSON file.
//!
//! Every key of the file is optional; keys that are present win over the
//! corresponding flags. Relative paths in the file resolve against the file's
//! directory.
//!
//! ```json
//! {
//!   "manifest": "data/manifest.json",
//!   "split": "test",
//!   "predictions": {"nnDetection": "preds/nndet.json"},
//!   "baseline": "nnDetection",
//!   "official": "luna16",
//!   "eval": {"iou_threshold": 0.1, "fppi_thresholds": [0.125, 0.25, 0.5, 1, 2, 4, 8]},
//!   "postprocess": {"min_score": 0.05, "nms_iou": 0.1},
//!   "iterations": 1000,
//!   "seed": 0
//! }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use volbench::manifest::Split;
use volbench::{
    DuplicatePolicy, EvalConfig, EvalSettings, MatchCriterion, OfficialProtocol, PostprocessConfig, PreprocessConfig, RankMetric,
    TieMode,
};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub split: Option<Split>,
    pub all_splits: Option<bool>,
    pub predictions: Option<BTreeMap<String, PathBuf>>,
    pub baseline: Option<String>,
    pub official: Option<OfficialProtocol>,
    pub criterion: Option<MatchCriterion>,
    pub duplicate_policy: Option<DuplicatePolicy>,
    pub eval: Option<EvalConfig>,
    pub postprocess: Option<PostprocessConfig>,
    pub preprocess: Option<PreprocessConfig>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub metrics: Option<Vec<RankMetric>>,
    pub tie_mode: Option<TieMode>,
    pub threads: Option<usize>,
    pub unknown_images: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut cfg: FileConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let anchor = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let Some(p) = cfg.manifest.as_mut() {
        anchor(p);
    }
    if let Some(p) = cfg.out.as_mut() {
        anchor(p);
    }
    if let Some(preds) = cfg.predictions.as_mut() {
        preds.values_mut().for_each(anchor);
    }
    Ok(cfg)
}

/// Matching settings from a preset plus explicit overrides. An IoU criterion
/// given without a threshold takes the one from `config`.
pub fn eval_settings(
    official: Option<OfficialProtocol>,
    criterion: Option<MatchCriterion>,
    policy: Option<DuplicatePolicy>,
    config: EvalConfig,
) -> Result<EvalSettings, CliError> {
    let (mut crit, mut pol) = match official {
        Some(p) => (p.criterion(), p.duplicate_policy()),
        None => (MatchCriterion::IouThreshold(config.iou_threshold), DuplicatePolicy::Fp),
    };
    if let Some(c) = criterion {
        crit = c;
    }
    if let Some(p) = policy {
        pol = p;
    }
    let settings = EvalSettings {
        criterion: crit,
        duplicate_policy: pol,
        config,
    };
    settings.validate()?;
    Ok(settings)
}

/// Parses `iou`, `iou:0.3`, `half-diameter`, `radius` or `radius:5`.
pub fn parse_criterion(s: &str, iou_threshold: f64) -> Result<MatchCriterion, CliError> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let num = |a: &str| a.parse::<f64>().map_err(|_| CliError::Config(format!("bad number '{a}' in criterion '{s}'")));
    let crit = match (name, arg) {
        ("iou", None) => MatchCriterion::IouThreshold(iou_threshold),
        ("iou", Some(a)) => MatchCriterion::IouThreshold(num(a)?),
        ("half-diameter" | "center", None) => MatchCriterion::CenterHalfDiameter,
        ("radius", None) => MatchCriterion::CenterInRadius(volbench::RadiusSource::GtDiameter),
        ("radius", Some(a)) => MatchCriterion::CenterInRadius(volbench::RadiusSource::Explicit(num(a)?)),
        _ => return Err(CliError::Config(format!("unknown criterion '{s}'"))),
    };
    crit.validate()?;
    Ok(crit)
}

pub fn parse_policy(s: &str) -> Result<DuplicatePolicy, CliError> {
    match s {
        "fp" => Ok(DuplicatePolicy::Fp),
        "ignore" => Ok(DuplicatePolicy::Ignore),
        other => Err(CliError::Config(format!("unknown duplicate policy '{other}'"))),
    }
}

pub fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], CliError> {
    let v = parse_float_list(s)?;
    v.try_into().map_err(|_| CliError::Config(format!("expected {N} comma-separated numbers, got '{s}'")))
}

pub fn parse_float_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad number '{t}' in '{s}'"))))
        .collect()
}

/// `id=path` pairs from `--pred`.
pub fn parse_pred(s: &str) -> Result<(String, PathBuf), CliError> {
    match s.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => Ok((id.to_string(), PathBuf::from(path))),
        _ => Err(CliError::Config(format!("--pred expects <method>=<path>, got '{s}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_strings() {
        assert_eq!(parse_criterion("iou", 0.1).unwrap(), MatchCriterion::IouThreshold(0.1));
        assert_eq!(parse_criterion("iou:0.3", 0.1).unwrap(), MatchCriterion::IouThreshold(0.3));
        assert_eq!(parse_criterion("half-diameter", 0.1).unwrap(), MatchCriterion::CenterHalfDiameter);
        assert!(parse_criterion("iou:0", 0.1).is_err());
        assert!(parse_criterion("bogus", 0.1).is_err());
    }

    #[test]
    fn preset_then_override() {
        let s = eval_settings(Some(OfficialProtocol::Luna16), None, None, EvalConfig::default()).unwrap();
        assert_eq!(s.criterion, MatchCriterion::CenterHalfDiameter);
        assert_eq!(s.duplicate_policy, DuplicatePolicy::Ignore);
        let s = eval_settings(Some(OfficialProtocol::Luna16), None, Some(DuplicatePolicy::Fp), EvalConfig::default()).unwrap();
        assert_eq!(s.duplicate_policy, DuplicatePolicy::Fp);
    }

    #[test]
    fn pred_pairs() {
        assert_eq!(parse_pred("a=x.json").unwrap(), ("a".to_string(), PathBuf::from("x.json")));
        assert!(parse_pred("x.json").is_err());
    }

    #[test]
    fn float_lists() {
        assert_eq!(parse_floats::<3>("1,2,3").unwrap(), [1.0, 2.0, 3.0]);
        assert!(parse_floats::<3>("1,2").is_err());
    }
}

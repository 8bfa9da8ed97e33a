//! Dataset-level evaluation: match every (image, class) pair, then compute
//! per-class AP and FROC and their means.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GroundTruthObject;
use crate::matching::{match_unchecked, score_order, DuplicatePolicy, MatchCriterion, MatchResult, PredictionStatus};
use crate::metrics::{average_precision, froc_from_pooled, pr_curve_from_pooled, ApInterpolation, EvalConfig, FrocResult};

/// How predictions are matched during an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub criterion: MatchCriterion,
    pub duplicate_policy: DuplicatePolicy,
    pub config: EvalConfig,
}

impl Default for EvalSettings {
    /// IoU matching at the configured threshold, duplicates counted as FP.
    fn default() -> Self {
        let config = EvalConfig::default();
        EvalSettings {
            criterion: MatchCriterion::IouThreshold(config.iou_threshold),
            duplicate_policy: DuplicatePolicy::Fp,
            config,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        self.criterion.validate()?;
        self.config.validate()
    }
}

/// Reference objects plus the image universe they are defined on.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSet {
    pub image_ids: Vec<String>,
    pub objects: Vec<GroundTruthObject>,
    /// Declared classes; classes seen in objects are added automatically.
    pub classes: Vec<u32>,
}

impl GroundTruthSet {
    pub fn new(image_ids: Vec<String>, objects: Vec<GroundTruthObject>, classes: Vec<u32>) -> Result<Self> {
        let set = GroundTruthSet {
            image_ids,
            objects,
            classes,
        };
        let index = set.image_index()?;
        if let Some(o) = set.objects.iter().find(|o| !index.contains_key(o.image_id.as_str())) {
            return Err(Error::UnknownImage {
                image_id: o.image_id.clone(),
                source_name: "ground truth".into(),
            });
        }
        Ok(set)
    }

    pub fn image_index(&self) -> Result<HashMap<&str, usize>> {
        let mut index = HashMap::with_capacity(self.image_ids.len());
        for (i, id) in self.image_ids.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(Error::DuplicateImage(id.clone()));
            }
        }
        Ok(index)
    }
}

/// Match results for every image (outer, universe order) and class (inner,
/// ascending class id).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchTable {
    pub classes: Vec<u32>,
    pub results: Vec<Vec<MatchResult>>,
}

/// Sorted union of declared classes and classes present in the data.
pub fn class_universe(gt: &GroundTruthSet, detections: &[&[crate::matching::Detection]]) -> Vec<u32> {
    let mut classes: BTreeSet<u32> = gt.classes.iter().copied().collect();
    classes.extend(gt.objects.iter().map(|o| o.class_id));
    for d in detections {
        classes.extend(d.iter().map(|d| d.class_id));
    }
    classes.into_iter().collect()
}

/// Matches all detections against the ground truth, per image and class.
pub fn match_dataset(
    detections: &[crate::matching::Detection],
    gt: &GroundTruthSet,
    classes: &[u32],
    settings: &EvalSettings,
) -> Result<MatchTable> {
    settings.validate()?;
    let index = gt.image_index()?;
    let class_pos: HashMap<u32, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let n_classes = classes.len();
    let n_images = gt.image_ids.len();

    let mut preds = vec![Vec::new(); n_images * n_classes];
    for d in detections {
        let img = *index.get(d.image_id.as_str()).ok_or_else(|| Error::UnknownImage {
            image_id: d.image_id.clone(),
            source_name: "detections".into(),
        })?;
        let cls = *class_pos
            .get(&d.class_id)
            .ok_or_else(|| Error::InvalidDetection(format!("class {} is not part of the evaluation", d.class_id)))?;
        preds[img * n_classes + cls].push(d.clone());
    }
    let mut gts = vec![Vec::new(); n_images * n_classes];
    for o in &gt.objects {
        let img = index[o.image_id.as_str()];
        let cls = *class_pos
            .get(&o.class_id)
            .ok_or_else(|| Error::InvalidDetection(format!("ground-truth class {} is not part of the evaluation", o.class_id)))?;
        gts[img * n_classes + cls].push(o.clone());
    }

    let results = (0..n_images)
        .into_par_iter()
        .map(|img| {
            (0..n_classes)
                .map(|cls| {
                    let k = img * n_classes + cls;
                    match_unchecked(&preds[k], &gts[k], settings.criterion, settings.duplicate_policy)
                })
                .collect()
        })
        .collect();
    Ok(MatchTable {
        classes: classes.to_vec(),
        results,
    })
}

/// Per-class scores. `ap` and `froc` are absent for classes without
/// non-ignored ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u32,
    pub n_gt: usize,
    pub n_predictions: usize,
    pub n_tp: usize,
    pub n_fp: usize,
    pub ap: Option<f64>,
    pub froc: Option<FrocResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMetadata {
    pub criterion: MatchCriterion,
    pub duplicate_policy: DuplicatePolicy,
    pub ap_interpolation: ApInterpolation,
    pub fppi_thresholds: Vec<f64>,
    /// FROC is computed per class and averaged over classes with ground truth.
    pub froc_aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub per_class: Vec<ClassMetrics>,
    pub map: f64,
    /// Per-threshold sensitivity averaged over classes.
    pub froc_sensitivities: Vec<f64>,
    pub froc_score: f64,
    pub n_images: usize,
    pub n_gt: usize,
    pub metadata: EvaluationMetadata,
}

/// Pooled, score-sorted `(score, is_tp)` pairs of one class over a multiset
/// of images (indices may repeat).
fn pool_class(table: &MatchTable, images: &[usize], cls: usize) -> (Vec<(f64, bool)>, usize, usize) {
    let mut n_gt = 0;
    let mut n_ignored = 0;
    let mut pooled = Vec::new();
    for &img in images {
        let m = &table.results[img][cls];
        n_gt += m.n_gt;
        for o in &m.predictions {
            match o.status {
                PredictionStatus::TruePositive(_) => pooled.push((o.score, true)),
                PredictionStatus::FalsePositive => pooled.push((o.score, false)),
                PredictionStatus::Ignored => n_ignored += 1,
            }
        }
    }
    let order = score_order(pooled.iter().map(|p| p.0));
    (order.into_iter().map(|i| pooled[i]).collect(), n_gt, n_ignored)
}

/// Scores the image multiset `images`. Returns `None` when no class has
/// ground truth in it.
pub fn score_images(table: &MatchTable, images: &[usize], config: &EvalConfig) -> Option<(f64, f64)> {
    let mut aps = Vec::new();
    let mut frocs = Vec::new();
    for cls in 0..table.classes.len() {
        let (pooled, n_gt, _) = pool_class(table, images, cls);
        if n_gt == 0 {
            continue;
        }
        aps.push(average_precision(&pr_curve_from_pooled(&pooled, n_gt), config.ap_interpolation));
        frocs.push(froc_from_pooled(&pooled, n_gt, images.len(), &config.fppi_thresholds).score);
    }
    if aps.is_empty() {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some((mean(&aps), mean(&frocs)))
}

/// Full evaluation over every image of the table.
pub fn summarize(table: &MatchTable, settings: &EvalSettings) -> Result<EvaluationResult> {
    let n_images = table.results.len();
    if n_images == 0 {
        return Err(Error::NoImages);
    }
    let images: Vec<usize> = (0..n_images).collect();
    let config = &settings.config;
    let mut per_class = Vec::with_capacity(table.classes.len());
    for (cls, &class_id) in table.classes.iter().enumerate() {
        let (pooled, n_gt, n_ignored) = pool_class(table, &images, cls);
        let n_tp = pooled.iter().filter(|p| p.1).count();
        let (ap, froc) = if n_gt > 0 {
            (
                Some(average_precision(&pr_curve_from_pooled(&pooled, n_gt), config.ap_interpolation)),
                Some(froc_from_pooled(&pooled, n_gt, n_images, &config.fppi_thresholds)),
            )
        } else {
            (None, None)
        };
        per_class.push(ClassMetrics {
            class_id,
            n_gt,
            n_predictions: pooled.len() + n_ignored,
            n_tp,
            n_fp: pooled.len() - n_tp,
            ap,
            froc,
        });
    }
    let scored: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.ap.is_some()).collect();
    if scored.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let k = scored.len() as f64;
    let map = scored.iter().map(|c| c.ap.unwrap()).sum::<f64>() / k;
    let froc_sensitivities: Vec<f64> = (0..config.fppi_thresholds.len())
        .map(|t| scored.iter().map(|c| c.froc.as_ref().unwrap().sensitivities[t]).sum::<f64>() / k)
        .collect();
    let froc_score = scored.iter().map(|c| c.froc.as_ref().unwrap().score).sum::<f64>() / k;
    Ok(EvaluationResult {
        n_gt: per_class.iter().map(|c| c.n_gt).sum(),
        per_class,
        map,
        froc_sensitivities,
        froc_score,
        n_images,
        metadata: EvaluationMetadata {
            criterion: settings.criterion,
            duplicate_policy: settings.duplicate_policy,
            ap_interpolation: config.ap_interpolation,
            fppi_thresholds: config.fppi_thresholds.clone(),
            froc_aggregation: "per_class_mean".into(),
        },
    })
}

/// Matches and summarizes in one call.
pub fn evaluate(detections: &[crate::matching::Detection], gt: &GroundTruthSet, settings: &EvalSettings) -> Result<EvaluationResult> {
    let classes = class_universe(gt, &[detections]);
    let table = match_dataset(detections, gt, &classes, settings)?;
    summarize(&table, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox3D;
    use crate::matching::Detection;

    fn gt(image: &str, class_id: u32, c: f64) -> GroundTruthObject {
        GroundTruthObject::from_box(image, class_id, BoundingBox3D::cube([c; 3], 4.0).unwrap())
    }

    fn det(image: &str, class_id: u32, c: f64, score: f64) -> Detection {
        Detection::new(image, class_id, BoundingBox3D::cube([c; 3], 4.0).unwrap(), score).unwrap()
    }

    #[test]
    fn perfect_two_class_detector() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let objects = vec![gt("a", 0, 10.0), gt("a", 1, 30.0), gt("b", 1, 50.0)];
        let dets: Vec<Detection> = objects.iter().map(|o| det(&o.image_id, o.class_id, o.center[0], 0.9)).collect();
        let set = GroundTruthSet::new(ids, objects, vec![0, 1]).unwrap();
        let r = evaluate(&dets, &set, &EvalSettings::default()).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.froc_score, 1.0);
        assert_eq!(r.n_gt, 3);
    }

    #[test]
    fn classes_without_ground_truth_are_excluded() {
        let set = GroundTruthSet::new(vec!["a".into()], vec![gt("a", 0, 0.0)], vec![0, 5]).unwrap();
        let dets = vec![det("a", 0, 0.0, 0.9), det("a", 5, 0.0, 0.9)];
        let r = evaluate(&dets, &set, &EvalSettings::default()).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.per_class[1].ap, None);
        assert_eq!(r.per_class[1].n_fp, 1);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let set = GroundTruthSet::new(vec!["a".into()], vec![gt("a", 0, 0.0)], vec![0]).unwrap();
        let r = evaluate(&[], &set, &EvalSettings::default()).unwrap();
        assert_eq!((r.map, r.froc_score), (0.0, 0.0));
    }

    #[test]
    fn unknown_detection_image_is_rejected() {
        let set = GroundTruthSet::new(vec!["a".into()], vec![gt("a", 0, 0.0)], vec![0]).unwrap();
        assert!(matches!(
            evaluate(&[det("zz", 0, 0.0, 0.5)], &set, &EvalSettings::default()),
            Err(Error::UnknownImage { .. })
        ));
    }

    #[test]
    fn duplicate_universe_ids_rejected() {
        assert!(matches!(
            GroundTruthSet::new(vec!["a".into(), "a".into()], vec![], vec![]),
            Err(Error::DuplicateImage(_))
        ));
    }

    #[test]
    fn no_ground_truth_anywhere() {
        let set = GroundTruthSet::new(vec!["a".into()], vec![], vec![0]).unwrap();
        assert!(matches!(evaluate(&[], &set, &EvalSettings::default()), Err(Error::NoGroundTruth)));
    }
}

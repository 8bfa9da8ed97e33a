//! Score filtering, class-wise NMS and per-image top-k.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::box_iou;
use crate::matching::{score_order, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessConfig {
    pub min_score: f64,
    pub nms_iou: f64,
    pub max_detections_per_image: Option<usize>,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            min_score: 0.0,
            nms_iou: 0.1,
            max_detections_per_image: None,
        }
    }
}

impl PostprocessConfig {
    /// Leaves every detection in place (only the order is canonicalized).
    pub fn identity() -> Self {
        PostprocessConfig {
            min_score: 0.0,
            nms_iou: 1.0,
            max_detections_per_image: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(Error::Config(format!("min_score {} must lie in [0, 1]", self.min_score)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Config(format!("nms_iou {} must lie in (0, 1]", self.nms_iou)));
        }
        Ok(())
    }
}

/// Greedy non-maximum suppression for one image and class. A detection is
/// kept iff its IoU with every previously kept one is below `iou_thresh`.
/// Output is in descending score order.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets.iter().map(|d| d.score)) {
        let d = &dets[i];
        if kept.iter().all(|k| box_iou(&k.bbox, &d.bbox) < iou_thresh) {
            kept.push(d.clone());
        }
    }
    kept
}

/// Score filter, then per-(image, class) NMS, then optional per-image top-k.
///
/// Output is canonical: images by id, then descending score, ties by class id
/// and original order.
pub fn apply_postprocess(dets: &[Detection], config: &PostprocessConfig) -> Result<Vec<Detection>> {
    config.validate()?;
    let mut groups: BTreeMap<(&str, u32), Vec<Detection>> = BTreeMap::new();
    for d in dets.iter().filter(|d| d.score >= config.min_score) {
        groups.entry((d.image_id.as_str(), d.class_id)).or_default().push(d.clone());
    }
    let survivors: Vec<((&str, u32), Vec<Detection>)> = groups
        .into_par_iter()
        .map(|(key, group)| (key, nms(&group, config.nms_iou)))
        .collect();

    let mut per_image: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for ((image, _), group) in survivors {
        per_image.entry(image).or_default().extend(group);
    }
    let mut out = Vec::with_capacity(dets.len());
    for (_, group) in per_image {
        let order = score_order(group.iter().map(|d| d.score));
        let take = config.max_detections_per_image.unwrap_or(usize::MAX);
        out.extend(order.into_iter().take(take).map(|i| group[i].clone()));
    }
    Ok(out)
}

//! Greedy prediction-to-ground-truth assignment for one image and class.
//!
//! Predictions are visited by descending score (input order breaks ties).
//! Each one takes the best still-unmatched, non-ignored ground truth that
//! qualifies under the criterion: highest IoU, or smallest centre distance.
//! A prediction that only qualifies against ignored objects is ignored; one
//! that only qualifies against already-matched objects is a duplicate and is
//! handled by the [`DuplicatePolicy`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, center_distance, BoundingBox3D, GroundTruthObject};

/// A scored predicted box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox3D,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, class_id: u32, bbox: BoundingBox3D, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidDetection(format!("score {score} outside [0, 1]")));
        }
        Ok(Detection {
            image_id: image_id.into(),
            class_id,
            bbox,
            score,
        })
    }
}

/// Where the acceptance radius of the centre-in-radius criterion comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSource {
    /// Half the ground-truth diameter.
    GtDiameter,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchCriterion {
    /// IoU of the boxes must reach the threshold.
    IouThreshold(f64),
    /// Predicted centre within half the object diameter of the reference centre.
    CenterHalfDiameter,
    /// Predicted centre within a radius of the reference centre.
    CenterInRadius(RadiusSource),
}

impl MatchCriterion {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MatchCriterion::IouThreshold(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::Config(format!("IoU threshold {t} must lie in (0, 1]")))
            }
            MatchCriterion::CenterInRadius(RadiusSource::Explicit(r)) if !(r > 0.0 && r.is_finite()) => {
                Err(Error::Config(format!("radius {r} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Qualification score of a pair: larger is better; `None` if the pair
    /// does not qualify.
    fn affinity(&self, pred: &Detection, gt: &GroundTruthObject) -> Option<f64> {
        match *self {
            MatchCriterion::IouThreshold(t) => {
                let iou = box_iou(&pred.bbox, &gt.bbox);
                (iou >= t).then_some(iou)
            }
            MatchCriterion::CenterHalfDiameter => {
                let d = center_distance(pred.bbox.center(), gt.center);
                (d <= gt.effective_diameter() / 2.0).then_some(-d)
            }
            MatchCriterion::CenterInRadius(source) => {
                let r = match source {
                    RadiusSource::GtDiameter => gt.effective_diameter() / 2.0,
                    RadiusSource::Explicit(r) => r,
                };
                let d = center_distance(pred.bbox.center(), gt.center);
                (d <= r).then_some(-d)
            }
        }
    }
}

/// Treatment of predictions that only hit already-matched objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicatePolicy {
    /// Count as false positive (COCO / mAP convention).
    Fp,
    /// Drop from scoring (LUNA16 / PN9 convention).
    Ignore,
}

/// The evaluation protocols of the public lung-nodule and aneurysm
/// benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OfficialProtocol {
    Luna16,
    Pn9,
    Ctaa,
}

impl OfficialProtocol {
    pub fn criterion(self) -> MatchCriterion {
        match self {
            OfficialProtocol::Luna16 => MatchCriterion::CenterHalfDiameter,
            OfficialProtocol::Pn9 => MatchCriterion::CenterInRadius(RadiusSource::GtDiameter),
            OfficialProtocol::Ctaa => MatchCriterion::IouThreshold(0.3),
        }
    }

    pub fn duplicate_policy(self) -> DuplicatePolicy {
        match self {
            OfficialProtocol::Luna16 | OfficialProtocol::Pn9 => DuplicatePolicy::Ignore,
            OfficialProtocol::Ctaa => DuplicatePolicy::Fp,
        }
    }
}

impl std::str::FromStr for OfficialProtocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "luna16" => Ok(OfficialProtocol::Luna16),
            "pn9" => Ok(OfficialProtocol::Pn9),
            "ctaa" | "cta-a" => Ok(OfficialProtocol::Ctaa),
            other => Err(Error::Config(format!("unknown official protocol '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "gt")]
pub enum PredictionStatus {
    TruePositive(usize),
    FalsePositive,
    Ignored,
}

/// Outcome for one prediction, in the caller's input order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub score: f64,
    pub status: PredictionStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub predictions: Vec<PredictionOutcome>,
    pub gt_hit: Vec<bool>,
    /// Ground-truth count excluding ignored objects.
    pub n_gt: usize,
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_ignored: usize,
}

/// Indices of `scores` by descending score, input order on ties.
pub fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Matches predictions to ground truth for a single image and class.
pub fn match_image(
    preds: &[Detection],
    gts: &[GroundTruthObject],
    criterion: MatchCriterion,
    duplicate_policy: DuplicatePolicy,
) -> Result<MatchResult> {
    criterion.validate()?;
    check_keys(preds, gts)?;
    Ok(match_unchecked(preds, gts, criterion, duplicate_policy))
}

fn check_keys(preds: &[Detection], gts: &[GroundTruthObject]) -> Result<()> {
    let mut keys = preds
        .iter()
        .map(|p| (&p.image_id, p.class_id))
        .chain(gts.iter().map(|g| (&g.image_id, g.class_id)));
    if let Some((image_id, class_id)) = keys.next() {
        if let Some((found_image, found_class)) = keys.find(|&(i, c)| i != image_id || c != class_id) {
            return Err(Error::MixedKeys {
                image_id: image_id.clone(),
                class_id,
                found_image: found_image.clone(),
                found_class,
            });
        }
    }
    Ok(())
}

pub(crate) fn match_unchecked(
    preds: &[Detection],
    gts: &[GroundTruthObject],
    criterion: MatchCriterion,
    duplicate_policy: DuplicatePolicy,
) -> MatchResult {
    let mut result = MatchResult {
        predictions: preds
            .iter()
            .map(|p| PredictionOutcome {
                score: p.score,
                status: PredictionStatus::FalsePositive,
            })
            .collect(),
        gt_hit: vec![false; gts.len()],
        n_gt: gts.iter().filter(|g| !g.ignore).count(),
        ..MatchResult::default()
    };

    for pi in score_order(preds.iter().map(|p| p.score)) {
        let pred = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        let mut hits_ignored = false;
        let mut hits_matched = false;
        for (gi, gt) in gts.iter().enumerate() {
            let Some(aff) = criterion.affinity(pred, gt) else {
                continue;
            };
            if gt.ignore {
                hits_ignored = true;
            } else if result.gt_hit[gi] {
                hits_matched = true;
            } else if best.map_or(true, |(_, b)| aff > b) {
                best = Some((gi, aff));
            }
        }
        let status = match best {
            Some((gi, _)) => {
                result.gt_hit[gi] = true;
                PredictionStatus::TruePositive(gi)
            }
            None if hits_ignored => PredictionStatus::Ignored,
            None if hits_matched && duplicate_policy == DuplicatePolicy::Ignore => PredictionStatus::Ignored,
            None => PredictionStatus::FalsePositive,
        };
        match status {
            PredictionStatus::TruePositive(_) => result.n_tp += 1,
            PredictionStatus::FalsePositive => result.n_fp += 1,
            PredictionStatus::Ignored => result.n_ignored += 1,
        }
        result.predictions[pi].status = status;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt_cube(center: [f64; 3], edge: f64) -> GroundTruthObject {
        GroundTruthObject::from_box("img", 0, BoundingBox3D::cube(center, edge).unwrap())
    }

    fn det(center: [f64; 3], edge: f64, score: f64) -> Detection {
        Detection::new("img", 0, BoundingBox3D::cube(center, edge).unwrap(), score).unwrap()
    }

    #[test]
    fn single_overlapping_prediction_is_tp() {
        // Same size, shifted by a third of the edge along x: IoU = 2/4 = 0.5.
        let gt = gt_cube([0.0; 3], 6.0);
        let pred = det([2.0, 0.0, 0.0], 6.0, 0.7);
        assert_eq!(box_iou(&gt.bbox, &pred.bbox), 0.5);
        let r = match_image(&[pred], &[gt], MatchCriterion::IouThreshold(0.1), DuplicatePolicy::Fp).unwrap();
        assert_eq!((r.n_tp, r.n_fp, r.n_gt), (1, 0, 1));
        assert_eq!(r.predictions[0].status, PredictionStatus::TruePositive(0));
    }

    #[test]
    fn half_diameter_boundary() {
        let gt = gt_cube([0.0; 3], 2.0).with_diameter(10.0).unwrap();
        let near = det([0.0, 0.0, 4.0], 1.0, 0.5);
        let far = det([0.0, 0.0, 6.0], 1.0, 0.5);
        let r = match_image(&[near], &[gt.clone()], MatchCriterion::CenterHalfDiameter, DuplicatePolicy::Ignore).unwrap();
        assert_eq!(r.n_tp, 1);
        let r = match_image(&[far], &[gt], MatchCriterion::CenterHalfDiameter, DuplicatePolicy::Ignore).unwrap();
        assert_eq!((r.n_tp, r.n_fp), (0, 1));
    }

    #[test]
    fn explicit_radius() {
        let gt = gt_cube([0.0; 3], 2.0);
        let pred = det([0.0, 3.0, 0.0], 1.0, 0.5);
        let crit = |r| MatchCriterion::CenterInRadius(RadiusSource::Explicit(r));
        assert_eq!(match_image(&[pred.clone()], &[gt.clone()], crit(3.0), DuplicatePolicy::Fp).unwrap().n_tp, 1);
        assert_eq!(match_image(&[pred], &[gt], crit(2.9), DuplicatePolicy::Fp).unwrap().n_tp, 0);
    }

    #[test]
    fn duplicate_policies_differ() {
        let gt = gt_cube([0.0; 3], 4.0);
        let preds = [det([0.0; 3], 4.0, 0.8), det([0.5, 0.0, 0.0], 4.0, 0.9)];
        let crit = MatchCriterion::IouThreshold(0.1);
        let fp = match_image(&preds, &[gt.clone()], crit, DuplicatePolicy::Fp).unwrap();
        assert_eq!((fp.n_tp, fp.n_fp, fp.n_ignored), (1, 1, 0));
        assert_eq!(fp.predictions[1].status, PredictionStatus::TruePositive(0));
        assert_eq!(fp.predictions[0].status, PredictionStatus::FalsePositive);
        let ign = match_image(&preds, &[gt], crit, DuplicatePolicy::Ignore).unwrap();
        assert_eq!((ign.n_tp, ign.n_fp, ign.n_ignored), (1, 0, 1));
    }

    #[test]
    fn ignored_ground_truth_absorbs_predictions() {
        let gts = [gt_cube([0.0; 3], 4.0).ignored(), gt_cube([20.0; 3], 4.0)];
        let preds = [det([0.0; 3], 4.0, 0.9), det([0.2; 3], 4.0, 0.8), det([50.0; 3], 4.0, 0.1)];
        let r = match_image(&preds, &gts, MatchCriterion::IouThreshold(0.1), DuplicatePolicy::Fp).unwrap();
        assert_eq!(r.n_gt, 1);
        assert_eq!((r.n_tp, r.n_fp, r.n_ignored), (0, 1, 2));
    }

    #[test]
    fn mixed_keys_rejected() {
        let mut other = det([0.0; 3], 1.0, 0.5);
        other.image_id = "other".into();
        let err = match_image(&[det([0.0; 3], 1.0, 0.5), other], &[], MatchCriterion::IouThreshold(0.1), DuplicatePolicy::Fp)
            .unwrap_err();
        assert!(matches!(err, Error::MixedKeys { .. }));
    }

    #[test]
    fn higher_iou_wins_among_unmatched() {
        let gts = [gt_cube([0.0; 3], 4.0), gt_cube([1.0, 0.0, 0.0], 4.0)];
        let r = match_image(&[det([0.9, 0.0, 0.0], 4.0, 0.5)], &gts, MatchCriterion::IouThreshold(0.1), DuplicatePolicy::Fp).unwrap();
        assert_eq!(r.predictions[0].status, PredictionStatus::TruePositive(1));
    }

    #[test]
    fn luna16_preset() {
        assert_eq!(OfficialProtocol::Luna16.criterion(), MatchCriterion::CenterHalfDiameter);
        assert_eq!(OfficialProtocol::Luna16.duplicate_policy(), DuplicatePolicy::Ignore);
        assert_eq!(OfficialProtocol::Ctaa.criterion(), MatchCriterion::IouThreshold(0.3));
        assert_eq!("PN9".parse::<OfficialProtocol>().unwrap(), OfficialProtocol::Pn9);
    }

    /// Enumerates every valid one-to-one assignment of predictions to
    /// non-ignored ground truth and returns the one that is lexicographically
    /// best when predictions are read in greedy order, each preferring any
    /// match over none and a better affinity over a worse one (lower index on
    /// equal affinity).
    fn enumeration_oracle(
        preds: &[Detection],
        gts: &[GroundTruthObject],
        crit: MatchCriterion,
        policy: DuplicatePolicy,
    ) -> Vec<PredictionStatus> {
        let order = score_order(preds.iter().map(|p| p.score));
        let aff: Vec<Vec<Option<f64>>> = preds.iter().map(|p| gts.iter().map(|g| crit.affinity(p, g)).collect()).collect();
        let mut best: Option<Vec<Option<usize>>> = None;
        let mut current = vec![None; preds.len()];

        fn better(a: &[Option<usize>], b: &[Option<usize>], order: &[usize], aff: &[Vec<Option<f64>>]) -> bool {
            for &p in order {
                match (a[p], b[p]) {
                    (Some(x), Some(y)) if x != y => {
                        let (ax, ay) = (aff[p][x].unwrap(), aff[p][y].unwrap());
                        if ax != ay {
                            return ax > ay;
                        }
                        return x < y;
                    }
                    (Some(_), None) => return true,
                    (None, Some(_)) => return false,
                    _ => {}
                }
            }
            false
        }

        fn recurse(
            k: usize,
            used: &mut Vec<bool>,
            current: &mut Vec<Option<usize>>,
            best: &mut Option<Vec<Option<usize>>>,
            gts: &[GroundTruthObject],
            order: &[usize],
            aff: &[Vec<Option<f64>>],
        ) {
            if k == current.len() {
                if best.as_ref().map_or(true, |b| better(current, b, order, aff)) {
                    *best = Some(current.clone());
                }
                return;
            }
            current[k] = None;
            recurse(k + 1, used, current, best, gts, order, aff);
            for g in 0..gts.len() {
                if !used[g] && !gts[g].ignore && aff[k][g].is_some() {
                    used[g] = true;
                    current[k] = Some(g);
                    recurse(k + 1, used, current, best, gts, order, aff);
                    used[g] = false;
                    current[k] = None;
                }
            }
        }

        let mut used = vec![false; gts.len()];
        recurse(0, &mut used, &mut current, &mut best, gts, &order, &aff);
        let best = best.unwrap();
        (0..preds.len())
            .map(|p| match best[p] {
                Some(g) => PredictionStatus::TruePositive(g),
                None => {
                    let hits = |ignored: bool| (0..gts.len()).any(|g| gts[g].ignore == ignored && aff[p][g].is_some());
                    if hits(true) {
                        PredictionStatus::Ignored
                    } else if hits(false) && policy == DuplicatePolicy::Ignore {
                        PredictionStatus::Ignored
                    } else {
                        PredictionStatus::FalsePositive
                    }
                }
            })
            .collect()
    }

    fn small_instance() -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruthObject>)> {
        let coord = || proptest::array::uniform3(0i32..6);
        let pred = (coord(), 2i32..5, 0u32..20).prop_map(|(c, e, s)| det(c.map(f64::from), e as f64, s as f64 / 20.0));
        let gt = (coord(), 2i32..5, proptest::bool::weighted(0.2)).prop_map(|(c, e, ig)| {
            let g = gt_cube(c.map(f64::from), e as f64);
            if ig {
                g.ignored()
            } else {
                g
            }
        });
        (proptest::collection::vec(pred, 0..=5), proptest::collection::vec(gt, 0..=3))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn greedy_matches_enumeration((preds, gts) in small_instance(), c in 0usize..3, pol in proptest::bool::ANY) {
            let crit = [MatchCriterion::IouThreshold(0.1), MatchCriterion::CenterHalfDiameter, MatchCriterion::IouThreshold(0.4)][c];
            let policy = if pol { DuplicatePolicy::Fp } else { DuplicatePolicy::Ignore };
            let r = match_image(&preds, &gts, crit, policy).unwrap();
            let got: Vec<_> = r.predictions.iter().map(|o| o.status).collect();
            prop_assert_eq!(got, enumeration_oracle(&preds, &gts, crit, policy));
            prop_assert!(r.n_tp <= r.n_gt);
            prop_assert_eq!(r.n_tp + r.n_fp + r.n_ignored, preds.len());
        }

        #[test]
        fn extra_false_positive_never_reduces_tp((mut preds, gts) in small_instance(), s in 0.0f64..1.0) {
            let crit = MatchCriterion::IouThreshold(0.1);
            let before = match_image(&preds, &gts, crit, DuplicatePolicy::Fp).unwrap().n_tp;
            preds.push(det([500.0; 3], 1.0, s));
            let after = match_image(&preds, &gts, crit, DuplicatePolicy::Fp).unwrap().n_tp;
            prop_assert!(after >= before);
        }

        #[test]
        fn monotone_score_transform_keeps_assignment((preds, gts) in small_instance()) {
            let crit = MatchCriterion::IouThreshold(0.1);
            let a = match_image(&preds, &gts, crit, DuplicatePolicy::Fp).unwrap();
            let squashed: Vec<Detection> = preds.iter().map(|p| Detection { score: p.score.powi(3) * 0.5, ..p.clone() }).collect();
            let b = match_image(&squashed, &gts, crit, DuplicatePolicy::Fp).unwrap();
            let sa: Vec<_> = a.predictions.iter().map(|o| o.status).collect();
            let sb: Vec<_> = b.predictions.iter().map(|o| o.status).collect();
            prop_assert_eq!(sa, sb);
        }

        #[test]
        fn ignore_policy_counts_only_unqualified_predictions((preds, gts) in small_instance()) {
            let r = match_image(&preds, &gts, MatchCriterion::IouThreshold(0.1), DuplicatePolicy::Ignore).unwrap();
            for (p, o) in preds.iter().zip(&r.predictions) {
                let qualifies = gts.iter().any(|g| box_iou(&p.bbox, &g.bbox) >= 0.1);
                prop_assert_eq!(o.status == PredictionStatus::FalsePositive, !qualifies);
            }
        }
    }
}

//! Dataset manifests and prediction files.
//!
//! A manifest lists the images of a dataset with their split and ground-truth
//! source, either explicit boxes or a label mask that is converted to
//! instances on first access. Relative paths resolve against the manifest's
//! directory.
//!
//! Manifest (`schema_version` 1):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dataset_id": "D06",
//!   "classes": [{"id": 0, "name": "nodule"}],
//!   "axis_order": ["x", "y", "z"],
//!   "images": [
//!     {"image_id": "a", "split": "test", "image": "img/a.nii.gz",
//!      "ground_truth": {"boxes": [{"class_id": 0, "min": [0,0,0], "max": [4,4,4], "diameter": 4.0}]}},
//!     {"image_id": "b", "split": "test",
//!      "ground_truth": {"mask": "lbl/b.nii.gz", "label_classes": {"1": 0}, "connectivity": 26}}
//!   ]
//! }
//! ```
//!
//! Predictions are either a JSON document
//! `{"schema_version": 1, "method_id": "...", "detections": [...]}` or, for
//! `.jsonl` / `.ndjson` files, one detection record per line with an optional
//! header line carrying `method_id`. A record is
//! `{"image_id", "class_id", "min", "max", "score"}`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::GroundTruthSet;
use crate::geometry::{mask_to_objects, BoundingBox3D, Connectivity, GroundTruthObject};
use crate::matching::Detection;
use crate::nifti::read_volume;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisLabel {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxAnnotation {
    pub class_id: u32,
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ignore: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruthSource {
    Boxes {
        boxes: Vec<BoxAnnotation>,
    },
    Mask {
        mask: PathBuf,
        /// Mask label value (as a string key) to class id.
        label_classes: BTreeMap<String, u32>,
        #[serde(default)]
        connectivity: Connectivity,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub image_id: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    /// Voxel spacing in the manifest's `axis_order`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<[f64; 3]>,
    pub ground_truth: GroundTruthSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDocument {
    schema_version: u32,
    dataset_id: String,
    classes: Vec<ClassEntry>,
    axis_order: [AxisLabel; 3],
    images: Vec<ImageEntry>,
}

#[derive(Debug)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub classes: Vec<ClassEntry>,
    pub axis_order: [AxisLabel; 3],
    pub images: Vec<ImageEntry>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
    cache: Vec<OnceLock<Vec<GroundTruthObject>>>,
}

impl Clone for DatasetManifest {
    fn clone(&self) -> Self {
        DatasetManifest {
            dataset_id: self.dataset_id.clone(),
            classes: self.classes.clone(),
            axis_order: self.axis_order,
            images: self.images.clone(),
            base_dir: self.base_dir.clone(),
            cache: self.cache.clone(),
        }
    }
}

fn schema_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        schema_error(path, format!("{field}: {inner}"))
    })
}

impl DatasetManifest {
    /// Builds a manifest in memory; `base_dir` anchors relative paths.
    pub fn new(
        dataset_id: impl Into<String>,
        classes: Vec<ClassEntry>,
        axis_order: [AxisLabel; 3],
        images: Vec<ImageEntry>,
        base_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        let manifest = DatasetManifest {
            dataset_id: dataset_id.into(),
            classes,
            axis_order,
            cache: (0..images.len()).map(|_| OnceLock::new()).collect(),
            images,
            base_dir: base_dir.into(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<()> {
        let manifest_path = self.base_dir.clone();
        let axes: HashSet<AxisLabel> = self.axis_order.iter().copied().collect();
        if axes.len() != 3 {
            return Err(schema_error(&manifest_path, "axis_order must name x, y and z once each"));
        }
        let mut class_ids = HashSet::new();
        for (i, c) in self.classes.iter().enumerate() {
            if !class_ids.insert(c.id) {
                return Err(schema_error(&manifest_path, format!("classes[{i}].id: duplicate class id {}", c.id)));
            }
        }
        let mut seen = HashSet::new();
        for (i, img) in self.images.iter().enumerate() {
            if !seen.insert(img.image_id.as_str()) {
                return Err(Error::DuplicateImage(img.image_id.clone()));
            }
            if let Some(p) = &img.image {
                self.check_exists(p)?;
            }
            if let Some(s) = img.spacing {
                if s.iter().any(|&v| !(v > 0.0)) {
                    return Err(schema_error(&manifest_path, format!("images[{i}].spacing: must be positive")));
                }
            }
            match &img.ground_truth {
                GroundTruthSource::Boxes { boxes } => {
                    for (j, b) in boxes.iter().enumerate() {
                        let at = format!("images[{i}].ground_truth.boxes[{j}]");
                        if !class_ids.contains(&b.class_id) {
                            return Err(schema_error(&manifest_path, format!("{at}.class_id: unknown class {}", b.class_id)));
                        }
                        BoundingBox3D::new(b.min, b.max).map_err(|e| schema_error(&manifest_path, format!("{at}: {e}")))?;
                        if let Some(d) = b.diameter {
                            if !(d > 0.0) {
                                return Err(schema_error(&manifest_path, format!("{at}.diameter: must be positive")));
                            }
                        }
                    }
                }
                GroundTruthSource::Mask { mask, label_classes, .. } => {
                    self.check_exists(mask)?;
                    for (label, class) in label_classes {
                        let at = format!("images[{i}].ground_truth.label_classes.{label}");
                        label.parse::<i64>().map_err(|_| schema_error(&manifest_path, format!("{at}: key must be an integer label")))?;
                        if !class_ids.contains(class) {
                            return Err(schema_error(&manifest_path, format!("{at}: unknown class {class}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_exists(&self, p: &Path) -> Result<()> {
        let full = self.resolve(p);
        if full.exists() {
            Ok(())
        } else {
            Err(Error::DanglingPath(full))
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.image_id.clone()).collect()
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.id).collect()
    }

    /// Image spacing reordered to x, y, z.
    pub fn spacing_xyz(&self, image: &ImageEntry) -> Option<[f64; 3]> {
        image.spacing.map(|s| {
            let mut out = [0.0; 3];
            for (value, axis) in s.iter().zip(self.axis_order) {
                out[axis as usize] = *value;
            }
            out
        })
    }

    fn materialize(&self, index: usize) -> Result<Vec<GroundTruthObject>> {
        let entry = &self.images[index];
        match &entry.ground_truth {
            GroundTruthSource::Boxes { boxes } => boxes
                .iter()
                .map(|b| {
                    let bbox = BoundingBox3D::new(b.min, b.max)?;
                    Ok(GroundTruthObject {
                        image_id: entry.image_id.clone(),
                        class_id: b.class_id,
                        center: b.center.unwrap_or_else(|| bbox.center()),
                        bbox,
                        diameter: b.diameter,
                        ignore: b.ignore,
                    })
                })
                .collect(),
            GroundTruthSource::Mask {
                mask,
                label_classes,
                connectivity,
            } => {
                let volume = read_volume(self.resolve(mask))?;
                let pairs: Vec<(i64, u32)> = label_classes
                    .iter()
                    .map(|(k, &c)| (k.parse::<i64>().expect("validated at load"), c))
                    .collect();
                Ok(mask_to_objects(&volume, &entry.image_id, &pairs, *connectivity))
            }
        }
    }

    /// Ground truth of one image; masks are converted once and cached.
    pub fn ground_truth(&self, index: usize) -> Result<&[GroundTruthObject]> {
        if let Some(v) = self.cache[index].get() {
            return Ok(v);
        }
        let objects = self.materialize(index)?;
        let _ = self.cache[index].set(objects);
        Ok(self.cache[index].get().expect("just set"))
    }

    /// Indices of images in `split`, or all images.
    pub fn select(&self, split: Option<Split>) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&i| split.map_or(true, |s| self.images[i].split == s))
            .collect()
    }

    /// Ground truth for the chosen split as an evaluation universe.
    pub fn ground_truth_set(&self, split: Option<Split>) -> Result<GroundTruthSet> {
        let indices = self.select(split);
        indices.par_iter().try_for_each(|&i| self.ground_truth(i).map(|_| ()))?;
        let mut objects = Vec::new();
        for &i in &indices {
            objects.extend_from_slice(self.ground_truth(i)?);
        }
        let ids = indices.iter().map(|&i| self.images[i].image_id.clone()).collect();
        GroundTruthSet::new(ids, objects, self.class_ids())
    }

    /// Number of ground-truth objects per split.
    pub fn object_counts(&self) -> Result<BTreeMap<Split, usize>> {
        let mut out = BTreeMap::new();
        for i in 0..self.images.len() {
            *out.entry(self.images[i].split).or_insert(0) += self.ground_truth(i)?.len();
        }
        Ok(out)
    }

    /// Copy with every ground-truth source turned into explicit boxes and
    /// image paths made absolute.
    pub fn to_box_manifest(&self) -> Result<DatasetManifest> {
        let mut images = Vec::with_capacity(self.images.len());
        for (i, entry) in self.images.iter().enumerate() {
            let boxes = self
                .ground_truth(i)?
                .iter()
                .map(|o| BoxAnnotation {
                    class_id: o.class_id,
                    min: o.bbox.min(),
                    max: o.bbox.max(),
                    diameter: o.diameter,
                    center: Some(o.center),
                    ignore: o.ignore,
                })
                .collect();
            images.push(ImageEntry {
                image: entry.image.as_ref().map(|p| self.resolve(p)),
                ground_truth: GroundTruthSource::Boxes { boxes },
                ..entry.clone()
            });
        }
        DatasetManifest::new(self.dataset_id.clone(), self.classes.clone(), self.axis_order, images, self.base_dir.clone())
    }

    pub fn to_json(&self) -> String {
        let doc = ManifestDocument {
            schema_version: SCHEMA_VERSION,
            dataset_id: self.dataset_id.clone(),
            classes: self.classes.clone(),
            axis_order: self.axis_order,
            images: self.images.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Parses and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ManifestDocument = parse_json(path, &text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(schema_error(path, format!("schema_version: unsupported version {}", doc.schema_version)));
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::new(doc.dataset_id, doc.classes, doc.axis_order, doc.images, base_dir).map_err(|e| match e {
        Error::Schema { message, .. } => schema_error(path, message),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: u32,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub score: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            image_id: d.image_id.clone(),
            class_id: d.class_id,
            min: d.bbox.min(),
            max: d.bbox.max(),
            score: d.score,
        }
    }
}

impl DetectionRecord {
    fn to_detection(&self) -> Result<Detection> {
        Detection::new(self.image_id.clone(), self.class_id, BoundingBox3D::new(self.min, self.max)?, self.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionDocument {
    schema_version: u32,
    method_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    images: Option<Vec<String>>,
    detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionHeader {
    #[serde(default)]
    schema_version: Option<u32>,
    method_id: String,
    #[serde(default)]
    images: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub method_id: String,
    /// Images the method processed, when the file declares them.
    pub images: Option<Vec<String>>,
    pub detections: Vec<Detection>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown image ids are an error.
    #[default]
    Fail,
    /// Unknown image ids are dropped with a warning.
    Warn,
}

impl PredictionFile {
    pub fn to_json(&self) -> String {
        let doc = PredictionDocument {
            schema_version: SCHEMA_VERSION,
            method_id: self.method_id.clone(),
            images: self.images.clone(),
            detections: self.detections.iter().map(DetectionRecord::from).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("predictions serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn is_line_delimited(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "ndjson"))
}

/// Loads a prediction file. With a manifest, image ids are checked against it
/// according to `strictness`.
pub fn load_predictions(path: impl AsRef<Path>, manifest: Option<&DatasetManifest>, strictness: Strictness) -> Result<PredictionFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (method_id, images, records) = if is_line_delimited(path) {
        let mut method_id = None;
        let mut images = None;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| schema_error(path, format!("line {}: {e}", n + 1)))?;
            if value.get("image_id").is_some() {
                let rec: DetectionRecord =
                    serde_json::from_value(value).map_err(|e| schema_error(path, format!("line {}: {e}", n + 1)))?;
                records.push((format!("line {}", n + 1), rec));
            } else {
                let header: PredictionHeader =
                    serde_json::from_value(value).map_err(|e| schema_error(path, format!("line {}: {e}", n + 1)))?;
                if let Some(v) = header.schema_version.filter(|&v| v != SCHEMA_VERSION) {
                    return Err(schema_error(path, format!("line {}: unsupported schema_version {v}", n + 1)));
                }
                method_id = Some(header.method_id);
                images = header.images;
            }
        }
        let method_id = method_id.unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "predictions".into())
        });
        (method_id, images, records)
    } else {
        let doc: PredictionDocument = parse_json(path, &text)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(schema_error(path, format!("schema_version: unsupported version {}", doc.schema_version)));
        }
        let records = doc
            .detections
            .into_iter()
            .enumerate()
            .map(|(i, r)| (format!("detections[{i}]"), r))
            .collect();
        (doc.method_id, doc.images, records)
    };

    let known: Option<HashSet<&str>> = manifest.map(|m| m.images.iter().map(|i| i.image_id.as_str()).collect());
    let mut detections = Vec::with_capacity(records.len());
    let mut dropped: HashMap<String, usize> = HashMap::new();
    for (at, rec) in records {
        let det = rec.to_detection().map_err(|e| schema_error(path, format!("{at}: {e}")))?;
        if let Some(known) = &known {
            if !known.contains(det.image_id.as_str()) {
                match strictness {
                    Strictness::Fail => {
                        return Err(Error::UnknownImage {
                            image_id: det.image_id,
                            source_name: path.display().to_string(),
                        })
                    }
                    Strictness::Warn => {
                        *dropped.entry(det.image_id).or_insert(0) += 1;
                        continue;
                    }
                }
            }
        }
        detections.push(det);
    }
    let mut warnings: Vec<String> = dropped
        .into_iter()
        .map(|(id, n)| format!("dropped {n} detection(s) for unknown image '{id}'"))
        .collect();
    warnings.sort();
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(PredictionFile {
        method_id,
        images,
        detections,
        warnings,
    })
}

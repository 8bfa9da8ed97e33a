//! Synthetic benchmark data: label volumes with planted spherical lesions,
//! plus perfect and deliberately degraded prediction sets.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{mask_to_objects, BoundingBox3D, Connectivity, GroundTruthObject};
use crate::manifest::{AxisLabel, ClassEntry, DatasetManifest, GroundTruthSource, ImageEntry, PredictionFile, Split};
use crate::matching::Detection;
use crate::nifti::write_volume;
use crate::volume::{Volume, VoxelData};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_volumes: usize,
    pub n_lesions: usize,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub radius_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_volumes: 20,
            n_lesions: 50,
            shape: [48, 48, 48],
            spacing: [1.0, 1.0, 1.0],
            radius_range: (1.5, 4.0),
            seed: 0,
        }
    }
}

/// Voxels below this index on every axis stay empty, leaving room for
/// injected false positives.
pub const RESERVED_CORNER: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Lesion {
    pub image_id: String,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub masks: Vec<(String, Volume)>,
    pub lesions: Vec<Lesion>,
}

pub fn image_id(i: usize) -> String {
    format!("case_{i:04}")
}

/// Plants `n_lesions` non-touching spheres (label 1) across the volumes,
/// cycling through volumes so each gets a share.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    if config.n_volumes == 0 {
        return Err(Error::Config("synthetic dataset needs at least one volume".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut per_volume: Vec<Vec<([f64; 3], f64)>> = vec![Vec::new(); config.n_volumes];
    let (rmin, rmax) = config.radius_range;
    for k in 0..config.n_lesions {
        let v = k % config.n_volumes;
        let mut placed = false;
        for _attempt in 0..10_000 {
            let r = rng.gen_range(rmin..=rmax);
            let margin = r.ceil() + 1.0;
            let c: [f64; 3] = std::array::from_fn(|a| {
                let lo = (RESERVED_CORNER as f64 + margin).max(margin);
                let hi = config.shape[a] as f64 - 1.0 - margin;
                rng.gen_range(lo..=hi.max(lo)).round()
            });
            // Two voxels of clearance keeps 26-connected components apart.
            let clear = per_volume[v]
                .iter()
                .all(|(o, ro)| crate::geometry::center_distance(*o, c) > r + ro + 2.0 * 3f64.sqrt());
            if clear {
                per_volume[v].push((c, r));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!("could not place lesion {k}; volumes too small")));
        }
    }

    let [nx, ny, nz] = config.shape;
    let mut masks = Vec::with_capacity(config.n_volumes);
    let mut lesions = Vec::with_capacity(config.n_lesions);
    for (v, spheres) in per_volume.iter().enumerate() {
        let id = image_id(v);
        let mut data = vec![0u8; nx * ny * nz];
        for &(c, r) in spheres {
            let lo = c.map(|x| (x - r).floor().max(0.0) as usize);
            for z in lo[2]..=((c[2] + r).ceil() as usize).min(nz - 1) {
                for y in lo[1]..=((c[1] + r).ceil() as usize).min(ny - 1) {
                    for x in lo[0]..=((c[0] + r).ceil() as usize).min(nx - 1) {
                        let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
                        if d2 <= r * r {
                            data[x + nx * (y + ny * z)] = 1;
                        }
                    }
                }
            }
            lesions.push(Lesion {
                image_id: id.clone(),
                center: c,
                radius: r,
            });
        }
        masks.push((id, Volume::new(config.shape, config.spacing, [0.0; 3], VoxelData::U8(data))?));
    }
    Ok(SyntheticDataset { masks, lesions })
}

impl SyntheticDataset {
    /// Objects extracted from the masks (class 0, 26-connectivity).
    pub fn objects(&self) -> Vec<GroundTruthObject> {
        self.masks
            .iter()
            .flat_map(|(id, m)| mask_to_objects(m, id, &[(1, 0)], Connectivity::TwentySix))
            .collect()
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.masks.iter().map(|(id, _)| id.clone()).collect()
    }

    /// Writes `masks/<id>.nii.gz` and `manifest.json` (all images in the test
    /// split) under `dir`; returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mask_dir = dir.join("masks");
        std::fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
        let mut images = Vec::with_capacity(self.masks.len());
        for (id, mask) in &self.masks {
            let rel = PathBuf::from("masks").join(format!("{id}.nii.gz"));
            write_volume(mask, dir.join(&rel))?;
            images.push(ImageEntry {
                image_id: id.clone(),
                split: Split::Test,
                image: None,
                spacing: Some(mask.spacing()),
                ground_truth: GroundTruthSource::Mask {
                    mask: rel,
                    label_classes: [("1".to_string(), 0)].into_iter().collect(),
                    connectivity: Connectivity::TwentySix,
                },
            });
        }
        let classes = vec![ClassEntry {
            id: 0,
            name: "lesion".into(),
        }];
        let manifest = DatasetManifest::new("synthetic", classes, [AxisLabel::X, AxisLabel::Y, AxisLabel::Z], images, dir)?;
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }
}

/// One detection per object with the object's own box and score 1.
pub fn perfect_predictions(objects: &[GroundTruthObject]) -> Vec<Detection> {
    objects
        .iter()
        .map(|o| Detection::new(o.image_id.clone(), o.class_id, o.bbox, 1.0).expect("score in range"))
        .collect()
}

/// Drops the last `drop` objects, gives the `k`-th kept object score
/// `(990 - 20k) / 1000` and injects `inject` false positives in the reserved
/// corner with scores `(985 - 44j) / 1000`, spread over the images
/// round-robin. Kept and injected scores never tie.
pub fn degraded_predictions(objects: &[GroundTruthObject], image_ids: &[String], drop: usize, inject: usize) -> Result<Vec<Detection>> {
    let keep = objects.len().saturating_sub(drop);
    if keep > 49 || inject > 22 {
        return Err(Error::Config("degraded score schedule supports at most 49 kept objects and 22 injections".into()));
    }
    let mut out = Vec::with_capacity(keep + inject);
    for (k, o) in objects[..keep].iter().enumerate() {
        out.push(Detection::new(o.image_id.clone(), o.class_id, o.bbox, (990 - 20 * k as i64) as f64 / 1000.0)?);
    }
    for j in 0..inject {
        let id = &image_ids[j % image_ids.len()];
        let bbox = BoundingBox3D::new([0.0; 3], [3.0; 3])?;
        out.push(Detection::new(id.clone(), 0, bbox, (985 - 44 * j as i64) as f64 / 1000.0)?);
    }
    Ok(out)
}

pub fn prediction_file(method_id: &str, detections: Vec<Detection>) -> PredictionFile {
    PredictionFile {
        method_id: method_id.to_string(),
        images: None,
        detections,
        warnings: Vec::new(),
    }
}

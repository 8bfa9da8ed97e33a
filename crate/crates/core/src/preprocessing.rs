//! Isotropic resampling and intensity normalization.
//!
//! Output voxel centres are mapped into the input grid with
//! `(i_out + 0.5) * s_out = (i_in + 0.5) * s_in` per axis and clamped to the
//! edge. Images use trilinear interpolation, label maps nearest neighbour.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{ElementKind, Volume, VoxelData};

pub const DEFAULT_TARGET_SPACING: [f64; 3] = [1.0, 1.0, 1.0];
pub const CT_CLIP_PERCENTILES: (f64, f64) = (0.5, 99.5);
pub const ZSCORE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Preprocessing parameters. `Default` is the CT setup: 1 mm isotropic,
/// trilinear, clipping to the 0.5/99.5 percentiles, z-score.
///
/// MRI volumes are not clipped; use [`PreprocessConfig::mri`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_spacing: [f64; 3],
    pub image_interpolation: Interpolation,
    pub clip_percentiles: Option<(f64, f64)>,
    pub normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig::ct()
    }
}

impl PreprocessConfig {
    pub fn ct() -> Self {
        PreprocessConfig {
            target_spacing: DEFAULT_TARGET_SPACING,
            image_interpolation: Interpolation::Trilinear,
            clip_percentiles: Some(CT_CLIP_PERCENTILES),
            normalize: true,
        }
    }

    pub fn mri() -> Self {
        PreprocessConfig {
            clip_percentiles: None,
            ..PreprocessConfig::ct()
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_spacing(self.target_spacing)?;
        if let Some((lo, hi)) = self.clip_percentiles {
            validate_percentiles(lo, hi)?;
        }
        Ok(())
    }
}

fn validate_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("target spacing {spacing:?} must be strictly positive")));
    }
    Ok(())
}

fn validate_percentiles(lo: f64, hi: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
        return Err(Error::Config(format!(
            "clip percentiles ({lo}, {hi}) must satisfy 0 <= lo < hi <= 100"
        )));
    }
    Ok(())
}

/// Output extent along one axis, rounding half away from zero, at least 1.
pub fn resampled_extent(n_in: usize, spacing_in: f64, spacing_out: f64) -> usize {
    ((n_in as f64 * spacing_in / spacing_out).round() as usize).max(1)
}

/// Per-axis sampling table: for each output index, the two bracketing input
/// indices and the weight of the upper one.
struct AxisMap {
    lower: Vec<usize>,
    upper: Vec<usize>,
    weight: Vec<f64>,
}

impl AxisMap {
    fn new(n_in: usize, n_out: usize, spacing_in: f64, spacing_out: f64) -> AxisMap {
        let ratio = spacing_out / spacing_in;
        let last = (n_in - 1) as f64;
        let mut map = AxisMap {
            lower: Vec::with_capacity(n_out),
            upper: Vec::with_capacity(n_out),
            weight: Vec::with_capacity(n_out),
        };
        for i in 0..n_out {
            let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, last);
            let lo = pos.floor();
            let lo_idx = lo as usize;
            map.lower.push(lo_idx);
            map.upper.push((lo_idx + 1).min(n_in - 1));
            map.weight.push(pos - lo);
        }
        map
    }

    fn nearest(&self, i: usize) -> usize {
        if self.weight[i] >= 0.5 {
            self.upper[i]
        } else {
            self.lower[i]
        }
    }
}

/// Resamples `volume` to `target_spacing`. Origin is preserved. Nearest
/// interpolation copies voxels, so the element kind and the label set are
/// preserved; trilinear output keeps the element kind too, rounding integer
/// kinds.
pub fn resample(volume: &Volume, target_spacing: [f64; 3], interpolation: Interpolation) -> Result<Volume> {
    validate_spacing(target_spacing)?;
    let shape_in = volume.shape();
    let spacing_in = volume.spacing();
    let shape_out: [usize; 3] = std::array::from_fn(|a| resampled_extent(shape_in[a], spacing_in[a], target_spacing[a]));
    let maps: [AxisMap; 3] =
        std::array::from_fn(|a| AxisMap::new(shape_in[a], shape_out[a], spacing_in[a], target_spacing[a]));
    let data = match interpolation {
        Interpolation::Nearest => nearest_resample(volume.data(), shape_in, shape_out, &maps),
        Interpolation::Trilinear => {
            let values = trilinear_resample(volume.data(), shape_in, shape_out, &maps);
            VoxelData::from_f64(values, volume.kind())
        }
    };
    Volume::new(shape_out, target_spacing, volume.origin(), data)
}

fn nearest_resample(data: &VoxelData, shape_in: [usize; 3], shape_out: [usize; 3], maps: &[AxisMap; 3]) -> VoxelData {
    fn gather<T: Copy + Send + Sync>(src: &[T], shape_in: [usize; 3], shape_out: [usize; 3], maps: &[AxisMap; 3]) -> Vec<T> {
        let [nx, ny, _] = shape_out;
        let mut out = Vec::with_capacity(nx * ny * shape_out[2]);
        out.par_extend((0..shape_out[2]).into_par_iter().flat_map_iter(|z| {
            let zi = maps[2].nearest(z);
            (0..ny).flat_map(move |y| {
                let yi = maps[1].nearest(y);
                (0..nx).map(move |x| src[maps[0].nearest(x) + shape_in[0] * (yi + shape_in[1] * zi)])
            })
        }));
        out
    }
    match data {
        VoxelData::U8(v) => VoxelData::U8(gather(v, shape_in, shape_out, maps)),
        VoxelData::I16(v) => VoxelData::I16(gather(v, shape_in, shape_out, maps)),
        VoxelData::F32(v) => VoxelData::F32(gather(v, shape_in, shape_out, maps)),
        VoxelData::F64(v) => VoxelData::F64(gather(v, shape_in, shape_out, maps)),
    }
}

fn trilinear_resample(data: &VoxelData, shape_in: [usize; 3], shape_out: [usize; 3], maps: &[AxisMap; 3]) -> Vec<f64> {
    let [nx, ny, nz] = shape_out;
    let (sx, sy) = (shape_in[0], shape_in[1]);
    let at = |x: usize, y: usize, z: usize| data.get(x + sx * (y + sy * z));
    let mut out = vec![0.0; nx * ny * nz];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slice)| {
        let (z0, z1, wz) = (maps[2].lower[z], maps[2].upper[z], maps[2].weight[z]);
        for y in 0..ny {
            let (y0, y1, wy) = (maps[1].lower[y], maps[1].upper[y], maps[1].weight[y]);
            for x in 0..nx {
                let (x0, x1, wx) = (maps[0].lower[x], maps[0].upper[x], maps[0].weight[x]);
                let lerp = |a: f64, b: f64, w: f64| if w == 0.0 { a } else { a + (b - a) * w };
                let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), wx);
                let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), wx);
                let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), wx);
                let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), wx);
                let c0 = lerp(c00, c10, wy);
                let c1 = lerp(c01, c11, wy);
                slice[x + nx * y] = lerp(c0, c1, wz);
            }
        }
    });
    out
}

/// Percentile with linear interpolation between zero-based order statistics
/// of an ascending-sorted slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if hi == lo || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Lower and upper clamp bounds for `clip_percentiles`.
pub fn percentile_bounds(volume: &Volume, lo: f64, hi: f64) -> Result<(f64, f64)> {
    validate_percentiles(lo, hi)?;
    if volume.is_empty() {
        return Err(Error::InvalidVolume("cannot compute percentiles of an empty volume".into()));
    }
    let mut values = volume.data().to_f64_vec();
    values.par_sort_unstable_by(f64::total_cmp);
    Ok((percentile_sorted(&values, lo), percentile_sorted(&values, hi)))
}

/// Clamps every voxel into `[P_lo, P_hi]` of this volume's own intensities.
/// Integer volumes are promoted to float-32.
pub fn clip_percentiles(volume: &Volume, lo: f64, hi: f64) -> Result<Volume> {
    let (p_lo, p_hi) = percentile_bounds(volume, lo, hi)?;
    let data = volume.data();
    let kind = volume.kind().float_promoted();
    let out = match (data, kind) {
        (VoxelData::F64(v), _) => VoxelData::F64(v.par_iter().map(|&x| x.clamp(p_lo, p_hi)).collect()),
        (VoxelData::F32(v), _) => {
            let (l, h) = (p_lo as f32, p_hi as f32);
            // Interpolated bounds may not be representable; only move values that are outside.
            VoxelData::F32(
                v.par_iter()
                    .map(|&x| {
                        if (x as f64) < p_lo {
                            l
                        } else if (x as f64) > p_hi {
                            h
                        } else {
                            x
                        }
                    })
                    .collect(),
            )
        }
        _ => {
            let values = (0..data.len()).map(|i| data.get(i).clamp(p_lo, p_hi)).collect();
            VoxelData::from_f64(values, kind)
        }
    };
    volume.with_data(out)
}

/// Mean and population standard deviation over all voxels.
pub fn mean_std(data: &VoxelData) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = (0..data.len()).map(|i| data.get(i)).sum::<f64>() / n;
    let var = (0..data.len()).map(|i| (data.get(i) - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(x - mean) / max(std, 1e-8)`. Integer volumes are promoted to float-32.
pub fn zscore_normalize(volume: &Volume) -> Result<Volume> {
    if volume.is_empty() {
        return Err(Error::InvalidVolume("cannot normalize an empty volume".into()));
    }
    let data = volume.data();
    let (mean, std) = mean_std(data);
    let denom = std.max(ZSCORE_EPSILON);
    let values = (0..data.len()).map(|i| (data.get(i) - mean) / denom).collect();
    volume.with_data(VoxelData::from_f64(values, volume.kind().float_promoted()))
}

/// Runs resample, then (images only) clipping and z-scoring as configured.
pub fn preprocess(volume: &Volume, config: &PreprocessConfig, is_label: bool) -> Result<Volume> {
    config.validate()?;
    if is_label {
        return resample(volume, config.target_spacing, Interpolation::Nearest);
    }
    let mut out = resample(volume, config.target_spacing, config.image_interpolation)?;
    if let Some((lo, hi)) = config.clip_percentiles {
        out = clip_percentiles(&out, lo, hi)?;
    }
    if config.normalize {
        out = zscore_normalize(&out)?;
    }
    Ok(out)
}

/// Element kind a preprocessed image or label map will have.
pub fn output_kind(input: ElementKind, config: &PreprocessConfig, is_label: bool) -> ElementKind {
    if is_label || (config.clip_percentiles.is_none() && !config.normalize) {
        input
    } else {
        input.float_promoted()
    }
}

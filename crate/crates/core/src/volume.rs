//! Dense 3D scalar volumes.
//!
//! Voxels are stored with x varying fastest, then y, then z, i.e. the linear
//! index of voxel `(x, y, z)` is `x + nx * (y + ny * z)`. This is the same
//! ordering as the NIfTI-1 payload, so reading and writing never permute data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage type of a volume's voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    U8,
    I16,
    F32,
    F64,
}

impl ElementKind {
    pub fn is_float(self) -> bool {
        matches!(self, ElementKind::F32 | ElementKind::F64)
    }

    pub fn byte_size(self) -> usize {
        match self {
            ElementKind::U8 => 1,
            ElementKind::I16 => 2,
            ElementKind::F32 => 4,
            ElementKind::F64 => 8,
        }
    }

    /// Float kind used when integer data has to carry fractional values.
    pub fn float_promoted(self) -> ElementKind {
        match self {
            ElementKind::F64 => ElementKind::F64,
            _ => ElementKind::F32,
        }
    }
}

/// Typed voxel buffer.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl VoxelData {
    pub fn kind(&self) -> ElementKind {
        match self {
            VoxelData::U8(_) => ElementKind::U8,
            VoxelData::I16(_) => ElementKind::I16,
            VoxelData::F32(_) => ElementKind::F32,
            VoxelData::F64(_) => ElementKind::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
            VoxelData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        match self {
            VoxelData::U8(v) => v[index] as f64,
            VoxelData::I16(v) => v[index] as f64,
            VoxelData::F32(v) => v[index] as f64,
            VoxelData::F64(v) => v[index],
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            VoxelData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::F64(v) => v.clone(),
        }
    }

    /// Converts `f64` values into the requested kind. Integer kinds round half
    /// away from zero and saturate at the type bounds.
    pub fn from_f64(values: Vec<f64>, kind: ElementKind) -> VoxelData {
        match kind {
            ElementKind::U8 => VoxelData::U8(values.iter().map(|&x| x.round() as u8).collect()),
            ElementKind::I16 => VoxelData::I16(values.iter().map(|&x| x.round() as i16).collect()),
            ElementKind::F32 => VoxelData::F32(values.iter().map(|&x| x as f32).collect()),
            ElementKind::F64 => VoxelData::F64(values),
        }
    }

    pub fn zeros(kind: ElementKind, len: usize) -> VoxelData {
        match kind {
            ElementKind::U8 => VoxelData::U8(vec![0; len]),
            ElementKind::I16 => VoxelData::I16(vec![0; len]),
            ElementKind::F32 => VoxelData::F32(vec![0.0; len]),
            ElementKind::F64 => VoxelData::F64(vec![0.0; len]),
        }
    }
}

/// A 3D scalar grid with physical spacing and origin.
///
/// `origin` is the millimetre offset of voxel `(0, 0, 0)`. Volumes are
/// validated on construction and immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: VoxelData,
}

impl Volume {
    pub fn new(shape: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: VoxelData) -> Result<Self> {
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::InvalidVolume(format!("shape {shape:?} has a zero extent")));
        }
        let expected = shape[0]
            .checked_mul(shape[1])
            .and_then(|n| n.checked_mul(shape[2]))
            .ok_or_else(|| Error::InvalidVolume(format!("shape {shape:?} overflows")))?;
        if data.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match shape {shape:?} ({expected} voxels)",
                data.len()
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidVolume(format!("spacing {spacing:?} must be strictly positive")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume(format!("origin {origin:?} must be finite")));
        }
        Ok(Volume {
            shape,
            spacing,
            origin,
            data,
        })
    }

    /// Convenience constructor for unit-spacing, zero-origin volumes.
    pub fn from_data(shape: [usize; 3], data: VoxelData) -> Result<Self> {
        Volume::new(shape, [1.0; 3], [0.0; 3], data)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn into_data(self) -> VoxelData {
        self.data
    }

    pub fn kind(&self) -> ElementKind {
        self.data.kind()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.shape[0] * (y + self.shape[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data.get(self.index(x, y, z))
    }

    /// Same geometry, new voxel buffer.
    pub fn with_data(&self, data: VoxelData) -> Result<Volume> {
        Volume::new(self.shape, self.spacing, self.origin, data)
    }
}

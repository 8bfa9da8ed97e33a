//! Single-file NIfTI-1 (`.nii` / `.nii.gz`) reading and writing.
//!
//! Only the subset needed for detection benchmarks is supported: three spatial
//! dimensions, datatypes uint8 (2), int16 (4), float32 (16) and float64 (64).
//! Orientation is reduced to voxel sizes plus a translation; rotation
//! components of the affine are ignored and reported as warnings.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::volume::{ElementKind, Volume, VoxelData};

pub const HEADER_SIZE: usize = 348;
pub const DEFAULT_VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, thiserror::Error)]
pub enum NiftiError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header size field {0} (expected 348 in either byte order)")]
    BadHeaderSize(i32),
    #[error("bad magic {0:?} (only single-file NIfTI-1 \"n+1\" is supported)")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensions: {0}")]
    BadDimensions(String),
    #[error("invalid voxel spacing {0:?}")]
    InvalidSpacing([f32; 3]),
    #[error("invalid vox_offset {0}")]
    InvalidVoxOffset(f32),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
}

impl NiftiError {
    pub fn is_io(&self) -> bool {
        matches!(self, NiftiError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

/// The fields of the 348-byte NIfTI-1 header this crate interprets.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub descrip: [u8; 80],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            datatype: DT_FLOAT32,
            bitpix: 32,
            pixdim: [1.0; 8],
            vox_offset: DEFAULT_VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            xyzt_units: 2,
            descrip: [0; 80],
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            magic: MAGIC,
        }
    }
}

/// Non-fatal observations made while reading a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NiftiWarning {
    RotationIgnored,
    NegativeQfacIgnored,
}

impl std::fmt::Display for NiftiWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NiftiWarning::RotationIgnored => f.write_str("affine has rotation components; only spacing and translation are used"),
            NiftiWarning::NegativeQfacIgnored => f.write_str("negative qfac ignored; axis flips are not applied"),
        }
    }
}

fn datatype_kind(code: i16) -> Result<ElementKind, NiftiError> {
    match code {
        DT_UINT8 => Ok(ElementKind::U8),
        DT_INT16 => Ok(ElementKind::I16),
        DT_FLOAT32 => Ok(ElementKind::F32),
        DT_FLOAT64 => Ok(ElementKind::F64),
        other => Err(NiftiError::UnsupportedDatatype(other)),
    }
}

fn kind_datatype(kind: ElementKind) -> (i16, i16) {
    match kind {
        ElementKind::U8 => (DT_UINT8, 8),
        ElementKind::I16 => (DT_INT16, 16),
        ElementKind::F32 => (DT_FLOAT32, 32),
        ElementKind::F64 => (DT_FLOAT64, 64),
    }
}

impl NiftiHeader {
    /// Parses a header, detecting byte order from the `sizeof_hdr` field.
    pub fn parse(bytes: &[u8]) -> Result<(NiftiHeader, Endianness), NiftiError> {
        if bytes.len() < HEADER_SIZE {
            return Err(NiftiError::Truncated {
                expected: HEADER_SIZE,
                actual: bytes.len(),
            });
        }
        let le = LittleEndian::read_i32(&bytes[offset::SIZEOF_HDR..]);
        if le == HEADER_SIZE as i32 {
            Ok((Self::parse_with::<LittleEndian>(bytes)?, Endianness::Little))
        } else if BigEndian::read_i32(&bytes[offset::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
            Ok((Self::parse_with::<BigEndian>(bytes)?, Endianness::Big))
        } else {
            Err(NiftiError::BadHeaderSize(le))
        }
    }

    fn parse_with<B: ByteOrder>(b: &[u8]) -> Result<NiftiHeader, NiftiError> {
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&b[offset::MAGIC..offset::MAGIC + 4]);
        if magic != MAGIC {
            return Err(NiftiError::BadMagic(magic));
        }
        let mut dim = [0i16; 8];
        B::read_i16_into(&b[offset::DIM..offset::DIM + 16], &mut dim);
        let mut pixdim = [0f32; 8];
        B::read_f32_into(&b[offset::PIXDIM..offset::PIXDIM + 32], &mut pixdim);
        let mut quatern = [0f32; 3];
        B::read_f32_into(&b[offset::QUATERN_B..offset::QUATERN_B + 12], &mut quatern);
        let mut qoffset = [0f32; 3];
        B::read_f32_into(&b[offset::QOFFSET_X..offset::QOFFSET_X + 12], &mut qoffset);
        let mut srow = [[0f32; 4]; 3];
        for (i, row) in srow.iter_mut().enumerate() {
            let start = offset::SROW_X + 16 * i;
            B::read_f32_into(&b[start..start + 16], row);
        }
        let mut descrip = [0u8; 80];
        descrip.copy_from_slice(&b[offset::DESCRIP..offset::DESCRIP + 80]);
        Ok(NiftiHeader {
            dim,
            datatype: B::read_i16(&b[offset::DATATYPE..]),
            bitpix: B::read_i16(&b[offset::BITPIX..]),
            pixdim,
            vox_offset: B::read_f32(&b[offset::VOX_OFFSET..]),
            scl_slope: B::read_f32(&b[offset::SCL_SLOPE..]),
            scl_inter: B::read_f32(&b[offset::SCL_INTER..]),
            xyzt_units: b[offset::XYZT_UNITS],
            descrip,
            qform_code: B::read_i16(&b[offset::QFORM_CODE..]),
            sform_code: B::read_i16(&b[offset::SFORM_CODE..]),
            quatern,
            qoffset,
            srow,
            magic,
        })
    }

    /// Serializes to exactly 348 bytes; unused fields are zero.
    pub fn to_bytes(&self, endianness: Endianness) -> [u8; HEADER_SIZE] {
        match endianness {
            Endianness::Little => self.to_bytes_with::<LittleEndian>(),
            Endianness::Big => self.to_bytes_with::<BigEndian>(),
        }
    }

    fn to_bytes_with<B: ByteOrder>(&self) -> [u8; HEADER_SIZE] {
        let mut b = [0u8; HEADER_SIZE];
        B::write_i32(&mut b[offset::SIZEOF_HDR..], HEADER_SIZE as i32);
        B::write_i16_into(&self.dim, &mut b[offset::DIM..offset::DIM + 16]);
        B::write_i16(&mut b[offset::DATATYPE..], self.datatype);
        B::write_i16(&mut b[offset::BITPIX..], self.bitpix);
        B::write_f32_into(&self.pixdim, &mut b[offset::PIXDIM..offset::PIXDIM + 32]);
        B::write_f32(&mut b[offset::VOX_OFFSET..], self.vox_offset);
        B::write_f32(&mut b[offset::SCL_SLOPE..], self.scl_slope);
        B::write_f32(&mut b[offset::SCL_INTER..], self.scl_inter);
        b[offset::XYZT_UNITS] = self.xyzt_units;
        b[offset::DESCRIP..offset::DESCRIP + 80].copy_from_slice(&self.descrip);
        B::write_i16(&mut b[offset::QFORM_CODE..], self.qform_code);
        B::write_i16(&mut b[offset::SFORM_CODE..], self.sform_code);
        B::write_f32_into(&self.quatern, &mut b[offset::QUATERN_B..offset::QUATERN_B + 12]);
        B::write_f32_into(&self.qoffset, &mut b[offset::QOFFSET_X..offset::QOFFSET_X + 12]);
        for (i, row) in self.srow.iter().enumerate() {
            let start = offset::SROW_X + 16 * i;
            B::write_f32_into(row, &mut b[start..start + 16]);
        }
        b[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(&self.magic);
        b
    }

    /// Spatial shape after squeezing trailing singleton dimensions.
    pub fn spatial_shape(&self) -> Result<[usize; 3], NiftiError> {
        let ndim = self.dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(NiftiError::BadDimensions(format!("dim[0] = {ndim}")));
        }
        let ndim = ndim as usize;
        if ndim < 3 {
            return Err(NiftiError::BadDimensions(format!("{ndim} dimensions, need 3")));
        }
        if let Some(extra) = (4..=ndim).find(|&i| self.dim[i] != 1) {
            return Err(NiftiError::BadDimensions(format!(
                "dimension {extra} has size {} (only 3 spatial dimensions supported)",
                self.dim[extra]
            )));
        }
        let mut shape = [0usize; 3];
        for (axis, n) in shape.iter_mut().enumerate() {
            let d = self.dim[axis + 1];
            if d <= 0 {
                return Err(NiftiError::BadDimensions(format!("dim[{}] = {d}", axis + 1)));
            }
            *n = d as usize;
        }
        Ok(shape)
    }

    pub fn spacing(&self) -> Result<[f64; 3], NiftiError> {
        let raw = [self.pixdim[1], self.pixdim[2], self.pixdim[3]];
        if raw.iter().any(|s| !(s.abs() > 0.0) || !s.is_finite()) {
            return Err(NiftiError::InvalidSpacing(raw));
        }
        Ok(raw.map(|s| s.abs() as f64))
    }

    /// Translation of voxel (0,0,0): sform if present, else qform, else zero.
    pub fn origin(&self) -> [f64; 3] {
        if self.sform_code > 0 {
            [self.srow[0][3] as f64, self.srow[1][3] as f64, self.srow[2][3] as f64]
        } else if self.qform_code > 0 {
            self.qoffset.map(|v| v as f64)
        } else {
            [0.0; 3]
        }
    }

    fn warnings(&self) -> Vec<NiftiWarning> {
        let mut out = Vec::new();
        let rotated = if self.sform_code > 0 {
            (0..3).any(|r| (0..3).any(|c| r != c && self.srow[r][c] != 0.0))
        } else if self.qform_code > 0 {
            self.quatern.iter().any(|&q| q != 0.0)
        } else {
            false
        };
        if rotated {
            out.push(NiftiWarning::RotationIgnored);
        }
        if self.sform_code <= 0 && self.qform_code > 0 && self.pixdim[0] < 0.0 {
            out.push(NiftiWarning::NegativeQfacIgnored);
        }
        out
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let (slope, inter) = (self.scl_slope as f64, self.scl_inter as f64);
        if slope == 0.0 || !slope.is_finite() || !inter.is_finite() || (slope == 1.0 && inter == 0.0) {
            None
        } else {
            Some((slope, inter))
        }
    }

    /// Header describing `volume` with an identity-rotation affine.
    pub fn for_volume(volume: &Volume) -> NiftiHeader {
        let shape = volume.shape();
        let spacing = volume.spacing();
        let origin = volume.origin();
        let (datatype, bitpix) = kind_datatype(volume.kind());
        let mut header = NiftiHeader {
            datatype,
            bitpix,
            qform_code: 1,
            sform_code: 1,
            qoffset: origin.map(|o| o as f32),
            ..NiftiHeader::default()
        };
        for axis in 0..3 {
            header.dim[axis + 1] = shape[axis] as i16;
            header.pixdim[axis + 1] = spacing[axis] as f32;
            header.srow[axis] = [0.0; 4];
            header.srow[axis][axis] = spacing[axis] as f32;
            header.srow[axis][3] = origin[axis] as f32;
        }
        header
    }
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>, NiftiError> {
    let io_err = |source| NiftiError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Decodes an in-memory (already decompressed) NIfTI-1 file.
pub fn decode_volume(bytes: &[u8]) -> Result<(Volume, Vec<NiftiWarning>), NiftiError> {
    let (header, endianness) = NiftiHeader::parse(bytes)?;
    let kind = datatype_kind(header.datatype)?;
    let shape = header.spatial_shape()?;
    let spacing = header.spacing()?;
    if !(header.vox_offset >= DEFAULT_VOX_OFFSET as f32) || header.vox_offset.fract() != 0.0 {
        return Err(NiftiError::InvalidVoxOffset(header.vox_offset));
    }
    let start = header.vox_offset as usize;
    let count = shape.iter().product::<usize>();
    let expected = start + count * kind.byte_size();
    if bytes.len() < expected {
        return Err(NiftiError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[start..expected];
    let data = match endianness {
        Endianness::Little => decode_payload::<LittleEndian>(payload, kind, count),
        Endianness::Big => decode_payload::<BigEndian>(payload, kind, count),
    };
    let data = match header.scaling() {
        Some((slope, inter)) => {
            let scaled = (0..count).map(|i| data.get(i) * slope + inter).collect();
            VoxelData::from_f64(scaled, kind.float_promoted())
        }
        None => data,
    };
    let volume = Volume::new(shape, spacing, header.origin(), data)
        .map_err(|e| NiftiError::BadDimensions(e.to_string()))?;
    Ok((volume, header.warnings()))
}

fn decode_payload<B: ByteOrder>(payload: &[u8], kind: ElementKind, count: usize) -> VoxelData {
    match kind {
        ElementKind::U8 => VoxelData::U8(payload.to_vec()),
        ElementKind::I16 => {
            let mut v = vec![0i16; count];
            B::read_i16_into(payload, &mut v);
            VoxelData::I16(v)
        }
        ElementKind::F32 => {
            let mut v = vec![0f32; count];
            B::read_f32_into(payload, &mut v);
            VoxelData::F32(v)
        }
        ElementKind::F64 => {
            let mut v = vec![0f64; count];
            B::read_f64_into(payload, &mut v);
            VoxelData::F64(v)
        }
    }
}

/// Encodes a volume as an uncompressed single-file NIfTI-1 byte stream.
pub fn encode_volume(volume: &Volume, endianness: Endianness) -> Vec<u8> {
    let header = NiftiHeader::for_volume(volume);
    let mut out = Vec::with_capacity(DEFAULT_VOX_OFFSET + volume.len() * volume.kind().byte_size());
    out.extend_from_slice(&header.to_bytes(endianness));
    out.extend_from_slice(&[0u8; DEFAULT_VOX_OFFSET - HEADER_SIZE]);
    match endianness {
        Endianness::Little => encode_payload::<LittleEndian>(volume.data(), &mut out),
        Endianness::Big => encode_payload::<BigEndian>(volume.data(), &mut out),
    }
    out
}

fn encode_payload<B: ByteOrder>(data: &VoxelData, out: &mut Vec<u8>) {
    let start = out.len();
    match data {
        VoxelData::U8(v) => out.extend_from_slice(v),
        VoxelData::I16(v) => {
            out.resize(start + 2 * v.len(), 0);
            B::write_i16_into(v, &mut out[start..]);
        }
        VoxelData::F32(v) => {
            out.resize(start + 4 * v.len(), 0);
            B::write_f32_into(v, &mut out[start..]);
        }
        VoxelData::F64(v) => {
            out.resize(start + 8 * v.len(), 0);
            B::write_f64_into(v, &mut out[start..]);
        }
    }
}

/// Reads a `.nii` or `.nii.gz` file. Gzip is detected from the stream itself.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume, NiftiError> {
    read_volume_with_warnings(path).map(|(v, _)| v)
}

pub fn read_volume_with_warnings(path: impl AsRef<Path>) -> Result<(Volume, Vec<NiftiWarning>), NiftiError> {
    let path = path.as_ref();
    let bytes = read_file_bytes(path)?;
    let (volume, warnings) = decode_volume(&bytes)?;
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok((volume, warnings))
}

/// Writes a little-endian single-file NIfTI-1, gzip-compressed iff the path
/// ends in `.gz`.
pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let path = path.as_ref();
    let io_err = |source| NiftiError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = encode_volume(volume, Endianness::Little);
    let file = File::create(path).map_err(io_err)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes).map_err(io_err)?;
        enc.finish().map_err(io_err)?;
    } else {
        let mut file = file;
        file.write_all(&bytes).map_err(io_err)?;
    }
    Ok(())
}

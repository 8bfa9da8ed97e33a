//! Axis-aligned boxes in millimetre space and mask-to-instance extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Volume, VoxelData};

/// Half-open axis-aligned box `[min, max)` in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoundingBox3D {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    min: [f64; 3],
    max: [f64; 3],
}

impl TryFrom<RawBox> for BoundingBox3D {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        BoundingBox3D::new(raw.min, raw.max)
    }
}

impl From<BoundingBox3D> for RawBox {
    fn from(b: BoundingBox3D) -> Self {
        RawBox { min: b.min, max: b.max }
    }
}

impl BoundingBox3D {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|a| !(min[a].is_finite() && max[a].is_finite() && min[a] < max[a])) {
            return Err(Error::InvalidBox(format!("min {min:?} must be strictly below max {max:?}")));
        }
        Ok(BoundingBox3D { min, max })
    }

    /// Box of side `edge` centred on `center`.
    pub fn cube(center: [f64; 3], edge: f64) -> Result<Self> {
        let h = edge / 2.0;
        BoundingBox3D::new(center.map(|c| c - h), center.map(|c| c + h))
    }

    pub fn min(&self) -> [f64; 3] {
        self.min
    }

    pub fn max(&self) -> [f64; 3] {
        self.max
    }

    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.max[a] - self.min[a])
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    pub fn center(&self) -> [f64; 3] {
        box_center(self)
    }

    pub fn translate(&self, t: [f64; 3]) -> Result<Self> {
        BoundingBox3D::new(
            std::array::from_fn(|a| self.min[a] + t[a]),
            std::array::from_fn(|a| self.max[a] + t[a]),
        )
    }

    pub fn contains_point(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }

    pub fn intersection_volume(&self, other: &BoundingBox3D) -> f64 {
        let mut v = 1.0;
        for a in 0..3 {
            let side = self.max[a].min(other.max[a]) - self.min[a].max(other.min[a]);
            if side <= 0.0 {
                return 0.0;
            }
            v *= side;
        }
        v
    }
}

/// Intersection over union; 0 for disjoint or merely touching boxes.
pub fn box_iou(a: &BoundingBox3D, b: &BoundingBox3D) -> f64 {
    let inter = a.intersection_volume(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).min(1.0)
}

pub fn box_center(a: &BoundingBox3D) -> [f64; 3] {
    std::array::from_fn(|i| (a.min[i] + a.max[i]) / 2.0)
}

pub fn center_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// A reference object for one image and class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub image_id: String,
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox3D,
    pub center: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ignore: bool,
}

impl GroundTruthObject {
    /// Object centred in `bbox` with no explicit diameter.
    pub fn from_box(image_id: impl Into<String>, class_id: u32, bbox: BoundingBox3D) -> Self {
        GroundTruthObject {
            image_id: image_id.into(),
            class_id,
            center: bbox.center(),
            bbox,
            diameter: None,
            ignore: false,
        }
    }

    pub fn with_diameter(mut self, diameter: f64) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidBox(format!("diameter {diameter} must be positive")));
        }
        self.diameter = Some(diameter);
        Ok(self)
    }

    pub fn ignored(mut self) -> Self {
        self.ignore = true;
        self
    }

    /// Explicit diameter, falling back to the longest box edge.
    pub fn effective_diameter(&self) -> f64 {
        self.diameter.unwrap_or_else(|| diameter_proxy(&self.bbox))
    }
}

/// Diameter used when none is annotated: the longest box edge.
pub fn diameter_proxy(b: &BoundingBox3D) -> f64 {
    b.extent().into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Default for Connectivity {
    fn default() -> Self {
        Connectivity::TwentySix
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::Config(format!("connectivity must be 6, 18 or 26, got {other}"))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    /// Neighbour offsets `(dx, dy, dz)` excluding the origin.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let max_nonzero = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::new();
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let nz = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    if nz > 0 && nz <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Instance labels for one mask: 0 is background, instances are `1..=count`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    pub shape: [usize; 3],
    pub labels: Vec<u32>,
    pub count: u32,
    pub connectivity: Connectivity,
}

/// Maximal run of foreground voxels along x.
#[derive(Clone, Copy)]
struct Run {
    x0: usize,
    x1: usize, // inclusive
    row: usize,
}

/// Labels connected components of voxels equal to `foreground_class`.
///
/// Instance ids follow the order of each component's first voxel in storage
/// order (z slowest, then y, then x). Works on x-runs with a union-find over
/// runs, so cost scales with the number of runs rather than voxels.
pub fn connected_components(mask: &Volume, foreground_class: i64, connectivity: Connectivity) -> InstanceMap {
    let shape = mask.shape();
    let runs = match mask.data() {
        VoxelData::U8(v) => collect_runs(v, shape, |x| x as i64 == foreground_class),
        VoxelData::I16(v) => collect_runs(v, shape, |x| x as i64 == foreground_class),
        VoxelData::F32(v) => collect_runs(v, shape, |x| x == foreground_class as f32),
        VoxelData::F64(v) => collect_runs(v, shape, |x| x == foreground_class as f64),
    };
    label_runs(shape, &runs, connectivity)
}

fn collect_runs<T: Copy>(data: &[T], shape: [usize; 3], is_fg: impl Fn(T) -> bool) -> Vec<Run> {
    let nx = shape[0];
    let mut runs = Vec::new();
    for (row, line) in data.chunks_exact(nx).enumerate() {
        let mut x = 0;
        while x < nx {
            if is_fg(line[x]) {
                let start = x;
                while x + 1 < nx && is_fg(line[x + 1]) {
                    x += 1;
                }
                runs.push(Run { x0: start, x1: x, row });
            }
            x += 1;
        }
    }
    runs
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // Keep the earlier run as root so roots are first-in-scan-order.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

fn label_runs(shape: [usize; 3], runs: &[Run], connectivity: Connectivity) -> InstanceMap {
    let [nx, ny, nz] = shape;
    let n_rows = ny * nz;
    // row_start[r]..row_start[r+1] indexes the runs of row r.
    let mut row_start = vec![0usize; n_rows + 1];
    for r in runs {
        row_start[r.row + 1] += 1;
    }
    for r in 0..n_rows {
        row_start[r + 1] += row_start[r];
    }

    // Previously scanned neighbour rows as (dy, dz, diagonal-in-x allowed).
    let neighbour_rows: &[(i64, i64, bool)] = match connectivity {
        Connectivity::Six => &[(-1, 0, false), (0, -1, false)],
        Connectivity::Eighteen => &[(-1, 0, true), (0, -1, true), (-1, -1, false), (1, -1, false)],
        Connectivity::TwentySix => &[(-1, 0, true), (0, -1, true), (-1, -1, true), (1, -1, true)],
    };

    let mut parent: Vec<u32> = (0..runs.len() as u32).collect();
    for (i, run) in runs.iter().enumerate() {
        let y = (run.row % ny) as i64;
        let z = (run.row / ny) as i64;
        for &(dy, dz, diagonal) in neighbour_rows {
            let (yy, zz) = (y + dy, z + dz);
            if yy < 0 || yy >= ny as i64 || zz < 0 {
                continue;
            }
            let row = yy as usize + ny * zz as usize;
            let (lo, hi) = if diagonal {
                (run.x0.saturating_sub(1), run.x1 + 1)
            } else {
                (run.x0, run.x1)
            };
            for j in row_start[row]..row_start[row + 1] {
                let other = runs[j];
                if other.x0 > hi {
                    break;
                }
                if other.x1 >= lo {
                    union(&mut parent, i as u32, j as u32);
                }
            }
        }
    }

    let mut ids = vec![0u32; runs.len()];
    let mut count = 0u32;
    for i in 0..runs.len() {
        let root = find(&mut parent, i as u32) as usize;
        if root == i {
            count += 1;
            ids[i] = count;
        } else {
            ids[i] = ids[root];
        }
    }

    let mut labels = vec![0u32; nx * ny * nz];
    for (run, &id) in runs.iter().zip(&ids) {
        let base = run.row * nx;
        labels[base + run.x0..=base + run.x1].fill(id);
    }
    InstanceMap {
        shape,
        labels,
        count,
        connectivity,
    }
}

/// Tight voxel bounds per instance, as `(min_index, max_index)` inclusive.
pub fn instance_voxel_bounds(imap: &InstanceMap) -> Vec<([usize; 3], [usize; 3])> {
    let [nx, ny, _] = imap.shape;
    let mut bounds = vec![([usize::MAX; 3], [0usize; 3]); imap.count as usize];
    for (row, line) in imap.labels.chunks_exact(nx).enumerate() {
        let (y, z) = (row % ny, row / ny);
        let mut x = 0;
        while x < nx {
            let id = line[x];
            if id == 0 {
                x += 1;
                continue;
            }
            let start = x;
            while x + 1 < nx && line[x + 1] == id {
                x += 1;
            }
            let (lo, hi) = &mut bounds[id as usize - 1];
            lo[0] = lo[0].min(start);
            hi[0] = hi[0].max(x);
            lo[1] = lo[1].min(y);
            hi[1] = hi[1].max(y);
            lo[2] = lo[2].min(z);
            hi[2] = hi[2].max(z);
            x += 1;
        }
    }
    bounds
}

/// Converts instances into ground-truth objects in millimetre space.
///
/// Box: `[min_idx * spacing + origin, (max_idx + 1) * spacing + origin)`.
/// The diameter is the longest box edge.
pub fn instances_to_objects(
    imap: &InstanceMap,
    spacing: [f64; 3],
    origin: [f64; 3],
    image_id: &str,
    class_id: u32,
) -> Vec<GroundTruthObject> {
    instance_voxel_bounds(imap)
        .into_iter()
        .map(|(lo, hi)| {
            let min = std::array::from_fn(|a| lo[a] as f64 * spacing[a] + origin[a]);
            let max = std::array::from_fn(|a| (hi[a] + 1) as f64 * spacing[a] + origin[a]);
            let bbox = BoundingBox3D::new(min, max).expect("voxel bounds have positive extent");
            GroundTruthObject {
                image_id: image_id.to_string(),
                class_id,
                center: bbox.center(),
                diameter: Some(diameter_proxy(&bbox)),
                bbox,
                ignore: false,
            }
        })
        .collect()
}

/// Extracts objects for every `(label value, class id)` pair of a mask.
/// Classes are labelled independently, so touching lesions of different
/// classes stay separate objects.
pub fn mask_to_objects(
    mask: &Volume,
    image_id: &str,
    label_classes: &[(i64, u32)],
    connectivity: Connectivity,
) -> Vec<GroundTruthObject> {
    label_classes
        .iter()
        .flat_map(|&(label, class_id)| {
            let imap = connected_components(mask, label, connectivity);
            instances_to_objects(&imap, mask.spacing(), mask.origin(), image_id, class_id)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn bx(min: [f64; 3], max: [f64; 3]) -> BoundingBox3D {
        BoundingBox3D::new(min, max).unwrap()
    }

    fn mask(shape: [usize; 3], fg: &[[usize; 3]]) -> Volume {
        let mut data = vec![0u8; shape.iter().product()];
        for p in fg {
            data[p[0] + shape[0] * (p[1] + shape[1] * p[2])] = 1;
        }
        Volume::from_data(shape, VoxelData::U8(data)).unwrap()
    }

    /// Breadth-first flood fill from each unlabelled foreground voxel in
    /// storage order.
    fn flood_fill(mask: &[bool], shape: [usize; 3], conn: Connectivity) -> Vec<u32> {
        let offsets = conn.offsets();
        let idx = |x: usize, y: usize, z: usize| x + shape[0] * (y + shape[1] * z);
        let mut labels = vec![0u32; mask.len()];
        let mut next = 0;
        for z in 0..shape[2] {
            for y in 0..shape[1] {
                for x in 0..shape[0] {
                    if !mask[idx(x, y, z)] || labels[idx(x, y, z)] != 0 {
                        continue;
                    }
                    next += 1;
                    labels[idx(x, y, z)] = next;
                    let mut queue = VecDeque::from([[x, y, z]]);
                    while let Some(p) = queue.pop_front() {
                        for o in &offsets {
                            let q: Vec<i64> = (0..3).map(|a| p[a] as i64 + o[a]).collect();
                            if (0..3).any(|a| q[a] < 0 || q[a] >= shape[a] as i64) {
                                continue;
                            }
                            let (qx, qy, qz) = (q[0] as usize, q[1] as usize, q[2] as usize);
                            let i = idx(qx, qy, qz);
                            if mask[i] && labels[i] == 0 {
                                labels[i] = next;
                                queue.push_back([qx, qy, qz]);
                            }
                        }
                    }
                }
            }
        }
        labels
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = bx([0.0; 3], [2.0; 3]);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &bx([5.0; 3], [6.0; 3])), 0.0);
        // Face contact only.
        assert_eq!(box_iou(&a, &bx([2.0, 0.0, 0.0], [3.0, 2.0, 2.0])), 0.0);
    }

    #[test]
    fn iou_of_offset_cubes_is_one_fifteenth() {
        // Voxel counting: intersection 1 voxel, union 8 + 8 - 1.
        let iou = box_iou(&bx([0.0; 3], [2.0; 3]), &bx([1.0; 3], [3.0; 3]));
        assert_eq!(iou, 1.0 / 15.0);
    }

    #[test]
    fn centers() {
        assert_eq!(box_center(&bx([0.0; 3], [2.0; 3])), [1.0; 3]);
        assert_eq!(box_center(&bx([-1.0, 0.0, 2.0], [1.0, 4.0, 3.0])), [0.0, 2.0, 2.5]);
        let b = bx([-1.0, 0.0, 2.0], [1.0, 4.0, 3.0]);
        let t = [3.0, -2.0, 0.5];
        let moved = box_center(&b.translate(t).unwrap());
        assert_eq!([moved[0] - t[0], moved[1] - t[1], moved[2] - t[2]], box_center(&b));
    }

    #[test]
    fn rejects_degenerate_box() {
        assert!(BoundingBox3D::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn single_voxel_instance() {
        let m = mask([6, 6, 7], &[[3, 4, 5]]);
        let imap = connected_components(&m, 1, Connectivity::TwentySix);
        assert_eq!(imap.count, 1);
        let objs = instances_to_objects(&imap, [1.0; 3], [0.0; 3], "img", 0);
        assert_eq!(objs[0].bbox, bx([3.0, 4.0, 5.0], [4.0, 5.0, 6.0]));
        assert_eq!(objs[0].diameter, Some(1.0));
        assert_eq!(objs[0].center, [3.5, 4.5, 5.5]);
    }

    #[test]
    fn corner_contact_depends_on_connectivity() {
        let m = mask([3, 3, 3], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&m, 1, Connectivity::TwentySix).count, 1);
        assert_eq!(connected_components(&m, 1, Connectivity::Eighteen).count, 2);
        assert_eq!(connected_components(&m, 1, Connectivity::Six).count, 2);
        let edge = mask([3, 3, 3], &[[0, 0, 0], [1, 1, 0]]);
        assert_eq!(connected_components(&edge, 1, Connectivity::Eighteen).count, 1);
        assert_eq!(connected_components(&edge, 1, Connectivity::Six).count, 2);
    }

    #[test]
    fn empty_mask_has_no_instances() {
        let m = mask([4, 4, 4], &[]);
        let imap = connected_components(&m, 1, Connectivity::Six);
        assert_eq!(imap.count, 0);
        assert!(instances_to_objects(&imap, [1.0; 3], [0.0; 3], "a", 0).is_empty());
    }

    #[test]
    fn block_with_anisotropic_spacing() {
        let fg: Vec<[usize; 3]> = (0..8).map(|i| [1 + (i & 1), 2 + ((i >> 1) & 1), (i >> 2) & 1]).collect();
        let m = Volume::new([5, 5, 5], [2.0; 3], [10.0, 0.0, -4.0], mask([5, 5, 5], &fg).into_data()).unwrap();
        let objs = mask_to_objects(&m, "x", &[(1, 3)], Connectivity::TwentySix);
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].bbox.extent(), [4.0; 3]);
        assert_eq!(objs[0].bbox.min(), [12.0, 4.0, -4.0]);
        assert_eq!(objs[0].diameter, Some(4.0));
        assert_eq!(objs[0].class_id, 3);
    }

    #[test]
    fn per_class_labelling_keeps_touching_classes_apart() {
        let data = VoxelData::U8(vec![1, 2, 0, 0]);
        let m = Volume::from_data([4, 1, 1], data).unwrap();
        let objs = mask_to_objects(&m, "x", &[(1, 0), (2, 1)], Connectivity::TwentySix);
        assert_eq!(objs.len(), 2);
    }

    #[test]
    fn connectivity_offsets_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    fn random_mask() -> impl Strategy<Value = ([usize; 3], Vec<bool>)> {
        (1usize..=16, 1usize..=16, 1usize..=16, 0.05f64..0.6).prop_flat_map(|(x, y, z, p)| {
            proptest::collection::vec(proptest::bool::weighted(p), x * y * z).prop_map(move |v| ([x, y, z], v))
        })
    }

    fn volume_from_bools(shape: [usize; 3], v: &[bool]) -> Volume {
        Volume::from_data(shape, VoxelData::U8(v.iter().map(|&b| b as u8).collect())).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn labelling_matches_flood_fill((shape, bits) in random_mask(), c in 0usize..3) {
            let conn = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix][c];
            let imap = connected_components(&volume_from_bools(shape, &bits), 1, conn);
            let oracle = flood_fill(&bits, shape, conn);
            prop_assert_eq!(imap.count, oracle.iter().copied().max().unwrap_or(0));
            prop_assert_eq!(imap.labels, oracle);
        }

        #[test]
        fn boxes_match_exhaustive_scan((shape, bits) in random_mask()) {
            let imap = connected_components(&volume_from_bools(shape, &bits), 1, Connectivity::TwentySix);
            let objs = instances_to_objects(&imap, [0.5, 1.0, 2.0], [1.0, 2.0, 3.0], "i", 0);
            prop_assert_eq!(objs.len(), imap.count as usize);
            for (k, obj) in objs.iter().enumerate() {
                let id = k as u32 + 1;
                let mut lo = [usize::MAX; 3];
                let mut hi = [0usize; 3];
                for (i, &l) in imap.labels.iter().enumerate() {
                    if l == id {
                        let p = [i % shape[0], (i / shape[0]) % shape[1], i / (shape[0] * shape[1])];
                        for a in 0..3 {
                            lo[a] = lo[a].min(p[a]);
                            hi[a] = hi[a].max(p[a]);
                        }
                        let centre = [
                            p[0] as f64 * 0.5 + 1.0 + 0.25,
                            p[1] as f64 * 1.0 + 2.0 + 0.5,
                            p[2] as f64 * 2.0 + 3.0 + 1.0,
                        ];
                        prop_assert!(obj.bbox.contains_point(centre));
                    }
                }
                prop_assert_eq!(obj.bbox.min(), [lo[0] as f64 * 0.5 + 1.0, lo[1] as f64 + 2.0, lo[2] as f64 * 2.0 + 3.0]);
                prop_assert_eq!(obj.bbox.max(), [(hi[0] + 1) as f64 * 0.5 + 1.0, (hi[1] + 1) as f64 + 2.0, (hi[2] + 1) as f64 * 2.0 + 3.0]);
            }
        }

        #[test]
        fn iou_symmetry_and_invariance(
            a in proptest::array::uniform3(-10i32..10), ea in proptest::array::uniform3(1i32..6),
            b in proptest::array::uniform3(-10i32..10), eb in proptest::array::uniform3(1i32..6),
            t in proptest::array::uniform3(-50i32..50), s in 1i32..5,
        ) {
            let mk = |o: [i32; 3], e: [i32; 3], t: [i32; 3], s: i32| bx(
                std::array::from_fn(|i| ((o[i] + t[i]) * s) as f64),
                std::array::from_fn(|i| ((o[i] + e[i] + t[i]) * s) as f64),
            );
            let (ba, bb) = (mk(a, ea, [0; 3], 1), mk(b, eb, [0; 3], 1));
            let iou = box_iou(&ba, &bb);
            prop_assert_eq!(iou, box_iou(&bb, &ba));
            prop_assert_eq!(box_iou(&ba, &ba), 1.0);
            prop_assert!((box_iou(&mk(a, ea, t, s), &mk(b, eb, t, s)) - iou).abs() < 1e-12);
        }
    }
}

use proptest::prelude::*;
use volbench::nifti::{decode_volume, encode_volume, Endianness};
use volbench::{read_volume, write_volume, ElementKind, Volume, VoxelData};

fn data(kind: ElementKind, n: usize, seed: u64) -> VoxelData {
    // Cheap deterministic fill that exercises negative values and fractions.
    let raw = (0..n as u64).map(|i| (i.wrapping_mul(2654435761).wrapping_add(seed) % 65_521) as i64 - 30_000);
    match kind {
        ElementKind::U8 => VoxelData::U8(raw.map(|v| v as u8).collect()),
        ElementKind::I16 => VoxelData::I16(raw.map(|v| v as i16).collect()),
        ElementKind::F32 => VoxelData::F32(raw.map(|v| v as f32 / 7.0).collect()),
        ElementKind::F64 => VoxelData::F64(raw.map(|v| v as f64 / 7.0 + 1e-9).collect()),
    }
}

fn kinds() -> impl Strategy<Value = ElementKind> {
    prop_oneof![Just(ElementKind::U8), Just(ElementKind::I16), Just(ElementKind::F32), Just(ElementKind::F64)]
}

fn volume() -> impl Strategy<Value = Volume> {
    (proptest::array::uniform3(1usize..=32), kinds(), any::<u64>(), proptest::array::uniform3(1u8..16), proptest::array::uniform3(-64i16..64))
        .prop_map(|(shape, kind, seed, sp, org)| {
            let n = shape.iter().product();
            // Spacing and origin chosen exactly representable in the header's f32 fields.
            Volume::new(shape, sp.map(|s| s as f64 / 4.0), org.map(|o| o as f64 * 0.5), data(kind, n, seed)).unwrap()
        })
}

fn bits(v: &VoxelData) -> Vec<u64> {
    v.to_f64_vec().iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn file_round_trip_is_exact(v in volume(), gz in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(if gz { "v.nii.gz" } else { "v.nii" });
        write_volume(&v, &path).unwrap();
        let back = read_volume(&path).unwrap();
        prop_assert_eq!(back.kind(), v.kind());
        prop_assert_eq!(bits(back.data()), bits(v.data()));
        prop_assert_eq!(back, v);
    }

    #[test]
    fn byte_order_does_not_matter(v in volume()) {
        let (le, _) = decode_volume(&encode_volume(&v, Endianness::Little)).unwrap();
        let (be, _) = decode_volume(&encode_volume(&v, Endianness::Big)).unwrap();
        prop_assert_eq!(&le, &be);
        prop_assert_eq!(le, v);
    }
}

#[test]
fn missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let v = Volume::new([2, 2, 2], [1.0; 3], [0.0; 3], VoxelData::U8(vec![0; 8])).unwrap();
    let e = write_volume(&v, dir.path().join("nope").join("v.nii")).unwrap_err();
    assert!(e.is_io());
    assert!(read_volume(dir.path().join("absent.nii.gz")).unwrap_err().is_io());
}

mod common;

use std::path::Path;

use common::{random, rng, tiny_arch};
use efficientad::io::dataset::{index_dataset, Label};
use efficientad::io::image::{load_image, load_mask, save_mask_png, save_unit_png};
use efficientad::io::maps::{write_map_ead1, write_map_png16};
use efficientad::io::{
    load_bundle, load_teacher, read_features, save_bundle, save_teacher, write_features, Container,
};
use efficientad::{Error, MapQuantiles, ModelBundle, Tensor};

fn trained_looking_bundle() -> ModelBundle {
    let mut b = ModelBundle::init(tiny_arch(), 3).unwrap();
    b.channel_norm.mean = (0..8).map(|i| i as f32 * 0.37 - 1.0).collect();
    b.channel_norm.std = (0..8).map(|i| 0.5 + i as f32 * 1e-3).collect();
    b.quantiles = MapQuantiles {
        st_a: 0.123,
        st_b: 4.5e-3,
        ae_a: -1.0,
        ae_b: f32::MIN_POSITIVE,
    };
    b
}

#[test]
fn bundle_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.ead1");
    let bundle = trained_looking_bundle();
    save_bundle(&bundle, &path).unwrap();
    let loaded = load_bundle(&path).unwrap();
    assert_eq!(loaded, bundle);
    let path2 = dir.path().join("b2.ead1");
    save_bundle(&loaded, &path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}

#[test]
fn bundle_keeps_variant_and_padding() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ead1");
    let mut arch = tiny_arch();
    arch.variant = efficientad::Variant::M;
    arch.padding = false;
    let bundle = ModelBundle::init(arch, 1).unwrap();
    save_bundle(&bundle, &path).unwrap();
    assert_eq!(load_bundle(&path).unwrap().arch, arch);
}

#[test]
fn truncated_bundle_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.ead1");
    save_bundle(&trained_looking_bundle(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        match load_bundle(&path) {
            Err(Error::Format { msg, .. }) => assert!(!msg.is_empty()),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn corrupt_header_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.ead1");
    save_bundle(&trained_looking_bundle(), &path).unwrap();
    let good = std::fs::read(&path).unwrap();

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    std::fs::write(&path, &bad_magic).unwrap();
    assert!(matches!(load_bundle(&path), Err(Error::Format { .. })));

    let mut bad_version = good.clone();
    bad_version[4] = 9;
    std::fs::write(&path, &bad_version).unwrap();
    let err = load_bundle(&path).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn teacher_checkpoint_round_trip_and_role_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ead1");
    let bundle = trained_looking_bundle();
    save_teacher(&bundle.teacher, &bundle.arch, &path).unwrap();
    let (teacher, arch) = load_teacher(&path).unwrap();
    assert_eq!(teacher, bundle.teacher);
    assert_eq!(arch, bundle.arch);
    // A teacher file is not a bundle, and vice versa.
    assert!(load_bundle(&path).is_err());
    let bpath = dir.path().join("b.ead1");
    save_bundle(&bundle, &bpath).unwrap();
    assert!(load_teacher(&bpath).is_err());
}

#[test]
fn features_round_trip_and_dims_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.ead1");
    let t = random(&[8, 5, 5], &mut rng(1));
    write_features(&path, &t).unwrap();
    assert_eq!(read_features(&path, Some(&[8, 5, 5])).unwrap(), t);
    assert!(read_features(&path, Some(&[384, 64, 64])).is_err());
    let mut c = Container::new("map");
    c.push("features", t);
    c.write(&path).unwrap();
    assert!(read_features(&path, None).is_err());
}

#[test]
fn solid_gray_image_standardizes_in_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.png");
    // 16-bit gray keeps 0.5 representable to within 1e-5.
    let img =
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_pixel(40, 30, image::Luma([32768]));
    img.save(&path).unwrap();
    let t = load_image(&path, 128).unwrap();
    assert_eq!(t.dims(), &[3, 128, 128]);
    let expected = [
        (0.5 - 0.485) / 0.229,
        (0.5 - 0.456) / 0.224,
        (0.5 - 0.406) / 0.225,
    ];
    for (c, e) in expected.iter().enumerate() {
        for &v in t.channel(c) {
            assert!((v - e).abs() < 1e-4, "channel {c}: {v} vs {e}");
        }
    }
    assert!((expected[0] - 0.0655).abs() < 1e-4);
}

#[test]
fn white_pixel_is_unit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.png");
    save_unit_png(&Tensor::filled(&[3, 128, 128], 1.0), &path).unwrap();
    let t = efficientad::io::load_unit_image(&path, 128).unwrap();
    assert!(t.data().iter().all(|&v| v == 1.0));
}

fn touch_png(path: &Path, h: usize, w: usize) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    save_unit_png(&Tensor::filled(&[3, h, w], 0.3), path).unwrap();
}

#[test]
fn dataset_index_of_small_tree() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    touch_png(&root.join("train/good/b.png"), 8, 8);
    touch_png(&root.join("train/good/a.png"), 8, 8);
    touch_png(&root.join("test/good/n.png"), 8, 8);
    touch_png(&root.join("test/crack/x.png"), 8, 6);
    std::fs::create_dir_all(root.join("ground_truth/crack")).unwrap();
    save_mask_png(
        &[true; 48],
        8,
        6,
        &root.join("ground_truth/crack/x_mask.png"),
    )
    .unwrap();
    std::fs::write(root.join("train/good/notes.txt"), "ignored").unwrap();

    let index = index_dataset(root).unwrap();
    assert_eq!(
        index.train,
        vec![root.join("train/good/a.png"), root.join("train/good/b.png")]
    );
    assert_eq!(index.test.len(), 2);
    let crack = &index.test[0];
    assert_eq!(crack.category, "crack");
    assert_eq!(crack.label, Label::Anomalous);
    assert_eq!(
        crack.mask.as_deref(),
        Some(root.join("ground_truth/crack/x_mask.png").as_path())
    );
    let good = &index.test[1];
    assert_eq!(
        (good.category.as_str(), good.label, good.mask.is_none()),
        ("good", Label::Normal, true)
    );
    let (mask, h, w) = load_mask(crack.mask.as_ref().unwrap()).unwrap();
    assert_eq!((h, w, mask.iter().filter(|&&m| m).count()), (8, 6, 48));
}

#[test]
fn dataset_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert!(index_dataset(&root.join("missing")).is_err());
    assert!(index_dataset(root).is_err());
    touch_png(&root.join("train/good/a.png"), 8, 8);
    let index = index_dataset(root).unwrap();
    assert!(index.test.is_empty());
    touch_png(&root.join("test/hole/x.png"), 8, 8);
    std::fs::create_dir_all(root.join("ground_truth/hole")).unwrap();
    save_mask_png(
        &[false; 16],
        4,
        4,
        &root.join("ground_truth/hole/x_mask.png"),
    )
    .unwrap();
    assert!(matches!(index_dataset(root), Err(Error::Dataset(_))));
}

#[test]
fn map_exports() {
    let dir = tempfile::tempdir().unwrap();
    let map = Tensor::from_vec(&[1, 2, 3], vec![-0.5, 0.0, 0.25, 1.0, 2.0, 3.5]).unwrap();
    let ead = dir.path().join("m.ead1");
    write_map_ead1(&map, &ead).unwrap();
    let c = Container::read(&ead).unwrap();
    assert_eq!(c.role, "map");
    assert_eq!(c.get("map").unwrap().dims(), &[2, 3]);
    assert_eq!(c.get("map").unwrap().data(), map.data());

    let png = dir.path().join("m.png");
    let affine = write_map_png16(&map, &png).unwrap();
    assert_eq!((affine.min, affine.max), (-0.5, 3.5));
    let decoded = image::open(&png).unwrap().to_luma16();
    let back: Vec<f32> = decoded
        .pixels()
        .map(|p| affine.min + p.0[0] as f32 / 65535.0 * (affine.max - affine.min))
        .collect();
    for (a, b) in back.iter().zip(map.data()) {
        assert!((a - b).abs() < 1e-4);
    }
    assert!(dir.path().join("m.png.txt").exists());
}

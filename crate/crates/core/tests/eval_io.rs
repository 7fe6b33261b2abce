mod common;

use hcft::eval::{self, Sequence};
use hcft::features::{write_archive, ArchiveRecord, FeatureArchive, FeatureSource};
use hcft::{BoundingBox, Error, FeatureMap, Image};
use proptest::prelude::*;

fn tiny_frames(dir: &std::path::Path, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let img = Image::filled(16, 12, 1, i as f32 / 10.0).unwrap();
        eval::save_image(&img, dir.join(name)).unwrap();
    }
}

#[test]
fn sequence_layout_and_ordering() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("img")).unwrap();
    tiny_frames(&dir.path().join("img"), &["0010.png", "0002.png", "0001.png"]);
    std::fs::write(dir.path().join("img/notes.txt"), "x").unwrap();
    std::fs::write(dir.path().join("groundtruth_rect.txt"), "2\t3\t8\t6\n2 3 8 6\n").unwrap();
    let seq = Sequence::load(dir.path()).unwrap();
    let names: Vec<String> = seq.frames.iter().map(|p| p.file_name().unwrap().to_string_lossy().into()).collect();
    assert_eq!(names, vec!["0001.png", "0002.png", "0010.png"]);
    assert_eq!(seq.ground_truth[0], BoundingBox::from_top_left(2.0, 3.0, 8.0, 6.0));
    assert!(seq.features.is_none());
    let f = seq.frame(1).unwrap();
    assert_eq!((f.width(), f.height(), f.channels()), (16, 12, 1));
    assert!((f.get(0, 0, 0) - 0.1).abs() < 1.0 / 255.0);
}

#[test]
fn invalid_sequences_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    tiny_frames(dir.path(), &["a.png"]);
    std::fs::write(dir.path().join("groundtruth_rect.txt"), "1,1,4,4\n").unwrap();
    assert!(matches!(Sequence::load(dir.path()), Err(Error::Data { .. })));

    tiny_frames(dir.path(), &["a.png", "b.png"]);
    std::fs::write(dir.path().join("groundtruth_rect.txt"), "1,1,4,4\n1,1,4,4\n1,1,4,4\n").unwrap();
    assert!(matches!(Sequence::load(dir.path()), Err(Error::Data { .. })));

    std::fs::write(dir.path().join("groundtruth_rect.txt"), "").unwrap();
    assert!(matches!(Sequence::load(dir.path()), Err(Error::Data { .. })));

    std::fs::remove_file(dir.path().join("groundtruth_rect.txt")).unwrap();
    assert!(matches!(Sequence::load(dir.path()), Err(Error::Data { .. })));
}

#[test]
fn result_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("res.txt");
    let boxes = vec![[1.5f32, 2.25, 40.0, 30.125], [-3.0, 0.1, 7.7, 8.8]];
    eval::write_boxes(&path, &boxes).unwrap();
    assert_eq!(eval::read_boxes(&path).unwrap(), boxes);
}

#[test]
fn viz_deep_layer_has_grid_dims() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.hcf");
    let data: Vec<f32> = (0..5 * 4 * 6).map(|i| ((i * 7) % 13) as f32).collect();
    write_archive(
        &path,
        &[ArchiveRecord {
            frame_index: 1,
            features: FeatureMap::new("conv4", 5, 4, 6, data).unwrap(),
        }],
    )
    .unwrap();
    let src = FeatureSource::deep(FeatureArchive::open(&path).unwrap());
    let frame = Image::filled(20, 16, 3, 0.2).unwrap();
    let img = eval::viz_features(1, &frame, &src, "conv4").unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (5, 4, 3));
    let out = dir.path().join("viz.png");
    eval::save_image(&img, &out).unwrap();
    assert!(out.is_file());
    assert!(matches!(eval::viz_features(1, &frame, &src, "conv9"), Err(Error::FeatureMissing { .. })));
    assert!(matches!(eval::viz_features(2, &frame, &src, "conv4"), Err(Error::FeatureMissing { .. })));
}

fn boxes_strategy() -> impl Strategy<Value = Vec<(BoundingBox, BoundingBox)>> {
    let b = (0.0f32..100.0, 0.0f32..100.0, 1.0f32..50.0, 1.0f32..50.0)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h));
    prop::collection::vec((b.clone(), b), 1..20)
}

proptest! {
    #[test]
    fn rates_are_monotone_in_threshold(pairs in boxes_strategy(), t1 in 0.0f64..60.0, t2 in 0.0f64..60.0) {
        let (res, gt): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(eval::dp_rate(&res, &gt, lo).unwrap() <= eval::dp_rate(&res, &gt, hi).unwrap());
        let (lo, hi) = (lo / 60.0, hi / 60.0);
        // success rate falls as the overlap threshold rises
        prop_assert!(eval::os_rate(&res, &gt, hi).unwrap() <= eval::os_rate(&res, &gt, lo).unwrap());
    }

    #[test]
    fn auc_ignores_frame_order(pairs in boxes_strategy()) {
        let (res, gt): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let (rres, rgt): (Vec<_>, Vec<_>) = pairs.into_iter().rev().unzip();
        let (a, b) = (eval::auc(&res, &gt).unwrap(), eval::auc(&rres, &rgt).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

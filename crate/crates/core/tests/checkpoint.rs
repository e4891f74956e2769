use headpose::codec::BinGrid;
use headpose::data::{make_synthetic_dataset, PseudoLabelStore};
use headpose::model::{images_to_tensor, BackboneName, BackboneSpec, PoseModel};
use headpose::train::compute_pseudo_labels;
use headpose::Error;

fn tiny(seed: u64) -> PoseModel {
    PoseModel::new(BackboneSpec::new(BackboneName::TinyCnn), BinGrid::default(), 112, seed).unwrap()
}

#[test]
fn saved_model_predicts_identically() {
    let ds = make_synthetic_dataset(4, 1).unwrap();
    let m = tiny(9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/model.ckpt");
    m.save(&path).unwrap();
    let back = PoseModel::load_expecting(&path, BackboneName::TinyCnn).unwrap();
    assert_eq!(back.checksum(), m.checksum());
    let refs: Vec<_> = (0..4).map(|i| ds.image(i)).collect();
    let x = images_to_tensor(&refs).unwrap();
    assert_eq!(m.forward_tensor(&x).unwrap().data(), back.forward_tensor(&x).unwrap().data());
}

#[test]
fn wrong_backbone_and_truncation_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    tiny(1).save(&path).unwrap();
    match PoseModel::load_expecting(&path, BackboneName::Resnet18) {
        Err(Error::Checkpoint { field, .. }) => assert_eq!(field, "backbone"),
        other => panic!("unexpected {other:?}"),
    }
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    match PoseModel::load(&path) {
        Err(Error::Checkpoint { field, .. }) => assert_eq!(field, "payload"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn pseudo_label_store_roundtrips_through_disk() {
    let ds = make_synthetic_dataset(5, 2).unwrap();
    let grid = BinGrid::default();
    let store = compute_pseudo_labels(&[tiny(1)], vec!["t1".into()], &ds, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.bin");
    store.write(&path, &grid).unwrap();
    let back = PseudoLabelStore::read(&path, &grid).unwrap();
    assert_eq!(back.ids, store.ids);
    assert_eq!(back.teacher_names, store.teacher_names);
    for (a, b) in back.labels.iter().zip(&store.labels) {
        for r in 0..3 {
            for (x, y) in a.rows[r].iter().zip(&b.rows[r]) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }
}

//! File-format behavior: hand-assembled byte fixtures, corruption handling,
//! and round-trips through every container.

use std::path::Path;

use cpd_core::io::{codebook, matrix_file, pgm, scores_file, tensor_file, trajectory_file};
use cpd_core::{
    normalize, weight_map, CpdError, FeatureMap, GmmModel, KmeansModel, LinearSvmModel, MapDims,
    Matrix, NormMode, PcaModel, ScoreMatrix, Stream, Trajectory, TrajectoryPoint, TrajectorySet,
    VideoDims,
};

fn write(path: &Path, bytes: &[u8]) {
    std::fs::write(path, bytes).unwrap();
}

/// The smallest valid tensor file, built byte by byte: a 1x1x1x1 map from a
/// 4x4 spatial stream holding the single value 2.5.
#[test]
fn tensor_bytes_are_laid_out_as_documented() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.cpdt");

    #[rustfmt::skip]
    let bytes: Vec<u8> = vec![
        b'C', b'P', b'D', b'T',
        0x01, 0x00,                                        // version 1
        0x01, 0x00, 0x00, 0x00,                            // width
        0x01, 0x00, 0x00, 0x00,                            // height
        0x01, 0x00, 0x00, 0x00,                            // channels
        0x01, 0x00, 0x00, 0x00,                            // frames
        0x00,                                              // spatial stream
        0x04, 0x00, 0x00, 0x00,                            // video width
        0x04, 0x00, 0x00, 0x00,                            // video height
        0x00, 0x00, 0x20, 0x40,                            // 2.5f32
    ];
    write(&path, &bytes);

    let map = tensor_file::load_feature_map(&path).unwrap();
    assert_eq!(map.dims(), MapDims::new(1, 1, 1, 1).unwrap());
    assert_eq!(map.video(), VideoDims::new(4, 4).unwrap());
    assert_eq!(map.stream(), Stream::Spatial);
    assert_eq!(map.data(), &[2.5]);

    // Saving the same map must reproduce the fixture byte for byte.
    let out = dir.path().join("roundtrip.cpdt");
    tensor_file::save_feature_map(&out, &map).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
}

#[test]
fn corrupted_tensor_files_fail_with_specific_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cpdt");

    let good: Vec<u8> = {
        let map = FeatureMap::new(
            MapDims::new(1, 1, 1, 1).unwrap(),
            VideoDims::new(4, 4).unwrap(),
            Stream::Spatial,
            vec![2.5],
        )
        .unwrap();
        let p = dir.path().join("good.cpdt");
        tensor_file::save_feature_map(&p, &map).unwrap();
        std::fs::read(&p).unwrap()
    };

    // Wrong magic.
    let mut bad = good.clone();
    bad[0] = b'X';
    write(&path, &bad);
    assert!(matches!(
        tensor_file::load_feature_map(&path),
        Err(CpdError::BadMagic { .. })
    ));

    // Future version.
    let mut bad = good.clone();
    bad[4] = 2;
    write(&path, &bad);
    assert!(matches!(
        tensor_file::load_feature_map(&path),
        Err(CpdError::UnsupportedVersion { version: 2, .. })
    ));

    // Stream tag outside {0, 1}.
    let mut bad = good.clone();
    bad[22] = 3;
    write(&path, &bad);
    assert!(matches!(
        tensor_file::load_feature_map(&path),
        Err(CpdError::InvalidStreamTag { tag: 3, .. })
    ));

    // Payload shorter than the dimensions demand.
    let mut bad = good.clone();
    bad.truncate(bad.len() - 2);
    write(&path, &bad);
    assert!(matches!(
        tensor_file::load_feature_map(&path),
        Err(CpdError::Truncated { .. })
    ));

    // Trailing garbage counts as a size mismatch too.
    let mut bad = good.clone();
    bad.extend_from_slice(&[0, 0, 0, 0]);
    write(&path, &bad);
    assert!(matches!(
        tensor_file::load_feature_map(&path),
        Err(CpdError::Truncated { .. })
    ));

    // A negative payload value is rejected by validation on load.
    let mut bad = good.clone();
    let neg = (-1.0f32).to_le_bytes();
    let n = bad.len();
    bad[n - 4..].copy_from_slice(&neg);
    write(&path, &bad);
    assert!(matches!(
        tensor_file::load_feature_map(&path),
        Err(CpdError::NegativeValue { .. })
    ));
}

#[test]
fn weight_maps_round_trip_but_reject_multichannel_files() {
    let dir = tempfile::tempdir().unwrap();
    let map = FeatureMap::new(
        MapDims::new(2, 2, 3, 2).unwrap(),
        VideoDims::new(8, 8).unwrap(),
        Stream::Temporal,
        (0..24).map(|i| i as f64 / 4.0).collect(),
    )
    .unwrap();
    let w = weight_map(&normalize(&map, NormMode::Spatiotemporal));

    let path = dir.path().join("w.cpdt");
    tensor_file::save_weight_map(&path, &w).unwrap();
    let back = tensor_file::load_weight_map(&path).unwrap();
    assert_eq!(back.stream(), Stream::Temporal);
    assert_eq!(back.data().len(), w.data().len());
    // Weight values survive the f32 narrowing within f32 precision.
    for (a, b) in w.data().iter().zip(back.data()) {
        assert_eq!(*a as f32, *b as f32);
    }

    // A 3-channel tensor is not a weight map.
    let t_path = dir.path().join("t.cpdt");
    tensor_file::save_feature_map(&t_path, &map).unwrap();
    assert!(matches!(
        tensor_file::load_weight_map(&t_path),
        Err(CpdError::InvalidDims { .. })
    ));
}

#[test]
fn trajectory_text_round_trips_and_rejects_malformed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");

    let video = VideoDims::new(10, 8).unwrap();
    let set = TrajectorySet::new(
        video,
        6,
        vec![
            Trajectory::new(
                0,
                vec![
                    TrajectoryPoint { x: 0, y: 0, t: 0 },
                    TrajectoryPoint { x: 1, y: 2, t: 1 },
                ],
            )
            .unwrap(),
            Trajectory::new(
                1,
                vec![
                    TrajectoryPoint { x: 9, y: 7, t: 4 },
                    TrajectoryPoint { x: 8, y: 7, t: 5 },
                ],
            )
            .unwrap(),
        ],
    )
    .unwrap();
    trajectory_file::save_trajectories(&path, &set).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "10 8 6 2 2");

    let back = trajectory_file::load_trajectories(&path).unwrap();
    assert_eq!(back.video(), video);
    assert_eq!(back.trajectories().len(), 2);
    assert_eq!(back.trajectories()[1].points()[0], TrajectoryPoint { x: 9, y: 7, t: 4 });

    // Non-consecutive frames inside a line.
    write(&path, b"10 8 6 2 1\n0,0,0 1,1,2\n");
    assert!(matches!(
        trajectory_file::load_trajectories(&path),
        Err(CpdError::TrajectoryBounds { .. })
    ));

    // Out-of-bounds pixel.
    write(&path, b"10 8 6 2 1\n10,0,0 9,0,1\n");
    assert!(matches!(
        trajectory_file::load_trajectories(&path),
        Err(CpdError::TrajectoryBounds { .. })
    ));

    // Wrong point count on a line.
    write(&path, b"10 8 6 3 1\n0,0,0 1,1,1\n");
    assert!(matches!(
        trajectory_file::load_trajectories(&path),
        Err(CpdError::Parse { .. })
    ));

    // Fewer trajectory lines than the header promises.
    write(&path, b"10 8 6 2 2\n0,0,0 1,1,1\n");
    assert!(matches!(
        trajectory_file::load_trajectories(&path),
        Err(CpdError::Parse { .. })
    ));
}

#[test]
fn matrix_files_round_trip_and_validate_their_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cpdd");

    let mut m = Matrix::new(3);
    m.push_row(&[1.5, -2.25, 1e-300]);
    m.push_row(&[0.0, f64::MIN_POSITIVE, 7.0]);
    matrix_file::save_matrix(&path, &m).unwrap();
    let back = matrix_file::load_matrix(&path).unwrap();
    assert_eq!(back.data(), m.data());
    assert_eq!(back.cols(), 3);

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"CPDD");
    // 4 magic + 2 version + 4 rows + 4 cols + 6 values.
    assert_eq!(bytes.len(), 14 + 6 * 8);

    let mut bad = bytes.clone();
    bad[1] = b'X';
    write(&path, &bad);
    assert!(matches!(
        matrix_file::load_matrix(&path),
        Err(CpdError::BadMagic { .. })
    ));

    let mut bad = bytes.clone();
    bad.truncate(20);
    write(&path, &bad);
    assert!(matches!(
        matrix_file::load_matrix(&path),
        Err(CpdError::Truncated { .. })
    ));
}

#[test]
fn codebooks_round_trip_every_model_kind() {
    let dir = tempfile::tempdir().unwrap();

    let pca = {
        // One basis row per input dimension; columns are the components.
        let mut basis = Matrix::new(2);
        basis.push_row(&[1.0, 0.0]);
        basis.push_row(&[0.0, 0.6]);
        basis.push_row(&[0.0, 0.8]);
        PcaModel::new(vec![0.5, -1.0, 2.0], basis, vec![4.0, 1.0]).unwrap()
    };
    let p = dir.path().join("pca.cpdc");
    codebook::save_pca(&p, &pca).unwrap();
    let back = codebook::load_pca(&p).unwrap();
    assert_eq!(back.mean(), pca.mean());
    assert_eq!(back.basis().data(), pca.basis().data());
    assert_eq!(back.eigenvalues(), pca.eigenvalues());

    let gmm = {
        let mut means = Matrix::new(2);
        means.push_row(&[0.0, 1.0]);
        means.push_row(&[3.0, -1.0]);
        let mut vars = Matrix::new(2);
        vars.push_row(&[1.0, 0.5]);
        vars.push_row(&[2.0, 0.25]);
        GmmModel::new(vec![0.25, 0.75], means, vars).unwrap()
    };
    let g = dir.path().join("gmm.cpdc");
    codebook::save_gmm(&g, &gmm).unwrap();
    let back = codebook::load_gmm(&g).unwrap();
    assert_eq!(back.weights(), gmm.weights());
    assert_eq!(back.means().data(), gmm.means().data());
    assert_eq!(back.variances().data(), gmm.variances().data());

    let km = {
        let mut c = Matrix::new(2);
        c.push_row(&[0.0, 0.0]);
        c.push_row(&[1.0, 1.0]);
        c.push_row(&[-1.0, 2.0]);
        KmeansModel::new(c).unwrap()
    };
    let k = dir.path().join("km.cpdc");
    codebook::save_kmeans(&k, &km).unwrap();
    let back = codebook::load_kmeans(&k).unwrap();
    assert_eq!(back.centroids().data(), km.centroids().data());

    let svm = {
        let mut w = Matrix::new(3);
        w.push_row(&[0.5, -0.5, 0.1]);
        w.push_row(&[-0.5, 0.5, -0.1]);
        LinearSvmModel::new(vec![2, 9], w, 100.0).unwrap()
    };
    let s = dir.path().join("svm.cpdc");
    codebook::save_svm(&s, &svm).unwrap();
    let back = codebook::load_svm(&s).unwrap();
    assert_eq!(back.class_labels(), svm.class_labels());
    assert_eq!(back.decision(&[1.0, 2.0]).unwrap(), svm.decision(&[1.0, 2.0]).unwrap());

    // Opening a file as the wrong kind names both kinds in the error.
    match codebook::load_gmm(&p) {
        Err(CpdError::CodebookKind { expected, found, .. }) => {
            assert_eq!(expected, "gmm");
            assert_eq!(found, "pca");
        }
        other => panic!("expected a kind mismatch, got {other:?}"),
    }
}

#[test]
fn score_tables_round_trip_exactly_through_text() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.txt");

    let mut m = Matrix::new(2);
    // Values chosen to stress the formatter: subnormal-ish, negative, huge.
    m.push_row(&[0.1 + 0.2, -1.0 / 3.0]);
    m.push_row(&[1e-300, -123456789.12345679]);
    let scores = ScoreMatrix {
        class_labels: vec![0, 7],
        scores: m,
        provenance: "unit".into(),
    };
    let ids = vec!["vid_a".to_string(), "vid_b".to_string()];
    scores_file::save_scores(&path, &scores, &ids).unwrap();

    let (back, back_ids) = scores_file::load_scores(&path).unwrap();
    assert_eq!(back_ids, ids);
    assert_eq!(back.class_labels, scores.class_labels);
    assert_eq!(back.provenance, "unit");
    // Bit-exact reload: 17 significant digits identify each f64 uniquely.
    assert_eq!(back.scores.data(), scores.scores.data());

    write(&path, b"provenance x\nclasses 0 1\nrow_a 1.0\n");
    assert!(matches!(
        scores_file::load_scores(&path),
        Err(CpdError::Parse { .. })
    ));
}

#[test]
fn pgm_export_writes_a_valid_p5_frame() {
    let dir = tempfile::tempdir().unwrap();
    let map = FeatureMap::new(
        MapDims::new(2, 2, 1, 2).unwrap(),
        VideoDims::new(4, 4).unwrap(),
        Stream::Spatial,
        vec![0.0, 1.0, 2.0, 4.0, 9.0, 9.0, 9.0, 9.0],
    )
    .unwrap();
    let w = weight_map(&normalize(&map, NormMode::Spatiotemporal));

    let path = dir.path().join("f0.pgm");
    pgm::export_weight_frame(&path, &w, 0).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let header = b"P5\n2 2\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 4);
    // Frame 0 normalizes 0,1,2,4 (over max 9) onto 0..=255 by min-max.
    assert_eq!(&bytes[header.len()..], &[0, 64, 128, 255]);

    // Frame 1 is constant: no contrast collapses to black, not NaN.
    let p1 = dir.path().join("f1.pgm");
    pgm::export_weight_frame(&p1, &w, 1).unwrap();
    let bytes = std::fs::read(&p1).unwrap();
    assert_eq!(&bytes[header.len()..], &[0, 0, 0, 0]);

    // Out-of-range frame index.
    assert!(matches!(
        pgm::export_weight_frame(&dir.path().join("f9.pgm"), &w, 9),
        Err(CpdError::InvalidParam { .. })
    ));
}

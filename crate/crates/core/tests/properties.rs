//! Randomized invariants for the descriptor pipeline. Exactness claims
//! (idempotence, route equivalence, splice additivity, accounting identity)
//! hold bitwise because the operations evaluate the same floating-point
//! expressions in the same order; tests on dyadic-valued inputs additionally
//! keep every intermediate sum representable.

use proptest::prelude::*;

use cpd_core::{
    channel_normalize, cross_stream, fuse_scores, normalize, pool_cpd_direct, pool_cpd_weighted,
    pool_tdd, postnormalize, predict, spatiotemporal_normalize, subsample_rows, vlad_encode,
    weight_map, FeatureMap, KmeansModel, MapDims, Matrix, NormMode, NormalizedMap, ScoreMatrix,
    Stream, Trajectory, TrajectoryPoint, TrajectorySet, VideoDims,
};

/// Map dims, matching video dims, and raw non-negative values. Whole
/// channels and whole fibers are sometimes forced to zero so the 0/0 rules
/// get exercised.
fn arb_feature_map() -> impl Strategy<Value = FeatureMap> {
    (1usize..=5, 1usize..=5, 1usize..=4, 1usize..=5)
        .prop_flat_map(|(w, h, n, t)| {
            let count = w * h * n * t;
            (
                Just((w, h, n, t)),
                proptest::collection::vec(0.0f64..10.0, count),
                proptest::collection::vec(proptest::bool::weighted(0.25), n),
                (w as u32 * 4..=w as u32 * 8, h as u32 * 4..=h as u32 * 8),
            )
        })
        .prop_map(|((w, h, n, t), mut values, kill_channel, (vw, vh))| {
            let dims = MapDims::new(w, h, n, t).unwrap();
            for x in 0..w {
                for y in 0..h {
                    for c in 0..n {
                        for f in 0..t {
                            if kill_channel[c] {
                                values[dims.index(x, y, c, f)] = 0.0;
                            }
                        }
                    }
                }
            }
            // Zero a full fiber as well so channel normalization sees 0/0.
            for c in 0..n {
                values[dims.index(0, 0, c, 0)] = 0.0;
            }
            FeatureMap::new(dims, VideoDims::new(vw, vh).unwrap(), Stream::Spatial, values)
                .unwrap()
        })
}

fn rebuild_raw(map: &NormalizedMap) -> FeatureMap {
    FeatureMap::new(map.dims(), map.video(), map.stream(), map.data().to_vec()).unwrap()
}

proptest! {
    #[test]
    fn normalization_is_idempotent_bitwise(map in arb_feature_map(), mode_ch in any::<bool>()) {
        let mode = if mode_ch { NormMode::Channel } else { NormMode::Spatiotemporal };
        let once = normalize(&map, mode);
        let twice = normalize(&rebuild_raw(&once), mode);
        prop_assert_eq!(once.data(), twice.data());
    }

    #[test]
    fn normalization_ignores_positive_scaling(map in arb_feature_map(), lambda in prop::sample::select(vec![0.5f64, 2.0, 3.7, 1e-6, 1e6])) {
        let scaled_values: Vec<f64> = map.data().iter().map(|v| v * lambda).collect();
        let scaled = FeatureMap::new(map.dims(), map.video(), map.stream(), scaled_values).unwrap();
        for mode in [NormMode::Spatiotemporal, NormMode::Channel] {
            let a = normalize(&map, mode);
            let b = normalize(&scaled, mode);
            for (&x, &y) in a.data().iter().zip(b.data()) {
                let tol = 1e-12 * x.abs().max(y.abs());
                prop_assert!((x - y).abs() <= tol, "{x} vs {y} under scale {lambda}");
            }
        }
    }

    #[test]
    fn normalized_values_stay_inside_unit_interval(map in arb_feature_map()) {
        for norm in [spatiotemporal_normalize(&map), channel_normalize(&map)] {
            prop_assert!(norm.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_channels_normalize_to_zero(map in arb_feature_map()) {
        let d = map.dims();
        let norm = spatiotemporal_normalize(&map);
        for c in 0..d.channels {
            let zero_channel = (0..d.width).all(|x| {
                (0..d.height).all(|y| (0..d.frames).all(|t| map.value(x, y, c, t) == 0.0))
            });
            if zero_channel {
                for x in 0..d.width {
                    for y in 0..d.height {
                        for t in 0..d.frames {
                            prop_assert_eq!(norm.value(x, y, c, t), 0.0);
                        }
                    }
                }
            }
        }
        // The (0,0,·,0) fiber is all-zero by construction; under channel
        // normalization 0/0 must stay 0.
        let ch = channel_normalize(&map);
        for c in 0..d.channels {
            prop_assert_eq!(ch.value(0, 0, c, 0), 0.0);
        }
    }

    #[test]
    fn weight_map_is_bounded_by_channel_count(map in arb_feature_map()) {
        let st = spatiotemporal_normalize(&map);
        let w = weight_map(&st);
        let n = map.dims().channels as f64;
        prop_assert!(w.data().iter().all(|v| (0.0..=n).contains(v)));
    }

    #[test]
    fn crossed_map_equals_fiber_times_weight(map in arb_feature_map()) {
        let d = map.dims();
        let st = spatiotemporal_normalize(&map);
        let other_raw = FeatureMap::new(d, map.video(), Stream::Temporal, map.data().to_vec()).unwrap();
        let w = weight_map(&spatiotemporal_normalize(&other_raw));
        let crossed = cross_stream(&st, &w).unwrap();
        for x in 0..d.width {
            for y in 0..d.height {
                for t in 0..d.frames {
                    for c in 0..d.channels {
                        prop_assert_eq!(
                            crossed.value(x, y, c, t),
                            st.value(x, y, c, t) * w.value(x, y, t)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn same_stream_weighting_needs_the_ablation_flag(map in arb_feature_map()) {
        let st = spatiotemporal_normalize(&map);
        let w = weight_map(&st);
        prop_assert!(cross_stream(&st, &w).is_err());
        prop_assert!(cpd_core::cross_stream_with(&st, &w, true).is_ok());
    }
}

/// A normalized map with dyadic values (multiples of 1/64) plus a trajectory
/// set over it. Dyadic sums of this size are exactly representable, so
/// pooled values admit exact rearrangement.
fn arb_dyadic_case() -> impl Strategy<Value = (NormalizedMap, TrajectorySet)> {
    (2usize..=6, 2usize..=6, 1usize..=4, 3usize..=6)
        .prop_flat_map(|(w, h, n, t)| {
            let count = w * h * n * t;
            (
                Just((w, h, n, t)),
                proptest::collection::vec(0u8..=64, count),
                2usize..=t,
                1usize..=5,
                any::<u64>(),
            )
        })
        .prop_map(|((w, h, n, t), grid, len, n_traj, seed)| {
            use rand::{Rng, SeedableRng};
            let dims = MapDims::new(w, h, n, t).unwrap();
            let video = VideoDims::new(w as u32 * 5, h as u32 * 5).unwrap();
            let values: Vec<f64> = grid.iter().map(|&k| k as f64 / 64.0).collect();
            let map = NormalizedMap::from_parts(
                dims,
                video,
                Stream::Spatial,
                NormMode::Spatiotemporal,
                values,
            )
            .unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let trajectories: Vec<Trajectory> = (0..n_traj)
                .map(|id| {
                    let t0 = rng.random_range(0..=t - len) as u32;
                    let points = (0..len)
                        .map(|l| TrajectoryPoint {
                            x: rng.random_range(0..video.width),
                            y: rng.random_range(0..video.height),
                            t: t0 + l as u32,
                        })
                        .collect();
                    Trajectory::new(id, points).unwrap()
                })
                .collect();
            let set = TrajectorySet::new(video, t, trajectories).unwrap();
            (map, set)
        })
}

proptest! {
    #[test]
    fn pooled_descriptors_respect_their_bounds((map, set) in arb_dyadic_case()) {
        let other = rebuild_raw(&map);
        let other = FeatureMap::new(map.dims(), map.video(), Stream::Temporal, other.data().to_vec()).unwrap();
        let w = weight_map(&spatiotemporal_normalize(&other));
        let n = map.dims().channels as f64;
        for traj in set.trajectories() {
            let l = traj.len() as f64;
            let tdd = pool_tdd(traj, &map, &set).unwrap();
            prop_assert!(tdd.values.iter().all(|v| (0.0..=l).contains(v)));
            let cpd = pool_cpd_weighted(traj, &map, &w, &set).unwrap();
            prop_assert!(cpd.values.iter().all(|v| (0.0..=l * n).contains(v)));
        }
    }

    #[test]
    fn weighted_and_premultiplied_routes_agree_bitwise((map, set) in arb_dyadic_case()) {
        let other = FeatureMap::new(map.dims(), map.video(), Stream::Temporal, map.data().to_vec()).unwrap();
        let w = weight_map(&spatiotemporal_normalize(&other));
        let crossed = cross_stream(&map, &w).unwrap();
        for traj in set.trajectories() {
            let weighted = pool_cpd_weighted(traj, &map, &w, &set).unwrap();
            let direct = pool_cpd_direct(traj, &crossed, &set).unwrap();
            prop_assert_eq!(weighted.values, direct.values);
        }
    }

    #[test]
    fn splicing_a_trajectory_splits_its_descriptor_exactly((map, set) in arb_dyadic_case()) {
        for traj in set.trajectories() {
            if traj.len() < 2 {
                continue;
            }
            let points = traj.points();
            let cut = points.len() / 2;
            let head = Trajectory::new(traj.id(), points[..cut].to_vec()).unwrap();
            let tail = Trajectory::new(traj.id(), points[cut..].to_vec()).unwrap();
            let full = pool_tdd(traj, &map, &set).unwrap();
            let a = pool_tdd(&head, &map, &set).unwrap();
            let b = pool_tdd(&tail, &map, &set).unwrap();
            for ((f, x), y) in full.values.iter().zip(&a.values).zip(&b.values) {
                // Dyadic values make each partial sum exact, so the split
                // re-associates without rounding.
                prop_assert_eq!(*f, x + y);
            }
        }
    }
}

/// Dyadic descriptor rows and a dyadic centroid codebook: every VLAD
/// residual and running sum is exactly representable.
fn arb_dyadic_vlad() -> impl Strategy<Value = (Matrix, KmeansModel)> {
    (1usize..=3, 2usize..=4, 1usize..=12)
        .prop_flat_map(|(dim, k, rows)| {
            (
                Just((dim, k, rows)),
                proptest::collection::vec(-128i16..=128, rows * dim),
                proptest::collection::vec(-128i16..=128, k * dim),
            )
        })
        .prop_map(|((dim, k, rows), desc, cents)| {
            let mut m = Matrix::new(dim);
            for r in 0..rows {
                let row: Vec<f64> = desc[r * dim..(r + 1) * dim]
                    .iter()
                    .map(|&v| v as f64 / 16.0)
                    .collect();
                m.push_row(&row);
            }
            let mut c = Matrix::new(dim);
            for r in 0..k {
                let row: Vec<f64> = cents[r * dim..(r + 1) * dim]
                    .iter()
                    .map(|&v| v as f64 / 16.0)
                    .collect();
                c.push_row(&row);
            }
            (m, KmeansModel::new(c).unwrap())
        })
}

proptest! {
    #[test]
    fn vlad_residuals_account_for_every_descriptor((descriptors, model) in arb_dyadic_vlad()) {
        let v = vlad_encode(&model, &descriptors).unwrap();
        let dim = descriptors.cols();
        // Sum of residual blocks plus assigned-centroid sums must equal the
        // plain descriptor sum, dimension by dimension.
        for d in 0..dim {
            let mut residual_total = 0.0;
            for k in 0..model.k() {
                residual_total += v[k * dim + d];
            }
            let mut centroid_total = 0.0;
            let mut data_total = 0.0;
            for row in descriptors.iter_rows() {
                centroid_total += model.centroids().row(model.assign(row))[d];
                data_total += row[d];
            }
            prop_assert_eq!(residual_total + centroid_total, data_total);
        }
    }

    #[test]
    fn assignment_prefers_the_lowest_index_on_ties((descriptors, model) in arb_dyadic_vlad()) {
        for row in descriptors.iter_rows() {
            let assigned = model.assign(row);
            let dist = |c: &[f64]| -> f64 {
                c.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum()
            };
            let best = dist(model.centroids().row(assigned));
            for k in 0..assigned {
                prop_assert!(dist(model.centroids().row(k)) > best);
            }
            for k in 0..model.k() {
                prop_assert!(dist(model.centroids().row(k)) >= best);
            }
        }
    }
}

proptest! {
    #[test]
    fn postnormalized_vectors_have_unit_norm_or_stay_zero(v in proptest::collection::vec(-100.0f64..100.0, 1..40), zero in any::<bool>()) {
        let v = if zero { vec![0.0; v.len()] } else { v };
        let out = postnormalize(&v);
        let norm: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.iter().all(|&x| x == 0.0) {
            prop_assert!(out.iter().all(|&x| x == 0.0));
        } else {
            prop_assert!((norm - 1.0).abs() < 1e-12);
            for (o, i) in out.iter().zip(&v) {
                prop_assert_eq!(o.signum() * i.signum() >= 0.0, true);
            }
        }
    }

    #[test]
    fn score_fusion_is_order_insensitive(
        rows in 1usize..=6,
        classes in 2usize..=4,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut make = |p: &str| {
            let mut m = Matrix::new(classes);
            for _ in 0..rows {
                let row: Vec<f64> = (0..classes).map(|_| rng.random_range(-4.0..4.0)).collect();
                m.push_row(&row);
            }
            ScoreMatrix {
                class_labels: (0..classes as u32).collect(),
                scores: m,
                provenance: p.to_string(),
            }
        };
        let a = make("a");
        let b = make("b");
        let ab = fuse_scores(&[a.clone(), b.clone()]).unwrap();
        let ba = fuse_scores(&[b, a]).unwrap();
        prop_assert_eq!(ab.scores.data(), ba.scores.data());
    }

    #[test]
    fn prediction_breaks_ties_toward_the_lowest_label(
        classes in 2usize..=5,
        rows in 1usize..=5,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u32> = (0..classes as u32).map(|c| c * 3).collect();
        let mut m = Matrix::new(classes);
        for _ in 0..rows {
            // Quantized scores force frequent exact ties.
            let row: Vec<f64> = (0..classes).map(|_| rng.random_range(-1i32..=1) as f64).collect();
            m.push_row(&row);
        }
        let scores = ScoreMatrix {
            class_labels: labels.clone(),
            scores: m,
            provenance: "ties".into(),
        };
        let preds = predict(&scores);
        for (r, &p) in preds.iter().enumerate() {
            let row = scores.scores.row(r);
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let expect = labels[row.iter().position(|&s| s == best).unwrap()];
            prop_assert_eq!(p, expect);
        }
    }

    #[test]
    fn subsampling_preserves_row_order(rows in 1usize..=40, cap in 1usize..=40, seed in any::<u64>()) {
        let mut m = Matrix::new(2);
        for i in 0..rows {
            m.push_row(&[i as f64, (i * i) as f64]);
        }
        let s = subsample_rows(&m, cap, seed).unwrap();
        prop_assert_eq!(s.rows(), rows.min(cap));
        // Row ids must appear in strictly increasing order: the subsample
        // keeps the original ordering.
        let ids: Vec<f64> = s.iter_rows().map(|r| r[0]).collect();
        for pair in ids.windows(2) {
            prop_assert!(pair[0] < pair[1]);
        }
        if cap >= rows {
            prop_assert_eq!(s.data(), m.data());
        }
    }
}

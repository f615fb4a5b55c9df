//! Randomized invariant checks over small generated datasets.

use std::collections::HashSet;

use ndarray::Array2;
use proptest::prelude::*;

use rebpr::interactions::InteractionDataset;
use rebpr::metrics::{evaluate, rank_items, Correlation};
use rebpr::nullmodel::{bin_observed, bin_sample, rewire, sample_null, significance_grid, BinBoundaries};
use rebpr::recmodels::{ln_sigmoid, sigmoid, softplus, ScoreSnapshot};
use rebpr::training::{samples_per_user, triplet_weight, ReweightConfig, Variant};
use rebpr::Quadrant;

/// Random small dataset: each (user, item) cell is absent, a train edge, or
/// a test edge, so the splits are disjoint by construction. At least one
/// train edge is always present.
fn small_dataset(max_n: usize, max_m: usize) -> impl Strategy<Value = InteractionDataset> {
    (2..=max_n, 2..=max_m)
        .prop_flat_map(|(n, m)| {
            (
                Just((n, m)),
                proptest::collection::vec(0u8..4, n * m),
            )
        })
        .prop_map(|((n, m), cells)| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for u in 0..n {
                for i in 0..m {
                    match cells[u * m + i] {
                        1 | 2 => train.push((u as u32, i as u32)),
                        3 => test.push((u as u32, i as u32)),
                        _ => {}
                    }
                }
            }
            if train.is_empty() {
                test.retain(|&e| e != (0, 0));
                train.push((0, 0));
            }
            InteractionDataset::from_dense_edges(n, m, train, test).expect("valid by construction")
        })
}

/// Embeddings on a coarse quarter-integer grid so that distinct dot products
/// stay far enough apart that monotone transforms cannot collapse them.
fn coarse_embeddings(rows: usize, dim: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-8i8..=8, rows * dim).prop_map(move |vals| {
        Array2::from_shape_vec((rows, dim), vals.into_iter().map(|v| v as f64 / 4.0).collect())
            .expect("shape matches")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // ---------------------------------------------------------------- budgets

    #[test]
    fn alpha_one_budgets_equal_degrees(ds in small_dataset(8, 8)) {
        let plan = samples_per_user(&ds, 1.0).unwrap();
        prop_assert_eq!(plan.per_user(), ds.user_degrees());
    }

    #[test]
    fn budgets_round_to_total_degree(ds in small_dataset(8, 8), alpha in 0.0f64..=1.0) {
        let plan = samples_per_user(&ds, alpha).unwrap();
        let total: i64 = plan.per_user().iter().map(|&s| s as i64).sum();
        let degree_total: i64 = ds.user_degrees().iter().map(|&d| d as i64).sum();
        // each budget is a rounded share, so the sum drifts < 1/2 per user
        let slack = (ds.num_users() as i64 + 1) / 2;
        prop_assert!((total - degree_total).abs() <= slack,
            "budgets sum {} vs degrees {}", total, degree_total);
        for (u, &s) in plan.per_user().iter().enumerate() {
            if ds.user_degree(u as u32) == 0 {
                prop_assert_eq!(s, 0, "inactive user {} got a budget", u);
            }
        }
    }

    #[test]
    fn budgets_are_monotone_in_degree(ds in small_dataset(8, 8), alpha in 0.0f64..=1.0) {
        let plan = samples_per_user(&ds, alpha).unwrap();
        let n = ds.num_users() as u32;
        for u in 0..n {
            for v in 0..n {
                if ds.user_degree(u) >= ds.user_degree(v) {
                    prop_assert!(plan.budget(u) >= plan.budget(v));
                }
            }
        }
    }

    // ----------------------------------------------------------- reweighting

    #[test]
    fn triplet_weights_positive_and_monotone(ds in small_dataset(6, 8), beta in -3.0f64..=0.0) {
        let cfg = ReweightConfig::ui(0.5, beta, 1, 7).unwrap();
        let mut by_degree: Vec<(u32, f64)> = Vec::new();
        for &(u, i) in ds.train_edges() {
            let w = triplet_weight(&cfg, &ds, rebpr::Triplet { u, i, j: 0 });
            prop_assert!(w.is_finite() && w > 0.0, "weight {w}");
            by_degree.push((ds.item_degree(i), w));
        }
        // beta <= 0: more popular positives never weigh more
        for &(da, wa) in &by_degree {
            for &(db, wb) in &by_degree {
                if da > db {
                    prop_assert!(wa <= wb + 1e-12);
                }
            }
        }
        // vanilla keeps a flat weight regardless of the dataset
        let flat = ReweightConfig::vanilla(1, 7);
        for &(u, i) in ds.train_edges() {
            prop_assert_eq!(triplet_weight(&flat, &ds, rebpr::Triplet { u, i, j: 0 }), 1.0);
        }
    }

    #[test]
    fn only_user_weight_cancels_budget(ds in small_dataset(6, 8)) {
        let cfg = ReweightConfig::only_user(1, 7);
        let plan = samples_per_user(&ds, cfg.alpha).unwrap();
        for &(u, i) in ds.train_edges() {
            let w = triplet_weight(&cfg, &ds, rebpr::Triplet { u, i, j: 0 });
            // budget * weight = d_u * (1/d_u) = 1 for every active user
            prop_assert!((plan.budget(u) as f64 * w - 1.0).abs() < 1e-12);
        }
    }

    // -------------------------------------------------------------- rewiring

    #[test]
    fn rewiring_preserves_degrees_and_simplicity(
        ds in small_dataset(6, 8),
        swaps in 0u64..40,
        seed in 0u64..1000,
    ) {
        let sample = rewire(&ds, swaps, seed);
        prop_assert_eq!(sample.edges().len(), ds.train_edges().len());
        let mut du = vec![0u32; ds.num_users()];
        let mut di = vec![0u32; ds.num_items()];
        let mut seen = HashSet::new();
        for &(u, i) in sample.edges() {
            du[u as usize] += 1;
            di[i as usize] += 1;
            prop_assert!(seen.insert((u, i)), "duplicate edge ({}, {})", u, i);
        }
        prop_assert_eq!(du.as_slice(), ds.user_degrees());
        prop_assert_eq!(di.as_slice(), ds.item_degrees());
    }

    #[test]
    fn rewiring_is_deterministic_per_seed(ds in small_dataset(6, 8), seed in 0u64..1000) {
        let a = rewire(&ds, 25, seed);
        let b = rewire(&ds, 25, seed);
        prop_assert_eq!(a.edges(), b.edges());
    }

    // ------------------------------------------------------------- quadrants

    #[test]
    fn quadrants_partition_active_users(ds in small_dataset(8, 8)) {
        let profiles = ds.assign_quadrants();
        let active: Vec<u32> = (0..ds.num_users() as u32)
            .filter(|&u| ds.user_degree(u) > 0)
            .collect();
        let assigned: Vec<u32> = profiles.iter().map(|p| p.user).collect();
        prop_assert_eq!(assigned, active, "every active user appears exactly once, in order");

        // recompute the boundary means independently and check the side
        if !profiles.is_empty() {
            let mean_act = profiles.iter().map(|p| p.activity as f64).sum::<f64>()
                / profiles.len() as f64;
            let mean_pref = profiles.iter().map(|p| p.pop_preference).sum::<f64>()
                / profiles.len() as f64;
            for p in &profiles {
                let expect_power = (p.activity as f64) > mean_act;
                let expect_niche = p.pop_preference < mean_pref;
                prop_assert_eq!(p.quadrant.is_power(), expect_power);
                prop_assert_eq!(p.quadrant.is_niche(), expect_niche);
            }
            let counts: [usize; 4] = Quadrant::ALL.map(|q| {
                profiles.iter().filter(|p| p.quadrant == q).count()
            });
            prop_assert_eq!(counts.iter().sum::<usize>(), profiles.len());
        }
    }

    #[test]
    fn ccdf_is_a_valid_tail_distribution(ds in small_dataset(8, 8)) {
        let group: Vec<u32> = (0..ds.num_users() as u32).collect();
        let ccdf = ds.activity_ccdf(&group).unwrap();
        prop_assert!(!ccdf.is_empty());
        prop_assert!((ccdf[0].1 - 1.0).abs() < 1e-12, "first fraction is 1");
        for w in ccdf.windows(2) {
            prop_assert!(w[0].0 < w[1].0, "degrees strictly ascending");
            prop_assert!(w[0].1 >= w[1].1, "fractions non-increasing");
        }
        let last = ccdf.last().unwrap();
        prop_assert!(last.1 > 0.0);
    }

    // ------------------------------------------------------ significance grid

    #[test]
    fn null_binning_conserves_users_and_devs_cancel(
        ds in small_dataset(8, 8),
        q in 2usize..5,
    ) {
        // quantile boundaries need at least one active user
        prop_assume!(ds.user_degrees().iter().any(|&d| d > 0));
        let bounds = BinBoundaries::from_observed(&ds, q).unwrap();
        let observed = bin_observed(&ds, &bounds);
        let observed_total: u64 = observed.iter().flatten().sum();
        let samples = sample_null(&ds, 5, 10, 99);
        let binned: Vec<Vec<Vec<u64>>> =
            samples.iter().map(|s| bin_sample(&ds, s, &bounds)).collect();
        for b in &binned {
            let t: u64 = b.iter().flatten().sum();
            prop_assert_eq!(t, observed_total, "each null sample bins the same users");
        }
        let grid = significance_grid(&observed, &binned).unwrap();
        let dev_sum: f64 = grid.norm_dev.iter().flatten().sum();
        prop_assert!(dev_sum.abs() < 1e-9, "normalized deviations cancel, got {dev_sum}");
        for (zrow, srow) in grid.z.iter().zip(&grid.significant) {
            for (&z, &sig) in zrow.iter().zip(srow) {
                if sig {
                    prop_assert!(z.abs() >= 2.0, "significant cell with |z| = {}", z.abs());
                }
                if z.is_nan() {
                    prop_assert!(!sig, "undefined z cannot be significant");
                }
            }
        }
    }

    // --------------------------------------------------------------- metrics

    #[test]
    fn metric_values_stay_in_range(
        ds in small_dataset(6, 8),
        seed_u in coarse_embeddings(6, 3),
        seed_i in coarse_embeddings(8, 3),
        k in 1usize..6,
    ) {
        let (n, m) = (ds.num_users(), ds.num_items());
        let snap = ScoreSnapshot::new(
            seed_u.slice(ndarray::s![..n, ..]).to_owned(),
            seed_i.slice(ndarray::s![..m, ..]).to_owned(),
            false,
        );
        let report = evaluate(&snap, &ds, k, Correlation::Pearson).unwrap();
        let blocks = std::iter::once(&report.overall).chain(report.quadrants.values());
        for b in blocks {
            for v in [b.recall, b.precision, b.ndcg] {
                if let Some(x) = v {
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&x), "ranking metric {x}");
                }
            }
            if let Some(bias) = b.bias {
                prop_assert!(bias.abs() <= 1.0 + 1e-9, "correlation {bias}");
            }
            if b.users == 0 {
                prop_assert_eq!(b.recall, None);
                prop_assert_eq!(b.bias, None);
            }
        }
        let quadrant_users: usize = report.quadrants.values().map(|b| b.users).sum();
        prop_assert_eq!(quadrant_users, report.evaluated_users);
    }

    #[test]
    fn rankings_ignore_monotone_score_transforms(
        ds in small_dataset(6, 8),
        seed_u in coarse_embeddings(6, 3),
        seed_i in coarse_embeddings(8, 3),
    ) {
        let (n, m) = (ds.num_users(), ds.num_items());
        let users = seed_u.slice(ndarray::s![..n, ..]).to_owned();
        let items = seed_i.slice(ndarray::s![..m, ..]).to_owned();
        let raw = ScoreSnapshot::new(users.clone(), items.clone(), false);
        let squashed = ScoreSnapshot::new(users.clone(), items.clone(), true);
        // doubling is exact in binary floating point, so ties are preserved
        let scaled = ScoreSnapshot::new(users.mapv(|v| v * 2.0), items, false);

        let base = evaluate(&raw, &ds, 3, Correlation::Pearson).unwrap();
        for other in [&squashed, &scaled] {
            let got = evaluate(other, &ds, 3, Correlation::Pearson).unwrap();
            prop_assert_eq!(&base.overall, &got.overall);
            prop_assert_eq!(&base.quadrants, &got.quadrants);
        }
    }

    #[test]
    fn topk_is_truncation_of_full_ranking(
        ds in small_dataset(6, 8),
        seed_u in coarse_embeddings(6, 3),
        seed_i in coarse_embeddings(8, 3),
    ) {
        let (n, m) = (ds.num_users(), ds.num_items());
        let snap = ScoreSnapshot::new(
            seed_u.slice(ndarray::s![..n, ..]).to_owned(),
            seed_i.slice(ndarray::s![..m, ..]).to_owned(),
            false,
        );
        let small = rank_items(&snap, &ds, 2).unwrap();
        let large = rank_items(&snap, &ds, 5).unwrap();
        prop_assert_eq!(small.users.len(), large.users.len());
        for (a, b) in small.users.iter().zip(&large.users) {
            prop_assert_eq!(a.user, b.user);
            prop_assert_eq!(a.rankable, b.rankable);
            let cut = a.topk.len().min(b.topk.len());
            prop_assert_eq!(&a.topk[..cut], &b.topk[..cut]);
            prop_assert_eq!(&a.test_positions, &b.test_positions, "positions do not depend on k");
            for &(_, pos) in &a.test_positions {
                prop_assert!((1..=a.rankable).contains(&pos));
            }
            // masked train items never appear in the top list
            for &i in &a.topk {
                prop_assert!(!ds.is_train_item(a.user, i));
            }
        }
    }

    // ------------------------------------------------------- scalar helpers

    #[test]
    fn sigmoid_softplus_identities(x in -30.0f64..30.0) {
        prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        // -ln sigmoid(x) is the softplus of the negated argument
        prop_assert!((softplus(-x) + ln_sigmoid(x)).abs() < 1e-9);
        prop_assert!(softplus(x) >= 0.0);
        prop_assert!((0.0..=1.0).contains(&sigmoid(x)));
    }
}

#[test]
fn variant_constructors_pin_canonical_exponents() {
    let v = ReweightConfig::vanilla(5, 1);
    assert_eq!((v.variant, v.alpha, v.beta), (Variant::Vanilla, 0.0, 0.0));
    let oi = ReweightConfig::only_item(5, 1);
    assert_eq!((oi.variant, oi.alpha, oi.beta), (Variant::OnlyItem, 0.0, -0.5));
    let ou = ReweightConfig::only_user(5, 1);
    assert_eq!((ou.variant, ou.alpha, ou.beta), (Variant::OnlyUser, 1.0, 0.0));
    assert!(ReweightConfig::ui(1.2, 0.0, 5, 1).is_err());
    assert!(ReweightConfig::ui(0.5, 0.25, 5, 1).is_err());
    assert!(ReweightConfig::ui(0.5, -0.25, 5, 1).is_ok());
}

use proptest::prelude::*;

use recsim_core::config::ExperimentConfig;
use recsim_core::engine::{run_deployment_phase, run_training_phase, ConsumptionLog};
use recsim_core::experiment::{aggregate, BinnedCurve};
use recsim_core::learner::standardize;
use recsim_core::metrics::{
    alt_homogeneity, homogeneity, metrics_report, pairwise_genre_distance, pooled_genre_variance,
    sorted_pairwise_distance,
};
use recsim_core::recommend::{
    binned_consumption_signal, recommend, skewed_top_pick_signal, svd_signal, svd_user_similarity, top_count,
    AlgorithmKind, RecParams, UserSimilarity,
};
use recsim_core::signals::FeatureMatrix;
use recsim_core::stats::pearson;
use recsim_core::world::{init_world, Item, User};

fn small_config(m: usize, rounds: usize) -> ExperimentConfig {
    ExperimentConfig { m, rounds, k_init: 4, k_new: 3, k_train: 2, n_runs: 1, ..ExperimentConfig::desk() }
}

fn kind() -> impl Strategy<Value = AlgorithmKind> {
    proptest::sample::select(AlgorithmKind::ALL.to_vec())
}

fn log_from(preferences: &[f64], genres: &[Vec<f64>]) -> ConsumptionLog {
    let rounds = genres[0].len();
    let mut items = Vec::new();
    let mut choices = vec![Vec::new(); rounds];
    for history in genres {
        for (t, &g) in history.iter().enumerate() {
            choices[t].push(items.len() as u32);
            items.push(Item { id: items.len() as u32, quality: 100.0, genre: g, birth_round: 0 });
        }
    }
    ConsumptionLog {
        run_id: 0,
        algorithm: AlgorithmKind::None,
        choices,
        items,
        users: preferences
            .iter()
            .enumerate()
            .map(|(j, &p)| User { id: j as u32, preference: p })
            .collect(),
    }
}

fn genre_table() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (2usize..8, 1usize..8).prop_flat_map(|(m, t)| {
        (
            prop::collection::vec(-8.0f64..8.0, m),
            prop::collection::vec(prop::collection::vec(-8.0f64..8.0, t), m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_conservation_and_availability(seed in any::<u64>(), kind in kind(), rounds in 1usize..5) {
        let config = small_config(6, rounds);
        let weights = run_training_phase(&config, kind, seed).unwrap().weights;
        let log = run_deployment_phase(&config, kind, &weights, seed, 0).unwrap();
        prop_assert_eq!(log.rounds(), rounds);
        prop_assert!(log.validate().is_ok());
        for (t, round) in log.choices.iter().enumerate() {
            prop_assert_eq!(round.len(), 6);
            for &item in round {
                // born no later than the round it was consumed in
                prop_assert!(log.items[item as usize].birth_round <= t + 1);
            }
        }
        prop_assert_eq!(log.events(), 6 * rounds);
    }

    #[test]
    fn deployment_is_deterministic(seed in any::<u64>(), kind in kind()) {
        let config = small_config(5, 3);
        let w1 = run_training_phase(&config, kind, seed).unwrap().weights;
        let w2 = run_training_phase(&config, kind, seed).unwrap().weights;
        prop_assert_eq!(&w1, &w2);
        let a = run_deployment_phase(&config, kind, &w1, seed, 0).unwrap();
        let b = run_deployment_phase(&config, kind, &w2, seed, 0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn shared_signals_are_identical_across_users(seed in any::<u64>(), kind in kind()) {
        prop_assume!(!kind.is_personalized());
        let state = init_world(&small_config(7, 2), seed).unwrap();
        let rec = recommend(&state, kind, &RecParams::default());
        for i in 0..state.items().len() as u32 {
            for j in 1..7u32 {
                prop_assert_eq!(rec.get(0, i), rec.get(j, i));
            }
        }
    }

    #[test]
    fn skewed_flags_exact_count(seed in any::<u64>(), pct in 1.0f64..=100.0, delta in 0.0f64..3.0) {
        let state = init_world(&ExperimentConfig { m: 5, k_init: 23, ..ExperimentConfig::desk() }, seed).unwrap();
        let n = state.items().len();
        let flags = skewed_top_pick_signal(state.items(), state.signals(), 5, delta, pct);
        for j in 0..5 {
            let picked: f64 = flags[j * n..(j + 1) * n].iter().sum();
            prop_assert_eq!(picked as usize, top_count(pct, n));
        }
    }

    #[test]
    fn binned_signal_ignores_bin_offsets(
        genres in prop::collection::vec(-5.0f64..5.0, 1..60),
        counts in prop::collection::vec(0u32..30, 60),
        shift in 1u32..50,
    ) {
        let items: Vec<Item> = genres
            .iter()
            .enumerate()
            .map(|(i, &g)| Item { id: i as u32, quality: 0.0, genre: g, birth_round: 0 })
            .collect();
        let counts = &counts[..items.len()];
        let shifted: Vec<u32> = counts.iter().map(|c| c + shift).collect();
        let a = binned_consumption_signal(&items, counts, 1.0);
        let b = binned_consumption_signal(&items, &shifted, 1.0);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn svd_signal_bounds(seed in any::<u64>(), picks in prop::collection::vec(0usize..100, 5 * 6)) {
        let config = ExperimentConfig { m: 5, k_init: 8, ..ExperimentConfig::desk() };
        let mut state = init_world(&config, seed).unwrap();
        for round in picks.chunks(5) {
            let choices: Vec<u32> = round
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let avail = state.available_items(j as u32);
                    avail[p % avail.len()]
                })
                .collect();
            state.commit(&choices).unwrap();
        }
        let sim = svd_user_similarity(state.ledger().histories(), 8, 16);
        // nonnegative similarities give a signal within [0, row sum]
        let clipped = UserSimilarity::from_fn(5, |a, b| sim.get(a, b).max(0.0));
        let signal = svd_signal(state.ledger(), 8, &clipped);
        for j in 0..5 {
            let row_sum: f64 = (0..5).map(|o| clipped.get(j, o)).sum();
            for i in 0..8 {
                let s = signal[j * 8 + i];
                prop_assert!(s >= 0.0 && s <= row_sum + 1e-12);
            }
        }
    }

    #[test]
    fn standardized_columns(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..80)) {
        let m = FeatureMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            rows.iter().enumerate().map(|(i, r)| ((0, i as u32), r.clone())).collect(),
        ).unwrap();
        let (z, stats) = standardize(m).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = z.column(c).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            if stats.0[c].degenerate {
                prop_assert!(col.iter().all(|&x| x == 0.0));
            } else {
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn variance_decomposes((prefs, genres) in genre_table()) {
        let log = log_from(&prefs, &genres);
        let report = metrics_report(&log).unwrap();
        let pooled = pooled_genre_variance(&log);
        prop_assert!((pooled - report.inter - report.intra).abs() <= 1e-9 * pooled.abs().max(1e-300));
    }

    #[test]
    fn diversity_under_translation_and_scaling((prefs, genres) in genre_table(), shift in -50.0f64..50.0, scale in 0.1f64..10.0) {
        let base = metrics_report(&log_from(&prefs, &genres)).unwrap();
        let moved: Vec<Vec<f64>> = genres.iter().map(|h| h.iter().map(|g| g + shift).collect()).collect();
        let scaled: Vec<Vec<f64>> = genres.iter().map(|h| h.iter().map(|g| g * scale).collect()).collect();
        let translated = metrics_report(&log_from(&prefs, &moved)).unwrap();
        let tol = |x: f64| 1e-7 * (1.0 + x.abs());
        prop_assert!((translated.inter - base.inter).abs() < tol(base.inter));
        prop_assert!((translated.intra - base.intra).abs() < tol(base.intra));
        if let (Some(a), Some(b)) = (base.filter_bubble, metrics_report(&log_from(&prefs, &scaled)).unwrap().filter_bubble) {
            prop_assume!(base.intra > 1e-6);
            prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn pairwise_distance_properties(
        a in prop::collection::vec(-20i32..20, 1..30),
        b in prop::collection::vec(-20i32..20, 1..30),
    ) {
        let mut a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let mut b: Vec<f64> = b.into_iter().map(f64::from).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let d = pairwise_genre_distance(&a, &b);
        prop_assert_eq!(d, pairwise_genre_distance(&b, &a));
        prop_assert_eq!(sorted_pairwise_distance(&a, &b), d);
        prop_assert_eq!(d == 0.0, a.iter().chain(&b).all(|x| *x == a[0]));
    }

    #[test]
    fn homogeneity_decreases(inter in 0.01f64..50.0, intra in 0.01f64..50.0, bump in 0.01f64..5.0) {
        prop_assert!(homogeneity(inter + bump, intra).unwrap() < homogeneity(inter, intra).unwrap());
        prop_assert!(homogeneity(inter, intra + bump).unwrap() < homogeneity(inter, intra).unwrap());
        prop_assert!(alt_homogeneity(inter + bump, intra).unwrap() < alt_homogeneity(inter, intra).unwrap());
        prop_assert!(alt_homogeneity(inter, intra + bump).unwrap() < alt_homogeneity(inter, intra).unwrap());
    }

    #[test]
    fn aggregation_ignores_seed_order(tables in prop::collection::vec(genre_table(), 2..6), rotate in 0usize..6) {
        let reports: Vec<_> = tables
            .iter()
            .enumerate()
            .map(|(r, (p, g))| {
                let mut log = log_from(p, g);
                log.run_id = r;
                metrics_report(&log).unwrap()
            })
            .collect();
        let mut shuffled = reports.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        prop_assert_eq!(aggregate(&reports), aggregate(&shuffled));
    }

    #[test]
    fn every_point_lands_in_one_bin(points in prop::collection::vec((-30.0f64..30.0, -5.0f64..5.0), 0..200)) {
        let curve = BinnedCurve::from_points(&points, 3.0);
        prop_assert_eq!(curve.total_count(), points.len());
        for bin in &curve.bins {
            prop_assert!((bin.hi - bin.lo - 3.0).abs() < 1e-12);
        }
        for &(x, _) in &points {
            let holders = curve.bins.iter().filter(|b| b.lo <= x && x < b.hi).count();
            prop_assert_eq!(holders, 1);
        }
    }

    #[test]
    fn pearson_affine(xs in prop::collection::vec(-10.0f64..10.0, 3..30), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        prop_assume!(a.abs() > 1e-3);
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x + i as f64).collect();
        if let Some(r) = pearson(&xs, &ys) {
            let moved: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
            let r2 = pearson(&xs, &moved).unwrap();
            prop_assert!((r2 - a.signum() * r).abs() < 1e-9);
        }
    }

    #[test]
    fn config_round_trip(m in 1usize..5000, rounds in 1usize..300, pct in 0.5f64..100.0, seed in 0u64..(i64::MAX as u64)) {
        let config = ExperimentConfig { m, rounds, k_top_pct: pct, master_seed: seed, ..ExperimentConfig::default() };
        let text = config.to_toml_string();
        prop_assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), config);
    }
}

#[test]
fn features_are_fixed_across_rounds() {
    let config = small_config(8, 3);
    let mut state = init_world(&config, 3).unwrap();
    let first: Vec<(u32, u32, f64, f64)> = (0..8u32)
        .flat_map(|j| {
            let s = state.signals();
            let u = state.users()[j as usize];
            state
                .available_items(j)
                .into_iter()
                .map(move |i| (j, i, s.quality(j, i), (u.preference - s.genre(j, i)).abs()))
                .collect::<Vec<_>>()
        })
        .collect();
    state.begin_round();
    state.spawn_items(3);
    let rec = recommend(&state, AlgorithmKind::None, &RecParams::default());
    let later = recsim_core::signals::build_features(&state, &rec).unwrap();
    for &(j, i, q, d) in &first {
        let row = later.keys().iter().position(|&k| k == (j, i)).unwrap();
        assert_eq!(later.row(row), &[q, d]);
    }
}

#[test]
fn worlds_hold_independent_items() {
    let config = small_config(4, 1);
    let deployment = init_world(&config, 9).unwrap();
    let users = deployment.shared_users();
    let training = recsim_core::world::WorldState::with_users(&config, 9, 1, users);
    assert_eq!(deployment.items().len(), training.items().len());
    assert!(deployment.items().iter().zip(training.items()).all(|(a, b)| a.genre != b.genre));
}

#[test]
fn schedule_does_not_change_results() {
    let config = small_config(10, 5);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| recsim_core::experiment::simulate_run(&config, AlgorithmKind::Hybrid, 0).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.log, b.log);
    assert_eq!(a.report, b.report);
}

mod common;

use common::*;
use otshift_core::*;
use proptest::prelude::*;
use rand::Rng;

fn exact_coupling(rng: &mut rand_chacha::ChaCha8Rng, n: usize, m: usize) -> (Coupling, CostMatrix) {
    let cost = CostMatrix::new(random_matrix(rng, n, m, 0.0, 1.0), MetricTag::SquaredEuclideanFeatures).unwrap();
    let a = rational_simplex(rng, n);
    let b = rational_simplex(rng, m);
    (solve_exact(&cost, &a, &b).unwrap().coupling, cost)
}

#[test]
fn class_mass_matches_double_loop() {
    let mut r = rng(31);
    let n = 30;
    let m = 25;
    let cost = CostMatrix::new(random_matrix(&mut r, n, m, 0.0, 1.0), MetricTag::SquaredEuclideanFeatures).unwrap();
    let a = rational_simplex(&mut r, n);
    let b = rational_simplex(&mut r, m);
    let plan = solve_sinkhorn(&cost, &a, &b, &SolverConfig::sinkhorn()).unwrap().coupling;
    let la: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let lb: Vec<usize> = (0..m).map(|j| (j * 7) % 4).collect();
    let mass = class_mass_matrix(&plan, &la, &lb).unwrap();
    let mut oracle = [[0.0f64; 4]; 3];
    for i in 0..n {
        for j in 0..m {
            oracle[la[i]][lb[j]] += plan.values()[(i, j)];
        }
    }
    for u in 0..3 {
        for v in 0..4 {
            assert!((mass.values[(u, v)] - oracle[u][v]).abs() <= 1e-12);
        }
        let row: f64 = (0..n).filter(|&i| la[i] == u).map(|i| plan.values().row(i).iter().sum::<f64>()).sum();
        assert!((mass.row_class_mass[u] - row).abs() <= 1e-12);
    }
    assert!((mass.total() - plan.total_mass()).abs() <= 1e-9);
    assert!(mass.vocabulary_mismatch());
}

#[test]
fn rank_pairs_matches_full_sort() {
    let mut r = rng(32);
    for _ in 0..50 {
        let (n, m) = (r.random_range(1..=20), r.random_range(1..=20));
        let (coupling, cost) = exact_coupling(&mut r, n, m);
        let k = r.random_range(1..=8);
        let floor = median_of_positive(coupling.values());
        let ranking = rank_pairs(&coupling, &cost, k, None).unwrap();
        let (closest, farthest) = brute_rank(coupling.values(), cost.values(), k, floor);
        assert_eq!(ranking.mass_floor, floor);
        assert_eq!(ranking.closest, closest);
        assert_eq!(ranking.farthest, farthest);
    }
}

#[test]
fn rank_pairs_tie_break_is_lexicographic() {
    // Uniform coupling and constant cost make every score equal.
    let plan = DenseMatrix::from_fn(3, 3, |_, _| 1.0 / 9.0);
    let coupling = Coupling::new(plan.clone(), &uniform(3), &uniform(3)).unwrap();
    let cost = CostMatrix::new(DenseMatrix::from_fn(3, 3, |_, _| 2.0), MetricTag::SquaredEuclideanFeatures).unwrap();
    let ranking = rank_pairs(&coupling, &cost, 4, None).unwrap();
    let order: Vec<(usize, usize)> = ranking.closest.iter().map(|p| (p.source_index, p.target_index)).collect();
    assert_eq!(order, vec![(0, 0), (0, 1), (0, 2), (1, 0)]);
    let order: Vec<(usize, usize)> = ranking.farthest.iter().map(|p| (p.source_index, p.target_index)).collect();
    assert_eq!(order, vec![(0, 0), (0, 1), (0, 2), (1, 0)]);
}

#[test]
fn rank_pairs_reports_empty_candidate_set() {
    let coupling = Coupling::new(DenseMatrix::from_rows(&[[1.0]]).unwrap(), &[1.0], &[1.0]).unwrap();
    let cost = CostMatrix::new(DenseMatrix::from_rows(&[[3.0]]).unwrap(), MetricTag::SquaredEuclideanFeatures).unwrap();
    let ranking = rank_pairs(&coupling, &cost, 2, Some(2.0)).unwrap();
    assert!(ranking.empty && ranking.closest.is_empty() && ranking.farthest.is_empty());
    assert!(matches!(rank_pairs(&coupling, &cost, 0, None), Err(Error::InvalidParameter { .. })));
}

#[test]
fn pairs_between_classes_equal_manual_composition() {
    let mut r = rng(33);
    let a = random_dataset(&mut r, 40, 3, 2);
    let b = random_dataset(&mut r, 35, 3, 3);
    // Force class sizes 15 and 12 for the selected classes.
    let la: Vec<usize> = (0..40).map(|i| usize::from(i >= 15)).collect();
    let lb: Vec<usize> = (0..35).map(|j| if j < 12 { 2 } else { j % 2 }).collect();
    let a = make_dataset(a.features().clone(), la, None).unwrap();
    let b = make_dataset(b.features().clone(), lb, None).unwrap();
    let config = SolverConfig::exact();
    let ranking = rank_pairs_between_classes(&a, &b, 0, 2, 4, &config).unwrap();

    let rows: Vec<usize> = (0..40).filter(|&i| a.labels()[i] == 0).collect();
    let cols: Vec<usize> = (0..35).filter(|&j| b.labels()[j] == 2).collect();
    assert_eq!((rows.len(), cols.len()), (15, 12));
    let fa = a.features().select_rows(&rows);
    let fb = b.features().select_rows(&cols);
    let brute = brute_squared_euclidean(&fa, &fb);
    let cost = CostMatrix::new(DenseMatrix::from_fn(15, 12, |i, j| brute[i][j]), MetricTag::SquaredEuclideanFeatures).unwrap();
    let plan = solve_exact(&cost, &uniform(15), &uniform(12)).unwrap().coupling;
    let (closest, farthest) = brute_rank(plan.values(), cost.values(), 4, median_of_positive(plan.values()));
    let lift = |ps: Vec<RankedPair>| -> Vec<(usize, usize, f64)> {
        ps.into_iter().map(|p| (rows[p.source_index], cols[p.target_index], p.score)).collect()
    };
    let got = |ps: &[RankedPair]| -> Vec<(usize, usize, f64)> { ps.iter().map(|p| (p.source_index, p.target_index, p.score)).collect() };
    let (ec, ef) = (lift(closest), lift(farthest));
    for (x, y) in got(&ranking.closest).iter().zip(&ec).chain(got(&ranking.farthest).iter().zip(&ef)) {
        assert_eq!((x.0, x.1), (y.0, y.1));
        assert!((x.2 - y.2).abs() <= 1e-12 * y.2.abs().max(1e-300));
    }
    assert_eq!(ranking.closest.len(), ec.len());
}

#[test]
fn pairs_between_identical_classes_have_zero_cost() {
    let ds = make_gaussian_blobs(3, 10, 4, 1.0, 0.1, 2).unwrap();
    let ranking = rank_pairs_between_classes(&ds, &ds, 1, 1, 3, &SolverConfig::exact()).unwrap();
    assert!(ranking.closest.iter().all(|p| p.ground_cost == 0.0));
}

/// `(E[D], E[D²])` for `D = clamp(x + σZ, 0, 1) - x` by quadrature.
fn clamped_noise_moments(x: f64, sigma: f64) -> (f64, f64) {
    let steps = 4000;
    let (lo, hi) = (-8.0f64, 8.0f64);
    let h = (hi - lo) / steps as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for s in 0..=steps {
        let z = lo + s as f64 * h;
        let w = if s == 0 || s == steps { 0.5 } else { 1.0 } * h * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let dev = (x + sigma * z).clamp(0.0, 1.0) - x;
        m1 += w * dev;
        m2 += w * dev * dev;
    }
    (m1, m2)
}

#[test]
fn noise_deviation_matches_clamped_gaussian() {
    let clean = make_gaussian_blobs(2, 1000, 10, 1.0, 0.05, 8).unwrap();
    let noisy = apply_gaussian_noise_shift(&clean, 0, 0.5, 9).unwrap();
    let rows = clean.class_indices(0);
    let (mut count, mut sum, mut sum_sq) = (0.0, 0.0, 0.0);
    let (mut p1, mut p2) = (0.0, 0.0);
    for &i in &rows {
        for k in 0..10 {
            let x = clean.features()[(i, k)];
            let dev = noisy.features()[(i, k)] - x;
            count += 1.0;
            sum += dev;
            sum_sq += dev * dev;
            let (e1, e2) = clamped_noise_moments(x, 0.5);
            p1 += e1;
            p2 += e2;
        }
    }
    assert!(count >= 1e4);
    let empirical = (sum_sq / count - (sum / count).powi(2)).sqrt();
    let predicted = (p2 / count - (p1 / count).powi(2)).sqrt();
    assert!((empirical - predicted).abs() <= 0.1 * predicted, "{empirical} vs {predicted}");
    for i in clean.class_indices(1) {
        assert_eq!(clean.features().row(i), noisy.features().row(i));
    }
    assert!(noisy.features().as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
}

#[test]
fn noise_is_seeded() {
    let clean = make_gaussian_blobs(2, 20, 5, 1.0, 0.1, 1).unwrap();
    let x = apply_gaussian_noise_shift(&clean, 1, 0.3, 4).unwrap();
    let y = apply_gaussian_noise_shift(&clean, 1, 0.3, 4).unwrap();
    let z = apply_gaussian_noise_shift(&clean, 1, 0.3, 5).unwrap();
    assert_eq!(x, y);
    assert_ne!(x, z);
    assert!(matches!(apply_gaussian_noise_shift(&clean, 2, 0.3, 4), Err(Error::UnknownClass { .. })));
}

#[test]
fn independent_resample_has_no_mismatches() {
    for seed in 0..3 {
        let a = make_gaussian_blobs(4, 40, 10, 1.0, 0.03, seed).unwrap();
        // Same centers: the center draws come first from the same seed.
        let b = resample_same_centers(4, 40, 10, 1.0, 0.03, seed, 1000 + seed);
        let analysis = analyze_shift(&a, &b, &AnalysisConfig::default()).unwrap();
        assert!(analysis.mismatches.is_empty());
        assert!(analysis.class_mass.diagonal_fractions().iter().all(|&f| f > 0.9));
    }
}

/// Fresh samples around the centers `make_gaussian_blobs(.., center_seed)`
/// would use, recovered from its zero-spread output.
fn resample_same_centers(k: usize, per: usize, d: usize, scale: f64, spread: f64, center_seed: u64, seed: u64) -> LabeledDataset {
    let centers = make_gaussian_blobs(k, 2, d, scale, 0.0, center_seed).unwrap();
    let mut r = rng(seed);
    let features = DenseMatrix::from_fn(k * per, d, |i, j| {
        let c = centers.features()[((i / per) * 2, j)];
        let z: f64 = r.sample(rand_distr::StandardNormal);
        (c + spread * z).clamp(0.0, 1.0)
    });
    make_dataset(features, (0..k * per).map(|i| i / per).collect(), None).unwrap()
}

#[test]
fn shift_monotonicity_on_blobs() {
    let base = make_gaussian_blobs(4, 50, 10, 1.0, 0.05, 0).unwrap();
    let mut last_value = f64::NEG_INFINITY;
    let mut last_diag = f64::INFINITY;
    for sigma in [0.0, 0.25, 0.5, 1.0] {
        let target = apply_gaussian_noise_shift(&base, 0, sigma, 100).unwrap();
        let analysis = analyze_shift(&base, &target, &AnalysisConfig::default()).unwrap();
        let diag = analysis.class_mass.diagonal_fractions()[0];
        assert!(analysis.otdd_squared() >= last_value - 1e-12);
        assert!(diag <= last_diag + 1e-12);
        assert!((analysis.class_mass.total() - analysis.solution.coupling.total_mass()).abs() <= 1e-9);
        last_value = analysis.otdd_squared();
        last_diag = diag;
    }
}

#[test]
fn mismatch_fixture_reassigning_class_one() {
    // Source class 1 holds 0.10 of the mass and sends 0.08 of it to class 8.
    let mut values = DenseMatrix::zeros(10, 10);
    for u in 0..10 {
        values[(u, u)] = 0.1;
    }
    values[(1, 1)] = 0.02;
    values[(1, 8)] = 0.08;
    let row_class_mass = values.row_sums();
    let mass = ClassMassMatrix { values, row_class_mass };
    let found = detect_mismatches(&mass, 0.5).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!((found[0].source_class, found[0].target_class), (1, 8));
    assert!((found[0].mass_fraction - 0.8).abs() < 1e-12);
    assert!((found[0].diagonal_fraction - 0.2).abs() < 1e-12);
}

fn coupling_strategy() -> impl Strategy<Value = (DenseMatrix, Vec<usize>, Vec<usize>)> {
    (1usize..10, 1usize..10, any::<u64>()).prop_map(|(n, m, seed)| {
        let mut r = rng(seed);
        let raw = random_matrix(&mut r, n, m, 0.0, 1.0);
        let total = raw.sum();
        let plan = DenseMatrix::from_fn(n, m, |i, j| raw[(i, j)] / total);
        let la = (0..n).map(|_| r.random_range(0..3)).collect();
        let lb = (0..m).map(|_| r.random_range(0..3)).collect();
        (plan, la, lb)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn class_mass_conserves_total((plan, la, lb) in coupling_strategy()) {
        let a = plan.row_sums();
        let b = plan.col_sums();
        let coupling = Coupling::new(plan, &a, &b).unwrap();
        let mass = class_mass_matrix(&coupling, &la, &lb).unwrap();
        prop_assert!((mass.total() - coupling.total_mass()).abs() <= 1e-9);
        prop_assert!(mass.values.as_slice().iter().all(|&v| v >= 0.0));
        for m in detect_mismatches(&mass, 0.3).unwrap() {
            prop_assert!(m.source_class != m.target_class);
            prop_assert!(m.mass_fraction >= 0.3 && m.mass_fraction <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn ranking_lists_are_sorted_and_pass_floor((plan, _la, _lb) in coupling_strategy(), k in 1usize..6) {
        let a = plan.row_sums();
        let b = plan.col_sums();
        let coupling = Coupling::new(plan.clone(), &a, &b).unwrap();
        let cost = CostMatrix::new(DenseMatrix::from_fn(plan.rows(), plan.cols(), |i, j| ((i * 31 + j * 17) % 7) as f64), MetricTag::SquaredEuclideanFeatures).unwrap();
        let ranking = rank_pairs(&coupling, &cost, k, None).unwrap();
        prop_assert!(ranking.closest.windows(2).all(|w| w[0].score <= w[1].score));
        prop_assert!(ranking.farthest.windows(2).all(|w| w[0].score >= w[1].score));
        for p in ranking.closest.iter().chain(&ranking.farthest) {
            prop_assert!(p.coupling_mass >= ranking.mass_floor);
            prop_assert!((p.score - p.ground_cost * p.coupling_mass).abs() <= 1e-12 * p.score.abs());
        }
    }
}

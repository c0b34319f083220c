mod oracle;

use crowdfit_core::{fit_least_squares, model_r2, predict_outcome, Grid};
use oracle::{ols_normal_equations, rel_err, ridge_exact};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Integer data: answers in the encoded range −3..=3, outcomes in −20..=20.
fn integer_instance(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Vec<Vec<i64>>, Vec<i64>) {
    let a = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(-3..=3)).collect())
        .collect();
    let b = (0..n).map(|_| rng.random_range(-20..=20)).collect();
    (a, b)
}

fn to_grid(a: &[Vec<i64>]) -> Grid<f64> {
    let rows: Vec<Vec<f64>> = a
        .iter()
        .map(|r| r.iter().map(|v| *v as f64).collect())
        .collect();
    Grid::from_rows(&rows).unwrap()
}

fn to_f64(b: &[i64]) -> Vec<f64> {
    b.iter().map(|v| *v as f64).collect()
}

#[test]
fn ols_matches_normal_equations_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2012);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 500 {
        let k = rng.random_range(1..=5);
        let n = rng.random_range(k + 1..=20);
        let (a, b) = integer_instance(&mut rng, n, k);
        let Some(want) = ols_normal_equations(&a, &b) else {
            continue;
        };
        let got = fit_least_squares(&to_grid(&a), &to_f64(&b), 0.0).unwrap();
        worst = worst.max(rel_err(&got, &want));
        checked += 1;
    }
    assert!(worst <= 1e-9, "worst relative error {worst:e}");
}

#[test]
fn ridge_matches_exact_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let k = rng.random_range(1..=4);
        let n = rng.random_range(2..=12);
        let (a, b) = integer_instance(&mut rng, n, k);
        for lambda in [1, 10] {
            let want = ridge_exact(&a, &b, lambda).unwrap();
            let got = fit_least_squares(&to_grid(&a), &to_f64(&b), lambda as f64).unwrap();
            assert!(rel_err(&got, &want) <= 1e-9, "n={n} k={k} lambda={lambda}");
        }
    }
}

fn slope_norm(c: &[f64]) -> f64 {
    c[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn ridge_shrinks_slopes_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let n = rng.random_range(3..=30);
        let k = rng.random_range(1..=8);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a = Grid::from_rows(&rows).unwrap();
        let norms: Vec<f64> = [0.0, 0.1, 1.0, 10.0]
            .iter()
            .map(|l| slope_norm(&fit_least_squares(&a, &b, *l).unwrap()))
            .collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{norms:?}");
        }
    }
}

#[test]
fn more_columns_than_rows_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..15).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let b: Vec<f64> = (0..6).map(|i| i as f64 * 1.5 - 2.0).collect();
    let a = Grid::from_rows(&rows).unwrap();
    let c = fit_least_squares(&a, &b, 0.0).unwrap();
    assert!((model_r2(&c, &a, &b).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn uninformative_columns_get_zero_weight() {
    // Column 1 is all zeros (nobody answered), column 2 is constant.
    let a = Grid::from_rows(&[
        vec![1.0, 0.0, 2.0],
        vec![2.0, 0.0, 2.0],
        vec![4.0, 0.0, 2.0],
    ])
    .unwrap();
    let b = [3.0, 5.0, 9.0];
    let c = fit_least_squares(&a, &b, 0.0).unwrap();
    assert_eq!(c[2], 0.0);
    assert!(c[3].abs() < 1e-12);
    assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
}

#[test]
fn unanswered_participant_gets_the_intercept_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 1..=6 {
        let c: Vec<f64> = (0..=k).map(|_| rng.random_range(-100.0..100.0)).collect();
        let row: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let none = vec![false; k];
        assert_eq!(
            predict_outcome(&c, &vec![0.0; k], &none).unwrap().to_bits(),
            c[0].to_bits()
        );
        assert_eq!(
            predict_outcome(&c, &row, &none).unwrap().to_bits(),
            c[0].to_bits()
        );
        // Zero-filled unanswered cells add nothing to an answered prefix.
        let mut mask = none.clone();
        mask[0] = true;
        let mut zeroed = vec![0.0; k];
        zeroed[0] = row[0];
        let with_zeros = predict_outcome(&c, &zeroed, &vec![true; k]).unwrap();
        let masked = predict_outcome(&c, &row, &mask).unwrap();
        assert_eq!(with_zeros.to_bits(), masked.to_bits());
    }
}

use std::time::Instant;

use photonwire::calibrate::{
    build_problem, fit, objective_and_grad, CalibrationProblem, FitOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAU: f64 = 0.02;
const A: f64 = 6.4;

fn paper_grid() -> Vec<f64> {
    (0..201).map(|j| 0.05 * j as f64).collect()
}

/// 31 evenly spaced powers; the largest puts the mean sample at the grid end.
fn paper_powers() -> Vec<f64> {
    let top = 10.0 / TAU;
    (0..31).map(|i| top * i as f64 / 30.0).collect()
}

fn saturating(x: f64) -> f64 {
    // smoothed min(x, 2.4) with C(0) = 0
    let k = 0.2;
    let soft = |x: f64| -k * ((-x / k).exp() + (-2.4 / k).exp()).ln();
    soft(x) - soft(0.0)
}

fn synthetic(curve: impl Fn(f64) -> f64) -> CalibrationProblem {
    let grid = paper_grid();
    let powers = paper_powers();
    let zeros = vec![0.0; powers.len()];
    let mut p = build_problem(&powers, &grid, TAU, A, &zeros, &zeros).unwrap();
    let c: Vec<f64> = grid.iter().map(|&x| curve(x)).collect();
    let (m1, m2) = p.moments(&c);
    p.g1 = m1;
    p.g2 = m2.iter().map(|v| v.sqrt()).collect();
    p
}

#[test]
fn identity_data_fits_exactly() {
    let p = synthetic(|x| x);
    let r = fit(&p, &p.grid.clone(), FitOptions::default()).unwrap();
    assert!(r.residual < 1e-8, "{}", r.residual);
}

#[test]
fn saturating_curve_is_recovered() {
    let p = synthetic(saturating);
    let t = Instant::now();
    let r = fit(&p, &p.grid.clone(), FitOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let mass = p.column_mass();
    let mut worst: f64 = 0.0;
    for (j, &x) in p.grid.iter().enumerate() {
        if mass[j] > 1e-4 {
            worst = worst.max((r.values[j] - saturating(x)).abs());
        }
    }
    assert!(worst < 0.05, "max error {worst}");
    assert!(secs < 60.0);
}

#[test]
fn gradient_agrees_with_differences_at_random_points() {
    let mut p = synthetic(saturating);
    p.g1.iter_mut().for_each(|v| *v *= 1.05);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c: Vec<f64> = p
            .grid
            .iter()
            .map(|&x| saturating(x) + rng.random_range(-0.3..0.3))
            .collect();
        let o = objective_and_grad(&c, &p).unwrap();
        let j = rng.random_range(0..c.len());
        let h = 1e-6 * (1.0 + c[j].abs());
        let mut up = c.clone();
        up[j] += h;
        let mut dn = c.clone();
        dn[j] -= h;
        let fd = (objective_and_grad(&up, &p).unwrap().value
            - objective_and_grad(&dn, &p).unwrap().value)
            / (2.0 * h);
        let scale = fd.abs().max(o.grad[j].abs());
        if scale > 1e-9 {
            worst = worst.max((fd - o.grad[j]).abs() / scale);
        }
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn paper_scale_runs_full_budget_quickly() {
    let p = synthetic(saturating);
    let t = Instant::now();
    let opts = FitOptions {
        tolerance: 0.0,
        ..FitOptions::default()
    };
    let r = fit(&p, &p.grid.clone(), opts).unwrap();
    assert!(t.elapsed().as_secs_f64() < 60.0);
    assert_eq!(p.rows(), 31);
    assert_eq!(p.cols(), 201);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    // the fitted means reproduce the data within the residual
    let (m1, _) = p.moments(&r.values);
    for (m, g) in m1.iter().zip(&p.g1) {
        assert!((m - g).powi(2) <= r.residual + 1e-15);
    }
    assert!(r.x_s > 2.0 && r.x_s < 10.0, "{}", r.x_s);
    assert!((r.l_max - 2.4).abs() < 0.1, "{}", r.l_max);
}

#[test]
fn appending_empty_grid_points_changes_nothing() {
    let powers: Vec<f64> = (0..31).map(|i| 0.5 * i as f64).collect();
    let grid = paper_grid();
    let mut longer = grid.clone();
    longer.extend((1..=40).map(|j| 10.0 + 0.05 * j as f64));
    let truth = |g: &[f64]| -> Vec<f64> { g.iter().map(|&x| saturating(x)).collect() };
    let zeros = vec![0.0; powers.len()];
    let mut short = build_problem(&powers, &grid, TAU, A, &zeros, &zeros).unwrap();
    let (m1, m2) = short.moments(&truth(&grid));
    short.g1 = m1.clone();
    short.g2 = m2.iter().map(|v| v.sqrt()).collect();
    let mut long = build_problem(&powers, &longer, TAU, A, &zeros, &zeros).unwrap();
    long.g1 = short.g1.clone();
    long.g2 = short.g2.clone();
    // the appended columns carry under 1e-6 mass at these powers
    let opts = FitOptions::default();
    let a = fit(&short, &grid, opts).unwrap();
    let b = fit(&long, &longer, opts).unwrap();
    let mass = short.column_mass();
    for j in 0..grid.len() {
        if mass[j] > 1e-4 {
            assert!(
                (a.values[j] - b.values[j]).abs() < 1e-3,
                "{j}: {} {}",
                a.values[j],
                b.values[j]
            );
        }
    }
}

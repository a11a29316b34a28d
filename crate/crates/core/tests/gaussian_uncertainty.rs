mod common;

use std::sync::Arc;

use common::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use robustexp::{linear_eval, robust_eval, GaussianFamily, GaussianFunction, ParamBox, TimeGrid};

fn grid(t: &[f64]) -> TimeGrid {
    TimeGrid::new(t.to_vec()).unwrap()
}

fn last(x: &[f64]) -> f64 {
    *x.last().unwrap()
}

#[test]
fn the_constant_one_integrates_to_one() {
    let mut r = rng(60);
    for _ in 0..10 {
        let n = r.gen_range(1..4);
        let mut t = values(&mut r, n, 0.1, 3.0);
        t.sort_by(f64::total_cmp);
        t.dedup();
        let mu = values(&mut r, t.len(), -1.0, 1.0);
        let sigma = values(&mut r, t.len(), 0.1, 1.0);
        let v = linear_eval(&grid(&t), &|_| 1.0, &mu, &sigma, 7).unwrap();
        assert!((v - 1.0).abs() <= 1e-13);
    }
}

#[test]
fn the_mean_is_exact_at_every_order() {
    for order in [1, 2, 5, 20] {
        let v = linear_eval(&grid(&[1.7]), &last, &[0.3], &[0.8], order).unwrap();
        assert!((v - 0.3 * 1.7).abs() <= 1e-14, "order {order}: {v}");
        let v = linear_eval(&grid(&[0.5, 2.0]), &last, &[0.3, -0.4], &[0.8, 0.2], order).unwrap();
        assert!((v - (0.3 * 0.5 - 0.4 * 1.5)).abs() <= 1e-14);
    }
}

#[test]
fn second_coordinate_mean_against_monte_carlo() {
    let (t1, t2) = (0.7, 1.9);
    let (mu, sigma) = ([0.5, -0.2], [0.6, 0.9]);
    let exact = mu[0] * t1 + mu[1] * (t2 - t1);
    let quad = linear_eval(&grid(&[t1, t2]), &last, &mu, &sigma, 3).unwrap();
    assert!((quad - exact).abs() <= 1e-14);

    let mut r = rng(61);
    let inc1 = Normal::new(mu[0] * t1, sigma[0] * t1.sqrt()).unwrap();
    let inc2 = Normal::new(mu[1] * (t2 - t1), sigma[1] * (t2 - t1).sqrt()).unwrap();
    let samples = 1_000_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        let x2 = inc1.sample(&mut r) + inc2.sample(&mut r);
        sum += x2;
        sq += x2 * x2;
    }
    let mean = sum / samples as f64;
    let sd = ((sq / samples as f64 - mean * mean) / samples as f64).sqrt();
    assert!((mean - quad).abs() <= 3.0 * sd, "MC {mean} +- {sd}, quadrature {quad}");
}

#[test]
fn robust_mean_sits_at_the_top_drift() {
    let pbox = ParamBox::new(-0.3, 0.45, 0.2, 0.5).unwrap();
    let t = 1.3;
    let v = robust_eval(&grid(&[t]), &last, &pbox, 4, 5, false).unwrap();
    assert!((v.value - 0.45 * t).abs() <= 1e-14);
    assert_eq!(v.argmax_mu, vec![0.45]);
    // grid oracle: the mean is increasing in mu on every grid point
    for i in 0..=20 {
        let m = -0.3 + 0.75 * i as f64 / 20.0;
        assert!(linear_eval(&grid(&[t]), &last, &[m], &[0.3], 4).unwrap() <= v.value + 1e-14);
    }
}

#[test]
fn robust_second_moment_sits_at_a_corner() {
    let t = 0.8;
    for (lo, hi) in [(-0.6, 0.2), (-0.1, 0.5), (0.1, 0.3)] {
        let pbox = ParamBox::new(lo, hi, 0.25, 0.7).unwrap();
        let sq = |x: &[f64]| last(x).powi(2);
        let v = robust_eval(&grid(&[t]), &sq, &pbox, 3, 6, false).unwrap();
        let closed = 0.7f64.powi(2) * t + f64::max(lo * lo, hi * hi) * t * t;
        assert!((v.value - closed).abs() <= 1e-13, "{} vs {closed}", v.value);
        let m = v.argmax_mu[0];
        assert!(m == lo || m == hi);
        assert_eq!(v.argmax_sigma, vec![0.7]);
        // fine grid oracle over the box from the closed form
        let mut best = f64::NEG_INFINITY;
        for i in 0..=50 {
            for j in 0..=50 {
                let mu = lo + (hi - lo) * i as f64 / 50.0;
                let s = 0.25 + 0.45 * j as f64 / 50.0;
                best = best.max(s * s * t + mu * mu * t * t);
            }
        }
        assert!((v.value - best).abs() <= 1e-13);
    }
}

#[test]
fn constants_are_constant_over_the_box() {
    let pbox = ParamBox::new(-1.0, 1.0, 0.1, 2.0).unwrap();
    let v = robust_eval(&grid(&[0.5, 1.0]), &|_| -2.5, &pbox, 3, 3, true).unwrap();
    assert!((v.value + 2.5).abs() <= 1e-13);
}

#[test]
fn marginal_and_lifted_means_agree() {
    let pbox = ParamBox::new(-0.2, 0.35, 0.1, 0.4).unwrap();
    let fam = GaussianFamily::new(pbox, 2.0, 10, 5, false).unwrap();
    let c = fam.consistency(&grid(&[0.6, 1.5]), &grid(&[0.6]), Arc::new(last), 1e-6).unwrap();
    assert!(c.pass);
    assert!((c.marginal.value - 0.35 * 0.6).abs() <= 1e-6);
    assert!((c.lifted.value - 0.35 * 0.6).abs() <= 1e-6);
}

#[test]
fn a_degenerate_box_is_consistent_for_polynomials() {
    let pbox = ParamBox::new(0.15, 0.15, 0.35, 0.35).unwrap();
    let order = 6;
    let fam = GaussianFamily::new(pbox, 3.0, order, 2, false).unwrap();
    // degree 5 < 2 * order in the kept coordinates
    let poly = GaussianFunction::Polynomial(vec![(1.0, vec![2, 3]), (-0.5, vec![1, 0]), (2.0, vec![0, 4])]);
    assert!(poly.degree().unwrap() < 2 * order as u32);
    let j = grid(&[0.4, 1.1, 2.5]);
    let k = grid(&[0.4, 2.5]);
    let f = Arc::new(move |x: &[f64]| poly.eval(x));
    let c = fam.consistency(&j, &k, f, 1e-10).unwrap();
    assert!(c.discrepancy <= 1e-10, "{c:?}");
}

#[test]
fn cosine_consistency_at_order_forty() {
    let pbox = ParamBox::new(-0.25, 0.4, 0.15, 0.45).unwrap();
    let cos = Arc::new(|x: &[f64]| last(x).cos());
    let fam = GaussianFamily::new(pbox, 2.0, 40, 9, true).unwrap();
    let c = fam.consistency(&grid(&[0.5, 1.0]), &grid(&[1.0]), cos, 1e-4).unwrap();
    assert!(c.pass, "{c:?}");
}

#[test]
fn inputs_are_validated() {
    assert!(ParamBox::new(0.5, 0.1, 0.1, 0.2).is_err());
    assert!(ParamBox::new(0.0, 0.1, 0.0, 0.2).is_err());
    assert!(TimeGrid::new(vec![1.0, 0.5]).is_err());
    assert!(TimeGrid::new(vec![]).is_err());
    let pbox = ParamBox::new(0.0, 0.1, 0.1, 0.2).unwrap();
    assert!(robust_eval(&grid(&[1.0]), &last, &pbox, 0, 3, false).is_err());
    assert!(robust_eval(&grid(&[1.0]), &last, &pbox, 3, 1, false).is_err());
    let fam = GaussianFamily::new(pbox, 1.0, 3, 3, false).unwrap();
    assert!(fam.eval(&grid(&[2.0]), &last).is_err());
}

//! Random instance generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustexp::{ExpectationModel, OneStepOperator, PenaltyModel, Scenario, StateSpace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn space(n: usize) -> StateSpace {
    StateSpace::indexed(n).unwrap()
}

/// A random probability vector; about one weight in five is zeroed.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let keep = rng.gen_range(0..n);
    let mut w: Vec<f64> =
        (0..n).map(|i| if i != keep && rng.gen_bool(0.2) { 0.0 } else { -rng.gen::<f64>().max(1e-12).ln() }).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

pub fn values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

pub fn penalty_model(rng: &mut ChaCha8Rng, s: &StateSpace, k: usize, sublinear: bool) -> PenaltyModel {
    let scenarios: Vec<Scenario> = (0..k).map(|_| Scenario::new(s, simplex(rng, s.len())).unwrap()).collect();
    let mut penalties: Vec<f64> = (0..k).map(|_| if sublinear { 0.0 } else { rng.gen_range(0.0..2.0) }).collect();
    penalties[rng.gen_range(0..k)] = 0.0;
    PenaltyModel::new(scenarios, penalties).unwrap()
}

pub fn model(pm: PenaltyModel) -> ExpectationModel {
    ExpectationModel::Penalty(pm)
}

/// `max_k (sum_i mu_k[i] x[i] - a_k)` with a plain loop.
pub fn brute_max(pm: &PenaltyModel, x: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (mu, a) in pm.scenarios().iter().zip(pm.penalties()) {
        let mut s = 0.0;
        for (w, v) in mu.weights().iter().zip(x) {
            s += w * v;
        }
        best = best.max(s - a);
    }
    best
}

pub fn stochastic_matrix(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| simplex(rng, n)).collect()
}

pub fn sublinear_operator(rng: &mut ChaCha8Rng, s: &StateSpace, m: usize) -> (OneStepOperator, Vec<Vec<Vec<f64>>>) {
    let mats: Vec<Vec<Vec<f64>>> = (0..m).map(|_| stochastic_matrix(rng, s.len())).collect();
    (OneStepOperator::sublinear(s, mats.clone()).unwrap(), mats)
}

/// Digits of `index` in base `n`, most significant first.
pub fn digits(mut index: usize, n: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in out.iter_mut().rev() {
        *d = index % n;
        index /= n;
    }
    out
}

/// Linear expectation of `f` over paths `x_0..x_h` for one initial law and
/// one matrix per (step, current state).
///
/// `select(t, x)` names the matrix used on the step `t -> t + 1` from `x`.
pub fn path_law(mu0: &[f64], mats: &[Vec<Vec<f64>>], h: usize, select: impl Fn(usize, usize) -> usize) -> Vec<f64> {
    let n = mu0.len();
    let mut w = mu0.to_vec();
    for t in 0..h {
        let mut next = vec![0.0; w.len() * n];
        for (p, &wp) in w.iter().enumerate() {
            if wp == 0.0 {
                continue;
            }
            let row = &mats[select(t, p % n)][p % n];
            for y in 0..n {
                next[p * n + y] = wp * row[y];
            }
        }
        w = next;
    }
    w
}

/// Tabulates `f` given on `S^J` (last coordinate fastest) as a function of the full path `x_0..x_h`.
pub fn on_paths(f: &[f64], j: &[usize], n: usize, h: usize) -> Vec<f64> {
    (0..n.pow(h as u32 + 1))
        .map(|p| {
            let path = digits(p, n, h + 1);
            let idx = j.iter().fold(0, |acc, &t| acc * n + path[t]);
            f[idx]
        })
        .collect()
}

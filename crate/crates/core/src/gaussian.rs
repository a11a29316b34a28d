//! Drift and volatility uncertainty for Gaussian increments: robust
//! expectations of path functionals over a parameter box, evaluated with
//! tensor Gauss–Hermite quadrature and a grid search.

use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::hermite::GaussHermite;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::space::{Scenario, StateSpace};

/// Largest number of observation times.
pub const MAX_TIMES: usize = 4;

/// Largest number of parameter grid points searched.
pub const GRID_CAP: usize = 1_000_000;

/// Default tolerance of the nested-grid consistency check.
pub const GAUSSIAN_CONSISTENCY_TOL: f64 = 1e-4;

/// `[mu_lo, mu_hi] x [sigma_lo, sigma_hi]`, per unit time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamBox {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl ParamBox {
    pub fn new(mu_lo: f64, mu_hi: f64, sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if ![mu_lo, mu_hi, sigma_lo, sigma_hi].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("parameter bounds must be finite".into()));
        }
        if mu_lo > mu_hi || sigma_lo > sigma_hi {
            return Err(Error::Domain("parameter bounds are out of order".into()));
        }
        if sigma_lo <= 0.0 {
            return Err(Error::Domain(format!("volatility lower bound must be positive, got {sigma_lo}")));
        }
        Ok(Self { mu_lo, mu_hi, sigma_lo, sigma_hi })
    }

    pub fn contains(&self, mu: f64, sigma: f64) -> bool {
        (self.mu_lo..=self.mu_hi).contains(&mu) && (self.sigma_lo..=self.sigma_hi).contains(&sigma)
    }
}

/// Observation times `t_1 < ... < t_n`, `t_0 = 0` implicit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `t_1 = 0` is accepted; that increment is the point mass at 0.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() > MAX_TIMES {
            return Err(Error::Capacity(format!("need 1 to {MAX_TIMES} times, got {}", times.len())));
        }
        if times.iter().any(|t| !t.is_finite()) || times[0] < 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!("times {times:?} are not nonnegative and strictly increasing")));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    /// Positions of `sub`'s times within this grid.
    pub fn positions_of(&self, sub: &TimeGrid) -> Result<Vec<usize>> {
        sub.times
            .iter()
            .map(|t| {
                self.times
                    .iter()
                    .position(|s| s == t)
                    .ok_or_else(|| Error::Argument(format!("time {t} is not in {:?}", self.times)))
            })
            .collect()
    }
}

/// Gauss–Hermite nodes and probability weights for the standard normal.
#[derive(Clone, Debug)]
pub struct Quadrature {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(order: usize) -> Result<Self> {
        let deg =
            NonZeroUsize::new(order).ok_or_else(|| Error::Argument("quadrature order must be at least 1".into()))?;
        let rule = GaussHermite::new(deg);
        let nodes = rule.nodes().map(|z| std::f64::consts::SQRT_2 * z).collect();
        let weights = rule.weights().map(|w| w / PI.sqrt()).collect();
        Ok(Self { order, nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// `E f(s(X))` for independent `X_k ~ N(mu_k dt_k, sigma_k^2 dt_k)` and the
/// cumulative sum `s`.
pub fn linear_eval(grid: &TimeGrid, f: &dyn Fn(&[f64]) -> f64, mu: &[f64], sigma: &[f64], order: usize) -> Result<f64> {
    linear_eval_with(&Quadrature::new(order)?, grid, f, mu, sigma)
}

/// [`linear_eval`] with a precomputed rule.
pub fn linear_eval_with(
    quad: &Quadrature,
    grid: &TimeGrid,
    f: &dyn Fn(&[f64]) -> f64,
    mu: &[f64],
    sigma: &[f64],
) -> Result<f64> {
    let n = grid.len();
    crate::error::check_len(n, mu.len())?;
    crate::error::check_len(n, sigma.len())?;
    if mu.iter().chain(sigma).any(|v| !v.is_finite()) || sigma.iter().any(|&s| s < 0.0) {
        return Err(Error::Domain("drift and volatility must be finite, volatility nonnegative".into()));
    }
    // per-axis points and weights; a zero variance collapses to the mean
    let axes: Vec<(Vec<f64>, Vec<f64>)> = grid
        .increments()
        .iter()
        .zip(mu.iter().zip(sigma))
        .map(|(&dt, (&m, &s))| {
            let mean = m * dt;
            let sd = s * dt.sqrt();
            if sd == 0.0 {
                (vec![mean], vec![1.0])
            } else {
                (quad.nodes.iter().map(|z| mean + sd * z).collect(), quad.weights.clone())
            }
        })
        .collect();
    let sizes: Vec<usize> = axes.iter().map(|a| a.0.len()).collect();
    let mut idx = vec![0usize; n];
    let mut path = vec![0.0; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        let mut acc = 0.0;
        for k in 0..n {
            acc += axes[k].0[idx[k]];
            path[k] = acc;
            w *= axes[k].1[idx[k]];
        }
        let v = f(&path);
        if !v.is_finite() {
            return Err(Error::Domain(format!("integrand is {v} at {path:?}")));
        }
        total += w * v;
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(total);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Result of a robust evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustValue {
    pub value: f64,
    pub argmax_mu: Vec<f64>,
    pub argmax_sigma: Vec<f64>,
    pub order: usize,
    pub grid: usize,
    /// `|value(order) - value(2 order)|` at the maximizer.
    pub est_error: f64,
}

fn axis(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    (0..g).map(|i| if i + 1 == g { hi } else { lo + (hi - lo) * i as f64 / (g - 1) as f64 }).collect()
}

/// `sup` of [`linear_eval`] over constant-per-increment parameters in the
/// box: exhaustive grid search (ties go to the lexicographically smallest
/// `(mu, sigma)`), then optional coordinate ascent by golden section within
/// one grid cell of the best point.
pub fn robust_eval(
    grid: &TimeGrid,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    pbox: &ParamBox,
    order: usize,
    grid_per_axis: usize,
    refine: bool,
) -> Result<RobustValue> {
    if grid_per_axis < 2 {
        return Err(Error::Argument(format!("grid_per_axis must be at least 2, got {grid_per_axis}")));
    }
    let n = grid.len();
    let quad = Quadrature::new(order)?;
    let mu_axis = axis(pbox.mu_lo, pbox.mu_hi, grid_per_axis);
    let sigma_axis = axis(pbox.sigma_lo, pbox.sigma_hi, grid_per_axis);
    let sizes: Vec<usize> = (0..2 * n).map(|d| if d < n { mu_axis.len() } else { sigma_axis.len() }).collect();
    let total = sizes
        .iter()
        .try_fold(1usize, |a, &s| a.checked_mul(s))
        .filter(|&t| t <= GRID_CAP)
        .ok_or_else(|| Error::Capacity(format!("parameter grid exceeds {GRID_CAP} points")))?;
    let point = |flat: usize| -> (Vec<f64>, Vec<f64>) {
        let mut rem = flat;
        let mut digits = vec![0usize; 2 * n];
        for d in (0..2 * n).rev() {
            digits[d] = rem % sizes[d];
            rem /= sizes[d];
        }
        (digits[..n].iter().map(|&i| mu_axis[i]).collect(), digits[n..].iter().map(|&i| sigma_axis[i]).collect())
    };
    let values: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .map(|p| {
            let (m, s) = point(p);
            linear_eval_with(&quad, grid, f, &m, &s)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (p, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > best.0 {
            best = (v, p);
        }
    }
    let (mut mu, mut sigma) = point(best.1);
    let mut value = best.0;
    if refine {
        let mu_step = (pbox.mu_hi - pbox.mu_lo) / (grid_per_axis - 1) as f64;
        let sigma_step = (pbox.sigma_hi - pbox.sigma_lo) / (grid_per_axis - 1) as f64;
        for _sweep in 0..20 {
            let before = value;
            for d in 0..2 * n {
                let (center, step, lo, hi) = if d < n {
                    (mu[d], mu_step, pbox.mu_lo, pbox.mu_hi)
                } else {
                    (sigma[d - n], sigma_step, pbox.sigma_lo, pbox.sigma_hi)
                };
                if step == 0.0 {
                    continue;
                }
                let eval_at = |x: f64| -> Result<f64> {
                    let (mut m, mut s) = (mu.clone(), sigma.clone());
                    if d < n {
                        m[d] = x
                    } else {
                        s[d - n] = x
                    }
                    linear_eval_with(&quad, grid, f, &m, &s)
                };
                let (x, v) = golden_max(eval_at, (center - step).max(lo), (center + step).min(hi))?;
                if v > value {
                    value = v;
                    if d < n {
                        mu[d] = x
                    } else {
                        sigma[d - n] = x
                    }
                }
            }
            if value - before <= 1e-14 * value.abs().max(1.0) {
                break;
            }
        }
    }
    let doubled = linear_eval_with(&Quadrature::new(2 * order)?, grid, f, &mu, &sigma)?;
    Ok(RobustValue {
        value,
        argmax_mu: mu,
        argmax_sigma: sigma,
        order,
        grid: grid_per_axis,
        est_error: (doubled - value).abs(),
    })
}

/// Golden-section search for a maximum on `[a, b]`; returns the best point seen.
fn golden_max(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..60 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Named test functions on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub enum GaussianFunction {
    One,
    /// `x_n`.
    Last,
    /// `x_n^2`.
    SquareLast,
    /// `cos(x_n)`.
    CosLast,
    /// `sum_j c_j prod_i x_i^{e_ji}`.
    Polynomial(Vec<(f64, Vec<u32>)>),
}

impl GaussianFunction {
    pub const NAMES: [&'static str; 4] = ["one", "last", "square_last", "cos_last"];

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "one" => Self::One,
            "last" => Self::Last,
            "square_last" => Self::SquareLast,
            "cos_last" => Self::CosLast,
            other => {
                return Err(Error::Argument(format!("unknown function {other:?}; known: {}", Self::NAMES.join(", "))))
            }
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let last = x.last().copied().unwrap_or(0.0);
        match self {
            Self::One => 1.0,
            Self::Last => last,
            Self::SquareLast => last * last,
            Self::CosLast => last.cos(),
            Self::Polynomial(terms) => {
                terms.iter().map(|(c, e)| c * x.iter().zip(e).map(|(xi, &k)| xi.powi(k as i32)).product::<f64>()).sum()
            }
        }
    }

    /// Total degree for polynomial functions; quadrature of order `q` is
    /// exact below degree `2q`.
    pub fn degree(&self) -> Option<u32> {
        match self {
            Self::One => Some(0),
            Self::Last => Some(1),
            Self::SquareLast => Some(2),
            Self::CosLast => None,
            Self::Polynomial(terms) => Some(terms.iter().map(|(_, e)| e.iter().sum()).max().unwrap_or(0)),
        }
    }

    /// Checks that a polynomial's exponent vectors fit `n` coordinates.
    pub fn check_arity(&self, n: usize) -> Result<()> {
        if let Self::Polynomial(terms) = self {
            if let Some((_, e)) = terms.iter().find(|(_, e)| e.len() != n) {
                return Err(Error::Dimension { expected: n, got: e.len() });
            }
        }
        Ok(())
    }
}

/// The family `E_J` of robust expectations over a fixed box, quadrature
/// order and search grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianFamily {
    pub pbox: ParamBox,
    pub horizon: f64,
    pub order: usize,
    pub grid: usize,
    pub refine: bool,
}

/// Both sides of `E_K(f) = E_J(f o pr_JK)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianConsistency {
    pub marginal: RobustValue,
    pub lifted: RobustValue,
    pub discrepancy: f64,
    pub pass: bool,
}

impl GaussianFamily {
    pub fn new(pbox: ParamBox, horizon: f64, order: usize, grid: usize, refine: bool) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Argument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { pbox, horizon, order, grid, refine })
    }

    fn check_grid(&self, j: &TimeGrid) -> Result<()> {
        if j.times().last().is_some_and(|&t| t > self.horizon) {
            return Err(Error::Argument(format!("times {:?} exceed the horizon {}", j.times(), self.horizon)));
        }
        Ok(())
    }

    pub fn eval(&self, j: &TimeGrid, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<RobustValue> {
        self.check_grid(j)?;
        robust_eval(j, f, &self.pbox, self.order, self.grid, self.refine)
    }

    /// Compares `E_K(f)` with `E_J(f o pr_JK)` for `K ⊆ J`.
    pub fn consistency(
        &self,
        j: &TimeGrid,
        k: &TimeGrid,
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        tol: f64,
    ) -> Result<GaussianConsistency> {
        self.check_grid(j)?;
        let pos = j.positions_of(k)?;
        let marginal = self.eval(k, &|x: &[f64]| f(x))?;
        let lifted = self.eval(j, &|x: &[f64]| {
            let y: Vec<f64> = pos.iter().map(|&p| x[p]).collect();
            f(&y)
        })?;
        let discrepancy = (marginal.value - lifted.value).abs();
        Ok(GaussianConsistency { marginal, lifted, discrepancy, pass: discrepancy <= tol })
    }
}

impl fmt::Display for GaussianFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::One => write!(f, "one"),
            Self::Last => write!(f, "last"),
            Self::SquareLast => write!(f, "square_last"),
            Self::CosLast => write!(f, "cos_last"),
            Self::Polynomial(t) => write!(f, "polynomial({} terms)", t.len()),
        }
    }
}

/// Laws of `X_t` for `(mu, sigma)` on the parameter grid, discretized on
/// `cells` equal cells of `[-half_width, half_width]`; the two end cells
/// absorb the tails. Returns the cell space, the scenarios and cell centers.
pub fn gridded_normal_scenarios(
    pbox: &ParamBox,
    t: f64,
    grid_per_axis: usize,
    cells: usize,
    half_width: f64,
) -> Result<(StateSpace, Vec<Scenario>, Vec<f64>)> {
    if cells < 2 || !(half_width > 0.0) || !(t > 0.0) {
        return Err(Error::Argument("need at least two cells, positive width and positive time".into()));
    }
    let space = StateSpace::indexed(cells)?;
    let h = 2.0 * half_width / cells as f64;
    let edges: Vec<f64> = (0..=cells).map(|i| -half_width + h * i as f64).collect();
    let centers = (0..cells).map(|i| edges[i] + h / 2.0).collect();
    let mut out = Vec::new();
    for &m in &axis(pbox.mu_lo, pbox.mu_hi, grid_per_axis) {
        for &s in &axis(pbox.sigma_lo, pbox.sigma_hi, grid_per_axis) {
            let law = Normal::new(m * t, s * t.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
            let cdf: Vec<f64> = edges.iter().map(|&e| law.cdf(e)).collect();
            let mut w: Vec<f64> = (0..cells).map(|i| cdf[i + 1] - cdf[i]).collect();
            w[0] += cdf[0];
            w[cells - 1] += 1.0 - cdf[cells];
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v = v.max(0.0) / total);
            out.push(Scenario::new(&space, w)?);
        }
    }
    Ok((space, out, centers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_time(t: f64) -> TimeGrid {
        TimeGrid::new(vec![t]).unwrap()
    }

    #[test]
    fn normalization_and_mean() {
        let g = TimeGrid::new(vec![0.5, 1.25]).unwrap();
        for order in [1, 2, 7] {
            assert!((linear_eval(&g, &|_| 1.0, &[0.3, -0.2], &[0.4, 0.9], order).unwrap() - 1.0).abs() < 1e-14);
            let m = linear_eval(&g, &|x| x[1], &[0.3, -0.2], &[0.4, 0.9], order).unwrap();
            assert!((m - (0.3 * 0.5 - 0.2 * 0.75)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_variance_is_a_point_mass() {
        let g = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let v = linear_eval(&g, &|x| x[0] * 10.0 + x[1] * x[1], &[2.0, 0.0], &[1.0, 1.0], 5).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn robust_second_moment_at_corner() {
        let b = ParamBox::new(-0.5, 0.2, 0.1, 0.3).unwrap();
        let t = 2.0;
        let r = robust_eval(&one_time(t), &|x| x[0] * x[0], &b, 4, 5, false).unwrap();
        assert!((r.value - (0.09 * t + 0.25 * t * t)).abs() < 1e-12);
        assert_eq!((r.argmax_mu[0], r.argmax_sigma[0]), (-0.5, 0.3));
        assert!(r.est_error < 1e-12);
    }

    #[test]
    fn refinement_never_lowers_the_grid_value() {
        let b = ParamBox::new(-1.0, 1.0, 0.2, 0.6).unwrap();
        let f = |x: &[f64]| (x[0] - 0.37).cos();
        let coarse = robust_eval(&one_time(1.0), &f, &b, 20, 4, false).unwrap();
        let fine = robust_eval(&one_time(1.0), &f, &b, 20, 4, true).unwrap();
        assert!(fine.value >= coarse.value);
        // optimum is mu = 0.37, sigma = 0.2
        assert!((fine.value - (-0.02f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn grids_are_validated() {
        assert!(TimeGrid::new(vec![1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]).is_err());
        assert!(ParamBox::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(
            robust_eval(&one_time(1.0), &|_| 1.0, &ParamBox::new(0.0, 1.0, 1.0, 2.0).unwrap(), 2, 1, false).is_err()
        );
    }

    #[test]
    fn gridded_scenarios_are_probability_vectors() {
        let b = ParamBox::new(-0.1, 0.1, 0.5, 1.0).unwrap();
        let (_, sc, c) = gridded_normal_scenarios(&b, 1.0, 3, 40, 8.0).unwrap();
        assert_eq!(sc.len(), 9);
        let mean = sc[0].expect(&c);
        assert!((mean + 0.1).abs() < 1e-2);
    }
}

//! Convex conjugates `E*(mu) = sup_X (mu X - E(X))` and convex-hull
//! membership of scenarios.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::expectation::{ExpectationModel, PenaltyModel};
use crate::lp::{Cmp, LinearProgram, LpOutcome, Sense, LP_TOL};
use crate::space::{dot, Scenario};

/// Result of [`conjugate`].
#[derive(Clone, Debug, Serialize)]
pub struct ConjugateEstimate {
    pub radius: f64,
    /// `sup` over the ball `||X||_inf <= radius`; a lower bound of `E*(mu)`.
    pub bounded: f64,
    /// Exact value for penalty models (`inf` when `mu` is outside the
    /// effective domain). `None` for other kinds.
    pub exact: Option<f64>,
    /// The maximizing `X` found for the bounded problem.
    pub argmax: Vec<f64>,
}

impl ConjugateEstimate {
    /// The exact value when known, the bounded estimate otherwise.
    pub fn best(&self) -> f64 {
        self.exact.unwrap_or(self.bounded)
    }
}

/// Computes the conjugate of `model` at `mu`.
///
/// Penalty models: the ball problem is an LP, and the exact value is the
/// smallest mixture penalty `min { sum l_k a_k : sum l_k mu_k = mu }`.
/// Other models: projected gradient ascent of the concave objective from a
/// fixed start grid (origin, the one-hot corners `+-R(2e_i - 1)` and, for
/// `n <= 6`, every sign corner of the ball).
pub fn conjugate(model: &ExpectationModel, mu: &Scenario, radius: f64) -> Result<ConjugateEstimate> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Argument(format!("radius must be positive, got {radius}")));
    }
    model.space().ensure_same(mu.space())?;
    match model {
        ExpectationModel::Penalty(pm) => {
            let (bounded, argmax) = penalty_ball_sup(pm, mu.weights(), radius)?;
            let exact = penalty_conjugate_exact(pm, mu.weights())?;
            Ok(ConjugateEstimate { radius, bounded, exact: Some(exact), argmax })
        }
        _ => {
            let (bounded, argmax) = ascent_ball_sup(model, mu.weights(), radius)?;
            Ok(ConjugateEstimate { radius, bounded, exact: None, argmax })
        }
    }
}

fn penalty_ball_sup(pm: &PenaltyModel, mu: &[f64], radius: f64) -> Result<(f64, Vec<f64>)> {
    let n = mu.len();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let xs: Vec<usize> = mu.iter().map(|&m| lp.var(m, -radius, radius)).collect();
    let t = lp.free_var(-1.0);
    for (s, &a) in pm.scenarios().iter().zip(pm.penalties()) {
        // t >= s.X - a
        let mut row: Vec<(usize, f64)> = xs.iter().zip(s.weights()).map(|(&j, &w)| (j, -w)).collect();
        row.push((t, 1.0));
        lp.constraint(&row, Cmp::Ge, -a);
    }
    let (_, sol) = lp.solve_optimal("conjugate ball problem")?;
    let x: Vec<f64> = sol[..n].to_vec();
    // recompute from the primal point rather than trusting the LP objective
    let value = dot(mu, &x) - pm.dual_eval_values(&x)?.0;
    Ok((value, x))
}

fn penalty_conjugate_exact(pm: &PenaltyModel, mu: &[f64]) -> Result<f64> {
    let mut lp = LinearProgram::new(Sense::Minimize);
    let lambdas: Vec<usize> = pm.penalties().iter().map(|&a| lp.var(a, 0.0, f64::INFINITY)).collect();
    for (i, &m) in mu.iter().enumerate() {
        let row: Vec<(usize, f64)> = lambdas.iter().zip(pm.scenarios()).map(|(&j, s)| (j, s.weights()[i])).collect();
        lp.constraint(&row, Cmp::Le, m + LP_TOL);
        lp.constraint(&row, Cmp::Ge, m - LP_TOL);
    }
    let all: Vec<(usize, f64)> = lambdas.iter().map(|&j| (j, 1.0)).collect();
    lp.constraint(&all, Cmp::Eq, 1.0);
    match lp.solve()? {
        LpOutcome::Optimal { objective, .. } => Ok(objective.max(0.0)),
        LpOutcome::Infeasible => Ok(f64::INFINITY),
        LpOutcome::Unbounded => Err(Error::Numeric("mixture penalty LP unbounded".into())),
    }
}

fn start_grid(n: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut starts = vec![vec![0.0; n]];
    for i in 0..n {
        let corner: Vec<f64> = (0..n).map(|j| if i == j { radius } else { -radius }).collect();
        starts.push(corner.iter().map(|v| -v).collect());
        starts.push(corner);
    }
    if n <= 6 {
        for mask in 0..(1usize << n) {
            starts.push((0..n).map(|j| if mask >> j & 1 == 1 { radius } else { -radius }).collect());
        }
    }
    starts
}

fn gradient(model: &ExpectationModel, mu: &[f64], x: &[f64], radius: f64) -> Result<Vec<f64>> {
    if let ExpectationModel::Entropic(m) = model {
        return Ok(mu.iter().zip(m.gradient(x)).map(|(a, q)| a - q).collect());
    }
    let h = 1e-6 * radius.max(1.0);
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = model.evaluate_values(&probe)?;
        probe[i] = x[i] - h;
        let down = model.evaluate_values(&probe)?;
        probe[i] = x[i];
        g.push(mu[i] - (up - down) / (2.0 * h));
    }
    Ok(g)
}

fn ascent_ball_sup(model: &ExpectationModel, mu: &[f64], radius: f64) -> Result<(f64, Vec<f64>)> {
    let objective = |x: &[f64]| -> Result<f64> { Ok(dot(mu, x) - model.evaluate_values(x)?) };
    let clamp = |x: Vec<f64>| -> Vec<f64> { x.into_iter().map(|v| v.clamp(-radius, radius)).collect() };
    let mut best = (f64::NEG_INFINITY, vec![0.0; mu.len()]);
    for start in start_grid(mu.len(), radius) {
        let mut x = start;
        let mut fx = objective(&x)?;
        let mut step = radius;
        for _ in 0..2000 {
            let g = gradient(model, mu, &x, radius)?;
            let mut improved = false;
            while step > 1e-12 * radius {
                let cand = clamp(x.iter().zip(&g).map(|(a, b)| a + step * b).collect());
                let fc = objective(&cand)?;
                if fc > fx {
                    improved = fc - fx > 1e-15;
                    x = cand;
                    fx = fc;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if fx > best.0 {
            best = (fx, x);
        }
    }
    Ok(best)
}

/// Outcome of a convex-hull membership test.
#[derive(Clone, Debug, Serialize)]
pub struct Membership {
    pub member: bool,
    /// L1 distance from `mu` to the hull found by the feasibility LP.
    pub residual: f64,
    /// A function `f` in `[-1, 1]^n` with `mu f > max_k mu_k f` when not a member.
    pub witness: Option<Vec<f64>>,
    /// `mu f - max_k mu_k f` for the witness.
    pub separation: f64,
}

/// Generator count above which membership switches to cutting planes.
const DIRECT_LIMIT: usize = 64;

/// Tests whether `point` lies in the convex hull of `generators`.
///
/// Large generator sets are handled by cutting planes on the separating
/// problem: the separation is exact, and `residual` is then the distance to
/// the hull of the generators that were needed, an upper bound.
pub fn hull_membership(generators: &[&[f64]], point: &[f64], tol: f64) -> Result<Membership> {
    if generators.is_empty() {
        return Err(Error::Argument("empty generator list".into()));
    }
    let n = point.len();
    for g in generators {
        check_len(n, g.len())?;
    }
    if generators.len() <= DIRECT_LIMIT {
        return direct_membership(generators, point, tol);
    }
    // start from the coordinatewise extremes and the nearest generator
    let mut working: Vec<usize> = Vec::new();
    let add = |k: usize, w: &mut Vec<usize>| {
        if !w.contains(&k) {
            w.push(k);
        }
    };
    for i in 0..n {
        let by = |a: &&&[f64], b: &&&[f64]| a[i].total_cmp(&b[i]);
        let (hi, _) = generators.iter().enumerate().max_by(|a, b| by(&a.1, &b.1)).expect("nonempty");
        let (lo, _) = generators.iter().enumerate().min_by(|a, b| by(&a.1, &b.1)).expect("nonempty");
        add(hi, &mut working);
        add(lo, &mut working);
    }
    let l1 = |g: &[f64]| g.iter().zip(point).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let nearest =
        (0..generators.len()).min_by(|&a, &b| l1(generators[a]).total_cmp(&l1(generators[b]))).expect("nonempty");
    add(nearest, &mut working);
    loop {
        let sub: Vec<&[f64]> = working.iter().map(|&k| generators[k]).collect();
        let (separation, f) = separating_function(&sub, point)?;
        if separation <= tol {
            let mut m = direct_membership(&sub, point, tol)?;
            m.member = true;
            return Ok(m);
        }
        let best_working = sub.iter().map(|g| dot(g, &f)).fold(f64::NEG_INFINITY, f64::max);
        let mut violators: Vec<(f64, usize)> = generators
            .iter()
            .enumerate()
            .filter(|(k, _)| !working.contains(k))
            .map(|(k, g)| (dot(g, &f), k))
            .filter(|&(v, _)| v > best_working + 1e-12)
            .collect();
        if violators.is_empty() {
            // f is feasible for the full problem with the relaxed optimum
            let residual = direct_membership(&sub, point, tol)?.residual;
            return Ok(Membership { member: false, residual, witness: Some(f), separation });
        }
        violators.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        working.extend(violators.iter().take(4).map(|&(_, k)| k));
    }
}

fn direct_membership(generators: &[&[f64]], point: &[f64], tol: f64) -> Result<Membership> {
    let n = point.len();
    // min sum |s_i|  s.t.  sum_k l_k g_k + s+ - s- = point, sum l = 1, l >= 0
    let mut lp = LinearProgram::new(Sense::Minimize);
    let lambdas: Vec<usize> = generators.iter().map(|_| lp.var(0.0, 0.0, f64::INFINITY)).collect();
    let plus: Vec<usize> = (0..n).map(|_| lp.var(1.0, 0.0, f64::INFINITY)).collect();
    let minus: Vec<usize> = (0..n).map(|_| lp.var(1.0, 0.0, f64::INFINITY)).collect();
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = lambdas.iter().zip(generators).map(|(&j, g)| (j, g[i])).collect();
        row.push((plus[i], 1.0));
        row.push((minus[i], -1.0));
        lp.constraint(&row, Cmp::Eq, point[i]);
    }
    let all: Vec<(usize, f64)> = lambdas.iter().map(|&j| (j, 1.0)).collect();
    lp.constraint(&all, Cmp::Eq, 1.0);
    let (residual, _) = lp.solve_optimal("hull membership")?;
    let residual = residual.max(0.0);
    if residual <= tol {
        return Ok(Membership { member: true, residual, witness: None, separation: 0.0 });
    }
    let (separation, witness) = separating_function(generators, point)?;
    Ok(Membership { member: separation <= tol, residual, witness: Some(witness), separation })
}

/// `max_f { point f - max_k g_k f : -1 <= f <= 1 }`.
fn separating_function(generators: &[&[f64]], point: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut lp = LinearProgram::new(Sense::Maximize);
    let fs: Vec<usize> = point.iter().map(|&p| lp.var(p, -1.0, 1.0)).collect();
    let t = lp.free_var(-1.0);
    for g in generators {
        let mut row: Vec<(usize, f64)> = fs.iter().zip(g.iter()).map(|(&j, &w)| (j, w)).collect();
        row.push((t, -1.0));
        lp.constraint(&row, Cmp::Le, 0.0);
    }
    let (_, sol) = lp.solve_optimal("separating function")?;
    let f = sol[..point.len()].to_vec();
    let best = generators.iter().map(|g| dot(g, &f)).fold(f64::NEG_INFINITY, f64::max);
    Ok((dot(point, &f) - best, f))
}

/// Membership of `mu` in the convex hull of a sublinear model's scenarios.
pub fn scenario_membership(pm: &PenaltyModel, mu: &Scenario) -> Result<Membership> {
    if !pm.is_sublinear() {
        return Err(Error::Precondition("scenario membership needs all penalties to be zero".into()));
    }
    pm.space().ensure_same(mu.space())?;
    let gens: Vec<&[f64]> = pm.scenarios().iter().map(|s| s.weights()).collect();
    hull_membership(&gens, mu.weights(), LP_TOL)
}

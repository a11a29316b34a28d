//! Extensions of a pre-expectation given on a finite-dimensional subspace:
//! the maximal and minimal extensions as linear programs, limits along
//! monotone sequences, and the continuity checks behind them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_finite, check_len, Error, Result};
use crate::expectation::{ExpectationModel, PenaltyModel};
use crate::kolmogorov::{cylinder_eval, CylinderFunction, FiniteSubset, MarginalFamily, ProductSpace};
use crate::lp::{Cmp, LinearProgram, Sense, LP_TOL};
use crate::space::{centered_dot, sup_norm, RandomVariable, Scenario, StateSpace};

/// Largest gap-demo depth.
pub const MAX_DEMO_DEPTH: usize = 16;

/// A finite basis containing the constants, with an expectation on its span.
#[derive(Clone, Debug)]
pub struct SubspaceModel {
    space: StateSpace,
    basis: Vec<RandomVariable>,
    orthonormal: Vec<Vec<f64>>,
    /// Orthonormal basis of the orthogonal complement of the span.
    complement: Vec<Vec<f64>>,
    expectation: ExpectationModel,
    lp_tol: f64,
}

impl SubspaceModel {
    pub fn new(basis: Vec<RandomVariable>, expectation: ExpectationModel) -> Result<Self> {
        let space = expectation.space().clone();
        if basis.is_empty() {
            return Err(Error::Argument("subspace basis is empty".into()));
        }
        for b in &basis {
            space.ensure_same(b.space())?;
        }
        let mut orthonormal: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
        for (i, b) in basis.iter().enumerate() {
            let mut v = b.values().to_vec();
            let scale = l2(&v);
            // two passes keep the basis orthogonal to rounding level
            for _ in 0..2 {
                for q in &orthonormal {
                    let c = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
                }
            }
            let norm = l2(&v);
            if norm <= 1e-10 * scale.max(1.0) {
                return Err(Error::Argument(format!("basis vector {i} is linearly dependent on the others")));
            }
            v.iter_mut().for_each(|vi| *vi /= norm);
            orthonormal.push(v);
        }
        let n = space.len();
        let mut complement: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(orthonormal.len()));
        for i in 0..n {
            if orthonormal.len() + complement.len() == n {
                break;
            }
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            for _ in 0..2 {
                for q in orthonormal.iter().chain(&complement) {
                    let c = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
                }
            }
            let norm = l2(&v);
            if norm > 1e-6 {
                v.iter_mut().for_each(|vi| *vi /= norm);
                complement.push(v);
            }
        }
        let model = Self { space, basis, orthonormal, complement, expectation, lp_tol: LP_TOL };
        let ones = vec![1.0; model.space.len()];
        if model.projection_residual(&ones) > LP_TOL {
            return Err(Error::Argument("the constant 1 is not in the span of the basis".into()));
        }
        Ok(model)
    }

    /// Overrides the LP and span tolerance (default [`LP_TOL`]).
    pub fn with_lp_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Argument(format!("lp_tol must be positive, got {tol}")));
        }
        self.lp_tol = tol;
        Ok(self)
    }

    /// Only constants.
    pub fn constants(expectation: ExpectationModel) -> Result<Self> {
        let one = RandomVariable::constant(expectation.space(), 1.0)?;
        Self::new(vec![one], expectation)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn basis(&self) -> &[RandomVariable] {
        &self.basis
    }

    pub fn expectation(&self) -> &ExpectationModel {
        &self.expectation
    }

    pub fn lp_tol(&self) -> f64 {
        self.lp_tol
    }

    /// `sum_i c_i b_i`.
    pub fn combine(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        check_len(self.basis.len(), coefficients.len())?;
        let mut out = vec![0.0; self.space.len()];
        for (c, b) in coefficients.iter().zip(&self.basis) {
            out.iter_mut().zip(b.values()).for_each(|(o, v)| *o += c * v);
        }
        Ok(out)
    }

    /// Coefficients of the orthogonal projection of `y` onto the span.
    fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        // B = Q R with R[j][i] = q_j . b_i, upper triangular
        let m = self.basis.len();
        let qy: Vec<f64> = self.orthonormal.iter().map(|q| dot(q, y)).collect();
        let mut c = vec![0.0; m];
        for i in (0..m).rev() {
            let mut acc = qy[i];
            for (k, ck) in c.iter().enumerate().skip(i + 1) {
                acc -= dot(&self.orthonormal[i], self.basis[k].values()) * ck;
            }
            c[i] = acc / dot(&self.orthonormal[i], self.basis[i].values());
        }
        c
    }

    /// Variables `y = B c` bounded by `x` from one side, kept in the span by
    /// the complement equations.
    fn span_vars(&self, lp: &mut LinearProgram, x: &[f64], cost: impl Fn(usize) -> f64, above: bool) -> Vec<usize> {
        let ys: Vec<usize> = x
            .iter()
            .enumerate()
            .map(
                |(i, &xi)| {
                    if above {
                        lp.var(cost(i), xi, f64::INFINITY)
                    } else {
                        lp.var(cost(i), f64::NEG_INFINITY, xi)
                    }
                },
            )
            .collect();
        for w in &self.complement {
            let row: Vec<(usize, f64)> = ys.iter().zip(w).map(|(&j, &wi)| (j, wi)).collect();
            lp.constraint(&row, Cmp::Eq, 0.0);
        }
        ys
    }

    /// Sup-norm distance from `x` to the span.
    pub fn projection_residual(&self, x: &[f64]) -> f64 {
        let mut r = x.to_vec();
        for q in &self.orthonormal {
            let c = dot(q, &r);
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
        }
        sup_norm(&r)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.projection_residual(x) <= self.lp_tol * sup_norm(x).max(1.0)
    }

    fn penalty(&self) -> Result<&PenaltyModel> {
        self.expectation.as_penalty().ok_or_else(|| {
            Error::Precondition(format!("extension LPs need a penalty model, got {}", self.expectation.kind()))
        })
    }

    fn check_input(&self, x: &RandomVariable) -> Result<()> {
        self.space.ensure_same(x.space())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// What produced an extension value.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Certificate {
    /// The optimal `X0 = sum c_i b_i` and the active scenario.
    Coefficients { coefficients: Vec<f64>, scenario: usize },
    /// The last evaluated index of a monotone sequence and all values so far.
    Sequence { index: usize, partial_values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionResult {
    pub value: f64,
    pub certificate: Certificate,
    pub converged: bool,
    pub residual: f64,
}

/// `inf { E(X0) : X0 in M, X0 >= x }`.
pub fn maximal_extension_eval(sub: &SubspaceModel, x: &RandomVariable) -> Result<ExtensionResult> {
    sub.check_input(x)?;
    let pm = sub.penalty()?;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let ys = sub.span_vars(&mut lp, x.values(), |_| 0.0, true);
    let t = lp.free_var(1.0);
    // t >= mu_k y - a_k
    for (mu, &a) in pm.scenarios().iter().zip(pm.penalties()) {
        let mut row: Vec<(usize, f64)> = ys.iter().zip(mu.weights()).map(|(&j, &w)| (j, w)).collect();
        row.push((t, -1.0));
        lp.constraint(&row, Cmp::Le, a);
    }
    let (_, sol) = lp.solve_optimal("maximal extension")?;
    let c = sub.coefficients(&sol[..ys.len()]);
    let x0 = sub.combine(&c)?;
    let (value, k) = pm.dual_eval_values(&x0)?;
    let residual = x.values().iter().zip(&x0).map(|(xi, yi)| xi - yi).fold(0.0, f64::max);
    Ok(ExtensionResult {
        value,
        certificate: Certificate::Coefficients { coefficients: c, scenario: k },
        converged: residual <= sub.lp_tol,
        residual,
    })
}

/// `sup { E(X0) : X0 in M, X0 <= x }`, one LP per scenario.
pub fn minimal_extension_eval(sub: &SubspaceModel, x: &RandomVariable) -> Result<ExtensionResult> {
    sub.check_input(x)?;
    let pm = sub.penalty()?;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (k, (mu, &a)) in pm.scenarios().iter().zip(pm.penalties()).enumerate() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let ys = sub.span_vars(&mut lp, x.values(), |i| mu.weights()[i], false);
        let (_, sol) = lp.solve_optimal("minimal extension")?;
        let c = sub.coefficients(&sol[..ys.len()]);
        let v = centered_dot(mu.weights(), &sub.combine(&c)?) - a;
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, k, c));
        }
    }
    let (_, k, c) = best.expect("penalty models have a scenario");
    let x0 = sub.combine(&c)?;
    let value = pm.dual_eval_values(&x0)?.0;
    let residual = x0.iter().zip(x.values()).map(|(yi, xi)| yi - xi).fold(0.0, f64::max);
    Ok(ExtensionResult {
        value,
        certificate: Certificate::Coefficients { coefficients: c, scenario: k },
        converged: residual <= sub.lp_tol,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// How the terms of a monotone sequence are produced.
#[derive(Clone)]
pub enum SequenceGenerator<T> {
    /// A finite list; the sequence stays at its last term afterwards.
    Explicit(Vec<T>),
    /// `k -> X_k` for `k = 0, 1, ...`.
    Rule(Arc<dyn Fn(usize) -> T + Send + Sync>),
}

impl<T> fmt::Debug for SequenceGenerator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Explicit(v) => write!(f, "Explicit({} terms)", v.len()),
            Self::Rule(_) => write!(f, "Rule"),
        }
    }
}

/// A pointwise monotone sequence with an optional known limit.
#[derive(Clone, Debug)]
pub struct MonotoneSequenceSpec<T> {
    pub direction: Direction,
    pub generator: SequenceGenerator<T>,
    pub limit: Option<T>,
}

impl<T: Clone> MonotoneSequenceSpec<T> {
    pub fn explicit(direction: Direction, terms: Vec<T>) -> Self {
        Self { direction, generator: SequenceGenerator::Explicit(terms), limit: None }
    }

    pub fn rule(direction: Direction, rule: impl Fn(usize) -> T + Send + Sync + 'static) -> Self {
        Self { direction, generator: SequenceGenerator::Rule(Arc::new(rule)), limit: None }
    }

    pub fn with_limit(mut self, limit: T) -> Self {
        self.limit = Some(limit);
        self
    }

    /// The `k`-th term, or `None` past the end of an explicit list.
    pub fn term(&self, k: usize) -> Option<T> {
        match &self.generator {
            SequenceGenerator::Explicit(v) => v.get(k).cloned(),
            SequenceGenerator::Rule(r) => Some(r(k)),
        }
    }

    /// Number of terms available, `None` for a rule.
    pub fn len(&self) -> Option<usize> {
        match &self.generator {
            SequenceGenerator::Explicit(v) => Some(v.len()),
            SequenceGenerator::Rule(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }
}

impl MonotoneSequenceSpec<RandomVariable> {
    /// Checks monotonicity (and the bound by the limit) on the first `terms` terms.
    pub fn check(&self, terms: usize) -> Result<()> {
        let mut prev: Option<RandomVariable> = None;
        for k in 0..terms {
            let Some(x) = self.term(k) else { break };
            if let Some(p) = &prev {
                ordered(self.direction, p.values(), x.values(), k)?;
            }
            if let Some(l) = &self.limit {
                ordered(self.direction, x.values(), l.values(), k)?;
            }
            prev = Some(x);
        }
        Ok(())
    }
}

const ORDER_TOL: f64 = 1e-12;

fn ordered(direction: Direction, earlier: &[f64], later: &[f64], k: usize) -> Result<()> {
    check_len(earlier.len(), later.len())?;
    let bad = earlier.iter().zip(later).any(|(a, b)| match direction {
        Direction::Increasing => *b < a - ORDER_TOL,
        Direction::Decreasing => *b > a + ORDER_TOL,
    });
    if bad {
        return Err(Error::Argument(format!("sequence is not {direction:?} at term {k}").to_lowercase()));
    }
    Ok(())
}

/// Iterates `eval` over the terms until successive values differ by less
/// than `tol` or `max_terms` terms have been used.
fn monotone_limit<T: Clone>(
    seq: &MonotoneSequenceSpec<T>,
    tol: f64,
    max_terms: usize,
    mut step: impl FnMut(Option<&T>, &T, usize) -> Result<f64>,
) -> Result<ExtensionResult> {
    if max_terms == 0 {
        return Err(Error::Argument("max_terms must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    let mut values: Vec<f64> = Vec::new();
    let mut prev: Option<T> = None;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for k in 0..max_terms {
        let Some(x) = seq.term(k) else {
            // an exhausted list is stationary from its last term
            converged = !values.is_empty();
            residual = 0.0;
            break;
        };
        let v = step(prev.as_ref(), &x, k)?;
        if let Some(&last) = values.last() {
            residual = (v - last).abs();
            values.push(v);
            if residual < tol {
                converged = true;
                break;
            }
        } else {
            values.push(v);
        }
        prev = Some(x);
    }
    if values.is_empty() {
        return Err(Error::Argument("sequence has no terms".into()));
    }
    let index = values.len() - 1;
    Ok(ExtensionResult {
        value: values[index],
        certificate: Certificate::Sequence { index, partial_values: values },
        converged,
        residual,
    })
}

/// `lim E(X_n)` for `X_n` decreasing in the span of `sub`.
pub fn delta_extension_eval(
    sub: &SubspaceModel,
    seq: &MonotoneSequenceSpec<RandomVariable>,
    tol: f64,
    max_terms: usize,
) -> Result<ExtensionResult> {
    if seq.direction != Direction::Decreasing {
        return Err(Error::Argument("the delta extension needs a decreasing sequence".into()));
    }
    monotone_limit(seq, tol, max_terms, |prev, x, k| {
        sub.check_input(x)?;
        if !sub.contains(x.values()) {
            return Err(Error::Precondition(format!(
                "term {k} is outside the subspace (residual {:e})",
                sub.projection_residual(x.values())
            )));
        }
        if let Some(p) = prev {
            ordered(Direction::Decreasing, p.values(), x.values(), k)?;
        }
        sub.expectation.evaluate(x)
    })
}

/// `lim E(g_n)` for cylinder functions `g_n` increasing to the target.
pub fn bar_extension_eval(
    family: &MarginalFamily,
    seq: &MonotoneSequenceSpec<CylinderFunction>,
    tol: f64,
    max_terms: usize,
) -> Result<ExtensionResult> {
    if seq.direction != Direction::Increasing {
        return Err(Error::Argument("the bar extension needs an increasing sequence".into()));
    }
    monotone_limit(seq, tol, max_terms, |prev, g, k| {
        if let Some(p) = prev {
            let u = p.subset().union(g.subset());
            ordered(Direction::Increasing, p.lift_to(&u)?.values(), g.lift_to(&u)?.values(), k)?;
        }
        cylinder_eval(family, g).map_err(|e| match e {
            Error::Dimension { .. } => {
                Error::Precondition(format!("term {k} is not a cylinder function of the family"))
            }
            other => other,
        })
    })
}

/// The two sides of the continuity gap on the binary path space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapDemo {
    pub depth: usize,
    pub path: Vec<usize>,
    /// Maximal extension of `f = 1 - 1_{y}` over cylinders on the first `depth` coordinates.
    pub hat_value: f64,
    /// `lim E(g_n)` with `g_n = 1 - 1_{B_n}`, `B_n` the paths agreeing with `y` before `n`.
    pub bar_limit: f64,
    pub partial_values: Vec<f64>,
    /// A path differing from `y` that no depth-`depth` cylinder separates from it.
    pub witness_path: Vec<usize>,
}

/// Maximal extension versus the limit along `g_n` for `f = 1 - 1_{y}`.
///
/// `f` is written on the first `depth + 1` coordinates. The maximal
/// extension over functions of the first `depth` coordinates is
/// `E_J(max over the last coordinate of f)`: any cylinder `h o pr_J >= f`
/// dominates that fiber maximum, which is itself a cylinder function. With
/// at least two states the fiber maximum is 1.
pub fn hat_vs_bar_gap_demo(family: &MarginalFamily, y: &[usize], depth: usize) -> Result<GapDemo> {
    let base = family.base();
    let s = base.len();
    if s < 2 {
        return Err(Error::Precondition("the gap needs at least two states".into()));
    }
    if depth == 0 || depth > MAX_DEMO_DEPTH {
        return Err(Error::Argument(format!("depth must be in 1..={MAX_DEMO_DEPTH}, got {depth}")));
    }
    let path: Vec<usize> = (0..=depth).map(|i| y.get(i).copied().unwrap_or(0)).collect();
    if let Some(&bad) = path.iter().find(|&&x| x >= s) {
        return Err(Error::Argument(format!("path state {bad} outside the base space")));
    }
    let j = FiniteSubset::range(0, depth as u32)?;
    let fiber_max = ProductSpace::new(base, &j)?.tabulate(|t| {
        (0..s)
            .map(|last| if t == &path[..depth] && last == path[depth] { 0.0 } else { 1.0 })
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let hat_value = cylinder_eval(family, &CylinderFunction::new(base, j, fiber_max)?)?;

    // every g_n is evaluated; the sequence is flat for the Dirac family
    let partial_values = (1..=depth)
        .map(|n| {
            let jn = FiniteSubset::range(0, n as u32)?;
            let g = CylinderFunction::from_fn(base, jn, |t| if t == &path[..n] { 0.0 } else { 1.0 })?;
            cylinder_eval(family, &g)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut witness_path = path.clone();
    witness_path[depth] = (path[depth] + 1) % s;
    Ok(GapDemo {
        depth,
        path: path[..depth].to_vec(),
        hat_value,
        bar_limit: *partial_values.last().expect("depth >= 1"),
        partial_values,
        witness_path,
    })
}

/// Outcome of a continuity check, with the worst offender.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub passed: bool,
    pub worst_gap: f64,
    /// `(scenario index, sequence index)` of the worst gap when failing.
    pub witness: Option<(usize, usize)>,
}

/// For every scenario and sequence, `mu X_n` must reach `mu X` within `tol`
/// by the last examined term. `terms` bounds rule-based sequences; a
/// sequence without a limit is judged against its last examined term.
pub fn continuity_from_above_check(
    pm: &PenaltyModel,
    seqs: &[MonotoneSequenceSpec<RandomVariable>],
    terms: usize,
    tol: f64,
) -> Result<ContinuityReport> {
    let mut worst = (0.0_f64, None);
    for (si, seq) in seqs.iter().enumerate() {
        let n = seq.len().map_or(terms, |l| l.min(terms));
        if n == 0 {
            continue;
        }
        seq.check(n)?;
        let last = seq.term(n - 1).expect("term within range");
        let limit = seq.limit.clone().unwrap_or_else(|| last.clone());
        pm.space().ensure_same(last.space())?;
        for (k, mu) in pm.scenarios().iter().enumerate() {
            let gap = (mu.expect(last.values()) - mu.expect(limit.values())).abs();
            if gap > worst.0 {
                worst = (gap, Some((k, si)));
            }
        }
    }
    let passed = worst.0 <= tol;
    Ok(ContinuityReport { passed, worst_gap: worst.0, witness: if passed { None } else { worst.1 } })
}

/// Tightness of a scenario family on an indexed grid and its consequence
/// for decreasing sequences vanishing pointwise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TightnessReport {
    pub passed: bool,
    /// `sup_mu mu(outside window k)` for each window.
    pub outside_mass: Vec<f64>,
    /// `sup_mu mu X_n` at the last term of each sequence.
    pub final_sup: Vec<f64>,
    /// `min_K (||X_n 1_K|| + outside_mass(K) ||X_0||)` at the last term of each sequence.
    pub dini_bound: Vec<f64>,
}

/// Checks that the outside mass of the nested windows `[lo, hi)` tends to
/// zero and that `sup_mu mu X_n` does for each decreasing sequence.
pub fn tightness_continuity_check(
    scenarios: &[Scenario],
    windows: &[(usize, usize)],
    seqs: &[Vec<Vec<f64>>],
    tol: f64,
) -> Result<TightnessReport> {
    let first = scenarios.first().ok_or_else(|| Error::Argument("no scenarios".into()))?;
    let n = first.weights().len();
    for mu in scenarios {
        check_len(n, mu.weights().len())?;
    }
    if windows.is_empty() {
        return Err(Error::Argument("no windows".into()));
    }
    for (i, &(lo, hi)) in windows.iter().enumerate() {
        if lo > hi || hi > n {
            return Err(Error::Argument(format!("window {i} = [{lo}, {hi}) is not inside the grid")));
        }
        if i > 0 {
            let (plo, phi) = windows[i - 1];
            if lo > plo || hi < phi {
                return Err(Error::Argument(format!("window {i} does not contain window {}", i - 1)));
            }
        }
    }
    let outside_mass: Vec<f64> = windows
        .iter()
        .map(|&(lo, hi)| {
            scenarios
                .iter()
                .map(|mu| {
                    let w = mu.weights();
                    w[..lo].iter().sum::<f64>() + w[hi..].iter().sum::<f64>()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut final_sup = Vec::with_capacity(seqs.len());
    let mut dini_bound = Vec::with_capacity(seqs.len());
    for (si, seq) in seqs.iter().enumerate() {
        let Some(last) = seq.last() else {
            return Err(Error::Argument(format!("sequence {si} is empty")));
        };
        for (k, x) in seq.iter().enumerate() {
            check_len(n, x.len())?;
            check_finite(x, "sequence term")?;
            if k > 0 {
                ordered(Direction::Decreasing, &seq[k - 1], x, k)?;
            }
        }
        final_sup.push(scenarios.iter().map(|mu| mu.expect(last)).fold(f64::NEG_INFINITY, f64::max));
        let x0 = sup_norm(&seq[0]);
        let bound = windows
            .iter()
            .zip(&outside_mass)
            .map(|(&(lo, hi), m)| sup_norm(&last[lo..hi]) + m * x0)
            .fold(f64::INFINITY, f64::min);
        dini_bound.push(bound);
    }
    let passed = outside_mass.last().is_some_and(|&m| m <= tol) && final_sup.iter().all(|&v| v <= tol);
    Ok(TightnessReport { passed, outside_mass, final_sup, dini_bound })
}

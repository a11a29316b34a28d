//! Nonlinear kernels on a finite state space: composition,
//! Chapman–Kolmogorov checks, parameter lifting, and convex Markov chains
//! built as consistent marginal families by backward induction.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_finite, check_len, Error, Result};
use crate::expectation::{EntropicModel, ExpectationModel, PenaltyModel};
use crate::kolmogorov::{
    checked_power, cylinder_eval, CylinderFunction, FamilyGenerator, FiniteSubset, MarginalFamily, ProductSpace,
};
use crate::report::ConsistencyReport;
use crate::space::{canonical_key, Scenario, StateSpace};

/// Tolerance of the Chapman–Kolmogorov check.
pub const CHAPMAN_TOL: f64 = 1e-9;

/// Default cap on the number of path scenarios in the scenario-set form.
pub const SCENARIO_CAP: usize = 4096;

/// Below this many slices the last-axis application runs sequentially.
const PARALLEL_SLICES: usize = 2048;

type Matrix = Vec<Vec<f64>>;

#[derive(Clone)]
enum KernelRepr {
    Identity,
    PerState(Vec<ExpectationModel>),
    /// `outer(x, inner(., f))`.
    Composed(NonlinearKernel, NonlinearKernel),
    /// `inner(s, f(., t))` on `S x T`.
    Lifted {
        inner: NonlinearKernel,
        aux: usize,
    },
}

/// A state-indexed family of expectations mapping functions to functions.
#[derive(Clone)]
pub struct NonlinearKernel {
    domain: StateSpace,
    repr: Arc<KernelRepr>,
}

impl fmt::Debug for NonlinearKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.repr.as_ref() {
            KernelRepr::Identity => "identity",
            KernelRepr::PerState(_) => "per-state",
            KernelRepr::Composed(..) => "composed",
            KernelRepr::Lifted { .. } => "lifted",
        };
        f.debug_struct("NonlinearKernel").field("domain", &self.domain).field("kind", &kind).finish()
    }
}

impl NonlinearKernel {
    /// One expectation per state, each on `domain`.
    pub fn per_state(domain: &StateSpace, models: Vec<ExpectationModel>) -> Result<Self> {
        check_len(domain.len(), models.len())?;
        for m in &models {
            domain.ensure_same(m.space())?;
        }
        Ok(Self { domain: domain.clone(), repr: Arc::new(KernelRepr::PerState(models)) })
    }

    pub fn identity(domain: &StateSpace) -> Self {
        Self { domain: domain.clone(), repr: Arc::new(KernelRepr::Identity) }
    }

    pub fn domain(&self) -> &StateSpace {
        &self.domain
    }

    /// `E(x, f)`.
    pub fn eval_state(&self, x: usize, f: &[f64]) -> Result<f64> {
        check_len(self.domain.len(), f.len())?;
        check_finite(f, "kernel input")?;
        if x >= self.domain.len() {
            return Err(Error::Argument(format!("state {x} outside the kernel domain")));
        }
        Ok(self.eval_raw(x, f))
    }

    /// `x -> E(x, f)`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.domain.len(), f.len())?;
        check_finite(f, "kernel input")?;
        Ok(self.apply_raw(f))
    }

    /// For `f` on `S^m x S` (last coordinate fastest), evaluates the slice
    /// `f(x_1, ..., x_m, .)` at the state `x_m`. With `m = 0` the slice is
    /// evaluated at state 0.
    pub fn apply_last_axis(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.domain.len();
        if !f.len().is_multiple_of(n) || f.is_empty() {
            return Err(Error::Dimension { expected: n * (f.len() / n).max(1), got: f.len() });
        }
        check_finite(f, "kernel input")?;
        Ok(self.apply_last_axis_raw(f))
    }

    fn apply_last_axis_raw(&self, f: &[f64]) -> Vec<f64> {
        let n = self.domain.len();
        let slices = f.len() / n;
        let eval = |(i, slice): (usize, &[f64])| self.eval_raw(i % n, slice);
        if slices >= PARALLEL_SLICES {
            f.par_chunks(n).enumerate().map(eval).collect()
        } else {
            f.chunks(n).enumerate().map(eval).collect()
        }
    }

    fn eval_raw(&self, x: usize, f: &[f64]) -> f64 {
        match self.repr.as_ref() {
            KernelRepr::Identity => f[x],
            KernelRepr::PerState(models) => models[x].eval_raw(f),
            KernelRepr::Composed(outer, inner) => outer.eval_raw(x, &inner.apply_raw(f)),
            KernelRepr::Lifted { inner, aux } => {
                let (s, t) = (x / aux, x % aux);
                let slice: Vec<f64> = (0..inner.domain.len()).map(|s2| f[s2 * aux + t]).collect();
                inner.eval_raw(s, &slice)
            }
        }
    }

    fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        match self.repr.as_ref() {
            KernelRepr::Identity => f.to_vec(),
            KernelRepr::Composed(outer, inner) => outer.apply_raw(&inner.apply_raw(f)),
            _ => (0..self.domain.len()).map(|x| self.eval_raw(x, f)).collect(),
        }
    }
}

/// `(k0 k1)(x, f) = k0(x, k1(., f))`.
pub fn compose(k0: &NonlinearKernel, k1: &NonlinearKernel) -> Result<NonlinearKernel> {
    k0.domain.ensure_same(&k1.domain)?;
    Ok(NonlinearKernel { domain: k0.domain.clone(), repr: Arc::new(KernelRepr::Composed(k0.clone(), k1.clone())) })
}

/// The kernel on `S x T` acting on the first coordinate with the second
/// held fixed. Product states are labeled `"s,t"`.
pub fn lift_parameter(k: &NonlinearKernel, aux: &StateSpace) -> Result<NonlinearKernel> {
    let size = k.domain.len().checked_mul(aux.len()).filter(|&n| n <= crate::kolmogorov::PRODUCT_CAP);
    if size.is_none() {
        return Err(Error::Capacity(format!("{} x {} states", k.domain.len(), aux.len())));
    }
    let labels = k.domain.labels().iter().flat_map(|s| aux.labels().iter().map(move |t| format!("{s},{t}")));
    Ok(NonlinearKernel {
        domain: StateSpace::new(labels)?,
        repr: Arc::new(KernelRepr::Lifted { inner: k.clone(), aux: aux.len() }),
    })
}

#[derive(Clone, Debug)]
enum OperatorForm {
    Sublinear { matrices: Vec<Matrix> },
    Convex { matrices: Vec<Matrix>, penalties: Vec<f64> },
    Entropic { rows: Matrix, theta: f64 },
}

/// A one-step transition operator built from stochastic matrices.
#[derive(Clone, Debug)]
pub struct OneStepOperator {
    domain: StateSpace,
    form: OperatorForm,
    kernel: NonlinearKernel,
}

fn check_stochastic(domain: &StateSpace, m: &Matrix, what: &str) -> Result<Vec<Scenario>> {
    check_len(domain.len(), m.len())?;
    m.iter()
        .enumerate()
        .map(|(i, row)| Scenario::new(domain, row.clone()).map_err(|e| Error::Domain(format!("{what} row {i}: {e}"))))
        .collect()
}

impl OneStepOperator {
    /// `P f(x) = max_k (A_k f)(x)`.
    pub fn sublinear(domain: &StateSpace, matrices: Vec<Matrix>) -> Result<Self> {
        let penalties = vec![0.0; matrices.len()];
        let kernel = penalty_kernel(domain, &matrices, &penalties)?;
        Ok(Self { domain: domain.clone(), form: OperatorForm::Sublinear { matrices }, kernel })
    }

    /// A single stochastic matrix.
    pub fn linear(domain: &StateSpace, matrix: Matrix) -> Result<Self> {
        Self::sublinear(domain, vec![matrix])
    }

    /// `P f(x) = max_k ((A_k f)(x) - a_k)`.
    pub fn convex(domain: &StateSpace, matrices: Vec<Matrix>, penalties: Vec<f64>) -> Result<Self> {
        check_len(matrices.len(), penalties.len())?;
        let kernel = penalty_kernel(domain, &matrices, &penalties)?;
        Ok(Self { domain: domain.clone(), form: OperatorForm::Convex { matrices, penalties }, kernel })
    }

    /// Row-wise entropic risk with reference rows `p` and risk aversion `theta`.
    pub fn entropic(domain: &StateSpace, rows: Matrix, theta: f64) -> Result<Self> {
        let refs = check_stochastic(domain, &rows, "reference")?;
        let models = refs
            .into_iter()
            .map(|p| EntropicModel::new(p, theta).map(ExpectationModel::from))
            .collect::<Result<Vec<_>>>()?;
        let kernel = NonlinearKernel::per_state(domain, models)?;
        Ok(Self { domain: domain.clone(), form: OperatorForm::Entropic { rows, theta }, kernel })
    }

    pub fn domain(&self) -> &StateSpace {
        &self.domain
    }

    pub fn kernel(&self) -> &NonlinearKernel {
        &self.kernel
    }

    /// The matrices of a sublinear operator.
    pub fn matrices(&self) -> Option<&[Matrix]> {
        match &self.form {
            OperatorForm::Sublinear { matrices } => Some(matrices),
            _ => None,
        }
    }

    /// The matrices and penalties of a convex operator.
    pub fn penalized_matrices(&self) -> Option<(&[Matrix], &[f64])> {
        match &self.form {
            OperatorForm::Convex { matrices, penalties } => Some((matrices, penalties)),
            _ => None,
        }
    }

    /// Reference rows and risk aversion of an entropic operator.
    pub fn entropic_rows(&self) -> Option<(&[Vec<f64>], f64)> {
        match &self.form {
            OperatorForm::Entropic { rows, theta } => Some((rows, *theta)),
            _ => None,
        }
    }

    pub fn is_sublinear(&self) -> bool {
        matches!(self.form, OperatorForm::Sublinear { .. })
    }

    pub fn is_linear(&self) -> bool {
        self.matrices().is_some_and(|m| m.len() == 1)
    }

    pub fn describe(&self) -> String {
        match &self.form {
            OperatorForm::Sublinear { matrices } => format!("sublinear, {} matrices", matrices.len()),
            OperatorForm::Convex { matrices, .. } => format!("convex, {} penalized matrices", matrices.len()),
            OperatorForm::Entropic { theta, .. } => format!("entropic rows, theta = {theta}"),
        }
    }

    /// `P^k` as a kernel (`P^0` is the identity).
    pub fn power(&self, k: usize) -> NonlinearKernel {
        let mut out = NonlinearKernel::identity(&self.domain);
        for _ in 0..k {
            out = NonlinearKernel {
                domain: self.domain.clone(),
                repr: Arc::new(KernelRepr::Composed(self.kernel.clone(), out)),
            };
        }
        out
    }

    /// For sublinear operators, the composition with another sublinear
    /// operator as a closed matrix set: `{A B}` for `A` in this set and `B`
    /// ranging over all matrices whose rows are picked independently from
    /// the rows of `other`.
    pub fn compose_closed(&self, other: &OneStepOperator) -> Result<OneStepOperator> {
        self.domain.ensure_same(&other.domain)?;
        let (Some(a_set), Some(b_set)) = (self.matrices(), other.matrices()) else {
            return Err(Error::Precondition("closed composition needs sublinear operators".into()));
        };
        let n = self.domain.len();
        let rows_per_state: Vec<Vec<&Vec<f64>>> = (0..n)
            .map(|x| {
                let mut seen = HashSet::new();
                b_set.iter().map(|b| &b[x]).filter(|r| seen.insert(canonical_key(r))).collect()
            })
            .collect();
        let count = rows_per_state.iter().try_fold(1usize, |acc, r| acc.checked_mul(r.len()));
        let count = count
            .and_then(|c| c.checked_mul(a_set.len()))
            .filter(|&c| c <= SCENARIO_CAP)
            .ok_or_else(|| Error::Capacity("closed composition has too many matrices".into()))?;
        let mut out = Vec::with_capacity(count);
        let mut seen = HashSet::new();
        for_each_choice(&rows_per_state.iter().map(Vec::len).collect::<Vec<_>>(), |choice| {
            let b: Matrix = choice.iter().enumerate().map(|(x, &c)| rows_per_state[x][c].clone()).collect();
            for a in a_set {
                let ab: Matrix =
                    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect();
                let key: Vec<u64> = ab.iter().flat_map(|r| canonical_key(r)).collect();
                if seen.insert(key) {
                    out.push(ab);
                }
            }
        });
        OneStepOperator::sublinear(&self.domain, out)
    }

    /// Checks the axioms of every per-state model on `samples` probe functions.
    pub fn verify(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.domain.len();
        let probes: Vec<crate::RandomVariable> = (0..samples.max(2))
            .map(|_| crate::RandomVariable::new(&self.domain, random_function(&mut rng, n)))
            .collect::<Result<_>>()?;
        let KernelRepr::PerState(models) = self.kernel.repr.as_ref() else { unreachable!() };
        for (x, m) in models.iter().enumerate() {
            let report = crate::axioms::verify_axioms(m, &probes, crate::AXIOM_TOL)?;
            if !report.is_convex_expectation() {
                return Err(Error::Precondition(format!(
                    "operator row {x} is not a convex expectation (violation {:e})",
                    report.worst_convex_violation()
                )));
            }
        }
        Ok(())
    }
}

fn penalty_kernel(domain: &StateSpace, matrices: &[Matrix], penalties: &[f64]) -> Result<NonlinearKernel> {
    if matrices.is_empty() {
        return Err(Error::Argument("operator needs at least one matrix".into()));
    }
    let rows = matrices
        .iter()
        .enumerate()
        .map(|(k, m)| check_stochastic(domain, m, &format!("matrix {k}")))
        .collect::<Result<Vec<_>>>()?;
    let models = (0..domain.len())
        .map(|x| {
            let sc = rows.iter().map(|r| r[x].clone()).collect();
            PenaltyModel::new(sc, penalties.to_vec()).map(ExpectationModel::from)
        })
        .collect::<Result<Vec<_>>>()?;
    NonlinearKernel::per_state(domain, models)
}

/// Calls `f` with every tuple `c` with `c[i] < sizes[i]`, last index fastest.
fn for_each_choice(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut c = vec![0usize; sizes.len()];
    loop {
        f(&c);
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            c[i] += 1;
            if c[i] < sizes[i] {
                break;
            }
            c[i] = 0;
        }
    }
}

fn random_function(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Kernels `E_{s,t}` indexed by pairs of grid times.
#[derive(Clone, Debug)]
pub struct KernelFamily {
    times: Vec<f64>,
    kernels: BTreeMap<(usize, usize), NonlinearKernel>,
}

impl KernelFamily {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("time grid must be finite and strictly increasing".into()));
        }
        Ok(Self { times, kernels: BTreeMap::new() })
    }

    /// `E_{k,l} = P^{l-k}` on the grid `0, 1, ..., horizon`.
    pub fn power_family(op: &OneStepOperator, horizon: usize) -> Result<Self> {
        let mut fam = Self::new((0..=horizon).map(|t| t as f64).collect())?;
        for s in 0..=horizon {
            for t in s + 1..=horizon {
                fam.insert(s, t, op.power(t - s))?;
            }
        }
        Ok(fam)
    }

    /// Sets `E_{s,t}` for grid indices `s < t`.
    pub fn insert(&mut self, s: usize, t: usize, k: NonlinearKernel) -> Result<()> {
        if s >= t || t >= self.times.len() {
            return Err(Error::Argument(format!("kernel index pair ({s}, {t}) is not increasing on the grid")));
        }
        if let Some(existing) = self.kernels.values().next() {
            existing.domain.ensure_same(&k.domain)?;
        }
        self.kernels.insert((s, t), k);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn get(&self, s: usize, t: usize) -> Result<&NonlinearKernel> {
        self.kernels.get(&(s, t)).ok_or_else(|| Error::Argument(format!("kernel family has no entry for ({s}, {t})")))
    }

    /// All triples `s < t < u` of grid indices.
    pub fn all_triples(&self) -> Vec<(usize, usize, usize)> {
        let n = self.times.len();
        let mut out = Vec::new();
        for s in 0..n {
            for t in s + 1..n {
                for u in t + 1..n {
                    out.push((s, t, u));
                }
            }
        }
        out
    }
}

/// Compares `E_{s,u}` with `E_{s,t} E_{t,u}` on the indicator basis and
/// `probes` random functions, over all states.
pub fn chapman_check(
    fam: &KernelFamily,
    triples: &[(usize, usize, usize)],
    probes: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::new(["s-u", "t"], CHAPMAN_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &(s, t, u) in triples {
        let (su, st, tu) = (fam.get(s, u)?, fam.get(s, t)?, fam.get(t, u)?);
        let n = su.domain.len();
        let mut fs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                v
            })
            .collect();
        fs.extend((0..probes).map(|_| random_function(&mut rng, n)));
        let mut worst = (0.0_f64, None);
        for f in fs {
            let direct = su.apply(&f)?;
            let via = st.apply(&tu.apply(&f)?)?;
            let d = direct.iter().zip(&via).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if d > worst.0 {
                worst = (d, Some(f));
            }
        }
        report.push(format!("{s}-{u}"), t.to_string(), worst.0, worst.1);
    }
    Ok(report)
}

/// A convex Markov chain on `S` with one-step operator `op`, initial
/// expectation `mu0` and times `0, ..., horizon`.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    op: OneStepOperator,
    mu0: ExpectationModel,
    horizon: usize,
    powers: Arc<Vec<NonlinearKernel>>,
}

impl MarkovChain {
    pub fn new(op: OneStepOperator, mu0: ExpectationModel, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Argument("horizon must be at least 1".into()));
        }
        op.domain.ensure_same(mu0.space())?;
        checked_power(op.domain.len(), horizon)?;
        let powers = (0..=horizon).map(|k| op.power(k)).collect();
        Ok(Self { op, mu0, horizon, powers: Arc::new(powers) })
    }

    pub fn operator(&self) -> &OneStepOperator {
        &self.op
    }

    pub fn initial(&self) -> &ExpectationModel {
        &self.mu0
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn power(&self, k: usize) -> Result<&NonlinearKernel> {
        self.powers.get(k).ok_or_else(|| Error::Argument(format!("power {k} beyond the horizon {}", self.horizon)))
    }

    fn check_subset(&self, j: &FiniteSubset) -> Result<()> {
        match j.indices().last() {
            Some(&last) if last as usize > self.horizon => {
                Err(Error::Argument(format!("{j} reaches beyond the horizon {}", self.horizon)))
            }
            _ => Ok(()),
        }
    }

    /// `E_J(f)` by backward induction over the last coordinate.
    pub fn evaluate(&self, j: &FiniteSubset, f: &[f64]) -> Result<f64> {
        self.check_subset(j)?;
        check_len(checked_power(self.op.domain.len(), j.len())?, f.len())?;
        check_finite(f, "path function")?;
        Ok(backward_induction(&self.powers, &self.mu0, j.indices(), f))
    }

    /// The tensors of the backward induction for `E_J(f)`: `f` on `S^J`,
    /// then its conditional values on each shorter prefix of `J`, ending
    /// with the vector handed to `mu0 P^{k_1}`.
    pub fn backward_tensors(&self, j: &FiniteSubset, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.evaluate(j, f)?;
        let ks = j.indices();
        let mut out = vec![f.to_vec()];
        for m in (1..ks.len()).rev() {
            let next = self.powers[(ks[m] - ks[m - 1]) as usize].apply_last_axis_raw(out.last().unwrap());
            out.push(next);
        }
        Ok(out)
    }

    /// The family `(E_J)` with entries evaluated by backward induction.
    pub fn family(&self) -> MarginalFamily {
        MarginalFamily::new(&self.op.domain, Arc::new(self.clone()))
    }

    /// The same family with each entry stored as its set of path scenarios
    /// (sublinear operator and initial model only).
    pub fn scenario_family(&self, cap: usize) -> Result<MarginalFamily> {
        if !self.op.is_sublinear() || !self.mu0.as_penalty().is_some_and(PenaltyModel::is_sublinear) {
            return Err(Error::Precondition("scenario sets need a sublinear operator and initial model".into()));
        }
        Ok(MarginalFamily::new(&self.op.domain, Arc::new(ScenarioChain { chain: self.clone(), cap })))
    }

    /// The scenario set of `E_J`: path laws under selections of one
    /// operator row per step and state, allowed to depend on the observed
    /// values at the earlier times of `J`.
    pub fn path_scenarios(&self, j: &FiniteSubset, cap: usize) -> Result<Vec<Vec<f64>>> {
        self.check_subset(j)?;
        let Some(matrices) = self.op.matrices() else {
            return Err(Error::Precondition("scenario sets need a sublinear operator".into()));
        };
        let Some(q0) = self.mu0.as_penalty().filter(|p| p.is_sublinear()) else {
            return Err(Error::Precondition("scenario sets need a sublinear initial model".into()));
        };
        let n = self.op.domain.len();
        checked_power(n, j.len())?;
        let rows: Vec<Vec<Vec<f64>>> = (0..n).map(|x| dedup(matrices.iter().map(|m| m[x].clone()))).collect();
        let ks = j.indices();
        // endpoint laws after `gap` steps from each state
        let mut reach_cache: BTreeMap<usize, Vec<Vec<Vec<f64>>>> = BTreeMap::new();
        let mut reach = |gap: usize| -> Result<Vec<Vec<Vec<f64>>>> {
            if let Some(r) = reach_cache.get(&gap) {
                return Ok(r.clone());
            }
            let r = (0..n).map(|x| endpoint_laws(&rows, x, gap, cap)).collect::<Result<Vec<_>>>()?;
            reach_cache.insert(gap, r.clone());
            Ok(r)
        };
        let first = reach(ks[0] as usize)?;
        let mut level: Vec<Vec<f64>> = Vec::new();
        for nu in q0.deduplicated().scenarios() {
            let w = nu.weights();
            let support: Vec<usize> = (0..n).filter(|&x| w[x] > 0.0).collect();
            let sizes: Vec<usize> = support.iter().map(|&x| first[x].len()).collect();
            ensure_count(level.len(), &sizes, cap)?;
            for_each_choice(&sizes, |c| {
                let mut law = vec![0.0; n];
                for (&x, &ci) in support.iter().zip(c) {
                    law.iter_mut().zip(&first[x][ci]).for_each(|(l, r)| *l += w[x] * r);
                }
                level.push(law);
            });
        }
        level = dedup(level);
        for win in ks.windows(2) {
            let next = reach((win[1] - win[0]) as usize)?;
            let mut out: Vec<Vec<f64>> = Vec::new();
            for pi in &level {
                let support: Vec<usize> = (0..pi.len()).filter(|&h| pi[h] > 0.0).collect();
                let sizes: Vec<usize> = support.iter().map(|&h| next[h % n].len()).collect();
                ensure_count(out.len(), &sizes, cap)?;
                for_each_choice(&sizes, |c| {
                    let mut law = vec![0.0; pi.len() * n];
                    for (&h, &ci) in support.iter().zip(c) {
                        for (y, r) in next[h % n][ci].iter().enumerate() {
                            law[h * n + y] = pi[h] * r;
                        }
                    }
                    out.push(law);
                });
            }
            level = dedup(out);
        }
        Ok(level)
    }
}

fn ensure_count(have: usize, sizes: &[usize], cap: usize) -> Result<()> {
    let count = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
    match count.and_then(|c| c.checked_add(have)) {
        Some(total) if total <= cap => Ok(()),
        _ => Err(Error::Capacity(format!("path scenario count exceeds {cap}"))),
    }
}

fn dedup(items: impl IntoIterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut seen = HashSet::new();
    items.into_iter().filter(|v| seen.insert(canonical_key(v))).collect()
}

/// Laws of the state after `gap` steps from `x`, one per row selection
/// depending on step and state.
fn endpoint_laws(rows: &[Vec<Vec<f64>>], x: usize, gap: usize, cap: usize) -> Result<Vec<Vec<f64>>> {
    let n = rows.len();
    let mut laws = vec![{
        let mut d = vec![0.0; n];
        d[x] = 1.0;
        d
    }];
    for _ in 0..gap {
        let mut out = Vec::new();
        for law in &laws {
            let support: Vec<usize> = (0..n).filter(|&y| law[y] > 0.0).collect();
            let sizes: Vec<usize> = support.iter().map(|&y| rows[y].len()).collect();
            ensure_count(out.len(), &sizes, cap)?;
            for_each_choice(&sizes, |c| {
                let mut next = vec![0.0; n];
                for (&y, &ci) in support.iter().zip(c) {
                    next.iter_mut().zip(&rows[y][ci]).for_each(|(o, r)| *o += law[y] * r);
                }
                out.push(next);
            });
        }
        laws = dedup(out);
    }
    Ok(laws)
}

fn backward_induction(powers: &[NonlinearKernel], mu0: &ExpectationModel, ks: &[u32], f: &[f64]) -> f64 {
    let mut g = f.to_vec();
    for m in (1..ks.len()).rev() {
        g = powers[(ks[m] - ks[m - 1]) as usize].apply_last_axis_raw(&g);
    }
    mu0.eval_raw(&powers[ks[0] as usize].apply_raw(&g))
}

impl FamilyGenerator for MarkovChain {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel> {
        self.check_subset(space.subset())?;
        let powers = self.powers.clone();
        let mu0 = self.mu0.clone();
        let ks = space.subset().indices().to_vec();
        Ok(ExpectationModel::oracle(states, "markov backward induction", move |f| {
            backward_induction(&powers, &mu0, &ks, f)
        }))
    }

    fn describe(&self) -> String {
        format!("Markov chain ({}), horizon {}", self.op.describe(), self.horizon)
    }
}

struct ScenarioChain {
    chain: MarkovChain,
    cap: usize,
}

impl FamilyGenerator for ScenarioChain {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel> {
        let laws = self.chain.path_scenarios(space.subset(), self.cap)?;
        let sc = laws
            .into_iter()
            .map(|w| {
                // renormalize away rounding from the products
                let total: f64 = w.iter().sum();
                Scenario::new(states, w.into_iter().map(|v| v / total).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PenaltyModel::sublinear(sc)?.into())
    }

    fn describe(&self) -> String {
        format!("{} as path scenarios", self.chain.describe())
    }
}

/// The lazily generated family of a Markov chain, evaluated by backward induction.
pub fn markov_chain_family(op: &OneStepOperator, mu0: &ExpectationModel, horizon: usize) -> Result<MarginalFamily> {
    Ok(MarkovChain::new(op.clone(), mu0.clone(), horizon)?.family())
}

/// `|E((f o pr_k)(g o pr_l)) - mu0(P^k(f P^{l-k} g))|`, the left side by
/// cylinder evaluation in the chain's family.
pub fn two_point_identity_check(chain: &MarkovChain, f: &[f64], g: &[f64], k: usize, l: usize) -> Result<f64> {
    if k >= l {
        return Err(Error::Argument(format!("need k < l, got {k} and {l}")));
    }
    let base = chain.op.domain();
    let n = base.len();
    check_len(n, f.len())?;
    check_len(n, g.len())?;
    let j = FiniteSubset::new(vec![k as u32, l as u32])?;
    let cyl = CylinderFunction::from_fn(base, j, |t| f[t[0]] * g[t[1]])?;
    let family = chain.family();
    let lhs = cylinder_eval(&family, &cyl)?;
    let inner = chain.power(l - k)?.apply(g)?;
    let prod: Vec<f64> = f.iter().zip(&inner).map(|(a, b)| a * b).collect();
    let rhs = chain.mu0.evaluate_values(&chain.power(k)?.apply(&prod)?)?;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> StateSpace {
        StateSpace::new(["a", "b"]).unwrap()
    }

    #[test]
    fn hand_evaluated_kernel() {
        let s = ab();
        let op = OneStepOperator::sublinear(
            &s,
            vec![vec![vec![1.0, 0.0], vec![0.5, 0.5]], vec![vec![0.0, 1.0], vec![0.5, 0.5]]],
        )
        .unwrap();
        assert_eq!(op.kernel().apply(&[2.0, 0.0]).unwrap(), vec![2.0, 1.0]);
        assert_eq!(op.kernel().apply(&[-1.5, -1.5]).unwrap(), vec![-1.5, -1.5]);
    }

    #[test]
    fn rows_must_be_stochastic() {
        let s = ab();
        assert!(OneStepOperator::linear(&s, vec![vec![0.6, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(OneStepOperator::linear(&s, vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn last_axis_slices_by_preceding_state() {
        let s = ab();
        let op = OneStepOperator::linear(&s, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        // f(x1, x2) = 10 x1 + x2, identity kernel picks x2 = x1
        let f = [0.0, 1.0, 10.0, 11.0];
        assert_eq!(op.kernel().apply_last_axis(&f).unwrap(), vec![0.0, 11.0]);
    }

    #[test]
    fn linear_two_coordinate_entry() {
        let s = ab();
        let p = vec![vec![0.7, 0.3], vec![0.2, 0.8]];
        let op = OneStepOperator::linear(&s, p.clone()).unwrap();
        let pi = [0.4, 0.6];
        let mu0 = PenaltyModel::linear(Scenario::new(&s, pi.to_vec()).unwrap()).into();
        let chain = MarkovChain::new(op, mu0, 2).unwrap();
        let f = [1.0, -2.0, 0.5, 3.0];
        let direct: f64 =
            (0..2).flat_map(|x| (0..2).map(move |y| (x, y))).map(|(x, y)| pi[x] * p[x][y] * f[2 * x + y]).sum();
        let v = chain.evaluate(&FiniteSubset::new(vec![0, 1]).unwrap(), &f).unwrap();
        assert!((v - direct).abs() < 1e-14);
    }

    #[test]
    fn lifted_kernel_ignores_parameter_when_f_does() {
        let s = ab();
        let op = OneStepOperator::sublinear(
            &s,
            vec![vec![vec![0.9, 0.1], vec![0.3, 0.7]], vec![vec![0.5, 0.5], vec![0.6, 0.4]]],
        )
        .unwrap();
        let t = StateSpace::new(["u", "v", "w"]).unwrap();
        let lifted = lift_parameter(op.kernel(), &t).unwrap();
        assert_eq!(lifted.domain().labels()[4], "b,v");
        let f: Vec<f64> = (0..6).map(|i| if i / 3 == 0 { 1.0 } else { -2.0 }).collect();
        let out = lifted.apply(&f).unwrap();
        let base = op.kernel().apply(&[1.0, -2.0]).unwrap();
        for i in 0..6 {
            assert_eq!(out[i], base[i / 3]);
        }
    }

    #[test]
    fn power_family_passes_and_perturbation_fails() {
        let s = ab();
        let m = vec![vec![vec![0.9, 0.1], vec![0.3, 0.7]], vec![vec![0.5, 0.5], vec![0.6, 0.4]]];
        let op = OneStepOperator::sublinear(&s, m).unwrap();
        let mut fam = KernelFamily::power_family(&op, 4).unwrap();
        let triples = fam.all_triples();
        assert!(chapman_check(&fam, &triples, 10, 3).unwrap().passed());
        let other = OneStepOperator::linear(&s, vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        fam.insert(0, 2, other.power(2)).unwrap();
        let r = chapman_check(&fam, &[(0, 1, 2)], 10, 3).unwrap();
        assert!(!r.passed());
        assert!(r.rows[0].witness.is_some());
    }

    #[test]
    fn path_scenarios_reproduce_backward_induction() {
        let s = ab();
        let m = vec![vec![vec![0.9, 0.1], vec![0.3, 0.7]], vec![vec![0.5, 0.5], vec![0.6, 0.4]]];
        let op = OneStepOperator::sublinear(&s, m).unwrap();
        let mu0 = PenaltyModel::linear(Scenario::new(&s, vec![0.5, 0.5]).unwrap()).into();
        let chain = MarkovChain::new(op, mu0, 3).unwrap();
        let j = FiniteSubset::new(vec![0, 2, 3]).unwrap();
        let laws = chain.path_scenarios(&j, SCENARIO_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let f = random_function(&mut rng, 8);
            let by_laws =
                laws.iter().map(|w| w.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()).fold(f64::MIN, f64::max);
            assert!((by_laws - chain.evaluate(&j, &f).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_composition_matches_evaluator() {
        let s = StateSpace::indexed(3).unwrap();
        let a = OneStepOperator::sublinear(
            &s,
            vec![
                vec![vec![0.2, 0.3, 0.5], vec![0.1, 0.1, 0.8], vec![1.0, 0.0, 0.0]],
                vec![vec![0.6, 0.2, 0.2], vec![0.3, 0.3, 0.4], vec![0.0, 0.5, 0.5]],
            ],
        )
        .unwrap();
        let closed = a.compose_closed(&a).unwrap();
        let composed = compose(a.kernel(), a.kernel()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let f = random_function(&mut rng, 3);
            let x = closed.kernel().apply(&f).unwrap();
            let y = composed.apply(&f).unwrap();
            for i in 0..3 {
                assert!((x[i] - y[i]).abs() < 1e-12);
            }
        }
    }
}

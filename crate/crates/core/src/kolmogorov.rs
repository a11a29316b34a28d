//! Consistent families of marginal expectations indexed by finite subsets of
//! a countable index set, and evaluation of the extended expectation on
//! cylinder functions.
//!
//! Functions on `S^J` are stored as flat vectors in lexicographic tuple
//! order, the smallest index of `J` being the most significant coordinate.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conjugate::hull_membership;
use crate::error::{check_len, Error, Result};
use crate::expectation::{pushforward, ExpectationModel, PenaltyModel, StateMap};
use crate::lp::LP_TOL;
use crate::report::ConsistencyReport;
use crate::space::{Scenario, StateSpace};

/// Largest product space `|S|^|J|` the library will enumerate.
pub const PRODUCT_CAP: usize = 1_000_000;

/// Tolerance of the primal and dual consistency checks.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// A nonempty finite set of indices, kept sorted and duplicate-free.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteSubset(Vec<u32>);

impl FiniteSubset {
    pub fn new(mut indices: Vec<u32>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Argument("index subsets must be nonempty".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument(format!("duplicate index in {indices:?}")));
        }
        Ok(Self(indices))
    }

    /// `{start, ..., end - 1}`.
    pub fn range(start: u32, end: u32) -> Result<Self> {
        Self::new((start..end).collect())
    }

    pub fn singleton(i: u32) -> Self {
        Self(vec![i])
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: u32) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &FiniteSubset) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &FiniteSubset) -> FiniteSubset {
        let mut v = self.0.clone();
        v.extend(other.0.iter().filter(|i| !self.contains(**i)));
        v.sort_unstable();
        FiniteSubset(v)
    }

    /// `J \ {i}`; `None` if that would be empty.
    pub fn without(&self, i: u32) -> Option<FiniteSubset> {
        let v: Vec<u32> = self.0.iter().copied().filter(|&j| j != i).collect();
        (!v.is_empty()).then_some(FiniteSubset(v))
    }

    /// All nonempty proper subsets, smallest first.
    pub fn proper_subsets(&self) -> Vec<FiniteSubset> {
        let n = self.len();
        let mut out: Vec<FiniteSubset> = (1..(1usize << n) - 1)
            .map(|mask| FiniteSubset((0..n).filter(|b| mask >> b & 1 == 1).map(|b| self.0[b]).collect()))
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }
}

impl fmt::Display for FiniteSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for FiniteSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub(crate) fn checked_power(base: usize, exp: usize) -> Result<usize> {
    let mut size = 1usize;
    for _ in 0..exp {
        size = size
            .checked_mul(base)
            .filter(|&s| s <= PRODUCT_CAP)
            .ok_or_else(|| Error::Capacity(format!("{base}^{exp} exceeds {PRODUCT_CAP} states")))?;
    }
    Ok(size)
}

/// The product space `S^J` with lexicographically enumerated tuples.
#[derive(Clone, Debug)]
pub struct ProductSpace {
    base: StateSpace,
    subset: FiniteSubset,
    size: usize,
}

impl ProductSpace {
    pub fn new(base: &StateSpace, subset: &FiniteSubset) -> Result<Self> {
        let size = checked_power(base.len(), subset.len())?;
        Ok(Self { base: base.clone(), subset: subset.clone(), size })
    }

    pub fn base(&self) -> &StateSpace {
        &self.base
    }

    pub fn subset(&self) -> &FiniteSubset {
        &self.subset
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn tuple(&self, mut index: usize) -> Vec<usize> {
        let s = self.base.len();
        let mut t = vec![0; self.subset.len()];
        for slot in t.iter_mut().rev() {
            *slot = index % s;
            index /= s;
        }
        t
    }

    pub fn index(&self, tuple: &[usize]) -> usize {
        let s = self.base.len();
        tuple.iter().fold(0, |acc, &x| acc * s + x)
    }

    /// A labeled state space whose states are the tuples, e.g. `"0,1,1"`.
    pub fn state_space(&self) -> Result<StateSpace> {
        let labels = (0..self.size)
            .map(|i| self.tuple(i).iter().map(|&x| self.base.labels()[x].as_str()).collect::<Vec<_>>().join(","));
        StateSpace::new(labels)
    }

    /// Tabulates `f` over all tuples.
    pub fn tabulate(&self, f: impl Fn(&[usize]) -> f64) -> Vec<f64> {
        (0..self.size).map(|i| f(&self.tuple(i))).collect()
    }
}

/// For each `J`-tuple index, the index of its projection onto `K`.
pub(crate) fn projection_indices(base: usize, k: &FiniteSubset, j: &FiniteSubset) -> Result<Vec<usize>> {
    if !k.is_subset_of(j) {
        return Err(Error::Argument(format!("{k} is not a subset of {j}")));
    }
    let size_j = checked_power(base, j.len())?;
    let positions: Vec<usize> = k.indices().iter().map(|i| j.indices().binary_search(i).unwrap()).collect();
    let nj = j.len();
    // stride of each J coordinate in the K index
    let mut stride = vec![0usize; nj];
    let mut s = 1usize;
    for &p in positions.iter().rev() {
        stride[p] = s;
        s *= base;
    }
    let mut out = Vec::with_capacity(size_j);
    let mut digits = vec![0usize; nj];
    let mut kidx = 0usize;
    for _ in 0..size_j {
        out.push(kidx);
        // increment the J odometer, last coordinate fastest
        for p in (0..nj).rev() {
            digits[p] += 1;
            kidx += stride[p];
            if digits[p] < base {
                break;
            }
            kidx -= stride[p] * base;
            digits[p] = 0;
        }
    }
    Ok(out)
}

/// `f o pr_JK`: lifts a function on `S^K` to `S^J` for `K ⊆ J`.
pub fn project_function(base: &StateSpace, f: &[f64], k: &FiniteSubset, j: &FiniteSubset) -> Result<Vec<f64>> {
    check_len(checked_power(base.len(), k.len())?, f.len())?;
    Ok(projection_indices(base.len(), k, j)?.into_iter().map(|i| f[i]).collect())
}

/// The marginal `E o pr_JK^-1` of an expectation on `S^J`.
pub fn pushforward_marginal(
    model: &ExpectationModel,
    base: &StateSpace,
    j: &FiniteSubset,
    k: &FiniteSubset,
) -> Result<ExpectationModel> {
    let pj = ProductSpace::new(base, j)?;
    check_len(pj.size(), model.space().len())?;
    let pk = ProductSpace::new(base, k)?;
    let map = StateMap::new(model.space(), &pk.state_space()?, projection_indices(base.len(), k, j)?)?;
    pushforward(model, &map)
}

/// A function on paths that depends only on the coordinates in `subset`.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFunction {
    subset: FiniteSubset,
    base_size: usize,
    values: Vec<f64>,
}

impl CylinderFunction {
    pub fn new(base: &StateSpace, subset: FiniteSubset, values: Vec<f64>) -> Result<Self> {
        check_len(checked_power(base.len(), subset.len())?, values.len())?;
        crate::error::check_finite(&values, "cylinder function")?;
        Ok(Self { subset, base_size: base.len(), values })
    }

    pub fn from_fn(base: &StateSpace, subset: FiniteSubset, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let values = ProductSpace::new(base, &subset)?.tabulate(f);
        Self::new(base, subset, values)
    }

    pub fn constant(base: &StateSpace, subset: FiniteSubset, alpha: f64) -> Result<Self> {
        let n = checked_power(base.len(), subset.len())?;
        Self::new(base, subset, vec![alpha; n])
    }

    pub fn subset(&self) -> &FiniteSubset {
        &self.subset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The same path function written over a larger index set.
    pub fn lift_to(&self, j: &FiniteSubset) -> Result<Self> {
        let idx = projection_indices(self.base_size, &self.subset, j)?;
        Ok(Self {
            subset: j.clone(),
            base_size: self.base_size,
            values: idx.into_iter().map(|i| self.values[i]).collect(),
        })
    }

    /// Value at a path given as a lookup `index -> state`.
    pub fn at_path(&self, path: impl Fn(u32) -> usize) -> f64 {
        let idx = self.subset.indices().iter().fold(0, |acc, &i| acc * self.base_size + path(i));
        self.values[idx]
    }
}

/// Produces the marginal expectation for a given index subset.
pub trait FamilyGenerator: Send + Sync {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel>;

    fn describe(&self) -> String {
        "family".into()
    }
}

/// A family `(E_J)` over finite index subsets, generated lazily and memoized.
pub struct MarginalFamily {
    base: StateSpace,
    generator: Arc<dyn FamilyGenerator>,
    entries: RwLock<HashMap<FiniteSubset, Arc<ExpectationModel>>>,
    lazy_probes: Option<usize>,
    checked: RwLock<HashSet<FiniteSubset>>,
}

impl fmt::Debug for MarginalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarginalFamily")
            .field("base", &self.base)
            .field("generator", &self.generator.describe())
            .finish_non_exhaustive()
    }
}

impl MarginalFamily {
    pub fn new(base: &StateSpace, generator: Arc<dyn FamilyGenerator>) -> Self {
        Self {
            base: base.clone(),
            generator,
            entries: RwLock::new(HashMap::new()),
            lazy_probes: None,
            checked: RwLock::new(HashSet::new()),
        }
    }

    /// Before the first cylinder evaluation over `J`, check `(J, J \ {j})`
    /// for every `j` with `probes` random functions.
    pub fn with_lazy_check(mut self, probes: usize) -> Self {
        self.lazy_probes = Some(probes);
        self
    }

    pub fn base(&self) -> &StateSpace {
        &self.base
    }

    pub fn generator(&self) -> &Arc<dyn FamilyGenerator> {
        &self.generator
    }

    pub fn product_space(&self, j: &FiniteSubset) -> Result<ProductSpace> {
        ProductSpace::new(&self.base, j)
    }

    /// `E_J`, generated on first access.
    pub fn entry(&self, j: &FiniteSubset) -> Result<Arc<ExpectationModel>> {
        if let Some(e) = self.entries.read().get(j) {
            return Ok(e.clone());
        }
        let mut entries = self.entries.write();
        if let Some(e) = entries.get(j) {
            return Ok(e.clone());
        }
        let space = self.product_space(j)?;
        let states = space.state_space()?;
        let model = self.generator.generate(&space, &states)?;
        check_len(space.size(), model.space().len())?;
        let model = Arc::new(model);
        entries.insert(j.clone(), model.clone());
        Ok(model)
    }

    /// Subsets generated so far, sorted.
    pub fn cached_subsets(&self) -> Vec<FiniteSubset> {
        let mut v: Vec<FiniteSubset> = self.entries.read().keys().cloned().collect();
        v.sort();
        v
    }

    fn ensure_checked(&self, j: &FiniteSubset) -> Result<()> {
        let Some(probes) = self.lazy_probes else { return Ok(()) };
        if j.len() < 2 || self.checked.read().contains(j) {
            return Ok(());
        }
        let pairs: Vec<(FiniteSubset, FiniteSubset)> =
            j.indices().iter().filter_map(|&i| j.without(i)).map(|k| (j.clone(), k)).collect();
        let seed = j.indices().iter().fold(0x5eed_u64, |h, &i| h.wrapping_mul(31).wrapping_add(i as u64));
        let report = check_pairs(self, &pairs, probes, seed, false)?;
        if let Some(row) = report.first_failure() {
            return Err(Error::Consistency(format!(
                "E_{} and E_{} disagree by {:e}",
                row.left, row.right, row.max_discrepancy
            )));
        }
        self.checked.write().insert(j.clone());
        Ok(())
    }
}

/// Evaluates the extended expectation on a cylinder function: `E(f o pr_J) = E_J(f)`.
pub fn cylinder_eval(family: &MarginalFamily, g: &CylinderFunction) -> Result<f64> {
    if g.base_size != family.base().len() {
        return Err(Error::Dimension { expected: family.base().len(), got: g.base_size });
    }
    family.ensure_checked(&g.subset)?;
    family.entry(&g.subset)?.evaluate_values(&g.values)
}

fn random_function(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Checks `E_K(f) = E_J(f o pr_JK)` for each pair on the indicator basis of
/// `S^K` and on `probes` random functions with values in `[-1, 1]`.
pub fn check_consistency_expectations(
    family: &MarginalFamily,
    pairs: &[(FiniteSubset, FiniteSubset)],
    probes: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    check_pairs(family, pairs, probes, seed, true)
}

fn check_pairs(
    family: &MarginalFamily,
    pairs: &[(FiniteSubset, FiniteSubset)],
    probes: usize,
    seed: u64,
    indicators: bool,
) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::new(["J", "K"], CONSISTENCY_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = family.base().len();
    for (j, k) in pairs {
        let idx = projection_indices(s, k, j)?;
        let ej = family.entry(j)?;
        let ek = family.entry(k)?;
        let nk = ek.space().len();
        let mut probes_k: Vec<Vec<f64>> = Vec::new();
        if indicators {
            probes_k.extend((0..nk).map(|i| {
                let mut v = vec![0.0; nk];
                v[i] = 1.0;
                v
            }));
        }
        probes_k.extend((0..probes).map(|_| random_function(&mut rng, nk)));
        let mut worst = (0.0_f64, None);
        for f in probes_k {
            let lifted: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
            let d = (ek.evaluate_values(&f)? - ej.evaluate_values(&lifted)?).abs();
            if d > worst.0 || d.is_nan() {
                worst = (if d.is_nan() { f64::INFINITY } else { d }, Some(f));
            }
        }
        report.push(j.to_string(), k.to_string(), worst.0, worst.1);
    }
    Ok(report)
}

fn sublinear_entry(family: &MarginalFamily, j: &FiniteSubset) -> Result<PenaltyModel> {
    match family.entry(j)?.as_ref() {
        ExpectationModel::Penalty(pm) if pm.is_sublinear() => Ok(pm.deduplicated()),
        other => Err(Error::Precondition(format!(
            "E_{j} has kind {}; the scenario-set check needs zero-penalty scenarios (use the scenario form)",
            other.kind()
        ))),
    }
}

/// Largest separation of any of `points` from the hull of `generators`,
/// with a separating function; `(0, None)` when all are members.
fn hull_excess(generators: &[Scenario], points: &[Scenario]) -> Result<(f64, Option<Vec<f64>>)> {
    let gens: Vec<&[f64]> = generators.iter().map(|g| g.weights()).collect();
    let keys: HashSet<Vec<u64>> = generators.iter().map(|g| g.canonical_key()).collect();
    let mut worst = (0.0_f64, None);
    for p in points {
        if keys.contains(&p.canonical_key()) {
            continue;
        }
        let m = hull_membership(&gens, p.weights(), LP_TOL)?;
        if !m.member && m.separation > worst.0 {
            worst = (m.separation, m.witness);
        }
    }
    Ok(worst)
}

/// Checks `Q_J o pr_JK^-1 = Q_K` for sublinear entries: every pushed scenario
/// lies in the hull of `Q_K`, and every generator of `Q_K` in the hull of the
/// pushed scenarios. The discrepancy is the worst separation found.
pub fn check_consistency_scenario_sets(
    family: &MarginalFamily,
    pairs: &[(FiniteSubset, FiniteSubset)],
) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::new(["J", "K"], CONSISTENCY_TOL);
    for (j, k) in pairs {
        let qj = sublinear_entry(family, j)?;
        let qk = sublinear_entry(family, k)?;
        let pushed = match pushforward_marginal(&qj.into(), family.base(), j, k)? {
            ExpectationModel::Penalty(pm) => pm.deduplicated(),
            _ => unreachable!("penalty models push to penalty models"),
        };
        let (into_k, w1) = hull_excess(qk.scenarios(), pushed.scenarios())?;
        let (from_k, w2) = hull_excess(pushed.scenarios(), qk.scenarios())?;
        let (d, w) = if into_k >= from_k { (into_k, w1) } else { (from_k, w2) };
        report.push(j.to_string(), k.to_string(), d, w);
    }
    Ok(report)
}

/// The `J`-marginal of the robust extension. By the extension theorem it is
/// `Q_J` itself; it is returned after checking that it is the pushforward of
/// `Q_J'` for every listed superset (all cached supersets when none given).
///
/// Only marginals are exposed: the path-space set with these marginals is
/// not unique.
pub fn extension_marginal(
    family: &MarginalFamily,
    j: &FiniteSubset,
    supersets: &[FiniteSubset],
) -> Result<PenaltyModel> {
    let qj = sublinear_entry(family, j)?;
    let candidates: Vec<FiniteSubset> = if supersets.is_empty() {
        family.cached_subsets().into_iter().filter(|s| j.is_subset_of(s) && s != j).collect()
    } else {
        supersets.to_vec()
    };
    let pairs: Vec<(FiniteSubset, FiniteSubset)> = candidates
        .into_iter()
        .map(|s| {
            if j.is_subset_of(&s) {
                Ok((s, j.clone()))
            } else {
                Err(Error::Argument(format!("{s} does not contain {j}")))
            }
        })
        .collect::<Result<_>>()?;
    let report = check_consistency_scenario_sets(family, &pairs)?;
    if let Some(row) = report.first_failure() {
        return Err(Error::Consistency(format!(
            "Q_{} is not the marginal of Q_{} (separation {:e})",
            row.right, row.left, row.max_discrepancy
        )));
    }
    Ok(qj)
}

/// Entries given explicitly; missing subsets are an error.
pub struct ExplicitFamily {
    entries: HashMap<FiniteSubset, ExpectationModel>,
}

impl ExplicitFamily {
    pub fn new(entries: impl IntoIterator<Item = (FiniteSubset, ExpectationModel)>) -> Self {
        Self { entries: entries.into_iter().collect() }
    }
}

impl FamilyGenerator for ExplicitFamily {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel> {
        let j = space.subset();
        let model = self.entries.get(j).ok_or_else(|| Error::Argument(format!("family has no entry for {j}")))?;
        check_len(space.size(), model.space().len())?;
        // rebase onto the canonical tuple labels
        Ok(match model {
            ExpectationModel::Penalty(pm) => rebase_penalty(pm, states)?.into(),
            other => other.clone(),
        })
    }

    fn describe(&self) -> String {
        format!("explicit family with {} entries", self.entries.len())
    }
}

fn rebase_penalty(pm: &PenaltyModel, states: &StateSpace) -> Result<PenaltyModel> {
    let scenarios =
        pm.scenarios().iter().map(|s| Scenario::new(states, s.weights().to_vec())).collect::<Result<Vec<_>>>()?;
    PenaltyModel::new(scenarios, pm.penalties().to_vec())
}

/// `E_J = delta_{y_J}` for a fixed path `y` (coordinates beyond the stored
/// prefix are taken to be state 0).
pub struct DiracPathFamily {
    path: Vec<usize>,
}

impl DiracPathFamily {
    pub fn new(path: Vec<usize>) -> Self {
        Self { path }
    }

    pub fn state_at(&self, i: u32) -> usize {
        self.path.get(i as usize).copied().unwrap_or(0)
    }
}

impl FamilyGenerator for DiracPathFamily {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel> {
        let tuple: Vec<usize> = space.subset().indices().iter().map(|&i| self.state_at(i)).collect();
        if let Some(&bad) = tuple.iter().find(|&&x| x >= space.base().len()) {
            return Err(Error::Argument(format!("path state {bad} outside the base space")));
        }
        Ok(PenaltyModel::linear(Scenario::dirac(states, space.index(&tuple))?).into())
    }

    fn describe(&self) -> String {
        "Dirac path family".into()
    }
}

/// `Q_J` = all probability measures on `S^J`, i.e. `E_J(f) = max f`.
///
/// Small product spaces are stored as Dirac scenarios; above
/// [`FullSimplexFamily::SCENARIO_LIMIT`] states the entry is the `max`
/// evaluator.
pub struct FullSimplexFamily;

impl FullSimplexFamily {
    pub const SCENARIO_LIMIT: usize = 256;
}

impl FamilyGenerator for FullSimplexFamily {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel> {
        if space.size() <= Self::SCENARIO_LIMIT {
            let sc = (0..space.size()).map(|i| Scenario::dirac(states, i)).collect::<Result<Vec<_>>>()?;
            Ok(PenaltyModel::sublinear(sc)?.into())
        } else {
            Ok(ExpectationModel::oracle(states, "max", |x| x.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        }
    }

    fn describe(&self) -> String {
        "full simplex family".into()
    }
}

/// The i.i.d. product of a single law `p` on `S`: a linear family.
pub struct ProductMeasureFamily {
    p: Vec<f64>,
}

impl ProductMeasureFamily {
    pub fn new(p: &Scenario) -> Self {
        Self { p: p.weights().to_vec() }
    }
}

impl FamilyGenerator for ProductMeasureFamily {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel> {
        check_len(space.base().len(), self.p.len())?;
        let w = space.tabulate(|t| t.iter().map(|&x| self.p[x]).product());
        let total: f64 = w.iter().sum();
        let w = w.into_iter().map(|v| v / total).collect();
        Ok(PenaltyModel::linear(Scenario::new(states, w)?).into())
    }

    fn describe(&self) -> String {
        "product measure family".into()
    }
}

/// Another family with some entries replaced.
pub struct OverrideFamily {
    inner: Arc<dyn FamilyGenerator>,
    overrides: ExplicitFamily,
}

impl OverrideFamily {
    pub fn new(
        inner: Arc<dyn FamilyGenerator>,
        overrides: impl IntoIterator<Item = (FiniteSubset, ExpectationModel)>,
    ) -> Self {
        Self { inner, overrides: ExplicitFamily::new(overrides) }
    }
}

impl FamilyGenerator for OverrideFamily {
    fn generate(&self, space: &ProductSpace, states: &StateSpace) -> Result<ExpectationModel> {
        if self.overrides.entries.contains_key(space.subset()) {
            self.overrides.generate(space, states)
        } else {
            self.inner.generate(space, states)
        }
    }

    fn describe(&self) -> String {
        format!("{} with {} overridden entries", self.inner.describe(), self.overrides.entries.len())
    }
}

//! Expectation models on a finite state space and their evaluation.
//!
//! A convex expectation is stored in dual form, `E(X) = max_k (mu_k X - a_k)`,
//! whenever possible. Scenarios with infinite penalty are simply absent.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{check_finite, check_len, Error, Result};
use crate::space::{centered_dot, RandomVariable, Scenario, StateSpace};

/// A finite family of scenarios with nonnegative penalties.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyModel {
    space: StateSpace,
    scenarios: Vec<Scenario>,
    penalties: Vec<f64>,
}

impl PenaltyModel {
    pub fn new(scenarios: Vec<Scenario>, penalties: Vec<f64>) -> Result<Self> {
        let first =
            scenarios.first().ok_or_else(|| Error::Argument("penalty model needs at least one scenario".into()))?;
        let space = first.space().clone();
        check_len(scenarios.len(), penalties.len())?;
        check_finite(&penalties, "penalty")?;
        for s in &scenarios[1..] {
            space.ensure_same(s.space())?;
        }
        if penalties.iter().any(|&a| a < 0.0) {
            return Err(Error::Domain("penalties must be nonnegative".into()));
        }
        let min = penalties.iter().copied().fold(f64::INFINITY, f64::min);
        if min != 0.0 {
            return Err(Error::Domain(format!(
                "smallest penalty is {min}; a zero-penalty scenario is needed for E(0) = 0"
            )));
        }
        Ok(Self { space, scenarios, penalties })
    }

    /// All penalties zero: a sublinear expectation, the max over `scenarios`.
    pub fn sublinear(scenarios: Vec<Scenario>) -> Result<Self> {
        let n = scenarios.len();
        Self::new(scenarios, vec![0.0; n])
    }

    /// A single scenario: the linear expectation.
    pub fn linear(mu: Scenario) -> Self {
        Self { space: mu.space().clone(), scenarios: vec![mu], penalties: vec![0.0] }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn penalties(&self) -> &[f64] {
        &self.penalties
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn is_sublinear(&self) -> bool {
        self.penalties.iter().all(|&a| a == 0.0)
    }

    /// `max_k (mu_k x - a_k)` with the smallest maximizing index.
    pub fn dual_eval_values(&self, x: &[f64]) -> Result<(f64, usize)> {
        check_len(self.space.len(), x.len())?;
        check_finite(x, "random variable")?;
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, (mu, a)) in self.scenarios.iter().zip(&self.penalties).enumerate() {
            let v = centered_dot(mu.weights(), x) - a;
            if v > best.0 {
                best = (v, k);
            }
        }
        Ok(best)
    }

    /// Drops scenarios whose weights coincide after rounding to 12 decimals,
    /// keeping the smallest penalty among duplicates.
    pub fn deduplicated(&self) -> Self {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut scenarios = Vec::new();
        let mut penalties: Vec<f64> = Vec::new();
        for (mu, &a) in self.scenarios.iter().zip(&self.penalties) {
            match seen.get(&mu.canonical_key()) {
                Some(&i) => penalties[i] = penalties[i].min(a),
                None => {
                    seen.insert(mu.canonical_key(), scenarios.len());
                    scenarios.push(mu.clone());
                    penalties.push(a);
                }
            }
        }
        Self { space: self.space.clone(), scenarios, penalties }
    }
}

/// The entropic risk measure `theta^-1 log sum_i p_i exp(theta x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropicModel {
    reference: Scenario,
    theta: f64,
}

impl EntropicModel {
    pub fn new(reference: Scenario, theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::Domain(format!("risk aversion must be positive, got {theta}")));
        }
        Ok(Self { reference, theta })
    }

    pub fn reference(&self) -> &Scenario {
        &self.reference
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn space(&self) -> &StateSpace {
        self.reference.space()
    }

    pub(crate) fn eval_values(&self, x: &[f64]) -> f64 {
        let p = self.reference.weights();
        let m = x.iter().zip(p).filter(|(_, &pi)| pi > 0.0).map(|(&xi, _)| xi).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 =
            x.iter().zip(p).filter(|(_, &pi)| pi > 0.0).map(|(&xi, &pi)| pi * (self.theta * (xi - m)).exp()).sum();
        m + s.ln() / self.theta
    }

    /// Softmax weights `p_i e^{theta x_i} / sum`, the gradient of the model at `x`.
    pub(crate) fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let p = self.reference.weights();
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = x.iter().zip(p).map(|(&xi, &pi)| pi * (self.theta * (xi - m)).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }
}

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied evaluator with no known dual form. Its axioms are checked,
/// never assumed.
#[derive(Clone)]
pub struct OracleModel {
    space: StateSpace,
    name: String,
    eval: Evaluator,
}

impl OracleModel {
    pub fn new(space: &StateSpace, name: impl Into<String>, eval: Evaluator) -> Self {
        Self { space: space.clone(), name: name.into(), eval }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }
}

impl fmt::Debug for OracleModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleModel").field("space", &self.space).field("name", &self.name).finish_non_exhaustive()
    }
}

/// A nonlinear expectation on a finite space.
#[derive(Clone, Debug)]
pub enum ExpectationModel {
    Penalty(PenaltyModel),
    Entropic(EntropicModel),
    Oracle(OracleModel),
}

impl From<PenaltyModel> for ExpectationModel {
    fn from(m: PenaltyModel) -> Self {
        Self::Penalty(m)
    }
}

impl From<EntropicModel> for ExpectationModel {
    fn from(m: EntropicModel) -> Self {
        Self::Entropic(m)
    }
}

impl From<OracleModel> for ExpectationModel {
    fn from(m: OracleModel) -> Self {
        Self::Oracle(m)
    }
}

impl ExpectationModel {
    pub fn oracle<F>(space: &StateSpace, name: &str, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::Oracle(OracleModel::new(space, name, Arc::new(f)))
    }

    pub fn space(&self) -> &StateSpace {
        match self {
            Self::Penalty(m) => m.space(),
            Self::Entropic(m) => m.space(),
            Self::Oracle(m) => m.space(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Penalty(_) => "penalty",
            Self::Entropic(_) => "entropic",
            Self::Oracle(_) => "oracle",
        }
    }

    pub fn as_penalty(&self) -> Option<&PenaltyModel> {
        match self {
            Self::Penalty(m) => Some(m),
            _ => None,
        }
    }

    /// Evaluates the expectation of a random variable on the model's space.
    pub fn evaluate(&self, x: &RandomVariable) -> Result<f64> {
        self.space().ensure_same(x.space())?;
        self.evaluate_values(x.values())
    }

    /// Same as [`evaluate`](Self::evaluate) on a bare value vector.
    pub fn evaluate_values(&self, x: &[f64]) -> Result<f64> {
        check_len(self.space().len(), x.len())?;
        check_finite(x, "random variable")?;
        let v = self.eval_raw(x);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{} model returned {v}", self.kind())));
        }
        Ok(v)
    }
}

impl ExpectationModel {
    /// Evaluation without length or finiteness checks, for inner loops.
    pub(crate) fn eval_raw(&self, x: &[f64]) -> f64 {
        match self {
            Self::Penalty(m) => m
                .scenarios
                .iter()
                .zip(&m.penalties)
                .map(|(mu, a)| centered_dot(mu.weights(), x) - a)
                .fold(f64::NEG_INFINITY, f64::max),
            Self::Entropic(m) => m.eval_values(x),
            Self::Oracle(m) => (m.eval)(x),
        }
    }
}

/// `(max_k (mu_k x - a_k), smallest maximizing k)`.
pub fn dual_eval(pm: &PenaltyModel, x: &RandomVariable) -> Result<(f64, usize)> {
    pm.space().ensure_same(x.space())?;
    pm.dual_eval_values(x.values())
}

/// A total map between finite state spaces, given by state indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMap {
    source: StateSpace,
    target: StateSpace,
    image: Vec<usize>,
}

impl StateMap {
    pub fn new(source: &StateSpace, target: &StateSpace, image: Vec<usize>) -> Result<Self> {
        check_len(source.len(), image.len())?;
        if let Some(i) = image.iter().position(|&j| j >= target.len()) {
            return Err(Error::Domain(format!("state {i} maps to index {} outside the target space", image[i])));
        }
        Ok(Self { source: source.clone(), target: target.clone(), image })
    }

    pub fn identity(space: &StateSpace) -> Self {
        Self { source: space.clone(), target: space.clone(), image: (0..space.len()).collect() }
    }

    pub fn by_labels(source: &StateSpace, target: &StateSpace, f: impl Fn(&str) -> String) -> Result<Self> {
        let image = source
            .labels()
            .iter()
            .map(|l| {
                let t = f(l);
                target.index_of(&t).ok_or_else(|| Error::Domain(format!("image {t:?} of {l:?} is not in the target")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, target, image)
    }

    pub fn source(&self) -> &StateSpace {
        &self.source
    }

    pub fn target(&self) -> &StateSpace {
        &self.target
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    /// `Y o T` for `Y` on the target.
    pub fn pull_back(&self, y: &[f64]) -> Vec<f64> {
        self.image.iter().map(|&j| y[j]).collect()
    }

    /// `mu o T^-1`.
    pub fn push_weights(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target.len()];
        for (&j, &wi) in self.image.iter().zip(w) {
            out[j] += wi;
        }
        out
    }

    pub fn push_scenario(&self, mu: &Scenario) -> Result<Scenario> {
        self.source.ensure_same(mu.space())?;
        Scenario::new(&self.target, self.push_weights(mu.weights()))
    }
}

/// Image of an expectation under a state map, `Y -> E(Y o T)`.
///
/// Penalty models map scenario-wise with unchanged penalties; other kinds
/// become an evaluator wrapping the original model.
pub fn pushforward(model: &ExpectationModel, map: &StateMap) -> Result<ExpectationModel> {
    model.space().ensure_same(map.source())?;
    match model {
        ExpectationModel::Penalty(pm) => {
            let scenarios = pm.scenarios().iter().map(|mu| map.push_scenario(mu)).collect::<Result<Vec<_>>>()?;
            Ok(PenaltyModel::new(scenarios, pm.penalties().to_vec())?.into())
        }
        other => {
            let inner = other.clone();
            let target = map.target().clone();
            let map = map.clone();
            let name = format!("pushforward of {}", inner.kind());
            Ok(ExpectationModel::oracle(&target, &name, move |y| {
                inner.evaluate_values(&map.pull_back(y)).unwrap_or(f64::NAN)
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> StateSpace {
        StateSpace::new(["0", "1"]).unwrap()
    }

    fn diracs(s: &StateSpace, penalties: Vec<f64>) -> PenaltyModel {
        let sc = (0..s.len()).map(|i| Scenario::dirac(s, i).unwrap()).collect();
        PenaltyModel::new(sc, penalties).unwrap()
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let s = StateSpace::indexed(3).unwrap();
        let pm = PenaltyModel::new(
            vec![Scenario::new(&s, vec![0.1, 0.2, 0.7]).unwrap(), Scenario::new(&s, vec![0.3, 0.3, 0.4]).unwrap()],
            vec![0.0, 0.25],
        )
        .unwrap();
        let m = ExpectationModel::from(pm);
        for alpha in [-3.3, 0.0, 0.1, 17.25] {
            let x = RandomVariable::constant(&s, alpha).unwrap();
            assert_eq!(m.evaluate(&x).unwrap(), alpha);
        }
    }

    #[test]
    fn dirac_scenarios_give_pointwise_max() {
        let s = two();
        let m = ExpectationModel::from(diracs(&s, vec![0.0, 0.0]));
        let x = RandomVariable::new(&s, vec![3.0, -1.0]).unwrap();
        assert_eq!(m.evaluate(&x).unwrap(), 3.0);
    }

    #[test]
    fn dual_eval_picks_smallest_index_and_respects_penalties() {
        let s = two();
        let pm = diracs(&s, vec![0.0, 0.0]);
        let x = RandomVariable::new(&s, vec![5.0, 2.0]).unwrap();
        assert_eq!(dual_eval(&pm, &x).unwrap(), (5.0, 0));
        let tie = RandomVariable::new(&s, vec![1.0, 1.0]).unwrap();
        assert_eq!(dual_eval(&pm, &tie).unwrap().1, 0);

        let pm = diracs(&s, vec![0.0, 10.0]);
        assert_eq!(dual_eval(&pm, &x).unwrap(), (5.0, 0));
        let x = RandomVariable::new(&s, vec![-20.0, 2.0]).unwrap();
        assert_eq!(dual_eval(&pm, &x).unwrap(), (-8.0, 1));
    }

    #[test]
    fn single_scenario_is_linear() {
        let s = StateSpace::indexed(3).unwrap();
        let mu = Scenario::new(&s, vec![0.2, 0.5, 0.3]).unwrap();
        let pm = PenaltyModel::linear(mu.clone());
        let x = RandomVariable::new(&s, vec![1.0, -2.0, 4.0]).unwrap();
        let (v, k) = dual_eval(&pm, &x).unwrap();
        assert!((v - mu.expect(x.values())).abs() < 1e-15);
        assert_eq!(k, 0);
    }

    #[test]
    fn entropic_matches_closed_form() {
        let s = two();
        let m = EntropicModel::new(Scenario::uniform(&s), 1.0).unwrap();
        let x = RandomVariable::new(&s, vec![0.0, 1.0]).unwrap();
        let v = ExpectationModel::from(m).evaluate(&x).unwrap();
        let expected = ((1.0 + std::f64::consts::E) / 2.0).ln();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.620_114_5).abs() < 1e-6);
    }

    #[test]
    fn penalty_model_rejects_bad_inputs() {
        let s = two();
        assert!(PenaltyModel::new(vec![], vec![]).is_err());
        let sc = vec![Scenario::dirac(&s, 0).unwrap()];
        assert!(matches!(PenaltyModel::new(sc.clone(), vec![0.5]), Err(Error::Domain(_))));
        assert!(PenaltyModel::new(sc.clone(), vec![-1.0]).is_err());
        assert!(PenaltyModel::new(sc, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn evaluation_rejects_mismatched_and_non_finite_input() {
        let s = two();
        let m = ExpectationModel::from(diracs(&s, vec![0.0, 0.0]));
        assert!(matches!(m.evaluate_values(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(m.evaluate_values(&[1.0, f64::INFINITY]), Err(Error::Domain(_))));
        let other = StateSpace::new(["a", "b"]).unwrap();
        let x = RandomVariable::new(&other, vec![0.0, 0.0]).unwrap();
        assert!(m.evaluate(&x).is_err());
    }

    #[test]
    fn pushforward_collapses_mass() {
        let src = StateSpace::new(["a", "b", "c"]).unwrap();
        let dst = StateSpace::new(["a", "z"]).unwrap();
        let t = StateMap::new(&src, &dst, vec![0, 1, 1]).unwrap();
        let mu = Scenario::new(&src, vec![0.2, 0.3, 0.5]).unwrap();
        let pushed = t.push_scenario(&mu).unwrap();
        assert_eq!(pushed.weights(), &[0.2, 0.8]);
        assert!(StateMap::new(&src, &dst, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn pushforward_of_entropic_wraps_evaluator() {
        let src = StateSpace::indexed(3).unwrap();
        let dst = StateSpace::indexed(2).unwrap();
        let t = StateMap::new(&src, &dst, vec![0, 1, 1]).unwrap();
        let m: ExpectationModel =
            EntropicModel::new(Scenario::new(&src, vec![0.5, 0.25, 0.25]).unwrap(), 2.0).unwrap().into();
        let pushed = pushforward(&m, &t).unwrap();
        let y = [0.3, -1.2];
        assert_eq!(pushed.evaluate_values(&y).unwrap(), m.evaluate_values(&t.pull_back(&y)).unwrap());
    }

    #[test]
    fn deduplication_keeps_smallest_penalty() {
        let s = two();
        let a = Scenario::new(&s, vec![0.3, 0.7]).unwrap();
        let b = Scenario::new(&s, vec![0.3 + 1e-14, 0.7 - 1e-14]).unwrap();
        let pm = PenaltyModel::new(vec![a.clone(), Scenario::dirac(&s, 0).unwrap(), b], vec![0.4, 0.0, 0.1]).unwrap();
        let d = pm.deduplicated();
        assert_eq!(d.len(), 2);
        assert_eq!(d.penalties(), &[0.1, 0.0]);
    }
}

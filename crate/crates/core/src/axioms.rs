//! Empirical verification of the expectation axioms on a sample set.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::ExpectationModel;
use crate::space::{sup_norm, RandomVariable};

/// Default tolerance for axiom checks on pure arithmetic.
pub const AXIOM_TOL: f64 = 1e-12;

const CONSTANT_GRID: [f64; 9] = [-10.0, -2.5, -1.0, -0.1, 0.0, 0.1, 1.0, 2.5, 10.0];
const HOMOGENEITY_GRID: [f64; 4] = [0.0, 0.5, 2.0, 3.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Monotonicity,
    ConstantPreserving,
    Translation,
    Lipschitz,
    Convexity,
    PositiveHomogeneity,
}

impl Axiom {
    pub fn name(self) -> &'static str {
        match self {
            Axiom::Monotonicity => "monotonicity",
            Axiom::ConstantPreserving => "constant_preserving",
            Axiom::Translation => "translation",
            Axiom::Lipschitz => "lipschitz",
            Axiom::Convexity => "convexity",
            Axiom::PositiveHomogeneity => "positive_homogeneity",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    pub worst_violation: f64,
    pub checks: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub tol: f64,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn get(&self, axiom: Axiom) -> &AxiomCheck {
        self.checks.iter().find(|c| c.axiom == axiom).expect("every axiom is checked")
    }

    pub fn passed(&self, axiom: Axiom) -> bool {
        self.get(axiom).passed
    }

    /// Monotone, constant preserving, translation invariant and 1-Lipschitz.
    pub fn is_expectation(&self) -> bool {
        [Axiom::Monotonicity, Axiom::ConstantPreserving, Axiom::Translation, Axiom::Lipschitz]
            .into_iter()
            .all(|a| self.passed(a))
    }

    /// Every check except positive homogeneity, which is reported on its own.
    pub fn is_convex_expectation(&self) -> bool {
        self.is_expectation() && self.passed(Axiom::Convexity)
    }

    pub fn is_sublinear_expectation(&self) -> bool {
        self.is_convex_expectation() && self.passed(Axiom::PositiveHomogeneity)
    }

    /// Largest violation over the convex-expectation axioms.
    pub fn worst_convex_violation(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.axiom != Axiom::PositiveHomogeneity)
            .map(|c| c.worst_violation)
            .fold(0.0, f64::max)
    }
}

struct Tally {
    axiom: Axiom,
    worst: f64,
    checks: usize,
}

impl Tally {
    fn new(axiom: Axiom) -> Self {
        Self { axiom, worst: 0.0, checks: 0 }
    }

    fn record(&mut self, violation: f64) {
        self.checks += 1;
        // NaN must register as a failure
        if violation.is_nan() || violation > self.worst {
            self.worst = if violation.is_nan() { f64::INFINITY } else { violation };
        }
    }

    fn finish(self, tol: f64) -> AxiomCheck {
        AxiomCheck { axiom: self.axiom, passed: self.worst <= tol, worst_violation: self.worst, checks: self.checks }
    }
}

fn eval_or_nan(model: &ExpectationModel, x: &[f64]) -> f64 {
    model.evaluate_values(x).unwrap_or(f64::NAN)
}

/// Checks the expectation axioms on `samples` and on constants.
///
/// Monotonicity is tested on the ordered pairs `min(X,Y) <= X, Y <= max(X,Y)`,
/// convexity on segment midpoints, homogeneity for `lambda` in {0, 1/2, 2, 3}.
pub fn verify_axioms(model: &ExpectationModel, samples: &[RandomVariable], tol: f64) -> Result<AxiomReport> {
    if samples.len() < 2 {
        return Err(Error::Argument("axiom verification needs at least two samples".into()));
    }
    for s in samples {
        model.space().ensure_same(s.space())?;
    }
    let n = model.space().len();
    let values: Vec<Vec<f64>> = samples.iter().map(|s| s.values().to_vec()).collect();
    let evals: Vec<f64> = values.iter().map(|x| eval_or_nan(model, x)).collect();

    let mut mono = Tally::new(Axiom::Monotonicity);
    let mut constant = Tally::new(Axiom::ConstantPreserving);
    let mut translation = Tally::new(Axiom::Translation);
    let mut lipschitz = Tally::new(Axiom::Lipschitz);
    let mut convexity = Tally::new(Axiom::Convexity);
    let mut homogeneity = Tally::new(Axiom::PositiveHomogeneity);

    for &alpha in &CONSTANT_GRID {
        constant.record((eval_or_nan(model, &vec![alpha; n]) - alpha).abs());
    }

    for (x, &ex) in values.iter().zip(&evals) {
        for &alpha in &CONSTANT_GRID {
            let shifted: Vec<f64> = x.iter().map(|v| v + alpha).collect();
            translation.record((eval_or_nan(model, &shifted) - (ex + alpha)).abs());
        }
        for &lambda in &HOMOGENEITY_GRID {
            let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            homogeneity.record((eval_or_nan(model, &scaled) - lambda * ex).abs());
        }
    }

    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let (x, y) = (&values[i], &values[j]);
            let (ex, ey) = (evals[i], evals[j]);
            let lo: Vec<f64> = x.iter().zip(y).map(|(a, b)| a.min(*b)).collect();
            let hi: Vec<f64> = x.iter().zip(y).map(|(a, b)| a.max(*b)).collect();
            let (elo, ehi) = (eval_or_nan(model, &lo), eval_or_nan(model, &hi));
            mono.record((elo - ex).max(elo - ey).max(ex - ehi).max(ey - ehi).max(0.0));

            let dist: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            lipschitz.record(((ex - ey).abs() - sup_norm(&dist)).max(0.0));

            let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
            convexity.record((eval_or_nan(model, &mid) - (0.5 * ex + 0.5 * ey)).max(0.0));
        }
    }

    Ok(AxiomReport {
        tol,
        checks: vec![
            mono.finish(tol),
            constant.finish(tol),
            translation.finish(tol),
            lipschitz.finish(tol),
            convexity.finish(tol),
            homogeneity.finish(tol),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expectation::{EntropicModel, PenaltyModel};
    use crate::space::{Scenario, StateSpace};

    fn samples(s: &StateSpace) -> Vec<RandomVariable> {
        vec![
            RandomVariable::new(s, vec![0.0, 1.0]).unwrap(),
            RandomVariable::new(s, vec![2.0, -1.0]).unwrap(),
            RandomVariable::new(s, vec![-0.5, 0.25]).unwrap(),
        ]
    }

    #[test]
    fn needs_two_samples() {
        let s = StateSpace::indexed(2).unwrap();
        let m = ExpectationModel::from(PenaltyModel::linear(Scenario::uniform(&s)));
        assert!(matches!(verify_axioms(&m, &samples(&s)[..1], AXIOM_TOL), Err(Error::Argument(_))));
    }

    #[test]
    fn entropic_is_convex_but_not_homogeneous() {
        let s = StateSpace::indexed(2).unwrap();
        let m = ExpectationModel::from(EntropicModel::new(Scenario::uniform(&s), 1.0).unwrap());
        let r = verify_axioms(&m, &samples(&s), AXIOM_TOL).unwrap();
        assert!(r.is_convex_expectation(), "{r:?}");
        assert!(!r.passed(Axiom::PositiveHomogeneity));
        // E(2X) vs 2E(X) at X = (0, 1)
        let e1 = m.evaluate_values(&[0.0, 1.0]).unwrap();
        let e2 = m.evaluate_values(&[0.0, 2.0]).unwrap();
        assert!(e2 > 2.0 * e1 + 1e-3);
    }

    #[test]
    fn squared_sup_norm_is_not_constant_preserving() {
        let s = StateSpace::indexed(2).unwrap();
        let m = ExpectationModel::oracle(&s, "sup-squared", |x| sup_norm(x).powi(2));
        let r = verify_axioms(&m, &samples(&s), AXIOM_TOL).unwrap();
        assert!(!r.passed(Axiom::ConstantPreserving));
        assert_eq!(m.evaluate_values(&[2.0, 2.0]).unwrap(), 4.0);
    }

    #[test]
    fn failing_oracle_is_reported_not_propagated() {
        let s = StateSpace::indexed(2).unwrap();
        let m = ExpectationModel::oracle(&s, "nan", |_| f64::NAN);
        let r = verify_axioms(&m, &samples(&s), AXIOM_TOL).unwrap();
        assert!(!r.is_expectation());
    }
}

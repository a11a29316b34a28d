//! Finite state spaces and the two vector types that live on them:
//! bounded random variables and probability scenarios.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_finite, check_len, Error, Result};

/// Tolerance on the total mass of a scenario.
pub const MASS_TOL: f64 = 1e-12;

/// An ordered, labeled finite state space.
///
/// Cloning is cheap; labels are shared.
#[derive(Clone)]
pub struct StateSpace {
    labels: Arc<[String]>,
}

impl StateSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Argument("state space needs at least one state".into()));
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Argument(format!("duplicate state label {:?}", w[0])));
        }
        Ok(Self { labels: labels.into() })
    }

    /// States labeled `0`, `1`, ..., `n-1`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn same_as(&self, other: &StateSpace) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }

    pub(crate) fn ensure_same(&self, other: &StateSpace) -> Result<()> {
        check_len(self.len(), other.len())?;
        if !self.same_as(other) {
            return Err(Error::Argument("state spaces carry different labels".into()));
        }
        Ok(())
    }
}

impl PartialEq for StateSpace {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl fmt::Debug for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 8 {
            f.debug_list().entries(self.labels.iter()).finish()
        } else {
            write!(f, "StateSpace(n={})", self.len())
        }
    }
}

/// A bounded random variable: one finite real value per state.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomVariable {
    space: StateSpace,
    values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(space: &StateSpace, values: Vec<f64>) -> Result<Self> {
        check_len(space.len(), values.len())?;
        check_finite(&values, "random variable")?;
        Ok(Self { space: space.clone(), values })
    }

    pub fn constant(space: &StateSpace, alpha: f64) -> Result<Self> {
        Self::new(space, vec![alpha; space.len()])
    }

    pub fn indicator(space: &StateSpace, state: usize) -> Result<Self> {
        if state >= space.len() {
            return Err(Error::Argument(format!("state index {state} out of range")));
        }
        let mut values = vec![0.0; space.len()];
        values[state] = 1.0;
        Ok(Self { space: space.clone(), values })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    /// Pointwise map; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(&self.space, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.space.ensure_same(&other.space)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::new(&self.space, values)
    }

    pub fn le(&self, other: &Self) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }
}

/// A probability vector on a finite state space.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    space: StateSpace,
    weights: Vec<f64>,
}

impl Scenario {
    pub fn new(space: &StateSpace, weights: Vec<f64>) -> Result<Self> {
        check_len(space.len(), weights.len())?;
        check_finite(&weights, "scenario weight")?;
        if let Some(i) = weights.iter().position(|&w| w < 0.0) {
            return Err(Error::Domain(format!("scenario weight {i} is negative")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!("scenario mass {total} differs from 1")));
        }
        Ok(Self { space: space.clone(), weights })
    }

    pub fn dirac(space: &StateSpace, state: usize) -> Result<Self> {
        let rv = RandomVariable::indicator(space, state)?;
        Ok(Self { space: space.clone(), weights: rv.into_values() })
    }

    pub fn uniform(space: &StateSpace) -> Self {
        let n = space.len();
        Self { space: space.clone(), weights: vec![1.0 / n as f64; n] }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `mu · x`.
    pub fn expect(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x)
    }

    /// Weights rounded to 12 decimals, as exact bit patterns; used as a
    /// deduplication key.
    pub fn canonical_key(&self) -> Vec<u64> {
        canonical_key(&self.weights)
    }
}

pub(crate) fn canonical_key(w: &[f64]) -> Vec<u64> {
    w.iter()
        .map(|&v| {
            let r = (v * 1e12).round() / 1e12;
            // -0.0 and 0.0 must collide
            if r == 0.0 {
                0
            } else {
                r.to_bits()
            }
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `mu · x` evaluated around the shift `x[0]`, so a constant `x` is
/// returned exactly whenever the weights are nonnegative.
pub(crate) fn centered_dot(w: &[f64], x: &[f64]) -> f64 {
    let c = x[0];
    c + w.iter().zip(x).map(|(wi, xi)| wi * (xi - c)).sum::<f64>()
}

pub(crate) fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

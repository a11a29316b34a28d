//! JSON documents describing models, one-step operators and marginal families.
//!
//! A model document looks like
//! `{"space": ["a","b"], "kind": "penalty", "scenarios": [[1,0],[0,1]], "penalties": [0,0]}`
//! or `{"space": [...], "kind": "entropic", "p": [...], "theta": 1.0}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expectation::{EntropicModel, ExpectationModel, PenaltyModel};
use crate::gaussian::{GaussianFamily, ParamBox};
use crate::kernels::{MarkovChain, OneStepOperator, SCENARIO_CAP};
use crate::kolmogorov::{ExplicitFamily, FamilyGenerator, FiniteSubset, MarginalFamily, OverrideFamily, ProductSpace};
use crate::space::{Scenario, StateSpace};

/// Schema version written into every output record.
pub const SCHEMA_VERSION: &str = "v1";

fn parse_err(e: serde_json::Error) -> Error {
    Error::Parse(format!("line {} column {}: {e}", e.line(), e.column()))
}

/// Deserializes `T` from a JSON value, prefixing errors with `what`.
pub fn from_value<T: for<'de> Deserialize<'de>>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(parse_err)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Penalty,
    Entropic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<Vec<String>>,
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalties: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl ModelDoc {
    /// Builds the model; `space` falls back to `default` when absent and
    /// must match it when both are given.
    pub fn build(&self, default: Option<&StateSpace>) -> Result<ExpectationModel> {
        let space = match (&self.space, default) {
            (Some(labels), Some(d)) => {
                let s = StateSpace::new(labels.clone()).map_err(|e| Error::Parse(format!("space: {e}")))?;
                d.ensure_same(&s)?;
                d.clone()
            }
            (Some(labels), None) => StateSpace::new(labels.clone()).map_err(|e| Error::Parse(format!("space: {e}")))?,
            (None, Some(d)) => d.clone(),
            (None, None) => return Err(Error::Parse("missing field `space`".into())),
        };
        match self.kind {
            ModelKind::Penalty => {
                let rows = self.scenarios.as_ref().ok_or_else(|| Error::Parse("missing field `scenarios`".into()))?;
                let sc = rows
                    .iter()
                    .enumerate()
                    .map(|(k, w)| Scenario::new(&space, w.clone()).map_err(|e| at(e, &format!("scenarios[{k}]"))))
                    .collect::<Result<Vec<_>>>()?;
                let penalties = self.penalties.clone().unwrap_or_else(|| vec![0.0; sc.len()]);
                Ok(PenaltyModel::new(sc, penalties).map_err(|e| at(e, "penalties"))?.into())
            }
            ModelKind::Entropic => {
                let p = self.p.as_ref().ok_or_else(|| Error::Parse("missing field `p`".into()))?;
                let theta = self.theta.ok_or_else(|| Error::Parse("missing field `theta`".into()))?;
                let p = Scenario::new(&space, p.clone()).map_err(|e| at(e, "p"))?;
                Ok(EntropicModel::new(p, theta).map_err(|e| at(e, "theta"))?.into())
            }
        }
    }

    /// The document of a penalty or entropic model.
    pub fn from_model(model: &ExpectationModel) -> Option<Self> {
        let space = Some(model.space().labels().to_vec());
        match model {
            ExpectationModel::Penalty(pm) => Some(Self {
                space,
                kind: ModelKind::Penalty,
                scenarios: Some(pm.scenarios().iter().map(|s| s.weights().to_vec()).collect()),
                penalties: Some(pm.penalties().to_vec()),
                p: None,
                theta: None,
            }),
            ExpectationModel::Entropic(em) => Some(Self {
                space,
                kind: ModelKind::Entropic,
                scenarios: None,
                penalties: None,
                p: Some(em.reference().weights().to_vec()),
                theta: Some(em.theta()),
            }),
            ExpectationModel::Oracle(_) => None,
        }
    }
}

fn at(e: Error, field: &str) -> Error {
    match e {
        Error::Dimension { expected, got } => Error::Parse(format!("{field}: expected {expected} entries, got {got}")),
        other => Error::Parse(format!("{field}: {other}")),
    }
}

/// Parses a model document.
pub fn parse_model(text: &str) -> Result<ExpectationModel> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(parse_err)?;
    doc.build(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropicRowsDoc {
    pub p: Vec<Vec<f64>>,
    pub theta: f64,
}

/// `{"matrices": [...], "penalties": [...]}` or `{"entropic_rows": {"p": [...], "theta": t}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalties: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropic_rows: Option<EntropicRowsDoc>,
}

impl OperatorDoc {
    pub fn build(&self, domain: &StateSpace) -> Result<OneStepOperator> {
        match (&self.matrices, &self.entropic_rows) {
            (Some(m), None) => match &self.penalties {
                Some(a) if a.iter().any(|&v| v != 0.0) => OneStepOperator::convex(domain, m.clone(), a.clone()),
                _ => OneStepOperator::sublinear(domain, m.clone()),
            }
            .map_err(|e| at(e, "operator")),
            (None, Some(r)) => OneStepOperator::entropic(domain, r.p.clone(), r.theta).map_err(|e| at(e, "operator")),
            _ => Err(Error::Parse("operator needs exactly one of `matrices` and `entropic_rows`".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDoc {
    #[serde(rename = "J")]
    pub j: Vec<u32>,
    pub model: ModelDoc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainForm {
    #[default]
    Evaluator,
    Scenarios,
}

/// A finite-state family descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilyDoc {
    Markov {
        operator: OperatorDoc,
        mu0: ModelDoc,
        horizon: usize,
        #[serde(default)]
        form: ChainForm,
        #[serde(default)]
        cap: Option<usize>,
        #[serde(default)]
        overrides: Vec<EntryDoc>,
    },
    Explicit {
        entries: Vec<EntryDoc>,
    },
    Gaussian(GaussianFamilyDoc),
}

/// One nested-grid check `E_K(f)` against `E_J(f o pr_JK)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianCheckDoc {
    #[serde(rename = "J")]
    pub j: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub function: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianFamilyDoc {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub horizon: f64,
    pub order: usize,
    pub grid: usize,
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub checks: Vec<GaussianCheckDoc>,
}

impl GaussianFamilyDoc {
    pub fn build(&self) -> Result<GaussianFamily> {
        let pbox = ParamBox::new(self.mu_lo, self.mu_hi, self.sigma_lo, self.sigma_hi).map_err(|e| at(e, "box"))?;
        GaussianFamily::new(pbox, self.horizon, self.order, self.grid, self.refine)
    }
}

pub(crate) fn subset(v: &[u32], what: &str) -> Result<FiniteSubset> {
    FiniteSubset::new(v.to_vec()).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn entries(base: &StateSpace, docs: &[EntryDoc]) -> Result<Vec<(FiniteSubset, ExpectationModel)>> {
    docs.iter()
        .enumerate()
        .map(|(i, e)| {
            let j = subset(&e.j, &format!("entries[{i}].J"))?;
            let states = ProductSpace::new(base, &j)?.state_space()?;
            let model = e.model.build(Some(&states)).map_err(|err| at(err, &format!("entries[{i}].model")))?;
            Ok((j, model))
        })
        .collect()
}

/// `{"base": [...], "operator": {...}, "mu0": {...}, "horizon": n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDoc {
    pub base: Vec<String>,
    pub operator: OperatorDoc,
    pub mu0: ModelDoc,
    pub horizon: usize,
}

impl ChainDoc {
    pub fn build(&self) -> Result<MarkovChain> {
        let base = StateSpace::new(self.base.clone()).map_err(|e| at(e, "base"))?;
        let op = self.operator.build(&base)?;
        let mu0 = self.mu0.build(Some(&base)).map_err(|e| at(e, "mu0"))?;
        MarkovChain::new(op, mu0, self.horizon)
    }
}

/// A built finite family together with its natural index range.
pub struct BuiltFamily {
    pub family: MarginalFamily,
    pub chain: Option<MarkovChain>,
    /// Subsets with explicit entries, sorted.
    pub listed: Vec<FiniteSubset>,
}

impl FamilyDoc {
    pub fn build(&self, base: &StateSpace) -> Result<BuiltFamily> {
        match self {
            FamilyDoc::Markov { operator, mu0, horizon, form, cap, overrides } => {
                let op = operator.build(base)?;
                let mu0 = mu0.build(Some(base)).map_err(|e| at(e, "mu0"))?;
                let chain = MarkovChain::new(op, mu0, *horizon)?;
                let inner: Arc<dyn FamilyGenerator> = match form {
                    ChainForm::Evaluator => Arc::new(chain.clone()),
                    ChainForm::Scenarios => chain.scenario_family(cap.unwrap_or(SCENARIO_CAP))?.generator().clone(),
                };
                let over = entries(base, overrides)?;
                let mut listed: Vec<FiniteSubset> = over.iter().map(|(j, _)| j.clone()).collect();
                listed.sort();
                let generator: Arc<dyn FamilyGenerator> =
                    if over.is_empty() { inner } else { Arc::new(OverrideFamily::new(inner, over)) };
                Ok(BuiltFamily { family: MarginalFamily::new(base, generator), chain: Some(chain), listed })
            }
            FamilyDoc::Gaussian(_) => {
                Err(Error::Argument("a gaussian family has no finite state space; use its own checks".into()))
            }
            FamilyDoc::Explicit { entries: docs } => {
                let es = entries(base, docs)?;
                let mut listed: Vec<FiniteSubset> = es.iter().map(|(j, _)| j.clone()).collect();
                listed.sort();
                Ok(BuiltFamily {
                    family: MarginalFamily::new(base, Arc::new(ExplicitFamily::new(es))),
                    chain: None,
                    listed,
                })
            }
        }
    }
}

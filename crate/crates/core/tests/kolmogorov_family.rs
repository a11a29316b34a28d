mod common;

use std::sync::Arc;

use common::*;
use rand::Rng;
use robustexp::kolmogorov::{DiracPathFamily, ExplicitFamily, FullSimplexFamily, OverrideFamily, ProductMeasureFamily};
use robustexp::{
    check_consistency_expectations, check_consistency_scenario_sets, cylinder_eval, extension_marginal,
    hull_membership, markov_chain_family, project_function, pushforward_marginal, CylinderFunction, ExpectationModel,
    FiniteSubset, MarginalFamily, MarkovChain, OneStepOperator, PenaltyModel, ProductSpace, Scenario, StateSpace,
};

fn set(v: &[u32]) -> FiniteSubset {
    FiniteSubset::new(v.to_vec()).unwrap()
}

fn linear_chain(
    r: &mut rand_chacha::ChaCha8Rng,
    s: &StateSpace,
    horizon: usize,
) -> (MarkovChain, Vec<f64>, Vec<Vec<f64>>) {
    let pi = simplex(r, s.len());
    let p = stochastic_matrix(r, s.len());
    let op = OneStepOperator::linear(s, p.clone()).unwrap();
    let chain =
        MarkovChain::new(op, PenaltyModel::linear(Scenario::new(s, pi.clone()).unwrap()).into(), horizon).unwrap();
    (chain, pi, p)
}

fn sublinear_chain(r: &mut rand_chacha::ChaCha8Rng, s: &StateSpace, horizon: usize) -> MarkovChain {
    let (op, _) = sublinear_operator(r, s, 2);
    let mu0 = PenaltyModel::linear(Scenario::new(s, simplex(r, s.len())).unwrap());
    MarkovChain::new(op, mu0.into(), horizon).unwrap()
}

/// Same sets of weight vectors within `tol`, ignoring order and repeats.
fn same_sets(a: &[Scenario], b: &[Scenario], tol: f64) -> bool {
    let within = |x: &Scenario, ys: &[Scenario]| {
        ys.iter().any(|y| x.weights().iter().zip(y.weights()).all(|(u, v)| (u - v).abs() <= tol))
    };
    a.iter().all(|x| within(x, b)) && b.iter().all(|y| within(y, a))
}

#[test]
fn projection_onto_the_same_subset_is_the_identity() {
    let mut r = rng(30);
    let s = space(3);
    let j = set(&[0, 2, 5]);
    let f = values(&mut r, 27, -1.0, 1.0);
    assert_eq!(project_function(&s, &f, &j, &j).unwrap(), f);
}

#[test]
fn projection_looks_up_the_kept_coordinate() {
    let s = space(2);
    let (a, b) = (1.5, -2.0);
    let lifted = project_function(&s, &[a, b], &set(&[1]), &set(&[1, 2])).unwrap();
    assert_eq!(lifted, vec![a, a, b, b]);
    let other = project_function(&s, &[a, b], &set(&[2]), &set(&[1, 2])).unwrap();
    assert_eq!(other, vec![a, b, a, b]);
}

#[test]
fn projections_compose() {
    let mut r = rng(31);
    let s = space(3);
    let (k, j, l) = (set(&[4]), set(&[1, 4]), set(&[0, 1, 4, 7]));
    let f = values(&mut r, 3, -1.0, 1.0);
    let twice = project_function(&s, &project_function(&s, &f, &k, &j).unwrap(), &j, &l).unwrap();
    assert_eq!(twice, project_function(&s, &f, &k, &l).unwrap());
}

#[test]
fn marginal_onto_the_same_subset_changes_nothing() {
    let mut r = rng(32);
    let s = space(2);
    let j = set(&[0, 1]);
    let pj = ProductSpace::new(&s, &j).unwrap();
    let m = model(penalty_model(&mut r, &pj.state_space().unwrap(), 3, false));
    let same = pushforward_marginal(&m, &s, &j, &j).unwrap();
    for _ in 0..10 {
        let f = values(&mut r, 4, -1.0, 1.0);
        assert!((same.evaluate_values(&f).unwrap() - m.evaluate_values(&f).unwrap()).abs() <= 1e-15);
    }
}

#[test]
fn product_measures_marginalize_to_their_factor() {
    let s = space(3);
    let p = Scenario::new(&s, vec![0.2, 0.5, 0.3]).unwrap();
    let fam = MarginalFamily::new(&s, Arc::new(ProductMeasureFamily::new(&p)));
    let j = set(&[0, 1, 2]);
    for i in 0..3 {
        let k = FiniteSubset::singleton(i);
        let m = pushforward_marginal(&fam.entry(&j).unwrap(), &s, &j, &k).unwrap();
        let w = m.as_penalty().unwrap().scenarios()[0].weights().to_vec();
        assert!(w.iter().zip(p.weights()).all(|(a, b)| (a - b).abs() <= 1e-15));
    }
}

#[test]
fn marginal_weights_are_summed_mass() {
    let mut r = rng(33);
    let s = space(3);
    let (j, k) = (set(&[1, 2]), set(&[2]));
    let states = ProductSpace::new(&s, &j).unwrap().state_space().unwrap();
    for _ in 0..10 {
        let pm = penalty_model(&mut r, &states, 2, false);
        let pushed = pushforward_marginal(&model(pm.clone()), &s, &j, &k).unwrap();
        let pushed = pushed.as_penalty().unwrap();
        for (mu, nu) in pm.scenarios().iter().zip(pushed.scenarios()) {
            let mut w = [0.0; 3];
            for x1 in 0..3 {
                for x2 in 0..3 {
                    w[x2] += mu.weights()[x1 * 3 + x2];
                }
            }
            assert!(w.iter().zip(nu.weights()).all(|(a, b)| (a - b).abs() <= 1e-14));
        }
        assert_eq!(pushed.penalties(), pm.penalties());
    }
}

fn drop_one_pairs(horizon: u32) -> Vec<(FiniteSubset, FiniteSubset)> {
    let mut out = Vec::new();
    let full = FiniteSubset::range(0, horizon + 1).unwrap();
    for j in std::iter::once(full.clone()).chain(full.proper_subsets()) {
        for i in j.indices() {
            if let Some(k) = j.without(*i) {
                if !k.is_empty() {
                    out.push((j.clone(), k));
                }
            }
        }
    }
    out
}

#[test]
fn markov_families_are_consistent() {
    let mut r = rng(34);
    let s = space(2);
    for _ in 0..3 {
        let (op, _) = sublinear_operator(&mut r, &s, 2);
        let mu0 = model(penalty_model(&mut r, &s, 2, false));
        let fam = markov_chain_family(&op, &mu0, 3).unwrap();
        let report = check_consistency_expectations(&fam, &drop_one_pairs(3), 20, 7).unwrap();
        assert!(report.passed(), "{:?}", report.first_failure());
    }
}

#[test]
fn a_perturbed_entry_breaks_consistency_by_its_size() {
    let mut r = rng(35);
    let s = space(2);
    let (chain, pi, p) = linear_chain(&mut r, &s, 2);
    let j = set(&[0, 1]);
    let states = ProductSpace::new(&s, &j).unwrap().state_space().unwrap();
    // path law of (x0, x1), then eps of mass moved from (a, 0) to (a, 1)
    let mut w: Vec<f64> = (0..4).map(|i| pi[i / 2] * p[i / 2][i % 2]).collect();
    let a = if w[0] >= w[2] { 0 } else { 1 };
    let eps = 0.25 * w[2 * a];
    w[2 * a] -= eps;
    w[2 * a + 1] += eps;
    let replaced: ExpectationModel = PenaltyModel::linear(Scenario::new(&states, w).unwrap()).into();
    let fam = MarginalFamily::new(
        &s,
        Arc::new(OverrideFamily::new(chain.family().generator().clone(), [(j.clone(), replaced)])),
    );
    let report = check_consistency_expectations(&fam, &[(j.clone(), set(&[1])), (set(&[0, 1, 2]), j)], 30, 3).unwrap();
    let row = report.first_failure().expect("the perturbation must be detected");
    // probes live in [-1, 1], so the gap on x1 is between eps and 2 eps
    assert!(row.max_discrepancy >= eps - 1e-12 && row.max_discrepancy <= 2.0 * eps + 1e-12, "{row:?} eps {eps}");
    assert!(row.witness.is_some());
}

#[test]
fn trivial_pairs_always_pass() {
    let s = space(3);
    let fam = MarginalFamily::new(&s, Arc::new(FullSimplexFamily));
    let pairs: Vec<_> = [set(&[0]), set(&[1, 3]), set(&[0, 1, 2])].into_iter().map(|j| (j.clone(), j)).collect();
    assert!(check_consistency_expectations(&fam, &pairs, 10, 0).unwrap().passed());
    assert!(check_consistency_scenario_sets(&fam, &pairs).unwrap().passed());
}

#[test]
fn scenario_form_agrees_with_expectation_form() {
    let mut r = rng(36);
    let s = space(2);
    for _ in 0..3 {
        let chain = sublinear_chain(&mut r, &s, 2);
        let fam = chain.scenario_family(4096).unwrap();
        let pairs = drop_one_pairs(2);
        let by_sets = check_consistency_scenario_sets(&fam, &pairs).unwrap();
        let by_values = check_consistency_expectations(&fam, &pairs, 20, 1).unwrap();
        assert!(by_sets.passed(), "{:?}", by_sets.first_failure());
        assert!(by_values.passed(), "{:?}", by_values.first_failure());
        // the scenario form evaluates like the recursive one
        let j = set(&[0, 1, 2]);
        for _ in 0..5 {
            let f = values(&mut r, 8, -1.0, 1.0);
            let a = fam.entry(&j).unwrap().evaluate_values(&f).unwrap();
            let b = chain.evaluate(&j, &f).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn dropping_an_extreme_scenario_is_detected() {
    let mut r = rng(37);
    let s = space(2);
    let chain = sublinear_chain(&mut r, &s, 1);
    let fam = chain.scenario_family(4096).unwrap();
    let (j, k) = (set(&[0, 1]), set(&[1]));
    let qj = fam.entry(&j).unwrap().as_penalty().unwrap().deduplicated();
    let pushed = pushforward_marginal(&qj.clone().into(), &s, &j, &k).unwrap();
    let pushed = pushed.as_penalty().unwrap().scenarios().to_vec();
    let mut dropped_any = false;
    for i in 0..qj.len() {
        let rest: Vec<&[f64]> = pushed.iter().enumerate().filter(|(m, _)| *m != i).map(|(_, v)| v.weights()).collect();
        if rest.is_empty() || hull_membership(&rest, pushed[i].weights(), 1e-9).unwrap().member {
            continue;
        }
        dropped_any = true;
        let kept: Vec<Scenario> =
            qj.scenarios().iter().enumerate().filter(|(m, _)| *m != i).map(|(_, v)| v.clone()).collect();
        let shrunk: ExpectationModel = PenaltyModel::sublinear(kept).unwrap().into();
        let broken =
            MarginalFamily::new(&s, Arc::new(OverrideFamily::new(fam.generator().clone(), [(j.clone(), shrunk)])));
        let report = check_consistency_scenario_sets(&broken, &[(j.clone(), k.clone())]).unwrap();
        assert!(!report.passed(), "dropping scenario {i} went unnoticed");
    }
    assert!(dropped_any, "no scenario pushes to an extreme point");
}

#[test]
fn full_simplex_family_is_consistent_as_sets() {
    let s = space(2);
    let fam = MarginalFamily::new(&s, Arc::new(FullSimplexFamily));
    assert!(check_consistency_scenario_sets(&fam, &drop_one_pairs(2)).unwrap().passed());
}

#[test]
fn cylinder_values_do_not_depend_on_the_representation() {
    let mut r = rng(38);
    let s = space(2);
    let (op, _) = sublinear_operator(&mut r, &s, 2);
    let fam = markov_chain_family(&op, &model(penalty_model(&mut r, &s, 2, true)), 3).unwrap();
    for _ in 0..10 {
        let g = CylinderFunction::new(&s, set(&[0, 2]), values(&mut r, 4, -1.0, 1.0)).unwrap();
        let extra = r.gen_range(0..4u32);
        let wider = g.lift_to(&g.subset().union(&FiniteSubset::singleton(extra))).unwrap();
        assert!((cylinder_eval(&fam, &g).unwrap() - cylinder_eval(&fam, &wider).unwrap()).abs() <= 1e-12);
    }
    let c = CylinderFunction::constant(&s, set(&[1, 3]), -0.75).unwrap();
    assert!((cylinder_eval(&fam, &c).unwrap() + 0.75).abs() <= 1e-14);
}

#[test]
fn dirac_family_charges_the_path() {
    let s = space(2);
    let y = vec![1, 0, 1, 1];
    let fam = MarginalFamily::new(&s, Arc::new(DiracPathFamily::new(y.clone())));
    let g = CylinderFunction::from_fn(&s, set(&[0, 1]), |t| if t == &y[..2] { 1.0 } else { 0.0 }).unwrap();
    assert_eq!(cylinder_eval(&fam, &g).unwrap(), 1.0);
    for i in 0..4u32 {
        let q = extension_marginal(&fam, &FiniteSubset::singleton(i), &[set(&[0, 1, 2, 3])]).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.scenarios()[0].weights()[y[i as usize]], 1.0);
    }
}

#[test]
fn extension_marginals_are_the_family_entries() {
    let mut r = rng(39);
    let s = space(2);
    let chain = sublinear_chain(&mut r, &s, 2);
    let fam = chain.scenario_family(4096).unwrap();
    for j in [set(&[0]), set(&[1, 2]), set(&[0, 2])] {
        let q = extension_marginal(&fam, &j, &[set(&[0, 1, 2])]).unwrap();
        let entry = fam.entry(&j).unwrap();
        assert!(same_sets(q.scenarios(), entry.as_penalty().unwrap().scenarios(), 1e-12));
    }
}

#[test]
fn extension_marginal_refuses_inconsistent_entries() {
    let s = space(2);
    let full = set(&[0, 1]);
    let states = ProductSpace::new(&s, &full).unwrap().state_space().unwrap();
    let fam = MarginalFamily::new(
        &s,
        Arc::new(ExplicitFamily::new([
            (full.clone(), PenaltyModel::linear(Scenario::uniform(&states)).into()),
            (set(&[0]), PenaltyModel::linear(Scenario::dirac(&s, 0).unwrap()).into()),
        ])),
    );
    assert!(matches!(extension_marginal(&fam, &set(&[0]), &[full]), Err(robustexp::Error::Consistency(_))));
}

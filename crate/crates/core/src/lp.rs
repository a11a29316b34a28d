//! Thin dense front end over `microlp` for the small programs used by the
//! extension and membership routines.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::error::{Error, Result};

/// Default feasibility tolerance for LP-derived decisions.
pub const LP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

pub(crate) struct LinearProgram {
    problem: Problem,
    vars: Vec<Variable>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        let dir = match sense {
            Sense::Minimize => OptimizationDirection::Minimize,
            Sense::Maximize => OptimizationDirection::Maximize,
        };
        Self { problem: Problem::new(dir), vars: Vec::new() }
    }

    /// Adds a variable and returns its column index.
    pub fn var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.vars.push(self.problem.add_var(cost, (lo, hi)));
        self.vars.len() - 1
    }

    pub fn free_var(&mut self, cost: f64) -> usize {
        self.var(cost, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn constraint(&mut self, terms: &[(usize, f64)], cmp: Cmp, rhs: f64) {
        let mut row: Vec<(Variable, f64)> = Vec::with_capacity(terms.len());
        for &(j, c) in terms {
            if c != 0.0 {
                match row.iter_mut().find(|(v, _)| v.idx() == self.vars[j].idx()) {
                    Some(entry) => entry.1 += c,
                    None => row.push((self.vars[j], c)),
                }
            }
        }
        let op = match cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        self.problem.add_constraint(row, op, rhs);
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        match self.problem.solve() {
            Ok(outcome) => {
                let sol = outcome.into_solution().map_err(|_| Error::Numeric("LP solve interrupted".into()))?;
                let x = self.vars.iter().map(|&v| sol.var_value(v)).collect();
                Ok(LpOutcome::Optimal { objective: sol.objective(), x })
            }
            Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(microlp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
            Err(e) => Err(Error::Numeric(format!("LP solver: {e}"))),
        }
    }

    /// Solves and insists on an optimum.
    pub fn solve_optimal(&self, what: &str) -> Result<(f64, Vec<f64>)> {
        match self.solve()? {
            LpOutcome::Optimal { objective, x } => Ok((objective, x)),
            LpOutcome::Infeasible => Err(Error::Numeric(format!("{what}: LP reported infeasible"))),
            LpOutcome::Unbounded => Err(Error::Numeric(format!("{what}: LP reported unbounded"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_program() {
        // max x + 2y, x + y <= 4, 2x + y >= 2, 0 <= y <= 3
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.var(1.0, 0.0, f64::INFINITY);
        let y = lp.var(2.0, 0.0, 3.0);
        lp.constraint(&[(x, 1.0), (y, 1.0)], Cmp::Le, 4.0);
        lp.constraint(&[(x, 2.0), (y, 1.0)], Cmp::Ge, 2.0);
        let (obj, sol) = lp.solve_optimal("test").unwrap();
        assert!((obj - 7.0).abs() < 1e-12);
        assert!((sol[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reports_infeasible() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.var(1.0, 0.0, 1.0);
        lp.constraint(&[(x, 1.0)], Cmp::Ge, 2.0);
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Infeasible));
    }
}

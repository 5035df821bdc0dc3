//! Sparse linear programs, a bounded primal simplex to solve them, and
//! deletion filtering for irreducible infeasible subsystems.

mod iis;
mod lp_format;
mod simplex;

use thiserror::Error;

pub use iis::{deletion_filter_iis, is_irreducible, IisError};
pub use simplex::SimplexOptions;

/// Feasibility tolerance used when judging solutions.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

/// Opaque caller label on a constraint. Rows sharing a tag are switched on
/// and off together by [`deletion_filter_iis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: Option<Tag>,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A minimization LP over bounded variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Malformed(String),
    #[error("simplex pivot limit of {0} exceeded")]
    PivotLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        self.push_row(name.into(), coeffs, sense, rhs, None)
    }

    pub fn add_tagged_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        tag: Tag,
    ) -> RowId {
        self.push_row(name.into(), coeffs, sense, rhs, Some(tag))
    }

    fn push_row(
        &mut self,
        name: String,
        mut coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        tag: Option<Tag>,
    ) -> RowId {
        // merge duplicates so every row references each variable once
        coeffs.sort_by_key(|&(v, _)| v);
        coeffs.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        coeffs.retain(|&(_, a)| a != 0.0);
        self.rows.push(Constraint {
            name,
            coeffs,
            sense,
            rhs,
            tag,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn row(&self, r: RowId) -> &Constraint {
        &self.rows[r.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, v: VarId, cost: f64) {
        self.vars[v.0].cost = cost;
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        self.vars[v.0].lower = lower;
        self.vars[v.0].upper = upper;
    }

    /// Removes every row carrying `tag`.
    pub fn remove_tagged(&mut self, tag: Tag) {
        self.rows.retain(|r| r.tag != Some(tag));
    }

    pub fn tags(&self) -> Vec<Tag> {
        let mut tags: Vec<Tag> = self.rows.iter().filter_map(|r| r.tag).collect();
        tags.sort();
        tags.dedup();
        tags
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, x)| v.cost * x).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        let rows = self.rows.iter().map(|r| r.violation(x));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for (k, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(LpError::Malformed(format!("variable {} ({k}) has NaN data", v.name)));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {} has an empty domain", v.name)));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {} has non-finite rhs", r.name)));
            }
            for &(v, a) in &r.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(LpError::Malformed(format!(
                        "row {} references undeclared variable {}",
                        r.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {} has non-finite coefficient", r.name)));
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.solve_with(&SimplexOptions::default(), None, None)
    }

    /// Solves with optional bound overrides (one `(lower, upper)` per
    /// variable) and an optional mask of active rows.
    pub fn solve_with(
        &self,
        options: &SimplexOptions,
        bounds: Option<&[(f64, f64)]>,
        active: Option<&[bool]>,
    ) -> Result<LpSolution, LpError> {
        self.validate()?;
        simplex::solve(self, options, bounds, active)
    }

    /// Writes the program in CPLEX LP text format.
    pub fn write_lp<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        lp_format::write(self, &[], w)
    }

    /// Writes the program in CPLEX LP text format with a `Binaries` section.
    pub fn write_lp_with_binaries<W: std::io::Write>(
        &self,
        binaries: &[VarId],
        w: &mut W,
    ) -> std::io::Result<()> {
        lp_format::write(self, binaries, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_row_is_tight_at_optimum() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row("lo", vec![(x, 1.0)], Sense::Ge, 3.0);
        lp.add_row("hi", vec![(x, 1.0)], Sense::Le, 10.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value(x) - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row("lo", vec![(x, 1.0)], Sense::Ge, 3.0);
        lp.add_row("hi", vec![(x, 1.0)], Sense::Le, 2.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_is_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, 0.0);
        lp.add_row("r", vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn small_production_problem() {
        // max 3a + 5b st a <= 4, 2b <= 12, 3a + 2b <= 18  ->  (2, 6), 36
        let mut lp = LinearProgram::new();
        let a = lp.add_var("a", 0.0, f64::INFINITY, -3.0);
        let b = lp.add_var("b", 0.0, f64::INFINITY, -5.0);
        lp.add_row("c1", vec![(a, 1.0)], Sense::Le, 4.0);
        lp.add_row("c2", vec![(b, 2.0)], Sense::Le, 12.0);
        lp.add_row("c3", vec![(a, 3.0), (b, 2.0)], Sense::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.value(a) - 2.0).abs() < 1e-9);
        assert!((s.value(b) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min x + y st x - y = 1, x + y >= 3, y free  ->  x = 2, y = 1
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row("e", vec![(x, 1.0), (y, -1.0)], Sense::Eq, 1.0);
        lp.add_row("g", vec![(x, 1.0), (y, 1.0)], Sense::Ge, 3.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!(lp.max_violation(&s.values) < 1e-9);
    }

    #[test]
    fn bound_overrides_and_row_mask() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 10.0, 1.0);
        lp.add_row("lo", vec![(x, 1.0)], Sense::Ge, 5.0);
        let opts = SimplexOptions::default();
        let s = lp.solve_with(&opts, Some(&[(6.0, 10.0)]), None).unwrap();
        assert!((s.value(x) - 6.0).abs() < 1e-9);
        let s = lp.solve_with(&opts, None, Some(&[false])).unwrap();
        assert!(s.value(x).abs() < 1e-9);
    }

    #[test]
    fn undeclared_variable_is_malformed() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", 0.0, 1.0, 0.0);
        lp.add_row("bad", vec![(VarId(3), 1.0)], Sense::Le, 1.0);
        assert!(matches!(lp.solve(), Err(LpError::Malformed(_))));
    }

    #[test]
    fn duplicate_coefficients_are_merged() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 10.0, -1.0);
        let r = lp.add_row("r", vec![(x, 1.0), (x, 1.0)], Sense::Le, 4.0);
        assert_eq!(lp.row(r).coeffs, vec![(x, 2.0)]);
        assert!((lp.solve().unwrap().value(x) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the textbook Dantzig rule.
        let mut lp = LinearProgram::new();
        let x: Vec<VarId> = (0..4)
            .map(|k| lp.add_var(format!("x{k}"), 0.0, f64::INFINITY, [-0.75, 150.0, -0.02, 6.0][k]))
            .collect();
        lp.add_row(
            "r1",
            vec![(x[0], 0.25), (x[1], -60.0), (x[2], -0.04), (x[3], 9.0)],
            Sense::Le,
            0.0,
        );
        lp.add_row(
            "r2",
            vec![(x[0], 0.5), (x[1], -90.0), (x[2], -0.02), (x[3], 3.0)],
            Sense::Le,
            0.0,
        );
        lp.add_row("r3", vec![(x[2], 1.0)], Sense::Le, 1.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9);
    }
}

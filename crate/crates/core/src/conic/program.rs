//! Explicit conic-program representation.
//!
//! A program holds real variables `x`, a linear objective `c^T x`, and
//! constraint rows grouped into cone blocks. Row `i` defines the slack
//! `s_i = rhs_i - a_i^T x`; the slacks of a block must lie in its cone:
//!
//! - `Zero`: `s = 0` (equality rows),
//! - `Nonneg`: `s >= 0` (i.e. `a^T x <= rhs`),
//! - `SecondOrder`: `s_0 >= ||s_1..||_2`,
//! - `Exponential`: `(s_0, s_1, s_2)` with `s_1 e^{s_0/s_1} <= s_2`, `s_1 > 0`.
//!
//! This matches the slack convention of interior-point conic solvers, so
//! [`crate::conic::solve`] is a direct translation.

use crate::conic::build::VariableLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    Nonneg,
    SecondOrder,
    Exponential,
}

/// A contiguous run of rows forming one cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub start: usize,
    pub len: usize,
}

/// One affine row: sparse coefficients (sorted, unique indices) and a
/// right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    /// Build a row, merging duplicate variable indices.
    pub fn new(mut coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        coeffs.sort_unstable_by_key(|(i, _)| *i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (i, v) in coeffs {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|(_, v)| *v != 0.0);
        LinearRow { coeffs: merged, rhs }
    }

    /// Slack value `rhs - a^T x`.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

/// The assembled program.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub num_vars: usize,
    /// Dense linear objective.
    pub objective: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub blocks: Vec<ConeBlock>,
    /// Mapping between domain quantities and variable indices.
    pub layout: VariableLayout,
    /// Per-user channel divisor applied during encoding (empty for
    /// hand-assembled programs). Interference epigraph variables are in
    /// divisor-squared units.
    pub user_divisor: Vec<f64>,
}

impl ConicProgram {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Objective value at a candidate point.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Worst cone violation of a candidate point (0 when feasible).
    pub fn cone_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0f64;
        for block in &self.blocks {
            let s: Vec<f64> =
                self.rows[block.start..block.start + block.len].iter().map(|r| r.slack(x)).collect();
            let v = match block.kind {
                ConeKind::Zero => s.iter().fold(0f64, |m, v| m.max(v.abs())),
                ConeKind::Nonneg => s.iter().fold(0f64, |m, v| m.max(-v)),
                ConeKind::SecondOrder => {
                    let tail: f64 = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    tail - s[0]
                }
                ConeKind::Exponential => exp_cone_violation(s[0], s[1], s[2]),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Structural invariants: blocks partition the rows in order, exponential
    /// blocks are triples, and every variable appears in some row.
    pub fn validate(&self) -> Result<(), String> {
        let mut next = 0usize;
        for b in &self.blocks {
            if b.start != next {
                return Err(format!("block starting at {} is out of order (expected {next})", b.start));
            }
            if b.kind == ConeKind::Exponential && b.len != 3 {
                return Err(format!("exponential block at {} has len {}", b.start, b.len));
            }
            if b.len == 0 {
                return Err(format!("empty cone block at {}", b.start));
            }
            next += b.len;
        }
        if next != self.rows.len() {
            return Err(format!("blocks cover {next} rows but program has {}", self.rows.len()));
        }
        let mut seen = vec![false; self.num_vars];
        for row in &self.rows {
            for &(i, _) in &row.coeffs {
                if i >= self.num_vars {
                    return Err(format!("row references variable {i} out of {}", self.num_vars));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!("variable {i} is referenced by no row"));
        }
        Ok(())
    }

    /// Sparse text dump (rows then cone list) for external cross-checking.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "vars {}", self.num_vars).unwrap();
        let obj: Vec<String> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| format!("{i}:{c}"))
            .collect();
        writeln!(out, "objective {}", obj.join(" ")).unwrap();
        writeln!(out, "rows {}", self.rows.len()).unwrap();
        for (i, row) in self.rows.iter().enumerate() {
            let coeffs: Vec<String> =
                row.coeffs.iter().map(|(j, c)| format!("{j}:{c}")).collect();
            writeln!(out, "row {i} rhs {} : {}", row.rhs, coeffs.join(" ")).unwrap();
        }
        writeln!(out, "cones {}", self.blocks.len()).unwrap();
        for b in &self.blocks {
            let kind = match b.kind {
                ConeKind::Zero => "zero",
                ConeKind::Nonneg => "nonneg",
                ConeKind::SecondOrder => "soc",
                ConeKind::Exponential => "exp",
            };
            writeln!(out, "{kind} {} {}", b.start, b.len).unwrap();
        }
        out
    }
}

/// Violation of `(x, y, z)` against the closed exponential cone.
fn exp_cone_violation(x: f64, y: f64, z: f64) -> f64 {
    if y > 1e-300 {
        // Guard the exponent to avoid overflow on wildly infeasible points.
        let e = (x / y).min(700.0);
        y * e.exp() - z
    } else {
        (-y).max(x).max(-z)
    }
}

/// Incremental program assembly. Consecutive Zero/Nonneg rows merge into a
/// single cone block.
#[derive(Debug)]
pub struct ProgramBuilder {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<LinearRow>,
    blocks: Vec<ConeBlock>,
}

impl ProgramBuilder {
    pub fn new(num_vars: usize) -> Self {
        ProgramBuilder {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    fn push_scalar(&mut self, kind: ConeKind, row: LinearRow) {
        let start = self.rows.len();
        self.rows.push(row);
        match self.blocks.last_mut() {
            Some(b) if b.kind == kind && b.start + b.len == start => b.len += 1,
            _ => self.blocks.push(ConeBlock { kind, start, len: 1 }),
        }
    }

    /// `a^T x = rhs`.
    pub fn push_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.push_scalar(ConeKind::Zero, LinearRow::new(coeffs, rhs));
    }

    /// `a^T x <= rhs`.
    pub fn push_leq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.push_scalar(ConeKind::Nonneg, LinearRow::new(coeffs, rhs));
    }

    /// Second-order cone over the given slack rows.
    pub fn push_soc(&mut self, rows: Vec<LinearRow>) {
        let start = self.rows.len();
        let len = rows.len();
        assert!(len >= 2, "second-order cone needs at least two rows");
        self.rows.extend(rows);
        self.blocks.push(ConeBlock { kind: ConeKind::SecondOrder, start, len });
    }

    /// Exponential cone over three slack rows.
    pub fn push_exp(&mut self, rows: [LinearRow; 3]) {
        let start = self.rows.len();
        self.rows.extend(rows);
        self.blocks.push(ConeBlock { kind: ConeKind::Exponential, start, len: 3 });
    }

    /// Epigraph `t >= ||z||^2` for affine `z`, via the second-order cone
    /// `(1 + t, 1 - t, 2 z)`. Each `z` row uses the slack convention:
    /// `z = rhs - a^T x`.
    pub fn push_sq_epigraph(&mut self, t: usize, z_rows: Vec<LinearRow>) {
        let mut rows = Vec::with_capacity(2 + z_rows.len());
        rows.push(LinearRow::new(vec![(t, -1.0)], 1.0));
        rows.push(LinearRow::new(vec![(t, 1.0)], 1.0));
        for z in z_rows {
            let coeffs = z.coeffs.into_iter().map(|(i, c)| (i, 2.0 * c)).collect();
            rows.push(LinearRow::new(coeffs, 2.0 * z.rhs));
        }
        self.push_soc(rows);
    }

    pub fn finish(self, layout: VariableLayout) -> ConicProgram {
        ConicProgram {
            num_vars: self.num_vars,
            objective: self.objective,
            rows: self.rows,
            blocks: self.blocks,
            layout,
            user_divisor: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare_layout() -> VariableLayout {
        VariableLayout::empty()
    }

    #[test]
    fn rows_merge_duplicate_indices() {
        let row = LinearRow::new(vec![(2, 1.0), (0, 2.0), (2, 3.0)], 1.0);
        assert_eq!(row.coeffs, vec![(0, 2.0), (2, 4.0)]);
    }

    #[test]
    fn nonneg_blocks_merge() {
        let mut b = ProgramBuilder::new(2);
        b.push_leq(vec![(0, 1.0)], 1.0);
        b.push_leq(vec![(1, 1.0)], 1.0);
        b.push_eq(vec![(0, 1.0), (1, 1.0)], 0.5);
        let p = b.finish(bare_layout());
        assert_eq!(p.blocks.len(), 2);
        assert_eq!(p.blocks[0], ConeBlock { kind: ConeKind::Nonneg, start: 0, len: 2 });
    }

    #[test]
    fn violation_detects_each_cone() {
        let mut b = ProgramBuilder::new(3);
        // x0 <= 1
        b.push_leq(vec![(0, 1.0)], 1.0);
        // (x1, x0, x2) in SOC: rows s = x1, s = x0, s = x2
        b.push_soc(vec![
            LinearRow::new(vec![(1, -1.0)], 0.0),
            LinearRow::new(vec![(0, -1.0)], 0.0),
            LinearRow::new(vec![(2, -1.0)], 0.0),
        ]);
        let p = b.finish(bare_layout());
        assert!(p.cone_violation(&[0.3, 1.0, 0.4]) <= 1e-12);
        assert!(p.cone_violation(&[2.0, 3.0, 0.0]) > 0.9); // x0 <= 1 broken
        assert!(p.cone_violation(&[1.0, 0.5, 1.0]) > 0.5); // SOC broken
    }

    #[test]
    fn sq_epigraph_boundary() {
        let mut b = ProgramBuilder::new(2);
        // t >= z^2 with z = x1
        b.push_sq_epigraph(0, vec![LinearRow::new(vec![(1, -1.0)], 0.0)]);
        let p = b.finish(bare_layout());
        assert!(p.cone_violation(&[4.0, 2.0]) <= 1e-12);
        assert!(p.cone_violation(&[4.0 - 1e-6, 2.0]) > 0.0);
        assert!(p.cone_violation(&[3.9, 2.0]) > 0.0);
    }

    #[test]
    fn validate_flags_unreferenced_variable() {
        let mut b = ProgramBuilder::new(2);
        b.push_leq(vec![(0, 1.0)], 1.0);
        let p = b.finish(bare_layout());
        assert!(p.validate().is_err());
    }
}

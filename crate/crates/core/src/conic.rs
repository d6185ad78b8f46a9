//! Canonical second-order-cone program builder and solver contract.
//!
//! Programs are built from named real variables, affine expressions and
//! four constraint kinds:
//!
//! * affine equality `e = 0`,
//! * affine inequality `e <= 0`,
//! * second-order cone `||v|| <= t`,
//! * rotated (hyperbolic) cone `u v >= ||w||²` with `u, v >= 0`.
//!
//! Rotated cones are lowered to standard cones via
//! `||(2w, u - v)|| <= u + v`. Complex beamformer variables are modeled
//! as `2 N_t` reals (real parts then imaginary parts); [`CxVar`] exposes
//! the affine forms needed for inner products and link amplitudes.
//!
//! Solving is delegated to an interior-point conic solver. On success the
//! primal is audited against every constraint and the worst normalized
//! residual is reported alongside the solution.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Handle to a block of real variables.
#[derive(Debug, Clone, Copy)]
pub struct Var {
    pub offset: usize,
    pub len: usize,
}

impl Var {
    /// Affine expression selecting component `i`.
    pub fn at(&self, i: usize) -> LinExpr {
        assert!(i < self.len, "variable component out of range");
        LinExpr { terms: vec![(self.offset + i, 1.0)], constant: 0.0 }
    }

    /// Affine expression for a scalar variable.
    pub fn expr(&self) -> LinExpr {
        assert_eq!(self.len, 1, "expr() requires a scalar variable");
        self.at(0)
    }
}

/// Handle to a complex vector variable of length `n`, stored as `2n`
/// reals: all real parts, then all imaginary parts.
#[derive(Debug, Clone, Copy)]
pub struct CxVar {
    pub var: Var,
    pub n: usize,
}

impl CxVar {
    pub fn re_at(&self, i: usize) -> LinExpr {
        self.var.at(i)
    }

    pub fn im_at(&self, i: usize) -> LinExpr {
        self.var.at(self.n + i)
    }

    /// `Re{<a, x>} = Re{a^H x}` as an affine form.
    pub fn re_inner(&self, a: &[Complex64]) -> LinExpr {
        assert_eq!(a.len(), self.n);
        let mut e = LinExpr::zero();
        for (i, ai) in a.iter().enumerate() {
            e.push(self.var.offset + i, ai.re);
            e.push(self.var.offset + self.n + i, ai.im);
        }
        e
    }

    /// Row action `h x` as a pair of affine forms `(Re, Im)`.
    pub fn action(&self, h: &[Complex64]) -> (LinExpr, LinExpr) {
        assert_eq!(h.len(), self.n);
        let mut re = LinExpr::zero();
        let mut im = LinExpr::zero();
        for (i, hi) in h.iter().enumerate() {
            re.push(self.var.offset + i, hi.re);
            re.push(self.var.offset + self.n + i, -hi.im);
            im.push(self.var.offset + self.n + i, hi.re);
            im.push(self.var.offset + i, hi.im);
        }
        (re, im)
    }

    /// All `2n` real coordinates, each scaled by `scale`. `||coords||²`
    /// equals `scale² ||x||²`.
    pub fn coords(&self, scale: f64) -> Vec<LinExpr> {
        (0..2 * self.n)
            .map(|i| LinExpr { terms: vec![(self.var.offset + i, scale)], constant: 0.0 })
            .collect()
    }
}

/// Sparse affine expression `constant + Σ coeff · x[col]`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn push(&mut self, col: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((col, coeff));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(c, a)| a * x[c]).sum::<f64>()
    }

    fn abs_scale(&self, x: &[f64]) -> f64 {
        self.constant.abs() + self.terms.iter().map(|&(c, a)| (a * x[c]).abs()).sum::<f64>()
    }
}

impl std::ops::Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl std::ops::Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.terms.extend(rhs.terms.into_iter().map(|(c, a)| (c, -a)));
        self.constant -= rhs.constant;
        self
    }
}

impl std::ops::Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, rhs: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= rhs;
        }
        self.constant *= rhs;
        self
    }
}

impl std::ops::Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl std::ops::Add<f64> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: f64) -> LinExpr {
        self.constant += rhs;
        self
    }
}

impl std::ops::Sub<f64> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: f64) -> LinExpr {
        self.constant -= rhs;
        self
    }
}

#[derive(Debug, Clone)]
enum Constraint {
    /// `e = 0`
    Eq(LinExpr),
    /// `e <= 0`
    Le(LinExpr),
    /// `||v|| <= t`
    Soc { t: LinExpr, v: Vec<LinExpr> },
    /// `u v >= ||w||²`, `u, v >= 0`
    Rotated { u: LinExpr, v: LinExpr, w: Vec<LinExpr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Termination classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Primal solution plus audit data.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Raw solver status string, for traces.
    pub status_detail: String,
    pub x: Vec<f64>,
    /// Objective in the program's own sense (constant included).
    pub objective: f64,
    pub iterations: u32,
    pub solve_time_s: f64,
    /// Worst normalized constraint violation of the returned primal.
    pub max_residual: f64,
}

impl SolveResult {
    pub fn value(&self, var: Var) -> &[f64] {
        &self.x[var.offset..var.offset + var.len]
    }

    pub fn scalar(&self, var: Var) -> f64 {
        assert_eq!(var.len, 1);
        self.x[var.offset]
    }

    pub fn complex_value(&self, cx: CxVar) -> Vec<Complex64> {
        let s = self.value(cx.var);
        (0..cx.n).map(|i| Complex64::new(s[i], s[cx.n + i])).collect()
    }
}

/// A conic program under construction.
#[derive(Debug, Default)]
pub struct ConicProgram {
    n_vars: usize,
    names: Vec<(String, Var)>,
    constraints: Vec<Constraint>,
    sense: Option<Sense>,
    objective: LinExpr,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn vector(&mut self, name: &str, len: usize) -> Var {
        assert!(len > 0);
        let v = Var { offset: self.n_vars, len };
        self.n_vars += len;
        self.names.push((name.to_string(), v));
        v
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        self.vector(name, 1)
    }

    /// Allocate a complex vector of length `n` as `2n` reals.
    pub fn complex_vector(&mut self, name: &str, n: usize) -> CxVar {
        let var = self.vector(name, 2 * n);
        CxVar { var, n }
    }

    pub fn minimize(&mut self, e: LinExpr) {
        self.sense = Some(Sense::Minimize);
        self.objective = e;
    }

    pub fn maximize(&mut self, e: LinExpr) {
        self.sense = Some(Sense::Maximize);
        self.objective = e;
    }

    /// `e = 0`.
    pub fn con_eq(&mut self, e: LinExpr) {
        self.constraints.push(Constraint::Eq(e));
    }

    /// `e <= 0`.
    pub fn con_le(&mut self, e: LinExpr) {
        self.constraints.push(Constraint::Le(e));
    }

    /// `lhs <= rhs`.
    pub fn con_le_expr(&mut self, lhs: LinExpr, rhs: LinExpr) {
        self.con_le(lhs - rhs);
    }

    /// `||v|| <= t`.
    pub fn soc(&mut self, t: LinExpr, v: Vec<LinExpr>) {
        self.constraints.push(Constraint::Soc { t, v });
    }

    /// Hyperbolic constraint `u v >= ||w||²` with `u, v >= 0` implied.
    ///
    /// This is the one-stop encoding for quadratic-over-linear epigraphs
    /// (`t >= ||w||²/v`), reciprocal terms (`t v >= const`) and plain
    /// convex quadratics (`t >= ||w||²` with `v = 1`).
    pub fn add_hyperbolic(&mut self, u: LinExpr, v: LinExpr, w: Vec<LinExpr>) {
        self.constraints.push(Constraint::Rotated { u, v, w });
    }

    /// Plain-text dump of the program, for external cross-checking.
    ///
    /// Format: one header line, one `var` line per declared variable
    /// (`var <name> offset=<o> len=<l>`), the objective, then one line
    /// per constraint using expressions written as
    /// `c + a*x<i> + ...`. Cone lines are
    /// `soc: ||[e; ...]|| <= t` and `rot: (u)(v) >= ||[e; ...]||^2`.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        out.push_str("# conic-program v1\n");
        for (name, v) in &self.names {
            let _ = writeln!(out, "var {name} offset={} len={}", v.offset, v.len);
        }
        let sense = match self.sense {
            Some(Sense::Minimize) => "min",
            Some(Sense::Maximize) => "max",
            None => "feas",
        };
        let _ = writeln!(out, "{sense}: {}", fmt_expr(&self.objective));
        for c in &self.constraints {
            match c {
                Constraint::Eq(e) => {
                    let _ = writeln!(out, "eq: {} == 0", fmt_expr(e));
                }
                Constraint::Le(e) => {
                    let _ = writeln!(out, "le: {} <= 0", fmt_expr(e));
                }
                Constraint::Soc { t, v } => {
                    let parts: Vec<String> = v.iter().map(fmt_expr).collect();
                    let _ = writeln!(out, "soc: ||[{}]|| <= {}", parts.join("; "), fmt_expr(t));
                }
                Constraint::Rotated { u, v, w } => {
                    let parts: Vec<String> = w.iter().map(fmt_expr).collect();
                    let _ = writeln!(
                        out,
                        "rot: ({})({}) >= ||[{}]||^2",
                        fmt_expr(u),
                        fmt_expr(v),
                        parts.join("; ")
                    );
                }
            }
        }
        out
    }

    /// Solve the program to tolerance `tol` and audit the primal.
    pub fn solve(&self, tol: f64) -> Result<SolveResult> {
        let sense = self
            .sense
            .ok_or_else(|| Error::Program("objective not set before solve".into()))?;
        let n = self.n_vars;

        // Assemble rows grouped as: equalities, inequalities, cones.
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        let push_row = |triplets: &mut Vec<(usize, usize, f64)>,
                            b: &mut Vec<f64>,
                            row: &mut usize,
                            e: &LinExpr,
                            negate: bool| {
            let sign = if negate { -1.0 } else { 1.0 };
            for &(col, coeff) in &e.terms {
                triplets.push((*row, col, sign * coeff));
            }
            b.push(if negate { e.constant } else { -e.constant });
            *row += 1;
        };

        let n_eq = self.constraints.iter().filter(|c| matches!(c, Constraint::Eq(_))).count();
        let n_le = self.constraints.iter().filter(|c| matches!(c, Constraint::Le(_))).count();
        for c in &self.constraints {
            if let Constraint::Eq(e) = c {
                push_row(&mut triplets, &mut b, &mut row, e, false);
            }
        }
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        for c in &self.constraints {
            if let Constraint::Le(e) = c {
                push_row(&mut triplets, &mut b, &mut row, e, false);
            }
        }
        if n_le > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_le));
        }
        for c in &self.constraints {
            match c {
                Constraint::Soc { t, v } => {
                    push_row(&mut triplets, &mut b, &mut row, t, true);
                    for e in v {
                        push_row(&mut triplets, &mut b, &mut row, e, true);
                    }
                    cones.push(SupportedConeT::SecondOrderConeT(v.len() + 1));
                }
                Constraint::Rotated { u, v, w } => {
                    // u v >= ||w||²  <=>  ||(2w, u - v)|| <= u + v.
                    let t = u.clone() + v.clone();
                    push_row(&mut triplets, &mut b, &mut row, &t, true);
                    for e in w {
                        push_row(&mut triplets, &mut b, &mut row, &(e.clone() * 2.0), true);
                    }
                    let diff = u.clone() - v.clone();
                    push_row(&mut triplets, &mut b, &mut row, &diff, true);
                    cones.push(SupportedConeT::SecondOrderConeT(w.len() + 2));
                }
                _ => {}
            }
        }

        let a = csc_from_triplets(row, n, &mut triplets);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(col, coeff) in &self.objective.terms {
            q[col] += match sense {
                Sense::Minimize => coeff,
                Sense::Maximize => -coeff,
            };
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(200)
            .tol_feas(tol)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            // Keep reduced-accuracy exits close to full accuracy; the
            // audit below is the final arbiter.
            .reduced_tol_feas(1e-7)
            .reduced_tol_gap_abs(1e-6)
            .reduced_tol_gap_rel(1e-6)
            .build()
            .map_err(|e| Error::Program(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Program(format!("solver setup: {e:?}")))?;
        solver.solve();

        let sol = &solver.solution;
        let mut status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            _ => SolveStatus::NumericalFailure,
        };
        let mut max_residual = if status == SolveStatus::Infeasible {
            f64::INFINITY
        } else {
            self.audit(&sol.x)
        };
        // Reduced-accuracy and stalled runs still carry their best
        // primal; accept it when it audits clean. The caller sees the
        // raw status in `status_detail`.
        if status == SolveStatus::NumericalFailure && max_residual <= 1e-4 {
            status = SolveStatus::Optimal;
        }
        if status != SolveStatus::Optimal {
            max_residual = f64::INFINITY;
        }

        let objective = match sense {
            Sense::Minimize => sol.obj_val + self.objective.constant,
            Sense::Maximize => -sol.obj_val + self.objective.constant,
        };

        Ok(SolveResult {
            status,
            status_detail: format!("{:?}", sol.status),
            x: sol.x.clone(),
            objective,
            iterations: sol.iterations,
            solve_time_s: sol.solve_time,
            max_residual,
        })
    }

    /// Worst normalized constraint violation at `x`.
    pub fn audit(&self, x: &[f64]) -> f64 {
        self.audit_by_kind(x).into_iter().map(|(_, r)| r).fold(0.0, f64::max)
    }

    /// Normalized violations grouped by constraint kind, for diagnostics.
    pub fn audit_by_kind(&self, x: &[f64]) -> Vec<(&'static str, f64)> {
        let mut worst = [("eq", 0.0f64), ("le", 0.0), ("soc", 0.0), ("rot", 0.0)];
        for c in &self.constraints {
            let (slot, r) = match c {
                Constraint::Eq(e) => (0, e.eval(x).abs() / (1.0 + e.abs_scale(x))),
                Constraint::Le(e) => (1, e.eval(x).max(0.0) / (1.0 + e.abs_scale(x))),
                Constraint::Soc { t, v } => {
                    let tv = t.eval(x);
                    let nv = v.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                    (2, (nv - tv).max(0.0) / (1.0 + nv + tv.abs()))
                }
                Constraint::Rotated { u, v, w } => {
                    let (uv, vv) = (u.eval(x), v.eval(x));
                    let nw = w.iter().map(|e| e.eval(x).powi(2)).sum::<f64>();
                    let cone = (nw - uv * vv).max(0.0) / (1.0 + nw + (uv * vv).abs());
                    (3, cone.max((-uv).max(0.0)).max((-vv).max(0.0)))
                }
            };
            worst[slot].1 = worst[slot].1.max(r);
        }
        worst.to_vec()
    }
}

fn fmt_expr(e: &LinExpr) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    if e.constant != 0.0 || e.terms.is_empty() {
        let _ = write!(s, "{:.12e}", e.constant);
    }
    for &(col, coeff) in &e.terms {
        if !s.is_empty() {
            s.push_str(" + ");
        }
        let _ = write!(s, "{coeff:.12e}*x{col}");
    }
    s
}

/// Build a CSC matrix from (row, col, value) triplets, merging duplicates.
fn csc_from_triplets(m: usize, n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> CscMatrix {
    triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval: Vec<usize> = Vec::with_capacity(triplets.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
    colptr.push(0);
    let mut cur_col = 0usize;
    for &(r, c, v) in triplets.iter() {
        while cur_col < c {
            colptr.push(rowval.len());
            cur_col += 1;
        }
        // Merge with the previous entry when it is the same (row, col).
        if rowval.len() > colptr[cur_col] && *rowval.last().unwrap() == r {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        rowval.push(r);
        nzval.push(v);
    }
    while cur_col < n {
        colptr.push(rowval.len());
        cur_col += 1;
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-8;

    #[test]
    fn hyperbolic_reciprocal() {
        // min u  s.t. u v >= 1, v <= 2  ->  u* = 0.5.
        let mut p = ConicProgram::new();
        let u = p.scalar("u");
        let v = p.scalar("v");
        p.add_hyperbolic(u.expr(), v.expr(), vec![LinExpr::constant(1.0)]);
        p.con_le(v.expr() - 2.0);
        p.minimize(u.expr());
        let r = p.solve(TOL).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_relative_eq!(r.objective, 0.5, max_relative = 1e-6);
        assert!(r.max_residual < 1e-6);
    }

    #[test]
    fn hyperbolic_quad_over_linear() {
        // min t  s.t. t >= x²/s, x >= 2, s <= 4  ->  t* = 1.
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        let x = p.scalar("x");
        let s = p.scalar("s");
        p.add_hyperbolic(t.expr(), s.expr(), vec![x.expr()]);
        p.con_le(-x.expr() + 2.0);
        p.con_le(s.expr() - 4.0);
        p.minimize(t.expr());
        let r = p.solve(TOL).unwrap();
        assert_relative_eq!(r.objective, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn soc_norm() {
        // min t  s.t. t >= ||(3,4)||  ->  5.
        let mut p = ConicProgram::new();
        let t = p.scalar("t");
        p.soc(t.expr(), vec![LinExpr::constant(3.0), LinExpr::constant(4.0)]);
        p.minimize(t.expr());
        let r = p.solve(TOL).unwrap();
        assert_relative_eq!(r.objective, 5.0, max_relative = 1e-6);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.con_le(x.expr() - 1.0); // x <= 1
        p.con_le(-x.expr() + 2.0); // x >= 2
        p.minimize(x.expr());
        let r = p.solve(TOL).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn random_lp_matches_vertex_enumeration() {
        // 2-variable LPs: min c·x over {x >= 0, a_i · x <= b_i}. The
        // optimum sits on a vertex; enumerate all constraint pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..20 {
            // Rows: x >= 0, y >= 0 encoded as -x <= 0 etc, plus 3 cuts
            // with positive normals so the feasible set is bounded.
            let mut rows: Vec<([f64; 2], f64)> = vec![([-1.0, 0.0], 0.0), ([0.0, -1.0], 0.0)];
            for _ in 0..3 {
                let a = [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)];
                let b = rng.random_range(0.5..2.0);
                rows.push((a, b));
            }
            let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];

            // Oracle: enumerate vertices of the polygon.
            let mut best = f64::INFINITY;
            for i in 0..rows.len() {
                for j in (i + 1)..rows.len() {
                    let (a1, b1) = rows[i];
                    let (a2, b2) = rows[j];
                    let det = a1[0] * a2[1] - a1[1] * a2[0];
                    if det.abs() < 1e-9 {
                        continue;
                    }
                    let x = (b1 * a2[1] - b2 * a1[1]) / det;
                    let y = (a1[0] * b2 - a2[0] * b1) / det;
                    let feasible = rows
                        .iter()
                        .all(|(a, b)| a[0] * x + a[1] * y <= b + 1e-9);
                    if feasible {
                        best = best.min(c[0] * x + c[1] * y);
                    }
                }
            }

            let mut p = ConicProgram::new();
            let xy = p.vector("xy", 2);
            for (a, b) in &rows {
                p.con_le(xy.at(0) * a[0] + xy.at(1) * a[1] - *b);
            }
            p.minimize(xy.at(0) * c[0] + xy.at(1) * c[1]);
            let r = p.solve(TOL).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal, "trial {trial}");
            assert_relative_eq!(r.objective, best, epsilon = 1e-6);
        }
    }

    #[test]
    fn complexify_inner_products() {
        let mut p = ConicProgram::new();
        let x = p.complex_vector("x", 3);
        let a: Vec<Complex64> = vec![
            Complex64::new(0.7, -0.2),
            Complex64::new(-1.1, 0.4),
            Complex64::new(0.3, 0.9),
        ];

        // Assignment x := a.
        let mut assign = vec![0.0; p.n_vars()];
        for i in 0..3 {
            assign[x.var.offset + i] = a[i].re;
            assign[x.var.offset + 3 + i] = a[i].im;
        }

        // <x, x> expansion equals ||x||².
        let sq: f64 = x.coords(1.0).iter().map(|e| e.eval(&assign).powi(2)).sum();
        assert_relative_eq!(sq, cvec::norm_sq(&a), epsilon = 1e-12);

        // Re{<a, x>} at x = a equals ||a||².
        assert_relative_eq!(x.re_inner(&a).eval(&assign), cvec::norm_sq(&a), epsilon = 1e-12);

        // Random h: affine action matches complex arithmetic.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h: Vec<Complex64> = (0..3)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let (re, im) = x.action(&h);
            let direct = cvec::row_action(&h, &a);
            assert_relative_eq!(re.eval(&assign), direct.re, epsilon = 1e-12);
            assert_relative_eq!(im.eval(&assign), direct.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn complex_solution_extraction() {
        // min ||x - a||² via hyperbolic epigraph -> x = a.
        let a = [Complex64::new(0.3, -0.8), Complex64::new(1.2, 0.5)];
        let mut p = ConicProgram::new();
        let x = p.complex_vector("x", 2);
        let t = p.scalar("t");
        let diffs: Vec<LinExpr> = (0..2)
            .flat_map(|i| {
                vec![x.re_at(i) - a[i].re, x.im_at(i) - a[i].im]
            })
            .collect();
        p.add_hyperbolic(t.expr(), LinExpr::constant(1.0), diffs);
        p.minimize(t.expr());
        let r = p.solve(TOL).unwrap();
        let xv = r.complex_value(x);
        for i in 0..2 {
            assert_relative_eq!(xv[i].re, a[i].re, epsilon = 1e-5);
            assert_relative_eq!(xv[i].im, a[i].im, epsilon = 1e-5);
        }
    }

    #[test]
    fn dump_lists_variables_and_cones() {
        let mut p = ConicProgram::new();
        let u = p.scalar("power");
        let w = p.complex_vector("beam", 2);
        p.add_hyperbolic(u.expr(), LinExpr::constant(1.0), w.coords(1.0));
        p.minimize(u.expr());
        let text = p.dump();
        assert!(text.contains("# conic-program v1"));
        assert!(text.contains("var power"));
        assert!(text.contains("var beam offset=1 len=4"));
        assert!(text.contains("rot:"));
        assert!(text.contains("min:"));
    }

    #[test]
    fn duplicate_terms_are_merged() {
        // x + x <= 1, max x -> 0.5.
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        let mut e = LinExpr::zero();
        e.push(x.offset, 1.0);
        e.push(x.offset, 1.0);
        p.con_le(e - 1.0);
        p.maximize(x.expr());
        let r = p.solve(TOL).unwrap();
        assert_relative_eq!(r.objective, 0.5, max_relative = 1e-6);
    }
}

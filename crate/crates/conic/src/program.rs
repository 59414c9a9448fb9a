//! Conic program assembly and the interior-point backend.
//!
//! A [`Program`] is a linear objective (maximize) with an optional convex
//! quadratic penalty, over real variables, subject to blocks of conic
//! constraints: zero (equality), nonnegative, second-order, and real
//! symmetric PSD blocks. Complex Hermitian LMIs are realified at the
//! builder layer (see [`crate::hermitian`]) so the backend is real-only.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::expr::LinExpr;
use crate::sym::SymmetricAffine;

#[derive(Clone, Debug)]
pub enum ConeBlock {
    /// Every expression equals zero.
    Zero(Vec<LinExpr>),
    /// Every expression is nonnegative.
    Nonneg(Vec<LinExpr>),
    /// `exprs[0] >= || exprs[1..] ||_2`.
    Soc(Vec<LinExpr>),
    /// Symmetric affine matrix is PSD.
    Psd(SymmetricAffine),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: Status,
    /// Primal values for all variables (present for Optimal / MaxIter).
    pub x: Vec<f64>,
    /// Objective value in the *maximize* sense.
    pub objective: f64,
    /// Worst conic-constraint violation, relative to each block's scale.
    pub max_violation: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub feasibility: f64,
    pub gap: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-7,
            gap: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Program {
    n_vars: usize,
    obj_linear: Vec<(usize, f64)>,
    /// Quadratic penalty triplets: objective -= c * x_i * x_j.
    obj_quad: Vec<(usize, usize, f64)>,
    blocks: Vec<ConeBlock>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.n_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> std::ops::Range<usize> {
        let start = self.n_vars;
        self.n_vars += n;
        start..self.n_vars
    }

    /// Add `c * x_i` to the maximized objective.
    pub fn maximize_term(&mut self, var: usize, c: f64) {
        if c != 0.0 {
            self.obj_linear.push((var, c));
        }
    }

    /// Subtract `c * x_i * x_j` from the maximized objective. The
    /// accumulated quadratic form must be positive semidefinite for the
    /// program to remain concave; that is the caller's responsibility.
    pub fn quad_penalty(&mut self, i: usize, j: usize, c: f64) {
        if c != 0.0 {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            self.obj_quad.push((i, j, c));
        }
    }

    pub fn eq_zero(&mut self, expr: LinExpr) {
        self.push_rows_merge_zero(expr);
    }

    pub fn nonneg(&mut self, expr: LinExpr) {
        if let Some(ConeBlock::Nonneg(rows)) = self.blocks.last_mut() {
            rows.push(expr);
        } else {
            self.blocks.push(ConeBlock::Nonneg(vec![expr]));
        }
    }

    /// `head >= ||tail||`.
    pub fn soc(&mut self, exprs: Vec<LinExpr>) {
        assert!(exprs.len() >= 2, "SOC needs a head and at least one tail entry");
        self.blocks.push(ConeBlock::Soc(exprs));
    }

    /// Convenience: `s >= x^2` for scalar affine `x` via a 3-dim SOC
    /// (`|| (2x, s-1) || <= s+1`).
    pub fn square_epigraph(&mut self, s: &LinExpr, x: &LinExpr) {
        let mut head = s.clone();
        head.add_constant(1.0);
        let mut tail1 = s.clone();
        tail1.add_constant(-1.0);
        self.soc(vec![head, x.scaled(2.0), tail1]);
    }

    pub fn psd(&mut self, block: SymmetricAffine) {
        self.blocks.push(ConeBlock::Psd(block));
    }

    fn push_rows_merge_zero(&mut self, expr: LinExpr) {
        if let Some(ConeBlock::Zero(rows)) = self.blocks.last_mut() {
            rows.push(expr);
        } else {
            self.blocks.push(ConeBlock::Zero(vec![expr]));
        }
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn objective_terms(&self) -> (&[(usize, f64)], &[(usize, usize, f64)]) {
        (&self.obj_linear, &self.obj_quad)
    }

    /// Evaluate the maximize-sense objective at a point.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.obj_linear.iter().map(|&(i, c)| c * x[i]).sum();
        let quad: f64 = self.obj_quad.iter().map(|&(i, j, c)| c * x[i] * x[j]).sum();
        lin - quad
    }

    pub fn solve(&self, tol: &Tolerances) -> Solution {
        match std::env::var("CONIC_BACKEND").as_deref() {
            Ok("clarabel") => return self.solve_clarabel(tol),
            Ok("dense") => return self.solve_dense(tol),
            _ => {}
        }
        // The dense path is much faster on this problem class (few
        // variables, several moderate PSD blocks). Clarabel stays as the
        // fallback for anything the dense solver cannot certify.
        let sol = self.solve_dense(tol);
        match sol.status {
            Status::Optimal | Status::Infeasible => sol,
            _ => self.solve_clarabel(tol),
        }
    }

    /// Solve with the dense homogeneous-embedding backend.
    pub fn solve_dense(&self, tol: &Tolerances) -> Solution {
        let n = self.n_vars;
        let obj_scale = self.objective_scale();

        // Unconstrained concave quadratic: the maximizer solves a linear
        // system, no cone machinery needed.
        if self.blocks.is_empty() && !self.obj_quad.is_empty() {
            return self.solve_unconstrained_quad();
        }

        // Quadratic penalty becomes an epigraph variable t with an SOC
        // constraint t >= ||L x||^2 where L'L is the penalty form. The
        // form is pre-multiplied by the objective scale so t stays O(1)
        // relative to the scaled objective.
        let quad_l: Option<DMatrix<f64>> = if self.obj_quad.is_empty() {
            None
        } else {
            let mut mmat: DMatrix<f64> = DMatrix::zeros(n, n);
            for &(i, j, c) in &self.obj_quad {
                let c = c * obj_scale;
                if i == j {
                    mmat[(i, i)] += c;
                } else {
                    mmat[(i, j)] += 0.5 * c;
                    mmat[(j, i)] += 0.5 * c;
                }
            }
            let eig = mmat.symmetric_eigen();
            let lmax = eig
                .eigenvalues
                .iter()
                .fold(0.0f64, |a: f64, &v: &f64| a.max(v.abs()))
                .max(1e-300);
            let keep: Vec<usize> = (0..n)
                .filter(|&i| eig.eigenvalues[i] > lmax * 1e-12)
                .collect();
            let mut l = DMatrix::zeros(keep.len(), n);
            for (r, &i) in keep.iter().enumerate() {
                let s = eig.eigenvalues[i].sqrt();
                for c in 0..n {
                    l[(r, c)] = s * eig.eigenvectors[(c, i)];
                }
            }
            Some(l)
        };
        let n_total = n + quad_l.is_some() as usize;
        let t_var = n;

        let mut q = vec![0.0; n_total];
        for &(i, c) in &self.obj_linear {
            q[i] -= c * obj_scale;
        }
        if quad_l.is_some() {
            q[t_var] = 1.0;
        }

        // Dense rows s = b - A x with zero-cone rows split into
        // equalities, same per-block scaling as the sparse path.
        let mut cones: Vec<crate::ipm::Cone> = Vec::new();
        let mut dense_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();

        let push_scaled = |rows: &[LinExpr], out: &mut Vec<(Vec<(usize, f64)>, f64)>| {
            let mx = rows.iter().map(LinExpr::max_abs).fold(0.0f64, f64::max);
            let scale = if mx > 0.0 { 1.0 / mx } else { 1.0 };
            for e in rows {
                let terms: Vec<(usize, f64)> =
                    e.terms.iter().map(|&(i, c)| (i, c * scale)).collect();
                out.push((terms, e.constant * scale));
            }
        };

        for block in &self.blocks {
            match block {
                ConeBlock::Zero(rows) => push_scaled(rows, &mut eq_rows),
                ConeBlock::Nonneg(rows) => {
                    cones.push(crate::ipm::Cone::Nonneg(rows.len()));
                    push_scaled(rows, &mut dense_rows);
                }
                ConeBlock::Soc(rows) => {
                    cones.push(crate::ipm::Cone::Soc(rows.len()));
                    push_scaled(rows, &mut dense_rows);
                }
                ConeBlock::Psd(sym) => {
                    cones.push(crate::ipm::Cone::Psd(sym.dim()));
                    push_scaled(&sym.svec_exprs(), &mut dense_rows);
                }
            }
        }
        if let Some(l) = &quad_l {
            // || (2 L x, t - 1) || <= t + 1
            let lmx = l.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let scale = 1.0 / (2.0 * lmx).max(1.0);
            cones.push(crate::ipm::Cone::Soc(l.nrows() + 2));
            dense_rows.push((vec![(t_var, scale)], scale));
            for r in 0..l.nrows() {
                let terms: Vec<(usize, f64)> = (0..n)
                    .filter(|&c| l[(r, c)] != 0.0)
                    .map(|c| (c, 2.0 * l[(r, c)] * scale))
                    .collect();
                dense_rows.push((terms, 0.0));
            }
            dense_rows.push((vec![(t_var, scale)], -scale));
        }

        // s = b - A x form
        let m = dense_rows.len();
        let p = eq_rows.len();
        let mut a: DMatrix<f64> = DMatrix::zeros(m, n_total);
        let mut b = vec![0.0; m];
        for (r, (terms, cst)) in dense_rows.iter().enumerate() {
            b[r] = *cst;
            for &(i, c) in terms {
                a[(r, i)] -= c;
            }
        }
        // equalities a0 x = b0 from expr = 0: terms*x + cst = 0
        let mut a0: DMatrix<f64> = DMatrix::zeros(p, n_total);
        let mut b0 = vec![0.0; p];
        for (r, (terms, cst)) in eq_rows.iter().enumerate() {
            b0[r] = -*cst;
            for &(i, c) in terms {
                a0[(r, i)] += c;
            }
        }

        // With the epigraph reformulation the primal error scales like
        // sqrt(gap), so push the gap tolerance harder when a quadratic
        // penalty is present.
        let gap_tol = if quad_l.is_some() {
            (tol.gap * 1e-3).max(1e-11)
        } else {
            tol.gap * 1e-1
        };
        // Ruiz equilibration: variables carry very different units
        // (coordinates, slacks, epigraph) and block magnitudes differ,
        // which otherwise drives the embedding toward spurious tau
        // collapse. Rows inside a cone block must share one scale or
        // cone membership changes, so row scaling is per block.
        let mut col_scale = vec![1.0f64; n_total];
        let mut block_ranges: Vec<(usize, usize)> = Vec::new();
        {
            let mut at = 0;
            for c in &cones {
                block_ranges.push((at, at + c.rows()));
                at += c.rows();
            }
        }
        for _ in 0..4 {
            for &(lo, hi) in &block_ranges {
                let mut mx = 0.0f64;
                for r in lo..hi {
                    for j in 0..n_total {
                        mx = mx.max(a[(r, j)].abs());
                    }
                }
                if mx > 0.0 {
                    let d = 1.0 / mx.sqrt();
                    for r in lo..hi {
                        for j in 0..n_total {
                            a[(r, j)] *= d;
                        }
                        b[r] *= d;
                    }
                }
            }
            for r in 0..p {
                let mut mx = 0.0f64;
                for j in 0..n_total {
                    mx = mx.max(a0[(r, j)].abs());
                }
                if mx > 0.0 {
                    let d = 1.0 / mx.sqrt();
                    for j in 0..n_total {
                        a0[(r, j)] *= d;
                    }
                    b0[r] *= d;
                }
            }
            for j in 0..n_total {
                let mut mx = 0.0f64;
                for r in 0..m {
                    mx = mx.max(a[(r, j)].abs());
                }
                for r in 0..p {
                    mx = mx.max(a0[(r, j)].abs());
                }
                if mx > 0.0 {
                    let d = 1.0 / mx.sqrt();
                    col_scale[j] *= d;
                    for r in 0..m {
                        a[(r, j)] *= d;
                    }
                    for r in 0..p {
                        a0[(r, j)] *= d;
                    }
                }
            }
        }
        for j in 0..n_total {
            q[j] *= col_scale[j];
        }

        let settings = crate::ipm::IpmSettings {
            max_iter: tol.max_iter as usize,
            tol_feas: tol.feasibility * 1e-1,
            tol_gap: gap_tol,
            ..crate::ipm::IpmSettings::default()
        };
        let prob = crate::ipm::IpmProblem {
            q: &q,
            a: &a,
            b: &b,
            cones: &cones,
            a0: &a0,
            b0: &b0,
        };
        let timing = std::env::var("CONIC_TIMING").is_ok();
        let t0 = std::time::Instant::now();
        let isol = crate::ipm::solve(&prob, &settings);
        if timing {
            eprintln!(
                "conic-dense: n={} rows={} eq={} t={:.3}s status={:?}",
                n_total,
                m,
                p,
                t0.elapsed().as_secs_f64(),
                isol.status
            );
        }

        let status = match isol.status {
            crate::ipm::IpmStatus::Optimal => Status::Optimal,
            crate::ipm::IpmStatus::PrimalInfeasible => Status::Infeasible,
            crate::ipm::IpmStatus::MaxIter => Status::MaxIter,
            crate::ipm::IpmStatus::DualInfeasible | crate::ipm::IpmStatus::NumericalFailure => {
                Status::NumericalFailure
            }
        };
        let x: Vec<f64> = isol
            .x
            .iter()
            .zip(&col_scale)
            .take(n)
            .map(|(v, d)| v * d)
            .collect();
        let max_violation = if status == Status::Optimal || status == Status::MaxIter {
            self.max_violation(&x)
        } else {
            f64::INFINITY
        };
        let status = if status == Status::Optimal && max_violation > tol.feasibility * 10.0 {
            Status::NumericalFailure
        } else {
            status
        };
        Solution {
            objective: self.objective_at(&x),
            status,
            x,
            max_violation,
        }
    }

    /// Maximize lin'x - x'Qx with no constraints: 2Q x = lin.
    fn solve_unconstrained_quad(&self) -> Solution {
        let n = self.n_vars;
        let mut qm: DMatrix<f64> = DMatrix::zeros(n, n);
        for &(i, j, c) in &self.obj_quad {
            if i == j {
                qm[(i, i)] += c;
            } else {
                qm[(i, j)] += 0.5 * c;
                qm[(j, i)] += 0.5 * c;
            }
        }
        let mut lin = DVector::zeros(n);
        for &(i, c) in &self.obj_linear {
            lin[i] += c;
        }
        let x = (qm * 2.0).lu().solve(&lin);
        match x {
            Some(x) => {
                let xv: Vec<f64> = x.iter().copied().collect();
                Solution {
                    objective: self.objective_at(&xv),
                    status: Status::Optimal,
                    x: xv,
                    max_violation: 0.0,
                }
            }
            None => Solution {
                status: Status::NumericalFailure,
                x: vec![0.0; n],
                objective: f64::NEG_INFINITY,
                max_violation: f64::INFINITY,
            },
        }
    }

    fn objective_scale(&self) -> f64 {
        let mx = self
            .obj_linear
            .iter()
            .map(|&(_, c)| c.abs())
            .chain(self.obj_quad.iter().map(|&(_, _, c)| c.abs()))
            .fold(0.0f64, f64::max);
        if mx > 0.0 {
            1.0 / mx
        } else {
            1.0
        }
    }

    /// Solve with the sparse backend (Clarabel).
    pub fn solve_clarabel(&self, tol: &Tolerances) -> Solution {
        let n = self.n_vars;

        // Objective scaling keeps the backend well conditioned when the
        // physical units are far from O(1).
        let obj_scale = self.objective_scale();

        let mut q = vec![0.0; n];
        for &(i, c) in &self.obj_linear {
            q[i] -= c * obj_scale;
        }
        let mut p_triplets: Vec<(usize, usize, f64)> = Vec::new();
        for &(i, j, c) in &self.obj_quad {
            // minimize (1/2) x' P x with P_ij = c (i<j), P_ii = 2c.
            let v = if i == j { 2.0 * c } else { c };
            p_triplets.push((i, j, v * obj_scale));
        }
        let p = csc_from_triplets(n, n, &p_triplets);

        // Constraint rows: s = b - A x, one scaled row group per block.
        let mut a_triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut block_scales = Vec::with_capacity(self.blocks.len());
        let mut row = 0usize;

        let push_rows = |rows: &[LinExpr],
                             a_triplets: &mut Vec<(usize, usize, f64)>,
                             b: &mut Vec<f64>,
                             row: &mut usize|
         -> f64 {
            let mx = rows.iter().map(LinExpr::max_abs).fold(0.0f64, f64::max);
            let scale = if mx > 0.0 { 1.0 / mx } else { 1.0 };
            for e in rows {
                b.push(e.constant * scale);
                for &(i, c) in &e.terms {
                    a_triplets.push((*row, i, -c * scale));
                }
                *row += 1;
            }
            scale
        };

        for block in &self.blocks {
            let scale = match block {
                ConeBlock::Zero(rows) => {
                    cones.push(SupportedConeT::ZeroConeT(rows.len()));
                    push_rows(rows, &mut a_triplets, &mut b, &mut row)
                }
                ConeBlock::Nonneg(rows) => {
                    cones.push(SupportedConeT::NonnegativeConeT(rows.len()));
                    push_rows(rows, &mut a_triplets, &mut b, &mut row)
                }
                ConeBlock::Soc(rows) => {
                    cones.push(SupportedConeT::SecondOrderConeT(rows.len()));
                    push_rows(rows, &mut a_triplets, &mut b, &mut row)
                }
                ConeBlock::Psd(sym) => {
                    cones.push(SupportedConeT::PSDTriangleConeT(sym.dim()));
                    let rows = sym.svec_exprs();
                    push_rows(&rows, &mut a_triplets, &mut b, &mut row)
                }
            };
            block_scales.push(scale);
        }

        let a = csc_from_triplets(row, n, &a_triplets);
        let settings = DefaultSettings {
            verbose: std::env::var("CONIC_VERBOSE").is_ok(),
            max_iter: tol.max_iter,
            tol_feas: tol.feasibility * 1e-1,
            tol_gap_rel: tol.gap * 1e-1,
            tol_gap_abs: tol.gap * 1e-1,
            ..DefaultSettings::default()
        };

        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(_) => {
                return Solution {
                    status: Status::NumericalFailure,
                    x: vec![0.0; n],
                    objective: f64::NEG_INFINITY,
                    max_violation: f64::INFINITY,
                }
            }
        };
        if std::env::var("CONIC_TIMING").is_ok() {
            let mut desc = String::new();
            for c in &cones {
                use std::fmt::Write as _;
                match c {
                    SupportedConeT::ZeroConeT(k) => write!(desc, " z{k}").ok(),
                    SupportedConeT::NonnegativeConeT(k) => write!(desc, " n{k}").ok(),
                    SupportedConeT::SecondOrderConeT(k) => write!(desc, " q{k}").ok(),
                    SupportedConeT::PSDTriangleConeT(k) => write!(desc, " s{k}").ok(),
                    _ => None,
                };
            }
            let t = std::time::Instant::now();
            solver.solve();
            eprintln!(
                "conic: n={} rows={} t={:.2}s cones:{}",
                n,
                row,
                t.elapsed().as_secs_f64(),
                desc
            );
        } else {
            solver.solve();
        }

        let status = match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Status::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Status::Infeasible
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => Status::MaxIter,
            _ => Status::NumericalFailure,
        };

        let x = solver.solution.x.clone();
        let max_violation = if status == Status::Optimal || status == Status::MaxIter {
            self.max_violation(&x)
        } else {
            f64::INFINITY
        };
        let status = if status == Status::Optimal && max_violation > tol.feasibility * 10.0 {
            Status::NumericalFailure
        } else {
            status
        };

        Solution {
            objective: self.objective_at(&x),
            status,
            x,
            max_violation,
        }
    }

    /// Worst violation across blocks, each relative to the block's own scale.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for block in &self.blocks {
            let v = match block {
                ConeBlock::Zero(rows) => rel_violation(rows, x, |s| s.iter().fold(0.0, |a, &v| a.max(v.abs()))),
                ConeBlock::Nonneg(rows) => rel_violation(rows, x, |s| s.iter().fold(0.0, |a, &v| a.max(-v))),
                ConeBlock::Soc(rows) => rel_violation(rows, x, |s| {
                    let norm = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    (norm - s[0]).max(0.0)
                }),
                ConeBlock::Psd(sym) => {
                    let rows = sym.svec_exprs();
                    let d = sym.dim();
                    rel_violation(&rows, x, |s| {
                        let m = mat_from_svec(d, s);
                        let eig = m.symmetric_eigenvalues();
                        (-eig.iter().fold(f64::INFINITY, |a, &v| a.min(v))).max(0.0)
                    })
                }
            };
            worst = worst.max(v);
        }
        worst
    }
}

fn rel_violation(rows: &[LinExpr], x: &[f64], measure: impl Fn(&[f64]) -> f64) -> f64 {
    let mx = rows.iter().map(LinExpr::max_abs).fold(0.0f64, f64::max);
    let scale = if mx > 0.0 { 1.0 / mx } else { 1.0 };
    let s: Vec<f64> = rows.iter().map(|e| e.eval(x) * scale).collect();
    measure(&s)
}

fn mat_from_svec(d: usize, s: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let inv_sq2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut idx = 0;
    for j in 0..d {
        for i in 0..=j {
            let v = if i == j { s[idx] } else { s[idx] * inv_sq2 };
            m[(i, j)] = v;
            m[(j, i)] = v;
            idx += 1;
        }
    }
    m
}

fn csc_from_triplets(m: usize, n: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
    entries.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    // merge duplicates
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    for (r, c, v) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    let mut colptr = vec![0usize; n + 1];
    for &(_, c, _) in &merged {
        colptr[c + 1] += 1;
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    let rowval: Vec<usize> = merged.iter().map(|&(r, _, _)| r).collect();
    let nzval: Vec<f64> = merged.iter().map(|&(_, _, v)| v).collect();
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

use conic::{HermitianAffine, LinExpr, Program, SymmetricAffine, Status, Tolerances};
use nalgebra::DMatrix;
use num_complex::Complex64;

fn solve(p: &Program) -> conic::Solution {
    p.solve(&Tolerances::default())
}

#[test]
fn psd_toy_max_offdiag() {
    // maximize t s.t. [[1, t],[t, 1]] >= 0  ->  t* = 1
    let mut p = Program::new();
    let t = p.add_var();
    p.maximize_term(t, 1.0);
    let mut lmi = SymmetricAffine::new(2);
    lmi.entry_mut(0, 0).add_constant(1.0);
    lmi.entry_mut(1, 1).add_constant(1.0);
    lmi.entry_mut(0, 1).add_term(t, 1.0);
    p.psd(lmi);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[t] - 1.0).abs() < 1e-6, "t = {}", sol.x[t]);
}

#[test]
fn psd_svec_ordering_is_upper_column_major() {
    // maximize a s.t. [[1,0,a],[0,4,0],[a,0,9]] >= 0 -> a* = 3.
    // Fails if the (0,2) entry were mapped to any other triangle slot.
    let mut p = Program::new();
    let a = p.add_var();
    p.maximize_term(a, 1.0);
    let mut lmi = SymmetricAffine::new(3);
    lmi.entry_mut(0, 0).add_constant(1.0);
    lmi.entry_mut(1, 1).add_constant(4.0);
    lmi.entry_mut(2, 2).add_constant(9.0);
    lmi.entry_mut(0, 2).add_term(a, 1.0);
    p.psd(lmi);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[a] - 3.0).abs() < 1e-5, "a = {}", sol.x[a]);
}

#[test]
fn soc_cauchy_schwarz() {
    // maximize c.x s.t. ||x|| <= 1 -> value ||c||
    let c = [3.0, -4.0, 12.0];
    let mut p = Program::new();
    let xs = p.add_vars(3);
    let x0 = xs.start;
    for (k, ck) in c.iter().enumerate() {
        p.maximize_term(x0 + k, *ck);
    }
    let mut cone = vec![LinExpr::constant(1.0)];
    for k in 0..3 {
        cone.push(LinExpr::var(x0 + k));
    }
    p.soc(cone);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Optimal);
    let norm_c = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((sol.objective - norm_c).abs() < 1e-6 * norm_c);
}

#[test]
fn infeasible_toy() {
    // x >= 1 and x <= 0
    let mut p = Program::new();
    let x = p.add_var();
    let mut ge1 = LinExpr::var(x);
    ge1.add_constant(-1.0);
    p.nonneg(ge1);
    let le0 = LinExpr::term(x, -1.0);
    p.nonneg(le0);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Infeasible);
}

#[test]
fn quadratic_penalty_projection() {
    // maximize -(x-2)^2 - (y+1)^2 (expanded) with x,y free -> (2,-1)
    let mut p = Program::new();
    let x = p.add_var();
    let y = p.add_var();
    p.maximize_term(x, 4.0);
    p.maximize_term(y, -2.0);
    p.quad_penalty(x, x, 1.0);
    p.quad_penalty(y, y, 1.0);
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[x] - 2.0).abs() < 1e-6);
    assert!((sol.x[y] + 1.0).abs() < 1e-6);
    assert!((sol.objective - 5.0).abs() < 1e-6); // 4*2 - 2*(-1) - 4 - 1
}

#[test]
fn complex_lmi_lift_matches_direct_eigen() {
    // maximize t s.t. H0 + t*M >= 0 with complex Hermitian H0, M.
    // Oracle: bisection on min-eig of the evaluated complex matrix.
    let h0 = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(2.0, 0.0),
            Complex64::new(0.3, -0.4),
            Complex64::new(0.3, 0.4),
            Complex64::new(1.5, 0.0),
        ],
    );
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.2, 0.7),
            Complex64::new(0.2, -0.7),
            Complex64::new(-0.5, 0.0),
        ],
    );
    let mut p = Program::new();
    let t = p.add_var();
    p.maximize_term(t, 1.0);
    let mut lmi = HermitianAffine::new(2);
    lmi.add_const(&h0);
    lmi.add_term(t, m.clone());
    p.psd(lmi.to_symmetric());
    let sol = solve(&p);
    assert_eq!(sol.status, Status::Optimal);

    let min_eig = |t: f64| -> f64 {
        let h = &h0 + m.scale(t);
        // realify and use the symmetric eigensolver
        let n = 2;
        let mut s = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = h[(i, j)].re;
                s[(n + i, n + j)] = h[(i, j)].re;
                s[(i, n + j)] = -h[(i, j)].im;
                s[(n + i, j)] = h[(i, j)].im;
            }
        }
        s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if min_eig(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!(
        (sol.x[t] - lo).abs() < 1e-5,
        "solver t = {}, bisection t = {}",
        sol.x[t],
        lo
    );
}

//! Dense homogeneous self-dual interior-point solver.
//!
//! Our programs have few variables (tens) but several moderate PSD
//! blocks, so the Newton systems are solved by forming the n-by-n Schur
//! complement over the variables instead of factoring one large sparse
//! KKT matrix. Nesterov-Todd scaling, Mehrotra predictor-corrector,
//! infeasibility certificates from the embedding.
//!
//! Problem form: minimize q'x subject to s = b - A x, s in K, plus
//! optional equality rows A0 x = b0. K is a product of nonnegative,
//! second-order, and PSD-triangle (svec) cones.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Nonneg(usize),
    Soc(usize),
    /// Real symmetric d x d block in scaled svec layout (upper triangle
    /// column-major, off-diagonals multiplied by sqrt(2)).
    Psd(usize),
}

impl Cone {
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Nonneg(k) => k,
            Cone::Soc(k) => k,
            Cone::Psd(d) => d * (d + 1) / 2,
        }
    }

    fn degree(&self) -> usize {
        match *self {
            Cone::Nonneg(k) => k,
            Cone::Soc(_) => 1,
            Cone::Psd(d) => d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    /// Objective q'x of the minimization.
    pub objective: f64,
}

pub struct IpmSettings {
    pub max_iter: usize,
    pub tol_feas: f64,
    pub tol_gap: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_frac: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            step_frac: 0.99,
        }
    }
}

fn svec_dim(d: usize) -> usize {
    d * (d + 1) / 2
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

fn svec_from_mat(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let sq2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(svec_dim(d));
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                out.push(m[(i, j)]);
            } else {
                out.push(0.5 * (m[(i, j)] + m[(j, i)]) * sq2);
            }
        }
    }
    out
}

/// Nesterov-Todd scaling state for one cone block. The scaling operator
/// W is self-adjoint; lambda = W z = W^{-1} s is the scaled point.
enum Scaling {
    Nonneg {
        /// w_i = sqrt(s_i / z_i)
        w: Vec<f64>,
    },
    Soc {
        /// W u = eta * (2 v v' - J) u with J = diag(1, -I).
        v: Vec<f64>,
        eta: f64,
    },
    Psd {
        /// W u = svec(R' mat(u) R); W^{-1} u = svec(Rinv mat(u) Rinv').
        r: DMatrix<f64>,
        rinv: DMatrix<f64>,
    },
}

impl Scaling {
    fn compute(cone: &Cone, s: &[f64], z: &[f64]) -> Option<Scaling> {
        match *cone {
            Cone::Nonneg(k) => {
                let mut w = Vec::with_capacity(k);
                for i in 0..k {
                    if s[i] <= 0.0 || z[i] <= 0.0 {
                        return None;
                    }
                    w.push((s[i] / z[i]).sqrt());
                }
                Some(Scaling::Nonneg { w })
            }
            Cone::Soc(k) => {
                let res_s = soc_residual(s)?;
                let res_z = soc_residual(z)?;
                // normalized points and the NT scaling direction v
                let snorm: Vec<f64> = s.iter().map(|a| a / res_s).collect();
                let znorm: Vec<f64> = z.iter().map(|a| a / res_z).collect();
                let dot: f64 = snorm.iter().zip(&znorm).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                if !gamma.is_finite() || gamma <= 0.0 {
                    return None;
                }
                // v = (1/(2 gamma)) (snorm + J znorm), then normalize to
                // v'Jv = 1 form via the standard hyperbolic construction
                let mut w_bar = vec![0.0; k];
                w_bar[0] = (snorm[0] + znorm[0]) / (2.0 * gamma);
                for i in 1..k {
                    w_bar[i] = (snorm[i] - znorm[i]) / (2.0 * gamma);
                }
                // map w_bar (with w_bar'J w_bar = 1) to the reflector v:
                // W = eta (2 v v' - J), v = (w_bar + e)/sqrt(2(w0+1))
                let denom = (2.0 * (w_bar[0] + 1.0)).sqrt();
                if !denom.is_finite() || denom <= 0.0 {
                    return None;
                }
                let mut v = w_bar.clone();
                v[0] += 1.0;
                for vi in v.iter_mut() {
                    *vi /= denom;
                }
                let eta = (res_s / res_z).sqrt();
                Some(Scaling::Soc { v, eta })
            }
            Cone::Psd(d) => {
                let sm = mat_from_svec(d, s);
                let zm = mat_from_svec(d, z);
                let ls = sm.cholesky()?.l();
                let lz = zm.cholesky()?.l();
                // R' Z R = Sigma^{-1}... construct via SVD of Lz' Ls
                let prod = lz.transpose() * &ls;
                let svd = prod.svd(true, true);
                let u = svd.u.as_ref()?;
                let vt = svd.v_t.as_ref()?;
                let mut sig_isqrt = DVector::zeros(d);
                for i in 0..d {
                    let sv = svd.singular_values[i];
                    if sv <= 0.0 {
                        return None;
                    }
                    sig_isqrt[i] = 1.0 / sv.sqrt();
                }
                // R = Ls V Sigma^{-1/2}; R^{-1} = Sigma^{-1/2} U' Lz'
                let mut r = &ls * vt.transpose();
                for c in 0..d {
                    let sc = sig_isqrt[c];
                    for rr in 0..d {
                        r[(rr, c)] *= sc;
                    }
                }
                let mut rinv = u.transpose() * lz.transpose();
                for rr in 0..d {
                    let sc = sig_isqrt[rr];
                    for c in 0..d {
                        rinv[(rr, c)] *= sc;
                    }
                }
                Some(Scaling::Psd { r, rinv })
            }
        }
    }

    /// lambda = W z (= W^{-T} s at the exact scaling point).
    fn lambda(&self, cone: &Cone, z: &[f64]) -> Vec<f64> {
        self.apply_w(cone, z)
    }

    /// W applied to u. Self-adjoint for nonneg and SOC; for PSD the
    /// operator is svec(R' mat(u) R) whose adjoint is a different map.
    fn apply_w(&self, cone: &Cone, u: &[f64]) -> Vec<f64> {
        match (self, cone) {
            (Scaling::Nonneg { w }, _) => u.iter().zip(w).map(|(a, b)| a * b).collect(),
            (Scaling::Soc { v, eta }, _) => {
                // W = eta (2 v v' - J), J = diag(1, -I)
                let vu: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                let mut out: Vec<f64> = u
                    .iter()
                    .zip(v)
                    .map(|(ui, vi)| 2.0 * vu * vi + ui)
                    .collect();
                out[0] = 2.0 * vu * v[0] - u[0];
                for o in out.iter_mut() {
                    *o *= eta;
                }
                out
            }
            (Scaling::Psd { r, .. }, Cone::Psd(d)) => {
                let m = mat_from_svec(*d, u);
                svec_from_mat(&(r.transpose() * m * r))
            }
            _ => unreachable!("scaling/cone mismatch"),
        }
    }

    /// W^T applied to u.
    fn apply_wt(&self, cone: &Cone, u: &[f64]) -> Vec<f64> {
        match (self, cone) {
            (Scaling::Psd { r, .. }, Cone::Psd(d)) => {
                let m = mat_from_svec(*d, u);
                svec_from_mat(&(r * m * r.transpose()))
            }
            _ => self.apply_w(cone, u),
        }
    }

    /// W^{-T} applied to u.
    fn apply_winvt(&self, cone: &Cone, u: &[f64]) -> Vec<f64> {
        match (self, cone) {
            (Scaling::Nonneg { w }, _) => u.iter().zip(w).map(|(a, b)| a / b).collect(),
            (Scaling::Soc { v, eta }, _) => {
                // W^{-1} = (1/eta) (2 (Jv)(Jv)' - J)
                let mut jv = v.clone();
                for xv in jv.iter_mut().skip(1) {
                    *xv = -*xv;
                }
                let vu: f64 = jv.iter().zip(u).map(|(a, b)| a * b).sum();
                let mut out: Vec<f64> = u
                    .iter()
                    .zip(&jv)
                    .map(|(ui, vi)| 2.0 * vu * vi + ui)
                    .collect();
                out[0] = 2.0 * vu * jv[0] - u[0];
                for o in out.iter_mut() {
                    *o /= eta;
                }
                out
            }
            (Scaling::Psd { rinv, .. }, Cone::Psd(d)) => {
                let m = mat_from_svec(*d, u);
                svec_from_mat(&(rinv * m * rinv.transpose()))
            }
            _ => unreachable!("scaling/cone mismatch"),
        }
    }

    /// W^{-1} applied to u.
    fn apply_winv(&self, cone: &Cone, u: &[f64]) -> Vec<f64> {
        match (self, cone) {
            (Scaling::Psd { rinv, .. }, Cone::Psd(d)) => {
                let m = mat_from_svec(*d, u);
                svec_from_mat(&(rinv.transpose() * m * rinv))
            }
            _ => self.apply_winvt(cone, u),
        }
    }
}

fn soc_residual(u: &[f64]) -> Option<f64> {
    let tail: f64 = u[1..].iter().map(|a| a * a).sum::<f64>();
    let r2 = u[0] * u[0] - tail;
    if u[0] <= 0.0 || r2 <= 0.0 {
        None
    } else {
        Some(r2.sqrt())
    }
}

/// Jordan product u o v within one cone block.
fn jordan_mul(cone: &Cone, u: &[f64], v: &[f64]) -> Vec<f64> {
    match *cone {
        Cone::Nonneg(_) => u.iter().zip(v).map(|(a, b)| a * b).collect(),
        Cone::Soc(k) => {
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            let mut out = vec![0.0; k];
            out[0] = dot;
            for i in 1..k {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
            out
        }
        Cone::Psd(d) => {
            let um = mat_from_svec(d, u);
            let vm = mat_from_svec(d, v);
            let p = (&um * &vm + &vm * &um) * 0.5;
            svec_from_mat(&p)
        }
    }
}

/// Solve lambda o x = d for x.
fn jordan_div(cone: &Cone, lambda: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    match *cone {
        Cone::Nonneg(_) => Some(lambda.iter().zip(d).map(|(l, a)| a / l).collect()),
        Cone::Soc(k) => {
            // arrow(lambda) x = d; arrow = [l0 l1'; l1 l0 I]
            let l0 = lambda[0];
            let l1 = &lambda[1..];
            let nl1: f64 = l1.iter().map(|a| a * a).sum();
            let det = l0 * l0 - nl1;
            if det.abs() < 1e-300 {
                return None;
            }
            let d0 = d[0];
            let d1 = &d[1..];
            let l1d1: f64 = l1.iter().zip(d1).map(|(a, b)| a * b).sum();
            let x0 = (l0 * d0 - l1d1) / det;
            let mut out = vec![0.0; k];
            out[0] = x0;
            for i in 1..k {
                out[i] = (d[i] - x0 * l1[i - 1]) / l0;
            }
            Some(out)
        }
        Cone::Psd(d_dim) => {
            // lambda is diagonal Sigma in the scaled frame only when the
            // scaling is exact; solve the Sylvester-type system in the
            // eigenbasis of mat(lambda) for generality
            let lm = mat_from_svec(d_dim, lambda);
            let eig = lm.clone().symmetric_eigen();
            let q = &eig.eigenvectors;
            let dm = mat_from_svec(d_dim, d);
            let dt = q.transpose() * dm * q;
            let mut xt = DMatrix::zeros(d_dim, d_dim);
            for i in 0..d_dim {
                for j in 0..d_dim {
                    let denom = 0.5 * (eig.eigenvalues[i] + eig.eigenvalues[j]);
                    if denom.abs() < 1e-300 {
                        return None;
                    }
                    xt[(i, j)] = dt[(i, j)] / denom;
                }
            }
            Some(svec_from_mat(&(q * xt * q.transpose())))
        }
    }
}

/// Identity element of the cone.
fn jordan_identity(cone: &Cone) -> Vec<f64> {
    match *cone {
        Cone::Nonneg(k) => vec![1.0; k],
        Cone::Soc(k) => {
            let mut e = vec![0.0; k];
            e[0] = 1.0;
            e
        }
        Cone::Psd(d) => {
            let mut e = vec![0.0; svec_dim(d)];
            let mut idx = 0;
            for j in 0..d {
                for i in 0..=j {
                    if i == j {
                        e[idx] = 1.0;
                    }
                    idx += 1;
                }
            }
            e
        }
    }
}

/// Largest alpha in [0, cap] with u + alpha du staying in the cone.
fn max_step(cone: &Cone, u: &[f64], du: &[f64], cap: f64) -> f64 {
    match *cone {
        Cone::Nonneg(_) => {
            let mut a = cap;
            for (ui, dui) in u.iter().zip(du) {
                if *dui < 0.0 {
                    a = a.min(-ui / dui);
                }
            }
            a
        }
        Cone::Soc(_) => {
            // boundary: (u0+a d0)^2 = ||u1+a d1||^2, smallest positive root
            let f = |a: f64| -> f64 {
                let h = u[0] + a * du[0];
                let t: f64 = u[1..]
                    .iter()
                    .zip(&du[1..])
                    .map(|(ui, di)| (ui + a * di) * (ui + a * di))
                    .sum();
                h * h - t
            };
            let aa = du[0] * du[0] - du[1..].iter().map(|d| d * d).sum::<f64>();
            let bb = 2.0
                * (u[0] * du[0]
                    - u[1..]
                        .iter()
                        .zip(&du[1..])
                        .map(|(ui, di)| ui * di)
                        .sum::<f64>());
            let cc = u[0] * u[0] - u[1..].iter().map(|ui| ui * ui).sum::<f64>();
            let mut best = cap;
            let mut consider = |a: f64| {
                if a > 1e-14 && a < best && u[0] + a * du[0] >= 0.0 {
                    best = a;
                }
            };
            if aa.abs() < 1e-300 {
                if bb.abs() > 1e-300 {
                    consider(-cc / bb);
                }
            } else {
                let disc = bb * bb - 4.0 * aa * cc;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    consider((-bb - sq) / (2.0 * aa));
                    consider((-bb + sq) / (2.0 * aa));
                }
            }
            // head can hit zero first
            if du[0] < 0.0 {
                best = best.min(-u[0] / du[0]);
            }
            let _ = f;
            best
        }
        Cone::Psd(d) => {
            // alpha limited by lambda_min of U^{-1/2} dU U^{-1/2}
            let um = mat_from_svec(d, u);
            let dm = mat_from_svec(d, du);
            match um.cholesky() {
                Some(ch) => {
                    let l = ch.l();
                    let linv = l
                        .clone()
                        .try_inverse()
                        .unwrap_or_else(|| DMatrix::identity(d, d));
                    let w = &linv * dm * linv.transpose();
                    let eigs = w.symmetric_eigenvalues();
                    let lmin = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                    if lmin >= 0.0 {
                        cap
                    } else {
                        cap.min(-1.0 / lmin)
                    }
                }
                None => 0.0,
            }
        }
    }
}

struct ConeVec<'a> {
    cones: &'a [Cone],
}

impl<'a> ConeVec<'a> {
    fn for_each_block<F: FnMut(usize, &Cone, usize)>(&self, mut f: F) {
        let mut off = 0;
        for (bi, c) in self.cones.iter().enumerate() {
            f(bi, c, off);
            off += c.rows();
        }
    }
}

/// One Newton solve against the cached Schur factorization.
struct KktCache {
    /// Scaled constraint matrix W^{-T} A (row blocks per cone).
    wia: DMatrix<f64>,
    /// [S A0'; A0 0] with S = (W^{-T}A)'(W^{-T}A), kept for refinement.
    kkt: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
    p: usize,
}

impl KktCache {
    /// Solve
    ///   A0' uy + A' uz = -bx
    ///   A0 ux          = -by
    ///   A ux + W'W uz  = bz      (sign convention below)
    /// given in the reduced form used by `solve_newton`.
    fn solve(
        &self,
        cones: &[Cone],
        scalings: &[Scaling],
        a: &DMatrix<f64>,
        a0: &DMatrix<f64>,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz_scaled: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        // System:
        //   [S  A0'][ux]   [bx + A' W^{-1} bz_scaled]
        //   [A0  0 ][uy] = [by]
        // uz = W^{-1}(W^{-1}(A ux) - bz_scaled)  (elementwise per block)
        let n = self.n;
        let p = self.p;
        // rhs1 = bx + (W^{-1}A)' bz_scaled
        let mut rhs = DVector::zeros(n + p);
        let top = bx + self.wia.transpose() * bz_scaled;
        for i in 0..n {
            rhs[i] = top[i];
        }
        for i in 0..p {
            rhs[n + i] = by[i];
        }
        let mut sol = self.lu.solve(&rhs)?;
        // iterative refinement; the Schur elimination can lose digits
        // when the scaling spread is large, and the factorization is of
        // a statically regularized matrix
        for _ in 0..2 {
            let resid = &rhs - &self.kkt_exact * &sol;
            match self.lu.solve(&resid) {
                Some(corr) => sol += corr,
                None => break,
            }
        }
        let ux = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
        let uy = DVector::from_iterator(p, (0..p).map(|i| sol[n + i]));
        // uz = W^{-1}( (W^{-T} A) ux - bz_scaled )
        let tmp = &self.wia * &ux - bz_scaled;
        let mut uz = DVector::zeros(a.nrows());
        let cv = ConeVec { cones };
        cv.for_each_block(|bi, c, off| {
            let rows = c.rows();
            let seg: Vec<f64> = (0..rows).map(|i| tmp[off + i]).collect();
            let out = scalings[bi].apply_winv(c, &seg);
            for i in 0..rows {
                uz[off + i] = out[i];
            }
        });
        let _ = a0;
        Some((ux, uy, uz))
    }
}

fn build_kkt(
    cones: &[Cone],
    scalings: &[Scaling],
    a: &DMatrix<f64>,
    a0: &DMatrix<f64>,
) -> Option<KktCache> {
    let n = a.ncols();
    let p = a0.nrows();
    let m = a.nrows();
    let mut wia = DMatrix::zeros(m, n);
    let cv = ConeVec { cones };
    // wia = W^{-T} A so that S = (W^{-T}A)'(W^{-T}A) = A'(W'W)^{-1}A
    for col in 0..n {
        cv.for_each_block(|bi, c, off| {
            let rows = c.rows();
            let seg: Vec<f64> = (0..rows).map(|i| a[(off + i, col)]).collect();
            let out = scalings[bi].apply_winvt(c, &seg);
            for i in 0..rows {
                wia[(off + i, col)] = out[i];
            }
        });
    }
    let s = wia.transpose() * &wia;
    let mut kkt = DMatrix::zeros(n + p, n + p);
    // static regularization: keeps the factorization stable when mu gets
    // small and S becomes numerically singular; refinement in solve()
    // corrects the perturbation
    let reg = 1e-11 * s.diagonal().amax().max(1.0);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = s[(i, j)];
        }
        kkt[(i, i)] += reg;
    }
    for i in 0..p {
        kkt[(n + i, n + i)] = -reg;
    }
    for r in 0..p {
        for c in 0..n {
            kkt[(n + r, c)] = a0[(r, c)];
            kkt[(c, n + r)] = a0[(r, c)];
        }
    }
    let lu = kkt.clone().lu();
    Some(KktCache { wia, kkt, lu, n, p })
}

pub struct IpmProblem<'a> {
    pub q: &'a [f64],
    pub a: &'a DMatrix<f64>,
    pub b: &'a [f64],
    pub cones: &'a [Cone],
    /// Equality rows a0 x = b0.
    pub a0: &'a DMatrix<f64>,
    pub b0: &'a [f64],
}

pub fn solve(prob: &IpmProblem, settings: &IpmSettings) -> IpmSolution {
    let n = prob.q.len();
    let m: usize = prob.cones.iter().map(Cone::rows).sum();
    let p = prob.a0.nrows();
    assert_eq!(prob.a.nrows(), m);
    assert_eq!(prob.a.ncols(), n);
    assert_eq!(prob.b.len(), m);
    assert_eq!(prob.b0.len(), p);

    let q = DVector::from_column_slice(prob.q);
    let b = DVector::from_column_slice(prob.b);
    let b0 = DVector::from_column_slice(prob.b0);
    let cones = prob.cones;
    let cv = ConeVec { cones };

    let degree: usize = cones.iter().map(Cone::degree).sum::<usize>().max(1);

    // embedding state
    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(p);
    let mut s = DVector::zeros(m);
    let mut z = DVector::zeros(m);
    cv.for_each_block(|_, c, off| {
        let e = jordan_identity(c);
        for (i, v) in e.iter().enumerate() {
            s[off + i] = *v;
            z[off + i] = *v;
        }
    });
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let q_norm = q.norm().max(1.0);
    let b_norm = b.norm().max(1.0);

    let fail = |status: IpmStatus, x: &DVector<f64>| IpmSolution {
        status,
        x: x.iter().copied().collect(),
        objective: q.dot(x),
    };

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut stall = 0usize;

    for _iter in 0..settings.max_iter {
        // residuals of the embedding (all should go to zero)
        // rx = A0' y + (-A)' z ... our constraint is s = b - A x, i.e.
        // A x + s = b. Dual feasibility: q tau - A' z + A0' y = 0? Take
        // care with signs: primal min q'x, A x + s = b tau, A0 x = b0 tau.
        // Lagrangian: q'x + z'(A x + s - b tau) + y'(A0 x - b0 tau)
        // => dual residual rx = q tau + A' z + A0' y
        // primal residuals: rz = A x + s - b tau, r0 = A0 x - b0 tau
        // gap residual: rtau = kappa + q'x + b'z + b0'y
        let rx = &q * tau + prob.a.transpose() * &z + prob.a0.transpose() * &y;
        let rz = prob.a * &x + &s - &b * tau;
        let r0 = prob.a0 * &x - &b0 * tau;
        let rtau = kappa + q.dot(&x) + b.dot(&z) + b0.dot(&y);

        let mu = (s.dot(&z) + tau * kappa) / (degree as f64 + 1.0);

        // convergence checks (scaled by tau)
        let pres = (rz.norm().hypot(r0.norm())) / (tau * b_norm.max(1.0));
        let dres = rx.norm() / (tau * q_norm.max(1.0));
        let pobj = q.dot(&x) / tau;
        let dobj = -(b.dot(&z) + b0.dot(&y)) / tau;
        let gap = s.dot(&z) / (tau * tau);
        let relgap = gap / (1.0 + pobj.abs().max(dobj.abs()));

        if std::env::var("CONIC_IPM_DEBUG").is_ok() {
            eprintln!(
                "ipm it={_iter} pres={pres:.2e} dres={dres:.2e} relgap={relgap:.2e} mu={mu:.2e} tau={tau:.2e} kappa={kappa:.2e}"
            );
        }
        // Combined score: 1.0 means every criterion is exactly at its
        // tolerance. Iterates near the numerical floor can see pres creep
        // back up while the gap keeps shrinking, so keep the best iterate
        // and stop once progress stalls.
        let score = (pres / settings.tol_feas)
            .max(dres / settings.tol_feas)
            .max(relgap / settings.tol_gap);
        if score <= 1.0 {
            let xs = &x / tau;
            return IpmSolution {
                objective: q.dot(&xs),
                x: xs.iter().copied().collect(),
                status: IpmStatus::Optimal,
            };
        }
        // infeasibility certificates, checked scale invariantly:
        // primal infeasible iff some z in K*, y with A'z + A0'y = 0 and
        // b'z + b0'y < 0; dual infeasible iff some x, s in K with
        // A x + s = 0, A0 x = 0 and q'x < 0.
        let hz = b.dot(&z) + b0.dot(&y);
        if hz < 0.0 {
            let cert = (prob.a.transpose() * &z + prob.a0.transpose() * &y).norm();
            if cert / (-hz) <= settings.tol_feas * q_norm {
                return fail(IpmStatus::PrimalInfeasible, &x);
            }
        }
        let cx = q.dot(&x);
        if cx < 0.0 {
            let cert = (prob.a * &x + &s).norm().hypot((prob.a0 * &x).norm());
            if cert / (-cx) <= settings.tol_feas * b_norm {
                return fail(IpmStatus::DualInfeasible, &x);
            }
        }
        if tau < 1e-10 * kappa.max(1.0) {
            break;
        }

        if best.as_ref().map(|(bsc, _)| score < *bsc).unwrap_or(true) {
            best = Some((score, &x / tau));
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                break;
            }
        }

        // NT scaling
        let mut scalings = Vec::with_capacity(cones.len());
        let mut lambda = DVector::zeros(m);
        let mut ok = true;
        cv.for_each_block(|_, c, off| {
            if !ok {
                return;
            }
            let rows = c.rows();
            let sb: Vec<f64> = (0..rows).map(|i| s[off + i]).collect();
            let zb: Vec<f64> = (0..rows).map(|i| z[off + i]).collect();
            match Scaling::compute(c, &sb, &zb) {
                Some(sc) => {
                    let lam = sc.lambda(c, &zb);
                    for i in 0..rows {
                        lambda[off + i] = lam[i];
                    }
                    scalings.push(sc);
                }
                None => ok = false,
            }
        });
        if !ok {
            break;
        }

        let kkt = match build_kkt(cones, &scalings, prob.a, prob.a0) {
            Some(k) => k,
            None => break,
        };

        // Newton direction for rhs (dx, dy, dz, dtau, ds, dkappa):
        //   A' dz + A0' dy + q dtau = -rx_w
        //   A dx + ds - b dtau      = -rz_w
        //   A0 dx - b0 dtau         = -r0_w
        //   q'dx + b'dz + b0'dy + dkappa = -rtau_w
        //   lambda o (W dz + W^{-1} ds) = dcomp
        //   tau dkappa + kappa dtau = dkap
        // Eliminate ds = W(jordan_div(lambda, dcomp) - W dz) and dkappa.
        // Reduce to two solves with the cached factorization.
        let solve_newton = |rx_w: &DVector<f64>,
                            rz_w: &DVector<f64>,
                            r0_w: &DVector<f64>,
                            rtau_w: f64,
                            dcomp: &DVector<f64>,
                            dkap: f64|
         -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, f64, DVector<f64>, f64)> {
            // dbz = W^{-1}(rz-part adjusted by the complementarity term):
            // from A dx + ds = b dtau - rz_w and
            // ds = W(lam_div - W dz)  with lam_div = jordan_div(lambda, dcomp)
            // => A dx - W W dz = b dtau - rz_w - W lam_div
            // Scaled: (W^{-1}A) dx - W dz = W^{-1}(b dtau - rz_w) - lam_div
            // Together with A' dz + A0' dy = -rx_w - q dtau:
            // Solve in two pieces: linear in dtau, so compute the
            // response to (rhs) and to the tau column separately.
            let mut lam_div = DVector::zeros(m);
            let cv2 = ConeVec { cones };
            let mut ok2 = true;
            cv2.for_each_block(|bi, c, off| {
                if !ok2 {
                    return;
                }
                let rows = c.rows();
                let lamb: Vec<f64> = (0..rows).map(|i| lambda[off + i]).collect();
                let db: Vec<f64> = (0..rows).map(|i| dcomp[off + i]).collect();
                match jordan_div(c, &lamb, &db) {
                    Some(v) => {
                        for i in 0..rows {
                            lam_div[off + i] = v[i];
                        }
                    }
                    None => ok2 = false,
                }
                let _ = bi;
            });
            if !ok2 {
                return None;
            }
            // scaled rhs pieces: bz_scaled(d) for rhs and for tau column
            let apply_winvt_vec = |v: &DVector<f64>| -> DVector<f64> {
                let mut out = DVector::zeros(m);
                cv2.for_each_block(|bi, c, off| {
                    let rows = c.rows();
                    let seg: Vec<f64> = (0..rows).map(|i| v[off + i]).collect();
                    let o = scalings[bi].apply_winvt(c, &seg);
                    for i in 0..rows {
                        out[off + i] = o[i];
                    }
                });
                out
            };
            // Solve 1: response to the actual rhs with dtau = 0:
            //   [S A0'][dx] = [-rx_w + A'Winv(bz1)] ...
            // our KktCache.solve expects: A0'uy + A'uz = -bx is encoded as
            // rhs top = bx + (WiA)'bz_scaled with sign conventions below.
            let bz1 = apply_winvt_vec(&(-rz_w)) - &lam_div; // = W^{-T}(-rz_w) - lam_div
            let bx1 = -rx_w;
            let by1 = -r0_w;
            let (dx1, dy1, dz1) = kkt.solve(cones, &scalings, prob.a, prob.a0, &bx1, &by1, &bz1)?;
            // Solve 2: response to the tau column:
            //   A' dz + A0' dy = -q ; A dx - WW dz = b ; A0 dx = b0
            let bz2 = apply_winvt_vec(&b);
            let bx2 = -q.clone();
            let by2 = b0.clone();
            let (dx2, dy2, dz2) = kkt.solve(cones, &scalings, prob.a, prob.a0, &bx2, &by2, &bz2)?;
            // dtau from the last two equations:
            // q'dx + b'dz + b0'dy + dkappa = -rtau_w
            // dkappa = (dkap - kappa dtau)/tau
            // den = q'dx2 + b'dz2 + b0'dy2 - kappa/tau = -||W dz2||^2 - kappa/tau < 0
            let num = -rtau_w - (dkap / tau) - (q.dot(&dx1) + b.dot(&dz1) + b0.dot(&dy1));
            // Computed in the explicitly negative form; the algebraic
            // identity q'dx2 + b'dz2 + b0'dy2 = -||W dz2||^2 loses its
            // sign under an inexact KKT solve and then dtau blows up.
            let mut wdz2_sq = 0.0f64;
            cv2.for_each_block(|bi, c, off| {
                let rows = c.rows();
                let dzb: Vec<f64> = (0..rows).map(|i| dz2[off + i]).collect();
                let wdz = scalings[bi].apply_w(c, &dzb);
                wdz2_sq += wdz.iter().map(|v| v * v).sum::<f64>();
            });
            let den = -wdz2_sq - (kappa / tau);
            if den.abs() < 1e-300 {
                return None;
            }
            let dtau = num / den;
            let dx = &dx1 + &dx2 * dtau;
            let dy = &dy1 + &dy2 * dtau;
            let dz = &dz1 + &dz2 * dtau;
            // ds = W^T(lam_div - W dz)
            let mut ds = DVector::zeros(m);
            cv2.for_each_block(|bi, c, off| {
                let rows = c.rows();
                let dzb: Vec<f64> = (0..rows).map(|i| dz[off + i]).collect();
                let wdz = scalings[bi].apply_w(c, &dzb);
                let seg: Vec<f64> = (0..rows).map(|i| lam_div[off + i] - wdz[i]).collect();
                let o = scalings[bi].apply_wt(c, &seg);
                for i in 0..rows {
                    ds[off + i] = o[i];
                }
            });
            let dkappa = (dkap - kappa * dtau) / tau;
            Some((dx, dy, dz, dtau, ds, dkappa))
        };

        // affine (predictor) direction
        let lam_sq = {
            let mut v = DVector::zeros(m);
            cv.for_each_block(|_, c, off| {
                let rows = c.rows();
                let lb: Vec<f64> = (0..rows).map(|i| lambda[off + i]).collect();
                let o = jordan_mul(c, &lb, &lb);
                for i in 0..rows {
                    v[off + i] = o[i];
                }
            });
            v
        };
        let aff = solve_newton(&rx, &rz, &r0, rtau, &(-&lam_sq), -tau * kappa);
        let (_adx, _ady, adz, adtau, ads, adkappa) = match aff {
            Some(v) => v,
            None => break,
        };

        // affine step length in the scaled frame
        let mut alpha_aff = 1.0f64;
        cv.for_each_block(|bi, c, off| {
            let rows = c.rows();
            let lamb: Vec<f64> = (0..rows).map(|i| lambda[off + i]).collect();
            let dsb: Vec<f64> = (0..rows).map(|i| ads[off + i]).collect();
            let dzb: Vec<f64> = (0..rows).map(|i| adz[off + i]).collect();
            let ds_sc = scalings[bi].apply_winvt(c, &dsb);
            let dz_sc = scalings[bi].apply_w(c, &dzb);
            alpha_aff = alpha_aff.min(max_step(c, &lamb, &ds_sc, 1.0));
            alpha_aff = alpha_aff.min(max_step(c, &lamb, &dz_sc, 1.0));
        });
        if adtau < 0.0 {
            alpha_aff = alpha_aff.min(-tau / adtau);
        }
        if adkappa < 0.0 {
            alpha_aff = alpha_aff.min(-kappa / adkappa);
        }
        let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

        // combined direction with Mehrotra correction
        let mut dcomp = DVector::zeros(m);
        cv.for_each_block(|bi, c, off| {
            let rows = c.rows();
            let dsb: Vec<f64> = (0..rows).map(|i| ads[off + i]).collect();
            let dzb: Vec<f64> = (0..rows).map(|i| adz[off + i]).collect();
            let ds_sc = scalings[bi].apply_winvt(c, &dsb);
            let dz_sc = scalings[bi].apply_w(c, &dzb);
            let corr = jordan_mul(c, &ds_sc, &dz_sc);
            let e = jordan_identity(c);
            for i in 0..rows {
                dcomp[off + i] = -lam_sq[off + i] - corr[i] + sigma * mu * e[i];
            }
        });
        let dkap = -tau * kappa - adtau * adkappa + sigma * mu;
        let fac = 1.0 - sigma;
        let comb = solve_newton(
            &(&rx * fac),
            &(&rz * fac),
            &(&r0 * fac),
            rtau * fac,
            &dcomp,
            dkap,
        );
        let (dx, dy, dz, dtau, ds, dkappa) = match comb {
            Some(v) => v,
            None => break,
        };

        let mut alpha = 1.0f64 / settings.step_frac;
        cv.for_each_block(|bi, c, off| {
            let rows = c.rows();
            let lamb: Vec<f64> = (0..rows).map(|i| lambda[off + i]).collect();
            let dsb: Vec<f64> = (0..rows).map(|i| ds[off + i]).collect();
            let dzb: Vec<f64> = (0..rows).map(|i| dz[off + i]).collect();
            let ds_sc = scalings[bi].apply_winvt(c, &dsb);
            let dz_sc = scalings[bi].apply_w(c, &dzb);
            alpha = alpha.min(max_step(c, &lamb, &ds_sc, alpha));
            alpha = alpha.min(max_step(c, &lamb, &dz_sc, alpha));
        });
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-kappa / dkappa);
        }
        alpha *= settings.step_frac;
        alpha = alpha.min(1.0);
        if !alpha.is_finite() || alpha <= 1e-14 {
            break;
        }

        x += &dx * alpha;
        y += &dy * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if tau <= 0.0 || kappa < 0.0 {
            break;
        }
    }

    // Accept the best iterate when it came close to tolerance. The
    // factor matches the constraint-violation gate applied by the
    // caller, which independently rejects infeasible answers.
    match best {
        Some((sc, xb)) if sc <= 100.0 => IpmSolution {
            objective: q.dot(&xb),
            x: xb.iter().copied().collect(),
            status: IpmStatus::Optimal,
        },
        Some((_, xb)) => IpmSolution {
            objective: q.dot(&xb),
            x: xb.iter().copied().collect(),
            status: IpmStatus::MaxIter,
        },
        None => IpmSolution {
            status: IpmStatus::NumericalFailure,
            x: vec![0.0; n],
            objective: f64::INFINITY,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_scaling(cone: Cone, s: Vec<f64>, z: Vec<f64>) {
        let sc = Scaling::compute(&cone, &s, &z).expect("interior points");
        let wz = sc.apply_w(&cone, &z);
        let wis = sc.apply_winvt(&cone, &s);
        for (a, b) in wz.iter().zip(&wis) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "W z != W^-T s: {a} vs {b}");
        }
        // operator inverses: W^T (W^{-T} s) = s and W^{-1}(W z) = z
        let rt = sc.apply_wt(&cone, &sc.apply_winvt(&cone, &s));
        for (a, b) in rt.iter().zip(&s) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "roundtrip: {a} vs {b}");
        }
        let rt2 = sc.apply_winv(&cone, &sc.apply_w(&cone, &z));
        for (a, b) in rt2.iter().zip(&z) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "roundtrip2: {a} vs {b}");
        }
        // adjoint identity: u'(W v) == (W^T u)'v
        let k = s.len();
        let u: Vec<f64> = (0..k).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let v: Vec<f64> = (0..k).map(|i| ((i * 5 + 1) % 13) as f64 - 6.0).collect();
        let wv = sc.apply_w(&cone, &v);
        let wtu = sc.apply_wt(&cone, &u);
        let lhs: f64 = u.iter().zip(&wv).map(|(a, b)| a * b).sum();
        let rhs: f64 = wtu.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()), "adjoint mismatch");
    }

    #[test]
    fn nt_scaling_identities() {
        check_scaling(Cone::Nonneg(3), vec![0.5, 2.0, 1.5], vec![1.0, 0.25, 3.0]);
        check_scaling(
            Cone::Soc(4),
            vec![2.0, 0.3, -0.5, 1.0],
            vec![1.5, -0.2, 0.8, 0.1],
        );
        // PSD 3x3: diagonally dominant interior points in svec form
        let s = vec![2.0, 0.3, 1.8, -0.2, 0.4, 2.5];
        let z = vec![1.2, -0.1, 2.2, 0.3, -0.3, 1.7];
        check_scaling(Cone::Psd(3), s, z);
    }

    fn solve_simple(
        q: &[f64],
        a_rows: &[(Vec<f64>, f64)],
        cones: &[Cone],
    ) -> IpmSolution {
        let n = q.len();
        let m = a_rows.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = vec![0.0; m];
        for (r, (row, rhs)) in a_rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                a[(r, c)] = *v;
            }
            b[r] = *rhs;
        }
        let a0 = DMatrix::zeros(0, n);
        let prob = IpmProblem {
            q,
            a: &a,
            b: &b,
            cones,
            a0: &a0,
            b0: &[],
        };
        solve(&prob, &IpmSettings::default())
    }

    #[test]
    fn lp_box() {
        // min -x1 - 2 x2, 0 <= x <= 1 elementwise (s = b - A x >= 0)
        let sol = solve_simple(
            &[-1.0, -2.0],
            &[
                (vec![1.0, 0.0], 1.0),
                (vec![0.0, 1.0], 1.0),
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, -1.0], 0.0),
            ],
            &[Cone::Nonneg(4)],
        );
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!((sol.objective + 3.0).abs() < 1e-6, "{}", sol.objective);
    }

    #[test]
    fn soc_projection() {
        // min -x  s.t. ||(x, y)|| <= 2: rows [2; x; y] in SOC
        let sol = solve_simple(
            &[-1.0, 0.0],
            &[
                (vec![0.0, 0.0], 2.0),
                (vec![-1.0, 0.0], 0.0),
                (vec![0.0, -1.0], 0.0),
            ],
            &[Cone::Soc(3)],
        );
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn sdp_smallest_eig() {
        // max t s.t. M - t I >= 0 with M = diag(1, 3) => t = 1
        // svec rows of [1-t, 0; 0, 3-t]; minimize -t
        let sol = solve_simple(
            &[-1.0],
            &[
                (vec![1.0], 1.0),
                (vec![0.0], 0.0),
                (vec![1.0], 3.0),
            ],
            &[Cone::Psd(2)],
        );
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "{}", sol.x[0]);
    }

    #[test]
    fn infeasible_lp() {
        // x >= 1 and x <= 0
        let sol = solve_simple(
            &[1.0],
            &[(vec![-1.0], -1.0), (vec![1.0], 0.0)],
            &[Cone::Nonneg(2)],
        );
        assert_eq!(sol.status, IpmStatus::PrimalInfeasible);
    }

    #[test]
    fn equality_simplex() {
        // min x1 s.t. x1 + x2 = 1, x >= 0 => x1 = 0
        let n = 2;
        let mut a = DMatrix::zeros(2, n);
        a[(0, 0)] = -1.0;
        a[(1, 1)] = -1.0;
        let b = vec![0.0, 0.0];
        let mut a0 = DMatrix::zeros(1, n);
        a0[(0, 0)] = 1.0;
        a0[(0, 1)] = 1.0;
        let prob = IpmProblem {
            q: &[1.0, 0.0],
            a: &a,
            b: &b,
            cones: &[Cone::Nonneg(2)],
            a0: &a0,
            b0: &[1.0],
        };
        let sol = solve(&prob, &IpmSettings::default());
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!(sol.x[0].abs() < 1e-6);
        assert!((sol.x[1] - 1.0).abs() < 1e-6);
    }
}

//! The five coordinate blocks of the optimizer: closed-form receive
//! filter bank update, robust beamforming SDP, RIS penalty loop,
//! transmit/receive position updates, and the hull-weight QP.

use conic::{HermitianAffine, LinExpr, Program, Status, Tolerances};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::calculus::{ObjectiveCache, QosCache};
use crate::channel::{sensing_steering, PositionSet};
use crate::metrics::{Beamformer, RadarScene, RisPhases};
use crate::uncertainty::{AngleGrid, HullWeights};
use crate::{Error, Result};

/// Weighted steering combination S = Σ_p μ_p A_p.
pub fn hull_steering(
    positions: &PositionSet,
    grid: &AngleGrid,
    mu: &HullWeights,
    wavelength: f64,
) -> DMatrix<Complex64> {
    let n = positions.rx.len();
    let mut s: DMatrix<Complex64> = DMatrix::zeros(n, positions.tx.len());
    for (p, &(e, a)) in grid.samples.iter().enumerate() {
        if mu.mu[p] == 0.0 {
            continue;
        }
        s += sensing_steering(positions, e, a, wavelength).a.scale(mu.mu[p]);
    }
    s
}

/// Closed-form update Λ* = (Ξ+σ_r²I)^{-1} S W. After this update the
/// transformed objective coincides with the hull-mode radar bound.
pub fn update_lambda(
    w: &DMatrix<Complex64>,
    positions: &PositionSet,
    mu: &HullWeights,
    grid: &AngleGrid,
    scene: &RadarScene,
) -> DMatrix<Complex64> {
    let s = hull_steering(positions, grid, mu, scene.wavelength);
    let b = scene.clutter_noise_cov(w, positions);
    let chol = b.cholesky().expect("clutter+noise covariance is PD");
    chol.solve(&(s * w))
}

/// Transformed radar objective
/// Γ̄ = ζ₀²(2 Re tr(W^H S^H Λ) − tr(Λ^H (Ξ+σ_r²I) Λ)).
pub fn gamma_bar(
    w: &DMatrix<Complex64>,
    lambda: &DMatrix<Complex64>,
    positions: &PositionSet,
    mu: &HullWeights,
    grid: &AngleGrid,
    scene: &RadarScene,
) -> f64 {
    let s = hull_steering(positions, grid, mu, scene.wavelength);
    let b = scene.clutter_noise_cov(w, positions);
    let cross = (s * w).adjoint() * lambda;
    let mut tr_cross = 0.0;
    for i in 0..cross.nrows().min(cross.ncols()) {
        tr_cross += cross[(i, i)].re;
    }
    let bl = &b * lambda;
    let mut tr_quad = 0.0;
    for c in 0..lambda.ncols() {
        tr_quad += lambda.column(c).dotc(&bl.column(c).into_owned()).re;
    }
    scene.gain_target * (2.0 * tr_cross - tr_quad)
}

/// Affine complex vector over the real variables of a conic program.
#[derive(Clone, Debug)]
struct AffineCVec {
    constant: DVector<Complex64>,
    terms: Vec<(usize, DVector<Complex64>)>,
}

impl AffineCVec {
    /// Lemma-1 style linearized quadratic kernel
    /// X = m m_l^H + m_l m^H − m_l m_l^H, affine in the program variables.
    fn lemma1_kernel(&self, m_l: &DVector<Complex64>) -> HermitianAffine {
        let dim = m_l.len();
        let mut x = HermitianAffine::new(dim);
        let base = &self.constant * m_l.adjoint();
        let const_mat = &base + base.adjoint() - m_l * m_l.adjoint();
        x.add_const(&const_mat);
        for (var, delta) in &self.terms {
            let t = delta * m_l.adjoint();
            x.add_term(*var, &t + t.adjoint());
        }
        x
    }
}

/// Root-mean-square magnitude of the matrix entries, with a safe
/// fallback for the all-zero case.
pub(crate) fn rms_entry(m: &DMatrix<Complex64>) -> f64 {
    let n = (m.nrows() * m.ncols()) as f64;
    let rms = m.norm() / n.sqrt();
    if rms > 0.0 {
        rms
    } else {
        1.0
    }
}

fn solve_with_retry(p: &Program, tol: &Tolerances) -> conic::Solution {
    let sol = p.solve(tol);
    if sol.status == Status::NumericalFailure || sol.status == Status::MaxIter {
        let relaxed = Tolerances {
            feasibility: (tol.feasibility * 10.0).max(1e-6),
            gap: (tol.gap * 10.0).max(1e-6),
            max_iter: tol.max_iter,
        };
        return p.solve(&relaxed);
    }
    sol
}

/// Per-user channel-side data shared by the beamforming and RIS blocks.
pub struct UserChannels<'a> {
    pub h_hat: &'a [DVector<Complex64>],
    pub eps: &'a [f64],
    /// QoS thresholds with the optimizer's safety margin already applied.
    pub gamma: &'a [f64],
    pub noise: f64,
}

fn read_w(x: &[f64], base: usize, n: usize, k: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, k, |r, c| {
        let idx = base + 2 * (c * n + r);
        Complex64::new(x[idx], x[idx + 1])
    })
}

/// Robust QoS constraint blocks for one user at fixed effective channels.
/// `m_k` is the affine signal vector V H w_k (or its RIS-step analog) and
/// `interferers` are the affine vectors of the other users.
#[allow(clippy::too_many_arguments)]
fn add_user_qos_blocks(
    p: &mut Program,
    m_k: &AffineCVec,
    m_k_expansion: &DVector<Complex64>,
    interferers: &[AffineCVec],
    h_hat: &DVector<Complex64>,
    eps: f64,
    noise: f64,
    // the robust signal lower bound reads sig_coeff·sig_var in the
    // S-procedure corner; the interference upper bound constrains
    // intf_var. The beamforming step passes the same variable for both
    // with sig_coeff = γ; the RIS step keeps them separate.
    sig_var: usize,
    sig_coeff: f64,
    intf_var: usize,
    // optional feasibility slack with its coefficient, subtracted from
    // the signal side; the coefficient puts the slack in units that are
    // comparable across users despite per-user scaling
    slack: Option<(usize, f64)>,
) {
    let mdim = h_hat.len();
    let x_k = m_k.lemma1_kernel(m_k_expansion);
    if eps > 0.0 {
        let varpi = p.add_var();
        p.nonneg(LinExpr::var(varpi));
        let mut lmi = x_k.bordered(h_hat);
        let mut eye = DMatrix::zeros(mdim + 1, mdim + 1);
        for i in 0..mdim {
            eye[(i, i)] = Complex64::new(1.0, 0.0);
        }
        lmi.add_term(varpi, eye);
        lmi.add_term_entry(varpi, mdim, mdim, Complex64::new(-eps * eps, 0.0));
        lmi.add_term_entry(sig_var, mdim, mdim, Complex64::new(-sig_coeff, 0.0));
        if let Some((sv, coef)) = slack {
            lmi.add_term_entry(sv, mdim, mdim, Complex64::new(-coef, 0.0));
        }
        p.psd(lmi.to_symmetric());
    } else {
        // scalar collapse: ĥ^H X ĥ ≥ sig_coeff·sig_var
        let mut expr = LinExpr::zero();
        let quad = |mat: &DMatrix<Complex64>| (h_hat.adjoint() * mat * h_hat)[(0, 0)].re;
        let (constant, terms) = x_k.parts();
        expr.add_constant(quad(constant));
        for (var, mat) in terms {
            expr.add_term(*var, quad(mat));
        }
        expr.add_term(sig_var, -sig_coeff);
        if let Some((sv, coef)) = slack {
            expr.add_term(sv, -coef);
        }
        p.nonneg(expr);
    }

    // interference bound z ≥ σ² + Σ_j |h^H p_j|² over the CSI ball
    let km1 = interferers.len();
    if eps > 0.0 {
        let xi = p.add_var();
        p.nonneg(LinExpr::var(xi));
        let dim = 1 + km1 + mdim;
        let mut lmi = HermitianAffine::new(dim);
        lmi.add_term_entry(intf_var, 0, 0, Complex64::new(1.0, 0.0));
        lmi.add_term_entry(xi, 0, 0, Complex64::new(-1.0, 0.0));
        lmi.add_const_entry(0, 0, Complex64::new(-noise, 0.0));
        for j in 0..km1 {
            lmi.add_const_entry(1 + j, 1 + j, Complex64::new(1.0, 0.0));
        }
        for i in 0..mdim {
            lmi.add_const_entry(1 + km1 + i, 1 + km1 + i, Complex64::new(0.0, 0.0));
            lmi.add_term_entry(xi, 1 + km1 + i, 1 + km1 + i, Complex64::new(1.0, 0.0));
        }
        for (j, pj) in interferers.iter().enumerate() {
            debug_assert!(pj.constant.iter().all(|z| z.norm() == 0.0));
            for (var, delta) in &pj.terms {
                // g_j = conj(ĥ^H p_j) at position (1+j, 0)
                let g_coeff = h_hat.dotc(delta).conj();
                lmi.add_term_entry(*var, 1 + j, 0, g_coeff);
                for i in 0..mdim {
                    lmi.add_term_entry(*var, 1 + km1 + i, 1 + j, -eps * delta[i]);
                }
            }
        }
        p.psd(lmi.to_symmetric());
    } else {
        let dim = 1 + km1;
        let mut lmi = HermitianAffine::new(dim);
        lmi.add_term_entry(intf_var, 0, 0, Complex64::new(1.0, 0.0));
        lmi.add_const_entry(0, 0, Complex64::new(-noise, 0.0));
        for j in 0..km1 {
            lmi.add_const_entry(1 + j, 1 + j, Complex64::new(1.0, 0.0));
        }
        for (j, pj) in interferers.iter().enumerate() {
            for (var, delta) in &pj.terms {
                lmi.add_term_entry(*var, 1 + j, 0, h_hat.dotc(delta).conj());
            }
        }
        p.psd(lmi.to_symmetric());
    }
}

/// Robust beamforming: maximize the transformed radar objective over W
/// subject to the power budget and per-user worst-case QoS.
#[allow(clippy::too_many_arguments)]
pub fn solve_beamforming(
    w_prev: &Beamformer,
    v: &RisPhases,
    h_cascade: &DMatrix<Complex64>,
    users: &UserChannels,
    p_t: f64,
    lambda: &DMatrix<Complex64>,
    positions: &PositionSet,
    mu: &HullWeights,
    grid: &AngleGrid,
    scene: &RadarScene,
    tol: &Tolerances,
) -> Result<Beamformer> {
    let n = w_prev.w.nrows();
    let k_users = w_prev.w.ncols();
    let vh = v.matrix() * h_cascade; // M×N effective cascade
    // nondimensionalize: unit-RMS cascade entries and unit-norm channel
    // estimates keep every QoS block O(1); the constraints are
    // homogeneous under this scaling and w keeps its physical units
    let beta = rms_entry(&vh);
    let vh = vh.unscale(beta);

    let mut p = Program::new();
    let w_vars = p.add_vars(2 * n * k_users);
    let base = w_vars.start;
    let z_vars: Vec<usize> = (0..k_users).map(|_| p.add_var()).collect();

    // affine signal vectors m_j(w) = VH w_j
    let m_affine: Vec<AffineCVec> = (0..k_users)
        .map(|j| AffineCVec {
            constant: DVector::zeros(vh.nrows()),
            terms: (0..n)
                .flat_map(|r| {
                    let col = vh.column(r).into_owned();
                    let jcol = col.map(|z| z * Complex64::i());
                    [
                        (base + 2 * (j * n + r), col.clone()),
                        (base + 2 * (j * n + r) + 1, jcol),
                    ]
                })
                .collect(),
        })
        .collect();

    for k in 0..k_users {
        let m_l = &vh * w_prev.w.column(k).into_owned();
        let interferers: Vec<AffineCVec> = (0..k_users)
            .filter(|&j| j != k)
            .map(|j| m_affine[j].clone())
            .collect();
        let alpha = users.h_hat[k].norm().max(f64::MIN_POSITIVE);
        add_user_qos_blocks(
            &mut p,
            &m_affine[k],
            &m_l,
            &interferers,
            &users.h_hat[k].unscale(alpha),
            users.eps[k] / alpha,
            users.noise / (beta * beta * alpha * alpha),
            z_vars[k],
            users.gamma[k],
            z_vars[k],
            None,
        );
    }

    // power budget
    let mut soc = vec![LinExpr::constant(p_t.sqrt())];
    for i in w_vars.clone() {
        soc.push(LinExpr::var(i));
    }
    p.soc(soc);

    // objective: 2ζ₀² Re tr(W^H S^H Λ) − Σ_q ζ₀²ζ_q² ‖Λ^H A_q W‖²
    let s = hull_steering(positions, grid, mu, scene.wavelength);
    let lin = (s.adjoint() * lambda).scale(2.0 * scene.gain_target);
    for k in 0..k_users {
        for r in 0..n {
            p.maximize_term(base + 2 * (k * n + r), lin[(r, k)].re);
            p.maximize_term(base + 2 * (k * n + r) + 1, lin[(r, k)].im);
        }
    }
    let mut m_quad: DMatrix<Complex64> = DMatrix::zeros(n, n);
    for (q, &(e, a)) in scene.clutter_angles.iter().enumerate() {
        let aq = sensing_steering(positions, e, a, scene.wavelength).a;
        let la = lambda.adjoint() * aq; // K×N
        m_quad += (la.adjoint() * la).scale(scene.gain_target * scene.gain_clutter[q]);
    }
    for k in 0..k_users {
        add_hermitian_quad_penalty(&mut p, &m_quad, |r| base + 2 * (k * n + r));
    }

    let sol = solve_with_retry(&p, tol);
    match sol.status {
        Status::Optimal => Ok(Beamformer {
            w: read_w(&sol.x, base, n, k_users),
        }),
        Status::Infeasible => Err(Error::QosInfeasible {
            user: 0,
            block: "beamforming",
        }),
        other => {
            if std::env::var("MADFRC_DEBUG").is_ok() {
                eprintln!("beamforming status {other:?} violation {:.3e}", sol.max_violation);
                std::fs::write("/tmp/bf_dump.txt", conic::dump::dump(&p)).ok();
            }
            Err(Error::Solver {
                block: "beamforming",
                detail: format!("{other:?}"),
            })
        }
    }
}

/// Feasibility phase for the beamforming block: maximize the worst-user
/// QoS slack instead of the radar objective, relinearizing a few times.
/// Returns the beamformer and the final slack; a nonnegative slack means
/// every (linearized) robust QoS constraint holds.
pub fn solve_beamforming_feasibility(
    w_start: &Beamformer,
    v: &RisPhases,
    h_cascade: &DMatrix<Complex64>,
    users: &UserChannels,
    p_t: f64,
    rounds: usize,
    tol: &Tolerances,
) -> Result<(Beamformer, f64)> {
    let n = w_start.w.nrows();
    let k_users = w_start.w.ncols();
    let vh_raw = v.matrix() * h_cascade;
    let beta = rms_entry(&vh_raw);
    let vh = vh_raw.unscale(beta);

    let mut w = w_start.clone();
    let mut slack_val = f64::NEG_INFINITY;
    for _ in 0..rounds.max(1) {
        let mut p = Program::new();
        let w_vars = p.add_vars(2 * n * k_users);
        let base = w_vars.start;
        let z_vars: Vec<usize> = (0..k_users).map(|_| p.add_var()).collect();
        let slack = p.add_var();
        p.maximize_term(slack, 1.0);

        let m_affine: Vec<AffineCVec> = (0..k_users)
            .map(|j| AffineCVec {
                constant: DVector::zeros(vh.nrows()),
                terms: (0..n)
                    .flat_map(|r| {
                        let col = vh.column(r).into_owned();
                        let jcol = col.map(|z| z * Complex64::i());
                        [
                            (base + 2 * (j * n + r), col.clone()),
                            (base + 2 * (j * n + r) + 1, jcol),
                        ]
                    })
                    .collect(),
            })
            .collect();
        for k in 0..k_users {
            let m_l = &vh * w.w.column(k).into_owned();
            let interferers: Vec<AffineCVec> = (0..k_users)
                .filter(|&j| j != k)
                .map(|j| m_affine[j].clone())
                .collect();
            let alpha = users.h_hat[k].norm().max(f64::MIN_POSITIVE);
            let noise_s = users.noise / (beta * beta * alpha * alpha);
            // slack in multiples of the user's own noise-level QoS gap,
            // so one unit means the same relative deficit for everyone
            add_user_qos_blocks(
                &mut p,
                &m_affine[k],
                &m_l,
                &interferers,
                &users.h_hat[k].unscale(alpha),
                users.eps[k] / alpha,
                noise_s,
                z_vars[k],
                users.gamma[k],
                z_vars[k],
                Some((slack, users.gamma[k] * noise_s)),
            );
        }
        let mut soc = vec![LinExpr::constant(p_t.sqrt())];
        for i in w_vars.clone() {
            soc.push(LinExpr::var(i));
        }
        p.soc(soc);

        let sol = solve_with_retry(&p, tol);
        if sol.status != Status::Optimal {
            return Err(Error::Solver {
                block: "beamforming-feasibility",
                detail: format!("{:?}", sol.status),
            });
        }
        w = Beamformer {
            w: read_w(&sol.x, base, n, k_users),
        };
        slack_val = sol.x[slack];
    }
    Ok((w, slack_val))
}

/// Subtract the real lift of w^H M w (M Hermitian PSD) from the maximized
/// objective, with `idx(r)` giving the real-part variable of entry r.
fn add_hermitian_quad_penalty(p: &mut Program, m: &DMatrix<Complex64>, idx: impl Fn(usize) -> usize) {
    let n = m.nrows();
    for a in 0..n {
        let (ra, ia) = (idx(a), idx(a) + 1);
        let daa = m[(a, a)].re;
        if daa != 0.0 {
            p.quad_penalty(ra, ra, daa);
            p.quad_penalty(ia, ia, daa);
        }
        for b in a + 1..n {
            let (rb, ib) = (idx(b), idx(b) + 1);
            let re = m[(a, b)].re;
            let im = m[(a, b)].im;
            if re != 0.0 {
                p.quad_penalty(ra, rb, 2.0 * re);
                p.quad_penalty(ia, ib, 2.0 * re);
            }
            if im != 0.0 {
                // cross terms from the skew part: 2·Im M_{ab}·(x_i^a x_r^b − x_r^a x_i^b)
                p.quad_penalty(ia, rb, 2.0 * im);
                p.quad_penalty(ra, ib, -2.0 * im);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RisOptions {
    pub rho0_per_element: f64,
    pub tau_pen: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub inner_max: usize,
    pub outer_max: usize,
}

impl Default for RisOptions {
    fn default() -> Self {
        Self {
            rho0_per_element: 0.05,
            tau_pen: 5.0,
            xi1: 1e-4,
            xi2: 1e-4,
            inner_max: 4,
            outer_max: 6,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RisReport {
    /// Minimum-user SINR slack η after each inner solve.
    pub eta_trace: Vec<f64>,
    /// Penalized objective after each inner solve.
    pub penalized_trace: Vec<f64>,
    /// M − ‖v‖² before projection.
    pub unit_residual: f64,
    pub stalled: bool,
}

/// RIS phase update: maximize the minimum worst-case user SINR over v
/// with a penalty loop driving the phases toward unit modulus.
#[allow(clippy::too_many_arguments)]
pub fn solve_ris(
    v_prev: &RisPhases,
    w: &Beamformer,
    h_cascade: &DMatrix<Complex64>,
    users: &UserChannels,
    opts: &RisOptions,
    tol: &Tolerances,
) -> Result<(RisPhases, RisReport)> {
    let mdim = v_prev.v.len();
    let k_users = w.w.ncols();
    // per-user fixed vectors diag(H w_j): m_j(v) = diag(H w_j) v,
    // nondimensionalized the same way as in the beamforming step
    let beta = rms_entry(h_cascade);
    let hw: Vec<DVector<Complex64>> = (0..k_users)
        .map(|j| (h_cascade * w.w.column(j).into_owned()).unscale(beta))
        .collect();
    let alphas: Vec<f64> = (0..k_users)
        .map(|k| users.h_hat[k].norm().max(f64::MIN_POSITIVE))
        .collect();
    let h_hat_s: Vec<DVector<Complex64>> = (0..k_users)
        .map(|k| users.h_hat[k].unscale(alphas[k]))
        .collect();
    let eps_s: Vec<f64> = (0..k_users).map(|k| users.eps[k] / alphas[k]).collect();
    let noise_s: Vec<f64> = (0..k_users)
        .map(|k| users.noise / (beta * beta * alphas[k] * alphas[k]))
        .collect();

    let mut v_l = v_prev.v.clone();
    let mut report = RisReport::default();
    let mut rho = opts.rho0_per_element * mdim as f64;

    // initial surrogate parameters from conservative robust bounds
    let mut eta_l = f64::INFINITY;
    let mut z_l = vec![0.0f64; k_users];
    for k in 0..k_users {
        let pk: Vec<DVector<Complex64>> = hw
            .iter()
            .map(|h| {
                DVector::from_iterator(mdim, h.iter().zip(v_l.iter()).map(|(a, b)| a * b))
            })
            .collect();
        let mut interf = noise_s[k];
        for (j, pj) in pk.iter().enumerate() {
            if j == k {
                continue;
            }
            let nom = h_hat_s[k].dotc(pj).norm();
            interf += (nom + eps_s[k] * pj.norm()).powi(2);
        }
        let nom_sig = h_hat_s[k].dotc(&pk[k]).norm();
        let sig = (nom_sig - eps_s[k] * pk[k].norm()).max(0.0).powi(2);
        z_l[k] = interf;
        eta_l = eta_l.min(sig / interf);
    }
    let mut eta_l = eta_l.max(1e-4);

    for _outer in 0..opts.outer_max {
        for _inner in 0..opts.inner_max {
            let mut p = Program::new();
            let v_vars = p.add_vars(2 * mdim);
            let vbase = v_vars.start;
            let eta = p.add_var();
            let s_eta = p.add_var();
            p.nonneg(LinExpr::var(eta));
            p.square_epigraph(&LinExpr::var(s_eta), &LinExpr::var(eta));

            let m_affine: Vec<AffineCVec> = hw
                .iter()
                .map(|h| AffineCVec {
                    constant: DVector::zeros(mdim),
                    terms: (0..mdim)
                        .flat_map(|m| {
                            let mut er: DVector<Complex64> = DVector::zeros(mdim);
                            er[m] = h[m];
                            let ei = er.map(|z| z * Complex64::i());
                            [(vbase + 2 * m, er.clone()), (vbase + 2 * m + 1, ei)]
                        })
                        .collect(),
                })
                .collect();

            for k in 0..k_users {
                let z = p.add_var();
                let c = p.add_var();
                let s_z = p.add_var();
                p.nonneg(LinExpr::var(z));
                p.square_epigraph(&LinExpr::var(s_z), &LinExpr::var(z));
                // c ≥ surrogate of η·z around (η^l, z^l); the surrogate
                // upper-bounds the product for any positive anchors. A
                // penalized slack keeps the row feasible when the robust
                // signal at the anchor is zero (weak user, bad phases).
                let zl = z_l[k].max(1e-8);
                let u = p.add_var();
                p.nonneg(LinExpr::var(u));
                p.maximize_term(u, -10.0);
                let mut cc = LinExpr::var(c);
                cc.add_term(s_eta, -0.5 * zl / eta_l);
                cc.add_term(s_z, -0.5 * eta_l / zl);
                cc.add_term(u, zl);
                p.nonneg(cc);

                let m_l = DVector::from_iterator(
                    mdim,
                    hw[k].iter().zip(v_l.iter()).map(|(a, b)| a * b),
                );
                let interferers: Vec<AffineCVec> = (0..k_users)
                    .filter(|&j| j != k)
                    .map(|j| m_affine[j].clone())
                    .collect();
                add_user_qos_blocks(
                    &mut p,
                    &m_affine[k],
                    &m_l,
                    &interferers,
                    &h_hat_s[k],
                    eps_s[k],
                    noise_s[k],
                    c,
                    1.0,
                    z,
                    None,
                );
            }

            // per-element modulus cap and the linearized modulus reward
            for m in 0..mdim {
                p.soc(vec![
                    LinExpr::constant(1.0),
                    LinExpr::var(vbase + 2 * m),
                    LinExpr::var(vbase + 2 * m + 1),
                ]);
                p.maximize_term(vbase + 2 * m, 2.0 * rho * v_l[m].re);
                p.maximize_term(vbase + 2 * m + 1, 2.0 * rho * v_l[m].im);
            }
            p.maximize_term(eta, 1.0);

            let sol = solve_with_retry(&p, tol);
            if sol.status != Status::Optimal {
                if std::env::var("MADFRC_DEBUG").is_ok() {
                    eprintln!("ris solve status {:?} violation {:.3e}", sol.status, sol.max_violation);
                    std::fs::write("/tmp/ris_dump.txt", conic::dump::dump(&p)).ok();
                }
                report.stalled = true;
                let mut out = RisPhases { v: v_l };
                report.unit_residual = mdim as f64 - out.v.norm_squared();
                out.project();
                return Ok((out, report));
            }
            let v_new = DVector::from_fn(mdim, |m, _| {
                Complex64::new(sol.x[vbase + 2 * m], sol.x[vbase + 2 * m + 1])
            });
            let eta_new = sol.x[eta];
            report.eta_trace.push(eta_new);
            report
                .penalized_trace
                .push(eta_new + rho * (v_new.norm_squared() - mdim as f64));
            let step = (&v_new - &v_l).norm_squared();
            v_l = v_new;
            // carry the solver's own anchors forward so the next
            // linearization touches the current point
            eta_l = eta_new.max(1e-4);
            for (k, zk) in z_l.iter_mut().enumerate() {
                let zvar_guess: f64 = {
                    // recompute interference bound at the new v
                    let mut interf = noise_s[k];
                    for (j, h) in hw.iter().enumerate() {
                        if j == k {
                            continue;
                        }
                        let pj = DVector::from_iterator(
                            mdim,
                            h.iter().zip(v_l.iter()).map(|(a, b)| a * b),
                        );
                        let nom = h_hat_s[k].dotc(&pj).norm();
                        interf += (nom + eps_s[k] * pj.norm()).powi(2);
                    }
                    interf
                };
                *zk = zvar_guess;
            }
            if step <= opts.xi1 {
                break;
            }
        }
        report.unit_residual = mdim as f64 - v_l.norm_squared();
        if report.unit_residual <= opts.xi2 {
            break;
        }
        rho *= opts.tau_pen;
    }
    report.unit_residual = mdim as f64 - v_l.norm_squared();
    let mut out = RisPhases { v: v_l };
    out.project();
    Ok((out, report))
}

/// One position-set update by SCA: maximize the linearized radar objective
/// minus its curvature majorant, inside the region, spacing, and
/// (transmit side only) robust QoS constraints.
#[allow(clippy::too_many_arguments)]
pub fn solve_positions(
    moving_prev: &[[f64; 2]],
    obj: &ObjectiveCache,
    qos: &[(&QosCache, f64)], // (cache, γσ² bound with margin)
    region_half: f64,
    min_spacing: f64,
    tol: &Tolerances,
) -> Result<Vec<[f64; 2]>> {
    let n = moving_prev.len();
    let grad = obj.gradient(moving_prev);
    let delta0 = obj.delta0().max(1e-9);

    let mut p = Program::new();
    let d_vars = p.add_vars(2 * n);
    let dbase = d_vars.start;
    let s_t = p.add_var();
    p.nonneg(LinExpr::var(s_t));

    // s_t ≥ ‖δ‖²
    let mut soc = vec![LinExpr::zero(); 2 * n + 2];
    soc[0] = LinExpr::var(s_t);
    soc[0].add_constant(1.0);
    for i in 0..2 * n {
        soc[1 + i] = LinExpr::term(dbase + i, 2.0);
    }
    soc[2 * n + 1] = LinExpr::var(s_t);
    soc[2 * n + 1].add_constant(-1.0);
    p.soc(soc);

    for i in 0..2 * n {
        p.maximize_term(dbase + i, grad[i]);
    }
    p.maximize_term(s_t, -0.5 * delta0);

    // region box
    for i in 0..n {
        for d in 0..2 {
            let coord = moving_prev[i][d];
            let var = dbase + 2 * i + d;
            let mut upper = LinExpr::term(var, -1.0);
            upper.add_constant(region_half - coord);
            p.nonneg(upper);
            let mut lower = LinExpr::var(var);
            lower.add_constant(region_half + coord);
            p.nonneg(lower);
        }
    }

    // linearized pairwise spacing; convexity of the norm makes the true
    // distance at least the linearized one
    for a in 0..n {
        for b in a + 1..n {
            let dx = moving_prev[a][0] - moving_prev[b][0];
            let dy = moving_prev[a][1] - moving_prev[b][1];
            let norm = (dx * dx + dy * dy).sqrt();
            if norm == 0.0 {
                return Err(Error::Dimension("coincident antennas in spacing".into()));
            }
            let (ex, ey) = (dx / norm, dy / norm);
            let mut e = LinExpr::constant(norm - min_spacing);
            e.add_term(dbase + 2 * a, ex);
            e.add_term(dbase + 2 * a + 1, ey);
            e.add_term(dbase + 2 * b, -ex);
            e.add_term(dbase + 2 * b + 1, -ey);
            p.nonneg(e);
        }
    }

    for (cache, qos_bound) in qos {
        let t_k = cache.t_matrix(moving_prev);
        let coeffs = cache.position_coeffs(moving_prev);
        let delta_k = cache.delta_k();
        if cache.eps > 0.0 {
            let varpi = p.add_var();
            p.nonneg(LinExpr::var(varpi));
            let mdim = t_k.nrows();
            let mut kernel = HermitianAffine::new(mdim);
            kernel.add_const(&(-&t_k));
            for (i, (ax, by)) in coeffs.iter().enumerate() {
                kernel.add_term(dbase + 2 * i, -ax);
                kernel.add_term(dbase + 2 * i + 1, -by);
            }
            let mut lmi = kernel.bordered(&cache.h_hat);
            let mut eye = DMatrix::zeros(mdim + 1, mdim + 1);
            for i in 0..mdim {
                eye[(i, i)] = Complex64::new(1.0, 0.0);
            }
            lmi.add_term(varpi, eye);
            lmi.add_const_entry(mdim, mdim, Complex64::new(-qos_bound, 0.0));
            lmi.add_term_entry(varpi, mdim, mdim, Complex64::new(-cache.eps * cache.eps, 0.0));
            lmi.add_term_entry(s_t, mdim, mdim, Complex64::new(-0.5 * delta_k, 0.0));
            p.psd(lmi.to_symmetric());
        } else {
            let quad = |mat: &DMatrix<Complex64>| {
                (cache.h_hat.adjoint() * mat * &cache.h_hat)[(0, 0)].re
            };
            let mut e = LinExpr::constant(-quad(&t_k) - qos_bound);
            for (i, (ax, by)) in coeffs.iter().enumerate() {
                e.add_term(dbase + 2 * i, -quad(ax));
                e.add_term(dbase + 2 * i + 1, -quad(by));
            }
            e.add_term(s_t, -0.5 * delta_k);
            p.nonneg(e);
        }
    }

    let sol = solve_with_retry(&p, tol);
    if sol.status != Status::Optimal {
        return Err(Error::Solver {
            block: "positions",
            detail: format!("{:?}", sol.status),
        });
    }
    Ok((0..n)
        .map(|i| {
            [
                moving_prev[i][0] + sol.x[dbase + 2 * i],
                moving_prev[i][1] + sol.x[dbase + 2 * i + 1],
            ]
        })
        .collect())
}

/// Hull-weight update: minimize the hull-mode radar bound over the
/// simplex. The Gram entries are G_pq = ζ₀² Re tr(W^H A_p^H B^{-1} A_q W).
pub fn solve_hull_weights(
    w: &DMatrix<Complex64>,
    positions: &PositionSet,
    grid: &AngleGrid,
    scene: &RadarScene,
    tol: &Tolerances,
) -> Result<HullWeights> {
    let p_s = grid.len();
    if p_s == 1 {
        return Ok(HullWeights { mu: vec![1.0] });
    }
    let b = scene.clutter_noise_cov(w, positions);
    let chol = b.cholesky().expect("clutter+noise covariance is PD");
    let aw: Vec<DMatrix<Complex64>> = grid
        .samples
        .iter()
        .map(|&(e, a)| sensing_steering(positions, e, a, scene.wavelength).a * w)
        .collect();
    let solved: Vec<DMatrix<Complex64>> = aw.iter().map(|m| chol.solve(m)).collect();
    let mut gram = DMatrix::zeros(p_s, p_s);
    for i in 0..p_s {
        for j in i..p_s {
            let mut acc = 0.0;
            for c in 0..aw[i].ncols() {
                acc += aw[i].column(c).dotc(&solved[j].column(c).into_owned()).re;
            }
            let v = scene.gain_target * acc;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }

    let mut p = Program::new();
    let mu_vars = p.add_vars(p_s);
    let base = mu_vars.start;
    for i in 0..p_s {
        p.nonneg(LinExpr::var(base + i));
    }
    let mut sum = LinExpr::constant(-1.0);
    for i in 0..p_s {
        sum.add_term(base + i, 1.0);
    }
    p.eq_zero(sum);
    for i in 0..p_s {
        p.quad_penalty(base + i, base + i, gram[(i, i)]);
        for j in i + 1..p_s {
            p.quad_penalty(base + i, base + j, 2.0 * gram[(i, j)]);
        }
    }
    let sol = solve_with_retry(&p, tol);
    if sol.status != Status::Optimal {
        return Err(Error::Solver {
            block: "hull-weights",
            detail: format!("{:?}", sol.status),
        });
    }
    let mut mu: Vec<f64> = (0..p_s).map(|i| sol.x[base + i].max(0.0)).collect();
    let total: f64 = mu.iter().sum();
    for m in mu.iter_mut() {
        *m /= total;
    }
    Ok(HullWeights { mu })
}

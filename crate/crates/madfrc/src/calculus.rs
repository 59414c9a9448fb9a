//! Differentiation kernels for the position updates: gradients, Hessians,
//! curvature majorization constants, and the first-order QoS matrices used
//! inside the position SDP.
//!
//! Both the radar objective and the QoS constraint are finite sums of
//! cosines whose phases are linear in the flattened antenna coordinates
//! (x₁,y₁,…,x_N,y_N), so one shared kernel evaluates value, gradient, and
//! Hessian from a list of cosine atoms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::field_response_matrix;
use crate::metrics::RadarScene;
use crate::uncertainty::{AngleGrid, HullWeights};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// One term amp·cos(phase0 + Σ coeff·x[idx]) over flattened coordinates.
#[derive(Clone, Debug)]
struct CosAtom {
    amp: f64,
    phase0: f64,
    terms: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Default)]
struct CosSum {
    constant: f64,
    atoms: Vec<CosAtom>,
}

fn flatten(pos: &[[f64; 2]]) -> Vec<f64> {
    pos.iter().flat_map(|p| [p[0], p[1]]).collect()
}

/// Direction cosines (∂ρ/∂x, ∂ρ/∂y) for an angle pair in degrees.
fn dir_cosines(elev_deg: f64, azim_deg: f64) -> (f64, f64) {
    let e = elev_deg.to_radians();
    let a = azim_deg.to_radians();
    (e.sin() * a.cos(), e.cos())
}

impl CosSum {
    fn value(&self, x: &[f64]) -> f64 {
        let mut acc = self.constant;
        for atom in &self.atoms {
            let mut phase = atom.phase0;
            for &(i, c) in &atom.terms {
                phase += c * x[i];
            }
            acc += atom.amp * phase.cos();
        }
        acc
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for atom in &self.atoms {
            let mut phase = atom.phase0;
            for &(i, c) in &atom.terms {
                phase += c * x[i];
            }
            let s = -atom.amp * phase.sin();
            for &(i, c) in &atom.terms {
                g[i] += s * c;
            }
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        for atom in &self.atoms {
            let mut phase = atom.phase0;
            for &(i, c) in &atom.terms {
                phase += c * x[i];
            }
            let s = -atom.amp * phase.cos();
            for &(i, ci) in &atom.terms {
                for &(j, cj) in &atom.terms {
                    h[(i, j)] += s * ci * cj;
                }
            }
        }
        h
    }
}

/// Constants of the radar objective as a function of one moving position
/// set (transmit side: b_p = μ_p ζ₀² W Λ^H a_p^r and the W Gram; receive
/// side: the same roles with W and Λ swapped).
#[derive(Clone, Debug)]
pub struct ObjectiveCache {
    /// Per hull sample: coupling vector over the moving antennas.
    pub b: Vec<DVector<Complex64>>,
    /// Per clutter source: nonnegative scalar weight.
    pub c: Vec<f64>,
    /// Gram matrix of the fixed-side variables (W W^H or Λ Λ^H).
    pub d: DMatrix<Complex64>,
    pub hull_angles: Vec<(f64, f64)>,
    pub clutter_angles: Vec<(f64, f64)>,
    pub wavelength: f64,
    /// Position-independent part of the objective.
    pub constant: f64,
}

fn steering(pos: &[[f64; 2]], elev: f64, azim: f64, wavelength: f64) -> DVector<Complex64> {
    crate::channel::steering_vector(pos, elev, azim, wavelength)
}

impl ObjectiveCache {
    /// Cache for optimizing the transmit positions: the receive positions
    /// and (W, Λ, μ) are fixed.
    pub fn for_tx(
        w: &DMatrix<Complex64>,
        lambda: &DMatrix<Complex64>,
        rx: &[[f64; 2]],
        mu: &HullWeights,
        grid: &AngleGrid,
        scene: &RadarScene,
    ) -> Self {
        let z0 = scene.gain_target;
        let b: Vec<DVector<Complex64>> = grid
            .samples
            .iter()
            .zip(&mu.mu)
            .map(|(&(e, a), &m)| {
                let ar = steering(rx, e, a, scene.wavelength);
                (w * (lambda.adjoint() * ar)).scale(m * z0)
            })
            .collect();
        let c: Vec<f64> = scene
            .clutter_angles
            .iter()
            .zip(&scene.gain_clutter)
            .map(|(&(e, a), &zq)| {
                let ar = steering(rx, e, a, scene.wavelength);
                z0 * zq * (lambda.adjoint() * &ar).norm_squared()
            })
            .collect();
        let d = w * w.adjoint();
        Self::assemble(b, c, d, grid, scene, lambda)
    }

    /// Cache for optimizing the receive positions: transmit side fixed.
    pub fn for_rx(
        w: &DMatrix<Complex64>,
        lambda: &DMatrix<Complex64>,
        tx: &[[f64; 2]],
        mu: &HullWeights,
        grid: &AngleGrid,
        scene: &RadarScene,
    ) -> Self {
        let z0 = scene.gain_target;
        let b: Vec<DVector<Complex64>> = grid
            .samples
            .iter()
            .zip(&mu.mu)
            .map(|(&(e, a), &m)| {
                let at = steering(tx, e, a, scene.wavelength);
                (lambda * (w.adjoint() * at)).scale(m * z0)
            })
            .collect();
        let c: Vec<f64> = scene
            .clutter_angles
            .iter()
            .zip(&scene.gain_clutter)
            .map(|(&(e, a), &zq)| {
                let at = steering(tx, e, a, scene.wavelength);
                let dw = w * (w.adjoint() * &at);
                z0 * zq * at.dotc(&dw).re
            })
            .collect();
        let d = lambda * lambda.adjoint();
        Self::assemble(b, c, d, grid, scene, lambda)
    }

    fn assemble(
        b: Vec<DVector<Complex64>>,
        c: Vec<f64>,
        d: DMatrix<Complex64>,
        grid: &AngleGrid,
        scene: &RadarScene,
        lambda: &DMatrix<Complex64>,
    ) -> Self {
        let diag_sum: f64 = (0..d.nrows()).map(|n| d[(n, n)].re).sum();
        let constant = -scene.gain_target * scene.noise * lambda.norm_squared()
            - c.iter().map(|cq| cq * diag_sum).sum::<f64>();
        Self {
            b,
            c,
            d,
            hull_angles: grid.samples.clone(),
            clutter_angles: scene.clutter_angles.clone(),
            wavelength: scene.wavelength,
            constant,
        }
    }

    fn cos_sum(&self) -> CosSum {
        let k = TWO_PI / self.wavelength;
        let n = self.d.nrows();
        let mut sum = CosSum {
            constant: self.constant,
            ..Default::default()
        };
        for (p, bp) in self.b.iter().enumerate() {
            let (gx, gy) = dir_cosines(self.hull_angles[p].0, self.hull_angles[p].1);
            for (i, bpn) in bp.iter().enumerate() {
                if bpn.norm() == 0.0 {
                    continue;
                }
                sum.atoms.push(CosAtom {
                    amp: 2.0 * bpn.norm(),
                    phase0: -bpn.arg(),
                    terms: vec![(2 * i, k * gx), (2 * i + 1, k * gy)],
                });
            }
        }
        for (q, &cq) in self.c.iter().enumerate() {
            let (gx, gy) = dir_cosines(self.clutter_angles[q].0, self.clutter_angles[q].1);
            for i in 0..n {
                for m in 0..n {
                    if i == m || self.d[(i, m)].norm() == 0.0 {
                        continue;
                    }
                    // ordered pair (i, m): phase k·ρ(t_m − t_i) + ∠d
                    sum.atoms.push(CosAtom {
                        amp: -cq * self.d[(i, m)].norm(),
                        phase0: self.d[(i, m)].arg(),
                        terms: vec![
                            (2 * m, k * gx),
                            (2 * m + 1, k * gy),
                            (2 * i, -k * gx),
                            (2 * i + 1, -k * gy),
                        ],
                    });
                }
            }
        }
        sum
    }

    pub fn value(&self, pos: &[[f64; 2]]) -> f64 {
        self.cos_sum().value(&flatten(pos))
    }

    pub fn gradient(&self, pos: &[[f64; 2]]) -> DVector<f64> {
        self.cos_sum().gradient(&flatten(pos))
    }

    pub fn hessian(&self, pos: &[[f64; 2]]) -> DMatrix<f64> {
        self.cos_sum().hessian(&flatten(pos))
    }

    /// Curvature majorant: δ₀ I dominates the negated objective Hessian.
    pub fn delta0(&self) -> f64 {
        let n = self.d.nrows() as f64;
        let p_s = self.b.len() as f64;
        let q = self.c.len() as f64;
        let b_max = self
            .b
            .iter()
            .flat_map(|bp| bp.iter().map(|z| z.norm()))
            .fold(0.0f64, f64::max);
        let mut d_max = 0.0f64;
        let nn = self.d.nrows();
        for i in 0..nn {
            for m in 0..nn {
                if i != m {
                    d_max = d_max.max(self.d[(i, m)].norm());
                }
            }
        }
        let c_max = self.c.iter().copied().fold(0.0f64, f64::max);
        16.0 * n * std::f64::consts::PI.powi(2) / self.wavelength.powi(2)
            * (p_s * b_max + q * (n - 1.0) * d_max * c_max)
    }
}

/// Per-user constants of the QoS constraint f_k(t̃) viewed through the
/// cascade: f_k(h, t̃) = h^H C R_k C^H h with C = Ω^H G(t̃), Ω = Σ^H F V^H.
#[derive(Clone, Debug)]
pub struct QosCache {
    /// Σ_{j≠k} γ_k w_j w_j^H − w_k w_k^H.
    pub r_k: DMatrix<Complex64>,
    /// Ω = Σ^H F V^H, L×M.
    pub omega: DMatrix<Complex64>,
    pub h_hat: DVector<Complex64>,
    pub eps: f64,
    /// Departure angles at the BS, degrees.
    pub bs_angles: Vec<(f64, f64)>,
    pub wavelength: f64,
}

impl QosCache {
    pub fn new(
        w: &DMatrix<Complex64>,
        user: usize,
        gamma: f64,
        omega: DMatrix<Complex64>,
        h_hat: DVector<Complex64>,
        eps: f64,
        bs_angles: Vec<(f64, f64)>,
        wavelength: f64,
    ) -> Self {
        let n = w.nrows();
        let mut r_k: DMatrix<Complex64> = DMatrix::zeros(n, n);
        for j in 0..w.ncols() {
            let wj = w.column(j).into_owned();
            let outer = &wj * wj.adjoint();
            if j == user {
                r_k -= outer;
            } else {
                r_k += outer.scale(gamma);
            }
        }
        Self {
            r_k,
            omega,
            h_hat,
            eps,
            bs_angles,
            wavelength,
        }
    }

    /// Effective path-domain vector a = Ω h.
    pub fn a_of(&self, h: &DVector<Complex64>) -> DVector<Complex64> {
        &self.omega * h
    }

    /// Robust magnitude bounds ã_l ≥ |a_l(ĥ+Δh)| over the CSI ball.
    pub fn a_tilde(&self) -> DVector<f64> {
        let a_hat = self.a_of(&self.h_hat);
        DVector::from_iterator(
            a_hat.len(),
            a_hat.iter().enumerate().map(|(l, al)| {
                let row_abs: f64 = self.omega.row(l).iter().map(|z| z.norm()).sum();
                al.norm() + self.eps * row_abs
            }),
        )
    }

    fn cos_sum(&self, a: &DVector<Complex64>) -> CosSum {
        let k = TWO_PI / self.wavelength;
        let n = self.r_k.nrows();
        let l = a.len();
        let mut sum = CosSum::default();
        let dirs: Vec<(f64, f64)> = self
            .bs_angles
            .iter()
            .map(|&(e, az)| dir_cosines(e, az))
            .collect();
        for i in 0..n {
            for j in 0..n {
                let r = self.r_k[(i, j)];
                if r.norm() == 0.0 {
                    continue;
                }
                for li in 0..l {
                    for lp in 0..l {
                        let amp = a[li].norm() * a[lp].norm() * r.norm();
                        if amp == 0.0 {
                            continue;
                        }
                        // conj(a_l) a_p R_ij e^{jk(ρ(t_i,ψ_l) − ρ(t_j,ψ_p))}
                        let phase0 = -a[li].arg() + a[lp].arg() + r.arg();
                        let mut terms = vec![
                            (2 * i, k * dirs[li].0),
                            (2 * i + 1, k * dirs[li].1),
                            (2 * j, -k * dirs[lp].0),
                            (2 * j + 1, -k * dirs[lp].1),
                        ];
                        if i == j {
                            terms = vec![
                                (2 * i, k * (dirs[li].0 - dirs[lp].0)),
                                (2 * i + 1, k * (dirs[li].1 - dirs[lp].1)),
                            ];
                        }
                        sum.atoms.push(CosAtom { amp, phase0, terms });
                    }
                }
            }
        }
        sum
    }

    /// f_k at positions for a channel draw h, via the matrix form.
    pub fn value(&self, pos: &[[f64; 2]], h: &DVector<Complex64>) -> f64 {
        let a = self.a_of(h);
        let g = field_response_matrix(pos, &self.bs_angles, self.wavelength);
        let b = g.adjoint() * a;
        b.dotc(&(&self.r_k * &b)).re
    }

    pub fn gradient(&self, pos: &[[f64; 2]], h: &DVector<Complex64>) -> DVector<f64> {
        self.cos_sum(&self.a_of(h)).gradient(&flatten(pos))
    }

    pub fn hessian(&self, pos: &[[f64; 2]], h: &DVector<Complex64>) -> DMatrix<f64> {
        self.cos_sum(&self.a_of(h)).hessian(&flatten(pos))
    }

    /// Curvature majorant valid for every h in the CSI ball.
    pub fn delta_k(&self) -> f64 {
        let n = self.r_k.nrows() as f64;
        let upsilon = self
            .r_k
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        let tilde_sum: f64 = self.a_tilde().iter().sum();
        16.0 * std::f64::consts::PI.powi(2) * n * n * upsilon / self.wavelength.powi(2)
            * tilde_sum.powi(2)
    }

    /// Channel-domain quadratic kernel T(t̃) = C R_k C^H with C = Ω^H G(t̃),
    /// so that f_k(h, t̃) = h^H T h.
    pub fn t_matrix(&self, pos: &[[f64; 2]]) -> DMatrix<Complex64> {
        let g = field_response_matrix(pos, &self.bs_angles, self.wavelength);
        let c = self.omega.adjoint() * g;
        &c * &self.r_k * c.adjoint()
    }

    /// First-order coefficient matrices (Ã_i, B̃_i) of the channel-domain
    /// expansion: h^H (Σ_i Ã_i Δx_i + B̃_i Δy_i) h = ∇f_k(t̃)ᵀ Δt for all h.
    pub fn position_coeffs(&self, pos: &[[f64; 2]]) -> Vec<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let k = TWO_PI / self.wavelength;
        let g = field_response_matrix(pos, &self.bs_angles, self.wavelength);
        let p = self.omega.adjoint(); // M×L
        let c = &p * &g; // M×N
        let rc = &self.r_k * c.adjoint(); // N×M
        let l = g.nrows();
        (0..pos.len())
            .map(|i| {
                let row_i = rc.row(i).into_owned(); // 1×M
                let make = |dir: usize| -> DMatrix<Complex64> {
                    let dg = DVector::from_iterator(
                        l,
                        (0..l).map(|path| {
                            let d = dir_cosines(self.bs_angles[path].0, self.bs_angles[path].1);
                            let dc = if dir == 0 { d.0 } else { d.1 };
                            Complex64::new(0.0, k * dc) * g[(path, i)]
                        }),
                    );
                    let u = &p * dg; // M-vector
                    let outer = &u * &row_i;
                    &outer + outer.adjoint()
                };
                (make(0), make(1))
            })
            .collect()
    }

    /// Evaluated first-order matrix Φ_k for a concrete displacement.
    pub fn phi_k_matrix(&self, pos: &[[f64; 2]], pos_prev: &[[f64; 2]]) -> DMatrix<Complex64> {
        let coeffs = self.position_coeffs(pos_prev);
        let m = self.omega.ncols();
        let mut phi: DMatrix<Complex64> = DMatrix::zeros(m, m);
        for (i, (ax, by)) in coeffs.iter().enumerate() {
            phi += ax.scale(pos[i][0] - pos_prev[i][0]);
            phi += by.scale(pos[i][1] - pos_prev[i][1]);
        }
        phi
    }
}

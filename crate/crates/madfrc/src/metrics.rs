//! Communication SINR, the MVDR receive filter, the radar SINR lower
//! bound, and Monte-Carlo oracles used for validation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{sensing_steering, PositionSet};
use crate::scenario::Scenario;
use crate::uncertainty::{AngleGrid, HullWeights};

/// Transmit beamformer, one column per user.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformer {
    pub w: DMatrix<Complex64>,
}

impl Beamformer {
    pub fn power(&self) -> f64 {
        self.w.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// RIS reflection coefficients, |v_m| = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RisPhases {
    pub v: DVector<Complex64>,
}

impl RisPhases {
    pub fn matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&self.v)
    }

    /// Entry-wise projection to exact unit modulus.
    pub fn project(&mut self) {
        for z in self.v.iter_mut() {
            let n = z.norm();
            if n > 0.0 {
                *z /= n;
            } else {
                *z = Complex64::new(1.0, 0.0);
            }
        }
    }

    pub fn max_modulus_deviation(&self) -> f64 {
        self.v
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Sensing-side constants: target/clutter angles and gains plus the radar
/// noise floor. Steering matrices are rebuilt from positions on demand.
#[derive(Clone, Debug)]
pub struct RadarScene {
    pub target_elev: f64,
    pub target_azim: f64,
    pub clutter_angles: Vec<(f64, f64)>,
    /// ζ₀², linear.
    pub gain_target: f64,
    /// ζ_q², linear.
    pub gain_clutter: Vec<f64>,
    /// σ_r², watts.
    pub noise: f64,
    pub wavelength: f64,
}

impl RadarScene {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            target_elev: s.target_elev,
            target_azim: s.target_azim,
            clutter_angles: s.clutter_angles.clone(),
            gain_target: s.gain_target,
            gain_clutter: s.gain_clutter.clone(),
            noise: s.noise_radar,
            wavelength: s.wavelength,
        }
    }

    /// Clutter covariance contribution Ξ = Σ_q ζ_q² A_q W W^H A_q^H.
    pub fn xi(&self, w: &DMatrix<Complex64>, positions: &PositionSet) -> DMatrix<Complex64> {
        let n = positions.rx.len();
        let mut xi = DMatrix::zeros(n, n);
        for (q, &(e, a)) in self.clutter_angles.iter().enumerate() {
            let aq = sensing_steering(positions, e, a, self.wavelength).a;
            let aw = &aq * w;
            xi += (&aw * aw.adjoint()).scale(self.gain_clutter[q]);
        }
        xi
    }

    /// Ξ + σ_r² I, always invertible.
    pub fn clutter_noise_cov(
        &self,
        w: &DMatrix<Complex64>,
        positions: &PositionSet,
    ) -> DMatrix<Complex64> {
        let n = positions.rx.len();
        let mut b = self.xi(w, positions);
        for i in 0..n {
            b[(i, i)] += Complex64::new(self.noise, 0.0);
        }
        b
    }
}

/// Per-user downlink SINR with a fixed channel draw h_k.
pub fn comm_sinr(
    w: &Beamformer,
    v: &RisPhases,
    h_cascade: &DMatrix<Complex64>,
    h_k: &DVector<Complex64>,
    noise: f64,
    user: usize,
) -> f64 {
    // h^H V H w_j = c^H w_j with c = H^H V^H h
    let c = h_cascade.adjoint() * v.matrix().adjoint() * h_k;
    let k = w.w.ncols();
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..k {
        let p = c.dotc(&w.w.column(j).into_owned()).norm_sqr();
        if j == user {
            signal = p;
        } else {
            interference += p;
        }
    }
    signal / (interference + noise)
}

/// MVDR receive filter for one transmit snapshot x, normalized to unit
/// norm (the scale factor only normalizes and is dropped).
pub fn mvdr_filter(
    scene: &RadarScene,
    positions: &PositionSet,
    w: &DMatrix<Complex64>,
    x: &DVector<Complex64>,
) -> DVector<Complex64> {
    let b = scene.clutter_noise_cov(w, positions);
    let a0 = sensing_steering(positions, scene.target_elev, scene.target_azim, scene.wavelength).a;
    let rhs = &a0 * x;
    let chol = b.cholesky().expect("clutter+noise covariance is PD");
    let mut u = chol.solve(&rhs);
    let n = u.norm();
    if n > 0.0 {
        u.scale_mut(1.0 / n);
    }
    u
}

/// Expected output SINR of a fixed receive filter under Gaussian symbols.
pub fn filter_output_sinr(
    u: &DVector<Complex64>,
    scene: &RadarScene,
    positions: &PositionSet,
    w: &DMatrix<Complex64>,
) -> f64 {
    let a0 = sensing_steering(positions, scene.target_elev, scene.target_azim, scene.wavelength).a;
    let s = (a0 * w).adjoint() * u;
    let numerator = scene.gain_target * s.norm_squared();
    let xi = scene.xi(w, positions);
    let den = (u.adjoint() * xi * u)[(0, 0)].re + scene.noise * u.norm_squared();
    numerator / den
}

/// Radar SINR lower bound tr(Φ W W^H). Point mode uses the nominal
/// target angle; hull mode uses the weighted combination of grid samples.
pub fn radar_sinr_bound(
    w: &DMatrix<Complex64>,
    positions: &PositionSet,
    scene: &RadarScene,
    hull: Option<(&AngleGrid, &HullWeights)>,
) -> f64 {
    let s = match hull {
        None => {
            sensing_steering(positions, scene.target_elev, scene.target_azim, scene.wavelength).a
        }
        Some((grid, weights)) => {
            let n = positions.rx.len();
            let mut acc: DMatrix<Complex64> = DMatrix::zeros(n, positions.tx.len());
            for (p, &(e, a)) in grid.samples.iter().enumerate() {
                let ap = sensing_steering(positions, e, a, scene.wavelength).a;
                acc += ap.scale(weights.mu[p]);
            }
            acc
        }
    };
    quadform_through_inverse(&(s * w), scene, w, positions)
}

/// Point-mode bound at an explicit angle pair.
pub fn radar_sinr_bound_at(
    w: &DMatrix<Complex64>,
    positions: &PositionSet,
    scene: &RadarScene,
    elev: f64,
    azim: f64,
) -> f64 {
    let a = sensing_steering(positions, elev, azim, scene.wavelength).a;
    quadform_through_inverse(&(a * w), scene, w, positions)
}

fn quadform_through_inverse(
    sw: &DMatrix<Complex64>,
    scene: &RadarScene,
    w: &DMatrix<Complex64>,
    positions: &PositionSet,
) -> f64 {
    let b = scene.clutter_noise_cov(w, positions);
    let chol = b.cholesky().expect("clutter+noise covariance is PD");
    let solved = chol.solve(sw);
    let mut acc = 0.0;
    for c in 0..sw.ncols() {
        acc += sw.column(c).dotc(&solved.column(c).into_owned()).re;
    }
    scene.gain_target * acc
}

/// Pointwise minimum of the bound over the angle grid; ties break to the
/// lowest index.
pub fn min_over_grid(
    w: &DMatrix<Complex64>,
    positions: &PositionSet,
    scene: &RadarScene,
    grid: &AngleGrid,
) -> (f64, usize) {
    assert!(!grid.is_empty(), "angle grid must be non-empty");
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (p, &(e, a)) in grid.samples.iter().enumerate() {
        let v = radar_sinr_bound_at(w, positions, scene, e, a);
        if v < best {
            best = v;
            arg = p;
        }
    }
    (best, arg)
}

/// Monte-Carlo estimate of ζ₀² E[x^H A₀^H (Ξ+σ_r²I)^{-1} A₀ x] over
/// Gaussian symbol draws s, x = W s. Equals the bound exactly when Q=0.
pub fn mc_radar_quadform(
    w: &DMatrix<Complex64>,
    positions: &PositionSet,
    scene: &RadarScene,
    n_draws: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let a0 = sensing_steering(positions, scene.target_elev, scene.target_azim, scene.wavelength).a;
    let b = scene.clutter_noise_cov(w, positions);
    let chol = b.cholesky().expect("clutter+noise covariance is PD");
    let k = w.ncols();
    let mut acc = 0.0;
    for _ in 0..n_draws {
        let s = DVector::from_iterator(
            k,
            (0..k).map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re / 2f64.sqrt(), im / 2f64.sqrt())
            }),
        );
        let x = &a0 * (w * s);
        let solved = chol.solve(&x);
        acc += x.dotc(&solved).re;
    }
    scene.gain_target * acc / n_draws as f64
}

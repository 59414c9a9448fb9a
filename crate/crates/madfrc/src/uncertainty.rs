//! Angular uncertainty grids, convex-hull weights, and CSI error-ball
//! sampling.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Uniform inclusive grid over the angular uncertainty rectangle,
/// elevation-major, degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleGrid {
    pub samples: Vec<(f64, f64)>,
    pub step: f64,
}

impl AngleGrid {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Convex-hull weights over the grid samples: a point on the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct HullWeights {
    pub mu: Vec<f64>,
}

impl HullWeights {
    pub fn uniform(p: usize) -> Self {
        Self {
            mu: vec![1.0 / p as f64; p],
        }
    }

    pub fn simplex_violation(&self) -> f64 {
        let neg = self.mu.iter().fold(0.0f64, |a, &m| a.max(-m));
        let sum: f64 = self.mu.iter().sum();
        neg.max((sum - 1.0).abs())
    }
}

fn axis(center: f64, half: f64, step: f64) -> Vec<f64> {
    // inclusive endpoints, clipped to the valid angle range
    let lo = (center - half).max(0.0);
    let hi = (center + half).min(180.0);
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Inclusive uniform grid over [ϑ_e ± Δϑ_e/2] × [ϑ_a ± Δϑ_a/2].
/// `half_elev`/`half_azim` are the half-widths Δϑ/2 in degrees.
pub fn build_grid(
    center_elev: f64,
    center_azim: f64,
    half_elev: f64,
    half_azim: f64,
    step: f64,
) -> AngleGrid {
    assert!(step > 0.0, "grid step must be positive");
    let mut samples = Vec::new();
    for e in axis(center_elev, half_elev, step) {
        for a in axis(center_azim, half_azim, step) {
            samples.push((e, a));
        }
    }
    AngleGrid { samples, step }
}

/// CSI error draws inside the ball ‖Δh‖ ≤ ε. Half of the draws sit
/// exactly on the boundary to stress worst cases; the other half use a
/// uniform radius.
pub fn sample_csi_ball(
    dim: usize,
    eps: f64,
    n_draws: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<Complex64>> {
    (0..n_draws)
        .map(|i| {
            let mut d = DVector::from_iterator(
                dim,
                (0..dim).map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im)
                }),
            );
            let norm = d.norm();
            if norm == 0.0 {
                return DVector::zeros(dim);
            }
            let radius = if i % 2 == 0 {
                eps
            } else {
                eps * rng.random_range(0.0..1.0)
            };
            d.scale_mut(radius / norm);
            d
        })
        .collect()
}

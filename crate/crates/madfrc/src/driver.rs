//! Two-layer block-coordinate loop tying the five subproblems together.
//!
//! Inner layer: cyclic updates of the receive filter bank, the transmit
//! beamformer, the RIS phases, and the two antenna position sets at fixed
//! hull weights, until the transformed radar objective stops improving.
//! Outer layer: hull-weight refresh, until the worst grid-point radar
//! bound stops improving.

use std::time::Instant;

use conic::Tolerances;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::baselines::fpa_positions;
use crate::calculus::{ObjectiveCache, QosCache};
use crate::channel::{cascaded_channel, field_response_matrix, ris_grid, PositionSet};
use crate::metrics::{comm_sinr, min_over_grid, Beamformer, RadarScene, RisPhases};
use crate::scenario::{rng_for, ChannelRealization, RngStream, Scenario};
use crate::subproblems::{
    gamma_bar, solve_beamforming, solve_beamforming_feasibility, solve_hull_weights,
    solve_positions, solve_ris, update_lambda, RisOptions, UserChannels,
};
use crate::uncertainty::{build_grid, HullWeights};
use crate::{Error, Result};

/// All design variables of one transceiver configuration.
#[derive(Clone, Debug)]
pub struct DesignState {
    pub positions: PositionSet,
    pub w: Beamformer,
    pub v: RisPhases,
    pub lambda: DMatrix<Complex64>,
    pub mu: HullWeights,
}

impl DesignState {
    /// Nominal-channel downlink SINR of every user at this design.
    pub fn comm_sinrs(&self, s: &Scenario, real: &ChannelRealization) -> Result<Vec<f64>> {
        let ris_elems = ris_grid(s.n_ris, s.wavelength);
        let h = cascaded_channel(&self.positions.tx, &ris_elems, real, s.wavelength)?;
        Ok((0..s.n_users)
            .map(|k| comm_sinr(&self.w, &self.v, &h, &real.h_hat[k], s.noise_comm, k))
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    Stalled,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct InnerRecord {
    pub outer: usize,
    pub block: &'static str,
    /// Transformed radar objective right after the block update.
    pub gamma_bar: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct OuterRecord {
    /// Worst grid-point radar bound after the hull-weight refresh.
    pub min_grid_sinr: f64,
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub inner: Vec<InnerRecord>,
    pub outer: Vec<OuterRecord>,
    pub status: RunStatus,
    pub wall_secs: f64,
}

impl RunTrace {
    pub fn inner_iterations(&self) -> usize {
        self.inner.iter().filter(|r| r.block == "filter-bank").count()
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer.len()
    }

    pub fn final_min_grid(&self) -> f64 {
        self.outer.last().map(|r| r.min_grid_sinr).unwrap_or(f64::NAN)
    }

    /// Objective values at the start of consecutive inner cycles.
    pub fn cycle_objectives(&self) -> Vec<f64> {
        self.inner
            .iter()
            .filter(|r| r.block == "cycle")
            .map(|r| r.gamma_bar)
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub inner_max: usize,
    pub outer_max: usize,
    /// Relative stop threshold on the transformed objective.
    pub inner_tol: f64,
    /// Relative stop threshold on the worst grid-point bound.
    pub outer_tol: f64,
    /// Multiplicative QoS tightening applied while optimizing robust
    /// users; absorbs the unit-modulus projection of the RIS phases so
    /// the nominal threshold still holds at the returned design.
    pub qos_margin: f64,
    pub ris: RisOptions,
    pub tol: Tolerances,
    pub freeze_positions: bool,
    pub freeze_ris: bool,
    /// Drop the CSI error balls (design for the estimates only).
    pub ignore_csi_errors: bool,
    /// Collapse the angular uncertainty grid to the nominal target angle.
    pub point_target: bool,
    /// Replace the position update with a one-shot greedy port selection
    /// before the loop; positions stay fixed afterwards.
    pub gas_init: bool,
    pub init_positions: Option<PositionSet>,
    pub init_ris: Option<RisPhases>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            inner_max: 30,
            outer_max: 15,
            inner_tol: 1e-3,
            outer_tol: 1e-3,
            qos_margin: 5e-3,
            ris: RisOptions::default(),
            tol: Tolerances::default(),
            freeze_positions: false,
            freeze_ris: false,
            ignore_csi_errors: false,
            point_target: false,
            gas_init: false,
            init_positions: None,
            init_ris: None,
        }
    }
}

/// Ω = Σ^H F V^H: the RIS-side half of the cascade seen from the path
/// domain, independent of the transmit positions.
fn omega_matrix(
    ris_elems: &[[f64; 2]],
    real: &ChannelRealization,
    v: &RisPhases,
    wavelength: f64,
) -> DMatrix<Complex64> {
    let mut f = field_response_matrix(ris_elems, &real.ris_path_angles, wavelength);
    for (l, sigma) in real.prm_bs_ris.iter().enumerate() {
        let s = sigma.conj();
        for c in 0..f.ncols() {
            f[(l, c)] *= s;
        }
    }
    for (m, vm) in v.v.iter().enumerate() {
        let s = vm.conj();
        for l in 0..f.nrows() {
            f[(l, m)] *= s;
        }
    }
    f
}

/// Matched-filter start: each column points along the user's effective
/// channel, equal power split.
fn mrt_init(
    h_cascade: &DMatrix<Complex64>,
    v: &RisPhases,
    h_hat: &[DVector<Complex64>],
    p_t: f64,
) -> Beamformer {
    let n = h_cascade.ncols();
    let k_users = h_hat.len();
    let scale = (p_t / k_users as f64).sqrt();
    let vh = v.matrix() * h_cascade;
    let mut w = DMatrix::zeros(n, k_users);
    for k in 0..k_users {
        let mut c = vh.adjoint() * &h_hat[k];
        let nrm = c.norm();
        if nrm > 0.0 {
            c.scale_mut(scale / nrm);
        } else {
            c = DVector::zeros(n);
            c[k % n] = Complex64::new(scale, 0.0);
        }
        w.set_column(k, &c);
    }
    Beamformer { w }
}

/// Conservative per-user SINR floor over the CSI ball at fixed (w, v):
/// triangle-inequality bounds on signal and interference.
fn robust_sinr_floor(
    w: &Beamformer,
    v: &RisPhases,
    h_cascade: &DMatrix<Complex64>,
    h_hat: &[DVector<Complex64>],
    eps: &[f64],
    noise: f64,
) -> Vec<f64> {
    let vh = v.matrix() * h_cascade;
    let k_users = w.w.ncols();
    let p: Vec<DVector<Complex64>> = (0..k_users)
        .map(|j| &vh * w.w.column(j).into_owned())
        .collect();
    (0..k_users)
        .map(|k| {
            let sig = (h_hat[k].dotc(&p[k]).norm() - eps[k] * p[k].norm())
                .max(0.0)
                .powi(2);
            let mut interf = noise;
            for (j, pj) in p.iter().enumerate() {
                if j != k {
                    interf += (h_hat[k].dotc(pj).norm() + eps[k] * pj.norm()).powi(2);
                }
            }
            sig / interf
        })
        .collect()
}

/// Full two-layer optimization for one channel realization.
pub fn run_bcd(
    s: &Scenario,
    real: &ChannelRealization,
    opts: &RunOptions,
) -> Result<(DesignState, RunTrace)> {
    s.validate()?;
    let t_start = Instant::now();
    let scene = RadarScene::from_scenario(s);
    let half_width = if opts.point_target { 0.0 } else { s.angle_error / 2.0 };
    let grid = build_grid(
        s.target_elev,
        s.target_azim,
        half_width,
        half_width,
        s.grid_step,
    );
    let k_users = s.n_users;
    let eps: Vec<f64> = if opts.ignore_csi_errors {
        vec![0.0; k_users]
    } else {
        real.eps.clone()
    };
    let gamma_eff: Vec<f64> = s
        .qos
        .iter()
        .zip(&eps)
        .map(|(g, e)| if *e > 0.0 { g * (1.0 + opts.qos_margin) } else { *g })
        .collect();
    let ris_elems = ris_grid(s.n_ris, s.wavelength);
    let half = s.region_size / 2.0;

    let mut positions = match &opts.init_positions {
        Some(p) => p.clone(),
        None => fpa_positions(s),
    };
    let mut v = match &opts.init_ris {
        Some(v) => v.clone(),
        None => {
            let mut rng = rng_for(s.seed, RngStream::InitRis);
            let mut out = RisPhases {
                v: DVector::from_fn(s.n_ris, |_, _| {
                    Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
                }),
            };
            out.project();
            out
        }
    };
    let mut h_cascade = cascaded_channel(&positions.tx, &ris_elems, real, s.wavelength)?;
    let mut w = mrt_init(&h_cascade, &v, &real.h_hat, s.tx_power);
    let mut mu = HullWeights::uniform(grid.len());
    let mut lambda = update_lambda(&w.w, &positions, &mu, &grid, &scene);

    if opts.gas_init {
        positions = crate::baselines::gas_positions(
            &w.w,
            &lambda,
            &mu,
            &grid,
            &scene,
            s.n_antennas,
            half,
            s.min_spacing,
        );
        h_cascade = cascaded_channel(&positions.tx, &ris_elems, real, s.wavelength)?;
        w = mrt_init(&h_cascade, &v, &real.h_hat, s.tx_power);
    }
    let move_positions = !opts.freeze_positions && !opts.gas_init;

    let users = UserChannels {
        h_hat: &real.h_hat,
        eps: &eps,
        gamma: &gamma_eff,
        noise: s.noise_comm,
    };

    // feasibility bootstrap: the matched-filter start rarely meets the
    // QoS thresholds, so alternate RIS shaping with slack-maximizing
    // beamforming until the conservative per-user floor clears them
    for _ in 0..5 {
        let floors = robust_sinr_floor(&w, &v, &h_cascade, &real.h_hat, &eps, s.noise_comm);
        if floors.iter().zip(&gamma_eff).all(|(f, g)| f >= g) {
            break;
        }
        if !opts.freeze_ris {
            if let Ok((vn, _)) = solve_ris(&v, &w, &h_cascade, &users, &opts.ris, &opts.tol) {
                v = vn;
            }
        }
        if let Ok((wn, _)) = solve_beamforming_feasibility(
            &w, &v, &h_cascade, &users, s.tx_power, 2, &opts.tol,
        ) {
            w = wn;
        }
    }
    lambda = update_lambda(&w.w, &positions, &mu, &grid, &scene);

    let mut trace = RunTrace {
        inner: Vec::new(),
        outer: Vec::new(),
        status: RunStatus::MaxIter,
        wall_secs: 0.0,
    };
    let mut first_cycle = true;
    let mut prev_min_grid = f64::NEG_INFINITY;
    let mut stalled_out = false;

    'outer: for outer in 0..opts.outer_max {
        let mut prev_gb = gamma_bar(&w.w, &lambda, &positions, &mu, &grid, &scene);
        let mut consecutive_full_stalls = 0usize;
        for _inner in 0..opts.inner_max {
            let mut stalls = 0usize;
            let mut blocks = 0usize;

            let t = Instant::now();
            lambda = update_lambda(&w.w, &positions, &mu, &grid, &scene);
            trace.inner.push(InnerRecord {
                outer,
                block: "filter-bank",
                gamma_bar: gamma_bar(&w.w, &lambda, &positions, &mu, &grid, &scene),
                seconds: t.elapsed().as_secs_f64(),
            });

            blocks += 1;
            let t = Instant::now();
            match solve_beamforming(
                &w, &v, &h_cascade, &users, s.tx_power, &lambda, &positions, &mu, &grid, &scene,
                &opts.tol,
            ) {
                Ok(wn) => w = wn,
                Err(e @ Error::QosInfeasible { .. }) => {
                    if !first_cycle {
                        stalls += 1;
                    } else if opts.freeze_ris {
                        return Err(e);
                    } else {
                        // give the surface one shaping pass, then retry
                        let (vn, _) = solve_ris(&v, &w, &h_cascade, &users, &opts.ris, &opts.tol)?;
                        v = vn;
                        w = solve_beamforming(
                            &w, &v, &h_cascade, &users, s.tx_power, &lambda, &positions, &mu,
                            &grid, &scene, &opts.tol,
                        )?;
                    }
                }
                Err(_) => stalls += 1,
            }
            trace.inner.push(InnerRecord {
                outer,
                block: "beamforming",
                gamma_bar: gamma_bar(&w.w, &lambda, &positions, &mu, &grid, &scene),
                seconds: t.elapsed().as_secs_f64(),
            });

            if !opts.freeze_ris {
                blocks += 1;
                let t = Instant::now();
                match solve_ris(&v, &w, &h_cascade, &users, &opts.ris, &opts.tol) {
                    Ok((vn, report)) => {
                        if report.stalled {
                            stalls += 1;
                        } else {
                            v = vn;
                        }
                    }
                    Err(_) => stalls += 1,
                }
                trace.inner.push(InnerRecord {
                    outer,
                    block: "ris",
                    gamma_bar: gamma_bar(&w.w, &lambda, &positions, &mu, &grid, &scene),
                    seconds: t.elapsed().as_secs_f64(),
                });
            }

            if move_positions {
                blocks += 1;
                let t = Instant::now();
                let om = omega_matrix(&ris_elems, real, &v, s.wavelength);
                // nondimensionalize per user: the constraint is quadratic
                // in both the cascade half and the channel estimate, so
                // scaling them to unit size and dividing the noise bound
                // accordingly leaves it unchanged while keeping the
                // program entries O(1)
                let beta_om = crate::subproblems::rms_entry(&om);
                let om_s = om.unscale(beta_om);
                let alphas: Vec<f64> = (0..k_users)
                    .map(|k| real.h_hat[k].norm().max(f64::MIN_POSITIVE))
                    .collect();
                let obj = ObjectiveCache::for_tx(&w.w, &lambda, &positions.rx, &mu, &grid, &scene);
                let caches: Vec<QosCache> = (0..k_users)
                    .map(|k| {
                        QosCache::new(
                            &w.w,
                            k,
                            gamma_eff[k],
                            om_s.clone(),
                            real.h_hat[k].unscale(alphas[k]),
                            eps[k] / alphas[k],
                            real.bs_path_angles.clone(),
                            s.wavelength,
                        )
                    })
                    .collect();
                let qos_pairs: Vec<(&QosCache, f64)> = caches
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let denom = alphas[k] * alphas[k] * beta_om * beta_om;
                        (c, gamma_eff[k] * s.noise_comm / denom)
                    })
                    .collect();
                match solve_positions(
                    &positions.tx,
                    &obj,
                    &qos_pairs,
                    half,
                    s.min_spacing,
                    &opts.tol,
                ) {
                    Ok(new_tx) => {
                        if obj.value(&new_tx) + 1e-12 >= obj.value(&positions.tx) {
                            positions.tx = new_tx;
                            h_cascade =
                                cascaded_channel(&positions.tx, &ris_elems, real, s.wavelength)?;
                        } else {
                            stalls += 1;
                        }
                    }
                    Err(_) => stalls += 1,
                }
                trace.inner.push(InnerRecord {
                    outer,
                    block: "tx-positions",
                    gamma_bar: gamma_bar(&w.w, &lambda, &positions, &mu, &grid, &scene),
                    seconds: t.elapsed().as_secs_f64(),
                });

                blocks += 1;
                let t = Instant::now();
                let obj_rx =
                    ObjectiveCache::for_rx(&w.w, &lambda, &positions.tx, &mu, &grid, &scene);
                match solve_positions(&positions.rx, &obj_rx, &[], half, s.min_spacing, &opts.tol) {
                    Ok(new_rx) => {
                        if obj_rx.value(&new_rx) + 1e-12 >= obj_rx.value(&positions.rx) {
                            positions.rx = new_rx;
                        } else {
                            stalls += 1;
                        }
                    }
                    Err(_) => stalls += 1,
                }
                trace.inner.push(InnerRecord {
                    outer,
                    block: "rx-positions",
                    gamma_bar: gamma_bar(&w.w, &lambda, &positions, &mu, &grid, &scene),
                    seconds: t.elapsed().as_secs_f64(),
                });
            }

            first_cycle = false;
            let gb = gamma_bar(&w.w, &lambda, &positions, &mu, &grid, &scene);
            trace.inner.push(InnerRecord {
                outer,
                block: "cycle",
                gamma_bar: gb,
                seconds: 0.0,
            });
            if stalls > 0 && stalls == blocks {
                consecutive_full_stalls += 1;
                if consecutive_full_stalls >= 2 {
                    stalled_out = true;
                    break;
                }
            } else {
                consecutive_full_stalls = 0;
            }
            let rel = (gb - prev_gb).abs() / prev_gb.abs().max(1e-12);
            prev_gb = gb;
            if rel <= opts.inner_tol {
                break;
            }
        }

        if let Ok(new_mu) = solve_hull_weights(&w.w, &positions, &grid, &scene, &opts.tol) {
            mu = new_mu;
        }
        lambda = update_lambda(&w.w, &positions, &mu, &grid, &scene);
        let (mg, _) = min_over_grid(&w.w, &positions, &scene, &grid);
        trace.outer.push(OuterRecord {
            min_grid_sinr: mg,
            mu: mu.mu.clone(),
        });
        if stalled_out {
            trace.status = RunStatus::Stalled;
            break 'outer;
        }
        if grid.len() == 1 {
            trace.status = RunStatus::Converged;
            break 'outer;
        }
        if outer > 0 {
            let rel = (mg - prev_min_grid).abs() / prev_min_grid.abs().max(1e-12);
            if rel <= opts.outer_tol {
                trace.status = RunStatus::Converged;
                break 'outer;
            }
        }
        prev_min_grid = mg;
    }

    trace.wall_secs = t_start.elapsed().as_secs_f64();
    Ok((
        DesignState {
            positions,
            w,
            v,
            lambda,
            mu,
        },
        trace,
    ))
}

/// Same machinery with exact channel knowledge: no CSI error balls, no
/// angular uncertainty, no QoS margin.
pub fn run_perfect_csi(
    s: &Scenario,
    real: &ChannelRealization,
    base: &RunOptions,
) -> Result<(DesignState, RunTrace)> {
    let mut opts = base.clone();
    opts.ignore_csi_errors = true;
    opts.point_target = true;
    opts.qos_margin = 0.0;
    run_bcd(s, real, &opts)
}

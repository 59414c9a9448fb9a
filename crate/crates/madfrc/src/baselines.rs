//! Reference schemes the optimizer is compared against: fixed and random
//! antenna placements, random RIS phases, and greedy port selection.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::PositionSet;
use crate::metrics::{RadarScene, RisPhases};
use crate::scenario::{rng_for, RngStream, Scenario};
use crate::subproblems::gamma_bar;
use crate::uncertainty::{AngleGrid, HullWeights};
use crate::{Error, Result};

/// Near-square centered planar grid with the given spacing.
fn planar_grid(n: usize, spacing: f64) -> Vec<[f64; 2]> {
    let rows = (n as f64).sqrt().floor() as usize;
    let rows = (1..=rows).rev().find(|r| n % r == 0).unwrap_or(1);
    let cols = n / rows;
    let mut out = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            out.push([
                (c as f64 - (cols as f64 - 1.0) / 2.0) * spacing,
                (r as f64 - (rows as f64 - 1.0) / 2.0) * spacing,
            ]);
        }
    }
    out
}

/// Fixed-position array: a centered half-wavelength-style grid at the
/// minimum spacing, identical on both sides.
pub fn fpa_positions(s: &Scenario) -> PositionSet {
    let grid = planar_grid(s.n_antennas, s.min_spacing);
    PositionSet {
        tx: grid.clone(),
        rx: grid,
    }
}

fn random_side(
    n: usize,
    half: f64,
    spacing: f64,
    budget: &mut usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<[f64; 2]>> {
    loop {
        let mut placed: Vec<[f64; 2]> = Vec::with_capacity(n);
        let mut local_fail = 0usize;
        while placed.len() < n {
            if *budget == 0 {
                return Err(Error::Packing { attempts: 100_000 });
            }
            *budget -= 1;
            let cand = [rng.random_range(-half..half), rng.random_range(-half..half)];
            let ok = placed
                .iter()
                .all(|p| ((p[0] - cand[0]).powi(2) + (p[1] - cand[1]).powi(2)).sqrt() >= spacing);
            if ok {
                placed.push(cand);
                local_fail = 0;
            } else {
                local_fail += 1;
                if local_fail > 1000 {
                    break; // restart this side from scratch
                }
            }
        }
        if placed.len() == n {
            return Ok(placed);
        }
    }
}

/// Random positions with rejection sampling, independent per side.
pub fn rpa_positions(s: &Scenario, seed: u64) -> Result<PositionSet> {
    let mut rng = rng_for(seed, RngStream::RandomPositions);
    let half = s.region_size / 2.0;
    let mut budget = 100_000usize;
    let tx = random_side(s.n_antennas, half, s.min_spacing, &mut budget, &mut rng)?;
    let rx = random_side(s.n_antennas, half, s.min_spacing, &mut budget, &mut rng)?;
    Ok(PositionSet { tx, rx })
}

/// Uniform random RIS reflection phases.
pub fn random_ris(s: &Scenario, seed: u64) -> RisPhases {
    let mut rng = rng_for(seed, RngStream::RandomRis);
    RisPhases {
        v: nalgebra::DVector::from_fn(s.n_ris, |_, _| {
            Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
        }),
    }
}

/// Greedy antenna-to-port selection over a fixed candidate grid at the
/// minimum spacing. Receive side first, then transmit; one coordinate
/// pass per side, each antenna moved to the best free port. Ties break
/// to the lowest port index. Distinct grid ports are always at least one
/// spacing apart, so the spacing constraint holds by construction.
#[allow(clippy::too_many_arguments)]
pub fn gas_positions(
    w: &DMatrix<Complex64>,
    lambda: &DMatrix<Complex64>,
    mu: &HullWeights,
    grid: &AngleGrid,
    scene: &RadarScene,
    n: usize,
    region_half: f64,
    port_spacing: f64,
) -> PositionSet {
    let per_axis = (2.0 * region_half / port_spacing).floor() as usize + 1;
    let mut ports = Vec::with_capacity(per_axis * per_axis);
    for r in 0..per_axis {
        for c in 0..per_axis {
            ports.push([
                -region_half + c as f64 * port_spacing,
                -region_half + r as f64 * port_spacing,
            ]);
        }
    }
    assert!(ports.len() >= n, "port grid smaller than the array");

    let init: Vec<usize> = (0..n).collect();
    let mut assign_tx = init.clone();
    let mut assign_rx = init;
    let to_pos = |assign: &[usize]| -> Vec<[f64; 2]> {
        assign.iter().map(|&i| ports[i]).collect()
    };

    for side_is_tx in [false, true] {
        for ant in 0..n {
            let mut best_port = usize::MAX;
            let mut best_val = f64::NEG_INFINITY;
            for (pi, _) in ports.iter().enumerate() {
                let taken = |assign: &[usize]| {
                    assign.iter().enumerate().any(|(a, &p)| a != ant && p == pi)
                };
                let (tx_try, rx_try) = if side_is_tx {
                    if taken(&assign_tx) {
                        continue;
                    }
                    let mut a = assign_tx.clone();
                    a[ant] = pi;
                    (a, assign_rx.clone())
                } else {
                    if taken(&assign_rx) {
                        continue;
                    }
                    let mut a = assign_rx.clone();
                    a[ant] = pi;
                    (assign_tx.clone(), a)
                };
                let positions = PositionSet {
                    tx: to_pos(&tx_try),
                    rx: to_pos(&rx_try),
                };
                let val = gamma_bar(w, lambda, &positions, mu, grid, scene);
                if val > best_val + 1e-15 {
                    best_val = val;
                    best_port = pi;
                }
            }
            if best_port != usize::MAX {
                if side_is_tx {
                    assign_tx[ant] = best_port;
                } else {
                    assign_rx[ant] = best_port;
                }
            }
        }
    }
    PositionSet {
        tx: to_pos(&assign_tx),
        rx: to_pos(&assign_rx),
    }
}

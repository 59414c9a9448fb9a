//! Far-field field-response machinery: propagation differences,
//! field-response vectors/matrices, the cascaded BS-RIS-user channel, and
//! sensing steering matrices.
//!
//! All public functions take angles in degrees and convert to radians
//! internally.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::scenario::ChannelRealization;
use crate::{Error, Result};

/// Transmit and receive antenna positions, meters, one row per antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionSet {
    pub tx: Vec<[f64; 2]>,
    pub rx: Vec<[f64; 2]>,
}

impl PositionSet {
    pub fn min_pairwise_distance(set: &[[f64; 2]]) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                let d = ((set[i][0] - set[j][0]).powi(2) + (set[i][1] - set[j][1]).powi(2)).sqrt();
                min = min.min(d);
            }
        }
        min
    }

    pub fn within_box(set: &[[f64; 2]], half: f64, tol: f64) -> bool {
        set.iter()
            .all(|p| p[0].abs() <= half + tol && p[1].abs() <= half + tol)
    }
}

/// Rank-1 sensing response matrix A = a^r (a^t)^H for one angle pair.
#[derive(Clone, Debug)]
pub struct SteeringMatrix {
    pub a: DMatrix<Complex64>,
    pub elev: f64,
    pub azim: f64,
}

/// Signal propagation difference relative to the reference origin,
/// meters: x sinθ_e cosθ_a + y cosθ_e.
pub fn propagation_diff(pos: [f64; 2], elev_deg: f64, azim_deg: f64) -> f64 {
    let e = elev_deg.to_radians();
    let a = azim_deg.to_radians();
    pos[0] * e.sin() * a.cos() + pos[1] * e.cos()
}

/// Field response vector of one position toward a list of path angles.
pub fn field_response_vector(
    pos: [f64; 2],
    angles: &[(f64, f64)],
    wavelength: f64,
) -> DVector<Complex64> {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    DVector::from_iterator(
        angles.len(),
        angles
            .iter()
            .map(|&(e, a)| Complex64::from_polar(1.0, k * propagation_diff(pos, e, a))),
    )
}

/// L×P matrix with one field-response column per position.
pub fn field_response_matrix(
    positions: &[[f64; 2]],
    angles: &[(f64, f64)],
    wavelength: f64,
) -> DMatrix<Complex64> {
    let l = angles.len();
    let mut m = DMatrix::zeros(l, positions.len());
    for (c, p) in positions.iter().enumerate() {
        m.set_column(c, &field_response_vector(*p, angles, wavelength));
    }
    m
}

/// Fixed RIS element layout: near-square uniform planar grid with
/// half-wavelength spacing, centered at the origin of the RIS plane.
pub fn ris_grid(m: usize, wavelength: f64) -> Vec<[f64; 2]> {
    let rows = (m as f64).sqrt().floor() as usize;
    let rows = (1..=rows).rev().find(|r| m % r == 0).unwrap_or(1);
    let cols = m / rows;
    let d = wavelength / 2.0;
    let mut out = Vec::with_capacity(m);
    for r in 0..rows {
        for c in 0..cols {
            out.push([
                (c as f64 - (cols as f64 - 1.0) / 2.0) * d,
                (r as f64 - (rows as f64 - 1.0) / 2.0) * d,
            ]);
        }
    }
    out
}

/// Cascaded BS-RIS channel H(t̃) = F^H Σ G, of size M×N.
pub fn cascaded_channel(
    tx: &[[f64; 2]],
    ris_elems: &[[f64; 2]],
    realization: &ChannelRealization,
    wavelength: f64,
) -> Result<DMatrix<Complex64>> {
    let l = realization.prm_bs_ris.len();
    if realization.bs_path_angles.len() != l || realization.ris_path_angles.len() != l {
        return Err(Error::Dimension(format!(
            "PRM has {l} paths but angle lists disagree"
        )));
    }
    let g = field_response_matrix(tx, &realization.bs_path_angles, wavelength);
    let f = field_response_matrix(ris_elems, &realization.ris_path_angles, wavelength);
    let mut sg = g;
    for (r, sigma) in realization.prm_bs_ris.iter().enumerate() {
        for c in 0..sg.ncols() {
            sg[(r, c)] *= sigma;
        }
    }
    Ok(f.adjoint() * sg)
}

/// Steering vector over one position set at a single angle pair.
pub fn steering_vector(
    positions: &[[f64; 2]],
    elev_deg: f64,
    azim_deg: f64,
    wavelength: f64,
) -> DVector<Complex64> {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    DVector::from_iterator(
        positions.len(),
        positions
            .iter()
            .map(|&p| Complex64::from_polar(1.0, k * propagation_diff(p, elev_deg, azim_deg))),
    )
}

/// Rank-1 sensing response A = a^r (a^t)^H for the angle pair.
pub fn sensing_steering(
    positions: &PositionSet,
    elev_deg: f64,
    azim_deg: f64,
    wavelength: f64,
) -> SteeringMatrix {
    let at = steering_vector(&positions.tx, elev_deg, azim_deg, wavelength);
    let ar = steering_vector(&positions.rx, elev_deg, azim_deg, wavelength);
    SteeringMatrix {
        a: &ar * at.adjoint(),
        elev: elev_deg,
        azim: azim_deg,
    }
}

use madfrc::baselines::fpa_positions;
use madfrc::channel::{cascaded_channel, ris_grid};
use madfrc::metrics::{comm_sinr, RadarScene, RisPhases, Beamformer};
use madfrc::scenario::{linear_to_db, rng_for, RngStream, Scenario};
use madfrc::subproblems::{solve_beamforming, solve_beamforming_feasibility, solve_ris, update_lambda, RisOptions, UserChannels};
use madfrc::uncertainty::{build_grid, HullWeights};
use conic::Tolerances;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

fn floors(w: &Beamformer, v: &RisPhases, h: &DMatrix<Complex64>, hh: &[DVector<Complex64>], eps: &[f64], noise: f64) -> Vec<f64> {
    let vh = v.matrix() * h;
    let ku = w.w.ncols();
    let p: Vec<DVector<Complex64>> = (0..ku).map(|j| &vh * w.w.column(j).into_owned()).collect();
    (0..ku).map(|k| {
        let sig = (hh[k].dotc(&p[k]).norm() - eps[k]*p[k].norm()).max(0.0).powi(2);
        let mut it = noise;
        for (j, pj) in p.iter().enumerate() { if j != k { it += (hh[k].dotc(pj).norm() + eps[k]*pj.norm()).powi(2); } }
        sig / it
    }).collect()
}

fn main() {
    let mut s = Scenario::default();
    if let Some(dbm) = std::env::var("PROBE_POWER_DBM").ok().and_then(|x| x.parse::<f64>().ok()) {
        s.tx_power = madfrc::scenario::dbm_to_watts(dbm);
    }
    let real = s.generate().unwrap();
    let scene = RadarScene::from_scenario(&s);
    let grid = build_grid(s.target_elev, s.target_azim, s.angle_error/2.0, s.angle_error/2.0, s.grid_step);
    let ris_elems = ris_grid(s.n_ris, s.wavelength);
    let positions = fpa_positions(&s);
    let mut rng = rng_for(s.seed, RngStream::InitRis);
    let mut v = RisPhases { v: DVector::from_fn(s.n_ris, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))) };
    let h = cascaded_channel(&positions.tx, &ris_elems, &real, s.wavelength).unwrap();
    let vh = v.matrix() * &h;
    let scale = (s.tx_power / s.n_users as f64).sqrt();
    let mut w0 = DMatrix::zeros(s.n_antennas, s.n_users);
    for k in 0..s.n_users {
        let mut c = vh.adjoint() * &real.h_hat[k];
        let n = c.norm(); c.scale_mut(scale / n);
        w0.set_column(k, &c);
    }
    let mut w = Beamformer { w: w0 };
    let gamma: Vec<f64> = s.qos.iter().map(|g| g * 1.005).collect();
    let users = UserChannels { h_hat: &real.h_hat, eps: &real.eps, gamma: &gamma, noise: s.noise_comm };
    let tol = Tolerances::default();
    println!("floors init: {:?}", floors(&w, &v, &h, &real.h_hat, &real.eps, s.noise_comm).iter().map(|x| linear_to_db(*x)).collect::<Vec<_>>());
    let ris_opts = RisOptions {
        rho0_per_element: std::env::var("PROBE_RHO").ok().and_then(|s| s.parse().ok()).unwrap_or(0.05),
        inner_max: std::env::var("PROBE_INNER").ok().and_then(|s| s.parse().ok()).unwrap_or(4),
        outer_max: std::env::var("PROBE_OUTER").ok().and_then(|s| s.parse().ok()).unwrap_or(6),
        ..RisOptions::default()
    };
    let rounds: usize = std::env::var("PROBE_ROUNDS").ok().and_then(|s| s.parse().ok()).unwrap_or(5);
    for round in 0..rounds {
        match solve_ris(&v, &w, &h, &users, &ris_opts, &tol) {
            Ok((vn, rep)) => { println!("round {round}: ris eta trace {:?} stalled {} residual {:.3e}", rep.eta_trace.iter().map(|e| linear_to_db(*e)).collect::<Vec<_>>(), rep.stalled, rep.unit_residual); v = vn; }
            Err(e) => println!("round {round}: ris failed {e}"),
        }
        let feas_rounds: usize = std::env::var("PROBE_FEAS").ok().and_then(|s| s.parse().ok()).unwrap_or(2);
        match solve_beamforming_feasibility(&w, &v, &h, &users, s.tx_power, feas_rounds, &tol) {
            Ok((wn, sl)) => { println!("round {round}: feas slack {sl:.4e}, power {:.3}", wn.power()); w = wn; }
            Err(e) => println!("round {round}: feas failed {e}"),
        }
        let f = floors(&w, &v, &h, &real.h_hat, &real.eps, s.noise_comm);
        println!("round {round}: floors {:?}", f.iter().map(|x| linear_to_db(*x)).collect::<Vec<_>>());
        println!("round {round}: nominal {:?}", (0..s.n_users).map(|k| linear_to_db(comm_sinr(&w, &v, &h, &real.h_hat[k], s.noise_comm, k))).collect::<Vec<_>>());
        if f.iter().zip(&gamma).all(|(a, g)| a >= g) { println!("bootstrap done"); break; }
    }
    let mu = HullWeights::uniform(grid.len());
    let lambda = update_lambda(&w.w, &positions, &mu, &grid, &scene);
    match solve_beamforming(&w, &v, &h, &users, s.tx_power, &lambda, &positions, &mu, &grid, &scene, &tol) {
        Ok(wn) => {
            println!("main W OK, power {:.4}", wn.power());
            for k in 0..s.n_users {
                println!("post sinr user {k}: {:.2} dB", linear_to_db(comm_sinr(&wn, &v, &h, &real.h_hat[k], s.noise_comm, k)));
            }
        }
        Err(e) => println!("main W failed: {e}"),
    }
}

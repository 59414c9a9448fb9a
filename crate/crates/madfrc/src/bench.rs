//! Experiment harness: scheme dispatch, axis sweeps over paired seeds,
//! outage estimation, and CSV/JSON output.

use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::baselines::{fpa_positions, random_ris, rpa_positions};
use crate::driver::{run_bcd, run_perfect_csi, DesignState, RunOptions, RunStatus, RunTrace};
use crate::metrics::{min_over_grid, RadarScene};
use crate::scenario::{linear_to_db, rng_for, ChannelRealization, RngStream, Scenario};
use crate::uncertainty::{build_grid, sample_csi_ball};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Proposed,
    PerfectCsi,
    NonRobust,
    Fpa,
    Rpa,
    RandomRis,
    Gas,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Proposed,
        Scheme::PerfectCsi,
        Scheme::NonRobust,
        Scheme::Fpa,
        Scheme::Rpa,
        Scheme::RandomRis,
        Scheme::Gas,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::PerfectCsi => "perfect-csi",
            Scheme::NonRobust => "non-robust",
            Scheme::Fpa => "fpa",
            Scheme::Rpa => "rpa",
            Scheme::RandomRis => "random-ris",
            Scheme::Gas => "gas",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Transmit power budget, values in dBm.
    TxPowerDbm,
    /// Movable region side length, values in wavelengths.
    RegionWavelengths,
    /// QoS threshold, values in dB, applied to every user.
    QosDb,
    /// Full width of the angular uncertainty interval, degrees.
    AngleErrorDeg,
    /// CSI error level τ.
    CsiLevel,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::TxPowerDbm => "tx-power-dbm",
            Axis::RegionWavelengths => "region-wavelengths",
            Axis::QosDb => "qos-db",
            Axis::AngleErrorDeg => "angle-error-deg",
            Axis::CsiLevel => "csi-level",
        }
    }

    pub fn apply(&self, s: &mut Scenario, value: f64) {
        match self {
            Axis::TxPowerDbm => s.tx_power = crate::scenario::dbm_to_watts(value),
            Axis::RegionWavelengths => s.region_size = value * s.wavelength,
            Axis::QosDb => {
                s.qos = vec![crate::scenario::db_to_linear(value); s.n_users];
            }
            Axis::AngleErrorDeg => s.angle_error = value,
            Axis::CsiLevel => s.csi_level = value,
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Axis::TxPowerDbm,
            Axis::RegionWavelengths,
            Axis::QosDb,
            Axis::AngleErrorDeg,
            Axis::CsiLevel,
        ]
        .iter()
        .copied()
        .find(|a| a.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown axis {s:?}")))
    }
}

/// One sweep: vary a single scenario field over paired seeds and schemes.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub n_seeds: usize,
}

/// One (scheme, axis value, seed) cell.
#[derive(Clone, Debug)]
pub struct ResultRecord {
    pub scheme: &'static str,
    pub axis: &'static str,
    pub axis_value: f64,
    pub seed: u64,
    /// Worst radar bound over the angular grid, dB.
    pub min_grid_sinr_db: f64,
    /// Per-user downlink SINR at the channel estimate, dB.
    pub comm_sinr_db: Vec<f64>,
    pub outage: Option<f64>,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub wall_secs: f64,
    pub status: String,
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Converged => "converged",
        RunStatus::Stalled => "stalled",
        RunStatus::MaxIter => "max-iter",
    }
}

/// Solve one cell. The realization is shared across schemes at the same
/// (axis value, seed) so comparisons are paired.
pub fn run_cell(
    scheme: Scheme,
    s: &Scenario,
    real: &ChannelRealization,
    base: &RunOptions,
) -> Result<(DesignState, RunTrace)> {
    let mut opts = base.clone();
    match scheme {
        Scheme::Proposed => run_bcd(s, real, &opts),
        Scheme::PerfectCsi => run_perfect_csi(s, real, base),
        Scheme::NonRobust => {
            opts.ignore_csi_errors = true;
            opts.qos_margin = 0.0;
            run_bcd(s, real, &opts)
        }
        Scheme::Fpa => {
            opts.freeze_positions = true;
            opts.init_positions = Some(fpa_positions(s));
            run_bcd(s, real, &opts)
        }
        Scheme::Rpa => {
            opts.freeze_positions = true;
            opts.init_positions = Some(rpa_positions(s, s.seed)?);
            run_bcd(s, real, &opts)
        }
        Scheme::RandomRis => {
            opts.freeze_ris = true;
            opts.init_ris = Some(random_ris(s, s.seed));
            run_bcd(s, real, &opts)
        }
        Scheme::Gas => {
            opts.gas_init = true;
            run_bcd(s, real, &opts)
        }
    }
}

/// Worst grid-point radar bound of a finished design, for the scheme's
/// own uncertainty model (single point for the perfect-CSI reference).
pub fn report_min_grid(scheme: Scheme, s: &Scenario, state: &DesignState) -> f64 {
    let scene = RadarScene::from_scenario(s);
    let half = if scheme == Scheme::PerfectCsi {
        0.0
    } else {
        s.angle_error / 2.0
    };
    let grid = build_grid(s.target_elev, s.target_azim, half, half, s.grid_step);
    min_over_grid(&state.w.w, &state.positions, &scene, &grid).0
}

/// Fraction of CSI-ball channel draws at which some user misses its QoS
/// threshold.
pub fn outage_probability(
    state: &DesignState,
    s: &Scenario,
    real: &ChannelRealization,
    n_draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let sinr_nominal_check = state.comm_sinrs(s, real)?; // also validates dims
    debug_assert_eq!(sinr_nominal_check.len(), s.n_users);
    let ris_elems = crate::channel::ris_grid(s.n_ris, s.wavelength);
    let h = crate::channel::cascaded_channel(&state.positions.tx, &ris_elems, real, s.wavelength)?;
    let draws_per_user: Vec<Vec<nalgebra::DVector<num_complex::Complex64>>> = (0..s.n_users)
        .map(|k| sample_csi_ball(s.n_ris, real.eps[k], n_draws, rng))
        .collect();
    let mut misses = 0usize;
    for d in 0..n_draws {
        let mut any_miss = false;
        for k in 0..s.n_users {
            let hk = &real.h_hat[k] + &draws_per_user[k][d];
            let sinr = crate::metrics::comm_sinr(&state.w, &state.v, &h, &hk, s.noise_comm, k);
            if sinr < s.qos[k] * (1.0 - 1e-9) {
                any_miss = true;
                break;
            }
        }
        if any_miss {
            misses += 1;
        }
    }
    Ok(misses as f64 / n_draws as f64)
}

/// Run the whole sweep. Per-cell failures become failure rows instead of
/// aborting; the returned flag says whether any cell failed.
pub fn run_experiment(
    base: &Scenario,
    spec: &ExperimentSpec,
    opts: &RunOptions,
    outage_draws: Option<usize>,
) -> Result<(Vec<ResultRecord>, bool)> {
    let mut records = Vec::new();
    let mut any_failure = false;
    for &value in &spec.values {
        let mut s = base.clone();
        spec.axis.apply(&mut s, value);
        s.validate()?;
        for i in 0..spec.n_seeds {
            s.seed = base.seed + i as u64;
            let real = s.generate()?;
            for &scheme in &spec.schemes {
                let mut rec = ResultRecord {
                    scheme: scheme.name(),
                    axis: spec.axis.name(),
                    axis_value: value,
                    seed: s.seed,
                    min_grid_sinr_db: f64::NAN,
                    comm_sinr_db: Vec::new(),
                    outage: None,
                    inner_iters: 0,
                    outer_iters: 0,
                    wall_secs: 0.0,
                    status: String::new(),
                };
                match run_cell(scheme, &s, &real, opts) {
                    Ok((state, trace)) => {
                        rec.min_grid_sinr_db = linear_to_db(report_min_grid(scheme, &s, &state));
                        rec.comm_sinr_db = state
                            .comm_sinrs(&s, &real)
                            .map(|v| v.iter().map(|x| linear_to_db(*x)).collect())
                            .unwrap_or_default();
                        rec.inner_iters = trace.inner_iterations();
                        rec.outer_iters = trace.outer_iterations();
                        rec.wall_secs = trace.wall_secs;
                        rec.status = status_name(trace.status).to_string();
                        if let Some(n_draws) = outage_draws {
                            let mut rng = rng_for(s.seed, RngStream::CsiBall);
                            match outage_probability(&state, &s, &real, n_draws, &mut rng) {
                                Ok(p) => rec.outage = Some(p),
                                Err(e) => {
                                    any_failure = true;
                                    rec.status = format!("failed: {e}");
                                }
                            }
                        }
                    }
                    Err(e) => {
                        any_failure = true;
                        rec.status = format!("failed: {e}");
                    }
                }
                records.push(rec);
            }
        }
    }
    Ok((records, any_failure))
}

/// Write records as CSV; per-user SINRs are semicolon-joined in one field.
pub fn write_csv<W: std::io::Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "scheme",
        "axis",
        "axis_value",
        "seed",
        "min_grid_sinr_db",
        "comm_sinr_db",
        "outage",
        "inner_iters",
        "outer_iters",
        "wall_secs",
        "status",
    ])
    .map_err(csv_err)?;
    for r in records {
        let comm = r
            .comm_sinr_db
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(";");
        wtr.write_record([
            r.scheme.to_string(),
            r.axis.to_string(),
            format!("{}", r.axis_value),
            format!("{}", r.seed),
            format!("{:.6}", r.min_grid_sinr_db),
            comm,
            r.outage.map(|p| format!("{p:.6}")).unwrap_or_default(),
            format!("{}", r.inner_iters),
            format!("{}", r.outer_iters),
            format!("{:.3}", r.wall_secs),
            r.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv write failed: {e}"))
}

/// CSV plus a JSON sidecar holding the fully resolved scenario.
pub fn write_outputs(records: &[ResultRecord], scenario: &Scenario, out: &Path) -> Result<()> {
    let f = std::fs::File::create(out)?;
    write_csv(records, f)?;
    let sidecar = out.with_extension("json");
    let mut f = std::fs::File::create(sidecar)?;
    let text = serde_json::to_string_pretty(scenario)
        .map_err(|e| Error::Config(format!("scenario serialization failed: {e}")))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

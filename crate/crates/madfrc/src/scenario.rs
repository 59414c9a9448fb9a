//! Experiment configuration, unit conversions, and seeded generation of
//! channel realizations.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Dedicated RNG sub-streams so that trials and modules draw from
/// independent sequences of the same named generator.
#[derive(Clone, Copy, Debug)]
pub enum RngStream {
    Channel,
    RandomPositions,
    RandomRis,
    InitRis,
    CsiBall,
    MonteCarlo,
}

pub fn rng_for(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64 + 1);
    rng
}

/// Full experiment configuration in SI units (powers in watts, gains and
/// ratios linear, angles in degrees, lengths in meters).
#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    pub n_antennas: usize,
    pub n_ris: usize,
    pub n_users: usize,
    pub n_clutter: usize,
    pub n_paths: usize,
    pub wavelength: f64,
    pub region_size: f64,
    pub min_spacing: f64,
    pub tx_power: f64,
    pub noise_comm: f64,
    pub noise_radar: f64,
    /// QoS threshold per user, linear ratio.
    pub qos: Vec<f64>,
    /// CSI error level τ: ε_k = τ‖ĥ_k‖.
    pub csi_level: f64,
    /// Full width Δϑ of the angular uncertainty interval, degrees.
    pub angle_error: f64,
    pub target_elev: f64,
    pub target_azim: f64,
    pub clutter_angles: Vec<(f64, f64)>,
    /// Target reflection gain ζ₀².
    pub gain_target: f64,
    /// Clutter gains ζ_q².
    pub gain_clutter: Vec<f64>,
    pub bs_pos: [f64; 2],
    pub ris_pos: [f64; 2],
    pub user_center: [f64; 2],
    pub user_radius: f64,
    /// Path loss at 1 m, linear.
    pub pathloss_c0: f64,
    pub alpha_bs_ris: f64,
    pub alpha_ris_user: f64,
    /// Angular grid step, degrees.
    pub grid_step: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        let lambda = 0.1;
        Self {
            n_antennas: 4,
            n_ris: 16,
            n_users: 3,
            n_clutter: 2,
            n_paths: 8,
            wavelength: lambda,
            region_size: 2.0 * lambda,
            min_spacing: lambda / 2.0,
            tx_power: dbm_to_watts(40.0),
            noise_comm: dbm_to_watts(-80.0),
            noise_radar: dbm_to_watts(-80.0),
            qos: vec![db_to_linear(10.0); 3],
            csi_level: 0.02,
            angle_error: 4.0,
            target_elev: 30.0,
            target_azim: 45.0,
            clutter_angles: vec![(120.0, 90.0), (135.0, 60.0)],
            gain_target: 1.0,
            gain_clutter: vec![1.0, 1.0],
            bs_pos: [0.0, 0.0],
            ris_pos: [30.0, 5.0],
            user_center: [30.0, 0.0],
            user_radius: 3.0,
            pathloss_c0: db_to_linear(-30.0),
            alpha_bs_ris: 2.4,
            alpha_ris_user: 2.8,
            grid_step: 1.0,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_antennas < 1 || self.n_ris < 1 || self.n_users < 1 || self.n_paths < 1 {
            return bad("N, M, K, L must all be at least 1");
        }
        if self.tx_power <= 0.0 {
            return bad("tx_power must be positive");
        }
        if self.min_spacing > self.region_size && self.n_antennas > 1 {
            return bad("min_spacing exceeds region_size; no feasible placement");
        }
        if !(0.0..1.0).contains(&self.csi_level) {
            return bad("csi_level must lie in [0, 1)");
        }
        if self.qos.len() != self.n_users {
            return bad("qos must list one threshold per user");
        }
        if self.clutter_angles.len() != self.n_clutter || self.gain_clutter.len() != self.n_clutter
        {
            return bad("clutter_angles and gain_clutter must have n_clutter entries");
        }
        let angle_ok = |a: f64| (0.0..=180.0).contains(&a);
        let target = (self.target_elev, self.target_azim);
        let pairs = self.clutter_angles.iter().chain(std::iter::once(&target));
        for &(e, a) in pairs {
            if !angle_ok(e) || !angle_ok(a) {
                return bad("all angles must lie in [0, 180] degrees");
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let s = raw.resolve()?;
        s.validate()?;
        Ok(s)
    }

    /// Seeded channel generation. Deterministic for a fixed seed.
    pub fn generate(&self) -> Result<ChannelRealization> {
        self.validate()?;
        let mut rng = rng_for(self.seed, RngStream::Channel);
        let l = self.n_paths;
        let k_users = self.n_users;

        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let d_bs_ris = dist(self.bs_pos, self.ris_pos);
        if d_bs_ris == 0.0 {
            return Err(Error::Config("BS and RIS positions coincide".into()));
        }
        let c2_bs_ris = self.pathloss_c0 * d_bs_ris.powf(-self.alpha_bs_ris);

        let mut user_pos = Vec::with_capacity(k_users);
        for _ in 0..k_users {
            // uniform over the disk
            loop {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                if x * x + y * y <= 1.0 {
                    user_pos.push([
                        self.user_center[0] + self.user_radius * x,
                        self.user_center[1] + self.user_radius * y,
                    ]);
                    break;
                }
            }
        }

        let draw_angles = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
            (0..l)
                .map(|_| (rng.random_range(0.0..180.0), rng.random_range(0.0..180.0)))
                .collect()
        };
        let draw_prm = |rng: &mut ChaCha8Rng, c2: f64| -> DVector<Complex64> {
            let sd = (c2 / (2.0 * l as f64)).sqrt();
            DVector::from_iterator(
                l,
                (0..l).map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(sd * re, sd * im)
                }),
            )
        };

        let bs_path_angles = draw_angles(&mut rng);
        let ris_path_angles = draw_angles(&mut rng);
        let prm_bs_ris = draw_prm(&mut rng, c2_bs_ris);

        let mut user_path_angles = Vec::with_capacity(k_users);
        let mut prm_user = Vec::with_capacity(k_users);
        let mut h_hat = Vec::with_capacity(k_users);
        let mut eps = Vec::with_capacity(k_users);
        let ris_elems = crate::channel::ris_grid(self.n_ris, self.wavelength);
        for pos in &user_pos {
            let d = dist(self.ris_pos, *pos);
            if d == 0.0 {
                return Err(Error::Config("user placed exactly at the RIS".into()));
            }
            let c2 = self.pathloss_c0 * d.powf(-self.alpha_ris_user);
            let angles = draw_angles(&mut rng);
            let prm = draw_prm(&mut rng, c2);
            // user-side receive response folded into the all-ones vector:
            // ĥ = F_k^H Σ_k 1
            let fk = crate::channel::field_response_matrix(&ris_elems, &angles, self.wavelength);
            let ones = DVector::from_element(l, Complex64::new(1.0, 0.0));
            let h: DVector<Complex64> = fk.adjoint() * DVector::from_iterator(
                l,
                prm.iter().zip(ones.iter()).map(|(a, b)| a * b),
            );
            let e = self.csi_level * h.norm();
            user_path_angles.push(angles);
            prm_user.push(prm);
            h_hat.push(h);
            eps.push(e);
        }

        Ok(ChannelRealization {
            prm_bs_ris,
            prm_user,
            bs_path_angles,
            ris_path_angles,
            user_path_angles,
            user_pos,
            h_hat,
            eps,
        })
    }
}

/// One seeded draw of every random quantity the optimizer treats as given.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// Diagonal of the BS-RIS path response matrix Σ (length L).
    pub prm_bs_ris: DVector<Complex64>,
    /// Diagonal of each user's RIS-user path response matrix Σ_k.
    pub prm_user: Vec<DVector<Complex64>>,
    /// Departure angles at the BS toward the RIS, degrees.
    pub bs_path_angles: Vec<(f64, f64)>,
    /// Arrival angles at the RIS from the BS, degrees.
    pub ris_path_angles: Vec<(f64, f64)>,
    /// Departure angles at the RIS toward each user, degrees.
    pub user_path_angles: Vec<Vec<(f64, f64)>>,
    pub user_pos: Vec<[f64; 2]>,
    /// Estimated RIS-user channels ĥ_k (length M).
    pub h_hat: Vec<DVector<Complex64>>,
    /// CSI error radii ε_k = τ‖ĥ_k‖.
    pub eps: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Num(f64),
    Text(String),
}

impl Quantity {
    /// Interpret as a power in watts ("dBm"/"W" suffixes) or a plain
    /// linear ratio ("dB" suffix).
    fn to_linear(&self) -> Result<f64> {
        match self {
            Quantity::Num(v) => Ok(*v),
            Quantity::Text(s) => {
                let s = s.trim();
                if let Some(v) = s.strip_suffix("dBm") {
                    parse_num(v).map(dbm_to_watts)
                } else if let Some(v) = s.strip_suffix("dB") {
                    parse_num(v).map(db_to_linear)
                } else if let Some(v) = s.strip_suffix('W') {
                    parse_num(v)
                } else {
                    parse_num(s)
                }
            }
        }
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse quantity {s:?}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    array: Option<RawArray>,
    geometry: Option<RawGeometry>,
    power: Option<RawPower>,
    robustness: Option<RawRobustness>,
    sensing: Option<RawSensing>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    n_antennas: Option<usize>,
    n_ris: Option<usize>,
    n_users: Option<usize>,
    n_clutter: Option<usize>,
    n_paths: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    wavelength: Option<f64>,
    region_size: Option<f64>,
    min_spacing: Option<f64>,
    bs_pos: Option<[f64; 2]>,
    ris_pos: Option<[f64; 2]>,
    user_center: Option<[f64; 2]>,
    user_radius: Option<f64>,
    pathloss_c0: Option<Quantity>,
    alpha_bs_ris: Option<f64>,
    alpha_ris_user: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    tx_power: Option<Quantity>,
    noise_comm: Option<Quantity>,
    noise_radar: Option<Quantity>,
    qos: Option<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobustness {
    csi_level: Option<f64>,
    angle_error: Option<f64>,
    grid_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensing {
    target_elev: Option<f64>,
    target_azim: Option<f64>,
    clutter_angles: Option<Vec<[f64; 2]>>,
    gain_target: Option<Quantity>,
    gain_clutter: Option<Vec<f64>>,
}

impl RawConfig {
    fn resolve(self) -> Result<Scenario> {
        let mut s = Scenario::default();
        let a = self.array.unwrap_or_default();
        if let Some(v) = a.n_antennas {
            s.n_antennas = v;
        }
        if let Some(v) = a.n_ris {
            s.n_ris = v;
        }
        if let Some(v) = a.n_users {
            s.n_users = v;
            s.qos = vec![s.qos[0]; v];
        }
        if let Some(v) = a.n_clutter {
            s.n_clutter = v;
            s.clutter_angles.resize(v, (90.0, 90.0));
            s.gain_clutter.resize(v, 1.0);
        }
        if let Some(v) = a.n_paths {
            s.n_paths = v;
        }
        let g = self.geometry.unwrap_or_default();
        if let Some(v) = g.wavelength {
            s.wavelength = v;
            s.region_size = 2.0 * v;
            s.min_spacing = v / 2.0;
        }
        if let Some(v) = g.region_size {
            s.region_size = v;
        }
        if let Some(v) = g.min_spacing {
            s.min_spacing = v;
        }
        if let Some(v) = g.bs_pos {
            s.bs_pos = v;
        }
        if let Some(v) = g.ris_pos {
            s.ris_pos = v;
        }
        if let Some(v) = g.user_center {
            s.user_center = v;
        }
        if let Some(v) = g.user_radius {
            s.user_radius = v;
        }
        if let Some(v) = g.pathloss_c0 {
            s.pathloss_c0 = v.to_linear()?;
        }
        if let Some(v) = g.alpha_bs_ris {
            s.alpha_bs_ris = v;
        }
        if let Some(v) = g.alpha_ris_user {
            s.alpha_ris_user = v;
        }
        let p = self.power.unwrap_or_default();
        if let Some(v) = p.tx_power {
            s.tx_power = v.to_linear()?;
        }
        if let Some(v) = p.noise_comm {
            s.noise_comm = v.to_linear()?;
        }
        if let Some(v) = p.noise_radar {
            s.noise_radar = v.to_linear()?;
        }
        if let Some(v) = p.qos {
            s.qos = vec![v.to_linear()?; s.n_users];
        }
        let r = self.robustness.unwrap_or_default();
        if let Some(v) = r.csi_level {
            s.csi_level = v;
        }
        if let Some(v) = r.angle_error {
            s.angle_error = v;
        }
        if let Some(v) = r.grid_step {
            s.grid_step = v;
        }
        let t = self.sensing.unwrap_or_default();
        if let Some(v) = t.target_elev {
            s.target_elev = v;
        }
        if let Some(v) = t.target_azim {
            s.target_azim = v;
        }
        if let Some(v) = t.clutter_angles {
            s.clutter_angles = v.iter().map(|p| (p[0], p[1])).collect();
            s.n_clutter = s.clutter_angles.len();
            s.gain_clutter.resize(s.n_clutter, 1.0);
        }
        if let Some(v) = t.gain_target {
            s.gain_target = v.to_linear()?;
        }
        if let Some(v) = t.gain_clutter {
            s.gain_clutter = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Ok(env_seed) = std::env::var("MADFRC_SEED") {
            s.seed = env_seed
                .parse()
                .map_err(|_| Error::Config("MADFRC_SEED must be an integer".into()))?;
        }
        Ok(s)
    }
}

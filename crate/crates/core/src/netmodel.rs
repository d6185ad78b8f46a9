//! Multicell network topology, user pairing, channel generation and
//! scenario configuration.
//!
//! A scenario has `N` cells. Each base station (BS) carries `N_t` antennas
//! and serves `2K` single-antenna users: `K` cell-center ("near") users and
//! `K` cell-edge ("far") users. Every near user is randomly paired with a
//! far user of the same cell to form a NOMA cluster.
//!
//! Channels combine distance pathloss `30 + 10 β log10(d)` dB with small
//! scale fading: Rician (fixed K-factor, uniformly random per-antenna LOS
//! phase) on the serving-BS → own-near-user links, normalized Rayleigh on
//! everything else. All draws come from a seeded RNG; the same seed always
//! reproduces the same instance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::units;

/// Version tag for the instance dump format.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Topology and fading configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_cells: usize,
    pub pairs_per_cell: usize,
    pub antennas: usize,
    pub cell_radius_m: f64,
    /// [min, max] distance of near users from their serving BS.
    pub near_distance_m: (f64, f64),
    /// [min, max] distance of far users from their serving BS.
    pub far_distance_m: (f64, f64),
    /// Pathloss exponent on serving-BS → own-near-user links.
    pub pathloss_exp_near: f64,
    /// Pathloss exponent on all remaining links.
    pub pathloss_exp_far: f64,
    pub rician_factor_db: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub rng_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_cells: 3,
            pairs_per_cell: 2,
            antennas: 4,
            cell_radius_m: 100.0,
            near_distance_m: (10.0, 10.0),
            far_distance_m: (80.0, 90.0),
            pathloss_exp_near: 2.0,
            pathloss_exp_far: 3.0,
            rician_factor_db: 10.0,
            carrier_hz: 2e9,
            bandwidth_hz: 20e6,
            rng_seed: 1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 1 || self.pairs_per_cell < 1 || self.antennas < 1 {
            return Err(Error::InvalidConfig(
                "n_cells, pairs_per_cell and antennas must all be >= 1".into(),
            ));
        }
        let (n_lo, n_hi) = self.near_distance_m;
        let (f_lo, f_hi) = self.far_distance_m;
        if !(n_lo > 0.0 && n_lo <= n_hi && n_hi < f_lo && f_lo <= f_hi) {
            return Err(Error::InvalidConfig(format!(
                "distance ranges must satisfy 0 < near [{n_lo}, {n_hi}] < far [{f_lo}, {f_hi}]"
            )));
        }
        if f_hi > self.cell_radius_m {
            return Err(Error::InvalidConfig(format!(
                "far distance {f_hi} exceeds cell radius {}",
                self.cell_radius_m
            )));
        }
        if self.pathloss_exp_near <= 0.0 || self.pathloss_exp_far <= 0.0 {
            return Err(Error::InvalidConfig("pathloss exponents must be > 0".into()));
        }
        if self.carrier_hz <= 0.0 || self.bandwidth_hz <= 0.0 {
            return Err(Error::InvalidConfig("carrier and bandwidth must be > 0".into()));
        }
        Ok(())
    }

    pub fn users_per_cell(&self) -> usize {
        2 * self.pairs_per_cell
    }
}

/// Power, noise, energy harvesting and QoS configuration, in watts/nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNoiseConfig {
    /// Per-BS transmit power budget `P^max` (W).
    pub p_max_w: f64,
    /// Noise PSD (W/Hz).
    pub noise_w_per_hz: f64,
    /// Total receiver noise power over the bandwidth (W).
    pub noise_total_w: f64,
    /// Total ID-circuitry noise power over the bandwidth (W).
    pub circuit_noise_w: f64,
    /// Energy harvesting threshold `e^min` (W).
    pub eh_threshold_w: f64,
    /// Energy conversion efficiency `ζ` in (0, 1).
    pub eh_efficiency: f64,
    /// Reciprocal power-amplifier efficiency `ξ` (>= 1).
    pub amp_inefficiency: f64,
    /// Power dissipation per transmit antenna `P_A` (W).
    pub per_antenna_power_w: f64,
    /// Baseband circuit power `P_cir` (W).
    pub circuit_power_w: f64,
    /// Per-user QoS rate threshold (nats/s/Hz).
    pub qos_rate_nats: f64,
}

impl PowerNoiseConfig {
    /// Build from the boundary units used in scenario files.
    #[allow(clippy::too_many_arguments)]
    pub fn from_boundary_units(
        p_max_dbm: f64,
        noise_psd_dbm_hz: f64,
        circuit_noise_psd_dbm_hz: f64,
        bandwidth_hz: f64,
        eh_threshold_dbm: f64,
        eh_efficiency: f64,
        amp_inefficiency: f64,
        per_antenna_power_w: f64,
        circuit_power_w: f64,
        qos_rate_bits_hz: f64,
    ) -> Self {
        Self {
            p_max_w: units::dbm_to_watts(p_max_dbm),
            noise_w_per_hz: units::dbm_to_watts(noise_psd_dbm_hz),
            noise_total_w: units::psd_dbm_hz_to_watts(noise_psd_dbm_hz, bandwidth_hz),
            circuit_noise_w: units::psd_dbm_hz_to_watts(circuit_noise_psd_dbm_hz, bandwidth_hz),
            eh_threshold_w: units::dbm_to_watts(eh_threshold_dbm),
            eh_efficiency,
            amp_inefficiency,
            per_antenna_power_w,
            circuit_power_w,
            qos_rate_nats: units::bits_to_nats(qos_rate_bits_hz),
        }
    }

    /// Fixed circuit power `P_c = N_t P_A + P_cir` (W).
    pub fn circuit_power_total_w(&self, antennas: usize) -> f64 {
        antennas as f64 * self.per_antenna_power_w + self.circuit_power_w
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_max_w", self.p_max_w),
            ("noise_total_w", self.noise_total_w),
            ("circuit_noise_w", self.circuit_noise_w),
            ("per_antenna_power_w", self.per_antenna_power_w),
            ("circuit_power_w", self.circuit_power_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.eh_threshold_w < 0.0 {
            return Err(Error::InvalidConfig("eh_threshold_w must be >= 0".into()));
        }
        if !(self.eh_efficiency > 0.0 && self.eh_efficiency < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "eh_efficiency must lie in (0,1), got {}",
                self.eh_efficiency
            )));
        }
        if self.amp_inefficiency < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "amp_inefficiency must be >= 1, got {}",
                self.amp_inefficiency
            )));
        }
        if self.qos_rate_nats < 0.0 {
            return Err(Error::InvalidConfig("qos_rate_nats must be >= 0".into()));
        }
        Ok(())
    }
}

/// User index inside a cell: `0..K` are near users, `K..2K` are far users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserId {
    pub cell: usize,
    pub user: usize,
}

/// A fully generated scenario: geometry, pairing and channels.
///
/// Immutable after construction; shared freely across parallel runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub format_version: u32,
    pub network: NetworkConfig,
    pub power: PowerNoiseConfig,
    /// BS coordinates (m).
    pub bs_positions: Vec<[f64; 2]>,
    /// `ue_positions[i][j]` is the coordinate of user (i, j).
    pub ue_positions: Vec<Vec<[f64; 2]>>,
    /// `pairing[i][j]` is the far-user index paired with near user j of
    /// cell i (a bijection onto `K..2K` per cell).
    pub pairing: Vec<Vec<usize>>,
    /// `channels[s][i][j]` is the row channel from BS s to user (i, j),
    /// a complex vector of length `antennas`.
    pub channels: Vec<Vec<Vec<Vec<Complex64>>>>,
}

/// Pathloss in dB at distance `d` meters with exponent `beta`.
pub fn pathloss_db(d: f64, beta: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("pathloss distance must be > 0, got {d}")));
    }
    Ok(30.0 + 10.0 * beta * d.log10())
}

fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    // CN(0,1): each component N(0, 1/2).
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Generate a scenario instance deterministically from `seed`.
pub fn generate_instance(
    network: &NetworkConfig,
    power: &PowerNoiseConfig,
    seed: u64,
) -> Result<NetworkInstance> {
    network.validate()?;
    power.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = network.n_cells;
    let k = network.pairs_per_cell;
    let n_users = network.users_per_cell();
    let nt = network.antennas;

    // BSs equally spaced on a ring of one cell radius (a single cell sits
    // at the origin). Cells overlap, which is the intended dense regime.
    let bs_positions: Vec<[f64; 2]> = if n == 1 {
        vec![[0.0, 0.0]]
    } else {
        (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                [network.cell_radius_m * th.cos(), network.cell_radius_m * th.sin()]
            })
            .collect()
    };

    // Users at uniform angle; near users within the near ring, far users
    // within the far ring, around their serving BS.
    let mut ue_positions = Vec::with_capacity(n);
    for bs in &bs_positions {
        let mut cell_users = Vec::with_capacity(n_users);
        for j in 0..n_users {
            let (lo, hi) = if j < k { network.near_distance_m } else { network.far_distance_m };
            let d = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let th = rng.random_range(0.0..2.0 * PI);
            cell_users.push([bs[0] + d * th.cos(), bs[1] + d * th.sin()]);
        }
        ue_positions.push(cell_users);
    }

    // Random bijection near -> far per cell.
    let mut pairing = Vec::with_capacity(n);
    for _ in 0..n {
        let mut far: Vec<usize> = (k..n_users).collect();
        // Fisher-Yates driven by the instance RNG.
        for idx in (1..far.len()).rev() {
            let swap = rng.random_range(0..=idx);
            far.swap(idx, swap);
        }
        pairing.push(far);
    }

    let rician_linear = units::db_to_linear(network.rician_factor_db);
    let los_amp = (rician_linear / (rician_linear + 1.0)).sqrt();
    let nlos_amp = (1.0 / (rician_linear + 1.0)).sqrt();

    let mut channels = vec![vec![vec![Vec::new(); n_users]; n]; n];
    for s in 0..n {
        for i in 0..n {
            for j in 0..n_users {
                let ue = ue_positions[i][j];
                let bs = bs_positions[s];
                let d = ((ue[0] - bs[0]).powi(2) + (ue[1] - bs[1]).powi(2)).sqrt();
                let own_near = s == i && j < k;
                let beta =
                    if own_near { network.pathloss_exp_near } else { network.pathloss_exp_far };
                let pl_db = pathloss_db(d, beta)?;
                let amp = (units::db_to_linear(-pl_db)).sqrt();

                let mut h = Vec::with_capacity(nt);
                for _ in 0..nt {
                    let small = if own_near {
                        let phase = rng.random_range(0.0..2.0 * PI);
                        let los = Complex64::from_polar(1.0, phase);
                        los_amp * los + nlos_amp * complex_gaussian(&mut rng)
                    } else {
                        complex_gaussian(&mut rng)
                    };
                    h.push(amp * small);
                }
                channels[s][i][j] = h;
            }
        }
    }

    Ok(NetworkInstance {
        format_version: INSTANCE_FORMAT_VERSION,
        network: network.clone(),
        power: power.clone(),
        bs_positions,
        ue_positions,
        pairing,
        channels,
    })
}

impl NetworkInstance {
    pub fn n_cells(&self) -> usize {
        self.network.n_cells
    }

    pub fn pairs_per_cell(&self) -> usize {
        self.network.pairs_per_cell
    }

    pub fn users_per_cell(&self) -> usize {
        self.network.users_per_cell()
    }

    pub fn antennas(&self) -> usize {
        self.network.antennas
    }

    /// Row channel from BS `s` to user `(i, j)`.
    pub fn channel(&self, s: usize, i: usize, j: usize) -> &[Complex64] {
        &self.channels[s][i][j]
    }

    pub fn is_near(&self, j: usize) -> bool {
        j < self.pairs_per_cell()
    }

    /// Far partner `p(j)` of near user `j` in cell `i`.
    pub fn partner(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.is_near(j));
        self.pairing[i][j]
    }

    /// Near user whose partner is far user `j_far` in cell `i`.
    pub fn near_of(&self, i: usize, j_far: usize) -> usize {
        self.pairing[i]
            .iter()
            .position(|&f| f == j_far)
            .expect("pairing is a bijection onto the far users")
    }

    /// All user ids `(i, j)` in index order.
    pub fn users(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_users = self.users_per_cell();
        (0..self.n_cells()).flat_map(move |i| (0..n_users).map(move |j| (i, j)))
    }

    /// Near user ids `(i, j)`, `j < K`.
    pub fn near_users(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.pairs_per_cell();
        (0..self.n_cells()).flat_map(move |i| (0..k).map(move |j| (i, j)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: NetworkInstance = serde_json::from_str(text)?;
        if inst.format_version != INSTANCE_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported instance format version {} (expected {})",
                inst.format_version, INSTANCE_FORMAT_VERSION
            )));
        }
        inst.network.validate()?;
        inst.power.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

/// On-disk scenario schema (boundary units: dBm, dB, bits).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub network: ScenarioNetwork,
    pub power: ScenarioPower,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioNetwork {
    pub n_cells: usize,
    pub pairs_per_cell: usize,
    pub antennas: usize,
    pub cell_radius_m: f64,
    pub near_distance_m: [f64; 2],
    pub far_distance_m: [f64; 2],
    pub pathloss_exp_near: f64,
    pub pathloss_exp_far: f64,
    pub rician_factor_db: f64,
    pub carrier_ghz: f64,
    pub bandwidth_mhz: f64,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioPower {
    pub p_max_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub circuit_noise_psd_dbm_hz: f64,
    pub eh_threshold_dbm: f64,
    pub eh_efficiency: f64,
    pub amp_inefficiency: f64,
    pub per_antenna_power_w: f64,
    pub circuit_power_w: f64,
    pub qos_rate_bits_hz: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Convert to internal units and validate.
    pub fn to_configs(&self) -> Result<(NetworkConfig, PowerNoiseConfig)> {
        let net = NetworkConfig {
            n_cells: self.network.n_cells,
            pairs_per_cell: self.network.pairs_per_cell,
            antennas: self.network.antennas,
            cell_radius_m: self.network.cell_radius_m,
            near_distance_m: (self.network.near_distance_m[0], self.network.near_distance_m[1]),
            far_distance_m: (self.network.far_distance_m[0], self.network.far_distance_m[1]),
            pathloss_exp_near: self.network.pathloss_exp_near,
            pathloss_exp_far: self.network.pathloss_exp_far,
            rician_factor_db: self.network.rician_factor_db,
            carrier_hz: self.network.carrier_ghz * 1e9,
            bandwidth_hz: self.network.bandwidth_mhz * 1e6,
            rng_seed: self.network.rng_seed,
        };
        let power = PowerNoiseConfig::from_boundary_units(
            self.power.p_max_dbm,
            self.power.noise_psd_dbm_hz,
            self.power.circuit_noise_psd_dbm_hz,
            net.bandwidth_hz,
            self.power.eh_threshold_dbm,
            self.power.eh_efficiency,
            self.power.amp_inefficiency,
            self.power.per_antenna_power_w,
            self.power.circuit_power_w,
            self.power.qos_rate_bits_hz,
        );
        net.validate()?;
        power.validate()?;
        Ok((net, power))
    }
}

/// Default scenario matching the simulation setup the crate reproduces.
pub fn default_scenario() -> ScenarioFile {
    ScenarioFile {
        network: ScenarioNetwork {
            n_cells: 3,
            pairs_per_cell: 2,
            antennas: 4,
            cell_radius_m: 100.0,
            near_distance_m: [10.0, 10.0],
            far_distance_m: [80.0, 90.0],
            pathloss_exp_near: 2.0,
            pathloss_exp_far: 3.0,
            rician_factor_db: 10.0,
            carrier_ghz: 2.0,
            bandwidth_mhz: 20.0,
            rng_seed: 1,
        },
        power: ScenarioPower {
            p_max_dbm: 35.0,
            noise_psd_dbm_hz: -174.0,
            circuit_noise_psd_dbm_hz: -174.0,
            eh_threshold_dbm: -20.0,
            eh_efficiency: 0.5,
            amp_inefficiency: 5.0,
            per_antenna_power_w: 0.6,
            circuit_power_w: 2.5,
            qos_rate_bits_hz: 0.5,
        },
    }
}

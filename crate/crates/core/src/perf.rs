//! Exact evaluation of rates, harvested energy, transmit power and
//! objectives for candidate solutions.
//!
//! Everything here is computed directly from the model definitions with no
//! approximation; the path-following layer is audited against these values
//! after every iteration.
//!
//! Three receiver architectures are covered:
//!
//! * **PS** — one beam per user; near users split received power in ratio
//!   `α : (1-α)` between information decoding and energy harvesting.
//! * **TS** — a time fraction `ρ` carries dedicated energy beams (near
//!   users only), the remaining `1-ρ` carries information beams for all
//!   users.
//! * **OMA** — baseline without SIC: the two users of a cluster occupy
//!   orthogonal time fractions `(τ, 1-τ)` of the information phase, a
//!   user's partner beam is silent during its slot, and every other beam
//!   keeps interfering at full power. Near users harvest during the
//!   partner slot.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cvec;
use crate::error::{Error, Result};
use crate::netmodel::NetworkInstance;

/// Power-splitting solution state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamStatePS {
    /// `w[i][j]` beamformer for user (i, j), length `N_t`.
    pub w: Vec<Vec<Vec<Complex64>>>,
    /// `alpha[i][j]`, `j < K`: PS ratio of near user (i, j).
    pub alpha: Vec<Vec<f64>>,
    /// Carried rate variables (nats/s/Hz), one per user.
    pub rates: Vec<Vec<f64>>,
}

/// Transmit-time-switching solution state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamStateTS {
    /// Energy beams, near users only: `w_energy[i][j]`, `j < K`.
    pub w_energy: Vec<Vec<Vec<Complex64>>>,
    /// Information beams for every user.
    pub w_info: Vec<Vec<Vec<Complex64>>>,
    /// Fraction of time spent on power transfer.
    pub rho: f64,
    pub rates: Vec<Vec<f64>>,
}

/// OMA baseline state (cluster-internal TDMA, no SIC).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmaState {
    pub w: Vec<Vec<Vec<Complex64>>>,
    /// `tau[i][j]`, `j < K`: near-user time share of cluster (i, j).
    pub tau: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
}

/// General rate function (nats): `ln(1 + x / (y + σ² + σ_c²/ν))` for
/// `ν > 0`, and `ln(1 + x / (y + σ²))` for `ν = 0`.
///
/// `x_pow` and `y_pow` are received signal and interference powers.
pub fn psi(x_pow: f64, y_pow: f64, nu: f64, sigma_sq: f64, sigma_c_sq: f64) -> Result<f64> {
    if x_pow < 0.0 || y_pow < 0.0 {
        return Err(Error::Domain(format!(
            "psi requires nonnegative powers, got x={x_pow}, y={y_pow}"
        )));
    }
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::Domain(format!("psi split ratio must lie in [0,1], got {nu}")));
    }
    let denom = if nu > 0.0 { y_pow + sigma_sq + sigma_c_sq / nu } else { y_pow + sigma_sq };
    Ok((1.0 + x_pow / denom).ln())
}

/// The three interference stacks of cluster (i, j, p(j)), as lists of
/// squared link magnitudes `|h w|²`:
///
/// * `far_at_near`: seen at near UE (i,j) when decoding the far message,
///   all beams except (i, p(j)).
/// * `far_at_far`: seen at far UE (i,p(j)), all beams except (i, p(j)).
/// * `near_at_near`: seen at near UE (i,j) after SIC, all beams except
///   (i, p(j)) and (i, j).
#[derive(Debug, Clone)]
pub struct InterferenceStacks {
    pub far_at_near: Vec<f64>,
    pub far_at_far: Vec<f64>,
    pub near_at_near: Vec<f64>,
}

impl InterferenceStacks {
    pub fn far_at_near_power(&self) -> f64 {
        self.far_at_near.iter().sum()
    }
    pub fn far_at_far_power(&self) -> f64 {
        self.far_at_far.iter().sum()
    }
    pub fn near_at_near_power(&self) -> f64 {
        self.near_at_near.iter().sum()
    }
}

/// Squared link magnitudes at receiver (rx_i, rx_j) from every beam in
/// `w` except the excluded (cell, user) pairs, in (s, l) index order.
pub fn link_power_stack(
    inst: &NetworkInstance,
    w: &[Vec<Vec<Complex64>>],
    rx: (usize, usize),
    exclude: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for s in 0..inst.n_cells() {
        if w[s].len() != inst.users_per_cell() {
            return Err(Error::Domain(format!(
                "beam set incomplete: cell {s} has {} beams, expected {}",
                w[s].len(),
                inst.users_per_cell()
            )));
        }
        for l in 0..inst.users_per_cell() {
            if exclude.contains(&(s, l)) {
                continue;
            }
            let h = inst.channel(s, rx.0, rx.1);
            if w[s][l].len() != h.len() {
                return Err(Error::Domain("beam/channel length mismatch".into()));
            }
            out.push(cvec::link_power(h, &w[s][l]));
        }
    }
    Ok(out)
}

/// Build all three stacks for the cluster whose near user is (i, j).
pub fn interference_stacks(
    inst: &NetworkInstance,
    w: &[Vec<Vec<Complex64>>],
    near: (usize, usize),
) -> Result<InterferenceStacks> {
    let (i, j) = near;
    if !inst.is_near(j) {
        return Err(Error::Domain(format!("user ({i},{j}) is not a near user")));
    }
    let q = inst.partner(i, j);
    Ok(InterferenceStacks {
        far_at_near: link_power_stack(inst, w, (i, j), &[(i, q)])?,
        far_at_far: link_power_stack(inst, w, (i, q), &[(i, q)])?,
        near_at_near: link_power_stack(inst, w, (i, j), &[(i, q), (i, j)])?,
    })
}

/// Total received power `p_{i,j}(w)` at user (i, j) over the given beams.
pub fn received_power(
    inst: &NetworkInstance,
    w: &[Vec<Vec<Complex64>>],
    rx: (usize, usize),
) -> Result<f64> {
    Ok(link_power_stack(inst, w, rx, &[])?.iter().sum())
}

/// Received power at (i, j) from energy beams only (near-user beams).
pub fn received_power_energy(
    inst: &NetworkInstance,
    w_energy: &[Vec<Vec<Complex64>>],
    rx: (usize, usize),
) -> f64 {
    let mut acc = 0.0;
    for s in 0..inst.n_cells() {
        for l in 0..w_energy[s].len() {
            acc += cvec::link_power(inst.channel(s, rx.0, rx.1), &w_energy[s][l]);
        }
    }
    acc
}

/// Exact achieved rates under PS decoding (nats/s/Hz). The far message is
/// decoded by both cluster members, so its rate is the minimum of the two
/// decoders; the near user then decodes its own message after SIC.
pub fn achieved_rates_ps(inst: &NetworkInstance, state: &BeamStatePS) -> Result<Vec<Vec<f64>>> {
    let s2 = inst.power.noise_total_w;
    let sc2 = inst.power.circuit_noise_w;
    let mut rates = vec![vec![0.0; inst.users_per_cell()]; inst.n_cells()];
    for (i, j) in inst.near_users() {
        let q = inst.partner(i, j);
        let alpha = state.alpha[i][j];
        let stacks = interference_stacks(inst, &state.w, (i, j))?;

        let x_far_near = cvec::link_power(inst.channel(i, i, j), &state.w[i][q]);
        let r_far_near = psi(x_far_near, stacks.far_at_near_power(), alpha, s2, sc2)?;
        let x_far_far = cvec::link_power(inst.channel(i, i, q), &state.w[i][q]);
        let r_far_far = psi(x_far_far, stacks.far_at_far_power(), 0.0, s2, sc2)?;
        rates[i][q] = r_far_near.min(r_far_far);

        let x_near = cvec::link_power(inst.channel(i, i, j), &state.w[i][j]);
        rates[i][j] = psi(x_near, stacks.near_at_near_power(), alpha, s2, sc2)?;
    }
    Ok(rates)
}

/// Exact achieved rates under TS decoding: same min structure with no
/// splitting loss (`ν = 0`) and an information-phase prefactor `1-ρ`.
pub fn achieved_rates_ts(inst: &NetworkInstance, state: &BeamStateTS) -> Result<Vec<Vec<f64>>> {
    if !(state.rho > 0.0 && state.rho < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0,1), got {}", state.rho)));
    }
    let s2 = inst.power.noise_total_w;
    let sc2 = inst.power.circuit_noise_w;
    let frac = 1.0 - state.rho;
    let mut rates = vec![vec![0.0; inst.users_per_cell()]; inst.n_cells()];
    for (i, j) in inst.near_users() {
        let q = inst.partner(i, j);
        let stacks = interference_stacks(inst, &state.w_info, (i, j))?;

        let x_far_near = cvec::link_power(inst.channel(i, i, j), &state.w_info[i][q]);
        let r_far_near = psi(x_far_near, stacks.far_at_near_power(), 0.0, s2, sc2)?;
        let x_far_far = cvec::link_power(inst.channel(i, i, q), &state.w_info[i][q]);
        let r_far_far = psi(x_far_far, stacks.far_at_far_power(), 0.0, s2, sc2)?;
        rates[i][q] = frac * r_far_near.min(r_far_far);

        let x_near = cvec::link_power(inst.channel(i, i, j), &state.w_info[i][j]);
        rates[i][j] = frac * psi(x_near, stacks.near_at_near_power(), 0.0, s2, sc2)?;
    }
    Ok(rates)
}

/// OMA baseline rates. Near user (i,j) gets time share `τ`, its far
/// partner gets `1-τ`; the partner's beam is silent during a user's slot
/// while all other beams keep interfering.
pub fn oma_rates(
    inst: &NetworkInstance,
    w: &[Vec<Vec<Complex64>>],
    time_shares: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let s2 = inst.power.noise_total_w;
    let sc2 = inst.power.circuit_noise_w;
    let mut rates = vec![vec![0.0; inst.users_per_cell()]; inst.n_cells()];
    for (i, j) in inst.near_users() {
        let q = inst.partner(i, j);
        let tau = time_shares[i][j];
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Domain(format!("time share must lie in [0,1], got {tau}")));
        }
        let near_stack = link_power_stack(inst, w, (i, j), &[(i, j), (i, q)])?;
        let x_near = cvec::link_power(inst.channel(i, i, j), &w[i][j]);
        rates[i][j] = tau * psi(x_near, near_stack.iter().sum(), 0.0, s2, sc2)?;

        let far_stack = link_power_stack(inst, w, (i, q), &[(i, q), (i, j)])?;
        let x_far = cvec::link_power(inst.channel(i, i, q), &w[i][q]);
        rates[i][q] = (1.0 - tau) * psi(x_far, far_stack.iter().sum(), 0.0, s2, sc2)?;
    }
    Ok(rates)
}

/// Harvested energy at near user (i, j) under PS:
/// `ζ (1-α) (p_{i,j}(w) + σ²)`.
pub fn harvested_energy_ps(
    inst: &NetworkInstance,
    state: &BeamStatePS,
    user: (usize, usize),
) -> Result<f64> {
    let p = received_power(inst, &state.w, user)?;
    let alpha = state.alpha[user.0][user.1];
    Ok(inst.power.eh_efficiency * (1.0 - alpha) * (p + inst.power.noise_total_w))
}

/// Harvested energy at near user (i, j) under TS:
/// `ρ ζ (p_{i,j}(w^E) + σ²)` with power over energy beams only.
pub fn harvested_energy_ts(
    inst: &NetworkInstance,
    state: &BeamStateTS,
    user: (usize, usize),
) -> Result<f64> {
    let p = received_power_energy(inst, &state.w_energy, user);
    Ok(state.rho * inst.power.eh_efficiency * (p + inst.power.noise_total_w))
}

/// Harvested energy at near user (i, j) under the OMA baseline: the near
/// user harvests during the partner slot (share `1-τ`), when every beam
/// except its own is radiating.
pub fn harvested_energy_oma(
    inst: &NetworkInstance,
    state: &OmaState,
    user: (usize, usize),
) -> Result<f64> {
    let (i, j) = user;
    let p: f64 = link_power_stack(inst, &state.w, (i, j), &[(i, j)])?.iter().sum();
    let tau = state.tau[i][j];
    Ok(inst.power.eh_efficiency * (1.0 - tau) * (p + inst.power.noise_total_w))
}

/// Per-BS transmit power `Σ_j ||w_{i,j}||²`.
pub fn bs_power(w: &[Vec<Vec<Complex64>>], i: usize) -> f64 {
    w[i].iter().map(|b| cvec::norm_sq(b)).sum()
}

/// Total transmit power over all BSs.
pub fn total_power(w: &[Vec<Vec<Complex64>>]) -> f64 {
    (0..w.len()).map(|i| bs_power(w, i)).sum()
}

/// PS energy efficiency: achieved sum rate over `ξ π(w) + P_c`
/// (nats/s/Hz per watt).
pub fn ee_objective_ps(inst: &NetworkInstance, state: &BeamStatePS) -> Result<f64> {
    let rates = achieved_rates_ps(inst, state)?;
    let sum_rate: f64 = rates.iter().flatten().sum();
    let denom = inst.power.amp_inefficiency * total_power(&state.w)
        + inst.power.circuit_power_total_w(inst.antennas());
    Ok(sum_rate / denom)
}

/// TS energy efficiency: achieved sum rate over
/// `ξ [ρ π_E(w^E) + (1-ρ) π_I(w^I)] + P_c`.
pub fn ee_objective_ts(inst: &NetworkInstance, state: &BeamStateTS) -> Result<f64> {
    let rates = achieved_rates_ts(inst, state)?;
    let sum_rate: f64 = rates.iter().flatten().sum();
    Ok(sum_rate / ts_consumed_power(inst, state))
}

/// TS denominator `ξ [ρ π_E + (1-ρ) π_I] + P_c` (W).
pub fn ts_consumed_power(inst: &NetworkInstance, state: &BeamStateTS) -> f64 {
    let pi_e = total_power(&state.w_energy);
    let pi_i = total_power(&state.w_info);
    inst.power.amp_inefficiency * (state.rho * pi_e + (1.0 - state.rho) * pi_i)
        + inst.power.circuit_power_total_w(inst.antennas())
}

/// OMA energy efficiency with duty-weighted radiated power: near beams
/// radiate for `τ` of the frame, far beams for `1-τ`.
pub fn ee_objective_oma(inst: &NetworkInstance, state: &OmaState) -> Result<f64> {
    let rates = oma_rates(inst, &state.w, &state.tau)?;
    let sum_rate: f64 = rates.iter().flatten().sum();
    let mut duty_power = 0.0;
    for (i, j) in inst.near_users() {
        let q = inst.partner(i, j);
        let tau = state.tau[i][j];
        duty_power += tau * cvec::norm_sq(&state.w[i][j]);
        duty_power += (1.0 - tau) * cvec::norm_sq(&state.w[i][q]);
    }
    let denom = inst.power.amp_inefficiency * duty_power
        + inst.power.circuit_power_total_w(inst.antennas());
    Ok(sum_rate / denom)
}

// ---------------------------------------------------------------------------
// Feasibility audits
// ---------------------------------------------------------------------------

/// Normalized constraint violations of an exact state. Every entry is
/// `max(0, violation) / scale`, so a feasible state has all zeros.
#[derive(Debug, Clone, Default)]
pub struct FeasReport {
    pub power: f64,
    pub eh: f64,
    pub split: f64,
    pub qos: f64,
}

impl FeasReport {
    pub fn max(&self) -> f64 {
        self.power.max(self.eh).max(self.split).max(self.qos)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn eh_scale(inst: &NetworkInstance) -> f64 {
    inst.power.eh_threshold_w.max(inst.power.noise_total_w)
}

/// Audit a PS state: per-BS power, EH thresholds, split ranges and
/// (optionally) QoS rates.
pub fn audit_ps(
    inst: &NetworkInstance,
    state: &BeamStatePS,
    qos_nats: Option<f64>,
) -> Result<FeasReport> {
    let mut rep = FeasReport::default();
    let p_max = inst.power.p_max_w;
    for i in 0..inst.n_cells() {
        rep.power = rep.power.max(relu(bs_power(&state.w, i) - p_max) / p_max);
    }
    for (i, j) in inst.near_users() {
        let e = harvested_energy_ps(inst, state, (i, j))?;
        rep.eh = rep.eh.max(relu(inst.power.eh_threshold_w - e) / eh_scale(inst));
        let a = state.alpha[i][j];
        rep.split = rep.split.max(relu(-a)).max(relu(a - 1.0));
    }
    if let Some(r) = qos_nats {
        let rates = achieved_rates_ps(inst, state)?;
        for (i, j) in inst.users() {
            rep.qos = rep.qos.max(relu(r - rates[i][j]) / r.max(1e-12));
        }
    }
    Ok(rep)
}

/// Audit a TS state: per-beam caps, the time-shared sum power budget,
/// EH thresholds, `ρ` range and (optionally) QoS rates.
pub fn audit_ts(
    inst: &NetworkInstance,
    state: &BeamStateTS,
    qos_nats: Option<f64>,
) -> Result<FeasReport> {
    let mut rep = FeasReport::default();
    let p_max = inst.power.p_max_w;
    let rho = state.rho;
    rep.split = relu(-rho).max(relu(rho - 1.0));
    for i in 0..inst.n_cells() {
        let pe = bs_power(&state.w_energy, i);
        let pi = bs_power(&state.w_info, i);
        rep.power = rep.power.max(relu(rho * pe + (1.0 - rho) * pi - p_max) / p_max);
        for b in &state.w_energy[i] {
            rep.power = rep.power.max(relu(cvec::norm_sq(b) - p_max) / p_max);
        }
        for b in &state.w_info[i] {
            rep.power = rep.power.max(relu(cvec::norm_sq(b) - p_max) / p_max);
        }
    }
    for (i, j) in inst.near_users() {
        let e = harvested_energy_ts(inst, state, (i, j))?;
        rep.eh = rep.eh.max(relu(inst.power.eh_threshold_w - e) / eh_scale(inst));
    }
    if let Some(r) = qos_nats {
        let rates = achieved_rates_ts(inst, state)?;
        for (i, j) in inst.users() {
            rep.qos = rep.qos.max(relu(r - rates[i][j]) / r.max(1e-12));
        }
    }
    Ok(rep)
}

/// Audit an OMA state: per-BS power, EH thresholds, `τ` ranges and
/// (optionally) QoS rates.
pub fn audit_oma(
    inst: &NetworkInstance,
    state: &OmaState,
    qos_nats: Option<f64>,
) -> Result<FeasReport> {
    let mut rep = FeasReport::default();
    let p_max = inst.power.p_max_w;
    for i in 0..inst.n_cells() {
        rep.power = rep.power.max(relu(bs_power(&state.w, i) - p_max) / p_max);
    }
    for (i, j) in inst.near_users() {
        let e = harvested_energy_oma(inst, state, (i, j))?;
        rep.eh = rep.eh.max(relu(inst.power.eh_threshold_w - e) / eh_scale(inst));
        let t = state.tau[i][j];
        rep.split = rep.split.max(relu(-t)).max(relu(t - 1.0));
    }
    if let Some(r) = qos_nats {
        let rates = oma_rates(inst, &state.w, &state.tau)?;
        for (i, j) in inst.users() {
            rep.qos = rep.qos.max(relu(r - rates[i][j]) / r.max(1e-12));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{default_scenario, generate_instance, NetworkInstance};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize, k: usize, nt: usize, seed: u64) -> NetworkInstance {
        let (mut net, pw) = default_scenario().to_configs().unwrap();
        net.n_cells = n;
        net.pairs_per_cell = k;
        net.antennas = nt;
        generate_instance(&net, &pw, seed).unwrap()
    }

    fn random_beams(inst: &NetworkInstance, seed: u64, power_frac: f64) -> Vec<Vec<Vec<Complex64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Vec::new();
        for i in 0..inst.n_cells() {
            let mut cell = Vec::new();
            for _ in 0..inst.users_per_cell() {
                let b: Vec<Complex64> = (0..inst.antennas())
                    .map(|_| {
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                    })
                    .collect();
                cell.push(b);
            }
            let total: f64 = cell.iter().map(|b| cvec::norm_sq(b)).sum();
            let scale = (power_frac * inst.power.p_max_w / total).sqrt();
            for b in &mut cell {
                for x in b.iter_mut() {
                    *x *= scale;
                }
            }
            w.push(cell);
            let _ = i;
        }
        w
    }

    fn random_ps_state(inst: &NetworkInstance, seed: u64) -> BeamStatePS {
        let w = random_beams(inst, seed, 1.0);
        let alpha = vec![vec![0.6; inst.pairs_per_cell()]; inst.n_cells()];
        let mut st = BeamStatePS { w, alpha, rates: vec![] };
        st.rates = achieved_rates_ps(inst, &st).unwrap();
        st
    }

    #[test]
    fn psi_reference_points() {
        let s2 = 2.5e-13;
        let sc2 = 7.7e-14;
        // x = sigma^2, no interference, nu = 0.
        assert_relative_eq!(
            psi(s2, 0.0, 0.0, s2, sc2).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        // Zero signal.
        assert_relative_eq!(psi(0.0, 1.0, 0.0, s2, sc2).unwrap(), 0.0, epsilon = 1e-15);
        // x = sigma_c^2, nu = 1, sigma^2 = sigma_c^2: denominator 2 sigma_c^2.
        assert_relative_eq!(psi(sc2, 0.0, 1.0, sc2, sc2).unwrap(), 1.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn psi_rejects_negative_powers() {
        assert!(psi(-1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(psi(0.0, -1.0, 0.5, 1.0, 1.0).is_err());
        assert!(psi(1.0, 1.0, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn psi_monotonicity() {
        let s2 = 1e-13;
        let sc2 = 1e-13;
        let base = psi(5e-13, 2e-13, 0.5, s2, sc2).unwrap();
        assert!(psi(6e-13, 2e-13, 0.5, s2, sc2).unwrap() > base);
        assert!(psi(5e-13, 3e-13, 0.5, s2, sc2).unwrap() < base);
        // Larger split toward ID shrinks the sigma_c^2 / nu term.
        assert!(psi(5e-13, 2e-13, 0.6, s2, sc2).unwrap() > base);
    }

    #[test]
    fn stack_sizes_single_pair() {
        let inst = instance(1, 1, 2, 3);
        let st = random_ps_state(&inst, 10);
        let stacks = interference_stacks(&inst, &st.w, (0, 0)).unwrap();
        // |S| = 2 beams total.
        assert_eq!(stacks.far_at_near.len(), 1);
        assert_eq!(stacks.far_at_far.len(), 1);
        assert_eq!(stacks.near_at_near.len(), 0);
    }

    #[test]
    fn stack_matches_brute_force_sum() {
        let inst = instance(3, 2, 4, 8);
        let st = random_ps_state(&inst, 11);
        for (i, j) in inst.near_users() {
            let q = inst.partner(i, j);
            let stacks = interference_stacks(&inst, &st.w, (i, j)).unwrap();
            // Direct double sum over all (s, l) != (i, q), at the far UE.
            let mut acc = 0.0;
            for s in 0..inst.n_cells() {
                for l in 0..inst.users_per_cell() {
                    if (s, l) == (i, q) {
                        continue;
                    }
                    acc += cvec::link_power(inst.channel(s, i, q), &st.w[s][l]);
                }
            }
            assert_relative_eq!(stacks.far_at_far_power(), acc, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_far_beam_gives_zero_far_rate() {
        let inst = instance(2, 1, 3, 4);
        let mut st = random_ps_state(&inst, 12);
        let q = inst.partner(0, 0);
        st.w[0][q] = vec![Complex64::new(0.0, 0.0); inst.antennas()];
        let rates = achieved_rates_ps(&inst, &st).unwrap();
        assert_eq!(rates[0][q], 0.0);
    }

    #[test]
    fn no_interference_closed_form() {
        // Single cell, single pair, far beam zeroed: the near-user rate has
        // an empty interference stack and the textbook closed form.
        let inst = instance(1, 1, 2, 5);
        let mut st = random_ps_state(&inst, 13);
        let q = inst.partner(0, 0);
        st.w[0][q] = vec![Complex64::new(0.0, 0.0); inst.antennas()];
        let alpha = st.alpha[0][0];
        let rates = achieved_rates_ps(&inst, &st).unwrap();
        let x = cvec::link_power(inst.channel(0, 0, 0), &st.w[0][0]);
        let s2 = inst.power.noise_total_w;
        let sc2 = inst.power.circuit_noise_w;
        let expect = (1.0 + x * alpha / (alpha * s2 + sc2)).ln();
        assert_relative_eq!(rates[0][0], expect, max_relative = 1e-12);
    }

    #[test]
    fn rates_ps_match_independent_reimplementation() {
        // Second evaluator written directly from the received-signal
        // definitions, using the alpha-multiplied SINR form rather than
        // the psi(., ., nu) shape.
        let inst = instance(3, 2, 4, 21);
        let st = random_ps_state(&inst, 22);
        let rates = achieved_rates_ps(&inst, &st).unwrap();
        let s2 = inst.power.noise_total_w;
        let sc2 = inst.power.circuit_noise_w;
        for (i, j) in inst.near_users() {
            let q = inst.partner(i, j);
            let a = st.alpha[i][j];
            let mut int_far_near = 0.0;
            let mut int_far_far = 0.0;
            let mut int_near = 0.0;
            for s in 0..inst.n_cells() {
                for l in 0..inst.users_per_cell() {
                    let at_near = cvec::link_power(inst.channel(s, i, j), &st.w[s][l]);
                    let at_far = cvec::link_power(inst.channel(s, i, q), &st.w[s][l]);
                    if (s, l) != (i, q) {
                        int_far_near += at_near;
                        int_far_far += at_far;
                    }
                    if (s, l) != (i, q) && (s, l) != (i, j) {
                        int_near += at_near;
                    }
                }
            }
            let sig_far_near = cvec::link_power(inst.channel(i, i, j), &st.w[i][q]);
            let sinr1 = a * sig_far_near / (a * (int_far_near + s2) + sc2);
            let sig_far_far = cvec::link_power(inst.channel(i, i, q), &st.w[i][q]);
            let sinr2 = sig_far_far / (int_far_far + s2);
            let expect_far = (1.0 + sinr1).ln().min((1.0 + sinr2).ln());
            assert_relative_eq!(rates[i][q], expect_far, max_relative = 1e-12);

            let sig_near = cvec::link_power(inst.channel(i, i, j), &st.w[i][j]);
            let sinr3 = a * sig_near / (a * (int_near + s2) + sc2);
            assert_relative_eq!(rates[i][j], (1.0 + sinr3).ln(), max_relative = 1e-12);
        }
    }

    fn random_ts_state(inst: &NetworkInstance, seed: u64, rho: f64) -> BeamStateTS {
        let w_info = random_beams(inst, seed, 0.8);
        let all = random_beams(inst, seed + 1, 0.8);
        let w_energy: Vec<Vec<Vec<Complex64>>> =
            all.iter().map(|cell| cell[..inst.pairs_per_cell()].to_vec()).collect();
        let mut st = BeamStateTS { w_energy, w_info, rho, rates: vec![] };
        st.rates = achieved_rates_ts(inst, &st).unwrap();
        st
    }

    #[test]
    fn rates_ts_match_independent_reimplementation() {
        let inst = instance(2, 2, 3, 31);
        let st = random_ts_state(&inst, 32, 0.3);
        let rates = achieved_rates_ts(&inst, &st).unwrap();
        let s2 = inst.power.noise_total_w;
        for (i, j) in inst.near_users() {
            let q = inst.partner(i, j);
            let mut int_far_near = 0.0;
            let mut int_far_far = 0.0;
            let mut int_near = 0.0;
            for s in 0..inst.n_cells() {
                for l in 0..inst.users_per_cell() {
                    let at_near = cvec::link_power(inst.channel(s, i, j), &st.w_info[s][l]);
                    let at_far = cvec::link_power(inst.channel(s, i, q), &st.w_info[s][l]);
                    if (s, l) != (i, q) {
                        int_far_near += at_near;
                        int_far_far += at_far;
                    }
                    if (s, l) != (i, q) && (s, l) != (i, j) {
                        int_near += at_near;
                    }
                }
            }
            let f = 1.0 - st.rho;
            let sig1 = cvec::link_power(inst.channel(i, i, j), &st.w_info[i][q]);
            let sig2 = cvec::link_power(inst.channel(i, i, q), &st.w_info[i][q]);
            let expect_far = f * (1.0 + sig1 / (int_far_near + s2))
                .ln()
                .min((1.0 + sig2 / (int_far_far + s2)).ln());
            assert_relative_eq!(rates[i][q], expect_far, max_relative = 1e-12);
            let sig3 = cvec::link_power(inst.channel(i, i, j), &st.w_info[i][j]);
            let expect_near = f * (1.0 + sig3 / (int_near + s2)).ln();
            assert_relative_eq!(rates[i][j], expect_near, max_relative = 1e-12);
        }
    }

    #[test]
    fn ts_zero_beam_and_rho_limits() {
        let inst = instance(1, 1, 2, 41);
        let mut st = random_ts_state(&inst, 42, 0.2);
        let q = inst.partner(0, 0);
        st.w_info[0][q] = vec![Complex64::new(0.0, 0.0); inst.antennas()];
        let rates = achieved_rates_ts(&inst, &st).unwrap();
        assert_eq!(rates[0][q], 0.0);

        // Harvested energy vanishes as rho -> 0.
        st.rho = 1e-9;
        let e = harvested_energy_ts(&inst, &st, (0, 0)).unwrap();
        assert!(e < 1e-9 * inst.power.p_max_w);
    }

    #[test]
    fn harvested_energy_reference() {
        // zeta = 0.5, alpha = 0.5, p = 3 sigma^2 -> E = sigma^2.
        let inst = instance(1, 1, 2, 51);
        let s2 = inst.power.noise_total_w;
        // Build a state whose received power at (0,0) is 3 sigma^2 by
        // scaling a random state.
        let mut st = random_ps_state(&inst, 52);
        st.alpha[0][0] = 0.5;
        let p = received_power(&inst, &st.w, (0, 0)).unwrap();
        let scale = (3.0 * s2 / p).sqrt();
        for cell in &mut st.w {
            for b in cell {
                for x in b.iter_mut() {
                    *x *= scale;
                }
            }
        }
        let e = harvested_energy_ps(&inst, &st, (0, 0)).unwrap();
        assert_relative_eq!(e, inst.power.eh_efficiency * 0.5 * 4.0 * s2, max_relative = 1e-12);
    }

    #[test]
    fn harvested_energy_matches_direct_sum() {
        let inst = instance(3, 2, 4, 61);
        let st = random_ps_state(&inst, 62);
        for (i, j) in inst.near_users() {
            let mut p = 0.0;
            for s in 0..inst.n_cells() {
                for l in 0..inst.users_per_cell() {
                    p += cvec::link_power(inst.channel(s, i, j), &st.w[s][l]);
                }
            }
            let expect = inst.power.eh_efficiency
                * (1.0 - st.alpha[i][j])
                * (p + inst.power.noise_total_w);
            assert_relative_eq!(
                harvested_energy_ps(&inst, &st, (i, j)).unwrap(),
                expect,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn ee_objective_reference() {
        let inst = instance(2, 1, 3, 71);
        let st = random_ps_state(&inst, 72);
        let rates = achieved_rates_ps(&inst, &st).unwrap();
        let sum: f64 = rates.iter().flatten().sum();
        let denom = inst.power.amp_inefficiency * total_power(&st.w)
            + inst.power.circuit_power_total_w(inst.antennas());
        assert_relative_eq!(
            ee_objective_ps(&inst, &st).unwrap(),
            sum / denom,
            max_relative = 1e-12
        );

        // All-zero beams give zero EE.
        let mut zero = st.clone();
        for cell in &mut zero.w {
            for b in cell {
                b.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            }
        }
        assert_eq!(ee_objective_ps(&inst, &zero).unwrap(), 0.0);
    }

    #[test]
    fn oma_reference_points() {
        let inst = instance(2, 2, 3, 81);
        let w = random_beams(&inst, 82, 1.0);
        let tau = vec![vec![0.5; inst.pairs_per_cell()]; inst.n_cells()];
        let rates = oma_rates(&inst, &w, &tau).unwrap();
        // tau = 1: far users get nothing.
        let tau_one = vec![vec![1.0; inst.pairs_per_cell()]; inst.n_cells()];
        let rates_one = oma_rates(&inst, &w, &tau_one).unwrap();
        for (i, j) in inst.near_users() {
            let q = inst.partner(i, j);
            assert_eq!(rates_one[i][q], 0.0);
            assert_relative_eq!(rates_one[i][j], 2.0 * rates[i][j], max_relative = 1e-12);
        }

        // Zero beam -> zero rate.
        let mut w0 = w.clone();
        w0[0][0] = vec![Complex64::new(0.0, 0.0); inst.antennas()];
        let r0 = oma_rates(&inst, &w0, &tau).unwrap();
        assert_eq!(r0[0][0], 0.0);
    }

    #[test]
    fn oma_matches_direct_evaluation() {
        let inst = instance(3, 2, 4, 91);
        let w = random_beams(&inst, 92, 1.0);
        let tau = vec![vec![0.5; inst.pairs_per_cell()]; inst.n_cells()];
        let rates = oma_rates(&inst, &w, &tau).unwrap();
        let s2 = inst.power.noise_total_w;
        for (i, j) in inst.near_users() {
            let q = inst.partner(i, j);
            let mut int_near = 0.0;
            let mut int_far = 0.0;
            for s in 0..inst.n_cells() {
                for l in 0..inst.users_per_cell() {
                    if (s, l) == (i, j) || (s, l) == (i, q) {
                        continue;
                    }
                    int_near += cvec::link_power(inst.channel(s, i, j), &w[s][l]);
                    int_far += cvec::link_power(inst.channel(s, i, q), &w[s][l]);
                }
            }
            let sig_n = cvec::link_power(inst.channel(i, i, j), &w[i][j]);
            let sig_f = cvec::link_power(inst.channel(i, i, q), &w[i][q]);
            assert_relative_eq!(
                rates[i][j],
                0.5 * (1.0 + sig_n / (int_near + s2)).ln(),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                rates[i][q],
                0.5 * (1.0 + sig_f / (int_far + s2)).ln(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn ps_rate_monotone_in_alpha_and_eh_antitone() {
        let inst = instance(2, 1, 3, 101);
        let mut st = random_ps_state(&inst, 102);
        st.alpha[0][0] = 0.4;
        let r_lo = achieved_rates_ps(&inst, &st).unwrap()[0][0];
        let e_lo = harvested_energy_ps(&inst, &st, (0, 0)).unwrap();
        st.alpha[0][0] = 0.7;
        let r_hi = achieved_rates_ps(&inst, &st).unwrap()[0][0];
        let e_hi = harvested_energy_ps(&inst, &st, (0, 0)).unwrap();
        assert!(r_hi > r_lo);
        assert!(e_hi < e_lo);
    }

    #[test]
    fn audits_flag_violations() {
        let inst = instance(2, 1, 3, 111);
        let mut st = random_ps_state(&inst, 112);
        assert!(audit_ps(&inst, &st, None).unwrap().power < 1e-12);

        // Blow the power budget.
        for b in &mut st.w[0] {
            for x in b.iter_mut() {
                *x *= 2.0;
            }
        }
        let rep = audit_ps(&inst, &st, None).unwrap();
        assert!(rep.power > 1.0); // 4x power on one BS
    }
}

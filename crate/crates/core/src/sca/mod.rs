//! Path-following (successive convex approximation) algorithms.
//!
//! Six algorithm variants share one pattern: find a feasible starting
//! point with a dedicated feasibility search, then repeatedly solve a
//! convex subproblem built from tight inner surrogates at the current
//! iterate. The exact objective (evaluated by [`crate::perf`], never the
//! surrogate) is nondecreasing along the iterates; iteration stops when
//! its relative change drops below `rel_obj_tol`.
//!
//! | id          | objective                    | receiver  |
//! |-------------|------------------------------|-----------|
//! | `ps-maxmin` | worst-user rate              | PS        |
//! | `ps-ee`     | energy efficiency under QoS  | PS        |
//! | `ts-maxmin` | worst-user rate              | TS        |
//! | `ts-ee`     | energy efficiency under QoS  | TS        |
//! | `oma-maxmin`| worst-user rate              | OMA       |
//! | `oma-ee`    | energy efficiency under QoS  | OMA       |
//!
//! All conic subproblems are built in noise-normalized units (total
//! receiver noise = 1, per-BS power budget = 1) and mapped back to watts
//! on extraction; raw watt magnitudes (~1e-13 noise floors) would destroy
//! interior-point conditioning.

mod oma;
mod ps;
mod ts;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::conic::{ConicProgram, CxVar, LinExpr, SolveResult, SolveStatus, Var};
use crate::error::{Error, Result};
use crate::netmodel::NetworkInstance;
use crate::perf::{self, BeamStatePS, BeamStateTS, FeasReport, OmaState};
use crate::surrogate::{self, SurrogateCoeffs};

pub use oma::init_oma;
pub use ps::init_ps;
pub use ts::init_ts;

/// Iteration control knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaSettings {
    pub max_iters: usize,
    /// Stop when the relative objective change over one iteration falls
    /// below this.
    pub rel_obj_tol: f64,
    /// Exact-feasibility audit tolerance.
    pub feas_tol: f64,
    /// Conic solver tolerance.
    pub solver_tol: f64,
    /// Candidate initial TS ratios, tried in order.
    pub rho_grid: Vec<f64>,
    /// Iteration budget of each feasibility search phase.
    pub init_max_iters: usize,
    /// Number of random initializations; the best final objective wins.
    pub restarts: usize,
}

impl Default for ScaSettings {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_obj_tol: 1e-3,
            feas_tol: 1e-6,
            solver_tol: 1e-8,
            rho_grid: vec![0.2, 0.35, 0.5, 0.65, 0.8],
            init_max_iters: 600,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmId {
    PsMaxmin,
    PsEe,
    TsMaxmin,
    TsEe,
    OmaMaxmin,
    OmaEe,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 6] = [
        AlgorithmId::PsMaxmin,
        AlgorithmId::PsEe,
        AlgorithmId::TsMaxmin,
        AlgorithmId::TsEe,
        AlgorithmId::OmaMaxmin,
        AlgorithmId::OmaEe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmId::PsMaxmin => "ps-maxmin",
            AlgorithmId::PsEe => "ps-ee",
            AlgorithmId::TsMaxmin => "ts-maxmin",
            AlgorithmId::TsEe => "ts-ee",
            AlgorithmId::OmaMaxmin => "oma-maxmin",
            AlgorithmId::OmaEe => "oma-ee",
        }
    }

    pub fn is_ee(&self) -> bool {
        matches!(self, AlgorithmId::PsEe | AlgorithmId::TsEe | AlgorithmId::OmaEe)
    }
}

impl std::fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm id `{s}`")))
    }
}

/// One row of an iteration trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRow {
    pub iter: usize,
    /// Exact objective of the iterate (worst-user rate in nats, or EE).
    pub exact_objective: f64,
    /// Objective value reported by the convex subproblem.
    pub surrogate_objective: f64,
    pub solver_status: String,
    pub solver_iterations: u32,
    pub eh_residual: f64,
    pub power_residual: f64,
    pub qos_residual: f64,
    /// EE-TS only: the fractional-objective level of this iteration.
    pub t_k: Option<f64>,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub algorithm: String,
    pub rows: Vec<IterRow>,
}

impl IterationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iter,exact_objective,surrogate_objective,solver_status,solver_iterations,\
             eh_residual,power_residual,qos_residual,t_k,wall_s\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.9e},{:.9e},{},{},{:.3e},{:.3e},{:.3e},{},{:.6}\n",
                r.iter,
                r.exact_objective,
                r.surrogate_objective,
                r.solver_status,
                r.solver_iterations,
                r.eh_residual,
                r.power_residual,
                r.qos_residual,
                r.t_k.map_or_else(String::new, |t| format!("{t:.9e}")),
                r.wall_s,
            ));
        }
        out
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunOutcome {
    Converged,
    MaxIters,
    /// No feasible point found; a typed outcome rather than an error so
    /// Monte-Carlo sweeps can count it.
    Infeasible(String),
    SolverFailure(String),
}

#[derive(Debug, Clone)]
pub enum FinalState {
    Ps(BeamStatePS),
    Ts(BeamStateTS),
    Oma(OmaState),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub state: Option<FinalState>,
    pub trace: IterationTrace,
    /// Exact final objective (nats/s/Hz for max-min, nats/s/Hz per watt
    /// for EE); NaN when no feasible point was found.
    pub objective: f64,
    pub iterations: usize,
}

impl RunResult {
    pub fn is_feasible(&self) -> bool {
        !matches!(self.outcome, RunOutcome::Infeasible(_))
    }
}

// ---------------------------------------------------------------------------
// Shared subproblem context
// ---------------------------------------------------------------------------

/// Strictness margin used for open-interval variables (α, ρ). The
/// reciprocal cones on `σ_c²/α`, `e^min/(1-α)` and `e^min/ρ` blow up at
/// the interval ends and stall the interior-point method there, while
/// the achievable objective changes by O(SPLIT_EPS) at most; splits are
/// kept this far inside (0, 1).
pub(crate) const SPLIT_EPS: f64 = 1e-2;
/// Relative trust-region floor: `lin(x) >= TRUST_DELTA * ||x̄||²`. The
/// floor bounds the aspect ratio of the reciprocal cones (a beam may
/// still shed 30 dB of alignment per iteration); interior-point runs
/// stall on the razor-thin cones a looser floor admits.
pub(crate) const TRUST_DELTA: f64 = 1e-3;

/// Noise-normalized view of an instance used by all subproblem builders.
///
/// Channels absorb `sqrt(P^max / σ²_total)` so that a unit-cap beam `w_u`
/// (`||w_u||² <= 1` per BS) produces link powers `|h_s w_u|²` measured in
/// units of total noise power.
pub(crate) struct Ctx<'a> {
    pub inst: &'a NetworkInstance,
    hs: Vec<Vec<Vec<Vec<Complex64>>>>,
    /// EH threshold in noise units.
    pub e_min: f64,
    /// Circuit noise in noise units.
    pub sc2: f64,
    pub zeta: f64,
    /// Watt-domain constants for EE terms.
    pub p_max_w: f64,
    pub p_c_w: f64,
    pub xi: f64,
    pub qos: f64,
}

impl<'a> Ctx<'a> {
    pub fn new(inst: &'a NetworkInstance) -> Self {
        let s2 = inst.power.noise_total_w;
        let gain = (inst.power.p_max_w / s2).sqrt();
        let hs = inst
            .channels
            .iter()
            .map(|per_i| {
                per_i
                    .iter()
                    .map(|per_j| {
                        per_j.iter().map(|h| crate::cvec::scale(h, gain)).collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            inst,
            hs,
            e_min: inst.power.eh_threshold_w / s2,
            sc2: inst.power.circuit_noise_w / s2,
            zeta: inst.power.eh_efficiency,
            p_max_w: inst.power.p_max_w,
            p_c_w: inst.power.circuit_power_total_w(inst.antennas()),
            xi: inst.power.amp_inefficiency,
            qos: inst.power.qos_rate_nats,
        }
    }

    /// Scaled channel from BS `s` to user (i, j).
    pub fn h(&self, s: usize, i: usize, j: usize) -> &[Complex64] {
        &self.hs[s][i][j]
    }

    /// Convert a watt-domain beam set to the unit-cap domain.
    pub fn to_unit(&self, w: &[Vec<Vec<Complex64>>]) -> Vec<Vec<Vec<Complex64>>> {
        let s = 1.0 / self.p_max_w.sqrt();
        w.iter()
            .map(|cell| cell.iter().map(|b| crate::cvec::scale(b, s)).collect())
            .collect()
    }

    /// Convert a unit-cap beam back to watts.
    pub fn to_watts(&self, w_u: &[Complex64]) -> Vec<Complex64> {
        crate::cvec::scale(w_u, self.p_max_w.sqrt())
    }
}

/// Declare one complex beam variable per (cell, user-slot) in the
/// unit-cap domain.
pub(crate) fn declare_beams(
    p: &mut ConicProgram,
    ctx: &Ctx,
    prefix: &str,
    per_cell: usize,
) -> Vec<Vec<CxVar>> {
    (0..ctx.inst.n_cells())
        .map(|i| {
            (0..per_cell)
                .map(|j| p.complex_vector(&format!("{prefix}_{i}_{j}"), ctx.inst.antennas()))
                .collect()
        })
        .collect()
}

/// Affine (Re, Im) forms of every beam of `wv` as seen at receiver `rx`,
/// skipping excluded (cell, user) pairs. Entry order matches
/// [`expansion_stack`].
pub(crate) fn stack_exprs(
    ctx: &Ctx,
    wv: &[Vec<CxVar>],
    rx: (usize, usize),
    exclude: &[(usize, usize)],
) -> Vec<(LinExpr, LinExpr)> {
    let mut out = Vec::new();
    for (s, cell) in wv.iter().enumerate() {
        for (l, beam) in cell.iter().enumerate() {
            if exclude.contains(&(s, l)) {
                continue;
            }
            out.push(beam.action(ctx.h(s, rx.0, rx.1)));
        }
    }
    out
}

/// Expansion-point link amplitudes matching [`stack_exprs`] entries;
/// `w_u` are unit-cap beams.
pub(crate) fn expansion_stack(
    ctx: &Ctx,
    w_u: &[Vec<Vec<Complex64>>],
    rx: (usize, usize),
    exclude: &[(usize, usize)],
) -> Vec<Complex64> {
    let mut out = Vec::new();
    for (s, cell) in w_u.iter().enumerate() {
        for (l, beam) in cell.iter().enumerate() {
            if exclude.contains(&(s, l)) {
                continue;
            }
            out.push(crate::cvec::row_action(ctx.h(s, rx.0, rx.1), beam));
        }
    }
    out
}

/// Translate one concave rate bound into conic rows and return an affine
/// expression `ub` that satisfies `ub <= Λ(x, y[, μ])` for every feasible
/// point; callers post `lhs <= ub`.
///
/// Adds the trust-region row for `x`, the reciprocal hyperbolic cone, the
/// quadratic-penalty cone and (for `Λ`) the `σ_c²/μ` cone.
pub(crate) fn lambda_upper_expr(
    p: &mut ConicProgram,
    coeffs: &SurrogateCoeffs,
    x_k: Complex64,
    x_aff: (LinExpr, LinExpr),
    y_aff: &[(LinExpr, LinExpr)],
    mu_expr: Option<LinExpr>,
) -> LinExpr {
    let x_pow_k = coeffs.x_pow_k;

    // lin(x)/||x̄||² = (2 Re{x̄* x} - ||x̄||²)/||x̄||², kept at unit scale
    // for solver conditioning, with a relative positivity floor.
    let x_lin_rel = x_aff.0.clone() * (2.0 * x_k.re / x_pow_k)
        + x_aff.1.clone() * (2.0 * x_k.im / x_pow_k)
        - 1.0;
    p.con_le(-x_lin_rel.clone() + TRUST_DELTA);

    // t_rec >= ||x̄||² / lin(x) = 1 / (lin(x)/||x̄||²).
    let t_rec = p.scalar("t_rec");
    p.add_hyperbolic(t_rec.expr(), x_lin_rel, vec![LinExpr::constant(1.0)]);

    // t_quad >= b ||x||² + c ||y||².
    let t_quad = p.scalar("t_quad");
    let mut wvec = vec![x_aff.0 * coeffs.b.sqrt(), x_aff.1 * coeffs.b.sqrt()];
    for (re, im) in y_aff {
        wvec.push(re.clone() * coeffs.c.sqrt());
        wvec.push(im.clone() * coeffs.c.sqrt());
    }
    p.add_hyperbolic(t_quad.expr(), LinExpr::constant(1.0), wvec);

    let mut ub = LinExpr::constant(coeffs.a) - t_rec.expr() - t_quad.expr();
    if let Some(mu) = mu_expr {
        // t_mu >= σ_c² / μ.
        let t_mu = p.scalar("t_mu");
        p.add_hyperbolic(t_mu.expr(), mu, vec![LinExpr::constant(coeffs.sigma_c_sq.sqrt())]);
        ub = ub - t_mu.expr() * coeffs.c;
    }
    ub
}

/// Linearized total received power `Σ (2 Re{x̄* (h w)} - |x̄|²)` over the
/// given beam variables at receiver `rx` (noise units); the affine
/// minorant used by every EH constraint.
pub(crate) fn linearized_received_power(
    ctx: &Ctx,
    wv: &[Vec<CxVar>],
    w_u: &[Vec<Vec<Complex64>>],
    rx: (usize, usize),
) -> LinExpr {
    let mut e = LinExpr::zero();
    for (s, cell) in wv.iter().enumerate() {
        for (l, beam) in cell.iter().enumerate() {
            let h = ctx.h(s, rx.0, rx.1);
            let x_k = crate::cvec::row_action(h, &w_u[s][l]);
            let (re, im) = beam.action(h);
            e = e + re * (2.0 * x_k.re) + im * (2.0 * x_k.im) - x_k.norm_sqr();
        }
    }
    e
}

/// Draw a complex Gaussian beam set, one beam per (cell, slot), scaled so
/// each BS radiates exactly `power_frac * P^max` in the watt domain.
pub(crate) fn random_beams(
    inst: &NetworkInstance,
    per_cell: usize,
    rng: &mut ChaCha8Rng,
    power_frac: f64,
) -> Vec<Vec<Vec<Complex64>>> {
    let mut w = Vec::with_capacity(inst.n_cells());
    for _ in 0..inst.n_cells() {
        let mut cell = Vec::with_capacity(per_cell);
        for _ in 0..per_cell {
            let b: Vec<Complex64> = (0..inst.antennas())
                .map(|_| {
                    Complex64::new(
                        rng.sample(rand_distr::StandardNormal),
                        rng.sample(rand_distr::StandardNormal),
                    )
                })
                .collect();
            cell.push(b);
        }
        let total: f64 = cell.iter().map(|b| crate::cvec::norm_sq(b)).sum();
        let scale = (power_frac * inst.power.p_max_w / total).sqrt();
        for b in &mut cell {
            for x in b.iter_mut() {
                *x *= scale;
            }
        }
        w.push(cell);
    }
    w
}

/// Map non-optimal solver terminations to classifiable errors.
pub(crate) fn expect_optimal(r: &SolveResult, what: &str) -> Result<()> {
    match r.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => {
            Err(Error::Infeasible(format!("{what}: subproblem infeasible")))
        }
        SolveStatus::NumericalFailure => {
            Err(Error::SolverFailure(format!("{what}: solver reported {}", r.status_detail)))
        }
    }
}

/// Solve one subproblem, retrying once at reduced accuracy when the
/// interior-point run breaks down numerically.
pub(crate) fn solve_subproblem(
    p: &ConicProgram,
    settings: &ScaSettings,
    what: &str,
) -> Result<SolveResult> {
    let r = p.solve(settings.solver_tol)?;
    match r.status {
        SolveStatus::Optimal => Ok(r),
        SolveStatus::Infeasible => {
            Err(Error::Infeasible(format!("{what}: subproblem infeasible")))
        }
        SolveStatus::NumericalFailure => {
            let relaxed = (settings.solver_tol * 100.0).clamp(settings.solver_tol, 1e-6);
            let r2 = p.solve(relaxed)?;
            expect_optimal(&r2, what)?;
            Ok(r2)
        }
    }
}

pub(crate) fn clamp_split(v: f64) -> f64 {
    v.clamp(SPLIT_EPS, 1.0 - SPLIT_EPS)
}

/// Result of one path-following step: the exact objective of the new
/// iterate, the subproblem's own objective, solver diagnostics, the
/// exact feasibility audit and (EE-TS) the fractional level.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub exact_objective: f64,
    pub surrogate_objective: f64,
    pub solver: SolveResult,
    pub feas: FeasReport,
    pub t_k: Option<f64>,
}

/// Solve one subproblem at the given iterate and return the next
/// feasible point. `state` and `algorithm` must agree on the receiver
/// architecture.
pub fn step(
    inst: &NetworkInstance,
    state: &FinalState,
    algorithm: AlgorithmId,
    settings: &ScaSettings,
) -> Result<(FinalState, StepRecord)> {
    let ctx = Ctx::new(inst);
    match state {
        FinalState::Ps(st) => ps::step_ps(&ctx, st, algorithm, settings),
        FinalState::Ts(st) => ts::step_ts(&ctx, st, algorithm, settings),
        FinalState::Oma(st) => oma::step_oma(&ctx, st, algorithm, settings),
    }
}

fn push_row(trace: &mut IterationTrace, iter: usize, rec: &StepRecord, wall: f64) {
    trace.rows.push(IterRow {
        iter,
        exact_objective: rec.exact_objective,
        surrogate_objective: rec.surrogate_objective,
        solver_status: rec.solver.status_detail.clone(),
        solver_iterations: rec.solver.iterations,
        eh_residual: rec.feas.eh,
        power_residual: rec.feas.power,
        qos_residual: rec.feas.qos,
        t_k: rec.t_k,
        wall_s: wall,
    });
}

/// Run one algorithm on one instance. Infeasible scenarios and solver
/// failures are reported through [`RunOutcome`], not as `Err`.
pub fn run(
    inst: &NetworkInstance,
    algorithm: AlgorithmId,
    settings: &ScaSettings,
    seed: u64,
) -> Result<RunResult> {
    let mut best: Option<RunResult> = None;
    for restart in 0..settings.restarts.max(1) {
        let restart_seed =
            seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(restart as u64));
        let result = run_once(inst, algorithm, settings, restart_seed)?;
        let better = match &best {
            None => true,
            Some(b) => match (b.is_feasible(), result.is_feasible()) {
                (false, true) => true,
                (true, false) => false,
                _ => result.objective > b.objective,
            },
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn run_once(
    inst: &NetworkInstance,
    algorithm: AlgorithmId,
    settings: &ScaSettings,
    seed: u64,
) -> Result<RunResult> {
    let ctx = Ctx::new(inst);
    let mut trace =
        IterationTrace { algorithm: algorithm.as_str().to_string(), rows: Vec::new() };

    let init = match algorithm {
        AlgorithmId::PsMaxmin | AlgorithmId::PsEe => {
            ps::init_ps_inner(&ctx, settings, seed, algorithm == AlgorithmId::PsEe)
                .map(FinalState::Ps)
        }
        AlgorithmId::TsMaxmin | AlgorithmId::TsEe => {
            ts::init_ts_inner(&ctx, settings, seed, algorithm == AlgorithmId::TsEe)
                .map(FinalState::Ts)
        }
        AlgorithmId::OmaMaxmin | AlgorithmId::OmaEe => {
            oma::init_oma_inner(&ctx, settings, seed, algorithm == AlgorithmId::OmaEe)
                .map(FinalState::Oma)
        }
    };
    let mut state = match init {
        Ok(s) => s,
        Err(Error::Infeasible(msg)) => {
            return Ok(RunResult {
                outcome: RunOutcome::Infeasible(msg),
                state: None,
                trace,
                objective: f64::NAN,
                iterations: 0,
            });
        }
        Err(Error::SolverFailure(msg)) => {
            return Ok(RunResult {
                outcome: RunOutcome::SolverFailure(msg),
                state: None,
                trace,
                objective: f64::NAN,
                iterations: 0,
            });
        }
        Err(e) => return Err(e),
    };

    let mut last_obj = f64::NEG_INFINITY;
    let mut outcome = RunOutcome::MaxIters;
    let mut iterations = 0usize;
    for iter in 0..settings.max_iters {
        let t0 = Instant::now();
        let step = match &state {
            FinalState::Ps(st) => ps::step_ps(&ctx, st, algorithm, settings),
            FinalState::Ts(st) => ts::step_ts(&ctx, st, algorithm, settings),
            FinalState::Oma(st) => oma::step_oma(&ctx, st, algorithm, settings),
        };
        let (new_state, rec) = match step {
            Ok(v) => v,
            Err(Error::SolverFailure(msg)) | Err(Error::Infeasible(msg)) => {
                outcome = RunOutcome::SolverFailure(msg);
                break;
            }
            Err(e) => return Err(e),
        };

        // A reduced-accuracy solve can return a point marginally worse
        // than the current iterate, which stays feasible for its own
        // subproblem; keep the incumbent and stop instead of accepting a
        // regression.
        let obj = rec.exact_objective;
        if iter > 0 && obj < last_obj - settings.feas_tol * last_obj.abs().max(1.0) {
            outcome = RunOutcome::Converged;
            break;
        }
        iterations = iter + 1;
        push_row(&mut trace, iterations, &rec, t0.elapsed().as_secs_f64());
        state = new_state;

        if iter > 0 {
            let delta = (obj - last_obj).abs();
            if delta <= settings.rel_obj_tol * last_obj.abs().max(1e-12) {
                outcome = RunOutcome::Converged;
                break;
            }
        }
        last_obj = obj;
    }

    let objective = exact_objective(inst, &state, algorithm)?;
    Ok(RunResult { outcome, state: Some(state), trace, objective, iterations })
}

/// Exact objective of a state under the given algorithm's metric.
pub fn exact_objective(
    inst: &NetworkInstance,
    state: &FinalState,
    algorithm: AlgorithmId,
) -> Result<f64> {
    Ok(match (state, algorithm) {
        (FinalState::Ps(st), AlgorithmId::PsMaxmin) => {
            min_rate(&perf::achieved_rates_ps(inst, st)?)
        }
        (FinalState::Ps(st), AlgorithmId::PsEe) => perf::ee_objective_ps(inst, st)?,
        (FinalState::Ts(st), AlgorithmId::TsMaxmin) => {
            min_rate(&perf::achieved_rates_ts(inst, st)?)
        }
        (FinalState::Ts(st), AlgorithmId::TsEe) => perf::ee_objective_ts(inst, st)?,
        (FinalState::Oma(st), AlgorithmId::OmaMaxmin) => {
            min_rate(&perf::oma_rates(inst, &st.w, &st.tau)?)
        }
        (FinalState::Oma(st), AlgorithmId::OmaEe) => perf::ee_objective_oma(inst, st)?,
        _ => return Err(Error::Program("state/algorithm mismatch".into())),
    })
}

pub fn min_rate(rates: &[Vec<f64>]) -> f64 {
    rates.iter().flatten().copied().fold(f64::INFINITY, f64::min)
}

pub fn sum_rate(rates: &[Vec<f64>]) -> f64 {
    rates.iter().flatten().sum()
}

// Declaration helpers shared by the per-architecture builders.

pub(crate) fn declare_rates(p: &mut ConicProgram, ctx: &Ctx) -> Vec<Vec<Var>> {
    (0..ctx.inst.n_cells())
        .map(|i| {
            (0..ctx.inst.users_per_cell())
                .map(|j| {
                    let r = p.scalar(&format!("r_{i}_{j}"));
                    p.con_le(-r.expr()); // rates are nonnegative
                    r
                })
                .collect()
        })
        .collect()
}

pub(crate) fn sum_rate_expr(r: &[Vec<Var>]) -> LinExpr {
    let mut e = LinExpr::zero();
    for cell in r {
        for v in cell {
            e = e + v.expr();
        }
    }
    e
}

/// `γ <= r[i][j]` for every user, maximizing γ (the max-min epigraph).
pub(crate) fn maxmin_objective(p: &mut ConicProgram, r: &[Vec<Var>]) -> Var {
    let gamma = p.scalar("gamma");
    for cell in r {
        for v in cell {
            p.con_le(gamma.expr() - v.expr());
        }
    }
    p.maximize(gamma.expr());
    gamma
}

/// Relative safety margin on subproblem QoS rows. The delivered state
/// must satisfy the exact thresholds even after solver-level slop, so
/// the subproblems ask for marginally more.
pub(crate) const QOS_MARGIN: f64 = 2e-3;

/// Inner margin on power budgets: subproblems spend at most
/// `(1 - POWER_MARGIN) P^max`.
pub(crate) const POWER_MARGIN: f64 = 1e-3;

/// Inner margin on normalized EH rows in the path-following steps.
pub(crate) const EH_ROW_MARGIN: f64 = 5e-3;

/// Unit-cap SOC bound with the power margin applied.
pub(crate) fn power_cap_expr() -> LinExpr {
    LinExpr::constant((1.0 - POWER_MARGIN).sqrt())
}

pub(crate) fn qos_rows(p: &mut ConicProgram, ctx: &Ctx, r: &[Vec<Var>]) {
    for cell in r {
        for v in cell {
            p.con_le(-v.expr() + ctx.qos * (1.0 + QOS_MARGIN));
        }
    }
}

/// Exact rate the QoS feasibility phases chase: strictly above the
/// margined subproblem rows, so the first EE iteration starts feasible.
pub(crate) fn qos_init_target(ctx: &Ctx) -> f64 {
    ctx.qos * (1.0 + 2.0 * QOS_MARGIN)
}

/// Normalized EH margin the feasibility phases chase: strictly above the
/// margined step rows.
pub(crate) const EH_INIT_MARGIN: f64 = 2.0 * EH_ROW_MARGIN;

/// Flags a feasibility search whose max-min margin objective has stopped
/// improving while still short of its target, so the caller can redraw
/// rather than burn the whole iteration budget.
pub(crate) struct StallDetector {
    last: Option<f64>,
    small_steps: usize,
}

impl StallDetector {
    pub fn new() -> Self {
        Self { last: None, small_steps: 0 }
    }

    /// Feed the latest objective; returns true once five consecutive
    /// improvements fall below 1e-4 (relative to scale).
    pub fn update(&mut self, value: f64) -> bool {
        if let Some(last) = self.last {
            if value - last <= 1e-4 * last.abs().max(1e-2) {
                self.small_steps += 1;
            } else {
                self.small_steps = 0;
            }
        }
        self.last = Some(value);
        self.small_steps >= 5
    }
}

/// Sub-seed for initializer redraw attempts; attempt 0 keeps the caller's
/// seed.
pub(crate) fn attempt_seed(seed: u64, attempt: u32) -> u64 {
    seed ^ u64::from(attempt).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Per-attempt iteration budgets: two quick redraws, then one run at the
/// full configured budget.
pub(crate) fn attempt_budget(settings: &ScaSettings, attempt: u32) -> usize {
    if attempt < 2 {
        settings.init_max_iters.min(150)
    } else {
        settings.init_max_iters
    }
}

/// Λ/Λ₀ coefficients at an expansion point, in noise units.
pub(crate) fn coeffs_at(
    ctx: &Ctx,
    x_k: Complex64,
    y_k_pow: f64,
    mu_k: Option<f64>,
) -> Result<SurrogateCoeffs> {
    match mu_k {
        Some(mu) => surrogate::coeffs_lambda(x_k.norm_sqr(), y_k_pow, mu, 1.0, ctx.sc2),
        None => surrogate::coeffs_lambda0(x_k.norm_sqr(), y_k_pow, 1.0),
    }
}

pub(crate) fn stack_power(stack: &[Complex64]) -> f64 {
    stack.iter().map(|x| x.norm_sqr()).sum()
}

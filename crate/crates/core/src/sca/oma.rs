//! OMA baseline subproblems. Cluster-internal TDMA with a fixed
//! equal-time share (`τ = 1/2`), no SIC, and energy harvesting during the
//! partner slot. Beams are re-optimized by the same path-following
//! machinery as the NOMA problems so the comparison isolates the access
//! scheme.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conic::{ConicProgram, CxVar, LinExpr, Var};
use crate::error::{Error, Result};
use crate::netmodel::NetworkInstance;
use crate::perf::{self, OmaState};
use crate::sca::{
    attempt_budget, attempt_seed, coeffs_at, declare_beams, declare_rates, expansion_stack, solve_subproblem,
    lambda_upper_expr, maxmin_objective, min_rate, power_cap_expr, qos_init_target, qos_rows, random_beams, stack_exprs,
    stack_power, sum_rate_expr, AlgorithmId, Ctx, EH_INIT_MARGIN, EH_ROW_MARGIN, FinalState, ScaSettings, StallDetector, StepRecord,
};

/// Equal-time share within each cluster.
pub const DEFAULT_TIME_SHARE: f64 = 0.5;

struct OmaVars {
    w: Vec<Vec<CxVar>>,
}

fn declare_oma_vars(p: &mut ConicProgram, ctx: &Ctx) -> OmaVars {
    OmaVars { w: declare_beams(p, ctx, "w", ctx.inst.users_per_cell()) }
}

fn add_power_budgets(p: &mut ConicProgram, v: &OmaVars) {
    for cell in &v.w {
        let coords: Vec<LinExpr> = cell.iter().flat_map(|b| b.coords(1.0)).collect();
        p.soc(power_cap_expr(), coords);
    }
}

fn add_rate_bounds(
    p: &mut ConicProgram,
    ctx: &Ctx,
    w_u: &[Vec<Vec<Complex64>>],
    tau: &[Vec<f64>],
    v: &OmaVars,
    r: &[Vec<Var>],
) -> Result<()> {
    for (i, j) in ctx.inst.near_users() {
        let q = ctx.inst.partner(i, j);
        let t = tau[i][j];
        let exclude = [(i, q), (i, j)];

        let h_near = ctx.h(i, i, j);
        let x_k = crate::cvec::row_action(h_near, &w_u[i][j]);
        let y_k = expansion_stack(ctx, w_u, (i, j), &exclude);
        let coeffs = coeffs_at(ctx, x_k, stack_power(&y_k), None)?;
        let x_aff = v.w[i][j].action(h_near);
        let y_aff = stack_exprs(ctx, &v.w, (i, j), &exclude);
        let ub = lambda_upper_expr(p, &coeffs, x_k, x_aff, &y_aff, None);
        p.con_le(r[i][j].expr() * (1.0 / t) - ub);

        let h_far = ctx.h(i, i, q);
        let x_k = crate::cvec::row_action(h_far, &w_u[i][q]);
        let y_k = expansion_stack(ctx, w_u, (i, q), &exclude);
        let coeffs = coeffs_at(ctx, x_k, stack_power(&y_k), None)?;
        let x_aff = v.w[i][q].action(h_far);
        let y_aff = stack_exprs(ctx, &v.w, (i, q), &exclude);
        let ub = lambda_upper_expr(p, &coeffs, x_k, x_aff, &y_aff, None);
        p.con_le(r[i][q].expr() * (1.0 / (1.0 - t)) - ub);
    }
    Ok(())
}

/// Linearized received power excluding some beams (noise units).
fn linearized_power_excl(
    ctx: &Ctx,
    wv: &[Vec<CxVar>],
    w_u: &[Vec<Vec<Complex64>>],
    rx: (usize, usize),
    exclude: &[(usize, usize)],
) -> LinExpr {
    let mut e = LinExpr::zero();
    for (s, cell) in wv.iter().enumerate() {
        for (l, beam) in cell.iter().enumerate() {
            if exclude.contains(&(s, l)) {
                continue;
            }
            let h = ctx.h(s, rx.0, rx.1);
            let x_k = crate::cvec::row_action(h, &w_u[s][l]);
            let (re, im) = beam.action(h);
            e = e + re * (2.0 * x_k.re) + im * (2.0 * x_k.im) - x_k.norm_sqr();
        }
    }
    e
}

/// EH margins `ζ (1-τ)(lin_p_excl_own + σ²) - e^min` per near user,
/// normalized by the threshold scale. With `τ` fixed these are affine;
/// no cone needed.
fn eh_margin_exprs(
    ctx: &Ctx,
    w_u: &[Vec<Vec<Complex64>>],
    tau: &[Vec<f64>],
    v: &OmaVars,
) -> Vec<LinExpr> {
    let e_scale = ctx.e_min.max(1.0);
    let mut out = Vec::new();
    for (i, j) in ctx.inst.near_users() {
        let lin = linearized_power_excl(ctx, &v.w, w_u, (i, j), &[(i, j)]);
        let m = ((lin + 1.0) * (ctx.zeta * (1.0 - tau[i][j])) - ctx.e_min) * (1.0 / e_scale);
        out.push(m);
    }
    out
}

fn extract_state(
    ctx: &Ctx,
    res: &crate::conic::SolveResult,
    v: &OmaVars,
    tau: &[Vec<f64>],
) -> Result<OmaState> {
    let w: Vec<Vec<Vec<Complex64>>> = v
        .w
        .iter()
        .map(|cell| cell.iter().map(|b| ctx.to_watts(&res.complex_value(*b))).collect())
        .collect();
    let mut st = OmaState { w, tau: tau.to_vec(), rates: vec![] };
    st.rates = perf::oma_rates(ctx.inst, &st.w, &st.tau)?;
    Ok(st)
}

pub(crate) fn step_oma(
    ctx: &Ctx,
    st: &OmaState,
    algorithm: AlgorithmId,
    settings: &ScaSettings,
) -> Result<(FinalState, StepRecord)> {
    let w_u = ctx.to_unit(&st.w);
    let mut p = ConicProgram::new();
    let v = declare_oma_vars(&mut p, ctx);
    let r = declare_rates(&mut p, ctx);
    add_rate_bounds(&mut p, ctx, &w_u, &st.tau, &v, &r)?;
    for m in eh_margin_exprs(ctx, &w_u, &st.tau, &v) {
        p.con_le(-m + EH_ROW_MARGIN);
    }
    add_power_budgets(&mut p, &v);

    let qos = match algorithm {
        AlgorithmId::OmaMaxmin => {
            maxmin_objective(&mut p, &r);
            None
        }
        AlgorithmId::OmaEe => {
            qos_rows(&mut p, ctx, &r);
            // Duty-weighted amplifier power over achieved sum rate.
            let t_amp = p.scalar("t_amp");
            let t_cir = p.scalar("t_cir");
            let sum_r = sum_rate_expr(&r);
            let mut coords = Vec::new();
            for (i, j) in ctx.inst.near_users() {
                let q = ctx.inst.partner(i, j);
                let t = st.tau[i][j];
                coords.extend(v.w[i][j].coords((ctx.xi * ctx.p_max_w * t).sqrt()));
                coords.extend(v.w[i][q].coords((ctx.xi * ctx.p_max_w * (1.0 - t)).sqrt()));
            }
            p.add_hyperbolic(t_amp.expr(), sum_r.clone(), coords);
            p.add_hyperbolic(t_cir.expr(), sum_r, vec![LinExpr::constant(ctx.p_c_w.sqrt())]);
            p.minimize(t_amp.expr() + t_cir.expr());
            Some(ctx.qos)
        }
        _ => return Err(Error::Program("step_oma called with a non-OMA algorithm".into())),
    };

    let res = solve_subproblem(&p, settings, algorithm.as_str())?;
    let new_state = extract_state(ctx, &res, &v, &st.tau)?;

    let (exact, surrogate) = match algorithm {
        AlgorithmId::OmaMaxmin => (min_rate(&new_state.rates), res.objective),
        _ => {
            let inv = if res.objective > 0.0 { 1.0 / res.objective } else { f64::NAN };
            (perf::ee_objective_oma(ctx.inst, &new_state)?, inv)
        }
    };
    let feas = perf::audit_oma(ctx.inst, &new_state, qos)?;
    Ok((
        FinalState::Oma(new_state),
        StepRecord {
            exact_objective: exact,
            surrogate_objective: surrogate,
            solver: res,
            feas,
            t_k: None,
        },
    ))
}

/// Worst normalized EH margin, the exact counterpart of the subproblem
/// EH rows.
fn exact_eh_margin(ctx: &Ctx, st: &OmaState) -> Result<f64> {
    let s2 = ctx.inst.power.noise_total_w;
    let e_scale = ctx.e_min.max(1.0);
    let mut worst = f64::INFINITY;
    for (i, j) in ctx.inst.near_users() {
        let e = perf::harvested_energy_oma(ctx.inst, st, (i, j))?;
        worst = worst.min((e / s2 - ctx.e_min) / e_scale);
    }
    Ok(worst)
}

/// Feasibility search for the OMA problems (fixed `τ = 1/2`), with
/// redraw attempts as in the PS initializer.
pub(crate) fn init_oma_inner(
    ctx: &Ctx,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
) -> Result<OmaState> {
    let mut last = None;
    for attempt in 0..3u32 {
        let budget = attempt_budget(settings, attempt);
        match init_oma_attempt(ctx, settings, attempt_seed(seed, attempt), with_qos, budget) {
            Ok(st) => return Ok(st),
            Err(e @ Error::Infeasible(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt ran"))
}

fn init_oma_attempt(
    ctx: &Ctx,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
    budget: usize,
) -> Result<OmaState> {
    let inst = ctx.inst;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_beams(inst, inst.users_per_cell(), &mut rng, 1.0);
    let tau = vec![vec![DEFAULT_TIME_SHARE; inst.pairs_per_cell()]; inst.n_cells()];
    let mut st = OmaState { w, tau: tau.clone(), rates: vec![] };
    st.rates = perf::oma_rates(inst, &st.w, &st.tau)?;

    let mut feasible = exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN;
    let mut stall = StallDetector::new();
    for _ in 0..budget {
        if feasible {
            break;
        }
        let w_u = ctx.to_unit(&st.w);
        let mut p = ConicProgram::new();
        let v = declare_oma_vars(&mut p, ctx);
        add_power_budgets(&mut p, &v);
        let gamma = p.scalar("gamma");
        for m in eh_margin_exprs(ctx, &w_u, &tau, &v) {
            p.con_le(gamma.expr() - m + 2.0 * EH_INIT_MARGIN);
        }
        p.maximize(gamma.expr());
        let res = solve_subproblem(&p, settings, "oma feasibility (EH)")?;
        st = extract_state(ctx, &res, &v, &tau)?;
        feasible = exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN;
        if !feasible && stall.update(res.objective) {
            return Err(Error::Infeasible("EH feasibility search stalled".into()));
        }
    }
    if !feasible {
        return Err(Error::Infeasible(
            "EH feasibility search exhausted its iteration budget".into(),
        ));
    }
    if !with_qos {
        return Ok(st);
    }

    let mut stall = StallDetector::new();
    for _ in 0..budget {
        let rates_ok = min_rate(&st.rates) >= qos_init_target(ctx);
        let eh_ok = exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN;
        if rates_ok && eh_ok {
            return Ok(st);
        }
        let w_u = ctx.to_unit(&st.w);
        let mut p = ConicProgram::new();
        let v = declare_oma_vars(&mut p, ctx);
        let r = declare_rates(&mut p, ctx);
        add_rate_bounds(&mut p, ctx, &w_u, &tau, &v, &r)?;
        add_power_budgets(&mut p, &v);
        let gamma = p.scalar("gamma");
        // EH stays hard while the search chases rate margins.
        for m in eh_margin_exprs(ctx, &w_u, &tau, &v) {
            p.con_le(-m + 2.0 * EH_INIT_MARGIN);
        }
        for cell in &r {
            for rv in cell {
                p.con_le(
                    gamma.expr() - (rv.expr() * (1.0 / qos_init_target(ctx)) - 1.0),
                );
            }
        }
        p.maximize(gamma.expr());
        let res = solve_subproblem(&p, settings, "oma feasibility (QoS)")?;
        st = extract_state(ctx, &res, &v, &tau)?;
        if stall.update(res.objective) {
            return Err(Error::Infeasible("QoS feasibility search stalled".into()));
        }
    }
    Err(Error::Infeasible("QoS feasibility search exhausted its iteration budget".into()))
}

/// Public initializer: a point feasible for the OMA max-min problem (or,
/// with `with_qos`, the OMA EE problem).
pub fn init_oma(
    inst: &NetworkInstance,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
) -> Result<OmaState> {
    init_oma_inner(&Ctx::new(inst), settings, seed, with_qos)
}

//! Power-splitting subproblems: worst-user rate maximization, energy
//! efficiency maximization, and their feasibility initializers.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conic::{ConicProgram, CxVar, LinExpr, Var};
use crate::error::{Error, Result};
use crate::netmodel::NetworkInstance;
use crate::perf::{self, BeamStatePS};
use crate::sca::{
    attempt_budget, attempt_seed, clamp_split, coeffs_at, declare_beams, declare_rates,
    expansion_stack, solve_subproblem,
    lambda_upper_expr, linearized_received_power, maxmin_objective, min_rate, power_cap_expr, qos_init_target, qos_rows,
    random_beams, stack_exprs, stack_power, sum_rate_expr, AlgorithmId, Ctx, EH_INIT_MARGIN, EH_ROW_MARGIN, FinalState, StallDetector,
    ScaSettings, StepRecord, SPLIT_EPS,
};

struct PsVars {
    w: Vec<Vec<CxVar>>,
    alpha: Vec<Vec<Var>>,
}

fn declare_ps_vars(p: &mut ConicProgram, ctx: &Ctx) -> PsVars {
    let w = declare_beams(p, ctx, "w", ctx.inst.users_per_cell());
    let alpha = (0..ctx.inst.n_cells())
        .map(|i| {
            (0..ctx.inst.pairs_per_cell())
                .map(|j| {
                    let a = p.scalar(&format!("alpha_{i}_{j}"));
                    p.con_le(-a.expr() + SPLIT_EPS);
                    p.con_le(a.expr() - (1.0 - SPLIT_EPS));
                    a
                })
                .collect()
        })
        .collect();
    PsVars { w, alpha }
}

fn add_power_budgets(p: &mut ConicProgram, v: &PsVars) {
    for cell in &v.w {
        let coords: Vec<LinExpr> = cell.iter().flat_map(|b| b.coords(1.0)).collect();
        p.soc(power_cap_expr(), coords);
    }
}

/// The three per-cluster rate bounds of the PS formulation, posted as
/// `r <= Λ/Λ₀` rows with their trust regions.
fn add_rate_bounds(
    p: &mut ConicProgram,
    ctx: &Ctx,
    w_u: &[Vec<Vec<Complex64>>],
    alpha_k: &[Vec<f64>],
    v: &PsVars,
    r: &[Vec<Var>],
) -> Result<()> {
    for (i, j) in ctx.inst.near_users() {
        let q = ctx.inst.partner(i, j);
        let a_k = alpha_k[i][j];

        // Far message at the near decoder: Λ with μ = α_{i,j}.
        let h_near = ctx.h(i, i, j);
        let x_k = crate::cvec::row_action(h_near, &w_u[i][q]);
        let y_k = expansion_stack(ctx, w_u, (i, j), &[(i, q)]);
        let coeffs = coeffs_at(ctx, x_k, stack_power(&y_k), Some(a_k))?;
        let x_aff = v.w[i][q].action(h_near);
        let y_aff = stack_exprs(ctx, &v.w, (i, j), &[(i, q)]);
        let ub =
            lambda_upper_expr(p, &coeffs, x_k, x_aff, &y_aff, Some(v.alpha[i][j].expr()));
        p.con_le(r[i][q].expr() - ub);

        // Far message at the far decoder: Λ₀.
        let h_far = ctx.h(i, i, q);
        let x_k = crate::cvec::row_action(h_far, &w_u[i][q]);
        let y_k = expansion_stack(ctx, w_u, (i, q), &[(i, q)]);
        let coeffs = coeffs_at(ctx, x_k, stack_power(&y_k), None)?;
        let x_aff = v.w[i][q].action(h_far);
        let y_aff = stack_exprs(ctx, &v.w, (i, q), &[(i, q)]);
        let ub = lambda_upper_expr(p, &coeffs, x_k, x_aff, &y_aff, None);
        p.con_le(r[i][q].expr() - ub);

        // Near message after SIC: Λ with μ = α_{i,j}.
        let x_k = crate::cvec::row_action(h_near, &w_u[i][j]);
        let y_k = expansion_stack(ctx, w_u, (i, j), &[(i, q), (i, j)]);
        let coeffs = coeffs_at(ctx, x_k, stack_power(&y_k), Some(a_k))?;
        let x_aff = v.w[i][j].action(h_near);
        let y_aff = stack_exprs(ctx, &v.w, (i, j), &[(i, q), (i, j)]);
        let ub =
            lambda_upper_expr(p, &coeffs, x_k, x_aff, &y_aff, Some(v.alpha[i][j].expr()));
        p.con_le(r[i][j].expr() - ub);
    }
    Ok(())
}

/// EH margins `ζ (lin_p + σ²) - e^min/(1-α)` per near user, normalized by
/// the threshold scale, with the reciprocal term handled by a hyperbolic
/// cone. Posting `margin >= 0` yields the inner-approximated EH
/// constraint.
fn eh_margin_exprs(
    p: &mut ConicProgram,
    ctx: &Ctx,
    w_u: &[Vec<Vec<Complex64>>],
    v: &PsVars,
) -> Vec<LinExpr> {
    let e_scale = ctx.e_min.max(1.0);
    let mut out = Vec::new();
    for (i, j) in ctx.inst.near_users() {
        let lin = linearized_received_power(ctx, &v.w, w_u, (i, j));
        let mut margin = (lin + 1.0) * (ctx.zeta / e_scale);
        if ctx.e_min > 0.0 {
            let t_eh = p.scalar(&format!("t_eh_{i}_{j}"));
            let one_minus_alpha = -v.alpha[i][j].expr() + 1.0;
            p.add_hyperbolic(
                t_eh.expr(),
                one_minus_alpha,
                vec![LinExpr::constant((ctx.e_min / e_scale).sqrt())],
            );
            margin = margin - t_eh.expr();
        }
        out.push(margin);
    }
    out
}

fn extract_state(
    ctx: &Ctx,
    res: &crate::conic::SolveResult,
    v: &PsVars,
) -> Result<BeamStatePS> {
    let inst = ctx.inst;
    let w: Vec<Vec<Vec<Complex64>>> = v
        .w
        .iter()
        .map(|cell| cell.iter().map(|b| ctx.to_watts(&res.complex_value(*b))).collect())
        .collect();
    let alpha: Vec<Vec<f64>> = v
        .alpha
        .iter()
        .map(|cell| cell.iter().map(|a| clamp_split(res.scalar(*a))).collect())
        .collect();
    let mut st = BeamStatePS { w, alpha, rates: vec![] };
    st.rates = perf::achieved_rates_ps(inst, &st)?;
    Ok(st)
}

/// One path-following step for either PS objective.
pub(crate) fn step_ps(
    ctx: &Ctx,
    st: &BeamStatePS,
    algorithm: AlgorithmId,
    settings: &ScaSettings,
) -> Result<(FinalState, StepRecord)> {
    let w_u = ctx.to_unit(&st.w);
    let mut p = ConicProgram::new();
    let v = declare_ps_vars(&mut p, ctx);
    let r = declare_rates(&mut p, ctx);
    add_rate_bounds(&mut p, ctx, &w_u, &st.alpha, &v, &r)?;
    for m in eh_margin_exprs(&mut p, ctx, &w_u, &v) {
        p.con_le(-m + EH_ROW_MARGIN);
    }
    add_power_budgets(&mut p, &v);

    let qos = match algorithm {
        AlgorithmId::PsMaxmin => {
            maxmin_objective(&mut p, &r);
            None
        }
        AlgorithmId::PsEe => {
            qos_rows(&mut p, ctx, &r);
            // minimize (ξ π(w) + P_c) / Σ R via two hyperbolic epigraphs.
            let t_amp = p.scalar("t_amp");
            let t_cir = p.scalar("t_cir");
            let sum_r = sum_rate_expr(&r);
            let coords: Vec<LinExpr> = v
                .w
                .iter()
                .flat_map(|cell| cell.iter().flat_map(|b| b.coords((ctx.xi * ctx.p_max_w).sqrt())))
                .collect();
            p.add_hyperbolic(t_amp.expr(), sum_r.clone(), coords);
            p.add_hyperbolic(t_cir.expr(), sum_r, vec![LinExpr::constant(ctx.p_c_w.sqrt())]);
            p.minimize(t_amp.expr() + t_cir.expr());
            Some(ctx.qos)
        }
        _ => return Err(Error::Program("step_ps called with a non-PS algorithm".into())),
    };

    let res = solve_subproblem(&p, settings, algorithm.as_str())?;
    let new_state = extract_state(ctx, &res, &v)?;

    let (exact, surrogate) = match algorithm {
        AlgorithmId::PsMaxmin => (min_rate(&new_state.rates), res.objective),
        _ => {
            let inv = if res.objective > 0.0 { 1.0 / res.objective } else { f64::NAN };
            (perf::ee_objective_ps(ctx.inst, &new_state)?, inv)
        }
    };
    let feas = perf::audit_ps(ctx.inst, &new_state, qos)?;
    Ok((
        FinalState::Ps(new_state),
        StepRecord {
            exact_objective: exact,
            surrogate_objective: surrogate,
            solver: res,
            feas,
            t_k: None,
        },
    ))
}

/// Worst normalized EH margin `[ζ(p+σ²) - e^min/(1-α)] / e_scale`, the
/// exact counterpart of the subproblem EH rows.
fn exact_eh_margin(ctx: &Ctx, st: &BeamStatePS) -> Result<f64> {
    let s2 = ctx.inst.power.noise_total_w;
    let e_scale = ctx.e_min.max(1.0);
    let mut worst = f64::INFINITY;
    for (i, j) in ctx.inst.near_users() {
        let p_n = perf::received_power(ctx.inst, &st.w, (i, j))? / s2;
        let need = if ctx.e_min > 0.0 { ctx.e_min / (1.0 - st.alpha[i][j]) } else { 0.0 };
        worst = worst.min((ctx.zeta * (p_n + 1.0) - need) / e_scale);
    }
    Ok(worst)
}

/// Feasibility search for the PS problems. Starts from seeded Gaussian
/// beams at full power and `α = 1/2`, then iterates a max-min EH margin
/// program (plus a QoS margin phase when `with_qos`) until the exact
/// constraints hold. Unlucky draws whose margin search stalls are
/// redrawn, up to three attempts.
pub(crate) fn init_ps_inner(
    ctx: &Ctx,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
) -> Result<BeamStatePS> {
    let mut last = None;
    for attempt in 0..3u32 {
        let budget = attempt_budget(settings, attempt);
        match init_ps_attempt(ctx, settings, attempt_seed(seed, attempt), with_qos, budget) {
            Ok(st) => return Ok(st),
            Err(e @ Error::Infeasible(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt ran"))
}

fn init_ps_attempt(
    ctx: &Ctx,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
    budget: usize,
) -> Result<BeamStatePS> {
    let inst = ctx.inst;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_beams(inst, inst.users_per_cell(), &mut rng, 1.0);
    let alpha = vec![vec![0.5; inst.pairs_per_cell()]; inst.n_cells()];
    let mut st = BeamStatePS { w, alpha, rates: vec![] };
    st.rates = perf::achieved_rates_ps(inst, &st)?;

    // Phase 1: EH feasibility via max-min linearized margins.
    let mut feasible = exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN;
    let mut stall = StallDetector::new();
    for _ in 0..budget {
        if feasible {
            break;
        }
        let w_u = ctx.to_unit(&st.w);
        let mut p = ConicProgram::new();
        let v = declare_ps_vars(&mut p, ctx);
        add_power_budgets(&mut p, &v);
        let gamma = p.scalar("gamma");
        for m in eh_margin_exprs(&mut p, ctx, &w_u, &v) {
            p.con_le(gamma.expr() - m + 2.0 * EH_INIT_MARGIN);
        }
        p.maximize(gamma.expr());
        let res = solve_subproblem(&p, settings, "ps feasibility (EH)")?;
        st = extract_state(ctx, &res, &v)?;
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

    // Phase 2: chase QoS margins with the full rate surrogates while the
    // EH rows stay hard; phase 1 already secured them and the search must
    // not trade them away.
    let mut stall = StallDetector::new();
    for _ in 0..budget {
        let rates_ok = min_rate(&st.rates) >= qos_init_target(ctx);
        let eh_ok = exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN;
        if rates_ok && eh_ok {
            return Ok(st);
        }
        let w_u = ctx.to_unit(&st.w);
        let mut p = ConicProgram::new();
        let v = declare_ps_vars(&mut p, ctx);
        let r = declare_rates(&mut p, ctx);
        add_rate_bounds(&mut p, ctx, &w_u, &st.alpha, &v, &r)?;
        add_power_budgets(&mut p, &v);
        let gamma = p.scalar("gamma");
        for m in eh_margin_exprs(&mut p, ctx, &w_u, &v) {
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
        let res = solve_subproblem(&p, settings, "ps feasibility (QoS)")?;
        st = extract_state(ctx, &res, &v)?;
        if stall.update(res.objective) {
            return Err(Error::Infeasible("QoS feasibility search stalled".into()));
        }
    }
    Err(Error::Infeasible("QoS feasibility search exhausted its iteration budget".into()))
}

/// Public initializer: a point feasible for the PS max-min problem (or,
/// with `with_qos`, the PS EE problem).
pub fn init_ps(
    inst: &NetworkInstance,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
) -> Result<BeamStatePS> {
    init_ps_inner(&Ctx::new(inst), settings, seed, with_qos)
}

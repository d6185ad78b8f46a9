//! Transmit-time-switching subproblems: worst-user rate maximization,
//! energy efficiency maximization, and the `ρ`-grid initializer.
//!
//! Rates carry a `1-ρ` prefactor, which couples them to the TS ratio.
//! The rate constraints are conified through `x <= (x²/x̄ + x̄)/2` applied
//! to each rate variable, giving hyperbolic rows
//! `(1-ρ) t >= (R²/R̄ + R̄)/2` with `t` pinned under the concave bound.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conic::{ConicProgram, CxVar, LinExpr, Var};
use crate::error::{Error, Result};
use crate::netmodel::NetworkInstance;
use crate::perf::{self, BeamStateTS};
use crate::sca::{
    clamp_split, coeffs_at, declare_beams, declare_rates, expansion_stack, solve_subproblem,
    lambda_upper_expr, linearized_received_power, maxmin_objective, min_rate, power_cap_expr, qos_init_target, qos_rows,
    random_beams, stack_exprs, stack_power, sum_rate, sum_rate_expr, AlgorithmId, Ctx,
    EH_INIT_MARGIN, EH_ROW_MARGIN, FinalState, ScaSettings, StallDetector, StepRecord, POWER_MARGIN, SPLIT_EPS,
};

struct TsVars {
    we: Vec<Vec<CxVar>>,
    wi: Vec<Vec<CxVar>>,
    rho: Var,
}

fn declare_ts_vars(p: &mut ConicProgram, ctx: &Ctx) -> TsVars {
    let we = declare_beams(p, ctx, "we", ctx.inst.pairs_per_cell());
    let wi = declare_beams(p, ctx, "wi", ctx.inst.users_per_cell());
    let rho = p.scalar("rho");
    p.con_le(-rho.expr() + SPLIT_EPS);
    p.con_le(rho.expr() - (1.0 - SPLIT_EPS));
    TsVars { we, wi, rho }
}

fn one_minus(v: Var) -> LinExpr {
    -v.expr() + 1.0
}

fn add_beam_caps(p: &mut ConicProgram, v: &TsVars) {
    for cell in v.we.iter().chain(v.wi.iter()) {
        for b in cell {
            p.soc(power_cap_expr(), b.coords(1.0));
        }
    }
}

/// Clamp an expansion rate away from zero; the quadratic-over-linear
/// reformulation divides by it.
fn rate_floor(r: f64) -> f64 {
    r.max(1e-9)
}

/// Post one TS rate bound: `(R²/R̄ + R̄)/2 <= (1-ρ) Λ₀(...)`.
fn add_ts_rate_bound(
    p: &mut ConicProgram,
    ctx: &Ctx,
    x_k: Complex64,
    y_k_pow: f64,
    x_aff: (LinExpr, LinExpr),
    y_aff: &[(LinExpr, LinExpr)],
    r_var: Var,
    r_k: f64,
    rho: Var,
) -> Result<()> {
    let coeffs = coeffs_at(ctx, x_k, y_k_pow, None)?;
    let ub = lambda_upper_expr(p, &coeffs, x_k, x_aff, y_aff, None);
    let t_lam = p.scalar("t_lam");
    p.con_le(t_lam.expr() - ub);
    let r_k = rate_floor(r_k);
    p.add_hyperbolic(
        one_minus(rho),
        t_lam.expr(),
        vec![r_var.expr() * (1.0 / (2.0 * r_k).sqrt()), LinExpr::constant((r_k / 2.0).sqrt())],
    );
    Ok(())
}

fn add_rate_bounds(
    p: &mut ConicProgram,
    ctx: &Ctx,
    wi_u: &[Vec<Vec<Complex64>>],
    rates_k: &[Vec<f64>],
    v: &TsVars,
    r: &[Vec<Var>],
) -> Result<()> {
    for (i, j) in ctx.inst.near_users() {
        let q = ctx.inst.partner(i, j);
        let h_near = ctx.h(i, i, j);
        let h_far = ctx.h(i, i, q);

        // Far message at the near decoder.
        let x_k = crate::cvec::row_action(h_near, &wi_u[i][q]);
        let y_k = expansion_stack(ctx, wi_u, (i, j), &[(i, q)]);
        add_ts_rate_bound(
            p,
            ctx,
            x_k,
            stack_power(&y_k),
            v.wi[i][q].action(h_near),
            &stack_exprs(ctx, &v.wi, (i, j), &[(i, q)]),
            r[i][q],
            rates_k[i][q],
            v.rho,
        )?;

        // Far message at the far decoder.
        let x_k = crate::cvec::row_action(h_far, &wi_u[i][q]);
        let y_k = expansion_stack(ctx, wi_u, (i, q), &[(i, q)]);
        add_ts_rate_bound(
            p,
            ctx,
            x_k,
            stack_power(&y_k),
            v.wi[i][q].action(h_far),
            &stack_exprs(ctx, &v.wi, (i, q), &[(i, q)]),
            r[i][q],
            rates_k[i][q],
            v.rho,
        )?;

        // Near message after SIC.
        let x_k = crate::cvec::row_action(h_near, &wi_u[i][j]);
        let y_k = expansion_stack(ctx, wi_u, (i, j), &[(i, q), (i, j)]);
        add_ts_rate_bound(
            p,
            ctx,
            x_k,
            stack_power(&y_k),
            v.wi[i][j].action(h_near),
            &stack_exprs(ctx, &v.wi, (i, j), &[(i, q), (i, j)]),
            r[i][j],
            rates_k[i][j],
            v.rho,
        )?;
    }
    Ok(())
}

/// EH margins `(lin_p(w^E) + σ²) - e^min/(ζ ρ)` per near user, normalized
/// by the threshold scale. When `rho_fixed` is given the reciprocal term
/// is a constant; otherwise a hyperbolic cone supplies it.
fn eh_margin_exprs(
    p: &mut ConicProgram,
    ctx: &Ctx,
    we_u: &[Vec<Vec<Complex64>>],
    v: &TsVars,
    rho_fixed: Option<f64>,
) -> Vec<LinExpr> {
    let e_scale = ctx.e_min.max(1.0);
    let mut out = Vec::new();
    for (i, j) in ctx.inst.near_users() {
        let lin = linearized_received_power(ctx, &v.we, we_u, (i, j));
        let mut margin = (lin + 1.0) * (1.0 / e_scale);
        if ctx.e_min > 0.0 {
            match rho_fixed {
                Some(rho0) => {
                    margin = margin - ctx.e_min / (ctx.zeta * rho0 * e_scale);
                }
                None => {
                    let t_eh = p.scalar(&format!("t_eh_{i}_{j}"));
                    p.add_hyperbolic(
                        t_eh.expr(),
                        v.rho.expr(),
                        vec![LinExpr::constant((ctx.e_min / (ctx.zeta * e_scale)).sqrt())],
                    );
                    margin = margin - t_eh.expr();
                }
            }
        }
        out.push(margin);
    }
    out
}

/// Inner approximation of the time-shared sum power budget
/// `ρ π_E + (1-ρ) π_I <= P^max` per BS (unit-cap domain).
fn add_power_budgets(
    p: &mut ConicProgram,
    ctx: &Ctx,
    we_u: &[Vec<Vec<Complex64>>],
    rho_k: f64,
    v: &TsVars,
) {
    for i in 0..ctx.inst.n_cells() {
        let t_e = p.scalar(&format!("t_pe_{i}"));
        let t_i = p.scalar(&format!("t_pi_{i}"));
        let coords_e: Vec<LinExpr> = v.we[i].iter().flat_map(|b| b.coords(1.0)).collect();
        let coords_i: Vec<LinExpr> = v.wi[i].iter().flat_map(|b| b.coords(1.0)).collect();
        p.add_hyperbolic(t_e.expr(), one_minus(v.rho), coords_e);
        p.add_hyperbolic(t_i.expr(), LinExpr::constant(1.0), coords_i);

        let omr_k = 1.0 - rho_k;
        let budget = 1.0 - POWER_MARGIN;
        let mut rhs = -v.rho.expr() * (-budget / omr_k.powi(2))
            + (2.0 / omr_k - 1.0 / omr_k.powi(2)) * budget;
        for b in 0..ctx.inst.pairs_per_cell() {
            let wb = &we_u[i][b];
            rhs = rhs + v.we[i][b].re_inner(wb) * 2.0 - crate::cvec::norm_sq(wb);
        }
        p.con_le(t_e.expr() + t_i.expr() - rhs);
    }
}

fn extract_state(
    ctx: &Ctx,
    res: &crate::conic::SolveResult,
    v: &TsVars,
    rho_fixed: Option<f64>,
) -> Result<BeamStateTS> {
    let to_watts = |vars: &[Vec<CxVar>]| -> Vec<Vec<Vec<Complex64>>> {
        vars.iter()
            .map(|cell| cell.iter().map(|b| ctx.to_watts(&res.complex_value(*b))).collect())
            .collect()
    };
    let mut st = BeamStateTS {
        w_energy: to_watts(&v.we),
        w_info: to_watts(&v.wi),
        rho: rho_fixed.unwrap_or_else(|| clamp_split(res.scalar(v.rho))),
        rates: vec![],
    };
    st.rates = perf::achieved_rates_ts(ctx.inst, &st)?;
    Ok(st)
}

/// One path-following step for either TS objective.
pub(crate) fn step_ts(
    ctx: &Ctx,
    st: &BeamStateTS,
    algorithm: AlgorithmId,
    settings: &ScaSettings,
) -> Result<(FinalState, StepRecord)> {
    let we_u = ctx.to_unit(&st.w_energy);
    let wi_u = ctx.to_unit(&st.w_info);
    let mut p = ConicProgram::new();
    let v = declare_ts_vars(&mut p, ctx);
    let r = declare_rates(&mut p, ctx);
    add_rate_bounds(&mut p, ctx, &wi_u, &st.rates, &v, &r)?;
    for m in eh_margin_exprs(&mut p, ctx, &we_u, &v, None) {
        p.con_le(-m + EH_ROW_MARGIN);
    }
    add_power_budgets(&mut p, ctx, &we_u, st.rho, &v);
    add_beam_caps(&mut p, &v);

    let mut t_k = None;
    let qos = match algorithm {
        AlgorithmId::TsMaxmin => {
            maxmin_objective(&mut p, &r);
            None
        }
        AlgorithmId::TsEe => {
            qos_rows(&mut p, ctx, &r);
            // Fractional objective at level t_k: maximize the concave
            // minorant of Σ R/(1-ρ) minus t_k times the convex majorant
            // of the consumed-power ratio.
            let level = perf::ee_objective_ts(ctx.inst, st)?;
            t_k = Some(level);
            let sum_r_k = sum_rate(&st.rates).max(1e-9);
            let omr_k = 1.0 - st.rho;

            let q_sqrt = p.scalar("q_sqrt");
            p.add_hyperbolic(sum_rate_expr(&r), LinExpr::constant(1.0), vec![q_sqrt.expr()]);
            let f_lin = q_sqrt.expr() * (2.0 * sum_r_k.sqrt() / omr_k)
                - (one_minus(v.rho) * (sum_r_k / omr_k.powi(2)));

            let g_e = p.scalar("g_e");
            let mut coords_e: Vec<LinExpr> = v
                .we
                .iter()
                .flat_map(|cell| {
                    cell.iter().flat_map(|b| b.coords((ctx.xi * ctx.p_max_w).sqrt()))
                })
                .collect();
            coords_e.push(LinExpr::constant(ctx.p_c_w.sqrt()));
            p.add_hyperbolic(g_e.expr(), one_minus(v.rho), coords_e);
            let g_i = p.scalar("g_i");
            let coords_i: Vec<LinExpr> = v
                .wi
                .iter()
                .flat_map(|cell| {
                    cell.iter().flat_map(|b| b.coords((ctx.xi * ctx.p_max_w).sqrt()))
                })
                .collect();
            p.add_hyperbolic(g_i.expr(), LinExpr::constant(1.0), coords_i);

            let mut lin_e_watts = LinExpr::zero();
            for (i, cell) in we_u.iter().enumerate() {
                for (b, wb) in cell.iter().enumerate() {
                    lin_e_watts = lin_e_watts
                        + (v.we[i][b].re_inner(wb) * 2.0 - crate::cvec::norm_sq(wb))
                            * ctx.p_max_w;
                }
            }
            let g_upper = g_e.expr() + g_i.expr() - lin_e_watts * ctx.xi;
            p.maximize(f_lin - g_upper * level);
            Some(ctx.qos)
        }
        _ => return Err(Error::Program("step_ts called with a non-TS algorithm".into())),
    };

    let res = solve_subproblem(&p, settings, algorithm.as_str())?;
    let new_state = extract_state(ctx, &res, &v, None)?;

    let (exact, surrogate) = match algorithm {
        AlgorithmId::TsMaxmin => (min_rate(&new_state.rates), res.objective),
        _ => (perf::ee_objective_ts(ctx.inst, &new_state)?, res.objective),
    };
    let feas = perf::audit_ts(ctx.inst, &new_state, qos)?;
    Ok((
        FinalState::Ts(new_state),
        StepRecord {
            exact_objective: exact,
            surrogate_objective: surrogate,
            solver: res,
            feas,
            t_k,
        },
    ))
}

/// Worst normalized EH margin `[(p_E+σ²) - e^min/(ζρ)] / e_scale`, the
/// exact counterpart of the subproblem EH rows.
fn exact_eh_margin(ctx: &Ctx, st: &BeamStateTS) -> Result<f64> {
    let s2 = ctx.inst.power.noise_total_w;
    let e_scale = ctx.e_min.max(1.0);
    let mut worst = f64::INFINITY;
    for (i, j) in ctx.inst.near_users() {
        let p_n = perf::received_power_energy(ctx.inst, &st.w_energy, (i, j)) / s2;
        let need = if ctx.e_min > 0.0 { ctx.e_min / (ctx.zeta * st.rho) } else { 0.0 };
        worst = worst.min((p_n + 1.0 - need) / e_scale);
    }
    Ok(worst)
}

/// Feasibility search for the TS problems: try each `ρ⁰` of the grid with
/// seeded Gaussian beams, iterating the fixed-`ρ` EH program until the
/// exact EH constraint holds, then (for the EE problem) chase QoS margins
/// with the full inner approximation.
pub(crate) fn init_ts_inner(
    ctx: &Ctx,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
) -> Result<BeamStateTS> {
    let inst = ctx.inst;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut found: Option<BeamStateTS> = None;
    'grid: for &rho0 in &settings.rho_grid {
        if !(rho0 > 0.0 && rho0 < 1.0) {
            return Err(Error::InvalidConfig(format!("rho grid value {rho0} outside (0,1)")));
        }
        // Mixed budget holds with equality for the initial draw:
        // ρ⁰ Σ||w^E||² + (1-ρ⁰) Σ||w^I||² = P^max per BS.
        let w_energy = random_beams(inst, inst.pairs_per_cell(), &mut rng, 1.0);
        let w_info = random_beams(inst, inst.users_per_cell(), &mut rng, 1.0);
        let mut st = BeamStateTS { w_energy, w_info, rho: rho0, rates: vec![] };
        st.rates = perf::achieved_rates_ts(inst, &st)?;

        if exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN {
            found = Some(st);
            break 'grid;
        }
        for _ in 0..settings.init_max_iters {
            let we_u = ctx.to_unit(&st.w_energy);
            let wi_u = ctx.to_unit(&st.w_info);
            let mut p = ConicProgram::new();
            let v = declare_ts_vars(&mut p, ctx);
            p.con_eq(v.rho.expr() - rho0);
            let r = declare_rates(&mut p, ctx);
            add_beam_caps(&mut p, &v);
            // Mixed power at fixed ρ⁰ is a single cone per BS.
            for i in 0..inst.n_cells() {
                let mut coords: Vec<LinExpr> =
                    v.we[i].iter().flat_map(|b| b.coords(rho0.sqrt())).collect();
                coords.extend(
                    v.wi[i].iter().flat_map(|b| b.coords((1.0 - rho0).sqrt())),
                );
                p.soc(power_cap_expr(), coords);
            }
            // Rate bounds at fixed ρ⁰ define the carried rate variables.
            for (i, j) in inst.near_users() {
                let q = inst.partner(i, j);
                for (rx, x_ch, beam, exclude, rv) in [
                    ((i, j), (i, j), q, vec![(i, q)], r[i][q]),
                    ((i, q), (i, q), q, vec![(i, q)], r[i][q]),
                    ((i, j), (i, j), j, vec![(i, q), (i, j)], r[i][j]),
                ] {
                    let h = ctx.h(i, x_ch.0, x_ch.1);
                    let x_k = crate::cvec::row_action(h, &wi_u[i][beam]);
                    let y_k = expansion_stack(ctx, &wi_u, rx, &exclude);
                    let coeffs = coeffs_at(ctx, x_k, stack_power(&y_k), None)?;
                    let x_aff = v.wi[i][beam].action(h);
                    let y_aff = stack_exprs(ctx, &v.wi, rx, &exclude);
                    let ub = lambda_upper_expr(&mut p, &coeffs, x_k, x_aff, &y_aff, None);
                    p.con_le(rv.expr() * (1.0 / (1.0 - rho0)) - ub);
                }
            }
            let gamma = p.scalar("gamma");
            for m in eh_margin_exprs(&mut p, ctx, &we_u, &v, Some(rho0)) {
                p.con_le(gamma.expr() - m + 2.0 * EH_INIT_MARGIN);
            }
            p.maximize(gamma.expr());
            let res = match solve_subproblem(&p, settings, "ts feasibility (EH)") {
                Ok(r) => r,
                Err(_) => continue 'grid,
            };
            st = extract_state(ctx, &res, &v, Some(rho0))?;
            if exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN {
                found = Some(st);
                break 'grid;
            }
        }
    }
    let mut st = found.ok_or_else(|| {
        Error::Infeasible("EH feasibility search failed for every initial TS ratio".into())
    })?;
    if !with_qos {
        return Ok(st);
    }

    // QoS phase with the full inner approximation (ρ free again).
    let mut stall = StallDetector::new();
    for _ in 0..settings.init_max_iters {
        let rates_ok = min_rate(&st.rates) >= qos_init_target(ctx);
        let eh_ok = exact_eh_margin(ctx, &st)? >= EH_INIT_MARGIN;
        if rates_ok && eh_ok {
            return Ok(st);
        }
        let we_u = ctx.to_unit(&st.w_energy);
        let wi_u = ctx.to_unit(&st.w_info);
        let mut p = ConicProgram::new();
        let v = declare_ts_vars(&mut p, ctx);
        let r = declare_rates(&mut p, ctx);
        add_rate_bounds(&mut p, ctx, &wi_u, &st.rates, &v, &r)?;
        for m in eh_margin_exprs(&mut p, ctx, &we_u, &v, None) {
            p.con_le(-m + 2.0 * EH_INIT_MARGIN);
        }
        add_power_budgets(&mut p, ctx, &we_u, st.rho, &v);
        add_beam_caps(&mut p, &v);
        let gamma = p.scalar("gamma");
        for cell in &r {
            for rv in cell {
                p.con_le(
                    gamma.expr() - (rv.expr() * (1.0 / qos_init_target(ctx)) - 1.0),
                );
            }
        }
        p.maximize(gamma.expr());
        let res = solve_subproblem(&p, settings, "ts feasibility (QoS)")?;
        st = extract_state(ctx, &res, &v, None)?;
        if stall.update(res.objective) {
            return Err(Error::Infeasible("QoS feasibility search stalled".into()));
        }
    }
    Err(Error::Infeasible("QoS feasibility search exhausted its iteration budget".into()))
}

/// Public initializer: a point feasible for the TS max-min problem (or,
/// with `with_qos`, the TS EE problem).
pub fn init_ts(
    inst: &NetworkInstance,
    settings: &ScaSettings,
    seed: u64,
    with_qos: bool,
) -> Result<BeamStateTS> {
    init_ts_inner(&Ctx::new(inst), settings, seed, with_qos)
}

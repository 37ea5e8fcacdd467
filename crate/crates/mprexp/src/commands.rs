//! The `expand` and `simulate` commands on a configured model.

use mprexp_core::expansion::{self, ExpansionCoefficients, ExpansionReport};
use mprexp_core::models::{BaseSolution, Model, Strategy};
use mprexp_core::utility::certainty_equivalent;

use crate::config::{RunConfig, StrategyChoice};
use crate::error::{CliError, CliResult};
use crate::montecarlo;
use crate::report::{Cell, Column, Kind, Table};

/// Steps of the finite-difference check.
pub const FD_STEPS: [f64; 2] = [1e-3, 5e-4];

fn solution(cfg: &RunConfig) -> CliResult<BaseSolution> {
    let model = cfg.model.ok_or_else(|| CliError::Config("a [model] section is required".into()))?;
    Ok(BaseSolution::new(model, cfg.utility(), cfg.ode_steps)?)
}

fn epsilons(cfg: &RunConfig) -> CliResult<&[f64]> {
    if cfg.epsilons.is_empty() {
        return Err(CliError::Config("no perturbation sizes: set `epsilons` or pass --eps".into()));
    }
    Ok(&cfg.epsilons)
}

fn opt(x: Option<f64>) -> Cell {
    x.map_or(Cell::Missing, Cell::Num)
}

/// Expansion coefficients, with `Delta00` simulated under the tilted measure
/// when it has no closed form.
pub fn coefficients(sol: &BaseSolution, cfg: &RunConfig) -> CliResult<(ExpansionCoefficients, Option<u64>)> {
    let c = ExpansionCoefficients::new(sol)?;
    if c.delta00.is_some() {
        return Ok((c, None));
    }
    let f = montecarlo::estimate_ptilde_functionals(sol, &cfg.sim_config())?;
    let s = sol.utility().one_minus_p();
    let d00 = expansion::delta00_from_lambda_mean(f.lambda_mean.mean, sol.utility());
    Ok((c.with_delta00(d00, Some(f.lambda_mean.stderr / s)), Some(f.clamps)))
}

/// Zeroth-, first- and second-order approximations of the primal and dual
/// values at every configured perturbation size.
pub fn expand(cfg: &RunConfig) -> CliResult<Table> {
    let sol = solution(cfg)?;
    let eps = epsilons(cfg)?;
    let (c, clamps) = coefficients(&sol, cfg)?;
    let rep = ExpansionReport::build(&sol, c, eps)?;
    let mut t = Table::new(
        format!("Expansion, {} model, p = {}", rep.model, cfg.p),
        vec![
            Column::new("eps", Kind::Num),
            Column::new("u_order0", Kind::Num),
            Column::new("u_order1", Kind::Num),
            Column::new("u_order2", Kind::Num),
            Column::new("u_exact", Kind::Num),
            Column::csv_only("v_order0", Kind::Num),
            Column::csv_only("v_order1", Kind::Num),
            Column::csv_only("v_order2", Kind::Num),
            Column::new("ce_order0", Kind::Num),
            Column::new("ce_order1", Kind::Num),
            Column::new("ce_order2", Kind::Num),
            Column::new("ce_exact", Kind::Num),
            Column::csv_only("u0", Kind::Num),
            Column::csv_only("v0", Kind::Num),
            Column::csv_only("delta0", Kind::Num),
            Column::csv_only("delta00", Kind::Num),
            Column::csv_only("delta00_se", Kind::Num),
            Column::csv_only("delta_u1", Kind::Num),
            Column::csv_only("delta_u2", Kind::Num),
            Column::csv_only("delta_v1", Kind::Num),
            Column::csv_only("delta_v2", Kind::Num),
        ],
    );
    let (du2, dv2) = (c.delta_u2().ok(), c.delta_v2().ok());
    for r in &rep.rows {
        t.push(vec![
            Cell::Num(r.eps),
            Cell::Num(r.u[0]),
            Cell::Num(r.u[1]),
            Cell::Num(r.u[2]),
            opt(r.exact_u),
            Cell::Num(r.v[0]),
            Cell::Num(r.v[1]),
            Cell::Num(r.v[2]),
            opt(r.ce[0]),
            opt(r.ce[1]),
            opt(r.ce[2]),
            opt(r.exact_ce),
            Cell::Num(c.u0),
            Cell::Num(c.v0),
            Cell::Num(c.delta0),
            opt(c.delta00),
            opt(c.delta00_stderr),
            Cell::Num(c.delta_u1()),
            opt(du2),
            Cell::Num(c.delta_v1()),
            opt(dv2),
        ]);
    }
    t.notes.push(format!("u0 = {:.6}  v0 = {:.6}", c.u0, c.v0));
    match (c.delta00, c.delta00_stderr) {
        (Some(d), Some(se)) => t.notes.push(format!("Delta0 = {:.6}  Delta00 = {d:.6} (se {se:.2e})", c.delta0)),
        (Some(d), None) => t.notes.push(format!("Delta0 = {:.6}  Delta00 = {d:.6}", c.delta0)),
        _ => t.notes.push(format!("Delta0 = {:.6}", c.delta0)),
    }
    t.notes.push(format!(
        "delta_u = {:.6}, {}  delta_v = {:.6}, {}",
        c.delta_u1(),
        du2.map_or("-".into(), |d| format!("{d:.6}")),
        c.delta_v1(),
        dv2.map_or("-".into(), |d| format!("{d:.6}"))
    ));
    if let Some(n) = clamps {
        t.notes.push(format!(
            "Delta00 simulated: {} paths, dt = {}, seed {}, factor floor hits {n}",
            cfg.n_paths, cfg.dt, cfg.seed
        ));
    }
    Ok(t)
}

/// Central differences of the exact value against the expansion
/// coefficients. Ornstein-Uhlenbeck model only.
pub fn check_fd(cfg: &RunConfig) -> CliResult<Table> {
    if !matches!(cfg.model, Some(Model::KimOmberg(_))) {
        return Err(CliError::Config("--check-fd needs a kim-omberg model".into()));
    }
    let sol = solution(cfg)?;
    let c = ExpansionCoefficients::new(&sol)?;
    let mut t = Table::new(
        "Finite-difference check",
        vec![
            Column::new("h", Kind::Sci),
            Column::new("d1_fd", Kind::Num),
            Column::new("d1", Kind::Num),
            Column::new("d1_err", Kind::Sci),
            Column::new("d2_fd", Kind::Num),
            Column::new("d2", Kind::Num),
            Column::new("d2_err", Kind::Sci),
        ],
    );
    let checks =
        FD_STEPS.iter().map(|&h| expansion::finite_difference_check(&sol, &c, h)).collect::<Result<Vec<_>, _>>()?;
    for f in &checks {
        t.push(vec![
            Cell::Num(f.h),
            Cell::Num(f.d1_fd),
            Cell::Num(f.d1),
            Cell::Num(f.err1()),
            Cell::Num(f.d2_fd),
            Cell::Num(f.d2),
            Cell::Num(f.err2()),
        ]);
    }
    t.notes.push(format!(
        "error ratios at h / (h/2): first order {:.2}, second order {:.2}",
        checks[0].err1() / checks[1].err1(),
        checks[0].err2() / checks[1].err2()
    ));
    Ok(t)
}

fn strategy(choice: StrategyChoice, eps: f64) -> Strategy {
    match choice {
        StrategyChoice::Base => Strategy::Base,
        StrategyChoice::Corrected => Strategy::Corrected(eps),
        StrategyChoice::Zero => Strategy::Zero,
        StrategyChoice::Constant(c) => Strategy::Constant(c),
    }
}

/// Certainty equivalent of the configured strategy at every perturbation
/// size, from one pass with common random numbers.
pub fn simulate(cfg: &RunConfig) -> CliResult<Table> {
    let sol = solution(cfg)?;
    let eps = epsilons(cfg)?;
    let spec = sol.utility();
    let legs: Vec<(f64, Strategy)> = eps.iter().map(|&e| (e, strategy(cfg.strategy, e))).collect();
    let (est, clamps) = montecarlo::estimate_ce_many(&sol, &legs, &cfg.sim_config())?;
    let mut t = Table::new(
        format!(
            "Simulation, {} model, {} strategy ({} paths, dt = {}, seed {})",
            sol.model().name(),
            cfg.strategy.name(),
            cfg.n_paths,
            cfg.dt,
            cfg.seed
        ),
        vec![
            Column::new("eps", Kind::Num),
            Column::new("ce", Kind::Num),
            Column::new("ce_ci", Kind::Interval),
            Column::new("ce_se", Kind::Sci),
            Column::new("ce_exact", Kind::Num),
            Column::csv_only("utility_mean", Kind::Num),
            Column::csv_only("utility_se", Kind::Num),
            Column::csv_only("seed", Kind::Int),
            Column::csv_only("clamps", Kind::Int),
        ],
    );
    for (&e, r) in eps.iter().zip(&est) {
        let exact = expansion::exact_value(&sol, e)?.and_then(|u| certainty_equivalent(u, spec).ok());
        t.push(vec![
            Cell::Num(e),
            Cell::Num(r.value),
            Cell::Interval(r.ci95_lo, r.ci95_hi),
            Cell::Num(r.stderr),
            opt(exact),
            Cell::Num(r.raw.mean),
            Cell::Num(r.raw.stderr),
            Cell::Int(cfg.seed),
            Cell::Int(clamps),
        ]);
    }
    t.notes.push(format!("seed {}, factor floor hits {clamps}", cfg.seed));
    Ok(t)
}

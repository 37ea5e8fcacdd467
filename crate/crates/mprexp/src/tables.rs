//! Drivers for the three reference tables: expansion accuracy in the
//! Ornstein-Uhlenbeck model, and Monte-Carlo bounds in the
//! Ornstein-Uhlenbeck and square-root factor models.

use mprexp_core::expansion::{self, ExpansionCoefficients, ExpansionReport};
use mprexp_core::models::{BaseSolution, EaModel, KoModel, Model};
use mprexp_core::utility::certainty_equivalent;
use mprexp_core::UtilitySpec;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::montecarlo::{self, CeEstimate, SimConfig};
use crate::report::{Cell, Column, Kind, Table};

pub const KO_KAPPA: f64 = 0.0404;
pub const KO_THETA: f64 = 0.117;
pub const KO_GAMMA: f64 = 0.04395;
pub const KO_EPS: [f64; 3] = [-0.01, -0.05, -0.10];
pub const KO_LAMBDA0: [f64; 2] = [0.1, 0.5];

pub const EA_KAPPA: f64 = 5.0;
pub const EA_THETA: f64 = 0.0169;
pub const EA_BETA: f64 = -0.1;
pub const EA_GAMMA: f64 = 0.1744;
pub const EA_EPS: [f64; 3] = [0.10, 0.05, 0.01];
pub const EA_F0: [f64; 2] = [0.01, 0.05];

pub const HORIZON: f64 = 10.0;

/// Settings shared by the table drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRun {
    pub p: f64,
    /// Overrides the table's perturbation sizes when non-empty.
    pub eps: Vec<f64>,
    pub ode_steps: usize,
    pub sim: SimConfig,
    /// Overrides the table's model parameters except the row-varying
    /// initial factor; the variant must match the table.
    pub model: Option<Model>,
}

impl TableRun {
    pub fn desk(seed: u64) -> Self {
        Self {
            p: -1.0,
            eps: Vec::new(),
            ode_steps: crate::config::DEFAULT_ODE_STEPS,
            sim: SimConfig::desk(seed),
            model: None,
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Self {
        Self { p: cfg.p, eps: cfg.epsilons.clone(), ode_steps: cfg.ode_steps, sim: cfg.sim_config(), model: cfg.model }
    }

    fn eps_or(&self, default: &[f64]) -> Vec<f64> {
        if self.eps.is_empty() {
            default.to_vec()
        } else {
            self.eps.clone()
        }
    }

    fn utility(&self) -> CliResult<UtilitySpec> {
        UtilitySpec::new(self.p).map_err(|e| CliError::Config(e.to_string()))
    }

    fn ko(&self, lambda0: f64) -> CliResult<KoModel> {
        let (kappa, theta, gamma, horizon) = match self.model {
            None => (KO_KAPPA, KO_THETA, KO_GAMMA, HORIZON),
            Some(Model::KimOmberg(m)) => (m.kappa, m.theta, m.gamma, m.horizon),
            Some(_) => return Err(CliError::Config("this table needs a kim-omberg model".into())),
        };
        KoModel::new(kappa, theta, gamma, lambda0, horizon).map_err(|e| CliError::Config(e.to_string()))
    }

    fn ea(&self, f0: f64) -> CliResult<EaModel> {
        let (kappa, theta, beta, gamma, horizon) = match self.model {
            None => (EA_KAPPA, EA_THETA, EA_BETA, EA_GAMMA, HORIZON),
            Some(Model::ExtendedAffine(m)) => (m.kappa, m.theta, m.beta, m.gamma, m.horizon),
            Some(_) => return Err(CliError::Config("this table needs an extended-affine model".into())),
        };
        EaModel::new(kappa, theta, beta, gamma, f0, horizon).map_err(|e| CliError::Config(e.to_string()))
    }

    fn check_steps(&self, horizon: f64) -> CliResult<()> {
        self.sim.n_steps(horizon).map(|_| ()).map_err(|e| CliError::Config(format!("[sim] {e}")))
    }
}

fn opt(x: Option<f64>) -> Cell {
    x.map_or(Cell::Missing, Cell::Num)
}

fn ci(e: &CeEstimate) -> Cell {
    Cell::Interval(e.ci95_lo, e.ci95_hi)
}

/// Certainty equivalents of the order-0/1/2 expansions against the exact
/// value. Deterministic.
pub fn table1(run: &TableRun) -> CliResult<Table> {
    let spec = run.utility()?;
    let eps = run.eps_or(&KO_EPS);
    let mut t = Table::new(
        "Expansion certainty equivalents, Ornstein-Uhlenbeck market price of risk",
        vec![
            Column::new("eps", Kind::Num),
            Column::new("lambda0", Kind::Num),
            Column::new("ce_order0", Kind::Num),
            Column::new("ce_order1", Kind::Num),
            Column::new("ce_order2", Kind::Num),
            Column::new("ce_exact", Kind::Num),
            Column::csv_only("u0", Kind::Num),
            Column::csv_only("delta0", Kind::Num),
            Column::csv_only("delta00", Kind::Num),
            Column::csv_only("delta_u1", Kind::Num),
            Column::csv_only("delta_u2", Kind::Num),
        ],
    );
    for l0 in KO_LAMBDA0 {
        let sol = BaseSolution::new(Model::KimOmberg(run.ko(l0)?), spec, run.ode_steps)?;
        let coeff = ExpansionCoefficients::new(&sol)?;
        let rep = ExpansionReport::build(&sol, coeff, &eps)?;
        for r in &rep.rows {
            t.push(vec![
                Cell::Num(r.eps),
                Cell::Num(l0),
                opt(r.ce[0]),
                opt(r.ce[1]),
                opt(r.ce[2]),
                opt(r.exact_ce),
                Cell::Num(coeff.u0),
                Cell::Num(coeff.delta0),
                opt(coeff.delta00),
                Cell::Num(coeff.delta_u1()),
                opt(coeff.delta_u2().ok()),
            ]);
        }
    }
    Ok(t)
}

fn bounds_columns(factor: &'static str, last: Column) -> Vec<Column> {
    vec![
        Column::new("eps", Kind::Num),
        Column::new(factor, Kind::Num),
        Column::new("ce_base", Kind::Interval),
        Column::new("lb", Kind::Interval),
        Column::new("ub", Kind::Interval),
        last,
        Column::csv_only("ce_base_se", Kind::Num),
        Column::csv_only("lb_se", Kind::Num),
        Column::csv_only("ub_se", Kind::Num),
        Column::csv_only("clamps", Kind::Int),
    ]
}

fn bounds_row(r: &montecarlo::BoundsRow, factor: f64, last: Cell, clamps: u64) -> Vec<Cell> {
    vec![
        Cell::Num(r.eps),
        Cell::Num(factor),
        ci(&r.base),
        ci(&r.lower),
        ci(&r.upper),
        last,
        Cell::Num(r.base.stderr),
        Cell::Num(r.lower.stderr),
        Cell::Num(r.upper.stderr),
        Cell::Int(clamps),
    ]
}

/// Monte-Carlo intervals for the base optimiser, the lower and the upper
/// bound in the Ornstein-Uhlenbeck model, with the exact value.
pub fn table2(run: &TableRun) -> CliResult<Table> {
    let spec = run.utility()?;
    let eps = run.eps_or(&KO_EPS);
    let mut t = Table::new(
        format!(
            "Certainty-equivalent bounds, Ornstein-Uhlenbeck model ({} paths, dt = {}, seed {})",
            run.sim.n_paths, run.sim.dt, run.sim.seed
        ),
        bounds_columns("lambda0", Column::new("ce_exact", Kind::Num)),
    );
    for l0 in KO_LAMBDA0 {
        let m = run.ko(l0)?;
        run.check_steps(m.horizon)?;
        let sol = BaseSolution::new(Model::KimOmberg(m), spec, run.ode_steps)?;
        let (rows, clamps) = montecarlo::bounds(&sol, &eps, &run.sim)?;
        for r in &rows {
            let exact = expansion::exact_value(&sol, r.eps)?.and_then(|u| certainty_equivalent(u, spec).ok());
            t.push(bounds_row(r, l0, opt(exact), clamps));
        }
    }
    Ok(t)
}

/// Monte-Carlo intervals in the square-root factor model, with the
/// zeroth-order certainty equivalent.
pub fn table3(run: &TableRun) -> CliResult<Table> {
    let spec = run.utility()?;
    let eps = run.eps_or(&EA_EPS);
    let mut t = Table::new(
        format!(
            "Certainty-equivalent bounds, square-root factor model ({} paths, dt = {}, seed {})",
            run.sim.n_paths, run.sim.dt, run.sim.seed
        ),
        bounds_columns("f0", Column::new("ce_order0", Kind::Num)),
    );
    let mut total_clamps = 0;
    for f0 in EA_F0 {
        let m = run.ea(f0)?;
        run.check_steps(m.horizon)?;
        let sol = BaseSolution::new(Model::ExtendedAffine(m), spec, run.ode_steps)?;
        let ce0 = certainty_equivalent(sol.u0(), spec)?;
        let (rows, clamps) = montecarlo::bounds(&sol, &eps, &run.sim)?;
        total_clamps += clamps;
        for r in &rows {
            t.push(bounds_row(r, f0, Cell::Num(ce0), clamps));
        }
        t.notes.push(format!("zeroth-order CE = {ce0:.3} (F0 = {f0})"));
    }
    t.notes.push(format!("factor floor hits: {total_clamps}"));
    Ok(t)
}

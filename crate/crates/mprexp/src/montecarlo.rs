//! Euler simulation of wealth, deflators and path functionals.
//!
//! Every path draws its Gaussian increments from its own ChaCha stream
//! `(seed, path index)`, so results do not depend on how paths are spread
//! over worker threads. Log-wealth and log-deflators are accumulated and
//! exponentiated at the end, which keeps both positive.

use mprexp_core::models::{Control, FactorState, MarketState, Strategy};
use mprexp_core::stats::{McEstimate, Z95};
use mprexp_core::utility::certainty_equivalent;
use mprexp_core::{expansion, BaseSolution, Error, Result, UtilitySpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Environment variable holding the default number of worker threads.
pub const WORKERS_ENV: &str = "MPREXP_WORKERS";

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Measure the Brownian increments are drawn under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Physical,
    /// The tilted measure of the base problem, reached through the Girsanov
    /// drifts of [`BaseSolution::girsanov_drifts`].
    Tilted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub measure: Measure,
    /// `None` uses [`default_workers`].
    pub workers: Option<usize>,
    /// Floor applied to the square-root factor inside `1 / F`.
    pub f_min: f64,
    pub initial_wealth: f64,
    /// Accumulate `eta`, `Lambda`, `Phi` and friends.
    pub functionals: bool,
}

pub const DESK_PATHS: usize = 100_000;
pub const DESK_DT: f64 = 0.005;
pub const FULL_PATHS: usize = 1_000_000;
pub const FULL_DT: f64 = 0.001;
pub const F_MIN: f64 = 1e-8;

impl SimConfig {
    /// 10^5 paths at dt = 0.005 under the physical measure.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_paths: DESK_PATHS,
            dt: DESK_DT,
            seed,
            measure: Measure::Physical,
            workers: None,
            f_min: F_MIN,
            initial_wealth: 1.0,
            functionals: false,
        }
    }

    /// 10^6 paths at dt = 0.001, selected by `--paper-scale`.
    pub fn full(seed: u64) -> Self {
        Self { n_paths: FULL_PATHS, dt: FULL_DT, ..Self::desk(seed) }
    }

    /// Number of time steps for `horizon`; `dt` must divide it.
    pub fn n_steps(&self, horizon: f64) -> Result<usize> {
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter("n_paths must be at least 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain { what: "time step dt", value: self.dt });
        }
        if !(self.initial_wealth > 0.0 && self.initial_wealth.is_finite()) {
            return Err(Error::Domain { what: "initial wealth", value: self.initial_wealth });
        }
        if !(self.f_min > 0.0) {
            return Err(Error::Domain { what: "f_min", value: self.f_min });
        }
        let n = (horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - horizon).abs() > 1e-9 {
            return Err(Error::InvalidParameter("dt must divide the horizon"));
        }
        Ok(n as usize)
    }
}

/// A control applied at perturbation size `eps`.
#[derive(Clone, Copy)]
pub struct Leg<'a> {
    pub eps: f64,
    pub control: &'a (dyn Control + Sync),
}

impl<'a> Leg<'a> {
    pub fn new(eps: f64, control: &'a (dyn Control + Sync)) -> Self {
        Self { eps, control }
    }
}

const N_FUNCTIONALS: usize = 5;

/// Per-path terminal statistics, stored row-major with one row per path.
///
/// Row layout: one log-wealth per primal leg, one log-deflator
/// `log(Z_T H_T)` per dual leg, then (if requested) `eta`, `Lambda`, `Phi`,
/// the `Delta00` integral and the martingale-representation integral, and
/// finally the clamp count.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    n_paths: usize,
    n_primal: usize,
    n_dual: usize,
    functionals: bool,
    width: usize,
    data: Vec<f64>,
    pub initial_wealth: f64,
    pub seed: u64,
    pub n_steps: usize,
    pub dt: f64,
}

impl PathStats {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn column(&self, c: usize) -> Vec<f64> {
        self.data.chunks_exact(self.width).map(|row| row[c]).collect()
    }

    /// `log(X_T / x)` of primal leg `leg` on every path.
    pub fn log_wealth(&self, leg: usize) -> Vec<f64> {
        assert!(leg < self.n_primal, "primal leg out of range");
        self.column(leg)
    }

    /// Terminal wealth of primal leg `leg` on path `i`.
    pub fn wealth(&self, leg: usize, i: usize) -> f64 {
        assert!(leg < self.n_primal, "primal leg out of range");
        self.initial_wealth * self.data[i * self.width + leg].exp()
    }

    /// `log(Z_T H_T)` of dual leg `leg`.
    pub fn log_deflator(&self, leg: usize) -> Vec<f64> {
        assert!(leg < self.n_dual, "dual leg out of range");
        self.column(self.n_primal + leg)
    }

    fn functional(&self, k: usize) -> Option<Vec<f64>> {
        self.functionals.then(|| self.column(self.n_primal + self.n_dual + k))
    }

    /// `int lambda' dR` of the base return.
    pub fn eta(&self) -> Option<Vec<f64>> {
        self.functional(0)
    }

    /// `int lambda'^2 d<M>`.
    pub fn lambda(&self) -> Option<Vec<f64>> {
        self.functional(1)
    }

    /// `int pi0 lambda' d<M>`.
    pub fn phi(&self) -> Option<Vec<f64>> {
        self.functional(2)
    }

    /// Pathwise integral of [`expansion::delta00_integrand`].
    pub fn delta00_integral(&self) -> Option<Vec<f64>> {
        self.functional(3)
    }

    /// `int gB sigma dB~ + int gW dW~`, the martingale part of `Phi`.
    pub fn martingale(&self) -> Option<Vec<f64>> {
        self.functional(4)
    }

    /// Total number of steps where the square-root factor fell below `f_min`.
    pub fn clamps(&self) -> u64 {
        self.data.chunks_exact(self.width).map(|row| row[self.width - 1] as u64).sum()
    }
}

/// Simulates `cfg.n_paths` paths of the model of `sol` and records the
/// terminal statistics of every primal and dual leg.
///
/// Factor dynamics do not depend on the perturbation size, so all legs share
/// the same Brownian paths.
pub fn simulate(sol: &BaseSolution, primal: &[Leg<'_>], dual: &[Leg<'_>], cfg: &SimConfig) -> Result<PathStats> {
    let n_steps = cfg.n_steps(sol.horizon())?;
    let (np, nd) = (primal.len(), dual.len());
    let width = np + nd + if cfg.functionals { N_FUNCTIONALS } else { 0 } + 1;
    let mut data = vec![0.0; width * cfg.n_paths];
    let workers = cfg.workers.unwrap_or_else(default_workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|_| Error::InvalidParameter("could not start worker threads"))?;
    pool.install(|| {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| run_path(sol, primal, dual, cfg, n_steps, i as u64, row));
    });
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Integrability("non-finite path accumulator"));
    }
    Ok(PathStats {
        n_paths: cfg.n_paths,
        n_primal: np,
        n_dual: nd,
        functionals: cfg.functionals,
        width,
        data,
        initial_wealth: cfg.initial_wealth,
        seed: cfg.seed,
        n_steps,
        dt: cfg.dt,
    })
}

fn run_path(
    sol: &BaseSolution,
    primal: &[Leg<'_>],
    dual: &[Leg<'_>],
    cfg: &SimConfig,
    n_steps: usize,
    path: u64,
    row: &mut [f64],
) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path);
    let dt = cfg.dt;
    let sdt = dt.sqrt();
    let (np, nd) = (primal.len(), dual.len());
    let tilted = cfg.measure == Measure::Tilted;
    let spec = sol.utility();
    let mut fs: FactorState = sol.initial_factor();
    let mut clamps = 0u64;
    let (mut eta, mut lam, mut phi, mut d00, mut mart) = (0.0, 0.0, 0.0, 0.0, 0.0);

    for k in 0..n_steps {
        let t = k as f64 * dt;
        let (s, clamped): (MarketState, bool) = sol.market_state(t, &fs, cfg.f_min);
        clamps += clamped as u64;
        let zb: f64 = StandardNormal.sample(&mut rng);
        let zw: f64 = StandardNormal.sample(&mut rng);
        let terms = sol.base_terms(&s);
        let (mb, mw) = (-(s.lambda - terms.pi0) * s.sigma, -terms.nu0);
        let (mut db, mut dw) = (zb * sdt, zw * sdt);
        if tilted {
            db += mb * dt;
            dw += mw * dt;
        }
        let s2dt = s.sigma * s.sigma * dt;
        if cfg.functionals {
            eta += s.lambda_prime * (s.sigma * db + s.lambda * s2dt);
            lam += s.lambda_prime * s.lambda_prime * s2dt;
            phi += terms.pi0 * s.lambda_prime * s2dt;
            d00 += expansion::delta00_integrand_with(spec, &s, terms.gamma_b, terms.gamma_w) * dt;
            mart += terms.gamma_b * s.sigma * (db - mb * dt) + terms.gamma_w * (dw - mw * dt);
        }
        for (j, leg) in primal.iter().enumerate() {
            let pi = leg.control.eval_with(&s, &terms);
            let l = s.lambda + leg.eps * s.lambda_prime;
            row[j] += pi * (l - 0.5 * pi) * s2dt + pi * s.sigma * db;
        }
        for (j, leg) in dual.iter().enumerate() {
            let nu = leg.control.eval_with(&s, &terms);
            let l = s.lambda + leg.eps * s.lambda_prime;
            row[np + j] += -l * s.sigma * db - 0.5 * l * l * s2dt - nu * dw - 0.5 * nu * nu * dt;
        }
        sol.euler_step(&mut fs, dt, db, dw);
    }
    if cfg.functionals {
        row[np + nd..np + nd + N_FUNCTIONALS].copy_from_slice(&[eta, lam, phi, d00, mart]);
    }
    let last = row.len() - 1;
    row[last] = clamps as f64;
}

/// Certainty-equivalent estimate. The interval is the image of the
/// utility-scale interval `raw` under the monotone map to certainty
/// equivalents, so it is not symmetric; `stderr` is its half-width over
/// [`Z95`]. An endpoint outside the range of the utility maps to infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeEstimate {
    pub value: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub stderr: f64,
    pub raw: McEstimate,
}

impl CeEstimate {
    fn from_endpoints(value: f64, lo: f64, hi: f64, raw: McEstimate) -> Self {
        Self { value, ci95_lo: lo, ci95_hi: hi, stderr: (hi - lo) / (2.0 * Z95), raw }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.ci95_lo + self.ci95_hi)
    }
}

/// Certainty equivalent of `E[U(x exp(L))]` from log-wealth samples `L`.
pub fn ce_from_log_wealth(log_wealth: &[f64], x: f64, spec: UtilitySpec, seed: u64) -> Result<CeEstimate> {
    let p = spec.p();
    let utils: Vec<f64> = log_wealth.iter().map(|l| (x * l.exp()).powf(p) / p).collect();
    let raw = McEstimate::from_samples(&utils, seed)?;
    let ce = |u: f64| certainty_equivalent(u, spec).unwrap_or(f64::INFINITY);
    let value = certainty_equivalent(raw.mean, spec)?;
    Ok(CeEstimate::from_endpoints(value, ce(raw.ci95_lo), ce(raw.ci95_hi), raw))
}

/// Dual upper bound `x m^(1/q)` with `m = E[(Z_T H_T)^(-q)]` from samples of
/// `log(Z_T H_T)`. The map is decreasing in `m`, so the endpoints swap.
pub fn ub_from_log_deflator(log_deflator: &[f64], x: f64, spec: UtilitySpec, seed: u64) -> Result<CeEstimate> {
    let q = spec.q();
    let m: Vec<f64> = log_deflator.iter().map(|l| (-q * l).exp()).collect();
    let raw = McEstimate::from_samples(&m, seed)?;
    let map = |m: f64| if m > 0.0 { x * m.powf(1.0 / q) } else { f64::INFINITY };
    if !(raw.mean > 0.0) {
        return Err(Error::Integrability("dual statistic has non-positive mean"));
    }
    Ok(CeEstimate::from_endpoints(map(raw.mean), map(raw.ci95_hi), map(raw.ci95_lo), raw))
}

fn physical(cfg: &SimConfig) -> SimConfig {
    SimConfig { measure: Measure::Physical, ..*cfg }
}

/// Certainty equivalent of `strategy` in the model perturbed by `eps`.
pub fn estimate_ce(sol: &BaseSolution, eps: f64, strategy: Strategy, cfg: &SimConfig) -> Result<CeEstimate> {
    let ctrl = sol.primal(strategy);
    let stats = simulate(sol, &[Leg::new(eps, &ctrl)], &[], &physical(cfg))?;
    ce_from_log_wealth(&stats.log_wealth(0), cfg.initial_wealth, sol.utility(), cfg.seed)
}

/// Certainty equivalents of several `(eps, strategy)` pairs from one pass
/// with common random numbers, and the clamp count of the pass.
pub fn estimate_ce_many(
    sol: &BaseSolution,
    legs: &[(f64, Strategy)],
    cfg: &SimConfig,
) -> Result<(Vec<CeEstimate>, u64)> {
    let ctrls: Vec<_> = legs.iter().map(|&(_, s)| sol.primal(s)).collect();
    let primal: Vec<Leg<'_>> = legs.iter().zip(&ctrls).map(|(&(e, _), c)| Leg::new(e, c)).collect();
    let stats = simulate(sol, &primal, &[], &physical(cfg))?;
    let est = (0..legs.len())
        .map(|i| ce_from_log_wealth(&stats.log_wealth(i), cfg.initial_wealth, sol.utility(), cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((est, stats.clamps()))
}

/// Certainty equivalent of the corrected control, a lower bound for the
/// optimal one.
pub fn lower_bound(sol: &BaseSolution, eps: f64, cfg: &SimConfig) -> Result<CeEstimate> {
    estimate_ce(sol, eps, Strategy::Corrected(eps), cfg)
}

/// Dual upper bound driven by the corrected dual control.
pub fn upper_bound(sol: &BaseSolution, eps: f64, cfg: &SimConfig) -> Result<CeEstimate> {
    let ctrl = sol.dual(eps);
    let stats = simulate(sol, &[], &[Leg::new(eps, &ctrl)], &physical(cfg))?;
    ub_from_log_deflator(&stats.log_deflator(0), cfg.initial_wealth, sol.utility(), cfg.seed)
}

/// Base-optimiser value, lower and upper bound at one perturbation size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsRow {
    pub eps: f64,
    pub base: CeEstimate,
    pub lower: CeEstimate,
    pub upper: CeEstimate,
}

/// Bounds at every `eps` from a single pass with common random numbers.
/// Also returns the clamp count of the pass.
pub fn bounds(sol: &BaseSolution, eps: &[f64], cfg: &SimConfig) -> Result<(Vec<BoundsRow>, u64)> {
    let base = sol.primal(Strategy::Base);
    let corrected: Vec<_> = eps.iter().map(|&e| sol.primal(Strategy::Corrected(e))).collect();
    let duals: Vec<_> = eps.iter().map(|&e| sol.dual(e)).collect();
    let mut primal = Vec::with_capacity(2 * eps.len());
    for (i, &e) in eps.iter().enumerate() {
        primal.push(Leg::new(e, &base));
        primal.push(Leg::new(e, &corrected[i]));
    }
    let dual: Vec<Leg<'_>> = eps.iter().zip(&duals).map(|(&e, d)| Leg::new(e, d)).collect();
    let stats = simulate(sol, &primal, &dual, &physical(cfg))?;
    let (x, spec, seed) = (cfg.initial_wealth, sol.utility(), cfg.seed);
    let rows = eps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            Ok(BoundsRow {
                eps: e,
                base: ce_from_log_wealth(&stats.log_wealth(2 * i), x, spec, seed)?,
                lower: ce_from_log_wealth(&stats.log_wealth(2 * i + 1), x, spec, seed)?,
                upper: ub_from_log_deflator(&stats.log_deflator(i), x, spec, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, stats.clamps()))
}

/// Tilted-measure expectations of the path functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedFunctionals {
    /// `E~[eta]`, an estimate of `Delta0`.
    pub delta0: McEstimate,
    /// `E~[Lambda]`.
    pub lambda_mean: McEstimate,
    /// `E~[Phi]`, another estimate of `Delta0`.
    pub phi_mean: McEstimate,
    /// Estimate of `Delta00`.
    pub delta00: McEstimate,
    /// `E~[(Phi - Delta0 - martingale part)^2]`; vanishes up to
    /// discretisation when the representation integrands are right.
    pub representation_residual: McEstimate,
    pub phi: Vec<f64>,
    pub clamps: u64,
}

pub fn estimate_ptilde_functionals(sol: &BaseSolution, cfg: &SimConfig) -> Result<TiltedFunctionals> {
    let cfg = SimConfig { measure: Measure::Tilted, functionals: true, ..*cfg };
    let stats = simulate(sol, &[], &[], &cfg)?;
    let (eta, lam, phi) = (stats.eta().unwrap(), stats.lambda().unwrap(), stats.phi().unwrap());
    let d00 = stats.delta00_integral().unwrap();
    let mart = stats.martingale().unwrap();
    let phi_mean = McEstimate::from_samples(&phi, cfg.seed)?;
    let resid: Vec<f64> =
        phi.iter().zip(&mart).map(|(f, m)| (f - phi_mean.mean - m) * (f - phi_mean.mean - m)).collect();
    Ok(TiltedFunctionals {
        delta0: McEstimate::from_samples(&eta, cfg.seed)?,
        lambda_mean: McEstimate::from_samples(&lam, cfg.seed)?,
        phi_mean,
        delta00: McEstimate::from_samples(&d00, cfg.seed)?,
        representation_residual: McEstimate::from_samples(&resid, cfg.seed)?,
        phi,
        clamps: stats.clamps(),
    })
}

/// Physical-measure mean of `Lambda`, needed by the log-utility benchmark of
/// the square-root factor model.
pub fn estimate_lambda_mean(sol: &BaseSolution, cfg: &SimConfig) -> Result<McEstimate> {
    let cfg = SimConfig { measure: Measure::Physical, functionals: true, ..*cfg };
    let stats = simulate(sol, &[], &[], &cfg)?;
    McEstimate::from_samples(&stats.lambda().unwrap(), cfg.seed)
}

/// Error-bound constants from a physical pass (for `eta`, `Lambda`) and a
/// tilted pass (for `Phi`) with the same seed.
pub fn estimate_error_bounds(sol: &BaseSolution, cfg: &SimConfig) -> Result<expansion::ErrorBounds> {
    let pcfg = SimConfig { measure: Measure::Physical, functionals: true, ..*cfg };
    let stats = simulate(sol, &[], &[], &pcfg)?;
    let tilted = estimate_ptilde_functionals(sol, cfg)?;
    expansion::error_constants(
        &stats.eta().unwrap(),
        &stats.lambda().unwrap(),
        &tilted.phi,
        sol.u0(),
        sol.utility(),
        cfg.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use mprexp_core::models::{BsModel, Model};

    fn small(seed: u64) -> SimConfig {
        SimConfig { n_paths: 200, dt: 0.1, workers: Some(1), ..SimConfig::desk(seed) }
    }

    fn bs() -> BaseSolution {
        let m = BsModel::new(0.3, 1.0, 1.0).unwrap();
        BaseSolution::new(Model::BlackScholes(m), UtilitySpec::new(-1.0).unwrap(), 10).unwrap()
    }

    #[test]
    fn step_count_must_divide_horizon() {
        assert_eq!(small(0).n_steps(1.0).unwrap(), 10);
        assert!(SimConfig { dt: 0.3, ..small(0) }.n_steps(1.0).is_err());
        assert!(SimConfig { n_paths: 1, ..small(0) }.n_steps(1.0).is_err());
        assert!(SimConfig { dt: -1.0, ..small(0) }.n_steps(1.0).is_err());
    }

    #[test]
    fn zero_strategy_keeps_unit_wealth() {
        let sol = bs();
        let est = estimate_ce(&sol, 0.2, Strategy::Zero, &small(3)).unwrap();
        assert_eq!((est.value, est.ci95_lo, est.ci95_hi, est.stderr), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn ub_endpoints_are_swapped() {
        let spec = UtilitySpec::new(-1.0).unwrap();
        let e = ub_from_log_deflator(&[-0.2, 0.1, 0.3, -0.5], 1.0, spec, 0).unwrap();
        assert!(e.ci95_lo <= e.value && e.value <= e.ci95_hi);
        assert!(e.stderr > 0.0);
    }

    #[test]
    fn functionals_are_only_recorded_on_request() {
        let sol = bs();
        let s = simulate(&sol, &[], &[], &small(1)).unwrap();
        assert!(s.eta().is_none() && s.phi().is_none());
        let s = simulate(&sol, &[], &[], &SimConfig { functionals: true, ..small(1) }).unwrap();
        // Lambda = lambda'^2 T for a constant direction
        assert!(s.lambda().unwrap().iter().all(|&l| (l - 1.0).abs() < 1e-12));
        assert_eq!(s.clamps(), 0);
    }

    #[test]
    fn wealth_scales_with_initial_wealth() {
        let sol = bs();
        let ctrl = sol.primal(Strategy::Base);
        let a = simulate(&sol, &[Leg::new(0.1, &ctrl)], &[], &small(5)).unwrap();
        let b = simulate(&sol, &[Leg::new(0.1, &ctrl)], &[], &SimConfig { initial_wealth: 2.5, ..small(5) }).unwrap();
        for i in 0..a.n_paths() {
            assert_eq!(b.wealth(0, i), 2.5 * a.log_wealth(0)[i].exp());
            assert!(a.wealth(0, i) > 0.0);
        }
    }
}

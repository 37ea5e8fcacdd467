//! Zeroth-, first- and second-order expansions of the primal and dual value
//! functions in the perturbation size, their error-bound constants, and the
//! closed-form log-utility benchmark.
//!
//! With `Delta0` the first-order sensitivity and `Delta00` the second-order
//! one,
//!
//! ```text
//! u(eps) ~ u0 (1 + eps p Delta0 + eps^2 p (Delta00 + p Delta0^2) / 2)
//! v(eps) ~ v0 (1 + eps q Delta0 + eps^2 q (Delta00 + q Delta0^2) / 2)
//! ```

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::models::{self, BaseSolution, MarketState, Model};
use crate::riccati::{integrate_samples, OdeGrid};
use crate::stats::{jackknife, McEstimate};
use crate::utility::{certainty_equivalent, UtilitySpec};

/// First-order sensitivity `Delta0` of the value functions.
pub fn delta0(sol: &BaseSolution) -> Result<f64> {
    let spec = sol.utility();
    match sol.model() {
        Model::BlackScholes(m) => Ok(m.lambda * m.lambda_prime * m.horizon / spec.one_minus_p()),
        Model::KimOmberg(m) => {
            let g = sol.correction_grid().ok_or(Error::MissingInput("correction grid"))?;
            let at0 = |name| g.initial(name).ok_or(Error::MissingInput("correction function"));
            let (c1, c4, c5) = (at0("C1")?, at0("C4")?, at0("C5")?);
            Ok((c1 + c4 * m.lambda0 + c5 * m.lambda0 * m.lambda0) / (spec.p() - 1.0))
        }
        Model::ExtendedAffine(m) => {
            let g = sol.value_grid().ok_or(Error::MissingInput("value grid"))?;
            let pm1 = spec.p() - 1.0;
            let pi: Vec<f64> = g.column(1).iter().map(|b| (b * m.beta - 1.0) / pm1).collect();
            Ok(integrate_samples(&pi, g.step()))
        }
    }
}

/// `Delta0` of the Ornstein-Uhlenbeck model as `int E~[lambda lambda'] dt / (1 - p)`.
pub fn delta0_via_moments(sol: &BaseSolution) -> Result<f64> {
    let g = sol.moment_grid().ok_or(Error::MissingInput("moment grid"))?;
    let m12 = g.series("m12").ok_or(Error::MissingInput("m12"))?;
    Ok(integrate_samples(m12, g.step()) / sol.utility().one_minus_p())
}

/// Second-order sensitivity `Delta00`.
///
/// The square-root factor model needs the tilted mean of `Lambda`, which has
/// no closed form; use [`delta00_from_lambda_mean`] with a simulated value.
pub fn delta00(sol: &BaseSolution) -> Result<f64> {
    let spec = sol.utility();
    let p = spec.p();
    match sol.model() {
        Model::BlackScholes(m) => Ok(m.lambda_prime * m.lambda_prime * m.horizon / spec.one_minus_p()),
        Model::KimOmberg(m) => {
            let cg = sol.correction_grid().ok_or(Error::MissingInput("correction grid"))?;
            let mg = sol.moment_grid().ok_or(Error::MissingInput("moment grid"))?;
            let pm1 = p - 1.0;
            let g2 = m.gamma * m.gamma;
            let (c2, c4, c5, c6) = (col(cg, "C2")?, col(cg, "C4")?, col(cg, "C5")?, col(cg, "C6")?);
            let (m1, m2, m1p, m12, m2p) =
                (col(mg, "m1")?, col(mg, "m2")?, col(mg, "m1p")?, col(mg, "m12")?, col(mg, "m2p")?);
            let f: Vec<f64> = (0..=cg.n_steps())
                .map(|k| {
                    let gb2 = (c2[k] * c2[k] + 2.0 * c2[k] * c6[k] * m1[k] + c6[k] * c6[k] * m2[k]) / (pm1 * pm1);
                    let gb_lp = (c2[k] * m1p[k] + c6[k] * m12[k]) / pm1;
                    let gw2 = g2 / (pm1 * pm1)
                        * (c4[k] * c4[k]
                            + 4.0 * c5[k] * c5[k] * m2[k]
                            + c6[k] * c6[k] * m2p[k]
                            + 4.0 * c4[k] * c5[k] * m1[k]
                            + 2.0 * c4[k] * c6[k] * m1p[k]
                            + 4.0 * c5[k] * c6[k] * m12[k]);
                    p * gw2 + (m2p[k] + p * (gb2 + 2.0 * gb_lp)) / (1.0 - p)
                })
                .collect();
            Ok(integrate_samples(&f, cg.step()))
        }
        Model::ExtendedAffine(_) => Err(Error::MissingInput("tilted mean of Lambda for the square-root factor")),
    }
}

fn col<'g>(g: &'g OdeGrid, name: &str) -> Result<&'g [f64]> {
    g.series(name).ok_or(Error::MissingInput("grid series"))
}

/// `Delta00 = E~[Lambda] / (1 - p)` for models without martingale correction terms.
pub fn delta00_from_lambda_mean(mean_lambda: f64, spec: UtilitySpec) -> f64 {
    mean_lambda / spec.one_minus_p()
}

/// Pathwise integrand of `Delta00` in `dt`:
/// `p gW^2 + (lambda'^2 + p gB (gB + 2 lambda')) sigma^2 / (1 - p)`.
pub fn delta00_integrand(sol: &BaseSolution, s: &MarketState) -> f64 {
    let (gb, gw) = sol.gamma(s);
    delta00_integrand_with(sol.utility(), s, gb, gw)
}

/// [`delta00_integrand`] with the representation integrands supplied.
#[inline]
pub fn delta00_integrand_with(spec: UtilitySpec, s: &MarketState, gb: f64, gw: f64) -> f64 {
    let p = spec.p();
    p * gw * gw
        + (s.lambda_prime * s.lambda_prime + p * gb * (gb + 2.0 * s.lambda_prime)) * s.sigma * s.sigma / (1.0 - p)
}

/// Exact primal value at perturbation `eps` where it is computable.
pub fn exact_value(sol: &BaseSolution, eps: f64) -> Result<Option<f64>> {
    match sol.model() {
        Model::BlackScholes(m) => Ok(Some(models::bs_exact_value(m, sol.utility(), eps).0)),
        Model::KimOmberg(m) => models::ko_exact_value(m, sol.utility(), eps, sol.n_steps()).map(Some),
        Model::ExtendedAffine(_) => Ok(None),
    }
}

/// Base values and sensitivities of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionCoefficients {
    pub utility: UtilitySpec,
    pub u0: f64,
    pub v0: f64,
    pub delta0: f64,
    pub delta00: Option<f64>,
    /// Monte-Carlo standard error of `delta00` when it was simulated.
    pub delta00_stderr: Option<f64>,
}

impl ExpansionCoefficients {
    /// Coefficients with a deterministic `Delta00` where one exists.
    pub fn new(sol: &BaseSolution) -> Result<Self> {
        let delta00 = match delta00(sol) {
            Ok(d) => Some(d),
            Err(Error::MissingInput(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            utility: sol.utility(),
            u0: sol.u0(),
            v0: sol.v0(),
            delta0: delta0(sol)?,
            delta00,
            delta00_stderr: None,
        })
    }

    pub fn with_delta00(mut self, delta00: f64, stderr: Option<f64>) -> Self {
        self.delta00 = Some(delta00);
        self.delta00_stderr = stderr;
        self
    }

    /// `p u0 Delta0`.
    pub fn delta_u1(&self) -> f64 {
        self.utility.p() * self.u0 * self.delta0
    }

    /// `p u0 (Delta00 + p Delta0^2)`.
    pub fn delta_u2(&self) -> Result<f64> {
        let p = self.utility.p();
        let d00 = self.delta00.ok_or(Error::MissingInput("Delta00"))?;
        Ok(p * self.u0 * (d00 + p * self.delta0 * self.delta0))
    }

    /// `q v0 Delta0`.
    pub fn delta_v1(&self) -> f64 {
        self.utility.q() * self.v0 * self.delta0
    }

    /// `q v0 (Delta00 + q Delta0^2)`.
    pub fn delta_v2(&self) -> Result<f64> {
        let q = self.utility.q();
        let d00 = self.delta00.ok_or(Error::MissingInput("Delta00"))?;
        Ok(q * self.v0 * (d00 + q * self.delta0 * self.delta0))
    }

    /// Approximations `(u, v)` at perturbation `eps` truncated after `order`.
    pub fn approx(&self, eps: f64, order: u8) -> Result<(f64, f64)> {
        match order {
            0 => Ok((self.u0, self.v0)),
            1 => Ok((self.u0 + eps * self.delta_u1(), self.v0 + eps * self.delta_v1())),
            2 => {
                let (u1, v1) = self.approx(eps, 1)?;
                Ok((u1 + 0.5 * eps * eps * self.delta_u2()?, v1 + 0.5 * eps * eps * self.delta_v2()?))
            }
            o => Err(Error::InvalidOrder(o)),
        }
    }
}

/// See [`ExpansionCoefficients::approx`].
pub fn approx_value(coefficients: &ExpansionCoefficients, eps: f64, order: u8) -> Result<(f64, f64)> {
    coefficients.approx(eps, order)
}

/// Approximations at one perturbation size. Certainty equivalents are `None`
/// where the approximation leaves the range of the utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionRow {
    pub eps: f64,
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub ce: [Option<f64>; 3],
    pub exact_u: Option<f64>,
    pub exact_ce: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub model: &'static str,
    pub coefficients: ExpansionCoefficients,
    pub rows: Vec<ExpansionRow>,
}

impl ExpansionReport {
    /// Evaluates `coefficients` at every `eps`, with exact values where the
    /// model has them.
    pub fn build(sol: &BaseSolution, coefficients: ExpansionCoefficients, eps: &[f64]) -> Result<Self> {
        let spec = coefficients.utility;
        let mut rows = Vec::with_capacity(eps.len());
        for &e in eps {
            let mut row =
                ExpansionRow { eps: e, u: [0.0; 3], v: [0.0; 3], ce: [None; 3], exact_u: None, exact_ce: None };
            for order in 0..3u8 {
                let (u, v) = match coefficients.approx(e, order) {
                    Ok(uv) => uv,
                    Err(Error::MissingInput(_)) => (f64::NAN, f64::NAN),
                    Err(err) => return Err(err),
                };
                row.u[order as usize] = u;
                row.v[order as usize] = v;
                row.ce[order as usize] = certainty_equivalent(u, spec).ok();
            }
            row.exact_u = exact_value(sol, e)?;
            row.exact_ce = row.exact_u.and_then(|u| certainty_equivalent(u, spec).ok());
            rows.push(row);
        }
        Ok(Self { model: sol.model().name(), coefficients, rows })
    }
}

/// Central differences of the exact value in the perturbation size against
/// the first- and second-order expansion coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    pub h: f64,
    /// `(u(h) - u(-h)) / 2h`.
    pub d1_fd: f64,
    /// `(u(h) - 2 u0 + u(-h)) / h^2`.
    pub d2_fd: f64,
    /// `p u0 Delta0`.
    pub d1: f64,
    /// `p u0 (Delta00 + p Delta0^2)`.
    pub d2: f64,
}

impl FdCheck {
    pub fn err1(&self) -> f64 {
        (self.d1_fd - self.d1).abs()
    }

    pub fn err2(&self) -> f64 {
        (self.d2_fd - self.d2).abs()
    }
}

/// Finite-difference check at step `h`; needs a model with an exact value.
pub fn finite_difference_check(sol: &BaseSolution, coefficients: &ExpansionCoefficients, h: f64) -> Result<FdCheck> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter("finite-difference step must be positive"));
    }
    let u = |e: f64| exact_value(sol, e)?.ok_or(Error::MissingInput("exact value"));
    let (up, um) = (u(h)?, u(-h)?);
    Ok(FdCheck {
        h,
        d1_fd: (up - um) / (2.0 * h),
        d2_fd: (up - 2.0 * coefficients.u0 + um) / (h * h),
        d1: coefficients.delta_u1(),
        d2: coefficients.delta_u2()?,
    })
}

/// Exact log-utility value `log x + (base + 2 eps cross + eps^2 pert) / 2`,
/// where the three terms are `E[int lambda^2 d<M>]`, `E[int lambda lambda' d<M>]`
/// and `E[int lambda'^2 d<M>]` under the physical measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogUtilityExpansion {
    pub base: f64,
    pub cross: f64,
    pub pert: f64,
}

impl LogUtilityExpansion {
    pub fn value(&self, eps: f64, x: f64) -> f64 {
        x.ln() + 0.5 * (self.base + 2.0 * eps * self.cross + eps * eps * self.pert)
    }

    /// Dual value `v(y) = u(1/y) - 1`.
    pub fn dual_value(&self, eps: f64, y: f64) -> f64 {
        self.value(eps, 1.0 / y) - 1.0
    }

    /// First and second derivatives in `eps` at zero.
    pub fn derivatives(&self) -> (f64, f64) {
        (self.cross, self.pert)
    }
}

/// Log-utility coefficients. The square-root factor needs `E[Lambda]` under
/// the physical measure (`lambda_mean`), which is simulated.
pub fn log_utility_expansion(model: &Model, lambda_mean: Option<f64>) -> Result<LogUtilityExpansion> {
    match model {
        Model::BlackScholes(m) => Ok(LogUtilityExpansion {
            base: m.lambda * m.lambda * m.horizon,
            cross: m.lambda * m.lambda_prime * m.horizon,
            pert: m.lambda_prime * m.lambda_prime * m.horizon,
        }),
        Model::KimOmberg(m) => {
            let (k, t) = (m.kappa, m.horizon);
            let e1 = (1.0 - (-k * t).exp()) / k;
            let e2 = (1.0 - (-2.0 * k * t).exp()) / (2.0 * k);
            let d = m.lambda0 - m.theta;
            let var_int = (t - e2) / (2.0 * k);
            Ok(LogUtilityExpansion {
                base: m.theta * m.theta * t + 2.0 * m.theta * d * e1 + d * d * e2 + m.gamma * m.gamma * var_int,
                cross: 0.0,
                pert: var_int,
            })
        }
        Model::ExtendedAffine(m) => {
            let pert = lambda_mean.ok_or(Error::MissingInput("mean of Lambda for the square-root factor"))?;
            let e1 = (1.0 - (-m.kappa * m.horizon).exp()) / m.kappa;
            Ok(LogUtilityExpansion { base: m.theta * m.horizon + (m.f0 - m.theta) * e1, cross: m.horizon, pert })
        }
    }
}

/// Log-utility value at perturbation `eps` and wealth `x`.
pub fn log_utility_value(model: &Model, eps: f64, x: f64, lambda_mean: Option<f64>) -> Result<f64> {
    Ok(log_utility_expansion(model, lambda_mean)?.value(eps, x))
}

/// Constants of the one-sided second-order error bounds.
///
/// `c_v` and `c_v_prime` bound the dual residual from above:
/// `v(eps) - v0 - eps q v0 Delta0 <= (c_v eps^2 + c_v_prime |eps|^3) / 2`.
/// `c_u(eps)` bounds the primal residual from below:
/// `u(eps) - u0 - eps p u0 Delta0 >= -c_u(eps) eps^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBounds {
    pub c_v: f64,
    pub c_v_stderr: f64,
    pub c_v_prime: f64,
    pub c_v_prime_stderr: f64,
    u0: f64,
    spec: UtilitySpec,
    phi: Vec<f64>,
    seed: u64,
}

/// Estimates the error-bound constants from simulated path functionals:
/// `eta` and `lambda` under the physical measure, `phi` under the tilted one.
///
/// `c_v = |q| ||eta||^2_{2(1-p)} + ||Lambda||_{1-p}` and
/// `c_v_prime = |q| ||eta Lambda||_{1-p}`, with jackknife standard errors.
pub fn error_constants(
    eta: &[f64],
    lambda: &[f64],
    phi: &[f64],
    u0: f64,
    spec: UtilitySpec,
    seed: u64,
) -> Result<ErrorBounds> {
    if eta.len() != lambda.len() {
        return Err(Error::InvalidParameter("eta and Lambda samples must be paired"));
    }
    if phi.len() < 2 {
        return Err(Error::InvalidParameter("at least two Phi samples are required"));
    }
    let s = spec.one_minus_p();
    let aq = spec.q().abs();
    let eta_pow: Vec<f64> = eta.iter().map(|e| e.abs().powf(2.0 * s)).collect();
    let lam_pow: Vec<f64> = lambda.iter().map(|l| l.abs().powf(s)).collect();
    let cross_pow: Vec<f64> = eta.iter().zip(lambda).map(|(e, l)| (e * l).abs().powf(s)).collect();
    let (c_v, c_v_stderr) = jackknife(&[&eta_pow, &lam_pow], |m| aq * m[0].powf(1.0 / s) + m[1].powf(1.0 / s))?;
    let (c_v_prime, c_v_prime_stderr) = jackknife(&[&cross_pow], |m| aq * m[0].powf(1.0 / s))?;
    Ok(ErrorBounds { c_v, c_v_stderr, c_v_prime, c_v_prime_stderr, u0, spec, phi: phi.to_vec(), seed })
}

impl ErrorBounds {
    /// `p^2 |u0| E~[Phi^2 exp(|eps| |p| (sgn(eps) Phi)^-)] / 2`. Negative `eps`
    /// is handled by flipping the perturbation direction.
    pub fn c_u(&self, eps: f64) -> Result<McEstimate> {
        let p = self.spec.p();
        let k = 0.5 * p * p * self.u0.abs();
        let sign = if eps < 0.0 { -1.0 } else { 1.0 };
        let w: Vec<f64> = self
            .phi
            .iter()
            .map(|&f| {
                let neg = (-(sign * f)).max(0.0);
                k * f * f * (eps.abs() * p.abs() * neg).exp()
            })
            .collect();
        McEstimate::from_samples(&w, self.seed)
    }

    /// Upper bound on the dual residual at `eps`.
    pub fn dual_residual_bound(&self, eps: f64) -> f64 {
        0.5 * (self.c_v * eps * eps + self.c_v_prime * eps.abs().powi(3))
    }

    /// Lower bound (a non-positive number) on the primal residual at `eps`.
    pub fn primal_residual_bound(&self, eps: f64) -> Result<f64> {
        Ok(-self.c_u(eps)?.mean * eps * eps)
    }
}

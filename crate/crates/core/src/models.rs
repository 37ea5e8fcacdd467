//! Model catalog: constant market price of risk (Black-Scholes), an
//! Ornstein-Uhlenbeck market price of risk (Kim-Omberg) and the
//! square-root-factor extended-affine specification.
//!
//! Each model is a base market price of risk `lambda`, a perturbation
//! direction `lambda'` and a volatility normalisation `sigma`, so that the
//! perturbed return is `dR = sigma dB + (lambda + eps lambda') sigma^2 dt`.
//! [`BaseSolution`] bundles a model with the coefficient grids of its
//! unperturbed (`eps = 0`) problem and exposes the optimisers, the
//! martingale-representation integrands and the Girsanov drifts of the tilted
//! measure.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::riccati::{self, FactorParams, OdeGrid};
use crate::utility::{conjugacy_map, Conjugacy, UtilitySpec};

/// Constant market price of risk with a constant perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsModel {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub horizon: f64,
}

/// Ornstein-Uhlenbeck base factor `d lambda = kappa (theta - lambda) dt + gamma dW`
/// perturbed along `d lambda' = -kappa lambda' dt + dB`, `lambda'_0 = 0`.
///
/// The perturbation size plays the role of the loading `beta` of the full
/// model `d lambda = kappa (theta - lambda) dt + beta dB + gamma dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KoModel {
    pub kappa: f64,
    pub theta: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub horizon: f64,
}

/// Square-root factor `dF = kappa (theta - F) dt + sqrt(F) (beta dB + gamma dW)`
/// with `sigma = sqrt(F)`, base `lambda = 1` and perturbation `lambda' = 1 / F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EaModel {
    pub kappa: f64,
    pub theta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub f0: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    BlackScholes(BsModel),
    KimOmberg(KoModel),
    ExtendedAffine(EaModel),
}

/// A model together with the investor and the perturbation size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub model: Model,
    pub utility: UtilitySpec,
    pub epsilon: f64,
}

fn positive(x: f64, what: &'static str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value: x })
    }
}

fn finite(x: f64, what: &'static str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value: x })
    }
}

impl BsModel {
    pub fn new(lambda: f64, lambda_prime: f64, horizon: f64) -> Result<Self> {
        let m = Self { lambda, lambda_prime, horizon };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        finite(self.lambda, "lambda")?;
        finite(self.lambda_prime, "lambda'")?;
        positive(self.horizon, "horizon")
    }
}

impl KoModel {
    pub fn new(kappa: f64, theta: f64, gamma: f64, lambda0: f64, horizon: f64) -> Result<Self> {
        let m = Self { kappa, theta, gamma, lambda0, horizon };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        positive(self.kappa, "kappa")?;
        finite(self.theta, "theta")?;
        finite(self.gamma, "gamma")?;
        finite(self.lambda0, "lambda0")?;
        positive(self.horizon, "horizon")
    }

    /// Factor parameters of the full model with loading `beta` on `B`.
    pub fn factor_params(&self, beta: f64) -> FactorParams {
        FactorParams { kappa: self.kappa, theta: self.theta, beta, gamma: self.gamma, horizon: self.horizon }
    }
}

impl EaModel {
    pub fn new(kappa: f64, theta: f64, beta: f64, gamma: f64, f0: f64, horizon: f64) -> Result<Self> {
        let m = Self { kappa, theta, beta, gamma, f0, horizon };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        positive(self.kappa, "kappa")?;
        positive(self.theta, "theta")?;
        finite(self.beta, "beta")?;
        finite(self.gamma, "gamma")?;
        positive(self.f0, "F0")?;
        positive(self.horizon, "horizon")?;
        if 2.0 * self.kappa * self.theta <= self.beta * self.beta + self.gamma * self.gamma {
            return Err(Error::InvalidParameter("Feller condition 2 kappa theta > beta^2 + gamma^2 violated"));
        }
        Ok(())
    }

    pub fn factor_params(&self) -> FactorParams {
        FactorParams { kappa: self.kappa, theta: self.theta, beta: self.beta, gamma: self.gamma, horizon: self.horizon }
    }
}

impl Model {
    pub fn horizon(&self) -> f64 {
        match self {
            Model::BlackScholes(m) => m.horizon,
            Model::KimOmberg(m) => m.horizon,
            Model::ExtendedAffine(m) => m.horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::BlackScholes(m) => m.validate(),
            Model::KimOmberg(m) => m.validate(),
            Model::ExtendedAffine(m) => m.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::BlackScholes(_) => "black-scholes",
            Model::KimOmberg(_) => "kim-omberg",
            Model::ExtendedAffine(_) => "extended-affine",
        }
    }
}

impl ModelSpec {
    pub fn new(model: Model, utility: UtilitySpec, epsilon: f64) -> Result<Self> {
        model.validate()?;
        finite(epsilon, "epsilon")?;
        Ok(Self { model, utility, epsilon })
    }
}

/// Exact primal and dual values at unit wealth with `lambda + eps lambda'`:
/// `p u = exp(q l^2 T / 2)` and `q v = exp(q / (1 - p) l^2 T / 2)`.
pub fn bs_exact_value(model: &BsModel, spec: UtilitySpec, eps: f64) -> (f64, f64) {
    let (p, q) = (spec.p(), spec.q());
    let l = model.lambda + eps * model.lambda_prime;
    let u = (0.5 * q * l * l * model.horizon).exp() / p;
    let v = (0.5 * q / (1.0 - p) * l * l * model.horizon).exp() / q;
    (u, v)
}

/// Primal value `(1/p) exp(-a(0) - b(0) l0 - c(0) l0^2 / 2)` read off a value grid.
pub fn ko_value_from_grid(value: &OdeGrid, lambda0: f64, spec: UtilitySpec) -> Result<f64> {
    let a = value.initial("a").ok_or(Error::MissingInput("a"))?;
    let b = value.initial("b").ok_or(Error::MissingInput("b"))?;
    let c = value.initial("c").ok_or(Error::MissingInput("c"))?;
    Ok((-a - b * lambda0 - 0.5 * c * lambda0 * lambda0).exp() / spec.p())
}

/// Exact value of the full Ornstein-Uhlenbeck model with loading `beta`.
pub fn ko_exact_value(model: &KoModel, spec: UtilitySpec, beta: f64, n_steps: usize) -> Result<f64> {
    let grid = riccati::ko_value_odes(&model.factor_params(beta), spec, n_steps)?;
    ko_value_from_grid(&grid, model.lambda0, spec)
}

/// Optimiser `(b(t) beta + (c(t) beta - 1) lambda) / (p - 1)` of the full model
/// with loading `beta`, given its value grid and the full-model state.
pub fn ko_full_optimizer(t: f64, lambda_ko: f64, beta: f64, value: &OdeGrid, spec: UtilitySpec) -> Result<f64> {
    let b = value.at("b", t)?;
    let c = value.at("c", t)?;
    Ok((b * beta + (c * beta - 1.0) * lambda_ko) / (spec.p() - 1.0))
}

/// Base optimisers `(pi0, nu0) = (lambda / (1 - p), gamma (b(t) + c(t) lambda))`
/// of the Ornstein-Uhlenbeck model; `value` is the `beta = 0` grid.
pub fn ko_base_controls(
    t: f64,
    lambda: f64,
    value: &OdeGrid,
    model: &KoModel,
    spec: UtilitySpec,
) -> Result<(f64, f64)> {
    let b = value.at("b", t)?;
    let c = value.at("c", t)?;
    Ok((lambda / spec.one_minus_p(), model.gamma * (b + c * lambda)))
}

/// Integrands `(gamma^B, gamma^W)` of the martingale representation of
/// `Phi = int pi0 lambda' dt` under the tilted measure.
pub fn ko_gamma(
    t: f64,
    lambda: f64,
    lambda_prime: f64,
    correction: &OdeGrid,
    model: &KoModel,
    spec: UtilitySpec,
) -> Result<(f64, f64)> {
    let c2 = correction.at("C2", t)?;
    let c4 = correction.at("C4", t)?;
    let c5 = correction.at("C5", t)?;
    let c6 = correction.at("C6", t)?;
    let pm1 = spec.p() - 1.0;
    Ok(((c2 + c6 * lambda) / pm1, model.gamma * (c4 + 2.0 * c5 * lambda + c6 * lambda_prime) / pm1))
}

/// Base optimisers `((b(t) beta - 1) / (p - 1), b(t) gamma sqrt(F))` of the
/// square-root factor model.
pub fn ea_base_controls(t: f64, f: f64, value: &OdeGrid, model: &EaModel, spec: UtilitySpec) -> Result<(f64, f64)> {
    if !(f > 0.0) {
        return Err(Error::Domain { what: "factor level F", value: f });
    }
    let b = value.at("b", t)?;
    Ok(((b * model.beta - 1.0) / (spec.p() - 1.0), b * model.gamma * f.sqrt()))
}

/// What a control sees at time `t`: base market price of risk, perturbation
/// direction and volatility normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MarketState {
    pub t: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub sigma: f64,
}

/// Simulated factor state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorState {
    Static,
    Ou { lambda: f64, lambda_prime: f64 },
    Feller { f: f64 },
}

/// A feedback control evaluated along a path.
pub trait Control {
    fn eval(&self, s: &MarketState) -> f64;

    /// Same as [`Control::eval`], reusing base-problem terms already computed
    /// at `s`.
    #[inline]
    fn eval_with(&self, s: &MarketState, _terms: &BaseTerms) -> f64 {
        self.eval(s)
    }
}

/// Base optimisers and representation integrands at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BaseTerms {
    pub pi0: f64,
    pub nu0: f64,
    pub gamma_b: f64,
    pub gamma_w: f64,
}

impl<F: Fn(&MarketState) -> f64> Control for F {
    #[inline]
    fn eval(&self, s: &MarketState) -> f64 {
        self(s)
    }
}

/// Primal strategy selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Invest nothing.
    Zero,
    /// Constant fraction of wealth.
    Constant(f64),
    /// Base-model optimiser `pi0`.
    Base,
    /// Second-order corrected control at the given perturbation size.
    Corrected(f64),
}

#[derive(Debug, Clone)]
enum Grids {
    None,
    Ko { value: OdeGrid, correction: OdeGrid, moments: OdeGrid },
    Ea { value: OdeGrid },
}

// column indices fixed by the system definitions in `riccati`
const B: usize = 1;
const C: usize = 2;
const C2: usize = 1;
const C4: usize = 2;
const C5: usize = 3;
const C6: usize = 4;

/// A model with the solved coefficient grids of its base (`eps = 0`) problem.
#[derive(Debug, Clone)]
pub struct BaseSolution {
    model: Model,
    utility: UtilitySpec,
    n_steps: usize,
    grids: Grids,
}

impl BaseSolution {
    pub fn new(model: Model, utility: UtilitySpec, n_steps: usize) -> Result<Self> {
        model.validate()?;
        let grids = match &model {
            Model::BlackScholes(_) => Grids::None,
            Model::KimOmberg(m) => {
                let fp = m.factor_params(0.0);
                let value = riccati::ko_value_odes(&fp, utility, n_steps)?;
                let correction = riccati::ko_correction_odes(&fp, utility, &value, n_steps)?;
                let moments = riccati::ko_moment_odes(&fp, utility, &value, m.lambda0, n_steps)?;
                Grids::Ko { value, correction, moments }
            }
            Model::ExtendedAffine(m) => {
                Grids::Ea { value: riccati::ea_value_odes(&m.factor_params(), utility, n_steps)? }
            }
        };
        Ok(Self { model, utility, n_steps, grids })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn utility(&self) -> UtilitySpec {
        self.utility
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.model.horizon()
    }

    pub fn value_grid(&self) -> Option<&OdeGrid> {
        match &self.grids {
            Grids::None => None,
            Grids::Ko { value, .. } | Grids::Ea { value } => Some(value),
        }
    }

    pub fn correction_grid(&self) -> Option<&OdeGrid> {
        match &self.grids {
            Grids::Ko { correction, .. } => Some(correction),
            _ => None,
        }
    }

    pub fn moment_grid(&self) -> Option<&OdeGrid> {
        match &self.grids {
            Grids::Ko { moments, .. } => Some(moments),
            _ => None,
        }
    }

    /// Base primal value at unit wealth.
    pub fn u0(&self) -> f64 {
        let p = self.utility.p();
        match (&self.model, &self.grids) {
            (Model::BlackScholes(m), _) => bs_exact_value(m, self.utility, 0.0).0,
            (Model::KimOmberg(m), Grids::Ko { value, .. }) => {
                let (a, b, c) = (value.column(0)[0], value.column(B)[0], value.column(C)[0]);
                (-a - b * m.lambda0 - 0.5 * c * m.lambda0 * m.lambda0).exp() / p
            }
            (Model::ExtendedAffine(m), Grids::Ea { value }) => {
                (-value.column(0)[0] - value.column(B)[0] * m.f0).exp() / p
            }
            _ => unreachable!("grids always match the model"),
        }
    }

    /// Base dual value at `y = 1`.
    pub fn v0(&self) -> f64 {
        conjugacy_map(self.u0(), self.utility, Conjugacy::PrimalToDual).expect("u0 has the sign of p")
    }

    pub fn initial_factor(&self) -> FactorState {
        match &self.model {
            Model::BlackScholes(_) => FactorState::Static,
            Model::KimOmberg(m) => FactorState::Ou { lambda: m.lambda0, lambda_prime: 0.0 },
            Model::ExtendedAffine(m) => FactorState::Feller { f: m.f0 },
        }
    }

    /// Market state seen at time `t`. For the square-root factor, `sigma` uses
    /// `max(F, 0)` and `lambda' = 1 / max(F, f_min)`; the flag reports whether
    /// the floor was hit.
    #[inline]
    pub fn market_state(&self, t: f64, fs: &FactorState, f_min: f64) -> (MarketState, bool) {
        match (&self.model, fs) {
            (Model::BlackScholes(m), _) => {
                (MarketState { t, lambda: m.lambda, lambda_prime: m.lambda_prime, sigma: 1.0 }, false)
            }
            (_, FactorState::Ou { lambda, lambda_prime }) => {
                (MarketState { t, lambda: *lambda, lambda_prime: *lambda_prime, sigma: 1.0 }, false)
            }
            (_, FactorState::Feller { f }) => {
                let clamped = *f < f_min;
                let s = MarketState { t, lambda: 1.0, lambda_prime: 1.0 / f.max(f_min), sigma: f.max(0.0).sqrt() };
                (s, clamped)
            }
            (_, FactorState::Static) => (MarketState { t, ..MarketState::default() }, false),
        }
    }

    /// One Euler step of the factor dynamics driven by increments `db`, `dw`.
    /// The square-root factor uses full truncation.
    #[inline]
    pub fn euler_step(&self, fs: &mut FactorState, dt: f64, db: f64, dw: f64) {
        match (&self.model, fs) {
            (Model::KimOmberg(m), FactorState::Ou { lambda, lambda_prime }) => {
                *lambda += m.kappa * (m.theta - *lambda) * dt + m.gamma * dw;
                *lambda_prime += -m.kappa * *lambda_prime * dt + db;
            }
            (Model::ExtendedAffine(m), FactorState::Feller { f }) => {
                let fp = f.max(0.0);
                *f += m.kappa * (m.theta - fp) * dt + fp.sqrt() * (m.beta * db + m.gamma * dw);
            }
            _ => {}
        }
    }

    /// Base primal optimiser `pi0`.
    #[inline]
    pub fn base_pi(&self, s: &MarketState) -> f64 {
        match (&self.model, &self.grids) {
            (Model::ExtendedAffine(m), Grids::Ea { value }) => {
                (value.lerp(B, s.t) * m.beta - 1.0) / (self.utility.p() - 1.0)
            }
            _ => s.lambda / self.utility.one_minus_p(),
        }
    }

    /// Base dual control `nu0`.
    #[inline]
    pub fn base_nu(&self, s: &MarketState) -> f64 {
        match (&self.model, &self.grids) {
            (Model::KimOmberg(m), Grids::Ko { value, .. }) => {
                m.gamma * (value.lerp(B, s.t) + value.lerp(C, s.t) * s.lambda)
            }
            (Model::ExtendedAffine(m), Grids::Ea { value }) => value.lerp(B, s.t) * m.gamma * s.sigma,
            _ => 0.0,
        }
    }

    /// `(gamma^B, gamma^W)`; identically zero when `Phi` is deterministic.
    #[inline]
    pub fn gamma(&self, s: &MarketState) -> (f64, f64) {
        match (&self.model, &self.grids) {
            (Model::KimOmberg(m), Grids::Ko { correction: g, .. }) => {
                let pm1 = self.utility.p() - 1.0;
                let (c2, c4, c5, c6) = (g.lerp(C2, s.t), g.lerp(C4, s.t), g.lerp(C5, s.t), g.lerp(C6, s.t));
                ((c2 + c6 * s.lambda) / pm1, m.gamma * (c4 + 2.0 * c5 * s.lambda + c6 * s.lambda_prime) / pm1)
            }
            _ => (0.0, 0.0),
        }
    }

    #[inline]
    pub fn base_terms(&self, s: &MarketState) -> BaseTerms {
        let (gamma_b, gamma_w) = self.gamma(s);
        BaseTerms { pi0: self.base_pi(s), nu0: self.base_nu(s), gamma_b, gamma_w }
    }

    /// Corrected primal control `pi0 + eps (lambda' + p gamma^B) / (1 - p)`.
    #[inline]
    pub fn corrected_pi(&self, eps: f64, s: &MarketState) -> f64 {
        let p = self.utility.p();
        let (gb, _) = self.gamma(s);
        self.base_pi(s) + eps * (s.lambda_prime + p * gb) / (1.0 - p)
    }

    /// Corrected dual control `nu0 - eps p gamma^W`.
    #[inline]
    pub fn corrected_nu(&self, eps: f64, s: &MarketState) -> f64 {
        let (_, gw) = self.gamma(s);
        self.base_nu(s) - eps * self.utility.p() * gw
    }

    /// Drifts `(mu_B, mu_W) = (-(lambda - pi0) sigma, -nu0)` such that
    /// `dB = dB~ + mu_B dt` and `dW = dW~ + mu_W dt` with `(B~, W~)` Brownian
    /// under the tilted measure.
    #[inline]
    pub fn girsanov_drifts(&self, s: &MarketState) -> (f64, f64) {
        (-(s.lambda - self.base_pi(s)) * s.sigma, -self.base_nu(s))
    }

    pub fn primal(&self, strategy: Strategy) -> Primal<'_> {
        Primal { sol: self, strategy }
    }

    /// Dual control at perturbation `eps`; `eps = 0` gives the base optimiser.
    pub fn dual(&self, eps: f64) -> Dual<'_> {
        Dual { sol: self, eps }
    }
}

/// Primal feedback control of a [`BaseSolution`].
#[derive(Debug, Clone, Copy)]
pub struct Primal<'a> {
    sol: &'a BaseSolution,
    strategy: Strategy,
}

impl Control for Primal<'_> {
    #[inline]
    fn eval(&self, s: &MarketState) -> f64 {
        match self.strategy {
            Strategy::Zero => 0.0,
            Strategy::Constant(c) => c,
            Strategy::Base => self.sol.base_pi(s),
            Strategy::Corrected(eps) => self.sol.corrected_pi(eps, s),
        }
    }

    #[inline]
    fn eval_with(&self, s: &MarketState, terms: &BaseTerms) -> f64 {
        match self.strategy {
            Strategy::Zero => 0.0,
            Strategy::Constant(c) => c,
            Strategy::Base => terms.pi0,
            Strategy::Corrected(eps) => {
                let p = self.sol.utility.p();
                terms.pi0 + eps * (s.lambda_prime + p * terms.gamma_b) / (1.0 - p)
            }
        }
    }
}

/// Dual feedback control of a [`BaseSolution`].
#[derive(Debug, Clone, Copy)]
pub struct Dual<'a> {
    sol: &'a BaseSolution,
    eps: f64,
}

impl Control for Dual<'_> {
    #[inline]
    fn eval(&self, s: &MarketState) -> f64 {
        self.sol.corrected_nu(self.eps, s)
    }

    #[inline]
    fn eval_with(&self, _s: &MarketState, terms: &BaseTerms) -> f64 {
        terms.nu0 - self.eps * self.sol.utility.p() * terms.gamma_w
    }
}

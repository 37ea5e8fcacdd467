//! Fixed-step classical Runge-Kutta integration of the coefficient ODEs.
//!
//! Every system is sampled on a uniform grid `t_k = k T / N`. Value-function
//! systems run backward from zero terminal data; moment systems run forward
//! from their initial data. Systems whose coefficients come from another grid
//! read them through cubic Hermite interpolation (the stored slopes make this
//! fourth-order accurate), so the coupled schemes keep RK4 convergence.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::utility::UtilitySpec;

/// Largest state dimension handled by the stack-allocated RK4 stages.
pub const MAX_DIM: usize = 8;

/// Right-hand side `dy/dt = f(t, y)` of an ODE system with named components.
pub trait OdeSystem {
    fn names(&self) -> &'static [&'static str];
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

/// Sampled solution of an ODE system on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeGrid {
    horizon: f64,
    n_steps: usize,
    names: Vec<&'static str>,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl OdeGrid {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        grid_time(self.horizon, self.n_steps, k)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }

    pub fn names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.values[i].as_slice())
    }

    /// Samples of component `idx`; panics if out of range.
    pub fn column(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn slopes(&self, idx: usize) -> &[f64] {
        &self.slopes[idx]
    }

    /// Value at `t = 0`.
    pub fn initial(&self, name: &str) -> Option<f64> {
        self.series(name).map(|s| s[0])
    }

    /// Value at `t = T`.
    pub fn terminal(&self, name: &str) -> Option<f64> {
        self.series(name).map(|s| s[self.n_steps])
    }

    /// Linear interpolation of a named component at `t` in `[0, T]`.
    pub fn at(&self, name: &str, t: f64) -> Result<f64> {
        let idx = self.index_of(name).ok_or(Error::MissingInput("grid component"))?;
        self.check_time(t)?;
        Ok(self.lerp(idx, t))
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let tol = 1e-9 * self.horizon;
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Linear interpolation of column `idx`; `t` is clamped to `[0, T]`.
    #[inline]
    pub fn lerp(&self, idx: usize, t: f64) -> f64 {
        let (k, w) = self.locate(t);
        let col = &self.values[idx];
        if w == 0.0 {
            col[k]
        } else {
            col[k] + w * (col[k + 1] - col[k])
        }
    }

    /// Cubic Hermite interpolation of column `idx` using the stored slopes.
    #[inline]
    pub fn hermite(&self, idx: usize, t: f64) -> f64 {
        let (k, w) = self.locate(t);
        let col = &self.values[idx];
        if w == 0.0 {
            return col[k];
        }
        let h = self.step();
        let d = &self.slopes[idx];
        let (w2, w3) = (w * w, w * w * w);
        let h00 = 2.0 * w3 - 3.0 * w2 + 1.0;
        let h10 = w3 - 2.0 * w2 + w;
        let h01 = -2.0 * w3 + 3.0 * w2;
        let h11 = w3 - w2;
        h00 * col[k] + h10 * h * d[k] + h01 * col[k + 1] + h11 * h * d[k + 1]
    }

    #[inline]
    fn locate(&self, t: f64) -> (usize, f64) {
        let pos = (t / self.horizon) * self.n_steps as f64;
        if !(pos > 0.0) {
            return (0, 0.0);
        }
        if pos >= self.n_steps as f64 {
            return (self.n_steps, 0.0);
        }
        let k = pos.floor() as usize;
        let w = pos - k as f64;
        // snap values that land on a node up to rounding
        if w < 1e-9 {
            (k, 0.0)
        } else if w > 1.0 - 1e-9 {
            (k + 1, 0.0)
        } else {
            (k, w)
        }
    }

    fn same_grid(&self, horizon: f64, n_steps: usize) -> bool {
        self.n_steps == n_steps && (self.horizon - horizon).abs() <= 1e-12 * horizon
    }
}

#[inline]
fn grid_time(horizon: f64, n_steps: usize, k: usize) -> f64 {
    if k == n_steps {
        horizon
    } else {
        horizon * (k as f64 / n_steps as f64)
    }
}

fn validate(horizon: f64, n_steps: usize, dim: usize, data: &[f64]) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter("horizon must be positive"));
    }
    if n_steps < 2 {
        return Err(Error::InvalidParameter("n_steps must be at least 2"));
    }
    if dim == 0 || dim > MAX_DIM || data.len() != dim {
        return Err(Error::InvalidParameter("boundary data does not match system dimension"));
    }
    Ok(())
}

fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &mut [f64], h: f64, k1: &[f64]) {
    let n = y.len();
    let mut tmp = [0.0; MAX_DIM];
    let mut k2 = [0.0; MAX_DIM];
    let mut k3 = [0.0; MAX_DIM];
    let mut k4 = [0.0; MAX_DIM];
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    sys.rhs(t + 0.5 * h, &tmp[..n], &mut k2[..n]);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    sys.rhs(t + 0.5 * h, &tmp[..n], &mut k3[..n]);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    sys.rhs(t + h, &tmp[..n], &mut k4[..n]);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    boundary: &[f64],
    horizon: f64,
    n_steps: usize,
    backward: bool,
) -> Result<OdeGrid> {
    let names = sys.names();
    let dim = names.len();
    validate(horizon, n_steps, dim, boundary)?;

    let mut values = vec![vec![0.0; n_steps + 1]; dim];
    let mut slopes = vec![vec![0.0; n_steps + 1]; dim];
    let mut y = [0.0; MAX_DIM];
    y[..dim].copy_from_slice(boundary);
    let mut f = [0.0; MAX_DIM];

    let node = |s: usize| if backward { n_steps - s } else { s };
    let h = if backward { -horizon / n_steps as f64 } else { horizon / n_steps as f64 };

    for s in 0..n_steps {
        let k = node(s);
        let t = grid_time(horizon, n_steps, k);
        sys.rhs(t, &y[..dim], &mut f[..dim]);
        for i in 0..dim {
            values[i][k] = y[i];
            slopes[i][k] = f[i];
        }
        rk4_step(sys, t, &mut y[..dim], h, &f[..dim]);
        let next = node(s + 1);
        if let Some(i) = (0..dim).find(|&i| !y[i].is_finite()) {
            return Err(Error::BlowUp { function: names[i], time: grid_time(horizon, n_steps, next) });
        }
    }
    let k = node(n_steps);
    sys.rhs(grid_time(horizon, n_steps, k), &y[..dim], &mut f[..dim]);
    for i in 0..dim {
        values[i][k] = y[i];
        slopes[i][k] = f[i];
    }
    if let Some(i) = (0..dim).find(|&i| !f[i].is_finite()) {
        return Err(Error::BlowUp { function: names[i], time: grid_time(horizon, n_steps, k) });
    }

    Ok(OdeGrid { horizon, n_steps, names: names.to_vec(), values, slopes })
}

/// Classical RK4 from `t = T` down to `t = 0` starting at `terminal`.
pub fn integrate_backward<S: OdeSystem + ?Sized>(
    sys: &S,
    terminal: &[f64],
    horizon: f64,
    n_steps: usize,
) -> Result<OdeGrid> {
    integrate(sys, terminal, horizon, n_steps, true)
}

/// Classical RK4 from `t = 0` up to `t = T` starting at `initial`.
pub fn integrate_forward<S: OdeSystem + ?Sized>(
    sys: &S,
    initial: &[f64],
    horizon: f64,
    n_steps: usize,
) -> Result<OdeGrid> {
    integrate(sys, initial, horizon, n_steps, false)
}

/// Composite Simpson rule over uniformly spaced samples. An odd number of
/// intervals closes with a Simpson 3/8 panel.
pub fn integrate_samples(samples: &[f64], h: f64) -> f64 {
    let n = samples.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (samples[0] + samples[1]),
        _ => {
            let simpson_end = if n.is_multiple_of(2) { n } else { n - 3 };
            let mut acc = 0.0;
            let mut k = 0;
            while k < simpson_end {
                acc += h / 3.0 * (samples[k] + 4.0 * samples[k + 1] + samples[k + 2]);
                k += 2;
            }
            if simpson_end < n {
                let s = &samples[simpson_end..];
                acc += 3.0 * h / 8.0 * (s[0] + 3.0 * s[1] + 3.0 * s[2] + s[3]);
            }
            acc
        }
    }
}

/// Parameters of a mean-reverting factor `dX = kappa (theta - X) dt + ...`
/// together with the loadings `beta` (on the traded Brownian motion) and
/// `gamma` (on the orthogonal one) and the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorParams {
    pub kappa: f64,
    pub theta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub horizon: f64,
}

/// Coefficients of the affine-quadratic value-function equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KoCoefficients {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
}

impl KoCoefficients {
    pub fn new(params: &FactorParams, spec: UtilitySpec) -> Self {
        let q = spec.q();
        let (b2, g2) = (params.beta * params.beta, params.gamma * params.gamma);
        Self {
            alpha1: params.theta * params.kappa,
            alpha2: (1.0 + q) * b2 + g2,
            alpha3: b2 + g2,
            alpha4: q * params.beta - params.kappa,
        }
    }
}

/// `(a, b, c)` of the Ornstein-Uhlenbeck market-price-of-risk model.
#[derive(Debug, Clone, Copy)]
pub struct KoValueSystem {
    pub coeff: KoCoefficients,
    pub q: f64,
}

impl OdeSystem for KoValueSystem {
    fn names(&self) -> &'static [&'static str] {
        &["a", "b", "c"]
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let KoCoefficients { alpha1, alpha2, alpha3, alpha4 } = self.coeff;
        let (b, c) = (y[1], y[2]);
        dydt[0] = -(alpha1 * b + 0.5 * alpha3 * c - 0.5 * alpha2 * b * b);
        dydt[1] = -(alpha4 * b + alpha1 * c - alpha2 * b * c);
        dydt[2] = -(-self.q + 2.0 * alpha4 * c - alpha2 * c * c);
    }
}

/// `(a, b)` of the square-root factor model with unit base market price of risk.
#[derive(Debug, Clone, Copy)]
pub struct EaValueSystem {
    pub coeff: KoCoefficients,
    pub q: f64,
}

impl OdeSystem for EaValueSystem {
    fn names(&self) -> &'static [&'static str] {
        &["a", "b"]
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let KoCoefficients { alpha1, alpha2, alpha4, .. } = self.coeff;
        let b = y[1];
        dydt[0] = -alpha1 * b;
        dydt[1] = -(alpha4 * b - 0.5 * alpha2 * b * b - 0.5 * self.q);
    }
}

/// Drift coefficients `b~(t) = kappa theta - gamma^2 b(t)` and
/// `c~(t) = kappa + gamma^2 c(t)` of the base factor under the tilted measure.
#[derive(Debug, Clone, Copy)]
struct TiltedDrift<'g> {
    kappa: f64,
    theta: f64,
    gamma: f64,
    value: &'g OdeGrid,
    ib: usize,
    ic: usize,
}

impl<'g> TiltedDrift<'g> {
    fn new(params: &FactorParams, value: &'g OdeGrid) -> Result<Self> {
        let ib = value.index_of("b").ok_or(Error::MissingInput("b in value grid"))?;
        let ic = value.index_of("c").ok_or(Error::MissingInput("c in value grid"))?;
        Ok(Self { kappa: params.kappa, theta: params.theta, gamma: params.gamma, value, ib, ic })
    }

    #[inline]
    fn at(&self, t: f64) -> (f64, f64) {
        let g2 = self.gamma * self.gamma;
        let b = self.value.hermite(self.ib, t);
        let c = self.value.hermite(self.ic, t);
        (self.kappa * self.theta - g2 * b, self.kappa + g2 * c)
    }
}

/// Linear system for `C1, C2, C4, C5, C6` (there is no `C3`).
struct KoCorrectionSystem<'g> {
    drift: TiltedDrift<'g>,
    q: f64,
}

impl OdeSystem for KoCorrectionSystem<'_> {
    fn names(&self) -> &'static [&'static str] {
        &["C1", "C2", "C4", "C5", "C6"]
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let (bt, ct) = self.drift.at(t);
        let (kappa, g2, q) = (self.drift.kappa, self.drift.gamma * self.drift.gamma, self.q);
        let (c2, c4, c5, c6) = (y[1], y[2], y[3], y[4]);
        dydt[0] = -(bt * c4 + g2 * c5);
        dydt[1] = -(bt * c6 - kappa * c2);
        dydt[2] = -(q * c2 - ct * c4 + 2.0 * bt * c5);
        dydt[3] = -(q * c6 - 2.0 * ct * c5);
        dydt[4] = (kappa + ct) * c6 + 1.0;
    }
}

/// First and second moments of `(lambda, lambda')` under the tilted measure.
struct KoMomentSystem<'g> {
    drift: TiltedDrift<'g>,
    q: f64,
}

impl OdeSystem for KoMomentSystem<'_> {
    fn names(&self) -> &'static [&'static str] {
        &["m1", "m2", "m1p", "m12", "m2p"]
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let (bt, ct) = self.drift.at(t);
        let (kappa, g2, q) = (self.drift.kappa, self.drift.gamma * self.drift.gamma, self.q);
        let (m1, m2, m1p, m12, m2p) = (y[0], y[1], y[2], y[3], y[4]);
        dydt[0] = bt - ct * m1;
        dydt[1] = 2.0 * bt * m1 - 2.0 * ct * m2 + g2;
        dydt[2] = q * m1 - kappa * m1p;
        dydt[3] = q * m2 - kappa * m12 + bt * m1p - ct * m12;
        dydt[4] = 2.0 * (q * m12 - kappa * m2p) + 1.0;
    }
}

/// Mean of the square-root factor under the tilted measure, whose drift is
/// `kappa theta - (kappa + beta (1 - pi0(t)) + gamma^2 b(t)) F`.
struct EaFactorMeanSystem<'g> {
    params: FactorParams,
    p: f64,
    value: &'g OdeGrid,
    ib: usize,
}

impl OdeSystem for EaFactorMeanSystem<'_> {
    fn names(&self) -> &'static [&'static str] {
        &["mF"]
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let FactorParams { kappa, theta, beta, gamma, .. } = self.params;
        let b = self.value.hermite(self.ib, t);
        let pi0 = (b * beta - 1.0) / (self.p - 1.0);
        dydt[0] = kappa * theta - (kappa + beta * (1.0 - pi0) + gamma * gamma * b) * y[0];
    }
}

fn check_dependency(value: &OdeGrid, params: &FactorParams, n_steps: usize) -> Result<()> {
    if !value.same_grid(params.horizon, n_steps) {
        return Err(Error::GridMismatch("coefficient grid must share horizon and step count"));
    }
    Ok(())
}

/// Solves for `(a, b, c)` of the Ornstein-Uhlenbeck model at loading `beta`.
pub fn ko_value_odes(params: &FactorParams, spec: UtilitySpec, n_steps: usize) -> Result<OdeGrid> {
    let sys = KoValueSystem { coeff: KoCoefficients::new(params, spec), q: spec.q() };
    let grid = integrate_backward(&sys, &[0.0; 3], params.horizon, n_steps)?;
    // c stays non-negative for p < 0; a sign change means the wrong branch
    if let Some(k) = grid.column(2).iter().position(|&c| c < -1e-12) {
        return Err(Error::BlowUp { function: "c", time: grid.time(k) });
    }
    Ok(grid)
}

/// Solves the correction functions `C1, C2, C4, C5, C6` given the `beta = 0`
/// value grid.
pub fn ko_correction_odes(
    params: &FactorParams,
    spec: UtilitySpec,
    value: &OdeGrid,
    n_steps: usize,
) -> Result<OdeGrid> {
    check_dependency(value, params, n_steps)?;
    let sys = KoCorrectionSystem { drift: TiltedDrift::new(params, value)?, q: spec.q() };
    integrate_backward(&sys, &[0.0; 5], params.horizon, n_steps)
}

/// Solves for `(a, b)` of the square-root factor model.
pub fn ea_value_odes(params: &FactorParams, spec: UtilitySpec, n_steps: usize) -> Result<OdeGrid> {
    let sys = EaValueSystem { coeff: KoCoefficients::new(params, spec), q: spec.q() };
    integrate_backward(&sys, &[0.0; 2], params.horizon, n_steps)
}

/// Forward moment equations of `(lambda, lambda')` under the tilted measure,
/// started from `lambda_0` and `lambda'_0 = 0`.
pub fn ko_moment_odes(
    params: &FactorParams,
    spec: UtilitySpec,
    value: &OdeGrid,
    lambda0: f64,
    n_steps: usize,
) -> Result<OdeGrid> {
    check_dependency(value, params, n_steps)?;
    let sys = KoMomentSystem { drift: TiltedDrift::new(params, value)?, q: spec.q() };
    integrate_forward(&sys, &[lambda0, lambda0 * lambda0, 0.0, 0.0, 0.0], params.horizon, n_steps)
}

/// Tilted-measure mean of the square-root factor started at `f0`.
pub fn ea_factor_mean_odes(
    params: &FactorParams,
    spec: UtilitySpec,
    value: &OdeGrid,
    f0: f64,
    n_steps: usize,
) -> Result<OdeGrid> {
    check_dependency(value, params, n_steps)?;
    let ib = value.index_of("b").ok_or(Error::MissingInput("b in value grid"))?;
    let sys = EaFactorMeanSystem { params: *params, p: spec.p(), value, ib };
    integrate_forward(&sys, &[f0], params.horizon, n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Zero;
    impl OdeSystem for Zero {
        fn names(&self) -> &'static [&'static str] {
            &["y"]
        }
        fn rhs(&self, _t: f64, _y: &[f64], d: &mut [f64]) {
            d[0] = 0.0;
        }
    }

    struct Linear;
    impl OdeSystem for Linear {
        fn names(&self) -> &'static [&'static str] {
            &["y"]
        }
        // -y' = -y
        fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
            d[0] = y[0];
        }
    }

    struct Explode;
    impl OdeSystem for Explode {
        fn names(&self) -> &'static [&'static str] {
            &["y"]
        }
        // -y' = 1000 y^2 from y(T) = 1 explodes at t = T - 1e-3
        fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) {
            d[0] = -y[0] * y[0] * 1e3;
        }
    }

    #[test]
    fn zero_system_stays_zero() {
        let g = integrate_backward(&Zero, &[0.0], 3.0, 10).unwrap();
        assert!(g.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let g = integrate_backward(&Linear, &[1.0], 1.0, 100).unwrap();
        assert!((g.initial("y").unwrap() - (-1.0f64).exp()).abs() < 1e-10);
        assert_eq!(g.terminal("y").unwrap(), 1.0);
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        match integrate_backward(&Explode, &[1.0], 10.0, 1000) {
            Err(Error::BlowUp { function: "y", time }) => assert!(time < 10.0 && time > 0.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(integrate_backward(&Zero, &[0.0], 1.0, 1).is_err());
        assert!(integrate_backward(&Zero, &[0.0], -1.0, 10).is_err());
        assert!(integrate_backward(&Zero, &[0.0, 1.0], 1.0, 10).is_err());
    }

    #[test]
    fn grid_is_uniform_and_interpolates() {
        let g = integrate_forward(&Linear, &[1.0], 2.0, 8).unwrap();
        let h = g.step();
        for (k, t) in g.times().enumerate() {
            assert!((t - k as f64 * h).abs() <= 1e-12 * 2.0);
        }
        assert_eq!(g.time(8), 2.0);
        let mid = g.at("y", 0.125).unwrap();
        let col = g.column(0);
        assert_relative_eq!(mid, 0.5 * (col[0] + col[1]), epsilon = 1e-14);
        assert!(g.at("y", 2.5).is_err());
        assert!(g.at("nope", 1.0).is_err());
        // Hermite tracks exp(t) to O(h^4)
        let fine = integrate_forward(&Linear, &[1.0], 2.0, 16).unwrap();
        let max_err = |g: &OdeGrid| {
            (0..=200).map(|i| 0.01 * i as f64).map(|t| (g.hermite(0, t) - t.exp()).abs()).fold(0.0, f64::max)
        };
        let (e0, e1) = (max_err(&g), max_err(&fine));
        assert!(e0 < 5e-4 && (12.0..20.0).contains(&(e0 / e1)), "{e0} {e1}");
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        for n in [2usize, 3, 5, 8] {
            let h = 1.0 / n as f64;
            let s: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powi(3)).collect();
            assert_relative_eq!(integrate_samples(&s, h), 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn dependent_systems_require_matching_grid() {
        let spec = UtilitySpec::new(-1.0).unwrap();
        let fp = FactorParams { kappa: 0.0404, theta: 0.117, beta: 0.0, gamma: 0.04395, horizon: 10.0 };
        let value = ko_value_odes(&fp, spec, 100).unwrap();
        assert!(matches!(ko_correction_odes(&fp, spec, &value, 200), Err(Error::GridMismatch(_))));
        assert!(matches!(ko_moment_odes(&fp, spec, &value, 0.1, 50), Err(Error::GridMismatch(_))));
    }
}

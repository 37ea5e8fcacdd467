//! INI run configuration.
//!
//! ```ini
//! epsilons = -0.01, -0.05, -0.10
//!
//! [model]
//! variant = kim-omberg
//! kappa = 0.0404
//! theta = 0.117
//! gamma = 0.04395
//! lambda0 = 0.1
//! horizon = 10
//!
//! [utility]
//! p = -1
//!
//! [sim]
//! n_paths = 100000
//! dt = 0.005
//! seed = 1
//! strategy = base
//!
//! [ode]
//! n_steps = 10000
//!
//! [output]
//! format = table
//! ```
//!
//! Unknown sections and keys are rejected. Command-line flags override file
//! values through [`Overrides`].

use std::path::{Path, PathBuf};

use ini::Ini;
use mprexp_core::models::{BsModel, EaModel, KoModel, Model};
use mprexp_core::UtilitySpec;

use crate::error::{CliError, CliResult};
use crate::montecarlo::{SimConfig, DESK_DT, DESK_PATHS, FULL_DT, FULL_PATHS};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_ODE_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Table,
}

impl OutputFormat {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.trim() {
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(CliError::Config(format!("unknown output format `{other}` (csv | table)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Table => "table",
        }
    }
}

/// Primal strategy of the `simulate` command. `Corrected` uses the
/// perturbation size of each row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyChoice {
    Base,
    Corrected,
    Zero,
    Constant(f64),
}

impl StrategyChoice {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Corrected => "corrected",
            Self::Zero => "zero",
            Self::Constant(_) => "constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<Model>,
    pub p: f64,
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub strategy: StrategyChoice,
    pub ode_steps: usize,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            p: -1.0,
            epsilons: Vec::new(),
            n_paths: DESK_PATHS,
            dt: DESK_DT,
            seed: DEFAULT_SEED,
            strategy: StrategyChoice::Base,
            ode_steps: DEFAULT_ODE_STEPS,
            format: OutputFormat::Table,
            out: None,
        }
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub eps: Option<Vec<f64>>,
    pub full_scale: bool,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

const GENERAL_KEYS: &[&str] = &["epsilons"];
const UTILITY_KEYS: &[&str] = &["p"];
const SIM_KEYS: &[&str] = &["n_paths", "dt", "seed", "strategy", "constant"];
const ODE_KEYS: &[&str] = &["n_steps"];
const OUTPUT_KEYS: &[&str] = &["format", "path"];
const BS_KEYS: &[&str] = &["variant", "lambda", "lambda_prime", "horizon"];
const KO_KEYS: &[&str] = &["variant", "kappa", "theta", "gamma", "lambda0", "horizon"];
const EA_KEYS: &[&str] = &["variant", "kappa", "theta", "beta", "gamma", "f0", "horizon"];

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_f64(section: &str, key: &str, v: &str) -> CliResult<f64> {
    v.trim().parse::<f64>().map_err(|_| cfg_err(format!("[{section}] {key}: `{v}` is not a number")))
}

fn parse_int<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> CliResult<T> {
    v.trim().parse::<T>().map_err(|_| cfg_err(format!("[{section}] {key}: `{v}` is not a non-negative integer")))
}

/// Parses a comma-separated list of numbers.
pub fn parse_eps_list(s: &str) -> CliResult<Vec<f64>> {
    let list = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| cfg_err(format!("`{t}` is not a number"))))
        .collect::<CliResult<Vec<f64>>>()?;
    if list.iter().any(|e| !e.is_finite()) {
        return Err(cfg_err("perturbation sizes must be finite"));
    }
    Ok(list)
}

struct Section<'a> {
    name: &'a str,
    props: &'a ini::Properties,
}

impl<'a> Section<'a> {
    fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for (k, _) in self.props.iter() {
            if !allowed.contains(&k) {
                return Err(cfg_err(format!("unknown key `{k}` in [{}]", self.name)));
            }
            if self.props.get_all(k).count() > 1 {
                return Err(cfg_err(format!("duplicate key `{k}` in [{}]", self.name)));
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.get(key)
    }

    fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.raw(key).map(|v| parse_f64(self.name, key, v)).transpose()
    }

    fn req(&self, key: &str) -> CliResult<f64> {
        self.f64(key)?.ok_or_else(|| cfg_err(format!("[{}] requires `{key}`", self.name)))
    }
}

fn parse_model(sec: &Section<'_>) -> CliResult<Model> {
    let variant = sec.raw("variant").ok_or_else(|| cfg_err("[model] requires `variant`"))?.trim();
    let model = match variant {
        "black-scholes" => {
            sec.check_keys(BS_KEYS)?;
            BsModel::new(sec.req("lambda")?, sec.req("lambda_prime")?, sec.req("horizon")?).map(Model::BlackScholes)
        }
        "kim-omberg" => {
            sec.check_keys(KO_KEYS)?;
            KoModel::new(
                sec.req("kappa")?,
                sec.req("theta")?,
                sec.req("gamma")?,
                sec.req("lambda0")?,
                sec.req("horizon")?,
            )
            .map(Model::KimOmberg)
        }
        "extended-affine" => {
            sec.check_keys(EA_KEYS)?;
            EaModel::new(
                sec.req("kappa")?,
                sec.req("theta")?,
                sec.req("beta")?,
                sec.req("gamma")?,
                sec.req("f0")?,
                sec.req("horizon")?,
            )
            .map(Model::ExtendedAffine)
        }
        other => {
            return Err(cfg_err(format!(
                "unknown model variant `{other}` (black-scholes | kim-omberg | extended-affine)"
            )))
        }
    };
    model.map_err(|e| cfg_err(format!("[model] {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| cfg_err(format!("malformed config: {e}")))?;
        let mut cfg = Self::default();
        for name in ini.sections() {
            if ini.section_all(name).count() > 1 {
                return Err(cfg_err(format!("duplicate section [{}]", name.unwrap_or(""))));
            }
        }
        for (name, props) in ini.iter() {
            let sec = Section { name: name.unwrap_or("general"), props };
            match name {
                None => {
                    sec.check_keys(GENERAL_KEYS)?;
                    if let Some(v) = sec.raw("epsilons") {
                        cfg.epsilons = parse_eps_list(v)?;
                    }
                }
                Some("model") => cfg.model = Some(parse_model(&sec)?),
                Some("utility") => {
                    sec.check_keys(UTILITY_KEYS)?;
                    if let Some(p) = sec.f64("p")? {
                        cfg.p = p;
                    }
                }
                Some("sim") => {
                    sec.check_keys(SIM_KEYS)?;
                    if let Some(v) = sec.raw("n_paths") {
                        cfg.n_paths = parse_int("sim", "n_paths", v)?;
                    }
                    if let Some(dt) = sec.f64("dt")? {
                        cfg.dt = dt;
                    }
                    if let Some(v) = sec.raw("seed") {
                        cfg.seed = parse_int("sim", "seed", v)?;
                    }
                    let constant = sec.f64("constant")?;
                    cfg.strategy = match (sec.raw("strategy").map(str::trim), constant) {
                        (None | Some("base"), None) => StrategyChoice::Base,
                        (Some("corrected"), None) => StrategyChoice::Corrected,
                        (Some("zero"), None) => StrategyChoice::Zero,
                        (Some("constant"), Some(c)) => StrategyChoice::Constant(c),
                        (Some("constant"), None) => {
                            return Err(cfg_err("[sim] strategy = constant requires `constant`"))
                        }
                        (_, Some(_)) => return Err(cfg_err("[sim] `constant` is only valid with strategy = constant")),
                        (Some(other), None) => {
                            return Err(cfg_err(format!(
                                "unknown strategy `{other}` (base | corrected | zero | constant)"
                            )))
                        }
                    };
                }
                Some("ode") => {
                    sec.check_keys(ODE_KEYS)?;
                    if let Some(v) = sec.raw("n_steps") {
                        cfg.ode_steps = parse_int("ode", "n_steps", v)?;
                    }
                }
                Some("output") => {
                    sec.check_keys(OUTPUT_KEYS)?;
                    if let Some(v) = sec.raw("format") {
                        cfg.format = OutputFormat::parse(v)?;
                    }
                    cfg.out = sec.raw("path").map(|s| PathBuf::from(s.trim()));
                }
                Some(other) => return Err(cfg_err(format!("unknown section [{other}]"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        UtilitySpec::new(self.p).map_err(|e| cfg_err(format!("[utility] {e}")))?;
        if self.n_paths < 2 {
            return Err(cfg_err("[sim] n_paths must be at least 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(cfg_err("[sim] dt must be positive"));
        }
        if self.ode_steps < 2 {
            return Err(cfg_err("[ode] n_steps must be at least 2"));
        }
        if let Some(m) = &self.model {
            m.validate().map_err(|e| cfg_err(format!("[model] {e}")))?;
            self.sim_config().n_steps(m.horizon()).map_err(|e| cfg_err(format!("[sim] {e}")))?;
        }
        if let StrategyChoice::Constant(c) = self.strategy {
            if !c.is_finite() {
                return Err(cfg_err("[sim] constant must be finite"));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if o.full_scale {
            self.n_paths = FULL_PATHS;
            self.dt = FULL_DT;
        }
        if let Some(n) = o.paths {
            self.n_paths = n;
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = &o.eps {
            self.epsilons = e.clone();
        }
        if let Some(f) = o.format {
            self.format = f;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        self.validate()
    }

    pub fn utility(&self) -> UtilitySpec {
        UtilitySpec::new(self.p).expect("validated")
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { n_paths: self.n_paths, dt: self.dt, ..SimConfig::desk(self.seed) }
    }

    /// The effective configuration as INI text; parsing it gives back `self`.
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        if !self.epsilons.is_empty() {
            let list: Vec<String> = self.epsilons.iter().map(|e| e.to_string()).collect();
            ini.with_general_section().set("epsilons", list.join(", "));
        }
        if let Some(m) = &self.model {
            let mut s = ini.with_section(Some("model"));
            s.set("variant", m.name());
            match m {
                Model::BlackScholes(m) => {
                    s.set("lambda", m.lambda.to_string())
                        .set("lambda_prime", m.lambda_prime.to_string())
                        .set("horizon", m.horizon.to_string());
                }
                Model::KimOmberg(m) => {
                    s.set("kappa", m.kappa.to_string())
                        .set("theta", m.theta.to_string())
                        .set("gamma", m.gamma.to_string())
                        .set("lambda0", m.lambda0.to_string())
                        .set("horizon", m.horizon.to_string());
                }
                Model::ExtendedAffine(m) => {
                    s.set("kappa", m.kappa.to_string())
                        .set("theta", m.theta.to_string())
                        .set("beta", m.beta.to_string())
                        .set("gamma", m.gamma.to_string())
                        .set("f0", m.f0.to_string())
                        .set("horizon", m.horizon.to_string());
                }
            }
        }
        ini.with_section(Some("utility")).set("p", self.p.to_string());
        {
            let mut s = ini.with_section(Some("sim"));
            s.set("n_paths", self.n_paths.to_string())
                .set("dt", self.dt.to_string())
                .set("seed", self.seed.to_string())
                .set("strategy", self.strategy.name());
            if let StrategyChoice::Constant(c) = self.strategy {
                s.set("constant", c.to_string());
            }
        }
        ini.with_section(Some("ode")).set("n_steps", self.ode_steps.to_string());
        {
            let mut s = ini.with_section(Some("output"));
            s.set("format", self.format.as_str());
            if let Some(p) = &self.out {
                s.set("path", p.display().to_string());
            }
        }
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KO: &str = "epsilons = -0.01, -0.05\n\n[model]\nvariant = kim-omberg\nkappa = 0.0404\ntheta = 0.117\ngamma = 0.04395\nlambda0 = 0.1\nhorizon = 10\n\n[utility]\np = -1\n\n[sim]\nn_paths = 1000\ndt = 0.01\nseed = 7\nstrategy = corrected\n";

    #[test]
    fn parses_a_full_config() {
        let c = RunConfig::parse(KO).unwrap();
        assert_eq!(c.epsilons, vec![-0.01, -0.05]);
        assert_eq!((c.n_paths, c.dt, c.seed), (1000, 0.01, 7));
        assert_eq!(c.strategy, StrategyChoice::Corrected);
        assert!(matches!(c.model, Some(Model::KimOmberg(m)) if m.lambda0 == 0.1));
        assert_eq!(c.ode_steps, DEFAULT_ODE_STEPS);
    }

    #[test]
    fn round_trips_through_ini() {
        let mut c = RunConfig::parse(KO).unwrap();
        c.strategy = StrategyChoice::Constant(0.37);
        c.out = Some(PathBuf::from("out.csv"));
        c.format = OutputFormat::Csv;
        let again = RunConfig::parse(&c.to_ini_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        assert!(matches!(RunConfig::parse("[sim]\nn_path = 3\n"), Err(CliError::Config(_))));
        assert!(RunConfig::parse("[simulation]\nn_paths = 3\n").is_err());
        assert!(RunConfig::parse("eps = 0.1\n").is_err());
        assert!(RunConfig::parse("[model]\nvariant = kim-omberg\nbeta = 0.1\n").is_err());
        assert!(RunConfig::parse("[sim]\nseed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(RunConfig::parse("[utility]\np = 0.5\n").is_err());
        assert!(RunConfig::parse("[sim]\ndt = abc\n").is_err());
        assert!(RunConfig::parse("[sim]\nstrategy = constant\n").is_err());
        assert!(RunConfig::parse("[sim]\nstrategy = base\nconstant = 1\n").is_err());
        assert!(RunConfig::parse("[model]\nvariant = extended-affine\nkappa = 1\ntheta = 0.01\nbeta = 0.1\ngamma = 0.1\nf0 = 0.01\nhorizon = 1\n").is_err());
        assert!(RunConfig::parse("[model]\nvariant = kim-omberg\nkappa = 1\n").is_err());
        // dt must divide the horizon
        assert!(RunConfig::parse(
            "[model]\nvariant = black-scholes\nlambda = 0.1\nlambda_prime = 1\nhorizon = 1\n[sim]\ndt = 0.3\n"
        )
        .is_err());
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut c = RunConfig::parse(KO).unwrap();
        c.apply(&Overrides { full_scale: true, seed: Some(9), ..Default::default() }).unwrap();
        assert_eq!((c.n_paths, c.dt, c.seed), (FULL_PATHS, FULL_DT, 9));
        c.apply(&Overrides { paths: Some(10), eps: Some(vec![0.2]), ..Default::default() }).unwrap();
        assert_eq!((c.n_paths, c.epsilons.clone()), (10, vec![0.2]));
        assert!(c.apply(&Overrides { paths: Some(1), ..Default::default() }).is_err());
    }

    #[test]
    fn eps_lists() {
        assert_eq!(parse_eps_list(" -0.1, 0.05 ,0").unwrap(), vec![-0.1, 0.05, 0.0]);
        assert!(parse_eps_list("0.1, x").is_err());
        assert!(parse_eps_list("inf").is_err());
    }
}

//! Flat `key=value` run configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional; missing keys take the defaults below.
//!
//! | key | default |
//! |-----|---------|
//! | `grid.n` | 64 |
//! | `grid.length` | 100 |
//! | `model.rho_bar` | 1 |
//! | `model.k_bar` | 1 |
//! | `model.mu` | 1 |
//! | `model.mu_t` | 1 |
//! | `model.c1` | 1.44 |
//! | `model.c2` | 1.92 |
//! | `model.pressure_coefficient` | 1 |
//! | `model.pressure_exponent` | 1.4 |
//! | `run.dt` | 0.05 |
//! | `run.t_end` | 10 |
//! | `run.output_stride` | 10 |
//! | `run.snapshot_stride` | 0 |
//! | `run.cfl_safety` | 0.5 |
//! | `run.scheme` | `if-rk2` |
//! | `run.linear_only` | false |
//! | `run.growth_limit` | 10 |
//! | `run.delta_warning` | 0.05 |
//! | `init.recipe` | `gaussian-bump` |
//! | `init.amplitude` | 1 |
//! | `init.width` | 5 |
//! | `init.center` | `none` (box center) |
//! | `init.fields` | `all` |
//! | `init.decay_rate` | 3 |
//! | `init.envelope_width` | 4 |
//! | `init.delta` | 0.001 |
//! | `analysis.c1_weight` | 10 |
//! | `analysis.p` | 1 |
//! | `analysis.slack` | 0.1 |
//! | `analysis.linf_slack` | 0.15 |
//! | `analysis.window` | `auto` |
//! | `seed` | 0 |

use std::fmt::Write as _;
use std::str::FromStr;

use crate::analysis::ReportSettings;
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::init::{FieldMask, Recipe};
use crate::integrator::{RunConfig, Scheme};
use crate::model::{derive_constants, DerivedConstants, PressureLaw};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecipeKind {
    Zero,
    GaussianBump,
    RandomSmooth,
}

impl RecipeKind {
    fn name(self) -> &'static str {
        match self {
            RecipeKind::Zero => "zero",
            RecipeKind::GaussianBump => "gaussian-bump",
            RecipeKind::RandomSmooth => "random-smooth",
        }
    }
}

/// Initial-data settings as written in the file.
#[derive(Clone, Debug, PartialEq)]
pub struct InitConfig {
    pub recipe: RecipeKind,
    pub amplitude: f64,
    pub width: f64,
    pub center: Option<[f64; 3]>,
    pub fields: FieldMask,
    pub decay_rate: f64,
    pub envelope_width: f64,
    /// Cap on `||W0||_{H^3}`; `None` leaves the data unscaled.
    pub delta: Option<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            recipe: RecipeKind::GaussianBump,
            amplitude: 1.0,
            width: 5.0,
            center: None,
            fields: FieldMask::ALL,
            decay_rate: 3.0,
            envelope_width: 4.0,
            delta: Some(1e-3),
        }
    }
}

impl InitConfig {
    pub fn recipe(&self) -> Recipe {
        match self.recipe {
            RecipeKind::Zero => Recipe::Zero,
            RecipeKind::GaussianBump => Recipe::GaussianBump {
                amplitude: self.amplitude,
                width: self.width,
                center: self.center,
                fields: self.fields,
            },
            RecipeKind::RandomSmooth => Recipe::RandomSmooth {
                amplitude: self.amplitude,
                decay_rate: self.decay_rate,
                envelope_width: self.envelope_width,
                fields: self.fields,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub grid: Grid,
    pub run: RunConfig,
    pub init: InitConfig,
    pub report: ReportSettings,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            grid: Grid::new(64, 100.0).expect("default grid"),
            run: RunConfig::default(),
            init: InitConfig::default(),
            report: ReportSettings::default(),
            seed: 0,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "grid.n",
    "grid.length",
    "model.rho_bar",
    "model.k_bar",
    "model.mu",
    "model.mu_t",
    "model.c1",
    "model.c2",
    "model.pressure_coefficient",
    "model.pressure_exponent",
    "run.dt",
    "run.t_end",
    "run.output_stride",
    "run.snapshot_stride",
    "run.cfl_safety",
    "run.scheme",
    "run.linear_only",
    "run.growth_limit",
    "run.delta_warning",
    "init.recipe",
    "init.amplitude",
    "init.width",
    "init.center",
    "init.fields",
    "init.decay_rate",
    "init.envelope_width",
    "init.delta",
    "analysis.c1_weight",
    "analysis.p",
    "analysis.slack",
    "analysis.linf_slack",
    "analysis.window",
    "seed",
];

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("expected a {}, got `{value}`", std::any::type_name::<T>()))
}

fn positive(value: &str) -> std::result::Result<f64, String> {
    let x: f64 = num(value)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("must be positive and finite, got {value}"))
    }
}

fn non_negative(value: &str) -> std::result::Result<f64, String> {
    let x: f64 = num(value)?;
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("must be non-negative and finite, got {value}"))
    }
}

fn boolean(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

fn list<const K: usize>(value: &str) -> std::result::Result<[f64; K], String> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|s| num::<f64>(s.trim()))
        .collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| format!("expected {K} comma-separated numbers, got `{value}`"))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Config {
    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        let mut last_line = std::collections::HashMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                key: body.to_string(),
                line,
                message: "expected key=value".into(),
            })?;
            let key = key.trim();
            config.set_at(key, value.trim(), line)?;
            last_line.insert(key.to_string(), line);
        }
        config.check(|key| last_line.get(key).copied().unwrap_or(0))?;
        Ok(config)
    }

    /// Applies a `key=value` override after parsing. Errors report line 0.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| Error::Config {
            key: assignment.to_string(),
            line: 0,
            message: "override must have the form key=value".into(),
        })?;
        self.set_at(key.trim(), value.trim(), 0)?;
        self.check(|_| 0)
    }

    fn set_at(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        self.set(key, value).map_err(|message| Error::Config {
            key: key.to_string(),
            line,
            message,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        if key.starts_with("model.pressure_") {
            let (mut coefficient, mut exponent) = self.pressure()?;
            match key {
                "model.pressure_coefficient" => coefficient = num(value)?,
                "model.pressure_exponent" => exponent = num(value)?,
                _ => return Err("unknown key".into()),
            }
            self.run.params.pressure = PressureLaw::Polytropic {
                coefficient,
                exponent,
            };
            return Ok(());
        }
        let params = &mut self.run.params;
        match key {
            "grid.n" => {
                self.grid = Grid::new(num(value)?, self.grid.length()).map_err(|e| e.to_string())?;
            }
            "grid.length" => {
                self.grid = Grid::new(self.grid.n(), positive(value)?).map_err(|e| e.to_string())?;
            }
            "model.rho_bar" => params.rho_bar = positive(value)?,
            "model.k_bar" => params.k_bar = positive(value)?,
            "model.mu" => params.mu = positive(value)?,
            "model.mu_t" => params.mu_t = positive(value)?,
            "model.c1" => params.c1 = positive(value)?,
            "model.c2" => params.c2 = positive(value)?,
            "run.dt" => self.run.dt = positive(value)?,
            "run.t_end" => self.run.t_end = positive(value)?,
            "run.output_stride" => {
                self.run.output_stride = num(value)?;
                if self.run.output_stride == 0 {
                    return Err("must be at least 1".into());
                }
            }
            "run.snapshot_stride" => self.run.snapshot_stride = num(value)?,
            "run.cfl_safety" => {
                let x = positive(value)?;
                if x > 1.0 {
                    return Err(format!("must lie in (0, 1], got {value}"));
                }
                self.run.cfl_safety = x;
            }
            "run.scheme" => self.run.scheme = Scheme::parse(value).map_err(|e| e.to_string())?,
            "run.linear_only" => self.run.linear_only = boolean(value)?,
            "run.growth_limit" => {
                let x = positive(value)?;
                if x <= 1.0 {
                    return Err(format!("must exceed 1, got {value}"));
                }
                self.run.growth_limit = x;
            }
            "run.delta_warning" => self.run.delta_warning = positive(value)?,
            "init.recipe" => {
                self.init.recipe = match value {
                    "zero" => RecipeKind::Zero,
                    "gaussian-bump" => RecipeKind::GaussianBump,
                    "random-smooth" => RecipeKind::RandomSmooth,
                    _ => return Err(format!("unknown recipe `{value}`")),
                }
            }
            "init.amplitude" => self.init.amplitude = num(value)?,
            "init.width" => self.init.width = positive(value)?,
            "init.center" => {
                self.init.center = if value == "none" { None } else { Some(list::<3>(value)?) }
            }
            "init.fields" => self.init.fields = FieldMask::parse(value).map_err(|e| e.to_string())?,
            "init.decay_rate" => self.init.decay_rate = positive(value)?,
            "init.envelope_width" => self.init.envelope_width = positive(value)?,
            "init.delta" => {
                self.init.delta = if value == "none" { None } else { Some(positive(value)?) }
            }
            "analysis.c1_weight" => self.run.c1_weight = positive(value)?,
            "analysis.p" => {
                let p: f64 = num(value)?;
                if !(1.0..1.2).contains(&p) {
                    return Err(format!("must lie in [1, 6/5), got {value}"));
                }
                self.report.p = p;
            }
            "analysis.slack" => self.report.slack = non_negative(value)?,
            "analysis.linf_slack" => self.report.linf_slack = non_negative(value)?,
            "analysis.window" => {
                self.report.window = if value == "auto" {
                    None
                } else {
                    let [t0, t1] = list::<2>(value)?;
                    if !(t0 >= 0.0 && t1 > t0) {
                        return Err(format!("need 0 <= t0 < t1, got `{value}`"));
                    }
                    Some([t0, t1])
                }
            }
            "seed" => self.seed = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn pressure(&self) -> std::result::Result<(f64, f64), String> {
        match self.run.params.pressure {
            PressureLaw::Polytropic {
                coefficient,
                exponent,
            } => Ok((coefficient, exponent)),
            PressureLaw::Custom { .. } => Err("custom pressure laws cannot be configured".into()),
        }
    }

    fn get(&self, key: &str) -> String {
        let p = &self.run.params;
        let (coefficient, exponent) = self.pressure().unwrap_or((f64::NAN, f64::NAN));
        match key {
            "grid.n" => self.grid.n().to_string(),
            "grid.length" => self.grid.length().to_string(),
            "model.rho_bar" => p.rho_bar.to_string(),
            "model.k_bar" => p.k_bar.to_string(),
            "model.mu" => p.mu.to_string(),
            "model.mu_t" => p.mu_t.to_string(),
            "model.c1" => p.c1.to_string(),
            "model.c2" => p.c2.to_string(),
            "model.pressure_coefficient" => coefficient.to_string(),
            "model.pressure_exponent" => exponent.to_string(),
            "run.dt" => self.run.dt.to_string(),
            "run.t_end" => self.run.t_end.to_string(),
            "run.output_stride" => self.run.output_stride.to_string(),
            "run.snapshot_stride" => self.run.snapshot_stride.to_string(),
            "run.cfl_safety" => self.run.cfl_safety.to_string(),
            "run.scheme" => self.run.scheme.name().to_string(),
            "run.linear_only" => self.run.linear_only.to_string(),
            "run.growth_limit" => self.run.growth_limit.to_string(),
            "run.delta_warning" => self.run.delta_warning.to_string(),
            "init.recipe" => self.init.recipe.name().to_string(),
            "init.amplitude" => self.init.amplitude.to_string(),
            "init.width" => self.init.width.to_string(),
            "init.center" => self.init.center.map_or("none".into(), |c| join(&c)),
            "init.fields" => self.init.fields.render(),
            "init.decay_rate" => self.init.decay_rate.to_string(),
            "init.envelope_width" => self.init.envelope_width.to_string(),
            "init.delta" => self.init.delta.map_or("none".into(), |d| d.to_string()),
            "analysis.c1_weight" => self.run.c1_weight.to_string(),
            "analysis.p" => self.report.p.to_string(),
            "analysis.slack" => self.report.slack.to_string(),
            "analysis.linf_slack" => self.report.linf_slack.to_string(),
            "analysis.window" => self.report.window.map_or("auto".into(), |w| join(&w)),
            "seed" => self.seed.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    fn check(&self, line_of: impl Fn(&str) -> usize) -> Result<()> {
        let key = "model.k_bar";
        derive_constants(&self.run.params).map_err(|e| Error::Config {
            key: key.into(),
            line: line_of(key),
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn constants(&self) -> DerivedConstants {
        derive_constants(&self.run.params).expect("validated at parse time")
    }

    /// Effective configuration as parseable text, with the derived
    /// constants as comments.
    pub fn echo(&self) -> String {
        let c = self.constants();
        let mut out = String::new();
        writeln!(out, "# effective configuration").unwrap();
        writeln!(out, "# derived: gamma = {}", c.gamma).unwrap();
        writeln!(out, "# derived: lambda = {}", c.lambda).unwrap();
        for key in KEYS {
            writeln!(out, "{key}={}", self.get(key)).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
        assert_eq!(Config::parse("# nothing\n\n   \n").unwrap(), Config::default());
    }

    #[test]
    fn echo_shows_derived_lambda() {
        let c = Config::parse("model.rho_bar=2").unwrap();
        assert!(c.echo().contains("# derived: lambda = 0.5\n"));
    }

    #[test]
    fn odd_or_tiny_grid_is_rejected_with_line() {
        let err = Config::parse("# header\ngrid.n=3\n").unwrap_err();
        match err {
            Error::Config { key, line, .. } => {
                assert_eq!(key, "grid.n");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        for text in ["grid.m=4", "run.dt=fast", "run.linear_only=yes", "seed=-1", "oops"] {
            assert!(matches!(Config::parse(text), Err(Error::Config { .. })), "{text}");
        }
    }

    #[test]
    fn invalid_constants_are_rejected() {
        let err = Config::parse("model.pressure_coefficient=-10\nmodel.k_bar=1").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn echo_round_trips() {
        let text = "grid.n=32\nmodel.rho_bar=0.3\nmodel.k_bar=0.123456789012345\nrun.scheme=etd-rk2\n\
                    init.center=1,2.5,3\ninit.fields=a,eps\ninit.delta=none\nanalysis.window=1.5,30\nseed=99";
        let c = Config::parse(text).unwrap();
        let back = Config::parse(&c.echo()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.echo(), c.echo());
    }

    #[test]
    fn overrides_apply_after_parse() {
        let mut c = Config::parse("run.dt=0.1").unwrap();
        c.apply_override("run.dt=0.02").unwrap();
        assert_eq!(c.run.dt, 0.02);
        assert!(c.apply_override("nope=1").is_err());
        assert!(c.apply_override("run.dt").is_err());
    }
}

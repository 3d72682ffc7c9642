//! The run configuration format: TOML with a fixed set of sections.
//!
//! ```toml
//! [run]
//! mode = "sweep"
//!
//! [grid]
//! n = 24
//! length = 1.0
//!
//! [boundary]
//! scenario = "hedgehog"
//! ```
//!
//! Every key has a default except `[grid] n` (or `nx`, `ny`, `nz`) and
//! `[boundary] scenario`. Unknown sections and keys are rejected.

use std::path::PathBuf;

use ldg_core::asymptotics::{geometric_l, SweepConfig};
use ldg_core::field::{Grid3, Scenario};
use ldg_core::linalg::Vec3;
use ldg_core::solve::{SolverOptions, StepRule};
use ldg_core::MaterialParams;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    Sweep,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Vtk,
}

impl Format {
    pub fn name(&self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Vtk => "vtk",
        }
    }

    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            "vtk" => Some(Format::Vtk),
            _ => None,
        }
    }

    /// Parses a comma-separated list into a sorted, deduplicated set.
    pub fn parse_list(s: &str) -> Option<Vec<Format>> {
        let mut out = s
            .split(',')
            .map(|t| Format::parse(t.trim()))
            .collect::<Option<Vec<_>>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            None
        } else {
            Some(out)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Extent along x; the spacing is `length / (nx − 1)` on every axis.
    pub length: f64,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid3> {
        let h = self.length / (self.nx - 1) as f64;
        Ok(Grid3::new(self.nx, self.ny, self.nz, Vec3::zeros(), h)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Material {
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    /// Elastic constant of a single solve.
    pub l: f64,
}

impl Material {
    pub fn params(&self) -> Result<MaterialParams> {
        Ok(MaterialParams::new(self.a2, self.b2, self.c2, self.l)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub l_values: Vec<f64>,
    pub margin: f64,
    pub lambda: f64,
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    pub verbosity: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: GridSpec,
    pub scenario: Scenario,
    pub material: Material,
    pub sweep: SweepSpec,
    pub solver: SolverOptions,
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let cfg = SweepConfig {
            grid: self.grid.grid()?,
            scenario: self.scenario,
            a2: self.material.a2,
            b2: self.material.b2,
            c2: self.material.c2,
            l_values: self.sweep.l_values.clone(),
            margin: self.sweep.margin,
            lambda: self.sweep.lambda,
            warm_start: self.sweep.warm_start,
            solver: self.solver,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

mod raw {
    use serde::Deserialize;
    use toml::Spanned;

    pub type Field<T> = Option<Spanned<T>>;

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Config {
        #[serde(default)]
        pub run: Run,
        #[serde(default)]
        pub grid: Grid,
        #[serde(default)]
        pub material: Material,
        #[serde(default)]
        pub boundary: Boundary,
        #[serde(default)]
        pub sweep: Sweep,
        #[serde(default)]
        pub solver: Solver,
        #[serde(default)]
        pub output: Output,
    }

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Run {
        pub mode: Field<String>,
    }

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Grid {
        pub n: Field<usize>,
        pub nx: Field<usize>,
        pub ny: Field<usize>,
        pub nz: Field<usize>,
        pub length: Field<f64>,
    }

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Material {
        pub a2: Field<f64>,
        pub b2: Field<f64>,
        pub c2: Field<f64>,
        #[serde(rename = "L")]
        pub l: Field<f64>,
    }

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Boundary {
        pub scenario: Field<String>,
    }

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Sweep {
        pub l_values: Field<Vec<f64>>,
        pub l_max: Field<f64>,
        pub l_ratio: Field<f64>,
        pub l_count: Field<usize>,
        pub margin: Field<f64>,
        pub lambda: Field<f64>,
        pub warm_start: Field<bool>,
    }

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Solver {
        pub max_iters: Field<usize>,
        pub tol_residual: Field<f64>,
        pub step_rule: Field<String>,
        pub initial_step: Field<f64>,
        pub seed: Field<u64>,
        pub log_every: Field<usize>,
    }

    #[derive(Debug, Default, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Output {
        pub dir: Field<String>,
        pub formats: Field<Vec<String>>,
        pub verbosity: Field<u8>,
    }
}

/// Maps byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, offset: usize) -> usize {
        self.0[..offset.min(self.0.len())].matches('\n').count() + 1
    }

    fn at<T>(&self, v: &toml::Spanned<T>) -> usize {
        self.of(v.span().start)
    }

    fn error<T>(&self, v: &toml::Spanned<T>, message: impl Into<String>) -> CliError {
        CliError::config(self.at(v), message)
    }

    /// Value or default, checked against `ok`.
    fn value<T: Copy + std::fmt::Display>(
        &self,
        field: &raw::Field<T>,
        key: &str,
        default: T,
        ok: impl Fn(T) -> bool,
        rule: &str,
    ) -> Result<T> {
        match field {
            None if ok(default) => Ok(default),
            None => Err(CliError::Config {
                line: None,
                message: format!("`{key}` must be {rule}, got default {default}"),
            }),
            Some(v) if ok(*v.get_ref()) => Ok(*v.get_ref()),
            Some(v) => Err(self.error(v, format!("`{key}` must be {rule}, got {}", v.get_ref()))),
        }
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn unit_open(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let lines = Lines(text);
    let raw: raw::Config = toml::from_str(text).map_err(|e| CliError::Config {
        line: e.span().map(|s| lines.of(s.start)),
        message: e.message().trim_end().to_string(),
    })?;

    let mode = match &raw.run.mode {
        None => Mode::Sweep,
        Some(v) => match v.get_ref().as_str() {
            "solve" => Mode::Solve,
            "sweep" => Mode::Sweep,
            other => return Err(lines.error(v, format!("unknown mode `{other}`"))),
        },
    };

    let g = &raw.grid;
    let axis = |key: &str, field: &raw::Field<usize>| -> Result<usize> {
        let v = field.as_ref().or(g.n.as_ref()).ok_or_else(|| CliError::Config {
            line: None,
            message: format!("[grid] needs `n` or `{key}`"),
        })?;
        if *v.get_ref() < 3 {
            return Err(lines.error(v, format!("`{key}` must be at least 3, got {}", v.get_ref())));
        }
        Ok(*v.get_ref())
    };
    let grid = GridSpec {
        nx: axis("nx", &g.nx)?,
        ny: axis("ny", &g.ny)?,
        nz: axis("nz", &g.nz)?,
        length: lines.value(&g.length, "length", 1.0, positive, "positive")?,
    };

    let m = &raw.material;
    let material = Material {
        a2: lines.value(&m.a2, "a2", 1.0, positive, "positive")?,
        b2: lines.value(&m.b2, "b2", 1.0, positive, "positive")?,
        c2: lines.value(&m.c2, "c2", 1.0, positive, "positive")?,
        l: lines.value(&m.l, "L", 0.01, positive, "positive")?,
    };

    let scenario = match &raw.boundary.scenario {
        None => {
            return Err(CliError::Config {
                line: None,
                message: "[boundary] needs `scenario`".into(),
            })
        }
        Some(v) => Scenario::parse(v.get_ref()).map_err(|e| lines.error(v, e.to_string()))?,
    };

    let s = &raw.sweep;
    let l_values = match &s.l_values {
        Some(v) => {
            for (key, other) in [
                ("l_max", s.l_max.as_ref().map(|x| x.span())),
                ("l_ratio", s.l_ratio.as_ref().map(|x| x.span())),
                ("l_count", s.l_count.as_ref().map(|x| x.span())),
            ] {
                if let Some(span) = other {
                    return Err(CliError::config(
                        lines.of(span.start),
                        format!("`{key}` conflicts with `l_values`"),
                    ));
                }
            }
            let values = v.get_ref();
            if values.is_empty() || values.iter().any(|l| !positive(*l)) {
                return Err(lines.error(v, "`l_values` must be a nonempty list of positive numbers"));
            }
            if values.windows(2).any(|w| w[1] >= w[0]) {
                return Err(lines.error(v, "`l_values` must be strictly decreasing"));
            }
            values.clone()
        }
        None => geometric_l(
            lines.value(&s.l_max, "l_max", 0.1, positive, "positive")?,
            lines.value(&s.l_ratio, "l_ratio", 0.5, unit_open, "in (0, 1)")?,
            lines.value(&s.l_count, "l_count", 8, |c| c >= 1, "at least 1")?,
        ),
    };
    let sweep = SweepSpec {
        l_values,
        margin: lines.value(&s.margin, "margin", 0.25, positive, "positive")?,
        lambda: lines.value(&s.lambda, "lambda", 0.5, unit_open, "in (0, 1)")?,
        warm_start: s.warm_start.as_ref().map_or(true, |v| *v.get_ref()),
    };

    let o = &raw.solver;
    let defaults = SolverOptions::for_params(&material.params()?);
    let step_rule = match &o.step_rule {
        None => defaults.step_rule,
        Some(v) => StepRule::parse(v.get_ref()).map_err(|e| lines.error(v, e.to_string()))?,
    };
    let solver = SolverOptions {
        max_iters: lines.value(&o.max_iters, "max_iters", defaults.max_iters, |v| v >= 1, "at least 1")?,
        tol_residual: lines.value(
            &o.tol_residual,
            "tol_residual",
            defaults.tol_residual,
            positive,
            "positive",
        )?,
        step_rule,
        initial_step: lines.value(
            &o.initial_step,
            "initial_step",
            defaults.initial_step,
            positive,
            "positive",
        )?,
        seed: o.seed.as_ref().map_or(defaults.seed, |v| *v.get_ref()),
        log_every: lines.value(&o.log_every, "log_every", defaults.log_every, |v| v >= 1, "at least 1")?,
    };

    let out = &raw.output;
    let formats = match &out.formats {
        None => vec![Format::Json, Format::Vtk],
        Some(v) => Format::parse_list(&v.get_ref().join(","))
            .ok_or_else(|| lines.error(v, format!("invalid format list {:?}", v.get_ref())))?,
    };
    let output = OutputSpec {
        dir: out
            .dir
            .as_ref()
            .map_or_else(|| PathBuf::from("results"), |v| PathBuf::from(v.get_ref())),
        formats,
        verbosity: lines.value(&out.verbosity, "verbosity", 1, |v| v <= 3, "at most 3")?,
    };

    let cfg = RunConfig {
        mode,
        grid,
        scenario,
        material,
        sweep,
        solver,
        output,
    };
    if cfg.mode == Mode::Sweep {
        cfg.sweep_config().map_err(|e| match e {
            CliError::Core(inner) => CliError::Config {
                line: s.margin.as_ref().map(|v| lines.at(v)),
                message: inner.to_string(),
            },
            other => other,
        })?;
    }
    Ok(cfg)
}

/// Canonical text form with every key explicit; `parse_config` of the result
/// reproduces `cfg`.
pub fn serialize_config(cfg: &RunConfig) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        run: Run,
        grid: &'a GridSpec,
        material: Mat,
        boundary: Boundary,
        sweep: &'a SweepSpec,
        solver: Solver,
        output: Output<'a>,
    }
    #[derive(Serialize)]
    struct Run {
        mode: &'static str,
    }
    #[derive(Serialize)]
    struct Mat {
        a2: f64,
        b2: f64,
        c2: f64,
        #[serde(rename = "L")]
        l: f64,
    }
    #[derive(Serialize)]
    struct Boundary {
        scenario: &'static str,
    }
    #[derive(Serialize)]
    struct Solver {
        max_iters: usize,
        tol_residual: f64,
        step_rule: &'static str,
        initial_step: f64,
        seed: u64,
        log_every: usize,
    }
    #[derive(Serialize)]
    struct Output<'a> {
        dir: String,
        formats: Vec<&'a str>,
        verbosity: u8,
    }
    let doc = Doc {
        run: Run { mode: cfg.mode.name() },
        grid: &cfg.grid,
        material: Mat {
            a2: cfg.material.a2,
            b2: cfg.material.b2,
            c2: cfg.material.c2,
            l: cfg.material.l,
        },
        boundary: Boundary {
            scenario: cfg.scenario.name(),
        },
        sweep: &cfg.sweep,
        solver: Solver {
            max_iters: cfg.solver.max_iters,
            tol_residual: cfg.solver.tol_residual,
            step_rule: cfg.solver.step_rule.name(),
            initial_step: cfg.solver.initial_step,
            seed: cfg.solver.seed,
            log_every: cfg.solver.log_every,
        },
        output: Output {
            dir: cfg.output.dir.to_string_lossy().into_owned(),
            formats: cfg.output.formats.iter().map(Format::name).collect(),
            verbosity: cfg.output.verbosity,
        },
    };
    // Plain structs of numbers and strings always serialize.
    toml::to_string(&doc).expect("config serializes")
}

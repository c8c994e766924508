//! Line-oriented experiment configuration: `[section]` headers over
//! `key = value` pairs, with every parse or validation error carrying the
//! offending line number.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::profile::PhiProfile;
use crate::sweep::ParamCell;
use crate::Kernel;

/// Which experiment a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Command {
    CheckAssumptions,
    Iterate,
    Density,
    Simulate,
    VerifyBounds,
    SweepS3,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::CheckAssumptions,
        Command::Iterate,
        Command::Density,
        Command::Simulate,
        Command::VerifyBounds,
        Command::SweepS3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckAssumptions => "check-assumptions",
            Command::Iterate => "iterate",
            Command::Density => "density",
            Command::Simulate => "simulate",
            Command::VerifyBounds => "verify-bounds",
            Command::SweepS3 => "sweep-s3",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                Error::InvalidParam(format!(
                    "unknown command `{s}`; expected one of {}",
                    Command::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

/// Tempering profile choice plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileConfig {
    ConstantOne,
    ExpPower { m: f64, beta: f64, gamma: f64 },
    PolyDecay { gamma: f64 },
}

impl ProfileConfig {
    pub fn build(&self) -> Result<PhiProfile<f64>> {
        match *self {
            ProfileConfig::ConstantOne => Ok(PhiProfile::ConstantOne),
            ProfileConfig::ExpPower { m, beta, gamma } => PhiProfile::exp_power(m, beta, gamma),
            ProfileConfig::PolyDecay { gamma } => PhiProfile::poly_decay(gamma),
        }
    }
}

/// Kernel model: profile, stability index, dimension, envelope constant,
/// truncation radius.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSection {
    pub profile: ProfileConfig,
    pub alpha: f64,
    pub dim: usize,
    pub m_upper: f64,
    pub eps: f64,
}

impl KernelSection {
    pub fn build(&self) -> Result<Kernel> {
        let params = ModelParams::new(self.alpha, self.dim, self.m_upper, self.eps)?;
        Kernel::saturated(params, self.profile.build()?)
    }
}

/// Symmetric lattice box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSection {
    pub half_width: f64,
    pub spacing: f64,
}

/// Run-level knobs shared by the experiment commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub t: f64,
    pub n_levels: usize,
    pub series_tol: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Separations for convolution-trend checks.
    pub lags: Vec<f64>,
    /// Ball-shrink factor for the small-ball comparison.
    pub kappa: f64,
    /// Histogram half-width for simulation runs.
    pub bin_half_width: f64,
    /// Histogram bin width for simulation runs.
    pub bin_width: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t: 0.5,
            n_levels: 8,
            series_tol: 1e-9,
            n_paths: 100_000,
            seed: 12345,
            lags: crate::sweep::default_lags(),
            kappa: 0.25,
            bin_half_width: 30.0,
            bin_width: 0.25,
        }
    }
}

/// Restriction of the sweep grid; absent lists fall back to the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSection {
    pub m: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub dim: Option<usize>,
}

impl SweepSection {
    /// Materializes the cell list: the default grid, or the cross product
    /// of the given restrictions.
    pub fn cells(&self) -> Result<Vec<ParamCell<f64>>> {
        if self.m.is_none()
            && self.betas.is_none()
            && self.gammas.is_none()
            && self.alpha.is_none()
            && self.dim.is_none()
        {
            return Ok(crate::sweep::default_cells());
        }
        let m = self.m.unwrap_or(1.0);
        let betas = self.betas.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
        let gammas = self.gammas.clone().unwrap_or_else(|| vec![0.0]);
        let alpha = self.alpha.unwrap_or(0.5);
        let dim = self.dim.unwrap_or(1);
        let mut cells = Vec::new();
        for &beta in &betas {
            for &gamma in &gammas {
                cells.push(ParamCell::new(m, beta, gamma, alpha, dim)?);
            }
        }
        Ok(cells)
    }
}

/// Fully parsed experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub kernel: KernelSection,
    pub grid: Option<GridSection>,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub out_dir: String,
}

struct RawValue {
    line: usize,
    text: String,
    consumed: std::cell::Cell<bool>,
}

struct Section {
    line: usize,
    entries: BTreeMap<String, RawValue>,
}

/// Parsed but untyped config: sections of key/value pairs with source
/// lines retained for diagnostics.
struct RawConfig {
    sections: BTreeMap<String, Section>,
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(Error::Config {
                line: line_no,
                msg: format!("unterminated section header `{line}`"),
            })?;
            let name = name.trim().to_string();
            if name.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    msg: "empty section name".into(),
                });
            }
            if sections.contains_key(&name) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("duplicate section `[{name}]`"),
                });
            }
            sections.insert(
                name.clone(),
                Section {
                    line: line_no,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::Config {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        let section_name = current.clone().ok_or(Error::Config {
            line: line_no,
            msg: format!("key `{key}` appears before any [section] header"),
        })?;
        let section = sections.get_mut(&section_name).expect("section exists");
        if section.entries.contains_key(&key) {
            return Err(Error::Config {
                line: line_no,
                msg: format!("duplicate key `{key}` in section `[{section_name}]`"),
            });
        }
        section.entries.insert(
            key,
            RawValue {
                line: line_no,
                text: value,
                consumed: std::cell::Cell::new(false),
            },
        );
    }
    Ok(RawConfig { sections })
}

impl RawConfig {
    fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    fn require_section(&self, name: &str) -> Result<&Section> {
        self.section(name).ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("missing required section `[{name}]`"),
        })
    }

    /// Every key must have been consumed by a typed getter; leftovers are
    /// assumed to be typos.
    fn ensure_exhausted(&self, known_sections: &[&str]) -> Result<()> {
        for (name, section) in &self.sections {
            if !known_sections.contains(&name.as_str()) {
                return Err(Error::Config {
                    line: section.line,
                    msg: format!("unknown section `[{name}]`"),
                });
            }
            for (key, value) in &section.entries {
                if !value.consumed.get() {
                    return Err(Error::Config {
                        line: value.line,
                        msg: format!("unknown key `{key}` in section `[{name}]`"),
                    });
                }
            }
        }
        Ok(())
    }
}

impl Section {
    fn get(&self, key: &str) -> Option<&RawValue> {
        let v = self.entries.get(key)?;
        v.consumed.set(true);
        Some(v)
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.text.parse::<T>().map(Some).map_err(|_| Error::Config {
                line: v.line,
                msg: format!("`{key}` must be {what}, got `{}`", v.text),
            }),
        }
    }

    fn require<T: FromStr>(&self, key: &str, what: &str) -> Result<T> {
        self.parse(key, what)?.ok_or_else(|| Error::Config {
            line: self.line,
            msg: format!("missing required key `{key}`"),
        })
    }

    fn parse_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for item in v.text.split(',') {
                    let item = item.trim();
                    out.push(item.parse::<f64>().map_err(|_| Error::Config {
                        line: v.line,
                        msg: format!("`{key}` must be a comma-separated list of numbers, got `{item}`"),
                    })?);
                }
                if out.is_empty() {
                    return Err(Error::Config {
                        line: v.line,
                        msg: format!("`{key}` list is empty"),
                    });
                }
                Ok(Some(out))
            }
        }
    }
}

fn positive(section: &Section, key: &str, value: f64) -> Result<f64> {
    if !(value > 0.0) || !value.is_finite() {
        let line = section.entries.get(key).map(|v| v.line).unwrap_or(section.line);
        return Err(Error::Config {
            line,
            msg: format!("`{key}` must be positive and finite, got {value}"),
        });
    }
    Ok(value)
}

/// Parses a config file body for the given command.
pub fn parse(command: Command, text: &str) -> Result<ExperimentConfig> {
    let raw = parse_raw(text)?;

    let ks = raw.require_section("kernel")?;
    let profile_name: String = ks.require("profile", "a profile name")?;
    let profile = match profile_name.as_str() {
        "constant-one" => ProfileConfig::ConstantOne,
        "exp-power" => ProfileConfig::ExpPower {
            m: ks.parse("m", "a number")?.unwrap_or(1.0),
            beta: ks.parse("beta", "a number")?.unwrap_or(1.0),
            gamma: ks.parse("gamma", "a number")?.unwrap_or(0.0),
        },
        "poly-decay" => ProfileConfig::PolyDecay {
            gamma: ks.require("gamma", "a number")?,
        },
        other => {
            let line = ks.entries.get("profile").map(|v| v.line).unwrap_or(ks.line);
            return Err(Error::Config {
                line,
                msg: format!(
                    "unknown profile `{other}`; expected constant-one, exp-power, or poly-decay"
                ),
            });
        }
    };
    let kernel = KernelSection {
        profile,
        alpha: positive(ks, "alpha", ks.require("alpha", "a number")?)?,
        dim: ks.parse("dim", "an integer")?.unwrap_or(1),
        m_upper: positive(ks, "m_upper", ks.parse("m_upper", "a number")?.unwrap_or(1.0))?,
        eps: positive(ks, "eps", ks.require("eps", "a number")?)?,
    };

    let grid = match raw.section("grid") {
        None => None,
        Some(gs) => Some(GridSection {
            half_width: positive(gs, "half_width", gs.require("half_width", "a number")?)?,
            spacing: positive(gs, "spacing", gs.require("spacing", "a number")?)?,
        }),
    };

    let mut run = RunSection::default();
    if let Some(rs) = raw.section("run") {
        if let Some(t) = rs.parse("t", "a number")? {
            run.t = positive(rs, "t", t)?;
        }
        if let Some(v) = rs.parse("n_levels", "an integer")? {
            run.n_levels = v;
        }
        if let Some(v) = rs.parse("series_tol", "a number")? {
            run.series_tol = positive(rs, "series_tol", v)?;
        }
        if let Some(v) = rs.parse("n_paths", "an integer")? {
            run.n_paths = v;
        }
        if let Some(v) = rs.parse("seed", "an unsigned integer")? {
            run.seed = v;
        }
        if let Some(v) = rs.parse_list("lags")? {
            run.lags = v;
        }
        if let Some(v) = rs.parse("kappa", "a number")? {
            run.kappa = v;
        }
        if let Some(v) = rs.parse("bin_half_width", "a number")? {
            run.bin_half_width = positive(rs, "bin_half_width", v)?;
        }
        if let Some(v) = rs.parse("bin_width", "a number")? {
            run.bin_width = positive(rs, "bin_width", v)?;
        }
    }

    let mut sweep = SweepSection::default();
    if let Some(ss) = raw.section("sweep") {
        sweep.m = ss.parse("m", "a number")?;
        sweep.betas = ss.parse_list("betas")?;
        sweep.gammas = ss.parse_list("gammas")?;
        sweep.alpha = ss.parse("alpha", "a number")?;
        sweep.dim = ss.parse("dim", "an integer")?;
    }

    let out_dir = match raw.section("output") {
        None => "out".to_string(),
        Some(os) => os
            .parse::<String>("dir", "a path")?
            .unwrap_or_else(|| "out".to_string()),
    };

    raw.ensure_exhausted(&["kernel", "grid", "run", "sweep", "output"])?;

    let cfg = ExperimentConfig {
        command,
        kernel,
        grid,
        run,
        sweep,
        out_dir,
    };
    validate(&cfg, &raw)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig, raw: &RawConfig) -> Result<()> {
    let kernel_line = raw.section("kernel").map(|s| s.line).unwrap_or(0);
    if !(1..=3).contains(&cfg.kernel.dim) {
        return Err(Error::Config {
            line: raw
                .section("kernel")
                .and_then(|s| s.entries.get("dim"))
                .map(|v| v.line)
                .unwrap_or(kernel_line),
            msg: format!("`dim` must be 1, 2, or 3, got {}", cfg.kernel.dim),
        });
    }
    let needs_grid = matches!(
        cfg.command,
        Command::Iterate | Command::Density | Command::VerifyBounds
    );
    if needs_grid && cfg.grid.is_none() {
        return Err(Error::Config {
            line: 0,
            msg: format!("command `{}` needs a [grid] section", cfg.command),
        });
    }
    if cfg.command == Command::Simulate && cfg.run.n_paths == 0 {
        return Err(Error::Config {
            line: raw
                .section("run")
                .and_then(|s| s.entries.get("n_paths"))
                .map(|v| v.line)
                .unwrap_or(0),
            msg: "`n_paths` must be at least 1".into(),
        });
    }
    // Kernel constructibility surfaces parameter conflicts (alpha range,
    // eps range, profile admissibility) before any compute starts.
    cfg.kernel.build().map_err(|e| Error::Config {
        line: kernel_line,
        msg: e.to_string(),
    })?;
    Ok(())
}

//! Run configuration: a flat `key = value` text file.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Every key is optional and unknown or repeated keys are errors. Values
//! given in the environment as `FBI_<KEY>` (upper case, dots replaced by
//! underscores) override the file, and command-line flags override both.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `convention` | `standard` | lattice convention id |
//! | `grid` | `4x4` | momentum grid `NXxNY` |
//! | `shells` | `6` | plane-wave disk radius in units of `|g1|` |
//! | `alpha` | `auto` | coupling, or `auto` for the magic value |
//! | `flavor` | `spinless` | `spinless`, `valley` or `valley-spin` |
//! | `interaction` | `yukawa` | `yukawa` or `gaussian` |
//! | `interaction.param` | `1` | screening `kappa` or width `sigma` |
//! | `state` | `fm:0` | `fm:<generator>` or `random` |
//! | `samples` | `20` | orbit samples per generator |
//! | `bands.count` | `6` | singular values of `D_k` per momentum |
//! | `oracle.grid` | `2x1` | grid for the Fock-space oracle |
//! | `export.table` | `false` | write every form factor to JSON |
//! | `tol.magic` | `1e-7` | accepted flat-band residual of the search |
//! | `tol.flat` | `1e-6` | accepted flat-band residual per momentum |
//! | `tol.identity` | `1e-10` | form-factor identity residuals |
//! | `tol.sum_rule` | `1e-8` | sum-rule residual per grid point |
//! | `tol.energy` | `1e-10` | relative agreement of the energy forms |
//! | `tol.gs` | `1e-8` | ground-state condition residuals |
//! | `tol.oracle` | `1e-8` | zero-energy cut of the oracle |
//! | `seed` | `0` | seed for every random draw |
//! | `out` | `out` | report directory |
//! | `cache` | `.fbi-cache` | cache directory |

use fbi::form_factors::Flavor;
use fbi::hf::Interaction;
use fbi::Convention;
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::PathBuf;

pub const ENV_PREFIX: &str = "FBI_";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateChoice {
    Ferro(usize),
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionKind {
    Yukawa,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub magic: f64,
    pub flat: f64,
    pub identity: f64,
    pub sum_rule: f64,
    pub energy: f64,
    pub gs: f64,
    pub oracle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub convention: Convention,
    pub grid: (usize, usize),
    pub shells: usize,
    pub alpha: Alpha,
    pub flavor: Flavor,
    pub interaction: InteractionKind,
    pub interaction_param: f64,
    pub state: StateChoice,
    pub samples: usize,
    pub bands_count: usize,
    pub oracle_grid: (usize, usize),
    pub export_table: bool,
    pub tol: Tolerances,
    pub seed: u64,
    pub out: PathBuf,
    pub cache: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            convention: Convention::Standard,
            grid: (4, 4),
            shells: fbi::DEFAULT_SHELLS,
            alpha: Alpha::Auto,
            flavor: Flavor::Spinless,
            interaction: InteractionKind::Yukawa,
            interaction_param: 1.0,
            state: StateChoice::Ferro(0),
            samples: 20,
            bands_count: 6,
            oracle_grid: (2, 1),
            export_table: false,
            tol: Tolerances {
                magic: 1e-7,
                flat: 1e-6,
                identity: 1e-10,
                sum_rule: 1e-8,
                energy: 1e-10,
                gs: 1e-8,
                oracle: 1e-8,
            },
            seed: 0,
            out: PathBuf::from("out"),
            cache: PathBuf::from(".fbi-cache"),
        }
    }
}

/// Where a value came from, for diagnostics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Env(String),
    Flag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Option<Origin>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Some(Origin::Line(n)) => write!(f, "line {n}: ")?,
            Some(Origin::Env(name)) => write!(f, "environment {name}: ")?,
            Some(Origin::Flag) => write!(f, "flag: ")?,
            None => {}
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Keys in canonical order.
pub const KEYS: &[&str] = &[
    "convention",
    "grid",
    "shells",
    "alpha",
    "flavor",
    "interaction",
    "interaction.param",
    "state",
    "samples",
    "bands.count",
    "oracle.grid",
    "export.table",
    "tol.magic",
    "tol.flat",
    "tol.identity",
    "tol.sum_rule",
    "tol.energy",
    "tol.gs",
    "tol.oracle",
    "seed",
    "out",
    "cache",
];

/// Keys that locate files rather than describe the computation.
pub const PATH_KEYS: &[&str] = &["out", "cache"];

fn parse_grid(v: &str) -> Result<(usize, usize), String> {
    let (a, b) = v.split_once(['x', 'X']).ok_or_else(|| format!("expected NXxNY, got `{v}`"))?;
    let nx: usize = a.trim().parse().map_err(|_| format!("bad grid size `{a}`"))?;
    let ny: usize = b.trim().parse().map_err(|_| format!("bad grid size `{b}`"))?;
    if nx == 0 || ny == 0 {
        return Err(format!("grid must be at least 1x1, got {nx}x{ny}"));
    }
    Ok((nx, ny))
}

fn parse_positive(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got `{v}`"))?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(format!("must be positive and finite, got {v}"));
    }
    Ok(x)
}

fn parse_count(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "convention" => {
                self.convention = Convention::parse(v).ok_or_else(|| format!("unknown convention `{v}`"))?
            }
            "grid" => self.grid = parse_grid(v)?,
            "shells" => {
                let s = parse_count(v)?;
                if s < 2 {
                    return Err(format!("need at least 2 shells, got {s}"));
                }
                self.shells = s;
            }
            "alpha" => {
                self.alpha = if v == "auto" {
                    Alpha::Auto
                } else {
                    let a: f64 = v.parse().map_err(|_| format!("expected `auto` or a number, got `{v}`"))?;
                    if !a.is_finite() || a < 0.0 {
                        return Err(format!("coupling must be finite and non-negative, got {v}"));
                    }
                    Alpha::Fixed(a)
                }
            }
            "flavor" => self.flavor = Flavor::parse(v).ok_or_else(|| format!("unknown flavor `{v}`"))?,
            "interaction" => {
                self.interaction = match v {
                    "yukawa" => InteractionKind::Yukawa,
                    "gaussian" => InteractionKind::Gaussian,
                    _ => return Err(format!("unknown interaction `{v}`")),
                }
            }
            "interaction.param" => self.interaction_param = parse_positive(v)?,
            "state" => {
                self.state = if v == "random" {
                    StateChoice::Random
                } else if let Some(i) = v.strip_prefix("fm:") {
                    StateChoice::Ferro(parse_count(i)?)
                } else {
                    return Err(format!("expected `fm:<index>` or `random`, got `{v}`"));
                }
            }
            "samples" => self.samples = parse_count(v)?,
            "bands.count" => {
                let n = parse_count(v)?;
                if n == 0 {
                    return Err("must be at least 1".into());
                }
                self.bands_count = n;
            }
            "oracle.grid" => self.oracle_grid = parse_grid(v)?,
            "export.table" => {
                self.export_table = v.parse().map_err(|_| format!("expected `true` or `false`, got `{v}`"))?
            }
            "tol.magic" => self.tol.magic = parse_positive(v)?,
            "tol.flat" => self.tol.flat = parse_positive(v)?,
            "tol.identity" => self.tol.identity = parse_positive(v)?,
            "tol.sum_rule" => self.tol.sum_rule = parse_positive(v)?,
            "tol.energy" => self.tol.energy = parse_positive(v)?,
            "tol.gs" => self.tol.gs = parse_positive(v)?,
            "tol.oracle" => self.tol.oracle = parse_positive(v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("expected an unsigned integer, got `{v}`"))?,
            "out" => self.out = non_empty_path(v)?,
            "cache" => self.cache = non_empty_path(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Text value of one key; `parse(&to_text())` reproduces `self`.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.tol;
        Some(match key {
            "convention" => self.convention.id().to_string(),
            "grid" => format!("{}x{}", self.grid.0, self.grid.1),
            "shells" => self.shells.to_string(),
            "alpha" => match self.alpha {
                Alpha::Auto => "auto".into(),
                Alpha::Fixed(a) => format!("{a:?}"),
            },
            "flavor" => self.flavor.id().to_string(),
            "interaction" => match self.interaction {
                InteractionKind::Yukawa => "yukawa".into(),
                InteractionKind::Gaussian => "gaussian".into(),
            },
            "interaction.param" => format!("{:?}", self.interaction_param),
            "state" => match self.state {
                StateChoice::Ferro(i) => format!("fm:{i}"),
                StateChoice::Random => "random".into(),
            },
            "samples" => self.samples.to_string(),
            "bands.count" => self.bands_count.to_string(),
            "oracle.grid" => format!("{}x{}", self.oracle_grid.0, self.oracle_grid.1),
            "export.table" => self.export_table.to_string(),
            "tol.magic" => format!("{:?}", t.magic),
            "tol.flat" => format!("{:?}", t.flat),
            "tol.identity" => format!("{:?}", t.identity),
            "tol.sum_rule" => format!("{:?}", t.sum_rule),
            "tol.energy" => format!("{:?}", t.energy),
            "tol.gs" => format!("{:?}", t.gs),
            "tol.oracle" => format!("{:?}", t.oracle),
            "seed" => self.seed.to_string(),
            "out" => self.out.to_string_lossy().into_owned(),
            "cache" => self.cache.to_string_lossy().into_owned(),
            _ => return None,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Some(Origin::Line(i + 1));
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError { origin, field: None, message: format!("expected `key = value`, got `{line}`") });
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError { origin, field: Some(key.into()), message: "repeated key".into() });
            }
            cfg.set(key, value).map_err(|message| ConfigError { origin, field: Some(key.into()), message })?;
        }
        Ok(cfg)
    }

    /// Canonical text with every key, in `KEYS` order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            s.push_str(key);
            s.push_str(" = ");
            s.push_str(&self.get(key).expect("listed key"));
            s.push('\n');
        }
        s
    }

    /// Applies `FBI_*` variables from `vars`; other variables are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (name, value) in vars {
            let Some(key) = KEYS.iter().find(|k| env_name(k) == name) else {
                return Err(ConfigError { origin: Some(Origin::Env(name)), field: None, message: "unknown variable".into() });
            };
            self.set(key, &value).map_err(|message| ConfigError {
                origin: Some(Origin::Env(name.clone())),
                field: Some(key.to_string()),
                message,
            })?;
        }
        Ok(())
    }

    pub fn interaction(&self) -> Interaction {
        match self.interaction {
            InteractionKind::Yukawa => Interaction::yukawa(self.interaction_param),
            InteractionKind::Gaussian => Interaction::gaussian(self.interaction_param),
        }
    }

    /// SHA-256 of the canonical lines of every key except the output and
    /// cache paths, which do not change any result; hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for key in KEYS.iter().filter(|k| !PATH_KEYS.contains(k)) {
            h.update(format!("{key} = {}\n", self.get(key).expect("listed key")).as_bytes());
        }
        hex(&h.finalize())
    }
}

fn non_empty_path(v: &str) -> Result<PathBuf, String> {
    if v.is_empty() {
        return Err("path must not be empty".into());
    }
    if v.contains(['#', '\n', '\r']) {
        return Err("path must not contain `#` or line breaks".into());
    }
    Ok(PathBuf::from(v))
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

//! Experiment configuration. A TOML file in which every dimensional value is
//! a string with an explicit unit, e.g. `radius = "1000 m"` or
//! `threshold = "-17.3 dB"`. Bare numbers are only accepted for
//! dimensionless quantities.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use repcov::energy::EnergyParams;
use repcov::model::{
    db_to_linear, dbm_to_watts, noise_power, CellConfig, Channel, CombinerKind, ProfileShape, RepetitionProfile,
};
use repcov::montecarlo::BranchModel;
use repcov::validation::ValidationPlan;
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("`{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn field_err(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Length,
    Power,
    Density,
    Ratio,
    Time,
    Frequency,
}

impl Dim {
    fn example(self) -> &'static str {
        match self {
            Dim::Length => "m",
            Dim::Power => "W",
            Dim::Density => "/m2",
            Dim::Ratio => "dB",
            Dim::Time => "s",
            Dim::Frequency => "Hz",
        }
    }

    fn accepted(self) -> &'static str {
        match self {
            Dim::Length => "m, km",
            Dim::Power => "W, mW, dBm, dBW",
            Dim::Density => "/m2, /km2",
            Dim::Ratio => "dB, linear",
            Dim::Time => "s, ms",
            Dim::Frequency => "Hz, kHz, MHz",
        }
    }

    fn convert(self, v: f64, unit: &str) -> Option<f64> {
        let out = match (self, unit) {
            (Dim::Length, "m") => v,
            (Dim::Length, "km") => v * 1e3,
            (Dim::Power, "W") => v,
            (Dim::Power, "mW") => v * 1e-3,
            (Dim::Power, "dBm") => dbm_to_watts(v),
            (Dim::Power, "dBW") => db_to_linear(v),
            (Dim::Density, "/m2" | "/m^2" | "m^-2") => v,
            (Dim::Density, "/km2" | "/km^2" | "km^-2") => v * 1e-6,
            (Dim::Ratio, "dB") => db_to_linear(v),
            (Dim::Ratio, "linear") => v,
            (Dim::Time, "s") => v,
            (Dim::Time, "ms") => v * 1e-3,
            (Dim::Frequency, "Hz") => v,
            (Dim::Frequency, "kHz") => v * 1e3,
            (Dim::Frequency, "MHz") => v * 1e6,
            _ => return None,
        };
        Some(out)
    }
}

/// Splits `"1000 m"`, `"2e-4/m2"` or `"-17.3dB"` into number and unit.
fn split_quantity(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    if let Some((num, unit)) = s.split_once(char::is_whitespace) {
        return Some((num.parse().ok()?, unit.trim()));
    }
    (1..s.len())
        .rev()
        .filter(|&i| s.is_char_boundary(i))
        .find_map(|i| Some((s[..i].parse().ok()?, &s[i..])))
}

fn quantity(field: &str, v: &Value, dim: Dim) -> Result<f64> {
    let text = match v {
        Value::String(s) => s,
        Value::Integer(_) | Value::Float(_) => {
            return Err(field_err(
                field,
                format!(
                    "missing unit; write it as \"{v} {}\" ({})",
                    dim.example(),
                    dim.accepted()
                ),
            ))
        }
        other => {
            return Err(field_err(
                field,
                format!("expected a quantity string, got {}", other.type_str()),
            ))
        }
    };
    let (num, unit) = split_quantity(text).ok_or_else(|| {
        field_err(
            field,
            format!("cannot read \"{text}\" as <number> <unit> ({})", dim.accepted()),
        )
    })?;
    let out = dim
        .convert(num, unit)
        .ok_or_else(|| field_err(field, format!("unit `{unit}` not accepted here ({})", dim.accepted())))?;
    if !out.is_finite() {
        return Err(field_err(field, format!("\"{text}\" is not finite")));
    }
    Ok(out)
}

fn number(field: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) if x.is_finite() => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        Value::String(s) => Err(field_err(
            field,
            format!("dimensionless; write a bare number, not \"{s}\""),
        )),
        other => Err(field_err(field, format!("expected a number, got {other}"))),
    }
}

fn integer(field: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => Err(field_err(
            field,
            format!("expected a non-negative integer, got {other}"),
        )),
    }
}

fn string<'a>(field: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| field_err(field, format!("expected a string, got {}", v.type_str())))
}

/// One TOML table, checked up front for unknown keys.
struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    allowed: &'a [&'a str],
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'a str, allowed: &'a [&'a str]) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(other) => return Err(field_err(name, format!("expected a table, got {}", other.type_str()))),
        };
        if let Some(t) = table {
            if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(field_err(
                    &format!("{name}.{k}"),
                    format!("unknown key (expected one of: {})", allowed.join(", ")),
                ));
            }
        }
        Ok(Self { name, table, allowed })
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn path(&self, key: &str) -> String {
        debug_assert!(self.allowed.contains(&key));
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| field_err(&self.path(key), "required"))
    }

    fn quantity(&self, key: &str, dim: Dim) -> Result<f64> {
        quantity(&self.path(key), self.require(key)?, dim)
    }

    fn number(&self, key: &str) -> Result<f64> {
        number(&self.path(key), self.require(key)?)
    }

    fn opt<T>(&self, key: &str, f: impl FnOnce(&str, &Value) -> Result<T>) -> Result<Option<T>> {
        self.get(key).map(|v| f(&self.path(key), v)).transpose()
    }
}

/// Reads a threshold given with its unit, `"-17.3 dB"` or `"0.5 linear"`.
pub fn parse_threshold(field: &str, text: &str) -> Result<f64> {
    quantity(field, &Value::String(text.to_string()), Dim::Ratio)
}

pub fn parse_combiner(s: &str) -> Option<CombinerKind> {
    CombinerKind::ALL.into_iter().find(|c| c.short_name() == s)
}

pub fn parse_channel(s: &str) -> Option<Channel> {
    [Channel::PathLossOnly, Channel::RayleighFading]
        .into_iter()
        .find(|c| c.short_name() == s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Link distance (m); per-distance curves.
    R,
    /// Profile steepness (m); cell averages.
    A,
    /// Profile midpoint (m); cell averages.
    B,
    /// SINR threshold in dB; cell averages.
    ThetaDb,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::R => "r",
            Axis::A => "a",
            Axis::B => "b",
            Axis::ThetaDb => "theta_db",
        }
    }

    /// Column header of the swept variable.
    pub fn column(self) -> &'static str {
        match self {
            Axis::R => "r_m",
            Axis::A => "a_m",
            Axis::B => "b_m",
            Axis::ThetaDb => "theta_db",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Axis::R, Axis::A, Axis::B, Axis::ThetaDb]
            .into_iter()
            .find(|a| a.name() == s)
    }

    fn dim(self) -> Dim {
        match self {
            Axis::ThetaDb => Dim::Ratio,
            _ => Dim::Length,
        }
    }

    fn unit(self) -> &'static str {
        match self {
            Axis::ThetaDb => "dB",
            _ => "m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub axis: Axis,
    /// In the axis unit: metres, or dB for `theta_db`.
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub log: bool,
}

impl Sweep {
    /// `r` over `(0, R]` in 200 steps.
    pub fn default_for(radius: f64) -> Self {
        Self {
            axis: Axis::R,
            start: radius / 200.0,
            stop: radius,
            count: 200,
            log: false,
        }
    }

    /// Parses `AXIS:START:STOP:COUNT[:log]`. Values are in metres, or dB for
    /// `theta_db`.
    pub fn parse_flag(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = |why: &str| field_err("--sweep", format!("{why} in `{s}` (AXIS:START:STOP:COUNT[:log])"));
        if !(4..=5).contains(&parts.len()) {
            return Err(bad("expected 4 or 5 fields"));
        }
        let axis = Axis::parse(parts[0]).ok_or_else(|| bad("axis must be r, a, b or theta_db"))?;
        let start = parts[1].parse().map_err(|_| bad("bad START"))?;
        let stop = parts[2].parse().map_err(|_| bad("bad STOP"))?;
        let count = parts[3].parse().map_err(|_| bad("bad COUNT"))?;
        let log = match parts.get(4) {
            None | Some(&"linear") => false,
            Some(&"log") => true,
            Some(_) => return Err(bad("scale must be `log` or `linear`")),
        };
        let sweep = Self {
            axis,
            start,
            stop,
            count,
            log,
        };
        sweep.check("--sweep")?;
        Ok(sweep)
    }

    fn check(&self, field: &str) -> Result<()> {
        if self.count == 0 {
            return Err(field_err(field, "count must be >= 1"));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(field_err(field, "start and stop must be finite"));
        }
        if self.log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(field_err(field, "log spacing needs start, stop > 0"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    return self.stop;
                }
                let t = i as f64 / last;
                if self.log {
                    (self.start.ln() + t * (self.stop.ln() - self.start.ln())).exp()
                } else {
                    self.start + t * (self.stop - self.start)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySection {
    pub amplifier_factor: f64,
    pub overhead_power: f64,
    pub time_on_air: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSection {
    pub trials: u64,
    pub seed: u64,
    /// `None` picks the model each combiner's analytic formula assumes.
    pub branch_model: Option<BranchModel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub inversion_terms: usize,
    pub grid_size: usize,
    pub cache_tail: f64,
    pub quad_tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            inversion_terms: repcov::inversion::DEFAULT_TERMS,
            grid_size: 1024,
            cache_tail: 1e-10,
            quad_tol: repcov::interference::DEFAULT_QUAD_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: Format,
}

pub const DEFAULT_MC_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;

/// A fully resolved experiment: every quantity in SI units, thresholds
/// linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub combiner: Option<CombinerKind>,
    pub cell: CellConfig<f64>,
    pub profile: RepetitionProfile<f64>,
    pub energy: Option<EnergySection>,
    pub mc: McSection,
    pub sweep: Sweep,
    pub numerics: Numerics,
    /// Link distances checked by `validate` (m).
    pub validate_radii: Vec<f64>,
    pub output: OutputSpec,
}

/// Command-line values that replace the file's.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub combiner: Option<CombinerKind>,
    pub channel: Option<Channel>,
    pub sweep: Option<Sweep>,
    pub mc_trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threshold: Option<f64>,
    pub inversion_terms: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        const TOP: [&str; 9] = [
            "combiner", "cell", "profile", "energy", "mc", "sweep", "numerics", "validate", "output",
        ];
        if let Some(k) = root.keys().find(|k| !TOP.contains(&k.as_str())) {
            return Err(field_err(k, "unknown top-level key"));
        }
        let combiner = root
            .get("combiner")
            .map(|v| {
                let s = string("combiner", v)?;
                parse_combiner(s).ok_or_else(|| field_err("combiner", format!("`{s}` is not one of norep, sc, mrc")))
            })
            .transpose()?;

        let cell = parse_cell(&root)?;
        let profile = parse_profile(&root)?;
        let energy = parse_energy(&root)?;

        let mc_sec = Section::new(&root, "mc", &["trials", "seed", "branch_model"])?;
        let branch_model = match mc_sec
            .opt("branch_model", |f, v| Ok(string(f, v)?.to_string()))?
            .as_deref()
        {
            None | Some("auto") => None,
            Some("independent") => Some(BranchModel::IndependentPerRepetition),
            Some("shared") => Some(BranchModel::SharedInterference),
            Some(s) => {
                return Err(field_err(
                    "mc.branch_model",
                    format!("`{s}` is not one of auto, independent, shared"),
                ))
            }
        };
        let mc = McSection {
            trials: mc_sec.opt("trials", integer)?.unwrap_or(DEFAULT_MC_TRIALS),
            seed: mc_sec.opt("seed", integer)?.unwrap_or(DEFAULT_SEED),
            branch_model,
        };

        let sweep = parse_sweep(&root, cell.radius)?;

        let num = Section::new(
            &root,
            "numerics",
            &["inversion_terms", "grid_size", "cache_tail", "quad_tol"],
        )?;
        let defaults = Numerics::default();
        let numerics = Numerics {
            inversion_terms: num
                .opt("inversion_terms", integer)?
                .map_or(defaults.inversion_terms, |v| v as usize),
            grid_size: num
                .opt("grid_size", integer)?
                .map_or(defaults.grid_size, |v| v as usize),
            cache_tail: num.opt("cache_tail", number)?.unwrap_or(defaults.cache_tail),
            quad_tol: num.opt("quad_tol", number)?.unwrap_or(defaults.quad_tol),
        };

        let val = Section::new(&root, "validate", &["radii"])?;
        let validate_radii = match val.get("radii") {
            None => (1..=10).map(|i| 100.0 * i as f64).collect(),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| quantity(&format!("validate.radii[{i}]"), v, Dim::Length))
                .collect::<Result<_>>()?,
            Some(other) => {
                return Err(field_err(
                    "validate.radii",
                    format!("expected an array, got {}", other.type_str()),
                ))
            }
        };

        let out = Section::new(&root, "output", &["path", "format"])?;
        let output = OutputSpec {
            path: out.opt("path", |f, v| Ok(PathBuf::from(string(f, v)?)))?,
            format: match out.opt("format", |f, v| Ok(string(f, v)?.to_string()))? {
                None => Format::Csv,
                Some(s) => {
                    Format::parse(&s).ok_or_else(|| field_err("output.format", format!("`{s}` is not csv or json")))?
                }
            },
        };

        let cfg = Self {
            combiner,
            cell,
            profile,
            energy,
            mc,
            sweep,
            numerics,
            validate_radii,
            output,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if o.combiner.is_some() {
            self.combiner = o.combiner;
        }
        if let Some(ch) = o.channel {
            self.cell.channel = ch;
        }
        if let Some(s) = o.sweep {
            self.sweep = s;
        }
        if let Some(t) = o.mc_trials {
            self.mc.trials = t;
        }
        if let Some(s) = o.seed {
            if s > i64::MAX as u64 {
                return Err(field_err("--seed", format!("must be <= {}", i64::MAX)));
            }
            self.mc.seed = s;
        }
        if o.out.is_some() {
            self.output.path = o.out.clone();
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        if let Some(t) = o.threshold {
            self.cell.threshold = t;
        }
        if let Some(m) = o.inversion_terms {
            self.numerics.inversion_terms = m;
        }
        self.check()
    }

    /// Cross-field checks that hold after overrides too.
    fn check(&self) -> Result<()> {
        self.cell.validate().map_err(|e| field_err("cell", e.to_string()))?;
        self.sweep.check("sweep")?;
        if let Some(e) = &self.energy {
            EnergyParams::new(e.amplifier_factor, self.cell.tx_power, e.overhead_power, e.time_on_air)
                .map_err(|err| field_err("energy", err.to_string()))?;
        }
        let in_cell = |r: f64| r > 0.0 && r <= self.cell.radius;
        if self.sweep.axis == Axis::R {
            if let Some(r) = self.sweep.values().into_iter().find(|&r| !in_cell(r)) {
                return Err(field_err(
                    "sweep",
                    format!("distance {r} m lies outside (0, {}] m", self.cell.radius),
                ));
            }
        }
        if matches!(self.sweep.axis, Axis::A | Axis::B) && self.profile.is_constant() {
            return Err(field_err("sweep", "sweeping a or b needs a logistic profile"));
        }
        if let Some(&r) = self.validate_radii.iter().find(|&&r| !in_cell(r)) {
            return Err(field_err("validate.radii", format!("{r} m lies outside the cell")));
        }
        let n = &self.numerics;
        if n.inversion_terms == 0 {
            return Err(field_err("numerics.inversion_terms", "must be >= 1"));
        }
        if n.grid_size < repcov::interference::MIN_GRID_SIZE {
            return Err(field_err(
                "numerics.grid_size",
                format!("must be >= {}", repcov::interference::MIN_GRID_SIZE),
            ));
        }
        if !(n.cache_tail > 0.0 && n.cache_tail < 0.5) {
            return Err(field_err("numerics.cache_tail", "must lie in (0, 0.5)"));
        }
        if !(n.quad_tol > 0.0 && n.quad_tol < 1e-2) {
            return Err(field_err("numerics.quad_tol", "must lie in (0, 1e-2)"));
        }
        Ok(())
    }

    pub fn combiner(&self) -> Result<CombinerKind> {
        self.combiner
            .ok_or_else(|| field_err("combiner", "not set in the config or with --combiner"))
    }

    pub fn energy_params(&self) -> Result<EnergyParams<f64>> {
        let e = self
            .energy
            .ok_or_else(|| field_err("energy", "section required for energy runs"))?;
        EnergyParams::new(e.amplifier_factor, self.cell.tx_power, e.overhead_power, e.time_on_air)
            .map_err(|err| field_err("energy", err.to_string()))
    }

    pub fn validation_plan(&self) -> ValidationPlan {
        ValidationPlan {
            cell: self.cell,
            profile: self.profile,
            radii: self.validate_radii.clone(),
            trials: self.mc.trials,
            seed: self.mc.seed,
            inversion_terms: self.numerics.inversion_terms,
            grid_size: self.numerics.grid_size,
            cache_tail: self.numerics.cache_tail,
        }
    }

    /// Canonical TOML for this config; `parse(to_toml())` reproduces `self`.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let q = |v: f64, unit: &str| format!("\"{} {unit}\"", fmt_num(v));
        let n = |v: f64| format!("{v:?}");
        if let Some(c) = self.combiner {
            let _ = writeln!(s, "combiner = \"{}\"", c.short_name());
        }
        let c = &self.cell;
        let _ = writeln!(s, "\n[cell]");
        let _ = writeln!(s, "density = {}", q(c.density, "/m2"));
        let _ = writeln!(s, "radius = {}", q(c.radius, "m"));
        let _ = writeln!(s, "path_loss_exp = {}", n(c.path_loss_exp));
        let _ = writeln!(s, "tx_power = {}", q(c.tx_power, "W"));
        let _ = writeln!(s, "noise_power = {}", q(c.noise_power, "W"));
        let _ = writeln!(s, "threshold = {}", q(c.threshold, "linear"));
        let _ = writeln!(s, "channel = \"{}\"", c.channel.short_name());

        let _ = writeln!(s, "\n[profile]");
        match self.profile.shape() {
            ProfileShape::Logistic { steepness, midpoint } => {
                let _ = writeln!(s, "shape = \"logistic\"");
                let _ = writeln!(s, "steepness = {}", q(steepness, "m"));
                let _ = writeln!(s, "midpoint = {}", q(midpoint, "m"));
            }
            ProfileShape::Constant(_) if self.profile.is_no_repetition() => {
                let _ = writeln!(s, "shape = \"none\"");
            }
            ProfileShape::Constant(psi) => {
                let _ = writeln!(s, "shape = \"constant\"");
                let _ = writeln!(s, "psi = {}", n(psi));
            }
        }
        let _ = writeln!(s, "base_duty = {}", n(self.profile.base_duty()));

        if let Some(e) = &self.energy {
            let _ = writeln!(s, "\n[energy]");
            let _ = writeln!(s, "amplifier_factor = {}", n(e.amplifier_factor));
            let _ = writeln!(s, "overhead_power = {}", q(e.overhead_power, "W"));
            let _ = writeln!(s, "time_on_air = {}", q(e.time_on_air, "s"));
        }

        let _ = writeln!(s, "\n[mc]");
        let _ = writeln!(s, "trials = {}", self.mc.trials);
        let _ = writeln!(s, "seed = {}", self.mc.seed);
        let bm = match self.mc.branch_model {
            None => "auto",
            Some(BranchModel::IndependentPerRepetition) => "independent",
            Some(BranchModel::SharedInterference) => "shared",
        };
        let _ = writeln!(s, "branch_model = \"{bm}\"");

        let w = &self.sweep;
        let _ = writeln!(s, "\n[sweep]");
        let _ = writeln!(s, "axis = \"{}\"", w.axis.name());
        let _ = writeln!(s, "start = {}", q(w.start, w.axis.unit()));
        let _ = writeln!(s, "stop = {}", q(w.stop, w.axis.unit()));
        let _ = writeln!(s, "count = {}", w.count);
        let _ = writeln!(s, "scale = \"{}\"", if w.log { "log" } else { "linear" });

        let m = &self.numerics;
        let _ = writeln!(s, "\n[numerics]");
        let _ = writeln!(s, "inversion_terms = {}", m.inversion_terms);
        let _ = writeln!(s, "grid_size = {}", m.grid_size);
        let _ = writeln!(s, "cache_tail = {}", n(m.cache_tail));
        let _ = writeln!(s, "quad_tol = {}", n(m.quad_tol));

        let radii: Vec<String> = self.validate_radii.iter().map(|&r| q(r, "m")).collect();
        let _ = writeln!(s, "\n[validate]");
        let _ = writeln!(s, "radii = [{}]", radii.join(", "));

        let _ = writeln!(s, "\n[output]");
        if let Some(p) = &self.output.path {
            let _ = writeln!(s, "path = {}", Value::String(p.display().to_string()));
        }
        let _ = writeln!(s, "format = \"{}\"", self.output.format.name());
        s
    }
}

/// Shortest decimal that reads back to the same `f64`.
fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_cell(root: &Table) -> Result<CellConfig<f64>> {
    let sec = Section::new(
        root,
        "cell",
        &[
            "density",
            "radius",
            "path_loss_exp",
            "tx_power",
            "noise_power",
            "bandwidth",
            "noise_figure",
            "threshold",
            "channel",
        ],
    )?;
    if !sec.present() {
        return Err(field_err("cell", "section required"));
    }
    let noise = match (sec.get("noise_power"), sec.get("bandwidth"), sec.get("noise_figure")) {
        (Some(v), None, None) => quantity("cell.noise_power", v, Dim::Power)?,
        (None, Some(bw), Some(nf)) => {
            let bw = quantity("cell.bandwidth", bw, Dim::Frequency)?;
            let nf_db = match nf {
                Value::String(s) => match split_quantity(s) {
                    Some((v, "dB")) => v,
                    _ => return Err(field_err("cell.noise_figure", format!("write it in dB, got \"{s}\""))),
                },
                _ => return Err(field_err("cell.noise_figure", "missing unit; write e.g. \"3 dB\"")),
            };
            noise_power(bw, nf_db).map_err(|e| field_err("cell.bandwidth", e.to_string()))?
        }
        (None, None, None) => {
            return Err(field_err(
                "cell.noise_power",
                "required (or give bandwidth and noise_figure instead)",
            ))
        }
        _ => {
            return Err(field_err(
                "cell.noise_power",
                "give either noise_power or both bandwidth and noise_figure",
            ))
        }
    };
    let channel = string("cell.channel", sec.require("channel")?)?;
    Ok(CellConfig {
        density: sec.quantity("density", Dim::Density)?,
        radius: sec.quantity("radius", Dim::Length)?,
        path_loss_exp: sec.number("path_loss_exp")?,
        tx_power: sec.quantity("tx_power", Dim::Power)?,
        noise_power: noise,
        threshold: sec.quantity("threshold", Dim::Ratio)?,
        channel: parse_channel(channel)
            .ok_or_else(|| field_err("cell.channel", format!("`{channel}` is not pathloss or fading")))?,
    })
}

fn parse_profile(root: &Table) -> Result<RepetitionProfile<f64>> {
    let sec = Section::new(root, "profile", &["shape", "steepness", "midpoint", "psi", "base_duty"])?;
    if !sec.present() {
        return Err(field_err("profile", "section required"));
    }
    let base = sec.number("base_duty")?;
    let shape = string("profile.shape", sec.require("shape")?)?;
    let stray = |keys: &[&str]| -> Result<()> {
        match keys.iter().find(|k| sec.get(k).is_some()) {
            Some(k) => Err(field_err(&sec.path(k), format!("not used by shape `{shape}`"))),
            None => Ok(()),
        }
    };
    let built = match shape {
        "logistic" => {
            stray(&["psi"])?;
            RepetitionProfile::logistic(
                sec.quantity("steepness", Dim::Length)?,
                sec.quantity("midpoint", Dim::Length)?,
                base,
            )
        }
        "constant" => {
            stray(&["steepness", "midpoint"])?;
            RepetitionProfile::constant(sec.number("psi")?, base)
        }
        "none" => {
            stray(&["steepness", "midpoint", "psi"])?;
            RepetitionProfile::no_repetition(base)
        }
        other => {
            return Err(field_err(
                "profile.shape",
                format!("`{other}` is not logistic, constant or none"),
            ))
        }
    };
    built.map_err(|e| field_err("profile", e.to_string()))
}

fn parse_energy(root: &Table) -> Result<Option<EnergySection>> {
    let sec = Section::new(root, "energy", &["amplifier_factor", "overhead_power", "time_on_air"])?;
    if !sec.present() {
        return Ok(None);
    }
    Ok(Some(EnergySection {
        amplifier_factor: sec.number("amplifier_factor")?,
        overhead_power: sec.quantity("overhead_power", Dim::Power)?,
        time_on_air: sec.quantity("time_on_air", Dim::Time)?,
    }))
}

fn parse_sweep(root: &Table, radius: f64) -> Result<Sweep> {
    let sec = Section::new(root, "sweep", &["axis", "start", "stop", "count", "scale"])?;
    if !sec.present() {
        return Ok(Sweep::default_for(radius));
    }
    let axis_name = string("sweep.axis", sec.require("axis")?)?;
    let axis = Axis::parse(axis_name)
        .ok_or_else(|| field_err("sweep.axis", format!("`{axis_name}` is not r, a, b or theta_db")))?;
    let in_axis_unit = |key: &str| -> Result<f64> {
        let v = sec.require(key)?;
        if axis == Axis::ThetaDb {
            // kept in dB so that linear spacing is spacing in dB
            match v {
                Value::String(s) => match split_quantity(s) {
                    Some((x, "dB")) => Ok(x),
                    _ => Err(field_err(
                        &sec.path(key),
                        format!("theta_db sweeps are given in dB, got \"{s}\""),
                    )),
                },
                _ => Err(field_err(&sec.path(key), "missing unit; write e.g. \"-20 dB\"")),
            }
        } else {
            sec.quantity(key, axis.dim())
        }
    };
    let log = match sec.opt("scale", |f, v| Ok(string(f, v)?.to_string()))?.as_deref() {
        None | Some("linear") => false,
        Some("log") => true,
        Some(s) => return Err(field_err("sweep.scale", format!("`{s}` is not linear or log"))),
    };
    let sweep = Sweep {
        axis,
        start: in_axis_unit("start")?,
        stop: in_axis_unit("stop")?,
        count: integer("sweep.count", sec.require("count")?)? as usize,
        log,
    };
    sweep.check("sweep")?;
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
combiner = "sc"

[cell]
density = "2e-4 /m2"
radius = "1 km"
path_loss_exp = 3.5
tx_power = "20 dBm"
bandwidth = "180 kHz"
noise_figure = "3 dB"
threshold = "-17.3 dB"
channel = "fading"

[profile]
shape = "logistic"
steepness = "50 m"
midpoint = "1050 m"
base_duty = 0.01

[energy]
amplifier_factor = 4
overhead_power = "210 mW"
time_on_air = "1 s"
"#;

    #[test]
    fn reads_units() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.cell.radius, 1000.0);
        assert!((cfg.cell.tx_power - 0.1).abs() < 1e-15);
        assert!((cfg.cell.threshold - 0.018620871366628676).abs() < 1e-15);
        let want = dbm_to_watts(-174.0 + 10.0 * 1.8e5f64.log10() + 3.0);
        assert!((cfg.cell.noise_power / want - 1.0).abs() < 1e-12);
        assert!((cfg.cell.noise_power - 1.43e-15).abs() < 1e-17);
        assert_eq!(cfg.combiner, Some(CombinerKind::SelectionCombining));
        assert_eq!(cfg.sweep, Sweep::default_for(1000.0));
        assert_eq!(cfg.energy.unwrap().overhead_power, 0.21);
        assert_eq!(cfg.mc.trials, DEFAULT_MC_TRIALS);
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut cfg = ExperimentConfig::parse(BASE).unwrap();
        cfg.apply(&Overrides {
            sweep: Some(Sweep::parse_flag("b:900:2000:12:log").unwrap()),
            out: Some("out dir/\"x\".csv".into()),
            seed: Some(i64::MAX as u64),
            ..Default::default()
        })
        .unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    fn err_of(text: &str) -> String {
        ExperimentConfig::parse(text).unwrap_err().to_string()
    }

    #[test]
    fn missing_unit_is_an_error() {
        let e = err_of(&BASE.replace("\"1 km\"", "1000"));
        assert!(e.contains("cell.radius") && e.contains("missing unit"), "{e}");
        let e = err_of(&BASE.replace("\"1 km\"", "\"1000\""));
        assert!(e.contains("cell.radius"), "{e}");
        let e = err_of(&BASE.replace("\"1 km\"", "\"1000 dB\""));
        assert!(e.contains("unit `dB`"), "{e}");
        let e = err_of(&BASE.replace("path_loss_exp = 3.5", "path_loss_exp = \"3.5 m\""));
        assert!(e.contains("dimensionless"), "{e}");
    }

    #[test]
    fn field_level_messages() {
        let e = err_of(&BASE.replace("threshold = \"-17.3 dB\"\n", ""));
        assert!(e.contains("`cell.threshold`: required"), "{e}");
        let e = err_of(&BASE.replace("radius", "radious"));
        assert!(e.contains("cell.radious") && e.contains("unknown key"), "{e}");
        let e = err_of(&BASE.replace("\"fading\"", "\"rician\""));
        assert!(e.contains("cell.channel"), "{e}");
        let e = err_of(&BASE.replace("\"-17.3 dB\"\n", "\"-17.3 dB\"\nnoise_power = \"-118 dBm\"\n"));
        assert!(e.contains("either noise_power"), "{e}");
        let e = err_of(&format!(
            "{BASE}\n[sweep]\naxis = \"r\"\nstart = \"0 m\"\nstop = \"2000 m\"\ncount = 5\n"
        ));
        assert!(e.contains("outside"), "{e}");
    }

    #[test]
    fn no_repetition_profile_rejects_stray_keys() {
        let text = BASE.replace("shape = \"logistic\"", "shape = \"none\"");
        assert!(err_of(&text).contains("not used by shape"));
    }

    #[test]
    fn sweep_flag_grammar() {
        let s = Sweep::parse_flag("theta_db:-20:-10:11").unwrap();
        assert_eq!(s.values()[10], -10.0);
        assert_eq!(s.values()[5], -15.0);
        let s = Sweep::parse_flag("r:1:1000:4:log").unwrap();
        let v = s.values();
        assert!((v[1] - 10.0).abs() < 1e-12 && (v[2] - 100.0).abs() < 1e-10 && v[3] == 1000.0);
        assert_eq!(Sweep::parse_flag("b:900:900:1").unwrap().values(), vec![900.0]);
        assert!(Sweep::parse_flag("r:1:2").is_err());
        assert!(Sweep::parse_flag("x:1:2:3").is_err());
        assert!(Sweep::parse_flag("r:0:2:3:log").is_err());
        assert!(Sweep::parse_flag("r:1:2:0").is_err());
    }

    #[test]
    fn quantity_forms() {
        assert_eq!(split_quantity("2e-4/m2"), Some((2e-4, "/m2")));
        assert_eq!(split_quantity("-17.3dB"), Some((-17.3, "dB")));
        assert_eq!(split_quantity("1e3 m"), Some((1e3, "m")));
        assert_eq!(split_quantity("m"), None);
    }
}

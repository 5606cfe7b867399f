use serde::{Deserialize, Serialize};

use sixbq::data::StateSpec;
use sixbq::spectral::{Beta, FourierField, GProfile, SobolevIndex};
use sixbq::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GSpec {
    Uniform {
        #[serde(default = "one")]
        scale: f64,
    },
    RaisedCosine {
        #[serde(default = "one")]
        scale: f64,
    },
    Custom {
        coefficients: Vec<(i64, f64, f64)>,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for GSpec {
    fn default() -> Self {
        GSpec::RaisedCosine { scale: 1.0 }
    }
}

impl GSpec {
    pub fn scale(&self) -> f64 {
        match self {
            GSpec::Uniform { scale } | GSpec::RaisedCosine { scale } | GSpec::Custom { scale, .. } => *scale,
        }
    }

    /// The profile times `scale`, without validation.
    pub fn raw(&self) -> Result<GProfile> {
        let base = match self {
            GSpec::Uniform { .. } => GProfile::uniform(),
            GSpec::RaisedCosine { .. } => GProfile::raised_cosine(),
            GSpec::Custom { coefficients, .. } => GProfile::unchecked(FourierField::from_triples(coefficients)?),
        };
        Ok(GProfile::unchecked(base.field().scale(self.scale())))
    }

    pub fn build(&self) -> Result<GProfile> {
        let g = self.raw()?;
        g.validate()?;
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub nonlinear: bool,
    pub record_every: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            nonlinear: true,
            record_every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub nonlinear: bool,
    pub tol: f64,
    pub cond_threshold: f64,
    pub fixed_point_tol: f64,
    pub max_iter: usize,
    pub delta: f64,
    pub terminal_tol: f64,
    pub record_every: usize,
    pub samples: usize,
    /// Step of the nonlinear iteration; defaults to `min(dt, 1e-4)`.
    pub dt: Option<f64>,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            nonlinear: false,
            tol: 1e-6,
            cond_threshold: 1e10,
            fixed_point_tol: 1e-9,
            max_iter: 20,
            delta: 0.1,
            terminal_tol: 1e-5,
            record_every: 10,
            samples: 101,
            dt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizeSection {
    pub gain: f64,
    pub nonlinear: bool,
    /// Fixed horizon; when absent the horizon doubles from `initial_horizon`
    /// until `E` has dropped by `target_drop` or `max_horizon` is reached.
    pub t_final: Option<f64>,
    pub initial_horizon: f64,
    pub max_horizon: f64,
    pub target_drop: f64,
    pub record_every: usize,
    pub window: Option<(f64, f64)>,
    pub period: f64,
    pub dissipation_tol: f64,
    pub mean_shift_check: bool,
}

impl Default for StabilizeSection {
    fn default() -> Self {
        StabilizeSection {
            gain: 1.0,
            nonlinear: false,
            t_final: None,
            initial_horizon: 20.0,
            max_horizon: 640.0,
            target_drop: 1e4,
            record_every: 10,
            window: None,
            period: 1.0,
            dissipation_tol: 1e-6,
            mean_shift_check: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub tol: f64,
    pub quadrature_tol: f64,
    pub random_fields: usize,
    /// Negative control: feed a repeated frequency to the Gram builder.
    pub duplicate_frequency: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            tol: 1e-12,
            quadrature_tol: 1e-8,
            random_fields: 200,
            duplicate_frequency: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub command: String,
    pub key: String,
    pub values: Vec<toml::Value>,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub beta: i32,
    pub n: usize,
    pub s: f64,
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
    pub g: GSpec,
    pub initial: StateSpec,
    pub terminal: StateSpec,
    pub simulate: SimulateSection,
    pub control: ControlSection,
    pub stabilize: StabilizeSection,
    pub verify: VerifySection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            beta: 1,
            n: 16,
            s: 0.0,
            t: 1.0,
            dt: 1e-3,
            seed: 0,
            g: GSpec::default(),
            initial: StateSpec::RandomSmooth {
                amplitude: 1e-2,
                decay: 2.0,
                mean: 0.0,
                stream: 0,
            },
            terminal: StateSpec::RandomSmooth {
                amplitude: 1e-2,
                decay: 2.0,
                mean: 0.0,
                stream: 1,
            },
            simulate: SimulateSection::default(),
            control: ControlSection::default(),
            stabilize: StabilizeSection::default(),
            verify: VerifySection::default(),
            sweep: None,
        }
    }
}

impl RunConfig {
    pub fn beta(&self) -> Result<Beta> {
        Beta::try_from(self.beta)
    }

    pub fn sobolev(&self) -> Result<SobolevIndex> {
        SobolevIndex::new(self.s)
    }

    pub fn validate(&self) -> Result<()> {
        self.beta()?;
        self.sobolev()?;
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.into())) };
        check((1..=512).contains(&self.n), "n must be in 1..=512")?;
        check(self.t.is_finite() && self.t > 0.0, "t must be positive")?;
        check(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.t, "dt must be in (0, t]")?;
        check(self.simulate.record_every >= 1, "simulate.record_every must be >= 1")?;
        check(self.stabilize.gain >= 0.0, "stabilize.gain must be >= 0")?;
        check(self.stabilize.period > 0.0, "stabilize.period must be positive")?;
        check(self.control.tol > 0.0 && self.control.max_iter >= 1, "control tolerances must be positive")?;
        check(self.control.samples >= 2, "control.samples must be >= 2")?;
        Ok(())
    }

    pub fn initial_state(&self) -> Result<sixbq::spectral::StateVector> {
        self.initial.build(self.n, self.beta()?, self.sobolev()?, self.seed)
    }

    pub fn terminal_state(&self) -> Result<sixbq::spectral::StateVector> {
        self.terminal.build(self.n, self.beta()?, self.sobolev()?, self.seed)
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Sets `dotted.key = value` inside `table`, creating intermediate tables.
pub fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let key = k.trim();
    let value = parse_value(v.trim());
    match value {
        toml::Value::Table(t) if !t.contains_key("kind") => {
            let mut wrapped = toml::Table::new();
            set_path(&mut wrapped, key, toml::Value::Table(t))?;
            merge(table, wrapped);
            Ok(())
        }
        value => set_path(table, key, value),
    }
}

/// Recursive merge; a table carrying its own `kind` replaces the old value whole.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Loads the file (if any), applies overrides and the seed flag, and validates.
pub fn load(path: Option<&std::path::Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut table = to_table(&RunConfig::default())?;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)?;
        let file = toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        merge(&mut table, file);
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(seed) = seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    from_table(table)
}

pub fn from_table(table: toml::Table) -> Result<RunConfig> {
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_table(cfg: &RunConfig) -> Result<toml::Table> {
    toml::Table::try_from(cfg).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_nest_and_parse() {
        let mut t = to_table(&RunConfig::default()).unwrap();
        apply_override(&mut t, "stabilize.gain=2.5").unwrap();
        apply_override(&mut t, "g.scale=1.0").unwrap();
        apply_override(&mut t, "beta=-1").unwrap();
        apply_override(&mut t, "g.kind=uniform").unwrap();
        let cfg = from_table(t).unwrap();
        assert_eq!(cfg.stabilize.gain, 2.5);
        assert_eq!(cfg.beta, -1);
        assert_eq!(cfg.g, GSpec::Uniform { scale: 1.0 });
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = from_table(to_table(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_values() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "beta=2").unwrap();
        assert!(from_table(t).is_err());
        let mut t = toml::Table::new();
        apply_override(&mut t, "unknown_field=1").unwrap();
        assert!(from_table(t).is_err());
        assert!(apply_override(&mut toml::Table::new(), "novalue").is_err());
    }
}

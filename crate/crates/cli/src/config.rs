//! Experiment configuration: a TOML file with `system`, `geometry`, `rician`,
//! `hyper`, `run`, `output` and `sweep` tables.
//!
//! Only `system.N`, `system.M`, `system.K` and `system.power_dbm` are
//! required. Powers are given in dBm and converted to watts here, so the
//! library only ever sees linear quantities. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gamn_core::channel::{Geometry, PathlossModel, Point2, RicianParams};
use gamn_core::gamn::{HyperParams, Setup, Variant};
use gamn_core::metrics::SystemParams;
use toml::{Table, Value};

/// Invalid or missing configuration; `key` is the dotted path of the culprit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub power_dbm: f64,
    pub sigma2_dbm: f64,
    pub weights: Vec<f64>,
    pub geometry: Geometry,
    pub rician: RicianParams,
    pub hyper: HyperParams,
    pub variants: Vec<Variant>,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub prefix: String,
    pub sweep_powers_dbm: Vec<f64>,
    pub sweep_n: Vec<usize>,
}

/// Reads one table, remembering which keys were consumed.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str) -> Result<Self, ConfigError> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(err(name, "must be a table")),
        };
        Ok(Self {
            name,
            table,
            seen: BTreeSet::new(),
        })
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn float(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_float(v)
                .map(Some)
                .ok_or_else(|| err(self.path(key), "expected a number")),
        }
    }

    fn float_or(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float(key)?.unwrap_or(default))
    }

    fn count(&mut self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(err(self.path(key), "expected a non-negative integer")),
        }
    }

    fn count_or(&mut self, key: &'static str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.count(key)?.unwrap_or(default))
    }

    fn required_count(&mut self, key: &'static str) -> Result<usize, ConfigError> {
        self.count(key)?
            .ok_or_else(|| err(self.path(key), "missing required key"))
    }

    fn floats(&mut self, key: &'static str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    as_float(v).ok_or_else(|| err(self.path(key), "expected an array of numbers"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(err(self.path(key), "expected an array of numbers")),
        }
    }

    fn point(&mut self, key: &'static str, default: Point2) -> Result<Point2, ConfigError> {
        match self.floats(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok(Point2::new(v[0], v[1])),
            Some(_) => Err(err(self.path(key), "expected [x, y]")),
        }
    }

    fn pathloss(
        &mut self,
        key: &'static str,
        default: PathlossModel,
    ) -> Result<PathlossModel, ConfigError> {
        match self.floats(key)? {
            None => Ok(default),
            Some(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => Ok(PathlossModel {
                intercept_db: v[0],
                distance_slope: v[1],
                freq_slope: v[2],
            }),
            Some(_) => Err(err(
                self.path(key),
                "expected [intercept_db, distance_slope, freq_slope]",
            )),
        }
    }

    fn string(&mut self, key: &'static str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(err(self.path(key), "expected a string")),
        }
    }

    /// Fails on any key that was never asked for.
    fn finish(self) -> Result<(), ConfigError> {
        if let Some(t) = self.table {
            if let Some(extra) = t.keys().find(|k| !self.seen.contains(k.as_str())) {
                return Err(err(format!("{}.{extra}", self.name), "unknown key"));
            }
        }
        Ok(())
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

const SECTIONS: [&str; 7] = [
    "system", "geometry", "rician", "hyper", "run", "output", "sweep",
];

fn finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(key, format!("must be finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let root: Table = text
            .parse()
            .map_err(|e| err("", format!("invalid TOML: {e}")))?;
        if let Some(extra) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(err(extra.clone(), "unknown section"));
        }

        let mut s = Section::new(&root, "system")?;
        let n = s.required_count("N")?;
        let m = s.required_count("M")?;
        let k = s.required_count("K")?;
        let power_dbm = s
            .float("power_dbm")?
            .ok_or_else(|| err("system.power_dbm", "missing required key"))?;
        let sigma2_dbm = s.float_or("sigma2_dbm", -100.0)?;
        let weights = s.floats("weights")?;
        s.finish()?;

        let mut g = Section::new(&root, "geometry")?;
        let d = Geometry::default();
        let geometry = Geometry {
            bs_pos: g.point("bs", d.bs_pos)?,
            ris_pos: g.point("ris", d.ris_pos)?,
            user_center: g.point("user_center", d.user_center)?,
            user_radius: g.float_or("user_radius", d.user_radius)?,
            carrier_freq: g.float_or("carrier_hz", d.carrier_freq)?,
            antenna_spacing: g.float_or("antenna_spacing", d.antenna_spacing)?,
        };
        g.finish()?;

        let mut r = Section::new(&root, "rician")?;
        let d = RicianParams::default();
        let rician = RicianParams {
            kappa_br: r.float_or("kappa_br", d.kappa_br)?,
            kappa_ru: r.float_or("kappa_ru", d.kappa_ru)?,
            los: r.pathloss("los", d.los)?,
            nlos: r.pathloss("nlos", d.nlos)?,
        };
        r.finish()?;

        let mut h = Section::new(&root, "hyper")?;
        let d = HyperParams::default();
        let hyper = HyperParams {
            n_outer: h.count_or("n_outer", d.n_outer)?,
            n_phase: h.count_or("n_phase", d.n_phase)?,
            n_precoder: h.count_or("n_precoder", d.n_precoder)?,
            lr_phase: h.float_or("lr_phase", d.lr_phase)?,
            lr_precoder: h.float_or("lr_precoder", d.lr_precoder)?,
            euler: h.float_or("euler", d.euler)?,
            phase_period: h.count_or("phase_period", d.phase_period)?,
            hidden: h.count_or("hidden", d.hidden)?,
            pga_theta_step: h.float_or("pga_theta_step", d.pga_theta_step)?,
            pga_precoder_step: h.float_or("pga_precoder_step", d.pga_precoder_step)?,
        };
        h.finish()?;

        let mut run = Section::new(&root, "run")?;
        let variants = match run.get("variants") {
            None => Variant::ALL.to_vec(),
            Some(Value::Array(items)) => {
                let names = items
                    .iter()
                    .map(|v| v.as_str().map(str::to_owned))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| err("run.variants", "expected an array of strings"))?;
                parse_variants(&names).map_err(|m| err("run.variants", m))?
            }
            Some(_) => return Err(err("run.variants", "expected an array of strings")),
        };
        let n_realizations = run.count_or("n_realizations", 100)?;
        let master_seed = match run.get("master_seed") {
            None => 1,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(_) => return Err(err("run.master_seed", "expected a non-negative integer")),
        };
        run.finish()?;

        let mut o = Section::new(&root, "output")?;
        let output_dir = o.string("dir")?.map(PathBuf::from);
        let prefix = o.string("prefix")?.unwrap_or("gamn").to_owned();
        o.finish()?;

        let mut sw = Section::new(&root, "sweep")?;
        let sweep_powers_dbm = sw
            .floats("powers_dbm")?
            .unwrap_or_else(|| vec![0.0, 5.0, 10.0, 15.0]);
        let sweep_n = match sw.get("n_values") {
            None => vec![20, 40, 60],
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    _ => Err(err(
                        "sweep.n_values",
                        "expected an array of non-negative integers",
                    )),
                })
                .collect::<Result<_, _>>()?,
            Some(_) => {
                return Err(err(
                    "sweep.n_values",
                    "expected an array of non-negative integers",
                ))
            }
        };
        sw.finish()?;

        let weights = weights.unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]);
        let config = Self {
            n,
            m,
            k,
            power_dbm,
            sigma2_dbm,
            weights,
            geometry,
            rician,
            hyper,
            variants,
            n_realizations,
            master_seed,
            output_dir,
            prefix,
            sweep_powers_dbm,
            sweep_n,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every block; errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("system.N", self.n),
            ("system.M", self.m),
            ("system.K", self.k),
        ] {
            if v == 0 {
                return Err(err(key, "must be >= 1"));
            }
        }
        finite("system.power_dbm", self.power_dbm)?;
        finite("system.sigma2_dbm", self.sigma2_dbm)?;
        if self.weights.len() != self.k {
            return Err(err(
                "system.weights",
                format!("expected {} weights, got {}", self.k, self.weights.len()),
            ));
        }
        self.system_params(self.power_dbm)
            .validate()
            .map_err(|e| err("system.weights", e.to_string()))?;
        self.geometry
            .validate()
            .map_err(|e| err("geometry", e.to_string()))?;
        self.rician
            .validate()
            .map_err(|e| err("rician", e.to_string()))?;
        self.hyper
            .validate()
            .map_err(|e| err("hyper", e.to_string()))?;
        if self.variants.is_empty() {
            return Err(err("run.variants", "must name at least one variant"));
        }
        if self.n_realizations == 0 {
            return Err(err("run.n_realizations", "must be >= 1"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(err("run.master_seed", "must be at most 2^63 - 1"));
        }
        if self.prefix.is_empty() || self.prefix.contains(['/', '\\']) {
            return Err(err("output.prefix", "must be a non-empty file name"));
        }
        check_powers(&self.sweep_powers_dbm).map_err(|m| err("sweep.powers_dbm", m))?;
        check_n_values(&self.sweep_n).map_err(|m| err("sweep.n_values", m))?;
        Ok(())
    }

    pub fn system_params(&self, power_dbm: f64) -> SystemParams {
        SystemParams {
            weights: self.weights.clone(),
            sigma2: dbm_to_watts(self.sigma2_dbm),
            power: dbm_to_watts(power_dbm),
        }
    }

    /// Library setup for the configured system, optionally with a different
    /// power or surface size.
    pub fn setup(&self, power_dbm: f64, n: usize) -> Setup {
        Setup {
            n,
            m: self.m,
            k: self.k,
            system: self.system_params(power_dbm),
            geometry: self.geometry.clone(),
            rician: self.rician.clone(),
            hyper: self.hyper.clone(),
        }
    }

    /// The resolved configuration in the input format. Parsing the result
    /// gives back an equal configuration.
    pub fn to_toml(&self) -> String {
        fn f(v: f64) -> String {
            // Debug keeps the shortest round-trip form and always marks floats
            format!("{v:?}")
        }
        fn list(v: &[f64]) -> String {
            let items: Vec<String> = v.iter().map(|x| f(*x)).collect();
            format!("[{}]", items.join(", "))
        }
        fn point(p: Point2) -> String {
            list(&[p.x, p.y])
        }
        fn pathloss(p: PathlossModel) -> String {
            list(&[p.intercept_db, p.distance_slope, p.freq_slope])
        }
        let h = &self.hyper;
        let mut out = String::new();
        let _ = writeln!(out, "[system]");
        let _ = writeln!(out, "N = {}", self.n);
        let _ = writeln!(out, "M = {}", self.m);
        let _ = writeln!(out, "K = {}", self.k);
        let _ = writeln!(out, "power_dbm = {}", f(self.power_dbm));
        let _ = writeln!(out, "sigma2_dbm = {}", f(self.sigma2_dbm));
        let _ = writeln!(out, "weights = {}", list(&self.weights));
        let _ = writeln!(out, "\n[geometry]");
        let _ = writeln!(out, "bs = {}", point(self.geometry.bs_pos));
        let _ = writeln!(out, "ris = {}", point(self.geometry.ris_pos));
        let _ = writeln!(out, "user_center = {}", point(self.geometry.user_center));
        let _ = writeln!(out, "user_radius = {}", f(self.geometry.user_radius));
        let _ = writeln!(out, "carrier_hz = {}", f(self.geometry.carrier_freq));
        let _ = writeln!(
            out,
            "antenna_spacing = {}",
            f(self.geometry.antenna_spacing)
        );
        let _ = writeln!(out, "\n[rician]");
        let _ = writeln!(out, "kappa_br = {}", f(self.rician.kappa_br));
        let _ = writeln!(out, "kappa_ru = {}", f(self.rician.kappa_ru));
        let _ = writeln!(out, "los = {}", pathloss(self.rician.los));
        let _ = writeln!(out, "nlos = {}", pathloss(self.rician.nlos));
        let _ = writeln!(out, "\n[hyper]");
        let _ = writeln!(out, "n_outer = {}", h.n_outer);
        let _ = writeln!(out, "n_phase = {}", h.n_phase);
        let _ = writeln!(out, "n_precoder = {}", h.n_precoder);
        let _ = writeln!(out, "lr_phase = {}", f(h.lr_phase));
        let _ = writeln!(out, "lr_precoder = {}", f(h.lr_precoder));
        let _ = writeln!(out, "euler = {}", f(h.euler));
        let _ = writeln!(out, "phase_period = {}", h.phase_period);
        let _ = writeln!(out, "hidden = {}", h.hidden);
        let _ = writeln!(out, "pga_theta_step = {}", f(h.pga_theta_step));
        let _ = writeln!(out, "pga_precoder_step = {}", f(h.pga_precoder_step));
        let _ = writeln!(out, "\n[run]");
        let names: Vec<String> = self
            .variants
            .iter()
            .map(|v| format!("\"{}\"", v.name()))
            .collect();
        let _ = writeln!(out, "variants = [{}]", names.join(", "));
        let _ = writeln!(out, "n_realizations = {}", self.n_realizations);
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        let _ = writeln!(out, "\n[output]");
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(out, "dir = {}", Value::String(dir.display().to_string()));
        }
        let _ = writeln!(out, "prefix = {}", Value::String(self.prefix.clone()));
        let _ = writeln!(out, "\n[sweep]");
        let _ = writeln!(out, "powers_dbm = {}", list(&self.sweep_powers_dbm));
        let ns: Vec<String> = self.sweep_n.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "n_values = [{}]", ns.join(", "));
        out
    }
}

/// Parses variant names, rejecting unknown names and repeats.
pub fn parse_variants<S: AsRef<str>>(names: &[S]) -> Result<Vec<Variant>, String> {
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let name = name.as_ref().trim();
        let v = Variant::parse(name).ok_or_else(|| {
            let known: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown variant `{name}` (known: {})", known.join(", "))
        })?;
        if out.contains(&v) {
            return Err(format!("variant `{name}` listed twice"));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err("must name at least one variant".into());
    }
    Ok(out)
}

pub fn check_powers(powers: &[f64]) -> Result<(), String> {
    if powers.is_empty() {
        return Err("power list is empty".into());
    }
    if let Some(p) = powers.iter().find(|p| !p.is_finite()) {
        return Err(format!("power {p} is not finite"));
    }
    for (i, p) in powers.iter().enumerate() {
        if powers[..i].contains(p) {
            return Err(format!("duplicate power {p} dBm"));
        }
    }
    Ok(())
}

pub fn check_n_values(values: &[usize]) -> Result<(), String> {
    if values.is_empty() {
        return Err("N list is empty".into());
    }
    if values.contains(&0) {
        return Err("N must be >= 1".into());
    }
    for (i, n) in values.iter().enumerate() {
        if values[..i].contains(n) {
            return Err(format!("duplicate N {n}"));
        }
    }
    Ok(())
}

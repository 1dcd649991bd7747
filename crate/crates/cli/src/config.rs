//! Flat `key = value` scenario files with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use lapwave::{GaussianPacket, PotentialSpec, QuadratureSpec, SeriesPolicy, UnitSystem};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

pub type Entries = BTreeMap<String, String>;

const KNOWN_KEYS: &[&str] = &[
    "name",
    "potential",
    "d",
    "V",
    "hbar",
    "mass",
    "alpha",
    "x0",
    "p0",
    "packet_file",
    "method",
    "times",
    "x_min",
    "x_max",
    "n_points",
    "split_at",
    "k_max",
    "l_limits",
    "tau_quad_tol",
    "x_quad_tol",
    "conv_extend_threshold",
    "cond1_max",
    "cond2_max",
    "cond2_epsilon",
    "rel_tol",
    "abs_tol",
    "max_subdiv",
    "cn_dx",
    "cn_dt",
    "cn_x_min",
    "cn_x_max",
    "n_max",
    "output_dir",
];

/// Parses `key = value` lines. Text after `#` is ignored.
pub fn parse(text: &str) -> Result<Entries, ConfigError> {
    let mut out = Entries::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(format!("line {}: expected key = value, got {raw:?}", no + 1));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return err(format!("line {}: empty key", no + 1));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return err(format!("line {}: duplicate key {k}", no + 1));
        }
    }
    Ok(out)
}

/// Applies `key=value` overrides from the command line.
pub fn apply_overrides(entries: &mut Entries, overrides: &[String]) -> Result<(), ConfigError> {
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            return err(format!("override {o:?} is not key=value"));
        };
        entries.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mirror,
    StepExact,
    StepApprox,
    AsymExact,
    AsymApprox,
    OracleCn,
    OracleEigen,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mirror,
        Method::StepExact,
        Method::StepApprox,
        Method::AsymExact,
        Method::AsymApprox,
        Method::OracleCn,
        Method::OracleEigen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mirror => "mirror",
            Method::StepExact => "step_exact",
            Method::StepApprox => "step_approx",
            Method::AsymExact => "asym_exact",
            Method::AsymApprox => "asym_approx",
            Method::OracleCn => "oracle_cn",
            Method::OracleEigen => "oracle_eigen",
        }
    }

    fn supports(self, pot: &PotentialSpec) -> bool {
        match self {
            Method::Mirror | Method::OracleEigen => matches!(pot, PotentialSpec::InfiniteWell { .. }),
            Method::StepExact | Method::StepApprox => matches!(pot, PotentialSpec::Step { .. }),
            Method::AsymExact | Method::AsymApprox => {
                matches!(pot, PotentialSpec::AsymmetricWell { .. })
            }
            Method::OracleCn => true,
        }
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConfigError(format!("unknown method {s:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PacketSource {
    Gaussian(GaussianPacket),
    /// CSV file with columns `x, re, im`.
    File(PathBuf),
}

/// Crank–Nicolson settings; unset values are derived from the packet.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CnSettings {
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub potential: PotentialSpec,
    pub packet: PacketSource,
    pub method: Method,
    pub times: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub split_at: f64,
    pub units: UnitSystem,
    pub policy: SeriesPolicy,
    pub quad: QuadratureSpec,
    pub cn: CnSettings,
    pub n_max: usize,
    pub output_dir: Option<PathBuf>,
}

struct Reader<'a>(&'a Entries);

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => err(format!("{key} = {v:?} is not a finite number")),
            },
        }
    }

    fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64_opt(key)?
            .ok_or_else(|| ConfigError(format!("missing key {key}")))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| ConfigError(format!("{key} = {v:?} is not a non-negative integer"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| ConfigError(format!("{key}: cannot parse {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

impl Scenario {
    pub fn from_entries(e: &Entries) -> Result<Self, ConfigError> {
        if let Some(k) = e.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return err(format!("unknown key {k}"));
        }
        let r = Reader(e);
        let lib = |e: lapwave::Error| ConfigError(e.to_string());

        let units = UnitSystem::new(r.f64_or("hbar", 1.0)?, r.f64_or("mass", 1.0)?).map_err(lib)?;
        let potential = match r.raw("potential") {
            Some("well") | Some("infinite_well") => {
                PotentialSpec::infinite_well(r.f64_req("d")?).map_err(lib)?
            }
            Some("step") => PotentialSpec::step(r.f64_req("V")?).map_err(lib)?,
            Some("asym") | Some("asymmetric_well") => {
                PotentialSpec::asymmetric_well(r.f64_req("d")?, r.f64_req("V")?).map_err(lib)?
            }
            Some(other) => return err(format!("unknown potential {other:?}")),
            None => return err("missing key potential"),
        };
        let packet = match r.raw("packet_file") {
            Some(path) => {
                if ["alpha", "x0", "p0"].iter().any(|k| e.contains_key(*k)) {
                    return err("packet_file excludes alpha, x0 and p0");
                }
                PacketSource::File(PathBuf::from(path))
            }
            None => PacketSource::Gaussian(
                GaussianPacket::new(r.f64_req("alpha")?, r.f64_req("x0")?, r.f64_req("p0")?)
                    .map_err(lib)?,
            ),
        };
        let method: Method = r
            .raw("method")
            .ok_or_else(|| ConfigError("missing key method".into()))?
            .parse()?;

        let times: Vec<f64> = r.list("times")?.ok_or_else(|| ConfigError("missing key times".into()))?;
        if times.is_empty() {
            return err("times must not be empty");
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return err("times must be finite and non-negative");
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return err("times must be ascending");
        }

        let x_min = r.f64_req("x_min")?;
        let x_max = r.f64_req("x_max")?;
        if !(x_max > x_min) {
            return err("x_max must exceed x_min");
        }
        let n_points = r.usize_opt("n_points")?.unwrap_or(1001);
        if n_points < 2 {
            return err("n_points must be at least 2");
        }
        let split_default = match potential {
            PotentialSpec::InfiniteWell { d } => 0.5 * d,
            _ => 0.0,
        };
        let split_at = r.f64_or("split_at", split_default)?;

        let base = SeriesPolicy::default();
        let l_limits = match r.list::<usize>("l_limits")? {
            None => None,
            Some(v) if v.len() == 4 => Some([v[0], v[1], v[2], v[3]]),
            Some(_) => return err("l_limits needs four comma-separated integers"),
        };
        let policy = SeriesPolicy {
            k_max: r.usize_opt("k_max")?,
            l_limits,
            tau_quad_tol: r.f64_or("tau_quad_tol", base.tau_quad_tol)?,
            x_quad_tol: r.f64_or("x_quad_tol", base.x_quad_tol)?,
            conv_extend_threshold: r.f64_or("conv_extend_threshold", base.conv_extend_threshold)?,
            cond1_max: r.f64_or("cond1_max", base.cond1_max)?,
            cond2_max: r.f64_or("cond2_max", base.cond2_max)?,
            cond2_epsilon: r.f64_or("cond2_epsilon", base.cond2_epsilon)?,
        };
        policy.validate().map_err(lib)?;

        let qd = QuadratureSpec::default();
        let quad = QuadratureSpec::new(
            r.f64_or("rel_tol", qd.rel_tol)?,
            r.f64_or("abs_tol", qd.abs_tol)?,
            r.usize_opt("max_subdiv")?.unwrap_or(qd.max_subdiv),
        )
        .map_err(lib)?;

        let cn = CnSettings {
            dx: r.f64_opt("cn_dx")?,
            dt: r.f64_opt("cn_dt")?,
            x_min: r.f64_opt("cn_x_min")?,
            x_max: r.f64_opt("cn_x_max")?,
        };
        if cn.dx.is_some_and(|v| v <= 0.0) || cn.dt.is_some_and(|v| v <= 0.0) {
            return err("cn_dx and cn_dt must be positive");
        }

        let scenario = Scenario {
            name: r.raw("name").unwrap_or("scenario").to_string(),
            potential,
            packet,
            method,
            times,
            x_min,
            x_max,
            n_points,
            split_at,
            units,
            policy,
            quad,
            cn,
            n_max: r.usize_opt("n_max")?.unwrap_or(400),
            output_dir: r.raw("output_dir").map(PathBuf::from),
        };
        if scenario.name.is_empty() || scenario.name.contains(['/', '\\']) {
            return err("name must be a plain, non-empty file name");
        }
        scenario.check_method(method)?;
        Ok(scenario)
    }

    pub fn check_method(&self, m: Method) -> Result<(), ConfigError> {
        if !m.supports(&self.potential) {
            return err(format!(
                "method {m} does not apply to the {} potential",
                self.potential.name()
            ));
        }
        if m == Method::AsymApprox && self.x_max > 0.0 {
            return err("asym_approx is defined inside the well only; set x_max <= 0");
        }
        Ok(())
    }

    /// All parameters as `key = value` pairs, in the config file syntax.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("name", self.name.clone());
        match self.potential {
            PotentialSpec::InfiniteWell { d } => {
                put("potential", "well".into());
                put("d", num(d));
            }
            PotentialSpec::Step { v } => {
                put("potential", "step".into());
                put("V", num(v));
            }
            PotentialSpec::AsymmetricWell { d, v } => {
                put("potential", "asym".into());
                put("d", num(d));
                put("V", num(v));
            }
        }
        put("hbar", num(self.units.hbar()));
        put("mass", num(self.units.mass()));
        match &self.packet {
            PacketSource::Gaussian(g) => {
                put("alpha", num(g.alpha));
                put("x0", num(g.x0));
                put("p0", num(g.p0));
            }
            PacketSource::File(p) => put("packet_file", p.display().to_string()),
        }
        put("method", self.method.name().into());
        put("times", self.times.iter().map(|t| num(*t)).collect::<Vec<_>>().join(","));
        put("x_min", num(self.x_min));
        put("x_max", num(self.x_max));
        put("n_points", self.n_points.to_string());
        put("split_at", num(self.split_at));
        if let Some(k) = self.policy.k_max {
            put("k_max", k.to_string());
        }
        if let Some(l) = self.policy.l_limits {
            put("l_limits", l.map(|v| v.to_string()).join(","));
        }
        put("tau_quad_tol", num(self.policy.tau_quad_tol));
        put("x_quad_tol", num(self.policy.x_quad_tol));
        put("conv_extend_threshold", num(self.policy.conv_extend_threshold));
        put("cond1_max", num(self.policy.cond1_max));
        put("cond2_max", num(self.policy.cond2_max));
        put("cond2_epsilon", num(self.policy.cond2_epsilon));
        put("rel_tol", num(self.quad.rel_tol));
        put("abs_tol", num(self.quad.abs_tol));
        put("max_subdiv", self.quad.max_subdiv.to_string());
        for (k, v) in [
            ("cn_dx", self.cn.dx),
            ("cn_dt", self.cn.dt),
            ("cn_x_min", self.cn.x_min),
            ("cn_x_max", self.cn.x_max),
        ] {
            if let Some(v) = v {
                put(k, num(v));
            }
        }
        put("n_max", self.n_max.to_string());
        out
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

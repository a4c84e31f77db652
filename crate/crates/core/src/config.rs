//! Line-based scenario files (`key = value`, `#` comments, dotted keys) and
//! the built-in presets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::coupling::{core_ring_kernel, disc_kernel, CouplingSpec, ScalarMap};
use crate::error::{FrontError, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::weak::DEFAULT_MAX_ITER;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Circle,
    StarShaped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub kind: InitKind,
    pub kernel_points: Vec<[f64; 2]>,
    pub r0: f64,
}

impl InitConfig {
    /// Largest distance from the origin reached by the initial front.
    pub fn front_radius(&self) -> f64 {
        match self.kind {
            InitKind::Circle => self.r0,
            InitKind::StarShaped => {
                self.r0 + self.kernel_points.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelConfig {
    Disc { rho: f64, mass: f64 },
    CoreRing { rho: f64, core_mass: f64, ring_outer: f64, ring_mass: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingConfig {
    /// Spatially uniform speed independent of the occupation history.
    Constant { speed: f64 },
    Volume { beta: ScalarMap },
    Dislocation { kernel: KernelConfig, c1: f64 },
    FitzHughNagumo {
        alpha: ScalarMap,
        g_plus: ScalarMap,
        g_minus: ScalarMap,
        v0: f64,
        heat_safety: f64,
    },
}

impl CouplingConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            CouplingConfig::Constant { .. } => "constant",
            CouplingConfig::Volume { .. } => "volume",
            CouplingConfig::Dislocation { .. } => "dislocation",
            CouplingConfig::FitzHughNagumo { .. } => "fitzhugh_nagumo",
        }
    }

    pub fn build(&self, spec: GridSpec) -> Result<CouplingSpec> {
        Ok(match self {
            CouplingConfig::Constant { speed } => CouplingSpec::Volume {
                beta: ScalarMap::Constant(*speed),
            },
            CouplingConfig::Volume { beta } => CouplingSpec::Volume { beta: *beta },
            CouplingConfig::Dislocation { kernel, c1 } => {
                let c0 = match *kernel {
                    KernelConfig::Disc { rho, mass } => disc_kernel(spec, rho, mass)?,
                    KernelConfig::CoreRing {
                        rho,
                        core_mass,
                        ring_outer,
                        ring_mass,
                    } => core_ring_kernel(spec, rho, core_mass, ring_outer, ring_mass)?,
                };
                CouplingSpec::dislocation(c0, *c1)
            }
            CouplingConfig::FitzHughNagumo {
                alpha,
                g_plus,
                g_minus,
                v0,
                heat_safety,
            } => CouplingSpec::FitzHughNagumo {
                alpha: *alpha,
                g_plus: *g_plus,
                g_minus: *g_minus,
                v0: ScalarField::constant(spec, *v0),
                heat_safety: *heat_safety,
            },
        })
    }

    /// The speed as a function of enclosed area, when it depends on nothing
    /// else.
    pub fn area_law(&self) -> Option<ScalarMap> {
        match self {
            CouplingConfig::Constant { speed } => Some(ScalarMap::Constant(*speed)),
            CouplingConfig::Volume { beta } => Some(*beta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedKind {
    /// `𝟙_{u₀ ≥ 0}` held constant in time.
    Initial,
    Empty,
    Ball(f64),
}

impl fmt::Display for SeedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedKind::Initial => write!(f, "initial"),
            SeedKind::Empty => write!(f, "empty"),
            SeedKind::Ball(r) => write!(f, "ball({r})"),
        }
    }
}

impl FromStr for SeedKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        match s {
            "initial" => Ok(SeedKind::Initial),
            "empty" => Ok(SeedKind::Empty),
            _ => {
                let r = s
                    .strip_prefix("ball(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| format!("unknown seed `{s}` (expected initial, empty or ball(r))"))?;
                let r: f64 = r.trim().parse().map_err(|_| format!("bad ball radius in `{s}`"))?;
                if !(r > 0.0) {
                    return Err(format!("ball radius must be > 0, got {r}"));
                }
                Ok(SeedKind::Ball(r))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    RadiusOracle,
    InitialDisplacement,
    KeyEstimate,
    LowerGradient,
    Cone,
    Perimeter,
    BandMeasure,
    NonFattening,
    StarShape,
    ContinuousDependence,
    Uniqueness,
}

impl Check {
    pub const ALL: [Check; 11] = [
        Check::RadiusOracle,
        Check::InitialDisplacement,
        Check::KeyEstimate,
        Check::LowerGradient,
        Check::Cone,
        Check::Perimeter,
        Check::BandMeasure,
        Check::NonFattening,
        Check::StarShape,
        Check::ContinuousDependence,
        Check::Uniqueness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::RadiusOracle => "radius_oracle",
            Check::InitialDisplacement => "initial_displacement",
            Check::KeyEstimate => "key_estimate",
            Check::LowerGradient => "lower_gradient",
            Check::Cone => "cone",
            Check::Perimeter => "perimeter",
            Check::BandMeasure => "band_measure",
            Check::NonFattening => "non_fattening",
            Check::StarShape => "star_shape",
            Check::ContinuousDependence => "continuous_dependence",
            Check::Uniqueness => "uniqueness",
        }
    }

    /// Checks that need only a stored trajectory and its initial data.
    pub fn is_trajectory_only(self) -> bool {
        !matches!(
            self,
            Check::RadiusOracle | Check::ContinuousDependence | Check::Uniqueness | Check::StarShape
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| format!("unknown check `{}`", s.trim()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid_n: usize,
    pub grid_l: f64,
    pub init: InitConfig,
    pub coupling: CouplingConfig,
    pub gamma: f64,
    pub horizon: f64,
    /// Number of output intervals; snapshots at `kT/count`.
    pub output_count: usize,
    pub seeds: Vec<SeedKind>,
    /// Fixed-point tolerance; `4h²` when absent.
    pub probe_tol: Option<f64>,
    pub max_iter: usize,
    pub checks: Vec<Check>,
    pub output_dir: Option<PathBuf>,
    pub cfl_safety: f64,
    pub gamma_sweep: Vec<f64>,
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid_n, self.grid_l)
    }

    pub fn tolerance(&self) -> Result<f64> {
        let h = self.grid()?.spacing();
        Ok(self.probe_tol.unwrap_or(4.0 * h * h))
    }

    pub fn has_check(&self, c: Check) -> bool {
        self.checks.contains(&c)
    }

    /// Canonical text form; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("name", self.name.clone());
        kv("grid.n", self.grid_n.to_string());
        kv("grid.L", self.grid_l.to_string());
        kv(
            "init.kind",
            match self.init.kind {
                InitKind::Circle => "circle",
                InitKind::StarShaped => "star_shaped",
            }
            .into(),
        );
        if self.init.kind == InitKind::StarShaped {
            let pts: Vec<String> = self.init.kernel_points.iter().map(|p| format!("{},{}", p[0], p[1])).collect();
            kv("init.kernel_points", pts.join("; "));
        }
        kv("init.r0", self.init.r0.to_string());
        kv("coupling.kind", self.coupling.kind().into());
        match &self.coupling {
            CouplingConfig::Constant { speed } => kv("coupling.speed", speed.to_string()),
            CouplingConfig::Volume { beta } => kv("coupling.beta", beta.to_string()),
            CouplingConfig::Dislocation { kernel, c1 } => {
                match kernel {
                    KernelConfig::Disc { rho, mass } => {
                        kv("coupling.kernel", "disc".into());
                        kv("coupling.rho", rho.to_string());
                        kv("coupling.mass", mass.to_string());
                    }
                    KernelConfig::CoreRing {
                        rho,
                        core_mass,
                        ring_outer,
                        ring_mass,
                    } => {
                        kv("coupling.kernel", "core_ring".into());
                        kv("coupling.rho", rho.to_string());
                        kv("coupling.mass", core_mass.to_string());
                        kv("coupling.ring_outer", ring_outer.to_string());
                        kv("coupling.ring_mass", ring_mass.to_string());
                    }
                }
                kv("coupling.c1", c1.to_string());
            }
            CouplingConfig::FitzHughNagumo {
                alpha,
                g_plus,
                g_minus,
                v0,
                heat_safety,
            } => {
                kv("coupling.alpha", alpha.to_string());
                kv("coupling.g_plus", g_plus.to_string());
                kv("coupling.g_minus", g_minus.to_string());
                kv("coupling.v0", v0.to_string());
                kv("coupling.heat_safety", heat_safety.to_string());
            }
        }
        kv("gamma", self.gamma.to_string());
        kv("horizon", self.horizon.to_string());
        kv("output.count", self.output_count.to_string());
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        kv("probe.seeds", seeds.join(", "));
        if let Some(t) = self.probe_tol {
            kv("probe.tol", t.to_string());
        }
        kv("probe.max_iter", self.max_iter.to_string());
        let checks: Vec<&str> = self.checks.iter().map(|c| c.name()).collect();
        kv("checks", checks.join(", "));
        if let Some(d) = &self.output_dir {
            kv("output_dir", d.display().to_string());
        }
        kv("solver.cfl_safety", self.cfl_safety.to_string());
        let sweep: Vec<String> = self.gamma_sweep.iter().map(|g| g.to_string()).collect();
        kv("star.gamma_sweep", sweep.join(", "));
        s
    }
}

const KNOWN_KEYS: [&str; 30] = [
    "name",
    "grid.n",
    "grid.L",
    "init.kind",
    "init.kernel_points",
    "init.r0",
    "coupling.kind",
    "coupling.speed",
    "coupling.beta",
    "coupling.kernel",
    "coupling.rho",
    "coupling.mass",
    "coupling.ring_outer",
    "coupling.ring_mass",
    "coupling.c1",
    "coupling.alpha",
    "coupling.g_plus",
    "coupling.g_minus",
    "coupling.v0",
    "coupling.heat_safety",
    "gamma",
    "horizon",
    "output.count",
    "probe.seeds",
    "probe.tol",
    "probe.max_iter",
    "checks",
    "output_dir",
    "solver.cfl_safety",
    "star.gamma_sweep",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    used: std::collections::BTreeSet<String>,
}

fn err(line: usize, key: &str, message: impl Into<String>) -> FrontError {
    FrontError::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

impl Entries {
    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.used.insert(key.to_string());
        self.map.get(key).cloned()
    }

    fn required(&mut self, key: &str) -> Result<(usize, String)> {
        self.raw(key).ok_or_else(|| err(0, key, "missing required key"))
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(usize, T)>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(|x| Some((line, x)))
                .map_err(|e| err(line, key, format!("expected {what}, got `{v}` ({e})"))),
        }
    }

    fn number(&mut self, key: &str) -> Result<Option<(usize, f64)>> {
        match self.parse::<f64>(key, "a number")? {
            Some((line, v)) if !v.is_finite() => Err(err(line, key, "value must be finite")),
            other => Ok(other),
        }
    }

    fn required_number(&mut self, key: &str) -> Result<(usize, f64)> {
        self.number(key)?.ok_or_else(|| err(0, key, "missing required key"))
    }

    fn map_value(&mut self, key: &str) -> Result<Option<ScalarMap>> {
        Ok(self.parse::<ScalarMap>(key, "a map like affine(a,b)")?.map(|(_, m)| m))
    }

    fn required_map(&mut self, key: &str) -> Result<ScalarMap> {
        self.map_value(key)?.ok_or_else(|| err(0, key, "missing required key"))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<(usize, Vec<T>)>>
    where
        T::Err: fmt::Display,
    {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        let items = split_list(&v)
            .iter()
            .map(|s| s.parse::<T>().map_err(|e| err(line, key, format!("{e}"))))
            .collect::<Result<Vec<T>>>()?;
        Ok(Some((line, items)))
    }
}

/// Splits on commas outside parentheses; empty items are dropped.
fn split_list(v: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in v.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if ch == ',' && depth == 0 {
            out.push(cur.trim().to_string());
            cur.clear();
        } else {
            cur.push(ch);
        }
    }
    out.push(cur.trim().to_string());
    out.retain(|s| !s.is_empty());
    out
}

fn positive(line: usize, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(err(line, key, format!("{key} must be > 0")))
    }
}

fn nonnegative(line: usize, key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(err(line, key, format!("{key} must be >= 0")))
    }
}

fn parse_points(line: usize, v: &str) -> Result<Vec<[f64; 2]>> {
    let key = "init.kernel_points";
    let mut pts = Vec::new();
    for item in v.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let xy: Vec<&str> = item.split(',').map(str::trim).collect();
        if xy.len() != 2 {
            return Err(err(line, key, format!("point `{item}` must be `x,y`")));
        }
        let x: f64 = xy[0].parse().map_err(|_| err(line, key, format!("bad coordinate `{}`", xy[0])))?;
        let y: f64 = xy[1].parse().map_err(|_| err(line, key, format!("bad coordinate `{}`", xy[1])))?;
        pts.push([x, y]);
    }
    if pts.is_empty() {
        return Err(err(line, key, "at least one kernel point is required"));
    }
    Ok(pts)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(err(line, content, "expected `key = value`"));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return Err(err(line, k, "unknown key"));
        }
        if let Some((first, _)) = map.insert(k.to_string(), (line, v.to_string())) {
            return Err(err(line, k, format!("duplicate key (first set on line {first})")));
        }
    }
    let mut e = Entries {
        map,
        used: Default::default(),
    };

    let name = e.raw("name").map(|(_, v)| v).unwrap_or_else(|| "scenario".into());
    let (nl, n) = e
        .parse::<usize>("grid.n", "a positive integer")?
        .ok_or_else(|| err(0, "grid.n", "missing required key"))?;
    let (ll, grid_l) = e.required_number("grid.L")?;
    positive(ll, "grid.L", grid_l)?;
    let spec = GridSpec::new(n, grid_l).map_err(|x| err(nl, "grid.n", x.to_string()))?;

    let (kl, kind) = e.required("init.kind")?;
    let kind = match kind.as_str() {
        "circle" => InitKind::Circle,
        "star_shaped" => InitKind::StarShaped,
        other => return Err(err(kl, "init.kind", format!("unknown init kind `{other}` (circle, star_shaped)"))),
    };
    let (rl, r0) = e.required_number("init.r0")?;
    positive(rl, "init.r0", r0)?;
    let kernel_points = match (kind, e.raw("init.kernel_points")) {
        (InitKind::StarShaped, Some((line, v))) => parse_points(line, &v)?,
        (InitKind::StarShaped, None) => vec![[0.0, 0.0]],
        (InitKind::Circle, Some((line, _))) => {
            return Err(err(line, "init.kernel_points", "only used with init.kind = star_shaped"))
        }
        (InitKind::Circle, None) => Vec::new(),
    };
    let init = InitConfig { kind, kernel_points, r0 };
    let margin = 4.0 * spec.spacing();
    if init.front_radius() + margin >= grid_l {
        return Err(err(
            rl,
            "init.r0",
            format!("initial front radius {} does not fit the grid half-width {grid_l}", init.front_radius()),
        ));
    }

    let (cl, ckind) = e.required("coupling.kind")?;
    let coupling = match ckind.as_str() {
        "constant" => CouplingConfig::Constant {
            speed: e.required_number("coupling.speed")?.1,
        },
        "volume" => CouplingConfig::Volume {
            beta: e.required_map("coupling.beta")?,
        },
        "dislocation" => {
            let (kl, kernel_kind) = e.raw("coupling.kernel").unwrap_or((cl, "disc".into()));
            let (rl, rho) = e.required_number("coupling.rho")?;
            positive(rl, "coupling.rho", rho)?;
            let mass = e.required_number("coupling.mass")?.1;
            let kernel = match kernel_kind.as_str() {
                "disc" => KernelConfig::Disc { rho, mass },
                "core_ring" => {
                    let (ol, ring_outer) = e.required_number("coupling.ring_outer")?;
                    if ring_outer <= rho {
                        return Err(err(ol, "coupling.ring_outer", "coupling.ring_outer must exceed coupling.rho"));
                    }
                    KernelConfig::CoreRing {
                        rho,
                        core_mass: mass,
                        ring_outer,
                        ring_mass: e.required_number("coupling.ring_mass")?.1,
                    }
                }
                other => return Err(err(kl, "coupling.kernel", format!("unknown kernel `{other}` (disc, core_ring)"))),
            };
            CouplingConfig::Dislocation {
                kernel,
                c1: e.number("coupling.c1")?.map_or(0.0, |x| x.1),
            }
        }
        "fitzhugh_nagumo" => {
            let heat_safety = match e.number("coupling.heat_safety")? {
                Some((line, v)) if !(v > 0.0 && v <= 1.0) => {
                    return Err(err(line, "coupling.heat_safety", "coupling.heat_safety must lie in (0, 1]"))
                }
                Some((_, v)) => v,
                None => 0.5,
            };
            CouplingConfig::FitzHughNagumo {
                alpha: e.required_map("coupling.alpha")?,
                g_plus: e.required_map("coupling.g_plus")?,
                g_minus: e.required_map("coupling.g_minus")?,
                v0: e.number("coupling.v0")?.map_or(0.0, |x| x.1),
                heat_safety,
            }
        }
        other => {
            return Err(err(
                cl,
                "coupling.kind",
                format!("unknown coupling kind `{other}` (constant, volume, dislocation, fitzhugh_nagumo)"),
            ))
        }
    };

    let gamma = match e.number("gamma")? {
        Some((line, g)) => nonnegative(line, "gamma", g)?,
        None => 0.0,
    };
    let (hl, horizon) = e.required_number("horizon")?;
    nonnegative(hl, "horizon", horizon)?;
    let output_count = match e.parse::<usize>("output.count", "a positive integer")? {
        Some((line, 0)) => return Err(err(line, "output.count", "output.count must be >= 1")),
        Some((_, c)) => c,
        None => 10,
    };
    let seeds = match e.list::<SeedKind>("probe.seeds")? {
        Some((line, s)) if s.len() < 2 => return Err(err(line, "probe.seeds", "the probe needs at least 2 seeds")),
        Some((_, s)) => s,
        None => vec![SeedKind::Initial, SeedKind::Empty, SeedKind::Ball(r0)],
    };
    let h = spec.spacing();
    let probe_tol = match e.number("probe.tol")? {
        Some((line, t)) if t < h * h => {
            return Err(err(line, "probe.tol", format!("probe.tol must be >= h^2 = {}", h * h)))
        }
        other => other.map(|x| x.1),
    };
    let max_iter = match e.parse::<usize>("probe.max_iter", "a positive integer")? {
        Some((line, 0)) => return Err(err(line, "probe.max_iter", "probe.max_iter must be >= 1")),
        Some((_, m)) => m,
        None => DEFAULT_MAX_ITER,
    };
    let checks = match e.raw("checks") {
        Some((_, v)) if v.trim() == "all" => Check::ALL
            .into_iter()
            .filter(|c| {
                !matches!(c, Check::RadiusOracle | Check::StarShape) || (kind == InitKind::Circle && coupling.area_law().is_some())
            })
            .collect(),
        Some(_) => e.list::<Check>("checks")?.map(|x| x.1).unwrap_or_default(),
        None => Vec::new(),
    };
    let mut checks = checks;
    checks.sort();
    checks.dedup();
    let output_dir = e.raw("output_dir").map(|(_, v)| PathBuf::from(v));
    let cfl_safety = match e.number("solver.cfl_safety")? {
        Some((line, s)) if !(s > 0.0 && s <= 1.0) => {
            return Err(err(line, "solver.cfl_safety", "solver.cfl_safety must lie in (0, 1]"))
        }
        Some((_, s)) => s,
        None => 0.5,
    };
    let gamma_sweep = match e.list::<f64>("star.gamma_sweep")? {
        Some((line, s)) => {
            if let Some(g) = s.iter().find(|g| !(**g >= 0.0)) {
                return Err(err(line, "star.gamma_sweep", format!("sweep values must be >= 0, got {g}")));
            }
            s
        }
        None => vec![0.0, gamma],
    };

    for (k, (line, _)) in &e.map {
        if !e.used.contains(k) {
            return Err(err(*line, k, format!("not used with coupling.kind = {}", coupling.kind())));
        }
    }
    if checks.contains(&Check::RadiusOracle) && (kind != InitKind::Circle || coupling.area_law().is_none()) {
        return Err(err(0, "checks", "radius_oracle requires a circle with a constant or volume coupling"));
    }
    if checks.contains(&Check::StarShape) && coupling.area_law().is_none() {
        return Err(err(0, "checks", "star_shape requires a constant or volume coupling"));
    }
    Ok(ScenarioConfig {
        name,
        grid_n: n,
        grid_l,
        init,
        coupling,
        gamma,
        horizon,
        output_count,
        seeds,
        probe_tol,
        max_iter,
        checks,
        output_dir,
        cfl_safety,
        gamma_sweep,
    })
}

const PRESETS: [(&str, &str); 7] = [
    (
        "mcf-circle",
        "name = mcf-circle
grid.n = 201
grid.L = 1.5
init.kind = circle
init.r0 = 1.0
coupling.kind = constant
coupling.speed = 0
gamma = 1
horizon = 0.18
output.count = 12
checks = radius_oracle, initial_displacement, key_estimate, lower_gradient, cone, perimeter, band_measure, non_fattening
",
    ),
    (
        "constant-speed",
        "name = constant-speed
grid.n = 201
grid.L = 1.5
init.kind = circle
init.r0 = 0.5
coupling.kind = constant
coupling.speed = 1
gamma = 0
horizon = 0.4
output.count = 16
checks = radius_oracle, initial_displacement, key_estimate, lower_gradient, cone, perimeter, band_measure, non_fattening
",
    ),
    (
        "volume-flow",
        "name = volume-flow
grid.n = 201
grid.L = 1.5
init.kind = circle
init.r0 = 0.5
coupling.kind = volume
coupling.beta = affine(1, -1)
gamma = 0.05
horizon = 0.3
output.count = 12
star.gamma_sweep = 0, 0.02, 0.05, 0.1
checks = radius_oracle, initial_displacement, key_estimate, lower_gradient, cone, perimeter, band_measure, non_fattening, star_shape
",
    ),
    (
        "dislocation",
        "name = dislocation
grid.n = 161
grid.L = 1.5
init.kind = circle
init.r0 = 0.5
coupling.kind = dislocation
coupling.kernel = core_ring
coupling.rho = 0.15
coupling.mass = 1.3
coupling.ring_outer = 0.3
coupling.ring_mass = -0.3
coupling.c1 = 0.2
gamma = 0.1
horizon = 0.24
output.count = 24
checks = initial_displacement, key_estimate, lower_gradient, cone, perimeter, band_measure, non_fattening, continuous_dependence
",
    ),
    (
        "fitzhugh-nagumo",
        "name = fitzhugh-nagumo
grid.n = 129
grid.L = 1.5
init.kind = star_shaped
init.kernel_points = -0.15,0; 0.15,0
init.r0 = 0.4
coupling.kind = fitzhugh_nagumo
coupling.alpha = clamp_affine(0.8, 0.1, 0, 1)
coupling.g_plus = affine(1, -1)
coupling.g_minus = affine(0, -1)
coupling.v0 = 0
gamma = 0.05
horizon = 0.2
output.count = 10
checks = initial_displacement, key_estimate, lower_gradient, perimeter, non_fattening
",
    ),
    (
        "uniqueness-probe",
        "name = uniqueness-probe
grid.n = 161
grid.L = 1.5
init.kind = circle
init.r0 = 0.5
coupling.kind = dislocation
coupling.kernel = core_ring
coupling.rho = 0.15
coupling.mass = 1.3
coupling.ring_outer = 0.3
coupling.ring_mass = -0.3
coupling.c1 = 0.2
gamma = 0.1
horizon = 0.24
output.count = 24
probe.seeds = initial, empty, ball(0.5)
probe.max_iter = 8
checks = uniqueness
",
    ),
    (
        "verify-all",
        "name = verify-all
grid.n = 129
grid.L = 1.5
init.kind = circle
init.r0 = 0.5
coupling.kind = volume
coupling.beta = affine(1, -1)
gamma = 0.02
horizon = 0.3
output.count = 12
probe.seeds = initial, empty, ball(0.5)
star.gamma_sweep = 0, 0.02, 0.05
checks = all
",
    ),
];

pub fn list_presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let text = preset_text(name).ok_or_else(|| {
        FrontError::parameter(format!("unknown preset `{name}` (available: {})", list_presets().join(", ")))
    })?;
    parse_config(text)
}

//! Nonlocal speed laws driven by an occupation history `χ`, and the
//! distances `κ`, `κ̄` between histories.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{FrontError, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::solver::SpeedSchedule;

/// Scalar maps usable as `α`, `g±` and `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarMap {
    Affine { a: f64, b: f64 },
    ClampAffine { a: f64, b: f64, lo: f64, hi: f64 },
    Constant(f64),
}

impl ScalarMap {
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            ScalarMap::Affine { a, b } => a + b * r,
            ScalarMap::ClampAffine { a, b, lo, hi } => (a + b * r).clamp(lo, hi),
            ScalarMap::Constant(a) => a,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            ScalarMap::Affine { b, .. } | ScalarMap::ClampAffine { b, .. } => b.abs(),
            ScalarMap::Constant(_) => 0.0,
        }
    }

    /// `(inf, sup)` of the map over the real line.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            ScalarMap::Affine { a, b } if b == 0.0 => (a, a),
            ScalarMap::Affine { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ScalarMap::ClampAffine { a, b, lo, hi } if b == 0.0 => {
                let v = a.clamp(lo, hi);
                (v, v)
            }
            ScalarMap::ClampAffine { lo, hi, .. } => (lo, hi),
            ScalarMap::Constant(a) => (a, a),
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        match *self {
            ScalarMap::Affine { b, .. } | ScalarMap::ClampAffine { b, .. } => b >= 0.0,
            ScalarMap::Constant(_) => true,
        }
    }
}

impl fmt::Display for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScalarMap::Affine { a, b } => write!(f, "affine({a},{b})"),
            ScalarMap::ClampAffine { a, b, lo, hi } => write!(f, "clamp_affine({a},{b},{lo},{hi})"),
            ScalarMap::Constant(a) => write!(f, "constant({a})"),
        }
    }
}

impl FromStr for ScalarMap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| format!("expected name(args), got `{s}`"))?;
        if !s.ends_with(')') {
            return Err(format!("missing closing parenthesis in `{s}`"));
        }
        let name = s[..open].trim();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|e| format!("bad argument `{a}`: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        if args.iter().any(|a| !a.is_finite()) {
            return Err(format!("non-finite argument in `{s}`"));
        }
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(format!("{name} takes {n} arguments, got {}", args.len()))
            }
        };
        match name {
            "affine" => {
                arity(2)?;
                Ok(ScalarMap::Affine { a: args[0], b: args[1] })
            }
            "clamp_affine" => {
                arity(4)?;
                if args[2] > args[3] {
                    return Err(format!("clamp_affine needs lo <= hi, got {} > {}", args[2], args[3]));
                }
                Ok(ScalarMap::ClampAffine {
                    a: args[0],
                    b: args[1],
                    lo: args[2],
                    hi: args[3],
                })
            }
            "constant" => {
                arity(1)?;
                Ok(ScalarMap::Constant(args[0]))
            }
            other => Err(format!("unknown scalar map `{other}`")),
        }
    }
}

/// Time-indexed indicator fields, piecewise constant in time (each field
/// holds from its time to the next).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationHistory {
    times: Vec<f64>,
    fields: Vec<Arc<ScalarField>>,
}

impl OccupationHistory {
    pub fn new(times: Vec<f64>, fields: Vec<Arc<ScalarField>>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(FrontError::parameter(format!(
                "occupation history needs one field per time ({} times, {} fields)",
                times.len(),
                fields.len()
            )));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FrontError::parameter("history times must start at 0 and increase"));
        }
        for (t, f) in times.iter().zip(&fields) {
            fields[0].spec().ensure_same(f.spec())?;
            if f.values().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(FrontError::parameter(format!("occupation field at t={t} is not binary")));
            }
        }
        Ok(OccupationHistory { times, fields })
    }

    /// The same indicator at every time.
    pub fn constant(times: Vec<f64>, chi: ScalarField) -> Result<Self> {
        let f = Arc::new(chi);
        let fields = vec![f; times.len()];
        Self::new(times, fields)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Arc<ScalarField>] {
        &self.fields
    }

    pub fn spec(&self) -> &GridSpec {
        self.fields[0].spec()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn at(&self, t: f64) -> &ScalarField {
        &self.fields[self.index_at(t)]
    }
}

/// Indicator of `B̄(0, radius)` on the grid.
pub fn disc_indicator(spec: GridSpec, radius: f64) -> ScalarField {
    ScalarField::from_fn(spec, |p| if p[0].hypot(p[1]) <= radius { 1.0 } else { 0.0 })
}

/// `(1/|B|) 𝟙_{B(0,ρ)}` scaled to total discrete mass `mass`.
pub fn disc_kernel(spec: GridSpec, rho: f64, mass: f64) -> Result<ScalarField> {
    annulus_kernel(spec, -1.0, rho, mass)
}

fn annulus_kernel(spec: GridSpec, inner: f64, outer: f64, mass: f64) -> Result<ScalarField> {
    let h = spec.spacing();
    let inside = |p: [f64; 2]| {
        let r = p[0].hypot(p[1]);
        r > inner && r <= outer
    };
    let count = (0..spec.len()).filter(|&k| inside(spec.node_of_index(k))).count();
    if count == 0 {
        return Err(FrontError::parameter(format!(
            "kernel support ({inner}, {outer}] contains no grid node"
        )));
    }
    let value = mass / (count as f64 * h * h);
    Ok(ScalarField::from_fn(spec, |p| if inside(p) { value } else { 0.0 }))
}

/// Positive core of radius `rho` and mass `core_mass`, surrounded by a ring
/// `(rho, ring_outer]` of mass `ring_mass`.
pub fn core_ring_kernel(spec: GridSpec, rho: f64, core_mass: f64, ring_outer: f64, ring_mass: f64) -> Result<ScalarField> {
    if !(0.0 < rho && rho < ring_outer) {
        return Err(FrontError::parameter(format!(
            "core radius {rho} must be positive and below ring radius {ring_outer}"
        )));
    }
    let core = disc_kernel(spec, rho, core_mass)?;
    let ring = annulus_kernel(spec, rho, ring_outer, ring_mass)?;
    let values = core.values().iter().zip(ring.values()).map(|(a, b)| a + b).collect();
    ScalarField::new(spec, values)
}

/// `h² Σ |c0|`.
pub fn kernel_l1(c0: &ScalarField) -> f64 {
    let h = c0.spec().spacing();
    h * h * c0.values().iter().map(|v| v.abs()).sum::<f64>()
}

/// `(c0 ∗ χ)(x) = h² Σ_y c0(x − y) χ(y)` with the kernel centred on the
/// grid's centre node; kernel offsets falling outside the grid are dropped.
pub fn convolve_kernel(c0: &ScalarField, chi: &ScalarField) -> Result<ScalarField> {
    c0.spec().ensure_same(chi.spec())?;
    let binary = chi.values().iter().all(|&v| v == 0.0 || v == 1.0);
    Ok(if binary {
        convolve_runs(c0, chi)
    } else {
        convolve_sparse(c0, chi)
    })
}

fn convolve_sparse(c0: &ScalarField, chi: &ScalarField) -> ScalarField {
    let spec = *c0.spec();
    let n = spec.n() as isize;
    let m = spec.center() as isize;
    let h2 = spec.spacing() * spec.spacing();
    let taps: Vec<(isize, isize, f64)> = c0
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(k, &w)| ((k as isize % n) - m, (k as isize / n) - m, w))
        .collect();
    let cv = chi.values();
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(spec.n()).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for &(di, dj, w) in &taps {
                let (yi, yj) = (i as isize - di, j as isize - dj);
                if yi >= 0 && yi < n && yj >= 0 && yj < n {
                    s += w * cv[(yj * n + yi) as usize];
                }
            }
            *o = h2 * s;
        }
    });
    ScalarField::from_raw(spec, out)
}

/// Binary `χ`: each row of `χ` is a union of runs, and each kernel row is
/// summed over a run with a prefix-sum difference.
fn convolve_runs(c0: &ScalarField, chi: &ScalarField) -> ScalarField {
    let spec = *c0.spec();
    let n = spec.n();
    let m = spec.center() as isize;
    let h2 = spec.spacing() * spec.spacing();
    // prefix[r][q] = Σ_{p < q} c0[row r, column p]
    let kernel_rows: Vec<(isize, Vec<f64>)> = (0..n)
        .filter(|&r| c0.values()[r * n..(r + 1) * n].iter().any(|&w| w != 0.0))
        .map(|r| {
            let mut pre = vec![0.0; n + 1];
            for p in 0..n {
                pre[p + 1] = pre[p] + c0.values()[r * n + p];
            }
            (r as isize - m, pre)
        })
        .collect();
    let runs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|j| {
            let row = &chi.values()[j * n..(j + 1) * n];
            let mut rs = Vec::new();
            let mut i = 0;
            while i < n {
                if row[i] == 1.0 {
                    let s = i;
                    while i < n && row[i] == 1.0 {
                        i += 1;
                    }
                    rs.push((s, i));
                } else {
                    i += 1;
                }
            }
            rs
        })
        .collect();
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for (dj, pre) in &kernel_rows {
                let yj = j as isize - dj;
                if yj < 0 || yj >= n as isize {
                    continue;
                }
                for &(a, b) in &runs[yj as usize] {
                    // y in [a, b) ⇒ kernel column p = i - y + m in (i - b + m, i - a + m].
                    let lo = (i as isize - b as isize + m + 1).clamp(0, n as isize) as usize;
                    let hi = (i as isize - a as isize + m + 1).clamp(0, n as isize) as usize;
                    if hi > lo {
                        s += pre[hi] - pre[lo];
                    }
                }
            }
            *o = h2 * s;
        }
    });
    ScalarField::from_raw(spec, out)
}

/// `h² #{χ = 1}`: each node owns one cell.
pub fn occupied_area(chi: &ScalarField) -> f64 {
    let h = chi.spec().spacing();
    h * h * chi.values().iter().filter(|&&v| v >= 0.5).count() as f64
}

/// `h² Σ |χ₁ − χ₂|`.
pub fn kappa(chi1: &ScalarField, chi2: &ScalarField) -> Result<f64> {
    chi1.spec().ensure_same(chi2.spec())?;
    let h = chi1.spec().spacing();
    Ok(h * h
        * chi1
            .values()
            .iter()
            .zip(chi2.values())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `κ̄` at one point together with the bound `∫₀ᵗ min(1, κ(s)/(4π(t−s))) ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaBar {
    pub value: f64,
    pub bound: f64,
}

const KAPPA_BAR_PANELS: usize = 8;

/// Heat-kernel-weighted distance `∫₀ᵗ∫ G(x−y, t−s)|χ₁−χ₂|(y,s) dy ds`.
///
/// The Gaussian is renormalised by its infinite-lattice mass, so the slice
/// `s = t` reduces to the pointwise difference at the nearest node.
pub fn kappa_bar(h1: &OccupationHistory, h2: &OccupationHistory, x: [f64; 2], t: f64) -> Result<KappaBar> {
    if h1.times() != h2.times() {
        return Err(FrontError::shape("histories must share their time grid"));
    }
    h1.spec().ensure_same(h2.spec())?;
    if !(t >= 0.0) {
        return Err(FrontError::parameter(format!("t must be >= 0, got {t}")));
    }
    let spec = *h1.spec();
    if t == 0.0 {
        return Ok(KappaBar { value: 0.0, bound: 0.0 });
    }
    let diffs: Vec<ScalarField> = h1
        .fields()
        .iter()
        .zip(h2.fields())
        .map(|(a, b)| {
            let v = a.values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).collect();
            ScalarField::from_raw(spec, v)
        })
        .collect();
    let kappas: Vec<f64> = h1
        .fields()
        .iter()
        .zip(h2.fields())
        .map(|(a, b)| kappa(a, b))
        .collect::<Result<_>>()?;
    let value = green_time_integral(h1.times(), &diffs, x, t);
    let bound = time_quadrature(h1.times(), t, |k, s| {
        let tau = t - s;
        if tau > 0.0 {
            (kappas[k] / (4.0 * std::f64::consts::PI * tau)).min(1.0)
        } else {
            1.0
        }
    });
    Ok(KappaBar { value, bound })
}

/// Trapezoid rule on `[0, t]` split at the history times, with the density
/// index of the interval passed to `f`.
fn time_quadrature(times: &[f64], t: f64, f: impl Fn(usize, f64) -> f64) -> f64 {
    let mut breaks: Vec<f64> = times.iter().copied().filter(|&s| s < t).collect();
    breaks.push(t);
    let mut total = 0.0;
    for (k, w) in breaks.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let ds = (b - a) / KAPPA_BAR_PANELS as f64;
        for q in 0..=KAPPA_BAR_PANELS {
            let s = a + ds * q as f64;
            let wq = if q == 0 || q == KAPPA_BAR_PANELS { 0.5 * ds } else { ds };
            total += wq * f(k, s);
        }
    }
    total
}

/// `∫₀ᵗ h² Σ_y G(x−y, t−s) d(y, s) ds` for a density that is piecewise
/// constant in time (`densities[k]` on `[times[k], times[k+1])`).
pub fn green_time_integral(times: &[f64], densities: &[ScalarField], x: [f64; 2], t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    time_quadrature(times, t, |k, s| green_average(&densities[k], x, t - s))
}

/// `h² Σ_y G(x−y, τ) d(y)` normalised by the lattice mass of `G`; at
/// `τ = 0` it is `d` at the nearest node.
fn green_average(d: &ScalarField, x: [f64; 2], tau: f64) -> f64 {
    let spec = d.spec();
    let n = spec.n() as isize;
    let h = spec.spacing();
    let ci = ((x[0] + spec.half_extent()) / h).round() as isize;
    let cj = ((x[1] + spec.half_extent()) / h).round() as isize;
    let node = [spec.coord(ci.clamp(0, n - 1) as usize), spec.coord(cj.clamp(0, n - 1) as usize)];
    let off = [x[0] - node[0], x[1] - node[1]];
    if tau <= 1e-3 * h * h {
        if ci < 0 || ci >= n || cj < 0 || cj >= n {
            return 0.0;
        }
        return d.values()[(cj * n + ci) as usize];
    }
    let sigma = (2.0 * tau).sqrt();
    let reach = ((8.0 * sigma) / h).ceil() as isize + 1;
    let weights = |o: f64| -> Vec<f64> {
        (-reach..=reach)
            .map(|k| {
                let z = k as f64 * h - o;
                (-z * z / (4.0 * tau)).exp()
            })
            .collect()
    };
    let wx = weights(off[0]);
    let wy = weights(off[1]);
    let mass = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
    let mut s = 0.0;
    for (b, wyb) in (-reach..=reach).zip(&wy) {
        let j = cj + b;
        if j < 0 || j >= n {
            continue;
        }
        for (a, wxa) in (-reach..=reach).zip(&wx) {
            let i = ci + a;
            if i < 0 || i >= n {
                continue;
            }
            s += wxa * wyb * d.values()[(j * n + i) as usize];
        }
    }
    s / mass
}

/// Which speed law couples the front to its occupation history.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingSpec {
    /// `c = c0 ∗ χ + c1`.
    Dislocation { c0: ScalarField, c1: ScalarField },
    /// `c = α(v)`, `v_t − Δv = g⁺(v)χ + g⁻(v)(1 − χ)`, `v(0) = v0`.
    FitzHughNagumo {
        alpha: ScalarMap,
        g_plus: ScalarMap,
        g_minus: ScalarMap,
        v0: ScalarField,
        heat_safety: f64,
    },
    /// `c = β(ℒ²({χ = 1}))`, spatially constant.
    Volume { beta: ScalarMap },
}

impl CouplingSpec {
    pub fn dislocation(c0: ScalarField, c1: f64) -> Self {
        let spec = *c0.spec();
        CouplingSpec::Dislocation {
            c0,
            c1: ScalarField::constant(spec, c1),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CouplingSpec::Dislocation { .. } => "dislocation",
            CouplingSpec::FitzHughNagumo { .. } => "fitzhugh_nagumo",
            CouplingSpec::Volume { .. } => "volume",
        }
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        match self {
            CouplingSpec::Dislocation { c0, c1 } => {
                spec.ensure_same(c0.spec())?;
                spec.ensure_same(c1.spec())
            }
            CouplingSpec::FitzHughNagumo {
                g_plus,
                g_minus,
                v0,
                heat_safety,
                ..
            } => {
                spec.ensure_same(v0.spec())?;
                if !(*heat_safety > 0.0 && *heat_safety <= 1.0) {
                    return Err(FrontError::parameter(format!(
                        "heat safety must lie in (0, 1], got {heat_safety}"
                    )));
                }
                // g⁻ ≤ g⁺ on the reachable range of v.
                let (lo, hi) = (v0.min() - 10.0, v0.max() + 10.0);
                for k in 0..=200 {
                    let r = lo + (hi - lo) * k as f64 / 200.0;
                    if g_minus.eval(r) > g_plus.eval(r) + 1e-12 {
                        return Err(FrontError::parameter(format!("g_minus exceeds g_plus at v={r}")));
                    }
                }
                Ok(())
            }
            CouplingSpec::Volume { .. } => Ok(()),
        }
    }

    /// A-priori bound on `‖c‖∞` when one is available.
    pub fn speed_bound(&self, spec: &GridSpec) -> Option<f64> {
        match self {
            CouplingSpec::Dislocation { c0, c1 } => Some(kernel_l1(c0) + c1.max_abs()),
            CouplingSpec::FitzHughNagumo { alpha, .. } => {
                let (lo, hi) = alpha.range();
                let b = lo.abs().max(hi.abs());
                b.is_finite().then_some(b)
            }
            CouplingSpec::Volume { beta } => {
                let area = spec.domain_area();
                let b = beta.eval(0.0).abs().max(beta.eval(area).abs());
                Some(b)
            }
        }
    }

    /// Speed fields `c[χ](·, t_k)` at each history time.
    pub fn speed_schedule(&self, hist: &OccupationHistory) -> Result<SpeedSchedule> {
        self.validate(hist.spec())?;
        let fields: Vec<Arc<ScalarField>> = match self {
            CouplingSpec::Dislocation { .. } => hist
                .fields()
                .iter()
                .map(|chi| self.dislocation_speed(chi).map(Arc::new))
                .collect::<Result<_>>()?,
            CouplingSpec::Volume { .. } => hist
                .fields()
                .iter()
                .map(|chi| {
                    let c = self.volume_speed(chi)?;
                    Ok(Arc::new(ScalarField::constant(*chi.spec(), c)))
                })
                .collect::<Result<_>>()?,
            CouplingSpec::FitzHughNagumo { .. } => {
                let horizon = *hist.times().last().unwrap();
                let (_, sched) = self.fn_evolve(hist, horizon)?;
                return Ok(sched);
            }
        };
        SpeedSchedule::new(hist.times().to_vec(), fields)
    }

    pub fn dislocation_speed(&self, chi: &ScalarField) -> Result<ScalarField> {
        match self {
            CouplingSpec::Dislocation { c0, c1 } => {
                let conv = convolve_kernel(c0, chi)?;
                chi.spec().ensure_same(c1.spec())?;
                let v = conv.values().iter().zip(c1.values()).map(|(a, b)| a + b).collect();
                Ok(ScalarField::from_raw(*chi.spec(), v))
            }
            _ => Err(FrontError::parameter(format!("{} coupling has no dislocation speed", self.kind()))),
        }
    }

    pub fn volume_speed(&self, chi: &ScalarField) -> Result<f64> {
        match self {
            CouplingSpec::Volume { beta } => Ok(beta.eval(occupied_area(chi))),
            _ => Err(FrontError::parameter(format!("{} coupling has no volume speed", self.kind()))),
        }
    }

    /// Explicit heat stepping of `v` across the history; returns `v` at each
    /// history time and the speed schedule `α(v(t_k))`.
    pub fn fn_evolve(&self, hist: &OccupationHistory, horizon: f64) -> Result<(Vec<ScalarField>, SpeedSchedule)> {
        let CouplingSpec::FitzHughNagumo {
            alpha,
            g_plus,
            g_minus,
            v0,
            heat_safety,
        } = self
        else {
            return Err(FrontError::parameter(format!("{} coupling has no diffusion part", self.kind())));
        };
        hist.spec().ensure_same(v0.spec())?;
        let spec = *v0.spec();
        let h = spec.spacing();
        let dt_max = heat_safety * h * h / 4.0;
        let mut v = v0.clone();
        let mut vs = vec![v.clone()];
        let times = hist.times();
        let mut t = 0.0;
        for k in 1..times.len() {
            let target = times[k].min(horizon);
            let chi = &hist.fields()[k - 1];
            while t < target {
                let dt = if t + dt_max >= target - 1e-12 * target.max(1.0) { target - t } else { dt_max };
                v = heat_step(&v, chi, *g_plus, *g_minus, dt)?;
                t = if dt == target - t { target } else { t + dt };
            }
            vs.push(v.clone());
        }
        let fields = vs.iter().map(|v| Arc::new(v.map(|r| alpha.eval(r)))).collect();
        let sched = SpeedSchedule::new(times.to_vec(), fields)?;
        Ok((vs, sched))
    }
}

/// One explicit step of `v_t = Δv + g⁺(v)χ + g⁻(v)(1−χ)` with reflecting edges.
pub fn heat_step(v: &ScalarField, chi: &ScalarField, g_plus: ScalarMap, g_minus: ScalarMap, dt: f64) -> Result<ScalarField> {
    let spec = *v.spec();
    let h = spec.spacing();
    if dt > h * h / 4.0 * (1.0 + 1e-12) {
        return Err(FrontError::Stability(format!(
            "heat step dt = {dt} exceeds h²/4 = {}",
            h * h / 4.0
        )));
    }
    let n = spec.n();
    let vv = v.values();
    let cv = chi.values();
    let r = dt / (h * h);
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let k = j * n + i;
            let c = vv[k];
            let w = if i > 0 { vv[k - 1] } else { vv[k + 1] };
            let e = if i + 1 < n { vv[k + 1] } else { vv[k - 1] };
            let s = if j > 0 { vv[k - n] } else { vv[k + n] };
            let nn = if j + 1 < n { vv[k + n] } else { vv[k - n] };
            let x = cv[k];
            let src = g_plus.eval(c) * x + g_minus.eval(c) * (1.0 - x);
            *o = c + r * (w + e + s + nn - 4.0 * c) + dt * src;
        }
    });
    ScalarField::new(spec, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(c0: &ScalarField, chi: &ScalarField) -> ScalarField {
        let spec = *c0.spec();
        let n = spec.n() as isize;
        let m = spec.center() as isize;
        let h2 = spec.spacing() * spec.spacing();
        let mut out = vec![0.0; spec.len()];
        for xj in 0..n {
            for xi in 0..n {
                let mut s = 0.0;
                for yj in 0..n {
                    for yi in 0..n {
                        let (pi, pj) = (xi - yi + m, xj - yj + m);
                        if pi >= 0 && pi < n && pj >= 0 && pj < n {
                            s += c0.values()[(pj * n + pi) as usize] * chi.values()[(yj * n + yi) as usize];
                        }
                    }
                }
                out[(xj * n + xi) as usize] = h2 * s;
            }
        }
        ScalarField::new(spec, out).unwrap()
    }

    fn rel_err(a: &ScalarField, b: &ScalarField) -> f64 {
        let scale = b.max_abs().max(1e-300);
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn scalar_map_parsing() {
        assert_eq!("affine(1,-1)".parse::<ScalarMap>().unwrap(), ScalarMap::Affine { a: 1.0, b: -1.0 });
        assert_eq!(
            " clamp_affine(0, 2, -1, 1) ".parse::<ScalarMap>().unwrap(),
            ScalarMap::ClampAffine { a: 0.0, b: 2.0, lo: -1.0, hi: 1.0 }
        );
        assert_eq!("constant(0.5)".parse::<ScalarMap>().unwrap(), ScalarMap::Constant(0.5));
        assert!("affine(1)".parse::<ScalarMap>().is_err());
        assert!("cubic(1,2)".parse::<ScalarMap>().is_err());
        assert!("clamp_affine(0,1,2,1)".parse::<ScalarMap>().is_err());
        let m = ScalarMap::ClampAffine { a: 0.0, b: 2.0, lo: -1.0, hi: 1.0 };
        assert_eq!(m.eval(3.0), 1.0);
        assert_eq!(m.to_string().parse::<ScalarMap>().unwrap(), m);
    }

    #[test]
    fn disc_kernel_on_disc() {
        let spec = GridSpec::new(201, 1.5).unwrap();
        let c0 = disc_kernel(spec, 0.2, 1.0).unwrap();
        let chi = disc_indicator(spec, 0.6);
        let conv = convolve_kernel(&c0, &chi).unwrap();
        let v = conv.at(spec.center(), spec.center());
        assert!((v - 1.0).abs() < 0.01, "{v}");
        assert!((kernel_l1(&c0) - 1.0).abs() < 1e-12);
        let zero = convolve_kernel(&c0, &ScalarField::constant(spec, 0.0)).unwrap();
        assert!(zero.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn spike_kernel_is_identity() {
        let spec = GridSpec::new(33, 1.0).unwrap();
        let h = spec.spacing();
        let mut c0 = ScalarField::constant(spec, 0.0);
        let c = spec.index(spec.center(), spec.center());
        c0.values_mut()[c] = 1.0 / (h * h);
        let chi = disc_indicator(spec, 0.4);
        let conv = convolve_kernel(&c0, &chi).unwrap();
        assert_eq!(conv, brute(&c0, &chi));
        for (a, b) in conv.values().iter().zip(chi.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn fast_paths_match_brute_force() {
        let spec = GridSpec::new(33, 1.0).unwrap();
        let c0 = core_ring_kernel(spec, 0.15, 1.3, 0.3, -0.3).unwrap();
        let chi = ScalarField::from_fn(spec, |p| if (p[0] - 0.2).abs() + p[1].abs() < 0.5 { 1.0 } else { 0.0 });
        let b = brute(&c0, &chi);
        assert!(rel_err(&convolve_kernel(&c0, &chi).unwrap(), &b) < 1e-12);
        assert!(rel_err(&convolve_sparse(&c0, &chi), &b) < 1e-12);
        let smooth = chi.map(|v| 0.3 + 0.5 * v);
        assert!(rel_err(&convolve_kernel(&c0, &smooth).unwrap(), &brute(&c0, &smooth)) < 1e-12);
    }

    #[test]
    fn convolution_is_linear_and_bounded() {
        let spec = GridSpec::new(65, 1.0).unwrap();
        let c0 = core_ring_kernel(spec, 0.15, 1.3, 0.3, -0.3).unwrap();
        let a = disc_indicator(spec, 0.3);
        let b = ScalarField::from_fn(spec, |p| if p[0] > 0.5 { 1.0 } else { 0.0 });
        let ab = ScalarField::new(spec, a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect()).unwrap();
        let ca = convolve_kernel(&c0, &a).unwrap();
        let cb = convolve_kernel(&c0, &b).unwrap();
        let cab = convolve_kernel(&c0, &ab).unwrap();
        for k in 0..spec.len() {
            assert!((ca.values()[k] + cb.values()[k] - cab.values()[k]).abs() < 1e-12);
        }
        assert!(ca.max_abs() <= kernel_l1(&c0) + 1e-12);
    }

    #[test]
    fn dislocation_speed_cases() {
        let spec = GridSpec::new(65, 1.0).unwrap();
        let flat = CouplingSpec::dislocation(ScalarField::constant(spec, 0.0), 1.0);
        let c = flat.dislocation_speed(&disc_indicator(spec, 0.3)).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.0));

        let zero_mass = core_ring_kernel(spec, 0.15, 0.3, 0.3, -0.3).unwrap();
        let cp = CouplingSpec::dislocation(zero_mass.clone(), 0.2);
        let c = cp.dislocation_speed(&ScalarField::constant(spec, 1.0)).unwrap();
        let v = c.at(spec.center(), spec.center());
        assert!((v - 0.2).abs() < 1e-12, "{v}");
        assert!(c.max_abs() <= kernel_l1(&zero_mass) + 0.2 + 1e-12);

        let g = GridSpec::new(201, 1.5).unwrap();
        let k = disc_kernel(g, 0.2, 1.0).unwrap();
        let chi = disc_indicator(g, 0.6);
        let conv = convolve_kernel(&k, &chi).unwrap().at(g.center(), g.center());
        let sp = CouplingSpec::dislocation(k, 0.2).dislocation_speed(&chi).unwrap();
        assert!((sp.at(g.center(), g.center()) - conv - 0.2).abs() < 1e-12);
    }

    #[test]
    fn volume_speed_cases() {
        let spec = GridSpec::new(401, 1.0).unwrap();
        let vol = CouplingSpec::Volume { beta: ScalarMap::Affine { a: 1.0, b: -1.0 } };
        let c = vol.volume_speed(&disc_indicator(spec, 0.5)).unwrap();
        let exact = 1.0 - std::f64::consts::PI / 4.0;
        assert!((c - exact).abs() < 0.005 * exact, "{c}");
        let aff = CouplingSpec::Volume { beta: ScalarMap::Affine { a: 0.3, b: 2.0 } };
        assert_eq!(aff.volume_speed(&ScalarField::constant(spec, 0.0)).unwrap(), 0.3);
        let none = CouplingSpec::Volume { beta: ScalarMap::Constant(0.0) };
        assert_eq!(none.volume_speed(&disc_indicator(spec, 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn volume_speed_monotone_iff_beta_monotone() {
        let spec = GridSpec::new(101, 1.0).unwrap();
        let up = CouplingSpec::Volume { beta: ScalarMap::Affine { a: 0.0, b: 1.0 } };
        let down = CouplingSpec::Volume { beta: ScalarMap::Affine { a: 0.0, b: -1.0 } };
        let radii = [0.1, 0.2, 0.3, 0.4, 0.5];
        let su: Vec<f64> = radii.iter().map(|&r| up.volume_speed(&disc_indicator(spec, r)).unwrap()).collect();
        let sd: Vec<f64> = radii.iter().map(|&r| down.volume_speed(&disc_indicator(spec, r)).unwrap()).collect();
        assert!(su.windows(2).all(|w| w[1] > w[0]));
        assert!(sd.windows(2).all(|w| w[1] < w[0]));
    }

    fn fn_spec(v0: ScalarField, gp: ScalarMap, gm: ScalarMap, alpha: ScalarMap) -> CouplingSpec {
        CouplingSpec::FitzHughNagumo {
            alpha,
            g_plus: gp,
            g_minus: gm,
            v0,
            heat_safety: 0.5,
        }
    }

    #[test]
    fn fn_evolve_cases() {
        let spec = GridSpec::new(65, 1.0).unwrap();
        let times = vec![0.0, 0.05, 0.1];
        let hist = OccupationHistory::constant(times.clone(), disc_indicator(spec, 0.3)).unwrap();
        let alpha = ScalarMap::Affine { a: 0.1, b: 1.0 };
        let still = fn_spec(ScalarField::constant(spec, 0.3), ScalarMap::Constant(0.0), ScalarMap::Constant(0.0), alpha);
        let (vs, sched) = still.fn_evolve(&hist, 0.1).unwrap();
        for v in &vs {
            assert!(v.values().iter().all(|&x| (x - 0.3).abs() < 1e-15));
        }
        assert!((sched.at(0.07).values()[0] - 0.4).abs() < 1e-15);

        let ones = OccupationHistory::constant(times.clone(), ScalarField::constant(spec, 1.0)).unwrap();
        let uniform = fn_spec(ScalarField::constant(spec, 0.0), ScalarMap::Constant(1.0), ScalarMap::Constant(0.0), alpha);
        let (vs, _) = uniform.fn_evolve(&ones, 0.1).unwrap();
        for (t, v) in times.iter().zip(&vs) {
            assert!(v.values().iter().all(|&x| (x - t).abs() < 1e-8));
        }

        let bump = ScalarField::from_fn(spec, |p| (-(p[0] * p[0] + p[1] * p[1]) / 0.02).exp());
        let heat = fn_spec(bump, ScalarMap::Constant(0.0), ScalarMap::Constant(0.0), alpha);
        let fine = OccupationHistory::constant((0..=10).map(|k| 0.01 * k as f64).collect(), disc_indicator(spec, 0.3)).unwrap();
        let (vs, _) = heat.fn_evolve(&fine, 0.1).unwrap();
        let maxes: Vec<f64> = vs.iter().map(|v| v.max()).collect();
        assert!(maxes.windows(2).all(|w| w[1] < w[0]), "{maxes:?}");
    }

    #[test]
    fn fn_evolve_respects_source_bounds_and_order() {
        let spec = GridSpec::new(65, 1.0).unwrap();
        let times: Vec<f64> = (0..=8).map(|k| 0.025 * k as f64).collect();
        let v0 = ScalarField::from_fn(spec, |p| 0.2 * p[0]);
        let gp = ScalarMap::ClampAffine { a: 1.0, b: -1.0, lo: -0.5, hi: 1.0 };
        let gm = ScalarMap::ClampAffine { a: -0.5, b: -1.0, lo: -1.0, hi: 0.5 };
        let sys = fn_spec(v0.clone(), gp, gm, ScalarMap::Affine { a: 0.0, b: 1.0 });
        let small = OccupationHistory::constant(times.clone(), disc_indicator(spec, 0.3)).unwrap();
        let large = OccupationHistory::constant(times.clone(), disc_indicator(spec, 0.5)).unwrap();
        let (vs_small, _) = sys.fn_evolve(&small, 0.2).unwrap();
        let (vs_large, _) = sys.fn_evolve(&large, 0.2).unwrap();
        let (g_lo, g_hi) = (-1.0f64, 1.0f64);
        for ((t, a), b) in times.iter().zip(&vs_small).zip(&vs_large) {
            assert!(a.min() >= v0.min() + t * g_lo.min(0.0) - 1e-12);
            assert!(a.max() <= v0.max() + t * g_hi.max(0.0) + 1e-12);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!(x <= y, "order lost at t={t}");
            }
        }
    }

    #[test]
    fn fn_rejects_crossed_sources() {
        let spec = GridSpec::new(33, 1.0).unwrap();
        let sys = fn_spec(
            ScalarField::constant(spec, 0.0),
            ScalarMap::Constant(0.0),
            ScalarMap::Constant(1.0),
            ScalarMap::Constant(1.0),
        );
        assert!(sys.validate(&spec).is_err());
    }

    #[test]
    fn kappa_cases() {
        let spec = GridSpec::new(401, 1.0).unwrap();
        let a = disc_indicator(spec, 0.5);
        let b = disc_indicator(spec, 0.6);
        assert_eq!(kappa(&a, &a).unwrap(), 0.0);
        let k = kappa(&a, &b).unwrap();
        let exact = std::f64::consts::PI * (0.36 - 0.25);
        assert!((k - exact).abs() < 0.01 * exact, "{k}");
        let l = ScalarField::from_fn(spec, |p| if (p[0] + 0.6).hypot(p[1]) <= 0.3 { 1.0 } else { 0.0 });
        let r = ScalarField::from_fn(spec, |p| if (p[0] - 0.6).hypot(p[1]) <= 0.3 { 1.0 } else { 0.0 });
        let k = kappa(&l, &r).unwrap();
        let exact = 2.0 * std::f64::consts::PI * 0.09;
        assert!((k - exact).abs() < 0.01 * exact, "{k}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kappa_is_a_metric(ra in 0.0f64..0.8, rb in 0.0f64..0.8, rc in 0.0f64..0.8, sx in -0.3f64..0.3) {
            let spec = GridSpec::new(33, 1.0).unwrap();
            let a = disc_indicator(spec, ra);
            let b = ScalarField::from_fn(spec, |p| if (p[0] - sx).hypot(p[1]) <= rb { 1.0 } else { 0.0 });
            let c = disc_indicator(spec, rc);
            let ab = kappa(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, kappa(&b, &a).unwrap());
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(kappa(&a, &c).unwrap() <= ab + kappa(&b, &c).unwrap() + 1e-12);
        }
    }

    #[test]
    fn kappa_bar_cases() {
        let spec = GridSpec::new(65, 1.0).unwrap();
        let times: Vec<f64> = (0..=4).map(|k| 0.025 * k as f64).collect();
        let a = OccupationHistory::constant(times.clone(), disc_indicator(spec, 0.3)).unwrap();
        let z = kappa_bar(&a, &a, [0.1, 0.0], 0.1).unwrap();
        assert_eq!(z.value, 0.0);

        let ones = OccupationHistory::constant(times.clone(), ScalarField::constant(spec, 1.0)).unwrap();
        let zeros = OccupationHistory::constant(times.clone(), ScalarField::constant(spec, 0.0)).unwrap();
        // Short enough that the Gaussian mass stays inside the domain.
        let full = kappa_bar(&ones, &zeros, [0.0, 0.0], 0.02).unwrap();
        assert!((full.value - 0.02).abs() < 1e-6, "{full:?}");
        assert!(full.value <= full.bound + 1e-12);
        let sym = kappa_bar(&zeros, &ones, [0.0, 0.0], 0.02).unwrap();
        assert_eq!(full.value, sym.value);

        let patch = OccupationHistory::constant(
            times,
            ScalarField::from_fn(spec, |p| if (p[0] - 0.8).hypot(p[1] - 0.8) < 0.1 { 1.0 } else { 0.0 }),
        )
        .unwrap();
        let far = kappa_bar(&patch, &zeros, [-0.5, -0.5], 0.02).unwrap();
        assert!(far.value <= 1e-6, "{far:?}");
    }

    #[test]
    fn kappa_bar_never_exceeds_elapsed_time() {
        let spec = GridSpec::new(65, 1.0).unwrap();
        let times: Vec<f64> = (0..=4).map(|k| 0.05 * k as f64).collect();
        let fields: Vec<Arc<ScalarField>> = times
            .iter()
            .map(|t| Arc::new(disc_indicator(spec, 0.2 + t)))
            .collect();
        let a = OccupationHistory::new(times.clone(), fields).unwrap();
        let b = OccupationHistory::constant(times, disc_indicator(spec, 0.25)).unwrap();
        for t in [0.03, 0.1, 0.2] {
            for x in [[0.0, 0.0], [0.25, 0.0], [0.5, 0.3]] {
                let k = kappa_bar(&a, &b, x, t).unwrap();
                assert!(k.value >= 0.0 && k.value <= t + 1e-12, "{k:?}");
            }
        }
    }
}

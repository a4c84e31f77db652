//! Admissible initial data: star-shaped fronts, the interior-displacement
//! condition along a direction field, the push maps `x + λν(x)` and the
//! truncation `Ψ`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{FrontError, Result};
use crate::grid::{lipschitz_seminorm, local_derivatives, GridSpec, ScalarField};

/// Band half-widths tried in order when certifying initial data.
pub const DELTA0_LADDER: [f64; 3] = [0.2, 0.1, 0.05];
/// Number of step sizes sampled in `(0, λ₀]` during certification.
pub const CERTIFY_LAMBDA_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    /// `ν(x) = -x`.
    Radial,
    /// Smoothed gradient of the initial data.
    Gradient,
    /// User-sampled field.
    Custom,
}

impl fmt::Display for DirectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectionKind::Radial => "radial",
            DirectionKind::Gradient => "gradient",
            DirectionKind::Custom => "custom",
        })
    }
}

impl FromStr for DirectionKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "radial" => Ok(DirectionKind::Radial),
            "gradient" => Ok(DirectionKind::Gradient),
            "custom" => Ok(DirectionKind::Custom),
            other => Err(format!("unknown direction kind `{other}`")),
        }
    }
}

/// Two-component vector field `ν` sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    pub kind: DirectionKind,
    pub x: ScalarField,
    pub y: ScalarField,
    /// `‖ν‖∞` over the region where the field is used.
    pub sup_norm: f64,
    /// `‖Dν‖∞` (spectral norm of the finite-difference Jacobian).
    pub lip_norm: f64,
}

impl DirectionField {
    pub fn radial(spec: GridSpec) -> Self {
        let x = ScalarField::from_fn(spec, |p| -p[0]);
        let y = ScalarField::from_fn(spec, |p| -p[1]);
        Self::with_norms(DirectionKind::Radial, x, y, None)
    }

    pub fn custom(x: ScalarField, y: ScalarField) -> Result<Self> {
        x.spec().ensure_same(y.spec())?;
        Ok(Self::with_norms(DirectionKind::Custom, x, y, None))
    }

    /// `Du₀` smoothed by a Gaussian of standard deviation `2h`.
    pub fn gradient(u0: &ScalarField) -> Self {
        let spec = *u0.spec();
        let n = spec.n();
        let mut gx = vec![0.0; spec.len()];
        let mut gy = vec![0.0; spec.len()];
        for j in 0..n {
            for i in 0..n {
                let d = local_derivatives(u0.values(), &spec, i, j);
                gx[j * n + i] = d.ux;
                gy[j * n + i] = d.uy;
            }
        }
        let x = gaussian_blur(&ScalarField::from_raw(spec, gx), 2.0);
        let y = gaussian_blur(&ScalarField::from_raw(spec, gy), 2.0);
        Self::with_norms(DirectionKind::Gradient, x, y, None)
    }

    fn with_norms(kind: DirectionKind, x: ScalarField, y: ScalarField, mask: Option<&[bool]>) -> Self {
        let mut field = DirectionField {
            kind,
            x,
            y,
            sup_norm: 0.0,
            lip_norm: 0.0,
        };
        let (s, l) = field.estimate_norms(mask);
        field.sup_norm = s;
        field.lip_norm = l;
        field
    }

    /// Re-estimates `(‖ν‖∞, ‖Dν‖∞)` over the masked nodes (all nodes if `None`).
    pub fn estimate_norms(&self, mask: Option<&[bool]>) -> (f64, f64) {
        let spec = *self.x.spec();
        let n = spec.n();
        let mut sup = 0.0f64;
        let mut lip = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                if let Some(m) = mask {
                    if !m[k] {
                        continue;
                    }
                }
                sup = sup.max(self.x.values()[k].hypot(self.y.values()[k]));
                let dx = local_derivatives(self.x.values(), &spec, i, j);
                let dy = local_derivatives(self.y.values(), &spec, i, j);
                lip = lip.max(spectral_norm(dx.ux, dx.uy, dy.ux, dy.uy));
            }
        }
        (sup, lip)
    }

    /// Restricts the recorded norms to the masked region.
    pub fn restrict_norms(&mut self, mask: &[bool]) {
        let (s, l) = self.estimate_norms(Some(mask));
        self.sup_norm = s;
        self.lip_norm = l;
    }

    /// `ν(p)`; exact for the radial kind, bilinear otherwise (zero outside).
    pub fn at(&self, p: [f64; 2]) -> [f64; 2] {
        match self.kind {
            DirectionKind::Radial => [-p[0], -p[1]],
            _ => [self.x.interpolate_or(p, 0.0), self.y.interpolate_or(p, 0.0)],
        }
    }

    #[inline]
    pub fn at_node(&self, k: usize) -> [f64; 2] {
        [self.x.values()[k], self.y.values()[k]]
    }
}

fn spectral_norm(a: f64, b: f64, c: f64, d: f64) -> f64 {
    // Largest singular value of [[a, b], [c, d]].
    let s1 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    ((s1 + disc) * 0.5).sqrt()
}

fn gaussian_blur(f: &ScalarField, sigma_cells: f64) -> ScalarField {
    let spec = *f.spec();
    let n = spec.n();
    let radius = (3.0 * sigma_cells).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma_cells * sigma_cells)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let clampi = |v: isize| v.clamp(0, n as isize - 1) as usize;
    let src = f.values();
    let mut tmp = vec![0.0; spec.len()];
    for j in 0..n {
        for i in 0..n {
            let mut s = 0.0;
            for (w, k) in weights.iter().zip(-radius..=radius) {
                s += w * src[j * n + clampi(i as isize + k)];
            }
            tmp[j * n + i] = s;
        }
    }
    let mut out = vec![0.0; spec.len()];
    for j in 0..n {
        for i in 0..n {
            let mut s = 0.0;
            for (w, k) in weights.iter().zip(-radius..=radius) {
                s += w * tmp[clampi(j as isize + k) * n + i];
            }
            out[j * n + i] = s;
        }
    }
    ScalarField::from_raw(spec, out)
}

/// Initial level-set data with its certified constants.
#[derive(Debug, Clone, PartialEq)]
pub struct InitCondition {
    pub u0: ScalarField,
    /// Support radius: `u0 = -1` outside `B(0, r0_support)`.
    pub r0_support: f64,
    pub delta0: f64,
    pub eta0: f64,
    pub lambda0: f64,
    pub nu: DirectionField,
}

impl InitCondition {
    /// `‖Du₀‖∞` estimated by central differences.
    pub fn grad_sup(&self) -> f64 {
        lipschitz_seminorm(&self.u0, f64::INFINITY)
    }

    /// Default step bound `λ̄ = min(λ₀/2, δ₀/(4η₀))`.
    pub fn lambda_bar(&self) -> f64 {
        let mut lb = 0.5 * self.lambda0;
        if self.eta0 > 0.0 {
            lb = lb.min(self.delta0 / (4.0 * self.eta0));
        }
        lb
    }

    pub fn spec(&self) -> &GridSpec {
        self.u0.spec()
    }

    /// Mask of the band `{|u0| <= delta0}`.
    pub fn band_mask(&self) -> Vec<bool> {
        self.u0.values().iter().map(|v| v.abs() <= self.delta0).collect()
    }

    pub fn header_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("R0={}\n", self.r0_support));
        s.push_str(&format!("delta0={}\n", self.delta0));
        s.push_str(&format!("eta0={}\n", self.eta0));
        s.push_str(&format!("lambda0={}\n", self.lambda0));
        s.push_str(&format!("nu.kind={}\n", self.nu.kind));
        s.push_str(&format!("nu.sup_norm={}\n", self.nu.sup_norm));
        s.push_str(&format!("nu.lip_norm={}\n", self.nu.lip_norm));
        s
    }

    /// Writes `u0.txt`, `init.txt` and, for custom fields, `nu_x.txt`/`nu_y.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.u0.save(&dir.join("u0.txt"))?;
        fs::write(dir.join("init.txt"), self.header_text())?;
        if self.nu.kind == DirectionKind::Custom {
            self.nu.x.save(&dir.join("nu_x.txt"))?;
            self.nu.y.save(&dir.join("nu_y.txt"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let u0 = ScalarField::load(&dir.join("u0.txt"))?;
        let header_path = dir.join("init.txt");
        let text = fs::read_to_string(&header_path)?;
        let kv = parse_key_values(&text);
        let get = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| FrontError::format(&header_path, format!("missing key {k}")))?
                .parse::<f64>()
                .map_err(|e| FrontError::format(&header_path, format!("{k}: {e}")))
        };
        let kind: DirectionKind = kv
            .get("nu.kind")
            .ok_or_else(|| FrontError::format(&header_path, "missing key nu.kind"))?
            .parse()
            .map_err(|e: String| FrontError::format(&header_path, e))?;
        let mut nu = match kind {
            DirectionKind::Radial => DirectionField::radial(*u0.spec()),
            DirectionKind::Gradient => DirectionField::gradient(&u0),
            DirectionKind::Custom => DirectionField::custom(
                ScalarField::load(&dir.join("nu_x.txt"))?,
                ScalarField::load(&dir.join("nu_y.txt"))?,
            )?,
        };
        nu.sup_norm = get("nu.sup_norm")?;
        nu.lip_norm = get("nu.lip_norm")?;
        Ok(InitCondition {
            u0,
            r0_support: get("R0")?,
            delta0: get("delta0")?,
            eta0: get("eta0")?,
            lambda0: get("lambda0")?,
            nu,
        })
    }
}

pub(crate) fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                return None;
            }
            let (k, v) = l.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Union of the convex hulls of `B̄(0, r0)` with each kernel point.
struct StarShape {
    points: Vec<[f64; 2]>,
    r0: f64,
}

impl StarShape {
    /// `min_α |p - αx| - (1-α) r0`, non-positive iff `p` lies in the hull of
    /// the ball and `x`.
    fn hull_gap(&self, x: [f64; 2], p: [f64; 2]) -> f64 {
        let f = |a: f64| (p[0] - a * x[0]).hypot(p[1] - a * x[1]) - (1.0 - a) * self.r0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..80 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if f(m1) <= f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        f(0.5 * (lo + hi)).min(f(0.0)).min(f(1.0))
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        self.points.iter().any(|&x| self.hull_gap(x, p) <= 0.0)
    }

    fn strictly_inside_other(&self, skip: usize, p: [f64; 2]) -> bool {
        self.points
            .iter()
            .enumerate()
            .any(|(k, &x)| k != skip && self.hull_gap(x, p) < -1e-9)
    }

    /// Closed boundary of the hull of `B̄(0, r0)` and `x`, sampled at `step`.
    fn hull_boundary(&self, x: [f64; 2], step: f64) -> Vec<[f64; 2]> {
        let r0 = self.r0;
        let d = x[0].hypot(x[1]);
        let mut pts = Vec::new();
        if d <= r0 {
            let m = ((2.0 * std::f64::consts::PI * r0 / step).ceil() as usize).max(16);
            for k in 0..m {
                let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                pts.push([r0 * a.cos(), r0 * a.sin()]);
            }
            return pts;
        }
        let theta = x[1].atan2(x[0]);
        let phi = (r0 / d).acos();
        let tp = [r0 * (theta + phi).cos(), r0 * (theta + phi).sin()];
        let tm = [r0 * (theta - phi).cos(), r0 * (theta - phi).sin()];
        let line = |a: [f64; 2], b: [f64; 2], pts: &mut Vec<[f64; 2]>| {
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let m = ((len / step).ceil() as usize).max(1);
            for k in 0..m {
                let t = k as f64 / m as f64;
                pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        };
        line(tp, x, &mut pts);
        line(x, tm, &mut pts);
        // Long arc from θ-φ down to θ+φ-2π.
        let span = 2.0 * std::f64::consts::PI - 2.0 * phi;
        let m = ((r0 * span / step).ceil() as usize).max(8);
        for k in 0..m {
            let a = theta - phi - span * k as f64 / m as f64;
            pts.push([r0 * a.cos(), r0 * a.sin()]);
        }
        pts
    }

    /// Boundary segments of the union.
    fn union_boundary(&self, step: f64) -> Vec<([f64; 2], [f64; 2])> {
        let mut segs = Vec::new();
        for (k, &x) in self.points.iter().enumerate() {
            let pts = self.hull_boundary(x, step);
            let keep: Vec<bool> = pts.iter().map(|&p| !self.strictly_inside_other(k, p)).collect();
            for a in 0..pts.len() {
                let b = (a + 1) % pts.len();
                if keep[a] && keep[b] {
                    segs.push((pts[a], pts[b]));
                }
            }
        }
        segs
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

/// Minimum over band nodes and sampled steps of
/// `(u(x + λν(x)) - u(x)) / λ`, with the node where it is attained.
pub fn displacement_rate(
    u: &ScalarField,
    nu: &DirectionField,
    band_half_width: f64,
    lambda_max: f64,
    samples: usize,
) -> Option<(f64, usize)> {
    let lambdas: Vec<f64> = (1..=samples).map(|s| lambda_max * s as f64 / samples as f64).collect();
    displacement_rate_on(u, nu, band_half_width, &lambdas)
}

/// As [`displacement_rate`] with an explicit step list; steps `<= 0` are
/// skipped.
pub fn displacement_rate_on(
    u: &ScalarField,
    nu: &DirectionField,
    band_half_width: f64,
    lambdas: &[f64],
) -> Option<(f64, usize)> {
    let lambdas: Vec<f64> = lambdas.iter().copied().filter(|&l| l > 0.0).collect();
    if lambdas.is_empty() {
        return None;
    }
    let spec = *u.spec();
    let vals = u.values();
    let per_node: Vec<Option<(f64, usize)>> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            if vals[k].abs() > band_half_width {
                return None;
            }
            let p = spec.node_of_index(k);
            let v = nu.at_node(k);
            let mut best = f64::INFINITY;
            for &lam in &lambdas {
                let q = [p[0] + lam * v[0], p[1] + lam * v[1]];
                best = best.min((u.interpolate(q) - vals[k]) / lam);
            }
            Some((best, k))
        })
        .collect();
    per_node
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(f64, usize)>, (v, k)| match acc {
            Some((bv, _)) if bv <= v => acc,
            _ => Some((v, k)),
        })
}

/// Builds `u0 = clamp(signed distance to ∂Ω₀, ±1)` for the star-shaped set
/// `Ω₀ = ⋃_{x∈K} ⋃_{α∈[0,1]} B̄(αx, (1-α)r0)` with `ν(x) = -x`, and certifies
/// the displacement condition on the grid.
pub fn star_shaped_u0(kernel_points: &[[f64; 2]], r0: f64, spec: GridSpec) -> Result<InitCondition> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(FrontError::parameter(format!("r0 must be positive, got {r0}")));
    }
    if kernel_points.is_empty() {
        return Err(FrontError::parameter("at least one kernel point is required"));
    }
    let h = spec.spacing();
    let l = spec.half_extent();
    for p in kernel_points {
        if p[0].hypot(p[1]) > l - 3.0 * h {
            return Err(FrontError::Domain(format!(
                "kernel point ({}, {}) lies outside B(0, L - 3h)",
                p[0], p[1]
            )));
        }
    }
    let extent = kernel_points
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(r0, f64::max);
    if extent >= l - 2.0 * h {
        return Err(FrontError::Domain(format!(
            "initial set of extent {extent} does not fit in B(0, L - 2h) = B(0, {})",
            l - 2.0 * h
        )));
    }

    let shape = StarShape {
        points: kernel_points.to_vec(),
        r0,
    };
    let is_disc = kernel_points.iter().all(|p| p[0].hypot(p[1]) <= r0);
    let u0 = if is_disc {
        ScalarField::from_fn(spec, |p| (r0 - p[0].hypot(p[1])).clamp(-1.0, 1.0))
    } else {
        let segs = shape.union_boundary(0.5 * h);
        ScalarField::from_fn(spec, |p| {
            let d = segs
                .iter()
                .map(|&(a, b)| segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            let s = if shape.contains(p) { d } else { -d };
            s.clamp(-1.0, 1.0)
        })
    };
    certify_radial(u0, extent + 1.0, r0)
}

/// Disc of radius `radius` centred at the origin.
pub fn circle_u0(radius: f64, spec: GridSpec) -> Result<InitCondition> {
    star_shaped_u0(&[[0.0, 0.0]], radius, spec)
}

/// Walks the band ladder with `ν(x) = -x` and keeps the widest band whose
/// grid-certified rate reaches `r0 / 2`.
fn certify_radial(u0: ScalarField, r0_support: f64, r0: f64) -> Result<InitCondition> {
    let mut last_failure = None;
    for &delta0 in &DELTA0_LADDER {
        match certify_with_band(&u0, r0_support, delta0) {
            Ok(init) if init.eta0 >= 0.5 * r0 => return Ok(init),
            Ok(init) => {
                last_failure = Some(format!(
                    "delta0={delta0}: certified rate {} < r0/2 = {}",
                    init.eta0,
                    0.5 * r0
                ))
            }
            Err(e) => last_failure = Some(e.to_string()),
        }
    }
    Err(FrontError::Construction(format!(
        "interior displacement condition not certified on any band: {}",
        last_failure.unwrap_or_default()
    )))
}

/// Certifies radial initial data on the band `{|u0| <= delta0}`; the rate is
/// the grid minimum of the displacement quotient.
pub fn certify_with_band(u0: &ScalarField, r0_support: f64, delta0: f64) -> Result<InitCondition> {
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(FrontError::parameter(format!("delta0 must lie in (0, 1), got {delta0}")));
    }
    let spec = *u0.spec();
    let mask: Vec<bool> = u0.values().iter().map(|v| v.abs() <= delta0).collect();
    if !mask.iter().any(|&b| b) {
        return Err(FrontError::Construction(format!("band |u0| <= {delta0} is empty")));
    }
    let mut nu = DirectionField::radial(spec);
    nu.restrict_norms(&mask);
    let lambda0 = 0.5f64.min(0.9 / nu.sup_norm).min(0.9 / nu.lip_norm.max(1e-12));
    let (eta, worst) = displacement_rate(u0, &nu, delta0, lambda0, CERTIFY_LAMBDA_SAMPLES)
        .expect("band is non-empty");
    if eta <= 0.0 {
        let p = spec.node_of_index(worst);
        return Err(FrontError::Construction(format!(
            "displacement rate {eta} <= 0 at node ({}, {})",
            p[0], p[1]
        )));
    }
    Ok(InitCondition {
        u0: u0.clone(),
        r0_support,
        delta0,
        eta0: eta,
        lambda0,
        nu,
    })
}

/// `max |u0| <= 1` and `u0 = -1` at every node outside `B(0, r0_support)`.
pub fn verify_i1(u0: &ScalarField, r0_support: f64) -> bool {
    let spec = u0.spec();
    u0.values().iter().enumerate().all(|(k, &v)| {
        if v.abs() > 1.0 + 1e-12 {
            return false;
        }
        let p = spec.node_of_index(k);
        p[0].hypot(p[1]) <= r0_support || v == -1.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct I2Check {
    pub passed: bool,
    /// `min (u0(ψ_λ x) - u0(x) - λη₀)` over band nodes and sampled steps.
    pub worst_margin: f64,
    /// Tolerance `‖Du₀‖∞ h` applied to the margin.
    pub tolerance: f64,
    pub worst_node: Option<[f64; 2]>,
}

/// Checks `u0(x + λν(x)) >= u0(x) + λη₀` on `{|u0| <= δ₀}` for
/// `λ ∈ {kλ₀/samples}`.
pub fn verify_i2(init: &InitCondition, lambda_samples: usize) -> Result<I2Check> {
    if lambda_samples < 4 {
        return Err(FrontError::parameter(format!(
            "at least 4 lambda samples are required, got {lambda_samples}"
        )));
    }
    let tolerance = init.grad_sup() * init.spec().spacing();
    if init.lambda0 <= 0.0 {
        return Ok(I2Check {
            passed: true,
            worst_margin: f64::INFINITY,
            tolerance,
            worst_node: None,
        });
    }
    let spec = *init.spec();
    let u = &init.u0;
    let vals = u.values();
    let per_node: Vec<Option<(f64, usize)>> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            if vals[k].abs() > init.delta0 {
                return None;
            }
            let p = spec.node_of_index(k);
            let v = init.nu.at_node(k);
            let mut worst = f64::INFINITY;
            for s in 1..=lambda_samples {
                let lam = init.lambda0 * s as f64 / lambda_samples as f64;
                let q = [p[0] + lam * v[0], p[1] + lam * v[1]];
                worst = worst.min(u.interpolate(q) - vals[k] - lam * init.eta0);
            }
            Some((worst, k))
        })
        .collect();
    let mut worst = f64::INFINITY;
    let mut node = None;
    for (m, k) in per_node.into_iter().flatten() {
        if m < worst {
            worst = m;
            node = Some(spec.node_of_index(k));
        }
    }
    Ok(I2Check {
        passed: worst >= -tolerance,
        worst_margin: worst,
        tolerance,
        worst_node: node,
    })
}

/// The nondecreasing truncation `Ψ` attached to the band half-width `δ₀`.
pub fn psi_truncation(r: f64, delta0: f64) -> Result<f64> {
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(FrontError::parameter(format!("delta0 must lie in (0, 1), got {delta0}")));
    }
    let half = 0.5 * delta0;
    Ok(if r <= -0.75 * delta0 {
        -1.0
    } else if r <= -half {
        2.0 * (2.0 - delta0) / delta0 * (r + half) - half
    } else if r <= half {
        r
    } else {
        half
    })
}

/// `x ↦ u(x + λν(x))`; pushed points outside the domain read -1.
pub fn push_sample(u: &ScalarField, nu: &DirectionField, lambda: f64) -> Result<ScalarField> {
    u.spec().ensure_same(nu.x.spec())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FrontError::parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(u.clone());
    }
    let spec = *u.spec();
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let p = spec.node_of_index(k);
            let v = nu.at_node(k);
            u.interpolate([p[0] + lambda * v[0], p[1] + lambda * v[1]])
        })
        .collect();
    Ok(ScalarField::from_raw(spec, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec201() -> GridSpec {
        GridSpec::new(201, 1.5).unwrap()
    }

    #[test]
    fn disc_initial_data_certifies() {
        let spec = spec201();
        let h = spec.spacing();
        let init = circle_u0(0.6, spec).unwrap();
        assert!(verify_i1(&init.u0, init.r0_support));
        let check = verify_i2(&init, 8).unwrap();
        assert!(check.passed, "{check:?}");
        // Widest band that certifies with rate >= r0/2.
        assert_eq!(init.delta0, 0.2);
        assert!(init.eta0 >= (0.6 - init.delta0) * (1.0 - h), "{}", init.eta0);
        // On the narrowest band the rate approaches R - δ₀ = 0.55.
        let narrow = certify_with_band(&init.u0, init.r0_support, 0.05).unwrap();
        assert!(narrow.eta0 >= 0.55 * (1.0 - h), "{}", narrow.eta0);
        assert!(init.lambda0 * init.nu.sup_norm < 1.0);
        assert!(init.lambda0 * init.nu.lip_norm < 1.0);
    }

    #[test]
    fn peanut_certifies() {
        let init = star_shaped_u0(&[[0.4, 0.0], [-0.4, 0.0]], 0.3, spec201()).unwrap();
        assert!(verify_i1(&init.u0, init.r0_support));
        assert!(verify_i2(&init, 8).unwrap().passed);
        assert!(init.eta0 >= 0.15);
        // The tips are on the boundary and the origin is well inside.
        let h = spec201().spacing();
        assert!(init.u0.interpolate([0.4, 0.0]).abs() < 2.0 * h);
        assert!(init.u0.interpolate([0.0, 0.0]) > 0.25);
    }

    #[test]
    fn oversized_support_is_rejected() {
        let spec = spec201();
        let err = circle_u0(2.0 * spec.half_extent(), spec).unwrap_err();
        assert!(matches!(err, FrontError::Domain(_)));
        let err = star_shaped_u0(&[[1.49, 0.0]], 0.2, spec).unwrap_err();
        assert!(matches!(err, FrontError::Domain(_)));
    }

    #[test]
    fn verify_i1_cases() {
        let spec = spec201();
        let init = circle_u0(0.6, spec).unwrap();
        assert!(verify_i1(&init.u0, init.r0_support));
        assert!(!verify_i1(&ScalarField::constant(spec, 0.0), 1.6));
        let steep = ScalarField::from_fn(spec, |p| (2.0 * (0.6 - p[0].hypot(p[1]))).clamp(-1.5, 1.5));
        assert!(!verify_i1(&steep, 1.6));
    }

    #[test]
    fn verify_i2_detects_overclaimed_rate() {
        let spec = spec201();
        let h = spec.spacing();
        let mut init = circle_u0(0.6, spec).unwrap();
        init.eta0 = 0.6 - init.delta0 - 2.0 * h;
        let ok = verify_i2(&init, 6).unwrap();
        assert!(ok.passed && ok.worst_margin >= 0.0, "{ok:?}");
        init.eta0 = 1.2;
        let bad = verify_i2(&init, 6).unwrap();
        assert!(!bad.passed && bad.worst_margin < 0.0);
        init.lambda0 = 0.0;
        let vac = verify_i2(&init, 6).unwrap();
        assert!(vac.passed && vac.worst_margin == f64::INFINITY);
        assert!(verify_i2(&init, 3).is_err());
    }

    #[test]
    fn certified_rate_grows_with_r0() {
        let spec = spec201();
        let etas: Vec<f64> = [0.3, 0.45, 0.6]
            .iter()
            .map(|&r| circle_u0(r, spec).unwrap().eta0)
            .collect();
        assert!(etas[0] < etas[1] && etas[1] < etas[2], "{etas:?}");
    }

    #[test]
    fn psi_branches() {
        let d = 0.2;
        assert_eq!(psi_truncation(0.0, d).unwrap(), 0.0);
        assert_eq!(psi_truncation(-1.0, d).unwrap(), -1.0);
        assert_eq!(psi_truncation(1.0, d).unwrap(), 0.1);
        // Continuity at the break points.
        assert!((psi_truncation(-0.15, d).unwrap() + 1.0).abs() < 1e-12);
        assert!((psi_truncation(-0.1, d).unwrap() + 0.1).abs() < 1e-12);
        assert!(psi_truncation(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn psi_monotone_and_lipschitz(d in 0.01f64..0.99, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pl = psi_truncation(lo, d).unwrap();
            let ph = psi_truncation(hi, d).unwrap();
            prop_assert!(pl <= ph);
            let slope = 2.0 * (2.0 - d) / d;
            prop_assert!(ph - pl <= slope * (hi - lo) + 1e-12);
            let ramp = (-0.75 * d, -0.5 * d);
            if lo >= ramp.1 || hi <= ramp.0 {
                prop_assert!(ph - pl <= (hi - lo) + 1e-12);
            }
        }
    }

    #[test]
    fn push_sample_cases() {
        let spec = GridSpec::new(101, 1.0).unwrap();
        let u = ScalarField::from_fn(spec, |p| p[0]);
        let nu = DirectionField::radial(spec);
        assert_eq!(push_sample(&u, &nu, 0.0).unwrap(), u);

        let shift = DirectionField::custom(
            ScalarField::constant(spec, 1.0),
            ScalarField::constant(spec, 0.0),
        )
        .unwrap();
        let pushed = push_sample(&u, &shift, 0.1).unwrap();
        for j in 0..101 {
            for i in 0..95 {
                assert!((pushed.at(i, j) - u.at(i, j) - 0.1).abs() < 1e-12);
            }
        }

        let g = GridSpec::new(201, 1.0).unwrap();
        let h = g.spacing();
        let disc = ScalarField::from_fn(g, |p| 0.7 - p[0].hypot(p[1]));
        let pushed = push_sample(&disc, &DirectionField::radial(g), 0.2).unwrap();
        for &p in &[[0.7, 0.0], [0.0, -0.7]] {
            let v = pushed.interpolate(p);
            assert!((v - 0.14).abs() < 2.0 * h, "{v}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn push_preserves_superlevel_inclusion(r in -0.3f64..0.3, lam in 0.0f64..0.4) {
            // For a radially decreasing profile, pulling towards the origin
            // cannot lower the value, so {u >= r} is contained in the pushed
            // superlevel set.
            let g = GridSpec::new(65, 1.0).unwrap();
            let u = ScalarField::from_fn(g, |p| 0.5 - p[0].hypot(p[1]));
            let pushed = push_sample(&u, &DirectionField::radial(g), lam).unwrap();
            for (a, b) in u.values().iter().zip(pushed.values()) {
                if *a >= r {
                    prop_assert!(*b >= r - 1e-12);
                }
            }
        }
    }

    #[test]
    fn header_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let init = circle_u0(0.5, GridSpec::new(65, 1.0).unwrap()).unwrap();
        init.save(dir.path()).unwrap();
        let back = InitCondition::load(dir.path()).unwrap();
        assert_eq!(back, init);
    }

    #[test]
    fn gradient_direction_field_points_inward() {
        let g = GridSpec::new(101, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |p| (0.5 - p[0].hypot(p[1])).clamp(-1.0, 1.0));
        let nu = DirectionField::gradient(&u);
        let v = nu.at([0.5, 0.0]);
        assert!(v[0] < -0.8 && v[1].abs() < 1e-9, "{v:?}");
        let (s, l) = nu.estimate_norms(None);
        assert!((s - nu.sup_norm).abs() <= 0.05 * s && (l - nu.lip_norm).abs() <= 0.05 * l);
    }
}

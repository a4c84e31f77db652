//! Uniform 2-D grids, sampled scalar fields and the finite-difference
//! stencils used by the level-set scheme.
//!
//! Node `(i, j)` sits at `((i - m) h, (j - m) h)` with `m = (n - 1) / 2`, so the
//! origin is always a node. Storage is row-major with `y` as the slow index.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{FrontError, Result};

/// Smallest admissible number of nodes per axis.
pub const MIN_NODES: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_extent: f64,
    spacing: f64,
}

impl GridSpec {
    /// Grid on `[-half_extent, half_extent]^2` with `n` nodes per axis.
    pub fn new(n: usize, half_extent: f64) -> Result<Self> {
        if n < MIN_NODES || n % 2 == 0 {
            return Err(FrontError::parameter(format!(
                "grid size must be an odd integer >= {MIN_NODES}, got {n}"
            )));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(FrontError::parameter(format!(
                "half extent must be positive and finite, got {half_extent}"
            )));
        }
        Ok(GridSpec {
            n,
            half_extent,
            spacing: 2.0 * half_extent / (n - 1) as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the node at the origin along one axis.
    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.spacing
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(i), self.coord(j)]
    }

    #[inline]
    pub fn node_of_index(&self, k: usize) -> [f64; 2] {
        self.node(k % self.n, k / self.n)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let lim = self.half_extent * (1.0 + 1e-12);
        p[0].abs() <= lim && p[1].abs() <= lim
    }

    /// Total area of the square domain.
    pub fn domain_area(&self) -> f64 {
        4.0 * self.half_extent * self.half_extent
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(FrontError::shape(format!(
                "grid {}x{} (L={}) does not match grid {}x{} (L={})",
                self.n, self.n, self.half_extent, other.n, other.n, other.half_extent
            )));
        }
        Ok(())
    }
}

/// Values of a function sampled at every node of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(FrontError::shape(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(FrontError::parameter(format!(
                "non-finite value at node {k}"
            )));
        }
        Ok(ScalarField { spec, values })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        ScalarField {
            spec,
            values: vec![value; spec.len()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 2]) -> f64 + Sync) -> Self {
        let n = spec.n();
        let mut values = vec![0.0; spec.len()];
        values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(j, row)| {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = f(spec.node(i, j));
                }
            });
        ScalarField { spec, values }
    }

    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        ScalarField { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> ScalarField {
        ScalarField {
            spec: self.spec,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation; points outside the domain evaluate to -1.
    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        self.interpolate_or(p, -1.0)
    }

    /// Bilinear interpolation with an explicit value outside the domain.
    pub fn interpolate_or(&self, p: [f64; 2], outside: f64) -> f64 {
        if !self.spec.contains(p) {
            return outside;
        }
        let n = self.spec.n();
        let (i0, tx) = cell_coord(p[0], &self.spec);
        let (j0, ty) = cell_coord(p[1], &self.spec);
        let k = j0 * n + i0;
        let v00 = self.values[k];
        let v10 = self.values[k + 1];
        let v01 = self.values[k + n];
        let v11 = self.values[k + n + 1];
        if tx == 0.0 && ty == 0.0 {
            return v00;
        }
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    /// Writes the plain-text dump: `n L` on the first line, then one row of
    /// values per line.
    pub fn to_text(&self) -> String {
        let n = self.spec.n();
        let mut out = String::with_capacity(self.values.len() * 12);
        let _ = writeln!(out, "{} {}", n, self.spec.half_extent());
        for row in self.values.chunks(n) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty field dump")?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .ok_or("missing n")?
            .parse()
            .map_err(|e| format!("bad n: {e}"))?;
        let l: f64 = parts
            .next()
            .ok_or("missing L")?
            .parse()
            .map_err(|e| format!("bad L: {e}"))?;
        let spec = GridSpec::new(n, l).map_err(|e| e.to_string())?;
        let mut values = Vec::with_capacity(spec.len());
        for (row, line) in lines.enumerate() {
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| format!("row {row}: bad value `{tok}`: {e}"))?,
                );
            }
            if values.len() - before != n {
                return Err(format!(
                    "row {row}: expected {n} values, got {}",
                    values.len() - before
                ));
            }
        }
        ScalarField::new(spec, values).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        ScalarField::from_text(&text).map_err(|m| FrontError::format(path, m))
    }
}

#[inline]
fn cell_coord(x: f64, spec: &GridSpec) -> (usize, f64) {
    let n = spec.n();
    let mut f = x / spec.spacing() + spec.center() as f64;
    let r = f.round();
    if (f - r).abs() < 1e-9 {
        f = r;
    }
    let f = f.clamp(0.0, (n - 1) as f64);
    let mut i = f.floor() as usize;
    if i >= n - 1 {
        i = n - 2;
    }
    (i, f - i as f64)
}

/// First-derivative stencil `(offset, weight)` along one axis, scaled by `1/h`.
/// One-sided second order on the boundary ring.
#[inline]
fn first_weights(i: usize, n: usize) -> [(isize, f64); 3] {
    if i == 0 {
        [(0, -1.5), (1, 2.0), (2, -0.5)]
    } else if i == n - 1 {
        [(0, 1.5), (-1, -2.0), (-2, 0.5)]
    } else {
        [(-1, -0.5), (1, 0.5), (0, 0.0)]
    }
}

/// Second-derivative stencil, scaled by `1/h^2`.
#[inline]
fn second_weights(i: usize, n: usize) -> [(isize, f64); 4] {
    if i == 0 {
        [(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
    } else if i == n - 1 {
        [(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)]
    } else {
        [(-1, 1.0), (0, -2.0), (1, 1.0), (0, 0.0)]
    }
}

/// Central (one-sided on the boundary) derivatives at a node.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalDerivatives {
    pub ux: f64,
    pub uy: f64,
    pub uxx: f64,
    pub uyy: f64,
    pub uxy: f64,
}

pub(crate) fn local_derivatives(u: &[f64], spec: &GridSpec, i: usize, j: usize) -> LocalDerivatives {
    let n = spec.n();
    let h = spec.spacing();
    if i > 0 && j > 0 && i + 1 < n && j + 1 < n {
        // Same arithmetic as the general path with the zero weights dropped.
        let k = j * n + i;
        let (c, w, e, s, nn) = (u[k], u[k - 1], u[k + 1], u[k - n], u[k + n]);
        let h2 = h * h;
        return LocalDerivatives {
            ux: (-0.5 * w + 0.5 * e) / h,
            uy: (-0.5 * s + 0.5 * nn) / h,
            uxx: (w + -2.0 * c + e) / h2,
            uyy: (s + -2.0 * c + nn) / h2,
            uxy: (0.25 * u[k - n - 1] + -0.25 * u[k + n - 1] + -0.25 * u[k - n + 1] + 0.25 * u[k + n + 1]) / h2,
        };
    }
    let at = |a: isize, b: isize| u[(j as isize + b) as usize * n + (i as isize + a) as usize];
    let wx = first_weights(i, n);
    let wy = first_weights(j, n);
    let mut d = LocalDerivatives::default();
    for &(o, w) in &wx {
        d.ux += w * at(o, 0);
    }
    for &(o, w) in &wy {
        d.uy += w * at(0, o);
    }
    for &(o, w) in &second_weights(i, n) {
        d.uxx += w * at(o, 0);
    }
    for &(o, w) in &second_weights(j, n) {
        d.uyy += w * at(0, o);
    }
    for &(a, wa) in &wx {
        if wa == 0.0 {
            continue;
        }
        for &(b, wb) in &wy {
            if wb == 0.0 {
                continue;
            }
            d.uxy += wa * wb * at(a, b);
        }
    }
    d.ux /= h;
    d.uy /= h;
    d.uxx /= h * h;
    d.uyy /= h * h;
    d.uxy /= h * h;
    d
}

/// `tr((I - p p^T / (|p|^2 + eps^2)) D^2u)` from local derivatives.
#[inline]
pub(crate) fn trace_form(d: &LocalDerivatives, eps_reg: f64) -> f64 {
    let p2 = d.ux * d.ux + d.uy * d.uy;
    let lap = d.uxx + d.uyy;
    let hess_pp = d.uxx * d.ux * d.ux + 2.0 * d.uxy * d.ux * d.uy + d.uyy * d.uy * d.uy;
    lap - hess_pp / (p2 + eps_reg * eps_reg)
}

/// Godunov approximation of `|Du|` for the Hamiltonian `-c|p|` at one node.
///
/// With `c >= 0` information travels from higher values of `u`; with `c < 0`
/// from lower values. Boundary nodes use the available one-sided difference.
#[inline]
pub(crate) fn godunov_norm(u: &[f64], spec: &GridSpec, i: usize, j: usize, c: f64) -> f64 {
    let n = spec.n();
    let h = spec.spacing();
    let k = j * n + i;
    let uc = u[k];
    let axis = |minus: Option<f64>, plus: Option<f64>| -> f64 {
        let dm = minus.map(|v| (uc - v) / h);
        let dp = plus.map(|v| (v - uc) / h);
        let (dm, dp) = match (dm, dp) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, a),
            (None, Some(b)) => (b, b),
            (None, None) => (0.0, 0.0),
        };
        if c >= 0.0 {
            let a = dm.min(0.0);
            let b = dp.max(0.0);
            (a * a).max(b * b)
        } else {
            let a = dm.max(0.0);
            let b = dp.min(0.0);
            (a * a).max(b * b)
        }
    };
    let gx = axis(
        (i > 0).then(|| u[k - 1]),
        (i + 1 < n).then(|| u[k + 1]),
    );
    let gy = axis(
        (j > 0).then(|| u[k - n]),
        (j + 1 < n).then(|| u[k + n]),
    );
    (gx + gy).sqrt()
}

/// Upwind approximation of `|Du|` selected by the sign of `speed` at each node.
pub fn upwind_gradient_norm(u: &ScalarField, speed: &ScalarField) -> Result<ScalarField> {
    u.spec.ensure_same(&speed.spec)?;
    let spec = u.spec;
    let n = spec.n();
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            *o = godunov_norm(&u.values, &spec, i, j, speed.values[j * n + i]);
        }
    });
    Ok(ScalarField::from_raw(spec, out))
}

/// Regularized mean-curvature operator `tr((I - p̂⊗p̂) D²u)`.
///
/// For a unit-slope field this is the curvature of the level line through the
/// node; a circle with `u > 0` inside gives `-1/R`.
pub fn curvature_term(u: &ScalarField, eps_reg: f64) -> Result<ScalarField> {
    check_eps(eps_reg)?;
    let spec = u.spec;
    let n = spec.n();
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let d = local_derivatives(&u.values, &spec, i, j);
            *o = trace_form(&d, eps_reg);
        }
    });
    Ok(ScalarField::from_raw(spec, out))
}

/// Curvature of the level lines: the trace form divided by the regularized
/// gradient norm. Invariant under `u -> a u + b` for `a > 0` up to the
/// regularization.
pub fn normalized_curvature(u: &ScalarField, eps_reg: f64) -> Result<ScalarField> {
    check_eps(eps_reg)?;
    let spec = u.spec;
    let n = spec.n();
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let d = local_derivatives(&u.values, &spec, i, j);
            let p2 = d.ux * d.ux + d.uy * d.uy;
            *o = trace_form(&d, eps_reg) / (p2 + eps_reg * eps_reg).sqrt();
        }
    });
    Ok(ScalarField::from_raw(spec, out))
}

fn check_eps(eps_reg: f64) -> Result<()> {
    if !(eps_reg > 0.0 && eps_reg.is_finite()) {
        return Err(FrontError::parameter(format!(
            "curvature regularization must be positive, got {eps_reg}"
        )));
    }
    Ok(())
}

/// Central-difference gradient norm at every node.
pub fn central_gradient_norm(u: &ScalarField) -> ScalarField {
    let spec = u.spec;
    let n = spec.n();
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let d = local_derivatives(&u.values, &spec, i, j);
            *o = d.ux.hypot(d.uy);
        }
    });
    ScalarField::from_raw(spec, out)
}

/// Central-difference gradient vector at a node.
pub fn central_gradient(u: &ScalarField, i: usize, j: usize) -> [f64; 2] {
    let d = local_derivatives(&u.values, &u.spec, i, j);
    [d.ux, d.uy]
}

/// Largest central-difference slope over interior nodes with `|x| <= radius`.
pub fn lipschitz_seminorm(u: &ScalarField, radius: f64) -> f64 {
    let spec = u.spec;
    let n = spec.n();
    let g = central_gradient_norm(u);
    let mut best = 0.0f64;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let p = spec.node(i, j);
            if p[0].hypot(p[1]) <= radius {
                best = best.max(g.values[j * n + i]);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, l: f64) -> GridSpec {
        GridSpec::new(n, l).unwrap()
    }

    #[test]
    fn grid_rejects_even_or_small() {
        assert!(GridSpec::new(64, 1.0).is_err());
        assert!(GridSpec::new(31, 1.0).is_err());
        assert!(GridSpec::new(33, 0.0).is_err());
        let g = grid(101, 1.0);
        assert_eq!(g.coord(g.center()), 0.0);
        assert!((g.spacing() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn upwind_affine_is_exact_inside() {
        let g = grid(65, 1.0);
        let u = ScalarField::from_fn(g, |p| p[0]);
        let c = ScalarField::constant(g, 1.0);
        let d = upwind_gradient_norm(&u, &c).unwrap();
        for j in 1..64 {
            for i in 1..64 {
                assert!((d.at(i, j) - 1.0).abs() < 1e-12);
            }
        }
        let u = ScalarField::from_fn(g, |p| 0.3 * p[0] - 0.4 * p[1] + 0.1);
        for s in [1.0, -1.0] {
            let d = upwind_gradient_norm(&u, &ScalarField::constant(g, s)).unwrap();
            for j in 1..64 {
                for i in 1..64 {
                    assert!((d.at(i, j) - 0.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn upwind_constant_field_is_zero() {
        let g = grid(33, 1.0);
        let u = ScalarField::constant(g, 0.3);
        let c = ScalarField::from_fn(g, |p| p[0] - 0.2);
        let d = upwind_gradient_norm(&u, &c).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upwind_cone_on_axis() {
        // |x| on the 101^2 grid, node (0.5, 0). Along x both one-sided
        // differences are exactly 1. Along y the neighbours sit at
        // sqrt(0.25 + h^2) and both lie upwind for speed +1, so the Godunov
        // flux keeps one of them; for speed -1 the y contribution vanishes.
        let g = grid(101, 1.0);
        let h = g.spacing();
        let u = ScalarField::from_fn(g, |p| p[0].hypot(p[1]));
        let i = 75;
        let j = 50;
        assert!((g.coord(i) - 0.5).abs() < 1e-14);
        let dy = ((0.25f64 + h * h).sqrt() - 0.5) / h;
        let expected_plus = (1.0 + dy * dy).sqrt();
        let plus = upwind_gradient_norm(&u, &ScalarField::constant(g, 1.0)).unwrap();
        assert!((plus.at(i, j) - expected_plus).abs() < 1e-12);
        let minus = upwind_gradient_norm(&u, &ScalarField::constant(g, -1.0)).unwrap();
        assert!((minus.at(i, j) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn upwind_shape_error() {
        let u = ScalarField::constant(grid(33, 1.0), 0.0);
        let c = ScalarField::constant(grid(35, 1.0), 0.0);
        assert!(matches!(upwind_gradient_norm(&u, &c), Err(FrontError::Shape(_))));
    }

    #[test]
    fn curvature_flat_front_is_zero() {
        let g = grid(65, 1.0);
        let u = ScalarField::from_fn(g, |p| p[0]);
        let k = curvature_term(&u, g.spacing()).unwrap();
        for j in 1..64 {
            for i in 1..64 {
                assert!(k.at(i, j).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn curvature_of_circle() {
        let g = grid(201, 1.5);
        let u = ScalarField::from_fn(g, |p| 1.0 - p[0].hypot(p[1]));
        let k = curvature_term(&u, g.spacing()).unwrap();
        let c = g.center();
        let i1 = c + (1.0 / g.spacing()).round() as usize;
        let i05 = c + (0.5 / g.spacing()).round() as usize;
        assert!((k.at(i1, c) + 1.0).abs() < 0.05, "{}", k.at(i1, c));
        assert!((k.at(i05, c) + 2.0).abs() < 0.1, "{}", k.at(i05, c));
    }

    #[test]
    fn curvature_rejects_nonpositive_eps() {
        let u = ScalarField::constant(grid(33, 1.0), 0.0);
        assert!(curvature_term(&u, 0.0).is_err());
        assert!(curvature_term(&u, -1.0).is_err());
    }

    #[test]
    fn interpolation_cases() {
        let g = grid(65, 1.0);
        let u = ScalarField::from_fn(g, |p| p[0] + 2.0 * p[1]);
        assert!((u.interpolate([0.25, 0.1]) - 0.45).abs() < 1e-14);
        let w = ScalarField::from_fn(g, |p| (3.0 * p[0]).sin() * p[1].cos());
        for &(i, j) in &[(0, 0), (10, 17), (64, 64), (32, 5)] {
            assert_eq!(w.interpolate(g.node(i, j)), w.at(i, j));
        }
        assert_eq!(u.interpolate([1.5, 0.0]), -1.0);
        assert_eq!(u.interpolate_or([0.0, -2.0], 7.0), 7.0);
    }

    #[test]
    fn text_dump_round_trips() {
        let g = grid(33, 1.25);
        let u = ScalarField::from_fn(g, |p| (p[0] * 7.1).sin() / 3.0 + p[1]);
        let text = u.to_text();
        assert!(text.starts_with("33 1.25\n"));
        assert_eq!(text.lines().count(), 34);
        let back = ScalarField::from_text(&text).unwrap();
        assert_eq!(back, u);
        assert!(ScalarField::from_text("33 1\n1 2 3\n").is_err());
    }
}

//! Marching-squares level lines and sub-cell area measures.
//!
//! A node is inside the level-`r` superlevel set when its value is `>= r`.
//! Crossings are placed by linear interpolation along cell edges. Saddle
//! cells are resolved by comparing the average of the four corners with the
//! level: if the average is inside, the two inside corners are connected.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{FrontError, Result};
use crate::grid::{GridSpec, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let mut len = 0.0;
        for w in self.vertices.windows(2) {
            len += dist(w[0], w[1]);
        }
        if self.closed && self.vertices.len() > 2 {
            len += dist(self.vertices[self.vertices.len() - 1], self.vertices[0]);
        }
        len
    }

    /// Length-weighted mean distance of the polyline from the origin.
    pub fn mean_radius(&self) -> f64 {
        let (num, den) = radius_moments(self);
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

fn radius_moments(p: &Polyline) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut seg = |a: [f64; 2], b: [f64; 2]| {
        let l = dist(a, b);
        let mid = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
        num += l * mid[0].hypot(mid[1]);
        den += l;
    };
    for w in p.vertices.windows(2) {
        seg(w[0], w[1]);
    }
    if p.closed && p.vertices.len() > 2 {
        seg(p.vertices[p.vertices.len() - 1], p.vertices[0]);
    }
    (num, den)
}

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Level line `{u = level}` as a set of polylines.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontContour {
    pub level: f64,
    pub polylines: Vec<Polyline>,
    pub perimeter: f64,
}

impl FrontContour {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.vertices.len()).sum()
    }

    pub fn vertices(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.polylines.iter().flat_map(|p| p.vertices.iter().copied())
    }

    /// Length-weighted mean distance of the whole contour from the origin.
    pub fn mean_radius(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for p in &self.polylines {
            let (a, b) = radius_moments(p);
            num += a;
            den += b;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// CSV with columns `polyline_id,vertex_index,x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("polyline_id,vertex_index,x,y\n");
        for (pid, p) in self.polylines.iter().enumerate() {
            for (k, v) in p.vertices.iter().enumerate() {
                let _ = writeln!(out, "{pid},{k},{},{}", v[0], v[1]);
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

// Corner order: 0 = (i, j), 1 = (i+1, j), 2 = (i+1, j+1), 3 = (i, j+1).
// Edge k joins corner k and corner (k + 1) % 4.
const CORNER_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Global key of edge `k` of cell `(i, j)`; horizontal and vertical edges
/// are keyed by their lower-left node.
#[inline]
fn edge_key(n: usize, i: usize, j: usize, k: usize) -> usize {
    match k {
        0 => 2 * (j * n + i),
        1 => 2 * (j * n + i + 1) + 1,
        2 => 2 * ((j + 1) * n + i),
        _ => 2 * (j * n + i) + 1,
    }
}

/// Crossing point on an edge, always interpolated from its lower-left end so
/// neighbouring cells agree bit-for-bit.
fn edge_point(u: &ScalarField, key: usize, level: f64) -> [f64; 2] {
    let spec = u.spec();
    let n = spec.n();
    let node = key / 2;
    let (i, j) = (node % n, node / n);
    let (i2, j2) = if key % 2 == 0 { (i + 1, j) } else { (i, j + 1) };
    let va = u.at(i, j);
    let vb = u.at(i2, j2);
    let t = if vb == va { 0.5 } else { ((level - va) / (vb - va)).clamp(0.0, 1.0) };
    let pa = spec.node(i, j);
    let pb = spec.node(i2, j2);
    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
}

fn cell_values(u: &ScalarField, i: usize, j: usize) -> [f64; 4] {
    let mut v = [0.0; 4];
    for (k, &(di, dj)) in CORNER_OFFSETS.iter().enumerate() {
        v[k] = u.at(i + di, j + dj);
    }
    v
}

/// Segments of one cell as pairs of local edge indices.
fn cell_segments(v: &[f64; 4], level: f64) -> ([(usize, usize); 2], usize) {
    let inside = [v[0] >= level, v[1] >= level, v[2] >= level, v[3] >= level];
    let crossing: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
    match crossing.len() {
        2 => ([(crossing[0], crossing[1]), (0, 0)], 1),
        4 => {
            let center_in = 0.25 * (v[0] + v[1] + v[2] + v[3]) >= level;
            // Corners 0 and 2 inside, or corners 1 and 3 inside.
            let even_inside = inside[0];
            if center_in == even_inside {
                // Isolate corners 1 and 3.
                ([(0, 1), (2, 3)], 2)
            } else {
                // Isolate corners 0 and 2.
                ([(3, 0), (1, 2)], 2)
            }
        }
        _ => ([(0, 0), (0, 0)], 0),
    }
}

/// Extracts the level line `{u = level}` for `level` in `(-1, 1)`.
pub fn extract_contour(u: &ScalarField, level: f64) -> Result<FrontContour> {
    if !(level > -1.0 && level < 1.0) {
        return Err(FrontError::parameter(format!(
            "contour level must lie in (-1, 1), got {level}"
        )));
    }
    let spec = *u.spec();
    let n = spec.n();

    let mut segments: Vec<[usize; 2]> = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let v = cell_values(u, i, j);
            let (segs, count) = cell_segments(&v, level);
            for &(a, b) in &segs[..count] {
                segments.push([edge_key(n, i, j, a), edge_key(n, i, j, b)]);
            }
        }
    }

    let mut incident: HashMap<usize, Vec<usize>> = HashMap::with_capacity(segments.len() * 2);
    for (s, seg) in segments.iter().enumerate() {
        for &key in seg {
            incident.entry(key).or_default().push(s);
        }
    }

    let mut used = vec![false; segments.len()];
    let mut chains: Vec<(Vec<usize>, bool)> = Vec::new();

    let mut open_starts: Vec<usize> = incident
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(&k, _)| k)
        .collect();
    open_starts.sort_unstable();
    for start in open_starts {
        let s0 = incident[&start][0];
        if used[s0] {
            continue;
        }
        chains.push((walk(start, s0, &segments, &incident, &mut used), false));
    }
    for s0 in 0..segments.len() {
        if used[s0] {
            continue;
        }
        let start = segments[s0][0];
        let mut keys = walk(start, s0, &segments, &incident, &mut used);
        if keys.len() > 1 && keys.first() == keys.last() {
            keys.pop();
        }
        chains.push((keys, true));
    }

    let polylines: Vec<Polyline> = chains
        .into_iter()
        .map(|(keys, closed)| Polyline {
            vertices: keys.iter().map(|&k| edge_point(u, k, level)).collect(),
            closed,
        })
        .collect();
    let perimeter = polylines.iter().map(Polyline::length).sum();
    Ok(FrontContour {
        level,
        polylines,
        perimeter,
    })
}

fn walk(
    start: usize,
    first: usize,
    segments: &[[usize; 2]],
    incident: &HashMap<usize, Vec<usize>>,
    used: &mut [bool],
) -> Vec<usize> {
    let mut keys = vec![start];
    let mut current = start;
    let mut seg = first;
    loop {
        used[seg] = true;
        let [a, b] = segments[seg];
        let next = if a == current { b } else { a };
        keys.push(next);
        current = next;
        match incident[&next].iter().find(|&&s| !used[s]) {
            Some(&s) => seg = s,
            None => break,
        }
    }
    keys
}

fn shoelace(points: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for k in 0..points.len() {
        let a = points[k];
        let b = points[(k + 1) % points.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc.abs()
}

fn lerp_edge(p: &[[f64; 2]; 4], v: &[f64; 4], k: usize, level: f64) -> [f64; 2] {
    let a = k;
    let b = (k + 1) % 4;
    let t = if v[b] == v[a] { 0.5 } else { ((level - v[a]) / (v[b] - v[a])).clamp(0.0, 1.0) };
    [p[a][0] + t * (p[b][0] - p[a][0]), p[a][1] + t * (p[b][1] - p[a][1])]
}

/// Area of `{bilinear >= level}` inside one cell, approximated by the
/// marching-squares polygon.
fn cell_area(spec: &GridSpec, u: &ScalarField, i: usize, j: usize, level: f64) -> f64 {
    let v = cell_values(u, i, j);
    let inside = [v[0] >= level, v[1] >= level, v[2] >= level, v[3] >= level];
    let count = inside.iter().filter(|&&b| b).count();
    let h = spec.spacing();
    if count == 4 {
        return h * h;
    }
    if count == 0 {
        return 0.0;
    }
    let mut p = [[0.0; 2]; 4];
    for (k, &(di, dj)) in CORNER_OFFSETS.iter().enumerate() {
        p[k] = spec.node(i + di, j + dj);
    }
    let saddle = count == 2 && inside[0] == inside[2];
    if saddle {
        let center_in = 0.25 * (v[0] + v[1] + v[2] + v[3]) >= level;
        let e: Vec<[f64; 2]> = (0..4).map(|k| lerp_edge(&p, &v, k, level)).collect();
        if center_in {
            let mut poly = Vec::with_capacity(6);
            for k in 0..4 {
                if inside[k] {
                    poly.push(p[k]);
                }
                poly.push(e[k]);
            }
            return shoelace(&poly);
        }
        // Two separate corner triangles: corner k sits between edges k-1 and k.
        let mut area = 0.0;
        for k in 0..4 {
            if inside[k] {
                area += shoelace(&[e[(k + 3) % 4], p[k], e[k]]);
            }
        }
        return area;
    }
    let mut poly = Vec::with_capacity(5);
    for k in 0..4 {
        if inside[k] {
            poly.push(p[k]);
        }
        if inside[k] != inside[(k + 1) % 4] {
            poly.push(lerp_edge(&p, &v, k, level));
        }
    }
    shoelace(&poly)
}

/// Area of `{u >= threshold}` from sub-cell interpolation polygons.
///
/// Row sums are formed independently and then added in row order, so the
/// result does not depend on the number of worker threads.
pub fn lebesgue_measure(u: &ScalarField, threshold: f64) -> f64 {
    let spec = *u.spec();
    let n = spec.n();
    let rows: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .map(|j| {
            let mut s = 0.0;
            for i in 0..n - 1 {
                s += cell_area(&spec, u, i, j, threshold);
            }
            s
        })
        .collect();
    rows.iter().sum()
}

/// Area of the band `{a <= u < b}`.
pub fn band_measure(u: &ScalarField, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(FrontError::parameter(format!(
            "band requires a < b, got a={a}, b={b}"
        )));
    }
    Ok((lebesgue_measure(u, a) - lebesgue_measure(u, b)).max(0.0))
}

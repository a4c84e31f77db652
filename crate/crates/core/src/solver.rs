//! Explicit monotone stepping for `u_t = c(x,t)|Du| + γ|Du| div(Du/|Du|)`
//! with clamping to `[-1, 1]` and a far-field value of -1.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{FrontError, Result};
use crate::geometry::parse_key_values;
use crate::grid::{godunov_norm, lipschitz_seminorm, local_derivatives, trace_form, GridSpec, ScalarField};

const EPS0: f64 = 1e-12;

/// Piecewise-constant-in-time speed: on `[times[k], times[k+1])` the field
/// `fields[k]` is used, and the last field holds until the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSchedule {
    times: Vec<f64>,
    fields: Vec<Arc<ScalarField>>,
    sup: Vec<f64>,
}

impl SpeedSchedule {
    pub fn constant(field: ScalarField) -> Self {
        let s = field.max_abs();
        SpeedSchedule {
            times: vec![0.0],
            fields: vec![Arc::new(field)],
            sup: vec![s],
        }
    }

    pub fn uniform(spec: GridSpec, value: f64) -> Self {
        Self::constant(ScalarField::constant(spec, value))
    }

    pub fn new(times: Vec<f64>, fields: Vec<Arc<ScalarField>>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(FrontError::parameter(format!(
                "speed schedule needs one field per time ({} times, {} fields)",
                times.len(),
                fields.len()
            )));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FrontError::parameter("speed schedule times must start at 0 and increase"));
        }
        for f in &fields[1..] {
            fields[0].spec().ensure_same(f.spec())?;
        }
        let sup = fields.iter().map(|f| f.max_abs()).collect();
        Ok(SpeedSchedule { times, fields, sup })
    }

    fn segment(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Speed field in force at time `t`.
    pub fn at(&self, t: f64) -> &ScalarField {
        &self.fields[self.segment(t)]
    }

    /// First switching time strictly after `t`.
    pub fn next_change(&self, t: f64) -> Option<f64> {
        self.times.get(self.segment(t) + 1).copied()
    }

    /// `‖c‖∞` over the whole schedule.
    pub fn sup_norm(&self) -> f64 {
        self.sup.iter().copied().fold(0.0, f64::max)
    }

    pub fn spec(&self) -> &GridSpec {
        self.fields[0].spec()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Arc<ScalarField>] {
        &self.fields
    }
}

/// The frozen-coefficient problem.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    pub speed: SpeedSchedule,
    pub gamma: f64,
    pub eps_reg: f64,
    pub far_radius: f64,
    pub horizon: f64,
    pub cfl_safety: f64,
}

impl LocalProblem {
    /// Defaults: `eps_reg = h`, safety 0.5, and far radius
    /// `min(‖c‖∞T + front_radius + √2, L - 3h)`.
    pub fn new(speed: SpeedSchedule, gamma: f64, horizon: f64, front_radius: f64) -> Result<Self> {
        let spec = *speed.spec();
        let far = default_far_radius(&spec, speed.sup_norm(), horizon, front_radius);
        let p = LocalProblem {
            eps_reg: spec.spacing(),
            speed,
            gamma,
            far_radius: far,
            horizon,
            cfl_safety: 0.5,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.speed.spec();
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(FrontError::parameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(FrontError::parameter(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if !(self.eps_reg > 0.0) {
            return Err(FrontError::parameter("eps_reg must be positive"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(FrontError::parameter(format!(
                "cfl safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        let cap = spec.half_extent() - 2.0 * spec.spacing();
        if !(self.far_radius > 0.0 && self.far_radius < cap) {
            return Err(FrontError::Domain(format!(
                "far radius {} must lie in (0, L - 2h) = (0, {cap})",
                self.far_radius
            )));
        }
        Ok(())
    }
}

pub fn default_far_radius(spec: &GridSpec, c_max: f64, horizon: f64, front_radius: f64) -> f64 {
    let cap = spec.half_extent() - 3.0 * spec.spacing();
    (c_max * horizon + front_radius + std::f64::consts::SQRT_2).min(cap)
}

/// `safety · min(h/(c_max + ε₀), h²/(4γ + ε₀))`.
pub fn cfl_timestep(c_max: f64, gamma: f64, h: f64, safety: f64) -> Result<f64> {
    if !(h > 0.0) || !(safety > 0.0 && safety <= 1.0) {
        return Err(FrontError::parameter(format!(
            "cfl needs h > 0 and safety in (0, 1], got h={h}, safety={safety}"
        )));
    }
    Ok(safety * (h / (c_max.abs() + EPS0)).min(h * h / (4.0 * gamma + EPS0)))
}

/// One explicit Euler step followed by clamping and far-field projection.
pub fn advance(
    u: &ScalarField,
    c_t: &ScalarField,
    gamma: f64,
    eps_reg: f64,
    dt: f64,
    far_radius: f64,
) -> Result<ScalarField> {
    u.spec().ensure_same(c_t.spec())?;
    let spec = *u.spec();
    let h = spec.spacing();
    if !(dt >= 0.0) {
        return Err(FrontError::parameter(format!("dt must be >= 0, got {dt}")));
    }
    if !(gamma >= 0.0) {
        return Err(FrontError::parameter(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(eps_reg > 0.0) {
        return Err(FrontError::parameter("eps_reg must be positive"));
    }
    let limit = cfl_timestep(c_t.max_abs(), gamma, h, 1.0)?;
    if dt > limit * (1.0 + 1e-12) {
        return Err(FrontError::Stability(format!(
            "dt = {dt} exceeds the stability bound {limit}"
        )));
    }
    let n = spec.n();
    let uv = u.values();
    let cv = c_t.values();
    let far2 = far_radius * far_radius;
    let mut out = vec![0.0; spec.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let p = spec.node(i, j);
            if p[0] * p[0] + p[1] * p[1] > far2 {
                *o = -1.0;
                continue;
            }
            let k = j * n + i;
            let c = cv[k];
            let mut rate = 0.0;
            if c != 0.0 {
                rate += c * godunov_norm(uv, &spec, i, j, c);
            }
            if gamma > 0.0 {
                let d = local_derivatives(uv, &spec, i, j);
                let g = d.ux.hypot(d.uy);
                rate += gamma * trace_form(&d, eps_reg) * g / (g * g + eps_reg * eps_reg).sqrt();
            }
            *o = (uv[k] + dt * rate).clamp(-1.0, 1.0);
        }
    });
    Ok(ScalarField::from_raw(spec, out))
}

/// `u` clamped to `[-1, 1]` with -1 outside `B(0, far_radius)`.
pub fn project_far_field(u: &ScalarField, far_radius: f64) -> ScalarField {
    let spec = *u.spec();
    let far2 = far_radius * far_radius;
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let p = spec.node_of_index(k);
            if p[0] * p[0] + p[1] * p[1] > far2 {
                -1.0
            } else {
                v.clamp(-1.0, 1.0)
            }
        })
        .collect();
    ScalarField::from_raw(spec, values)
}

/// Sampled solution of a [`LocalProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    /// Largest step taken.
    pub dt_used: f64,
    pub steps: usize,
    pub lipschitz_log: Vec<f64>,
    pub far_radius: f64,
    /// Radius of the ball on which regularity quantities are measured.
    pub measure_radius: f64,
}

impl Trajectory {
    pub fn spec(&self) -> &GridSpec {
        self.snapshots[0].spec()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_snapshot(&self) -> &ScalarField {
        self.snapshots.last().unwrap()
    }

    /// Index of the last stored time not after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t + 1e-12).saturating_sub(1)
    }

    /// Snapshot in force at time `t` (piecewise constant between stored times).
    pub fn at(&self, t: f64) -> &ScalarField {
        &self.snapshots[self.index_at(t)]
    }

    /// Writes `t_<index>.txt`, `manifest.csv` and `trajectory.txt`.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::from("index,time,dt_used,lipschitz_seminorm\n");
        for (k, (t, u)) in self.times.iter().zip(&self.snapshots).enumerate() {
            u.save(&dir.join(format!("t_{k}.txt")))?;
            manifest.push_str(&format!("{k},{t},{},{}\n", self.dt_used, self.lipschitz_log[k]));
        }
        fs::write(dir.join("manifest.csv"), manifest)?;
        fs::write(
            dir.join("trajectory.txt"),
            format!(
                "far_radius={}\nmeasure_radius={}\nsteps={}\n",
                self.far_radius, self.measure_radius, self.steps
            ),
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.csv");
        let text = fs::read_to_string(&manifest_path)?;
        let mut times = Vec::new();
        let mut snapshots = Vec::new();
        let mut lipschitz_log = Vec::new();
        let mut dt_used = 0.0;
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = |m: String| FrontError::format(&manifest_path, format!("line {}: {m}", ln + 1));
            if cols.len() != 4 {
                return Err(bad(format!("expected 4 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
            let index: usize = cols[0].trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            times.push(num(cols[1])?);
            dt_used = num(cols[2])?;
            lipschitz_log.push(num(cols[3])?);
            snapshots.push(ScalarField::load(&dir.join(format!("t_{index}.txt")))?);
        }
        if snapshots.is_empty() {
            return Err(FrontError::format(&manifest_path, "no snapshots listed"));
        }
        let meta_path = dir.join("trajectory.txt");
        let meta = parse_key_values(&fs::read_to_string(&meta_path)?);
        let get = |k: &str| -> Result<f64> {
            meta.get(k)
                .ok_or_else(|| FrontError::format(&meta_path, format!("missing key {k}")))?
                .parse::<f64>()
                .map_err(|e| FrontError::format(&meta_path, format!("{k}: {e}")))
        };
        Ok(Trajectory {
            times,
            snapshots,
            dt_used,
            steps: get("steps")? as usize,
            lipschitz_log,
            far_radius: get("far_radius")?,
            measure_radius: get("measure_radius")?,
        })
    }
}

fn check_output_times(times: &[f64], horizon: f64) -> Result<Vec<f64>> {
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(FrontError::parameter(format!(
                "output times must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(&t) = times.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
        return Err(FrontError::parameter(format!("output time {t} outside [0, {horizon}]")));
    }
    let mut all = vec![0.0];
    all.extend(times.iter().copied().filter(|&t| t > 0.0));
    if *all.last().unwrap() < horizon {
        all.push(horizon);
    }
    Ok(all)
}

/// `n` equally spaced times on `[0, horizon]`, both ends included.
pub fn uniform_times(horizon: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count)
        .map(|k| if k + 1 == count { horizon } else { horizon * k as f64 / (count - 1) as f64 })
        .collect()
}

/// Fails when the zero superlevel set reaches the far-field guard ring.
fn escape_check(u: &ScalarField, guard: f64, t: f64) -> Result<()> {
    let spec = u.spec();
    let mut reach2 = 0.0f64;
    for (k, &v) in u.values().iter().enumerate() {
        if v >= 0.0 {
            let p = spec.node_of_index(k);
            reach2 = reach2.max(p[0] * p[0] + p[1] * p[1]);
        }
    }
    let reach = reach2.sqrt();
    if reach > guard {
        return Err(FrontError::FrontEscape {
            time: t,
            radius: reach,
            guard,
        });
    }
    Ok(())
}

/// Marches `u0` to each output time, landing exactly on output times and on
/// speed switching times.
pub fn solve(problem: &LocalProblem, u0: &ScalarField, output_times: &[f64]) -> Result<Trajectory> {
    problem.validate()?;
    u0.spec().ensure_same(problem.speed.spec())?;
    let spec = *u0.spec();
    let h = spec.spacing();
    let horizon = problem.horizon;
    let times = check_output_times(output_times, horizon)?;
    let guard = problem.far_radius - 4.0 * h;
    let c_max = problem.speed.sup_norm();
    let measure_radius = (problem.far_radius
        - (c_max + 2.0 * problem.gamma / problem.far_radius) * horizon
        - 4.0 * h)
        .max(problem.far_radius * 0.5);

    let mut u = project_far_field(u0, problem.far_radius);
    escape_check(&u, guard, 0.0)?;
    let mut snapshots = vec![u.clone()];
    let mut lipschitz_log = vec![lipschitz_seminorm(&u, measure_radius)];
    let mut t = 0.0;
    let mut dt_used = 0.0f64;
    let mut steps = 0usize;
    for &target in &times[1..] {
        while t < target {
            let c = problem.speed.at(t);
            let dt_cfl = cfl_timestep(c.max_abs(), problem.gamma, h, problem.cfl_safety)?;
            let mut stop = target;
            if let Some(tc) = problem.speed.next_change(t) {
                stop = stop.min(tc);
            }
            let (dt, next_t) = if t + dt_cfl >= stop - 1e-12 * horizon.max(1.0) {
                (stop - t, stop)
            } else {
                (dt_cfl, t + dt_cfl)
            };
            if dt > 0.0 {
                u = advance(&u, c, problem.gamma, problem.eps_reg, dt, problem.far_radius)?;
                dt_used = dt_used.max(dt);
                steps += 1;
                escape_check(&u, guard, next_t)?;
            }
            t = next_t;
        }
        lipschitz_log.push(lipschitz_seminorm(&u, measure_radius));
        snapshots.push(u.clone());
    }
    Ok(Trajectory {
        times,
        snapshots,
        dt_used,
        steps,
        lipschitz_log,
        far_radius: problem.far_radius,
        measure_radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    /// Growth rate of `‖Du(·,t)‖∞`, clamped at 0.
    pub k_fit: f64,
    /// Raw least-squares slope of `ln ‖Du(·,t)‖∞` against `t`.
    pub slope: f64,
    pub seminorm_decays: bool,
    /// `max |u(x,t) - u(x,s)| / |t - s|^{1/2}` over measured nodes and pairs.
    pub holder_const: f64,
}

/// Fits `‖Du(·,t)‖∞ ≈ ‖Du₀‖∞ e^{Kt}` and the time-Hölder constant.
pub fn regularity_report(traj: &Trajectory) -> Result<RegularityReport> {
    if traj.snapshots.len() < 3 {
        return Err(FrontError::parameter(format!(
            "regularity report needs at least 3 snapshots, got {}",
            traj.snapshots.len()
        )));
    }
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.lipschitz_log)
        .filter(|(_, &l)| l > 0.0)
        .map(|(&t, &l)| (t, l.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };

    let spec = *traj.spec();
    let r2 = traj.measure_radius * traj.measure_radius;
    let nodes: Vec<usize> = (0..spec.len())
        .filter(|&k| {
            let p = spec.node_of_index(k);
            p[0] * p[0] + p[1] * p[1] <= r2
        })
        .collect();
    let m = traj.snapshots.len();
    let holder = (0..m)
        .into_par_iter()
        .map(|a| {
            let mut best = 0.0f64;
            for b in a + 1..m {
                let dt = (traj.times[b] - traj.times[a]).abs();
                if dt <= 0.0 {
                    continue;
                }
                let ua = traj.snapshots[a].values();
                let ub = traj.snapshots[b].values();
                let d = nodes.iter().map(|&k| (ua[k] - ub[k]).abs()).fold(0.0, f64::max);
                best = best.max(d / dt.sqrt());
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(RegularityReport {
        k_fit: slope.max(0.0),
        slope,
        seminorm_decays: slope < 0.0,
        holder_const: holder,
    })
}

//! Weak solutions as fixed points of `χ ↦ 𝟙_{u[χ] ≥ 0}`, the multi-seed
//! uniqueness probe and the non-fattening monitor.

use std::sync::Arc;

use rayon::prelude::*;

use crate::contour::extract_contour;
use crate::coupling::{disc_indicator, kappa, CouplingSpec, OccupationHistory};
use crate::error::{FrontError, Result};
use crate::geometry::InitCondition;
use crate::grid::ScalarField;
use crate::solver::{default_far_radius, solve, LocalProblem, SpeedSchedule, Trajectory};

pub const DEFAULT_MAX_ITER: usize = 12;

/// `𝟙_{u ≥ 0}`.
pub fn chi_from_u(u: &ScalarField) -> ScalarField {
    u.map(|v| if v >= 0.0 { 1.0 } else { 0.0 })
}

/// Occupation history of a trajectory sampled at `times` (each must be a
/// stored time of the trajectory).
pub fn chi_history(traj: &Trajectory, times: &[f64]) -> Result<OccupationHistory> {
    let fields = times
        .iter()
        .map(|&t| {
            let k = traj.index_at(t);
            if (traj.times[k] - t).abs() > 1e-12 * t.abs().max(1.0) {
                return Err(FrontError::parameter(format!("time {t} is not stored in the trajectory")));
            }
            Ok(Arc::new(chi_from_u(&traj.snapshots[k])))
        })
        .collect::<Result<Vec<_>>>()?;
    OccupationHistory::new(times.to_vec(), fields)
}

/// Largest `|x|` over nodes with `u ≥ 0`, plus one cell.
pub fn front_extent(u: &ScalarField) -> f64 {
    let spec = u.spec();
    let mut r = 0.0f64;
    for (k, &v) in u.values().iter().enumerate() {
        if v >= 0.0 {
            let p = spec.node_of_index(k);
            r = r.max(p[0].hypot(p[1]));
        }
    }
    r + spec.spacing()
}

/// Knobs of the inner local solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub cfl_safety: f64,
    /// Overrides the default far-field radius.
    pub far_radius: Option<f64>,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            cfl_safety: 0.5,
            far_radius: None,
        }
    }
}

/// Solves the frozen problem for the speed generated by `chi`.
pub fn solve_frozen(
    init: &InitCondition,
    coupling: &CouplingSpec,
    gamma: f64,
    horizon: f64,
    chi: &OccupationHistory,
    settings: &SolveSettings,
) -> Result<Trajectory> {
    let speed = coupling.speed_schedule(chi)?;
    solve_with_speed(init, coupling, speed, gamma, horizon, chi.times(), settings)
}

fn solve_with_speed(
    init: &InitCondition,
    coupling: &CouplingSpec,
    speed: SpeedSchedule,
    gamma: f64,
    horizon: f64,
    times: &[f64],
    settings: &SolveSettings,
) -> Result<Trajectory> {
    let spec = *init.spec();
    let c_bound = coupling.speed_bound(&spec).unwrap_or_else(|| speed.sup_norm());
    let far = settings
        .far_radius
        .unwrap_or_else(|| default_far_radius(&spec, c_bound, horizon, front_extent(&init.u0)));
    let problem = LocalProblem {
        speed,
        gamma,
        eps_reg: spec.spacing(),
        far_radius: far,
        horizon,
        cfl_safety: settings.cfl_safety,
    };
    solve(&problem, &init.u0, times)
}

#[derive(Debug, Clone)]
pub struct WeakSolution {
    pub u_traj: Trajectory,
    /// `𝟙_{u ≥ 0}` of the stored trajectory.
    pub chi_hist: OccupationHistory,
    /// The history whose speed produced `u_traj`.
    pub driving_chi: OccupationHistory,
    pub iterations: usize,
    /// `sup_t κ` between successive iterates.
    pub residual_history: Vec<f64>,
    /// `sup_t κ` restricted to `t ≤ T/4`, per iteration.
    pub prefix_residual_history: Vec<f64>,
    pub converged: bool,
}

/// Picard iteration on the occupation history over the time grid of
/// `chi_init`.
pub fn fixed_point_solve(
    init: &InitCondition,
    coupling: &CouplingSpec,
    gamma: f64,
    horizon: f64,
    chi_init: &OccupationHistory,
    tol: f64,
    max_iter: usize,
) -> Result<WeakSolution> {
    fixed_point_solve_with(init, coupling, gamma, horizon, chi_init, tol, max_iter, &SolveSettings::default())
}

#[allow(clippy::too_many_arguments)]
pub fn fixed_point_solve_with(
    init: &InitCondition,
    coupling: &CouplingSpec,
    gamma: f64,
    horizon: f64,
    chi_init: &OccupationHistory,
    tol: f64,
    max_iter: usize,
    settings: &SolveSettings,
) -> Result<WeakSolution> {
    let h = init.spec().spacing();
    if max_iter == 0 {
        return Err(FrontError::parameter("max_iter must be at least 1"));
    }
    if !(tol >= h * h * (1.0 - 1e-12)) {
        return Err(FrontError::parameter(format!("tolerance {tol} is below one cell area {}", h * h)));
    }
    init.spec().ensure_same(chi_init.spec())?;
    if chi_init.times().last().is_some_and(|&t| t > horizon) {
        return Err(FrontError::parameter("history extends past the horizon"));
    }
    let times = chi_init.times().to_vec();
    let quarter = chi_init.index_at(0.25 * horizon);
    let mut chi = chi_init.clone();
    let mut residuals = Vec::new();
    let mut prefix = Vec::new();
    let mut last: Option<(SpeedSchedule, Trajectory)> = None;
    for it in 1..=max_iter {
        let speed = coupling.speed_schedule(&chi)?;
        // An unchanged speed reproduces the previous iterate exactly.
        let traj = match &last {
            Some((prev, traj)) if *prev == speed => traj.clone(),
            _ => solve_with_speed(init, coupling, speed.clone(), gamma, horizon, &times, settings)?,
        };
        last = Some((speed, traj.clone()));
        let next = chi_history(&traj, &times)?;
        let dists: Vec<f64> = next
            .fields()
            .iter()
            .zip(chi.fields())
            .map(|(a, b)| kappa(a, b))
            .collect::<Result<_>>()?;
        let res = dists.iter().copied().fold(0.0, f64::max);
        residuals.push(res);
        prefix.push(dists[..=quarter].iter().copied().fold(0.0, f64::max));
        let converged = res <= tol;
        if converged || it == max_iter {
            return Ok(WeakSolution {
                u_traj: traj,
                chi_hist: next,
                driving_chi: chi,
                iterations: it,
                residual_history: residuals,
                prefix_residual_history: prefix,
                converged,
            });
        }
        chi = next;
    }
    unreachable!("loop returns on the last iteration")
}

/// Standard probe seeds on the time grid `times`: the initial indicator held
/// constant, the empty set, and the ball of radius `ball_radius`.
pub fn standard_seeds(init: &InitCondition, times: &[f64], ball_radius: f64) -> Result<Vec<OccupationHistory>> {
    let spec = *init.spec();
    Ok(vec![
        OccupationHistory::constant(times.to_vec(), chi_from_u(&init.u0))?,
        OccupationHistory::constant(times.to_vec(), ScalarField::constant(spec, 0.0))?,
        OccupationHistory::constant(times.to_vec(), disc_indicator(spec, ball_radius))?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDistance {
    pub seed_i: usize,
    pub seed_j: usize,
    /// `δ_τ` for each prefix in [`ProbeReport::taus`].
    pub delta: Vec<f64>,
    pub kappa_sup: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub taus: Vec<f64>,
    pub pairs: Vec<PairDistance>,
    /// Largest pairwise `δ_τ` per prefix.
    pub max_delta: Vec<f64>,
    pub uniq_tol: f64,
    /// `δ_{T/4} ≤ uniq_tol`.
    pub verdict: bool,
    pub solutions: Vec<WeakSolution>,
}

impl ProbeReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed_i,seed_j,tau,delta_tau,kappa_sup\n");
        for p in &self.pairs {
            for (tau, d) in self.taus.iter().zip(&p.delta) {
                s.push_str(&format!("{},{},{tau},{d},{}\n", p.seed_i, p.seed_j, p.kappa_sup));
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (tau, d) in self.taus.iter().zip(&self.max_delta) {
            s.push_str(&format!("delta_max[tau={tau}]={d}\n"));
        }
        s.push_str(&format!("uniq_tol={}\n", self.uniq_tol));
        for (k, sol) in self.solutions.iter().enumerate() {
            s.push_str(&format!(
                "seed{k}.iterations={}\nseed{k}.converged={}\nseed{k}.final_residual={}\n",
                sol.iterations,
                sol.converged,
                sol.residual_history.last().copied().unwrap_or(f64::NAN)
            ));
            let hist: Vec<String> = sol.residual_history.iter().map(|r| r.to_string()).collect();
            s.push_str(&format!("seed{k}.residuals={}\n", hist.join(",")));
        }
        s.push_str(&format!("verdict={}\n", if self.verdict { "pass" } else { "fail" }));
        s
    }
}

/// Runs the fixed point from every seed and compares the results on the
/// prefixes `[0, T/4]`, `[0, T/2]`, `[0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_probe(
    init: &InitCondition,
    coupling: &CouplingSpec,
    gamma: f64,
    horizon: f64,
    seeds: &[OccupationHistory],
    tol: f64,
    max_iter: usize,
    settings: &SolveSettings,
) -> Result<ProbeReport> {
    if seeds.len() < 2 {
        return Err(FrontError::parameter(format!("the probe needs at least 2 seeds, got {}", seeds.len())));
    }
    let solutions: Vec<WeakSolution> = seeds
        .par_iter()
        .map(|seed| fixed_point_solve_with(init, coupling, gamma, horizon, seed, tol, max_iter, settings))
        .collect::<Result<_>>()?;
    let taus = vec![0.25 * horizon, 0.5 * horizon, horizon];
    let mut pairs = Vec::new();
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            let (a, b) = (&solutions[i], &solutions[j]);
            let per_time: Vec<(f64, f64)> = a
                .u_traj
                .times
                .iter()
                .zip(a.u_traj.snapshots.iter().zip(&b.u_traj.snapshots))
                .map(|(&t, (x, y))| {
                    let d = x.values().iter().zip(y.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                    (t, d)
                })
                .collect();
            let delta = taus
                .iter()
                .map(|&tau| {
                    per_time
                        .iter()
                        .filter(|(t, _)| *t <= tau + 1e-12)
                        .map(|(_, d)| *d)
                        .fold(0.0, f64::max)
                })
                .collect();
            let kappa_sup = a
                .chi_hist
                .fields()
                .iter()
                .zip(b.chi_hist.fields())
                .map(|(x, y)| kappa(x, y))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            pairs.push(PairDistance {
                seed_i: i,
                seed_j: j,
                delta,
                kappa_sup,
            });
        }
    }
    let max_delta: Vec<f64> = (0..taus.len())
        .map(|k| pairs.iter().map(|p| p.delta[k]).fold(0.0, f64::max))
        .collect();
    let uniq_tol = 4.0 * init.grad_sup() * init.spec().spacing();
    Ok(ProbeReport {
        verdict: max_delta[0] <= uniq_tol,
        taus,
        pairs,
        max_delta,
        uniq_tol,
        solutions,
    })
}

/// `ℒ²({|u(·,t)| ≤ eps})` at every stored time, by node counting.
pub fn classicality_measure(traj: &Trajectory, eps_band: f64) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .map(|(&t, u)| (t, band_area(u, eps_band)))
        .collect()
}

/// `h² #{|u| ≤ eps}`.
pub fn band_area(u: &ScalarField, eps: f64) -> f64 {
    let h = u.spec().spacing();
    h * h * u.values().iter().filter(|v| v.abs() <= eps).count() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonFatteningRow {
    pub time: f64,
    pub eps: Vec<f64>,
    pub areas: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub perimeter: f64,
    pub passed: bool,
}

/// Fits `area(ε) ≈ Cε + b` over `ε ∈ {2h, 4h, 8h}` at each stored time
/// `t ≤ t_max` and requires `b ≤ 2h·perimeter`.
pub fn non_fattening(traj: &Trajectory, t_max: f64) -> Result<Vec<NonFatteningRow>> {
    let h = traj.spec().spacing();
    let eps = vec![2.0 * h, 4.0 * h, 8.0 * h];
    let mut rows = Vec::new();
    for (&t, u) in traj.times.iter().zip(&traj.snapshots) {
        if t > t_max + 1e-12 {
            break;
        }
        let areas: Vec<f64> = eps.iter().map(|&e| band_area(u, e)).collect();
        let (slope, intercept) = linear_fit(&eps, &areas);
        let perimeter = extract_contour(u, 0.0)?.perimeter;
        rows.push(NonFatteningRow {
            time: t,
            passed: intercept <= 2.0 * h * perimeter,
            eps: eps.clone(),
            areas,
            slope,
            intercept,
            perimeter,
        });
    }
    Ok(rows)
}

/// Least-squares `y ≈ a x + b`, returned as `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let sxx: f64 = x.iter().map(|a| (a - xm) * (a - xm)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, ym - slope * xm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::ScalarMap;
    use crate::geometry::circle_u0;
    use crate::grid::GridSpec;
    use crate::solver::uniform_times;

    #[test]
    fn chi_tie_convention() {
        let spec = GridSpec::new(33, 1.0).unwrap();
        let u = ScalarField::from_fn(spec, |p| 0.5 - p[0].hypot(p[1]));
        let chi = chi_from_u(&u);
        for (a, b) in chi.values().iter().zip(u.values()) {
            assert_eq!(*a, if *b >= 0.0 { 1.0 } else { 0.0 });
        }
        assert!(chi_from_u(&ScalarField::constant(spec, -1.0)).values().iter().all(|&v| v == 0.0));
        let mut z = ScalarField::constant(spec, -1.0);
        z.values_mut()[100] = 0.0;
        assert_eq!(chi_from_u(&z).values()[100], 1.0);
    }

    fn setup(n: usize) -> (InitCondition, Vec<f64>) {
        let spec = GridSpec::new(n, 1.5).unwrap();
        (circle_u0(0.5, spec).unwrap(), uniform_times(0.2, 9))
    }

    #[test]
    fn uncoupled_volume_converges_at_once() {
        let (init, times) = setup(65);
        let h = init.spec().spacing();
        let chi0 = OccupationHistory::constant(times.clone(), chi_from_u(&init.u0)).unwrap();
        let coupling = CouplingSpec::Volume { beta: ScalarMap::Constant(0.0) };
        let sol = fixed_point_solve(&init, &coupling, 0.2, 0.2, &chi0, 4.0 * h * h, 12).unwrap();
        // The speed never depends on χ, so the first solve is already the
        // curvature solution; iteration 2 confirms it.
        let direct = solve_frozen(&init, &coupling, 0.2, 0.2, &chi0, &SolveSettings::default()).unwrap();
        assert_eq!(sol.u_traj, direct);
        assert!(sol.converged && sol.iterations <= 2, "{:?}", sol.residual_history);
    }

    #[test]
    fn decoupled_dislocation_expands() {
        let (init, times) = setup(101);
        let spec = *init.spec();
        let h = spec.spacing();
        let chi0 = OccupationHistory::constant(times.clone(), chi_from_u(&init.u0)).unwrap();
        let coupling = CouplingSpec::dislocation(ScalarField::constant(spec, 0.0), 1.0);
        let sol = fixed_point_solve(&init, &coupling, 0.0, 0.2, &chi0, 4.0 * h * h, 12).unwrap();
        assert!(sol.converged && sol.iterations <= 2);
        let r = extract_contour(sol.u_traj.final_snapshot(), 0.0).unwrap().mean_radius();
        assert!((r - 0.7).abs() < 2.0 * h, "{r}");
    }

    #[test]
    fn constant_alpha_fitzhugh_nagumo_expands() {
        let (init, times) = setup(101);
        let spec = *init.spec();
        let h = spec.spacing();
        let chi0 = OccupationHistory::constant(times.clone(), chi_from_u(&init.u0)).unwrap();
        let coupling = CouplingSpec::FitzHughNagumo {
            alpha: ScalarMap::Constant(0.5),
            g_plus: ScalarMap::Constant(1.0),
            g_minus: ScalarMap::Constant(-1.0),
            v0: ScalarField::constant(spec, 0.0),
            heat_safety: 0.5,
        };
        let sol = fixed_point_solve(&init, &coupling, 0.0, 0.2, &chi0, 4.0 * h * h, 12).unwrap();
        assert!(sol.converged && sol.iterations <= 2);
        let r = extract_contour(sol.u_traj.final_snapshot(), 0.0).unwrap().mean_radius();
        assert!((r - 0.6).abs() < 2.0 * h, "{r}");
    }

    #[test]
    fn parameter_errors() {
        let (init, times) = setup(65);
        let h = init.spec().spacing();
        let chi0 = OccupationHistory::constant(times, chi_from_u(&init.u0)).unwrap();
        let coupling = CouplingSpec::Volume { beta: ScalarMap::Constant(0.0) };
        assert!(fixed_point_solve(&init, &coupling, 0.0, 0.2, &chi0, 4.0 * h * h, 0).is_err());
        assert!(fixed_point_solve(&init, &coupling, 0.0, 0.2, &chi0, 0.5 * h * h, 5).is_err());
        assert!(uniqueness_probe(&init, &coupling, 0.0, 0.2, &[chi0], 4.0 * h * h, 5, &SolveSettings::default()).is_err());
    }

    #[test]
    fn brackets_and_self_consistency() {
        let (init, times) = setup(65);
        let spec = *init.spec();
        let h = spec.spacing();
        let chi0 = OccupationHistory::constant(times, chi_from_u(&init.u0)).unwrap();
        let coupling = CouplingSpec::Volume { beta: ScalarMap::Affine { a: 1.0, b: -1.0 } };
        let sol = fixed_point_solve(&init, &coupling, 0.05, 0.2, &chi0, 4.0 * h * h, 12).unwrap();
        for (t, chi) in sol.chi_hist.times().iter().zip(sol.chi_hist.fields()) {
            let u = sol.u_traj.at(*t);
            for (c, v) in chi.values().iter().zip(u.values()) {
                let open = if *v > 0.0 { 1.0 } else { 0.0 };
                let closed = if *v >= 0.0 { 1.0 } else { 0.0 };
                assert!(open <= *c && *c <= closed);
            }
        }
        let again = solve_frozen(&init, &coupling, 0.05, 0.2, &sol.driving_chi, &SolveSettings::default()).unwrap();
        assert_eq!(again, sol.u_traj);
        if sol.converged {
            assert!(*sol.residual_history.last().unwrap() <= 4.0 * h * h);
        }
    }

    #[test]
    fn probe_with_identical_and_decoupled_seeds() {
        let (init, times) = setup(65);
        let spec = *init.spec();
        let h = spec.spacing();
        let chi0 = OccupationHistory::constant(times.clone(), chi_from_u(&init.u0)).unwrap();
        let coupling = CouplingSpec::dislocation(core_free(spec), 0.5);
        let same = uniqueness_probe(&init, &coupling, 0.0, 0.2, &[chi0.clone(), chi0.clone()], 4.0 * h * h, 4, &SolveSettings::default()).unwrap();
        assert!(same.max_delta.iter().all(|&d| d == 0.0));
        let seeds = standard_seeds(&init, &times, init.r0_support).unwrap();
        let dec = uniqueness_probe(&init, &coupling, 0.0, 0.2, &seeds, 4.0 * h * h, 4, &SolveSettings::default()).unwrap();
        assert!(dec.max_delta.iter().all(|&d| d == 0.0));
        assert!(dec.verdict);
        assert!(dec.max_delta.windows(2).all(|w| w[0] <= w[1]));
        assert!(dec.to_csv().lines().count() == 1 + 3 * 3);
        assert!(dec.summary().contains("verdict=pass"));
    }

    fn core_free(spec: GridSpec) -> ScalarField {
        ScalarField::constant(spec, 0.0)
    }

    #[test]
    fn classicality_cases() {
        let spec = GridSpec::new(201, 1.5).unwrap();
        let r = 0.6;
        let u = ScalarField::from_fn(spec, |p| r - p[0].hypot(p[1]));
        let a = band_area(&u, 0.1);
        let exact = 4.0 * std::f64::consts::PI * r * 0.1;
        assert!((a - exact).abs() < 0.05 * exact, "{a} vs {exact}");
        assert_eq!(band_area(&ScalarField::constant(spec, 0.3), 0.0), 0.0);
        let a2 = band_area(&u, 0.2);
        assert!((a2 / a - 2.0).abs() < 0.2);
        let nested = [0.05, 0.1, 0.2].map(|e| band_area(&u, e));
        assert!(nested.windows(2).all(|w| w[0] <= w[1]));
    }
}

//! Scenario execution: builds the initial data and coupling from a config,
//! computes the weak solution, runs the requested checks and writes every
//! artifact together with a checksummed manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{parse_config, Check, InitKind, ScenarioConfig, SeedKind};
use crate::contour::{extract_contour, lebesgue_measure};
use crate::coupling::{disc_indicator, kappa, CouplingSpec, OccupationHistory, ScalarMap};
use crate::error::Result;
use crate::geometry::{circle_u0, star_shaped_u0, verify_i2, InitCondition, CERTIFY_LAMBDA_SAMPLES};
use crate::grid::ScalarField;
use crate::solver::{regularity_report, uniform_times, Trajectory};
use crate::verify::{
    band_measure_report, cone_report, continuous_dependence_report, empirical_gamma_bar, key_estimate_report,
    lower_gradient_report, m1_stable, perimeter_report, star_shape_report, KeyEstimate, ReportRow,
    VerificationReport,
};
use crate::weak::{
    chi_from_u, fixed_point_solve_with, non_fattening, solve_frozen, uniqueness_probe, SolveSettings, WeakSolution,
};

pub const FAILED_MARKER: &str = "FAILED";
pub const MANIFEST: &str = "manifest.txt";

/// Relative radius tolerance of the circle oracle for an area law.
pub fn oracle_tolerance(law: ScalarMap) -> f64 {
    if matches!(law, ScalarMap::Constant(_)) {
        0.02
    } else {
        0.03
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    /// `(check name, passed)` in execution order.
    pub checks: Vec<(String, bool)>,
    /// sha256 of the manifest text.
    pub digest: String,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    pub fn check(&self, name: &str) -> Option<bool> {
        self.checks.iter().find(|(n, _)| n == name).map(|(_, ok)| *ok)
    }
}

pub fn build_init(config: &ScenarioConfig) -> Result<InitCondition> {
    let spec = config.grid()?;
    match config.init.kind {
        InitKind::Circle => circle_u0(config.init.r0, spec),
        InitKind::StarShaped => star_shaped_u0(&config.init.kernel_points, config.init.r0, spec),
    }
}

/// RK4 solution of `R′ = β(πR²) − γ/R` from `R(0) = r0`.
pub fn radius_oracle(law: ScalarMap, gamma: f64, r0: f64, t: f64) -> f64 {
    let f = |r: f64| law.eval(std::f64::consts::PI * r * r) - gamma / r;
    let steps = ((t / 1e-4).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let mut r = r0;
    for _ in 0..steps {
        let k1 = f(r);
        let k2 = f(r + 0.5 * dt * k1);
        let k3 = f(r + 0.5 * dt * k2);
        let k4 = f(r + dt * k3);
        r += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    r
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST && n != FAILED_MARKER) {
            out.push(path.strip_prefix(root).unwrap().to_path_buf());
        }
    }
    Ok(())
}

/// Writes `manifest.txt` (`sha256  relative/path`, sorted) and returns the
/// digest of the manifest itself.
pub fn write_manifest(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut rel: Vec<String> = files
        .iter()
        .map(|p| p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"))
        .collect();
    rel.sort();
    let mut text = String::new();
    for r in &rel {
        let bytes = fs::read(dir.join(r))?;
        text.push_str(&format!("{}  {r}\n", sha256_hex(&bytes)));
    }
    fs::write(dir.join(MANIFEST), &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

fn settings(config: &ScenarioConfig) -> SolveSettings {
    SolveSettings {
        cfl_safety: config.cfl_safety,
        far_radius: None,
    }
}

/// Constant-in-time occupation histories for the configured probe seeds.
pub fn seed_histories(config: &ScenarioConfig, init: &InitCondition, times: &[f64]) -> Result<Vec<OccupationHistory>> {
    let spec = *init.spec();
    config
        .seeds
        .iter()
        .map(|s| {
            let chi = match *s {
                SeedKind::Initial => chi_from_u(&init.u0),
                SeedKind::Empty => ScalarField::constant(spec, 0.0),
                SeedKind::Ball(r) => disc_indicator(spec, r),
            };
            OccupationHistory::constant(times.to_vec(), chi)
        })
        .collect()
}

fn weak_solve(
    config: &ScenarioConfig,
    init: &InitCondition,
    coupling: &CouplingSpec,
    gamma: f64,
    times: &[f64],
) -> Result<WeakSolution> {
    let seed = OccupationHistory::constant(times.to_vec(), chi_from_u(&init.u0))?;
    fixed_point_solve_with(
        init,
        coupling,
        gamma,
        config.horizon,
        &seed,
        config.tolerance()?,
        config.max_iter,
        &settings(config),
    )
}

fn fixed_point_text(sol: &WeakSolution) -> String {
    let mut s = format!("iterations={}\nconverged={}\n", sol.iterations, sol.converged);
    for (k, (r, p)) in sol.residual_history.iter().zip(&sol.prefix_residual_history).enumerate() {
        s.push_str(&format!("residual[{}]={r}\nprefix_residual[{}]={p}\n", k + 1, k + 1));
    }
    s
}

fn write_contours(traj: &Trajectory, dir: &Path) -> Result<()> {
    let cdir = dir.join("contours");
    fs::create_dir_all(&cdir)?;
    for (k, u) in traj.snapshots.iter().enumerate() {
        extract_contour(u, 0.0)?.save_csv(&cdir.join(format!("zero_{k:03}.csv")))?;
    }
    Ok(())
}

/// `time,mean_radius,perimeter,area[,oracle_radius,rel_error]` per snapshot.
fn radius_table(config: &ScenarioConfig, traj: &Trajectory) -> Result<(String, Option<VerificationReport>)> {
    let law = match config.init.kind {
        InitKind::Circle => config.coupling.area_law(),
        InitKind::StarShaped => None,
    };
    let mut csv = String::from("time,mean_radius,perimeter,area");
    if law.is_some() {
        csv.push_str(",oracle_radius,rel_error");
    }
    csv.push('\n');
    let mut rep = law.map(|_| VerificationReport {
        name: "radius_oracle".into(),
        rows: Vec::new(),
        constants: Vec::new(),
        tolerances: Vec::new(),
        notes: Vec::new(),
        passed: true,
    });
    for (&t, u) in traj.times.iter().zip(&traj.snapshots) {
        let c = extract_contour(u, 0.0)?;
        let r = c.mean_radius();
        csv.push_str(&format!("{t},{r},{},{}", c.perimeter, lebesgue_measure(u, 0.0)));
        if let (Some(law), Some(rep)) = (law, rep.as_mut()) {
            let o = radius_oracle(law, config.gamma, config.init.r0, t);
            let e = (r - o).abs() / o;
            csv.push_str(&format!(",{o},{e}"));
            let tol = oracle_tolerance(law);
            if e > tol {
                rep.passed = false;
            }
            rep.rows.push(ReportRow {
                time: t,
                measured: r,
                bound: o,
                margin: tol - e,
                level: None,
            });
        }
        csv.push('\n');
    }
    if let (Some(law), Some(rep)) = (law, rep.as_mut()) {
        rep.tolerances.push(("relative".into(), oracle_tolerance(law)));
        let worst = rep.rows.iter().map(|r| oracle_tolerance(law) - r.margin).fold(0.0, f64::max);
        rep.constants.push(("max_rel_error".into(), worst));
    }
    Ok((csv, rep))
}

fn non_fattening_report(traj: &Trajectory, t_max: f64) -> Result<VerificationReport> {
    let rows = non_fattening(traj, t_max)?;
    let h = traj.spec().spacing();
    let mut rep = VerificationReport {
        name: "non_fattening".into(),
        rows: Vec::new(),
        constants: vec![("t_max".into(), t_max)],
        tolerances: vec![("intercept_per_perimeter".into(), 2.0 * h)],
        notes: Vec::new(),
        passed: rows.iter().all(|r| r.passed),
    };
    for r in rows {
        let bound = 2.0 * h * r.perimeter;
        rep.rows.push(ReportRow {
            time: r.time,
            measured: r.intercept,
            bound,
            margin: bound - r.intercept,
            level: Some(r.slope),
        });
    }
    Ok(rep)
}

fn i2_report(init: &InitCondition) -> Result<VerificationReport> {
    let c = verify_i2(init, CERTIFY_LAMBDA_SAMPLES)?;
    Ok(VerificationReport {
        name: "initial_displacement".into(),
        rows: vec![ReportRow {
            time: 0.0,
            measured: c.worst_margin,
            bound: -c.tolerance,
            margin: c.worst_margin + c.tolerance,
            level: None,
        }],
        constants: vec![
            ("eta0".into(), init.eta0),
            ("delta0".into(), init.delta0),
            ("lambda0".into(), init.lambda0),
        ],
        tolerances: vec![("margin".into(), c.tolerance)],
        notes: Vec::new(),
        passed: c.passed,
    })
}

/// Reports computable from a stored trajectory and its initial data alone.
pub fn trajectory_reports(checks: &[Check], traj: &Trajectory, init: &InitCondition) -> Result<Vec<VerificationReport>> {
    let mut out = Vec::new();
    if checks.contains(&Check::InitialDisplacement) {
        out.push(i2_report(init)?);
    }
    let needs_key = checks.iter().any(|c| {
        matches!(
            c,
            Check::KeyEstimate | Check::LowerGradient | Check::Cone | Check::Perimeter | Check::BandMeasure | Check::NonFattening
        )
    });
    if !needs_key {
        return Ok(out);
    }
    let (key, key_rep): (KeyEstimate, VerificationReport) = key_estimate_report(traj, init, init.lambda_bar())?;
    let k_fit = if traj.snapshots.len() >= 3 {
        regularity_report(traj)?.k_fit
    } else {
        0.0
    };
    for &c in checks {
        let rep = match c {
            Check::KeyEstimate => key_rep.clone(),
            Check::LowerGradient => lower_gradient_report(traj, init, &key)?,
            Check::Cone => cone_report(traj, init, &key, k_fit)?,
            Check::Perimeter => perimeter_report(traj, init, &key, k_fit)?,
            Check::BandMeasure => band_measure_report(traj, init, &key)?,
            Check::NonFattening => non_fattening_report(traj, key.t_bar_emp)?,
            _ => continue,
        };
        out.push(rep);
    }
    Ok(out)
}

/// Frozen-history solves driven by discs of radius `r` and `r + 2h`, then
/// `r + h`; `M₁` must be finite and stable under halving.
fn continuous_dependence(
    config: &ScenarioConfig,
    init: &InitCondition,
    coupling: &CouplingSpec,
    times: &[f64],
) -> Result<(VerificationReport, VerificationReport)> {
    let spec = *init.spec();
    let h = spec.spacing();
    let r = config.init.front_radius();
    let frozen = |radius: f64| -> Result<(Trajectory, ScalarField)> {
        let chi = disc_indicator(spec, radius);
        let hist = OccupationHistory::constant(times.to_vec(), chi.clone())?;
        Ok((solve_frozen(init, coupling, config.gamma, config.horizon, &hist, &settings(config))?, chi))
    };
    let (base, chi0) = frozen(r)?;
    let mut reps = Vec::new();
    for dr in [2.0 * h, h] {
        let (other, chi1) = frozen(r + dr)?;
        let k1 = kappa(&chi0, &chi1)?;
        let mut rep = continuous_dependence_report(&base, &other, k1, k1 * k1)?;
        rep.constants.push(("perturbation".into(), dr));
        reps.push(rep);
    }
    let m_large = reps[0].get("M1_fit").unwrap();
    let m_small = reps[1].get("M1_fit").unwrap();
    let stable = m1_stable(m_large, m_small);
    let mut small = reps.pop().unwrap();
    let mut large = reps.pop().unwrap();
    large.name = "continuous_dependence".into();
    small.name = "continuous_dependence_half".into();
    large.constants.push(("M1_fit_half".into(), m_small));
    large.constants.push(("M1_stable".into(), if stable { 1.0 } else { 0.0 }));
    large.tolerances.push(("M1_relative_change".into(), 0.5));
    large.passed = large.passed && small.passed && stable;
    Ok((large, small))
}

/// Star-shape report at the configured `γ` and the sweep summary.
fn star_shape(
    config: &ScenarioConfig,
    init: &InitCondition,
    coupling: &CouplingSpec,
    main: &Trajectory,
    times: &[f64],
) -> Result<(VerificationReport, String)> {
    let lb = init.lambda_bar();
    let mut rep = star_shape_report(main, init, lb)?;
    let mut sweep = Vec::new();
    let mut csv = String::from("gamma,passed,min_margin_rate\n");
    let mut gammas = config.gamma_sweep.clone();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    for g in gammas {
        let r = if g == config.gamma {
            rep.clone()
        } else {
            let sol = weak_solve(config, init, coupling, g, times)?;
            star_shape_report(&sol.u_traj, init, lb)?
        };
        csv.push_str(&format!("{g},{},{}\n", r.passed, r.get("min_margin_rate").unwrap()));
        sweep.push((g, r.passed));
    }
    let gamma_bar = empirical_gamma_bar(&sweep);
    rep.constants.push(("gamma_bar_emp".into(), gamma_bar));
    rep.passed = rep.passed && gamma_bar > 0.0;
    if !(gamma_bar > 0.0) {
        rep.notes.push("no positive gamma passed the sweep".into());
    }
    Ok((rep, csv))
}

fn probe_artifacts(
    config: &ScenarioConfig,
    init: &InitCondition,
    coupling: &CouplingSpec,
    times: &[f64],
    dir: &Path,
) -> Result<bool> {
    let seeds = seed_histories(config, init, times)?;
    let rep = uniqueness_probe(
        init,
        coupling,
        config.gamma,
        config.horizon,
        &seeds,
        config.tolerance()?,
        config.max_iter,
        &settings(config),
    )?;
    fs::write(dir.join("probe.csv"), rep.to_csv())?;
    let tol = config.tolerance()?;
    let all_converged = rep.solutions.iter().all(|s| s.converged);
    let mut summary = rep.summary();
    summary.push_str(&format!("tolerance={tol}\nall_converged={all_converged}\n"));
    fs::write(dir.join("probe_summary.txt"), summary)?;
    Ok(rep.verdict && all_converged)
}

fn write_summary(dir: &Path, config: &ScenarioConfig, checks: &[(String, bool)]) -> Result<()> {
    let mut s = format!("scenario={}\n", config.name);
    for (n, ok) in checks {
        s.push_str(&format!("{n}={}\n", if *ok { "pass" } else { "fail" }));
    }
    let all = checks.iter().all(|(_, ok)| *ok);
    s.push_str(&format!("overall={}\n", if all { "pass" } else { "fail" }));
    fs::write(dir.join("summary.txt"), s)?;
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(marker)?;
    }
    Ok(())
}

fn with_marker<T>(dir: &Path, f: impl FnOnce() -> Result<T>) -> Result<T> {
    prepare_dir(dir)?;
    let r = f();
    if let Err(e) = &r {
        let _ = fs::write(dir.join(FAILED_MARKER), format!("{e}\n"));
    }
    r
}

/// Runs a scenario into `out_dir`. Module errors leave a `FAILED` marker
/// next to whatever was written.
pub fn run(config: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome> {
    with_marker(out_dir, || run_inner(config, out_dir))
}

fn run_inner(config: &ScenarioConfig, dir: &Path) -> Result<RunOutcome> {
    fs::write(dir.join("config.txt"), config.to_text())?;
    let init = build_init(config)?;
    init.save(&dir.join("init"))?;
    let spec = *init.spec();
    let coupling = config.coupling.build(spec)?;
    coupling.validate(&spec)?;
    let times = uniform_times(config.horizon, config.output_count);

    let sol = weak_solve(config, &init, &coupling, config.gamma, &times)?;
    fs::write(dir.join("fixed_point.txt"), fixed_point_text(&sol))?;
    let traj = &sol.u_traj;
    traj.dump(&dir.join("trajectory"))?;
    write_contours(traj, dir)?;
    let (radius_csv, oracle) = radius_table(config, traj)?;
    fs::write(dir.join("radius.csv"), radius_csv)?;

    let mut checks = vec![("fixed_point".to_string(), sol.converged)];
    let mut reports = Vec::new();
    if let (true, Some(rep)) = (config.has_check(Check::RadiusOracle), oracle) {
        reports.push(rep);
    }
    reports.extend(trajectory_reports(&config.checks, traj, &init)?);
    if config.has_check(Check::StarShape) {
        let (rep, csv) = star_shape(config, &init, &coupling, traj, &times)?;
        fs::write(dir.join("star_sweep.csv"), csv)?;
        reports.push(rep);
    }
    if config.has_check(Check::ContinuousDependence) {
        let (large, small) = continuous_dependence(config, &init, &coupling, &times)?;
        small.save(&dir.join("checks"))?;
        reports.push(large);
    }
    for rep in &reports {
        rep.save(&dir.join("checks"))?;
        checks.push((rep.name.clone(), rep.passed));
    }
    if config.has_check(Check::Uniqueness) {
        let ok = probe_artifacts(config, &init, &coupling, &times, dir)?;
        checks.push(("uniqueness".into(), ok));
    }
    write_summary(dir, config, &checks)?;
    let digest = write_manifest(dir)?;
    Ok(RunOutcome {
        output_dir: dir.to_path_buf(),
        checks,
        digest,
    })
}

/// Only the multi-seed uniqueness probe.
pub fn run_probe(config: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome> {
    with_marker(out_dir, || {
        fs::write(out_dir.join("config.txt"), config.to_text())?;
        let init = build_init(config)?;
        let spec = *init.spec();
        let coupling = config.coupling.build(spec)?;
        coupling.validate(&spec)?;
        let times = uniform_times(config.horizon, config.output_count);
        let ok = probe_artifacts(config, &init, &coupling, &times, out_dir)?;
        let checks = vec![("uniqueness".to_string(), ok)];
        write_summary(out_dir, config, &checks)?;
        let digest = write_manifest(out_dir)?;
        Ok(RunOutcome {
            output_dir: out_dir.to_path_buf(),
            checks,
            digest,
        })
    })
}

/// Result of re-verifying a stored run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverifyOutcome {
    pub checks: Vec<(String, bool)>,
    /// Checks whose regenerated CSV or verdict differs from the stored one.
    pub mismatched: Vec<String>,
}

impl ReverifyOutcome {
    pub fn passed(&self) -> bool {
        self.mismatched.is_empty() && self.checks.iter().all(|(_, ok)| *ok)
    }
}

/// Reloads `init/` and `trajectory/` of a run directory, recomputes the
/// trajectory-only checks into `reverify/` and compares with `checks/`.
pub fn verify_dir(dir: &Path) -> Result<ReverifyOutcome> {
    let init = InitCondition::load(&dir.join("init"))?;
    let traj = Trajectory::load(&dir.join("trajectory"))?;
    let config_path = dir.join("config.txt");
    let checks: Vec<Check> = if config_path.exists() {
        let config = parse_config(&fs::read_to_string(&config_path)?)?;
        config.checks.into_iter().filter(|c| c.is_trajectory_only()).collect()
    } else {
        Check::ALL.into_iter().filter(|c| c.is_trajectory_only()).collect()
    };
    let reports = trajectory_reports(&checks, &traj, &init)?;
    let out = dir.join("reverify");
    let mut result = ReverifyOutcome {
        checks: Vec::new(),
        mismatched: Vec::new(),
    };
    for rep in &reports {
        rep.save(&out)?;
        result.checks.push((rep.name.clone(), rep.passed));
        let stored = dir.join("checks");
        for suffix in ["csv", "verdict.txt"] {
            let file = format!("{}.{suffix}", rep.name);
            if let Ok(old) = fs::read(stored.join(&file)) {
                if old != fs::read(out.join(&file))? {
                    result.mismatched.push(file);
                }
            }
        }
    }
    Ok(result)
}

//! Implementations behind the CLI subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use cbf_core::cbf::{polytope_inner_check, Cbf, InnerCheckReport, QuadraticCbf, SafeSetSpec};
use cbf_core::dynamics::LtiSystem;
use cbf_core::filter::{solve_qp, QpInstance};
use cbf_core::lie::{
    global_relative_degree_affine_lti, lie_from_grad, singular_set_scan, RelativeDegreeReport,
};
use cbf_core::sim::{dt_sweep, preset, run, Metrics, Scenario, Trajectory};
use cbf_core::{InputVec, StateVec};

use crate::config::{
    build_bounds, build_safe_set, build_system, load_config, scenario_to_config, to_scenario,
    ScenarioConfig,
};
use crate::output::{fmt_float, write_json, write_trajectory_csv};
use crate::CliError;

/// Summary of one completed run, also written to the JSON output path.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub scenario: ScenarioConfig,
    pub metrics: Metrics,
    pub duration_seconds: f64,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn execute(
    scn: &Scenario,
    echo: ScenarioConfig,
    csv_path: PathBuf,
    json_path: PathBuf,
) -> Result<(RunReport, Trajectory), CliError> {
    for w in scn.warnings() {
        eprintln!("warning: {w}");
    }
    let started = Instant::now();
    let (traj, metrics) = run(scn)?;
    let duration_seconds = started.elapsed().as_secs_f64();
    write_trajectory_csv(&traj, &csv_path)?;
    let report = RunReport {
        scenario: echo,
        metrics,
        duration_seconds,
        csv_path,
        json_path: json_path.clone(),
    };
    write_json(&report, &json_path)?;
    Ok((report, traj))
}

/// Runs a config-driven scenario, writing the trajectory CSV and JSON report.
///
/// Output paths come from the config's `[outputs]` table; `--out DIR` (when
/// given) redirects both into `DIR` under the config's stem name.
pub fn cmd_simulate(config_path: &Path, out_dir: Option<&Path>) -> Result<RunReport, CliError> {
    let cfg = load_config(config_path)?;
    let scn = to_scenario(&cfg)?;
    let stem = stem_of(config_path);
    let (csv_path, json_path) = match out_dir {
        Some(dir) => (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json"))),
        None => (
            cfg.outputs
                .as_ref()
                .and_then(|o| o.csv.clone())
                .unwrap_or_else(|| PathBuf::from(format!("{stem}.csv"))),
            cfg.outputs
                .as_ref()
                .and_then(|o| o.json.clone())
                .unwrap_or_else(|| PathBuf::from(format!("{stem}.json"))),
        ),
    };
    let (report, _) = execute(&scn, cfg, csv_path, json_path)?;
    Ok(report)
}

/// Runs a bundled preset, writing `<out>/<name>.csv` and `<out>/<name>.json`.
pub fn cmd_reproduce(name: &str, out_dir: &Path) -> Result<RunReport, CliError> {
    let scn = preset(name)?;
    let echo = scenario_to_config(&scn);
    let csv_path = out_dir.join(format!("{name}.csv"));
    let json_path = out_dir.join(format!("{name}.json"));
    let (report, _) = execute(&scn, echo, csv_path, json_path)?;
    Ok(report)
}

/// One row of the side-by-side summary table.
pub fn summary_line(name: &str, m: &Metrics) -> String {
    format!(
        "{name:<18} min_h={:>12} violated={:<5} input=[{}, {}] total_variation={} chatter_count={} near_singular={}",
        fmt_float(m.min_h),
        m.violated,
        fmt_float(m.input_min),
        fmt_float(m.input_max),
        fmt_float(m.total_variation),
        m.chatter_count,
        m.steps_near_singular,
    )
}

/// Diagnostics emitted by `check-cbf`.
#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub grid_per_dim: usize,
    pub eps: f64,
    /// Grid scan for states where the weakest member has `‖L_g h‖ ≤ eps`.
    pub singular_scan: RelativeDegreeReport,
    /// Global relative degree when the barrier is a single affine function.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_relative_degree: Option<RelativeDegreeReport>,
    /// Per-member global relative degrees for a polytope barrier.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub member_relative_degrees: Option<Vec<RelativeDegreeReport>>,
    /// Fraction of in-set grid points where the barrier condition admits some
    /// input (within `±u_max` per channel when a probe bound is given).
    pub feasibility: FeasibilityReport,
    /// Inclusion check of a polytope barrier against its reference ellipse.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_check: Option<InnerCheckReport>,
}

#[derive(Debug, Serialize)]
pub struct FeasibilityReport {
    pub points_in_set: usize,
    pub feasible_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
}

/// Samples barrier validity diagnostics over the config's admissible box.
pub fn cmd_check_cbf(
    config_path: &Path,
    grid: usize,
    eps: f64,
    u_max: Option<f64>,
) -> Result<CheckReport, CliError> {
    let cfg = load_config(config_path)?;
    let system = build_system(&cfg.system)?;
    let spec = build_safe_set(&cfg.cbf)?;
    let gamma = crate::config::build_gamma(&cfg.gamma)?;
    let bounds = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| CliError::Config("box: check-cbf requires a [box] table with lower/upper".into()))
        .and_then(build_bounds)?;

    let singular_scan = singular_set_scan(&system, &spec, &bounds, grid, eps)?;

    let mut global_relative_degree = None;
    let mut member_relative_degrees = None;
    match &spec {
        SafeSetSpec::Single(Cbf::Affine(a)) => {
            global_relative_degree = Some(global_relative_degree_affine_lti(&system, a, eps)?);
        }
        SafeSetSpec::Polytope(set) => {
            member_relative_degrees = Some(
                set.members()
                    .iter()
                    .map(|m| global_relative_degree_affine_lti(&system, m, eps))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        _ => {}
    }

    let feasibility = feasibility_scan(&system, &spec, &gamma, &bounds, grid, u_max);

    let inner_check = match (&spec, &cfg.cbf.outer) {
        (SafeSetSpec::Polytope(set), Some(outer)) => {
            let p = crate::config::to_matrix(&outer.p_matrix, "cbf.outer.P")?;
            let quad = QuadraticCbf::new(outer.beta, StateVec::from_vec(outer.c.clone()), p)?;
            Some(polytope_inner_check(set, &Cbf::Quadratic(quad), &bounds, grid)?)
        }
        _ => None,
    };

    Ok(CheckReport {
        grid_per_dim: grid,
        eps,
        singular_scan,
        global_relative_degree,
        member_relative_degrees,
        feasibility,
        inner_check,
    })
}

fn feasibility_scan(
    system: &LtiSystem,
    spec: &SafeSetSpec,
    gamma: &cbf_core::cbf::ClassKappaE,
    bounds: &cbf_core::dynamics::AdmissibleBox,
    grid: usize,
    u_max: Option<f64>,
) -> FeasibilityReport {
    let m = system.input_dim();
    let mut points_in_set = 0usize;
    let mut feasible_points = 0usize;
    for x in bounds.grid_points(grid) {
        if !spec.contains(&x) {
            continue;
        }
        points_in_set += 1;
        let constraints = (0..spec.member_count())
            .map(|i| {
                let lie = lie_from_grad(system, &spec.member_grad(i, &x), &x);
                let h = spec.member_h(i, &x);
                (lie.lg_h.clone(), -gamma.eval(h) - lie.lf_h)
            })
            .collect();
        let mut inst = QpInstance::new(InputVec::zeros(m), constraints);
        if let Some(um) = u_max {
            inst.bounds = Some((
                InputVec::from_element(m, -um),
                InputVec::from_element(m, um),
            ));
        }
        if solve_qp(&inst).is_ok() {
            feasible_points += 1;
        }
    }
    FeasibilityReport {
        points_in_set,
        feasible_points,
        fraction: (points_in_set > 0).then(|| feasible_points as f64 / points_in_set as f64),
        u_max,
    }
}

/// Reruns a config at each sampling interval; returns a CSV table of metrics.
pub fn cmd_sweep(config_path: &Path, dts: &[f64]) -> Result<String, CliError> {
    if dts.is_empty() {
        return Err(CliError::Config("dts: provide at least one sampling interval".into()));
    }
    let cfg = load_config(config_path)?;
    let scn = to_scenario(&cfg)?;
    for w in scn.warnings() {
        eprintln!("warning: {w}");
    }
    let metrics = dt_sweep(&scn, dts)?;
    let mut out = String::from(
        "dt,min_h,violated,input_min,input_max,total_variation,chatter_count,steps_near_singular\n",
    );
    for (dt, m) in dts.iter().zip(&metrics) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_float(*dt),
            fmt_float(m.min_h),
            u8::from(m.violated),
            fmt_float(m.input_min),
            fmt_float(m.input_max),
            fmt_float(m.total_variation),
            m.chatter_count,
            m.steps_near_singular,
        ));
    }
    Ok(out)
}


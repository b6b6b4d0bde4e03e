use std::fs;
use std::path::Path;

use folio::experiment::{run_experiment, smooth_density, ExperimentConfig};
use folio::flows::{ede_audit, heat_flow_with, k_convexity_audit, propagators, ConvexityOptions};
use folio::foliation::{build_quotient, check_mm_foliation, SweepMode};
use folio::generators::{sphere_distance_partition, GeneratorSpec};
use folio::io::{read_json, read_partition, read_space, write_atomic, write_json};
use folio::spectral::{
    build_chain_graph, build_kernel_graph_with, eigensolvers, spectral_gap_q, GapOptions, KernelScaling,
};
use folio::transport::{solve_with, solvers};
use folio::{DensityVector, FiniteMMSpace, GraphOperator, ProbVector};
use serde_json::{json, Value};
use thiserror::Error;

use crate::{Command, GraphArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] folio::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Core(_) => 1,
        }
    }
}

/// Whether the mathematical check behind a command held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Passed,
    Failed,
}

impl From<bool> for Status {
    fn from(ok: bool) -> Self {
        if ok {
            Status::Passed
        } else {
            Status::Failed
        }
    }
}

type CliResult = Result<Status, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Generate { config, output } => generate(&config, &output.out),
        Command::Validate { space, tol, out } => validate(&space, tol, out.as_deref()),
        Command::Ot {
            space,
            mu,
            nu,
            q,
            solver,
            output,
        } => ot(&space, &mu, &nu, q, &solver, &output.out),
        Command::Foliate {
            space,
            partition,
            bands,
            tol,
            sweep,
            seed,
            output,
        } => foliate(&space, partition.as_deref(), bands, tol, &sweep, seed, &output.out),
        Command::Spectrum {
            space,
            graph,
            k,
            solver,
            output,
        } => spectrum(&space, &graph, k, &solver, &output.out),
        Command::Gap {
            space,
            graph,
            q,
            seed,
            restarts,
            output,
        } => gap(&space, &graph, q, seed, restarts, &output.out),
        Command::Heat {
            space,
            graph,
            density,
            seed,
            t_min,
            t_max,
            steps,
            propagator,
            tol,
            output,
        } => {
            let times = time_grid(t_min, t_max, steps)?;
            heat(
                &space,
                &graph,
                density.as_deref(),
                seed,
                &times,
                &propagator,
                tol,
                &output.out,
            )
        }
        Command::Audit {
            space,
            k,
            trials,
            seed,
            slack,
            output,
        } => audit(&space, k, trials, seed, slack, &output.out),
        Command::Experiment {
            name,
            config,
            seed,
            tol,
            n,
            b,
            params,
            out,
        } => experiment(name, config.as_deref(), seed, tol, n, b, &params, out),
    }
}

fn print(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
}

fn generate(config: &Path, out: &Path) -> CliResult {
    let spec: GeneratorSpec = read_json(config)?;
    let generated = spec.generate()?;
    write_json(&out.join("space.json"), &generated.space)?;
    let mut files = vec!["space.json"];
    if let Some(p) = &generated.partition {
        write_json(&out.join("partition.json"), p)?;
        files.push("partition.json");
    }
    print(&json!({
        "points": generated.space.len(),
        "classes": generated.partition.as_ref().map(|p| p.len()),
        "files": files,
    }));
    Ok(Status::Passed)
}

fn validate(space: &Path, tol: Option<f64>, out: Option<&Path>) -> CliResult {
    let space = read_space(space)?;
    let report = match tol {
        Some(t) if !(t >= 0.0) => return Err(CliError::Usage(format!("--tol must be non-negative, got {t}"))),
        Some(t) => space.validate_lenient(t),
        None => space.validate(),
    };
    if let Some(dir) = out {
        write_json(&dir.join("validation.json"), &report)?;
    }
    print(&serde_json::to_value(&report).map_err(folio::Error::from)?);
    Ok(report.is_valid().into())
}

fn read_measure(path: &Path) -> Result<ProbVector, CliError> {
    let raw: Vec<f64> = read_json(path)?;
    Ok(ProbVector::new(raw)?)
}

fn ot(space: &Path, mu: &Path, nu: &Path, q: f64, solver: &str, out: &Path) -> CliResult {
    let space = read_space(space)?;
    let (mu, nu) = (read_measure(mu)?, read_measure(nu)?);
    let registry = solvers();
    let plan = solve_with(registry.get(solver)?, &space, &mu, &nu, q)?;
    write_atomic(&out.join("plan.csv"), |w| plan.write_csv(&space, w))?;
    let summary = json!({
        "solver": solver,
        "exponent": q,
        "distance": plan.distance(),
        "cost": plan.cost,
        "entropic_objective": plan.entropic_objective,
        "marginals": plan.marginal_report(),
    });
    write_json(&out.join("ot.json"), &summary)?;
    print(&summary);
    Ok(Status::Passed)
}

fn sweep_mode(name: &str, seed: u64) -> Result<SweepMode, CliError> {
    match name {
        "auto" => Ok(SweepMode::Auto { budget: 20_000, seed }),
        "exhaustive" => Ok(SweepMode::Exhaustive),
        other => Err(CliError::Usage(format!(
            "unknown sweep {other:?}; use auto or exhaustive"
        ))),
    }
}

fn foliate(
    space: &Path,
    partition: Option<&Path>,
    bands: Option<usize>,
    tol: f64,
    sweep: &str,
    seed: u64,
    out: &Path,
) -> CliResult {
    if !(tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    let mode = sweep_mode(sweep, seed)?;
    let space = read_space(space)?;
    let partition = match (partition, bands) {
        (Some(p), None) => read_partition(p)?,
        (None, Some(b)) => sphere_distance_partition(&space, b)?,
        _ => return Err(CliError::Usage("give exactly one of --partition and --bands".into())),
    };
    let bundle = build_quotient(&space, &partition)?;
    let (report, certified) = check_mm_foliation(&bundle, tol, mode)?;
    write_atomic(&out.join("pairs.csv"), |w| report.write_csv(w))?;
    write_json(&out.join("quotient.json"), certified.quotient())?;
    let summary = json!({
        "passed": report.passed,
        "tol": tol,
        "certification": certified.certification(),
        "quotient_metric_valid": certified.metric_valid(),
        "metric": report.metric,
        "w2_passed": report.w2_passed,
        "wq_passed": report.wq_passed,
        "exhaustive": report.exhaustive,
        "pairs_checked": report.pairs.len(),
        "pairs_total": report.pairs_total,
        "worst_pair": report.worst(),
    });
    write_json(&out.join("certification.json"), &summary)?;
    print(&summary);
    Ok(report.passed.into())
}

fn build_graph(space: &FiniteMMSpace, args: &GraphArgs) -> Result<GraphOperator, CliError> {
    let scaling = match args.scaling.as_str() {
        "quadrature" => KernelScaling::Quadrature,
        "sampled" => KernelScaling::Sampled,
        "raw" => KernelScaling::Raw,
        other => return Err(CliError::Usage(format!("unknown scaling {other:?}"))),
    };
    Ok(match args.bandwidth {
        Some(t) => build_kernel_graph_with(space, t, scaling)?,
        None => build_chain_graph(space)?,
    })
}

fn spectrum(space: &Path, graph: &GraphArgs, k: Option<usize>, solver: &str, out: &Path) -> CliResult {
    let space = read_space(space)?;
    let g = build_graph(&space, graph)?;
    let registry = eigensolvers();
    let spec = registry.get(solver)?.solve(&g, k, false)?;
    write_atomic(&out.join("spectrum.csv"), |w| spec.write_csv(w))?;
    print(&json!({
        "solver": solver,
        "vertices": g.len(),
        "gap": spec.gap(),
        "eigenvalues": spec.eigenvalues.iter().take(10).collect::<Vec<_>>(),
    }));
    Ok(Status::Passed)
}

fn gap(space: &Path, graph: &GraphArgs, q: f64, seed: u64, restarts: usize, out: &Path) -> CliResult {
    let space = read_space(space)?;
    let g = build_graph(&space, graph)?;
    let opts = GapOptions {
        seed,
        restarts,
        ..GapOptions::default()
    };
    let report = spectral_gap_q(&g, q, &opts)?;
    let summary = json!({
        "q": report.q,
        "value": report.value,
        "spread": report.spread,
        "restart_values": report.restart_values,
        "seed": seed,
    });
    write_json(&out.join("gap.json"), &summary)?;
    print(&summary);
    Ok(Status::Passed)
}

fn time_grid(t_min: f64, t_max: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    if !(t_min >= 0.0 && t_max > t_min) || steps == 0 {
        return Err(CliError::Usage("need 0 <= --t-min < --t-max and --steps >= 1".into()));
    }
    Ok((0..=steps)
        .map(|s| t_min + (t_max - t_min) * s as f64 / steps as f64)
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn heat(
    space_path: &Path,
    graph: &GraphArgs,
    density: Option<&Path>,
    seed: Option<u64>,
    times: &[f64],
    propagator: &str,
    tol: Option<f64>,
    out: &Path,
) -> CliResult {
    let space = read_space(space_path)?;
    let g = build_graph(&space, graph)?;
    let raw: Vec<f64> = match (density, seed) {
        (Some(path), _) => read_json(path)?,
        (None, Some(seed)) => smooth_density(&space, seed)?.into_inner(),
        (None, None) => return Err(CliError::Usage("give --density or --seed".into())),
    };
    if raw.len() != g.len() {
        return Err(folio::Error::Dimension(format!("density of length {} on {} vertices", raw.len(), g.len())).into());
    }
    // kernel graphs carry their own vertex measure
    let mass: f64 = raw.iter().zip(g.measure()).map(|(r, m)| r * m).sum();
    let rho0 = DensityVector::new(raw.iter().map(|r| r / mass).collect(), g.measure())?;
    let registry = propagators();
    let traj = heat_flow_with(registry.get(propagator)?, &g, &rho0, times)?;
    let report = ede_audit(&traj);
    write_atomic(&out.join("trajectory.csv"), |w| traj.write_csv(w))?;
    write_json(&out.join("ede.json"), &report)?;
    let passed = report.entropy_monotone && tol.is_none_or(|t| report.mismatch <= t);
    print(&json!({
        "propagator": propagator,
        "mismatch": report.mismatch,
        "entropy_monotone": report.entropy_monotone,
        "tol": tol,
        "passed": passed,
    }));
    Ok(passed.into())
}

fn audit(space: &Path, k: f64, trials: usize, seed: u64, slack: f64, out: &Path) -> CliResult {
    let space = read_space(space)?;
    let opts = ConvexityOptions {
        trials,
        seed,
        slack_constant: slack,
    };
    let report = k_convexity_audit(&space, k, &opts)?;
    write_json(&out.join("convexity.json"), &report)?;
    print(&json!({
        "k": report.k,
        "h": report.h,
        "slack": report.slack,
        "max_defect": report.max_defect,
        "passed": report.passed,
    }));
    Ok(report.passed.into())
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    name: Option<String>,
    config: Option<&Path>,
    seed: Option<u64>,
    tol: Option<f64>,
    n: Option<Vec<usize>>,
    b: Option<usize>,
    params: &[String],
    out: Option<std::path::PathBuf>,
) -> CliResult {
    let mut cfg = match (config, &name) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(folio::Error::from)?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(folio::Error::from)?
        }
        (None, Some(name)) => ExperimentConfig::new(name, "out"),
        (None, None) => return Err(CliError::Usage("give an experiment name or --config".into())),
    };
    if let Some(name) = name {
        cfg.experiment = name;
    }
    if let Some(out) = out {
        cfg.out = out;
    }
    if seed.is_some() {
        cfg.seed = seed;
    }
    if tol.is_some() {
        cfg.tol = tol;
    }
    if let Some(n) = n {
        cfg.params.insert("n".into(), json!(n));
    }
    if let Some(b) = b {
        cfg.params.insert("B".into(), json!(b));
    }
    for p in params {
        let (key, value) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param expects KEY=JSON, got {p:?}")))?;
        let value: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        cfg.params.insert(key.to_string(), value);
    }
    let outcome = run_experiment(&cfg)?;
    print(&json!({
        "experiment": cfg.experiment,
        "passed": outcome.passed,
        "out": cfg.out,
        "artifacts": outcome.artifacts,
        "summary": outcome.summary,
    }));
    Ok(outcome.passed.into())
}

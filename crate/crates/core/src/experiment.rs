//! Named batch experiments. Each run writes CSV/JSON artifacts into the
//! output directory, then a `manifest.json` with the tool version, the
//! SHA-256 of the canonical config and the seeds used. Wall-clock data goes
//! to the `run.log` sidecar only, so artifacts are reproducible byte for
//! byte.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flows::{ede_audit, heat_flow, k_convexity_audit, ConvexityOptions, CONVEXITY_TIMES};
use crate::foliation::{build_quotient, check_mm_foliation, SweepMode};
use crate::generators::{cycle, interval_quotient, path, GeneratorSpec};
use crate::io::{write_atomic, write_json};
use crate::registry::{Named, Registry};
use crate::space::DensityVector;
use crate::spectral::{
    build_chain_graph, build_product_graph, build_quotient_graph, chain_order, containment_check, laplacian_spectrum,
    Spectrum,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub spaces: Vec<GeneratorSpec>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Experiment-specific settings.
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str, out: impl Into<PathBuf>) -> Self {
        Self {
            experiment: experiment.to_string(),
            spaces: Vec::new(),
            tol: None,
            seed: None,
            out: out.into(),
            params: Map::new(),
        }
    }

    pub fn param<T: DeserializeOwned>(&self, key: &str, default: T) -> Result<T> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Input(format!("parameter {key:?}: {e}"))),
        }
    }

    fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Input(format!("experiment {} needs a seed", self.experiment)))
    }

    fn space(&self, index: usize, default: GeneratorSpec) -> GeneratorSpec {
        self.spaces.get(index).cloned().unwrap_or(default)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Input(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.seed.is_none() && self.spaces.iter().any(GeneratorSpec::is_stochastic) {
            return Err(Error::Input(
                "a stochastic generator is configured without a seed".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the config's canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub passed: bool,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    pub summary: Value,
}

pub trait Experiment: Named + Send + Sync {
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome>;
}

pub fn experiments() -> Registry<dyn Experiment> {
    let mut reg: Registry<dyn Experiment> = Registry::new("experiment");
    reg.register(Box::new(SphereCollapse))
        .register(Box::new(SpectralContainment))
        .register(Box::new(FoliationCertify))
        .register(Box::new(ConvexityAudit))
        .register(Box::new(EdeAudit));
    reg
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'a str,
    config_sha256: String,
    seeds: Value,
    passed: bool,
    artifacts: &'a [String],
    summary: &'a Value,
}

/// Runs the configured experiment and writes its manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let registry = experiments();
    let experiment = registry.get(&cfg.experiment)?;
    let started = Instant::now();
    let mut outcome = experiment.run(cfg)?;
    outcome.artifacts.push("manifest.json".into());
    let manifest = Manifest {
        tool: "folio",
        version: env!("CARGO_PKG_VERSION"),
        experiment: &cfg.experiment,
        config_sha256: cfg.hash()?,
        seeds: json!({ "seed": cfg.seed }),
        passed: outcome.passed,
        artifacts: &outcome.artifacts,
        summary: &outcome.summary,
    };
    write_json(&cfg.out.join("manifest.json"), &manifest)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let elapsed = started.elapsed().as_secs_f64();
    write_atomic(&cfg.out.join("run.log"), |out| {
        writeln!(
            out,
            "finished_unix={stamp} elapsed_s={elapsed:.3} passed={}",
            outcome.passed
        )?;
        Ok(())
    })?;
    Ok(outcome)
}

fn write_rows(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "{header}")?;
        for row in rows {
            writeln!(out, "{row}")?;
        }
        Ok(())
    })
}

fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<()> {
    write_atomic(path, |out| spectrum.write_csv(out))
}

/// First eigenvalues of interval quotients `X_n` with `r = √(n-1)` against
/// `k(1 + k/(n-1))`.
struct SphereCollapse;

impl Named for SphereCollapse {
    fn name(&self) -> &'static str {
        "sphere-collapse"
    }
}

impl Experiment for SphereCollapse {
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let ns: Vec<usize> = cfg.param("n", vec![4, 16, 64, 256])?;
        let b: usize = cfg.param("B", 500)?;
        let modes: usize = cfg.param("k", 3)?;
        let tol = cfg.tol_or(0.02);
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        let mut first = Vec::new();
        for &n in &ns {
            let space = interval_quotient(n, ((n - 1) as f64).sqrt(), b)?;
            let spectrum = laplacian_spectrum(&build_chain_graph(&space)?, Some(modes + 1))?;
            for k in 1..=modes.min(spectrum.len() - 1) {
                let value = spectrum.eigenvalues[k];
                let target = k as f64 * (1.0 + k as f64 / (n as f64 - 1.0));
                let rel = (value - target).abs() / target;
                worst = worst.max(rel);
                rows.push(format!("{n},{k},{value},{target},{rel}"));
                if k == 1 {
                    first.push(value);
                }
            }
        }
        write_rows(
            &cfg.out.join("sphere_collapse.csv"),
            "n,k,eigenvalue,target,rel_error",
            &rows,
        )?;
        let decreasing = first.windows(2).all(|w| w[1] < w[0]);
        Ok(ExperimentOutcome {
            passed: worst <= tol,
            artifacts: vec!["sphere_collapse.csv".into()],
            summary: json!({ "max_rel_error": worst, "tol": tol, "lambda1": first, "lambda1_decreasing": decreasing }),
        })
    }
}

/// Kronecker-sum product of two chain graphs: the quotient spectrum must
/// sit inside the total spectrum, and a shifted copy must not.
struct SpectralContainment;

impl Named for SpectralContainment {
    fn name(&self) -> &'static str {
        "spectral-containment"
    }
}

impl Experiment for SpectralContainment {
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let y = cfg
            .space(0, GeneratorSpec::Path { n: 30, length: 1.0 })
            .generate()?
            .space;
        let z = cfg
            .space(
                1,
                GeneratorSpec::Cycle {
                    n: 16,
                    circumference: 2.0,
                },
            )
            .generate()?
            .space;
        let tol = cfg.tol_or(1e-8);
        let gy = build_chain_graph(&y)?;
        let gz = build_chain_graph(&z)?;
        let total = build_product_graph(&gy, &gz)?;
        let map: Vec<usize> = (0..total.len()).map(|i| i / z.len()).collect();
        let quotient = build_quotient_graph(&total, &map, y.len())?;
        let total_spec = laplacian_spectrum(&total, None)?;
        let quotient_spec = laplacian_spectrum(&quotient, None)?;
        let report = containment_check(&total_spec, &quotient_spec, tol);
        let shift = 1e3 * tol;
        let shifted = Spectrum::new(quotient_spec.eigenvalues.iter().map(|v| v + shift).collect(), None);
        let control = containment_check(&total_spec, &shifted, tol);
        write_spectrum(&cfg.out.join("total_spectrum.csv"), &total_spec)?;
        write_spectrum(&cfg.out.join("quotient_spectrum.csv"), &quotient_spec)?;
        write_json(
            &cfg.out.join("containment.json"),
            &json!({ "report": report, "negative_control": { "shift": shift, "report": control } }),
        )?;
        Ok(ExperimentOutcome {
            passed: report.passed && !control.passed,
            artifacts: vec![
                "total_spectrum.csv".into(),
                "quotient_spectrum.csv".into(),
                "containment.json".into(),
            ],
            summary: json!({
                "max_gap": report.max_gap,
                "control_max_gap": control.max_gap,
                "tol": tol,
            }),
        })
    }
}

/// Certifies the canonical partition of a generated space.
struct FoliationCertify;

impl Named for FoliationCertify {
    fn name(&self) -> &'static str {
        "foliation-certify"
    }
}

impl Experiment for FoliationCertify {
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let default = GeneratorSpec::LqProduct {
            y: Box::new(GeneratorSpec::Path { n: 12, length: 1.0 }),
            z: Box::new(GeneratorSpec::Cycle {
                n: 8,
                circumference: 1.0,
            }),
            q: crate::generators::LqExponent(2.0),
        };
        let generated = cfg.space(0, default).generate()?;
        let partition = generated
            .partition
            .ok_or_else(|| Error::Input("the configured generator has no canonical partition".into()))?;
        let tol = cfg.tol_or(1e-9);
        let mode = match cfg.params.get("budget") {
            None => SweepMode::default(),
            Some(_) => SweepMode::Auto {
                budget: cfg.param("budget", 20_000)?,
                seed: cfg.seed.unwrap_or(0),
            },
        };
        let bundle = build_quotient(&generated.space, &partition)?;
        let (report, certified) = check_mm_foliation(&bundle, tol, mode)?;
        write_json(
            &cfg.out.join("certification.json"),
            &json!({ "certification": certified.certification(), "report": report }),
        )?;
        write_atomic(&cfg.out.join("pairs.csv"), |out| report.write_csv(out))?;
        Ok(ExperimentOutcome {
            passed: report.passed,
            artifacts: vec!["certification.json".into(), "pairs.csv".into()],
            summary: json!({
                "certification": certified.certification(),
                "classes": partition.len(),
                "worst_defect": report.worst().map(|p| p.defect),
                "metric_worst": report.metric.worst.as_ref().map(|d| d.defect),
            }),
        })
    }
}

/// Entropy `K`-convexity along random displacement interpolations.
struct ConvexityAudit;

impl Named for ConvexityAudit {
    fn name(&self) -> &'static str {
        "convexity-audit"
    }
}

impl Experiment for ConvexityAudit {
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let default = GeneratorSpec::IntervalQuotient {
            n: 9,
            r: 8f64.sqrt(),
            b: 800,
        };
        let grid = cfg.space(0, default).generate()?.space;
        let k: f64 = cfg.param("k", 0.0)?;
        let opts = ConvexityOptions {
            trials: cfg.param("trials", 50)?,
            seed: cfg.require_seed()?,
            slack_constant: cfg.param("slack_constant", 5.0)?,
        };
        let report = k_convexity_audit(&grid, k, &opts)?;
        let rows: Vec<String> = report
            .trials
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{i},{},{},{},{}", t.w2, t.defects[0], t.defects[1], t.defects[2]))
            .collect();
        let header = format!(
            "trial,w2,{}",
            CONVEXITY_TIMES
                .iter()
                .map(|t| format!("defect_{t}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        write_rows(&cfg.out.join("convexity.csv"), &header, &rows)?;
        let summary = json!({
            "k": report.k,
            "h": report.h,
            "slack": report.slack,
            "max_defect": report.max_defect,
            "passed": report.passed,
        });
        write_json(&cfg.out.join("convexity.json"), &summary)?;
        Ok(ExperimentOutcome {
            passed: report.passed,
            artifacts: vec!["convexity.csv".into(), "convexity.json".into()],
            summary,
        })
    }
}

/// Energy-dissipation balance of the heat flow on a chain graph.
struct EdeAudit;

impl Named for EdeAudit {
    fn name(&self) -> &'static str {
        "ede-audit"
    }
}

impl Experiment for EdeAudit {
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let space = match cfg.spaces.first() {
            Some(spec) => spec.generate()?.space,
            None => cycle(512, 2.0 * PI)?,
        };
        let graph = build_chain_graph(&space)?;
        let seed = cfg.require_seed()?;
        let t_min: f64 = cfg.param("t_min", 0.01)?;
        let t_max: f64 = cfg.param("t_max", 0.1)?;
        let steps: usize = cfg.param("steps", 200)?;
        let tol = cfg.tol_or(0.05);
        if !(t_min >= 0.0 && t_max > t_min) || steps == 0 {
            return Err(Error::Input("need 0 <= t_min < t_max and steps at least 1".into()));
        }
        let rho0 = smooth_density(&space, seed)?;
        let times: Vec<f64> = (0..=steps)
            .map(|s| t_min + (t_max - t_min) * s as f64 / steps as f64)
            .collect();
        let traj = heat_flow(&graph, &rho0, &times)?;
        let report = ede_audit(&traj);
        write_atomic(&cfg.out.join("trajectory.csv"), |out| traj.write_csv(out))?;
        write_json(&cfg.out.join("ede.json"), &report)?;
        Ok(ExperimentOutcome {
            passed: report.mismatch <= tol && report.entropy_monotone,
            artifacts: vec!["trajectory.csv".into(), "ede.json".into()],
            summary: json!({
                "mismatch": report.mismatch,
                "entropy_monotone": report.entropy_monotone,
                "tol": tol,
            }),
        })
    }
}

/// A seeded positive density made of three low Fourier modes along the
/// chain order of a 1-D grid or circle.
pub fn smooth_density(space: &crate::space::FiniteMMSpace, seed: u64) -> Result<DensityVector> {
    let (order, _) = chain_order(space)?;
    let n = order.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64)> = (1..=3)
        .map(|_| (rng.random_range(0.0..0.3), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let mut rho = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        let s = pos as f64 / n as f64;
        rho[i] = 1.0
            + modes
                .iter()
                .enumerate()
                .map(|(k, (a, phase))| a * (2.0 * PI * (k + 1) as f64 * s + phase).cos())
                .sum::<f64>();
    }
    let mass: f64 = rho.iter().zip(space.weights()).map(|(r, m)| r * m).sum();
    rho.iter_mut().for_each(|r| *r /= mass);
    DensityVector::new(rho, space.weights())
}

/// Small default grid used by the CLI when no space is given.
pub fn default_grid() -> Result<crate::space::FiniteMMSpace> {
    path(64, 1.0)
}

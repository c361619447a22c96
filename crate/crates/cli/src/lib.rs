//! Experiment runner: parse a JSON config, generate the problem, run the
//! requested solvers sequentially, and emit per-iteration CSV traces, a
//! summary JSON, and optional PGM images of 2D solutions.
//!
//! Identical config and seed produce byte-identical outputs; wall-clock
//! timing is therefore a toggle (`output.wall_time`) that defaults to off,
//! in which case the `wall_ms` column prints zeros.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use flexkrylov::baselines::{run_fista, run_irn, run_pirn, FistaConfig, IrnConfig};
use flexkrylov::linop::{conjugate_by_transform, OpRef, OrthonormalTransform};
use flexkrylov::problems::{add_noise, angle_range, ProblemSpec, Psf, TestProblem, RNG_ALGORITHM};
use flexkrylov::regparam::{LambdaGrid, ParamPolicy};
use flexkrylov::solvers::{
    run as run_krylov, DiscrepancyStop, IterRecord, Method, SolverConfig, SolverRun, WeightSource,
};
use flexkrylov::transforms::HaarTransform;
use flexkrylov::weights::WeightPolicy;

pub const SCHEMA_VERSION: u32 = 1;
pub const TRACE_HEADER: &str = "iter,lambda,res_norm,ne_res_norm,rel_err,matvecs,wall_ms";

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed configuration or I/O trouble; maps to exit code 1.
    #[error("{0}")]
    Config(String),
    /// A solver aborted (non-finite values, divergence); exit code 2.
    #[error("solver `{name}` aborted: {message}")]
    Solver { name: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver { .. } => 2,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

// ---------------------------------------------------------------------------
// configuration schema

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Heat {
        n: usize,
    },
    Blur1d {
        n: usize,
        variance: f64,
        band: usize,
    },
    Deblur2d {
        side: usize,
        psf: Psf,
    },
    Tomo {
        n_grid: usize,
        angles: AngleRange,
        rays_per_angle: usize,
        detector_width: f64,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AngleRange {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub seed: u64,
    /// Solve in a Haar wavelet domain with this many levels.
    #[serde(default)]
    pub transform_levels: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSpec {
    Fixed { lambda: f64 },
    /// `eps` defaults to the exact noise norm of the generated problem.
    DpExact { eta: f64, eps: Option<f64> },
    DpSecant { eta: f64, eps: Option<f64>, lambda0: Option<f64> },
    Optimal { min: f64, max: f64, points: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSpec {
    pub name: String,
    pub method: String,
    pub max_iters: usize,
    #[serde(default)]
    pub weights: Option<WeightPolicy>,
    #[serde(default)]
    pub params: Option<ParamSpec>,
    /// Stop once the residual reaches `eta * eps` (Krylov methods).
    #[serde(default)]
    pub stop_on_discrepancy: bool,
    /// Fixed penalty for the baselines.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Take the penalty from a previously run solver's final lambda.
    #[serde(default)]
    pub lambda_from: Option<String>,
    /// IRN/PIRN outer sweeps (`max_iters` is the inner budget).
    #[serde(default)]
    pub outer_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Dump 2D solutions as 8-bit PGM images.
    #[serde(default)]
    pub images: bool,
    /// Record real wall-clock milliseconds (breaks byte-determinism).
    #[serde(default)]
    pub wall_time: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemConfig,
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("malformed config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.solvers.is_empty() {
            return Err(config_err("no solvers configured"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, s) in self.solvers.iter().enumerate() {
            if !seen.insert(s.name.clone()) {
                return Err(config_err(format!("duplicate solver name `{}`", s.name)));
            }
            let method = Method::parse(&s.method).map_err(config_err)?;
            if s.max_iters == 0 {
                return Err(config_err(format!("solver `{}` has max_iters 0", s.name)));
            }
            if let Some(from) = &s.lambda_from {
                let found = self.solvers[..i].iter().any(|p| &p.name == from);
                if !found {
                    return Err(config_err(format!(
                        "solver `{}` takes lambda from `{from}`, which does not run before it",
                        s.name
                    )));
                }
            }
            if let Some(w) = &s.weights {
                if !w.is_valid() {
                    return Err(config_err(format!("solver `{}` has an invalid weight policy", s.name)));
                }
            }
            if method.is_baseline() && s.lambda.is_none() && s.lambda_from.is_none() {
                return Err(config_err(format!(
                    "baseline `{}` needs `lambda` or `lambda_from`",
                    s.name
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// problem assembly

fn build_problem(cfg: &ProblemConfig) -> Result<TestProblem, CliError> {
    let noiseless = match &cfg.generator {
        GeneratorSpec::Heat { n } => flexkrylov::problems::gen_heat(*n),
        GeneratorSpec::Blur1d { n, variance, band } => {
            flexkrylov::problems::gen_blur1d(*n, *variance, *band).map_err(config_err)?
        }
        GeneratorSpec::Deblur2d { side, psf } => {
            flexkrylov::problems::gen_deblur2d(*side, *psf).map_err(config_err)?
        }
        GeneratorSpec::Tomo {
            n_grid,
            angles,
            rays_per_angle,
            detector_width,
        } => flexkrylov::problems::gen_tomo(
            *n_grid,
            &angle_range(angles.start, angles.step, angles.stop),
            *rays_per_angle,
            *detector_width,
        ),
    };
    let mut p = add_noise(noiseless, cfg.noise_level, cfg.seed);
    if let Some(levels) = cfg.transform_levels {
        let psi = match &p.spec {
            ProblemSpec::Heat { n } | ProblemSpec::Blur1d { n, .. } => {
                HaarTransform::new_1d(*n, levels)
            }
            ProblemSpec::Deblur2d { side, .. } => HaarTransform::new_2d(*side, levels),
            ProblemSpec::Tomo { n_grid, .. } => HaarTransform::new_2d(*n_grid, levels),
        }
        .map_err(config_err)?;
        p = p.with_transform(Arc::new(psi)).map_err(config_err)?;
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// experiment driver

struct SolverOutcome {
    name: String,
    method: Method,
    records: Vec<IterRecord>,
    solution_image: Option<DVector<f64>>,
    stop: String,
    final_lambda: f64,
    warning: Option<String>,
}

#[derive(Serialize)]
struct SummarySolver {
    name: String,
    method: String,
    iterations: usize,
    best_rel_err: Option<f64>,
    best_iteration: Option<usize>,
    matvecs_at_best: Option<usize>,
    final_lambda: f64,
    stop_reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    trace_file: String,
}

#[derive(Serialize)]
struct Summary {
    schema_version: u32,
    provenance: Provenance,
    problem: ProblemConfig,
    noise_norm: f64,
    solvers: Vec<SummarySolver>,
}

#[derive(Serialize)]
struct Provenance {
    rng: String,
    detector_offsets: String,
    ray_direction: String,
    lambda0_heuristic: String,
}

fn resolve_policy(
    spec: &Option<ParamSpec>,
    eps_default: f64,
) -> Result<ParamPolicy, CliError> {
    Ok(match spec {
        None => ParamPolicy::zero(),
        Some(ParamSpec::Fixed { lambda }) => ParamPolicy::Fixed { lambda: *lambda },
        Some(ParamSpec::DpExact { eta, eps }) => ParamPolicy::DpExact {
            eps: eps.unwrap_or(eps_default),
            eta: *eta,
        },
        Some(ParamSpec::DpSecant { eta, eps, lambda0 }) => ParamPolicy::DpSecant {
            eps: eps.unwrap_or(eps_default),
            eta: *eta,
            lambda0: *lambda0,
        },
        Some(ParamSpec::Optimal { min, max, points }) => ParamPolicy::Optimal {
            grid: LambdaGrid {
                min: *min,
                max: *max,
                points: *points,
            },
        },
    })
}

fn default_weights(method: Method) -> WeightPolicy {
    match method {
        Method::Lsqr | Method::Lsmr | Method::Gmres => WeightPolicy::identity(),
        _ => WeightPolicy::l1(),
    }
}

/// Runs one solver spec against the problem; `lambda_pool` carries the final
/// lambdas of previously run solvers for `lambda_from` references.
fn run_one(
    spec: &SolverSpec,
    problem: &TestProblem,
    lambda_pool: &BTreeMap<String, f64>,
) -> Result<SolverOutcome, CliError> {
    let method = Method::parse(&spec.method).map_err(config_err)?;
    let eps = problem.e.norm();
    let weights = spec.weights.unwrap_or_else(|| default_weights(method));
    let lambda_fixed = match (&spec.lambda_from, spec.lambda) {
        (Some(from), _) => Some(*lambda_pool.get(from).expect("validated reference")),
        (None, v) => v,
    };

    let to_solver_err = |e: flexkrylov::Error| CliError::Solver {
        name: spec.name.clone(),
        message: e.to_string(),
    };

    let run: SolverRun = if method.is_baseline() {
        // baselines run on the (possibly transform-conjugated) operator
        let lambda = lambda_fixed.expect("validated baseline lambda");
        let (op, x_true): (OpRef, DVector<f64>) = match &problem.psi {
            Some(psi) => (
                Arc::new(
                    conjugate_by_transform(
                        problem.a.clone(),
                        psi.clone() as Arc<dyn OrthonormalTransform>,
                        None,
                    )
                    .map_err(config_err)?,
                ),
                psi.forward(&problem.x_true),
            ),
            None => (problem.a.clone(), problem.x_true.clone()),
        };
        match method {
            Method::Fista => {
                let mut cfg = FistaConfig::new(lambda, spec.max_iters);
                cfg.x_true = Some(x_true);
                run_fista(op, &problem.b, &cfg).map_err(to_solver_err)?
            }
            Method::Irn | Method::Pirn => {
                let mut cfg = IrnConfig::new(lambda, spec.outer_iters.unwrap_or(5));
                cfg.inner_iters = spec.max_iters;
                cfg.weights = weights;
                cfg.x_true = Some(x_true);
                if method == Method::Irn {
                    run_irn(op, &problem.b, &cfg).map_err(to_solver_err)?
                } else {
                    run_pirn(op, &problem.b, &cfg).map_err(to_solver_err)?
                }
            }
            _ => unreachable!(),
        }
    } else {
        let mut cfg = SolverConfig::new(method, spec.max_iters);
        cfg.weights = WeightSource::Policy(weights);
        cfg.params = match lambda_fixed {
            Some(l) if spec.params.is_none() => ParamPolicy::Fixed { lambda: l },
            _ => resolve_policy(&spec.params, eps)?,
        };
        cfg.x_true = Some(problem.x_true.clone());
        cfg.transform = problem.psi.clone();
        if spec.stop_on_discrepancy {
            let eta = match &cfg.params {
                ParamPolicy::DpExact { eta, .. } | ParamPolicy::DpSecant { eta, .. } => *eta,
                _ => 1.01,
            };
            cfg.stop.discrepancy = Some(DiscrepancyStop { eps, eta });
        }
        run_krylov(problem.a.clone(), &problem.b, &cfg).map_err(to_solver_err)?
    };

    // map the final iterate back to image space for dumps
    let solution_image = match (&problem.psi, method.is_baseline()) {
        (Some(psi), true) => Some(psi.inverse(&run.solution).map_err(config_err)?),
        _ => Some(run.solution.clone()),
    };

    Ok(SolverOutcome {
        name: spec.name.clone(),
        method,
        records: run.records,
        solution_image,
        stop: format!("{:?}", run.stop).to_lowercase(),
        final_lambda: run.final_lambda,
        warning: run.warning,
    })
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn write_trace(path: &Path, records: &[IterRecord], wall_time: bool) -> Result<(), CliError> {
    let mut out = String::with_capacity(records.len() * 96 + 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let wall = if wall_time {
            format!("{:.3}", r.wall_ms)
        } else {
            "0.000".to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.k,
            fmt_float(r.lambda),
            fmt_float(r.res_norm),
            fmt_float(r.ne_res_norm),
            r.rel_err.map_or_else(|| "nan".into(), fmt_float),
            r.matvecs,
            wall
        ));
    }
    std::fs::write(path, out).map_err(config_err)
}

#[derive(Serialize)]
struct PgmSidecar {
    file: String,
    min: f64,
    max: f64,
    scaling: String,
}

fn write_pgm(path: &Path, img: &DVector<f64>, side: usize) -> Result<(), CliError> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in img.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = format!("P5\n{side} {side}\n255\n").into_bytes();
    bytes.extend(img.iter().map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8));
    std::fs::write(path, bytes).map_err(config_err)?;
    let sidecar = PgmSidecar {
        file: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        min: lo,
        max: hi,
        scaling: "linear min-max to 0..255".into(),
    };
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(config_err)
}

fn image_side(spec: &ProblemSpec) -> Option<usize> {
    match spec {
        ProblemSpec::Deblur2d { side, .. } => Some(*side),
        ProblemSpec::Tomo { n_grid, .. } => Some(*n_grid),
        _ => None,
    }
}

/// Runs every solver in the config and writes traces, summary, and images
/// into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<(), CliError> {
    config.validate()?;
    let problem = build_problem(&config.problem)?;

    // run everything before touching the filesystem, so a solver abort
    // leaves no partial outputs
    let mut outcomes: Vec<SolverOutcome> = Vec::new();
    let mut lambda_pool = BTreeMap::new();
    for spec in &config.solvers {
        let outcome = run_one(spec, &problem, &lambda_pool)?;
        lambda_pool.insert(outcome.name.clone(), outcome.final_lambda);
        outcomes.push(outcome);
    }

    std::fs::create_dir_all(out_dir).map_err(config_err)?;
    let mut summary_solvers = Vec::new();
    for outcome in &outcomes {
        let trace_file = format!("{}_trace.csv", outcome.name);
        write_trace(
            &out_dir.join(&trace_file),
            &outcome.records,
            config.output.wall_time,
        )?;
        let best = outcome
            .records
            .iter()
            .filter(|r| r.rel_err.is_some_and(|e| e.is_finite()))
            .min_by(|a, b| {
                (a.rel_err.unwrap(), a.matvecs)
                    .partial_cmp(&(b.rel_err.unwrap(), b.matvecs))
                    .unwrap()
            });
        summary_solvers.push(SummarySolver {
            name: outcome.name.clone(),
            method: outcome.method.name().to_string(),
            iterations: outcome.records.len(),
            best_rel_err: best.and_then(|r| r.rel_err),
            best_iteration: best.map(|r| r.k),
            matvecs_at_best: best.map(|r| r.matvecs),
            final_lambda: outcome.final_lambda,
            stop_reason: outcome.stop.clone(),
            warning: outcome.warning.clone(),
            trace_file,
        });
        if config.output.images {
            if let (Some(side), Some(img)) =
                (image_side(&problem.spec), outcome.solution_image.as_ref())
            {
                write_pgm(&out_dir.join(format!("{}_solution.pgm", outcome.name)), img, side)?;
            }
        }
    }
    if config.output.images {
        if let Some(side) = image_side(&problem.spec) {
            write_pgm(&out_dir.join("x_true.pgm"), &problem.x_true, side)?;
        }
    }

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance {
            rng: RNG_ALGORITHM.to_string(),
            detector_offsets: "equispaced inclusive over [-width/2, width/2]".into(),
            ray_direction: "(-sin theta, cos theta), detector point at (t cos theta, t sin theta)"
                .into(),
            lambda0_heuristic: "(eta*eps/beta1)^2".into(),
        },
        problem: config.problem.clone(),
        noise_norm: problem.e.norm(),
        solvers: summary_solvers,
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(config_err)?,
    )
    .map_err(config_err)
}

// ---------------------------------------------------------------------------
// report

struct TraceStats {
    solver: String,
    best_rel_err: f64,
    best_iter: usize,
    matvecs: usize,
}

fn parse_trace(path: &Path) -> Result<Option<TraceStats>, CliError> {
    let text = std::fs::read_to_string(path).map_err(config_err)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != TRACE_HEADER {
        return Err(config_err(format!(
            "{}: unexpected header `{header}`",
            path.display()
        )));
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(config_err(format!("{}: malformed row `{line}`", path.display())));
        }
        let iter: usize = cols[0].parse().map_err(config_err)?;
        let rel: f64 = cols[4].parse().map_err(config_err)?;
        let matvecs: usize = cols[5].parse().map_err(config_err)?;
        if rel.is_finite() {
            let cand = (rel, matvecs, iter);
            let better = match best {
                None => true,
                Some((r, m, _)) => cand.0 < r || (cand.0 == r && matvecs < m),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    let solver = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
        .trim_end_matches("_trace.csv")
        .to_string();
    Ok(best.map(|(rel, matvecs, iter)| TraceStats {
        solver,
        best_rel_err: rel,
        best_iter: iter,
        matvecs,
    }))
}

/// Markdown summary table over every `*_trace.csv` in `dir`, sorted by best
/// relative error with ties broken by fewer matvecs.
pub fn report(dir: &Path) -> Result<String, CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(config_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().ends_with("_trace.csv"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(config_err(format!(
            "no *_trace.csv files in {}",
            dir.display()
        )));
    }
    let mut stats = Vec::new();
    for path in &entries {
        if let Some(s) = parse_trace(path)? {
            stats.push(s);
        }
    }
    stats.sort_by(|a, b| {
        (a.best_rel_err, a.matvecs)
            .partial_cmp(&(b.best_rel_err, b.matvecs))
            .unwrap()
    });
    let mut out = String::new();
    out.push_str("| solver | best rel err | iteration | matvecs |\n");
    out.push_str("|---|---|---|---|\n");
    for s in &stats {
        out.push_str(&format!(
            "| {} | {:.4e} | {} | {} |\n",
            s.solver, s.best_rel_err, s.best_iter, s.matvecs
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// listings

pub fn list_problems() -> String {
    [
        "heat       1D inverse heat equation (lower triangular Volterra quadrature)",
        "blur1d     1D Gaussian blur of a piecewise-constant, Haar-sparse signal",
        "deblur2d   2D deblurring of the Shepp-Logan phantom, reflexive boundaries",
        "tomo       2D parallel-beam tomography of the Shepp-Logan phantom",
    ]
    .join("\n")
}

pub fn list_solvers() -> String {
    [
        "lsqr     standard LSQR (identity weights, lambda = 0)",
        "lsmr     standard LSMR (identity weights, lambda = 0)",
        "gmres    standard GMRES, square operators",
        "flsqr    flexible LSQR (iteratively reweighted basis, lambda = 0)",
        "flsmr    flexible LSMR",
        "fgmres   flexible GMRES, square operators",
        "flsqr-i  hybrid flexible LSQR, ||y|| penalty on the projected problem",
        "flsqr-r  hybrid flexible LSQR, ||R_k y|| penalty (QR of the basis)",
        "flsmr-i  hybrid flexible LSMR, ||y|| penalty",
        "flsmr-r  hybrid flexible LSMR, ||R_k y|| penalty",
        "gat      hybrid flexible Arnoldi-Tikhonov, square operators",
        "irn      iteratively reweighted norm with inner CGLS",
        "pirn     standard-form preconditioned IRN",
        "fista    accelerated proximal gradient with soft thresholding",
    ]
    .join("\n")
}

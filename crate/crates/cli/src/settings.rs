//! Merges command-line flags, config values and per-example defaults into a
//! fully specified run. Flags win over the config file, which wins over the
//! defaults.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use fbf_core::analysis::lambda_from_fraction;
use fbf_core::linalg::Matrix;
use fbf_core::problem::{build_example, build_logistic_example, Example, EX3_ETA};
use fbf_core::{Method, MviProblem, OperatorSpec, ProxSpec, Scheme, System};

use crate::config::{parse_vector, Config};

pub const OUTPUT_ENV: &str = "FBF_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "fbf-out";
const DEFAULT_TOL: f64 = 1e-8;
const DEFAULT_MAX_ITERS: usize = 1000;
const DEFAULT_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Built-in problem: ex1, ex2 or ex3.
    #[arg(long)]
    pub example: Option<String>,
    /// Config file; repeat for a batch run.
    #[arg(long)]
    pub config: Vec<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Set λ = f/(1 + β²).
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_frac: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Stop once ‖x − y‖ (or the step, for prox-grad) is at most this.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub relaxation: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// solve: fbf | prox-grad-flow; iterate: tseng | prox-grad.
    #[arg(long)]
    pub method: Option<String>,
    /// euler | rk4
    #[arg(long)]
    pub scheme: Option<String>,
    /// Output directory (default: $FBF_OUTPUT_DIR, else ./fbf-out).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads for batch runs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Starting point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Record every n-th step.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Sample count for analyze.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Skip the λ(1 + β²) < 1 check.
    #[arg(long)]
    pub allow_invalid_lambda: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Iterate,
    Analyze,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub problem: MviProblem,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub lambda: f64,
    pub dt: f64,
    pub t_end: f64,
    pub tol: f64,
    pub scheme: Scheme,
    pub stride: usize,
    pub system: System,
    pub method: Method,
    pub max_iters: usize,
    pub samples: usize,
    pub allow_invalid_lambda: bool,
    pub output: PathBuf,
}

struct Defaults {
    lambda: Lambda,
    dt: f64,
    t_end: f64,
}

enum Lambda {
    Value(f64),
    Fraction(f64),
}

fn defaults(example: Option<Example>) -> Defaults {
    match example {
        Some(Example::Ex1) => Defaults {
            lambda: Lambda::Value(0.25),
            dt: 0.01,
            t_end: 20.0,
        },
        Some(Example::Ex2) => Defaults {
            lambda: Lambda::Fraction(0.99),
            dt: 0.005,
            t_end: 1000.0,
        },
        Some(Example::Ex3) => Defaults {
            lambda: Lambda::Value(0.01),
            dt: 1.0,
            t_end: 500.0,
        },
        None => Defaults {
            lambda: Lambda::Fraction(0.5),
            dt: 0.01,
            t_end: 100.0,
        },
    }
}

/// Resolves one run. `config` is `None` for a flags-only invocation.
pub fn resolve(cmd: Command, args: &RunArgs, config: Option<&Config>) -> Result<Settings> {
    let empty = Config::default();
    let cfg = config.unwrap_or(&empty);

    let seed = match args.seed {
        Some(s) => s,
        None => cfg.get("problem", "seed")?.unwrap_or(0),
    };
    let example_name = match &args.example {
        Some(e) => Some(e.clone()),
        None => cfg.get::<String>("problem", "example")?,
    };
    let example = example_name
        .map(|e| e.parse::<Example>())
        .transpose()
        .map_err(|e| anyhow!("{e}"))?;
    let problem = match example {
        Some(Example::Ex3) => {
            let eta = cfg.get("problem", "eta")?.unwrap_or(EX3_ETA);
            build_logistic_example(seed, eta)?
        }
        Some(ex) => build_example(ex, seed)?,
        None if config.is_some() => custom_problem(cfg)?,
        None => bail!("no problem given: pass --example or --config"),
    };

    let x0 = match &args.x0 {
        Some(s) => parse_vector(s).map_err(|m| anyhow!("--x0: {m}"))?,
        None => match cfg.get_vec("problem", "x0")? {
            Some(v) => v,
            None => example.map_or_else(|| vec![0.0; problem.dim], |ex| ex.default_start(seed)),
        },
    };
    if x0.len() != problem.dim {
        bail!("x0 has {} entries, problem dimension is {}", x0.len(), problem.dim);
    }

    let d = defaults(example);
    let lambda_choice = if let Some(l) = args.lambda {
        Lambda::Value(l)
    } else if let Some(f) = args.lambda_frac {
        Lambda::Fraction(f)
    } else if let Some(l) = cfg.get("problem", "lambda")? {
        Lambda::Value(l)
    } else if let Some(f) = cfg.get("problem", "lambda_frac")? {
        Lambda::Fraction(f)
    } else {
        d.lambda
    };
    let lambda = match lambda_choice {
        Lambda::Value(l) => l,
        Lambda::Fraction(f) => lambda_from_fraction(&problem, f)?,
    };
    if !(lambda > 0.0 && lambda.is_finite()) {
        bail!("lambda must be positive, got {lambda}");
    }

    let tol_section = if cmd == Command::Iterate { "iter" } else { "flow" };
    let tol = match args.tol {
        Some(t) => t,
        None => cfg.get(tol_section, "tol")?.unwrap_or(DEFAULT_TOL),
    };
    let dt = pick(args.dt, cfg.get("flow", "dt")?, d.dt);
    let t_end = pick(args.t_end, cfg.get("flow", "t_end")?, d.t_end);
    let stride = pick(args.stride, cfg.get("flow", "stride")?, 1);
    let scheme = match &args.scheme {
        Some(s) => s.parse::<Scheme>()?,
        None => cfg.get("flow", "scheme")?.unwrap_or_default(),
    };
    let delta = cfg.get("flow", "delta")?.unwrap_or(1.0);
    let relaxation = pick(args.relaxation, cfg.get("iter", "relaxation")?, 1.0);
    let max_iters = pick(args.max_iters, cfg.get("iter", "max_iters")?, DEFAULT_MAX_ITERS);
    let samples = pick(args.samples, cfg.get("analysis", "samples")?, DEFAULT_SAMPLES);

    let (system, method) = match cmd {
        Command::Iterate => {
            let name = pick_str(&args.method, cfg.get("iter", "method")?, "tseng");
            let method = match normalize(&name).as_str() {
                "tseng" | "tseng_fbf" | "fbf" => Method::TsengFbf { relaxation },
                "prox_grad" | "proxgrad" => Method::ProxGrad,
                other => bail!("unknown iteration method `{other}` (tseng, prox-grad)"),
            };
            (System::Fbf, method)
        }
        _ => {
            let name = pick_str(&args.method, cfg.get("flow", "system")?, "fbf");
            let system = match normalize(&name).as_str() {
                "fbf" => System::Fbf,
                "prox_grad_flow" | "prox_grad" => System::ProxGradFlow { delta },
                other => bail!("unknown flow `{other}` (fbf, prox-grad-flow)"),
            };
            (system, Method::TsengFbf { relaxation })
        }
    };

    let output = match &args.output {
        Some(p) => p.clone(),
        None => match cfg.get::<String>("output", "dir")? {
            Some(d) => PathBuf::from(d),
            None => std::env::var_os(OUTPUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
        },
    };

    Ok(Settings {
        problem,
        seed,
        x0,
        lambda,
        dt,
        t_end,
        tol,
        scheme,
        stride,
        system,
        method,
        max_iters,
        samples,
        allow_invalid_lambda: args.allow_invalid_lambda,
        output,
    })
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn pick_str(flag: &Option<String>, file: Option<String>, default: &str) -> String {
    flag.clone().or(file).unwrap_or_else(|| default.to_string())
}

fn normalize(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace('-', "_")
}

fn custom_problem(cfg: &Config) -> Result<MviProblem> {
    let need_matrix = || -> Result<Matrix> {
        let rows = cfg
            .get_matrix("problem", "matrix")?
            .ok_or_else(|| anyhow!("{}: [problem] needs `example` or `matrix`", cfg.path.display()))?;
        Ok(Matrix::from_rows(&rows)?)
    };
    let operator_name: String = cfg.get("problem", "operator")?.unwrap_or_else(|| "affine".into());
    let operator = match normalize(&operator_name).as_str() {
        "affine" => {
            let matrix = need_matrix()?;
            let offset = cfg
                .get_vec("problem", "offset")?
                .unwrap_or_else(|| vec![0.0; matrix.rows()]);
            OperatorSpec::Affine { matrix, offset }
        }
        "gaussian" | "scaled_matrix_gaussian" => OperatorSpec::ScaledMatrixGaussian {
            matrix: need_matrix()?,
            shift: cfg.get("problem", "shift")?.unwrap_or(0.2),
        },
        other => bail!("unknown operator `{other}` (affine, gaussian)"),
    };
    let lo = cfg.get("problem", "lo")?;
    let hi = cfg.get("problem", "hi")?;
    let bounds = || -> Result<(f64, f64)> {
        Ok((
            lo.context("prox needs `lo`")?,
            hi.context("prox needs `hi`")?,
        ))
    };
    let prox_name: String = cfg.get("problem", "prox")?.unwrap_or_else(|| "zero".into());
    let prox = match normalize(&prox_name).as_str() {
        "zero" => ProxSpec::Zero,
        "interval" | "indicator_interval" => {
            let (lo, hi) = bounds()?;
            ProxSpec::IndicatorInterval { lo, hi }
        }
        "quadratic_interval" | "quadratic_on_interval" => {
            let (lo, hi) = bounds()?;
            ProxSpec::QuadraticOnInterval { lo, hi }
        }
        "l1" | "scaled_l1" => ProxSpec::ScaledL1 {
            eta: cfg.get("problem", "eta")?.context("l1 prox needs `eta`")?,
        },
        "box_hyperplane" | "indicator_box_hyperplane" => {
            let (lo, hi) = bounds()?;
            ProxSpec::IndicatorBoxHyperplane {
                lo,
                hi,
                target_sum: cfg.get("problem", "target_sum")?.unwrap_or(0.0),
            }
        }
        other => bail!("unknown prox `{other}`"),
    };
    let id: String = cfg.get("problem", "id")?.unwrap_or_else(|| "custom".into());
    let mut p = MviProblem::new(id, operator, prox)?;
    if let Some(b) = cfg.get("problem", "beta")? {
        p = p.with_beta(b)?;
    }
    if let Some(m) = cfg.get("problem", "mu")? {
        p = p.with_mu(m)?;
    }
    if let Some(s) = cfg.get_vec("problem", "solution")? {
        p = p.with_known_solution(s)?;
    }
    Ok(p)
}

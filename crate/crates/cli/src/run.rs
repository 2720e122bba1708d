//! Executes a resolved run and writes its artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use fbf_core::analysis::{
    classify_monotonicity, estimate_lipschitz, lipschitz_upper_bound, make_certificate, selection_beta,
    verify_decay, verify_trajectory_inequalities, MonotonicityVerdict, SamplingBox, StabilityCertificate,
};
use fbf_core::linalg::dist_sq;
use fbf_core::report::{MonitorVerdict, RunReport};
use fbf_core::solver::loss_l1_logistic;
use fbf_core::{integrate, iterate, Error, FlowSpec, IterSpec, Method, StopReason, System};
use serde::Serialize;

use crate::settings::Settings;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const ITERATES_CSV: &str = "iterates.csv";
pub const REPORT_JSON: &str = "report.json";
pub const ANALYSIS_JSON: &str = "analysis.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Converged = 0,
    Usage = 1,
    Horizon = 2,
    Divergence = 3,
}

impl From<StopReason> for Status {
    fn from(r: StopReason) -> Self {
        match r {
            StopReason::Tolerance => Status::Converged,
            StopReason::Horizon => Status::Horizon,
            StopReason::Divergence => Status::Divergence,
        }
    }
}

fn stop_name(r: StopReason) -> String {
    match r {
        StopReason::Tolerance => "tolerance",
        StopReason::Horizon => "horizon",
        StopReason::Divergence => "divergence",
    }
    .into()
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t,x_1..x_n,y_1..y_n,residual[,lyapunov][,<extra>]`
fn csv_header(n: usize, lyapunov: bool, extra: Option<&str>) -> String {
    let mut h = String::from("t");
    for i in 1..=n {
        write!(h, ",x_{i}").unwrap();
    }
    for i in 1..=n {
        write!(h, ",y_{i}").unwrap();
    }
    h.push_str(",residual");
    if lyapunov {
        h.push_str(",lyapunov");
    }
    if let Some(e) = extra {
        write!(h, ",{e}").unwrap();
    }
    h.push('\n');
    h
}

struct Row<'a> {
    t: f64,
    x: &'a [f64],
    y: &'a [f64],
    residual: f64,
    lyapunov: Option<f64>,
    extra: Option<f64>,
}

fn push_row(out: &mut String, r: &Row) {
    out.push_str(&fmt_num(r.t));
    for v in r.x.iter().chain(r.y) {
        out.push(',');
        out.push_str(&fmt_num(*v));
    }
    for v in [Some(r.residual), r.lyapunov, r.extra].into_iter().flatten() {
        out.push(',');
        out.push_str(&fmt_num(v));
    }
    out.push('\n');
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn verdict(holds: bool, margin: f64) -> MonitorVerdict {
    MonitorVerdict { pass: holds, margin }
}

/// Certificate from the stated β (or its closed-form bound) and μ (stated,
/// or sampled when a known solution makes the decay check meaningful).
fn certificate_for(s: &Settings) -> Result<Option<StabilityCertificate>> {
    let beta = selection_beta(&s.problem);
    let mu = match s.problem.strong_pseudo_mu {
        Some(m) => Some(m),
        None if s.problem.known_solution.is_some() => {
            let domain = SamplingBox::for_problem(&s.problem);
            classify_monotonicity(&s.problem, &domain, s.samples.min(5000), s.seed)?.mu_estimate
        }
        None => None,
    };
    match mu {
        Some(mu) if beta > 0.0 => Ok(Some(make_certificate(beta, mu, s.lambda)?)),
        _ => Ok(None),
    }
}

pub fn solve(s: &Settings) -> Result<Status> {
    let start = Instant::now();
    let flow = FlowSpec {
        system: s.system,
        lambda: s.lambda,
        t_end: s.t_end,
        dt: s.dt,
        x0: s.x0.clone(),
        record_stride: s.stride,
        scheme: s.scheme,
        allow_invalid_lambda: s.allow_invalid_lambda,
    };
    flow.validate(&s.problem)?;
    let method = match s.system {
        System::Fbf => "fbf_flow",
        System::ProxGradFlow { .. } => "prox_grad_flow",
    };
    let mut report = RunReport {
        problem_id: s.problem.id.clone(),
        method: method.into(),
        lambda: s.lambda,
        dt: Some(s.dt),
        t_end: Some(s.t_end),
        tol: s.tol,
        final_residual: f64::NAN,
        iterations_or_steps: 0,
        stop_reason: stop_name(StopReason::Divergence),
        final_state: Vec::new(),
        monitor_verdicts: BTreeMap::new(),
        certificate: None,
        wall_time_ms: 0.0,
    };
    let rec = match integrate(&s.problem, &flow, s.tol) {
        Ok(r) => r,
        Err(Error::Divergence { step }) => {
            prepare(&s.output)?;
            report.iterations_or_steps = step;
            report.wall_time_ms = elapsed_ms(start);
            write_json(&s.output, REPORT_JSON, &report)?;
            println!("{}: diverged at step {step}", s.problem.id);
            return Ok(Status::Divergence);
        }
        Err(e) => return Err(e.into()),
    };

    let n = s.problem.dim;
    let mut csv = csv_header(n, rec.lyapunov.is_some(), None);
    for k in 0..rec.len() {
        push_row(
            &mut csv,
            &Row {
                t: rec.times[k],
                x: &rec.xs[k],
                y: &rec.ys[k],
                residual: rec.residuals[k],
                lyapunov: rec.lyapunov.as_ref().map(|l| l[k]),
                extra: None,
            },
        );
    }

    if s.system == System::Fbf {
        let beta = selection_beta(&s.problem);
        let checks = verify_trajectory_inequalities(&s.problem, &rec, s.lambda, beta)?;
        for (name, c) in checks.entries() {
            report.monitor_verdicts.insert(name.into(), verdict(c.holds, c.worst_margin));
        }
        if let Some(cert) = certificate_for(s)? {
            if cert.lambda_valid && rec.lyapunov.is_some() {
                let d = verify_decay(&rec, &cert)?;
                let margin = match d.outcome {
                    fbf_core::analysis::DecayOutcome::Holds => 0.0,
                    fbf_core::analysis::DecayOutcome::Violated { excess, .. } => -excess,
                };
                report.monitor_verdicts.insert("exponential_decay".into(), verdict(d.holds(), margin));
                if let Some(rate) = d.fitted_rate {
                    report
                        .monitor_verdicts
                        .insert("decay_rate_at_least_alpha".into(), verdict(d.rate_at_least_alpha(), rate - d.alpha));
                }
            }
            report.certificate = Some(cert);
        }
    }

    report.final_residual = rec.final_residual().unwrap_or(f64::NAN);
    report.iterations_or_steps = rec.steps;
    report.stop_reason = stop_name(rec.stop_reason);
    report.final_state = rec.final_state().map(<[f64]>::to_vec).unwrap_or_default();
    report.wall_time_ms = elapsed_ms(start);

    prepare(&s.output)?;
    fs::write(s.output.join(TRAJECTORY_CSV), csv)?;
    write_json(&s.output, REPORT_JSON, &report)?;
    println!(
        "{}: {} after {} steps, residual {:.3e}, x = {:?}",
        s.problem.id, report.stop_reason, rec.steps, report.final_residual, report.final_state
    );
    Ok(rec.stop_reason.into())
}

pub fn iterate_cmd(s: &Settings) -> Result<Status> {
    let start = Instant::now();
    let spec = IterSpec {
        method: s.method,
        lambda: s.lambda,
        max_iters: s.max_iters,
        tol: s.tol,
        x0: s.x0.clone(),
    };
    spec.validate(&s.problem)?;
    let mut report = RunReport {
        problem_id: s.problem.id.clone(),
        method: s.method.name().into(),
        lambda: s.lambda,
        dt: None,
        t_end: None,
        tol: s.tol,
        final_residual: f64::NAN,
        iterations_or_steps: 0,
        stop_reason: stop_name(StopReason::Divergence),
        final_state: Vec::new(),
        monitor_verdicts: BTreeMap::new(),
        certificate: None,
        wall_time_ms: 0.0,
    };
    let rec = match iterate(&s.problem, &spec) {
        Ok(r) => r,
        Err(Error::Divergence { step }) => {
            prepare(&s.output)?;
            report.iterations_or_steps = step;
            report.wall_time_ms = elapsed_ms(start);
            write_json(&s.output, REPORT_JSON, &report)?;
            println!("{}: diverged at iteration {step}", s.problem.id);
            return Ok(Status::Divergence);
        }
        Err(e) => return Err(e.into()),
    };

    let losses: Option<Vec<f64>> = rec
        .xs
        .iter()
        .map(|x| loss_l1_logistic(&s.problem, x).ok())
        .collect();
    let xbar = s.problem.known_solution.as_deref();
    let mut csv = csv_header(s.problem.dim, xbar.is_some(), losses.as_ref().map(|_| "loss"));
    for k in 0..rec.xs.len() {
        push_row(
            &mut csv,
            &Row {
                t: k as f64,
                x: &rec.xs[k],
                y: &rec.ys[k],
                residual: rec.residuals[k],
                lyapunov: xbar.map(|xb| dist_sq(&rec.xs[k], xb)),
                extra: losses.as_ref().map(|l| l[k]),
            },
        );
    }

    if let Some(xb) = xbar {
        let d: Vec<f64> = rec.xs.iter().map(|x| dist_sq(x, xb)).collect();
        let margin = d.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        let margin = if margin.is_finite() { margin } else { 0.0 };
        report
            .monitor_verdicts
            .insert("fejer_monotone".into(), verdict(margin >= -1e-12, margin));
    }
    if let Some(l) = &losses {
        // The first step may raise the loss; monotonicity is checked afterwards.
        let margin = l.windows(2).skip(1).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        let margin = if margin.is_finite() { margin } else { 0.0 };
        report
            .monitor_verdicts
            .insert("loss_nonincreasing".into(), verdict(margin >= -1e-12, margin));
    }

    report.final_residual = rec.final_residual();
    report.iterations_or_steps = rec.iterations;
    report.stop_reason = stop_name(rec.stop_reason);
    report.final_state = rec.final_iterate().to_vec();
    report.wall_time_ms = elapsed_ms(start);

    prepare(&s.output)?;
    fs::write(s.output.join(ITERATES_CSV), csv)?;
    write_json(&s.output, REPORT_JSON, &report)?;
    let method = match s.method {
        Method::TsengFbf { relaxation } => format!("tseng (relaxation {relaxation})"),
        Method::ProxGrad => "prox-grad".into(),
    };
    println!(
        "{}: {method} {} after {} iterations, residual {:.3e}, x = {:?}",
        s.problem.id, report.stop_reason, rec.iterations, report.final_residual, report.final_state
    );
    Ok(rec.stop_reason.into())
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub problem_id: String,
    pub seed: u64,
    pub samples: usize,
    pub domain: SamplingBox,
    pub lipschitz_estimate: f64,
    pub lipschitz_upper_bound: f64,
    pub beta_used: f64,
    pub verdict: MonotonicityVerdict,
    pub certificate: Option<StabilityCertificate>,
}

pub fn analyze(s: &Settings) -> Result<Status> {
    let domain = SamplingBox::for_problem(&s.problem);
    let estimate = estimate_lipschitz(&s.problem.operator, &domain, s.samples.max(2), s.seed)?;
    let verdict = classify_monotonicity(&s.problem, &domain, s.samples, s.seed)?;
    let beta = selection_beta(&s.problem);
    let mu = s.problem.strong_pseudo_mu.or(verdict.mu_estimate);
    let certificate = match mu {
        Some(mu) if beta > 0.0 => Some(make_certificate(beta, mu, s.lambda)?),
        _ => None,
    };

    let f = verdict.class_flags;
    println!("{}: sampled Lipschitz estimate {estimate:.6}, upper bound {:.6}", s.problem.id, lipschitz_upper_bound(&s.problem.operator));
    println!(
        "  monotone={} pseudomonotone={} h_pseudomonotone={} h_strongly_pseudomonotone={} mu_estimate={:?}",
        f.monotone, f.pseudomonotone, f.h_pseudomonotone, f.h_strongly_pseudomonotone, verdict.mu_estimate
    );
    for w in &verdict.witnesses {
        println!(
            "  witness {:?}: u={:?} v={:?} antecedent={:?} value={}",
            w.class, w.u, w.v, w.antecedent, w.value
        );
    }
    if let Some(c) = &certificate {
        println!(
            "  certificate: beta={} mu={} lambda={} alpha={:.6e} lambda_valid={}",
            c.beta, c.mu, c.lambda, c.alpha, c.lambda_valid
        );
    }

    let report = AnalysisReport {
        problem_id: s.problem.id.clone(),
        seed: s.seed,
        samples: s.samples,
        lipschitz_upper_bound: lipschitz_upper_bound(&s.problem.operator),
        domain,
        lipschitz_estimate: estimate,
        beta_used: beta,
        verdict,
        certificate,
    };
    prepare(&s.output)?;
    write_json(&s.output, ANALYSIS_JSON, &report)?;
    Ok(Status::Converged)
}

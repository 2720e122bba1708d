//! Continuous-time flows and fixed-step integration.
//!
//! The forward-backward-forward system is
//!
//! ```text
//! y(t)  = prox_{λh}(x(t) − λT x(t))
//! ẋ(t)  = y(t) − x(t) + λ[T x(t) − T y(t)]
//! ```
//!
//! and the baseline prox-gradient flow is `ẋ = −δ(x − prox_{λh}(x − λT x))`.
//! Both are integrated with explicit Euler or classical RK4 at a fixed step.

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, dist, dist_sq, norm};
use crate::problem::MviProblem;
use crate::solver::{self, IterSpec, Method};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_STOP_TOL: f64 = 1e-8;
/// States beyond this norm are treated as divergent before they overflow.
pub const DIVERGENCE_NORM: f64 = 1e100;

pub(crate) fn diverged(x: &[f64]) -> bool {
    !all_finite(x) || norm(x) > DIVERGENCE_NORM
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum System {
    Fbf,
    ProxGradFlow { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub system: System,
    pub lambda: f64,
    pub t_end: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
    pub record_stride: usize,
    pub scheme: Scheme,
    /// Skip the `λ(1 + β²) < 1` check for the FBF system.
    pub allow_invalid_lambda: bool,
}

impl FlowSpec {
    pub fn fbf(lambda: f64, dt: f64, t_end: f64, x0: Vec<f64>) -> Self {
        Self {
            system: System::Fbf,
            lambda,
            t_end,
            dt,
            x0,
            record_stride: 1,
            scheme: Scheme::Euler,
            allow_invalid_lambda: false,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn allow_invalid_lambda(mut self) -> Self {
        self.allow_invalid_lambda = true;
        self
    }

    pub fn validate(&self, problem: &MviProblem) -> Result<()> {
        check_dim(problem.dim, &self.x0)?;
        if !all_finite(&self.x0) {
            return Err(Error::InvalidArgument("x0 is not finite".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.dt > 0.0 && self.t_end.is_finite() && self.dt <= self.t_end) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt <= t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
        }
        match self.system {
            System::ProxGradFlow { delta } if !(delta > 0.0 && delta.is_finite()) => {
                return Err(Error::InvalidArgument(format!(
                    "delta must be positive, got {delta}"
                )));
            }
            System::Fbf if !self.allow_invalid_lambda => {
                let beta = analysis::validation_beta(problem)?;
                if self.lambda * (1.0 + beta * beta) >= 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "lambda = {} violates lambda(1 + beta^2) < 1 with beta = {beta}",
                        self.lambda
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Tolerance,
    Horizon,
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    /// `‖x − y‖` per recorded time.
    pub residuals: Vec<f64>,
    /// `‖x − x̄‖²` per recorded time, when the problem has a known solution.
    pub lyapunov: Option<Vec<f64>>,
    pub steps: usize,
    pub stop_reason: StopReason,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.xs.last().map(Vec::as_slice)
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }
}

/// FBF velocity at `x`. Returns `(ẋ, y)`.
pub fn rhs_fbf(problem: &MviProblem, x: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let tx = problem.eval_operator(x)?;
    let z: Vec<f64> = x.iter().zip(&tx).map(|(xi, ti)| xi - lambda * ti).collect();
    let y = problem.prox.prox(&z, lambda)?;
    let ty = problem.eval_operator(&y)?;
    let dx = fbf_displacement(x, &y, &tx, &ty, lambda);
    Ok((dx, y))
}

/// `y − x + λ(T x − T y)`. Shared by the flow and the discrete iteration so
/// that a unit Euler step and an unrelaxed Tseng step are the same floating
/// point operations.
pub(crate) fn fbf_displacement(x: &[f64], y: &[f64], tx: &[f64], ty: &[f64], lambda: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| y[i] - x[i] + lambda * (tx[i] - ty[i]))
        .collect()
}

pub fn rhs_proxgrad(problem: &MviProblem, x: &[f64], lambda: f64, delta: f64) -> Result<Vec<f64>> {
    Ok(rhs_proxgrad_with_y(problem, x, lambda, delta)?.0)
}

fn rhs_proxgrad_with_y(
    problem: &MviProblem,
    x: &[f64],
    lambda: f64,
    delta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(lambda > 0.0 && delta > 0.0) {
        return Err(Error::InvalidArgument(
            "lambda and delta must be positive".into(),
        ));
    }
    let y = problem.forward_backward(x, lambda)?;
    let dx = x.iter().zip(&y).map(|(xi, yi)| -delta * (xi - yi)).collect();
    Ok((dx, y))
}

fn velocity(problem: &MviProblem, system: System, x: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    match system {
        System::Fbf => rhs_fbf(problem, x, lambda),
        System::ProxGradFlow { delta } => rhs_proxgrad_with_y(problem, x, lambda, delta),
    }
}

/// Integrates `flow` until `t_end` or until `‖x − y‖ ≤ stop_tol`.
///
/// States are recorded every `record_stride` steps; the final state is always
/// recorded. A non-finite state aborts with [`Error::Divergence`].
pub fn integrate(problem: &MviProblem, flow: &FlowSpec, stop_tol: f64) -> Result<TrajectoryRecord> {
    flow.validate(problem)?;
    if !(stop_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "stop_tol must be nonnegative, got {stop_tol}"
        )));
    }
    let n_steps = step_count(flow.t_end, flow.dt);
    let lambda = flow.lambda;
    let dt = flow.dt;

    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        xs: Vec::new(),
        ys: Vec::new(),
        residuals: Vec::new(),
        lyapunov: problem.known_solution.as_ref().map(|_| Vec::new()),
        steps: 0,
        stop_reason: StopReason::Horizon,
    };
    let push = |rec: &mut TrajectoryRecord, t: f64, x: &[f64], y: Vec<f64>, r: f64| {
        rec.times.push(t);
        rec.residuals.push(r);
        if let (Some(lyap), Some(xbar)) = (rec.lyapunov.as_mut(), problem.known_solution.as_ref()) {
            lyap.push(dist_sq(x, xbar));
        }
        rec.xs.push(x.to_vec());
        rec.ys.push(y);
    };

    let mut x = flow.x0.clone();
    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let (dx, y) = velocity(problem, flow.system, &x, lambda)?;
        let r = dist(&x, &y);
        let done = r <= stop_tol || k == n_steps;
        if done || k % flow.record_stride == 0 {
            push(&mut rec, t, &x, y, r);
        }
        if done {
            rec.steps = k;
            rec.stop_reason = if r <= stop_tol {
                StopReason::Tolerance
            } else {
                StopReason::Horizon
            };
            break;
        }
        match flow.scheme {
            Scheme::Euler => {
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += dt * di;
                }
            }
            Scheme::Rk4 => {
                let f = |p: &[f64]| velocity(problem, flow.system, p, lambda).map(|v| v.0);
                let shifted = |base: &[f64], d: &[f64], h: f64| -> Vec<f64> {
                    base.iter().zip(d).map(|(b, di)| b + h * di).collect()
                };
                let k1 = dx;
                let k2 = f(&shifted(&x, &k1, 0.5 * dt))?;
                let k3 = f(&shifted(&x, &k2, 0.5 * dt))?;
                let k4 = f(&shifted(&x, &k3, dt))?;
                for i in 0..x.len() {
                    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        if diverged(&x) {
            return Err(Error::Divergence { step: k + 1 });
        }
    }
    Ok(rec)
}

fn step_count(t_end: f64, dt: f64) -> usize {
    let ratio = t_end / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// True iff `steps` unit Euler steps of the FBF flow reproduce the unrelaxed
/// Tseng iteration bit for bit.
pub fn euler_equiv_check(problem: &MviProblem, lambda: f64, steps: usize, x0: &[f64]) -> bool {
    let flow = FlowSpec::fbf(lambda, 1.0, steps as f64, x0.to_vec()).allow_invalid_lambda();
    let Ok(traj) = integrate(problem, &flow, 0.0) else {
        return false;
    };
    let spec = IterSpec {
        method: Method::TsengFbf { relaxation: 1.0 },
        lambda,
        max_iters: steps,
        tol: 0.0,
        x0: x0.to_vec(),
    };
    let Ok(run) = solver::iterate(problem, &spec) else {
        return false;
    };
    traj.xs.len() == run.xs.len()
        && traj.xs.iter().zip(&run.xs).all(|(a, b)| {
            a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::problem::{build_example, Example};

    #[test]
    fn fbf_rhs_at_solution_is_zero() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let (dx, y) = rhs_fbf(&p, &[3.0], 0.25).unwrap();
        assert_eq!(dx, vec![0.0]);
        assert_eq!(y, vec![3.0]);
        let p2 = build_example(Example::Ex2, 0).unwrap();
        let (dx, _) = rhs_fbf(&p2, &[0.0; 3], 0.03).unwrap();
        assert!(norm(&dx) <= 1e-10);
    }

    #[test]
    fn fbf_rhs_away_from_solution() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let (dx, y) = rhs_fbf(&p, &[0.1], 0.25).unwrap();
        assert_eq!(y, vec![3.0]);
        assert!((dx[0] - 3.625).abs() < 1e-14);
    }

    #[test]
    fn proxgrad_rhs_values() {
        let p = build_example(Example::Ex1, 0).unwrap();
        for delta in [0.5, 1.0, 3.0] {
            assert_eq!(rhs_proxgrad(&p, &[3.0], 0.25, delta).unwrap(), vec![0.0]);
        }
        let v = rhs_proxgrad(&p, &[0.1], 0.25, 1.0).unwrap();
        assert!((v[0] - 2.9).abs() < 1e-14);
        assert!(rhs_proxgrad(&p, &[0.1], 0.25, 0.0).is_err());
    }

    #[test]
    fn proxgrad_rhs_norm_is_delta_times_residual() {
        let p = build_example(Example::Ex2, 0).unwrap();
        let x = [1.0, -0.5, -0.5];
        let lambda = 0.03;
        let r = crate::problem::fbf_residual(&p, &x, lambda).unwrap().natural_residual;
        for delta in [0.3, 1.0, 2.0] {
            let v = rhs_proxgrad(&p, &x, lambda, delta).unwrap();
            assert!((norm(&v) - delta * r).abs() < 1e-12);
        }
    }

    #[test]
    fn ex1_converges_from_point_one() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let rec = integrate(&p, &FlowSpec::fbf(0.25, 0.01, 20.0, vec![0.1]), 0.0).unwrap();
        assert!((rec.final_state().unwrap()[0] - 3.0).abs() <= 1e-4);
        assert_eq!(rec.stop_reason, StopReason::Horizon);
        assert_eq!(rec.len(), 2001);
        assert_eq!(rec.times.last().copied(), Some(20.0));
    }

    #[test]
    fn ex1_rk4_agrees_with_euler() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let flow = FlowSpec::fbf(0.25, 0.01, 20.0, vec![0.1]);
        let e = integrate(&p, &flow, 1e-8).unwrap();
        let r = integrate(&p, &flow.clone().with_scheme(Scheme::Rk4), 1e-8).unwrap();
        assert_eq!(r.stop_reason, StopReason::Tolerance);
        assert!((e.final_state().unwrap()[0] - r.final_state().unwrap()[0]).abs() < 1e-7);
    }

    #[test]
    fn start_at_equilibrium_is_constant() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let rec = integrate(&p, &FlowSpec::fbf(0.25, 0.01, 1.0, vec![3.0]), 0.0).unwrap();
        assert!(rec.residuals.iter().all(|&r| r <= 1e-10));
        assert!(rec.xs.iter().all(|x| x[0] == 3.0));
        // with a positive tolerance it stops immediately
        let rec = integrate(&p, &FlowSpec::fbf(0.25, 0.01, 1.0, vec![3.0]), 1e-8).unwrap();
        assert_eq!(rec.steps, 0);
        assert_eq!(rec.stop_reason, StopReason::Tolerance);
    }

    #[test]
    fn stride_records_final_state() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let rec = integrate(
            &p,
            &FlowSpec::fbf(0.25, 0.01, 1.0, vec![0.1]).with_stride(30),
            0.0,
        )
        .unwrap();
        assert_eq!(rec.times.len(), 5);
        assert_eq!(rec.times.last().copied(), Some(1.0));
        for (k, r) in rec.residuals.iter().enumerate() {
            assert!((r - dist(&rec.xs[k], &rec.ys[k])).abs() <= 1e-12);
        }
    }

    #[test]
    fn invalid_lambda_rejected_unless_overridden() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let flow = FlowSpec::fbf(0.5, 0.01, 1.0, vec![0.1]);
        assert!(matches!(integrate(&p, &flow, 0.0), Err(Error::InvalidArgument(_))));
        assert!(integrate(&p, &flow.allow_invalid_lambda(), 0.0).is_ok());
    }

    #[test]
    fn bad_flow_parameters_rejected() {
        let p = build_example(Example::Ex1, 0).unwrap();
        assert!(integrate(&p, &FlowSpec::fbf(0.25, 2.0, 1.0, vec![0.1]), 0.0).is_err());
        assert!(integrate(&p, &FlowSpec::fbf(0.25, 0.0, 1.0, vec![0.1]), 0.0).is_err());
        assert!(integrate(&p, &FlowSpec::fbf(0.25, 0.1, 1.0, vec![0.1, 0.2]), 0.0).is_err());
        assert!(integrate(&p, &FlowSpec::fbf(0.25, 0.1, 1.0, vec![0.1]).with_stride(0), 0.0).is_err());
    }

    #[test]
    fn divergence_names_step() {
        use crate::linalg::Matrix;
        use crate::problem::OperatorSpec;
        use crate::prox::ProxSpec;
        // T(x) = -1e200·x with no prox damping: x grows by 1e200·λ·(...) per step.
        let p = MviProblem::new(
            "blowup",
            OperatorSpec::Affine {
                matrix: Matrix::scalar(-1e200),
                offset: vec![0.0],
            },
            ProxSpec::Zero,
        )
        .unwrap();
        let flow = FlowSpec::fbf(1.0, 1.0, 50.0, vec![1.0]).allow_invalid_lambda();
        match integrate(&p, &flow, 0.0) {
            Err(Error::Divergence { step }) => assert!((1..=50).contains(&step)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn proxgrad_flow_converges_on_ex1() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let flow = FlowSpec {
            system: System::ProxGradFlow { delta: 1.0 },
            ..FlowSpec::fbf(0.25, 0.01, 40.0, vec![0.1])
        };
        let rec = integrate(&p, &flow, 1e-10).unwrap();
        assert_eq!(rec.stop_reason, StopReason::Tolerance);
        assert!((rec.final_state().unwrap()[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn euler_matches_tseng() {
        let p1 = build_example(Example::Ex1, 0).unwrap();
        assert!(euler_equiv_check(&p1, 0.25, 50, &[0.1]));
        let p2 = build_example(Example::Ex2, 0).unwrap();
        let beta = p2.lipschitz_beta.unwrap();
        assert!(euler_equiv_check(&p2, 0.8 / (1.0 + beta * beta), 100, &[-4.0, 3.0, 5.0]));
        let p3 = build_example(Example::Ex3, 11).unwrap();
        assert!(euler_equiv_check(&p3, 0.01, 33, &Example::Ex3.default_start(11)));
    }
}

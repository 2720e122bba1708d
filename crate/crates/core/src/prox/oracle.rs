//! Brute-force reference for [`ProxSpec::prox`].
//!
//! Nothing here calls the closed forms. For `n ≤ 3` the objective
//! `λh(v) + ½‖z − v‖²` is minimised on successively refined grids until the
//! grid spacing reaches the requested resolution. Separable variants are
//! searched coordinate by coordinate, which yields the same argmin as the full
//! product grid. The box/hyperplane indicator is searched over the first
//! coordinate on its exact feasible interval; in three dimensions the second
//! coordinate is then a clamped scalar quadratic. Larger dimensions fall back
//! to projected subgradient descent.

use super::ProxSpec;
use crate::error::{Error, Result};

const GRID_POINTS_1D: usize = 1001;
const SUBGRADIENT_ITERS: usize = 100_000;
const DYKSTRA_ITERS: usize = 10_000;

pub fn prox_oracle(spec: &ProxSpec, z: &[f64], lambda: f64, resolution: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) || !(resolution > 0.0) {
        return Err(Error::InvalidArgument(
            "lambda and resolution must be positive".into(),
        ));
    }
    if z.len() > 3 {
        return subgradient_descent(spec, z, lambda);
    }
    match *spec {
        ProxSpec::IndicatorBoxHyperplane { lo, hi, target_sum } => {
            hyperplane_grid(z, lo, hi, target_sum, resolution)
        }
        _ => Ok(z
            .iter()
            .map(|&zi| {
                let (a, b) = search_range(spec, zi, lambda);
                grid_min_1d(|v| scalar_objective(spec, v, zi, lambda), a, b, resolution)
            })
            .collect()),
    }
}

/// One coordinate of a separable objective.
fn scalar_objective(spec: &ProxSpec, v: f64, z: f64, lambda: f64) -> f64 {
    let h = match *spec {
        ProxSpec::QuadraticOnInterval { lo, hi } => {
            if v < lo || v > hi {
                f64::INFINITY
            } else {
                v * v
            }
        }
        ProxSpec::IndicatorInterval { lo, hi } => {
            if v < lo || v > hi {
                f64::INFINITY
            } else {
                0.0
            }
        }
        ProxSpec::ScaledL1 { eta } => eta * v.abs(),
        ProxSpec::Zero => 0.0,
        ProxSpec::IndicatorBoxHyperplane { .. } => unreachable!("not separable"),
    };
    lambda * h + 0.5 * (z - v) * (z - v)
}

fn search_range(spec: &ProxSpec, z: f64, lambda: f64) -> (f64, f64) {
    match *spec {
        ProxSpec::QuadraticOnInterval { lo, hi } | ProxSpec::IndicatorInterval { lo, hi } => {
            (lo, hi)
        }
        ProxSpec::ScaledL1 { eta } => {
            let r = 1.0 + z.abs() + lambda * eta;
            (z - r, z + r)
        }
        _ => (z - 1.0 - z.abs(), z + 1.0 + z.abs()),
    }
}

/// Zooming grid search for a convex function of one variable on `[a, b]`.
fn grid_min_1d(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, resolution: f64) -> f64 {
    loop {
        let step = (b - a) / (GRID_POINTS_1D - 1) as f64;
        let mut best = (a, f(a));
        for k in 1..GRID_POINTS_1D {
            let v = if k == GRID_POINTS_1D - 1 { b } else { a + k as f64 * step };
            let fv = f(v);
            if fv < best.1 {
                best = (v, fv);
            }
        }
        if step <= resolution {
            return best.0;
        }
        a = (best.0 - 2.0 * step).max(a);
        b = (best.0 + 2.0 * step).min(b);
    }
}

fn hyperplane_grid(z: &[f64], lo: f64, hi: f64, s: f64, resolution: f64) -> Result<Vec<f64>> {
    let n = z.len();
    if s < n as f64 * lo || s > n as f64 * hi {
        return Err(Error::OracleFailure("empty feasible set".into()));
    }
    match n {
        1 => Ok(vec![s]),
        2 => {
            let (a, b) = (lo.max(s - hi), hi.min(s - lo));
            let f = |t: f64| 0.5 * ((t - z[0]).powi(2) + (s - t - z[1]).powi(2));
            let v1 = grid_min_1d(f, a, b, resolution);
            Ok(vec![v1, s - v1])
        }
        3 => {
            // Outer grid over v₁; for fixed v₁ the remaining problem is a
            // one-dimensional quadratic on an interval, minimised exactly.
            let inner = |u: f64| -> (f64, f64) {
                let r = s - u;
                let (a, b) = (lo.max(r - hi), hi.min(r - lo));
                let w = (0.5 * (z[1] + r - z[2])).clamp(a, b);
                let f = 0.5 * ((u - z[0]).powi(2) + (w - z[1]).powi(2) + (r - w - z[2]).powi(2));
                (w, f)
            };
            let (a, b) = (lo.max(s - 2.0 * hi), hi.min(s - 2.0 * lo));
            let u = grid_min_1d(|u| inner(u).1, a, b, resolution);
            let w = inner(u).0;
            Ok(vec![u, w, s - u - w])
        }
        _ => unreachable!(),
    }
}

/// Dykstra's alternating projections onto `[lo, hi]ⁿ` and `{Σv = s}`.
pub fn dykstra_box_hyperplane(z: &[f64], lo: f64, hi: f64, s: f64, iters: usize) -> Vec<f64> {
    let n = z.len();
    let mut x = z.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..iters {
        // hyperplane step
        let w: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let shift = (s - w.iter().sum::<f64>()) / n as f64;
        let y: Vec<f64> = w.iter().map(|v| v + shift).collect();
        for i in 0..n {
            p[i] = w[i] - y[i];
        }
        // box step
        let w: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let next: Vec<f64> = w.iter().map(|v| v.clamp(lo, hi)).collect();
        for i in 0..n {
            q[i] = w[i] - next[i];
        }
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if moved == 0.0 {
            break;
        }
    }
    x
}

fn subgradient_descent(spec: &ProxSpec, z: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let project = |v: &mut Vec<f64>| match *spec {
        ProxSpec::QuadraticOnInterval { lo, hi } | ProxSpec::IndicatorInterval { lo, hi } => {
            v.iter_mut().for_each(|x| *x = x.clamp(lo, hi));
        }
        ProxSpec::IndicatorBoxHyperplane { lo, hi, target_sum } => {
            *v = dykstra_box_hyperplane(v, lo, hi, target_sum, DYKSTRA_ITERS);
        }
        ProxSpec::ScaledL1 { .. } | ProxSpec::Zero => {}
    };
    let mut v = z.to_vec();
    project(&mut v);
    let mut last_move = f64::INFINITY;
    for k in 0..SUBGRADIENT_ITERS {
        // The objective is 1-strongly convex, so steps 1/(k+1) converge.
        let step = 1.0 / (k as f64 + 1.0);
        let mut next: Vec<f64> = v
            .iter()
            .zip(z)
            .map(|(&vi, &zi)| {
                let dh = match *spec {
                    ProxSpec::QuadraticOnInterval { .. } => 2.0 * vi,
                    ProxSpec::ScaledL1 { eta } => {
                        if vi > 0.0 {
                            eta
                        } else if vi < 0.0 {
                            -eta
                        } else {
                            0.0
                        }
                    }
                    _ => 0.0,
                };
                vi - step * (lambda * dh + (vi - zi))
            })
            .collect();
        project(&mut next);
        last_move = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
    }
    if !(last_move <= 1e-3) {
        return Err(Error::OracleFailure(format!(
            "subgradient descent did not settle (last step {last_move:e})"
        )));
    }
    Ok(v)
}

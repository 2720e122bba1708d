//! Operator constants, monotonicity classification by sampling, exponential
//! stability certificates, and post-hoc checks on computed trajectories.
//!
//! Sampling can only falsify a monotonicity class or bound a constant from
//! one side: a sampled Lipschitz ratio is a lower bound on β, and a sampled
//! infimum for μ is an upper estimate of the true modulus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rhs_fbf, TrajectoryRecord};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist, dist_sq, dot, norm, spectral_norm, sub, Matrix};
use crate::problem::{MviProblem, OperatorSpec};

const POWER_ITER_TOL: f64 = 1e-14;
const POWER_ITER_MAX: usize = 100_000;
/// Inflation applied to a sampled β when it is used to validate λ.
pub const SAMPLED_BETA_INFLATION: f64 = 1.05;
pub const DEFAULT_SAMPLES: usize = 20_000;
/// Relative slack on the exponential decay bound.
pub const DECAY_RELATIVE_SLACK: f64 = 1e-2;
/// Lyapunov values at or below this are left out of the decay-rate fit.
pub const LYAPUNOV_FIT_FLOOR: f64 = 1e-20;
const MIN_HIT_RATE: f64 = 0.1;

/// Axis-aligned sampling region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SamplingBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    /// The bounding box of `dom h` when it is bounded, else `[−5, 5]ⁿ`.
    pub fn for_problem(problem: &MviProblem) -> Self {
        let (lo, hi) = problem.prox.bounds().unwrap_or((-5.0, 5.0));
        Self::cube(problem.dim, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        check_dim(dim, &self.lo)?;
        check_dim(dim, &self.hi)?;
        if self
            .lo
            .iter()
            .zip(&self.hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(Error::InvalidArgument("degenerate sampling box".into()));
        }
        Ok(())
    }

    fn diameter(&self) -> f64 {
        dist(&self.lo, &self.hi)
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| rng.gen_range(a..=b))
            .collect()
    }

    fn clamp(&self, v: &mut [f64]) {
        for ((x, &a), &b) in v.iter_mut().zip(&self.lo).zip(&self.hi) {
            *x = x.clamp(a, b);
        }
    }

    fn contains(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| x >= a && x <= b)
    }
}

/// Sampled lower bound on the Lipschitz modulus of `T` over `domain`; exact
/// spectral norm for affine operators.
///
/// Half of the pairs are independent uniform draws, the other half are local
/// pairs at log-uniform separations, which is where the ratio of a smooth
/// nonlinear map approaches its modulus.
pub fn estimate_lipschitz(op: &OperatorSpec, domain: &SamplingBox, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    domain.validate(op.dim())?;
    if let OperatorSpec::Affine { matrix, .. } = op {
        return Ok(spectral_norm(matrix, POWER_ITER_TOL, POWER_ITER_MAX));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diam = domain.diameter();
    let n = op.dim();
    let mut best = 0.0_f64;
    for k in 0..samples {
        let u = domain.sample(&mut rng);
        let v = if k % 2 == 0 {
            domain.sample(&mut rng)
        } else {
            let radius = diam * 10f64.powf(-rng.gen_range(0.0..6.0));
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let nd = norm(&dir);
            let mut v: Vec<f64> = u
                .iter()
                .zip(&dir)
                .map(|(ui, di)| ui + radius * di / nd.max(f64::MIN_POSITIVE))
                .collect();
            domain.clamp(&mut v);
            v
        };
        let d = dist(&u, &v);
        if d <= 1e-12 * diam {
            continue;
        }
        let ratio = dist(&op.eval(&u)?, &op.eval(&v)?) / d;
        best = best.max(ratio);
    }
    Ok(best)
}

/// Closed-form upper bound on the Lipschitz modulus of `T` on ℝⁿ.
///
/// * affine: `‖A‖₂`;
/// * `(e^{−‖x‖²} + q)Mx`: the Jacobian is `(e^{−r²} + q)M − 2e^{−r²}Mxxᵀ`,
///   so `‖J‖ ≤ ‖M‖(1 + q + 2/e)`;
/// * logistic gradient: `σ' ≤ 1/4`, so `‖BᵀB‖₂ / 4`.
pub fn lipschitz_upper_bound(op: &OperatorSpec) -> f64 {
    match op {
        OperatorSpec::Affine { matrix, .. } => spectral_norm(matrix, POWER_ITER_TOL, POWER_ITER_MAX),
        OperatorSpec::ScaledMatrixGaussian { matrix, shift } => {
            spectral_norm(matrix, POWER_ITER_TOL, POWER_ITER_MAX)
                * (1.0 + shift + 2.0 * (-1.0_f64).exp())
        }
        OperatorSpec::LogisticGradient { features, .. } => {
            let s = spectral_norm(features, POWER_ITER_TOL, POWER_ITER_MAX);
            0.25 * s * s
        }
    }
}

/// β used to check `λ(1 + β²) < 1`: the problem's stated modulus, else a
/// sampled estimate inflated by 5%.
pub fn validation_beta(problem: &MviProblem) -> Result<f64> {
    if let Some(b) = problem.lipschitz_beta {
        return Ok(b);
    }
    let est = estimate_lipschitz(
        &problem.operator,
        &SamplingBox::for_problem(problem),
        DEFAULT_SAMPLES,
        0,
    )?;
    Ok(est * SAMPLED_BETA_INFLATION)
}

/// β used to choose λ from a fraction (`λ = f/(1 + β²)`): the smaller of the
/// stated modulus and the closed-form upper bound, both of which are valid
/// upper bounds.
pub fn selection_beta(problem: &MviProblem) -> f64 {
    let bound = lipschitz_upper_bound(&problem.operator);
    match problem.lipschitz_beta {
        Some(b) => b.min(bound),
        None => bound,
    }
}

pub fn lambda_from_fraction(problem: &MviProblem, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda fraction must be positive, got {fraction}"
        )));
    }
    let beta = selection_beta(problem);
    Ok(fraction / (1.0 + beta * beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityClass {
    Monotone,
    Pseudomonotone,
    HPseudomonotone,
    HStronglyPseudomonotone,
}

/// A sampled pair that breaks a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub class: MonotonicityClass,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Left-hand side of the implication, for the implication classes.
    pub antecedent: Option<f64>,
    /// The quantity that should be nonnegative but is not.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFlags {
    pub monotone: bool,
    pub pseudomonotone: bool,
    pub h_pseudomonotone: bool,
    pub h_strongly_pseudomonotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub class_flags: ClassFlags,
    pub witnesses: Vec<Witness>,
    pub mu_estimate: Option<f64>,
    pub samples_used: usize,
    /// Fraction of sampled points that fell in `dom h`.
    pub hit_rate: f64,
}

impl MonotonicityVerdict {
    pub fn witnesses_for(&self, class: MonotonicityClass) -> impl Iterator<Item = &Witness> {
        self.witnesses.iter().filter(move |w| w.class == class)
    }
}

/// Quantities of the four definitions for one ordered pair.
#[derive(Debug, Clone, Copy)]
pub struct PairTerms {
    /// `⟨Tu − Tv, u − v⟩`
    pub monotone: f64,
    /// `⟨Tu, v − u⟩`
    pub tu: f64,
    /// `⟨Tv, v − u⟩`
    pub tv: f64,
    /// `h(v) − h(u)`
    pub dh: f64,
    /// `‖u − v‖²`
    pub dist_sq: f64,
}

pub fn pair_terms(problem: &MviProblem, u: &[f64], v: &[f64]) -> Result<PairTerms> {
    let tu = problem.eval_operator(u)?;
    let tv = problem.eval_operator(v)?;
    let vu = sub(v, u);
    let dh = problem.prox.value(v) - problem.prox.value(u);
    Ok(PairTerms {
        monotone: -dot(&sub(&tu, &tv), &vu),
        tu: dot(&tu, &vu),
        tv: dot(&tv, &vu),
        dh,
        dist_sq: dist_sq(u, v),
    })
}

fn violation_tol(scale: f64) -> f64 {
    1e-12 * (1.0 + scale)
}

#[derive(Default)]
struct ClassTracker {
    probe: Vec<Witness>,
    worst: Option<Witness>,
}

impl ClassTracker {
    fn record(&mut self, w: Witness, from_probe: bool) {
        if from_probe {
            self.probe.push(w);
        } else if self.worst.as_ref().is_none_or(|cur| w.value < cur.value) {
            self.worst = Some(w);
        }
    }

    fn violated(&self) -> bool {
        !self.probe.is_empty() || self.worst.is_some()
    }

    fn into_witnesses(self) -> impl Iterator<Item = Witness> {
        self.probe.into_iter().chain(self.worst)
    }
}

/// Empirical classification of `(T, h)` against the monotonicity family.
///
/// Monotonicity and pseudomonotonicity involve `T` alone and are tested on
/// raw points of `domain`; the h-classes are tested on points of
/// `domain ∩ dom h` (after projecting onto the affine hull of `dom h`).
/// Every pair of the problem's probe points is checked as well. For each
/// violated class the verdict keeps all probe-pair witnesses and the worst
/// sampled one.
pub fn classify_monotonicity(
    problem: &MviProblem,
    domain: &SamplingBox,
    samples: usize,
    seed: u64,
) -> Result<MonotonicityVerdict> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    domain.validate(problem.dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut raw = Vec::with_capacity(2 * samples);
    let mut feasible = Vec::new();
    for _ in 0..2 * samples {
        let p = domain.sample(&mut rng);
        let q = problem.prox.onto_affine_hull(&p);
        if domain.contains(&q) && problem.prox.contains(&q, 0.0) {
            feasible.push(q);
        }
        raw.push(p);
    }
    let hit_rate = feasible.len() as f64 / raw.len() as f64;
    if hit_rate < MIN_HIT_RATE {
        return Err(Error::Sampling(format!(
            "only {:.1}% of samples fell in dom h",
            100.0 * hit_rate
        )));
    }

    let mut trackers: [ClassTracker; 4] = Default::default();
    let mut mu_inf = f64::INFINITY;
    let mut any_antecedent = false;

    let check_operator = |u: &[f64], v: &[f64], probe: bool, tr: &mut [ClassTracker; 4]| -> Result<()> {
        let t = pair_terms(problem, u, v)?;
        if t.monotone < -violation_tol(t.tu.abs() + t.tv.abs()) {
            tr[0].record(
                Witness {
                    class: MonotonicityClass::Monotone,
                    u: u.to_vec(),
                    v: v.to_vec(),
                    antecedent: None,
                    value: t.monotone,
                },
                probe,
            );
        }
        if t.tu >= 0.0 && t.tv < -violation_tol(t.tv.abs()) {
            tr[1].record(
                Witness {
                    class: MonotonicityClass::Pseudomonotone,
                    u: u.to_vec(),
                    v: v.to_vec(),
                    antecedent: Some(t.tu),
                    value: t.tv,
                },
                probe,
            );
        }
        Ok(())
    };
    let mut check_h = |u: &[f64], v: &[f64], probe: bool, tr: &mut [ClassTracker; 4]| -> Result<()> {
        let t = pair_terms(problem, u, v)?;
        let ante = t.tu + t.dh;
        let cons = t.tv + t.dh;
        if ante >= 0.0 {
            if cons < -violation_tol(t.tv.abs() + t.dh.abs()) {
                tr[2].record(
                    Witness {
                        class: MonotonicityClass::HPseudomonotone,
                        u: u.to_vec(),
                        v: v.to_vec(),
                        antecedent: Some(ante),
                        value: cons,
                    },
                    probe,
                );
            }
            if t.dist_sq > 0.0 {
                any_antecedent = true;
                mu_inf = mu_inf.min(cons / t.dist_sq);
            }
        }
        Ok(())
    };

    let probes = &problem.probe_points;
    for (i, u) in probes.iter().enumerate() {
        for (j, v) in probes.iter().enumerate() {
            if i == j {
                continue;
            }
            check_operator(u, v, true, &mut trackers)?;
            if problem.prox.contains(u, 0.0) && problem.prox.contains(v, 0.0) {
                check_h(u, v, true, &mut trackers)?;
            }
        }
    }
    for pair in raw.chunks_exact(2) {
        check_operator(&pair[0], &pair[1], false, &mut trackers)?;
        check_operator(&pair[1], &pair[0], false, &mut trackers)?;
    }
    for pair in feasible.chunks_exact(2) {
        check_h(&pair[0], &pair[1], false, &mut trackers)?;
        check_h(&pair[1], &pair[0], false, &mut trackers)?;
    }

    let h_pseudo = !trackers[2].violated();
    let mu_estimate = (any_antecedent && mu_inf > 0.0 && mu_inf.is_finite()).then_some(mu_inf);
    let h_strong = h_pseudo && mu_estimate.is_some();
    let class_flags = ClassFlags {
        monotone: !trackers[0].violated(),
        pseudomonotone: !trackers[1].violated(),
        h_pseudomonotone: h_pseudo,
        h_strongly_pseudomonotone: h_strong,
    };
    let witnesses = trackers.into_iter().flat_map(ClassTracker::into_witnesses).collect();
    Ok(MonotonicityVerdict {
        class_flags,
        witnesses,
        mu_estimate,
        samples_used: raw.len() / 2 + feasible.len() / 2 + probes.len() * probes.len().saturating_sub(1),
        hit_rate,
    })
}

/// Exponential stability certificate: for `λ(1 + β²) < 1` every trajectory
/// satisfies `‖x(t) − x̄‖² ≤ ‖x(0) − x̄‖² e^{−αt}` with
/// `α = 2[1 − λ(1 + β²)]·(λμ / (1 + λ(μ + β)))²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub lambda_valid: bool,
}

pub fn certificate_alpha(beta: f64, mu: f64, lambda: f64) -> f64 {
    let gap = 1.0 - lambda * (1.0 + beta * beta);
    let ratio = lambda * mu / (1.0 + lambda * (mu + beta));
    2.0 * gap * ratio * ratio
}

pub fn make_certificate(beta: f64, mu: f64, lambda: f64) -> Result<StabilityCertificate> {
    for (name, v) in [("beta", beta), ("mu", mu), ("lambda", lambda)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let lambda_valid = lambda * (1.0 + beta * beta) < 1.0;
    Ok(StabilityCertificate {
        beta,
        mu,
        lambda,
        alpha: if lambda_valid {
            certificate_alpha(beta, mu, lambda)
        } else {
            0.0
        },
        lambda_valid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayOutcome {
    Holds,
    /// First recorded index exceeding the bound, and by how much.
    Violated { step: usize, excess: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub outcome: DecayOutcome,
    /// `−slope` of a least-squares line through `(t, ln ‖x(t) − x̄‖²)`.
    pub fitted_rate: Option<f64>,
    pub alpha: f64,
}

impl DecayReport {
    pub fn holds(&self) -> bool {
        self.outcome == DecayOutcome::Holds
    }

    pub fn rate_at_least_alpha(&self) -> bool {
        self.fitted_rate.is_none_or(|r| r >= self.alpha)
    }
}

pub fn verify_decay(record: &TrajectoryRecord, cert: &StabilityCertificate) -> Result<DecayReport> {
    let lyap = record
        .lyapunov
        .as_ref()
        .ok_or(Error::MissingData("Lyapunov values (no known solution)"))?;
    if !cert.lambda_valid {
        return Err(Error::InvalidArgument(
            "certificate lambda violates lambda(1 + beta^2) < 1".into(),
        ));
    }
    if lyap.is_empty() {
        return Err(Error::MissingData("empty trajectory"));
    }
    let l0 = lyap[0];
    let t0 = record.times[0];
    let mut outcome = DecayOutcome::Holds;
    for (k, (&l, &t)) in lyap.iter().zip(&record.times).enumerate() {
        let bound = l0 * (-cert.alpha * (t - t0)).exp() * (1.0 + DECAY_RELATIVE_SLACK);
        if l > bound {
            outcome = DecayOutcome::Violated {
                step: k,
                excess: l - bound,
            };
            break;
        }
    }

    let pts: Vec<(f64, f64)> = lyap
        .iter()
        .zip(&record.times)
        .filter(|(&l, _)| l > LYAPUNOV_FIT_FLOOR)
        .map(|(&l, &t)| (t, l.ln()))
        .collect();
    let fitted_rate = (pts.len() >= 2).then(|| -least_squares_slope(&pts)).filter(|r| r.is_finite());
    Ok(DecayReport {
        outcome,
        fitted_rate,
        alpha: cert.alpha,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub holds: bool,
    /// Smallest `bound − observed`; negative when violated.
    pub worst_margin: f64,
    pub worst_index: usize,
}

impl InequalityCheck {
    fn from_margins(margins: impl Iterator<Item = f64>) -> Self {
        let (worst_index, worst_margin) = margins
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, m)| if m < acc.1 { (k, m) } else { acc });
        Self {
            holds: worst_margin >= 0.0,
            worst_margin,
            worst_index,
        }
    }
}

/// Per-inequality verdicts along a trajectory. Entries needing `x̄` are
/// `None` without a known solution; the integral bound is also `None` when
/// `λ(1 + β²) ≥ 1`, where it says nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryChecks {
    /// `‖ẋ‖ ≤ (1 + λβ)‖x − y‖`
    pub velocity: InequalityCheck,
    /// `‖x − x̄‖²` nonincreasing up to `10·h²(1 + λβ)²` per recorded step.
    pub lyapunov: Option<InequalityCheck>,
    /// `∫‖x − y‖² dt ≤ ‖x₀ − x̄‖² / (2[1 − λ(1 + β²)])`
    pub residual_integral: Option<InequalityCheck>,
}

impl TrajectoryChecks {
    pub fn all_hold(&self) -> bool {
        self.velocity.holds
            && self.lyapunov.is_none_or(|c| c.holds)
            && self.residual_integral.is_none_or(|c| c.holds)
    }

    pub fn entries(&self) -> Vec<(&'static str, InequalityCheck)> {
        let mut out = vec![("velocity_bound", self.velocity)];
        if let Some(c) = self.lyapunov {
            out.push(("lyapunov_nonincrease", c));
        }
        if let Some(c) = self.residual_integral {
            out.push(("residual_integral", c));
        }
        out
    }
}

pub fn verify_trajectory_inequalities(
    problem: &MviProblem,
    record: &TrajectoryRecord,
    lambda: f64,
    beta: f64,
) -> Result<TrajectoryChecks> {
    if record.is_empty() {
        return Err(Error::MissingData("empty trajectory"));
    }
    let growth = 1.0 + lambda * beta;
    let mut velocity_margins = Vec::with_capacity(record.len());
    for x in &record.xs {
        let (dx, y) = rhs_fbf(problem, x, lambda)?;
        velocity_margins.push(growth * dist(x, &y) + 1e-12 - norm(&dx));
    }
    let velocity = InequalityCheck::from_margins(velocity_margins.into_iter());

    let lyapunov = record.lyapunov.as_ref().map(|l| {
        InequalityCheck::from_margins((1..l.len()).map(|k| {
            let h = record.times[k] - record.times[k - 1];
            l[k - 1] + 10.0 * h * h * growth * growth - l[k]
        }))
    });

    let gap = 1.0 - lambda * (1.0 + beta * beta);
    let residual_integral = match (&record.lyapunov, gap > 0.0) {
        (Some(l), true) => {
            let integral: f64 = (1..record.len())
                .map(|k| {
                    let h = record.times[k] - record.times[k - 1];
                    0.5 * h * (record.residuals[k - 1].powi(2) + record.residuals[k].powi(2))
                })
                .sum();
            let bound = l[0] / (2.0 * gap) + 1e-6;
            Some(InequalityCheck {
                holds: integral <= bound,
                worst_margin: bound - integral,
                worst_index: record.len() - 1,
            })
        }
        _ => None,
    };
    Ok(TrajectoryChecks {
        velocity,
        lyapunov,
        residual_integral,
    })
}

/// `M`'s smallest eigenvalue, for 3×3 symmetric `M`.
pub fn min_eigenvalue_3x3(m: &Matrix) -> Result<f64> {
    Ok(crate::linalg::symmetric_eigenvalues_3x3(m)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, FlowSpec, StopReason};
    use crate::problem::{build_example, ex2_matrix, Example, EX2_SHIFT};
    use crate::prox::ProxSpec;

    #[test]
    fn affine_lipschitz_exact() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let b = SamplingBox::cube(1, 3.0, 5.0);
        for seed in [0, 1, 99] {
            assert_eq!(estimate_lipschitz(&p.operator, &b, 100, seed).unwrap(), 1.0);
        }
        let zero = OperatorSpec::Affine {
            matrix: Matrix::zeros(2, 2),
            offset: vec![0.0, 0.0],
        };
        assert_eq!(
            estimate_lipschitz(&zero, &SamplingBox::cube(2, -1.0, 1.0), 10, 0).unwrap(),
            0.0
        );
    }

    #[test]
    fn affine_estimate_matches_power_iteration() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![-3.0, 0.5]]).unwrap();
        let op = OperatorSpec::Affine {
            matrix: a.clone(),
            offset: vec![1.0, 1.0],
        };
        // σ_max² is the largest eigenvalue of AᵀA = [[13, 0.5], [0.5, 1.25]].
        let (t, d) = (14.25_f64, 13.0 * 1.25 - 0.25);
        let exact = ((t + (t * t - 4.0 * d).sqrt()) / 2.0).sqrt();
        for seed in 0..5 {
            let e = estimate_lipschitz(&op, &SamplingBox::cube(2, -1.0, 1.0), 10, seed).unwrap();
            assert!((e - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn sampled_estimate_is_below_upper_bound() {
        let p = build_example(Example::Ex2, 0).unwrap();
        let est = estimate_lipschitz(&p.operator, &SamplingBox::cube(3, -5.0, 5.0), 20_000, 3).unwrap();
        let ub = lipschitz_upper_bound(&p.operator);
        assert!(est <= ub);
        assert!((ub - 5.0679).abs() < 1e-4, "{ub}");
    }

    #[test]
    fn estimate_rejects_bad_input() {
        let p = build_example(Example::Ex2, 0).unwrap();
        assert!(estimate_lipschitz(&p.operator, &SamplingBox::cube(3, 1.0, 1.0), 10, 0).is_err());
        assert!(estimate_lipschitz(&p.operator, &SamplingBox::cube(3, -1.0, 1.0), 1, 0).is_err());
    }

    #[test]
    fn ex2_min_eigenvalue() {
        let l = min_eigenvalue_3x3(&ex2_matrix()).unwrap();
        assert!((l - (3.0 - 5.0_f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((EX2_SHIFT * l - 0.0764).abs() < 5e-4);
    }

    #[test]
    fn ex1_classification() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let v = classify_monotonicity(&p, &SamplingBox::for_problem(&p), 2000, 1).unwrap();
        assert!(!v.class_flags.pseudomonotone);
        assert!(!v.class_flags.monotone);
        assert!(v.class_flags.h_pseudomonotone);
        assert!(v.class_flags.h_strongly_pseudomonotone);
        let w = v
            .witnesses_for(MonotonicityClass::Pseudomonotone)
            .find(|w| w.u == vec![3.0] && w.v == vec![5.0])
            .expect("probe witness");
        assert_eq!(w.antecedent, Some(2.0));
        assert_eq!(w.value, -2.0);
        let mu = v.mu_estimate.unwrap();
        assert!((mu - 3.5).abs() < 1e-12, "{mu}");
    }

    #[test]
    fn ex2_classification() {
        let p = build_example(Example::Ex2, 0).unwrap();
        let v = classify_monotonicity(&p, &SamplingBox::for_problem(&p), 5000, 2).unwrap();
        assert!(!v.class_flags.monotone);
        let w = v
            .witnesses_for(MonotonicityClass::Monotone)
            .find(|w| w.u == vec![-1.0, 0.0, 0.0] && w.v == vec![-2.0, 0.0, 0.0])
            .expect("probe witness");
        assert!((w.value + 0.1312).abs() < 1e-3);
        assert!(v.class_flags.h_pseudomonotone);
        let mu = v.mu_estimate.unwrap();
        assert!(mu >= 0.0764 * 0.9, "{mu}");
        assert!(mu <= lipschitz_upper_bound(&p.operator));
    }

    #[test]
    fn witnesses_reevaluate_as_violations() {
        for ex in [Example::Ex1, Example::Ex2, Example::Ex3] {
            let p = build_example(ex, 4).unwrap();
            let v = classify_monotonicity(&p, &SamplingBox::for_problem(&p), 1000, 9).unwrap();
            for w in &v.witnesses {
                let t = pair_terms(&p, &w.u, &w.v).unwrap();
                let value = match w.class {
                    MonotonicityClass::Monotone => t.monotone,
                    MonotonicityClass::Pseudomonotone => t.tv,
                    _ => t.tv + t.dh,
                };
                assert!((value - w.value).abs() <= 1e-9);
                assert!(value < 0.0);
            }
        }
    }

    #[test]
    fn verdicts_stable_under_more_samples() {
        let p = build_example(Example::Ex2, 0).unwrap();
        let b = SamplingBox::for_problem(&p);
        let small = classify_monotonicity(&p, &b, 300, 5).unwrap();
        let large = classify_monotonicity(&p, &b, 3000, 5).unwrap();
        let flags = |v: &MonotonicityVerdict| {
            [
                v.class_flags.monotone,
                v.class_flags.pseudomonotone,
                v.class_flags.h_pseudomonotone,
            ]
        };
        for (s, l) in flags(&small).iter().zip(flags(&large)) {
            assert!(*s || !l, "a falsified class came back");
        }
        if let (Some(a), Some(b)) = (small.mu_estimate, large.mu_estimate) {
            assert!(b <= a);
        }
    }

    #[test]
    fn zero_operator_classification() {
        let p = MviProblem::new(
            "zero",
            OperatorSpec::Affine {
                matrix: Matrix::zeros(2, 2),
                offset: vec![0.0, 0.0],
            },
            ProxSpec::Zero,
        )
        .unwrap();
        let v = classify_monotonicity(&p, &SamplingBox::for_problem(&p), 500, 0).unwrap();
        assert!(v.class_flags.monotone && v.class_flags.pseudomonotone && v.class_flags.h_pseudomonotone);
        assert!(!v.class_flags.h_strongly_pseudomonotone);
        assert!(v.mu_estimate.is_none());
        assert!(v.witnesses.is_empty());
    }

    #[test]
    fn low_hit_rate_is_an_error() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let r = classify_monotonicity(&p, &SamplingBox::cube(1, -100.0, 100.0), 500, 0);
        assert!(matches!(r, Err(Error::Sampling(_))));
    }

    #[test]
    fn certificate_values() {
        let c = make_certificate(1.0, 3.5, 0.25).unwrap();
        // independent evaluation: 2·0.5·(0.875/2.125)²
        let expected = 2.0 * 0.5 * (0.875_f64 / 2.125).powi(2);
        assert!((c.alpha - expected).abs() < 1e-15);
        assert!((c.alpha - 0.16955).abs() < 1e-5);
        assert!(c.lambda_valid);

        let beta = 5.0679;
        let b = make_certificate(beta, 0.0764, 1.0 / (1.0 + beta * beta)).unwrap();
        assert!(!b.lambda_valid);
        assert_eq!(b.alpha, 0.0);

        let lambda = 0.99 / (1.0 + beta * beta);
        let c2 = make_certificate(beta, 0.0764, lambda).unwrap();
        let gap = 1.0 - lambda - lambda * beta * beta;
        let r = lambda * 0.0764 / (1.0 + lambda * 0.0764 + lambda * beta);
        assert!((c2.alpha - 2.0 * gap * r * r).abs() < 1e-12);
        assert!(c2.alpha > 0.0);

        assert!(make_certificate(0.0, 1.0, 0.1).is_err());
        assert!(make_certificate(1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn certificate_shape_in_lambda_and_mu() {
        let beta = 2.0;
        let top = 1.0 / (1.0 + beta * beta);
        let grid: Vec<f64> = (1..200).map(|k| top * k as f64 / 200.0).collect();
        let alphas: Vec<f64> = grid.iter().map(|&l| make_certificate(beta, 0.5, l).unwrap().alpha).collect();
        let (imax, _) = alphas
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &a)| if a > acc.1 { (i, a) } else { acc });
        assert!(imax > 0 && imax < alphas.len() - 1, "interior maximum");
        assert!(alphas[0] < alphas[imax] * 0.01 + 1e-3);
        assert!(*alphas.last().unwrap() < alphas[imax]);
        let mut prev = 0.0;
        for mu in [0.1, 0.2, 0.5, 1.0, 3.0] {
            let a = make_certificate(beta, mu, 0.1).unwrap().alpha;
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn decay_on_ex1() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let rec = integrate(&p, &FlowSpec::fbf(0.25, 0.001, 20.0, vec![0.1]), 1e-8).unwrap();
        let cert = make_certificate(1.0, 3.5, 0.25).unwrap();
        let rep = verify_decay(&rec, &cert).unwrap();
        assert!(rep.holds());
        assert!(rep.fitted_rate.unwrap() >= 0.169);
        assert!(rep.rate_at_least_alpha());
    }

    #[test]
    fn decay_constant_trajectory_holds() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let rec = integrate(&p, &FlowSpec::fbf(0.25, 0.01, 1.0, vec![3.0]), 0.0).unwrap();
        let rep = verify_decay(&rec, &make_certificate(1.0, 3.5, 0.25).unwrap()).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.fitted_rate, None);
    }

    #[test]
    fn decay_detects_injected_increase() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let mut rec = integrate(&p, &FlowSpec::fbf(0.25, 0.01, 5.0, vec![0.1]), 0.0).unwrap();
        let l = rec.lyapunov.as_mut().unwrap();
        l[137] = l[0] * 2.0;
        let rep = verify_decay(&rec, &make_certificate(1.0, 3.5, 0.25).unwrap()).unwrap();
        match rep.outcome {
            DecayOutcome::Violated { step, excess } => {
                assert_eq!(step, 137);
                assert!(excess > 0.0);
            }
            DecayOutcome::Holds => panic!("missed violation"),
        }
    }

    #[test]
    fn decay_needs_lyapunov_and_valid_lambda() {
        let p = build_example(Example::Ex3, 0).unwrap();
        let rec = integrate(
            &p,
            &FlowSpec::fbf(0.01, 0.1, 1.0, Example::Ex3.default_start(0)),
            0.0,
        )
        .unwrap();
        let cert = make_certificate(1.0, 1.0, 0.1).unwrap();
        assert!(matches!(verify_decay(&rec, &cert), Err(Error::MissingData(_))));
        let p1 = build_example(Example::Ex1, 0).unwrap();
        let rec = integrate(&p1, &FlowSpec::fbf(0.25, 0.01, 1.0, vec![0.1]), 0.0).unwrap();
        let bad = make_certificate(1.0, 3.5, 0.6).unwrap();
        assert!(verify_decay(&rec, &bad).is_err());
    }

    #[test]
    fn trajectory_inequalities_ex1() {
        let p = build_example(Example::Ex1, 0).unwrap();
        for frac in [0.99, 0.8, 0.5] {
            let lambda = frac / 2.0;
            let rec = integrate(&p, &FlowSpec::fbf(lambda, 0.01, 20.0, vec![0.1]), 1e-8).unwrap();
            let checks = verify_trajectory_inequalities(&p, &rec, lambda, 1.0).unwrap();
            assert!(checks.all_hold(), "{checks:?}");
            assert!(checks.lyapunov.is_some() && checks.residual_integral.is_some());
        }
    }

    #[test]
    fn invalid_lambda_is_reported_not_asserted() {
        let p = build_example(Example::Ex1, 0).unwrap();
        let lambda = 0.9;
        let rec = integrate(
            &p,
            &FlowSpec::fbf(lambda, 0.01, 5.0, vec![0.1]).allow_invalid_lambda(),
            1e-8,
        )
        .unwrap();
        assert!(matches!(rec.stop_reason, StopReason::Tolerance | StopReason::Horizon));
        let checks = verify_trajectory_inequalities(&p, &rec, lambda, 1.0).unwrap();
        assert!(checks.lyapunov.is_some());
        assert!(checks.residual_integral.is_none());
    }

    #[test]
    fn selection_beta_uses_smaller_bound() {
        let p = build_example(Example::Ex2, 0).unwrap();
        let b = selection_beta(&p);
        assert!(b <= 5.0679 && b > 5.0678);
        let p1 = build_example(Example::Ex1, 0).unwrap();
        assert_eq!(selection_beta(&p1), 1.0);
        assert!((lambda_from_fraction(&p1, 0.99).unwrap() - 0.495).abs() < 1e-15);
    }
}

//! Problem data for mixed variational inequalities: find `x̄ ∈ dom h` with
//! `⟨T x̄, u − x̄⟩ + h(u) − h(x̄) ≥ 0` for every `u`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist, dot, norm_sq, Matrix};
use crate::prox::ProxSpec;

/// The single-valued operator `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    /// `T(x) = A x + b`.
    Affine { matrix: Matrix, offset: Vec<f64> },
    /// `T(x) = (exp(−‖x‖²) + q)·M x`.
    ScaledMatrixGaussian { matrix: Matrix, shift: f64 },
    /// Gradient of `Σᵢ log(1 + exp(−aᵢ⟨bᵢ, x⟩))`; `features` holds one `bᵢ`
    /// per row.
    LogisticGradient { labels: Vec<f64>, features: Matrix },
}

impl OperatorSpec {
    pub fn dim(&self) -> usize {
        match self {
            OperatorSpec::Affine { matrix, .. } | OperatorSpec::ScaledMatrixGaussian { matrix, .. } => {
                matrix.cols()
            }
            OperatorSpec::LogisticGradient { features, .. } => features.cols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OperatorSpec::Affine { matrix, offset } => {
                if !matrix.is_square() {
                    return Err(Error::InvalidArgument("affine matrix must be square".into()));
                }
                check_dim(matrix.rows(), offset)?;
                if !matrix.is_finite() || !offset.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidArgument("affine data not finite".into()));
                }
            }
            OperatorSpec::ScaledMatrixGaussian { matrix, shift } => {
                if !matrix.is_square() || !matrix.is_finite() {
                    return Err(Error::InvalidArgument(
                        "matrix must be square and finite".into(),
                    ));
                }
                if !(*shift > 0.0 && shift.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "shift q must be positive, got {shift}"
                    )));
                }
            }
            OperatorSpec::LogisticGradient { labels, features } => {
                if labels.len() != features.rows() {
                    return Err(Error::DimensionMismatch {
                        expected: features.rows(),
                        got: labels.len(),
                    });
                }
                if labels.iter().any(|&a| a != 1.0 && a != -1.0) {
                    return Err(Error::InvalidArgument("labels must be ±1".into()));
                }
                if !features.is_finite() {
                    return Err(Error::InvalidArgument("features not finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        Ok(match self {
            OperatorSpec::Affine { matrix, offset } => {
                let mut out = matrix.mul_vec(x);
                out.iter_mut().zip(offset).for_each(|(o, b)| *o += b);
                out
            }
            OperatorSpec::ScaledMatrixGaussian { matrix, shift } => {
                let scale = (-norm_sq(x)).exp() + shift;
                matrix.mul_vec(x).into_iter().map(|v| scale * v).collect()
            }
            OperatorSpec::LogisticGradient { labels, features } => {
                let mut grad = vec![0.0; x.len()];
                for (i, &a) in labels.iter().enumerate() {
                    let b = features.row(i);
                    let w = -a * sigmoid(-a * dot(b, x));
                    grad.iter_mut().zip(b).for_each(|(g, bj)| *g += w * bj);
                }
                grad
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatorSpec::Affine { .. } => "affine",
            OperatorSpec::ScaledMatrixGaussian { .. } => "scaled_matrix_gaussian",
            OperatorSpec::LogisticGradient { .. } => "logistic_gradient",
        }
    }
}

/// Logistic sigmoid without overflow for large |t|.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MviProblem {
    pub id: String,
    pub dim: usize,
    pub operator: OperatorSpec,
    pub prox: ProxSpec,
    pub known_solution: Option<Vec<f64>>,
    /// Lipschitz modulus of `T`, when known.
    pub lipschitz_beta: Option<f64>,
    /// Modulus of h-strong pseudomonotonicity, when known.
    pub strong_pseudo_mu: Option<f64>,
    /// Points the monotonicity classifier always checks pairwise, in
    /// addition to random samples.
    #[serde(default)]
    pub probe_points: Vec<Vec<f64>>,
}

impl MviProblem {
    pub fn new(id: impl Into<String>, operator: OperatorSpec, prox: ProxSpec) -> Result<Self> {
        let problem = Self {
            id: id.into(),
            dim: operator.dim(),
            operator,
            prox,
            known_solution: None,
            lipschitz_beta: None,
            strong_pseudo_mu: None,
            probe_points: Vec::new(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_known_solution(mut self, x: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, &x)?;
        self.known_solution = Some(x);
        Ok(self)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        positive("lipschitz_beta", beta)?;
        self.lipschitz_beta = Some(beta);
        Ok(self)
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        positive("strong_pseudo_mu", mu)?;
        self.strong_pseudo_mu = Some(mu);
        Ok(self)
    }

    pub fn with_probe_points(mut self, points: Vec<Vec<f64>>) -> Result<Self> {
        for p in &points {
            check_dim(self.dim, p)?;
        }
        self.probe_points = points;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if self.operator.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.operator.dim(),
            });
        }
        self.operator.validate()?;
        self.prox.validate(self.dim)?;
        if let Some(x) = &self.known_solution {
            check_dim(self.dim, x)?;
        }
        if let Some(b) = self.lipschitz_beta {
            positive("lipschitz_beta", b)?;
        }
        if let Some(m) = self.strong_pseudo_mu {
            positive("strong_pseudo_mu", m)?;
        }
        Ok(())
    }

    pub fn eval_operator(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.operator.eval(x)
    }

    /// `prox_{λh}(x − λT(x))`, the forward-backward point.
    pub fn forward_backward(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let tx = self.operator.eval(x)?;
        let z: Vec<f64> = x.iter().zip(&tx).map(|(xi, ti)| xi - lambda * ti).collect();
        self.prox.prox(&z, lambda)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionResidual {
    /// `‖x − prox_{λh}(x − λT(x))‖`
    pub natural_residual: f64,
    pub lambda_used: f64,
}

/// Natural residual of `x`; zero exactly at MVI solutions.
pub fn fbf_residual(problem: &MviProblem, x: &[f64], lambda: f64) -> Result<SolutionResidual> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let y = problem.forward_backward(x, lambda)?;
    Ok(SolutionResidual {
        natural_residual: dist(x, &y),
        lambda_used: lambda,
    })
}

/// The three built-in test problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    /// `T(u) = 4 − u`, `h(u) = u²` on `[3, 5]`; unique solution 3.
    Ex1,
    /// Non-monotone `T(x) = (e^{−‖x‖²} + 0.2)Mx` over `[−5,5]³ ∩ {Σx = 0}`.
    Ex2,
    /// l1-regularised logistic regression on 100 seeded samples in ℝ³.
    Ex3,
}

pub const EX2_SHIFT: f64 = 0.2;
/// Lipschitz modulus reported for ex2 (an upper bound: `‖M‖(1 + q + 2/e)`).
pub const EX2_BETA: f64 = 5.0679;
/// `q·λ_min(M)`.
pub const EX2_MU: f64 = 0.0764;
pub const EX3_SAMPLES: usize = 100;
pub const EX3_DIM: usize = 3;
pub const EX3_ETA: f64 = 2.5;
pub const EX3_LAMBDA: f64 = 0.01;

pub fn ex2_matrix() -> Matrix {
    Matrix::from_rows(&[
        vec![1.0, 0.0, -1.0],
        vec![0.0, 1.5, 0.0],
        vec![-1.0, 0.0, 2.0],
    ])
    .expect("static matrix")
}

impl Example {
    pub const ALL: [Example; 3] = [Example::Ex1, Example::Ex2, Example::Ex3];

    pub fn as_str(self) -> &'static str {
        match self {
            Example::Ex1 => "ex1",
            Example::Ex2 => "ex2",
            Example::Ex3 => "ex3",
        }
    }

    /// Starting point used by the reference runs. Only ex3 depends on the
    /// seed (uniform on `[−1, 1]³`).
    pub fn default_start(self, seed: u64) -> Vec<f64> {
        match self {
            Example::Ex1 => vec![0.1],
            Example::Ex2 => vec![-4.0, 3.0, 5.0],
            Example::Ex3 => {
                // Separate stream from the data so the start does not shift
                // the sample.
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5747);
                (0..EX3_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect()
            }
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ex1" | "1" => Ok(Example::Ex1),
            "ex2" | "2" => Ok(Example::Ex2),
            "ex3" | "3" => Ok(Example::Ex3),
            other => Err(Error::InvalidArgument(format!("unknown example id `{other}`"))),
        }
    }
}

pub fn build_example(which: Example, seed: u64) -> Result<MviProblem> {
    match which {
        Example::Ex1 => MviProblem::new(
            "ex1",
            OperatorSpec::Affine {
                matrix: Matrix::scalar(-1.0),
                offset: vec![4.0],
            },
            ProxSpec::QuadraticOnInterval { lo: 3.0, hi: 5.0 },
        )?
        .with_known_solution(vec![3.0])?
        .with_beta(1.0)?
        .with_probe_points(vec![vec![3.0], vec![5.0]]),
        Example::Ex2 => MviProblem::new(
            "ex2",
            OperatorSpec::ScaledMatrixGaussian {
                matrix: ex2_matrix(),
                shift: EX2_SHIFT,
            },
            ProxSpec::IndicatorBoxHyperplane {
                lo: -5.0,
                hi: 5.0,
                target_sum: 0.0,
            },
        )?
        .with_known_solution(vec![0.0; 3])?
        .with_beta(EX2_BETA)?
        .with_mu(EX2_MU)?
        .with_probe_points(vec![vec![-1.0, 0.0, 0.0], vec![-2.0, 0.0, 0.0]]),
        Example::Ex3 => build_logistic_example(seed, EX3_ETA),
    }
}

/// Seeded logistic data: features uniform on `[−1, 1]³`, labels uniform on
/// `{−1, +1}`, `h = η‖·‖₁`.
pub fn build_logistic_example(seed: u64, eta: f64) -> Result<MviProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(EX3_SAMPLES);
    let mut labels = Vec::with_capacity(EX3_SAMPLES);
    for _ in 0..EX3_SAMPLES {
        rows.push((0..EX3_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect::<Vec<f64>>());
        labels.push(if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
    }
    MviProblem::new(
        "ex3",
        OperatorSpec::LogisticGradient {
            labels,
            features: Matrix::from_rows(&rows)?,
        },
        ProxSpec::ScaledL1 { eta },
    )
}

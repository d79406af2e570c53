//! Rényi privacy loss of the additive Gaussian mechanism.
//!
//! All losses are in nats.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::gp::{self, Partition};
use crate::kernel::{identity_covariance, CovarianceMatrix, KernelSummary};
use crate::{CipError, Result};

/// `(epsilon, r, lambda)`: loss bound, per-point radius and Rényi order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub r: f64,
    pub lambda: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, r: f64, lambda: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CipError::param("epsilon", format!("must be finite and > 0, got {epsilon}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(CipError::param("r", format!("must be finite and > 0, got {r}")));
        }
        check_lambda(lambda)?;
        Ok(PrivacyBudget { epsilon, r, lambda })
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(CipError::param("lambda", format!("Rényi order must be finite and > 1, got {lambda}")));
    }
    Ok(())
}

/// `ds = s_i - s_j` for the secret subsequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativePair {
    pub delta_s: Vec<f64>,
}

impl DiscriminativePair {
    pub fn new(delta_s: Vec<f64>) -> Self {
        DiscriminativePair { delta_s }
    }

    pub fn between(s_i: &[f64], s_j: &[f64]) -> Result<Self> {
        if s_i.len() != s_j.len() {
            return Err(CipError::DimensionMismatch {
                expected: s_i.len(),
                got: s_j.len(),
            });
        }
        Ok(DiscriminativePair {
            delta_s: s_i.iter().zip(s_j).map(|(a, b)| a - b).collect(),
        })
    }

    /// `|ds|_2^2 <= |S| r^2`.
    pub fn in_relaxed_ball(&self, r: f64) -> bool {
        let sq: f64 = self.delta_s.iter().map(|x| x * x).sum();
        sq <= self.delta_s.len() as f64 * r * r * (1.0 + 1e-12)
    }

    /// `|ds|_inf <= r`, the constraint the relaxed ball circumscribes.
    pub fn in_linf_ball(&self, r: f64) -> bool {
        self.delta_s.iter().all(|x| x.abs() <= r * (1.0 + 1e-12))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub schema_version: u32,
    /// `term_u + term_s`.
    pub loss_total: f64,
    /// `(lambda/2) ds^T Sigma_eff ds`, contributed by the unreleased-correlation block.
    pub term_u: f64,
    /// `(lambda/2) |ds|^2 / sigma_z2`, the prior-agnostic block.
    pub term_s: f64,
    pub alpha_star: f64,
    /// Worst-case pair, present for worst-case reports.
    pub delta_s_star: Option<Vec<f64>>,
    /// Whether `delta_s_star` also satisfies `|ds|_inf <= r`; when true the
    /// relaxed bound is attained inside the original constraint set.
    pub linf_feasible: Option<bool>,
    /// Whether the top eigenvalue is repeated (the worst-case direction is then
    /// one of many).
    pub maximizer_degenerate: Option<bool>,
    pub within_budget: Option<bool>,
    pub sigma_z2: f64,
    pub lambda: f64,
    pub r: Option<f64>,
    pub epsilon: Option<f64>,
    pub secret_len: usize,
    pub kernel: KernelSummary,
}

/// `(lambda/2) (mu_a - mu_b)^T Sigma^-1 (mu_a - mu_b)`, the order-`lambda` Rényi
/// divergence between two Gaussians sharing covariance `Sigma`.
pub fn gaussian_renyi_divergence(
    mu_a: &DVector<f64>,
    mu_b: &DVector<f64>,
    cov_shared: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    let n = mu_a.len();
    if mu_b.len() != n {
        return Err(CipError::DimensionMismatch {
            expected: n,
            got: mu_b.len(),
        });
    }
    if cov_shared.nrows() != n || cov_shared.ncols() != n {
        return Err(CipError::DimensionMismatch {
            expected: n,
            got: cov_shared.nrows(),
        });
    }
    let chol = Cholesky::new(cov_shared.clone())
        .ok_or_else(|| CipError::Singular("shared covariance is not positive definite".into()))?;
    let diff = mu_a - mu_b;
    let w = chol
        .l()
        .solve_lower_triangular(&diff)
        .ok_or_else(|| CipError::Singular("triangular solve failed".into()))?;
    Ok(0.5 * lambda * w.norm_squared())
}

/// Exact loss for one discriminative pair.
pub fn loss_for_pair(
    cov: &CovarianceMatrix,
    part: &Partition,
    sigma_z2: f64,
    pair: &DiscriminativePair,
    lambda: f64,
) -> Result<LossReport> {
    check_lambda(lambda)?;
    let eff = gp::effective_covariance(cov, part, sigma_z2)?;
    loss_with_effective(&eff, cov, part, pair, lambda)
}

/// [`loss_for_pair`] against a precomputed `Sigma_eff`, for sweeps over many pairs.
pub fn loss_with_effective(
    eff: &gp::EffectiveCovariance,
    cov: &CovarianceMatrix,
    part: &Partition,
    pair: &DiscriminativePair,
    lambda: f64,
) -> Result<LossReport> {
    check_lambda(lambda)?;
    let k = part.secret_len();
    if pair.delta_s.len() != k {
        return Err(CipError::DimensionMismatch {
            expected: k,
            got: pair.delta_s.len(),
        });
    }
    let ds = DVector::from_column_slice(&pair.delta_s);
    let quad = (ds.transpose() * &eff.sigma_eff * &ds)[(0, 0)].max(0.0);
    let term_u = 0.5 * lambda * quad;
    let term_s = 0.5 * lambda * ds.norm_squared() / eff.sigma_z2;
    Ok(LossReport {
        schema_version: crate::SCHEMA_VERSION,
        loss_total: term_u + term_s,
        term_u,
        term_s,
        alpha_star: eff.alpha_star,
        delta_s_star: None,
        linf_feasible: None,
        maximizer_degenerate: None,
        within_budget: None,
        sigma_z2: eff.sigma_z2,
        lambda,
        r: None,
        epsilon: None,
        secret_len: k,
        kernel: cov.kernel().clone(),
    })
}

/// The two blocks of the release divergence for concrete hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Divergence between the release distributions of the unreleased block `Z_u`.
    pub term_zu: f64,
    /// Sum of `per_point`.
    pub term_zs: f64,
    /// `lambda (x_i - x_j)^2 / (2 sigma_z2)` for each secret point.
    pub per_point: Vec<f64>,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.term_zu + self.term_zs
    }
}

/// Evaluates both blocks from the conditional means rather than from
/// `Sigma_eff`, so the sum is an independent route to [`loss_for_pair`].
pub fn loss_decomposition(
    cov: &CovarianceMatrix,
    part: &Partition,
    sigma_z2: f64,
    s_i: &[f64],
    s_j: &[f64],
    lambda: f64,
) -> Result<Decomposition> {
    check_lambda(lambda)?;
    gp::check_sigma_z2(sigma_z2)?;
    let k = part.secret_len();
    for s in [s_i, s_j] {
        if s.len() != k {
            return Err(CipError::DimensionMismatch {
                expected: k,
                got: s.len(),
            });
        }
    }
    let per_point: Vec<f64> = s_i
        .iter()
        .zip(s_j)
        .map(|(&a, &b)| {
            gaussian_renyi_divergence(
                &DVector::from_element(1, a),
                &DVector::from_element(1, b),
                &DMatrix::from_element(1, 1, sigma_z2),
                lambda,
            )
        })
        .collect::<Result<_>>()?;
    let term_zs = per_point.iter().sum();

    let term_zu = if part.remainder().is_empty() {
        0.0
    } else {
        let cg = gp::condition(cov, part)?;
        let mu_i = cg.mean(&DVector::from_column_slice(s_i));
        let mu_j = cg.mean(&DVector::from_column_slice(s_j));
        let n_u = cg.cond_cov.nrows();
        let release_cov = &cg.cond_cov + DMatrix::from_diagonal_element(n_u, n_u, sigma_z2);
        gaussian_renyi_divergence(&mu_i, &mu_j, &release_cov, lambda)?
    };
    Ok(Decomposition {
        term_zu,
        term_zs,
        per_point,
    })
}

/// Worst case over the relaxed ball `|ds|_2^2 <= |S| r^2`:
/// `(lambda/2) (1 + sigma_z2 alpha*) / sigma_z2 * |S| r^2`, attained at
/// `ds* = v* r sqrt(|S|)`.
pub fn worst_case_loss(
    cov: &CovarianceMatrix,
    part: &Partition,
    sigma_z2: f64,
    budget: &PrivacyBudget,
) -> Result<LossReport> {
    let eff = gp::effective_covariance(cov, part, sigma_z2)?;
    Ok(worst_case_from_effective(&eff, cov, part, budget))
}

pub fn worst_case_from_effective(
    eff: &gp::EffectiveCovariance,
    cov: &CovarianceMatrix,
    part: &Partition,
    budget: &PrivacyBudget,
) -> LossReport {
    let k = part.secret_len() as f64;
    let (lambda, r, sigma_z2) = (budget.lambda, budget.r, eff.sigma_z2);
    let ball = k * r * r;
    let loss_total = 0.5 * lambda * ((1.0 + sigma_z2 * eff.alpha_star) / sigma_z2) * ball;
    let term_u = 0.5 * lambda * eff.alpha_star * ball;
    let term_s = 0.5 * lambda * ball / sigma_z2;
    let delta_s_star: Vec<f64> = eff.v_star.iter().map(|v| v * r * k.sqrt()).collect();
    let linf_feasible = DiscriminativePair::new(delta_s_star.clone()).in_linf_ball(r);
    LossReport {
        schema_version: crate::SCHEMA_VERSION,
        loss_total,
        term_u,
        term_s,
        alpha_star: eff.alpha_star,
        delta_s_star: Some(delta_s_star),
        linf_feasible: Some(linf_feasible),
        maximizer_degenerate: Some(eff.top_is_degenerate()),
        within_budget: Some(loss_total <= budget.epsilon),
        sigma_z2,
        lambda,
        r: Some(r),
        epsilon: Some(budget.epsilon),
        secret_len: part.secret_len(),
        kernel: cov.kernel().clone(),
    }
}

/// Worst-case loss when every point is treated as independent.
pub fn gi_baseline_loss(
    d: usize,
    part: &Partition,
    sigma_z2: f64,
    budget: &PrivacyBudget,
) -> Result<LossReport> {
    worst_case_loss(&identity_covariance(d, 1.0)?, part, sigma_z2, budget)
}

//! Noise calibration and maximization over the prior class and subsequences.
//!
//! The worst-case loss is strictly decreasing in `sigma_z2` (both `1/sigma_z2`
//! and `alpha*` decrease), so the smallest feasible noise level is found by
//! bracketing and bisection. The bracket starts at `lambda |S| r^2 / (2 eps)`,
//! the requirement with `alpha* = 0`, which no correlated prior can undercut.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gp::{self, Partition};
use crate::kernel::{build_covariance, CovarianceMatrix, KernelSpec};
use crate::privacy::{worst_case_from_effective, PrivacyBudget};
use crate::{CipError, Result};

pub const MAX_BISECTION_STEPS: usize = 200;
pub const MAX_BRACKET_DOUBLINGS: usize = 200;
/// Bisection stops once the bracket is this narrow relative to its upper end.
/// Much tighter than the 1e-6 needed on the loss, so the returned value is
/// the smallest feasible one for any grid coarser than ~1e-9.
pub const SIGMA_REL_TOL: f64 = 1e-10;
pub const DEFAULT_AUDIT_CAP: usize = 16;
/// Relative slack before an interior length scale is reported as beating `l_max`.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub schema_version: u32,
    pub sigma_z2: f64,
    pub achieved_loss: f64,
    pub epsilon: f64,
    /// Bisection steps taken after bracketing.
    pub iterations: usize,
    pub l_used: f64,
    /// Present when calibrating against the per-point audit maximum.
    pub audited_subsequences: Option<usize>,
    /// Secret indices of the subsequence that binds the calibration.
    pub binding_subsequence: Vec<usize>,
}

/// `l -> Sigma(l)` for a fixed set of timestamps and kernel family.
pub fn class_builder<'a>(
    timestamps: &'a [f64],
    spec: &'a KernelSpec,
) -> impl Fn(f64) -> Result<CovarianceMatrix> + Sync + 'a {
    move |l| build_covariance(timestamps, &spec.with_length_scale(l)?)
}

/// Smallest `sigma_z2 >= lower` with `loss(sigma_z2) <= epsilon`, for `loss`
/// decreasing in `sigma_z2`. Returns `(sigma_z2, loss, bisection steps)`.
pub fn solve_decreasing<F>(loss: F, lower: f64, epsilon: f64) -> Result<(f64, f64, usize)>
where
    F: Fn(f64) -> Result<f64>,
{
    let at_lower = loss(lower)?;
    if at_lower <= epsilon {
        return Ok((lower, at_lower, 0));
    }
    let mut lo = lower;
    let mut hi = lower;
    let mut at_hi = at_lower;
    for _ in 0..MAX_BRACKET_DOUBLINGS {
        lo = hi;
        hi *= 2.0;
        at_hi = loss(hi)?;
        if at_hi <= epsilon {
            break;
        }
    }
    if at_hi > epsilon {
        return Err(CipError::NoConvergence(format!(
            "bracket failure: loss still {at_hi:e} > epsilon at sigma_z2 = {hi:e}"
        )));
    }
    let mut steps = 0;
    while hi - lo > SIGMA_REL_TOL * hi {
        if steps == MAX_BISECTION_STEPS {
            return Err(CipError::NoConvergence(format!(
                "bisection did not converge in {MAX_BISECTION_STEPS} steps (bracket [{lo:e}, {hi:e}])"
            )));
        }
        let mid = 0.5 * (lo + hi);
        let at_mid = loss(mid)?;
        if at_mid <= epsilon {
            hi = mid;
            at_hi = at_mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok((hi, at_hi, steps))
}

/// Calibrates against one designated subsequence at the class's most
/// correlated member, `l = l_max`.
pub fn calibrate_sigma<F>(
    cov_builder: F,
    part: &Partition,
    budget: &PrivacyBudget,
    l_max: f64,
) -> Result<CalibrationResult>
where
    F: Fn(f64) -> Result<CovarianceMatrix>,
{
    let cov = cov_builder(l_max)?;
    let lower = budget.lambda * part.secret_len() as f64 * budget.r * budget.r / (2.0 * budget.epsilon);
    let loss = |s: f64| -> Result<f64> {
        let eff = gp::effective_covariance(&cov, part, s)?;
        Ok(worst_case_from_effective(&eff, &cov, part, budget).loss_total)
    };
    let (sigma_z2, achieved_loss, iterations) = solve_decreasing(loss, lower, budget.epsilon)?;
    Ok(CalibrationResult {
        schema_version: crate::SCHEMA_VERSION,
        sigma_z2,
        achieved_loss,
        epsilon: budget.epsilon,
        iterations,
        l_used: l_max,
        audited_subsequences: None,
        binding_subsequence: part.secret().to_vec(),
    })
}

/// Calibrates so that every subsequence containing `point` meets the budget.
pub fn calibrate_sigma_for_point<F>(
    cov_builder: F,
    point: usize,
    budget: &PrivacyBudget,
    l_max: f64,
    options: &AuditOptions,
) -> Result<CalibrationResult>
where
    F: Fn(f64) -> Result<CovarianceMatrix>,
{
    let cov = cov_builder(l_max)?;
    // The full trace is always among the audited subsequences, and its loss is
    // at least lambda d r^2 / (2 sigma_z2).
    let d = cov.dim() as f64;
    let lower = budget.lambda * d * budget.r * budget.r / (2.0 * budget.epsilon);
    let loss = |s: f64| audit_point(&cov, point, s, budget, options).map(|a| a.max_loss);
    let (sigma_z2, achieved_loss, iterations) = solve_decreasing(loss, lower, budget.epsilon)?;
    let audit = audit_point(&cov, point, sigma_z2, budget, options)?;
    Ok(CalibrationResult {
        schema_version: crate::SCHEMA_VERSION,
        sigma_z2,
        achieved_loss,
        epsilon: budget.epsilon,
        iterations,
        l_used: l_max,
        audited_subsequences: Some(audit.evaluated),
        binding_subsequence: audit.worst_subsequence.secret().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSweep {
    pub schema_version: u32,
    pub l_worst: f64,
    pub loss: f64,
    /// `(l, L*)` in ascending `l`.
    pub grid: Vec<(f64, f64)>,
    /// Whether `L*` is nondecreasing along the grid (within [`DOMINANCE_TOL`]).
    pub monotone: bool,
    /// Length scales whose loss exceeds `L*(l_max)` by more than [`DOMINANCE_TOL`].
    pub dominance_violations: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `l_max / 2^(n-1), .., l_max / 2, l_max`.
pub fn geometric_grid(l_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| l_max / 2f64.powi((n - 1 - k) as i32)).collect()
}

/// Maximizes `L*` over a geometric grid of `l_grid_size` length scales ending at `l_max`.
pub fn max_loss_over_class<F>(
    cov_builder: F,
    part: &Partition,
    sigma_z2: f64,
    budget: &PrivacyBudget,
    l_max: f64,
    l_grid_size: usize,
) -> Result<ClassSweep>
where
    F: Fn(f64) -> Result<CovarianceMatrix>,
{
    if l_grid_size == 0 {
        return Err(CipError::param("l_grid_size", "must be at least 1"));
    }
    max_loss_over_grid(cov_builder, part, sigma_z2, budget, l_max, &geometric_grid(l_max, l_grid_size))
}

/// Maximizes `L*` over the given length scales plus `l_max`, and checks the
/// claim that the maximum sits at `l_max`.
pub fn max_loss_over_grid<F>(
    cov_builder: F,
    part: &Partition,
    sigma_z2: f64,
    budget: &PrivacyBudget,
    l_max: f64,
    l_grid: &[f64],
) -> Result<ClassSweep>
where
    F: Fn(f64) -> Result<CovarianceMatrix>,
{
    let mut ls: Vec<f64> = l_grid.to_vec();
    if let Some(&bad) = ls.iter().find(|&&l| !(l > 0.0 && l <= l_max)) {
        return Err(CipError::param("l_grid", format!("length scale {bad} outside (0, {l_max}]")));
    }
    ls.push(l_max);
    ls.sort_by(f64::total_cmp);
    ls.dedup();

    let grid = ls
        .iter()
        .map(|&l| {
            let cov = cov_builder(l)?;
            let eff = gp::effective_covariance(&cov, part, sigma_z2)?;
            Ok((l, worst_case_from_effective(&eff, &cov, part, budget).loss_total))
        })
        .collect::<Result<Vec<_>>>()?;

    let at_max = grid.last().map(|g| g.1).unwrap_or(f64::NAN);
    // ties go to the larger length scale
    let (l_worst, loss) = grid
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, g| if g.1 >= best.1 { g } else { best });
    let monotone = grid
        .windows(2)
        .all(|w| w[1].1 >= w[0].1 * (1.0 - DOMINANCE_TOL));
    let dominance_violations: Vec<f64> = grid
        .iter()
        .filter(|g| g.1 > at_max * (1.0 + DOMINANCE_TOL))
        .map(|g| g.0)
        .collect();
    let mut warnings = Vec::new();
    if !dominance_violations.is_empty() {
        warnings.push(format!(
            "L* at length scales {dominance_violations:?} exceeds L*(l_max = {l_max}) = {at_max}; \
             calibrating at l_max alone would under-protect"
        ));
    }
    if !monotone {
        warnings.push("L* is not nondecreasing in l along the grid".into());
    }
    Ok(ClassSweep {
        schema_version: crate::SCHEMA_VERSION,
        l_worst,
        loss,
        grid,
        monotone,
        dominance_violations,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditOptions {
    /// Largest trace length that will be enumerated.
    pub cap: usize,
    pub parallel: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            cap: DEFAULT_AUDIT_CAP,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub schema_version: u32,
    pub point: usize,
    pub max_loss: f64,
    pub worst_subsequence: Partition,
    /// Number of subsequences evaluated, `2^(d-1)`.
    pub evaluated: usize,
    pub within_budget: bool,
}

/// Higher loss wins; equal losses go to the lexicographically smaller index set.
fn better(a: (f64, Partition), b: (f64, Partition)) -> (f64, Partition) {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => a,
        Ordering::Less => b,
        Ordering::Equal => {
            if a.1.secret() <= b.1.secret() {
                a
            } else {
                b
            }
        }
    }
}

/// Worst-case loss over every subsequence that contains `point`.
///
/// The full trace is included; with no remaining points its loss is the
/// prior-agnostic term alone.
pub fn audit_point(
    cov: &CovarianceMatrix,
    point: usize,
    sigma_z2: f64,
    budget: &PrivacyBudget,
    options: &AuditOptions,
) -> Result<AuditResult> {
    let d = cov.dim();
    if d > options.cap || d > 63 {
        return Err(CipError::AuditCapExceeded { d, cap: options.cap.min(63) });
    }
    if point >= d {
        return Err(CipError::Domain(format!("point {point} out of range for a {d}-point trace")));
    }
    gp::check_sigma_z2(sigma_z2)?;

    let count = 1usize << (d - 1);
    // Spread the d-1 free bits around the fixed `point` bit.
    let low_mask = (1u64 << point) - 1;
    let mask_for = |k: usize| -> u64 {
        let k = k as u64;
        (k & low_mask) | (1 << point) | ((k & !low_mask) << 1)
    };
    let eval = |k: usize| -> Result<(f64, Partition)> {
        let part = Partition::from_mask(d, mask_for(k))?;
        let eff = gp::effective_covariance(cov, &part, sigma_z2)?;
        let loss = worst_case_from_effective(&eff, cov, &part, budget).loss_total;
        Ok((loss, part))
    };

    let losses: Vec<(f64, Partition)> = if options.parallel {
        (0..count).into_par_iter().map(eval).collect::<Result<_>>()?
    } else {
        (0..count).map(eval).collect::<Result<_>>()?
    };
    let (max_loss, worst) = losses
        .into_iter()
        .reduce(better)
        .expect("at least one subsequence");
    Ok(AuditResult {
        schema_version: crate::SCHEMA_VERSION,
        point,
        max_loss,
        worst_subsequence: worst,
        evaluated: count,
        within_budget: max_loss <= budget.epsilon,
    })
}

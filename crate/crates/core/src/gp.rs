//! Gaussian-process conditioning on a secret subsequence.
//!
//! With `Sigma` partitioned into secret (`s`) and remaining (`u`) blocks,
//!
//! ```text
//! mu_{u|s}    = A s,            A = Sigma_us Sigma_ss^-1
//! Sigma_{u|s} = Sigma_uu - A Sigma_su
//! Sigma_eff   = A^T (Sigma_{u|s} + sigma_z2 I)^-1 A
//! ```
//!
//! `Sigma_ss` is factored by Cholesky with bounded diagonal jitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::kernel::CovarianceMatrix;
use crate::{CipError, Result};

/// Relative jitter levels tried, in order, when `Sigma_ss` will not factor.
pub const JITTER_LEVELS: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Above this size the top eigenpair comes from power iteration instead of a
/// full decomposition.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// Index split of a trace into the secret subsequence `S` and the rest `U`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Partition {
    d: usize,
    secret: Vec<usize>,
    #[serde(skip)]
    remainder: Vec<usize>,
}

impl Partition {
    pub fn new(d: usize, mut secret: Vec<usize>) -> Result<Self> {
        if secret.is_empty() {
            return Err(CipError::Domain("secret subsequence must be nonempty".into()));
        }
        if let Some(&i) = secret.iter().find(|&&i| i >= d) {
            return Err(CipError::Domain(format!("index {i} out of range for a {d}-point trace")));
        }
        secret.sort_unstable();
        if secret.windows(2).any(|w| w[0] == w[1]) {
            return Err(CipError::Domain("secret indices contain duplicates".into()));
        }
        let remainder = (0..d).filter(|i| secret.binary_search(i).is_err()).collect();
        Ok(Partition {
            d,
            secret,
            remainder,
        })
    }

    /// `S = {0, 2, 4, ..}`.
    pub fn every_other(d: usize) -> Result<Self> {
        Partition::new(d, (0..d).step_by(2).collect())
    }

    /// `S = {0, .., ceil(d/2) - 1}`.
    pub fn first_half(d: usize) -> Result<Self> {
        Partition::new(d, (0..d.div_ceil(2)).collect())
    }

    /// Builds from a bitmask over `d` points (bit `i` set means `i` is secret).
    pub fn from_mask(d: usize, mask: u64) -> Result<Self> {
        Partition::new(d, (0..d).filter(|&i| mask >> i & 1 == 1).collect())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn secret(&self) -> &[usize] {
        &self.secret
    }

    pub fn remainder(&self) -> &[usize] {
        &self.remainder
    }

    pub fn secret_len(&self) -> usize {
        self.secret.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.secret.binary_search(&i).is_ok()
    }

    fn check_dim(&self, cov: &CovarianceMatrix) -> Result<()> {
        if cov.dim() != self.d {
            return Err(CipError::DimensionMismatch {
                expected: cov.dim(),
                got: self.d,
            });
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            d: usize,
            secret: Vec<usize>,
        }
        let raw = Raw::deserialize(de)?;
        Partition::new(raw.d, raw.secret).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factor of `m + delta * scale * I` for the smallest `delta` in
/// [`JITTER_LEVELS`] that succeeds. Returns the factor and the absolute jitter.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for delta in JITTER_LEVELS {
        let jitter = delta * scale;
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(a) {
            if ch.l_dirty().diagonal().iter().all(|&x| x > 0.0 && x.is_finite()) {
                return Ok((ch, jitter));
            }
        }
    }
    Err(CipError::Singular(format!(
        "{}x{} block did not factor even with jitter {:e} * {scale}",
        m.nrows(),
        m.ncols(),
        JITTER_LEVELS[JITTER_LEVELS.len() - 1]
    )))
}

/// `P(U | S = s) = N(A s, Sigma_{u|s})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    /// `A = Sigma_us Sigma_ss^-1`, shape `|U| x |S|`.
    pub mean_map: DMatrix<f64>,
    /// `Sigma_{u|s}`, shape `|U| x |U|`.
    pub cond_cov: DMatrix<f64>,
    /// Absolute diagonal jitter that was needed to factor `Sigma_ss`.
    pub jitter: f64,
}

impl ConditionalGaussian {
    pub fn mean(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.mean_map * s
    }
}

pub fn condition(cov: &CovarianceMatrix, part: &Partition) -> Result<ConditionalGaussian> {
    part.check_dim(cov)?;
    if part.remainder().is_empty() {
        return Err(CipError::Domain(
            "conditioning needs a nonempty remainder U".into(),
        ));
    }
    let m = cov.matrix();
    let (s, u) = (part.secret(), part.remainder());
    let sigma_ss = submatrix(m, s, s);
    let sigma_su = submatrix(m, s, u);
    let sigma_uu = submatrix(m, u, u);

    let (chol, jitter) = cholesky_with_jitter(&sigma_ss, cov.sigma_x2())?;
    // Sigma_ss^-1 Sigma_su, i.e. A^T
    let a_t = chol.solve(&sigma_su);
    let mut cond_cov = sigma_uu - sigma_su.transpose() * &a_t;
    symmetrize(&mut cond_cov);
    Ok(ConditionalGaussian {
        mean_map: a_t.transpose(),
        cond_cov,
        jitter,
    })
}

/// `Sigma_eff` with its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCovariance {
    pub sigma_eff: DMatrix<f64>,
    pub alpha_star: f64,
    pub v_star: DVector<f64>,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub sigma_z2: f64,
}

impl EffectiveCovariance {
    /// Whether the top eigenvalue is repeated, i.e. the worst-case direction
    /// is not unique.
    pub fn top_is_degenerate(&self) -> bool {
        self.eigenvalues
            .get(1)
            .is_some_and(|&second| self.alpha_star - second <= 1e-12 * self.alpha_star.max(1.0))
    }
}

pub(crate) fn check_sigma_z2(sigma_z2: f64) -> Result<()> {
    if !(sigma_z2 > 0.0 && sigma_z2.is_finite()) {
        return Err(CipError::param("sigma_z2", format!("must be finite and > 0, got {sigma_z2}")));
    }
    Ok(())
}

pub fn effective_covariance(
    cov: &CovarianceMatrix,
    part: &Partition,
    sigma_z2: f64,
) -> Result<EffectiveCovariance> {
    check_sigma_z2(sigma_z2)?;
    part.check_dim(cov)?;
    let k = part.secret_len();
    if part.remainder().is_empty() {
        let mut v_star = DVector::zeros(k);
        v_star[0] = 1.0;
        return Ok(EffectiveCovariance {
            sigma_eff: DMatrix::zeros(k, k),
            alpha_star: 0.0,
            v_star,
            eigenvalues: vec![0.0; k],
            sigma_z2,
        });
    }
    let cg = condition(cov, part)?;
    let sigma_eff = effective_from_conditional(&cg, sigma_z2)?;
    let (eigenvalues, v_star) = spectrum_with_top_vector(&sigma_eff)?;
    Ok(EffectiveCovariance {
        alpha_star: eigenvalues[0].max(0.0),
        v_star,
        eigenvalues,
        sigma_eff,
        sigma_z2,
    })
}

/// `A^T (Sigma_{u|s} + sigma_z2 I)^-1 A`, formed as `B^T B` with `B = L^-1 A`
/// so the result is PSD by construction.
pub fn effective_from_conditional(cg: &ConditionalGaussian, sigma_z2: f64) -> Result<DMatrix<f64>> {
    check_sigma_z2(sigma_z2)?;
    let n_u = cg.cond_cov.nrows();
    let mut noisy = cg.cond_cov.clone();
    for i in 0..n_u {
        noisy[(i, i)] += sigma_z2;
    }
    let chol = Cholesky::new(noisy).ok_or_else(|| {
        CipError::Singular("Sigma_{u|s} + sigma_z2 I is not positive definite".into())
    })?;
    let b = chol
        .l()
        .solve_lower_triangular(&cg.mean_map)
        .ok_or_else(|| CipError::Singular("triangular solve failed".into()))?;
    let mut eff = b.transpose() * b;
    symmetrize(&mut eff);
    Ok(eff)
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(CipError::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                return Err(CipError::Domain(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Flips `v` so its first nonzero component is positive.
fn fix_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|x| x.abs() > f64::EPSILON) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Descending eigenvalues and the unit top eigenvector.
fn spectrum_with_top_vector(m: &DMatrix<f64>) -> Result<(Vec<f64>, DVector<f64>)> {
    check_symmetric(m)?;
    let n = m.nrows();
    if n > DENSE_EIGEN_LIMIT {
        let (alpha, v) = power_iteration(m, 100_000, 1e-12)?;
        return Ok((vec![alpha], v));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * n.max(1)).ok_or_else(|| {
        CipError::NoConvergence(format!("symmetric eigensolver on a {n}x{n} matrix"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut v = eig.eigenvectors.column(order[0]).into_owned();
    v.normalize_mut();
    fix_sign(&mut v);
    Ok((values, v))
}

/// Largest eigenvalue and its unit eigenvector (first nonzero entry positive).
pub fn top_eigenpair(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let (values, v) = spectrum_with_top_vector(m)?;
    Ok((values[0], v))
}

/// Power iteration for the dominant eigenpair of a symmetric PSD matrix.
///
/// Used directly only for very large matrices; otherwise it serves as a
/// cross-check on [`top_eigenpair`].
pub fn power_iteration(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> Result<(f64, DVector<f64>)> {
    check_symmetric(m)?;
    let n = m.nrows();
    // deterministic start with no special alignment to coordinate axes
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.7548776662).fract());
    v.normalize_mut();
    let scale = m.amax();
    if scale == 0.0 {
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        return Ok((0.0, e));
    }
    for _ in 0..max_iter {
        let w = m * &v;
        let alpha = v.dot(&w);
        let resid = (&w - &v * alpha).norm();
        let norm = w.norm();
        if norm == 0.0 {
            return Ok((0.0, v));
        }
        if resid <= tol * scale {
            fix_sign(&mut v);
            return Ok((alpha, v));
        }
        v = w / norm;
    }
    Err(CipError::NoConvergence(format!(
        "power iteration did not reach tolerance {tol:e} in {max_iter} steps"
    )))
}

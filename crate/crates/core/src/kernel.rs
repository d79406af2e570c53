//! Covariance matrices over trace timestamps.
//!
//! A [`KernelSpec`] fixes one member of the prior class: variance `sigma_x2`,
//! length scale `l`, and the class bound `l_max >= l`. The class itself is the
//! set of specs with `l` ranging over `(0, l_max]`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{CipError, Result};

/// Correlation function `(t_i, t_j, length_scale) -> rho`, with `rho(t, t, l) = 1`.
pub type CorrelationFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum KernelFamily {
    Rbf,
    /// User-supplied stationary or non-stationary correlation. Must be
    /// positive definite; [`CovarianceMatrix::validate`] checks the result.
    Custom {
        name: String,
        correlation: Arc<CorrelationFn>,
    },
}

impl KernelFamily {
    pub fn name(&self) -> &str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Rbf => f.write_str("Rbf"),
            KernelFamily::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    sigma_x2: f64,
    length_scale: f64,
    l_max: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, sigma_x2: f64, length_scale: f64, l_max: f64) -> Result<Self> {
        if !(sigma_x2 > 0.0 && sigma_x2.is_finite()) {
            return Err(CipError::param("sigma_x2", format!("must be finite and > 0, got {sigma_x2}")));
        }
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(CipError::param(
                "length_scale",
                format!("must be finite and > 0, got {length_scale}"),
            ));
        }
        if !(l_max >= length_scale && l_max.is_finite()) {
            return Err(CipError::param(
                "l_max",
                format!("must be finite and >= length_scale ({length_scale}), got {l_max}"),
            ));
        }
        Ok(KernelSpec {
            family,
            sigma_x2,
            length_scale,
            l_max,
        })
    }

    pub fn rbf(sigma_x2: f64, length_scale: f64, l_max: f64) -> Result<Self> {
        KernelSpec::new(KernelFamily::Rbf, sigma_x2, length_scale, l_max)
    }

    /// The class member with the longest length scale, `l = l_max`.
    pub fn rbf_at_max(sigma_x2: f64, l_max: f64) -> Result<Self> {
        KernelSpec::rbf(sigma_x2, l_max, l_max)
    }

    /// Same family and class bound, different member `l`.
    pub fn with_length_scale(&self, length_scale: f64) -> Result<Self> {
        KernelSpec::new(self.family.clone(), self.sigma_x2, length_scale, self.l_max)
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn eval(&self, t_i: f64, t_j: f64) -> f64 {
        match &self.family {
            KernelFamily::Rbf => rbf_kernel(t_i, t_j, self),
            KernelFamily::Custom { correlation, .. } => {
                self.sigma_x2 * correlation(t_i, t_j, self.length_scale)
            }
        }
    }

    pub fn summary(&self) -> KernelSummary {
        KernelSummary {
            family: self.family.name().to_string(),
            sigma_x2: self.sigma_x2,
            length_scale: Some(self.length_scale),
            l_max: Some(self.l_max),
        }
    }
}

/// Serializable description of where a covariance matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub family: String,
    pub sigma_x2: f64,
    pub length_scale: Option<f64>,
    pub l_max: Option<f64>,
}

/// `sigma_x2 * exp(-(t_i - t_j)^2 / (2 l^2))`.
pub fn rbf_kernel(t_i: f64, t_j: f64, spec: &KernelSpec) -> f64 {
    let lag = t_i - t_j;
    let l = spec.length_scale;
    spec.sigma_x2 * (-(lag * lag) / (2.0 * l * l)).exp()
}

/// Prior covariance `Sigma` over a set of timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
    timestamps: Vec<f64>,
    sigma_x2: f64,
    kernel: KernelSummary,
}

impl CovarianceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    pub fn kernel(&self) -> &KernelSummary {
        &self.kernel
    }

    /// Checks the structural invariants: exact symmetry, diagonal equal to
    /// `sigma_x2`, and eigenvalues no lower than `-1e-8 * sigma_x2`.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for i in 0..d {
            if self.matrix[(i, i)] != self.sigma_x2 {
                return Err(CipError::Domain(format!(
                    "diagonal entry {i} is {} instead of sigma_x2 = {}",
                    self.matrix[(i, i)],
                    self.sigma_x2
                )));
            }
            for j in 0..i {
                if self.matrix[(i, j)] != self.matrix[(j, i)] {
                    return Err(CipError::Domain(format!("covariance not symmetric at ({i},{j})")));
                }
            }
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        let min = eig.eigenvalues.min();
        if min < -1e-8 * self.sigma_x2 {
            return Err(CipError::Domain(format!(
                "covariance is not positive semi-definite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(())
    }
}

fn check_timestamps(timestamps: &[f64]) -> Result<()> {
    if timestamps.len() < 2 {
        return Err(CipError::Domain(format!(
            "need at least 2 timestamps, got {}",
            timestamps.len()
        )));
    }
    if let Some(t) = timestamps.iter().find(|t| !t.is_finite()) {
        return Err(CipError::Domain(format!("non-finite timestamp {t}")));
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(CipError::Domain(format!(
            "timestamps must be strictly increasing (t[{i}]={}, t[{}]={})",
            timestamps[i],
            i + 1,
            timestamps[i + 1]
        )));
    }
    Ok(())
}

/// `Sigma_ij = k(t_i, t_j)`. Only the lower triangle is evaluated; the upper
/// triangle is mirrored so the result is exactly symmetric.
pub fn build_covariance(timestamps: &[f64], spec: &KernelSpec) -> Result<CovarianceMatrix> {
    check_timestamps(timestamps)?;
    let d = timestamps.len();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let diag = spec.eval(timestamps[i], timestamps[i]);
        if diag != spec.sigma_x2 {
            return Err(CipError::Domain(format!(
                "kernel `{}` gives k(t,t) = {diag} at t = {}, expected sigma_x2 = {}",
                spec.family.name(),
                timestamps[i],
                spec.sigma_x2
            )));
        }
        m[(i, i)] = diag;
        for j in 0..i {
            let k = spec.eval(timestamps[i], timestamps[j]);
            if !k.is_finite() {
                return Err(CipError::Domain(format!("kernel value at ({i},{j}) is {k}")));
            }
            m[(i, j)] = k;
            m[(j, i)] = k;
        }
    }
    Ok(CovarianceMatrix {
        matrix: m,
        timestamps: timestamps.to_vec(),
        sigma_x2: spec.sigma_x2,
        kernel: spec.summary(),
    })
}

/// `sigma_x2 * I`: every point independent, the prior-agnostic baseline.
pub fn identity_covariance(d: usize, sigma_x2: f64) -> Result<CovarianceMatrix> {
    if d < 2 {
        return Err(CipError::Domain(format!("need d >= 2, got {d}")));
    }
    if !(sigma_x2 > 0.0 && sigma_x2.is_finite()) {
        return Err(CipError::param("sigma_x2", format!("must be finite and > 0, got {sigma_x2}")));
    }
    Ok(CovarianceMatrix {
        matrix: DMatrix::from_diagonal_element(d, d, sigma_x2),
        timestamps: (0..d).map(|i| i as f64).collect(),
        sigma_x2,
        kernel: KernelSummary {
            family: "identity".into(),
            sigma_x2,
            length_scale: None,
            l_max: None,
        },
    })
}

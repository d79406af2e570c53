//! The additive Gaussian mechanism `Z = X + g`, `g ~ N(0, sigma_z2 I)`.
//!
//! Noise comes from ChaCha20 keyed by the seed, with one independent stream
//! per `stream_id`, turned into normals by Box-Muller. Output is a pure
//! function of `(values, sigma_z2, seed, stream_id)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::privacy::PrivacyBudget;
use crate::trace_io::{MechanismMeta, SanitizedTrace, Trace};
use crate::{gp, Result};

/// Recorded in release metadata; bump if the sampling algorithm changes.
pub const GENERATOR_ID: &str = "chacha20-box-muller/v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub sigma_z2: f64,
    pub seed: u64,
    /// Echoed into release metadata when the noise level was calibrated.
    pub budget: Option<PrivacyBudget>,
}

impl MechanismSpec {
    pub fn new(sigma_z2: f64, seed: u64) -> Result<Self> {
        gp::check_sigma_z2(sigma_z2)?;
        Ok(MechanismSpec {
            sigma_z2,
            seed,
            budget: None,
        })
    }

    pub fn with_budget(mut self, budget: PrivacyBudget) -> Self {
        self.budget = Some(budget);
        self
    }
}

/// Standard normal draws from one ChaCha20 stream.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        NormalStream { rng, spare: None }
    }

    /// Uniform on `(0, 1]` with 53 random bits.
    fn open_unit(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.open_unit();
        let u2 = self.open_unit();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * sin);
        radius * cos
    }

    pub fn fill_standard(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_standard();
        }
    }
}

/// `n` independent `N(0, sigma_z2)` draws from stream `stream_id` of `spec.seed`.
pub fn sample_noise_vector(n: usize, spec: &MechanismSpec, stream_id: u64) -> Vec<f64> {
    let sd = spec.sigma_z2.sqrt();
    let mut stream = NormalStream::new(spec.seed, stream_id);
    (0..n).map(|_| sd * stream.next_standard()).collect()
}

/// Releases `z_i = x_i + g_i` using stream 0 of the seed.
pub fn sanitize(trace: &Trace, spec: &MechanismSpec) -> Result<SanitizedTrace> {
    gp::check_sigma_z2(spec.sigma_z2)?;
    let noise = sample_noise_vector(trace.len(), spec, 0);
    let z: Vec<f64> = trace
        .points()
        .iter()
        .zip(&noise)
        .map(|(p, g)| p.x + g)
        .collect();
    let meta = MechanismMeta {
        sigma_z2: spec.sigma_z2,
        seed: spec.seed,
        epsilon: spec.budget.map(|b| b.epsilon),
        r: spec.budget.map(|b| b.r),
        lambda: spec.budget.map(|b| b.lambda),
        generator: GENERATOR_ID.to_string(),
    };
    SanitizedTrace::from_source(trace, &z, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn trace() -> Trace {
        Trace::from_columns(&[0.0, 1.0, 2.5, 4.0], &[1.0, -2.0, 0.5, 10.0]).unwrap()
    }

    #[test]
    fn rejects_nonpositive_variance() {
        assert!(MechanismSpec::new(0.0, 1).is_err());
        assert!(MechanismSpec::new(-1.0, 1).is_err());
        assert!(MechanismSpec::new(f64::NAN, 1).is_err());
    }

    #[test]
    fn vanishing_noise() {
        let tr = trace();
        let out = sanitize(&tr, &MechanismSpec::new(1e-12, 9).unwrap()).unwrap();
        for (p, q) in tr.points().iter().zip(&out.points) {
            assert_eq!(p.t, q.t);
            assert!((p.x - q.z).abs() <= 1e-5);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let tr = trace();
        let spec = MechanismSpec::new(2.0, 42).unwrap();
        let a = sanitize(&tr, &spec).unwrap();
        let b = sanitize(&tr, &spec).unwrap();
        assert_eq!(
            crate::trace_io::render_sanitized(&a, crate::trace_io::Format::Json).unwrap(),
            crate::trace_io::render_sanitized(&b, crate::trace_io::Format::Json).unwrap()
        );
        assert_eq!(a.meta.generator, GENERATOR_ID);
        let c = sanitize(&tr, &MechanismSpec::new(2.0, 43).unwrap()).unwrap();
        assert_ne!(a.values(), c.values());
        assert_eq!(sample_noise_vector(50, &spec, 3), sample_noise_vector(50, &spec, 3));
    }

    #[test]
    fn budget_is_echoed() {
        let budget = PrivacyBudget::new(1.0, 0.5, 2.0).unwrap();
        let spec = MechanismSpec::new(2.0, 1).unwrap().with_budget(budget);
        let out = sanitize(&trace(), &spec).unwrap();
        assert_eq!(out.meta.epsilon, Some(1.0));
        assert_eq!(out.meta.r, Some(0.5));
        assert_eq!(out.meta.lambda, Some(2.0));
    }

    #[test]
    fn per_point_moments_over_repetitions() {
        let tr = trace();
        let reps = 100_000;
        let d = tr.len();
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        for seed in 0..reps {
            let out = sanitize(&tr, &MechanismSpec::new(4.0, seed).unwrap()).unwrap();
            for (k, p) in out.points.iter().enumerate() {
                sum[k] += p.z;
                sum_sq[k] += p.z * p.z;
            }
        }
        let n = reps as f64;
        for (k, p) in tr.points().iter().enumerate() {
            let mean = sum[k] / n;
            let var = (sum_sq[k] - n * mean * mean) / (n - 1.0);
            assert!((mean - p.x).abs() <= 0.05, "point {k}: mean {mean}");
            assert!((3.9..=4.1).contains(&var), "point {k}: var {var}");
        }
    }

    #[test]
    fn streams_are_uncorrelated() {
        let spec = MechanismSpec::new(1.0, 2024).unwrap();
        let n = 1_000_000;
        let a = sample_noise_vector(n, &spec, 0);
        let b = sample_noise_vector(n, &spec, 1);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let rho = cov / (va * vb).sqrt();
        assert!(rho.abs() < 0.01, "rho = {rho}");
    }

    #[test]
    fn kolmogorov_smirnov_against_standard_normal() {
        let spec = MechanismSpec::new(9.0, 5).unwrap();
        let n = 100_000;
        let mut z: Vec<f64> = sample_noise_vector(n, &spec, 0).iter().map(|g| g / 3.0).collect();
        z.sort_by(f64::total_cmp);
        let phi = Normal::new(0.0, 1.0).unwrap();
        let d_stat = z
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = phi.cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic critical value at significance 0.001
        let critical = 1.9495 / (n as f64).sqrt();
        assert!(d_stat < critical, "D = {d_stat}, critical {critical}");
    }
}

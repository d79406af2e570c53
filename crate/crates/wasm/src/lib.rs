//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic and
//! are plain Rust, so they can be tested without a JS host.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cip::gp::{self, Partition};
use cip::kernel::{build_covariance, KernelSpec};
use cip::mechanism::{self, MechanismSpec};
use cip::privacy::{self, PrivacyBudget};
use cip::trace_io::{self, Format, Trace};

type Out = std::result::Result<String, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn partition(spec: &str, d: usize) -> std::result::Result<Partition, String> {
    match spec.trim() {
        "every-other" => Partition::every_other(d).map_err(err),
        "first-half" => Partition::first_half(d).map_err(err),
        list => {
            let idx = list
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad index `{s}` in partition")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Partition::new(d, idx).map_err(err)
        }
    }
}

// epsilon never enters the loss itself
fn budget(r: f64, lambda: f64) -> std::result::Result<PrivacyBudget, String> {
    PrivacyBudget::new(1.0, r, lambda).map_err(err)
}

#[derive(Serialize)]
struct CurvePoint {
    sigma_z2: f64,
    l_star: f64,
    l_star_gi: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct Curve {
    l: f64,
    points: Vec<CurvePoint>,
}

#[allow(clippy::too_many_arguments)]
pub fn loss_curve_json(
    d: usize,
    spacing: f64,
    partition_spec: &str,
    sigma_x2: f64,
    r: f64,
    lambda: f64,
    l_grid: &[f64],
    sigma_lo: f64,
    sigma_hi: f64,
    n_sigma: usize,
) -> Out {
    if !(sigma_lo > 0.0 && sigma_hi >= sigma_lo && n_sigma >= 2) {
        return Err("noise grid needs 0 < lo <= hi and at least 2 points".into());
    }
    let trace = Trace::synthetic(d, spacing).map_err(err)?;
    let part = partition(partition_spec, d)?;
    let budget = budget(r, lambda)?;
    let t = trace.timestamps();
    let step = (sigma_hi / sigma_lo).ln() / (n_sigma - 1) as f64;
    let sigmas: Vec<f64> = (0..n_sigma).map(|k| sigma_lo * (step * k as f64).exp()).collect();
    let mut curves = Vec::with_capacity(l_grid.len());
    for &l in l_grid {
        let cov = build_covariance(&t, &KernelSpec::rbf_at_max(sigma_x2, l).map_err(err)?).map_err(err)?;
        let points = sigmas
            .iter()
            .map(|&s| {
                let rbf = privacy::worst_case_loss(&cov, &part, s, &budget).map_err(err)?.loss_total;
                let gi = privacy::gi_baseline_loss(d, &part, s, &budget).map_err(err)?.loss_total;
                Ok(CurvePoint {
                    sigma_z2: s,
                    l_star: rbf,
                    l_star_gi: gi,
                    ratio: rbf / gi,
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        curves.push(Curve { l, points });
    }
    serde_json::to_string(&curves).map_err(err)
}

#[derive(Serialize)]
struct WorstPair {
    timestamps: Vec<f64>,
    secret: Vec<usize>,
    /// Worst-case secret perturbation, one entry per secret point.
    delta_s: Vec<f64>,
    /// Induced shift of the conditional mean of every point, in trace order.
    shift: Vec<f64>,
    alpha_star: f64,
    loss: f64,
    loss_gi: f64,
    linf_feasible: bool,
    degenerate: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn worst_pair_json(
    d: usize,
    spacing: f64,
    partition_spec: &str,
    sigma_x2: f64,
    l: f64,
    sigma_z2: f64,
    r: f64,
    lambda: f64,
) -> Out {
    let trace = Trace::synthetic(d, spacing).map_err(err)?;
    let part = partition(partition_spec, d)?;
    let budget = budget(r, lambda)?;
    let t = trace.timestamps();
    let cov = build_covariance(&t, &KernelSpec::rbf_at_max(sigma_x2, l).map_err(err)?).map_err(err)?;
    let report = privacy::worst_case_loss(&cov, &part, sigma_z2, &budget).map_err(err)?;
    let gi = privacy::gi_baseline_loss(d, &part, sigma_z2, &budget).map_err(err)?;
    let delta_s = report.delta_s_star.clone().unwrap_or_default();

    let mut shift = vec![0.0; d];
    for (k, &i) in part.secret().iter().enumerate() {
        shift[i] = delta_s[k];
    }
    if !part.remainder().is_empty() {
        let cg = gp::condition(&cov, &part).map_err(err)?;
        let du = cg.mean(&nalgebra::DVector::from_column_slice(&delta_s));
        for (k, &i) in part.remainder().iter().enumerate() {
            shift[i] = du[k];
        }
    }
    serde_json::to_string(&WorstPair {
        timestamps: t,
        secret: part.secret().to_vec(),
        delta_s,
        shift,
        alpha_star: report.alpha_star,
        loss: report.loss_total,
        loss_gi: gi.loss_total,
        linf_feasible: report.linf_feasible.unwrap_or(false),
        degenerate: report.maximizer_degenerate.unwrap_or(false),
    })
    .map_err(err)
}

/// Sanitizes a `t,x` CSV trace; returns the release as JSON.
pub fn sanitize_json(trace_csv: &str, sigma_z2: f64, seed: u64) -> Out {
    let trace = trace_io::parse_trace(trace_csv, Format::Csv).map_err(err)?;
    let spec = MechanismSpec::new(sigma_z2, seed).map_err(err)?;
    let released = mechanism::sanitize(&trace, &spec).map_err(err)?;
    trace_io::render_sanitized(&released, Format::Json).map_err(err)
}

fn js(out: Out) -> Result<String, JsError> {
    out.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn loss_curve(
    d: usize,
    spacing: f64,
    partition: &str,
    sigma_x2: f64,
    r: f64,
    lambda: f64,
    l_grid: Vec<f64>,
    sigma_lo: f64,
    sigma_hi: f64,
    n_sigma: usize,
) -> Result<String, JsError> {
    js(loss_curve_json(d, spacing, partition, sigma_x2, r, lambda, &l_grid, sigma_lo, sigma_hi, n_sigma))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn worst_pair(
    d: usize,
    spacing: f64,
    partition: &str,
    sigma_x2: f64,
    l: f64,
    sigma_z2: f64,
    r: f64,
    lambda: f64,
) -> Result<String, JsError> {
    js(worst_pair_json(d, spacing, partition, sigma_x2, l, sigma_z2, r, lambda))
}

/// `seed` arrives as a JS number and is truncated to an integer.
#[wasm_bindgen]
pub fn sanitize(trace_csv: &str, sigma_z2: f64, seed: f64) -> Result<String, JsError> {
    if !(seed >= 0.0 && seed.is_finite()) {
        return Err(JsError::new("seed must be a non-negative number"));
    }
    js(sanitize_json(trace_csv, sigma_z2, seed as u64))
}

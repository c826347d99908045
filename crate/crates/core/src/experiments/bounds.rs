//! Closed-form probability bounds evaluated with computed multiplier norms.

use serde::Serialize;

use super::config::{BoundParams, BoundsConfig};
use super::stats::least_squares_slope;
use crate::error::Result;
use crate::lattice::{enumerate_basis, LatticeSpec};
use crate::perturb::{build_multiplier, operator_norms, CutoffSpec, OperatorNorms};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundEvaluation {
    pub alpha: f64,
    pub delta: f64,
    /// `(C₀‖S₁‖‖S₁‖_Tr‖S₂‖²_HS − αδ^{-2}) / (2‖S₁‖^{3/2}‖S₂‖)`.
    pub exponent: f64,
    /// `max(1 − C₀e^{exponent}, 0)`.
    pub bound: f64,
    /// Largest `δ` for which the bound is positive (`+∞` if every `δ` works).
    pub delta_threshold: f64,
}

pub fn evaluate_bounds(params: &BoundParams, s1: &OperatorNorms, s2: &OperatorNorms, alpha: f64, delta: f64) -> BoundEvaluation {
    let mass = params.c0 * s1.op * s1.trace * s2.hs.powi(2);
    let denom = 2.0 * s1.op.powf(1.5) * s2.op;
    let exponent = (mass - alpha / (delta * delta)) / denom;
    let bound = (1.0 - params.c0 * exponent.exp()).max(0.0);
    // 1 − C₀e^E > 0  ⇔  αδ^{-2} > C₀X + D ln C₀
    let needed = mass + denom * params.c0.ln();
    let delta_threshold = if needed > 0.0 { (alpha / needed).sqrt() } else { f64::INFINITY };
    BoundEvaluation {
        alpha,
        delta,
        exponent,
        bound,
        delta_threshold,
    }
}

/// `1 − C₁ exp(−C₂/h^{2κ})`, floored at 0.
pub fn scaled_bound(params: &BoundParams, h: f64) -> f64 {
    (1.0 - params.c1 * (-params.c2 / h.powf(2.0 * params.kappa)).exp()).max(0.0)
}

/// Box half-width whose modes cover `h|k| < radius`.
fn covering_half_width(radius: f64, h: f64) -> i64 {
    (2.0 * radius / h).ceil() as i64 + 1
}

pub fn multiplier_norms(spec: &LatticeSpec, cutoff: &CutoffSpec, h: f64) -> Result<OperatorNorms> {
    let basis = enumerate_basis(spec, covering_half_width(cutoff.support_radius, h))?;
    Ok(operator_norms(&build_multiplier(spec, cutoff, &basis, h)))
}

#[derive(Clone, Debug, Serialize)]
pub struct NormScaling {
    pub h: Vec<f64>,
    pub trace: Vec<f64>,
    pub hs_squared: Vec<f64>,
    pub trace_slope: f64,
    pub hs_squared_slope: f64,
}

/// Log–log slopes of `‖S‖_Tr` and `‖S‖²_HS` against `h` at a fixed cutoff.
pub fn norm_scaling(cutoff: &CutoffSpec, hs: &[f64]) -> Result<NormScaling> {
    let spec = LatticeSpec::new();
    let norms = hs.iter().map(|h| multiplier_norms(&spec, cutoff, *h)).collect::<Result<Vec<_>>>()?;
    let trace: Vec<f64> = norms.iter().map(|n| n.trace).collect();
    let hs_squared: Vec<f64> = norms.iter().map(|n| n.hs.powi(2)).collect();
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let slope = |ys: &[f64]| least_squares_slope(&lx, &ys.iter().map(|y| y.ln()).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    Ok(NormScaling {
        h: hs.to_vec(),
        trace_slope: slope(&trace),
        hs_squared_slope: slope(&hs_squared),
        trace,
        hs_squared,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentScaling {
    pub kappa: f64,
    pub h: Vec<f64>,
    pub exponent: Vec<f64>,
    /// Slope of `ln(−exponent)` against `ln h`; `−2κ` in the stated regime.
    pub slope: f64,
}

/// Exponent of the general bound with `S₁ = S₂ = χ(h|k|)` and `δ = h^κ`.
pub fn exponent_scaling(params: &BoundParams, cutoff: &CutoffSpec, hs: &[f64]) -> Result<ExponentScaling> {
    let spec = LatticeSpec::new();
    let exponent = hs
        .iter()
        .map(|h| {
            let n = multiplier_norms(&spec, cutoff, *h)?;
            Ok(evaluate_bounds(params, &n, &n, params.alpha, h.powf(params.kappa)).exponent)
        })
        .collect::<Result<Vec<f64>>>()?;
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = exponent.iter().map(|e| (-e).ln()).collect();
    Ok(ExponentScaling {
        kappa: params.kappa,
        h: hs.to_vec(),
        slope: least_squares_slope(&lx, &ly).unwrap_or(f64::NAN),
        exponent,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub params: BoundParams,
    pub cutoff: CutoffSpec,
    pub points: Vec<(f64, BoundEvaluation, f64)>,
    pub norm_scaling: NormScaling,
    pub exponent_scaling: ExponentScaling,
}

pub fn run_bounds(config: &BoundsConfig) -> Result<BoundsReport> {
    let params = config.params();
    let cutoff = CutoffSpec::new(config.cutoff.plateau_radius, config.cutoff.support_radius, config.cutoff.profile)?;
    let spec = LatticeSpec::new();
    let points = config
        .points
        .iter()
        .map(|(h, delta)| {
            let n = multiplier_norms(&spec, &cutoff, *h)?;
            Ok((
                *h,
                evaluate_bounds(&params, &n, &n, params.alpha, *delta),
                scaled_bound(&params, *h),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsReport {
        params,
        cutoff,
        points,
        norm_scaling: norm_scaling(&cutoff, &config.norm_h_grid)?,
        exponent_scaling: exponent_scaling(&params, &cutoff, &config.exponent_h_grid)?,
    })
}

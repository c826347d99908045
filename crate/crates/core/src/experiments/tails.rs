//! Monte Carlo laws of `‖Q‖²_HS`, `|det(D + V)|`, and `t_{1,δ}`.

use faer::Mat;
use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{DetTailConfig, HsTailConfig, SingularTailConfig};
use super::resolve_cutoff;
use super::scan::locate_magic;
use super::stats::{least_squares_slope, log_space, mean, TailEstimate, TailKind};
use crate::error::{invalid, Error, Result};
use crate::lattice::{enumerate_basis, LatticeSpec};
use crate::models::{assemble_dh, ChiralModelParams, OperatorMatrix};
use crate::perturb::{assemble_q, build_multiplier, derive_seed, operator_norms, sample_gaussian, MultiplierMatrix};
use crate::spectral::{hs_norm, log_abs_det, singular_values_of, smallest_singular_value};

/// Stream tags keeping the three experiments' seeds apart.
const HS_STREAM: u64 = 1;
const DET_STREAM: u64 = 2;
const SSV_STREAM: u64 = 3;

/// `‖S₁GS₂‖²_HS` for `n_trials` independent draws.
pub fn hs_norm_samples(dim: usize, s1: &MultiplierMatrix, s2: &MultiplierMatrix, n_trials: usize, root_seed: u64) -> Result<Vec<f64>> {
    if s1.dim() != dim || s2.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: s1.dim().min(s2.dim()),
        });
    }
    (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let g = sample_gaussian(dim, derive_seed(root_seed, &[HS_STREAM, t as u64]));
            let q = assemble_q(s1, g, s2, 1.0)?;
            Ok(hs_norm(q.q_matrix.as_ref()).powi(2))
        })
        .collect()
}

/// Empirical survival `P̂(‖S₁GS₂‖²_HS ≥ a)`.
pub fn hs_norm_tail(
    dim: usize,
    s1: &MultiplierMatrix,
    s2: &MultiplierMatrix,
    n_trials: usize,
    thresholds: &[f64],
    root_seed: u64,
) -> Result<TailEstimate> {
    let samples = hs_norm_samples(dim, s1, s2, n_trials, root_seed)?;
    Ok(TailEstimate::from_samples(&samples, thresholds, TailKind::Survival))
}

/// `C₀ exp((C₀‖S₁‖²_HS‖S₂‖²_HS − a)/(2‖S₁‖‖S₂‖))`, capped at 1.
pub fn hs_tail_bound(c0: f64, s1: &MultiplierMatrix, s2: &MultiplierMatrix, a: f64) -> f64 {
    let (n1, n2) = (operator_norms(s1), operator_norms(s2));
    let exponent = (c0 * n1.hs.powi(2) * n2.hs.powi(2) - a) / (2.0 * n1.op * n2.op);
    (c0 * exponent.exp()).min(1.0)
}

/// Log-survival slopes beyond the mean, fitted on the nearer and the farther
/// half of the populated thresholds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayCheck {
    pub points: usize,
    pub near_slope: f64,
    pub far_slope: f64,
    /// The decay is present and does not slow down by more than half.
    pub at_least_linear: bool,
}

pub fn linear_decay_check(est: &TailEstimate, mean: f64, min_hits: usize) -> DecayCheck {
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..est.thresholds.len())
        .filter(|&i| est.thresholds[i] > mean && est.hits[i] >= min_hits)
        .map(|i| (est.thresholds[i], est.empirical_probability[i].ln()))
        .unzip();
    let half = xs.len() / 2;
    let near = least_squares_slope(
        &xs[..=half.min(xs.len().saturating_sub(1))],
        &ys[..=half.min(ys.len().saturating_sub(1))],
    );
    let far = least_squares_slope(&xs[half..], &ys[half..]);
    match (near, far) {
        (Some(n), Some(f)) => DecayCheck {
            points: xs.len(),
            near_slope: n,
            far_slope: f,
            at_least_linear: n < 0.0 && f <= 0.5 * n,
        },
        _ => DecayCheck {
            points: xs.len(),
            near_slope: f64::NAN,
            far_slope: f64::NAN,
            at_least_linear: false,
        },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HsTailReport {
    pub dim: usize,
    pub mean: f64,
    pub estimate: TailEstimate,
    /// Exponential tail bound per threshold with the supplied `C₀`.
    pub bound: Vec<f64>,
    pub c0: f64,
    pub decay: DecayCheck,
    /// `P̂(‖G‖²_HS ≥ dim² + 6·dim)`.
    pub six_dim_excess: f64,
}

pub fn run_hs_tail(config: &HsTailConfig, c0: f64, root_seed: u64) -> Result<HsTailReport> {
    let dim = config.dim;
    let id = MultiplierMatrix::identity(dim);
    let samples = hs_norm_samples(dim, &id, &id, config.n_trials, root_seed)?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(0.0, f64::max);
    let n = config.n_thresholds.max(2);
    let thresholds: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let estimate = TailEstimate::from_samples(&samples, &thresholds, TailKind::Survival);
    let m = mean(&samples);
    let d2 = (dim * dim) as f64;
    let excess = samples.iter().filter(|x| **x >= d2 + 6.0 * dim as f64).count() as f64 / samples.len() as f64;
    Ok(HsTailReport {
        dim,
        mean: m,
        bound: thresholds.iter().map(|a| hs_tail_bound(c0, &id, &id, *a)).collect(),
        c0,
        decay: linear_decay_check(&estimate, m, config.min_hits),
        estimate,
        six_dim_excess: excess,
    })
}

/// `log|det(D + V)|` for `n_trials` standard complex Gaussian `V`.
pub fn det_log_samples(dim_n: usize, d_matrix: &Mat<c64>, n_trials: usize, root_seed: u64) -> Result<Vec<f64>> {
    if dim_n == 0 || dim_n > 60 {
        return Err(invalid(format!("det_tail supports 1 ≤ N ≤ 60, got {dim_n}")));
    }
    if d_matrix.nrows() != dim_n || d_matrix.ncols() != dim_n {
        return Err(Error::DimensionMismatch {
            expected: dim_n,
            got: d_matrix.nrows(),
        });
    }
    (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let v = sample_gaussian(dim_n, derive_seed(root_seed, &[DET_STREAM, t as u64]));
            log_abs_det((d_matrix + &v).as_ref())
        })
        .collect()
}

/// Empirical CDF `P̂(|det(D + V)| ≤ c)`, compared in the log domain.
pub fn det_tail(dim_n: usize, d_matrix: &Mat<c64>, n_trials: usize, thresholds: &[f64], root_seed: u64) -> Result<TailEstimate> {
    let logs = det_log_samples(dim_n, d_matrix, n_trials, root_seed)?;
    Ok(det_estimate(&logs, thresholds))
}

fn det_estimate(logs: &[f64], thresholds: &[f64]) -> TailEstimate {
    let log_thresholds: Vec<f64> = thresholds.iter().map(|c| c.ln()).collect();
    let mut est = TailEstimate::from_samples(logs, &log_thresholds, TailKind::Cdf);
    est.thresholds = thresholds.to_vec();
    est
}

/// `P̂(≤ c)/c` over the two decades above the smallest threshold with
/// `min_hits` hits.
#[derive(Clone, Debug, Serialize)]
pub struct RatioCheck {
    pub c_lo: f64,
    pub ratios: Vec<(f64, f64)>,
    /// Largest ratio on the lower decade over the largest on the upper one.
    /// A law `P ~ c^s` gives `10^{1−s}` here, so `s < 1` shows up as growth.
    pub growth: f64,
    pub bounded: bool,
}

pub fn ratio_bounded_check(est: &TailEstimate, min_hits: usize, max_growth: f64) -> Option<RatioCheck> {
    let start = est.hits.iter().position(|h| *h >= min_hits)?;
    let c_lo = est.thresholds[start];
    let ratios: Vec<(f64, f64)> = (start..est.thresholds.len())
        .filter(|&i| est.thresholds[i] <= 100.0 * c_lo * (1.0 + 1e-9))
        .map(|i| (est.thresholds[i], est.empirical_probability[i] / est.thresholds[i]))
        .collect();
    let spans_two_decades = ratios.last()?.0 >= 99.0 * c_lo;
    let split = 10.0 * c_lo * (1.0 + 1e-9);
    let max_over = |keep: &dyn Fn(f64) -> bool| ratios.iter().filter(|r| keep(r.0)).map(|r| r.1).fold(0.0, f64::max);
    let lower = max_over(&|c| c <= split);
    let upper = max_over(&|c| c > split);
    let growth = if upper > 0.0 { lower / upper } else { f64::INFINITY };
    Some(RatioCheck {
        c_lo,
        growth,
        bounded: spans_two_decades && growth <= max_growth,
        ratios,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DetTailReport {
    pub dim_n: usize,
    pub estimate: TailEstimate,
    pub ratio: Option<RatioCheck>,
    /// Log–log slope of `P̂` on the smallest populated decade.
    pub smallest_decade_slope: Option<f64>,
}

pub fn run_det_tail(config: &DetTailConfig, root_seed: u64) -> Result<DetTailReport> {
    let n = config.dim_n;
    let d = if config.d_diagonal.is_empty() {
        Mat::<c64>::zeros(n, n)
    } else if config.d_diagonal.len() == n {
        Mat::from_fn(n, n, |i, j| if i == j { config.d_diagonal[i] } else { c64::new(0.0, 0.0) })
    } else {
        return Err(Error::Config(format!("d_diagonal must have {n} entries")));
    };
    let logs = det_log_samples(n, &d, config.n_trials, root_seed)?;
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).exp();
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
    let thresholds = log_space(lo, hi, config.per_decade);
    let estimate = det_estimate(&logs, &thresholds);
    Ok(DetTailReport {
        dim_n: n,
        ratio: ratio_bounded_check(&estimate, config.min_hits, 2.0),
        smallest_decade_slope: estimate.smallest_decade_slope(config.min_hits),
        estimate,
    })
}

/// `t_{1,δ}`: smallest singular value of `A + δS₁GS₂ − z₀` per draw.
pub fn smallest_singular_samples(
    a: &OperatorMatrix,
    z0: c64,
    s1: &MultiplierMatrix,
    s2: &MultiplierMatrix,
    delta: f64,
    n_trials: usize,
    root_seed: u64,
) -> Result<Vec<f64>> {
    let shifted = a.shifted(z0);
    if delta == 0.0 {
        let t = smallest_singular_value(shifted.entries.as_ref())?;
        return Ok(vec![t; n_trials]);
    }
    (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let g = sample_gaussian(a.dim(), derive_seed(root_seed, &[SSV_STREAM, t as u64]));
            let q = assemble_q(s1, g, s2, delta)?;
            smallest_singular_value(shifted.perturbed(delta, &q.q_matrix)?.entries.as_ref())
        })
        .collect()
}

/// `N^{N C₂} δ^N α^{−(N−2)/2}`, evaluated in the log domain.
pub fn regime_bound(n_small: usize, c2: f64, delta: f64, alpha: f64) -> f64 {
    let n = n_small as f64;
    (n * c2 * n.ln() + n * delta.ln() - 0.5 * (n - 2.0) * alpha.ln()).exp()
}

#[allow(clippy::too_many_arguments)]
pub fn smallest_singular_tail(
    a: &OperatorMatrix,
    z0: c64,
    s1: &MultiplierMatrix,
    s2: &MultiplierMatrix,
    delta: f64,
    n_trials: usize,
    thresholds: &[f64],
    root_seed: u64,
) -> Result<TailEstimate> {
    let samples = smallest_singular_samples(a, z0, s1, s2, delta, n_trials, root_seed)?;
    Ok(TailEstimate::from_samples(&samples, thresholds, TailKind::Cdf))
}

#[derive(Clone, Debug, Serialize)]
pub struct SingularTailReport {
    pub inv_h: f64,
    pub dim: usize,
    pub z0: c64,
    pub delta: f64,
    pub alpha: f64,
    pub n_small: usize,
    /// Thresholds above this leave the stated regime (with the supplied `C₂`).
    pub regime_bound: f64,
    pub unperturbed_t1: f64,
    pub estimate: TailEstimate,
    pub smallest_decade_slope: Option<f64>,
}

pub fn run_singular_tail(config: &SingularTailConfig, c2: f64, root_seed: u64) -> Result<SingularTailReport> {
    let spec = LatticeSpec::new();
    let basis = enumerate_basis(&spec, config.k as i64)?;
    let inv_h = if config.refine_magic {
        locate_magic(&spec, &basis, config.beta, config.probe, config.inv_h - 0.01, config.inv_h + 0.01)?.0
    } else {
        config.inv_h
    };
    let h = 1.0 / inv_h;
    let a = assemble_dh(&spec, &ChiralModelParams::new(h, config.beta)?, &basis);
    let cutoff = resolve_cutoff(&spec, config.beta, config.cutoff)?;
    let m = build_multiplier(&spec, &cutoff, &basis, h);
    let unperturbed = singular_values_of(a.shifted(config.z0).entries.as_ref(), false)?;
    let n_small = unperturbed.descending.iter().filter(|t| t.powi(2) <= config.alpha).count();
    let samples = smallest_singular_samples(&a, config.z0, &m, &m, config.delta, config.n_trials, root_seed)?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min).max(f64::MIN_POSITIVE);
    let hi = samples.iter().copied().fold(0.0, f64::max);
    let thresholds = if hi > lo { log_space(lo, hi, config.per_decade) } else { vec![lo] };
    let estimate = TailEstimate::from_samples(&samples, &thresholds, TailKind::Cdf);
    Ok(SingularTailReport {
        inv_h,
        dim: a.dim(),
        z0: config.z0,
        delta: config.delta,
        alpha: config.alpha,
        n_small,
        regime_bound: regime_bound(n_small, c2, config.delta, config.alpha),
        unperturbed_t1: unperturbed.smallest(),
        smallest_decade_slope: estimate.smallest_decade_slope(config.min_hits),
        estimate,
    })
}

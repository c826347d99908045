//! Batch verification of the Grushin identities and of the pseudospectral
//! oracle.

use std::collections::BTreeMap;

use num_complex::Complex64 as c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{GrushinConfig, OracleConfig};
use super::resolve_cutoff;
use super::stats::least_squares_slope;
use crate::error::Result;
use crate::grushin::{
    build_grushin, identity_residual, norm_table, perturbed_effective, schur_check, singular_profile_diagnostic, NormTable,
};
use crate::lattice::{enumerate_basis, LatticeSpec};
use crate::models::{apply_dh_gridded, assemble_dh, assemble_seeley, ChiralModelParams, OperatorMatrix, SeeleyParams};
use crate::perturb::{build_multiplier, derive_seed, estimate_cs, sample_gaussian, PerturbationDraw, Side};
use crate::spectral::{eigenvalues, hs_norm, singular_values_of};

const RANDOM_STREAM: u64 = 10;
const SCHUR_STREAM: u64 = 11;
const NEUMANN_STREAM: u64 = 12;

#[derive(Clone, Debug, Serialize)]
pub struct ProblemCheck {
    pub label: String,
    pub dim: usize,
    pub n_small: usize,
    pub alpha: f64,
    /// `‖𝒫ℰ − I‖`.
    pub right_residual: f64,
    /// `‖ℰ𝒫 − I‖`.
    pub left_residual: f64,
    pub norms: NormTable,
    pub norm_table_holds: bool,
}

impl ProblemCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.right_residual <= tol && self.left_residual <= tol && self.norm_table_holds
    }
}

fn check_problem(label: String, a: &OperatorMatrix, z0: c64, alpha: f64, epsilon0: f64) -> Result<ProblemCheck> {
    let (gp, gi) = build_grushin(a, z0, alpha, epsilon0)?;
    let p = gp.bordered(a, None)?;
    let e = gi.block();
    let norms = norm_table(&gi)?;
    Ok(ProblemCheck {
        label,
        dim: a.dim(),
        n_small: gp.n_small,
        alpha,
        right_residual: identity_residual(&p, &e)?,
        left_residual: identity_residual(&e, &p)?,
        norm_table_holds: norms.holds(alpha, gp.n_small, 1e-10),
        norms,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SchurSummary {
    pub draws: usize,
    pub neumann_valid: usize,
    pub consistent: usize,
    pub constant_min: f64,
    pub constant_median: f64,
    pub constant_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeumannSummary {
    pub deltas: Vec<f64>,
    pub gaps: Vec<f64>,
    pub empirical_c: Vec<f64>,
    pub all_valid: bool,
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileSummary {
    pub cs_left: f64,
    pub cs_right: f64,
    pub profile_1: Vec<f64>,
    pub profile_2: Vec<f64>,
    pub within_bracket: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrushinReport {
    pub random: Vec<ProblemCheck>,
    pub tbg: Vec<ProblemCheck>,
    pub schur: SchurSummary,
    pub neumann: NeumannSummary,
    pub profiles: ProfileSummary,
}

impl GrushinReport {
    pub fn exact(&self, tol: f64) -> bool {
        self.random.iter().chain(&self.tbg).all(|c| c.passes(tol))
    }
}

fn median_t_squared(a: &OperatorMatrix) -> Result<f64> {
    let mut t: Vec<f64> = singular_values_of(a.entries.as_ref(), false)?
        .descending
        .iter()
        .map(|x| x * x)
        .collect();
    t.sort_by(f64::total_cmp);
    Ok(t[t.len() / 2])
}

pub fn grushin_verification(config: &GrushinConfig) -> Result<GrushinReport> {
    let random = (0..config.random_matrices)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.root_seed, &[RANDOM_STREAM, i as u64]);
            let dim = 2 + (seed % (config.max_dim.max(3) as u64 - 1)) as usize;
            let a = OperatorMatrix::scalar(sample_gaussian(dim, seed));
            let alpha = median_t_squared(&a)?;
            check_problem(format!("random-{i}"), &a, c64::new(0.0, 0.0), alpha, config.epsilon0)
        })
        .collect::<Result<Vec<_>>>()?;

    let spec = LatticeSpec::new();
    let basis = enumerate_basis(&spec, config.tbg_k as i64)?;
    let tbg_ops: Vec<(f64, OperatorMatrix)> = config
        .tbg_inv_h
        .iter()
        .map(|x| Ok((*x, assemble_dh(&spec, &ChiralModelParams::new(1.0 / x, config.beta)?, &basis))))
        .collect::<Result<_>>()?;
    let tbg = tbg_ops
        .iter()
        .map(|(x, a)| check_problem(format!("tbg-inv_h-{x}"), a, config.z0, config.alpha, config.epsilon0))
        .collect::<Result<Vec<_>>>()?;

    let (inv_h, a) = tbg_ops
        .first()
        .cloned()
        .ok_or_else(|| crate::error::invalid("tbg_inv_h must not be empty"))?;
    let h = 1.0 / inv_h;
    let cutoff = resolve_cutoff(&spec, config.beta, config.cutoff)?;
    let m = build_multiplier(&spec, &cutoff, &basis, h);
    let (gp, gi) = build_grushin(&a, config.z0, config.alpha, config.epsilon0)?;

    let draws = (0..config.schur_draws)
        .into_par_iter()
        .map(|i| {
            let q = PerturbationDraw::sample(&m, &m, config.schur_delta, derive_seed(config.root_seed, &[SCHUR_STREAM, i as u64]))?;
            let nd = perturbed_effective(&gp, &gi, &a, &q, config.schur_delta)?;
            let check = schur_check(&gp, &a, &q, config.schur_delta)?;
            Ok((nd.valid, check))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut constants: Vec<f64> = draws.iter().map(|(_, c)| c.constant).collect();
    constants.sort_by(f64::total_cmp);
    let schur = SchurSummary {
        draws: draws.len(),
        neumann_valid: draws.iter().filter(|(v, _)| *v).count(),
        consistent: draws.iter().filter(|(_, c)| c.consistent).count(),
        constant_min: constants.first().copied().unwrap_or(f64::NAN),
        constant_median: constants.get(constants.len() / 2).copied().unwrap_or(f64::NAN),
        constant_max: constants.last().copied().unwrap_or(f64::NAN),
    };

    let q = PerturbationDraw::sample(&m, &m, 0.0, derive_seed(config.root_seed, &[NEUMANN_STREAM]))?;
    let decomps = config
        .neumann_deltas
        .iter()
        .map(|d| perturbed_effective(&gp, &gi, &a, &q, *d))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = decomps
        .iter()
        .map(|nd| hs_norm((&nd.e_mp_delta - &nd.first_order).as_ref()))
        .collect();
    let slope = least_squares_slope(
        &config.neumann_deltas.iter().map(|d| d.ln()).collect::<Vec<_>>(),
        &gaps.iter().map(|g| g.ln()).collect::<Vec<_>>(),
    )
    .unwrap_or(f64::NAN);
    let neumann = NeumannSummary {
        deltas: config.neumann_deltas.clone(),
        empirical_c: decomps.iter().map(|nd| nd.empirical_c).collect(),
        all_valid: decomps.iter().all(|nd| nd.valid),
        gaps,
        slope,
    };

    let cs_left = estimate_cs(&a, config.z0, config.alpha, &m, Side::Left)?.cs_lower;
    let cs_right = estimate_cs(&a, config.z0, config.alpha, &m, Side::Right)?.cs_lower;
    let pr = singular_profile_diagnostic(&gi, &m, &m)?;
    let upper = 1.0;
    let within_bracket = pr.profile_1.iter().all(|s| *s >= cs_left * (1.0 - 1e-10) && *s <= upper + 1e-10)
        && pr.profile_2.iter().all(|s| *s >= cs_right * (1.0 - 1e-10) && *s <= upper + 1e-10);
    let profiles = ProfileSummary {
        cs_left,
        cs_right,
        profile_1: pr.profile_1,
        profile_2: pr.profile_2,
        within_bracket,
    };

    Ok(GrushinReport {
        random,
        tbg,
        schur,
        neumann,
        profiles,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    /// `(K, largest relative error over the random vectors)`.
    pub chiral: Vec<(usize, f64)>,
    pub seeley_k: usize,
    /// Largest distance from `in`, `|n| ≤ K/2`, to the truncated spectrum of
    /// `f ↦ f′ + cos(x) f`.
    pub seeley_drift: f64,
}

pub fn oracle_check(config: &OracleConfig) -> Result<OracleReport> {
    let spec = LatticeSpec::new();
    let params = ChiralModelParams::with_shift(config.h, config.beta, config.z_shift)?;
    let chiral = config
        .k_values
        .iter()
        .map(|k| {
            let basis = enumerate_basis(&spec, *k as i64)?;
            let a = assemble_dh(&spec, &params, &basis);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.root_seed, &[*k as u64]));
            let mut worst = 0.0f64;
            for _ in 0..config.vectors_per_k {
                let v: Vec<c64> = (0..a.dim())
                    .map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect();
                let dense = a.apply(&v);
                let grid = apply_dh_gridded(&spec, &params, &basis, &v, None)?;
                let num: f64 = dense.iter().zip(&grid).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
                let den: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(num / den);
            }
            Ok((*k, worst))
        })
        .collect::<Result<Vec<_>>>()?;

    let half = c64::new(0.5, 0.0);
    let seeley = SeeleyParams::new(
        BTreeMap::from([(0, c64::new(1.0, 0.0))]),
        BTreeMap::from([(-1, half), (1, half)]),
        config.seeley_k,
    )?;
    let spectrum = eigenvalues(&assemble_seeley(&seeley))?;
    let reach = (config.seeley_k / 2) as i64;
    let seeley_drift = (-reach..=reach)
        .map(|n| {
            let target = c64::new(0.0, n as f64);
            spectrum
                .eigenvalues
                .iter()
                .map(|l| (l - target).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(OracleReport {
        chiral,
        seeley_k: config.seeley_k,
        seeley_drift,
    })
}

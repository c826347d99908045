//! Grushin problems for `A − z₀` bordered by the singular vectors of its `N`
//! smallest singular values, their exact inverses, and the effective
//! Hamiltonian `E₋₊^δ` of the perturbed problem.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;

use crate::error::{invalid, Error, Result};
use crate::models::OperatorMatrix;
use crate::perturb::{MultiplierMatrix, PerturbationDraw};
use crate::spectral::{hs_norm, op_norm, singular_values_of, smallest_singular_value};

/// Bordered operator data for `A − z₀`.
///
/// Column `i` of `e` and `f` is the singular pair of `t[i]`, ascending:
/// `(A − z₀)e_i = t_i f_i` and `(A − z₀)* f_i = t_i e_i`.
#[derive(Clone, Debug)]
pub struct GrushinProblem {
    pub z0: c64,
    pub alpha: f64,
    pub n_small: usize,
    pub t: Vec<f64>,
    pub e: Mat<c64>,
    pub f: Mat<c64>,
    /// `R₋ u₋ = Σ u₋(i) f_i`, `dim × N`.
    pub r_minus: Mat<c64>,
    /// `R₊ u = (⟨u, e_i⟩)_i`, `N × dim`.
    pub r_plus: Mat<c64>,
    pub epsilon0: f64,
}

#[derive(Clone, Debug)]
pub struct GrushinInverse {
    pub e0: Mat<c64>,
    pub e_plus0: Mat<c64>,
    pub e_minus0: Mat<c64>,
    pub e_mp0: Mat<c64>,
}

impl GrushinProblem {
    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    /// `(t_i, e_i, f_i)`.
    pub fn triplet(&self, i: usize) -> (f64, MatRef<'_, c64>, MatRef<'_, c64>) {
        (self.t[i], self.e.as_ref().subcols(i, 1), self.f.as_ref().subcols(i, 1))
    }

    /// `𝒫 = [[A − z₀ + δQ, R₋], [R₊, 0]]`.
    pub fn bordered(&self, a: &OperatorMatrix, perturbation: Option<(&Mat<c64>, f64)>) -> Result<Mat<c64>> {
        let (dim, n) = (self.dim(), self.n_small);
        if a.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: a.dim(),
            });
        }
        let mut p = Mat::<c64>::zeros(dim + n, dim + n);
        p.as_mut()
            .submatrix_mut(0, 0, dim, dim)
            .copy_from(a.shifted(self.z0).entries.as_ref());
        if let Some((q, delta)) = perturbation {
            if q.nrows() != dim || q.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: q.nrows(),
                });
            }
            let mut block = p.as_mut().submatrix_mut(0, 0, dim, dim);
            block += q * faer::Scale(c64::new(delta, 0.0));
        }
        p.as_mut().submatrix_mut(0, dim, dim, n).copy_from(self.r_minus.as_ref());
        p.as_mut().submatrix_mut(dim, 0, n, dim).copy_from(self.r_plus.as_ref());
        Ok(p)
    }
}

impl GrushinInverse {
    pub fn n_small(&self) -> usize {
        self.e_mp0.nrows()
    }

    /// `ℰ = [[E⁰, E₊⁰], [E₋⁰, E₋₊⁰]]`.
    pub fn block(&self) -> Mat<c64> {
        assemble_blocks(&self.e0, &self.e_plus0, &self.e_minus0, &self.e_mp0)
    }
}

fn assemble_blocks(e: &Mat<c64>, e_plus: &Mat<c64>, e_minus: &Mat<c64>, e_mp: &Mat<c64>) -> Mat<c64> {
    let (dim, n) = (e.nrows(), e_mp.nrows());
    let mut out = Mat::<c64>::zeros(dim + n, dim + n);
    out.as_mut().submatrix_mut(0, 0, dim, dim).copy_from(e.as_ref());
    out.as_mut().submatrix_mut(0, dim, dim, n).copy_from(e_plus.as_ref());
    out.as_mut().submatrix_mut(dim, 0, n, dim).copy_from(e_minus.as_ref());
    out.as_mut().submatrix_mut(dim, dim, n, n).copy_from(e_mp.as_ref());
    out
}

/// `‖XY − I‖` in the operator norm.
pub fn identity_residual(x: &Mat<c64>, y: &Mat<c64>) -> Result<f64> {
    let mut prod = x * y;
    for i in 0..prod.nrows() {
        prod[(i, i)] -= c64::new(1.0, 0.0);
    }
    op_norm(prod.as_ref())
}

/// Singular values are split at `t_i² ≤ α` (small, bordered) versus
/// `t_i² > α` (inverted in `E⁰`).
pub fn build_grushin(a: &OperatorMatrix, z0: c64, alpha: f64, epsilon0: f64) -> Result<(GrushinProblem, GrushinInverse)> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
        return Err(invalid(format!("epsilon0 must lie in (0, 1), got {epsilon0}")));
    }
    if !a.is_finite() {
        return Err(invalid("matrix has non-finite entries"));
    }
    let dim = a.dim();
    let svd = singular_values_of(a.shifted(z0).entries.as_ref(), true)?;
    let t = svd.ascending();
    let (u, v) = (svd.left.expect("vectors requested"), svd.right.expect("vectors requested"));
    let e = Mat::from_fn(dim, dim, |i, j| v[(i, dim - 1 - j)]);
    let f = Mat::from_fn(dim, dim, |i, j| u[(i, dim - 1 - j)]);
    let n = t.iter().take_while(|x| x.powi(2) <= alpha).count();
    if n == dim {
        return Err(Error::AlphaTooLarge(dim));
    }

    let e_small = e.as_ref().subcols(0, n).to_owned();
    let f_small = f.as_ref().subcols(0, n).to_owned();
    let e_tail = e.as_ref().subcols(n, dim - n);
    let f_tail = f.as_ref().subcols(n, dim - n);
    let inv_t = Mat::from_fn(dim - n, dim - n, |i, j| {
        if i == j {
            c64::new(1.0 / t[n + i], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let e0 = e_tail * &inv_t * f_tail.adjoint();
    let e_mp0 = Mat::from_fn(n, n, |i, j| if i == j { c64::new(-t[i], 0.0) } else { c64::new(0.0, 0.0) });

    let problem = GrushinProblem {
        z0,
        alpha,
        n_small: n,
        t,
        r_minus: f_small.clone(),
        r_plus: e_small.adjoint().to_owned(),
        e,
        f,
        epsilon0,
    };
    let inverse = GrushinInverse {
        e0,
        e_plus0: e_small,
        e_minus0: f_small.adjoint().to_owned(),
        e_mp0,
    };
    Ok((problem, inverse))
}

/// Operator norms of the four blocks of `ℰ`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct NormTable {
    pub e0: f64,
    pub e_plus0: f64,
    pub e_minus0: f64,
    pub e_mp0: f64,
}

impl NormTable {
    /// `‖E⁰‖ ≤ α^{-1/2}`, `‖E±⁰‖ = 1` (for `N ≥ 1`), `‖E₋₊⁰‖ ≤ √α`.
    pub fn holds(&self, alpha: f64, n_small: usize, slack: f64) -> bool {
        let unit = |x: f64| if n_small == 0 { x == 0.0 } else { (x - 1.0).abs() <= slack };
        self.e0 <= alpha.powf(-0.5) + slack && unit(self.e_plus0) && unit(self.e_minus0) && self.e_mp0 <= alpha.sqrt() + slack
    }
}

pub fn norm_table(gi: &GrushinInverse) -> Result<NormTable> {
    Ok(NormTable {
        e0: op_norm(gi.e0.as_ref())?,
        e_plus0: op_norm(gi.e_plus0.as_ref())?,
        e_minus0: op_norm(gi.e_minus0.as_ref())?,
        e_mp0: op_norm(gi.e_mp0.as_ref())?,
    })
}

/// Blocks of `ℰ^δ = (𝒫^δ)^{-1}` obtained by direct inversion.
#[derive(Clone, Debug)]
pub struct PerturbedInverse {
    pub e: Mat<c64>,
    pub e_plus: Mat<c64>,
    pub e_minus: Mat<c64>,
    pub e_mp: Mat<c64>,
    /// `‖𝒫^δ ℰ^δ − I‖`; large values mark a numerically singular `𝒫^δ`.
    pub residual: f64,
}

impl PerturbedInverse {
    pub fn is_singular(&self) -> bool {
        self.residual.is_nan() || self.residual > 1e-6
    }
}

pub fn invert_perturbed(gp: &GrushinProblem, a: &OperatorMatrix, q: &Mat<c64>, delta: f64) -> Result<PerturbedInverse> {
    let p = gp.bordered(a, Some((q, delta)))?;
    let size = p.nrows();
    let inv = p.full_piv_lu().inverse();
    let finite = (0..size).all(|j| (0..size).all(|i| inv[(i, j)].is_finite()));
    let residual = if finite { identity_residual(&p, &inv)? } else { f64::INFINITY };
    let (dim, n) = (gp.dim(), gp.n_small);
    let block = |r, c, nr, nc| inv.as_ref().submatrix(r, c, nr, nc).to_owned();
    Ok(PerturbedInverse {
        e: block(0, 0, dim, dim),
        e_plus: block(0, dim, dim, n),
        e_minus: block(dim, 0, n, dim),
        e_mp: block(dim, dim, n, n),
        residual,
    })
}

/// Exact and expanded forms of `E₋₊^δ`.
///
/// With `A^δ = A + δQ`, `𝒫^δℰ = 1 + K` and `ℰ^δ = ℰ Σ (−K)^j`, so
/// `E₋₊^δ = E₋₊⁰ − δE₋⁰QE₊⁰ + δT` with
/// `T = δ^{-1} Σ_{j≥2} (−1)^j E₋⁰(δQE⁰)^{j−1} δQE₊⁰`.
#[derive(Clone, Debug)]
pub struct NeumannDecomposition {
    pub e_mp_delta: Mat<c64>,
    pub first_order: Mat<c64>,
    /// `T` summed from its series; `None` when the series is not known to
    /// converge.
    pub remainder_series: Option<Mat<c64>>,
    /// `‖T‖_HS`, from the series when available, otherwise from the exact
    /// block.
    pub remainder_norm: f64,
    pub valid: bool,
    /// `‖E₋₊^δ − first_order‖ / (δ² α^{-1/2} ‖Q‖²_HS)`.
    pub empirical_c: f64,
    pub singular: bool,
    pub perturbed: PerturbedInverse,
}

pub fn perturbed_effective(
    gp: &GrushinProblem,
    gi: &GrushinInverse,
    a: &OperatorMatrix,
    q: &PerturbationDraw,
    delta: f64,
) -> Result<NeumannDecomposition> {
    if delta.is_nan() || delta < 0.0 {
        return Err(invalid(format!("delta must be nonnegative, got {delta}")));
    }
    let qm = &q.q_matrix;
    let perturbed = invert_perturbed(gp, a, qm, delta)?;
    let d = c64::new(delta, 0.0);
    let projected = &gi.e_minus0 * qm * &gi.e_plus0;
    let first_order = &gi.e_mp0 - &projected * faer::Scale(d);

    let q_op = op_norm(qm.as_ref())?;
    let valid = delta * gp.alpha.powf(-0.5) * q_op < 1.0 - gp.epsilon0;

    let remainder_series = if valid && delta > 0.0 && gp.n_small > 0 {
        let step = qm * &gi.e0 * faer::Scale(d);
        let mut term = &gi.e_minus0 * &step;
        let tail = qm * &gi.e_plus0;
        let mut sum = Mat::<c64>::zeros(gp.n_small, gp.n_small);
        let mut sign = 1.0;
        for _ in 0..10_000 {
            let contribution = &term * &tail * faer::Scale(c64::new(sign, 0.0));
            let size = hs_norm(contribution.as_ref());
            sum += &contribution;
            if size <= 1e-18 * (1.0 + hs_norm(sum.as_ref())) {
                break;
            }
            term = &term * &step;
            sign = -sign;
        }
        Some(sum)
    } else {
        None
    };
    let remainder_norm = match &remainder_series {
        Some(t) => hs_norm(t.as_ref()),
        None if delta > 0.0 => hs_norm((&perturbed.e_mp - &first_order).as_ref()) / delta,
        None => 0.0,
    };
    let gap = hs_norm((&perturbed.e_mp - &first_order).as_ref());
    let scale = delta * delta * gp.alpha.powf(-0.5) * hs_norm(qm.as_ref()).powi(2);
    let empirical_c = if scale > 0.0 { gap / scale } else { 0.0 };
    Ok(NeumannDecomposition {
        e_mp_delta: perturbed.e_mp.clone(),
        first_order,
        remainder_series,
        remainder_norm,
        valid,
        empirical_c,
        singular: perturbed.is_singular(),
        perturbed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchurCheck {
    /// `t_{1,δ}`, smallest singular value of `A^δ − z₀`.
    pub sigma_min_full: f64,
    /// `t₁(E₋₊^δ)`, `+∞` when `N = 0`.
    pub sigma_min_effective: f64,
    /// `C = √α (t₁(E₋₊^δ)‖E^δ‖ + ‖E₋^δ‖‖E₊^δ‖)` for this draw.
    pub constant: f64,
    pub consistent: bool,
}

/// Compares `t_{1,δ}` with `t₁(E₋₊^δ)` through
/// `√α t₁(E₋₊^δ) ≤ C t_{1,δ}`.
pub fn schur_check(gp: &GrushinProblem, a: &OperatorMatrix, q: &PerturbationDraw, delta: f64) -> Result<SchurCheck> {
    let perturbed_op = a.perturbed(delta, &q.q_matrix)?.shifted(gp.z0);
    let sigma_min_full = smallest_singular_value(perturbed_op.entries.as_ref())?;
    let pi = invert_perturbed(gp, a, &q.q_matrix, delta)?;
    let sigma_min_effective = if gp.n_small == 0 {
        f64::INFINITY
    } else {
        smallest_singular_value(pi.e_mp.as_ref())?
    };
    let tol = 1e-12;
    if gp.n_small == 0 {
        // No border: 𝒫^δ = A^δ − z₀ and invertibility is read off directly.
        return Ok(SchurCheck {
            sigma_min_full,
            sigma_min_effective,
            constant: f64::INFINITY,
            consistent: sigma_min_full > tol,
        });
    }
    let e_norm = op_norm(pi.e.as_ref())?;
    let cross = op_norm(pi.e_minus.as_ref())? * op_norm(pi.e_plus.as_ref())?;
    let constant = gp.alpha.sqrt() * (sigma_min_effective * e_norm + cross);
    let both_zero = sigma_min_full <= tol && sigma_min_effective <= tol;
    let both_nonzero = sigma_min_full > tol && sigma_min_effective > tol;
    let bound_holds = gp.alpha.sqrt() * sigma_min_effective <= constant * sigma_min_full * (1.0 + 1e-8) + tol;
    Ok(SchurCheck {
        sigma_min_full,
        sigma_min_effective,
        constant,
        consistent: (both_zero || both_nonzero) && bound_holds,
    })
}

/// Singular values of `E₋⁰S₁` and `S₂E₊⁰`, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularProfiles {
    pub profile_1: Vec<f64>,
    pub profile_2: Vec<f64>,
}

impl SingularProfiles {
    /// `lower ≤ s ≤ upper` for every value, with relative slack.
    pub fn within(&self, lower: f64, upper: f64, slack: f64) -> bool {
        self.profile_1
            .iter()
            .chain(&self.profile_2)
            .all(|s| *s >= lower * (1.0 - slack) - slack && *s <= upper * (1.0 + slack) + slack)
    }
}

pub fn singular_profile_diagnostic(gi: &GrushinInverse, s1: &MultiplierMatrix, s2: &MultiplierMatrix) -> Result<SingularProfiles> {
    let dim = gi.e0.nrows();
    for s in [s1, s2] {
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.dim(),
            });
        }
    }
    let left = s1.right_apply(&gi.e_minus0);
    let right = s2.left_apply(&gi.e_plus0);
    Ok(SingularProfiles {
        profile_1: singular_values_of(left.as_ref(), false)?.ascending(),
        profile_2: singular_values_of(right.as_ref(), false)?.ascending(),
    })
}

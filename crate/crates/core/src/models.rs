//! Dense Fourier–Galerkin truncations of the chiral TBG operator `D_h(β) − z₀`
//! and of Seeley's operator `f ↦ a f′ + b f` on the circle.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64 as c64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::lattice::{dual_point, potential_shifts, LatticeSpec, TruncationBasis};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiralModelParams {
    pub h: f64,
    pub beta: c64,
    pub z_shift: c64,
}

impl ChiralModelParams {
    pub fn new(h: f64, beta: c64) -> Result<Self> {
        Self::with_shift(h, beta, c64::new(0.0, 0.0))
    }

    pub fn with_shift(h: f64, beta: c64, z_shift: c64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("h must be positive and finite, got {h}")));
        }
        Ok(Self { h, beta, z_shift })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockStructure {
    /// 2×2 block operator with scalar blocks of size `block`.
    TwoByTwo {
        block: usize,
    },
    Scalar,
}

/// A truncated operator stored densely, tagged with the basis it was built on.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub entries: Mat<c64>,
    pub block_structure: BlockStructure,
    pub basis_ref: String,
}

impl OperatorMatrix {
    pub fn new(entries: Mat<c64>, block_structure: BlockStructure, basis_ref: impl Into<String>) -> Self {
        assert_eq!(entries.nrows(), entries.ncols(), "operator matrices are square");
        Self {
            entries,
            block_structure,
            basis_ref: basis_ref.into(),
        }
    }

    /// Wraps a bare square matrix.
    pub fn scalar(entries: Mat<c64>) -> Self {
        Self::new(entries, BlockStructure::Scalar, "adhoc")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_finite(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| self.entries[(i, j)].is_finite()))
    }

    /// `self − z·I`.
    pub fn shifted(&self, z: c64) -> OperatorMatrix {
        let mut out = self.clone();
        for i in 0..self.dim() {
            out.entries[(i, i)] -= z;
        }
        out
    }

    /// `self + δ·Q`.
    pub fn perturbed(&self, delta: f64, q: &Mat<c64>) -> Result<OperatorMatrix> {
        if q.nrows() != self.dim() || q.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.nrows(),
            });
        }
        let mut out = self.clone();
        if delta != 0.0 {
            out.entries += q * faer::Scale(c64::new(delta, 0.0));
        }
        Ok(out)
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        let n = self.dim();
        assert_eq!(v.len(), n);
        (0..n).map(|i| (0..n).map(|j| self.entries[(i, j)] * v[j]).sum()).collect()
    }
}

/// `U(z) = β Σ_j ω^j exp((z ω̄^j − z̄ ω^j)/2)`.
pub fn potential(spec: &LatticeSpec, beta: c64, z: c64) -> c64 {
    let sum: c64 = (0..3)
        .map(|j| {
            let w = spec.omega_pow(j);
            w * ((z * w.conj() - z.conj() * w) * 0.5).exp()
        })
        .sum();
    beta * sum
}

/// `[[hk − z₀, βU₊], [βU₋, hk − z₀]]` on `basis ⊕ basis`.
///
/// Shifts leaving the box are dropped.
pub fn assemble_dh(spec: &LatticeSpec, params: &ChiralModelParams, basis: &TruncationBasis) -> OperatorMatrix {
    let b = basis.dim_scalar();
    let mut m = Mat::<c64>::zeros(2 * b, 2 * b);
    for (i, idx) in basis.indices().iter().enumerate() {
        let d = params.h * dual_point(spec, *idx) - params.z_shift;
        m[(i, i)] = d;
        m[(b + i, b + i)] = d;
    }
    if params.beta != c64::new(0.0, 0.0) {
        let shifts = potential_shifts(spec);
        for (col, idx) in basis.indices().iter().enumerate() {
            for (kappa, w) in shifts {
                if let Some(row) = basis.index_of(*idx + kappa) {
                    m[(row, b + col)] += params.beta * w;
                }
                if let Some(row) = basis.index_of(*idx + (-kappa)) {
                    m[(b + row, col)] += params.beta * w;
                }
            }
        }
    }
    OperatorMatrix::new(m, BlockStructure::TwoByTwo { block: b }, basis.id())
}

/// Smallest grid side for which multiplying box functions by `U(±z)` on an
/// `L × L` grid and projecting back to the box is alias-free.
pub fn min_alias_free_grid(spec: &LatticeSpec, basis: &TruncationBasis) -> usize {
    let reach = potential_shifts(spec)
        .iter()
        .map(|(k, _)| {
            let (p, q) = spec.torus_frequency(*k);
            p.abs().max(q.abs())
        })
        .max()
        .unwrap_or(0) as usize;
    2 * basis.half_width() + reach + 1
}

/// Default pseudospectral grid side, `4K + 4`.
pub fn default_grid(basis: &TruncationBasis) -> usize {
    4 * basis.half_width() + 4
}

struct Grid2d {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Grid2d {
    fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    fn transform(&self, data: &mut [c64], fft: &Arc<dyn Fft<f64>>) {
        let l = self.side;
        for row in data.chunks_mut(l) {
            fft.process(row);
        }
        let mut col = vec![c64::new(0.0, 0.0); l];
        for j in 0..l {
            for i in 0..l {
                col[i] = data[i * l + j];
            }
            fft.process(&mut col);
            for i in 0..l {
                data[i * l + j] = col[i];
            }
        }
    }

    fn slot(&self, (p, q): (i64, i64)) -> usize {
        let l = self.side as i64;
        (p.rem_euclid(l) * l + q.rem_euclid(l)) as usize
    }
}

/// Matrix-free application of `D_h(β) − z₀` by the pseudospectral route:
/// synthesize each component on an equispaced grid over the fundamental
/// domain, multiply pointwise by `βU(±z)`, and analyze back onto the box.
pub fn apply_dh_gridded(
    spec: &LatticeSpec,
    params: &ChiralModelParams,
    basis: &TruncationBasis,
    v: &[c64],
    grid_side: Option<usize>,
) -> Result<Vec<c64>> {
    let b = basis.dim_scalar();
    if v.len() != 2 * b {
        return Err(Error::DimensionMismatch {
            expected: 2 * b,
            got: v.len(),
        });
    }
    let l = grid_side.unwrap_or_else(|| default_grid(basis));
    let min = min_alias_free_grid(spec, basis);
    if l < min {
        return Err(invalid(format!("grid side {l} aliases the potential shifts; need at least {min}")));
    }

    let grid = Grid2d::new(l);
    let freqs: Vec<_> = basis.indices().iter().map(|k| spec.torus_frequency(*k)).collect();
    let points: Vec<c64> = (0..l * l)
        .map(|s| {
            let (i, j) = (s / l, s % l);
            spec.gamma_gens[0] * (i as f64 / l as f64) + spec.gamma_gens[1] * (j as f64 / l as f64)
        })
        .collect();

    let multiply = |coeffs: &[c64], sign: f64| -> Vec<c64> {
        let mut data = vec![c64::new(0.0, 0.0); l * l];
        for (c, f) in coeffs.iter().zip(&freqs) {
            data[grid.slot(*f)] += c;
        }
        grid.transform(&mut data, &grid.inverse);
        for (x, z) in data.iter_mut().zip(&points) {
            *x *= potential(spec, params.beta, *z * sign);
        }
        grid.transform(&mut data, &grid.forward);
        let norm = (l * l) as f64;
        freqs.iter().map(|f| data[grid.slot(*f)] / norm).collect()
    };

    let (top, bottom) = v.split_at(b);
    let upper = multiply(bottom, 1.0);
    let lower = multiply(top, -1.0);
    let mut out = vec![c64::new(0.0, 0.0); 2 * b];
    for (i, idx) in basis.indices().iter().enumerate() {
        let d = params.h * dual_point(spec, *idx) - params.z_shift;
        out[i] = d * top[i] + upper[i];
        out[b + i] = d * bottom[i] + lower[i];
    }
    Ok(out)
}

/// Fourier coefficients of `a` and `b` on `e^{inx}` and the truncation
/// half-width.
#[derive(Clone, Debug, PartialEq)]
pub struct SeeleyParams {
    pub a_coeffs: BTreeMap<i64, c64>,
    pub b_coeffs: BTreeMap<i64, c64>,
    pub half_width: usize,
}

impl SeeleyParams {
    pub fn new(a_coeffs: BTreeMap<i64, c64>, b_coeffs: BTreeMap<i64, c64>, half_width: usize) -> Result<Self> {
        if a_coeffs.values().all(|c| c.norm() == 0.0) {
            return Err(invalid("Seeley coefficient a must not vanish identically"));
        }
        Ok(Self {
            a_coeffs,
            b_coeffs,
            half_width,
        })
    }
}

/// Galerkin matrix of `a f′ + b f` on `e^{inx}`, `|n| ≤ K`:
/// `entry(m, n) = â_{m−n}·(in) + b̂_{m−n}`.
pub fn assemble_seeley(params: &SeeleyParams) -> OperatorMatrix {
    let k = params.half_width as i64;
    let dim = (2 * k + 1) as usize;
    let zero = c64::new(0.0, 0.0);
    let m = Mat::<c64>::from_fn(dim, dim, |r, c| {
        let (mode_r, mode_c) = (r as i64 - k, c as i64 - k);
        let a = params.a_coeffs.get(&(mode_r - mode_c)).copied().unwrap_or(zero);
        let b = params.b_coeffs.get(&(mode_r - mode_c)).copied().unwrap_or(zero);
        a * c64::new(0.0, mode_c as f64) + b
    });
    OperatorMatrix::new(m, BlockStructure::Scalar, format!("circle-K{k}"))
}

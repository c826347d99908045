//! Dense eigenvalue and singular value computations.
//!
//! Everything here goes through faer's dense decompositions. Calls are
//! stateless and deterministic for identical input bits as long as faer's
//! global parallelism is left at a fixed setting.

use std::time::{Duration, Instant};

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};
use crate::models::OperatorMatrix;

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<c64>,
    pub dim: usize,
    pub wall_time: Duration,
}

/// Singular values in the order the decomposition produces them
/// (nonincreasing), with optional singular frames.
///
/// `left.col(i)` and `right.col(i)` pair with `descending[i]`:
/// `A·right_i = descending[i]·left_i`.
#[derive(Clone, Debug)]
pub struct SingularSpectrum {
    pub descending: Vec<f64>,
    pub left: Option<Mat<c64>>,
    pub right: Option<Mat<c64>>,
}

impl SingularSpectrum {
    /// `t₁ ≤ t₂ ≤ …`.
    pub fn ascending(&self) -> Vec<f64> {
        self.descending.iter().rev().copied().collect()
    }

    pub fn smallest(&self) -> f64 {
        self.descending.last().copied().unwrap_or(0.0)
    }

    pub fn largest(&self) -> f64 {
        self.descending.first().copied().unwrap_or(0.0)
    }
}

/// FNV-1a over the raw bits of the entries, column-major.
pub fn fingerprint(m: MatRef<'_, c64>) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    let mut feed = |x: u64| {
        for b in x.to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(m.nrows() as u64);
    feed(m.ncols() as u64);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            feed(z.re.to_bits());
            feed(z.im.to_bits());
        }
    }
    hash
}

fn decomposition_error(op: &'static str, m: MatRef<'_, c64>) -> Error {
    Error::Decomposition {
        op,
        dim: m.nrows(),
        fingerprint: fingerprint(m),
    }
}

pub fn eigenvalues_of(m: MatRef<'_, c64>) -> Result<SpectrumResult> {
    let start = Instant::now();
    let dim = m.nrows();
    let eigenvalues = if dim == 0 {
        Vec::new()
    } else {
        m.eigenvalues().map_err(|_| decomposition_error("eigenvalues", m))?
    };
    Ok(SpectrumResult {
        eigenvalues,
        dim,
        wall_time: start.elapsed(),
    })
}

pub fn eigenvalues(m: &OperatorMatrix) -> Result<SpectrumResult> {
    if !m.is_finite() {
        return Err(crate::error::invalid("matrix has non-finite entries"));
    }
    eigenvalues_of(m.entries.as_ref())
}

pub fn singular_values_of(m: MatRef<'_, c64>, with_vectors: bool) -> Result<SingularSpectrum> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(SingularSpectrum {
            descending: Vec::new(),
            left: with_vectors.then(|| Mat::zeros(m.nrows(), 0)),
            right: with_vectors.then(|| Mat::zeros(m.ncols(), 0)),
        });
    }
    if with_vectors {
        let svd = m.svd().map_err(|_| decomposition_error("svd", m))?;
        let descending = svd.S().column_vector().iter().map(|s| s.re).collect();
        Ok(SingularSpectrum {
            descending,
            left: Some(svd.U().to_owned()),
            right: Some(svd.V().to_owned()),
        })
    } else {
        let descending = m.singular_values().map_err(|_| decomposition_error("singular values", m))?;
        Ok(SingularSpectrum {
            descending,
            left: None,
            right: None,
        })
    }
}

pub fn singular_values(m: &OperatorMatrix) -> Result<SingularSpectrum> {
    singular_values_of(m.entries.as_ref(), true)
}

pub fn smallest_singular_value(m: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values_of(m, false)?.smallest())
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values_of(m, false)?.largest())
}

pub fn hs_norm(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// `log |det A|` via the singular values, finite for any nonsingular input.
pub fn log_abs_det(m: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values_of(m, false)?.descending.iter().map(|s| s.ln()).sum())
}

pub fn count_in_disk(s: &SpectrumResult, center: c64, radius: f64) -> usize {
    s.eigenvalues.iter().filter(|l| (**l - center).norm() <= radius).count()
}

//! The moiré lattice `Γ = 4π(iωZ ⊕ iω²Z)`, its dual `Γ*`, and finite boxes of
//! dual-lattice Fourier modes.
//!
//! A dual point is addressed by integer coordinates `(m, n)` with
//! `k = (mω + nω²)/√3`. The plane wave `e_k(z) = exp(i/2 (z k̄ + z̄ k))` is
//! Γ-periodic exactly when `γk̄ + γ̄k ∈ 4πZ` for both generators.

use std::f64::consts::PI;

use num_complex::Complex64 as c64;

use crate::error::{invalid, Result};

/// Lattice constants, all derived from `ω = e^{2πi/3}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub omega: c64,
    pub gamma_gens: [c64; 2],
    pub dual_gens: [c64; 2],
    pub cell_volume: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self::new()
    }
}

impl LatticeSpec {
    pub fn new() -> Self {
        let omega = c64::from_polar(1.0, 2.0 * PI / 3.0);
        let omega2 = omega * omega;
        let i = c64::i();
        let gamma_gens = [4.0 * PI * i * omega, 4.0 * PI * i * omega2];
        let s3 = 3f64.sqrt();
        let dual_gens = [omega / s3, omega2 / s3];
        let cell_volume = (gamma_gens[0] * gamma_gens[1].conj()).im.abs();
        Self {
            omega,
            gamma_gens,
            dual_gens,
            cell_volume,
        }
    }

    /// `ω^j` for any integer `j`.
    pub fn omega_pow(&self, j: i64) -> c64 {
        self.omega.powi(j.rem_euclid(3) as i32)
    }

    /// Half the duality pairing, `(γk̄ + γ̄k)/2 = Re(γk̄)`, for each generator.
    pub fn pairing(&self, k: c64) -> [f64; 2] {
        [(self.gamma_gens[0] * k.conj()).re, (self.gamma_gens[1] * k.conj()).re]
    }

    /// Integer torus frequencies `(p, q)` such that
    /// `e_k(sγ₁ + tγ₂) = exp(2πi(ps + qt))`.
    pub fn torus_frequency(&self, idx: DualIndex) -> (i64, i64) {
        let [a, b] = self.pairing(dual_point(self, idx));
        ((a / (2.0 * PI)).round() as i64, (b / (2.0 * PI)).round() as i64)
    }

    /// Inverse of [`dual_point`] on lattice points: the integer coordinates of
    /// `k`, or `None` if `k` is not within `tol` of a dual lattice point.
    pub fn locate(&self, k: c64, tol: f64) -> Option<DualIndex> {
        // Solve k = m·g₀ + n·g₁ as a real 2x2 system.
        let [g0, g1] = self.dual_gens;
        let det = g0.re * g1.im - g0.im * g1.re;
        let m = (k.re * g1.im - k.im * g1.re) / det;
        let n = (g0.re * k.im - g0.im * k.re) / det;
        let idx = DualIndex::new(m.round() as i64, n.round() as i64);
        ((dual_point(self, idx) - k).norm() <= tol).then_some(idx)
    }
}

/// Integer coordinates of a dual lattice point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualIndex {
    pub m: i64,
    pub n: i64,
}

impl DualIndex {
    pub const fn new(m: i64, n: i64) -> Self {
        Self { m, n }
    }
}

impl std::ops::Add for DualIndex {
    type Output = DualIndex;
    fn add(self, rhs: Self) -> Self {
        DualIndex::new(self.m + rhs.m, self.n + rhs.n)
    }
}

impl std::ops::Neg for DualIndex {
    type Output = DualIndex;
    fn neg(self) -> Self {
        DualIndex::new(-self.m, -self.n)
    }
}

/// `k = (mω + nω²)/√3`.
pub fn dual_point(spec: &LatticeSpec, idx: DualIndex) -> c64 {
    spec.dual_gens[0] * idx.m as f64 + spec.dual_gens[1] * idx.n as f64
}

/// Square box `|m|, |n| ≤ K` of dual modes, enumerated row-major with `m`
/// outermost and both coordinates ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncationBasis {
    half_width: usize,
    indices: Vec<DualIndex>,
}

impl TruncationBasis {
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn indices(&self) -> &[DualIndex] {
        &self.indices
    }

    /// Number of scalar modes, `(2K+1)²`.
    pub fn dim_scalar(&self) -> usize {
        self.indices.len()
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn contains(&self, idx: DualIndex) -> bool {
        let k = self.half_width as i64;
        idx.m.abs() <= k && idx.n.abs() <= k
    }

    pub fn index_of(&self, idx: DualIndex) -> Option<usize> {
        if !self.contains(idx) {
            return None;
        }
        let k = self.half_width as i64;
        let side = self.side() as i64;
        Some(((idx.m + k) * side + (idx.n + k)) as usize)
    }

    /// Stable identifier used to tag matrices assembled on this basis.
    pub fn id(&self) -> String {
        format!("box-K{}", self.half_width)
    }
}

pub fn enumerate_basis(_spec: &LatticeSpec, half_width: i64) -> Result<TruncationBasis> {
    if half_width < 0 {
        return Err(invalid(format!("truncation half-width must be nonnegative, got {half_width}")));
    }
    let k = half_width;
    let indices = (-k..=k).flat_map(|m| (-k..=k).map(move |n| DualIndex::new(m, n))).collect();
    Ok(TruncationBasis {
        half_width: half_width as usize,
        indices,
    })
}

/// The three translations applied by multiplication with `U(z)`.
///
/// `e^{(zω̄^j − z̄ω^j)/2} = e^{i/2 (z κ̄_j + z̄ κ_j)}` with `κ_j = iω^j`, so
/// `U e_k = Σ_j ω^j e_{k+κ_j}`. Multiplication by `U(−z)` uses `−κ_j` with the
/// same coefficients.
pub fn potential_shifts(spec: &LatticeSpec) -> [(DualIndex, c64); 3] {
    std::array::from_fn(|j| {
        let wj = spec.omega_pow(j as i64);
        let kappa = c64::i() * wj;
        let idx = spec.locate(kappa, 1e-9).expect("iω^j lies on the dual lattice");
        (idx, wj)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_is_primitive_cube_root() {
        let s = LatticeSpec::new();
        let w = s.omega;
        assert!((w * w * w - 1.0).norm() < 1e-14);
        assert!((1.0 + w + w * w).norm() < 1e-14);
        assert!(s.cell_volume > 0.0);
        let expected = 16.0 * PI * PI * 3f64.sqrt() / 2.0;
        assert!((s.cell_volume - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn dual_point_examples() {
        let s = LatticeSpec::new();
        assert_eq!(dual_point(&s, DualIndex::new(0, 0)), c64::new(0.0, 0.0));
        assert!((dual_point(&s, DualIndex::new(1, -1)) - c64::i()).norm() < 1e-12);
        assert!((dual_point(&s, DualIndex::new(1, 2)) - c64::i() * s.omega).norm() < 1e-12);
    }

    #[test]
    fn generators_pair_into_4pi_z() {
        let s = LatticeSpec::new();
        for m in -50..=50 {
            for n in -50..=50 {
                let k = dual_point(&s, DualIndex::new(m, n));
                for g in s.gamma_gens {
                    let p = g * k.conj() + g.conj() * k;
                    let r = p.re / (4.0 * PI);
                    assert!((r - r.round()).abs() * 4.0 * PI < 1e-9, "({m},{n})");
                    assert!(p.im.abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn basis_enumeration() {
        let s = LatticeSpec::new();
        let b = enumerate_basis(&s, 1).unwrap();
        assert_eq!(b.dim_scalar(), 9);
        assert_eq!(b.indices()[0], DualIndex::new(-1, -1));
        assert_eq!(b.indices()[8], DualIndex::new(1, 1));
        assert_eq!(enumerate_basis(&s, 7).unwrap().dim_scalar(), 225);
        assert_eq!(enumerate_basis(&s, 40).unwrap().dim_scalar(), 13122 / 2);
        assert_eq!(enumerate_basis(&s, 0).unwrap().dim_scalar(), 1);
        assert!(enumerate_basis(&s, -1).is_err());
    }

    #[test]
    fn index_lookup_is_bijective() {
        let s = LatticeSpec::new();
        let b = enumerate_basis(&s, 6).unwrap();
        for (i, idx) in b.indices().iter().enumerate() {
            assert_eq!(b.index_of(*idx), Some(i));
        }
        assert_eq!(b.index_of(DualIndex::new(7, 0)), None);
        let set: std::collections::HashSet<_> = b.indices().iter().collect();
        assert_eq!(set.len(), b.dim_scalar());
        assert_eq!(b, enumerate_basis(&s, 6).unwrap());
    }

    #[test]
    fn shifts_embed_to_i_omega_powers() {
        let s = LatticeSpec::new();
        let shifts = potential_shifts(&s);
        assert_eq!(shifts[0], (DualIndex::new(1, -1), c64::new(1.0, 0.0)));
        assert_eq!(shifts[1].0, DualIndex::new(1, 2));
        assert_eq!(shifts[2].0, DualIndex::new(-2, -1));
        let total = shifts.iter().fold(DualIndex::new(0, 0), |acc, (d, _)| acc + *d);
        assert_eq!(total, DualIndex::new(0, 0));
        for (j, (idx, coeff)) in shifts.iter().enumerate() {
            let k = dual_point(&s, *idx);
            assert!((k.norm() - 1.0).abs() < 1e-12);
            let wj = s.omega_pow(j as i64);
            assert!((k - c64::i() * wj).norm() < 1e-12);
            assert!((coeff - wj).norm() < 1e-15);
        }
    }

    #[test]
    fn kappa_zero_found_by_brute_force() {
        let s = LatticeSpec::new();
        let mut hits = vec![];
        for m in -4..=4 {
            for n in -4..=4 {
                if (dual_point(&s, DualIndex::new(m, n)) - c64::i()).norm() < 1e-12 {
                    hits.push(DualIndex::new(m, n));
                }
            }
        }
        assert_eq!(hits, vec![DualIndex::new(1, -1)]);
    }

    #[test]
    fn plane_waves_are_periodic() {
        let s = LatticeSpec::new();
        let k = dual_point(&s, DualIndex::new(2, -3));
        let z = c64::new(0.3, -1.7);
        let e = |z: c64| (c64::i() * 0.5 * (z * k.conj() + z.conj() * k)).exp();
        for g in s.gamma_gens {
            assert!((e(z + g) - e(z)).norm() < 1e-10);
        }
        let (p, q) = s.torus_frequency(DualIndex::new(2, -3));
        let (sx, tx) = (0.21, 0.67);
        let zz = s.gamma_gens[0] * sx + s.gamma_gens[1] * tx;
        let expect = (c64::i() * 2.0 * PI * (p as f64 * sx + q as f64 * tx)).exp();
        assert!((e(zz) - expect).norm() < 1e-10);
    }

    proptest::proptest! {
        #[test]
        fn lattice_is_closed_under_rotation(m in -50i64..50, n in -50i64..50) {
            let s = LatticeSpec::new();
            let idx = DualIndex::new(m, n);
            let k = dual_point(&s, idx);
            proptest::prop_assert_eq!(s.locate(k, 1e-9), Some(idx));
            let rotated = s.locate(s.omega * k, 1e-9);
            proptest::prop_assert!(rotated.is_some());
            proptest::prop_assert!((dual_point(&s, rotated.unwrap()).norm() - k.norm()).abs() < 1e-9);
        }

        #[test]
        fn pairing_lies_in_two_pi_integers(m in -50i64..50, n in -50i64..50) {
            let s = LatticeSpec::new();
            for a in s.pairing(dual_point(&s, DualIndex::new(m, n))) {
                let turns = a / (2.0 * PI);
                proptest::prop_assert!((turns - turns.round()).abs() < 1e-9);
            }
        }

        #[test]
        fn dual_point_is_additive(a in -30i64..30, b in -30i64..30, c in -30i64..30, d in -30i64..30) {
            let s = LatticeSpec::new();
            let (x, y) = (DualIndex::new(a, b), DualIndex::new(c, d));
            let sum = dual_point(&s, x + y) - dual_point(&s, x) - dual_point(&s, y);
            proptest::prop_assert!(sum.norm() < 1e-12);
        }
    }
}

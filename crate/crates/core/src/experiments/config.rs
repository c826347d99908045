//! JSON configuration for every experiment. Keys are snake_case, every field
//! has a default, and unknown keys are rejected.

use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64 as c64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::perturb::CutoffSpec;

/// Worker count for the task pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Threads {
    #[default]
    Auto,
    Count(usize),
}

impl Threads {
    pub fn resolve(self) -> usize {
        match self {
            Threads::Auto => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            Threads::Count(n) => n,
        }
    }
}

impl FromStr for Threads {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Threads::Count(n)),
            _ => Err(Error::Config(format!("threads must be a positive integer or \"auto\", got {s:?}"))),
        }
    }
}

impl Serialize for Threads {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threads::Auto => serializer.serialize_str("auto"),
            Threads::Count(n) => serializer.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Threads {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Text(String),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Count(n) => n.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// `THREADS` from the environment when no explicit value is given.
pub fn threads_from_env() -> Result<Option<Threads>> {
    match std::env::var("THREADS") {
        Ok(v) => v.parse().map(Some),
        Err(_) => Ok(None),
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

/// Default grid of `1/h` values: `0.40, 0.42, …, 2.50`.
pub fn default_inv_h_grid() -> Vec<f64> {
    (0..=105).map(|i| (40 + 2 * i) as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub inv_h_grid: Vec<f64>,
    pub beta: c64,
    pub k: usize,
    pub disk_center: c64,
    pub disk_radius: f64,
    pub delta_list: Vec<f64>,
    pub trials_per_point: usize,
    pub root_seed: u64,
    pub threads: Threads,
    /// `None` selects the cutoff derived from the potential bound.
    pub cutoff: Option<CutoffSpec>,
    pub spike_window: usize,
    /// Detrended ratio a local maximum must reach to be flagged.
    pub spike_ratio: f64,
    /// Ratio used when checking that perturbed scans carry no spike.
    pub washout_ratio: f64,
    /// Half-width of the window around each reference magic value.
    pub magic_tolerance: f64,
    pub magic_reference: Vec<f64>,
    /// When false, `wall_ms` is written as 0 so outputs are byte-stable.
    pub record_timing: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            inv_h_grid: default_inv_h_grid(),
            beta: c64::new(1.0, 0.0),
            k: 7,
            disk_center: c64::new(0.0, 0.0),
            disk_radius: 2.0,
            delta_list: vec![0.0, 1e-5, 1e-1],
            trials_per_point: 1,
            root_seed: 0,
            threads: Threads::Auto,
            cutoff: None,
            spike_window: 11,
            spike_ratio: 3.0,
            washout_ratio: 1.5,
            magic_tolerance: 0.05,
            magic_reference: vec![0.586, 2.221],
            record_timing: true,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inv_h_grid.is_empty() {
            return Err(Error::Config("inv_h_grid must not be empty".into()));
        }
        if !self.inv_h_grid.windows(2).all(|w| w[0] < w[1]) || !self.inv_h_grid.iter().all(|x| *x > 0.0 && x.is_finite()) {
            return Err(Error::Config("inv_h_grid must be positive and strictly ascending".into()));
        }
        if self.trials_per_point == 0 {
            return Err(Error::Config("trials_per_point must be at least 1".into()));
        }
        if self.delta_list.is_empty() || !self.delta_list.iter().all(|d| *d >= 0.0 && d.is_finite()) {
            return Err(Error::Config("delta_list must hold nonnegative reals".into()));
        }
        if self.disk_radius.is_nan() || self.disk_radius < 0.0 {
            return Err(Error::Config("disk_radius must be nonnegative".into()));
        }
        if self.spike_window == 0 {
            return Err(Error::Config("spike_window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WashoutConfig {
    pub inv_h: f64,
    pub beta: c64,
    pub k: usize,
    pub delta_list: Vec<f64>,
    pub n_eigs: usize,
    pub root_seed: u64,
    pub threads: Threads,
    pub cutoff: Option<CutoffSpec>,
    /// Move `inv_h` to the nearby minimizer of `σ_min(D_h − probe)`.
    pub refine_magic: bool,
    pub refine_half_width: f64,
    pub probe: c64,
    /// Central radius; `None` uses half the smallest nonzero `h|k|`.
    pub central_radius: Option<f64>,
    pub accumulation_ratio: f64,
}

impl Default for WashoutConfig {
    fn default() -> Self {
        Self {
            inv_h: 0.586,
            beta: c64::new(1.0, 0.0),
            k: 12,
            delta_list: vec![0.0, 1e-7, 1e-4, 1e-2],
            n_eigs: 600,
            root_seed: 0,
            threads: Threads::Auto,
            cutoff: None,
            refine_magic: true,
            refine_half_width: 0.01,
            probe: c64::new(0.3, 0.2),
            central_radius: None,
            accumulation_ratio: 3.0,
        }
    }
}

/// Unnamed constants of the probability bounds and the regime parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
    pub alpha: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            kappa: 4.0,
            alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
    pub alpha: f64,
    /// `h` values for the norm-scaling fit.
    pub norm_h_grid: Vec<f64>,
    /// `h` values for the exponent fit with `δ = h^κ`.
    pub exponent_h_grid: Vec<f64>,
    pub cutoff: CutoffSpec,
    /// `(h, δ)` pairs evaluated individually in the report.
    pub points: Vec<(f64, f64)>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let p = BoundParams::default();
        Self {
            c0: p.c0,
            c1: p.c1,
            c2: p.c2,
            kappa: p.kappa,
            alpha: p.alpha,
            norm_h_grid: vec![0.2, 0.1, 0.05, 0.025],
            exponent_h_grid: vec![0.05, 0.025, 0.0125, 0.00625],
            cutoff: CutoffSpec::new(1.0, 2.0, crate::perturb::CutoffProfile::SmoothBump).expect("ordered radii"),
            points: vec![(0.5, 1e-3), (0.25, 1e-4), (0.1, 1e-5)],
        }
    }
}

impl BoundsConfig {
    pub fn params(&self) -> BoundParams {
        BoundParams {
            c0: self.c0,
            c1: self.c1,
            c2: self.c2,
            kappa: self.kappa,
            alpha: self.alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsTailConfig {
    pub dim: usize,
    pub n_trials: usize,
    /// Linearly spaced thresholds between the extreme samples.
    pub n_thresholds: usize,
    pub min_hits: usize,
}

impl Default for HsTailConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            n_trials: 2000,
            n_thresholds: 100,
            min_hits: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetTailConfig {
    pub dim_n: usize,
    pub n_trials: usize,
    pub per_decade: usize,
    pub min_hits: usize,
    /// Diagonal of `D`; empty means `D = 0`.
    pub d_diagonal: Vec<c64>,
}

impl Default for DetTailConfig {
    fn default() -> Self {
        Self {
            dim_n: 20,
            n_trials: 5000,
            per_decade: 10,
            min_hits: 20,
            d_diagonal: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingularTailConfig {
    pub inv_h: f64,
    pub beta: c64,
    pub k: usize,
    pub z0: c64,
    pub alpha: f64,
    pub delta: f64,
    pub n_trials: usize,
    pub per_decade: usize,
    pub min_hits: usize,
    pub cutoff: Option<CutoffSpec>,
    pub refine_magic: bool,
    pub probe: c64,
}

impl Default for SingularTailConfig {
    fn default() -> Self {
        Self {
            inv_h: 0.586,
            beta: c64::new(1.0, 0.0),
            k: 5,
            z0: c64::new(0.0, 0.0),
            alpha: 0.01,
            delta: 1e-3,
            n_trials: 2000,
            per_decade: 10,
            min_hits: 20,
            cutoff: None,
            refine_magic: false,
            probe: c64::new(0.3, 0.2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsConfig {
    pub root_seed: u64,
    pub threads: Threads,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub hs: HsTailConfig,
    pub det: DetTailConfig,
    pub smallest_singular: SingularTailConfig,
}

impl Default for TailsConfig {
    fn default() -> Self {
        Self {
            root_seed: 0,
            threads: Threads::default(),
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            hs: HsTailConfig::default(),
            det: DetTailConfig::default(),
            smallest_singular: SingularTailConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrushinConfig {
    pub root_seed: u64,
    pub threads: Threads,
    pub random_matrices: usize,
    pub max_dim: usize,
    pub tbg_k: usize,
    pub tbg_inv_h: Vec<f64>,
    pub beta: c64,
    pub z0: c64,
    pub alpha: f64,
    pub epsilon0: f64,
    pub schur_draws: usize,
    pub schur_delta: f64,
    pub neumann_deltas: Vec<f64>,
    pub cutoff: Option<CutoffSpec>,
}

impl Default for GrushinConfig {
    fn default() -> Self {
        Self {
            root_seed: 0,
            threads: Threads::Auto,
            random_matrices: 50,
            max_dim: 100,
            tbg_k: 4,
            tbg_inv_h: vec![0.586, 1.0, 1.5],
            beta: c64::new(1.0, 0.0),
            z0: c64::new(0.0, 0.0),
            alpha: 0.01,
            epsilon0: 0.5,
            schur_draws: 200,
            schur_delta: 1e-3,
            neumann_deltas: vec![1e-3, 1e-4, 1e-5],
            cutoff: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub root_seed: u64,
    pub k_values: Vec<usize>,
    pub vectors_per_k: usize,
    pub h: f64,
    pub beta: c64,
    pub z_shift: c64,
    pub seeley_k: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            root_seed: 0,
            k_values: vec![3, 5, 8],
            vectors_per_k: 20,
            h: 1.0 / 0.586,
            beta: c64::new(1.0, 0.0),
            z_shift: c64::new(0.1, -0.2),
            seeley_k: 64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threads_parse() {
        assert_eq!("auto".parse::<Threads>().unwrap(), Threads::Auto);
        assert_eq!("4".parse::<Threads>().unwrap(), Threads::Count(4));
        assert!("0".parse::<Threads>().is_err());
        assert!("many".parse::<Threads>().is_err());
        let c: ScanConfig = parse(r#"{"threads": 3}"#).unwrap();
        assert_eq!(c.threads, Threads::Count(3));
        let c: ScanConfig = parse(r#"{"threads": "auto"}"#).unwrap();
        assert_eq!(c.threads, Threads::Auto);
    }

    #[test]
    fn default_grid_spans_range() {
        let g = default_inv_h_grid();
        assert_eq!(g.len(), 106);
        assert_eq!((g[0], g[105]), (0.4, 2.5));
        assert!(g.windows(2).all(|w| (w[1] - w[0] - 0.02).abs() < 1e-12));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse::<ScanConfig>(r#"{"k": 7, "kk": 1}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(parse::<BoundsConfig>(r#"{"C0": 1}"#).is_err());
        assert!(parse::<TailsConfig>(r#"{"hs": {"dimension": 3}}"#).is_err());
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let c: ScanConfig = parse(r#"{"k": 3, "beta": [0.5, 0.0], "delta_list": [0.0]}"#).unwrap();
        assert_eq!(c.k, 3);
        assert_eq!(c.beta, c64::new(0.5, 0.0));
        assert_eq!(c.inv_h_grid.len(), 106);
        let round: ScanConfig = parse(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
        let b: BoundsConfig =
            parse(r#"{"kappa": 3.0, "cutoff": {"plateau_radius": 1.0, "support_radius": 2.0, "profile": "hard_indicator"}}"#).unwrap();
        assert_eq!(b.params().kappa, 3.0);
    }

    #[test]
    fn scan_validation() {
        let mut c = ScanConfig::default();
        assert!(c.validate().is_ok());
        c.inv_h_grid = vec![1.0, 0.5];
        assert!(c.validate().is_err());
        c.inv_h_grid = vec![];
        assert!(c.validate().is_err());
        let c = ScanConfig {
            trials_per_point: 0,
            ..ScanConfig::default()
        };
        assert!(c.validate().is_err());
    }
}

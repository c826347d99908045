//! Eigenvalue-count scans over `1/h` and the central-accumulation washout.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ScanConfig, WashoutConfig};
use super::resolve_cutoff;
use super::stats::{mean, moving_median};
use crate::error::Result;
use crate::lattice::{dual_point, enumerate_basis, LatticeSpec, TruncationBasis};
use crate::models::{assemble_dh, ChiralModelParams, OperatorMatrix};
use crate::perturb::{build_multiplier, derive_seed, PerturbationDraw};
use crate::spectral::{count_in_disk, eigenvalues, smallest_singular_value};

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub inv_h: f64,
    pub delta: f64,
    pub trial: usize,
    /// `None` on perturbation-free rows.
    pub seed: Option<u64>,
    pub count_in_disk: Option<usize>,
    pub min_abs_eig: Option<f64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    /// Number of Gaussian matrices drawn.
    pub gaussian_draws: usize,
}

impl ScanResult {
    /// Mean count per grid point for one `δ`, `NaN` where every trial failed.
    pub fn mean_counts(&self, grid: &[f64], delta: f64) -> Vec<f64> {
        grid.iter()
            .map(|x| {
                let counts: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.inv_h == *x && r.delta == delta)
                    .filter_map(|r| r.count_in_disk.map(|c| c as f64))
                    .collect();
                if counts.is_empty() {
                    f64::NAN
                } else {
                    mean(&counts)
                }
            })
            .collect()
    }
}

struct Task {
    point: usize,
    delta_index: usize,
    trial: usize,
}

/// Expected number of scan rows.
pub fn scan_row_count(config: &ScanConfig) -> usize {
    let per_point: usize = config
        .delta_list
        .iter()
        .map(|d| if *d == 0.0 { 1 } else { config.trials_per_point })
        .sum();
    config.inv_h_grid.len() * per_point
}

/// For each `(1/h, δ, trial)`: assemble `D_h(β)`, add `δ S₁GS₂`, and count
/// eigenvalues in the disk. Rows come back in task order.
pub fn magic_scan(config: &ScanConfig) -> Result<ScanResult> {
    config.validate()?;
    let spec = LatticeSpec::new();
    let basis = enumerate_basis(&spec, config.k as i64)?;
    let cutoff = if config.delta_list.iter().any(|d| *d != 0.0) {
        Some(resolve_cutoff(&spec, config.beta, config.cutoff)?)
    } else {
        None
    };
    let draws = AtomicUsize::new(0);

    let mut tasks = Vec::new();
    for point in 0..config.inv_h_grid.len() {
        for (delta_index, delta) in config.delta_list.iter().enumerate() {
            let trials = if *delta == 0.0 { 1 } else { config.trials_per_point };
            for trial in 0..trials {
                tasks.push(Task { point, delta_index, trial });
            }
        }
    }

    let run = |task: &Task| -> ScanRow {
        let inv_h = config.inv_h_grid[task.point];
        let delta = config.delta_list[task.delta_index];
        let seed = (delta != 0.0).then(|| derive_seed(config.root_seed, &[task.point as u64, task.delta_index as u64, task.trial as u64]));
        let start = Instant::now();
        let outcome = (|| -> Result<(usize, f64)> {
            let h = 1.0 / inv_h;
            let mut a = assemble_dh(&spec, &ChiralModelParams::new(h, config.beta)?, &basis);
            if let (Some(seed), Some(cutoff)) = (seed, cutoff.as_ref()) {
                let m = build_multiplier(&spec, cutoff, &basis, h);
                let draw = PerturbationDraw::sample(&m, &m, delta, seed)?;
                draws.fetch_add(1, Ordering::Relaxed);
                a = a.perturbed(delta, &draw.q_matrix)?;
            }
            let spectrum = eigenvalues(&a)?;
            let min_abs = spectrum.eigenvalues.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
            Ok((count_in_disk(&spectrum, config.disk_center, config.disk_radius), min_abs))
        })();
        let wall_ms = if config.record_timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let (count_in_disk, min_abs_eig, error) = match outcome {
            Ok((c, m)) => (Some(c), Some(m), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        ScanRow {
            inv_h,
            delta,
            trial: task.trial,
            seed,
            count_in_disk,
            min_abs_eig,
            wall_ms,
            error,
        }
    };
    let rows: Vec<ScanRow> = tasks.par_iter().map(run).collect();
    Ok(ScanResult {
        rows,
        gaussian_draws: draws.into_inner(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spike {
    pub index: usize,
    pub inv_h: f64,
    pub count: f64,
    pub baseline: f64,
    pub ratio: f64,
}

/// Detrended ratio `count / moving median` per grid point.
pub fn detrended_ratio(counts: &[f64], window: usize) -> Vec<f64> {
    let baseline = moving_median(counts, window);
    counts
        .iter()
        .zip(&baseline)
        .map(|(c, b)| {
            if *b > 0.0 {
                c / b
            } else if *c > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        })
        .collect()
}

/// Interior local maxima of the count series whose detrended ratio reaches
/// `ratio`. A run of equal values counts once, at its midpoint, and only if
/// both neighbouring values are strictly smaller.
pub fn detect_spikes(grid: &[f64], counts: &[f64], window: usize, ratio: f64) -> Vec<Spike> {
    let baseline = moving_median(counts, window);
    let ratios = detrended_ratio(counts, window);
    let n = counts.len();
    let mut maxima = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && counts[end + 1] == counts[start] {
            end += 1;
        }
        if start > 0 && end + 1 < n && counts[start - 1] < counts[start] && counts[end + 1] < counts[start] {
            maxima.push((start + end) / 2);
        }
        start = end + 1;
    }
    maxima
        .into_iter()
        .filter(|&i| ratios[i] >= ratio)
        .map(|i| Spike {
            index: i,
            inv_h: grid[i],
            count: counts[i],
            baseline: baseline[i],
            ratio: ratios[i],
        })
        .collect()
}

/// Largest detrended ratio among local maxima within `tol` of `center`.
pub fn peak_ratio_near(grid: &[f64], counts: &[f64], window: usize, center: f64, tol: f64) -> f64 {
    detect_spikes(grid, counts, window, 0.0)
        .iter()
        .filter(|s| (s.inv_h - center).abs() <= tol)
        .map(|s| s.ratio)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct MagicProbe {
    pub reference: f64,
    /// Largest detrended ratio among local maxima within the tolerance.
    pub peak_ratio: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaSummary {
    pub delta: f64,
    pub mean_counts: Vec<f64>,
    pub spikes: Vec<Spike>,
    pub probes: Vec<MagicProbe>,
    /// Exactly one flagged spike per reference value and none elsewhere.
    pub magic_resolved: bool,
    /// Every peak ratio near a reference stays below the washout ratio.
    pub washed_out: bool,
}

/// Spike analysis of the mean count series for every `δ` in the scan.
pub fn summarize_scan(config: &ScanConfig, result: &ScanResult) -> Vec<DeltaSummary> {
    let grid = &config.inv_h_grid;
    config
        .delta_list
        .iter()
        .map(|delta| {
            let counts = result.mean_counts(grid, *delta);
            let spikes = detect_spikes(grid, &counts, config.spike_window, config.spike_ratio);
            let probes: Vec<MagicProbe> = config
                .magic_reference
                .iter()
                .map(|r| MagicProbe {
                    reference: *r,
                    peak_ratio: peak_ratio_near(grid, &counts, config.spike_window, *r, config.magic_tolerance),
                    flagged: spikes.iter().any(|s| (s.inv_h - r).abs() <= config.magic_tolerance),
                })
                .collect();
            let magic_resolved = spikes.len() == probes.len() && probes.iter().all(|p| p.flagged);
            let washed_out = probes.iter().all(|p| p.peak_ratio < config.washout_ratio);
            DeltaSummary {
                delta: *delta,
                mean_counts: counts,
                spikes,
                probes,
                magic_resolved,
                washed_out,
            }
        })
        .collect()
}

/// Golden-section minimization of `σ_min(D_h(β) − probe)` over `1/h` in
/// `[lo, hi]`.
pub fn locate_magic(spec: &LatticeSpec, basis: &TruncationBasis, beta: c64, probe: c64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let sigma = |inv_h: f64| -> Result<f64> {
        let p = ChiralModelParams::new(1.0 / inv_h, beta)?;
        smallest_singular_value(assemble_dh(spec, &p, basis).shifted(probe).entries.as_ref())
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (lo, hi);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (sigma(x1)?, sigma(x2)?);
    while hi - lo > 1e-12 * hi.abs().max(1.0) {
        if f1 < f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - g * (hi - lo);
            f1 = sigma(x1)?;
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + g * (hi - lo);
            f2 = sigma(x2)?;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok((x, sigma(x)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct WashoutRow {
    pub delta: f64,
    pub seed: Option<u64>,
    /// The `n_eigs` eigenvalues of smallest modulus, ascending in modulus.
    pub eigenvalues: Vec<c64>,
    pub central_count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct WashoutTable {
    pub inv_h_requested: f64,
    pub inv_h: f64,
    /// `σ_min(D_h − probe)` at the `1/h` used.
    pub probe_sigma_min: f64,
    pub central_radius: f64,
    pub k: usize,
    pub dim: usize,
    pub rows: Vec<WashoutRow>,
}

impl WashoutTable {
    pub fn count(&self, delta: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.delta == delta).map(|r| r.central_count)
    }
}

/// Half the smallest nonzero `h|k|`, i.e. `h/(2√3)`.
pub fn default_central_radius(spec: &LatticeSpec, h: f64) -> f64 {
    let kmin = dual_point(spec, crate::lattice::DualIndex::new(1, 0)).norm();
    0.5 * h * kmin
}

/// The `n_eigs` smallest-modulus eigenvalues of `D_h(β) + δS₁GS₂` per `δ`.
pub fn washout_experiment(config: &WashoutConfig) -> Result<WashoutTable> {
    let spec = LatticeSpec::new();
    let basis = enumerate_basis(&spec, config.k as i64)?;
    let cutoff = resolve_cutoff(&spec, config.beta, config.cutoff)?;
    let (inv_h, probe_sigma_min) = if config.refine_magic {
        let w = config.refine_half_width;
        locate_magic(&spec, &basis, config.beta, config.probe, config.inv_h - w, config.inv_h + w)?
    } else {
        let p = ChiralModelParams::new(1.0 / config.inv_h, config.beta)?;
        let s = smallest_singular_value(assemble_dh(&spec, &p, &basis).shifted(config.probe).entries.as_ref())?;
        (config.inv_h, s)
    };
    let h = 1.0 / inv_h;
    let a: OperatorMatrix = assemble_dh(&spec, &ChiralModelParams::new(h, config.beta)?, &basis);
    let m = build_multiplier(&spec, &cutoff, &basis, h);
    let radius = config.central_radius.unwrap_or_else(|| default_central_radius(&spec, h));

    let rows = config
        .delta_list
        .par_iter()
        .enumerate()
        .map(|(i, delta)| -> Result<WashoutRow> {
            let seed = (*delta != 0.0).then(|| derive_seed(config.root_seed, &[i as u64]));
            let op = match seed {
                Some(s) => a.perturbed(*delta, &PerturbationDraw::sample(&m, &m, *delta, s)?.q_matrix)?,
                None => a.clone(),
            };
            let spectrum = eigenvalues(&op)?;
            let central_count = count_in_disk(&spectrum, c64::new(0.0, 0.0), radius);
            let mut eigs = spectrum.eigenvalues;
            eigs.sort_by(|x, y| {
                x.norm()
                    .total_cmp(&y.norm())
                    .then(x.re.total_cmp(&y.re))
                    .then(x.im.total_cmp(&y.im))
            });
            eigs.truncate(config.n_eigs);
            Ok(WashoutRow {
                delta: *delta,
                seed,
                eigenvalues: eigs,
                central_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WashoutTable {
        inv_h_requested: config.inv_h,
        inv_h,
        probe_sigma_min,
        central_radius: radius,
        k: config.k,
        dim: a.dim(),
        rows,
    })
}

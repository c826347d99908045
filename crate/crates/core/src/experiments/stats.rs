//! Estimators shared by the Monte Carlo experiments.

use serde::Serialize;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `hits` successes out of `n`.
pub fn wilson_interval(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (n, p) = (n as f64, hits as f64 / n as f64);
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// `P(X ≤ a)`, nondecreasing in `a`.
    Cdf,
    /// `P(X ≥ a)`, nonincreasing in `a`.
    Survival,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailEstimate {
    pub kind: TailKind,
    pub thresholds: Vec<f64>,
    pub hits: Vec<usize>,
    pub empirical_probability: Vec<f64>,
    pub wilson_ci: Vec<(f64, f64)>,
    pub n_trials: usize,
}

impl TailEstimate {
    /// Tallies `samples` against ascending `thresholds`.
    pub fn from_samples(samples: &[f64], thresholds: &[f64], kind: TailKind) -> Self {
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let hits: Vec<usize> = thresholds
            .iter()
            .map(|a| match kind {
                TailKind::Cdf => sorted.partition_point(|x| x <= a),
                TailKind::Survival => n - sorted.partition_point(|x| x < a),
            })
            .collect();
        let empirical_probability = hits.iter().map(|h| if n == 0 { 0.0 } else { *h as f64 / n as f64 }).collect();
        let wilson_ci = hits.iter().map(|h| wilson_interval(*h, n)).collect();
        Self {
            kind,
            thresholds: thresholds.to_vec(),
            hits,
            empirical_probability,
            wilson_ci,
            n_trials: n,
        }
    }

    /// Monotone in the direction appropriate to the tail kind.
    pub fn is_monotone(&self) -> bool {
        self.empirical_probability.windows(2).all(|w| match self.kind {
            TailKind::Cdf => w[0] <= w[1],
            TailKind::Survival => w[0] >= w[1],
        })
    }

    /// Log–log least-squares slope of `P̂` against the threshold over the
    /// decade `[a₀, 10a₀]`, where `a₀` is the smallest threshold with at least
    /// `min_hits` hits.
    pub fn smallest_decade_slope(&self, min_hits: usize) -> Option<f64> {
        let start = self.hits.iter().position(|h| *h >= min_hits)?;
        let a0 = self.thresholds[start];
        let (xs, ys): (Vec<f64>, Vec<f64>) = (start..self.thresholds.len())
            .filter(|&i| self.thresholds[i] <= 10.0 * a0 * (1.0 + 1e-12) && self.hits[i] > 0)
            .map(|i| (self.thresholds[i].ln(), self.empirical_probability[i].ln()))
            .unzip();
        least_squares_slope(&xs, &ys)
    }
}

/// `per_decade` log-spaced points from `lo` to `hi`, inclusive.
pub fn log_space(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && per_decade > 0);
    let steps = ((hi / lo).log10() * per_decade as f64).ceil() as usize;
    (0..=steps).map(|i| lo * 10f64.powf(i as f64 / per_decade as f64)).collect()
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Centered moving median; the window shrinks at the ends.
pub fn moving_median(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            let mut w: Vec<f64> = values[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            let m = w.len();
            if m % 2 == 1 {
                w[m / 2]
            } else {
                0.5 * (w[m / 2 - 1] + w[m / 2])
            }
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
        let (lo, hi) = wilson_interval(0, 20);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.1611).abs() < 1e-4);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn tallies() {
        let s = [1.0, 2.0, 2.0, 5.0];
        let cdf = TailEstimate::from_samples(&s, &[0.0, 2.0, 10.0], TailKind::Cdf);
        assert_eq!(cdf.hits, vec![0, 3, 4]);
        let sf = TailEstimate::from_samples(&s, &[0.0, 2.0, 10.0], TailKind::Survival);
        assert_eq!(sf.hits, vec![4, 3, 0]);
        assert!(cdf.is_monotone() && sf.is_monotone());
    }

    #[test]
    fn slope_of_power_law_cdf() {
        // uniform on [0, 1]: P(X ≤ a) = a
        let samples: Vec<f64> = (0..100_000).map(|i| (i as f64 + 0.5) / 100_000.0).collect();
        let est = TailEstimate::from_samples(&samples, &log_space(1e-4, 1.0, 10), TailKind::Cdf);
        let slope = est.smallest_decade_slope(20).unwrap();
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn moving_median_flattens_isolated_peak() {
        let mut v = vec![1.0; 21];
        v[10] = 9.0;
        let m = moving_median(&v, 11);
        assert!(m.iter().all(|x| *x == 1.0));
        assert_eq!(moving_median(&[3.0, 1.0], 11), vec![2.0, 2.0]);
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e-3, 1.0, 4);
        assert_eq!(v.len(), 13);
        assert!((v[12] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn estimates_are_monotone(samples in proptest::collection::vec(0.0f64..100.0, 1..200)) {
            let thresholds = log_space(0.01, 100.0, 5);
            prop_assert!(TailEstimate::from_samples(&samples, &thresholds, TailKind::Cdf).is_monotone());
            prop_assert!(TailEstimate::from_samples(&samples, &thresholds, TailKind::Survival).is_monotone());
        }

        #[test]
        fn wilson_contains_point_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
            let hits = ((n as f64) * frac) as usize;
            let (lo, hi) = wilson_interval(hits, n);
            let p = hits as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }
}

//! Goodness-of-fit measures for enriched series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{percentile_sorted, sorted, Scalar};
use crate::series::samples_per_interval;

pub const DEFAULT_PERCENTILES: [f64; 11] = [0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0, 99.0, 100.0];

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared<T: Scalar>(actual: &[T], predicted: &[T]) -> Result<T> {
    if actual.len() != predicted.len() || actual.len() < 2 {
        return Err(Error::Input(format!(
            "r_squared needs two equal series of length >= 2, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    let n = T::of_usize(actual.len());
    let mean = actual.iter().copied().sum::<T>() / n;
    let ss_tot: T = actual.iter().map(|&y| (y - mean) * (y - mean)).sum();
    if !(ss_tot > T::zero()) {
        return Err(Error::Numerical("r_squared is undefined: actual values are all equal".into()));
    }
    let ss_res: T = actual.iter().zip(predicted).map(|(&y, &p)| (y - p) * (y - p)).sum();
    Ok(T::one() - ss_res / ss_tot)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PercentileRow<T> {
    pub percentile: T,
    pub actual: T,
    pub enriched: T,
    pub abs_diff: T,
}

pub fn percentile_compare<T: Scalar>(actual: &[T], enriched: &[T], percentiles: &[T]) -> Result<Vec<PercentileRow<T>>> {
    if actual.is_empty() || enriched.is_empty() {
        return Err(Error::Input("percentile comparison needs non-empty samples".into()));
    }
    if let Some(p) = percentiles.iter().find(|p| !(**p >= T::zero() && **p <= T::of(100.0))) {
        return Err(Error::Input(format!("percentile {p} outside [0, 100]")));
    }
    let a = sorted(actual);
    let e = sorted(enriched);
    Ok(percentiles
        .iter()
        .map(|&p| {
            let qa = percentile_sorted(&a, p).expect("non-empty");
            let qe = percentile_sorted(&e, p).expect("non-empty");
            PercentileRow { percentile: p, actual: qa, enriched: qe, abs_diff: (qa - qe).abs() }
        })
        .collect())
}

/// Wasserstein-1 distance between the empirical distributions of `a` and
/// `b`: the integral of `|F_a^{-1}(u) - F_b^{-1}(u)|` over `u` in `[0, 1]`.
/// For equal sizes this is the mean absolute difference of sorted samples.
pub fn wasserstein1<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("wasserstein distance needs non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Input("wasserstein distance needs finite samples".into()));
    }
    let sa = sorted(a);
    let sb = sorted(b);
    let (n, m) = (sa.len(), sb.len());
    if n == m {
        let s: T = sa.iter().zip(&sb).map(|(&x, &y)| (x - y).abs()).sum();
        return Ok(s / T::of_usize(n));
    }
    // Walk the merged breakpoints i/n and j/m in integer units of 1/(n m).
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0usize;
    let mut acc = T::zero();
    let end = n * m;
    while pos < end {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        acc += T::of_usize(next - pos) * (sa[i] - sb[j]).abs();
        pos = next;
        if next == next_a {
            i += 1;
        }
        if next == next_b {
            j += 1;
        }
    }
    Ok(acc / T::of_usize(end))
}

/// Counts of both sample sets over shared equal-width bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Histogram<T> {
    pub edges: Vec<T>,
    pub actual: Vec<u64>,
    pub enriched: Vec<u64>,
}

impl<T: Scalar> Histogram<T> {
    pub fn build(actual: &[T], enriched: &[T], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let all = actual.iter().chain(enriched);
        let lo = all.clone().copied().fold(T::infinity(), T::min);
        let hi = all.copied().fold(T::neg_infinity(), T::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Input("histogram needs finite, non-empty samples".into()));
        }
        let width = if hi > lo { (hi - lo) / T::of_usize(bins) } else { T::one() };
        let edges = (0..=bins).map(|k| lo + width * T::of_usize(k)).collect();
        let count = |xs: &[T]| {
            let mut c = vec![0u64; bins];
            for &x in xs {
                let k = ((x - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1);
                c[k] += 1;
            }
            c
        };
        Ok(Self { edges, actual: count(actual), enriched: count(enriched) })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lo_kw", "bin_hi_kw", "actual", "enriched"])?;
        for k in 0..self.actual.len() {
            w.write_record([
                self.edges[k].to_string(),
                self.edges[k + 1].to_string(),
                self.actual[k].to_string(),
                self.enriched[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ValidationReport<T> {
    /// Enriched vs actual interval maxima; `None` when undefined.
    pub r2_max: Option<T>,
    pub r2_min: Option<T>,
    pub percentile_table: Vec<PercentileRow<T>>,
    /// Per-interval distance of enriched to actual samples, kW.
    pub wasserstein_per_hour: Vec<T>,
    /// Same distance for a constant series at the interval average.
    pub baseline_wasserstein_per_hour: Vec<T>,
    pub histogram: Histogram<T>,
}

impl<T: Scalar> ValidationReport<T> {
    /// Fraction of intervals where enrichment beats the constant baseline.
    pub fn fraction_beating_baseline(&self) -> f64 {
        let wins = self
            .wasserstein_per_hour
            .iter()
            .zip(&self.baseline_wasserstein_per_hour)
            .filter(|(e, b)| e < b)
            .count();
        wins as f64 / self.wasserstein_per_hour.len().max(1) as f64
    }
}

/// Compares two aligned high-resolution series, interval by interval.
pub fn validate<T: Scalar>(
    actual: &[T],
    enriched: &[T],
    high_dt: i64,
    low_dt: i64,
    percentiles: &[T],
    bins: usize,
) -> Result<ValidationReport<T>> {
    if actual.len() != enriched.len() {
        return Err(Error::Input(format!(
            "actual has {} samples but enriched has {}",
            actual.len(),
            enriched.len()
        )));
    }
    let n = samples_per_interval(high_dt, low_dt)?;
    if actual.len() < n {
        return Err(Error::Input(format!("{} samples do not fill one interval of {n}", actual.len())));
    }
    let mut maxima = (Vec::new(), Vec::new());
    let mut minima = (Vec::new(), Vec::new());
    let mut w = Vec::new();
    let mut base = Vec::new();
    for (a, e) in actual.chunks_exact(n).zip(enriched.chunks_exact(n)) {
        let fold = |xs: &[T], f: fn(T, T) -> T, init: T| xs.iter().copied().fold(init, f);
        maxima.0.push(fold(a, T::max, T::neg_infinity()));
        maxima.1.push(fold(e, T::max, T::neg_infinity()));
        minima.0.push(fold(a, T::min, T::infinity()));
        minima.1.push(fold(e, T::min, T::infinity()));
        w.push(wasserstein1(a, e)?);
        let avg = a.iter().copied().sum::<T>() / T::of_usize(n);
        base.push(wasserstein1(a, &[avg])?);
    }
    Ok(ValidationReport {
        r2_max: r_squared(&maxima.0, &maxima.1).ok(),
        r2_min: r_squared(&minima.0, &minima.1).ok(),
        percentile_table: percentile_compare(actual, enriched, percentiles)?,
        wasserstein_per_hour: w,
        baseline_wasserstein_per_hour: base,
        histogram: Histogram::build(actual, enriched, bins)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r2_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 0.5f64).abs() < 1e-15);
        assert!(matches!(r_squared(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::Numerical(_))));
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn percentile_examples() {
        let a: Vec<f64> = (1..=100).map(f64::from).collect();
        let b: Vec<f64> = (2..=101).map(f64::from).collect();
        let t = percentile_compare(&a, &b, &[0.0, 25.0, 50.0, 90.0, 100.0]).unwrap();
        assert!(t.iter().all(|r| (r.abs_diff - 1.0).abs() < 1e-12));
        assert_eq!(t[0].actual, 1.0);
        assert_eq!(t[4].enriched, 101.0);
        let same = percentile_compare(&a, &a, &DEFAULT_PERCENTILES).unwrap();
        assert!(same.iter().all(|r| r.abs_diff == 0.0));
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1(&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 1.0, 1.0]).unwrap(), 0.25);
        assert_eq!(wasserstein1(&[3.0, 1.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert!((wasserstein1(&[1.0, 2.0, 5.0], &[3.5, 4.5, 7.5]).unwrap() - 2.5f64).abs() < 1e-12);
        // Point mass against two atoms.
        assert!((wasserstein1(&[0.0, 2.0], &[1.0]).unwrap() - 1.0f64).abs() < 1e-12);
        assert!((wasserstein1(&[0.0, 0.0, 3.0], &[0.0, 3.0]).unwrap() - 0.5f64).abs() < 1e-12);
    }

    #[test]
    fn report_counts_intervals() {
        let actual: Vec<f64> = (0..40).map(|i| (i % 10) as f64).collect();
        let enriched: Vec<f64> = actual.iter().map(|v| v + 0.1).collect();
        let r = validate(&actual, &enriched, 1, 10, &[50.0], 5).unwrap();
        assert_eq!(r.wasserstein_per_hour.len(), 4);
        assert!(r.wasserstein_per_hour.iter().all(|w| (w - 0.1).abs() < 1e-12));
        assert_eq!(r.fraction_beating_baseline(), 1.0);
        assert_eq!(r.histogram.actual.iter().sum::<u64>(), 40);
        assert!(r.r2_max.is_none());
    }

    fn oracle_w1(a: &[f64], b: &[f64]) -> f64 {
        // Expand both samples to n·m equally weighted copies.
        let (n, m) = (a.len(), b.len());
        let mut ea: Vec<f64> = a.iter().flat_map(|&v| std::iter::repeat_n(v, m)).collect();
        let mut eb: Vec<f64> = b.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
        ea.sort_by(f64::total_cmp);
        eb.sort_by(f64::total_cmp);
        ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).sum::<f64>() / (n * m) as f64
    }

    proptest! {
        #[test]
        fn w1_matches_expansion_oracle(
            a in prop::collection::vec(-50.0f64..50.0, 1..30),
            b in prop::collection::vec(-50.0f64..50.0, 1..30),
        ) {
            let w = wasserstein1(&a, &b).unwrap();
            prop_assert!((w - oracle_w1(&a, &b)).abs() < 1e-9);
            prop_assert!((w - wasserstein1(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!(w >= 0.0);
            prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn w1_translation(a in prop::collection::vec(-50.0f64..50.0, 1..40), c in -10.0f64..10.0) {
            let b: Vec<f64> = a.iter().map(|v| v + c).collect();
            prop_assert!((wasserstein1(&a, &b).unwrap() - c.abs()).abs() < 1e-9);
        }

        #[test]
        fn r2_affine_invariant(
            a in prop::collection::vec(-50.0f64..50.0, 3..40),
            noise in prop::collection::vec(-1.0f64..1.0, 40),
            shift in -100.0f64..100.0,
            scale in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        ) {
            prop_assume!(a.iter().any(|&v| (v - a[0]).abs() > 1e-3));
            let p: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + e).collect();
            let r = r_squared(&a, &p).unwrap();
            let a2: Vec<f64> = a.iter().map(|x| x * scale + shift).collect();
            let p2: Vec<f64> = p.iter().map(|x| x * scale + shift).collect();
            let r2 = r_squared(&a2, &p2).unwrap();
            prop_assert!(r <= 1.0);
            prop_assert!((r - r2).abs() < 1e-6 * r.abs().max(1.0));
        }
    }
}

//! Student-side enrichment: bound inference, tensor blending and chain
//! sampling, one low-resolution interval at a time.

use std::collections::BTreeMap;

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Context, Error, Result};
use crate::markov::{
    partition_levels, sample_from_row, sample_next, state_of, state_to_load, BinMode, FallbackRows, LevelPartition,
    RowProvider, State, TransitionTensor,
};
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::series::{samples_per_interval, HighResSeries, LowResSeries};
use crate::teachers::{compute_weights, DailyLoadPattern, TeacherRepository, TeacherWeights, WeightMode};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichmentConfig {
    pub n_states: usize,
    pub n_levels: usize,
    pub seed: u64,
    /// Rescale each interval so its samples average exactly to `p_a`.
    pub mean_preserve: bool,
    pub bin_mode: BinMode,
    pub weight_mode: WeightMode,
    /// Keep negative lower bounds (net load with local generation).
    pub allow_negative: bool,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        Self {
            n_states: 10,
            n_levels: 10,
            seed: 42,
            mean_preserve: false,
            bin_mode: BinMode::UpperEdge,
            weight_mode: WeightMode::Inverse,
            allow_negative: false,
        }
    }
}

impl EnrichmentConfig {
    /// Refuses repositories trained with a different state or level count.
    pub fn check_repository<T: Scalar>(&self, repo: &TeacherRepository<T>) -> Result<()> {
        let m = &repo.manifest;
        if self.n_states != m.n_states {
            return Err(Error::Config(format!(
                "config n_states = {} but the repository was trained with n_states = {}",
                self.n_states, m.n_states
            )));
        }
        if self.n_levels != m.n_levels {
            return Err(Error::Config(format!(
                "config n_levels = {} but the repository was trained with n_levels = {}",
                self.n_levels, m.n_levels
            )));
        }
        Ok(())
    }
}

/// Interval bounds, kW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Bounds<T> {
    pub p_max: T,
    pub p_min: T,
}

/// Weighted teacher posterior means, then clamped so `p_min <= p_a <= p_max`.
/// Unless `allow_negative`, the lower bound is floored at zero first.
pub fn infer_bounds<T: Scalar>(
    p_a: T,
    repo: &TeacherRepository<T>,
    weights: &TeacherWeights<T>,
    allow_negative: bool,
) -> Bounds<T> {
    let (mut hi, mut lo) = (T::zero(), T::zero());
    for (t, &w) in repo.teachers.iter().zip(&weights.weights) {
        if w > T::zero() {
            hi += w * t.gpr_max.predict_mean(p_a);
            lo += w * t.gpr_min.predict_mean(p_a);
        }
    }
    clamp_bounds(p_a, hi, lo, allow_negative)
}

pub fn clamp_bounds<T: Scalar>(p_a: T, p_max: T, p_min: T, allow_negative: bool) -> Bounds<T> {
    let p_min = if allow_negative { p_min } else { p_min.max(T::zero()) };
    Bounds { p_max: p_max.max(p_a), p_min: p_min.min(p_a) }
}

/// Zero-based load level of `p_a` within the student's own partition.
pub fn select_level<T: Scalar>(p_a: T, partition: &LevelPartition<T>) -> usize {
    partition.level_of(p_a)
}

fn blend<'a, T: Scalar>(
    tensors: impl Iterator<Item = (&'a TransitionTensor<T>, T)>,
    n: usize,
) -> Result<TransitionTensor<T>> {
    let mut probs = vec![T::zero(); n * n * n];
    let mut row_mass = vec![T::zero(); n * n];
    let mut pairs = vec![T::zero(); n * n];
    let mut pair_mass = T::zero();
    for (t, w) in tensors {
        if !(w > T::zero()) || t.is_empty() {
            continue;
        }
        if t.n_states() != n {
            return Err(Error::Config(format!("tensor has {} states, expected {n}", t.n_states())));
        }
        for (xy, &defined) in t.defined_mask().iter().enumerate() {
            if defined {
                row_mass[xy] += w;
                for z in 0..n {
                    probs[xy * n + z] += w * t.probs()[xy * n + z];
                }
            }
        }
        for (p, &m) in pairs.iter_mut().zip(t.pair_marginal()) {
            *p += w * m;
        }
        pair_mass += w;
    }
    for xy in 0..n * n {
        if row_mass[xy] > T::zero() {
            for z in 0..n {
                probs[xy * n + z] /= row_mass[xy];
            }
        }
    }
    if pair_mass > T::zero() {
        pairs.iter_mut().for_each(|p| *p /= pair_mass);
    }
    TransitionTensor::from_rows(n, probs, pairs)
}

/// Weighted row-wise mix of the teachers' level-`level` tensors. Each row
/// only uses the teachers that define it, with weights renormalized.
pub fn blend_tensors<T: Scalar>(
    level: usize,
    repo: &TeacherRepository<T>,
    weights: &TeacherWeights<T>,
) -> Result<TransitionTensor<T>> {
    if let Some(t) = repo.teachers.iter().find(|t| level >= t.tensors.len()) {
        return Err(Error::Config(format!("teacher {} has no load level {level}", t.transformer_id)));
    }
    blend(
        repo.teachers.iter().zip(&weights.weights).map(|(t, &w)| (&t.tensors[level], w)),
        repo.manifest.n_states,
    )
}

/// Same mix over the teachers' pooled tensors.
pub fn blend_pooled<T: Scalar>(repo: &TeacherRepository<T>, weights: &TeacherWeights<T>) -> Result<TransitionTensor<T>> {
    blend(
        repo.teachers.iter().zip(&weights.weights).map(|(t, &w)| (&t.pooled_tensor, w)),
        repo.manifest.n_states,
    )
}

/// Chain settings shared by all intervals of one series.
#[derive(Clone, Copy, Debug)]
pub struct ChainParams {
    pub n_states: usize,
    pub n_prime: usize,
    pub bin_mode: BinMode,
    pub mean_preserve: bool,
}

/// Samples one interval. `carry` holds the previous interval's last two
/// load values; without it the seed pair is drawn from `pair_marginal`.
/// Returns the samples and the new carry.
pub fn enrich_interval<T: Scalar, P: RowProvider<T>, R: Rng + ?Sized>(
    p_a: T,
    bounds: Bounds<T>,
    rows: &P,
    pair_marginal: &[T],
    carry: Option<(T, T)>,
    params: ChainParams,
    rng: &mut R,
) -> (Vec<T>, (T, T)) {
    let n = params.n_states;
    let Bounds { p_max, p_min } = bounds;
    let (mut x, mut y) = match carry {
        Some((a, b)) => (state_of(a, p_max, p_min, n), state_of(b, p_max, p_min, n)),
        None => seed_pair(pair_marginal, n, rng),
    };
    let mut out = Vec::with_capacity(params.n_prime);
    for _ in 0..params.n_prime {
        let u: f64 = rng.sample(Open01);
        let z = sample_next(rows, x, y, T::of(u));
        out.push(state_to_load(z, p_max, p_min, n, params.bin_mode));
        x = y;
        y = z;
    }
    if p_max == p_min {
        out.iter_mut().for_each(|v| *v = p_a);
    } else if params.mean_preserve {
        preserve_mean(&mut out, p_a, bounds);
    }
    let k = out.len();
    let carry = match k {
        0 => (p_a, p_a),
        1 => (out[0], out[0]),
        _ => (out[k - 2], out[k - 1]),
    };
    (out, carry)
}

fn seed_pair<T: Scalar, R: Rng + ?Sized>(pair_marginal: &[T], n: usize, rng: &mut R) -> (State, State) {
    let total: T = pair_marginal.iter().copied().sum();
    let u: f64 = rng.sample(Open01);
    let xy = if total > T::zero() {
        sample_from_row(pair_marginal, T::of(u) * total).index()
    } else {
        ((u * (n * n) as f64) as usize).min(n * n - 1)
    };
    (State::from_index(xy / n), State::from_index(xy % n))
}

/// Stretches `s` to fill `[p_min, p_max]`, then shifts it (clipping at the
/// bounds) until its mean equals `p_a`.
pub fn preserve_mean<T: Scalar>(s: &mut [T], p_a: T, bounds: Bounds<T>) {
    if s.is_empty() {
        return;
    }
    let Bounds { p_max, p_min } = bounds;
    let lo = s.iter().copied().fold(T::infinity(), T::min);
    let hi = s.iter().copied().fold(T::neg_infinity(), T::max);
    if hi > lo {
        let k = (p_max - p_min) / (hi - lo);
        s.iter_mut().for_each(|v| *v = p_min + (*v - lo) * k);
    }
    let lo = s.iter().copied().fold(T::infinity(), T::min);
    let hi = s.iter().copied().fold(T::neg_infinity(), T::max);
    let n = T::of_usize(s.len());
    let mean_at = |c: T| s.iter().map(|&v| (v + c).max(p_min).min(p_max)).sum::<T>() / n;
    let (mut a, mut b) = (p_min - hi, p_max - lo);
    for _ in 0..200 {
        let mid = (a + b) / T::of(2.0);
        if mid == a || mid == b {
            break;
        }
        if mean_at(mid) < p_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    let c = if (mean_at(a) - p_a).abs() <= (mean_at(b) - p_a).abs() { a } else { b };
    s.iter_mut().for_each(|v| *v = (*v + c).max(p_min).min(p_max));
    // The clipped shift lands within rounding of `p_a`; spread the rest
    // over the samples that have room.
    let residual = p_a * n - s.iter().copied().sum::<T>();
    let free: Vec<usize> = (0..s.len()).filter(|&i| s[i] > p_min && s[i] < p_max).collect();
    if !free.is_empty() && residual != T::zero() {
        let d = residual / T::of_usize(free.len());
        for i in free {
            s[i] = (s[i] + d).max(p_min).min(p_max);
        }
    }
}

/// Per-interval record of what the enrichment used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IntervalMeta<T> {
    pub index: usize,
    pub timestamp_s: i64,
    pub p_avg: T,
    pub p_max_star: T,
    pub p_min_star: T,
    /// Zero-based load level.
    pub level: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EnrichedSeries<T: Scalar> {
    pub series: HighResSeries<T>,
    pub intervals: Vec<IntervalMeta<T>>,
    pub weights: TeacherWeights<T>,
}

impl<T: Scalar> EnrichedSeries<T> {
    /// Samples of interval `i`.
    pub fn interval(&self, i: usize) -> &[T] {
        let n = self.series.len() / self.intervals.len();
        &self.series.values[i * n..(i + 1) * n]
    }
}

/// Enriches one student. Weights come from the student's customer patterns.
pub fn enrich_series<T: Scalar>(
    student: &LowResSeries<T>,
    student_patterns: &[DailyLoadPattern<T>],
    repo: &TeacherRepository<T>,
    config: &EnrichmentConfig,
) -> Result<EnrichedSeries<T>> {
    config.check_repository(repo)?;
    let weights = compute_weights(student_patterns, repo, config.weight_mode)
        .with_context(|| format!("weights for student {}", student.transformer_id))?;
    enrich_with_weights(student, repo, &weights, config)
}

/// Enriches one student with explicit teacher weights.
pub fn enrich_with_weights<T: Scalar>(
    student: &LowResSeries<T>,
    repo: &TeacherRepository<T>,
    weights: &TeacherWeights<T>,
    config: &EnrichmentConfig,
) -> Result<EnrichedSeries<T>> {
    let id = &student.transformer_id;
    enrich_inner(student, repo, weights, config).with_context(|| format!("enriching student {id}"))
}

fn enrich_inner<T: Scalar>(
    student: &LowResSeries<T>,
    repo: &TeacherRepository<T>,
    weights: &TeacherWeights<T>,
    config: &EnrichmentConfig,
) -> Result<EnrichedSeries<T>> {
    config.check_repository(repo)?;
    if weights.weights.len() != repo.teachers.len() {
        return Err(Error::Config(format!(
            "{} weights for {} teachers",
            weights.weights.len(),
            repo.teachers.len()
        )));
    }
    if student.dt != repo.manifest.low_dt {
        return Err(Error::Config(format!(
            "student interval {} s differs from the repository's {} s",
            student.dt, repo.manifest.low_dt
        )));
    }
    let n_prime = samples_per_interval(repo.manifest.high_dt, student.dt)?;
    if n_prime < 3 {
        return Err(Error::Config(format!("{n_prime} samples per interval; at least 3 are needed")));
    }
    let partition = partition_levels(&student.values, config.n_levels)?;
    let pooled = blend_pooled(repo, weights)?;
    let mut blended: BTreeMap<usize, TransitionTensor<T>> = BTreeMap::new();
    let params = ChainParams {
        n_states: config.n_states,
        n_prime,
        bin_mode: config.bin_mode,
        mean_preserve: config.mean_preserve,
    };
    let mut rng = stream(config.seed, &student.transformer_id);
    let mut values = Vec::with_capacity(student.len() * n_prime);
    let mut intervals = Vec::with_capacity(student.len());
    let mut carry = None;
    for (i, &p_a) in student.values.iter().enumerate() {
        let bounds = infer_bounds(p_a, repo, weights, config.allow_negative);
        let level = select_level(p_a, &partition);
        let tensor = match blended.entry(level) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(blend_tensors(level, repo, weights).with_context(|| format!("interval {i}"))?)
            }
        };
        let tensor = &*tensor;
        let rows = FallbackRows::new(tensor, Some(&pooled));
        let pair_marginal = if tensor.is_empty() { pooled.pair_marginal() } else { tensor.pair_marginal() };
        let (samples, next) = enrich_interval(p_a, bounds, &rows, pair_marginal, carry, params, &mut rng);
        carry = Some(next);
        values.extend(samples);
        intervals.push(IntervalMeta {
            index: i,
            timestamp_s: student.timestamp(i),
            p_avg: p_a,
            p_max_star: bounds.p_max,
            p_min_star: bounds.p_min,
            level,
        });
    }
    let series = HighResSeries::new(student.transformer_id.clone(), student.t0, repo.manifest.high_dt, values)?;
    Ok(EnrichedSeries { series, intervals, weights: weights.clone() })
}

/// Enriches several students in parallel; output order follows the input.
pub fn enrich_many<T: Scalar>(
    students: &[(LowResSeries<T>, Vec<DailyLoadPattern<T>>)],
    repo: &TeacherRepository<T>,
    config: &EnrichmentConfig,
) -> Result<Vec<EnrichedSeries<T>>> {
    students
        .par_iter()
        .map(|(low, patterns)| enrich_series(low, patterns, repo, config))
        .collect()
}

//! Load discretization, load-level partitions and second-order transition
//! tensors.
//!
//! States are 1-based (`1..=n_states`) to match the usual presentation of
//! the discretization: state `s` covers the half-open bin
//! `[p_min + (s-1) w, p_min + s w)` with `w = (p_max - p_min) / n_states`,
//! except that `p_max` itself belongs to the top state.

use std::fmt;

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{percentile_sorted, sorted, Scalar};

/// A discrete load state, `1..=n_states`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(u16);

impl State {
    pub fn new(s: u16) -> Option<Self> {
        (s >= 1).then_some(Self(s))
    }

    pub fn get(self) -> u16 {
        self.0
    }

    /// Zero-based index for array lookups.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        Self(i as u16 + 1)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Discretized samples of one low-resolution interval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    pub interval: usize,
    pub states: Vec<State>,
}

fn check_states(n_states: usize) -> Result<()> {
    if !(2..=u16::MAX as usize).contains(&n_states) {
        return Err(Error::Config(format!("n_states must be in 2..=65535, got {n_states}")));
    }
    Ok(())
}

/// State of a single value, clamped into `[p_min, p_max]`.
#[inline]
pub fn state_of<T: Scalar>(v: T, p_max: T, p_min: T, n_states: usize) -> State {
    let range = p_max - p_min;
    if !(range > T::zero()) {
        return State(1);
    }
    let pos = ((v - p_min) * T::of_usize(n_states) / range).floor();
    let idx = pos.max(T::zero()).to_usize().unwrap_or(0).min(n_states - 1);
    State::from_index(idx)
}

/// Maps samples to states over the interval's `[p_min, p_max]`.
pub fn discretize<T: Scalar>(samples: &[T], p_max: T, p_min: T, n_states: usize) -> Result<Vec<State>> {
    check_states(n_states)?;
    if !(p_max >= p_min) {
        return Err(Error::Input(format!("p_max {p_max} below p_min {p_min}")));
    }
    let slack = T::of(1e-9) * T::one().max(p_max.abs()).max(p_min.abs());
    samples
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v < p_min - slack || v > p_max + slack || !v.is_finite() {
                Err(Error::Input(format!("sample {i} = {v} outside [{p_min}, {p_max}]")))
            } else {
                Ok(state_of(v, p_max, p_min, n_states))
            }
        })
        .collect()
}

/// How a state is turned back into a load value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    /// `p_min + s·w`, the upper edge of the state's bin.
    #[default]
    UpperEdge,
    /// `p_min + (s - 0.5)·w`, the bin centre.
    Midpoint,
}

#[inline]
pub fn state_to_load<T: Scalar>(s: State, p_max: T, p_min: T, n_states: usize, mode: BinMode) -> T {
    let level = match mode {
        BinMode::UpperEdge => T::of(s.get() as f64),
        BinMode::Midpoint => T::of(s.get() as f64 - 0.5),
    };
    let v = p_min + level * (p_max - p_min) / T::of_usize(n_states);
    v.max(p_min).min(p_max)
}

pub fn states_to_load<T: Scalar>(states: &[State], p_max: T, p_min: T, n_states: usize, mode: BinMode) -> Vec<T> {
    states
        .iter()
        .map(|&s| state_to_load(s, p_max, p_min, n_states, mode))
        .collect()
}

/// Percentile cut points of interval-average loads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LevelPartition<T> {
    pub edges: Vec<T>,
}

impl<T: Scalar> LevelPartition<T> {
    pub fn n_levels(&self) -> usize {
        self.edges.len() - 1
    }

    /// Zero-based level of `p_a`. Levels are half-open `[edge_j, edge_{j+1})`
    /// except the last, which is closed; values outside the range clamp.
    pub fn level_of(&self, p_a: T) -> usize {
        let n = self.n_levels();
        let above = self.edges[1..n].iter().take_while(|&&e| e <= p_a).count();
        above.min(n - 1)
    }
}

/// Splits the observed averages at percentiles `0, 100/n, ..., 100`.
pub fn partition_levels<T: Scalar>(p_a_values: &[T], n_levels: usize) -> Result<LevelPartition<T>> {
    if n_levels == 0 {
        return Err(Error::Config("n_levels must be at least 1".into()));
    }
    if p_a_values.is_empty() {
        return Err(Error::Input("cannot partition an empty set of averages".into()));
    }
    if p_a_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("interval averages must be finite".into()));
    }
    let s = sorted(p_a_values);
    let edges: Vec<T> = (0..=n_levels)
        .map(|j| {
            let p = T::of(j as f64 * 100.0 / n_levels as f64);
            percentile_sorted(&s, p).expect("non-empty")
        })
        .collect();
    if n_levels > 1 && s[0] == s[s.len() - 1] {
        log::warn!("all {} interval averages are equal; only the top load level is populated", s.len());
    }
    Ok(LevelPartition { edges })
}

/// Second-order transition tensor `P(next = z | prev = x, cur = y)`.
///
/// Tensors estimated from data keep their triplet counts; blended tensors
/// only carry probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", into = "TensorRecord<T>", try_from = "TensorRecord<T>")]
pub struct TransitionTensor<T: Scalar> {
    n_states: usize,
    counts: Vec<u64>,
    probs: Vec<T>,
    defined: Vec<bool>,
    pair_marginal: Vec<T>,
    first_order: Vec<T>,
    first_defined: Vec<bool>,
}

/// Serialized tensor. `counts` is authoritative when present.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TensorRecord<T> {
    pub n_states: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_marginal: Option<Vec<T>>,
}

impl<T: Scalar> From<TransitionTensor<T>> for TensorRecord<T> {
    fn from(t: TransitionTensor<T>) -> Self {
        if t.counts.is_empty() {
            TensorRecord {
                n_states: t.n_states,
                level: None,
                counts: Vec::new(),
                probs: Some(t.probs),
                pair_marginal: Some(t.pair_marginal),
            }
        } else {
            TensorRecord { n_states: t.n_states, level: None, counts: t.counts, probs: None, pair_marginal: None }
        }
    }
}

impl<T: Scalar> TryFrom<TensorRecord<T>> for TransitionTensor<T> {
    type Error = Error;

    fn try_from(r: TensorRecord<T>) -> Result<Self> {
        match (r.counts.is_empty(), r.probs, r.pair_marginal) {
            (false, _, _) => TransitionTensor::from_counts(r.n_states, r.counts),
            (true, Some(probs), Some(pm)) => TransitionTensor::from_rows(r.n_states, probs, pm),
            _ => Err(Error::Input("tensor record has neither counts nor probabilities".into())),
        }
    }
}

impl<T: Scalar> TransitionTensor<T> {
    #[inline]
    fn at(n: usize, x: usize, y: usize) -> usize {
        (x * n + y) * n
    }

    /// Builds the tensor from flat triplet counts `n(x, y, z)`, z fastest.
    pub fn from_counts(n_states: usize, counts: Vec<u64>) -> Result<Self> {
        check_states(n_states)?;
        let n = n_states;
        if counts.len() != n * n * n {
            return Err(Error::Input(format!("expected {} counts, got {}", n * n * n, counts.len())));
        }
        let mut probs = vec![T::zero(); n * n * n];
        let mut defined = vec![false; n * n];
        let mut pair_marginal = vec![T::zero(); n * n];
        let total: u64 = counts.iter().sum();
        for xy in 0..n * n {
            let row = &counts[xy * n..(xy + 1) * n];
            let s: u64 = row.iter().sum();
            if s > 0 {
                defined[xy] = true;
                let st = T::of(s as f64);
                for z in 0..n {
                    probs[xy * n + z] = T::of(row[z] as f64) / st;
                }
                pair_marginal[xy] = st / T::of(total as f64);
            }
        }
        Ok(Self::assemble(n, counts, probs, defined, pair_marginal))
    }

    /// Builds a tensor from row probabilities and an `(x, y)` pair
    /// distribution. Rows that are all zero are undefined.
    pub fn from_rows(n_states: usize, probs: Vec<T>, pair_marginal: Vec<T>) -> Result<Self> {
        check_states(n_states)?;
        let n = n_states;
        if probs.len() != n * n * n || pair_marginal.len() != n * n {
            return Err(Error::Input("tensor row data has the wrong shape".into()));
        }
        let defined: Vec<bool> = (0..n * n)
            .map(|xy| probs[xy * n..(xy + 1) * n].iter().any(|&p| p > T::zero()))
            .collect();
        Ok(Self::assemble(n, Vec::new(), probs, defined, pair_marginal))
    }

    fn assemble(n: usize, counts: Vec<u64>, probs: Vec<T>, defined: Vec<bool>, pair_marginal: Vec<T>) -> Self {
        let mut first_order = vec![T::zero(); n * n];
        let mut first_defined = vec![false; n];
        for y in 0..n {
            let mut mass = T::zero();
            for x in 0..n {
                let xy = x * n + y;
                if defined[xy] && pair_marginal[xy] > T::zero() {
                    mass += pair_marginal[xy];
                    for z in 0..n {
                        first_order[y * n + z] += pair_marginal[xy] * probs[xy * n + z];
                    }
                }
            }
            if mass > T::zero() {
                first_defined[y] = true;
                for z in 0..n {
                    first_order[y * n + z] /= mass;
                }
            }
        }
        Self { n_states: n, counts, probs, defined, pair_marginal, first_order, first_defined }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Triplet counts; empty for blended tensors.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, x: State, y: State, z: State) -> u64 {
        if self.counts.is_empty() {
            return 0;
        }
        self.counts[Self::at(self.n_states, x.index(), y.index()) + z.index()]
    }

    pub fn prob(&self, x: State, y: State, z: State) -> T {
        self.probs[Self::at(self.n_states, x.index(), y.index()) + z.index()]
    }

    pub fn is_defined(&self, x: State, y: State) -> bool {
        self.defined[x.index() * self.n_states + y.index()]
    }

    /// Times the pair `(x, y)` was followed by any state.
    pub fn row_visits(&self, x: State, y: State) -> u64 {
        if self.counts.is_empty() {
            return 0;
        }
        let i = Self::at(self.n_states, x.index(), y.index());
        self.counts[i..i + self.n_states].iter().sum()
    }

    /// Row `(x, y)` if it was observed.
    pub fn row(&self, x: State, y: State) -> Option<&[T]> {
        let n = self.n_states;
        let xy = x.index() * n + y.index();
        self.defined[xy].then(|| &self.probs[xy * n..(xy + 1) * n])
    }

    /// First-order row for `y`, marginalizing the previous state.
    pub fn first_order_row(&self, y: State) -> Option<&[T]> {
        let n = self.n_states;
        self.first_defined[y.index()]
            .then(|| &self.first_order[y.index() * n..(y.index() + 1) * n])
    }

    /// Empirical distribution of `(x, y)` pairs, flat with y fastest.
    pub fn pair_marginal(&self) -> &[T] {
        &self.pair_marginal
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn defined_mask(&self) -> &[bool] {
        &self.defined
    }

    pub fn is_empty(&self) -> bool {
        !self.defined.iter().any(|&d| d)
    }

    /// JSON-ready record tagged with its load level.
    pub fn to_record(&self, level: Option<usize>) -> TensorRecord<T> {
        let mut r: TensorRecord<T> = self.clone().into();
        r.level = level;
        r
    }
}

/// Counts `(S(i-1), S(i), S(i+1))` triplets inside each sequence and
/// normalizes each `(x, y)` row. Triplets never span two sequences.
pub fn count_and_normalize<T: Scalar, S: AsRef<[State]> + Sync>(
    sequences: &[S],
    n_states: usize,
) -> Result<TransitionTensor<T>> {
    check_states(n_states)?;
    let n = n_states;
    if let Some(bad) = sequences
        .iter()
        .flat_map(|s| s.as_ref().iter())
        .find(|s| s.index() >= n)
    {
        return Err(Error::Input(format!("state {bad} exceeds n_states {n}")));
    }
    let counts = sequences
        .par_iter()
        .fold(
            || vec![0u64; n * n * n],
            |mut acc, seq| {
                for w in seq.as_ref().windows(3) {
                    acc[(w[0].index() * n + w[1].index()) * n + w[2].index()] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n * n * n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    TransitionTensor::from_counts(n, counts)
}

impl AsRef<[State]> for StateSequence {
    fn as_ref(&self) -> &[State] {
        &self.states
    }
}

/// Something that yields a next-state distribution for any `(x, y)`.
pub trait RowProvider<T> {
    fn row(&self, x: State, y: State) -> &[T];
}

/// Resolves rows through a fallback chain: the tensor's own row, the pooled
/// tensor's row, the first-order row (tensor, then pooled), then uniform.
#[derive(Clone, Debug)]
pub struct FallbackRows<'a, T: Scalar> {
    primary: &'a TransitionTensor<T>,
    pooled: Option<&'a TransitionTensor<T>>,
    uniform: Vec<T>,
}

impl<'a, T: Scalar> FallbackRows<'a, T> {
    pub fn new(primary: &'a TransitionTensor<T>, pooled: Option<&'a TransitionTensor<T>>) -> Self {
        let n = primary.n_states();
        Self { primary, pooled, uniform: vec![T::one() / T::of_usize(n); n] }
    }

    pub fn primary(&self) -> &TransitionTensor<T> {
        self.primary
    }
}

impl<T: Scalar> RowProvider<T> for FallbackRows<'_, T> {
    fn row(&self, x: State, y: State) -> &[T] {
        self.primary
            .row(x, y)
            .or_else(|| self.pooled.and_then(|p| p.row(x, y)))
            .or_else(|| self.primary.first_order_row(y))
            .or_else(|| self.pooled.and_then(|p| p.first_order_row(y)))
            .unwrap_or(&self.uniform)
    }
}

/// Inverse-CDF draw: the smallest `z` whose cumulative probability exceeds `u`.
pub fn sample_from_row<T: Scalar>(row: &[T], u: T) -> State {
    let mut cum = T::zero();
    let mut last_positive = 0;
    for (z, &p) in row.iter().enumerate() {
        if p > T::zero() {
            last_positive = z;
        }
        cum += p;
        if u < cum {
            return State::from_index(z);
        }
    }
    // Rows summing to slightly under one.
    State::from_index(last_positive)
}

pub fn sample_next<T: Scalar, P: RowProvider<T>>(rows: &P, x: State, y: State, u: T) -> State {
    sample_from_row(rows.row(x, y), u)
}

/// Runs the chain for `steps` draws after the seed pair `(x, y)`.
pub fn simulate<T: Scalar, P: RowProvider<T>, R: Rng + ?Sized>(
    rows: &P,
    x: State,
    y: State,
    steps: usize,
    rng: &mut R,
) -> Vec<State> {
    let mut out = Vec::with_capacity(steps);
    let (mut prev, mut cur) = (x, y);
    for _ in 0..steps {
        let u: f64 = rng.sample(Open01);
        let next = sample_next(rows, prev, cur, T::of(u));
        out.push(next);
        prev = cur;
        cur = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: u16) -> State {
        State::new(v).unwrap()
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(&[1.25], 2.0, 1.0, 10).unwrap(), vec![s(3)]);
        assert_eq!(discretize(&[1.0], 2.0, 1.0, 10).unwrap(), vec![s(1)]);
        assert_eq!(discretize(&[2.0], 2.0, 1.0, 10).unwrap(), vec![s(10)]);
        assert_eq!(discretize(&[3.0, 3.0], 3.0, 3.0, 10).unwrap(), vec![s(1), s(1)]);
        assert!(matches!(discretize(&[2.5], 2.0, 1.0, 10), Err(Error::Input(_))));
        assert!(discretize(&[1.0], 2.0, 1.0, 1).is_err());
        // Within slack of the bounds is accepted.
        assert_eq!(discretize(&[1.0 - 1e-12], 2.0, 1.0, 10).unwrap(), vec![s(1)]);
    }

    #[test]
    fn states_to_load_examples() {
        let v = states_to_load(&[s(3), s(10)], 2.0f64, 1.0, 10, BinMode::UpperEdge);
        assert!((v[0] - 1.3).abs() < 1e-12);
        assert_eq!(v[1], 2.0);
        let flat = states_to_load(&[s(1), s(7)], 4.0, 4.0, 10, BinMode::UpperEdge);
        assert_eq!(flat, vec![4.0, 4.0]);
        let mid = states_to_load(&[s(1)], 2.0f32, 1.0, 10, BinMode::Midpoint);
        assert!((mid[0] - 1.05).abs() < 1e-6);
    }

    #[test]
    fn partition_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = partition_levels(&v, 4).unwrap();
        let expected = [1.0, 25.75, 50.5, 75.25, 100.0];
        for (a, b) in p.edges.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(p.level_of(25.75), 1);
        assert_eq!(p.level_of(100.0), 3);
        assert_eq!(p.level_of(-5.0), 0);
        assert_eq!(p.level_of(500.0), 3);
        let one = partition_levels(&v, 1).unwrap();
        assert!(v.iter().all(|&x| one.level_of(x) == 0));
        let deciles = partition_levels(&v, 10).unwrap();
        assert_eq!(deciles.level_of(55.0), 5);
        let flat = partition_levels(&[2.0; 7], 3).unwrap();
        assert_eq!(flat.level_of(2.0), 2);
        assert!(partition_levels::<f64>(&[], 3).is_err());
        assert!(partition_levels(&v, 0).is_err());
    }

    #[test]
    fn counting_examples() {
        let t: TransitionTensor<f64> = count_and_normalize(&[vec![s(1), s(1), s(2), s(2)]], 3).unwrap();
        assert_eq!(t.count(s(1), s(1), s(2)), 1);
        assert_eq!(t.count(s(1), s(2), s(2)), 1);
        assert_eq!(t.counts().iter().sum::<u64>(), 2);
        assert_eq!(t.row(s(1), s(1)).unwrap(), &[0.0, 1.0, 0.0]);
        assert_eq!(t.row(s(1), s(2)).unwrap(), &[0.0, 1.0, 0.0]);
        assert!(t.row(s(2), s(2)).is_none());

        let c: TransitionTensor<f64> = count_and_normalize(&[vec![s(2); 6]], 3).unwrap();
        assert_eq!(c.prob(s(2), s(2), s(2)), 1.0);
    }

    #[test]
    fn no_triplets_across_sequences() {
        let t: TransitionTensor<f64> = count_and_normalize(&[vec![s(1), s(1)], vec![s(2), s(2)]], 2).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn inverse_cdf_examples() {
        assert_eq!(sample_from_row(&[0.2, 0.5, 0.3], 0.65), s(2));
        assert_eq!(sample_from_row(&[0.2, 0.5, 0.3], 0.1), s(1));
        assert_eq!(sample_from_row(&[0.2, 0.5, 0.3], 0.7), s(3));
        for u in [1e-9, 0.5, 0.999_999] {
            assert_eq!(sample_from_row(&[1.0, 0.0, 0.0], u), s(1));
        }
        assert_eq!(sample_from_row(&[0.3, 0.3, 0.3999999], 0.9999999999), s(3));
    }

    #[test]
    fn sampled_frequencies_match_row() {
        let row = [0.2, 0.5, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hist = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            let u: f64 = rng.sample(Open01);
            hist[sample_from_row(&row, u).index()] += 1;
        }
        for z in 0..3 {
            assert!((hist[z] as f64 / n as f64 - row[z]).abs() < 0.01);
        }
    }

    #[test]
    fn fallback_chain_order() {
        // primary knows (1,1) only; pooled knows (2,1).
        let primary: TransitionTensor<f64> = count_and_normalize(&[vec![s(1), s(1), s(2)]], 2).unwrap();
        let pooled: TransitionTensor<f64> = count_and_normalize(&[vec![s(2), s(1), s(1)]], 2).unwrap();
        let rows = FallbackRows::new(&primary, Some(&pooled));
        assert_eq!(rows.row(s(1), s(1)), &[0.0, 1.0]);
        assert_eq!(rows.row(s(2), s(1)), &[1.0, 0.0]);
        // Nothing is known about cur = 2 anywhere: uniform.
        assert_eq!(rows.row(s(2), s(2)), &[0.5, 0.5]);
        assert_eq!(rows.row(s(1), s(2)), &[0.5, 0.5]);
        let alone = FallbackRows::new(&primary, None);
        // First-order row for y=1 from primary: only (1,1) observed.
        assert_eq!(alone.row(s(2), s(1)), &[0.0, 1.0]);
    }

    #[test]
    fn tensor_json_keeps_counts() {
        let t: TransitionTensor<f64> = count_and_normalize(&[vec![s(1), s(2), s(1), s(2), s(2)]], 2).unwrap();
        let json = serde_json::to_string(&t.to_record(Some(3))).unwrap();
        assert!(json.contains("\"counts\"") && json.contains("\"level\":3"));
        let back: TransitionTensor<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn discretize_round_trip_within_one_bin(
            vals in prop::collection::vec(0.0f64..1.0, 1..100),
            lo in -10.0f64..10.0,
            width in 0.01f64..20.0,
            n in 2usize..30,
        ) {
            let hi = lo + width;
            let samples: Vec<f64> = vals.iter().map(|v| lo + v * width).collect();
            let states = discretize(&samples, hi, lo, n).unwrap();
            let back = states_to_load(&states, hi, lo, n, BinMode::UpperEdge);
            let w = width / n as f64;
            for (a, b) in samples.iter().zip(back) {
                prop_assert!(b >= *a - 1e-9 && b - a <= w + 1e-9);
            }
        }

        #[test]
        fn defined_rows_are_stochastic(seq in prop::collection::vec(1u16..=5, 3..300)) {
            let states: Vec<State> = seq.into_iter().map(|v| State::new(v).unwrap()).collect();
            let t: TransitionTensor<f64> = count_and_normalize(&[states], 5).unwrap();
            for x in 1..=5 {
                for y in 1..=5 {
                    match t.row(s(x), s(y)) {
                        Some(r) => {
                            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                            prop_assert!(r.iter().all(|&p| (0.0..=1.0).contains(&p)));
                        }
                        None => prop_assert!((1..=5).all(|z| t.prob(s(x), s(y), s(z)) == 0.0)),
                    }
                }
            }
        }
    }
}

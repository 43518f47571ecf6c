//! Teacher transformers: trained bound models and transition tensors, daily
//! load patterns, and student-to-teacher weights.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Context, Error, Result};
use crate::gpr::{CrossValidation, GprModel, HyperGrid, TargetKind};
use crate::markov::{count_and_normalize, discretize, partition_levels, LevelPartition, TransitionTensor};
use crate::scalar::Scalar;
use crate::series::{samples_per_interval, segment_and_aggregate, CustomerSeries, HighResSeries};

const DAY: i64 = 86_400;
const HOUR: i64 = 3_600;

/// Hour-of-day average load of one customer, kW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DailyLoadPattern<T> {
    pub customer_id: String,
    pub values: Vec<T>,
}

impl<T: Scalar> DailyLoadPattern<T> {
    pub fn energy(&self) -> T {
        self.values.iter().copied().sum()
    }

    fn distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }
}

/// Averages each customer's complete calendar days (UTC, aligned to
/// multiples of 86400 s) by hour of day.
pub fn extract_patterns<T: Scalar>(customers: &[CustomerSeries<T>]) -> Result<Vec<DailyLoadPattern<T>>> {
    customers.iter().map(pattern_of).collect()
}

fn pattern_of<T: Scalar>(c: &CustomerSeries<T>) -> Result<DailyLoadPattern<T>> {
    if c.dt > HOUR || HOUR % c.dt != 0 {
        return Err(Error::Input(format!(
            "customer {}: interval {} s must divide one hour",
            c.customer_id, c.dt
        )));
    }
    let per_day = (DAY / c.dt) as usize;
    // First sample index that starts a calendar day.
    let offset = ((DAY - c.t0.rem_euclid(DAY)) % DAY) / c.dt;
    if (c.t0 + offset * c.dt).rem_euclid(DAY) != 0 {
        return Err(Error::Input(format!("customer {}: samples are not aligned to the day", c.customer_id)));
    }
    let days: Vec<&[T]> = c.values[(offset as usize).min(c.values.len())..].chunks_exact(per_day).collect();
    if days.is_empty() {
        return Err(Error::Input(format!("customer {} has no complete day of data", c.customer_id)));
    }
    let per_hour = (HOUR / c.dt) as usize;
    let scale = T::of_usize(days.len() * per_hour);
    let values = (0..24)
        .map(|h| {
            days.iter()
                .flat_map(|d| d[h * per_hour..(h + 1) * per_hour].iter().copied())
                .sum::<T>()
                / scale
        })
        .collect();
    Ok(DailyLoadPattern { customer_id: c.customer_id.clone(), values })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Weights proportional to the pattern distances, so farther teachers
    /// weigh more.
    Proportional,
    /// Normalize inverse distances, so closer teachers weigh more.
    #[default]
    Inverse,
}

/// Learning weight per teacher, in repository order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TeacherWeights<T> {
    pub ids: Vec<String>,
    pub weights: Vec<T>,
    /// Mean pairwise pattern distance to each teacher, kW.
    pub distances: Vec<T>,
}

impl<T: Scalar> TeacherWeights<T> {
    pub fn get(&self, id: &str) -> Option<T> {
        self.ids.iter().position(|i| i == id).map(|k| self.weights[k])
    }

    /// Weight 1 on a single teacher.
    pub fn single(id: impl Into<String>) -> Self {
        Self { ids: vec![id.into()], weights: vec![T::one()], distances: vec![T::zero()] }
    }
}

/// Turns distances into a probability vector.
pub fn weights_from_distances<T: Scalar>(distances: &[T], mode: WeightMode) -> Result<Vec<T>> {
    if distances.is_empty() {
        return Err(Error::Config("teacher repository is empty".into()));
    }
    if let Some(d) = distances.iter().find(|d| !(**d >= T::zero() && d.is_finite())) {
        return Err(Error::Input(format!("invalid pattern distance {d}")));
    }
    let n = T::of_usize(distances.len());
    let total: T = distances.iter().copied().sum();
    if !(total > T::zero()) {
        return Ok(vec![T::one() / n; distances.len()]);
    }
    let raw: Vec<T> = match mode {
        WeightMode::Proportional => distances.to_vec(),
        WeightMode::Inverse => {
            let eps = T::of(1e-6) * total / n;
            distances.iter().map(|&d| T::one() / (d + eps)).collect()
        }
    };
    let s: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|w| w / s).collect())
}

/// Picks `m = min(len)` customers from each side. When the counts differ,
/// every pattern of the smaller side (highest energy first) takes the unused
/// pattern of the larger side closest in energy.
fn matched<'a, T: Scalar>(
    student: &'a [DailyLoadPattern<T>],
    teacher: &'a [DailyLoadPattern<T>],
) -> (Vec<&'a DailyLoadPattern<T>>, Vec<&'a DailyLoadPattern<T>>) {
    if student.len() == teacher.len() {
        return (student.iter().collect(), teacher.iter().collect());
    }
    let (small, large, swapped) = if student.len() < teacher.len() {
        (student, teacher, false)
    } else {
        (teacher, student, true)
    };
    let mut order: Vec<&DailyLoadPattern<T>> = small.iter().collect();
    order.sort_by(|a, b| b.energy().partial_cmp(&a.energy()).expect("finite energy"));
    let mut used = vec![false; large.len()];
    let mut picked = Vec::with_capacity(order.len());
    for p in &order {
        let e = p.energy();
        let best = (0..large.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                let da = (large[a].energy() - e).abs();
                let db = (large[b].energy() - e).abs();
                da.partial_cmp(&db).expect("finite energy")
            })
            .expect("larger side has enough patterns");
        used[best] = true;
        picked.push(&large[best]);
    }
    if swapped {
        (picked, order)
    } else {
        (order, picked)
    }
}

/// Mean pairwise l2 distance between two sets of daily patterns.
pub fn pattern_distance<T: Scalar>(student: &[DailyLoadPattern<T>], teacher: &[DailyLoadPattern<T>]) -> Result<T> {
    if student.is_empty() || teacher.is_empty() {
        return Err(Error::Input("pattern distance needs at least one pattern on each side".into()));
    }
    let (s, t) = matched(student, teacher);
    let m = s.len();
    let total: T = s.iter().flat_map(|a| t.iter().map(move |b| a.distance(b))).sum();
    Ok(total / T::of_usize(m * m))
}

pub fn compute_weights<T: Scalar>(
    student_patterns: &[DailyLoadPattern<T>],
    repo: &TeacherRepository<T>,
    mode: WeightMode,
) -> Result<TeacherWeights<T>> {
    if repo.teachers.is_empty() {
        return Err(Error::Config("teacher repository is empty".into()));
    }
    let distances = repo
        .teachers
        .iter()
        .map(|t| pattern_distance(student_patterns, &t.patterns).with_context(|| format!("teacher {}", t.transformer_id)))
        .collect::<Result<Vec<T>>>()?;
    let weights = weights_from_distances(&distances, mode)?;
    Ok(TeacherWeights { ids: repo.ids(), weights, distances })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_states: usize,
    pub n_levels: usize,
    /// Smart-meter interval, seconds.
    pub low_dt: i64,
    /// Fewest complete intervals accepted for training.
    pub min_hours: usize,
    pub grid: HyperGrid,
    pub cv: CrossValidation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_states: 10,
            n_levels: 10,
            low_dt: 3600,
            min_hours: 240,
            grid: HyperGrid::default(),
            cv: CrossValidation { max_points: Some(400), ..Default::default() },
        }
    }
}

impl TrainConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TeacherModel<T: Scalar> {
    pub transformer_id: String,
    pub n_states: usize,
    pub gpr_max: GprModel<T>,
    pub gpr_min: GprModel<T>,
    pub partition: LevelPartition<T>,
    /// One tensor per load level, lowest level first.
    pub tensors: Vec<TransitionTensor<T>>,
    pub pooled_tensor: TransitionTensor<T>,
    pub patterns: Vec<DailyLoadPattern<T>>,
}

impl<T: Scalar> TeacherModel<T> {
    pub fn n_levels(&self) -> usize {
        self.tensors.len()
    }
}

fn fit_bound<T: Scalar>(pairs: &[(T, T)], kind: TargetKind, config: &TrainConfig) -> Result<GprModel<T>> {
    let grid = config.grid.expand(pairs);
    let params = config.cv.select(pairs, &grid)?;
    GprModel::fit(pairs, params, kind)
}

pub fn train_teacher<T: Scalar>(
    hr: &HighResSeries<T>,
    customers: &[CustomerSeries<T>],
    config: &TrainConfig,
) -> Result<TeacherModel<T>> {
    let id = hr.transformer_id.clone();
    train_inner(hr, customers, config).with_context(|| format!("training teacher {id}"))
}

fn train_inner<T: Scalar>(
    hr: &HighResSeries<T>,
    customers: &[CustomerSeries<T>],
    config: &TrainConfig,
) -> Result<TeacherModel<T>> {
    let n_prime = samples_per_interval(hr.dt, config.low_dt)?;
    if n_prime < 3 {
        return Err(Error::Config(format!("{n_prime} samples per interval; at least 3 are needed")));
    }
    let stats = segment_and_aggregate(hr, config.low_dt)?;
    if stats.len() < config.min_hours {
        return Err(Error::Input(format!(
            "{} complete intervals, at least {} required",
            stats.len(),
            config.min_hours
        )));
    }
    let max_pairs: Vec<(T, T)> = stats.iter().map(|s| (s.p_avg, s.p_max)).collect();
    let min_pairs: Vec<(T, T)> = stats.iter().map(|s| (s.p_avg, s.p_min)).collect();
    let (gpr_max, gpr_min) = rayon::join(
        || fit_bound(&max_pairs, TargetKind::Max, config).context("max-bound model"),
        || fit_bound(&min_pairs, TargetKind::Min, config).context("min-bound model"),
    );
    let averages: Vec<T> = stats.iter().map(|s| s.p_avg).collect();
    let partition = partition_levels(&averages, config.n_levels)?;
    let sequences = stats
        .iter()
        .zip(hr.values.chunks_exact(n_prime))
        .map(|(s, chunk)| discretize(chunk, s.p_max, s.p_min, config.n_states).with_context(|| format!("interval {}", s.index)))
        .collect::<Result<Vec<_>>>()?;
    let mut by_level: Vec<Vec<&[crate::markov::State]>> = vec![Vec::new(); config.n_levels];
    for (s, seq) in stats.iter().zip(&sequences) {
        by_level[partition.level_of(s.p_avg)].push(seq);
    }
    let tensors = by_level
        .iter()
        .map(|seqs| count_and_normalize(seqs, config.n_states))
        .collect::<Result<Vec<_>>>()?;
    let pooled_tensor = count_and_normalize(&sequences, config.n_states)?;
    let patterns = extract_patterns(customers)?;
    Ok(TeacherModel {
        transformer_id: hr.transformer_id.clone(),
        n_states: config.n_states,
        gpr_max: gpr_max?,
        gpr_min: gpr_min?,
        partition,
        tensors,
        pooled_tensor,
        patterns,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositoryManifest {
    pub ids: Vec<String>,
    pub n_states: usize,
    pub n_levels: usize,
    pub config_hash: String,
    pub high_dt: i64,
    pub low_dt: i64,
}

/// Trained teachers, immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherRepository<T: Scalar> {
    pub manifest: RepositoryManifest,
    pub teachers: Vec<TeacherModel<T>>,
}

pub const MANIFEST_FILE: &str = "repository.json";

impl<T: Scalar> TeacherRepository<T> {
    /// Trains every teacher in parallel; output order follows `inputs`.
    pub fn train(inputs: &[(HighResSeries<T>, Vec<CustomerSeries<T>>)], config: &TrainConfig) -> Result<Self> {
        let first = inputs.first().ok_or_else(|| Error::Config("no teacher transformers to train".into()))?;
        let high_dt = first.0.dt;
        if let Some((hr, _)) = inputs.iter().find(|(hr, _)| hr.dt != high_dt) {
            return Err(Error::Input(format!(
                "teacher {} has dt {} s but {} has {} s",
                hr.transformer_id, hr.dt, first.0.transformer_id, high_dt
            )));
        }
        let teachers = inputs
            .par_iter()
            .map(|(hr, customers)| train_teacher(hr, customers, config))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RepositoryManifest {
            ids: teachers.iter().map(|t| t.transformer_id.clone()).collect(),
            n_states: config.n_states,
            n_levels: config.n_levels,
            config_hash: config.hash(),
            high_dt,
            low_dt: config.low_dt,
        };
        Ok(Self { manifest, teachers })
    }

    /// Wraps already-trained models; all must share `n_states` and level count.
    pub fn from_models(teachers: Vec<TeacherModel<T>>, high_dt: i64, low_dt: i64, config_hash: String) -> Result<Self> {
        let first = teachers.first().ok_or_else(|| Error::Config("teacher repository is empty".into()))?;
        let (n_states, n_levels) = (first.n_states, first.n_levels());
        for t in &teachers {
            if t.n_states != n_states || t.n_levels() != n_levels {
                return Err(Error::Config(format!(
                    "teacher {} has {} states / {} levels, expected {n_states} / {n_levels}",
                    t.transformer_id,
                    t.n_states,
                    t.n_levels()
                )));
            }
        }
        let manifest = RepositoryManifest {
            ids: teachers.iter().map(|t| t.transformer_id.clone()).collect(),
            n_states,
            n_levels,
            config_hash,
            high_dt,
            low_dt,
        };
        Ok(Self { manifest, teachers })
    }

    pub fn ids(&self) -> Vec<String> {
        self.manifest.ids.clone()
    }

    pub fn get(&self, id: &str) -> Option<&TeacherModel<T>> {
        self.teachers.iter().find(|t| t.transformer_id == id)
    }

    /// Writes `repository.json` plus one `<id>.json` per teacher.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.teachers {
            let path = dir.join(format!("{}.json", t.transformer_id));
            fs::write(&path, serde_json::to_vec(t)?).with_context(|| format!("writing {}", path.display()))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: RepositoryManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let teachers = manifest
            .ids
            .iter()
            .map(|id| {
                let path = dir.join(format!("{id}.json"));
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let model: TeacherModel<T> =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                if model.n_states != manifest.n_states || model.n_levels() != manifest.n_levels {
                    return Err(Error::Config(format!(
                        "teacher {id} has {} states / {} levels but the manifest says {} / {}",
                        model.n_states,
                        model.n_levels(),
                        manifest.n_states,
                        manifest.n_levels
                    )));
                }
                Ok(model)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, teachers })
    }
}

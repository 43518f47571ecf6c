//! Synthetic ground truth: appliance-level transformer load at fine
//! resolution, the smart-meter readings derived from it, and optional PV.
//!
//! Each appliance is an alternating on/off renewal process with exponential
//! sojourns. Cycling appliances may carry an hour-of-day activity schedule
//! that scales their switch-on rate. A smooth diurnal baseload runs
//! underneath.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::series::{CustomerSeries, HighResSeries};

const DAY: f64 = 86_400.0;
const HOUR: f64 = 3_600.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApplianceKind {
    Cycling,
    /// Always on at `p_on`.
    Baseload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    /// Draw while on, kW.
    pub p_on: f64,
    /// Mean on-sojourn, seconds.
    pub mean_on: f64,
    /// Mean off-sojourn, seconds (at activity 1).
    pub mean_off: f64,
    pub kind: ApplianceKind,
    /// Hour-of-day multipliers on the switch-on rate; 24 entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
}

impl ApplianceSpec {
    pub fn cycling(p_on: f64, mean_on: f64, mean_off: f64) -> Self {
        Self { p_on, mean_on, mean_off, kind: ApplianceKind::Cycling, schedule: None }
    }

    pub fn baseload(p_on: f64) -> Self {
        Self { p_on, mean_on: 1.0, mean_off: 1.0, kind: ApplianceKind::Baseload, schedule: None }
    }

    pub fn with_schedule(mut self, schedule: Vec<f64>) -> Self {
        self.schedule = Some(schedule);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.p_on > 0.0 && self.mean_on > 0.0 && self.mean_off > 0.0) {
            return Err(Error::Input(format!("appliance needs positive p_on and sojourn means: {self:?}")));
        }
        if let Some(s) = &self.schedule {
            if s.len() != 24 || s.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Input("appliance schedule needs 24 non-negative entries".into()));
            }
        }
        Ok(())
    }

    /// Long-run fraction of time on, for unscheduled cycling appliances.
    pub fn duty(&self) -> f64 {
        match self.kind {
            ApplianceKind::Baseload => 1.0,
            ApplianceKind::Cycling => self.mean_on / (self.mean_on + self.mean_off),
        }
    }
}

/// Smooth background load:
/// `mean_kw · g(t) · (1 + swing · cos(2π (h - peak_hour) / 24))`,
/// where `g` interpolates a per-day factor drawn from `1 ± day_spread`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiurnalBase {
    pub mean_kw: f64,
    pub swing: f64,
    pub peak_hour: f64,
    pub day_spread: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub appliances: Vec<ApplianceSpec>,
    pub diurnal: DiurnalBase,
}

struct DayFactors(Vec<f64>);

impl DayFactors {
    fn draw(days: usize, spread: f64, rng: &mut ChaCha8Rng) -> Self {
        // One spare day so interpolation past the last midpoint is defined.
        Self(
            (0..=days)
                .map(|_| if spread > 0.0 { 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0) } else { 1.0 })
                .collect(),
        )
    }

    fn day(&self, t: f64) -> f64 {
        let d = ((t / DAY) as usize).min(self.0.len() - 1);
        self.0[d]
    }

    /// Linear interpolation between day midpoints.
    fn smooth(&self, t: f64) -> f64 {
        let pos = (t / DAY - 0.5).max(0.0);
        let i = (pos as usize).min(self.0.len() - 1);
        let j = (i + 1).min(self.0.len() - 1);
        let f = pos - i as f64;
        self.0[i] * (1.0 - f) + self.0[j] * f
    }
}

fn hour_of_day(t: f64) -> usize {
    ((t.rem_euclid(DAY)) / HOUR) as usize % 24
}

/// Adds one appliance's on-periods to `out` (samples at `i·dt`).
fn add_appliance(out: &mut [f64], dt: f64, a: &ApplianceSpec, days: &DayFactors, rng: &mut ChaCha8Rng) {
    let horizon = out.len() as f64 * dt;
    if a.kind == ApplianceKind::Baseload {
        out.iter_mut().for_each(|v| *v += a.p_on);
        return;
    }
    let on = Exp::new(1.0 / a.mean_on).expect("positive mean");
    let activity = |t: f64| match &a.schedule {
        Some(s) => s[hour_of_day(t)] * days.day(t),
        None => 1.0,
    };
    let mut t = 0.0;
    let mut is_on = a.schedule.is_none() && rng.random::<f64>() < a.duty();
    while t < horizon {
        if is_on {
            let end = t + on.sample(rng);
            let first = (t / dt).ceil() as usize;
            let last = ((end / dt).ceil() as usize).min(out.len());
            for v in &mut out[first.min(last)..last] {
                *v += a.p_on;
            }
            t = end;
            is_on = false;
        } else {
            // Time-varying switch-on rate, piecewise constant per hour.
            let mut budget: f64 = Exp1.sample(rng);
            loop {
                if t >= horizon {
                    break;
                }
                let seg_end = ((t / HOUR).floor() + 1.0) * HOUR;
                let rate = activity(t) / a.mean_off;
                let span = seg_end - t;
                if rate > 0.0 && budget <= rate * span {
                    t += budget / rate;
                    break;
                }
                budget -= rate * span;
                t = seg_end;
            }
            is_on = true;
        }
    }
}

fn simulate_household(household: &Household, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if household.appliances.is_empty() {
        return Err(Error::Input("household has no appliances".into()));
    }
    for a in &household.appliances {
        a.validate()?;
    }
    let n_days = (n as f64 * dt / DAY).ceil() as usize;
    let d = household.diurnal;
    let days = DayFactors::draw(n_days, d.day_spread, rng);
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let h = t.rem_euclid(DAY) / HOUR;
            d.mean_kw * days.smooth(t) * (1.0 + d.swing * (2.0 * PI * (h - d.peak_hour) / 24.0).cos())
        })
        .collect();
    for a in &household.appliances {
        add_appliance(&mut out, dt, a, &days, rng);
    }
    Ok(out)
}

/// Simulates one transformer's load for `days` days at spacing `dt`.
pub fn simulate_transformer<T: Scalar>(
    transformer_id: &str,
    household: &Household,
    days: usize,
    dt: i64,
    seed: u64,
) -> Result<HighResSeries<T>> {
    if !(1..=60).contains(&dt) {
        return Err(Error::Config(format!("synthetic dt must be within 1..=60 s, got {dt}")));
    }
    let n = days * DAY as usize / dt as usize;
    let mut rng = stream(seed, transformer_id);
    let values = simulate_household(household, n, dt as f64, &mut rng)?;
    HighResSeries::new(transformer_id, 0, dt, values.into_iter().map(T::of).collect())
}

/// Clear-sky bell between 06:00 and 18:00 times a random cloud factor.
///
/// Clouds arrive as an on/off renewal process (clear periods averaging 30
/// minutes, cloudy periods averaging 5 minutes) and each cloud removes a
/// random 20-60 % of the output.
pub fn pv_profile(t0: i64, dt: i64, n: usize, capacity_kw: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, "pv-clouds");
    let horizon = n as f64 * dt as f64;
    let mut cloud = vec![1.0f64; n];
    let clear = Exp::new(1.0 / 1800.0).expect("rate");
    let cloudy = Exp::new(1.0 / 300.0).expect("rate");
    let mut t = clear.sample(&mut rng);
    while t < horizon {
        let end = t + cloudy.sample(&mut rng);
        let depth = 0.2 + 0.4 * rng.random::<f64>();
        let first = (t / dt as f64).ceil() as usize;
        let last = ((end / dt as f64).ceil() as usize).min(n);
        for c in &mut cloud[first.min(last)..last] {
            *c = 1.0 - depth;
        }
        t = end + clear.sample(&mut rng);
    }
    (0..n)
        .map(|i| {
            let ts = (t0 + dt * i as i64) as f64;
            let h = ts.rem_euclid(DAY) / HOUR;
            let bell = if (6.0..18.0).contains(&h) { (PI * (h - 6.0) / 12.0).sin().powf(1.5) } else { 0.0 };
            capacity_kw * bell * cloud[i]
        })
        .collect()
}

/// Subtracts PV generation from a load series; the result may be negative.
pub fn add_pv<T: Scalar>(hr: &HighResSeries<T>, capacity_kw: f64, seed: u64) -> HighResSeries<T> {
    let pv = pv_profile(hr.t0, hr.dt, hr.len(), capacity_kw, seed);
    let values = hr.values.iter().zip(pv).map(|(&v, p)| v - T::of(p)).collect();
    HighResSeries { values, ..hr.clone() }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvMode {
    #[default]
    None,
    TeachersOnly,
    StudentsOnly,
    Both,
}

impl PvMode {
    pub fn teachers(self) -> bool {
        matches!(self, PvMode::TeachersOnly | PvMode::Both)
    }

    pub fn students(self) -> bool {
        matches!(self, PvMode::StudentsOnly | PvMode::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n_teachers: usize,
    pub n_students: usize,
    pub customers_per_transformer: usize,
    pub days: usize,
    pub pv: PvMode,
    pub seed: u64,
    /// High-resolution spacing, seconds.
    pub dt: i64,
    /// Smart-meter interval, seconds.
    pub low_dt: i64,
    pub loss_fraction: f64,
    /// Mean installed PV per customer when PV is enabled, kW.
    pub pv_kw_per_customer: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_teachers: 8,
            n_students: 11,
            customers_per_transformer: 5,
            days: 14,
            pv: PvMode::None,
            seed: 42,
            dt: 1,
            low_dt: 3600,
            loss_fraction: 0.02,
            pv_kw_per_customer: 1.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_teachers == 0 || self.n_students == 0 || self.customers_per_transformer == 0 || self.days == 0 {
            return Err(Error::Config("scenario counts must all be at least 1".into()));
        }
        crate::series::samples_per_interval(self.dt, self.low_dt)?;
        if DAY as i64 % self.low_dt != 0 {
            return Err(Error::Config(format!("low_dt {} must divide a day", self.low_dt)));
        }
        if !(0.0..0.2).contains(&self.loss_fraction) {
            return Err(Error::Config(format!("loss fraction {} outside [0, 0.2)", self.loss_fraction)));
        }
        Ok(())
    }

    pub fn teacher_ids(&self) -> Vec<String> {
        (1..=self.n_teachers).map(|i| format!("T{i:02}")).collect()
    }

    pub fn student_ids(&self) -> Vec<String> {
        (1..=self.n_students).map(|i| format!("S{i:02}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

/// One transformer's ground truth and its customers' smart-meter data.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTransformer<T: Scalar> {
    pub role: Role,
    pub high_res: HighResSeries<T>,
    pub customers: Vec<CustomerSeries<T>>,
    pub pv_kw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<T: Scalar> {
    pub spec: ScenarioSpec,
    pub teachers: Vec<SyntheticTransformer<T>>,
    pub students: Vec<SyntheticTransformer<T>>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws a residential customer: background load, refrigeration, two
/// thermostatic heating/cooling elements busiest in the afternoon and
/// evening, short-cycling cooking elements, small motor loads and a standby
/// baseload.
pub fn random_household(rng: &mut ChaCha8Rng) -> Household {
    let shift = uniform(rng, -1.5, 1.5);
    let hvac_schedule: Vec<f64> = (0..24)
        .map(|h| {
            let x = (h as f64 + 0.5 - 16.0 - shift) / 4.5;
            0.1 + 1.6 * (-0.5 * x * x).exp()
        })
        .collect();
    let kitchen_schedule: Vec<f64> = (0..24)
        .map(|h| match h {
            0..=5 => 0.05,
            6..=8 => 1.2,
            9..=16 => 0.5,
            17..=20 => 1.6,
            _ => 0.4,
        })
        .collect();
    Household {
        diurnal: DiurnalBase {
            mean_kw: uniform(rng, 0.4, 1.0),
            swing: uniform(rng, 0.15, 0.3),
            peak_hour: 18.5 + shift,
            day_spread: 0.25,
        },
        appliances: vec![
            ApplianceSpec::baseload(uniform(rng, 0.08, 0.25)),
            ApplianceSpec::cycling(uniform(rng, 0.1, 0.2), uniform(rng, 500.0, 900.0), uniform(rng, 900.0, 1500.0)),
            ApplianceSpec::cycling(uniform(rng, 1.0, 1.75), uniform(rng, 48.0, 72.0), uniform(rng, 96.0, 144.0))
                .with_schedule(hvac_schedule.clone()),
            ApplianceSpec::cycling(uniform(rng, 1.0, 1.75), uniform(rng, 48.0, 72.0), uniform(rng, 96.0, 144.0))
                .with_schedule(hvac_schedule),
            ApplianceSpec::cycling(uniform(rng, 0.8, 1.5), uniform(rng, 24.0, 36.0), uniform(rng, 96.0, 144.0))
                .with_schedule(kitchen_schedule),
            ApplianceSpec::cycling(uniform(rng, 0.3, 0.6), uniform(rng, 16.0, 24.0), uniform(rng, 16.0, 24.0)),
        ],
    }
}

fn synthesize<T: Scalar>(spec: &ScenarioSpec, id: &str, role: Role) -> Result<SyntheticTransformer<T>> {
    let mut rng = stream(spec.seed, &format!("household-draw/{id}"));
    let n = spec.days * DAY as usize / spec.dt as usize;
    let per_interval = (spec.low_dt / spec.dt) as usize;
    let with_pv = match role {
        Role::Teacher => spec.pv.teachers(),
        Role::Student => spec.pv.students(),
    };
    let mut total = vec![0.0f64; n];
    let mut customer_means: Vec<(String, Vec<f64>, f64)> = Vec::with_capacity(spec.customers_per_transformer);
    for c in 0..spec.customers_per_transformer {
        let cid = format!("{id}-C{:02}", c + 1);
        let household = random_household(&mut rng);
        let pv_cap = if with_pv { spec.pv_kw_per_customer * uniform(&mut rng, 0.5, 1.5) } else { 0.0 };
        let mut crng = stream(spec.seed, &cid);
        let load = simulate_household(&household, n, spec.dt as f64, &mut crng)?;
        let means = load.chunks_exact(per_interval).map(|ch| ch.iter().sum::<f64>() / per_interval as f64).collect();
        for (t, v) in total.iter_mut().zip(&load) {
            *t += v;
        }
        customer_means.push((cid, means, pv_cap));
    }
    let pv_total: f64 = customer_means.iter().map(|c| c.2).sum();
    let pv = if pv_total > 0.0 {
        pv_profile(0, spec.dt, n, 1.0, crate::rng::derive_seed(spec.seed, &format!("pv/{id}")))
    } else {
        Vec::new()
    };
    let pv_means: Vec<f64> = pv.chunks_exact(per_interval).map(|ch| ch.iter().sum::<f64>() / per_interval as f64).collect();
    let scale = 1.0 + spec.loss_fraction;
    let values: Vec<T> = total
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let net = if pv.is_empty() { v } else { v - pv_total * pv[i] };
            T::of(net * scale)
        })
        .collect();
    let customers = customer_means
        .into_iter()
        .map(|(cid, means, cap)| {
            let net: Vec<T> = means
                .iter()
                .enumerate()
                .map(|(i, &m)| T::of(if pv_means.is_empty() { m } else { m - cap * pv_means[i] }))
                .collect();
            CustomerSeries::new(cid, id, 0, spec.low_dt, net)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticTransformer {
        role,
        high_res: HighResSeries::new(id, 0, spec.dt, values)?,
        customers,
        pv_kw: pv_total,
    })
}

/// Generates every transformer of a scenario; transformers run in parallel
/// and each uses its own seeded stream, so the output depends only on `spec`.
pub fn generate_scenario<T: Scalar>(spec: &ScenarioSpec) -> Result<Scenario<T>> {
    spec.validate()?;
    let jobs: Vec<(String, Role)> = spec
        .teacher_ids()
        .into_iter()
        .map(|id| (id, Role::Teacher))
        .chain(spec.student_ids().into_iter().map(|id| (id, Role::Student)))
        .collect();
    let mut all: Vec<SyntheticTransformer<T>> = jobs
        .par_iter()
        .map(|(id, role)| synthesize(spec, id, *role))
        .collect::<Result<_>>()?;
    let students = all.split_off(spec.n_teachers);
    Ok(Scenario { spec: spec.clone(), teachers: all, students })
}

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use gridfill::enrich::{enrich_series, enrich_with_weights, IntervalMeta};
use gridfill::error::Context;
use gridfill::powerflow::{run_timeseries, FeederModel, SolveOptions};
use gridfill::scalar::{percentile_sorted, sorted};
use gridfill::series::{aggregate_customers, downsample};
use gridfill::synthgen::{generate_scenario, ScenarioSpec, SyntheticTransformer};
use gridfill::teachers::extract_patterns;
use gridfill::validate::{validate as compare, wasserstein1, DEFAULT_PERCENTILES};
use gridfill::{Error, HighResSeries, LowResSeries, Result, TeacherRepository, TeacherWeights, ValidationReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{hash_json, seed_override, RunConfig};
use crate::io::{self, RunManifest, CUSTOMERS_SUFFIX};
use crate::{EnrichArgs, PowerflowArgs, ReportArgs, SynthArgs, TrainArgs, ValidateArgs};

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec: ScenarioSpec = match &args.scenario {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = seed_override()? {
        spec.seed = seed;
    }
    let scenario = generate_scenario::<f64>(&spec)?;
    let out = &args.out;
    let write_tx = |dir: &str, t: &SyntheticTransformer<f64>, hourly: bool| -> Result<()> {
        let id = &t.high_res.transformer_id;
        let mut w = io::create(&out.join(dir).join(format!("{id}.csv")))?;
        if hourly {
            downsample(&t.high_res, spec.low_dt)?.write_csv(&mut w)?;
        } else {
            t.high_res.write_csv(&mut w)?;
        }
        w.flush()?;
        let mut w = io::create(&out.join(dir).join(format!("{id}{CUSTOMERS_SUFFIX}")))?;
        gridfill::CustomerSeries::write_many_csv(&t.customers, &mut w)?;
        Ok(w.flush()?)
    };
    scenario.teachers.par_iter().try_for_each(|t| write_tx("teachers", t, false))?;
    scenario.students.par_iter().try_for_each(|t| write_tx("students", t, true))?;
    scenario.students.par_iter().try_for_each(|t| -> Result<()> {
        let mut w = io::create(&out.join("truth").join(format!("{}.csv", t.high_res.transformer_id)))?;
        t.high_res.write_csv(&mut w)?;
        Ok(w.flush()?)
    })?;
    io::write_json(&out.join("scenario.json"), &spec)?;
    let mut m = RunManifest::new("synth", Some(spec.seed), hash_json(&spec));
    if let Some(p) = &args.scenario {
        m = m.input(p);
    }
    m.output(out).write_beside(out)?;
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let files = io::load_files(&args.teachers)?;
    if files.is_empty() {
        return Err(Error::Input(format!("no teacher CSVs in {}", args.teachers.display())));
    }
    let mut inputs = Vec::new();
    for f in &files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let customers_path = f.with_file_name(format!("{stem}{CUSTOMERS_SUFFIX}"));
        let mut customers = io::read_customers(&customers_path, cfg.low_dt)?;
        for hr in io::read_high_res(f)? {
            let c = customers.remove(&hr.transformer_id).ok_or_else(|| {
                Error::Input(format!("no customers for teacher {} in {}", hr.transformer_id, customers_path.display()))
            })?;
            inputs.push((hr, c));
        }
    }
    let repo = TeacherRepository::train(&inputs, &cfg.train())?;
    repo.save(&args.out)?;
    RunManifest::new("train", None, cfg.hash()).input(&args.teachers).output(&args.out).write_beside(&args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct StudentMeta<'a> {
    weights: &'a TeacherWeights,
    intervals: &'a [IntervalMeta<f64>],
}

fn equal_weights(repo: &TeacherRepository) -> TeacherWeights {
    let n = repo.teachers.len();
    TeacherWeights { ids: repo.ids(), weights: vec![1.0 / n as f64; n], distances: vec![0.0; n] }
}

pub fn enrich(args: &EnrichArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let ecfg = cfg.enrichment();
    let repo = TeacherRepository::load(&args.repo)?;
    ecfg.check_repository(&repo)?;
    let customers = match &args.customers {
        Some(p) => io::read_customers(p, cfg.low_dt)?,
        None => {
            log::warn!("no customer data given; teachers are weighted equally");
            BTreeMap::new()
        }
    };
    let students: Vec<LowResSeries> = match &args.student {
        Some(p) => io::read_low_res(p, cfg.low_dt)?,
        None => customers
            .values()
            .map(|c| aggregate_customers(c, cfg.loss_fraction))
            .collect::<Result<_>>()?,
    };
    let enriched = students
        .par_iter()
        .map(|low| match customers.get(&low.transformer_id) {
            Some(c) => enrich_series(low, &extract_patterns(c)?, &repo, &ecfg),
            None if args.customers.is_some() => {
                Err(Error::Input(format!("no customers for student {}", low.transformer_id)))
            }
            None => enrich_with_weights(low, &repo, &equal_weights(&repo), &ecfg),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = io::create(&args.out)?;
    let series: Vec<HighResSeries> = enriched.iter().map(|e| e.series.clone()).collect();
    HighResSeries::write_many_csv(&series, &mut w)?;
    w.flush()?;
    let mut m = RunManifest::new("enrich", Some(cfg.seed), cfg.hash()).input(&args.repo);
    for p in [&args.student, &args.customers, &args.config].into_iter().flatten() {
        m = m.input(p);
    }
    m = m.output(&args.out);
    if let Some(p) = &args.meta {
        let meta: BTreeMap<&str, StudentMeta> = enriched
            .iter()
            .map(|e| (e.series.transformer_id.as_str(), StudentMeta { weights: &e.weights, intervals: &e.intervals }))
            .collect();
        io::write_json(p, &meta)?;
        m = m.output(p);
    }
    m.write_beside(&args.out)?;
    Ok(())
}

/// The part of `actual` that lines up with `enriched`.
fn aligned<'a>(actual: &'a HighResSeries, enriched: &HighResSeries) -> Result<&'a [f64]> {
    let id = &enriched.transformer_id;
    if actual.dt != enriched.dt {
        return Err(Error::Input(format!("{id}: actual dt {} s, enriched dt {} s", actual.dt, enriched.dt)));
    }
    let offset = enriched.t0 - actual.t0;
    if offset < 0 || offset % actual.dt != 0 {
        return Err(Error::Input(format!("{id}: enriched series starts outside the actual series")));
    }
    let start = (offset / actual.dt) as usize;
    actual
        .values
        .get(start..start + enriched.len())
        .ok_or_else(|| Error::Input(format!("{id}: actual series does not cover the enriched span")))
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let actual: BTreeMap<String, HighResSeries> =
        io::read_high_res(&args.actual)?.into_iter().map(|s| (s.transformer_id.clone(), s)).collect();
    let enriched = io::read_high_res(&args.enriched)?;
    let reports = enriched
        .par_iter()
        .map(|e| {
            let id = &e.transformer_id;
            let a = actual
                .get(id)
                .ok_or_else(|| Error::Input(format!("no actual series for {id} in {}", args.actual.display())))?;
            let r = compare(aligned(a, e)?, &e.values, e.dt, cfg.low_dt, &DEFAULT_PERCENTILES, args.bins)
                .with_context(|| format!("validating {id}"))?;
            Ok((id.clone(), r))
        })
        .collect::<Result<BTreeMap<String, ValidationReport>>>()?;
    io::write_json(&args.report, &reports)?;
    let mut m = RunManifest::new("validate", None, cfg.hash()).input(&args.actual).input(&args.enriched).output(&args.report);
    if let Some(dir) = &args.histograms {
        for (id, r) in &reports {
            let mut w = io::create(&dir.join(format!("{id}.csv")))?;
            r.histogram.write_csv(&mut w)?;
            w.flush()?;
        }
        m = m.output(dir);
    }
    m.write_beside(&args.report)?;
    Ok(())
}

pub fn powerflow(args: &PowerflowArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let feeder = match &args.feeder {
        Some(p) => FeederModel::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => FeederModel::default_feeder(),
    };
    let wanted: Vec<&String> = feeder.buses.iter().filter_map(|b| b.load.as_ref()).collect();
    let loads: BTreeMap<String, HighResSeries> = io::read_high_res(&args.loads)?
        .into_iter()
        .filter(|s| wanted.contains(&&s.transformer_id))
        .map(|s| (s.transformer_id.clone(), s))
        .collect();
    let stride = args.stride.unwrap_or(cfg.stride);
    let v = run_timeseries(&feeder, &loads, stride, SolveOptions::default())?;
    let mut w = io::create(&args.out)?;
    v.write_csv(&mut w)?;
    w.flush()?;
    log::info!("max balance error {:.2e} p.u., at most {} sweeps", v.max_balance_error, v.max_iterations);
    let mut m = RunManifest::new("powerflow", None, hash_json(&(&feeder, stride))).input(&args.loads);
    if let Some(p) = &args.feeder {
        m = m.input(p);
    }
    m.output(&args.out).write_beside(&args.out)?;
    Ok(())
}

/// Voltage magnitudes per bus column of a `powerflow` CSV.
fn read_voltages(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut r = csv::Reader::from_reader(io::open(path)?);
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len().saturating_sub(1)];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (k, col) in cols.iter_mut().enumerate() {
            let v = rec.get(k + 1).unwrap_or("");
            col.push(v.parse().map_err(|_| Error::Csv {
                line: line as u64 + 2,
                message: format!("bad voltage {v:?} in {}", path.display()),
            })?);
        }
    }
    Ok(headers.into_iter().skip(1).zip(cols).collect())
}

#[derive(Serialize, Deserialize)]
struct TransformerSummary {
    fraction_beating_baseline: f64,
    r2_max: Option<f64>,
    r2_min: Option<f64>,
    median_wasserstein_kw: f64,
    median_baseline_wasserstein_kw: f64,
}

#[derive(Serialize, Deserialize)]
struct BusSummary {
    min: f64,
    max: f64,
    mean: f64,
    max_abs_ramp: f64,
    /// Distance to the reference voltages over the reference interquartile range.
    #[serde(skip_serializing_if = "Option::is_none")]
    wasserstein_over_iqr: Option<f64>,
}

#[derive(Serialize, Deserialize, Default)]
struct Summary {
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    transformers: BTreeMap<String, TransformerSummary>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    buses: BTreeMap<String, BusSummary>,
}

fn median(v: &[f64]) -> f64 {
    percentile_sorted(&sorted(v), 50.0).unwrap_or(f64::NAN)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    if args.validation.is_none() && args.voltages.is_none() {
        return Err(Error::Config("report needs --validation, --voltages or both".into()));
    }
    let mut summary = Summary::default();
    let mut m = RunManifest::new("report", None, String::new());
    if let Some(p) = &args.validation {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let reports: BTreeMap<String, ValidationReport> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        for (id, r) in reports {
            summary.transformers.insert(
                id,
                TransformerSummary {
                    fraction_beating_baseline: r.fraction_beating_baseline(),
                    r2_max: r.r2_max,
                    r2_min: r.r2_min,
                    median_wasserstein_kw: median(&r.wasserstein_per_hour),
                    median_baseline_wasserstein_kw: median(&r.baseline_wasserstein_per_hour),
                },
            );
        }
        m = m.input(p);
    }
    if let Some(p) = &args.voltages {
        let volts = read_voltages(p)?;
        let reference = args.reference_voltages.as_deref().map(read_voltages).transpose()?;
        for (bus, v) in &volts {
            if v.is_empty() {
                return Err(Error::Input(format!("{} has no rows", p.display())));
            }
            // undefined for a bus that never moves, such as the slack
            let against = |r: &Vec<f64>| -> Result<Option<f64>> {
                let s = sorted(r);
                let iqr = percentile_sorted(&s, 75.0).unwrap_or(0.0) - percentile_sorted(&s, 25.0).unwrap_or(0.0);
                Ok((iqr > 0.0).then_some(wasserstein1(v, r)? / iqr).filter(|x| x.is_finite()))
            };
            let wasserstein_over_iqr = match reference.as_ref().map(|r| r.get(bus)) {
                Some(Some(r)) => against(r)?,
                Some(None) => return Err(Error::Input(format!("reference voltages have no column {bus}"))),
                None => None,
            };
            summary.buses.insert(
                bus.clone(),
                BusSummary {
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    max_abs_ramp: v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max),
                    wasserstein_over_iqr,
                },
            );
        }
        m = m.input(p);
        if let Some(r) = &args.reference_voltages {
            m = m.input(r);
        }
    }
    io::write_json(&args.out, &summary)?;
    m.config_sha256 = hash_json(&m.inputs);
    m.output(&args.out).write_beside(&args.out)?;
    Ok(())
}

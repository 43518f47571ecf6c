//! Time-series value types, interval segmentation and CSV ingestion.
//!
//! All loads are average power in kW. Smart-meter energy readings (kWh per
//! interval) are converted to kW when they are read.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

macro_rules! transformer_series {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(bound = "T: Scalar")]
        pub struct $name<T> {
            pub transformer_id: String,
            /// Epoch seconds of the first sample.
            pub t0: i64,
            /// Sample spacing in seconds.
            pub dt: i64,
            pub values: Vec<T>,
        }

        impl<T: Scalar> $name<T> {
            pub fn new(transformer_id: impl Into<String>, t0: i64, dt: i64, values: Vec<T>) -> Result<Self> {
                if dt <= 0 {
                    return Err(Error::Config(format!("dt must be positive, got {dt}")));
                }
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Input(format!("non-finite load at sample {i}")));
                }
                Ok(Self { transformer_id: transformer_id.into(), t0, dt, values })
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            /// Timestamp of sample `i`.
            pub fn timestamp(&self, i: usize) -> i64 {
                self.t0 + self.dt * i as i64
            }

            pub fn read_csv<R: Read>(reader: R, dt_hint: Option<i64>) -> Result<Vec<Self>> {
                read_load_csv(reader, dt_hint)?
                    .into_iter()
                    .map(|(id, t0, dt, values)| Self::new(id, t0, dt, values))
                    .collect()
            }

            pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
                write_load_csv(writer, std::slice::from_ref(self).iter().map(|s| (&s.transformer_id, s.t0, s.dt, &s.values[..])))
            }

            /// Writes several series into one file, one block per transformer.
            pub fn write_many_csv<W: Write>(series: &[Self], writer: W) -> Result<()> {
                write_load_csv(writer, series.iter().map(|s| (&s.transformer_id, s.t0, s.dt, &s.values[..])))
            }
        }
    };
}

transformer_series!(
    /// Uniformly sampled instantaneous transformer load (e.g. 1-second data).
    HighResSeries
);

transformer_series!(
    /// Interval-average transformer load as seen by smart meters (e.g. hourly).
    LowResSeries
);

/// Average, maximum and minimum load inside one low-resolution interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct IntervalStats<T> {
    /// Zero-based interval index.
    pub index: usize,
    pub p_avg: T,
    pub p_max: T,
    pub p_min: T,
    pub n_samples: usize,
}

/// One customer's smart-meter series, already converted to kW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CustomerSeries<T> {
    pub customer_id: String,
    pub transformer_id: String,
    pub t0: i64,
    pub dt: i64,
    pub values: Vec<T>,
}

impl<T: Scalar> CustomerSeries<T> {
    pub fn new(
        customer_id: impl Into<String>,
        transformer_id: impl Into<String>,
        t0: i64,
        dt: i64,
        values: Vec<T>,
    ) -> Result<Self> {
        if dt <= 0 {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite load at sample {i}")));
        }
        Ok(Self {
            customer_id: customer_id.into(),
            transformer_id: transformer_id.into(),
            t0,
            dt,
            values,
        })
    }

    /// Builds a series from interval energies (kWh per `dt` seconds).
    pub fn from_kwh(
        customer_id: impl Into<String>,
        transformer_id: impl Into<String>,
        t0: i64,
        dt: i64,
        kwh: Vec<T>,
    ) -> Result<Self> {
        if dt <= 0 {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let to_kw = T::of(3600.0 / dt as f64);
        Self::new(customer_id, transformer_id, t0, dt, kwh.into_iter().map(|e| e * to_kw).collect())
    }

    pub fn kwh(&self) -> Vec<T> {
        let to_kwh = T::of(self.dt as f64 / 3600.0);
        self.values.iter().map(|&p| p * to_kwh).collect()
    }

    pub fn read_csv<R: Read>(reader: R, dt_hint: Option<i64>) -> Result<Vec<Self>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        expect_header(&mut rdr, &["timestamp_s", "customer_id", "transformer_id", "kwh"])?;
        let mut builders: Vec<SeriesBuilder<T>> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut meta: Vec<String> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != 4 {
                return Err(Error::Csv { line, message: format!("expected 4 fields, found {}", rec.len()) });
            }
            let ts = parse_field::<i64>(&rec[0], line, "timestamp_s")?;
            let kwh = parse_value::<T>(&rec[3], line)?;
            let cid = rec[1].to_string();
            let slot = *index.entry(cid.clone()).or_insert_with(|| {
                builders.push(SeriesBuilder::new(cid.clone()));
                meta.push(rec[2].to_string());
                builders.len() - 1
            });
            if meta[slot] != rec[2] {
                return Err(Error::Csv {
                    line,
                    message: format!("customer {cid} changes transformer from {} to {}", meta[slot], &rec[2]),
                });
            }
            builders[slot].push(ts, kwh, line)?;
        }
        builders
            .into_iter()
            .zip(meta)
            .map(|(b, tid)| {
                let (cid, t0, dt, kwh) = b.finish(dt_hint)?;
                Self::from_kwh(cid, tid, t0, dt, kwh)
            })
            .collect()
    }

    pub fn write_many_csv<W: Write>(series: &[Self], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp_s", "customer_id", "transformer_id", "kwh"])?;
        for s in series {
            for (i, e) in s.kwh().into_iter().enumerate() {
                let ts = s.t0 + s.dt * i as i64;
                w.write_record([ts.to_string(), s.customer_id.clone(), s.transformer_id.clone(), e.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of high-resolution samples in one low-resolution interval.
pub fn samples_per_interval(high_dt: i64, low_dt: i64) -> Result<usize> {
    if high_dt <= 0 || low_dt <= 0 {
        return Err(Error::Config(format!("durations must be positive (high dt {high_dt}, low dt {low_dt})")));
    }
    if low_dt % high_dt != 0 {
        return Err(Error::Config(format!(
            "low-resolution dt {low_dt} s is not a multiple of high-resolution dt {high_dt} s"
        )));
    }
    Ok((low_dt / high_dt) as usize)
}

/// Splits a high-resolution series into complete low-resolution intervals and
/// computes mean and extrema of each. A trailing partial interval is dropped.
pub fn segment_and_aggregate<T: Scalar>(hr: &HighResSeries<T>, low_dt: i64) -> Result<Vec<IntervalStats<T>>> {
    let n = samples_per_interval(hr.dt, low_dt)?;
    if hr.values.is_empty() {
        return Err(Error::Input(format!("series {} is empty", hr.transformer_id)));
    }
    if hr.values.len() < n {
        return Err(Error::Input(format!(
            "series {} has {} samples, fewer than one interval of {n}",
            hr.transformer_id,
            hr.values.len()
        )));
    }
    Ok(hr
        .values
        .chunks_exact(n)
        .enumerate()
        .map(|(index, chunk)| interval_stats(index, chunk))
        .collect())
}

pub(crate) fn interval_stats<T: Scalar>(index: usize, chunk: &[T]) -> IntervalStats<T> {
    let mut p_max = chunk[0];
    let mut p_min = chunk[0];
    let mut sum = T::zero();
    for &v in chunk {
        p_max = p_max.max(v);
        p_min = p_min.min(v);
        sum += v;
    }
    // Rounding in the sum can push the mean a hair outside the extrema.
    let p_avg = (sum / T::of_usize(chunk.len())).max(p_min).min(p_max);
    IntervalStats {
        index,
        p_avg,
        p_max,
        p_min,
        n_samples: chunk.len(),
    }
}

/// Low-resolution view of a high-resolution series (interval means).
pub fn downsample<T: Scalar>(hr: &HighResSeries<T>, low_dt: i64) -> Result<LowResSeries<T>> {
    let stats = segment_and_aggregate(hr, low_dt)?;
    LowResSeries::new(hr.transformer_id.clone(), hr.t0, low_dt, stats.iter().map(|s| s.p_avg).collect())
}

/// Sums customer series into a transformer series and adds an approximate
/// transformer loss: `sum * (1 + loss_fraction)`.
pub fn aggregate_customers<T: Scalar>(customers: &[CustomerSeries<T>], loss_fraction: T) -> Result<LowResSeries<T>> {
    let first = customers
        .first()
        .ok_or_else(|| Error::Input("no customer series to aggregate".into()))?;
    if !(loss_fraction >= T::zero() && loss_fraction < T::of(0.2)) {
        return Err(Error::Config(format!("loss fraction {loss_fraction} outside [0, 0.2)")));
    }
    for c in customers {
        if c.t0 != first.t0 || c.dt != first.dt || c.values.len() != first.values.len() {
            return Err(Error::Input(format!(
                "customer {} clock (t0 {}, dt {}, len {}) differs from {} (t0 {}, dt {}, len {})",
                c.customer_id,
                c.t0,
                c.dt,
                c.values.len(),
                first.customer_id,
                first.t0,
                first.dt,
                first.values.len()
            )));
        }
    }
    let scale = T::one() + loss_fraction;
    let values = (0..first.values.len())
        .map(|i| customers.iter().map(|c| c.values[i]).sum::<T>() * scale)
        .collect();
    LowResSeries::new(first.transformer_id.clone(), first.t0, first.dt, values)
}

struct SeriesBuilder<T> {
    id: String,
    t0: Option<i64>,
    dt: Option<i64>,
    last: i64,
    values: Vec<T>,
}

impl<T: Scalar> SeriesBuilder<T> {
    fn new(id: String) -> Self {
        Self { id, t0: None, dt: None, last: 0, values: Vec::new() }
    }

    fn push(&mut self, ts: i64, v: T, line: u64) -> Result<()> {
        match (self.t0, self.dt) {
            (None, _) => self.t0 = Some(ts),
            (Some(_), None) => {
                if ts <= self.last {
                    return Err(Error::Csv {
                        line,
                        message: format!("{}: timestamp {ts} out of order after {}", self.id, self.last),
                    });
                }
                self.dt = Some(ts - self.last);
            }
            (Some(_), Some(dt)) => {
                if ts <= self.last {
                    return Err(Error::Csv {
                        line,
                        message: format!("{}: timestamp {ts} out of order after {}", self.id, self.last),
                    });
                }
                if ts != self.last + dt {
                    return Err(Error::Csv {
                        line,
                        message: format!(
                            "{}: gap in timestamps between {} and {ts} (expected {})",
                            self.id,
                            self.last,
                            self.last + dt
                        ),
                    });
                }
            }
        }
        self.last = ts;
        self.values.push(v);
        Ok(())
    }

    fn finish(self, dt_hint: Option<i64>) -> Result<(String, i64, i64, Vec<T>)> {
        let dt = match (self.dt, dt_hint) {
            (Some(dt), Some(hint)) if dt != hint => {
                return Err(Error::Input(format!("{}: sample spacing {dt} s differs from expected {hint} s", self.id)))
            }
            (Some(dt), _) => dt,
            (None, Some(hint)) => hint,
            (None, None) => {
                return Err(Error::Input(format!("{}: cannot infer sample spacing from a single row", self.id)))
            }
        };
        Ok((self.id, self.t0.unwrap_or(0), dt, self.values))
    }
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header {}, found {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn parse_field<F: std::str::FromStr>(s: &str, line: u64, what: &str) -> Result<F> {
    s.parse::<F>()
        .map_err(|_| Error::Csv { line, message: format!("invalid {what} {s:?}") })
}

fn parse_value<T: Scalar>(s: &str, line: u64) -> Result<T> {
    let v: f64 = parse_field(s, line, "value")?;
    if !v.is_finite() {
        return Err(Error::Csv { line, message: format!("non-finite value {s:?}") });
    }
    Ok(T::of(v))
}

type RawSeries<T> = (String, i64, i64, Vec<T>);

fn read_load_csv<T: Scalar, R: Read>(reader: R, dt_hint: Option<i64>) -> Result<Vec<RawSeries<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    expect_header(&mut rdr, &["timestamp_s", "transformer_id", "p_kw"])?;
    let mut builders: Vec<SeriesBuilder<T>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(Error::Csv { line, message: format!("expected 3 fields, found {}", rec.len()) });
        }
        let ts = parse_field::<i64>(&rec[0], line, "timestamp_s")?;
        let v = parse_value::<T>(&rec[2], line)?;
        let slot = match index.get(&rec[1]) {
            Some(&slot) => slot,
            None => {
                builders.push(SeriesBuilder::new(rec[1].to_string()));
                index.insert(rec[1].to_string(), builders.len() - 1);
                builders.len() - 1
            }
        };
        builders[slot].push(ts, v, line)?;
    }
    builders.into_iter().map(|b| b.finish(dt_hint)).collect()
}

fn write_load_csv<'a, T: Scalar, W: Write>(
    writer: W,
    series: impl Iterator<Item = (&'a String, i64, i64, &'a [T])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp_s", "transformer_id", "p_kw"])?;
    let mut ts_buf = String::new();
    let mut v_buf = String::new();
    for (id, t0, dt, values) in series {
        for (i, v) in values.iter().enumerate() {
            use std::fmt::Write as _;
            ts_buf.clear();
            v_buf.clear();
            write!(ts_buf, "{}", t0 + dt * i as i64).expect("write to String");
            write!(v_buf, "{v}").expect("write to String");
            w.write_record([ts_buf.as_str(), id.as_str(), v_buf.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

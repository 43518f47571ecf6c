//! Radial feeder power flow by backward/forward sweep.
//!
//! Single-phase equivalent, per-unit quantities, constant-power loads. Load
//! reactive power follows from a fixed lagging power factor.

use std::collections::{BTreeMap, VecDeque};

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Context, Error, Result};
use crate::scalar::Scalar;
use crate::series::HighResSeries;

const DEFAULT_FEEDER: &str = include_str!("../data/feeder_default.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Transformer whose load is attached here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u.
    pub x: f64,
}

fn default_pf() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub slack: usize,
    pub v_slack: f64,
    pub s_base_kva: f64,
    pub v_base_kv: f64,
    /// Lagging load power factor.
    #[serde(default = "default_pf")]
    pub power_factor: f64,
}

impl FeederModel {
    /// 12-bus chain with two laterals, loads `S01`..`S11`.
    pub fn default_feeder() -> Self {
        serde_json::from_str(DEFAULT_FEEDER).expect("bundled feeder parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Two buses joined by one line; the far bus carries `load`.
    pub fn two_bus(r: f64, x: f64, load: &str) -> Self {
        Self {
            buses: vec![Bus { id: 0, load: None }, Bus { id: 1, load: Some(load.into()) }],
            lines: vec![Line { from: 0, to: 1, r, x }],
            slack: 0,
            v_slack: 1.0,
            s_base_kva: 100.0,
            v_base_kv: 12.47,
            power_factor: 1.0,
        }
    }
}

/// Validated tree ordering of a feeder.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Bus positions in breadth-first order from the slack.
    order: Vec<usize>,
    /// Parent position and line impedance of every non-slack bus.
    parent: Vec<Option<(usize, f64, f64)>>,
    slack: usize,
}

impl Topology {
    pub fn build(feeder: &FeederModel) -> Result<Self> {
        let n = feeder.buses.len();
        if n == 0 {
            return Err(Error::Input("feeder has no buses".into()));
        }
        let mut pos = BTreeMap::new();
        for (i, b) in feeder.buses.iter().enumerate() {
            if pos.insert(b.id, i).is_some() {
                return Err(Error::Input(format!("duplicate bus id {}", b.id)));
            }
        }
        let lookup = |id: usize| pos.get(&id).copied().ok_or_else(|| Error::Input(format!("line refers to unknown bus {id}")));
        let slack = lookup(feeder.slack)?;
        if feeder.lines.len() != n - 1 {
            return Err(Error::Input(format!(
                "a radial feeder with {n} buses needs {} lines, found {}",
                n - 1,
                feeder.lines.len()
            )));
        }
        let mut adj: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
        for l in &feeder.lines {
            if !(l.r >= 0.0 && l.x >= 0.0 && l.r.is_finite() && l.x.is_finite()) {
                return Err(Error::Input(format!("line {}-{} has invalid impedance", l.from, l.to)));
            }
            let (a, b) = (lookup(l.from)?, lookup(l.to)?);
            if a == b {
                return Err(Error::Input(format!("line {}-{} is a self loop", l.from, l.to)));
            }
            adj[a].push((b, l.r, l.x));
            adj[b].push((a, l.r, l.x));
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, r, x) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, r, x));
                    queue.push_back(v);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Input("feeder is not connected, so it is not a tree".into()));
        }
        Ok(Self { order, parent, slack })
    }

    /// Position of the bus with the largest total impedance magnitude to
    /// the slack.
    pub fn deepest(&self) -> usize {
        let mut z = vec![0.0f64; self.parent.len()];
        for &u in &self.order {
            if let Some((p, r, x)) = self.parent[u] {
                z[u] = z[p] + r.hypot(x);
            }
        }
        let mut best = self.slack;
        for (i, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = i;
            }
        }
        best
    }

    /// Bus positions from the slack down to `a`.
    pub fn path_to(&self, mut a: usize) -> Vec<usize> {
        let mut path = vec![a];
        while let Some((p, _, _)) = self.parent[a] {
            path.push(p);
            a = p;
        }
        path.reverse();
        path
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T> {
    /// Complex bus voltages, p.u., in feeder bus order.
    pub voltages: Vec<Complex<T>>,
    pub iterations: usize,
    /// `|S_slack - sum(S_load) - sum(losses)|`, p.u.
    pub balance_error: T,
}

impl<T: Scalar> Snapshot<T> {
    pub fn magnitudes(&self) -> Vec<T> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }
}

/// Per-unit complex power of a kW load at the feeder's power factor.
pub fn load_pu<T: Scalar>(feeder: &FeederModel, p_kw: T) -> Complex<T> {
    let p = p_kw / T::of(feeder.s_base_kva);
    let pf = feeder.power_factor;
    let q_ratio = if pf >= 1.0 { 0.0 } else { (1.0 - pf * pf).sqrt() / pf };
    Complex::new(p, p * T::of(q_ratio))
}

/// Solves one snapshot with complex per-unit bus loads (feeder bus order).
pub fn solve_pu<T: Scalar>(
    feeder: &FeederModel,
    topo: &Topology,
    loads: &[Complex<T>],
    opts: SolveOptions,
) -> Result<Snapshot<T>> {
    let n = feeder.buses.len();
    if loads.len() != n {
        return Err(Error::Input(format!("{} loads for {n} buses", loads.len())));
    }
    if loads.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
        return Err(Error::Input("bus loads must be finite".into()));
    }
    let v0 = Complex::new(T::of(feeder.v_slack), T::zero());
    let z: Vec<Complex<T>> = topo
        .parent
        .iter()
        .map(|p| p.map_or(Complex::new(T::zero(), T::zero()), |(_, r, x)| Complex::new(T::of(r), T::of(x))))
        .collect();
    let mut v = vec![v0; n];
    let mut branch = vec![Complex::new(T::zero(), T::zero()); n];
    let tol = T::of(opts.tol);
    let mut trace = Vec::new();
    for it in 1..=opts.max_iter {
        backward(topo, loads, &v, &mut branch);
        let mut worst = T::zero();
        for &u in &topo.order[1..] {
            let (p, _, _) = topo.parent[u].expect("non-slack bus has a parent");
            let nv = v[p] - z[u] * branch[u];
            worst = worst.max((nv - v[u]).norm());
            v[u] = nv;
        }
        trace.push(worst.f64());
        if !(worst.is_finite()) {
            break;
        }
        if worst < tol {
            backward(topo, loads, &v, &mut branch);
            let out: Complex<T> = topo.order[1..]
                .iter()
                .filter(|&&u| topo.parent[u].map(|p| p.0) == Some(topo.slack))
                .fold(Complex::new(T::zero(), T::zero()), |a, &u| a + branch[u]);
            let s_slack = v0 * out.conj() + loads[topo.slack];
            let losses: Complex<T> = topo.order[1..]
                .iter()
                .map(|&u| z[u] * Complex::new(branch[u].norm_sqr(), T::zero()))
                .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b);
            let demand = loads.iter().fold(Complex::new(T::zero(), T::zero()), |a, &b| a + b);
            let balance_error = (s_slack - demand - losses).norm();
            return Ok(Snapshot { voltages: v, iterations: it, balance_error });
        }
    }
    Err(Error::NoConvergence { iterations: trace.len(), trace })
}

/// Branch currents from the bus voltages, leaves to root.
fn backward<T: Scalar>(topo: &Topology, loads: &[Complex<T>], v: &[Complex<T>], branch: &mut [Complex<T>]) {
    for (b, (s, vk)) in branch.iter_mut().zip(loads.iter().zip(v)) {
        *b = (s / vk).conj();
    }
    for &u in topo.order[1..].iter().rev() {
        let (p, _, _) = topo.parent[u].expect("non-slack bus has a parent");
        if p != topo.slack {
            let c = branch[u];
            branch[p] += c;
        }
    }
}

fn bus_loads<T: Scalar>(feeder: &FeederModel, kw: &BTreeMap<String, T>) -> Result<Vec<Complex<T>>> {
    feeder
        .buses
        .iter()
        .map(|b| match &b.load {
            None => Ok(Complex::new(T::zero(), T::zero())),
            Some(id) => kw
                .get(id)
                .map(|&p| load_pu(feeder, p))
                .ok_or_else(|| Error::Input(format!("no load given for transformer {id} at bus {}", b.id))),
        })
        .collect()
}

/// Solves one snapshot from kW loads keyed by transformer id.
pub fn solve_snapshot<T: Scalar>(
    feeder: &FeederModel,
    loads_kw: &BTreeMap<String, T>,
    opts: SolveOptions,
) -> Result<Snapshot<T>> {
    let topo = Topology::build(feeder)?;
    solve_pu(feeder, &topo, &bus_loads(feeder, loads_kw)?, opts)
}

/// One solve at the interval-average loads.
pub fn snapshot_from_average<T: Scalar>(feeder: &FeederModel, hourly_kw: &BTreeMap<String, T>) -> Result<Snapshot<T>> {
    solve_snapshot(feeder, hourly_kw, SolveOptions::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VoltageTimeSeries<T> {
    pub bus_ids: Vec<usize>,
    pub timestamps: Vec<i64>,
    /// `|V|` per bus, then per step, p.u.
    pub magnitudes: Vec<Vec<T>>,
    /// Largest power-balance error over all snapshots, p.u.
    pub max_balance_error: T,
    pub max_iterations: usize,
}

impl<T: Scalar> VoltageTimeSeries<T> {
    /// Step-to-step changes of `|V|` at bus position `bus`.
    pub fn ramps(&self, bus: usize) -> Vec<T> {
        self.magnitudes[bus].windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn bus_position(&self, id: usize) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp_s".to_string()];
        header.extend(self.bus_ids.iter().map(|b| format!("v_bus{b}")));
        w.write_record(&header)?;
        for (k, t) in self.timestamps.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.magnitudes.iter().map(|m| m[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves every `stride`-th step of aligned load series, in parallel.
pub fn run_timeseries<T: Scalar>(
    feeder: &FeederModel,
    series: &BTreeMap<String, HighResSeries<T>>,
    stride: usize,
    opts: SolveOptions,
) -> Result<VoltageTimeSeries<T>> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let topo = Topology::build(feeder)?;
    let used: Vec<&HighResSeries<T>> = feeder
        .buses
        .iter()
        .filter_map(|b| b.load.as_ref())
        .map(|id| series.get(id).ok_or_else(|| Error::Input(format!("no series for transformer {id}"))))
        .collect::<Result<_>>()?;
    let first = used.first().ok_or_else(|| Error::Input("feeder has no load buses".into()))?;
    for s in &used {
        if s.t0 != first.t0 || s.dt != first.dt || s.len() != first.len() {
            return Err(Error::Input(format!(
                "series {} is not aligned with {}",
                s.transformer_id, first.transformer_id
            )));
        }
    }
    let steps: Vec<usize> = (0..first.len()).step_by(stride).collect();
    let snaps: Vec<Snapshot<T>> = steps
        .par_iter()
        .map(|&k| {
            let kw: BTreeMap<String, T> = series.iter().map(|(id, s)| (id.clone(), s.values[k])).collect();
            let loads = bus_loads(feeder, &kw)?;
            solve_pu(feeder, &topo, &loads, opts).with_context(|| format!("timestamp {}", first.timestamp(k)))
        })
        .collect::<Result<_>>()?;
    let n = feeder.buses.len();
    let mut magnitudes = vec![Vec::with_capacity(snaps.len()); n];
    let mut max_balance_error = T::zero();
    let mut max_iterations = 0;
    for s in &snaps {
        for (m, v) in magnitudes.iter_mut().zip(&s.voltages) {
            m.push(v.norm());
        }
        max_balance_error = max_balance_error.max(s.balance_error);
        max_iterations = max_iterations.max(s.iterations);
    }
    Ok(VoltageTimeSeries {
        bus_ids: feeder.buses.iter().map(|b| b.id).collect(),
        timestamps: steps.iter().map(|&k| first.timestamp(k)).collect(),
        magnitudes,
        max_balance_error,
        max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loads(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn two_bus_matches_quadratic() {
        let f = FeederModel::two_bus(0.01, 0.0, "L");
        let s = solve_snapshot(&f, &loads(&[("L", 100.0)]), SolveOptions::default()).unwrap();
        let exact = (1.0 + 0.96f64.sqrt()) / 2.0;
        assert!((s.voltages[1].norm() - exact).abs() < 1e-6, "{}", s.voltages[1]);
        assert!(s.balance_error < 1e-5);
    }

    #[test]
    fn zero_load_is_flat() {
        let f = FeederModel::default_feeder();
        let kw: BTreeMap<String, f64> = (1..=11).map(|i| (format!("S{i:02}"), 0.0)).collect();
        let s = solve_snapshot(&f, &kw, SolveOptions::default()).unwrap();
        assert!(s.magnitudes().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn doubling_base_halves_load() {
        let mut f = FeederModel::two_bus(0.01, 0.0, "L");
        let a = solve_snapshot(&f, &loads(&[("L", 50.0)]), SolveOptions::default()).unwrap();
        f.s_base_kva = 200.0;
        let b = solve_snapshot(&f, &loads(&[("L", 100.0)]), SolveOptions::default()).unwrap();
        assert!((a.voltages[1] - b.voltages[1]).norm() < 1e-9);
        let c = solve_snapshot(&f, &loads(&[("L", 50.0)]), SolveOptions::default()).unwrap();
        assert!(c.voltages[1].norm() > a.voltages[1].norm());
    }

    #[test]
    fn bad_topologies() {
        let mut f = FeederModel::default_feeder();
        f.lines[10] = Line { from: 2, to: 4, r: 0.01, x: 0.01 };
        assert!(matches!(Topology::build(&f), Err(Error::Input(_))));
        let mut g = FeederModel::default_feeder();
        g.lines.pop();
        assert!(Topology::build(&g).is_err());
        let mut h = FeederModel::default_feeder();
        h.lines[0].r = -1.0;
        assert!(Topology::build(&h).is_err());
    }

    #[test]
    fn deepest_bus_of_default_feeder() {
        let f = FeederModel::default_feeder();
        let t = Topology::build(&f).unwrap();
        assert_eq!(f.buses[t.deepest()].id, 7);
        assert_eq!(t.path_to(t.deepest()), vec![0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn divergence_reports_trace() {
        let f = FeederModel::two_bus(0.5, 0.0, "L");
        let e = solve_snapshot(&f, &loads(&[("L", 1000.0)]), SolveOptions::default()).unwrap_err();
        match e {
            Error::NoConvergence { iterations, trace } => {
                assert!(iterations > 0);
                assert_eq!(trace.len(), iterations);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn snapshot_of_mean_differs_from_mean_of_snapshots() {
        let f = FeederModel::two_bus(0.05, 0.0, "L");
        let v = |kw: f64| solve_snapshot(&f, &loads(&[("L", kw)]), SolveOptions::default()).unwrap().voltages[1].norm();
        let mean_of = (v(0.0) + v(200.0)) / 2.0;
        let of_mean = snapshot_from_average(&f, &loads(&[("L", 100.0)])).unwrap().voltages[1].norm();
        assert!(of_mean - mean_of > 1e-4, "{of_mean} vs {mean_of}");
    }

    #[test]
    fn timeseries_counts_and_ramps() {
        let f = FeederModel::two_bus(0.01, 0.01, "L");
        let mut m = BTreeMap::new();
        m.insert("L".to_string(), HighResSeries::new("L", 0, 1, vec![20.0f64; 3600]).unwrap());
        let ts = run_timeseries(&f, &m, 1, SolveOptions::default()).unwrap();
        assert_eq!(ts.timestamps.len(), 3600);
        let r = ts.ramps(1);
        assert_eq!(r.len(), 3599);
        assert!(r.iter().all(|&d| d == 0.0));
        let strided = run_timeseries(&f, &m, 10, SolveOptions::default()).unwrap();
        assert_eq!(strided.timestamps.len(), 360);
        assert_eq!(strided.timestamps[1], 10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn voltage_falls_along_paths_and_balances(kw in prop::collection::vec(0.0f64..50.0, 11)) {
                let mut f = FeederModel::default_feeder();
                f.power_factor = 1.0;
                let m: BTreeMap<String, f64> = kw.iter().enumerate().map(|(i, &p)| (format!("S{:02}", i + 1), p)).collect();
                let opts = SolveOptions::default();
                let s = solve_snapshot(&f, &m, opts).unwrap();
                prop_assert!(s.iterations <= 10);
                prop_assert!(s.balance_error <= opts.tol * 10.0);
                let t = Topology::build(&f).unwrap();
                let mag = s.magnitudes();
                for leaf in [7usize, 10, 11] {
                    let path = t.path_to(leaf);
                    for w in path.windows(2) {
                        prop_assert!(mag[w[1]] <= mag[w[0]] + 1e-12);
                    }
                }
            }
        }
    }
}

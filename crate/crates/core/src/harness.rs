//! Experiment specs, Monte-Carlo sweeps and CSV output.
//!
//! Every trial draws its channels and initial points from `seed ^ trial`, so
//! results depend only on the spec and never on scheduling. Trials run on a
//! rayon pool capped by `STAR_SECRECY_THREADS`; aggregation walks trials in
//! index order.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{evaluate_scheme, quantized_rates, random_coefficients, Metric, Scheme, SchemeKind};
use crate::channel::sample_channels;
use crate::error::{Error, Result};
use crate::fullcsi::ahb_solve;
use crate::model::{dbm_to_watts, RadioConfig, RateConfig, SecrecyReport, SystemGeometry, Tolerances, User};
use crate::rng::trial_seed;
use crate::statcsi::{extended_ahb, sop_closed_form, sop_monte_carlo, SopParams};

pub const THREADS_ENV: &str = "STAR_SECRECY_THREADS";
pub const CSV_HEADER: [&str; 8] = ["scheme", "x", "metric", "mean", "std", "trials", "infeasible", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Closed-form against Monte-Carlo outage for random coefficients, versus the surface-eavesdropper distance.
    SopTightness,
    /// Minimum secrecy capacity after every alternation, one curve per BS antenna count.
    ConvergeFull,
    /// Maximum outage after every alternation, one curve per BS antenna count.
    ConvergeStat,
    /// Schemes versus the users' power cap in dBm.
    SweepPower,
    /// Schemes versus the number of surface elements.
    SweepElements,
    /// No-eavesdropper rate versus the number of quantization bits.
    Quantization,
    /// Schemes versus the surface abscissa in meters.
    Placement,
    /// One realization; reports the design instead of a sweep.
    SolveOne,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::SopTightness,
        ExperimentKind::ConvergeFull,
        ExperimentKind::ConvergeStat,
        ExperimentKind::SweepPower,
        ExperimentKind::SweepElements,
        ExperimentKind::Quantization,
        ExperimentKind::Placement,
        ExperimentKind::SolveOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SopTightness => "sop-tightness",
            ExperimentKind::ConvergeFull => "converge-full",
            ExperimentKind::ConvergeStat => "converge-stat",
            ExperimentKind::SweepPower => "sweep-power",
            ExperimentKind::SweepElements => "sweep-elements",
            ExperimentKind::Quantization => "quantization",
            ExperimentKind::Placement => "placement",
            ExperimentKind::SolveOne => "solve-one",
        }
    }

    fn default_axis(self) -> Vec<f64> {
        match self {
            ExperimentKind::SopTightness => vec![10.0, 20.0, 30.0, 40.0, 50.0],
            ExperimentKind::ConvergeFull | ExperimentKind::ConvergeStat => vec![2.0, 4.0],
            ExperimentKind::SweepPower => vec![5.0, 10.0, 15.0, 20.0],
            ExperimentKind::SweepElements => vec![4.0, 8.0, 12.0],
            ExperimentKind::Quantization => vec![1.0, 2.0, 3.0, 4.0],
            ExperimentKind::Placement => vec![10.0, 30.0, 50.0, 70.0, 90.0],
            ExperimentKind::SolveOne => Vec::new(),
        }
    }

    fn uses_schemes(self) -> bool {
        matches!(self, ExperimentKind::SweepPower | ExperimentKind::SweepElements | ExperimentKind::Placement)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    /// Sweep values; their unit depends on the experiment.
    pub axis: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub metric: Metric,
    /// Eavesdropper draws per outage estimate in `sop-tightness`.
    pub mc_trials: usize,
    pub geometry: SystemGeometry,
    pub radio: RadioConfig,
    pub rates: RateConfig,
    pub tolerances: Tolerances,
}

impl ExperimentSpec {
    /// Desk-scale defaults of `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self {
            experiment: kind,
            axis: kind.default_axis(),
            trials: 20,
            seed: 1,
            schemes: SchemeKind::ALL.into_iter().map(Scheme::new).collect(),
            metric: Metric::MinSecrecy,
            mc_trials: 100_000,
            geometry: SystemGeometry::default(),
            radio: RadioConfig::default(),
            rates: RateConfig::default(),
            tolerances: Tolerances::default(),
        }
    }

    /// Defaults of `kind`, then the TOML document `config`, then `key=value` overrides
    /// with dotted keys (`radio.num_ris_elements=16`). Values are TOML literals; bare
    /// words are taken as strings.
    pub fn load(kind: ExperimentKind, config: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut doc = toml::Table::try_from(Self::defaults(kind)).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(text) = config {
            let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            if let Some(v) = user.get("experiment") {
                if v.as_str() != Some(kind.name()) {
                    return Err(Error::Config(format!("config is for experiment {v}, not {kind}")));
                }
            }
            merge(&mut doc, user);
        }
        for o in overrides {
            let (key, value) =
                o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut doc, key.trim(), parse_literal(value.trim()))?;
        }
        let spec: Self = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.trials < 1 {
            return cfg("trials must be at least 1".into());
        }
        let kind = self.experiment;
        if kind != ExperimentKind::SolveOne && self.axis.is_empty() {
            return cfg(format!("{kind} needs a nonempty axis"));
        }
        if self.axis.iter().any(|x| !x.is_finite()) {
            return cfg("axis values must be finite".into());
        }
        let integral = |lo: f64, hi: f64, what: &str| -> Result<()> {
            match self.axis.iter().find(|&&x| x.fract() != 0.0 || x < lo || x > hi) {
                Some(x) => cfg(format!("{kind} axis holds {what} in [{lo}, {hi}], got {x}")),
                None => Ok(()),
            }
        };
        match kind {
            ExperimentKind::SopTightness => {
                if self.axis.iter().any(|&d| !(d > 0.0)) {
                    return cfg("sop-tightness axis holds positive distances".into());
                }
                if self.mc_trials < 1000 {
                    return cfg(format!("mc_trials must be at least 1000, got {}", self.mc_trials));
                }
            }
            ExperimentKind::ConvergeFull | ExperimentKind::ConvergeStat => integral(1.0, 64.0, "antenna counts")?,
            ExperimentKind::SweepElements => integral(1.0, 256.0, "element counts")?,
            ExperimentKind::Quantization => integral(1.0, 16.0, "bit counts")?,
            _ => {}
        }
        if kind.uses_schemes() {
            if self.schemes.is_empty() {
                return cfg(format!("{kind} needs at least one scheme"));
            }
            for s in &self.schemes {
                if s.bits.is_some() && !matches!(s.kind, SchemeKind::StarNoma | SchemeKind::CRisNoma) {
                    return cfg(format!("scheme {s} cannot be quantized"));
                }
            }
        }
        self.geometry.validate().map_err(as_config)?;
        self.radio.validate().map_err(as_config)?;
        self.rates.validate().map_err(as_config)?;
        self.tolerances.validate().map_err(as_config)?;
        Ok(())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_literal(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty override key {key:?}")))?;
    let mut table = doc;
    for p in parts {
        table = match table.get_mut(p) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(Error::Config(format!("unknown override section {p:?} in {key:?}"))),
        };
    }
    if !table.contains_key(last) {
        return Err(Error::Config(format!("unknown override key {key:?}")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub scheme: String,
    pub x: f64,
    pub metric: String,
    /// Mean over the trials that produced a value; `NaN` when none did.
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
    /// Trials that failed. An unreachable rate target still contributes outage 1.
    pub infeasible: usize,
    pub seed: u64,
}

impl ExperimentRecord {
    pub fn summary(&self) -> String {
        format!(
            "{:<16} x={:<8} {}={:.6e} (std {:.3e}, {}/{} infeasible)",
            self.scheme,
            sig9(self.x),
            self.metric,
            self.mean,
            self.std,
            self.infeasible,
            self.trials
        )
    }
}

/// Result of one trial for one series.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    value: Option<f64>,
    failed: bool,
}

impl Sample {
    fn ok(v: f64) -> Self {
        Self { value: Some(v), failed: false }
    }

    fn from_result(r: Result<f64>, metric: Metric) -> Self {
        match r {
            Ok(v) if v.is_finite() => Self::ok(v),
            Err(Error::Infeasible(_)) if metric == Metric::MaxSop => Self { value: Some(1.0), failed: true },
            _ => Self { value: None, failed: true },
        }
    }

    const FAILED: Sample = Sample { value: None, failed: true };
}

fn aggregate(scheme: String, x: f64, metric: &str, samples: &[Sample], seed: u64) -> ExperimentRecord {
    let vals: Vec<f64> = samples.iter().filter_map(|s| s.value).collect();
    let n = vals.len() as f64;
    let mean = if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / n };
    let std = if vals.len() < 2 { 0.0 } else { (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    ExperimentRecord {
        scheme,
        x,
        metric: metric.to_string(),
        mean,
        std,
        trials: samples.len(),
        infeasible: samples.iter().filter(|s| s.failed).count(),
        seed,
    }
}

/// Worker count from `STAR_SECRECY_THREADS`, or rayon's default.
pub fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n >= 1)
}

/// Runs the sweep with the worker cap from the environment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    run_experiment_with_threads(spec, worker_count())
}

/// Runs the sweep on `threads` workers (rayon's default when `None`).
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: Option<usize>) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("cannot start workers: {e}")))?;
    let mut records = pool.install(|| sweep(spec))?;
    sort_records(&mut records);
    Ok(records)
}

/// Sorts rows by `(scheme, x)`.
pub fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.x.total_cmp(&b.x)));
}

/// Evaluates `f` on every (axis point, trial) pair in parallel; returns
/// `out[point][trial]` with panics turned into failed samples.
fn grid<F>(spec: &ExperimentSpec, series: usize, f: F) -> Vec<Vec<Vec<Sample>>>
where
    F: Fn(f64, u64) -> Vec<Sample> + Sync,
{
    use rayon::prelude::*;
    let jobs: Vec<(usize, usize)> =
        (0..spec.axis.len()).flat_map(|p| (0..spec.trials).map(move |t| (p, t))).collect();
    let results: Vec<Vec<Sample>> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let seed = trial_seed(spec.seed, t as u64);
            match catch_unwind(AssertUnwindSafe(|| f(spec.axis[p], seed))) {
                Ok(v) if v.len() == series => v,
                _ => vec![Sample::FAILED; series],
            }
        })
        .collect();
    let mut out = vec![Vec::with_capacity(spec.trials); spec.axis.len()];
    for ((p, _), r) in jobs.into_iter().zip(results) {
        out[p].push(r);
    }
    out
}

fn column(rows: &[Vec<Sample>], k: usize) -> Vec<Sample> {
    rows.iter().map(|r| r[k]).collect()
}

fn sweep(spec: &ExperimentSpec) -> Result<Vec<ExperimentRecord>> {
    match spec.experiment {
        ExperimentKind::SopTightness => Ok(sop_tightness(spec)),
        ExperimentKind::ConvergeFull | ExperimentKind::ConvergeStat => Ok(convergence(spec)),
        ExperimentKind::SweepPower | ExperimentKind::SweepElements | ExperimentKind::Placement => Ok(scheme_sweep(spec)),
        ExperimentKind::Quantization => Ok(quantization(spec)),
        ExperimentKind::SolveOne => Err(Error::Config("solve-one has no sweep; use solve_one".into())),
    }
}

/// Geometry with the eavesdropper moved to `distance` from the surface along
/// the surface-to-eavesdropper direction of `geometry`.
pub fn eavesdropper_at(geometry: &SystemGeometry, distance: f64) -> Result<SystemGeometry> {
    let d: Vec<f64> = (0..3).map(|k| geometry.eve_pos[k] - geometry.ris_pos[k]).collect();
    let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(len > 0.0) {
        return Err(Error::Config("eavesdropper sits on the surface".into()));
    }
    let mut g = *geometry;
    for k in 0..3 {
        g.eve_pos[k] = geometry.ris_pos[k] + d[k] / len * distance;
    }
    Ok(g)
}

const SOP_SERIES: [&str; 4] = ["analytic-iu", "analytic-ou", "monte-carlo-iu", "monte-carlo-ou"];

fn sop_tightness(spec: &ExperimentSpec) -> Vec<ExperimentRecord> {
    let radio = spec.radio;
    let rows = grid(spec, 4, |dist, seed| {
        let run = || -> Result<Vec<f64>> {
            let geometry = eavesdropper_at(&spec.geometry, dist)?;
            let ch = sample_channels(&geometry, &radio, seed)?;
            let coeffs = random_coefficients(radio.num_ris_elements, seed);
            let ls = ch.large_scale();
            let mut out = vec![0.0; 4];
            for u in User::BOTH {
                let p = radio.p_max(u);
                let gap = spec.rates.gap(u);
                let params =
                    SopParams::new(coeffs.beta(u), ch.h_user_small(u), ls.eve * ls.of(u), gap, p, radio.noise_power)?;
                out[u.index()] = sop_closed_form(&params)?;
                out[2 + u.index()] =
                    sop_monte_carlo(&coeffs, u, &ch, gap, p, radio.noise_power, spec.mc_trials, seed)?.0;
            }
            Ok(out)
        };
        match run() {
            Ok(v) => v.into_iter().map(Sample::ok).collect(),
            Err(_) => vec![Sample::FAILED; 4],
        }
    });
    let mut records = Vec::new();
    for (p, &x) in spec.axis.iter().enumerate() {
        for (k, name) in SOP_SERIES.iter().enumerate() {
            records.push(aggregate(name.to_string(), x, "sop", &column(&rows[p], k), spec.seed));
        }
    }
    records
}

fn convergence(spec: &ExperimentSpec) -> Vec<ExperimentRecord> {
    let full = spec.experiment == ExperimentKind::ConvergeFull;
    let max_len = spec.tolerances.max_alt;
    let rows = grid(spec, max_len, |m, seed| {
        let radio = RadioConfig { num_bs_antennas: m as usize, ..spec.radio };
        let run = || -> Result<Vec<f64>> {
            let ch = sample_channels(&spec.geometry, &radio, seed)?;
            Ok(if full {
                ahb_solve(&ch, &radio, &spec.tolerances, seed)?.trace
            } else {
                extended_ahb(&ch, &radio, &spec.rates, &spec.tolerances, seed)?.trace
            })
        };
        match run() {
            // a settled run keeps its last value for the remaining iterations
            Ok(trace) if !trace.is_empty() => {
                let last = *trace.last().expect("nonempty");
                (0..max_len).map(|k| Sample::ok(trace.get(k).copied().unwrap_or(last))).collect()
            }
            _ => vec![Sample::FAILED; max_len],
        }
    });
    let metric = if full { Metric::MinSecrecy } else { Metric::MaxSop };
    let mut records = Vec::new();
    for (p, &m) in spec.axis.iter().enumerate() {
        for k in 0..max_len {
            let name = format!("star-noma-m{}", m as usize);
            records.push(aggregate(name, (k + 1) as f64, metric.name(), &column(&rows[p], k), spec.seed));
        }
    }
    records
}

/// Spec parameters at one axis point of a scheme sweep.
fn at_point(spec: &ExperimentSpec, x: f64) -> (SystemGeometry, RadioConfig) {
    let (mut g, mut r) = (spec.geometry, spec.radio);
    match spec.experiment {
        ExperimentKind::SweepPower => {
            r.p_max_iu = dbm_to_watts(x);
            r.p_max_ou = dbm_to_watts(x);
        }
        ExperimentKind::SweepElements => r.num_ris_elements = x as usize,
        ExperimentKind::Placement => g.ris_pos[0] = x,
        _ => {}
    }
    (g, r)
}

fn scheme_sweep(spec: &ExperimentSpec) -> Vec<ExperimentRecord> {
    let n = spec.schemes.len();
    let rows = grid(spec, n, |x, seed| {
        let (geometry, radio) = at_point(spec, x);
        let ch = match sample_channels(&geometry, &radio, seed) {
            Ok(ch) => ch,
            Err(_) => return vec![Sample::FAILED; n],
        };
        spec.schemes
            .iter()
            .map(|&s| {
                let r = evaluate_scheme(s, spec.metric, &ch, &radio, &spec.rates, &spec.tolerances, seed).map(|r| r.value);
                Sample::from_result(r, spec.metric)
            })
            .collect()
    });
    let mut records = Vec::new();
    for (p, &x) in spec.axis.iter().enumerate() {
        for (k, s) in spec.schemes.iter().enumerate() {
            records.push(aggregate(s.to_string(), x, spec.metric.name(), &column(&rows[p], k), spec.seed));
        }
    }
    records
}

/// Every trial designs the surface once and evaluates all bit counts on it,
/// so the axis is not a grid dimension here.
fn quantization(spec: &ExperimentSpec) -> Vec<ExperimentRecord> {
    let bits: Vec<u32> = spec.axis.iter().map(|&q| q as u32).collect();
    let one_point = ExperimentSpec { axis: vec![0.0], ..spec.clone() };
    let series = bits.len() + 1;
    let rows = grid(&one_point, series, |_, seed| {
        let run = || -> Result<Vec<f64>> {
            let ch = sample_channels(&spec.geometry, &spec.radio, seed)?;
            let r = quantized_rates(&ch, &spec.radio, &spec.tolerances, &bits, seed)?;
            Ok(std::iter::once(r.continuous).chain(r.quantized.into_iter().map(|(_, v)| v)).collect())
        };
        match run() {
            Ok(v) => v.into_iter().map(Sample::ok).collect(),
            Err(_) => vec![Sample::FAILED; series],
        }
    });
    let mut records = Vec::new();
    let continuous = column(&rows[0], 0);
    for (k, &q) in spec.axis.iter().enumerate() {
        records.push(aggregate("continuous".into(), q, Metric::Rate.name(), &continuous, spec.seed));
        records.push(aggregate("quantized".into(), q, Metric::Rate.name(), &column(&rows[0], k + 1), spec.seed));
    }
    records
}

/// Designs one realization drawn from `spec.seed`: the full-CSI pipeline for the
/// secrecy and rate metrics, the outage pipeline for `max-sop`.
pub fn solve_one(spec: &ExperimentSpec) -> Result<SecrecyReport> {
    spec.validate()?;
    let ch = sample_channels(&spec.geometry, &spec.radio, spec.seed)?;
    match spec.metric {
        Metric::MaxSop => extended_ahb(&ch, &spec.radio, &spec.rates, &spec.tolerances, spec.seed)?
            .report
            .ok_or_else(|| Error::Degenerate("outage design has no NOMA report".into())),
        Metric::MinSecrecy => Ok(ahb_solve(&ch, &spec.radio, &spec.tolerances, spec.seed)?.report),
        Metric::Rate => Ok(ahb_solve(&ch.without_eavesdropper(), &spec.radio, &spec.tolerances, spec.seed)?.report),
    }
}

/// Nine significant digits in the shortest exponent form that reads back exactly.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded:e}")
}

/// CSV text of `records` in the given order.
pub fn to_csv(records: &[ExperimentRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in records {
        w.write_record([
            r.scheme.clone(),
            sig9(r.x),
            r.metric.clone(),
            sig9(r.mean),
            sig9(r.std),
            r.trials.to_string(),
            r.infeasible.to_string(),
            r.seed.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `records` sorted by `(scheme, x)` to `path`.
pub fn emit_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let text = to_csv(&sorted)?;
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Parses CSV produced by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
    let int = |s: &str| -> Result<u64> { s.parse().map_err(|_| Error::Parse(format!("bad integer {s:?}"))) };
    rdr.records()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse(e.to_string()))?;
            Ok(ExperimentRecord {
                scheme: row[0].to_string(),
                x: num(&row[1])?,
                metric: row[2].to_string(),
                mean: num(&row[3])?,
                std: num(&row[4])?,
                trials: int(&row[5])? as usize,
                infeasible: int(&row[6])? as usize,
                seed: int(&row[7])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_rounds_and_reads_back() {
        assert_eq!(sig9(10.0), "1e1");
        assert_eq!(sig9(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(sig9(f64::NAN), "NaN");
        let v = 4.0441934380383;
        let back: f64 = sig9(v).parse().unwrap();
        assert!((back - v).abs() <= 5e-9 * v);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let o = vec!["radio.num_ris_elements=16".to_string(), "schemes=[\"star-noma\"]".to_string(), "trials=3".into()];
        let s = ExperimentSpec::load(ExperimentKind::SweepPower, None, &o).unwrap();
        assert_eq!(s.radio.num_ris_elements, 16);
        assert_eq!(s.trials, 3);
        assert_eq!(s.schemes, vec![Scheme::new(SchemeKind::StarNoma)]);
        assert!(ExperimentSpec::load(ExperimentKind::SweepPower, None, &["radio.nope=1".into()]).is_err());
        assert!(ExperimentSpec::load(ExperimentKind::SweepPower, Some("bogus = 1"), &[]).is_err());
    }

    #[test]
    fn spec_round_trips_through_toml() {
        for kind in ExperimentKind::ALL {
            let s = ExperimentSpec::defaults(kind);
            let text = s.to_toml().unwrap();
            assert_eq!(ExperimentSpec::load(kind, Some(&text), &[]).unwrap(), s);
        }
    }
}

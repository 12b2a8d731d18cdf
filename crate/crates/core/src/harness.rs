//! Experiment definitions, Monte Carlo orchestration, CSV output and the
//! runtime benchmark.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ep_analog_np_digital, np_analog_ep_digital, run_baseline, BaselineKind};
use crate::channel::{draw_channel, SystemConfig};
use crate::detect::SolverKind;
use crate::error::{Error, Result};
use crate::hybrid::{alternate, alternate_dynamic};
use crate::wmmse::{sum_rate, wmmse_fully_digital, FullyDigitalPrecoder};
use crate::CMatrix;

pub const SCHEMA_VERSION: u32 = 1;
pub const DESK_TRIALS: usize = 20;
pub const FULL_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    SdHybrid,
    EpHybrid,
    Altmin1,
    #[serde(rename = "altmin1-q")]
    Altmin1Q,
    #[serde(rename = "altmin2-q")]
    Altmin2Q,
    FullyDigital,
    NpAnalogEpDigital,
    EpAnalogNpDigital,
    DynamicSd,
    DynamicEp,
}

impl Scheme {
    pub const ALL: [Scheme; 10] = [
        Scheme::SdHybrid,
        Scheme::EpHybrid,
        Scheme::Altmin1,
        Scheme::Altmin1Q,
        Scheme::Altmin2Q,
        Scheme::FullyDigital,
        Scheme::NpAnalogEpDigital,
        Scheme::EpAnalogNpDigital,
        Scheme::DynamicSd,
        Scheme::DynamicEp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SdHybrid => "sd-hybrid",
            Scheme::EpHybrid => "ep-hybrid",
            Scheme::Altmin1 => "altmin1",
            Scheme::Altmin1Q => "altmin1-q",
            Scheme::Altmin2Q => "altmin2-q",
            Scheme::FullyDigital => "fully-digital",
            Scheme::NpAnalogEpDigital => "np-analog-ep-digital",
            Scheme::EpAnalogNpDigital => "ep-analog-np-digital",
            Scheme::DynamicSd => "dynamic-sd",
            Scheme::DynamicEp => "dynamic-ep",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    TotalPowerDbm,
    NSubcarriers,
    MRf,
    AnalogBits,
    QuantLevels,
    NTx,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::TotalPowerDbm => "total_power_dbm",
            SweepParam::NSubcarriers => "n_subcarriers",
            SweepParam::MRf => "m_rf",
            SweepParam::AnalogBits => "analog_bits",
            SweepParam::QuantLevels => "quant_levels",
            SweepParam::NTx => "n_tx",
        }
    }

    /// Writes `value` into the matching configuration field.
    pub fn apply(self, config: &mut SystemConfig, value: f64) -> Result<()> {
        if self == SweepParam::TotalPowerDbm {
            config.total_power_dbm = value;
            return Ok(());
        }
        if value.fract() != 0.0 || value < 0.0 || value > u32::MAX as f64 {
            return Err(Error::Config(format!("{} needs a non-negative integer, got {value}", self.name())));
        }
        let n = value as usize;
        match self {
            SweepParam::NSubcarriers => config.n_subcarriers = n,
            SweepParam::MRf => config.m_rf = n,
            SweepParam::AnalogBits => config.analog_bits = n as u32,
            SweepParam::QuantLevels => config.quant_levels = n as u32,
            SweepParam::NTx => config.n_tx = n,
            SweepParam::TotalPowerDbm => unreachable!(),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SumRateAvg,
    SumRateTotal,
    Mse,
    Runtime,
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `N_T = 16`, `S = 8`, 20 trials.
    Desk,
    /// Full size: `N_T = 64`, `S = 64`, 100 trials.
    Paper,
}

/// One experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub base: SystemConfig,
    /// One axis for a curve, two for a grid.
    pub sweep: Vec<SweepAxis>,
    pub schemes: Vec<Scheme>,
    /// Falls back to the preset's trial count when absent.
    #[serde(default)]
    pub n_trials: Option<usize>,
    pub seed: u64,
    pub outputs: Vec<Metric>,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.sweep.is_empty() || self.sweep.len() > 2 {
            return bad("sweep needs one or two axes");
        }
        if self.sweep.iter().any(|a| a.values.is_empty()) {
            return bad("sweep values must be nonempty");
        }
        if self.sweep.len() == 2 && self.sweep[0].parameter == self.sweep[1].parameter {
            return bad("sweep axes must differ");
        }
        if self.schemes.is_empty() {
            return bad("scheme list must be nonempty");
        }
        if self.outputs.is_empty() {
            return bad("output list must be nonempty");
        }
        if self.n_trials == Some(0) {
            return bad("n_trials must be at least 1");
        }
        for point in self.points() {
            self.config_at(&point)?;
        }
        Ok(())
    }

    pub fn trials(&self) -> usize {
        self.n_trials.unwrap_or(DESK_TRIALS)
    }

    /// Scales the base configuration to a preset; explicit trial counts win.
    pub fn with_preset(mut self, preset: Preset) -> Self {
        let (n_tx, s, trials) = match preset {
            Preset::Desk => (16, 8, DESK_TRIALS),
            Preset::Paper => (64, 64, FULL_TRIALS),
        };
        self.base.n_tx = n_tx;
        self.base.n_subcarriers = s;
        self.n_trials.get_or_insert(trials);
        self
    }

    /// Cartesian product of the sweep axes, first axis outermost.
    pub fn points(&self) -> Vec<Vec<(SweepParam, f64)>> {
        let mut out: Vec<Vec<(SweepParam, f64)>> = vec![vec![]];
        for axis in &self.sweep {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.parameter, v));
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn config_at(&self, point: &[(SweepParam, f64)]) -> Result<SystemConfig> {
        let mut cfg = self.base.clone();
        cfg.seed = self.seed;
        for &(p, v) in point {
            p.apply(&mut cfg, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub scheme: Scheme,
    pub sweep: Vec<(SweepParam, f64)>,
    pub trial: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_time_ms: f64,
}

impl ResultRow {
    pub fn sweep_label(&self) -> String {
        sweep_label(&self.sweep)
    }

    pub fn is_error(&self) -> bool {
        self.metric.starts_with("error:")
    }
}

pub fn sweep_label(point: &[(SweepParam, f64)]) -> String {
    point.iter().map(|(p, v)| format!("{}={v}", p.name())).collect::<Vec<_>>().join(";")
}

fn canonical_cmp(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
    a.experiment
        .cmp(&b.experiment)
        .then(a.scheme.cmp(&b.scheme))
        .then_with(|| {
            for (x, y) in a.sweep.iter().zip(&b.sweep) {
                let o = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1));
                if o.is_ne() {
                    return o;
                }
            }
            a.sweep.len().cmp(&b.sweep.len())
        })
        .then(a.trial.cmp(&b.trial))
        .then(a.metric.cmp(&b.metric))
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(canonical_cmp);
}

struct SchemeOutput {
    effective: CMatrix,
    mse: f64,
    trace: Vec<f64>,
}

fn run_scheme(scheme: Scheme, fd: &FullyDigitalPrecoder, cfg: &SystemConfig) -> Result<SchemeOutput> {
    let hybrid = |hp: crate::HybridPrecoder, trace: Vec<f64>| SchemeOutput {
        mse: hp.objective(&fd.f_fd),
        effective: hp.effective(),
        trace,
    };
    let baseline = |kind| run_baseline(fd, cfg, kind).map(|(hp, t)| hybrid(hp, t.objective_per_iter));
    match scheme {
        Scheme::SdHybrid => alternate(fd, cfg, SolverKind::Sesd).map(|(hp, t)| hybrid(hp, t.objective_per_outer_iter)),
        Scheme::EpHybrid => alternate(fd, cfg, SolverKind::Ep).map(|(hp, t)| hybrid(hp, t.objective_per_outer_iter)),
        Scheme::DynamicSd => {
            alternate_dynamic(fd, cfg, SolverKind::Sesd).map(|(hp, t)| hybrid(hp, t.objective_per_outer_iter))
        }
        Scheme::DynamicEp => {
            alternate_dynamic(fd, cfg, SolverKind::Ep).map(|(hp, t)| hybrid(hp, t.objective_per_outer_iter))
        }
        Scheme::Altmin1 => baseline(BaselineKind::Altmin1),
        Scheme::Altmin1Q => baseline(BaselineKind::Altmin1Quantized),
        Scheme::Altmin2Q => baseline(BaselineKind::Altmin2Quantized),
        Scheme::FullyDigital => Ok(SchemeOutput {
            effective: fd.f_fd.clone(),
            mse: 0.0,
            trace: vec![],
        }),
        Scheme::NpAnalogEpDigital => np_analog_ep_digital(fd, cfg).map(|hp| hybrid(hp, vec![])),
        Scheme::EpAnalogNpDigital => ep_analog_np_digital(fd, cfg).map(|hp| hybrid(hp, vec![])),
    }
}

fn run_point(spec: &ExperimentSpec, point: &[(SweepParam, f64)], trial: usize) -> Vec<ResultRow> {
    let row = |scheme, metric: String, value, ms| ResultRow {
        experiment: spec.name.clone(),
        scheme,
        sweep: point.to_vec(),
        trial,
        seed: spec.seed,
        metric,
        value,
        wall_time_ms: ms,
    };
    let setup = spec.config_at(point).and_then(|cfg| {
        let ch = draw_channel(&cfg, trial as u64)?;
        let n0 = cfg.noise_power_mw();
        let (fd, _) = wmmse_fully_digital(&ch, cfg.subcarrier_power_mw(), n0, cfg.wmmse_tol, cfg.wmmse_max_iter)?;
        Ok((cfg, ch, fd, n0))
    });
    let (cfg, ch, fd, n0) = match setup {
        Ok(s) => s,
        Err(e) => {
            return spec
                .schemes
                .iter()
                .map(|&s| row(s, format!("error:{}", e.kind()), f64::NAN, 0.0))
                .collect()
        }
    };
    let mut rows = vec![];
    for &scheme in &spec.schemes {
        let start = Instant::now();
        let out = run_scheme(scheme, &fd, &cfg).and_then(|o| Ok((sum_rate(&ch, &o.effective, n0)?, o)));
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let (rate, out) = match out {
            Ok(v) => v,
            Err(e) => {
                rows.push(row(scheme, format!("error:{}", e.kind()), f64::NAN, ms));
                continue;
            }
        };
        for metric in &spec.outputs {
            match metric {
                Metric::SumRateAvg => rows.push(row(scheme, "sum_rate_avg".into(), rate.sum_rate_per_subcarrier_avg, ms)),
                Metric::SumRateTotal => rows.push(row(scheme, "sum_rate_total".into(), rate.total_sum_rate, ms)),
                Metric::Mse => rows.push(row(scheme, "mse".into(), out.mse, ms)),
                Metric::Runtime => rows.push(row(scheme, "runtime_ms".into(), ms, ms)),
                Metric::Trace => {
                    for (i, v) in out.trace.iter().enumerate() {
                        rows.push(row(scheme, format!("trace:{i:04}"), *v, ms));
                    }
                }
            }
        }
    }
    rows
}

/// Runs every (sweep point, trial) on a pool of `parallelism` threads and
/// returns canonically sorted rows.
pub fn run_experiment(spec: &ExperimentSpec, parallelism: usize) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let jobs: Vec<(Vec<(SweepParam, f64)>, usize)> = spec
        .points()
        .into_iter()
        .flat_map(|p| (0..spec.trials()).map(move |t| (p.clone(), t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut rows: Vec<ResultRow> =
        pool.install(|| jobs.par_iter().flat_map_iter(|(p, t)| run_point(spec, p, *t)).collect());
    sort_rows(&mut rows);
    Ok(rows)
}

pub const CSV_HEADER: [&str; 7] = ["experiment", "scheme", "sweep_value", "trial", "seed", "metric", "value"];
pub const TIMING_HEADER: [&str; 6] = ["experiment", "scheme", "sweep_value", "trial", "seed", "wall_time_ms"];

pub fn format_value(v: f64) -> String {
    format!("{v:.9e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{other:?}")),
    }
}

/// Deterministic result file: header plus canonically sorted rows, without
/// wall-clock columns so reruns are byte-identical.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &sorted {
        w.write_record([
            r.experiment.as_str(),
            r.scheme.name(),
            &r.sweep_label(),
            &r.trial.to_string(),
            &r.seed.to_string(),
            &r.metric,
            &format_value(r.value),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock companion file, one line per (scheme, sweep value, trial).
pub fn emit_timing_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut seen = BTreeMap::new();
    for r in rows {
        let key = (r.scheme, r.sweep_label(), r.trial);
        seen.entry(key).or_insert((r.experiment.clone(), r.seed, r.wall_time_ms));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TIMING_HEADER).map_err(csv_err)?;
    for ((scheme, sweep, trial), (exp, seed, ms)) in seen {
        w.write_record([exp.as_str(), scheme.name(), &sweep, &trial.to_string(), &seed.to_string(), &format_value(ms)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A row read back from a result file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ParsedRow {
    pub experiment: String,
    pub scheme: String,
    pub sweep_value: String,
    pub trial: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub fn read_csv(path: &Path) -> Result<Vec<ParsedRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Output of `git describe`, or `"unknown"` outside a repository.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub git_describe: String,
    pub preset: Option<Preset>,
    pub n_trials: usize,
    pub parallelism: usize,
    pub rows: usize,
    pub error_rows: usize,
    pub wall_clock_s: f64,
    pub scheme_wall_clock_ms: BTreeMap<String, f64>,
    pub csv: String,
    pub timing_csv: Option<String>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec, preset: Option<Preset>, parallelism: usize, rows: &[ResultRow], wall_clock_s: f64) -> Self {
        let mut per_scheme: BTreeMap<String, f64> = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        for r in rows {
            if seen.insert((r.scheme, r.sweep_label(), r.trial)) {
                *per_scheme.entry(r.scheme.name().to_string()).or_default() += r.wall_time_ms;
            }
        }
        Manifest {
            experiment: spec.name.clone(),
            schema_version: spec.schema_version,
            config_hash: spec.hash(),
            seed: spec.seed,
            git_describe: git_describe(),
            preset,
            n_trials: spec.trials(),
            parallelism,
            rows: rows.len(),
            error_rows: rows.iter().filter(|r| r.is_error()).count(),
            wall_clock_s,
            scheme_wall_clock_ms: per_scheme,
            csv: format!("{}.csv", spec.name),
            timing_csv: spec.outputs.contains(&Metric::Runtime).then(|| format!("{}_timing.csv", spec.name)),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| Error::Config(e.to_string()))?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Mean full-design wall time of one solver at one RF-chain count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeRow {
    pub solver: SolverKind,
    pub m_rf: usize,
    pub trials: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub mean_outer_iterations: f64,
}

/// Times SD and EP alternation for each RF-chain count on a single thread.
/// Only the analog and digital solves are counted; the fully-digital target
/// and the initialization are excluded.
pub fn runtime_benchmark(m_rf_list: &[usize], config: &SystemConfig, n_trials: usize) -> Result<Vec<RuntimeRow>> {
    if m_rf_list.is_empty() {
        return Err(Error::param("m_rf list must be nonempty"));
    }
    if n_trials == 0 {
        return Err(Error::param("n_trials must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let mut out = vec![];
        for solver in [SolverKind::Sesd, SolverKind::Ep] {
            for &m_rf in m_rf_list {
                let cfg = SystemConfig { m_rf, ..config.clone() };
                cfg.validate()?;
                let mut times = vec![];
                let mut iters = 0.0;
                for trial in 0..n_trials {
                    let ch = draw_channel(&cfg, trial as u64)?;
                    let (fd, _) = wmmse_fully_digital(
                        &ch,
                        cfg.subcarrier_power_mw(),
                        cfg.noise_power_mw(),
                        cfg.wmmse_tol,
                        cfg.wmmse_max_iter,
                    )?;
                    let (_, trace) = alternate(&fd, &cfg, solver)?;
                    times.push(trace.design_time().as_secs_f64());
                    iters += trace.outer_iterations() as f64;
                }
                let n = times.len() as f64;
                let mean = times.iter().sum::<f64>() / n;
                let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                out.push(RuntimeRow {
                    solver,
                    m_rf,
                    trials: n_trials,
                    mean_s: mean,
                    std_s: var.sqrt(),
                    mean_outer_iterations: iters / n,
                });
            }
        }
        Ok(out)
    })
}

/// Mean and standard error of `metric` per (scheme, sweep label), skipping
/// error rows.
pub fn summarize(rows: &[ResultRow], metric: &str) -> BTreeMap<(Scheme, String), (f64, f64, usize)> {
    let mut acc: BTreeMap<(Scheme, String), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric && r.value.is_finite()) {
        acc.entry((r.scheme, r.sweep_label())).or_default().push(r.value);
    }
    acc.into_iter()
        .map(|(k, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (k, (mean, (var / n).sqrt(), v.len()))
        })
        .collect()
}

/// Outcome of [`oracle_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub instances: usize,
    /// Instances where the sphere decoder and exhaustive search disagree.
    pub mismatches: Vec<usize>,
    /// Largest residual gap, recomputed from the returned vectors.
    pub max_gap: f64,
    pub sesd_nodes: u64,
    pub full_tree_nodes: u64,
    pub elapsed_s: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares `sesd_solve` against exhaustive search on random instances with
/// `M ∈ {2,3,4}` over analog alphabets with `b ∈ {1,2}` and digital grids
/// with `L ∈ {2,4}`.
pub fn oracle_check(n_instances: usize, seed: u64) -> Result<OracleReport> {
    use crate::alphabets::Alphabet;
    use crate::detect::{brute_force_ml, prepare_triangular, sesd_solve};
    use crate::linalg::residual_sq;
    use crate::{CVector, Complex64};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    let alphabets = [
        Alphabet::analog(1)?,
        Alphabet::analog(2)?,
        Alphabet::digital_complex(2, 1.0)?,
        Alphabet::digital_complex(4, 0.5)?,
    ];
    let start = Instant::now();
    let mut rng = crate::channel::stream_rng(seed, 0, crate::channel::AUX_STREAM);
    let gauss = |rng: &mut rand_chacha::ChaCha12Rng| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    let mut report = OracleReport {
        instances: n_instances,
        mismatches: vec![],
        max_gap: 0.0,
        sesd_nodes: 0,
        full_tree_nodes: 0,
        elapsed_s: 0.0,
    };
    for inst in 0..n_instances {
        let m = 2 + inst % 3;
        let n = m + rng.random_range(0..3);
        let a = &alphabets[(inst / 3) % alphabets.len()];
        let g = CMatrix::from_fn(n, m, |_, _| gauss(&mut rng));
        let truth = CVector::from_fn(m, |_, _| a.labels()[rng.random_range(0..a.len())]);
        let c = &g * truth + CVector::from_fn(n, |_, _| gauss(&mut rng) * 0.5);
        let bf = brute_force_ml(&c, &g, a)?;
        let sd = sesd_solve(&prepare_triangular(&g, &c, 0.0)?, a)?;
        let gap = (residual_sq(&c, &g, &sd.z) - residual_sq(&c, &g, &bf.z)).abs();
        report.max_gap = report.max_gap.max(gap);
        if sd.indices != bf.indices || gap > 1e-10 * bf.objective.max(1.0) {
            report.mismatches.push(inst);
        }
        report.sesd_nodes += sd.nodes_visited;
        report.full_tree_nodes += (1..=m as u32).map(|l| (a.len() as u64).pow(l)).sum::<u64>();
    }
    report.elapsed_s = start.elapsed().as_secs_f64();
    Ok(report)
}

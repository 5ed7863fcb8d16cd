use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{DecodeConfig, ExperimentConfig};
use super::seeds::trial_seed;
use super::trial::{run_trial, run_trial_variants, TrialMetrics};
use crate::codebook::Codebook;
use crate::error::{Error, Result};

/// Binomial proportion with its standard error and a 3-standard-error band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub count: usize,
    pub total: usize,
    pub rate: f64,
    pub se: f64,
    pub low: f64,
    pub high: f64,
}

impl Estimate {
    pub fn new(count: usize, total: usize) -> Self {
        let rate = if total > 0 { count as f64 / total as f64 } else { 0.0 };
        let se = if total > 0 { (rate * (1.0 - rate) / total as f64).sqrt() } else { 0.0 };
        Self { count, total, rate, se, low: (rate - 3.0 * se).max(0.0), high: (rate + 3.0 * se).min(1.0) }
    }

    /// Whether `p` lies within three standard errors of the estimate, the standard error
    /// being evaluated at `p` itself.
    pub fn agrees_with(&self, p: f64) -> bool {
        let se = (p * (1.0 - p) / self.total.max(1) as f64).sqrt();
        (self.rate - p).abs() <= 3.0 * se
    }
}

/// Metrics of one trial with its wall-clock time.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub metrics: TrialMetrics,
    pub seconds: f64,
}

/// Runs `f` on a pool of `threads` workers, or the global pool when `None`.
pub fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn wrap(trial: usize, seed: u64) -> impl Fn(Error) -> Error {
    move |e| Error::Trial { trial, seed, source: Box::new(e) }
}

/// Runs `cfg.trials` trials; trial `t` uses seed `trial_seed(cfg.scenario.seed, t)`.
/// Results are in trial order whatever the scheduling.
pub fn run_trials(cfg: &ExperimentConfig, codebook: &Codebook<f64>) -> Result<Vec<TrialReport>> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.scenario.seed, t);
            let start = Instant::now();
            let metrics = run_trial(cfg, codebook, seed).map_err(wrap(t, seed))?;
            Ok(TrialReport { metrics, seconds: start.elapsed().as_secs_f64() })
        })
        .collect()
}

/// As [`run_trials`], decoding each trial with every back end in `variants`.
/// Returns `out[v][t]`.
pub fn run_trials_variants(cfg: &ExperimentConfig, codebook: &Codebook<f64>, variants: &[DecodeConfig]) -> Result<Vec<Vec<TrialMetrics>>> {
    let per_trial: Vec<Vec<TrialMetrics>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.scenario.seed, t);
            run_trial_variants(cfg, codebook, seed, variants).map_err(wrap(t, seed))
        })
        .collect::<Result<_>>()?;
    Ok((0..variants.len()).map(|v| per_trial.iter().map(|m| m[v].clone()).collect()).collect())
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    Antennas,
    ActiveUsers,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr_db" | "snr" => Ok(Self::SnrDb),
            "M" | "antennas" => Ok(Self::Antennas),
            "K_a" | "active" => Ok(Self::ActiveUsers),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (snr_db, M, K_a)"))),
        }
    }
}

impl SweepAxis {
    /// Copy of `cfg` with the axis set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        match self {
            Self::SnrDb => {
                c.scenario.min_snr_db = value;
                c.scenario.tx_power_dbm = None;
            }
            Self::Antennas => c.scenario.antennas = value as usize,
            Self::ActiveUsers => c.scenario.active_users = value as usize,
        }
        c.validate()?;
        Ok(c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SnrDb => "snr_db",
            Self::Antennas => "M",
            Self::ActiveUsers => "K_a",
        }
    }
}

/// Aggregate over the trials of one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: f64,
    pub trials: usize,
    pub decisions: usize,
    pub p1: f64,
    pub p1_se: f64,
    pub p1_low: f64,
    pub p1_high: f64,
    pub p2: f64,
    pub p2_se: f64,
    pub p2_low: f64,
    pub p2_high: f64,
    pub missed: usize,
    pub false_alarms: usize,
    pub wrong_stitch: usize,
    pub cer: f64,
    pub message_error_rate: f64,
    pub ka_error_rate: f64,
    pub theory_p1: f64,
    pub theory_p2: f64,
    pub theory_cer: f64,
    pub u_fixed: f64,
    pub mean_iterations: f64,
    pub converged_fraction: f64,
    pub stitch_converged_fraction: f64,
}

impl SweepPoint {
    pub fn p1_estimate(&self) -> Estimate {
        Estimate::new(self.missed + self.false_alarms, self.decisions)
    }

    pub fn p2_estimate(&self) -> Estimate {
        Estimate::new(self.false_alarms + self.wrong_stitch, self.decisions)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n > 0 { s / n as f64 } else { 0.0 }
}

/// Pools trial counts into one sweep point.
pub fn aggregate(axis: &str, value: f64, metrics: &[TrialMetrics]) -> SweepPoint {
    let decisions: usize = metrics.iter().map(|m| m.decisions).sum();
    let missed: usize = metrics.iter().map(|m| m.missed).sum();
    let false_alarms: usize = metrics.iter().map(|m| m.false_alarms).sum();
    let wrong: usize = metrics.iter().map(|m| m.wrong_stitch).sum();
    let stitch_dec: usize = metrics.iter().map(|m| m.stitch_decisions).sum();
    let stitch_err: usize = metrics.iter().map(|m| m.stitch_errors).sum();
    let p1 = Estimate::new(missed + false_alarms, decisions);
    let p2 = Estimate::new(false_alarms + wrong, decisions);
    let slots = metrics.iter().flat_map(|m| m.slots.iter());
    SweepPoint {
        axis: axis.to_string(),
        value,
        trials: metrics.len(),
        decisions,
        p1: p1.rate,
        p1_se: p1.se,
        p1_low: p1.low,
        p1_high: p1.high,
        p2: p2.rate,
        p2_se: p2.se,
        p2_low: p2.low,
        p2_high: p2.high,
        missed,
        false_alarms,
        wrong_stitch: wrong,
        cer: if stitch_dec > 0 { stitch_err as f64 / stitch_dec as f64 } else { 0.0 },
        message_error_rate: mean(metrics.iter().map(|m| m.message_error_rate)),
        ka_error_rate: mean(metrics.iter().map(|m| (m.k_a_hat != m.k_a) as u8 as f64)),
        theory_p1: mean(metrics.iter().map(|m| m.theory.p1)),
        theory_p2: mean(metrics.iter().map(|m| m.theory.p2)),
        theory_cer: mean(metrics.iter().map(|m| m.theory.cer)),
        u_fixed: mean(metrics.iter().map(|m| m.theory.u_fixed)),
        mean_iterations: mean(slots.clone().map(|s| s.iterations as f64)),
        converged_fraction: mean(slots.map(|s| s.converged as u8 as f64)),
        stitch_converged_fraction: mean(metrics.iter().map(|m| m.stitch_converged as u8 as f64)),
    }
}

/// Runs `trials` trials at every value of `axis`. The same trial seeds are reused at every
/// value.
pub fn run_sweep(cfg: &ExperimentConfig, codebook: &Codebook<f64>, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    values
        .iter()
        .map(|&v| {
            let c = axis.apply(cfg, v)?;
            let reports = run_trials(&c, codebook)?;
            let metrics: Vec<TrialMetrics> = reports.into_iter().map(|r| r.metrics).collect();
            Ok(aggregate(axis.name(), v, &metrics))
        })
        .collect()
}

/// Writes sweep points as CSV with a header.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

use std::io::Write;
use std::str::FromStr;

use super::config::{ActiveCount, DecodeConfig, ExperimentConfig, StitcherKind};
use super::seeds::codebook_seed;
use super::sweep::{aggregate, run_trials, run_trials_variants, with_pool, SweepAxis};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::theory::saturation_p2;

/// Column-labelled table of strings, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.headers)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Figure datasets that can be regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Convergence,
    KaSensitivity,
    SnrM,
    Saturation,
    P1Theory,
    StitcherCompare,
}

impl FigureId {
    pub const ALL: [FigureId; 6] = [
        Self::Convergence,
        Self::KaSensitivity,
        Self::SnrM,
        Self::Saturation,
        Self::P1Theory,
        Self::StitcherCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::KaSensitivity => "ka_sensitivity",
            Self::SnrM => "snr_m",
            Self::Saturation => "saturation",
            Self::P1Theory => "p1_theory",
            Self::StitcherCompare => "stitcher_compare",
        }
    }

    /// Trials per point when none are requested.
    pub fn default_trials(self) -> usize {
        match self {
            Self::Convergence => 5,
            Self::P1Theory => 200,
            _ => 100,
        }
    }
}

impl FromStr for FigureId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| Error::UnknownFigure(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct FigureOptions {
    pub trials: Option<usize>,
    /// Use `J = 14` in the convergence figure.
    pub long_codewords: bool,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self { trials: None, long_codewords: false, seed: 1, threads: None }
    }
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

fn codebook_for(cfg: &ExperimentConfig) -> Result<Codebook<f64>> {
    Codebook::dft(cfg.scenario.n0, cfg.scenario.bits_per_block, codebook_seed(cfg.scenario.seed))
}

/// Regenerates the data series of figure `id`.
pub fn reproduce_figure(id: FigureId, opts: &FigureOptions) -> Result<Table> {
    let trials = opts.trials.unwrap_or(id.default_trials());
    let mut base = ExperimentConfig { trials, ..Default::default() };
    base.scenario.seed = opts.seed;
    with_pool(opts.threads, || match id {
        FigureId::Convergence => convergence(base, opts.long_codewords),
        FigureId::KaSensitivity => ka_sensitivity(base),
        FigureId::SnrM => snr_m(base),
        FigureId::Saturation => saturation(base),
        FigureId::P1Theory => p1_theory(base),
        FigureId::StitcherCompare => stitcher_compare(base),
    })?
}

fn convergence(mut base: ExperimentConfig, long: bool) -> Result<Table> {
    if long {
        base.scenario.bits_per_block = 14;
        base.scenario.blocks = 7;
    }
    let cb = codebook_for(&base)?;
    let mut t = Table::new(&["K_a", "trial", "series", "step", "value"]);
    for k_a in [50usize, 100, 150] {
        let cfg = SweepAxis::ActiveUsers.apply(&base, k_a as f64)?;
        for (i, r) in run_trials(&cfg, &cb)?.iter().enumerate() {
            for (step, v) in r.metrics.slots[0].nmse.iter().enumerate() {
                t.push(vec![k_a.to_string(), i.to_string(), "nmse".into(), (step + 1).to_string(), f(*v)]);
            }
            for (step, v) in r.metrics.round_cer.iter().enumerate() {
                t.push(vec![k_a.to_string(), i.to_string(), "round_cer".into(), (step + 1).to_string(), f(*v)]);
            }
        }
    }
    Ok(t)
}

fn ka_sensitivity(base: ExperimentConfig) -> Result<Table> {
    let cb = codebook_for(&base)?;
    let est = DecodeConfig::default();
    let genie = DecodeConfig { active_count: ActiveCount::Genie, ..Default::default() };
    let mut t = Table::new(&["snr_db", "p2_estimated", "p2_estimated_se", "p2_genie", "p2_genie_se", "ka_error_rate"]);
    for snr in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0] {
        let cfg = SweepAxis::SnrDb.apply(&base, snr)?;
        let out = run_trials_variants(&cfg, &cb, &[est.clone(), genie.clone()])?;
        let a = aggregate("snr_db", snr, &out[0]);
        let b = aggregate("snr_db", snr, &out[1]);
        t.push(vec![f(snr), f(a.p2), f(a.p2_se), f(b.p2), f(b.p2_se), f(a.ka_error_rate)]);
    }
    Ok(t)
}

fn snr_m(base: ExperimentConfig) -> Result<Table> {
    let cb = codebook_for(&base)?;
    let mut t = Table::new(&["M", "snr_db", "p1", "p2", "p2_se", "message_error_rate"]);
    for m in [32usize, 64] {
        let cfg = SweepAxis::Antennas.apply(&base, m as f64)?;
        for snr in [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0] {
            let c = SweepAxis::SnrDb.apply(&cfg, snr)?;
            let ms: Vec<_> = run_trials(&c, &cb)?.into_iter().map(|r| r.metrics).collect();
            let p = aggregate("snr_db", snr, &ms);
            t.push(vec![m.to_string(), f(snr), f(p.p1), f(p.p2), f(p.p2_se), f(p.message_error_rate)]);
        }
    }
    Ok(t)
}

fn saturation(base: ExperimentConfig) -> Result<Table> {
    let cb = codebook_for(&base)?;
    let limit = saturation_p2(base.scenario.active_users, base.scenario.bits_per_block);
    let mut t = Table::new(&["M", "p1", "p2", "p2_se", "cer", "theory_p2", "saturation"]);
    for m in [8usize, 16, 32, 64, 128, 256, 512] {
        let cfg = SweepAxis::Antennas.apply(&base, m as f64)?;
        let ms: Vec<_> = run_trials(&cfg, &cb)?.into_iter().map(|r| r.metrics).collect();
        let p = aggregate("M", m as f64, &ms);
        t.push(vec![m.to_string(), f(p.p1), f(p.p2), f(p.p2_se), f(p.cer), f(p.theory_p2), f(limit)]);
    }
    Ok(t)
}

fn p1_theory(mut base: ExperimentConfig) -> Result<Table> {
    base.scenario.antennas = 8;
    let cb = codebook_for(&base)?;
    let mut t = Table::new(&["K_a", "snr_db", "p1_empirical", "p1_se", "p1_theory", "decisions"]);
    for k_a in [30usize, 50] {
        let cfg = SweepAxis::ActiveUsers.apply(&base, k_a as f64)?;
        for snr in [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
            let c = SweepAxis::SnrDb.apply(&cfg, snr)?;
            let ms: Vec<_> = run_trials(&c, &cb)?.into_iter().map(|r| r.metrics).collect();
            let p = aggregate("snr_db", snr, &ms);
            t.push(vec![k_a.to_string(), f(snr), f(p.p1), f(p.p1_se), f(p.theory_p1), p.decisions.to_string()]);
        }
    }
    Ok(t)
}

fn stitcher_compare(base: ExperimentConfig) -> Result<Table> {
    let cb = codebook_for(&base)?;
    let bayes = DecodeConfig::default();
    let kmeans = DecodeConfig { stitcher: StitcherKind::Kmeans, ..Default::default() };
    let mut t = Table::new(&["M", "cer_bayes", "cer_kmeans", "cer_min", "p2_bayes", "p2_kmeans"]);
    for m in [8usize, 16, 32, 64] {
        let cfg = SweepAxis::Antennas.apply(&base, m as f64)?;
        let out = run_trials_variants(&cfg, &cb, &[bayes.clone(), kmeans.clone()])?;
        let a = aggregate("M", m as f64, &out[0]);
        let b = aggregate("M", m as f64, &out[1]);
        t.push(vec![m.to_string(), f(a.cer), f(b.cer), f(a.theory_cer), f(a.p2), f(b.p2)]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse() {
        for id in FigureId::ALL {
            assert_eq!(id.name().parse::<FigureId>().unwrap(), id);
        }
        let err = "fig9".parse::<FigureId>().unwrap_err().to_string();
        assert!(err.contains("saturation") && err.contains("p1_theory"));
    }
}

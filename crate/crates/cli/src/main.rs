use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ura_core::codebook::Codebook;
use ura_core::decision::DecisionMode;
use ura_core::harness::{
    codebook_seed, compute_metrics, decode, reproduce_figure, run_sweep, run_trials, simulate, trial_seed, with_pool,
    write_sweep_csv, CodebookInfo, ExperimentConfig, FigureId, FigureOptions, RunManifest, StitcherKind, SweepAxis,
};
use ura_core::oamp::write_trace_csv;
use ura_core::stitch::{write_assignment_csv, StitchMode};
use ura_core::theory::{theory_row, write_theory_csv};

/// Unsourced random access link-level simulator.
#[derive(Parser)]
#[command(name = "ura", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated modes: r_norm, x_norm, posterior, argmax, matching, bayes, kmeans.
    #[arg(long)]
    mode: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One trial with traces, class assignment and metrics.
    Trial {
        #[command(flatten)]
        common: Common,
        /// Extra trials summarized in `trials.json`; the detailed files describe the first.
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Trials over a list of values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// snr_db, M or K_a.
        #[arg(long, default_value = "snr_db")]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Regenerates one figure dataset.
    Figure {
        /// convergence, ka_sensitivity, snr_m, saturation, p1_theory or stitcher_compare.
        id: String,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// 14-bit sub-blocks for the convergence figure.
        #[arg(long)]
        long_codewords: bool,
    },
    /// Closed-form detection and error predictions over antennas and gain ratios.
    Theory {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec![8usize, 16, 32, 64, 128, 256, 512])]
        antennas: Vec<usize>,
        /// Gain over the fixed-point variance.
        #[arg(long, value_delimiter = ',', default_values_t = vec![3.0, 10.0, 30.0])]
        ratios: Vec<f64>,
        /// Stitching error fed into the final error prediction.
        #[arg(long, default_value_t = 0.0)]
        cer: f64,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.scenario.seed = s;
    }
    if let Some(modes) = &common.mode {
        for m in modes.split(',').map(str::trim).filter(|m| !m.is_empty()) {
            match m {
                "bayes" => cfg.decode.stitcher = StitcherKind::Bayes,
                "kmeans" => cfg.decode.stitcher = StitcherKind::Kmeans,
                "argmax" | "matching" => cfg.decode.stitch_mode = m.parse::<StitchMode>()?,
                _ => cfg.decode.decision = m.parse::<DecisionMode>()?,
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn codebook(cfg: &ExperimentConfig) -> Result<Codebook<f64>> {
    Ok(Codebook::dft(cfg.scenario.n0, cfg.scenario.bits_per_block, codebook_seed(cfg.scenario.seed))?)
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    outputs.push(name.to_string());
    Ok(BufWriter::new(f))
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn trial(common: &Common, trials: usize) -> Result<()> {
    let start = Instant::now();
    let mut cfg = load_config(common)?;
    if trials == 0 {
        bail!("--trials must be positive");
    }
    cfg.trials = trials;
    prepare(&common.out)?;
    let cb = codebook(&cfg)?;
    let mut manifest = RunManifest::new("trial", &cfg);
    manifest.codebook = Some(CodebookInfo::of(&cb)?);
    cb.write_header(create(&common.out, "codebook.bin", &mut manifest.outputs)?)?;

    let seed = trial_seed(cfg.scenario.seed, 0);
    let bits = cfg.scenario.bits_per_block;
    let (sim, dec) = with_pool(common.parallel, || -> ura_core::Result<_> {
        let sim = simulate(&cfg, &cb, seed)?;
        let dec = decode(&sim, &cfg.decode, bits)?;
        Ok((sim, dec))
    })??;
    let metrics = compute_metrics(&sim, &dec, bits);
    for (l, d) in sim.detections.iter().enumerate() {
        write_trace_csv(&d.trace, create(&common.out, &format!("trace_slot{l}.csv"), &mut manifest.outputs)?)?;
    }
    write_assignment_csv(&dec.assignment, &dec.lists, create(&common.out, "assignment.csv", &mut manifest.outputs)?)?;
    serde_json::to_writer_pretty(create(&common.out, "metrics.json", &mut manifest.outputs)?, &metrics)?;

    manifest.trial_seeds = vec![seed];
    manifest.timings.trial_seconds = vec![start.elapsed().as_secs_f64()];
    if trials > 1 {
        let reports = with_pool(common.parallel, || run_trials(&cfg, &cb))??;
        serde_json::to_writer_pretty(create(&common.out, "trials.json", &mut manifest.outputs)?, &reports)?;
        manifest.trial_seeds = (0..trials).map(|t| trial_seed(cfg.scenario.seed, t)).collect();
        manifest.timings.trial_seconds = reports.iter().map(|r| r.seconds).collect();
    }
    manifest.timings.total_seconds = start.elapsed().as_secs_f64();
    manifest.write(common.out.join("manifest.json"))?;
    println!(
        "K_a {} -> {} detected in slot 0, P1 {:.3e}, P2 {:.3e}, CER {:.3}, message errors {}/{}",
        metrics.k_a, metrics.k_a_hat, metrics.p1, metrics.p2, metrics.cer, metrics.message_errors, metrics.k_a
    );
    Ok(())
}

fn sweep(common: &Common, trials: Option<usize>, axis: &str, values: &[f64]) -> Result<()> {
    let start = Instant::now();
    let mut cfg = load_config(common)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if cfg.trials == 0 {
        bail!("--trials must be positive");
    }
    let axis: SweepAxis = axis.parse()?;
    prepare(&common.out)?;
    let cb = codebook(&cfg)?;
    let mut manifest = RunManifest::new("sweep", &cfg);
    manifest.codebook = Some(CodebookInfo::of(&cb)?);
    let points = with_pool(common.parallel, || run_sweep(&cfg, &cb, axis, values))??;
    write_sweep_csv(&points, create(&common.out, "sweep.csv", &mut manifest.outputs)?)?;
    manifest.trial_seeds = (0..cfg.trials).map(|t| trial_seed(cfg.scenario.seed, t)).collect();
    manifest.timings.total_seconds = start.elapsed().as_secs_f64();
    manifest.write(common.out.join("manifest.json"))?;
    for p in &points {
        println!(
            "{} = {}: P1 {:.3e} [{:.3e}, {:.3e}], P2 {:.3e} [{:.3e}, {:.3e}], theory P1 {:.3e}",
            p.axis, p.value, p.p1, p.p1_low, p.p1_high, p.p2, p.p2_low, p.p2_high, p.theory_p1
        );
    }
    Ok(())
}

fn figure(common: &Common, id: &str, trials: Option<usize>, long_codewords: bool) -> Result<()> {
    let start = Instant::now();
    let id: FigureId = id.parse()?;
    let cfg = load_config(common)?;
    prepare(&common.out)?;
    let opts = FigureOptions { trials, long_codewords, seed: cfg.scenario.seed, threads: common.parallel };
    let table = reproduce_figure(id, &opts)?;
    let mut manifest = RunManifest::new(&format!("figure {}", id.name()), &cfg);
    let n = trials.unwrap_or(id.default_trials());
    manifest.trial_seeds = (0..n).map(|t| trial_seed(cfg.scenario.seed, t)).collect();
    table.write_csv(create(&common.out, &format!("{}.csv", id.name()), &mut manifest.outputs)?)?;
    manifest.timings.total_seconds = start.elapsed().as_secs_f64();
    manifest.write(common.out.join("manifest.json"))?;
    println!("{}: {} rows written to {}", id.name(), table.rows.len(), common.out.display());
    Ok(())
}

fn theory(common: &Common, antennas: &[usize], ratios: &[f64], cer: f64) -> Result<()> {
    let cfg = load_config(common)?;
    let sc = &cfg.scenario;
    prepare(&common.out)?;
    let sigma2 = match sc.tx_power_dbm {
        Some(p) => ura_core::channel::db_to_linear(sc.noise_dbm) / (sc.n0 as f64 * ura_core::channel::db_to_linear(p)),
        None => 1.0,
    };
    let mut rows = Vec::new();
    for &m in antennas {
        for &r in ratios {
            rows.push(theory_row(m, sc.active_users, sc.n0, sc.bits_per_block, sigma2, r, cer)?);
        }
    }
    let mut manifest = RunManifest::new("theory", &cfg);
    write_theory_csv(&rows, create(&common.out, "theory.csv", &mut manifest.outputs)?)?;
    manifest.write(common.out.join("manifest.json"))?;
    println!("{} theory rows written to {}", rows.len(), common.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trial { common, trials } => trial(&common, trials),
        Command::Sweep { common, trials, axis, values } => sweep(&common, trials, &axis, &values),
        Command::Figure { id, common, trials, long_codewords } => figure(&common, &id, trials, long_codewords),
        Command::Theory { common, antennas, ratios, cer } => theory(&common, &antennas, &ratios, cer),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::collections::HashMap;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ActiveCount, ExperimentConfig, InitVariance, PriorKind, StitcherKind};
use super::seeds::derive_seed;
use super::DecodeConfig;
use crate::channel::{calibrate_power, db_to_linear, draw_channels, draw_topology, state_matrix, transmit_slot, LinkBudget, Topology};
use crate::codebook::{colliding_positions, Codebook, MessageSet};
use crate::decision::{decide_active, decide_top, theoretical_detection_errors, ActiveCodewordList};
use crate::em::{EmOptions, PriorEstimates};
use crate::error::{Error, Result};
use crate::matching::max_weight_assignment;
use crate::oamp::{detect_slot, DetectorOptions, DetectorResult, InitialVariance, PriorSource};
use crate::scalar::Cx;
use crate::stitch::{cer_min, kmeans_baseline, stitch_all, ClassAssignment, RecoveredMessages, StitchOptions};
use crate::theory::{iterate_to_fixed_point, theoretical_p2, SeDenoiser, SeParams};


/// Ground truth and detector output of one trial.
#[derive(Debug, Clone)]
pub struct SimulatedTrial {
    pub seed: u64,
    pub n0: usize,
    pub topology: Topology<f64>,
    pub budget: LinkBudget<f64>,
    pub messages: MessageSet,
    /// `K_a x M` channels per slot.
    pub channels: Vec<Array2<Cx<f64>>>,
    pub detections: Vec<DetectorResult<f64>>,
    /// Time spent in detection.
    pub detect_seconds: f64,
}

/// Output of the decoding back end.
#[derive(Debug, Clone)]
pub struct DecodedTrial {
    pub lists: Vec<ActiveCodewordList<f64>>,
    pub assignment: ClassAssignment<f64>,
    pub recovered: RecoveredMessages,
}

fn genie_priors<R: Rng>(size: usize, indices: &[usize], gains: &[f64], sigma2: f64, rng: &mut R) -> PriorEstimates<f64> {
    let eps = (indices.len() as f64 / size as f64).clamp(1e-12, 1.0 - 1e-12);
    let mut gain: Vec<f64> = (0..size).map(|_| gains[rng.gen_range(0..gains.len())]).collect();
    for (&i, &g) in indices.iter().zip(gains) {
        gain[i - 1] = g;
    }
    PriorEstimates { sigma2, eps: vec![eps; size], gain }
}

/// Generates a trial and runs detection on every sub-slot.
pub fn simulate(cfg: &ExperimentConfig, codebook: &Codebook<f64>, seed: u64) -> Result<SimulatedTrial> {
    let sc = &cfg.scenario;
    if codebook.n0() != sc.n0 || codebook.bits() != sc.bits_per_block {
        return Err(Error::Config("codebook does not match the scenario".into()));
    }
    let topology = draw_topology::<f64>(sc.total_users, sc.active_users, derive_seed(seed, 1))?;
    let noise = db_to_linear(sc.noise_dbm);
    let budget = match sc.tx_power_dbm {
        Some(p) => LinkBudget::new(noise, db_to_linear(p), sc.n0)?,
        None => calibrate_power(&topology, noise, sc.min_snr_db, sc.n0)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let messages = if cfg.allow_collisions {
        MessageSet::random(sc.active_users, sc.bits_per_block, sc.blocks, &mut rng)?
    } else {
        MessageSet::random_distinct(sc.active_users, sc.bits_per_block, sc.blocks, &mut rng)?
    };
    let channels = draw_channels(&topology, sc.antennas, sc.blocks, derive_seed(seed, 3));
    let gains = topology.active_gains();
    let det = &cfg.detection;
    let start = Instant::now();
    let mut detections = Vec::with_capacity(sc.blocks);
    for (l, h) in channels.iter().enumerate() {
        let idx = messages.slot(l);
        let x = state_matrix(codebook.size(), &idx, h)?;
        let y = transmit_slot(codebook, &idx, h, budget.sigma2, derive_seed(seed, 100 + l as u64))?;
        let priors = match det.priors {
            PriorKind::Learned => PriorSource::Learned(EmOptions { tie_activity: det.tie_activity, noise_update: det.noise_update }),
            PriorKind::Genie => {
                let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 200 + l as u64));
                PriorSource::Fixed(genie_priors(codebook.size(), &idx, &gains, budget.sigma2, &mut prng))
            }
        };
        let opts = DetectorOptions {
            max_iterations: det.max_iterations,
            tolerance: det.tolerance,
            priors,
            initial_variance: match det.initial_variance {
                InitVariance::Measured => InitialVariance::Measured,
                InitVariance::Unit => InitialVariance::Unit,
            },
        };
        detections.push(detect_slot(&y, codebook, &opts, Some(&x))?);
    }
    Ok(SimulatedTrial {
        seed,
        n0: sc.n0,
        topology,
        budget,
        messages,
        channels,
        detections,
        detect_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Activity decisions and stitching.
pub fn decode(sim: &SimulatedTrial, cfg: &DecodeConfig, bits: u32) -> Result<DecodedTrial> {
    let k_a = sim.messages.indices.len();
    let lists: Vec<ActiveCodewordList<f64>> = sim
        .detections
        .iter()
        .enumerate()
        .map(|(l, d)| match cfg.active_count {
            ActiveCount::Estimated => decide_active(d, l, cfg.decision),
            ActiveCount::Genie => decide_top(d, l, k_a),
        })
        .collect();
    let opts = StitchOptions { max_rounds: cfg.max_rounds, tolerance: cfg.stitch_tolerance, mode: cfg.stitch_mode };
    let (assignment, recovered) = match cfg.stitcher {
        StitcherKind::Bayes => stitch_all(&lists, bits, &opts)?,
        StitcherKind::Kmeans => kmeans_baseline(&lists, bits, &opts)?,
    };
    Ok(DecodedTrial { lists, assignment, recovered })
}

/// Per-slot detection summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotMetrics {
    pub missed: usize,
    pub false_alarms: usize,
    pub detected: usize,
    pub iterations: usize,
    pub converged: bool,
    pub nmse: Vec<f64>,
    pub u: Vec<f64>,
}

/// Theory evaluated with the true priors of the trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryOverlay {
    pub u_fixed: f64,
    pub p_md: f64,
    pub p_fa: f64,
    pub p1: f64,
    pub cer: f64,
    pub p2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub k_a: usize,
    pub k_a_hat: usize,
    pub slots: Vec<SlotMetrics>,
    /// `L 2^J` decision opportunities.
    pub decisions: usize,
    pub missed: usize,
    pub false_alarms: usize,
    /// True codewords detected in their slot.
    pub correct_detections: usize,
    /// Correctly detected codewords whose class belongs to another user (or no user).
    pub wrong_stitch: usize,
    /// Same two counts restricted to slots after the first.
    pub stitch_decisions: usize,
    pub stitch_errors: usize,
    pub message_errors: usize,
    /// Codewords left out because another user chose them too.
    pub collided: usize,
    pub p1: f64,
    pub p2: f64,
    pub cer: f64,
    pub message_error_rate: f64,
    pub stitch_rounds: usize,
    pub stitch_converged: bool,
    /// Classification error of each stitching round, slots after the first.
    pub round_cer: Vec<f64>,
    pub theory: TheoryOverlay,
}

/// Class-to-user matching by maximal number of shared (slot, codeword) pairs.
fn match_classes(rec: &RecoveredMessages, truth: &MessageSet) -> Vec<Option<usize>> {
    let w: Vec<Vec<f64>> = rec
        .indices
        .iter()
        .map(|ci| {
            truth
                .indices
                .iter()
                .map(|ui| ci.iter().zip(ui).filter(|(c, u)| **c == Some(**u)).count() as f64)
                .collect()
        })
        .collect();
    let mut m = max_weight_assignment(&w);
    for (k, u) in m.iter_mut().enumerate() {
        if let Some(uu) = *u {
            if w[k][uu] == 0.0 {
                *u = None;
            }
        }
    }
    m
}

fn theory_overlay(sim: &SimulatedTrial, antennas: usize, n0: usize, bits: u32) -> TheoryOverlay {
    let gains = sim.topology.active_gains();
    let k_a = gains.len();
    let size = 1usize << bits;
    let eps = k_a as f64 / size as f64;
    let params = SeParams {
        sigma2: sim.budget.sigma2,
        eps,
        gains: &gains,
        n0,
        bits,
        antennas,
        iterations: 1,
        initial_v: eps * gains.iter().sum::<f64>() / k_a.max(1) as f64,
        denoiser: SeDenoiser::Bound,
        codebook: None,
    };
    let u = iterate_to_fixed_point(&params, 10_000);
    let det = theoretical_detection_errors(antennas, u, &gains, k_a, bits);
    let energies: Vec<f64> = sim
        .channels
        .iter()
        .skip(1)
        .flat_map(|h| h.rows().into_iter().map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>()).collect::<Vec<_>>())
        .collect();
    let cer = cer_min(&gains, &energies, antennas);
    TheoryOverlay {
        u_fixed: u,
        p_md: det.p_md_mean,
        p_fa: det.p_fa_mean,
        p1: det.p1,
        cer,
        p2: theoretical_p2(k_a, bits, det.p_md_mean, det.p_fa_mean, cer),
    }
}

/// Scores a decoded trial against its ground truth.
pub fn compute_metrics(sim: &SimulatedTrial, dec: &DecodedTrial, bits: u32) -> TrialMetrics {
    let size = 1usize << bits;
    let truth = &sim.messages;
    let blocks = truth.blocks;
    let k_a = truth.indices.len();
    let class_user = match_classes(&dec.recovered, truth);
    let mut user_class = vec![None; k_a];
    for (k, u) in class_user.iter().enumerate() {
        if let Some(u) = *u {
            user_class[u] = Some(k);
        }
    }

    let mut slots = Vec::with_capacity(blocks);
    let (mut missed, mut false_alarms, mut correct, mut wrong, mut collided) = (0, 0, 0, 0, 0);
    let (mut stitch_decisions, mut stitch_errors) = (0, 0);
    for l in 0..blocks {
        let idx = truth.slot(l);
        let coll: Vec<usize> = colliding_positions(&idx);
        let coll_idx: std::collections::HashSet<usize> = coll.iter().map(|&p| idx[p]).collect();
        collided += coll.len();
        let list = &dec.lists[l];
        let pos: HashMap<usize, usize> = list.indices.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut slot_missed = 0;
        for (u, &i) in idx.iter().enumerate() {
            if coll_idx.contains(&i) {
                continue;
            }
            match pos.get(&i) {
                None => slot_missed += 1,
                Some(&p) => {
                    correct += 1;
                    let holder = (0..dec.assignment.classes()).find(|&k| dec.assignment.members[k][l] == Some(p));
                    let ok = holder.is_some() && holder == user_class[u];
                    if !ok {
                        wrong += 1;
                    }
                    if l > 0 {
                        stitch_decisions += 1;
                        stitch_errors += !ok as usize;
                    }
                }
            }
        }
        let true_set: std::collections::HashSet<usize> = idx.iter().copied().collect();
        let slot_fa = list.indices.iter().filter(|i| !true_set.contains(i)).count();
        missed += slot_missed;
        false_alarms += slot_fa;
        let d = &sim.detections[l];
        slots.push(SlotMetrics {
            missed: slot_missed,
            false_alarms: slot_fa,
            detected: list.len(),
            iterations: d.iterations,
            converged: d.converged,
            nmse: d.trace.iter().filter_map(|r| r.nmse).collect(),
            u: d.trace.iter().map(|r| r.u).collect(),
        });
    }

    let message_errors = (0..k_a)
        .filter(|&u| match user_class[u] {
            Some(k) => dec.recovered.messages[k].as_ref() != Some(&truth.bits[u]),
            None => true,
        })
        .count();

    let round_cer = dec
        .assignment
        .rounds
        .iter()
        .map(|round| {
            let (mut n, mut e) = (0usize, 0usize);
            for sa in &round.slots {
                let idx = truth.slot(sa.slot);
                for (p, c) in sa.class_of.iter().enumerate() {
                    let i = dec.lists[sa.slot].indices[p];
                    if let Some(u) = idx.iter().position(|&x| x == i) {
                        n += 1;
                        if c.is_none() || *c != user_class[u] {
                            e += 1;
                        }
                    }
                }
            }
            if n > 0 { e as f64 / n as f64 } else { 0.0 }
        })
        .collect();

    let decisions = blocks * size;
    let antennas = sim.channels.first().map_or(0, |h| h.ncols());
    TrialMetrics {
        seed: sim.seed,
        k_a,
        k_a_hat: dec.lists.first().map_or(0, |l| l.len()),
        slots,
        decisions,
        missed,
        false_alarms,
        correct_detections: correct,
        wrong_stitch: wrong,
        stitch_decisions,
        stitch_errors,
        message_errors,
        collided,
        p1: (missed + false_alarms) as f64 / decisions as f64,
        p2: (false_alarms + wrong) as f64 / decisions as f64,
        cer: if stitch_decisions > 0 { stitch_errors as f64 / stitch_decisions as f64 } else { 0.0 },
        message_error_rate: if k_a > 0 { message_errors as f64 / k_a as f64 } else { 0.0 },
        stitch_rounds: dec.assignment.rounds_used,
        stitch_converged: dec.assignment.converged,
        round_cer,
        theory: theory_overlay(sim, antennas, sim.n0, bits),
    }
}

/// One trial end to end.
pub fn run_trial(cfg: &ExperimentConfig, codebook: &Codebook<f64>, seed: u64) -> Result<TrialMetrics> {
    let sim = simulate(cfg, codebook, seed)?;
    let dec = decode(&sim, &cfg.decode, cfg.scenario.bits_per_block)?;
    Ok(compute_metrics(&sim, &dec, cfg.scenario.bits_per_block))
}

/// One simulated trial decoded by several back ends.
pub fn run_trial_variants(cfg: &ExperimentConfig, codebook: &Codebook<f64>, seed: u64, variants: &[DecodeConfig]) -> Result<Vec<TrialMetrics>> {
    let sim = simulate(cfg, codebook, seed)?;
    variants
        .iter()
        .map(|v| decode(&sim, v, cfg.scenario.bits_per_block).map(|d| compute_metrics(&sim, &d, cfg.scenario.bits_per_block)))
        .collect()
}

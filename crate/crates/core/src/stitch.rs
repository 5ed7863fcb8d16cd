//! Codeword stitching: grouping per-slot detections into users by channel statistics.
//!
//! Class `k` is seeded by the `k`-th detection of the first sub-slot and labelled by the
//! running mean `xi_k` of the gain estimates assigned to it. A detection with channel
//! estimate `h` scores `-M ln xi_k - ||h||^2 / xi_k` against class `k`, the log of a
//! circularly-symmetric complex Gaussian density up to constants.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codebook::demap_index;
use crate::decision::ActiveCodewordList;
use crate::error::{Error, Result};
use crate::matching::max_weight_assignment;
use crate::scalar::Real;

/// How detections in one slot are matched to classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StitchMode {
    /// Each detection takes its most probable class; when two detections want the same
    /// class, the more confident one keeps it and the other takes its best free class.
    #[default]
    Argmax,
    /// One-to-one assignment maximizing the summed log-posteriors.
    Matching,
}

impl FromStr for StitchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(Self::Argmax),
            "matching" => Ok(Self::Matching),
            _ => Err(Error::Config(format!("unknown stitch mode {s:?} (argmax, matching)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StitchOptions<T: Real> {
    pub max_rounds: usize,
    /// Stop once no label moves by this much in a round.
    pub tolerance: T,
    pub mode: StitchMode,
}

impl<T: Real> Default for StitchOptions<T> {
    fn default() -> Self {
        Self { max_rounds: 30, tolerance: T::of(1e-15), mode: StitchMode::Argmax }
    }
}

/// Assignment of one slot's detections.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotAssignment<T: Real> {
    /// Sub-slot, 0-based.
    pub slot: usize,
    /// Class of each detection, by list position.
    pub class_of: Vec<Option<usize>>,
    /// Score of the chosen class minus the best other class.
    pub margin: Vec<T>,
}

/// Labels before and after one pass over slots `2..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<T: Real> {
    pub start: Vec<T>,
    pub end: Vec<T>,
    pub max_change: T,
    pub slots: Vec<SlotAssignment<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAssignment<T: Real> {
    /// `members[k][l]`: position in the slot-`l` list held by class `k`.
    pub members: Vec<Vec<Option<usize>>>,
    pub labels: Vec<T>,
    /// Running-mean weights of the labels within the current round.
    pub counts: Vec<usize>,
    pub rounds: Vec<RoundRecord<T>>,
    pub rounds_used: usize,
    pub converged: bool,
}

impl<T: Real> ClassAssignment<T> {
    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    /// Largest relative deviation between each recorded end-of-round label and
    /// `(start label + sum of gains assigned in the round) / (1 + number assigned)`.
    pub fn label_identity_residual(&self, lists: &[ActiveCodewordList<T>]) -> f64 {
        let mut worst = 0.0f64;
        for round in &self.rounds {
            for k in 0..self.classes() {
                let mut sum = round.start[k].as_f64();
                let mut n = 1usize;
                for sa in &round.slots {
                    for (pos, c) in sa.class_of.iter().enumerate() {
                        if *c == Some(k) {
                            sum += lists[sa.slot].gains[pos].as_f64();
                            n += 1;
                        }
                    }
                }
                let want = sum / n as f64;
                let got = round.end[k].as_f64();
                worst = worst.max(((got - want) / want.abs().max(f64::MIN_POSITIVE)).abs());
            }
        }
        worst
    }
}

/// Messages read out of the classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredMessages {
    /// Per-class codeword index in each slot.
    pub indices: Vec<Vec<Option<usize>>>,
    /// Per-class message, `None` when some slot is erased.
    pub messages: Vec<Option<Vec<bool>>>,
    /// Slots missing from each class.
    pub erased_slots: Vec<Vec<usize>>,
}

/// Singleton classes seeded by the first slot.
pub fn init_classes<T: Real>(first: &ActiveCodewordList<T>, slots: usize) -> ClassAssignment<T> {
    let k = first.len();
    let members = (0..k)
        .map(|c| {
            let mut row = vec![None; slots];
            row[0] = Some(c);
            row
        })
        .collect();
    ClassAssignment {
        members,
        labels: first.gains.clone(),
        counts: vec![1; k],
        rounds: Vec::new(),
        rounds_used: 0,
        converged: false,
    }
}

fn class_score<T: Real>(m: T, energy: T, xi: T) -> T {
    let xi = xi.max(T::min_positive_value());
    -(m * xi.ln()) - energy / xi
}

fn score_table<T: Real>(labels: &[T], list: &ActiveCodewordList<T>) -> Vec<Vec<T>> {
    let m = T::of_usize(list.channels.ncols());
    list.channels
        .rows()
        .into_iter()
        .map(|h| {
            let e: T = h.iter().map(|z| z.norm_sqr()).sum();
            labels.iter().map(|&xi| class_score(m, e, xi)).collect()
        })
        .collect()
}

fn log_normalize<T: Real>(row: &[T]) -> Vec<T> {
    let top = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = top + row.iter().map(|&s| (s - top).exp()).sum::<T>().ln();
    row.iter().map(|&s| s - lse).collect()
}

fn margin<T: Real>(row: &[T], chosen: usize) -> T {
    let other = row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != chosen)
        .map(|(_, &s)| s)
        .fold(T::neg_infinity(), T::max);
    row[chosen] - other
}

/// Resolves one slot given a table of per-(detection, class) scores where larger is better.
fn resolve<T: Real>(scores: &[Vec<T>], mode: StitchMode) -> Vec<Option<usize>> {
    let classes = scores.first().map_or(0, |r| r.len());
    if classes == 0 {
        return vec![None; scores.len()];
    }
    let post: Vec<Vec<T>> = scores.iter().map(|r| log_normalize(r)).collect();
    match mode {
        StitchMode::Matching => {
            let w: Vec<Vec<f64>> = post.iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect();
            max_weight_assignment(&w)
        }
        StitchMode::Argmax => {
            let mut order: Vec<usize> = (0..post.len()).collect();
            let conf: Vec<T> = post.iter().map(|r| r.iter().copied().fold(T::neg_infinity(), T::max)).collect();
            order.sort_by(|&a, &b| conf[b].order(&conf[a]).then(a.cmp(&b)));
            let mut taken = vec![false; classes];
            let mut out = vec![None; post.len()];
            for i in order {
                let best = (0..classes)
                    .filter(|&k| !taken[k])
                    .max_by(|&a, &b| post[i][a].order(&post[i][b]).then(b.cmp(&a)));
                if let Some(k) = best {
                    taken[k] = true;
                    out[i] = Some(k);
                }
            }
            out
        }
    }
}

/// Assigns the detections of one slot and updates the labels by running mean.
pub fn classify_slot<T: Real>(assignment: &mut ClassAssignment<T>, list: &ActiveCodewordList<T>, mode: StitchMode) -> SlotAssignment<T> {
    let scores = score_table(&assignment.labels, list);
    let class_of = resolve(&scores, mode);
    let margins = class_of
        .iter()
        .enumerate()
        .map(|(i, c)| c.map_or(T::nan(), |k| margin(&scores[i], k)))
        .collect();
    for (pos, c) in class_of.iter().enumerate() {
        if let Some(k) = *c {
            let n = assignment.counts[k] + 1;
            let nf = T::of_usize(n);
            assignment.labels[k] = (T::of_usize(n - 1) * assignment.labels[k] + list.gains[pos]) / nf;
            assignment.counts[k] = n;
        }
    }
    for (k, row) in assignment.members.iter_mut().enumerate() {
        row[list.slot] = class_of.iter().position(|&c| c == Some(k));
    }
    SlotAssignment { slot: list.slot, class_of, margin: margins }
}

fn check_slots<T: Real>(lists: &[ActiveCodewordList<T>]) -> Result<()> {
    for (l, list) in lists.iter().enumerate() {
        if list.slot != l {
            return Err(Error::InvalidParameter(format!("list {l} is labelled slot {}", list.slot)));
        }
    }
    Ok(())
}

/// Reads class messages out of an assignment.
pub fn recover_messages<T: Real>(assignment: &ClassAssignment<T>, lists: &[ActiveCodewordList<T>], bits: u32) -> Result<RecoveredMessages> {
    let mut indices = Vec::new();
    let mut messages = Vec::new();
    let mut erased_slots = Vec::new();
    for row in &assignment.members {
        let ix: Vec<Option<usize>> = row.iter().enumerate().map(|(l, p)| p.map(|p| lists[l].indices[p])).collect();
        let erased: Vec<usize> = ix.iter().enumerate().filter(|(_, i)| i.is_none()).map(|(l, _)| l).collect();
        let msg = if erased.is_empty() {
            let mut out = Vec::with_capacity(bits as usize * ix.len());
            for i in ix.iter().flatten() {
                out.extend(demap_index(*i, bits)?);
            }
            Some(out)
        } else {
            None
        };
        indices.push(ix);
        messages.push(msg);
        erased_slots.push(erased);
    }
    Ok(RecoveredMessages { indices, messages, erased_slots })
}

/// Bayesian stitching over all slots, repeated until the labels settle.
pub fn stitch_all<T: Real>(
    lists: &[ActiveCodewordList<T>],
    bits: u32,
    opts: &StitchOptions<T>,
) -> Result<(ClassAssignment<T>, RecoveredMessages)> {
    check_slots(lists)?;
    let Some(first) = lists.first() else {
        return Err(Error::InvalidParameter("no sub-slots to stitch".into()));
    };
    let mut asg = init_classes(first, lists.len());
    if lists.len() > 1 && !asg.labels.is_empty() {
        for _ in 0..opts.max_rounds.max(1) {
            let start = asg.labels.clone();
            asg.counts.iter_mut().for_each(|c| *c = 1);
            let slots = lists[1..].iter().map(|list| classify_slot(&mut asg, list, opts.mode)).collect();
            let max_change = start.iter().zip(&asg.labels).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
            asg.rounds.push(RoundRecord { start, end: asg.labels.clone(), max_change, slots });
            asg.rounds_used += 1;
            if max_change < opts.tolerance {
                asg.converged = true;
                break;
            }
        }
    } else {
        asg.converged = true;
    }
    let rec = recover_messages(&asg, lists, bits)?;
    Ok((asg, rec))
}

/// Lloyd iterations on the scalar gain estimates with centers seeded by the first slot.
pub fn kmeans_baseline<T: Real>(
    lists: &[ActiveCodewordList<T>],
    bits: u32,
    opts: &StitchOptions<T>,
) -> Result<(ClassAssignment<T>, RecoveredMessages)> {
    check_slots(lists)?;
    let Some(first) = lists.first() else {
        return Err(Error::InvalidParameter("no sub-slots to stitch".into()));
    };
    let mut asg = init_classes(first, lists.len());
    let k = asg.classes();
    if lists.len() > 1 && k > 0 {
        for _ in 0..opts.max_rounds.max(1) {
            let start = asg.labels.clone();
            let mut sums: Vec<T> = first.gains.clone();
            let mut counts = vec![1usize; k];
            let mut slots = Vec::with_capacity(lists.len() - 1);
            for list in &lists[1..] {
                let scores: Vec<Vec<T>> = list
                    .gains
                    .iter()
                    .map(|&g| start.iter().map(|&c| -((g - c) * (g - c))).collect())
                    .collect();
                let class_of = match opts.mode {
                    StitchMode::Matching => {
                        let w: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect();
                        max_weight_assignment(&w)
                    }
                    StitchMode::Argmax => nearest_free(&scores),
                };
                let margin = class_of
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.map_or(T::nan(), |c| margin(&scores[i], c)))
                    .collect();
                for (pos, c) in class_of.iter().enumerate() {
                    if let Some(c) = *c {
                        sums[c] = sums[c] + list.gains[pos];
                        counts[c] += 1;
                    }
                }
                for (c, row) in asg.members.iter_mut().enumerate() {
                    row[list.slot] = class_of.iter().position(|&x| x == Some(c));
                }
                slots.push(SlotAssignment { slot: list.slot, class_of, margin });
            }
            asg.labels = sums.iter().zip(&counts).map(|(&s, &n)| s / T::of_usize(n)).collect();
            asg.counts = counts;
            let max_change = start.iter().zip(&asg.labels).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
            asg.rounds.push(RoundRecord { start, end: asg.labels.clone(), max_change, slots });
            asg.rounds_used += 1;
            if max_change < opts.tolerance {
                asg.converged = true;
                break;
            }
        }
    } else {
        asg.converged = true;
    }
    let rec = recover_messages(&asg, lists, bits)?;
    Ok((asg, rec))
}

/// Nearest-center assignment keeping at most one detection per class, closest pairs first.
fn nearest_free<T: Real>(scores: &[Vec<T>]) -> Vec<Option<usize>> {
    let classes = scores.first().map_or(0, |r| r.len());
    let mut pairs: Vec<(usize, usize)> = (0..scores.len()).flat_map(|i| (0..classes).map(move |k| (i, k))).collect();
    pairs.sort_by(|a, b| scores[b.0][b.1].order(&scores[a.0][a.1]).then(a.cmp(b)));
    let mut out = vec![None; scores.len()];
    let mut taken = vec![false; classes];
    for (i, k) in pairs {
        if out[i].is_none() && !taken[k] {
            out[i] = Some(k);
            taken[k] = true;
        }
    }
    out
}

/// Minimum classification error rate of the Bayes rule with equal class priors.
///
/// `energies` holds `||h||^2` of each datum; the posterior of class `k` is proportional to
/// `xi_k^{-M} exp(-||h||^2 / xi_k)`, normalized over classes per datum.
pub fn cer_min<T: Real>(class_variances: &[T], energies: &[T], m: usize) -> T {
    if class_variances.len() <= 1 || energies.is_empty() {
        return T::zero();
    }
    let mf = T::of_usize(m);
    let total = energies
        .iter()
        .map(|&e| {
            let row: Vec<T> = class_variances.iter().map(|&xi| class_score(mf, e, xi)).collect();
            log_normalize(&row).into_iter().fold(T::neg_infinity(), T::max).exp()
        })
        .sum::<T>();
    T::one() - total / T::of_usize(energies.len())
}

/// Writes the final assignment as CSV `slot,codeword,class,margin` (slots, codewords and
/// classes 1-based; unassigned detections have an empty class).
pub fn write_assignment_csv<T: Real, W: Write>(assignment: &ClassAssignment<T>, lists: &[ActiveCodewordList<T>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["slot", "codeword", "class", "margin"])?;
    if let Some(first) = lists.first() {
        for (pos, &ix) in first.indices.iter().enumerate() {
            out.write_record([1.to_string(), ix.to_string(), (pos + 1).to_string(), String::new()])?;
        }
    }
    if let Some(last) = assignment.rounds.last() {
        for sa in &last.slots {
            for (pos, c) in sa.class_of.iter().enumerate() {
                out.write_record([
                    (sa.slot + 1).to_string(),
                    lists[sa.slot].indices[pos].to_string(),
                    c.map(|c| (c + 1).to_string()).unwrap_or_default(),
                    if sa.margin[pos].is_finite() { format!("{:e}", sa.margin[pos]) } else { String::new() },
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

//! Hard activity decisions and the chi-square theory of their error probabilities.
//!
//! For an inactive row the energy `||r_j||^2 / u` is Gamma(M, 1); for an active row
//! `||r_j||^2 / (g_j + u)` is. With `theta_j` below, a misdetection has probability
//! `P(M, 2 a_j)` and a false alarm `Q(M, 2 b_j)`, where `P` and `Q` are the regularized
//! incomplete gamma functions.

use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::{gamma_p, gamma_q};
use crate::oamp::DetectorResult;
use crate::scalar::{Cx, Real};

/// `ln(1 + x) / x`, continuous at zero.
fn log1p_ratio<T: Real>(x: T) -> T {
    if x.abs() < T::of(1e-4) {
        T::one() - x / T::of(2.0) + x * x / T::of(3.0)
    } else {
        x.ln_1p() / x
    }
}

/// Energy threshold `M u (g + u) ln(1 + g/u) / g`; equals `M u` at `g = 0`.
pub fn threshold<T: Real>(m: usize, u: T, gain: T) -> T {
    let x = gain / u;
    T::of_usize(m) * u * (T::one() + x) * log1p_ratio(x)
}

/// Statistic compared with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// Energy of the de-correlated observation `r_j`.
    #[default]
    RNorm,
    /// Energy of the MMSE estimate `x_j`.
    XNorm,
    /// Posterior activity at least one half.
    Posterior,
}

impl FromStr for DecisionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_norm" => Ok(Self::RNorm),
            "x_norm" => Ok(Self::XNorm),
            "posterior" => Ok(Self::Posterior),
            _ => Err(Error::Config(format!("unknown decision mode {s:?} (r_norm, x_norm, posterior)"))),
        }
    }
}

/// Codewords declared active in one sub-slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveCodewordList<T: Real> {
    /// Sub-slot, 0-based.
    pub slot: usize,
    /// Strictly increasing 1-based codeword indices.
    pub indices: Vec<usize>,
    /// Channel estimates, one row per index.
    pub channels: Array2<Cx<T>>,
    /// Gain estimates (learned gain plus residual variance), one per index.
    pub gains: Vec<T>,
}

impl<T: Real> ActiveCodewordList<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// List from 0-based rows of a detector result.
    pub fn from_rows(result: &DetectorResult<T>, slot: usize, mut rows: Vec<usize>) -> Self {
        rows.sort_unstable();
        rows.dedup();
        let channels = result.x_hat.select(Axis(0), &rows);
        Self {
            slot,
            gains: rows.iter().map(|&j| result.gain_estimate(j)).collect(),
            indices: rows.into_iter().map(|j| j + 1).collect(),
            channels,
        }
    }
}

fn row_energy<T: Real>(a: &Array2<Cx<T>>, j: usize) -> T {
    a.row(j).iter().map(|z| z.norm_sqr()).sum()
}

/// Thresholds the detector output of sub-slot `slot`.
pub fn decide_active<T: Real>(result: &DetectorResult<T>, slot: usize, mode: DecisionMode) -> ActiveCodewordList<T> {
    let m = result.antennas();
    let u = result.u;
    let rows = (0..result.x_hat.nrows())
        .filter(|&j| match mode {
            DecisionMode::RNorm => row_energy(&result.r, j) > threshold(m, u, result.gain_prior[j]),
            DecisionMode::XNorm => row_energy(&result.x_hat, j) > threshold(m, u, result.priors.gain[j]),
            DecisionMode::Posterior => result.pi[j] >= T::of(0.5),
        })
        .collect();
    ActiveCodewordList::from_rows(result, slot, rows)
}

/// Keeps the `count` rows with the largest energy-to-threshold ratio (known activity count).
pub fn decide_top<T: Real>(result: &DetectorResult<T>, slot: usize, count: usize) -> ActiveCodewordList<T> {
    let m = result.antennas();
    let score: Vec<T> = (0..result.r.nrows())
        .map(|j| row_energy(&result.r, j) / threshold(m, result.u, result.gain_prior[j]))
        .collect();
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[b].order(&score[a]).then(a.cmp(&b)));
    order.truncate(count);
    ActiveCodewordList::from_rows(result, slot, order)
}

/// Decision abscissas and error probabilities of one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowTheory<T: Real> {
    pub a: T,
    pub b: T,
    pub theta: T,
    pub p_md: T,
    pub p_fa: T,
    /// `P_md + P_fa = 1 - tau`.
    pub tau: T,
}

/// Error probabilities of the threshold test for a row of gain `gain` observed with variance `u`.
pub fn row_theory<T: Real>(m: usize, u: T, gain: T) -> RowTheory<T> {
    let half_m = T::of_usize(m) / T::of(2.0);
    let x = gain / u;
    let r = log1p_ratio(x);
    let a = half_m * r;
    let b = half_m * (T::one() + x) * r;
    let mf = T::of_usize(m);
    let two = T::of(2.0);
    RowTheory {
        a,
        b,
        theta: threshold(m, u, gain),
        p_md: gamma_p(mf, two * a),
        p_fa: gamma_q(mf, two * b),
        tau: gamma_p(mf, two * b) - gamma_p(mf, two * a),
    }
}

/// Averaged detection theory over a gain population.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTheory<T: Real> {
    pub rows: Vec<RowTheory<T>>,
    pub p_md_mean: T,
    pub p_fa_mean: T,
    pub p1: T,
}

/// Misdetection and false-alarm averages over `gains`, and the per-decision error
/// `P1 = (K_a/2^J) P_md + (1 - K_a/2^J) P_fa`. Rows that are inactive are taken to carry
/// gains from the same population.
pub fn theoretical_detection_errors<T: Real>(m: usize, u: T, gains: &[T], active: usize, bits: u32) -> DetectionTheory<T> {
    let rows: Vec<RowTheory<T>> = gains.iter().map(|&g| row_theory(m, u, g)).collect();
    let n = T::of_usize(rows.len().max(1));
    let p_md_mean = rows.iter().map(|r| r.p_md).sum::<T>() / n;
    let p_fa_mean = rows.iter().map(|r| r.p_fa).sum::<T>() / n;
    let frac = T::of_usize(active) / T::of_usize(1 << bits);
    DetectionTheory { rows, p_md_mean, p_fa_mean, p1: frac * p_md_mean + (T::one() - frac) * p_fa_mean }
}

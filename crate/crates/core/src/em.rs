//! Initialization and expectation-maximization updates of the unknown prior parameters.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::gamma::{normal_cdf, normal_pdf};
use crate::oamp::DenoiserOutput;
use crate::scalar::{Cx, Real};

/// Bounds applied to every activity probability.
pub const EPS_FLOOR: f64 = 1e-12;
/// Floor for a degenerate noise-variance estimate.
pub const SIGMA2_FLOOR: f64 = 1e-12;
/// Assumed initial SNR (linear) in the noise-variance initialization.
pub const INIT_SNR: f64 = 100.0;

/// Noise variance, per-row activity probabilities and per-row gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorEstimates<T: Real> {
    pub sigma2: T,
    pub eps: Vec<T>,
    pub gain: Vec<T>,
}

impl<T: Real> PriorEstimates<T> {
    /// Same activity and gain for every row.
    pub fn uniform(sigma2: T, eps: T, gain: T, rows: usize) -> Self {
        Self { sigma2, eps: vec![eps; rows], gain: vec![gain; rows] }
    }

    /// Whether every parameter satisfies its invariant.
    pub fn is_valid(&self) -> bool {
        self.sigma2 > T::zero()
            && self.eps.iter().all(|&e| e > T::zero() && e < T::one())
            && self.gain.iter().all(|&g| g >= T::zero())
    }
}

/// Result of [`init_priors`].
#[derive(Debug, Clone)]
pub struct PriorInit<T: Real> {
    pub priors: PriorEstimates<T>,
    /// Set when the received signal was zero and the noise variance hit its floor.
    pub sigma2_floored: bool,
}

fn clamp_eps<T: Real>(e: T) -> T {
    e.max(T::of(EPS_FLOOR)).min(T::one() - T::of(EPS_FLOOR))
}

fn activity_objective(c: f64, ratio: f64) -> f64 {
    let q = (1.0 + c * c) * normal_cdf(-c) - c * normal_pdf(c);
    (1.0 - 2.0 * ratio * q) / (1.0 + c * c - 2.0 * q)
}

/// Initial activity probability for an `n0 x size` codebook, together with the maximizing
/// abscissa. Coarse grid over `(0, 20]` followed by golden-section refinement.
pub fn initial_activity(n0: usize, size: usize) -> (f64, f64) {
    let ratio = size as f64 / n0 as f64;
    let f = |c: f64| activity_objective(c, ratio);
    let grid = 400;
    let step = 20.0 / grid as f64;
    let best = (1..=grid)
        .map(|i| i as f64 * step)
        .max_by(|&a, &b| f(a).total_cmp(&f(b)))
        .unwrap();
    let (mut lo, mut hi) = ((best - step).max(1e-9), (best + step).min(20.0));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-6 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let c = 0.5 * (lo + hi);
    let eps = (f(c) / ratio).clamp(EPS_FLOOR, 1.0 - EPS_FLOOR);
    (eps, c)
}

/// Starting point of EM learning from the received signal alone.
pub fn init_priors<T: Real>(y: &Array2<Cx<T>>, codebook: &Codebook<T>) -> PriorInit<T> {
    let (n0, m) = y.dim();
    let size = codebook.size();
    let energy: T = y.iter().map(|z| z.norm_sqr()).sum();
    let mut sigma2 = energy / (T::of_usize(n0 * m) * T::of(INIT_SNR + 1.0));
    let floored = !(sigma2 > T::zero());
    if floored {
        sigma2 = T::of(SIGMA2_FLOOR);
    }
    let (eps, _) = initial_activity(n0, size);
    let back = codebook.adjoint(y.view());
    let scale = T::of_usize(n0) / T::of_usize(size * m);
    let gain = back
        .axis_iter(Axis(0))
        .map(|row| scale * row.iter().map(|z| z.norm_sqr()).sum::<T>())
        .collect();
    PriorInit {
        priors: PriorEstimates { sigma2, eps: vec![T::of(eps); size], gain },
        sigma2_floored: floored,
    }
}

/// Posterior-spread term of the noise-variance update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseUpdate {
    /// `tr(C V C^H)/n0`, i.e. the per-entry posterior variance times `||C||_F^2/n0`.
    #[default]
    Exact,
    /// The per-entry posterior variance alone.
    Plain,
}

/// EM switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmOptions {
    /// Replace the per-row activity update by its average over rows.
    pub tie_activity: bool,
    pub noise_update: NoiseUpdate,
}

/// Result of [`em_update`].
#[derive(Debug, Clone)]
pub struct EmUpdate<T: Real> {
    pub priors: PriorEstimates<T>,
    /// Number of parameters moved onto their bounds.
    pub clamped: usize,
}

/// One EM step from the denoiser output of the current iteration.
pub fn em_update<T: Real>(
    y: &Array2<Cx<T>>,
    codebook: &Codebook<T>,
    den: &DenoiserOutput<T>,
    current: &PriorEstimates<T>,
    opts: EmOptions,
) -> EmUpdate<T> {
    let (n0, m) = y.dim();
    let fitted = codebook.apply(den.s_hat.view());
    let resid: T = y.iter().zip(fitted.iter()).map(|(a, b)| (*a - *b).norm_sqr()).sum();
    let spread = match opts.noise_update {
        NoiseUpdate::Exact => den.v_hat * codebook.energy() / T::of_usize(n0),
        NoiseUpdate::Plain => den.v_hat,
    };
    let mut sigma2 = resid / T::of_usize(n0 * m) + spread;
    let mut clamped = 0;
    if !(sigma2 > T::zero()) || !sigma2.is_finite() {
        sigma2 = (current.sigma2 * T::of(SIGMA2_FLOOR)).max(T::min_positive_value());
        clamped += 1;
    }

    let mut eps: Vec<T> = if opts.tie_activity {
        let mean = den.pi.iter().copied().sum::<T>() / T::of_usize(den.pi.len());
        vec![mean; den.pi.len()]
    } else {
        den.pi.clone()
    };
    for e in &mut eps {
        let c = clamp_eps(*e);
        if c != *e {
            clamped += 1;
        }
        *e = c;
    }

    let mf = T::of_usize(m);
    let gain = den
        .lambda
        .axis_iter(Axis(0))
        .zip(&den.rho)
        .map(|(row, &rho)| (row.iter().map(|z| z.norm_sqr()).sum::<T>() / mf + rho).max(T::zero()))
        .collect();

    EmUpdate { priors: PriorEstimates { sigma2, eps, gain }, clamped }
}

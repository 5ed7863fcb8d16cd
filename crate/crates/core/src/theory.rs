//! State evolution, its fixed point, large-antenna expansions and composed error predictions.

use std::io::Write;

use serde::Serialize;

use crate::codebook::Codebook;
use crate::decision::{row_theory, threshold};
use crate::error::{Error, Result};
use crate::gamma::{erfc, gamma_p, ln_gamma};
use crate::linalg::Cholesky;
use crate::oamp::{inactivity_log_odds, logistic_complement};
use crate::scalar::{Cx, Real};

/// Denoiser model used by the scalar recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeDenoiser {
    /// Per-entry error `eps g u / ((1 - eps) g + u)` averaged over gains.
    #[default]
    Bound,
    /// Exact Bernoulli-Gaussian MMSE of the row denoiser, by quadrature over the row energy.
    Exact,
}

/// Inputs of [`state_evolution`].
#[derive(Debug, Clone)]
pub struct SeParams<'a, T: Real> {
    pub sigma2: T,
    pub eps: T,
    /// Gain population; expectations over gains are sample means.
    pub gains: &'a [T],
    pub n0: usize,
    pub bits: u32,
    pub antennas: usize,
    pub iterations: usize,
    /// Prior variance entering the first linear step.
    pub initial_v: T,
    pub denoiser: SeDenoiser,
    /// General codebook for the linear step; `None` uses the DFT closed form.
    pub codebook: Option<&'a Codebook<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeStep<T: Real> {
    pub t: usize,
    pub u: T,
    pub v: T,
    /// Linear-step divergence `u/(u+v)`-type factor.
    pub omega_gamma: T,
    /// Denoiser divergence factor.
    pub omega_phi: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeTrajectory<T: Real> {
    pub steps: Vec<SeStep<T>>,
    /// Whether `(2^J/n0 - 1) eps / (1 - eps) < 1`.
    pub unique_fixed_point: bool,
}

impl<T: Real> SeTrajectory<T> {
    pub fn last_u(&self) -> Option<T> {
        self.steps.last().map(|s| s.u)
    }
}

/// `(1/2^J) tr((sigma2/v I + C C^H)^{-1} C C^H)` for a general codebook.
fn omega_gamma_general<T: Real>(cb: &Codebook<T>, sigma2: T, v: T) -> T {
    let gram = cb.gram();
    let n0 = cb.n0();
    let mut a = gram.clone();
    for i in 0..n0 {
        a[(i, i)] = a[(i, i)] + Cx::new(sigma2 / v, T::zero());
    }
    let chol = Cholesky::new(&a).expect("shifted Gram matrix is positive definite");
    let z = chol.solve(&gram);
    (0..n0).map(|i| z[(i, i)].re).sum::<T>() / T::of_usize(cb.size())
}

/// Expected posterior variance per entry of the row denoiser at observation variance `u`.
pub fn exact_mmse<T: Real>(u: T, eps: T, gains: &[T], m: usize) -> T {
    let total: T = gains
        .iter()
        .map(|&g| {
            let shrink = g / (g + u);
            let rho = g * u / (g + u);
            let mf = T::of_usize(m);
            let h = |energy: T| {
                let p = logistic_complement(inactivity_log_odds(m, u, g, eps, energy));
                p * rho + p * (T::one() - p) * shrink * shrink * energy / mf
            };
            eps * gamma_expectation(m, g + u, &h) + (T::one() - eps) * gamma_expectation(m, u, &h)
        })
        .sum();
    total / T::of_usize(gains.len().max(1))
}

/// `E[h(scale * Z)]` for `Z ~ Gamma(m, 1)` by composite Simpson quadrature.
fn gamma_expectation<T: Real>(m: usize, scale: T, h: &dyn Fn(T) -> T) -> T {
    let mf = m as f64;
    let lo = (mf - 12.0 * mf.sqrt() - 10.0).max(0.0);
    let hi = mf + 14.0 * mf.sqrt() + 40.0;
    let n = 4000usize;
    let step = (hi - lo) / n as f64;
    let lg = ln_gamma(mf);
    let mut acc = T::zero();
    for i in 0..=n {
        let z = lo + i as f64 * step;
        if z <= 0.0 {
            continue;
        }
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let dens = ((mf - 1.0) * z.ln() - z - lg).exp();
        acc = acc + T::of(w * dens) * h(scale * T::of(z));
    }
    acc * T::of(step / 3.0)
}

fn se_step<T: Real>(p: &SeParams<'_, T>, t: usize, v: T) -> (SeStep<T>, T) {
    let beta = T::of_usize(1usize << p.bits) / T::of_usize(p.n0);
    let (u, omega_gamma) = match p.codebook {
        None => (p.sigma2 + (beta - T::one()) * v, T::one() / (p.sigma2 / v + beta)),
        Some(cb) => {
            let og = omega_gamma_general(cb, p.sigma2, v);
            (v * (T::one() / og - T::one()), og)
        }
    };
    let eps = p.eps;
    let v_next = match p.denoiser {
        SeDenoiser::Bound => {
            p.gains.iter().map(|&g| eps * g * u / ((T::one() - eps) * g + u)).sum::<T>()
                / T::of_usize(p.gains.len().max(1))
        }
        SeDenoiser::Exact => {
            let mmse = exact_mmse(u, eps, p.gains, p.antennas);
            if mmse < u {
                mmse * u / (u - mmse)
            } else {
                T::of(1e-12) * u
            }
        }
    };
    (SeStep { t, u, v, omega_gamma, omega_phi: u / (u + v_next) }, v_next)
}

/// Iterates the scalar recursion from `initial_v`: the linear step gives
/// `u^t = sigma2 + (2^J/n0 - 1) v^t` (general codebooks: `v^t (1/Omega_gamma - 1)`), the
/// denoiser step gives `v^{t+1}`.
pub fn state_evolution<T: Real>(p: &SeParams<'_, T>) -> SeTrajectory<T> {
    let mut v = p.initial_v;
    let mut steps = Vec::with_capacity(p.iterations);
    for t in 1..=p.iterations {
        let (step, next) = se_step(p, t, v);
        steps.push(step);
        v = next;
    }
    let beta = T::of_usize(1usize << p.bits) / T::of_usize(p.n0);
    let cond = (beta - T::one()) * p.eps / (T::one() - p.eps);
    SeTrajectory { steps, unique_fixed_point: cond < T::one() }
}

/// Runs the recursion until the relative change of `u` falls below `1e-14` and returns the
/// last `u`.
pub fn iterate_to_fixed_point<T: Real>(p: &SeParams<'_, T>, max_iterations: usize) -> T {
    let mut v = p.initial_v;
    let mut u_prev = T::infinity();
    for t in 1..=max_iterations {
        let (step, next) = se_step(p, t, v);
        if ((step.u - u_prev) / step.u).abs() < T::of(1e-14) {
            return step.u;
        }
        u_prev = step.u;
        v = next;
    }
    u_prev
}

/// Closed-form limit `sigma2 / (1 - (2^J - n0) eps / ((1 - eps) n0))`.
pub fn fixed_point_u<T: Real>(sigma2: T, eps: T, n0: usize, bits: u32) -> Result<T> {
    let beta = T::of_usize(1 << bits) / T::of_usize(n0);
    let cond = (beta - T::one()) * eps / (T::one() - eps);
    if !(cond < T::one()) {
        return Err(Error::FixedPointCondition { value: cond.as_f64() });
    }
    Ok(sigma2 / (T::one() - cond))
}

/// Large-antenna approximations of the misdetection and false-alarm probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticTerms<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub c: T,
    pub d: T,
    /// Leading-order saddle-point terms.
    pub p_md: T,
    pub p_fa: T,
    /// Uniform (erfc-corrected) expansions.
    pub p_md_uniform: T,
    pub p_fa_uniform: T,
}

/// Expansions of `P(M, M alpha)` and `Q(M, M beta)` for `alpha < 1 < beta`.
pub fn asymptotic_pmd_pfa<T: Real>(m: usize, alpha: T, beta: T) -> Result<AsymptoticTerms<T>> {
    if !(alpha > T::zero() && alpha < T::one() && beta > T::one()) {
        return Err(Error::ExpansionDomain { alpha: alpha.as_f64(), beta: beta.as_f64() });
    }
    let two = T::of(2.0);
    let mf = T::of_usize(m);
    let c = -(two * (alpha - T::one() - alpha.ln())).sqrt();
    let d = (two * (beta - T::one() - beta.ln())).sqrt();
    let root = (two * T::PI() * mf).sqrt();
    let em = (-mf * c * c / two).exp() / root;
    let ef = (-mf * d * d / two).exp() / root;
    let half = T::of(0.5);
    let arg = (mf / two).sqrt();
    Ok(AsymptoticTerms {
        alpha,
        beta,
        c,
        d,
        p_md: -em / (alpha - T::one()),
        p_fa: ef / (beta - T::one()),
        p_md_uniform: half * erfc(-c * arg) - em * (T::one() / (alpha - T::one()) - T::one() / c),
        p_fa_uniform: half * erfc(d * arg) + ef * (T::one() / (beta - T::one()) - T::one() / d),
    })
}

/// `alpha = 2a/M` and `beta = 2b/M` of a row with gain-to-variance ratio `ratio`.
pub fn expansion_arguments<T: Real>(ratio: T) -> (T, T) {
    let r = ratio.ln_1p() / ratio;
    (r, (T::one() + ratio) * r)
}

/// Final error probability `(1 - K_a/2^J) P_fa + (K_a/2^J)(1 - P_md) cer`.
pub fn theoretical_p2<T: Real>(active: usize, bits: u32, p_md: T, p_fa: T, cer: T) -> T {
    let frac = T::of_usize(active) / T::of_usize(1 << bits);
    (T::one() - frac) * p_fa + frac * (T::one() - p_md) * cer
}

/// Limit of the final error probability when detection is perfect and stitching random.
pub fn saturation_p2(active: usize, bits: u32) -> f64 {
    active.saturating_sub(1) as f64 / (1u64 << bits) as f64
}

/// Probability mass of the chi-square energy between the two decision abscissas, so that
/// `P_md + P_fa = 1 - tau`.
pub fn tradeoff_tau<T: Real>(m: usize, a: T, b: T) -> Result<T> {
    if !(a < b) {
        return Err(Error::InvalidInterval { a: a.as_f64(), b: b.as_f64() });
    }
    let mf = T::of_usize(m);
    let two = T::of(2.0);
    Ok(gamma_p(mf, two * b) - gamma_p(mf, two * a))
}

/// One row of the theory sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryRow {
    pub antennas: usize,
    pub active: usize,
    pub n0: usize,
    pub bits: u32,
    pub gain_ratio: f64,
    pub sigma2: f64,
    pub u_fixed: f64,
    pub theta: f64,
    pub p_md: f64,
    pub p_fa: f64,
    pub tau: f64,
    pub p1: f64,
    pub cer: f64,
    pub p2: f64,
    pub p_md_expansion: f64,
    pub p_fa_expansion: f64,
    pub p_md_uniform: f64,
    pub p_fa_uniform: f64,
}

/// Theory for a homogeneous population with gain `ratio * u_fixed`, stitched with error `cer`.
pub fn theory_row(antennas: usize, active: usize, n0: usize, bits: u32, sigma2: f64, ratio: f64, cer: f64) -> Result<TheoryRow> {
    let eps = active as f64 / (1u64 << bits) as f64;
    let u = fixed_point_u(sigma2, eps, n0, bits)?;
    let g = ratio * u;
    let rt = row_theory(antennas, u, g);
    let (alpha, beta) = expansion_arguments(ratio);
    let asy = asymptotic_pmd_pfa(antennas, alpha, beta)?;
    Ok(TheoryRow {
        antennas,
        active,
        n0,
        bits,
        gain_ratio: ratio,
        sigma2,
        u_fixed: u,
        theta: threshold(antennas, u, g),
        p_md: rt.p_md,
        p_fa: rt.p_fa,
        tau: rt.tau,
        p1: eps * rt.p_md + (1.0 - eps) * rt.p_fa,
        cer,
        p2: theoretical_p2(active, bits, rt.p_md, rt.p_fa, cer),
        p_md_expansion: asy.p_md,
        p_fa_expansion: asy.p_fa,
        p_md_uniform: asy.p_md_uniform,
        p_fa_uniform: asy.p_fa_uniform,
    })
}

/// Writes theory rows as CSV with a header.
pub fn write_theory_csv<W: Write>(rows: &[TheoryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

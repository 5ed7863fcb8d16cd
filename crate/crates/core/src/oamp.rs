//! OAMP detection of the row-sparse codeword state matrix.
//!
//! Each iteration runs a de-correlated LMMSE step, a Bernoulli-Gaussian row denoiser and
//! one EM update of the priors. With a DFT codebook the LMMSE inverse collapses to a
//! scalar and every product with `C` or `C^H` is an FFT, so an iteration costs
//! `O(M 2^J J)`; the general path factors an `n0 x n0` system per distinct variance.

use std::io::Write;

use ndarray::{Array2, Axis, Zip};

use crate::codebook::Codebook;
use crate::em::{em_update, init_priors, EmOptions, PriorEstimates};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::{Cx, Real};

/// Relative floor on `u - v_hat` before the orthogonalization division.
pub const GUARD: f64 = 1e-12;

/// Output of the linear step.
#[derive(Debug, Clone)]
pub struct LinearOutput<T: Real> {
    /// De-correlated observation `R` (`2^J x M`).
    pub r: Array2<Cx<T>>,
    /// Per-antenna error variance of `R`.
    pub u: Vec<T>,
    /// Set when the general path had to regularize a singular system.
    pub regularized: bool,
}

impl<T: Real> LinearOutput<T> {
    /// Antenna-averaged variance.
    pub fn u_mean(&self) -> T {
        self.u.iter().copied().sum::<T>() / T::of_usize(self.u.len())
    }
}

/// De-correlated LMMSE estimate of `X` from `Y` given the prior mean `S` and per-antenna
/// prior variances `v`.
pub fn linear_estimate<T: Real>(
    y: &Array2<Cx<T>>,
    codebook: &Codebook<T>,
    s: &Array2<Cx<T>>,
    v: &[T],
    sigma2: T,
) -> LinearOutput<T> {
    let m = y.ncols();
    assert_eq!(v.len(), m, "one prior variance per antenna");
    let resid = y - &codebook.apply(s.view());
    if let Some(frame) = codebook.frame_bound() {
        let r = s + &codebook.adjoint(resid.view());
        let u = v.iter().map(|&vm| sigma2 + (frame - T::one()) * vm).collect();
        return LinearOutput { r, u, regularized: false };
    }
    general_linear(codebook, s, &resid, v, sigma2)
}

fn general_linear<T: Real>(
    codebook: &Codebook<T>,
    s: &Array2<Cx<T>>,
    resid: &Array2<Cx<T>>,
    v: &[T],
    sigma2: T,
) -> LinearOutput<T> {
    let n0 = codebook.n0();
    let size = T::of_usize(codebook.size());
    let gram = codebook.gram();
    let gram_trace: T = (0..n0).map(|i| gram[(i, i)].re).sum();
    let mut regularized = false;
    let mut w = Array2::<Cx<T>>::zeros(resid.dim());
    let mut scale = vec![T::zero(); v.len()];
    let mut u = vec![T::zero(); v.len()];
    let mut done = vec![false; v.len()];
    for m in 0..v.len() {
        if done[m] {
            continue;
        }
        let vm = v[m];
        let mut a = gram.mapv(|z| z * vm);
        for i in 0..n0 {
            a[(i, i)].re = a[(i, i)].re + sigma2;
        }
        let mut delta = T::of(1e-12) * (vm * gram_trace / T::of_usize(n0) + sigma2);
        let chol = loop {
            if let Some(c) = Cholesky::new(&a) {
                break c;
            }
            regularized = true;
            for i in 0..n0 {
                a[(i, i)].re = a[(i, i)].re + delta;
            }
            delta = delta * T::of(10.0);
        };
        // tr(B C) = v tr(A^{-1} C C^H)
        let z = chol.solve(&gram);
        let tr_bc = vm * (0..n0).map(|i| z[(i, i)].re).sum::<T>();
        let kappa = size / tr_bc;
        for k in m..v.len() {
            if !done[k] && v[k] == vm {
                let mut col: Vec<Cx<T>> = resid.column(k).to_vec();
                chol.solve_in_place(&mut col);
                for (dst, src) in w.column_mut(k).iter_mut().zip(col) {
                    *dst = src * vm;
                }
                scale[k] = kappa;
                u[k] = vm * (kappa - T::one());
                done[k] = true;
            }
        }
    }
    let back = codebook.adjoint(w.view());
    let mut r = s.clone();
    Zip::from(r.columns_mut()).and(back.columns()).and(&scale).for_each(|mut rc, bc, &k| {
        rc.iter_mut().zip(bc).for_each(|(x, &b)| *x = *x + b * k);
    });
    LinearOutput { r, u, regularized }
}

/// Posterior quantities of the row denoiser.
#[derive(Debug, Clone)]
pub struct DenoiserOutput<T: Real> {
    /// Posterior activity probability per row.
    pub pi: Vec<T>,
    /// Posterior mean given activity, per row.
    pub lambda: Array2<Cx<T>>,
    /// Posterior per-entry variance given activity, per row.
    pub rho: Vec<T>,
    /// MMSE estimate `pi * lambda`.
    pub s_hat: Array2<Cx<T>>,
    /// Average per-entry MMSE.
    pub v_hat: T,
}

/// Denoiser output followed by the orthogonalization that feeds the next linear step.
#[derive(Debug, Clone)]
pub struct NonlinearOutput<T: Real> {
    pub denoiser: DenoiserOutput<T>,
    pub s_next: Array2<Cx<T>>,
    pub v_next: T,
    /// Set when `u - v_hat` fell below its relative floor.
    pub guard_hit: bool,
}

/// Log-odds of inactivity for a row with energy `energy = ||r_j||^2`.
pub fn inactivity_log_odds<T: Real>(m: usize, u: T, gain: T, eps: T, energy: T) -> T {
    (T::one() / eps - T::one()).ln() + T::of_usize(m) * (gain / u).ln_1p() - gain * energy / (u * (gain + u))
}

/// `1 / (1 + e^x)` without overflow.
pub fn logistic_complement<T: Real>(x: T) -> T {
    if x > T::zero() {
        let e = (-x).exp();
        e / (T::one() + e)
    } else {
        T::one() / (T::one() + x.exp())
    }
}

/// Bernoulli-Gaussian MMSE denoiser applied row-wise to `R` observed with variance `u`.
pub fn nonlinear_estimate<T: Real>(r: &Array2<Cx<T>>, u: T, priors: &PriorEstimates<T>) -> NonlinearOutput<T> {
    let (rows, m) = r.dim();
    assert_eq!(priors.gain.len(), rows);
    let mf = T::of_usize(m);
    let mut pi = vec![T::zero(); rows];
    let mut rho = vec![T::zero(); rows];
    let mut lambda = Array2::<Cx<T>>::zeros((rows, m));
    let mut s_hat = Array2::<Cx<T>>::zeros((rows, m));
    let mut var_sum = T::zero();
    for (j, rj) in r.axis_iter(Axis(0)).enumerate() {
        let g = priors.gain[j];
        let energy: T = rj.iter().map(|z| z.norm_sqr()).sum();
        let p = logistic_complement(inactivity_log_odds(m, u, g, priors.eps[j], energy));
        let shrink = g / (g + u);
        let rh = g * u / (g + u);
        let lam_energy = shrink * shrink * energy;
        for ((l, s), &x) in lambda.row_mut(j).iter_mut().zip(s_hat.row_mut(j).iter_mut()).zip(rj) {
            *l = x * shrink;
            *s = *l * p;
        }
        pi[j] = p;
        rho[j] = rh;
        var_sum = var_sum + p * mf * rh + p * (T::one() - p) * lam_energy;
    }
    let v_hat = var_sum / T::of_usize(rows * m);

    let floor = T::of(GUARD) * u;
    let guard_hit = u - v_hat < floor;
    let (s_next, v_next) = if guard_hit {
        let v = floor;
        let a = v / v_hat;
        let b = v / u;
        let s = Zip::from(&s_hat).and(r).map_collect(|&sh, &x| sh * a - x * b);
        (s, v)
    } else {
        let den = u - v_hat;
        let s = Zip::from(&s_hat).and(r).map_collect(|&sh, &x| (sh * u - x * v_hat) / den);
        let v = (v_hat * u / den).max(T::min_positive_value());
        (s, v)
    };
    NonlinearOutput {
        denoiser: DenoiserOutput { pi, lambda, rho, s_hat, v_hat },
        s_next,
        v_next,
        guard_hit,
    }
}

/// Where the priors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource<T: Real> {
    /// Initialized from `Y` and refined by EM every iteration.
    Learned(EmOptions),
    /// Held fixed (for example the true priors).
    Fixed(PriorEstimates<T>),
}

/// Variance of the zero initial estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialVariance<T: Real> {
    /// `v = 1`.
    Unit,
    /// Per-entry signal energy measured from `Y`: `(||Y||^2/M - n0 sigma2) / 2^J`.
    Measured,
    Value(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOptions<T: Real> {
    pub max_iterations: usize,
    /// Stop once `||S_t - S_{t-1}||^2 / ||S_t||^2` drops below this.
    pub tolerance: T,
    pub priors: PriorSource<T>,
    pub initial_variance: InitialVariance<T>,
}

impl<T: Real> Default for DetectorOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: T::of(1e-5),
            priors: PriorSource::Learned(EmOptions::default()),
            initial_variance: InitialVariance::Measured,
        }
    }
}

/// One detector iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub t: usize,
    /// Variance of `R` in this iteration.
    pub u: T,
    /// Prior variance fed to the linear step.
    pub v: T,
    pub v_hat: T,
    pub sigma2: T,
    /// Relative change of the MMSE estimate.
    pub change: T,
    /// Normalized squared error against the truth when supplied.
    pub nmse: Option<T>,
}

/// Diagnostic flags raised during detection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectorFlags {
    pub guard_hits: usize,
    pub regularized: bool,
    pub sigma2_floored: bool,
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct DetectorResult<T: Real> {
    /// Final MMSE estimate of `X`.
    pub x_hat: Array2<Cx<T>>,
    /// Final observation `R` and its variance.
    pub r: Array2<Cx<T>>,
    pub u: T,
    /// Posterior activity of the final iteration.
    pub pi: Vec<T>,
    /// Row gains that produced the final denoising.
    pub gain_prior: Vec<T>,
    /// Priors after the final EM update.
    pub priors: PriorEstimates<T>,
    pub v_hat: T,
    pub trace: Vec<IterationRecord<T>>,
    pub iterations: usize,
    pub converged: bool,
    pub flags: DetectorFlags,
}

impl<T: Real> DetectorResult<T> {
    /// Learned row gain plus the residual estimation variance.
    pub fn gain_estimate(&self, row: usize) -> T {
        self.priors.gain[row] + self.v_hat
    }

    pub fn antennas(&self) -> usize {
        self.x_hat.ncols()
    }
}

fn frob<T: Real>(a: &Array2<Cx<T>>) -> T {
    a.iter().map(|z| z.norm_sqr()).sum()
}

fn frob_diff<T: Real>(a: &Array2<Cx<T>>, b: &Array2<Cx<T>>) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| (*x - *y).norm_sqr()).sum()
}

/// Runs OAMP with interleaved EM on one sub-slot.
pub fn detect_slot<T: Real>(
    y: &Array2<Cx<T>>,
    codebook: &Codebook<T>,
    opts: &DetectorOptions<T>,
    truth: Option<&Array2<Cx<T>>>,
) -> Result<DetectorResult<T>> {
    let (n0, m) = y.dim();
    let size = codebook.size();
    if n0 != codebook.n0() || m == 0 {
        return Err(Error::InvalidDimensions(format!(
            "received signal is {n0} x {m}, codebook expects {} rows",
            codebook.n0()
        )));
    }
    if let Some(x) = truth {
        if x.dim() != (size, m) {
            return Err(Error::InvalidDimensions("truth must be 2^J x M".into()));
        }
    }
    let mut flags = DetectorFlags::default();
    let (mut priors, em) = match &opts.priors {
        PriorSource::Learned(em) => {
            let init = init_priors(y, codebook);
            flags.sigma2_floored = init.sigma2_floored;
            (init.priors, Some(*em))
        }
        PriorSource::Fixed(p) => {
            if p.gain.len() != size || p.eps.len() != size {
                return Err(Error::InvalidDimensions("priors must have 2^J rows".into()));
            }
            (p.clone(), None)
        }
    };
    let mut v = match opts.initial_variance {
        InitialVariance::Unit => T::one(),
        InitialVariance::Value(v) => v,
        InitialVariance::Measured => {
            let per_antenna = frob(y) / T::of_usize(m);
            ((per_antenna - T::of_usize(n0) * priors.sigma2) / T::of_usize(size)).max(T::of(GUARD) * priors.sigma2)
        }
    };
    let truth_energy = truth.map(frob);

    let mut s = Array2::<Cx<T>>::zeros((size, m));
    let mut prev = Array2::<Cx<T>>::zeros((size, m));
    let mut trace: Vec<IterationRecord<T>> = Vec::new();
    let mut converged = false;
    let mut last = None;
    let mut gain_prior = priors.gain.clone();
    for t in 1..=opts.max_iterations.max(1) {
        let lin = linear_estimate(y, codebook, &s, &vec![v; m], priors.sigma2);
        flags.regularized |= lin.regularized;
        let u = lin.u_mean();
        let nl = nonlinear_estimate(&lin.r, u, &priors);
        flags.guard_hits += nl.guard_hit as usize;
        if let Some(em) = em {
            gain_prior = priors.gain.clone();
            let up = em_update(y, codebook, &nl.denoiser, &priors, em);
            flags.clamped += up.clamped;
            priors = up.priors;
        }
        let s_hat = &nl.denoiser.s_hat;
        let num = frob_diff(s_hat, &prev);
        let den = frob(s_hat);
        let change = if den > T::zero() {
            num / den
        } else if num > T::zero() {
            T::infinity()
        } else {
            T::zero()
        };
        let nmse = match (truth, truth_energy) {
            (Some(x), Some(e)) if e > T::zero() => Some(frob_diff(s_hat, x) / e),
            _ => None,
        };
        trace.push(IterationRecord { t, u, v, v_hat: nl.denoiser.v_hat, sigma2: priors.sigma2, change, nmse });
        let finite = u.is_finite() && nl.v_next.is_finite() && nl.denoiser.v_hat.is_finite() && priors.sigma2.is_finite() && den.is_finite();
        if !finite {
            return Err(Error::NonFinite {
                iteration: t,
                trace: trace.iter().map(|r| (r.u.as_f64(), r.v.as_f64())).collect(),
            });
        }
        v = nl.v_next;
        s = nl.s_next.clone();
        prev = nl.denoiser.s_hat.clone();
        last = Some((lin.r, u, nl));
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    let (r, u, nl) = last.expect("at least one iteration");
    let iterations = trace.len();
    Ok(DetectorResult {
        x_hat: nl.denoiser.s_hat,
        r,
        u,
        pi: nl.denoiser.pi,
        gain_prior,
        priors,
        v_hat: nl.denoiser.v_hat,
        trace,
        iterations,
        converged,
        flags,
    })
}

/// Writes the per-iteration trace as CSV with columns `t,u,v,nmse`.
pub fn write_trace_csv<T: Real, W: Write>(trace: &[IterationRecord<T>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "u", "v", "nmse"])?;
    for r in trace {
        out.write_record([
            r.t.to_string(),
            format!("{:e}", r.u),
            format!("{:e}", r.v),
            r.nmse.map(|x| format!("{x:e}")).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{state_matrix, transmit_slot};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<Cx<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| Cx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn first_iteration_variance_on_default_codebook() {
        let cb = Codebook::<f64>::dft(1024, 12, 7).unwrap();
        let y = random_matrix(1024, 2, 1);
        let s = Array2::zeros((4096, 2));
        let out = linear_estimate(&y, &cb, &s, &[1.0, 1.0], 0.01);
        assert!(out.u.iter().all(|&u| (u - 3.01).abs() < 1e-12));
    }

    #[test]
    fn fast_and_general_paths_agree() {
        let cb = Codebook::<f64>::dft(64, 8, 3).unwrap();
        let general = cb.to_general();
        let y = random_matrix(64, 3, 2);
        let s = random_matrix(256, 3, 3);
        let v = [0.7, 0.7, 0.2];
        let a = linear_estimate(&y, &cb, &s, &v, 0.05);
        let b = linear_estimate(&y, &general, &s, &v, 0.05);
        assert!(!b.regularized);
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((&a.r - &b.r).iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn perfect_prior_passes_truth_through() {
        let cb = Codebook::<f64>::dft(32, 7, 1).unwrap();
        let x = random_matrix(128, 2, 4);
        let y = cb.apply(x.view());
        let out = linear_estimate(&y, &cb, &x, &[1e-12, 1e-12], 1e-12);
        assert!((&out.r - &x).iter().all(|z| z.norm() < 1e-10));
        assert!(out.u.iter().all(|&u| u > 0.0 && u < 1e-10));
    }

    #[test]
    fn zero_energy_activity() {
        let r = Array2::<Cx<f64>>::zeros((1, 8));
        let p = PriorEstimates::uniform(1.0, 0.01, 1.0, 1);
        let out = nonlinear_estimate(&r, 1.0, &p);
        let want = 1.0 / (99.0 * 256.0 + 1.0);
        assert!((out.denoiser.pi[0] - want).abs() < 1e-15);
    }

    #[test]
    fn equal_variance_shrinkage_and_pass_through() {
        let r = random_matrix(3, 4, 9);
        let p = PriorEstimates::uniform(1.0, 0.3, 1.0, 3);
        let out = nonlinear_estimate(&r, 1.0, &p);
        assert!((&out.denoiser.lambda - &r.mapv(|z| z * 0.5)).iter().all(|z| z.norm() < 1e-15));
        assert!(out.denoiser.rho.iter().all(|&x| (x - 0.5).abs() < 1e-15));

        let r = r.mapv(|z| z * 100.0);
        let p = PriorEstimates::uniform(1.0, 1.0 - 1e-12, 1e8, 3);
        let out = nonlinear_estimate(&r, 1.0, &p);
        assert!((&out.denoiser.s_hat - &r).iter().all(|z| z.norm() < 1e-6 * 100.0));
    }

    #[test]
    fn zero_gain_rows() {
        let r = random_matrix(2, 4, 1);
        let p = PriorEstimates { sigma2: 1.0, eps: vec![0.2, 0.2], gain: vec![0.0, 0.0] };
        let out = nonlinear_estimate(&r, 1.0, &p);
        assert!(out.denoiser.pi.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        assert!(out.denoiser.lambda.iter().all(|z| z.norm() == 0.0));
        assert!(out.denoiser.rho.iter().all(|&x| x == 0.0));
        assert!(out.v_next > 0.0);
        assert!(out.s_next.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn log_domain_survives_many_antennas() {
        let r = random_matrix(1, 512, 3).mapv(|z| z * 1e3);
        let p = PriorEstimates::uniform(1.0, 0.01, 1e6, 1);
        let out = nonlinear_estimate(&r, 1.0, &p);
        assert!(out.denoiser.pi[0] > 0.999);
        let out = nonlinear_estimate(&Array2::zeros((1, 512)), 1.0, &p);
        assert!(out.denoiser.pi[0] >= 0.0 && out.denoiser.pi[0] < 1e-100);
    }

    fn sparse_instance(n0: usize, bits: u32, active: usize, m: usize, sigma2: f64, seed: u64) -> (Codebook<f64>, Array2<Cx<f64>>, Array2<Cx<f64>>) {
        let cb = Codebook::<f64>::dft(n0, bits, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let idx: Vec<usize> = rand::seq::index::sample(&mut rng, cb.size(), active).into_iter().map(|i| i + 1).collect();
        let h = Array2::from_shape_fn((active, m), |_| {
            Cx::new(rng.sample::<f64, _>(rand_distr::StandardNormal), rng.sample::<f64, _>(rand_distr::StandardNormal)) * (0.5f64).sqrt()
        });
        let x = state_matrix(cb.size(), &idx, &h).unwrap();
        let y = transmit_slot(&cb, &idx, &h, sigma2, seed + 2).unwrap();
        (cb, y, x)
    }

    #[test]
    fn high_snr_recovery() {
        let (cb, y, x) = sparse_instance(256, 10, 10, 8, 1e-8, 11);
        let res = detect_slot(&y, &cb, &DetectorOptions::default(), Some(&x)).unwrap();
        let nmse = res.trace.last().unwrap().nmse.unwrap();
        assert!(nmse < 1e-4, "nmse {nmse}");
        assert!(res.iterations <= 50);
    }

    #[test]
    fn pure_noise_input() {
        let cb = Codebook::<f64>::dft(128, 9, 1).unwrap();
        let y = transmit_slot(&cb, &[], &Array2::zeros((0, 4)), 1.0, 3).unwrap();
        let res = detect_slot(&y, &cb, &DetectorOptions::default(), None).unwrap();
        let energy: f64 = res.x_hat.iter().map(|z| z.norm_sqr()).sum();
        assert!(energy < 512.0 * 4.0 * res.u, "{energy}");

        // learned priors may fit the noise; with the true noise level every row stays inactive
        let opts = DetectorOptions {
            priors: PriorSource::Fixed(PriorEstimates::uniform(1.0, 0.01, 1.0, 512)),
            ..Default::default()
        };
        let res = detect_slot(&y, &cb, &opts, None).unwrap();
        assert!(res.pi.iter().all(|&p| p < 0.5), "{:?}", res.pi.iter().cloned().fold(0.0, f64::max));
        let energy: f64 = res.x_hat.iter().map(|z| z.norm_sqr()).sum();
        assert!(energy < 512.0 * 4.0 * res.u, "{energy}");
    }

    #[test]
    fn op_counts_follow_fft_budget() {
        let (cb, y, _) = sparse_instance(64, 8, 4, 4, 1e-3, 5);
        cb.reset_op_counts();
        let res = detect_slot(&y, &cb, &DetectorOptions::default(), None).unwrap();
        let counts = cb.op_counts();
        // one adjoint for initialization, then apply + adjoint + EM apply per iteration
        assert_eq!(counts.transforms, 4 + 3 * 4 * res.iterations as u64);
        assert_eq!(counts.dense_macs, 0);
    }

    #[test]
    fn single_precision_detector() {
        let cb = Codebook::<f32>::dft(128, 9, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let idx = vec![3usize, 100, 400];
        let h = Array2::from_shape_fn((3, 4), |_| Cx::new(rng.gen::<f32>() - 0.5, rng.gen::<f32>() - 0.5) * 4.0);
        let x = state_matrix(512, &idx, &h).unwrap();
        let y = transmit_slot(&cb, &idx, &h, 1e-4, 1).unwrap();
        let res = detect_slot(&y, &cb, &DetectorOptions::default(), Some(&x)).unwrap();
        assert!(res.trace.last().unwrap().nmse.unwrap() < 1e-2);
    }

    #[test]
    fn trace_csv_has_header() {
        let (cb, y, x) = sparse_instance(64, 8, 4, 2, 1e-3, 5);
        let res = detect_slot(&y, &cb, &DetectorOptions::default(), Some(&x)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&res.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,u,v,nmse\n1,"));
        assert_eq!(text.lines().count(), res.iterations + 1);
    }

    proptest! {
        #[test]
        fn denoiser_invariants(seed in any::<u64>(), u in 0.01f64..10.0, eps in 0.001f64..0.999, gain in 0.0f64..100.0, scale in 0.0f64..20.0) {
            let r = random_matrix(6, 4, seed).mapv(|z| z * scale);
            let p = PriorEstimates::uniform(1.0, eps, gain, 6);
            let out = nonlinear_estimate(&r, u, &p);
            prop_assert!(out.denoiser.pi.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(out.denoiser.rho.iter().all(|&x| x <= gain.min(u)));
            prop_assert!(out.denoiser.rho.iter().all(|&x| gain == 0.0 || x < gain.min(u)));
            prop_assert!(out.denoiser.v_hat >= 0.0);
            prop_assert!(out.v_next > 0.0);
        }

        #[test]
        fn posterior_matches_threshold_at_even_prior(seed in any::<u64>(), u in 0.1f64..5.0, gain in 0.01f64..50.0, scale in 0.0f64..6.0) {
            let m = 8;
            let r = random_matrix(20, m, seed).mapv(|z| z * scale * (gain + u).sqrt());
            let p = PriorEstimates::uniform(1.0, 0.5, gain, 20);
            let out = nonlinear_estimate(&r, u, &p);
            let theta = crate::decision::threshold(m, u, gain);
            for (j, row) in r.axis_iter(Axis(0)).enumerate() {
                let e: f64 = row.iter().map(|z| z.norm_sqr()).sum();
                if ((e - theta) / theta).abs() > 1e-9 {
                    prop_assert_eq!(out.denoiser.pi[j] >= 0.5, e > theta);
                }
            }
        }
    }
}

//! Regularized incomplete gamma functions and the distributions built on them.

use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];
const MAX_ITER: usize = 100_000;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    if x < half {
        // reflection
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::of(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::of(c) / (x + T::of_usize(i));
    }
    let t = x + T::of(LANCZOS_G) + half;
    T::of(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

fn prefactor<T: Real>(a: T, x: T) -> T {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

/// Lower regularized gamma `P(a, x)` by its power series. Converges for every `x >= 0`
/// but is only efficient for `x < a + 1`.
pub fn gamma_p_series<T: Real>(a: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let mut ap = a;
    let mut del = T::one() / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap = ap + T::one();
        del = del * x / ap;
        sum = sum + del;
        if del.abs() < sum.abs() * T::epsilon() {
            break;
        }
    }
    (sum * prefactor(a, x)).min(T::one())
}

/// Upper regularized gamma `Q(a, x)` by its continued fraction (modified Lentz).
/// Efficient for `x > a + 1`.
pub fn gamma_q_continued_fraction<T: Real>(a: T, x: T) -> T {
    if x <= T::zero() {
        return T::one();
    }
    let tiny = T::min_positive_value() / T::epsilon();
    let two = T::of(2.0);
    let mut b = x + T::one() - a;
    let mut c = T::one() / tiny;
    let mut d = T::one() / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = T::of_usize(i);
        let an = -fi * (fi - a);
        b = b + two;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h = h * del;
        if (del - T::one()).abs() < T::epsilon() {
            break;
        }
    }
    (prefactor(a, x) * h).min(T::one())
}

/// Lower regularized incomplete gamma `P(a, x) = γ(a, x)/Γ(a)`.
pub fn gamma_p<T: Real>(a: T, x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else if x.is_infinite() {
        T::one()
    } else if x < a + T::one() {
        gamma_p_series(a, x)
    } else {
        T::one() - gamma_q_continued_fraction(a, x)
    }
}

/// Upper regularized incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q<T: Real>(a: T, x: T) -> T {
    if x <= T::zero() {
        T::one()
    } else if x.is_infinite() {
        T::zero()
    } else if x < a + T::one() {
        T::one() - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

/// CDF of the chi-square distribution with `k` degrees of freedom.
pub fn chi_square_cdf<T: Real>(k: usize, x: T) -> T {
    gamma_p(T::of_usize(k) / T::of(2.0), x / T::of(2.0))
}

/// Complementary error function.
pub fn erfc<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    if x >= T::zero() {
        gamma_q(half, x * x)
    } else {
        T::one() + gamma_p(half, x * x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::of(0.5) * erfc(-x / T::SQRT_2())
}

/// Standard normal density.
pub fn normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) / T::of(2.0)).exp() / (T::of(2.0) * T::PI()).sqrt()
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Paired t-tests, t-based confidence intervals and the layer 0 to 1 jump.
//!
//! The Student-t CDF goes through the regularized incomplete beta function:
//! for `x = df / (df + t^2)`, the two-sided tail mass is `I_x(df/2, 1/2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::ProbeKind;
use crate::scalar::{mean, sample_sd, Scalar};

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

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, reflection below 0.5).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

/// Continued fraction for `I_x(a, b)` (modified Lentz).
fn beta_cf<T: Scalar>(x: T, a: T, b: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let clamp = |v: T| if v.abs() < tiny { tiny } else { v };
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one / clamp(one - qab * x / qap);
    let mut h = d;
    for m in 1..=500usize {
        let m = T::from_usize_lossy(m);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one / clamp(one + aa * d);
        c = clamp(one + aa / c);
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one / clamp(one + aa * d);
        c = clamp(one + aa / c);
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// `I_x(a, b)` given both `x` and `y = 1 - x`, so callers can pass an
/// accurately computed complement.
fn reg_inc_beta_xy<T: Scalar>(x: T, y: T, a: T, b: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if y <= T::zero() {
        return T::one();
    }
    let ln_front = a * x.ln() + b * y.ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let front = ln_front.exp();
    if x < (a + T::one()) / (a + b + T::lit(2.0)) {
        front * beta_cf(x, a, b) / a
    } else {
        T::one() - front * beta_cf(y, b, a) / b
    }
}

/// Regularized incomplete beta function `I_x(a, b)` for `x ∈ [0, 1]`, `a, b > 0`.
pub fn reg_inc_beta<T: Scalar>(x: T, a: T, b: T) -> T {
    reg_inc_beta_xy(x, T::one() - x, a, b)
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student-t with `df` degrees of freedom.
pub fn student_t_two_sided<T: Scalar>(t: T, df: T) -> T {
    if t.is_nan() {
        return t;
    }
    if t.is_infinite() {
        return T::zero();
    }
    let t2 = t * t;
    let denom = df + t2;
    reg_inc_beta_xy(df / denom, t2 / denom, df * T::lit(0.5), T::lit(0.5))
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf<T: Scalar>(t: T, df: T) -> T {
    let tail = student_t_two_sided(t, df) * T::lit(0.5);
    if t > T::zero() {
        T::one() - tail
    } else {
        tail
    }
}

/// Inverse of [`student_t_cdf`] by bracketing and bisection.
pub fn student_t_quantile<T: Scalar>(p: T, df: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::InvalidConfig(format!(
            "quantile level {p} outside (0, 1)"
        )));
    }
    if !(df > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "degrees of freedom {df} must be positive"
        )));
    }
    let half = T::lit(0.5);
    if p == half {
        return Ok(T::zero());
    }
    // Solve in the upper half and mirror; the upper tail is computed directly.
    let upper = if p > half { T::one() - p } else { p };
    let tail = |t: T| student_t_two_sided(t, df) * half;
    let mut lo = T::zero();
    let mut hi = T::one();
    while tail(hi) > upper {
        lo = hi;
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return Ok(if p > half { hi } else { -hi });
        }
    }
    for _ in 0..300 {
        let mid = (lo + hi) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        if tail(mid) > upper {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = (lo + hi) * half;
    Ok(if p > half { q } else { -q })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest<T> {
    pub t: T,
    pub p: T,
    pub df: usize,
}

/// One-sample t-test of `mean(d) = 0`.
pub fn one_sample_t_test<T: Scalar>(d: &[T]) -> Result<TTest<T>> {
    let n = d.len();
    if n < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            actual: n,
        });
    }
    let m = mean(d).expect("non-empty");
    let df = n - 1;
    // equal differences take the exact path; the two-pass sd could leave rounding residue
    let sd = if d.iter().all(|&v| v == d[0]) {
        T::zero()
    } else {
        sample_sd(d).expect("n >= 2")
    };
    if sd == T::zero() {
        return Ok(if m == T::zero() {
            TTest {
                t: T::zero(),
                p: T::one(),
                df,
            }
        } else {
            TTest {
                t: if m > T::zero() {
                    T::infinity()
                } else {
                    T::neg_infinity()
                },
                p: T::zero(),
                df,
            }
        });
    }
    let t = m / (sd / T::from_usize_lossy(n).sqrt());
    let p = student_t_two_sided(t, T::from_usize_lossy(df));
    Ok(TTest { t, p, df })
}

/// Paired t-test on `xs - ys`.
pub fn paired_t_test<T: Scalar>(xs: &[T], ys: &[T]) -> Result<TTest<T>> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let d: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| x - y).collect();
    one_sample_t_test(&d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval<T> {
    pub mean: T,
    pub half_width: T,
}

impl<T: Scalar> ConfidenceInterval<T> {
    pub fn lower(&self) -> T {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> T {
        self.mean + self.half_width
    }
}

/// `mean ± t_{(1+level)/2, n-1} · sd / sqrt(n)`.
pub fn mean_ci<T: Scalar>(values: &[T], level: T) -> Result<ConfidenceInterval<T>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            actual: n,
        });
    }
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::InvalidConfig(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let m = mean(values).expect("non-empty");
    let sd = sample_sd(values).expect("n >= 2");
    let q = student_t_quantile((T::one() + level) * T::lit(0.5), T::from_usize_lossy(n - 1))?;
    Ok(ConfidenceInterval {
        mean: m,
        half_width: q * sd / T::from_usize_lossy(n).sqrt(),
    })
}

/// `acc[1] - acc[0]`.
pub fn layer_jump<T: Scalar>(acc_per_layer: &[T]) -> Result<T> {
    match acc_per_layer {
        [a0, a1, ..] => Ok(*a1 - *a0),
        _ => Err(Error::TooFewValues {
            required: 2,
            actual: acc_per_layer.len(),
        }),
    }
}

/// `*` p<0.05, `**` p<0.01, `***` p<0.001.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Validation accuracy of one trained probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: String,
    /// `None` for the all-language probe; `Some` for a per-language recall.
    pub language: Option<String>,
    pub layer: usize,
    pub seed: u64,
    pub kind: ProbeKind,
    /// Fraction in `[0, 1]`.
    pub val_accuracy: f64,
}

impl CellResult {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.val_accuracy) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "accuracy {} outside [0, 1]",
                self.val_accuracy
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0f64), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(5.0f64), 24.0f64.ln(), epsilon = 1e-13);
        assert_relative_eq!(
            ln_gamma(0.5f64),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-14
        );
        assert_relative_eq!(ln_gamma(0.1f64), 2.252_712_651_734_206, epsilon = 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1-x)^b
        for &x in &[0.0f64, 0.1, 0.37, 0.5, 0.9, 1.0] {
            assert_relative_eq!(reg_inc_beta(x, 1.0, 1.0), x, epsilon = 1e-14);
            assert_relative_eq!(reg_inc_beta(x, 3.0, 1.0), x.powi(3), epsilon = 1e-13);
            assert_relative_eq!(
                reg_inc_beta(x, 1.0, 4.0),
                1.0 - (1.0 - x).powi(4),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn cauchy_cdf_at_one_degree_of_freedom() {
        for &t in &[-5.0f64, -1.0, -0.2, 0.0, 0.3, 2.0, 40.0] {
            let want = 0.5 + t.atan() / std::f64::consts::PI;
            assert_relative_eq!(student_t_cdf(t, 1.0), want, epsilon = 1e-13);
        }
    }

    #[test]
    fn textbook_paired_example() {
        let r = paired_t_test(&[2.1f64, 2.5, 2.3, 2.7], &[2.0, 2.4, 2.1, 2.5]).unwrap();
        // d = [.1,.1,.2,.2]: mean .15, sd sqrt(1/300), t = .15 / (sd/2) = 3*sqrt(3)
        assert_relative_eq!(r.t, 3.0 * 3.0f64.sqrt(), epsilon = 1e-6);
        assert_eq!(r.df, 3);
    }

    #[test]
    fn degenerate_differences() {
        let r = paired_t_test(&[1.0f64, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p, r.df), (0.0, 1.0, 2));
        let r = paired_t_test(&[2.0f64, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((r.t, r.p), (f64::INFINITY, 0.0));
        let r = paired_t_test(&[0.0f32, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!((r.t, r.p), (f32::NEG_INFINITY, 0.0));
    }

    #[test]
    fn t_test_errors() {
        assert!(matches!(
            paired_t_test(&[1.0f64], &[2.0]),
            Err(Error::TooFewValues {
                required: 2,
                actual: 1
            })
        ));
        assert!(matches!(
            paired_t_test(&[1.0f64, 2.0], &[2.0]),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
    }

    #[test]
    fn two_point_interval() {
        // t_{0.975, 1} = tan(0.475 π) = 12.7062...
        let ci = mean_ci(&[0.0f64, 1.0], 0.95).unwrap();
        let q = (0.475 * std::f64::consts::PI).tan();
        assert_relative_eq!(ci.mean, 0.5);
        assert_relative_eq!(
            ci.half_width,
            q * 0.5f64.sqrt() / 2.0f64.sqrt(),
            epsilon = 1e-9
        );
        assert!((ci.half_width - 6.353).abs() < 1e-3);
        assert_eq!(mean_ci(&[3.0f64; 5], 0.95).unwrap().half_width, 0.0);
        assert!(mean_ci(&[1.0f64], 0.95).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &df in &[1.0f64, 2.5, 4.0, 30.0, 400.0] {
            for &p in &[0.001f64, 0.025, 0.3, 0.5, 0.8, 0.975, 0.9995] {
                let q = student_t_quantile(p, df).unwrap();
                assert_relative_eq!(student_t_cdf(q, df), p, epsilon = 1e-12);
            }
        }
        assert!(student_t_quantile(1.0f64, 3.0).is_err());
    }

    #[test]
    fn jumps() {
        assert_relative_eq!(
            layer_jump(&[20.0f64, 99.8, 99.9]).unwrap(),
            79.8,
            epsilon = 1e-9
        );
        assert_relative_eq!(layer_jump(&[0.0f64, 99.7]).unwrap(), 99.7);
        assert_eq!(layer_jump(&[0.4f64; 6]).unwrap(), 0.0);
        assert!(layer_jump(&[1.0f64]).is_err());
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.2), "");
        assert_eq!(significance_stars(0.049), "*");
        assert_eq!(significance_stars(0.0099), "**");
        assert_eq!(significance_stars(0.0009), "***");
        assert_eq!(significance_stars(0.05), "");
    }
}

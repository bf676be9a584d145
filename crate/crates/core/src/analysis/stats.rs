//! Run comparison by Welch's unequal-variance t-test.
//!
//! Accuracies from different model variants have no reason to share a
//! variance, so the pooled-variance Student test is off the table; Welch's
//! form with the Welch–Satterthwaite degrees of freedom is the standard
//! replacement. The two-sided p-value comes from the Student-t CDF, which
//! reduces to a regularized incomplete beta function — evaluated here with
//! the classic Lentz continued fraction plus a Lanczos log-gamma, accurate
//! to well past the six significant digits the reports need.

use crate::error::{Error, Result};

/// Compare two sets of per-run accuracies (or any paired score lists).
///
/// Returns `(t, p)`: Welch's t-statistic (positive when `a`'s mean is
/// larger) and the two-sided p-value. Each sample needs at least two
/// entries for a variance to exist. Two degenerate samples with zero
/// variance compare as certainty: equal means give `(0, 1)`, different
/// means `(±inf, 0)`.
pub fn compare_runs(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    for (name, s) in [("first", a), ("second", b)] {
        if s.len() < 2 {
            return Err(Error::invalid(format!(
                "{name} sample has {} values; a variance needs at least 2",
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{name} sample contains a non-finite value")));
        }
    }
    let (ma, va, na) = mean_var(a);
    let (mb, vb, nb) = mean_var(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        // no spread at all: the samples are two constants
        return Ok(if ma == mb {
            (0.0, 1.0)
        } else if ma > mb {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        });
    }
    let t = (ma - mb) / se2.sqrt();
    // Welch–Satterthwaite effective degrees of freedom
    let nu = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    // two-sided tail of the t-distribution: P(|T| ≥ |t|) = I_{ν/(ν+t²)}(ν/2, 1/2)
    let x = nu / (nu + t * t);
    let p = reg_inc_beta(0.5 * nu, 0.5, x)?;
    Ok((t, p))
}

/// Sample mean and unbiased (n−1) variance, with n as f64 for the algebra.
fn mean_var(s: &[f64]) -> (f64, f64, f64) {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var, n)
}

/// ln Γ(x) for x > 0, Lanczos approximation (g = 7, 9 terms).
///
/// The coefficients are the standard Godfrey set; relative error is below
/// 1e-13 over the positive axis, far tighter than the p-values require.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // reflection keeps the series in its accurate half-plane
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = 0.999_999_999_999_809_93;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (z + (i + 1) as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x ∈ [0, 1].
///
/// Uses the continued fraction directly when x is below the split point
/// (a+1)/(a+b+2) where it converges fastest, and the symmetry
/// I_x(a, b) = 1 − I_{1−x}(b, a) otherwise.
fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("incomplete beta argument {x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x)? / b)
    }
}

/// Continued fraction for the incomplete beta, evaluated by the modified
/// Lentz method. Converges in a few dozen iterations for any (a, b) the
/// t-distribution produces.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        // even recurrence step
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd recurrence step
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::invalid(format!(
        "incomplete beta continued fraction failed to converge (a={a}, b={b}, x={x})"
    )))
}

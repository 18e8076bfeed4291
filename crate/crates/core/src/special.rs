//! Gamma-family special functions in the parameter ranges the sensing
//! analysis needs. Shape parameters grow like `Z^2 / (2 sigma^2)`, which is
//! 1e4..1e8 at moderate SNR, so everything is evaluated in the log domain.

use crate::error::{invalid, IsacError, Result};

/// Bernoulli-number coefficients `B_2k / (2k (2k - 1))` of the Stirling series.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
];

/// Below this argument the Stirling tail is not used directly.
const ASYMPTOTIC_FROM: f64 = 20.0;

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return invalid(format!("ln_gamma needs a finite positive argument, got {x}"));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

fn stirling_tail(x: f64) -> f64 {
    let inv2 = 1.0 / (x * x);
    let mut pow = 1.0 / x;
    let mut acc = 0.0;
    for c in STIRLING {
        acc += c * pow;
        pow *= inv2;
    }
    acc
}

/// `ln Gamma(x + a) - ln Gamma(x)` without cancellation for large `x`.
pub fn ln_gamma_ratio(x: f64, a: f64) -> Result<f64> {
    if !(x > 0.0 && x + a > 0.0) {
        return invalid(format!("ln_gamma_ratio needs x > 0 and x + a > 0, got x={x}, a={a}"));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    if x.min(x + a) < ASYMPTOTIC_FROM {
        return Ok(ln_gamma(x + a)? - ln_gamma(x)?);
    }
    // (x+a-1/2) ln(x+a) - (x-1/2) ln x - a, rewritten around ln x
    let l = (a / x).ln_1p();
    let main = a * x.ln() + (x + a - 0.5) * l - a;
    Ok(main + stirling_tail(x + a) - stirling_tail(x))
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return invalid(format!("ln_beta needs positive arguments, got a={a}, b={b}"));
    }
    // ln B = ln G(a) - ln G(a+b) + ln G(b); pair the large terms
    let (small, large) = if a <= b { (a, b) } else { (b, a) };
    Ok(ln_gamma(small)? - ln_gamma_ratio(large, small)?)
}

/// Continued fraction of the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let max_iter = 1000 + (20.0 * (a + b).sqrt()) as usize;
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
    for m in 1..=max_iter {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
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
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
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
    Err(IsacError::Unsupported(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return invalid(format!("incomplete beta needs a, b > 0, got a={a}, b={b}"));
    }
    if !(0.0..=1.0).contains(&x) {
        return invalid(format!("incomplete beta argument {x} outside [0, 1]"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let swap = x > (a + 1.0) / (a + b + 2.0);
    let (p, q, y) = if swap { (b, a, 1.0 - x) } else { (a, b, x) };
    let ln_front = p * y.ln() + q * (-y).ln_1p() - ln_beta(p, q)? - p.ln();
    let tail = if ln_front < -745.0 {
        0.0
    } else {
        ln_front.exp() * beta_cf(p, q, y)?
    };
    Ok(if swap { 1.0 - tail } else { tail }.clamp(0.0, 1.0))
}

/// Plain Gauss series of `2F1(a, b; c; z)` for `0 <= z < 1`.
fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    const MAX_TERMS: usize = 100_000;
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..MAX_TERMS {
        let n = n as f64;
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return Ok(sum);
        }
        if !sum.is_finite() {
            break;
        }
    }
    Err(IsacError::Unsupported(format!(
        "2F1({a}, {b}; {c}; {z}) series did not converge"
    )))
}

/// `2F1(a, b; c; -x)` for `x >= 0`.
///
/// `c = b` and `c = a` reduce to `(1 + x)^-a` / `(1 + x)^-b`. The
/// `c = b + 1` pattern with `a > b` uses
/// `b x^-b B_{x/(1+x)}(b, a - b)` in the log domain. Other parameters go
/// through the Pfaff transform to argument `x / (1 + x)` and the series.
pub fn gauss_2f1_neg(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    if !(c > 0.0) {
        return invalid(format!("2F1 needs c > 0, got {c}"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return invalid(format!("2F1 argument must be -x with finite x >= 0, got x={x}"));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let same = |u: f64, v: f64| (u - v).abs() <= 1e-15 * u.abs().max(1.0);
    if same(c, b) {
        return Ok((-a * x.ln_1p()).exp());
    }
    if same(c, a) {
        return Ok((-b * x.ln_1p()).exp());
    }
    let t = x / (1.0 + x);
    if same(c, b + 1.0) && b > 0.0 && a > b {
        let ln_b = ln_beta(b, a - b)?;
        let i = beta_inc_reg(b, a - b, t)?;
        if i == 0.0 {
            return Ok(0.0);
        }
        return Ok((b.ln() - b * x.ln() + ln_b + i.ln()).exp());
    }
    // Pfaff: 2F1(a,b;c;-x) = (1+x)^-a 2F1(a, c-b; c; x/(1+x))
    let s = hyp2f1_series(a, c - b, c, t)?;
    Ok((-a * x.ln_1p()).exp() * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Stirling series with argument shifted above 30 by the recurrence.
    fn stirling_oracle(x: f64) -> f64 {
        let mut shift = 0.0;
        let mut y = x;
        while y < 30.0 {
            shift += y.ln();
            y += 1.0;
        }
        (y - 0.5) * y.ln() - y + 0.5 * (2.0 * std::f64::consts::PI).ln() + stirling_tail(y) - shift
    }

    #[test]
    fn ln_gamma_examples() {
        assert!(ln_gamma(1.0).unwrap().abs() < 1e-15);
        assert!((ln_gamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-14);
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.0).is_err());
    }

    #[test]
    fn ln_gamma_matches_stirling_oracle() {
        let mut x: f64 = 0.5;
        while x <= 1e6 {
            let got = ln_gamma(x).unwrap();
            let want = stirling_oracle(x);
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "x={x}: {got} vs {want}"
            );
            x *= 1.37;
        }
        let want = stirling_oracle(1e4);
        assert!((ln_gamma(1e4).unwrap() - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn ln_gamma_ratio_agrees_with_difference() {
        for &x in &[0.7, 3.0, 19.0, 25.0, 300.0] {
            for &a in &[0.5, -0.5, 2.0] {
                let want = ln_gamma(x + a).unwrap() - ln_gamma(x).unwrap();
                let got = ln_gamma_ratio(x, a).unwrap();
                assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{x} {a}");
            }
        }
        // half-step ratio ~ a ln x for huge x
        let x = 1e8;
        let r = ln_gamma_ratio(x, 0.5).unwrap();
        assert!((r - 0.5 * x.ln() + 1.0 / (8.0 * x)).abs() < 1e-15);
    }

    #[test]
    fn incomplete_beta_reference_values() {
        // I_x(1, 1) = x, I_x(a, 1) = x^a, I_{1/2}(a, a) = 1/2
        assert!((beta_inc_reg(1.0, 1.0, 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!((beta_inc_reg(2.5, 1.0, 0.4).unwrap() - 0.4f64.powf(2.5)).abs() < 1e-14);
        for &a in &[0.7, 5.0, 1e3, 1e6] {
            assert!((beta_inc_reg(a, a, 0.5).unwrap() - 0.5).abs() < 1e-9, "a={a}");
        }
        // I_x(2, 3) = 6x^2 - 8x^3 + 3x^4 at x = 0.2
        let x: f64 = 0.2;
        let want = 6.0 * x.powi(2) - 8.0 * x.powi(3) + 3.0 * x.powi(4);
        assert!((beta_inc_reg(2.0, 3.0, x).unwrap() - want).abs() < 1e-14);
        assert!(beta_inc_reg(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn gauss_2f1_examples() {
        assert!((gauss_2f1_neg(2.0, 3.0, 3.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(gauss_2f1_neg(1.3, 2.0, 4.0, 0.0).unwrap(), 1.0);
        // 2F1(3, 1; 2; -1) = 3/8, cross-checked with a 200-term Pfaff series
        let got = gauss_2f1_neg(3.0, 1.0, 2.0, 1.0).unwrap();
        let mut term = 1.0;
        let mut series = 1.0;
        for n in 0..200 {
            let n = n as f64;
            term *= (3.0 + n) * (1.0 + n) / ((2.0 + n) * (n + 1.0)) * 0.5;
            series += term;
        }
        series /= 8.0;
        assert!((got - 0.375).abs() < 1e-12);
        assert!((got - series).abs() < 1e-10);
        assert!(gauss_2f1_neg(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn beta_route_matches_series_at_small_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let b = rng.random_range(0.5..6.0);
            let a = b + rng.random_range(0.2..6.0);
            let x = rng.random_range(0.01..5.0);
            let fast = gauss_2f1_neg(a, b, b + 1.0, x).unwrap();
            let t = x / (1.0 + x);
            let slow = (-a * x.ln_1p()).exp() * hyp2f1_series(a, 1.0, b + 1.0, t).unwrap();
            assert!((fast - slow).abs() <= 1e-8 * slow.abs(), "{a} {b} {x}: {fast} {slow}");
        }
    }

    #[test]
    fn binomial_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let a = rng.random_range(0.1..50.0);
            let b = rng.random_range(0.1..50.0);
            let x = rng.random_range(0.0..10.0);
            let got = gauss_2f1_neg(a, b, b, x).unwrap();
            let want = (1.0 + x).powf(-a);
            assert!((got - want).abs() <= 1e-10 * want, "{a} {b} {x}");
        }
    }
}

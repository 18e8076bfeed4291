//! Closed-form predictions for the ratio Doppler estimator.
//!
//! Each received pilot amplitude `Z_k` is modelled as Nakagami with moments
//! matched to the Rician truth. Ratios of two such amplitudes have a
//! closed-form density, which yields the effective sensing probability and
//! the MSE approximation / upper bound below.

use std::f64::consts::PI;

use log::debug;

use crate::channel::dirichlet;
use crate::error::{invalid, IsacError, Result};
use crate::frame::OtfsGrid;
use crate::special::{beta_inc_reg, ln_beta, ln_gamma_ratio};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NakagamiParams {
    /// Shape.
    pub varpi: f64,
    /// Spread `E[Z^2]`.
    pub omega: f64,
    /// Rate `varpi / omega`.
    pub vartheta: f64,
    /// `varpi - 1`, kept separately since it cancels badly at high SNR.
    pub varpi_minus_one: f64,
}

/// Moment-matched Nakagami parameters of `|Z' + n|`, `n ~ CN(0, sigma2)`.
pub fn nakagami_params(z_prime: f64, sigma2: f64) -> Result<NakagamiParams> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return invalid(format!("Nakagami fit needs sigma2 > 0, got {sigma2}"));
    }
    if !(z_prime >= 0.0) || !z_prime.is_finite() {
        return invalid(format!("amplitude must be finite and >= 0, got {z_prime}"));
    }
    let z2 = z_prime * z_prime;
    let omega = z2 + sigma2;
    let var = 2.0 * z2 * sigma2 + sigma2 * sigma2;
    let varpi = omega * omega / var;
    Ok(NakagamiParams {
        varpi,
        omega,
        vartheta: varpi / omega,
        varpi_minus_one: z2 * z2 / var,
    })
}

/// Probability that the amplitude with the larger noiseless value (`z2_prime`
/// vs `z3_prime`) stays larger after noise. Evaluates the closed form as the
/// regularized incomplete beta `I_{t}(varpi_3, varpi_2)`,
/// `t = vartheta_3 / (vartheta_2 + vartheta_3)` (mirrored for the other side).
pub fn p_eff_closed(z2_prime: f64, z3_prime: f64, sigma2: f64) -> Result<f64> {
    if !(z2_prime >= 0.0 && z3_prime >= 0.0) {
        return invalid("side-peak amplitudes must be >= 0");
    }
    if z2_prime == 0.0 && z3_prime == 0.0 {
        return Err(IsacError::Degenerate(
            "both side-peak amplitudes are zero".into(),
        ));
    }
    if z2_prime == z3_prime {
        return Ok(0.5);
    }
    if sigma2 == 0.0 {
        return Ok(1.0);
    }
    let (hi, lo) = if z2_prime > z3_prime {
        (z2_prime, z3_prime)
    } else {
        (z3_prime, z2_prime)
    };
    let h = nakagami_params(hi, sigma2)?;
    let l = nakagami_params(lo, sigma2)?;
    ratio_tail(&h, &l)
}

/// `Pr[Z_a > Z_b]` for independent Nakagami amplitudes.
pub fn ratio_tail(a: &NakagamiParams, b: &NakagamiParams) -> Result<f64> {
    let t = b.vartheta / (a.vartheta + b.vartheta);
    let p = beta_inc_reg(b.varpi, a.varpi, t)?;
    if !(0.0..=1.0).contains(&p) {
        debug!("clamping tail probability {p}");
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Density of `R = Z_1 / Z_2` at `r > 0`.
pub fn ratio_density(r: f64, n1: &NakagamiParams, n2: &NakagamiParams) -> Result<f64> {
    if !(r > 0.0) {
        return Ok(0.0);
    }
    let (w1, w2, t1, t2) = (n1.varpi, n2.varpi, n1.vartheta, n2.vartheta);
    let ln = 2f64.ln() + w2 * t2.ln() + w1 * t1.ln() - ln_beta(w1, w2)?
        + (2.0 * w1 - 1.0) * r.ln()
        - (w1 + w2) * (t1 * r * r + t2).ln();
    Ok(ln.exp())
}

/// `ln[Gamma(varpi_2 - 1/2) Gamma(varpi_1 + 1/2) / (Gamma(varpi_2) Gamma(varpi_1))]`.
fn ln_gamma_factor(w1: f64, w2: f64) -> Result<f64> {
    if !(w2 > 0.5) {
        return invalid(format!("ratio mean needs varpi_2 > 1/2, got {w2}"));
    }
    Ok(ln_gamma_ratio(w1, 0.5)? + ln_gamma_ratio(w2, -0.5)?)
}

/// `E[Z_1 / Z_2]`.
pub fn ratio_mean(n1: &NakagamiParams, n2: &NakagamiParams) -> Result<f64> {
    Ok((ln_gamma_factor(n1.varpi, n2.varpi)? + 0.5 * (n2.vartheta / n1.vartheta).ln()).exp())
}

/// `E[Z_1^2 / Z_2^2]`; finite only for `varpi_2 > 1`.
pub fn ratio_second_moment(n1: &NakagamiParams, n2: &NakagamiParams) -> Result<f64> {
    if !(n2.varpi_minus_one > 0.0) {
        return invalid(format!(
            "second ratio moment needs varpi_2 > 1, got {}",
            n2.varpi
        ));
    }
    Ok(n1.varpi / n2.varpi_minus_one * n2.vartheta / n1.vartheta)
}

/// Noiseless Dirichlet amplitudes at the peak and both neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelAmps {
    /// Peak Doppler index.
    pub k1: usize,
    /// `|a_{k1}|`.
    pub a_k1: f64,
    /// `|a_{k1+1}|`.
    pub a_k2: f64,
    /// `|a_{k1-1}|`.
    pub a_k3: f64,
    /// Noiseless ratio angle; positive when the right neighbour is larger.
    pub psi_prime: f64,
}

impl KernelAmps {
    /// True when the right neighbour (`k1 + 1`) carries the side peak.
    pub fn right_side(&self) -> bool {
        self.a_k2 >= self.a_k3
    }

    /// Larger of the two side amplitudes.
    pub fn a_side(&self) -> f64 {
        self.a_k2.max(self.a_k3)
    }

    /// `(Z'_1, Z'_2)` for cascaded LoS gain magnitude `h_abs`.
    pub fn z_primes(&self, h_abs: f64) -> (f64, f64) {
        (h_abs * self.a_k1, h_abs * self.a_side())
    }
}

/// Ratio angle for peak `z1` and side amplitude `z_side`.
pub fn ratio_angle(z1: f64, z_side: f64, n: usize) -> f64 {
    let s = (PI / n as f64).sin_cos();
    (s.0 * z_side).atan2(z1 + z_side * s.1)
}

/// Pilot amplitudes `|a_k| = x_p |D(nu N T_s + k_p - k)|` around the peak.
pub fn kernel_amps(nu_true: f64, grid: &OtfsGrid, x_p: f64) -> KernelAmps {
    let n = grid.n();
    let shift = nu_true * grid.t_f();
    // Dirichlet nulls come out as ~1e-17 from sin(pi k); snap them to zero
    let amp = |k: usize| {
        let v = dirichlet(shift + grid.k_p() as f64 - k as f64, n).norm();
        if v < 1e-12 {
            0.0
        } else {
            x_p * v
        }
    };
    let all: Vec<f64> = (0..n).map(amp).collect();
    let mut k1 = 0;
    for (k, &a) in all.iter().enumerate() {
        if a > all[k1] {
            k1 = k;
        }
    }
    let a_k2 = all[(k1 + 1) % n];
    let a_k3 = all[(k1 + n - 1) % n];
    let a_k1 = all[k1];
    let psi = if a_k2 >= a_k3 {
        ratio_angle(a_k1, a_k2, n)
    } else {
        -ratio_angle(a_k1, a_k3, n)
    };
    KernelAmps {
        k1,
        a_k1,
        a_k2,
        a_k3,
        psi_prime: psi,
    }
}

/// `sin^4 psi' / (sin^2(pi/N) pi^2 T_s^2)`, the common MSE prefactor.
fn mse_scale(amps: &KernelAmps, grid: &OtfsGrid) -> f64 {
    let s = amps.psi_prime.sin();
    let d = (PI / grid.n() as f64).sin() * PI * grid.t_s();
    s.powi(4) / (d * d)
}

struct MseTerms {
    scale: f64,
    ratio: f64,
    n1: NakagamiParams,
    n2: NakagamiParams,
}

fn mse_terms(
    amps: &KernelAmps,
    z1_prime: f64,
    z2_prime: f64,
    sigma2: f64,
    grid: &OtfsGrid,
) -> Result<MseTerms> {
    if !(z2_prime > 0.0 && z1_prime >= z2_prime) {
        return invalid(format!(
            "MSE formulas need Z'_1 >= Z'_2 > 0, got {z1_prime}, {z2_prime}"
        ));
    }
    Ok(MseTerms {
        scale: mse_scale(amps, grid),
        ratio: z1_prime / z2_prime,
        n1: nakagami_params(z1_prime, sigma2)?,
        n2: nakagami_params(z2_prime, sigma2)?,
    })
}

fn clamp_nonneg(v: f64, what: &str) -> f64 {
    if v < 0.0 {
        debug!("clamping negative {what} {v:e} to 0");
        0.0
    } else {
        v
    }
}

/// MSE approximation (Hz^2) of the ratio estimator given correct PP/SPP selection.
pub fn mse_approx(
    amps: &KernelAmps,
    z1_prime: f64,
    z2_prime: f64,
    sigma2: f64,
    grid: &OtfsGrid,
) -> Result<f64> {
    if sigma2 == 0.0 {
        return Ok(0.0);
    }
    let t = mse_terms(amps, z1_prime, z2_prime, sigma2, grid)?;
    let e1 = ratio_mean(&t.n1, &t.n2)?;
    let e2 = ratio_second_moment(&t.n1, &t.n2)?;
    let v = t.scale * (t.ratio * t.ratio - 2.0 * t.ratio * e1 + e2);
    Ok(clamp_nonneg(v, "MSE approximation"))
}

/// Upper bound (Hz^2) on the ratio-estimator MSE.
pub fn mse_upper(
    amps: &KernelAmps,
    z1_prime: f64,
    z2_prime: f64,
    sigma2: f64,
    grid: &OtfsGrid,
) -> Result<f64> {
    if sigma2 == 0.0 {
        return Ok(0.0);
    }
    let t = mse_terms(amps, z1_prime, z2_prime, sigma2, grid)?;
    if !(t.n2.varpi_minus_one > 0.0) {
        return invalid("MSE upper bound needs varpi_2 > 1");
    }
    let r = t.ratio;
    // sqrt(varpi_1 vartheta_2 / (varpi_2 vartheta_1)) = sqrt(Omega_1 / Omega_2)
    let root = (t.n1.omega / t.n2.omega).sqrt();
    let e2 = ratio_second_moment(&t.n1, &t.n2)?;
    Ok(clamp_nonneg(
        t.scale * (r * r - 2.0 * r * root + e2),
        "MSE upper bound",
    ))
}

/// The upper bound as a function of the cascaded LoS gain `|h|`.
pub fn mse_upper_gain(amps: &KernelAmps, h_abs: f64, sigma2: f64, grid: &OtfsGrid) -> Result<f64> {
    if !(h_abs > 0.0) {
        return Ok(f64::INFINITY);
    }
    let (z1, z2) = amps.z_primes(h_abs);
    if z2 == 0.0 {
        return Err(IsacError::Degenerate(
            "on-grid Doppler: side-peak amplitude is zero".into(),
        ));
    }
    mse_upper(amps, z1, z2, sigma2, grid)
}

/// Bounds on `mse_upper - mse_approx`, and the gap itself computed without
/// cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseSandwich {
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub gap: f64,
}

/// `ln` of the Stirling-bracket factors around
/// `Gamma(varpi_2 - 1/2) Gamma(varpi_1 + 1/2) / (Gamma(varpi_2) Gamma(varpi_1) sqrt(varpi_1/varpi_2))`.
pub fn alpha_bounds(w1: f64, w2: f64) -> (f64, f64) {
    let corr = |x: f64| (1.0 / (12.0 * x) + 1.0 / (288.0 * x)).ln_1p();
    let core = w1 * (0.5 / w1).ln_1p() + (w2 - 1.0) * (-0.5 / w2).ln_1p();
    let lower = core - corr(w1) - corr(w2);
    let upper = core + corr(w1 + 0.5) + corr(w2 - 0.5);
    (lower, upper)
}

/// Error bounds between the MSE upper bound and the approximation:
/// `delta = K sqrt(vartheta_2/vartheta_1) (alpha - 1)` with
/// `K = 2 C (Z'_1/Z'_2) sqrt(varpi_1/varpi_2)`.
pub fn mse_error_sandwich(
    amps: &KernelAmps,
    z1_prime: f64,
    z2_prime: f64,
    sigma2: f64,
    grid: &OtfsGrid,
) -> Result<MseSandwich> {
    let t = mse_terms(amps, z1_prime, z2_prime, sigma2, grid)?;
    let (w1, w2) = (t.n1.varpi, t.n2.varpi);
    if !(w1 > 1.0 && t.n2.varpi_minus_one > 0.0) {
        return invalid("error sandwich needs varpi_1, varpi_2 > 1");
    }
    let base = 2.0 * t.scale * t.ratio * (w1 / w2).sqrt() * (t.n2.vartheta / t.n1.vartheta).sqrt();
    let (ln_lo, ln_hi) = alpha_bounds(w1, w2);
    let ln_ratio = ln_gamma_factor(w1, w2)? - 0.5 * (w1 / w2).ln();
    Ok(MseSandwich {
        delta_lower: base * ln_lo.exp_m1(),
        delta_upper: base * ln_hi.exp_m1(),
        gap: base * ln_ratio.exp_m1(),
    })
}

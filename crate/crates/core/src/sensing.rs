//! Doppler estimation from the received pilot row at the LoS delay bin.

use std::f64::consts::PI;

use crate::analysis::{ratio_angle, KernelAmps};
use crate::channel::dirichlet;
use crate::error::{invalid, IsacError, Result};
use crate::frame::{DdFrame, OtfsGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `Z[k1 + 1] >= Z[k1 - 1]`.
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseReport {
    pub z: Vec<f64>,
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub side: Side,
    pub psi_hat: f64,
    /// Estimated Doppler in Hz, wrapped to `[-1/(2 T_s), 1/(2 T_s))`.
    pub nu_hat: f64,
    pub m: i64,
}

impl SenseReport {
    /// Fractional part of the estimate in Doppler bins, `nu_hat N T_s - (k1 - k_p)`
    /// modulo the wrap.
    pub fn fractional_bins(&self, grid: &OtfsGrid) -> f64 {
        self.psi_hat * grid.n() as f64 / PI
    }

    /// True when the peak index and side agree with the noiseless kernel.
    pub fn selection_matches(&self, amps: &KernelAmps) -> bool {
        self.k1 == amps.k1 && (self.side == Side::Right) == amps.right_side()
    }
}

/// `|Y[k, l_los]|` over all Doppler bins.
pub fn extract_los_bin(y: &DdFrame, grid: &OtfsGrid, l_los: usize) -> Result<Vec<f64>> {
    if !y.matches(grid) {
        return Err(IsacError::DimensionMismatch {
            what: "received frame cells",
            expected: grid.cells(),
            actual: y.n() * y.m(),
        });
    }
    if l_los >= grid.m() {
        return Err(IsacError::OutOfRange(format!(
            "LoS delay bin {l_los} >= M = {}",
            grid.m()
        )));
    }
    Ok((0..grid.n()).map(|k| y.get(k, l_los).norm()).collect())
}

/// Smallest delay bin in the pilot echo window whose peak magnitude exceeds
/// `6 sigma`. Heuristic helper for callers without the LoS delay.
pub fn detect_los_bin(y: &DdFrame, grid: &OtfsGrid, sigma2: f64) -> Option<usize> {
    let floor = 6.0 * sigma2.max(0.0).sqrt();
    let window = grid.l_p()..=(grid.l_p() + grid.l_max()).min(grid.m() - 1);
    window.into_iter().find(|&l| {
        (0..grid.n())
            .map(|k| y.get(k, l).norm())
            .fold(0.0, f64::max)
            > floor.max(1e-300)
    })
}

fn check_amplitudes(z: &[f64], grid: &OtfsGrid) -> Result<usize> {
    let n = grid.n();
    if z.len() != n {
        return Err(IsacError::DimensionMismatch {
            what: "amplitude vector",
            expected: n,
            actual: z.len(),
        });
    }
    if n < 3 {
        return invalid(format!("ratio estimator needs N >= 3, got {n}"));
    }
    if z.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return invalid("amplitudes must be finite and nonnegative");
    }
    let mut k1 = 0;
    for (k, &v) in z.iter().enumerate() {
        if v > z[k1] {
            k1 = k;
        }
    }
    if z[k1] == 0.0 {
        return Err(IsacError::Degenerate("no pilot energy".into()));
    }
    Ok(k1)
}

/// Wraps a Doppler in Hz into `[-1/(2 T_s), 1/(2 T_s))`; returns the value and
/// the integer `m` subtracted (in units of `1/T_s`).
fn wrap_principal(nu: f64, grid: &OtfsGrid) -> (f64, i64) {
    let t_s = grid.t_s();
    let m = (nu * t_s + 0.5).floor();
    (nu - m / t_s, m as i64)
}

/// Ratio-based Doppler estimate from the pilot amplitudes at the LoS bin.
pub fn ratio_estimate(z: &[f64], grid: &OtfsGrid) -> Result<SenseReport> {
    let k1 = check_amplitudes(z, grid)?;
    let n = grid.n();
    let k2 = (k1 + 1) % n;
    let k3 = (k1 + n - 1) % n;
    let (side, psi) = if z[k2] >= z[k3] {
        (Side::Right, ratio_angle(z[k1], z[k2], n))
    } else {
        (Side::Left, -ratio_angle(z[k1], z[k3], n))
    };
    let coarse = (k1 as f64 - grid.k_p() as f64) / grid.t_f();
    let (nu_hat, m) = wrap_principal(coarse + psi / (PI * grid.t_s()), grid);
    Ok(SenseReport {
        z: z.to_vec(),
        k1,
        k2,
        k3,
        side,
        psi_hat: psi,
        nu_hat,
        m,
    })
}

/// `v = nu lambda / cos(theta_u)` in m/s.
pub fn doppler_to_velocity(nu: f64, lambda: f64, theta_u: f64) -> Result<f64> {
    let c = theta_u.cos();
    if c.abs() < 1e-12 {
        return invalid("velocity is unobservable at cos(theta_u) = 0");
    }
    Ok(nu * lambda / c)
}

/// On-grid estimate `(k1 - k_p) / (N T_s)` without fractional correction.
pub fn integer_peak_estimate(z: &[f64], grid: &OtfsGrid) -> Result<f64> {
    let k1 = check_amplitudes(z, grid)?;
    let coarse = (k1 as f64 - grid.k_p() as f64) / grid.t_f();
    Ok(wrap_principal(coarse, grid).0)
}

/// Brute-force least-squares fit of the Dirichlet amplitude profile over a
/// Doppler grid `oversample` times finer than the bin spacing.
pub fn oracle_grid_estimate(z: &[f64], grid: &OtfsGrid, oversample: usize) -> Result<f64> {
    if oversample < 64 {
        return invalid(format!("oracle oversampling must be >= 64, got {oversample}"));
    }
    check_amplitudes(z, grid)?;
    let n = grid.n();
    let steps = n * oversample;
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..steps {
        let bins = i as f64 / oversample as f64 - n as f64 / 2.0;
        let mut zp = 0.0;
        let mut pp = 0.0;
        for (k, &zk) in z.iter().enumerate() {
            let p = dirichlet(bins + grid.k_p() as f64 - k as f64, n).norm();
            zp += zk * p;
            pp += p * p;
        }
        let resid = zz - zp * zp / pp;
        if resid < best.0 {
            best = (resid, bins);
        }
    }
    Ok(best.1 / grid.t_f())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, simulate_rx, PathIb, PathUi, Scenario, SPEED_OF_LIGHT};
    use crate::frame::pilot_frame;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> OtfsGrid {
        OtfsGrid::new(64, 16, 15e3, 8, 32, 8).unwrap()
    }

    fn profile(nu: f64, grid: &OtfsGrid, gain: f64) -> Vec<f64> {
        (0..grid.n())
            .map(|k| gain * dirichlet(nu * grid.t_f() + grid.k_p() as f64 - k as f64, grid.n()).norm())
            .collect()
    }

    fn los_scenario(grid: OtfsGrid, nu: f64) -> Scenario {
        Scenario {
            grid,
            ui_paths: vec![PathUi {
                h: Complex64::new(0.6, 0.8),
                l_tau: 1,
                nu,
                phi: 0.2,
                psi: 0.5,
            }],
            ib_paths: vec![PathIb {
                h: Complex64::new(1.0, 0.0),
                l_tau: 2,
                nu: 0.0,
                theta_bs: -0.3,
                phi: 1.0,
                psi: -2.0,
            }],
            n_b: 2,
            n_i1: 2,
            n_i2: 2,
            sigma2: 0.0,
            x_p: 1.0,
        }
    }

    #[test]
    fn extract_integer_doppler() {
        let g = grid();
        let s = los_scenario(g, 3.0 * g.doppler_bin_hz());
        let r = s.los_bs_steering().unscale(2f64.sqrt());
        let xi = s.los_irs_steering();
        let y = simulate_rx(&pilot_frame(&g, 1.0).unwrap(), &s, &r, &xi, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z = extract_los_bin(&y, &g, s.los_delay_bin()).unwrap();
        let h = s.los_cascaded_abs(&r, &xi);
        for (k, v) in z.iter().enumerate() {
            if k == 11 {
                assert!((v - h).abs() < 1e-9);
            } else {
                assert!(*v < 1e-9);
            }
        }
        assert!(extract_los_bin(&y, &g, 64).is_err());
        assert_eq!(detect_los_bin(&y, &g, 0.0), Some(s.los_delay_bin()));
    }

    #[test]
    fn fractional_profile_has_single_peak() {
        let g = grid();
        let z = profile(2.3 * g.doppler_bin_hz(), &g, 1.0);
        let r = ratio_estimate(&z, &g).unwrap();
        assert_eq!(r.k1, 10);
        let maxima = (0..16)
            .filter(|&k| z[k] > z[(k + 1) % 16] && z[k] > z[(k + 15) % 16])
            .count();
        assert!(maxima >= 1);
        assert!(z[r.k2] > z[(r.k1 + 2) % 16] && z[r.k3] > 0.0);
    }

    #[test]
    fn ratio_estimate_examples() {
        let g = grid();
        assert!((g.doppler_bin_hz() * 2.3 - 2156.25).abs() < 1e-9);
        let z = profile(2156.25, &g, 3.7);
        let r = ratio_estimate(&z, &g).unwrap();
        assert!(((r.nu_hat - 2156.25) / 2156.25).abs() < 1e-10);
        assert_eq!(r.side, Side::Right);
        let oracle = oracle_grid_estimate(&z, &g, 64).unwrap();
        assert!((oracle - r.nu_hat).abs() <= g.doppler_bin_hz() / 64.0);

        // on-grid: both side peaks vanish
        let z = profile(-4.0 * g.doppler_bin_hz(), &g, 1.0);
        let r = ratio_estimate(&z, &g).unwrap();
        assert!(r.psi_hat.abs() < 1e-12);
        assert!((r.nu_hat + 4.0 * g.doppler_bin_hz()).abs() < 1e-9);
        assert!((integer_peak_estimate(&z, &g).unwrap() - r.nu_hat).abs() < 1e-9);
        assert!((oracle_grid_estimate(&z, &g, 64).unwrap() - r.nu_hat).abs() < 1e-9);

        // half-bin boundary
        let nu = -0.5 * g.doppler_bin_hz();
        let r = ratio_estimate(&profile(nu, &g, 1.0), &g).unwrap();
        assert!((r.nu_hat - nu).abs() < 1e-9 * g.doppler_bin_hz());
        let frac = r.nu_hat * g.t_f() - (r.k1 as f64 - g.k_p() as f64);
        assert!(frac.abs() <= 0.5 + 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = grid();
        assert!(matches!(ratio_estimate(&[0.0; 16], &g), Err(IsacError::Degenerate(_))));
        assert!(ratio_estimate(&[1.0; 15], &g).is_err());
        let g2 = OtfsGrid::new(8, 2, 1e3, 0, 4, 1).unwrap();
        assert!(ratio_estimate(&[1.0, 0.5], &g2).is_err());
        let mut z = vec![0.1; 16];
        z[3] = -1.0;
        assert!(ratio_estimate(&z, &g).is_err());
        assert!(oracle_grid_estimate(&[1.0; 16], &g, 8).is_err());
    }

    #[test]
    fn noiseless_exactness_and_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = rng.random_range(4..40);
            let k_p = rng.random_range(0..n);
            let g = OtfsGrid::new(32, n, 15e3, k_p, 16, 4).unwrap();
            let bins = rng.random_range(-(n as f64) / 2.0 + 0.01..(n as f64) / 2.0 - 0.01);
            let nu = bins * g.doppler_bin_hz();
            let gain = rng.random_range(0.01..100.0);
            let r = ratio_estimate(&profile(nu, &g, gain), &g).unwrap();
            assert!((r.nu_hat - nu).abs() <= 1e-10 * g.doppler_bin_hz(), "n={n} bins={bins}");
            // offset from the coarse bin lies in the half-bin on the chosen side
            let off = r.fractional_bins(&g);
            match r.side {
                Side::Right => assert!((0.0..=0.5 + 1e-12).contains(&off)),
                Side::Left => assert!((-0.5 - 1e-12..0.0).contains(&off)),
            }
        }
    }

    #[test]
    fn scale_and_rotation_invariance() {
        let g = grid();
        let nu = 1.37 * g.doppler_bin_hz();
        let z = profile(nu, &g, 1.0);
        let base = ratio_estimate(&z, &g).unwrap().nu_hat;
        let scaled: Vec<f64> = z.iter().map(|v| v * 42.0).collect();
        assert!((ratio_estimate(&scaled, &g).unwrap().nu_hat - base).abs() < 1e-9);
        let span = g.n() as f64 * g.doppler_bin_hz();
        for d in 0..16 {
            let mut rot = z.clone();
            rot.rotate_right(d);
            let est = ratio_estimate(&rot, &g).unwrap().nu_hat;
            let mut want = base + d as f64 * g.doppler_bin_hz();
            if want >= span / 2.0 {
                want -= span;
            }
            assert!((est - want).abs() < 1e-8, "d={d}: {est} vs {want}");
        }
    }

    #[test]
    fn velocity_examples() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        assert_eq!(doppler_to_velocity(0.0, lambda, 0.3).unwrap(), 0.0);
        let v = doppler_to_velocity(3111.0, lambda, 0.0).unwrap();
        assert!((v - 33.3).abs() < 0.1 && (v * 3.6 - 120.0).abs() < 0.5);
        let w = doppler_to_velocity(3111.0, lambda, PI).unwrap();
        assert!((w + v).abs() < 1e-9);
        assert!(doppler_to_velocity(1.0, lambda, PI / 2.0).is_err());
    }

    #[test]
    fn integer_estimator_error_floor() {
        let g = grid();
        let nu = 2.5 * g.doppler_bin_hz();
        let est = integer_peak_estimate(&profile(nu, &g, 1.0), &g).unwrap();
        assert!(((est - nu).abs() - 0.5 * g.doppler_bin_hz()).abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut acc = 0.0;
        let trials = 4000;
        for _ in 0..trials {
            let nu = rng.random_range(-3.0..3.0) * g.doppler_bin_hz();
            let e = integer_peak_estimate(&profile(nu, &g, 1.0), &g).unwrap() - nu;
            acc += e * e;
        }
        let mse = acc / trials as f64;
        let floor = g.doppler_bin_hz().powi(2) / 12.0;
        assert!((mse / floor - 1.0).abs() < 0.1, "{mse} vs {floor}");
    }

    #[test]
    fn oracle_agrees_at_high_snr() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let steps = g.doppler_bin_hz() / 64.0;
        let sigma2 = 1e-3;
        let trials = 200;
        let mut close = 0;
        for _ in 0..trials {
            let nu = rng.random_range(-5.0..5.0) * g.doppler_bin_hz();
            let shift = nu * g.t_f() + g.k_p() as f64;
            let z: Vec<f64> = (0..g.n())
                .map(|k| (dirichlet(shift - k as f64, g.n()) + complex_gaussian(&mut rng, sigma2)).norm())
                .collect();
            let a = ratio_estimate(&z, &g).unwrap().nu_hat;
            let b = oracle_grid_estimate(&z, &g, 64).unwrap();
            if (a - b).abs() <= 3.0 * steps {
                close += 1;
            }
        }
        assert!(close as f64 >= 0.99 * trials as f64, "{close}/{trials}");
    }
}

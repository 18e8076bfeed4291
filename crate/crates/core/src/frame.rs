//! OTFS frame geometry and delay-Doppler symbol placement.
//!
//! A frame is an `N x M` grid indexed `[k, l]` with `k` the Doppler bin
//! (time slot) and `l` the delay bin (subcarrier). A single pilot sits at
//! `(k_p, l_p)`; the guard region spans every Doppler bin for delays within
//! `l_max` of the pilot, and data fills the remaining cells.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IsacError, Result};

/// Frame geometry: grid size, numerology and pilot/guard layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtfsGrid {
    m: usize,
    n: usize,
    delta_f: f64,
    k_p: usize,
    l_p: usize,
    l_max: usize,
}

impl OtfsGrid {
    /// Builds a grid and checks that the pilot and guard band fit.
    pub fn new(
        m: usize,
        n: usize,
        delta_f: f64,
        k_p: usize,
        l_p: usize,
        l_max: usize,
    ) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid(format!("grid must be non-empty (M={m}, N={n})"));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return invalid(format!("subcarrier spacing must be positive, got {delta_f}"));
        }
        if k_p >= n || l_p >= m {
            return Err(IsacError::OutOfRange(format!(
                "pilot ({k_p}, {l_p}) outside {n}x{m} grid"
            )));
        }
        if l_p < l_max || l_p + l_max >= m {
            return invalid(format!(
                "guard band l_p +/- l_max = {l_p} +/- {l_max} does not fit in M={m}"
            ));
        }
        Ok(Self {
            m,
            n,
            delta_f,
            k_p,
            l_p,
            l_max,
        })
    }

    /// Grid with the pilot at the centre cell `(N/2, M/2)`.
    pub fn centered(m: usize, n: usize, delta_f: f64, l_max: usize) -> Result<Self> {
        Self::new(m, n, delta_f, n / 2, m / 2, l_max)
    }

    /// Returns a copy with the pilot moved; guard constraints are re-checked.
    pub fn with_pilot(&self, k_p: usize, l_p: usize) -> Result<Self> {
        Self::new(self.m, self.n, self.delta_f, k_p, l_p, self.l_max)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Slot duration `T_s = 1 / delta_f`.
    pub fn t_s(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Frame duration `N * T_s`.
    pub fn t_f(&self) -> f64 {
        self.n as f64 * self.t_s()
    }

    /// Occupied bandwidth `M * delta_f`.
    pub fn bandwidth(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    /// Doppler resolution `1 / (N T_s)` in Hz.
    pub fn doppler_bin_hz(&self) -> f64 {
        1.0 / self.t_f()
    }

    pub fn k_p(&self) -> usize {
        self.k_p
    }

    pub fn l_p(&self) -> usize {
        self.l_p
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Number of cells per frame, `M * N`.
    pub fn cells(&self) -> usize {
        self.m * self.n
    }

    /// Data-bearing cell count `N (M - 2 l_max - 1)`.
    pub fn data_cells(&self) -> usize {
        self.n * (self.m - 2 * self.l_max - 1)
    }

    /// True when delay bin `l` lies in the pilot column or its guard band.
    pub fn is_guard_delay(&self, l: usize) -> bool {
        l + self.l_max >= self.l_p && l <= self.l_p + self.l_max
    }

    /// True when cell `(k, l)` carries a data symbol.
    pub fn is_data_cell(&self, _k: usize, l: usize) -> bool {
        !self.is_guard_delay(l)
    }

    /// Flat index `k * M + l`.
    pub fn vec_index(&self, k: usize, l: usize) -> Result<usize> {
        if k >= self.n || l >= self.m {
            return Err(IsacError::OutOfRange(format!(
                "cell ({k}, {l}) outside {}x{} grid",
                self.n, self.m
            )));
        }
        Ok(k * self.m + l)
    }

    /// Inverse of [`OtfsGrid::vec_index`].
    pub fn unvec_index(&self, i: usize) -> Result<(usize, usize)> {
        if i >= self.cells() {
            return Err(IsacError::OutOfRange(format!(
                "flat index {i} outside grid of {} cells",
                self.cells()
            )));
        }
        Ok((i / self.m, i % self.m))
    }
}

/// Guard index sets `(K_g, L_g)`: every Doppler bin except the pilot's, and the
/// delay bins within `l_max` of the pilot (pilot delay excluded).
pub fn guard_index_sets(grid: &OtfsGrid) -> (Vec<usize>, Vec<usize>) {
    let doppler = (0..grid.n()).filter(|&k| k != grid.k_p()).collect();
    let delay = (grid.l_p() - grid.l_max()..=grid.l_p() + grid.l_max())
        .filter(|&l| l != grid.l_p())
        .collect();
    (doppler, delay)
}

/// Complex `N x M` delay-Doppler symbol grid, row-major in `(k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    n: usize,
    m: usize,
    data: Vec<Complex64>,
}

impl DdFrame {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            data: vec![Complex64::new(0.0, 0.0); n * m],
        }
    }

    pub fn zeros_like(grid: &OtfsGrid) -> Self {
        Self::zeros(grid.n(), grid.m())
    }

    /// Wraps a row-major vector of length `n * m`.
    pub fn from_vec(n: usize, m: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * m {
            return Err(IsacError::DimensionMismatch {
                what: "frame samples",
                expected: n * m,
                actual: data.len(),
            });
        }
        Ok(Self { n, m, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[k * self.m + l]
    }

    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        self.data[k * self.m + l] = v;
    }

    /// Flattened view, index `k * M + l`.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn matches(&self, grid: &OtfsGrid) -> bool {
        self.n == grid.n() && self.m == grid.m()
    }

    /// Largest absolute entry-wise difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &DdFrame) -> f64 {
        assert_eq!((self.n, self.m), (other.n, other.m), "frame shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Lays out pilot, guard zeros and data symbols. Data fills the non-guard
/// cells in row-major `(k, then l)` order.
pub fn place_symbols(grid: &OtfsGrid, x_p: f64, data: &[Complex64]) -> Result<DdFrame> {
    if !(x_p.is_finite() && x_p > 0.0) {
        return invalid(format!("pilot amplitude must be positive, got {x_p}"));
    }
    let expected = grid.data_cells();
    if data.len() != expected {
        return Err(IsacError::DimensionMismatch {
            what: "data symbols",
            expected,
            actual: data.len(),
        });
    }
    let mut frame = DdFrame::zeros_like(grid);
    let mut symbols = data.iter();
    for k in 0..grid.n() {
        for l in 0..grid.m() {
            if grid.is_data_cell(k, l) {
                // length checked above
                frame.set(k, l, *symbols.next().unwrap());
            }
        }
    }
    frame.set(grid.k_p(), grid.l_p(), Complex64::new(x_p, 0.0));
    Ok(frame)
}

/// Pilot-only frame (all data cells zero).
pub fn pilot_frame(grid: &OtfsGrid, x_p: f64) -> Result<DdFrame> {
    place_symbols(grid, x_p, &vec![Complex64::new(0.0, 0.0); grid.data_cells()])
}

/// Time-frequency samples `X_TF[n, m]`, stored like [`DdFrame`] with `n` the
/// slot and `m` the subcarrier.
pub type TfFrame = DdFrame;

/// ISFFT, unnormalized:
/// `X_TF[n,m] = sum_k sum_l X[k,l] exp(j 2 pi (n k / N - m l / M))`.
pub fn isfft(dd: &DdFrame) -> TfFrame {
    let mut out = dd.clone();
    transform_2d(&mut out, true);
    out
}

/// SFFT with the `1 / (N M)` factor, inverse of [`isfft`].
pub fn sfft(tf: &TfFrame) -> DdFrame {
    let mut out = tf.clone();
    transform_2d(&mut out, false);
    let scale = 1.0 / (out.n * out.m) as f64;
    out.data.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Applies an `exp(+j)` DFT along the slow axis and an `exp(-j)` DFT along the
/// fast axis when `inverse_symplectic` is set, and the conjugate pair otherwise.
fn transform_2d(frame: &mut DdFrame, inverse_symplectic: bool) {
    let (n, m) = (frame.n, frame.m);
    let mut planner = FftPlanner::<f64>::new();
    let (slow, fast) = if inverse_symplectic {
        (planner.plan_fft_inverse(n), planner.plan_fft_forward(m))
    } else {
        (planner.plan_fft_forward(n), planner.plan_fft_inverse(m))
    };
    for row in frame.data.chunks_exact_mut(m) {
        fast.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); n];
    for l in 0..m {
        for (k, c) in column.iter_mut().enumerate() {
            *c = frame.data[k * m + l];
        }
        slow.process(&mut column);
        for (k, c) in column.iter().enumerate() {
            frame.data[k * m + l] = *c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper_grid() -> OtfsGrid {
        OtfsGrid::new(64, 16, 15e3, 8, 32, 8).unwrap()
    }

    #[test]
    fn guard_sets_match_default_layout() {
        let g = paper_grid();
        let (kg, lg) = guard_index_sets(&g);
        assert_eq!(kg.len(), 15);
        assert_eq!(lg.len(), 16);
        assert!(!kg.contains(&8) && !lg.contains(&32));
        assert_eq!(g.data_cells(), 752);
    }

    #[test]
    fn degenerate_guard_and_tiny_grid() {
        let g = OtfsGrid::new(64, 16, 15e3, 8, 32, 0).unwrap();
        let (_, lg) = guard_index_sets(&g);
        assert!(lg.is_empty());
        assert_eq!(g.data_cells(), 16 * 63);

        let tiny = OtfsGrid::new(4, 2, 1.0, 0, 1, 1).unwrap();
        assert_eq!(tiny.data_cells(), 2);
    }

    #[test]
    fn grid_rejects_guard_overflow() {
        assert!(OtfsGrid::new(16, 4, 1.0, 0, 3, 4).is_err());
        assert!(OtfsGrid::new(16, 4, 1.0, 0, 12, 4).is_err());
        assert!(OtfsGrid::new(16, 4, 1.0, 4, 8, 4).is_err());
    }

    #[test]
    fn derived_timing() {
        let g = paper_grid();
        assert_eq!(g.t_s(), 1.0 / 15e3);
        assert!((g.t_f() - 16.0 / 15e3).abs() < 1e-18);
        assert_eq!(g.bandwidth(), 64.0 * 15e3);
        assert!((g.doppler_bin_hz() - 937.5).abs() < 1e-9);
    }

    #[test]
    fn pilot_only_frame_has_single_nonzero() {
        let g = paper_grid();
        let f = pilot_frame(&g, 1.0).unwrap();
        let nz: Vec<_> = (0..g.cells())
            .filter(|&i| f.as_slice()[i].norm() > 0.0)
            .collect();
        assert_eq!(nz, vec![g.vec_index(8, 32).unwrap()]);
    }

    #[test]
    fn unit_data_energy_count() {
        let g = paper_grid();
        let data = vec![Complex64::new(1.0, 0.0); 752];
        let f = place_symbols(&g, 2.0, &data).unwrap();
        assert!((f.frobenius_sq() - (752.0 + 4.0)).abs() < 1e-9);
    }

    #[test]
    fn wrong_data_length_rejected() {
        let g = paper_grid();
        let err = place_symbols(&g, 1.0, &vec![Complex64::new(1.0, 0.0); 751]).unwrap_err();
        assert_eq!(
            err,
            IsacError::DimensionMismatch {
                what: "data symbols",
                expected: 752,
                actual: 751
            }
        );
    }

    #[test]
    fn placement_layout_scan() {
        let g = OtfsGrid::new(16, 4, 1.0, 1, 8, 3).unwrap();
        let data: Vec<_> = (0..g.data_cells())
            .map(|i| Complex64::new(1.0 + i as f64, 0.0))
            .collect();
        let f = place_symbols(&g, 0.5, &data).unwrap();
        let mut next = 1.0;
        for k in 0..4 {
            for l in 0..16 {
                let v = f.get(k, l);
                if (k, l) == (1, 8) {
                    assert_eq!(v, Complex64::new(0.5, 0.0));
                } else if (5..=11).contains(&l) {
                    assert_eq!(v, Complex64::new(0.0, 0.0));
                } else {
                    assert_eq!(v, Complex64::new(next, 0.0));
                    next += 1.0;
                }
            }
        }
    }

    #[test]
    fn isfft_of_zero_and_impulse() {
        let z = DdFrame::zeros(4, 8);
        assert_eq!(isfft(&z), z);

        let mut imp = DdFrame::zeros(4, 8);
        imp.set(0, 0, Complex64::new(1.0, 0.0));
        let tf = isfft(&imp);
        assert!(tf
            .as_slice()
            .iter()
            .all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn isfft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, m) = (4, 6);
        let data: Vec<_> = (0..n * m)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let x = DdFrame::from_vec(n, m, data).unwrap();
        let tf = isfft(&x);
        for nn in 0..n {
            for mm in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    for l in 0..m {
                        let ph = 2.0
                            * std::f64::consts::PI
                            * ((nn * k) as f64 / n as f64 - (mm * l) as f64 / m as f64);
                        acc += x.get(k, l) * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((acc - tf.get(nn, mm)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn vec_index_rules() {
        let g = paper_grid();
        assert_eq!(g.vec_index(0, 0).unwrap(), 0);
        assert_eq!(g.vec_index(1, 0).unwrap(), 64);
        assert!(g.vec_index(16, 0).is_err());
        assert!(g.vec_index(0, 64).is_err());
        assert!(g.unvec_index(1024).is_err());
        for i in 0..g.cells() {
            let (k, l) = g.unvec_index(i).unwrap();
            assert_eq!(g.vec_index(k, l).unwrap(), i);
        }
    }

    proptest::proptest! {
        #[test]
        fn sfft_inverts_isfft(n in 1usize..9, m in 1usize..9, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..n * m)
                .map(|_| Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
                .collect();
            let x = DdFrame::from_vec(n, m, data).unwrap();
            let back = sfft(&isfft(&x));
            proptest::prop_assert!(back.max_abs_diff(&x) <= 1e-12);
        }
    }
}

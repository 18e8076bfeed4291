//! Cascaded user -> IRS -> BS channel in the delay-Doppler domain.
//!
//! Each user-IRS path `p1` and IRS-BS path `p2` form a cascaded pair whose
//! input-output operator `Psi` maps transmitted DD symbols to received ones.
//! The beamformers enter only through the scalar `beta = r^H a_B a_I^H diag(xi) a_I`,
//! so operators are built once per scenario and weighted per beam choice.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IsacError, Result};
use crate::frame::{DdFrame, OtfsGrid};
use crate::sparse::SparseMatrix;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type CVector = DVector<Complex64>;

/// User -> IRS path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathUi {
    pub h: Complex64,
    /// Integer delay tap, in units of `1 / (M delta_f)`.
    pub l_tau: usize,
    /// Doppler shift in Hz.
    pub nu: f64,
    /// IRS elevation effective angle (rad).
    pub phi: f64,
    /// IRS azimuth effective angle (rad).
    pub psi: f64,
}

/// IRS -> BS path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathIb {
    pub h: Complex64,
    pub l_tau: usize,
    pub nu: f64,
    /// BS effective angle of arrival (rad).
    pub theta_bs: f64,
    pub phi: f64,
    pub psi: f64,
}

/// A complete physical instance: frame, both path lists, array sizes and
/// noise/pilot levels. Index 0 of each path list is the LoS path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: OtfsGrid,
    pub ui_paths: Vec<PathUi>,
    pub ib_paths: Vec<PathIb>,
    pub n_b: usize,
    pub n_i1: usize,
    pub n_i2: usize,
    pub sigma2: f64,
    pub x_p: f64,
}

/// Identifies one cascaded `(p1, p2)` path pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairIndex {
    pub p1: usize,
    pub p2: usize,
}

impl Scenario {
    /// Checks the structural invariants (LoS delay strictly minimal, delay
    /// budget within `l_max`, sizes positive, Doppler representable).
    pub fn validate(&self) -> Result<()> {
        if self.ui_paths.is_empty() || self.ib_paths.is_empty() {
            return invalid("scenario needs at least one path per hop");
        }
        if self.n_b == 0 || self.n_i1 == 0 || self.n_i2 == 0 {
            return invalid("array sizes must be positive");
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return invalid(format!("noise power must be >= 0, got {}", self.sigma2));
        }
        if !(self.x_p > 0.0 && self.x_p.is_finite()) {
            return invalid(format!("pilot amplitude must be > 0, got {}", self.x_p));
        }
        let los_ui = self.ui_paths[0].l_tau;
        if self.ui_paths[1..].iter().any(|p| p.l_tau <= los_ui) {
            return invalid("user-IRS LoS path must have strictly minimal delay");
        }
        let los_ib = self.ib_paths[0].l_tau;
        if self.ib_paths[1..].iter().any(|p| p.l_tau <= los_ib) {
            return invalid("IRS-BS LoS path must have strictly minimal delay");
        }
        let max_ui = self.ui_paths.iter().map(|p| p.l_tau).max().unwrap_or(0);
        let max_ib = self.ib_paths.iter().map(|p| p.l_tau).max().unwrap_or(0);
        if max_ui + max_ib > self.grid.l_max() {
            return invalid(format!(
                "combined delay {} exceeds l_max = {}",
                max_ui + max_ib,
                self.grid.l_max()
            ));
        }
        let half_span = 0.5 / self.grid.t_s();
        for nu in self
            .ui_paths
            .iter()
            .map(|p| p.nu)
            .chain(self.ib_paths.iter().map(|p| p.nu))
        {
            if !nu.is_finite() || (nu.abs() * self.grid.t_f()) >= self.grid.n() as f64 / 2.0 {
                return invalid(format!(
                    "Doppler {nu} Hz outside representable range +/-{half_span} Hz"
                ));
            }
        }
        Ok(())
    }

    pub fn n_i(&self) -> usize {
        self.n_i1 * self.n_i2
    }

    /// SNR `x_p^2 / sigma^2` (linear); infinite for noiseless scenarios.
    pub fn snr(&self) -> f64 {
        self.x_p * self.x_p / self.sigma2
    }

    /// All cascaded pairs, `p1` outer.
    pub fn pairs(&self) -> impl Iterator<Item = PairIndex> + '_ {
        let n2 = self.ib_paths.len();
        (0..self.ui_paths.len()).flat_map(move |p1| (0..n2).map(move |p2| PairIndex { p1, p2 }))
    }

    pub fn pair_count(&self) -> usize {
        self.ui_paths.len() * self.ib_paths.len()
    }

    pub fn pair_delay(&self, q: PairIndex) -> usize {
        self.ui_paths[q.p1].l_tau + self.ib_paths[q.p2].l_tau
    }

    pub fn pair_doppler(&self, q: PairIndex) -> f64 {
        self.ui_paths[q.p1].nu + self.ib_paths[q.p2].nu
    }

    /// Delay bin carrying the LoS pilot echo, `l_p + l_tau1^UI + l_tau1^IB`.
    pub fn los_delay_bin(&self) -> usize {
        self.grid.l_p() + self.ui_paths[0].l_tau + self.ib_paths[0].l_tau
    }

    /// Beam-independent pair coefficient
    /// `h^IB h^UI exp(j 2 pi nu^IB tau^UI)`.
    pub fn pair_gain(&self, q: PairIndex) -> Complex64 {
        let ui = &self.ui_paths[q.p1];
        let ib = &self.ib_paths[q.p2];
        let tau_ui = ui.l_tau as f64 / self.grid.bandwidth();
        ib.h * ui.h * Complex64::from_polar(1.0, 2.0 * PI * ib.nu * tau_ui)
    }

    /// BS steering vector of pair `q`'s IRS-BS hop.
    pub fn pair_bs_vector(&self, q: PairIndex) -> CVector {
        steer_bs(self.ib_paths[q.p2].theta_bs, self.n_b)
    }

    /// `v_q = conj(a_I(IB)) .* a_I(UI)`, so that `a_I^H(IB) diag(xi) a_I(UI) = v_q^T xi`.
    pub fn pair_irs_vector(&self, q: PairIndex) -> CVector {
        let ui = &self.ui_paths[q.p1];
        let ib = &self.ib_paths[q.p2];
        let a_ui = steer_irs(ui.phi, ui.psi, self.n_i1, self.n_i2);
        let a_ib = steer_irs(ib.phi, ib.psi, self.n_i1, self.n_i2);
        a_ib.zip_map(&a_ui, |b, u| b.conj() * u)
    }

    /// Cascaded LoS steering vector `a_theta = diag(a_I^H(UI_1)) a_I(IB_1)`;
    /// the LoS IRS term equals `a_theta^H xi`.
    pub fn los_irs_steering(&self) -> CVector {
        self.pair_irs_vector(PairIndex { p1: 0, p2: 0 }).map(|v| v.conj())
    }

    /// BS steering vector of the LoS IRS-BS path.
    pub fn los_bs_steering(&self) -> CVector {
        steer_bs(self.ib_paths[0].theta_bs, self.n_b)
    }

    /// `|h^IB_1 h^UI_1|`.
    pub fn los_gain_abs(&self) -> f64 {
        (self.ib_paths[0].h * self.ui_paths[0].h).norm()
    }

    /// `|h_{1,1}^UIB|` for the given beams.
    pub fn los_cascaded_abs(&self, r: &CVector, xi: &CVector) -> f64 {
        self.los_gain_abs()
            * r.dotc(&self.los_bs_steering()).norm()
            * self.los_irs_steering().dotc(xi).norm()
    }
}

/// IRS array response `a(u) kron a(v)`; first axis outer.
pub fn steer_irs(u: f64, v: f64, n_i1: usize, n_i2: usize) -> CVector {
    CVector::from_iterator(
        n_i1 * n_i2,
        (0..n_i1).flat_map(|i1| {
            (0..n_i2).map(move |i2| Complex64::from_polar(1.0, i1 as f64 * u + i2 as f64 * v))
        }),
    )
}

/// BS ULA response `[1, e^{j theta}, ..., e^{j (N_B - 1) theta}]`.
pub fn steer_bs(theta: f64, n_b: usize) -> CVector {
    CVector::from_iterator(
        n_b,
        (0..n_b).map(|i| Complex64::from_polar(1.0, i as f64 * theta)),
    )
}

/// Beam scalar `r^H a_B(theta) a_I^H(IB) diag(xi) a_I(UI)`.
pub fn beta(
    r: &CVector,
    xi: &CVector,
    p1: &PathUi,
    p2: &PathIb,
    n_i1: usize,
    n_i2: usize,
) -> Result<Complex64> {
    let n_i = n_i1 * n_i2;
    if xi.len() != n_i {
        return Err(IsacError::DimensionMismatch {
            what: "IRS phase vector",
            expected: n_i,
            actual: xi.len(),
        });
    }
    let a_b = steer_bs(p2.theta_bs, r.len());
    let a_ui = steer_irs(p1.phi, p1.psi, n_i1, n_i2);
    let a_ib = steer_irs(p2.phi, p2.psi, n_i1, n_i2);
    let irs: Complex64 = a_ib
        .iter()
        .zip(xi.iter())
        .zip(a_ui.iter())
        .map(|((b, x), u)| b.conj() * x * u)
        .sum();
    Ok(r.dotc(&a_b) * irs)
}

/// Pair gain seen at receive delay bin `l_rx`, without the beam scalar:
/// `h^IB h^UI exp(j 2 pi nu^IB tau^UI) exp(j 2 pi (nu^UI + nu^IB) (l_rx - l_tau) / (M delta_f))`.
pub fn cascaded_gain(p1: &PathUi, p2: &PathIb, grid: &OtfsGrid, l_rx: usize) -> Result<Complex64> {
    let l_tau = p1.l_tau + p2.l_tau;
    if l_rx < l_tau {
        return invalid(format!("receive bin {l_rx} precedes pair delay {l_tau}"));
    }
    let tau_ui = p1.l_tau as f64 / grid.bandwidth();
    let nu = p1.nu + p2.nu;
    let cross = Complex64::from_polar(1.0, 2.0 * PI * p2.nu * tau_ui);
    let offset = Complex64::from_polar(1.0, 2.0 * PI * nu * (l_rx - l_tau) as f64 / grid.bandwidth());
    Ok(p2.h * p1.h * cross * offset)
}

/// `(1/N) sum_{n<N} exp(j 2 pi x n / N)`, with the removable singularity at
/// integer multiples of `N` replaced by its limit.
pub fn dirichlet(x: f64, n: usize) -> Complex64 {
    let nf = n as f64;
    let den = (PI * x / nf).sin();
    let phase = Complex64::from_polar(1.0, PI * x * (nf - 1.0) / nf);
    if den.abs() < 1e-12 {
        phase * ((PI * x).cos() / (PI * x / nf).cos())
    } else {
        phase * ((PI * x).sin() / (nf * den))
    }
}

/// Delay-Doppler operator of one cascaded path pair.
///
/// Row `(k, l)` couples only to delay column `l' = (l - l_tau) mod M`; the
/// entry for Doppler column `k'` is the Dirichlet kernel at
/// `k' - k + nu N T_s` times `exp(-j 2 pi nu l' / (M delta_f))`, with the
/// extra `exp(-j 2 pi (k'/N + nu T_s))` on rows that wrap (`l < l_tau`).
/// With `truncated`, columns in the pilot/guard delay band are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiOperator {
    pub l_tau: usize,
    pub nu: f64,
}

impl PsiOperator {
    pub fn new(l_tau: usize, nu: f64, grid: &OtfsGrid) -> Result<Self> {
        if l_tau > grid.l_max() {
            return invalid(format!(
                "pair delay {l_tau} exceeds delay budget l_max = {}",
                grid.l_max()
            ));
        }
        Ok(Self { l_tau, nu })
    }

    /// Source delay column for receive delay `l`.
    pub fn source_delay(&self, l: usize, grid: &OtfsGrid) -> usize {
        (l + grid.m() - self.l_tau % grid.m()) % grid.m()
    }

    /// Entry `[(k, l), (k', source_delay(l))]`.
    pub fn entry(&self, k: usize, l: usize, k_src: usize, grid: &OtfsGrid) -> Complex64 {
        let n = grid.n();
        let t_s = grid.t_s();
        let l_src = self.source_delay(l, grid);
        let x = k_src as f64 - k as f64 + self.nu * n as f64 * t_s;
        let mut v = dirichlet(x, n)
            * Complex64::from_polar(1.0, -2.0 * PI * self.nu * l_src as f64 / grid.bandwidth());
        if l < self.l_tau {
            v *= Complex64::from_polar(
                1.0,
                -2.0 * PI * (k_src as f64 / n as f64 + self.nu * t_s),
            );
        }
        v
    }

    /// Calls `visit(k_src, value)` for each Doppler column of row `(k, l)`,
    /// skipping truncated columns.
    pub fn for_row(
        &self,
        k: usize,
        l: usize,
        grid: &OtfsGrid,
        truncated: bool,
        mut visit: impl FnMut(usize, Complex64),
    ) {
        let l_src = self.source_delay(l, grid);
        if truncated && grid.is_guard_delay(l_src) {
            return;
        }
        for k_src in 0..grid.n() {
            visit(k_src, self.entry(k, l, k_src, grid));
        }
    }

    pub fn to_sparse(&self, grid: &OtfsGrid, truncated: bool) -> SparseMatrix {
        let m = grid.m();
        SparseMatrix::from_rows(grid.cells(), grid.cells(), |row, push| {
            let (k, l) = (row / m, row % m);
            let l_src = self.source_delay(l, grid);
            self.for_row(k, l, grid, truncated, |k_src, v| push(k_src * m + l_src, v));
        })
    }
}

/// `Psi` for the pair `(p1, p2)`.
pub fn psi_matrix(p1: &PathUi, p2: &PathIb, grid: &OtfsGrid, truncated: bool) -> Result<SparseMatrix> {
    let op = PsiOperator::new(p1.l_tau + p2.l_tau, p1.nu + p2.nu, grid)?;
    Ok(op.to_sparse(grid, truncated))
}

/// Per-pair weights `h^IB h^UI exp(j 2 pi nu^IB tau^UI) beta` for given beams.
pub fn pair_weights(scenario: &Scenario, r: &CVector, xi: &CVector) -> Result<Vec<Complex64>> {
    if r.len() != scenario.n_b {
        return Err(IsacError::DimensionMismatch {
            what: "combiner",
            expected: scenario.n_b,
            actual: r.len(),
        });
    }
    scenario
        .pairs()
        .map(|q| {
            let b = beta(
                r,
                xi,
                &scenario.ui_paths[q.p1],
                &scenario.ib_paths[q.p2],
                scenario.n_i1,
                scenario.n_i2,
            )?;
            Ok(scenario.pair_gain(q) * b)
        })
        .collect()
}

/// Effective channel `H = sum_q weight_q Psi_q` as a sparse `MN x MN` matrix.
pub fn effective_channel(
    scenario: &Scenario,
    r: &CVector,
    xi: &CVector,
    truncated: bool,
) -> Result<SparseMatrix> {
    let weights = pair_weights(scenario, r, xi)?;
    channel_from_weights(scenario, &weights, truncated)
}

/// Effective channel for explicit pair weights (ordered as [`Scenario::pairs`]).
pub fn channel_from_weights(
    scenario: &Scenario,
    weights: &[Complex64],
    truncated: bool,
) -> Result<SparseMatrix> {
    let grid = &scenario.grid;
    if weights.len() != scenario.pair_count() {
        return Err(IsacError::DimensionMismatch {
            what: "pair weights",
            expected: scenario.pair_count(),
            actual: weights.len(),
        });
    }
    let ops: Vec<PsiOperator> = scenario
        .pairs()
        .map(|q| PsiOperator::new(scenario.pair_delay(q), scenario.pair_doppler(q), grid))
        .collect::<Result<_>>()?;
    let m = grid.m();
    Ok(SparseMatrix::from_rows(grid.cells(), grid.cells(), |row, push| {
        let (k, l) = (row / m, row % m);
        for (op, w) in ops.iter().zip(weights) {
            let l_src = op.source_delay(l, grid);
            op.for_row(k, l, grid, truncated, |k_src, v| push(k_src * m + l_src, w * v));
        }
    }))
}

/// Draws one circularly-symmetric complex Gaussian sample with variance `sigma2`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> Complex64 {
    let s = (sigma2 / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Received frame `y = H vec(x) + n` with per-entry noise variance `sigma^2`.
pub fn simulate_rx<R: Rng + ?Sized>(
    frame: &DdFrame,
    scenario: &Scenario,
    r: &CVector,
    xi: &CVector,
    rng: &mut R,
) -> Result<DdFrame> {
    let grid = &scenario.grid;
    if !frame.matches(grid) {
        return Err(IsacError::DimensionMismatch {
            what: "frame cells",
            expected: grid.cells(),
            actual: frame.n() * frame.m(),
        });
    }
    let h = effective_channel(scenario, r, xi, false)?;
    let mut y = h.mul_vec(frame.as_slice());
    if scenario.sigma2 > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, scenario.sigma2);
        }
    }
    DdFrame::from_vec(grid.n(), grid.m(), y)
}

/// Noiseless received pilot response over all Doppler bins at delay bin
/// `l_rx`, for a pilot-only frame. Equivalent to the `l_rx` column of
/// `simulate_rx` on `pilot_frame` with zero noise, at `O(pairs * N)` cost.
pub fn pilot_response(scenario: &Scenario, weights: &[Complex64], l_rx: usize) -> Result<Vec<Complex64>> {
    let grid = &scenario.grid;
    if l_rx >= grid.m() {
        return Err(IsacError::OutOfRange(format!("delay bin {l_rx} >= M = {}", grid.m())));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n()];
    for (q, w) in scenario.pairs().zip(weights) {
        let op = PsiOperator::new(scenario.pair_delay(q), scenario.pair_doppler(q), grid)?;
        if op.source_delay(l_rx, grid) != grid.l_p() {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += w * scenario.x_p * op.entry(k, l_rx, grid.k_p(), grid);
        }
    }
    Ok(out)
}

/// Knobs for [`random_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub grid: OtfsGrid,
    pub l_ui: usize,
    pub l_ib: usize,
    pub n_b: usize,
    pub n_i1: usize,
    pub n_i2: usize,
    /// Maximum user speed in km/h.
    pub v_max_kmh: f64,
    /// Carrier frequency in Hz.
    pub f_c_hz: f64,
    pub snr_db: f64,
    pub x_p: f64,
    /// Doppler assigned to non-LoS IRS-BS paths, drawn like the user paths
    /// when set (moving scatterers); zero otherwise.
    pub mobile_ib_scatterers: bool,
}

impl ScenarioParams {
    /// Parameters of the reference setup: 64 x 16 frame at 15 kHz, 8 x 8 IRS,
    /// 4 BS antennas, four paths per hop, 28 GHz, 120 km/h, 20 dB.
    pub fn reference() -> Self {
        Self {
            grid: OtfsGrid::centered(64, 16, 15e3, 8).expect("reference grid"),
            l_ui: 4,
            l_ib: 4,
            n_b: 4,
            n_i1: 8,
            n_i2: 8,
            v_max_kmh: 120.0,
            f_c_hz: 28e9,
            snr_db: 20.0,
            x_p: 1.0,
            mobile_ib_scatterers: false,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c_hz
    }

    /// Largest user Doppler `v_max / lambda` in Hz.
    pub fn max_doppler_hz(&self) -> f64 {
        self.v_max_kmh / 3.6 / self.wavelength()
    }

    pub fn sigma2(&self) -> f64 {
        self.x_p * self.x_p / 10f64.powf(self.snr_db / 10.0)
    }

    fn validate(&self) -> Result<()> {
        if self.l_ui == 0 || self.l_ib == 0 {
            return invalid("path counts must be >= 1");
        }
        if self.n_b == 0 || self.n_i1 == 0 || self.n_i2 == 0 {
            return invalid("array sizes must be >= 1");
        }
        let ui_budget = self.grid.l_max() / 2;
        let ib_budget = self.grid.l_max() - ui_budget;
        if self.l_ui > ui_budget + 1 || self.l_ib > ib_budget + 1 {
            return invalid(format!(
                "l_max = {} cannot host {} + {} paths with distinct NLoS delays",
                self.grid.l_max(),
                self.l_ui,
                self.l_ib
            ));
        }
        if !(self.v_max_kmh >= 0.0 && self.f_c_hz > 0.0) {
            return invalid("speed must be >= 0 and carrier > 0");
        }
        Ok(())
    }
}

/// Samples a scenario: LoS taps 0, NLoS taps uniform in `[1, budget]` with the
/// per-hop budgets splitting `l_max`; unit-magnitude gains with uniform phase;
/// user Dopplers `v_max cos(theta)` with `theta ~ U[0, 2 pi)`; effective angles
/// uniform in `[-pi, pi)`.
pub fn random_scenario<R: Rng + ?Sized>(params: &ScenarioParams, rng: &mut R) -> Result<Scenario> {
    params.validate()?;
    let grid = params.grid;
    let ui_budget = grid.l_max() / 2;
    let ib_budget = grid.l_max() - ui_budget;
    let nu_max = params.max_doppler_hz();
    let angle = |rng: &mut R| rng.random_range(-PI..PI);
    let unit = |rng: &mut R| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
    let doppler = |rng: &mut R| nu_max * rng.random_range(0.0..2.0 * PI).cos();

    let ui_paths = (0..params.l_ui)
        .map(|i| PathUi {
            h: unit(rng),
            l_tau: if i == 0 { 0 } else { rng.random_range(1..=ui_budget.max(1)) },
            nu: doppler(rng),
            phi: angle(rng),
            psi: angle(rng),
        })
        .collect();
    let ib_paths = (0..params.l_ib)
        .map(|i| PathIb {
            h: unit(rng),
            l_tau: if i == 0 { 0 } else { rng.random_range(1..=ib_budget.max(1)) },
            nu: if i > 0 && params.mobile_ib_scatterers {
                doppler(rng)
            } else {
                0.0
            },
            theta_bs: angle(rng),
            phi: angle(rng),
            psi: angle(rng),
        })
        .collect();
    let scenario = Scenario {
        grid,
        ui_paths,
        ib_paths,
        n_b: params.n_b,
        n_i1: params.n_i1,
        n_i2: params.n_i2,
        sigma2: params.sigma2(),
        x_p: params.x_p,
    };
    scenario.validate()?;
    Ok(scenario)
}

//! Joint combiner / IRS phase design.
//!
//! The truncated channel energy is a quadratic form in either beamformer:
//! `||H_truc||_F^2 = r^H A(xi) r = xi^H B(r) xi`. The optimizer alternates a
//! subspace closed form for `r` with a phase closed form (or consensus ADMM
//! when the sensing constraint binds) for `xi`, keeping the LoS cascaded gain
//! above the threshold `gamma'` that guarantees the Doppler MSE target.

use std::f64::consts::PI;

use log::{debug, warn};
use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::analysis::{kernel_amps, mse_upper_gain};
use crate::channel::{channel_from_weights, PairIndex, PsiOperator, Scenario};
use crate::error::{invalid, IsacError, Result};
use crate::frame::OtfsGrid;
use crate::linalg::{fix_phase, hermitize, log_det_identity_plus, top_eigvec, CMatrix, CVector};
use crate::sparse::SparseMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `Tr{Psi_q Psi_q'^H}` over all cascaded pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pairs: Vec<PairIndex>,
    values: Vec<Complex64>,
}

impl TraceTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[PairIndex] {
        &self.pairs
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.pairs.len() + j]
    }
}

/// Builds the trace table from the sparse pair operators. Pairs with
/// different delay taps have disjoint column support and are skipped.
pub fn build_trace_table(scenario: &Scenario, truncated: bool) -> Result<TraceTable> {
    let grid = &scenario.grid;
    let pairs: Vec<PairIndex> = scenario.pairs().collect();
    let ops: Vec<PsiOperator> = pairs
        .iter()
        .map(|&q| PsiOperator::new(scenario.pair_delay(q), scenario.pair_doppler(q), grid))
        .collect::<Result<_>>()?;
    let mats: Vec<SparseMatrix> = ops.par_iter().map(|op| op.to_sparse(grid, truncated)).collect();
    let p = pairs.len();
    let rows: Vec<Vec<Complex64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            (0..p)
                .map(|j| {
                    if j < i || ops[i].l_tau != ops[j].l_tau {
                        ZERO
                    } else {
                        mats[i].trace_with_adjoint(&mats[j])
                    }
                })
                .collect()
        })
        .collect();
    let mut values = vec![ZERO; p * p];
    for i in 0..p {
        for j in i..p {
            let v = rows[i][j];
            values[i * p + j] = v;
            values[j * p + i] = v.conj();
        }
        values[i * p + i] = Complex64::new(values[i * p + i].re, 0.0);
    }
    Ok(TraceTable { pairs, values })
}

/// Beam-independent quantities of a scenario: pair gains, steering vectors
/// and the truncated trace table.
#[derive(Debug, Clone)]
pub struct BeamModel {
    pub scenario: Scenario,
    pub table: TraceTable,
    gains: Vec<Complex64>,
    /// Columns `b_q = a_B(theta_q)`.
    bs: CMatrix,
    /// Columns `v_q`, with `a_I^H(IB) diag(xi) a_I(UI) = v_q^T xi`.
    irs: CMatrix,
    a_theta: CVector,
    a_b: CVector,
}

impl BeamModel {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let table = build_trace_table(scenario, true)?;
        let pairs = table.pairs().to_vec();
        let gains = pairs.iter().map(|&q| scenario.pair_gain(q)).collect();
        let bs_cols: Vec<CVector> = pairs.iter().map(|&q| scenario.pair_bs_vector(q)).collect();
        let irs_cols: Vec<CVector> = pairs.iter().map(|&q| scenario.pair_irs_vector(q)).collect();
        Ok(Self {
            scenario: scenario.clone(),
            table,
            gains,
            bs: CMatrix::from_columns(&bs_cols),
            irs: CMatrix::from_columns(&irs_cols),
            a_theta: scenario.los_irs_steering(),
            a_b: scenario.los_bs_steering(),
        })
    }

    pub fn n_b(&self) -> usize {
        self.scenario.n_b
    }

    pub fn n_i(&self) -> usize {
        self.scenario.n_i()
    }

    /// Cascaded LoS IRS steering vector `a_theta`.
    pub fn a_theta(&self) -> &CVector {
        &self.a_theta
    }

    /// BS steering vector of the LoS IRS-BS path.
    pub fn a_b(&self) -> &CVector {
        &self.a_b
    }

    fn check_beams(&self, r: Option<&CVector>, xi: Option<&CVector>) -> Result<()> {
        if let Some(r) = r {
            if r.len() != self.n_b() {
                return Err(IsacError::DimensionMismatch {
                    what: "combiner",
                    expected: self.n_b(),
                    actual: r.len(),
                });
            }
        }
        if let Some(xi) = xi {
            if xi.len() != self.n_i() {
                return Err(IsacError::DimensionMismatch {
                    what: "IRS phase vector",
                    expected: self.n_i(),
                    actual: xi.len(),
                });
            }
        }
        Ok(())
    }

    /// Per-pair weights `g_q (r^H b_q)(v_q^T xi)`.
    pub fn weights(&self, r: &CVector, xi: &CVector) -> Result<Vec<Complex64>> {
        self.check_beams(Some(r), Some(xi))?;
        let s = self.bs.ad_mul(r);
        let c = self.irs.tr_mul(xi);
        Ok((0..self.table.len())
            .map(|q| self.gains[q] * s[q].conj() * c[q])
            .collect())
    }

    /// `sum_{q,q'} w_q conj(w_q') T[q,q']`.
    fn energy(&self, w: &[Complex64]) -> f64 {
        let p = w.len();
        let mut acc = ZERO;
        for i in 0..p {
            for j in 0..p {
                let t = self.table.get(i, j);
                if t != ZERO {
                    acc += w[i] * w[j].conj() * t;
                }
            }
        }
        acc.re
    }

    /// `||H_truc||_F^2` for the given beams.
    pub fn objective(&self, r: &CVector, xi: &CVector) -> Result<f64> {
        Ok(self.energy(&self.weights(r, xi)?))
    }

    /// `M[q,q'] = k_q conj(k_q') T[q,q']`.
    fn weighted_table(&self, k: &[Complex64]) -> CMatrix {
        let p = k.len();
        CMatrix::from_fn(p, p, |i, j| k[i] * k[j].conj() * self.table.get(i, j))
    }

    /// `A(xi)` with `r^H A r = ||H_truc||_F^2`.
    pub fn matrix_a(&self, xi: &CVector) -> Result<CMatrix> {
        self.check_beams(None, Some(xi))?;
        let c = self.irs.tr_mul(xi);
        let k: Vec<Complex64> = (0..c.len()).map(|q| self.gains[q] * c[q]).collect();
        let m = self.weighted_table(&k);
        Ok(hermitize(&(&self.bs * m * self.bs.adjoint())))
    }

    /// `B(r)` with `xi^H B xi = ||H_truc||_F^2`.
    pub fn matrix_b(&self, r: &CVector) -> Result<CMatrix> {
        self.check_beams(Some(r), None)?;
        let s = self.bs.ad_mul(r);
        let k: Vec<Complex64> = (0..s.len()).map(|q| self.gains[q] * s[q].conj()).collect();
        let n = self.weighted_table(&k);
        let v_conj = self.irs.conjugate();
        Ok(hermitize(&(&v_conj * n.transpose() * self.irs.transpose())))
    }

    /// `|h_{1,1}^UIB|` for the given beams.
    pub fn los_gain(&self, r: &CVector, xi: &CVector) -> f64 {
        self.scenario.los_gain_abs() * r.dotc(&self.a_b).norm() * self.a_theta.dotc(xi).norm()
    }

    /// Truncated effective channel for the given beams.
    pub fn channel(&self, r: &CVector, xi: &CVector) -> Result<SparseMatrix> {
        channel_from_weights(&self.scenario, &self.weights(r, xi)?, true)
    }

    /// Achievable rate of the truncated channel at `gamma = 1 / sigma^2`.
    pub fn rate(&self, r: &CVector, xi: &CVector) -> Result<f64> {
        rate(&self.channel(r, xi)?, 1.0 / self.scenario.sigma2)
    }
}

/// Quadratic forms at a given beam pair.
#[derive(Debug, Clone)]
pub struct QuadForms {
    pub a_mat: CMatrix,
    pub b_mat: CMatrix,
}

impl QuadForms {
    pub fn at(model: &BeamModel, r: &CVector, xi: &CVector) -> Result<Self> {
        Ok(Self {
            a_mat: model.matrix_a(xi)?,
            b_mat: model.matrix_b(r)?,
        })
    }
}

/// `(1/MN) log2 det(I + gamma H H^H)`, evaluated as
/// `log det(I + gamma H^H H)` over the occupied columns of `H`.
pub fn rate(h: &SparseMatrix, gamma: f64) -> Result<f64> {
    if h.rows() != h.cols() {
        return invalid("rate needs a square channel matrix");
    }
    if !(gamma >= 0.0) {
        return invalid(format!("rate needs gamma >= 0, got {gamma}"));
    }
    let cols = h.occupied_columns();
    if cols.is_empty() || gamma == 0.0 {
        return Ok(0.0);
    }
    let g = h.gram_of_columns(&cols);
    let ld = log_det_identity_plus(&g, gamma)?;
    Ok(ld / (h.rows() as f64 * std::f64::consts::LN_2))
}

/// `(1/MN) log2(1 + (gamma / N_s) frob2)`.
pub fn rate_lower_bound(frob2: f64, gamma: f64, n_s: usize, mn: usize) -> f64 {
    (gamma / n_s as f64 * frob2).ln_1p() / (mn as f64 * std::f64::consts::LN_2)
}

/// Smallest LoS cascaded gain `|h|` whose MSE upper bound meets `gamma1_hz2`.
pub fn gamma_prime(gamma1_hz2: f64, nu_true: f64, grid: &OtfsGrid, sigma2: f64, x_p: f64) -> Result<f64> {
    if !(gamma1_hz2 > 0.0) {
        return Err(IsacError::Infeasible(format!(
            "MSE target {gamma1_hz2} is not above the bound's infimum 0"
        )));
    }
    if !(sigma2 > 0.0) {
        return invalid("gamma' needs sigma2 > 0");
    }
    let amps = kernel_amps(nu_true, grid, x_p);
    let f = |h: f64| mse_upper_gain(&amps, h, sigma2, grid);
    let mut lo = 1.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while f(hi)? > gamma1_hz2 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(IsacError::Infeasible("MSE target unreachable".into()));
        }
    }
    while f(lo)? <= gamma1_hz2 {
        lo /= 2.0;
        guard += 1;
        if guard > 4000 {
            return Ok(0.0);
        }
    }
    // f(lo) > target >= f(hi); bisect in log space
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid)? > gamma1_hz2 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Ok(hi)
}

/// Combiner maximizing `r^H A r` subject to `||r|| = 1`,
/// `|r^H a_los|^2 >= lambda_r`, via the two-vector subspace
/// `{a_los / ||a_los||, Gram-Schmidt(u_1)}`.
pub fn solve_r(a_mat: &CMatrix, a_los: &CVector, lambda_r: f64) -> Result<CVector> {
    if a_mat.nrows() != a_los.len() {
        return Err(IsacError::DimensionMismatch {
            what: "combiner steering vector",
            expected: a_mat.nrows(),
            actual: a_los.len(),
        });
    }
    let na2 = a_los.norm_squared();
    if lambda_r > na2 * (1.0 + 1e-12) {
        return Err(IsacError::Infeasible(format!(
            "combiner threshold {lambda_r} exceeds ||a||^2 = {na2}"
        )));
    }
    let lambda_r = lambda_r.max(0.0).min(na2);
    let (_, u1) = top_eigvec(a_mat)?;
    if u1.dotc(a_los).norm_sqr() >= lambda_r {
        return Ok(u1);
    }
    let alpha = a_los.unscale(na2.sqrt());
    let p = alpha.dotc(&u1);
    let resid = &u1 - alpha.scale(1.0).map(|v| v * p);
    let rn = resid.norm();
    let x1 = (lambda_r / na2).sqrt();
    let x2 = (1.0 - x1 * x1).max(0.0).sqrt();
    let phase = |z: Complex64| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) };
    let mut r = alpha.map(|v| v * phase(p) * x1);
    if rn > 1e-14 {
        let beta = resid.unscale(rn);
        let q = beta.dotc(&u1);
        r += beta.map(|v| v * phase(q) * x2);
    }
    let n = r.norm();
    r.unscale_mut(n);
    fix_phase(&mut r);
    Ok(r)
}

fn unit_phases(v: &CVector) -> CVector {
    v.map(|x| {
        if x.norm() > 0.0 {
            x / x.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// `exp(j arg u_2)` for the dominant eigenvector `u_2` of `B`.
pub fn solve_xi_closed(b_mat: &CMatrix) -> Result<CVector> {
    let (_, u2) = top_eigvec(b_mat)?;
    Ok(unit_phases(&u2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    /// Penalty; `None` picks `lambda_max(B)`.
    pub rho: Option<f64>,
    pub eps1: f64,
    pub t_max: usize,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: None,
            eps1: 1e-6,
            t_max: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Unit-modulus, constraint-satisfying phase vector.
    pub xi: CVector,
    pub objective: f64,
    pub iterations: usize,
    /// Primal residual `max(||xi - z1||, ||xi - z2||)` reached `eps1`.
    pub converged: bool,
    pub residual: f64,
    /// `max(0, lambda_xi - |a_theta^H xi|^2)` of the returned vector.
    pub violation: f64,
    pub rho: f64,
}

/// Projection onto `{z : |z^H a|^2 >= lambda}`.
fn project_gain(zeta: &CVector, a: &CVector, lambda: f64) -> CVector {
    let c = zeta.dotc(a).conj(); // a^H zeta
    let mag = c.norm();
    let target = lambda.max(0.0).sqrt();
    if mag >= target {
        return zeta.clone();
    }
    let na2 = a.norm_squared();
    if mag == 0.0 {
        return zeta + a.scale(target / na2);
    }
    let coeff = (target - mag) / (na2 * mag);
    zeta + a.map(|v| v * c * coeff)
}

fn quad(b: &CMatrix, x: &CVector) -> f64 {
    x.dotc(&(b * x)).re
}

/// Moves `xi` toward `anchor` (phase by phase) until `|a^H xi|^2 >= lambda`.
fn repair_feasibility(xi: &CVector, anchor: &CVector, a: &CVector, lambda: f64) -> CVector {
    let feasible = |x: &CVector| a.dotc(x).norm_sqr() >= lambda;
    if feasible(xi) {
        return xi.clone();
    }
    let blend = |t: f64| unit_phases(&(xi.scale(1.0 - t) + anchor.scale(t)));
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(&blend(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    blend(hi)
}

/// Consensus ADMM for `max xi^H B xi` s.t. `|xi_i| = 1`, `|a^H xi|^2 >= lambda`.
///
/// `xi0` seeds both auxiliaries. The best unit-modulus feasible iterate is
/// returned; if none was feasible the last one is pulled toward `a`'s phases.
pub fn admm_xi(
    b_mat: &CMatrix,
    a_theta: &CVector,
    lambda_xi: f64,
    params: &AdmmParams,
    xi0: &CVector,
) -> Result<AdmmOutcome> {
    let n = b_mat.nrows();
    if a_theta.len() != n || xi0.len() != n {
        return Err(IsacError::DimensionMismatch {
            what: "ADMM vectors",
            expected: n,
            actual: a_theta.len().min(xi0.len()),
        });
    }
    let max_gain = a_theta.iter().map(|v| v.norm()).sum::<f64>().powi(2);
    if lambda_xi > max_gain * (1.0 + 1e-12) {
        return Err(IsacError::Infeasible(format!(
            "IRS threshold {lambda_xi} exceeds the reachable {max_gain}"
        )));
    }
    let (lmax, _) = top_eigvec(b_mat)?;
    let rho = params.rho.unwrap_or(lmax);
    if !(rho > 0.0) {
        return invalid(format!("ADMM penalty must be > 0, got {rho}"));
    }
    let mut sys = b_mat.scale(-1.0);
    for i in 0..n {
        sys[(i, i)] += Complex64::new(2.0 * rho, 0.0);
    }
    let sys = hermitize(&sys);
    let chol = match Cholesky::new(sys.clone()) {
        Some(c) => c,
        None => {
            debug!("ADMM system singular; adding ridge");
            let mut s = sys;
            for i in 0..n {
                s[(i, i)] += Complex64::new(1e-9 * lmax.max(1.0), 0.0);
            }
            Cholesky::new(s).ok_or_else(|| IsacError::Degenerate("ADMM system not definite".into()))?
        }
    };
    let anchor = unit_phases(a_theta);
    let feasible = |x: &CVector| a_theta.dotc(x).norm_sqr() >= lambda_xi;

    let mut z1 = xi0.clone();
    let mut z2 = xi0.clone();
    let mut mu1 = CVector::zeros(n);
    let mut mu2 = CVector::zeros(n);
    let mut xi = xi0.clone();
    let mut best: Option<(f64, CVector)> = None;
    let seed = unit_phases(xi0);
    if feasible(&seed) {
        best = Some((quad(b_mat, &seed), seed));
    }
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for t in 1..=params.t_max {
        iterations = t;
        let rhs = (&z1 + &mu1 + &z2 + &mu2).scale(rho);
        xi = chol.solve(&rhs);
        z1 = unit_phases(&(&xi - &mu1));
        z2 = project_gain(&(&xi - &mu2), a_theta, lambda_xi);
        mu1 += &z1 - &xi;
        mu2 += &z2 - &xi;
        residual = (&xi - &z1).norm().max((&xi - &z2).norm());

        let cand = unit_phases(&xi);
        if feasible(&cand) {
            let obj = quad(b_mat, &cand);
            if best.as_ref().is_none_or(|(o, _)| obj > *o) {
                best = Some((obj, cand));
            }
        }
        if residual < params.eps1 {
            break;
        }
    }
    let converged = residual < params.eps1;
    if !converged {
        debug!("ADMM stopped at t_max = {} with residual {residual:e}", params.t_max);
    }
    let xi_out = match best {
        Some((_, x)) => x,
        None => repair_feasibility(&unit_phases(&xi), &anchor, a_theta, lambda_xi),
    };
    let gain = a_theta.dotc(&xi_out).norm_sqr();
    Ok(AdmmOutcome {
        objective: quad(b_mat, &xi_out),
        violation: (lambda_xi - gain).max(0.0),
        xi: xi_out,
        iterations,
        converged,
        residual,
        rho,
    })
}

/// Optimizer state after each outer iteration.
#[derive(Debug, Clone)]
pub struct BeamState {
    pub r: CVector,
    pub xi: CVector,
    pub lambda_r: f64,
    pub lambda_xi: f64,
    pub gamma_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeParams {
    /// Required LoS cascaded gain `gamma'`.
    pub gamma_prime: f64,
    /// Outer iteration cap `T_1`.
    pub t1: usize,
    /// ADMM residual tolerance.
    pub eps1: f64,
    pub admm_max_iter: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
}

impl OptimizeParams {
    pub fn new(gamma_prime: f64) -> Self {
        Self {
            gamma_prime,
            t1: 10,
            eps1: 1e-6,
            admm_max_iter: 1000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub state: BeamState,
    /// `||H_truc||_F^2` at the initialization and after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Beams `(r, xi)` matching each entry of `objective_trace`.
    pub history: Vec<(CVector, CVector)>,
    /// Outer iterations run.
    pub iterations: usize,
    pub converged: bool,
    /// Outer iterations whose IRS step needed ADMM.
    pub admm_steps: usize,
}

/// Initialization pair: `r = a_B / ||a_B||`, `xi = a_theta`, which maximizes
/// the LoS cascaded gain.
pub fn baseline_strongest(scenario: &Scenario) -> (CVector, CVector) {
    let a_b = scenario.los_bs_steering();
    let n = a_b.norm();
    (a_b.unscale(n), scenario.los_irs_steering())
}

/// Uniform random IRS phases with the subspace combiner. The combiner
/// threshold is capped at `||a_B||^2` when the random phases cannot meet it.
pub fn baseline_random<R: Rng + ?Sized>(
    model: &BeamModel,
    gamma_prime: f64,
    rng: &mut R,
) -> Result<(CVector, CVector)> {
    let xi = CVector::from_iterator(
        model.n_i(),
        (0..model.n_i()).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))),
    );
    let lam = lambda_r(model, &xi, gamma_prime).min(model.a_b().norm_squared());
    let r = solve_r(&model.matrix_a(&xi)?, model.a_b(), lam)?;
    Ok((r, xi))
}

fn lambda_r(model: &BeamModel, xi: &CVector, gamma_prime: f64) -> f64 {
    let d = model.scenario.los_gain_abs() * model.a_theta().dotc(xi).norm();
    if d > 0.0 {
        (gamma_prime / d).powi(2)
    } else {
        f64::INFINITY
    }
}

fn lambda_xi(model: &BeamModel, r: &CVector, gamma_prime: f64) -> f64 {
    let d = model.scenario.los_gain_abs() * r.dotc(model.a_b()).norm();
    if d > 0.0 {
        (gamma_prime / d).powi(2)
    } else {
        f64::INFINITY
    }
}

/// Alternating subspace / ADMM beamforming. Each half-step is kept only if
/// it does not lower `||H_truc||_F^2`, so the objective trace is monotone.
pub fn optimize(model: &BeamModel, params: &OptimizeParams) -> Result<OptimizeOutcome> {
    let (mut r, mut xi) = baseline_strongest(&model.scenario);
    let g = params.gamma_prime;
    let reachable = model.los_gain(&r, &xi);
    if g > reachable * (1.0 + 1e-12) {
        return Err(IsacError::Infeasible(format!(
            "required LoS gain {g:.6e} exceeds the reachable {reachable:.6e}"
        )));
    }
    let mut obj = model.objective(&r, &xi)?;
    let mut trace = vec![obj];
    let mut history = vec![(r.clone(), xi.clone())];
    let mut converged = false;
    let mut iterations = 0;
    let mut admm_steps = 0;
    let mut lam_r = lambda_r(model, &xi, g);
    let mut lam_xi = lambda_xi(model, &r, g);
    let admm = AdmmParams {
        rho: None,
        eps1: params.eps1,
        t_max: params.admm_max_iter,
    };
    for t in 1..=params.t1 {
        iterations = t;
        let prev = obj;

        lam_r = lambda_r(model, &xi, g).min(model.a_b().norm_squared());
        let a = model.matrix_a(&xi)?;
        let r_new = solve_r(&a, model.a_b(), lam_r)?;
        let o = model.objective(&r_new, &xi)?;
        if o >= obj {
            r = r_new;
            obj = o;
        }

        lam_xi = lambda_xi(model, &r, g);
        let b = model.matrix_b(&r)?;
        let closed = solve_xi_closed(&b)?;
        let cand = if model.a_theta().dotc(&closed).norm_sqr() >= lam_xi {
            closed
        } else {
            admm_steps += 1;
            let out = admm_xi(&b, model.a_theta(), lam_xi, &admm, &xi)?;
            if !out.converged {
                debug!("outer {t}: ADMM residual {:.3e} after {} steps", out.residual, out.iterations);
            }
            out.xi
        };
        let o = model.objective(&r, &cand)?;
        if o > obj && model.los_gain(&r, &cand) >= g * (1.0 - 1e-9) {
            xi = cand;
            obj = o;
        }
        trace.push(obj);
        history.push((r.clone(), xi.clone()));
        if (obj - prev).abs() <= params.tol * obj.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if model.los_gain(&r, &xi) < g * (1.0 - 1e-6) {
        warn!("final LoS gain below gamma'");
    }
    Ok(OptimizeOutcome {
        state: BeamState {
            r,
            xi,
            lambda_r: lam_r,
            lambda_xi: lam_xi,
            gamma_prime: g,
        },
        objective_trace: trace,
        history,
        iterations,
        converged,
        admm_steps,
    })
}

/// `gamma'` for a scenario, from the true LoS Doppler (`gamma1_bins` is the
/// MSE target in squared Doppler bins).
pub fn scenario_gamma_prime(scenario: &Scenario, gamma1_bins: f64) -> Result<f64> {
    let grid = &scenario.grid;
    let nu = scenario.pair_doppler(PairIndex { p1: 0, p2: 0 });
    gamma_prime(
        gamma1_bins * grid.doppler_bin_hz().powi(2),
        nu,
        grid,
        scenario.sigma2,
        scenario.x_p,
    )
}

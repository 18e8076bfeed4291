//! Monte Carlo experiment runners, CSV persistence and plot-script emission.
//!
//! Every trial draws its own scenario from a ChaCha stream seeded by
//! `sha256(seed, trial)`, so results do not depend on the worker count.
//! Sweeps reuse each trial's scenario across SNR points (common random
//! numbers) and draw fresh noise per point from the same stream.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::info;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{kernel_amps, mse_approx, mse_error_sandwich, mse_upper, p_eff_closed, KernelAmps};
use crate::beamform::{
    baseline_random, baseline_strongest, optimize, scenario_gamma_prime, BeamModel, OptimizeParams,
};
use crate::channel::{complex_gaussian, pair_weights, pilot_response, random_scenario, Scenario, ScenarioParams};
use crate::error::{invalid, IsacError, Result};
use crate::frame::OtfsGrid;
use crate::sensing::ratio_estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Estimate,
    ProbSweep,
    MseSweep,
    Beamform,
    RateSweep,
    Convergence,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Estimate,
        ExperimentKind::ProbSweep,
        ExperimentKind::MseSweep,
        ExperimentKind::Beamform,
        ExperimentKind::RateSweep,
        ExperimentKind::Convergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Estimate => "estimate",
            ExperimentKind::ProbSweep => "prob-sweep",
            ExperimentKind::MseSweep => "mse-sweep",
            ExperimentKind::Beamform => "beamform",
            ExperimentKind::RateSweep => "rate-sweep",
            ExperimentKind::Convergence => "convergence",
        }
    }

    /// Metric columns in CSV order (the `config_hash` column follows).
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Estimate => &["trial", "nu_true", "nu_hat", "err"],
            ExperimentKind::ProbSweep => &["snr_db", "p_eff_mc", "p_eff_closed", "ci95"],
            ExperimentKind::MseSweep => &[
                "snr_db",
                "mse_mc",
                "mse_cond_mc",
                "mse_approx",
                "mse_upper",
                "delta_lower",
                "delta_upper",
            ],
            ExperimentKind::Beamform => &[
                "trial",
                "gamma_prime",
                "objective_init",
                "objective_final",
                "iterations",
                "converged",
                "admm_steps",
                "los_gain",
                "rate_subspace",
                "rate_strongest",
                "rate_random",
            ],
            ExperimentKind::RateSweep => &["snr_db", "rate_subspace", "rate_strongest", "rate_random"],
            ExperimentKind::Convergence => &["iter", "objective", "rate"],
        }
    }

    /// Kind whose column set equals `columns`.
    pub fn from_columns(columns: &[String]) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.columns().iter().copied().eq(columns.iter().map(String::as_str)))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| IsacError::InvalidArgument(format!("unknown experiment kind '{s}'")))
    }
}

/// SNR points in dB: a list, a single value, or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrSpec {
    List(Vec<f64>),
    Single(f64),
    Range { start: f64, stop: f64, step: f64 },
}

impl SnrSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            SnrSpec::List(v) => v.clone(),
            SnrSpec::Single(x) => vec![*x],
            SnrSpec::Range { start, stop, step } => {
                if !(*step > 0.0) || !(stop >= start) {
                    return invalid("snr_db: range needs step > 0 and stop >= start");
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                if count > 10_000 {
                    return invalid("snr_db: range has more than 10000 points");
                }
                (0..count).map(|i| start + i as f64 * step).collect()
            }
        };
        if v.is_empty() {
            return invalid("snr_db: list is empty");
        }
        if v.iter().any(|x| !x.is_finite()) {
            return invalid("snr_db: values must be finite");
        }
        Ok(v)
    }
}

/// Flat JSON experiment description. Missing fields take the reference
/// defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub delta_f_hz: f64,
    /// Pilot Doppler index; grid center when absent.
    pub k_p: Option<usize>,
    /// Pilot delay index; grid center when absent.
    pub l_p: Option<usize>,
    pub l_max: usize,
    pub n_b: usize,
    pub n_i1: usize,
    pub n_i2: usize,
    pub l_ui: usize,
    pub l_ib: usize,
    pub v_max_kmh: f64,
    pub f_c_hz: f64,
    pub snr_db: SnrSpec,
    pub trials: usize,
    pub seed: u64,
    /// MSE target in squared Doppler bins.
    pub gamma1: f64,
    pub t1: usize,
    pub eps1: f64,
    pub kind: Option<ExperimentKind>,
    pub x_p: f64,
    /// Fixed LoS Doppler in Hz; drawn per trial when absent.
    pub nu_los_hz: Option<f64>,
    pub mobile_ib_scatterers: bool,
    pub admm_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 64,
            n: 16,
            delta_f_hz: 15e3,
            k_p: None,
            l_p: None,
            l_max: 8,
            n_b: 4,
            n_i1: 8,
            n_i2: 8,
            l_ui: 4,
            l_ib: 4,
            v_max_kmh: 120.0,
            f_c_hz: 28e9,
            snr_db: SnrSpec::Single(20.0),
            trials: 1000,
            seed: 1,
            gamma1: 1e-3,
            t1: 10,
            eps1: 1e-6,
            kind: None,
            x_p: 1.0,
            nu_los_hz: None,
            mobile_ib_scatterers: false,
            admm_max_iter: 1000,
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON text; errors name the offending field where possible.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| IsacError::InvalidArgument(format!("config: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| IsacError::InvalidArgument("config: top level must be a JSON object".into()))?;
        match serde_json::from_value::<Self>(value.clone()) {
            Ok(cfg) => Ok(cfg),
            Err(e) => {
                for (k, v) in obj {
                    let mut single = serde_json::Map::new();
                    single.insert(k.clone(), v.clone());
                    if let Err(fe) = serde_json::from_value::<Self>(serde_json::Value::Object(single)) {
                        return invalid(format!("config field '{k}': {fe}"));
                    }
                }
                invalid(format!("config: {e}"))
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| IsacError::InvalidArgument(format!("config file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Result<OtfsGrid> {
        let centered = OtfsGrid::centered(self.m, self.n, self.delta_f_hz, self.l_max)
            .map_err(|e| IsacError::InvalidArgument(format!("frame (M, N, delta_f_hz, l_max): {e}")))?;
        centered
            .with_pilot(self.k_p.unwrap_or(centered.k_p()), self.l_p.unwrap_or(centered.l_p()))
            .map_err(|e| IsacError::InvalidArgument(format!("pilot (k_p, l_p): {e}")))
    }

    /// Fills the pilot location and checks every field.
    pub fn resolve(&self) -> Result<Self> {
        let fail = |field: &str, why: &str| invalid::<()>(format!("config field '{field}': {why}"));
        for (name, v) in [
            ("M", self.m),
            ("N", self.n),
            ("l_max", self.l_max),
            ("n_b", self.n_b),
            ("n_i1", self.n_i1),
            ("n_i2", self.n_i2),
            ("l_ui", self.l_ui),
            ("l_ib", self.l_ib),
            ("trials", self.trials),
            ("t1", self.t1),
            ("admm_max_iter", self.admm_max_iter),
        ] {
            if v == 0 {
                fail(name, "must be >= 1")?;
            }
        }
        for (name, v) in [
            ("delta_f_hz", self.delta_f_hz),
            ("f_c_hz", self.f_c_hz),
            ("gamma1", self.gamma1),
            ("eps1", self.eps1),
            ("x_p", self.x_p),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                fail(name, "must be finite and > 0")?;
            }
        }
        if !(self.v_max_kmh >= 0.0 && self.v_max_kmh.is_finite()) {
            fail("v_max_kmh", "must be finite and >= 0")?;
        }
        if let Some(nu) = self.nu_los_hz {
            if !nu.is_finite() {
                fail("nu_los_hz", "must be finite")?;
            }
        }
        self.snr_db.values()?;
        let grid = self.grid()?;
        let resolved = Self {
            k_p: Some(grid.k_p()),
            l_p: Some(grid.l_p()),
            ..self.clone()
        };
        resolved.scenario_params(self.snr_db.values()?[0]).and_then(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            random_scenario(&p, &mut rng).map(|_| ())
        })
        .map_err(|e| IsacError::InvalidArgument(format!("config (paths vs l_max): {e}")))?;
        Ok(resolved)
    }

    /// Short provenance hash of the canonical JSON of this config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn scenario_params(&self, snr_db: f64) -> Result<ScenarioParams> {
        Ok(ScenarioParams {
            grid: self.grid()?,
            l_ui: self.l_ui,
            l_ib: self.l_ib,
            n_b: self.n_b,
            n_i1: self.n_i1,
            n_i2: self.n_i2,
            v_max_kmh: self.v_max_kmh,
            f_c_hz: self.f_c_hz,
            snr_db,
            x_p: self.x_p,
            mobile_ib_scatterers: self.mobile_ib_scatterers,
        })
    }
}

/// RNG stream of one trial, independent of scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(trial.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Scenario of one trial; the first draws of the trial stream.
pub fn trial_scenario(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, snr_db: f64) -> Result<Scenario> {
    let mut s = random_scenario(&cfg.scenario_params(snr_db)?, rng)?;
    if let Some(nu) = cfg.nu_los_hz {
        s.ui_paths[0].nu = nu - s.ib_paths[0].nu;
        s.validate()?;
    }
    Ok(s)
}

fn sigma2_of(cfg: &ExperimentConfig, snr_db: f64) -> f64 {
    cfg.x_p * cfg.x_p / 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub kind: ExperimentKind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub config_hash: String,
}

impl ResultTable {
    pub fn new(kind: ExperimentKind, config_hash: impl Into<String>) -> Self {
        Self {
            kind,
            columns: kind.columns().iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            config_hash: config_hash.into(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Noiseless LoS pilot row under matched beams plus its kernel amplitudes.
struct SensingTruth {
    clean: Vec<Complex64>,
    amps: KernelAmps,
    h_abs: f64,
    nu: f64,
}

fn sensing_truth(s: &Scenario) -> Result<SensingTruth> {
    let (r, xi) = baseline_strongest(s);
    let w = pair_weights(s, &r, &xi)?;
    let clean = pilot_response(s, &w, s.los_delay_bin())?;
    let nu = s.pair_doppler(crate::channel::PairIndex { p1: 0, p2: 0 });
    Ok(SensingTruth {
        clean,
        amps: kernel_amps(nu, &s.grid, s.x_p),
        h_abs: s.los_cascaded_abs(&r, &xi),
        nu,
    })
}

struct SenseDraw {
    nu_hat: f64,
    selected: bool,
}

fn sense_once(truth: &SensingTruth, grid: &OtfsGrid, sigma2: f64, rng: &mut ChaCha8Rng) -> Result<SenseDraw> {
    let z: Vec<f64> = truth
        .clean
        .iter()
        .map(|c| (c + complex_gaussian(rng, sigma2)).norm())
        .collect();
    let rep = ratio_estimate(&z, grid)?;
    Ok(SenseDraw {
        nu_hat: rep.nu_hat,
        selected: rep.selection_matches(&truth.amps),
    })
}

fn per_trial<T: Send>(cfg: &ExperimentConfig, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..cfg.trials as u64).into_par_iter().map(f).collect()
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn closed_p_eff(t: &SensingTruth, sigma2: f64) -> Result<f64> {
    match p_eff_closed(t.h_abs * t.amps.a_k2, t.h_abs * t.amps.a_k3, sigma2) {
        Err(IsacError::Degenerate(_)) => Ok(0.5),
        other => other,
    }
}

fn run_estimate(cfg: &ExperimentConfig, table: &mut ResultTable, snrs: &[f64]) -> Result<()> {
    let snr = snrs[0];
    let rows = per_trial(cfg, |t| {
        let mut rng = trial_rng(cfg.seed, t);
        let s = trial_scenario(cfg, &mut rng, snr)?;
        let truth = sensing_truth(&s)?;
        let d = sense_once(&truth, &s.grid, s.sigma2, &mut rng)?;
        Ok(vec![t as f64, truth.nu, d.nu_hat, d.nu_hat - truth.nu])
    })?;
    table.rows = rows;
    Ok(())
}

fn run_prob_sweep(cfg: &ExperimentConfig, table: &mut ResultTable, snrs: &[f64]) -> Result<()> {
    let per = per_trial(cfg, |t| {
        let mut rng = trial_rng(cfg.seed, t);
        let s = trial_scenario(cfg, &mut rng, snrs[0])?;
        let truth = sensing_truth(&s)?;
        snrs.iter()
            .map(|&snr| {
                let s2 = sigma2_of(cfg, snr);
                let d = sense_once(&truth, &s.grid, s2, &mut rng)?;
                Ok((d.selected, closed_p_eff(&truth, s2)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let k = cfg.trials as f64;
    for (i, &snr) in snrs.iter().enumerate() {
        let p = mean(per.iter().map(|v| if v[i].0 { 1.0 } else { 0.0 }));
        let closed = mean(per.iter().map(|v| v[i].1));
        let ci = 1.96 * (p * (1.0 - p) / k).sqrt();
        table.rows.push(vec![snr, p, closed, ci]);
    }
    Ok(())
}

/// `(mse_approx, mse_upper, delta_lower, delta_upper)` for one trial, `None`
/// when the Doppler is on the grid or the closed forms are out of range.
fn closed_mse(t: &SensingTruth, grid: &OtfsGrid, sigma2: f64) -> Option<[f64; 4]> {
    let (z1, z2) = t.amps.z_primes(t.h_abs);
    let a = mse_approx(&t.amps, z1, z2, sigma2, grid).ok()?;
    let u = mse_upper(&t.amps, z1, z2, sigma2, grid).ok()?;
    let d = mse_error_sandwich(&t.amps, z1, z2, sigma2, grid).ok()?;
    Some([a, u, d.delta_lower, d.delta_upper])
}

fn run_mse_sweep(cfg: &ExperimentConfig, table: &mut ResultTable, snrs: &[f64]) -> Result<()> {
    type Point = (f64, bool, Option<[f64; 4]>);
    let per: Vec<Vec<Point>> = per_trial(cfg, |t| {
        let mut rng = trial_rng(cfg.seed, t);
        let s = trial_scenario(cfg, &mut rng, snrs[0])?;
        let truth = sensing_truth(&s)?;
        snrs.iter()
            .map(|&snr| {
                let s2 = sigma2_of(cfg, snr);
                let d = sense_once(&truth, &s.grid, s2, &mut rng)?;
                let e = d.nu_hat - truth.nu;
                Ok((e * e, d.selected, closed_mse(&truth, &s.grid, s2)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (i, &snr) in snrs.iter().enumerate() {
        let mc = mean(per.iter().map(|v| v[i].0));
        let cond = mean(per.iter().filter(|v| v[i].1).map(|v| v[i].0));
        let closed: Vec<[f64; 4]> = per.iter().filter_map(|v| v[i].2).collect();
        let col = |j: usize| mean(closed.iter().map(|c| c[j]));
        table.rows.push(vec![snr, mc, cond, col(0), col(1), col(2), col(3)]);
    }
    Ok(())
}

struct BeamTrial {
    gamma_prime: f64,
    objective_init: f64,
    objective_final: f64,
    iterations: usize,
    converged: bool,
    admm_steps: usize,
    los_gain: f64,
    rate_subspace: f64,
    rate_strongest: f64,
    rate_random: f64,
    objective_trace: Vec<f64>,
    rate_trace: Vec<f64>,
}

fn beam_trial(
    cfg: &ExperimentConfig,
    model: &mut BeamModel,
    snr: f64,
    rng: &mut ChaCha8Rng,
    with_rate_trace: bool,
) -> Result<BeamTrial> {
    model.scenario.sigma2 = sigma2_of(cfg, snr);
    let g = scenario_gamma_prime(&model.scenario, cfg.gamma1)?;
    let params = OptimizeParams {
        t1: cfg.t1,
        eps1: cfg.eps1,
        admm_max_iter: cfg.admm_max_iter,
        ..OptimizeParams::new(g)
    };
    let out = optimize(model, &params)?;
    let (r0, xi0) = baseline_strongest(&model.scenario);
    let (rr, xir) = baseline_random(model, g, rng)?;
    let st = &out.state;
    let rate_trace = if with_rate_trace {
        out.history
            .iter()
            .map(|(r, xi)| model.rate(r, xi))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(BeamTrial {
        gamma_prime: g,
        objective_init: out.objective_trace[0],
        objective_final: *out.objective_trace.last().expect("trace has the initial point"),
        iterations: out.iterations,
        converged: out.converged,
        admm_steps: out.admm_steps,
        los_gain: model.los_gain(&st.r, &st.xi),
        rate_subspace: model.rate(&st.r, &st.xi)?,
        rate_strongest: model.rate(&r0, &xi0)?,
        rate_random: model.rate(&rr, &xir)?,
        objective_trace: out.objective_trace,
        rate_trace,
    })
}

fn trial_model(cfg: &ExperimentConfig, t: u64, snr: f64) -> Result<(BeamModel, ChaCha8Rng)> {
    let mut rng = trial_rng(cfg.seed, t);
    let s = trial_scenario(cfg, &mut rng, snr)?;
    Ok((BeamModel::new(&s)?, rng))
}

fn run_beamform(cfg: &ExperimentConfig, table: &mut ResultTable, snrs: &[f64]) -> Result<()> {
    let snr = snrs[0];
    table.rows = per_trial(cfg, |t| {
        let (mut model, mut rng) = trial_model(cfg, t, snr)?;
        let b = beam_trial(cfg, &mut model, snr, &mut rng, false)?;
        Ok(vec![
            t as f64,
            b.gamma_prime,
            b.objective_init,
            b.objective_final,
            b.iterations as f64,
            if b.converged { 1.0 } else { 0.0 },
            b.admm_steps as f64,
            b.los_gain,
            b.rate_subspace,
            b.rate_strongest,
            b.rate_random,
        ])
    })?;
    Ok(())
}

fn run_rate_sweep(cfg: &ExperimentConfig, table: &mut ResultTable, snrs: &[f64]) -> Result<()> {
    let per = per_trial(cfg, |t| {
        let (mut model, mut rng) = trial_model(cfg, t, snrs[0])?;
        snrs.iter()
            .map(|&snr| {
                let b = beam_trial(cfg, &mut model, snr, &mut rng, false)?;
                Ok([b.rate_subspace, b.rate_strongest, b.rate_random])
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (i, &snr) in snrs.iter().enumerate() {
        let col = |j: usize| mean(per.iter().map(|v| v[i][j]));
        table.rows.push(vec![snr, col(0), col(1), col(2)]);
    }
    Ok(())
}

fn run_convergence(cfg: &ExperimentConfig, table: &mut ResultTable, snrs: &[f64]) -> Result<()> {
    let snr = snrs[0];
    let per = per_trial(cfg, |t| {
        let (mut model, mut rng) = trial_model(cfg, t, snr)?;
        let b = beam_trial(cfg, &mut model, snr, &mut rng, true)?;
        Ok((b.objective_trace, b.rate_trace))
    })?;
    // converged runs hold their last value for the remaining iterations
    let at = |v: &Vec<f64>, i: usize| v[i.min(v.len() - 1)];
    for i in 0..=cfg.t1 {
        let obj = mean(per.iter().map(|(o, _)| at(o, i)));
        let rate = mean(per.iter().map(|(_, r)| at(r, i)));
        table.rows.push(vec![i as f64, obj, rate]);
    }
    Ok(())
}

/// Runs the experiment named by `kind` (or `config.kind`).
pub fn run_experiment(config: &ExperimentConfig, kind: Option<ExperimentKind>) -> Result<ResultTable> {
    let cfg = config.resolve()?;
    let kind = kind
        .or(cfg.kind)
        .ok_or_else(|| IsacError::InvalidArgument("config field 'kind': no experiment kind given".into()))?;
    let cfg = ExperimentConfig {
        kind: Some(kind),
        ..cfg
    };
    let snrs = cfg.snr_db.values()?;
    let mut table = ResultTable::new(kind, cfg.hash());
    info!("running {kind} with {} trials over {} SNR points", cfg.trials, snrs.len());
    match kind {
        ExperimentKind::Estimate => run_estimate(&cfg, &mut table, &snrs)?,
        ExperimentKind::ProbSweep => run_prob_sweep(&cfg, &mut table, &snrs)?,
        ExperimentKind::MseSweep => run_mse_sweep(&cfg, &mut table, &snrs)?,
        ExperimentKind::Beamform => run_beamform(&cfg, &mut table, &snrs)?,
        ExperimentKind::RateSweep => run_rate_sweep(&cfg, &mut table, &snrs)?,
        ExperimentKind::Convergence => run_convergence(&cfg, &mut table, &snrs)?,
    }
    Ok(table)
}

fn csv_err(e: csv::Error) -> IsacError {
    IsacError::Io(e.to_string())
}

/// Writes the table with a header row; every row ends with the config hash.
pub fn write_csv<W: std::io::Write>(table: &ResultTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = table.columns.iter().map(String::as_str).collect();
    header.push("config_hash");
    w.write_record(&header).map_err(csv_err)?;
    for row in &table.rows {
        if row.len() != table.columns.len() {
            return Err(IsacError::DimensionMismatch {
                what: "table row",
                expected: table.columns.len(),
                actual: row.len(),
            });
        }
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(table.config_hash.clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| IsacError::Io(format!("{}: {e}", path.display())))?;
    write_csv(table, f)
}

/// Parses a CSV written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<ResultTable> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let Some((last, cols)) = header.split_last() else {
        return Err(IsacError::Io("empty CSV".into()));
    };
    if last != "config_hash" {
        return Err(IsacError::Io("last CSV column must be config_hash".into()));
    }
    let kind = ExperimentKind::from_columns(cols)
        .ok_or_else(|| IsacError::Io(format!("unrecognized CSV columns {cols:?}")))?;
    let mut table = ResultTable::new(kind, "");
    let mut hash: Option<String> = None;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let h = rec.get(cols.len()).unwrap_or_default().to_string();
        if hash.as_ref().is_some_and(|p| *p != h) {
            return Err(IsacError::Io("rows carry different config hashes".into()));
        }
        hash = Some(h);
        let row = rec
            .iter()
            .take(cols.len())
            .map(|v| v.parse::<f64>().map_err(|e| IsacError::Io(format!("bad number '{v}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        table.rows.push(row);
    }
    table.config_hash = hash.unwrap_or_default();
    Ok(table)
}

/// Standalone matplotlib script plotting the CSV at `csv_path`.
pub fn plot_script(table: &ResultTable, csv_path: &str) -> String {
    let x = &table.columns[0];
    let ys: Vec<&String> = table
        .columns
        .iter()
        .skip(1)
        .filter(|c| !matches!(c.as_str(), "ci95" | "converged" | "iterations" | "admm_steps"))
        .collect();
    let logy = matches!(table.kind, ExperimentKind::MseSweep);
    let ys_py: Vec<String> = ys.iter().map(|c| format!("\"{c}\"")).collect();
    format!(
        r#"#!/usr/bin/env python3
# {kind} results, config {hash}
import csv
import matplotlib.pyplot as plt

with open("{csv}") as f:
    rows = list(csv.DictReader(f))

x = [float(r["{x}"]) for r in rows]
fig, ax = plt.subplots()
for col in [{ys}]:
    ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
ax.set_xlabel("{x}")
{logy}ax.grid(True)
ax.legend()
fig.savefig("{csv}.png", dpi=150)
"#,
        kind = table.kind,
        hash = table.config_hash,
        csv = csv_path.replace('\\', "\\\\").replace('"', "\\\""),
        x = x,
        ys = ys_py.join(", "),
        logy = if logy { "ax.set_yscale(\"log\")\n" } else { "" },
    )
}

pub fn emit_plot_script(table: &ResultTable, csv_path: &Path, path: &Path) -> Result<()> {
    let script = plot_script(table, &csv_path.to_string_lossy());
    fs::write(path, script).map_err(|e| IsacError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            m: 16,
            n: 8,
            l_max: 4,
            n_b: 2,
            n_i1: 4,
            n_i2: 4,
            l_ui: 2,
            l_ib: 2,
            trials: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_parse_from_empty_object() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let r = cfg.resolve().unwrap();
        assert_eq!((r.k_p, r.l_p), (Some(8), Some(32)));
    }

    #[test]
    fn config_errors_name_the_field() {
        let e = ExperimentConfig::from_json(r#"{"M": "big"}"#).unwrap_err().to_string();
        assert!(e.contains("'M'"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"bogus": 1}"#).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let cfg = ExperimentConfig { trials: 0, ..ExperimentConfig::default() };
        assert!(cfg.resolve().unwrap_err().to_string().contains("'trials'"));
        let cfg = ExperimentConfig { snr_db: SnrSpec::List(vec![]), ..ExperimentConfig::default() };
        assert!(cfg.resolve().unwrap_err().to_string().contains("snr_db"));
    }

    #[test]
    fn snr_specs() {
        let c = ExperimentConfig::from_json(r#"{"snr_db": {"start": 5, "stop": 30, "step": 5}}"#).unwrap();
        assert_eq!(c.snr_db.values().unwrap(), vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        let c = ExperimentConfig::from_json(r#"{"snr_db": [10, 12.5]}"#).unwrap();
        assert_eq!(c.snr_db.values().unwrap(), vec![10.0, 12.5]);
        let c = ExperimentConfig::from_json(r#"{"snr_db": 7}"#).unwrap();
        assert_eq!(c.snr_db.values().unwrap(), vec![7.0]);
    }

    #[test]
    fn trial_streams_are_distinct_and_stable() {
        use rand::Rng;
        let a: u64 = trial_rng(1, 0).random();
        let b: u64 = trial_rng(1, 1).random();
        let c: u64 = trial_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn every_kind_runs_with_fixed_columns() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig { snr_db: SnrSpec::List(vec![15.0, 25.0]), t1: 3, ..small() };
            let t = run_experiment(&cfg, Some(kind)).unwrap();
            assert_eq!(t.columns, kind.columns());
            assert!(!t.rows.is_empty());
            assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
        }
    }

    #[test]
    fn infeasible_target_is_reported() {
        let cfg = ExperimentConfig { n_i1: 1, n_i2: 1, n_b: 1, snr_db: SnrSpec::Single(0.0), ..small() };
        let e = run_experiment(&cfg, Some(ExperimentKind::Beamform)).unwrap_err();
        assert!(matches!(e, IsacError::Infeasible(_)), "{e}");
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = ExperimentConfig { trials: 1, ..small() };
        for kind in [ExperimentKind::Estimate, ExperimentKind::RateSweep] {
            let mut a = Vec::new();
            let mut b = Vec::new();
            write_csv(&run_experiment(&cfg, Some(kind)).unwrap(), &mut a).unwrap();
            write_csv(&run_experiment(&cfg, Some(kind)).unwrap(), &mut b).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn csv_round_trip_and_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { snr_db: SnrSpec::List(vec![10.0, 20.0]), ..small() };
        let t = run_experiment(&cfg, Some(ExperimentKind::MseSweep)).unwrap();
        let p = dir.path().join("t.csv");
        emit_csv(&t, &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.config_hash, t.config_hash);
        for (a, b) in back.rows.iter().zip(&t.rows) {
            for (x, y) in a.iter().zip(b) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
        let empty = ResultTable::new(ExperimentKind::ProbSweep, "abc");
        let p = dir.path().join("e.csv");
        emit_csv(&empty, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "snr_db,p_eff_mc,p_eff_closed,ci95,config_hash\n");
        assert!(emit_csv(&empty, &dir.path().join("missing/e.csv")).is_err());
    }

    #[test]
    fn plot_script_references_only_the_csv() {
        let t = ResultTable::new(ExperimentKind::RateSweep, "h");
        let s = plot_script(&t, "out/rates.csv");
        assert!(s.contains("open(\"out/rates.csv\")"));
        assert!(s.contains("\"rate_random\""));
    }
}

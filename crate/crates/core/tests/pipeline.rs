//! End-to-end paths across modules.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otfs_isac::analysis::kernel_amps;
use otfs_isac::beamform::{baseline_strongest, optimize, scenario_gamma_prime, BeamModel, OptimizeParams};
use otfs_isac::channel::{pair_weights, pilot_response, random_scenario, simulate_rx, PairIndex, ScenarioParams};
use otfs_isac::experiment::{emit_csv, read_csv, run_experiment, ExperimentConfig, ExperimentKind};
use otfs_isac::frame::place_symbols;
use otfs_isac::sensing::{extract_los_bin, ratio_estimate};

fn qpsk<R: Rng>(rng: &mut R, n: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| Complex64::new(if rng.random() { s } else { -s }, if rng.random() { s } else { -s }))
        .collect()
}

#[test]
fn data_does_not_leak_into_the_los_pilot_bin() {
    let params = ScenarioParams { snr_db: f64::INFINITY, ..ScenarioParams::reference() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let mut s = random_scenario(&params, &mut rng).unwrap();
        s.sigma2 = 0.0;
        let grid = s.grid;
        let data = qpsk(&mut rng, grid.data_cells());
        let x = place_symbols(&grid, s.x_p, &data).unwrap();
        let (r, xi) = baseline_strongest(&s);
        let y = simulate_rx(&x, &s, &r, &xi, &mut rng).unwrap();
        let z = extract_los_bin(&y, &grid, s.los_delay_bin()).unwrap();
        let clean = pilot_response(&s, &pair_weights(&s, &r, &xi).unwrap(), s.los_delay_bin()).unwrap();
        for (a, b) in z.iter().zip(&clean) {
            assert!((a - b.norm()).abs() < 1e-9 * b.norm().max(1.0));
        }
        let nu = s.pair_doppler(PairIndex { p1: 0, p2: 0 });
        let rep = ratio_estimate(&z, &grid).unwrap();
        assert!((rep.nu_hat - nu).abs() < 1e-9 * grid.doppler_bin_hz());
        assert!(rep.selection_matches(&kernel_amps(nu, &grid, s.x_p)));
    }
}

#[test]
fn optimized_beams_keep_the_sensing_gain() {
    let params = ScenarioParams::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..3 {
        let s = random_scenario(&params, &mut rng).unwrap();
        let m = BeamModel::new(&s).unwrap();
        let g = scenario_gamma_prime(&s, 1e-3).unwrap();
        let out = optimize(&m, &OptimizeParams::new(g)).unwrap();
        let st = &out.state;
        assert!(s.los_cascaded_abs(&st.r, &st.xi) >= g * (1.0 - 1e-9));
        let (r0, xi0) = baseline_strongest(&s);
        assert!(m.objective(&st.r, &st.xi).unwrap() >= m.objective(&r0, &xi0).unwrap());
    }
}

#[test]
fn config_file_to_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"M":16,"N":8,"l_max":4,"n_b":2,"n_i1":4,"n_i2":4,"l_ui":2,"l_ib":2,"trials":5,"t1":4,"kind":"convergence"}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let t = run_experiment(&cfg, None).unwrap();
    assert_eq!(t.kind, ExperimentKind::Convergence);
    assert_eq!(t.rows.len(), 5);
    let obj = t.column("objective").unwrap();
    assert!(obj.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-8)));
    let csv = dir.path().join("conv.csv");
    emit_csv(&t, &csv).unwrap();
    assert_eq!(read_csv(&csv).unwrap(), t);
}

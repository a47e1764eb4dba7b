//! Seeded panels shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::Path;

use ccmscreen_core::adversary::{build_truth_panel, coupled_controls, generate_attack, inject, AttackSpec};
use ccmscreen_core::panel::write_long_csv;
use ccmscreen_core::scm::run_scm;
use ccmscreen_core::{derive_seed, PanelData, SeededRng, SimplexWeights, TimeSeries};

pub const T_PRE: usize = 100;
pub const T_POST: usize = 10;
pub const TAU: f64 = 4.0;
pub const N_CLEAN: usize = 10;
pub const N_ADV: usize = 5;
/// Treated level above the clean donors' convex combination.
pub const LIFT: f64 = 20.0;

pub struct Fixture {
    pub clean: PanelData,
    pub attacked: PanelData,
    pub tau: f64,
    pub adversary_ids: Vec<String>,
    /// Total plain-SCM weight on adversaries in `attacked`.
    pub scm_adversary_weight: f64,
}

/// Random weights over three distinct clean controls.
fn truth_weights(ids: &[String], rng: &mut SeededRng) -> SimplexWeights {
    let mut w = vec![0.0; ids.len()];
    let mut picked = Vec::new();
    while picked.len() < 3 {
        let j = rng.uniform_int(0, ids.len() - 1);
        if !picked.contains(&j) {
            picked.push(j);
        }
    }
    let raw: Vec<f64> = picked.iter().map(|_| 0.2 + rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    for (j, r) in picked.iter().zip(&raw) {
        w[*j] = r / total;
    }
    let drift = 1.0 - w.iter().sum::<f64>();
    w[picked[0]] += drift;
    SimplexWeights::new(ids.to_vec(), w).unwrap()
}

/// Clean donor pool driven by a shared chaotic state; the treated unit is a
/// known combination of three donors, with effect `TAU` after `t0`.
pub fn truth_panel(seed: u64, lift: f64) -> (PanelData, SimplexWeights) {
    let len = T_PRE + T_POST;
    let mut series = vec![("treated".to_string(), vec![0.0; len])];
    series.extend(coupled_controls(N_CLEAN, len, 0.5, derive_seed(seed, &[0])).unwrap());
    let base = PanelData::from_series(series, "treated", T_PRE - 1).unwrap();
    let mut rng = SeededRng::new(derive_seed(seed, &[1]));
    let w = truth_weights(&base.control_ids(), &mut rng);
    let truth = build_truth_panel(&base, &w, TAU).unwrap();
    let lifted: Vec<f64> = truth.panel.treated().values().iter().map(|v| v + lift).collect();
    (truth.panel.with_treated_series(lifted).unwrap(), w)
}

/// Unrelated smooth template, standing in for an outside series.
pub fn template(seed: u64, len: usize) -> TimeSeries {
    let mut rng = SeededRng::new(derive_seed(seed, &[2]));
    let mut x = 0.0;
    let values = (0..len)
        .map(|_| {
            x = 0.8 * x + rng.standard_normal();
            20.0 + x
        })
        .collect();
    TimeSeries::new(values).unwrap()
}

pub fn attack_spec(seed: u64) -> AttackSpec {
    AttackSpec {
        window_start: 0,
        scale_k: 6.0,
        shift_a: 50.0,
        shift_b: 90.0,
        t_cut: T_PRE - 1,
        n_units: N_ADV,
        noise_multiplier: Some(1.0),
        seed: derive_seed(seed, &[3]),
    }
}

/// Clean pool plus level-shifted noisy copies of one template. Panics unless
/// plain SCM puts more than 0.1 total weight on the adversaries.
pub fn fixture(seed: u64) -> Fixture {
    let (clean, _) = truth_panel(seed, LIFT);
    let units = generate_attack(&template(seed, clean.len_time()), &attack_spec(seed), clean.len_time()).unwrap();
    let attacked = inject(&clean, &units, "adv").unwrap();
    let adversary_ids: Vec<String> = (1..=N_ADV).map(|i| format!("adv{i}")).collect();
    let (fit, _) = run_scm(&attacked).unwrap();
    let scm_adversary_weight: f64 = adversary_ids.iter().map(|id| fit.weights.get(id).unwrap()).sum();
    assert!(
        scm_adversary_weight > 0.1,
        "fixture {seed}: plain SCM adversary weight {scm_adversary_weight} does not exceed 0.1"
    );
    Fixture { clean, attacked, tau: TAU, adversary_ids, scm_adversary_weight }
}

pub fn write_panel(panel: &PanelData, path: &Path) {
    let mut buf = Vec::new();
    write_long_csv(panel, &mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

//! Artificial control units and known-truth treated units.
//!
//! An attack takes a window of an unrelated template series, scales it,
//! makes noisy copies around it and applies a level shift that flips sign at
//! the intervention, so the copies look plausible before it and drag the
//! synthetic control after it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::ser_f64;
use crate::panel::{PanelData, TimeSeries, Unit};
use crate::rng::{derive_seed, SeededRng};
use crate::scm::SimplexWeights;

pub fn scale_template(template: &TimeSeries, k: f64) -> Result<TimeSeries> {
    template.map(|v| k * v)
}

/// `s_t - a + b * 1{t <= t_cut}` on the series' own time grid.
pub fn level_shift(s: &TimeSeries, a: f64, b: f64, t_cut: usize) -> Result<TimeSeries> {
    if !s.times().contains(&t_cut) {
        return Err(Error::usage(format!("cut time {t_cut} outside {:?}", s.times())));
    }
    let values = s.times().zip(s.values()).map(|(t, &v)| v - a + if t <= t_cut { b } else { 0.0 }).collect();
    TimeSeries::with_start(s.start(), values)
}

/// Least-squares AR(1) fit `x_t = intercept + slope * x_{t-1} + e_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ar1Fit {
    #[serde(serialize_with = "ser_f64")]
    pub slope: f64,
    #[serde(serialize_with = "ser_f64")]
    pub intercept: f64,
    /// Residual standard deviation with `n - 2` degrees of freedom.
    #[serde(serialize_with = "ser_f64")]
    pub resid_sd: f64,
}

pub fn fit_ar1(values: &[f64]) -> Result<Ar1Fit> {
    if values.len() < 3 {
        return Err(Error::usage("AR(1) fit needs at least 3 points"));
    }
    let lag = &values[..values.len() - 1];
    let cur = &values[1..];
    let n = lag.len() as f64;
    let (mx, my) = (lag.iter().sum::<f64>() / n, cur.iter().sum::<f64>() / n);
    let sxx: f64 = lag.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * n {
        return Err(Error::numerical("template has zero variance; AR(1) fit is degenerate"));
    }
    let sxy: f64 = lag.iter().zip(cur).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lag.iter().zip(cur).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    Ok(Ar1Fit { slope, intercept, resid_sd: (ssr / dof).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSpec {
    /// First template index used; the attack reads `len` points from here.
    pub window_start: usize,
    pub scale_k: f64,
    pub shift_a: f64,
    pub shift_b: f64,
    /// Last index (on the attacked panel's grid) that receives `+shift_b`.
    pub t_cut: usize,
    pub n_units: usize,
    /// Copy noise as a multiple of the template's AR(1) residual sd; `None`
    /// emits exact copies.
    pub noise_multiplier: Option<f64>,
    pub seed: u64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            window_start: 0,
            scale_k: 6.0,
            shift_a: 50.0,
            shift_b: 90.0,
            t_cut: 0,
            n_units: 5,
            noise_multiplier: Some(1.0),
            seed: 0,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::usage("attack needs at least one unit"));
        }
        if ![self.scale_k, self.shift_a, self.shift_b].iter().all(|v| v.is_finite()) {
            return Err(Error::usage("attack constants must be finite"));
        }
        if let Some(m) = self.noise_multiplier {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::usage("noise multiplier must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Flat `key -> value` form, as written to config files.
    pub fn to_key_values(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("window_start".into(), self.window_start.to_string());
        m.insert("scale_k".into(), self.scale_k.to_string());
        m.insert("shift_a".into(), self.shift_a.to_string());
        m.insert("shift_b".into(), self.shift_b.to_string());
        m.insert("t_cut".into(), self.t_cut.to_string());
        m.insert("n_units".into(), self.n_units.to_string());
        m.insert("noise_multiplier".into(), self.noise_multiplier.map_or_else(|| "none".into(), |v| v.to_string()));
        m.insert("seed".into(), self.seed.to_string());
        m
    }

    /// Inverse of [`to_key_values`](Self::to_key_values); absent keys keep
    /// their defaults, unknown keys are rejected.
    pub fn from_key_values(kv: &BTreeMap<String, String>) -> Result<Self> {
        fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| Error::usage(format!("invalid value {v:?} for {k}")))
        }
        let mut spec = Self::default();
        for (k, v) in kv {
            match k.as_str() {
                "window_start" => spec.window_start = parse(k, v)?,
                "scale_k" => spec.scale_k = parse(k, v)?,
                "shift_a" => spec.shift_a = parse(k, v)?,
                "shift_b" => spec.shift_b = parse(k, v)?,
                "t_cut" => spec.t_cut = parse(k, v)?,
                "n_units" => spec.n_units = parse(k, v)?,
                "noise_multiplier" => {
                    spec.noise_multiplier = if v.trim() == "none" { None } else { Some(parse(k, v)?) }
                }
                "seed" => spec.seed = parse(k, v)?,
                other => return Err(Error::usage(format!("unknown attack key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `spec.n_units` copies of `template` plus independent Gaussian noise with
/// sd `multiplier * resid_sd` of the template's AR(1) fit. Copy `i` draws
/// from its own derived seed.
pub fn ar_noisy_copies(template: &TimeSeries, spec: &AttackSpec) -> Result<Vec<TimeSeries>> {
    spec.validate()?;
    let fit = fit_ar1(template.values())?;
    let sd = spec.noise_multiplier.unwrap_or(0.0) * fit.resid_sd;
    (0..spec.n_units)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeededRng::new(derive_seed(spec.seed, &[i as u64]));
            TimeSeries::with_start(
                template.start(),
                template.values().iter().map(|v| v + rng.normal(0.0, sd)).collect(),
            )
        })
        .collect()
}

/// Window, scale, copy and shift: the artificial units for a panel of
/// length `len`, indexed on that panel's grid.
pub fn generate_attack(template: &TimeSeries, spec: &AttackSpec, len: usize) -> Result<Vec<TimeSeries>> {
    spec.validate()?;
    let end = spec.window_start + len;
    if end > template.len() {
        return Err(Error::data(format!(
            "template of length {} cannot supply {len} points from index {}",
            template.len(),
            spec.window_start
        )));
    }
    let window = TimeSeries::new(template.values()[spec.window_start..end].to_vec())?;
    let scaled = scale_template(&window, spec.scale_k)?;
    let copies =
        if spec.noise_multiplier.is_some() { ar_noisy_copies(&scaled, spec)? } else { vec![scaled; spec.n_units] };
    copies.iter().map(|c| level_shift(c, spec.shift_a, spec.shift_b, spec.t_cut)).collect()
}

/// Appends `units` as controls named `<prefix>1..n`.
pub fn inject(panel: &PanelData, units: &[TimeSeries], id_prefix: &str) -> Result<PanelData> {
    let mut extra = Vec::with_capacity(units.len());
    for (i, s) in units.iter().enumerate() {
        if s.len() != panel.len_time() {
            return Err(Error::data(format!(
                "artificial unit {} has length {}, panel has {}",
                i + 1,
                s.len(),
                panel.len_time()
            )));
        }
        extra.push(Unit { id: format!("{id_prefix}{}", i + 1), series: TimeSeries::new(s.values().to_vec())? });
    }
    panel.with_extra_controls(extra)
}

/// A panel whose treated unit is built from known weights and effect.
#[derive(Debug, Clone)]
pub struct TruthPanel {
    pub panel: PanelData,
    pub true_weights: SimplexWeights,
    pub tau: f64,
}

/// Replaces the treated series of `controls` with
/// `sum_j w_j Y_jt + tau * 1{t > t0}`.
pub fn build_truth_panel(controls: &PanelData, weights: &SimplexWeights, tau: f64) -> Result<TruthPanel> {
    let synth = crate::scm::predict_counterfactual(weights, controls)?;
    let t0 = controls.t0();
    let treated: Vec<f64> =
        synth.values().iter().enumerate().map(|(t, v)| v + if t > t0 { tau } else { 0.0 }).collect();
    let panel = controls.with_treated_series(treated)?;
    let check = crate::scm::predict_counterfactual(weights, &panel)?;
    for (t, (y, s)) in panel.treated().values().iter().zip(check.values()).enumerate() {
        let expected = s + if t > t0 { tau } else { 0.0 };
        if (y - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(Error::Internal(format!("truth panel invariant broken at t = {t}")));
        }
    }
    Ok(TruthPanel { panel, true_weights: weights.clone(), tau })
}

/// Controls driven by one shared chaotic logistic-map state:
/// `c_j,t = level_j + gain_j * z_t + noise`, with `z_{t+1} = 3.8 z_t (1 - z_t)`.
/// Useful as a dynamically coupled donor pool.
pub fn coupled_controls(n_units: usize, len: usize, noise_sd: f64, seed: u64) -> Result<Vec<(String, Vec<f64>)>> {
    if n_units == 0 || len == 0 {
        return Err(Error::usage("need at least one unit and one period"));
    }
    let mut rng = SeededRng::new(seed);
    let mut z = 0.2 + 0.6 * rng.uniform();
    let driver: Vec<f64> = (0..len)
        .map(|_| {
            let v = z;
            z = 3.8 * z * (1.0 - z);
            v
        })
        .collect();
    Ok((0..n_units)
        .map(|j| {
            let level = 80.0 + 20.0 * rng.uniform();
            let gain = 10.0 + 20.0 * rng.uniform();
            let series = driver.iter().map(|d| level + gain * d + rng.normal(0.0, noise_sd)).collect();
            (format!("c{}", j + 1), series)
        })
        .collect())
}

//! Cross-mapping screen of the donor pool, followed by synthetic control on
//! the survivors.
//!
//! Each control is cross-mapped against the treated unit on pre-period data.
//! Its diagnostic (best final MAE, direction gap, convergence) is compared
//! with a Monte-Carlo null built from weakly coupled surrogates of the same
//! pair. A control is kept when it beats the null's `q_min` quantile on
//! MAE, stays under the `q_gap` quantile on gap, and its curves settle.

use std::io::Write;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::ccm::{
    ccm_curve, convergence_diagnostic, CcmConfig, CcmCurve, ConvergenceDiagnostic, DEFAULT_CONVERGENCE_SLACK,
};
use crate::error::{Error, Result};
use crate::format::{fmt_num, ser_f64};
use crate::panel::PanelData;
use crate::rng::{derive_seed, SeededRng};
use crate::scm::{effect_path, fit_weights, EffectPath, SimplexWeights};
use crate::stats::{quantile_type1, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMethod {
    /// Independent Gaussian noise on both series, sd `kappa * sd(series)`.
    Noise,
    /// Control rotated by a random offset in `[T/4, 3T/4]`.
    CircularShift,
}

impl std::str::FromStr for NullMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(Self::Noise),
            "circular_shift" => Ok(Self::CircularShift),
            other => Err(Error::usage(format!("unknown null method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    /// Each control is judged against its own null.
    PerControl,
    /// One pair of thresholds from the nulls of all controls pooled.
    Pooled,
}

impl std::str::FromStr for ThresholdScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_control" => Ok(Self::PerControl),
            "pooled" => Ok(Self::Pooled),
            other => Err(Error::usage(format!("unknown threshold scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningConfig {
    pub ccm: CcmConfig,
    pub null_method: NullMethod,
    pub noise_scale: f64,
    pub replicates: usize,
    pub q_min: f64,
    pub q_gap: f64,
    pub base_seed: u64,
    pub scope: ThresholdScope,
    pub convergence_slack: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            ccm: CcmConfig::default(),
            null_method: NullMethod::Noise,
            noise_scale: 1.0,
            replicates: 200,
            q_min: 0.10,
            q_gap: 0.90,
            base_seed: 0,
            scope: ThresholdScope::PerControl,
            convergence_slack: DEFAULT_CONVERGENCE_SLACK,
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<()> {
        self.ccm.embedding.validate()?;
        if self.replicates == 0 {
            return Err(Error::usage("replicates must be at least 1"));
        }
        for (name, q) in [("q_min", self.q_min), ("q_gap", self.q_gap)] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::usage(format!("{name} must lie in (0, 1), got {q}")));
            }
        }
        if !self.noise_scale.is_finite() || self.noise_scale < 0.0 {
            return Err(Error::usage("noise scale must be nonnegative"));
        }
        if !self.convergence_slack.is_finite() || self.convergence_slack < 0.0 {
            return Err(Error::usage("convergence slack must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningDecision {
    pub control_id: String,
    #[serde(serialize_with = "ser_f64")]
    pub min_mae: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gap: f64,
    pub converged: bool,
    #[serde(serialize_with = "ser_f64")]
    pub theta_min: f64,
    #[serde(serialize_with = "ser_f64")]
    pub theta_gap: f64,
    pub keep: bool,
}

impl ScreeningDecision {
    pub fn new(control_id: String, d: ConvergenceDiagnostic, theta_min: f64, theta_gap: f64) -> Self {
        let keep = d.min_mae <= theta_min && d.gap <= theta_gap && d.converged;
        Self { control_id, min_mae: d.min_mae, gap: d.gap, converged: d.converged, theta_min, theta_gap, keep }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NullSamples {
    pub min_mae: Vec<f64>,
    pub gap: Vec<f64>,
}

/// The observed curve's grid cut down to its two ends, which is all the
/// diagnostic reads.
fn endpoint_config(cfg: &CcmConfig, len: usize) -> Result<CcmConfig> {
    let grid = cfg.resolve_library_sizes(len)?;
    let mut ends = vec![grid[0], *grid.last().expect("grid is nonempty")];
    ends.dedup();
    Ok(CcmConfig { library_sizes: Some(ends), ..cfg.clone() })
}

/// Null diagnostics for one (treated, control) pair. Replicate `r` of the
/// control at position `control_index` draws from
/// `derive_seed(base_seed, [control_index, r])`.
pub fn null_distribution(
    treated: &[f64],
    control: &[f64],
    control_index: usize,
    cfg: &ScreeningConfig,
) -> Result<NullSamples> {
    cfg.validate()?;
    if treated.len() != control.len() {
        return Err(Error::usage("treated and control lengths differ"));
    }
    let ccm = endpoint_config(&cfg.ccm, treated.len())?;
    let (sd_t, sd_c) = (sample_sd(treated), sample_sd(control));
    let n = treated.len();
    let pairs: Vec<(f64, f64)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = SeededRng::new(derive_seed(cfg.base_seed, &[control_index as u64, r as u64]));
            let (a, b) = match cfg.null_method {
                NullMethod::Noise => {
                    let a: Vec<f64> = treated.iter().map(|v| v + rng.normal(0.0, cfg.noise_scale * sd_t)).collect();
                    let b: Vec<f64> = control.iter().map(|v| v + rng.normal(0.0, cfg.noise_scale * sd_c)).collect();
                    (a, b)
                }
                NullMethod::CircularShift => {
                    let k = rng.uniform_int(n / 4, 3 * n / 4);
                    let mut b = control.to_vec();
                    b.rotate_left(k % n);
                    (treated.to_vec(), b)
                }
            };
            let c = ccm_curve("treated", &a, "control", &b, &ccm)?;
            let d = convergence_diagnostic(&c, cfg.convergence_slack);
            Ok((d.min_mae, d.gap))
        })
        .collect::<Result<_>>()?;
    let (min_mae, gap) = pairs.into_iter().unzip();
    Ok(NullSamples { min_mae, gap })
}

/// Type-1 quantiles `(q_min of null_min, q_gap of null_gap)`.
pub fn thresholds(null_min: &[f64], null_gap: &[f64], q_min: f64, q_gap: f64) -> Result<(f64, f64)> {
    if null_min.is_empty() || null_gap.is_empty() {
        return Err(Error::usage("thresholds need nonempty null samples"));
    }
    Ok((quantile_type1(null_min, q_min), quantile_type1(null_gap, q_gap)))
}

#[derive(Debug, Clone)]
pub struct Screening {
    pub decisions: Vec<ScreeningDecision>,
    pub curves: Vec<CcmCurve>,
}

/// Screens every control on the pre-period. Output follows panel order.
pub fn screen(panel: &PanelData, cfg: &ScreeningConfig) -> Result<Screening> {
    cfg.validate()?;
    let pre = panel.pre();
    let treated_id = panel.treated_id();
    let controls: Vec<(&str, &[f64])> = pre.controls().collect();
    let per_control: Vec<(CcmCurve, ConvergenceDiagnostic, NullSamples)> = controls
        .par_iter()
        .enumerate()
        .map(|(j, (id, c))| {
            let curve = ccm_curve(treated_id, pre.treated(), id, c, &cfg.ccm)?;
            let diag = convergence_diagnostic(&curve, cfg.convergence_slack);
            let null = null_distribution(pre.treated(), c, j, cfg)?;
            Ok((curve, diag, null))
        })
        .collect::<Result<_>>()?;

    let pooled = match cfg.scope {
        ThresholdScope::PerControl => None,
        ThresholdScope::Pooled => {
            let all_min: Vec<f64> = per_control.iter().flat_map(|(_, _, n)| n.min_mae.iter().copied()).collect();
            let all_gap: Vec<f64> = per_control.iter().flat_map(|(_, _, n)| n.gap.iter().copied()).collect();
            Some(thresholds(&all_min, &all_gap, cfg.q_min, cfg.q_gap)?)
        }
    };
    let mut decisions = Vec::with_capacity(per_control.len());
    let mut curves = Vec::with_capacity(per_control.len());
    for ((id, _), (curve, diag, null)) in controls.iter().zip(per_control) {
        let (tm, tg) = match pooled {
            Some(t) => t,
            None => thresholds(&null.min_mae, &null.gap, cfg.q_min, cfg.q_gap)?,
        };
        decisions.push(ScreeningDecision::new(id.to_string(), diag, tm, tg));
        curves.push(curve);
    }
    Ok(Screening { decisions, curves })
}

pub fn screen_controls(panel: &PanelData, cfg: &ScreeningConfig) -> Result<Vec<ScreeningDecision>> {
    Ok(screen(panel, cfg)?.decisions)
}

fn ser_weights<S: Serializer>(w: &SimplexWeights, s: S) -> std::result::Result<S::Ok, S::Error> {
    w.report_map().serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub decisions: Vec<ScreeningDecision>,
    pub kept_ids: Vec<String>,
    #[serde(serialize_with = "ser_weights")]
    pub weights: SimplexWeights,
    #[serde(serialize_with = "ser_f64")]
    pub pre_rmse: f64,
    pub effect: EffectPath,
    pub curves: Vec<CcmCurve>,
}

/// Screens the pool, then fits synthetic control on the kept controls.
pub fn ccm_scm_pipeline(panel: &PanelData, cfg: &ScreeningConfig) -> Result<PipelineReport> {
    let Screening { decisions, curves } = screen(panel, cfg)?;
    let kept_ids: Vec<String> = decisions.iter().filter(|d| d.keep).map(|d| d.control_id.clone()).collect();
    if kept_ids.is_empty() {
        return Err(Error::AllScreenedOut { decisions });
    }
    let restricted;
    let pool = if kept_ids.len() == decisions.len() {
        panel
    } else {
        restricted = panel.restrict_controls(&kept_ids)?;
        &restricted
    };
    let fit = fit_weights(&pool.pre())?;
    let effect = effect_path(pool, &fit.weights)?;
    Ok(PipelineReport { decisions, kept_ids, weights: fit.weights, pre_rmse: fit.pre_rmse, effect, curves })
}

/// `control,min_mae,gap,theta_min,theta_gap,converged,keep`
pub fn write_summary_csv<W: Write>(decisions: &[ScreeningDecision], mut out: W) -> Result<()> {
    let io = |e| Error::Io { context: "writing screening summary".into(), source: e };
    writeln!(out, "control,min_mae,gap,theta_min,theta_gap,converged,keep").map_err(io)?;
    for d in decisions {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.control_id,
            fmt_num(d.min_mae),
            fmt_num(d.gap),
            fmt_num(d.theta_min),
            fmt_num(d.theta_gap),
            d.converged,
            d.keep
        )
        .map_err(io)?;
    }
    Ok(())
}

/// `control,L,direction,mae` for every screened control.
pub fn write_curves_csv<W: Write>(curves: &[CcmCurve], mut out: W) -> Result<()> {
    let io = |e| Error::Io { context: "writing curves".into(), source: e };
    writeln!(out, "control,L,direction,mae").map_err(io)?;
    for c in curves {
        for (l, dir, mae) in c.rows() {
            writeln!(out, "{},{l},{},{}", c.target_id, dir.label(), fmt_num(mae)).map_err(io)?;
        }
    }
    Ok(())
}

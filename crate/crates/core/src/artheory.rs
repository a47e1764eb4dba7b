//! AR(1) ground truth for cross-mapping scores.
//!
//! The model is
//!
//! ```text
//! X_t = alpha * X_{t-1} + mu + eps_t
//! Y_t = beta  * X_{t-1} + mu + zeta_t
//! ```
//!
//! with `X_0` fixed. Solving the recursion gives
//! `X_t = alpha^t X_0 + P_t mu + E_t` and
//! `Y_t = beta alpha^{t-1} X_0 + (beta P_{t-1} + 1) mu + beta E_{t-1} + zeta_t`,
//! where `P_t = (1 - alpha^t) / (1 - alpha)` and
//! `E_t = sum_{s<=t} alpha^{t-s} eps_s`. Note the `t-1` on the noise sum in
//! `Y_t`: `Y` only sees `X` through its lag.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::ccm::{ccm_score, CcmConfig};
use crate::error::{Error, Result};
use crate::format::ser_f64;
use crate::panel::TimeSeries;
use crate::rng::{derive_seed, SeededRng};
use crate::stats::{ks_statistic, mean, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ar1Params {
    #[serde(serialize_with = "ser_f64")]
    pub alpha: f64,
    #[serde(serialize_with = "ser_f64")]
    pub beta: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mu: f64,
    #[serde(serialize_with = "ser_f64")]
    pub sigma_x: f64,
    #[serde(serialize_with = "ser_f64")]
    pub sigma_y: f64,
    #[serde(serialize_with = "ser_f64")]
    pub x0: f64,
}

impl Default for Ar1Params {
    fn default() -> Self {
        Self { alpha: 0.9, beta: 1.0, mu: 0.0, sigma_x: 1.0, sigma_y: 1.0, x0: 1.0 }
    }
}

impl Ar1Params {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.mu, self.sigma_x, self.sigma_y, self.x0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("AR(1) parameters must be finite"));
        }
        if self.alpha.abs() >= 1.0 {
            return Err(Error::usage(format!("|alpha| must be below 1, got {}", self.alpha)));
        }
        if self.beta < 0.0 || self.sigma_x < 0.0 || self.sigma_y < 0.0 {
            return Err(Error::usage("beta, sigma_x and sigma_y must be nonnegative"));
        }
        Ok(())
    }

    /// `X_0 - mu / (1 - alpha)`, the initial distance from the stationary mean.
    fn offset(&self) -> f64 {
        self.x0 - self.mu / (1.0 - self.alpha)
    }
}

/// Innovations for `t = 1..=T`; element `s - 1` holds the draw for time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub eps: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl NoisePath {
    pub fn new(eps: Vec<f64>, zeta: Vec<f64>) -> Result<Self> {
        if eps.len() != zeta.len() {
            return Err(Error::usage("eps and zeta must have equal length"));
        }
        if eps.iter().chain(&zeta).any(|v| !v.is_finite()) {
            return Err(Error::usage("noise must be finite"));
        }
        Ok(Self { eps, zeta })
    }

    pub fn zeros(len: usize) -> Self {
        Self { eps: vec![0.0; len], zeta: vec![0.0; len] }
    }

    /// Draws `eps_t` then `zeta_t` for each `t` in turn.
    pub fn draw(p: &Ar1Params, len: usize, rng: &mut SeededRng) -> Self {
        let mut eps = Vec::with_capacity(len);
        let mut zeta = Vec::with_capacity(len);
        for _ in 0..len {
            eps.push(rng.normal(0.0, p.sigma_x));
            zeta.push(rng.normal(0.0, p.sigma_y));
        }
        Self { eps, zeta }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    fn check_time(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::usage(format!("time {t} outside 1..={}", self.len())));
        }
        Ok(())
    }
}

/// Runs the recursion on a given noise path. Both series start at time 1.
pub fn replay(p: &Ar1Params, noise: &NoisePath) -> Result<(TimeSeries, TimeSeries)> {
    p.validate()?;
    if noise.is_empty() {
        return Err(Error::usage("series length must be at least 1"));
    }
    let mut x = Vec::with_capacity(noise.len());
    let mut y = Vec::with_capacity(noise.len());
    let mut prev = p.x0;
    for (e, z) in noise.eps.iter().zip(&noise.zeta) {
        y.push(p.beta * prev + p.mu + z);
        prev = p.alpha * prev + p.mu + e;
        x.push(prev);
    }
    Ok((TimeSeries::with_start(1, x)?, TimeSeries::with_start(1, y)?))
}

pub fn simulate_ar1(p: &Ar1Params, len: usize, seed: u64) -> Result<(TimeSeries, TimeSeries, NoisePath)> {
    p.validate()?;
    let noise = NoisePath::draw(p, len, &mut SeededRng::new(seed));
    let (x, y) = replay(p, &noise)?;
    Ok((x, y, noise))
}

/// `E_t = sum_{s=1}^t alpha^{t-s} eps_s`, summed term by term.
pub fn error_sum(alpha: f64, eps: &[f64], t: usize) -> f64 {
    (1..=t).map(|s| alpha.powi((t - s) as i32) * eps[s - 1]).sum()
}

fn drift_factor(alpha: f64, t: usize) -> f64 {
    (1.0 - alpha.powi(t as i32)) / (1.0 - alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormState {
    pub x: f64,
    pub y: f64,
    pub e: f64,
    pub p: f64,
}

/// Evaluates the solved recursion at time `t >= 1`.
pub fn closed_form_state(p: &Ar1Params, t: usize, noise: &NoisePath) -> Result<ClosedFormState> {
    p.validate()?;
    noise.check_time(t)?;
    let a = p.alpha;
    let e = error_sum(a, &noise.eps, t);
    let e_prev = error_sum(a, &noise.eps, t - 1);
    let pt = drift_factor(a, t);
    let x = a.powi(t as i32) * p.x0 + pt * p.mu + e;
    let y = p.beta * a.powi(t as i32 - 1) * p.x0
        + (p.beta * drift_factor(a, t - 1) + 1.0) * p.mu
        + p.beta * e_prev
        + noise.zeta[t - 1];
    Ok(ClosedFormState { x, y, e, p: pt })
}

/// Neighbors and weights used to predict time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborScheme {
    pub t: usize,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl NeighborScheme {
    pub fn new(t: usize, indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if indices.is_empty() || indices.len() != weights.len() {
            return Err(Error::usage("scheme needs matching, nonempty indices and weights"));
        }
        if indices.contains(&0) || t == 0 {
            return Err(Error::usage("scheme times start at 1"));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::usage("scheme indices must be distinct"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::usage("scheme weights must be nonnegative"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::usage("scheme weights must sum to 1"));
        }
        Ok(Self { t, indices, weights })
    }

    pub fn uniform(t: usize, indices: Vec<usize>) -> Result<Self> {
        let k = indices.len().max(1);
        Self::new(t, indices, vec![1.0 / k as f64; k])
    }

    fn max_time(&self) -> usize {
        self.indices.iter().copied().max().unwrap_or(0).max(self.t)
    }

    fn check(&self, noise: &NoisePath) -> Result<()> {
        if self.max_time() > noise.len() {
            return Err(Error::usage(format!(
                "scheme reaches time {} but the noise path has length {}",
                self.max_time(),
                noise.len()
            )));
        }
        Ok(())
    }
}

/// Closed-form error of predicting `X_t` from neighbors found on `Y`.
pub fn prop1_score_x(p: &Ar1Params, scheme: &NeighborScheme, noise: &NoisePath) -> Result<f64> {
    p.validate()?;
    scheme.check(noise)?;
    let a = p.alpha;
    let t = scheme.t;
    let mut deterministic = a.powi(t as i32);
    let mut stochastic = error_sum(a, &noise.eps, t);
    for (&ti, &w) in scheme.indices.iter().zip(&scheme.weights) {
        deterministic -= w * a.powi(ti as i32);
        stochastic -= w * error_sum(a, &noise.eps, ti);
    }
    Ok((p.offset() * deterministic + stochastic).abs())
}

/// Closed-form error of predicting `Y_t` from neighbors found on `X`.
pub fn prop1_score_y(p: &Ar1Params, scheme: &NeighborScheme, noise: &NoisePath) -> Result<f64> {
    p.validate()?;
    scheme.check(noise)?;
    let a = p.alpha;
    let t = scheme.t;
    let mut deterministic = a.powi(t as i32 - 1);
    let mut lagged = error_sum(a, &noise.eps, t - 1);
    let mut own = noise.zeta[t - 1];
    for (&ti, &w) in scheme.indices.iter().zip(&scheme.weights) {
        deterministic -= w * a.powi(ti as i32 - 1);
        lagged -= w * error_sum(a, &noise.eps, ti - 1);
        own -= w * noise.zeta[ti - 1];
    }
    Ok((p.beta * p.offset() * deterministic + p.beta * lagged + own).abs())
}

/// Parameters of `|N(mean_param, var_param)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldedNormalParams {
    #[serde(serialize_with = "ser_f64")]
    pub mean_param: f64,
    #[serde(serialize_with = "ser_f64")]
    pub var_param: f64,
}

impl FoldedNormalParams {
    pub fn new(mean_param: f64, var_param: f64) -> Result<Self> {
        if !mean_param.is_finite() || !var_param.is_finite() || var_param < 0.0 {
            return Err(Error::usage("folded normal needs a finite mean and nonnegative variance"));
        }
        Ok(Self { mean_param, var_param })
    }

    fn sd(&self) -> f64 {
        self.var_param.sqrt()
    }

    fn normal(&self) -> Result<Normal> {
        if self.var_param == 0.0 {
            return Err(Error::usage("pdf and cdf need a positive variance; the distribution is a point mass"));
        }
        Normal::new(self.mean_param, self.sd()).map_err(|e| Error::numerical(e.to_string()))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        let n = self.normal()?;
        Ok(if x < 0.0 { 0.0 } else { n.pdf(x) + n.pdf(-x) })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        let n = self.normal()?;
        Ok(if x <= 0.0 { 0.0 } else { (n.cdf(x) - n.cdf(-x)).clamp(0.0, 1.0) })
    }

    pub fn mean(&self) -> f64 {
        let (mu, sd) = (self.mean_param, self.sd());
        if sd == 0.0 {
            return mu.abs();
        }
        let phi = Normal::standard();
        sd * (2.0 / std::f64::consts::PI).sqrt() * (-mu * mu / (2.0 * sd * sd)).exp()
            + mu * (1.0 - 2.0 * phi.cdf(-mu / sd))
    }
}

pub fn theorem1_params_x(p: &Ar1Params, t: usize) -> Result<FoldedNormalParams> {
    p.validate()?;
    let a = p.alpha;
    let var = (2.0 - a.powi(2 * t as i32)) / (1.0 - a * a) * p.sigma_x * p.sigma_x;
    FoldedNormalParams::new(p.offset() * a.powi(t as i32), var)
}

pub fn theorem1_params_y(p: &Ar1Params, t: usize) -> Result<FoldedNormalParams> {
    p.validate()?;
    let a = p.alpha;
    let var = (2.0 - a.powi(2 * t as i32)) / (1.0 - a * a) * p.beta * p.beta * p.sigma_x * p.sigma_x
        + 2.0 * p.sigma_y * p.sigma_y;
    FoldedNormalParams::new(p.beta * p.offset() * a.powi(t as i32 - 1), var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoryDirection {
    /// `X_t` predicted from neighbors on `Y`.
    X,
    /// `Y_t` predicted from neighbors on `X`.
    Y,
}

impl std::str::FromStr for TheoryDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Self::X),
            "y" | "Y" => Ok(Self::Y),
            other => Err(Error::usage(format!("unknown direction {other:?}"))),
        }
    }
}

/// Deterministic neighbor placement far from `t` and from each other, with
/// uniform weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SchemeRule {
    pub index_floor: usize,
    pub gap_floor: usize,
    pub n_neighbors: usize,
    /// Last admissible time index.
    pub horizon: usize,
}

impl Default for SchemeRule {
    fn default() -> Self {
        Self { index_floor: 500, gap_floor: 200, n_neighbors: 5, horizon: 2000 }
    }
}

impl SchemeRule {
    pub fn scheme(&self, t: usize) -> Result<NeighborScheme> {
        if self.n_neighbors == 0 || self.gap_floor == 0 {
            return Err(Error::usage("scheme rule needs at least one neighbor and a positive gap"));
        }
        if t == 0 || t > self.horizon {
            return Err(Error::usage(format!("target time {t} outside 1..={}", self.horizon)));
        }
        let first = self.index_floor.max(t + self.gap_floor).max(1);
        let last = first + (self.n_neighbors - 1) * self.gap_floor;
        if last > self.horizon {
            return Err(Error::usage(format!("scheme needs time {last}, beyond the horizon {}", self.horizon)));
        }
        let indices = (0..self.n_neighbors).map(|i| first + i * self.gap_floor).collect();
        NeighborScheme::uniform(t, indices)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryValidation {
    pub params: Ar1Params,
    pub direction: TheoryDirection,
    pub t: usize,
    pub n: usize,
    pub folded_normal: FoldedNormalParams,
    #[serde(serialize_with = "ser_f64")]
    pub ks_stat: f64,
    #[serde(serialize_with = "ser_f64")]
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

/// Default KS tolerance for [`validate_theorem1`].
pub const DEFAULT_KS_TOLERANCE: f64 = 0.03;

/// Samples closed-form scores over independent noise paths and measures
/// their KS distance to the limiting folded normal.
pub fn validate_theorem1(
    p: &Ar1Params,
    t: usize,
    n_samples: usize,
    seed: u64,
    rule: &SchemeRule,
    direction: TheoryDirection,
    tolerance: f64,
) -> Result<TheoryValidation> {
    p.validate()?;
    if n_samples == 0 {
        return Err(Error::usage("need at least one sample"));
    }
    let scheme = rule.scheme(t)?;
    let fnp = match direction {
        TheoryDirection::X => theorem1_params_x(p, t)?,
        TheoryDirection::Y => theorem1_params_y(p, t)?,
    };
    let len = scheme.max_time();
    let samples: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let noise = NoisePath::draw(p, len, &mut SeededRng::new(derive_seed(seed, &[i as u64])));
            match direction {
                TheoryDirection::X => prop1_score_x(p, &scheme, &noise),
                TheoryDirection::Y => prop1_score_y(p, &scheme, &noise),
            }
        })
        .collect::<Result<_>>()?;
    let ks_stat = if fnp.var_param > 0.0 {
        ks_statistic(&samples, |x| fnp.cdf(x).unwrap_or(0.0))
    } else {
        let point = fnp.mean_param.abs();
        ks_statistic(&samples, |x| if x >= point { 1.0 } else { 0.0 })
    };
    Ok(TheoryValidation {
        params: *p,
        direction,
        t,
        n: n_samples,
        folded_normal: fnp,
        ks_stat,
        tolerance,
        pass: ks_stat < tolerance,
        samples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionStudy {
    pub runs: usize,
    pub series_len: usize,
    pub library_size: usize,
    /// Mean of `CCM(X | Y)`: `X` recovered from the manifold of `Y`.
    #[serde(serialize_with = "ser_f64")]
    pub mean_x_given_y: f64,
    /// Mean of `CCM(Y | X)`.
    #[serde(serialize_with = "ser_f64")]
    pub mean_y_given_x: f64,
    /// Standard error of the mean paired difference.
    #[serde(serialize_with = "ser_f64")]
    pub se_difference: f64,
    #[serde(skip)]
    pub x_given_y: Vec<f64>,
    #[serde(skip)]
    pub y_given_x: Vec<f64>,
}

impl DirectionStudy {
    /// `mean_y_given_x - mean_x_given_y` in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.mean_y_given_x - self.mean_x_given_y) / self.se_difference
    }
}

/// Simulates `runs` systems of length `series_len` and cross-maps each pair
/// at the largest library size of `cfg`.
pub fn direction_study(
    p: &Ar1Params,
    runs: usize,
    series_len: usize,
    cfg: &CcmConfig,
    seed: u64,
) -> Result<DirectionStudy> {
    p.validate()?;
    if runs == 0 {
        return Err(Error::usage("need at least one run"));
    }
    let l = *cfg.resolve_library_sizes(series_len)?.last().expect("grid is nonempty");
    let pairs: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let (x, y, _) = simulate_ar1(p, series_len, derive_seed(seed, &[r as u64]))?;
            let xy = ccm_score(y.values(), x.values(), cfg, l)?;
            let yx = ccm_score(x.values(), y.values(), cfg, l)?;
            Ok((xy, yx))
        })
        .collect::<Result<_>>()?;
    let (x_given_y, y_given_x): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let diffs: Vec<f64> = y_given_x.iter().zip(&x_given_y).map(|(a, b)| a - b).collect();
    let se_difference = if runs > 1 { sample_sd(&diffs) / (runs as f64).sqrt() } else { f64::NAN };
    Ok(DirectionStudy {
        runs,
        series_len,
        library_size: l,
        mean_x_given_y: mean(&x_given_y),
        mean_y_given_x: mean(&y_given_x),
        se_difference,
        x_given_y,
        y_given_x,
    })
}

//! Synthetic control on pre-period outcomes under simplex constraints.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::{round_sig, ser_f64, ser_vec_f64};
use crate::panel::{PanelData, PanelWindow, TimeSeries};

/// Weights below this are reported as zero.
pub const REPORT_ZERO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    control_ids: Vec<String>,
    w: Vec<f64>,
}

impl SimplexWeights {
    pub fn new(control_ids: Vec<String>, w: Vec<f64>) -> Result<Self> {
        if control_ids.len() != w.len() || w.is_empty() {
            return Err(Error::usage("weights and control ids must be nonempty and of equal length"));
        }
        if w.iter().any(|x| !x.is_finite() || *x < -1e-12) {
            return Err(Error::usage("weights must be finite and nonnegative"));
        }
        let w: Vec<f64> = w.into_iter().map(|x| x.max(0.0)).collect();
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::usage(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { control_ids, w })
    }

    pub fn control_ids(&self) -> &[String] {
        &self.control_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.control_ids.iter().position(|c| c == id).map(|i| self.w[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.control_ids.iter().map(String::as_str).zip(self.w.iter().copied())
    }

    /// Id-sorted map with weights under [`REPORT_ZERO`] shown as 0.
    pub fn report_map(&self) -> BTreeMap<String, f64> {
        self.iter().map(|(id, w)| (id.to_string(), if w < REPORT_ZERO { 0.0 } else { round_sig(w) })).collect()
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "projection of an empty vector");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    for x in w.iter_mut() {
        if *x < 1e-12 {
            *x = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Projected gradient with Armijo backtracking.
#[derive(Debug, Clone, Copy)]
pub struct ScmSolver {
    pub max_iter: usize,
    /// Stop once one accepted step improves the (scaled) objective by less
    /// than this.
    pub tol: f64,
    pub armijo: f64,
}

impl Default for ScmSolver {
    fn default() -> Self {
        Self { max_iter: 100_000, tol: 1e-12, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct ScmFit {
    pub weights: SimplexWeights,
    pub pre_rmse: f64,
    pub iterations: usize,
    /// Scaled objective after each accepted step, starting at the uniform
    /// start point.
    pub objective_path: Vec<f64>,
}

struct Problem<'a> {
    y: Vec<f64>,
    cols: Vec<&'a [f64]>,
    scale: f64,
}

impl Problem<'_> {
    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.y.clone();
        for (col, &wj) in self.cols.iter().zip(w) {
            if wj != 0.0 {
                for (ri, &c) in r.iter_mut().zip(col.iter()) {
                    *ri -= wj * c / self.scale;
                }
            }
        }
        r
    }

    fn objective(&self, w: &[f64]) -> f64 {
        self.residual(w).iter().map(|r| r * r).sum()
    }

    /// Least squares on the face spanned by `support` with only the
    /// sum-to-one constraint, from the KKT system. The pseudo-inverse gives
    /// the minimum-norm solution when columns are collinear.
    fn face_solve(&self, support: &[usize]) -> Option<Vec<f64>> {
        let k = support.len();
        let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut b = DVector::<f64>::zeros(k + 1);
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        for (p, &i) in support.iter().enumerate() {
            for (q, &j) in support.iter().enumerate().skip(p) {
                let v = 2.0 * dot(self.cols[i], self.cols[j]) / (self.scale * self.scale);
                a[(p, q)] = v;
                a[(q, p)] = v;
            }
            a[(p, k)] = 1.0;
            a[(k, p)] = 1.0;
            b[p] = 2.0 * dot(self.cols[i], &self.y) / self.scale;
        }
        b[k] = 1.0;
        let svd = a.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let x = svd.solve(&b, eps).ok()?;
        let w: Vec<f64> = x.iter().take(k).copied().collect();
        w.iter().all(|v| v.is_finite()).then_some(w)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let r = self.residual(w);
        self.cols.iter().map(|col| -2.0 * col.iter().zip(&r).map(|(c, ri)| c / self.scale * ri).sum::<f64>()).collect()
    }
}

impl ScmSolver {
    /// Minimizes `sum_t (y_t - sum_j w_j x_jt)^2` over the simplex, starting
    /// from uniform weights. The problem is divided through by the RMS of
    /// all inputs first, so the weights do not depend on the outcome scale.
    pub fn fit(&self, treated: &[f64], controls: &[(&str, &[f64])]) -> Result<ScmFit> {
        if controls.is_empty() {
            return Err(Error::usage("synthetic control needs at least one control"));
        }
        if treated.is_empty() || controls.iter().any(|(_, c)| c.len() != treated.len()) {
            return Err(Error::data("treated and control pre-periods must be nonempty and aligned"));
        }
        let n_entries = (treated.len() * (controls.len() + 1)) as f64;
        let ss: f64 = treated.iter().chain(controls.iter().flat_map(|(_, c)| c.iter())).map(|v| v * v).sum();
        let scale = if ss > 0.0 { (ss / n_entries).sqrt() } else { 1.0 };
        let problem = Problem {
            y: treated.iter().map(|v| v / scale).collect(),
            cols: controls.iter().map(|(_, c)| *c).collect(),
            scale,
        };
        let ids: Vec<String> = controls.iter().map(|(id, _)| id.to_string()).collect();

        let j = controls.len();
        let mut state = SolverState { w: vec![1.0 / j as f64; j], f: 0.0, path: Vec::new(), iterations: 0 };
        state.f = problem.objective(&state.w);
        state.path.push(state.f);
        let mut converged = false;
        for _ in 0..8 {
            converged = self.descend(&problem, &mut state);
            if !converged || !self.polish(&problem, &mut state) {
                break;
            }
        }
        let SolverState { w, f, path, iterations } = state;
        let weights = SimplexWeights::new(ids, w)?;
        if !converged {
            return Err(Error::NotConverged { best: Box::new(weights), objective: f, iterations });
        }
        let synth = combine(&weights, &problem.cols);
        let pre_rmse =
            (treated.iter().zip(&synth).map(|(y, s)| (y - s).powi(2)).sum::<f64>() / treated.len() as f64).sqrt();
        Ok(ScmFit { weights, pre_rmse, iterations, objective_path: path })
    }
}

struct SolverState {
    w: Vec<f64>,
    f: f64,
    path: Vec<f64>,
    iterations: usize,
}

impl ScmSolver {
    /// Projected-gradient steps until the improvement drops under `tol`.
    /// Returns false when the iteration budget runs out first.
    fn descend(&self, problem: &Problem<'_>, st: &mut SolverState) -> bool {
        // Step bound from the Frobenius norm of the scaled design.
        let fro: f64 = problem.cols.iter().flat_map(|c| c.iter()).map(|v| (v / problem.scale).powi(2)).sum();
        let mut step = 1.0 / (2.0 * fro.max(f64::MIN_POSITIVE));
        while st.iterations < self.max_iter {
            st.iterations += 1;
            let g = problem.gradient(&st.w);
            let mut accepted = None;
            let mut s = step * 2.0;
            for _ in 0..80 {
                let moved: Vec<f64> = st.w.iter().zip(&g).map(|(wi, gi)| wi - s * gi).collect();
                let cand = simplex_project(&moved);
                let decrease: f64 = g.iter().zip(cand.iter().zip(&st.w)).map(|(gi, (c, wi))| gi * (c - wi)).sum();
                let fc = problem.objective(&cand);
                if fc <= st.f + self.armijo * decrease && fc <= st.f {
                    accepted = Some((cand, fc));
                    break;
                }
                s *= 0.5;
            }
            let Some((cand, fc)) = accepted else {
                return true;
            };
            step = s;
            let improvement = st.f - fc;
            st.w = cand;
            st.f = fc;
            st.path.push(fc);
            if improvement < self.tol {
                return true;
            }
        }
        false
    }

    /// Active-set refinement on the current support: move toward the exact
    /// face optimum, dropping coordinates that hit zero on the way. Returns
    /// true when the objective improved by more than `tol`.
    fn polish(&self, problem: &Problem<'_>, st: &mut SolverState) -> bool {
        let start = st.f;
        let mut w = st.w.clone();
        for _ in 0..w.len() {
            let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
            let Some(v) = problem.face_solve(&support) else { break };
            let mut theta = 1.0_f64;
            for (p, &i) in support.iter().enumerate() {
                if v[p] < 0.0 {
                    theta = theta.min(w[i] / (w[i] - v[p]));
                }
            }
            let mut next = vec![0.0; w.len()];
            for (p, &i) in support.iter().enumerate() {
                next[i] = w[i] + theta * (v[p] - w[i]);
            }
            let next = simplex_project(&next);
            let fc = problem.objective(&next);
            if fc > st.f {
                break;
            }
            w = next;
            st.w = w.clone();
            st.f = fc;
            st.path.push(fc);
            if theta >= 1.0 {
                break;
            }
        }
        start - st.f > self.tol
    }
}

fn combine(w: &SimplexWeights, cols: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; cols[0].len()];
    for (col, &wj) in cols.iter().zip(w.values()) {
        if wj != 0.0 {
            for (o, c) in out.iter_mut().zip(col.iter()) {
                *o += wj * c;
            }
        }
    }
    out
}

/// Fits weights on the pre-period window with the default solver.
pub fn fit_weights(pre: &PanelWindow<'_>) -> Result<ScmFit> {
    let controls: Vec<(&str, &[f64])> = pre.controls().collect();
    ScmSolver::default().fit(pre.treated(), &controls)
}

/// `sum_j w_j Y_jt` over the whole grid.
pub fn predict_counterfactual(w: &SimplexWeights, panel: &PanelData) -> Result<TimeSeries> {
    let mut cols = Vec::with_capacity(w.control_ids().len());
    for id in w.control_ids() {
        if id == panel.treated_id() {
            return Err(Error::usage(format!("{id:?} is the treated unit, not a control")));
        }
        let s =
            panel.series(id).ok_or_else(|| Error::usage(format!("weight for {id:?}, which is not in the panel")))?;
        cols.push(s.values());
    }
    TimeSeries::new(combine(w, &cols))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectPath {
    /// Post-period grid indices.
    pub times: Vec<usize>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub tau_hat: Vec<f64>,
    #[serde(serialize_with = "ser_f64")]
    pub ate: f64,
}

/// Per-period effects `Y_1t - sum_j w_j Y_jt` for `t > t0` and their mean.
pub fn effect_path(panel: &PanelData, w: &SimplexWeights) -> Result<EffectPath> {
    let synth = predict_counterfactual(w, panel)?;
    let times: Vec<usize> = panel.post().range().collect();
    let tau_hat: Vec<f64> = times.iter().map(|&t| panel.treated().values()[t] - synth.values()[t]).collect();
    let ate = tau_hat.iter().sum::<f64>() / tau_hat.len() as f64;
    Ok(EffectPath { times, tau_hat, ate })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScmReport {
    pub weights: BTreeMap<String, f64>,
    #[serde(serialize_with = "ser_f64")]
    pub pre_rmse: f64,
    #[serde(serialize_with = "ser_f64")]
    pub ate: f64,
    pub effect_path: EffectPath,
}

impl ScmReport {
    pub fn new(fit: &ScmFit, effect: EffectPath) -> Self {
        Self { weights: fit.weights.report_map(), pre_rmse: fit.pre_rmse, ate: effect.ate, effect_path: effect }
    }
}

/// Plain SCM on the full donor pool: fit on the pre-period, estimate effects.
pub fn run_scm(panel: &PanelData) -> Result<(ScmFit, EffectPath)> {
    let fit = fit_weights(&panel.pre())?;
    let effect = effect_path(panel, &fit.weights)?;
    Ok((fit, effect))
}

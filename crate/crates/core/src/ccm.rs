//! Convergent cross mapping.
//!
//! For a pair of series the *source* is delay-embedded, each prediction
//! point's `d+1` nearest library neighbors are found on that reconstruction,
//! and the *target* at the prediction time is estimated as the
//! exponentially weighted average of the target at the neighbor times. The
//! score for `(source, target, L)` is the mean absolute error of those
//! estimates, so it measures how well the source's manifold recovers the
//! target (`CCM(target | source)`, lower is better).

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{delay_embed, euclidean, DelayEmbedding, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::format::{fmt_num, ser_f64, ser_vec_f64};
use crate::panel::zscore_values;

/// Relative slack used by [`convergence_diagnostic`] unless overridden.
pub const DEFAULT_CONVERGENCE_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Library is the first `L` time points; every later point is predicted.
    Holdout,
    /// Every library point is predicted from the rest of the library, with
    /// a Theiler window excluded around it.
    LeaveOneOut,
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "holdout" => Ok(Self::Holdout),
            "leave_one_out" | "loo" => Ok(Self::LeaveOneOut),
            other => Err(Error::usage(format!("unknown prediction mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcmConfig {
    pub embedding: EmbeddingConfig,
    /// Ascending library sizes; `None` selects the default grid for the
    /// series length at hand.
    pub library_sizes: Option<Vec<usize>>,
    pub mode: PredictionMode,
    /// Exclusion radius for leave-one-out; `None` means `(d-1)*tau`.
    pub theiler_window: Option<usize>,
    /// Z-score both series before embedding.
    pub normalize: bool,
}

impl Default for CcmConfig {
    fn default() -> Self {
        Self {
            embedding: EmbeddingConfig::default(),
            library_sizes: None,
            mode: PredictionMode::Holdout,
            theiler_window: None,
            normalize: true,
        }
    }
}

impl CcmConfig {
    pub fn theiler(&self) -> usize {
        self.theiler_window.unwrap_or_else(|| self.embedding.first_base_time())
    }

    /// Smallest library size that always leaves `d+1` eligible neighbors.
    pub fn min_library_size(&self) -> usize {
        let base = self.embedding.first_base_time() + self.embedding.neighbors();
        match self.mode {
            PredictionMode::Holdout => base,
            PredictionMode::LeaveOneOut => base + 2 * self.theiler() + 1,
        }
    }

    fn max_library_size(&self, len: usize) -> usize {
        match self.mode {
            PredictionMode::Holdout => len.saturating_sub(1),
            PredictionMode::LeaveOneOut => len,
        }
    }

    fn check_library_size(&self, len: usize, l: usize) -> Result<()> {
        if self.mode == PredictionMode::Holdout && l >= len {
            return Err(Error::usage(format!(
                "library size {l} leaves no prediction points in a series of length {len}"
            )));
        }
        if l < self.min_library_size() || l > self.max_library_size(len) {
            return Err(Error::usage(format!(
                "library size {l} outside the feasible range {}..={} for series length {len}",
                self.min_library_size(),
                self.max_library_size(len)
            )));
        }
        Ok(())
    }

    /// Resolves the library grid for a series of length `len`.
    ///
    /// The default grid has 8 evenly spaced sizes from the minimum feasible
    /// size to `T - max(5, T/10)` (holdout) or `T` (leave-one-out).
    pub fn resolve_library_sizes(&self, len: usize) -> Result<Vec<usize>> {
        self.embedding.validate()?;
        if let Some(sizes) = &self.library_sizes {
            if sizes.is_empty() {
                return Err(Error::usage("library size grid is empty"));
            }
            if sizes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::usage("library sizes must be strictly ascending"));
            }
            for &l in sizes {
                self.check_library_size(len, l)?;
            }
            return Ok(sizes.clone());
        }
        let lo = self.min_library_size();
        let hi = match self.mode {
            PredictionMode::Holdout => len.saturating_sub(5.max(len / 10)),
            PredictionMode::LeaveOneOut => len,
        };
        if hi < lo {
            return Err(Error::data(format!(
                "series of length {len} is too short for cross mapping with d={}, tau={}",
                self.embedding.dim, self.embedding.delay
            )));
        }
        let mut grid: Vec<usize> =
            (0..8).map(|i| lo + (((hi - lo) as f64) * i as f64 / 7.0).round() as usize).collect();
        grid.dedup();
        Ok(grid)
    }
}

/// The `d+1` nearest library points to one target vector, closest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub target_time: usize,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

/// Exact nearest-neighbor search over the library base times.
///
/// Ties in distance go to the smaller time index. With `exclusion = Some(w)`
/// every library point within `w` of `t` (including `t`) is ineligible.
pub fn find_neighbors(
    e: &DelayEmbedding,
    t: usize,
    library: Range<usize>,
    exclusion: Option<usize>,
) -> Result<NeighborSet> {
    let k = e.config().neighbors();
    let query = e.vector(t).ok_or_else(|| Error::usage(format!("base time {t} not in embedding")))?;
    let lo = library.start.max(e.first_base_time());
    let hi = library.end.min(e.last_base_time() + 1);

    // (squared distance, time), kept sorted; at most k entries.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for u in lo..hi {
        if let Some(w) = exclusion {
            if u.abs_diff(t) <= w {
                continue;
            }
        }
        let row = e.row(u - e.first_base_time());
        let d2: f64 = query.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == k && d2 >= best[k - 1].0 {
            // equal distance loses to the earlier (smaller) time already held
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d2);
        best.insert(pos, (d2, u));
        best.truncate(k);
    }
    if best.len() < k {
        return Err(Error::data(format!(
            "only {} eligible library points for {k} neighbors at base time {t}",
            best.len()
        )));
    }
    let indices = best.iter().map(|&(_, u)| u).collect();
    let distances = best.iter().map(|&(_, u)| euclidean(query, e.row(u - e.first_base_time()))).collect();
    Ok(NeighborSet { target_time: t, indices, distances })
}

/// `w_i = exp(-d_i/d_1) / sum_j exp(-d_j/d_1)`; when the nearest distance is
/// zero the weight is spread uniformly over the exact matches.
pub fn cross_map_weights(n: &NeighborSet) -> Vec<f64> {
    let d1 = n.distances[0];
    if d1 == 0.0 {
        let zeros = n.distances.iter().filter(|d| **d == 0.0).count() as f64;
        return n.distances.iter().map(|d| if *d == 0.0 { 1.0 / zeros } else { 0.0 }).collect();
    }
    let raw: Vec<f64> = n.distances.iter().map(|d| (-d / d1).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Weighted average of `target` at the neighbor times.
pub fn cross_map_estimate(n: &NeighborSet, weights: &[f64], target: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (&i, &w) in n.indices.iter().zip(weights) {
        let v = target
            .get(i)
            .ok_or_else(|| Error::Internal(format!("neighbor time {i} outside target of length {}", target.len())))?;
        acc += w * v;
    }
    Ok(acc)
}

fn prepare(source: &[f64], target: &[f64], cfg: &CcmConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if source.len() != target.len() {
        return Err(Error::usage(format!("series lengths differ ({} vs {})", source.len(), target.len())));
    }
    if cfg.normalize {
        Ok((zscore_values(source)?, zscore_values(target)?))
    } else {
        Ok((source.to_vec(), target.to_vec()))
    }
}

/// Per-point absolute cross-map errors at library size `l`.
pub fn cross_map_residuals(e: &DelayEmbedding, target: &[f64], cfg: &CcmConfig, l: usize) -> Result<Vec<f64>> {
    cfg.check_library_size(target.len(), l)?;
    let library = e.first_base_time()..l;
    let (points, exclusion) = match cfg.mode {
        PredictionMode::Holdout => (l..e.last_base_time() + 1, None),
        PredictionMode::LeaveOneOut => (library.clone(), Some(cfg.theiler())),
    };
    if points.is_empty() {
        return Err(Error::usage(format!("library size {l} leaves no prediction points")));
    }
    points
        .map(|t| {
            let n = find_neighbors(e, t, library.clone(), exclusion)?;
            let w = cross_map_weights(&n);
            Ok((target[t] - cross_map_estimate(&n, &w, target)?).abs())
        })
        .collect()
}

fn score_embedded(e: &DelayEmbedding, target: &[f64], cfg: &CcmConfig, l: usize) -> Result<f64> {
    let r = cross_map_residuals(e, target, cfg, l)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// MAE of cross-mapping `target` from the delay embedding of `source` at
/// library size `l`.
pub fn ccm_score(source: &[f64], target: &[f64], cfg: &CcmConfig, l: usize) -> Result<f64> {
    let (src, tgt) = prepare(source, target, cfg)?;
    let e = delay_embed(&src, cfg.embedding)?;
    score_embedded(&e, &tgt, cfg, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Source manifold predicts the target.
    SourceToTarget,
    /// Target manifold predicts the source.
    TargetToSource,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::SourceToTarget => "src->tgt",
            Direction::TargetToSource => "tgt->src",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcmCurve {
    pub source_id: String,
    pub target_id: String,
    pub library_sizes: Vec<usize>,
    /// `CCM(target | source)` per library size.
    #[serde(serialize_with = "ser_vec_f64")]
    pub source_to_target: Vec<f64>,
    /// `CCM(source | target)` per library size.
    #[serde(serialize_with = "ser_vec_f64")]
    pub target_to_source: Vec<f64>,
}

impl CcmCurve {
    pub fn rows(&self) -> impl Iterator<Item = (usize, Direction, f64)> + '_ {
        self.library_sizes.iter().enumerate().flat_map(move |(i, &l)| {
            [
                (l, Direction::SourceToTarget, self.source_to_target[i]),
                (l, Direction::TargetToSource, self.target_to_source[i]),
            ]
        })
    }

    /// `L,direction,mae`, two rows per library size.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::Io { context: "writing curve".into(), source: e };
        writeln!(out, "L,direction,mae").map_err(io)?;
        for (l, dir, mae) in self.rows() {
            writeln!(out, "{l},{},{}", dir.label(), fmt_num(mae)).map_err(io)?;
        }
        Ok(())
    }
}

/// Scores both directions over the whole library grid. Cells are evaluated
/// in parallel and collected by position, so the output does not depend on
/// scheduling.
pub fn ccm_curve(
    source_id: &str,
    source: &[f64],
    target_id: &str,
    target: &[f64],
    cfg: &CcmConfig,
) -> Result<CcmCurve> {
    let (src, tgt) = prepare(source, target, cfg)?;
    let sizes = cfg.resolve_library_sizes(src.len())?;
    let e_src = delay_embed(&src, cfg.embedding)?;
    let e_tgt = delay_embed(&tgt, cfg.embedding)?;
    let cells: Vec<f64> = (0..2 * sizes.len())
        .into_par_iter()
        .map(|c| {
            let l = sizes[c / 2];
            if c % 2 == 0 {
                score_embedded(&e_src, &tgt, cfg, l)
            } else {
                score_embedded(&e_tgt, &src, cfg, l)
            }
        })
        .collect::<Result<_>>()?;
    Ok(CcmCurve {
        source_id: source_id.to_string(),
        target_id: target_id.to_string(),
        library_sizes: sizes,
        source_to_target: cells.iter().step_by(2).copied().collect(),
        target_to_source: cells.iter().skip(1).step_by(2).copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceDiagnostic {
    #[serde(serialize_with = "ser_f64")]
    pub min_mae: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gap: f64,
    pub converged: bool,
}

/// Reads the two directions at the largest library size; a direction has
/// converged when its final score is at most `(1 + rel_slack)` times its
/// score at the smallest library size.
pub fn convergence_diagnostic(c: &CcmCurve, rel_slack: f64) -> ConvergenceDiagnostic {
    let a = &c.source_to_target;
    let b = &c.target_to_source;
    let (a_end, b_end) = (*a.last().expect("empty curve"), *b.last().expect("empty curve"));
    let settles = |first: f64, last: f64| last <= first + rel_slack * first;
    ConvergenceDiagnostic {
        min_mae: a_end.min(b_end),
        gap: (a_end - b_end).abs(),
        converged: settles(a[0], a_end) && settles(b[0], b_end),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn raw_cfg(d: usize, sizes: Option<Vec<usize>>) -> CcmConfig {
        CcmConfig {
            embedding: EmbeddingConfig::new(d, 1).unwrap(),
            library_sizes: sizes,
            normalize: false,
            ..CcmConfig::default()
        }
    }

    fn set(distances: &[f64]) -> NeighborSet {
        NeighborSet { target_time: 0, indices: (0..distances.len()).collect(), distances: distances.to_vec() }
    }

    fn brute_neighbors(e: &DelayEmbedding, t: usize, lib: Range<usize>, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = lib.map(|u| (e.distance(t, u).unwrap(), u)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn ramp_neighbors_are_library_tail() {
        let s: Vec<f64> = (0..30).map(|i| 0.5 * i as f64).collect();
        let e = delay_embed(&s, EmbeddingConfig::new(3, 1).unwrap()).unwrap();
        let n = find_neighbors(&e, 20, 2..20, None).unwrap();
        let oracle = brute_neighbors(&e, 20, 2..20, 4);
        assert_eq!(n.indices, oracle);
        assert_eq!(n.indices, vec![19, 18, 17, 16]);
        assert!(n.distances.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn matches_brute_force_on_noise() {
        let mut rng = SeededRng::new(21);
        let s: Vec<f64> = (0..120).map(|_| rng.standard_normal()).collect();
        let e = delay_embed(&s, EmbeddingConfig::new(4, 2).unwrap()).unwrap();
        for t in 80..120 {
            let n = find_neighbors(&e, t, 0..80, None).unwrap();
            assert_eq!(n.indices, brute_neighbors(&e, t, 6..80, 5));
        }
    }

    #[test]
    fn ties_go_to_earlier_time() {
        // vectors at times 1 and 3 are both at distance 1 from time 2
        let s = [0.0, 1.0, 2.0, 3.0, 10.0];
        let e = delay_embed(&s, EmbeddingConfig::new(1, 1).unwrap()).unwrap();
        let n = find_neighbors(&e, 2, 0..5, Some(0)).unwrap();
        assert_eq!(&n.indices[..2], &[1, 3]);
        assert_eq!(n.distances[0], n.distances[1]);
    }

    #[test]
    fn exclusion_window_respected() {
        let mut rng = SeededRng::new(3);
        let s: Vec<f64> = (0..60).map(|_| rng.standard_normal()).collect();
        let e = delay_embed(&s, EmbeddingConfig::new(3, 1).unwrap()).unwrap();
        for t in 2..60 {
            let n = find_neighbors(&e, t, 0..60, Some(4)).unwrap();
            assert!(n.indices.iter().all(|&u| u.abs_diff(t) > 4));
        }
        assert!(find_neighbors(&e, 5, 2..9, Some(4)).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = cross_map_weights(&set(&[1.0, 2.0, 3.0]));
        let raw = [(-1.0f64).exp(), (-2.0f64).exp(), (-3.0f64).exp()];
        let z: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(raw) {
            assert!((a - b / z).abs() < 1e-15);
        }
        assert!((w[0] - 0.6652).abs() < 5e-5 && (w[1] - 0.2447).abs() < 5e-5 && (w[2] - 0.0900).abs() < 5e-5);

        let u = cross_map_weights(&set(&[2.0; 5]));
        assert!(u.iter().all(|x| (x - 0.2).abs() < 1e-15));
        assert_eq!(cross_map_weights(&set(&[0.0, 0.0, 5.0])), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn estimate_examples() {
        let n = NeighborSet { target_time: 0, indices: vec![0, 1], distances: vec![1.0, 1.0] };
        assert_eq!(cross_map_estimate(&n, &[0.5, 0.5], &[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(cross_map_estimate(&n, &[1.0, 0.0], &[2.0, 4.0]).unwrap(), 2.0);
        let far = NeighborSet { target_time: 0, indices: vec![7], distances: vec![1.0] };
        assert!(matches!(cross_map_estimate(&far, &[1.0], &[1.0]), Err(Error::Internal(_))));
    }

    #[test]
    fn estimate_is_convex_combination() {
        let mut rng = SeededRng::new(9);
        for _ in 0..1000 {
            let k = rng.uniform_int(1, 6);
            let target: Vec<f64> = (0..20).map(|_| rng.normal(0.0, 10.0)).collect();
            let mut d: Vec<f64> = (0..k).map(|_| rng.uniform() * 3.0).collect();
            d.sort_by(f64::total_cmp);
            let n =
                NeighborSet { target_time: 0, indices: (0..k).map(|_| rng.uniform_int(0, 19)).collect(), distances: d };
            let w = cross_map_weights(&n);
            let est = cross_map_estimate(&n, &w, &target).unwrap();
            let sel: Vec<f64> = n.indices.iter().map(|&i| target[i]).collect();
            let lo = sel.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = sel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
        }
    }

    #[test]
    fn constant_target_scores_zero() {
        let mut rng = SeededRng::new(1);
        let src: Vec<f64> = (0..50).map(|_| rng.standard_normal()).collect();
        let tgt = vec![7.5; 50];
        let cfg = raw_cfg(3, None);
        assert!(ccm_score(&src, &tgt, &cfg, 30).unwrap().abs() < 1e-12);
    }

    #[test]
    fn holdout_needs_prediction_points() {
        let s: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let cfg = raw_cfg(2, None);
        assert!(matches!(ccm_score(&s, &s, &cfg, 20), Err(Error::Usage(_))));
        assert!(matches!(ccm_score(&s, &s, &cfg, 2), Err(Error::Usage(_))));
        assert!(ccm_score(&s, &s[..19], &cfg, 10).is_err());
    }

    #[test]
    fn white_noise_level_matches_weight_oracle() {
        // For independent unit white noise the expected absolute error at a
        // prediction point with weights w is sqrt(2/pi) * sqrt(1 + sum w^2).
        let mut rng = SeededRng::new(2024);
        let x: Vec<f64> = (0..500).map(|_| rng.standard_normal()).collect();
        let y: Vec<f64> = (0..500).map(|_| rng.standard_normal()).collect();
        let cfg = raw_cfg(4, None);
        let l = 250;
        let score = ccm_score(&x, &y, &cfg, l).unwrap();
        let e = delay_embed(&x, cfg.embedding).unwrap();
        let expected: f64 = (l..500)
            .map(|t| {
                let n = find_neighbors(&e, t, 3..l, None).unwrap();
                let w = cross_map_weights(&n);
                (2.0 / std::f64::consts::PI).sqrt() * (1.0 + w.iter().map(|v| v * v).sum::<f64>()).sqrt()
            })
            .sum::<f64>()
            / (500 - l) as f64;
        assert!(score > 0.0);
        assert!((score / expected - 1.0).abs() < 0.15, "score {score} vs oracle {expected}");
    }

    fn logistic(n: usize, x0: f64) -> Vec<f64> {
        let mut x = vec![x0; n];
        for t in 1..n {
            x[t] = 3.8 * x[t - 1] * (1.0 - x[t - 1]);
        }
        x
    }

    #[test]
    fn self_map_on_deterministic_system_converges_to_zero() {
        let s = logistic(400, 0.4);
        let cfg = CcmConfig {
            embedding: EmbeddingConfig::new(2, 1).unwrap(),
            mode: PredictionMode::LeaveOneOut,
            ..CcmConfig::default()
        };
        let c = ccm_curve("s", &s, "s", &s, &cfg).unwrap();
        let last = *c.source_to_target.last().unwrap();
        assert!(last < 0.05, "final score {last}");
        assert!(last < c.source_to_target[0]);
    }

    #[test]
    fn curve_shapes_and_csv() {
        let s = logistic(60, 0.3);
        let t: Vec<f64> = s.iter().map(|v| 2.0 * v + 1.0).collect();
        let cfg = raw_cfg(2, Some(vec![20]));
        let c = ccm_curve("a", &s, "b", &t, &cfg).unwrap();
        assert_eq!(c.source_to_target.len(), 1);
        assert_eq!(c.target_to_source.len(), 1);

        let full = ccm_curve("a", &s, "b", &t, &raw_cfg(2, None)).unwrap();
        assert_eq!(full.rows().count(), 2 * full.library_sizes.len());
        let mut out = Vec::new();
        full.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * full.library_sizes.len());
        assert!(text.starts_with("L,direction,mae\n"));
        assert!(text.contains(",src->tgt,") && text.contains(",tgt->src,"));
    }

    #[test]
    fn default_grid() {
        let cfg = CcmConfig::default();
        let g = cfg.resolve_library_sizes(100).unwrap();
        assert_eq!(g.first(), Some(&8));
        assert_eq!(g.last(), Some(&90));
        assert_eq!(g.len(), 8);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let small = cfg.resolve_library_sizes(19).unwrap();
        assert_eq!((small[0], *small.last().unwrap()), (8, 14));
        assert!(cfg.resolve_library_sizes(10).is_err());

        let loo = CcmConfig { mode: PredictionMode::LeaveOneOut, ..CcmConfig::default() };
        let g = loo.resolve_library_sizes(19).unwrap();
        assert_eq!((g[0], *g.last().unwrap()), (15, 19));
    }

    #[test]
    fn explicit_grid_validation() {
        let mut cfg = raw_cfg(4, Some(vec![10, 10]));
        assert!(cfg.resolve_library_sizes(50).is_err());
        cfg.library_sizes = Some(vec![5, 20]);
        assert!(cfg.resolve_library_sizes(50).is_err());
        cfg.library_sizes = Some(vec![10, 50]);
        assert!(cfg.resolve_library_sizes(50).is_err());
        cfg.mode = PredictionMode::LeaveOneOut;
        cfg.library_sizes = Some(vec![20, 50]);
        assert!(cfg.resolve_library_sizes(50).is_ok());
    }

    fn curve(a: &[f64], b: &[f64]) -> CcmCurve {
        CcmCurve {
            source_id: "s".into(),
            target_id: "t".into(),
            library_sizes: (0..a.len()).map(|i| 10 + i).collect(),
            source_to_target: a.to_vec(),
            target_to_source: b.to_vec(),
        }
    }

    #[test]
    fn diagnostic_examples() {
        let d = convergence_diagnostic(&curve(&[0.4, 0.2], &[0.9, 0.5]), 0.05);
        assert!((d.min_mae - 0.2).abs() < 1e-15 && (d.gap - 0.3).abs() < 1e-15 && d.converged);
        let d = convergence_diagnostic(&curve(&[0.4, 0.3], &[0.4, 0.3]), 0.05);
        assert_eq!(d.gap, 0.0);
        let d = convergence_diagnostic(&curve(&[0.4, 0.5], &[0.4, 0.3]), 0.05);
        assert!(!d.converged);
        let d = convergence_diagnostic(&curve(&[0.40, 0.41], &[0.4, 0.3]), 0.05);
        assert!(d.converged);
    }

    #[test]
    fn curve_is_deterministic_across_pools() {
        let mut rng = SeededRng::new(77);
        let a: Vec<f64> = (0..150).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.3 * rng.standard_normal()).collect();
        let cfg = CcmConfig::default();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(6).build().unwrap();
        let c1 = one.install(|| ccm_curve("a", &a, "b", &b, &cfg).unwrap());
        let c2 = many.install(|| ccm_curve("a", &a, "b", &b, &cfg).unwrap());
        let bits = |c: &CcmCurve| -> Vec<u64> {
            c.source_to_target.iter().chain(&c.target_to_source).map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&c1), bits(&c2));
    }

    proptest! {
        #[test]
        fn weights_normalized_and_scale_free(mut d in prop::collection::vec(0.0..10.0f64, 1..8), c in 0.01..100.0f64) {
            d.sort_by(f64::total_cmp);
            let w = cross_map_weights(&set(&d));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let ws = cross_map_weights(&set(&scaled));
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn source_affine_and_target_scale(seed in 0u64..1000, a in 0.1..10.0f64, b in -50.0..50.0f64) {
            let mut rng = SeededRng::new(seed);
            let src: Vec<f64> = (0..80).map(|_| rng.standard_normal()).collect();
            let tgt: Vec<f64> = src.iter().map(|v| v * v + 0.5 * rng.standard_normal()).collect();
            let cfg = raw_cfg(3, None);
            let l = 50;
            let base = ccm_score(&src, &tgt, &cfg, l).unwrap();
            let moved: Vec<f64> = src.iter().map(|v| a * v + b).collect();
            prop_assert!((ccm_score(&moved, &tgt, &cfg, l).unwrap() - base).abs() < 1e-10);
            let tgt_scaled: Vec<f64> = tgt.iter().map(|v| a * v).collect();
            let s = ccm_score(&src, &tgt_scaled, &cfg, l).unwrap();
            prop_assert!((s - a * base).abs() <= 1e-10 * a * base);
        }
    }
}
